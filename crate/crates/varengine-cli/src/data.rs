//! Data plumbing: CSV ingestion, simulation output, and resolution of
//! the data source shared by the backtest, experiment, and train
//! commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use varengine::core::ReturnSeries;
use varengine::garch::{preset, preset_names, simulate, GarchSpec};

use crate::{CliError, CliResult};

/// Parses one numeric column of a comma-separated file with a header
/// row. With `percent`, values are divided by 100. The first column is
/// kept as row labels when it is not the value column itself.
pub fn ingest_csv(path: &Path, column: &str, percent: bool) -> CliResult<ReturnSeries> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Domain(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Domain(format!("{}: file is empty", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let idx = columns.iter().position(|c| *c == column).ok_or_else(|| {
        CliError::Domain(format!(
            "{}: no column named '{column}'; available columns: {}",
            path.display(),
            columns.join(", ")
        ))
    })?;
    let keep_labels = idx != 0 && columns.len() > 1;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, counting the header
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(CliError::Domain(format!(
                "{}: row {row}: expected {} fields, got {}",
                path.display(),
                columns.len(),
                fields.len()
            )));
        }
        let raw = fields[idx];
        let v: f64 = raw.parse().map_err(|_| {
            CliError::Domain(format!(
                "{}: row {row}: cannot parse '{raw}' as a number",
                path.display()
            ))
        })?;
        values.push(if percent { v / 100.0 } else { v });
        if keep_labels {
            labels.push(fields[0].to_string());
        }
    }
    let labels = keep_labels.then_some(labels);
    Ok(ReturnSeries::with_labels(values, labels)?)
}

/// Writes a simulated series as `index,x,sigma` rows.
pub fn write_simulation_csv(path: &Path, series: &ReturnSeries, sigmas: &[f64]) -> CliResult<()> {
    let file = File::create(path)
        .map_err(|e| CliError::Domain(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "index,x,sigma")?;
    for (i, (x, s)) in series.values().iter().zip(sigmas).enumerate() {
        writeln!(out, "{i},{x},{s}")?;
    }
    out.flush()?;
    Ok(())
}

/// Where a series came from, with everything later stages may need: the
/// true model and volatility path exist only for simulated data.
#[derive(Debug)]
pub struct ResolvedData {
    pub series: ReturnSeries,
    pub sigmas: Option<Vec<f64>>,
    pub spec: Option<GarchSpec>,
    pub descriptor: serde_json::Value,
}

pub struct DataSourceArgs {
    pub preset: Option<String>,
    pub length: Option<usize>,
    pub burn_in: Option<usize>,
    pub sim_seed: u64,
    pub data: Option<PathBuf>,
    pub column: Option<String>,
    pub percent: Option<bool>,
}

pub fn lookup_preset(name: &str) -> CliResult<GarchSpec> {
    preset(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown preset '{name}' (available: {})",
            preset_names().join(", ")
        ))
    })
}

/// Resolves `--preset` (simulate internally) or `--data` (ingest CSV).
/// Exactly one source must be chosen.
pub fn resolve_data(args: DataSourceArgs) -> CliResult<ResolvedData> {
    match (&args.preset, &args.data) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "choose one data source: --preset or --data, not both".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "no data source: pass --preset <name> or --data <csv>".into(),
        )),
        (Some(name), None) => {
            if args.percent == Some(true) {
                return Err(CliError::Usage(
                    "--percent applies to CSV ingestion; simulated data is already decimal"
                        .into(),
                ));
            }
            let spec = lookup_preset(name)?;
            let length = args.length.unwrap_or(7500);
            if length == 0 {
                return Err(CliError::Usage("--length must be positive".into()));
            }
            let burn_in = args.burn_in.unwrap_or(1000);
            let (series, sigmas) = simulate(&spec, length, burn_in, args.sim_seed)?;
            let descriptor = serde_json::json!({
                "source": format!("preset:{name}"),
                "length": length,
                "burn_in": burn_in,
                "sim_seed": args.sim_seed,
                "percent": false,
            });
            Ok(ResolvedData { series, sigmas: Some(sigmas), spec: Some(spec), descriptor })
        }
        (None, Some(path)) => {
            let column = args.column.as_deref().ok_or_else(|| {
                CliError::Usage("--data needs --column <name> to pick the value column".into())
            })?;
            let percent = args.percent.unwrap_or(true);
            let series = ingest_csv(path, column, percent)?;
            let descriptor = serde_json::json!({
                "source": format!("csv:{}", path.display()),
                "column": column,
                "percent": percent,
                "length": series.len(),
            });
            Ok(ResolvedData { series, sigmas: None, spec: None, descriptor })
        }
    }
}
