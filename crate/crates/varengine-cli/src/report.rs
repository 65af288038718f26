//! JSON document schemas written by the subcommands. The field set is
//! part of the tool's interface: downstream scripts parse these, so the
//! shapes are pinned by golden tests.

use serde::{Deserialize, Serialize};
use varengine::backtest::{BacktestReport, EstimatorId, ExperimentReport};

/// One estimator's results inside a backtest document.
#[derive(Debug, Serialize, Deserialize)]
pub struct EstimatorEntry {
    pub id: EstimatorId,
    pub exceeds: usize,
    /// Exception rate in percent: 100 * exceeds / m.
    pub er_percent: f64,
    pub mean_score: f64,
    pub mean_score_x100: f64,
    pub mean_score_x10000: f64,
    pub substitutions: usize,
    pub runtime_s: f64,
    pub risk_series: Vec<f64>,
    pub secured_series: Vec<f64>,
}

impl EstimatorEntry {
    pub fn from_report(report: &BacktestReport, runtime_s: f64) -> Self {
        Self {
            id: report.estimator,
            exceeds: report.exceed_count,
            er_percent: 100.0 * report.exception_rate,
            mean_score: report.mean_score,
            mean_score_x100: 100.0 * report.mean_score,
            mean_score_x10000: 10_000.0 * report.mean_score,
            substitutions: report.substitutions,
            runtime_s,
            risk_series: report.risk_series.clone(),
            secured_series: report.secured_series.clone(),
        }
    }
}

/// Full output of the backtest subcommand.
#[derive(Debug, Serialize, Deserialize)]
pub struct BacktestDocument {
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub segment: String,
    pub data: serde_json::Value,
    pub seed: u64,
    pub runtime_s: f64,
    /// The realized values each window was scored against.
    pub targets: Vec<f64>,
    pub estimators: Vec<EstimatorEntry>,
}

/// Per-estimator aggregate over the repetitions of an experiment.
#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub id: EstimatorId,
    pub er_percent_mean: f64,
    pub er_percent_sd: f64,
    pub score_x10000_mean: f64,
    pub score_x10000_sd: f64,
    pub substitutions: usize,
}

/// One estimator's numbers on one repetition.
#[derive(Debug, Serialize, Deserialize)]
pub struct RepEntry {
    pub id: EstimatorId,
    pub er_percent: f64,
    pub score_x10000: f64,
    pub exceeds: usize,
    pub substitutions: usize,
}

/// Full output of the experiment subcommand.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExperimentDocument {
    pub preset: String,
    pub alpha: f64,
    pub n: usize,
    pub k: usize,
    pub repetitions: usize,
    pub test_length: usize,
    pub m: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
    pub runtime_s: f64,
    pub summaries: Vec<SummaryEntry>,
    /// Percent of repetitions where the network beat every other
    /// estimator on exception-rate distance to alpha; null when the
    /// network was not part of the run.
    pub lstm_best_er_percent: Option<f64>,
    /// Percent of repetitions where the network had the strictly lowest
    /// mean score; null when the network was not part of the run.
    pub lstm_best_score_percent: Option<f64>,
    /// per_repetition[r][e]: repetition r, estimator e in input order.
    pub per_repetition: Vec<Vec<RepEntry>>,
}

impl ExperimentDocument {
    pub fn from_report(
        preset: String,
        k: usize,
        seed: u64,
        estimators: Vec<EstimatorId>,
        report: &ExperimentReport,
        runtime_s: f64,
    ) -> Self {
        let summaries = report
            .summaries
            .iter()
            .map(|s| SummaryEntry {
                id: s.estimator,
                er_percent_mean: 100.0 * s.er_mean,
                er_percent_sd: 100.0 * s.er_sd,
                score_x10000_mean: 10_000.0 * s.score_mean,
                score_x10000_sd: 10_000.0 * s.score_sd,
                substitutions: s.substitutions,
            })
            .collect();
        let per_repetition = report
            .reports
            .iter()
            .map(|rep| {
                rep.iter()
                    .map(|r| RepEntry {
                        id: r.estimator,
                        er_percent: 100.0 * r.exception_rate,
                        score_x10000: 10_000.0 * r.mean_score,
                        exceeds: r.exceed_count,
                        substitutions: r.substitutions,
                    })
                    .collect()
            })
            .collect();
        Self {
            preset,
            alpha: report.alpha,
            n: report.n,
            k,
            repetitions: report.repetitions,
            test_length: report.test_length,
            m: report.m,
            seed,
            estimators,
            runtime_s,
            summaries,
            lstm_best_er_percent: report.lstm_best_er_share.map(|s| 100.0 * s),
            lstm_best_score_percent: report.lstm_best_score_share.map(|s| 100.0 * s),
            per_repetition,
        }
    }

    /// Fixed-width table mirroring the JSON summary, for the terminal.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>12} {:>12} {:>14} {:>14} {:>6}\n",
            "estimator", "ER% mean", "ER% sd", "score*1e4", "sd*1e4", "subs"
        ));
        for s in &self.summaries {
            out.push_str(&format!(
                "{:<10} {:>12.4} {:>12.4} {:>14.6} {:>14.6} {:>6}\n",
                s.id.as_str(),
                s.er_percent_mean,
                s.er_percent_sd,
                s.score_x10000_mean,
                s.score_x10000_sd,
                s.substitutions
            ));
        }
        if let (Some(er), Some(sc)) = (self.lstm_best_er_percent, self.lstm_best_score_percent) {
            out.push_str(&format!(
                "network best on exception rate in {er:.1}% of repetitions, \
                 best on score in {sc:.1}%\n"
            ));
        }
        out
    }
}

/// Full output of the train subcommand, persisted next to the binary
/// model file.
#[derive(Debug, Serialize)]
pub struct TrainDocument {
    pub alpha: f64,
    pub n: usize,
    pub k: usize,
    pub split: [f64; 3],
    pub seed: u64,
    pub data: serde_json::Value,
    pub model_path: String,
    pub runtime_s: f64,
    pub report: varengine::lstm::TrainReport,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_scalings_are_consistent() {
        let report = BacktestReport {
            estimator: EstimatorId::Emp,
            alpha: 0.05,
            n: 50,
            m: 4,
            exceed_count: 1,
            exception_rate: 0.25,
            mean_score: 0.0123,
            substitutions: 0,
            risk_series: vec![0.1; 4],
            secured_series: vec![0.2; 4],
        };
        let entry = EstimatorEntry::from_report(&report, 0.5);
        assert_eq!(entry.er_percent, 25.0);
        assert_eq!(entry.mean_score_x100, 1.23);
        assert_eq!(entry.mean_score_x10000, 123.0);
        let json = serde_json::to_string(&entry).unwrap();
        let back: EstimatorEntry = serde_json::from_str(&json).unwrap();
        assert_eq!(back.id, EstimatorId::Emp);
        assert_eq!(back.mean_score, entry.mean_score);
    }
}
