use varengine::backtest::{run_backtest, Estimator};
use varengine::classical::AlphaLevel;
use varengine::core::WindowPlan;
use varengine::garch::{preset, simulate};

fn main() -> Result<(), varengine::Error> {
    let spec = preset("garch11n").unwrap();
    let (series, sigmas) = simulate(&spec, 2000, 1000, 7)?;
    let alpha = AlphaLevel::new(0.05)?;
    let plan = WindowPlan::new(50, 500, 1450)?; // window n, count m, offset
    let report = run_backtest(&series, &plan, &Estimator::Empirical, alpha, Some(&sigmas))?;
    println!("ER {:.4}, score x1e4 {:.4}", report.exception_rate, 1e4 * report.mean_score);
    Ok(())
}
