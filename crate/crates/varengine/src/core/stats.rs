use crate::error::{Error, Result};

pub fn sample_mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InsufficientSample("mean of empty sample".into()));
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

/// Unbiased sample variance (n-1 denominator). Requires at least two points.
pub fn sample_variance(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InsufficientSample(
            "variance needs at least two observations".into(),
        ));
    }
    let mean = sample_mean(x)?;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok(ss / (x.len() - 1) as f64)
}

pub fn sample_std(x: &[f64]) -> Result<f64> {
    Ok(sample_variance(x)?.sqrt())
}
