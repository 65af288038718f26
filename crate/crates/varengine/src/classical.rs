//! Window-based VaR estimators that need no time-series model: the
//! empirical quantile and two Gaussian formulas (maximum-likelihood
//! plug-in and a small-sample unbiased version based on the t
//! distribution).
//!
//! All estimators return VaR as a positive loss level for typical
//! inputs: `v = var_*(window, alpha)` means the next return is expected
//! to fall below `-v` with probability `alpha`.

use crate::core::dist::{std_normal_quantile, student_t_quantile};
use crate::core::stats::{sample_mean, sample_std};
use crate::error::{Error, Result};

/// Tail probability in (0, 1), typically 0.05 or 0.01.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaLevel(f64);

impl AlphaLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!(
                "alpha must lie strictly in (0, 1), got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Empirical VaR: the negated order statistic x_(k+1) with k = floor(n * alpha),
/// order statistics sorted ascending.
pub fn var_empirical(window: &[f64], alpha: AlphaLevel) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::InsufficientSample("empty window".into()));
    }
    let n = window.len();
    let k = (n as f64 * alpha.value()).floor() as usize;
    if k + 1 > n {
        return Err(Error::InsufficientSample(format!(
            "window of {n} observations cannot resolve alpha {}",
            alpha.value()
        )));
    }
    let mut sorted = window.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(-sorted[k])
}

/// Gaussian plug-in VaR: -(mean + std * z_alpha) with the maximum
/// likelihood normal fit (std still uses the n-1 denominator).
pub fn var_gaussian_plugin(window: &[f64], alpha: AlphaLevel) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::InsufficientSample(
            "plug-in estimator needs at least two observations".into(),
        ));
    }
    let mean = sample_mean(window)?;
    let std = sample_std(window)?;
    let z = std_normal_quantile(alpha.value())?;
    Ok(-(mean + std * z))
}

/// Gaussian unbiased VaR: replaces the normal quantile with
/// sqrt((n+1)/n) * t_{n-1} quantile, which removes the small-sample bias
/// of the plug-in formula under i.i.d. normal returns.
pub fn var_gaussian_unbiased(window: &[f64], alpha: AlphaLevel) -> Result<f64> {
    let n = window.len();
    if n < 2 {
        return Err(Error::InsufficientSample(
            "unbiased estimator needs at least two observations".into(),
        ));
    }
    let mean = sample_mean(window)?;
    let std = sample_std(window)?;
    let t = student_t_quantile(alpha.value(), (n - 1) as f64)?;
    let scale = ((n as f64 + 1.0) / n as f64).sqrt();
    Ok(-(mean + std * scale * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn alpha(a: f64) -> AlphaLevel {
        AlphaLevel::new(a).unwrap()
    }

    #[test]
    fn alpha_validation() {
        assert!(AlphaLevel::new(0.0).is_err());
        assert!(AlphaLevel::new(1.0).is_err());
        assert!(AlphaLevel::new(-0.1).is_err());
        assert!(AlphaLevel::new(f64::NAN).is_err());
        assert_eq!(alpha(0.05).value(), 0.05);
    }

    #[test]
    fn empirical_picks_the_right_order_statistic() {
        // n = 20, alpha = 0.05: k = 1, so the second smallest is negated
        let mut w: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        w.reverse();
        assert_relative_eq!(var_empirical(&w, alpha(0.05)).unwrap(), -2.0);
        // alpha = 0.5 on 4 points: k = 2, third smallest
        assert_relative_eq!(
            var_empirical(&[0.4, -0.3, 0.1, -0.2], alpha(0.5)).unwrap(),
            -0.1
        );
    }

    #[test]
    fn empirical_small_alpha_uses_minimum() {
        let w = [0.5, -1.5, 0.2, 0.9];
        assert_relative_eq!(var_empirical(&w, alpha(0.01)).unwrap(), 1.5);
    }

    #[test]
    fn empirical_rejects_alpha_too_large_for_window() {
        let w = [0.1, 0.2];
        assert!(var_empirical(&w, alpha(0.999)).is_ok());
        assert!(var_empirical(&[], alpha(0.05)).is_err());
    }

    #[test]
    fn plugin_matches_closed_form() {
        // mean 0.01, sample std 0.02 * sqrt(2), alpha 0.05:
        // v = -(mean + std * (-1.6448536269514729))
        let w = [0.01 - 0.02, 0.01 + 0.02];
        assert_relative_eq!(sample_mean(&w).unwrap(), 0.01);
        assert_relative_eq!(sample_std(&w).unwrap(), 0.0282842712474619, max_relative = 1e-15);
        let got = var_gaussian_plugin(&w, alpha(0.05)).unwrap();
        assert_relative_eq!(got, 0.036523486147066964, max_relative = 1e-12);
    }

    #[test]
    fn unbiased_exceeds_plugin_in_the_tail() {
        // sqrt((n+1)/n) |t_{n-1}| > |z| for alpha < 0.5, so the unbiased
        // estimate is the more conservative of the two
        let w: Vec<f64> = (0..50).map(|i| ((i * 37 % 50) as f64 - 25.0) / 100.0).collect();
        for a in [0.01, 0.05, 0.1] {
            let plug = var_gaussian_plugin(&w, alpha(a)).unwrap();
            let unb = var_gaussian_unbiased(&w, alpha(a)).unwrap();
            assert!(unb > plug, "alpha {a}: {unb} <=  {plug}");
        }
    }

    #[test]
    fn unbiased_matches_closed_form_n50() {
        // zero-mean window with sample std s: v = s * sqrt(51/50) * |t_49(0.05)|
        // sqrt(51/50) * 1.6765508926168542 = 1.6932334019399269
        let mut w = vec![0.0; 48];
        w.push(-1.0);
        w.push(1.0);
        let s = sample_std(&w).unwrap();
        let got = var_gaussian_unbiased(&w, alpha(0.05)).unwrap();
        assert_relative_eq!(got, s * 1.6932334019399269, max_relative = 1e-10);
    }

    proptest! {
        // VaR is translation-covariant (shift returns by c, VaR drops by c)
        // and positively homogeneous for all three estimators
        #[test]
        fn translation_and_homogeneity(
            xs in proptest::collection::vec(-0.3f64..0.3, 20..60),
            shift in -0.1f64..0.1,
            scale in 0.1f64..5.0,
        ) {
            let a = alpha(0.05);
            let shifted: Vec<f64> = xs.iter().map(|v| v + shift).collect();
            let scaled: Vec<f64> = xs.iter().map(|v| v * scale).collect();
            for f in [var_empirical, var_gaussian_plugin, var_gaussian_unbiased] {
                let base = f(&xs, a).unwrap();
                let vs = f(&shifted, a).unwrap();
                let vc = f(&scaled, a).unwrap();
                prop_assert!((vs - (base - shift)).abs() < 1e-9 * (1.0 + base.abs()));
                prop_assert!((vc - scale * base).abs() < 1e-9 * (1.0 + base.abs()));
            }
        }
    }
}
