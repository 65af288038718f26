use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered univariate P&L observations, in decimal units (0.01 = 1%),
/// with optional date labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl ReturnSeries {
    /// Builds a series, rejecting empty input and non-finite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_labels(values, None)
    }

    pub fn with_labels(values: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("return series must be non-empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at index {pos}"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(Error::InvalidInput(format!(
                    "label count {} does not match value count {}",
                    l.len(),
                    values.len()
                )));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }
}

/// Rolling-window layout over a series: `m` windows of length `n`, the
/// first one starting at `offset`. Window `i` (0-based) covers indices
/// `[offset+i, offset+i+n-1]` and is evaluated against index `offset+i+n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub n: usize,
    pub m: usize,
    pub offset: usize,
}

impl WindowPlan {
    pub fn new(n: usize, m: usize, offset: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidPlan("n and m must be positive".into()));
        }
        Ok(Self { n, m, offset })
    }

    /// Checks the plan fits inside a series of `len` observations,
    /// including the target of the last window.
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.offset + self.m + self.n > len {
            return Err(Error::InvalidPlan(format!(
                "plan needs offset + m + n = {} observations but the series has {len}",
                self.offset + self.m + self.n
            )));
        }
        Ok(())
    }
}

/// Contiguous train/validation/test fractions, applied in temporal order
/// with no shuffling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitPlan {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        if !(train > 0.0 && validation > 0.0 && test > 0.0) {
            return Err(Error::InvalidInput("split fractions must be positive".into()));
        }
        if ((train + validation + test) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split fractions must sum to 1, got {}",
                train + validation + test
            )));
        }
        Ok(Self { train, validation, test })
    }

    /// Boundary indices `(train_end, validation_end)` for a series of
    /// length `len`; the segments are `[0, train_end)`,
    /// `[train_end, validation_end)` and `[validation_end, len)`.
    pub fn boundaries(&self, len: usize) -> (usize, usize) {
        let b1 = (len as f64 * self.train).floor() as usize;
        let b2 = (len as f64 * (self.train + self.validation)).floor() as usize;
        (b1.min(len), b2.min(len))
    }
}

/// Materializes the rolling windows of `plan`: exactly `m` pairs of
/// (`n`-observation window, next observation).
pub fn make_windows<'a>(
    series: &'a ReturnSeries,
    plan: &WindowPlan,
) -> Result<Vec<(&'a [f64], f64)>> {
    plan.validate(series.len())?;
    let x = series.values();
    let mut out = Vec::with_capacity(plan.m);
    for i in 0..plan.m {
        let start = plan.offset + i;
        out.push((&x[start..start + plan.n], x[start + plan.n]));
    }
    Ok(out)
}
