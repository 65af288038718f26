//! Small dense BFGS minimizer with central-difference gradients. The
//! likelihood fits only ever optimize a handful of transformed
//! parameters, so there is no need for sparse structure or exact line
//! searches; Armijo backtracking keeps it robust to the flat regions the
//! simplex transform produces.

pub struct Options {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub value_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, value_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, theta: &[f64]) -> f64 {
    let v = f(theta);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, theta: &[f64]) -> Option<Vec<f64>> {
    let mut g = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let h = 1e-5 * theta[i].abs().max(1.0);
        probe[i] = theta[i] + h;
        let up = eval(f, &probe);
        probe[i] = theta[i] - h;
        let down = eval(f, &probe);
        probe[i] = theta[i];
        let d = (up - down) / (2.0 * h);
        if !d.is_finite() {
            return None;
        }
        g[i] = d;
    }
    Some(g)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` starting from `start`. Stops when the gradient inf-norm
/// falls below `grad_tol`, the relative improvement falls below
/// `value_tol`, or after `max_iter` iterations (reported as
/// `converged = false`, as is any line-search or gradient failure).
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], opts: &Options) -> Outcome {
    let d = start.len();
    let mut theta = start.to_vec();
    let mut value = eval(f, &theta);
    if !value.is_finite() {
        return Outcome { theta, value, converged: false };
    }
    let mut grad = match gradient(f, &theta) {
        Some(g) => g,
        None => return Outcome { theta, value, converged: false },
    };

    // inverse Hessian approximation, identity to start
    let mut h_inv: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..opts.max_iter {
        if inf_norm(&grad) < opts.grad_tol {
            return Outcome { theta, value, converged: true };
        }

        let mut dir: Vec<f64> = (0..d).map(|i| -dot(&h_inv[i], &grad)).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            // not a descent direction; restart from steepest descent
            for row in h_inv.iter_mut().enumerate() {
                for (j, v) in row.1.iter_mut().enumerate() {
                    *v = if row.0 == j { 1.0 } else { 0.0 };
                }
            }
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
            if slope == 0.0 {
                return Outcome { theta, value, converged: true };
            }
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut next = vec![0.0; d];
        let mut next_value = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..d {
                next[i] = theta[i] + step * dir[i];
            }
            next_value = eval(f, &next);
            if next_value <= value + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // cannot improve along this direction; treat a tiny gradient
            // region as success, anything else as failure
            let ok = inf_norm(&grad) < opts.grad_tol.max(1e-4);
            return Outcome { theta, value, converged: ok };
        }

        let next_grad = match gradient(f, &next) {
            Some(g) => g,
            None => return Outcome { theta: next, value: next_value, converged: false },
        };

        let s: Vec<f64> = (0..d).map(|i| next[i] - theta[i]).collect();
        let y: Vec<f64> = (0..d).map(|i| next_grad[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        let improvement = value - next_value;
        theta = next.clone();
        value = next_value;
        grad = next_grad;

        if improvement.abs() <= opts.value_tol * (1.0 + value.abs()) {
            return Outcome { theta, value, converged: true };
        }

        // BFGS inverse update, skipped when curvature is too weak
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..d).map(|i| dot(&h_inv[i], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..d {
                for j in 0..d {
                    h_inv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                        - rho * (s[i] * hy[j] + hy[i] * s[j]);
                }
            }
        }
    }

    Outcome { theta, value, converged: false }
}
