use crate::error::{Error, Result};

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Denominator floor for the relative error.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Central-difference gradient `(f(θ+εeᵢ) − f(θ−εeᵢ)) / 2ε` for every coordinate.
pub fn finite_diff_gradient<F>(mut f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe)?;
        probe[i] = orig - eps;
        let minus = f(&probe)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {i} (f+ = {plus}, f- = {minus})"
            )));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Worst coordinate of `|a − n| / max(1e-8, |a| + |n|)`.
pub fn grad_check(analytic: &[f64], numeric: &[f64]) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() {
        return Err(Error::shape(
            "grad_check",
            format!("{} numeric entries", analytic.len()),
            numeric.len(),
        ));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: numeric.first().copied().unwrap_or(0.0),
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = (a - n).abs() / REL_FLOOR.max(a.abs() + n.abs());
        if rel > report.max_relative_error || rel.is_nan() {
            report = GradCheckReport {
                max_relative_error: if rel.is_nan() { f64::INFINITY } else { rel },
                worst_parameter_index: i,
                analytic: a,
                numeric: n,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{softmax_rows, Matrix};

    #[test]
    fn quadratic() {
        let g = finite_diff_gradient(|t| Ok(t[0] * t[0]), &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff_gradient(|_| Ok(4.2), &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_jacobian_entry() {
        // d/dθ softmax([θ, 0])[0] = s(1 − s)
        let f = |t: &[f64]| Ok(softmax_rows(&Matrix::from_rows(&[[t[0], 0.0]])).get(0, 0));
        let g = finite_diff_gradient(f, &[1.0], 1e-5).unwrap();
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        let analytic = s * (1.0 - s);
        assert!(grad_check(&[analytic], &g).unwrap().max_relative_error < 1e-9);
    }

    #[test]
    fn rejects_bad_step_and_non_finite_objective() {
        assert!(finite_diff_gradient(|_| Ok(0.0), &[1.0], 1e-2).is_err());
        assert!(finite_diff_gradient(|t| Ok(t[0].ln()), &[0.0], 1e-5).is_err());
    }

    #[test]
    fn report_examples() {
        let r = grad_check(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.max_relative_error, 0.0);

        let r = grad_check(&[1.0], &[1.00001]).unwrap();
        let expected = 1e-5 / 2.00001;
        assert!((r.max_relative_error - expected).abs() < 1e-12);
        assert!((r.max_relative_error - 5e-6).abs() < 1e-8);

        let r = grad_check(&[0.0], &[0.0]).unwrap();
        assert_eq!(r.max_relative_error, 0.0);

        let r = grad_check(&[0.0, 1.0, 3.0], &[0.0, 1.0, 3.3]).unwrap();
        assert_eq!(r.worst_parameter_index, 2);
        assert!(grad_check(&[1.0], &[1.0, 2.0]).is_err());
    }
}
