//! Central finite differences, used as the independent oracle for every
//! analytic backward pass.

use super::params::ParamSet;
use crate::error::{Error, Result};

/// `(f(θ + ε eⱼ) − f(θ − ε eⱼ)) / 2ε` for every scalar coordinate `j`.
pub fn finite_diff_grad<F>(f: F, params: &ParamSet, eps: f64) -> Result<ParamSet>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be > 0, got {eps}")));
    }
    let base = params.flatten();
    let mut probe = params.clone();
    let mut grad = vec![0.0; base.len()];
    let mut shifted = base.clone();
    for j in 0..base.len() {
        shifted[j] = base[j] + eps;
        probe.assign_flat(&shifted)?;
        let plus = f(&probe)?;
        shifted[j] = base[j] - eps;
        probe.assign_flat(&shifted)?;
        let minus = f(&probe)?;
        shifted[j] = base[j];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFinite("finite_diff_grad"));
        }
        grad[j] = (plus - minus) / (2.0 * eps);
    }
    let mut out = params.zeros_like();
    out.assign_flat(&grad)?;
    Ok(out)
}

/// Finite differences of a function of a flat real vector.
pub fn finite_diff_vec<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + eps;
        let plus = f(&probe)?;
        probe[j] = x[j] - eps;
        let minus = f(&probe)?;
        probe[j] = x[j];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFinite("finite_diff_vec"));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Outcome of comparing an analytic gradient with a numeric one.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub max_abs_error_small: f64,
    /// Largest `|analytic − numeric|` over all coordinates.
    pub max_abs_diff: f64,
    /// Coordinates whose discrepancy is below the rounding floor.
    pub below_floor: usize,
    /// Flat indices that violated the tolerance.
    pub failures: Vec<usize>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerances for [`compare_gradients`]: relative error below `rel_tol`
/// where `|analytic| > small`, absolute error below `abs_tol` elsewhere.
///
/// A coordinate whose discrepancy is below `rounding_floor` also passes: a
/// central difference of a function of magnitude `|f|` carries a rounding
/// error of order `ε_mach·|f|/ε`, so nothing below that is measurable.
#[derive(Debug, Clone, Copy)]
pub struct GradTolerance {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub small: f64,
    pub rounding_floor: f64,
}

impl Default for GradTolerance {
    fn default() -> Self {
        Self {
            rel_tol: 1e-5,
            abs_tol: 1e-8,
            small: 1e-8,
            rounding_floor: 0.0,
        }
    }
}

impl GradTolerance {
    /// Default tolerances plus the rounding floor `8·ε_mach·max(1, |f|)/ε`.
    pub fn with_rounding_floor(f_value: f64, eps: f64) -> Self {
        Self {
            rounding_floor: 8.0 * f64::EPSILON * f_value.abs().max(1.0) / eps,
            ..Self::default()
        }
    }
}

pub fn compare_gradients(analytic: &[f64], numeric: &[f64], tol: GradTolerance) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut report = GradCheckReport {
        coordinates: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error_small: 0.0,
        max_abs_diff: 0.0,
        below_floor: 0,
        failures: Vec::new(),
    };
    for (j, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let diff = (a - n).abs();
        report.max_abs_diff = report.max_abs_diff.max(diff);
        if diff < tol.rounding_floor {
            report.below_floor += 1;
            continue;
        }
        if a.abs() > tol.small {
            let rel = diff / a.abs().max(n.abs());
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel >= tol.rel_tol {
                report.failures.push(j);
            }
        } else {
            report.max_abs_error_small = report.max_abs_error_small.max(diff);
            if diff >= tol.abs_tol {
                report.failures.push(j);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::ndcore::RealTensor;

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("theta", RealTensor::scalar(v));
        p
    }

    fn at(p: &ParamSet) -> f64 {
        p.get("theta").unwrap().data()[0]
    }

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|p| Ok(at(p).powi(2)), &single(3.0), 1e-6).unwrap();
        assert_relative_eq!(at(&g), 6.0, epsilon = 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_grad(|_| Ok(4.2), &single(1.0), 1e-6).unwrap();
        assert_eq!(at(&g), 0.0);
    }

    #[test]
    fn sine_at_zero() {
        let g = finite_diff_grad(|p| Ok(at(p).sin()), &single(0.0), 1e-5).unwrap();
        assert!((at(&g) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_finite_evaluations_and_bad_step() {
        assert!(matches!(
            finite_diff_grad(|p| Ok(at(p).ln()), &single(0.0), 1e-3),
            Err(Error::NonFinite(_))
        ));
        assert!(finite_diff_grad(|_| Ok(0.0), &single(0.0), 0.0).is_err());
    }

    #[test]
    fn comparison_uses_relative_and_absolute_regimes() {
        let tol = GradTolerance::default();
        assert!(compare_gradients(&[1.0, 0.0], &[1.0 + 1e-7, 5e-9], tol).passed());
        let r = compare_gradients(&[1.0, 0.0], &[1.1, 1e-6], tol);
        assert_eq!(r.failures, vec![0, 1]);
        // 1e-6 vs 1.0001e-6 is a 1e-4 relative error but far below the
        // rounding noise of differencing a function of size 10 at ε = 1e-6.
        let floor = GradTolerance::with_rounding_floor(10.0, 1e-6);
        assert!(compare_gradients(&[1e-6], &[1.0001e-6], floor).passed());
        assert!(!compare_gradients(&[1.0], &[1.0001], floor).passed());
    }
}
