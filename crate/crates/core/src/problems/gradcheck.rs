use serde::Serialize;

use crate::error::{check_len, Error, Result};

use super::MultiTaskProblem;

/// Largest accepted per-entry error.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Entries below this magnitude are compared absolutely.
const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// `k×m` row-major per-entry errors.
    pub errors: Vec<f64>,
    pub max_error: f64,
    /// `(task, coordinate)` of the largest error.
    pub worst: (usize, usize),
    pub passed: bool,
}

/// Compares the analytic jacobian with central differences of step `h`.
pub fn check_gradients(p: &dyn MultiTaskProblem, theta: &[f64], h: f64) -> Result<GradCheckReport> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {h}")));
    }
    check_len(p.dim(), theta.len())?;
    let (k, m) = (p.num_tasks(), p.dim());
    let jac = p.jacobian(theta);
    let mut errors = vec![0.0; k * m];
    let mut x = theta.to_vec();
    for j in 0..m {
        x[j] = theta[j] + h;
        let up = p.losses(&x);
        x[j] = theta[j] - h;
        let down = p.losses(&x);
        x[j] = theta[j];
        for i in 0..k {
            let fd = (up[i] - down[i]) / (2.0 * h);
            let a = jac.row(i)[j];
            let mag = a.abs().max(fd.abs());
            let diff = (a - fd).abs();
            errors[i * m + j] = if mag < ABS_FLOOR { diff } else { diff / mag };
        }
    }
    let (idx, max_error) = errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 || e.is_nan() { (i, e) } else { best });
    Ok(GradCheckReport {
        worst: (idx / m, idx % m),
        passed: max_error <= GRADCHECK_TOL,
        errors,
        max_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic_bank, QuadraticBankSpec, Toy2d};

    #[test]
    fn quadratic_passes() {
        let bank = make_quadratic_bank(&QuadraticBankSpec::random(3, 5, 7)).unwrap();
        let r = check_gradients(&bank, &[0.3, -0.2, 1.0, 0.5, -1.1], 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn toy_passes_off_kinks() {
        let r = check_gradients(&Toy2d::new(), &[2.0, 3.0], 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn rejects_bad_step() {
        assert!(check_gradients(&Toy2d::new(), &[1.0, 1.0], 0.0).is_err());
        assert!(check_gradients(&Toy2d::new(), &[1.0, 1.0], -1.0).is_err());
        assert!(check_gradients(&Toy2d::new(), &[1.0], 1e-6).is_err());
    }

    #[test]
    fn detects_wrong_gradient() {
        struct Wrong;
        impl MultiTaskProblem for Wrong {
            fn name(&self) -> &str {
                "wrong"
            }
            fn num_tasks(&self) -> usize {
                1
            }
            fn dim(&self) -> usize {
                1
            }
            fn min_losses(&self) -> &[f64] {
                &[0.0]
            }
            fn losses(&self, t: &[f64]) -> Vec<f64> {
                vec![t[0] * t[0]]
            }
            fn jacobian(&self, t: &[f64]) -> crate::jacobian::TaskJacobian {
                crate::jacobian::TaskJacobian::from_rows(
                    vec![vec![t[0]]],
                    crate::jacobian::GradientKind::RawLoss,
                )
                .unwrap()
            }
        }
        let r = check_gradients(&Wrong, &[1.0], 1e-6).unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst, (0, 0));
    }
}
