//! Minimal nonnegative solution of `x = a + B(x ⊗ x)`.
//!
//! Both solvers start at or below `a` and increase monotonically towards `x*`.
//! The residual is measured in the infinity norm. Full traces are kept; at the
//! dimensions used here they cost nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{apply_bilinear, mixed_operator, InfNorm, Lu, Matrix, Vector};
use crate::model::Qve;
use crate::tolerances::Tolerances;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Depth,
    Newton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub x: Vector,
    /// `x_0, x_1, ...` including the final iterate.
    pub iterates: Vec<Vector>,
    /// `‖r(x_k)‖∞` for each entry of `iterates`.
    pub residual_norms: Vec<f64>,
    pub converged: bool,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// `r = x̂ - a - B(x̂ ⊗ x̂)`.
pub fn residual(q: &Qve, xhat: &Vector) -> Result<Vector> {
    let quad = apply_bilinear(q.b(), xhat, xhat)?;
    xhat.sub(q.a())?.sub(&quad)
}

/// Jacobian of the residual map, `L = I - B(x ⊗ I + I ⊗ x)`.
pub fn stability_matrix(q: &Qve, x: &Vector) -> Result<Matrix> {
    let m = mixed_operator(q.b(), x, x)?;
    Matrix::identity(q.n())?.sub(&m)
}

/// Functional iteration `x_{k+1} = a + B(x_k ⊗ x_k)` from `x_0 = 0`.
pub fn depth_iteration(q: &Qve, tol: f64, maxit: usize) -> Result<SolveReport> {
    check_tol(tol)?;
    let mut x = Vector::zeros(q.n())?;
    let mut report = SolveReport {
        method: Method::Depth,
        x: x.clone(),
        iterates: Vec::new(),
        residual_norms: Vec::new(),
        converged: false,
    };
    for k in 0..=maxit {
        let next = q.a().add(&apply_bilinear(q.b(), &x, &x)?)?;
        let gamma = x.sub(&next)?.inf_norm();
        report.iterates.push(x.clone());
        report.residual_norms.push(gamma);
        if gamma <= tol {
            report.converged = true;
            report.x = x;
            return Ok(report);
        }
        if k == maxit {
            break;
        }
        x = next;
    }
    report.x = x;
    Err(Error::NoConvergence {
        method: Method::Depth,
        iterations: maxit,
        residual: report.final_residual(),
        report: Box::new(report),
    })
}

/// Newton's method on `x - a - B(x ⊗ x) = 0` from `x0` with `0 <= x0 <= a`.
///
/// After the residual drops below `tol` the Jacobian at the limit is checked:
/// when `4 ℓ̂² ‖B‖ γ > 1/2` (with `ℓ̂ = ‖L̂⁻¹‖`, `γ` the final residual) the limit
/// is not a regular root. This is what happens on critical equations, where
/// Newton creeps linearly towards `e` while `L` degenerates.
pub fn newton_iteration(q: &Qve, tol: f64, maxit: usize, x0: &Vector) -> Result<SolveReport> {
    check_tol(tol)?;
    if x0.len() != q.n() {
        return Err(Error::InvalidDimension(format!(
            "start vector has length {}, expected {}",
            x0.len(),
            q.n()
        )));
    }
    if (0..q.n()).any(|i| x0[i] < 0.0 || x0[i] > q.a()[i]) {
        return Err(Error::InvalidInput("Newton start must satisfy 0 <= x0 <= a".into()));
    }
    let pivot = Tolerances::default().pivot;
    let mut x = x0.clone();
    let mut report = SolveReport {
        method: Method::Newton,
        x: x.clone(),
        iterates: Vec::new(),
        residual_norms: Vec::new(),
        converged: false,
    };
    for k in 0..=maxit {
        let r = residual(q, &x)?;
        let gamma = r.inf_norm();
        report.iterates.push(x.clone());
        report.residual_norms.push(gamma);
        let lu = Lu::factor(&stability_matrix(q, &x)?, pivot)?;
        if gamma <= tol {
            let ell_hat = lu.inverse()?.inf_norm();
            let kantorovich = 4.0 * ell_hat * ell_hat * q.b_norm() * gamma;
            if kantorovich > 0.5 {
                return Err(Error::NearSingularJacobian {
                    iterations: k,
                    ell_hat,
                    kantorovich,
                });
            }
            report.converged = true;
            report.x = x;
            return Ok(report);
        }
        if k == maxit {
            break;
        }
        let step = lu.solve(&r.scale(-1.0))?;
        x = x.add(&step)?;
    }
    report.x = x;
    Err(Error::NoConvergence {
        method: Method::Newton,
        iterations: maxit,
        residual: report.final_residual(),
        report: Box::new(report),
    })
}

/// Newton from zero with the default tolerance and iteration cap.
pub fn solve_minimal(q: &Qve) -> Result<SolveReport> {
    let tol = Tolerances::default();
    newton_iteration(q, tol.solver_tol, tol.solver_max_iter, &Vector::zeros(q.n())?)
}

pub fn solve(q: &Qve, method: Method, tol: f64, maxit: usize) -> Result<SolveReport> {
    match method {
        Method::Depth => depth_iteration(q, tol, maxit),
        Method::Newton => newton_iteration(q, tol, maxit, &Vector::zeros(q.n())?),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("tolerance {tol} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ones;

    fn fixture() -> Qve {
        Qve::scalar(0.2, 0.8).unwrap()
    }

    #[test]
    fn residual_cases() {
        let q = fixture();
        assert_eq!(residual(&q, &ones(1).unwrap()).unwrap()[0].abs(), 0.0);
        let r = residual(&q, &Vector::new(vec![0.24]).unwrap()).unwrap();
        assert!((r[0] + 0.00608).abs() < 1e-15);
        assert!(residual(&q, &ones(2).unwrap()).is_err());
    }

    #[test]
    fn depth_hand_iteration() {
        let rep = depth_iteration(&fixture(), 1e-14, 10_000).unwrap();
        let it: Vec<f64> = rep.iterates.iter().take(4).map(|v| v[0]).collect();
        assert_eq!(it[0], 0.0);
        assert!((it[1] - 0.2).abs() < 1e-15);
        assert!((it[2] - 0.232).abs() < 1e-15);
        assert!((it[3] - 0.243_059_2).abs() < 1e-15);
        assert!((rep.x[0] - 0.25).abs() < 1e-12);
        assert_eq!(rep.iterates.len(), rep.residual_norms.len());
        assert!(rep.converged && rep.final_residual() <= 1e-14);
    }

    #[test]
    fn newton_hand_iteration() {
        let rep = newton_iteration(&fixture(), 1e-14, 50, &Vector::zeros(1).unwrap()).unwrap();
        assert!((rep.iterates[1][0] - 0.2).abs() < 1e-15);
        assert!((rep.iterates[2][0] - 0.247_059).abs() < 1e-6);
        assert!((rep.x[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn immediate_death_is_linear() {
        let q = Qve::new(ones(2).unwrap(), Matrix::zeros(2, 4).unwrap()).unwrap();
        let n = newton_iteration(&q, 1e-14, 5, &Vector::zeros(2).unwrap()).unwrap();
        assert_eq!(n.iterations(), 1);
        assert_eq!(n.x.as_slice(), &[1.0, 1.0]);
        let d = depth_iteration(&q, 1e-14, 5).unwrap();
        assert_eq!(d.iterations(), 1);
        assert_eq!(d.x.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        match depth_iteration(&fixture(), 1e-14, 3) {
            Err(Error::NoConvergence { report, iterations: 3, .. }) => {
                assert_eq!(report.iterates.len(), 4);
                assert!(!report.converged);
                assert!((report.x[0] - 0.243_059_2).abs() < 1e-15);
            }
            other => panic!("expected no-convergence, got {other:?}"),
        }
        assert!(matches!(
            newton_iteration(&fixture(), 1e-14, 1, &Vector::zeros(1).unwrap()),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn newton_rejects_start_above_a() {
        let q = fixture();
        assert!(newton_iteration(&q, 1e-14, 10, &Vector::new(vec![0.21]).unwrap()).is_err());
        assert!(newton_iteration(&q, 1e-14, 10, &Vector::new(vec![0.1]).unwrap()).is_ok());
        assert!(newton_iteration(&q, 0.0, 10, &Vector::zeros(1).unwrap()).is_err());
    }

    #[test]
    fn critical_equation_is_flagged() {
        let q = Qve::scalar(0.5, 0.5).unwrap();
        let err = newton_iteration(&q, 1e-14, 200, &Vector::zeros(1).unwrap()).unwrap_err();
        assert!(
            matches!(err, Error::NearSingularJacobian { .. } | Error::SingularMatrix { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn subcritical_converges_to_ones() {
        let q = Qve::scalar(0.6, 0.4).unwrap();
        let rep = solve_minimal(&q).unwrap();
        assert!((rep.x[0] - 1.0).abs() < 1e-14);
    }
}
