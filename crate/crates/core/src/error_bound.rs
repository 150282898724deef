//! A posteriori error bound for an approximate extinction probability `x̂`.
//!
//! With `r = x̂ − a − B(x̂⊗x̂)`, `γ = ‖r‖`, `ℓ̂ = ‖L̂⁻¹‖` and `b = ‖B‖`, the
//! distance to the minimal solution is at most
//! `ω* = 2ℓ̂γ / (1 + √(1 − 4ℓ̂²bγ))`, the smaller root of `ℓ̂bω² − ω + ℓ̂γ = 0`,
//! provided `x̂` is a plausible iterate (`0 <= x̂ < e`, `ρ(I − L̂) < 1`), the
//! discriminant is nonnegative, and the `ω*`-ball stays inside `(0, e)`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{self, mixed_operator, ones, InfNorm, Vector};
use crate::model::Qve;
use crate::solvers::{residual, stability_matrix};
use crate::tolerances::Tolerances;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub gamma: f64,
    pub ell_hat: f64,
    pub b_norm: f64,
    /// `ρ(B(x̂⊗I + I⊗x̂))`; only evaluated when `0 <= x̂ < e`.
    pub rho_hat: Option<f64>,
    pub con1_ok: bool,
    pub con21_ok: bool,
    pub con22_ok: bool,
    pub omega_star: Option<f64>,
    /// First-order estimate `ℓ̂γ`, reported whether or not the bound is certified.
    pub estimate: f64,
}

impl ErrorBoundReport {
    pub fn certified(&self) -> bool {
        self.omega_star.is_some()
    }
}

pub fn error_bound(q: &Qve, xhat: &Vector) -> Result<ErrorBoundReport> {
    let gamma = residual(q, xhat)?.inf_norm();
    let ell_hat = linalg::inf_norm_inverse(&stability_matrix(q, xhat)?)?;
    let b = q.b_norm();

    let in_box = xhat.iter().all(|&v| (0.0..1.0).contains(&v));
    let rho_hat = if in_box {
        Some(linalg::spectral_radius(&mixed_operator(q.b(), xhat, xhat)?)?)
    } else {
        None
    };
    let con1_ok = rho_hat.is_some_and(|rho| rho < 1.0);

    let mut disc = 1.0 - 4.0 * ell_hat * ell_hat * b * gamma;
    if (-Tolerances::default().discriminant..0.0).contains(&disc) {
        disc = 0.0;
    }
    let con21_ok = disc >= 0.0;

    let e = ones(q.n())?;
    let two_lb = 2.0 * ell_hat * b;
    let rhs = f64::max(
        1.0 - two_lb * (1.0 - e.sub(xhat)?.inf_norm()),
        1.0 - two_lb * (1.0 - xhat.inf_norm()),
    );
    let con22_ok = con21_ok && disc.sqrt() > rhs;

    let omega_star = (con1_ok && con21_ok && con22_ok).then(|| 2.0 * ell_hat * gamma / (1.0 + disc.sqrt()));
    Ok(ErrorBoundReport {
        gamma,
        ell_hat,
        b_norm: b,
        rho_hat,
        con1_ok,
        con21_ok,
        con22_ok,
        omega_star,
        estimate: ell_hat * gamma,
    })
}

/// `ℓ̂γ = ‖[I − B(x̂⊗I + I⊗x̂)]⁻¹‖ ‖r‖`.
pub fn error_estimate(q: &Qve, xhat: &Vector) -> Result<f64> {
    let gamma = residual(q, xhat)?.inf_norm();
    Ok(linalg::inf_norm_inverse(&stability_matrix(q, xhat)?)? * gamma)
}

/// `ω*` as a function of `(ℓ̂, b, γ)` alone; `None` when the discriminant is negative.
pub fn omega(ell_hat: f64, b: f64, gamma: f64) -> Option<f64> {
    let disc = 1.0 - 4.0 * ell_hat * ell_hat * b * gamma;
    (disc >= 0.0).then(|| 2.0 * ell_hat * gamma / (1.0 + disc.sqrt()))
}
