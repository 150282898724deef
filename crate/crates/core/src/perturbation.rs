//! Sensitivity of the extinction probability to perturbations `ΔB` with
//! `Δa = -ΔB(e ⊗ e)`.
//!
//! With `δ = ‖ΔB‖`, `ℓ = ‖L⁻¹‖`, `b̃ = ‖B + ΔB‖` and `d = ‖x*⊗x* − e⊗e‖`, the
//! perturbed minimal solution lies within `ξ*` of `x*`, where `ξ*` is the smaller
//! root of `ℓ b̃ ξ² + (2ℓδ‖x*‖ − 1) ξ + ℓ d δ = 0`. Existence needs
//! `‖x*‖δ + √(b̃ d δ) ≤ 1/(2ℓ)`; a second condition keeps the perturbed solution
//! strictly inside `(0, e)`, which makes it the minimal one.
//!
//! All norms are infinity norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, apply_bilinear, kron_vec, mixed_operator, ones, InfNorm, Matrix, Vector};
use crate::model::Qve;
use crate::solvers;
use crate::tolerances::Tolerances;

pub use crate::solvers::stability_matrix;

/// Name of the generator behind [`random_perturbation`].
pub const RANDOM_GENERATOR: &str = "ChaCha8Rng";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationInputs {
    /// `‖ΔB‖`
    pub delta: f64,
    /// `‖L⁻¹‖` at `x*`
    pub ell: f64,
    /// `‖B + ΔB‖`
    pub b_tilde: f64,
    /// `‖x*⊗x* − e⊗e‖ = 1 − (min_i x*_i)²`
    pub gap_norm: f64,
    pub xstar_norm: f64,
    /// `‖e − x*‖`
    pub comp_norm: f64,
}

impl PerturbationInputs {
    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }
}

/// `1 − (min_i x_i)²`, valid for `0 <= x < e`.
pub fn gap_norm(x: &Vector) -> f64 {
    let m = x.min();
    1.0 - m * m
}

/// `‖x ⊗ x − e ⊗ e‖∞` formed explicitly.
pub fn gap_norm_explicit(x: &Vector) -> Result<f64> {
    let e = ones(x.len())?;
    Ok(kron_vec(x, x)?.sub(&kron_vec(&e, &e)?)?.inf_norm())
}

fn check_interior(x: &Vector) -> Result<()> {
    if x.iter().any(|&v| !(0.0..1.0).contains(&v)) {
        return Err(Error::InvalidInput("solution must satisfy 0 <= x* < e".into()));
    }
    Ok(())
}

pub fn perturbation_inputs(q: &Qve, xstar: &Vector, db: &Matrix) -> Result<PerturbationInputs> {
    check_interior(xstar)?;
    if db.rows() != q.n() || db.cols() != q.n() * q.n() {
        return Err(Error::InvalidDimension(format!(
            "ΔB must be {}x{}, got {}x{}",
            q.n(),
            q.n() * q.n(),
            db.rows(),
            db.cols()
        )));
    }
    let b_pert = q.b().add(db)?;
    if let Some(v) = b_pert.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::PerturbationTooLarge(format!("B + ΔB has entry {v} outside [0, 1]")));
    }
    let ell = linalg::inf_norm_inverse(&stability_matrix(q, xstar)?)?;
    let gap = gap_norm(xstar);
    let explicit = gap_norm_explicit(xstar)?;
    debug_assert!((gap - explicit).abs() <= 1e-14, "gap norm {gap} vs explicit {explicit}");
    let e = ones(q.n())?;
    Ok(PerturbationInputs {
        delta: db.inf_norm(),
        ell,
        b_tilde: b_pert.inf_norm(),
        gap_norm: gap,
        xstar_norm: xstar.inf_norm(),
        comp_norm: e.sub(xstar)?.inf_norm(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admissibility {
    /// Existence of a perturbed solution within `ξ*`.
    pub cond1_ok: bool,
    /// The `ξ*`-ball around `x*` lies strictly inside `(0, e)`.
    pub cond2_ok: bool,
}

/// `(1 − 2ℓδ‖x*‖, (1 − 2ℓδ‖x*‖)² − 4ℓ² b̃ d δ)` with the discriminant clamped
/// when rounding leaves it just below zero.
fn discriminant(inp: &PerturbationInputs) -> (f64, f64) {
    let c = 1.0 - 2.0 * inp.ell * inp.delta * inp.xstar_norm;
    let disc = c * c - 4.0 * inp.ell * inp.ell * inp.b_tilde * inp.gap_norm * inp.delta;
    let clamp = Tolerances::default().discriminant;
    (c, if (-clamp..0.0).contains(&disc) { 0.0 } else { disc })
}

pub fn check_admissible(inp: &PerturbationInputs) -> Admissibility {
    let lhs1 = inp.xstar_norm * inp.delta + (inp.b_tilde * inp.gap_norm * inp.delta).sqrt();
    let cond1_ok = lhs1 <= 1.0 / (2.0 * inp.ell);
    let cond2_ok = cond1_ok && {
        let (_, disc) = discriminant(inp);
        let two_ell_b = 2.0 * inp.ell * inp.b_tilde;
        let lhs2 = 2.0 * inp.ell * inp.delta * inp.xstar_norm + disc.max(0.0).sqrt();
        let rhs = f64::max(
            1.0 - two_ell_b * (1.0 - inp.xstar_norm),
            1.0 - two_ell_b * (1.0 - inp.comp_norm),
        );
        disc >= 0.0 && lhs2 > rhs
    };
    Admissibility { cond1_ok, cond2_ok }
}

/// `ξ* = 2ℓdδ / (1 − 2ℓδ‖x*‖ + √((1 − 2ℓδ‖x*‖)² − 4ℓ² b̃ d δ))`.
pub fn perturbation_bound(inp: &PerturbationInputs) -> Result<f64> {
    if !check_admissible(inp).cond1_ok {
        return Err(Error::BoundInadmissible(format!(
            "‖x*‖δ + √(b̃dδ) exceeds 1/(2ℓ) = {:e}",
            1.0 / (2.0 * inp.ell)
        )));
    }
    let (c, disc) = discriminant(inp);
    if disc < 0.0 {
        return Err(Error::BoundInadmissible(format!("negative discriminant {disc:e}")));
    }
    Ok(2.0 * inp.ell * inp.gap_norm * inp.delta / (c + disc.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrder {
    /// `ℓ d δ`
    pub abs: f64,
    /// `ℓ ‖B‖ d / ‖x*‖ · δ/‖B‖`; absent when `‖x*‖ = 0`.
    pub rel: Option<f64>,
}

pub fn first_order_bounds(inp: &PerturbationInputs, b_norm: f64) -> FirstOrder {
    let abs = inp.ell * inp.gap_norm * inp.delta;
    let rel = (inp.xstar_norm > 0.0).then(|| {
        if b_norm > 0.0 {
            inp.ell * b_norm * inp.gap_norm / inp.xstar_norm * (inp.delta / b_norm)
        } else {
            abs / inp.xstar_norm
        }
    });
    FirstOrder { abs, rel }
}

/// `κ̃ = ℓ d ‖B‖ / ‖x*‖`.
pub fn condition_estimate(q: &Qve, xstar: &Vector) -> Result<f64> {
    check_interior(xstar)?;
    let norm = xstar.inf_norm();
    if norm == 0.0 {
        return Err(Error::UndefinedRelative);
    }
    let ell = linalg::inf_norm_inverse(&stability_matrix(q, xstar)?)?;
    Ok(ell * gap_norm(xstar) * q.b_norm() / norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    /// `ρ(B[(e+x*)⊗I + I⊗(e+x*)])`, equal to 2 at an interior solution.
    pub rho_two: f64,
    pub rho_r: f64,
    /// `ρ(I − L)`
    pub rho_il: f64,
}

impl SpectralDiagnostics {
    pub fn sum(&self) -> f64 {
        self.rho_r + self.rho_il
    }
}

pub fn spectral_diagnostics(q: &Qve, xstar: &Vector) -> Result<SpectralDiagnostics> {
    let e = ones(q.n())?;
    let shifted = e.add(xstar)?;
    Ok(SpectralDiagnostics {
        rho_two: linalg::spectral_radius(&mixed_operator(q.b(), &shifted, &shifted)?)?,
        rho_r: linalg::spectral_radius(&mixed_operator(q.b(), &e, &e)?)?,
        rho_il: linalg::spectral_radius(&mixed_operator(q.b(), xstar, xstar)?)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PerturbationKind {
    Structured { eta: f64 },
    Random { eta: f64, seed: u64, generator: String },
    Explicit,
}

/// A coefficient perturbation `(ΔB, Δa)` with `Δa = −ΔB(e ⊗ e)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub db: Matrix,
    pub da: Vector,
}

impl Perturbation {
    /// Builds `Δa` from `ΔB` and checks that the perturbed pair is still an MBT.
    pub fn from_db(q: &Qve, db: Matrix, kind: PerturbationKind) -> Result<Self> {
        let e = ones(q.n())?;
        let da = apply_bilinear(&db, &e, &e)?.scale(-1.0);
        let p = Self { kind, db, da };
        p.check(q)?;
        Ok(p)
    }

    fn check(&self, q: &Qve) -> Result<()> {
        let a = q.a().add(&self.da)?;
        if let Some(i) = (0..q.n()).find(|&i| a[i] < 0.0 || a[i] > 1.0) {
            return Err(Error::PerturbationTooLarge(format!(
                "perturbed a[{i}] = {:e} leaves [0, 1]",
                a[i]
            )));
        }
        let b = q.b().add(&self.db)?;
        if let Some(v) = b.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::PerturbationTooLarge(format!("perturbed B has entry {v:e} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn apply(&self, q: &Qve) -> Result<Qve> {
        Qve::new(q.a().add(&self.da)?, q.b().add(&self.db)?)
    }

    pub fn seed(&self) -> Option<u64> {
        match self.kind {
            PerturbationKind::Random { seed, .. } => Some(seed),
            _ => None,
        }
    }
}

/// `ΔB = ηB`, `Δa = −ΔB(e ⊗ e)`.
pub fn structured_perturbation(q: &Qve, eta: f64) -> Result<Perturbation> {
    check_eta(eta)?;
    Perturbation::from_db(q, q.b().scale(eta), PerturbationKind::Structured { eta })
}

/// Uniform `(0, 1)` entries rescaled so that `‖ΔB‖ = η‖B‖`; deterministic in `seed`.
pub fn random_perturbation(q: &Qve, eta: f64, seed: u64) -> Result<Perturbation> {
    check_eta(eta)?;
    let n = q.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n * n * n).map(|_| rng.sample(rand::distributions::Open01)).collect();
    let raw = Matrix::new(n, n * n, raw)?;
    let db = raw.scale(eta * q.b_norm() / raw.inf_norm());
    Perturbation::from_db(
        q,
        db,
        PerturbationKind::Random {
            eta,
            seed,
            generator: RANDOM_GENERATOR.to_string(),
        },
    )
}

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("eta = {eta} must be nonnegative")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub perturbation: PerturbationKind,
    pub inputs: PerturbationInputs,
    pub cond1_ok: bool,
    pub cond2_ok: bool,
    pub xi_star: Option<f64>,
    pub first_order_abs: f64,
    pub first_order_rel: Option<f64>,
    pub kappa_tilde: f64,
    /// `‖x̃* − x*‖` from Newton on the perturbed equation, when it converged.
    pub actual_change: Option<f64>,
}

impl PerturbationReport {
    pub fn certified(&self) -> bool {
        self.cond1_ok && self.cond2_ok
    }
}

/// Evaluates every bound for `pert` and measures the true change of the minimal
/// solution by solving the perturbed equation.
pub fn analyze(q: &Qve, xstar: &Vector, pert: &Perturbation) -> Result<PerturbationReport> {
    let inputs = perturbation_inputs(q, xstar, &pert.db)?;
    let adm = check_admissible(&inputs);
    let xi_star = if adm.cond1_ok {
        Some(perturbation_bound(&inputs)?)
    } else {
        None
    };
    let fo = first_order_bounds(&inputs, q.b_norm());
    let kappa_tilde = inputs.ell * inputs.gap_norm * q.b_norm() / inputs.xstar_norm;
    let actual_change = match solvers::solve_minimal(&pert.apply(q)?) {
        Ok(rep) => Some(rep.x.sub(xstar)?.inf_norm()),
        Err(_) => None,
    };
    Ok(PerturbationReport {
        perturbation: pert.kind.clone(),
        inputs,
        cond1_ok: adm.cond1_ok,
        cond2_ok: adm.cond2_ok,
        xi_star,
        first_order_abs: fo.abs,
        first_order_rel: fo.rel,
        kappa_tilde,
        actual_change,
    })
}
