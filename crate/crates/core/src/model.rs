//! Quadratic vector equations `x = a + B(x ⊗ x)` and the Markovian binary tree
//! rate data they are built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, apply_bilinear, is_irreducible, mixed_operator, ones, InfNorm, Lu, Matrix, Vector};
use crate::tolerances::Tolerances;

/// Coefficients of `x = a + B(x ⊗ x)`; `B[i][n*j + k]` is the probability that a
/// phase-`i` individual has a phase-`j` child and itself moves to phase `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QveFile", into = "QveFile")]
pub struct Qve {
    a: Vector,
    b: Matrix,
}

#[derive(Serialize, Deserialize)]
struct QveFile {
    n: usize,
    a: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

impl TryFrom<QveFile> for Qve {
    type Error = Error;

    fn try_from(f: QveFile) -> Result<Self> {
        if f.a.len() != f.n {
            return Err(Error::InvalidDimension(format!("field `a` has length {}, expected n = {}", f.a.len(), f.n)));
        }
        if f.b.len() != f.n {
            return Err(Error::InvalidDimension(format!("field `B` has {} rows, expected n = {}", f.b.len(), f.n)));
        }
        Qve::new(Vector::new(f.a)?, Matrix::from_rows(f.b)?)
    }
}

impl From<Qve> for QveFile {
    fn from(q: Qve) -> Self {
        QveFile {
            n: q.n(),
            a: q.a.into_vec(),
            b: q.b.to_rows(),
        }
    }
}

impl Qve {
    pub fn new(a: Vector, b: Matrix) -> Result<Self> {
        let n = a.len();
        if b.rows() != n || b.cols() != n * n {
            return Err(Error::InvalidDimension(format!(
                "B must be {n}x{}, got {}x{}",
                n * n,
                b.rows(),
                b.cols()
            )));
        }
        Ok(Self { a, b })
    }

    /// One-phase equation `x = a + b x²`.
    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(Vector::new(vec![a])?, Matrix::new(1, 1, vec![b])?)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &Vector {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn b_norm(&self) -> f64 {
        self.b.inf_norm()
    }

    /// Relabels phases: new phase `i` is old phase `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err(Error::InvalidInput("not a permutation of the phases".into()));
        }
        let a = Vector::new(perm.iter().map(|&p| self.a[p]).collect())?;
        let mut b = Matrix::zeros(n, n * n)?;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    b[(i, n * j + k)] = self.b[(perm[i], n * perm[j] + perm[k])];
                }
            }
        }
        Self::new(a, b)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coefficient {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Diagnostic {
    /// An entry of `a` or `B` lies outside `[0, 1]`.
    EntryOutOfRange {
        coefficient: Coefficient,
        row: usize,
        col: usize,
        value: f64,
    },
    /// `(a + B(e ⊗ e))[row] - 1`.
    RowSumDeviation { row: usize, deviation: f64 },
    /// Entry moved onto `[0, 1]` after rounding in the rate-to-QVE solve.
    Clamped {
        coefficient: Coefficient,
        row: usize,
        col: usize,
        value: f64,
    },
}

/// Checks that all entries are probabilities and that `a + B(e ⊗ e) = e` within `tol`.
pub fn validate_mbt(q: &Qve, tol: f64) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = q.n();
    for i in 0..n {
        let v = q.a[i];
        if !(0.0..=1.0).contains(&v) {
            out.push(Diagnostic::EntryOutOfRange {
                coefficient: Coefficient::A,
                row: i,
                col: 0,
                value: v,
            });
        }
        for (c, &v) in q.b.row(i).iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                out.push(Diagnostic::EntryOutOfRange {
                    coefficient: Coefficient::B,
                    row: i,
                    col: c,
                    value: v,
                });
            }
        }
    }
    for (row, deviation) in row_sum_deviation(q).into_iter().enumerate() {
        if deviation.abs() > tol {
            out.push(Diagnostic::RowSumDeviation { row, deviation });
        }
    }
    out
}

/// `a + B(e ⊗ e) - e`, entrywise.
pub fn row_sum_deviation(q: &Qve) -> Vec<f64> {
    (0..q.n())
        .map(|i| q.a[i] + q.b.row(i).iter().sum::<f64>() - 1.0)
        .collect()
}

/// Mean offspring matrix `R = B(I ⊗ e + e ⊗ I)`.
pub fn offspring_matrix(q: &Qve) -> Result<Matrix> {
    let e = ones(q.n())?;
    mixed_operator(&q.b, &e, &e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub rho_r: f64,
    pub regime: Regime,
    pub positive_regular: bool,
}

impl Classification {
    /// Supercritical and positive regular.
    pub fn is_spr(&self) -> bool {
        self.regime == Regime::Supercritical && self.positive_regular
    }
}

pub fn classify(q: &Qve, crit_tol: f64) -> Result<Classification> {
    let r = offspring_matrix(q)?;
    let rho_r = linalg::spectral_radius(&r)?;
    let regime = if (rho_r - 1.0).abs() <= crit_tol {
        Regime::Critical
    } else if rho_r < 1.0 {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    };
    Ok(Classification {
        rho_r,
        regime,
        positive_regular: is_irreducible(&r),
    })
}

/// Continuous-time MBT rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RatesFile", into = "RatesFile")]
pub struct MbtRates {
    /// Phase transitions without events; diagonal holds minus the total outflow.
    pub d0: Matrix,
    pub d1_diag: Vec<f64>,
    pub death: Vector,
    /// Parent phase after a birth.
    pub p0: Matrix,
    /// Child phase at a birth.
    pub p1: Matrix,
}

#[derive(Serialize, Deserialize)]
struct RatesFile {
    n: usize,
    #[serde(rename = "D0")]
    d0: Vec<Vec<f64>>,
    #[serde(rename = "D1_diag")]
    d1_diag: Vec<f64>,
    death: Vec<f64>,
    #[serde(rename = "P0")]
    p0: Vec<Vec<f64>>,
    #[serde(rename = "P1")]
    p1: Vec<Vec<f64>>,
}

impl TryFrom<RatesFile> for MbtRates {
    type Error = Error;

    fn try_from(f: RatesFile) -> Result<Self> {
        let n = f.n;
        let check = |name: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::InvalidDimension(format!("field `{name}` has length {len}, expected n = {n}")))
            }
        };
        check("D0", f.d0.len())?;
        check("D1_diag", f.d1_diag.len())?;
        check("death", f.death.len())?;
        check("P0", f.p0.len())?;
        check("P1", f.p1.len())?;
        let rates = MbtRates {
            d0: Matrix::from_rows(f.d0)?,
            d1_diag: f.d1_diag,
            death: Vector::new(f.death)?,
            p0: Matrix::from_rows(f.p0)?,
            p1: Matrix::from_rows(f.p1)?,
        };
        rates.check_shapes()?;
        Ok(rates)
    }
}

impl From<MbtRates> for RatesFile {
    fn from(r: MbtRates) -> Self {
        RatesFile {
            n: r.n(),
            d0: r.d0.to_rows(),
            d1_diag: r.d1_diag,
            death: r.death.into_vec(),
            p0: r.p0.to_rows(),
            p1: r.p1.to_rows(),
        }
    }
}

const RATE_TOL: f64 = 1e-12;

impl MbtRates {
    pub fn n(&self) -> usize {
        self.death.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.n();
        for (name, m) in [("D0", &self.d0), ("P0", &self.p0), ("P1", &self.p1)] {
            if m.rows() != n || m.cols() != n {
                return Err(Error::InvalidDimension(format!(
                    "`{name}` must be {n}x{n}, got {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if self.d1_diag.len() != n {
            return Err(Error::InvalidDimension(format!("`D1_diag` must have length {n}")));
        }
        Ok(())
    }

    /// Sign pattern, generator row sums and stochasticity of `P0`, `P1`.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                let v = self.d0[(i, j)];
                if i == j && v > 0.0 {
                    return Err(Error::InvalidRates(format!("D0[{i}][{i}] = {v} must be nonpositive")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::InvalidRates(format!("D0[{i}][{j}] = {v} must be nonnegative")));
                }
            }
            if self.d1_diag[i] < 0.0 || self.death[i] < 0.0 {
                return Err(Error::InvalidRates(format!("negative birth or death rate in phase {i}")));
            }
            let total = self.d0.row(i).iter().sum::<f64>() + self.d1_diag[i] + self.death[i];
            if total.abs() > RATE_TOL {
                return Err(Error::InvalidRates(format!("row {i} of D0 e + D1 e + death is {total:e}, not 0")));
            }
            for (name, p) in [("P0", &self.p0), ("P1", &self.p1)] {
                let row = p.row(i);
                if row.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidRates(format!("{name} row {i} has a negative entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > RATE_TOL {
                    return Err(Error::InvalidRates(format!("{name} row {i} sums to {s}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Birth-rate tensor `Rrate[i][n*j + k] = D1[i][i] P1[i][j] P0[i][k]`.
    pub fn birth_rates(&self) -> Result<Matrix> {
        let n = self.n();
        let mut r = Matrix::zeros(n, n * n)?;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    r[(i, n * j + k)] = self.d1_diag[i] * self.p1[(i, j)] * self.p0[(i, k)];
                }
            }
        }
        Ok(r)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn from_rates(m: &MbtRates) -> Result<Qve> {
    from_rates_with_notes(m).map(|(q, _)| q)
}

/// `a = -D0⁻¹ death`, `B = -D0⁻¹ Rrate`. Also returns the entries that rounding
/// pushed slightly outside `[0, 1]` and that were clamped back.
pub fn from_rates_with_notes(m: &MbtRates) -> Result<(Qve, Vec<Diagnostic>)> {
    m.validate()?;
    let tol = Tolerances::default();
    let n = m.n();
    let lu = Lu::factor(&m.d0, tol.pivot)?;
    let mut notes = Vec::new();
    let mut settle = |coefficient: Coefficient, row: usize, col: usize, v: f64| -> Result<f64> {
        if v < -tol.negative_rate {
            return Err(Error::InvalidRates(format!(
                "{coefficient:?}[{row}][{col}] = {v:e} is negative"
            )));
        }
        if v < 0.0 || (v > 1.0 && v <= 1.0 + tol.entry_clamp) {
            notes.push(Diagnostic::Clamped {
                coefficient,
                row,
                col,
                value: v,
            });
            return Ok(v.clamp(0.0, 1.0));
        }
        Ok(v)
    };

    let a_raw = lu.solve(&m.death.scale(-1.0))?;
    let mut a = Vec::with_capacity(n);
    for i in 0..n {
        a.push(settle(Coefficient::A, i, 0, a_raw[i])?);
    }

    let rates = m.birth_rates()?;
    let mut b = Matrix::zeros(n, n * n)?;
    for c in 0..n * n {
        let col = Vector::new(rates.column(c).into_iter().map(|v| -v).collect())?;
        if col.iter().all(|&v| v == 0.0) {
            continue;
        }
        let z = lu.solve(&col)?;
        for i in 0..n {
            b[(i, c)] = settle(Coefficient::B, i, c, z[i])?;
        }
    }
    Ok((Qve::new(Vector::new(a)?, b)?, notes))
}

/// How the reference family's death vector is scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DeathScale {
    /// Death rate 1 in phase 5.
    Unit,
    /// Death rate 10⁻³ in phase 5.
    Milli,
}

impl DeathScale {
    pub fn factor(self) -> f64 {
        match self {
            DeathScale::Unit => 1.0,
            DeathScale::Milli => 1e-3,
        }
    }
}

/// The scale that reproduces the published offspring spectral radii.
pub const CANONICAL_DEATH_SCALE: DeathScale = DeathScale::Unit;

/// Nine-phase benchmark MBT with birth rate `p / 100` in phases 1 to 4.
///
/// Phase 5 is the only phase with a death rate. Phases 1 to 4 bear children of
/// their own phase and move to phase 5; phases 6 to 9 bear phase-5 children and stay.
pub fn reference_family(p: f64, death_scale: DeathScale) -> Result<MbtRates> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("family parameter p = {p} must be positive")));
    }
    const N: usize = 9;
    // Off-diagonal D0 entries, in units of 1e-3.
    const HIDDEN: [(usize, usize, f64); 12] = [
        (0, 1, 6.0),
        (1, 2, 6.0),
        (2, 3, 6.0),
        (3, 0, 6.0),
        (3, 4, 1.0),
        (3, 5, 1.0),
        (5, 6, 6.0),
        (6, 7, 6.0),
        (7, 8, 6.0),
        (8, 0, 1.0),
        (8, 4, 1.0),
        (8, 5, 6.0),
    ];
    let d1_diag: Vec<f64> = [p, p, p, p, 5.0, 4.0, 4.0, 4.0, 4.0].iter().map(|v| 1e-2 * v).collect();
    let mut death = vec![0.0; N];
    death[4] = death_scale.factor();

    let mut d0 = Matrix::zeros(N, N)?;
    for &(i, j, v) in &HIDDEN {
        d0[(i, j)] = 1e-3 * v;
    }
    for i in 0..N {
        let off: f64 = d0.row(i).iter().sum();
        d0[(i, i)] = -(off + d1_diag[i] + death[i]);
    }

    let mut p1 = Matrix::zeros(N, N)?;
    for i in 0..4 {
        p1[(i, i)] = 1.0;
    }
    p1[(4, 0)] = 0.1;
    p1[(4, 4)] = 0.9;
    for i in 5..N {
        p1[(i, 4)] = 1.0;
    }

    let mut p0 = Matrix::zeros(N, N)?;
    for i in 0..4 {
        p0[(i, 4)] = 1.0;
    }
    p0[(4, 0)] = 0.1;
    p0[(4, 4)] = 0.9;
    for i in 5..N {
        p0[(i, i)] = 1.0;
    }

    Ok(MbtRates {
        d0,
        d1_diag,
        death: Vector::new(death)?,
        p0,
        p1,
    })
}

/// `from_rates(reference_family(p, CANONICAL_DEATH_SCALE))`.
pub fn reference_qve(p: f64) -> Result<Qve> {
    from_rates(&reference_family(p, CANONICAL_DEATH_SCALE)?)
}

/// `B(e ⊗ e)`, the probability of any birth by phase.
pub fn birth_mass(q: &Qve) -> Result<Vector> {
    let e = ones(q.n())?;
    apply_bilinear(&q.b, &e, &e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;

    fn scalar_rates(d0: f64, d1: f64, death: f64) -> MbtRates {
        MbtRates {
            d0: Matrix::new(1, 1, vec![d0]).unwrap(),
            d1_diag: vec![d1],
            death: Vector::new(vec![death]).unwrap(),
            p0: Matrix::identity(1).unwrap(),
            p1: Matrix::identity(1).unwrap(),
        }
    }

    #[test]
    fn validation_diagnostics() {
        assert!(validate_mbt(&Qve::scalar(0.2, 0.8).unwrap(), 1e-12).is_empty());
        let d = validate_mbt(&Qve::scalar(0.3, 0.8).unwrap(), 1e-12);
        assert_eq!(d.len(), 1);
        match &d[0] {
            Diagnostic::RowSumDeviation { row: 0, deviation } => assert!((deviation - 0.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let d = validate_mbt(&Qve::scalar(-0.1, 1.1).unwrap(), 1e-12);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|x| matches!(x, Diagnostic::EntryOutOfRange { .. })));
    }

    #[test]
    fn offspring_matrix_cases() {
        let r = offspring_matrix(&Qve::scalar(0.2, 0.8).unwrap()).unwrap();
        assert!((r[(0, 0)] - 1.6).abs() < 1e-15);
        let z = Qve::new(ones(2).unwrap(), Matrix::zeros(2, 4).unwrap()).unwrap();
        assert_eq!(offspring_matrix(&z).unwrap(), Matrix::zeros(2, 2).unwrap());
    }

    #[test]
    fn scalar_classification() {
        let c = classify(&Qve::scalar(0.2, 0.8).unwrap(), 1e-12).unwrap();
        assert!((c.rho_r - 1.6).abs() < 1e-12);
        assert_eq!(c.regime, Regime::Supercritical);
        assert!(c.positive_regular);
        let c = classify(&Qve::scalar(0.6, 0.4).unwrap(), 1e-12).unwrap();
        assert!((c.rho_r - 0.8).abs() < 1e-12);
        assert_eq!(c.regime, Regime::Subcritical);
        assert_eq!(classify(&Qve::scalar(0.5, 0.5).unwrap(), 1e-12).unwrap().regime, Regime::Critical);
    }

    #[test]
    fn scalar_rates_conversion() {
        let q = from_rates(&scalar_rates(-5.0, 4.0, 1.0)).unwrap();
        assert!((q.a()[0] - 0.2).abs() < 1e-15);
        assert!((q.b()[(0, 0)] - 0.8).abs() < 1e-15);
        let q = from_rates(&scalar_rates(-1.0, 0.0, 1.0)).unwrap();
        assert_eq!(q.a()[0], 1.0);
        assert_eq!(q.b()[(0, 0)], 0.0);
    }

    #[test]
    fn rate_validation_rejects_bad_data() {
        assert!(matches!(
            from_rates(&scalar_rates(-5.0, 4.0, 2.0)),
            Err(Error::InvalidRates(_))
        ));
        let mut r = scalar_rates(-5.0, 4.0, 1.0);
        r.p1 = Matrix::new(1, 1, vec![0.5]).unwrap();
        assert!(matches!(from_rates(&r), Err(Error::InvalidRates(_))));
        // D0 = 0 with no rates at all: valid generator, singular solve
        let r = scalar_rates(0.0, 0.0, 0.0);
        assert!(matches!(from_rates(&r), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn family_is_valid_for_every_parameter() {
        for &p in &[0.9, 2.0, 5.0, 10.0, 20.0] {
            let rates = reference_family(p, CANONICAL_DEATH_SCALE).unwrap();
            rates.validate().unwrap();
            let (q, notes) = from_rates_with_notes(&rates).unwrap();
            assert!(validate_mbt(&q, 1e-12).is_empty(), "p = {p}: {:?}", validate_mbt(&q, 1e-12));
            assert!(notes.iter().all(|d| matches!(d, Diagnostic::Clamped { value, .. } if value.abs() < 1e-15)));
        }
        assert!(reference_family(0.0, DeathScale::Unit).is_err());
    }

    #[test]
    fn offspring_row_sums_are_twice_birth_mass() {
        for q in [Qve::scalar(0.2, 0.8).unwrap(), reference_qve(2.0).unwrap()] {
            let r = offspring_matrix(&q).unwrap();
            let re = r.mul_vec(&ones(q.n()).unwrap()).unwrap();
            for i in 0..q.n() {
                assert!((re[i] - 2.0 * (1.0 - q.a()[i])).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn family_classification_matches_published_radii() {
        let expected = [(20.0, 1.0095), (10.0, 1.0084), (5.0, 1.0065), (2.0, 1.0028), (0.9, 1.0001)];
        for (p, rho) in expected {
            let c = classify(&reference_qve(p).unwrap(), 1e-12).unwrap();
            assert!((c.rho_r - rho).abs() < 5e-5, "p = {p}: {}", c.rho_r);
            assert!(c.is_spr());
        }
    }

    #[test]
    fn milli_scale_gives_a_different_process() {
        let q = from_rates(&reference_family(2.0, DeathScale::Milli).unwrap()).unwrap();
        assert!(validate_mbt(&q, 1e-12).is_empty());
        let c = classify(&q, 1e-12).unwrap();
        assert!((c.rho_r - 1.0028).abs() > 0.5);
    }

    #[test]
    fn permutation_leaves_radius_unchanged() {
        let q = reference_qve(5.0).unwrap();
        let perm = [3, 8, 0, 5, 1, 7, 2, 6, 4];
        let qp = q.permuted(&perm).unwrap();
        let r1 = spectral_radius(&offspring_matrix(&q).unwrap()).unwrap();
        let r2 = spectral_radius(&offspring_matrix(&qp).unwrap()).unwrap();
        assert!((r1 - r2).abs() < 1e-10);
        assert!(q.permuted(&[0, 0, 1, 2, 3, 4, 5, 6, 7]).is_err());
    }

    #[test]
    fn json_formats() {
        let q = Qve::scalar(0.2, 0.8).unwrap();
        let s = q.to_json().unwrap();
        assert!(s.contains("\"B\""));
        assert_eq!(Qve::from_json(&s).unwrap(), q);
        let err = Qve::from_json(r#"{"n": 2, "a": [0.5], "B": [[0.5]]}"#).unwrap_err();
        assert!(err.to_string().contains("`a`"));
        let rates = reference_family(2.0, DeathScale::Unit).unwrap();
        let back = MbtRates::from_json(&rates.to_json().unwrap()).unwrap();
        assert_eq!(back, rates);
        assert!(back.to_json().unwrap().contains("D1_diag"));
    }
}
