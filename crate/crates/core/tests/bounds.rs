use mbt_qve::error_bound::{error_bound, omega};
use mbt_qve::experiments::Baseline;
use mbt_qve::linalg::{InfNorm, Matrix};
use mbt_qve::perturbation::{
    analyze, check_admissible, condition_estimate, first_order_bounds, perturbation_bound, random_perturbation,
    structured_perturbation, Perturbation, PerturbationKind,
};

#[test]
fn perturbation_bound_holds_across_sizes() {
    let mut certified = 0;
    for p in [20.0, 5.0, 0.9] {
        let base = Baseline::new(p).unwrap();
        for eta in [1e-9, 1e-8, 1e-7, 1e-6] {
            // large η can push a small death probability below zero
            let mut perts: Vec<Perturbation> = structured_perturbation(&base.qve, eta).into_iter().collect();
            perts.extend((0..5).filter_map(|s| random_perturbation(&base.qve, eta, s).ok()));
            for pert in &perts {
                let rep = analyze(&base.qve, base.xstar(), pert).unwrap();
                if rep.certified() {
                    certified += 1;
                    assert!(rep.actual_change.unwrap() <= rep.xi_star.unwrap(), "p={p} eta={eta:e}");
                }
            }
        }
    }
    assert!(certified >= 30, "{certified}");
}

#[test]
fn bound_approaches_first_order_estimate() {
    let base = Baseline::new(2.0).unwrap();
    let rep = analyze(&base.qve, base.xstar(), &structured_perturbation(&base.qve, 1e-8).unwrap()).unwrap();
    let mut last = f64::INFINITY;
    for k in 8..16 {
        let inp = rep.inputs.with_delta(10f64.powi(-k));
        let ratio = perturbation_bound(&inp).unwrap() / first_order_bounds(&inp, base.qve.b_norm()).abs;
        assert!(ratio >= 1.0 && ratio <= last);
        last = ratio;
    }
    assert!(last - 1.0 < 1e-4);
}

#[test]
fn large_perturbations_lose_admissibility() {
    let base = Baseline::new(0.9).unwrap();
    let rep = analyze(&base.qve, base.xstar(), &structured_perturbation(&base.qve, 1e-8).unwrap()).unwrap();
    let adm = check_admissible(&rep.inputs.with_delta(1e-3));
    assert!(!adm.cond1_ok && !adm.cond2_ok);
    assert!(perturbation_bound(&rep.inputs.with_delta(1e-3)).is_err());
}

#[test]
fn condition_estimate_matches_report() {
    let base = Baseline::new(10.0).unwrap();
    let rep = analyze(&base.qve, base.xstar(), &structured_perturbation(&base.qve, 1e-9).unwrap()).unwrap();
    let kappa = condition_estimate(&base.qve, base.xstar()).unwrap();
    assert!((kappa - rep.kappa_tilde).abs() <= 1e-12 * kappa);
    assert!((rep.first_order_rel.unwrap() - kappa * 1e-9).abs() <= 1e-6 * kappa * 1e-9);
}

#[test]
fn explicit_perturbations() {
    let base = Baseline::new(5.0).unwrap();
    let n = base.qve.n();
    let mut db = Matrix::zeros(n, n * n).unwrap();
    db[(0, 0)] = 1e-7;
    let pert = Perturbation::from_db(&base.qve, db, PerturbationKind::Explicit).unwrap();
    assert!((pert.da[0] + 1e-7).abs() < 1e-20);
    let rep = analyze(&base.qve, base.xstar(), &pert).unwrap();
    assert!(rep.certified());
    assert!(rep.actual_change.unwrap() <= rep.xi_star.unwrap());

    // a phase without death mass cannot lose any
    let mut db = Matrix::zeros(n, n * n).unwrap();
    db[(1, 0)] = 1e-3;
    assert!(Perturbation::from_db(&base.qve, db, PerturbationKind::Explicit).is_err());
}

#[test]
fn error_bound_holds_along_every_newton_trace() {
    for p in [2.0, 4.0, 6.0, 8.0, 10.0, 20.0] {
        let base = Baseline::new(p).unwrap();
        for xhat in &base.solution.iterates {
            let rep = error_bound(&base.qve, xhat).unwrap();
            if let Some(w) = rep.omega_star {
                let err = xhat.sub(base.xstar()).unwrap().inf_norm();
                assert!(err <= w * (1.0 + 1e-12) + 1e-15, "p={p}: {err:e} > {w:e}");
                assert_eq!(omega(rep.ell_hat, rep.b_norm, rep.gamma), Some(w));
            }
        }
    }
}
