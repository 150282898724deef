use mbt_qve::linalg::{Matrix, Vector};
use mbt_qve::model::Qve;
use mbt_qve::simulation::{estimate_extinction, Schedule, Simulator};
use mbt_qve::solvers::solve_minimal;

fn two_phase() -> Qve {
    // phase 0 dies w.p. 0.3 or bears a phase-1 child; phase 1 dies w.p. 0.35
    let mut b = Matrix::zeros(2, 4).unwrap();
    b[(0, 1)] = 0.4;
    b[(0, 2)] = 0.3;
    b[(1, 0)] = 0.25;
    b[(1, 3)] = 0.4;
    Qve::new(Vector::new(vec![0.3, 0.35]).unwrap(), b).unwrap()
}

#[test]
fn scalar_estimate_matches_closed_form() {
    let q = Qve::scalar(0.2, 0.8).unwrap();
    let rep = estimate_extinction(&q, 40_000, 500, 11).unwrap();
    assert!((rep.estimates[0] - 0.25).abs() <= 4.0 * rep.stderr[0].max(1e-3));
    assert!(rep.censored > 0);
}

#[test]
fn two_phase_estimate_matches_solver() {
    let q = two_phase();
    let x = solve_minimal(&q).unwrap().x;
    let rep = estimate_extinction(&q, 40_000, 500, 5).unwrap();
    for i in 0..2 {
        assert!((rep.estimates[i] - x[i]).abs() <= 4.0 * rep.stderr[i].max(1e-3), "phase {i}");
    }
}

#[test]
fn schedules_agree_statistically() {
    let q = two_phase();
    let gen = Simulator::new(&q, 20_000, 300, 8, Schedule::Generation).unwrap().run().unwrap();
    let fifo = Simulator::new(&q, 20_000, 300, 8, Schedule::Fifo).unwrap().run().unwrap();
    for i in 0..2 {
        let se = (gen.stderr[i].powi(2) + fifo.stderr[i].powi(2)).sqrt();
        assert!((gen.estimates[i] - fifo.estimates[i]).abs() <= 5.0 * se.max(1e-3));
    }
}

#[test]
fn reports_are_reproducible() {
    let q = two_phase();
    let a = estimate_extinction(&q, 10_000, 200, 99).unwrap();
    let b = estimate_extinction(&q, 10_000, 200, 99).unwrap();
    assert_eq!(a, b);
    let c = estimate_extinction(&q, 10_000, 200, 100).unwrap();
    assert_ne!(a.estimates, c.estimates);
    assert_eq!(a.generator, "ChaCha8Rng");
    assert_eq!(a.censored_by_phase.iter().sum::<u64>(), a.censored);
}

#[test]
fn scalar_fixture_at_full_cap() {
    let q = Qve::scalar(0.2, 0.8).unwrap();
    let rep = estimate_extinction(&q, 100_000, 10_000, 2024).unwrap();
    assert!((rep.estimates[0] - 0.25).abs() <= 0.005, "{}", rep.estimates[0]);
    assert_eq!(rep.censored, rep.trials - (rep.estimates[0] * rep.trials as f64).round() as u64);
}
