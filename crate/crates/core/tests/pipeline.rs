//! End-to-end runs through grid, fit, exact formulas and the verify suite.

use ptlab::ensembles::ProblemSizes;
use ptlab::exactprob::{critical_ell, default_q_star, exact_table, q_sb_exact};
use ptlab::experiments::{
    run_phase_grid, CellSummary, Ensemble, ExperimentConfig, GridConfig, MatrixPolicy, CSV_HEADER,
};
use ptlab::inference::{fit_table, DoseCell, Link, fit_quantal};
use ptlab::predict::{predict_pt, Order};
use ptlab::solver::SolverOptions;
use ptlab::verify::run_all;
use ptlab::CoefficientSet;

fn base(m: usize, big_m: usize, b: usize, set: CoefficientSet, ensemble: Ensemble, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        sizes: ProblemSizes::new(0, m, big_m, b).unwrap(),
        coeff_set: set,
        ensemble,
        matrix_policy: MatrixPolicy::Fresh,
        trials,
        seed: 5,
        solver: SolverOptions::default(),
    }
}

#[test]
fn grid_fit_recovers_a_transition_near_the_exact_one() {
    let grid = GridConfig {
        base: base(8, 12, 1, CoefficientSet::Box01, Ensemble::Dbuse, 300),
        ells: Some((1..=10).collect()),
        half_width: None,
    };
    let table = run_phase_grid(&grid).unwrap();
    assert_eq!(table.rows.len(), 10);
    // success fractions fall with sparsity, up to noise
    let pis: Vec<f64> = table.rows.iter().map(|r| r.pi_hat).collect();
    assert!(pis[0] > 0.8 && pis[9] < 0.05, "{pis:?}");
    let fit = fit_table(&table.rows, Link::Probit).unwrap();
    assert!(fit.b < 0.0 && fit.converged);
    // probit centre is the ℓ where Q_sb = 1/2; compare with the exact formula
    let exact = critical_ell(8, 12, 1, 0.5).unwrap();
    assert!((fit.eps_star * 12.0 - exact.ell_star as f64).abs() < 1.5, "{} vs {}", fit.eps_star * 12.0, exact.ell_star);
}

#[test]
fn csv_rows_round_trip_through_the_header() {
    let grid = GridConfig {
        base: base(3, 6, 2, CoefficientSet::Complex, Ensemble::Rbpft, 4),
        ells: Some(vec![0, 1, 2]),
        half_width: None,
    };
    let table = run_phase_grid(&grid).unwrap();
    for row in &table.rows {
        let f = row.csv_fields();
        assert_eq!(f.len(), CSV_HEADER.len());
        let refs: Vec<&str> = f.iter().map(|s| s.as_str()).collect();
        assert_eq!(&CellSummary::from_csv_fields(&refs).unwrap(), row);
    }
    // cells are seeded independently
    let seeds: Vec<u64> = table.rows.iter().map(|r| r.seed).collect();
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
}

#[test]
fn exact_formula_fit_lands_within_one_step_of_exact_transition() {
    // expected-count data from the exact formula, fitted with the multiblock link
    let (m, big_m, b) = (36u64, 48u64, 48u64);
    let rows = exact_table(m, big_m, b).unwrap();
    let cells: Vec<DoseCell> = rows
        .iter()
        .filter(|r| r.q_mb > 1e-6 && r.q_mb < 1.0 - 1e-9)
        .map(|r| DoseCell { eps: r.ell as f64 / big_m as f64, trials: 1000.0, successes: 1000.0 * r.q_mb })
        .collect();
    let fit = fit_quantal(&cells, Link::Cloglog).unwrap();
    let exact = critical_ell(m, big_m, b, default_q_star(b)).unwrap();
    assert!((fit.eps_star - exact.eps_star).abs() <= 1.0 / big_m as f64, "{} vs {}", fit.eps_star, exact.eps_star);
}

#[test]
fn second_order_prediction_tracks_exact_transition() {
    for big_m in [48u64, 96] {
        let m = 3 * big_m / 4;
        let exact = critical_ell(m, big_m, big_m, default_q_star(big_m)).unwrap().eps_star;
        let p = predict_pt(m, big_m, big_m, CoefficientSet::Box01, Order::Second).unwrap();
        assert!((p.eps_bd() - exact).abs() < 0.02);
        assert!(p.eps_bd() < p.eps_asy);
    }
    assert!(q_sb_exact(6, 6, 8).unwrap() < q_sb_exact(2, 6, 8).unwrap());
}

#[test]
fn verify_suite_passes_and_serializes() {
    let report = run_all(1, &SolverOptions::default()).unwrap();
    for c in &report.checks {
        assert!(c.pass, "{}: {}", c.name, c.detail);
    }
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"pass\":true"));
}
