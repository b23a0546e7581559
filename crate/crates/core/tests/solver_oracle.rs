//! ADMM against the interior-point reference on random small instances.

mod common;

use ptlab::ensembles::{dense_operator, Field};
use ptlab::solver::{lp_oracle, solve_p1, SolveStatus, SolverOptions};
use ptlab::SeedStream;

#[test]
fn admm_matches_interior_point_on_random_instances() {
    let seeds = SeedStream::new(2024);
    let mut worst: f64 = 0.0;
    for i in 0..200u64 {
        let common::Instance { set, sizes, a, x0 } = common::random_instance(&seeds, i);
        let (ell, m, big_m) = (sizes.ell, sizes.m, sizes.big_m);
        let op = dense_operator(a.clone(), Field::for_set(set)).unwrap();
        let y = op.apply(x0.entries()).unwrap();
        let admm = solve_p1(&op, &y, set, &SolverOptions::default()).unwrap();
        assert_eq!(admm.status, SolveStatus::Converged, "instance {i} {set} ell={ell} m={m} M={big_m}: {admm:?}");
        let lp = lp_oracle(&a, &y, set).unwrap_or_else(|e| panic!("instance {i} {set} ell={ell} m={m} M={big_m}: {e}"));
        let gap = (admm.objective - lp.value).abs();
        worst = worst.max(gap);
        assert!(gap < 1e-6, "instance {i} ({set}, ell={ell}, m={m}, M={big_m}): admm {} lp {}", admm.objective, lp.value);
        assert!(admm.objective <= x0.norm_l1x() + 1e-7);
    }
    eprintln!("largest value gap {worst:e}");
}
