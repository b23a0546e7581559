//! Shared instance generator for solver comparisons.

#![allow(dead_code)]

use nalgebra::DMatrix;
use ptlab::coeffsets::SignalVector;
use ptlab::ensembles::{sample_signal, sample_use, Field, ProblemSizes};
use ptlab::{CoefficientSet, SeedStream};
use rand::Rng;

pub struct Instance {
    pub set: CoefficientSet,
    pub sizes: ProblemSizes,
    pub a: DMatrix<f64>,
    pub x0: SignalVector,
}

/// Random dense USE instance `i`, cycling through all coefficient sets.
/// At most 24 real columns.
pub fn random_instance(seeds: &SeedStream, i: u64) -> Instance {
    let set = CoefficientSet::ALL[(i % 4) as usize];
    let mut rng = seeds.rng("instance", i);
    let big_m = rng.random_range(3..=if set.is_complex() { 8 } else { 12 });
    let m = rng.random_range(1..big_m);
    let ell = rng.random_range(0..=big_m);
    let sizes = ProblemSizes::new(ell, m, big_m, 1).unwrap();
    let a = sample_use(m, big_m, Field::for_set(set), &mut rng).unwrap();
    let x0 = sample_signal(&sizes, set, &seeds.child("signal", i)).unwrap();
    Instance { set, sizes, a, x0 }
}
