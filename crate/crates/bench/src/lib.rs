//! Fixtures shared by the pipeline benchmarks.

use isoweier::{
    accumulate, edges_from_spinors, propagate, random_coefficients, AmbientVector,
    CoefficientField, DiscreteSurface, GridShape, InitialData, Signature, SpinorField, Tolerances,
};

pub const SEED: u64 = 11;
pub const MAGNITUDE: f64 = 0.5;

/// One forward-generated lattice with every intermediate kept.
pub struct Fixture {
    pub coefficients: CoefficientField,
    pub initial: InitialData,
    pub spinors: SpinorField,
    pub surface: DiscreteSurface,
}

pub fn fixture(sig: Signature, size: usize) -> Fixture {
    let shape = GridShape::new(size, size).expect("positive size");
    let coefficients = random_coefficients(sig, shape, SEED, MAGNITUDE).expect("valid magnitude");
    let initial = InitialData::random(sig, shape, SEED);
    let spinors = propagate(&coefficients, &initial, shape).expect("shapes agree");
    let surface = accumulate(
        &edges_from_spinors(&spinors),
        AmbientVector::zero(sig),
        &Tolerances::default(),
    )
    .expect("forward edges are consistent");
    Fixture {
        coefficients,
        initial,
        spinors,
        surface,
    }
}
