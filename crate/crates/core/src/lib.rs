//! Discrete isotropic surfaces in R^{2,1}, R^{3,1} and R^{2,2} built from
//! discrete Dirac equations, and the inverse reconstruction of spinors,
//! coefficients and gauge from a lattice.
//!
//! ```
//! use isoweier::{accumulate, edges_from_spinors, propagate, random_coefficients};
//! use isoweier::{AmbientVector, GridShape, InitialData, Signature, Tolerances};
//!
//! let shape = GridShape::new(8, 8).unwrap();
//! let sig = Signature::R31;
//! let coeffs = random_coefficients(sig, shape, 1, 0.5).unwrap();
//! let spinors = propagate(&coeffs, &InitialData::random(sig, shape, 1), shape).unwrap();
//! let edges = edges_from_spinors(&spinors);
//! let surface = accumulate(&edges, AmbientVector::zero(sig), &Tolerances::default()).unwrap();
//! let back = isoweier::reconstruct(&surface, &Tolerances::default()).unwrap();
//! assert!(back.residuals.lambda <= 1e-10);
//! ```

// Checks are written `!(r <= tol)` so that NaN fails them; spinor
// components are indexed in step across several arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod continuum;
pub mod dirac;
pub mod error;
pub mod grid;
pub mod io;
pub mod metric;
pub mod reconstruct;
pub mod weierstrass;

pub use continuum::{
    convergence_study, exact_solution, sample_coefficients, step_error, ConvergenceLevel,
    ConvergenceReport, Domain, ExactSolution, MeshSpec, SmoothPotential,
};
pub use dirac::{
    propagate, propagate_generalized, random_coefficients, validate_coefficients, CoefficientField,
    Coefficients, DiracQuad, InitialData, Spinor, SpinorField, ValidationReport,
};
pub use error::{EdgeDirection, EdgeId, Error, Result, Stage};
pub use grid::{Grid, GridShape, Site};
pub use io::{export_obj, Projection};
pub use metric::{inner, is_null, null_residual, AmbientVector, Signature, Tolerances};
pub use reconstruct::{
    compute_coefficients, factor_edge, fix_gauge, gauge_relating, reconstruct, recover_spinors,
    verify_relations, FactorError, Gauge, GaugeFixed, RawCoefficients, ReconstructionResult,
    RelationReport, Residuals,
};
pub use weierstrass::{
    accumulate, accumulate_along, check_consistency, check_isotropy, check_monotonicity,
    check_surface_consistency, check_surface_isotropy, edge_vector, edges_from_spinors,
    extract_edges, relative_deviation, rounding_allowance, AccumulationPath, ConsistencyReport,
    DiscreteSurface, EdgeField, IsotropyReport, MonotonicityReport,
};
