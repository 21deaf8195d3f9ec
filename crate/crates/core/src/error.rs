use std::fmt;

use thiserror::Error;

use crate::grid::Site;

/// Which lattice direction an edge points along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeDirection {
    /// `F(n, m) = X(n+1, m) - X(n, m)`
    N,
    /// `G(n, m) = X(n, m+1) - X(n, m)`
    M,
}

/// Identifies one edge of a lattice by its direction and base site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeId {
    pub direction: EdgeDirection,
    pub site: Site,
}

impl EdgeId {
    pub fn f(n: usize, m: usize) -> Self {
        Self {
            direction: EdgeDirection::N,
            site: Site::new(n, m),
        }
    }

    pub fn g(n: usize, m: usize) -> Self {
        Self {
            direction: EdgeDirection::M,
            site: Site::new(n, m),
        }
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.direction {
            EdgeDirection::N => "F",
            EdgeDirection::M => "G",
        };
        write!(f, "{}{}", name, self.site)
    }
}

/// Pipeline stage of the inverse map, used to tag reconstruction failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    ExtractEdges,
    RecoverSpinors,
    ComputeCoefficients,
    VerifyRelations,
    FixGauge,
    RoundTrip,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::ExtractEdges => "extract-edges",
            Stage::RecoverSpinors => "recover-spinors",
            Stage::ComputeCoefficients => "compute-coefficients",
            Stage::VerifyRelations => "verify-relations",
            Stage::FixGauge => "fix-gauge",
            Stage::RoundTrip => "round-trip",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} coordinates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coefficient constraint violated at {count} site(s); max residual {max_residual:e} at {site}")]
    ConstraintViolation {
        max_residual: f64,
        site: Site,
        count: usize,
    },

    #[error("edge field is not consistent: plaquette residual {residual:e} at {site}")]
    Inconsistent { residual: f64, site: Site },

    #[error("edge {edge} is not isotropic (relative residual {residual:e})")]
    NotIsotropic { edge: EdgeId, residual: f64 },

    #[error("monotonicity violated on edge {edge}: time-like component {value:e} is not positive")]
    Monotonicity { edge: EdgeId, value: f64 },

    #[error("degenerate (zero) edge {edge}")]
    DegenerateEdge { edge: EdgeId },

    #[error(
        "degenerate lattice at {site}: spinor determinant {det:e} below threshold {threshold:e}"
    )]
    DegenerateSite {
        site: Site,
        det: f64,
        threshold: f64,
    },

    #[error("coefficient relations fail at {site}: residual {residual:e}")]
    RelationFailure { site: Site, residual: f64 },

    #[error("gauge fixing failed at {site}: {reason}")]
    GaugeFailure { site: Site, reason: String },

    #[error("mesh too coarse: 1 + beta*gamma = {value:e} is not positive at {site}")]
    MeshTooCoarse { site: Site, value: f64 },

    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(String),

    #[error("rank-deficient linear projection")]
    RankDeficientProjection,

    #[error("format error: {0}")]
    Format(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: Stage) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Stable machine-readable code, printed by the CLI on failure.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "E_DIMENSION",
            Error::InvalidInput(_) => "E_INPUT",
            Error::ConstraintViolation { .. } => "E_CONSTRAINT",
            Error::Inconsistent { .. } => "E_CONSISTENCY",
            Error::NotIsotropic { .. } => "E_ISOTROPY",
            Error::Monotonicity { .. } => "E_MONOTONICITY",
            Error::DegenerateEdge { .. } => "E_DEGENERATE_EDGE",
            Error::DegenerateSite { .. } => "E_DEGENERATE_SITE",
            Error::RelationFailure { .. } => "E_RELATION",
            Error::GaugeFailure { .. } => "E_GAUGE",
            Error::MeshTooCoarse { .. } => "E_MESH_TOO_COARSE",
            Error::UnsupportedOracle(_) => "E_UNSUPPORTED_ORACLE",
            Error::RankDeficientProjection => "E_PROJECTION",
            Error::Format(_) => "E_FORMAT",
            Error::Stage { source, .. } => source.code(),
            Error::Json(_) => "E_JSON",
            Error::Io(_) => "E_IO",
        }
    }

    /// The pipeline stage, for errors raised by [`crate::reconstruct::reconstruct`].
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
