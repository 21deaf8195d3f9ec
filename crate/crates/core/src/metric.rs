//! Pseudo-Euclidean vector algebra for the signatures (2,1), (3,1) and (2,2).

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three ambient spaces supported by the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signature {
    /// `R^{2,1}`, quadratic form `x1^2 + x2^2 - x3^2`.
    R21,
    /// `R^{3,1}`, quadratic form `x1^2 + x2^2 + x3^2 - x4^2`.
    R31,
    /// `R^{2,2}`, quadratic form `x1^2 + x2^2 - x3^2 - x4^2`.
    R22,
}

impl Signature {
    pub const ALL: [Signature; 3] = [Signature::R21, Signature::R31, Signature::R22];

    pub fn dim(self) -> usize {
        match self {
            Signature::R21 => 3,
            Signature::R31 | Signature::R22 => 4,
        }
    }

    pub fn signs(self) -> &'static [f64] {
        match self {
            Signature::R21 => &[1.0, 1.0, -1.0],
            Signature::R31 => &[1.0, 1.0, 1.0, -1.0],
            Signature::R22 => &[1.0, 1.0, -1.0, -1.0],
        }
    }

    /// Number of spinor component pairs `(phi_i, psi_i)`.
    pub fn spinor_pairs(self) -> usize {
        match self {
            Signature::R21 => 1,
            Signature::R31 | Signature::R22 => 2,
        }
    }

    /// Index of the time-like coordinate that must increase along both
    /// lattice directions, where the converse construction requires it.
    pub fn monotone_axis(self) -> Option<usize> {
        match self {
            Signature::R21 => Some(2),
            Signature::R31 => Some(3),
            Signature::R22 => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Signature::R21 => "R21",
            Signature::R31 => "R31",
            Signature::R22 => "R22",
        }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Signature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R21" => Ok(Signature::R21),
            "R31" => Ok(Signature::R31),
            "R22" => Ok(Signature::R22),
            _ => Err(Error::InvalidInput(format!(
                "unknown signature `{s}` (expected r21, r31 or r22)"
            ))),
        }
    }
}

/// A point or displacement in a pseudo-Euclidean space of dimension 3 or 4.
///
/// Coordinates beyond `dim` are kept at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientVector {
    coords: [f64; 4],
    dim: usize,
}

impl AmbientVector {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if !(3..=4).contains(&coords.len()) {
            return Err(Error::InvalidInput(format!(
                "ambient vectors have 3 or 4 coordinates, found {}",
                coords.len()
            )));
        }
        let mut c = [0.0; 4];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self {
            coords: c,
            dim: coords.len(),
        })
    }

    pub fn zero(sig: Signature) -> Self {
        Self {
            coords: [0.0; 4],
            dim: sig.dim(),
        }
    }

    pub fn from_array3(c: [f64; 3]) -> Self {
        Self {
            coords: [c[0], c[1], c[2], 0.0],
            dim: 3,
        }
    }

    pub fn from_array4(c: [f64; 4]) -> Self {
        Self { coords: c, dim: 4 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.coords.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords().iter().map(|c| c * c).sum()
    }

    /// Euclidean norm, used only for scale-aware tolerances.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }

    pub fn check_dim(&self, sig: Signature) -> Result<()> {
        if self.dim != sig.dim() {
            return Err(Error::DimensionMismatch {
                expected: sig.dim(),
                found: self.dim,
            });
        }
        Ok(())
    }
}

impl Add for AmbientVector {
    type Output = AmbientVector;

    fn add(mut self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a += b;
        }
        self
    }
}

impl Sub for AmbientVector {
    type Output = AmbientVector;

    fn sub(mut self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a -= b;
        }
        self
    }
}

impl Neg for AmbientVector {
    type Output = AmbientVector;

    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

/// Numeric tolerance policy shared by all checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative tolerance for null tests and plaquette consistency.
    pub null_tol: f64,
    /// Relative threshold below which spinor determinants count as zero.
    pub degeneracy_tol: f64,
    /// Absolute tolerance for coefficient constraints and relations.
    pub relation_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            null_tol: 1e-10,
            degeneracy_tol: 1e-12,
            relation_tol: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn new(null_tol: f64, degeneracy_tol: f64, relation_tol: f64) -> Result<Self> {
        let t = Self {
            null_tol,
            degeneracy_tol,
            relation_tol,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("null", self.null_tol),
            ("degeneracy", self.degeneracy_tol),
            ("relation", self.relation_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} tolerance must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Parses overrides of the form `null=1e-9,degeneracy=1e-13,relation=1e-9`.
    /// Keys not mentioned keep their defaults.
    pub fn parse_overrides(spec: &str) -> Result<Self> {
        let mut t = Self::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("tolerance override `{part}` is not key=value"))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::InvalidInput(format!("tolerance `{key}` has non-numeric value `{value}`"))
            })?;
            match key.trim() {
                "null" => t.null_tol = value,
                "degeneracy" => t.degeneracy_tol = value,
                "relation" => t.relation_tol = value,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown tolerance key `{other}`"
                    )))
                }
            }
        }
        t.validate()?;
        Ok(t)
    }

    /// Defaults, overridden by the `ISOWEIER_TOL` environment variable when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var("ISOWEIER_TOL") {
            Ok(spec) => Self::parse_overrides(&spec),
            Err(_) => Ok(Self::default()),
        }
    }
}

pub fn inner(u: &AmbientVector, v: &AmbientVector, sig: Signature) -> Result<f64> {
    u.check_dim(sig)?;
    v.check_dim(sig)?;
    Ok(inner_unchecked(u, v, sig))
}

pub(crate) fn inner_unchecked(u: &AmbientVector, v: &AmbientVector, sig: Signature) -> f64 {
    sig.signs()
        .iter()
        .zip(u.coords().iter().zip(v.coords()))
        .map(|(s, (a, b))| s * a * b)
        .sum()
}

/// `|<v,v>| <= null_tol * max(1, |v|^2)`.
pub fn is_null(v: &AmbientVector, sig: Signature, tol: &Tolerances) -> Result<bool> {
    let q = inner(v, v, sig)?;
    Ok(q.abs() <= tol.null_tol * v.norm_sq().max(1.0))
}

/// `|<v,v>| / |v|^2`, or zero for the zero vector.
pub fn null_residual(v: &AmbientVector, sig: Signature) -> f64 {
    let n2 = v.norm_sq();
    if n2 == 0.0 {
        0.0
    } else {
        inner_unchecked(v, v, sig).abs() / n2
    }
}
