//! Forward map: spinors to null edges to lattice points.

use num_complex::Complex64;

use crate::dirac::SpinorField;
use crate::error::{EdgeDirection, EdgeId, Error, Result};
use crate::grid::{Grid, GridShape, Site};
use crate::metric::{null_residual, AmbientVector, Signature, Tolerances};

/// Edge vectors of a lattice: `F` along `n` on `N x (M+1)` sites, `G` along
/// `m` on `(N+1) x M` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    signature: Signature,
    shape: GridShape,
    f: Grid<AmbientVector>,
    g: Grid<AmbientVector>,
}

impl EdgeField {
    pub fn new(
        signature: Signature,
        shape: GridShape,
        f: Grid<AmbientVector>,
        g: Grid<AmbientVector>,
    ) -> Result<Self> {
        if f.width() != shape.n
            || f.height() != shape.m + 1
            || g.width() != shape.n + 1
            || g.height() != shape.m
        {
            return Err(Error::InvalidInput(format!(
                "edge grids do not match shape {shape}"
            )));
        }
        for (_, v) in f.iter().chain(g.iter()) {
            v.check_dim(signature)?;
        }
        Ok(Self {
            signature,
            shape,
            f,
            g,
        })
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn f(&self) -> &Grid<AmbientVector> {
        &self.f
    }

    pub fn g(&self) -> &Grid<AmbientVector> {
        &self.g
    }

    pub fn edge(&self, id: EdgeId) -> &AmbientVector {
        match id.direction {
            crate::error::EdgeDirection::N => &self.f[(id.site.n, id.site.m)],
            crate::error::EdgeDirection::M => &self.g[(id.site.n, id.site.m)],
        }
    }

    /// All edges, `F` first, each in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (EdgeId, &AmbientVector)> {
        self.f
            .iter()
            .map(|(s, v)| (EdgeId::f(s.n, s.m), v))
            .chain(self.g.iter().map(|(s, v)| (EdgeId::g(s.n, s.m), v)))
    }

    /// Largest relative difference between matching edges.
    pub fn max_relative_difference(&self, other: &EdgeField) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|((_, a), (_, b))| {
                let scale = a.norm().max(b.norm());
                if scale == 0.0 {
                    0.0
                } else {
                    (*a - *b).norm() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Lattice points `X(n, m)` over the whole rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSurface {
    signature: Signature,
    shape: GridShape,
    points: Grid<AmbientVector>,
}

impl DiscreteSurface {
    pub fn new(
        signature: Signature,
        shape: GridShape,
        points: Grid<AmbientVector>,
    ) -> Result<Self> {
        if points.width() != shape.n + 1 || points.height() != shape.m + 1 {
            return Err(Error::InvalidInput(format!(
                "point grid does not match shape {shape}"
            )));
        }
        for (site, p) in points.iter() {
            p.check_dim(signature)?;
            if !p.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite point at {site}")));
            }
        }
        Ok(Self {
            signature,
            shape,
            points,
        })
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn points(&self) -> &Grid<AmbientVector> {
        &self.points
    }

    pub fn at(&self, n: usize, m: usize) -> &AmbientVector {
        &self.points[(n, m)]
    }

    /// The two points joined by an edge.
    pub fn endpoints(&self, id: EdgeId) -> (&AmbientVector, &AmbientVector) {
        let Site { n, m } = id.site;
        match id.direction {
            EdgeDirection::N => (&self.points[(n, m)], &self.points[(n + 1, m)]),
            EdgeDirection::M => (&self.points[(n, m)], &self.points[(n, m + 1)]),
        }
    }

    pub fn base(&self) -> AmbientVector {
        self.points[(0, 0)]
    }

    pub fn translated(&self, by: &AmbientVector) -> Self {
        Self {
            signature: self.signature,
            shape: self.shape,
            points: self.points.map(|p| *p + *by),
        }
    }

    /// Replaces one point; used to plant defects.
    pub fn set_point(&mut self, n: usize, m: usize, p: AmbientVector) -> Result<()> {
        p.check_dim(self.signature)?;
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite point at ({n}, {m})"
            )));
        }
        if self.points.get(n, m).is_none() {
            return Err(Error::InvalidInput(format!(
                "site ({n}, {m}) is outside {}",
                self.shape
            )));
        }
        self.points[(n, m)] = p;
        Ok(())
    }
}

/// The pointwise quadratic map from one spinor component set to an edge.
pub fn edge_vector(sig: Signature, z: [Complex64; 2]) -> AmbientVector {
    let [a, b] = z;
    match sig {
        Signature::R21 => {
            let sq = a * a;
            AmbientVector::from_array3([sq.re, -sq.im, a.norm_sqr()])
        }
        Signature::R31 => {
            let cross = a * b.conj();
            let (na, nb) = (a.norm_sqr(), b.norm_sqr());
            AmbientVector::from_array4([cross.re, -cross.im, 0.5 * (na - nb), 0.5 * (na + nb)])
        }
        Signature::R22 => {
            let prod = a * b;
            let cross = a * b.conj();
            AmbientVector::from_array4([prod.re, -prod.im, cross.re, -cross.im])
        }
    }
}

pub fn edges_from_spinors(s: &SpinorField) -> EdgeField {
    let (sig, shape) = (s.signature(), s.shape());
    let f = Grid::from_fn(shape.n, shape.m + 1, |n, m| {
        edge_vector(sig, s.at(n, m).phi)
    });
    let g = Grid::from_fn(shape.n + 1, shape.m, |n, m| {
        edge_vector(sig, s.at(n, m).psi)
    });
    EdgeField {
        signature: sig,
        shape,
        f,
        g,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotropyReport {
    /// Largest `|<v,v>| / |v|^2` over all edges.
    pub max_residual: f64,
    pub worst: Option<EdgeId>,
    pub failures: Vec<EdgeId>,
    /// Zero edges: null, but unusable for reconstruction.
    pub degenerate: Vec<EdgeId>,
    pub passed: bool,
}

pub fn check_isotropy(e: &EdgeField, tol: &Tolerances) -> IsotropyReport {
    isotropy_with(e, tol, |_| 0.0)
}

/// Isotropy of the edges of a stored surface. An edge read off two rounded
/// points carries an error of about `eps (|a| + |b|)`, which the null test
/// accepts on top of `null_tol`; see [`rounding_allowance`].
pub fn check_surface_isotropy(s: &DiscreteSurface, tol: &Tolerances) -> IsotropyReport {
    isotropy_with(&extract_edges(s), tol, |id| {
        let (a, b) = s.endpoints(id);
        rounding_allowance(a, b)
    })
}

/// Bound on the relative null residual `|<v,v>| / |v|^2` of `v = b - a`
/// caused by rounding `a` and `b` alone: `|<v,v>|` moves by at most
/// `2 |v| |dv|` with `|dv| <= eps (|a| + |b|)`.
pub fn rounding_allowance(a: &AmbientVector, b: &AmbientVector) -> f64 {
    let v = (*b - *a).norm();
    if v == 0.0 {
        0.0
    } else {
        2.0 * f64::EPSILON * (a.norm() + b.norm()) / v
    }
}

fn isotropy_with(
    e: &EdgeField,
    tol: &Tolerances,
    allowance: impl Fn(EdgeId) -> f64,
) -> IsotropyReport {
    let mut report = IsotropyReport {
        max_residual: 0.0,
        worst: None,
        failures: Vec::new(),
        degenerate: Vec::new(),
        passed: true,
    };
    for (id, v) in e.iter() {
        if v.norm_sq() == 0.0 {
            report.degenerate.push(id);
            continue;
        }
        let r = null_residual(v, e.signature);
        if !(r <= report.max_residual) {
            report.max_residual = r;
            report.worst = Some(id);
        }
        if !(r <= tol.null_tol + allowance(id)) {
            report.failures.push(id);
        }
    }
    report.passed = report.failures.is_empty();
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// Largest plaquette residual relative to the plaquette's edge scale.
    pub max_residual: f64,
    pub worst: Option<Site>,
    pub failures: Vec<Site>,
    pub passed: bool,
}

fn plaquette_residual(e: &EdgeField, n: usize, m: usize) -> f64 {
    let (f0, f1) = (e.f[(n, m)], e.f[(n, m + 1)]);
    let (g0, g1) = (e.g[(n, m)], e.g[(n + 1, m)]);
    let r = (f1 - f0 - g1 + g0).norm();
    let scale = [f0, f1, g0, g1]
        .iter()
        .map(AmbientVector::norm)
        .fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        r / scale
    }
}

pub fn check_consistency(e: &EdgeField, tol: &Tolerances) -> ConsistencyReport {
    consistency_with(e, tol, |_, _| 0.0)
}

/// Consistency of the edges of a stored surface. These close up exactly
/// apart from rounding of the four corners, which is allowed for on top of
/// `null_tol`.
pub fn check_surface_consistency(s: &DiscreteSurface, tol: &Tolerances) -> ConsistencyReport {
    let e = extract_edges(s);
    consistency_with(&e, tol, |n, m| {
        let corners = [
            s.at(n, m),
            s.at(n + 1, m),
            s.at(n, m + 1),
            s.at(n + 1, m + 1),
        ];
        let size = corners.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let scale = [e.f[(n, m)], e.f[(n, m + 1)], e.g[(n, m)], e.g[(n + 1, m)]]
            .iter()
            .map(AmbientVector::norm)
            .fold(0.0, f64::max);
        if scale == 0.0 {
            0.0
        } else {
            8.0 * f64::EPSILON * size / scale
        }
    })
}

fn consistency_with(
    e: &EdgeField,
    tol: &Tolerances,
    allowance: impl Fn(usize, usize) -> f64,
) -> ConsistencyReport {
    let mut report = ConsistencyReport {
        max_residual: 0.0,
        worst: None,
        failures: Vec::new(),
        passed: true,
    };
    for m in 0..e.shape.m {
        for n in 0..e.shape.n {
            let r = plaquette_residual(e, n, m);
            if !(r <= report.max_residual) {
                report.max_residual = r;
                report.worst = Some(Site::new(n, m));
            }
            if !(r <= tol.null_tol + allowance(n, m)) {
                report.failures.push(Site::new(n, m));
            }
        }
    }
    report.passed = report.failures.is_empty();
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// False for `R22`, where no time-like coordinate is singled out.
    pub applicable: bool,
    pub min_increment: f64,
    pub worst: Option<EdgeId>,
    pub failures: Vec<EdgeId>,
    pub passed: bool,
}

/// Strict increase of the time-like coordinate along every edge (`R21`, `R31`).
pub fn check_monotonicity(e: &EdgeField) -> MonotonicityReport {
    let Some(axis) = e.signature.monotone_axis() else {
        return MonotonicityReport {
            applicable: false,
            min_increment: f64::NAN,
            worst: None,
            failures: Vec::new(),
            passed: true,
        };
    };
    let mut report = MonotonicityReport {
        applicable: true,
        min_increment: f64::INFINITY,
        worst: None,
        failures: Vec::new(),
        passed: true,
    };
    for (id, v) in e.iter() {
        let t = v.coords()[axis];
        if !(t >= report.min_increment) {
            report.min_increment = t;
            report.worst = Some(id);
        }
        if !(t > 0.0) {
            report.failures.push(id);
        }
    }
    report.passed = report.failures.is_empty();
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccumulationPath {
    /// Along row `m = 0`, then up each column.
    RowFirst,
    /// Along column `n = 0`, then across each row.
    ColumnFirst,
}

/// Integrates a consistent edge field from `X(0,0) = base`, along row 0 then up each column.
pub fn accumulate(e: &EdgeField, base: AmbientVector, tol: &Tolerances) -> Result<DiscreteSurface> {
    accumulate_along(e, base, AccumulationPath::RowFirst, tol)
}

pub fn accumulate_along(
    e: &EdgeField,
    base: AmbientVector,
    path: AccumulationPath,
    tol: &Tolerances,
) -> Result<DiscreteSurface> {
    base.check_dim(e.signature)?;
    let report = check_consistency(e, tol);
    if !report.passed {
        return Err(Error::Inconsistent {
            residual: report.max_residual,
            site: report.worst.unwrap_or(Site::new(0, 0)),
        });
    }
    let shape = e.shape;
    let mut points = Grid::filled(shape.n + 1, shape.m + 1, base);
    match path {
        AccumulationPath::RowFirst => {
            for n in 0..shape.n {
                points[(n + 1, 0)] = points[(n, 0)] + e.f[(n, 0)];
            }
            for n in 0..=shape.n {
                for m in 0..shape.m {
                    points[(n, m + 1)] = points[(n, m)] + e.g[(n, m)];
                }
            }
        }
        AccumulationPath::ColumnFirst => {
            for m in 0..shape.m {
                points[(0, m + 1)] = points[(0, m)] + e.g[(0, m)];
            }
            for m in 0..=shape.m {
                for n in 0..shape.n {
                    points[(n + 1, m)] = points[(n, m)] + e.f[(n, m)];
                }
            }
        }
    }
    Ok(DiscreteSurface {
        signature: e.signature,
        shape,
        points,
    })
}

/// Exact first differences of the lattice points.
pub fn extract_edges(s: &DiscreteSurface) -> EdgeField {
    let shape = s.shape;
    let p = &s.points;
    let f = Grid::from_fn(shape.n, shape.m + 1, |n, m| p[(n + 1, m)] - p[(n, m)]);
    let g = Grid::from_fn(shape.n + 1, shape.m, |n, m| p[(n, m + 1)] - p[(n, m)]);
    EdgeField {
        signature: s.signature,
        shape,
        f,
        g,
    }
}

/// Largest pointwise distance between two surfaces, relative to the edge
/// length accumulated from the base point of `reference` along row 0 and
/// then up each column.
pub fn relative_deviation(reference: &DiscreteSurface, other: &DiscreteSurface) -> Result<f64> {
    if reference.shape != other.shape || reference.signature != other.signature {
        return Err(Error::InvalidInput(
            "surfaces differ in shape or signature".into(),
        ));
    }
    let e = extract_edges(reference);
    let shape = reference.shape;
    let mut row = vec![reference.base().norm(); shape.n + 1];
    for n in 0..shape.n {
        row[n + 1] = row[n] + e.f[(n, 0)].norm();
    }
    let mut worst = 0.0f64;
    for (n, start) in row.iter().enumerate() {
        let mut scale = *start;
        for m in 0..=shape.m {
            if m > 0 {
                scale += e.g[(n, m - 1)].norm();
            }
            let d = (reference.points[(n, m)] - other.points[(n, m)]).norm();
            worst = worst.max(if scale > 0.0 { d / scale } else { d });
        }
    }
    Ok(worst)
}
