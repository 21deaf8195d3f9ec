//! JSON documents for lattice data, OBJ mesh export and report tables.
//!
//! Every document carries a `format` tag and `version`. Floats are written
//! in shortest round-trip form, so `read(write(x)) == x` bit for bit and
//! `write(read(text)) == text` for any text this module produced.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuum::ConvergenceReport;
use crate::dirac::{validate_coefficients, CoefficientField, Coefficients, Spinor, SpinorField};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridShape};
use crate::metric::{AmbientVector, Signature, Tolerances};
use crate::reconstruct::{Gauge, ReconstructionResult, Residuals};
use crate::weierstrass::DiscreteSurface;

pub const VERSION: u32 = 1;
pub const SURFACE_FORMAT: &str = "isoweier-surface";
pub const SPINOR_FORMAT: &str = "isoweier-spinors";
pub const COEFFICIENT_FORMAT: &str = "isoweier-coefficients";
pub const RECONSTRUCTION_FORMAT: &str = "isoweier-reconstruction";

type C2 = [f64; 2];

fn c2(z: Complex64) -> C2 {
    [z.re, z.im]
}

fn from_c2(v: C2) -> Complex64 {
    Complex64::new(v[0], v[1])
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!(
            "expected format \"{expected}\", found \"{format}\""
        )));
    }
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported {expected} version {version}, expected {VERSION}"
        )));
    }
    Ok(())
}

fn shape_of(s: [usize; 2]) -> Result<GridShape> {
    GridShape::new(s[0], s[1]).map_err(|e| Error::Format(e.to_string()))
}

fn check_finite<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "{what} contains a non-finite number"
        )))
    }
}

fn check_len(what: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!(
            "{what} has {found} entries, expected {expected}"
        )));
    }
    Ok(())
}

fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string(doc)?;
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------- surfaces

#[derive(Serialize, Deserialize)]
struct SurfaceDoc {
    format: String,
    version: u32,
    signature: Signature,
    shape: [usize; 2],
    base: Vec<f64>,
    points: Vec<Vec<f64>>,
}

fn point_from(sig: Signature, what: &str, coords: &[f64]) -> Result<AmbientVector> {
    if coords.len() != sig.dim() {
        return Err(Error::Format(format!(
            "{what} has {} coordinates, {sig} needs {}",
            coords.len(),
            sig.dim()
        )));
    }
    check_finite(what, coords)?;
    AmbientVector::new(coords)
}

pub fn write_surface(s: &DiscreteSurface) -> Result<String> {
    let points: Vec<Vec<f64>> = s
        .points()
        .as_slice()
        .iter()
        .map(|p| p.coords().to_vec())
        .collect();
    check_finite("surface", points.iter().flatten())?;
    to_json(&SurfaceDoc {
        format: SURFACE_FORMAT.into(),
        version: VERSION,
        signature: s.signature(),
        shape: [s.shape().n, s.shape().m],
        base: s.base().coords().to_vec(),
        points,
    })
}

pub fn read_surface(text: &str) -> Result<DiscreteSurface> {
    let doc: SurfaceDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, SURFACE_FORMAT)?;
    let (sig, shape) = (doc.signature, shape_of(doc.shape)?);
    check_len("points", doc.points.len(), shape.site_count())?;
    let points = doc
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| point_from(sig, &format!("point {i}"), p))
        .collect::<Result<Vec<_>>>()?;
    let base = point_from(sig, "base", &doc.base)?;
    if base != points[0] {
        return Err(Error::Format(
            "base does not equal the point at (0, 0)".into(),
        ));
    }
    DiscreteSurface::new(
        sig,
        shape,
        Grid::from_vec(shape.n + 1, shape.m + 1, points)?,
    )
}

// ---------------------------------------------------------------- spinors

#[derive(Serialize, Deserialize)]
struct SpinorBody {
    /// Per site, one `[re, im]` per component.
    phi: Vec<Vec<C2>>,
    psi: Vec<Vec<C2>>,
}

impl SpinorBody {
    fn from_field(f: &SpinorField) -> Self {
        let k = f.signature().spinor_pairs();
        let take = |z: &[Complex64; 2]| z[..k].iter().copied().map(c2).collect::<Vec<_>>();
        let values = f.values().as_slice();
        Self {
            phi: values.iter().map(|s| take(&s.phi)).collect(),
            psi: values.iter().map(|s| take(&s.psi)).collect(),
        }
    }

    fn into_field(self, sig: Signature, shape: GridShape) -> Result<SpinorField> {
        let k = sig.spinor_pairs();
        check_len("phi", self.phi.len(), shape.site_count())?;
        check_len("psi", self.psi.len(), shape.site_count())?;
        let component = |what: &str, v: &[C2]| -> Result<[Complex64; 2]> {
            check_len(what, v.len(), k)?;
            check_finite(what, v.iter().flatten())?;
            let mut out = [Complex64::new(0.0, 0.0); 2];
            for (o, z) in out.iter_mut().zip(v) {
                *o = from_c2(*z);
            }
            Ok(out)
        };
        let values = self
            .phi
            .iter()
            .zip(&self.psi)
            .map(|(phi, psi)| Ok(Spinor::pair(component("phi", phi)?, component("psi", psi)?)))
            .collect::<Result<Vec<_>>>()?;
        SpinorField::new(
            sig,
            shape,
            Grid::from_vec(shape.n + 1, shape.m + 1, values)?,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct SpinorDoc {
    format: String,
    version: u32,
    signature: Signature,
    shape: [usize; 2],
    #[serde(flatten)]
    body: SpinorBody,
}

pub fn write_spinors(f: &SpinorField) -> Result<String> {
    let body = SpinorBody::from_field(f);
    check_finite(
        "spinors",
        body.phi.iter().chain(&body.psi).flatten().flatten(),
    )?;
    to_json(&SpinorDoc {
        format: SPINOR_FORMAT.into(),
        version: VERSION,
        signature: f.signature(),
        shape: [f.shape().n, f.shape().m],
        body,
    })
}

pub fn read_spinors(text: &str) -> Result<SpinorField> {
    let doc: SpinorDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, SPINOR_FORMAT)?;
    doc.body.into_field(doc.signature, shape_of(doc.shape)?)
}

// ---------------------------------------------------------------- coefficients

/// A coefficient entry: a plain number for the real cases, `[re, im]` for `R31`.
#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(untagged)]
enum Scalar {
    Real(f64),
    Complex(C2),
}

#[derive(Serialize, Deserialize)]
struct Checks {
    constraint_residual: f64,
    valid: bool,
}

#[derive(Serialize, Deserialize)]
struct CoefficientBody {
    values: Vec<Vec<Scalar>>,
    checks: Checks,
}

fn scalars(c: &Coefficients) -> Vec<Scalar> {
    match *c {
        Coefficients::R21 { alpha, beta } => vec![Scalar::Real(alpha), Scalar::Real(beta)],
        Coefficients::R31 { alpha, beta } => {
            vec![Scalar::Complex(c2(alpha)), Scalar::Complex(c2(beta))]
        }
        Coefficients::R22 {
            alpha,
            beta,
            gamma,
            delta,
        } => {
            vec![
                Scalar::Real(alpha),
                Scalar::Real(beta),
                Scalar::Real(gamma),
                Scalar::Real(delta),
            ]
        }
    }
}

fn coefficients_from(sig: Signature, v: &[Scalar]) -> Result<Coefficients> {
    let real = |s: &Scalar| match *s {
        Scalar::Real(x) if x.is_finite() => Ok(x),
        _ => Err(Error::Format(format!(
            "{sig} coefficients must be finite real numbers"
        ))),
    };
    let complex = |s: &Scalar| match *s {
        Scalar::Complex(z) if z[0].is_finite() && z[1].is_finite() => Ok(from_c2(z)),
        _ => Err(Error::Format(
            "R31 coefficients must be finite [re, im] pairs".into(),
        )),
    };
    match sig {
        Signature::R21 => {
            check_len("coefficient entry", v.len(), 2)?;
            Ok(Coefficients::R21 {
                alpha: real(&v[0])?,
                beta: real(&v[1])?,
            })
        }
        Signature::R31 => {
            check_len("coefficient entry", v.len(), 2)?;
            Ok(Coefficients::R31 {
                alpha: complex(&v[0])?,
                beta: complex(&v[1])?,
            })
        }
        Signature::R22 => {
            check_len("coefficient entry", v.len(), 4)?;
            Ok(Coefficients::R22 {
                alpha: real(&v[0])?,
                beta: real(&v[1])?,
                gamma: real(&v[2])?,
                delta: real(&v[3])?,
            })
        }
    }
}

impl CoefficientBody {
    fn from_field(c: &CoefficientField) -> Result<Self> {
        let values: Vec<Vec<Scalar>> = c.values().as_slice().iter().map(scalars).collect();
        let flat = values.iter().flatten().flat_map(|s| match *s {
            Scalar::Real(x) => vec![x],
            Scalar::Complex(z) => z.to_vec(),
        });
        if !flat.into_iter().all(f64::is_finite) {
            return Err(Error::Format(
                "coefficients contain a non-finite number".into(),
            ));
        }
        let report = validate_coefficients(c, &Tolerances::default());
        Ok(Self {
            values,
            checks: Checks {
                constraint_residual: report.max_residual,
                valid: report.passed,
            },
        })
    }

    fn into_field(self, sig: Signature, shape: GridShape) -> Result<CoefficientField> {
        check_len("values", self.values.len(), shape.site_count())?;
        let values = self
            .values
            .iter()
            .map(|v| coefficients_from(sig, v))
            .collect::<Result<Vec<_>>>()?;
        let field = CoefficientField::new(
            sig,
            shape,
            Grid::from_vec(shape.n + 1, shape.m + 1, values)?,
        )?;
        let report = validate_coefficients(&field, &Tolerances::default());
        if self.checks.valid && !report.passed {
            return Err(Error::Format(format!(
                "file is marked valid but the constraint residual is {:e}",
                report.max_residual
            )));
        }
        Ok(field)
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientDoc {
    format: String,
    version: u32,
    signature: Signature,
    shape: [usize; 2],
    #[serde(flatten)]
    body: CoefficientBody,
}

pub fn write_coefficients(c: &CoefficientField) -> Result<String> {
    to_json(&CoefficientDoc {
        format: COEFFICIENT_FORMAT.into(),
        version: VERSION,
        signature: c.signature(),
        shape: [c.shape().n, c.shape().m],
        body: CoefficientBody::from_field(c)?,
    })
}

pub fn read_coefficients(text: &str) -> Result<CoefficientField> {
    let doc: CoefficientDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, COEFFICIENT_FORMAT)?;
    doc.body.into_field(doc.signature, shape_of(doc.shape)?)
}

// ---------------------------------------------------------------- reconstruction results

#[derive(Serialize, Deserialize)]
struct GaugeBody {
    phi: Vec<C2>,
    psi: Vec<C2>,
}

#[derive(Serialize, Deserialize)]
struct ResidualBody {
    relations: f64,
    lambda: f64,
    constraint: f64,
    edge_round_trip: f64,
}

#[derive(Serialize, Deserialize)]
struct ReconstructionDoc {
    format: String,
    version: u32,
    signature: Signature,
    shape: [usize; 2],
    base: Vec<f64>,
    spinors: SpinorBody,
    coefficients: CoefficientBody,
    /// `lambda` before gauge fixing on the `N x M` coefficient sites, row-major.
    lambda: Vec<C2>,
    gauge: GaugeBody,
    residuals: ResidualBody,
}

pub fn write_reconstruction(r: &ReconstructionResult) -> Result<String> {
    let shape = r.spinors.shape();
    let gauge = GaugeBody {
        phi: r.gauge.phi().as_slice().iter().copied().map(c2).collect(),
        psi: r.gauge.psi().as_slice().iter().copied().map(c2).collect(),
    };
    let lambda: Vec<C2> = r
        .lambda_before_fix
        .as_slice()
        .iter()
        .copied()
        .map(c2)
        .collect();
    let spinors = SpinorBody::from_field(&r.spinors);
    let res = &r.residuals;
    let finite = spinors
        .phi
        .iter()
        .chain(&spinors.psi)
        .flatten()
        .flatten()
        .copied()
        .chain(
            lambda
                .iter()
                .chain(&gauge.phi)
                .chain(&gauge.psi)
                .flatten()
                .copied(),
        )
        .chain(r.base.coords().iter().copied())
        .chain([
            res.relations,
            res.lambda,
            res.constraint,
            res.edge_round_trip,
        ])
        .all(f64::is_finite);
    if !finite {
        return Err(Error::Format(
            "reconstruction contains a non-finite number".into(),
        ));
    }
    to_json(&ReconstructionDoc {
        format: RECONSTRUCTION_FORMAT.into(),
        version: VERSION,
        signature: r.spinors.signature(),
        shape: [shape.n, shape.m],
        base: r.base.coords().to_vec(),
        spinors,
        coefficients: CoefficientBody::from_field(&r.coefficients)?,
        lambda,
        gauge,
        residuals: ResidualBody {
            relations: res.relations,
            lambda: res.lambda,
            constraint: res.constraint,
            edge_round_trip: res.edge_round_trip,
        },
    })
}

pub fn read_reconstruction(text: &str) -> Result<ReconstructionResult> {
    let doc: ReconstructionDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, RECONSTRUCTION_FORMAT)?;
    let (sig, shape) = (doc.signature, shape_of(doc.shape)?);
    let spinors = doc.spinors.into_field(sig, shape)?;
    let coefficients = doc.coefficients.into_field(sig, shape)?;
    check_len("lambda", doc.lambda.len(), shape.n * shape.m)?;
    check_len("gauge.phi", doc.gauge.phi.len(), shape.site_count())?;
    check_len("gauge.psi", doc.gauge.psi.len(), shape.site_count())?;
    check_finite("lambda", doc.lambda.iter().flatten())?;
    check_finite(
        "gauge",
        doc.gauge.phi.iter().chain(&doc.gauge.psi).flatten(),
    )?;
    let grid = |v: &[C2], w: usize, h: usize| {
        Grid::from_vec(w, h, v.iter().copied().map(from_c2).collect())
    };
    let gauge = Gauge::new(
        sig,
        grid(&doc.gauge.phi, shape.n + 1, shape.m + 1)?,
        grid(&doc.gauge.psi, shape.n + 1, shape.m + 1)?,
    )?;
    let r = &doc.residuals;
    check_finite(
        "residuals",
        [&r.relations, &r.lambda, &r.constraint, &r.edge_round_trip],
    )?;
    Ok(ReconstructionResult {
        spinors,
        coefficients,
        lambda_before_fix: grid(&doc.lambda, shape.n, shape.m)?,
        gauge,
        residuals: Residuals {
            relations: r.relations,
            lambda: r.lambda,
            constraint: r.constraint,
            edge_round_trip: r.edge_round_trip,
        },
        base: point_from(sig, "base", &doc.base)?,
    })
}

// ---------------------------------------------------------------- files

fn save(path: &Path, text: Result<String>) -> Result<()> {
    fs::write(path, text?)?;
    Ok(())
}

pub fn save_surface(path: impl AsRef<Path>, s: &DiscreteSurface) -> Result<()> {
    save(path.as_ref(), write_surface(s))
}

pub fn load_surface(path: impl AsRef<Path>) -> Result<DiscreteSurface> {
    read_surface(&fs::read_to_string(path)?)
}

pub fn save_spinors(path: impl AsRef<Path>, f: &SpinorField) -> Result<()> {
    save(path.as_ref(), write_spinors(f))
}

pub fn load_spinors(path: impl AsRef<Path>) -> Result<SpinorField> {
    read_spinors(&fs::read_to_string(path)?)
}

pub fn save_coefficients(path: impl AsRef<Path>, c: &CoefficientField) -> Result<()> {
    save(path.as_ref(), write_coefficients(c))
}

pub fn load_coefficients(path: impl AsRef<Path>) -> Result<CoefficientField> {
    read_coefficients(&fs::read_to_string(path)?)
}

pub fn save_reconstruction(path: impl AsRef<Path>, r: &ReconstructionResult) -> Result<()> {
    save(path.as_ref(), write_reconstruction(r))
}

pub fn load_reconstruction(path: impl AsRef<Path>) -> Result<ReconstructionResult> {
    read_reconstruction(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------- OBJ

/// Map from ambient coordinates to the three OBJ coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// Only for 3-dimensional surfaces.
    Identity,
    /// Omit one coordinate (0-based) of a 4-dimensional surface.
    Drop(usize),
    /// A `3 x dim` matrix, row-major.
    Linear(Vec<f64>),
}

impl FromStr for Projection {
    type Err = Error;

    /// `identity`, `drop:K` with a 1-based `K`, or `linear:` followed by
    /// comma-separated matrix entries.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: String| Error::InvalidInput(format!("projection \"{s}\": {why}"));
        let s = s.trim();
        if s == "identity" {
            return Ok(Projection::Identity);
        }
        if let Some(k) = s.strip_prefix("drop:") {
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| bad("drop index must be a positive integer".into()))?;
            if k == 0 {
                return Err(bad("drop index is 1-based".into()));
            }
            return Ok(Projection::Drop(k - 1));
        }
        if let Some(rest) = s.strip_prefix("linear:") {
            let m = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            return Ok(Projection::Linear(m));
        }
        Err(bad("expected identity, drop:K or linear:<entries>".into()))
    }
}

impl Projection {
    /// Checks the projection against a surface dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Projection::Identity if dim == 3 => Ok(()),
            Projection::Identity => Err(Error::InvalidInput(format!(
                "a {dim}-dimensional surface needs a projection, e.g. drop:4"
            ))),
            Projection::Drop(k) if dim == 4 && *k < 4 => Ok(()),
            Projection::Drop(k) if dim == 4 => Err(Error::InvalidInput(format!(
                "drop index {} exceeds 4",
                k + 1
            ))),
            Projection::Drop(_) => Err(Error::InvalidInput(format!(
                "drop applies to 4-dimensional surfaces, not {dim}"
            ))),
            Projection::Linear(a) => {
                if a.len() != 3 * dim {
                    return Err(Error::InvalidInput(format!(
                        "linear projection needs {} entries, got {}",
                        3 * dim,
                        a.len()
                    )));
                }
                if !a.iter().all(|x| x.is_finite()) {
                    return Err(Error::InvalidInput(
                        "linear projection has a non-finite entry".into(),
                    ));
                }
                let row = |i: usize| &a[i * dim..(i + 1) * dim];
                let dot =
                    |i: usize, j: usize| row(i).iter().zip(row(j)).map(|(x, y)| x * y).sum::<f64>();
                let g: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| dot(i, j)));
                let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
                    - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
                    + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
                // Hadamard: det(A A^T) <= product of squared row norms
                let scale = g[0][0] * g[1][1] * g[2][2];
                if !(det > 1e-12 * scale) {
                    return Err(Error::RankDeficientProjection);
                }
                Ok(())
            }
        }
    }

    fn apply(&self, v: &[f64]) -> [f64; 3] {
        match self {
            Projection::Identity => [v[0], v[1], v[2]],
            Projection::Drop(k) => {
                let mut it = v
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i != k)
                    .map(|(_, x)| *x);
                std::array::from_fn(|_| it.next().unwrap_or(0.0))
            }
            Projection::Linear(a) => {
                let d = v.len();
                std::array::from_fn(|i| {
                    a[i * d..(i + 1) * d]
                        .iter()
                        .zip(v)
                        .map(|(x, y)| x * y)
                        .sum()
                })
            }
        }
    }
}

/// Quad mesh with one vertex per site and one face per plaquette, 1-based.
pub fn export_obj(s: &DiscreteSurface, proj: &Projection) -> Result<String> {
    proj.validate(s.signature().dim())?;
    let shape = s.shape();
    let mut out = String::new();
    for p in s.points().as_slice() {
        let [x, y, z] = proj.apply(p.coords());
        writeln!(out, "v {x} {y} {z}").expect("writing to a String");
    }
    let idx = |n: usize, m: usize| m * (shape.n + 1) + n + 1;
    for m in 0..shape.m {
        for n in 0..shape.n {
            writeln!(
                out,
                "f {} {} {} {}",
                idx(n, m),
                idx(n + 1, m),
                idx(n + 1, m + 1),
                idx(n, m + 1)
            )
            .expect("writing to a String");
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- reports

fn order_cell(o: Option<f64>) -> String {
    o.map_or_else(|| "-".to_string(), |o| format!("{o:.4}"))
}

/// Aligned text table: one row per level.
pub fn convergence_table(r: &ConvergenceReport) -> String {
    let mut rows = vec![[
        "h".to_string(),
        "max_error".into(),
        "order".into(),
        "step_error/h^2".into(),
    ]];
    for (i, (l, ratio)) in r.levels.iter().zip(r.truncation_ratios()).enumerate() {
        let order = if i == 0 {
            "-".to_string()
        } else {
            order_cell(r.orders[i - 1])
        };
        rows.push([
            format!("{:.6e}", l.h),
            format!("{:.6e}", l.max_error),
            order,
            format!("{ratio:.6e}"),
        ]);
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        writeln!(out, "{}", cells.join("  ")).expect("writing to a String");
    }
    out
}

pub fn convergence_csv(r: &ConvergenceReport) -> String {
    let mut out = String::from("h,max_error,order,step_error\n");
    for (i, l) in r.levels.iter().enumerate() {
        let order = if i == 0 {
            String::new()
        } else {
            r.orders[i - 1].map_or(String::new(), |o| o.to_string())
        };
        writeln!(out, "{},{},{},{}", l.h, l.max_error, order, l.step_error)
            .expect("writing to a String");
    }
    out
}
