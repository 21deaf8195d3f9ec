//! Inverse map: from an isotropic lattice back to spinors and Dirac coefficients.
//!
//! The pipeline is
//!
//! 1. [`recover_spinors`]: factor every edge into spinor values,
//! 2. [`compute_coefficients`]: solve the generalized system site by site,
//! 3. [`verify_relations`]: check the quadratic identities and read off `lambda`,
//! 4. [`fix_gauge`]: apply a local gauge making `lambda = 1`.
//!
//! [`reconstruct`] runs all of them and completes the last row and column.
//!
//! Spinors are only determined where their edge exists: `phi` for `n < N`
//! and `psi` for `m < M`. Coefficients are determined on the `N x M` sites
//! having both successors.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dirac::{CoefficientField, Coefficients, DiracQuad, Spinor, SpinorField};
use crate::error::{EdgeId, Error, Result, Stage};
use crate::grid::{Grid, GridShape, Site};
use crate::metric::{null_residual, AmbientVector, Signature, Tolerances};
use crate::weierstrass::{edges_from_spinors, extract_edges, rounding_allowance, DiscreteSurface};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Why a single edge cannot be factored.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FactorError {
    #[error("edge is not null (relative residual {0:e})")]
    NotNull(f64),
    #[error("time-like component {0:e} is not positive")]
    NotFutureDirected(f64),
    #[error("zero edge")]
    Zero,
    #[error(transparent)]
    Dimension(#[from] DimensionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("expected {expected} coordinates, found {found}")]
pub struct DimensionError {
    pub expected: usize,
    pub found: usize,
}

impl FactorError {
    fn at(self, edge: EdgeId) -> Error {
        match self {
            FactorError::NotNull(residual) => Error::NotIsotropic { edge, residual },
            FactorError::NotFutureDirected(value) => Error::Monotonicity { edge, value },
            FactorError::Zero => Error::DegenerateEdge { edge },
            FactorError::Dimension(d) => Error::DimensionMismatch {
                expected: d.expected,
                found: d.found,
            },
        }
    }
}

/// Splits a null vector into spinor values whose edge is `v`.
///
/// The result is one representative of the gauge class: `R21` takes the
/// principal square root, `R31` makes the larger of the two components
/// real and positive, and `R22` gives both components the same modulus.
pub fn factor_edge(
    v: &AmbientVector,
    sig: Signature,
    tol: &Tolerances,
) -> Result<[Complex64; 2], FactorError> {
    factor(v, sig, tol.null_tol)
}

fn factor(v: &AmbientVector, sig: Signature, null_tol: f64) -> Result<[Complex64; 2], FactorError> {
    if v.dim() != sig.dim() {
        return Err(DimensionError {
            expected: sig.dim(),
            found: v.dim(),
        }
        .into());
    }
    let r = null_residual(v, sig);
    if !(r <= null_tol) {
        return Err(FactorError::NotNull(r));
    }
    if !(v.norm_sq() > f64::MIN_POSITIVE) {
        return Err(FactorError::Zero);
    }
    if let Some(axis) = sig.monotone_axis() {
        let t = v.coords()[axis];
        if !(t > 0.0) {
            return Err(FactorError::NotFutureDirected(t));
        }
    }
    let x = v.coords();
    Ok(match sig {
        Signature::R21 => [
            Complex64::new(x[0], 0.0 - x[1]).sqrt(),
            Complex64::new(0.0, 0.0),
        ],
        Signature::R31 => {
            let plus = (x[3] + x[2]).max(0.0);
            let minus = (x[3] - x[2]).max(0.0);
            if plus >= minus {
                let p1 = plus.sqrt();
                [Complex64::new(p1, 0.0), Complex64::new(x[0], x[1]) / p1]
            } else {
                let p2 = minus.sqrt();
                [
                    Complex64::new(x[0], 0.0 - x[1]) / p2,
                    Complex64::new(p2, 0.0),
                ]
            }
        }
        Signature::R22 => {
            let a = Complex64::new(x[0], 0.0 - x[1]);
            let b = Complex64::new(x[2], 0.0 - x[3]);
            let r = (0.5 * (a.norm() + b.norm())).sqrt();
            let (arg_a, arg_b) = (a.arg(), b.arg());
            [
                Complex64::from_polar(r, 0.5 * (arg_a + arg_b)),
                Complex64::from_polar(r, 0.5 * (arg_a - arg_b)),
            ]
        }
    })
}

/// Factors every edge of `s`. Entries with no defining edge (`phi` at
/// `n = N`, `psi` at `m = M`) are left at zero.
///
/// The null test allows for the rounding of the stored endpoints, as in
/// [`crate::weierstrass::check_surface_isotropy`].
pub fn recover_spinors(s: &DiscreteSurface, tol: &Tolerances) -> Result<SpinorField> {
    let (sig, shape) = (s.signature(), s.shape());
    let edges = extract_edges(s);
    let mut values = Grid::filled(shape.n + 1, shape.m + 1, Spinor::default());
    for (id, v) in edges.iter() {
        let (a, b) = s.endpoints(id);
        let z = factor(v, sig, tol.null_tol + rounding_allowance(a, b)).map_err(|e| e.at(id))?;
        let site = &mut values[(id.site.n, id.site.m)];
        match id.direction {
            crate::error::EdgeDirection::N => site.phi = z,
            crate::error::EdgeDirection::M => site.psi = z,
        }
    }
    let field = SpinorField::new(sig, shape, values)?;
    if let Some((site, det)) = field.first_degenerate_site(tol) {
        return Err(Error::DegenerateSite {
            site,
            det,
            threshold: tol.degeneracy_tol,
        });
    }
    Ok(field)
}

/// Generalized coefficients on the `N x M` sites having both successors.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCoefficients {
    signature: Signature,
    shape: GridShape,
    values: Grid<[DiracQuad; 2]>,
}

impl RawCoefficients {
    pub fn new(
        signature: Signature,
        shape: GridShape,
        values: Grid<[DiracQuad; 2]>,
    ) -> Result<Self> {
        if values.width() != shape.n || values.height() != shape.m {
            return Err(Error::InvalidInput(format!(
                "raw coefficient grid is {}x{}, shape {shape} needs {}x{}",
                values.width(),
                values.height(),
                shape.n,
                shape.m
            )));
        }
        Ok(Self {
            signature,
            shape,
            values,
        })
    }

    /// The interior part of a full coefficient field.
    pub fn from_field(c: &CoefficientField) -> Self {
        let shape = c.shape();
        let values = Grid::from_fn(shape.n, shape.m, |n, m| c.at(n, m).generalized());
        Self {
            signature: c.signature(),
            shape,
            values,
        }
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &Grid<[DiracQuad; 2]> {
        &self.values
    }

    pub fn at(&self, n: usize, m: usize) -> &[DiracQuad; 2] {
        &self.values[(n, m)]
    }

    /// Largest entrywise difference over the component pairs in use.
    pub fn max_abs_diff(&self, other: &RawCoefficients) -> f64 {
        let pairs = self.signature.spinor_pairs();
        self.values
            .as_slice()
            .iter()
            .zip(other.values.as_slice())
            .flat_map(|(a, b)| (0..pairs).map(move |i| a[i].max_abs_diff(&b[i])))
            .fold(0.0, f64::max)
    }

    /// Reads the coefficients in the case's system form, assuming `lambda = 1`.
    fn system_form(&self, n: usize, m: usize) -> Coefficients {
        let [q1, _] = self.values[(n, m)];
        match self.signature {
            Signature::R21 => Coefficients::R21 {
                alpha: q1.alpha.re,
                beta: q1.beta.re,
            },
            Signature::R31 => Coefficients::R31 {
                alpha: q1.alpha,
                beta: q1.beta,
            },
            Signature::R22 => Coefficients::R22 {
                alpha: q1.alpha.re,
                beta: q1.beta.re,
                gamma: q1.gamma.re,
                delta: q1.delta.re,
            },
        }
    }
}

/// Solves `tau2 phi = alpha phi + beta psi`, `tau1 psi = gamma phi + delta psi`
/// pairing each equation with its conjugate (`R21`, `R22`) or with the
/// second component (`R31`).
fn solve_pair(
    det: Complex64,
    phi: (Complex64, Complex64),
    psi: (Complex64, Complex64),
    tau2_phi: (Complex64, Complex64),
    tau1_psi: (Complex64, Complex64),
) -> DiracQuad {
    // rows: (phi.0, psi.0) and (phi.1, psi.1)
    DiracQuad {
        alpha: (psi.1 * tau2_phi.0 - psi.0 * tau2_phi.1) / det,
        beta: (phi.0 * tau2_phi.1 - phi.1 * tau2_phi.0) / det,
        gamma: (psi.1 * tau1_psi.0 - psi.0 * tau1_psi.1) / det,
        delta: (phi.0 * tau1_psi.1 - phi.1 * tau1_psi.0) / det,
    }
}

fn require_real(q: DiracQuad, site: Site, tol: &Tolerances) -> Result<DiracQuad> {
    let imag = [q.alpha.im, q.beta.im, q.gamma.im, q.delta.im]
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    if !(imag <= tol.relation_tol) {
        return Err(Error::RelationFailure {
            site,
            residual: imag,
        });
    }
    Ok(DiracQuad::real(
        q.alpha.re, q.beta.re, q.gamma.re, q.delta.re,
    ))
}

pub fn compute_coefficients(sp: &SpinorField, tol: &Tolerances) -> Result<RawCoefficients> {
    let (sig, shape) = (sp.signature(), sp.shape());
    let mut values = Vec::with_capacity(shape.n * shape.m);
    for m in 0..shape.m {
        for n in 0..shape.n {
            let site = Site::new(n, m);
            let here = sp.at(n, m);
            let up = sp.at(n, m + 1).phi;
            let right = sp.at(n + 1, m).psi;
            let check = |det: Complex64, scale: f64| -> Result<()> {
                let threshold = tol.degeneracy_tol * scale;
                if !(det.norm() > threshold) {
                    return Err(Error::DegenerateSite {
                        site,
                        det: det.norm(),
                        threshold,
                    });
                }
                Ok(())
            };
            let quads = match sig {
                Signature::R21 | Signature::R22 => {
                    let mut out = [DiracQuad::IDENTITY; 2];
                    for i in 0..sig.spinor_pairs() {
                        let (p, s) = (here.phi[i], here.psi[i]);
                        let det = p * s.conj() - p.conj() * s;
                        check(det, p.norm_sqr() + s.norm_sqr())?;
                        let q = solve_pair(
                            det,
                            (p, p.conj()),
                            (s, s.conj()),
                            (up[i], up[i].conj()),
                            (right[i], right[i].conj()),
                        );
                        out[i] = require_real(q, site, tol)?;
                    }
                    out
                }
                Signature::R31 => {
                    let [p1, p2] = here.phi;
                    let [s1, s2] = here.psi;
                    let det = p1 * s2 - p2 * s1;
                    check(
                        det,
                        p1.norm_sqr() + p2.norm_sqr() + s1.norm_sqr() + s2.norm_sqr(),
                    )?;
                    let q = solve_pair(
                        det,
                        (p1, p2),
                        (s1, s2),
                        (up[0], up[1]),
                        (right[0], right[1]),
                    );
                    [q, q]
                }
            };
            values.push(quads);
        }
    }
    RawCoefficients::new(sig, shape, Grid::from_vec(shape.n, shape.m, values)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationReport {
    /// Largest residual of the quadratic identities.
    pub max_residual: f64,
    pub worst_site: Site,
    /// Largest disagreement between the quotients that define `lambda`.
    pub max_quotient_residual: f64,
    /// `lambda` on the `N x M` coefficient sites.
    pub lambda: Grid<Complex64>,
}

impl RelationReport {
    pub fn max_lambda_deviation_from_one(&self) -> f64 {
        self.lambda
            .as_slice()
            .iter()
            .map(|l| (l - ONE).norm())
            .fold(0.0, f64::max)
    }
}

/// `|a - b - c|` relative to the largest of `|a|`, `|b|`, `|c|` and 1.
fn rel(a: f64, b: f64, c: f64) -> f64 {
    (a - b - c).abs() / a.abs().max(b.abs()).max(c.abs()).max(1.0)
}

/// `|x - y|` relative to the larger of `|x|`, `|y|` and 1.
fn rel_diff(x: Complex64, y: Complex64) -> f64 {
    (x - y).norm() / x.norm().max(y.norm()).max(1.0)
}

/// Residuals of the identities and the least-squares `lambda` at one site.
/// Every residual is measured against the magnitude of its terms.
fn relations_at(sig: Signature, q: &[DiracQuad; 2]) -> (f64, f64, Complex64) {
    let [a, b] = q;
    let max = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(*x));
    match sig {
        Signature::R21 => {
            let (al, be, ga, de) = (a.alpha.re, a.beta.re, a.gamma.re, a.delta.re);
            let rel = max(&[
                rel(al * al, ga * ga, 1.0),
                rel(de * de, be * be, 1.0),
                rel(al * be, ga * de, 0.0),
            ]);
            let lambda = (de * al + ga * be) / (al * al + be * be);
            let l = Complex64::from(lambda);
            let quot = max(&[
                rel_diff(de.into(), l * al),
                rel_diff(ga.into(), l * be),
                (lambda.abs() - 1.0).abs(),
            ]);
            (rel, quot, l)
        }
        Signature::R31 => {
            let (al, be, ga, de) = (a.alpha, a.beta, a.gamma, a.delta);
            let cross = rel_diff(al * be.conj(), ga * de.conj());
            let rel = max(&[
                rel(al.norm_sqr(), ga.norm_sqr(), 1.0),
                rel(de.norm_sqr(), be.norm_sqr(), 1.0),
                cross,
            ]);
            let lambda = (de * al + ga * be) / (al.norm_sqr() + be.norm_sqr());
            let quot = max(&[
                rel_diff(de, lambda * al.conj()),
                rel_diff(ga, lambda * be.conj()),
                (lambda.norm() - 1.0).abs(),
            ]);
            (rel, quot, lambda)
        }
        Signature::R22 => {
            let (a1, b1, g1, d1) = (a.alpha.re, a.beta.re, a.gamma.re, a.delta.re);
            let (a2, b2, g2, d2) = (b.alpha.re, b.beta.re, b.gamma.re, b.delta.re);
            let rel = max(&[
                rel(a1 * a2, g1 * g2, 1.0),
                rel(d1 * d2, b1 * b2, 1.0),
                rel(a1 * b2, g1 * d2, 0.0),
                rel(a2 * b1, g2 * d1, 0.0),
            ]);
            let lambda =
                (a2 * d1 + b2 * g1 + g2 * b1 + d2 * a1) / (d1 * d1 + g1 * g1 + b1 * b1 + a1 * a1);
            let l = Complex64::from(lambda);
            let quot = max(&[
                rel_diff(a2.into(), l * d1),
                rel_diff(b2.into(), l * g1),
                rel_diff(g2.into(), l * b1),
                rel_diff(d2.into(), l * a1),
            ]);
            (rel, quot, l)
        }
    }
}

/// Checks the quadratic identities the coefficients of an isotropic,
/// consistent lattice satisfy, and extracts `lambda` at every site.
pub fn verify_relations(raw: &RawCoefficients, tol: &Tolerances) -> Result<RelationReport> {
    let sig = raw.signature;
    let mut report = RelationReport {
        max_residual: 0.0,
        worst_site: Site::new(0, 0),
        max_quotient_residual: 0.0,
        lambda: Grid::filled(raw.shape.n, raw.shape.m, ONE),
    };
    let mut first_failure: Option<(Site, f64)> = None;
    for (site, q) in raw.values.iter() {
        let (rel, quot, lambda) = relations_at(sig, q);
        report.lambda[(site.n, site.m)] = lambda;
        if !(rel <= report.max_residual) {
            report.max_residual = rel;
            report.worst_site = site;
        }
        report.max_quotient_residual = report.max_quotient_residual.max(quot);
        let worst = rel.max(quot);
        if first_failure.is_none() && !(worst <= tol.relation_tol) {
            first_failure = Some((site, worst));
        }
    }
    if let Some((site, residual)) = first_failure {
        return Err(Error::RelationFailure { site, residual });
    }
    Ok(report)
}

/// A local gauge transformation, stored as per-site multipliers of the
/// first spinor component: `phi_1 -> a phi_1`, `psi_1 -> b psi_1`.
///
/// `R21` multipliers are signs, `R31` multipliers are unimodular phases
/// shared by both components, and `R22` multipliers are real scalings
/// whose inverses act on the second component.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauge {
    signature: Signature,
    phi: Grid<Complex64>,
    psi: Grid<Complex64>,
}

impl Gauge {
    pub fn identity(signature: Signature, shape: GridShape) -> Self {
        Self {
            signature,
            phi: Grid::filled(shape.n + 1, shape.m + 1, ONE),
            psi: Grid::filled(shape.n + 1, shape.m + 1, ONE),
        }
    }

    pub fn new(signature: Signature, phi: Grid<Complex64>, psi: Grid<Complex64>) -> Result<Self> {
        if phi.width() != psi.width() || phi.height() != psi.height() {
            return Err(Error::InvalidInput("gauge grids differ in size".into()));
        }
        let g = Self {
            signature,
            phi,
            psi,
        };
        if let Some(site) = g.first_inadmissible(1e-12) {
            return Err(Error::GaugeFailure {
                site,
                reason: format!("multiplier is not an admissible {signature} gauge"),
            });
        }
        Ok(g)
    }

    /// A random admissible gauge.
    pub fn random(signature: Signature, shape: GridShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> Complex64 {
            match signature {
                Signature::R21 => {
                    if rng.gen::<bool>() {
                        ONE
                    } else {
                        -ONE
                    }
                }
                Signature::R31 => Complex64::from_polar(
                    1.0,
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                ),
                Signature::R22 => {
                    let s: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    Complex64::new(s * rng.gen_range(0.5f64..2.0), 0.0)
                }
            }
        };
        let phi = Grid::from_fn(shape.n + 1, shape.m + 1, |_, _| draw());
        let psi = Grid::from_fn(shape.n + 1, shape.m + 1, |_, _| draw());
        Self {
            signature,
            phi,
            psi,
        }
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn phi(&self) -> &Grid<Complex64> {
        &self.phi
    }

    pub fn psi(&self) -> &Grid<Complex64> {
        &self.psi
    }

    fn first_inadmissible(&self, tol: f64) -> Option<Site> {
        let ok = |z: &Complex64| match self.signature {
            Signature::R21 => z.im == 0.0 && (z.re.abs() - 1.0).abs() <= tol,
            Signature::R31 => (z.norm() - 1.0).abs() <= tol,
            Signature::R22 => z.im == 0.0 && z.re != 0.0 && z.re.is_finite(),
        };
        self.phi
            .iter()
            .chain(self.psi.iter())
            .find(|(_, z)| !ok(z))
            .map(|(s, _)| s)
    }

    /// Multipliers `(a_i, b_i)` acting on component pair `i`.
    fn pair_multipliers(&self, site: (usize, usize)) -> [(Complex64, Complex64); 2] {
        let (a, b) = (self.phi[site], self.psi[site]);
        match self.signature {
            Signature::R22 => [(a, b), (a.inv(), b.inv())],
            _ => [(a, b), (a, b)],
        }
    }

    pub fn apply_to_spinors(&self, s: &SpinorField) -> Result<SpinorField> {
        let shape = s.shape();
        if self.phi.width() != shape.n + 1 || self.phi.height() != shape.m + 1 {
            return Err(Error::InvalidInput(
                "gauge does not match the spinor grid".into(),
            ));
        }
        let mut out = s.clone();
        for m in 0..=shape.m {
            for n in 0..=shape.n {
                let mult = self.pair_multipliers((n, m));
                let sp = &mut out.values_mut()[(n, m)];
                for (i, (a, b)) in mult.iter().enumerate().take(self.signature.spinor_pairs()) {
                    sp.phi[i] *= a;
                    sp.psi[i] *= b;
                }
            }
        }
        Ok(out)
    }

    /// Transforms generalized coefficients so that they describe the gauged spinors.
    pub fn apply_to_coefficients(&self, raw: &RawCoefficients) -> Result<RawCoefficients> {
        let shape = raw.shape();
        if self.phi.width() != shape.n + 1 || self.phi.height() != shape.m + 1 {
            return Err(Error::InvalidInput(
                "gauge does not match the coefficient grid".into(),
            ));
        }
        let values = Grid::from_fn(shape.n, shape.m, |n, m| {
            let here = self.pair_multipliers((n, m));
            let up = self.pair_multipliers((n, m + 1));
            let right = self.pair_multipliers((n + 1, m));
            let mut q = raw.values[(n, m)];
            for i in 0..2 {
                let (a, b) = here[i];
                let a_up = up[i].0;
                let b_right = right[i].1;
                q[i] = DiracQuad {
                    alpha: q[i].alpha * a_up / a,
                    beta: q[i].beta * a_up / b,
                    gamma: q[i].gamma * b_right / a,
                    delta: q[i].delta * b_right / b,
                };
            }
            q
        });
        RawCoefficients::new(raw.signature, shape, values)
    }
}

/// The admissible gauge taking `from` to `to` on the sites where spinors
/// are defined by edges, or an error if the two fields are not gauge
/// equivalent to within `tol` (relative).
pub fn gauge_relating(from: &SpinorField, to: &SpinorField, tol: f64) -> Result<Gauge> {
    let (sig, shape) = (from.signature(), from.shape());
    if to.signature() != sig || to.shape() != shape {
        return Err(Error::InvalidInput(
            "spinor fields differ in signature or shape".into(),
        ));
    }
    let pairs = sig.spinor_pairs();
    let ratio = |x: [Complex64; 2], y: [Complex64; 2], site: Site| -> Result<Complex64> {
        let fail = |reason: &str| Error::GaugeFailure {
            site,
            reason: reason.to_string(),
        };
        let r = match sig {
            Signature::R21 | Signature::R31 => {
                let den: f64 = x.iter().take(pairs).map(|z| z.norm_sqr()).sum();
                if den == 0.0 {
                    return Err(fail("zero spinor"));
                }
                let num: Complex64 = x
                    .iter()
                    .zip(&y)
                    .take(pairs)
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                num / den
            }
            Signature::R22 => {
                if x[0].norm() == 0.0 {
                    return Err(fail("zero spinor"));
                }
                y[0] / x[0]
            }
        };
        let scale: f64 = x.iter().chain(&y).map(|z| z.norm()).fold(0.0, f64::max);
        let mismatch = match sig {
            Signature::R21 => (y[0] - r * x[0])
                .norm()
                .max((r.norm() - 1.0).abs().max(r.im.abs()) * scale),
            Signature::R31 => (y[0] - r * x[0])
                .norm()
                .max((y[1] - r * x[1]).norm())
                .max((r.norm() - 1.0).abs() * scale),
            Signature::R22 => (y[1] - x[1] / r).norm().max(r.im.abs() / r.norm() * scale),
        };
        if !(mismatch <= tol * scale) {
            return Err(fail("spinors are not related by an admissible gauge"));
        }
        Ok(match sig {
            Signature::R21 => Complex64::new(r.re.signum(), 0.0),
            Signature::R31 => r / r.norm(),
            Signature::R22 => Complex64::new(r.re, 0.0),
        })
    };
    let mut phi = Grid::filled(shape.n + 1, shape.m + 1, ONE);
    let mut psi = Grid::filled(shape.n + 1, shape.m + 1, ONE);
    for m in 0..=shape.m {
        for n in 0..=shape.n {
            let site = Site::new(n, m);
            if n < shape.n {
                phi[(n, m)] = ratio(from.at(n, m).phi, to.at(n, m).phi, site)?;
            }
            if m < shape.m {
                psi[(n, m)] = ratio(from.at(n, m).psi, to.at(n, m).psi, site)?;
            }
        }
    }
    Ok(Gauge {
        signature: sig,
        phi,
        psi,
    })
}

/// Spinors, coefficients and gauge after normalizing `lambda` to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeFixed {
    pub spinors: SpinorField,
    pub coefficients: RawCoefficients,
    pub gauge: Gauge,
    /// `max |lambda - 1|` after the transformation.
    pub lambda_deviation: f64,
}

/// Builds the gauge that sets `lambda = 1` by a single sweep and applies it.
///
/// `R21` flips the sign of `psi` along `n`, starting from `n = 0`; `R31`
/// rotates the phase of `phi` along `m`; `R22` rescales `phi` along `m`.
pub fn fix_gauge(
    spinors: &SpinorField,
    raw: &RawCoefficients,
    lambda: &Grid<Complex64>,
    tol: &Tolerances,
) -> Result<GaugeFixed> {
    let (sig, shape) = (raw.signature(), raw.shape());
    if lambda.width() != shape.n || lambda.height() != shape.m || spinors.shape() != shape {
        return Err(Error::InvalidInput(
            "lambda, spinor and coefficient grids do not match".into(),
        ));
    }
    let mut gauge = Gauge::identity(sig, shape);
    match sig {
        Signature::R21 => {
            for m in 0..shape.m {
                for n in 0..shape.n {
                    let l = lambda[(n, m)];
                    if !((l.re.abs() - 1.0).abs() <= tol.relation_tol
                        && l.im.abs() <= tol.relation_tol)
                    {
                        return Err(Error::GaugeFailure {
                            site: Site::new(n, m),
                            reason: format!("lambda = {l} is not +-1"),
                        });
                    }
                    gauge.psi[(n + 1, m)] = gauge.psi[(n, m)] * l.re.signum();
                }
            }
        }
        Signature::R31 => {
            for n in 0..shape.n {
                let mut zeta = 0.0;
                for m in 0..shape.m {
                    let l = lambda[(n, m)];
                    if !((l.norm() - 1.0).abs() <= tol.relation_tol) {
                        return Err(Error::GaugeFailure {
                            site: Site::new(n, m),
                            reason: format!("|lambda| = {} is not 1", l.norm()),
                        });
                    }
                    zeta -= l.arg();
                    gauge.phi[(n, m + 1)] = Complex64::from_polar(1.0, zeta);
                }
            }
        }
        Signature::R22 => {
            for n in 0..shape.n {
                for m in 0..shape.m {
                    let l = lambda[(n, m)];
                    if !(l.norm() > tol.degeneracy_tol && l.im.abs() <= tol.relation_tol * l.norm())
                    {
                        return Err(Error::GaugeFailure {
                            site: Site::new(n, m),
                            reason: format!("lambda = {l} is not a nonzero real"),
                        });
                    }
                    gauge.phi[(n, m + 1)] = gauge.phi[(n, m)] * l.re;
                }
            }
        }
    }
    let spinors = gauge.apply_to_spinors(spinors)?;
    let coefficients = gauge.apply_to_coefficients(raw)?;
    let report = verify_relations(&coefficients, tol)?;
    let lambda_deviation = report.max_lambda_deviation_from_one();
    if !(lambda_deviation <= tol.relation_tol) {
        let site = report
            .lambda
            .iter()
            .find(|(_, l)| !((*l - ONE).norm() <= tol.relation_tol))
            .map(|(s, _)| s)
            .unwrap_or(Site::new(0, 0));
        return Err(Error::GaugeFailure {
            site,
            reason: format!("lambda still deviates from 1 by {lambda_deviation:e}"),
        });
    }
    Ok(GaugeFixed {
        spinors,
        coefficients,
        gauge,
        lambda_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Quadratic identities before gauge fixing.
    pub relations: f64,
    /// `max |lambda - 1|` after gauge fixing.
    pub lambda: f64,
    /// Case constraint of the final coefficients.
    pub constraint: f64,
    /// Relative difference between the regenerated and the input edges.
    pub edge_round_trip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Spinors in the fixed gauge, completed on the last row and column.
    pub spinors: SpinorField,
    /// System-form coefficients; identity on the last row and column.
    pub coefficients: CoefficientField,
    /// `lambda` on the `N x M` coefficient sites, before gauge fixing.
    pub lambda_before_fix: Grid<Complex64>,
    pub gauge: Gauge,
    pub residuals: Residuals,
    pub base: AmbientVector,
}

/// Extends a gauge-fixed solution to the whole rectangle with identity
/// coefficients on the last row and column, where the lattice does not
/// determine them.
fn complete_boundary(fixed: &GaugeFixed) -> Result<(SpinorField, CoefficientField)> {
    let mut spinors = fixed.spinors.clone();
    let (sig, shape) = (spinors.signature(), spinors.shape());
    {
        let v = spinors.values_mut();
        v[(shape.n, 0)].phi = v[(shape.n - 1, 0)].phi;
        for m in 0..shape.m {
            v[(shape.n, m + 1)].phi = v[(shape.n, m)].phi;
        }
        v[(0, shape.m)].psi = v[(0, shape.m - 1)].psi;
        for n in 0..shape.n {
            v[(n + 1, shape.m)].psi = v[(n, shape.m)].psi;
        }
    }
    let values = Grid::from_fn(shape.n + 1, shape.m + 1, |n, m| {
        if n < shape.n && m < shape.m {
            fixed.coefficients.system_form(n, m)
        } else {
            Coefficients::identity(sig)
        }
    });
    Ok((spinors, CoefficientField::new(sig, shape, values)?))
}

/// Full inverse map from an isotropic, non-degenerate lattice to a solution
/// of the case's discrete Dirac system generating it.
pub fn reconstruct(s: &DiscreteSurface, tol: &Tolerances) -> Result<ReconstructionResult> {
    let input_edges = extract_edges(s);
    let spinors = recover_spinors(s, tol).map_err(|e| e.at_stage(Stage::RecoverSpinors))?;
    let raw =
        compute_coefficients(&spinors, tol).map_err(|e| e.at_stage(Stage::ComputeCoefficients))?;
    let relations = verify_relations(&raw, tol).map_err(|e| e.at_stage(Stage::VerifyRelations))?;
    let fixed = fix_gauge(&spinors, &raw, &relations.lambda, tol)
        .map_err(|e| e.at_stage(Stage::FixGauge))?;
    let (spinors, coefficients) =
        complete_boundary(&fixed).map_err(|e| e.at_stage(Stage::FixGauge))?;

    let constraint = coefficients
        .values()
        .as_slice()
        .iter()
        .map(Coefficients::constraint_residual)
        .fold(0.0, f64::max);
    if !(constraint <= tol.relation_tol) {
        let (site, _) = coefficients
            .values()
            .iter()
            .find(|(_, c)| !(c.constraint_residual() <= tol.relation_tol))
            .expect("a site exceeds the bound");
        return Err(Error::ConstraintViolation {
            max_residual: constraint,
            site,
            count: 1,
        }
        .at_stage(Stage::FixGauge));
    }
    let edge_round_trip = edges_from_spinors(&spinors).max_relative_difference(&input_edges);
    if !(edge_round_trip <= tol.relation_tol) {
        return Err(Error::InvalidInput(format!(
            "regenerated edges differ by {edge_round_trip:e}"
        ))
        .at_stage(Stage::RoundTrip));
    }
    Ok(ReconstructionResult {
        spinors,
        coefficients,
        lambda_before_fix: relations.lambda,
        gauge: fixed.gauge,
        residuals: Residuals {
            relations: relations.max_residual,
            lambda: fixed.lambda_deviation,
            constraint,
            edge_round_trip,
        },
        base: s.base(),
    })
}
