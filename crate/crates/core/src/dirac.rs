//! Solutions of the three discrete Dirac reductions on a finite rectangle.
//!
//! Every case is a specialisation of the generalized system
//!
//! ```text
//! tau2 phi_i = alpha_i phi_i + beta_i psi_i
//! tau1 psi_i = gamma_i phi_i + delta_i psi_i
//! ```
//!
//! where `tau1` shifts `n` and `tau2` shifts `m`. A solution is fixed by
//! `phi` on the bottom row `m = 0` and `psi` on the left column `n = 0`;
//! [`propagate`] fills the rest of the rectangle row by row.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridShape, Site};
use crate::metric::{Signature, Tolerances};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Spinor values at one site. `R21` uses only component 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spinor {
    pub phi: [Complex64; 2],
    pub psi: [Complex64; 2],
}

impl Spinor {
    pub fn r21(phi: Complex64, psi: Complex64) -> Self {
        Self {
            phi: [phi, ZERO],
            psi: [psi, ZERO],
        }
    }

    pub fn pair(phi: [Complex64; 2], psi: [Complex64; 2]) -> Self {
        Self { phi, psi }
    }

    /// Ratio of the case determinant to the local spinor scale. The site is
    /// non-degenerate when this exceeds the degeneracy tolerance.
    pub fn degeneracy_ratio(&self, sig: Signature) -> f64 {
        let [p1, p2] = self.phi;
        let [s1, s2] = self.psi;
        let ratio = |det: f64, scale: f64| if scale > 0.0 { det / scale } else { 0.0 };
        match sig {
            Signature::R21 => ratio(
                (p1 * s1.conj() - p1.conj() * s1).norm(),
                p1.norm_sqr() + s1.norm_sqr(),
            ),
            Signature::R31 => ratio(
                (p1 * s2 - p2 * s1).norm(),
                p1.norm_sqr() + p2.norm_sqr() + s1.norm_sqr() + s2.norm_sqr(),
            ),
            Signature::R22 => {
                let r1 = ratio(
                    (p1 * s1.conj() - p1.conj() * s1).norm(),
                    p1.norm_sqr() + s1.norm_sqr(),
                );
                let r2 = ratio(
                    (p2 * s2.conj() - p2.conj() * s2).norm(),
                    p2.norm_sqr() + s2.norm_sqr(),
                );
                r1.min(r2)
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.phi
            .iter()
            .chain(&self.psi)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Coefficients of one component pair of the generalized system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracQuad {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub gamma: Complex64,
    pub delta: Complex64,
}

impl DiracQuad {
    pub const IDENTITY: DiracQuad = DiracQuad {
        alpha: ONE,
        beta: ZERO,
        gamma: ZERO,
        delta: ONE,
    };

    pub fn new(alpha: Complex64, beta: Complex64, gamma: Complex64, delta: Complex64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            delta,
        }
    }

    pub fn real(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        Self::new(alpha.into(), beta.into(), gamma.into(), delta.into())
    }

    pub fn max_abs_diff(&self, other: &DiracQuad) -> f64 {
        [
            self.alpha - other.alpha,
            self.beta - other.beta,
            self.gamma - other.gamma,
            self.delta - other.delta,
        ]
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
    }
}

/// Case-specific Dirac coefficients at one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficients {
    /// `alpha^2 - beta^2 = 1`; the second equation reuses `(beta, alpha)`.
    R21 { alpha: f64, beta: f64 },
    /// `|alpha|^2 - |beta|^2 = 1`; the second equation uses the conjugates.
    R31 { alpha: Complex64, beta: Complex64 },
    /// `alpha delta - beta gamma = 1`; component 2 uses `(delta, gamma, beta, alpha)`.
    R22 {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
    },
}

impl Coefficients {
    pub fn identity(sig: Signature) -> Self {
        match sig {
            Signature::R21 => Coefficients::R21 {
                alpha: 1.0,
                beta: 0.0,
            },
            Signature::R31 => Coefficients::R31 {
                alpha: ONE,
                beta: ZERO,
            },
            Signature::R22 => Coefficients::R22 {
                alpha: 1.0,
                beta: 0.0,
                gamma: 0.0,
                delta: 1.0,
            },
        }
    }

    pub fn signature(&self) -> Signature {
        match self {
            Coefficients::R21 { .. } => Signature::R21,
            Coefficients::R31 { .. } => Signature::R31,
            Coefficients::R22 { .. } => Signature::R22,
        }
    }

    /// Residual of the case constraint relative to its largest term (at
    /// least 1, so the residual is absolute for coefficients of order one);
    /// infinite for non-finite entries.
    pub fn constraint_residual(&self) -> f64 {
        let (value, terms) = match *self {
            Coefficients::R21 { alpha, beta } => (
                alpha * alpha - beta * beta - 1.0,
                [alpha * alpha, beta * beta],
            ),
            Coefficients::R31 { alpha, beta } => (
                alpha.norm_sqr() - beta.norm_sqr() - 1.0,
                [alpha.norm_sqr(), beta.norm_sqr()],
            ),
            Coefficients::R22 {
                alpha,
                beta,
                gamma,
                delta,
            } => (
                alpha * delta - beta * gamma - 1.0,
                [(alpha * delta).abs(), (beta * gamma).abs()],
            ),
        };
        let r = value.abs() / terms[0].max(terms[1]).max(1.0);
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    }

    /// The coefficients written in generalized form, one quad per component pair.
    pub fn generalized(&self) -> [DiracQuad; 2] {
        match *self {
            Coefficients::R21 { alpha, beta } => [
                DiracQuad::real(alpha, beta, beta, alpha),
                DiracQuad::IDENTITY,
            ],
            Coefficients::R31 { alpha, beta } => {
                let q = DiracQuad::new(alpha, beta, beta.conj(), alpha.conj());
                [q, q]
            }
            Coefficients::R22 {
                alpha,
                beta,
                gamma,
                delta,
            } => [
                DiracQuad::real(alpha, beta, gamma, delta),
                DiracQuad::real(delta, gamma, beta, alpha),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    signature: Signature,
    shape: GridShape,
    values: Grid<Spinor>,
}

impl SpinorField {
    pub fn new(signature: Signature, shape: GridShape, values: Grid<Spinor>) -> Result<Self> {
        if values.width() != shape.n + 1 || values.height() != shape.m + 1 {
            return Err(Error::InvalidInput(format!(
                "spinor grid is {}x{} sites, shape {shape} needs {}x{}",
                values.width(),
                values.height(),
                shape.n + 1,
                shape.m + 1
            )));
        }
        Ok(Self {
            signature,
            shape,
            values,
        })
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &Grid<Spinor> {
        &self.values
    }

    pub fn at(&self, n: usize, m: usize) -> &Spinor {
        &self.values[(n, m)]
    }

    pub(crate) fn values_mut(&mut self) -> &mut Grid<Spinor> {
        &mut self.values
    }

    /// First site with both successors whose determinant falls below the
    /// degeneracy threshold, with the observed ratio.
    pub fn first_degenerate_site(&self, tol: &Tolerances) -> Option<(Site, f64)> {
        for m in 0..self.shape.m {
            for n in 0..self.shape.n {
                let r = self.values[(n, m)].degeneracy_ratio(self.signature);
                if !(r > tol.degeneracy_tol) {
                    return Some((Site::new(n, m), r));
                }
            }
        }
        None
    }

    pub fn is_nondegenerate(&self, tol: &Tolerances) -> bool {
        self.first_degenerate_site(tol).is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    signature: Signature,
    shape: GridShape,
    values: Grid<Coefficients>,
}

impl CoefficientField {
    /// Coefficients are stored on every site of the rectangle; entries on
    /// the last row and column are only partially used by [`propagate`].
    pub fn new(signature: Signature, shape: GridShape, values: Grid<Coefficients>) -> Result<Self> {
        if values.width() != shape.n + 1 || values.height() != shape.m + 1 {
            return Err(Error::InvalidInput(format!(
                "coefficient grid is {}x{} sites, shape {shape} needs {}x{}",
                values.width(),
                values.height(),
                shape.n + 1,
                shape.m + 1
            )));
        }
        if let Some((site, c)) = values.iter().find(|(_, c)| c.signature() != signature) {
            return Err(Error::InvalidInput(format!(
                "coefficient at {site} is for {} but the field is {signature}",
                c.signature()
            )));
        }
        Ok(Self {
            signature,
            shape,
            values,
        })
    }

    pub fn constant(signature: Signature, shape: GridShape, value: Coefficients) -> Result<Self> {
        Self::new(
            signature,
            shape,
            Grid::filled(shape.n + 1, shape.m + 1, value),
        )
    }

    pub fn identity(signature: Signature, shape: GridShape) -> Self {
        Self {
            signature,
            shape,
            values: Grid::filled(shape.n + 1, shape.m + 1, Coefficients::identity(signature)),
        }
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &Grid<Coefficients> {
        &self.values
    }

    pub fn at(&self, n: usize, m: usize) -> &Coefficients {
        &self.values[(n, m)]
    }

    pub fn generalized(&self) -> Grid<[DiracQuad; 2]> {
        self.values.map(Coefficients::generalized)
    }
}

/// Boundary data fixing a solution: `phi` on `m = 0`, `psi` on `n = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub phi_row: Vec<[Complex64; 2]>,
    pub psi_col: Vec<[Complex64; 2]>,
}

impl InitialData {
    pub fn from_field(field: &SpinorField) -> Self {
        let shape = field.shape();
        Self {
            phi_row: (0..=shape.n).map(|n| field.at(n, 0).phi).collect(),
            psi_col: (0..=shape.m).map(|m| field.at(0, m).psi).collect(),
        }
    }

    /// Constant boundary data.
    pub fn constant(shape: GridShape, phi: [Complex64; 2], psi: [Complex64; 2]) -> Self {
        Self {
            phi_row: vec![phi; shape.n + 1],
            psi_col: vec![psi; shape.m + 1],
        }
    }

    /// Deterministic random boundary data with moduli in `[0.5, 1.5]` and
    /// uniform phases, so that generic sites are non-degenerate.
    pub fn random(sig: Signature, shape: GridShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let pairs = sig.spinor_pairs();
        let draw = |rng: &mut ChaCha8Rng| {
            let mut out = [ZERO; 2];
            for z in out.iter_mut().take(pairs) {
                let r = rng.gen_range(0.5..1.5);
                let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                *z = Complex64::from_polar(r, theta);
            }
            out
        };
        let phi_row = (0..=shape.n).map(|_| draw(&mut rng)).collect();
        let psi_col = (0..=shape.m).map(|_| draw(&mut rng)).collect();
        Self { phi_row, psi_col }
    }

    fn check(&self, shape: GridShape) -> Result<()> {
        if self.phi_row.len() != shape.n + 1 || self.psi_col.len() != shape.m + 1 {
            return Err(Error::InvalidInput(format!(
                "initial data has {} phi values and {} psi values; shape {shape} needs {} and {}",
                self.phi_row.len(),
                self.psi_col.len(),
                shape.n + 1,
                shape.m + 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub max_residual: f64,
    pub worst_site: Site,
    pub violations: Vec<Site>,
    pub passed: bool,
}

pub fn validate_coefficients(c: &CoefficientField, tol: &Tolerances) -> ValidationReport {
    let mut max_residual = 0.0;
    let mut worst_site = Site::new(0, 0);
    let mut violations = Vec::new();
    for (site, coeff) in c.values().iter() {
        let r = coeff.constraint_residual();
        if r > max_residual {
            max_residual = r;
            worst_site = site;
        }
        if !(r <= tol.relation_tol) {
            violations.push(site);
        }
    }
    ValidationReport {
        max_residual,
        worst_site,
        passed: violations.is_empty(),
        violations,
    }
}

/// Fills the rectangle from boundary data, after checking the coefficient constraint.
pub fn propagate(
    c: &CoefficientField,
    init: &InitialData,
    shape: GridShape,
) -> Result<SpinorField> {
    if c.shape() != shape {
        return Err(Error::InvalidInput(format!(
            "coefficient shape {} does not match {shape}",
            c.shape()
        )));
    }
    let report = validate_coefficients(c, &Tolerances::default());
    if !report.passed {
        return Err(Error::ConstraintViolation {
            max_residual: report.max_residual,
            site: report.worst_site,
            count: report.violations.len(),
        });
    }
    propagate_generalized(c.signature(), &c.generalized(), init, shape)
}

/// Sweep for the generalized system with no constraint on the coefficients.
///
/// Row by row: `psi(n+1, m)` from the `tau1` equation, left to right, then
/// `phi(., m+1)` from the `tau2` equation.
pub fn propagate_generalized(
    sig: Signature,
    coeffs: &Grid<[DiracQuad; 2]>,
    init: &InitialData,
    shape: GridShape,
) -> Result<SpinorField> {
    init.check(shape)?;
    if coeffs.width() != shape.n + 1 || coeffs.height() != shape.m + 1 {
        return Err(Error::InvalidInput(format!(
            "coefficient grid is {}x{}, shape {shape} needs {}x{}",
            coeffs.width(),
            coeffs.height(),
            shape.n + 1,
            shape.m + 1
        )));
    }
    let pairs = sig.spinor_pairs();
    let mut values = Grid::filled(shape.n + 1, shape.m + 1, Spinor::default());
    for (n, phi) in init.phi_row.iter().enumerate() {
        values[(n, 0)].phi = *phi;
    }
    for (m, psi) in init.psi_col.iter().enumerate() {
        values[(0, m)].psi = *psi;
    }
    for m in 0..=shape.m {
        for n in 0..shape.n {
            let here = values[(n, m)];
            let q = &coeffs[(n, m)];
            for i in 0..pairs {
                values[(n + 1, m)].psi[i] = q[i].gamma * here.phi[i] + q[i].delta * here.psi[i];
            }
        }
        if m < shape.m {
            for n in 0..=shape.n {
                let here = values[(n, m)];
                let q = &coeffs[(n, m)];
                for i in 0..pairs {
                    values[(n, m + 1)].phi[i] = q[i].alpha * here.phi[i] + q[i].beta * here.psi[i];
                }
            }
        }
    }
    SpinorField::new(sig, shape, values)
}

/// Deterministic random coefficients satisfying the case constraint by construction.
///
/// `R22` fields are generated in the gauge `alpha = delta`.
pub fn random_coefficients(
    sig: Signature,
    shape: GridShape,
    seed: u64,
    magnitude: f64,
) -> Result<CoefficientField> {
    if !(magnitude.is_finite() && magnitude >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "magnitude must be non-negative, got {magnitude}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng| {
        if magnitude > 0.0 {
            rng.gen_range(-magnitude..=magnitude)
        } else {
            0.0
        }
    };
    let values = Grid::from_fn(shape.n + 1, shape.m + 1, |_, _| match sig {
        Signature::R21 => {
            let beta = uniform(&mut rng);
            Coefficients::R21 {
                alpha: (1.0 + beta * beta).sqrt(),
                beta,
            }
        }
        Signature::R31 => {
            let r = magnitude * rng.gen::<f64>().sqrt();
            let arg = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let beta = Complex64::from_polar(r, arg);
            Coefficients::R31 {
                alpha: Complex64::from_polar((1.0 + r * r).sqrt(), theta),
                beta,
            }
        }
        Signature::R22 => loop {
            let beta = uniform(&mut rng);
            let gamma = uniform(&mut rng);
            let s = 1.0 + beta * gamma;
            if s > 0.0 {
                let alpha = s.sqrt();
                break Coefficients::R22 {
                    alpha,
                    beta,
                    gamma,
                    delta: alpha,
                };
            }
        },
    });
    CoefficientField::new(sig, shape, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn shape(n: usize, m: usize) -> GridShape {
        GridShape::new(n, m).unwrap()
    }

    #[test]
    fn validation_examples() {
        let t = Tolerances::default();
        let s = shape(3, 3);
        let ok = CoefficientField::constant(
            Signature::R21,
            s,
            Coefficients::R21 {
                alpha: 2f64.sqrt(),
                beta: 1.0,
            },
        )
        .unwrap();
        let r = validate_coefficients(&ok, &t);
        assert!(r.passed);
        assert!(r.max_residual <= 4.0 * f64::EPSILON);

        let alpha = Complex64::from_polar(1.25, std::f64::consts::PI / 7.0);
        let r31 = CoefficientField::constant(
            Signature::R31,
            s,
            Coefficients::R31 {
                alpha,
                beta: c(0.0, 0.75),
            },
        )
        .unwrap();
        assert!(validate_coefficients(&r31, &t).passed);

        let bad = CoefficientField::constant(
            Signature::R21,
            s,
            Coefficients::R21 {
                alpha: 1.0,
                beta: 1.0,
            },
        )
        .unwrap();
        let r = validate_coefficients(&bad, &t);
        assert!(!r.passed);
        assert_eq!(r.max_residual, 1.0);
        assert_eq!(r.violations.len(), s.site_count());
    }

    #[test]
    fn field_rejects_mixed_cases() {
        let s = shape(1, 1);
        let mut g = Grid::filled(2, 2, Coefficients::identity(Signature::R21));
        g[(1, 1)] = Coefficients::identity(Signature::R22);
        assert!(CoefficientField::new(Signature::R21, s, g).is_err());
        assert!(CoefficientField::new(
            Signature::R21,
            shape(2, 2),
            Grid::filled(2, 2, Coefficients::identity(Signature::R21))
        )
        .is_err());
    }

    #[test]
    fn one_step_substitution() {
        let s = shape(1, 1);
        let cf = CoefficientField::constant(
            Signature::R21,
            s,
            Coefficients::R21 {
                alpha: 2f64.sqrt(),
                beta: 1.0,
            },
        )
        .unwrap();
        let init = InitialData::constant(s, [c(1.0, 0.0), ZERO], [ZERO, ZERO]);
        let f = propagate(&cf, &init, s).unwrap();
        assert!((f.at(0, 1).phi[0] - c(2f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!((f.at(1, 0).psi[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn identity_coefficients_keep_phi_constant_along_m() {
        let s = shape(4, 5);
        for sig in Signature::ALL {
            let init = InitialData::random(sig, s, 3);
            let f = propagate(&CoefficientField::identity(sig, s), &init, s).unwrap();
            for m in 0..=s.m {
                for n in 0..=s.n {
                    assert_eq!(f.at(n, m).phi, init.phi_row[n]);
                    assert_eq!(f.at(n, m).psi, init.psi_col[m]);
                }
            }
        }
    }

    #[test]
    fn propagate_rejects_constraint_violation_and_bad_lengths() {
        let s = shape(2, 2);
        let bad = CoefficientField::constant(
            Signature::R21,
            s,
            Coefficients::R21 {
                alpha: 1.0,
                beta: 1.0,
            },
        )
        .unwrap();
        let init = InitialData::random(Signature::R21, s, 0);
        assert!(matches!(
            propagate(&bad, &init, s),
            Err(Error::ConstraintViolation { .. })
        ));
        let short = InitialData {
            phi_row: init.phi_row[..2].to_vec(),
            psi_col: init.psi_col.clone(),
        };
        assert!(propagate(&CoefficientField::identity(Signature::R21, s), &short, s).is_err());
    }

    // Independent oracle: memoized site recursion straight from the two
    // shift equations, no sweep ordering involved.
    struct Recursion<'a> {
        alpha: f64,
        beta: f64,
        init: &'a InitialData,
        phi: HashMap<(usize, usize), Complex64>,
        psi: HashMap<(usize, usize), Complex64>,
    }

    impl Recursion<'_> {
        fn phi(&mut self, n: usize, m: usize) -> Complex64 {
            if m == 0 {
                return self.init.phi_row[n][0];
            }
            if let Some(v) = self.phi.get(&(n, m)) {
                return *v;
            }
            let v = self.alpha * self.phi(n, m - 1) + self.beta * self.psi(n, m - 1);
            self.phi.insert((n, m), v);
            v
        }

        fn psi(&mut self, n: usize, m: usize) -> Complex64 {
            if n == 0 {
                return self.init.psi_col[m][0];
            }
            if let Some(v) = self.psi.get(&(n, m)) {
                return *v;
            }
            let v = self.beta * self.phi(n - 1, m) + self.alpha * self.psi(n - 1, m);
            self.psi.insert((n, m), v);
            v
        }
    }

    #[test]
    fn sweep_matches_site_recursion_oracle() {
        let t: f64 = 0.3;
        let s = shape(9, 7);
        let cf = CoefficientField::constant(
            Signature::R21,
            s,
            Coefficients::R21 {
                alpha: t.cosh(),
                beta: t.sinh(),
            },
        )
        .unwrap();
        let init = InitialData::random(Signature::R21, s, 11);
        let f = propagate(&cf, &init, s).unwrap();
        let mut oracle = Recursion {
            alpha: t.cosh(),
            beta: t.sinh(),
            init: &init,
            phi: HashMap::new(),
            psi: HashMap::new(),
        };
        for site in s.sites() {
            let (n, m) = (site.n, site.m);
            let sp = f.at(n, m);
            assert!((sp.phi[0] - oracle.phi(n, m)).norm() <= 1e-12 * (1.0 + sp.phi[0].norm()));
            assert!((sp.psi[0] - oracle.psi(n, m)).norm() <= 1e-12 * (1.0 + sp.psi[0].norm()));
        }
    }

    #[test]
    fn exponential_closed_form() {
        // phi = psi = e^{t(n+m)} solves the system with alpha = cosh t, beta = sinh t.
        let t: f64 = 0.2;
        let s = shape(6, 6);
        let cf = CoefficientField::constant(
            Signature::R21,
            s,
            Coefficients::R21 {
                alpha: t.cosh(),
                beta: t.sinh(),
            },
        )
        .unwrap();
        let init = InitialData {
            phi_row: (0..=6)
                .map(|n| [c((t * n as f64).exp(), 0.0), ZERO])
                .collect(),
            psi_col: (0..=6)
                .map(|m| [c((t * m as f64).exp(), 0.0), ZERO])
                .collect(),
        };
        let f = propagate(&cf, &init, s).unwrap();
        for site in s.sites() {
            let e = (t * (site.n + site.m) as f64).exp();
            assert!((f.at(site.n, site.m).phi[0].re - e).abs() < 1e-13 * e);
            assert!((f.at(site.n, site.m).psi[0].re - e).abs() < 1e-13 * e);
        }
    }

    #[test]
    fn propagated_fields_satisfy_the_equations() {
        let s = shape(12, 10);
        for sig in Signature::ALL {
            let cf = random_coefficients(sig, s, 5, 0.75).unwrap();
            let f = propagate(&cf, &InitialData::random(sig, s, 5), s).unwrap();
            let quads = cf.generalized();
            for m in 0..s.m {
                for n in 0..s.n {
                    let (here, q) = (f.at(n, m), &quads[(n, m)]);
                    for i in 0..sig.spinor_pairs() {
                        let scale = here.phi[i].norm() + here.psi[i].norm();
                        let r2 = f.at(n, m + 1).phi[i]
                            - (q[i].alpha * here.phi[i] + q[i].beta * here.psi[i]);
                        let r1 = f.at(n + 1, m).psi[i]
                            - (q[i].gamma * here.phi[i] + q[i].delta * here.psi[i]);
                        assert!(
                            r2.norm() <= 1e-13 * scale && r1.norm() <= 1e-13 * scale,
                            "{sig} at ({n},{m})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn r31_real_coefficients_preserve_the_conjugate_reduction() {
        let s = shape(8, 8);
        let r21 = random_coefficients(Signature::R21, s, 9, 0.6).unwrap();
        let values = r21.values().map(|c| match *c {
            Coefficients::R21 { alpha, beta } => Coefficients::R31 {
                alpha: alpha.into(),
                beta: beta.into(),
            },
            _ => unreachable!(),
        });
        let cf = CoefficientField::new(Signature::R31, s, values).unwrap();
        let base = InitialData::random(Signature::R21, s, 9);
        let init = InitialData {
            phi_row: base.phi_row.iter().map(|p| [p[0], p[0].conj()]).collect(),
            psi_col: base.psi_col.iter().map(|p| [p[0], p[0].conj()]).collect(),
        };
        let f = propagate(&cf, &init, s).unwrap();
        for (_, sp) in f.values().iter() {
            assert!((sp.phi[1] - sp.phi[0].conj()).norm() <= 1e-13 * sp.phi[0].norm());
            assert!((sp.psi[1] - sp.psi[0].conj()).norm() <= 1e-13 * sp.psi[0].norm());
        }
    }

    #[test]
    fn random_coefficients_are_reproducible_and_valid() {
        let s = shape(16, 16);
        let t = Tolerances::default();
        for sig in Signature::ALL {
            let a = random_coefficients(sig, s, 42, 0.9).unwrap();
            assert_eq!(a, random_coefficients(sig, s, 42, 0.9).unwrap());
            assert_ne!(a, random_coefficients(sig, s, 43, 0.9).unwrap());
            assert!(validate_coefficients(&a, &t).max_residual <= 1e-14);
            if let Coefficients::R22 { alpha, delta, .. } = a.at(3, 4) {
                assert_eq!(alpha, delta);
            }
        }
        // large magnitudes force the R22 resampling branch
        let big = random_coefficients(Signature::R22, s, 1, 3.0).unwrap();
        assert!(validate_coefficients(&big, &t).max_residual <= 1e-13);
    }

    #[test]
    fn zero_magnitude_gives_identity() {
        let s = shape(4, 4);
        for sig in [Signature::R21, Signature::R22] {
            assert_eq!(
                random_coefficients(sig, s, 1, 0.0).unwrap(),
                CoefficientField::identity(sig, s)
            );
        }
        // R31 keeps the free unimodular phase of alpha
        for (_, c) in random_coefficients(Signature::R31, s, 1, 0.0)
            .unwrap()
            .values()
            .iter()
        {
            let Coefficients::R31 { alpha, beta } = c else {
                unreachable!()
            };
            assert_eq!(*beta, ZERO);
            assert!((alpha.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degeneracy_ratio_detects_real_collinear_spinors() {
        let t = Tolerances::default();
        let s = shape(2, 2);
        let real = InitialData::constant(s, [c(1.0, 0.0), ZERO], [c(2.0, 0.0), ZERO]);
        let f = propagate(&CoefficientField::identity(Signature::R21, s), &real, s).unwrap();
        assert_eq!(
            f.first_degenerate_site(&t).map(|x| x.0),
            Some(Site::new(0, 0))
        );
        let generic = InitialData::constant(s, [c(1.0, 0.0), ZERO], [c(0.0, 1.0), ZERO]);
        let f = propagate(&CoefficientField::identity(Signature::R21, s), &generic, s).unwrap();
        assert!(f.is_nondegenerate(&t));
    }
}
