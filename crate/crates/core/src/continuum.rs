//! Continuum-limit harness.
//!
//! Coefficients are sampled on a mesh of size `h` by setting `beta = h p`
//! (and `gamma = h q` for `R22`), with `alpha` on the positive real branch
//! of the case constraint. For constant potentials the continuous Dirac
//! system has closed-form solutions, which serve as the reference for
//! measuring how fast propagated discrete spinors approach it.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::dirac::{propagate, CoefficientField, Coefficients, InitialData, Spinor};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridShape, Site};
use crate::metric::Signature;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`. `x` runs along `n`, `y` along `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Domain {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite()
            && x1.is_finite()
            && y0.is_finite()
            && y1.is_finite()
            && x1 > x0
            && y1 > y0)
        {
            return Err(Error::InvalidInput(format!(
                "domain [{x0}, {x1}] x [{y0}, {y1}] is empty or not finite"
            )));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn unit_square() -> Self {
        Self {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }
}

pub type ComplexFn = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Potential {
    Constant { p: Complex64, q: f64 },
    Field { p: ComplexFn, q: RealFn },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Constant { p, q } => write!(f, "Constant {{ p: {p}, q: {q} }}"),
            Potential::Field { .. } => f.write_str("Field { .. }"),
        }
    }
}

/// A potential `p` (complex for `R31`, real otherwise) and, for `R22`, `q`.
#[derive(Debug, Clone)]
pub struct SmoothPotential {
    signature: Signature,
    potential: Potential,
    domain: Domain,
}

impl SmoothPotential {
    pub fn constant(signature: Signature, p: Complex64, q: f64, domain: Domain) -> Result<Self> {
        if signature != Signature::R31 && p.im != 0.0 {
            return Err(Error::InvalidInput(format!(
                "{signature} potentials are real, got p = {p}"
            )));
        }
        if !(p.re.is_finite() && p.im.is_finite() && q.is_finite()) {
            return Err(Error::InvalidInput(
                "potential values must be finite".into(),
            ));
        }
        Ok(Self {
            signature,
            potential: Potential::Constant { p, q },
            domain,
        })
    }

    pub fn field(signature: Signature, p: ComplexFn, q: RealFn, domain: Domain) -> Self {
        Self {
            signature,
            potential: Potential::Field { p, q },
            domain,
        }
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn with_domain(&self, domain: Domain) -> Self {
        Self {
            domain,
            ..self.clone()
        }
    }

    pub fn p(&self, x: f64, y: f64) -> Complex64 {
        match &self.potential {
            Potential::Constant { p, .. } => *p,
            Potential::Field { p, .. } => p(x, y),
        }
    }

    pub fn q(&self, x: f64, y: f64) -> f64 {
        match &self.potential {
            Potential::Constant { q, .. } => *q,
            Potential::Field { q, .. } => q(x, y),
        }
    }
}

/// Mesh of size `h` anchored at `(x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub h: f64,
    pub x0: f64,
    pub y0: f64,
    pub shape: GridShape,
}

impl MeshSpec {
    /// The mesh of size `h` covering `domain`; `h` must divide both sides.
    pub fn covering(domain: Domain, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mesh size must be positive, got {h}"
            )));
        }
        let steps = |len: f64| -> Result<usize> {
            let k = (len / h).round();
            if k < 1.0 || (k * h - len).abs() > 1e-9 * len {
                return Err(Error::InvalidInput(format!(
                    "mesh size {h} does not divide side length {len}"
                )));
            }
            Ok(k as usize)
        };
        let shape = GridShape::new(steps(domain.x1 - domain.x0)?, steps(domain.y1 - domain.y0)?)?;
        Ok(Self {
            h,
            x0: domain.x0,
            y0: domain.y0,
            shape,
        })
    }

    pub fn x(&self, n: usize) -> f64 {
        self.x0 + n as f64 * self.h
    }

    pub fn y(&self, m: usize) -> f64 {
        self.y0 + m as f64 * self.h
    }
}

pub fn sample_coefficients(pot: &SmoothPotential, mesh: &MeshSpec) -> Result<CoefficientField> {
    let sig = pot.signature;
    let h = mesh.h;
    let mut values = Vec::with_capacity(mesh.shape.site_count());
    for site in mesh.shape.sites() {
        let (x, y) = (mesh.x(site.n), mesh.y(site.m));
        let p = pot.p(x, y);
        if !(p.re.is_finite() && p.im.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "potential is not finite at {site}"
            )));
        }
        if sig != Signature::R31 && p.im != 0.0 {
            return Err(Error::InvalidInput(format!(
                "{sig} potential must be real, got {p} at {site}"
            )));
        }
        values.push(match sig {
            Signature::R21 => {
                let beta = h * p.re;
                Coefficients::R21 {
                    alpha: (1.0 + beta * beta).sqrt(),
                    beta,
                }
            }
            Signature::R31 => {
                let beta = p * h;
                Coefficients::R31 {
                    alpha: Complex64::new((1.0 + beta.norm_sqr()).sqrt(), 0.0),
                    beta,
                }
            }
            Signature::R22 => {
                let (beta, gamma) = (h * p.re, h * pot.q(x, y));
                let s = 1.0 + beta * gamma;
                if !(s > 0.0) {
                    return Err(Error::MeshTooCoarse { site, value: s });
                }
                let alpha = s.sqrt();
                Coefficients::R22 {
                    alpha,
                    beta,
                    gamma,
                    delta: alpha,
                }
            }
        });
    }
    CoefficientField::new(
        sig,
        mesh.shape,
        Grid::from_vec(mesh.shape.n + 1, mesh.shape.m + 1, values)?,
    )
}

/// Closed-form solution of the continuous system for a constant potential.
/// Every case depends on `(x, y)` only through `s = x + y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    signature: Signature,
    p: Complex64,
    q: f64,
}

/// Amplitudes of the `R31` solution; any pair works.
const R31_AMPLITUDES: [Complex64; 2] = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];

impl ExactSolution {
    pub fn eval(&self, x: f64, y: f64) -> Spinor {
        let s = x + y;
        match self.signature {
            Signature::R21 => {
                let p = self.p.re;
                Spinor::r21((p * s).cosh().into(), (p * s).sinh().into())
            }
            Signature::R31 => {
                let r = self.p.norm();
                let e = (r * s).exp();
                let phase = if r > 0.0 {
                    self.p.conj() / r
                } else {
                    Complex64::new(1.0, 0.0)
                };
                let [c1, c2] = R31_AMPLITUDES;
                Spinor::pair([c1 * e, c2 * e], [phase * c1 * e, phase * c2 * e])
            }
            Signature::R22 => {
                // C' = pq S, S' = C: cosh/sinh, cos/sin or polynomial by the sign of pq
                let (p, q) = (self.p.re, self.q);
                let k2 = p * q;
                let (c, sn) = if k2 > 0.0 {
                    let k = k2.sqrt();
                    ((k * s).cosh(), (k * s).sinh() / k)
                } else if k2 < 0.0 {
                    let k = (-k2).sqrt();
                    ((k * s).cos(), (k * s).sin() / k)
                } else {
                    (1.0, s)
                };
                Spinor::pair([c.into(), c.into()], [(q * sn).into(), (p * sn).into()])
            }
        }
    }
}

pub fn exact_solution(pot: &SmoothPotential) -> Result<ExactSolution> {
    match pot.potential {
        Potential::Constant { p, q } => Ok(ExactSolution {
            signature: pot.signature,
            p,
            q,
        }),
        Potential::Field { .. } => Err(Error::UnsupportedOracle(
            "closed-form solutions exist only for constant potentials".into(),
        )),
    }
}

fn spinor_distance(sig: Signature, a: &Spinor, b: &Spinor) -> f64 {
    (0..sig.spinor_pairs())
        .flat_map(|i| [(a.phi[i] - b.phi[i]).norm(), (a.psi[i] - b.psi[i]).norm()])
        .fold(0.0, f64::max)
}

/// Largest discrepancy of one discrete step, started from exact values,
/// against the exact solution one mesh step further.
pub fn step_error(pot: &SmoothPotential, mesh: &MeshSpec) -> Result<f64> {
    let exact = exact_solution(pot)?;
    let sig = pot.signature;
    let coeffs = sample_coefficients(pot, mesh)?.generalized();
    let mut worst = 0.0f64;
    for m in 0..mesh.shape.m {
        for n in 0..mesh.shape.n {
            let (x, y) = (mesh.x(n), mesh.y(m));
            let here = exact.eval(x, y);
            let up = exact.eval(x, y + mesh.h);
            let right = exact.eval(x + mesh.h, y);
            let q = &coeffs[(n, m)];
            for i in 0..sig.spinor_pairs() {
                let phi_up = q[i].alpha * here.phi[i] + q[i].beta * here.psi[i];
                let psi_right = q[i].gamma * here.phi[i] + q[i].delta * here.psi[i];
                worst = worst
                    .max((phi_up - up.phi[i]).norm())
                    .max((psi_right - right.psi[i]).norm());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceLevel {
    pub h: f64,
    /// Largest spinor error over the sites of the coarsest mesh.
    pub max_error: f64,
    /// Largest one-step discrepancy, see [`step_error`].
    pub step_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub signature: Signature,
    pub levels: Vec<ConvergenceLevel>,
    /// `log2(e_h / e_{h/2})` between consecutive levels; `None` when an error vanishes.
    pub orders: Vec<Option<f64>>,
}

impl ConvergenceReport {
    pub fn errors_strictly_decrease(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].max_error < w[0].max_error)
    }

    /// `step_error / h^2` per level.
    pub fn truncation_ratios(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|l| l.step_error / (l.h * l.h))
            .collect()
    }
}

/// Propagates exact boundary data on meshes `h0, h0/2, ...` with
/// `h0 = (x1 - x0) / coarse_divisions`, and measures the error against the
/// exact solution.
pub fn convergence_study(
    pot: &SmoothPotential,
    levels: usize,
    coarse_divisions: usize,
) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::InvalidInput(format!(
            "a convergence study needs at least 3 levels, got {levels}"
        )));
    }
    if coarse_divisions == 0 {
        return Err(Error::InvalidInput(
            "coarse_divisions must be positive".into(),
        ));
    }
    let exact = exact_solution(pot)?;
    let sig = pot.signature;
    let domain = pot.domain;
    let h0 = (domain.x1 - domain.x0) / coarse_divisions as f64;
    let coarse = MeshSpec::covering(domain, h0)?;

    let mut out = Vec::with_capacity(levels);
    for k in 0..levels {
        let refine = 1usize << k;
        let h = h0 / refine as f64;
        let mesh = MeshSpec::covering(domain, h)?;
        let coeffs = sample_coefficients(pot, &mesh)?;
        let init = InitialData {
            phi_row: (0..=mesh.shape.n)
                .map(|n| exact.eval(mesh.x(n), mesh.y0).phi)
                .collect(),
            psi_col: (0..=mesh.shape.m)
                .map(|m| exact.eval(mesh.x0, mesh.y(m)).psi)
                .collect(),
        };
        let field = propagate(&coeffs, &init, mesh.shape)?;
        let mut max_error = 0.0f64;
        for site in coarse.shape.sites() {
            let Site { n, m } = site;
            let (fine_n, fine_m) = (n * refine, m * refine);
            let e = exact.eval(mesh.x(fine_n), mesh.y(fine_m));
            max_error = max_error.max(spinor_distance(sig, field.at(fine_n, fine_m), &e));
        }
        out.push(ConvergenceLevel {
            h,
            max_error,
            step_error: step_error(pot, &mesh)?,
        });
    }
    let orders = out
        .windows(2)
        .map(|w| {
            (w[0].max_error > 0.0 && w[1].max_error > 0.0)
                .then(|| (w[0].max_error / w[1].max_error).log2())
        })
        .collect();
    Ok(ConvergenceReport {
        signature: sig,
        levels: out,
        orders,
    })
}
