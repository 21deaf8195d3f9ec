//! `isoweier`: generate, verify, reconstruct and export discrete isotropic
//! surfaces, and run continuum-limit studies.
//!
//! Exit codes: 0 on success, 1 when a check or pipeline stage fails, 2 on
//! invalid usage. Failures print `error[CODE]: message` on stderr.

mod parse;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isoweier::io::{
    convergence_csv, convergence_table, load_reconstruction, load_surface, save_coefficients,
    save_reconstruction, save_spinors, save_surface,
};
use isoweier::{
    accumulate, check_consistency, check_isotropy, check_monotonicity, check_surface_consistency,
    check_surface_isotropy, convergence_study, edges_from_spinors, export_obj, extract_edges,
    propagate, random_coefficients, reconstruct, sample_coefficients, AmbientVector, Domain, Error,
    GridShape, InitialData, MeshSpec, Projection, Signature, SmoothPotential, Tolerances,
};
use num_complex::Complex64;

#[derive(Parser)]
#[command(
    name = "isoweier",
    version,
    about = "Discrete isotropic surfaces from discrete Dirac equations"
)]
#[command(
    after_help = "Tolerances can be overridden with ISOWEIER_TOL=\"null=1e-10,degeneracy=1e-12,relation=1e-10\"."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a surface from random or potential-sampled coefficients.
    Generate(GenerateArgs),
    /// Check isotropy, consistency and monotonicity of a stored surface.
    Verify {
        #[arg(long = "in", value_name = "SURFACE")]
        input: PathBuf,
    },
    /// Recover spinors, coefficients and gauge from a stored surface.
    Reconstruct {
        #[arg(long = "in", value_name = "SURFACE")]
        input: PathBuf,
        #[arg(long, value_name = "RESULT")]
        out: PathBuf,
    },
    /// Convergence of the discrete system to its smooth limit for a constant potential.
    Converge(ConvergeArgs),
    /// Write a surface as a quad mesh.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    R21,
    R31,
    R22,
}

impl From<Case> for Signature {
    fn from(c: Case) -> Self {
        match c {
            Case::R21 => Signature::R21,
            Case::R31 => Signature::R31,
            Case::R22 => Signature::R22,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, required_unless_present = "from")]
    case: Option<Case>,
    /// Grid size NxM.
    #[arg(long, value_parser = parse::shape, default_value = "32x32")]
    size: GridShape,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bound on the random coefficient parameters.
    #[arg(long, default_value_t = 0.5)]
    magnitude: f64,
    /// Sample coefficients from a constant potential, const:P or const:P,Q.
    #[arg(long, value_parser = parse::potential, requires = "mesh", conflicts_with = "from")]
    potential: Option<(Complex64, Option<f64>)>,
    /// Mesh size for --potential.
    #[arg(long, requires = "potential")]
    mesh: Option<f64>,
    /// Rebuild from the coefficients and initial data of a reconstruction result.
    #[arg(long, value_name = "RESULT", conflicts_with_all = ["case", "potential"])]
    from: Option<PathBuf>,
    #[arg(long, value_name = "SURFACE")]
    out: PathBuf,
    #[arg(long, value_name = "PATH")]
    spinors: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    coeffs: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long, value_enum)]
    case: Case,
    /// Potential p: real, A+Bi or R@THETA.
    #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
    p: Complex64,
    /// Second potential, R22 only.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<f64>,
    /// Domain X0,X1,Y0,Y1.
    #[arg(long, value_parser = parse::domain, default_value = "0,1,0,1", allow_hyphen_values = true)]
    domain: [f64; 4],
    #[arg(long, default_value_t = 5)]
    levels: usize,
    /// Divisions of [X0, X1] on the coarsest mesh.
    #[arg(long, default_value_t = 8)]
    coarse: usize,
    /// Emit CSV instead of the table, to PATH or stdout.
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshFormat {
    Obj,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long = "in", value_name = "SURFACE")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "obj")]
    format: MeshFormat,
    /// identity, drop:K (1-based) or linear:<3*dim entries>; 4-dimensional
    /// surfaces need one, e.g. drop:4.
    #[arg(long, value_parser = |s: &str| s.parse::<Projection>().map_err(|e| e.to_string()))]
    project: Option<Projection>,
    #[arg(long, value_name = "MESH")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Lib(Error),
    Check { code: &'static str, message: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

/// Tags a file error with its path.
fn at<T>(path: &Path, r: isoweier::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Check {
        code: e.code(),
        message: format!("{}: {e}", path.display()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error[E_USAGE]: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
        Err(Failure::Check { code, message }) => {
            eprintln!("error[{code}]: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Outcome {
    let tol = Tolerances::from_env().map_err(|e| Failure::Usage(format!("ISOWEIER_TOL: {e}")))?;
    match command {
        Command::Generate(args) => generate(args, &tol),
        Command::Verify { input } => verify(&input, &tol),
        Command::Reconstruct { input, out } => reconstruct_cmd(&input, &out, &tol),
        Command::Converge(args) => converge(args),
        Command::Export(args) => export(args),
    }
}

fn generate(args: GenerateArgs, tol: &Tolerances) -> Outcome {
    let (coefficients, init, base, shape) = if let Some(path) = &args.from {
        let r = at(path, load_reconstruction(path))?;
        let shape = r.spinors.shape();
        (
            r.coefficients,
            InitialData::from_field(&r.spinors),
            r.base,
            shape,
        )
    } else {
        let sig: Signature = args
            .case
            .expect("clap requires --case without --from")
            .into();
        let shape = args.size;
        let coefficients = match (args.potential, args.mesh) {
            (Some((p, q)), Some(h)) => {
                if sig != Signature::R22 && q.is_some() {
                    return Err(Failure::Usage(
                        "a second potential Q applies to r22 only".into(),
                    ));
                }
                let side = |k: usize| h * k as f64;
                let domain = Domain::new(0.0, side(shape.n), 0.0, side(shape.m))?;
                let pot = SmoothPotential::constant(sig, p, q.unwrap_or(0.0), domain)?;
                sample_coefficients(
                    &pot,
                    &MeshSpec {
                        h,
                        x0: 0.0,
                        y0: 0.0,
                        shape,
                    },
                )?
            }
            _ => random_coefficients(sig, shape, args.seed, args.magnitude)?,
        };
        let init = InitialData::random(sig, shape, args.seed);
        (coefficients, init, AmbientVector::zero(sig), shape)
    };
    let spinors = propagate(&coefficients, &init, shape)?;
    let edges = edges_from_spinors(&spinors);
    let iso = check_isotropy(&edges, tol);
    let cons = check_consistency(&edges, tol);
    let surface = accumulate(&edges, base, tol)?;
    at(&args.out, save_surface(&args.out, &surface))?;
    if let Some(path) = &args.spinors {
        at(path, save_spinors(path, &spinors))?;
    }
    if let Some(path) = &args.coeffs {
        at(path, save_coefficients(path, &coefficients))?;
    }
    println!(
        "{} surface {} written to {}",
        surface.signature(),
        shape,
        args.out.display()
    );
    println!("isotropy     max residual {:.3e}", iso.max_residual);
    println!("consistency  max residual {:.3e}", cons.max_residual);
    if !iso.passed {
        return Err(Failure::Check {
            code: "E_ISOTROPY",
            message: format!("{} edge(s) fail the null test", iso.failures.len()),
        });
    }
    Ok(())
}

fn verify(input: &Path, tol: &Tolerances) -> Outcome {
    let s = at(input, load_surface(input))?;
    let iso = check_surface_isotropy(&s, tol);
    let cons = check_surface_consistency(&s, tol);
    let mono = check_monotonicity(&extract_edges(&s));

    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    let worst = |w: Option<String>| w.unwrap_or_else(|| "-".into());
    let mut table = format!("{:<14}{:<8}{:<14}{}\n", "check", "result", "value", "worst");
    let _ = writeln!(
        table,
        "{:<14}{:<8}{:<14.3e}{}",
        "isotropy",
        verdict(iso.passed),
        iso.max_residual,
        worst(iso.worst.map(|e| e.to_string()))
    );
    let _ = writeln!(
        table,
        "{:<14}{:<8}{:<14.3e}{}",
        "consistency",
        verdict(cons.passed),
        cons.max_residual,
        worst(cons.worst.map(|e| e.to_string()))
    );
    if mono.applicable {
        let _ = writeln!(
            table,
            "{:<14}{:<8}{:<14.3e}{}",
            "monotonicity",
            verdict(mono.passed),
            mono.min_increment,
            worst(mono.worst.map(|e| e.to_string()))
        );
    } else {
        let _ = writeln!(table, "{:<14}{:<8}{:<14}-", "monotonicity", "n/a", "-");
    }
    print!("{table}");

    let list = |ids: Vec<String>| {
        let shown: Vec<_> = ids.iter().take(8).cloned().collect();
        let more = ids.len().saturating_sub(shown.len());
        let tail = if more > 0 {
            format!(" and {more} more")
        } else {
            String::new()
        };
        format!("{}{tail}", shown.join(", "))
    };
    if !iso.passed {
        let ids = iso.failures.iter().map(|e| e.to_string()).collect();
        return Err(Failure::Check {
            code: "E_ISOTROPY",
            message: format!("edges not isotropic: {}", list(ids)),
        });
    }
    if !cons.passed {
        let ids = cons.failures.iter().map(|s| s.to_string()).collect();
        return Err(Failure::Check {
            code: "E_CONSISTENCY",
            message: format!("plaquettes do not close: {}", list(ids)),
        });
    }
    if !mono.passed {
        let ids = mono.failures.iter().map(|e| e.to_string()).collect();
        return Err(Failure::Check {
            code: "E_MONOTONICITY",
            message: format!("time-like coordinate does not increase along {}", list(ids)),
        });
    }
    Ok(())
}

fn reconstruct_cmd(input: &Path, out: &Path, tol: &Tolerances) -> Outcome {
    let s = at(input, load_surface(input))?;
    let r = reconstruct(&s, tol)?;
    at(out, save_reconstruction(out, &r))?;
    let res = &r.residuals;
    println!(
        "reconstructed {} lattice {} into {}",
        s.signature(),
        s.shape(),
        out.display()
    );
    println!("relations        {:.3e}", res.relations);
    println!("constraint       {:.3e}", res.constraint);
    println!("|lambda - 1|     {:.3e}", res.lambda);
    println!("edge round trip  {:.3e}", res.edge_round_trip);
    Ok(())
}

fn converge(args: ConvergeArgs) -> Outcome {
    let sig: Signature = args.case.into();
    if sig != Signature::R22 && args.q.is_some() {
        return Err(Failure::Usage("--q applies to r22 only".into()));
    }
    let [x0, x1, y0, y1] = args.domain;
    let pot = SmoothPotential::constant(
        sig,
        args.p,
        args.q.unwrap_or(0.0),
        Domain::new(x0, x1, y0, y1)?,
    )?;
    let report = convergence_study(&pot, args.levels, args.coarse)?;
    match &args.csv {
        Some(path) if path.as_os_str() == "-" => print!("{}", convergence_csv(&report)),
        Some(path) => {
            at(
                path,
                fs::write(path, convergence_csv(&report)).map_err(Error::from),
            )?;
            print!("{}", convergence_table(&report));
        }
        None => print!("{}", convergence_table(&report)),
    }
    if !report.errors_strictly_decrease() {
        return Err(Failure::Check {
            code: "E_CONVERGENCE",
            message: "spinor error does not decrease under refinement".into(),
        });
    }
    Ok(())
}

fn export(args: ExportArgs) -> Outcome {
    let s = at(&args.input, load_surface(&args.input))?;
    let dim = s.signature().dim();
    let proj = match args.project {
        Some(p) => p,
        None if dim == 3 => Projection::Identity,
        None => {
            return Err(Failure::Usage(format!(
                "{} surfaces are 4-dimensional; pass --project (for example drop:4)",
                s.signature()
            )))
        }
    };
    let text = match args.format {
        MeshFormat::Obj => export_obj(&s, &proj)?,
    };
    at(&args.out, fs::write(&args.out, text).map_err(Error::from))?;
    println!(
        "wrote {} vertices to {}",
        s.shape().site_count(),
        args.out.display()
    );
    Ok(())
}
