use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use defc::deformation::Deformation;
use defc::moduli::{self, BSurface};
use defc::series::{LoopSpec, Resolution};
use defc::suite::{self, Config, SuiteError, SuiteReport};
use defc::witt::VectorField;

#[derive(Parser)]
#[command(name = "defc", version, about = "Complex deformations of the circle, Witt cocycles and genus-0 sewing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Laurent modes kept on each side.
    #[arg(long, global = true, default_value_t = 64)]
    modes: usize,
    /// Grid samples (default 4 * modes).
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Override every suite tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long = "fd-step", global = true, default_value_t = defc::cocycles::FD_STEP)]
    fd_step: f64,
    #[arg(long = "rot-iters", global = true, default_value_t = defc::conformal::ROT_ITERS)]
    rot_iters: usize,
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one operation: compose, invert, winding, cr, rot, rcr, decompose,
    /// bracket, pullback, flow, cocycle.
    Eval { op: String, args: String },
    Decompose { map: String },
    Cr { map: String },
    Rot { map: String },
    Rcr { map: String },
    OmegaRcr { left: String, right: String },
    Cocycle {
        #[arg(long, value_parser = ["bt", "gf", "rot", "rcr"])]
        kind: String,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
    /// Run a named verification suite: witt, cocycles, decompose, moduli, all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 4)]
        nmax: i64,
    },
    #[command(subcommand)]
    Moduli(ModuliCmd),
}

#[derive(Subcommand)]
enum ModuliCmd {
    /// Sew the inner boundary of A_tau to the outer boundary of A_tau2.
    Sew {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        tau2: f64,
    },
    /// Act on A_tau at a boundary (`--boundary 1|2`) or along `|z| = r`.
    Act {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        map: String,
        #[arg(long)]
        boundary: Option<usize>,
        #[arg(long)]
        r: Option<f64>,
    },
    /// Modulus of A_tau with optional boundary dressings.
    Modulus {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        psi: Option<String>,
    },
    /// Kernel residual of a field on A_tau, plus the interior-to-boundary
    /// residual when `--r` is given.
    Virasoro {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        field: String,
        #[arg(long, default_value_t = defc::cocycles::FD_STEP)]
        h: f64,
        #[arg(long)]
        r: Option<f64>,
    },
}

fn parse_json(text: &str) -> Result<Value, SuiteError> {
    serde_json::from_str(text).map_err(|e| SuiteError::Schema(e.to_string()))
}

fn deformation(text: &str, res: Resolution) -> Result<Deformation, SuiteError> {
    let spec = LoopSpec::parse(text).map_err(|e| SuiteError::Schema(e.to_string()))?;
    Deformation::from_spec(&spec, res).map_err(|e| SuiteError::Numeric(e.to_string()))
}

fn numeric<E: std::fmt::Display>(e: E) -> SuiteError {
    SuiteError::Numeric(e.to_string())
}

fn surface_json(s: &BSurface) -> Result<Value, SuiteError> {
    let nf = s.normal_form().map_err(numeric)?;
    Ok(json!({
        "kind": nf.kind,
        "tau": nf.tau,
        "phi": nf.phi.to_spec(),
        "psi": nf.psi.to_spec(),
    }))
}

fn emit(value: &Value, out: Option<&PathBuf>) -> Result<(), SuiteError> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn emit_report(report: &SuiteReport, g: &Global) -> Result<(), SuiteError> {
    let format = g.format.unwrap_or(match g.out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    });
    let text = match format {
        Format::Csv => report.to_csv()?,
        Format::Json => report.to_json()?,
    };
    match &g.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    eprintln!("{}: {} checks, {} failed", report.suite, report.checks.len(), failed);
    Ok(())
}

fn run(cli: Cli) -> Result<bool, SuiteError> {
    let g = &cli.global;
    let res = match g.samples {
        Some(m) => Resolution::with_samples(g.modes, m).map_err(numeric)?,
        None => {
            let r = Resolution::new(g.modes);
            r.validate().map_err(numeric)?;
            r
        }
    };
    let cfg = Config { res, tol: g.tol, fd_step: g.fd_step, rot_iters: g.rot_iters, seed: g.seed, nmax: 4 };
    let out = g.out.as_ref();
    match &cli.command {
        Command::Eval { op, args } => emit(&suite::eval(op, &parse_json(args)?, &cfg)?, out)?,
        Command::Decompose { map } | Command::Rcr { map } => {
            emit(&suite::conformal_record(&deformation(map, res)?, cfg.rot_iters)?, out)?
        }
        Command::Cr { map } => emit(&suite::eval("cr", &parse_json(map)?, &cfg)?, out)?,
        Command::Rot { map } => emit(&suite::eval("rot", &parse_json(map)?, &cfg)?, out)?,
        Command::OmegaRcr { left, right } => {
            let v = suite::cocycle_value("rcr", &json!([parse_json(left)?, parse_json(right)?]), &cfg)?;
            emit(&json!({"re": v.re, "im": v.im}), out)?
        }
        Command::Cocycle { kind, left, right } => {
            let v = suite::cocycle_value(kind, &json!([parse_json(left)?, parse_json(right)?]), &cfg)?;
            emit(&json!({"kind": kind, "re": v.re, "im": v.im}), out)?
        }
        Command::Verify { suite: name, nmax } => {
            let report = suite::run_suite(name, &Config { nmax: *nmax, ..cfg })?;
            emit_report(&report, g)?;
            return Ok(report.passed());
        }
        Command::Moduli(cmd) => match cmd {
            ModuliCmd::Sew { tau, tau2 } => {
                let a = BSurface::standard_annulus(*tau, res).map_err(numeric)?;
                let b = BSurface::standard_annulus(*tau2, res).map_err(numeric)?;
                emit(&surface_json(&moduli::sew(&a, 2, &b, 1).map_err(numeric)?)?, out)?
            }
            ModuliCmd::Act { tau, map, boundary, r } => {
                let a = BSurface::standard_annulus(*tau, res).map_err(numeric)?;
                let phi = deformation(map, res)?;
                let s = match (boundary, r) {
                    (Some(j), None) => a.act_boundary(*j, &phi),
                    (None, Some(r)) => a.act_interior(*r, &phi),
                    _ => return Err(SuiteError::Schema("give exactly one of --boundary or --r".into())),
                }
                .map_err(numeric)?;
                emit(&surface_json(&s)?, out)?
            }
            ModuliCmd::Modulus { tau, phi, psi } => {
                let mut s = BSurface::standard_annulus(*tau, res).map_err(numeric)?;
                if let Some(p) = phi {
                    s = s.act_boundary(1, &deformation(p, res)?).map_err(numeric)?;
                }
                if let Some(p) = psi {
                    s = s.act_boundary(2, &deformation(p, res)?).map_err(numeric)?;
                }
                emit(&json!({"modulus": s.modulus().map_err(numeric)?}), out)?
            }
            ModuliCmd::Virasoro { tau, field, h, r } => {
                let spec = LoopSpec::parse(field).map_err(|e| SuiteError::Schema(e.to_string()))?;
                let v = VectorField::from_spec(&spec, res).map_err(numeric)?;
                let kernel = moduli::virasoro_kernel_residual(*tau, &v, *h).map_err(numeric)?;
                let r = r.unwrap_or((-PI * tau).exp());
                let interior = moduli::interior_equals_boundary_residual(*tau, r, &v, *h).map_err(numeric)?;
                emit(&json!({"tau": tau, "r": r, "h": h, "kernel_residual": kernel, "interior_residual": interior}), out)?
            }
        },
    }
    Ok(true)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("DEFC_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
