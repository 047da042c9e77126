//! Named verification suites and single-operation dispatch for the command
//! line front end.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cocycles::{self, GroupCochain2};
use crate::conformal;
use crate::deformation::{random_near_identity, Deformation};
use crate::moduli::{self, BSurface};
use crate::series::{grid, AnalyticLoop, LoopSpec, Resolution, C64};
use crate::witt::{self, TimeField, VectorField};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("unknown operation {0:?}")]
    UnknownOp(String),
    #[error("bad arguments: {0}")]
    Schema(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SuiteError> = std::result::Result<T, E>;

fn numeric<E: std::fmt::Display>(e: E) -> SuiteError {
    SuiteError::Numeric(e.to_string())
}

pub const SUITES: [&str; 4] = ["witt", "cocycles", "decompose", "moduli"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub res: Resolution,
    /// Overrides every check tolerance when set.
    pub tol: Option<f64>,
    pub fd_step: f64,
    pub rot_iters: usize,
    pub seed: u64,
    pub nmax: i64,
}

impl Default for Config {
    fn default() -> Self {
        Config { res: Resolution::default(), tol: None, fd_step: cocycles::FD_STEP, rot_iters: conformal::ROT_ITERS, seed: 7, nmax: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub target_re: f64,
    pub target_im: f64,
    pub computed_re: f64,
    pub computed_im: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.checks {
            w.serialize(c)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| numeric(e.to_string()))?).map_err(numeric)
    }
}

/// One pending check: id, target, tolerance and the computation.
type Job<'a> = (String, C64, f64, Box<dyn Fn() -> Result<C64> + Send + Sync + 'a>);

fn job<'a>(id: impl Into<String>, target: C64, tol: f64, f: impl Fn() -> Result<C64> + Send + Sync + 'a) -> Job<'a> {
    (id.into(), target, tol, Box::new(f))
}

fn run_jobs(suite: &str, cfg: &Config, jobs: Vec<Job<'_>>) -> SuiteReport {
    let mut checks: Vec<Check> = jobs
        .into_par_iter()
        .map(|(id, target, tol, f)| {
            let tol = cfg.tol.unwrap_or(tol);
            let start = Instant::now();
            let (value, residual) = match f() {
                Ok(v) => (v, (v - target).norm()),
                Err(_) => (C64::new(f64::NAN, f64::NAN), f64::INFINITY),
            };
            Check {
                id,
                target_re: target.re,
                target_im: target.im,
                computed_re: value.re,
                computed_im: value.im,
                residual,
                tolerance: tol,
                pass: residual <= tol,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect();
    checks.sort_by(|a, b| a.id.cmp(&b.id));
    SuiteReport { suite: suite.into(), seed: cfg.seed, checks }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

const ZERO: C64 = C64::new(0.0, 0.0);

pub fn run_suite(name: &str, cfg: &Config) -> Result<SuiteReport> {
    let jobs = match name {
        "witt" => witt_jobs(cfg),
        "cocycles" => cocycle_jobs(cfg),
        "decompose" => decompose_jobs(cfg),
        "moduli" => moduli_jobs(cfg),
        "all" => {
            let mut checks = Vec::new();
            for s in SUITES {
                checks.extend(run_suite(s, cfg)?.checks.into_iter().map(|mut c| {
                    c.id = format!("{s}/{}", c.id);
                    c
                }));
            }
            return Ok(SuiteReport { suite: "all".into(), seed: cfg.seed, checks });
        }
        other => return Err(SuiteError::UnknownSuite(other.into())),
    };
    Ok(run_jobs(name, cfg, jobs))
}

fn gen(n: i64, res: Resolution) -> Result<VectorField> {
    VectorField::generator(n, res).map_err(numeric)
}

fn witt_jobs(cfg: &Config) -> Vec<Job<'static>> {
    let res = cfg.res;
    let mut jobs = Vec::new();
    for n in -16..=16i64 {
        for m in -16..=16i64 {
            jobs.push(job(format!("bracket/{n:+03}/{m:+03}"), ZERO, 1e-12, move || {
                let lhs = gen(n, res)?.bracket(&gen(m, res)?).map_err(numeric)?;
                let rhs = gen(n + m, res)?.scale(real((n - m) as f64));
                Ok(real(lhs.distance(&rhs)))
            }));
        }
        jobs.push(job(format!("inversion_pullback/{n:+03}"), ZERO, 1e-12, move || {
            let lhs = gen(n, res)?.pullback(&AnalyticLoop::inversion(res)).map_err(numeric)?;
            Ok(real(lhs.distance(&gen(-n, res)?.scale(real(-1.0)))))
        }));
    }
    for n in -2..=2i64 {
        for t in [-0.2, 0.2] {
            jobs.push(job(format!("flow_ode/{n:+}/{t:+}"), ZERO, 1e-8, move || {
                let ode = witt::flow_ode(&TimeField::constant(gen(n, res)?), t, 1000).map_err(numeric)?;
                Ok(real(ode.map.distance(&witt::exact_flow(n, t, res).map_err(numeric)?)))
            }));
        }
    }
    let seed = cfg.seed;
    jobs.push(job("jacobi/random", ZERO, 1e-10, move || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let mut field = || -> Result<VectorField> {
                let terms: Vec<(i64, C64)> =
                    (-3..=3).map(|k| (k, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))).collect();
                Ok(VectorField::new(AnalyticLoop::from_coeffs(&terms, res).map_err(numeric)?))
            };
            let (u, v, w) = (field()?, field()?, field()?);
            let b = |a: &VectorField, c: &VectorField| a.bracket(c).map_err(numeric);
            let total = b(&u, &b(&v, &w)?)?.add(&b(&v, &b(&w, &u)?)?).add(&b(&w, &b(&u, &v)?)?);
            worst = worst.max(total.as_loop().scale());
        }
        Ok(real(worst))
    }));
    jobs
}

/// Composable triples `(a, b, c)` of small polynomial perturbations of the
/// identity: all of `(a, b)`, `(b, c)`, `(ab, c)`, `(a, bc)` composable.
pub fn random_triples(seed: u64, count: usize, size: f64, res: Resolution) -> Vec<[Deformation; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = random_near_identity(&mut rng, size, res);
        let b = random_near_identity(&mut rng, size, res);
        let c = random_near_identity(&mut rng, size, res);
        let ok = a.is_composable(&b)
            && b.is_composable(&c)
            && a.compose(&b).map(|ab| ab.is_composable(&c)).unwrap_or(false)
            && b.compose(&c).map(|bc| a.is_composable(&bc)).unwrap_or(false);
        if ok {
            out.push([a, b, c]);
        }
    }
    out
}

fn cocycle_jobs(cfg: &Config) -> Vec<Job<'static>> {
    let (res, h) = (cfg.res, cfg.fd_step);
    let mut jobs = Vec::new();
    for n in -8..=8i64 {
        jobs.push(job(format!("gf/{n:+}"), C64::new(0.0, (n * n * n) as f64 / 12.0), 1e-10, move || {
            Ok(cocycles::gelfand_fuks(&gen(n, res)?, &gen(-n, res)?))
        }));
        jobs.push(job(format!("rot/{n:+}"), C64::new(0.0, n as f64 / 12.0), 1e-10, move || {
            Ok(cocycles::omega_rot(&gen(n, res)?, &gen(-n, res)?))
        }));
    }
    let bt = GroupCochain2::bott_thurston();
    for n in 1..=cfg.nmax {
        let bt = bt.clone();
        let target = C64::new(0.0, (n * n * n - n) as f64 / 12.0);
        jobs.push(job(format!("van_est_bt/{n}"), target, 5e-5, move || {
            Ok(cocycles::van_est(&bt, &gen(n, res)?, &gen(-n, res)?, h).map_err(numeric)?.value())
        }));
    }
    for (n, m) in [(1, 2), (2, -1), (1, 1)] {
        let bt = bt.clone();
        jobs.push(job(format!("van_est_bt_offdiag/{n:+}/{m:+}"), ZERO, 5e-5, move || {
            Ok(cocycles::van_est(&bt, &gen(n, res)?, &gen(m, res)?, h).map_err(numeric)?.value())
        }));
    }
    for n in 1..=cfg.nmax.min(3) {
        jobs.push(job(format!("van_est_rcr/{n}"), C64::new(0.0, n as f64 / 12.0), 1e-3, move || {
            Ok(cocycles::van_est(&GroupCochain2::rcr(), &gen(n, res)?, &gen(-n, res)?, h).map_err(numeric)?.value())
        }));
    }
    for n in 0..=4i64 {
        let target = if n == 0 { real(-1.0) } else { ZERO };
        jobs.push(job(format!("rcr_derivative/{n}"), target, 1e-6, move || {
            cocycles::rcr_derivative(&gen(n, res)?, h).map_err(numeric)
        }));
    }
    let seed = cfg.seed;
    let shared: Arc<OnceLock<Vec<[Deformation; 3]>>> = Arc::default();
    let cache = shared.clone();
    jobs.push(job("dgrp_bt/100_triples", ZERO, 1e-8, move || {
        let triples = cache.get_or_init(|| random_triples(seed, 100, 0.05, res));
        let worst = triples
            .par_iter()
            .map(|[a, b, c]| cocycles::group_differential(&bt, a, b, c).map(|v| v.norm()).map_err(numeric))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(real(worst))
    }));
    jobs.push(job("associativity/100_triples", ZERO, 1e-9, move || {
        let triples = shared.get_or_init(|| random_triples(seed, 100, 0.05, res));
        let mut worst: f64 = 0.0;
        for [a, b, c] in triples {
            let l = a.compose(b).and_then(|ab| ab.compose(c)).map_err(numeric)?;
            let r = b.compose(c).and_then(|bc| a.compose(&bc)).map_err(numeric)?;
            worst = worst.max(l.distance(&r));
        }
        Ok(real(worst))
    }));
    for (label, c2, power) in [("linear", 2i64, 1u32), ("cubic", 8, 3)] {
        jobs.push(job(format!("recursion/{label}"), ZERO, 0.0, move || {
            let r = |k: i64| BigRational::from_integer(k.into());
            let seq = cocycles::cohomology_recursion(r(1), r(c2), 50);
            let bad = seq.iter().enumerate().filter(|(k, c)| **c != r((*k as i64 + 1).pow(power))).count();
            Ok(real(bad as f64))
        }));
    }
    jobs
}

/// Forward-generated `(q, h)`: `q(z) = c (z + a_2 z^2 + a_3 z^3 + a_4 z^4)`
/// with `|a_k| <= 0.1` and `c` in `[0.8, 1.2]`, `h` a rotated disk
/// automorphism with `|a| <= 0.2`.
pub fn forward_pair(rng: &mut ChaCha8Rng, res: Resolution) -> Result<(AnalyticLoop, AnalyticLoop)> {
    let scale = rng.random_range(0.8..1.2);
    let mut q_terms = vec![(1, real(scale))];
    for k in 2..=4 {
        q_terms.push((k, C64::from_polar(0.1 * rng.random_range(0.0..1.0f64), rng.random_range(0.0..2.0 * PI)) * scale));
    }
    let q = AnalyticLoop::from_coeffs(&q_terms, res).map_err(numeric)?;
    let a = C64::from_polar(0.2 * rng.random_range(0.0..1.0f64), rng.random_range(0.0..2.0 * PI));
    let spin = C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
    let h = AnalyticLoop::from_fn(res, |z| spin * (z - a) / (C64::new(1.0, 0.0) - a.conj() * z)).map_err(numeric)?;
    Ok((q, h))
}

fn decompose_jobs(cfg: &Config) -> Vec<Job<'static>> {
    let (res, seed, iters) = (cfg.res, cfg.seed, cfg.rot_iters);
    let mut jobs = Vec::new();
    for trial in 0..5u64 {
        let build = move || -> Result<(AnalyticLoop, conformal::Decomposition, Deformation)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial));
            let (q, h) = forward_pair(&mut rng, res)?;
            let m = 2 * res.samples;
            let vals: Vec<C64> = h.samples_on(m).iter().map(|&w| q.value_at(w)).collect();
            let phi = Deformation::new(AnalyticLoop::from_samples(&vals, res).map_err(numeric)?).map_err(numeric)?;
            let d = conformal::decompose_with(&phi, iters).map_err(numeric)?;
            Ok((q, d, phi))
        };
        jobs.push(job(format!("recover/{trial}"), ZERO, 1e-8, move || {
            let (_, d, phi) = build()?;
            let m = 2 * res.samples;
            let worst = grid(m)
                .into_iter()
                .map(|z| (d.q.value_at(d.h.value_at(z)) - phi.value_at(z)).norm())
                .fold(0.0, f64::max);
            Ok(real(worst))
        }));
        jobs.push(job(format!("cr/{trial}"), ZERO, 1e-8, move || {
            let (q, d, _) = build()?;
            Ok(real(d.cr - 1.0 / q.coeff(1).re))
        }));
    }
    for alpha in [0.3, 1.0, 2.5] {
        jobs.push(job(format!("rotation/{alpha}"), real(alpha), 2.0 * PI / iters as f64 + 1e-9, move || {
            Ok(real(conformal::decompose_with(&Deformation::rotation(alpha, res), iters).map_err(numeric)?.rot))
        }));
    }
    jobs.push(job("cr/scaling_0.1", real((0.2 * PI).exp()), 1e-10, move || {
        Ok(real(conformal::conformal_radius(&Deformation::scaling(0.1, res)).map_err(numeric)?))
    }));
    jobs
}

fn moduli_jobs(cfg: &Config) -> Vec<Job<'static>> {
    let (res, h) = (cfg.res, cfg.fd_step);
    let taus = [0.05, 0.1, 0.25, 0.5];
    let mut jobs = Vec::new();
    let annulus = move |t: f64| BSurface::standard_annulus(t, res).map_err(numeric);
    for t1 in taus {
        for t2 in taus {
            jobs.push(job(format!("additivity/{t1}/{t2}"), real(t1 + t2), 1e-8, move || {
                let s = moduli::sew(&annulus(t1)?, 2, &annulus(t2)?, 1).map_err(numeric)?;
                Ok(real(s.modulus().map_err(numeric)?))
            }));
        }
    }
    for (tau, s) in [(0.25, 0.05), (0.1, 0.2)] {
        jobs.push(job(format!("boundary_scaling/{tau}/{s}"), real(tau + s), 1e-8, move || {
            let a = annulus(tau)?.act_boundary(2, &Deformation::scaling(s, res)).map_err(numeric)?;
            Ok(real(a.modulus().map_err(numeric)?))
        }));
        jobs.push(job(format!("interior_scaling/{tau}/{s}"), real(tau + s), 1e-8, move || {
            let r = (-PI * tau).exp();
            let a = annulus(tau)?.act_interior(r, &Deformation::scaling(s, res)).map_err(numeric)?;
            Ok(real(a.modulus().map_err(numeric)?))
        }));
    }
    for n in -2..=2i64 {
        jobs.push(job(format!("kernel/{n:+}"), ZERO, 1e-6, move || {
            Ok(real(moduli::virasoro_kernel_residual(0.25, &gen(n, res)?, h).map_err(numeric)?))
        }));
    }
    for n in [0, 2] {
        jobs.push(job(format!("interior_to_boundary/{n}"), ZERO, 1e-5, move || {
            let r = (-PI * 0.25).exp();
            Ok(real(moduli::interior_equals_boundary_residual(0.25, r, &gen(n, res)?, h).map_err(numeric)?))
        }));
    }
    jobs.push(job("control/l0", real(1.0 / (2.0 * PI)), 1e-6, move || {
        Ok(real(moduli::single_boundary_rate(0.25, 2, &gen(0, res)?, h).map_err(numeric)?))
    }));
    jobs.push(job("round_trip/unravel_sew", ZERO, 1e-8, move || {
        let a = annulus(0.3)?;
        let (o, i) = a.unravel((-2.0 * PI * 0.1).exp()).map_err(numeric)?;
        Ok(real(moduli::distance(&moduli::sew(&o, 2, &i, 1).map_err(numeric)?, &a).map_err(numeric)?))
    }));
    jobs
}

fn field_of(v: &Value, key: &str) -> Option<Value> {
    v.get(key).cloned()
}

fn deformation(v: &Value, res: Resolution) -> Result<Deformation> {
    let spec: LoopSpec = serde_json::from_value(v.clone()).map_err(|e| SuiteError::Schema(e.to_string()))?;
    Deformation::from_spec(&spec, res).map_err(numeric)
}

fn vector_field(v: &Value, res: Resolution) -> Result<VectorField> {
    let spec: LoopSpec = serde_json::from_value(v.clone()).map_err(|e| SuiteError::Schema(e.to_string()))?;
    VectorField::from_spec(&spec, res).map_err(numeric)
}

/// A pair given as `[a, b]` or `{"left": a, "right": b}`.
fn pair(args: &Value) -> Result<(Value, Value)> {
    match args {
        Value::Array(v) if v.len() == 2 => Ok((v[0].clone(), v[1].clone())),
        Value::Object(_) => match (field_of(args, "left"), field_of(args, "right")) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(SuiteError::Schema("expected left and right".into())),
        },
        _ => Err(SuiteError::Schema("expected a pair".into())),
    }
}

/// A single argument given bare or as `{"map": a}`.
fn single(args: &Value) -> Value {
    field_of(args, "map").unwrap_or_else(|| args.clone())
}

fn spec_json(d: &Deformation) -> Value {
    serde_json::to_value(d.to_spec()).expect("loop specs serialize")
}

fn c_json(c: C64) -> Value {
    json!({"re": c.re, "im": c.im})
}

/// The `{cr, rot, rcr_re, rcr_im, residual}` record of a deformation.
pub fn conformal_record(phi: &Deformation, rot_iters: usize) -> Result<Value> {
    let d = conformal::decompose_with(phi, rot_iters).map_err(numeric)?;
    let r = d.rcr();
    Ok(json!({"cr": d.cr, "rot": d.rot, "rcr_re": r.re, "rcr_im": r.im, "residual": d.residual}))
}

pub const OPS: [&str; 11] = ["compose", "invert", "winding", "cr", "rot", "rcr", "decompose", "bracket", "pullback", "flow", "cocycle"];

/// Single-operation dispatch on JSON arguments.
pub fn eval(op: &str, args: &Value, cfg: &Config) -> Result<Value> {
    let res = cfg.res;
    match op {
        "compose" => {
            let (a, b) = pair(args)?;
            Ok(spec_json(&deformation(&a, res)?.compose(&deformation(&b, res)?).map_err(numeric)?))
        }
        "invert" => Ok(spec_json(&deformation(&single(args), res)?.invert().map_err(numeric)?)),
        "winding" => {
            let spec: LoopSpec = serde_json::from_value(single(args)).map_err(|e| SuiteError::Schema(e.to_string()))?;
            Ok(json!(spec.to_loop(res).map_err(numeric)?.winding_number(ZERO).map_err(numeric)?))
        }
        "cr" => Ok(json!(conformal::conformal_radius(&deformation(&single(args), res)?).map_err(numeric)?)),
        "rot" => Ok(json!(conformal::decompose_with(&deformation(&single(args), res)?, cfg.rot_iters).map_err(numeric)?.rot)),
        "rcr" | "decompose" => conformal_record(&deformation(&single(args), res)?, cfg.rot_iters),
        "bracket" => {
            let (a, b) = pair(args)?;
            let v = vector_field(&a, res)?.bracket(&vector_field(&b, res)?).map_err(numeric)?;
            Ok(serde_json::to_value(LoopSpec::from_loop(v.as_loop(), None))?)
        }
        "pullback" => {
            let (a, b) = pair(args)?;
            let v = vector_field(&a, res)?.pullback(deformation(&b, res)?.as_loop()).map_err(numeric)?;
            Ok(serde_json::to_value(LoopSpec::from_loop(v.as_loop(), None))?)
        }
        "flow" => {
            let v = vector_field(&field_of(args, "field").ok_or_else(|| SuiteError::Schema("missing field".into()))?, res)?;
            let t = args.get("t").and_then(Value::as_f64).ok_or_else(|| SuiteError::Schema("missing t".into()))?;
            Ok(spec_json(&witt::flow(&v, t).map_err(numeric)?))
        }
        "cocycle" => {
            let kind = args.get("kind").and_then(Value::as_str).unwrap_or("bt");
            Ok(c_json(cocycle_value(kind, args, cfg)?))
        }
        other => Err(SuiteError::UnknownOp(other.into())),
    }
}

/// Group cocycles on deformations (`bt`, `rcr`) or algebra cocycles on
/// fields (`gf`, `rot`).
pub fn cocycle_value(kind: &str, args: &Value, cfg: &Config) -> Result<C64> {
    let (a, b) = pair(args)?;
    let res = cfg.res;
    match kind {
        "bt" => cocycles::bott_thurston(&deformation(&a, res)?, &deformation(&b, res)?).map_err(numeric),
        "rcr" => conformal::omega_rcr(&deformation(&a, res)?, &deformation(&b, res)?).map_err(numeric),
        "gf" => Ok(cocycles::gelfand_fuks(&vector_field(&a, res)?, &vector_field(&b, res)?)),
        "rot" => Ok(cocycles::omega_rot(&vector_field(&a, res)?, &vector_field(&b, res)?)),
        other => Err(SuiteError::Schema(format!("unknown cocycle kind {other:?}"))),
    }
}
