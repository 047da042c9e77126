//! Group and Lie-algebra cochains: Bott-Thurston, Gel'fand-Fuks, the
//! rotation cocycle and functional, both differentials, and the van Est map
//! by finite differences of flows.

use std::f64::consts::PI;
use std::sync::Arc;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{self, ConformalError};
use crate::deformation::{Deformation, DeformationError};
use crate::series::{grid, SeriesError, C64};
use crate::witt::{self, VectorField, WittError};

/// Default van Est step.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CocycleError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Witt(#[from] WittError),
    #[error("pair is not composable")]
    NotComposable,
    #[error("log-derivative winds {0} times; branch ambiguous")]
    BranchWinding(i64),
    #[error("cochain of degree {degree} needs {degree} arguments, got {got}")]
    Arity { degree: usize, got: usize },
}

pub type Result<T, E = CocycleError> = std::result::Result<T, E>;

type GroupRule1 = dyn Fn(&Deformation) -> Result<C64> + Send + Sync;
type GroupRule2 = dyn Fn(&Deformation, &Deformation) -> Result<C64> + Send + Sync;
type AlgebraRule = dyn Fn(&[VectorField]) -> Result<C64> + Send + Sync;

/// Complex-valued function on deformations.
#[derive(Clone)]
pub struct GroupCochain1 {
    pub name: String,
    rule: Arc<GroupRule1>,
}

impl GroupCochain1 {
    pub fn new(name: &str, rule: impl Fn(&Deformation) -> Result<C64> + Send + Sync + 'static) -> Self {
        GroupCochain1 { name: name.into(), rule: Arc::new(rule) }
    }

    pub fn eval(&self, phi: &Deformation) -> Result<C64> {
        (self.rule)(phi)
    }

    /// `log CR`.
    pub fn log_cr() -> Self {
        Self::new("log_cr", |phi| Ok(C64::new(conformal::conformal_radius(phi)?.ln(), 0.0)))
    }

    pub fn constant(c: C64) -> Self {
        Self::new("constant", move |_| Ok(c))
    }

    /// `(D f)(g1, g2) = f(g2) - f(g1 g2) + f(g1)`.
    pub fn differential(&self) -> GroupCochain2 {
        let f = self.clone();
        GroupCochain2::new(&format!("D({})", self.name), move |a, b| {
            let ab = a.compose(b)?;
            Ok(f.eval(b)? - f.eval(&ab)? + f.eval(a)?)
        })
    }
}

/// Complex-valued function on composable pairs.
#[derive(Clone)]
pub struct GroupCochain2 {
    pub name: String,
    rule: Arc<GroupRule2>,
}

impl std::fmt::Debug for GroupCochain2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GroupCochain2({})", self.name)
    }
}

impl GroupCochain2 {
    pub fn new(
        name: &str,
        rule: impl Fn(&Deformation, &Deformation) -> Result<C64> + Send + Sync + 'static,
    ) -> Self {
        GroupCochain2 { name: name.into(), rule: Arc::new(rule) }
    }

    pub fn eval(&self, a: &Deformation, b: &Deformation) -> Result<C64> {
        if !a.is_composable(b) {
            return Err(CocycleError::NotComposable);
        }
        (self.rule)(a, b)
    }

    pub fn bott_thurston() -> Self {
        Self::new("bt", bott_thurston)
    }

    pub fn rcr() -> Self {
        Self::new("rcr", |a, b| Ok(conformal::omega_rcr(a, b)?))
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _| Ok(C64::new(0.0, 0.0)))
    }
}

/// `(1/24 pi) oint log((phi1 o phi2)') dlog(phi2')` by the trapezoid rule,
/// with the logarithm unwrapped along the grid from its principal value at
/// `z = 1`.
pub fn bott_thurston(phi1: &Deformation, phi2: &Deformation) -> Result<C64> {
    if !phi1.is_composable(phi2) {
        return Err(CocycleError::NotComposable);
    }
    let res = phi2.resolution();
    bott_thurston_on(phi1, phi2, 2 * res.samples)
}

/// [`bott_thurston`] on an explicit `m`-point grid.
pub fn bott_thurston_on(phi1: &Deformation, phi2: &Deformation, m: usize) -> Result<C64> {
    let inner = phi2.as_loop();
    let outer = phi1.as_loop();
    let d2 = inner.derivative();
    let dd2 = d2.derivative();
    let radii = outer.radii();
    let z = grid(m);
    let mut log_prev: Option<(C64, f64)> = None;
    let mut first_phase = 0.0;
    let mut acc = C64::new(0.0, 0.0);
    for &zk in &z {
        let w = inner.value_at(zk);
        if !radii.contains(w) {
            let (lo, hi) = radii.certified();
            return Err(SeriesError::NotCertified { point: w, inner: lo, outer: hi }.into());
        }
        let (_, d1) = outer.value_and_derivative(w);
        let p2 = d2.value_at(zk);
        let f = d1 * p2;
        let phase = match log_prev {
            None => {
                first_phase = f.arg();
                f.arg()
            }
            Some((prev, ph)) => ph + (f / prev).arg(),
        };
        log_prev = Some((f, phase));
        let log_f = C64::new(f.norm().ln(), phase);
        let form = dd2.value_at(zk) / p2 * C64::i() * zk;
        acc += log_f * form;
    }
    let (last, ph) = log_prev.expect("nonempty grid");
    let closing = ph + (C64::from_polar(1.0, first_phase) / last).arg();
    let turns = ((closing - first_phase) / (2.0 * PI)).round() as i64;
    if turns != 0 {
        return Err(CocycleError::BranchWinding(turns));
    }
    Ok(acc * (2.0 * PI / m as f64) / (24.0 * PI))
}

/// Fourier coefficients of the angular coordinate `v~(theta)`.
fn theta_modes(v: &VectorField) -> Vec<(i64, C64)> {
    let n = v.resolution().modes as i64;
    (-n - 1..=n - 1).map(|k| (k, v.theta_coeff(k))).filter(|(_, c)| c.norm() > 0.0).collect()
}

/// `(1/24 pi) int v~' w~'' dtheta`, exact on the stored modes.
pub fn gelfand_fuks(v: &VectorField, w: &VectorField) -> C64 {
    let acc: C64 = theta_modes(v).iter().map(|&(k, a)| a * w.theta_coeff(-k) * (k * k * k) as f64).sum();
    C64::new(0.0, -1.0 / 12.0) * acc
}

/// `(1/24 pi) int v~ w~' dtheta`.
pub fn omega_rot(v: &VectorField, w: &VectorField) -> C64 {
    let acc: C64 = theta_modes(v).iter().map(|&(k, a)| a * w.theta_coeff(-k) * k as f64).sum();
    C64::new(0.0, -1.0 / 12.0) * acc
}

/// `(1/48 pi) int v~ dtheta`.
pub fn rot_functional(v: &VectorField) -> C64 {
    v.theta_coeff(0) / 24.0
}

/// Multilinear complex-valued cochain on vector fields.
#[derive(Clone)]
pub struct AlgebraCochain {
    pub name: String,
    pub degree: usize,
    rule: Arc<AlgebraRule>,
}

impl AlgebraCochain {
    pub fn new(name: &str, degree: usize, rule: impl Fn(&[VectorField]) -> Result<C64> + Send + Sync + 'static) -> Self {
        AlgebraCochain { name: name.into(), degree, rule: Arc::new(rule) }
    }

    pub fn eval(&self, fields: &[VectorField]) -> Result<C64> {
        if fields.len() != self.degree {
            return Err(CocycleError::Arity { degree: self.degree, got: fields.len() });
        }
        (self.rule)(fields)
    }

    pub fn gelfand_fuks() -> Self {
        Self::new("gf", 2, |f| Ok(gelfand_fuks(&f[0], &f[1])))
    }

    pub fn omega_rot() -> Self {
        Self::new("rot2", 2, |f| Ok(omega_rot(&f[0], &f[1])))
    }

    pub fn rot() -> Self {
        Self::new("rot", 1, |f| Ok(rot_functional(&f[0])))
    }

    pub fn zero(degree: usize) -> Self {
        Self::new("zero", degree, |_| Ok(C64::new(0.0, 0.0)))
    }

    /// Differential with trivial coefficients, written for the bracket
    /// `[v, w] = v w' - w v'`: `(D f)(v, w) = f([v, w])` and
    /// `(D c)(u, v, w) = c([u, v], w) - c([u, w], v) + c([v, w], u)`.
    pub fn differential(&self) -> AlgebraCochain {
        let c = self.clone();
        match self.degree {
            1 => Self::new(&format!("D({})", self.name), 2, move |f| {
                c.eval(&[f[0].bracket(&f[1])?])
            }),
            _ => Self::new(&format!("D({})", self.name), 3, move |f| {
                let (u, v, w) = (&f[0], &f[1], &f[2]);
                Ok(c.eval(&[u.bracket(v)?, w.clone()])? - c.eval(&[u.bracket(w)?, v.clone()])?
                    + c.eval(&[v.bracket(w)?, u.clone()])?)
            }),
        }
    }
}

/// `W(g2, g3) - W(g1 g2, g3) + W(g1, g2 g3) - W(g1, g2)`.
pub fn group_differential(omega: &GroupCochain2, g1: &Deformation, g2: &Deformation, g3: &Deformation) -> Result<C64> {
    let g12 = g1.compose(g2)?;
    let g23 = g2.compose(g3)?;
    Ok(omega.eval(g2, g3)? - omega.eval(&g12, g3)? + omega.eval(g1, &g23)? - omega.eval(g1, g2)?)
}

/// Finite-difference van Est value with its Richardson error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanEst {
    pub value_re: f64,
    pub value_im: f64,
    pub error: f64,
}

impl VanEst {
    pub fn value(&self) -> C64 {
        C64::new(self.value_re, self.value_im)
    }
}

fn van_est_at(omega: &GroupCochain2, v: &VectorField, w: &VectorField, h: f64) -> Result<C64> {
    let stencil = [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)];
    let terms: Vec<Result<C64>> = stencil
        .par_iter()
        .map(|&(a, b, sign)| {
            let fv = witt::flow(v, a * h)?;
            let fw = witt::flow(w, b * h)?;
            let val = omega.eval(&fv, &fw)? - omega.eval(&fw, &fv)?;
            Ok(val * sign)
        })
        .collect();
    let mut acc = C64::new(0.0, 0.0);
    for t in terms {
        acc += t?;
    }
    Ok(acc / (4.0 * h * h) * 0.5)
}

/// `(1/2) d_s d_t [W(Phi_v(t), Phi_w(s)) - W(Phi_w(s), Phi_v(t))]` at 0 from
/// the `+-h` stencil, extrapolated over `h` and `h/2`.
pub fn van_est(omega: &GroupCochain2, v: &VectorField, w: &VectorField, h: f64) -> Result<VanEst> {
    let coarse = van_est_at(omega, v, w, h)?;
    let fine = van_est_at(omega, v, w, h / 2.0)?;
    let value = (fine * 4.0 - coarse) / 3.0;
    Ok(VanEst { value_re: value.re, value_im: value.im, error: (fine - coarse).norm() / 3.0 })
}

/// `d/dt f(Phi_v(t))` at 0 by central differences with one Richardson step.
pub fn flow_derivative(f: &GroupCochain1, v: &VectorField, h: f64) -> Result<C64> {
    let diff = |h: f64| -> Result<C64> {
        Ok((f.eval(&witt::flow(v, h)?)? - f.eval(&witt::flow(v, -h)?)?) / (2.0 * h))
    };
    let (a, b) = (diff(h)?, diff(h / 2.0)?);
    Ok((b * 4.0 - a) / 3.0)
}

/// `d/dt RCR(Phi_v(t))` at 0.
pub fn rcr_derivative(v: &VectorField, h: f64) -> Result<C64> {
    flow_derivative(&GroupCochain1::new("rcr", |phi| Ok(conformal::rcr(phi)?)), v, h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationRow {
    pub relation: String,
    pub n: i64,
    pub target_re: f64,
    pub target_im: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub residual: f64,
}

/// Residuals of `vE(W_BT) = w_GF - w_rot` and `vE(W_RCR) = w_rot` on
/// `(l_n, l_{-n})` for `1 <= n <= n_max`, ordered by relation then `n`.
pub fn cocycle_relation_residuals(n_max: i64, h: f64, res: crate::series::Resolution) -> Result<Vec<RelationRow>> {
    let mut jobs = Vec::new();
    for rel in ["bt", "rcr"] {
        for n in 1..=n_max {
            jobs.push((rel, n));
        }
    }
    jobs.into_par_iter()
        .map(|(rel, n)| {
            let v = VectorField::generator(n, res)?;
            let w = VectorField::generator(-n, res)?;
            let (omega, target) = match rel {
                "bt" => (GroupCochain2::bott_thurston(), gelfand_fuks(&v, &w) - omega_rot(&v, &w)),
                _ => (GroupCochain2::rcr(), omega_rot(&v, &w)),
            };
            let value = van_est(&omega, &v, &w, h)?.value();
            Ok(RelationRow {
                relation: rel.into(),
                n,
                target_re: target.re,
                target_im: target.im,
                value_re: value.re,
                value_im: value.im,
                residual: (value - target).norm(),
            })
        })
        .collect()
}

/// `c_{n+1} = ((n + 2) c_n - (2n + 1) c_1) / (n - 1)` for `n >= 2`, returned
/// as `[c_1, ..., c_{n_max}]`.
pub fn cohomology_recursion(c1: BigRational, c2: BigRational, n_max: usize) -> Vec<BigRational> {
    let mut out = vec![c1.clone(), c2];
    for n in 2..n_max.max(2) {
        let r = |k: usize| BigRational::from_integer((k as i64).into());
        let next = (r(n + 2) * &out[n - 1] - r(2 * n + 1) * &c1) / r(n - 1);
        out.push(next);
    }
    out.truncate(n_max);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Resolution;

    fn res() -> Resolution {
        Resolution::default()
    }

    fn gen(n: i64) -> VectorField {
        VectorField::generator(n, res()).unwrap()
    }

    fn poly(terms: &[(i64, C64)]) -> Deformation {
        Deformation::new(crate::series::AnalyticLoop::from_coeffs(terms, res()).unwrap()).unwrap()
    }

    #[test]
    fn algebra_values() {
        let i = C64::i();
        assert!((gelfand_fuks(&gen(2), &gen(-2)) - i * (2.0 / 3.0)).norm() < 1e-15);
        assert_eq!(gelfand_fuks(&gen(1), &gen(2)), C64::new(0.0, 0.0));
        assert_eq!(gelfand_fuks(&gen(3), &gen(3)).norm(), 0.0);
        assert!((rot_functional(&gen(0)) - i / 24.0).norm() < 1e-16);
        assert!((omega_rot(&gen(1), &gen(-1)) - i / 12.0).norm() < 1e-16);
        for n in -3..=3 {
            assert_eq!(omega_rot(&gen(0), &gen(n)).norm(), 0.0);
        }
    }

    #[test]
    fn algebra_differentials() {
        let d_rot = AlgebraCochain::rot().differential();
        let rot2 = AlgebraCochain::omega_rot();
        for n in -8..=8 {
            for m in -8..=8 {
                let a = d_rot.eval(&[gen(n), gen(m)]).unwrap();
                let b = rot2.eval(&[gen(n), gen(m)]).unwrap();
                assert!((a - b).norm() < 1e-12, "{n} {m}");
            }
        }
        let d_gf = AlgebraCochain::gelfand_fuks().differential();
        for (a, b, c) in [(1, 2, -3), (3, -1, -2), (4, -4, 0), (2, 2, -4)] {
            assert!(d_gf.eval(&[gen(a), gen(b), gen(c)]).unwrap().norm() < 1e-12);
        }
        assert_eq!(AlgebraCochain::zero(1).differential().eval(&[gen(1), gen(2)]).unwrap().norm(), 0.0);
    }

    #[test]
    fn bott_thurston_trivial_pairs() {
        let r = |a| Deformation::rotation(a, res());
        assert!(bott_thurston(&r(0.3), &r(1.1)).unwrap().norm() < 1e-15);
        let phi = poly(&[(1, C64::new(1.0, 0.0)), (2, C64::new(0.05, 0.0))]);
        let id = Deformation::identity(res());
        assert!(bott_thurston(&id, &phi).unwrap().norm() < 1e-15);
        assert!(bott_thurston(&phi, &id).unwrap().norm() < 1e-15);
    }

    #[test]
    fn bott_thurston_grid_refinement() {
        let a = poly(&[(1, C64::new(1.0, 0.0)), (2, C64::new(0.05, 0.0))]);
        let b = poly(&[(1, C64::new(1.0, 0.0)), (3, C64::new(0.04, 0.0))]);
        let m = 2 * res().samples;
        let coarse = bott_thurston_on(&a, &b, m).unwrap();
        let fine = bott_thurston_on(&a, &b, 2 * m).unwrap();
        assert!((coarse - fine).norm() < 1e-10);
        // both factors extend into the disk, so the contour integral vanishes
        assert!(coarse.norm() < 1e-12);
        let c = poly(&[(1, C64::new(1.0, 0.0)), (3, C64::new(0.04, 0.0)), (-1, C64::new(0.03, 0.0))]);
        let coarse = bott_thurston_on(&a, &c, m).unwrap();
        let fine = bott_thurston_on(&a, &c, 2 * m).unwrap();
        assert!((coarse - fine).norm() < 1e-10);
        assert!(coarse.norm() > 1e-6);
    }

    #[test]
    fn recursion_solutions() {
        let q = |k: i64| BigRational::from_integer(k.into());
        let lin = cohomology_recursion(q(1), q(2), 50);
        let cub = cohomology_recursion(q(1), q(8), 50);
        for n in 1..=50i64 {
            assert_eq!(lin[(n - 1) as usize], q(n));
            assert_eq!(cub[(n - 1) as usize], q(n * n * n));
        }
        assert!(cohomology_recursion(q(0), q(0), 20).iter().all(|c| *c == q(0)));
    }

    #[test]
    fn van_est_bott_thurston_diagonal() {
        let v = van_est(&GroupCochain2::bott_thurston(), &gen(2), &gen(-2), FD_STEP).unwrap();
        assert!((v.value() - C64::new(0.0, 0.5)).norm() < 5e-5, "{v:?}");
    }
}
