//! Complex vector fields on the circle, the Witt bracket, pullbacks and the
//! two flow equations linking fields to deformations.
//!
//! A field `v(z) d/dz` is stored through its coefficient function `v(z)`.
//! Its angular coordinate is `v~(theta) = -i e^{-i theta} v(e^{i theta})`.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::deformation::{Deformation, DeformationError};
use crate::series::{grid, AnalyticLoop, LoopSpec, Resolution, SeriesError, C64, TRUNCATION_WARN};

/// Largest accepted step-halving error estimate of a flow.
pub const FLOW_TOL: f64 = 1e-6;
/// Closed-form generator flows need their branch points beyond this radius
/// ratio from the circle.
pub const BRANCH_MARGIN: f64 = 1.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WittError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error("generator degree {0} outside the truncation range")]
    DegreeBound(i64),
    #[error("result not resolved at the truncation degree (dropped tail {tail:e})")]
    Truncation { tail: f64 },
    #[error("branch point of the closed-form flow at radius ratio {ratio} is too close to the circle")]
    Branch { ratio: f64 },
    #[error("flow leaves the certified annulus of the field at t = {t}")]
    FlowExit { t: f64 },
    #[error("flow error estimate {estimate:e} above tolerance")]
    Inaccurate { estimate: f64 },
    #[error("time knots must be strictly increasing and nonempty")]
    Knots,
}

pub type Result<T, E = WittError> = std::result::Result<T, E>;

/// Holomorphic vector field `v(z) d/dz` near the circle.
#[derive(Clone, Debug)]
pub struct VectorField(AnalyticLoop);

impl VectorField {
    pub fn new(coefficient: AnalyticLoop) -> Self {
        VectorField(coefficient)
    }

    pub fn from_spec(spec: &LoopSpec, res: Resolution) -> Result<Self> {
        Ok(VectorField(spec.to_loop(res)?))
    }

    pub fn zero(res: Resolution) -> Self {
        VectorField(AnalyticLoop::zero(res))
    }

    /// `l_n = -z^{n+1} d/dz`.
    pub fn generator(n: i64, res: Resolution) -> Result<Self> {
        Self::generator_scaled(n, C64::new(1.0, 0.0), res)
    }

    /// `c l_n`.
    pub fn generator_scaled(n: i64, c: C64, res: Resolution) -> Result<Self> {
        if n.abs() + 1 > res.modes as i64 {
            return Err(WittError::DegreeBound(n));
        }
        Ok(VectorField(AnalyticLoop::monomial(n + 1, -c, res)))
    }

    /// Tangential combination `(l_n - l_{-n}) / 2`.
    pub fn tangential(n: i64, res: Resolution) -> Result<Self> {
        Ok(Self::generator(n, res)?.sub(&Self::generator(-n, res)?).scale(C64::new(0.5, 0.0)))
    }

    /// Tangential combination `(l_n + l_{-n}) / 2i`.
    pub fn tangential_i(n: i64, res: Resolution) -> Result<Self> {
        Ok(Self::generator(n, res)?.add(&Self::generator(-n, res)?).scale(C64::new(0.0, -0.5)))
    }

    /// Normal combination `(l_n + l_{-n}) / 2`.
    pub fn normal(n: i64, res: Resolution) -> Result<Self> {
        Ok(Self::generator(n, res)?.add(&Self::generator(-n, res)?).scale(C64::new(0.5, 0.0)))
    }

    /// Normal combination `(l_n - l_{-n}) / 2i`.
    pub fn normal_i(n: i64, res: Resolution) -> Result<Self> {
        Ok(Self::generator(n, res)?.sub(&Self::generator(-n, res)?).scale(C64::new(0.0, -0.5)))
    }

    pub fn as_loop(&self) -> &AnalyticLoop {
        &self.0
    }

    pub fn resolution(&self) -> Resolution {
        self.0.resolution()
    }

    pub fn coeff(&self, deg: i64) -> C64 {
        self.0.coeff(deg)
    }

    pub fn value_at(&self, z: C64) -> C64 {
        self.0.value_at(z)
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField(self.0.add(&other.0))
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField(self.0.sub(&other.0))
    }

    pub fn scale(&self, c: C64) -> VectorField {
        VectorField(self.0.scale_by(c))
    }

    /// Sup norm of the coefficient difference.
    pub fn distance(&self, other: &VectorField) -> f64 {
        self.0.coeff_distance(&other.0)
    }

    /// `(c, n)` when the field is a single multiple `c l_n`.
    pub fn as_generator_multiple(&self) -> Option<(C64, i64)> {
        match self.0.terms().as_slice() {
            [(deg, c)] => Some((-c, deg - 1)),
            _ => None,
        }
    }

    /// Fourier coefficient of `e^{i k theta}` in the angular coordinate.
    pub fn theta_coeff(&self, k: i64) -> C64 {
        C64::new(0.0, -1.0) * self.0.coeff(k + 1)
    }

    /// Angular coordinate on an `m`-point grid.
    pub fn theta_samples(&self, m: usize) -> Vec<C64> {
        let z = grid(m);
        self.0.samples_on(m).iter().zip(z).map(|(v, z)| C64::new(0.0, -1.0) * v / z).collect()
    }

    /// Bracket `v w' - w v'`, which satisfies `[l_n, l_m] = (n - m) l_{n+m}`.
    pub fn bracket(&self, other: &VectorField) -> Result<VectorField> {
        let a = self.0.mul(&other.0.derivative());
        let b = other.0.mul(&self.0.derivative());
        let out = a.sub(&b);
        if out.dropped_tail() > TRUNCATION_WARN {
            return Err(WittError::Truncation { tail: out.dropped_tail() });
        }
        Ok(VectorField(out))
    }

    /// `F^* v = v(F(z)) / F'(z)`, requiring `F` of the grid inside the
    /// certified annulus of `v`.
    pub fn pullback(&self, map: &AnalyticLoop) -> Result<VectorField> {
        let res = self.resolution();
        let m = 2 * res.samples;
        let radii = self.0.radii();
        let mut values = Vec::with_capacity(m);
        for z in grid(m) {
            let (f, df) = map.value_and_derivative(z);
            if !radii.contains(f) {
                let (inner, outer) = radii.certified();
                return Err(SeriesError::NotCertified { point: f, inner, outer }.into());
            }
            values.push(self.0.value_at(f) / df);
        }
        let out = AnalyticLoop::from_samples(&values, res)?;
        if out.dropped_tail() > TRUNCATION_WARN {
            return Err(WittError::Truncation { tail: out.dropped_tail() });
        }
        Ok(VectorField(out))
    }
}

/// Time-dependent field: knot fields joined by cubic Hermite interpolation
/// with finite-difference knot slopes.
#[derive(Clone, Debug)]
pub struct TimeField {
    knots: Vec<f64>,
    fields: Vec<VectorField>,
}

impl TimeField {
    pub fn constant(v: VectorField) -> Self {
        TimeField { knots: vec![0.0], fields: vec![v] }
    }

    pub fn new(knots: Vec<f64>, fields: Vec<VectorField>) -> Result<Self> {
        if knots.is_empty() || knots.len() != fields.len() || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WittError::Knots);
        }
        Ok(TimeField { knots, fields })
    }

    pub fn resolution(&self) -> Resolution {
        self.fields[0].resolution()
    }

    /// Interpolation weights of the knot fields at time `t`; constant
    /// extrapolation outside the knot range.
    pub fn weights(&self, t: f64) -> Vec<(usize, f64)> {
        let k = self.knots.len();
        if k == 1 || t <= self.knots[0] {
            return vec![(0, 1.0)];
        }
        if t >= self.knots[k - 1] {
            return vec![(k - 1, 1.0)];
        }
        let i = self.knots.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
        let h10 = s.powi(3) - 2.0 * s * s + s;
        let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
        let h11 = s.powi(3) - s * s;
        let mut w = vec![(i, h00), (i + 1, h01)];
        // slope at knot j as a combination of knot values
        let slope = |j: usize| -> Vec<(usize, f64)> {
            let (a, b) = (j.saturating_sub(1), (j + 1).min(k - 1));
            let d = self.knots[b] - self.knots[a];
            vec![(b, 1.0 / d), (a, -1.0 / d)]
        };
        for (j, c) in slope(i) {
            w.push((j, h10 * h * c));
        }
        for (j, c) in slope(i + 1) {
            w.push((j, h11 * h * c));
        }
        w
    }

    pub fn at(&self, t: f64) -> VectorField {
        let mut out = VectorField::zero(self.resolution());
        for (j, c) in self.weights(t) {
            out = out.add(&self.fields[j].scale(C64::new(c, 0.0)));
        }
        out
    }

    fn eval(&self, t: f64, y: C64) -> Option<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for (j, c) in self.weights(t) {
            let f = &self.fields[j].0;
            if !f.radii().contains(y) {
                return None;
            }
            acc += f.value_at(y) * c;
        }
        Some(acc)
    }
}

/// A flow endpoint with its step-halving error estimate.
#[derive(Clone, Debug)]
pub struct Flow {
    pub map: Deformation,
    pub error: f64,
}

/// Closed-form flow of `l_n` at real time.
pub fn exact_flow(n: i64, t: f64, res: Resolution) -> Result<Deformation> {
    exact_flow_complex(n, C64::new(t, 0.0), res)
}

/// Flow of `l_n` at complex time `s`, equivalently the time-one flow of
/// `s l_n`: `z (1 + n s z^n)^{-1/n}`, or `e^{-s} z` for `n = 0`.
pub fn exact_flow_complex(n: i64, s: C64, res: Resolution) -> Result<Deformation> {
    if n == 0 {
        return Ok(Deformation::linear((-s).exp(), res));
    }
    let x = s * n as f64;
    if x.norm() > 0.0 {
        let ratio = x.norm().powf(-1.0 / n.abs() as f64);
        if ratio <= BRANCH_MARGIN {
            return Err(WittError::Branch { ratio });
        }
    }
    let lp = AnalyticLoop::from_fn(res, |z| {
        let u = C64::new(1.0, 0.0) + x * z.powi(n as i32);
        z * (-u.ln() / n as f64).exp()
    })?;
    if lp.dropped_tail() > TRUNCATION_WARN {
        return Err(WittError::Truncation { tail: lp.dropped_tail() });
    }
    Ok(Deformation::new(lp)?)
}

/// Flow of a time-independent field: closed form for generator multiples,
/// Runge-Kutta otherwise.
pub fn flow(v: &VectorField, t: f64) -> Result<Deformation> {
    let res = v.resolution();
    if v.as_loop().terms().is_empty() {
        return Ok(Deformation::identity(res));
    }
    if let Some((c, n)) = v.as_generator_multiple() {
        return exact_flow_complex(n, c * t, res);
    }
    Ok(flow_ode(&TimeField::constant(v.clone()), t, 1000)?.map)
}

fn rk4_point(v: &TimeField, z: C64, t_end: f64, steps: usize) -> std::result::Result<C64, f64> {
    let h = t_end / steps as f64;
    let mut y = z;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = v.eval(t, y).ok_or(t)?;
        let k2 = v.eval(t + h / 2.0, y + k1 * (h / 2.0)).ok_or(t)?;
        let k3 = v.eval(t + h / 2.0, y + k2 * (h / 2.0)).ok_or(t)?;
        let k4 = v.eval(t + h, y + k3 * h).ok_or(t)?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(y)
}

/// Left-trivializing flow `d/dt Phi = v(t, Phi)` by classical Runge-Kutta at
/// every grid point; the error estimate compares against half the steps.
pub fn flow_ode(v: &TimeField, t_end: f64, steps: usize) -> Result<Flow> {
    let res = v.resolution();
    let steps = steps.max(2) & !1;
    let pts = grid(2 * res.samples);
    let run = |n: usize| -> Result<Vec<C64>> {
        pts.par_iter()
            .map(|&z| rk4_point(v, z, t_end, n).map_err(|t| WittError::FlowExit { t }))
            .collect()
    };
    let full = run(steps)?;
    let half = run(steps / 2)?;
    let error = full.iter().zip(&half).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / 15.0;
    if error > FLOW_TOL {
        return Err(WittError::Inaccurate { estimate: error });
    }
    let lp = AnalyticLoop::from_samples(&full, res)?;
    if lp.dropped_tail() > TRUNCATION_WARN {
        return Err(WittError::Truncation { tail: lp.dropped_tail() });
    }
    Ok(Flow { map: Deformation::new(lp)?, error })
}

/// Right-trivializing flow `d/dt Phi = Phi' w(t)` by the method of lines on
/// the coefficients. Runs whose coefficients outgrow the truncation are
/// rejected.
pub fn flow_right(w: &TimeField, t_end: f64, steps: usize) -> Result<Flow> {
    let res = w.resolution();
    let steps = steps.max(2) & !1;
    let run = |n: usize| -> Result<AnalyticLoop> {
        let h = t_end / n as f64;
        let rhs = |t: f64, phi: &AnalyticLoop| -> Result<AnalyticLoop> {
            let out = phi.derivative().mul(w.at(t).as_loop());
            if out.dropped_tail() > TRUNCATION_WARN {
                return Err(WittError::Truncation { tail: out.dropped_tail() });
            }
            Ok(out)
        };
        let mut phi = AnalyticLoop::identity(res);
        let half = C64::new(h / 2.0, 0.0);
        let full = C64::new(h, 0.0);
        for i in 0..n {
            let t = i as f64 * h;
            let k1 = rhs(t, &phi)?;
            let k2 = rhs(t + h / 2.0, &phi.add(&k1.scale_by(half)))?;
            let k3 = rhs(t + h / 2.0, &phi.add(&k2.scale_by(half)))?;
            let k4 = rhs(t + h, &phi.add(&k3.scale_by(full)))?;
            let incr = k1.add(&k2.scale_by(C64::new(2.0, 0.0))).add(&k3.scale_by(C64::new(2.0, 0.0))).add(&k4);
            phi = phi.add(&incr.scale_by(C64::new(h / 6.0, 0.0)));
        }
        Ok(phi)
    };
    let full = run(steps)?;
    let half = run(steps / 2)?;
    let error = full.sup_distance(&half) / 15.0;
    if error > FLOW_TOL {
        return Err(WittError::Inaccurate { estimate: error });
    }
    Ok(Flow { map: Deformation::new(full)?, error })
}

/// Left and right trivializations `(v, w)` of a curve of deformations at
/// time `t`, from central differences with step `h`.
pub fn curve_to_field(
    gamma: impl Fn(f64) -> Result<Deformation>,
    t: f64,
    h: f64,
) -> Result<(VectorField, VectorField)> {
    let at = gamma(t)?;
    let res = at.resolution();
    let dot = gamma(t + h)?.as_loop().sub(gamma(t - h)?.as_loop()).scale_by(C64::new(0.5 / h, 0.0));
    let m = 2 * res.samples;
    let z = grid(m);
    let w_vals: Vec<C64> = z
        .iter()
        .map(|&z| {
            let (_, d) = at.as_loop().value_and_derivative(z);
            dot.value_at(z) / d
        })
        .collect();
    let inv = at.invert()?;
    let radii = dot.radii();
    let mut v_vals = Vec::with_capacity(m);
    for p in inv.as_loop().samples_on(m) {
        if !radii.contains(p) {
            let (inner, outer) = radii.certified();
            return Err(SeriesError::NotCertified { point: p, inner, outer }.into());
        }
        v_vals.push(dot.value_at(p));
    }
    let v = AnalyticLoop::from_samples(&v_vals, res)?;
    let w = AnalyticLoop::from_samples(&w_vals, res)?;
    Ok((VectorField(v), VectorField(w)))
}

/// Angle-coordinate helper used by tests and the guide.
pub fn theta(k: usize, m: usize) -> f64 {
    2.0 * PI * k as f64 / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn res() -> Resolution {
        Resolution::default()
    }

    #[test]
    fn generators() {
        let l0 = VectorField::generator(0, res()).unwrap();
        assert_eq!(l0.as_loop().terms(), vec![(1, c(-1.0, 0.0))]);
        let lm1 = VectorField::generator(-1, res()).unwrap();
        assert_eq!(lm1.as_loop().terms(), vec![(0, c(-1.0, 0.0))]);
        assert!(VectorField::generator(64, res()).is_err());
    }

    #[test]
    fn tangential_fields_on_circle() {
        // (l_n - l_{-n})/2 = -z (z^n - z^{-n})/2 = -i e^{i theta} sin(n theta)
        for n in 1..4 {
            let par = VectorField::tangential(n, res()).unwrap();
            let pari = VectorField::tangential_i(n, res()).unwrap();
            for k in 0..16 {
                let th = theta(k, 16);
                let z = C64::from_polar(1.0, th);
                let want = c(0.0, -1.0) * z * (n as f64 * th).sin();
                assert!((par.value_at(z) - want).norm() < 1e-14);
                let want_i = c(0.0, 1.0) * z * (n as f64 * th).cos();
                assert!((pari.value_at(z) - want_i).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn theta_coordinates_round_trip() {
        let v = VectorField::new(
            AnalyticLoop::from_coeffs(&[(-2, c(0.3, 0.2)), (1, c(-1.0, 0.0)), (3, c(0.0, 0.5))], res()).unwrap(),
        );
        let m = 64;
        let th = v.theta_samples(m);
        for (k, z) in grid(m).into_iter().enumerate() {
            assert!((c(0.0, 1.0) * z * th[k] - v.value_at(z)).norm() < 1e-12);
        }
        let l3 = VectorField::generator(3, res()).unwrap();
        assert_eq!(l3.theta_coeff(3), c(0.0, 1.0));
    }

    #[test]
    fn bracket_examples() {
        let g = |n| VectorField::generator(n, res()).unwrap();
        let b = g(1).bracket(&g(-1)).unwrap();
        assert_eq!(b.as_loop().terms(), g(0).scale(c(2.0, 0.0)).as_loop().terms());
        let b = g(2).bracket(&g(3)).unwrap();
        assert_eq!(b.as_loop().terms(), g(5).scale(c(-1.0, 0.0)).as_loop().terms());
        let v = g(2).add(&g(-3).scale(c(0.0, 0.7)));
        assert!(v.bracket(&v).unwrap().as_loop().terms().is_empty());
    }

    #[test]
    fn pullback_examples() {
        let l = VectorField::generator(3, res()).unwrap();
        let inv = l.pullback(&AnalyticLoop::inversion(res())).unwrap();
        let want = VectorField::generator(-3, res()).unwrap().scale(c(-1.0, 0.0));
        assert!(inv.distance(&want) < 1e-14);
        assert!(l.pullback(&AnalyticLoop::identity(res())).unwrap().distance(&l) < 1e-14);
        let tau = 0.03;
        let sc = Deformation::scaling(tau, res());
        let got = l.pullback(sc.as_loop()).unwrap();
        let want = l.scale(c((-2.0 * PI * tau * 3.0).exp(), 0.0));
        assert!(got.distance(&want) < 1e-14);
    }

    #[test]
    fn exact_flow_examples() {
        let f = exact_flow(0, 0.4, res()).unwrap();
        assert!(f.distance(&Deformation::scaling(0.4 / (2.0 * PI), res())) < 1e-15);
        for n in -3..=3 {
            assert!(exact_flow(n, 0.0, res()).unwrap().distance(&Deformation::identity(res())) < 1e-15);
        }
        let f = exact_flow(1, 0.1, res()).unwrap();
        for z in grid(32) {
            assert!((f.value_at(z) - z / (1.0 + 0.1 * z)).norm() < 1e-14);
        }
        assert!(matches!(exact_flow(2, 0.45, res()), Err(WittError::Branch { .. })));
    }

    #[test]
    fn one_parameter_law() {
        for n in [-2, -1, 1, 2] {
            let a = exact_flow(n, 0.05, res()).unwrap();
            let b = exact_flow(n, 0.07, res()).unwrap();
            let ab = a.compose(&b).unwrap();
            assert!(ab.distance(&exact_flow(n, 0.12, res()).unwrap()) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn ode_flow_matches_closed_form() {
        let l0 = TimeField::constant(VectorField::generator(0, res()).unwrap());
        let f = flow_ode(&l0, 0.3, 1000).unwrap();
        assert!(f.map.distance(&Deformation::linear(c((-0.3f64).exp(), 0.0), res())) < 1e-8);
        let l1 = TimeField::constant(VectorField::generator(1, res()).unwrap());
        let f = flow_ode(&l1, 0.1, 1000).unwrap();
        assert!(f.map.distance(&exact_flow(1, 0.1, res()).unwrap()) < 1e-8);
        let zero = TimeField::constant(VectorField::zero(res()));
        assert!(flow_ode(&zero, 0.5, 10).unwrap().map.distance(&Deformation::identity(res())) < 1e-15);
    }

    #[test]
    fn right_flow_examples() {
        let l0 = TimeField::constant(VectorField::generator(0, res()).unwrap());
        let f = flow_right(&l0, 0.3, 200).unwrap();
        assert!(f.map.distance(&exact_flow(0, 0.3, res()).unwrap()) < 1e-10);
        let zero = TimeField::constant(VectorField::zero(res()));
        assert!(flow_right(&zero, 0.3, 10).unwrap().map.distance(&Deformation::identity(res())) < 1e-15);
    }

    #[test]
    fn right_flow_of_time_independent_field_is_pullback_related() {
        let w = VectorField::generator(1, res()).unwrap();
        let t = 0.05;
        let phi = flow_right(&TimeField::constant(w.clone()), t, 200).unwrap().map;
        let right = |s: f64| Ok(flow_right(&TimeField::constant(w.clone()), s, 200)?.map);
        let (v, w_rec) = curve_to_field(right, t, 1e-3).unwrap();
        assert!(w_rec.distance(&w) < 1e-6);
        let pulled = v.pullback(phi.as_loop()).unwrap();
        assert!(pulled.distance(&w) < 1e-6);
    }

    #[test]
    fn curve_fields() {
        let (v, w) = curve_to_field(|t| exact_flow(0, t, res()), 0.0, 1e-4).unwrap();
        let l0 = VectorField::generator(0, res()).unwrap();
        assert!(v.distance(&l0) < 1e-8 && w.distance(&l0) < 1e-8);
        let (v, w) = curve_to_field(|t| Ok(Deformation::rotation(t, res())), 0.0, 1e-4).unwrap();
        for th in v.theta_samples(16) {
            assert!((th - c(1.0, 0.0)).norm() < 1e-8);
        }
        assert!(v.distance(&w) < 1e-8);
        let t = 0.05;
        let (v, w) = curve_to_field(|s| exact_flow(2, s, res()), t, 1e-4).unwrap();
        let pulled = v.pullback(exact_flow(2, t, res()).unwrap().as_loop()).unwrap();
        assert!(pulled.distance(&w) < 1e-6);
    }

    #[test]
    fn time_field_interpolates_knots() {
        let a = VectorField::generator(0, res()).unwrap();
        let b = VectorField::generator(1, res()).unwrap();
        let tf = TimeField::new(vec![0.0, 1.0, 2.0], vec![a.clone(), b.clone(), a.clone()]).unwrap();
        assert!(tf.at(1.0).distance(&b) < 1e-15);
        assert!(tf.at(0.0).distance(&a) < 1e-15);
        assert!(TimeField::new(vec![1.0, 1.0], vec![a.clone(), b]).is_err());
    }
}
