//! Complex deformations of the circle and their partial group law.
//!
//! A deformation is an injective analytic loop with no zeros and winding
//! number one about the origin. Composition and inversion are defined only
//! when the relevant analytic continuation is univalent and zero-free over
//! the region swept between the circle and the image curve.

use std::f64::consts::PI;

use rand::RngExt;
use rayon::prelude::*;
use thiserror::Error;

use crate::series::{grid, AnalyticLoop, LoopSpec, Resolution, SeriesError, C64, TRUNCATION_WARN};

/// Below this sample distance a loop counts as attaining zero.
pub const ZERO_TOL: f64 = 1e-10;
/// Smallest admissible chord ratio `|f(z_j) - f(z_k)| / |z_j - z_k|`.
pub const INJECTIVITY_TOL: f64 = 1e-6;
/// Newton residual accepted when inverting.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
/// Both-sided residual accepted for an inverse.
pub const INVERSE_TOL: f64 = 1e-9;
/// Regions thinner than this are treated as the unit circle.
const DEGENERATE_WIDTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeformationError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("winding number about 0 is {0}, expected 1")]
    Winding(i64),
    #[error("loop attains zero (min |phi| = {distance:e})")]
    ZeroAttained { distance: f64 },
    #[error("loop is not injective on the circle ({reason})")]
    NotInjective { reason: String },
    #[error("pair is not composable")]
    NotComposable,
    #[error("result not resolved at the truncation degree (dropped tail {tail:e})")]
    Truncation { tail: f64 },
    #[error("Newton iteration failed at grid point {index} (residual {residual:e})")]
    NewtonDiverged { index: usize, residual: f64 },
    #[error("not invertible: {0}")]
    NotInvertible(String),
}

pub type Result<T, E = DeformationError> = std::result::Result<T, E>;

/// Closed region between an inner and an outer star-shaped boundary,
/// stored as radii at equally spaced angles `2 pi j / K`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnularRegion {
    inner: Vec<f64>,
    outer: Vec<f64>,
    /// False when the image curve is not star-shaped and the region was
    /// replaced by its radial hull.
    exact: bool,
}

impl AnnularRegion {
    /// Region between the circle and the closed curve through `curve`
    /// (values at equally spaced parameters, positively oriented).
    pub fn between_circle_and(curve: &[C64], angles: usize) -> Self {
        match radial_function(curve, angles) {
            Some(r) => AnnularRegion {
                inner: r.iter().map(|&x| x.min(1.0)).collect(),
                outer: r.iter().map(|&x| x.max(1.0)).collect(),
                exact: true,
            },
            None => {
                let lo = curve.iter().map(|w| w.norm()).fold(1.0, f64::min);
                let hi = curve.iter().map(|w| w.norm()).fold(1.0, f64::max);
                AnnularRegion { inner: vec![lo; angles], outer: vec![hi; angles], exact: false }
            }
        }
    }

    pub fn circle(angles: usize) -> Self {
        AnnularRegion { inner: vec![1.0; angles], outer: vec![1.0; angles], exact: true }
    }

    pub fn angles(&self) -> usize {
        self.inner.len()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn inner_radii(&self) -> &[f64] {
        &self.inner
    }

    pub fn outer_radii(&self) -> &[f64] {
        &self.outer
    }

    /// Boundary polylines, both oriented counterclockwise.
    pub fn inner(&self) -> Vec<C64> {
        polar_polyline(&self.inner)
    }

    pub fn outer(&self) -> Vec<C64> {
        polar_polyline(&self.outer)
    }

    pub fn min_radius(&self) -> f64 {
        self.inner.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        self.outer.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_degenerate(&self) -> bool {
        self.inner.iter().zip(&self.outer).all(|(a, b)| b - a <= DEGENERATE_WIDTH)
    }

    /// Membership with a relative boundary tolerance.
    pub fn contains(&self, point: C64) -> bool {
        let (lo, hi) = self.radii_at(point.arg());
        let r = point.norm();
        r >= lo * (1.0 - 1e-9) && r <= hi * (1.0 + 1e-9)
    }

    /// Interpolated inner and outer radius at an angle.
    pub fn radii_at(&self, theta: f64) -> (f64, f64) {
        let k = self.angles();
        let x = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * k as f64;
        let j = (x.floor() as usize) % k;
        let t = x - x.floor();
        let lerp = |v: &[f64]| v[j] * (1.0 - t) + v[(j + 1) % k] * t;
        (lerp(&self.inner), lerp(&self.outer))
    }

    /// Points strictly inside, at three radial fractions per angle.
    pub fn probes(&self) -> Vec<C64> {
        let k = self.angles();
        let mut out = Vec::with_capacity(3 * k);
        for j in 0..k {
            let dir = C64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64);
            for frac in [0.25, 0.5, 0.75] {
                let r = self.inner[j] + frac * (self.outer[j] - self.inner[j]);
                out.push(dir * r);
            }
        }
        out
    }
}

fn polar_polyline(radii: &[f64]) -> Vec<C64> {
    let k = radii.len();
    radii.iter().enumerate().map(|(j, &r)| C64::from_polar(r, 2.0 * PI * j as f64 / k as f64)).collect()
}

/// Radius of a star-shaped curve at `angles` equally spaced directions, or
/// `None` when the argument is not strictly increasing along the curve.
fn radial_function(curve: &[C64], angles: usize) -> Option<Vec<f64>> {
    let m = curve.len();
    let mut args = Vec::with_capacity(m + 1);
    args.push(curve[0].arg());
    for k in 1..=m {
        let step = (curve[k % m] / curve[k - 1]).arg();
        if step <= 0.0 {
            return None;
        }
        args.push(args[k - 1] + step);
    }
    if ((args[m] - args[0]) - 2.0 * PI).abs() > 1e-6 {
        return None;
    }
    let logs: Vec<f64> = (0..=m).map(|k| curve[k % m].norm().ln()).collect();
    let start = args[0];
    let mut out = Vec::with_capacity(angles);
    let mut seg = 0usize;
    for j in 0..angles {
        let mut theta = 2.0 * PI * j as f64 / angles as f64;
        theta = start + (theta - start).rem_euclid(2.0 * PI);
        while seg + 1 < m && args[seg + 1] < theta {
            seg += 1;
        }
        // `theta` increases with `j` after the first wrap, so restart when needed
        if args[seg] > theta {
            seg = args.partition_point(|&a| a <= theta).saturating_sub(1);
        }
        let t = (theta - args[seg]) / (args[seg + 1] - args[seg]);
        out.push((logs[seg] * (1.0 - t) + logs[seg + 1] * t).exp());
    }
    Some(out)
}

/// Winding number of a closed polyline about a point, by summed angle
/// increments.
pub fn polyline_winding(points: &[C64], about: C64) -> i64 {
    let m = points.len();
    let mut total = 0.0;
    for k in 0..m {
        let a = points[k] - about;
        let b = points[(k + 1) % m] - about;
        total += (b / a).arg();
    }
    (total / (2.0 * PI)).round() as i64
}

fn segments_cross(p1: C64, p2: C64, q1: C64, q2: C64) -> bool {
    let cross = |a: C64, b: C64| a.re * b.im - a.im * b.re;
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// A validated complex deformation with its cached region `U`.
#[derive(Clone, Debug)]
pub struct Deformation {
    map: AnalyticLoop,
    region: AnnularRegion,
}

impl Deformation {
    /// Validates a loop: no zeros, winding one about the origin, injective.
    pub fn new(map: AnalyticLoop) -> Result<Self> {
        let res = map.resolution();
        let k = res.fine();
        let fine = map.samples_on(k);
        let scale = map.scale().max(1.0);
        let closest = fine.iter().map(|w| w.norm()).fold(f64::INFINITY, f64::min);
        if closest <= ZERO_TOL * scale {
            return Err(DeformationError::ZeroAttained { distance: closest });
        }
        let w = map.winding_number(C64::new(0.0, 0.0))?;
        if w != 1 {
            return Err(DeformationError::Winding(w));
        }
        check_injective(&map, &fine)?;
        let region = AnnularRegion::between_circle_and(&fine, k);
        Ok(Deformation { map, region })
    }

    pub fn from_spec(spec: &LoopSpec, res: Resolution) -> Result<Self> {
        Self::new(spec.to_loop(res)?)
    }

    pub fn identity(res: Resolution) -> Self {
        Self::trusted(AnalyticLoop::identity(res))
    }

    /// `z -> e^{i alpha} z`.
    pub fn rotation(alpha: f64, res: Resolution) -> Self {
        Self::trusted(AnalyticLoop::monomial(1, C64::from_polar(1.0, alpha), res))
    }

    /// `z -> e^{-2 pi tau} z`.
    pub fn scaling(tau: f64, res: Resolution) -> Self {
        Self::trusted(AnalyticLoop::monomial(1, C64::new((-2.0 * PI * tau).exp(), 0.0), res))
    }

    /// `z -> c z` for nonzero `c`.
    pub fn linear(c: C64, res: Resolution) -> Self {
        Self::trusted(AnalyticLoop::monomial(1, c, res))
    }

    fn trusted(map: AnalyticLoop) -> Self {
        let k = map.resolution().fine();
        let region = AnnularRegion::between_circle_and(&map.samples_on(k), k);
        Deformation { map, region }
    }

    pub fn as_loop(&self) -> &AnalyticLoop {
        &self.map
    }

    pub fn into_loop(self) -> AnalyticLoop {
        self.map
    }

    pub fn region(&self) -> &AnnularRegion {
        &self.region
    }

    pub fn resolution(&self) -> Resolution {
        self.map.resolution()
    }

    pub fn value_at(&self, z: C64) -> C64 {
        self.map.value_at(z)
    }

    pub fn coeff(&self, deg: i64) -> C64 {
        self.map.coeff(deg)
    }

    pub fn to_spec(&self) -> LoopSpec {
        LoopSpec::from_loop(&self.map, Some(true))
    }

    /// Sup distance of values on a fine grid.
    pub fn distance(&self, other: &Deformation) -> f64 {
        self.map.sup_distance(&other.map)
    }

    /// Whether `self o other` is defined: the continuation of `self` over
    /// `U(other)` is certified, zero-free and univalent at probe points.
    pub fn is_composable(&self, other: &Deformation) -> bool {
        let region = &other.region;
        let (lo, hi) = self.map.radii().certified();
        if region.min_radius() < lo * (1.0 - 1e-12) || region.max_radius() > hi * (1.0 + 1e-12) {
            return false;
        }
        if region.is_degenerate() {
            return true;
        }
        let outer: Vec<C64> = region.outer().iter().map(|&z| self.map.value_at(z)).collect();
        let inner: Vec<C64> = region.inner().iter().map(|&z| self.map.value_at(z)).collect();
        let scale = self.map.scale().max(1.0);
        let closest = outer.iter().chain(&inner).map(|w| w.norm()).fold(f64::INFINITY, f64::min);
        if closest <= ZERO_TOL * scale {
            return false;
        }
        let origin = C64::new(0.0, 0.0);
        if polyline_winding(&outer, origin) != polyline_winding(&inner, origin) {
            return false;
        }
        region.probes().par_iter().all(|&p| {
            let w = self.map.value_at(p);
            polyline_winding(&outer, w) - polyline_winding(&inner, w) == 1
        })
    }

    /// `self o other` by sampling the continuation of `self` at `other(z)`.
    pub fn compose(&self, other: &Deformation) -> Result<Deformation> {
        if !self.is_composable(other) {
            return Err(DeformationError::NotComposable);
        }
        self.compose_unchecked(other)
    }

    /// Composition without the univalence probe; the analytic-continuation
    /// radius is still enforced.
    pub fn compose_unchecked(&self, other: &Deformation) -> Result<Deformation> {
        let res = self.resolution();
        let m = 2 * res.samples;
        let inner_vals = other.map.samples_on(m);
        let radii = self.map.radii();
        let mut values = Vec::with_capacity(m);
        for w in inner_vals {
            if !radii.contains(w) {
                let (inner, outer) = radii.certified();
                return Err(SeriesError::NotCertified { point: w, inner, outer }.into());
            }
            values.push(self.map.value_at(w));
        }
        let out = AnalyticLoop::from_samples(&values, res)?;
        if out.dropped_tail() > TRUNCATION_WARN {
            return Err(DeformationError::Truncation { tail: out.dropped_tail() });
        }
        Deformation::new(out)
    }

    /// Newton solve of `self(w) = target`, seeded at `seed`.
    pub fn solve(&self, target: C64, seed: C64) -> Option<C64> {
        newton(&self.map, target, seed)
    }

    pub fn is_invertible(&self) -> bool {
        self.invert().is_ok()
    }

    /// The inverse deformation: preimages of the circle by per-point Newton
    /// iteration, re-expanded and checked from both sides.
    pub fn invert(&self) -> Result<Deformation> {
        let res = self.resolution();
        let m = 2 * res.samples;
        let k = res.fine();
        let nodes = grid(k);
        let fine = self.map.samples_on(k);
        let targets = grid(m);
        let mut pre = Vec::with_capacity(m);
        let mut previous: Option<C64> = None;
        for (index, &t) in targets.iter().enumerate() {
            let nearest = (0..k)
                .min_by(|&a, &b| (fine[a] - t).norm().total_cmp(&(fine[b] - t).norm()))
                .unwrap();
            let mut sol = newton(&self.map, t, nodes[nearest]);
            if sol.is_none() {
                if let Some(p) = previous {
                    sol = newton(&self.map, t, p);
                }
            }
            match sol {
                Some(w) => {
                    pre.push(w);
                    previous = Some(w);
                }
                None => {
                    let residual = (self.map.value_at(nodes[nearest]) - t).norm();
                    return Err(DeformationError::NewtonDiverged { index, residual });
                }
            }
        }
        let inv = AnalyticLoop::from_samples(&pre, res)?;
        if inv.dropped_tail() > TRUNCATION_WARN {
            return Err(DeformationError::Truncation { tail: inv.dropped_tail() });
        }
        let inv = Deformation::new(inv)?;
        if !self.is_composable(&inv) {
            return Err(DeformationError::NotInvertible("continuation over U(inverse) not univalent".into()));
        }
        let id = Deformation::identity(res);
        let right = self.compose_unchecked(&inv)?.distance(&id);
        let left = inv.compose_unchecked(self).map(|d| d.distance(&id)).unwrap_or(f64::INFINITY);
        if right.max(left) > INVERSE_TOL {
            return Err(DeformationError::NotInvertible(format!("inverse residual {:e}", right.max(left))));
        }
        Ok(inv)
    }
}

fn newton(map: &AnalyticLoop, target: C64, seed: C64) -> Option<C64> {
    let radii = map.radii();
    let tol = NEWTON_TOL * target.norm().max(1.0);
    let mut w = seed;
    for _ in 0..NEWTON_MAX_ITER {
        if !radii.contains(w) {
            return None;
        }
        let (f, df) = map.value_and_derivative(w);
        let r = f - target;
        if r.norm() <= tol {
            // one more step takes a quadratically converging iterate to rounding level
            if df.norm() > 0.0 {
                let polished = w - r / df;
                if radii.contains(polished) {
                    return Some(polished);
                }
            }
            return Some(w);
        }
        if df.norm() == 0.0 {
            return None;
        }
        w -= r / df;
    }
    let r = (map.value_at(w) - target).norm();
    (r <= tol && radii.contains(w)).then_some(w)
}

fn check_injective(map: &AnalyticLoop, fine: &[C64]) -> Result<()> {
    let turning = map.z_derivative().winding_number(C64::new(0.0, 0.0));
    match turning {
        Ok(1) => {}
        Ok(t) => {
            return Err(DeformationError::NotInjective { reason: format!("tangent turns {t} times") });
        }
        Err(_) => {
            return Err(DeformationError::NotInjective { reason: "derivative vanishes on the circle".into() });
        }
    }
    let k = fine.len();
    let nodes = grid(k);
    let ratio = (0..k)
        .into_par_iter()
        .map(|j| {
            let mut best = f64::INFINITY;
            for l in (j + 1)..k {
                let r = (fine[j] - fine[l]).norm() / (nodes[j] - nodes[l]).norm();
                best = best.min(r);
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    if ratio <= INJECTIVITY_TOL * map.scale().max(1.0) {
        return Err(DeformationError::NotInjective { reason: format!("chord ratio {ratio:e}") });
    }
    let crossing = (0..k).into_par_iter().any(|j| {
        ((j + 2)..k).any(|l| {
            if j == 0 && l == k - 1 {
                return false;
            }
            segments_cross(fine[j], fine[(j + 1) % k], fine[l], fine[(l + 1) % k])
        })
    });
    if crossing {
        return Err(DeformationError::NotInjective { reason: "image polyline self-intersects".into() });
    }
    Ok(())
}

/// `z + a_0 + a_2 z^2 + a_3 z^3` with each `|a_j| <= size`.
pub fn random_near_identity<R: RngExt + ?Sized>(rng: &mut R, size: f64, res: Resolution) -> Deformation {
    let draw = |rng: &mut R| {
        let r = size * rng.random_range(0.0..1.0f64).sqrt();
        C64::from_polar(r, rng.random_range(0.0..2.0 * PI))
    };
    let terms = [(0, draw(rng)), (1, C64::new(1.0, 0.0)), (2, draw(rng)), (3, draw(rng))];
    let lp = AnalyticLoop::from_coeffs(&terms, res).expect("low degrees");
    Deformation::new(lp).expect("small perturbations of the identity are deformations")
}
