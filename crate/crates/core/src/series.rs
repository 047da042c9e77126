//! Truncated Laurent series on a neighbourhood of the unit circle.
//!
//! An [`AnalyticLoop`] stores coefficients `c_n` for `-N <= n <= N` together
//! with its values on the `M`-point root-of-unity grid and an estimate of the
//! annulus on which the series converges.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Largest truncation degree accepted by the constructors.
pub const MAX_MODES: usize = 4096;

/// Coefficients below this fraction of the largest one are set to zero when
/// a loop is rebuilt from samples.
pub const CHOP: f64 = 1e-15;

/// Relative size of discarded modes above which a product or resampling is
/// reported as under-resolved.
pub const TRUNCATION_WARN: f64 = 1e-10;

/// Safety factor between the fitted radii and the certified annulus.
pub const SAFETY: f64 = 1.05;

/// Largest admissible distance of a winding quadrature from an integer.
pub const WINDING_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("degree {degree} exceeds the truncation bound {max}")]
    DegreeBound { degree: i64, max: usize },
    #[error("analytic continuation not certified at {point} (certified annulus [{inner}, {outer}])")]
    NotCertified { point: C64, inner: f64, outer: f64 },
    #[error("loop passes through {point} (distance {distance:e})")]
    PassesThrough { point: C64, distance: f64 },
    #[error("winding quadrature under-resolved (distance from an integer {residual:e})")]
    UnderResolved { residual: f64 },
    #[error("invalid resolution: {0}")]
    Resolution(String),
    #[error("malformed loop description: {0}")]
    Json(String),
}

/// Truncation degree `N` and sample count `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub modes: usize,
    pub samples: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::new(64)
    }
}

impl Resolution {
    /// `modes` coefficients on each side and `4 * modes` samples.
    pub fn new(modes: usize) -> Self {
        Resolution { modes, samples: 4 * modes }
    }

    pub fn with_samples(modes: usize, samples: usize) -> Result<Self, SeriesError> {
        let res = Resolution { modes, samples };
        res.validate()?;
        Ok(res)
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.modes == 0 || self.modes > MAX_MODES {
            return Err(SeriesError::Resolution(format!("modes must lie in 1..={MAX_MODES}")));
        }
        if self.samples < 2 * self.modes + 1 {
            return Err(SeriesError::Resolution(format!(
                "{} samples cannot resolve {} modes",
                self.samples, self.modes
            )));
        }
        Ok(())
    }

    /// Grid used for injectivity tests and region envelopes.
    pub fn fine(&self) -> usize {
        8 * self.modes
    }
}

/// Estimated annulus `inner < |z| < outer` of convergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub inner: f64,
    pub outer: f64,
    /// The negative-degree tail does not decay; `inner` is a placeholder.
    pub inner_unknown: bool,
    /// The positive-degree tail does not decay; `outer` is a placeholder.
    pub outer_unknown: bool,
}

impl Radii {
    /// Annulus on which evaluation is certified.
    /// Always contains the unit circle, where the series is the data itself.
    pub fn certified(&self) -> (f64, f64) {
        ((self.inner * SAFETY).min(1.0), (self.outer / SAFETY).max(1.0))
    }

    pub fn contains(&self, point: C64) -> bool {
        let (lo, hi) = self.certified();
        let r = point.norm();
        r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)
    }
}

/// Value of a loop at a point together with a truncation-error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: C64,
    pub error: f64,
}

/// Geometric model `|c_n| ~ exp(a + b n)` fitted to one side of the series.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Tail {
    /// No coefficients, or the series visibly terminates.
    Finite,
    Geometric { a: f64, b: f64, last: usize },
    Unknown,
}

/// Truncated Laurent series `sum c_n z^n` with cached grid values.
#[derive(Clone, Debug)]
pub struct AnalyticLoop {
    res: Resolution,
    coeffs: Vec<C64>,
    samples: Vec<C64>,
    radii: Radii,
    tails: (Tail, Tail),
    support: (i64, i64),
    dropped: f64,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(len)
        } else {
            p.plan_fft_inverse(len)
        }
    })
}

/// The `m`-th roots of unity `exp(2 pi i k / m)`.
pub fn grid(m: usize) -> Vec<C64> {
    (0..m).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64)).collect()
}

/// Discrete Fourier coefficients `(1/m) sum_k f_k exp(-2 pi i j k / m)`.
pub fn dft(values: &[C64]) -> Vec<C64> {
    let mut buf = values.to_vec();
    plan(buf.len(), true).process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Inverse of [`dft`].
pub fn idft(coeffs: &[C64]) -> Vec<C64> {
    let mut buf = coeffs.to_vec();
    plan(buf.len(), false).process(&mut buf);
    buf
}

fn wrap(n: i64, m: usize) -> usize {
    n.rem_euclid(m as i64) as usize
}

impl AnalyticLoop {
    /// Builds a loop from `(degree, coefficient)` pairs; repeated degrees add.
    pub fn from_coeffs(terms: &[(i64, C64)], res: Resolution) -> Result<Self, SeriesError> {
        res.validate()?;
        let n = res.modes as i64;
        let mut coeffs = vec![C64::new(0.0, 0.0); 2 * res.modes + 1];
        for &(deg, c) in terms {
            if deg.abs() > n {
                return Err(SeriesError::DegreeBound { degree: deg, max: res.modes });
            }
            coeffs[(deg + n) as usize] += c;
        }
        Ok(Self::from_coeff_vec(coeffs, res, 0.0))
    }

    /// Coefficient vector indexed by `degree + N`.
    pub(crate) fn from_coeff_vec(coeffs: Vec<C64>, res: Resolution, dropped: f64) -> Self {
        debug_assert_eq!(coeffs.len(), 2 * res.modes + 1);
        let samples = values_on(&coeffs, res.modes, res.samples);
        let support = support_of(&coeffs, res.modes);
        let tails = (fit_tail(&coeffs, res.modes, -1), fit_tail(&coeffs, res.modes, 1));
        let radii = radii_from(tails);
        AnalyticLoop { res, coeffs, samples, radii, tails, support, dropped }
    }

    /// Re-expands values on an `m`-point root-of-unity grid, `m >= 2N + 1`.
    /// Modes beyond `N` are discarded and their relative size recorded.
    pub fn from_samples(values: &[C64], res: Resolution) -> Result<Self, SeriesError> {
        res.validate()?;
        let m = values.len();
        if m < 2 * res.modes + 1 {
            return Err(SeriesError::Resolution(format!("{m} samples cannot resolve {} modes", res.modes)));
        }
        let spectrum = dft(values);
        let n = res.modes as i64;
        let mut coeffs = vec![C64::new(0.0, 0.0); 2 * res.modes + 1];
        for deg in -n..=n {
            coeffs[(deg + n) as usize] = spectrum[wrap(deg, m)];
        }
        let scale = spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut dropped = 0.0f64;
        let half = (m as i64 - 1) / 2;
        for deg in (n + 1)..=half {
            dropped = dropped.max(spectrum[wrap(deg, m)].norm()).max(spectrum[wrap(-deg, m)].norm());
        }
        if m.is_multiple_of(2) && m as i64 / 2 > n {
            dropped = dropped.max(spectrum[m / 2].norm());
        }
        let (dropped, floor) = if scale > 0.0 { (dropped / scale, CHOP * scale) } else { (0.0, 0.0) };
        for side in [-1i64, 1] {
            let side_floor = floor.max(20.0 * noise_level(&coeffs, res.modes, side, scale));
            for k in 0..=n {
                let c = &mut coeffs[(side * k + n) as usize];
                if c.norm() <= side_floor {
                    *c = C64::new(0.0, 0.0);
                }
            }
        }
        Ok(Self::from_coeff_vec(coeffs, res, dropped))
    }

    /// Samples `f` on a `2M` grid and re-expands.
    pub fn from_fn(res: Resolution, f: impl Fn(C64) -> C64) -> Result<Self, SeriesError> {
        let pts = grid(2 * res.samples);
        let values: Vec<C64> = pts.into_iter().map(f).collect();
        Self::from_samples(&values, res)
    }

    pub fn identity(res: Resolution) -> Self {
        Self::monomial(1, C64::new(1.0, 0.0), res)
    }

    /// The restriction of `z -> 1/z`.
    pub fn inversion(res: Resolution) -> Self {
        Self::monomial(-1, C64::new(1.0, 0.0), res)
    }

    pub fn constant(c: C64, res: Resolution) -> Self {
        Self::monomial(0, c, res)
    }

    pub fn zero(res: Resolution) -> Self {
        Self::constant(C64::new(0.0, 0.0), res)
    }

    /// `c z^deg`; panics if `|deg| > N`.
    pub fn monomial(deg: i64, c: C64, res: Resolution) -> Self {
        Self::from_coeffs(&[(deg, c)], res).expect("monomial degree within the truncation bound")
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn modes(&self) -> usize {
        self.res.modes
    }

    /// Coefficient of `z^deg`, zero outside the stored range.
    pub fn coeff(&self, deg: i64) -> C64 {
        let n = self.res.modes as i64;
        if deg.abs() > n {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(deg + n) as usize]
        }
    }

    /// All coefficients, indexed by `degree + N`.
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// `(degree, coefficient)` pairs of the nonzero coefficients.
    pub fn terms(&self) -> Vec<(i64, C64)> {
        let n = self.res.modes as i64;
        (-n..=n).map(|d| (d, self.coeff(d))).filter(|(_, c)| *c != C64::new(0.0, 0.0)).collect()
    }

    /// Values on the `M`-point grid.
    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn radii(&self) -> Radii {
        self.radii
    }

    /// Lowest and highest degree carrying a nonzero coefficient.
    pub fn support(&self) -> (i64, i64) {
        self.support
    }

    /// Relative size of modes discarded when this loop was built.
    pub fn dropped_tail(&self) -> f64 {
        self.dropped
    }

    pub fn is_resolved(&self) -> bool {
        self.dropped <= TRUNCATION_WARN
    }

    /// Largest coefficient modulus.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Values on an `m`-point grid; coarse grids fold aliased modes, which
    /// is exact at the grid points.
    pub fn samples_on(&self, m: usize) -> Vec<C64> {
        if m == self.res.samples {
            return self.samples.clone();
        }
        values_on(&self.coeffs, self.res.modes, m)
    }

    /// Laurent sum at `z` with no certification.
    pub fn value_at(&self, z: C64) -> C64 {
        let (lo, hi) = self.support;
        let n = self.res.modes as i64;
        let mut acc = C64::new(0.0, 0.0);
        if hi >= 0 {
            let mut pos = C64::new(0.0, 0.0);
            for d in (lo.max(0)..=hi).rev() {
                pos = pos * z + self.coeffs[(d + n) as usize];
            }
            if lo > 0 {
                pos *= z.powi(lo as i32);
            }
            acc += pos;
        }
        if lo < 0 {
            let w = z.inv();
            let top = (-lo) as usize;
            let bottom = (-hi.min(-1)) as usize;
            let mut neg = C64::new(0.0, 0.0);
            for d in (bottom..=top).rev() {
                neg = neg * w + self.coeffs[(n - d as i64) as usize];
            }
            acc += neg * w.powi(bottom as i32);
        }
        acc
    }

    /// Value and first derivative at `z` with no certification.
    pub fn value_and_derivative(&self, z: C64) -> (C64, C64) {
        let (lo, hi) = self.support;
        let n = self.res.modes as i64;
        let mut f = C64::new(0.0, 0.0);
        let mut df = C64::new(0.0, 0.0);
        if hi >= 0 {
            let (mut p, mut dp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for d in (0..=hi).rev() {
                dp = dp * z + p;
                p = p * z + self.coeffs[(d + n) as usize];
            }
            f += p;
            df += dp;
        }
        if lo < 0 {
            let w = z.inv();
            let (mut p, mut dp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for d in (1..=(-lo) as usize).rev() {
                dp = dp * w + p;
                p = p * w + self.coeffs[(n - d as i64) as usize];
            }
            let neg = p * w;
            f += neg;
            // d/dz of w * P(w) with w = 1/z
            df += -(w * w) * (p + w * dp);
        }
        (f, df)
    }

    /// Certified evaluation inside the safety-shrunk annulus of convergence.
    pub fn evaluate(&self, z: C64) -> Result<Evaluation, SeriesError> {
        if !self.radii.contains(z) {
            let (inner, outer) = self.radii.certified();
            return Err(SeriesError::NotCertified { point: z, inner, outer });
        }
        let value = self.value_at(z);
        let r = z.norm();
        let mut error = tail_error(self.tails.1, r, self.res.modes) + tail_error(self.tails.0, 1.0 / r, self.res.modes);
        let mut size = 0.0;
        for (d, c) in self.terms() {
            size += c.norm() * r.powi(d as i32);
        }
        error += f64::EPSILON * size;
        Ok(Evaluation { value, error })
    }

    /// Termwise derivative `n c_n z^(n-1)`; the `-N` mode leaves the range
    /// and is recorded as dropped.
    pub fn derivative(&self) -> AnalyticLoop {
        let n = self.res.modes as i64;
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len()];
        for deg in (-n + 1)..=n {
            out[(deg - 1 + n) as usize] = self.coeffs[(deg + n) as usize] * deg as f64;
        }
        let lost = self.coeffs[0].norm() * n as f64;
        let scale = out.iter().map(|c| c.norm()).fold(lost, f64::max);
        let dropped = if scale > 0.0 { lost / scale } else { 0.0 };
        AnalyticLoop::from_coeff_vec(out, self.res, self.dropped.max(dropped))
    }

    /// `z f'(z)`, which keeps the degree range.
    pub fn z_derivative(&self) -> AnalyticLoop {
        let n = self.res.modes as i64;
        let out = (-n..=n).map(|d| self.coeff(d) * d as f64).collect();
        AnalyticLoop::from_coeff_vec(out, self.res, self.dropped)
    }

    /// Product by direct convolution of coefficients, truncated to degree
    /// `N`. Exact dealiasing; discarded modes are recorded.
    pub fn mul(&self, other: &AnalyticLoop) -> AnalyticLoop {
        let n = self.res.modes as i64;
        let m = other.res.modes as i64;
        let mut full = vec![C64::new(0.0, 0.0); (2 * (n + m) + 1) as usize];
        let (alo, ahi) = self.support;
        let (blo, bhi) = other.support;
        for a in alo..=ahi {
            let ca = self.coeffs[(a + n) as usize];
            if ca == C64::new(0.0, 0.0) {
                continue;
            }
            for b in blo..=bhi {
                let cb = other.coeffs[(b + m) as usize];
                full[(a + b + n + m) as usize] += ca * cb;
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len()];
        let mut lost = 0.0f64;
        let mut scale = 0.0f64;
        for (i, c) in full.iter().enumerate() {
            let deg = i as i64 - n - m;
            scale = scale.max(c.norm());
            if deg.abs() <= n {
                out[(deg + n) as usize] = *c;
            } else {
                lost = lost.max(c.norm());
            }
        }
        let dropped = if scale > 0.0 { lost / scale } else { 0.0 };
        AnalyticLoop::from_coeff_vec(out, self.res, self.dropped.max(other.dropped).max(dropped))
    }

    /// Pointwise combination of coefficients.
    pub fn zip_with(&self, other: &AnalyticLoop, f: impl Fn(C64, C64) -> C64) -> AnalyticLoop {
        let n = self.res.modes as i64;
        let out = (-n..=n).map(|d| f(self.coeff(d), other.coeff(d))).collect();
        AnalyticLoop::from_coeff_vec(out, self.res, self.dropped.max(other.dropped))
    }

    pub fn add(&self, other: &AnalyticLoop) -> AnalyticLoop {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &AnalyticLoop) -> AnalyticLoop {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale_by(&self, s: C64) -> AnalyticLoop {
        let out = self.coeffs.iter().map(|c| c * s).collect();
        AnalyticLoop::from_coeff_vec(out, self.res, self.dropped)
    }

    /// Same function truncated or padded to another resolution.
    pub fn with_resolution(&self, res: Resolution) -> AnalyticLoop {
        let n = res.modes as i64;
        let out = (-n..=n).map(|d| self.coeff(d)).collect();
        AnalyticLoop::from_coeff_vec(out, res, self.dropped)
    }

    /// Sup norm of the difference of coefficient vectors.
    pub fn coeff_distance(&self, other: &AnalyticLoop) -> f64 {
        let n = self.res.modes.max(other.res.modes) as i64;
        (-n..=n).map(|d| (self.coeff(d) - other.coeff(d)).norm()).fold(0.0, f64::max)
    }

    /// Sup norm of the difference of values on a common fine grid.
    pub fn sup_distance(&self, other: &AnalyticLoop) -> f64 {
        let m = self.res.fine().max(other.res.fine());
        let a = self.samples_on(m);
        let b = other.samples_on(m);
        a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    /// Winding number about `about` by trapezoid quadrature of
    /// `(1/2 pi i) \oint f'/(f - a)`, refining the grid until the result is
    /// within [`WINDING_RESIDUAL`] of an integer.
    pub fn winding_number(&self, about: C64) -> Result<i64, SeriesError> {
        // z f'(z) keeps the degree range, so no mode is lost to the shift
        let n = self.res.modes as i64;
        let zdf: Vec<C64> = (-n..=n).map(|d| self.coeff(d) * d as f64).collect();
        let scale = self.scale().max(about.norm()).max(1.0);
        let mut m = self.res.samples;
        let mut residual = f64::INFINITY;
        for _ in 0..4 {
            let f = self.samples_on(m);
            let df = values_on(&zdf, self.res.modes, m);
            let mut closest = f64::INFINITY;
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..m {
                let gap = f[k] - about;
                closest = closest.min(gap.norm());
                acc += df[k] / gap;
            }
            if closest <= 1e-13 * scale {
                return Err(SeriesError::PassesThrough { point: about, distance: closest });
            }
            let w = acc / m as f64;
            let k = w.re.round();
            residual = (w - C64::new(k, 0.0)).norm();
            if residual <= WINDING_RESIDUAL {
                return Ok(k as i64);
            }
            m *= 2;
        }
        Err(SeriesError::UnderResolved { residual })
    }
}

fn values_on(coeffs: &[C64], modes: usize, m: usize) -> Vec<C64> {
    let n = modes as i64;
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for deg in -n..=n {
        buf[wrap(deg, m)] += coeffs[(deg + n) as usize];
    }
    idft(&buf)
}

fn support_of(coeffs: &[C64], modes: usize) -> (i64, i64) {
    let n = modes as i64;
    let nz: Vec<i64> = (0..coeffs.len())
        .filter(|&i| coeffs[i] != C64::new(0.0, 0.0))
        .map(|i| i as i64 - n)
        .collect();
    match (nz.first(), nz.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0, 0),
    }
}

/// Median modulus over the top quarter of degrees on one side, when it is
/// small enough to be rounding noise rather than an unresolved tail.
fn noise_level(coeffs: &[C64], modes: usize, side: i64, scale: f64) -> f64 {
    let n = modes as i64;
    let start = (3 * n / 4 + 1).max(1);
    let mags: Vec<f64> = (start..=n).map(|k| coeffs[(side * k + n) as usize].norm()).collect();
    if mags.len() < 4 {
        return 0.0;
    }
    let median = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (early, late) = mags.split_at(mags.len() / 2);
    let level = median(&mags);
    // genuine decay drops by more than a decade across the window
    let flat = median(early) <= 10.0 * median(late);
    if level <= 1e-9 * scale && flat {
        level
    } else {
        0.0
    }
}

/// Fits `log |c_{side*k}|` against `k` over the ten highest significant
/// degrees on one side.
fn fit_tail(coeffs: &[C64], modes: usize, side: i64) -> Tail {
    let n = modes as i64;
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Tail::Finite;
    }
    let floor = CHOP * scale;
    let pts: Vec<(f64, f64)> = (1..=n)
        .filter_map(|k| {
            let c = coeffs[(side * k + n) as usize].norm();
            (c > floor).then(|| (k as f64, c.ln()))
        })
        .collect();
    if pts.len() <= 1 {
        return Tail::Finite;
    }
    let top = &pts[pts.len().saturating_sub(10)..];
    let len = top.len() as f64;
    let mx = top.iter().map(|p| p.0).sum::<f64>() / len;
    let my = top.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = top.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = top.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let last = pts.last().unwrap().0 as usize;
    // A series whose fitted trend predicts coefficients far above the noise
    // floor two degrees past its last nonzero term has terminated.
    if (last as i64) + 2 <= n && a + b * (last as f64 + 2.0) > (1e3 * floor).ln() {
        return Tail::Finite;
    }
    if b >= -1e-12 {
        return Tail::Unknown;
    }
    Tail::Geometric { a, b, last }
}

fn radii_from(tails: (Tail, Tail)) -> Radii {
    let radius = |t: Tail| match t {
        Tail::Finite => (f64::INFINITY, false),
        Tail::Geometric { b, .. } => ((-b).exp(), false),
        Tail::Unknown => (1.0 + 1e-3, true),
    };
    let (inv_inner, inner_unknown) = radius(tails.0);
    let (outer, outer_unknown) = radius(tails.1);
    Radii { inner: 1.0 / inv_inner, outer, inner_unknown, outer_unknown }
}

/// Modelled size of the omitted terms on one side at radius `r` (`r > 1`
/// moves away from the circle on that side).
fn tail_error(tail: Tail, r: f64, modes: usize) -> f64 {
    match tail {
        Tail::Finite => 0.0,
        Tail::Unknown => f64::INFINITY,
        Tail::Geometric { a, b, last } => {
            let q = b.exp() * r;
            if q >= 1.0 {
                return f64::INFINITY;
            }
            let start = (last + 1).max(modes + 1).min(last + 1) as f64;
            (a + b * start).exp() * r.powf(start) / (1.0 - q)
        }
    }
}

/// JSON description of a loop or vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoopSpec {
    Coeffs {
        coeffs: Vec<(i64, f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        validated: Option<bool>,
    },
    Primitive {
        primitive: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    Gen {
        gen: i64,
    },
    GenI {
        gen_i: i64,
    },
}

impl LoopSpec {
    pub fn parse(text: &str) -> Result<Self, SeriesError> {
        serde_json::from_str(text).map_err(|e| SeriesError::Json(e.to_string()))
    }

    /// Expands shorthands into a loop. `gen` and `gen_i` describe the
    /// coefficient function `-z^(n+1)` of a generator and its `i` multiple.
    pub fn to_loop(&self, res: Resolution) -> Result<AnalyticLoop, SeriesError> {
        match self {
            LoopSpec::Coeffs { coeffs, .. } => {
                let terms: Vec<(i64, C64)> = coeffs.iter().map(|&(n, re, im)| (n, C64::new(re, im))).collect();
                AnalyticLoop::from_coeffs(&terms, res)
            }
            LoopSpec::Primitive { primitive, alpha, tau } => match primitive.as_str() {
                "rot" => {
                    let a = alpha.ok_or_else(|| SeriesError::Json("rot needs alpha".into()))?;
                    AnalyticLoop::from_coeffs(&[(1, C64::from_polar(1.0, a))], res)
                }
                "scale" => {
                    let t = tau.ok_or_else(|| SeriesError::Json("scale needs tau".into()))?;
                    AnalyticLoop::from_coeffs(&[(1, C64::new((-2.0 * PI * t).exp(), 0.0))], res)
                }
                "id" => Ok(AnalyticLoop::identity(res)),
                "inv" => Ok(AnalyticLoop::inversion(res)),
                other => Err(SeriesError::Json(format!("unknown primitive {other:?}"))),
            },
            LoopSpec::Gen { gen } => AnalyticLoop::from_coeffs(&[(gen + 1, C64::new(-1.0, 0.0))], res),
            LoopSpec::GenI { gen_i } => AnalyticLoop::from_coeffs(&[(gen_i + 1, C64::new(0.0, -1.0))], res),
        }
    }

    /// Coefficient record of a loop.
    pub fn from_loop(lp: &AnalyticLoop, validated: Option<bool>) -> Self {
        let coeffs = lp.terms().into_iter().map(|(n, c)| (n, c.re, c.im)).collect();
        LoopSpec::Coeffs { coeffs, validated }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_and_inversion_samples() {
        let res = Resolution::default();
        let id = AnalyticLoop::identity(res);
        let inv = AnalyticLoop::inversion(res);
        for (k, z) in grid(res.samples).into_iter().enumerate() {
            assert!((id.samples()[k] - z).norm() < 1e-14);
            assert!((inv.samples()[k] - z.inv()).norm() < 1e-14);
        }
        assert_eq!(id.radii().outer, f64::INFINITY);
        assert_eq!(inv.radii().inner, 0.0);
    }

    #[test]
    fn growing_polynomial_is_finite() {
        let lp = AnalyticLoop::from_coeffs(&[(-1, c(0.7, 0.0)), (1, c(0.2, 0.9)), (3, c(0.9, 0.3)), (4, c(0.9, 0.4))], Resolution::default()).unwrap();
        assert_eq!(lp.radii().certified(), (0.0, f64::INFINITY));
    }

    #[test]
    fn degree_bound() {
        let res = Resolution::new(8);
        assert!(matches!(
            AnalyticLoop::from_coeffs(&[(9, c(1.0, 0.0))], res),
            Err(SeriesError::DegreeBound { degree: 9, max: 8 })
        ));
    }

    #[test]
    fn evaluate_polynomial() {
        let lp = AnalyticLoop::from_coeffs(&[(1, c(1.0, 0.0)), (2, c(0.2, 0.0))], Resolution::default()).unwrap();
        let e = lp.evaluate(c(0.0, 1.0)).unwrap();
        assert!((e.value - c(-0.2, 1.0)).norm() < 1e-15);
        assert!(e.error < 1e-14);
        assert_eq!(lp.evaluate(c(0.5, 0.0)).unwrap().value, c(0.5, 0.0) + c(0.05, 0.0));
    }

    #[test]
    fn boundary_value_of_sampled_rational() {
        let res = Resolution::default();
        let lp = AnalyticLoop::from_fn(res, |z| (c(2.0, 0.0) - z).inv()).unwrap();
        let e = lp.evaluate(c(1.0, 0.0)).unwrap();
        assert!((e.value - c(1.0, 0.0)).norm() < 1e-14);
        let radii = lp.radii();
        assert!((radii.outer - 2.0).abs() < 0.1, "{radii:?}");
        assert_eq!(radii.inner, 0.0);
        assert!(matches!(lp.evaluate(c(1.95, 0.0)), Err(SeriesError::NotCertified { .. })));
    }

    #[test]
    fn derivative_examples() {
        let res = Resolution::default();
        let d = AnalyticLoop::identity(res).derivative();
        assert_eq!(d.terms(), vec![(0, c(1.0, 0.0))]);
        let d = AnalyticLoop::monomial(2, c(1.0, 0.0), res).derivative();
        assert_eq!(d.terms(), vec![(1, c(2.0, 0.0))]);
        let d = AnalyticLoop::inversion(res).derivative();
        assert_eq!(d.terms(), vec![(-2, c(-1.0, 0.0))]);
    }

    #[test]
    fn winding_examples() {
        let res = Resolution::default();
        assert_eq!(AnalyticLoop::identity(res).winding_number(c(0.0, 0.0)), Ok(1));
        let shifted = AnalyticLoop::from_coeffs(&[(0, c(2.0, 0.0)), (1, c(0.5, 0.0))], res).unwrap();
        assert_eq!(shifted.winding_number(c(0.0, 0.0)), Ok(0));
        let lp = AnalyticLoop::from_coeffs(&[(1, c(1.0, 0.0)), (2, c(0.2, 0.0))], res).unwrap();
        assert_eq!(lp.winding_number(c(0.0, 0.0)), Ok(1));
        assert!(matches!(
            AnalyticLoop::identity(res).winding_number(c(1.0, 0.0)),
            Err(SeriesError::PassesThrough { .. })
        ));
    }

    #[test]
    fn product_matches_pointwise() {
        let res = Resolution::new(16);
        let a = AnalyticLoop::from_coeffs(&[(-2, c(0.3, 0.1)), (1, c(1.0, 0.0)), (3, c(0.0, 0.2))], res).unwrap();
        let b = AnalyticLoop::from_coeffs(&[(-1, c(0.5, 0.0)), (2, c(0.1, -0.4))], res).unwrap();
        let p = a.mul(&b);
        for (k, z) in grid(res.samples).into_iter().enumerate() {
            assert!((p.samples()[k] - a.value_at(z) * b.value_at(z)).norm() < 1e-14);
        }
        assert_eq!(p.dropped_tail(), 0.0);
        let wide = AnalyticLoop::monomial(16, c(1.0, 0.0), res).mul(&AnalyticLoop::monomial(1, c(1.0, 0.0), res));
        assert!(!wide.is_resolved());
    }

    #[test]
    fn value_and_derivative_agree_with_derivative_loop() {
        let res = Resolution::new(16);
        let a = AnalyticLoop::from_coeffs(&[(-3, c(0.3, 0.1)), (0, c(0.7, 0.0)), (4, c(0.0, 0.2))], res).unwrap();
        let da = a.derivative();
        let z = c(0.8, 0.5);
        let (f, df) = a.value_and_derivative(z);
        assert!((f - a.value_at(z)).norm() < 1e-14);
        assert!((df - da.value_at(z)).norm() < 1e-13);
    }

    #[test]
    fn json_shorthands() {
        let res = Resolution::default();
        let rot = LoopSpec::parse(r#"{"primitive":"rot","alpha":1.5}"#).unwrap().to_loop(res).unwrap();
        assert!((rot.coeff(1) - C64::from_polar(1.0, 1.5)).norm() < 1e-16);
        let sc = LoopSpec::parse(r#"{"primitive":"scale","tau":0.1}"#).unwrap().to_loop(res).unwrap();
        assert!((sc.coeff(1).re - (-0.2 * PI).exp()).abs() < 1e-16);
        let g = LoopSpec::parse(r#"{"gen": -1}"#).unwrap().to_loop(res).unwrap();
        assert_eq!(g.terms(), vec![(0, c(-1.0, 0.0))]);
        let gi = LoopSpec::parse(r#"{"gen_i": 2}"#).unwrap().to_loop(res).unwrap();
        assert_eq!(gi.terms(), vec![(3, c(0.0, -1.0))]);
        let lp = LoopSpec::parse(r#"{"coeffs": [[1, 1.0, 0.0], [2, 0.2, 0.0]]}"#).unwrap().to_loop(res).unwrap();
        let text = serde_json::to_string(&LoopSpec::from_loop(&lp, Some(true))).unwrap();
        assert_eq!(text, r#"{"coeffs":[[1,1.0,0.0],[2,0.2,0.0]],"validated":true}"#);
    }
}
