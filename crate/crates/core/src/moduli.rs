//! Genus-0 surfaces with parametrized boundaries: dressed disks and annuli,
//! boundary and interior deformation actions, sewing, cutting, and the
//! conformal modulus.
//!
//! An annulus record `(tau, phi, psi)` is the planar region between the
//! outer curve `1/phi(S^1)` (boundary 1, parametrized by `z -> 1/phi(z)`)
//! and the inner curve `e^{-2 pi tau} psi(S^1)` (boundary 2). Records are
//! representatives; [`BSurface::normal_form`] maps the region onto a round
//! annulus and is what comparisons use.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{self, ConformalError};
use crate::deformation::{polyline_winding, Deformation, DeformationError};
use crate::series::{grid, AnalyticLoop, Resolution, SeriesError, C64};
use crate::witt::{self, VectorField, WittError};

/// Koebe stopping rule for normal forms.
pub const NORMAL_FORM_TOL: f64 = 1e-12;
/// Highest dressing degree compared by [`distance`].
pub const COMPARE_DEGREE: i64 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuliError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Witt(#[from] WittError),
    #[error("modulus must be positive, got {0}")]
    Modulus(f64),
    #[error("boundary curves intersect or are nested the wrong way")]
    Degenerate,
    #[error("cutting radius {r} outside ({lo}, {hi})")]
    CutRange { r: f64, lo: f64, hi: f64 },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("continuation across the seam failed at {0}")]
    Seam(C64),
}

pub type Result<T, E = ModuliError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Disk,
    Annulus,
}

#[derive(Clone, Debug)]
pub struct BSurface {
    pub kind: Kind,
    pub tau: f64,
    pub phi: Deformation,
    pub psi: Deformation,
    /// Marked interior point of a disk (the zero of its cap).
    pub center: C64,
}

/// `z -> 1/f(1/z)` on loops.
pub fn conjugate_by_inversion(f: &AnalyticLoop) -> Result<AnalyticLoop> {
    let res = f.resolution();
    let m = 2 * res.samples;
    let vals = f.samples_on(m);
    let out: Vec<C64> = (0..m).map(|k| vals[(m - k) % m].inv()).collect();
    Ok(AnalyticLoop::from_samples(&out, res)?)
}

/// `iota o phi o iota` as a deformation.
pub fn conjugate_deformation(phi: &Deformation) -> Result<Deformation> {
    Ok(Deformation::new(conjugate_by_inversion(phi.as_loop())?)?)
}

fn scale_factor(tau: f64) -> C64 {
    C64::new((-2.0 * PI * tau).exp(), 0.0)
}

impl BSurface {
    /// `e^{-2 pi tau} <= |z| <= 1` with boundary parametrizations `1/z` and
    /// `e^{-2 pi tau} z`.
    pub fn standard_annulus(tau: f64, res: Resolution) -> Result<Self> {
        if tau <= 0.0 || !tau.is_finite() {
            return Err(ModuliError::Modulus(tau));
        }
        let id = Deformation::identity(res);
        Ok(BSurface { kind: Kind::Annulus, tau, phi: id.clone(), psi: id, center: C64::new(0.0, 0.0) })
    }

    /// Closed unit disk with boundary parametrization `1/z`.
    pub fn cap_disk(res: Resolution) -> Self {
        let id = Deformation::identity(res);
        BSurface { kind: Kind::Disk, tau: 0.0, phi: id.clone(), psi: id, center: C64::new(0.0, 0.0) }
    }

    pub fn resolution(&self) -> Resolution {
        self.phi.resolution()
    }

    pub fn inner_radius(&self) -> f64 {
        (-2.0 * PI * self.tau).exp()
    }

    /// Boundary 1 as a positively oriented loop about 0.
    pub fn outer_loop(&self) -> Result<AnalyticLoop> {
        conjugate_by_inversion(self.phi.as_loop())
    }

    /// Boundary 2 as a positively oriented loop about 0.
    pub fn inner_loop(&self) -> AnalyticLoop {
        self.psi.as_loop().scale_by(scale_factor(self.tau))
    }

    /// Parametrization of boundary `j` evaluated at `z`.
    pub fn boundary_point(&self, j: usize, z: C64) -> C64 {
        match j {
            1 => self.phi.value_at(z).inv(),
            _ => self.psi.value_at(z) * scale_factor(self.tau),
        }
    }

    fn check_nondegenerate(&self) -> Result<()> {
        if self.kind == Kind::Disk {
            let outer = self.outer_loop()?.samples_on(2 * self.resolution().samples);
            return if polyline_winding(&outer, self.center) == 1 { Ok(()) } else { Err(ModuliError::Degenerate) };
        }
        let m = 2 * self.resolution().samples;
        let outer = self.outer_loop()?.samples_on(m);
        let inner = self.inner_loop().samples_on(m);
        let inside = inner.iter().all(|&p| polyline_winding(&outer, p) == 1);
        let outside = outer.iter().all(|&p| polyline_winding(&inner, p) == 0);
        if inside && outside && polyline_winding(&inner, C64::new(0.0, 0.0)) == 1 {
            Ok(())
        } else {
            Err(ModuliError::Degenerate)
        }
    }

    /// `Sigma <|_j phi`: boundary `j` reparametrized by the continuation of
    /// its parametrization composed with `phi`.
    pub fn act_boundary(&self, j: usize, phi: &Deformation) -> Result<Self> {
        let mut out = self.clone();
        match (self.kind, j) {
            (_, 1) => out.phi = self.phi.compose(phi)?,
            (Kind::Annulus, 2) => out.psi = self.psi.compose(phi)?,
            _ => return Err(ModuliError::Unsupported(format!("boundary {j} of a {:?}", self.kind))),
        }
        out.check_nondegenerate()?;
        Ok(out)
    }

    /// Round annulus (or disk) representative: boundary 1 on the unit
    /// circle with `phi(1) > 0`, boundary 2 on `|z| = e^{-2 pi tau}`.
    pub fn normal_form(&self) -> Result<Self> {
        let res = self.resolution();
        match self.kind {
            Kind::Annulus => {
                let a = conformal::annulus_uniformize_with(&self.outer_loop()?, &self.inner_loop(), NORMAL_FORM_TOL)?;
                let spin = C64::from_polar(1.0, -a.outer.value_at(C64::new(1.0, 0.0)).arg());
                let phi = Deformation::new(conjugate_by_inversion(&a.outer.scale_by(spin))?)?;
                let psi = Deformation::new(a.inner.scale_by(spin / scale_factor(a.tau)))?;
                Ok(BSurface { kind: Kind::Annulus, tau: a.tau, phi, psi, center: C64::new(0.0, 0.0) })
            }
            Kind::Disk => {
                let shifted = self.outer_loop()?.sub(&AnalyticLoop::constant(self.center, res));
                let d = conformal::decompose(&Deformation::new(shifted)?)?;
                let h = d.h.as_loop();
                let spin = C64::from_polar(1.0, -h.value_at(C64::new(1.0, 0.0)).arg());
                let phi = Deformation::new(conjugate_by_inversion(&h.scale_by(spin))?)?;
                Ok(BSurface { kind: Kind::Disk, tau: 0.0, phi, psi: Deformation::identity(res), center: C64::new(0.0, 0.0) })
            }
        }
    }

    pub fn modulus(&self) -> Result<f64> {
        if self.kind != Kind::Annulus {
            return Err(ModuliError::Unsupported("modulus of a disk".into()));
        }
        Ok(self.normal_form()?.tau)
    }

    /// Cuts along `|z| = r` into the outer piece (inner boundary `r z`) and
    /// the inner piece rescaled by `1/r` (outer boundary `1/z`).
    pub fn unravel(&self, r: f64) -> Result<(BSurface, BSurface)> {
        if self.kind != Kind::Annulus {
            return Err(ModuliError::Unsupported("unravel of a disk".into()));
        }
        let m = 2 * self.resolution().samples;
        let hi = self.outer_loop()?.samples_on(m).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let lo = self.inner_loop().samples_on(m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(r > lo && r < hi) {
            return Err(ModuliError::CutRange { r, lo, hi });
        }
        let sigma = -r.ln() / (2.0 * PI);
        let res = self.resolution();
        let outer = BSurface { kind: Kind::Annulus, tau: sigma, phi: self.phi.clone(), psi: Deformation::identity(res), center: C64::new(0.0, 0.0) };
        let inner = BSurface { kind: Kind::Annulus, tau: self.tau - sigma, phi: Deformation::identity(res), psi: self.psi.clone(), center: C64::new(0.0, 0.0) };
        Ok((outer, inner))
    }

    /// `Sigma <|_theta phi` for the loop `theta(z) = r z`: cut, act on the
    /// piece whose boundary is parametrized by `theta`, sew back.
    pub fn act_interior(&self, r: f64, phi: &Deformation) -> Result<Self> {
        let (outer, inner) = self.unravel(r)?;
        sew(&outer.act_boundary(2, phi)?, 2, &inner, 1)
    }

    /// The same interior action realized on the other side of the loop with
    /// `iota o phi^{-1} o iota`.
    pub fn act_interior_mirrored(&self, r: f64, phi: &Deformation) -> Result<Self> {
        let (outer, inner) = self.unravel(r)?;
        let mirrored = conjugate_deformation(&phi.invert()?)?;
        sew(&outer, 2, &inner.act_boundary(1, &mirrored)?, 1)
    }
}

/// Glues boundary `j` of `a` to boundary `k` of `b` via `xi_k o iota o
/// zeta_j^{-1}`. Supported: inner boundary of an annulus to the outer
/// boundary of an annulus or disk (either argument order).
pub fn sew(a: &BSurface, j: usize, b: &BSurface, k: usize) -> Result<BSurface> {
    match (a.kind, j, b.kind, k) {
        (Kind::Annulus, 2, Kind::Annulus, 1) => sew_annuli(a, b),
        (Kind::Annulus, 1, Kind::Annulus, 2) => sew_annuli(b, a),
        (Kind::Annulus, 2, Kind::Disk, 1) => cap(a, b),
        (Kind::Disk, 1, Kind::Annulus, 2) => cap(b, a),
        _ => Err(ModuliError::Unsupported(format!("sew {:?}:{j} with {:?}:{k}", a.kind, b.kind))),
    }
}

/// Newton inverse of a deformation's continuation at a far point.
fn continued_inverse(phi: &Deformation, y: C64, seed: C64) -> Result<C64> {
    let x = phi.solve(y, seed).ok_or(ModuliError::Seam(y))?;
    if !phi.as_loop().radii().contains(x) {
        return Err(ModuliError::Seam(y));
    }
    Ok(x)
}

fn continued_value(phi: &Deformation, x: C64) -> Result<C64> {
    if !phi.as_loop().radii().contains(x) {
        return Err(ModuliError::Seam(x));
    }
    Ok(phi.value_at(x))
}

/// Map of the outer surface's plane that carries `b` into the hole of `a`:
/// `G = e^{-2 pi tau_a} psi_a o iota o phi_b^{-1} o iota`.
fn seam_map(a: &BSurface, b: &BSurface, w: C64, seed: C64) -> Result<(C64, C64)> {
    let y = w.inv();
    let x = continued_inverse(&b.phi, y, seed)?;
    let p = continued_value(&a.psi, x.inv())?;
    Ok((p * scale_factor(a.tau), x))
}

fn sew_annuli(a: &BSurface, b: &BSurface) -> Result<BSurface> {
    let res = a.resolution();
    let m = 2 * res.samples;
    let zs = grid(m);
    let mut vals = Vec::with_capacity(m);
    let mut seed: Option<C64> = None;
    for &z in &zs {
        let w = b.boundary_point(2, z);
        let guess = seed.unwrap_or(w.inv());
        let (p, x) = match seam_map(a, b, w, guess) {
            Ok(v) => v,
            Err(_) => seam_map(a, b, w, w.inv())?,
        };
        seed = Some(x);
        vals.push(p);
    }
    let tau = a.tau + b.tau;
    let inner = AnalyticLoop::from_samples(&vals, res)?.scale_by(scale_factor(tau).inv());
    let out = BSurface { kind: Kind::Annulus, tau, phi: a.phi.clone(), psi: Deformation::new(inner)?, center: C64::new(0.0, 0.0) };
    out.check_nondegenerate()?;
    Ok(out)
}

fn cap(a: &BSurface, d: &BSurface) -> Result<BSurface> {
    let res = a.resolution();
    // move the disk's dressing across the seam first
    let a = if d.phi.distance(&Deformation::identity(res)) > 0.0 {
        a.act_boundary(2, &conjugate_deformation(&d.phi.invert()?)?)?
    } else {
        a.clone()
    };
    let psi = a.psi.as_loop();
    if psi.support().0 < 0 {
        return Err(ModuliError::Seam(C64::new(0.0, 0.0)));
    }
    let center = (psi.value_at(C64::new(0.0, 0.0)) + d.center) * scale_factor(a.tau);
    let out = BSurface { kind: Kind::Disk, tau: 0.0, phi: a.phi.clone(), psi: Deformation::identity(res), center };
    out.check_nondegenerate()?;
    Ok(out)
}

/// Normal-form coordinates: `tau` followed by the dressing coefficients of
/// degree `-8..=8` of `phi` and `psi`.
pub fn normal_form_data(s: &BSurface) -> Result<Vec<C64>> {
    let nf = s.normal_form()?;
    let mut out = vec![C64::new(nf.tau, 0.0)];
    for d in [&nf.phi, &nf.psi] {
        out.extend((-COMPARE_DEGREE..=COMPARE_DEGREE).map(|k| d.coeff(k)));
    }
    Ok(out)
}

/// `|d tau|` plus the largest low-degree dressing coefficient difference of
/// the normal forms.
pub fn distance(a: &BSurface, b: &BSurface) -> Result<f64> {
    if a.kind != b.kind {
        return Ok(f64::INFINITY);
    }
    let (x, y) = (normal_form_data(a)?, normal_form_data(b)?);
    let dtau = (x[0] - y[0]).norm();
    let rest = x[1..].iter().zip(&y[1..]).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    Ok(dtau + rest)
}

/// Central difference of normal-form data along a curve of surfaces, with
/// one Richardson step.
pub fn tangent(curve: impl Fn(f64) -> Result<BSurface>, h: f64) -> Result<Vec<C64>> {
    let diff = |h: f64| -> Result<Vec<C64>> {
        let (p, m) = (normal_form_data(&curve(h)?)?, normal_form_data(&curve(-h)?)?);
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    };
    let (a, b) = (diff(h)?, diff(h / 2.0)?);
    Ok(a.iter().zip(&b).map(|(a, b)| (b * 4.0 - a) / 3.0).collect())
}

fn sup(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Pullbacks of `v` through both boundary parametrizations of the standard
/// annulus: `(iota^* v, scaling(tau)^* v)`.
pub fn boundary_pullbacks(tau: f64, v: &VectorField) -> Result<(VectorField, VectorField)> {
    let res = v.resolution();
    let outer = v.pullback(&AnalyticLoop::inversion(res))?;
    let inner = v.pullback(Deformation::scaling(tau, res).as_loop())?;
    Ok((outer, inner))
}

/// Tangent of `t -> A_tau <|_1 Phi_{iota^* v}(t) <|_2 Phi_{sc^* v}(t)`.
pub fn virasoro_kernel_tangent(tau: f64, v: &VectorField, h: f64) -> Result<Vec<C64>> {
    let res = v.resolution();
    let (v1, v2) = boundary_pullbacks(tau, v)?;
    let base = BSurface::standard_annulus(tau, res)?;
    tangent(|t| base.act_boundary(1, &witt::flow(&v1, t)?)?.act_boundary(2, &witt::flow(&v2, t)?), h)
}

/// Size of [`virasoro_kernel_tangent`]; vanishes for fields holomorphic on
/// the annulus.
pub fn virasoro_kernel_residual(tau: f64, v: &VectorField, h: f64) -> Result<f64> {
    Ok(sup(&virasoro_kernel_tangent(tau, v, h)?))
}

/// `d modulus / dt` along `t -> A_tau <|_j Phi_v(t)`.
pub fn single_boundary_rate(tau: f64, j: usize, v: &VectorField, h: f64) -> Result<f64> {
    let base = BSurface::standard_annulus(tau, v.resolution())?;
    Ok(tangent(|t| base.act_boundary(j, &witt::flow(v, t)?), h)?[0].re)
}

/// `(inward, outward)` parts of the push-forward `r v(w/r)` of `v` along
/// `theta(z) = r z`: nonnegative and negative Laurent degrees.
pub fn laurent_split(v: &VectorField, r: f64) -> Result<(VectorField, VectorField)> {
    let res = v.resolution();
    let pushed: Vec<(i64, C64)> = v.as_loop().terms().into_iter().map(|(k, c)| (k, c * r.powi(1 - k as i32))).collect();
    let inward: Vec<(i64, C64)> = pushed.iter().copied().filter(|&(k, _)| k >= 0).collect();
    let outward: Vec<(i64, C64)> = pushed.iter().copied().filter(|&(k, _)| k < 0).collect();
    Ok((
        VectorField::new(AnalyticLoop::from_coeffs(&inward, res)?),
        VectorField::new(AnalyticLoop::from_coeffs(&outward, res)?),
    ))
}

/// Difference between the tangent of the interior action along `|z| = r`
/// and the boundary-only tangent with `-iota^*(outward)` on boundary 1 and
/// `scaling(tau)^*(inward)` on boundary 2.
pub fn interior_equals_boundary_residual(tau: f64, r: f64, v: &VectorField, h: f64) -> Result<f64> {
    let res = v.resolution();
    let base = BSurface::standard_annulus(tau, res)?;
    let lhs = tangent(|t| base.act_interior(r, &witt::flow(v, t)?), h)?;
    let (inward, outward) = laurent_split(v, r)?;
    let b1 = outward.pullback(&AnalyticLoop::inversion(res))?.scale(C64::new(-1.0, 0.0));
    let b2 = inward.pullback(Deformation::scaling(tau, res).as_loop())?;
    let rhs = tangent(|t| base.act_boundary(1, &witt::flow(&b1, t)?)?.act_boundary(2, &witt::flow(&b2, t)?), h)?;
    Ok(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res() -> Resolution {
        Resolution::default()
    }

    #[test]
    fn standard_records() {
        let a = BSurface::standard_annulus(0.25, res()).unwrap();
        assert!((a.inner_radius() - (-PI / 2.0).exp()).abs() < 1e-15);
        assert!((a.modulus().unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(BSurface::cap_disk(res()).boundary_point(1, C64::new(1.0, 0.0)), C64::new(1.0, 0.0));
        assert!(BSurface::standard_annulus(0.0, res()).is_err());
    }

    #[test]
    fn sewing_standard_annuli_adds_moduli() {
        let a = BSurface::standard_annulus(0.1, res()).unwrap();
        let b = BSurface::standard_annulus(0.25, res()).unwrap();
        assert!((sew(&a, 2, &b, 1).unwrap().modulus().unwrap() - 0.35).abs() < 1e-12);
        let disk = sew(&a, 2, &BSurface::cap_disk(res()), 1).unwrap();
        assert!(distance(&disk, &BSurface::cap_disk(res())).unwrap() < 1e-12);
    }

    #[test]
    fn boundary_scaling_adds_to_modulus() {
        let a = BSurface::standard_annulus(0.2, res()).unwrap();
        let s = a.act_boundary(2, &Deformation::scaling(0.05, res())).unwrap();
        assert!((s.modulus().unwrap() - 0.25).abs() < 1e-12);
        let s = a.act_boundary(1, &Deformation::rotation(0.7, res())).unwrap();
        assert!((s.modulus().unwrap() - 0.2).abs() < 1e-12);
        let s = a.act_interior(0.9, &Deformation::scaling(0.05, res())).unwrap();
        assert!((s.modulus().unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unravel_standard() {
        let a = BSurface::standard_annulus(0.3, res()).unwrap();
        let (o, i) = a.unravel((-2.0 * PI * 0.1).exp()).unwrap();
        assert!((o.tau - 0.1).abs() < 1e-14 && (i.tau - 0.2).abs() < 1e-14);
        assert!(a.unravel(0.1).is_err());
        let back = sew(&o, 2, &i, 1).unwrap();
        assert!(distance(&back, &a).unwrap() < 1e-12);
    }

    #[test]
    fn dressed_annulus_modulus_is_between_round_bounds() {
        let a = BSurface::standard_annulus(0.25, res()).unwrap();
        let q = Deformation::new(AnalyticLoop::from_coeffs(&[(1, C64::new(1.0, 0.0)), (2, C64::new(0.05, 0.0))], res()).unwrap()).unwrap();
        let s = a.act_boundary(2, &q).unwrap();
        let tau = s.modulus().unwrap();
        assert!(tau > 0.2 && tau < 0.3, "{tau}");
    }

    #[test]
    fn virasoro_kernel_and_control() {
        for n in -2..=2 {
            let v = VectorField::generator(n, res()).unwrap();
            let r = virasoro_kernel_residual(0.25, &v, 1e-3).unwrap();
            eprintln!("kernel n={n}: {r:e}");
            assert!(r < 1e-6, "n={n}: {r}");
        }
        let rate = single_boundary_rate(0.25, 2, &VectorField::generator(0, res()).unwrap(), 1e-3).unwrap();
        eprintln!("rate {rate}");
        assert!((rate - 1.0 / (2.0 * PI)).abs() < 1e-6);
    }

    #[test]
    fn interior_matches_boundary() {
        let r = (-PI * 0.25).exp();
        for n in [0, 2, -1] {
            let v = VectorField::generator(n, res()).unwrap();
            let d = interior_equals_boundary_residual(0.25, r, &v, 1e-3).unwrap();
            let base = BSurface::standard_annulus(0.25, res()).unwrap();
            let lhs = tangent(|t| base.act_interior(r, &witt::flow(&v, t)?), 1e-3).unwrap();
            eprintln!("interior n={n}: {d:e} tangent {:e}", sup(&lhs));
            assert!(sup(&lhs) > 1e-2);
            assert!(d < 1e-6, "n={n}: {d}");
        }
    }

    #[test]
    fn mirrored_interior_action() {
        let a = BSurface::standard_annulus(0.25, res()).unwrap();
        let phi = witt::flow(&VectorField::generator(2, res()).unwrap(), 0.05).unwrap();
        let r = (-PI * 0.25).exp();
        let x = a.act_interior(r, &phi).unwrap();
        let y = a.act_interior_mirrored(r, &phi).unwrap();
        let d = distance(&x, &y).unwrap();
        eprintln!("mirror {d:e}");
        assert!(d < 1e-8);
    }

    #[test]
    fn dressing_moves_across_seam() {
        let a = BSurface::standard_annulus(0.1, res()).unwrap();
        let b = BSurface::standard_annulus(0.2, res()).unwrap();
        let q = Deformation::new(AnalyticLoop::from_coeffs(&[(1, C64::new(1.0, 0.0)), (2, C64::new(0.05, 0.02))], res()).unwrap()).unwrap();
        let direct = sew(&a.act_boundary(2, &q).unwrap(), 2, &b, 1).unwrap();
        let moved = sew(&a, 2, &b.act_boundary(1, &conjugate_deformation(&q.invert().unwrap()).unwrap()).unwrap(), 1).unwrap();
        let d = distance(&direct, &moved).unwrap();
        eprintln!("move {d:e}");
        assert!(d < 1e-8);
    }
}
