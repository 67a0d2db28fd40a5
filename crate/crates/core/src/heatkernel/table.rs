//! Radial kernel tables, heat-kernel proposal sampling and integration over M
//! in geodesic polar coordinates.
//!
//! Tables store ln K(t, r) on a uniform r grid and interpolate with 4-point
//! Lagrange stencils; since ln K = −r²/4t + (smooth), the cubic stencil
//! reproduces the Gaussian part exactly. Samplers draw r from the piecewise
//! constant (per bin) radial law built from the table and report the exact
//! density of what they sample, so importance weights are unbiased.

use super::HeatKernel;
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, Kind, ManifoldModel};
use crate::mc::{uniform_direction, Rng};
use crate::quad::{gauss_kronrod, gauss_kronrod_pts, Quad, QuadOpts};
use rand::Rng as _;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

/// Interpolation table of ln K(t, r) for fixed t.
#[derive(Debug, Clone)]
pub struct RadialTable {
    hk: HeatKernel,
    pub t: f64,
    pub r_max: f64,
    h: f64,
    ln_k: Vec<f64>,
}

impl RadialTable {
    /// Radius beyond which the kernel's radial mass is negligible (e^{−60}).
    pub fn default_rmax(hk: &HeatKernel, t: f64) -> f64 {
        let m = &hk.model;
        match m.kind {
            Kind::Sphere => m.diameter(),
            Kind::Flat => 16.0 * t.sqrt(),
            Kind::Hyperbolic => 2.0 * (m.dim - 1) as f64 * m.curvature * t + 16.0 * t.sqrt(),
        }
    }

    /// Build a table with `n` intervals on `[0, r_max]`.
    pub fn new(hk: &HeatKernel, t: f64, r_max: f64, n: usize) -> Result<Self> {
        if n < 4 || !(r_max > 0.0) {
            return Err(Error::Parameter("table needs ≥ 4 intervals and r_max > 0".into()));
        }
        let r_max = if hk.model.kind == Kind::Sphere { r_max.min(hk.model.diameter()) } else { r_max };
        let h = r_max / n as f64;
        let ln_k: Result<Vec<f64>> = (0..=n).into_par_iter().map(|i| hk.ln_radial(t, i as f64 * h)).collect();
        Ok(RadialTable { hk: *hk, t, r_max, h, ln_k: ln_k? })
    }

    /// Table of an arbitrary log-radial profile `ln_f(r)` (used for cheap proposals).
    pub fn from_ln_fn<F: Fn(f64) -> f64>(hk: &HeatKernel, t: f64, r_max: f64, n: usize, ln_f: F) -> Result<Self> {
        if n < 4 || !(r_max > 0.0) {
            return Err(Error::Parameter("table needs ≥ 4 intervals and r_max > 0".into()));
        }
        let r_max = if hk.model.kind == Kind::Sphere { r_max.min(hk.model.diameter()) } else { r_max };
        let h = r_max / n as f64;
        let ln_k = (0..=n).map(|i| ln_f(i as f64 * h)).collect();
        Ok(RadialTable { hk: *hk, t, r_max, h, ln_k })
    }

    /// Table with the default radius and resolution.
    pub fn standard(hk: &HeatKernel, t: f64) -> Result<Self> {
        Self::new(hk, t, Self::default_rmax(hk, t), 2048)
    }

    fn node(&self, j: i64) -> f64 {
        let n = (self.ln_k.len() - 1) as i64;
        if j < 0 {
            self.ln_k[(-j) as usize]
        } else if j > n {
            // Only reached on the sphere, where ln K is even about the antipode.
            self.ln_k[(2 * n - j).max(0) as usize]
        } else {
            self.ln_k[j as usize]
        }
    }

    /// Interpolated ln K(t, r).
    pub fn ln_eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.r_max * (1.0 + 1e-12) {
            return self.hk.ln_radial(self.t, r).unwrap_or(f64::NEG_INFINITY);
        }
        let n = (self.ln_k.len() - 1) as i64;
        let x = r / self.h;
        let mut i = (x.floor() as i64).min(n - 1);
        if self.hk.model.kind != Kind::Sphere && i + 2 > n {
            i = n - 2;
        }
        let u = x - i as f64;
        let (f0, f1, f2, f3) = (self.node(i - 1), self.node(i), self.node(i + 1), self.node(i + 2));
        if !(f0.is_finite() && f1.is_finite() && f2.is_finite() && f3.is_finite()) {
            // Underflowed nodes (ln K = −∞): the cubic would mix ±∞ into NaN.
            return if f1.is_finite() && f2.is_finite() { f1 + u * (f2 - f1) } else { f64::NEG_INFINITY };
        }
        // Lagrange weights for nodes −1, 0, 1, 2.
        let w0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let w1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let w2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let w3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        w0 * f0 + w1 * f1 + w2 * f2 + w3 * f3
    }

    /// Interpolated K(t, r).
    pub fn eval(&self, r: f64) -> f64 {
        self.ln_eval(r).exp()
    }

    /// Like [`ln_eval`](Self::ln_eval), but beyond `r_max` continues with the
    /// Gaussian tail instead of evaluating the kernel. At `r_max` the kernel is
    /// already e^{−60} below its radial mass, so the extrapolation only affects
    /// negligible contributions while keeping Monte-Carlo loops cheap.
    pub fn ln_eval_tail(&self, r: f64) -> f64 {
        let r = r.abs();
        if r <= self.r_max {
            return self.ln_eval(r);
        }
        let last = *self.ln_k.last().expect("non-empty table");
        last - (r * r - self.r_max * self.r_max) / (4.0 * self.t)
    }

    /// exp of [`ln_eval_tail`](Self::ln_eval_tail).
    pub fn eval_tail(&self, r: f64) -> f64 {
        self.ln_eval_tail(r).exp()
    }
}

/// Leading-order parametrix ln[(4πt)^{−n/2} e^{−r²/4t} (r/sn r)^{(n−1)/2}];
/// on the sphere the Jacobian correction is dropped (it is singular at the antipode).
pub fn ln_parametrix(model: &ManifoldModel, t: f64, r: f64) -> f64 {
    let n = model.dim as f64;
    let base = -0.5 * n * (4.0 * PI * t).ln() - r * r / (4.0 * t);
    match model.kind {
        Kind::Hyperbolic if r > 1e-8 => base + 0.5 * (n - 1.0) * (r / model.sn(r)).ln(),
        _ => base,
    }
}

/// Thread-safe cache of kernel tables keyed by the time argument.
#[derive(Debug)]
pub struct TableCache {
    hk: HeatKernel,
    n: usize,
    map: Mutex<BTreeMap<u64, Arc<RadialTable>>>,
}

impl TableCache {
    /// Empty cache producing tables with `n` intervals on the default radius.
    pub fn new(hk: &HeatKernel, n: usize) -> Self {
        TableCache { hk: *hk, n, map: Mutex::new(BTreeMap::new()) }
    }

    /// The evaluator behind the cache.
    pub fn kernel(&self) -> &HeatKernel {
        &self.hk
    }

    /// Table for K(t, ·), built on first use.
    pub fn get(&self, t: f64) -> Result<Arc<RadialTable>> {
        let key = t.to_bits();
        if let Some(tab) = self.map.lock().expect("table cache lock").get(&key) {
            return Ok(tab.clone());
        }
        let tab = Arc::new(RadialTable::new(&self.hk, t, RadialTable::default_rmax(&self.hk, t), self.n)?);
        self.map.lock().expect("table cache lock").insert(key, tab.clone());
        Ok(tab)
    }

    /// Number of cached tables.
    pub fn len(&self) -> usize {
        self.map.lock().expect("table cache lock").len()
    }

    /// Whether the cache is empty.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sampler of points z with density ≈ K(t, center, z), exact density reported.
#[derive(Debug, Clone)]
pub struct RadialSampler {
    model: ManifoldModel,
    h: f64,
    cdf: Vec<f64>,
    mass: Vec<f64>,
    pub table: RadialTable,
}

impl RadialSampler {
    /// Build from a table (bins = table intervals).
    pub fn from_table(table: RadialTable) -> Self {
        let model = table.hk.model;
        let n = table.ln_k.len() - 1;
        let h = table.h;
        let area = ManifoldModel::unit_sphere_area(model.dim);
        let p = |r: f64| area * table.eval(r) * model.radial_density(r);
        let mass: Vec<f64> = (0..n)
            .map(|i| {
                let a = i as f64 * h;
                h / 6.0 * (p(a) + 4.0 * p(a + 0.5 * h) + p(a + h))
            })
            .collect();
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for m in &mass {
            acc += m;
            cdf.push(acc);
        }
        RadialSampler { model, h, cdf, mass, table }
    }

    /// Standard sampler for K(t, ·).
    pub fn new(hk: &HeatKernel, t: f64) -> Result<Self> {
        Ok(Self::from_table(RadialTable::standard(hk, t)?))
    }

    /// Cheap sampler following the closed-form parametrix of K(t, ·); its
    /// reported density is exact for what it samples, so it is a valid
    /// importance proposal on every model.
    pub fn parametrix(hk: &HeatKernel, t: f64) -> Result<Self> {
        let m = hk.model;
        let r_max = RadialTable::default_rmax(hk, t);
        Ok(Self::from_table(RadialTable::from_ln_fn(hk, t, r_max, 1024, |r| ln_parametrix(&m, t, r))?))
    }

    /// Total radial mass (≈ 1 by stochastic completeness).
    pub fn total(&self) -> f64 {
        *self.cdf.last().expect("non-empty cdf")
    }

    /// Draw a geodesic radius.
    pub fn sample_radius(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.gen::<f64>() * self.total();
        let i = match self.cdf.binary_search_by(|c| c.total_cmp(&u)) {
            Ok(i) => i.min(self.mass.len() - 1),
            Err(i) => (i - 1).min(self.mass.len() - 1),
        };
        let v: f64 = rng.gen();
        (i as f64 + v) * self.h
    }

    /// Draw a point around `center`; returns the point and its distance from the centre.
    pub fn sample(&self, rng: &mut Rng, center: &ChartPoint) -> (ChartPoint, f64) {
        let r = self.sample_radius(rng);
        let w = uniform_direction(rng, self.model.dim);
        (self.model.point_at(center, r, &w[..self.model.dim]), r)
    }

    /// Exact proposal density w.r.t. the volume measure at distance r from the centre.
    pub fn density(&self, r: f64) -> f64 {
        let i = (r / self.h).floor() as usize;
        if i >= self.mass.len() {
            return 0.0;
        }
        let area = ManifoldModel::unit_sphere_area(self.model.dim);
        let jac = area * self.model.radial_density(r);
        if jac <= 0.0 {
            return f64::INFINITY;
        }
        self.mass[i] / (self.h * self.total()) / jac
    }
}

/// Mixture of heat-kernel proposals around several centres, with exact density.
#[derive(Debug, Clone)]
pub struct MixtureProposal {
    model: ManifoldModel,
    parts: Vec<(f64, ChartPoint, RadialSampler)>,
}

impl MixtureProposal {
    /// Mixture from (weight, centre, sampler) triples; weights are normalized.
    pub fn new(model: ManifoldModel, parts: Vec<(f64, ChartPoint, RadialSampler)>) -> Self {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let parts = parts.into_iter().map(|(w, c, s)| (w / total, c, s)).collect();
        MixtureProposal { model, parts }
    }

    /// Proposal for integrands ∝ K(t1, x, z) K(t2, z, y): kernels around both
    /// endpoints plus the Brownian-bridge kernel at time t1·t2/(t1+t2) centred on
    /// the geodesic point at fraction t1/(t1+t2).
    pub fn bridge(hk: &HeatKernel, x: &ChartPoint, y: &ChartPoint, t1: f64, t2: f64) -> Result<Self> {
        let m = hk.model;
        let frac = t1 / (t1 + t2);
        let mid = if m.distance(x, y)? < m.diameter() - 1e-3 { m.geodesic_point(x, y, frac)? } else { *x };
        let tb = t1 * t2 / (t1 + t2);
        Ok(Self::new(
            m,
            vec![
                (0.25, *x, RadialSampler::parametrix(hk, t1)?),
                (0.25, *y, RadialSampler::parametrix(hk, t2)?),
                (0.5, mid, RadialSampler::parametrix(hk, tb)?),
            ],
        ))
    }

    /// Draw a point.
    pub fn sample(&self, rng: &mut Rng) -> ChartPoint {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (w, c, s) in &self.parts {
            acc += w;
            if u < acc {
                return s.sample(rng, c).0;
            }
        }
        let (_, c, s) = self.parts.last().expect("non-empty mixture");
        s.sample(rng, c).0
    }

    /// Exact mixture density at z.
    pub fn density(&self, z: &ChartPoint) -> f64 {
        self.parts.iter().map(|(w, c, s)| w * s.density(self.model.distance_unchecked(c, z))).sum()
    }
}

/// ω_{n−1} ∫₀^{r_max} f(r) sn(r)^{n−1} dr with optional interior breakpoints.
pub fn radial_integral<F: Fn(f64) -> f64>(
    model: &ManifoldModel,
    f: F,
    r_max: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<Quad> {
    let mut pts = vec![0.0];
    pts.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < r_max));
    pts.push(r_max);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let area = ManifoldModel::unit_sphere_area(model.dim);
    let q = gauss_kronrod_pts(|r| f(r) * model.radial_density(r), &pts, QuadOpts::rel(tol).with_abs(1e-300))?;
    Ok(Quad { value: area * q.value, error: area * q.error })
}

/// Distance from z to y, where z is at distance r from x in a direction making
/// angle α with the geodesic from x to y, and D = d(x, y) (cancellation-free
/// haversine forms of the laws of cosines).
pub fn second_distance(model: &ManifoldModel, dist_xy: f64, r: f64, alpha: f64) -> f64 {
    let s2 = (0.5 * alpha).sin().powi(2);
    match model.kind {
        Kind::Flat => ((r - dist_xy).powi(2) + 4.0 * r * dist_xy * s2).sqrt(),
        Kind::Sphere => {
            let a = model.curvature;
            let v = (0.5 * a * (r - dist_xy)).sin().powi(2) + (a * r).sin() * (a * dist_xy).sin() * s2;
            2.0 * v.clamp(0.0, 1.0).sqrt().asin() / a
        }
        Kind::Hyperbolic => {
            let a = model.curvature;
            let v = (0.5 * a * (r - dist_xy)).sinh().powi(2) + (a * r).sinh() * (a * dist_xy).sinh() * s2;
            2.0 * v.max(0.0).sqrt().asinh() / a
        }
    }
}

/// ∫_M f(d(x,z), d(y,z)) dV(z) for d(x,y) = `dist_xy`, by nested adaptive
/// quadrature in geodesic polar coordinates (r, α) around x.
pub fn two_center_integral<F: Fn(f64, f64) -> f64 + Sync>(
    model: &ManifoldModel,
    dist_xy: f64,
    f: F,
    r_max: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<Quad> {
    let n = model.dim;
    let angular = |alpha: f64| match n {
        2 => 2.0,
        3 => 2.0 * PI * alpha.sin(),
        _ => 4.0 * PI * alpha.sin().powi(2),
    };
    let inner_tol = (tol * 0.1).max(1e-14);
    let inner = |r: f64| -> f64 {
        if dist_xy == 0.0 {
            let full = match n {
                2 => 2.0 * PI,
                3 => 4.0 * PI,
                _ => 2.0 * PI * PI,
            };
            return full * f(r, r);
        }
        let g = |alpha: f64| angular(alpha) * f(r, second_distance(model, dist_xy, r, alpha));
        match gauss_kronrod(g, 0.0, PI, QuadOpts::rel(inner_tol).with_abs(1e-300)) {
            Ok(q) => q.value,
            Err(_) => f64::NAN,
        }
    };
    let mut pts = vec![0.0];
    pts.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < r_max));
    pts.push(r_max);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let q = gauss_kronrod_pts(|r| inner(r) * model.sn(r).powi(n as i32 - 1), &pts, QuadOpts::rel(tol).with_abs(1e-300))?;
    if !q.value.is_finite() {
        return Err(Error::Convergence { message: "two-centre inner quadrature failed".into(), achieved: f64::INFINITY });
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{estimate, McParams};
    use approx::assert_relative_eq;

    #[test]
    fn table_interpolation_is_accurate() {
        for m in [ManifoldModel::hyperbolic(4, 1.0), ManifoldModel::sphere(2, 1.0)] {
            let hk = HeatKernel::new(m);
            let tab = RadialTable::standard(&hk, 0.2).unwrap();
            for &r in &[0.0, 0.0123, 0.5, 1.37, 2.9] {
                assert_relative_eq!(tab.eval(r), hk.radial(0.2, r).unwrap(), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn underflowed_nodes_never_produce_nan() {
        let hk = HeatKernel::new(ManifoldModel::hyperbolic(4, 1.0));
        // ln f finite on [0, 2], −∞ beyond (an underflowed propagator tail).
        let tab = RadialTable::from_ln_fn(&hk, 1.0, 4.0, 16, |r| if r <= 2.0 { -r * r } else { f64::NEG_INFINITY }).unwrap();
        for i in 0..=400 {
            let r = i as f64 * 0.01;
            let v = tab.ln_eval_tail(r);
            assert!(!v.is_nan(), "r = {r}");
            assert!(v <= 0.0);
        }
        assert_relative_eq!(tab.ln_eval(1.0), -1.0, max_relative = 1e-12);
        assert_eq!(tab.ln_eval(3.0), f64::NEG_INFINITY);
        assert_eq!(tab.ln_eval_tail(5.0), f64::NEG_INFINITY);
    }

    #[test]
    fn second_distance_matches_embedding() {
        for m in [ManifoldModel::flat(3), ManifoldModel::sphere(3, 1.2), ManifoldModel::hyperbolic(3, 0.8)] {
            let x = m.origin();
            let y = m.point_at(&x, 0.9, &[1.0, 0.0, 0.0]);
            let alpha: f64 = 1.1;
            let z = m.point_at(&x, 0.7, &[alpha.cos(), alpha.sin(), 0.0]);
            assert_relative_eq!(second_distance(&m, 0.9, 0.7, alpha), m.distance(&y, &z).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn sampler_importance_weights_integrate_to_one() {
        let hk = HeatKernel::new(ManifoldModel::hyperbolic(3, 1.0));
        let s = RadialSampler::new(&hk, 0.5).unwrap();
        let o = hk.model.origin();
        let p = McParams { samples: 20_000, seed: 5, shards: 4 };
        let e = estimate(&p, |rng| {
            let (_, r) = s.sample(rng, &o);
            hk.radial(0.5, r).unwrap() / s.density(r)
        });
        assert!((e.mean - 1.0).abs() < 4.0 * e.std_err && e.std_err < 1e-4, "{e:?}");
    }

    #[test]
    fn two_center_gaussian_convolution() {
        let m = ManifoldModel::flat(2);
        let hk = HeatKernel::new(m);
        let (t1, t2, dxy) = (0.1, 0.3, 0.5);
        let q = two_center_integral(
            &m,
            dxy,
            |a, b| hk.radial(t1, a).unwrap() * hk.radial(t2, b).unwrap(),
            6.0,
            &[dxy],
            1e-10,
        )
        .unwrap();
        assert_relative_eq!(q.value, hk.radial(t1 + t2, dxy).unwrap(), max_relative = 1e-8);
    }
}
