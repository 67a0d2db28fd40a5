//! Integrals over the far point u of a CAS term:
//! I = ∫_M L(x₁, u) Π_k K(τ_k, u, y_k) du, with L = C^{ε,t} or (C^{ε,t})².
//!
//! * No kernels: I = P(t) = ∫_ε^t e^{−m²s} ds (stochastic completeness), or
//!   J(t) = ∫∫_{[ε,t]²} e^{−m²(s₁+s₂)} K(s₁+s₂, x, x) ds₁ds₂ (semigroup), done
//!   as one quadrature in σ = s₁ + s₂ with the overlap length as weight.
//! * Flat ℝⁿ: every factor is Gaussian; products of Gaussians integrate in
//!   closed form, leaving one (C) or two (C²) proper-time quadratures.
//! * Curved, one kernel: C collapses by the semigroup property to a proper-time
//!   quadrature of K(s + τ, d); C² uses two-centre quadrature in geodesic polar
//!   coordinates with an interpolated propagator profile.
//! * Curved, several kernels: importance sampling from a mixture of heat-kernel
//!   proposals (a geometric ladder of widths around x₁, plus one component per
//!   kernel centre), with seeds that do not depend on t, so that different
//!   scales share random numbers.

use super::{decade_points, Line};
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, Kind, ManifoldModel};
use crate::heatkernel::{two_center_integral, HeatKernel, MixtureProposal, PropagatorSpec, RadialSampler, RadialTable, TableCache};
use crate::mc::{derive_seed, estimate, McParams};
use crate::quad::{gauss_kronrod_pts, QuadOpts};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

/// A folded value with its numerical error (quadrature estimate or MC standard error).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Folded {
    #[serde(with = "crate::record::float")]
    pub value: f64,
    #[serde(with = "crate::record::float")]
    pub error: f64,
}

type Far = [(f64, ChartPoint)];

#[derive(Debug)]
pub(crate) struct LineIntegrator {
    hk: HeatKernel,
    eps: f64,
    m2: f64,
    mc: McParams,
    kernels: TableCache,
    props: Mutex<BTreeMap<u64, Arc<RadialTable>>>,
    samplers: Mutex<BTreeMap<u64, Arc<RadialSampler>>>,
}

fn opts(tol: f64) -> QuadOpts {
    QuadOpts::rel(tol).with_abs(1e-300)
}

/// ln of ∫_{ℝⁿ} Π_k K(a_k, u, p_k) du.
fn flat_ln_star(dim: usize, centres: &[(&[f64], f64)]) -> f64 {
    let n = dim as f64;
    let mut ln = 0.0;
    let mut wsum = 0.0;
    for &(_, a) in centres {
        ln -= 0.5 * n * (4.0 * PI * a).ln();
        wsum += 1.0 / (4.0 * a);
    }
    let mut q = 0.0;
    for i in 0..centres.len() {
        for j in i + 1..centres.len() {
            let d2: f64 = (0..dim).map(|c| (centres[i].0[c] - centres[j].0[c]).powi(2)).sum();
            q += d2 / (16.0 * centres[i].1 * centres[j].1);
        }
    }
    ln + 0.5 * n * (PI / wsum).ln() - q / wsum
}

impl LineIntegrator {
    pub(crate) fn new(hk: HeatKernel, eps: f64, m2: f64, mc: McParams) -> Self {
        LineIntegrator {
            hk,
            eps,
            m2,
            mc,
            kernels: TableCache::new(&hk, 2048),
            props: Mutex::new(BTreeMap::new()),
            samplers: Mutex::new(BTreeMap::new()),
        }
    }

    fn model(&self) -> &ManifoldModel {
        &self.hk.model
    }

    /// P(t) = ∫_ε^t e^{−m²s} ds.
    pub(crate) fn propagator_mass(&self, t: f64) -> f64 {
        if self.m2 == 0.0 {
            t - self.eps
        } else {
            -(-self.m2 * self.eps).exp() * (-self.m2 * (t - self.eps)).exp_m1() / self.m2
        }
    }

    /// J(t) = ∫_{2ε}^{2t} e^{−m²σ} K(σ, x, x) w(σ) dσ, w = overlap length.
    pub(crate) fn bubble(&self, t: f64) -> Result<f64> {
        let eps = self.eps;
        if t == eps {
            return Ok(0.0);
        }
        let f = |s: f64| {
            let sig = s.exp();
            let w = (t.min(sig - eps) - eps.max(sig - t)).max(0.0);
            self.hk.ln_radial(sig, 0.0).map_or(f64::NAN, |lk| w * (lk + s - self.m2 * sig).exp())
        };
        let mut pts = decade_points((2.0 * eps).ln(), (2.0 * t).ln());
        pts.push((eps + t).ln());
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Ok(gauss_kronrod_pts(f, &pts, opts(1e-12))?.value)
    }

    /// ∫ L(x₁, u) Π K(τ_k, u, y_k) du at flow scale t.
    pub(crate) fn integrate(&self, line: Line, t: f64, x1: &ChartPoint, far: &Far) -> Result<super::Folded> {
        let exact = |v: f64| Ok(Folded { value: v, error: 0.0 });
        if far.is_empty() {
            return match line {
                Line::Propagator => exact(self.propagator_mass(t)),
                Line::PropagatorSquared => exact(self.bubble(t)?),
            };
        }
        if t == self.eps {
            return exact(0.0);
        }
        if self.model().kind == Kind::Flat {
            return match line {
                Line::Propagator => self.flat_propagator(t, x1, far),
                Line::PropagatorSquared => self.flat_squared(t, x1, far),
            };
        }
        match (line, far.len()) {
            (Line::Propagator, 1) => self.semigroup(t, x1, far[0]),
            (Line::PropagatorSquared, 1) => self.two_centre_squared(t, x1, far[0]),
            _ => self.monte_carlo(line, t, x1, far),
        }
    }

    /// Break points (in ln s) at the scales of the far kernels.
    fn scale_breaks(&self, lo: f64, hi: f64, x1: &ChartPoint, far: &Far) -> Vec<f64> {
        let mut pts = decade_points(lo, hi);
        for (tau, y) in far {
            pts.push(tau.ln());
            let d = self.model().distance_unchecked(x1, y);
            if d > 0.0 {
                pts.push((d * d / (2.0 * self.model().dim as f64)).ln());
            }
        }
        pts.retain(|&p| p >= lo && p <= hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        pts
    }

    fn flat_propagator(&self, t: f64, x1: &ChartPoint, far: &Far) -> Result<Folded> {
        let dim = self.model().dim;
        let f = |s: f64| {
            let sv = s.exp();
            let mut c: Vec<(&[f64], f64)> = vec![(&x1.coords[..dim], sv)];
            c.extend(far.iter().map(|(tau, y)| (&y.coords[..dim], *tau)));
            (s - self.m2 * sv + flat_ln_star(dim, &c)).exp()
        };
        let pts = self.scale_breaks(self.eps.ln(), t.ln(), x1, far);
        let q = gauss_kronrod_pts(f, &pts, opts(1e-11))?;
        Ok(Folded { value: q.value, error: q.error })
    }

    fn flat_squared(&self, t: f64, x1: &ChartPoint, far: &Far) -> Result<Folded> {
        let dim = self.model().dim;
        let n = dim as f64;
        let pts = self.scale_breaks(self.eps.ln(), t.ln(), x1, far);
        let inner = |s1: f64| -> f64 {
            let v1 = s1.exp();
            let g = |s2: f64| {
                let v2 = s2.exp();
                let h = v1 * v2 / (v1 + v2);
                let mut c: Vec<(&[f64], f64)> = vec![(&x1.coords[..dim], h)];
                c.extend(far.iter().map(|(tau, y)| (&y.coords[..dim], *tau)));
                (s1 + s2 - self.m2 * (v1 + v2) - 0.5 * n * (4.0 * PI * (v1 + v2)).ln() + flat_ln_star(dim, &c)).exp()
            };
            let mut p2 = pts.clone();
            p2.push(s1);
            p2.sort_by(f64::total_cmp);
            p2.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            gauss_kronrod_pts(g, &p2, opts(1e-10)).map_or(f64::NAN, |q| q.value)
        };
        let q = gauss_kronrod_pts(inner, &pts, opts(1e-9))?;
        if !q.value.is_finite() {
            return Err(Error::Convergence { message: "bubble quadrature failed".into(), achieved: f64::INFINITY });
        }
        Ok(Folded { value: q.value, error: q.error })
    }

    /// ∫_ε^t e^{−m²s} K(s + τ, x₁, y) ds.
    fn semigroup(&self, t: f64, x1: &ChartPoint, (tau, y): (f64, ChartPoint)) -> Result<Folded> {
        let d = self.model().distance(x1, &y)?;
        let f = |s: f64| {
            let sv = s.exp();
            self.hk.ln_radial(sv + tau, d).map_or(f64::NAN, |lk| (s - self.m2 * sv + lk).exp())
        };
        let pts = self.scale_breaks(self.eps.ln(), t.ln(), x1, &[(tau, y)]);
        let q = gauss_kronrod_pts(f, &pts, opts(1e-10))?;
        Ok(Folded { value: q.value, error: q.error })
    }

    /// Effective upper scale of the massive propagator (mass decay beyond 1 + 1/m²).
    fn t_eff(&self, t: f64) -> f64 {
        if self.m2 > 0.0 {
            t.min(1.0 + 1.0 / self.m2)
        } else {
            t
        }
    }

    /// Interpolation table of ln C^{ε,t}(r).
    fn propagator_table(&self, t: f64) -> Result<Arc<RadialTable>> {
        let key = t.to_bits();
        if let Some(tab) = self.props.lock().expect("propagator cache lock").get(&key) {
            return Ok(tab.clone());
        }
        let reach = if self.m2 > 0.0 { t.min(1.0 + 30.0 / self.m2) } else { t };
        let r_max = RadialTable::default_rmax(&self.hk, reach);
        let r_max = if self.model().kind == Kind::Sphere { r_max.min(self.model().diameter()) } else { r_max };
        let intervals = ((r_max / (0.05 * self.eps.sqrt())).ceil() as usize).clamp(1024, 8192);
        let spec = PropagatorSpec::new(self.eps, t, self.m2)?;
        let h = r_max / intervals as f64;
        use rayon::prelude::*;
        let vals: Vec<f64> = (0..=intervals)
            .into_par_iter()
            .map(|i| self.hk.propagator_radial(&spec, i as f64 * h).map_or(f64::NEG_INFINITY, f64::ln))
            .collect();
        let tab = Arc::new(RadialTable::from_ln_fn(&self.hk, reach, r_max, intervals, |r| {
            vals[((r / h).round() as usize).min(intervals)]
        })?);
        self.props.lock().expect("propagator cache lock").insert(key, tab.clone());
        Ok(tab)
    }

    fn two_centre_squared(&self, t: f64, x1: &ChartPoint, (tau, y): (f64, ChartPoint)) -> Result<Folded> {
        let d = self.model().distance(x1, &y)?;
        let ctab = self.propagator_table(t)?;
        let ktab = self.kernels.get(tau)?;
        let f = |r1: f64, r2: f64| (2.0 * ctab.ln_eval_tail(r1) + ktab.ln_eval_tail(r2)).exp();
        let mut breaks = vec![self.eps.sqrt(), t.sqrt(), tau.sqrt()];
        if d > 0.0 {
            breaks.extend([d, (d - 2.0 * tau.sqrt()).max(0.0), d + 2.0 * tau.sqrt()]);
        }
        let r_max = ctab.r_max.max(d + RadialTable::default_rmax(&self.hk, tau));
        let r_max = if self.model().kind == Kind::Sphere { r_max.min(self.model().diameter()) } else { r_max };
        let q = two_center_integral(self.model(), d, f, r_max, &breaks, 1e-8)?;
        Ok(Folded { value: q.value, error: q.error.max(1e-7 * q.value.abs()) })
    }

    fn sampler(&self, width: f64) -> Result<Arc<RadialSampler>> {
        let key = width.to_bits();
        if let Some(s) = self.samplers.lock().expect("sampler cache lock").get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(RadialSampler::parametrix(&self.hk, width)?);
        self.samplers.lock().expect("sampler cache lock").insert(key, s.clone());
        Ok(s)
    }

    fn monte_carlo(&self, line: Line, t: f64, x1: &ChartPoint, far: &Far) -> Result<Folded> {
        let ctab = self.propagator_table(t)?;
        let ktabs: Vec<Arc<RadialTable>> = far.iter().map(|(tau, _)| self.kernels.get(*tau)).collect::<Result<_>>()?;
        let top = self.t_eff(t);
        let mut parts = Vec::new();
        let mut w = (4.0 * self.eps).min(top);
        loop {
            parts.push((1.0, *x1, (*self.sampler(w)?).clone()));
            if w >= top {
                break;
            }
            w = (4.0 * w).min(top);
        }
        let ladder = parts.len() as f64;
        for (tau, y) in far {
            parts.push((ladder / far.len() as f64, *y, (*self.sampler(*tau)?).clone()));
        }
        let prop = MixtureProposal::new(*self.model(), parts);
        let power = match line {
            Line::Propagator => 1.0,
            Line::PropagatorSquared => 2.0,
        };
        let mut label = format!("flow-mc|{line:?}|{:?}", x1.coords.map(f64::to_bits));
        let mut keys: Vec<String> = far.iter().map(|(tau, y)| format!("{}:{:?}", tau.to_bits(), y.coords.map(f64::to_bits))).collect();
        keys.sort();
        label.push_str(&keys.join("|"));
        let mc = McParams { seed: derive_seed(self.mc.seed, &label), ..self.mc };
        let m = *self.model();
        let e = estimate(&mc, |rng| {
            let u = prop.sample(rng);
            let q = prop.density(&u);
            if !(q > 0.0) {
                return 0.0;
            }
            let mut ln = power * ctab.ln_eval_tail(m.distance_unchecked(x1, &u));
            for ((_, y), tab) in far.iter().zip(&ktabs) {
                ln += tab.ln_eval_tail(m.distance_unchecked(&u, y));
            }
            ln.exp() / q
        });
        Ok(Folded { value: e.mean, error: e.std_err })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_star_reduces_to_semigroup() {
        let x = [0.0, 0.1, 0.0, 0.0];
        let y = [0.3, 0.0, -0.2, 0.1];
        let got = flat_ln_star(4, &[(&x, 0.2), (&y, 0.3)]).exp();
        let hk = HeatKernel::new(ManifoldModel::flat(4));
        let want = hk.eval(0.5, &ChartPoint::from_slice(&x), &ChartPoint::from_slice(&y)).unwrap();
        assert_relative_eq!(got, want, max_relative = 1e-13);
    }

    #[test]
    fn flat_massless_bubble_closed_form() {
        let li = LineIntegrator::new(HeatKernel::new(ManifoldModel::flat(4)), 1e-3, 0.0, McParams::default());
        let t: f64 = 0.7;
        let want = (((1e-3 + t) * (1e-3 + t)) / (4.0 * 1e-3 * t)).ln() / (16.0 * PI * PI);
        assert_relative_eq!(li.bubble(t).unwrap(), want, max_relative = 1e-11);
    }

    #[test]
    fn curved_routes_agree() {
        // One far kernel on H³: the deterministic routes against importance sampling.
        let hk = HeatKernel::new(ManifoldModel::hyperbolic(3, 1.0));
        let li = LineIntegrator::new(hk, 1e-2, 0.5, McParams::default().with_samples(100_000));
        let m = hk.model;
        let x = m.origin();
        let y = m.point_at(&x, 0.4, &[0.0, 1.0, 0.0]);
        let det = li.two_centre_squared(0.5, &x, (0.1, y)).unwrap();
        let mc = li.monte_carlo(Line::PropagatorSquared, 0.5, &x, &[(0.1, y)]).unwrap();
        assert!((det.value - mc.value).abs() < 4.0 * mc.error + 1e-6 * det.value, "{det:?} {mc:?}");
        let sg = li.semigroup(0.5, &x, (0.1, y)).unwrap();
        let mcp = li.monte_carlo(Line::Propagator, 0.5, &x, &[(0.1, y)]).unwrap();
        assert!((sg.value - mcp.value).abs() < 4.0 * mcp.error, "{sg:?} {mcp:?}");
    }
}
