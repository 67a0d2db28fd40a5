//! Constant conformal rescaling g → ρ²g and the scaling identities it implies.
//!
//! Rescaling the metric by ρ² multiplies distances by ρ and the curvature
//! parameter (κ or k) by 1/ρ; in the embedding charts a point x of M is the
//! point ρx of M′. The heat equation then gives
//!
//! * K(t, x, y; g) = ρⁿ K(ρ²t, x, y; ρ²g),
//! * C^{ε,t}(x, y; m², g) = ρ^{n−2} C^{ρ²ε,ρ²t}(x, y; m²/ρ², ρ²g),
//! * ℒ^{ε,t}_{n,l}(x₁, φ; m², λ, g) = ρ^{4−n} ℒ^{ρ²ε,ρ²t}_{n,l}(x₁, φ; m²/ρ², λ, ρ²g)
//!   in four dimensions, with every dimensionful scale (ε, t, τ_i and the
//!   renormalization scale t_R) multiplied by ρ².
//!
//! On homogeneous spaces the relevant terms decompose as a = α + ξR,
//! b^{μν} = β g^{μν}, c = γ; [`decompose_relevant`] extracts α, ξ from runs at
//! several curvatures.

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowEngine, RelevantTerms, TestFunctionSpec};
use crate::geometry::{ChartPoint, Kind, ManifoldModel};
use crate::heatkernel::{HeatKernel, PropagatorSpec};
use crate::mc::McParams;
use crate::quad::least_squares;
use crate::record::{float, fmt17, Status, VerificationRecord};
use serde::{Deserialize, Serialize};

/// Relative tolerance of the scaling identities: closed forms on flat space,
/// spectral sums and quadratures on curved models.
pub fn tolerance(model: &ManifoldModel) -> f64 {
    if model.kind == Kind::Flat {
        1e-6
    } else {
        1e-4
    }
}

/// The model space with metric ρ²g.
pub fn scale_manifold(model: &ManifoldModel, rho: f64) -> Result<ManifoldModel> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("scale factor must be > 0, got {rho}")));
    }
    ManifoldModel::new(model.kind, model.dim, model.curvature / rho)
}

/// The rescaling M → M′ with g′ = ρ²g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    #[serde(with = "float")]
    pub rho: f64,
    pub source: ManifoldModel,
    pub target: ManifoldModel,
}

impl ScaleMap {
    /// Scale map by ρ.
    pub fn new(source: ManifoldModel, rho: f64) -> Result<Self> {
        Ok(ScaleMap { rho, source, target: scale_manifold(&source, rho)? })
    }

    /// Composition: scaling by ρ then by `other.rho`.
    pub fn then(&self, rho2: f64) -> Result<Self> {
        ScaleMap::new(self.source, self.rho * rho2)
    }

    /// Image of a point: embedding coordinates multiplied by ρ.
    pub fn map_point(&self, x: &ChartPoint) -> ChartPoint {
        let mut c = x.coords;
        c.iter_mut().for_each(|v| *v *= self.rho);
        ChartPoint { coords: c }
    }

    /// Largest relative deviation from d′(x′, y′) = ρ d(x, y) and
    /// R′ = ρ^{−2} R over the given pairs.
    pub fn check(&self, pairs: &[(ChartPoint, ChartPoint)]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (x, y) in pairs {
            let d = self.source.distance(x, y)?;
            let d2 = self.target.distance(&self.map_point(x), &self.map_point(y))?;
            if d > 0.0 {
                worst = worst.max((d2 - self.rho * d).abs() / (self.rho * d));
            }
        }
        let r = self.source.scalar_curvature_const();
        let r2 = self.target.scalar_curvature_const();
        if r != 0.0 {
            worst = worst.max((r2 * self.rho * self.rho - r).abs() / r.abs());
        }
        Ok(worst)
    }
}

/// K(t, x, y; g) = ρⁿ K(ρ²t, x′, y′; ρ²g) on a grid of (t, x, y).
pub fn verify_kernel_scaling(model: &ManifoldModel, rho: f64, grid: &[(f64, ChartPoint, ChartPoint)]) -> Result<VerificationRecord> {
    let map = ScaleMap::new(*model, rho)?;
    let (hk, hk2) = (HeatKernel::new(*model), HeatKernel::new(map.target));
    let n = model.dim as i32;
    let mut worst: f64 = 0.0;
    let mut at = (f64::NAN, f64::NAN);
    for (t, x, y) in grid {
        let lhs = hk.eval(*t, x, y)?;
        let rhs = rho.powi(n) * hk2.eval(rho * rho * t, &map.map_point(x), &map.map_point(y))?;
        let rel = (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE);
        if rel >= worst {
            worst = rel;
            at = (lhs, rhs);
        }
    }
    let tol = tolerance(model);
    Ok(VerificationRecord::new("kernel-scaling", model.label())
        .input("rho", rho)
        .input("points", grid.len() as f64)
        .fit("max_rel_deviation", worst)
        .sides(at.0, at.1)
        .error(worst)
        .status(Status::from_bool(worst < tol))
        .note(format!("K(t,x,y;g) = rho^n K(rho^2 t,x,y;rho^2 g) within {tol:e}")))
}

/// C^{ε,t}(d; m², g) = ρ^{n−2} C^{ρ²ε,ρ²t}(ρd; m²/ρ², ρ²g) at the given distances.
pub fn verify_propagator_scaling(model: &ManifoldModel, rho: f64, spec: &PropagatorSpec, distances: &[f64]) -> Result<VerificationRecord> {
    let map = ScaleMap::new(*model, rho)?;
    let (hk, hk2) = (HeatKernel::new(*model), HeatKernel::new(map.target));
    let spec2 = PropagatorSpec::new(rho * rho * spec.epsilon, rho * rho * spec.t, spec.mass_sq / (rho * rho))?;
    let p = model.dim as i32 - 2;
    let mut worst: f64 = 0.0;
    let mut at = (f64::NAN, f64::NAN);
    for &d in distances {
        let lhs = hk.propagator_radial(spec, d)?;
        let rhs = rho.powi(p) * hk2.propagator_radial(&spec2, rho * d)?;
        let rel = (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE);
        if rel >= worst {
            worst = rel;
            at = (lhs, rhs);
        }
    }
    let tol = tolerance(model);
    Ok(VerificationRecord::new("propagator-scaling", model.label())
        .input("rho", rho)
        .input("epsilon", spec.epsilon)
        .input("t", spec.t)
        .input("mass_sq", spec.mass_sq)
        .fit("max_rel_deviation", worst)
        .sides(at.0, at.1)
        .error(worst)
        .status(Status::from_bool(worst < tol))
        .note(format!("C(eps,t;m2,g) = rho^(n-2) C(rho^2 eps, rho^2 t; m2/rho^2, rho^2 g) within {tol:e}")))
}

/// The flow configuration with metric ρ²g: ε, t_R → ρ²ε, ρ²t_R and m² → m²/ρ².
pub fn scale_config(cfg: &FlowConfig, rho: f64) -> Result<FlowConfig> {
    let mut c = cfg.clone();
    c.model = scale_manifold(&cfg.model, rho)?;
    c.epsilon *= rho * rho;
    c.t_renorm *= rho * rho;
    c.mass_sq /= rho * rho;
    c.validate()?;
    Ok(c)
}

/// ℒ^{ε,t}_{n,l}(x₁, φ; g) = ρ^{4−n} ℒ^{ρ²ε,ρ²t}_{n,l}(x₁′, φ′; ρ²g) in four
/// dimensions, where φ′ has widths ρ²τ_i at y_i′ and the same function values
/// (φ′ = ρ^{−4(s−1)}·φ as kernels of the scaled metric).
pub fn verify_cas_scaling(
    cfg: &FlowConfig,
    rho: f64,
    (n, l): (usize, usize),
    t: f64,
    phi: &TestFunctionSpec,
    mc: McParams,
) -> Result<VerificationRecord> {
    if cfg.model.dim != 4 {
        return Err(Error::Precondition(format!("the CAS scaling relation is four-dimensional, got n = {}", cfg.model.dim)));
    }
    if cfg.renorm.a != 0.0 {
        return Err(Error::Precondition("a^R ≠ 0 does not scale (it carries dimension 2)".into()));
    }
    let cfg2 = scale_config(cfg, rho)?;
    let map = ScaleMap::new(cfg.model, rho)?;
    let (e1, e2) = (FlowEngine::new(cfg.clone(), mc)?, FlowEngine::new(cfg2, mc)?);
    let x1 = cfg.model.origin();
    let phi2 = TestFunctionSpec {
        kernels: phi.kernels.iter().map(|&(tau, y)| (rho * rho * tau, map.map_point(&y))).collect(),
        difference: phi.difference,
    };
    let lhs = e1.fold(&e1.cas_for(n, l, t)?, &x1, phi)?;
    let folded2 = e2.fold(&e2.cas_for(n, l, rho * rho * t)?, &map.map_point(&x1), &phi2)?;
    let factor = rho.powi(4 - n as i32) * rho.powi(4 * (phi.s() as i32 - 1));
    let rhs = factor * folded2.value;
    let err = lhs.error + factor * folded2.error;
    let dev = (lhs.value - rhs).abs();
    let tol = tolerance(&cfg.model);
    let ok = dev <= tol * lhs.value.abs() + 4.0 * err || (lhs.value == 0.0 && rhs == 0.0);
    Ok(VerificationRecord::new(format!("cas-scaling-{n}-{l}"), cfg.model.label())
        .input("rho", rho)
        .input("epsilon", cfg.epsilon)
        .input("t", t)
        .input("mass_sq", cfg.mass_sq)
        .input("s", phi.s() as f64)
        .fit("rel_deviation", dev / lhs.value.abs().max(f64::MIN_POSITIVE))
        .sides(lhs.value, rhs)
        .error(err)
        .status(Status::from_bool(ok))
        .note("L(eps,t;m2,g) = rho^(4-n) L(rho^2 eps, rho^2 t; m2/rho^2, rho^2 g), test functions with rho^2 tau"))
}

/// Constant-curvature decomposition of relevant terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    /// a = α + ξR.
    #[serde(with = "float")]
    pub alpha: f64,
    #[serde(with = "float")]
    pub xi: f64,
    /// b^{μν} = β g^{μν}.
    #[serde(with = "float")]
    pub beta: f64,
    /// c = γ (mean over the samples).
    #[serde(with = "float")]
    pub gamma: f64,
    /// Largest |a_i − α − ξR_i|.
    #[serde(with = "float")]
    pub delta_a: f64,
    /// Largest deviation of b from β g (including f, which must vanish).
    #[serde(with = "float")]
    pub delta_b: f64,
    /// Largest |c_i − γ|.
    #[serde(with = "float")]
    pub delta_c: f64,
    /// ζ = k²/m² of each sample (recorded only; infinite for m = 0).
    pub zeta: Vec<f64>,
}

/// α, ξ (least squares in R), β and γ from relevant terms at the same ε on
/// several homogeneous models. ξ needs two distinct curvatures; with only flat
/// samples ξ = 0 and α = a.
pub fn decompose_relevant(samples: &[(ManifoldModel, f64, RelevantTerms)]) -> Result<DecompositionRecord> {
    if samples.is_empty() {
        return Err(Error::Parameter("no relevant-term samples".into()));
    }
    let rs: Vec<f64> = samples.iter().map(|(m, _, _)| m.scalar_curvature_const()).collect();
    let a: Vec<f64> = samples.iter().map(|(_, _, r)| r.a).collect();
    let mut distinct = rs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (alpha, xi) = if distinct == [0.0] {
        (a.iter().sum::<f64>() / a.len() as f64, 0.0)
    } else if distinct.len() < 2 {
        return Err(Error::Parameter("ξ needs relevant terms at two different curvatures".into()));
    } else {
        let rows: Vec<Vec<f64>> = rs.iter().map(|&r| vec![1.0, r]).collect();
        let c = least_squares(&rows, &a)?;
        (c[0], c[1])
    };
    let delta_a = rs.iter().zip(&a).map(|(r, a)| (a - alpha - xi * r).abs()).fold(0.0, f64::max);
    let beta_i: Vec<f64> = samples.iter().map(|(_, _, r)| r.b.first().and_then(|row| row.first()).copied().unwrap_or(0.0)).collect();
    let beta = beta_i.iter().sum::<f64>() / beta_i.len() as f64;
    let mut delta_b: f64 = 0.0;
    for ((_, _, r), &bi) in samples.iter().zip(&beta_i) {
        for (mu, row) in r.b.iter().enumerate() {
            for (nu, v) in row.iter().enumerate() {
                let want = if mu == nu { bi } else { 0.0 };
                delta_b = delta_b.max((v - want).abs());
            }
        }
        delta_b = delta_b.max(r.f.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let gamma = samples.iter().map(|(_, _, r)| r.c).sum::<f64>() / samples.len() as f64;
    let delta_c = samples.iter().map(|(_, _, r)| (r.c - gamma).abs()).fold(0.0, f64::max);
    let zeta = samples
        .iter()
        .map(|(m, m2, _)| if m.kind == Kind::Hyperbolic { m.curvature * m.curvature / m2 } else { 0.0 })
        .collect();
    Ok(DecompositionRecord { alpha, xi, beta, gamma, delta_a, delta_b, delta_c, zeta })
}

/// ξ^ε from one-loop mass flows at t = ε on two (or more) spheres with the
/// given κ, m = 0.
pub fn xi_at_epsilon(kappas: &[f64], lambda: f64, epsilon: f64) -> Result<DecompositionRecord> {
    let samples = kappas
        .iter()
        .map(|&k| {
            let m = ManifoldModel::sphere(4, k);
            let e = FlowEngine::new(FlowConfig::new(m, epsilon, 0.0, lambda)?, McParams::default())?;
            Ok((m, 0.0, RelevantTerms::scalar(4, e.a_coefficient(epsilon)?, 0.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    decompose_relevant(&samples)
}

/// CSV header of scaling records (the record columns with ρ in front).
pub fn csv_header() -> String {
    format!("rho,{}", VerificationRecord::csv_header())
}

/// CSV row of a scaling record.
pub fn csv_row(rec: &VerificationRecord) -> String {
    format!("{},{}", fmt17(rec.inputs.get("rho").copied().unwrap_or(f64::NAN)), rec.csv_row())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn manifold_scaling_laws() {
        assert_eq!(scale_manifold(&ManifoldModel::sphere(4, 1.0), 1.0).unwrap(), ManifoldModel::sphere(4, 1.0));
        let s = scale_manifold(&ManifoldModel::sphere(4, 1.0), 2.0).unwrap();
        assert_eq!(s.curvature, 0.5);
        assert_relative_eq!(s.scalar_curvature_const(), 12.0 / 4.0);
        assert_eq!(scale_manifold(&ManifoldModel::flat(3), 3.0).unwrap(), ManifoldModel::flat(3));
        assert!(scale_manifold(&ManifoldModel::flat(3), 0.0).is_err());
        let a = ScaleMap::new(ManifoldModel::hyperbolic(3, 1.0), 2.0).unwrap().then(1.5).unwrap();
        assert_eq!(a.target, ScaleMap::new(ManifoldModel::hyperbolic(3, 1.0), 3.0).unwrap().target);
    }

    #[test]
    fn flat_decomposition_has_no_curvature_part() {
        let d = decompose_relevant(&[(ManifoldModel::flat(4), 0.0, RelevantTerms::scalar(4, -0.3, 1.0))]).unwrap();
        assert_eq!((d.alpha, d.xi, d.beta, d.gamma), (-0.3, 0.0, 0.0, 1.0));
        assert!(decompose_relevant(&[(ManifoldModel::sphere(4, 1.0), 0.0, RelevantTerms::scalar(4, 1.0, 0.0))]).is_err());
    }

    #[test]
    fn non_scaling_renormalization_is_rejected() {
        let mut cfg = FlowConfig::new(ManifoldModel::flat(4), 1e-2, 0.0, 1.0).unwrap();
        cfg.renorm.a = 0.1;
        let r = verify_cas_scaling(&cfg, 2.0, (2, 1), 0.5, &TestFunctionSpec::constant(), McParams::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
