//! Heat kernels K(t,x,y) on the model manifolds and the regularized propagator
//! C^{ε,t}(x,y) = ∫_ε^t e^{−m²t′} K(t′,x,y) dt′.
//!
//! All models are two-point homogeneous, so K depends on d(x,y) only. Kernels of
//! curvature parameter a are obtained from unit-curvature ones by the exact
//! rescaling K_a(t, r) = aⁿ K₁(a²t, a r). Evaluation happens in logarithmic form
//! so that Gaussian tails never underflow.

mod bounds;
mod checks;
pub(crate) mod kernels;
mod table;

pub use bounds::{
    certify_distance_moment, certify_gradient_bounds, certify_two_sided, long_time_decay, BoundFit, BoundParams,
};
pub use checks::{heat_equation_residual, verify_completeness, verify_semigroup, CheckMode};
pub use table::{
    ln_parametrix, radial_integral, second_distance, two_center_integral, MixtureProposal, RadialSampler, RadialTable,
    TableCache,
};

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, Kind, ManifoldModel};
use crate::quad::{gauss_kronrod, QuadOpts};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Evaluation strategy (determined by the manifold).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Flat space and H³.
    ClosedForm,
    /// H² (McKean integral) and H⁴ (descent from H²).
    RecursionQuadrature,
    /// Sⁿ: spectral sum for κ²t ≥ 1 or coincident points, image representation otherwise.
    SpectralSum,
}

/// Per-manifold heat-kernel evaluator; immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatKernel {
    pub model: ManifoldModel,
    pub method: Method,
    /// Maximum number of spectral terms.
    pub spectral_cap: usize,
    /// Relative tolerance of the internal kernel quadratures.
    pub quadrature_tol: f64,
}

impl HeatKernel {
    /// Evaluator with default caps and tolerances.
    pub fn new(model: ManifoldModel) -> Self {
        let method = match (model.kind, model.dim) {
            (Kind::Flat, _) | (Kind::Hyperbolic, 3) => Method::ClosedForm,
            (Kind::Hyperbolic, _) => Method::RecursionQuadrature,
            (Kind::Sphere, _) => Method::SpectralSum,
        };
        HeatKernel { model, method, spectral_cap: 200_000, quadrature_tol: 1e-12 }
    }

    /// Declared relative accuracy of one kernel evaluation.
    pub fn accuracy(&self) -> f64 {
        match self.method {
            Method::ClosedForm => 1e-13,
            _ => 1e-9,
        }
    }

    /// ln K(t, ·, ·) at geodesic distance d.
    pub fn ln_radial(&self, t: f64, d: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
        }
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Domain(format!("invalid distance {d}")));
        }
        let m = &self.model;
        let n = m.dim;
        if m.kind == Kind::Flat {
            return Ok(-(n as f64) / 2.0 * (4.0 * PI * t).ln() - d * d / (4.0 * t));
        }
        let a = m.curvature;
        let (tu, r) = (a * a * t, a * d);
        let tol = self.quadrature_tol;
        let unit = match m.kind {
            Kind::Hyperbolic => match n {
                2 => kernels::ln_h2(tu, r, tol)?,
                3 => kernels::ln_h3(tu, r),
                _ => kernels::ln_h4(tu, r, tol)?,
            },
            _ => {
                if r > PI * (1.0 + 1e-12) {
                    return Err(Error::Domain(format!("distance {d} exceeds the sphere diameter")));
                }
                let r = r.min(PI);
                if tu >= 1.0 || r == 0.0 {
                    kernels::sphere_spectral(n, tu, r, self.spectral_cap)?.ln()
                } else {
                    match n {
                        2 => kernels::ln_s2_image(tu, r, tol)?,
                        3 => kernels::ln_s3_image(tu, r),
                        _ => kernels::ln_s4_image(tu, r, tol)?,
                    }
                }
            }
        };
        Ok(n as f64 * a.ln() + unit)
    }

    /// K(t, ·, ·) at geodesic distance d.
    pub fn radial(&self, t: f64, d: f64) -> Result<f64> {
        Ok(self.ln_radial(t, d)?.exp())
    }

    /// K(t, x, y).
    pub fn eval(&self, t: f64, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
        let d = self.model.distance(x, y)?;
        self.radial(t, d)
    }

    /// Reflect a distance into the valid range (sphere kernels are even about π/κ).
    pub(crate) fn fold_distance(&self, d: f64) -> f64 {
        let d = d.abs();
        if self.model.kind == Kind::Sphere {
            let diam = self.model.diameter();
            if d > diam {
                return (2.0 * diam - d).max(0.0);
            }
        }
        d
    }

    /// ∂_t ln K by a central difference in ln t.
    pub fn dt_ln_radial(&self, t: f64, d: f64) -> Result<f64> {
        let h = 1e-4;
        let up = self.ln_radial(t * (1.0 + h), d)?;
        let dn = self.ln_radial(t * (1.0 - h), d)?;
        Ok((up - dn) / (2.0 * h * t))
    }

    /// ∂_d ln K by a central difference (ln K is even in d).
    pub fn dd_ln_radial(&self, t: f64, d: f64) -> Result<f64> {
        if d == 0.0 {
            return Ok(0.0);
        }
        let h = 1e-4 * t.sqrt().min(d.max(1e-3));
        let up = self.ln_radial(t, self.fold_distance(d + h))?;
        let dn = self.ln_radial(t, self.fold_distance(d - h))?;
        Ok((up - dn) / (2.0 * h))
    }

    /// Regularized propagator C^{ε,t} at geodesic distance d.
    pub fn propagator_radial(&self, spec: &PropagatorSpec, d: f64) -> Result<f64> {
        spec.validate()?;
        if spec.epsilon == spec.t {
            return Ok(0.0);
        }
        let n = self.model.dim;
        if self.model.kind == Kind::Flat && n == 4 && spec.mass_sq == 0.0 {
            return Ok(flat4_massless_propagator(spec.epsilon, spec.t, d));
        }
        let tol = if self.model.kind == Kind::Flat { 1e-11 } else { 1e-9 };
        // Integrate in s = ln t′; the integrand is smooth and the scales span decades.
        let f = |s: f64| {
            let tp = s.exp();
            match self.ln_radial(tp, d) {
                Ok(lk) => (lk + s - spec.mass_sq * tp).exp(),
                Err(_) => f64::NAN,
            }
        };
        let (a, b) = (spec.epsilon.ln(), spec.t.ln());
        let mut pts = vec![a];
        // Break at the scale where the Gaussian factor switches on.
        if d > 0.0 {
            let s0 = (d * d / (2.0 * n as f64)).ln();
            if s0 > a && s0 < b {
                pts.push(s0);
            }
        }
        pts.push(b);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let q = gauss_kronrod(f, w[0], w[1], QuadOpts::rel(tol).with_abs(1e-300)).map_err(|e| match e {
                Error::Convergence { achieved, .. } => Error::Convergence {
                    message: "propagator quadrature failed".into(),
                    achieved,
                },
                other => other,
            })?;
            total += q.value;
        }
        if !total.is_finite() {
            return Err(Error::Convergence { message: "propagator integrand not finite".into(), achieved: f64::INFINITY });
        }
        Ok(total)
    }

    /// Regularized propagator C^{ε,t}(x, y).
    pub fn propagator(&self, spec: &PropagatorSpec, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
        let d = self.model.distance(x, y)?;
        self.propagator_radial(spec, d)
    }

    /// C_t(d) = e^{−m²t} K(t, d).
    pub fn propagator_deriv_radial(&self, t: f64, mass_sq: f64, d: f64) -> Result<f64> {
        Ok((self.ln_radial(t, d)? - mass_sq * t).exp())
    }

    /// C_t(x, y) = ∂_t C^{ε,t}(x, y) = e^{−m²t} K(t, x, y).
    pub fn propagator_deriv(&self, t: f64, mass_sq: f64, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
        let d = self.model.distance(x, y)?;
        self.propagator_deriv_radial(t, mass_sq, d)
    }
}

/// Closed form of C^{ε,t} on flat ℝ⁴ with m = 0.
pub fn flat4_massless_propagator(eps: f64, t: f64, d: f64) -> f64 {
    if d == 0.0 {
        return (1.0 / eps - 1.0 / t) / (16.0 * PI * PI);
    }
    let u = d * d / 4.0;
    // ∫ (4πs)^{−2} e^{−u/s} ds = (1/(16π² u)) [e^{−u/t} − e^{−u/ε}]
    ((-u / t).exp() - (-u / eps).exp()) / (16.0 * PI * PI * u)
}

/// UV cutoff, flow scale and mass of a propagator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorSpec {
    pub epsilon: f64,
    pub t: f64,
    pub mass_sq: f64,
}

impl PropagatorSpec {
    /// Construct and validate.
    pub fn new(epsilon: f64, t: f64, mass_sq: f64) -> Result<Self> {
        let s = PropagatorSpec { epsilon, t, mass_sq };
        s.validate()?;
        Ok(s)
    }
    /// Check 0 < ε ≤ t and m² ≥ 0.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= self.t && self.t.is_finite()) {
            return Err(Error::Parameter(format!("need 0 < ε ≤ t, got ε={}, t={}", self.epsilon, self.t)));
        }
        if !(self.mass_sq >= 0.0 && self.mass_sq.is_finite()) {
            return Err(Error::Parameter(format!("need m² ≥ 0, got {}", self.mass_sq)));
        }
        Ok(())
    }
}
