//! Stochastic completeness, semigroup property and heat-equation residual.

use super::table::{radial_integral, two_center_integral, MixtureProposal, RadialSampler, RadialTable};
use super::HeatKernel;
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, Kind};
use crate::mc::{estimate, McParams};
use crate::record::{Status, VerificationRecord};

/// How an integral over M is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckMode {
    /// Deterministic radial / two-centre quadrature; the error bar is the
    /// quadrature estimate plus the declared kernel accuracy.
    Quadrature,
    /// Importance-sampled Monte Carlo with heat-kernel proposals.
    MonteCarlo(McParams),
}

/// Pass iff |estimate − target| < 3·err and err < budget; err ≥ budget is inconclusive.
fn judge(diff: f64, err: f64, budget: f64) -> Status {
    if !(err < budget) {
        Status::Inconclusive
    } else {
        Status::from_bool(diff.abs() < 3.0 * err)
    }
}

/// Check ∫_M K(t, x, y) dV(y) = 1.
pub fn verify_completeness(hk: &HeatKernel, t: f64, x: &ChartPoint, mode: CheckMode) -> Result<VerificationRecord> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be > 0, got {t}")));
    }
    hk.model.check(x)?;
    let rec = VerificationRecord::new("completeness", hk.model.label()).input("t", t);
    let (est, err, seed, note) = match mode {
        CheckMode::Quadrature if hk.model.kind == Kind::Flat => (1.0, 0.0, None, "analytic Gaussian normalization"),
        CheckMode::Quadrature => {
            let r_max = RadialTable::default_rmax(hk, t);
            let peak = 2.0 * (hk.model.dim - 1) as f64 * hk.model.curvature * t;
            let q = radial_integral(&hk.model, |r| hk.radial(t, r).unwrap_or(f64::NAN), r_max, &[peak, 4.0 * t.sqrt()], 1e-12)?;
            (q.value, q.error + hk.accuracy() * q.value, None, "radial quadrature")
        }
        CheckMode::MonteCarlo(p) => {
            // Proposal from a wider kernel so that the weights are non-trivial.
            let sampler = RadialSampler::new(hk, 1.3 * t)?;
            let table = RadialTable::standard(hk, t)?;
            let e = estimate(&p, |rng| {
                let r = sampler.sample_radius(rng);
                table.eval(r) / sampler.density(r)
            });
            (e.mean, e.std_err, Some(p.seed), "importance-sampled Monte Carlo")
        }
    };
    let status = if hk.model.kind == Kind::Flat && err == 0.0 {
        Status::from_bool(est == 1.0)
    } else {
        judge(est - 1.0, err, 1e-3)
    };
    let mut rec = rec.sides(est, 1.0).error(err).status(status).note(note);
    rec.seed = seed;
    Ok(rec)
}

/// Check ∫_M K(t1, x, z) K(t2, z, y) dV(z) = K(t1 + t2, x, y).
pub fn verify_semigroup(
    hk: &HeatKernel,
    t1: f64,
    t2: f64,
    x: &ChartPoint,
    y: &ChartPoint,
    mode: CheckMode,
) -> Result<VerificationRecord> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(Error::Domain("semigroup times must be positive".into()));
    }
    let m = hk.model;
    let dxy = m.distance(x, y)?;
    let rhs = hk.radial(t1 + t2, dxy)?;
    let rec = VerificationRecord::new("semigroup", m.label()).input("t1", t1).input("t2", t2).input("d", dxy);
    if m.kind == Kind::Flat && mode == CheckMode::Quadrature {
        // Gaussian convolution is exact.
        return Ok(rec.sides(rhs, rhs).error(0.0).status(Status::Pass).note("analytic Gaussian convolution"));
    }
    let r_max = RadialTable::default_rmax(hk, t1);
    let tab1 = RadialTable::new(hk, t1, r_max, 2048)?;
    let tab2 = RadialTable::new(hk, t2, RadialTable::default_rmax(hk, t2).max(r_max + dxy), 4096)?;
    match mode {
        CheckMode::Quadrature => {
            let q = two_center_integral(&m, dxy, |a, b| tab1.eval(a) * tab2.eval(b), r_max, &[dxy, t1.sqrt()], 1e-10)?;
            let err = q.error + 2.0 * hk.accuracy() * q.value.abs() + hk.accuracy() * rhs;
            let st = judge(q.value - rhs, err, 1e-3 * rhs);
            Ok(rec.sides(q.value, rhs).error(err).status(st).note("two-centre quadrature"))
        }
        CheckMode::MonteCarlo(p) => {
            let prop = MixtureProposal::bridge(hk, x, y, t1, t2)?;
            let e = estimate(&p, |rng| {
                let z = prop.sample(rng);
                let a = m.distance_unchecked(x, &z);
                let b = m.distance_unchecked(y, &z);
                tab1.eval(a) * tab2.eval(b) / prop.density(&z)
            });
            let st = judge(e.mean - rhs, e.std_err, 1e-3 * rhs);
            Ok(rec.sides(e.mean, rhs).error(e.std_err).status(st).seed(p.seed).note("mixture importance sampling"))
        }
    }
}

/// Relative residual |∂_t K − Δ_y K| / K at (t, x, y), with Δ from the
/// divergence-form chart Laplacian.
pub fn heat_equation_residual(hk: &HeatKernel, t: f64, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
    let m = hk.model;
    let d = m.distance(x, y)?;
    let k = hk.radial(t, d)?;
    let dt = k * hk.dt_ln_radial(t, d)?;
    let h = 3e-3 * t.sqrt();
    let lap = m.laplace_beltrami_h(|z| hk.radial(t, m.distance_unchecked(x, z)).unwrap_or(f64::NAN), y, h)?;
    Ok((dt - lap).abs() / k)
}
