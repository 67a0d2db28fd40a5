//! Grid certification of the two-sided Gaussian bounds and the derivative bounds.
//!
//! Every bound has the form lhs(t,d) ≤ const·rhs(t,d) (or ≥ for the lower
//! Gaussian bound). The constant is fitted as the max (min) of lhs/rhs over a
//! log-spaced t grid times a uniform d grid, in logarithmic arithmetic. The fit
//! is repeated on the grid with doubled density (nested, so every coarse point
//! is a fine point) and must be stable within 10%.

use super::HeatKernel;
use crate::error::{Error, Result};
use crate::record::{GridRow, Status, VerificationRecord};
use rayon::prelude::*;

/// Parameters of a certification sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundParams {
    /// Gaussian slack δ ∈ (0, 1).
    pub delta: f64,
    /// Slack δ′ > δ of the distance-moment bound.
    pub delta_prime: f64,
    /// Bound-validity horizon T.
    pub horizon: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub d_max: f64,
    /// Coarse grid sizes; the refined grid has 2n − 1 points per axis.
    pub nt: usize,
    pub nd: usize,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams { delta: 0.1, delta_prime: 0.25, horizon: 1.0, t_min: 1e-2, t_max: 1.0, d_max: 5.0, nt: 10, nd: 11 }
    }
}

impl BoundParams {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!("δ must lie in (0,1), got {}", self.delta)));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max) {
            return Err(Error::Parameter("need 0 < t_min < t_max".into()));
        }
        if self.t_max > self.horizon {
            return Err(Error::Domain(format!("grid reaches t = {} beyond the horizon T = {}", self.t_max, self.horizon)));
        }
        if self.nt < 2 || self.nd < 2 || !(self.d_max > 0.0) {
            return Err(Error::Parameter("grid needs ≥ 2 points per axis and d_max > 0".into()));
        }
        Ok(())
    }

    fn grid(&self, hk: &HeatKernel, refine: bool) -> (Vec<f64>, Vec<f64>) {
        let (nt, nd) = if refine { (2 * self.nt - 1, 2 * self.nd - 1) } else { (self.nt, self.nd) };
        let d_max = self.d_max.min(hk.model.diameter());
        let (a, b) = (self.t_min.ln(), self.t_max.ln());
        let ts = (0..nt).map(|i| (a + (b - a) * i as f64 / (nt - 1) as f64).exp()).collect();
        let ds = (0..nd).map(|j| d_max * j as f64 / (nd - 1) as f64).collect();
        (ts, ds)
    }
}

/// A fitted bound constant with its refinement history.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFit {
    pub name: String,
    pub coarse: f64,
    pub fine: f64,
    pub rel_change: f64,
    pub argmax_t: f64,
    pub argmax_d: f64,
}

/// Log-space lhs and rhs of one bound at (t, d).
type LnSides = (f64, f64);

fn sweep<F>(
    hk: &HeatKernel,
    p: &BoundParams,
    name: &str,
    maximize: bool,
    f: F,
) -> Result<(BoundFit, Vec<GridRow>)>
where
    F: Fn(f64, f64) -> Result<LnSides> + Sync,
{
    let label = hk.model.label();
    let run = |refine: bool| -> Result<(f64, f64, f64, Vec<GridRow>)> {
        let (ts, ds) = p.grid(hk, refine);
        let pts: Vec<(f64, f64)> = ts.iter().flat_map(|&t| ds.iter().map(move |&d| (t, d))).collect();
        let vals: Result<Vec<LnSides>> = pts.par_iter().map(|&(t, d)| f(t, d)).collect();
        let vals = vals?;
        let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
        let (mut bt, mut bd) = (f64::NAN, f64::NAN);
        let mut rows = Vec::with_capacity(pts.len());
        for (&(t, d), &(ll, lr)) in pts.iter().zip(&vals) {
            let lratio = ll - lr;
            if (maximize && lratio > best) || (!maximize && lratio < best) {
                best = lratio;
                bt = t;
                bd = d;
            }
            rows.push(GridRow {
                manifold: label.clone(),
                bound: name.to_string(),
                t,
                d,
                lhs: ll.exp(),
                rhs: lr.exp(),
                ratio: lratio.exp(),
            });
        }
        Ok((best.exp(), bt, bd, rows))
    };
    let (coarse, _, _, _) = run(false)?;
    let (fine, bt, bd, rows) = run(true)?;
    let rel_change = if fine == coarse { 0.0 } else { (fine - coarse).abs() / fine.abs().max(coarse.abs()) };
    Ok((BoundFit { name: name.into(), coarse, fine, rel_change, argmax_t: bt, argmax_d: bd }, rows))
}

fn record_of(hk: &HeatKernel, p: &BoundParams, fit: &BoundFit, need_positive: bool) -> VerificationRecord {
    let ok = fit.fine.is_finite() && fit.coarse.is_finite() && (!need_positive || fit.fine > 0.0) && fit.rel_change < 0.1;
    VerificationRecord::new(fit.name.clone(), hk.model.label())
        .input("delta", p.delta)
        .input("t_min", p.t_min)
        .input("t_max", p.t_max)
        .input("d_max", p.d_max)
        .fit("constant", fit.fine)
        .fit("coarse", fit.coarse)
        .fit("rel_change", fit.rel_change)
        .fit("argmax_t", fit.argmax_t)
        .fit("argmax_d", fit.argmax_d)
        .sides(fit.fine, fit.coarse)
        .error(fit.rel_change)
        .status(Status::from_bool(ok))
        .note("constant finite and stable within 10% under grid doubling")
}

/// Fit C and c in c·t^{−n/2}e^{−d²/4t(1−δ)} ≤ K ≤ C·t^{−n/2}e^{−d²/4t(1+δ)}.
pub fn certify_two_sided(hk: &HeatKernel, p: &BoundParams) -> Result<(Vec<VerificationRecord>, Vec<GridRow>)> {
    p.validate()?;
    let half_n = hk.model.dim as f64 / 2.0;
    let (up, mut rows) = sweep(hk, p, "hk10-upper", true, |t, d| {
        Ok((hk.ln_radial(t, d)?, -half_n * t.ln() - d * d / (4.0 * t * (1.0 + p.delta))))
    })?;
    // The lower bound is reported as c = min K / (t^{−n/2} e^{−d²/4t(1−δ)}).
    let (lo, rows_lo) = sweep(hk, p, "hk10-lower", false, |t, d| {
        Ok((hk.ln_radial(t, d)?, -half_n * t.ln() - d * d / (4.0 * t * (1.0 - p.delta))))
    })?;
    rows.extend(rows_lo);
    Ok((vec![record_of(hk, p, &up, true), record_of(hk, p, &lo, true)], rows))
}

/// Fit c′ in d^s K(t,d) ≤ c′ t^{s/2} K(t(1+δ′), d).
pub fn certify_distance_moment(hk: &HeatKernel, s: u32, p: &BoundParams) -> Result<(VerificationRecord, Vec<GridRow>)> {
    p.validate()?;
    if !(1..=3).contains(&s) {
        return Err(Error::Parameter(format!("moment order s must be 1..3, got {s}")));
    }
    if p.delta_prime <= p.delta {
        return Err(Error::Parameter(format!("need δ′ > δ, got δ′ = {} ≤ δ = {}", p.delta_prime, p.delta)));
    }
    let sf = s as f64;
    let name = format!("d-moment-s{s}");
    let (fit, rows) = sweep(hk, p, &name, true, |t, d| {
        let ll = if d == 0.0 { f64::NEG_INFINITY } else { sf * d.ln() + hk.ln_radial(t, d)? };
        Ok((ll, 0.5 * sf * t.ln() + hk.ln_radial(t * (1.0 + p.delta_prime), d)?))
    })?;
    let rec = record_of(hk, p, &fit, false).input("delta_prime", p.delta_prime).input("s", sf);
    Ok((rec, rows))
}

/// Fit the constants of |∇K| ≤ C t^{−1/2} K(t_δ), |∂_t K| ≤ C t^{−1} K(t_δ)
/// (t_δ = t(1+δ)) and |∇ ln K| ≤ C t^{−1/2} (1 + d²/t).
pub fn certify_gradient_bounds(hk: &HeatKernel, p: &BoundParams) -> Result<(Vec<VerificationRecord>, Vec<GridRow>)> {
    p.validate()?;
    if p.t_min < 1e-3 {
        return Err(Error::Domain(format!("finite-difference checks need t ≥ 1e-3, got {}", p.t_min)));
    }
    let td = 1.0 + p.delta;
    let (grad, mut rows) = sweep(hk, p, "D", true, |t, d| {
        let g = hk.dd_ln_radial(t, d)?.abs();
        let ll = if g == 0.0 { f64::NEG_INFINITY } else { g.ln() + hk.ln_radial(t, d)? };
        Ok((ll, -0.5 * t.ln() + hk.ln_radial(t * td, d)?))
    })?;
    let (pat, r2) = sweep(hk, p, "pat", true, |t, d| {
        let g = hk.dt_ln_radial(t, d)?.abs();
        let ll = if g == 0.0 { f64::NEG_INFINITY } else { g.ln() + hk.ln_radial(t, d)? };
        Ok((ll, -t.ln() + hk.ln_radial(t * td, d)?))
    })?;
    let (logd, r3) = sweep(hk, p, "logD", true, |t, d| {
        let g = hk.dd_ln_radial(t, d)?.abs();
        let ll = if g == 0.0 { f64::NEG_INFINITY } else { g.ln() };
        Ok((ll, -0.5 * t.ln() + (1.0 + d * d / t).ln()))
    })?;
    rows.extend(r2);
    rows.extend(r3);
    Ok((vec![record_of(hk, p, &grad, false), record_of(hk, p, &pat, false), record_of(hk, p, &logd, false)], rows))
}

/// Log-slope of C_t(d) = e^{−m²t}K(t,d) over t ∈ [1, 20]; passes if the
/// slope is at most −(m² − δ) within 5%.
pub fn long_time_decay(hk: &HeatKernel, mass_sq: f64, d: f64, delta: f64) -> Result<VerificationRecord> {
    let ts: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
    let ys: Result<Vec<f64>> = ts.iter().map(|&t| Ok(hk.ln_radial(t, d)? - mass_sq * t)).collect();
    let ys = ys?;
    let n = ts.len() as f64;
    let (mt, my) = (ts.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let slope = sxy / sxx;
    let target = -(mass_sq - delta);
    Ok(VerificationRecord::new("long-time-decay", hk.model.label())
        .input("m2", mass_sq)
        .input("d", d)
        .input("delta", delta)
        .fit("slope", slope)
        .sides(slope, target)
        .status(Status::from_bool(slope <= target * 0.95 || slope <= target))
        .note("log-slope of C_t over t in [1,20] at most -(m^2 - delta)"))
}
