//! Covariant Taylor expansion along a geodesic with the integral remainder.
//!
//! For G(ρ) = f(X(ρ)) on the geodesic X from x0 to x, the j-th ρ-derivative of G
//! equals ∇^j f contracted j times with Ẋ, so the covariant Taylor polynomial of
//! f at x0 evaluated at x is Σ_j G^{(j)}(0)/j! and the remainder is
//! ∫₀¹ (1−ρ)^N/N! · G^{(N+1)}(ρ) dρ. Derivatives are taken exactly from a
//! Chebyshev interpolant of G, refined until its coefficient tail is negligible.

use super::{ChartPoint, ManifoldModel};
use crate::error::{Error, Result};
use crate::quad::{gauss_kronrod, Chebyshev, QuadOpts};

/// Outcome of [`covariant_taylor`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorResult {
    /// f(x) evaluated directly.
    pub value: f64,
    /// Σ_{j ≤ N} ∇^j f(x0)(σ,…,σ)/j!.
    pub expansion: f64,
    /// Integral remainder ∫₀¹ (1−ρ)^N/N! G^{(N+1)}(ρ) dρ.
    pub remainder: f64,
    /// Majorant d^{N+1}/(N+1)! · sup |∇^{N+1} f| over the segment.
    pub bound: f64,
    /// Taylor coefficients G^{(j)}(0)/j!, j = 0..=N.
    pub terms: Vec<f64>,
    /// Estimated interpolation error of the derivative data.
    pub interp_error: f64,
}

/// Chebyshev interpolant of `g` on `[a, b]`, refined until the tail is below
/// `1e-13` of the sampled magnitude (at most 512 nodes).
fn adaptive_cheb<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64) -> (Chebyshev, f64) {
    let mut n = 32;
    loop {
        let c = Chebyshev::fit(g, a, b, n);
        let scale = (0..=8).map(|i| g(a + (b - a) * i as f64 / 8.0).abs()).fold(1e-300, f64::max);
        let tail = c.tail();
        if tail <= 1e-13 * scale || n >= 512 {
            return (c, tail);
        }
        n *= 2;
    }
}

/// Covariant Taylor expansion of `f` at `x0` to order `order`, evaluated at `x`.
///
/// The majorant samples the (N+1)-st directional derivative of f along the
/// geodesic direction and along the transported frame axes at points of the
/// segment; the geodesic direction makes it dominate the remainder exactly.
pub fn covariant_taylor<F: Fn(&ChartPoint) -> f64>(
    m: &ManifoldModel,
    f: F,
    x0: &ChartPoint,
    x: &ChartPoint,
    order: usize,
) -> Result<TaylorResult> {
    if order > 6 {
        return Err(Error::Parameter("Taylor order above 6 is not supported".into()));
    }
    let seg = m.segment(x0, x)?;
    let d = seg.length;
    let g = |rho: f64| f(&seg.point(rho));
    let (cheb, tail) = adaptive_cheb(&g, 0.0, 1.0);

    let mut derivs = vec![cheb.clone()];
    for _ in 0..=order {
        let next = derivs.last().expect("non-empty").derivative();
        derivs.push(next);
    }
    let mut fact = 1.0;
    let mut terms = Vec::with_capacity(order + 1);
    for (j, dj) in derivs.iter().take(order + 1).enumerate() {
        if j > 0 {
            fact *= j as f64;
        }
        terms.push(dj.eval(0.0) / fact);
    }
    let expansion: f64 = terms.iter().sum();
    let n_fact = fact; // N!
    let top = &derivs[order + 1];
    let rem = gauss_kronrod(
        |rho| (1.0 - rho).powi(order as i32) / n_fact * top.eval(rho),
        0.0,
        1.0,
        QuadOpts::rel(1e-13).with_abs(1e-300),
    )?;

    // Majorant: sup over sampled points and directions of the (N+1)-st directional derivative.
    let mut sup_along = 0.0f64;
    for i in 0..=200 {
        let v = top.eval(i as f64 / 200.0).abs();
        sup_along = sup_along.max(v);
    }
    // G^{(N+1)} = d^{N+1} ∇^{N+1}f(e,…,e) with e the unit tangent.
    let mut sup_norm = if d > 0.0 { sup_along / d.powi(order as i32 + 1) } else { 0.0 };
    let scale = (0.25 * d).clamp(1e-3, 0.5);
    for i in 0..=8 {
        let p = seg.point(i as f64 / 8.0);
        for e in m.tangent_frame(&p) {
            let h = |s: f64| {
                let mut w = e;
                w.iter_mut().for_each(|c| *c *= s);
                f(&m.exp(&p, &w))
            };
            let (c, _) = adaptive_cheb(&h, -scale, scale);
            let mut dc = c;
            for _ in 0..=order {
                dc = dc.derivative();
            }
            sup_norm = sup_norm.max(dc.eval(0.0).abs());
        }
    }
    let bound = d.powi(order as i32 + 1) / (n_fact * (order + 1) as f64) * sup_norm;
    Ok(TaylorResult {
        value: f(x),
        expansion,
        remainder: rem.value,
        bound,
        terms,
        interp_error: tail + rem.error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_field_has_zero_remainder_at_first_order() {
        let m = ManifoldModel::flat(3);
        let f = |p: &ChartPoint| 2.0 * p.coords[0] - p.coords[2] + 1.0;
        let x0 = ChartPoint::from_slice(&[0.1, 0.2, 0.3]);
        let x = ChartPoint::from_slice(&[1.0, -0.5, 2.0]);
        let r = covariant_taylor(&m, f, &x0, &x, 1).unwrap();
        assert!(r.remainder.abs() < 1e-12);
        assert_relative_eq!(r.expansion, f(&x), max_relative = 1e-12);
    }

    #[test]
    fn squared_norm_remainder_is_second_order_term() {
        let m = ManifoldModel::flat(2);
        let f = |p: &ChartPoint| p.coords[0].powi(2) + p.coords[1].powi(2);
        let x = ChartPoint::from_slice(&[0.7, -1.1]);
        let r = covariant_taylor(&m, f, &m.origin(), &x, 1).unwrap();
        assert_relative_eq!(r.remainder, f(&x), max_relative = 1e-11);
        assert!(r.remainder <= r.bound * (1.0 + 1e-9));
    }

    #[test]
    fn sphere_expansion_plus_remainder_reconstructs() {
        let m = ManifoldModel::sphere(2, 1.0);
        let f = |p: &ChartPoint| (p.coords[0] + 0.3 * p.coords[1]).exp();
        let x0 = m.point_at(&m.origin(), 0.4, &[1.0, 0.0]);
        let x = m.point_at(&m.origin(), 1.1, &[0.0, 1.0]);
        for n in 0..=3 {
            let r = covariant_taylor(&m, f, &x0, &x, n).unwrap();
            assert_relative_eq!(r.expansion + r.remainder, r.value, max_relative = 1e-10);
            assert!(r.remainder.abs() <= r.bound);
        }
    }
}
