//! Unit-curvature radial heat kernels ln K₁(t, r).
//!
//! * Hⁿ: H³ in closed form; H² from the McKean integral; H⁴ by the descent
//!   relation K₄ = −e^{−2t}/(2π sinh r) ∂_r K₂ moved under the integral.
//! * Sⁿ: for t ≥ 1 (and at coincident points) the Gegenbauer spectral sum,
//!   otherwise the exact image (periodized) representations — the S³ closed
//!   form, and integral representations obtained by the same descent on S²/S⁴.
//!
//! All quadratures substitute s = r + w² to remove the inverse square-root
//! endpoint singularity and factor out e^{−r²/4t}, which is returned additively
//! in the logarithm, so kernels far in the Gaussian tail never underflow.

use crate::error::{Error, Result};
use crate::quad::{gauss_kronrod, QuadOpts};
use std::f64::consts::{PI, SQRT_2};

/// ln sinh(x) for x > 0 without overflow.
pub(crate) fn ln_sinh(x: f64) -> f64 {
    if x < 20.0 {
        x.sinh().ln()
    } else {
        x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p()
    }
}

/// ln(r / sinh r).
fn ln_r_over_sinh(r: f64) -> f64 {
    if r < 1e-4 {
        -r * r / 6.0
    } else {
        r.ln() - ln_sinh(r)
    }
}

/// s / sinh s.
fn h_ratio(s: f64) -> f64 {
    if s < 1e-4 {
        1.0 - s * s / 6.0
    } else if s > 700.0 {
        0.0
    } else {
        s / s.sinh()
    }
}

/// d/ds (s / sinh s).
fn h_ratio_prime(s: f64) -> f64 {
    if s < 1e-2 {
        let s2 = s * s;
        -s / 3.0 + 7.0 * s * s2 / 90.0 - 31.0 * s * s2 * s2 / 2520.0
    } else {
        h_ratio(s) * (1.0 / s - 1.0 / s.tanh())
    }
}

fn opts(tol: f64) -> QuadOpts {
    QuadOpts { abs_tol: 1e-300, rel_tol: tol, max_intervals: 4000 }
}

/// Upper limit in w beyond which e^{−w²(2r+w²)/4t} < e^{−75}.
fn w_max(t: f64, r: f64) -> f64 {
    (300.0 * t / (r + (r * r + 300.0 * t).sqrt())).sqrt()
}

/// ln √(2 sinh(r + w²/2) sinh(w²/2)).
fn ln_denominator(r: f64, w: f64) -> f64 {
    let b = 0.5 * w * w;
    0.5 * (std::f64::consts::LN_2 + ln_sinh(r + b) + ln_sinh(b))
}

/// ln K on H³ (k = 1).
pub(crate) fn ln_h3(t: f64, r: f64) -> f64 {
    -1.5 * (4.0 * PI * t).ln() + ln_r_over_sinh(r) - t - r * r / (4.0 * t)
}

/// ln K on H² (k = 1).
pub(crate) fn ln_h2(t: f64, r: f64, tol: f64) -> Result<f64> {
    let wm = w_max(t, r);
    let f = |w: f64| {
        if w < 1e-150 {
            return if r > 0.0 { 2.0 * r / r.sinh().sqrt() } else { 0.0 };
        }
        let s = r + w * w;
        let e = -w * w * (2.0 * r + w * w) / (4.0 * t);
        2.0 * w * s * (e - ln_denominator(r, w)).exp()
    };
    let q = gauss_kronrod(f, 0.0, wm, opts(tol))?;
    let ln_c = 0.5 * std::f64::consts::LN_2 - 0.25 * t - 1.5 * (4.0 * PI * t).ln();
    Ok(ln_c - r * r / (4.0 * t) + q.value.ln())
}

/// ln K on H⁴ (k = 1).
pub(crate) fn ln_h4(t: f64, r: f64, tol: f64) -> Result<f64> {
    let wm = w_max(t, r);
    // −g'(s)·e^{r²/4t} with g(s) = (s/sinh s) e^{−s²/4t}; positive.
    let f = |w: f64| {
        let s = r + w * w;
        let gp = h_ratio_prime(s) - h_ratio(s) * s / (2.0 * t);
        if w < 1e-150 {
            return if r > 0.0 { -2.0 * gp / r.sinh().sqrt() } else { 0.0 };
        }
        let e = -w * w * (2.0 * r + w * w) / (4.0 * t);
        -2.0 * w * gp * (e - ln_denominator(r, w)).exp()
    };
    let q = gauss_kronrod(f, 0.0, wm, opts(tol))?;
    let ln_c = 0.5 * std::f64::consts::LN_2 - 0.25 * t - 1.5 * (4.0 * PI * t).ln();
    Ok(-2.0 * t + ln_c - (2.0 * PI).ln() - r * r / (4.0 * t) + q.value.ln())
}

/// Range of image indices needed for time t.
fn image_range(t: f64) -> i32 {
    ((3000.0 * t).sqrt() / (2.0 * PI)).ceil() as i32 + 1
}

/// Periodized sums of h(s) = s e^{−s²/4t} and its first three derivatives at φ,
/// with alternating signs if `alternate`, all multiplied by e^{θ²/4t}.
fn image_sums(t: f64, phi: f64, theta: f64, alternate: bool) -> [f64; 4] {
    let kmax = image_range(t);
    let mut out = [0.0; 4];
    for k in -kmax..=kmax {
        let s = phi + 2.0 * PI * k as f64;
        let sign = if alternate && k % 2 != 0 { -1.0 } else { 1.0 };
        // (s² − θ²) factored to keep precision.
        let e = (-(s - theta) * (s + theta) / (4.0 * t)).exp() * sign;
        if e == 0.0 {
            continue;
        }
        let s2 = s * s;
        out[0] += e * s;
        out[1] += e * (1.0 - s2 / (2.0 * t));
        out[2] += e * (-1.5 * s / t + s * s2 / (4.0 * t * t));
        out[3] += e * (-1.5 / t + 1.5 * s2 / (t * t) - s2 * s2 / (8.0 * t * t * t));
    }
    out
}

/// ln K on S³ (κ = 1) from the image closed form, valid for 0 < θ ≤ π.
pub(crate) fn ln_s3_image(t: f64, theta: f64) -> f64 {
    let pref = t - 1.5 * (4.0 * PI * t).ln() - theta * theta / (4.0 * t);
    let x0 = theta;
    let xpi = theta - PI;
    let ratio = if x0 < 1e-4 {
        let n = image_sums(t, 0.0, theta, false);
        n[1] + x0 * x0 * (n[3] + n[1]) / 6.0
    } else if xpi.abs() < 1e-4 {
        let n = image_sums(t, PI, theta, false);
        -(n[1] + xpi * xpi * (n[3] + n[1]) / 6.0)
    } else {
        image_sums(t, theta, theta, false)[0] / theta.sin()
    };
    pref + ratio.ln()
}

/// φ(ψ) with sin²(φ/2) = sin²(θ/2) + cos²(θ/2) sin²ψ.
fn phi_of(theta: f64, psi: f64) -> f64 {
    let s2 = (0.5 * theta).sin().powi(2) + (0.5 * theta).cos().powi(2) * psi.sin().powi(2);
    2.0 * s2.sqrt().min(1.0).asin()
}

/// ln K on S² (κ = 1), image representation, 0 < θ ≤ π.
pub(crate) fn ln_s2_image(t: f64, theta: f64, tol: f64) -> Result<f64> {
    let q = |psi: f64| {
        let phi = phi_of(theta, psi);
        if phi < 1e-6 {
            let g = image_sums(t, 0.0, theta, true);
            return SQRT_2 * g[1];
        }
        let g = image_sums(t, phi, theta, true);
        g[0] / (SQRT_2 * (0.5 * phi).sin())
    };
    let v = gauss_kronrod(q, 0.0, 0.5 * PI, opts(tol))?;
    let ln_c2 = 0.5 * std::f64::consts::LN_2 + 0.25 * t - 1.5 * (4.0 * PI * t).ln();
    Ok(ln_c2 - theta * theta / (4.0 * t) + (2.0 * v.value).ln())
}

/// ln K on S⁴ (κ = 1), image representation via descent from S², 0 < θ ≤ π.
pub(crate) fn ln_s4_image(t: f64, theta: f64, tol: f64) -> Result<f64> {
    let qp = |psi: f64| {
        let phi = phi_of(theta, psi);
        let val = if phi < 1e-3 * t.sqrt() {
            let g = image_sums(t, 0.0, theta, true);
            -2.0 * SQRT_2 * (g[3] / 6.0 + g[1] / 24.0)
        } else if PI - phi < 1e-5 {
            let g = image_sums(t, PI, theta, true);
            SQRT_2 * (g[2] / 2.0 + g[0] / 8.0)
        } else {
            let g = image_sums(t, phi, theta, true);
            let (s, c) = (0.5 * phi).sin_cos();
            (-g[1] / c + g[0] / (2.0 * s)) / (2.0 * SQRT_2 * s * s)
        };
        2.0 * val * psi.cos().powi(2)
    };
    let v = gauss_kronrod(qp, 0.0, 0.5 * PI, opts(tol))?;
    if v.value <= 0.0 {
        return Err(Error::Convergence { message: "S4 image integral lost positivity".into(), achieved: v.error });
    }
    let ln_c2 = 0.5 * std::f64::consts::LN_2 + 0.25 * t - 1.5 * (4.0 * PI * t).ln();
    Ok(2.0 * t + ln_c2 - (2.0 * PI).ln() - theta * theta / (4.0 * t) + v.value.ln())
}

/// Volume of the unit n-sphere.
pub(crate) fn sphere_volume(n: usize) -> f64 {
    match n {
        2 => 4.0 * PI,
        3 => 2.0 * PI * PI,
        4 => 8.0 * PI * PI / 3.0,
        _ => unreachable!("dimension validated by ManifoldModel"),
    }
}

/// K on Sⁿ (κ = 1) by the spectral sum Σ d_l C_l^λ(cos θ)/C_l^λ(1) e^{−l(l+n−1)t}/vol.
pub(crate) fn sphere_spectral(n: usize, t: f64, theta: f64, cap: usize) -> Result<f64> {
    let x = theta.cos();
    let lam = (n as f64 - 1.0) / 2.0;
    let nf = n as f64;
    let (mut c_prev, mut c_cur) = (0.0, 1.0); // C_{l−1}, C_l at x
    let (mut n_prev, mut n_cur) = (0.0, 1.0); // same at x = 1
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for l in 0..=cap {
        let lf = l as f64;
        if l >= 1 {
            let next = (2.0 * x * (lf + lam - 1.0) * c_cur - (lf + 2.0 * lam - 2.0) * c_prev) / lf;
            let next1 = (2.0 * (lf + lam - 1.0) * n_cur - (lf + 2.0 * lam - 2.0) * n_prev) / lf;
            c_prev = c_cur;
            c_cur = next;
            n_prev = n_cur;
            n_cur = next1;
        }
        // Multiplicity (2l+n−1)(l+n−2)!/(l!(n−1)!).
        let mult = match n {
            2 => 2.0 * lf + 1.0,
            3 => (lf + 1.0) * (lf + 1.0),
            _ => (2.0 * lf + 3.0) * (lf + 1.0) * (lf + 2.0) / 6.0,
        };
        let w = mult * (-lf * (lf + nf - 1.0) * t).exp();
        let term = w * c_cur / n_cur;
        sum += term;
        abs_sum += w;
        if l >= 2 && w < 1e-17 * sum.abs().max(1e-300) {
            let rel = 1e-15 * abs_sum / sum.abs().max(1e-300);
            if sum <= 0.0 || rel > 1e-8 {
                return Err(Error::Convergence {
                    message: format!("spectral sum cancels at t={t}, θ={theta}"),
                    achieved: rel,
                });
            }
            return Ok(sum / sphere_volume(n));
        }
    }
    Err(Error::Convergence {
        message: format!("spectral sum not converged within {cap} terms"),
        achieved: (cap as f64).powi(n as i32 - 1) * (-(cap as f64).powi(2) * t).exp(),
    })
}
