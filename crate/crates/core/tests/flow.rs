//! Flow-engine integration tests against independent oracles.

use approx::assert_relative_eq;
use curvedflow::flow::*;
use curvedflow::geometry::{ChartPoint, ManifoldModel};
use curvedflow::heatkernel::HeatKernel;
use curvedflow::mc::McParams;
use curvedflow::quad::GaussLegendre;
use proptest::prelude::*;
use std::f64::consts::PI;

fn engine(model: ManifoldModel, eps: f64, m2: f64, lambda: f64) -> FlowEngine {
    FlowEngine::new(FlowConfig::new(model, eps, m2, lambda).unwrap(), McParams { samples: 40_000, ..Default::default() }).unwrap()
}

fn flat_point(v: [f64; 4]) -> ChartPoint {
    ChartPoint::from_slice(&v)
}

/// ∫_0^∞ f(r) dr on a logarithmic variable with composite Gauss–Legendre.
fn log_radial<F: Fn(f64) -> f64>(f: F, r_lo: f64, r_hi: f64) -> f64 {
    GaussLegendre::new(20).composite(|u| f(u.exp()) * u.exp(), r_lo.ln(), r_hi.ln(), 400)
}

#[test]
fn six_point_fold_with_coincident_kernels_has_a_closed_form() {
    // All five kernels at one point Y: the far group K(τ,u,Y)³ equals
    // (4πτ)^{−4}/9 · K(τ/3,u,Y), and ∫_ε^t K(s + τ/3, d) ds integrates
    // w^{−2}e^{−a/w} to e^{−a/w}/a with a = d²/4.
    let (eps, t, tau, lambda) = (1e-3, 0.4, 0.2, 1.3);
    let e = engine(ManifoldModel::flat(4), eps, 0.0, lambda);
    let y = flat_point([0.25, -0.1, 0.05, 0.3]);
    let d2: f64 = y.coords[..4].iter().map(|c| c * c).sum();
    let phi = TestFunctionSpec::new(vec![(tau, y); 5]);
    let got = e.fold(&e.tree_level_6pt(t).unwrap(), &flat_point([0.0; 4]), &phi).unwrap().value;
    let k = |s: f64| (4.0 * PI * s).powi(-2) * (-d2 / (4.0 * s)).exp();
    let h = tau / 3.0;
    let a = d2 / 4.0;
    let line = ((-a / (t + h)).exp() - (-a / (eps + h)).exp()) / (16.0 * PI * PI * a);
    let want = -lambda * lambda * 10.0 * k(tau).powi(2) * (4.0 * PI * tau).powi(-4) / 9.0 * line;
    assert_relative_eq!(got, want, max_relative = 1e-8);
    // At t = ε every line vanishes.
    let zero = e.fold(&e.tree_level_6pt(eps).unwrap(), &flat_point([0.0; 4]), &phi).unwrap().value;
    assert_eq!(zero, 0.0);
}

#[test]
fn massive_mass_flow_matches_direct_integration() {
    let (lambda, m2) = (0.7, 0.5);
    let e = engine(ManifoldModel::flat(4), 1e-3, m2, lambda);
    for &t in &[1e-3f64, 0.01, 0.3, 1.0, 3.0] {
        let integral = GaussLegendre::new(30).composite(|u| {
            let s = u.exp();
            s * (-m2 * s).exp() / (16.0 * PI * PI * s * s)
        }, t.ln(), 0.0, 200);
        assert_relative_eq!(e.a_coefficient(t).unwrap(), -0.5 * lambda * integral, max_relative = 1e-10);
    }
}

/// Number of Wick contractions of four external fields with two quartic
/// vertices that produce the one-loop bubble, divided by 2!·(4!)².
fn bubble_symmetry_factor() -> f64 {
    // Fields 0..4 external, 4..8 vertex one, 8..12 vertex two.
    fn count(free: &mut Vec<usize>) -> u64 {
        let Some(&a) = free.first() else { return 1 };
        let mut total = 0;
        for i in 1..free.len() {
            let b = free[i];
            let vertex = |f: usize| if f < 4 { None } else { Some((f - 4) / 4) };
            let ok = match (vertex(a), vertex(b)) {
                (None, None) => false,
                (Some(x), Some(y)) => x != y,
                _ => true,
            };
            if !ok {
                continue;
            }
            let mut rest: Vec<usize> = free.iter().copied().filter(|&f| f != a && f != b).collect();
            total += count(&mut rest);
        }
        total
    }
    let n = count(&mut (0..12).collect());
    n as f64 / (2.0 * 24.0 * 24.0)
}

#[test]
fn coupling_counterterm_slope_matches_the_bubble_oracle() {
    let s = bubble_symmetry_factor();
    assert_relative_eq!(s, 1.5, epsilon = 1e-12);
    // Position-space bubble J(ε) = ∫(C^{ε,1})² on ℝ⁴ with the massless
    // propagator (e^{−r²/4} − e^{−r²/4ε})/(4π²r²).
    let bubble = |eps: f64| {
        log_radial(
            |r| {
                let c = ((-r * r / 4.0).exp() - (-r * r / (4.0 * eps)).exp()) / (4.0 * PI * PI * r * r);
                2.0 * PI * PI * r.powi(3) * c * c
            },
            1e-4 * eps.sqrt(),
            30.0,
        )
    };
    let lambda = 1.0;
    let eps = epsilon_sequence(0.1, 11);
    let oracle_values: Vec<f64> = eps.iter().map(|&e| s * lambda * lambda * bubble(e)).collect();
    let oracle = fit_log_divergence(&eps, &oracle_values).unwrap().slope;
    let summary = DivergenceSummary::compute("c", ManifoldModel::flat(4), lambda, &eps).unwrap();
    assert!((summary.coefficient - oracle).abs() < 0.02 * oracle.abs(), "{} vs {oracle}", summary.coefficient);
    // The counterterm values themselves agree with the oracle bubble.
    for (v, o) in summary.values.iter().zip(&oracle_values) {
        assert_relative_eq!(v, o, max_relative = 1e-6);
    }
}

#[test]
fn mass_counterterm_diverges_like_inverse_epsilon() {
    let eps = epsilon_sequence(0.1, 11);
    let s = DivergenceSummary::compute("a", ManifoldModel::flat(4), 2.0, &eps).unwrap();
    let p = s.power.unwrap();
    assert!((p.exponent - 1.0).abs() < 0.02);
    assert_relative_eq!(p.amplitude, -2.0 / (32.0 * PI * PI), max_relative = 1e-6);
    assert!(s.passed);
}

#[test]
fn sphere_curvature_counterterm_matches_the_heat_trace_coefficient() {
    // K(t,x,x) = (4πt)^{−2}(1 + Rt/6 + …): the curvature part of
    // −(λ/2)∫_ε^1 K is −(λ/2)(R/6)(1/16π²) ln(1/ε).
    let lambda = 1.0;
    let eps = epsilon_sequence(0.1, 11);
    let oracle = -0.5 * lambda / 6.0 / (16.0 * PI * PI);
    for kappa in [1.0, 2.0f64.sqrt()] {
        let s = DivergenceSummary::compute("xi", ManifoldModel::sphere(4, kappa), lambda, &eps).unwrap();
        assert!((s.coefficient - oracle).abs() < 0.05 * oracle.abs(), "κ={kappa}: {} vs {oracle}", s.coefficient);
    }
}

#[test]
fn three_dimensional_coupling_counterterm_is_finite() {
    let eps = epsilon_sequence(1e-2, 8);
    let values: Vec<f64> = eps
        .iter()
        .map(|&e| engine(ManifoldModel::hyperbolic(3, 1.0), e, 0.0, 1.0).c_coefficient(e).unwrap())
        .collect();
    // Convergence is slow (ε^{1/2}); the extrapolated limit must be stable
    // when the last member of the sequence is dropped.
    let (limit, err, exponent) = richardson_limit(&values).unwrap();
    let (shorter, _, _) = richardson_limit(&values[..values.len() - 1]).unwrap();
    assert!(limit.is_finite() && err < 0.05 * limit.abs(), "{values:?} → {limit} ± {err}");
    assert!((limit - shorter).abs() < 0.01 * limit.abs(), "{limit} vs {shorter}");
    assert!(exponent > 0.3 && exponent < 0.8, "convergence exponent {exponent}");
}

#[test]
fn freed_slot_equals_the_kernel_slot_integrated_over_its_point() {
    // ∫ K(τ,u,y) dy = 1: a fold with slot 2 = 𝟙 equals the fold with
    // K(τ, ·, y) integrated over y (radial in d(x₁, y) for s = 2).
    for model in [ManifoldModel::flat(4), ManifoldModel::hyperbolic(3, 1.0)] {
        let e = engine(model, 1e-2, 0.3, 1.0);
        let x1 = model.origin();
        let mut omega = vec![0.0; model.dim];
        omega[0] = 1.0;
        let tau = 0.1;
        for (n, l) in [(4, 0), (6, 0), (4, 1)] {
            let cas = e.cas_for(n, l, 0.3).unwrap();
            let free = e.fold(&cas, &x1, &TestFunctionSpec::constant()).unwrap().value;
            let integrated = log_radial(
                |r| {
                    let y = model.point_at(&x1, r, &omega);
                    let v = e.fold(&cas, &x1, &TestFunctionSpec::new(vec![(tau, y)])).unwrap().value;
                    let area = match model.dim {
                        3 => 4.0 * PI,
                        _ => 2.0 * PI * PI,
                    };
                    area * model.sn(r).powi(model.dim as i32 - 1) * v
                },
                1e-4,
                14.0 * (tau + 0.3f64).sqrt() + 1.0,
            );
            assert_relative_eq!(integrated, free, max_relative = 1e-5);
        }
    }
}

#[test]
fn six_point_differences_shrink_linearly_in_epsilon() {
    let m = ManifoldModel::flat(4);
    let phi = TestFunctionSpec::new(vec![
        (0.3, flat_point([0.2, 0.0, 0.0, 0.0])),
        (0.3, flat_point([0.0, 0.2, 0.0, 0.0])),
        (0.3, flat_point([0.0, 0.0, 0.2, 0.0])),
        (0.3, flat_point([0.0, 0.0, 0.0, 0.2])),
        (0.3, flat_point([-0.2, 0.0, 0.0, 0.0])),
    ]);
    let fit = epsilon_convergence(&epsilon_sequence(2e-3, 6), |eps| {
        let e = engine(m, eps, 0.0, 1.0);
        Ok(e.fold(&e.tree_level_6pt(0.5)?, &m.origin(), &phi)?.value)
    })
    .unwrap();
    assert!(fit.rate > 0.95, "{fit:?}");
    let pinned = epsilon_convergence(&epsilon_sequence(2e-3, 4), |eps| engine(m, eps, 0.0, 1.0).c_coefficient(1.0)).unwrap();
    assert!(pinned.pinned);
}

#[test]
fn remainder_envelope_on_flat_space() {
    let hk = HeatKernel::new(ManifoldModel::flat(4));
    let (rec, rows) = remainder_envelope(&hk, &Default::default(), (1e-3, 0.05), (0.02, 1.0), 6, 0.3).unwrap();
    assert!(rec.passed(), "{rec:?}");
    assert!(rows.iter().all(|r| (r.direct - r.taylor).abs() <= 1e-6 * r.direct.abs()));
}

#[test]
fn flow_record_round_trips_through_json() {
    let e = engine(ManifoldModel::flat(4), 1e-2, 0.0, 1.0);
    let phi = TestFunctionSpec::new(vec![(0.2, flat_point([0.1, 0.0, 0.0, 0.0]))]);
    let rec = e.integrate(&[0.01, 0.1, 1.0], &flat_point([0.0; 4]), &phi, &[(4, 0), (2, 1), (4, 1)]).unwrap();
    let back: FlowRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(back, rec);
    assert_eq!(rec.a[2], 0.0);
    assert_eq!(rec.c[2], 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn folds_are_bose_symmetric(
        pts in proptest::collection::vec((0.02f64..0.5, -0.4f64..0.4, -0.4f64..0.4), 5),
        seed in 0usize..120,
        t in 0.02f64..0.9,
    ) {
        let e = engine(ManifoldModel::flat(4), 1e-2, 0.2, 1.0);
        let kernels: Vec<(f64, ChartPoint)> = pts.iter().map(|&(tau, a, b)| (tau, flat_point([a, b, 0.1, 0.0]))).collect();
        // A permutation of the five slots indexed by `seed`.
        let mut perm: Vec<usize> = (0..5).collect();
        let mut k = seed;
        for i in (1..5).rev() {
            perm.swap(i, k % (i + 1));
            k /= i + 1;
        }
        let permuted: Vec<(f64, ChartPoint)> = perm.iter().map(|&i| kernels[i]).collect();
        for (n, l) in [(6, 0), (4, 1)] {
            let cas = e.cas_for(n, l, t).unwrap();
            let take = |v: &[(f64, ChartPoint)]| TestFunctionSpec::new(v[..n - 1].to_vec());
            let a = e.fold(&cas, &flat_point([0.0; 4]), &take(&kernels)).unwrap().value;
            let sub: Vec<(f64, ChartPoint)> = {
                let mut s = kernels[..n - 1].to_vec();
                s.reverse();
                s
            };
            let b = e.fold(&cas, &flat_point([0.0; 4]), &take(&sub)).unwrap().value;
            prop_assert_eq!(a, b);
            if n == 6 {
                let c = e.fold(&cas, &flat_point([0.0; 4]), &take(&permuted)).unwrap().value;
                prop_assert_eq!(a, c);
            }
        }
    }

    #[test]
    fn difference_slot_is_linear(tau in 0.05f64..0.5, a in -0.3f64..0.3, t in 0.02f64..0.9) {
        let e = engine(ManifoldModel::flat(4), 1e-2, 0.0, 1.0);
        let x1 = flat_point([0.0; 4]);
        let y = flat_point([a, 0.1, 0.0, 0.0]);
        let z = flat_point([0.0, 0.2, a, 0.0]);
        let cas = e.cas_for(6, 0, t).unwrap();
        let phi = TestFunctionSpec::new(vec![(tau, y), (0.1, z)]);
        let whole = e.fold(&cas, &x1, &phi).unwrap().value;
        // Slot 2 freed to 𝟙 with z kept; by Bose symmetry z may sit in slot 2.
        let freed = e.fold(&cas, &x1, &TestFunctionSpec::new(vec![(0.1, z)])).unwrap().value;
        let diff = e.fold(&cas, &x1, &phi.clone().with_difference(2)).unwrap().value;
        let kx = HeatKernel::new(ManifoldModel::flat(4)).eval(tau, &x1, &y).unwrap();
        prop_assert!((diff - (whole - kx * freed)).abs() <= 1e-12 * (whole.abs() + (kx * freed).abs()));
    }
}
