//! Tree-class integration tests: brute-force enumeration oracle, incidence
//! identity, reduction closure, and weight factors against closed forms and
//! tensor-product quadrature.

use curvedflow::geometry::{ChartPoint, ManifoldModel};
use curvedflow::heatkernel::HeatKernel;
use curvedflow::mc::McParams;
use curvedflow::quad::{gauss_kronrod, QuadOpts};
use curvedflow::trees::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Enumerated class, computed once per test binary.
fn class(s: usize, l: usize) -> &'static [Tree] {
    static FIVE_ONE: OnceLock<Vec<Tree>> = OnceLock::new();
    static SIX_ONE: OnceLock<Vec<Tree>> = OnceLock::new();
    let cell = match (s, l) {
        (5, 1) => &FIVE_ONE,
        (6, 1) => &SIX_ONE,
        _ => unreachable!("only cached classes"),
    };
    cell.get_or_init(|| enumerate_trees(&TreeClassSpec::single(s, l).unwrap(), &EnumOptions::default()).unwrap())
}

/// Decode a Prüfer sequence into the edge list of a labeled tree on `n` vertices.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut deg = vec![1usize; n];
    for &v in seq {
        deg[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| deg[u] == 1).expect("a leaf exists");
        edges.push((leaf, v));
        deg[leaf] -= 1;
        deg[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| deg[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Rooted canonical form with slot labels: slots print as their index, internal
/// vertices as `*`; children are sorted.
fn ahu(adj: &[Vec<usize>], v: usize, parent: usize, slots: usize) -> String {
    let mut kids: Vec<String> = adj[v].iter().filter(|&&w| w != parent).map(|&w| ahu(adj, w, v, slots)).collect();
    kids.sort();
    let head = if v < slots { v.to_string() } else { "*".to_string() };
    if kids.is_empty() {
        head
    } else {
        format!("{head}[{}]", kids.join(","))
    }
}

/// Count the class by brute force: every labeled tree on s slots plus r
/// unlabeled internal vertices (via Prüfer sequences over the non-external
/// alphabet, which forces externals to be leaves), filtered by the membership
/// rules and deduplicated up to relabeling of the internal vertices.
fn brute_force_count(s: usize, l: usize, roots: usize) -> usize {
    if s == 1 {
        return 1;
    }
    let cap2 = if l == 0 { None } else { Some(6 * l + s - 4) };
    let max_internal = cap2.map_or(0, |c| c / 2) + s - 2;
    let mut seen = BTreeSet::new();
    for r in 0..=max_internal {
        let n = s + r;
        let alphabet: Vec<usize> = (0..roots).chain(s..n).collect();
        let len = n - 2;
        let mut idx = vec![0usize; len];
        loop {
            let seq: Vec<usize> = idx.iter().map(|&i| alphabet[i]).collect();
            let edges = prufer_edges(&seq, n);
            let mut deg = vec![0usize; n];
            let mut adj = vec![Vec::new(); n];
            for &(a, b) in &edges {
                deg[a] += 1;
                deg[b] += 1;
                adj[a].push(b);
                adj[b].push(a);
            }
            let internal_ok = (s..n).all(|v| deg[v] >= 2);
            let ext_ok = (roots..s).all(|v| deg[v] == 1);
            let v2 = deg.iter().filter(|&&d| d == 2).count();
            let delta = usize::from(deg[0] == 1);
            let member = match cap2 {
                None => v2 == 0,
                Some(c) => 2 * (v2 + delta) <= c,
            };
            if internal_ok && ext_ok && member {
                seen.insert(ahu(&adj, 0, usize::MAX, s));
            }
            // Next sequence (odometer).
            let mut k = 0;
            while k < len {
                idx[k] += 1;
                if idx[k] < alphabet.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == len {
                break;
            }
        }
    }
    seen.len()
}

#[test]
fn enumeration_matches_brute_force_for_small_classes() {
    for s in 1..=4 {
        for l in 0..=1 {
            let spec = TreeClassSpec::single(s, l).unwrap();
            let ours = enumerate_trees(&spec, &EnumOptions::default()).unwrap().len();
            assert_eq!(ours, brute_force_count(s, l, 1), "{spec}");
        }
    }
    for s in 2..=4 {
        for l in 0..=1 {
            let spec = TreeClassSpec::new(s, l, true).unwrap();
            let ours = enumerate_trees(&spec, &EnumOptions::default()).unwrap().len();
            assert_eq!(ours, brute_force_count(s, l, 2), "twice-rooted {spec}");
        }
    }
}

#[test]
fn incidence_identity_for_all_classes_up_to_six_points() {
    for s in 2..=6 {
        for l in 0..=2 {
            let spec = TreeClassSpec::single(s, l).unwrap();
            let n = for_each_tree(&spec, &EnumOptions::default(), |t| {
                let (lhs, rhs) = t.incidence_identity();
                assert_eq!(lhs, rhs, "{t}");
                assert_eq!(rhs, s as i64 - 3 + t.delta_c1() as i64);
                t.validate(&spec)
            })
            .unwrap();
            assert!(n >= 1);
        }
    }
}

#[test]
fn reduction_closure_except_from_tree_level_with_a_leaf_root() {
    for s in 1..=4 {
        for l in 1..=2 {
            let rep = check_reduction_closure(s, l, &EnumOptions::default()).unwrap();
            assert!(rep.checked > 0);
            if l >= 2 || s >= 4 || s == 1 {
                assert!(rep.violations.is_empty(), "{rep:?}");
            }
            // At tree level only v₂ = 0 is imposed, so a leaf root (δ = 1) can
            // push the reduced tree one above the one-loop cap.
            for v in &rep.violations {
                assert_eq!(v.delta_c1, 1, "{v:?}");
                assert_eq!(2 * (v.v2 + v.delta_c1), 6 * l + s - 4 + if s % 2 == 0 { 2 } else { 1 }, "{v:?}");
            }
        }
    }
    let rep = check_reduction_closure(2, 1, &EnumOptions::default()).unwrap();
    assert!(rep.violations.iter().any(|v| v.tree == "x1(z(y2,z(y3,y4)))" && v.reduced == "x1(z(z(y2)))"));
}

#[test]
fn reduction_rejects_repeated_or_non_external_slots() {
    let t = enumerate_trees(&TreeClassSpec::single(4, 0).unwrap(), &EnumOptions::default()).unwrap().remove(0);
    assert!(reduce_tree(&t, 2, 2).is_err());
    assert!(reduce_tree(&t, 1, 2).is_err());
    assert!(reduce_tree(&t, 2, 7).is_err());
}

#[test]
fn edge_list_golden_for_two_point_one_loop() {
    let ts = enumerate_trees(&TreeClassSpec::single(2, 1).unwrap(), &EnumOptions::default()).unwrap();
    let text: Vec<String> = ts.iter().map(Tree::to_edge_list).collect();
    assert_eq!(text, vec!["x1 y2 external\n".to_string(), "x1 z1 internal\ny2 z1 external\n".to_string()]);
}

fn random_config(m: &ManifoldModel, rng: &mut ChaCha8Rng) -> (ChartPoint, ChartPoint, f64, f64, f64) {
    let x = m.origin();
    let mut omega = [0.0; 4];
    for w in omega.iter_mut().take(m.dim) {
        *w = rng.gen_range(-1.0..1.0);
    }
    let norm = omega.iter().map(|v| v * v).sum::<f64>().sqrt();
    omega.iter_mut().for_each(|v| *v /= norm);
    let d = rng.gen_range(0.0..1.5);
    let y = m.point_at(&x, d, &omega[..m.dim]);
    let tau = rng.gen_range(0.05..0.5);
    let t = rng.gen_range(0.1..1.0);
    (x, y, d, tau, t)
}

#[test]
fn chain_weights_match_semigroup_closed_form() {
    for m in [ManifoldModel::flat(4), ManifoldModel::sphere(2, 1.0), ManifoldModel::hyperbolic(3, 1.0)] {
        let hk = HeatKernel::new(m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..3 {
            let (x, y, d, tau, t) = random_config(&m, &mut rng);
            let p = WeightParams { mass_sq: if k % 2 == 0 { 0.0 } else { 1.0 }, ..WeightParams::default() };
            let eng = WeightEngine::new(&hk, p, McParams { samples: 16_000, seed: 40 + k, shards: 4 }).unwrap();
            let chains = enumerate_trees(&TreeClassSpec::single(2, 1).unwrap(), &EnumOptions::default()).unwrap();
            for tree in &chains {
                let n = tree.internal_count();
                let w = eng.integrated_weight(tree, t, &[tau], &[x, y]).unwrap();
                let (exact, _) = chain_closed_form(&hk, &p, n, t, tau, d, None).unwrap();
                assert!(w.rel_err() <= 0.01, "{tree} {w:?}");
                assert!((w.value - exact).abs() <= 3.0 * w.mc_error + 1e-12 * exact, "{} {tree}: {w:?} vs {exact}", m.label());
            }
            let g = eng.global_weight(&TreeClassSpec::single(2, 1).unwrap(), t, &[tau], &[x, y]).unwrap();
            let f2r = f2r_closed_form(&hk, &p, 1, t, tau, d).unwrap();
            assert!((g.value - f2r).abs() <= 3.0 * g.mc_error + 1e-12 * f2r);
        }
    }
}

/// ∫_{ℝ⁴} Π_i (4π a_i)^{−2} exp(−|z − p_i|²/4a_i) dz as a product of four
/// one-dimensional quadratures.
fn gaussian_product_integral(centers: &[[f64; 4]], widths: &[f64]) -> f64 {
    (0..4)
        .map(|mu| {
            let f = |u: f64| {
                centers
                    .iter()
                    .zip(widths)
                    .map(|(c, &a)| (4.0 * PI * a).powf(-0.5) * (-(u - c[mu]).powi(2) / (4.0 * a)).exp())
                    .product::<f64>()
            };
            gauss_kronrod(f, -12.0, 12.0, QuadOpts::rel(1e-12).with_abs(1e-300)).unwrap().value
        })
        .product()
}

#[test]
fn flat_three_point_star_matches_tensor_quadrature() {
    let m = ManifoldModel::flat(4);
    let hk = HeatKernel::new(m);
    let p = WeightParams { mass_sq: 0.5, ..WeightParams::default() };
    let eng = WeightEngine::new(&hk, p, McParams { samples: 40_000, seed: 9, shards: 4 }).unwrap();
    let tree = enumerate_trees(&TreeClassSpec::single(3, 0).unwrap(), &EnumOptions::default()).unwrap().remove(0);
    assert_eq!(tree.canonical_string(), "x1(z(y2,y3))");
    let pts = [[0.0, 0.0, 0.0, 0.0], [0.6, 0.2, 0.0, -0.1], [-0.3, 0.5, 0.4, 0.0]];
    let fixed: Vec<ChartPoint> = pts
        .iter()
        .map(|c| {
            let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r == 0.0 {
                m.origin()
            } else {
                m.point_at(&m.origin(), r, &c.map(|v| v / r))
            }
        })
        .collect();
    let tau = [0.2, 0.3];
    let oracle = |ti: f64| {
        let a = [1.1 * ti, 1.1 * tau[0], 1.1 * tau[1]];
        (-p.mass_sq * a[0]).exp() * gaussian_product_integral(&pts, &a)
    };
    // Fixed scale.
    let ti = 0.25;
    let w = eng.integrated_weight_on_grid(&tree, &[ti], &tau, &fixed).unwrap();
    let exact = oracle(ti);
    assert!((w.value - exact).abs() <= 3.0 * w.mc_error, "{w:?} vs {exact}");
    assert!(w.rel_err() < 0.01);
    // Supremum over [ε, t]: compare with a fine scan of the oracle.
    let t = 0.8;
    let sup = log_grid(p.epsilon, t, 400).into_iter().map(oracle).fold(0.0, f64::max);
    let w = eng.integrated_weight(&tree, t, &tau, &fixed).unwrap();
    assert!((w.value - sup).abs() <= 3.0 * w.mc_error + 5e-3 * sup, "{w:?} vs {sup}");
}

#[test]
fn global_weight_is_monotone_on_nested_grids() {
    let m = ManifoldModel::hyperbolic(3, 1.0);
    let hk = HeatKernel::new(m);
    let p = WeightParams::default();
    let eng = WeightEngine::new(&hk, p, McParams { samples: 4_000, seed: 2, shards: 2 }).unwrap();
    let x = m.origin();
    let y = m.point_at(&x, 1.2, &[1.0, 0.0, 0.0]);
    let tree = enumerate_trees(&TreeClassSpec::single(2, 1).unwrap(), &EnumOptions::default()).unwrap().remove(1);
    let mut prev = 0.0;
    let full = log_grid(p.epsilon, 1.0, 12);
    for k in 2..=12 {
        let w = eng.integrated_weight_on_grid(&tree, &full[..k], &[0.3], &[x, y]).unwrap();
        assert!(w.value >= prev, "grid up to {}: {} < {prev}", full[k - 1], w.value);
        prev = w.value;
    }
}

#[test]
fn trivial_global_weights() {
    let m = ManifoldModel::flat(4);
    let hk = HeatKernel::new(m);
    let eng = WeightEngine::new(&hk, WeightParams::default(), McParams::default()).unwrap();
    let x = m.origin();
    let one = eng.global_weight(&TreeClassSpec::single(1, 2).unwrap(), 0.5, &[], &[x]).unwrap();
    assert_eq!(one.value, 1.0);
    let y = m.point_at(&x, 0.4, &[0.0, 0.0, 1.0, 0.0]);
    let g = eng.global_weight(&TreeClassSpec::single(2, 0).unwrap(), 0.5, &[0.2], &[x, y]).unwrap();
    assert!((g.value / hk.radial(0.22, 0.4).unwrap() - 1.0).abs() < 1e-14);
    assert_eq!(g.mc_error, 0.0);
}

#[test]
fn long_time_weights() {
    let m = ManifoldModel::flat(4);
    let hk = HeatKernel::new(m);
    let p = WeightParams { mass_sq: 1.0, ..WeightParams::default() };
    let eng = WeightEngine::new(&hk, p, McParams { samples: 16_000, seed: 8, shards: 4 }).unwrap();
    let spec = TreeClassSpec::single(2, 1).unwrap();
    let x = m.origin();
    let y = m.point_at(&x, 0.5, &[1.0, 0.0, 0.0, 0.0]);
    let tau = [0.2];
    // t = 1 reduces to the ordinary global weight.
    let a = eng.long_time_weight(&spec, 1.0, &tau, &[x, y]).unwrap();
    let b = eng.global_weight(&spec, 1.0, &tau, &[x, y]).unwrap();
    assert_eq!(a.value, b.value);
    // Convergence as t → ∞ and monotonicity in t.
    let w2 = eng.long_time_weight(&spec, 2.0, &tau, &[x, y]).unwrap();
    let w5 = eng.long_time_weight(&spec, 5.0, &tau, &[x, y]).unwrap();
    let w10 = eng.long_time_weight(&spec, 10.0, &tau, &[x, y]).unwrap();
    let winf = eng.long_time_weight(&spec, f64::INFINITY, &tau, &[x, y]).unwrap();
    assert!(w2.value <= w5.value + 3.0 * (w2.mc_error + w5.mc_error));
    assert!((w10.value / winf.value - 1.0).abs() < 0.01, "{w10:?} vs {winf:?}");
    // Chain closed form as oracle.
    for (w, t) in [(&w10, 10.0), (&winf, f64::INFINITY)] {
        let exact: f64 = (0..=1).map(|n| chain_long_time_closed_form(&hk, &p, n, t, tau[0], 0.5).unwrap()).sum();
        assert!((w.value - exact).abs() <= 3.0 * w.mc_error + 5e-3 * exact, "{w:?} vs {exact}");
    }
    // Massless limit diverges.
    let eng0 = WeightEngine::new(&hk, WeightParams::default(), McParams::default()).unwrap();
    assert!(eng0.long_time_weight(&spec, f64::INFINITY, &tau, &[x, y]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn canonical_form_is_invariant_under_internal_relabeling(idx in 0usize..1000, seed in any::<u64>()) {
        let ts = class(5, 1);
        let t = &ts[idx % ts.len()];
        let (s, n) = (t.s(), t.vertex_count());
        let mut perm: Vec<usize> = (s..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let map = |v: usize| if v < s { v } else { perm[v - s] };
        let edges = t.edges().iter().map(|&(a, b)| (map(a), map(b))).collect();
        let u = Tree::new(s, 1, n, edges).unwrap();
        prop_assert_eq!(u.canonical_string(), t.canonical_string());
        prop_assert_eq!(Tree::from_edge_list(&u.to_edge_list(), s, false).unwrap().canonical_string(), t.canonical_string());
    }

    #[test]
    fn reductions_of_random_six_point_trees_validate(idx in 0usize..100_000, i in 2usize..=6, j in 2usize..=6) {
        prop_assume!(i != j);
        let ts = class(6, 1);
        let t = &ts[idx % ts.len()];
        let r = reduce_tree(t, i, j).unwrap();
        prop_assert!(r.validate(&TreeClassSpec::single(4, 2).unwrap()).is_ok());
    }
}
