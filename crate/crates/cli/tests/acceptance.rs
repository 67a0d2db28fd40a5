//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the summary is always printed; the
//! process exits with status 1 if any criterion fails. Tolerances are the
//! pinned acceptance tolerances; independent oracles (brute-force tree counts,
//! the position-space bubble) live in this file.

use curvedflow::flow::{
    difference_gain_check, epsilon_sequence, fit_log_divergence, long_time_check, power_counting_check, DivergenceSummary, FlowConfig,
    FlowEngine, GridSpec,
};
use curvedflow::geometry::ManifoldModel;
use curvedflow::heatkernel::{
    certify_distance_moment, certify_gradient_bounds, certify_two_sided, verify_completeness, verify_semigroup, BoundParams, CheckMode,
    HeatKernel,
};
use curvedflow::mc::{derive_seed, stream, uniform_direction, McParams};
use curvedflow::quad::GaussLegendre;
use curvedflow::record::{Status, VerificationRecord};
use curvedflow::trees::{
    chain_closed_form, check_reduction_closure, enumerate_trees, f2r_closed_form, for_each_tree, EnumOptions, TreeClassSpec, WeightEngine,
    WeightParams,
};
use curvedflow_cli::config::{RunConfig, TaskKind};
use curvedflow_cli::run::run;
use curvedflow_cli::tasks::run_task;
use rand::Rng;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::Instant;

/// Seed of every stochastic part of the suite.
const SEED: u64 = 20240607;

/// Outcome of one criterion: pass flag and a one-line detail.
struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

type Criterion = fn() -> Result<Outcome, String>;

fn models() -> Vec<ManifoldModel> {
    vec![
        ManifoldModel::flat(4),
        ManifoldModel::sphere(2, 1.0),
        ManifoldModel::sphere(4, 1.0),
        ManifoldModel::hyperbolic(3, 1.0),
        ManifoldModel::hyperbolic(4, 1.0),
    ]
}

fn kind_name(m: &ManifoldModel) -> &'static str {
    match m.label().chars().next() {
        Some('R') => "flat",
        Some('S') => "sphere",
        _ => "hyperbolic",
    }
}

/// A validated single-task configuration on `m`.
fn task_config(m: &ManifoldModel, task: TaskKind, edit: impl FnOnce(&mut RunConfig)) -> Result<RunConfig, String> {
    let mut c = RunConfig::minimal();
    c.manifold.kind = kind_name(m).into();
    c.manifold.dim = m.dim;
    c.numeric.seed = SEED;
    c.task.run = vec![task];
    edit(&mut c);
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

fn failing(records: &[VerificationRecord]) -> Vec<String> {
    records.iter().filter(|r| r.status == Status::Fail).map(|r| format!("{} [{}] {}", r.name, r.manifold, r.note)).collect()
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

// ---------------------------------------------------------------------------
// 1. Heat-kernel axioms.

fn heat_kernel_axioms() -> Result<Outcome, String> {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for m in models() {
        let hk = HeatKernel::new(m);
        let x = m.origin();
        let mut dir = vec![0.0; m.dim];
        dir[0] = 1.0;
        for &t in &[0.05, 0.2, 1.0] {
            let c = verify_completeness(&hk, t, &x, CheckMode::Quadrature).map_err(e)?;
            let y = m.point_at(&x, t.sqrt(), &dir);
            let s = verify_semigroup(&hk, 0.5 * t, 0.5 * t, &x, &y, CheckMode::Quadrature).map_err(e)?;
            for r in [c, s] {
                let rel = (r.lhs / r.rhs - 1.0).abs();
                worst = worst.max(rel);
                if !(rel < 1e-3 && r.passed()) {
                    bad.push(format!("{} {} t={t}: {rel:e}", r.name, m.label()));
                }
            }
        }
    }
    Ok(Outcome::new(bad.is_empty(), format!("completeness + semigroup on 5 models × 3 scales, max rel error {worst:.2e} (< 1e-3) {}", bad.join("; "))))
}

// ---------------------------------------------------------------------------
// 2. Bound certification.

fn bound_certification() -> Result<Outcome, String> {
    let p = BoundParams::default();
    if (p.d_max - 5.0 * p.t_max.sqrt()).abs() > 1e-12 || p.t_min != 1e-2 || p.t_max != 1.0 {
        return Ok(Outcome::new(false, "grid does not span t ∈ [1e-2, 1], d ∈ [0, 5√t_max]"));
    }
    let mut names = BTreeSet::new();
    let mut worst_change: f64 = 0.0;
    let mut bad = Vec::new();
    for m in models() {
        let hk = HeatKernel::new(m);
        let (two, _) = certify_two_sided(&hk, &p).map_err(e)?;
        let (grad, _) = certify_gradient_bounds(&hk, &p).map_err(e)?;
        let (mom, _) = certify_distance_moment(&hk, 1, &p).map_err(e)?;
        for r in two.iter().chain(&grad).chain(std::iter::once(&mom)) {
            names.insert(r.name.clone());
            let change = r.fitted.get("rel_change").copied().unwrap_or(f64::NAN);
            worst_change = worst_change.max(change);
            let finite = r.fitted.values().all(|v| v.is_finite());
            if !(r.passed() && finite && change <= 0.1) {
                bad.push(format!("{} {} change={change:e}", r.name, m.label()));
            }
        }
    }
    let wanted = ["hk10-upper", "hk10-lower", "d-moment-s1", "D", "pat", "logD"];
    let missing: Vec<_> = wanted.iter().filter(|w| !names.contains(**w)).collect();
    Ok(Outcome::new(
        bad.is_empty() && missing.is_empty(),
        format!("{} constants on 5 models finite, max refinement change {worst_change:.3} (≤ 0.1) {} {}", names.len(), bad.join("; "), if missing.is_empty() { String::new() } else { format!("missing {missing:?}") }),
    ))
}

// ---------------------------------------------------------------------------
// 3. Tree combinatorics (brute-force oracle).

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

/// Rooted canonical string; slots print as their index, internal vertices as `*`.
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

/// Class size by exhaustive labeled-tree enumeration, deduplicated up to
/// relabeling of internal vertices.
fn brute_force_count(s: usize, l: usize) -> usize {
    if s == 1 {
        return 1;
    }
    let cap2 = if l == 0 { None } else { Some(6 * l + s - 4) };
    let max_internal = cap2.map_or(0, |c| c / 2) + s - 2;
    let mut seen = BTreeSet::new();
    for r in 0..=max_internal {
        let n = s + r;
        // The root and internal vertices may appear in the sequence; externals stay leaves.
        let alphabet: Vec<usize> = std::iter::once(0).chain(s..n).collect();
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
            let v2 = deg.iter().filter(|&&d| d == 2).count();
            let delta = usize::from(deg[0] == 1);
            let member = match cap2 {
                None => v2 == 0,
                Some(c) => 2 * (v2 + delta) <= c,
            };
            if internal_ok && member {
                seen.insert(ahu(&adj, 0, usize::MAX, s));
            }
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

fn tree_combinatorics() -> Result<Outcome, String> {
    let opts = EnumOptions::default();
    let mut count_bad = Vec::new();
    for s in 1..=4 {
        for l in 0..=1 {
            let ours = enumerate_trees(&TreeClassSpec::single(s, l).map_err(e)?, &opts).map_err(e)?.len();
            let brute = brute_force_count(s, l);
            if ours != brute {
                count_bad.push(format!("T^{s}_{l}: {ours} vs {brute}"));
            }
        }
    }
    let mut identity_trees = 0;
    let mut identity_bad = 0;
    // s = 1 is the single-vertex tree, for which the identity has no content.
    for s in 2..=6 {
        for l in 0..=2 {
            identity_trees += for_each_tree(&TreeClassSpec::single(s, l).map_err(e)?, &opts, |t| {
                let (lhs, rhs) = t.incidence_identity();
                if lhs != rhs {
                    identity_bad += 1;
                }
                Ok(())
            })
            .map_err(e)?;
        }
    }
    let (mut checked, mut violations) = (0, Vec::new());
    for s in 1..=4 {
        for l in 1..=2 {
            let rep = check_reduction_closure(s, l, &opts).map_err(e)?;
            checked += rep.checked;
            violations.extend(rep.violations.iter().map(|v| format!("T^{}_{} {} → {}", s + 2, l - 1, v.tree, v.reduced)));
        }
    }
    let pass = count_bad.is_empty() && identity_bad == 0 && violations.is_empty();
    Ok(Outcome::new(
        pass,
        format!(
            "counts vs brute force s≤4,l≤1: {}; incidence identity on {identity_trees} trees 2≤s≤6,l≤2: {} failures; reduction closure: {} of {checked} reductions leave the target class{}",
            if count_bad.is_empty() { "exact".to_string() } else { count_bad.join(", ") },
            identity_bad,
            violations.len(),
            violations.first().map(|v| format!(" (e.g. {v}; tree-level sources with a leaf root exceed the one-loop cap)")).unwrap_or_default()
        ),
    ))
}

// ---------------------------------------------------------------------------
// 4. Weight-factor oracle.

fn weight_factor_oracle() -> Result<Outcome, String> {
    let spec = TreeClassSpec::single(2, 1).map_err(e)?;
    let trees = enumerate_trees(&spec, &EnumOptions::default()).map_err(e)?;
    let chains: Vec<_> = trees.iter().filter(|t| t.is_chain()).collect();
    let (mut worst_sigma, mut worst_rel, mut n, mut stochastic, mut bad): (f64, f64, usize, usize, Vec<String>) = (0.0, 0.0, 0, 0, Vec::new());
    for m in models() {
        let hk = HeatKernel::new(m);
        let mut rng = stream(SEED, &format!("weights-{}", m.label()));
        for k in 0..20 {
            let x = m.origin();
            let cap = if m.diameter().is_finite() { (m.diameter() / 3.0).min(1.2) } else { 1.5 };
            let d = rng.gen_range(0.0..cap);
            let omega = uniform_direction(&mut rng, m.dim);
            let y = m.point_at(&x, d, &omega[..m.dim]);
            let tau = rng.gen_range(0.05..0.5);
            let t = rng.gen_range(0.1..1.0);
            let p = WeightParams { mass_sq: if k % 2 == 0 { 0.0 } else { 1.0 }, ..WeightParams::default() };
            let mc = McParams { samples: 16_000, seed: derive_seed(SEED, &format!("{}-{k}", m.label())), shards: 4 };
            let eng = WeightEngine::new(&hk, p, mc).map_err(e)?;
            let mut check = |what: String, value: f64, err: f64, exact: f64| {
                // Trees without internal vertices are deterministic (zero error).
                if err > 0.0 {
                    worst_sigma = worst_sigma.max((value - exact).abs() / err);
                    stochastic += 1;
                }
                let rel = err / value.abs();
                worst_rel = worst_rel.max(rel);
                n += 1;
                if !((value - exact).abs() <= 3.0 * err + 1e-12 * exact.abs() && rel <= 0.01) {
                    bad.push(format!("{} config {k} {what}: {value} ± {err} vs {exact}", m.label()));
                }
            };
            for tree in &chains {
                let w = eng.integrated_weight(tree, t, &[tau], &[x, y]).map_err(e)?;
                let (exact, _) = chain_closed_form(&hk, &p, tree.internal_count(), t, tau, d, None).map_err(e)?;
                check(tree.canonical_string(), w.value, w.mc_error, exact);
            }
            let g = eng.global_weight(&spec, t, &[tau], &[x, y]).map_err(e)?;
            check("global".into(), g.value, g.mc_error, f2r_closed_form(&hk, &p, 1, t, tau, d).map_err(e)?);
        }
    }
    Ok(Outcome::new(
        bad.is_empty(),
        format!(
            "{n} weights (5 models × 20 configs, {stochastic} by MC), max deviation {worst_sigma:.2}σ (≤ 3; {:.1} exceedances expected by chance), max MC rel error {worst_rel:.4} (≤ 0.01) {}",
            0.0027 * stochastic as f64,
            bad.join("; ")
        ),
    ))
}

// ---------------------------------------------------------------------------
// 5. Divergence rates (bubble oracle).

/// ∫_0^∞ f(r) dr on a logarithmic variable with composite Gauss–Legendre.
fn log_radial<F: Fn(f64) -> f64>(f: F, r_lo: f64, r_hi: f64) -> f64 {
    GaussLegendre::new(20).composite(|u| f(u.exp()) * u.exp(), r_lo.ln(), r_hi.ln(), 400)
}

/// Wick contractions of four external fields with two quartic vertices giving
/// the one-loop bubble, divided by 2!·(4!)².
fn bubble_symmetry_factor() -> f64 {
    fn count(free: &[usize]) -> u64 {
        let Some(&a) = free.first() else { return 1 };
        let vertex = |f: usize| if f < 4 { None } else { Some((f - 4) / 4) };
        free[1..]
            .iter()
            .filter(|&&b| match (vertex(a), vertex(b)) {
                (None, None) => false,
                (Some(x), Some(y)) => x != y,
                _ => true,
            })
            .map(|&b| count(&free.iter().copied().filter(|&f| f != a && f != b).collect::<Vec<_>>()))
            .sum()
    }
    count(&(0..12).collect::<Vec<_>>()) as f64 / (2.0 * 24.0 * 24.0)
}

fn divergence_rates() -> Result<Outcome, String> {
    let lambda = 1.0;
    let eps = epsilon_sequence(0.1, 11);
    if !(eps[eps.len() - 1] <= 1e-4 * 1.0001 && eps[eps.len() - 2] > 1e-4) {
        return Ok(Outcome::new(false, format!("ε-sequence ends at {:e}", eps[eps.len() - 1])));
    }
    let flat = ManifoldModel::flat(4);

    let a = DivergenceSummary::compute("a", flat, lambda, &eps).map_err(e)?;
    let p = a.power.clone().ok_or("no power fit for a")?;
    let a_oracle = lambda / (32.0 * PI * PI);
    let a_rel = (p.amplitude.abs() - a_oracle).abs() / a_oracle;
    let a_ok = (p.exponent - 1.0).abs() <= 0.02 && a_rel <= 0.01;

    let bubble = |e: f64| {
        log_radial(
            |r| {
                let c = ((-r * r / 4.0).exp() - (-r * r / (4.0 * e)).exp()) / (4.0 * PI * PI * r * r);
                2.0 * PI * PI * r.powi(3) * c * c
            },
            1e-4 * e.sqrt(),
            30.0,
        )
    };
    let sym = bubble_symmetry_factor();
    let oracle_values: Vec<f64> = eps.iter().map(|&e| sym * lambda * lambda * bubble(e)).collect();
    let b_oracle = fit_log_divergence(&eps, &oracle_values).map_err(e)?.slope;
    let c = DivergenceSummary::compute("c", flat, lambda, &eps).map_err(e)?;
    let c_rel = (c.coefficient - b_oracle).abs() / b_oracle.abs();
    let c_ok = c_rel <= 0.02;

    let xi_oracle = lambda / (192.0 * PI * PI);
    let mut xi_worst: f64 = 0.0;
    for kappa in [1.0, 2.0f64.sqrt()] {
        let xi = DivergenceSummary::compute("xi", ManifoldModel::sphere(4, kappa), lambda, &eps).map_err(e)?;
        xi_worst = xi_worst.max((xi.coefficient.abs() - xi_oracle).abs() / xi_oracle);
    }
    let xi_ok = xi_worst <= 0.05;
    Ok(Outcome::new(
        a_ok && c_ok && xi_ok,
        format!(
            "a: exponent {:.4} (1 ± 0.02), |A| rel err {a_rel:.1e} (≤ 1%); c: B = {:.6e} vs bubble {b_oracle:.6e}, rel err {c_rel:.1e} (≤ 2%); S⁴ ξ/R rel err {xi_worst:.1e} (≤ 5%)",
            p.exponent, c.coefficient
        ),
    ))
}

// ---------------------------------------------------------------------------
// 6. Proposition-1 envelopes.

fn envelopes() -> Result<Outcome, String> {
    let cfg = FlowConfig::new(ManifoldModel::flat(4), 1e-2, 0.0, 1.0).map_err(e)?;
    let engine = FlowEngine::new(cfg, McParams { seed: SEED, ..McParams::default() }).map_err(e)?;
    let spec = GridSpec::default();
    if spec.points != 10 || spec.stability > 0.1 {
        return Ok(Outcome::new(false, "grid spec is not 10×10 with 10% stability"));
    }
    let mut parts = Vec::new();
    let mut pass = true;
    for (n, l) in [(4, 0), (6, 0), (2, 1), (4, 1)] {
        let rep = power_counting_check(&engine, n, l, &spec).map_err(e)?;
        let max_degree = if n == 2 { l.saturating_sub(1) } else { l };
        let ok = rep.record().passed() && rep.degree <= max_degree && rep.change <= 0.1;
        pass &= ok;
        parts.push(format!("({n},{l}) deg {} change {:.3}{}", rep.degree, rep.change, if ok { "" } else { " FAIL" }));
    }
    let gain = difference_gain_check(&engine, 2, &spec).map_err(e)?;
    let ok = gain.record().passed();
    pass &= ok;
    parts.push(format!("difference gain change {:.3}{}", gain.change, if ok { "" } else { " FAIL" }));
    Ok(Outcome::new(pass, format!("10×10 grid, ε = 1e-2: {}", parts.join("; "))))
}

// ---------------------------------------------------------------------------
// 7. Cauchy in ε.

fn cauchy_in_epsilon() -> Result<Outcome, String> {
    let cfg = task_config(&ManifoldModel::flat(4), TaskKind::EpsilonRate, |c| {
        c.physics.epsilon = 0.05;
        c.task.t = vec![0.5];
        c.task.tau = 0.3;
        c.task.distance = 0.2;
        c.task.cauchy_steps = 7;
    })?;
    let out = run_task(&cfg, TaskKind::EpsilonRate);
    let fits = out.data.as_array().cloned().unwrap_or_default();
    let mut parts = Vec::new();
    for f in &fits {
        let fit = &f["fit"];
        let pinned = fit["pinned"].as_bool().unwrap_or(false);
        let zero = fit["differences"].as_array().is_some_and(|d| d.iter().all(|v| v.as_f64() == Some(0.0)));
        parts.push(if pinned {
            format!("({},{}) pinned{}", f["n"], f["l"], if zero { "" } else { " with nonzero differences" })
        } else {
            format!("({},{}) rate {}", f["n"], f["l"], fit["rate"])
        });
    }
    let bad = failing(&out.records);
    Ok(Outcome::new(bad.is_empty() && fits.len() == 4, format!("ε from 0.05, 7 halvings: {} {}", parts.join("; "), bad.join("; "))))
}

// ---------------------------------------------------------------------------
// 8. Long-time behaviour.

fn long_time() -> Result<Outcome, String> {
    let mut parts = Vec::new();
    let mut pass = true;
    for m in [ManifoldModel::flat(4), ManifoldModel::hyperbolic(3, 1.0)] {
        let r = long_time_check(m, 1e-2, 1.0, McParams { seed: SEED, ..McParams::default() }).map_err(e)?;
        pass &= r.passed() && r.lhs < (-5.0f64).exp();
        parts.push(format!("{} {:.2e}", m.label(), r.lhs));
    }
    Ok(Outcome::new(pass, format!("m² = 1, relative change t = 10 → 20: {} (< e^-5 = {:.2e})", parts.join(", "), (-5.0f64).exp())))
}

// ---------------------------------------------------------------------------
// 9. Scaling identities.

fn scaling_identities() -> Result<Outcome, String> {
    let mut names = BTreeSet::new();
    let mut bad = Vec::new();
    let mut count = 0;
    for m in models() {
        let cfg = task_config(&m, TaskKind::Scaling, |c| {
            c.task.rho = vec![0.5, 2.0, 3.0];
            c.task.t = vec![0.3];
        })?;
        let out = run_task(&cfg, TaskKind::Scaling);
        count += out.records.len();
        names.extend(out.records.iter().map(|r| r.name.clone()));
        bad.extend(failing(&out.records));
    }
    let wanted = ["kernel-scaling", "propagator-scaling", "relevant-scaling-2-1", "cas-scaling-4-0", "cas-scaling-6-0", "cas-scaling-2-1"];
    let missing: Vec<_> = wanted.iter().filter(|w| !names.iter().any(|n| n.starts_with(**w))).collect();
    Ok(Outcome::new(
        bad.is_empty() && missing.is_empty(),
        format!("{count} identities over 5 models, ρ ∈ {{0.5, 2, 3}} (1e-6 flat, 1e-4 curved) {} {}", bad.join("; "), if missing.is_empty() { String::new() } else { format!("missing {missing:?}") }),
    ))
}

// ---------------------------------------------------------------------------
// 10. Geometry.

fn geometry() -> Result<Outcome, String> {
    let mut bad = Vec::new();
    let mut worst_nsi: f64 = 0.0;
    let mut worst_majo: f64 = 0.0;
    for m in models() {
        let cfg = task_config(&m, TaskKind::Geometry, |c| c.task.pairs = 1000)?;
        let out = run_task(&cfg, TaskKind::Geometry);
        for r in &out.records {
            if r.name == "nsi" {
                worst_nsi = worst_nsi.max(r.lhs);
            } else if r.name.starts_with("majorant") {
                worst_majo = worst_majo.max(r.lhs);
            }
        }
        if out.records.len() != 9 {
            bad.push(format!("{}: {} records", m.label(), out.records.len()));
        }
        bad.extend(failing(&out.records));
    }
    Ok(Outcome::new(
        bad.is_empty(),
        format!("nsi max {worst_nsi:.1e} (≤ 1e-8, 10³ pairs/model); Taylor N ≤ 3 reconstructs; majorant ratio max {worst_majo:.3} (≤ 1) {}", bad.join("; ")),
    ))
}

// ---------------------------------------------------------------------------
// 11. Determinism.

fn determinism() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(e)?;
    let m = ManifoldModel::hyperbolic(3, 1.0);
    let mut listings = Vec::new();
    for k in 0..2 {
        let cfg = task_config(&m, TaskKind::Geometry, |c| {
            c.task.run = vec![
                TaskKind::VerifyCompleteness,
                TaskKind::ChainWeights,
                TaskKind::EnumerateTrees,
                TaskKind::LongTime,
                TaskKind::Scaling,
                TaskKind::Geometry,
                TaskKind::FlowIntegrate,
                TaskKind::Remainder,
            ];
            c.numeric.mc_samples = 20_000;
            c.task.t = vec![0.3];
            c.task.rho = vec![2.0];
            c.task.pairs = 200;
            c.task.orders = vec![[4, 0], [2, 1]];
            c.output.directory = Some(dir.path().join(format!("run{k}")));
        })?;
        let summary = run(&cfg).map_err(e)?;
        let mut files = Vec::new();
        for name in &summary.files {
            files.push((name.clone(), std::fs::read(summary.directory.join(name)).map_err(e)?));
        }
        listings.push(files);
    }
    let differing: Vec<_> = listings[0].iter().zip(&listings[1]).filter(|(a, b)| a != b).map(|(a, _)| a.0.clone()).collect();
    let same_len = listings[0].len() == listings[1].len();
    let bytes: usize = listings[0].iter().map(|f| f.1.len()).sum();
    Ok(Outcome::new(
        same_len && differing.is_empty(),
        format!("two full runs ({} files, {bytes} bytes, 8 tasks incl. Monte Carlo) byte-identical{}", listings[0].len(), if differing.is_empty() { String::new() } else { format!(" — differ: {differing:?}") }),
    ))
}

fn main() {
    // Ignore libtest-style arguments passed by `cargo test`.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, Criterion); 11] = [
        ("heat-kernel axioms", heat_kernel_axioms),
        ("bound certification", bound_certification),
        ("tree combinatorics", tree_combinatorics),
        ("weight-factor oracle", weight_factor_oracle),
        ("divergence rates", divergence_rates),
        ("envelope checks", envelopes),
        ("cauchy in epsilon", cauchy_in_epsilon),
        ("long-time behaviour", long_time),
        ("scaling identities", scaling_identities),
        ("geometry", geometry),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|flt| !name.contains(flt)) {
            continue;
        }
        let start = Instant::now();
        let outcome = f().unwrap_or_else(|err| Outcome::new(false, format!("error: {err}")));
        let secs = start.elapsed().as_secs_f64();
        failed += usize::from(!outcome.pass);
        println!("criterion {:>2} ({name}): {} — {} [{secs:.1} s]", i + 1, if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail.trim_end());
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
