//! Weight factors of trees.
//!
//! A line I = {a, b} at scale t carries C_{t_δ}(a, b) = e^{−m² t_δ} K(t_δ, a, b)
//! when internal and K(τ_δ, a, b) when external, with t_δ = (1 + δ)t. The
//! integrated weight integrates internal vertex positions over M and takes the
//! supremum over internal-line scales in [ε, t]; integration is importance
//! sampling with sequential heat-kernel proposals (each internal vertex is drawn
//! around its parent and around Brownian-bridge points towards the fixed
//! vertices of its subtree), and the supremum is taken on a joint logarithmic
//! product grid refined once around its argmax.

use super::{enumerate_trees, EnumOptions, Tree, TreeClassSpec};
use crate::error::{Error, Result};
use crate::geometry::ChartPoint;
use crate::heatkernel::{HeatKernel, PropagatorSpec, RadialSampler, RadialTable, TableCache};
use crate::mc::{derive_seed, estimate, Estimate, McParams, Rng};
use crate::quad::{gauss_kronrod, QuadOpts};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

/// Numerical parameters of weight-factor evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Slack δ in t_δ = (1 + δ)t.
    pub delta: f64,
    /// UV cutoff ε (lower end of the internal-line scale range).
    pub epsilon: f64,
    /// Mass squared m².
    pub mass_sq: f64,
    /// Logarithmic grid points per internal line (≥ 2; 8 by default).
    pub grid_points: usize,
    /// Relative Monte-Carlo error target for the reported value.
    pub rel_target: f64,
    /// Refuse joint scale grids with more points than this.
    pub max_grid: usize,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams { delta: 0.1, epsilon: 1e-2, mass_sq: 0.0, grid_points: 8, rel_target: 0.01, max_grid: 4096 }
    }
}

impl WeightParams {
    /// Check ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.epsilon > 0.0 && self.mass_sq >= 0.0 && self.grid_points >= 2 && self.rel_target > 0.0) {
            return Err(Error::Parameter(format!("invalid weight parameters {self:?}")));
        }
        Ok(())
    }

    fn scaled(&self, t: f64) -> f64 {
        (1.0 + self.delta) * t
    }
}

/// Scales of one weight-factor evaluation: t_I per internal line (edge order)
/// and τ per external vertex (slot order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleAssignment {
    pub internal: Vec<f64>,
    pub tau: Vec<f64>,
    pub delta: f64,
}

impl ScaleAssignment {
    /// Check ε ≤ t_I ≤ t and τ > 0.
    pub fn validate(&self, epsilon: f64, t: f64) -> Result<()> {
        let tol = 1e-12;
        for &ti in &self.internal {
            if !(ti >= epsilon * (1.0 - tol) && ti <= t * (1.0 + tol)) {
                return Err(Error::Domain(format!("line scale {ti} outside [{epsilon}, {t}]")));
            }
        }
        if self.tau.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Domain("test-function widths must be positive".into()));
        }
        Ok(())
    }
}

/// Value of an (integrated) weight factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFactorValue {
    pub value: f64,
    /// Monte-Carlo standard error (0 when no integration was needed).
    pub mc_error: f64,
    /// Internal-line scales at which the supremum was attained.
    pub argmax_scales: Vec<f64>,
    /// Samples behind the reported value.
    pub samples: usize,
}

impl WeightFactorValue {
    /// Relative Monte-Carlo error.
    pub fn rel_err(&self) -> f64 {
        self.mc_error / self.value.abs().max(1e-300)
    }
}

/// Logarithmic grid of `n` points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 || a == b {
        return vec![b];
    }
    let r = (b / a).ln();
    (0..n)
        .map(|k| if k + 1 == n { b } else { a * (r * k as f64 / (n - 1) as f64).exp() })
        .collect()
}

/// Scale on the two cells adjacent to grid index `k`: three log-spaced
/// interior points per cell plus the grid point itself.
fn refine_around(grid: &[f64], k: usize) -> Vec<f64> {
    let mut pts = vec![grid[k]];
    for (lo, hi) in [(k.checked_sub(1), Some(k)), (Some(k), (k + 1 < grid.len()).then_some(k + 1))] {
        if let (Some(lo), Some(hi)) = (lo, hi) {
            let r = (grid[hi] / grid[lo]).ln();
            for j in 1..4 {
                pts.push(grid[lo] * (r * j as f64 / 4.0).exp());
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Iterate the product grid `grids[0] × grids[1] × …` as index vectors.
fn product_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out.into_iter().flat_map(|p| (0..n).map(move |i| [p.clone(), vec![i]].concat())).collect();
    }
    out
}

/// How internal lines are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    /// C_{t_δ} on internal lines.
    Standard,
    /// C_{t_δ} + ∫₁^T C_{t′} dt′ on internal lines (T = effective upper limit).
    LongTime { t_upper: f64 },
}

/// Radial factor of one line.
#[derive(Debug, Clone)]
struct LineFactor {
    table: Arc<RadialTable>,
    shift: f64,
    tail: Option<Arc<RadialTable>>,
}

impl LineFactor {
    fn ln_value(&self, d: f64) -> f64 {
        let main = self.shift + self.table.ln_eval_tail(d);
        match &self.tail {
            None => main,
            Some(g) => {
                let b = g.ln_eval_tail(d);
                let m = main.max(b);
                m + ((main - m).exp() + (b - m).exp()).ln()
            }
        }
    }
}

/// One mixture component of an internal vertex proposal.
#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    /// `None`: centred on the parent; `Some((anchor, frac))`: bridge point towards the anchor.
    bridge: Option<(usize, f64)>,
    sampler: Arc<RadialSampler>,
}

#[derive(Debug, Clone)]
struct VertexProposal {
    vertex: usize,
    parent: usize,
    components: Vec<Component>,
}

/// Evaluator of weight factors on one manifold.
#[derive(Debug)]
pub struct WeightEngine {
    hk: HeatKernel,
    params: WeightParams,
    mc: McParams,
    cache: TableCache,
    samplers: Mutex<BTreeMap<u64, Arc<RadialSampler>>>,
    tails: Mutex<BTreeMap<(u64, u64), Arc<RadialTable>>>,
}

impl WeightEngine {
    /// Engine with the given numerical parameters and Monte-Carlo budget.
    pub fn new(hk: &HeatKernel, params: WeightParams, mc: McParams) -> Result<Self> {
        params.validate()?;
        Ok(WeightEngine {
            hk: *hk,
            params,
            mc,
            cache: TableCache::new(hk, 2048),
            samplers: Mutex::new(BTreeMap::new()),
            tails: Mutex::new(BTreeMap::new()),
        })
    }

    /// Parameters in use.
    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    /// The kernel evaluator.
    pub fn kernel(&self) -> &HeatKernel {
        &self.hk
    }

    fn sampler(&self, t: f64) -> Result<Arc<RadialSampler>> {
        let key = t.to_bits();
        if let Some(s) = self.samplers.lock().expect("sampler cache lock").get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(RadialSampler::parametrix(&self.hk, t)?);
        self.samplers.lock().expect("sampler cache lock").insert(key, s.clone());
        Ok(s)
    }

    /// Table of ln ∫₁^T e^{−m²t′} K(t′, r) dt′.
    fn tail_table(&self, t_upper: f64) -> Result<Arc<RadialTable>> {
        let key = (t_upper.to_bits(), self.params.mass_sq.to_bits());
        if let Some(g) = self.tails.lock().expect("tail cache lock").get(&key) {
            return Ok(g.clone());
        }
        let spec = PropagatorSpec::new(1.0, t_upper, self.params.mass_sq)?;
        let r_max = RadialTable::default_rmax(&self.hk, t_upper).min(25.0);
        let g = Arc::new(RadialTable::from_ln_fn(&self.hk, t_upper, r_max, 512, |r| {
            self.hk.propagator_radial(&spec, r).map_or(f64::NEG_INFINITY, f64::ln)
        })?);
        self.tails.lock().expect("tail cache lock").insert(key, g.clone());
        Ok(g)
    }

    fn check_inputs(&self, tree: &Tree, fixed: &[ChartPoint], tau: &[f64]) -> Result<()> {
        if fixed.len() != tree.s() || tau.len() != tree.s() - tree.roots() {
            return Err(Error::Parameter(format!(
                "{tree}: need {} fixed points and {} widths, got {} and {}",
                tree.s(),
                tree.s() - tree.roots(),
                fixed.len(),
                tau.len()
            )));
        }
        for x in fixed {
            self.hk.model.check(x)?;
        }
        if tau.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Domain("test-function widths must be positive".into()));
        }
        Ok(())
    }

    /// Pointwise weight factor 𝓕(t_ℐ, τ; T(x₁, y, z)) at explicit positions of all
    /// vertices (slot vertices first, then internal ones), evaluated exactly.
    pub fn pointwise(&self, tree: &Tree, positions: &[ChartPoint], scales: &ScaleAssignment) -> Result<f64> {
        if positions.len() != tree.vertex_count() {
            return Err(Error::Parameter(format!("{tree}: need {} positions", tree.vertex_count())));
        }
        let lines = tree.internal_lines();
        if scales.internal.len() != lines.len() || scales.tau.len() != tree.s() - tree.roots() {
            return Err(Error::Parameter(format!("{tree}: scale assignment has the wrong shape")));
        }
        scales.validate(0.0, f64::INFINITY)?;
        let m = &self.hk.model;
        let mut ln = 0.0;
        let mut k = 0;
        for (e, &(a, b)) in tree.edges().iter().enumerate() {
            let d = m.distance(&positions[a], &positions[b])?;
            if tree.is_external_line(e) {
                let ext = if tree.is_external(a) { a } else { b };
                ln += self.hk.ln_radial((1.0 + scales.delta) * scales.tau[ext - tree.roots()], d)?;
            } else {
                let ts = (1.0 + scales.delta) * scales.internal[k];
                ln += -self.params.mass_sq * ts + self.hk.ln_radial(ts, d)?;
                k += 1;
            }
        }
        Ok(ln.exp())
    }

    fn line_factors(&self, tree: &Tree, internal: &[f64], tau: &[f64], mode: Mode) -> Result<Vec<(LineFactor, f64)>> {
        let mut out = Vec::with_capacity(tree.edges().len());
        let mut k = 0;
        let tail = match mode {
            Mode::LongTime { t_upper } if t_upper > 1.0 => Some(self.tail_table(t_upper)?),
            _ => None,
        };
        for (e, &(a, b)) in tree.edges().iter().enumerate() {
            if tree.is_external_line(e) {
                let ext = if tree.is_external(a) { a } else { b };
                let ts = self.params.scaled(tau[ext - tree.roots()]);
                out.push((LineFactor { table: self.cache.get(ts)?, shift: 0.0, tail: None }, ts));
            } else {
                let ts = self.params.scaled(internal[k]);
                k += 1;
                out.push((
                    LineFactor { table: self.cache.get(ts)?, shift: -self.params.mass_sq * ts, tail: tail.clone() },
                    ts,
                ));
            }
        }
        Ok(out)
    }

    /// Proposal plan: internal vertices in breadth-first order from x₁.
    fn proposals(&self, tree: &Tree, line_times: &[f64], mode: Mode) -> Result<Vec<VertexProposal>> {
        let n = tree.vertex_count();
        let s = tree.s();
        let adj = tree.adjacency();
        let edge_time = |a: usize, b: usize| -> f64 {
            let key = (a.min(b), a.max(b));
            let e = tree.edges().iter().position(|&x| x == key).expect("edge exists");
            line_times[e]
        };
        let mut parent = vec![usize::MAX; n];
        let mut order = Vec::new();
        let mut queue = std::collections::VecDeque::from([0usize]);
        parent[0] = 0;
        while let Some(v) = queue.pop_front() {
            if v >= s {
                order.push(v);
            }
            for &w in &adj[v] {
                if parent[w] == usize::MAX {
                    parent[w] = v;
                    queue.push_back(w);
                }
            }
        }
        let tail_time = match mode {
            Mode::LongTime { t_upper } if t_upper > 1.0 => {
                Some(t_upper.min(1.0 + 1.0 / self.params.mass_sq.max(1e-12)))
            }
            _ => None,
        };
        let mut plan = Vec::new();
        for &z in &order {
            let p = parent[z];
            // Fixed vertices first reached in z's subtree, with path times.
            let mut anchors = Vec::new();
            let mut stack = vec![(z, p, 0.0)];
            while let Some((v, from, acc)) = stack.pop() {
                for &w in &adj[v] {
                    if w == from {
                        continue;
                    }
                    let tt = acc + edge_time(v, w);
                    if w < s {
                        anchors.push((w, tt));
                    } else {
                        stack.push((w, v, tt));
                    }
                }
            }
            anchors.sort_by(|a, b| a.0.cmp(&b.0));
            let mut parent_times = vec![edge_time(p, z)];
            parent_times.extend(tail_time);
            let mut comps = Vec::new();
            let kernel_w = 0.3 / parent_times.len() as f64;
            let bridge_w = 0.7 / (parent_times.len() * anchors.len()) as f64;
            for &tp in &parent_times {
                comps.push(Component { weight: kernel_w, bridge: None, sampler: self.sampler(tp)? });
                for &(a, ta) in &anchors {
                    let tb = tp * ta / (tp + ta);
                    comps.push(Component { weight: bridge_w, bridge: Some((a, tp / (tp + ta))), sampler: self.sampler(tb)? });
                }
            }
            plan.push(VertexProposal { vertex: z, parent: p, components: comps });
        }
        Ok(plan)
    }

    /// ∫_z 𝓕 at fixed scales (internal vertices integrated by importance sampling).
    fn integrate_at(
        &self,
        tree: &Tree,
        fixed: &[ChartPoint],
        internal: &[f64],
        tau: &[f64],
        mode: Mode,
        mc: &McParams,
    ) -> Result<Estimate> {
        let m = self.hk.model;
        let factors = self.line_factors(tree, internal, tau, mode)?;
        let edges = tree.edges().to_vec();
        if tree.internal_count() == 0 {
            // Exact kernels: no tables needed without integration.
            let mut ln = 0.0;
            for (&(a, b), (f, ts)) in edges.iter().zip(&factors) {
                let d = m.distance(&fixed[a], &fixed[b])?;
                let main = f.shift + self.hk.ln_radial(*ts, d)?;
                ln += match &f.tail {
                    None => main,
                    Some(g) => {
                        let b = g.ln_eval_tail(d);
                        let top = main.max(b);
                        top + ((main - top).exp() + (b - top).exp()).ln()
                    }
                };
            }
            return Ok(Estimate { mean: ln.exp(), std_err: 0.0, samples: 0 });
        }
        let times: Vec<f64> = factors.iter().map(|f| f.1).collect();
        let plan = self.proposals(tree, &times, mode)?;
        let n = tree.vertex_count();
        let sample = |rng: &mut Rng| -> f64 {
            let mut pos: Vec<ChartPoint> = Vec::with_capacity(n);
            pos.extend_from_slice(fixed);
            pos.resize(n, fixed[0]);
            let mut ln_w = 0.0;
            let mut centers = Vec::new();
            for vp in &plan {
                let p = pos[vp.parent];
                centers.clear();
                for c in &vp.components {
                    let center = match c.bridge {
                        None => p,
                        Some((a, frac)) => m.geodesic_point(&p, &pos[a], frac).unwrap_or(p),
                    };
                    centers.push(center);
                }
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = vp.components.len() - 1;
                for (i, c) in vp.components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let (z, _) = vp.components[pick].sampler.sample(rng, &centers[pick]);
                let dens: f64 = vp
                    .components
                    .iter()
                    .zip(&centers)
                    .map(|(c, ctr)| c.weight * c.sampler.density(m.distance_unchecked(ctr, &z)))
                    .sum();
                ln_w -= dens.ln();
                pos[vp.vertex] = z;
            }
            for (&(a, b), (f, _)) in edges.iter().zip(&factors) {
                ln_w += f.ln_value(m.distance_unchecked(&pos[a], &pos[b]));
            }
            ln_w.exp()
        };
        Ok(estimate(mc, sample))
    }

    /// Final estimate with the relative-error target: the budget is quadrupled
    /// (at most three times) while the target is missed.
    fn integrate_to_target(
        &self,
        tree: &Tree,
        fixed: &[ChartPoint],
        internal: &[f64],
        tau: &[f64],
        mode: Mode,
        seed: u64,
    ) -> Result<Estimate> {
        let mut mc = McParams { seed, ..self.mc };
        let mut e = self.integrate_at(tree, fixed, internal, tau, mode, &mc)?;
        for _ in 0..3 {
            if e.std_err == 0.0 || e.rel_err() <= self.params.rel_target {
                break;
            }
            mc.samples *= 4;
            e = self.integrate_at(tree, fixed, internal, tau, mode, &mc)?;
        }
        Ok(e)
    }

    fn seeds(&self, tree: &Tree) -> (u64, u64) {
        let id = tree.canonical_string();
        (derive_seed(self.mc.seed, &format!("{id}|scan")), derive_seed(self.mc.seed, &format!("{id}|final")))
    }

    /// Evaluate ∫_z 𝓕 on the product of per-line grids with common random
    /// numbers and return (values, index of the maximum).
    fn scan(
        &self,
        tree: &Tree,
        fixed: &[ChartPoint],
        grids: &[Vec<f64>],
        tau: &[f64],
        mode: Mode,
        mc: &McParams,
    ) -> Result<(Vec<Vec<f64>>, Vec<Estimate>, usize)> {
        let sizes: Vec<usize> = grids.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        if total > self.params.max_grid {
            return Err(Error::SizeGuard(format!("{tree}: joint scale grid of {total} points exceeds {}", self.params.max_grid)));
        }
        let mut points = Vec::with_capacity(total);
        let mut ests = Vec::with_capacity(total);
        for idx in product_indices(&sizes) {
            let sc: Vec<f64> = idx.iter().zip(grids).map(|(&i, g)| g[i]).collect();
            ests.push(self.integrate_at(tree, fixed, &sc, tau, mode, mc)?);
            points.push(sc);
        }
        let best = (0..ests.len()).max_by(|&a, &b| ests[a].mean.total_cmp(&ests[b].mean)).unwrap_or(0);
        Ok((points, ests, best))
    }

    fn sup_weight(&self, tree: &Tree, t_max: f64, fixed: &[ChartPoint], tau: &[f64], mode: Mode) -> Result<WeightFactorValue> {
        self.check_inputs(tree, fixed, tau)?;
        let eps = self.params.epsilon;
        if !(t_max >= eps) {
            return Err(Error::Domain(format!("flow scale {t_max} below the cutoff {eps}")));
        }
        let lines = tree.internal_lines().len();
        let (scan_seed, final_seed) = self.seeds(tree);
        if lines == 0 {
            let e = self.integrate_to_target(tree, fixed, &[], tau, mode, final_seed)?;
            return Ok(WeightFactorValue { value: e.mean, mc_error: e.std_err, argmax_scales: vec![], samples: e.samples });
        }
        let base = log_grid(eps, t_max, self.params.grid_points);
        let scan_mc = McParams { seed: scan_seed, samples: (self.mc.samples / 8).max(1000), ..self.mc };
        let (points, _, best) = self.scan(tree, fixed, &vec![base.clone(); lines], tau, mode, &scan_mc)?;
        let refined: Vec<Vec<f64>> = points[best]
            .iter()
            .map(|&v| {
                let k = base.iter().position(|&g| g == v).expect("argmax lies on the base grid");
                refine_around(&base, k)
            })
            .collect();
        let (points, _, best) = self.scan(tree, fixed, &refined, tau, mode, &scan_mc)?;
        let arg = points[best].clone();
        let e = self.integrate_to_target(tree, fixed, &arg, tau, mode, final_seed)?;
        Ok(WeightFactorValue { value: e.mean, mc_error: e.std_err, argmax_scales: arg, samples: e.samples })
    }

    /// Integrated weight 𝓕(t, τ; T; x₁, y): supremum over internal-line scales
    /// in [ε, t] of the integral over internal vertices. `fixed` holds the slot
    /// positions (roots, then externals) and `tau` the external widths.
    pub fn integrated_weight(&self, tree: &Tree, t: f64, tau: &[f64], fixed: &[ChartPoint]) -> Result<WeightFactorValue> {
        self.sup_weight(tree, t, fixed, tau, Mode::Standard)
    }

    /// Integrated weight with the supremum over the explicit per-line grid
    /// `grid` (no refinement); estimates at shared grid points coincide across
    /// calls, so nested grids give monotone suprema.
    pub fn integrated_weight_on_grid(
        &self,
        tree: &Tree,
        grid: &[f64],
        tau: &[f64],
        fixed: &[ChartPoint],
    ) -> Result<WeightFactorValue> {
        self.check_inputs(tree, fixed, tau)?;
        let lines = tree.internal_lines().len();
        let (_, final_seed) = self.seeds(tree);
        let mc = McParams { seed: final_seed, ..self.mc };
        let (points, ests, best) = self.scan(tree, fixed, &vec![grid.to_vec(); lines], tau, Mode::Standard, &mc)?;
        Ok(WeightFactorValue {
            value: ests[best].mean,
            mc_error: ests[best].std_err,
            argmax_scales: points[best].clone(),
            samples: ests[best].samples,
        })
    }

    /// Integrated weights of every tree of the class, keyed by canonical string.
    pub fn tree_weights(
        &self,
        spec: &TreeClassSpec,
        t: f64,
        tau: &[f64],
        fixed: &[ChartPoint],
    ) -> Result<Vec<(String, WeightFactorValue)>> {
        enumerate_trees(spec, &EnumOptions::default())?
            .iter()
            .map(|tr| Ok((tr.canonical_string(), self.integrated_weight(tr, t, tau, fixed)?)))
            .collect()
    }

    /// Global weight 𝓕_{s,l}(t, τ) = Σ over the class of integrated weights;
    /// 𝓕_{1,l} ≡ 1.
    pub fn global_weight(&self, spec: &TreeClassSpec, t: f64, tau: &[f64], fixed: &[ChartPoint]) -> Result<WeightFactorValue> {
        if spec.s == 1 && !spec.twice_rooted {
            return Ok(WeightFactorValue { value: 1.0, mc_error: 0.0, argmax_scales: vec![], samples: 0 });
        }
        let ws = self.tree_weights(spec, t, tau, fixed)?;
        let value = ws.iter().map(|w| w.1.value).sum();
        let var: f64 = ws.iter().map(|w| w.1.mc_error.powi(2)).sum();
        let samples = ws.iter().map(|w| w.1.samples).sum();
        Ok(WeightFactorValue { value, mc_error: var.sqrt(), argmax_scales: vec![], samples })
    }

    fn long_time_upper(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(Error::Domain(format!("long-time weights need t ≥ 1, got {t}")));
        }
        if t.is_infinite() {
            if self.params.mass_sq <= 0.0 {
                return Err(Error::Divergence("∫₁^∞ C_t′ dt′ diverges for m² = 0".into()));
            }
            // e^{−m²(t′−1)} < e^{−60} beyond this point.
            return Ok(1.0 + 60.0 / self.params.mass_sq);
        }
        Ok(t)
    }

    /// Long-time weight of one tree: internal lines carry C_{t_δ} + ∫₁^t C_{t′} dt′
    /// with the supremum over line scales in [ε, 1]. `t = ∞` is accepted for m² > 0.
    pub fn long_time_tree_weight(&self, tree: &Tree, t: f64, tau: &[f64], fixed: &[ChartPoint]) -> Result<WeightFactorValue> {
        let t_upper = self.long_time_upper(t)?;
        self.sup_weight(tree, 1.0, fixed, tau, Mode::LongTime { t_upper })
    }

    /// Long-time global weight 𝓕^t_{s,l}(τ).
    pub fn long_time_weight(&self, spec: &TreeClassSpec, t: f64, tau: &[f64], fixed: &[ChartPoint]) -> Result<WeightFactorValue> {
        let t_upper = self.long_time_upper(t)?;
        if spec.s == 1 && !spec.twice_rooted {
            return Ok(WeightFactorValue { value: 1.0, mc_error: 0.0, argmax_scales: vec![], samples: 0 });
        }
        let mut value = 0.0;
        let mut var = 0.0;
        let mut samples = 0;
        for tr in enumerate_trees(spec, &EnumOptions::default())? {
            let w = self.sup_weight(&tr, 1.0, fixed, tau, Mode::LongTime { t_upper })?;
            value += w.value;
            var += w.mc_error.powi(2);
            samples += w.samples;
        }
        Ok(WeightFactorValue { value, mc_error: var.sqrt(), argmax_scales: vec![], samples })
    }
}

/// e^{−m²S} K(τ_δ + S, d) as a function of the summed line scale S.
fn chain_ln(hk: &HeatKernel, p: &WeightParams, tau_d: f64, d: f64, s_sum: f64) -> Result<f64> {
    Ok(-p.mass_sq * s_sum + hk.ln_radial(tau_d + s_sum, d)?)
}

/// Closed form of the integrated weight of the s = 2 chain with `n` internal
/// lines (semigroup collapse): sup over t_I ∈ [ε, t] of
/// e^{−m² Σ t_{I,δ}} K(τ_δ + Σ t_{I,δ}, d). With `grid`, the supremum is over the
/// joint product grid; otherwise over the continuum (by a scan in ln S followed
/// by golden-section refinement). Returns the value and the maximizing scales.
pub fn chain_closed_form(
    hk: &HeatKernel,
    p: &WeightParams,
    n: usize,
    t: f64,
    tau: f64,
    d: f64,
    grid: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let tau_d = p.scaled(tau);
    if n == 0 {
        return Ok((hk.radial(tau_d, d)?, vec![]));
    }
    if let Some(g) = grid {
        let sizes = vec![g.len(); n];
        let total: usize = sizes.iter().product();
        if total > p.max_grid {
            return Err(Error::SizeGuard(format!("joint grid of {total} points exceeds {}", p.max_grid)));
        }
        let mut best = (f64::NEG_INFINITY, vec![]);
        for idx in product_indices(&sizes) {
            let sc: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
            let v = chain_ln(hk, p, tau_d, d, p.scaled(sc.iter().sum()))?;
            if v > best.0 {
                best = (v, sc);
            }
        }
        return Ok((best.0.exp(), best.1));
    }
    let (lo, hi) = ((n as f64 * p.scaled(p.epsilon)).ln(), (n as f64 * p.scaled(t)).ln());
    if hi <= lo {
        let v = chain_ln(hk, p, tau_d, d, hi.exp())?;
        return Ok((v.exp(), vec![t; n]));
    }
    let f = |u: f64| chain_ln(hk, p, tau_d, d, u.exp()).unwrap_or(f64::NEG_INFINITY);
    let m = 200;
    let h = (hi - lo) / m as f64;
    let k = (0..=m).max_by(|&a, &b| f(lo + a as f64 * h).total_cmp(&f(lo + b as f64 * h))).unwrap_or(0);
    let (mut a, mut b) = ((lo + (k as f64 - 1.0) * h).max(lo), (lo + (k as f64 + 1.0) * h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if f(c) >= f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    let u_best = [lo, hi, 0.5 * (a + b)].into_iter().max_by(|x, y| f(*x).total_cmp(&f(*y))).expect("non-empty");
    let ti = u_best.exp() / (n as f64 * (1.0 + p.delta));
    Ok((f(u_best).exp(), vec![ti; n]))
}

/// Closed form of 𝓕_{2,l}(t, τ; x, y): the sum over the chain trees with
/// n = 0 … 3l − 2 internal lines (only n = 0 at l = 0).
pub fn f2r_closed_form(hk: &HeatKernel, p: &WeightParams, l: usize, t: f64, tau: f64, d: f64) -> Result<f64> {
    let n_max = if l == 0 { 0 } else { 3 * l - 2 };
    (0..=n_max).map(|n| Ok(chain_closed_form(hk, p, n, t, tau, d, None)?.0)).sum()
}

/// Closed form of the long-time weight of the chain with `n ≤ 1` internal lines:
/// sup_{t_I ∈ [ε,1]} e^{−m²t_{I,δ}} K(τ_δ + t_{I,δ}, d) + ∫₁^t e^{−m²t′} K(τ_δ + t′, d) dt′.
pub fn chain_long_time_closed_form(hk: &HeatKernel, p: &WeightParams, n: usize, t: f64, tau: f64, d: f64) -> Result<f64> {
    match n {
        0 => Ok(hk.radial(p.scaled(tau), d)?),
        1 => {
            if !(t >= 1.0) {
                return Err(Error::Domain(format!("long-time weights need t ≥ 1, got {t}")));
            }
            if t.is_infinite() && p.mass_sq <= 0.0 {
                return Err(Error::Divergence("∫₁^∞ C_t′ dt′ diverges for m² = 0".into()));
            }
            let head = chain_closed_form(hk, p, 1, 1.0, tau, d, None)?.0;
            let t_upper = if t.is_infinite() { 1.0 + 60.0 / p.mass_sq } else { t };
            if t_upper <= 1.0 {
                return Ok(head);
            }
            let tau_d = p.scaled(tau);
            let q = gauss_kronrod(
                |u: f64| {
                    let tp = u.exp();
                    tp * (-p.mass_sq * tp + hk.ln_radial(tau_d + tp, d).unwrap_or(f64::NEG_INFINITY)).exp()
                },
                0.0,
                t_upper.ln(),
                QuadOpts::rel(1e-10).with_abs(1e-300),
            )?;
            Ok(head + q.value)
        }
        _ => Err(Error::Unsupported("long-time chain closed form is implemented for n ≤ 1".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldModel;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn log_grid_endpoints_and_refinement() {
        let g = log_grid(0.01, 1.0, 8);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[7], 1.0);
        let r = refine_around(&g, 7);
        assert_eq!(r.len(), 4);
        assert_eq!(*r.last().unwrap(), 1.0);
        assert_eq!(refine_around(&g, 3).len(), 7);
    }

    #[test]
    fn pointwise_single_line_is_a_kernel() {
        let m = ManifoldModel::flat(4);
        let hk = HeatKernel::new(m);
        let eng = WeightEngine::new(&hk, WeightParams::default(), McParams::default()).unwrap();
        let tree = Tree::new(2, 1, 2, vec![(0, 1)]).unwrap();
        let o = m.origin();
        let sc = ScaleAssignment { internal: vec![], tau: vec![0.3], delta: 0.1 };
        let w = eng.pointwise(&tree, &[o, o], &sc).unwrap();
        assert_relative_eq!(w, (4.0 * PI * 0.33f64).powi(-2), max_relative = 1e-14);
    }

    #[test]
    fn flat_chain_by_sampling_matches_semigroup() {
        let m = ManifoldModel::flat(4);
        let hk = HeatKernel::new(m);
        let p = WeightParams { mass_sq: 1.0, ..WeightParams::default() };
        let eng = WeightEngine::new(&hk, p, McParams { samples: 20_000, seed: 1, shards: 4 }).unwrap();
        let tree = Tree::new(2, 1, 3, vec![(0, 2), (2, 1)]).unwrap();
        let x = m.origin();
        let y = m.point_at(&x, 0.7, &[0.0, 1.0, 0.0, 0.0]);
        let w = eng.integrated_weight(&tree, 0.5, &[0.2], &[x, y]).unwrap();
        let (exact, _) = chain_closed_form(&hk, &p, 1, 0.5, 0.2, 0.7, None).unwrap();
        assert!((w.value - exact).abs() < 3.0 * w.mc_error + 3e-3 * exact, "{w:?} vs {exact}");
        assert!(w.rel_err() < 0.01);
    }

    #[test]
    fn chain_closed_form_grid_vs_continuum() {
        let hk = HeatKernel::new(ManifoldModel::hyperbolic(3, 1.0));
        let p = WeightParams::default();
        let g = log_grid(p.epsilon, 1.0, 8);
        let (cont, _) = chain_closed_form(&hk, &p, 2, 1.0, 0.1, 1.5, None).unwrap();
        let (grid, _) = chain_closed_form(&hk, &p, 2, 1.0, 0.1, 1.5, Some(&g)).unwrap();
        assert!(grid <= cont * (1.0 + 1e-12));
        assert!(grid > 0.9 * cont);
        // Coincident points: the supremum sits at the smallest scales.
        let (_, arg) = chain_closed_form(&hk, &p, 1, 1.0, 0.1, 0.0, None).unwrap();
        assert_relative_eq!(arg[0], p.epsilon, max_relative = 1e-6);
    }

    #[test]
    fn long_time_errors() {
        let hk = HeatKernel::new(ManifoldModel::flat(4));
        let p = WeightParams::default();
        assert!(matches!(chain_long_time_closed_form(&hk, &p, 1, f64::INFINITY, 0.1, 0.5), Err(Error::Divergence(_))));
        assert!(chain_long_time_closed_form(&hk, &p, 1, 0.5, 0.1, 0.5).is_err());
        let at_one = chain_long_time_closed_form(&hk, &p, 1, 1.0, 0.1, 0.5).unwrap();
        assert_relative_eq!(at_one, chain_closed_form(&hk, &p, 1, 1.0, 0.1, 0.5, None).unwrap().0, max_relative = 1e-14);
    }
}
