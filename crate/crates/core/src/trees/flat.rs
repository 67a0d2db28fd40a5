//! Exact weight factors on flat ℝⁿ.
//!
//! On flat space every line factor is a Gaussian, so integrating the internal
//! vertices of a tree is a Gaussian integral: with conductances w = 1/(4a) on
//! the lines (a the line's time), the internal block A of the weighted graph
//! Laplacian gives the factor (π^r / det A)^{n/2}, and the Schur complement S
//! on the fixed vertices gives exp(−Σ_{i<j} (−S_ij)|p_i − p_j|²). The
//! supremum over internal-line scales is approached from below by coordinate
//! ascent on the per-line logarithmic grid, so the resulting global weights are
//! certified lower bounds of the grid supremum.

use super::{enumerate_trees, log_grid, EnumOptions, Tree, TreeClassSpec, WeightFactorValue, WeightParams};
use crate::error::{Error, Result};
use crate::geometry::ChartPoint;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

/// Exact flat-space weight evaluator.
#[derive(Debug)]
pub struct FlatWeights {
    dim: usize,
    params: WeightParams,
    classes: Mutex<BTreeMap<(usize, usize, bool), Arc<Vec<Tree>>>>,
}

impl FlatWeights {
    /// Evaluator on ℝ^dim.
    pub fn new(dim: usize, params: WeightParams) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(Error::Parameter(format!("dimension {dim} outside 2..=4")));
        }
        params.validate()?;
        Ok(FlatWeights { dim, params, classes: Mutex::new(BTreeMap::new()) })
    }

    /// Numerical parameters.
    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    fn class(&self, spec: &TreeClassSpec) -> Result<Arc<Vec<Tree>>> {
        let key = (spec.s, spec.l, spec.twice_rooted);
        if let Some(c) = self.classes.lock().expect("class cache lock").get(&key) {
            return Ok(c.clone());
        }
        let c = Arc::new(enumerate_trees(spec, &EnumOptions::default())?);
        self.classes.lock().expect("class cache lock").insert(key, c.clone());
        Ok(c)
    }

    /// ln of the integrated weight at fixed internal-line scales (edge order of
    /// the internal lines) and external widths `tau` (slot order).
    pub fn ln_weight_at(&self, tree: &Tree, fixed: &[ChartPoint], internal: &[f64], tau: &[f64]) -> Result<f64> {
        let lines = tree.internal_lines();
        if fixed.len() != tree.s() || tau.len() != tree.s() - tree.roots() || internal.len() != lines.len() {
            return Err(Error::Parameter(format!("{tree}: inputs have the wrong shape")));
        }
        let d = self.delta_factor();
        let mut times = Vec::with_capacity(tree.edges().len());
        let mut k = 0;
        let mut ln = 0.0;
        for (e, &(a, b)) in tree.edges().iter().enumerate() {
            let time = if tree.is_external_line(e) {
                let ext = if tree.is_external(a) { a } else { b };
                d * tau[ext - tree.roots()]
            } else {
                let ts = d * internal[k];
                k += 1;
                ln -= self.params.mass_sq * ts;
                ts
            };
            ln -= 0.5 * self.dim as f64 * (4.0 * PI * time).ln();
            times.push(time);
        }
        Ok(ln + self.ln_gaussian_integral(tree, fixed, &times))
    }

    fn delta_factor(&self) -> f64 {
        1.0 + self.params.delta
    }

    /// ln ∫ exp(−Σ_e |z_a − z_b|²/(4 a_e)) over the internal vertices.
    fn ln_gaussian_integral(&self, tree: &Tree, fixed: &[ChartPoint], times: &[f64]) -> f64 {
        let s = tree.s();
        let r = tree.vertex_count() - s;
        let nv = tree.vertex_count();
        let mut lap = vec![vec![0.0; nv]; nv];
        for (&(a, b), &time) in tree.edges().iter().zip(times) {
            let w = 1.0 / (4.0 * time);
            lap[a][a] += w;
            lap[b][b] += w;
            lap[a][b] -= w;
            lap[b][a] -= w;
        }
        // Schur complement S = L_FF − L_FI A⁻¹ L_IF via Cholesky of A = L_II.
        let mut chol = vec![vec![0.0; r]; r];
        let mut ln_det = 0.0;
        for i in 0..r {
            for j in 0..=i {
                let mut v = lap[s + i][s + j];
                for k in 0..j {
                    v -= chol[i][k] * chol[j][k];
                }
                if i == j {
                    let v = v.max(f64::MIN_POSITIVE);
                    chol[i][i] = v.sqrt();
                    ln_det += v.ln();
                } else {
                    chol[i][j] = v / chol[j][j];
                }
            }
        }
        // Columns of A⁻¹ L_IF for every fixed vertex.
        let solve = |rhs: &[f64]| -> Vec<f64> {
            let mut y = rhs.to_vec();
            for i in 0..r {
                for k in 0..i {
                    y[i] -= chol[i][k] * y[k];
                }
                y[i] /= chol[i][i];
            }
            for i in (0..r).rev() {
                for k in i + 1..r {
                    y[i] -= chol[k][i] * y[k];
                }
                y[i] /= chol[i][i];
            }
            y
        };
        let cols: Vec<Vec<f64>> = (0..s).map(|f| solve(&(0..r).map(|i| lap[s + i][f]).collect::<Vec<_>>())).collect();
        let mut q = 0.0;
        for i in 0..s {
            for j in i + 1..s {
                let corr: f64 = (0..r).map(|k| lap[s + k][i] * cols[j][k]).sum();
                let sij = lap[i][j] - corr;
                let d2: f64 = (0..self.dim).map(|c| (fixed[i].coords[c] - fixed[j].coords[c]).powi(2)).sum();
                q += -sij * d2;
            }
        }
        0.5 * self.dim as f64 * (r as f64 * PI.ln() - ln_det) - q.max(0.0)
    }

    /// Integrated weight with the supremum over the per-line logarithmic grid on
    /// [ε, t] approached by coordinate ascent (a lower bound of the grid supremum).
    pub fn integrated_weight_lower(&self, tree: &Tree, t: f64, tau: &[f64], fixed: &[ChartPoint]) -> Result<WeightFactorValue> {
        let eps = self.params.epsilon;
        if !(t >= eps) {
            return Err(Error::Parameter(format!("need t ≥ ε, got t={t}")));
        }
        let lines = tree.internal_lines().len();
        let grid = log_grid(eps, t, self.params.grid_points);
        let mut idx = vec![grid.len() - 1; lines];
        let scales = |idx: &[usize]| idx.iter().map(|&i| grid[i]).collect::<Vec<_>>();
        let mut best = self.ln_weight_at(tree, fixed, &scales(&idx), tau)?;
        for _ in 0..6 {
            let mut improved = false;
            for line in 0..lines {
                for g in 0..grid.len() {
                    if g == idx[line] {
                        continue;
                    }
                    let mut trial = idx.clone();
                    trial[line] = g;
                    let v = self.ln_weight_at(tree, fixed, &scales(&trial), tau)?;
                    if v > best {
                        best = v;
                        idx = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        Ok(WeightFactorValue { value: best.exp(), mc_error: 0.0, argmax_scales: scales(&idx), samples: 0 })
    }

    /// Lower bound of the global weight 𝓕_{s,l}(t, τ): the sum over the class of
    /// [`integrated_weight_lower`](Self::integrated_weight_lower); 𝓕_{1,l} ≡ 1.
    pub fn global_weight_lower(&self, spec: &TreeClassSpec, t: f64, tau: &[f64], fixed: &[ChartPoint]) -> Result<f64> {
        if spec.s == 1 && !spec.twice_rooted {
            return Ok(1.0);
        }
        let class = self.class(spec)?;
        let mut total = 0.0;
        for tree in class.iter() {
            total += self.integrated_weight_lower(tree, t, tau, fixed)?.value;
        }
        Ok(total)
    }
}
