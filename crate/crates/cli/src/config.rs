//! Run configuration: a TOML file with `manifold`, `physics`, `numeric`,
//! `task` and `output` blocks.
//!
//! Unknown keys are rejected. After parsing, every module-level precondition is
//! checked and all violations are reported together, each with its field path
//! (e.g. `physics.epsilon`), before any computation starts.

use curvedflow::flow::FlowConfig;
use curvedflow::geometry::{Kind, ManifoldModel};
use curvedflow::mc::McParams;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CURVEDFLOW_OUTPUT_DIR";

/// Output directory used when neither the config nor the environment names one.
pub const DEFAULT_OUTPUT_DIR: &str = "curvedflow-out";

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: ManifoldBlock,
    #[serde(default)]
    pub physics: PhysicsBlock,
    #[serde(default)]
    pub numeric: NumericBlock,
    #[serde(default)]
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Model manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldBlock {
    /// `flat`, `sphere` or `hyperbolic`.
    pub kind: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// κ for spheres, k for hyperbolic space; ignored for flat space.
    #[serde(default = "one")]
    pub curvature: f64,
}

impl Default for ManifoldBlock {
    fn default() -> Self {
        ManifoldBlock { kind: "flat".into(), dim: 4, curvature: 1.0 }
    }
}

/// Physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsBlock {
    pub mass_sq: f64,
    pub lambda: f64,
    /// UV cutoff ε.
    pub epsilon: f64,
    /// Renormalization scale t_R.
    pub t_renorm: f64,
}

impl Default for PhysicsBlock {
    fn default() -> Self {
        PhysicsBlock { mass_sq: 0.0, lambda: 1.0, epsilon: 1e-2, t_renorm: 1.0 }
    }
}

/// Numerical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericBlock {
    /// Global seed; every task derives its own seed from it and its name.
    pub seed: u64,
    pub mc_samples: usize,
    pub mc_shards: usize,
    /// Relative tolerance of heat-kernel and remainder quadratures.
    pub quadrature_tol: f64,
    /// Slack δ of weight factors and bound constants.
    pub delta: f64,
    /// Points per axis of scale grids (bounds and envelopes).
    pub scale_grid: usize,
}

impl Default for NumericBlock {
    fn default() -> Self {
        let mc = McParams::default();
        NumericBlock { seed: mc.seed, mc_samples: mc.samples, mc_shards: mc.shards, quadrature_tol: 1e-12, delta: 0.1, scale_grid: 10 }
    }
}

/// Tasks understood by the orchestrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Total mass of the kernel at each `task.t`.
    VerifyCompleteness,
    /// K(t/2) ∗ K(t/2) = K(t) at each `task.t`.
    VerifySemigroup,
    /// Two-sided, gradient and distance-moment bound constants with their sweeps.
    CertifyBounds,
    /// Tree class (`task.s`, `task.l`) with its incidence identity.
    EnumerateTrees,
    /// MC weights of two-point chain trees against the semigroup closed form.
    ChainWeights,
    /// Counterterm divergence fits for `task.quantities`.
    FitDivergence,
    /// Cauchy rate in ε of the folded CAS of `task.orders`.
    EpsilonRate,
    /// Power-counting envelopes of `task.orders`.
    PowerCounting,
    /// Difference-slot gain of the tree-level six-point function.
    DifferenceGain,
    /// Folded CAS at t = 10 and t = 20 with m² = 1.
    LongTime,
    /// Taylor-remainder envelope of the one-loop two-point function.
    Remainder,
    /// Kernel, propagator, CAS and counterterm scaling for each `task.rho`.
    Scaling,
    /// Curvature coefficient ξ from two four-spheres.
    Decompose,
    /// Normal-coordinate, Taylor-reconstruction and majorant checks.
    Geometry,
    /// Relevant-term trajectories and folded values on the `task.t` grid.
    FlowIntegrate,
}

impl TaskKind {
    /// Every task, in canonical order.
    pub const ALL: [TaskKind; 15] = [
        TaskKind::VerifyCompleteness,
        TaskKind::VerifySemigroup,
        TaskKind::CertifyBounds,
        TaskKind::EnumerateTrees,
        TaskKind::ChainWeights,
        TaskKind::FitDivergence,
        TaskKind::EpsilonRate,
        TaskKind::PowerCounting,
        TaskKind::DifferenceGain,
        TaskKind::LongTime,
        TaskKind::Remainder,
        TaskKind::Scaling,
        TaskKind::Decompose,
        TaskKind::Geometry,
        TaskKind::FlowIntegrate,
    ];

    /// Snake-case name (file stem and seed label).
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::VerifyCompleteness => "verify_completeness",
            TaskKind::VerifySemigroup => "verify_semigroup",
            TaskKind::CertifyBounds => "certify_bounds",
            TaskKind::EnumerateTrees => "enumerate_trees",
            TaskKind::ChainWeights => "chain_weights",
            TaskKind::FitDivergence => "fit_divergence",
            TaskKind::EpsilonRate => "epsilon_rate",
            TaskKind::PowerCounting => "power_counting",
            TaskKind::DifferenceGain => "difference_gain",
            TaskKind::LongTime => "long_time",
            TaskKind::Remainder => "remainder",
            TaskKind::Scaling => "scaling",
            TaskKind::Decompose => "decompose",
            TaskKind::Geometry => "geometry",
            TaskKind::FlowIntegrate => "flow_integrate",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which tasks to run and their sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskBlock {
    pub run: Vec<TaskKind>,
    /// Flow / kernel scales.
    pub t: Vec<f64>,
    /// Number of external points of tree and weight tasks.
    pub s: usize,
    /// Loop order of tree and weight tasks.
    pub l: usize,
    /// (n, l) orders of CAS tasks.
    pub orders: Vec<[usize; 2]>,
    /// Divergence quantities: `a`, `c`, `xi`.
    pub quantities: Vec<String>,
    /// Scale factors of the scaling task.
    pub rho: Vec<f64>,
    /// Length of the divergence ε-sequence 0.1·2^{−k}.
    pub eps_count: usize,
    /// Length of the Cauchy ε-sequence starting at `physics.epsilon`.
    pub cauchy_steps: usize,
    /// Random configurations of the chain-weight task.
    pub configs: usize,
    /// Random point pairs of the geometry task.
    pub pairs: usize,
    /// Width τ of the test-function kernels.
    pub tau: f64,
    /// Distance of the test-function centres from x₁.
    pub distance: f64,
    /// Sphere curvatures κ of the decomposition task.
    pub kappas: Vec<f64>,
}

impl Default for TaskBlock {
    fn default() -> Self {
        TaskBlock {
            run: Vec::new(),
            t: vec![1.0],
            s: 2,
            l: 1,
            orders: vec![[4, 0], [6, 0], [2, 1], [4, 1]],
            quantities: vec!["a".into(), "c".into()],
            rho: vec![0.5, 2.0, 3.0],
            eps_count: 11,
            cauchy_steps: 7,
            configs: 3,
            pairs: 1000,
            tau: 0.3,
            distance: 0.2,
            kappas: vec![1.0, std::f64::consts::SQRT_2],
        }
    }
}

/// Artifact formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Where and how artifacts are written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    /// Artifact directory; defaults to `$CURVEDFLOW_OUTPUT_DIR`, then `curvedflow-out`.
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { directory: None, formats: vec![Format::Csv, Format::Json] }
    }
}

fn default_dim() -> usize {
    4
}

fn one() -> f64 {
    1.0
}

/// One violated precondition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Dotted path of the offending field, e.g. `task.t[0]`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Failure to obtain a valid configuration.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema violation:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Schema(Vec<FieldError>),
}

impl ConfigError {
    fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema(vec![FieldError { path: path.into(), message: message.into() }])
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    /// Parse and validate TOML text.
    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Value = text.parse::<toml::Table>().map(toml::Value::Table).map_err(|e| {
            let msg = e.message().to_string();
            let path = e.span().map(|s| locate(text, s.start)).unwrap_or_else(|| "<root>".into());
            ConfigError::single(path, msg)
        })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::single(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// "line L, column C" of a byte offset.
fn locate(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    format!("line {line}, column {col}")
}

impl RunConfig {
    /// Default configuration with no tasks (flat ℝ⁴).
    pub fn minimal() -> Self {
        RunConfig {
            manifold: ManifoldBlock::default(),
            physics: PhysicsBlock::default(),
            numeric: NumericBlock::default(),
            task: TaskBlock::default(),
            output: OutputBlock::default(),
        }
    }

    /// Read, parse and validate a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        text.parse()
    }

    /// The manifold model (valid after [`validate`](Self::validate)).
    pub fn model(&self) -> Result<ManifoldModel, FieldError> {
        let kind: Kind = self
            .manifold
            .kind
            .parse()
            .map_err(|e: curvedflow::Error| FieldError { path: "manifold.kind".into(), message: e.to_string() })?;
        ManifoldModel::new(kind, self.manifold.dim, self.manifold.curvature)
            .map_err(|e| FieldError { path: "manifold".into(), message: e.to_string() })
    }

    /// Flow configuration with vanishing renormalization values.
    pub fn flow_config(&self) -> curvedflow::Result<FlowConfig> {
        let model = self.model().map_err(|e| curvedflow::Error::Parameter(e.to_string()))?;
        let mut c = FlowConfig::new(model, self.physics.epsilon, self.physics.mass_sq, self.physics.lambda)?;
        c.t_renorm = self.physics.t_renorm;
        c.validate()?;
        Ok(c)
    }

    /// Monte-Carlo parameters with the given seed.
    pub fn mc(&self, seed: u64) -> McParams {
        McParams { samples: self.numeric.mc_samples, seed, shards: self.numeric.mc_shards }
    }

    /// Output directory: config, then environment, then the built-in default.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// SHA-256 of the canonical JSON of everything except the output block
    /// (where results are written does not change them).
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canon = self.clone();
        canon.output = OutputBlock::default();
        let json = serde_json::to_string(&canon).expect("configs serialize");
        curvedflow::record::hex(&Sha256::digest(json.as_bytes()))
    }

    /// Check every precondition; all violations are reported together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |path: String, message: String| errs.push(FieldError { path, message });
        let model = match self.model() {
            Ok(m) => Some(m),
            Err(e) => {
                bad(e.path, e.message);
                None
            }
        };

        let p = &self.physics;
        if !(p.lambda > 0.0 && p.lambda.is_finite()) {
            bad("physics.lambda".into(), format!("need λ > 0, got {}", p.lambda));
        }
        if !(p.mass_sq >= 0.0 && p.mass_sq.is_finite()) {
            bad("physics.mass_sq".into(), format!("need m² ≥ 0, got {}", p.mass_sq));
        }
        if !(p.t_renorm > 0.0 && p.t_renorm.is_finite()) {
            bad("physics.t_renorm".into(), format!("need t_R > 0, got {}", p.t_renorm));
        }
        if !(p.epsilon > 0.0 && p.epsilon <= p.t_renorm) {
            bad("physics.epsilon".into(), format!("need 0 < ε ≤ t_R = {}, got ε = {}", p.t_renorm, p.epsilon));
        }

        let n = &self.numeric;
        // TOML integers are signed 64-bit: larger seeds could not be written back.
        if n.seed > i64::MAX as u64 {
            bad("numeric.seed".into(), format!("need seed ≤ {}, got {}", i64::MAX, n.seed));
        }
        if n.mc_samples < 2 {
            bad("numeric.mc_samples".into(), format!("need at least 2 samples, got {}", n.mc_samples));
        }
        if n.mc_shards == 0 {
            bad("numeric.mc_shards".into(), "need at least one shard".into());
        }
        if !(n.quadrature_tol > 0.0 && n.quadrature_tol < 1.0) {
            bad("numeric.quadrature_tol".into(), format!("need 0 < tol < 1, got {}", n.quadrature_tol));
        }
        if !(n.delta > 0.0 && n.delta.is_finite()) {
            bad("numeric.delta".into(), format!("need δ > 0, got {}", n.delta));
        }
        if n.scale_grid < 2 {
            bad("numeric.scale_grid".into(), format!("need at least 2 points per axis, got {}", n.scale_grid));
        }

        let t = &self.task;
        let runs = |k: TaskKind| t.run.contains(&k);
        let mut seen = Vec::new();
        for (i, k) in t.run.iter().enumerate() {
            if seen.contains(k) {
                bad(format!("task.run[{i}]"), format!("task '{k}' listed twice"));
            }
            seen.push(*k);
        }
        if t.t.is_empty() {
            bad("task.t".into(), "need at least one scale".into());
        }
        for (i, &ti) in t.t.iter().enumerate() {
            if !(ti.is_finite() && ti >= p.epsilon) {
                bad(format!("task.t[{i}]"), format!("need ε ≤ t with ε = physics.epsilon = {}, got t = {ti}", p.epsilon));
            }
        }
        if !(t.tau > 0.0 && t.tau.is_finite()) {
            bad("task.tau".into(), format!("need τ > 0, got {}", t.tau));
        }
        if !(t.distance >= 0.0 && t.distance.is_finite()) {
            bad("task.distance".into(), format!("need a distance ≥ 0, got {}", t.distance));
        }
        for (i, &r) in t.rho.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                bad(format!("task.rho[{i}]"), format!("need ρ > 0, got {r}"));
            }
        }
        for (i, &k) in t.kappas.iter().enumerate() {
            if !(k > 0.0 && k.is_finite()) {
                bad(format!("task.kappas[{i}]"), format!("need κ > 0, got {k}"));
            }
        }
        if runs(TaskKind::Decompose) && t.kappas.len() < 2 {
            bad("task.kappas".into(), "ξ needs at least two sphere curvatures".into());
        }
        if runs(TaskKind::EnumerateTrees) || runs(TaskKind::ChainWeights) {
            if t.s == 0 || t.l > 3 {
                bad("task.s".into(), format!("need s ≥ 1 and l ≤ 3, got s = {}, l = {}", t.s, t.l));
            }
        }
        if runs(TaskKind::ChainWeights) {
            if t.s != 2 {
                bad("task.s".into(), "chain weights are defined for s = 2".into());
            }
            if t.l == 0 || t.l > 2 {
                bad("task.l".into(), format!("chain weights need 1 ≤ l ≤ 2, got {}", t.l));
            }
            if !(p.epsilon < 0.1) {
                bad("physics.epsilon".into(), "chain weights sample t ∈ [0.1, 1] and need ε < 0.1".into());
            }
        }
        let flat = model.is_some_and(|m| m.kind == Kind::Flat);
        let four = model.is_some_and(|m| m.dim == 4);
        for (i, &[on, ol]) in t.orders.iter().enumerate() {
            if !matches!((on, ol), (4, 0) | (6, 0) | (2, 1) | (4, 1)) {
                bad(format!("task.orders[{i}]"), format!("({on}, {ol}) is not implemented; use (4,0), (6,0), (2,1) or (4,1)"));
            } else if runs(TaskKind::PowerCounting) && on > 2 && !flat {
                bad(format!("task.orders[{i}]"), format!("power counting of ({on}, {ol}) needs manifold.kind = flat"));
            }
        }
        if runs(TaskKind::DifferenceGain) && p.epsilon >= 0.25 {
            bad("physics.epsilon".into(), "the difference gain needs grid points with t < δ′τ; use ε < 0.25".into());
        }
        if runs(TaskKind::FitDivergence) {
            if t.eps_count < 4 {
                bad("task.eps_count".into(), format!("need at least 4 cutoffs, got {}", t.eps_count));
            }
            for (i, q) in t.quantities.iter().enumerate() {
                let ok = match q.as_str() {
                    "a" | "c" => flat && four,
                    "xi" => four && model.is_some_and(|m| m.kind == Kind::Sphere),
                    _ => {
                        bad(format!("task.quantities[{i}]"), format!("unknown quantity '{q}' (a, c, xi)"));
                        true
                    }
                };
                if !ok {
                    bad(
                        format!("task.quantities[{i}]"),
                        format!("'{q}' is compared with its oracle on {}", if q == "xi" { "S⁴ (sphere, dim 4)" } else { "flat ℝ⁴" }),
                    );
                }
            }
        }
        if runs(TaskKind::EpsilonRate) && t.cauchy_steps < 3 {
            bad("task.cauchy_steps".into(), format!("need at least 3 cutoffs, got {}", t.cauchy_steps));
        }
        if runs(TaskKind::Geometry) && t.pairs == 0 {
            bad("task.pairs".into(), "need at least one pair".into());
        }
        if self.output.formats.is_empty() {
            bad("output.formats".into(), "need at least one format".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Schema(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(e: ConfigError) -> Vec<String> {
        match e {
            ConfigError::Schema(v) => v.into_iter().map(|f| f.path).collect(),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c: RunConfig = "[manifold]\nkind = \"flat\"\n[task]\nrun = [\"verify_completeness\"]\n".parse().unwrap();
        assert_eq!(c.manifold.dim, 4);
        assert_eq!(c.task.run, vec![TaskKind::VerifyCompleteness]);
        assert_eq!(c.physics, PhysicsBlock::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let e = "[manifold]\nkind = \"flat\"\n[physics]\nlambda = 1.0\nlamda = 2.0\n".parse::<RunConfig>().unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("physics") && msg.contains("lamda"), "{msg}");
    }

    #[test]
    fn epsilon_above_t_names_the_field() {
        let e = "[manifold]\nkind = \"flat\"\n[physics]\nepsilon = 0.5\n[task]\nt = [0.1]\n".parse::<RunConfig>().unwrap_err();
        assert_eq!(paths(e), vec!["task.t[0]"]);
        let e = "[manifold]\nkind = \"flat\"\n[physics]\nepsilon = 2.0\n".parse::<RunConfig>().unwrap_err();
        assert!(paths(e).contains(&"physics.epsilon".to_string()));
    }

    #[test]
    fn every_violation_is_reported() {
        let text = "[manifold]\nkind = \"cone\"\n[physics]\nlambda = -1.0\n[numeric]\nscale_grid = 1\n";
        let p = paths(text.parse::<RunConfig>().unwrap_err());
        assert_eq!(p, vec!["manifold.kind", "physics.lambda", "numeric.scale_grid"]);
    }

    #[test]
    fn oracle_quantities_need_their_manifold() {
        let text = "[manifold]\nkind = \"hyperbolic\"\ndim = 3\n[task]\nrun = [\"fit_divergence\"]\nquantities = [\"a\", \"xi\"]\n";
        assert_eq!(paths(text.parse::<RunConfig>().unwrap_err()), vec!["task.quantities[0]", "task.quantities[1]"]);
    }

    #[test]
    fn digest_ignores_the_output_location() {
        let mut a = RunConfig::minimal();
        let d = a.digest();
        a.output.directory = Some("elsewhere".into());
        assert_eq!(a.digest(), d);
        a.numeric.seed += 1;
        assert_ne!(a.digest(), d);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = RunConfig::minimal();
        c.task.run = TaskKind::ALL.to_vec();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(text.parse::<RunConfig>().unwrap(), c);
    }
}
