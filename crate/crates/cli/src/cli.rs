//! Command-line interface: `run` plus thin subcommands over the library.
//!
//! Every subcommand starts from a base configuration (`--config FILE` or the
//! built-in defaults), applies flag-level overrides and validates the result
//! exactly like `run` does. Exit status: 0 when no record failed, 1 when some
//! record failed or a computation errored, 2 on usage or schema errors.

use crate::config::{ConfigError, RunConfig, TaskKind};
use crate::run::{run, write_artifacts};
use crate::tasks::{run_task, taylor_field, TaskOutput};
use clap::{Args, Parser, Subcommand};
use curvedflow::geometry::covariant_taylor;
use curvedflow::heatkernel::HeatKernel;
use curvedflow::record::{fmt17, Status, VerificationRecord};
use curvedflow::trees::{chain_closed_form, enumerate_trees, f2r_closed_form, EnumOptions, TreeClassSpec, WeightEngine, WeightParams};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

/// Numerical laboratory for the perturbative flow of φ⁴ theory on constant-curvature manifolds.
#[derive(Debug, Parser)]
#[command(name = "curvedflow", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute the tasks of a configuration file and write CSV, JSON and a manifest.
    Run {
        /// Configuration file (TOML).
        path: PathBuf,
        /// Output directory (overrides output.directory and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Heat-kernel evaluation and bound certification.
    #[command(subcommand)]
    Heatkernel(HeatkernelCmd),
    /// Tree-class enumeration and weight factors.
    #[command(subcommand)]
    Trees(TreesCmd),
    /// Flow integration, divergence fits and ε-convergence.
    #[command(subcommand)]
    Flow(FlowCmd),
    /// Scaling identities and curvature decomposition.
    #[command(subcommand)]
    Scaling(ScalingCmd),
    /// Covariant Taylor expansions and geometry checks.
    #[command(subcommand)]
    Geometry(GeometryCmd),
}

/// Flag-level overrides of configuration fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// manifold.kind: flat, sphere or hyperbolic.
    #[arg(long)]
    pub manifold: Option<String>,
    /// manifold.dim.
    #[arg(long)]
    pub dim: Option<usize>,
    /// manifold.curvature (κ or k).
    #[arg(long)]
    pub curvature: Option<f64>,
    /// physics.mass_sq.
    #[arg(long = "mass-sq")]
    pub mass_sq: Option<f64>,
    /// physics.lambda.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// physics.epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// physics.t_renorm.
    #[arg(long = "t-renorm")]
    pub t_renorm: Option<f64>,
    /// numeric.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// numeric.mc_samples.
    #[arg(long = "mc-samples")]
    pub mc_samples: Option<usize>,
    /// numeric.quadrature_tol.
    #[arg(long = "quadrature-tol")]
    pub quadrature_tol: Option<f64>,
    /// numeric.delta.
    #[arg(long)]
    pub delta: Option<f64>,
    /// numeric.scale_grid.
    #[arg(long = "scale-grid")]
    pub scale_grid: Option<usize>,
}

impl Overrides {
    /// Apply the given flags to `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.manifold {
            cfg.manifold.kind = v.clone();
        }
        macro_rules! set {
            ($($field:ident => $target:expr),*) => {$(if let Some(v) = self.$field { $target = v; })*};
        }
        set!(dim => cfg.manifold.dim, curvature => cfg.manifold.curvature, mass_sq => cfg.physics.mass_sq,
             lambda => cfg.physics.lambda, epsilon => cfg.physics.epsilon, t_renorm => cfg.physics.t_renorm,
             seed => cfg.numeric.seed, mc_samples => cfg.numeric.mc_samples, quadrature_tol => cfg.numeric.quadrature_tol,
             delta => cfg.numeric.delta, scale_grid => cfg.numeric.scale_grid);
    }
}

/// Base configuration shared by the subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct Base {
    /// Base configuration file; its task block is replaced by the subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the artifacts (CSV, JSON, manifest) into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub ov: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum HeatkernelCmd {
    /// Print K(t, x, y) for points at the given geodesic distance.
    Eval {
        #[arg(long)]
        t: f64,
        /// Geodesic distance d(x, y).
        #[arg(long, default_value_t = 0.0, conflicts_with = "coincident")]
        distance: f64,
        /// Evaluate on the diagonal (d = 0).
        #[arg(long)]
        coincident: bool,
        #[command(flatten)]
        base: Base,
    },
    /// Fit and certify the two-sided, gradient and distance-moment bound constants.
    Certify {
        #[command(flatten)]
        base: Base,
    },
}

#[derive(Debug, Subcommand)]
pub enum TreesCmd {
    /// List the tree class in canonical edge-list format, one tree per block.
    Enumerate {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        l: usize,
        /// Twice-rooted class.
        #[arg(long)]
        twice: bool,
    },
    /// Integrated weights of the two-point class against the semigroup closed form.
    Weight {
        #[arg(long, default_value_t = 1)]
        l: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tau: f64,
        /// Distance between the two external points.
        #[arg(long)]
        distance: f64,
        #[command(flatten)]
        base: Base,
    },
}

#[derive(Debug, Subcommand)]
pub enum FlowCmd {
    /// Relevant terms and folded CAS on a t grid, printed as JSON.
    Integrate {
        /// Comma-separated flow scales.
        #[arg(long, value_delimiter = ',', default_value = "0.1,1")]
        t: Vec<f64>,
        /// Comma-separated orders n:l.
        #[arg(long, value_delimiter = ',', default_value = "4:0,2:1")]
        orders: Vec<String>,
        #[arg(long, default_value_t = 0.3)]
        tau: f64,
        #[arg(long, default_value_t = 0.2)]
        distance: f64,
        #[command(flatten)]
        base: Base,
    },
    /// Divergence fit of a counterterm (a, c or xi) along ε = 0.1·2^{−k}.
    FitDivergence {
        #[arg(long)]
        quantity: String,
        #[arg(long = "eps-count", default_value_t = 11)]
        eps_count: usize,
        #[command(flatten)]
        base: Base,
    },
    /// Cauchy rate in ε of a folded CAS.
    EpsilonRate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long, default_value_t = 0.3)]
        tau: f64,
        #[arg(long, default_value_t = 0.2)]
        distance: f64,
        /// Number of halvings of ε.
        #[arg(long, default_value_t = 7)]
        steps: usize,
        #[command(flatten)]
        base: Base,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScalingCmd {
    /// Kernel, propagator, relevant-term and CAS scaling identities.
    Check {
        #[arg(long, value_delimiter = ',', default_value = "0.5,2,3")]
        rho: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.3")]
        t: Vec<f64>,
        #[command(flatten)]
        base: Base,
    },
    /// Curvature coefficient ξ of the mass counterterm from several four-spheres.
    Decompose {
        #[arg(long, value_delimiter = ',', default_value = "1,1.4142135623730951")]
        kappas: Vec<f64>,
        #[arg(long = "eps-count", default_value_t = 11)]
        eps_count: usize,
        #[command(flatten)]
        base: Base,
    },
}

#[derive(Debug, Subcommand)]
pub enum GeometryCmd {
    /// Covariant Taylor expansion of exp(u₀ + 0.3u₁) between two points on the first two axes.
    Taylor {
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// Distance of the expansion point from the origin along the first axis.
        #[arg(long, default_value_t = 0.4)]
        from: f64,
        /// Distance of the evaluation point from the origin along the second axis.
        #[arg(long, default_value_t = 1.1)]
        to: f64,
        #[command(flatten)]
        base: Base,
    },
    /// Normal-coordinate identity, Taylor reconstruction and majorant checks.
    Check {
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[command(flatten)]
        base: Base,
    },
}

/// Failure of a command, mapped to an exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numeric(#[from] curvedflow::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for usage and schema errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Schema(_)) | CliError::Usage(_) => 2,
            CliError::Config(ConfigError::Io { .. }) => 2,
            _ => 1,
        }
    }
}

impl Base {
    /// Base configuration with overrides and the given task block applied, validated.
    fn config(&self, task: impl FnOnce(&mut RunConfig)) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::minimal(),
        };
        cfg.task = Default::default();
        self.ov.apply(&mut cfg);
        task(&mut cfg);
        if let Some(o) = &self.out {
            cfg.output.directory = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Run one task, print its records as CSV, optionally persist artifacts.
    fn task(&self, kind: TaskKind, set: impl FnOnce(&mut RunConfig), w: &mut dyn Write) -> Result<i32, CliError> {
        let cfg = self.config(|c| {
            c.task.run = vec![kind];
            set(c);
        })?;
        let out = run_task(&cfg, kind);
        print_records(&out, w)?;
        let code = i32::from(out.failures() > 0);
        if self.out.is_some() {
            write_artifacts(&cfg, &cfg.output_dir(), vec![out])?;
        }
        Ok(code)
    }
}

fn print_records(out: &TaskOutput, w: &mut dyn Write) -> std::io::Result<()> {
    let (header, rows) = out.records_csv();
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

fn parse_order(s: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::Usage(format!("invalid order '{s}', expected n:l"));
    let (n, l) = s.split_once(':').ok_or_else(bad)?;
    Ok([n.trim().parse().map_err(|_| bad())?, l.trim().parse().map_err(|_| bad())?])
}

/// Parse `args` (including the program name) and execute; returns the exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = if e.use_stderr() { write!(stderr, "{}", e.render()) } else { write!(stdout, "{}", e.render()) };
            return e.exit_code();
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Execute a parsed command.
pub fn execute(cmd: Command, w: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Run { path, out, ov } => {
            let mut cfg = RunConfig::load(&path)?;
            ov.apply(&mut cfg);
            if let Some(o) = out {
                cfg.output.directory = Some(o);
            }
            cfg.validate()?;
            let summary = run(&cfg)?;
            for o in &summary.outputs {
                writeln!(w, "{}: {} records, {} failed", o.task, o.records.len(), o.failures())?;
                for r in o.records.iter().filter(|r| r.status == Status::Fail) {
                    writeln!(err, "  FAIL {} [{}]: {}", r.name, r.manifold, r.note)?;
                }
            }
            writeln!(w, "artifacts: {}", summary.directory.display())?;
            Ok(summary.exit_code())
        }
        Command::Heatkernel(HeatkernelCmd::Eval { t, distance, coincident, base }) => {
            let cfg = base.config(|_| {})?;
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Usage(format!("--t: need t > 0, got {t}")));
            }
            let hk = HeatKernel::new(cfg.model().map_err(|e| ConfigError::Schema(vec![e]))?);
            let d = if coincident { 0.0 } else { distance };
            writeln!(w, "{}", fmt17(hk.radial(t, d)?))?;
            Ok(0)
        }
        Command::Heatkernel(HeatkernelCmd::Certify { base }) => base.task(TaskKind::CertifyBounds, |_| {}, w),
        Command::Trees(TreesCmd::Enumerate { s, l, twice }) => {
            let spec = TreeClassSpec::new(s, l, twice).map_err(|e| CliError::Usage(e.to_string()))?;
            let trees = enumerate_trees(&spec, &EnumOptions::default())?;
            for (i, t) in trees.iter().enumerate() {
                if i > 0 {
                    writeln!(w)?;
                }
                write!(w, "{}", t.to_edge_list())?;
            }
            writeln!(err, "{} topologies in {spec}", trees.len())?;
            Ok(0)
        }
        Command::Trees(TreesCmd::Weight { l, t, tau, distance, base }) => {
            let cfg = base.config(|c| {
                c.task.s = 2;
                c.task.l = l;
                c.task.t = vec![t];
                c.task.tau = tau;
                c.task.distance = distance;
            })?;
            let m = cfg.model().map_err(|e| ConfigError::Schema(vec![e]))?;
            let hk = HeatKernel::new(m);
            let p = WeightParams { delta: cfg.numeric.delta, epsilon: cfg.physics.epsilon, mass_sq: cfg.physics.mass_sq, ..WeightParams::default() };
            let eng = WeightEngine::new(&hk, p, cfg.mc(cfg.numeric.seed))?;
            let x = m.origin();
            let mut e0 = vec![0.0; m.dim];
            e0[0] = 1.0;
            let y = m.point_at(&x, distance, &e0);
            let spec = TreeClassSpec::single(2, l)?;
            let mut recs = Vec::new();
            for tree in enumerate_trees(&spec, &EnumOptions::default())? {
                let wv = eng.integrated_weight(&tree, t, &[tau], &[x, y])?;
                let mut r = VerificationRecord::new(format!("weight {}", tree.canonical_string()), m.label())
                    .input("t", t)
                    .input("tau", tau)
                    .input("d", distance)
                    .error(wv.mc_error);
                if tree.is_chain() {
                    let (exact, _) = chain_closed_form(&hk, &p, tree.internal_count(), t, tau, distance, None)?;
                    r = r.sides(wv.value, exact).status(Status::from_bool((wv.value - exact).abs() <= 3.0 * wv.mc_error + 1e-12 * exact));
                } else {
                    r = r.sides(wv.value, f64::NAN);
                }
                recs.push(r);
            }
            let g = eng.global_weight(&spec, t, &[tau], &[x, y])?;
            let f2r = f2r_closed_form(&hk, &p, l, t, tau, distance)?;
            recs.push(
                VerificationRecord::new("global-weight", m.label())
                    .input("t", t)
                    .input("tau", tau)
                    .input("d", distance)
                    .sides(g.value, f2r)
                    .error(g.mc_error)
                    .status(Status::from_bool(l > 1 || (g.value - f2r).abs() <= 3.0 * g.mc_error + 1e-12 * f2r))
                    .note("class sum; compared with the chain closed form at one loop"),
            );
            let out = TaskOutput { task: TaskKind::ChainWeights, seed: cfg.numeric.seed, records: recs, tables: vec![], data: serde_json::Value::Null };
            print_records(&out, w)?;
            Ok(i32::from(out.failures() > 0))
        }
        Command::Flow(FlowCmd::Integrate { t, orders, tau, distance, base }) => {
            let orders = orders.iter().map(|o| parse_order(o)).collect::<Result<Vec<_>, _>>()?;
            let cfg = base.config(|c| {
                c.task.run = vec![TaskKind::FlowIntegrate];
                c.task.t = t;
                c.task.orders = orders;
                c.task.tau = tau;
                c.task.distance = distance;
            })?;
            let out = run_task(&cfg, TaskKind::FlowIntegrate);
            if out.failures() > 0 {
                print_records(&out, err)?;
                return Ok(1);
            }
            writeln!(w, "{}", serde_json::to_string_pretty(&out.data).expect("flow records serialize"))?;
            if base.out.is_some() {
                write_artifacts(&cfg, &cfg.output_dir(), vec![out])?;
            }
            Ok(0)
        }
        Command::Flow(FlowCmd::FitDivergence { quantity, eps_count, base }) => {
            let cfg = base.config(|c| {
                c.task.run = vec![TaskKind::FitDivergence];
                c.task.quantities = vec![quantity.clone()];
                c.task.eps_count = eps_count;
            })?;
            let out = run_task(&cfg, TaskKind::FitDivergence);
            let rec = &out.records[0];
            writeln!(w, "quantity = {quantity}")?;
            writeln!(w, "manifold = {}", rec.manifold)?;
            if let Some(p) = rec.fitted.get("exponent") {
                writeln!(w, "slope = {}", fmt17(-p))?;
            }
            for k in ["coefficient", "oracle", "relative_error"] {
                if let Some(v) = rec.fitted.get(k) {
                    writeln!(w, "{k} = {}", fmt17(*v))?;
                }
            }
            writeln!(w, "status = {}", rec.status.as_str())?;
            if !rec.note.is_empty() && out.failures() > 0 {
                writeln!(err, "{}", rec.note)?;
            }
            if base.out.is_some() {
                write_artifacts(&cfg, &cfg.output_dir(), vec![out.clone()])?;
            }
            Ok(i32::from(out.failures() > 0))
        }
        Command::Flow(FlowCmd::EpsilonRate { n, l, t, tau, distance, steps, base }) => base.task(
            TaskKind::EpsilonRate,
            |c| {
                c.task.orders = vec![[n, l]];
                c.task.t = vec![t];
                c.task.tau = tau;
                c.task.distance = distance;
                c.task.cauchy_steps = steps;
            },
            w,
        ),
        Command::Scaling(ScalingCmd::Check { rho, t, base }) => base.task(
            TaskKind::Scaling,
            |c| {
                c.task.rho = rho;
                c.task.t = t;
            },
            w,
        ),
        Command::Scaling(ScalingCmd::Decompose { kappas, eps_count, base }) => base.task(
            TaskKind::Decompose,
            |c| {
                c.task.kappas = kappas;
                c.task.eps_count = eps_count;
            },
            w,
        ),
        Command::Geometry(GeometryCmd::Taylor { order, from, to, base }) => {
            let cfg = base.config(|_| {})?;
            let m = cfg.model().map_err(|e| ConfigError::Schema(vec![e]))?;
            let mut e0 = vec![0.0; m.dim];
            let mut e1 = vec![0.0; m.dim];
            e0[0] = 1.0;
            e1[1] = 1.0;
            let x0 = m.point_at(&m.origin(), from, &e0);
            let x = m.point_at(&m.origin(), to, &e1);
            let r = covariant_taylor(&m, taylor_field, &x0, &x, order)?;
            writeln!(w, "value = {}", fmt17(r.value))?;
            writeln!(w, "expansion = {}", fmt17(r.expansion))?;
            writeln!(w, "remainder = {}", fmt17(r.remainder))?;
            writeln!(w, "bound = {}", fmt17(r.bound))?;
            writeln!(w, "interp_error = {}", fmt17(r.interp_error))?;
            writeln!(w, "terms = {}", r.terms.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(","))?;
            Ok(0)
        }
        Command::Geometry(GeometryCmd::Check { pairs, base }) => base.task(TaskKind::Geometry, |c| c.task.pairs = pairs, w),
    }
}
