//! Perturbative flow equation at tree level and one loop.
//!
//! Connected amputated Schwinger functions ℒ^{ε,t}_{n,l} are kept symbolically as
//! lists of [`CasTerm`]s: a scalar coefficient, a *root group* of slots
//! identified with x₁ by delta functions and, optionally, a *far group* of slots
//! identified with an integrated point u, joined to x₁ by a propagator line
//! C^{ε,t}(x₁, u) or its square. Integrating the flow equation
//!
//! ∂_t ℒ_{n,l} = ½∫C_t(x,y) { ℒ_{n+2,l−1}(…, x, y) − Σ [ℒ_{n₁+1,l₁}(…, x) ℒ_{n₂+1,l₂}(y, …)]_sym }
//!
//! from the bare boundary conditions (ℒ_{4,0} = λ δ̃δ̃δ̃, ℒ_{n>4} ≡ 0 at t = ε) and
//! the renormalization conditions at t = 1 gives, on homogeneous spaces,
//!
//! * ℒ_{4,0} = λ δ̃δ̃δ̃ (t-independent), ℒ_{2,0} ≡ 0;
//! * ℒ_{6,0} = −λ² Σ_{10 splits A|B} C^{ε,t}(x_A, x_B) δ̃_A δ̃_B;
//! * ℒ_{2,1} = a(t) δ̃ with ∂_t a = (λ/2) e^{−m²t} K(t, x, x), a(1) = a^R;
//! * ℒ_{4,1} = c^ε δ̃δ̃δ̃ − ½λ² Σ_{3 channels} (C^{ε,t})² δ̃δ̃
//!   − λ a(t) Σ_{4 legs} C^{ε,t} δ̃δ̃, where the last sum combines the
//!   tadpole-on-a-line part of ℒ_{6,0} with the ℒ_{2,1}·ℒ_{4,0} terms
//!   (∂_t[a C^{ε,t}] = ȧ C^{ε,t} + a C_t), and c^ε is fixed by c(1) = c^R.
//!
//! Folding with heat-kernel test functions reduces every term to a product of
//! kernels at x₁ times one integral over u (see [`lines`]).

mod analysis;
mod envelope;
mod lines;
mod relevant;

pub use analysis::{
    epsilon_convergence, epsilon_sequence, fit_log_divergence, fit_power_divergence, richardson_limit, CauchyFit,
    DivergenceSummary, LogFit, PowerFit,
};
pub use envelope::{
    difference_gain_check, fit_log_envelope, long_time_check, power_counting_check, EnvelopeFit, EnvelopeReport,
    EnvelopeRow, GridSpec,
};
pub use lines::Folded;
pub use relevant::{
    extract_relevant, remainder_envelope, remainder_l2, RadialProfile, RemainderParams, RemainderRow, RemainderValue,
    TwoPointCas,
};

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, ManifoldModel};
use crate::heatkernel::HeatKernel;
use crate::mc::McParams;
use crate::quad::{gauss_kronrod_pts, QuadOpts};
use crate::record::float;
use lines::LineIntegrator;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Default renormalization scale t_R.
pub const T_RENORM: f64 = 1.0;

fn default_t_renorm() -> f64 {
    T_RENORM
}

/// Values of the relevant terms imposed at t = t_R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Renormalization {
    #[serde(with = "float")]
    pub a: f64,
    /// f^{μ,R}; empty means zero.
    pub f: Vec<f64>,
    /// b^{μν,R} = b·g^{μν} (homogeneous spaces).
    #[serde(with = "float")]
    pub b: f64,
    #[serde(with = "float")]
    pub c: f64,
}

impl Default for Renormalization {
    fn default() -> Self {
        Renormalization { a: 0.0, f: Vec::new(), b: 0.0, c: 0.0 }
    }
}

/// Physical parameters of a flow computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub model: ManifoldModel,
    #[serde(with = "float")]
    pub epsilon: f64,
    #[serde(with = "float")]
    pub mass_sq: f64,
    #[serde(with = "float")]
    pub lambda: f64,
    pub renorm: Renormalization,
    /// Scale t_R at which the renormalization conditions hold (1 unless the
    /// configuration was rescaled).
    #[serde(with = "float", default = "default_t_renorm")]
    pub t_renorm: f64,
}

impl FlowConfig {
    /// Configuration with vanishing renormalization conditions.
    pub fn new(model: ManifoldModel, epsilon: f64, mass_sq: f64, lambda: f64) -> Result<Self> {
        let c = FlowConfig { model, epsilon, mass_sq, lambda, renorm: Renormalization::default(), t_renorm: T_RENORM };
        c.validate()?;
        Ok(c)
    }

    /// Same configuration with another cutoff.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let c = FlowConfig { epsilon, ..self.clone() };
        c.validate()?;
        Ok(c)
    }

    /// Check λ > 0, 0 < ε ≤ t_R, m² ≥ 0 and that the renormalization values are
    /// of the homogeneous form the one-loop flows close on.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("need λ > 0, got {}", self.lambda)));
        }
        if !(self.t_renorm > 0.0 && self.t_renorm.is_finite()) {
            return Err(Error::Parameter(format!("need t_R > 0, got {}", self.t_renorm)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= self.t_renorm) {
            return Err(Error::Parameter(format!("need 0 < ε ≤ t_R = {}, got ε = {}", self.t_renorm, self.epsilon)));
        }
        if !(self.mass_sq >= 0.0 && self.mass_sq.is_finite()) {
            return Err(Error::Parameter(format!("need m² ≥ 0, got {}", self.mass_sq)));
        }
        if !(self.renorm.a.is_finite() && self.renorm.c.is_finite()) {
            return Err(Error::Parameter("renormalization values must be finite".into()));
        }
        if self.renorm.f.iter().any(|&v| v != 0.0) || self.renorm.b != 0.0 {
            return Err(Error::Unsupported(
                "nonzero f^R or b^R: the implemented one-loop flows assume vanishing wave-function and vector conditions"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Check ε ≤ t.
    pub fn check_t(&self, t: f64) -> Result<()> {
        if !(t >= self.epsilon && t.is_finite()) {
            return Err(Error::Parameter(format!("need ε ≤ t, got ε={}, t={t}", self.epsilon)));
        }
        Ok(())
    }
}

/// One slot of a test function: the constant 𝟙 or a heat kernel K(τ, ·, y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Slot {
    One,
    Kernel { tau: f64, y: ChartPoint },
}

/// Test function φ(x₂, …, x_n) = Π_{i=2}^{s} K(τ_i, x_i, y_i) · Π 𝟙, optionally
/// with slot j replaced by K^{(1)}(τ_j, x_j, x₁; y_j) = K(τ_j, x_j, y_j) − K(τ_j, x₁, y_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    /// (τ_i, y_i) for i = 2..s.
    pub kernels: Vec<(f64, ChartPoint)>,
    /// Difference slot j (2 ≤ j ≤ s).
    pub difference: Option<usize>,
}

impl TestFunctionSpec {
    /// Plain product test function.
    pub fn new(kernels: Vec<(f64, ChartPoint)>) -> Self {
        TestFunctionSpec { kernels, difference: None }
    }

    /// All slots 𝟙 (s = 1).
    pub fn constant() -> Self {
        Self::new(Vec::new())
    }

    /// Same kernels with slot j turned into a difference.
    pub fn with_difference(mut self, j: usize) -> Self {
        self.difference = Some(j);
        self
    }

    /// s = 1 + number of kernel slots.
    pub fn s(&self) -> usize {
        self.kernels.len() + 1
    }

    /// Check s ≤ n, τ_i > ε and the difference slot.
    pub fn validate(&self, model: &ManifoldModel, epsilon: f64, n: usize) -> Result<()> {
        if self.s() > n {
            return Err(Error::Parameter(format!("test function has s={} > n={n}", self.s())));
        }
        for (tau, y) in &self.kernels {
            if !(*tau > epsilon && tau.is_finite()) {
                return Err(Error::Parameter(format!("need τ > ε, got τ={tau}")));
            }
            model.check(y)?;
        }
        if let Some(j) = self.difference {
            if !(2..=self.s()).contains(&j) {
                return Err(Error::Parameter(format!("difference slot {j} outside 2..={}", self.s())));
            }
        }
        Ok(())
    }

    /// Slot functions for slots 2..=n (kernels first, then 𝟙).
    pub fn slots(&self, n: usize) -> Vec<Slot> {
        let mut out: Vec<Slot> = self.kernels.iter().map(|&(tau, y)| Slot::Kernel { tau, y }).collect();
        out.resize(n.saturating_sub(1), Slot::One);
        out
    }
}

/// Line joining the root point to the far point of a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Line {
    /// C^{ε,t}(x₁, u).
    Propagator,
    /// (C^{ε,t}(x₁, u))².
    PropagatorSquared,
}

/// One term of a symbolic CAS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasTerm {
    #[serde(with = "float")]
    pub coeff: f64,
    /// Symbolic form of the coefficient, e.g. `-lambda^2`.
    pub label: String,
    /// Slots (1-based, containing 1) sitting at x₁.
    pub root: Vec<usize>,
    /// Slots sitting at the integrated point u (empty when `line` is None).
    pub far: Vec<usize>,
    pub line: Option<Line>,
}

impl fmt::Display for CasTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let group = |g: &[usize]| g.iter().map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        match self.line {
            None => write!(f, "({}) delta[{}]", self.label, group(&self.root)),
            Some(l) => {
                let name = match l {
                    Line::Propagator => "C",
                    Line::PropagatorSquared => "C^2",
                };
                write!(f, "({}) {name}[{} | {}]", self.label, group(&self.root), group(&self.far))
            }
        }
    }
}

/// Symbolic connected amputated Schwinger function ℒ^{ε,t}_{n,l}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cas {
    pub n: usize,
    pub l: usize,
    #[serde(with = "float")]
    pub epsilon: f64,
    #[serde(with = "float")]
    pub t: f64,
    #[serde(with = "float")]
    pub mass_sq: f64,
    pub terms: Vec<CasTerm>,
}

impl Cas {
    /// One line per term.
    pub fn describe(&self) -> String {
        self.terms.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("\n")
    }
}

/// Relevant terms of the two- and four-point functions at x₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantTerms {
    #[serde(with = "float")]
    pub a: f64,
    pub f: Vec<f64>,
    /// Symmetric n×n matrix b^{μν} in an orthonormal frame at x₁.
    pub b: Vec<Vec<f64>>,
    #[serde(with = "float")]
    pub c: f64,
}

impl RelevantTerms {
    /// a, c with f = 0 and b = 0 in dimension n.
    pub fn scalar(n: usize, a: f64, c: f64) -> Self {
        RelevantTerms { a, f: vec![0.0; n], b: vec![vec![0.0; n]; n], c }
    }
}

/// Ordered assignments (first factor, second factor) of slots 1..=n with k
/// slots in the first factor, each factor listed in lexicographic order.
pub fn symmetrized_splits(n: usize, k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let first: Vec<usize> = (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
        let second: Vec<usize> = (1..=n).filter(|i| mask & (1 << (i - 1)) == 0).collect();
        out.push((first, second));
    }
    out
}

/// Add terms with identical structure (root group, far group, line).
fn merge_terms(terms: Vec<CasTerm>) -> Vec<CasTerm> {
    let mut out: Vec<CasTerm> = Vec::new();
    for t in terms {
        if let Some(e) = out.iter_mut().find(|e| e.root == t.root && e.far == t.far && e.line == t.line) {
            e.coeff += t.coeff;
        } else {
            out.push(t);
        }
    }
    out.retain(|t| t.coeff != 0.0);
    out
}

/// Flow engine: coefficient flows, symbolic CAS and folding.
#[derive(Debug)]
pub struct FlowEngine {
    cfg: FlowConfig,
    hk: HeatKernel,
    lines: LineIntegrator,
}

impl FlowEngine {
    /// Engine for a validated configuration.
    pub fn new(cfg: FlowConfig, mc: McParams) -> Result<Self> {
        cfg.validate()?;
        let hk = HeatKernel::new(cfg.model);
        let lines = LineIntegrator::new(hk, cfg.epsilon, cfg.mass_sq, mc);
        Ok(FlowEngine { cfg, hk, lines })
    }

    /// Configuration.
    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    /// Heat kernel of the manifold.
    pub fn kernel(&self) -> &HeatKernel {
        &self.hk
    }

    /// ∫_{t₀}^{t₁} e^{−m²s} K(s, x, x) ds (signed).
    pub fn tadpole_integral(&self, t0: f64, t1: f64) -> Result<f64> {
        if t0 == t1 {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if t0 < t1 { (t0, t1, 1.0) } else { (t1, t0, -1.0) };
        let m2 = self.cfg.mass_sq;
        let f = |s: f64| {
            let tp = s.exp();
            self.hk.ln_radial(tp, 0.0).map_or(f64::NAN, |lk| (lk + s - m2 * tp).exp())
        };
        let pts = decade_points(lo.ln(), hi.ln());
        let q = gauss_kronrod_pts(f, &pts, QuadOpts::rel(1e-12).with_abs(1e-300))?;
        Ok(sign * q.value)
    }

    /// ∂_t a^{ε,t}₁ = (λ/2) e^{−m²t} K(t, x, x).
    pub fn mass_flow_rate(&self, t: f64) -> Result<f64> {
        Ok(0.5 * self.cfg.lambda * self.hk.propagator_deriv_radial(t, self.cfg.mass_sq, 0.0)?)
    }

    /// a^{ε,t}₁ = a^R − (λ/2)∫_t^{t_R} e^{−m²s}K(s,x,x) ds (t > t_R continues the flow upward).
    pub fn a_coefficient(&self, t: f64) -> Result<f64> {
        self.cfg.check_t(t)?;
        Ok(self.cfg.renorm.a - 0.5 * self.cfg.lambda * self.tadpole_integral(t, self.cfg.t_renorm)?)
    }

    /// P(t) = ∫_M C^{ε,t}(x, u) du = ∫_ε^t e^{−m²s} ds.
    pub fn propagator_mass(&self, t: f64) -> Result<f64> {
        self.cfg.check_t(t)?;
        Ok(self.lines.propagator_mass(t))
    }

    /// J(t) = ∫_M (C^{ε,t}(x, u))² du.
    pub fn bubble_integral(&self, t: f64) -> Result<f64> {
        self.cfg.check_t(t)?;
        self.lines.bubble(t)
    }

    /// Bare coupling counterterm c^ε = c^R + (3/2)λ²J(t_R) + 4λa^R P(t_R).
    pub fn c_bare(&self) -> Result<f64> {
        let lam = self.cfg.lambda;
        Ok(self.cfg.renorm.c
            + 1.5 * lam * lam * self.bubble_integral(self.cfg.t_renorm)?
            + 4.0 * lam * self.cfg.renorm.a * self.propagator_mass(self.cfg.t_renorm)?)
    }

    /// c^{ε,t}₁ = ∫ℒ_{4,1}(x₁, x₂, x₃, x₄) dx₂dx₃dx₄ (the fold with 𝟙).
    pub fn c_coefficient(&self, t: f64) -> Result<f64> {
        let cas = self.one_loop_4pt(t)?;
        Ok(self.fold(&cas, &self.cfg.model.origin(), &TestFunctionSpec::constant())?.value)
    }

    /// Relevant terms of loop order l at scale t (f ≡ 0, b ≡ 0 on homogeneous spaces).
    pub fn relevant(&self, l: usize, t: f64) -> Result<RelevantTerms> {
        self.cfg.check_t(t)?;
        let n = self.cfg.model.dim;
        match l {
            0 => Ok(RelevantTerms::scalar(n, 0.0, self.cfg.lambda)),
            1 => Ok(RelevantTerms::scalar(n, self.a_coefficient(t)?, self.c_coefficient(t)?)),
            _ => Err(Error::Unsupported(format!("loop order {l} > 1"))),
        }
    }

    /// ℒ_{4,0} = λ δ̃δ̃δ̃.
    pub fn tree_level_4pt(&self) -> Cas {
        self.cas(4, 0, self.cfg.epsilon, vec![CasTerm {
            coeff: self.cfg.lambda,
            label: "lambda".into(),
            root: vec![1, 2, 3, 4],
            far: vec![],
            line: None,
        }])
    }

    /// ℒ^{ε,t}_{6,0}: −½ Σ over the lexicographic ordered 3|3 splits of
    /// λ² C^{ε,t}, merged into the 10 unordered splits with coefficient −λ².
    pub fn tree_level_6pt(&self, t: f64) -> Result<Cas> {
        self.cfg.check_t(t)?;
        let lam2 = self.cfg.lambda * self.cfg.lambda;
        let terms = symmetrized_splits(6, 3)
            .into_iter()
            .map(|(a, b)| {
                let (root, far) = if a.contains(&1) { (a, b) } else { (b, a) };
                CasTerm { coeff: -0.5 * lam2, label: "-lambda^2".into(), root, far, line: Some(Line::Propagator) }
            })
            .collect();
        Ok(self.cas(6, 0, t, merge_terms(terms)))
    }

    /// ℒ^{ε,t}_{2,1} = a^{ε,t}₁ δ̃(x₂, x₁).
    pub fn one_loop_2pt(&self, t: f64) -> Result<Cas> {
        let a = self.a_coefficient(t)?;
        Ok(self.cas(2, 1, t, vec![CasTerm { coeff: a, label: "a(t)".into(), root: vec![1, 2], far: vec![], line: None }]))
    }

    /// ℒ^{ε,t}_{4,1}: bare coupling, three bubble channels and four
    /// tadpole-insertion legs.
    pub fn one_loop_4pt(&self, t: f64) -> Result<Cas> {
        self.cfg.check_t(t)?;
        let lam = self.cfg.lambda;
        let a = self.a_coefficient(t)?;
        let mut terms = vec![CasTerm {
            coeff: self.c_bare()?,
            label: "c_eps".into(),
            root: vec![1, 2, 3, 4],
            far: vec![],
            line: None,
        }];
        for b in 2..=4 {
            let far: Vec<usize> = (2..=4).filter(|&i| i != b).collect();
            terms.push(CasTerm {
                coeff: -0.5 * lam * lam,
                label: "-lambda^2/2".into(),
                root: vec![1, b],
                far,
                line: Some(Line::PropagatorSquared),
            });
        }
        terms.push(CasTerm {
            coeff: -lam * a,
            label: "-lambda*a(t)".into(),
            root: vec![1],
            far: vec![2, 3, 4],
            line: Some(Line::Propagator),
        });
        for i in 2..=4 {
            let root: Vec<usize> = (1..=4).filter(|&k| k != i).collect();
            terms.push(CasTerm {
                coeff: -lam * a,
                label: "-lambda*a(t)".into(),
                root,
                far: vec![i],
                line: Some(Line::Propagator),
            });
        }
        Ok(self.cas(4, 1, t, terms))
    }

    /// ℒ_{n,l} for the implemented orders (4,0), (6,0), (2,0) ≡ 0, (2,1), (4,1).
    pub fn cas_for(&self, n: usize, l: usize, t: f64) -> Result<Cas> {
        match (n, l) {
            (2, 0) => {
                self.cfg.check_t(t)?;
                Ok(self.cas(2, 0, t, vec![]))
            }
            (4, 0) => {
                self.cfg.check_t(t)?;
                let mut c = self.tree_level_4pt();
                c.t = t;
                Ok(c)
            }
            (6, 0) => self.tree_level_6pt(t),
            (2, 1) => self.one_loop_2pt(t),
            (4, 1) => self.one_loop_4pt(t),
            _ if n % 2 == 1 => {
                self.cfg.check_t(t)?;
                Ok(self.cas(n, l, t, vec![]))
            }
            _ => Err(Error::Unsupported(format!("CAS of order (n, l) = ({n}, {l})"))),
        }
    }

    fn cas(&self, n: usize, l: usize, t: f64, terms: Vec<CasTerm>) -> Cas {
        Cas { n, l, epsilon: self.cfg.epsilon, t, mass_sq: self.cfg.mass_sq, terms }
    }

    /// ℒ(x₁, φ) for explicit slot functions of slots 2..=n.
    pub fn fold_slots(&self, cas: &Cas, x1: &ChartPoint, slots: &[Slot]) -> Result<Folded> {
        if slots.len() + 1 != cas.n {
            return Err(Error::Parameter(format!("need {} slot functions, got {}", cas.n - 1, slots.len())));
        }
        if (cas.epsilon, cas.mass_sq) != (self.cfg.epsilon, self.cfg.mass_sq) {
            return Err(Error::Parameter("CAS was built for another configuration".into()));
        }
        self.cfg.model.check(x1)?;
        let m = &self.cfg.model;
        let mut parts = Vec::with_capacity(cas.terms.len());
        for term in &cas.terms {
            // Factors and far kernels are taken in a canonical order so that
            // permuted slot assignments give bitwise identical values.
            let mut factors = Vec::with_capacity(term.root.len());
            for &i in term.root.iter().filter(|&&i| i != 1) {
                if let Slot::Kernel { tau, y } = slots[i - 2] {
                    factors.push(self.hk.radial(tau, m.distance(x1, &y)?)?);
                }
            }
            factors.sort_by(f64::total_cmp);
            let root = factors.iter().fold(term.coeff, |acc, f| acc * f);
            let Some(line) = term.line else {
                parts.push(Folded { value: root, error: 0.0 });
                continue;
            };
            let mut far: Vec<(f64, ChartPoint)> = term
                .far
                .iter()
                .filter_map(|&i| match slots[i - 2] {
                    Slot::Kernel { tau, y } => Some((tau, y)),
                    Slot::One => None,
                })
                .collect();
            far.sort_by(|a, b| {
                a.0.total_cmp(&b.0).then_with(|| {
                    a.1.coords.iter().zip(&b.1.coords).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                })
            });
            let li = self.lines.integrate(line, cas.t, x1, &far)?;
            parts.push(Folded { value: root * li.value, error: (root * li.error).abs() });
        }
        // Summation in sorted order makes permuted slot assignments bitwise equal.
        parts.sort_by(|a, b| a.value.total_cmp(&b.value));
        let value = parts.iter().map(|p| p.value).sum();
        let error = parts.iter().map(|p| p.error * p.error).sum::<f64>().sqrt();
        Ok(Folded { value, error })
    }

    /// ℒ(x₁, φ) for a test function, expanding a difference slot by linearity.
    pub fn fold(&self, cas: &Cas, x1: &ChartPoint, phi: &TestFunctionSpec) -> Result<Folded> {
        phi.validate(&self.cfg.model, self.cfg.epsilon, cas.n)?;
        let slots = phi.slots(cas.n);
        let base = self.fold_slots(cas, x1, &slots)?;
        let Some(j) = phi.difference else {
            return Ok(base);
        };
        let (tau, y) = phi.kernels[j - 2];
        let mut freed = slots;
        freed[j - 2] = Slot::One;
        let sub = self.fold_slots(cas, x1, &freed)?;
        let kx = self.hk.radial(tau, self.cfg.model.distance(x1, &y)?)?;
        Ok(Folded { value: base.value - kx * sub.value, error: base.error.hypot(kx * sub.error) })
    }

    /// Flow run record: relevant-term trajectories and folded values on a t grid.
    pub fn integrate(&self, t_grid: &[f64], x1: &ChartPoint, phi: &TestFunctionSpec, orders: &[(usize, usize)]) -> Result<FlowRecord> {
        let mut rec = FlowRecord {
            manifold: self.cfg.model.label(),
            epsilon: self.cfg.epsilon,
            mass_sq: self.cfg.mass_sq,
            lambda: self.cfg.lambda,
            t: t_grid.to_vec(),
            a: Vec::new(),
            c: Vec::new(),
            folded: Vec::new(),
        };
        for &t in t_grid {
            rec.a.push(self.a_coefficient(t)?);
            rec.c.push(self.c_coefficient(t)?);
            for &(n, l) in orders {
                let cas = self.cas_for(n, l, t)?;
                let mut p = phi.clone();
                p.kernels.truncate(n - 1);
                if p.difference.is_some_and(|j| j > p.s()) {
                    p.difference = None;
                }
                let v = self.fold(&cas, x1, &p)?;
                rec.folded.push(FoldedValue { n, l, t, s: p.s(), value: v.value, error: v.error });
            }
        }
        Ok(rec)
    }
}

/// Break points every decade between `a` and `b` (logarithmic variables).
pub(crate) fn decade_points(a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    let step = std::f64::consts::LN_10;
    let mut x = a + step;
    while x < b - 1e-9 {
        pts.push(x);
        x += step;
    }
    pts.push(b);
    pts
}

/// One folded value in a flow record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedValue {
    pub n: usize,
    pub l: usize,
    #[serde(with = "float")]
    pub t: f64,
    pub s: usize,
    #[serde(with = "float")]
    pub value: f64,
    #[serde(with = "float")]
    pub error: f64,
}

/// JSON record of one flow configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub manifold: String,
    #[serde(with = "float")]
    pub epsilon: f64,
    #[serde(with = "float")]
    pub mass_sq: f64,
    #[serde(with = "float")]
    pub lambda: f64,
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub folded: Vec<FoldedValue>,
}
