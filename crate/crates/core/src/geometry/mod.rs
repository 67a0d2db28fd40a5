//! Constant-curvature model manifolds.
//!
//! Points are stored as embedding coordinates: Cartesian for flat ℝⁿ, the sphere
//! |X| = R ⊂ ℝⁿ⁺¹ (R = 1/κ), and the upper hyperboloid −X₀² + |X|² = −R² (R = 1/k).
//! Index 0 of a curved point is the "pole" coordinate X₀, the origin is (R, 0, …, 0).
//!
//! Tensor components (metric, Christoffel symbols, σ, ∇f) are expressed in one
//! fixed conformal chart u ∈ ℝⁿ centred at the origin: stereographic coordinates
//! on the sphere and the Poincaré ball on the hyperboloid. In this chart
//! g = Ω²δ with Ω = 1/(1 + c|u|²/4), c the sectional curvature, which keeps all
//! derived quantities in closed form.

mod taylor;

pub use taylor::{covariant_taylor, TaylorResult};

use crate::error::{Error, Result};
use crate::quad::{gauss_kronrod, QuadOpts};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest supported manifold dimension.
pub const MAX_DIM: usize = 4;
/// Ambient coordinate storage (n + 1 ≤ 5 entries are used).
pub type Ambient = [f64; MAX_DIM + 1];
/// Chart vectors and matrices (first n entries are used).
pub type ChartVec = [f64; MAX_DIM];
/// n×n matrix in chart components.
pub type ChartMat = [[f64; MAX_DIM]; MAX_DIM];

/// Relative tolerance for the embedding constraints.
pub const POINT_TOL: f64 = 1e-12;
/// Pairs closer than this to the sphere cut locus are rejected.
pub const CUT_LOCUS_MARGIN: f64 = 1e-6;

/// The three model geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Flat,
    Sphere,
    Hyperbolic,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kind::Flat => "flat",
            Kind::Sphere => "sphere",
            Kind::Hyperbolic => "hyperbolic",
        })
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flat" | "r" | "euclidean" => Ok(Kind::Flat),
            "sphere" | "s" => Ok(Kind::Sphere),
            "hyperbolic" | "h" => Ok(Kind::Hyperbolic),
            other => Err(Error::Parameter(format!("unknown manifold kind '{other}'"))),
        }
    }
}

/// A constant-curvature model space of dimension 2 ≤ n ≤ 4.
///
/// `curvature` is κ for the sphere (Sec = κ²), k for hyperbolic space
/// (Sec = −k²) and ignored for flat space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: Kind,
    pub dim: usize,
    pub curvature: f64,
}

/// A point in embedding coordinates; see the module documentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub coords: Ambient,
}

impl ChartPoint {
    /// Point from a slice of embedding coordinates (missing entries are zero).
    pub fn from_slice(v: &[f64]) -> Self {
        let mut coords = [0.0; MAX_DIM + 1];
        coords[..v.len()].copy_from_slice(v);
        ChartPoint { coords }
    }
}

impl ManifoldModel {
    /// Validated constructor.
    pub fn new(kind: Kind, dim: usize, curvature: f64) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::Parameter(format!("dimension {dim} outside 2..=4")));
        }
        let curvature = match kind {
            Kind::Flat => 0.0,
            _ if !(curvature.is_finite() && curvature > 0.0) => {
                return Err(Error::Parameter(format!("curvature parameter must be > 0, got {curvature}")))
            }
            _ => curvature,
        };
        Ok(ManifoldModel { kind, dim, curvature })
    }
    /// Flat ℝⁿ.
    pub fn flat(dim: usize) -> Self {
        Self::new(Kind::Flat, dim, 0.0).expect("valid flat model")
    }
    /// Sphere Sⁿ with Sec = κ².
    pub fn sphere(dim: usize, kappa: f64) -> Self {
        Self::new(Kind::Sphere, dim, kappa).expect("valid sphere model")
    }
    /// Hyperbolic space Hⁿ with Sec = −k².
    pub fn hyperbolic(dim: usize, k: f64) -> Self {
        Self::new(Kind::Hyperbolic, dim, k).expect("valid hyperbolic model")
    }

    /// Short label such as `S4(1)`.
    pub fn label(&self) -> String {
        match self.kind {
            Kind::Flat => format!("R{}", self.dim),
            Kind::Sphere => format!("S{}({})", self.dim, self.curvature),
            Kind::Hyperbolic => format!("H{}({})", self.dim, self.curvature),
        }
    }

    /// Sectional curvature: κ², −k² or 0.
    pub fn sectional(&self) -> f64 {
        match self.kind {
            Kind::Flat => 0.0,
            Kind::Sphere => self.curvature * self.curvature,
            Kind::Hyperbolic => -self.curvature * self.curvature,
        }
    }

    /// Scalar curvature n(n−1)·Sec of the model.
    pub fn scalar_curvature_const(&self) -> f64 {
        (self.dim * (self.dim - 1)) as f64 * self.sectional()
    }

    /// Curvature radius R = 1/κ or 1/k (infinite for flat space).
    pub fn radius(&self) -> f64 {
        match self.kind {
            Kind::Flat => f64::INFINITY,
            _ => 1.0 / self.curvature,
        }
    }

    /// Number of embedding coordinates.
    pub fn ambient_len(&self) -> usize {
        match self.kind {
            Kind::Flat => self.dim,
            _ => self.dim + 1,
        }
    }

    /// Bottom of the spectrum of −Δ: (n−1)²k²/4 on Hⁿ, 0 otherwise.
    pub fn spectral_bottom(&self) -> f64 {
        match self.kind {
            Kind::Hyperbolic => ((self.dim - 1) as f64).powi(2) * self.curvature.powi(2) / 4.0,
            _ => 0.0,
        }
    }

    /// Geodesic diameter (π/κ on the sphere, ∞ otherwise).
    pub fn diameter(&self) -> f64 {
        match self.kind {
            Kind::Sphere => PI / self.curvature,
            _ => f64::INFINITY,
        }
    }

    /// Jacobi field length sn(r): r, sin(κr)/κ, sinh(kr)/k.
    pub fn sn(&self, r: f64) -> f64 {
        match self.kind {
            Kind::Flat => r,
            Kind::Sphere => (self.curvature * r).sin() / self.curvature,
            Kind::Hyperbolic => (self.curvature * r).sinh() / self.curvature,
        }
    }

    /// Volume density in geodesic polar coordinates: sn(r)^{n−1}.
    pub fn radial_density(&self, r: f64) -> f64 {
        self.sn(r).powi(self.dim as i32 - 1)
    }

    /// The origin: 0 (flat) or (R, 0, …, 0).
    pub fn origin(&self) -> ChartPoint {
        let mut c = [0.0; MAX_DIM + 1];
        if self.kind != Kind::Flat {
            c[0] = self.radius();
        }
        ChartPoint { coords: c }
    }

    /// Ambient bilinear form: Euclidean, or Minkowski (−X₀Y₀ + …) on the hyperboloid.
    pub fn inner(&self, a: &Ambient, b: &Ambient) -> f64 {
        let len = self.ambient_len();
        let mut s: f64 = (0..len).map(|i| a[i] * b[i]).sum();
        if self.kind == Kind::Hyperbolic {
            s -= 2.0 * a[0] * b[0];
        }
        s
    }

    /// Check the embedding constraint.
    pub fn check(&self, x: &ChartPoint) -> Result<()> {
        if x.coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        if x.coords[self.ambient_len()..].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidPoint("coordinates beyond the embedding dimension".into()));
        }
        match self.kind {
            Kind::Flat => Ok(()),
            Kind::Sphere => {
                let r = self.radius();
                let norm = self.inner(&x.coords, &x.coords).sqrt();
                if ((norm - r) / r).abs() > POINT_TOL {
                    return Err(Error::InvalidPoint(format!("|x| = {norm} but sphere radius is {r}")));
                }
                Ok(())
            }
            Kind::Hyperbolic => {
                let r = self.radius();
                let q = self.inner(&x.coords, &x.coords) + r * r;
                let scale = x.coords[0] * x.coords[0] + r * r;
                if x.coords[0] <= 0.0 || (q / scale).abs() > POINT_TOL {
                    return Err(Error::InvalidPoint("point is off the upper hyperboloid".into()));
                }
                Ok(())
            }
        }
    }

    /// Re-project nearly valid coordinates onto the manifold.
    pub fn project(&self, x: &Ambient) -> ChartPoint {
        let mut c = *x;
        let len = self.ambient_len();
        c[len..].iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            Kind::Flat => {}
            Kind::Sphere => {
                let norm = (0..len).map(|i| c[i] * c[i]).sum::<f64>().sqrt();
                let s = self.radius() / norm;
                c[..len].iter_mut().for_each(|v| *v *= s);
            }
            Kind::Hyperbolic => {
                let sp: f64 = (1..len).map(|i| c[i] * c[i]).sum();
                c[0] = (self.radius().powi(2) + sp).sqrt();
            }
        }
        ChartPoint { coords: c }
    }

    /// Geodesic distance using cancellation-free chord formulas.
    pub fn distance(&self, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// [`distance`](Self::distance) without constraint checks (hot loops).
    pub fn distance_unchecked(&self, x: &ChartPoint, y: &ChartPoint) -> f64 {
        let mut diff = [0.0; MAX_DIM + 1];
        for i in 0..self.ambient_len() {
            diff[i] = x.coords[i] - y.coords[i];
        }
        let chord2 = self.inner(&diff, &diff).max(0.0);
        match self.kind {
            Kind::Flat => chord2.sqrt(),
            Kind::Sphere => {
                let r = self.radius();
                2.0 * r * (chord2.sqrt() / (2.0 * r)).min(1.0).asin()
            }
            Kind::Hyperbolic => {
                let r = self.radius();
                2.0 * r * (chord2.sqrt() / (2.0 * r)).asinh()
            }
        }
    }

    /// Riemannian logarithm: the ambient tangent vector at x pointing to y with length d(x,y).
    pub fn log(&self, x: &ChartPoint, y: &ChartPoint) -> Result<Ambient> {
        let d = self.distance(x, y)?;
        if self.kind == Kind::Sphere && d >= self.diameter() - CUT_LOCUS_MARGIN {
            return Err(Error::CutLocus(format!("d = {d} is within the cut-locus margin")));
        }
        let len = self.ambient_len();
        let mut w = [0.0; MAX_DIM + 1];
        match self.kind {
            Kind::Flat => {
                for i in 0..len {
                    w[i] = y.coords[i] - x.coords[i];
                }
                return Ok(w);
            }
            _ => {
                // Component of y − x orthogonal to x; equals y − cos(θ)x up to a multiple of x.
                let r2 = self.radius().powi(2);
                let mut diff = [0.0; MAX_DIM + 1];
                for i in 0..len {
                    diff[i] = y.coords[i] - x.coords[i];
                }
                let sign = if self.kind == Kind::Sphere { 1.0 } else { -1.0 };
                let proj = sign * self.inner(&x.coords, &diff) / r2;
                for i in 0..len {
                    w[i] = diff[i] - proj * x.coords[i];
                }
            }
        }
        let wn = self.inner(&w, &w).max(0.0).sqrt();
        if wn == 0.0 || d == 0.0 {
            return Ok([0.0; MAX_DIM + 1]);
        }
        w.iter_mut().for_each(|v| *v *= d / wn);
        Ok(w)
    }

    /// Riemannian exponential of the ambient tangent vector v at x.
    pub fn exp(&self, x: &ChartPoint, v: &Ambient) -> ChartPoint {
        let len = self.ambient_len();
        let mut out = [0.0; MAX_DIM + 1];
        match self.kind {
            Kind::Flat => {
                for i in 0..len {
                    out[i] = x.coords[i] + v[i];
                }
            }
            _ => {
                let r = self.radius();
                let vn = self.inner(v, v).max(0.0).sqrt();
                let th = vn / r;
                let (c, s) = match self.kind {
                    Kind::Sphere => (th.cos(), if th > 0.0 { r * th.sin() / vn } else { 1.0 }),
                    _ => (th.cosh(), if th > 0.0 { r * th.sinh() / vn } else { 1.0 }),
                };
                for i in 0..len {
                    out[i] = c * x.coords[i] + s * v[i];
                }
            }
        }
        self.project(&out)
    }

    /// Linear isometry of the ambient space mapping the origin to `x`
    /// (translation, Householder reflection, or Lorentz boost), applied to `v`.
    /// For flat space `affine` selects whether the translation is added.
    fn isometry_apply(&self, x: &ChartPoint, v: &Ambient, affine: bool) -> Ambient {
        let len = self.ambient_len();
        let mut out = [0.0; MAX_DIM + 1];
        match self.kind {
            Kind::Flat => {
                for i in 0..len {
                    out[i] = v[i] + if affine { x.coords[i] } else { 0.0 };
                }
            }
            Kind::Sphere => {
                let r = self.radius();
                let mut w = x.coords;
                w[0] -= r;
                let ww: f64 = (0..len).map(|i| w[i] * w[i]).sum();
                if ww < 1e-30 * r * r {
                    return *v;
                }
                let wv: f64 = (0..len).map(|i| w[i] * v[i]).sum();
                for i in 0..len {
                    out[i] = v[i] - 2.0 * wv / ww * w[i];
                }
            }
            Kind::Hyperbolic => {
                let r = self.radius();
                let u0 = x.coords[0] / r;
                let us: Vec<f64> = (1..len).map(|i| x.coords[i] / r).collect();
                let dot: f64 = (1..len).map(|i| us[i - 1] * v[i]).sum();
                out[0] = u0 * v[0] + dot;
                for i in 1..len {
                    out[i] = us[i - 1] * v[0] + v[i] + us[i - 1] * dot / (1.0 + u0);
                }
            }
        }
        out
    }

    /// Point at geodesic distance `r` from `center` in the unit direction `omega`
    /// (n components, expressed in the frame transported from the origin).
    pub fn point_at(&self, center: &ChartPoint, r: f64, omega: &[f64]) -> ChartPoint {
        let n = self.dim;
        let mut w = [0.0; MAX_DIM + 1];
        match self.kind {
            Kind::Flat => {
                for i in 0..n {
                    w[i] = r * omega[i];
                }
            }
            _ => {
                let rad = self.radius();
                let th = r / rad;
                let (c, s) = match self.kind {
                    Kind::Sphere => (th.cos(), th.sin()),
                    _ => (th.cosh(), th.sinh()),
                };
                w[0] = rad * c;
                for i in 0..n {
                    w[i + 1] = rad * s * omega[i];
                }
            }
        }
        self.project(&self.isometry_apply(center, &w, true))
    }

    /// Orthonormal tangent frame at `x`, transported from the origin by the isometry.
    pub fn tangent_frame(&self, x: &ChartPoint) -> Vec<Ambient> {
        let off = if self.kind == Kind::Flat { 0 } else { 1 };
        (0..self.dim)
            .map(|i| {
                let mut e = [0.0; MAX_DIM + 1];
                e[i + off] = 1.0;
                self.isometry_apply(x, &e, false)
            })
            .collect()
    }

    /// Conformal-chart coordinates u of `x`.
    pub fn to_chart(&self, x: &ChartPoint) -> Result<ChartVec> {
        let mut u = [0.0; MAX_DIM];
        match self.kind {
            Kind::Flat => u[..self.dim].copy_from_slice(&x.coords[..self.dim]),
            _ => {
                let den = 1.0 + x.coords[0] / self.radius();
                if den < 1e-12 {
                    return Err(Error::Domain("point at the chart singularity (south pole)".into()));
                }
                for i in 0..self.dim {
                    u[i] = 2.0 * x.coords[i + 1] / den;
                }
            }
        }
        Ok(u)
    }

    /// Point with conformal-chart coordinates u.
    pub fn from_chart(&self, u: &ChartVec) -> Result<ChartPoint> {
        let mut c = [0.0; MAX_DIM + 1];
        match self.kind {
            Kind::Flat => c[..self.dim].copy_from_slice(&u[..self.dim]),
            _ => {
                let q = self.sectional() * u[..self.dim].iter().map(|v| v * v).sum::<f64>() / 4.0;
                if q <= -1.0 {
                    return Err(Error::Domain("chart coordinates outside the Poincaré ball".into()));
                }
                let om = 1.0 / (1.0 + q);
                c[0] = self.radius() * (1.0 - q) * om;
                for i in 0..self.dim {
                    c[i + 1] = om * u[i];
                }
            }
        }
        Ok(self.project(&c))
    }

    /// Conformal factor Ω at chart coordinates u.
    pub fn conformal_factor(&self, u: &ChartVec) -> f64 {
        let q = self.sectional() * u[..self.dim].iter().map(|v| v * v).sum::<f64>() / 4.0;
        1.0 / (1.0 + q)
    }

    /// Metric tensor g_{μν}(x) = Ω²δ_{μν} in the conformal chart.
    pub fn metric_at(&self, x: &ChartPoint) -> Result<ChartMat> {
        self.check(x)?;
        let u = self.to_chart(x)?;
        let om2 = self.conformal_factor(&u).powi(2);
        let mut g = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in g.iter_mut().enumerate().take(self.dim) {
            row[i] = om2;
        }
        Ok(g)
    }

    /// Christoffel symbols Γ^k_{ij} (indexed `[k][i][j]`) in the conformal chart.
    pub fn christoffels(&self, x: &ChartPoint) -> Result<[[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM]> {
        self.check(x)?;
        let u = self.to_chart(x)?;
        Ok(self.christoffels_chart(&u))
    }

    /// Christoffel symbols at chart coordinates u.
    pub fn christoffels_chart(&self, u: &ChartVec) -> [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM] {
        let n = self.dim;
        let om = self.conformal_factor(u);
        // ∂_j ln Ω
        let mut dphi = [0.0; MAX_DIM];
        for j in 0..n {
            dphi[j] = -0.5 * self.sectional() * om * u[j];
        }
        let mut gam = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 0.0;
                    if k == i {
                        v += dphi[j];
                    }
                    if k == j {
                        v += dphi[i];
                    }
                    if i == j {
                        v -= dphi[k];
                    }
                    gam[k][i][j] = v;
                }
            }
        }
        gam
    }

    /// Scalar curvature from the conformal-factor formula
    /// R = −Ω⁻²[2(n−1)Δ₀ lnΩ + (n−2)(n−1)|∇₀ lnΩ|²].
    pub fn curvature_scalar(&self, x: &ChartPoint) -> Result<f64> {
        self.check(x)?;
        let u = self.to_chart(x)?;
        let n = self.dim as f64;
        let a = self.sectional() / 4.0;
        let uu: f64 = u[..self.dim].iter().map(|v| v * v).sum();
        let om = self.conformal_factor(&u);
        let lap = -2.0 * a * (n * om - 2.0 * a * om * om * uu);
        let grad2 = 4.0 * a * a * om * om * uu;
        Ok(-(2.0 * (n - 1.0) * lap + (n - 2.0) * (n - 1.0) * grad2) / (om * om))
    }

    /// Ambient coordinate vectors ∂X/∂u_μ of the chart at u.
    fn chart_jacobian(&self, u: &ChartVec) -> Vec<Ambient> {
        let n = self.dim;
        let c = self.sectional();
        let om = self.conformal_factor(u);
        (0..n)
            .map(|mu| {
                let mut j = [0.0; MAX_DIM + 1];
                match self.kind {
                    Kind::Flat => j[mu] = 1.0,
                    _ => {
                        j[0] = -self.radius() * c * om * om * u[mu];
                        for i in 0..n {
                            j[i + 1] = -0.5 * om * om * c * u[mu] * u[i];
                        }
                        j[mu + 1] += om;
                    }
                }
                j
            })
            .collect()
    }

    /// Chart components of an ambient tangent vector at x.
    pub fn ambient_to_chart_vector(&self, x: &ChartPoint, v: &Ambient) -> Result<ChartVec> {
        let u = self.to_chart(x)?;
        let om2 = self.conformal_factor(&u).powi(2);
        let jac = self.chart_jacobian(&u);
        let mut out = [0.0; MAX_DIM];
        for (mu, j) in jac.iter().enumerate() {
            out[mu] = self.inner(j, v) / om2;
        }
        Ok(out)
    }

    /// Ambient form of a tangent vector given by chart components at x.
    pub fn chart_to_ambient_vector(&self, x: &ChartPoint, v: &ChartVec) -> Result<Ambient> {
        let u = self.to_chart(x)?;
        let jac = self.chart_jacobian(&u);
        let mut out = [0.0; MAX_DIM + 1];
        for (mu, j) in jac.iter().enumerate() {
            for i in 0..self.ambient_len() {
                out[i] += v[mu] * j[i];
            }
        }
        Ok(out)
    }

    /// The bi-tensor σ(x,y)^μ: tangent vector at y with g(σ,σ) = d²(x,y),
    /// pointing away from x (σ(x,y) = y − x in flat space).
    pub fn sigma(&self, x: &ChartPoint, y: &ChartPoint) -> Result<ChartVec> {
        let mut v = self.log(y, x)?;
        v.iter_mut().for_each(|c| *c = -*c);
        self.ambient_to_chart_vector(y, &v)
    }

    /// Point X(ρ) on the minimizing geodesic from x0 (ρ = 0) to x (ρ = 1).
    pub fn geodesic_point(&self, x0: &ChartPoint, x: &ChartPoint, rho: f64) -> Result<ChartPoint> {
        Ok(self.segment(x0, x)?.point(rho))
    }

    /// Geodesic segment from x0 to x.
    pub fn segment(&self, x0: &ChartPoint, x: &ChartPoint) -> Result<GeodesicSegment> {
        let v = self.log(x0, x)?;
        let length = self.distance(x0, x)?;
        Ok(GeodesicSegment { model: *self, x0: *x0, x: *x, v, length })
    }

    /// Laplace–Beltrami operator in divergence form Ω⁻ⁿ ∂_μ(Ωⁿ⁻² ∂_μ f), default step.
    pub fn laplace_beltrami<F: Fn(&ChartPoint) -> f64>(&self, f: F, x: &ChartPoint) -> Result<f64> {
        self.laplace_beltrami_h(f, x, 1e-3)
    }

    /// Laplace–Beltrami operator with an explicit chart step `h` (flux stencil, O(h²)).
    pub fn laplace_beltrami_h<F: Fn(&ChartPoint) -> f64>(&self, f: F, x: &ChartPoint, h: f64) -> Result<f64> {
        self.check(x)?;
        let u0 = self.to_chart(x)?;
        let n = self.dim;
        let fu = |u: &ChartVec| -> Result<f64> { Ok(f(&self.from_chart(u)?)) };
        let f0 = fu(&u0)?;
        let mut acc = 0.0;
        for mu in 0..n {
            let shift = |s: f64| {
                let mut u = u0;
                u[mu] += s;
                u
            };
            let fp = fu(&shift(h))?;
            let fm = fu(&shift(-h))?;
            let wp = self.conformal_factor(&shift(0.5 * h)).powi(n as i32 - 2);
            let wm = self.conformal_factor(&shift(-0.5 * h)).powi(n as i32 - 2);
            acc += (wp * (fp - f0) - wm * (f0 - fm)) / (h * h);
        }
        Ok(acc / self.conformal_factor(&u0).powi(n as i32))
    }

    /// Area of the unit sphere S^{n−1}.
    pub fn unit_sphere_area(n: usize) -> f64 {
        match n {
            1 => 2.0,
            2 => 2.0 * PI,
            3 => 4.0 * PI,
            4 => 2.0 * PI * PI,
            _ => 2.0 * PI.powf(n as f64 / 2.0) / gamma_half_integer(n),
        }
    }

    /// Volume of the geodesic ball of radius r (homogeneous, so independent of the centre).
    pub fn ball_volume(&self, x: &ChartPoint, r: f64) -> Result<f64> {
        self.check(x)?;
        if r < 0.0 {
            return Err(Error::Domain("negative radius".into()));
        }
        if self.kind == Kind::Sphere && self.curvature * r >= PI {
            return Err(Error::Domain(format!("radius {r} reaches the injectivity radius π/κ")));
        }
        let area = Self::unit_sphere_area(self.dim);
        if self.kind == Kind::Flat {
            return Ok(area * r.powi(self.dim as i32) / self.dim as f64);
        }
        let q = gauss_kronrod(|s| self.radial_density(s), 0.0, r, QuadOpts::rel(1e-14))?;
        Ok(area * q.value)
    }
}

/// Γ(n/2) for positive integers n.
fn gamma_half_integer(n: usize) -> f64 {
    if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut a = 0.5;
        while a < n as f64 / 2.0 - 0.25 {
            g *= a;
            a += 1.0;
        }
        g
    }
}

/// h₄(r) = (cosh 3r − 9 cosh r + 8)/(3r⁴), with h₄(0) = 1 (series near 0).
pub fn comparison_h4(r: f64) -> f64 {
    if r.abs() < 1e-2 {
        let r2 = r * r;
        return 1.0 + r2 / 3.0 + 6552.0 / 120960.0 * r2 * r2 + 59040.0 / 10886400.0 * r2 * r2 * r2;
    }
    ((3.0 * r).cosh() - 9.0 * r.cosh() + 8.0) / (3.0 * r.powi(4))
}

/// s₄(r) = (cos 3r − 9 cos r + 8)/(3r⁴), with s₄(0) = 1 (series near 0).
pub fn comparison_s4(r: f64) -> f64 {
    if r.abs() < 1e-2 {
        let r2 = r * r;
        return 1.0 - r2 / 3.0 + 6552.0 / 120960.0 * r2 * r2 - 59040.0 / 10886400.0 * r2 * r2 * r2;
    }
    ((3.0 * r).cos() - 9.0 * r.cos() + 8.0) / (3.0 * r.powi(4))
}

/// A minimizing geodesic segment X(ρ), ρ ∈ [0, 1], with constant speed d(x0, x).
#[derive(Debug, Clone, Copy)]
pub struct GeodesicSegment {
    pub model: ManifoldModel,
    pub x0: ChartPoint,
    pub x: ChartPoint,
    /// log_{x0}(x) as an ambient vector.
    pub v: Ambient,
    pub length: f64,
}

impl GeodesicSegment {
    /// X(ρ) = exp_{x0}(ρ·log_{x0} x).
    pub fn point(&self, rho: f64) -> ChartPoint {
        let mut w = self.v;
        w.iter_mut().for_each(|c| *c *= rho);
        self.model.exp(&self.x0, &w)
    }

    /// Ambient velocity dX/dρ (length = d(x0, x)).
    pub fn velocity(&self, rho: f64) -> Ambient {
        let m = &self.model;
        let len = m.ambient_len();
        let mut out = [0.0; MAX_DIM + 1];
        match m.kind {
            Kind::Flat => out[..len].copy_from_slice(&self.v[..len]),
            _ => {
                let r = m.radius();
                let th = self.length / r;
                if th == 0.0 {
                    return out;
                }
                // X(ρ) = cos(ρθ) x0 + R sin(ρθ) v/|v|; differentiate in ρ.
                let (dc, ds) = match m.kind {
                    Kind::Sphere => (-th * (rho * th).sin(), th * (rho * th).cos()),
                    _ => (th * (rho * th).sinh(), th * (rho * th).cosh()),
                };
                for i in 0..len {
                    out[i] = dc * self.x0.coords[i] + ds * r * self.v[i] / self.length;
                }
            }
        }
        out
    }
}
