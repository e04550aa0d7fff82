//! Bulk-surface reaction systems `(k, m, D, D̃, H, F, G)`.
//!
//! `H: ℝᵏ → ℝᵏ` acts in the bulk, `F: ℝᵏ × ℝᵐ → ℝᵐ` on the surface and
//! `G: ℝᵏ × ℝᵐ → ℝᵏ` is the boundary flux `D ∂u/∂η = G(u, v)`. Rate
//! constants live in a name → value map so that any of them can be
//! overridden from a config without touching the algebraic form.

pub mod expr;
mod user;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BulkMesh, SurfaceMesh};
use crate::scalar::Real;

use expr::{Binding, Expr};
pub use user::{ModelFile, ModelInitial};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["min_system", "signaling", "toy_conserving", "toy_open"];

/// Largest `k + m` an expression model may declare.
pub const MAX_EXPR_SPECIES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Kinetics {
    /// Five-component Min protein model: `u = (D_cyt^ATP, D_cyt^ADP, E_cyt)`,
    /// `v = (D_mem^ATP, E:D_mem^ATP)`.
    Min,
    /// Membrane signalling model with one bulk and two surface species.
    Signaling,
    /// `H = 0`, `F = u²v²`, `G = -u²v²`.
    ToyConserving,
    /// `H = 0`, `F = -u²v²`, `G = u²v²`.
    ToyOpen,
    Expression(ExprKinetics),
}

/// Compiled expression model. Variables are `u_1..u_k` then `v_1..v_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprKinetics {
    pub h: Vec<Expr>,
    pub f: Vec<Expr>,
    pub g: Vec<Expr>,
    pub sources: ExprSources,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprSources {
    #[serde(rename = "H")]
    pub h: Vec<String>,
    #[serde(rename = "F")]
    pub f: Vec<String>,
    #[serde(rename = "G")]
    pub g: Vec<String>,
}

/// `(cᵘ, cᵛ)` with `cᵘ·H ≡ 0` and `cᵘ·G + cᵛ·F ≡ 0` on the orthant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservedCombination {
    pub name: String,
    pub bulk: Vec<f64>,
    pub surface: Vec<f64>,
}

/// A claimed `(V_ij)` parameter set. Species indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredPair {
    pub i: usize,
    pub j: usize,
    #[serde(default = "one")]
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub k_g: Option<f64>,
    #[serde(default)]
    pub k_f: Option<f64>,
    #[serde(default)]
    pub l: Option<u32>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionSystem {
    pub name: String,
    pub bulk_species: Vec<String>,
    pub surface_species: Vec<String>,
    pub diffusivity: Vec<f64>,
    pub surface_diffusivity: Vec<f64>,
    pub rates: BTreeMap<String, f64>,
    pub kinetics: Kinetics,
    pub quasi_positive: bool,
    pub conserved: Vec<ConservedCombination>,
    pub declared: Vec<DeclaredPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionValues<T> {
    pub h: Vec<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
}

/// Initial field for one species: an expression in `r`, `theta`, `x`, `y`
/// or explicit per-cell (per-node) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Expr(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub bulk: Vec<FieldSpec>,
    pub surface: Vec<FieldSpec>,
}

impl ReactionSystem {
    pub fn k(&self) -> usize {
        self.bulk_species.len()
    }

    pub fn m(&self) -> usize {
        self.surface_species.len()
    }

    fn rate(&self, name: &str) -> f64 {
        self.rates[name]
    }

    /// Returns a copy with rate constants (or model parameters) replaced.
    /// Diffusivities are addressed as `D1..Dk` and `Dt1..Dtm`.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut out = self.clone();
        for (key, &value) in overrides {
            if !value.is_finite() {
                return Err(Error::Config(format!("override `{key}` is not finite")));
            }
            if let Some(idx) = key.strip_prefix("Dt").and_then(|s| s.parse::<usize>().ok()) {
                let slot = idx
                    .checked_sub(1)
                    .and_then(|i| out.surface_diffusivity.get_mut(i))
                    .ok_or_else(|| Error::Config(format!("no surface species for `{key}`")))?;
                *slot = value;
            } else if let Some(idx) = key.strip_prefix('D').and_then(|s| s.parse::<usize>().ok()) {
                let slot = idx
                    .checked_sub(1)
                    .and_then(|i| out.diffusivity.get_mut(i))
                    .ok_or_else(|| Error::Config(format!("no bulk species for `{key}`")))?;
                *slot = value;
            } else if let Some(slot) = out.rates.get_mut(key) {
                *slot = value;
            } else {
                let known: Vec<&str> = self.rates.keys().map(String::as_str).collect();
                return Err(Error::Config(format!(
                    "unknown rate `{key}` for model `{}` (known: {})",
                    self.name,
                    known.join(", ")
                )));
            }
        }
        if let Kinetics::Expression(_) = out.kinetics {
            out = user::recompile(&out)?;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.diffusivity.len() != self.k() || self.surface_diffusivity.len() != self.m() {
            return Err(Error::Config(format!(
                "model `{}`: diffusivity counts do not match species counts",
                self.name
            )));
        }
        for (label, d) in self
            .diffusivity
            .iter()
            .chain(&self.surface_diffusivity)
            .enumerate()
        {
            if !(*d > 0.0) || !d.is_finite() {
                return Err(Error::Config(format!(
                    "model `{}`: diffusivity #{} must be positive, got {d}",
                    self.name,
                    label + 1
                )));
            }
        }
        for c in &self.conserved {
            if c.bulk.len() != self.k() || c.surface.len() != self.m() {
                return Err(Error::Config(format!(
                    "model `{}`: conserved combination `{}` has wrong dimensions",
                    self.name, c.name
                )));
            }
        }
        for p in &self.declared {
            if p.i == 0 || p.i > self.m() || p.j == 0 || p.j > self.k() {
                return Err(Error::Config(format!(
                    "model `{}`: declared pair (i={}, j={}) out of range",
                    self.name, p.i, p.j
                )));
            }
        }
        Ok(())
    }

    /// Bulk reaction `H(u)` without finiteness checks.
    pub fn bulk_into<T: Real>(&self, u: &[T], h: &mut [T]) {
        match &self.kinetics {
            Kinetics::Min => {
                let k1 = T::lit(self.rate("k1"));
                h[0] = k1 * u[1];
                h[1] = -(k1 * u[1]);
                h[2] = T::zero();
            }
            Kinetics::Signaling | Kinetics::ToyConserving | Kinetics::ToyOpen => {
                h[0] = T::zero();
            }
            Kinetics::Expression(ex) => {
                let mut vars = [T::zero(); MAX_EXPR_SPECIES];
                vars[..u.len()].copy_from_slice(u);
                for (out, e) in h.iter_mut().zip(&ex.h) {
                    *out = e.eval(&vars);
                }
            }
        }
    }

    /// Surface reaction `F(u, v)` and boundary flux `G(u, v)` without
    /// finiteness checks; `u` is the bulk trace.
    pub fn boundary_into<T: Real>(&self, u: &[T], v: &[T], f: &mut [T], g: &mut [T]) {
        match &self.kinetics {
            Kinetics::Min => {
                let r = |name| T::lit(self.rate(name));
                let (k2, k3, k4, k5, k6) = (r("k2"), r("k3"), r("k4"), r("k5"), r("k6"));
                let (u1, u3) = (u[0], u[2]);
                let (v1, v2) = (v[0], v[1]);
                let r_dcyt = k2 * u1;
                let r_dmem = k3 * v1 * u1;
                let r_ecyt = k4 * u3 * v1;
                let r_emem = k5 * v1 * u3 * v2 * v2;
                let r_exp = k6 * v2;
                g[0] = -r_dcyt - r_dmem;
                g[1] = r_exp;
                g[2] = r_exp - r_ecyt - r_emem;
                f[0] = r_dcyt + r_dmem - r_ecyt - r_emem;
                f[1] = -r_exp + r_ecyt + r_emem;
            }
            Kinetics::Signaling => {
                let r = |name| T::lit(self.rate(name));
                let (k1, k2, k3, k4) = (r("k1"), r("k2"), r("k3"), r("k4"));
                let (big_k5, g0, c_max) = (r("K5"), r("g0"), r("c_max"));
                let (b6, b_m6, area_ratio) = (r("b6"), r("b_minus6"), r("B_over_M"));
                let uu = u[0];
                let (v1, v2) = (v[0], v[1]);
                let free = (c_max - v1 - v2).max(T::zero());
                let q = b6 * area_ratio * uu * free - b_m6 * v2;
                let bound = big_k5 * v1 * g0 / (T::one() + big_k5 * v1);
                let transfer = k1 * v2 * g0 * (T::one() - bound) + k2 * v2 * bound;
                let release = k3 * v1 / (v1 + k4);
                g[0] = -q;
                f[0] = transfer - release;
                f[1] = -transfer + release + q;
            }
            Kinetics::ToyConserving => {
                let s = u[0] * u[0] * v[0] * v[0];
                f[0] = s;
                g[0] = -s;
            }
            Kinetics::ToyOpen => {
                let s = u[0] * u[0] * v[0] * v[0];
                f[0] = -s;
                g[0] = s;
            }
            Kinetics::Expression(ex) => {
                let k = u.len();
                let mut vars = [T::zero(); MAX_EXPR_SPECIES];
                vars[..k].copy_from_slice(u);
                vars[k..k + v.len()].copy_from_slice(v);
                for (out, e) in f.iter_mut().zip(&ex.f) {
                    *out = e.eval(&vars);
                }
                for (out, e) in g.iter_mut().zip(&ex.g) {
                    *out = e.eval(&vars);
                }
            }
        }
    }

    /// Checked `H(u)`.
    pub fn eval_bulk<T: Real>(&self, u: &[T], h: &mut [T]) -> Result<()> {
        self.bulk_into(u, h);
        if h.iter().any(|x| !x.is_finite()) {
            return Err(self.eval_error("H", u, &[]));
        }
        Ok(())
    }

    /// Checked `F(u, v)`, `G(u, v)`.
    pub fn eval_boundary<T: Real>(&self, u: &[T], v: &[T], f: &mut [T], g: &mut [T]) -> Result<()> {
        self.boundary_into(u, v, f, g);
        if f.iter().any(|x| !x.is_finite()) {
            return Err(self.eval_error("F", u, v));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(self.eval_error("G", u, v));
        }
        Ok(())
    }

    /// Pointwise `(H, F, G)` at `(u, v)`.
    pub fn eval_reactions<T: Real>(&self, u: &[T], v: &[T]) -> Result<ReactionValues<T>> {
        if u.len() != self.k() || v.len() != self.m() {
            return Err(Error::Precondition(format!(
                "model `{}` expects {} bulk and {} surface values, got {} and {}",
                self.name,
                self.k(),
                self.m(),
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v).any(|x| !x.is_finite()) {
            return Err(self.eval_error("input", u, v));
        }
        let mut out = ReactionValues {
            h: vec![T::zero(); self.k()],
            f: vec![T::zero(); self.m()],
            g: vec![T::zero(); self.k()],
        };
        self.eval_bulk(u, &mut out.h)?;
        self.eval_boundary(u, v, &mut out.f, &mut out.g)?;
        Ok(out)
    }

    fn eval_error<T: Real>(&self, component: &str, u: &[T], v: &[T]) -> Error {
        Error::ModelEval {
            component: format!("{}::{component}", self.name),
            u: u.iter().map(|x| x.as_f64()).collect(),
            v: v.iter().map(|x| x.as_f64()).collect(),
        }
    }
}

/// Known conserved combinations of a system (empty when none is known).
pub fn conserved_combinations(sys: &ReactionSystem) -> Vec<ConservedCombination> {
    sys.conserved.clone()
}

fn rates(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn exprs(items: &[&str]) -> Vec<FieldSpec> {
    items.iter().map(|s| FieldSpec::Expr((*s).to_string())).collect()
}

/// Built-in system with its default initial data. All rate constants
/// default to 1.
pub fn builtin(name: &str) -> Result<(ReactionSystem, InitialData)> {
    let (sys, init) = match name {
        "min_system" => (
            ReactionSystem {
                name: name.into(),
                bulk_species: vec!["D_cyt_ATP".into(), "D_cyt_ADP".into(), "E_cyt".into()],
                surface_species: vec!["D_mem_ATP".into(), "ED_mem_ATP".into()],
                diffusivity: vec![1.0; 3],
                surface_diffusivity: vec![1.0; 2],
                rates: rates(&[("k1", 1.0), ("k2", 1.0), ("k3", 1.0), ("k4", 1.0), ("k5", 1.0), ("k6", 1.0)]),
                kinetics: Kinetics::Min,
                quasi_positive: true,
                conserved: vec![
                    ConservedCombination {
                        name: "total_MinD".into(),
                        bulk: vec![1.0, 1.0, 0.0],
                        surface: vec![1.0, 1.0],
                    },
                    ConservedCombination {
                        name: "total_MinE".into(),
                        bulk: vec![0.0, 0.0, 1.0],
                        surface: vec![0.0, 1.0],
                    },
                ],
                declared: vec![
                    DeclaredPair { i: 2, j: 3, sigma: 1.0, alpha: 1.0, beta: 1.0, k_g: Some(1.0), k_f: None, l: None },
                ],
            },
            InitialData {
                bulk: exprs(&[
                    "1 + 0.25*r^2*cos(theta)",
                    "0.5 + 0.25*r^2*sin(theta)",
                    "1 + 0.2*r^2*cos(2*theta)",
                ]),
                surface: exprs(&["0.5 + 0.2*cos(theta)", "0.4 + 0.2*sin(theta)"]),
            },
        ),
        "signaling" => (
            ReactionSystem {
                name: name.into(),
                bulk_species: vec!["u".into()],
                surface_species: vec!["v1".into(), "v2".into()],
                diffusivity: vec![1.0],
                surface_diffusivity: vec![1.0; 2],
                rates: rates(&[
                    ("k1", 1.0),
                    ("k2", 1.0),
                    ("k3", 1.0),
                    ("k4", 1.0),
                    ("K5", 1.0),
                    ("g0", 1.0),
                    ("c_max", 1.0),
                    ("b6", 1.0),
                    ("b_minus6", 1.0),
                    ("B_over_M", 1.0),
                ]),
                kinetics: Kinetics::Signaling,
                quasi_positive: true,
                conserved: vec![ConservedCombination {
                    name: "total".into(),
                    bulk: vec![1.0],
                    surface: vec![1.0, 1.0],
                }],
                declared: vec![DeclaredPair {
                    i: 2,
                    j: 1,
                    sigma: 1.0,
                    alpha: 1.0,
                    beta: 1.0,
                    k_g: Some(1.0),
                    k_f: None,
                    l: None,
                }],
            },
            InitialData {
                bulk: exprs(&["1 + 0.2*r^2*cos(theta)"]),
                surface: exprs(&["0.3 + 0.1*cos(theta)", "0.3 + 0.1*sin(theta)"]),
            },
        ),
        "toy_conserving" | "toy_open" => (
            ReactionSystem {
                name: name.into(),
                bulk_species: vec!["u".into()],
                surface_species: vec!["v".into()],
                diffusivity: vec![1.0],
                surface_diffusivity: vec![1.0],
                rates: BTreeMap::new(),
                kinetics: if name == "toy_conserving" {
                    Kinetics::ToyConserving
                } else {
                    Kinetics::ToyOpen
                },
                quasi_positive: true,
                conserved: vec![ConservedCombination {
                    name: "total".into(),
                    bulk: vec![1.0],
                    surface: vec![1.0],
                }],
                declared: if name == "toy_conserving" {
                    vec![DeclaredPair { i: 1, j: 1, sigma: 1.0, alpha: 1.0, beta: 1.0, k_g: Some(1.0), k_f: Some(1.0), l: Some(4) }]
                } else {
                    Vec::new()
                },
            },
            InitialData {
                bulk: exprs(&["1 + 0.3*r^2*cos(theta)"]),
                surface: exprs(&["1 + 0.3*sin(theta)"]),
            },
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown built-in model `{other}` (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    sys.validate()?;
    Ok((sys, init))
}

impl InitialData {
    /// Uniform data: every bulk species `bulk`, every surface species `surface`.
    pub fn uniform(k: usize, m: usize, bulk: f64, surface: f64) -> Self {
        InitialData {
            bulk: vec![FieldSpec::Values(vec![bulk]); k],
            surface: vec![FieldSpec::Values(vec![surface]); m],
        }
    }

    /// Evaluates the data on the meshes. A one-element `Values` list is
    /// broadcast as a constant.
    pub fn realize<T: Real>(
        &self,
        sys: &ReactionSystem,
        bulk: &BulkMesh<T>,
        surface: &SurfaceMesh<T>,
    ) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
        if self.bulk.len() != sys.k() || self.surface.len() != sys.m() {
            return Err(Error::Config(format!(
                "initial data has {} bulk and {} surface fields; model `{}` needs {} and {}",
                self.bulk.len(),
                self.surface.len(),
                sys.name,
                sys.k(),
                sys.m()
            )));
        }
        let realize_one = |spec: &FieldSpec, points: &[(T, T)]| -> Result<Vec<T>> {
            let values = match spec {
                FieldSpec::Values(vals) if vals.len() == 1 => vec![T::lit(vals[0]); points.len()],
                FieldSpec::Values(vals) if vals.len() == points.len() => vals.iter().map(|&x| T::lit(x)).collect(),
                FieldSpec::Values(vals) => {
                    return Err(Error::Config(format!(
                        "initial values list has {} entries, expected 1 or {}",
                        vals.len(),
                        points.len()
                    )))
                }
                FieldSpec::Expr(src) => {
                    let e = expr::parse(src, expr::spatial_resolver)?;
                    points
                        .iter()
                        .map(|&(r, th)| e.eval(&[r, th, r * th.cos(), r * th.sin()]))
                        .collect()
                }
            };
            if values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("initial data is not finite".into()));
            }
            Ok(values)
        };
        let cells = &bulk.cell_centers;
        let nodes: Vec<(T, T)> = surface.node_angles.iter().map(|&th| (surface.radius, th)).collect();
        let u = self
            .bulk
            .iter()
            .map(|s| realize_one(s, cells))
            .collect::<Result<Vec<_>>>()?;
        let v = self
            .surface
            .iter()
            .map(|s| realize_one(s, &nodes))
            .collect::<Result<Vec<_>>>()?;
        Ok((u, v))
    }
}

/// Resolver for reaction expressions: species names, `u1..uk`, `v1..vm`,
/// parameters and `pi`.
pub(crate) fn species_resolver<'a>(
    bulk: &'a [String],
    surface: &'a [String],
    params: &'a BTreeMap<String, f64>,
) -> impl Fn(&str) -> Option<Binding> + 'a {
    move |name: &str| {
        let k = bulk.len();
        if let Some(i) = bulk.iter().position(|s| s == name) {
            return Some(Binding::Var(i));
        }
        if let Some(i) = surface.iter().position(|s| s == name) {
            return Some(Binding::Var(k + i));
        }
        if let Some(&c) = params.get(name) {
            return Some(Binding::Const(c));
        }
        let indexed = |prefix: char, count: usize| {
            name.strip_prefix(prefix)
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&i| i >= 1 && i <= count)
        };
        if let Some(i) = indexed('u', k) {
            return Some(Binding::Var(i - 1));
        }
        if let Some(i) = indexed('v', surface.len()) {
            return Some(Binding::Var(k + i - 1));
        }
        if name == "pi" {
            return Some(Binding::Const(std::f64::consts::PI));
        }
        None
    }
}
