//! Sampling checks of quasi-positivity and the `(V_ij1)`–`(V_ij3)`
//! growth conditions, and a search for a global-existence certificate.
//!
//! A violation carries a concrete witness and is a genuine counterexample.
//! "holds" only means no sampled point failed.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reaction_model::ReactionSystem;

pub const EVIDENCE_LABEL: &str = "sampling evidence, not proof";

/// Default box sweep.
pub const DEFAULT_BOXES: [f64; 5] = [1.0, 10.0, 1e2, 1e3, 1e6];

/// Absolute and relative parts of the violation margin.
const ABS_TOL: f64 = 1e-9;
const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    #[serde(rename = "quasi_positive")]
    QuasiPositive,
    V1,
    V2,
    V3,
    /// Linear upper bound used by the chained search.
    #[serde(rename = "linear_bound")]
    LinearBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    HoldsOnSampledRegion,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Parameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Which inequality failed, e.g. `σF_2 + G_3`.
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub box_max: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    /// 1-based `(i, j)`; `j` is absent for V3, both for quasi-positivity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    pub parameters: Parameters,
    /// 1-based names of extra variables on the right-hand side.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub extra_terms: Vec<String>,
    pub status: Status,
    pub witness: Option<Witness>,
    pub region: Region,
    pub samples: usize,
    pub evidence: &'static str,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.status == Status::HoldsOnSampledRegion
    }
}

/// Box size, sample count and seed for one check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampling {
    pub box_max: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Sampling {
    pub fn new(box_max: f64, samples: usize, seed: u64) -> Self {
        Sampling { box_max, samples, seed }
    }

    fn validate(&self) -> Result<()> {
        if !(self.box_max > 0.0) || !self.box_max.is_finite() {
            return Err(Error::Precondition(format!("box_max must be positive, got {}", self.box_max)));
        }
        if self.samples == 0 {
            return Err(Error::Precondition("samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Deterministic sample points in `[0, box_max]^dim`: every corner, a
/// linearly stratified and a log-stratified Latin hypercube, and copies
/// of some points projected onto coordinate faces.
pub fn sample_points(dim: usize, sampling: &Sampling) -> Vec<Vec<f64>> {
    let b = sampling.box_max;
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut points = Vec::new();
    if dim <= 12 {
        for mask in 0u32..(1 << dim) {
            points.push((0..dim).map(|c| if mask >> c & 1 == 1 { b } else { 0.0 }).collect());
        }
    }
    let n_lin = sampling.samples.div_ceil(2);
    let n_log = sampling.samples - n_lin;
    let hypercube = |n: usize, log: bool, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        if n == 0 {
            return Vec::new();
        }
        let strata: Vec<Vec<usize>> = (0..dim)
            .map(|_| {
                let mut s: Vec<usize> = (0..n).collect();
                s.shuffle(rng);
                s
            })
            .collect();
        (0..n)
            .map(|p| {
                (0..dim)
                    .map(|c| {
                        let x = (strata[c][p] as f64 + rng.gen::<f64>()) / n as f64;
                        if log {
                            b * 10f64.powf(-6.0 * (1.0 - x))
                        } else {
                            b * x
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let lin = hypercube(n_lin, false, &mut rng);
    let lg = hypercube(n_log, true, &mut rng);
    let faces: Vec<Vec<f64>> = lin
        .iter()
        .chain(&lg)
        .enumerate()
        .step_by(4)
        .map(|(idx, p)| {
            let mut q = p.clone();
            q[idx % dim] = 0.0;
            q
        })
        .collect();
    points.extend(lin);
    points.extend(lg);
    points.extend(faces);
    points
}

/// Reaction values at one point; NaN is an evaluator error, overflow to
/// `±∞` is kept (it is a genuine violation of an upper bound).
struct Eval {
    h: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

fn evaluate(sys: &ReactionSystem, u: &[f64], v: &[f64]) -> Result<Eval> {
    let mut e = Eval { h: vec![0.0; sys.k()], f: vec![0.0; sys.m()], g: vec![0.0; sys.k()] };
    sys.bulk_into(u, &mut e.h);
    sys.boundary_into(u, v, &mut e.f, &mut e.g);
    if e.h.iter().chain(&e.f).chain(&e.g).any(|x| x.is_nan()) {
        return Err(Error::ModelEval { component: sys.name.clone(), u: u.to_vec(), v: v.to_vec() });
    }
    Ok(e)
}

fn violates(lhs: f64, rhs: f64) -> bool {
    if lhs == f64::INFINITY {
        return rhs.is_finite();
    }
    lhs - rhs > ABS_TOL + REL_TOL * (lhs.abs() + rhs.abs())
}

/// A variable of the joint `(ζ, ν)` vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    Bulk(usize),
    Surface(usize),
}

impl Var {
    fn value(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Var::Bulk(j) => u[j],
            Var::Surface(i) => v[i],
        }
    }

    fn label(self) -> String {
        match self {
            Var::Bulk(j) => format!("u{}", j + 1),
            Var::Surface(i) => format!("v{}", i + 1),
        }
    }
}

/// One inequality `lhs(ζ, ν) ≤ c · base(ζ, ν)` checked over samples.
struct Inequality<'a> {
    label: String,
    lhs: Box<dyn Fn(&Eval) -> f64 + Sync + 'a>,
    base: Box<dyn Fn(&[f64], &[f64]) -> f64 + Sync + 'a>,
}

fn split(sys: &ReactionSystem, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (p[..sys.k()].to_vec(), p[sys.k()..].to_vec())
}

/// First violation of `lhs ≤ c·base` over the points, if any.
fn first_violation(
    sys: &ReactionSystem,
    points: &[Vec<f64>],
    ineqs: &[(Inequality<'_>, f64)],
) -> Result<Option<Witness>> {
    for p in points {
        let (u, v) = split(sys, p);
        let e = evaluate(sys, &u, &v)?;
        for (ineq, c) in ineqs {
            let lhs = (ineq.lhs)(&e);
            let rhs = c * (ineq.base)(&u, &v);
            if violates(lhs, rhs) {
                return Ok(Some(Witness { u, v, inequality: ineq.label.clone(), lhs, rhs }));
            }
        }
    }
    Ok(None)
}

/// `sup lhs / base` over the points (0 if `lhs ≤ 0` everywhere).
fn sup_ratio(sys: &ReactionSystem, points: &[Vec<f64>], ineq: &Inequality<'_>) -> Result<f64> {
    let mut sup = 0.0f64;
    for p in points {
        let (u, v) = split(sys, p);
        let e = evaluate(sys, &u, &v)?;
        let lhs = (ineq.lhs)(&e);
        if lhs > 0.0 {
            let base = (ineq.base)(&u, &v);
            sup = sup.max(lhs / base);
        }
    }
    Ok(sup)
}

fn report(
    condition: Condition,
    i: Option<usize>,
    j: Option<usize>,
    parameters: Parameters,
    extra: &[Var],
    witness: Option<Witness>,
    sampling: &Sampling,
    dim: usize,
    n_points: usize,
) -> ConditionReport {
    ConditionReport {
        condition,
        i,
        j,
        parameters,
        extra_terms: extra.iter().map(|v| v.label()).collect(),
        status: if witness.is_some() { Status::Violated } else { Status::HoldsOnSampledRegion },
        witness,
        region: Region {
            box_max: sampling.box_max,
            description: format!(
                "[0, {:e}]^{dim}: corners, stratified linear and log samples, face projections (seed {})",
                sampling.box_max, sampling.seed
            ),
        },
        samples: n_points,
        evidence: EVIDENCE_LABEL,
    }
}

fn check_species(sys: &ReactionSystem, i: Option<usize>, j: Option<usize>) -> Result<()> {
    if let Some(i) = i {
        if i == 0 || i > sys.m() {
            return Err(Error::Precondition(format!("surface index i={i} outside 1..={}", sys.m())));
        }
    }
    if let Some(j) = j {
        if j == 0 || j > sys.k() {
            return Err(Error::Precondition(format!("bulk index j={j} outside 1..={}", sys.k())));
        }
    }
    Ok(())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{name} must be positive, got {x}")))
    }
}

/// Sign condition with each coordinate zeroed in turn.
pub fn check_quasi_positive(sys: &ReactionSystem, sampling: &Sampling) -> Result<ConditionReport> {
    sampling.validate()?;
    let (k, m) = (sys.k(), sys.m());
    let points = sample_points(k + m, sampling);
    let mut witness = None;
    'outer: for p in &points {
        for zero in 0..k + m {
            let mut q = p.clone();
            q[zero] = 0.0;
            let (u, v) = split(sys, &q);
            let e = evaluate(sys, &u, &v)?;
            let checks: Vec<(String, f64)> = if zero < k {
                vec![(format!("G_{}", zero + 1), e.g[zero]), (format!("H_{}", zero + 1), e.h[zero])]
            } else {
                vec![(format!("F_{}", zero - k + 1), e.f[zero - k])]
            };
            for (label, value) in checks {
                // Sign test as `−value ≤ 0`.
                if violates(-value, 0.0) {
                    witness = Some(Witness { u, v, inequality: format!("{label} ≥ 0"), lhs: value, rhs: 0.0 });
                    break 'outer;
                }
            }
        }
    }
    Ok(report(Condition::QuasiPositive, None, None, Parameters::default(), &[], witness, sampling, k + m, points.len() * (k + m)))
}

fn v1_inequalities<'a>(
    i: usize,
    j: usize,
    sigma: f64,
    extra: &'a [Var],
) -> [Inequality<'a>; 2] {
    let (i0, j0) = (i - 1, j - 1);
    let extras = move |u: &[f64], v: &[f64]| extra.iter().map(|x| x.value(u, v)).sum::<f64>();
    [
        Inequality {
            label: format!("{sigma}·F_{i} + G_{j}"),
            lhs: Box::new(move |e: &Eval| sigma * e.f[i0] + e.g[j0]),
            base: Box::new(move |u: &[f64], v: &[f64]| u[j0] + v[i0] + 1.0 + extras(u, v)),
        },
        Inequality {
            label: format!("H_{j}"),
            lhs: Box::new(move |e: &Eval| e.h[j0]),
            base: Box::new(move |u: &[f64], v: &[f64]| u[j0] + 1.0 + extras(u, v)),
        },
    ]
}

fn v2_inequality<'a>(i: usize, j: usize, extra: &'a [Var]) -> Inequality<'a> {
    let (i0, j0) = (i - 1, j - 1);
    Inequality {
        label: format!("G_{j}"),
        lhs: Box::new(move |e: &Eval| e.g[j0]),
        base: Box::new(move |u: &[f64], v: &[f64]| {
            u[j0] + v[i0] + 1.0 + extra.iter().map(|x| x.value(u, v)).sum::<f64>()
        }),
    }
}

fn v3_inequality<'a>(i: usize, l: u32) -> Inequality<'a> {
    let i0 = i - 1;
    Inequality {
        label: format!("F_{i}"),
        lhs: Box::new(move |e: &Eval| e.f[i0]),
        base: Box::new(move |u: &[f64], v: &[f64]| {
            let norm = u.iter().chain(v).map(|x| x * x).sum::<f64>().sqrt();
            (norm + 1.0).powi(l as i32)
        }),
    }
}

/// `σF_i + G_j ≤ α(ζ_j + ν_i + 1)` and `H_j ≤ β(ζ_j + 1)`.
pub fn check_v1(
    sys: &ReactionSystem,
    i: usize,
    j: usize,
    sigma: f64,
    alpha: f64,
    beta: f64,
    sampling: &Sampling,
) -> Result<ConditionReport> {
    check_v1_extended(sys, i, j, sigma, alpha, beta, &[], sampling)
}

/// V1 with extra nonnegative variables added to both right-hand sides.
#[allow(clippy::too_many_arguments)]
pub fn check_v1_extended(
    sys: &ReactionSystem,
    i: usize,
    j: usize,
    sigma: f64,
    alpha: f64,
    beta: f64,
    extra: &[Var],
    sampling: &Sampling,
) -> Result<ConditionReport> {
    sampling.validate()?;
    check_species(sys, Some(i), Some(j))?;
    positive("sigma", sigma)?;
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    let points = sample_points(sys.k() + sys.m(), sampling);
    let [a, b] = v1_inequalities(i, j, sigma, extra);
    let witness = first_violation(sys, &points, &[(a, alpha), (b, beta)])?;
    let params = Parameters { sigma: Some(sigma), alpha: Some(alpha), beta: Some(beta), ..Default::default() };
    Ok(report(Condition::V1, Some(i), Some(j), params, extra, witness, sampling, sys.k() + sys.m(), points.len()))
}

/// `G_j ≤ K_g(ζ_j + ν_i + 1)`.
pub fn check_v2(sys: &ReactionSystem, i: usize, j: usize, k_g: f64, sampling: &Sampling) -> Result<ConditionReport> {
    check_v2_extended(sys, i, j, k_g, &[], sampling)
}

pub fn check_v2_extended(
    sys: &ReactionSystem,
    i: usize,
    j: usize,
    k_g: f64,
    extra: &[Var],
    sampling: &Sampling,
) -> Result<ConditionReport> {
    sampling.validate()?;
    check_species(sys, Some(i), Some(j))?;
    positive("K_g", k_g)?;
    let points = sample_points(sys.k() + sys.m(), sampling);
    let witness = first_violation(sys, &points, &[(v2_inequality(i, j, extra), k_g)])?;
    let params = Parameters { k_g: Some(k_g), ..Default::default() };
    Ok(report(Condition::V2, Some(i), Some(j), params, extra, witness, sampling, sys.k() + sys.m(), points.len()))
}

/// `F_i ≤ K_f(|ζ| + |ν| + 1)^l`.
pub fn check_v3(sys: &ReactionSystem, i: usize, k_f: f64, l: u32, sampling: &Sampling) -> Result<ConditionReport> {
    sampling.validate()?;
    check_species(sys, Some(i), None)?;
    positive("K_f", k_f)?;
    if l == 0 {
        return Err(Error::Precondition("l must be at least 1".into()));
    }
    let points = sample_points(sys.k() + sys.m(), sampling);
    let witness = first_violation(sys, &points, &[(v3_inequality(i, l), k_f)])?;
    let params = Parameters { k_f: Some(k_f), l: Some(l), ..Default::default() };
    Ok(report(Condition::V3, Some(i), None, params, &[], witness, sampling, sys.k() + sys.m(), points.len()))
}

/// Single-species linear bound: `target ≤ K(x + 1 + extras)` where `x`
/// is the species itself. For a bulk species both `G_j` and `H_j` are
/// bounded (`β` for `H_j`).
fn single_inequalities<'a>(var: Var, extra: &'a [Var]) -> Vec<Inequality<'a>> {
    let extras = move |u: &[f64], v: &[f64]| extra.iter().map(|x| x.value(u, v)).sum::<f64>();
    match var {
        Var::Bulk(j0) => vec![
            Inequality {
                label: format!("G_{}", j0 + 1),
                lhs: Box::new(move |e: &Eval| e.g[j0]),
                base: Box::new(move |u: &[f64], v: &[f64]| u[j0] + 1.0 + extras(u, v)),
            },
            Inequality {
                label: format!("H_{}", j0 + 1),
                lhs: Box::new(move |e: &Eval| e.h[j0]),
                base: Box::new(move |u: &[f64], v: &[f64]| u[j0] + 1.0 + extras(u, v)),
            },
        ],
        Var::Surface(i0) => vec![Inequality {
            label: format!("F_{}", i0 + 1),
            lhs: Box::new(move |e: &Eval| e.f[i0]),
            base: Box::new(move |u: &[f64], v: &[f64]| v[i0] + 1.0 + extras(u, v)),
        }],
    }
}

/// Limits of the certificate search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchBudget {
    pub boxes: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub sigmas: Vec<f64>,
    /// Constants are rounded up to `10^(n/4)` within these exponents.
    pub min_exponent: i32,
    pub max_exponent: i32,
    pub max_l: u32,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            boxes: DEFAULT_BOXES.to_vec(),
            samples: 2000,
            seed: 0,
            sigmas: vec![1.0, 0.5, 2.0, 0.1, 10.0],
            min_exponent: -3,
            max_exponent: 6,
            max_l: 8,
        }
    }
}

impl SearchBudget {
    fn grid_ceil(&self, x: f64) -> Option<f64> {
        let lo = 10f64.powi(self.min_exponent);
        let hi = 10f64.powi(self.max_exponent);
        let target = x * (1.0 + 1e-6);
        if !(target <= hi) {
            return None;
        }
        if target <= lo {
            return Some(lo);
        }
        let steps = ((target.log10() - self.min_exponent as f64) * 4.0).ceil();
        let c = 10f64.powf(self.min_exponent as f64 + steps / 4.0).max(target);
        Some(c.min(hi))
    }

    fn samplings(&self) -> Vec<Sampling> {
        self.boxes
            .iter()
            .enumerate()
            .map(|(n, &b)| Sampling::new(b, self.samples, self.seed.wrapping_add(n as u64)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    HypothesesVerified,
    NotVerified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificatePattern {
    /// Every species covered by a `(V_ij)` pair with no extra terms.
    Direct,
    /// At least one step relies on species controlled earlier.
    Chained,
}

/// One step of the control argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlStep {
    pub rule: String,
    /// 1-based labels of the species controlled by this step.
    pub controls: Vec<String>,
    /// Previously controlled species used on the right-hand side.
    pub uses: Vec<String>,
    pub parameters: Parameters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub pattern: Option<CertificatePattern>,
    /// Per bulk species `j`: the paired surface index `k_j` (1-based).
    pub bulk_pairings: Vec<Option<usize>>,
    /// Per surface species `i`: the paired bulk index `l_i` (1-based).
    pub surface_pairings: Vec<Option<usize>>,
    pub steps: Vec<ControlStep>,
    pub uncontrolled: Vec<String>,
    pub reports: Vec<ConditionReport>,
    pub notes: Vec<String>,
    pub evidence: &'static str,
}

/// Fits one constant per inequality: the sup ratio over all boxes rounded
/// up to the grid. A ratio that still grows by more than 10× between the
/// two largest boxes is taken as unbounded.
fn fit_constants(
    sys: &ReactionSystem,
    budget: &SearchBudget,
    point_sets: &[Vec<Vec<f64>>],
    ineqs: &[Inequality<'_>],
) -> Result<Option<Vec<f64>>> {
    let floor = 10f64.powi(budget.min_exponent);
    let mut constants = Vec::with_capacity(ineqs.len());
    for ineq in ineqs {
        let mut ratios = Vec::with_capacity(point_sets.len());
        for pts in point_sets {
            let r = sup_ratio(sys, pts, ineq)?;
            if !(r <= 10f64.powi(budget.max_exponent)) {
                return Ok(None);
            }
            ratios.push(r);
        }
        if let [.., prev, last] = ratios[..] {
            if last > floor && last > 10.0 * prev.max(floor) {
                return Ok(None);
            }
        }
        let sup = ratios.iter().cloned().fold(0.0, f64::max);
        match budget.grid_ceil(sup) {
            Some(c) => constants.push(c),
            None => return Ok(None),
        }
    }
    Ok(Some(constants))
}

/// Tries to find (σ, α, β, K_g) for the pair with the given extras.
fn search_pair(
    sys: &ReactionSystem,
    budget: &SearchBudget,
    point_sets: &[Vec<Vec<f64>>],
    i: usize,
    j: usize,
    extra: &[Var],
) -> Result<Option<Parameters>> {
    let Some(kg) = fit_constants(sys, budget, point_sets, &[v2_inequality(i, j, extra)])? else {
        return Ok(None);
    };
    for &sigma in &budget.sigmas {
        let ineqs = v1_inequalities(i, j, sigma, extra);
        if let Some(c) = fit_constants(sys, budget, point_sets, &ineqs)? {
            return Ok(Some(Parameters {
                sigma: Some(sigma),
                alpha: Some(c[0]),
                beta: Some(c[1]),
                k_g: Some(kg[0]),
                ..Default::default()
            }));
        }
    }
    Ok(None)
}

fn search_single(
    sys: &ReactionSystem,
    budget: &SearchBudget,
    point_sets: &[Vec<Vec<f64>>],
    var: Var,
    extra: &[Var],
) -> Result<Option<Parameters>> {
    let ineqs = single_inequalities(var, extra);
    Ok(fit_constants(sys, budget, point_sets, &ineqs)?.map(|c| match var {
        Var::Bulk(_) => Parameters { k_g: Some(c[0]), beta: Some(c[1]), ..Default::default() },
        Var::Surface(_) => Parameters { k_f: Some(c[0]), ..Default::default() },
    }))
}

/// Re-runs a fitted certificate through the public checks on every box.
fn confirm(
    sys: &ReactionSystem,
    budget: &SearchBudget,
    step: &Certified,
    reports: &mut Vec<ConditionReport>,
) -> Result<bool> {
    let mut ok = true;
    for s in budget.samplings() {
        let p = &step.params;
        match step.kind {
            StepKind::Pair { i, j } => {
                let r1 = check_v1_extended(sys, i, j, p.sigma.unwrap(), p.alpha.unwrap(), p.beta.unwrap(), &step.extra, &s)?;
                let r2 = check_v2_extended(sys, i, j, p.k_g.unwrap(), &step.extra, &s)?;
                ok &= r1.holds() && r2.holds();
                reports.push(r1);
                reports.push(r2);
            }
            StepKind::Single(var) => {
                let points = sample_points(sys.k() + sys.m(), &s);
                let ineqs = single_inequalities(var, &step.extra);
                let cs: Vec<f64> = match var {
                    Var::Bulk(_) => vec![p.k_g.unwrap(), p.beta.unwrap()],
                    Var::Surface(_) => vec![p.k_f.unwrap()],
                };
                let pairs: Vec<(Inequality<'_>, f64)> = ineqs.into_iter().zip(cs).collect();
                let witness = first_violation(sys, &points, &pairs)?;
                ok &= witness.is_none();
                let (i, j) = match var {
                    Var::Bulk(j0) => (None, Some(j0 + 1)),
                    Var::Surface(i0) => (Some(i0 + 1), None),
                };
                reports.push(report(Condition::LinearBound, i, j, *p, &step.extra, witness, &s, sys.k() + sys.m(), points.len()));
            }
        }
    }
    Ok(ok)
}

#[derive(Debug, Clone, Copy)]
enum StepKind {
    Pair { i: usize, j: usize },
    Single(Var),
}

#[derive(Debug, Clone)]
struct Certified {
    kind: StepKind,
    extra: Vec<Var>,
    params: Parameters,
}

/// Searches for a certificate: quasi-positivity, `(V_ij1)` and `(V_ij2)`
/// pairings (optionally using species already controlled), single-species
/// linear bounds, and `(V_ij3)` for every surface species.
pub fn classify(sys: &ReactionSystem, budget: &SearchBudget) -> Verdict {
    match classify_inner(sys, budget) {
        Ok(v) => v,
        Err(e) => Verdict {
            status: VerdictStatus::NotVerified,
            pattern: None,
            bulk_pairings: vec![None; sys.k()],
            surface_pairings: vec![None; sys.m()],
            steps: Vec::new(),
            uncontrolled: Vec::new(),
            reports: Vec::new(),
            notes: vec![format!("evaluation failed: {e}")],
            evidence: EVIDENCE_LABEL,
        },
    }
}

fn classify_inner(sys: &ReactionSystem, budget: &SearchBudget) -> Result<Verdict> {
    let (k, m) = (sys.k(), sys.m());
    let samplings = budget.samplings();
    let point_sets: Vec<Vec<Vec<f64>>> = samplings.iter().map(|s| sample_points(k + m, s)).collect();
    let mut reports = Vec::new();
    let mut notes = Vec::new();

    let mut qp_ok = true;
    for s in &samplings {
        let r = check_quasi_positive(sys, s)?;
        qp_ok &= r.holds();
        reports.push(r);
    }
    if !qp_ok {
        notes.push("quasi-positivity fails on a sampled point".into());
    }

    let mut controlled: BTreeSet<Var> = BTreeSet::new();
    let mut steps: Vec<Certified> = Vec::new();
    loop {
        let known: Vec<Var> = controlled.iter().copied().collect();
        let pair_candidates: Vec<(usize, usize)> = (1..=m)
            .flat_map(|i| (1..=k).map(move |j| (i, j)))
            .filter(|&(i, j)| !(controlled.contains(&Var::Surface(i - 1)) && controlled.contains(&Var::Bulk(j - 1))))
            .collect();
        let found: Vec<Option<Certified>> = pair_candidates
            .par_iter()
            .map(|&(i, j)| {
                let extra: Vec<Var> = known
                    .iter()
                    .copied()
                    .filter(|&x| x != Var::Bulk(j - 1) && x != Var::Surface(i - 1))
                    .collect();
                search_pair(sys, budget, &point_sets, i, j, &extra)
                    .ok()
                    .flatten()
                    .map(|params| Certified { kind: StepKind::Pair { i, j }, extra, params })
            })
            .collect();
        let mut progress = false;
        for c in found.into_iter().flatten() {
            if let StepKind::Pair { i, j } = c.kind {
                if controlled.contains(&Var::Surface(i - 1)) && controlled.contains(&Var::Bulk(j - 1)) {
                    continue;
                }
                if confirm(sys, budget, &c, &mut reports)? {
                    controlled.insert(Var::Surface(i - 1));
                    controlled.insert(Var::Bulk(j - 1));
                    steps.push(c);
                    progress = true;
                }
            }
        }
        if !progress {
            let known: Vec<Var> = controlled.iter().copied().collect();
            let singles: Vec<Var> = (0..k)
                .map(Var::Bulk)
                .chain((0..m).map(Var::Surface))
                .filter(|v| !controlled.contains(v))
                .collect();
            for var in singles {
                if let Some(params) = search_single(sys, budget, &point_sets, var, &known)? {
                    let c = Certified { kind: StepKind::Single(var), extra: known.clone(), params };
                    if confirm(sys, budget, &c, &mut reports)? {
                        controlled.insert(var);
                        steps.push(c);
                        progress = true;
                        break;
                    }
                }
            }
        }
        if !progress {
            break;
        }
    }

    // Witness reports for pairs that never certified, for diagnosis.
    let uncontrolled: Vec<Var> = (0..k)
        .map(Var::Bulk)
        .chain((0..m).map(Var::Surface))
        .filter(|v| !controlled.contains(v))
        .collect();
    if !uncontrolled.is_empty() {
        let kg = 10f64.powi(budget.max_exponent.min(4).max(budget.min_exponent));
        for var in &uncontrolled {
            if let Var::Bulk(j0) = var {
                for i in 1..=m {
                    // Smallest box on which V2 with K_g fails.
                    for sb in &samplings {
                        let r = check_v2(sys, i, j0 + 1, kg, sb)?;
                        if !r.holds() {
                            reports.push(r);
                            break;
                        }
                    }
                }
            }
        }
    }

    let mut v3_ok = true;
    for i in 1..=m {
        let mut chosen = None;
        'l: for l in 1..=budget.max_l {
            let Some(c) = fit_constants(sys, budget, &point_sets, &[v3_inequality(i, l)])? else {
                continue;
            };
            let mut ok = true;
            let mut rs = Vec::new();
            for s in &samplings {
                let r = check_v3(sys, i, c[0], l, s)?;
                ok &= r.holds();
                rs.push(r);
            }
            if ok {
                reports.extend(rs);
                chosen = Some(l);
                break 'l;
            }
        }
        if chosen.is_none() {
            v3_ok = false;
            notes.push(format!("F_{i} admits no polynomial bound with l ≤ {}", budget.max_l));
            if let Some(s) = samplings.iter().find(|s| s.box_max <= 1e2).or(samplings.first()) {
                let kf = 10f64.powi(budget.max_exponent);
                if let Ok(r) = check_v3(sys, i, kf, budget.max_l, s) {
                    reports.push(r);
                }
            }
        }
    }

    let verified = qp_ok && uncontrolled.is_empty() && v3_ok;
    let mut bulk_pairings = vec![None; k];
    let mut surface_pairings = vec![None; m];
    for s in &steps {
        if let StepKind::Pair { i, j } = s.kind {
            bulk_pairings[j - 1].get_or_insert(i);
            surface_pairings[i - 1].get_or_insert(j);
        }
    }
    let direct = steps.iter().all(|s| s.extra.is_empty() && matches!(s.kind, StepKind::Pair { .. }))
        && bulk_pairings.iter().all(Option::is_some)
        && surface_pairings.iter().all(Option::is_some);
    let label = |v: &Var| v.label();
    let steps_out = steps
        .iter()
        .map(|s| {
            let (rule, controls) = match s.kind {
                StepKind::Pair { i, j } => (format!("V1+V2 pair (i={i}, j={j})"), vec![format!("u{j}"), format!("v{i}")]),
                StepKind::Single(var) => (format!("linear bound on {}", var.label()), vec![var.label()]),
            };
            ControlStep { rule, controls, uses: s.extra.iter().map(label).collect(), parameters: s.params }
        })
        .collect();
    Ok(Verdict {
        status: if verified { VerdictStatus::HypothesesVerified } else { VerdictStatus::NotVerified },
        pattern: verified.then_some(if direct { CertificatePattern::Direct } else { CertificatePattern::Chained }),
        bulk_pairings,
        surface_pairings,
        steps: steps_out,
        uncontrolled: uncontrolled.iter().map(label).collect(),
        reports,
        notes,
        evidence: EVIDENCE_LABEL,
    })
}

impl Verdict {
    /// Human-readable summary table.
    pub fn to_table(&self, model: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("== {EVIDENCE_LABEL} ==\n"));
        out.push_str(&format!("model: {model}\n"));
        let status = match self.status {
            VerdictStatus::HypothesesVerified => "hypotheses-verified",
            VerdictStatus::NotVerified => "not-verified (this is not a proof of blow-up)",
        };
        out.push_str(&format!("verdict: {status}\n"));
        if let Some(p) = self.pattern {
            out.push_str(&format!("pattern: {p:?}\n").to_lowercase());
        }
        for s in &self.steps {
            let uses = if s.uses.is_empty() { String::new() } else { format!(" using {}", s.uses.join(", ")) };
            out.push_str(&format!("  step: {} -> {}{uses}\n", s.rule, s.controls.join(", ")));
        }
        if !self.uncontrolled.is_empty() {
            out.push_str(&format!("  uncontrolled: {}\n", self.uncontrolled.join(", ")));
        }
        out.push_str(&format!("{:<15} {:>6} {:>10} {:>8} {:<26} witness\n", "condition", "(i,j)", "box", "samples", "status"));
        for r in &self.reports {
            let pair = match (r.i, r.j) {
                (Some(i), Some(j)) => format!("({i},{j})"),
                (Some(i), None) => format!("({i},-)"),
                (None, Some(j)) => format!("(-,{j})"),
                (None, None) => "-".into(),
            };
            let status = match r.status {
                Status::HoldsOnSampledRegion => "holds-on-sampled-region",
                Status::Violated => "violated",
            };
            let witness = r.witness.as_ref().map_or(String::new(), |w| {
                format!("{} = {:.3e} > {:.3e} at u={:?} v={:?}", w.inequality, w.lhs, w.rhs, w.u, w.v)
            });
            out.push_str(&format!(
                "{:<15} {:>6} {:>10.0e} {:>8} {:<26} {witness}\n",
                format!("{:?}", r.condition),
                pair,
                r.region.box_max,
                r.samples,
                status
            ));
        }
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out
    }
}

/// Re-evaluates a witness for `condition` and confirms the failure.
pub fn witness_reproduces(sys: &ReactionSystem, r: &ConditionReport) -> Result<bool> {
    let Some(w) = &r.witness else { return Ok(false) };
    let e = evaluate(sys, &w.u, &w.v)?;
    let p = &r.parameters;
    let extra: Vec<Var> = r
        .extra_terms
        .iter()
        .filter_map(|s| {
            let idx: usize = s[1..].parse().ok()?;
            Some(if s.starts_with('u') { Var::Bulk(idx - 1) } else { Var::Surface(idx - 1) })
        })
        .collect();
    let ex: f64 = extra.iter().map(|x| x.value(&w.u, &w.v)).sum();
    Ok(match r.condition {
        Condition::QuasiPositive => {
            // The witness has at least one zero coordinate whose sign test fails.
            let (k, m) = (sys.k(), sys.m());
            (0..k).any(|j| w.u[j] == 0.0 && (violates(-e.g[j], 0.0) || violates(-e.h[j], 0.0)))
                || (0..m).any(|i| w.v[i] == 0.0 && violates(-e.f[i], 0.0))
        }
        Condition::V1 => {
            let (i0, j0) = (r.i.unwrap() - 1, r.j.unwrap() - 1);
            let a = p.sigma.unwrap() * e.f[i0] + e.g[j0];
            violates(a, p.alpha.unwrap() * (w.u[j0] + w.v[i0] + 1.0 + ex))
                || violates(e.h[j0], p.beta.unwrap() * (w.u[j0] + 1.0 + ex))
        }
        Condition::V2 => {
            let (i0, j0) = (r.i.unwrap() - 1, r.j.unwrap() - 1);
            violates(e.g[j0], p.k_g.unwrap() * (w.u[j0] + w.v[i0] + 1.0 + ex))
        }
        Condition::V3 => {
            let i0 = r.i.unwrap() - 1;
            let norm = w.u.iter().chain(&w.v).map(|x| x * x).sum::<f64>().sqrt();
            violates(e.f[i0], p.k_f.unwrap() * (norm + 1.0).powi(p.l.unwrap() as i32))
        }
        Condition::LinearBound => match (r.i, r.j) {
            (None, Some(j)) => {
                let j0 = j - 1;
                violates(e.g[j0], p.k_g.unwrap() * (w.u[j0] + 1.0 + ex))
                    || violates(e.h[j0], p.beta.unwrap() * (w.u[j0] + 1.0 + ex))
            }
            (Some(i), None) => violates(e.f[i - 1], p.k_f.unwrap() * (w.v[i - 1] + 1.0 + ex)),
            _ => false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction_model::{builtin, ModelFile};

    fn model(h: &str, f: &str, g: &str) -> ReactionSystem {
        let text = format!(
            r#"{{"name":"m","bulk_species":["u"],"surface_species":["v"],"diffusivity":[1],
            "surface_diffusivity":[1],"H":["{h}"],"F":["{f}"],"G":["{g}"]}}"#
        );
        ModelFile::from_json(&text).unwrap().compile().unwrap().0
    }

    #[test]
    fn sample_points_are_deterministic_and_in_box() {
        let s = Sampling::new(10.0, 100, 3);
        let a = sample_points(3, &s);
        assert_eq!(a, sample_points(3, &s));
        assert_ne!(a, sample_points(3, &Sampling::new(10.0, 100, 4)));
        assert!(a.iter().flatten().all(|&x| (0.0..=10.0).contains(&x)));
        assert!(a.contains(&vec![10.0, 10.0, 10.0]));
        assert!(a.contains(&vec![0.0, 0.0, 0.0]));
    }

    #[test]
    fn constant_negative_flux_is_not_quasi_positive() {
        let sys = model("0", "0", "-1");
        let r = check_quasi_positive(&sys, &Sampling::new(10.0, 50, 1)).unwrap();
        assert_eq!(r.status, Status::Violated);
        assert_eq!(r.witness.as_ref().unwrap().u, vec![0.0]);
        assert!(witness_reproduces(&sys, &r).unwrap());
    }

    #[test]
    fn builtins_are_quasi_positive() {
        for name in ["toy_conserving", "toy_open", "min_system", "signaling"] {
            let (sys, _) = builtin(name).unwrap();
            for b in DEFAULT_BOXES {
                assert!(check_quasi_positive(&sys, &Sampling::new(b, 500, 9)).unwrap().holds(), "{name} box {b}");
            }
        }
    }

    #[test]
    fn toy_open_v2_violation_has_valid_witness() {
        let (sys, _) = builtin("toy_open").unwrap();
        let r = check_v2(&sys, 1, 1, 1e4, &Sampling::new(1e2, 200, 0)).unwrap();
        assert_eq!(r.status, Status::Violated);
        let w = r.witness.as_ref().unwrap();
        let g = w.u[0].powi(2) * w.v[0].powi(2);
        assert!(g > 1e4 * (w.u[0] + w.v[0] + 1.0) + 1e-9);
        assert!(witness_reproduces(&sys, &r).unwrap());
    }

    #[test]
    fn exponential_growth_breaks_polynomial_bound() {
        let sys = model("0", "exp(u)", "0");
        let r = check_v3(&sys, 1, 1e6, 8, &Sampling::new(1e2, 200, 0)).unwrap();
        assert_eq!(r.status, Status::Violated);
        assert!(witness_reproduces(&sys, &r).unwrap());
        // Overflow at large boxes is still a violation, not an error.
        let r = check_v3(&sys, 1, 1e6, 8, &Sampling::new(1e3, 50, 0)).unwrap();
        assert_eq!(r.status, Status::Violated);
    }

    #[test]
    fn nan_is_an_evaluator_error() {
        let sys = model("0", "log(u - 1)", "0");
        assert!(matches!(check_v3(&sys, 1, 1.0, 1, &Sampling::new(1.0, 10, 0)), Err(Error::ModelEval { .. })));
    }

    #[test]
    fn preconditions() {
        let (sys, _) = builtin("toy_open").unwrap();
        let s = Sampling::new(1.0, 10, 0);
        assert!(check_v1(&sys, 1, 1, 0.0, 1.0, 1.0, &s).is_err());
        assert!(check_v2(&sys, 2, 1, 1.0, &s).is_err());
        assert!(check_v3(&sys, 1, 1.0, 0, &s).is_err());
        assert!(check_quasi_positive(&sys, &Sampling::new(-1.0, 10, 0)).is_err());
        assert!(check_quasi_positive(&sys, &Sampling::new(1.0, 0, 0)).is_err());
    }

    #[test]
    fn grid_rounds_up() {
        let b = SearchBudget::default();
        assert_eq!(b.grid_ceil(0.0), Some(1e-3));
        let c = b.grid_ceil(1.0).unwrap();
        assert!(c >= 1.0 && c < 1.8);
        assert!(b.grid_ceil(2e6).is_none());
    }

    #[test]
    fn toy_models_classify() {
        let budget = SearchBudget { samples: 300, ..Default::default() };
        let (sys, _) = builtin("toy_conserving").unwrap();
        let v = classify(&sys, &budget);
        assert_eq!(v.status, VerdictStatus::HypothesesVerified, "{}", v.to_table("toy"));
        assert_eq!(v.pattern, Some(CertificatePattern::Direct));
        let (sys, _) = builtin("toy_open").unwrap();
        let v = classify(&sys, &budget);
        assert_eq!(v.status, VerdictStatus::NotVerified);
        assert_eq!(v.uncontrolled, vec!["u1"]);
        let w = v.reports.iter().find(|r| r.condition == Condition::V2 && !r.holds()).unwrap();
        assert!(witness_reproduces(&sys, w).unwrap());
    }
}
