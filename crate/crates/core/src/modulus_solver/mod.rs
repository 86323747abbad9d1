//! Combinatorial p-modulus of path families on an overlap graph.
//!
//! Minimizes Σ w_v ρ_v^p over densities ρ ≥ 0 whose length along every
//! family path is at least 1. Constraints are generated lazily by a
//! shortest-path oracle. For p > 1 the pooled program is solved by dual
//! coordinate ascent, for p = 1 by a simplex solver. The density returned is
//! the last iterate divided by its minimal family length, so it is
//! admissible for the whole family and its mass is an upper bound; the
//! pooled dual value is the matching lower bound.

mod brute;
mod dual;
mod family;
mod lp;

pub use brute::{brute_force_modulus, enumerate_paths, min_vertex_cut, solve_all_constraints, BruteError, BRUTE_MAX_VERTICES};
pub use family::{path_length, Oracle, PathFamily, Separation};

use crate::boundary_approx::{ancestor_classes, gromov_product, ApproximationLevel};
use crate::group_engine::{ChamberStore, NormalForm};
use crate::wall_geometry::{parabolic_limit_sets_of, residue_contains, residue_within, Residue};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CurveFamilySpec {
    /// Paths joining two disjoint member sets.
    Connecting { a: Vec<u32>, b: Vec<u32> },
    /// Paths whose endpoints have Gromov product at most `t0`.
    DiameterAtLeast { t0: usize },
    /// Paths whose endpoints retract to apartment chambers with Gromov
    /// product at most `t0`. Retraction never lowers the product, so this is
    /// a subfamily of the previous one that the retraction maps into the
    /// apartment's far family.
    RetractedDiameterAtLeast { t0: usize },
    /// Paths joining the ends of `eta` inside its `hops`-neighborhood.
    NeighborhoodOfPath { eta: Vec<u32>, hops: usize },
    /// Far-endpoint paths (product at most `t0`) inside the δ-neighborhood
    /// of the residue's limit set, avoiding the r-neighborhoods of the limit
    /// sets of its strictly smaller infinite parabolic subresidues.
    ParabolicFamily { residue: Residue, delta_levels: usize, r_levels: usize, t0: usize },
}

impl CurveFamilySpec {
    pub fn label(&self) -> String {
        match self {
            CurveFamilySpec::Connecting { a, b } => format!("connecting[{}|{}]", a.len(), b.len()),
            CurveFamilySpec::DiameterAtLeast { t0 } => format!("far[t0={t0}]"),
            CurveFamilySpec::RetractedDiameterAtLeast { t0 } => format!("retracted_far[t0={t0}]"),
            CurveFamilySpec::NeighborhoodOfPath { eta, hops } => format!("tube[len={},hops={hops}]", eta.len()),
            CurveFamilySpec::ParabolicFamily { residue, delta_levels, r_levels, t0 } => format!(
                "parabolic[types={:#x},gate_len={},delta={delta_levels},r={r_levels},t0={t0}]",
                residue.types,
                residue.gate.len()
            ),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FamilyError {
    #[error("connecting sets share member {0}")]
    Overlapping(u32),
    #[error("member {0} is out of range")]
    OutOfRange(u32),
    #[error("eta is not a path in the overlap graph")]
    NotAPath,
    #[error("residue limit set needs probe depth {needed}, store has {radius}")]
    BeyondStore { needed: usize, radius: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("exponent p = {0} is below 1")]
    BadExponent(f64),
    #[error("{0}")]
    Family(#[from] FamilyError),
    #[error("{0}")]
    Lp(#[from] lp::LpError),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverOptions {
    pub tol_sep: f64,
    /// Relative gap between the admissible mass and the dual bound at
    /// which the solve stops early.
    pub tol_obj: f64,
    pub tol_kkt: f64,
    /// Sweeps (p > 1) per constraint round.
    pub max_iterations: usize,
    /// Sweeps before the oracle is consulted again while it keeps finding
    /// new paths. Rounds that add nothing new sweep to full accuracy.
    pub sweeps_per_round: usize,
    pub max_rounds: usize,
    /// Decision mode: stop as soon as the modulus is known to lie strictly
    /// on one side of this value.
    pub target: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_sep: 1e-6,
            tol_obj: 1e-7,
            tol_kkt: 1e-5,
            max_iterations: 100_000,
            sweeps_per_round: 24,
            max_rounds: 1_000,
            target: None,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    EmptyFamily,
    /// Decision mode settled which side of the target the modulus lies on;
    /// `lower_bound` and `value` bracket it.
    Bounded,
    IterationCap,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "Converged",
            Status::EmptyFamily => "EmptyFamily",
            Status::Bounded => "Bounded",
            Status::IterationCap => "IterationCap",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModulusResult {
    /// Weighted p-mass of `rho_star`.
    pub value: f64,
    /// Dual value of the pooled program; never above the true modulus.
    pub lower_bound: f64,
    /// Admissible for the whole family.
    pub rho_star: Vec<f64>,
    pub active_paths: Vec<Vec<u32>>,
    pub iterations: usize,
    pub rounds: usize,
    pub status: Status,
    /// Minimal family length under the unscaled final iterate.
    pub oracle_len: f64,
    pub kkt_residual: f64,
}

pub fn p_mass(w: &[f64], rho: &[f64], p: f64) -> f64 {
    rho.iter().zip(w).map(|(r, wv)| if *r == 0.0 { 0.0 } else { wv * r.powf(p) }).sum()
}

fn empty_result(n: usize) -> ModulusResult {
    ModulusResult {
        value: 0.0,
        lower_bound: 0.0,
        rho_star: vec![0.0; n],
        active_paths: Vec::new(),
        iterations: 0,
        rounds: 0,
        status: Status::EmptyFamily,
        oracle_len: f64::INFINITY,
        kkt_residual: 0.0,
    }
}

fn active_under(paths: &[Vec<u32>], rho: &[f64], tol: f64) -> Vec<Vec<u32>> {
    paths.iter().filter(|p| path_length(rho, p) <= 1.0 + tol).cloned().collect()
}

/// Modulus of a path family on a graph with sorted adjacency lists and
/// positive vertex weights.
pub fn solve_on_graph(
    adj: &[Vec<u32>],
    w: &[f64],
    family: &PathFamily,
    p: f64,
    opts: &SolverOptions,
) -> Result<ModulusResult, SolveError> {
    if !(p >= 1.0) {
        return Err(SolveError::BadExponent(p));
    }
    let n = adj.len();
    let oracle = Oracle::new(adj, family);
    let first = oracle.separate(&vec![1.0; n], f64::INFINITY);
    let Some(shortest) = first.shortest else { return Ok(empty_result(n)) };
    // Warm start: the constant density that makes the hop-shortest path
    // exactly admissible; every path it leaves short seeds the pool.
    let rho0 = vec![1.0 / first.min_len; n];
    let mut seeds = vec![shortest];
    seeds.extend(oracle.separate(&rho0, 1.0 - opts.tol_sep).violated);
    if p == 1.0 {
        solve_linear(&oracle, w, seeds, opts)
    } else {
        solve_dual(&oracle, w, seeds, p, opts)
    }
}

/// Stopping test shared by both optimizers, given a dual bound and an
/// admissible mass.
fn settled(lower: f64, upper: f64, opts: &SolverOptions) -> Option<Status> {
    if !upper.is_finite() {
        return None;
    }
    if upper - lower <= opts.tol_obj * upper.abs().max(1e-300) {
        return Some(Status::Converged);
    }
    match opts.target {
        Some(t) if lower > t || upper < t => Some(Status::Bounded),
        _ => None,
    }
}

struct Best {
    upper: f64,
    rho_star: Vec<f64>,
    oracle_len: f64,
}

impl Best {
    fn offer(slot: &mut Option<Best>, w: &[f64], rho: &[f64], min_len: f64, p: f64) {
        let upper = p_mass(w, rho, p) / min_len.powf(p);
        if slot.as_ref().map_or(true, |b| upper < b.upper) {
            *slot = Some(Best { upper, rho_star: rho.iter().map(|r| r / min_len).collect(), oracle_len: min_len });
        }
    }
}

fn solve_dual(
    oracle: &Oracle,
    w: &[f64],
    seeds: Vec<Vec<u32>>,
    p: f64,
    opts: &SolverOptions,
) -> Result<ModulusResult, SolveError> {
    let mut pool = dual::DualPool::new(p, w.to_vec());
    for s in seeds {
        pool.add(s);
    }
    let inner_tol = 0.1 * opts.tol_sep;
    let mut iterations = 0;
    let mut best: Option<Best> = None;
    let mut lower = 0.0f64;
    // Sweep to full accuracy only once the oracle stops supplying new paths.
    let mut exact = false;
    for round in 1..=opts.max_rounds {
        let cap = if exact { opts.max_iterations } else { opts.sweeps_per_round.clamp(1, opts.max_iterations) };
        let mut inner_done = false;
        for it in 0..cap {
            iterations += 1;
            let viol = pool.sweep();
            if it % 64 == 63 {
                pool.refresh();
            }
            if viol <= inner_tol {
                inner_done = true;
                break;
            }
        }
        let rho = pool.rho();
        let sep = oracle.separate(&rho, 1.0 - opts.tol_sep);
        lower = lower.max(pool.dual_value());
        Best::offer(&mut best, w, &rho, sep.min_len, p);
        let upper = best.as_ref().unwrap().upper;
        let admissible = sep.violated.is_empty();
        let stop = if admissible && inner_done { Some(Status::Converged) } else { settled(lower, upper, opts) };
        if let Some(status) = stop {
            let b = best.take().unwrap();
            let kkt = pool.kkt_residual(&rho);
            let active = pool
                .paths
                .iter()
                .zip(&pool.lambda)
                .filter(|(_, &l)| l > 0.0)
                .map(|(path, _)| path.clone())
                .collect::<Vec<_>>();
            return Ok(ModulusResult {
                value: b.upper,
                lower_bound: lower.min(b.upper),
                active_paths: active_under(&active, &b.rho_star, opts.tol_sep.max(1e-6) * 10.0),
                rho_star: b.rho_star,
                iterations,
                rounds: round,
                status,
                oracle_len: b.oracle_len,
                kkt_residual: kkt,
            });
        }
        let mut added = 0;
        for path in sep.violated {
            added += pool.add(path) as usize;
        }
        exact = added == 0;
    }
    let b = best.unwrap();
    Ok(ModulusResult {
        value: b.upper,
        lower_bound: lower.min(b.upper),
        active_paths: Vec::new(),
        rho_star: b.rho_star,
        iterations,
        rounds: opts.max_rounds,
        status: Status::IterationCap,
        oracle_len: b.oracle_len,
        kkt_residual: f64::NAN,
    })
}

fn solve_linear(oracle: &Oracle, w: &[f64], seeds: Vec<Vec<u32>>, opts: &SolverOptions) -> Result<ModulusResult, SolveError> {
    let mut pool = lp::LpPool::new(w);
    for s in seeds {
        pool.add(s)?;
    }
    let mut best: Option<Best> = None;
    // The pooled LP only grows, so its optimum is a non-decreasing lower bound.
    let mut lower = 0.0f64;
    for round in 1..=opts.max_rounds {
        let rho = pool.solve()?;
        lower = lower.max(p_mass(w, &rho, 1.0));
        let sep = oracle.separate(&rho, 1.0 - opts.tol_sep);
        Best::offer(&mut best, w, &rho, sep.min_len, 1.0);
        let upper = best.as_ref().unwrap().upper;
        let mut added = 0;
        for path in sep.violated {
            added += pool.add(path)? as usize;
        }
        let stop = if added == 0 { Some(Status::Converged) } else { settled(lower, upper, opts) };
        if let Some(status) = stop {
            let b = best.take().unwrap();
            return Ok(ModulusResult {
                value: b.upper,
                lower_bound: lower.min(b.upper),
                active_paths: active_under(&pool.paths, &b.rho_star, 1e-6),
                rho_star: b.rho_star,
                iterations: round,
                rounds: round,
                status,
                oracle_len: b.oracle_len,
                kkt_residual: 0.0,
            });
        }
    }
    let b = best.unwrap();
    Ok(ModulusResult {
        value: b.upper,
        lower_bound: lower.min(b.upper),
        active_paths: Vec::new(),
        rho_star: b.rho_star,
        iterations: opts.max_rounds,
        rounds: opts.max_rounds,
        status: Status::IterationCap,
        oracle_len: b.oracle_len,
        kkt_residual: f64::NAN,
    })
}

/// Vertex weights of a level: retraction fiber counts, or all ones.
pub fn level_weights(level: &ApproximationLevel, weighted: bool) -> Vec<f64> {
    if weighted {
        level.weights.iter().map(|&x| x as f64).collect()
    } else {
        vec![1.0; level.len()]
    }
}

/// Members within `hops` graph steps of `seeds`.
pub fn hop_neighborhood(adj: &[Vec<u32>], seeds: &[u32], hops: usize) -> Vec<bool> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut q = VecDeque::new();
    for &s in seeds {
        if dist[s as usize] != 0 {
            dist[s as usize] = 0;
            q.push_back(s);
        }
    }
    while let Some(v) = q.pop_front() {
        let d = dist[v as usize];
        if d == hops {
            continue;
        }
        for &u in &adj[v as usize] {
            if dist[u as usize] == usize::MAX {
                dist[u as usize] = d + 1;
                q.push_back(u);
            }
        }
    }
    dist.iter().map(|&d| d != usize::MAX).collect()
}

fn number_classes(anc: Vec<Vec<NormalForm>>) -> Vec<Vec<u32>> {
    let mut ids: BTreeMap<NormalForm, u32> = BTreeMap::new();
    for a in anc.iter().flatten() {
        let next = ids.len() as u32;
        ids.entry(a.clone()).or_insert(next);
    }
    anc.iter().map(|set| set.iter().map(|a| ids[a]).collect()).collect()
}

/// Far classes: ancestors at depth t0 + 1, numbered.
pub fn far_classes(store: &ChamberStore, level: &ApproximationLevel, t0: usize) -> Vec<Vec<u32>> {
    number_classes(ancestor_classes(store.presentation(), level, t0 + 1))
}

/// Far classes of the retracted chambers.
pub fn retracted_far_classes(store: &ChamberStore, level: &ApproximationLevel, t0: usize) -> Vec<Vec<u32>> {
    let p = store.presentation();
    let depth = t0 + 1;
    number_classes(
        level
            .members
            .iter()
            .map(|m| {
                let r = p.retract(&m.nf);
                if r.len() < depth { Vec::new() } else { p.prefixes_at(&r, depth) }
            })
            .collect(),
    )
}

/// Members whose Gromov product with some chamber of the residue at probe
/// depth reaches k − levels.
pub fn residue_neighborhood(
    store: &ChamberStore,
    level: &ApproximationLevel,
    residue: &Residue,
    levels: usize,
) -> Result<Vec<bool>, FamilyError> {
    let p = store.presentation();
    let depth = level.k + level.m_probe;
    if depth > store.depth() {
        return Err(FamilyError::BeyondStore { needed: depth, radius: store.depth() });
    }
    let threshold = level.k.saturating_sub(levels);
    let mut heads: BTreeSet<NormalForm> = BTreeSet::new();
    for id in store.sphere(depth) {
        let z = store.normal_form(id);
        if residue_contains(p, residue, &z) {
            heads.extend(p.prefixes_at(&z, threshold));
        }
    }
    Ok(level
        .members
        .iter()
        .map(|m| m.nf.len() >= threshold && p.prefixes_at(&m.nf, threshold).iter().any(|h| heads.contains(h)))
        .collect())
}

fn check_members(level: &ApproximationLevel, xs: &[u32]) -> Result<(), FamilyError> {
    match xs.iter().find(|&&x| x as usize >= level.len()) {
        Some(&x) => Err(FamilyError::OutOfRange(x)),
        None => Ok(()),
    }
}

/// Resolves a family description on a level into a graph path family.
pub fn resolve_family(
    store: &ChamberStore,
    level: &ApproximationLevel,
    spec: &CurveFamilySpec,
) -> Result<PathFamily, FamilyError> {
    match spec {
        CurveFamilySpec::Connecting { a, b } => {
            check_members(level, a)?;
            check_members(level, b)?;
            if let Some(x) = a.iter().find(|x| b.contains(x)) {
                return Err(FamilyError::Overlapping(*x));
            }
            Ok(PathFamily::Connecting { from: a.clone(), to: b.clone(), allowed: None })
        }
        CurveFamilySpec::DiameterAtLeast { t0 } => {
            Ok(PathFamily::far_pairs(far_classes(store, level, *t0), None))
        }
        CurveFamilySpec::RetractedDiameterAtLeast { t0 } => {
            Ok(PathFamily::far_pairs(retracted_far_classes(store, level, *t0), None))
        }
        CurveFamilySpec::NeighborhoodOfPath { eta, hops } => {
            check_members(level, eta)?;
            let simple = eta.iter().collect::<BTreeSet<_>>().len() == eta.len();
            if eta.len() < 2 || !simple || !eta.windows(2).all(|x| level.are_adjacent(x[0] as usize, x[1] as usize)) {
                return Err(FamilyError::NotAPath);
            }
            let allowed = hop_neighborhood(&level.adjacency, eta, *hops);
            Ok(PathFamily::Connecting { from: vec![eta[0]], to: vec![*eta.last().unwrap()], allowed: Some(allowed) })
        }
        CurveFamilySpec::ParabolicFamily { residue, delta_levels, r_levels, t0 } => {
            let mut allowed = residue_neighborhood(store, level, residue, *delta_levels)?;
            let bound = level.k.min(store.depth());
            let smaller = parabolic_limit_sets_of(store, residue.types, bound)
                .map_err(|_| FamilyError::BeyondStore { needed: bound, radius: store.depth() })?;
            for (q, _) in smaller {
                if q == *residue || !residue_within(store.presentation(), &q, residue) {
                    continue;
                }
                let core = residue_neighborhood(store, level, &q, *r_levels)?;
                for (a, c) in allowed.iter_mut().zip(core) {
                    *a &= !c;
                }
            }
            Ok(PathFamily::far_pairs(far_classes(store, level, *t0), Some(allowed)))
        }
    }
}

/// Modulus of a described family on a level, weighted by fiber counts when
/// requested.
pub fn solve_modulus(
    store: &ChamberStore,
    level: &ApproximationLevel,
    spec: &CurveFamilySpec,
    p: f64,
    weighted: bool,
    opts: &SolverOptions,
) -> Result<ModulusResult, SolveError> {
    let family = resolve_family(store, level, spec)?;
    solve_on_graph(&level.adjacency, &level_weights(level, weighted), &family, p, opts)
}

/// Member pairs with Gromov product at most t0: the anchor pairs of the far
/// family, listed for inspection.
pub fn far_anchor_pairs(store: &ChamberStore, level: &ApproximationLevel, t0: usize) -> Vec<(u32, u32)> {
    let p = store.presentation();
    let mut out = Vec::new();
    for i in 0..level.len() {
        for j in i + 1..level.len() {
            if gromov_product(p, &level.members[i].nf, &level.members[j].nf) <= t0 {
                out.push((i as u32, j as u32));
            }
        }
    }
    out
}

/// Margins Σ Mod(F_i) − Mod(∪F_i); a margin below −tol is a violation.
pub fn union_margin(union: f64, parts: &[f64], tol: f64) -> Result<f64, f64> {
    let margin = parts.iter().sum::<f64>() - union;
    if margin >= -tol {
        Ok(margin)
    } else {
        Err(margin)
    }
}
