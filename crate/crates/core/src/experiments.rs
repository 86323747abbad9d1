//! Multi-scale runs: crossing exponents of far families on the building, its
//! apartment and the weighted apartment, the constant-thickness identity,
//! condenser scans, and the closed-form reference exponent.
//!
//! The per-scale statistic is the exponent p_k at which the far family's
//! modulus crosses 1, located by bisection. A decreasing sequence of p_k is
//! the finite-scale trace of the critical exponent; the fitted limit is a
//! trend indicator only.

use crate::boundary_approx::{build_level, build_level_pair, gromov_product, ApproximationLevel, LevelError, LevelPair};
use crate::group_engine::{ChamberStore, NormalForm};
use crate::modulus_solver::{
    resolve_family, solve_on_graph, level_weights, CurveFamilySpec, ModulusResult, PathFamily, SolveError,
    SolverOptions, Status,
};
use crate::presentation::Presentation;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Level(#[from] LevelError),
    #[error("{0}")]
    Solve(#[from] SolveError),
    #[error("apartment store does not belong to the Coxeter image of the building")]
    Mismatch,
    #[error("presentation does not have constant thickness")]
    NotConstantThickness,
    #[error("out of domain: {0}")]
    Domain(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// 1 + ln(q − 1) / arccosh((n − 2)/2): the conformal dimension of the
/// boundary of the right-angled n-gon building of constant thickness q.
pub fn bourdon_reference(n: usize, q: usize) -> Result<f64, ExperimentError> {
    if n < 5 || q < 2 {
        return Err(ExperimentError::Domain(format!("need n >= 5 and q >= 2, got n = {n}, q = {q}")));
    }
    Ok(1.0 + ((q - 1) as f64).ln() / ((n as f64 - 2.0) / 2.0).acosh())
}

/// Number of building chambers retracting onto an apartment chamber:
/// the product of (q_s − 1) over its syllables.
pub fn fiber_weight(building: &Presentation, nf: &NormalForm) -> u64 {
    nf.syllables().iter().map(|s| building.order(s.gen as usize) as u64 - 1).product()
}

/// Building ball, its apartment ball and the probe depth used for levels.
pub struct Workspace {
    pub building: ChamberStore,
    pub apartment: ChamberStore,
    pub m_probe: usize,
}

impl Workspace {
    pub fn new(building: ChamberStore, apartment: ChamberStore, m_probe: usize) -> Result<Self, ExperimentError> {
        if apartment.presentation().hash_hex() != building.presentation().coxeter().hash_hex() {
            return Err(ExperimentError::Mismatch);
        }
        Ok(Workspace { building, apartment, m_probe })
    }

    pub fn presentation(&self) -> &Presentation {
        self.building.presentation()
    }

    pub fn max_building_k(&self) -> Option<usize> {
        self.building.depth().checked_sub(self.m_probe)
    }

    pub fn max_apartment_k(&self) -> Option<usize> {
        self.apartment.depth().checked_sub(self.m_probe)
    }

    /// Apartment level with retraction fiber weights from the syllable
    /// formula; needs no building chambers beyond the presentation.
    pub fn apartment_level(&self, k: usize) -> Result<ApproximationLevel, ExperimentError> {
        let mut level = build_level(&self.apartment, k, self.m_probe)?;
        let p = self.presentation();
        level.weights = level.members.iter().map(|m| fiber_weight(p, &m.nf)).collect();
        Ok(level)
    }

    pub fn level_pair(&self, k: usize) -> Result<LevelPair, ExperimentError> {
        Ok(build_level_pair(&self.building, &self.apartment, k, self.m_probe)?)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExponentKind {
    /// Building levels, unweighted.
    Q,
    /// Apartment levels, unweighted.
    QA,
    /// Apartment levels weighted by fiber counts.
    QW,
}

impl ExponentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExponentKind::Q => "Q",
            ExponentKind::QA => "Q_A",
            ExponentKind::QW => "Q_W",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct BisectionOptions {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions { lo: 1.0, hi: 10.0, tol: 1e-3 }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CrossingStatus {
    Bracketed,
    /// k = 0: a single piece, no curves.
    Degenerate,
    /// Modulus at the left end is already at most 1.
    BelowAtLeft,
    /// Modulus at the right end still exceeds 1.
    AboveAtRight,
    IterationCap,
}

/// Crossing of Mod_p = 1 at one scale. When bracketed, Mod(lo) > 1 ≥ Mod(hi)
/// and hi − lo ≤ tol.
#[derive(Clone, Debug, Serialize)]
pub struct CrossingRow {
    pub k: usize,
    pub members: usize,
    pub p_k: Option<f64>,
    pub lo: f64,
    pub hi: f64,
    pub mod_lo: f64,
    pub mod_hi: f64,
    pub solves: usize,
    pub status: CrossingStatus,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentEstimate {
    pub kind: ExponentKind,
    pub t0: usize,
    pub rows: Vec<CrossingRow>,
    /// p_k at the largest scale with a crossing.
    pub q_hat: Option<f64>,
    /// Least-squares fit p_k ≈ Q + a/k over the last resolved scales.
    pub fitted_limit: Option<f64>,
}

/// Bisection on a non-increasing modulus curve. Only the side of 1 matters,
/// so results from decision-mode solves (status Bounded) are accepted.
pub fn find_crossing(
    mut modulus: impl FnMut(f64) -> Result<ModulusResult, SolveError>,
    opts: &BisectionOptions,
) -> Result<(Option<f64>, f64, f64, f64, f64, usize, CrossingStatus), SolveError> {
    let (mut lo, mut hi) = (opts.lo, opts.hi);
    let mut solves = 2;
    let left = modulus(lo)?;
    let right = modulus(hi)?;
    let capped = |r: &ModulusResult| r.status == Status::IterationCap;
    if capped(&left) || capped(&right) {
        return Ok((None, lo, hi, left.value, right.value, solves, CrossingStatus::IterationCap));
    }
    if left.value <= 1.0 {
        return Ok((None, lo, hi, left.value, right.value, solves, CrossingStatus::BelowAtLeft));
    }
    if right.value > 1.0 {
        return Ok((None, lo, hi, left.value, right.value, solves, CrossingStatus::AboveAtRight));
    }
    let (mut mod_lo, mut mod_hi) = (left.value, right.value);
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        let r = modulus(mid)?;
        solves += 1;
        if r.status == Status::IterationCap {
            return Ok((None, lo, hi, mod_lo, mod_hi, solves, CrossingStatus::IterationCap));
        }
        if r.value > 1.0 {
            lo = mid;
            mod_lo = r.value;
        } else {
            hi = mid;
            mod_hi = r.value;
        }
    }
    Ok((Some(0.5 * (lo + hi)), lo, hi, mod_lo, mod_hi, solves, CrossingStatus::Bracketed))
}

/// Fit p = Q + a/k by least squares over the given scales.
pub fn fit_limit(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(k, _)| 1.0 / k as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    Some(my - sxy / sxx * mx)
}

/// Far family and weights at scale k for one exponent kind.
pub fn far_instance(
    ws: &Workspace,
    kind: ExponentKind,
    k: usize,
    t0: usize,
) -> Result<(ApproximationLevel, PathFamily, Vec<f64>), ExperimentError> {
    match kind {
        ExponentKind::Q => {
            let pair = ws.level_pair(k)?;
            let level = pair.building;
            let fam = resolve_family(&ws.building, &level, &CurveFamilySpec::RetractedDiameterAtLeast { t0 })
                .map_err(SolveError::from)?;
            let w = level_weights(&level, false);
            Ok((level, fam, w))
        }
        ExponentKind::QA | ExponentKind::QW => {
            let level = ws.apartment_level(k)?;
            let fam = resolve_family(&ws.apartment, &level, &CurveFamilySpec::DiameterAtLeast { t0 })
                .map_err(SolveError::from)?;
            let w = level_weights(&level, kind == ExponentKind::QW);
            Ok((level, fam, w))
        }
    }
}

/// Crossing exponents per scale. Scales with k ≤ t0 + 1 are computed but
/// excluded from the fit: their far classes are no finer than the level.
pub fn estimate_exponent(
    ws: &Workspace,
    kind: ExponentKind,
    ks: &[usize],
    t0: usize,
    solver: &SolverOptions,
    bisection: &BisectionOptions,
) -> Result<ExponentEstimate, ExperimentError> {
    // Bisection needs only the side of 1 on which each modulus lies.
    let solver = &SolverOptions { target: Some(1.0), ..solver.clone() };
    let mut rows = Vec::new();
    for &k in ks {
        if k == 0 {
            rows.push(CrossingRow {
                k,
                members: 1,
                p_k: None,
                lo: bisection.lo,
                hi: bisection.hi,
                mod_lo: 0.0,
                mod_hi: 0.0,
                solves: 0,
                status: CrossingStatus::Degenerate,
            });
            continue;
        }
        let (level, fam, w) = far_instance(ws, kind, k, t0)?;
        let (p_k, lo, hi, mod_lo, mod_hi, solves, status) =
            find_crossing(|p| solve_on_graph(&level.adjacency, &w, &fam, p, solver), bisection)?;
        rows.push(CrossingRow { k, members: level.len(), p_k, lo, hi, mod_lo, mod_hi, solves, status });
    }
    let q_hat = rows.iter().rev().find_map(|r| r.p_k);
    let resolved: Vec<(usize, f64)> =
        rows.iter().filter(|r| r.k >= t0 + 2).filter_map(|r| r.p_k.map(|p| (r.k, p))).collect();
    let tail = &resolved[resolved.len().saturating_sub(3)..];
    Ok(ExponentEstimate { kind, t0, rows, q_hat, fitted_limit: fit_limit(tail) })
}

/// Members of the shadow ball of radius `inner` levels about `center`, and
/// members outside the ball of radius `outer`.
pub fn condenser(
    p: &Presentation,
    level: &ApproximationLevel,
    center: usize,
    inner: usize,
    outer: usize,
) -> (Vec<u32>, Vec<u32>) {
    let c = &level.members[center].nf;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, m) in level.members.iter().enumerate() {
        let prod = gromov_product(p, c, &m.nf);
        if prod + inner >= level.k {
            a.push(i as u32);
        } else if prod + outer < level.k {
            b.push(i as u32);
        }
    }
    (a, b)
}

/// Relative-distance proxy of a condenser from products with the center:
/// 2^{(least product inside) − (largest product outside)}.
pub fn delta_proxy(p: &Presentation, level: &ApproximationLevel, center: usize, a: &[u32], b: &[u32]) -> Option<f64> {
    let c = &level.members[center].nf;
    let prod = |i: &u32| gromov_product(p, c, &level.members[*i as usize].nf) as i32;
    let inside = a.iter().map(prod).min()?;
    let outside = b.iter().map(prod).max()?;
    Some(2f64.powi(inside - outside))
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    pub k: usize,
    pub p: f64,
    pub inner: usize,
    pub outer: usize,
    pub unweighted: f64,
    pub weighted: f64,
    pub factor: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub k: usize,
    pub p: f64,
    pub building: f64,
    pub weighted_apartment: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThicknessReport {
    pub q: u8,
    pub identity: Vec<IdentityRow>,
    pub ratios: Vec<RatioRow>,
}

/// (a) On apartment condensers, weighted modulus against (q − 1)^k times the
/// unweighted one. (b) Building far-family modulus over the weighted
/// apartment one, at scales the building ball reaches.
pub fn constant_thickness_check(
    ws: &Workspace,
    ks: &[usize],
    ps: &[f64],
    condensers: &[(usize, usize)],
    t0: usize,
    solver: &SolverOptions,
) -> Result<ThicknessReport, ExperimentError> {
    let q = ws.presentation().thickness_constant().ok_or(ExperimentError::NotConstantThickness)?;
    let pw = ws.apartment.presentation();
    let mut identity = Vec::new();
    let mut ratios = Vec::new();
    for &k in ks {
        let level = ws.apartment_level(k)?;
        let factor = ((q - 1) as f64).powi(k as i32);
        for &(inner, outer) in condensers {
            let (a, b) = condenser(pw, &level, 0, inner, outer);
            let fam = PathFamily::Connecting { from: a, to: b, allowed: None };
            for &p in ps {
                let u = solve_on_graph(&level.adjacency, &level_weights(&level, false), &fam, p, solver)?.value;
                let w = solve_on_graph(&level.adjacency, &level_weights(&level, true), &fam, p, solver)?.value;
                let rel_err = if u == 0.0 && w == 0.0 { 0.0 } else { (w - factor * u).abs() / (factor * u).abs().max(w.abs()) };
                identity.push(IdentityRow { k, p, inner, outer, unweighted: u, weighted: w, factor, rel_err });
            }
        }
        if ws.max_building_k().map_or(false, |m| k <= m) {
            let (bl, bf, bw) = far_instance(ws, ExponentKind::Q, k, t0)?;
            let (al, af, aw) = far_instance(ws, ExponentKind::QW, k, t0)?;
            for &p in ps {
                let b = solve_on_graph(&bl.adjacency, &bw, &bf, p, solver)?.value;
                let a = solve_on_graph(&al.adjacency, &aw, &af, p, solver)?.value;
                let ratio = if a == 0.0 { if b == 0.0 { 1.0 } else { f64::INFINITY } } else { b / a };
                ratios.push(RatioRow { k, p, building: b, weighted_apartment: a, ratio });
            }
        }
    }
    Ok(ThicknessReport { q, identity, ratios })
}

/// Building condenser between the lifts of an apartment condenser, against
/// the weighted apartment condenser it retracts into.
#[derive(Clone, Debug, Serialize)]
pub struct MajorizationRow {
    pub k: usize,
    pub p: f64,
    pub center: usize,
    pub inner: usize,
    pub outer: usize,
    pub building: f64,
    pub weighted_apartment: f64,
}

pub fn majorization_check(
    pair: &LevelPair,
    apartment_pres: &Presentation,
    center: usize,
    inner: usize,
    outer: usize,
    p: f64,
    solver: &SolverOptions,
) -> Result<MajorizationRow, ExperimentError> {
    let apt = &pair.apartment;
    let (a, b) = condenser(apartment_pres, apt, center, inner, outer);
    let lift = |xs: &[u32]| xs.iter().map(|&x| pair.lift[x as usize]).collect::<Vec<u32>>();
    let fb = PathFamily::Connecting { from: lift(&a), to: lift(&b), allowed: None };
    let fa = PathFamily::Connecting { from: a, to: b, allowed: None };
    let building = solve_on_graph(&pair.building.adjacency, &level_weights(&pair.building, false), &fb, p, solver)?.value;
    let weighted_apartment = solve_on_graph(&apt.adjacency, &level_weights(apt, true), &fa, p, solver)?.value;
    Ok(MajorizationRow { k: apt.k, p, center, inner, outer, building, weighted_apartment })
}

#[derive(Clone, Debug, Serialize)]
pub struct ClpScanRow {
    pub k: usize,
    pub p: f64,
    pub center: usize,
    pub inner: usize,
    pub outer: usize,
    pub inside: usize,
    pub outside: usize,
    pub delta: Option<f64>,
    pub value: f64,
    pub status: Status,
}

/// Condenser moduli on building levels over a grid of concentric shadow
/// balls (inner < outer, in levels) around the given centers.
pub fn clp_scan(
    ws: &Workspace,
    ks: &[usize],
    p: f64,
    grid: &[(usize, usize)],
    centers: &[usize],
    solver: &SolverOptions,
) -> Result<Vec<ClpScanRow>, ExperimentError> {
    let pres = ws.presentation();
    let mut rows = Vec::new();
    for &k in ks {
        let level = ws.level_pair(k)?.building;
        let w = level_weights(&level, false);
        for &center in centers.iter().filter(|&&c| c < level.len()) {
            for &(inner, outer) in grid.iter().filter(|(i, o)| i < o) {
                let (a, b) = condenser(pres, &level, center, inner, outer);
                let delta = delta_proxy(pres, &level, center, &a, &b);
                let (inside, outside) = (a.len(), b.len());
                let fam = PathFamily::Connecting { from: a, to: b, allowed: None };
                let r = solve_on_graph(&level.adjacency, &w, &fam, p, solver)?;
                rows.push(ClpScanRow { k, p, center, inner, outer, inside, outside, delta, value: r.value, status: r.status });
            }
        }
    }
    Ok(rows)
}

/// Mod₁ of the far family on building levels, intrinsic products.
pub fn far_mod1_sequence(ws: &Workspace, ks: &[usize], t0: usize, solver: &SolverOptions) -> Result<Vec<(usize, f64)>, ExperimentError> {
    let mut out = Vec::new();
    for &k in ks {
        let level = ws.level_pair(k)?.building;
        let fam = resolve_family(&ws.building, &level, &CurveFamilySpec::DiameterAtLeast { t0 }).map_err(SolveError::from)?;
        let r = solve_on_graph(&level.adjacency, &level_weights(&level, false), &fam, 1.0, solver)?;
        out.push((k, r.value));
    }
    Ok(out)
}

/// Columns repeated on every output row.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub preset: String,
    pub preset_hash: String,
    pub t0: usize,
    pub m_probe: usize,
    pub tol_sep: f64,
    pub tol_obj: f64,
    pub seed: u64,
}

fn fmt(x: f64) -> String {
    format!("{x:.9}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn write_rows(header: &[&str], prov: &Provenance, rows: Vec<Vec<String>>) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<&str> = header.to_vec();
    head.extend(["preset", "preset_hash", "t0", "m_probe", "tol_sep", "tol_obj", "seed"]);
    w.write_record(&head)?;
    for mut r in rows {
        r.extend([
            prov.preset.clone(),
            prov.preset_hash.clone(),
            prov.t0.to_string(),
            prov.m_probe.to_string(),
            format!("{:e}", prov.tol_sep),
            format!("{:e}", prov.tol_obj),
            prov.seed.to_string(),
        ]);
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Domain(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `reference`, when known, adds the residual p_k − reference per row.
pub fn exponents_csv(
    prov: &Provenance,
    estimates: &[ExponentEstimate],
    reference: Option<f64>,
) -> Result<String, ExperimentError> {
    let mut rows = Vec::new();
    for e in estimates {
        for r in &e.rows {
            let residual = match (r.p_k, reference) {
                (Some(p), Some(q)) => Some(p - q),
                _ => None,
            };
            rows.push(vec![
                e.kind.as_str().to_string(),
                r.k.to_string(),
                r.members.to_string(),
                opt(r.p_k),
                fmt(r.lo),
                fmt(r.hi),
                fmt(r.mod_lo),
                fmt(r.mod_hi),
                r.solves.to_string(),
                format!("{:?}", r.status),
                opt(e.q_hat),
                opt(e.fitted_limit),
                opt(reference),
                opt(residual),
            ]);
        }
    }
    write_rows(
        &["exponent", "k", "members", "p_k", "lo", "hi", "mod_lo", "mod_hi", "solves", "status", "q_hat", "fitted_limit", "reference", "residual"],
        prov,
        rows,
    )
}

pub fn clp_csv(prov: &Provenance, rows: &[ClpScanRow]) -> Result<String, ExperimentError> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                fmt(r.p),
                r.center.to_string(),
                r.inner.to_string(),
                r.outer.to_string(),
                r.inside.to_string(),
                r.outside.to_string(),
                opt(r.delta),
                fmt(r.value),
                r.status.as_str().to_string(),
            ]
        })
        .collect();
    write_rows(&["k", "p", "center", "inner", "outer", "inside", "outside", "delta", "value", "status"], prov, body)
}

/// One modulus row: `preset,k,p,family,weighted,value,status,iters,oracle_len`
/// followed by the provenance columns other than the preset.
pub fn modulus_csv(prov: &Provenance, rows: &[(usize, f64, String, bool, ModulusResult)]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "preset", "k", "p", "family", "weighted", "value", "status", "iters", "oracle_len", "lower_bound", "preset_hash",
        "t0", "m_probe", "tol_sep", "tol_obj", "seed",
    ])?;
    for (k, p, family, weighted, r) in rows {
        w.write_record([
            prov.preset.clone(),
            k.to_string(),
            fmt(*p),
            family.clone(),
            weighted.to_string(),
            fmt(r.value),
            r.status.as_str().to_string(),
            r.iterations.to_string(),
            fmt(r.oracle_len),
            fmt(r.lower_bound),
            prov.preset_hash.clone(),
            prov.t0.to_string(),
            prov.m_probe.to_string(),
            format!("{:e}", prov.tol_sep),
            format!("{:e}", prov.tol_obj),
            prov.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Domain(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_engine::DEFAULT_BUDGET;
    use crate::presentation::preset;

    fn c5_workspace(depth: usize, m: usize) -> Workspace {
        let p = preset("cycle:5").unwrap().presentation;
        let b = ChamberStore::build(p.clone(), depth, DEFAULT_BUDGET).unwrap();
        let a = ChamberStore::build(p.coxeter(), depth, DEFAULT_BUDGET).unwrap();
        Workspace::new(b, a, m).unwrap()
    }

    #[test]
    fn reference_values() {
        // arccosh(1.5) = ln(1.5 + √1.25), arccosh(2) = ln(2 + √3).
        let a = 1.0 + 2f64.ln() / (1.5 + 1.25f64.sqrt()).ln();
        let b = 1.0 + 2f64.ln() / (2.0 + 3f64.sqrt()).ln();
        assert!((bourdon_reference(5, 3).unwrap() - a).abs() < 1e-12);
        assert!((a - 1.7202).abs() < 1e-4);
        assert!((bourdon_reference(6, 3).unwrap() - b).abs() < 1e-12);
        assert!((b - 1.5264).abs() < 1e-4);
        assert_eq!(bourdon_reference(5, 2).unwrap(), 1.0);
        assert!(bourdon_reference(4, 3).is_err());
        assert!(bourdon_reference(5, 1).is_err());
    }

    #[test]
    fn fit_recovers_exact_model() {
        let pts: Vec<(usize, f64)> = (3..7).map(|k| (k, 1.7 + 2.0 / k as f64)).collect();
        assert!((fit_limit(&pts).unwrap() - 1.7).abs() < 1e-12);
        assert_eq!(fit_limit(&pts[..1]), None);
    }

    #[test]
    fn crossing_is_bracketed() {
        let f = |p: f64| {
            Ok(ModulusResult {
                value: 8.0 * 2f64.powf(-p),
                lower_bound: 0.0,
                rho_star: vec![],
                active_paths: vec![],
                iterations: 0,
                rounds: 0,
                status: Status::Converged,
                oracle_len: 1.0,
                kkt_residual: 0.0,
            })
        };
        let (pk, lo, hi, ml, mh, _, st) = find_crossing(f, &BisectionOptions::default()).unwrap();
        assert_eq!(st, CrossingStatus::Bracketed);
        assert!((pk.unwrap() - 3.0).abs() < 1e-3);
        assert!(ml > 1.0 && mh <= 1.0 && hi - lo <= 1e-3);
    }

    #[test]
    fn fiber_formula_matches_counting() {
        let ws = c5_workspace(5, 2);
        for k in 0..=3 {
            let pair = ws.level_pair(k).unwrap();
            let formula = ws.apartment_level(k).unwrap().weights;
            assert_eq!(pair.apartment.weights, formula);
            assert!(formula.iter().all(|&w| w == 1 << k));
        }
    }

    #[test]
    fn degenerate_scale_is_noted() {
        let ws = c5_workspace(4, 2);
        let e = estimate_exponent(&ws, ExponentKind::QA, &[0], 0, &SolverOptions::default(), &BisectionOptions::default())
            .unwrap();
        assert_eq!(e.rows[0].status, CrossingStatus::Degenerate);
        assert_eq!(e.q_hat, None);
    }

    #[test]
    fn exponents_are_ordered_per_scale() {
        let ws = c5_workspace(5, 2);
        let opts = SolverOptions::default();
        let bis = BisectionOptions::default();
        let ks = [1, 2, 3];
        let est: Vec<ExponentEstimate> = [ExponentKind::QA, ExponentKind::Q, ExponentKind::QW]
            .iter()
            .map(|&kind| estimate_exponent(&ws, kind, &ks, 1, &opts, &bis).unwrap())
            .collect();
        for i in 0..ks.len() {
            let p: Vec<f64> = est.iter().map(|e| e.rows[i].p_k.unwrap()).collect();
            assert!(p[0] <= p[1] + bis.tol && p[1] <= p[2] + bis.tol, "k={} {:?}", ks[i], p);
        }
    }

    #[test]
    fn empty_condenser_gives_zero() {
        let ws = c5_workspace(5, 2);
        let rows = clp_scan(&ws, &[2], 2.0, &[(0, 9)], &[0], &SolverOptions::default()).unwrap();
        assert_eq!(rows[0].outside, 0);
        assert_eq!(rows[0].value, 0.0);
        assert_eq!(rows[0].status, Status::EmptyFamily);
    }
}
