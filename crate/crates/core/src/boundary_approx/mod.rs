//! Shadow coverings of the boundary at a fixed scale, their weights under
//! the retraction onto the apartment, the combinatorial Gromov product, and
//! the overlap graph on which curves are discretized.

mod level;

pub use level::{
    build_level, build_level_pair, compatible_candidates, LevelError, LevelPair, OverlapStats,
};

use crate::group_engine::{ChamberId, ChamberStore, NormalForm};
use crate::presentation::Presentation;
use crate::wall_geometry::{cone_contains, walls_separating, Cone};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct Shadow {
    pub chamber: ChamberId,
    pub nf: NormalForm,
    pub cone: Cone,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WitnessKind {
    Exact,
    DeepWitness,
}

impl WitnessKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WitnessKind::Exact => "Exact",
            WitnessKind::DeepWitness => "DeepWitness",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OverlapEdge {
    pub i: u32,
    pub j: u32,
    pub kind: WitnessKind,
}

/// Covering of the boundary by the shadows of selected chambers at distance
/// k, with the overlap graph of those shadows.
#[derive(Clone, Debug)]
pub struct ApproximationLevel {
    pub k: usize,
    pub m_probe: usize,
    pub members: Vec<Shadow>,
    /// Fiber count of the retraction over each member's image.
    pub weights: Vec<u64>,
    /// Sorted by (i, j) with i < j.
    pub edges: Vec<OverlapEdge>,
    pub adjacency: Vec<Vec<u32>>,
    /// Members whose chamber lies in the apartment.
    pub apartment_trace: Vec<u32>,
    /// For each member, a probe chamber in its cone and in no other member's.
    pub owned_probe: Vec<ChamberId>,
    pub stats: OverlapStats,
}

impl ApproximationLevel {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_of_nf(&self, nf: &NormalForm) -> Option<usize> {
        self.members.binary_search_by(|m| m.nf.cmp(nf)).ok()
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&(b as u32)).is_ok()
    }

    /// JSON lines `member_id, chamber_id, weight, apartment_member`.
    pub fn dump_members(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.members.iter().enumerate() {
            let line = serde_json::json!({
                "member_id": i,
                "chamber_id": m.chamber,
                "weight": self.weights[i],
                "apartment_member": m.nf.in_apartment(),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    /// CSV `i,j,witness_kind`.
    pub fn dump_edges(&self) -> String {
        let mut out = String::from("i,j,witness_kind\n");
        for e in &self.edges {
            out.push_str(&format!("{},{},{}\n", e.i, e.j, e.kind.as_str()));
        }
        out
    }
}

/// Depth of the common gallery prefix of two chambers.
pub fn gromov_product(p: &Presentation, a: &NormalForm, b: &NormalForm) -> usize {
    p.meet(a, b).len()
}

/// Number of walls having a and b in one common dial other than the base
/// dial.
pub fn gromov_product_by_walls(p: &Presentation, a: &NormalForm, b: &NormalForm) -> usize {
    let e = NormalForm::identity();
    let wa: BTreeMap<_, u8> = walls_separating(p, &e, a).into_iter().map(|(w, _, br)| (w, br)).collect();
    walls_separating(p, &e, b)
        .into_iter()
        .filter(|(w, _, br)| wa.get(w) == Some(br))
        .count()
}

/// Visual distance 2^{-product}; zero for identical anchors.
pub fn visual_distance(p: &Presentation, a: &NormalForm, b: &NormalForm) -> f64 {
    if a == b {
        return 0.0;
    }
    visual_from_product(gromov_product(p, a, b))
}

pub fn visual_from_product(product: usize) -> f64 {
    0.5f64.powi(product as i32)
}

/// Members whose chamber has Gromov product at least k − radius with the
/// center's chamber.
pub fn shadow_ball(p: &Presentation, level: &ApproximationLevel, center: usize, radius: usize) -> Vec<usize> {
    let threshold = level.k.saturating_sub(radius);
    let c = &level.members[center].nf;
    (0..level.len()).filter(|&i| gromov_product(p, c, &level.members[i].nf) >= threshold).collect()
}

/// Ancestor chambers at the given depth of every member: pairs with
/// disjoint ancestor sets are exactly the pairs with Gromov product below
/// `depth`. Members shallower than `depth` get an empty set.
pub fn ancestor_classes(p: &Presentation, level: &ApproximationLevel, depth: usize) -> Vec<Vec<NormalForm>> {
    level
        .members
        .iter()
        .map(|m| if m.nf.len() < depth { Vec::new() } else { p.prefixes_at(&m.nf, depth) })
        .collect()
}

/// Empirical approximation constant: for sampled members, the inner radius
/// (largest Gromov ball around the owned probe inside the cone) and outer
/// radius (farthest probe of the cone from it), compared with 2^{-k}.
#[derive(Clone, Debug, Serialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub worst_inner: f64,
    pub worst_outer: f64,
    pub min_center_separation: f64,
    pub sampled: usize,
}

pub fn estimate_kappa(store: &ChamberStore, level: &ApproximationLevel, sample: usize) -> KappaEstimate {
    let p = store.presentation();
    let scale = 0.5f64.powi(level.k as i32);
    let probes: Vec<NormalForm> =
        store.sphere(level.k + level.m_probe).map(|id| store.normal_form(id)).collect();
    let step = (level.len() / sample.max(1)).max(1);
    let centers: Vec<usize> = (0..level.len()).step_by(step).take(sample).collect();
    let center_nf: Vec<NormalForm> =
        centers.iter().map(|&i| store.normal_form(level.owned_probe[i])).collect();
    let mut worst_inner = f64::INFINITY;
    let mut worst_outer: f64 = 0.0;
    let mut kappa: f64 = 1.0;
    for (c, &i) in centers.iter().enumerate() {
        let z = &center_nf[c];
        let cone = &level.members[i].cone;
        let mut min_in = usize::MAX;
        let mut ball_depth = 0usize;
        for y in &probes {
            let prod = gromov_product(p, z, y);
            if cone_contains(p, cone, y) {
                min_in = min_in.min(prod);
            } else {
                ball_depth = ball_depth.max(prod + 1);
            }
        }
        let inner = visual_from_product(ball_depth);
        let outer = visual_from_product(min_in);
        worst_inner = worst_inner.min(inner);
        worst_outer = worst_outer.max(outer);
        kappa = kappa.max(scale / inner).max(outer / scale);
    }
    let mut min_sep = f64::INFINITY;
    for a in 0..center_nf.len() {
        for b in (a + 1)..center_nf.len() {
            min_sep = min_sep.min(visual_distance(p, &center_nf[a], &center_nf[b]));
        }
    }
    if min_sep.is_finite() {
        kappa = kappa.max(scale / min_sep);
    }
    KappaEstimate { kappa, worst_inner, worst_outer, min_center_separation: min_sep, sampled: centers.len() }
}
