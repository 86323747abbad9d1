use super::{ApproximationLevel, OverlapEdge, Shadow, WitnessKind};
use crate::group_engine::{ChamberId, ChamberStore, NormalForm};
use crate::presentation::{Mask, Presentation};
use crate::wall_geometry::{cone_of, cones_compatible, Compatibility};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LevelError {
    #[error("level {k} with probe depth {m} needs radius {needed}, the stored ball has radius {radius}")]
    BudgetExceeded { k: usize, m: usize, needed: usize, radius: usize },
    #[error("apartment ball must belong to the Coxeter image of the building")]
    ApartmentMismatch,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OverlapStats {
    /// Pairs tested with the exact compatibility test.
    pub candidates: usize,
    pub exact: usize,
    pub deep: usize,
    pub exact_only: usize,
    pub deep_only: usize,
    pub shared_wall_only: usize,
}

#[derive(Clone, Debug)]
pub struct LevelPair {
    pub building: ApproximationLevel,
    pub apartment: ApproximationLevel,
    /// For each apartment member, the building member with the same chamber.
    pub lift: Vec<u32>,
    /// For each building member, the apartment member it retracts to.
    pub image: Vec<u32>,
}

const NONE: u32 = u32::MAX;

/// Members of each probe chamber's prefix set, as compressed rows indexed by
/// probe offset within the probe sphere.
struct ProbeRows {
    start: Vec<u32>,
    items: Vec<u32>,
}

impl ProbeRows {
    fn row(&self, i: usize) -> &[u32] {
        &self.items[self.start[i] as usize..self.start[i + 1] as usize]
    }

    fn len(&self) -> usize {
        self.start.len() - 1
    }
}

/// `member_of` maps chamber ids of sphere(k), offset by the sphere start, to
/// member indices.
fn probe_rows(store: &ChamberStore, k: usize, m: usize, member_of: &[u32]) -> ProbeRows {
    let p = store.presentation();
    let k0 = store.sphere(k).start;
    let probes: Vec<ChamberId> = store.sphere(k + m).collect();
    let rows: Vec<Vec<u32>> = probes
        .par_chunks(2048)
        .flat_map_iter(|chunk| {
            chunk.iter().map(|&z| {
                let nf = store.normal_form(z);
                let mut row: Vec<u32> = p
                    .prefixes_at(&nf, k)
                    .iter()
                    .filter_map(|x| store.lookup(x))
                    .map(|id| member_of[(id - k0) as usize])
                    .filter(|&i| i != NONE)
                    .collect();
                row.sort_unstable();
                row
            })
        })
        .collect();
    let mut start = Vec::with_capacity(rows.len() + 1);
    let mut items = Vec::new();
    start.push(0);
    for r in rows {
        items.extend(r);
        start.push(items.len() as u32);
    }
    ProbeRows { start, items }
}

/// Keeps a minimal subcover of the sphere's cones as measured on the probe
/// sphere: walking chambers in id order, drop one whenever every probe it
/// covers is covered at least twice.
fn greedy_subcover(store: &ChamberStore, k: usize, m: usize) -> Vec<ChamberId> {
    let sphere = store.sphere(k);
    let n = sphere.len();
    let identity: Vec<u32> = (0..n as u32).collect();
    let rows = probe_rows(store, k, m, &identity);
    let mut count: Vec<u32> = (0..rows.len()).map(|i| rows.row(i).len() as u32).collect();
    let mut by_member: Vec<Vec<u32>> = vec![Vec::new(); n];
    for z in 0..rows.len() {
        for &x in rows.row(z) {
            by_member[x as usize].push(z as u32);
        }
    }
    let mut keep = vec![true; n];
    for x in 0..n {
        if by_member[x].iter().all(|&z| count[z as usize] >= 2) {
            keep[x] = false;
            for &z in &by_member[x] {
                count[z as usize] -= 1;
            }
        }
    }
    sphere.zip(keep).filter(|(_, k)| *k).map(|(id, _)| id).collect()
}

/// Elements of W_T of exact length `len`, T a set of generators, in a
/// Coxeter presentation.
fn parabolic_elements(w: &Presentation, types: Mask, len: usize, memo: &mut HashMap<(Mask, usize), Vec<NormalForm>>) -> Vec<NormalForm> {
    if let Some(v) = memo.get(&(types, len)) {
        return v.clone();
    }
    let out = if len == 0 {
        vec![NormalForm::identity()]
    } else {
        let shorter = parabolic_elements(w, types, len - 1, memo);
        let mut out = Vec::new();
        for x in &shorter {
            for g in crate::presentation::mask_iter(types) {
                if w.is_canonical_extension(x, g) {
                    let mut y = x.clone();
                    y.0.push(crate::group_engine::Syllable::new(g, 1));
                    out.push(y);
                }
            }
        }
        out
    };
    memo.insert((types, len), out.clone());
    out
}

/// Pairs (i, j), i < j, of equal-length Coxeter chambers that can have a
/// common upper bound: writing x = c·x', y = c·y', every generator of y'
/// commutes with every generator of x'. This is necessary for the cones of
/// x and y to share a chamber. `members` must be sorted.
pub fn compatible_candidates(w: &Presentation, members: &[NormalForm]) -> Vec<(u32, u32)> {
    let index: HashMap<&NormalForm, u32> = members.iter().enumerate().map(|(i, x)| (x, i as u32)).collect();
    let mut pairs: Vec<(u32, u32)> = members
        .par_iter()
        .enumerate()
        .map_init(HashMap::new, |memo, (i, x)| {
            let k = x.len();
            let mut found = Vec::new();
            let mut seen: HashSet<NormalForm> = HashSet::new();
            // (prefix c, common link of the generators of x', |x'|)
            let mut stack: Vec<(NormalForm, Mask, usize)> = vec![(x.clone(), w.all(), 0)];
            while let Some((c, link, suffix_len)) = stack.pop() {
                if suffix_len > 0 {
                    for yp in parabolic_elements(w, link, suffix_len, memo) {
                        let y = w.mul(&c, &yp);
                        if y.len() == k {
                            if let Some(&j) = index.get(&y) {
                                if j as usize > i {
                                    found.push((i as u32, j));
                                } else if (j as usize) < i {
                                    found.push((j, i as u32));
                                }
                            }
                        }
                    }
                }
                for pos in w.last_positions(&c) {
                    let g = c.syllables()[pos].gen as usize;
                    let l2 = link & w.adj(g);
                    if l2 == 0 {
                        continue;
                    }
                    let c2 = w.remove_at(&c, pos);
                    if seen.insert(c2.clone()) {
                        stack.push((c2, l2, suffix_len + 1));
                    }
                }
            }
            found
        })
        .flatten()
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Pairs of members with probe chambers in a common panel (distance at most
/// one), including pairs sharing a probe.
fn deep_witness_pairs(store: &ChamberStore, k: usize, m: usize, rows: &ProbeRows) -> Vec<(u32, u32)> {
    if k + m == 0 {
        return Vec::new();
    }
    let p = store.presentation();
    let z0 = store.sphere(k + m).start;
    let mut keys: Vec<(ChamberId, u8, u32)> = (0..rows.len())
        .into_par_iter()
        .flat_map_iter(|zi| {
            let mut out = Vec::new();
            if !rows.row(zi).is_empty() {
                let nf = store.normal_form(z0 + zi as u32);
                for pos in p.last_positions(&nf) {
                    let g = nf.syllables()[pos].gen;
                    let base = store.lookup(&p.remove_at(&nf, pos)).expect("prefix lies in the ball");
                    out.push((base, g, zi as u32));
                }
            }
            out
        })
        .collect();
    keys.par_sort_unstable();
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < keys.len() {
        let mut j = i;
        let mut group: Vec<u32> = Vec::new();
        while j < keys.len() && keys[j].0 == keys[i].0 && keys[j].1 == keys[i].1 {
            group.extend_from_slice(rows.row(keys[j].2 as usize));
            j += 1;
        }
        group.sort_unstable();
        group.dedup();
        for a in 0..group.len() {
            for b in (a + 1)..group.len() {
                pairs.push((group[a], group[b]));
            }
        }
        i = j;
    }
    pairs.par_sort_unstable();
    pairs.dedup();
    pairs
}

fn check_radius(store: &ChamberStore, k: usize, m: usize) -> Result<(), LevelError> {
    if k + m > store.depth() {
        return Err(LevelError::BudgetExceeded { k, m, needed: k + m, radius: store.depth() });
    }
    Ok(())
}

/// Assembles a level from chosen member chambers of sphere(k): cones, probe
/// ownership, weights (retraction fiber sizes among members) and overlap
/// edges.
fn assemble(store: &ChamberStore, k: usize, m: usize, chosen: Vec<ChamberId>) -> ApproximationLevel {
    let p = store.presentation();
    let sphere = store.sphere(k);
    let mut member_of = vec![NONE; sphere.len()];
    for (i, &id) in chosen.iter().enumerate() {
        member_of[(id - sphere.start) as usize] = i as u32;
    }
    let members: Vec<Shadow> = chosen
        .par_iter()
        .map(|&id| {
            let nf = store.normal_form(id);
            let cone = cone_of(p, &nf);
            Shadow { chamber: id, nf, cone }
        })
        .collect();
    let rows = probe_rows(store, k, m, &member_of);
    let z0 = store.sphere(k + m).start;
    let mut owned_probe = vec![ChamberId::MAX; members.len()];
    for z in 0..rows.len() {
        if let [only] = rows.row(z) {
            let slot = &mut owned_probe[*only as usize];
            if *slot == ChamberId::MAX {
                *slot = z0 + z as u32;
            }
        }
    }

    // Weights: fiber sizes of the retraction among members.
    let images: Vec<NormalForm> = members.iter().map(|s| p.retract(&s.nf)).collect();
    let mut fiber: HashMap<&NormalForm, u64> = HashMap::new();
    for im in &images {
        *fiber.entry(im).or_insert(0) += 1;
    }
    let weights: Vec<u64> = images.iter().map(|im| fiber[im]).collect();

    // Exact test on candidates: lifts of pairs of images that can share a
    // chamber in the apartment, plus distinct lifts of one image.
    let w = p.coxeter();
    let mut distinct: Vec<NormalForm> = images.clone();
    distinct.sort();
    distinct.dedup();
    let mut lifts: Vec<Vec<u32>> = vec![Vec::new(); distinct.len()];
    for (i, im) in images.iter().enumerate() {
        lifts[distinct.binary_search(im).unwrap()].push(i as u32);
    }
    let image_pairs = compatible_candidates(&w, &distinct);
    let mut candidates: Vec<(u32, u32)> = Vec::new();
    for l in &lifts {
        for a in 0..l.len() {
            for b in (a + 1)..l.len() {
                candidates.push((l[a], l[b]));
            }
        }
    }
    for &(a, b) in &image_pairs {
        for &x in &lifts[a as usize] {
            for &y in &lifts[b as usize] {
                candidates.push((x.min(y), x.max(y)));
            }
        }
    }
    candidates.par_sort_unstable();
    candidates.dedup();
    let verdicts: Vec<Compatibility> = candidates
        .par_iter()
        .map(|&(a, b)| cones_compatible(p, &members[a as usize].cone, &members[b as usize].cone))
        .collect();
    let mut stats = OverlapStats { candidates: candidates.len(), ..Default::default() };
    let exact: Vec<(u32, u32)> = candidates
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| **v != Compatibility::DisjointChambers)
        .map(|(e, _)| *e)
        .collect();
    stats.shared_wall_only = verdicts.iter().filter(|v| **v == Compatibility::SharedWallOnly).count();
    let deep = deep_witness_pairs(store, k, m, &rows);
    stats.exact = exact.len();
    stats.deep = deep.len();

    let mut edges = Vec::new();
    let (mut a, mut b) = (0, 0);
    while a < exact.len() || b < deep.len() {
        let ea = exact.get(a).copied();
        let eb = deep.get(b).copied();
        match (ea, eb) {
            (Some(x), Some(y)) if x == y => {
                edges.push(OverlapEdge { i: x.0, j: x.1, kind: WitnessKind::Exact });
                a += 1;
                b += 1;
            }
            (Some(x), Some(y)) if x < y => {
                edges.push(OverlapEdge { i: x.0, j: x.1, kind: WitnessKind::Exact });
                stats.exact_only += 1;
                a += 1;
            }
            (Some(x), None) => {
                edges.push(OverlapEdge { i: x.0, j: x.1, kind: WitnessKind::Exact });
                stats.exact_only += 1;
                a += 1;
            }
            (_, Some(y)) => {
                edges.push(OverlapEdge { i: y.0, j: y.1, kind: WitnessKind::DeepWitness });
                stats.deep_only += 1;
                b += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let mut adjacency = vec![Vec::new(); members.len()];
    for e in &edges {
        adjacency[e.i as usize].push(e.j);
        adjacency[e.j as usize].push(e.i);
    }
    for row in &mut adjacency {
        row.sort_unstable();
    }
    let apartment_trace =
        (0..members.len() as u32).filter(|&i| members[i as usize].nf.in_apartment()).collect();
    ApproximationLevel {
        k,
        m_probe: m,
        members,
        weights,
        edges,
        adjacency,
        apartment_trace,
        owned_probe,
        stats,
    }
}

/// Level k of a single chamber ball: greedy minimal subcover of sphere(k)
/// measured at probe depth k + m.
pub fn build_level(store: &ChamberStore, k: usize, m: usize) -> Result<ApproximationLevel, LevelError> {
    check_radius(store, k, m)?;
    let chosen = greedy_subcover(store, k, m);
    Ok(assemble(store, k, m, chosen))
}

/// Apartment level by greedy subcover in the Coxeter ball, and building
/// level made of every chamber of the building sphere retracting onto an
/// apartment member. Apartment weights are the retraction fiber sizes.
pub fn build_level_pair(
    building: &ChamberStore,
    apartment: &ChamberStore,
    k: usize,
    m: usize,
) -> Result<LevelPair, LevelError> {
    let p = building.presentation();
    if apartment.presentation().hash_hex() != p.coxeter().hash_hex() {
        return Err(LevelError::ApartmentMismatch);
    }
    check_radius(building, k, m)?;
    check_radius(apartment, k, m)?;
    let mut apart = build_level(apartment, k, m)?;
    let chosen: Vec<ChamberId> = building
        .sphere(k)
        .filter(|&id| {
            let im = p.retract(&building.normal_form(id));
            apart.member_of_nf(&im).is_some()
        })
        .collect();
    let build = assemble(building, k, m, chosen);
    let mut image = Vec::with_capacity(build.len());
    let mut lift = vec![NONE; apart.len()];
    for (i, s) in build.members.iter().enumerate() {
        let a = apart.member_of_nf(&p.retract(&s.nf)).expect("member retracts into the apartment level") as u32;
        image.push(a);
        if s.nf.in_apartment() {
            lift[a as usize] = i as u32;
        }
    }
    apart.weights = vec![0; apart.len()];
    for &a in &image {
        apart.weights[a as usize] += 1;
    }
    Ok(LevelPair { building: build, apartment: apart, lift, image })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_approx::{gromov_product, gromov_product_by_walls, shadow_ball};
    use crate::group_engine::DEFAULT_BUDGET;
    use crate::presentation::{cycle_graph, preset};
    use crate::wall_geometry::cone_contains;

    fn c5(q: u32) -> Presentation {
        Presentation::new(cycle_graph(5, q)).unwrap()
    }

    fn covering_and_minimality(store: &ChamberStore, level: &ApproximationLevel) {
        let p = store.presentation();
        for z in store.sphere(level.k + level.m_probe) {
            let nf = store.normal_form(z);
            let owners: Vec<usize> =
                (0..level.len()).filter(|&i| cone_contains(p, &level.members[i].cone, &nf)).collect();
            assert!(!owners.is_empty(), "probe {nf} uncovered");
        }
        for (i, &z) in level.owned_probe.iter().enumerate() {
            assert_ne!(z, ChamberId::MAX, "member {i} owns no probe");
            let nf = store.normal_form(z);
            let owners = (0..level.len()).filter(|&j| cone_contains(p, &level.members[j].cone, &nf)).count();
            assert_eq!(owners, 1);
            assert!(cone_contains(p, &level.members[i].cone, &nf));
        }
    }

    #[test]
    fn coxeter_level_two() {
        let store = ChamberStore::build(c5(2), 5, DEFAULT_BUDGET).unwrap();
        let level = build_level(&store, 2, 3).unwrap();
        assert!(level.len() <= 15);
        covering_and_minimality(&store, &level);
        assert!(level.weights.iter().all(|&w| w == 1));
        let zero = build_level(&store, 0, 3).unwrap();
        assert_eq!(zero.len(), 1);
        assert_eq!(zero.weights, vec![1]);
    }

    #[test]
    fn building_levels_cover_and_weights_are_fibers() {
        let b = ChamberStore::build(c5(3), 6, DEFAULT_BUDGET).unwrap();
        let a = ChamberStore::build(c5(2), 6, DEFAULT_BUDGET).unwrap();
        for k in 1..=3 {
            let pair = build_level_pair(&b, &a, k, 3).unwrap();
            covering_and_minimality(&b, &pair.building);
            covering_and_minimality(&a, &pair.apartment);
            assert!(pair.apartment.weights.iter().all(|&w| w == 2u64.pow(k as u32)));
            assert!(pair.building.weights.iter().all(|&w| w == 2u64.pow(k as u32)));
            // The apartment trace is in bijection with the apartment level.
            assert_eq!(pair.building.apartment_trace.len(), pair.apartment.len());
            for (ai, &bi) in pair.lift.iter().enumerate() {
                assert_eq!(pair.image[bi as usize] as usize, ai);
                assert_eq!(pair.building.members[bi as usize].nf, pair.apartment.members[ai].nf);
            }
        }
    }

    /// Candidate filtering loses no overlapping pair: compare with the exact
    /// test on all pairs.
    #[test]
    fn candidates_contain_every_compatible_pair() {
        let cases: Vec<(Presentation, usize)> = vec![
            (c5(2), 4),
            (c5(3), 3),
            (preset("dodecahedron").unwrap().presentation.coxeter(), 3),
            (preset("dodecahedron").unwrap().presentation, 2),
        ];
        for (p, k) in cases {
            let store = ChamberStore::build(p.clone(), k + 1, DEFAULT_BUDGET).unwrap();
            let level = build_level(&store, k, 1).unwrap();
            let mut all = Vec::new();
            for i in 0..level.len() {
                for j in (i + 1)..level.len() {
                    let v = cones_compatible(&p, &level.members[i].cone, &level.members[j].cone);
                    if v != Compatibility::DisjointChambers {
                        all.push((i as u32, j as u32));
                    }
                }
            }
            let exact: HashSet<(u32, u32)> = level
                .edges
                .iter()
                .filter(|e| e.kind == WitnessKind::Exact)
                .map(|e| (e.i, e.j))
                .collect();
            assert_eq!(exact.len(), all.len(), "k={k}");
            assert!(all.iter().all(|e| exact.contains(e)));
        }
    }

    #[test]
    fn exact_overlap_matches_shared_probes_in_coxeter_case() {
        // In the apartment, two cones share a chamber iff they share one at
        // every deeper sphere; the exact test and shared probes agree.
        let store = ChamberStore::build(c5(2), 7, DEFAULT_BUDGET).unwrap();
        let p = store.presentation();
        let level = build_level(&store, 3, 4).unwrap();
        let probes: Vec<NormalForm> = store.sphere(7).map(|z| store.normal_form(z)).collect();
        for i in 0..level.len() {
            for j in (i + 1)..level.len() {
                let shared = probes.iter().any(|z| {
                    cone_contains(p, &level.members[i].cone, z) && cone_contains(p, &level.members[j].cone, z)
                });
                let exact =
                    cones_compatible(p, &level.members[i].cone, &level.members[j].cone) != Compatibility::DisjointChambers;
                assert_eq!(shared, exact);
            }
        }
    }

    #[test]
    fn retraction_preserves_edges() {
        let b = ChamberStore::build(c5(3), 6, DEFAULT_BUDGET).unwrap();
        let a = ChamberStore::build(c5(2), 6, DEFAULT_BUDGET).unwrap();
        for k in 1..=3 {
            let pair = build_level_pair(&b, &a, k, 3).unwrap();
            for e in &pair.building.edges {
                let (x, y) = (pair.image[e.i as usize] as usize, pair.image[e.j as usize] as usize);
                assert!(x == y || pair.apartment.are_adjacent(x, y), "k={k} {e:?}");
            }
            // Apartment edges are edges between the lifts.
            for e in &pair.apartment.edges {
                let (x, y) = (pair.lift[e.i as usize] as usize, pair.lift[e.j as usize] as usize);
                assert!(pair.building.are_adjacent(x, y));
            }
        }
    }

    #[test]
    fn gromov_definitions_agree_on_sphere_three() {
        let p = c5(3);
        let store = ChamberStore::build(p.clone(), 3, DEFAULT_BUDGET).unwrap();
        let s: Vec<NormalForm> = store.sphere(3).map(|i| store.normal_form(i)).collect();
        for a in s.iter().step_by(7) {
            for b in &s {
                assert_eq!(gromov_product(&p, a, b), gromov_product_by_walls(&p, a, b), "{a} {b}");
            }
        }
        let e = NormalForm::identity();
        let x = p.normalize(&[(0, 1), (2, 1)]).unwrap();
        assert_eq!(gromov_product(&p, &x, &x), 2);
        assert_eq!(gromov_product(&p, &p.normalize(&[(0, 1)]).unwrap(), &p.normalize(&[(2, 1)]).unwrap()), 0);
        assert_eq!(gromov_product(&p, &e, &x), 0);
    }

    #[test]
    fn shadow_balls_are_monotone() {
        let d = preset("dodecahedron").unwrap().presentation;
        let b = ChamberStore::build(d.clone(), 4, DEFAULT_BUDGET).unwrap();
        let a = ChamberStore::build(d.coxeter(), 4, DEFAULT_BUDGET).unwrap();
        let pair = build_level_pair(&b, &a, 3, 1).unwrap();
        let lvl = &pair.building;
        for c in (0..lvl.len()).step_by(97) {
            let mut prev: Vec<usize> = Vec::new();
            for r in 0..=3 {
                let ball = shadow_ball(&d, lvl, c, r);
                assert!(prev.iter().all(|x| ball.contains(x)));
                if r == 0 {
                    assert!(ball.contains(&c));
                }
                prev = ball;
            }
            assert_eq!(prev.len(), lvl.len());
        }
    }

    #[test]
    fn nesting_and_weight_multiplicativity() {
        let b = ChamberStore::build(c5(3), 6, DEFAULT_BUDGET).unwrap();
        let a = ChamberStore::build(c5(2), 6, DEFAULT_BUDGET).unwrap();
        let p = b.presentation();
        let l2 = build_level_pair(&b, &a, 2, 3).unwrap();
        let l3 = build_level_pair(&b, &a, 3, 3).unwrap();
        for child in &l3.building.members {
            let parents: Vec<usize> = (0..l2.building.len())
                .filter(|&i| cone_contains(p, &l2.building.members[i].cone, &child.nf))
                .collect();
            assert!(!parents.is_empty());
            for &i in &parents {
                // The child's cone sits inside the parent's: its base is in it.
                assert!(p.in_cone(&l2.building.members[i].nf, &child.nf));
            }
        }
        for (i, s) in l3.apartment.members.iter().enumerate() {
            let last = s.nf.syllables().last().unwrap().gen as usize;
            let parent = a.presentation().remove_at(&s.nf, s.nf.len() - 1);
            let pi = l2.apartment.member_of_nf(&parent).unwrap();
            assert_eq!(l3.apartment.weights[i], l2.apartment.weights[pi] * (p.order(last) as u64 - 1));
        }
    }
}
