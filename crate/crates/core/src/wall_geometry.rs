//! Building-walls, dials, residues and their gate projections.
//!
//! A wall is named by a pair (gate h, type s): the wall fixed by the
//! rotations h s^α h⁻¹. The chambers along it form the residue hΓ_{st(s)}
//! where st(s) is s together with its link, and the gate is the minimal
//! representative of that coset. Chamber y lies in branch β of the wall where
//! β is the exponent of the leading s-syllable of h⁻¹y (0 if none); the base
//! chamber is always in branch 0.

use crate::group_engine::{ChamberStore, NormalForm, Word};
use crate::presentation::{bit, mask_iter, Mask, Presentation};
use std::collections::BTreeSet;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Wall {
    pub gate: NormalForm,
    pub gen: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dial {
    pub wall: Wall,
    pub branch: u8,
}

/// Cone of chambers based at `base`: the intersection of its dials. The cone
/// of the base chamber has no dials and is everything.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cone {
    pub base: NormalForm,
    pub dials: Vec<Dial>,
}

/// The residue gate·Γ_types; `gate` is the chamber nearest the base.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct Residue {
    pub types: Mask,
    pub gate: NormalForm,
}

#[derive(Clone, Debug)]
pub enum Target {
    Residue(Residue),
    Dial(Dial),
    Cone(Cone),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum WallRelation {
    Equal,
    Orthogonal,
    /// `a`: branch of the first wall containing the second; `b`: branch of
    /// the second containing the first.
    Parallel { a: u8, b: u8 },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Compatibility {
    DisjointChambers,
    SharedChambers,
    SharedWallOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("projection target is empty")]
    EmptyTarget,
    #[error("{needed} is beyond the stored radius {radius}")]
    BudgetExceeded { needed: usize, radius: usize },
}

/// Wall of type s along chamber h.
pub fn wall_at(p: &Presentation, h: &NormalForm, s: usize) -> Wall {
    Wall { gate: p.split_trailing(h, p.star(s)).0, gen: s as u8 }
}

pub fn branch(p: &Presentation, wall: &Wall, y: &NormalForm) -> u8 {
    p.leading_exponent(&p.quotient(&wall.gate, y), wall.gen as usize)
}

pub fn dial_contains(p: &Presentation, d: &Dial, y: &NormalForm) -> bool {
    branch(p, &d.wall, y) == d.branch
}

pub fn residue_of(p: &Presentation, g: &NormalForm, types: Mask) -> Residue {
    Residue { types, gate: p.split_trailing(g, types).0 }
}

pub fn residue_contains(p: &Presentation, r: &Residue, y: &NormalForm) -> bool {
    let z = p.quotient(&r.gate, y);
    z.gens() & !r.types == 0
}

/// One entry per wall crossed by the minimal gallery from a to b, with the
/// branches of a and b.
pub fn walls_separating(p: &Presentation, a: &NormalForm, b: &NormalForm) -> Vec<(Wall, u8, u8)> {
    let d = p.quotient(a, b);
    let mut cur = a.clone();
    let mut out = Vec::with_capacity(d.len());
    for s in d.syllables() {
        let w = wall_at(p, &cur, s.gen as usize);
        let ba = branch(p, &w, a);
        let bb = branch(p, &w, b);
        out.push((w, ba, bb));
        cur = p.mul_syllable(&cur, s.gen as usize, s.exp as i64);
    }
    out
}

pub fn project_residue(p: &Presentation, r: &Residue, x: &NormalForm) -> NormalForm {
    let z = p.quotient(&r.gate, x);
    let (head, _) = p.split_leading(&z, r.types);
    p.mul(&r.gate, &head)
}

pub fn project_dial(p: &Presentation, d: &Dial, x: &NormalForm) -> NormalForm {
    let s = d.wall.gen as usize;
    let z = p.quotient(&d.wall.gate, x);
    if p.leading_exponent(&z, s) == d.branch {
        return x.clone();
    }
    // Gate on the residue of chambers along the wall, then swap its s-part for
    // the requested branch.
    let (head, _) = p.split_leading(&z, p.star(s));
    let rest: Word = head.syllables().iter().copied().filter(|t| t.gen as usize != s).collect();
    let mut out = d.wall.gate.clone();
    if d.branch != 0 {
        out = p.mul_syllable(&out, s, d.branch as i64);
    }
    p.mul(&out, &NormalForm(rest))
}

pub fn project_cone(p: &Presentation, c: &Cone, x: &NormalForm) -> Result<NormalForm, GeometryError> {
    let mut y = x.clone();
    for d in &c.dials {
        y = project_dial(p, d, &y);
    }
    if c.dials.iter().all(|d| dial_contains(p, d, &y)) {
        Ok(y)
    } else {
        Err(GeometryError::EmptyTarget)
    }
}

pub fn project(p: &Presentation, target: &Target, x: &NormalForm) -> Result<NormalForm, GeometryError> {
    match target {
        Target::Residue(r) => Ok(project_residue(p, r, x)),
        Target::Dial(d) => Ok(project_dial(p, d, x)),
        Target::Cone(c) => project_cone(p, c, x),
    }
}

pub fn target_contains(p: &Presentation, target: &Target, y: &NormalForm) -> bool {
    match target {
        Target::Residue(r) => residue_contains(p, r, y),
        Target::Dial(d) => dial_contains(p, d, y),
        Target::Cone(c) => cone_contains(p, c, y),
    }
}

/// One dial per wall along x separating x from the base: these are the walls
/// of the syllables that can be moved to the end of x's normal form.
pub fn cone_of(p: &Presentation, x: &NormalForm) -> Cone {
    let dials = p
        .last_positions(x)
        .into_iter()
        .map(|i| {
            let s = x.syllables()[i];
            let wall = wall_at(p, &p.remove_at(x, i), s.gen as usize);
            let b = branch(p, &wall, x);
            Dial { wall, branch: b }
        })
        .collect();
    Cone { base: x.clone(), dials }
}

pub fn cone_contains(p: &Presentation, c: &Cone, y: &NormalForm) -> bool {
    c.dials.iter().all(|d| dial_contains(p, d, y))
}

/// z ∈ Γ_A Γ_B
fn in_double_coset(p: &Presentation, z: &NormalForm, a: Mask, b: Mask) -> bool {
    let (_, rest) = p.split_leading(z, a);
    rest.gens() & !b == 0
}

pub fn wall_relation(p: &Presentation, m1: &Wall, m2: &Wall) -> WallRelation {
    if m1 == m2 {
        return WallRelation::Equal;
    }
    let (s, t) = (m1.gen as usize, m2.gen as usize);
    if s != t && p.adjacent(s, t) {
        let z = p.quotient(&m1.gate, &m2.gate);
        if in_double_coset(p, &z, p.star(s), p.star(t)) {
            return WallRelation::Orthogonal;
        }
    }
    WallRelation::Parallel { a: branch(p, m1, &m2.gate), b: branch(p, m2, &m1.gate) }
}

/// Pairwise classification of the union of two dial families. A parallel
/// pair with disjoint dials wins over a shared wall with different branches.
pub fn cones_compatible(p: &Presentation, c1: &Cone, c2: &Cone) -> Compatibility {
    let mut shared_wall = false;
    for d1 in &c1.dials {
        for d2 in &c2.dials {
            match wall_relation(p, &d1.wall, &d2.wall) {
                WallRelation::Equal => {
                    if d1.branch != d2.branch {
                        shared_wall = true;
                    }
                }
                WallRelation::Orthogonal => {}
                WallRelation::Parallel { a, b } => {
                    if d1.branch != a && d2.branch != b {
                        return Compatibility::DisjointChambers;
                    }
                }
            }
        }
    }
    if shared_wall {
        Compatibility::SharedWallOnly
    } else {
        Compatibility::SharedChambers
    }
}

/// All residues of the given type whose gate lies in the ball of radius
/// `within`, sorted by gate id.
pub fn residues(
    store: &ChamberStore,
    types: Mask,
    within: usize,
) -> Result<Vec<Residue>, GeometryError> {
    if within > store.depth() {
        return Err(GeometryError::BudgetExceeded { needed: within, radius: store.depth() });
    }
    let p = store.presentation();
    let mut out = Vec::new();
    for id in store.ball(within) {
        let g = store.normal_form(id);
        // Gates are exactly the chambers with no trailing syllable of the type.
        if p.split_trailing(&g, types).1.is_empty() {
            out.push(Residue { types, gate: g });
        }
    }
    Ok(out)
}

/// Residues gΓ_J with Γ_J infinite, J ⊆ `within_types`, gate distance at most
/// `bound`, each with its gate distance. The number of type sets is
/// exponential in |within_types|, so callers restrict it.
pub fn parabolic_limit_sets_of(
    store: &ChamberStore,
    within_types: Mask,
    bound: usize,
) -> Result<Vec<(Residue, usize)>, GeometryError> {
    let p = store.presentation();
    let verts: Vec<usize> = mask_iter(within_types).collect();
    if verts.len() > 20 {
        return Err(GeometryError::BudgetExceeded { needed: verts.len(), radius: 20 });
    }
    let mut out = Vec::new();
    for sub in 1u64..(1u64 << verts.len()) {
        let j: Mask = verts.iter().enumerate().filter(|(i, _)| sub >> i & 1 == 1).map(|(_, &v)| bit(v)).sum();
        if p.is_spherical(j) {
            continue;
        }
        for r in residues(store, j, bound)? {
            let d = r.gate.len();
            out.push((r, d));
        }
    }
    out.sort_by(|a, b| (a.1, a.0.types, &a.0.gate).cmp(&(b.1, b.0.types, &b.0.gate)));
    Ok(out)
}

pub fn parabolic_limit_sets(store: &ChamberStore, bound: usize) -> Result<Vec<(Residue, usize)>, GeometryError> {
    parabolic_limit_sets_of(store, store.presentation().all(), bound)
}

/// Residue r1 contained in residue r2.
pub fn residue_within(p: &Presentation, r1: &Residue, r2: &Residue) -> bool {
    r1.types & !r2.types == 0 && residue_contains(p, r2, &r1.gate)
}

/// Set of walls as a sorted collection, for symmetric comparisons.
pub fn wall_set(list: &[(Wall, u8, u8)]) -> BTreeSet<Wall> {
    list.iter().map(|(w, _, _)| w.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_engine::DEFAULT_BUDGET;
    use crate::presentation::cycle_graph;
    use proptest::prelude::*;

    fn c5q3() -> Presentation {
        Presentation::new(cycle_graph(5, 3)).unwrap()
    }

    fn nf(p: &Presentation, w: &[(usize, i64)]) -> NormalForm {
        p.normalize(w).unwrap()
    }

    #[test]
    fn separating_examples() {
        let p = c5q3();
        let e = NormalForm::identity();
        assert!(walls_separating(&p, &e, &e).is_empty());
        let s = nf(&p, &[(1, 2)]);
        let w = walls_separating(&p, &e, &s);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].0, Wall { gate: e.clone(), gen: 1 });
        assert_eq!((w[0].1, w[0].2), (0, 2));
    }

    #[test]
    fn cone_examples() {
        let p = c5q3();
        let s1 = nf(&p, &[(1, 1)]);
        assert_eq!(cone_of(&p, &s1).dials.len(), 1);
        let s1s3 = nf(&p, &[(1, 1), (3, 1)]);
        assert_eq!(cone_of(&p, &s1s3).dials.len(), 1);
        let s1s2 = nf(&p, &[(1, 1), (2, 1)]);
        assert_eq!(cone_of(&p, &s1s2).dials.len(), 2);
        assert!(cone_of(&p, &NormalForm::identity()).dials.is_empty());
        let d = Dial { wall: Wall { gate: NormalForm::identity(), gen: 1 }, branch: 1 };
        assert_eq!(project_dial(&p, &d, &NormalForm::identity()), s1);
    }

    #[test]
    fn compatibility_examples() {
        let p = c5q3();
        let a = cone_of(&p, &nf(&p, &[(0, 1), (2, 1)]));
        assert_eq!(cones_compatible(&p, &a, &a), Compatibility::SharedChambers);
        let b1 = cone_of(&p, &nf(&p, &[(1, 1)]));
        let b2 = cone_of(&p, &nf(&p, &[(1, 2)]));
        assert_eq!(cones_compatible(&p, &b1, &b2), Compatibility::SharedWallOnly);
        // Cones over s1 s3 and s1² s3: distinct parallel walls of type s3,
        // each cone on the far side of its wall.
        let c1 = cone_of(&p, &nf(&p, &[(1, 1), (3, 1)]));
        let c2 = cone_of(&p, &nf(&p, &[(1, 2), (3, 1)]));
        assert_eq!(cones_compatible(&p, &c1, &c2), Compatibility::DisjointChambers);
        let store = ChamberStore::build(p.clone(), 6, DEFAULT_BUDGET).unwrap();
        for id in store.ball(6) {
            let y = store.normal_form(id);
            assert!(!(cone_contains(&p, &c1, &y) && cone_contains(&p, &c2, &y)));
        }
        let empty = cone_of(&p, &NormalForm::identity());
        assert_eq!(cones_compatible(&p, &empty, &c1), Compatibility::SharedChambers);
    }

    /// Exhaustive gate property for all dials, cones and small residues
    /// against chambers of a small ball, comparing with brute-force distance
    /// minimization over a larger ball.
    #[test]
    fn gate_property_dials_and_cones() {
        let p = c5q3();
        let store = ChamberStore::build(p.clone(), 5, DEFAULT_BUDGET).unwrap();
        let ball5: Vec<NormalForm> = store.ball(5).map(|i| store.normal_form(i)).collect();
        let ball2: Vec<NormalForm> = store.ball(2).map(|i| store.normal_form(i)).collect();
        let mut targets = Vec::new();
        for x in &ball2 {
            if !x.is_empty() {
                let c = cone_of(&p, x);
                for d in &c.dials {
                    for b in 0..3 {
                        targets.push(Target::Dial(Dial { wall: d.wall.clone(), branch: b }));
                    }
                }
                targets.push(Target::Cone(c));
            }
            targets.push(Target::Residue(residue_of(&p, x, bit(0) | bit(2))));
            targets.push(Target::Residue(residue_of(&p, x, bit(1) | bit(2))));
        }
        for t in &targets {
            let members: Vec<&NormalForm> = ball5.iter().filter(|y| target_contains(&p, t, y)).collect();
            for x in ball2.iter().take(40) {
                let g = project(&p, t, x).unwrap();
                assert!(target_contains(&p, t, &g));
                let dg = p.distance(x, &g);
                let best = members.iter().map(|y| p.distance(x, y)).min().unwrap();
                assert_eq!(dg, best, "{t:?} {x}");
                for y in &members {
                    assert_eq!(p.distance(x, y), dg + p.distance(&g, y));
                }
            }
        }
    }

    #[test]
    fn cone_membership_matches_gallery_oracle() {
        let p = c5q3();
        let store = ChamberStore::build(p.clone(), 4, DEFAULT_BUDGET).unwrap();
        let ball: Vec<NormalForm> = store.ball(4).map(|i| store.normal_form(i)).collect();
        for xi in store.sphere(2) {
            let x = store.normal_form(xi);
            let c = cone_of(&p, &x);
            for y in &ball {
                // Oracle: x sits on some minimal gallery from the base to y.
                let on_gallery = p.distance(&NormalForm::identity(), &x) + p.distance(&x, y) == y.len();
                assert_eq!(cone_contains(&p, &c, y), on_gallery);
            }
            assert_eq!(project_cone(&p, &c, &NormalForm::identity()).unwrap(), x);
        }
    }

    #[test]
    fn parabolic_residues() {
        let p = c5q3();
        let store = ChamberStore::build(p.clone(), 3, DEFAULT_BUDGET).unwrap();
        let all = residues(&store, p.all(), 3).unwrap();
        assert_eq!(all.len(), 1);
        let para = parabolic_limit_sets(&store, 2).unwrap();
        assert!(para.iter().all(|(r, _)| r.types != bit(1) | bit(2)));
        // Oracle: dedupe cosets gΓ_I, I = {s1, s3}, with g in ball(2) by
        // explicit membership of each chamber's coset.
        let types = bit(1) | bit(3);
        let got = para.iter().filter(|(r, _)| r.types == types).count();
        let mut reps: Vec<NormalForm> = Vec::new();
        for id in store.ball(2) {
            let g = store.normal_form(id);
            let seen = reps.iter().any(|h| p.quotient(h, &g).gens() & !types == 0);
            if !seen {
                reps.push(g);
            }
        }
        // Every coset meeting ball(2) has its gate in ball(2).
        assert_eq!(got, reps.len());
        assert_eq!(got, 35);
    }

    #[test]
    fn rotation_permutes_branches_and_fixes_orthogonal_dials() {
        let p = c5q3();
        let store = ChamberStore::build(p.clone(), 4, DEFAULT_BUDGET).unwrap();
        let ball: Vec<NormalForm> = store.ball(4).map(|i| store.normal_form(i)).collect();
        for hid in store.ball(1) {
            let h = store.normal_form(hid);
            for s in 0..5 {
                let m = wall_at(&p, &h, s);
                // rotation r = h s h⁻¹
                let r = p.mul(&p.mul_syllable(&m.gate, s, 1), &p.inverse(&m.gate));
                for y in ball.iter().take(300) {
                    let ry = p.mul(&r, y);
                    assert_eq!(branch(&p, &m, &ry), (branch(&p, &m, y) + 1) % 3);
                    for t in 0..5 {
                        if t != s && p.adjacent(s, t) {
                            let m2 = wall_at(&p, &m.gate, t);
                            assert_eq!(wall_relation(&p, &m, &m2), WallRelation::Orthogonal);
                            assert_eq!(branch(&p, &m2, &ry), branch(&p, &m2, y));
                        }
                    }
                }
            }
        }
    }

    /// Predicted disjointness of dial pairs against chamber intersections in
    /// a ball. Walls have gates within distance 1, so every nonempty
    /// intersection shows up well inside ball(6).
    #[test]
    fn dial_intersections_match_wall_relation() {
        let p = c5q3();
        let store = ChamberStore::build(p.clone(), 6, DEFAULT_BUDGET).unwrap();
        let mut walls: Vec<Wall> = Vec::new();
        for id in store.ball(1) {
            let h = store.normal_form(id);
            for s in 0..5 {
                walls.push(wall_at(&p, &h, s));
            }
        }
        walls.sort();
        walls.dedup();
        let ball: Vec<NormalForm> = store.ball(6).map(|i| store.normal_form(i)).collect();
        let branches: Vec<Vec<u8>> =
            walls.iter().map(|w| ball.iter().map(|y| branch(&p, w, y)).collect()).collect();
        for i in 0..walls.len() {
            for j in (i + 1)..walls.len() {
                let rel = wall_relation(&p, &walls[i], &walls[j]);
                for bi in 0..3u8 {
                    for bj in 0..3u8 {
                        let meet = (0..ball.len()).any(|y| branches[i][y] == bi && branches[j][y] == bj);
                        let predicted = match rel {
                            WallRelation::Equal => unreachable!(),
                            WallRelation::Orthogonal => true,
                            WallRelation::Parallel { a, b } => bi == a || bj == b,
                        };
                        assert_eq!(meet, predicted, "{:?} {:?} {rel:?} {bi} {bj}", walls[i], walls[j]);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn separating_count_is_distance(a in proptest::collection::vec((0usize..5, 1i64..3), 0..6),
                                        b in proptest::collection::vec((0usize..5, 1i64..3), 0..6)) {
            let p = c5q3();
            let (a, b) = (nf(&p, &a), nf(&p, &b));
            let ab = walls_separating(&p, &a, &b);
            let ba = walls_separating(&p, &b, &a);
            prop_assert_eq!(ab.len(), p.distance(&a, &b));
            prop_assert_eq!(wall_set(&ab), wall_set(&ba));
            prop_assert_eq!(wall_set(&ab).len(), ab.len());
            for (w, ba_, bb_) in &ab {
                prop_assert_ne!(ba_, bb_);
                prop_assert_eq!(*ba_, branch(&p, w, &a));
            }
        }

        #[test]
        fn residues_are_convex(g in proptest::collection::vec((0usize..5, 1i64..3), 0..4),
                               u in proptest::collection::vec((0usize..2, 1i64..3), 0..4),
                               v in proptest::collection::vec((0usize..2, 1i64..3), 0..4)) {
            let p = c5q3();
            let types = bit(1) | bit(3);
            let gens = [1usize, 3];
            let g = nf(&p, &g);
            let r = residue_of(&p, &g, types);
            let lift = |w: &Vec<(usize, i64)>| nf(&p, &w.iter().map(|&(i, e)| (gens[i], e)).collect::<Vec<_>>());
            let x = p.mul(&g, &lift(&u));
            let y = p.mul(&g, &lift(&v));
            for c in p.minimal_gallery(&x, &y) {
                prop_assert!(residue_contains(&p, &r, &c));
            }
        }
    }
}
