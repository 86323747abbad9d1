use super::{NormalForm, Syllable, Word};
use crate::presentation::{bit, mask_iter, Mask, Presentation};
use rayon::prelude::*;
use std::ops::Range;

pub type ChamberId = u32;

pub const DEFAULT_BUDGET: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ball of radius {requested} needs {needed} chambers, budget is {budget}; reachable radius is {reachable}")]
pub struct BudgetExceeded {
    pub requested: usize,
    pub reachable: usize,
    pub needed: usize,
    pub budget: usize,
}

/// Ball of chambers around the base chamber, stored as the tree of
/// lexicographic normal forms. Each chamber's normal form is its parent's
/// followed by one syllable, ids are assigned level by level, and children of
/// a chamber occupy a contiguous id range sorted by syllable. Levels are
/// immutable once sealed.
#[derive(Clone, Debug)]
pub struct ChamberStore {
    pres: Presentation,
    parent: Vec<ChamberId>,
    syllable: Vec<Syllable>,
    /// child range of chamber c is child_start[c]..child_start[c + 1]; the
    /// last sealed level has empty ranges.
    child_start: Vec<ChamberId>,
    level_start: Vec<ChamberId>,
    /// Generators that may extend each chamber of the outermost level.
    frontier_allowed: Vec<Mask>,
}

impl ChamberStore {
    pub fn new(pres: Presentation) -> Self {
        ChamberStore {
            parent: vec![0],
            syllable: vec![Syllable { gen: 0, exp: 0 }],
            child_start: vec![1, 1],
            level_start: vec![0, 1],
            frontier_allowed: vec![pres.all()],
            pres,
        }
    }

    /// Ball of the given radius, or an error naming the largest radius that
    /// fits the budget.
    pub fn build(pres: Presentation, depth: usize, budget: usize) -> Result<Self, BudgetExceeded> {
        let mut s = ChamberStore::new(pres);
        s.extend_to(depth, budget)?;
        Ok(s)
    }

    /// Largest ball that fits the budget, up to `depth`.
    pub fn build_within(pres: Presentation, depth: usize, budget: usize) -> Self {
        let mut s = ChamberStore::new(pres);
        let _ = s.extend_to(depth, budget);
        s
    }

    pub(super) fn from_parts(
        pres: Presentation,
        parent: Vec<ChamberId>,
        syllable: Vec<Syllable>,
    ) -> Option<Self> {
        let n = parent.len();
        if n == 0 || syllable.len() != n || parent[0] != 0 {
            return None;
        }
        let mut level_start = vec![0u32];
        let mut child_start = vec![0u32; n + 1];
        let mut depth = vec![0u32; n];
        for c in 1..n {
            let p = parent[c] as usize;
            if p >= c || (c > 1 && parent[c - 1] > parent[c]) {
                return None;
            }
            depth[c] = depth[p] + 1;
            if depth[c] as usize >= level_start.len() {
                level_start.push(c as u32);
            }
            if depth[c] as usize + 1 != level_start.len() {
                return None;
            }
        }
        level_start.push(n as u32);
        let mut cursor = 1usize;
        for c in 0..n {
            child_start[c] = cursor as u32;
            while cursor < n && parent[cursor] as usize == c {
                cursor += 1;
            }
        }
        child_start[n] = n as u32;
        // Chambers of the last level have no children.
        let last = *level_start.iter().rev().nth(1).unwrap() as usize;
        for slot in child_start.iter_mut().take(n).skip(last) {
            *slot = n as u32;
        }
        let mut s = ChamberStore {
            pres,
            parent,
            syllable,
            child_start,
            level_start,
            frontier_allowed: Vec::new(),
        };
        // Recompute the extension masks along the tree.
        let mut allowed = vec![s.pres.all()];
        for d in 1..s.depth() + 1 {
            let r = s.sphere(d);
            let prev = s.sphere(d - 1).start;
            let next: Vec<Mask> = r
                .map(|c| {
                    let p = s.parent[c as usize];
                    s.child_mask(s.syllable[c as usize].gen as usize, allowed[(p - prev) as usize])
                })
                .collect();
            allowed = next;
        }
        s.frontier_allowed = allowed;
        Some(s)
    }

    pub fn presentation(&self) -> &Presentation {
        &self.pres
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Radius of the stored ball.
    pub fn depth(&self) -> usize {
        self.level_start.len() - 2
    }

    pub fn sphere(&self, k: usize) -> Range<ChamberId> {
        assert!(k <= self.depth(), "sphere {k} beyond stored radius {}", self.depth());
        self.level_start[k]..self.level_start[k + 1]
    }

    pub fn ball(&self, k: usize) -> Range<ChamberId> {
        0..self.level_start[k + 1]
    }

    pub fn depth_of(&self, id: ChamberId) -> usize {
        self.level_start.partition_point(|&s| s <= id) - 1
    }

    pub fn parent(&self, id: ChamberId) -> ChamberId {
        self.parent[id as usize]
    }

    pub fn last_syllable(&self, id: ChamberId) -> Syllable {
        self.syllable[id as usize]
    }

    pub fn children(&self, id: ChamberId) -> Range<ChamberId> {
        self.child_start[id as usize]..self.child_start[id as usize + 1]
    }

    pub(super) fn raw(&self) -> (&[ChamberId], &[Syllable]) {
        (&self.parent, &self.syllable)
    }

    pub fn normal_form(&self, id: ChamberId) -> NormalForm {
        let mut w = Word::new();
        let mut c = id;
        while c != 0 {
            w.push(self.syllable[c as usize]);
            c = self.parent[c as usize];
        }
        w.reverse();
        NormalForm(w)
    }

    pub fn lookup(&self, nf: &NormalForm) -> Option<ChamberId> {
        let mut c: ChamberId = 0;
        for s in nf.0.iter() {
            let r = self.children(c);
            let kids = &self.syllable[r.start as usize..r.end as usize];
            let i = kids.binary_search(s).ok()?;
            c = r.start + i as ChamberId;
        }
        Some(c)
    }

    pub fn multiply(&self, a: ChamberId, b: &NormalForm) -> Option<ChamberId> {
        self.lookup(&self.pres.mul(&self.normal_form(a), b))
    }

    pub fn minimal_gallery(&self, a: ChamberId, b: ChamberId) -> Option<Vec<ChamberId>> {
        self.pres
            .minimal_gallery(&self.normal_form(a), &self.normal_form(b))
            .iter()
            .map(|x| self.lookup(x))
            .collect()
    }

    pub fn distance(&self, a: ChamberId, b: ChamberId) -> usize {
        self.pres.distance(&self.normal_form(a), &self.normal_form(b))
    }

    /// Generators that may follow a last syllable of type h, given those
    /// allowed after the parent.
    #[inline]
    fn child_mask(&self, h: usize, parent_allowed: Mask) -> Mask {
        let all = self.pres.all();
        let above = all & Mask::MAX.checked_shl(h as u32 + 1).unwrap_or(0);
        (all & !self.pres.adj(h) & !bit(h)) | (self.pres.adj(h) & above & parent_allowed)
    }

    fn next_level_size(&self) -> usize {
        self.frontier_allowed
            .iter()
            .map(|&m| mask_iter(m).map(|g| self.pres.order(g) as usize - 1).sum::<usize>())
            .sum()
    }

    /// Grows the ball level by level; stops before a level that would exceed
    /// the budget. Levels already built are kept on error.
    pub fn extend_to(&mut self, depth: usize, budget: usize) -> Result<(), BudgetExceeded> {
        while self.depth() < depth {
            let needed = self.len() + self.next_level_size();
            if needed > budget {
                return Err(BudgetExceeded {
                    requested: depth,
                    reachable: self.depth(),
                    needed,
                    budget,
                });
            }
            self.grow_one();
        }
        Ok(())
    }

    fn grow_one(&mut self) {
        let frontier = self.sphere(self.depth());
        let base = frontier.start;
        const CHUNK: usize = 4096;
        let ids: Vec<ChamberId> = frontier.clone().collect();
        // Children per parent in syllable order; chunks are merged in order, so
        // ids do not depend on scheduling.
        let parts: Vec<(Vec<ChamberId>, Vec<Syllable>, Vec<Mask>)> = ids
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut par = Vec::new();
                let mut syl = Vec::new();
                let mut masks = Vec::new();
                for &c in chunk {
                    let allowed = self.frontier_allowed[(c - base) as usize];
                    for g in mask_iter(allowed) {
                        let m = self.child_mask(g, allowed);
                        for e in 1..self.pres.order(g) {
                            par.push(c);
                            syl.push(Syllable { gen: g as u8, exp: e });
                            masks.push(m);
                        }
                    }
                }
                (par, syl, masks)
            })
            .collect();
        let start = self.len() as ChamberId;
        let mut new_allowed = Vec::new();
        for (par, syl, masks) in parts {
            self.parent.extend(par);
            self.syllable.extend(syl);
            new_allowed.extend(masks);
        }
        let end = self.len() as ChamberId;
        // Fix child ranges of the former frontier.
        self.child_start.truncate(base as usize);
        let mut cursor = start as usize;
        for c in frontier {
            self.child_start.push(cursor as ChamberId);
            while cursor < end as usize && self.parent[cursor] == c {
                cursor += 1;
            }
        }
        self.child_start.resize(end as usize + 1, end);
        self.level_start.push(end);
        self.frontier_allowed = new_allowed;
    }
}
