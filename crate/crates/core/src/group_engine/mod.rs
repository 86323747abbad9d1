//! Normal forms for graph-product elements and the chamber store built on
//! them.
//!
//! An element is a reduced syllable word in lexicographic trace normal form:
//! among all words reachable by swapping adjacent commuting syllables, the one
//! whose generator sequence is lexicographically least. Its syllable count is
//! the gallery distance to the base chamber.

mod cache;
mod store;

pub use cache::{cache_root, load_store, save_store, CacheError, CACHE_ENV};
pub use store::{BudgetExceeded, ChamberId, ChamberStore, DEFAULT_BUDGET};

use crate::presentation::{bit, Mask, Presentation};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Syllable {
    pub gen: u8,
    pub exp: u8,
}

impl Syllable {
    pub fn new(gen: usize, exp: u8) -> Self {
        Syllable { gen: gen as u8, exp }
    }
}

pub type Word = SmallVec<[Syllable; 24]>;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormalForm(pub Word);

impl NormalForm {
    pub fn identity() -> Self {
        NormalForm(Word::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn syllables(&self) -> &[Syllable] {
        &self.0
    }

    pub fn gens(&self) -> Mask {
        self.0.iter().fold(0, |m, s| m | bit(s.gen as usize))
    }

    pub fn in_apartment(&self) -> bool {
        self.0.iter().all(|s| s.exp == 1)
    }
}

impl fmt::Display for NormalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self.0.iter().map(|s| format!("s{}^{}", s.gen, s.exp)).collect();
        write!(f, "{}", parts.join("."))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroupError {
    #[error("generator {0} out of range")]
    InvalidGenerator(usize),
}

impl Presentation {
    #[inline]
    fn commute(&self, a: u8, b: u8) -> bool {
        self.adjacent(a as usize, b as usize)
    }

    /// Appends one syllable to a reduced word, merging with the last syllable
    /// of the same generator reachable through commuting syllables. Keeps the
    /// word reduced; does not restore lexicographic order.
    fn push_reduced(&self, w: &mut Word, gen: u8, exp: i64) {
        let q = self.order(gen as usize) as i64;
        let e = exp.rem_euclid(q) as u8;
        if e == 0 {
            return;
        }
        for i in (0..w.len()).rev() {
            let s = w[i];
            if s.gen == gen {
                let merged = ((s.exp as i64 + e as i64) % q) as u8;
                if merged == 0 {
                    w.remove(i);
                } else {
                    w[i].exp = merged;
                }
                return;
            }
            if !self.commute(s.gen, gen) {
                break;
            }
        }
        w.push(Syllable { gen, exp: e });
    }

    /// Lexicographic normal form of a reduced word: repeatedly emit the
    /// smallest generator among syllables that commute with everything still
    /// pending before them.
    fn canonicalize(&self, w: Word) -> NormalForm {
        let n = w.len();
        if n <= 1 {
            return NormalForm(w);
        }
        let mut done = vec![false; n];
        let mut out = Word::with_capacity(n);
        for _ in 0..n {
            let mut best: Option<usize> = None;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                if let Some(b) = best {
                    if w[i].gen >= w[b].gen {
                        continue;
                    }
                }
                let free = (0..i).all(|j| done[j] || self.commute(w[j].gen, w[i].gen));
                if free {
                    best = Some(i);
                }
            }
            let b = best.expect("a reduced word always has a minimal syllable");
            done[b] = true;
            out.push(w[b]);
        }
        NormalForm(out)
    }

    pub fn normalize(&self, word: &[(usize, i64)]) -> Result<NormalForm, GroupError> {
        let mut w = Word::new();
        for &(g, e) in word {
            if g >= self.n() {
                return Err(GroupError::InvalidGenerator(g));
            }
            self.push_reduced(&mut w, g as u8, e);
        }
        Ok(self.canonicalize(w))
    }

    pub fn mul(&self, a: &NormalForm, b: &NormalForm) -> NormalForm {
        let mut w = a.0.clone();
        for s in b.0.iter() {
            self.push_reduced(&mut w, s.gen, s.exp as i64);
        }
        self.canonicalize(w)
    }

    pub fn mul_syllable(&self, a: &NormalForm, gen: usize, exp: i64) -> NormalForm {
        let mut w = a.0.clone();
        self.push_reduced(&mut w, gen as u8, exp);
        self.canonicalize(w)
    }

    pub fn inverse(&self, a: &NormalForm) -> NormalForm {
        let w: Word = a
            .0
            .iter()
            .rev()
            .map(|s| Syllable { gen: s.gen, exp: self.order(s.gen as usize) - s.exp })
            .collect();
        self.canonicalize(w)
    }

    /// a⁻¹b
    pub fn quotient(&self, a: &NormalForm, b: &NormalForm) -> NormalForm {
        self.mul(&self.inverse(a), b)
    }

    pub fn distance(&self, a: &NormalForm, b: &NormalForm) -> usize {
        self.quotient(a, b).len()
    }

    /// Positions of syllables that can be moved to the end of the word.
    pub fn last_positions(&self, a: &NormalForm) -> SmallVec<[usize; 8]> {
        let w = &a.0;
        let mut out = SmallVec::new();
        for i in (0..w.len()).rev() {
            if ((i + 1)..w.len()).all(|j| self.commute(w[i].gen, w[j].gen)) {
                out.push(i);
            }
        }
        out.reverse();
        out
    }

    /// Positions of syllables that can be moved to the front of the word.
    pub fn first_positions(&self, a: &NormalForm) -> SmallVec<[usize; 8]> {
        let w = &a.0;
        let mut out = SmallVec::new();
        for i in 0..w.len() {
            if (0..i).all(|j| self.commute(w[i].gen, w[j].gen)) {
                out.push(i);
            }
        }
        out
    }

    /// The word with syllable `i` deleted. Meaningful when `i` is a first or
    /// last position, where the result is a prefix or suffix.
    pub fn remove_at(&self, a: &NormalForm, i: usize) -> NormalForm {
        let mut w = a.0.clone();
        w.remove(i);
        self.canonicalize(w)
    }

    /// Exponent of the syllable of `gen` that can be moved to the front, or 0.
    pub fn leading_exponent(&self, a: &NormalForm, gen: usize) -> u8 {
        for s in a.0.iter() {
            if s.gen as usize == gen {
                return s.exp;
            }
            if !self.adjacent(s.gen as usize, gen) {
                return 0;
            }
        }
        0
    }

    /// Splits `a` as (I-part, rest) where the I-part is the largest prefix
    /// lying in the parabolic subgroup Γ_I.
    pub fn split_leading(&self, a: &NormalForm, types: Mask) -> (NormalForm, NormalForm) {
        let mut head = Word::new();
        let mut tail = Word::new();
        let mut blocked: Mask = 0;
        for &s in a.0.iter() {
            let g = s.gen as usize;
            // A syllable joins the head if its type is in I and it commutes with
            // every syllable already left behind.
            if types & bit(g) != 0 && blocked & !self.adj(g) == 0 {
                head.push(s);
            } else {
                blocked |= bit(g);
                tail.push(s);
            }
        }
        (self.canonicalize(head), self.canonicalize(tail))
    }

    /// Splits `a` as (rest, I-part) where the I-part is the largest suffix
    /// lying in Γ_I. The rest is the minimal representative of aΓ_I.
    pub fn split_trailing(&self, a: &NormalForm, types: Mask) -> (NormalForm, NormalForm) {
        let mut head = Word::new();
        let mut tail = Word::new();
        let mut blocked: Mask = 0;
        for &s in a.0.iter().rev() {
            let g = s.gen as usize;
            if types & bit(g) != 0 && blocked & !self.adj(g) == 0 {
                tail.push(s);
            } else {
                blocked |= bit(g);
                head.push(s);
            }
        }
        head.reverse();
        tail.reverse();
        (self.canonicalize(head), self.canonicalize(tail))
    }

    /// Longest common prefix in the prefix order: the largest c with
    /// |c| + |c⁻¹a| = |a| and likewise for b.
    pub fn meet(&self, a: &NormalForm, b: &NormalForm) -> NormalForm {
        let mut ra = a.0.clone();
        let mut rb = b.0.clone();
        let mut common = Word::new();
        loop {
            let mut found = None;
            'outer: for i in 0..ra.len() {
                if !(0..i).all(|j| self.commute(ra[i].gen, ra[j].gen)) {
                    continue;
                }
                for k in 0..rb.len() {
                    if rb[k] == ra[i] && (0..k).all(|j| self.commute(rb[k].gen, rb[j].gen)) {
                        found = Some((i, k));
                        break 'outer;
                    }
                }
            }
            match found {
                Some((i, k)) => {
                    common.push(ra.remove(i));
                    rb.remove(k);
                }
                None => break,
            }
        }
        self.canonicalize(common)
    }

    /// Retraction onto the apartment: every exponent becomes 1.
    pub fn retract(&self, a: &NormalForm) -> NormalForm {
        NormalForm(a.0.iter().map(|s| Syllable { gen: s.gen, exp: 1 }).collect())
    }

    /// Chambers of a minimal gallery from a to b, read off the normal form of
    /// a⁻¹b left to right.
    pub fn minimal_gallery(&self, a: &NormalForm, b: &NormalForm) -> Vec<NormalForm> {
        let d = self.quotient(a, b);
        let mut out = Vec::with_capacity(d.len() + 1);
        let mut cur = a.clone();
        out.push(cur.clone());
        for s in d.0.iter() {
            cur = self.mul_syllable(&cur, s.gen as usize, s.exp as i64);
            out.push(cur.clone());
        }
        out
    }

    /// Whether y lies in the cone of x: some minimal gallery from the base to y
    /// passes through x.
    pub fn in_cone(&self, x: &NormalForm, y: &NormalForm) -> bool {
        y.len() >= x.len() && self.distance(x, y) == y.len() - x.len()
    }

    /// All prefixes of `a` of the given length, sorted.
    pub fn prefixes_at(&self, a: &NormalForm, depth: usize) -> Vec<NormalForm> {
        let mut cur = vec![a.clone()];
        for _ in depth..a.len() {
            let mut next = Vec::new();
            for w in &cur {
                for i in self.last_positions(w) {
                    next.push(self.remove_at(w, i));
                }
            }
            next.sort_unstable();
            next.dedup();
            cur = next;
        }
        cur
    }

    /// Word w·t is a canonical child of w: appending t keeps the word reduced
    /// and lexicographically normal.
    pub fn is_canonical_extension(&self, w: &NormalForm, gen: usize) -> bool {
        for s in w.0.iter().rev() {
            let g = s.gen as usize;
            if g == gen {
                return false;
            }
            if !self.adjacent(g, gen) {
                return true;
            }
            if g > gen {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presentation::{cycle_graph, DefiningGraph};
    use proptest::prelude::*;
    use std::collections::{BTreeSet, HashMap, VecDeque};

    pub(crate) fn c5(q: u32) -> Presentation {
        Presentation::new(cycle_graph(5, q)).unwrap()
    }

    fn nf(p: &Presentation, w: &[(usize, i64)]) -> NormalForm {
        p.normalize(w).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let p = c5(3);
        assert!(nf(&p, &[]).is_empty());
        assert_eq!(nf(&p, &[(2, 1), (1, 1)]).0.as_slice(), &[Syllable::new(1, 1), Syllable::new(2, 1)]);
        assert_eq!(nf(&p, &[(1, 2), (1, 2)]).0.as_slice(), &[Syllable::new(1, 1)]);
        assert!(p.normalize(&[(7, 1)]).is_err());
        // s0 s2 s0: s0 and s2 do not commute in C5, so nothing merges.
        assert_eq!(nf(&p, &[(0, 1), (2, 1), (0, 1)]).len(), 3);
        // s0 s1 s0^-1 with s0 ~ s1 collapses to s1.
        assert_eq!(nf(&p, &[(0, 1), (1, 1), (0, -1)]), nf(&p, &[(1, 1)]));
    }

    #[test]
    fn inverse_and_fold() {
        let p = c5(3);
        let g = nf(&p, &[(0, 1), (2, 2), (3, 1), (1, 1)]);
        assert!(p.mul(&g, &p.inverse(&g)).is_empty());
        let s = nf(&p, &[(1, 1)]);
        assert_eq!(p.mul(&s, &s), nf(&p, &[(1, 2)]));
    }

    /// Brute-force word-problem oracle: breadth-first search over the Cayley
    /// graph of reduced words, computing distances by rewriting with the
    /// defining relations only (no normal forms involved).
    fn rewriting_oracle(p: &Presentation, w: &[(usize, i64)]) -> BTreeSet<Vec<(u8, u8)>> {
        // All words equivalent to w of minimal syllable length, found by
        // exhaustive application of commutation swaps and merges.
        let mut start: Vec<(u8, u8)> = Vec::new();
        for &(g, e) in w {
            let e = e.rem_euclid(p.order(g) as i64) as u8;
            if e != 0 {
                start.push((g as u8, e));
            }
        }
        let mut seen: BTreeSet<Vec<(u8, u8)>> = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        seen.insert(start);
        while let Some(cur) = queue.pop_front() {
            for i in 0..cur.len().saturating_sub(1) {
                let (a, b) = (cur[i], cur[i + 1]);
                let mut next = cur.clone();
                if a.0 == b.0 {
                    let e = (a.1 + b.1) % p.order(a.0 as usize);
                    next.remove(i + 1);
                    if e == 0 {
                        next.remove(i);
                    } else {
                        next[i].1 = e;
                    }
                } else if p.adjacent(a.0 as usize, b.0 as usize) {
                    next.swap(i, i + 1);
                } else {
                    continue;
                }
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        let min = seen.iter().map(|v| v.len()).min().unwrap();
        seen.into_iter().filter(|v| v.len() == min).collect()
    }

    #[test]
    fn normal_form_matches_rewriting_oracle() {
        let p = c5(3);
        let words: Vec<Vec<(usize, i64)>> = vec![
            vec![(1, 2), (1, 2)],
            vec![(2, 1), (1, 1)],
            vec![(0, 1), (1, 1), (0, 2), (4, 1)],
            vec![(3, 1), (2, 1), (4, 1), (3, 2), (2, 2)],
            vec![(0, 1), (2, 1), (1, 1), (0, 1), (2, 2)],
        ];
        for w in words {
            let min_words = rewriting_oracle(&p, &w);
            let expect = min_words.iter().next().unwrap().clone();
            let got: Vec<(u8, u8)> = nf(&p, &w).0.iter().map(|s| (s.gen, s.exp)).collect();
            assert_eq!(got, expect, "{w:?}");
        }
    }

    /// Coefficients of the growth series Σ |S_k| t^k from the clique formula
    /// 1/W(t) = Σ_σ Π_{v∈σ} (−(q_v−1)t / (1+(q_v−1)t)), by power-series
    /// arithmetic on integers.
    pub(crate) fn growth_series(p: &Presentation, terms: usize) -> Vec<i128> {
        let mul = |a: &[i128], b: &[i128]| -> Vec<i128> {
            let mut c = vec![0i128; terms];
            for i in 0..terms {
                for j in 0..(terms - i) {
                    c[i + j] += a[i] * b[j];
                }
            }
            c
        };
        let mut inv = vec![0i128; terms];
        for sigma in p.nerve().simplices {
            let mut term = vec![0i128; terms];
            term[0] = 1;
            for v in crate::presentation::mask_iter(sigma) {
                let r = p.order(v) as i128 - 1;
                // −r t / (1 + r t) = Σ_{j≥1} (−r)^j t^j
                let mut f = vec![0i128; terms];
                let mut c = 1i128;
                for slot in f.iter_mut().skip(1) {
                    c *= -r;
                    *slot = c;
                }
                term = mul(&term, &f);
            }
            for i in 0..terms {
                inv[i] += term[i];
            }
        }
        // Invert the series; inv[0] = 1.
        let mut out = vec![0i128; terms];
        out[0] = 1;
        for k in 1..terms {
            let s: i128 = (1..=k).map(|j| inv[j] * out[k - j]).sum();
            out[k] = -s;
        }
        out
    }

    #[test]
    fn growth_series_oracle_values() {
        // Frozen from the clique formula above.
        assert_eq!(growth_series(&c5(2), 8), vec![1, 5, 15, 40, 105, 275, 720, 1885]);
        assert_eq!(growth_series(&c5(3), 6), vec![1, 10, 60, 320, 1680, 8800]);
        let dodeca = crate::presentation::preset("dodecahedron").unwrap().presentation;
        assert_eq!(growth_series(&dodeca, 5), vec![1, 24, 408, 6496, 102432]);
        assert_eq!(growth_series(&dodeca.coxeter(), 5), vec![1, 12, 102, 812, 6402]);
    }

    /// Independent BFS over the Cayley graph using normalize only as a
    /// canonical hash key.
    #[test]
    fn sphere_sizes_by_naive_bfs() {
        let p = c5(2);
        let mut dist: HashMap<NormalForm, usize> = HashMap::new();
        let mut queue = VecDeque::from([NormalForm::identity()]);
        dist.insert(NormalForm::identity(), 0);
        while let Some(x) = queue.pop_front() {
            let d = dist[&x];
            if d == 4 {
                continue;
            }
            for g in 0..5 {
                let y = p.mul_syllable(&x, g, 1);
                dist.entry(y.clone()).or_insert_with(|| {
                    queue.push_back(y.clone());
                    d + 1
                });
            }
        }
        let mut counts = vec![0; 5];
        for (x, d) in &dist {
            assert_eq!(x.len(), *d);
            counts[*d] += 1;
        }
        assert_eq!(counts, vec![1, 5, 15, 40, 105]);
    }

    #[test]
    fn meet_and_prefixes() {
        let p = c5(3);
        let a = nf(&p, &[(0, 1), (1, 1), (3, 1)]);
        let b = nf(&p, &[(1, 1), (0, 1), (3, 2)]);
        assert_eq!(p.meet(&a, &b), nf(&p, &[(0, 1), (1, 1)]));
        let pre = p.prefixes_at(&nf(&p, &[(0, 1), (1, 1)]), 1);
        assert_eq!(pre, vec![nf(&p, &[(0, 1)]), nf(&p, &[(1, 1)])]);
        assert!(p.in_cone(&nf(&p, &[(1, 1)]), &a));
        assert!(!p.in_cone(&nf(&p, &[(1, 2)]), &a));
    }

    #[test]
    fn minimal_gallery_examples() {
        let p = c5(3);
        let e = NormalForm::identity();
        assert_eq!(p.minimal_gallery(&e, &e), vec![e.clone()]);
        let s12 = nf(&p, &[(1, 1), (2, 1)]);
        assert_eq!(
            p.minimal_gallery(&e, &s12),
            vec![e.clone(), nf(&p, &[(1, 1)]), s12.clone()]
        );
    }

    #[test]
    fn retraction_examples() {
        let p = c5(3);
        assert!(p.retract(&NormalForm::identity()).is_empty());
        assert_eq!(p.retract(&nf(&p, &[(1, 2)])), nf(&p, &[(1, 1)]));
    }

    fn word_strategy(n: usize, max_len: usize) -> impl Strategy<Value = Vec<(usize, i64)>> {
        proptest::collection::vec((0..n, -4i64..5), 0..max_len)
    }

    fn random_pres() -> impl Strategy<Value = Presentation> {
        (5usize..8, proptest::collection::vec(any::<bool>(), 28), proptest::collection::vec(2u32..5, 8))
            .prop_filter_map("valid", |(n, bits, qs)| {
                let mut edges = Vec::new();
                let mut idx = 0;
                for a in 0..n {
                    for b in (a + 1)..n {
                        if bits[idx] {
                            edges.push([a, b]);
                        }
                        idx += 1;
                    }
                }
                Presentation::new(DefiningGraph { n, edges, orders: qs[..n].to_vec() }).ok()
            })
    }

    proptest! {
        #[test]
        fn associativity(a in word_strategy(5, 10), b in word_strategy(5, 10), c in word_strategy(5, 10)) {
            let p = c5(3);
            let (a, b, c) = (nf(&p, &a), nf(&p, &b), nf(&p, &c));
            prop_assert_eq!(p.mul(&p.mul(&a, &b), &c), p.mul(&a, &p.mul(&b, &c)));
        }

        #[test]
        fn confluence_under_commuting_shuffles(p in random_pres(), w in word_strategy(5, 14), swaps in proptest::collection::vec(0usize..20, 0..30)) {
            let mut w: Vec<(usize, i64)> = w.into_iter().map(|(g, e)| (g % p.n(), e)).collect();
            let base = nf(&p, &w);
            for s in swaps {
                if w.len() < 2 { break }
                let i = s % (w.len() - 1);
                if p.adjacent(w[i].0, w[i + 1].0) {
                    w.swap(i, i + 1);
                }
            }
            prop_assert_eq!(nf(&p, &w), base);
        }

        #[test]
        fn normal_form_is_oracle_minimum(p in random_pres(), w in word_strategy(5, 7)) {
            let w: Vec<(usize, i64)> = w.into_iter().map(|(g, e)| (g % p.n(), e)).collect();
            let expect = rewriting_oracle(&p, &w).into_iter().next().unwrap();
            let got: Vec<(u8, u8)> = nf(&p, &w).0.iter().map(|s| (s.gen, s.exp)).collect();
            prop_assert_eq!(got, expect);
        }

        #[test]
        fn metric_axioms(a in word_strategy(5, 8), b in word_strategy(5, 8), c in word_strategy(5, 8)) {
            let p = c5(3);
            let (a, b, c) = (nf(&p, &a), nf(&p, &b), nf(&p, &c));
            prop_assert_eq!(p.distance(&a, &b), p.distance(&b, &a));
            prop_assert!(p.distance(&a, &c) <= p.distance(&a, &b) + p.distance(&b, &c));
        }

        #[test]
        fn retraction_is_lipschitz(a in word_strategy(5, 8), b in word_strategy(5, 8)) {
            let p = c5(3);
            let w = p.coxeter();
            let (a, b) = (nf(&p, &a), nf(&p, &b));
            let (ra, rb) = (w.retract(&a), w.retract(&b));
            prop_assert!(w.distance(&ra, &rb) <= p.distance(&a, &b));
            prop_assert_eq!(ra.len(), a.len());
            // Isometric on the apartment.
            let (ea, eb) = (p.retract(&a), p.retract(&b));
            prop_assert_eq!(p.distance(&ea, &eb), w.distance(&ea, &eb));
        }

        #[test]
        fn gallery_steps_are_adjacent(a in word_strategy(5, 8), b in word_strategy(5, 8)) {
            let p = c5(3);
            let (a, b) = (nf(&p, &a), nf(&p, &b));
            let g = p.minimal_gallery(&a, &b);
            prop_assert_eq!(g.len(), p.distance(&a, &b) + 1);
            for pair in g.windows(2) {
                prop_assert_eq!(p.distance(&pair[0], &pair[1]), 1);
            }
            prop_assert_eq!(g.last().unwrap(), &b);
        }
    }
}
