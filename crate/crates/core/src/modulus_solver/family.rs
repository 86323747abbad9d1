//! Path families on an overlap graph and the shortest-path separation oracle.
//!
//! A path is a simple vertex sequence following graph edges; its ρ-length
//! counts every vertex, endpoints included. Dijkstra runs over vertex
//! weights with ties broken by vertex id, so the constraints generated for a
//! given ρ are deterministic.

use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

#[derive(Clone, Debug, PartialEq)]
pub enum PathFamily {
    /// Paths with one endpoint in `from` and the other in `to`, every vertex
    /// allowed.
    Connecting { from: Vec<u32>, to: Vec<u32>, allowed: Option<Vec<bool>> },
    /// Paths whose endpoints have disjoint class sets. A vertex with an empty
    /// class set is far from every other vertex.
    FarPairs { classes: Vec<Vec<u32>>, allowed: Option<Vec<bool>> },
    Union(Vec<PathFamily>),
}

fn permitted(allowed: &Option<Vec<bool>>, v: u32) -> bool {
    allowed.as_ref().map_or(true, |a| a[v as usize])
}

fn disjoint(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => return false,
        }
    }
    true
}

impl PathFamily {
    /// Class sets are sorted in place so that far tests are merges.
    pub fn far_pairs(mut classes: Vec<Vec<u32>>, allowed: Option<Vec<bool>>) -> Self {
        for c in &mut classes {
            c.sort_unstable();
            c.dedup();
        }
        PathFamily::FarPairs { classes, allowed }
    }

    pub fn is_far(classes: &[Vec<u32>], a: u32, b: u32) -> bool {
        a != b && disjoint(&classes[a as usize], &classes[b as usize])
    }

    /// Whether the endpoints and vertex set of a walk qualify it; graph
    /// structure is not checked.
    pub fn admits(&self, path: &[u32]) -> bool {
        let (Some(&a), Some(&b)) = (path.first(), path.last()) else { return false };
        match self {
            PathFamily::Connecting { from, to, allowed } => {
                path.iter().all(|&v| permitted(allowed, v))
                    && ((from.contains(&a) && to.contains(&b)) || (from.contains(&b) && to.contains(&a)))
            }
            PathFamily::FarPairs { classes, allowed } => {
                path.iter().all(|&v| permitted(allowed, v)) && Self::is_far(classes, a, b)
            }
            PathFamily::Union(fs) => fs.iter().any(|f| f.admits(path)),
        }
    }

    /// Full membership: simple, along edges, and admitted.
    pub fn contains(&self, adj: &[Vec<u32>], path: &[u32]) -> bool {
        let mut seen = std::collections::HashSet::new();
        path.iter().all(|&v| seen.insert(v))
            && path.windows(2).all(|w| adj[w[0] as usize].binary_search(&w[1]).is_ok())
            && self.admits(path)
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    v: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed: BinaryHeap pops the smallest (dist, v).
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.v.cmp(&self.v))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra on vertex weights. Settles targets in order of
/// (distance, id) and returns up to `limit` of them with their paths.
fn dijkstra(
    adj: &[Vec<u32>],
    rho: &[f64],
    allowed: &Option<Vec<bool>>,
    sources: &[u32],
    is_target: impl Fn(u32) -> bool,
    is_source: impl Fn(u32) -> bool,
    limit: usize,
) -> Vec<(f64, Vec<u32>)> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![u32::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if permitted(allowed, s) && rho[s as usize] < dist[s as usize] {
            dist[s as usize] = rho[s as usize];
            heap.push(Entry { dist: rho[s as usize], v: s });
        }
    }
    let mut out = Vec::new();
    while let Some(Entry { dist: d, v }) = heap.pop() {
        if done[v as usize] {
            continue;
        }
        done[v as usize] = true;
        // A source is a target only when reached from another source.
        if is_target(v) && !(pred[v as usize] == u32::MAX && is_source(v)) {
            let mut path = vec![v];
            let mut u = v;
            while pred[u as usize] != u32::MAX {
                u = pred[u as usize];
                path.push(u);
            }
            path.reverse();
            out.push((d, path));
            if out.len() >= limit {
                break;
            }
        }
        for &u in &adj[v as usize] {
            if done[u as usize] || !permitted(allowed, u) {
                continue;
            }
            let nd = d + rho[u as usize];
            if nd < dist[u as usize] {
                dist[u as usize] = nd;
                pred[u as usize] = v;
                heap.push(Entry { dist: nd, v: u });
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct Separation {
    /// Minimal ρ-length over the family; infinite for an empty family.
    pub min_len: f64,
    pub shortest: Option<Vec<u32>>,
    /// Distinct family paths shorter than the requested threshold, shortest
    /// first.
    pub violated: Vec<Vec<u32>>,
}

enum Prepared<'a> {
    Connecting { from: &'a [u32], to: Vec<bool>, from_set: Vec<bool>, allowed: &'a Option<Vec<bool>> },
    Far { classes: &'a [Vec<u32>], groups: Vec<Vec<u32>>, singles: Vec<u32>, allowed: &'a Option<Vec<bool>> },
}

/// Separation oracle bound to one graph and one family.
pub struct Oracle<'a> {
    adj: &'a [Vec<u32>],
    parts: Vec<Prepared<'a>>,
    /// Number of violated paths collected per Connecting part per call.
    pub per_part: usize,
}

fn flatten<'a>(f: &'a PathFamily, n: usize, out: &mut Vec<Prepared<'a>>) {
    match f {
        PathFamily::Connecting { from, to, allowed } => {
            let mut to_set = vec![false; n];
            for &b in to {
                to_set[b as usize] = true;
            }
            let mut from_set = vec![false; n];
            for &a in from {
                from_set[a as usize] = true;
            }
            out.push(Prepared::Connecting { from, to: to_set, from_set, allowed });
        }
        PathFamily::FarPairs { classes, allowed } => {
            let mut by_class: BTreeMap<&[u32], Vec<u32>> = BTreeMap::new();
            let mut singles = Vec::new();
            for v in 0..n as u32 {
                if !permitted(allowed, v) {
                    continue;
                }
                if classes[v as usize].is_empty() {
                    singles.push(v);
                } else {
                    by_class.entry(&classes[v as usize]).or_default().push(v);
                }
            }
            out.push(Prepared::Far { classes, groups: by_class.into_values().collect(), singles, allowed });
        }
        PathFamily::Union(fs) => fs.iter().for_each(|g| flatten(g, n, out)),
    }
}

impl<'a> Oracle<'a> {
    pub fn new(adj: &'a [Vec<u32>], family: &'a PathFamily) -> Self {
        let mut parts = Vec::new();
        flatten(family, adj.len(), &mut parts);
        Oracle { adj, parts, per_part: 64 }
    }

    /// Shortest family path under ρ, plus every distinct candidate path
    /// shorter than `threshold` found along the way.
    pub fn separate(&self, rho: &[f64], threshold: f64) -> Separation {
        let mut found: Vec<(f64, Vec<u32>)> = Vec::new();
        for part in &self.parts {
            match part {
                Prepared::Connecting { from, to, from_set, allowed } => {
                    found.extend(dijkstra(
                        self.adj,
                        rho,
                        allowed,
                        from,
                        |v| to[v as usize],
                        |v| from_set[v as usize],
                        self.per_part.max(1),
                    ));
                }
                Prepared::Far { classes, groups, singles, allowed } => {
                    let jobs: Vec<(Vec<u32>, &[u32])> = groups
                        .iter()
                        .map(|g| (g.clone(), classes[g[0] as usize].as_slice()))
                        .chain(singles.iter().map(|&s| (vec![s], &[][..])))
                        .collect();
                    let results: Vec<Vec<(f64, Vec<u32>)>> = jobs
                        .par_iter()
                        .map(|(srcs, cls)| {
                            let single = if cls.is_empty() { Some(srcs[0]) } else { None };
                            dijkstra(
                                self.adj,
                                rho,
                                allowed,
                                srcs,
                                |v| match single {
                                    Some(s) => v != s,
                                    None => disjoint(cls, &classes[v as usize]),
                                },
                                |v| srcs.contains(&v),
                                1,
                            )
                        })
                        .collect();
                    found.extend(results.into_iter().flatten());
                }
            }
        }
        for (_, p) in &mut found {
            if p.first() > p.last() {
                p.reverse();
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        found.dedup_by(|a, b| a.1 == b.1);
        let min_len = found.first().map_or(f64::INFINITY, |f| f.0);
        let shortest = found.first().map(|f| f.1.clone());
        let violated = found.into_iter().filter(|f| f.0 < threshold).map(|f| f.1).collect();
        Separation { min_len, shortest, violated }
    }
}

pub fn path_length(rho: &[f64], path: &[u32]) -> f64 {
    path.iter().map(|&v| rho[v as usize]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn line(n: usize) -> Vec<Vec<u32>> {
        (0..n)
            .map(|i| {
                let mut a = Vec::new();
                if i > 0 {
                    a.push(i as u32 - 1);
                }
                if i + 1 < n {
                    a.push(i as u32 + 1);
                }
                a
            })
            .collect()
    }

    #[test]
    fn zero_density_gives_zero_length_path() {
        let adj = line(5);
        let f = PathFamily::Connecting { from: vec![0], to: vec![4], allowed: None };
        let s = Oracle::new(&adj, &f).separate(&[0.0; 5], 1.0);
        assert_eq!(s.min_len, 0.0);
        assert_eq!(s.shortest, Some(vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn unit_density_counts_vertices() {
        // A 6-cycle: from 0 to 3 both ways take 4 vertices; the tie goes to
        // the lower ids.
        let adj: Vec<Vec<u32>> = (0..6u32).map(|i| {
            let mut a = vec![(i + 1) % 6, (i + 5) % 6];
            a.sort();
            a
        }).collect();
        let f = PathFamily::Connecting { from: vec![0], to: vec![3], allowed: None };
        let s = Oracle::new(&adj, &f).separate(&[1.0; 6], 10.0);
        assert_eq!(s.min_len, 4.0);
        assert_eq!(s.shortest, Some(vec![0, 1, 2, 3]));
    }

    #[test]
    fn blocked_vertices_make_the_family_empty() {
        let adj = line(4);
        let f = PathFamily::Connecting { from: vec![0], to: vec![3], allowed: Some(vec![true, false, true, true]) };
        let s = Oracle::new(&adj, &f).separate(&[1.0; 4], 10.0);
        assert!(s.min_len.is_infinite());
        assert!(s.shortest.is_none());
    }

    #[test]
    fn far_pairs_skip_near_endpoints() {
        // Vertices 0,1 share class 7; 2 has class 8; 3 has no class.
        let adj = line(4);
        let f = PathFamily::far_pairs(vec![vec![7], vec![7], vec![8], vec![]], None);
        let s = Oracle::new(&adj, &f).separate(&[1.0; 4], 10.0);
        assert_eq!(s.min_len, 2.0);
        for p in &s.violated {
            assert!(f.contains(&adj, p));
        }
        assert!(s.violated.contains(&vec![1, 2]));
        assert!(s.violated.contains(&vec![2, 3]));
        assert!(!s.violated.iter().any(|p| p == &vec![0, 1]));
    }
}
