//! Reference values for small graphs: every family path is enumerated and
//! the full convex program is solved by a log-barrier Newton method. Shares
//! nothing with the lazy solver beyond the family definition.

use super::family::PathFamily;
use nalgebra::{DMatrix, DVector};

pub const BRUTE_MAX_VERTICES: usize = 14;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BruteError {
    #[error("instance has {0} vertices; exhaustive reference supports at most {BRUTE_MAX_VERTICES}")]
    TooLarge(usize),
}

/// All simple family paths that do not contain a shorter family path as an
/// initial segment. Dropped paths only add implied constraints. Each path is
/// listed once, oriented from its smaller endpoint.
pub fn enumerate_paths(adj: &[Vec<u32>], family: &PathFamily) -> Vec<Vec<u32>> {
    let n = adj.len();
    let mut out = std::collections::BTreeSet::new();
    for s in 0..n as u32 {
        let mut stack = vec![s];
        let mut on = vec![false; n];
        on[s as usize] = true;
        extend(adj, family, &mut stack, &mut on, &mut out);
    }
    out.into_iter().collect()
}

fn extend(
    adj: &[Vec<u32>],
    family: &PathFamily,
    stack: &mut Vec<u32>,
    on: &mut [bool],
    out: &mut std::collections::BTreeSet<Vec<u32>>,
) {
    if family.admits(stack) {
        let mut p = stack.clone();
        if p.first() > p.last() {
            p.reverse();
        }
        out.insert(p);
        if stack.len() > 1 {
            return;
        }
    }
    let last = *stack.last().unwrap() as usize;
    for &u in &adj[last] {
        if on[u as usize] {
            continue;
        }
        on[u as usize] = true;
        stack.push(u);
        extend(adj, family, stack, on, out);
        stack.pop();
        on[u as usize] = false;
    }
}

fn barrier_value(t: f64, p: f64, w: &[f64], paths: &[Vec<u32>], x: &[f64]) -> f64 {
    if x.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    let mut f = t * x.iter().zip(w).map(|(xv, wv)| wv * xv.powf(p)).sum::<f64>();
    for path in paths {
        let s: f64 = path.iter().map(|&v| x[v as usize]).sum::<f64>() - 1.0;
        if s <= 0.0 {
            return f64::INFINITY;
        }
        f -= s.ln();
    }
    f - x.iter().map(|v| v.ln()).sum::<f64>()
}

/// Minimum of Σ w ρ^p over ρ ≥ 0 with every listed path of length ≥ 1.
/// Infeasibility cannot occur; an empty list gives 0.
pub fn solve_all_constraints(w: &[f64], paths: &[Vec<u32>], p: f64) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let n = w.len();
    let mut x: Vec<f64> = vec![1.5; n];
    let m = (paths.len() + n) as f64;
    let mut t = 1.0;
    while m / t > 1e-11 {
        for _ in 0..200 {
            let mut g = DVector::<f64>::zeros(n);
            let mut h = DMatrix::<f64>::zeros(n, n);
            for v in 0..n {
                g[v] = t * p * w[v] * x[v].powf(p - 1.0) - 1.0 / x[v];
                h[(v, v)] = t * p * (p - 1.0) * w[v] * x[v].powf(p - 2.0) + 1.0 / (x[v] * x[v]);
            }
            for path in paths {
                let s: f64 = path.iter().map(|&v| x[v as usize]).sum::<f64>() - 1.0;
                for &a in path {
                    g[a as usize] -= 1.0 / s;
                    for &b in path {
                        h[(a as usize, b as usize)] += 1.0 / (s * s);
                    }
                }
            }
            let Some(chol) = h.cholesky() else { break };
            let dx = chol.solve(&(-&g));
            let decrement = -g.dot(&dx);
            if decrement / 2.0 <= 1e-13 {
                break;
            }
            let f0 = barrier_value(t, p, w, paths, &x);
            let mut step = 1.0;
            loop {
                let cand: Vec<f64> = (0..n).map(|v| x[v] + step * dx[v]).collect();
                let f1 = barrier_value(t, p, w, paths, &cand);
                if f1 <= f0 - 0.25 * step * decrement {
                    x = cand;
                    break;
                }
                step *= 0.5;
                if step < 1e-14 {
                    break;
                }
            }
            if step < 1e-14 {
                break;
            }
        }
        t *= 8.0;
    }
    x.iter().zip(w).map(|(xv, wv)| wv * xv.powf(p)).sum()
}

pub fn brute_force_modulus(adj: &[Vec<u32>], w: &[f64], family: &PathFamily, p: f64) -> Result<f64, BruteError> {
    if adj.len() > BRUTE_MAX_VERTICES {
        return Err(BruteError::TooLarge(adj.len()));
    }
    let paths = enumerate_paths(adj, family);
    Ok(solve_all_constraints(w, &paths, p))
}

/// Minimum total weight of a vertex set meeting every family path, by
/// enumeration of all subsets.
pub fn min_vertex_cut(adj: &[Vec<u32>], w: &[f64], family: &PathFamily) -> Result<f64, BruteError> {
    let n = adj.len();
    if n > BRUTE_MAX_VERTICES {
        return Err(BruteError::TooLarge(n));
    }
    let paths = enumerate_paths(adj, family);
    let masks: Vec<u32> = paths.iter().map(|p| p.iter().fold(0u32, |m, &v| m | 1 << v)).collect();
    let mut best = f64::INFINITY;
    for s in 0u32..(1 << n) {
        if masks.iter().all(|&m| m & s != 0) {
            let cost: f64 = (0..n).filter(|&v| s >> v & 1 == 1).map(|v| w[v]).sum();
            best = best.min(cost);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Vec<u32>> {
        (0..n)
            .map(|i| [i.wrapping_sub(1), i + 1].into_iter().filter(|&j| j < n).map(|j| j as u32).collect())
            .collect()
    }

    fn theta() -> (Vec<Vec<u32>>, PathFamily) {
        // a=0, b=7, routes 0-1-2-3-7 and 0-4-5-6-7.
        let edges = [(0, 1), (1, 2), (2, 3), (3, 7), (0, 4), (4, 5), (5, 6), (6, 7)];
        let mut adj = vec![Vec::new(); 8];
        for (a, b) in edges {
            adj[a].push(b as u32);
            adj[b].push(a as u32);
        }
        adj.iter_mut().for_each(|a| a.sort());
        (adj, PathFamily::Connecting { from: vec![0], to: vec![7], allowed: None })
    }

    #[test]
    fn four_path_quadratic() {
        let adj = line(4);
        let f = PathFamily::Connecting { from: vec![0], to: vec![3], allowed: None };
        let v = brute_force_modulus(&adj, &[1.0; 4], &f, 2.0).unwrap();
        assert!((v - 0.25).abs() < 1e-6, "{v}");
    }

    #[test]
    fn theta_graph_cut() {
        let (adj, f) = theta();
        // Either endpoint alone meets every path. Once the endpoints are
        // made expensive the two routes need one cut each.
        assert_eq!(min_vertex_cut(&adj, &[1.0; 8], &f).unwrap(), 1.0);
        let mut w = vec![1.0; 8];
        w[0] = 10.0;
        w[7] = 10.0;
        assert_eq!(min_vertex_cut(&adj, &w, &f).unwrap(), 2.0);
        let v = brute_force_modulus(&adj, &w, &f, 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn enumeration_counts_theta_routes() {
        let (adj, f) = theta();
        assert_eq!(enumerate_paths(&adj, &f).len(), 2);
    }

    #[test]
    fn too_large_is_rejected() {
        let adj = line(15);
        let f = PathFamily::Connecting { from: vec![0], to: vec![14], allowed: None };
        assert_eq!(brute_force_modulus(&adj, &[1.0; 15], &f, 2.0), Err(BruteError::TooLarge(15)));
    }
}
