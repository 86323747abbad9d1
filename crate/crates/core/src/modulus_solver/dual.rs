//! Dual coordinate ascent for p > 1 over a growing pool of path constraints.
//!
//! With multipliers λ_j ≥ 0 on the constraints L_ρ(γ_j) ≥ 1 and
//! μ_v = Σ_{j ∋ v} λ_j, the inner minimization over ρ is explicit:
//! ρ_v = (μ_v / (p w_v))^{1/(p−1)}, and the dual value is
//! Σ λ_j − (p−1) Σ w_v ρ_v^p. Each coordinate step makes one constraint
//! tight (or sets its multiplier to zero), which is exact line maximization.

pub(crate) struct DualPool {
    p: f64,
    r: f64,
    w: Vec<f64>,
    pub mu: Vec<f64>,
    pub paths: Vec<Vec<u32>>,
    pub lambda: Vec<f64>,
    seen: std::collections::HashSet<Vec<u32>>,
}

impl DualPool {
    pub fn new(p: f64, w: Vec<f64>) -> Self {
        assert!(p > 1.0);
        let n = w.len();
        DualPool {
            p,
            r: 1.0 / (p - 1.0),
            w,
            mu: vec![0.0; n],
            paths: Vec::new(),
            lambda: Vec::new(),
            seen: Default::default(),
        }
    }

    /// Returns false when the path is already pooled.
    pub fn add(&mut self, path: Vec<u32>) -> bool {
        if !self.seen.insert(path.clone()) {
            return false;
        }
        self.paths.push(path);
        self.lambda.push(0.0);
        true
    }

    #[inline]
    fn rho_of(&self, mu: f64, v: usize) -> f64 {
        if mu <= 0.0 {
            0.0
        } else {
            ((mu / (self.p * self.w[v])).ln() * self.r).exp()
        }
    }

    pub fn rho(&self) -> Vec<f64> {
        (0..self.mu.len()).map(|v| self.rho_of(self.mu[v], v)).collect()
    }

    pub fn dual_value(&self) -> f64 {
        let rho = self.rho();
        let mass: f64 = rho.iter().zip(&self.w).map(|(r, w)| w * r.powf(self.p)).sum();
        self.lambda.iter().sum::<f64>() - (self.p - 1.0) * mass
    }

    fn length_with(&self, path: &[u32], base: &[f64], t: f64) -> (f64, f64) {
        let mut g = 0.0;
        let mut dg = 0.0;
        for (k, &v) in path.iter().enumerate() {
            let m = base[k] + t;
            let r = self.rho_of(m, v as usize);
            g += r;
            if m > 0.0 {
                dg += self.r * r / m;
            }
        }
        (g, dg)
    }

    /// Exact maximization along λ_j. Returns |Δλ_j|.
    fn step(&mut self, j: usize, base: &mut Vec<f64>) -> f64 {
        let old = self.lambda[j];
        base.clear();
        base.extend(self.paths[j].iter().map(|&v| (self.mu[v as usize] - old).max(0.0)));
        let path = std::mem::take(&mut self.paths[j]);
        let (g0, _) = self.length_with(&path, base, 0.0);
        let new = if g0 >= 1.0 {
            0.0
        } else {
            let len = path.len() as f64;
            let wmin = path.iter().map(|&v| self.w[v as usize]).fold(f64::INFINITY, f64::min);
            let mut hi = old.max(self.p * wmin * len.powf(1.0 - self.p)).max(f64::MIN_POSITIVE);
            while self.length_with(&path, base, hi).0 < 1.0 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            let mut t = if old > lo && old < hi { old } else { 0.5 * (lo + hi) };
            for _ in 0..200 {
                let (g, dg) = self.length_with(&path, base, t);
                if (g - 1.0).abs() <= 1e-15 {
                    break;
                }
                if g < 1.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                let newton = if dg > 0.0 { t - (g - 1.0) / dg } else { f64::NAN };
                t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                if hi - lo <= 1e-16 * hi {
                    break;
                }
            }
            t
        };
        for (k, &v) in path.iter().enumerate() {
            self.mu[v as usize] = base[k] + new;
        }
        self.paths[j] = path;
        self.lambda[j] = new;
        (new - old).abs()
    }

    /// One cyclic pass; returns the largest constraint violation measured
    /// after the pass (slack on active constraints counts as violation).
    pub fn sweep(&mut self) -> f64 {
        let mut base = Vec::new();
        for j in 0..self.paths.len() {
            self.step(j, &mut base);
        }
        self.violation()
    }

    pub fn violation(&self) -> f64 {
        let rho = self.rho();
        let mut worst: f64 = 0.0;
        for (j, path) in self.paths.iter().enumerate() {
            let l: f64 = path.iter().map(|&v| rho[v as usize]).sum();
            let v = if self.lambda[j] > 0.0 { (l - 1.0).abs() } else { (1.0 - l).max(0.0) };
            worst = worst.max(v);
        }
        worst
    }

    /// Recomputes μ from λ to shed accumulated rounding.
    pub fn refresh(&mut self) {
        self.mu.iter_mut().for_each(|m| *m = 0.0);
        for (j, path) in self.paths.iter().enumerate() {
            for &v in path {
                self.mu[v as usize] += self.lambda[j];
            }
        }
    }

    /// max_v |μ_v − p w_v ρ_v^{p−1}| over the support of ρ, for the given ρ.
    pub fn kkt_residual(&self, rho: &[f64]) -> f64 {
        let mut mu = vec![0.0; rho.len()];
        for (j, path) in self.paths.iter().enumerate() {
            for &v in path {
                mu[v as usize] += self.lambda[j];
            }
        }
        (0..rho.len())
            .filter(|&v| rho[v] > 0.0)
            .map(|v| (mu[v] - self.p * self.w[v] * rho[v].powf(self.p - 1.0)).abs())
            .fold(0.0, f64::max)
    }
}
