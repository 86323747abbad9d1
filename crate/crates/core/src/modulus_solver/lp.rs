//! p = 1 as a linear program: minimize Σ w_v ρ_v subject to the pooled path
//! constraints, ρ ∈ [0, 1]. New cuts are appended to the solved simplex
//! tableau, which keeps the basis warm between rounds.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, Variable};

pub(crate) struct LpPool {
    vars: Vec<Variable>,
    state: LpState,
    pub paths: Vec<Vec<u32>>,
    seen: std::collections::HashSet<Vec<u32>>,
}

enum LpState {
    Fresh(Problem),
    Solved(Solution),
    Poisoned,
}

#[derive(Debug, thiserror::Error)]
#[error("linear program failed: {0}")]
pub struct LpError(pub String);

fn expr(vars: &[Variable], path: &[u32]) -> LinearExpr {
    path.iter().map(|&v| (vars[v as usize], 1.0)).collect()
}

impl LpPool {
    pub fn new(w: &[f64]) -> Self {
        let mut prob = Problem::new(OptimizationDirection::Minimize);
        let vars = w.iter().map(|&wv| prob.add_var(wv, (0.0, 1.0))).collect();
        LpPool { vars, state: LpState::Fresh(prob), paths: Vec::new(), seen: Default::default() }
    }

    /// Adds a cut; returns false when it is already pooled.
    pub fn add(&mut self, path: Vec<u32>) -> Result<bool, LpError> {
        if !self.seen.insert(path.clone()) {
            return Ok(false);
        }
        let e = expr(&self.vars, &path);
        self.paths.push(path);
        self.state = match std::mem::replace(&mut self.state, LpState::Poisoned) {
            LpState::Fresh(mut prob) => {
                prob.add_constraint(e, ComparisonOp::Ge, 1.0);
                LpState::Fresh(prob)
            }
            LpState::Solved(sol) => {
                let out = sol.add_constraint(e, ComparisonOp::Ge, 1.0).map_err(|e| LpError(e.to_string()))?;
                LpState::Solved(out.into_solution().map_err(|_| LpError("interrupted".into()))?)
            }
            LpState::Poisoned => return Err(LpError("solver state lost".into())),
        };
        Ok(true)
    }

    /// Optimal ρ for the pooled constraints.
    pub fn solve(&mut self) -> Result<Vec<f64>, LpError> {
        if let LpState::Fresh(prob) = &self.state {
            let out = prob.solve().map_err(|e| LpError(e.to_string()))?;
            self.state = LpState::Solved(out.into_solution().map_err(|_| LpError("interrupted".into()))?);
        }
        match &self.state {
            LpState::Solved(sol) => Ok(self.vars.iter().map(|&v| sol.var_value(v).max(0.0)).collect()),
            _ => Err(LpError("solver state lost".into())),
        }
    }
}
