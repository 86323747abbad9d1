//! Run configuration: a JSON file, then command-line overrides, then
//! validation. Every error names the offending field.

use rabmod::experiments::{BisectionOptions, ExponentKind};
use rabmod::group_engine::DEFAULT_BUDGET;
use rabmod::modulus_solver::SolverOptions;
use rabmod::presentation::{preset, DefiningGraph, Presentation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
#[error("config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        ConfigError { field: field.to_string(), message: message.into() }
    }
}

/// Either one order for every generator or one per generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Thickness {
    Uniform(u32),
    PerVertex(Vec<u32>),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Building,
    Apartment,
}

/// Family for the `modulus` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyChoice {
    /// Paths joining members whose Gromov product is at most t0.
    Far,
    /// As `Far`, with products of the retracted normal forms.
    RetractedFar,
    /// Paths from the shadow ball of `inner` levels around `center` to the
    /// members outside the ball of `outer` levels.
    Condenser { center: usize, inner: usize, outer: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `cycle:<n>`, `dodecahedron` or `120cell`; ignored when `graph` is set.
    pub preset: Option<String>,
    pub graph: Option<DefiningGraph>,
    pub thickness: Option<Thickness>,
    pub k_min: usize,
    pub k_max: usize,
    /// Largest apartment scale for Q_A and Q_W; defaults to `k_max`.
    pub apartment_k_max: Option<usize>,
    pub m_probe: usize,
    pub t0: usize,
    pub p_grid: Vec<f64>,
    /// Any of "Q_A", "Q", "Q_W".
    pub exponents: Vec<String>,
    pub solver: SolverOptions,
    pub bisection: BisectionOptions,
    /// Chamber budget per ball.
    pub budget: usize,
    pub family: FamilyChoice,
    pub side: Side,
    pub weighted: bool,
    /// (inner, outer) shadow-ball radii in levels for `clp`.
    pub condensers: Vec<[usize; 2]>,
    /// Centers for `clp`; when empty, `clp_centers` are drawn with `seed`.
    pub centers: Vec<usize>,
    pub clp_centers: usize,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Some("cycle:5".into()),
            graph: None,
            thickness: None,
            k_min: 1,
            k_max: 4,
            apartment_k_max: None,
            m_probe: 2,
            t0: 2,
            p_grid: vec![1.0, 2.0],
            exponents: vec!["Q_A".into(), "Q".into(), "Q_W".into()],
            solver: SolverOptions::default(),
            bisection: BisectionOptions::default(),
            budget: DEFAULT_BUDGET,
            family: FamilyChoice::Far,
            side: Side::Building,
            weighted: false,
            condensers: vec![[1, 2], [1, 3], [2, 3]],
            centers: Vec::new(),
            clp_centers: 2,
            cache_dir: None,
            out_dir: None,
            seed: 0,
        }
    }
}

/// Scales beyond this are out of reach of any budget that fits in memory.
pub const MAX_SCALE: usize = 64;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".to_string() } else { path };
            ConfigError { field, message: e.into_inner().to_string() }
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apartment_k_max(&self) -> usize {
        self.apartment_k_max.unwrap_or(self.k_max).max(self.k_max)
    }

    pub fn preset_label(&self) -> String {
        if self.graph.is_some() {
            "graph".into()
        } else {
            self.preset.clone().unwrap_or_default()
        }
    }

    pub fn exponent_kinds(&self) -> Result<Vec<ExponentKind>, ConfigError> {
        self.exponents
            .iter()
            .map(|s| match s.as_str() {
                "Q" => Ok(ExponentKind::Q),
                "Q_A" => Ok(ExponentKind::QA),
                "Q_W" => Ok(ExponentKind::QW),
                other => Err(ConfigError::new("exponents", format!("unknown exponent {other:?}; expected Q, Q_A or Q_W"))),
            })
            .collect()
    }

    /// Presentation with thickness overrides applied.
    pub fn presentation(&self) -> Result<Presentation, ConfigError> {
        let base = match (&self.graph, &self.preset) {
            (Some(g), _) => Presentation::new(g.clone()).map_err(|r| ConfigError::new("graph", r.to_string()))?,
            (None, Some(name)) => preset(name).map_err(|e| ConfigError::new("preset", e.to_string()))?.presentation,
            (None, None) => return Err(ConfigError::new("preset", "either `preset` or `graph` is required")),
        };
        let orders = match &self.thickness {
            None => return Ok(base),
            Some(Thickness::Uniform(q)) => vec![*q; base.n()],
            Some(Thickness::PerVertex(v)) => {
                if v.len() != base.n() {
                    return Err(ConfigError::new(
                        "thickness",
                        format!("{} orders given for {} generators", v.len(), base.n()),
                    ));
                }
                v.clone()
            }
        };
        base.with_orders(orders).map_err(|r| ConfigError::new("thickness", r.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.presentation()?;
        self.exponent_kinds()?;
        if self.k_max > MAX_SCALE {
            return Err(ConfigError::new("k_max", format!("{} exceeds {MAX_SCALE}", self.k_max)));
        }
        if self.k_min > self.k_max {
            return Err(ConfigError::new("k_min", format!("{} exceeds k_max = {}", self.k_min, self.k_max)));
        }
        if let Some(a) = self.apartment_k_max {
            if a > MAX_SCALE {
                return Err(ConfigError::new("apartment_k_max", format!("{a} exceeds {MAX_SCALE}")));
            }
        }
        if self.m_probe > MAX_SCALE {
            return Err(ConfigError::new("m_probe", format!("{} exceeds {MAX_SCALE}", self.m_probe)));
        }
        if self.p_grid.is_empty() {
            return Err(ConfigError::new("p_grid", "needs at least one exponent"));
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(p.is_finite() && **p >= 1.0)) {
            return Err(ConfigError::new("p_grid", format!("exponent {p} is not a finite number >= 1")));
        }
        let s = &self.solver;
        for (name, v) in [("solver.tol_sep", s.tol_sep), ("solver.tol_obj", s.tol_obj), ("solver.tol_kkt", s.tol_kkt)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConfigError::new(name, format!("{v} is not in (0, 1)")));
            }
        }
        for (name, v) in [
            ("solver.max_iterations", s.max_iterations),
            ("solver.max_rounds", s.max_rounds),
            ("solver.sweeps_per_round", s.sweeps_per_round),
        ] {
            if v == 0 {
                return Err(ConfigError::new(name, "must be positive"));
            }
        }
        if let Some(t) = s.target {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::new("solver.target", format!("{t} is not a positive number")));
            }
        }
        let b = &self.bisection;
        if !(b.lo >= 1.0 && b.lo < b.hi && b.hi.is_finite()) {
            return Err(ConfigError::new("bisection", format!("need 1 <= lo < hi, got lo = {}, hi = {}", b.lo, b.hi)));
        }
        if !(b.tol > 0.0) {
            return Err(ConfigError::new("bisection.tol", format!("{} is not positive", b.tol)));
        }
        if self.budget == 0 {
            return Err(ConfigError::new("budget", "must be positive"));
        }
        if let Some(bad) = self.condensers.iter().find(|c| c[0] >= c[1]) {
            return Err(ConfigError::new("condensers", format!("inner {} must be below outer {}", bad[0], bad[1])));
        }
        if let FamilyChoice::Condenser { inner, outer, .. } = self.family {
            if inner >= outer {
                return Err(ConfigError::new("family", format!("inner {inner} must be below outer {outer}")));
            }
        }
        if self.family == FamilyChoice::RetractedFar && self.side == Side::Apartment {
            return Err(ConfigError::new("family", "retracted_far applies to building levels only"));
        }
        if self.weighted && self.side == Side::Building {
            return Err(ConfigError::new("weighted", "weights are defined on apartment levels only"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of every field that affects results.
    /// Object keys serialize sorted, so key order in the input is irrelevant.
    pub fn hash_hex(&self) -> String {
        let mut c = self.clone();
        c.cache_dir = None;
        c.out_dir = None;
        let v = serde_json::to_value(&c).expect("config serializes");
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
