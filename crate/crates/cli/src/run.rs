//! Command implementations. Each returns the CSV it produced (if any) and
//! whether any solve stopped at its iteration cap.

use crate::config::{ConfigError, FamilyChoice, RunConfig, Side};
use rabmod::boundary_approx::ApproximationLevel;
use rabmod::experiments::{
    bourdon_reference, clp_csv, clp_scan, condenser, estimate_exponent, exponents_csv, modulus_csv, CrossingStatus,
    ExperimentError, ExponentKind, Provenance, Workspace,
};
use rabmod::group_engine::{cache_root, load_store, save_store, BudgetExceeded, CacheError, ChamberStore};
use rabmod::modulus_solver::{solve_modulus, CurveFamilySpec, ModulusResult, SolveError, Status};
use rabmod::presentation::{boundary_connected, is_hyperbolic, preset, Presentation};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("{0}")]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Solve(#[from] SolveError),
    #[error("{0}")]
    Cache(#[from] CacheError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 3,
        }
    }
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Output {
    pub csv: Option<String>,
    /// Some solve stopped at its iteration cap (exit code 2).
    pub capped: bool,
}

/// Balls and the scales they support after budget limits.
pub struct Prepared {
    pub ws: Workspace,
    pub k_max: usize,
    pub apartment_k_max: usize,
    pub notes: Vec<String>,
}

fn log(msg: &str) {
    eprintln!("rabmod: {msg}");
}

/// Loads the cached ball, grows it toward `depth` within the budget, and
/// saves it again if it grew. A budget stop keeps the partial ball.
fn obtain(root: &Path, pres: Presentation, depth: usize, budget: usize) -> Result<(ChamberStore, Option<BudgetExceeded>), CliError> {
    let cached = load_store(root, &pres)?;
    let hit = cached.as_ref().map_or(false, |s| s.depth() >= depth);
    let mut store = cached.unwrap_or_else(|| ChamberStore::new(pres));
    if hit {
        log(&format!("cache hit: ball of radius {} ({} chambers)", store.depth(), store.len()));
        return Ok((store, None));
    }
    let before = store.depth();
    let stop = store.extend_to(depth, budget).err();
    if store.depth() > before {
        save_store(root, &store)?;
    }
    Ok((store, stop))
}

/// Builds or loads both balls. When the building ball falls short, the
/// probe depth shrinks first; a k_max beyond the ball radius is an error.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    let pres = cfg.presentation()?;
    let root = cache_root(cfg.cache_dir.as_deref());
    let mut notes = Vec::new();
    let (building, stop) = obtain(&root, pres.clone(), cfg.k_max + cfg.m_probe, cfg.budget)?;
    let radius = building.depth();
    if radius < cfg.k_max {
        let e = stop.expect("a short ball comes from a budget stop");
        return Err(CliError::Budget(format!(
            "k_max = {} needs a building ball of radius at least {}; a budget of {} chambers reaches radius {} \
             (the next level would need {} chambers), so the largest reachable k is {}; the partial ball is cached",
            cfg.k_max, cfg.k_max, e.budget, radius, e.needed, radius
        )));
    }
    let m = cfg.m_probe.min(radius - cfg.k_max);
    if m < cfg.m_probe {
        notes.push(format!("m_probe reduced from {} to {m}: the budget limits the building ball to radius {radius}", cfg.m_probe));
    }
    let want_a = cfg.apartment_k_max() + m;
    let (apartment, _) = obtain(&root, pres.coxeter(), want_a, cfg.budget)?;
    let apartment_k_max = apartment.depth().saturating_sub(m).min(cfg.apartment_k_max());
    if apartment_k_max < cfg.k_max {
        return Err(CliError::Budget(format!(
            "the apartment ball reaches radius {} only, below k_max + m_probe = {}",
            apartment.depth(),
            cfg.k_max + m
        )));
    }
    if apartment_k_max < cfg.apartment_k_max() {
        notes.push(format!("apartment_k_max reduced from {} to {apartment_k_max} by the budget", cfg.apartment_k_max()));
    }
    for n in &notes {
        log(n);
    }
    Ok(Prepared { ws: Workspace::new(building, apartment, m)?, k_max: cfg.k_max, apartment_k_max, notes })
}

pub fn provenance(cfg: &RunConfig, prep: &Prepared) -> Provenance {
    Provenance {
        preset: cfg.preset_label(),
        preset_hash: prep.ws.presentation().hash_hex(),
        t0: cfg.t0,
        m_probe: prep.ws.m_probe,
        tol_sep: cfg.solver.tol_sep,
        tol_obj: cfg.solver.tol_obj,
        seed: cfg.seed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    preset_hash: String,
    m_probe: usize,
    levels: Vec<LevelEntry>,
    notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LevelEntry {
    k: usize,
    building_members: usize,
    apartment_members: usize,
    files: Vec<String>,
}

fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn levels_dir(cfg: &RunConfig) -> PathBuf {
    cache_root(cfg.cache_dir.as_deref()).join("levels").join(&cfg.hash_hex()[..16])
}

fn dump_level(dir: &Path, k: usize, side: &str, level: &ApproximationLevel) -> Result<Vec<String>, CliError> {
    let members = format!("k{k}_{side}_members.jsonl");
    let edges = format!("k{k}_{side}_edges.csv");
    write_atomic(dir, &members, level.dump_members().as_bytes())?;
    write_atomic(dir, &edges, level.dump_edges().as_bytes())?;
    Ok(vec![members, edges])
}

/// Balls to k_max + m_probe and level files for k = 0..=k_max. A manifest
/// with the config hash marks a completed build; rerunning is a no-op.
pub fn cmd_build(cfg: &RunConfig) -> Result<Output, CliError> {
    cfg.validate()?;
    let dir = levels_dir(cfg);
    let hash = cfg.hash_hex();
    if let Ok(text) = std::fs::read_to_string(dir.join("manifest.json")) {
        if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
            let complete = m.levels.iter().flat_map(|l| &l.files).all(|f| dir.join(f).is_file());
            if m.config_hash == hash && complete {
                log(&format!("cache hit: levels in {}", dir.display()));
                return Ok(Output::default());
            }
        }
    }
    let prep = prepare(cfg)?;
    let mut levels = Vec::new();
    for k in 0..=prep.k_max {
        let pair = prep.ws.level_pair(k)?;
        let mut files = dump_level(&dir, k, "building", &pair.building)?;
        files.extend(dump_level(&dir, k, "apartment", &pair.apartment)?);
        log(&format!("level {k}: {} building members, {} apartment members", pair.building.len(), pair.apartment.len()));
        levels.push(LevelEntry { k, building_members: pair.building.len(), apartment_members: pair.apartment.len(), files });
    }
    let manifest = Manifest {
        config_hash: hash,
        preset_hash: prep.ws.presentation().hash_hex(),
        m_probe: prep.ws.m_probe,
        levels,
        notes: prep.notes.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir, "manifest.json", text.as_bytes())?;
    log(&format!("levels written to {}", dir.display()));
    Ok(Output::default())
}

fn family_spec(cfg: &RunConfig, store: &ChamberStore, level: &ApproximationLevel) -> Result<CurveFamilySpec, CliError> {
    Ok(match cfg.family {
        FamilyChoice::Far => CurveFamilySpec::DiameterAtLeast { t0: cfg.t0 },
        FamilyChoice::RetractedFar => CurveFamilySpec::RetractedDiameterAtLeast { t0: cfg.t0 },
        FamilyChoice::Condenser { center, inner, outer } => {
            if center >= level.len() {
                return Err(ConfigError::new(
                    "family.center",
                    format!("member {center} does not exist; level {} has {} members", level.k, level.len()),
                )
                .into());
            }
            let (a, b) = condenser(store.presentation(), level, center, inner, outer);
            CurveFamilySpec::Connecting { a, b }
        }
    })
}

/// One row per (k, p) for the configured family, side and weighting.
pub fn cmd_modulus(cfg: &RunConfig) -> Result<Output, CliError> {
    let prep = prepare(cfg)?;
    let ws = &prep.ws;
    let mut rows: Vec<(usize, f64, String, bool, ModulusResult)> = Vec::new();
    for k in cfg.k_min..=prep.k_max {
        let (store, level) = match cfg.side {
            Side::Building => (&ws.building, ws.level_pair(k)?.building),
            Side::Apartment => (&ws.apartment, ws.apartment_level(k)?),
        };
        let spec = family_spec(cfg, store, &level)?;
        let label = format!("{}:{}", side_name(cfg.side), spec.label());
        for &p in &cfg.p_grid {
            let r = solve_modulus(store, &level, &spec, p, cfg.weighted, &cfg.solver)?;
            log(&format!("k={k} p={p} {label} value={:.9} {}", r.value, r.status.as_str()));
            rows.push((k, p, label.clone(), cfg.weighted, r));
        }
    }
    let capped = rows.iter().any(|r| r.4.status == Status::IterationCap);
    Ok(Output { csv: Some(modulus_csv(&provenance(cfg, &prep), &rows)?), capped })
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Building => "building",
        Side::Apartment => "apartment",
    }
}

/// The closed-form exponent applies to right-angled polygons: a single
/// cycle of at least five generators with constant thickness.
pub fn polygon_reference(p: &Presentation) -> Option<f64> {
    let n = p.n();
    let q = p.thickness_constant()?;
    let cycle = n >= 5
        && p.edges().len() == n
        && (0..n).all(|v| p.adj(v).count_ones() == 2)
        && p.induced_connected(p.all());
    if !cycle {
        return None;
    }
    bourdon_reference(n, q as usize).ok()
}

/// Crossing exponents for each configured kind over k_min..=k_max
/// (apartment kinds up to apartment_k_max).
pub fn cmd_confdim(cfg: &RunConfig) -> Result<Output, CliError> {
    let kinds = cfg.exponent_kinds()?;
    let prep = prepare(cfg)?;
    let mut estimates = Vec::new();
    for kind in kinds {
        let top = if kind == ExponentKind::Q { prep.k_max } else { prep.apartment_k_max };
        let ks: Vec<usize> = (cfg.k_min..=top).collect();
        let e = estimate_exponent(&prep.ws, kind, &ks, cfg.t0, &cfg.solver, &cfg.bisection)?;
        for r in &e.rows {
            log(&format!("{} k={} members={} p_k={:?} {:?}", kind.as_str(), r.k, r.members, r.p_k, r.status));
        }
        estimates.push(e);
    }
    let reference = polygon_reference(prep.ws.presentation());
    if let Some(q) = reference {
        log(&format!("closed-form reference exponent {q:.6}"));
    }
    let capped = estimates.iter().flat_map(|e| &e.rows).any(|r| r.status == CrossingStatus::IterationCap);
    Ok(Output { csv: Some(exponents_csv(&provenance(cfg, &prep), &estimates, reference)?), capped })
}

/// Condenser moduli over the configured grid, centers and exponents.
pub fn cmd_clp(cfg: &RunConfig) -> Result<Output, CliError> {
    let prep = prepare(cfg)?;
    let ks: Vec<usize> = (cfg.k_min..=prep.k_max).collect();
    let centers = if cfg.centers.is_empty() {
        let smallest = prep.ws.level_pair(cfg.k_min)?.building.len();
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        let mut c = rand::seq::index::sample(&mut rng, smallest, cfg.clp_centers.min(smallest)).into_vec();
        c.sort_unstable();
        c
    } else {
        cfg.centers.clone()
    };
    let grid: Vec<(usize, usize)> = cfg.condensers.iter().map(|c| (c[0], c[1])).collect();
    let mut rows = Vec::new();
    for &p in &cfg.p_grid {
        rows.extend(clp_scan(&prep.ws, &ks, p, &grid, &centers, &cfg.solver)?);
    }
    let capped = rows.iter().any(|r| r.status == Status::IterationCap);
    Ok(Output { csv: Some(clp_csv(&provenance(cfg, &prep), &rows)?), capped })
}

/// One line per preset; `cycle:<n>` is listed at n = 5.
pub fn cmd_presets() -> Output {
    let mut out = String::from("name,generators,edges,thickness,hyperbolic,boundary_connected,hash\n");
    for name in ["cycle:5", "dodecahedron", "120cell"] {
        let p = preset(name).expect("built-in preset").presentation;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            name,
            p.n(),
            p.edges().len(),
            p.thickness_constant().map_or("mixed".to_string(), |q| q.to_string()),
            is_hyperbolic(&p),
            boundary_connected(&p),
            &p.hash_hex()[..16],
        ));
    }
    Output { csv: Some(out), capped: false }
}
