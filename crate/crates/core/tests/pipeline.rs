use rabmod::experiments::{fiber_weight, Workspace};
use rabmod::group_engine::{load_store, save_store, ChamberStore, DEFAULT_BUDGET};
use rabmod::modulus_solver::{level_weights, resolve_family, solve_modulus, CurveFamilySpec, SolverOptions, Status};
use rabmod::presentation::preset;

fn c5(depth: usize) -> Workspace {
    let p = preset("cycle:5").unwrap().presentation;
    let b = ChamberStore::build(p.clone(), depth, DEFAULT_BUDGET).unwrap();
    let a = ChamberStore::build(p.coxeter(), depth, DEFAULT_BUDGET).unwrap();
    Workspace::new(b, a, 2).unwrap()
}

#[test]
fn cached_ball_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = preset("dodecahedron").unwrap().presentation;
    let store = ChamberStore::build(p.clone(), 3, DEFAULT_BUDGET).unwrap();
    save_store(dir.path(), &store).unwrap();
    let back = load_store(dir.path(), &p).unwrap().expect("cache present");
    assert_eq!(back.depth(), 3);
    assert_eq!(back.len(), store.len());
    for id in store.ball(3) {
        assert_eq!(back.normal_form(id), store.normal_form(id));
    }
    // Another thickness is another presentation: no hit.
    let other = p.with_orders(vec![4; 12]).unwrap();
    assert!(load_store(dir.path(), &other).unwrap().is_none());
}

#[test]
fn apartment_formula_weights_match_counted_fibers() {
    let ws = c5(5);
    for k in 0..=3 {
        let pair = ws.level_pair(k).unwrap();
        let formula = ws.apartment_level(k).unwrap();
        assert_eq!(formula.len(), pair.apartment.len());
        assert_eq!(formula.weights, pair.apartment.weights);
        for m in &formula.members {
            assert_eq!(fiber_weight(ws.presentation(), &m.nf), 1 << k);
        }
    }
}

/// Building, unweighted apartment and weighted apartment far moduli are
/// ordered at every scale when the building uses retracted products.
#[test]
fn far_moduli_are_ordered_across_sides() {
    let ws = c5(6);
    let opts = SolverOptions::default();
    for k in 1..=3 {
        let pair = ws.level_pair(k).unwrap();
        let apt = ws.apartment_level(k).unwrap();
        for p in [1.0, 2.0] {
            let b = solve_modulus(&ws.building, &pair.building, &CurveFamilySpec::RetractedDiameterAtLeast { t0: 1 }, p, false, &opts).unwrap();
            let a = solve_modulus(&ws.apartment, &apt, &CurveFamilySpec::DiameterAtLeast { t0: 1 }, p, false, &opts).unwrap();
            let w = solve_modulus(&ws.apartment, &apt, &CurveFamilySpec::DiameterAtLeast { t0: 1 }, p, true, &opts).unwrap();
            for r in [&a, &b, &w] {
                assert_eq!(r.status, Status::Converged);
            }
            assert!(a.value <= b.value * (1.0 + 1e-6), "k={k} p={p}: {} > {}", a.value, b.value);
            assert!(b.value <= w.value * (1.0 + 1e-6), "k={k} p={p}: {} > {}", b.value, w.value);
        }
    }
}

#[test]
fn returned_density_is_admissible_with_the_reported_mass() {
    let ws = c5(6);
    let pair = ws.level_pair(3).unwrap();
    let level = &pair.building;
    let spec = CurveFamilySpec::DiameterAtLeast { t0: 1 };
    let family = resolve_family(&ws.building, level, &spec).unwrap();
    let oracle = rabmod::modulus_solver::Oracle::new(&level.adjacency, &family);
    let r = solve_modulus(&ws.building, level, &spec, 1.5, false, &SolverOptions::default()).unwrap();
    let sep = oracle.separate(&r.rho_star, 1.0);
    assert!(sep.min_len >= 1.0 - 1e-9, "{}", sep.min_len);
    let mass: f64 = r.rho_star.iter().zip(level_weights(level, false)).map(|(x, w)| w * x.powf(1.5)).sum();
    assert!((mass - r.value).abs() <= 1e-9 * mass);
    assert!(r.lower_bound <= r.value && r.lower_bound >= r.value * (1.0 - 1e-5));
}
