//! Linear solver behavior: equivalence with the monolithic solution on
//! all-perfect decompositions, macro admissibility after global stages, and
//! the contraction of the error indicator.

use delam_core::driver::{LatinRunState, SdPolicy, SolverOptions};
use delam_core::interface::CohesiveParams;
use delam_core::mesh::build_decomposition;
use delam_core::model::{BcKind, BoundaryCondition, Edge, LaminateModel, Ply};
use delam_core::oracle::Monolithic;
use std::collections::BTreeMap;

fn params() -> CohesiveParams {
    CohesiveParams {
        k1: 1e4,
        k2: 1e4,
        k3: 2e4,
        yc: 0.5,
        n: 1.0,
        alpha: 2.0,
        gamma1: 1.0,
        gamma2: 1.0,
    }
}

fn bar_model() -> LaminateModel {
    let mut materials = BTreeMap::new();
    materials.insert("m".into(), delam_core::material::Material::isotropic(1.0e5, 0.3));
    LaminateModel {
        length: 16.0,
        time_steps: 1,
        plies: vec![Ply { thickness: 2.0, angle: 0.0, material: "m".into() }],
        materials,
        precracks: vec![],
        boundary_conditions: vec![
            BoundaryCondition {
                edge: Edge::Left,
                kind: BcKind::Dirichlet,
                span: None,
                components: [true, true],
                value: [0.0, 0.0],
                profile: Default::default(),
            },
            BoundaryCondition {
                edge: Edge::Right,
                kind: BcKind::Dirichlet,
                span: None,
                components: [true, true],
                value: [0.016, 0.0],
                profile: Default::default(),
            },
        ],
        point_loads: vec![],
        body_force: None,
        perfect_bond: false,
    }
}

fn opts(tol: f64) -> SolverOptions {
    SolverOptions {
        tol,
        max_iters: 4000,
        policy: SdPolicy::Isotropic,
        update_period: 0,
        timing: false,
        ..Default::default()
    }
}

#[test]
fn bar_converges_to_monolithic_solution() {
    let model = bar_model();
    let decomp = build_decomposition(&model, 8, 2, 4).unwrap();
    assert_eq!(decomp.substructures.len(), 2);
    let mut state = LatinRunState::new(decomp, opts(1e-11), params()).unwrap();
    let rec = state.run_time_step(1).unwrap();
    assert!(rec.iters < 4000);

    let mono = Monolithic::build(&model, 8, 2, params(), 50_000).unwrap();
    let mut mono = mono;
    let sol = mono.solve_step(1).unwrap();
    let u_latin = mono.map_from_decomposition(&state.decomp, &state.us);
    let gap = mono.energy_gap(&u_latin, &sol.u);
    assert!(gap < 1e-8, "energy gap {gap:.3e}");
}

#[test]
fn closing_relation_and_macro_residual_hold_after_global_stage() {
    let model = bar_model();
    let decomp = build_decomposition(&model, 8, 2, 4).unwrap();
    let mut state = LatinRunState::new(decomp, opts(1e-6), params()).unwrap();
    state.step = 1;
    state.seed_boundary();
    for _ in 0..3 {
        state.sweep_global().unwrap();
        // The update formula satisfies the closing relation identically
        // against the hat fields the global stage consumed.
        assert!(
            state.max_closing_residual() < 1e-9,
            "closing residual {}",
            state.max_closing_residual()
        );
        // Exact macro solves enforce the macro action-reaction residual.
        assert!(state.max_macro_residual() < 1e-8, "macro residual {}", state.max_macro_residual());
        state.latin_iterate().unwrap();
    }
}

#[test]
fn error_indicator_contracts_and_is_scale_invariant() {
    let model = bar_model();
    let decomp = build_decomposition(&model, 8, 2, 4).unwrap();
    let mut state = LatinRunState::new(decomp, opts(1e-12), params()).unwrap();
    state.step = 1;
    state.seed_boundary();
    let mut etas = Vec::new();
    for _ in 0..25 {
        etas.push(state.latin_iterate().unwrap());
    }
    // Monotone decrease on the linear problem with constant directions.
    for w in etas.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "eta increased: {:?}", w);
    }
    // Scale invariance: scaling every field by 2 leaves eta unchanged.
    let eta_before = state.latin_error();
    for sides in state.fields.iter_mut() {
        for sf in sides.iter_mut() {
            for v in sf.w.iter_mut().chain(sf.f.iter_mut()).chain(sf.w_hat.iter_mut()).chain(sf.f_hat.iter_mut()) {
                *v *= 2.0;
            }
        }
    }
    let eta_after = state.latin_error();
    assert!((eta_before - eta_after).abs() <= 1e-12 * eta_before.max(1e-300));
}

#[test]
fn converged_state_is_a_fixed_point() {
    let model = bar_model();
    let decomp = build_decomposition(&model, 8, 2, 4).unwrap();
    let mut state = LatinRunState::new(decomp, opts(1e-12), params()).unwrap();
    state.run_time_step(1).unwrap();
    let eta1 = state.latin_iterate().unwrap();
    let eta2 = state.latin_iterate().unwrap();
    assert!((eta1 - eta2).abs() < 1e-12, "eta moved: {eta1} vs {eta2}");
}

#[test]
fn limit_is_independent_of_search_directions() {
    // Any positive search direction converges to the same (monolithic)
    // solution; k affects the rate only.
    let model = bar_model();
    let mut mono = Monolithic::build(&model, 8, 2, params(), 50_000).unwrap();
    let sol = mono.solve_step(1).unwrap();
    for scale in [0.037, 1.0, 55.0] {
        let decomp = build_decomposition(&model, 8, 2, 4).unwrap();
        let mut o = opts(1e-11);
        o.macro_stiff_factor = 1.0; // plain micro directions
        let mut state = LatinRunState::new(decomp, o, params()).unwrap();
        for sides in state.sdirs.sides.iter_mut() {
            for sk in sides.iter_mut() {
                for k in sk.k.iter_mut() {
                    k.0 *= scale;
                    k.1 *= scale;
                }
            }
        }
        state.run_time_step(1).unwrap();
        let u_latin = mono.map_from_decomposition(&state.decomp, &state.us);
        let gap = mono.energy_gap(&u_latin, &sol.u);
        assert!(gap < 1e-8, "scale {scale}: gap {gap:.3e}");
    }
}

#[test]
fn zero_load_step_converges_immediately_from_converged_state() {
    let model = {
        let mut m = bar_model();
        m.time_steps = 2;
        // Table profile holding the same value over both steps.
        m.boundary_conditions[1].profile =
            delam_core::model::TimeProfile::Table(vec![1.0, 1.0]);
        m
    };
    let decomp = build_decomposition(&model, 8, 2, 4).unwrap();
    let mut state = LatinRunState::new(decomp, opts(1e-10), params()).unwrap();
    state.run_time_step(1).unwrap();
    let rec = state.run_time_step(2).unwrap();
    assert_eq!(rec.iters, 1, "zero increment must converge in one sweep");
}

#[test]
fn macro_resultant_transmitted_after_first_iteration() {
    // After one global stage with an exact macro solve, the axial resultants
    // on the two sides of the interior interface balance.
    let model = bar_model();
    let decomp = build_decomposition(&model, 8, 2, 4).unwrap();
    let iface_perfect = decomp
        .interfaces
        .iter()
        .position(|f| f.kind == delam_core::mesh::InterfaceKind::Perfect)
        .unwrap();
    let mut state = LatinRunState::new(decomp, opts(1e-6), params()).unwrap();
    state.step = 1;
    state.seed_boundary();
    state.latin_iterate().unwrap();
    let iface = &state.decomp.interfaces[iface_perfect];
    let mut r0 = nalgebra::Vector2::zeros();
    let mut r1 = nalgebra::Vector2::zeros();
    for (q, qp) in iface.qpoints.iter().enumerate() {
        r0 += qp.weight * state.fields[iface_perfect][0].f[q];
        r1 += qp.weight * state.fields[iface_perfect][1].f[q];
    }
    assert!(r0.x.abs() > 1e-6, "interface must carry load after one sweep");
    assert!((r0 + r1).norm() < 1e-8 * r0.norm(), "resultants must balance: {r0:?} vs {r1:?}");
}
