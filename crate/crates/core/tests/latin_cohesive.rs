//! Cohesive behavior: the substructured solution must track the monolithic
//! nonlinear reference through a full delamination history on the double
//! cantilever beam, step by step.

use delam_core::driver::{LatinRunState, SdPolicy, SolverOptions};
use delam_core::interface::CohesiveParams;
use delam_core::mesh::{build_decomposition, InterfaceKind};
use delam_core::model::{BcKind, BoundaryCondition, Edge, LaminateModel, Ply, PreCrack};
use delam_core::oracle::Monolithic;
use std::collections::BTreeMap;

pub fn dcb_params() -> CohesiveParams {
    CohesiveParams {
        k1: 5e3,
        k2: 5e3,
        k3: 1e4,
        yc: 0.25,
        n: 1.0,
        alpha: 2.0,
        gamma1: 1.0,
        gamma2: 1.0,
    }
}

pub fn dcb_model(steps: usize, delta_max: f64) -> LaminateModel {
    let mut materials = BTreeMap::new();
    materials.insert(
        "carbon".into(),
        delam_core::material::Material {
            e1: 185_500.0,
            e2: 9_900.0,
            e3: 9_900.0,
            nu12: 0.34,
            nu13: 0.34,
            nu23: 0.5,
            g12: 6_160.0,
            g13: 6_160.0,
            g23: 3_080.0,
            rho: 1.0,
        },
    );
    LaminateModel {
        length: 24.0,
        time_steps: steps,
        plies: vec![
            Ply { thickness: 1.0, angle: 0.0, material: "carbon".into() },
            Ply { thickness: 1.0, angle: 0.0, material: "carbon".into() },
        ],
        materials,
        precracks: vec![PreCrack { interface: 0, from: 0.0, to: 7.5 }],
        boundary_conditions: vec![
            BoundaryCondition {
                edge: Edge::Right,
                kind: BcKind::Dirichlet,
                span: None,
                components: [true, true],
                value: [0.0, 0.0],
                profile: Default::default(),
            },
            BoundaryCondition {
                edge: Edge::Left,
                kind: BcKind::Dirichlet,
                span: Some([1.0, 2.0]),
                components: [false, true],
                value: [0.0, delta_max],
                profile: Default::default(),
            },
            BoundaryCondition {
                edge: Edge::Left,
                kind: BcKind::Dirichlet,
                span: Some([0.0, 1.0]),
                components: [false, true],
                value: [0.0, -delta_max],
                profile: Default::default(),
            },
        ],
        point_loads: vec![],
        body_force: None,
        perfect_bond: false,
    }
}

/// Cohesive profile of the substructured state, ordered like the oracle's:
/// (x, tangential traction, normal traction, damage) per quadrature point.
pub fn latin_cohesive_profile(state: &LatinRunState) -> Vec<(f64, f64, f64, f64)> {
    let mut ifaces: Vec<usize> = state
        .decomp
        .interfaces
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind == InterfaceKind::Cohesive)
        .map(|(i, _)| i)
        .collect();
    ifaces.sort_by(|&a, &b| {
        let fa = &state.decomp.interfaces[a];
        let fb = &state.decomp.interfaces[b];
        let ka = (fa.sides[0].sub, fa.qpoints[0].pos.x);
        let kb = (fb.sides[0].sub, fb.qpoints[0].pos.x);
        // Order by ply line (lower substructure ply) then x.
        let pa = state.decomp.substructures[ka.0].ply;
        let pb = state.decomp.substructures[kb.0].ply;
        (pa, ka.1).partial_cmp(&(pb, kb.1)).unwrap()
    });
    let mut out = Vec::new();
    for i in ifaces {
        let iface = &state.decomp.interfaces[i];
        let delam_core::driver::IfaceState::Cohesive { working, .. } = &state.states[i] else {
            continue;
        };
        for (q, qp) in iface.qpoints.iter().enumerate() {
            let f = state.fields[i][0].f[q];
            out.push((
                qp.pos.x,
                f.dot(&qp.tangent),
                f.dot(&qp.normal),
                working[q].d,
            ));
        }
    }
    out
}

fn l2_gap(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), wq)| wq * (x - y) * (x - y))
        .sum();
    let den: f64 = b.iter().zip(w).map(|(y, wq)| wq * y * y).sum();
    if den > 1e-16 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

#[test]
fn dcb_history_matches_monolithic_cohesive_oracle() {
    let steps = 10;
    let model = dcb_model(steps, 0.14);
    let decomp = build_decomposition(&model, 48, 2, 6).unwrap();
    let options = SolverOptions {
        tol: 1e-6,
        max_iters: 3000,
        policy: SdPolicy::Adaptive,
        update_period: 10,
        timing: false,
        ..Default::default()
    };
    let mut state = LatinRunState::new(decomp, options, dcb_params()).unwrap();
    let mut mono = Monolithic::build(&model, 48, 2, dcb_params(), 50_000).unwrap();

    let mut max_traction_gap: f64 = 0.0;
    let mut max_damage_gap: f64 = 0.0;
    let mut widest_zone = 0usize;
    let mut final_d = 0.0f64;
    for step in 1..=steps {
        state.run_time_step(step).unwrap();
        let sol = mono.solve_step(step).unwrap();
        let latin = latin_cohesive_profile(&state);
        assert_eq!(latin.len(), sol.cohesive.len(), "profile layouts must match");
        let w: Vec<f64> = vec![1.0; latin.len()];
        for (l, o) in latin.iter().zip(&sol.cohesive) {
            assert!((l.0 - o.0).abs() < 1e-9, "qp positions differ: {} vs {}", l.0, o.0);
        }
        let tn_l: Vec<f64> = latin.iter().map(|p| p.2).collect();
        let tn_o: Vec<f64> = sol.cohesive.iter().map(|p| p.2).collect();
        let d_l: Vec<f64> = latin.iter().map(|p| p.3).collect();
        let d_o: Vec<f64> = sol.cohesive.iter().map(|p| p.3).collect();
        max_traction_gap = max_traction_gap.max(l2_gap(&tn_l, &tn_o, &w));
        max_damage_gap = max_damage_gap.max(l2_gap(&d_l, &d_o, &w));
        let zone = d_l.iter().filter(|&&d| d > 0.0 && d < 1.0).count();
        widest_zone = widest_zone.max(zone);
        final_d = final_d.max(d_l.iter().cloned().fold(0.0, f64::max));
    }
    assert!(final_d >= 1.0, "the crack must propagate during the history");
    // Process-zone resolution: at least four elements (eight points).
    assert!(widest_zone >= 8, "process zone too narrow: {widest_zone} points");
    assert!(max_traction_gap < 0.01, "traction gap {max_traction_gap:.3e}");
    assert!(max_damage_gap < 0.01, "damage gap {max_damage_gap:.3e}");
}
