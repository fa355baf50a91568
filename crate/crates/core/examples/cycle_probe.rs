use delam_core::driver::{IfaceState, LatinRunState, SdPolicy, SolverOptions};
use delam_core::interface::CohesiveParams;
use delam_core::mesh::build_decomposition;
use delam_core::model::{BcKind, BoundaryCondition, Edge, LaminateModel, Ply, PreCrack};
use std::collections::BTreeMap;

fn main() {
    let mut materials = BTreeMap::new();
    materials.insert("carbon".into(), delam_core::material::Material {
        e1: 185_500.0, e2: 9_900.0, e3: 9_900.0, nu12: 0.34, nu13: 0.34, nu23: 0.5,
        g12: 6_160.0, g13: 6_160.0, g23: 3_080.0, rho: 1.0,
    });
    let model = LaminateModel {
        length: 24.0, time_steps: 12,
        plies: vec![
            Ply { thickness: 1.0, angle: 0.0, material: "carbon".into() },
            Ply { thickness: 1.0, angle: 0.0, material: "carbon".into() },
        ],
        materials,
        precracks: vec![PreCrack { interface: 0, from: 0.0, to: 7.5 }],
        boundary_conditions: vec![
            BoundaryCondition { edge: Edge::Right, kind: BcKind::Dirichlet, span: None, components: [true, true], value: [0.0, 0.0], profile: Default::default() },
            BoundaryCondition { edge: Edge::Left, kind: BcKind::Dirichlet, span: Some([1.0, 2.0]), components: [false, true], value: [0.0, 0.30], profile: Default::default() },
            BoundaryCondition { edge: Edge::Left, kind: BcKind::Dirichlet, span: Some([0.0, 1.0]), components: [false, true], value: [0.0, -0.30], profile: Default::default() },
        ],
        point_loads: vec![], body_force: None, perfect_bond: false,
    };
    let params = CohesiveParams { k1: 5e3, k2: 5e3, k3: 1e4, yc: 0.25, n: 1.0, alpha: 2.0, gamma1: 1.0, gamma2: 1.0 };
    let decomp = build_decomposition(&model, 96, 2, 8).unwrap();
    let options = SolverOptions { tol: 1e-4, max_iters: 3000, policy: SdPolicy::Adaptive, update_period: 10, timing: false, sd_floor_frac: 1e-2, ..Default::default() };
    let mut state = LatinRunState::new(decomp, options, params).unwrap();
    for step in 1..=4 {
        state.run_time_step(step).unwrap();
    }
    // Manual step 5 with plateau tracing.
    state.step = 5;
    state.iter_in_step = 0;
    state.seed_boundary();
    let mut moves = 0;
    for it in 1..=1200 {
        let eta = state.latin_iterate().unwrap();
        if eta < 1e-4 && state.max_freeze_gap() < 1e-4 {
            println!("converged at iter {it}");
            break;
        }
        if eta < 1e-5 {
            // Find worst point before the move.
            let mut worst = (0.0f64, 0usize, 0usize, 0.0f64, 0.0f64, 0.0f64);
            for (i, st) in state.states.iter().enumerate() {
                if let IfaceState::Cohesive { working, freeze, move_scale, .. } = st {
                    for q in 0..working.len() {
                        let mv = (working[q].d - freeze[q]).abs();
                        if mv > worst.0 {
                            worst = (mv, i, q, working[q].d, freeze[q], move_scale[q]);
                        }
                    }
                }
            }
            moves += 1;
            if moves % 5 == 0 || moves < 30 {
                println!("move {moves} at it {it}: iface {} q {}: target {:.5} freeze {:.5} scale {:.4} |mv| {:.3e}", worst.1, worst.2, worst.3, worst.4, worst.5, worst.0);
            }
            state.apply_damage_move();
        }
        if it % 10 == 0 {
            state.update_search_directions();
        }
    }
}
