use delam_core::interface::CohesiveParams;
use delam_core::model::{BcKind, BoundaryCondition, Edge, LaminateModel, Ply, PreCrack};
use delam_core::oracle::Monolithic;
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
    let mut mono = Monolithic::build(&model, 96, 2, params, 50_000).unwrap();
    for step in 1..=12 {
        match mono.solve_step(step) {
            Ok(sol) => {
                let failed = sol.cohesive.iter().filter(|c| c.3 >= 1.0).count();
                let dmax = sol.cohesive.iter().map(|c| c.3).fold(0.0, f64::max);
                println!("step {step}: dmax {dmax:.3} failed {failed}");
            }
            Err(e) => { println!("step {step} FAILED: {e}"); break; }
        }
    }
}
