use delam_core::driver::{LatinRunState, SdPolicy, SolverOptions};
use delam_core::interface::CohesiveParams;
use delam_core::mesh::{build_decomposition, InterfaceKind};
use delam_core::model::{BcKind, BoundaryCondition, Edge, LaminateModel, Ply, PreCrack};
use delam_core::oracle::Monolithic;
use std::collections::BTreeMap;

fn dcb_model(steps: usize, delta_max: f64) -> LaminateModel {
    let mut materials = BTreeMap::new();
    materials.insert("carbon".into(), delam_core::material::Material {
        e1: 185_500.0, e2: 9_900.0, e3: 9_900.0, nu12: 0.34, nu13: 0.34, nu23: 0.5,
        g12: 6_160.0, g13: 6_160.0, g23: 3_080.0, rho: 1.0,
    });
    LaminateModel {
        length: 24.0, time_steps: steps,
        plies: vec![
            Ply { thickness: 1.0, angle: 0.0, material: "carbon".into() },
            Ply { thickness: 1.0, angle: 0.0, material: "carbon".into() },
        ],
        materials,
        precracks: vec![PreCrack { interface: 0, from: 0.0, to: 7.5 }],
        boundary_conditions: vec![
            BoundaryCondition { edge: Edge::Right, kind: BcKind::Dirichlet, span: None, components: [true, true], value: [0.0, 0.0], profile: Default::default() },
            BoundaryCondition { edge: Edge::Left, kind: BcKind::Dirichlet, span: Some([1.0, 2.0]), components: [false, true], value: [0.0, 0.14], profile: Default::default() },
            BoundaryCondition { edge: Edge::Left, kind: BcKind::Dirichlet, span: Some([0.0, 1.0]), components: [false, true], value: [0.0, -0.14], profile: Default::default() },
        ],
        point_loads: vec![], body_force: None, perfect_bond: false,
    }
}

fn main() {
    let params = CohesiveParams { k1: 5e3, k2: 5e3, k3: 1e4, yc: 0.25, n: 1.0, alpha: 2.0, gamma1: 1.0, gamma2: 1.0 };
    let model = dcb_model(10, 0.14);
    let decomp = build_decomposition(&model, 48, 2, 6).unwrap();
    let options = SolverOptions { tol: 1e-6, max_iters: 3000, policy: SdPolicy::Adaptive, update_period: 10, timing: false, sd_floor_frac: 1e-2, ..Default::default() };
    let mut state = LatinRunState::new(decomp, options, params).unwrap();
    let mut mono = Monolithic::build(&model, 48, 2, params, 50_000).unwrap();
    for step in 1..=10 {
        state.run_time_step(step).unwrap();
        let sol = mono.solve_step(step).unwrap();
        let mut rows = Vec::new();
        for (i, iface) in state.decomp.interfaces.iter().enumerate() {
            if iface.kind != InterfaceKind::Cohesive { continue; }
            let delam_core::driver::IfaceState::Cohesive { working, .. } = &state.states[i] else { continue };
            for (q, qp) in iface.qpoints.iter().enumerate() {
                let f = state.fields[i][0].f[q];
                rows.push((qp.pos.x, f.dot(&qp.tangent), f.dot(&qp.normal), working[q].d));
            }
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut orows = sol.cohesive.clone();
        orows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let l2 = |f: &dyn Fn(usize) -> (f64, f64)| -> f64 {
            let mut num = 0.0; let mut den = 0.0;
            for i in 0..rows.len() { let (a, b) = f(i); num += (a-b)*(a-b); den += b*b; }
            if den > 1e-16 { (num/den).sqrt() } else { num.sqrt() }
        };
        let tgap = l2(&|i| (rows[i].2, orows[i].2));
        let dgap = l2(&|i| (rows[i].3, orows[i].3));
        let dl = rows.iter().filter(|r| r.3 >= 1.0).count();
        let dm = orows.iter().filter(|r| r.3 >= 1.0).count();
        println!("step {step}: tgap {tgap:.3e} dgap {dgap:.3e} failed latin {dl} oracle {dm}");
    }
    let sol = mono.solve_step(10).unwrap(); let _ = sol;
    state.run_time_step(10).ok();
    // LaTIn profile
    let mut rows = Vec::new();
    for (i, iface) in state.decomp.interfaces.iter().enumerate() {
        if iface.kind != InterfaceKind::Cohesive { continue; }
        let delam_core::driver::IfaceState::Cohesive { working, .. } = &state.states[i] else { continue };
        for (q, qp) in iface.qpoints.iter().enumerate() {
            let f = state.fields[i][0].f[q];
            rows.push((qp.pos.x, f.dot(&qp.tangent), f.dot(&qp.normal), working[q].d));
        }
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    println!("latin ({} pts):", rows.len());
    for r in rows.iter().take(12) { println!("  x {:6.3}  tt {:9.4}  tn {:9.4}  d {:.4}", r.0, r.1, r.2, r.3); }
    println!("oracle ({} pts):", sol.cohesive.len());
    let mut orows = sol.cohesive.clone();
    orows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for r in orows.iter().take(12) { println!("  x {:6.3}  tt {:9.4}  tn {:9.4}  d {:.4}", r.0, r.1, r.2, r.3); }
}
