use delam_core::driver::{LatinRunState, SdPolicy, SolverOptions};
use delam_core::interface::CohesiveParams;
use delam_core::mesh::build_decomposition;
use delam_core::model::{BcKind, BoundaryCondition, Edge, LaminateModel, Ply, PreCrack};
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
            BoundaryCondition { edge: Edge::Left, kind: BcKind::Dirichlet, span: Some([1.0, 2.0]), components: [false, true], value: [0.0, delta_max], profile: Default::default() },
            BoundaryCondition { edge: Edge::Left, kind: BcKind::Dirichlet, span: Some([0.0, 1.0]), components: [false, true], value: [0.0, -delta_max], profile: Default::default() },
        ],
        point_loads: vec![], body_force: None, perfect_bond: false,
    }
}

fn main() {
    let params = CohesiveParams { k1: 5e3, k2: 5e3, k3: 1e4, yc: 0.25, n: 1.0, alpha: 2.0, gamma1: 1.0, gamma2: 1.0 };
    let steps: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(10);
    let dmax: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(0.14);
    let model = dcb_model(steps, dmax);
    let floor: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-2);
    let relax: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let nx: usize = std::env::args().nth(7).and_then(|s| s.parse().ok()).unwrap_or(48);
    let subnx: usize = std::env::args().nth(8).and_then(|s| s.parse().ok()).unwrap_or(6);
    let tol: f64 = std::env::args().nth(9).and_then(|s| s.parse().ok()).unwrap_or(1e-6);
    let decomp = build_decomposition(&model, nx, 2, subnx).unwrap();
    let radius: usize = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(0);
    let reloc = if radius > 0 { Some(delam_core::driver::RelocOptions { radius, tol: 1e-2, max_sweeps: 30 }) } else { None };
    let options = SolverOptions { tol, max_iters: 3000, policy: SdPolicy::Adaptive, update_period: std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(10), timing: false, sd_floor_frac: floor, relaxation: relax, reloc, ..Default::default() };
    let mut state = LatinRunState::new(decomp, options, params).unwrap();
    for step in 1..=steps {
        match state.run_time_step(step) {
            Ok(r) => {
                let mut dmax = 0.0f64;
                let mut failed = 0usize;
                for st in &state.states {
                    if let delam_core::driver::IfaceState::Cohesive { working, .. } = st {
                        for w in working { dmax = dmax.max(w.d); if w.d >= 1.0 { failed += 1; } }
                    }
                }
                let bw: usize = state.log.iters.iter().filter(|it| it.step == step).map(|it| it.box_work).sum();
                println!("step {step}: {} iters, eta {:.2e}, dmax {:.3}, failed_qp {}, box_work {}", r.iters, r.eta, dmax, failed, bw);
            }
            Err(e) => {
                println!("step {step} FAILED: {e}");
                for rec in state.log.iters.iter().rev().take(3).collect::<Vec<_>>().iter().rev() {
                    println!("  it {:4} eta {:.3e} cg {} refacts {}", rec.iter, rec.eta, rec.cg_iters, rec.refacts);
                }
                // Per-interface error contributions.
                let mut rows = Vec::new();
                for (i, iface) in state.decomp.interfaces.iter().enumerate() {
                    let mut num = 0.0;
                    for (sidx, _) in iface.sides.iter().enumerate() {
                        let sf = &state.fields[i][sidx];
                        let sk = &state.sdirs.sides[i][sidx];
                        for (q, qp) in iface.qpoints.iter().enumerate() {
                            let (kt, kn) = sk.k[q];
                            let dw = sf.w[q] - sf.w_hat[q];
                            let df = sf.f[q] - sf.f_hat[q];
                            let (dwt, dwn) = (dw.dot(&qp.tangent), dw.dot(&qp.normal));
                            let (dft, dfn) = (df.dot(&qp.tangent), df.dot(&qp.normal));
                            num += qp.weight * (kt*dwt*dwt + kn*dwn*dwn + dft*dft/kt + dfn*dfn/kn);
                        }
                    }
                    rows.push((num, i, format!("{:?} at ({:.1},{:.1})", iface.kind, iface.qpoints[0].pos.x, iface.qpoints[0].pos.y)));
                }
                rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                for (num, i, label) in rows.iter().take(4) {
                    println!("  iface {i:3} num {num:.3e}  {label}");
                }
                // Detail the worst interface.
                let i = rows[0].1;
                let iface = &state.decomp.interfaces[i];
                println!("  wtilde[{i}] = {:?}", state.wtilde[i]);
                for (sidx, _) in iface.sides.iter().enumerate() {
                    let sf = &state.fields[i][sidx];
                    let sk = &state.sdirs.sides[i][sidx];
                    let mut dw = 0.0f64; let mut df = 0.0f64; let mut wmax = 0.0f64; let mut fmax = 0.0f64;
                    for q in 0..iface.n_qp() {
                        dw = dw.max((sf.w[q] - sf.w_hat[q]).norm());
                        df = df.max((sf.f[q] - sf.f_hat[q]).norm());
                        wmax = wmax.max(sf.w[q].norm());
                        fmax = fmax.max(sf.f[q].norm());
                    }
                    println!("  side {sidx}: k0 {:?}  |W-Wh| {dw:.3e} |F-Fh| {df:.3e} |W| {wmax:.3e} |F| {fmax:.3e}", sk.k[0]);
                }
                break;
            }
        }
    }
}
