//! Nonlinear relocalization around delamination fronts.
//!
//! When a front is active, a box of substructures around it is extracted and
//! solved by the same two-stage iteration restricted to the box, with frozen
//! Robin data on the cut interfaces. The frozen data includes the current
//! macro multiplier, so the box boundary conditions satisfy the macro
//! equilibrium of the surrounding structure. The box only refines the
//! interior state; it is an accelerator, not a correctness requirement, so a
//! non-converged box falls back to plain sweeps with a warning flag.

use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use crate::driver::{local_stage_interface, IfaceState, LatinRunState, RelocOptions};
use crate::error::Result;
use crate::fem::apply_k;
use crate::interface::ContactStatus;
use crate::macroscale::MACRO_DIM;
use crate::mesh::{Decomposition, InterfaceKind};

const FRONT_D_LO: f64 = 0.01;

/// Substructures adjacent to active delamination front elements.
pub fn detect_front(state: &LatinRunState) -> Vec<usize> {
    let mut subs = Vec::new();
    for (i, iface) in state.decomp.interfaces.iter().enumerate() {
        if iface.kind != InterfaceKind::Cohesive {
            continue;
        }
        let IfaceState::Cohesive { committed, working, .. } = &state.states[i] else {
            continue;
        };
        let n_edges = iface.n_qp() / 2;
        let mut active = false;
        for e in 0..n_edges {
            for q in [2 * e, 2 * e + 1] {
                let d = working[q].d;
                let process_zone = d > FRONT_D_LO && d < 1.0;
                let failed_now = committed[q].d < 1.0 && d >= 1.0;
                if process_zone || failed_now {
                    active = true;
                }
            }
        }
        if active {
            for side in &iface.sides {
                subs.push(side.sub);
            }
        }
    }
    subs.sort_unstable();
    subs.dedup();
    subs
}

#[derive(Debug, Clone)]
pub struct RelocBox {
    pub subs: Vec<usize>,
    pub in_box: Vec<bool>,
    /// Interfaces whose every side lies in the box (boundary interfaces of
    /// box substructures included).
    pub internal: Vec<usize>,
    /// Interior interfaces cut by the box boundary: (interface, box side).
    pub cut: Vec<(usize, usize)>,
}

/// Breadth-first expansion of the front substructure set by whole
/// substructure layers. Overlapping fronts merge into a single box.
pub fn build_box(decomp: &Decomposition, front: &[usize], radius_layers: usize) -> RelocBox {
    let n = decomp.substructures.len();
    let mut in_box = vec![false; n];
    for &s in front {
        in_box[s] = true;
    }
    for _ in 0..radius_layers {
        let mut grow = Vec::new();
        for iface in &decomp.interfaces {
            if iface.sides.len() == 2 {
                let (a, b) = (iface.sides[0].sub, iface.sides[1].sub);
                if in_box[a] != in_box[b] {
                    grow.push(if in_box[a] { b } else { a });
                }
            }
        }
        for s in grow {
            in_box[s] = true;
        }
    }
    let subs: Vec<usize> = (0..n).filter(|&s| in_box[s]).collect();
    let mut internal = Vec::new();
    let mut cut = Vec::new();
    for (i, iface) in decomp.interfaces.iter().enumerate() {
        let inside: Vec<bool> = iface.sides.iter().map(|s| in_box[s.sub]).collect();
        if inside.iter().all(|&b| b) {
            internal.push(i);
        } else if inside.iter().any(|&b| b) {
            let side = if inside[0] { 0 } else { 1 };
            cut.push((i, side));
        }
    }
    RelocBox { subs, in_box, internal, cut }
}

pub struct BoxReport {
    pub sweeps: usize,
    pub converged: bool,
    pub work: usize,
}

/// Run the restricted iteration on the box until its own error indicator
/// falls below `opts.tol` or `opts.max_sweeps` is reached.
pub fn solve_box(state: &mut LatinRunState, rbox: &RelocBox, opts: &RelocOptions) -> Result<BoxReport> {
    let is_internal = {
        let mut v = vec![false; state.decomp.interfaces.len()];
        for &i in &rbox.internal {
            v[i] = true;
        }
        v
    };

    // Frozen Robin data of cut sides: Fhat + K(What + WtildeM).
    let mut frozen: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(rbox.cut.len());
    for &(i, sidx) in &rbox.cut {
        let iface = &state.decomp.interfaces[i];
        let sf = &state.fields[i][sidx];
        let sk = &state.sdirs.sides[i][sidx];
        let wt = state.bases[i].field(&state.wtilde[i]);
        let sum: Vec<Vector2<f64>> = sf.w_hat.iter().zip(wt.iter()).map(|(a, b)| a + b).collect();
        let kw = apply_k(sk, &iface.qpoints, &state.bases[i], &sum);
        frozen.push(
            sf.f_hat
                .iter()
                .zip(kw.iter())
                .map(|(f, k)| f + k)
                .collect(),
        );
    }
    let frozen_of = |iface: usize, sidx: usize| -> Option<&Vec<Vector2<f64>>> {
        rbox.cut
            .iter()
            .position(|&(i, s)| i == iface && s == sidx)
            .map(|p| &frozen[p])
    };

    // Local macro numbering over internal interfaces with global unknowns.
    let mut local_off = vec![None; state.decomp.interfaces.len()];
    let mut n_local = 0;
    for &i in &rbox.internal {
        if state.map.offset[i].is_some() {
            local_off[i] = Some(n_local);
            n_local += MACRO_DIM;
        }
    }

    // Local macro operator from the cached homogenized blocks.
    let mut lm: DMatrix<f64> = DMatrix::zeros(n_local, n_local);
    for &s in &rbox.subs {
        let h = state.homog[s].as_ref().expect("homogenized data");
        let fem = &state.fems[s];
        for (bi, &pos_i) in h.side_pos.iter().enumerate() {
            let Some(oi) = local_off[fem.sides[pos_i].iface] else { continue };
            for (bj, &pos_j) in h.side_pos.iter().enumerate() {
                let Some(oj) = local_off[fem.sides[pos_j].iface] else { continue };
                for a in 0..MACRO_DIM {
                    for b in 0..MACRO_DIM {
                        lm[(oi + a, oj + b)] +=
                            h.block[(MACRO_DIM * bi + a, MACRO_DIM * bj + b)];
                    }
                }
            }
        }
    }
    let lm_lu = lm.clone().lu();

    let (step, n_steps) = (state.step, state.decomp.model.time_steps);
    let mut sweeps = 0;
    let mut converged = false;
    let mut wtilde_box: Vec<[f64; MACRO_DIM]> = vec![[0.0; MACRO_DIM]; state.decomp.interfaces.len()];
    for _sweep in 0..opts.max_sweeps {
        sweeps += 1;
        // Multiplier-free solves and macro residual rows.
        let pieces: Vec<(DVector<f64>, Vec<(usize, [f64; MACRO_DIM])>)> = rbox
            .subs
            .par_iter()
            .map(|&s| {
                let fem = &state.fems[s];
                let robin = state.robins[s].as_ref().expect("robin");
                let mut rhs = fem.external_load(step, n_steps);
                for side in &fem.sides {
                    let iface = &state.decomp.interfaces[side.iface];
                    let g_own;
                    let g: &Vec<Vector2<f64>> =
                        if let Some(gf) = frozen_of(side.iface, side.side_idx) {
                            gf
                        } else {
                            let sf = &state.fields[side.iface][side.side_idx];
                            let sk = &state.sdirs.sides[side.iface][side.side_idx];
                            let kw = apply_k(sk, &iface.qpoints, &state.bases[side.iface], &sf.w_hat);
                            g_own = sf
                                .f_hat
                                .iter()
                                .zip(kw.iter())
                                .map(|(f, k)| f + k)
                                .collect();
                            &g_own
                        };
                    fem.scatter(g, side, &iface.qpoints, &mut rhs);
                }
                let u0 = fem.solve(robin, &rhs);
                let mut rows = Vec::new();
                for side in &fem.sides {
                    if local_off[side.iface].is_none() {
                        continue;
                    }
                    let iface = &state.decomp.interfaces[side.iface];
                    let sk = &state.sdirs.sides[side.iface][side.side_idx];
                    let sf = &state.fields[side.iface][side.side_idx];
                    let tr = fem.trace(&u0, side, &iface.qpoints);
                    let diff: Vec<Vector2<f64>> = sf
                        .w_hat
                        .iter()
                        .zip(tr.iter())
                        .map(|(wh, t)| wh - t)
                        .collect();
                    let kdiff = apply_k(sk, &iface.qpoints, &state.bases[side.iface], &diff);
                    let fvec: Vec<Vector2<f64>> = sf
                        .f_hat
                        .iter()
                        .zip(kdiff.iter())
                        .map(|(f, k)| f + k)
                        .collect();
                    let w: Vec<f64> = iface.qpoints.iter().map(|q| q.weight).collect();
                    rows.push((side.iface, state.bases[side.iface].coeffs(&w, &fvec)));
                }
                (u0, rows)
            })
            .collect();

        let mut rhs_m = DVector::zeros(n_local);
        for (_, rows) in &pieces {
            for (iface, c) in rows {
                let off = local_off[*iface].expect("local macro dof");
                for k in 0..MACRO_DIM {
                    rhs_m[off + k] -= c[k];
                }
            }
        }
        let sol = if n_local > 0 {
            lm_lu.solve(&rhs_m).ok_or_else(|| {
                crate::error::DelamError::Singular("box macro problem".into())
            })?
        } else {
            DVector::zeros(0)
        };
        for &i in &rbox.internal {
            if let Some(off) = local_off[i] {
                for k in 0..MACRO_DIM {
                    wtilde_box[i][k] = sol[off + k];
                }
            }
        }

        // Global solves in the box.
        type SideOut = (usize, usize, Vec<Vector2<f64>>, Vec<Vector2<f64>>);
        let results: Result<Vec<(DVector<f64>, Vec<SideOut>)>> = rbox
            .subs
            .par_iter()
            .zip(pieces.par_iter())
            .map(|(&s, (u0, _))| {
                let fem = &state.fems[s];
                let robin = state.robins[s].as_ref().expect("robin");
                let u = if state.options.nonlinear {
                    let mut rhs = fem.external_load(step, n_steps);
                    for side in &fem.sides {
                        let iface = &state.decomp.interfaces[side.iface];
                        let g_own;
                        let g: &Vec<Vector2<f64>> =
                            if let Some(gf) = frozen_of(side.iface, side.side_idx) {
                                gf
                            } else {
                                let sf = &state.fields[side.iface][side.side_idx];
                                let sk = &state.sdirs.sides[side.iface][side.side_idx];
                                let wt = state.bases[side.iface].field(&wtilde_box[side.iface]);
                                let sum: Vec<Vector2<f64>> = sf
                                    .w_hat
                                    .iter()
                                    .zip(wt.iter())
                                    .map(|(a, b)| a + b)
                                    .collect();
                                let kw =
                                    apply_k(sk, &iface.qpoints, &state.bases[side.iface], &sum);
                                g_own = sf
                                    .f_hat
                                    .iter()
                                    .zip(kw.iter())
                                    .map(|(f, k)| f + k)
                                    .collect();
                                &g_own
                            };
                        fem.scatter(g, side, &iface.qpoints, &mut rhs);
                    }
                    let (u, _) = fem.newton_solve(
                        robin,
                        &rhs,
                        &state.us[s],
                        state.options.newton_tol,
                        state.options.newton_max_iters,
                    )?;
                    u
                } else {
                    let mut u = u0.clone();
                    let h = state.homog[s].as_ref().expect("homog");
                    for (vi, &pos) in h.side_pos.iter().enumerate() {
                        let iface_id = fem.sides[pos].iface;
                        if local_off[iface_id].is_none() {
                            continue;
                        }
                        let c = &wtilde_box[iface_id];
                        for k in 0..MACRO_DIM {
                            if c[k] != 0.0 {
                                u += c[k] * &h.vs[vi][k];
                            }
                        }
                    }
                    u
                };
                let mut outs = Vec::new();
                for side in &fem.sides {
                    if !is_internal[side.iface] {
                        continue;
                    }
                    let iface = &state.decomp.interfaces[side.iface];
                    let sk = &state.sdirs.sides[side.iface][side.side_idx];
                    let sf = &state.fields[side.iface][side.side_idx];
                    let tr = fem.trace(&u, side, &iface.qpoints);
                    let wt = state.bases[side.iface].field(&wtilde_box[side.iface]);
                    let diff: Vec<Vector2<f64>> = tr
                        .iter()
                        .zip(sf.w_hat.iter().zip(wt.iter()))
                        .map(|(t, (wh, wm))| t - wh - wm)
                        .collect();
                    let kdiff = apply_k(sk, &iface.qpoints, &state.bases[side.iface], &diff);
                    let f: Vec<Vector2<f64>> = sf
                        .f_hat
                        .iter()
                        .zip(kdiff.iter())
                        .map(|(fh, k)| fh - k)
                        .collect();
                    outs.push((side.iface, side.side_idx, tr, f));
                }
                Ok((u, outs))
            })
            .collect();

        for (&s, (u, outs)) in rbox.subs.iter().zip(results?) {
            state.us[s] = u;
            for (iface, sidx, w, f) in outs {
                state.fields[iface][sidx].w = w;
                state.fields[iface][sidx].f = f;
            }
        }

        // Local stage on internal interfaces.
        let mu = state.options.relaxation;
        let outputs: Vec<(usize, _, Option<IfaceState>)> = rbox
            .internal
            .par_iter()
            .map(|&i| {
                let (hats, st) = local_stage_interface(
                    &state.decomp.interfaces[i],
                    &state.fields[i],
                    &state.sdirs.sides[i],
                    &state.states[i],
                    &state.cohesive,
                    step,
                    n_steps,
                );
                (i, hats, st)
            })
            .collect();
        for (i, hats, st) in outputs {
            for (sidx, (w_hat, f_hat)) in hats.into_iter().enumerate() {
                let sf = &mut state.fields[i][sidx];
                for q in 0..sf.w_hat.len() {
                    sf.w_hat[q] = mu * w_hat[q] + (1.0 - mu) * sf.w_hat[q];
                    sf.f_hat[q] = mu * f_hat[q] + (1.0 - mu) * sf.f_hat[q];
                }
            }
            if let Some(s) = st {
                state.states[i] = s;
            }
        }

        // Box error indicator over internal interfaces.
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in &rbox.internal {
            let iface = &state.decomp.interfaces[i];
            for (sidx, _) in iface.sides.iter().enumerate() {
                let sf = &state.fields[i][sidx];
                let sk = &state.sdirs.sides[i][sidx];
                for (q, qp) in iface.qpoints.iter().enumerate() {
                    let (kt, kn) = sk.k[q];
                    let dw = sf.w[q] - sf.w_hat[q];
                    let df = sf.f[q] - sf.f_hat[q];
                    let (dwt, dwn) = (dw.dot(&qp.tangent), dw.dot(&qp.normal));
                    let (dft, dfn) = (df.dot(&qp.tangent), df.dot(&qp.normal));
                    num += qp.weight
                        * (kt * dwt * dwt + kn * dwn * dwn + dft * dft / kt + dfn * dfn / kn);
                    let (wht, whn) = (sf.w_hat[q].dot(&qp.tangent), sf.w_hat[q].dot(&qp.normal));
                    let (fht, fhn) = (sf.f_hat[q].dot(&qp.tangent), sf.f_hat[q].dot(&qp.normal));
                    den += qp.weight
                        * (kt * wht * wht + kn * whn * whn + fht * fht / kt + fhn * fhn / kn);
                }
            }
        }
        let eta = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        if eta < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(BoxReport {
        sweeps,
        converged,
        work: sweeps * rbox.subs.len(),
    })
}

/// Driver hook: detect, box, solve. Returns work units spent (0 when no
/// front is active).
pub fn relocalize(state: &mut LatinRunState, opts: &RelocOptions) -> Result<usize> {
    let front = detect_front(state);
    if front.is_empty() {
        return Ok(0);
    }
    let rbox = build_box(&state.decomp, &front, opts.radius);
    // A box covering everything would just repeat the global sweep.
    if rbox.subs.len() == state.decomp.substructures.len() {
        return Ok(0);
    }
    let report = solve_box(state, &rbox, opts)?;
    Ok(report.work)
}

/// True when any contact-capable point of the state currently touches.
pub fn any_closed_contact(state: &LatinRunState) -> bool {
    state.states.iter().any(|st| match st {
        IfaceState::Contact { status } => status.iter().any(|s| *s == ContactStatus::Closed),
        IfaceState::Cohesive { status, working, .. } => status
            .iter()
            .zip(working)
            .any(|(s, w)| w.d >= 1.0 && *s == ContactStatus::Closed),
        IfaceState::None => false,
    })
}
