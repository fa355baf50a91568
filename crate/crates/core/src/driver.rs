//! Two-stage iteration driver over a time-step sequence.
//!
//! One sweep solves the homogenized macro admissibility problem, then the
//! independent Robin-augmented substructure problems (Newton when geometric
//! nonlinearity is on), then the pointwise local stage, and finally evaluates
//! the error indicator. Search directions are initialized per policy and
//! adapted to the interface state every `update_period` iterations; only
//! interfaces whose directions moved beyond a relative threshold trigger
//! substructure refactorization and re-homogenization.
//!
//! Parallel maps run over substructures and interfaces; every reduction is a
//! fixed-order serial fold over indexed results, so runs are bitwise
//! reproducible at any thread count.

use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use crate::error::{DelamError, Result};
use crate::fem::{self, apply_k, RobinOperator, SideK, SubdomainFem};
use crate::interface::{
    local_stage_cohesive, local_stage_contact, local_stage_dirichlet,
    local_stage_neumann, local_stage_perfect, CohesiveParams, CohesivePointState, ContactStatus,
    SidePoint,
};
use crate::macroscale::{CondensedSolver, MacroBasis, MacroDofMap, MacroProblem, MACRO_DIM};
use crate::mesh::{Decomposition, Interface, InterfaceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdPolicy {
    Isotropic,
    Anisotropic,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactInit {
    Open,
    Closed,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RelocOptions {
    #[serde(default = "default_reloc_radius")]
    pub radius: usize,
    #[serde(default = "default_reloc_tol")]
    pub tol: f64,
    #[serde(default = "default_reloc_sweeps")]
    pub max_sweeps: usize,
}

fn default_reloc_radius() -> usize {
    2
}
fn default_reloc_tol() -> f64 {
    1e-2
}
fn default_reloc_sweeps() -> usize {
    30
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Relaxation of the local-stage output, the usual stabilization of the
    /// two-stage scheme.
    pub relaxation: f64,
    pub nonlinear: bool,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub policy: SdPolicy,
    /// Adapt search directions every this many iterations; 0 disables updates.
    pub update_period: usize,
    /// Relative change gating refactorization.
    pub update_threshold: f64,
    /// Solve the macro problem through the condensed third scale.
    pub macro_condensed: bool,
    pub macro_rel_tol: f64,
    pub macro_max_iters: usize,
    /// Give Neumann boundary interfaces macro unknowns (interior interfaces
    /// always carry them).
    pub macro_boundary_neumann: bool,
    /// Macro part of the search direction on perfect interfaces, as a factor
    /// over the micro part.
    pub macro_stiff_factor: f64,
    pub reloc: Option<RelocOptions>,
    pub contact_init: ContactInit,
    /// Open / fully-damaged floor as a fraction of the virgin stiffness.
    pub sd_floor_frac: f64,
    /// Closed-contact search direction as a factor over the virgin stiffness.
    pub k_closed_factor: f64,
    pub timing: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-4,
            max_iters: 1000,
            relaxation: 0.8,
            nonlinear: false,
            newton_tol: 1e-8,
            newton_max_iters: 20,
            policy: SdPolicy::Adaptive,
            update_period: 10,
            update_threshold: 0.1,
            macro_condensed: false,
            macro_rel_tol: 0.1,
            macro_max_iters: 200,
            macro_boundary_neumann: true,
            macro_stiff_factor: 1e3,
            reloc: None,
            contact_init: ContactInit::Open,
            sd_floor_frac: 1e-4,
            k_closed_factor: 100.0,
            timing: true,
        }
    }
}

/// Interface fields of one side at quadrature points, global components.
#[derive(Debug, Clone, Default)]
pub struct SideFields {
    pub w: Vec<Vector2<f64>>,
    pub f: Vec<Vector2<f64>>,
    pub w_hat: Vec<Vector2<f64>>,
    pub f_hat: Vec<Vector2<f64>>,
}

/// Constitutive state of one interface.
#[derive(Debug, Clone)]
pub enum IfaceState {
    Cohesive {
        committed: Vec<CohesivePointState>,
        /// Running history chained through every local stage of the step.
        working: Vec<CohesivePointState>,
        status: Vec<ContactStatus>,
    },
    Contact {
        status: Vec<ContactStatus>,
    },
    None,
}

#[derive(Debug, Clone)]
pub struct SearchDirections {
    /// Per interface, per side.
    pub sides: Vec<Vec<SideK>>,
    pub version: u64,
}

#[derive(Debug, Clone)]
pub struct IterRecord {
    pub step: usize,
    pub iter: usize,
    pub eta: f64,
    pub cg_iters: usize,
    pub refacts: usize,
    /// Substructure solves spent in relocalization boxes this iteration.
    pub box_work: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub iters: usize,
    pub eta: f64,
    pub damage_grew: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceLog {
    pub iters: Vec<IterRecord>,
    pub steps: Vec<StepRecord>,
    pub total_factorizations: usize,
    pub refact_events: Vec<usize>,
}

/// Homogenized response of one substructure for the current search
/// directions: the Robin solutions for each macro load and the condensed
/// macro block.
pub struct HomogData {
    /// Positions (in fem.sides order) of sides carrying macro unknowns.
    pub side_pos: Vec<usize>,
    /// Global macro dof (4 per entry of side_pos).
    pub dofs: Vec<usize>,
    /// Robin responses, one per (side, basis vector).
    pub vs: Vec<[DVector<f64>; MACRO_DIM]>,
    /// Homogenized block over `dofs`.
    pub block: DMatrix<f64>,
}

pub struct LatinRunState {
    pub decomp: Decomposition,
    pub options: SolverOptions,
    pub cohesive: CohesiveParams,
    pub fems: Vec<SubdomainFem>,
    pub bases: Vec<MacroBasis>,
    pub robins: Vec<Option<RobinOperator>>,
    pub homog: Vec<Option<HomogData>>,
    pub sdirs: SearchDirections,
    pub fields: Vec<Vec<SideFields>>,
    pub states: Vec<IfaceState>,
    /// Current substructure displacements (warm starts, output).
    pub us: Vec<DVector<f64>>,
    /// Macro multiplier coefficients per interface.
    pub wtilde: Vec<[f64; MACRO_DIM]>,
    pub map: MacroDofMap,
    pub condensed: Option<CondensedSolver>,
    pub log: ConvergenceLog,
    pub step: usize,
    pub iter_in_step: usize,
    /// Work counter fed by relocalization (substructure solves in boxes).
    pub box_work_this_iter: usize,
}

impl LatinRunState {
    pub fn new(
        decomp: Decomposition,
        options: SolverOptions,
        cohesive: CohesiveParams,
    ) -> Result<Self> {
        cohesive.validate()?;
        let bases: Result<Vec<MacroBasis>> = decomp
            .interfaces
            .iter()
            .map(|f| MacroBasis::build(&f.qpoints, f.length))
            .collect();
        let bases = bases?;
        let mut fems: Vec<SubdomainFem> = (0..decomp.substructures.len())
            .into_par_iter()
            .map(|s| fem::assemble_linear(&decomp, s))
            .collect();
        fem::resolve_point_loads(&decomp, &mut fems);
        let sdirs = init_search_directions(&decomp, &options, &cohesive);
        let fields = decomp
            .interfaces
            .iter()
            .map(|f| {
                f.sides
                    .iter()
                    .map(|_| SideFields {
                        w: vec![Vector2::zeros(); f.n_qp()],
                        f: vec![Vector2::zeros(); f.n_qp()],
                        w_hat: vec![Vector2::zeros(); f.n_qp()],
                        f_hat: vec![Vector2::zeros(); f.n_qp()],
                    })
                    .collect()
            })
            .collect();
        let states = decomp
            .interfaces
            .iter()
            .map(|f| match f.kind {
                InterfaceKind::Cohesive => IfaceState::Cohesive {
                    committed: vec![CohesivePointState::default(); f.n_qp()],
                    working: vec![CohesivePointState::default(); f.n_qp()],
                    status: vec![ContactStatus::Open; f.n_qp()],
                },
                InterfaceKind::Contact => IfaceState::Contact {
                    status: vec![
                        match options.contact_init {
                            ContactInit::Open => ContactStatus::Open,
                            ContactInit::Closed => ContactStatus::Closed,
                        };
                        f.n_qp()
                    ],
                },
                _ => IfaceState::None,
            })
            .collect();
        let us = fems.iter().map(|f| DVector::zeros(f.n_dof)).collect();
        let map = MacroDofMap::build(&decomp, options.macro_boundary_neumann);
        let wtilde = vec![[0.0; MACRO_DIM]; decomp.interfaces.len()];
        Ok(LatinRunState {
            decomp,
            options,
            cohesive,
            fems,
            bases,
            robins: Vec::new(),
            homog: Vec::new(),
            sdirs,
            fields,
            states,
            us,
            wtilde,
            map,
            condensed: None,
            log: ConvergenceLog::default(),
            step: 1,
            iter_in_step: 0,
            box_work_this_iter: 0,
        })
    }

    fn side_k<'a>(sdirs: &'a SearchDirections, iface: usize, side: usize) -> &'a SideK {
        &sdirs.sides[iface][side]
    }

    /// Factor stale Robin operators and refresh homogenized data; returns the
    /// number of factorizations performed.
    pub fn ensure_operators(&mut self) -> Result<usize> {
        let n_subs = self.fems.len();
        if self.robins.is_empty() {
            self.robins = (0..n_subs).map(|_| None).collect();
            self.homog = (0..n_subs).map(|_| None).collect();
        }
        let version = self.sdirs.version;
        let stale: Vec<usize> = (0..n_subs)
            .filter(|&s| match &self.robins[s] {
                None => true,
                Some(r) => r.version != version,
            })
            .collect();
        if stale.is_empty() {
            return Ok(0);
        }
        let decomp = &self.decomp;
        let bases = &self.bases;
        let sdirs = &self.sdirs;
        let new_ops: Result<Vec<(usize, RobinOperator, HomogData)>> = stale
            .par_iter()
            .map(|&s| {
                let fem = &self.fems[s];
                let ks: Vec<&SideK> = fem
                    .sides
                    .iter()
                    .map(|t| Self::side_k(sdirs, t.iface, t.side_idx))
                    .collect();
                let robin = fem.robin_factorize(&ks, decomp, bases, version)?;
                let homog = homogenize_substructure(fem, &robin, decomp, bases, sdirs, &self.map)?;
                Ok((s, robin, homog))
            })
            .collect();
        let new_ops = new_ops?;
        let count = new_ops.len();
        for (s, robin, homog) in new_ops {
            self.robins[s] = Some(robin);
            self.homog[s] = Some(homog);
        }
        self.log.total_factorizations += count;
        if self.options.macro_condensed {
            let blocks: Vec<(Vec<usize>, DMatrix<f64>)> = self
                .homog
                .iter()
                .map(|h| {
                    let h = h.as_ref().expect("homogenized data");
                    (h.dofs.clone(), h.block.clone())
                })
                .collect();
            self.condensed = Some(CondensedSolver::build(&self.decomp, &self.map, &blocks)?);
        }
        Ok(count)
    }

    /// Seed boundary hat fields with the prescribed data of the current step.
    pub fn seed_boundary(&mut self) {
        let (step, n_steps) = (self.step, self.decomp.model.time_steps);
        for (i, iface) in self.decomp.interfaces.iter().enumerate() {
            let Some(bc) = &iface.bc else { continue };
            let factor = bc.profile.factor(step, n_steps);
            let target = Vector2::new(bc.value[0] * factor, bc.value[1] * factor);
            let fields = &mut self.fields[i][0];
            match iface.kind {
                InterfaceKind::BoundaryDirichlet => {
                    for (q, w) in fields.w_hat.iter_mut().enumerate() {
                        let _ = q;
                        for dir in 0..2 {
                            if bc.components[dir] {
                                w[dir] = target[dir];
                            }
                        }
                    }
                }
                InterfaceKind::BoundaryNeumann => {
                    for f in fields.f_hat.iter_mut() {
                        *f = target;
                    }
                }
                _ => {}
            }
        }
    }

    /// Assemble and solve the macro problem; returns (multiplier set, cg
    /// iterations, per-substructure multiplier-free solutions).
    fn macro_stage(&mut self) -> Result<(usize, Vec<DVector<f64>>)> {
        let decomp = &self.decomp;
        let sdirs = &self.sdirs;
        let bases = &self.bases;
        let fields = &self.fields;
        let (step, n_steps) = (self.step, decomp.model.time_steps);

        // Multiplier-free solves and macro right-hand side pieces.
        let pieces: Vec<(DVector<f64>, Vec<(usize, [f64; MACRO_DIM])>)> = self
            .fems
            .par_iter()
            .enumerate()
            .map(|(s, fem)| {
                let robin = self.robins[s].as_ref().expect("robin operator");
                let mut rhs = fem.external_load(step, n_steps);
                for (pos, side) in fem.sides.iter().enumerate() {
                    let _ = pos;
                    let iface = &decomp.interfaces[side.iface];
                    let sk = Self::side_k(sdirs, side.iface, side.side_idx);
                    let sf = &fields[side.iface][side.side_idx];
                    let kw = apply_k(sk, &iface.qpoints, &bases[side.iface], &sf.w_hat);
                    let g: Vec<Vector2<f64>> = sf
                        .f_hat
                        .iter()
                        .zip(kw.iter())
                        .map(|(f, k)| f + k)
                        .collect();
                    fem.scatter(&g, side, &iface.qpoints, &mut rhs);
                }
                let u0 = fem.solve(robin, &rhs);
                // Macro residual contributions <b_i, Fhat + K(What - E u0)>.
                let mut rows = Vec::new();
                for side in &fem.sides {
                    if self.map.offset[side.iface].is_none() {
                        continue;
                    }
                    let iface = &decomp.interfaces[side.iface];
                    let sk = Self::side_k(sdirs, side.iface, side.side_idx);
                    let sf = &fields[side.iface][side.side_idx];
                    let tr = fem.trace(&u0, side, &iface.qpoints);
                    let diff: Vec<Vector2<f64>> = sf
                        .w_hat
                        .iter()
                        .zip(tr.iter())
                        .map(|(wh, t)| wh - t)
                        .collect();
                    let kdiff = apply_k(sk, &iface.qpoints, &bases[side.iface], &diff);
                    let fvec: Vec<Vector2<f64>> = sf
                        .f_hat
                        .iter()
                        .zip(kdiff.iter())
                        .map(|(f, k)| f + k)
                        .collect();
                    let w: Vec<f64> = iface.qpoints.iter().map(|q| q.weight).collect();
                    let c = bases[side.iface].coeffs(&w, &fvec);
                    rows.push((side.iface, c));
                }
                (u0, rows)
            })
            .collect();

        let mut rhs = DVector::zeros(self.map.n_dof);
        for (_, rows) in &pieces {
            for (iface, c) in rows {
                let off = self.map.offset[*iface].expect("macro dof");
                for k in 0..MACRO_DIM {
                    rhs[off + k] -= c[k];
                }
            }
        }
        // Neumann target rows: enforce the macro part of the prescribed
        // traction when those interfaces carry unknowns.
        if self.options.macro_boundary_neumann {
            for (i, iface) in decomp.interfaces.iter().enumerate() {
                if iface.kind != InterfaceKind::BoundaryNeumann {
                    continue;
                }
                let Some(off) = self.map.offset[i] else { continue };
                let bc = iface.bc.as_ref().expect("bc data");
                let factor = bc.profile.factor(step, n_steps);
                let t = Vector2::new(bc.value[0] * factor, bc.value[1] * factor);
                let field: Vec<Vector2<f64>> = iface.qpoints.iter().map(|_| t).collect();
                let w: Vec<f64> = iface.qpoints.iter().map(|q| q.weight).collect();
                let c = bases[i].coeffs(&w, &field);
                for k in 0..MACRO_DIM {
                    rhs[off + k] += c[k];
                }
            }
        }

        let u0s: Vec<DVector<f64>> = pieces.into_iter().map(|(u0, _)| u0).collect();

        let (solution, cg_iters) = if self.map.n_dof == 0 {
            (DVector::zeros(0), 0)
        } else if self.options.macro_condensed && self.decomp.n_groups > 1 {
            let mp = MacroProblem { lm: DMatrix::zeros(0, 0), rhs };
            let solver = self.condensed.as_ref().expect("condensed solver");
            let (x, rep) = solver.solve(&mp, self.options.macro_rel_tol, self.options.macro_max_iters)?;
            (x, rep.cg_iters)
        } else {
            let mut lm = DMatrix::zeros(self.map.n_dof, self.map.n_dof);
            for h in &self.homog {
                let h = h.as_ref().expect("homog");
                for (li, &di) in h.dofs.iter().enumerate() {
                    for (lj, &dj) in h.dofs.iter().enumerate() {
                        lm[(di, dj)] += h.block[(li, lj)];
                    }
                }
            }
            let mp = MacroProblem { lm, rhs };
            (mp.solve_direct()?, 0)
        };

        for (i, w) in self.wtilde.iter_mut().enumerate() {
            match self.map.offset[i] {
                Some(off) => {
                    for k in 0..MACRO_DIM {
                        w[k] = solution[off + k];
                    }
                }
                None => *w = [0.0; MACRO_DIM],
            }
        }
        Ok((cg_iters, u0s))
    }

    /// Per-substructure global solves given the macro multiplier; updates
    /// `us` and the (W, F) fields.
    fn global_stage(&mut self, u0s: Vec<DVector<f64>>) -> Result<()> {
        let decomp = &self.decomp;
        let sdirs = &self.sdirs;
        let bases = &self.bases;
        let fields = &self.fields;
        let wtilde = &self.wtilde;
        let (step, n_steps) = (self.step, decomp.model.time_steps);
        let nonlinear = self.options.nonlinear;
        let newton_tol = self.options.newton_tol;
        let newton_max = self.options.newton_max_iters;

        type SideOut = (usize, usize, Vec<Vector2<f64>>, Vec<Vector2<f64>>);
        let results: Result<Vec<(DVector<f64>, Vec<SideOut>)>> = self
            .fems
            .par_iter()
            .enumerate()
            .map(|(s, fem)| {
                let robin = self.robins[s].as_ref().expect("robin operator");
                let u = if nonlinear {
                    // Full right-hand side including the multiplier load.
                    let mut rhs = fem.external_load(step, n_steps);
                    for side in &fem.sides {
                        let iface = &decomp.interfaces[side.iface];
                        let sk = Self::side_k(sdirs, side.iface, side.side_idx);
                        let sf = &fields[side.iface][side.side_idx];
                        let wt = bases[side.iface].field(&wtilde[side.iface]);
                        let sum: Vec<Vector2<f64>> = sf
                            .w_hat
                            .iter()
                            .zip(wt.iter())
                            .map(|(a, b)| a + b)
                            .collect();
                        let kw = apply_k(sk, &iface.qpoints, &bases[side.iface], &sum);
                        let g: Vec<Vector2<f64>> = sf
                            .f_hat
                            .iter()
                            .zip(kw.iter())
                            .map(|(f, k)| f + k)
                            .collect();
                        fem.scatter(&g, side, &iface.qpoints, &mut rhs);
                    }
                    let (u, _hist) = fem.newton_solve(robin, &rhs, &self.us[s], newton_tol, newton_max)?;
                    u
                } else {
                    // Linear path: superpose the cached macro responses.
                    let mut u = u0s[s].clone();
                    let h = self.homog[s].as_ref().expect("homog");
                    for (vi, &pos) in h.side_pos.iter().enumerate() {
                        let iface_id = fem.sides[pos].iface;
                        let c = &wtilde[iface_id];
                        for k in 0..MACRO_DIM {
                            if c[k] != 0.0 {
                                u += c[k] * &h.vs[vi][k];
                            }
                        }
                    }
                    u
                };
                let mut outs = Vec::with_capacity(fem.sides.len());
                for side in &fem.sides {
                    let iface = &decomp.interfaces[side.iface];
                    let sk = Self::side_k(sdirs, side.iface, side.side_idx);
                    let sf = &fields[side.iface][side.side_idx];
                    let tr = fem.trace(&u, side, &iface.qpoints);
                    let wt = bases[side.iface].field(&wtilde[side.iface]);
                    let diff: Vec<Vector2<f64>> = tr
                        .iter()
                        .zip(sf.w_hat.iter().zip(wt.iter()))
                        .map(|(t, (wh, wm))| t - wh - wm)
                        .collect();
                    let kdiff = apply_k(sk, &iface.qpoints, &bases[side.iface], &diff);
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

        for (s, (u, outs)) in results?.into_iter().enumerate() {
            self.us[s] = u;
            for (iface, side_idx, w, f) in outs {
                self.fields[iface][side_idx].w = w;
                self.fields[iface][side_idx].f = f;
            }
        }
        Ok(())
    }

    /// Pointwise local stage on every interface, with relaxation.
    fn local_stage(&mut self) {
        let decomp = &self.decomp;
        let sdirs = &self.sdirs;
        let cohesive = &self.cohesive;
        let (step, n_steps) = (self.step, decomp.model.time_steps);
        let mu = self.options.relaxation;

        let outputs: Vec<(Vec<(Vec<Vector2<f64>>, Vec<Vector2<f64>>)>, Option<IfaceState>)> = self
            .fields
            .par_iter()
            .enumerate()
            .map(|(i, sides)| {
                local_stage_interface(
                    &decomp.interfaces[i],
                    sides,
                    &sdirs.sides[i],
                    &self.states[i],
                    cohesive,
                    step,
                    n_steps,
                )
            })
            .collect();

        for (i, (hat_sides, new_state)) in outputs.into_iter().enumerate() {
            for (sidx, (w_hat, f_hat)) in hat_sides.into_iter().enumerate() {
                let sf = &mut self.fields[i][sidx];
                for q in 0..sf.w_hat.len() {
                    sf.w_hat[q] = mu * w_hat[q] + (1.0 - mu) * sf.w_hat[q];
                    sf.f_hat[q] = mu * f_hat[q] + (1.0 - mu) * sf.f_hat[q];
                }
            }
            if let Some(st) = new_state {
                self.states[i] = st;
            }
        }
    }

    /// Search-direction-weighted interface mismatch between the global-stage
    /// and local-stage fields, normalized by the local-stage magnitude.
    pub fn latin_error(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, iface) in self.decomp.interfaces.iter().enumerate() {
            for (sidx, _) in iface.sides.iter().enumerate() {
                let sf = &self.fields[i][sidx];
                let sk = &self.sdirs.sides[i][sidx];
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
        if den > 0.0 {
            (num / den).sqrt()
        } else if num > 0.0 {
            num.sqrt()
        } else {
            0.0
        }
    }

    /// Macro solve plus substructure solves (the admissible half of a
    /// sweep); returns the macro CG iteration count.
    pub fn sweep_global(&mut self) -> Result<(usize, usize)> {
        let refacts = self.ensure_operators()?;
        let (cg_iters, u0s) = self.macro_stage()?;
        self.global_stage(u0s)?;
        Ok((cg_iters, refacts))
    }

    /// One full sweep; returns the error indicator after the sweep.
    pub fn latin_iterate(&mut self) -> Result<f64> {
        let t0 = std::time::Instant::now();
        self.box_work_this_iter = 0;
        let (cg_iters, refacts) = self.sweep_global()?;
        self.local_stage();
        let eta = self.latin_error();
        self.iter_in_step += 1;
        let wall_ms = if self.options.timing {
            t0.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.log.iters.push(IterRecord {
            step: self.step,
            iter: self.iter_in_step,
            eta,
            cg_iters,
            refacts,
            box_work: 0,
            wall_ms,
        });
        Ok(eta)
    }

    /// Adapt search directions to the current interface state; returns the
    /// set of interfaces whose directions changed beyond the threshold.
    pub fn update_search_directions(&mut self) -> Vec<usize> {
        let mut changed = Vec::new();
        let threshold = self.options.update_threshold;
        for (i, iface) in self.decomp.interfaces.iter().enumerate() {
            let proposal = match (&self.states[i], iface.kind) {
                (IfaceState::Cohesive { working, status, .. }, InterfaceKind::Cohesive) => {
                    let mut ks = Vec::with_capacity(working.len());
                    for (st, stat) in working.iter().zip(status.iter()) {
                        let kt = ((1.0 - st.d) * self.cohesive.k1)
                            .max(self.options.sd_floor_frac * self.cohesive.k1);
                        let kn = if st.d >= 1.0 && *stat == ContactStatus::Closed {
                            self.options.k_closed_factor * self.cohesive.k3
                        } else {
                            ((1.0 - st.d) * self.cohesive.k3)
                                .max(self.options.sd_floor_frac * self.cohesive.k3)
                        };
                        ks.push((kt, kn));
                    }
                    Some(ks)
                }
                (IfaceState::Contact { status }, InterfaceKind::Contact) => {
                    let base = contact_base_k(&self.decomp, i);
                    let mut ks = Vec::with_capacity(status.len());
                    for stat in status {
                        let kn = match stat {
                            ContactStatus::Open => self.options.sd_floor_frac * base,
                            ContactStatus::Closed => self.options.k_closed_factor * base,
                        };
                        ks.push((self.options.sd_floor_frac * base, kn));
                    }
                    Some(ks)
                }
                _ => None,
            };
            let Some(ks) = proposal else { continue };
            let current = &self.sdirs.sides[i][0].k;
            let mut moved = false;
            for (new, old) in ks.iter().zip(current.iter()) {
                let rt = (new.0 - old.0).abs() / old.0.max(1e-300);
                let rn = (new.1 - old.1).abs() / old.1.max(1e-300);
                if rt > threshold || rn > threshold {
                    moved = true;
                    break;
                }
            }
            if moved {
                for side in self.sdirs.sides[i].iter_mut() {
                    side.k = ks.clone();
                }
                changed.push(i);
            }
        }
        if !changed.is_empty() {
            self.sdirs.version += 1;
            // Count the substructures that will refactorize.
            let mut subs: Vec<usize> = changed
                .iter()
                .flat_map(|&i| self.decomp.interfaces[i].sides.iter().map(|s| s.sub))
                .collect();
            subs.sort_unstable();
            subs.dedup();
            // Invalidate them so ensure_operators refactors exactly these.
            for &s in &subs {
                if !self.robins.is_empty() {
                    self.robins[s] = None;
                    self.homog[s] = None;
                }
            }
            self.log.refact_events.push(subs.len());
        }
        changed
    }

    /// Run one time step to tolerance. Damage histories commit only on
    /// convergence of the step.
    pub fn run_time_step(&mut self, step: usize) -> Result<StepRecord> {
        self.step = step;
        self.iter_in_step = 0;
        self.seed_boundary();
        let tol = self.options.tol;
        let max_iters = self.options.max_iters;
        let mut eta = f64::INFINITY;
        let mut converged = false;
        for it in 1..=max_iters {
            eta = self.latin_iterate()?;
            if let Some(reloc) = self.options.reloc.clone() {
                let work = crate::reloc::relocalize(self, &reloc)?;
                if work > 0 {
                    self.box_work_this_iter += work;
                    if let Some(last) = self.log.iters.last_mut() {
                        last.box_work = work;
                    }
                    // The box advanced the state: measure the indicator anew.
                    eta = self.latin_error();
                    if let Some(last) = self.log.iters.last_mut() {
                        last.eta = eta;
                    }
                }
            }
            if eta < tol {
                converged = true;
                break;
            }
            if self.options.update_period > 0 && it % self.options.update_period == 0 {
                self.update_search_directions();
            }
        }
        if !converged {
            return Err(DelamError::NonConvergence {
                step,
                max_iters,
                eta,
                tol,
            });
        }
        let damage_grew = self.commit_step();
        let rec = StepRecord {
            step,
            iters: self.iter_in_step,
            eta,
            damage_grew,
        };
        self.log.steps.push(rec.clone());
        Ok(rec)
    }

    /// Commit working damage states; returns whether any point grew.
    fn commit_step(&mut self) -> bool {
        let mut grew = false;
        for st in &mut self.states {
            if let IfaceState::Cohesive { committed, working, .. } = st {
                for q in 0..working.len() {
                    if working[q].d > committed[q].d + 1e-14 {
                        grew = true;
                    }
                    committed[q] = working[q];
                }
            }
        }
        grew
    }

    /// Verify the global-stage closing relation on every side (an identity of
    /// the update formulas; also exercised as a test oracle).
    pub fn max_closing_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, iface) in self.decomp.interfaces.iter().enumerate() {
            for (sidx, _) in iface.sides.iter().enumerate() {
                let sf = &self.fields[i][sidx];
                let sk = &self.sdirs.sides[i][sidx];
                let wt = self.bases[i].field(&self.wtilde[i]);
                let diff: Vec<Vector2<f64>> = sf
                    .w
                    .iter()
                    .zip(sf.w_hat.iter().zip(wt.iter()))
                    .map(|(w, (wh, wm))| w - wh - wm)
                    .collect();
                let kdiff = apply_k(sk, &iface.qpoints, &self.bases[i], &diff);
                for q in 0..iface.n_qp() {
                    let r = kdiff[q] + (sf.f[q] - sf.f_hat[q]);
                    worst = worst.max(r.norm());
                }
            }
        }
        worst
    }

    /// Largest macro action-reaction residual over interior interfaces,
    /// relative to the macro traction scale.
    pub fn max_macro_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, iface) in self.decomp.interfaces.iter().enumerate() {
            if !iface.is_interior() {
                continue;
            }
            let w: Vec<f64> = iface.qpoints.iter().map(|q| q.weight).collect();
            let sum: Vec<Vector2<f64>> = self.fields[i][0]
                .f
                .iter()
                .zip(self.fields[i][1].f.iter())
                .map(|(a, b)| a + b)
                .collect();
            let c = self.bases[i].coeffs(&w, &sum);
            let c0 = self.bases[i].coeffs(&w, &self.fields[i][0].f);
            let scale = c0.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let r = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(r / scale);
        }
        worst
    }

    /// Physical admissibility of contact zones evaluated on the global-stage
    /// fields: returns the worst interpenetration (negative gap) and the
    /// worst complementarity violation |gap * pressure|.
    pub fn contact_violation(&self) -> (f64, f64) {
        let mut worst_gap: f64 = 0.0;
        let mut worst_comp: f64 = 0.0;
        for (i, iface) in self.decomp.interfaces.iter().enumerate() {
            let check = match (&self.states[i], iface.kind) {
                (_, InterfaceKind::Contact) => true,
                (IfaceState::Cohesive { working, .. }, InterfaceKind::Cohesive) => {
                    working.iter().any(|s| s.d >= 1.0)
                }
                _ => false,
            };
            if !check || !iface.is_interior() {
                continue;
            }
            for (q, qp) in iface.qpoints.iter().enumerate() {
                if let IfaceState::Cohesive { working, .. } = &self.states[i] {
                    if working[q].d < 1.0 {
                        continue;
                    }
                }
                let gap = (self.fields[i][1].w[q] - self.fields[i][0].w[q]).dot(&qp.normal);
                let pressure = self.fields[i][0].f[q].dot(&qp.normal);
                if gap < 0.0 {
                    worst_gap = worst_gap.max(-gap);
                }
                worst_comp = worst_comp.max((gap * pressure).abs());
            }
        }
        (worst_gap, worst_comp)
    }
}

/// Local stage of one interface: returns per-side hat fields and the updated
/// constitutive state.
#[allow(clippy::type_complexity)]
pub(crate) fn local_stage_interface(
    iface: &Interface,
    sides: &[SideFields],
    ks: &[SideK],
    state: &IfaceState,
    cohesive: &CohesiveParams,
    step: usize,
    n_steps: usize,
) -> (Vec<(Vec<Vector2<f64>>, Vec<Vector2<f64>>)>, Option<IfaceState>) {
    let n_qp = iface.n_qp();
    let to_frame = |v: &Vector2<f64>, q: usize| {
        let qp = &iface.qpoints[q];
        Vector2::new(v.dot(&qp.tangent), v.dot(&qp.normal))
    };
    let from_frame = |v: &Vector2<f64>, q: usize| {
        let qp = &iface.qpoints[q];
        v.x * qp.tangent + v.y * qp.normal
    };
    let side_point = |sidx: usize, q: usize| SidePoint {
        w: to_frame(&sides[sidx].w[q], q),
        f: to_frame(&sides[sidx].f[q], q),
    };
    let mut out: Vec<(Vec<Vector2<f64>>, Vec<Vector2<f64>>)> = sides
        .iter()
        .map(|_| (vec![Vector2::zeros(); n_qp], vec![Vector2::zeros(); n_qp]))
        .collect();
    let mut new_state = None;

    match iface.kind {
        InterfaceKind::Perfect => {
            for q in 0..n_qp {
                let (a, b) = (side_point(0, q), side_point(1, q));
                let (ha, hb) = local_stage_perfect(&a, &b, ks[0].k[q], ks[1].k[q]);
                out[0].0[q] = from_frame(&ha.w, q);
                out[0].1[q] = from_frame(&ha.f, q);
                out[1].0[q] = from_frame(&hb.w, q);
                out[1].1[q] = from_frame(&hb.f, q);
            }
        }
        InterfaceKind::Cohesive => {
            let IfaceState::Cohesive { committed, working: prev, .. } = state else {
                unreachable!("cohesive interface without cohesive state")
            };
            let mut working = vec![CohesivePointState::default(); n_qp];
            let mut status = vec![ContactStatus::Open; n_qp];
            for q in 0..n_qp {
                let (a, b) = (side_point(0, q), side_point(1, q));
                // Damage frozen from the previous local stage within the
                // solve; the history chains through every local stage, so
                // the damage never decreases along the iterative process.
                let res = local_stage_cohesive(&a, &b, ks[0].k[q], ks[1].k[q], prev[q].d.min(1.0), cohesive);
                out[0].0[q] = from_frame(&res.hat0.w, q);
                out[0].1[q] = from_frame(&res.hat0.f, q);
                out[1].0[q] = from_frame(&res.hat1.w, q);
                out[1].1[q] = from_frame(&res.hat1.f, q);
                let (y1, y2, y3) = crate::interface::energy_rates(res.jump.x, res.jump.y, cohesive);
                let y = crate::interface::combined_rate(y1, y2, y3, cohesive);
                working[q] = crate::interface::update_history(prev[q], y, cohesive);
                status[q] = res.status;
            }
            new_state = Some(IfaceState::Cohesive {
                committed: committed.clone(),
                working,
                status,
            });
        }
        InterfaceKind::Contact => {
            let mut status = vec![ContactStatus::Open; n_qp];
            for q in 0..n_qp {
                let (a, b) = (side_point(0, q), side_point(1, q));
                let (ha, hb, st) = local_stage_contact(&a, &b, ks[0].k[q], ks[1].k[q], 0.0);
                out[0].0[q] = from_frame(&ha.w, q);
                out[0].1[q] = from_frame(&ha.f, q);
                out[1].0[q] = from_frame(&hb.w, q);
                out[1].1[q] = from_frame(&hb.f, q);
                status[q] = st;
            }
            new_state = Some(IfaceState::Contact { status });
        }
        InterfaceKind::BoundaryDirichlet | InterfaceKind::BoundaryNeumann => {
            let bc = iface.bc.as_ref().expect("boundary data");
            let factor = bc.profile.factor(step, n_steps);
            let target = Vector2::new(bc.value[0] * factor, bc.value[1] * factor);
            for q in 0..n_qp {
                let p = side_point(0, q);
                let qp = &iface.qpoints[q];
                let h = if iface.kind == InterfaceKind::BoundaryDirichlet {
                    // Rotate the global component mask and values into the
                    // (t, n) frame; boundary edges are axis-aligned.
                    let mask_t = component_along(&qp.tangent, &bc.components);
                    let mask_n = component_along(&qp.normal, &bc.components);
                    let t_target = Vector2::new(target.dot(&qp.tangent), target.dot(&qp.normal));
                    local_stage_dirichlet(&p, ks[0].k[q], t_target, [mask_t, mask_n])
                } else {
                    let t_target = Vector2::new(target.dot(&qp.tangent), target.dot(&qp.normal));
                    local_stage_neumann(&p, ks[0].k[q], t_target)
                };
                out[0].0[q] = from_frame(&h.w, q);
                out[0].1[q] = from_frame(&h.f, q);
            }
        }
    }
    (out, new_state)
}

fn component_along(dir: &Vector2<f64>, mask: &[bool; 2]) -> bool {
    if dir.x.abs() > dir.y.abs() {
        mask[0]
    } else {
        mask[1]
    }
}

fn contact_base_k(decomp: &Decomposition, iface: usize) -> f64 {
    let f = &decomp.interfaces[iface];
    let e_ref = f
        .sides
        .iter()
        .map(|s| decomp.substructures[s.sub].e_ref)
        .fold(0.0_f64, f64::max);
    e_ref / f.length
}

/// Initialize search directions per the configured policy.
pub fn init_search_directions(
    decomp: &Decomposition,
    options: &SolverOptions,
    cohesive: &CohesiveParams,
) -> SearchDirections {
    let l0 = decomp.model.length;
    let h0 = decomp.model.total_thickness();
    let sides = decomp
        .interfaces
        .iter()
        .enumerate()
        .map(|(i, iface)| {
            iface
                .sides
                .iter()
                .map(|side| {
                    let e_ref = decomp.substructures[side.sub].e_ref;
                    let n_qp = iface.n_qp();
                    // Cohesive and contact interfaces always follow their
                    // current stiffness / status; the isotropic-anisotropic
                    // choice governs perfect and boundary interfaces.
                    let (kt, kn) = match iface.kind {
                        InterfaceKind::Cohesive => (cohesive.k1, cohesive.k3),
                        InterfaceKind::Contact => {
                            let base = contact_base_k(decomp, i);
                            let kn = match options.contact_init {
                                ContactInit::Open => options.sd_floor_frac * base,
                                ContactInit::Closed => options.k_closed_factor * base,
                            };
                            (options.sd_floor_frac * base, kn)
                        }
                        InterfaceKind::Perfect => match options.policy {
                            SdPolicy::Isotropic => {
                                let k = e_ref / iface.length;
                                (k, k)
                            }
                            // Coarse Schur scaling of a slender cross-section.
                            SdPolicy::Anisotropic | SdPolicy::Adaptive => {
                                let kt = e_ref / l0;
                                (kt, (l0 / h0).powi(2) * kt)
                            }
                        },
                        _ => {
                            let k = e_ref / iface.length;
                            (k, k)
                        }
                    };
                    let macro_k = if iface.kind == InterfaceKind::Perfect {
                        Some((
                            options.macro_stiff_factor * kt,
                            options.macro_stiff_factor * kn,
                        ))
                    } else {
                        None
                    };
                    SideK {
                        k: vec![(kt, kn); n_qp],
                        macro_k,
                    }
                })
                .collect()
        })
        .collect();
    SearchDirections { sides, version: 0 }
}

/// Homogenized substructure response: Robin solutions for the macro basis
/// loads of each unknown-carrying side and the condensed macro block.
pub fn homogenize_substructure(
    fem: &SubdomainFem,
    robin: &RobinOperator,
    decomp: &Decomposition,
    bases: &[MacroBasis],
    sdirs: &SearchDirections,
    map: &MacroDofMap,
) -> Result<HomogData> {
    if robin.version != sdirs.version {
        return Err(DelamError::StaleFactorization { sub: fem.id });
    }
    let side_pos: Vec<usize> = fem
        .sides
        .iter()
        .enumerate()
        .filter(|(_, s)| map.offset[s.iface].is_some())
        .map(|(pos, _)| pos)
        .collect();
    let mut dofs = Vec::with_capacity(MACRO_DIM * side_pos.len());
    for &pos in &side_pos {
        let off = map.offset[fem.sides[pos].iface].expect("macro dof");
        for k in 0..MACRO_DIM {
            dofs.push(off + k);
        }
    }
    let mut vs = Vec::with_capacity(side_pos.len());
    for &pos in &side_pos {
        let side = &fem.sides[pos];
        let iface = &decomp.interfaces[side.iface];
        let sk = &sdirs.sides[side.iface][side.side_idx];
        let mut group: [DVector<f64>; MACRO_DIM] = std::array::from_fn(|_| DVector::zeros(fem.n_dof));
        for j in 0..MACRO_DIM {
            let bj: Vec<Vector2<f64>> = bases[side.iface].vecs[j].clone();
            let kb = apply_k(sk, &iface.qpoints, &bases[side.iface], &bj);
            let mut rhs = DVector::zeros(fem.n_dof);
            fem.scatter(&kb, side, &iface.qpoints, &mut rhs);
            group[j] = fem.solve(robin, &rhs);
        }
        vs.push(group);
    }
    // Block entries <b_i, K_s (delta_sr b_j - E_s v_rj)>.
    let n = dofs.len();
    let mut block = DMatrix::zeros(n, n);
    for (si, &pos_i) in side_pos.iter().enumerate() {
        let side_i = &fem.sides[pos_i];
        let iface_i = &decomp.interfaces[side_i.iface];
        let w: Vec<f64> = iface_i.qpoints.iter().map(|q| q.weight).collect();
        let sk_i = &sdirs.sides[side_i.iface][side_i.side_idx];
        for (sj, _pos_j) in side_pos.iter().enumerate() {
            for j in 0..MACRO_DIM {
                let tr = fem.trace(&vs[sj][j], side_i, &iface_i.qpoints);
                let mut field: Vec<Vector2<f64>> =
                    tr.iter().map(|t| -t).collect();
                if si == sj {
                    for (fq, bq) in field.iter_mut().zip(bases[side_i.iface].vecs[j].iter()) {
                        *fq += bq;
                    }
                }
                let kf = apply_k(sk_i, &iface_i.qpoints, &bases[side_i.iface], &field);
                let c = bases[side_i.iface].coeffs(&w, &kf);
                for i in 0..MACRO_DIM {
                    block[(MACRO_DIM * si + i, MACRO_DIM * sj + j)] = c[i];
                }
            }
        }
    }
    Ok(HomogData {
        side_pos,
        dofs,
        vs,
        block,
    })
}
