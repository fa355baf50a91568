//! Monolithic reference FEM on the undecomposed mesh.
//!
//! Builds the same structured discretization as the decomposition but as one
//! assembled problem: bulk quads per ply, duplicated nodes along ply lines
//! tied by cohesive quadrature points with the identical pointwise law, and
//! hard-eliminated Dirichlet conditions. The solution path (global sparse
//! assembly + direct solve, secant damage fixed point, dense-Newton for large
//! rotations) is independent of the substructured iteration it checks.
//!
//! Pre-cracked zones are free surfaces here: the oracle is intended for
//! opening-dominated comparisons and does not resolve closing contact.

use nalgebra::{DMatrix, DVector, Matrix3, Point2, Vector2};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};

use crate::error::{DelamError, Result};
use crate::interface::{
    combined_rate, energy_rates, update_history, CohesiveParams, CohesivePointState,
};
use crate::mesh::Decomposition;
use crate::model::{BcKind, Edge, LaminateModel, TimeProfile};
use crate::quad;

#[derive(Debug, Clone)]
pub struct CohesiveQp {
    pub line: usize,
    pub x: f64,
    pub lower: [usize; 2],
    pub upper: [usize; 2],
    pub shape: (f64, f64),
    pub weight: f64,
    pub state: CohesivePointState,
}

pub struct Monolithic {
    pub nodes: Vec<Point2<f64>>,
    pub elems: Vec<(Matrix3<f64>, [usize; 4])>,
    pub cohesive: Vec<CohesiveQp>,
    pub params: CohesiveParams,
    pub dirichlet: Vec<(usize, f64, TimeProfile)>,
    pub loads: Vec<(usize, f64, TimeProfile)>,
    pub n_dof: usize,
    pub n_steps: usize,
    nx: usize,
    remap: Vec<usize>,
    raw_per_ply: usize,
}

const GP: f64 = 0.577_350_269_189_625_8;

pub struct StepSolution {
    pub u: DVector<f64>,
    /// Per cohesive point: (x, tangential traction, normal traction, damage).
    pub cohesive: Vec<(f64, f64, f64, f64)>,
}

impl Monolithic {
    pub fn build(
        model: &LaminateModel,
        nx: usize,
        ne_per_ply: usize,
        params: CohesiveParams,
        dof_cap: usize,
    ) -> Result<Self> {
        model.validate()?;
        let n_plies = model.plies.len();
        let ne = ne_per_ply;
        let dx = model.length / nx as f64;
        let raw_per_ply = (nx + 1) * (ne + 1);

        // Raw nodes: every ply has its own row block; ply lines duplicate.
        let mut raw_nodes = Vec::with_capacity(n_plies * raw_per_ply);
        for p in 0..n_plies {
            let base = model.ply_base(p);
            let t = model.plies[p].thickness;
            for j in 0..=ne {
                let y = if j == ne { base + t } else { base + j as f64 * (t / ne as f64) };
                for i in 0..=nx {
                    raw_nodes.push(Point2::new(i as f64 * dx, y));
                }
            }
        }
        let raw_id = |p: usize, i: usize, j: usize| p * raw_per_ply + j * (nx + 1) + i;

        // Merge ply lines under perfect bond.
        let mut remap: Vec<usize> = (0..raw_nodes.len()).collect();
        if model.perfect_bond {
            for line in 0..n_plies.saturating_sub(1) {
                for i in 0..=nx {
                    let lower = remap[raw_id(line, i, ne)];
                    remap[raw_id(line + 1, i, 0)] = lower;
                }
            }
        }
        // Compact ids.
        let mut compact = vec![usize::MAX; raw_nodes.len()];
        let mut nodes = Vec::new();
        for r in 0..raw_nodes.len() {
            let root = remap[r];
            if compact[root] == usize::MAX {
                compact[root] = nodes.len();
                nodes.push(raw_nodes[root]);
            }
            compact[r] = compact[root];
        }
        let remap = compact;
        let n_dof = 2 * nodes.len();
        if n_dof > dof_cap {
            return Err(DelamError::OracleCap { dof: n_dof, cap: dof_cap });
        }

        let mut elems = Vec::with_capacity(n_plies * nx * ne);
        for p in 0..n_plies {
            let d3 = model
                .material_of(p)
                .plane_strain(model.plies[p].angle, &model.plies[p].material)?;
            for j in 0..ne {
                for i in 0..nx {
                    elems.push((
                        d3,
                        [
                            remap[raw_id(p, i, j)],
                            remap[raw_id(p, i + 1, j)],
                            remap[raw_id(p, i + 1, j + 1)],
                            remap[raw_id(p, i, j + 1)],
                        ],
                    ));
                }
            }
        }

        // Cohesive quadrature points along intact ply-line edges.
        let mut cohesive = Vec::new();
        if !model.perfect_bond {
            for line in 0..n_plies.saturating_sub(1) {
                for i in 0..nx {
                    let x0 = i as f64 * dx;
                    let cracked = model.precracks.iter().any(|c| {
                        c.interface == line
                            && x0 + 0.5 * dx > c.from
                            && x0 + 0.5 * dx < c.to
                    });
                    if cracked {
                        continue;
                    }
                    let lower = [remap[raw_id(line, i, ne)], remap[raw_id(line, i + 1, ne)]];
                    let upper = [remap[raw_id(line + 1, i, 0)], remap[raw_id(line + 1, i + 1, 0)]];
                    for &xi in &[-GP, GP] {
                        let na = 0.5 * (1.0 - xi);
                        let nb = 0.5 * (1.0 + xi);
                        cohesive.push(CohesiveQp {
                            line,
                            x: x0 + nb * dx,
                            lower,
                            upper,
                            shape: (na, nb),
                            weight: 0.5 * dx,
                            state: CohesivePointState::default(),
                        });
                    }
                }
            }
        }

        // Dirichlet constraints and consistent edge loads.
        let mut dirichlet = Vec::new();
        let mut loads = Vec::new();
        let height = model.total_thickness();
        for bc in &model.boundary_conditions {
            let full = match bc.edge {
                Edge::Left | Edge::Right => [0.0, height],
                Edge::Bottom | Edge::Top => [0.0, model.length],
            };
            let span = bc.span.unwrap_or(full);
            // Element edges on this boundary with midpoint in span.
            let mut edge_nodes: Vec<[usize; 2]> = Vec::new();
            match bc.edge {
                Edge::Left | Edge::Right => {
                    let i = if bc.edge == Edge::Left { 0 } else { nx };
                    for p in 0..n_plies {
                        let t = model.plies[p].thickness;
                        let base = model.ply_base(p);
                        for j in 0..ne {
                            let ymid = base + (j as f64 + 0.5) * t / ne as f64;
                            if ymid >= span[0] && ymid <= span[1] {
                                edge_nodes.push([remap[raw_id(p, i, j)], remap[raw_id(p, i, j + 1)]]);
                                push_edge_load(&mut loads, bc, t / ne as f64, remap[raw_id(p, i, j)], remap[raw_id(p, i, j + 1)]);
                            }
                        }
                    }
                }
                Edge::Bottom | Edge::Top => {
                    let (p, j) = if bc.edge == Edge::Bottom { (0, 0) } else { (n_plies - 1, ne) };
                    for i in 0..nx {
                        let xmid = (i as f64 + 0.5) * dx;
                        if xmid >= span[0] && xmid <= span[1] {
                            edge_nodes.push([remap[raw_id(p, i, j)], remap[raw_id(p, i + 1, j)]]);
                            push_edge_load(&mut loads, bc, dx, remap[raw_id(p, i, j)], remap[raw_id(p, i + 1, j)]);
                        }
                    }
                }
            }
            if bc.kind == BcKind::Dirichlet {
                let mut nodes_seen = Vec::new();
                for pair in &edge_nodes {
                    for &n in pair {
                        if !nodes_seen.contains(&n) {
                            nodes_seen.push(n);
                            for dir in 0..2 {
                                if bc.components[dir] {
                                    dirichlet.push((2 * n + dir, bc.value[dir], bc.profile.clone()));
                                }
                            }
                        }
                    }
                }
            }
        }

        let mut mono = Monolithic {
            nodes,
            elems,
            cohesive,
            params,
            dirichlet,
            loads,
            n_dof,
            n_steps: model.time_steps,
            nx,
            remap,
            raw_per_ply,
        };
        // Point loads resolve to the nearest node.
        for load in &model.point_loads {
            let mut best = (0usize, f64::INFINITY);
            for (n, p) in mono.nodes.iter().enumerate() {
                let d2 = (p.x - load.point[0]).powi(2) + (p.y - load.point[1]).powi(2);
                if d2 + 1e-14 < best.1 {
                    best = (n, d2);
                }
            }
            for dir in 0..2 {
                if load.force[dir] != 0.0 {
                    mono.loads.push((2 * best.0 + dir, load.force[dir], load.profile.clone()));
                }
            }
        }
        Ok(mono)
    }

    /// Plain bulk stiffness (no cohesive part), used as the energy metric.
    pub fn bulk_stiffness(&self) -> CscMatrix<f64> {
        let mut coo = CooMatrix::new(self.n_dof, self.n_dof);
        for (d3, e) in &self.elems {
            let c = [self.nodes[e[0]], self.nodes[e[1]], self.nodes[e[2]], self.nodes[e[3]]];
            let ke = quad::stiffness(&c, d3);
            for (a, &na) in e.iter().enumerate() {
                for (b, &nb) in e.iter().enumerate() {
                    for i in 0..2 {
                        for j in 0..2 {
                            coo.push(2 * na + i, 2 * nb + j, ke[(2 * a + i, 2 * b + j)]);
                        }
                    }
                }
            }
        }
        CscMatrix::from(&coo)
    }

    fn jump_at(&self, qp: &CohesiveQp, u: &DVector<f64>) -> Vector2<f64> {
        let (sa, sb) = qp.shape;
        let up = Vector2::new(
            sa * u[2 * qp.upper[0]] + sb * u[2 * qp.upper[1]],
            sa * u[2 * qp.upper[0] + 1] + sb * u[2 * qp.upper[1] + 1],
        );
        let lo = Vector2::new(
            sa * u[2 * qp.lower[0]] + sb * u[2 * qp.lower[1]],
            sa * u[2 * qp.lower[0] + 1] + sb * u[2 * qp.lower[1] + 1],
        );
        up - lo
    }

    /// Per-point secant stiffness (tangential, normal) for a frozen state and
    /// a trial jump: virgin normal stiffness under closing, damaged otherwise.
    fn point_stiffness(&self, d: f64, jump_n: f64) -> (f64, f64) {
        let kt = (1.0 - d) * self.params.k1;
        let kn = if jump_n >= 0.0 { (1.0 - d) * self.params.k3 } else { self.params.k3 };
        (kt, kn)
    }

    fn cohesive_coo(&self, d_work: &[f64], jumps: &[Vector2<f64>]) -> CooMatrix<f64> {
        let mut coo = CooMatrix::new(self.n_dof, self.n_dof);
        for ((qp, &d), j) in self.cohesive.iter().zip(d_work).zip(jumps) {
            let (kt, kn) = self.point_stiffness(d, j.y);
            // Ply lines are horizontal: tangent x, normal y.
            let k2 = [kt, kn];
            let nodes = [qp.lower[0], qp.lower[1], qp.upper[0], qp.upper[1]];
            let signs = [-1.0, -1.0, 1.0, 1.0];
            let shapes = [qp.shape.0, qp.shape.1, qp.shape.0, qp.shape.1];
            for a in 0..4 {
                for b in 0..4 {
                    let f = qp.weight * signs[a] * signs[b] * shapes[a] * shapes[b];
                    for dir in 0..2 {
                        coo.push(2 * nodes[a] + dir, 2 * nodes[b] + dir, f * k2[dir]);
                    }
                }
            }
        }
        coo
    }

    fn external(&self, step: usize) -> DVector<f64> {
        let mut f = DVector::zeros(self.n_dof);
        for (dof, v, profile) in &self.loads {
            f[*dof] += v * profile.factor(step, self.n_steps);
        }
        f
    }

    fn dirichlet_values(&self, step: usize) -> Vec<(usize, f64)> {
        self.dirichlet
            .iter()
            .map(|(dof, v, profile)| (*dof, v * profile.factor(step, self.n_steps)))
            .collect()
    }

    /// Linear-kinematics solve of one step with the damage fixed point:
    /// secant stiffness frozen per pass, history anchored at the committed
    /// state, committed on convergence.
    pub fn solve_step(&mut self, step: usize) -> Result<StepSolution> {
        let k_bulk = self.bulk_stiffness();
        let mut jumps = vec![Vector2::<f64>::zeros(); self.cohesive.len()];
        let mut work: Vec<CohesivePointState> = self.cohesive.iter().map(|c| c.state).collect();
        let mut d_work: Vec<f64> = work.iter().map(|s| s.d).collect();
        let mut u = DVector::zeros(self.n_dof);
        let mut scale = vec![1.0f64; self.cohesive.len()];
        let mut last_mv = vec![0.0f64; self.cohesive.len()];
        for _pass in 0..1000 {
            let coh = self.cohesive_coo(&d_work, &jumps);
            let mut coo = CooMatrix::new(self.n_dof, self.n_dof);
            for (i, j, v) in k_bulk.triplet_iter() {
                coo.push(i, j, *v);
            }
            for (i, j, v) in CscMatrix::from(&coh).triplet_iter() {
                coo.push(i, j, *v);
            }
            u = solve_constrained(&CscMatrix::from(&coo), &self.external(step), &self.dirichlet_values(step))?;
            let mut worst = 0.0f64;
            for (idx, qp) in self.cohesive.iter().enumerate() {
                let j = self.jump_at(qp, &u);
                let (y1, y2, y3) = energy_rates(j.x, j.y, &self.params);
                let y = combined_rate(y1, y2, y3, &self.params);
                let next = update_history(qp.state, y, &self.params);
                let mv = next.d - d_work[idx];
                if mv * last_mv[idx] < 0.0 {
                    scale[idx] = (0.5 * scale[idx]).max(1.0 / 64.0);
                } else {
                    scale[idx] = (2.0 * scale[idx]).min(1.0);
                }
                worst = worst.max(mv.abs());
                // Branch change also forces another pass.
                if (j.y >= 0.0) != (jumps[idx].y >= 0.0) {
                    worst = worst.max(1.0);
                }
                jumps[idx] = j;
                work[idx] = next;
                d_work[idx] = (d_work[idx] + scale[idx] * mv).clamp(0.0, 1.0);
                last_mv[idx] = mv;
            }
            if worst < 1e-9 {
                break;
            }
        }
        Ok(self.commit(step, u, jumps, work))
    }

    /// Geometrically nonlinear solve of one step (total-Lagrangian SVK bulk),
    /// dense-LU Newton inside the damage fixed point.
    pub fn solve_step_nonlinear(
        &mut self,
        step: usize,
        tol: f64,
        max_newton: usize,
        u_init: &DVector<f64>,
    ) -> Result<StepSolution> {
        let mut jumps: Vec<Vector2<f64>> = self
            .cohesive
            .iter()
            .map(|qp| self.jump_at(qp, u_init))
            .collect();
        let mut work: Vec<CohesivePointState> = self.cohesive.iter().map(|c| c.state).collect();
        let mut d_work: Vec<f64> = work.iter().map(|s| s.d).collect();
        let mut scale = vec![1.0f64; self.cohesive.len()];
        let mut last_mv = vec![0.0f64; self.cohesive.len()];
        let mut u = u_init.clone();
        let f_ext = self.external(step);
        let dvals = self.dirichlet_values(step);
        let fixed: Vec<bool> = {
            let mut v = vec![false; self.n_dof];
            for (dof, _) in &dvals {
                v[*dof] = true;
            }
            v
        };
        for _pass in 0..1000 {
            let coh_mat = {
                let coo = self.cohesive_coo(&d_work, &jumps);
                let mut m = DMatrix::zeros(self.n_dof, self.n_dof);
                for (i, j, v) in CscMatrix::from(&coo).triplet_iter() {
                    m[(i, j)] += *v;
                }
                m
            };
            for (dof, v) in &dvals {
                u[*dof] = *v;
            }
            let mut converged = false;
            for _newton in 0..max_newton {
                let mut r = self.internal_bulk(&u) + &coh_mat * &u - &f_ext;
                let kt = self.tangent_bulk(&u) + &coh_mat;
                // Constrain by row/column masking.
                let mut ktc = kt;
                for dof in 0..self.n_dof {
                    if fixed[dof] {
                        for j in 0..self.n_dof {
                            ktc[(dof, j)] = 0.0;
                            ktc[(j, dof)] = 0.0;
                        }
                        ktc[(dof, dof)] = 1.0;
                        r[dof] = 0.0;
                    }
                }
                let rn = r.norm();
                if rn <= tol * (1.0 + f_ext.norm()) {
                    converged = true;
                    break;
                }
                let du = ktc
                    .lu()
                    .solve(&r)
                    .ok_or_else(|| DelamError::Singular("oracle Newton tangent".into()))?;
                u -= du;
            }
            if !converged {
                return Err(DelamError::NewtonDivergence { iters: max_newton, history: vec![] });
            }
            let mut worst = 0.0f64;
            for (idx, qp) in self.cohesive.iter().enumerate() {
                let j = self.jump_at(qp, &u);
                let (y1, y2, y3) = energy_rates(j.x, j.y, &self.params);
                let y = combined_rate(y1, y2, y3, &self.params);
                let next = update_history(qp.state, y, &self.params);
                let mv = next.d - d_work[idx];
                if mv * last_mv[idx] < 0.0 {
                    scale[idx] = (0.5 * scale[idx]).max(1.0 / 64.0);
                } else {
                    scale[idx] = (2.0 * scale[idx]).min(1.0);
                }
                worst = worst.max(mv.abs());
                if (j.y >= 0.0) != (jumps[idx].y >= 0.0) {
                    worst = worst.max(1.0);
                }
                jumps[idx] = j;
                work[idx] = next;
                d_work[idx] = (d_work[idx] + scale[idx] * mv).clamp(0.0, 1.0);
                last_mv[idx] = mv;
            }
            if worst < 1e-9 {
                break;
            }
        }
        Ok(self.commit(step, u, jumps, work))
    }

    fn commit(
        &mut self,
        _step: usize,
        u: DVector<f64>,
        jumps: Vec<Vector2<f64>>,
        work: Vec<CohesivePointState>,
    ) -> StepSolution {
        let mut profile = Vec::with_capacity(self.cohesive.len());
        for ((qp, j), w) in self.cohesive.iter_mut().zip(&jumps).zip(&work) {
            qp.state = *w;

            let d = w.d;
            let kt = (1.0 - d) * self.params.k1;
            let kn = if j.y >= 0.0 { (1.0 - d) * self.params.k3 } else { self.params.k3 };
            profile.push((qp.x, kt * j.x, kn * j.y, d));
        }
        StepSolution { u, cohesive: profile }
    }

    fn internal_bulk(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.n_dof);
        for (d3, e) in &self.elems {
            let c = [self.nodes[e[0]], self.nodes[e[1]], self.nodes[e[2]], self.nodes[e[3]]];
            let mut ue = quad::ElemVec::zeros();
            for (a, &na) in e.iter().enumerate() {
                ue[2 * a] = u[2 * na];
                ue[2 * a + 1] = u[2 * na + 1];
            }
            let re = quad::internal_force(&c, d3, &ue);
            for (a, &na) in e.iter().enumerate() {
                r[2 * na] += re[2 * a];
                r[2 * na + 1] += re[2 * a + 1];
            }
        }
        r
    }

    fn tangent_bulk(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n_dof, self.n_dof);
        for (d3, e) in &self.elems {
            let c = [self.nodes[e[0]], self.nodes[e[1]], self.nodes[e[2]], self.nodes[e[3]]];
            let mut ue = quad::ElemVec::zeros();
            for (a, &na) in e.iter().enumerate() {
                ue[2 * a] = u[2 * na];
                ue[2 * a + 1] = u[2 * na + 1];
            }
            let (_, ke) = quad::residual_tangent(&c, d3, &ue);
            for (a, &na) in e.iter().enumerate() {
                for (b, &nb) in e.iter().enumerate() {
                    for i in 0..2 {
                        for j in 0..2 {
                            k[(2 * na + i, 2 * nb + j)] += ke[(2 * a + i, 2 * b + j)];
                        }
                    }
                }
            }
        }
        k
    }

    /// Map substructure displacement vectors onto the monolithic dof vector,
    /// averaging coincident interface copies.
    pub fn map_from_decomposition(&self, decomp: &Decomposition, us: &[DVector<f64>]) -> DVector<f64> {
        let mut sum = DVector::zeros(self.n_dof);
        let mut count = vec![0.0f64; self.n_dof];
        let nx1 = self.nx + 1;
        for (s, sub) in decomp.substructures.iter().enumerate() {
            for j in 0..=sub.ny_e {
                for i in 0..=sub.nx_e {
                    let gi = sub.col * decomp.sub_nx + i;
                    let raw = sub.ply * self.raw_per_ply + j * nx1 + gi;
                    let node = self.remap[raw];
                    let loc = j * (sub.nx_e + 1) + i;
                    for dir in 0..2 {
                        sum[2 * node + dir] += us[s][2 * loc + dir];
                        count[2 * node + dir] += 1.0;
                    }
                }
            }
        }
        for (v, c) in sum.iter_mut().zip(count) {
            if c > 0.0 {
                *v /= c;
            }
        }
        sum
    }

    /// Relative energy-norm gap between two dof vectors in the bulk metric.
    pub fn energy_gap(&self, u: &DVector<f64>, u_ref: &DVector<f64>) -> f64 {
        let k = self.bulk_stiffness();
        let diff = u - u_ref;
        let kd = spmv(&k, &diff);
        let kr = spmv(&k, u_ref);
        let num = diff.dot(&kd);
        let den = u_ref.dot(&kr);
        (num.max(0.0) / den.max(1e-300)).sqrt()
    }
}

fn push_edge_load(
    loads: &mut Vec<(usize, f64, TimeProfile)>,
    bc: &crate::model::BoundaryCondition,
    edge_len: f64,
    a: usize,
    b: usize,
) {
    if bc.kind != BcKind::Neumann {
        return;
    }
    for dir in 0..2 {
        if bc.value[dir] != 0.0 {
            let f = bc.value[dir] * edge_len * 0.5;
            loads.push((2 * a + dir, f, bc.profile.clone()));
            loads.push((2 * b + dir, f, bc.profile.clone()));
        }
    }
}

fn spmv(m: &CscMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(x.len());
    for (i, j, v) in m.triplet_iter() {
        y[i] += v * x[j];
    }
    y
}

/// Direct solve with hard Dirichlet elimination.
pub fn solve_constrained(
    k: &CscMatrix<f64>,
    f: &DVector<f64>,
    dirichlet: &[(usize, f64)],
) -> Result<DVector<f64>> {
    let n = f.len();
    let mut fixed = vec![None; n];
    for (dof, v) in dirichlet {
        fixed[*dof] = Some(*v);
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let pos: Vec<Option<usize>> = {
        let mut p = vec![None; n];
        for (loc, &g) in free.iter().enumerate() {
            p[g] = Some(loc);
        }
        p
    };
    let mut coo = CooMatrix::new(free.len(), free.len());
    let mut rhs = DVector::zeros(free.len());
    for (loc, &g) in free.iter().enumerate() {
        rhs[loc] = f[g];
    }
    for (i, j, v) in k.triplet_iter() {
        match (pos[i], pos[j]) {
            (Some(pi), Some(pj)) => coo.push(pi, pj, *v),
            (Some(pi), None) => rhs[pi] -= v * fixed[j].unwrap(),
            _ => {}
        }
    }
    let kff = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&kff)
        .map_err(|e| DelamError::Singular(format!("monolithic stiffness: {e:?}")))?;
    let x = chol.solve(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()));
    let mut u = DVector::zeros(n);
    for (loc, &g) in free.iter().enumerate() {
        u[g] = x[(loc, 0)];
    }
    for (dof, v) in dirichlet {
        u[*dof] = *v;
    }
    Ok(u)
}
