//! Macro/micro splitting of interface fields, homogenized substructure
//! behavior, and the macro admissibility problem with its condensed
//! third-scale solution.
//!
//! The macro space of an interface is the span of affine traces: constant and
//! linear-in-arclength fields per displacement component, four vectors in 2D.
//! The projector is L2-orthogonal in the interface quadrature metric, so the
//! same projector applies to displacements and tractions and the energy
//! splits exactly into macro and micro parts.

use nalgebra::{DMatrix, DVector, Vector2};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};

use crate::error::{DelamError, Result};
use crate::mesh::{Decomposition, QPoint};

pub const MACRO_DIM: usize = 4;

/// Orthonormal affine basis of one interface, stored as quadrature-point
/// fields. `vecs[i][q]` is the value of basis vector `i` at point `q`.
#[derive(Debug, Clone)]
pub struct MacroBasis {
    pub vecs: [Vec<Vector2<f64>>; MACRO_DIM],
}

impl MacroBasis {
    pub fn build(qps: &[QPoint], length: f64) -> Result<Self> {
        if qps.is_empty() || length <= 0.0 {
            return Err(DelamError::Mesh("zero-length interface has no macro basis".into()));
        }
        let t = qps[0].tangent;
        let origin = qps[0].pos;
        let s: Vec<f64> = qps.iter().map(|q| (q.pos - origin).dot(&t)).collect();
        let w: Vec<f64> = qps.iter().map(|q| q.weight).collect();
        let mut raw: [Vec<Vector2<f64>>; MACRO_DIM] = [
            qps.iter().map(|_| Vector2::new(1.0, 0.0)).collect(),
            qps.iter().map(|_| Vector2::new(0.0, 1.0)).collect(),
            s.iter().map(|&si| Vector2::new(si, 0.0)).collect(),
            s.iter().map(|&si| Vector2::new(0.0, si)).collect(),
        ];
        // Modified Gram-Schmidt in the quadrature metric, run twice for
        // orthogonality at machine precision.
        for _pass in 0..2 {
            for i in 0..MACRO_DIM {
                for j in 0..i {
                    let proj = inner(&w, &raw[i], &raw[j]);
                    let (head, tail) = raw.split_at_mut(i);
                    let bj = &head[j];
                    for (v, b) in tail[0].iter_mut().zip(bj.iter()) {
                        *v -= proj * b;
                    }
                }
                let norm = inner(&w, &raw[i], &raw[i]).sqrt();
                if norm < 1e-14 * length {
                    return Err(DelamError::Mesh("degenerate macro basis".into()));
                }
                for v in raw[i].iter_mut() {
                    *v /= norm;
                }
            }
        }
        Ok(MacroBasis { vecs: raw })
    }

    pub fn n_qp(&self) -> usize {
        self.vecs[0].len()
    }

    /// Coefficients of the macro part of `v` in the orthonormal basis.
    pub fn coeffs(&self, w: &[f64], v: &[Vector2<f64>]) -> [f64; MACRO_DIM] {
        let mut c = [0.0; MACRO_DIM];
        for i in 0..MACRO_DIM {
            c[i] = inner(w, &self.vecs[i], v);
        }
        c
    }

    pub fn field(&self, c: &[f64; MACRO_DIM]) -> Vec<Vector2<f64>> {
        let mut out = vec![Vector2::zeros(); self.n_qp()];
        for i in 0..MACRO_DIM {
            for (o, b) in out.iter_mut().zip(self.vecs[i].iter()) {
                *o += c[i] * b;
            }
        }
        out
    }

    /// Macro part of a quadrature-point field.
    pub fn project(&self, w: &[f64], v: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
        self.field(&self.coeffs(w, v))
    }

    /// Split a field into (macro, micro) parts.
    pub fn split(&self, w: &[f64], v: &[Vector2<f64>]) -> (Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
        let macro_part = self.project(w, v);
        let micro: Vec<Vector2<f64>> = v
            .iter()
            .zip(macro_part.iter())
            .map(|(a, m)| a - m)
            .collect();
        (macro_part, micro)
    }
}

pub fn inner(w: &[f64], a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    w.iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(wq, (x, y))| wq * x.dot(y))
        .sum()
}

/// Map from interfaces to rows of the macro problem. Interfaces without
/// macro unknowns (boundary interfaces by default) get `None`.
#[derive(Debug, Clone)]
pub struct MacroDofMap {
    pub offset: Vec<Option<usize>>,
    pub n_dof: usize,
}

impl MacroDofMap {
    pub fn build(decomp: &Decomposition, boundary_neumann_unknowns: bool) -> Self {
        let mut offset = vec![None; decomp.interfaces.len()];
        let mut n = 0;
        for (i, iface) in decomp.interfaces.iter().enumerate() {
            let carries = iface.is_interior()
                || (boundary_neumann_unknowns
                    && iface.kind == crate::mesh::InterfaceKind::BoundaryNeumann);
            if carries {
                offset[i] = Some(n);
                n += MACRO_DIM;
            }
        }
        MacroDofMap { offset, n_dof: n }
    }
}

/// Assembled macro admissibility problem.
pub struct MacroProblem {
    pub lm: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl MacroProblem {
    /// Direct sparse solve, the reference path.
    pub fn solve_direct(&self) -> Result<DVector<f64>> {
        if self.lm.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        let mut coo = CooMatrix::new(self.lm.nrows(), self.lm.ncols());
        for j in 0..self.lm.ncols() {
            for i in 0..self.lm.nrows() {
                let v = self.lm[(i, j)];
                if v != 0.0 {
                    coo.push(i, j, v);
                }
            }
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc)
            .map_err(|e| DelamError::Singular(format!("macro problem: {e:?}")))?;
        let x = chol.solve(&DMatrix::from_column_slice(self.rhs.len(), 1, self.rhs.as_slice()));
        Ok(DVector::from_column_slice(x.column(0).as_slice()))
    }
}

/// Third-scale condensed solve: the macro problem is condensed on the
/// super-interface unknowns and solved by conjugate gradient with a
/// neighbor-assembled preconditioner and a rigid-body coarse space, in the
/// balancing domain decomposition fashion.
pub struct CondensedSolver {
    /// Super-interface macro dof (global macro indices).
    super_dof: Vec<usize>,
    /// Per group: dense block over [interior dof, adjacent super dof].
    group_blocks: Vec<GroupBlock>,
    /// Coarse rigid-body space, one triple of columns per floating group.
    coarse: Option<CoarseSpace>,
    pub n_condensed: usize,
    pub n_coarse: usize,
}

struct GroupBlock {
    interior: Vec<usize>,
    /// Positions of this group's adjacent super dof in the condensed vector.
    super_pos: Vec<usize>,
    a_ii_inv: DMatrix<f64>,
    a_is: DMatrix<f64>,
    /// Local Schur complement on the adjacent super dof.
    schur: DMatrix<f64>,
    /// Pseudo-inverse of the weighted Schur block for preconditioning.
    schur_pinv: DMatrix<f64>,
}

struct CoarseSpace {
    r: DMatrix<f64>,
    /// Cholesky-like dense factorization of R^T S R.
    rtsr_inv: DMatrix<f64>,
}

pub struct CondensedReport {
    pub cg_iters: usize,
}

impl CondensedSolver {
    /// Build from per-substructure homogenized blocks: `sub_blocks[e]` holds
    /// the global macro dof touched by substructure `e` and its dense
    /// homogenized block over those dof.
    pub fn build(
        decomp: &Decomposition,
        map: &MacroDofMap,
        sub_blocks: &[(Vec<usize>, DMatrix<f64>)],
    ) -> Result<Self> {
        let super_set: Vec<usize> = decomp.super_interfaces();
        let is_super: Vec<bool> = {
            let mut v = vec![false; decomp.interfaces.len()];
            for &i in &super_set {
                v[i] = true;
            }
            v
        };
        let mut super_dof = Vec::new();
        for &i in &super_set {
            if let Some(off) = map.offset[i] {
                for k in 0..MACRO_DIM {
                    super_dof.push(off + k);
                }
            }
        }
        let super_pos_of = |dof: usize| super_dof.binary_search(&dof).ok();

        // Group macro dof: interior ones touch only substructures of the group.
        let mut group_interior = vec![Vec::new(); decomp.n_groups];
        for (i, iface) in decomp.interfaces.iter().enumerate() {
            if let Some(off) = map.offset[i] {
                if !is_super[i] {
                    let g = decomp.group_of[iface.sides[0].sub];
                    for k in 0..MACRO_DIM {
                        group_interior[g].push(off + k);
                    }
                }
            }
        }

        // Assemble per-group dense matrices from substructure blocks.
        let mut group_blocks = Vec::with_capacity(decomp.n_groups);
        for g in 0..decomp.n_groups {
            let interior = group_interior[g].clone();
            let mut adj_super: Vec<usize> = Vec::new();
            for (e, _) in decomp.substructures.iter().enumerate() {
                if decomp.group_of[e] != g {
                    continue;
                }
                for &dof in &sub_blocks[e].0 {
                    if super_pos_of(dof).is_some() && !adj_super.contains(&dof) {
                        adj_super.push(dof);
                    }
                }
            }
            adj_super.sort_unstable();
            let pos_int = |dof: usize| interior.binary_search(&dof).ok();
            let pos_sup = |dof: usize| adj_super.binary_search(&dof).ok();
            let ni = interior.len();
            let ns = adj_super.len();
            let mut a_ii = DMatrix::zeros(ni, ni);
            let mut a_is = DMatrix::zeros(ni, ns);
            let mut a_ss = DMatrix::zeros(ns, ns);
            for (e, (dofs, block)) in sub_blocks.iter().enumerate() {
                if decomp.group_of[e] != g {
                    continue;
                }
                for (li, &di) in dofs.iter().enumerate() {
                    for (lj, &dj) in dofs.iter().enumerate() {
                        let v = block[(li, lj)];
                        match (pos_int(di), pos_int(dj)) {
                            (Some(pi), Some(pj)) => a_ii[(pi, pj)] += v,
                            (Some(pi), None) => {
                                if let Some(pj) = pos_sup(dj) {
                                    a_is[(pi, pj)] += v;
                                }
                            }
                            (None, Some(pj)) => {
                                let _ = pj;
                            }
                            (None, None) => {
                                if let (Some(pi), Some(pj)) = (pos_sup(di), pos_sup(dj)) {
                                    a_ss[(pi, pj)] += v;
                                }
                            }
                        }
                    }
                }
            }
            let a_ii_inv = if ni > 0 {
                a_ii.clone().try_inverse().ok_or_else(|| {
                    DelamError::Singular(format!("interior macro block of super-substructure {g}"))
                })?
            } else {
                DMatrix::zeros(0, 0)
            };
            let schur = if ni > 0 {
                &a_ss - a_is.transpose() * &a_ii_inv * &a_is
            } else {
                a_ss.clone()
            };
            // Multiplicity-weighted pseudo-inverse for the preconditioner:
            // every super dof is shared by exactly two groups.
            let schur_pinv = sym_pinv(&schur);
            let super_pos: Vec<usize> = adj_super
                .iter()
                .map(|&d| super_pos_of(d).expect("adjacent super dof"))
                .collect();
            group_blocks.push(GroupBlock {
                interior,
                super_pos,
                a_ii_inv,
                a_is,
                schur,
                schur_pinv,
            });
        }

        let n_condensed = super_dof.len();

        // Coarse space: rigid-body modes of floating super-substructures,
        // projected onto the macro bases of their adjacent super-interfaces.
        let floating = decomp.floating_groups();
        let mut n_coarse = 0;
        let coarse = if n_condensed > 0 && !floating.is_empty() {
            let mut cols: Vec<DVector<f64>> = Vec::new();
            for &g in &floating {
                // Centroid of the group for the rotation mode.
                let mut c = Vector2::zeros();
                let mut cnt = 0.0;
                for (e, sub) in decomp.substructures.iter().enumerate() {
                    if decomp.group_of[e] == g {
                        for p in &sub.nodes {
                            c += p.coords;
                            cnt += 1.0;
                        }
                    }
                }
                c /= cnt;
                for mode in 0..3 {
                    let mut col = DVector::zeros(n_condensed);
                    for &i in &super_set {
                        let iface = &decomp.interfaces[i];
                        let touches = iface
                            .sides
                            .iter()
                            .any(|s| decomp.group_of[s.sub] == g);
                        if !touches {
                            continue;
                        }
                        let off = match map.offset[i] {
                            Some(o) => o,
                            None => continue,
                        };
                        let w: Vec<f64> = iface.qpoints.iter().map(|q| q.weight).collect();
                        let field: Vec<Vector2<f64>> = iface
                            .qpoints
                            .iter()
                            .map(|q| rigid_mode(mode, q.pos.coords - c))
                            .collect();
                        let basis = MacroBasis::build(&iface.qpoints, iface.length)
                            .expect("super-interface basis");
                        let coeffs = basis.coeffs(&w, &field);
                        for k in 0..MACRO_DIM {
                            let pos = super_pos_of(off + k).expect("super dof");
                            col[pos] = coeffs[k];
                        }
                    }
                    cols.push(col);
                    n_coarse += 1;
                }
            }
            let r = DMatrix::from_columns(&cols);
            Some(CoarseSpace { r, rtsr_inv: DMatrix::zeros(0, 0) })
        } else {
            None
        };

        let mut solver = CondensedSolver {
            super_dof,
            group_blocks,
            coarse,
            n_condensed,
            n_coarse,
        };
        // Factor R^T S R once per rebuild.
        if let Some(c) = &solver.coarse {
            let sr = solver.apply_schur_mat(&c.r);
            let rtsr = c.r.transpose() * &sr;
            let inv = rtsr.try_inverse().ok_or_else(|| {
                DelamError::Singular("coarse rigid-body matrix".into())
            })?;
            solver.coarse.as_mut().unwrap().rtsr_inv = inv;
        }
        Ok(solver)
    }

    fn apply_schur(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for gb in &self.group_blocks {
            if gb.super_pos.is_empty() {
                continue;
            }
            let xl = DVector::from_iterator(gb.super_pos.len(), gb.super_pos.iter().map(|&p| x[p]));
            let yl = &gb.schur * xl;
            for (li, &p) in gb.super_pos.iter().enumerate() {
                y[p] += yl[li];
            }
        }
        y
    }

    fn apply_schur_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            let col = self.apply_schur(&DVector::from_column_slice(x.column(j).as_slice()));
            y.set_column(j, &col);
        }
        y
    }

    fn precondition(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(r.len());
        for gb in &self.group_blocks {
            if gb.super_pos.is_empty() {
                continue;
            }
            let rl = DVector::from_iterator(
                gb.super_pos.len(),
                gb.super_pos.iter().map(|&p| 0.5 * r[p]),
            );
            let zl = &gb.schur_pinv * rl;
            for (li, &p) in gb.super_pos.iter().enumerate() {
                z[p] += 0.5 * zl[li];
            }
        }
        z
    }

    fn coarse_solve(&self, r: &DVector<f64>) -> DVector<f64> {
        match &self.coarse {
            None => DVector::zeros(r.len()),
            Some(c) => &c.r * (&c.rtsr_inv * (c.r.transpose() * r)),
        }
    }

    /// Balanced preconditioner application: coarse-project, local solves,
    /// coarse-correct.
    fn balanced_precondition(&self, r: &DVector<f64>) -> DVector<f64> {
        match &self.coarse {
            None => self.precondition(r),
            Some(_) => {
                let x0 = self.coarse_solve(r);
                let r1 = r - self.apply_schur(&x0);
                let z = self.precondition(&r1);
                let r2 = self.apply_schur(&z);
                let x2 = self.coarse_solve(&r2);
                x0 + z - x2
            }
        }
    }

    /// Solve the macro problem through the condensed system. Interior macro
    /// unknowns are recovered by back-substitution.
    pub fn solve(
        &self,
        mp: &MacroProblem,
        rel_tol: f64,
        max_it: usize,
    ) -> Result<(DVector<f64>, CondensedReport)> {
        let n = mp.rhs.len();
        let mut x = DVector::zeros(n);
        if n == 0 {
            return Ok((x, CondensedReport { cg_iters: 0 }));
        }
        // Condensed right-hand side b_S - A_SI A_II^-1 b_I per group.
        let mut b_s = DVector::zeros(self.n_condensed);
        for (pos, &dof) in self.super_dof.iter().enumerate() {
            b_s[pos] = mp.rhs[dof];
        }
        let mut interior_partial: Vec<DVector<f64>> = Vec::with_capacity(self.group_blocks.len());
        for gb in &self.group_blocks {
            let bi = DVector::from_iterator(gb.interior.len(), gb.interior.iter().map(|&d| mp.rhs[d]));
            let t = &gb.a_ii_inv * &bi;
            let corr = gb.a_is.transpose() * &t;
            for (li, &p) in gb.super_pos.iter().enumerate() {
                b_s[p] -= corr[li];
            }
            interior_partial.push(t);
        }

        // Deflated/balanced preconditioned conjugate gradient.
        let mut xs = self.coarse_solve(&b_s);
        let mut r = &b_s - self.apply_schur(&xs);
        let r0_norm = r.norm();
        let mut iters = 0;
        if r0_norm > 0.0 {
            let mut z = self.balanced_precondition(&r);
            let mut p = z.clone();
            let mut rz = r.dot(&z);
            for _ in 0..max_it {
                if r.norm() <= rel_tol * r0_norm {
                    break;
                }
                let ap = self.apply_schur(&p);
                let pap = p.dot(&ap);
                if pap <= 0.0 {
                    return Err(DelamError::CgBreakdown(format!(
                        "p^T S p = {pap:.3e} at iteration {iters} (condensed operator not SPD)"
                    )));
                }
                let alpha = rz / pap;
                xs += alpha * &p;
                r -= alpha * &ap;
                iters += 1;
                if r.norm() <= rel_tol * r0_norm {
                    break;
                }
                z = self.balanced_precondition(&r);
                let rz_new = r.dot(&z);
                let beta = rz_new / rz;
                rz = rz_new;
                p = z + beta * &p;
            }
        }

        for (pos, &dof) in self.super_dof.iter().enumerate() {
            x[dof] = xs[pos];
        }
        // Back-substitution for interior macro unknowns.
        for (gb, t) in self.group_blocks.iter().zip(interior_partial) {
            if gb.interior.is_empty() {
                continue;
            }
            let xl = DVector::from_iterator(gb.super_pos.len(), gb.super_pos.iter().map(|&p| xs[p]));
            let xi = t - &gb.a_ii_inv * (&gb.a_is * xl);
            for (li, &d) in gb.interior.iter().enumerate() {
                x[d] = xi[li];
            }
        }
        Ok((x, CondensedReport { cg_iters: iters }))
    }
}

fn rigid_mode(mode: usize, rel: Vector2<f64>) -> Vector2<f64> {
    match mode {
        0 => Vector2::new(1.0, 0.0),
        1 => Vector2::new(0.0, 1.0),
        _ => Vector2::new(-rel.y, rel.x),
    }
}

/// Pseudo-inverse of a small symmetric matrix, zeroing the near-kernel.
fn sym_pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return a.clone();
    }
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = 1e-10 * lmax.max(1e-300);
    let mut inv = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut {
            let v = eig.eigenvectors.column(i);
            inv += DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| v[r] * v[c] / l);
        }
    }
    inv
}
