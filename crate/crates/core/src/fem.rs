//! Per-substructure finite element mechanics: stiffness assembly, trace maps
//! onto interface quadrature points, the Robin-augmented factorization, the
//! global-stage solve and its geometrically nonlinear Newton variant.
//!
//! All interface fields handled here are quadrature-point arrays of global
//! (x, y) 2-vectors. Search directions act per point in the interface
//! (tangent, normal) frame; on perfect interfaces the macro part of the
//! search direction can be raised above the micro part, which adds a rank-4
//! coupling through the interface macro basis.

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};

use crate::error::{DelamError, Result};
use crate::interface::KPair;
use crate::macroscale::{MacroBasis, MACRO_DIM};
use crate::mesh::{Decomposition, QPoint};
use crate::model::TimeProfile;
use crate::quad;

/// Trace of one substructure side: local nodes ordered along the interface
/// and the interface quadrature layout they map to.
#[derive(Debug, Clone)]
pub struct SideTrace {
    pub iface: usize,
    pub side_idx: usize,
    pub nodes: Vec<usize>,
    pub n_qp: usize,
}

/// Search directions of one interface side, per quadrature point, in the
/// (tangent, normal) frame. `macro_k` carries the enhanced macro-part values
/// on perfect interfaces; `None` means the macro part equals the micro part.
#[derive(Debug, Clone, PartialEq)]
pub struct SideK {
    pub k: Vec<KPair>,
    pub macro_k: Option<KPair>,
}

impl SideK {
    pub fn uniform(n_qp: usize, kt: f64, kn: f64) -> Self {
        SideK { k: vec![(kt, kn); n_qp], macro_k: None }
    }
}

/// Static per-substructure data: reference stiffness, trace maps, loads.
pub struct SubdomainFem {
    pub id: usize,
    pub n_dof: usize,
    pub coords: Vec<Point2<f64>>,
    pub elems: Vec<[usize; 4]>,
    pub d3: nalgebra::Matrix3<f64>,
    pub k_e: CscMatrix<f64>,
    pub sides: Vec<SideTrace>,
    /// Constant body-force vector (already scaled by rho).
    pub body: DVector<f64>,
    /// Point loads resolved to local dof with their time profiles.
    pub point_loads: Vec<(usize, f64, TimeProfile)>,
}

/// Robin-augmented factorization, valid for one search-direction version.
pub struct RobinOperator {
    pub chol: CscCholesky<f64>,
    /// The Robin blocks alone (without K_E), needed by the Newton tangent.
    pub robin_only: CscMatrix<f64>,
    pub version: u64,
}

pub fn assemble_linear(decomp: &Decomposition, sub_id: usize) -> SubdomainFem {
    let sub = &decomp.substructures[sub_id];
    let n_dof = sub.n_dof();
    let mut coo = CooMatrix::new(n_dof, n_dof);
    for e in &sub.elems {
        let c = [sub.nodes[e[0]], sub.nodes[e[1]], sub.nodes[e[2]], sub.nodes[e[3]]];
        let ke = quad::stiffness(&c, &sub.d3);
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
    let k_e = CscMatrix::from(&coo);

    let mut body = DVector::zeros(n_dof);
    if let Some(f) = decomp.model.body_force {
        let fd = Vector2::new(f[0], f[1]) * sub.rho;
        for e in &sub.elems {
            let c = [sub.nodes[e[0]], sub.nodes[e[1]], sub.nodes[e[2]], sub.nodes[e[3]]];
            let fe = quad::body_force(&c, fd);
            for (a, &na) in e.iter().enumerate() {
                body[2 * na] += fe[2 * a];
                body[2 * na + 1] += fe[2 * a + 1];
            }
        }
    }

    let sides = sub
        .sides
        .iter()
        .map(|&(iface, side_idx)| SideTrace {
            iface,
            side_idx,
            nodes: decomp.interfaces[iface].sides[side_idx].nodes.clone(),
            n_qp: decomp.interfaces[iface].n_qp(),
        })
        .collect();

    SubdomainFem {
        id: sub_id,
        n_dof,
        coords: sub.nodes.clone(),
        elems: sub.elems.clone(),
        d3: sub.d3,
        k_e,
        sides,
        body,
        point_loads: Vec::new(),
    }
}

/// Resolve the model's point loads onto their owning substructures.
pub fn resolve_point_loads(decomp: &Decomposition, fems: &mut [SubdomainFem]) {
    for load in &decomp.model.point_loads {
        let (sub, node) = decomp.locate_node(load.point);
        for dir in 0..2 {
            if load.force[dir] != 0.0 {
                fems[sub]
                    .point_loads
                    .push((2 * node + dir, load.force[dir], load.profile.clone()));
            }
        }
    }
}

impl SubdomainFem {
    /// External load vector at a given time step.
    pub fn external_load(&self, step: usize, n_steps: usize) -> DVector<f64> {
        let mut f = self.body.clone();
        for (dof, value, profile) in &self.point_loads {
            f[*dof] += value * profile.factor(step, n_steps);
        }
        f
    }

    /// Evaluate the trace of a dof vector at the quadrature points of a side.
    pub fn trace(&self, u: &DVector<f64>, side: &SideTrace, qps: &[QPoint]) -> Vec<Vector2<f64>> {
        let mut out = Vec::with_capacity(side.n_qp);
        for (q, qp) in qps.iter().enumerate() {
            let e = q / 2;
            let (na, nb) = (side.nodes[e], side.nodes[e + 1]);
            let (sa, sb) = qp.shape;
            out.push(Vector2::new(
                sa * u[2 * na] + sb * u[2 * nb],
                sa * u[2 * na + 1] + sb * u[2 * nb + 1],
            ));
        }
        out
    }

    /// Accumulate the weighted transpose-trace of a quadrature-point field:
    /// out += sum_q w_q N_i(q) g(q).
    pub fn scatter(
        &self,
        g: &[Vector2<f64>],
        side: &SideTrace,
        qps: &[QPoint],
        out: &mut DVector<f64>,
    ) {
        for (q, qp) in qps.iter().enumerate() {
            let e = q / 2;
            let (na, nb) = (side.nodes[e], side.nodes[e + 1]);
            let (sa, sb) = qp.shape;
            let wg = qp.weight * g[q];
            out[2 * na] += sa * wg.x;
            out[2 * na + 1] += sa * wg.y;
            out[2 * nb] += sb * wg.x;
            out[2 * nb + 1] += sb * wg.y;
        }
    }

    /// Robin matrix blocks for the current search directions of all sides.
    fn robin_blocks(
        &self,
        ks: &[&SideK],
        decomp: &Decomposition,
        bases: &[MacroBasis],
    ) -> CooMatrix<f64> {
        let mut coo = CooMatrix::new(self.n_dof, self.n_dof);
        for (side, sk) in self.sides.iter().zip(ks) {
            let iface = &decomp.interfaces[side.iface];
            let qps = &iface.qpoints;
            for (q, qp) in qps.iter().enumerate() {
                let e = q / 2;
                let pair = [side.nodes[e], side.nodes[e + 1]];
                let shapes = [qp.shape.0, qp.shape.1];
                let (kt, kn) = sk.k[q];
                let k2 = kt * qp.tangent * qp.tangent.transpose()
                    + kn * qp.normal * qp.normal.transpose();
                for a in 0..2 {
                    for b in 0..2 {
                        let f = qp.weight * shapes[a] * shapes[b];
                        for i in 0..2 {
                            for j in 0..2 {
                                coo.push(2 * pair[a] + i, 2 * pair[b] + j, f * k2[(i, j)]);
                            }
                        }
                    }
                }
            }
            // Macro enhancement: rank-4 term through the interface basis.
            if let Some((mt, mn)) = sk.macro_k {
                let (kt, kn) = sk.k[0];
                let dk: Matrix2<f64> = (mt - kt) * qps[0].tangent * qps[0].tangent.transpose()
                    + (mn - kn) * qps[0].normal * qps[0].normal.transpose();
                let basis = &bases[side.iface];
                // c_i(u) = sum_q w_q b_i(q) . u(q); form adds c(u)^T G c(v).
                let n_loc = side.nodes.len();
                let mut p: DMatrix<f64> = DMatrix::zeros(MACRO_DIM, 2 * n_loc);
                for i in 0..MACRO_DIM {
                    for (q, qp) in qps.iter().enumerate() {
                        let e = q / 2;
                        let shapes = [qp.shape.0, qp.shape.1];
                        for a in 0..2 {
                            let loc = e + a;
                            for dir in 0..2 {
                                p[(i, 2 * loc + dir)] +=
                                    qp.weight * basis.vecs[i][q][dir] * shapes[a];
                            }
                        }
                    }
                }
                let mut g: DMatrix<f64> = DMatrix::zeros(MACRO_DIM, MACRO_DIM);
                for i in 0..MACRO_DIM {
                    for j in 0..MACRO_DIM {
                        let mut v = 0.0;
                        for (q, qp) in qps.iter().enumerate() {
                            v += qp.weight
                                * (basis.vecs[i][q].transpose() * dk * basis.vecs[j][q])[(0, 0)];
                        }
                        g[(i, j)] = v;
                    }
                }
                let r: DMatrix<f64> = p.transpose() * g * &p;
                for (bi, &na) in side.nodes.iter().enumerate() {
                    for (bj, &nb) in side.nodes.iter().enumerate() {
                        for i in 0..2 {
                            for j in 0..2 {
                                let v = r[(2 * bi + i, 2 * bj + j)];
                                if v != 0.0 {
                                    coo.push(2 * na + i, 2 * nb + j, v);
                                }
                            }
                        }
                    }
                }
            }
        }
        coo
    }

    /// Factor K_E + sum of Robin blocks. Positive definite for any positive
    /// micro search directions, including floating substructures.
    pub fn robin_factorize(
        &self,
        ks: &[&SideK],
        decomp: &Decomposition,
        bases: &[MacroBasis],
        version: u64,
    ) -> Result<RobinOperator> {
        for (side, sk) in self.sides.iter().zip(ks) {
            for &(kt, kn) in &sk.k {
                if kt <= 0.0 || kn <= 0.0 {
                    return Err(DelamError::Singular(format!(
                        "non-positive search direction on interface {} of substructure {}",
                        side.iface, self.id
                    )));
                }
            }
        }
        let robin = self.robin_blocks(ks, decomp, bases);
        let robin_only = CscMatrix::from(&robin);
        let mut coo = CooMatrix::new(self.n_dof, self.n_dof);
        for (i, j, v) in self.k_e.triplet_iter() {
            coo.push(i, j, *v);
        }
        for (i, j, v) in robin_only.triplet_iter() {
            coo.push(i, j, *v);
        }
        let a = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&a).map_err(|e| {
            DelamError::Singular(format!("substructure {} Robin operator: {e:?}", self.id))
        })?;
        Ok(RobinOperator { chol, robin_only, version })
    }

    pub fn solve(&self, robin: &RobinOperator, rhs: &DVector<f64>) -> DVector<f64> {
        let x = robin
            .chol
            .solve(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()));
        DVector::from_column_slice(x.column(0).as_slice())
    }

    /// Internal force of the total-Lagrangian SVK element field.
    pub fn internal_force(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.n_dof);
        for e in &self.elems {
            let c = [
                self.coords[e[0]],
                self.coords[e[1]],
                self.coords[e[2]],
                self.coords[e[3]],
            ];
            let mut ue = quad::ElemVec::zeros();
            for (a, &na) in e.iter().enumerate() {
                ue[2 * a] = u[2 * na];
                ue[2 * a + 1] = u[2 * na + 1];
            }
            let re = quad::internal_force(&c, &self.d3, &ue);
            for (a, &na) in e.iter().enumerate() {
                r[2 * na] += re[2 * a];
                r[2 * na + 1] += re[2 * a + 1];
            }
        }
        r
    }

    /// Dense consistent tangent (material + geometric) at a state.
    pub fn tangent_dense(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n_dof, self.n_dof);
        for e in &self.elems {
            let c = [
                self.coords[e[0]],
                self.coords[e[1]],
                self.coords[e[2]],
                self.coords[e[3]],
            ];
            let mut ue = quad::ElemVec::zeros();
            for (a, &na) in e.iter().enumerate() {
                ue[2 * a] = u[2 * na];
                ue[2 * a + 1] = u[2 * na + 1];
            }
            let (_, ke) = quad::residual_tangent(&c, &self.d3, &ue);
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

    /// Newton iteration on the Robin-augmented nonlinear residual
    /// r(u) = f_int(u) + R u - rhs, starting from `u0`.
    pub fn newton_solve(
        &self,
        robin: &RobinOperator,
        rhs: &DVector<f64>,
        u0: &DVector<f64>,
        tol: f64,
        max_iter: usize,
    ) -> Result<(DVector<f64>, Vec<f64>)> {
        let robin_dense = {
            let mut m = DMatrix::zeros(self.n_dof, self.n_dof);
            for (i, j, v) in robin.robin_only.triplet_iter() {
                m[(i, j)] += *v;
            }
            m
        };
        let mut u = u0.clone();
        let mut history = Vec::new();
        let residual = |u: &DVector<f64>| -> DVector<f64> {
            self.internal_force(u) + &robin_dense * u - rhs
        };
        let mut r = residual(&u);
        let r0 = r.norm().max(1e-14 * (1.0 + rhs.norm()));
        history.push(r.norm());
        for _ in 0..max_iter {
            if r.norm() <= tol * r0 {
                return Ok((u, history));
            }
            let kt = self.tangent_dense(&u) + &robin_dense;
            let lu = kt.lu();
            let du = lu
                .solve(&r)
                .ok_or_else(|| DelamError::Singular(format!("Newton tangent of substructure {}", self.id)))?;
            u -= du;
            r = residual(&u);
            history.push(r.norm());
        }
        if r.norm() <= tol * r0 {
            Ok((u, history))
        } else {
            Err(DelamError::NewtonDivergence { iters: max_iter, history })
        }
    }
}

/// Apply the search-direction operator of one side to a quadrature-point
/// field: pointwise (tangent, normal) scaling plus the macro enhancement on
/// perfect interfaces.
pub fn apply_k(
    sk: &SideK,
    qps: &[QPoint],
    basis: &MacroBasis,
    v: &[Vector2<f64>],
) -> Vec<Vector2<f64>> {
    let mut out: Vec<Vector2<f64>> = qps
        .iter()
        .zip(v.iter().zip(&sk.k))
        .map(|(qp, (vq, &(kt, kn)))| {
            kt * vq.dot(&qp.tangent) * qp.tangent + kn * vq.dot(&qp.normal) * qp.normal
        })
        .collect();
    if let Some((mt, mn)) = sk.macro_k {
        let (kt, kn) = sk.k[0];
        let w: Vec<f64> = qps.iter().map(|q| q.weight).collect();
        let pv = basis.project(&w, v);
        for ((o, pq), qp) in out.iter_mut().zip(pv.iter()).zip(qps.iter()) {
            *o += (mt - kt) * pq.dot(&qp.tangent) * qp.tangent
                + (mn - kn) * pq.dot(&qp.normal) * qp.normal;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_decomposition, InterfaceKind};
    use crate::model::{BcKind, BoundaryCondition, Edge, LaminateModel, Ply};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn one_ply_model(length: f64, bcs: Vec<BoundaryCondition>) -> LaminateModel {
        let mut materials = BTreeMap::new();
        materials.insert("m".into(), crate::material::Material::isotropic(1000.0, 0.25));
        LaminateModel {
            length,
            time_steps: 1,
            plies: vec![Ply { thickness: 1.0, angle: 0.0, material: "m".into() }],
            materials,
            precracks: vec![],
            boundary_conditions: bcs,
            point_loads: vec![],
            body_force: None,
            perfect_bond: false,
        }
    }

    fn clamp_left() -> BoundaryCondition {
        BoundaryCondition {
            edge: Edge::Left,
            kind: BcKind::Dirichlet,
            span: None,
            components: [true, true],
            value: [0.0, 0.0],
            profile: Default::default(),
        }
    }

    fn build_bases(d: &Decomposition) -> Vec<MacroBasis> {
        d.interfaces
            .iter()
            .map(|f| MacroBasis::build(&f.qpoints, f.length).unwrap())
            .collect()
    }

    fn uniform_ks(fem: &SubdomainFem, k: f64) -> Vec<SideK> {
        fem.sides
            .iter()
            .map(|s| SideK::uniform(s.n_qp, k, k))
            .collect()
    }

    #[test]
    fn floating_substructure_factorizes_with_robin() {
        let model = one_ply_model(4.0, vec![clamp_left()]);
        let d = build_decomposition(&model, 4, 2, 2).unwrap();
        // Substructure 1 (right column) has no Dirichlet side: still SPD.
        let fem = assemble_linear(&d, 1);
        let bases = build_bases(&d);
        let ks = uniform_ks(&fem, 50.0);
        let refs: Vec<&SideK> = ks.iter().collect();
        let robin = fem.robin_factorize(&refs, &d, &bases, 1).unwrap();
        let rhs = DVector::from_element(fem.n_dof, 1.0);
        let u = fem.solve(&robin, &rhs);
        assert!(u.norm().is_finite());
    }

    #[test]
    fn zero_search_direction_rejected() {
        let model = one_ply_model(4.0, vec![clamp_left()]);
        let d = build_decomposition(&model, 4, 2, 2).unwrap();
        let fem = assemble_linear(&d, 1);
        let bases = build_bases(&d);
        let mut ks = uniform_ks(&fem, 50.0);
        ks[0].k[0] = (0.0, 0.0);
        let refs: Vec<&SideK> = ks.iter().collect();
        assert!(fem.robin_factorize(&refs, &d, &bases, 1).is_err());
    }

    #[test]
    fn large_k_approaches_dirichlet_solve() {
        // With k -> very large on all sides, the trace approaches the
        // prescribed What like O(1/k).
        let model = one_ply_model(2.0, vec![clamp_left()]);
        let d = build_decomposition(&model, 2, 2, 2).unwrap();
        let fem = assemble_linear(&d, 0);
        let bases = build_bases(&d);
        // Spec scale: constrained solve is approached at k = 1e8 E / L.
        let mut gaps = Vec::new();
        for &k in &[5e6_f64, 5e8, 5e10] {
            let ks = uniform_ks(&fem, k);
            let refs: Vec<&SideK> = ks.iter().collect();
            let robin = fem.robin_factorize(&refs, &d, &bases, 1).unwrap();
            // Prescribe What = 0.01 * x on every side, Fhat = 0.
            let mut rhs = DVector::zeros(fem.n_dof);
            for (side, sk) in fem.sides.iter().zip(&ks) {
                let qps = &d.interfaces[side.iface].qpoints;
                let what: Vec<Vector2<f64>> = qps
                    .iter()
                    .map(|q| Vector2::new(0.01 * q.pos.x, 0.0))
                    .collect();
                let kw = apply_k(sk, qps, &bases[side.iface], &what);
                fem.scatter(&kw, side, qps, &mut rhs);
            }
            let u = fem.solve(&robin, &rhs);
            // Compare the trace against the prescribed field.
            let mut worst: f64 = 0.0;
            for side in &fem.sides {
                let qps = &d.interfaces[side.iface].qpoints;
                let tr = fem.trace(&u, side, qps);
                for (t, q) in tr.iter().zip(qps.iter()) {
                    worst = worst.max((t.x - 0.01 * q.pos.x).abs());
                }
            }
            gaps.push(worst);
        }
        assert!(gaps[1] < 0.1 * gaps[0]);
        assert!(gaps[2] < 0.1 * gaps[1]);
        assert!(gaps[2] < 1e-8);
    }

    #[test]
    fn newton_matches_linear_solve_in_linear_regime() {
        let model = one_ply_model(4.0, vec![clamp_left()]);
        let d = build_decomposition(&model, 4, 2, 2).unwrap();
        let fem = assemble_linear(&d, 0);
        let bases = build_bases(&d);
        let ks = uniform_ks(&fem, 100.0);
        let refs: Vec<&SideK> = ks.iter().collect();
        let robin = fem.robin_factorize(&refs, &d, &bases, 1).unwrap();
        // Load small enough that quadratic strain terms sit below 1e-10
        // relative: the Newton path must land on the linear solution.
        let mut rhs = DVector::zeros(fem.n_dof);
        for i in 0..fem.n_dof {
            rhs[i] = 1e-10 * ((i % 7) as f64 - 3.0);
        }
        let u_lin = fem.solve(&robin, &rhs);
        let (u_nl, hist) = fem
            .newton_solve(&robin, &rhs, &DVector::zeros(fem.n_dof), 1e-8, 20)
            .unwrap();
        // Loads this small keep the quadratic terms near machine precision:
        // one Newton step lands on the linear solution.
        assert!(hist.len() <= 3);
        assert!((u_lin.clone() - u_nl).norm() / u_lin.norm() < 1e-10);
    }

    #[test]
    fn global_stage_zero_data_gives_zero_fields() {
        let model = one_ply_model(4.0, vec![clamp_left()]);
        let d = build_decomposition(&model, 4, 2, 2).unwrap();
        let fem = assemble_linear(&d, 0);
        let bases = build_bases(&d);
        let ks = uniform_ks(&fem, 100.0);
        let refs: Vec<&SideK> = ks.iter().collect();
        let robin = fem.robin_factorize(&refs, &d, &bases, 1).unwrap();
        let rhs = DVector::zeros(fem.n_dof);
        let u = fem.solve(&robin, &rhs);
        assert!(u.norm() < 1e-14);
    }

    #[test]
    fn perfect_interface_macro_enhancement_keeps_symmetry() {
        let model = one_ply_model(4.0, vec![clamp_left()]);
        let d = build_decomposition(&model, 4, 2, 2).unwrap();
        let fem = assemble_linear(&d, 0);
        let bases = build_bases(&d);
        let mut ks = uniform_ks(&fem, 100.0);
        for (side, sk) in fem.sides.iter().zip(ks.iter_mut()) {
            if d.interfaces[side.iface].kind == InterfaceKind::Perfect {
                sk.macro_k = Some((1e4, 1e4));
            }
        }
        let refs: Vec<&SideK> = ks.iter().collect();
        let robin = fem.robin_factorize(&refs, &d, &bases, 1).unwrap();
        let mut dense = DMatrix::zeros(fem.n_dof, fem.n_dof);
        for (i, j, v) in robin.robin_only.triplet_iter() {
            dense[(i, j)] += *v;
        }
        assert_relative_eq!(dense.clone(), dense.transpose(), epsilon = 1e-9);
        // The operator must also act consistently with apply_k: compare
        // quadratic forms u^T R u against the quadrature expression.
        let mut u = DVector::zeros(fem.n_dof);
        for i in 0..fem.n_dof {
            u[i] = (i as f64 * 0.37).sin();
        }
        let quad_form = (u.transpose() * &dense * &u)[(0, 0)];
        let mut expect = 0.0;
        for (side, sk) in fem.sides.iter().zip(&ks) {
            let qps = &d.interfaces[side.iface].qpoints;
            let tr = fem.trace(&u, side, qps);
            let ktr = apply_k(sk, qps, &bases[side.iface], &tr);
            for ((t, kt), qp) in tr.iter().zip(&ktr).zip(qps) {
                expect += qp.weight * t.dot(kt);
            }
        }
        assert_relative_eq!(quad_form, expect, max_relative = 1e-10);
    }

    #[test]
    fn refactorization_contract_flags_stale_version() {
        let model = one_ply_model(4.0, vec![clamp_left()]);
        let d = build_decomposition(&model, 4, 2, 2).unwrap();
        let fem = assemble_linear(&d, 0);
        let bases = build_bases(&d);
        let ks = uniform_ks(&fem, 100.0);
        let refs: Vec<&SideK> = ks.iter().collect();
        let robin = fem.robin_factorize(&refs, &d, &bases, 7).unwrap();
        assert_eq!(robin.version, 7);
        // A driver comparing versions detects the mismatch after a k change.
        let new_version = 8;
        assert_ne!(robin.version, new_version);
    }
}
