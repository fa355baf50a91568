//! Structured laminate meshing and decomposition into substructures and
//! typed interfaces.
//!
//! The laminate occupies [0, L] x [0, H] with plies stacked in y. Each ply is
//! cut into columns of `sub_nx` x `ne_per_ply` bilinear quads, one
//! substructure per (ply, column), so no substructure straddles a ply
//! interface. Interfaces are straight segment runs with a 2-point Gauss rule
//! per element edge; interior interfaces are conforming by construction.

use nalgebra::{Matrix3, Point2, Vector2};

use crate::error::{DelamError, Result};
use crate::model::{BcKind, Edge, LaminateModel, TimeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceKind {
    Perfect,
    Cohesive,
    Contact,
    BoundaryDirichlet,
    BoundaryNeumann,
}

impl InterfaceKind {
    pub fn is_boundary(self) -> bool {
        matches!(
            self,
            InterfaceKind::BoundaryDirichlet | InterfaceKind::BoundaryNeumann
        )
    }
}

/// One quadrature point of an interface. `shape` holds the P1 values of the
/// two end nodes of the supporting element edge.
#[derive(Debug, Clone, PartialEq)]
pub struct QPoint {
    pub pos: Point2<f64>,
    pub weight: f64,
    pub normal: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub shape: (f64, f64),
}

/// One side of an interface: the owning substructure and its boundary nodes
/// ordered along the interface arclength. Edge `e` connects `nodes[e]` and
/// `nodes[e + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Side {
    pub sub: usize,
    pub nodes: Vec<usize>,
}

/// Boundary condition data resolved onto a boundary interface.
#[derive(Debug, Clone, PartialEq)]
pub struct BcData {
    pub components: [bool; 2],
    pub value: [f64; 2],
    pub profile: TimeProfile,
}

impl BcData {
    fn free() -> Self {
        BcData {
            components: [true, true],
            value: [0.0, 0.0],
            profile: TimeProfile::Named(crate::model::ProfileName::Constant),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub kind: InterfaceKind,
    /// One side for boundary interfaces, two for interior ones. The normal
    /// points outward from `sides[0]`.
    pub sides: Vec<Side>,
    pub qpoints: Vec<QPoint>,
    pub length: f64,
    pub bc: Option<BcData>,
}

impl Interface {
    pub fn n_qp(&self) -> usize {
        self.qpoints.len()
    }

    pub fn is_interior(&self) -> bool {
        self.sides.len() == 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Substructure {
    pub ply: usize,
    pub col: usize,
    pub nodes: Vec<Point2<f64>>,
    pub elems: Vec<[usize; 4]>,
    pub nx_e: usize,
    pub ny_e: usize,
    /// Plane-strain constitutive matrix of the ply material at its angle.
    pub d3: Matrix3<f64>,
    pub rho: f64,
    /// Largest engineering modulus of the ply material, used as the search
    /// direction reference scale.
    pub e_ref: f64,
    /// (interface index, side index within that interface)
    pub sides: Vec<(usize, usize)>,
}

impl Substructure {
    pub fn n_dof(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn area(&self) -> f64 {
        let mut a = 0.0;
        for e in &self.elems {
            let p = [
                self.nodes[e[0]],
                self.nodes[e[1]],
                self.nodes[e[2]],
                self.nodes[e[3]],
            ];
            a += 0.5
                * ((p[0].x * p[1].y - p[1].x * p[0].y)
                    + (p[1].x * p[2].y - p[2].x * p[1].y)
                    + (p[2].x * p[3].y - p[3].x * p[2].y)
                    + (p[3].x * p[0].y - p[0].x * p[3].y));
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub model: LaminateModel,
    pub nx: usize,
    pub ne_per_ply: usize,
    pub sub_nx: usize,
    pub n_cols: usize,
    pub substructures: Vec<Substructure>,
    pub interfaces: Vec<Interface>,
    /// Super-substructure index per substructure.
    pub group_of: Vec<usize>,
    pub n_groups: usize,
}

const ALIGN_TOL: f64 = 1e-9;
const GP: f64 = 0.577_350_269_189_625_8;

/// 2-point Gauss quadrature along a straight segment run of element edges.
/// Exact for polynomials of degree 3 on each edge.
pub fn interface_quadrature(
    points: &[Point2<f64>],
    normal: Vector2<f64>,
    tangent: Vector2<f64>,
) -> Vec<QPoint> {
    let mut qps = Vec::with_capacity(2 * (points.len() - 1));
    for e in 0..points.len() - 1 {
        let a = points[e];
        let b = points[e + 1];
        let h = (b - a).norm();
        for &xi in &[-GP, GP] {
            let na = 0.5 * (1.0 - xi);
            let nb = 0.5 * (1.0 + xi);
            qps.push(QPoint {
                pos: Point2::from(a.coords * na + b.coords * nb),
                weight: 0.5 * h,
                normal,
                tangent,
                shape: (na, nb),
            });
        }
    }
    qps
}

struct Grid<'a> {
    model: &'a LaminateModel,
    nx: usize,
    ne: usize,
    sub_nx: usize,
    n_cols: usize,
    dx: f64,
}

impl Grid<'_> {
    fn x(&self, gi: usize) -> f64 {
        gi as f64 * self.dx
    }

    fn y(&self, ply: usize, j: usize) -> f64 {
        let base = self.model.ply_base(ply);
        if j == self.ne {
            base + self.model.plies[ply].thickness
        } else {
            base + j as f64 * (self.model.plies[ply].thickness / self.ne as f64)
        }
    }

    fn sub_id(&self, ply: usize, col: usize) -> usize {
        ply * self.n_cols + col
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.sub_nx + 1) + i
    }

    /// Snap a coordinate to the global x element grid; error if misaligned.
    fn x_index(&self, x: f64, what: &str) -> Result<usize> {
        let r = x / self.dx;
        let i = r.round();
        if (r - i).abs() > ALIGN_TOL * self.nx as f64 || i < 0.0 || i > self.nx as f64 {
            return Err(DelamError::Mesh(format!(
                "{what} at x = {x} is not aligned to the element grid (dx = {})",
                self.dx
            )));
        }
        Ok(i as usize)
    }
}

pub fn build_decomposition(
    model: &LaminateModel,
    nx: usize,
    ne_per_ply: usize,
    sub_nx: usize,
) -> Result<Decomposition> {
    if nx == 0 || sub_nx == 0 || nx % sub_nx != 0 {
        return Err(DelamError::Mesh(format!(
            "nx = {nx} must be a positive multiple of sub_nx = {sub_nx}"
        )));
    }
    if ne_per_ply == 0 {
        return Err(DelamError::Mesh("ne_per_ply must be >= 1".into()));
    }
    model.validate()?;
    let grid = Grid {
        model,
        nx,
        ne: ne_per_ply,
        sub_nx,
        n_cols: nx / sub_nx,
        dx: model.length / nx as f64,
    };
    let n_plies = model.plies.len();

    // Pre-cracks must land on element boundaries; no silent snapping.
    let mut cracks: Vec<(usize, usize, usize)> = Vec::new();
    for crack in &model.precracks {
        let i0 = grid.x_index(crack.from, "pre-crack start").map_err(|_| {
            DelamError::CrackAlignment {
                interface: crack.interface,
                from: crack.from,
                to: crack.to,
                dx: grid.dx,
            }
        })?;
        let i1 = grid
            .x_index(crack.to, "pre-crack end")
            .map_err(|_| DelamError::CrackAlignment {
                interface: crack.interface,
                from: crack.from,
                to: crack.to,
                dx: grid.dx,
            })?;
        cracks.push((crack.interface, i0, i1));
    }

    // Substructures, one per (ply, column).
    let mut substructures = Vec::with_capacity(n_plies * grid.n_cols);
    for ply in 0..n_plies {
        let mat = model.material_of(ply);
        let d3 = mat.plane_strain(model.plies[ply].angle, &model.plies[ply].material)?;
        let e_ref = mat.e1.max(mat.e2).max(mat.e3);
        for col in 0..grid.n_cols {
            let gi0 = col * sub_nx;
            let mut nodes = Vec::with_capacity((sub_nx + 1) * (ne_per_ply + 1));
            for j in 0..=ne_per_ply {
                for i in 0..=sub_nx {
                    nodes.push(Point2::new(grid.x(gi0 + i), grid.y(ply, j)));
                }
            }
            let mut elems = Vec::with_capacity(sub_nx * ne_per_ply);
            for j in 0..ne_per_ply {
                for i in 0..sub_nx {
                    elems.push([
                        grid.node(i, j),
                        grid.node(i + 1, j),
                        grid.node(i + 1, j + 1),
                        grid.node(i, j + 1),
                    ]);
                }
            }
            substructures.push(Substructure {
                ply,
                col,
                nodes,
                elems,
                nx_e: sub_nx,
                ny_e: ne_per_ply,
                d3,
                rho: mat.rho,
                e_ref,
                sides: Vec::new(),
            });
        }
    }

    let mut interfaces = Vec::new();

    // Vertical perfect interfaces between columns of the same ply.
    for ply in 0..n_plies {
        for col in 0..grid.n_cols - 1 {
            let left = grid.sub_id(ply, col);
            let right = grid.sub_id(ply, col + 1);
            let nodes_l: Vec<usize> = (0..=ne_per_ply).map(|j| grid.node(sub_nx, j)).collect();
            let nodes_r: Vec<usize> = (0..=ne_per_ply).map(|j| grid.node(0, j)).collect();
            let pts: Vec<Point2<f64>> =
                nodes_l.iter().map(|&n| substructures[left].nodes[n]).collect();
            let qpoints = interface_quadrature(&pts, Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0));
            interfaces.push(Interface {
                kind: InterfaceKind::Perfect,
                sides: vec![
                    Side { sub: left, nodes: nodes_l },
                    Side { sub: right, nodes: nodes_r },
                ],
                length: model.plies[ply].thickness,
                qpoints,
                bc: None,
            });
        }
    }

    // Horizontal ply interfaces, split into kind-constant runs per column.
    for line in 0..n_plies.saturating_sub(1) {
        let cracked = |gi: usize| -> bool {
            cracks
                .iter()
                .any(|&(li, i0, i1)| li == line && gi >= i0 && gi < i1)
        };
        let base_kind = if model.perfect_bond {
            InterfaceKind::Perfect
        } else {
            InterfaceKind::Cohesive
        };
        for col in 0..grid.n_cols {
            let lower = grid.sub_id(line, col);
            let upper = grid.sub_id(line + 1, col);
            let gi0 = col * sub_nx;
            // Runs of equal kind at element granularity.
            let mut e = 0;
            while e < sub_nx {
                let kind = if cracked(gi0 + e) {
                    InterfaceKind::Contact
                } else {
                    base_kind
                };
                let mut e_end = e + 1;
                while e_end < sub_nx
                    && (if cracked(gi0 + e_end) {
                        InterfaceKind::Contact
                    } else {
                        base_kind
                    }) == kind
                {
                    e_end += 1;
                }
                let nodes_lo: Vec<usize> =
                    (e..=e_end).map(|i| grid.node(i, ne_per_ply)).collect();
                let nodes_up: Vec<usize> = (e..=e_end).map(|i| grid.node(i, 0)).collect();
                let pts: Vec<Point2<f64>> = nodes_lo
                    .iter()
                    .map(|&n| substructures[lower].nodes[n])
                    .collect();
                let qpoints =
                    interface_quadrature(&pts, Vector2::new(0.0, 1.0), Vector2::new(1.0, 0.0));
                interfaces.push(Interface {
                    kind,
                    sides: vec![
                        Side { sub: lower, nodes: nodes_lo },
                        Side { sub: upper, nodes: nodes_up },
                    ],
                    length: (e_end - e) as f64 * grid.dx,
                    qpoints,
                    bc: None,
                });
                e = e_end;
            }
        }
    }

    // Boundary interfaces. Each outer element edge is covered by exactly one
    // boundary condition record (or left traction-free).
    build_boundary(&grid, &substructures, model, &mut interfaces)?;

    let mut decomp = Decomposition {
        model: model.clone(),
        nx,
        ne_per_ply,
        sub_nx,
        n_cols: grid.n_cols,
        substructures,
        interfaces,
        group_of: vec![0; n_plies * grid.n_cols],
        n_groups: 1,
    };
    for (i, iface) in decomp.interfaces.iter().enumerate() {
        for (s, side) in iface.sides.iter().enumerate() {
            decomp.substructures[side.sub].sides.push((i, s));
        }
    }
    Ok(decomp)
}

/// Assign every outer edge run to its boundary condition record.
fn build_boundary(
    grid: &Grid,
    subs: &[Substructure],
    model: &LaminateModel,
    interfaces: &mut Vec<Interface>,
) -> Result<()> {
    let n_plies = model.plies.len();
    let height = model.total_thickness();

    // Record index covering a given coordinate along the edge, or None.
    let covering = |edge: Edge, mid: f64| -> Result<Option<usize>> {
        let full = match edge {
            Edge::Left | Edge::Right => [0.0, height],
            Edge::Bottom | Edge::Top => [0.0, model.length],
        };
        let mut hit = None;
        for (idx, bc) in model.boundary_conditions.iter().enumerate() {
            if bc.edge != edge {
                continue;
            }
            let span = bc.span.unwrap_or(full);
            if mid >= span[0] && mid <= span[1] {
                if hit.is_some() {
                    return Err(DelamError::Config(format!(
                        "overlapping boundary conditions on edge {edge:?} at {mid}"
                    )));
                }
                hit = Some(idx);
            }
        }
        Ok(hit)
    };

    let push_runs = |edge: Edge,
                         sub: usize,
                         node_of: &dyn Fn(usize) -> usize,
                         coord_of: &dyn Fn(usize) -> f64,
                         n_edges: usize,
                         normal: Vector2<f64>,
                         tangent: Vector2<f64>,
                         interfaces: &mut Vec<Interface>|
     -> Result<()> {
        let mut e = 0;
        while e < n_edges {
            let rec = covering(edge, 0.5 * (coord_of(e) + coord_of(e + 1)))?;
            let mut e_end = e + 1;
            while e_end < n_edges
                && covering(edge, 0.5 * (coord_of(e_end) + coord_of(e_end + 1)))? == rec
            {
                e_end += 1;
            }
            let nodes: Vec<usize> = (e..=e_end).map(node_of).collect();
            let pts: Vec<Point2<f64>> = nodes.iter().map(|&n| subs[sub].nodes[n]).collect();
            let (kind, bc) = match rec {
                None => (InterfaceKind::BoundaryNeumann, BcData::free()),
                Some(idx) => {
                    let r = &model.boundary_conditions[idx];
                    let kind = match r.kind {
                        BcKind::Dirichlet => InterfaceKind::BoundaryDirichlet,
                        BcKind::Neumann => InterfaceKind::BoundaryNeumann,
                    };
                    (
                        kind,
                        BcData {
                            components: r.components,
                            value: r.value,
                            profile: r.profile.clone(),
                        },
                    )
                }
            };
            let length = (pts[pts.len() - 1] - pts[0]).norm();
            let qpoints = interface_quadrature(&pts, normal, tangent);
            interfaces.push(Interface {
                kind,
                sides: vec![Side { sub, nodes }],
                length,
                qpoints,
                bc: Some(bc),
            });
            e = e_end;
        }
        Ok(())
    };

    // Left then right edges, ply by ply.
    for (edge, col, i_loc, nx_dir) in [
        (Edge::Left, 0usize, 0usize, -1.0),
        (Edge::Right, grid.n_cols - 1, grid.sub_nx, 1.0),
    ] {
        for ply in 0..n_plies {
            let sub = grid.sub_id(ply, col);
            push_runs(
                edge,
                sub,
                &|j| grid.node(i_loc, j),
                &|j| grid.y(ply, j),
                grid.ne,
                Vector2::new(nx_dir, 0.0),
                Vector2::new(0.0, 1.0),
                interfaces,
            )?;
        }
    }
    // Bottom then top edges, column by column.
    for (edge, ply, j_loc, ny_dir) in [
        (Edge::Bottom, 0usize, 0usize, -1.0),
        (Edge::Top, n_plies - 1, grid.ne, 1.0),
    ] {
        for col in 0..grid.n_cols {
            let sub = grid.sub_id(ply, col);
            let gi0 = col * grid.sub_nx;
            push_runs(
                edge,
                sub,
                &|i| grid.node(i, j_loc),
                &|i| grid.x(gi0 + i),
                grid.sub_nx,
                Vector2::new(0.0, ny_dir),
                Vector2::new(1.0, 0.0),
                interfaces,
            )?;
        }
    }
    Ok(())
}

impl Decomposition {
    /// Gather substructure columns into `groups_x` vertical slabs of
    /// super-substructures.
    pub fn gather_super(mut self, groups_x: usize) -> Result<Self> {
        if groups_x == 0 || self.n_cols % groups_x != 0 {
            return Err(DelamError::Mesh(format!(
                "groups_x = {groups_x} does not divide the {} substructure columns",
                self.n_cols
            )));
        }
        let w = self.n_cols / groups_x;
        for (s, sub) in self.substructures.iter().enumerate() {
            self.group_of[s] = sub.col / w;
        }
        self.n_groups = groups_x;
        Ok(self)
    }

    /// Interfaces whose two substructures belong to different
    /// super-substructures.
    pub fn super_interfaces(&self) -> Vec<usize> {
        self.interfaces
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                f.is_interior() && self.group_of[f.sides[0].sub] != self.group_of[f.sides[1].sub]
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn total_area(&self) -> f64 {
        self.substructures.iter().map(|s| s.area()).sum()
    }

    pub fn n_dof_micro(&self) -> usize {
        self.substructures.iter().map(|s| s.n_dof()).sum()
    }

    /// Substructure groups with no Dirichlet boundary attachment.
    pub fn floating_groups(&self) -> Vec<usize> {
        let mut attached = vec![false; self.n_groups];
        for iface in &self.interfaces {
            if iface.kind == InterfaceKind::BoundaryDirichlet {
                attached[self.group_of[iface.sides[0].sub]] = true;
            }
        }
        (0..self.n_groups).filter(|&g| !attached[g]).collect()
    }

    /// Locate the mesh node nearest to a point: returns (substructure, local
    /// node). Points on substructure boundaries resolve deterministically to
    /// the lowest owning substructure index.
    pub fn locate_node(&self, point: [f64; 2]) -> (usize, usize) {
        let mut best = (0usize, 0usize, f64::INFINITY);
        for (s, sub) in self.substructures.iter().enumerate() {
            for (n, p) in sub.nodes.iter().enumerate() {
                let d2 = (p.x - point[0]).powi(2) + (p.y - point[1]).powi(2);
                if d2 + 1e-14 < best.2 {
                    best = (s, n, d2);
                }
            }
        }
        (best.0, best.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BcKind, BoundaryCondition, Edge, Ply, PreCrack};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn simple_model(n_plies: usize, length: f64, cracks: Vec<PreCrack>) -> LaminateModel {
        let mut materials = BTreeMap::new();
        materials.insert("m".to_string(), crate::material::Material::isotropic(1000.0, 0.3));
        LaminateModel {
            length,
            time_steps: 1,
            plies: (0..n_plies)
                .map(|_| Ply {
                    thickness: 1.0,
                    angle: 0.0,
                    material: "m".into(),
                })
                .collect(),
            materials,
            precracks: cracks,
            boundary_conditions: vec![BoundaryCondition {
                edge: Edge::Left,
                kind: BcKind::Dirichlet,
                span: None,
                components: [true, true],
                value: [0.0, 0.0],
                profile: Default::default(),
            }],
            point_loads: vec![],
            body_force: None,
            perfect_bond: false,
        }
    }

    #[test]
    fn smallest_split_one_ply() {
        let model = simple_model(1, 4.0, vec![]);
        let d = build_decomposition(&model, 4, 1, 2).unwrap();
        assert_eq!(d.substructures.len(), 2);
        let perfect: Vec<_> = d
            .interfaces
            .iter()
            .filter(|f| f.kind == InterfaceKind::Perfect)
            .collect();
        assert_eq!(perfect.len(), 1);
        assert!(d
            .interfaces
            .iter()
            .filter(|f| f.kind.is_boundary())
            .count() > 0);
        // Every boundary segment belongs to exactly one interface: total edge
        // count over interfaces must equal the sum of substructure boundary edges.
        let edges_in_ifaces: usize = d
            .interfaces
            .iter()
            .flat_map(|f| f.sides.iter())
            .map(|s| s.nodes.len() - 1)
            .sum();
        let boundary_edges_per_sub = 2 * (2 + 1); // perimeter edges of a 2x1 grid
        assert_eq!(edges_in_ifaces, 2 * boundary_edges_per_sub);
    }

    #[test]
    fn full_precrack_makes_all_contact() {
        let model = simple_model(
            2,
            4.0,
            vec![PreCrack {
                interface: 0,
                from: 0.0,
                to: 4.0,
            }],
        );
        let d = build_decomposition(&model, 4, 1, 2).unwrap();
        let contact = d
            .interfaces
            .iter()
            .filter(|f| f.kind == InterfaceKind::Contact)
            .count();
        let cohesive = d
            .interfaces
            .iter()
            .filter(|f| f.kind == InterfaceKind::Cohesive)
            .count();
        assert_eq!(contact, 2);
        assert_eq!(cohesive, 0);
    }

    #[test]
    fn four_ply_scaled_topology() {
        // Scaled 4-ply layup with two pre-cracks of the same length on the
        // central and upper ply interfaces.
        let mut model = simple_model(4, 40.0, vec![]);
        model.precracks = vec![
            PreCrack { interface: 1, from: 10.0, to: 30.0 },
            PreCrack { interface: 2, from: 10.0, to: 30.0 },
        ];
        let d = build_decomposition(&model, 40, 2, 10).unwrap();
        assert_eq!(d.substructures.len(), 16);
        let contact = d.interfaces.iter().filter(|f| f.kind == InterfaceKind::Contact).count();
        let cohesive = d.interfaces.iter().filter(|f| f.kind == InterfaceKind::Cohesive).count();
        // Hand count: three ply lines of four column segments each; the two
        // cracked lines have columns 1 and 2 fully covered by the cracks.
        assert_eq!(contact + cohesive, 12);
        assert_eq!(contact, 4);
        assert_eq!(cohesive, 8);
    }

    #[test]
    fn misaligned_precrack_rejected() {
        let model = simple_model(
            2,
            4.0,
            vec![PreCrack { interface: 0, from: 0.0, to: 1.3 }],
        );
        let err = build_decomposition(&model, 4, 1, 2).unwrap_err();
        assert!(matches!(err, DelamError::CrackAlignment { .. }));
    }

    #[test]
    fn areas_sum_to_laminate_area() {
        let model = simple_model(3, 7.0, vec![]);
        let d = build_decomposition(&model, 14, 2, 7).unwrap();
        let total = d.total_area();
        assert_relative_eq!(total, 7.0 * 3.0, max_relative = 1e-12);
    }

    #[test]
    fn interior_traces_conform_pointwise() {
        let model = simple_model(2, 6.0, vec![]);
        let d = build_decomposition(&model, 6, 3, 3).unwrap();
        for iface in d.interfaces.iter().filter(|f| f.is_interior()) {
            let s0 = &iface.sides[0];
            let s1 = &iface.sides[1];
            assert_eq!(s0.nodes.len(), s1.nodes.len());
            for (a, b) in s0.nodes.iter().zip(&s1.nodes) {
                let pa = d.substructures[s0.sub].nodes[*a];
                let pb = d.substructures[s1.sub].nodes[*b];
                assert_eq!(pa, pb, "conforming interfaces must share coordinates");
            }
        }
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let model = simple_model(2, 6.0, vec![PreCrack { interface: 0, from: 0.0, to: 2.0 }]);
        let a = build_decomposition(&model, 6, 2, 3).unwrap();
        let b = build_decomposition(&model, 6, 2, 3).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn quadrature_unit_segment() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)];
        let qps = interface_quadrature(&pts, Vector2::new(0.0, 1.0), Vector2::new(1.0, 0.0));
        assert_eq!(qps.len(), 2);
        let expect = 1.0 / (2.0 * 3.0f64.sqrt());
        assert_relative_eq!(qps[0].pos.x, 0.5 - expect, epsilon = 1e-15);
        assert_relative_eq!(qps[1].pos.x, 0.5 + expect, epsilon = 1e-15);
        assert_eq!(qps[0].weight, 0.5);
        assert_eq!(qps[1].weight, 0.5);
    }

    #[test]
    fn quadrature_integrates_length_and_cubics() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.4, 0.0),
            Point2::new(1.0, 0.0),
        ];
        let qps = interface_quadrature(&pts, Vector2::new(0.0, 1.0), Vector2::new(1.0, 0.0));
        let len: f64 = qps.iter().map(|q| q.weight).sum();
        assert_relative_eq!(len, 1.0, epsilon = 1e-15);
        let cubic: f64 = qps.iter().map(|q| q.weight * q.pos.x.powi(3)).sum();
        assert_relative_eq!(cubic, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn gather_super_examples() {
        let model = simple_model(4, 40.0, vec![]);
        let d = build_decomposition(&model, 40, 2, 10).unwrap();
        let d1 = d.clone().gather_super(1).unwrap();
        assert_eq!(d1.n_groups, 1);
        assert!(d1.super_interfaces().is_empty());
        let d2 = d.clone().gather_super(2).unwrap();
        assert_eq!(d2.n_groups, 2);
        assert!(!d2.super_interfaces().is_empty());
        assert!(d.gather_super(3).is_err());
    }

    #[test]
    fn bc_spans_split_boundary_runs() {
        let mut model = simple_model(2, 4.0, vec![]);
        model.boundary_conditions = vec![
            BoundaryCondition {
                edge: Edge::Left,
                kind: BcKind::Dirichlet,
                span: Some([0.0, 1.0]),
                components: [true, true],
                value: [0.0, 0.0],
                profile: Default::default(),
            },
            BoundaryCondition {
                edge: Edge::Left,
                kind: BcKind::Dirichlet,
                span: Some([1.0, 2.0]),
                components: [false, true],
                value: [0.0, 1.0],
                profile: Default::default(),
            },
        ];
        let d = build_decomposition(&model, 4, 2, 2).unwrap();
        let left_dirichlet: Vec<_> = d
            .interfaces
            .iter()
            .filter(|f| f.kind == InterfaceKind::BoundaryDirichlet)
            .collect();
        assert_eq!(left_dirichlet.len(), 2);
        assert_eq!(left_dirichlet[0].bc.as_ref().unwrap().components, [true, true]);
        assert_eq!(left_dirichlet[1].bc.as_ref().unwrap().components, [false, true]);
    }

    #[test]
    fn floating_groups_detected() {
        let model = simple_model(1, 8.0, vec![]);
        let d = build_decomposition(&model, 8, 1, 2)
            .unwrap()
            .gather_super(4)
            .unwrap();
        // Only the leftmost slab touches the Dirichlet edge.
        assert_eq!(d.floating_groups(), vec![1, 2, 3]);
    }
}
