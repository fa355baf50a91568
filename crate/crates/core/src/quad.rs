//! Bilinear quadrilateral element, plane strain, 2x2 Gauss.
//!
//! Linear stiffness, Saint Venant-Kirchhoff total-Lagrangian residual and
//! exact consistent tangent (material + geometric parts). All element vectors
//! are ordered (u0x, u0y, u1x, ..., u3y) with nodes counterclockwise.

use nalgebra::{Matrix2, Matrix3, Point2, SMatrix, SVector, Vector2, Vector3};

pub const GAUSS_1D: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];

pub type ElemVec = SVector<f64, 8>;
pub type ElemMat = SMatrix<f64, 8, 8>;

/// Shape function values at (xi, eta) on [-1,1]^2.
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

/// Shape function gradients in reference coordinates.
fn shape_grad_ref(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ]
}

/// Physical shape gradients and Jacobian determinant at a reference point.
/// Panics with diagnostics if the element is inverted: the reference
/// configuration is fixed, so this indicates bad input geometry.
pub fn shape_grad(coords: &[Point2<f64>; 4], xi: f64, eta: f64) -> ([Vector2<f64>; 4], f64) {
    let dref = shape_grad_ref(xi, eta);
    let mut jac = Matrix2::zeros();
    for a in 0..4 {
        jac[(0, 0)] += dref[a][0] * coords[a].x;
        jac[(0, 1)] += dref[a][0] * coords[a].y;
        jac[(1, 0)] += dref[a][1] * coords[a].x;
        jac[(1, 1)] += dref[a][1] * coords[a].y;
    }
    let det = jac.determinant();
    assert!(
        det > 0.0,
        "inverted element: detJ = {det:.3e} at ({xi}, {eta}), coords {coords:?}"
    );
    // jac rows are (d x / d xi, d y / d xi) etc., so grad_x N = jac^-1 grad_ref N.
    let inv = jac.try_inverse().unwrap();
    let mut grads = [Vector2::zeros(); 4];
    for a in 0..4 {
        grads[a] = inv * Vector2::new(dref[a][0], dref[a][1]);
    }
    (grads, det)
}

/// Small-strain B matrix (3x8), Voigt (xx, yy, xy) with engineering shear.
fn b_linear(grads: &[Vector2<f64>; 4]) -> SMatrix<f64, 3, 8> {
    let mut b = SMatrix::<f64, 3, 8>::zeros();
    for a in 0..4 {
        b[(0, 2 * a)] = grads[a].x;
        b[(1, 2 * a + 1)] = grads[a].y;
        b[(2, 2 * a)] = grads[a].y;
        b[(2, 2 * a + 1)] = grads[a].x;
    }
    b
}

/// Linear stiffness matrix.
pub fn stiffness(coords: &[Point2<f64>; 4], d: &Matrix3<f64>) -> ElemMat {
    let mut k = ElemMat::zeros();
    for &(xi, wx) in &GAUSS_1D {
        for &(eta, we) in &GAUSS_1D {
            let (grads, det) = shape_grad(coords, xi, eta);
            let b = b_linear(&grads);
            k += b.transpose() * d * b * (wx * we * det);
        }
    }
    k
}

/// Consistent body-force vector for a constant force density (N/mm^3 scaled
/// by rho upstream).
pub fn body_force(coords: &[Point2<f64>; 4], f: Vector2<f64>) -> ElemVec {
    let mut v = ElemVec::zeros();
    for &(xi, wx) in &GAUSS_1D {
        for &(eta, we) in &GAUSS_1D {
            let n = shape(xi, eta);
            let (_, det) = shape_grad(coords, xi, eta);
            for a in 0..4 {
                v[2 * a] += n[a] * f.x * wx * we * det;
                v[2 * a + 1] += n[a] * f.y * wx * we * det;
            }
        }
    }
    v
}

/// Displacement gradient H = du/dX at a reference point.
fn disp_grad(grads: &[Vector2<f64>; 4], u: &ElemVec) -> Matrix2<f64> {
    let mut h = Matrix2::zeros();
    for a in 0..4 {
        let ua = Vector2::new(u[2 * a], u[2 * a + 1]);
        h += ua * grads[a].transpose();
    }
    h
}

/// Green-Lagrange strain in Voigt form (Exx, Eyy, 2Exy) at a reference point.
pub fn green_lagrange(coords: &[Point2<f64>; 4], u: &ElemVec, xi: f64, eta: f64) -> Vector3<f64> {
    let (grads, _) = shape_grad(coords, xi, eta);
    let h = disp_grad(&grads, u);
    let e = 0.5 * (h + h.transpose() + h.transpose() * h);
    Vector3::new(e[(0, 0)], e[(1, 1)], 2.0 * e[(0, 1)])
}

/// Second Piola-Kirchhoff stress (Voigt) from Green-Lagrange strain.
pub fn pk2_stress(e: &Vector3<f64>, d: &Matrix3<f64>) -> Vector3<f64> {
    d * e
}

/// Strain-displacement matrix of the Green-Lagrange strain at the current
/// state: delta E = B_nl(u) delta u.
fn b_nonlinear(grads: &[Vector2<f64>; 4], h: &Matrix2<f64>) -> SMatrix<f64, 3, 8> {
    let f = Matrix2::identity() + h;
    let mut b = SMatrix::<f64, 3, 8>::zeros();
    for a in 0..4 {
        let gx = grads[a].x;
        let gy = grads[a].y;
        b[(0, 2 * a)] = f[(0, 0)] * gx;
        b[(0, 2 * a + 1)] = f[(1, 0)] * gx;
        b[(1, 2 * a)] = f[(0, 1)] * gy;
        b[(1, 2 * a + 1)] = f[(1, 1)] * gy;
        b[(2, 2 * a)] = f[(0, 0)] * gy + f[(0, 1)] * gx;
        b[(2, 2 * a + 1)] = f[(1, 0)] * gy + f[(1, 1)] * gx;
    }
    b
}

/// Internal force vector of the total-Lagrangian SVK element.
pub fn internal_force(coords: &[Point2<f64>; 4], d: &Matrix3<f64>, u: &ElemVec) -> ElemVec {
    let mut r = ElemVec::zeros();
    for &(xi, wx) in &GAUSS_1D {
        for &(eta, we) in &GAUSS_1D {
            let (grads, det) = shape_grad(coords, xi, eta);
            let h = disp_grad(&grads, u);
            let e = 0.5 * (h + h.transpose() + h.transpose() * h);
            let ev = Vector3::new(e[(0, 0)], e[(1, 1)], 2.0 * e[(0, 1)]);
            let s = d * ev;
            let b = b_nonlinear(&grads, &h);
            r += b.transpose() * s * (wx * we * det);
        }
    }
    r
}

/// Internal force and exact consistent tangent (material + geometric).
pub fn residual_tangent(
    coords: &[Point2<f64>; 4],
    d: &Matrix3<f64>,
    u: &ElemVec,
) -> (ElemVec, ElemMat) {
    let mut r = ElemVec::zeros();
    let mut k = ElemMat::zeros();
    for &(xi, wx) in &GAUSS_1D {
        for &(eta, we) in &GAUSS_1D {
            let w = wx * we;
            let (grads, det) = shape_grad(coords, xi, eta);
            let h = disp_grad(&grads, u);
            let e = 0.5 * (h + h.transpose() + h.transpose() * h);
            let ev = Vector3::new(e[(0, 0)], e[(1, 1)], 2.0 * e[(0, 1)]);
            let s = d * ev;
            let b = b_nonlinear(&grads, &h);
            r += b.transpose() * s * (w * det);
            k += b.transpose() * d * b * (w * det);
            // Geometric part: S contracted with gradients, identity in dofs.
            let smat = Matrix2::new(s.x, s.z, s.z, s.y);
            for a in 0..4 {
                for bn in 0..4 {
                    let g = (grads[a].transpose() * smat * grads[bn])[(0, 0)] * w * det;
                    k[(2 * a, 2 * bn)] += g;
                    k[(2 * a + 1, 2 * bn + 1)] += g;
                }
            }
        }
    }
    (r, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn unit_square() -> [Point2<f64>; 4] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    /// Independent assembly of the bilinear quad stiffness on the unit square
    /// by exact monomial integration (int over [-1,1]^2 of xi^a eta^b equals
    /// 4/((a+1)(b+1)) for even exponents, 0 otherwise). On the unit square the
    /// Jacobian is constant, so B entries are linear polynomials in (xi, eta)
    /// and every stiffness entry is a polynomial we can integrate exactly.
    fn textbook_stiffness(d: &Matrix3<f64>) -> ElemMat {
        // B row coefficients: for node a, dNa/dx = c0 + c1*eta, dNa/dy = b0 + b1*xi
        // (unit square: x = (xi+1)/2 so d/dx = 2 d/dxi).
        let sx = [-1.0, 1.0, 1.0, -1.0];
        let sy = [-1.0, -1.0, 1.0, 1.0];
        // dNa/dxi = sx[a]/4 (1 + sy[a] eta), dNa/deta = sy[a]/4 (1 + sx[a] xi)
        // dNa/dx = sx[a]/2 (1 + sy[a] eta), dNa/dy = sy[a]/2 (1 + sx[a] xi)
        let int_poly = |p: (f64, f64, f64, f64), q: (f64, f64, f64, f64)| -> f64 {
            // p, q = (const, coeff_xi, coeff_eta, coeff_xi_eta); integrate p*q
            // over [-1,1]^2 with measure detJ = 1/4 (maps to unit square area 1).
            let c = p.0 * q.0 + p.1 * q.1 / 3.0 + p.2 * q.2 / 3.0 + p.3 * q.3 / 9.0;
            c * 4.0 / 4.0
        };
        let dx = |a: usize| (sx[a] / 2.0, 0.0, sx[a] * sy[a] / 2.0, 0.0);
        let dy = |a: usize| (sy[a] / 2.0, sx[a] * sy[a] / 2.0, 0.0, 0.0);
        let mut k = ElemMat::zeros();
        for a in 0..4 {
            for b in 0..4 {
                // rows of B for node a: [dx 0; 0 dy; dy dx]
                let kxx = d[(0, 0)] * int_poly(dx(a), dx(b))
                    + d[(2, 2)] * int_poly(dy(a), dy(b))
                    + d[(0, 2)] * (int_poly(dx(a), dy(b)) + int_poly(dy(a), dx(b)));
                let kxy = d[(0, 1)] * int_poly(dx(a), dy(b))
                    + d[(2, 2)] * int_poly(dy(a), dx(b))
                    + d[(0, 2)] * int_poly(dx(a), dx(b))
                    + d[(1, 2)] * int_poly(dy(a), dy(b));
                let kyx = d[(0, 1)] * int_poly(dy(a), dx(b))
                    + d[(2, 2)] * int_poly(dx(a), dy(b))
                    + d[(0, 2)] * int_poly(dx(a), dx(b))
                    + d[(1, 2)] * int_poly(dy(a), dy(b));
                let kyy = d[(1, 1)] * int_poly(dy(a), dy(b))
                    + d[(2, 2)] * int_poly(dx(a), dx(b))
                    + d[(1, 2)] * (int_poly(dy(a), dx(b)) + int_poly(dx(a), dy(b)));
                k[(2 * a, 2 * b)] += kxx;
                k[(2 * a, 2 * b + 1)] += kxy;
                k[(2 * a + 1, 2 * b)] += kyx;
                k[(2 * a + 1, 2 * b + 1)] += kyy;
            }
        }
        k
    }

    #[test]
    fn stiffness_matches_textbook_assembly() {
        // E = 1, nu = 0 plane strain: D = diag(1, 1, 1/2).
        let d = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5);
        let k = stiffness(&unit_square(), &d);
        let k_ref = textbook_stiffness(&d);
        assert_relative_eq!(k, k_ref, max_relative = 1e-12);

        // Also exercise a fully anisotropic D to cover the coupling terms.
        let d2 = Matrix3::new(4.0, 1.2, 0.3, 1.2, 2.5, 0.1, 0.3, 0.1, 1.1);
        assert_relative_eq!(
            stiffness(&unit_square(), &d2),
            textbook_stiffness(&d2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rigid_translation_is_stress_free() {
        let d = Matrix3::new(2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.7);
        let k = stiffness(&unit_square(), &d);
        let u = ElemVec::from_column_slice(&[0.3, -0.2, 0.3, -0.2, 0.3, -0.2, 0.3, -0.2]);
        assert!((k * u).norm() < 1e-12);
    }

    #[test]
    fn gradients_consistent_on_distorted_element() {
        // Linear fields must be reproduced exactly: sum_a X_a grad(N_a)^T = I.
        let coords = [
            Point2::new(0.2, -0.1),
            Point2::new(1.4, 0.3),
            Point2::new(1.1, 1.2),
            Point2::new(-0.2, 0.8),
        ];
        let (grads, _) = shape_grad(&coords, 0.31, -0.62);
        let mut g = Matrix2::zeros();
        for a in 0..4 {
            g += coords[a].coords * grads[a].transpose();
        }
        assert_relative_eq!(g, Matrix2::identity(), epsilon = 1e-13);
    }

    #[test]
    fn green_lagrange_kills_rigid_rotations() {
        let coords = [
            Point2::new(0.1, 0.0),
            Point2::new(1.2, 0.1),
            Point2::new(1.0, 0.9),
            Point2::new(-0.1, 1.1),
        ];
        let th: f64 = 0.7;
        let (c, s) = (th.cos(), th.sin());
        let mut u = ElemVec::zeros();
        for a in 0..4 {
            u[2 * a] = c * coords[a].x - s * coords[a].y - coords[a].x;
            u[2 * a + 1] = s * coords[a].x + c * coords[a].y - coords[a].y;
        }
        for &(xi, _) in &GAUSS_1D {
            for &(eta, _) in &GAUSS_1D {
                let e = green_lagrange(&coords, &u, xi, eta);
                assert!(e.norm() < 1e-12, "E = {e:?}");
            }
        }
        let r = internal_force(&coords, &Matrix3::identity(), &u);
        assert!(r.norm() < 1e-11);
    }

    #[test]
    fn zero_displacement_zero_state() {
        let coords = unit_square();
        let u = ElemVec::zeros();
        let e = green_lagrange(&coords, &u, 0.3, -0.4);
        assert_eq!(e, Vector3::zeros());
        let d = Matrix3::identity();
        assert_eq!(pk2_stress(&e, &d), Vector3::zeros());
        assert_eq!(internal_force(&coords, &d, &u), ElemVec::zeros());
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let coords = [
            Point2::new(0.1, 0.0),
            Point2::new(1.2, 0.1),
            Point2::new(1.0, 0.9),
            Point2::new(-0.1, 1.1),
        ];
        let d = Matrix3::new(3.0, 0.8, 0.2, 0.8, 2.0, 0.1, 0.2, 0.1, 0.9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let mut u = ElemVec::zeros();
            for i in 0..8 {
                u[i] = rng.random_range(-0.1..0.1);
            }
            let (_, kt) = residual_tangent(&coords, &d, &u);
            let h = 1e-6;
            for j in 0..8 {
                let mut up = u;
                let mut um = u;
                up[j] += h;
                um[j] -= h;
                let rp = internal_force(&coords, &d, &up);
                let rm = internal_force(&coords, &d, &um);
                let fd = (rp - rm) / (2.0 * h);
                let col = kt.column(j);
                let denom = col.norm().max(1e-8);
                assert!(
                    (fd - col).norm() / denom < 1e-5,
                    "column {j}: fd {fd:?} vs kt {col:?}"
                );
            }
        }
    }

    #[test]
    fn elastic_energy_is_nonnegative() {
        let d = Matrix3::new(2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.7);
        let k = stiffness(&unit_square(), &d);
        let eig = nalgebra::SymmetricEigen::new(k);
        let mut zero_modes = 0;
        for &lambda in eig.eigenvalues.iter() {
            assert!(lambda > -1e-12);
            if lambda < 1e-10 {
                zero_modes += 1;
            }
        }
        // 2D rigid modes: two translations and one (linearized) rotation.
        assert_eq!(zero_modes, 3);
    }
}
