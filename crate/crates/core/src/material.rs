//! Orthotropic ply material and its plane-strain reduction.
//!
//! Plies are described by nine engineering constants in the material frame
//! (1 = fiber, 2 = in-plane transverse, 3 = normal). The laminate is modeled
//! in the (x, y) plane with y the stacking direction, so the material normal
//! axis 3 always maps to global y and the fiber angle rotates axes 1-2 about
//! y. The plane-strain constitutive matrix is the (xx, yy, xy) block of the
//! rotated 3D stiffness.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{DelamError, Result};

/// Engineering constants of an orthotropic ply (MPa for moduli).
/// `rho` only scales the body-force density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub nu12: f64,
    pub nu13: f64,
    pub nu23: f64,
    pub g12: f64,
    pub g13: f64,
    pub g23: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_rho() -> f64 {
    1.0
}

impl Material {
    pub fn isotropic(e: f64, nu: f64) -> Self {
        let g = e / (2.0 * (1.0 + nu));
        Material {
            e1: e,
            e2: e,
            e3: e,
            nu12: nu,
            nu13: nu,
            nu23: nu,
            g12: g,
            g13: g,
            g23: g,
            rho: 1.0,
        }
    }

    /// 6x6 compliance in the material frame, Voigt order (11,22,33,23,13,12),
    /// engineering shear strains.
    fn compliance(&self) -> SMatrix<f64, 6, 6> {
        let mut s = SMatrix::<f64, 6, 6>::zeros();
        s[(0, 0)] = 1.0 / self.e1;
        s[(1, 1)] = 1.0 / self.e2;
        s[(2, 2)] = 1.0 / self.e3;
        s[(0, 1)] = -self.nu12 / self.e1;
        s[(1, 0)] = s[(0, 1)];
        s[(0, 2)] = -self.nu13 / self.e1;
        s[(2, 0)] = s[(0, 2)];
        s[(1, 2)] = -self.nu23 / self.e2;
        s[(2, 1)] = s[(1, 2)];
        s[(3, 3)] = 1.0 / self.g23;
        s[(4, 4)] = 1.0 / self.g13;
        s[(5, 5)] = 1.0 / self.g12;
        s
    }

    /// 6x6 stiffness in the material frame.
    pub fn stiffness_3d(&self, name: &str) -> Result<SMatrix<f64, 6, 6>> {
        let s = self.compliance();
        let eig = nalgebra::SymmetricEigen::new(s);
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            return Err(DelamError::Material {
                name: name.to_string(),
                detail: format!("compliance has a non-positive eigenvalue {min:.3e}"),
            });
        }
        s.try_inverse().ok_or_else(|| DelamError::Material {
            name: name.to_string(),
            detail: "compliance not invertible".into(),
        })
    }

    /// Plane-strain constitutive matrix for a ply rotated by `angle_deg`
    /// about the stacking axis. Voigt order (xx, yy, xy), engineering shear.
    pub fn plane_strain(&self, angle_deg: f64, name: &str) -> Result<Matrix3<f64>> {
        let cv = self.stiffness_3d(name)?;
        let c = voigt_to_tensor(&cv);
        // Material basis vectors expressed in global (x, y, z); axis 3 -> y.
        let th = angle_deg.to_radians();
        let m1 = Vector3::new(th.cos(), 0.0, th.sin());
        let m2 = Vector3::new(-th.sin(), 0.0, th.cos());
        let m3 = Vector3::new(0.0, 1.0, 0.0);
        let a = [m1, m2, m3];
        let mut cg = [[[[0.0f64; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let mut v = 0.0;
                        for p in 0..3 {
                            for q in 0..3 {
                                for r in 0..3 {
                                    for t in 0..3 {
                                        v += a[p][i] * a[q][j] * a[r][k] * a[t][l] * c[p][q][r][t];
                                    }
                                }
                            }
                        }
                        cg[i][j][k][l] = v;
                    }
                }
            }
        }
        // Plane-strain block: global components xx, yy, xy.
        let idx = [(0usize, 0usize), (1, 1), (0, 1)];
        let mut d = Matrix3::zeros();
        for (row, &(i, j)) in idx.iter().enumerate() {
            for (col, &(k, l)) in idx.iter().enumerate() {
                d[(row, col)] = cg[i][j][k][l];
            }
        }
        let eig = nalgebra::SymmetricEigen::new(d);
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            return Err(DelamError::Material {
                name: name.to_string(),
                detail: format!(
                    "plane-strain stiffness at angle {angle_deg} has eigenvalue {min:.3e}"
                ),
            });
        }
        Ok(d)
    }
}

/// Expand a Voigt 6x6 stiffness to the full 3x3x3x3 tensor.
fn voigt_to_tensor(cv: &SMatrix<f64, 6, 6>) -> [[[[f64; 3]; 3]; 3]; 3] {
    const MAP: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];
    let mut c = [[[[0.0f64; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    c[i][j][k][l] = cv[(MAP[i][j], MAP[k][l])];
                }
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn carbon() -> Material {
        Material {
            e1: 185_500.0,
            e2: 9_900.0,
            e3: 9_900.0,
            nu12: 0.34,
            nu13: 0.34,
            nu23: 0.5,
            g12: 6_160.0,
            g13: 6_160.0,
            g23: 3_080.0,
            rho: 1.0,
        }
    }

    #[test]
    fn isotropic_plane_strain_matches_closed_form() {
        let e = 100.0;
        let nu = 0.3;
        let d = Material::isotropic(e, nu).plane_strain(0.0, "iso").unwrap();
        let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
        assert_relative_eq!(d[(0, 0)], f * (1.0 - nu), max_relative = 1e-12);
        assert_relative_eq!(d[(0, 1)], f * nu, max_relative = 1e-12);
        assert_relative_eq!(d[(2, 2)], e / (2.0 * (1.0 + nu)), max_relative = 1e-12);
        assert_relative_eq!(d[(0, 2)], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rotation_by_90_deg_swaps_in_plane_axes() {
        // Rotating the ply by 90 deg about the stacking axis must produce the
        // same in-plane response as swapping the roles of axes 1 and 2 in the
        // engineering constants (nu12 rescales via the reciprocity relation).
        let m = carbon();
        let swapped = Material {
            e1: m.e2,
            e2: m.e1,
            e3: m.e3,
            nu12: m.nu12 * m.e2 / m.e1,
            nu13: m.nu23,
            nu23: m.nu13,
            g12: m.g12,
            g13: m.g23,
            g23: m.g13,
            rho: m.rho,
        };
        let d90 = m.plane_strain(90.0, "c").unwrap();
        let d0s = swapped.plane_strain(0.0, "cs").unwrap();
        assert_relative_eq!(d90, d0s, max_relative = 1e-9);
    }

    #[test]
    fn fiber_direction_dominates_at_zero_angle() {
        let d = carbon().plane_strain(0.0, "c").unwrap();
        assert!(d[(0, 0)] > 10.0 * d[(1, 1)]);
    }

    #[test]
    fn invalid_material_rejected_with_name() {
        let mut m = carbon();
        m.nu12 = 5.0; // breaks positive definiteness
        let err = m.plane_strain(0.0, "bad-ply").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("bad-ply"), "{msg}");
    }
}
