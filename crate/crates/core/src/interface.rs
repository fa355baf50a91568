//! Pointwise interface behavior and the local stage.
//!
//! All solves act per quadrature point in the interface (tangent, normal)
//! frame. The local stage takes the global-stage fields (W, F) on both sides
//! together with the local search directions k+ and returns hat fields that
//! satisfy the interface equations and the closing relation
//! k+ (W - What) - (F - Fhat) = 0 on each side exactly.
//!
//! Sign conventions: side 1 fields follow the interface normal n (outward
//! from side 0), the jump is [u] = W1 - W0, and tractions are per-side
//! boundary tractions so that action-reaction reads F0 + F1 = 0.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{DelamError, Result};

/// Cohesive interface parameters. Stiffnesses in MPa/mm, Yc in N/mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohesiveParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub yc: f64,
    pub n: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma1: f64,
    #[serde(default = "default_gamma")]
    pub gamma2: f64,
}

fn default_alpha() -> f64 {
    2.0
}

fn default_gamma() -> f64 {
    1.0
}

impl CohesiveParams {
    pub fn validate(&self) -> Result<()> {
        if self.k1 <= 0.0 || self.k2 <= 0.0 || self.k3 <= 0.0 {
            return Err(DelamError::Config("cohesive stiffnesses must be > 0".into()));
        }
        if self.yc <= 0.0 {
            return Err(DelamError::Config("Yc must be > 0".into()));
        }
        if self.n < 1.0 {
            return Err(DelamError::Config("evolution exponent n must be >= 1".into()));
        }
        if self.alpha <= 0.0 || self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(DelamError::Config("invalid mode-coupling parameters".into()));
        }
        Ok(())
    }

    /// Damage evolution function w(Y) = n/(n+1) (Y/Yc)^n, capped at 1.
    pub fn damage_of(&self, y: f64) -> f64 {
        let w = self.n / (self.n + 1.0) * (y / self.yc).powf(self.n);
        w.min(1.0)
    }
}

/// Per-point damage state: `d` and the running sup of the combined energy
/// release rate. Committed once per converged time step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CohesivePointState {
    pub d: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactStatus {
    Open,
    Closed,
}

/// Energy release rates from a (tangent, normal) jump. In 2D the second
/// shear mode carries an identically zero jump; its term is kept so the 3D
/// form of the law is preserved.
pub fn energy_rates(jump_t: f64, jump_n: f64, p: &CohesiveParams) -> (f64, f64, f64) {
    let y1 = 0.5 * p.k1 * jump_t * jump_t;
    let y2 = 0.0;
    let open = jump_n.max(0.0);
    let y3 = 0.5 * p.k3 * open * open;
    (y1, y2, y3)
}

/// Mixed-mode combination (Y3^a + g1 Y1^a + g2 Y2^a)^(1/a).
pub fn combined_rate(y1: f64, y2: f64, y3: f64, p: &CohesiveParams) -> f64 {
    let s = y3.powf(p.alpha) + p.gamma1 * y1.powf(p.alpha) + p.gamma2 * y2.powf(p.alpha);
    s.powf(1.0 / p.alpha)
}

/// History update: the sup over time of the combined rate drives the damage.
pub fn update_history(state: CohesivePointState, y: f64, p: &CohesiveParams) -> CohesivePointState {
    let y_max = state.y_max.max(y);
    CohesivePointState {
        y_max,
        d: p.damage_of(y_max),
    }
}

/// Fields of one side at one quadrature point, in the (tangent, normal) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SidePoint {
    pub w: Vector2<f64>,
    pub f: Vector2<f64>,
}

/// Per-direction search direction (tangent, normal) of one side.
pub type KPair = (f64, f64);

fn solve_spring(dir: usize, a: &SidePoint, b: &SidePoint, ka: KPair, kb: KPair, stiff: f64) -> f64 {
    // Explicit solve of the three-condition system for one direction with an
    // interface spring of stiffness `stiff`: returns Fhat on side 0.
    let (ka, kb) = (pick(ka, dir), pick(kb, dir));
    let g0 = (b.w[dir] - a.w[dir]) + a.f[dir] / ka - b.f[dir] / kb;
    stiff * g0 / (1.0 + stiff * (1.0 / ka + 1.0 / kb))
}

fn pick(k: KPair, dir: usize) -> f64 {
    if dir == 0 {
        k.0
    } else {
        k.1
    }
}

/// Free jump per direction: the jump that results when Fhat = 0.
fn free_jump(dir: usize, a: &SidePoint, b: &SidePoint, ka: KPair, kb: KPair) -> f64 {
    (b.w[dir] - a.w[dir]) + a.f[dir] / pick(ka, dir) - b.f[dir] / pick(kb, dir)
}

fn close_sides(a: &SidePoint, b: &SidePoint, ka: KPair, kb: KPair, fhat0: Vector2<f64>) -> (SidePoint, SidePoint) {
    let mut ha = SidePoint { w: Vector2::zeros(), f: fhat0 };
    let mut hb = SidePoint { w: Vector2::zeros(), f: -fhat0 };
    for dir in 0..2 {
        ha.w[dir] = a.w[dir] - (a.f[dir] - ha.f[dir]) / pick(ka, dir);
        hb.w[dir] = b.w[dir] - (b.f[dir] - hb.f[dir]) / pick(kb, dir);
    }
    (ha, hb)
}

/// Local stage of a cohesive interface point. The damage is frozen at
/// `d_frozen` inside the solve; the caller updates the history from the
/// returned jump. In compression the normal stiffness stays at its virgin
/// value (unilateral damage deactivation); a fully damaged point in
/// compression switches to the unilateral contact branch.
pub struct CohesiveOut {
    pub hat0: SidePoint,
    pub hat1: SidePoint,
    pub jump: Vector2<f64>,
    pub status: ContactStatus,
}

pub fn local_stage_cohesive(
    a: &SidePoint,
    b: &SidePoint,
    ka: KPair,
    kb: KPair,
    d_frozen: f64,
    p: &CohesiveParams,
) -> CohesiveOut {
    let ft = solve_spring(0, a, b, ka, kb, (1.0 - d_frozen) * p.k1);
    let gn = free_jump(1, a, b, ka, kb);
    let (fn_, status) = if gn >= 0.0 {
        // Opening: damaged stiffness acts; fully damaged points are traction-free.
        (solve_spring(1, a, b, ka, kb, (1.0 - d_frozen) * p.k3), ContactStatus::Open)
    } else if d_frozen >= 1.0 {
        // Fully damaged and closing: exact unilateral contact.
        let sk = 1.0 / pick(ka, 1) + 1.0 / pick(kb, 1);
        (gn / sk, ContactStatus::Closed)
    } else {
        // Closing with remaining ligament: virgin normal stiffness.
        (solve_spring(1, a, b, ka, kb, p.k3), ContactStatus::Closed)
    };
    let (hat0, hat1) = close_sides(a, b, ka, kb, Vector2::new(ft, fn_));
    CohesiveOut {
        jump: hat1.w - hat0.w,
        hat0,
        hat1,
        status,
    }
}

/// Local stage of a frictionless contact interface point: trial-then-project
/// complementarity in the normal direction, traction-free tangent.
pub fn local_stage_contact(
    a: &SidePoint,
    b: &SidePoint,
    ka: KPair,
    kb: KPair,
    gap0: f64,
) -> (SidePoint, SidePoint, ContactStatus) {
    let gn = free_jump(1, a, b, ka, kb);
    let (fn_, status) = if gn - gap0 >= 0.0 {
        (0.0, ContactStatus::Open)
    } else {
        let sk = 1.0 / pick(ka, 1) + 1.0 / pick(kb, 1);
        ((gn - gap0) / sk, ContactStatus::Closed)
    };
    let (hat0, hat1) = close_sides(a, b, ka, kb, Vector2::new(0.0, fn_));
    (hat0, hat1, status)
}

/// Local stage of a perfect interface point: displacement continuity and
/// action-reaction, explicit per direction.
pub fn local_stage_perfect(
    a: &SidePoint,
    b: &SidePoint,
    ka: KPair,
    kb: KPair,
) -> (SidePoint, SidePoint) {
    let mut ha = SidePoint::default();
    let mut hb = SidePoint::default();
    for dir in 0..2 {
        let (k0, k1) = (pick(ka, dir), pick(kb, dir));
        let w = (k0 * a.w[dir] + k1 * b.w[dir] - a.f[dir] - b.f[dir]) / (k0 + k1);
        ha.w[dir] = w;
        hb.w[dir] = w;
        ha.f[dir] = a.f[dir] - k0 * (a.w[dir] - w);
        hb.f[dir] = -ha.f[dir];
    }
    (ha, hb)
}

/// Local stage of a boundary point with prescribed displacement on the
/// masked components; unmasked components behave traction-free.
pub fn local_stage_dirichlet(
    p: &SidePoint,
    k: KPair,
    prescribed: Vector2<f64>,
    mask: [bool; 2],
) -> SidePoint {
    let mut h = SidePoint::default();
    for dir in 0..2 {
        let kd = pick(k, dir);
        if mask[dir] {
            h.w[dir] = prescribed[dir];
            h.f[dir] = p.f[dir] - kd * (p.w[dir] - h.w[dir]);
        } else {
            h.f[dir] = 0.0;
            h.w[dir] = p.w[dir] - (p.f[dir] - h.f[dir]) / kd;
        }
    }
    h
}

/// Local stage of a boundary point with prescribed traction.
pub fn local_stage_neumann(p: &SidePoint, k: KPair, traction: Vector2<f64>) -> SidePoint {
    let mut h = SidePoint { w: Vector2::zeros(), f: traction };
    for dir in 0..2 {
        h.w[dir] = p.w[dir] - (p.f[dir] - h.f[dir]) / pick(k, dir);
    }
    h
}

/// Residual of the local-stage closing relation k+(W - What) - (F - Fhat).
pub fn closing_residual(p: &SidePoint, hat: &SidePoint, k: KPair) -> Vector2<f64> {
    Vector2::new(
        k.0 * (p.w[0] - hat.w[0]) - (p.f[0] - hat.f[0]),
        k.1 * (p.w[1] - hat.w[1]) - (p.f[1] - hat.f[1]),
    )
}
