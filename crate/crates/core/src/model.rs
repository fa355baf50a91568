//! Laminate problem definition: plies, materials, pre-cracks, loads.
//!
//! Units are fixed throughout: mm, N, MPa. Models are read from TOML
//! (key/value + arrays) or built programmatically by the scenario presets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{DelamError, Result};
use crate::material::Material;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ply {
    pub thickness: f64,
    /// Fiber angle in degrees about the stacking axis.
    #[serde(default)]
    pub angle: f64,
    pub material: String,
}

/// Pre-delaminated zone on the interface between plies `interface` and
/// `interface + 1`, spanning [from, to] in x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreCrack {
    pub interface: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Load/displacement history over the time-step sequence. `factor(step, n)`
/// returns the multiplier applied to the target value at step `step` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", untagged)]
pub enum TimeProfile {
    Named(ProfileName),
    Table(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Ramp,
    Constant,
}

impl Default for TimeProfile {
    fn default() -> Self {
        TimeProfile::Named(ProfileName::Ramp)
    }
}

impl TimeProfile {
    pub fn factor(&self, step: usize, n_steps: usize) -> f64 {
        match self {
            TimeProfile::Named(ProfileName::Ramp) => step as f64 / n_steps as f64,
            TimeProfile::Named(ProfileName::Constant) => 1.0,
            TimeProfile::Table(t) => t.get(step - 1).copied().unwrap_or_else(|| {
                t.last().copied().unwrap_or(0.0)
            }),
        }
    }
}

fn default_mask() -> [bool; 2] {
    [true, true]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub edge: Edge,
    pub kind: BcKind,
    /// Sub-range of the edge: y-range for left/right, x-range for top/bottom.
    /// None covers the whole edge.
    #[serde(default)]
    pub span: Option<[f64; 2]>,
    /// Per-component activity for Dirichlet conditions; inactive components
    /// behave traction-free. Neumann conditions always prescribe the full
    /// traction vector.
    #[serde(default = "default_mask")]
    pub components: [bool; 2],
    pub value: [f64; 2],
    #[serde(default)]
    pub profile: TimeProfile,
}

/// Concentrated perturbation force (N) applied at a mesh node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    pub point: [f64; 2],
    pub force: [f64; 2],
    #[serde(default)]
    pub profile: TimeProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateModel {
    /// Length of the laminate in x (mm).
    pub length: f64,
    pub time_steps: usize,
    #[serde(rename = "ply")]
    pub plies: Vec<Ply>,
    #[serde(rename = "material")]
    pub materials: BTreeMap<String, Material>,
    #[serde(rename = "precrack", default)]
    pub precracks: Vec<PreCrack>,
    #[serde(rename = "bc", default)]
    pub boundary_conditions: Vec<BoundaryCondition>,
    #[serde(rename = "load", default)]
    pub point_loads: Vec<PointLoad>,
    /// Constant body-force density f_d (N/mm^3), scaled by the ply rho.
    #[serde(default)]
    pub body_force: Option<[f64; 2]>,
    /// When true, intact ply interfaces are perfect bonds instead of
    /// cohesive surfaces (no delamination possible there).
    #[serde(default)]
    pub perfect_bond: bool,
}

impl LaminateModel {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: LaminateModel = toml::from_str(text)
            .map_err(|e| DelamError::Config(format!("laminate model parse error: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length <= 0.0 {
            return Err(DelamError::Config("length must be positive".into()));
        }
        if self.plies.is_empty() {
            return Err(DelamError::Config("at least one ply required".into()));
        }
        if self.time_steps == 0 {
            return Err(DelamError::Config("time_steps must be >= 1".into()));
        }
        for (i, ply) in self.plies.iter().enumerate() {
            if ply.thickness <= 0.0 {
                return Err(DelamError::Config(format!(
                    "ply {i} thickness must be positive"
                )));
            }
            if !self.materials.contains_key(&ply.material) {
                return Err(DelamError::Config(format!(
                    "ply {i} references unknown material '{}'",
                    ply.material
                )));
            }
        }
        for (name, mat) in &self.materials {
            mat.plane_strain(0.0, name)?;
        }
        for crack in &self.precracks {
            if crack.interface + 1 >= self.plies.len() {
                return Err(DelamError::Config(format!(
                    "pre-crack interface {} out of range (plies: {})",
                    crack.interface,
                    self.plies.len()
                )));
            }
            if crack.from < 0.0 || crack.to > self.length || crack.from >= crack.to {
                return Err(DelamError::Config(format!(
                    "pre-crack [{}, {}] outside [0, {}]",
                    crack.from, crack.to, self.length
                )));
            }
        }
        if !self
            .boundary_conditions
            .iter()
            .any(|bc| bc.kind == BcKind::Dirichlet && (bc.components[0] || bc.components[1]))
        {
            return Err(DelamError::Config(
                "at least one Dirichlet boundary condition is required".into(),
            ));
        }
        Ok(())
    }

    pub fn total_thickness(&self) -> f64 {
        self.plies.iter().map(|p| p.thickness).sum()
    }

    /// y-coordinate of the bottom of ply `p`.
    pub fn ply_base(&self, p: usize) -> f64 {
        self.plies[..p].iter().map(|q| q.thickness).sum()
    }

    pub fn material_of(&self, ply: usize) -> &Material {
        &self.materials[&self.plies[ply].material]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn sample_toml() -> &'static str {
        r#"
length = 20.0
time_steps = 10

[material.carbon]
e1 = 185500.0
e2 = 9900.0
e3 = 9900.0
nu12 = 0.34
nu13 = 0.34
nu23 = 0.5
g12 = 6160.0
g13 = 6160.0
g23 = 3080.0

[[ply]]
thickness = 1.0
angle = 0.0
material = "carbon"

[[ply]]
thickness = 1.0
angle = 90.0
material = "carbon"

[[precrack]]
interface = 0
from = 0.0
to = 6.0

[[bc]]
edge = "right"
kind = "dirichlet"
value = [0.0, 0.0]

[[bc]]
edge = "left"
kind = "dirichlet"
span = [1.0, 2.0]
components = [false, true]
value = [0.0, 0.5]
profile = "ramp"
"#
    }

    #[test]
    fn parses_model_from_toml() {
        let m = LaminateModel::from_toml_str(sample_toml()).unwrap();
        assert_eq!(m.plies.len(), 2);
        assert_eq!(m.precracks.len(), 1);
        assert_eq!(m.total_thickness(), 2.0);
        assert_eq!(m.ply_base(1), 1.0);
        assert_eq!(m.boundary_conditions[1].components, [false, true]);
    }

    #[test]
    fn parse_error_carries_location() {
        let bad = "length = \nplies = 3";
        let err = LaminateModel::from_toml_str(bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line"), "expected line info, got: {msg}");
    }

    #[test]
    fn requires_dirichlet() {
        let text = sample_toml().replace("dirichlet", "neumann");
        let err = LaminateModel::from_toml_str(&text).unwrap_err();
        assert!(format!("{err}").contains("Dirichlet"));
    }

    #[test]
    fn profiles_evaluate() {
        assert_eq!(TimeProfile::Named(ProfileName::Ramp).factor(5, 10), 0.5);
        assert_eq!(TimeProfile::Named(ProfileName::Constant).factor(3, 10), 1.0);
        let t = TimeProfile::Table(vec![0.1, 0.7]);
        assert_eq!(t.factor(2, 5), 0.7);
        assert_eq!(t.factor(4, 5), 0.7); // past the table end holds the last value
    }

    #[test]
    fn rejects_misplaced_precrack() {
        let text = sample_toml().replace("interface = 0", "interface = 3");
        assert!(LaminateModel::from_toml_str(&text).is_err());
    }
}
