//! Scenario configuration and the shipped presets.
//!
//! Everything is in normalized units: lengths in L (the plate width), times
//! in L/c_s, stresses in μ. A scenario is a TOML document; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elastodyn::{Problem, SetupError};
use crate::fields::Material;
use crate::lattice::{BoundaryId, Geometry};
use crate::loads::{BoundaryConditions, EdgeCondition, LoadCurve};
use crate::wave_lbm::{derive_lbm_params, LbmParams};
use crate::Vec2;

/// Rest weight of the dilatation equilibrium used by all presets.
pub const DEFAULT_A0_PHI: f64 = 0.9999;
/// Nodes per side of the preset lattices.
pub const PRESET_NODES: usize = 101;
pub const PRESET_NAMES: [&str; 3] = ["tension", "shear", "hole"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Setup(#[from] SetupError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub mu: f64,
    pub c_s: f64,
    /// `c_s / c_d`.
    pub ratio: f64,
}

impl MaterialSpec {
    pub fn material(&self) -> Result<Material, ConfigError> {
        Material::from_wave_speeds(self.mu, self.c_s, self.ratio).map_err(|e| invalid("material", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Dirichlet,
    Neumann,
}

/// Condition on one edge or hole. `value` is a displacement for Dirichlet
/// and a traction for Neumann, scaled by `curve` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub edge: BoundaryId,
    pub kind: ConditionKind,
    pub value: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<LoadCurve>,
}

impl BoundarySpec {
    pub fn condition(&self) -> EdgeCondition {
        match self.kind {
            ConditionKind::Dirichlet => EdgeCondition::Dirichlet {
                displacement: self.value,
                curve: self.curve,
            },
            ConditionKind::Neumann => EdgeCondition::Neumann {
                traction: self.value,
                curve: self.curve,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub name: String,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Probe samples are written every this many steps.
    #[serde(default = "one")]
    pub probe_every: u64,
    /// Consistency-error monitor cadence in steps (LBM only, 0 disables).
    #[serde(default = "fifty")]
    pub error_every: u64,
    /// Snapshot times in L/c_s.
    #[serde(default)]
    pub snapshot_at: Vec<f64>,
}

fn one() -> u64 {
    1
}

fn fifty() -> u64 {
    50
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            probe_every: 1,
            error_every: 50,
            snapshot_at: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub material: MaterialSpec,
    pub geometry: Geometry,
    /// Nodes along the width; the spacing is `width / (nodes - 1)`.
    pub nodes: usize,
    #[serde(default = "default_a0")]
    pub a0_phi: f64,
    pub t_final: f64,
    /// Synchronization period in steps, 0 disables it.
    #[serde(default)]
    pub sync: u64,
    #[serde(default)]
    pub boundary: Vec<BoundarySpec>,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_a0() -> f64 {
    DEFAULT_A0_PHI
}

impl Scenario {
    pub fn spacing(&self) -> f64 {
        self.geometry.width / (self.nodes.max(2) - 1) as f64
    }

    pub fn boundary_conditions(&self) -> BoundaryConditions {
        let mut bc = BoundaryConditions::traction_free();
        for b in &self.boundary {
            bc.set(b.edge, b.condition());
        }
        bc
    }

    /// Field-level checks that do not need the lattice.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        self.material.material()?;
        self.geometry.validate().map_err(|e| invalid("geometry", e.to_string()))?;
        if self.nodes < 3 {
            return Err(invalid("nodes", format!("need at least 3, got {}", self.nodes)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(invalid("t_final", format!("must be positive, got {}", self.t_final)));
        }
        if !(self.a0_phi > 0.0 && self.a0_phi < 1.0) {
            return Err(invalid("a0_phi", format!("must lie in (0, 1), got {}", self.a0_phi)));
        }
        for (i, b) in self.boundary.iter().enumerate() {
            let field = format!("boundary[{i}]");
            if let BoundaryId::Hole(h) = b.edge {
                if h >= self.geometry.holes.len() {
                    return Err(invalid(&field, format!("hole {h} does not exist")));
                }
            }
            if self.boundary[..i].iter().any(|o| o.edge == b.edge) {
                return Err(invalid(&field, format!("{:?} assigned twice", b.edge)));
            }
            if b.value.iter().any(|v| !v.is_finite()) {
                return Err(invalid(&field, "value must be finite"));
            }
            if let Some(c) = b.curve {
                c.validate().map_err(|e| invalid(&field, e.to_string()))?;
            }
        }
        for (i, p) in self.probes.iter().enumerate() {
            let field = format!("probes[{i}]");
            if self.probes[..i].iter().any(|o| o.name == p.name) {
                return Err(invalid(&field, format!("duplicate name {:?}", p.name)));
            }
            let [x, y] = p.position;
            let tol = 1e-9 * self.geometry.width;
            if !(x >= -tol && x <= self.geometry.width + tol && y >= -tol && y <= self.geometry.height + tol) {
                return Err(invalid(&field, "position lies outside the plate"));
            }
        }
        if self.output.probe_every == 0 {
            return Err(invalid("output.probe_every", "must be at least 1"));
        }
        if let Some(t) = self.output.snapshot_at.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(invalid("output.snapshot_at", format!("bad time {t}")));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario always serializes")
    }

    pub fn build(&self) -> Result<Resolved, ConfigError> {
        self.validate()?;
        let material = self.material.material()?;
        let spacing = self.spacing();
        let problem = Problem::new(self.geometry.clone(), spacing, material, self.boundary_conditions())?;
        let (phi, psi) = derive_lbm_params(&material, spacing, self.a0_phi).map_err(SetupError::from)?;
        let mut probes = Vec::with_capacity(self.probes.len());
        for (i, p) in self.probes.iter().enumerate() {
            let node = problem
                .lattice
                .nearest_material(p.position)
                .ok_or_else(|| invalid(&format!("probes[{i}]"), "no material node"))?;
            probes.push(Probe {
                name: p.name.clone(),
                requested: p.position,
                node,
                position: problem.lattice.position(node),
            });
        }
        Ok(Resolved {
            scenario: self.clone(),
            problem,
            phi_params: phi,
            psi_params: psi,
            probes,
        })
    }
}

/// Probe snapped to its nearest material node.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub requested: Vec2,
    pub node: usize,
    pub position: Vec2,
}

/// Scenario with its lattice, boundary cells and derived parameters.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub problem: Problem,
    pub phi_params: LbmParams,
    pub psi_params: LbmParams,
    pub probes: Vec<Probe>,
}

impl Resolved {
    pub fn probe(&self, name: &str) -> Option<&Probe> {
        self.probes.iter().find(|p| p.name == name)
    }
}

pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml(&text)
}

/// Preset by name, or a TOML file when `arg` is not a preset name.
pub fn load(arg: &str) -> Result<Scenario, ConfigError> {
    match preset(arg) {
        Some(s) => Ok(s),
        None => load_config(Path::new(arg)),
    }
}

fn unit_material() -> MaterialSpec {
    MaterialSpec {
        mu: 1.0,
        c_s: 1.0,
        ratio: 1.0 / 3f64.sqrt(),
    }
}

fn tensile_load() -> [BoundarySpec; 2] {
    let curve = Some(LoadCurve::RampHold {
        peak: 0.005,
        ramp_time: 1.0,
    });
    [
        BoundarySpec {
            edge: BoundaryId::Top,
            kind: ConditionKind::Neumann,
            value: [0.0, 1.0],
            curve,
        },
        BoundarySpec {
            edge: BoundaryId::Bottom,
            kind: ConditionKind::Neumann,
            value: [0.0, -1.0],
            curve,
        },
    ]
}

fn corner_probe() -> ProbeSpec {
    ProbeSpec {
        name: "P".into(),
        position: [0.0, 1.0],
    }
}

pub fn preset(name: &str) -> Option<Scenario> {
    let base = Scenario {
        name: name.to_string(),
        material: unit_material(),
        geometry: Geometry::rectangle(1.0, 1.0),
        nodes: PRESET_NODES,
        a0_phi: DEFAULT_A0_PHI,
        t_final: 1.5,
        sync: 0,
        boundary: Vec::new(),
        probes: vec![corner_probe()],
        output: OutputSpec::default(),
    };
    match name {
        "tension" => Some(Scenario {
            boundary: tensile_load().to_vec(),
            ..base
        }),
        "shear" => Some(Scenario {
            t_final: 2.0,
            sync: 50,
            boundary: vec![
                BoundarySpec {
                    edge: BoundaryId::Top,
                    kind: ConditionKind::Neumann,
                    value: [1.0, 0.0],
                    curve: Some(LoadCurve::LinearRamp { rate: 0.005 }),
                },
                BoundarySpec {
                    edge: BoundaryId::Bottom,
                    kind: ConditionKind::Dirichlet,
                    value: [0.0, 0.0],
                    curve: None,
                },
            ],
            ..base
        }),
        "hole" => {
            let center = [0.5, 0.5];
            Some(Scenario {
                geometry: Geometry::rectangle(1.0, 1.0).with_hole(center, 0.266),
                sync: 50,
                boundary: tensile_load().to_vec(),
                probes: vec![
                    corner_probe(),
                    ProbeSpec {
                        name: "Q".into(),
                        position: [center[0] - 0.175, center[1] + 0.025],
                    },
                ],
                ..base
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            s.validate().unwrap();
            assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
        }
    }

    #[test]
    fn shear_preset_matches_description() {
        let s = preset("shear").unwrap();
        assert_eq!(s.sync, 50);
        let bc = s.boundary_conditions();
        assert!(bc.get(BoundaryId::Bottom).is_dirichlet());
        assert_eq!(bc.get(BoundaryId::Top).value_at(1.0), [0.005, 0.0]);
        assert_eq!(bc.get(BoundaryId::Left), EdgeCondition::TRACTION_FREE);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = preset("tension").unwrap().to_toml();
        text.insert_str(0, "colour = \"red\"\n");
        assert!(matches!(Scenario::from_toml(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut s = preset("tension").unwrap();
        s.t_final = -1.0;
        match s.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "t_final"),
            other => panic!("{other:?}"),
        }
        let mut s = preset("tension").unwrap();
        s.boundary[1].edge = BoundaryId::Top;
        assert!(matches!(s.validate(), Err(ConfigError::Invalid { field, .. }) if field == "boundary[1]"));
        let mut s = preset("tension").unwrap();
        s.boundary[0].edge = BoundaryId::Hole(0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn hole_probes_snap_to_material_nodes() {
        let mut s = preset("hole").unwrap();
        s.nodes = 41;
        let r = s.build().unwrap();
        let q = r.probe("Q").unwrap();
        assert!(r.problem.lattice.is_material(q.node));
        let h = r.scenario.spacing();
        assert!((q.position[0] - q.requested[0]).abs() <= h && (q.position[1] - q.requested[1]).abs() <= h);
        assert_eq!(r.probe("P").unwrap().position, [0.0, 1.0]);
    }
}
