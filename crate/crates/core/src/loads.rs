//! Load curves and per-boundary conditions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::BoundaryId;
use crate::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("ramp time must be positive and finite, got {0}")]
    RampTime(f64),
    #[error("load curve parameter must be finite, got {0}")]
    NonFinite(f64),
}

/// Piecewise-linear scalar multiplier over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadCurve {
    /// Linear rise from 0 to `peak` over `ramp_time`, constant afterwards.
    RampHold { peak: f64, ramp_time: f64 },
    /// `rate · t`.
    LinearRamp { rate: f64 },
}

impl LoadCurve {
    pub fn evaluate(&self, t: f64) -> f64 {
        match *self {
            LoadCurve::RampHold { peak, ramp_time } => {
                if t <= 0.0 {
                    0.0
                } else if t >= ramp_time {
                    peak
                } else {
                    peak * t / ramp_time
                }
            }
            LoadCurve::LinearRamp { rate } => rate * t.max(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        match *self {
            LoadCurve::RampHold { peak, ramp_time } => {
                if !peak.is_finite() {
                    return Err(LoadError::NonFinite(peak));
                }
                if !(ramp_time > 0.0 && ramp_time.is_finite()) {
                    return Err(LoadError::RampTime(ramp_time));
                }
            }
            LoadCurve::LinearRamp { rate } => {
                if !rate.is_finite() {
                    return Err(LoadError::NonFinite(rate));
                }
            }
        }
        Ok(())
    }
}

/// Stress scalar prescribed by `curve` at time `t`.
pub fn evaluate_load(curve: &LoadCurve, t: f64) -> f64 {
    curve.evaluate(t)
}

/// Condition on one part of the boundary. The prescribed vector is scaled by
/// the load curve when one is given, otherwise it is constant in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeCondition {
    Dirichlet { displacement: Vec2, curve: Option<LoadCurve> },
    Neumann { traction: Vec2, curve: Option<LoadCurve> },
}

impl EdgeCondition {
    pub const TRACTION_FREE: EdgeCondition = EdgeCondition::Neumann {
        traction: [0.0, 0.0],
        curve: None,
    };

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, EdgeCondition::Dirichlet { .. })
    }

    /// Prescribed displacement or traction at time `t`.
    pub fn value_at(&self, t: f64) -> Vec2 {
        let (v, curve) = match self {
            EdgeCondition::Dirichlet { displacement, curve } => (displacement, curve),
            EdgeCondition::Neumann { traction, curve } => (traction, curve),
        };
        let scale = curve.map_or(1.0, |c| c.evaluate(t));
        [v[0] * scale, v[1] * scale]
    }
}

/// Conditions keyed by boundary part; unassigned parts are traction free.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    conditions: BTreeMap<BoundaryId, EdgeCondition>,
}

impl BoundaryConditions {
    pub fn traction_free() -> Self {
        Self::default()
    }

    pub fn set(&mut self, id: BoundaryId, condition: EdgeCondition) -> &mut Self {
        self.conditions.insert(id, condition);
        self
    }

    pub fn with(mut self, id: BoundaryId, condition: EdgeCondition) -> Self {
        self.set(id, condition);
        self
    }

    pub fn get(&self, id: BoundaryId) -> EdgeCondition {
        self.conditions
            .get(&id)
            .copied()
            .unwrap_or(EdgeCondition::TRACTION_FREE)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BoundaryId, &EdgeCondition)> {
        self.conditions.iter()
    }
}
