//! Constraint violations reported by the feasibility audits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ChargePower {
        t: usize,
        power_kw: f64,
        limit_kw: f64,
    },
    DischargePower {
        t: usize,
        power_kw: f64,
        limit_kw: f64,
    },
    SocBelowMin {
        t: usize,
        soc_kwh: f64,
        limit_kwh: f64,
    },
    SocAboveMax {
        t: usize,
        soc_kwh: f64,
        limit_kwh: f64,
    },
    Continuity {
        deviation_kwh: f64,
        theta_kwh: f64,
    },
    UnderVoltage {
        bus: usize,
        t: usize,
        v_pu: f64,
        limit_pu: f64,
    },
    OverVoltage {
        bus: usize,
        t: usize,
        v_pu: f64,
        limit_pu: f64,
    },
    OverCurrent {
        from: usize,
        to: usize,
        t: usize,
        i_sq_pu: f64,
        limit_sq_pu: f64,
    },
}

impl Violation {
    pub fn is_voltage(&self) -> bool {
        matches!(self, Violation::UnderVoltage { .. } | Violation::OverVoltage { .. })
    }

    pub fn is_network(&self) -> bool {
        self.is_voltage() || matches!(self, Violation::OverCurrent { .. })
    }
}
