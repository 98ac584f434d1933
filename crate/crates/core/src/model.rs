//! Demand-side, trading and storage device models shared by every trading
//! configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audit::Violation;
use crate::error::{Error, Result};

/// Absolute slack used when checking identities that should hold exactly.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Discretisation of the one-day scheduling horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    intervals: usize,
    delta_t_h: f64,
}

impl TimeGrid {
    pub fn new(intervals: usize, delta_t_h: f64) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one interval".into()));
        }
        if !(delta_t_h > 0.0) || !delta_t_h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "interval length must be positive, got {delta_t_h} h"
            )));
        }
        if intervals as f64 * delta_t_h > 24.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "horizon of {intervals} x {delta_t_h} h exceeds one day"
            )));
        }
        Ok(Self { intervals, delta_t_h })
    }

    /// A grid of `intervals` equal steps covering exactly 24 hours.
    pub fn full_day(intervals: usize) -> Result<Self> {
        Self::new(intervals, 24.0 / intervals.max(1) as f64)
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn delta_t_h(&self) -> f64 {
        self.delta_t_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserKind {
    Participant,
    #[serde(rename = "nonparticipant")]
    NonParticipant,
}

impl fmt::Display for UserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserKind::Participant => f.write_str("participant"),
            UserKind::NonParticipant => f.write_str("nonparticipant"),
        }
    }
}

impl FromStr for UserKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "participant" => Ok(UserKind::Participant),
            "nonparticipant" | "non-participant" | "non_participant" => Ok(UserKind::NonParticipant),
            other => Err(Error::InvalidArgument(format!("unknown user kind '{other}'"))),
        }
    }
}

/// Per-interval energy profile of one household. Energies are kWh per
/// interval, reactive demand is kvarh per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub id: String,
    pub bus: usize,
    pub kind: UserKind,
    pub demand: Vec<f64>,
    pub pv: Vec<f64>,
    pub reactive: Vec<f64>,
}

impl UserProfile {
    pub fn new(
        id: impl Into<String>,
        bus: usize,
        kind: UserKind,
        demand: Vec<f64>,
        pv: Vec<f64>,
        reactive: Option<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        let h = demand.len();
        if pv.len() != h {
            return Err(Error::InvalidArgument(format!(
                "user {id}: pv has {} intervals, demand has {h}",
                pv.len()
            )));
        }
        let reactive = reactive.unwrap_or_else(|| vec![0.0; h]);
        if reactive.len() != h {
            return Err(Error::InvalidArgument(format!(
                "user {id}: reactive has {} intervals, demand has {h}",
                reactive.len()
            )));
        }
        if let Some(t) = demand.iter().position(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "user {id}: demand must be finite and non-negative (interval {t})"
            )));
        }
        if let Some(t) = pv.iter().position(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "user {id}: pv must be finite and non-negative (interval {t})"
            )));
        }
        if reactive.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "user {id}: reactive demand must be finite"
            )));
        }
        if kind == UserKind::NonParticipant && pv.iter().any(|g| *g != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "user {id}: non-participants cannot have PV generation"
            )));
        }
        Ok(Self {
            id,
            bus,
            kind,
            demand,
            pv,
            reactive,
        })
    }

    pub fn is_participant(&self) -> bool {
        self.kind == UserKind::Participant
    }

    pub fn intervals(&self) -> usize {
        self.demand.len()
    }
}

/// Storage device parameters. Energies in kWh, powers in kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CesSpec {
    pub bus: usize,
    #[serde(rename = "b_max_kwh")]
    pub b_max: f64,
    #[serde(rename = "b_min_kwh")]
    pub b_min: f64,
    #[serde(rename = "gamma_ch_kw")]
    pub gamma_ch: f64,
    #[serde(rename = "gamma_dis_kw")]
    pub gamma_dis: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    #[serde(rename = "b0_kwh")]
    pub b0: f64,
    #[serde(rename = "theta_kwh")]
    pub theta: f64,
}

impl CesSpec {
    pub const DEFAULT_THETA_KWH: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidScenario(msg));
        if !(self.b_min >= 0.0) {
            return fail(format!("B_min must be non-negative, got {}", self.b_min));
        }
        if self.b_min > self.b_max {
            return fail(format!("B_min ({}) exceeds B_max ({})", self.b_min, self.b_max));
        }
        if self.b0 < self.b_min || self.b0 > self.b_max {
            return fail(format!(
                "initial charge {} outside [{}, {}]",
                self.b0, self.b_min, self.b_max
            ));
        }
        if !(self.gamma_ch > 0.0) || !(self.gamma_dis > 0.0) {
            return fail("power ratings must be positive".into());
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return fail(format!("charge efficiency must lie in (0, 1], got {}", self.eta_c));
        }
        if !(self.eta_d >= 1.0) {
            return fail(format!("discharge efficiency must be >= 1, got {}", self.eta_d));
        }
        if !(self.theta > 0.0) {
            return fail(format!("continuity tolerance must be positive, got {}", self.theta));
        }
        let all = [
            self.b_max,
            self.b_min,
            self.gamma_ch,
            self.gamma_dis,
            self.eta_c,
            self.eta_d,
            self.b0,
            self.theta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return fail("storage parameters must be finite".into());
        }
        Ok(())
    }
}

/// Energy transactions of one participant: `l` with the grid, `y` with the
/// storage, `e` the net deficit. Always `e = l + y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSchedule {
    pub l: Vec<f64>,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
}

/// Which exchange paths are open to participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EtsVariant {
    /// Participants trade with both the grid and the storage.
    Ets1,
    /// Participants trade only with the storage.
    Ets2,
    /// Participants trade only with the grid; storage trades with the grid.
    Ets3,
    /// No storage at all.
    Baseline,
}

impl EtsVariant {
    pub const ALL: [EtsVariant; 4] = [
        EtsVariant::Baseline,
        EtsVariant::Ets1,
        EtsVariant::Ets2,
        EtsVariant::Ets3,
    ];

    pub fn has_storage(self) -> bool {
        self != EtsVariant::Baseline
    }
}

impl fmt::Display for EtsVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EtsVariant::Ets1 => "ets1",
            EtsVariant::Ets2 => "ets2",
            EtsVariant::Ets3 => "ets3",
            EtsVariant::Baseline => "baseline",
        })
    }
}

impl FromStr for EtsVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "ets1" => Ok(EtsVariant::Ets1),
            "2" | "ets2" => Ok(EtsVariant::Ets2),
            "3" | "ets3" => Ok(EtsVariant::Ets3),
            "baseline" | "base" => Ok(EtsVariant::Baseline),
            other => Err(Error::InvalidArgument(format!("unknown trading system '{other}'"))),
        }
    }
}

/// Net deficit `demand - pv` of a participant.
pub fn net_energy(profile: &UserProfile) -> Result<Vec<f64>> {
    if !profile.is_participant() {
        return Err(Error::InvalidArgument(format!(
            "user {} is not a participant",
            profile.id
        )));
    }
    Ok(profile.demand.iter().zip(&profile.pv).map(|(d, g)| d - g).collect())
}

/// Splits participants into deficit (`e >= 0`) and surplus (`e < 0`) users at
/// interval `t`. Returns indices into `deficits`.
pub fn classify_users(deficits: &[Vec<f64>], t: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut deficit = Vec::new();
    let mut surplus = Vec::new();
    for (n, series) in deficits.iter().enumerate() {
        let e = *series.get(t).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "interval {t} out of range for a series of length {}",
                series.len()
            ))
        })?;
        if e >= 0.0 {
            deficit.push(n);
        } else {
            surplus.push(n);
        }
    }
    Ok((deficit, surplus))
}

/// Energy actually flowing into (positive) or out of the storage.
///
/// `e_p` is the aggregate participant grid trade and `sum_e` the aggregate
/// participant deficit, so the participants' storage trade is `sum_e - e_p`.
pub fn ces_flow_series(variant: EtsVariant, e_g: &[f64], e_p: &[f64], sum_e: &[f64]) -> Result<Vec<f64>> {
    let h = e_g.len();
    if e_p.len() != h || sum_e.len() != h {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: e_g={h}, E_P={}, sum_e={}",
            e_p.len(),
            sum_e.len()
        )));
    }
    match variant {
        EtsVariant::Baseline => return Ok(vec![0.0; h]),
        EtsVariant::Ets2 => {
            if let Some(t) = e_p.iter().position(|v| v.abs() > IDENTITY_TOL) {
                return Err(Error::InconsistentSchedule(format!(
                    "storage-only trading requires E_P = 0, found {} at interval {t}",
                    e_p[t]
                )));
            }
        }
        EtsVariant::Ets3 => {
            if let Some(t) = (0..h).find(|&t| (e_p[t] - sum_e[t]).abs() > IDENTITY_TOL * (1.0 + sum_e[t].abs())) {
                return Err(Error::InconsistentSchedule(format!(
                    "grid-only trading requires E_P = sum e_n, found {} vs {} at interval {t}",
                    e_p[t], sum_e[t]
                )));
            }
            return Ok(e_g.to_vec());
        }
        EtsVariant::Ets1 => {}
    }
    Ok((0..h).map(|t| e_g[t] - (sum_e[t] - e_p[t])).collect())
}

/// End-of-interval state of charge, applying `eta_c` while charging and
/// `eta_d` while discharging.
pub fn soc_trajectory(ces: &CesSpec, e_s: &[f64]) -> Vec<f64> {
    let mut b = ces.b0;
    e_s.iter()
        .map(|&flow| {
            let eta = if flow >= 0.0 { ces.eta_c } else { ces.eta_d };
            b += eta * flow;
            b
        })
        .collect()
}

/// Power rating, capacity and continuity audit of a storage flow series.
pub fn check_ces_feasibility(ces: &CesSpec, e_s: &[f64], grid: &TimeGrid, tol: f64) -> Vec<Violation> {
    let dt = grid.delta_t_h();
    let mut out = Vec::new();
    let soc = soc_trajectory(ces, e_s);
    for (t, (&flow, &b)) in e_s.iter().zip(&soc).enumerate() {
        if flow > ces.gamma_ch * dt + tol {
            out.push(Violation::ChargePower {
                t,
                power_kw: flow / dt,
                limit_kw: ces.gamma_ch,
            });
        } else if flow < -ces.gamma_dis * dt - tol {
            out.push(Violation::DischargePower {
                t,
                power_kw: flow / dt,
                limit_kw: ces.gamma_dis,
            });
        }
        if b < ces.b_min - tol {
            out.push(Violation::SocBelowMin {
                t,
                soc_kwh: b,
                limit_kwh: ces.b_min,
            });
        } else if b > ces.b_max + tol {
            out.push(Violation::SocAboveMax {
                t,
                soc_kwh: b,
                limit_kwh: ces.b_max,
            });
        }
    }
    if let Some(&last) = soc.last() {
        let deviation = last - ces.b0;
        if deviation.abs() > ces.theta + tol {
            out.push(Violation::Continuity {
                deviation_kwh: deviation,
                theta_kwh: ces.theta,
            });
        }
    }
    out
}

/// Splits an aggregate participant grid trade into per-user grid (`l`) and
/// storage (`y`) trades for one interval.
///
/// When every participant sits on the same side (zero counts as deficit) the
/// grid trade is shared in proportion to the deficits; when both sides are
/// present all grid trades are zero.
pub fn disaggregate(e_p_t: f64, deficits: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let deficit_sum: f64 = deficits.iter().filter(|e| **e >= 0.0).sum();
    let surplus_sum: f64 = deficits.iter().filter(|e| **e < 0.0).sum();
    let slack = IDENTITY_TOL * (1.0 + deficit_sum.abs() + surplus_sum.abs());
    if e_p_t > deficit_sum + slack || e_p_t < surplus_sum - slack {
        return Err(Error::InconsistentSchedule(format!(
            "aggregate grid trade {e_p_t} outside [{surplus_sum}, {deficit_sum}]"
        )));
    }
    let uniform = deficits.iter().all(|e| *e >= 0.0) || deficits.iter().all(|e| *e < 0.0);
    let total = deficit_sum + surplus_sum;
    let l: Vec<f64> = if uniform && total != 0.0 {
        deficits.iter().map(|e| e_p_t * e / total).collect()
    } else {
        vec![0.0; deficits.len()]
    };
    let y = deficits.iter().zip(&l).map(|(e, l)| e - l).collect();
    Ok((l, y))
}
