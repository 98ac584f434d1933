use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Scenario, WeightSource};
use crate::error::{Error, Result};
use crate::model::{CesSpec, TimeGrid, UserKind, UserProfile};
use crate::network::{FeederSpec, LineSpec};

/// Shape of the synthetic household profiles. Powers are per household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub intervals: usize,
    pub delta_t_h: f64,
    /// Overnight base load, kW.
    pub base_kw: f64,
    /// Morning bump around 07:30, kW.
    pub morning_kw: f64,
    /// Evening peak height, kW.
    pub evening_kw: f64,
    pub evening_peak_h: f64,
    pub sunrise_h: f64,
    pub sunset_h: f64,
    /// Aggregate PV over aggregate demand at solar noon.
    pub surplus_ratio: f64,
    /// Relative spread of per-household amplitudes, in `[0, 1)`.
    pub spread: f64,
    /// Relative per-interval noise, in `[0, 1)`.
    pub noise: f64,
}

impl ProfileParams {
    /// Autumn-like day at five-minute resolution.
    pub fn autumn_day() -> Self {
        Self {
            intervals: 288,
            delta_t_h: 1.0 / 12.0,
            base_kw: 0.35,
            morning_kw: 0.6,
            evening_kw: 1.6,
            evening_peak_h: 18.5,
            sunrise_h: 6.5,
            sunset_h: 17.5,
            surplus_ratio: 2.5,
            spread: 0.3,
            noise: 0.05,
        }
    }

    fn solar_noon_interval(&self) -> usize {
        ((0.5 * (self.sunrise_h + self.sunset_h)) / self.delta_t_h).round() as usize
    }
}

/// Per-household demand and PV in kWh per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub demand: Vec<Vec<f64>>,
    pub pv: Vec<Vec<f64>>,
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((h - centre) / width).powi(2)).exp()
}

/// PV shape, zero outside `[sunrise, sunset]`.
fn solar(h: f64, sunrise: f64, sunset: f64) -> f64 {
    if h <= sunrise || h >= sunset {
        0.0
    } else {
        (PI * (h - sunrise) / (sunset - sunrise)).sin().powi(2)
    }
}

/// Reproducible duck-curve households: PV bell around midday, evening
/// demand peak. PV is scaled so that at solar noon the aggregate PV equals
/// `surplus_ratio` times the aggregate demand.
pub fn synth_profiles(seed: u64, n_users: usize, params: &ProfileParams) -> Result<Profiles> {
    if n_users == 0 {
        return Err(Error::InvalidArgument("at least one household is needed".into()));
    }
    TimeGrid::new(params.intervals, params.delta_t_h)?;
    if !(params.sunrise_h < params.sunset_h)
        || !(0.0..1.0).contains(&params.spread)
        || !(0.0..1.0).contains(&params.noise)
    {
        return Err(Error::InvalidArgument("invalid profile shape parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = params.delta_t_h;
    let mut demand = Vec::with_capacity(n_users);
    let mut pv = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let mut amp = || 1.0 + params.spread * (2.0 * rng.random::<f64>() - 1.0);
        let (base, morning, evening, size) = (amp(), amp(), amp(), amp());
        let shift = 1.5 * (rng.random::<f64>() - 0.5);
        let mut d = Vec::with_capacity(params.intervals);
        let mut g = Vec::with_capacity(params.intervals);
        for t in 0..params.intervals {
            let h = t as f64 * dt;
            let kw = params.base_kw * base
                + params.morning_kw * morning * bump(h, 7.5, 0.8)
                + params.evening_kw * evening * bump(h, params.evening_peak_h + shift, 1.5);
            let jitter = 1.0 + params.noise * (2.0 * rng.random::<f64>() - 1.0);
            d.push(kw * jitter * dt);
            g.push(size * solar(h, params.sunrise_h, params.sunset_h) * dt);
        }
        demand.push(d);
        pv.push(g);
    }
    let noon = params.solar_noon_interval().min(params.intervals - 1);
    let d_noon: f64 = demand.iter().map(|d| d[noon]).sum();
    let g_noon: f64 = pv.iter().map(|g| g[noon]).sum();
    if g_noon > 0.0 {
        let scale = params.surplus_ratio * d_noon / g_noon;
        for v in pv.iter_mut().flatten() {
            *v *= scale;
        }
    }
    Ok(Profiles { demand, pv })
}

/// Shipped synthetic scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthScenario {
    /// Paper-scale loading: 7 load buses, 55 households, five-minute day.
    PaperLike,
    /// Same topology with longer lines and a stronger midday surplus and
    /// evening peak, violating both voltage limits without storage.
    Stress,
}

impl std::str::FromStr for SynthScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-like" | "paper_like" => Ok(Self::PaperLike),
            "stress" => Ok(Self::Stress),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scenario kind `{s}` (paper-like | stress)"
            ))),
        }
    }
}

impl SynthScenario {
    pub const SEED: u64 = 2024;

    pub fn build(self, seed: u64) -> Result<Scenario> {
        match self {
            Self::PaperLike => build(seed, &paper_params(), 1.0),
            Self::Stress => build(seed, &stress_params(), STRESS_IMPEDANCE_SCALE),
        }
    }

    pub fn write(self, seed: u64, dir: impl AsRef<Path>) -> Result<()> {
        super::write_scenario(&self.build(seed)?, dir).map(|_| ())
    }
}

/// The stress feeder has longer lines than the paper-like one.
const STRESS_IMPEDANCE_SCALE: f64 = 2.5;

fn paper_params() -> ProfileParams {
    ProfileParams {
        evening_kw: 2.5,
        surplus_ratio: 11.0,
        ..ProfileParams::autumn_day()
    }
}

fn stress_params() -> ProfileParams {
    ProfileParams {
        evening_kw: 3.5,
        surplus_ratio: 16.0,
        ..ProfileParams::autumn_day()
    }
}

pub fn paper_like() -> Result<Scenario> {
    SynthScenario::PaperLike.build(SynthScenario::SEED)
}

pub fn stress() -> Result<Scenario> {
    SynthScenario::Stress.build(SynthScenario::SEED)
}

/// Households per load bus of the seven-bus feeder.
const USERS_PER_BUS: [usize; 7] = [8, 8, 8, 8, 8, 8, 7];

/// `(from, to, r_ohm, x_ohm)`: a trunk 0-1-2-7 to the hub at bus 7, which
/// feeds the laterals 7-3-4 and 7-5-6.
const LINES: [(usize, usize, f64, f64); 7] = [
    (0, 1, 0.008, 0.004),
    (1, 2, 0.008, 0.004),
    (2, 7, 0.008, 0.004),
    (7, 3, 0.005, 0.0025),
    (3, 4, 0.005, 0.0025),
    (7, 5, 0.005, 0.0025),
    (5, 6, 0.005, 0.0025),
];

/// Synthetic time-of-use tariff, currency/kWh: a midday solar-soak rate
/// from 10:00 to 15:00, peak from 15:00 to 21:00, flat otherwise.
fn tou_price(h: f64) -> f64 {
    if (10.0..15.0).contains(&h) {
        0.10
    } else if (15.0..21.0).contains(&h) {
        0.40
    } else {
        0.22
    }
}

fn seven_bus_feeder(impedance_scale: f64) -> FeederSpec {
    FeederSpec {
        v_base_v: 400.0,
        s_base_va: 100_000.0,
        v0_pu: 1.0,
        vmin_pu: 0.95,
        vmax_pu: 1.05,
        buses: (0..=7).collect(),
        lines: LINES
            .iter()
            .map(|&(from, to, r_ohm, x_ohm)| LineSpec {
                from,
                to,
                r_ohm: r_ohm * impedance_scale,
                x_ohm: x_ohm * impedance_scale,
                imax_a: None,
            })
            .collect(),
    }
}

fn build(seed: u64, params: &ProfileParams, impedance_scale: f64) -> Result<Scenario> {
    let n_users: usize = USERS_PER_BUS.iter().sum();
    let profiles = synth_profiles(seed, n_users, params)?;
    let mut users = Vec::with_capacity(n_users);
    let mut k = 0;
    for (b, &count) in USERS_PER_BUS.iter().enumerate() {
        for _ in 0..count {
            // Two households in three own PV.
            let kind = if k % 3 == 2 {
                UserKind::NonParticipant
            } else {
                UserKind::Participant
            };
            let pv = match kind {
                UserKind::Participant => profiles.pv[k].clone(),
                UserKind::NonParticipant => vec![0.0; params.intervals],
            };
            users.push(UserProfile::new(
                format!("u{:02}", k + 1),
                b + 1,
                kind,
                profiles.demand[k].clone(),
                pv,
                None,
            )?);
            k += 1;
        }
    }
    let prices = (0..params.intervals)
        .map(|t| tou_price(t as f64 * params.delta_t_h))
        .collect();
    let ces = CesSpec {
        bus: 7,
        b_max: 900.0,
        b_min: 45.0,
        gamma_ch: 400.0,
        gamma_dis: 400.0,
        eta_c: 0.98,
        eta_d: 1.02,
        b0: 45.0,
        theta: CesSpec::DEFAULT_THETA_KWH,
    };
    let grid = TimeGrid::new(params.intervals, params.delta_t_h)?;
    Scenario::new(
        seven_bus_feeder(impedance_scale),
        users,
        prices,
        Some(ces),
        grid,
        WeightSource::default(),
    )
}
