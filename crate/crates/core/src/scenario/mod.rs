//! Validated scenario bundle plus its on-disk formats: loading, writing,
//! artifact emission and synthetic profile generation.

mod emit;
mod io;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{net_energy, CesSpec, EtsVariant, TimeGrid, UserProfile};
use crate::network::{build_path_matrices, bus_injections, Feeder, FeederSpec, InjectionSeries, PathMatrices};
use crate::optimizer::{ahp_weights, WeightSpec};

pub use emit::{emit_artifacts, write_comparison, write_pareto, RunArtifacts};
pub use io::{load_scenario, write_scenario, ScenarioFiles};
pub use synth::{paper_like, stress, synth_profiles, ProfileParams, Profiles, SynthScenario};

/// Pairwise comparison of cost against loss giving weights (2/3, 1/3).
pub const DEFAULT_PAIRWISE: [[f64; 2]; 2] = [[1.0, 2.0], [0.5, 1.0]];

/// Where the scalarisation weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Explicit(WeightSpec),
    Pairwise([[f64; 2]; 2]),
}

impl Default for WeightSource {
    fn default() -> Self {
        WeightSource::Pairwise(DEFAULT_PAIRWISE)
    }
}

impl WeightSource {
    pub fn resolve(&self) -> Result<WeightSpec> {
        match self {
            WeightSource::Explicit(w) => WeightSpec::new(w.w1, w.w2),
            WeightSource::Pairwise(m) => ahp_weights(m),
        }
    }
}

/// Immutable, validated input to every solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub feeder: Feeder,
    pub paths: PathMatrices,
    pub users: Vec<UserProfile>,
    /// Grid price per interval, currency/kWh.
    pub prices: Vec<f64>,
    pub ces: Option<CesSpec>,
    pub grid: TimeGrid,
    pub weights: WeightSource,
}

impl Scenario {
    pub fn new(
        feeder: FeederSpec,
        users: Vec<UserProfile>,
        prices: Vec<f64>,
        ces: Option<CesSpec>,
        grid: TimeGrid,
        weights: WeightSource,
    ) -> Result<Self> {
        let feeder = Feeder::new(feeder)?;
        let h = grid.intervals();
        let invalid = |msg: String| Err(Error::InvalidScenario(msg));
        let mut seen = HashSet::new();
        for u in &users {
            if !seen.insert(u.id.as_str()) {
                return invalid(format!("duplicate user id {}", u.id));
            }
            if u.bus == 0 || !feeder.contains_bus(u.bus) {
                return invalid(format!("user {} is attached to unknown bus {}", u.id, u.bus));
            }
            if u.intervals() != h {
                return invalid(format!("user {} has {} intervals, expected {h}", u.id, u.intervals()));
            }
        }
        if prices.len() != h {
            return invalid(format!("price series has {} intervals, expected {h}", prices.len()));
        }
        if let Some(t) = prices.iter().position(|p| !p.is_finite()) {
            return invalid(format!("price at interval {t} is not finite"));
        }
        if let Some(c) = &ces {
            c.validate()?;
            if c.bus == 0 || !feeder.contains_bus(c.bus) {
                return invalid(format!("storage is attached to unknown bus {}", c.bus));
            }
        }
        weights.resolve()?;
        let paths = build_path_matrices(&feeder);
        Ok(Self {
            feeder,
            paths,
            users,
            prices,
            ces,
            grid,
            weights,
        })
    }

    pub fn intervals(&self) -> usize {
        self.grid.intervals()
    }

    pub fn participants(&self) -> impl Iterator<Item = &UserProfile> {
        self.users.iter().filter(|u| u.is_participant())
    }

    /// Net deficit series `e_n` of every participant, in user order.
    pub fn deficits(&self) -> Vec<Vec<f64>> {
        self.participants()
            .map(|u| net_energy(u).expect("participant"))
            .collect()
    }

    /// `sum_n e_n(t)` over participants.
    pub fn aggregate_deficit(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.intervals()];
        for e in self.deficits() {
            for (o, v) in out.iter_mut().zip(e) {
                *o += v;
            }
        }
        out
    }

    /// Demand of non-participants, `E_N(t)`.
    pub fn nonparticipant_load(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.intervals()];
        for u in self.users.iter().filter(|u| !u.is_participant()) {
            for (o, v) in out.iter_mut().zip(&u.demand) {
                *o += v;
            }
        }
        out
    }

    /// Bus consumptions with an optional storage flow at the storage bus.
    pub fn injections(&self, e_s: Option<&[f64]>) -> Result<InjectionSeries> {
        let storage = match (e_s, &self.ces) {
            (Some(flow), Some(c)) => Some((c.bus, flow)),
            (Some(_), None) => {
                return Err(Error::InvalidArgument(
                    "storage flow given for a scenario without storage".into(),
                ))
            }
            (None, _) => None,
        };
        bus_injections(&self.feeder, &self.users, storage, &self.grid)
    }

    /// Checks the inputs a variant needs beyond general validity.
    pub fn check_variant(&self, variant: EtsVariant) -> Result<()> {
        if variant.has_storage() && self.ces.is_none() {
            return Err(Error::InvalidScenario(format!(
                "{variant} requires a storage description"
            )));
        }
        if matches!(variant, EtsVariant::Ets1 | EtsVariant::Ets2) && self.participants().next().is_none() {
            return Err(Error::InvalidScenario(format!(
                "{variant} requires at least one participant"
            )));
        }
        Ok(())
    }

    /// Copy with every demand, PV and reactive profile multiplied by `factor`.
    pub fn with_load_scale(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "load scale must be finite and non-negative, got {factor}"
            )));
        }
        let mut out = self.clone();
        for u in &mut out.users {
            for v in u.demand.iter_mut().chain(u.pv.iter_mut()).chain(u.reactive.iter_mut()) {
                *v *= factor;
            }
        }
        Ok(out)
    }
}
