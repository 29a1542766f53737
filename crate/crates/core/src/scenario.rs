//! Runnable scenario description and its configuration file format.
//!
//! Scenarios are stored as TOML: top-level run settings followed by one
//! table per component (`[demand]`, `[legal]`, `[illicit]`, `[econ]`,
//! `[initial_state]`). Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::{BassParams, ConstantDemand, DemandProcess};
use crate::error::{Error, Result};
use crate::fluid::{EfficiencyMode, MarketState, SwarmParams};
use crate::market::{self, EconParams};

fn yes() -> bool {
    true
}

fn default_dt() -> f64 {
    0.01
}

fn default_recording_interval() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_recording_interval")]
    pub recording_interval: f64,
    /// Lower bound on the seed pool used when dividing shared revenue.
    #[serde(default)]
    pub y_floor: f64,
    /// When false every user joins the legal swarm and rogue seeding is
    /// folded into exit.
    #[serde(default = "yes")]
    pub illicit_enabled: bool,
    pub demand: DemandProcess,
    pub legal: SwarmParams,
    pub illicit: SwarmParams,
    pub econ: EconParams,
    #[serde(default)]
    pub initial_state: MarketState,
}

/// Market size of the shipped default scenario.
pub const DEFAULT_MARKET_SIZE: f64 = 1000.0;

impl Default for Scenario {
    /// Competitive efficient-Bass scenario: a provider CDN with a P2P
    /// supplement against an illicit swarm seeded by one leaked copy.
    fn default() -> Self {
        let m = DEFAULT_MARKET_SIZE;
        Scenario {
            horizon: 40.0,
            dt: default_dt(),
            recording_interval: default_recording_interval(),
            y_floor: 0.01 * m,
            illicit_enabled: true,
            demand: DemandProcess::Bass(BassParams {
                p_innov: 0.03,
                q_imit: 0.38,
                market_size: m,
            }),
            legal: SwarmParams {
                peer_upload: 1.0,
                efficiency_mode: EfficiencyMode::Efficient,
                download_cap: 4.0,
                server_capacity: 0.02 * m,
                seed_departure_rate: 1.0,
            },
            illicit: SwarmParams {
                peer_upload: 1.0,
                efficiency_mode: EfficiencyMode::Efficient,
                download_cap: 4.0,
                server_capacity: 0.0,
                seed_departure_rate: 1.0,
            },
            econ: EconParams {
                price: 1.0,
                share_fraction: 0.2,
                delay_sensitivity: 4.0,
                choice_temperature: 0.01,
                base_seed_prob_legal: 0.2,
                base_seed_prob_illicit: 0.8,
                rogue_base_prob: 0.3,
                reward_response: 1.0,
                rogue_response: 1.0,
            },
            initial_state: MarketState {
                illicit_seeds: 1.0,
                ..MarketState::default()
            },
        }
    }
}

/// Demand shape used by the scaling experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DemandKind {
    Bass,
    Constant,
}

impl DemandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DemandKind::Bass => "bass",
            DemandKind::Constant => "constant",
        }
    }
}

/// Capacity regime crossed with demand shape, e.g. `efficient-bass`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Regime {
    pub mode: EfficiencyMode,
    pub demand: DemandKind,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime { mode: EfficiencyMode::Inefficient, demand: DemandKind::Bass },
        Regime { mode: EfficiencyMode::Inefficient, demand: DemandKind::Constant },
        Regime { mode: EfficiencyMode::Efficient, demand: DemandKind::Bass },
        Regime { mode: EfficiencyMode::Efficient, demand: DemandKind::Constant },
    ];

    pub fn name(&self) -> String {
        format!("{}-{}", self.mode.as_str(), self.demand.as_str())
    }

    pub fn parse(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid("regime", format!("unknown regime `{s}`")))
    }
}

impl Scenario {
    /// The expected lifetime share income of a legal seed under this
    /// scenario's floor and departure rate.
    pub fn seed_reward(&self, legal_seeds: f64, legal_purchase_rate: f64) -> f64 {
        market::expected_seed_reward(
            legal_seeds,
            self.legal.seed_departure_rate,
            self.y_floor,
            &self.econ,
            legal_purchase_rate,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.demand.validate().map_err(|e| prefix(e, "demand"))?;
        self.legal.validate("legal")?;
        self.illicit.validate("illicit")?;
        self.econ.validate().map_err(|e| prefix(e, "econ"))?;
        if self.illicit.server_capacity != 0.0 {
            return Err(Error::invalid("illicit.server_capacity", "the illicit swarm has no server; must be 0"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        if !(self.horizon.is_finite() && self.horizon >= 10.0 * self.dt) {
            return Err(Error::invalid("horizon", "must be finite and >= 10 * dt"));
        }
        if !(self.recording_interval.is_finite() && self.recording_interval >= self.dt) {
            return Err(Error::invalid("recording_interval", "must be finite and >= dt"));
        }
        let ratio = self.recording_interval / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(Error::invalid("recording_interval", "must be a whole multiple of dt"));
        }
        if !(self.y_floor.is_finite() && self.y_floor >= 0.0) {
            return Err(Error::invalid("y_floor", "must be finite and >= 0"));
        }
        self.initial_state
            .validate(self.demand.market_size(), self.econ.share_fraction)
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Reads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Copy with a different share fraction; the initial shared ledger is
    /// kept proportional to the initial gross ledger.
    pub fn with_share_fraction(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.econ.share_fraction = delta;
        out.initial_state.shared_revenue = delta * out.initial_state.gross_revenue;
        out
    }

    /// Copy at a different market size. Demand, server capacity and the
    /// seed-pool floor are extensive and scale with `M`; per-peer rates,
    /// prices and the initial state are held fixed.
    pub fn with_market_size(&self, market_size: f64) -> Self {
        let factor = market_size / self.demand.market_size();
        let mut out = self.clone();
        out.demand = self.demand.scaled(factor);
        out.legal.server_capacity *= factor;
        out.y_floor *= factor;
        out
    }

    /// Copy placed in `regime`: both swarms take the regime's capacity mode,
    /// and `constant` demand replaces the Bass curve by a flat rate that
    /// delivers the same market `M` over twice the Bass peak time.
    pub fn with_regime(&self, regime: Regime) -> Result<Self> {
        let mut out = self.clone();
        out.legal.efficiency_mode = regime.mode;
        out.illicit.efficiency_mode = regime.mode;
        out.demand = match (regime.demand, self.demand) {
            (DemandKind::Bass, DemandProcess::Bass(_)) | (DemandKind::Constant, DemandProcess::Constant(_)) => {
                self.demand
            }
            (DemandKind::Constant, DemandProcess::Bass(b)) => {
                let span = 2.0 * b.peak_time()?;
                DemandProcess::Constant(ConstantDemand {
                    rate: b.market_size / span,
                    total: Some(b.market_size),
                })
            }
            (DemandKind::Bass, DemandProcess::Constant(_)) => {
                return Err(Error::invalid(
                    "demand",
                    "a Bass regime needs a Bass template scenario",
                ))
            }
        };
        Ok(out)
    }
}

fn prefix(err: Error, section: &str) -> Error {
    match err {
        Error::Invalid { field, reason } => Error::Invalid {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_FILE: &str = include_str!("../scenarios/default.toml");

    #[test]
    fn shipped_default_parses_and_matches_builtin() {
        let sc = Scenario::from_toml_str(DEFAULT_FILE, Path::new("default.toml")).unwrap();
        assert_eq!(sc, Scenario::default());
    }

    #[test]
    fn dump_round_trips() {
        let mut sc = Scenario::default();
        sc.illicit.download_cap = f64::INFINITY;
        sc.demand = DemandProcess::constant(3.5, Some(120.0)).unwrap();
        let text = sc.to_toml_string();
        let back = Scenario::from_toml_str(&text, Path::new("dump")).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn out_of_range_share_fraction_names_field() {
        let text = DEFAULT_FILE.replace("share_fraction = 0.2", "share_fraction = 1.5");
        match Scenario::from_toml_str(&text, Path::new("x")) {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "econ.share_fraction"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = DEFAULT_FILE.replace("price = 1.0", "pricee = 1.0");
        let err = Scenario::from_toml_str(&text, Path::new("x")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pricee"), "{msg}");
    }

    #[test]
    fn illicit_server_rejected() {
        let mut sc = Scenario::default();
        sc.illicit.server_capacity = 1.0;
        assert!(matches!(sc.validate(), Err(Error::Invalid { field, .. }) if field == "illicit.server_capacity"));
    }

    #[test]
    fn short_horizon_rejected() {
        let mut sc = Scenario::default();
        sc.horizon = 5.0 * sc.dt;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn inconsistent_initial_state_rejected() {
        let mut sc = Scenario::default();
        sc.initial_state.adopters = 3.0;
        assert!(matches!(sc.validate(), Err(Error::Invalid { field, .. }) if field == "initial_state.adopters"));
    }

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(Regime::parse(&r.name()).unwrap(), r);
        }
        assert!(Regime::parse("efficient-poisson").is_err());
    }

    #[test]
    fn market_scaling_touches_extensive_parameters_only() {
        let sc = Scenario::default();
        let big = sc.with_market_size(4.0 * DEFAULT_MARKET_SIZE);
        assert_eq!(big.demand.market_size(), 4000.0);
        assert_eq!(big.legal.server_capacity, 4.0 * sc.legal.server_capacity);
        assert_eq!(big.y_floor, 4.0 * sc.y_floor);
        assert_eq!(big.legal.peer_upload, sc.legal.peer_upload);
        assert_eq!(big.initial_state, sc.initial_state);
        assert_eq!(big.econ, sc.econ);
    }

    #[test]
    fn constant_regime_delivers_the_same_market() {
        let sc = Scenario::default();
        let c = sc.with_regime(Regime::parse("inefficient-constant").unwrap()).unwrap();
        assert_eq!(c.legal.efficiency_mode, EfficiencyMode::Inefficient);
        assert_eq!(c.demand.market_size(), DEFAULT_MARKET_SIZE);
        c.validate().unwrap();
    }
}
