//! Deterministic fluid model of the two competing swarms.
//!
//! Users flow `arrival -> downloader -> completion -> seed -> departure` in
//! each swarm. Legal completers may also go rogue and feed the illicit seed
//! pool. The resulting ODE is integrated with fixed-step RK4 followed by a
//! projection back onto the admissible region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{self, JoinSplit, SeedingDecision, Swarm};
use crate::scenario::Scenario;

/// Whether in-progress downloaders contribute upload bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EfficiencyMode {
    /// Downloaders upload at the full peer rate (`η = 1`).
    Efficient,
    /// Only seeds and the server upload (`η = 0`).
    Inefficient,
}

impl EfficiencyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EfficiencyMode::Efficient => "efficient",
            EfficiencyMode::Inefficient => "inefficient",
        }
    }
}

fn infinite() -> f64 {
    f64::INFINITY
}

/// Capacity and churn parameters of one swarm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmParams {
    /// Upload rate `μ` of one peer, in copies per unit time.
    pub peer_upload: f64,
    pub efficiency_mode: EfficiencyMode,
    /// Per-downloader download rate cap `c_d`.
    #[serde(default = "infinite")]
    pub download_cap: f64,
    /// Dedicated server (CDN) upload capacity `s`.
    #[serde(default)]
    pub server_capacity: f64,
    /// Rate `γ` at which a seed leaves.
    pub seed_departure_rate: f64,
}

impl SwarmParams {
    /// Upload contribution `η` of an in-progress downloader.
    #[inline]
    pub fn downloader_upload_factor(&self) -> f64 {
        match self.efficiency_mode {
            EfficiencyMode::Efficient => 1.0,
            EfficiencyMode::Inefficient => 0.0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let field = |f: &str| format!("{name}.{f}");
        if !(self.peer_upload.is_finite() && self.peer_upload >= 0.0) {
            return Err(Error::invalid(field("peer_upload"), "must be finite and >= 0"));
        }
        if self.download_cap.is_nan() || self.download_cap <= 0.0 {
            return Err(Error::invalid(field("download_cap"), "must be > 0"));
        }
        if !(self.server_capacity.is_finite() && self.server_capacity >= 0.0) {
            return Err(Error::invalid(field("server_capacity"), "must be finite and >= 0"));
        }
        if !(self.seed_departure_rate.is_finite() && self.seed_departure_rate > 0.0) {
            return Err(Error::invalid(field("seed_departure_rate"), "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Aggregate completion rate of a swarm: `min(c_d x, μ (η x + y) + s)`.
#[inline]
pub fn service_rate(downloaders: f64, seeds: f64, params: &SwarmParams) -> f64 {
    if downloaders <= 0.0 {
        return 0.0;
    }
    let supply = params.peer_upload * (params.downloader_upload_factor() * downloaders + seeds.max(0.0))
        + params.server_capacity;
    (params.download_cap * downloaders).min(supply)
}

/// Instantaneous Little's-law delay `x / service_rate`. An empty queue has
/// zero delay; a queue that is not being served has infinite delay.
#[inline]
pub fn delay_estimate(downloaders: f64, seeds: f64, params: &SwarmParams) -> f64 {
    if downloaders <= 0.0 {
        return 0.0;
    }
    let rate = service_rate(downloaders, seeds, params);
    if rate > 0.0 {
        downloaders / rate
    } else {
        f64::INFINITY
    }
}

/// Populations and cumulative ledgers of the whole market.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketState {
    pub legal_downloaders: f64,
    pub legal_seeds: f64,
    pub illicit_downloaders: f64,
    pub illicit_seeds: f64,
    /// Users who have ever joined either swarm.
    pub adopters: f64,
    pub gross_revenue: f64,
    pub shared_revenue: f64,
    pub completed_legal: f64,
    pub completed_illicit: f64,
}

const DIM: usize = 9;

const COMPONENT_NAMES: [&str; DIM] = [
    "legal_downloaders",
    "legal_seeds",
    "illicit_downloaders",
    "illicit_seeds",
    "adopters",
    "gross_revenue",
    "shared_revenue",
    "completed_legal",
    "completed_illicit",
];

impl MarketState {
    pub fn net_revenue(&self) -> f64 {
        self.gross_revenue - self.shared_revenue
    }

    /// Adopters not accounted for by downloaders or completions. Zero on an
    /// exact trajectory.
    pub fn conservation_residual(&self) -> f64 {
        self.adopters
            - (self.legal_downloaders + self.illicit_downloaders + self.completed_legal + self.completed_illicit)
    }

    fn to_array(self) -> [f64; DIM] {
        [
            self.legal_downloaders,
            self.legal_seeds,
            self.illicit_downloaders,
            self.illicit_seeds,
            self.adopters,
            self.gross_revenue,
            self.shared_revenue,
            self.completed_legal,
            self.completed_illicit,
        ]
    }

    fn from_array(a: [f64; DIM]) -> Self {
        MarketState {
            legal_downloaders: a[0],
            legal_seeds: a[1],
            illicit_downloaders: a[2],
            illicit_seeds: a[3],
            adopters: a[4],
            gross_revenue: a[5],
            shared_revenue: a[6],
            completed_legal: a[7],
            completed_illicit: a[8],
        }
    }

    pub(crate) fn check_finite(&self, time: f64) -> Result<()> {
        match self.to_array().iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                component: COMPONENT_NAMES[i],
                time,
            }),
            None => Ok(()),
        }
    }

    /// Checks the invariants an initial state must satisfy.
    pub fn validate(&self, market_size: f64, share_fraction: f64) -> Result<()> {
        for (name, v) in COMPONENT_NAMES.iter().zip(self.to_array()) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("initial_state.{name}"), "must be finite and >= 0"));
            }
        }
        if self.adopters > market_size {
            return Err(Error::invalid("initial_state.adopters", "exceeds the market size"));
        }
        let tol = 1e-9 * self.adopters.max(1.0);
        if self.conservation_residual().abs() > tol {
            return Err(Error::invalid(
                "initial_state.adopters",
                "must equal legal_downloaders + illicit_downloaders + completed_legal + completed_illicit",
            ));
        }
        if (self.shared_revenue - share_fraction * self.gross_revenue).abs() > 1e-9 * self.gross_revenue.max(1.0) {
            return Err(Error::invalid("initial_state.shared_revenue", "must equal share_fraction * gross_revenue"));
        }
        Ok(())
    }

    /// Projects onto the admissible region: populations `>= 0` and `A <= M`.
    /// Overshoot below zero in a downloader pool is charged to that swarm's
    /// completion counter so that adopter conservation is preserved.
    fn project(&mut self, market_size: f64) {
        if self.legal_downloaders < 0.0 {
            self.completed_legal += self.legal_downloaders;
            self.legal_downloaders = 0.0;
        }
        if self.illicit_downloaders < 0.0 {
            self.completed_illicit += self.illicit_downloaders;
            self.illicit_downloaders = 0.0;
        }
        self.legal_seeds = self.legal_seeds.max(0.0);
        self.illicit_seeds = self.illicit_seeds.max(0.0);
        if self.adopters > market_size {
            let mut excess = self.adopters - market_size;
            self.adopters = market_size;
            for pool in [&mut self.illicit_downloaders, &mut self.legal_downloaders] {
                let take = excess.min(*pool);
                *pool -= take;
                excess -= take;
            }
        }
    }
}

/// Every rate that drives the market at one instant. Shared by the fluid
/// right-hand side and the stochastic event rates so both models apply the
/// same decision rules.
#[derive(Debug, Clone, Copy)]
pub struct Flows {
    pub arrival: f64,
    pub split: JoinSplit,
    pub reward: f64,
    pub service_legal: f64,
    pub service_illicit: f64,
    pub legal_fate: SeedingDecision,
    pub illicit_fate: SeedingDecision,
    pub departure_legal: f64,
    pub departure_illicit: f64,
}

impl Flows {
    pub fn at(state: &MarketState, scenario: &Scenario) -> Self {
        let econ = &scenario.econ;
        let arrival = scenario.demand.rate_unchecked(state.adopters);
        let service_legal = service_rate(state.legal_downloaders, state.legal_seeds, &scenario.legal);
        let service_illicit = service_rate(state.illicit_downloaders, state.illicit_seeds, &scenario.illicit);

        // The legal purchase flow is estimated by the legal completion flow
        // (equal in steady state), so the reward is a function of the state
        // alone and does not feed back into the split that produces it.
        let reward = scenario.seed_reward(state.legal_seeds, service_legal);
        let split = if scenario.illicit_enabled {
            let delay_legal = delay_estimate(state.legal_downloaders, state.legal_seeds, &scenario.legal);
            let delay_illicit = delay_estimate(state.illicit_downloaders, state.illicit_seeds, &scenario.illicit);
            market::join_split(delay_legal, delay_illicit, reward, econ)
        } else {
            JoinSplit::ALL_LEGAL
        };

        let mut legal_fate = market::seeding_decision(Swarm::Legal, reward, econ);
        if !scenario.illicit_enabled {
            legal_fate.exit += legal_fate.seed_illicit;
            legal_fate.seed_illicit = 0.0;
        }
        let illicit_fate = market::seeding_decision(Swarm::Illicit, reward, econ);

        Flows {
            arrival,
            split,
            reward,
            service_legal,
            service_illicit,
            legal_fate,
            illicit_fate,
            departure_legal: scenario.legal.seed_departure_rate * state.legal_seeds.max(0.0),
            departure_illicit: scenario.illicit.seed_departure_rate * state.illicit_seeds.max(0.0),
        }
    }
}

/// Time derivative of the market state.
pub fn fluid_rhs(state: &MarketState, _t: f64, scenario: &Scenario) -> MarketState {
    let f = Flows::at(state, scenario);
    let legal_joins = f.arrival * f.split.frac_legal;
    let sales = scenario.econ.price * legal_joins;
    MarketState {
        legal_downloaders: legal_joins - f.service_legal,
        legal_seeds: f.legal_fate.seed_legal * f.service_legal - f.departure_legal,
        illicit_downloaders: f.arrival * f.split.frac_illicit - f.service_illicit,
        illicit_seeds: f.legal_fate.seed_illicit * f.service_legal + f.illicit_fate.seed_illicit * f.service_illicit
            - f.departure_illicit,
        adopters: f.arrival,
        gross_revenue: sales,
        shared_revenue: scenario.econ.share_fraction * sales,
        completed_legal: f.service_legal,
        completed_illicit: f.service_illicit,
    }
}

/// Sampled solution of the fluid model.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MarketState>,
    pub step_size: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&MarketState> {
        self.states.last()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State at the last sample time not later than `t`.
    pub fn state_at(&self, t: f64) -> Option<&MarketState> {
        let idx = self.times.partition_point(|&s| s <= t + 1e-9);
        idx.checked_sub(1).map(|i| &self.states[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &MarketState)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

/// Number of integrator steps between two recorded samples.
pub(crate) fn steps_per_sample(recording_interval: f64, dt: f64) -> usize {
    ((recording_interval / dt).round() as usize).max(1)
}

/// Classical fixed-step RK4 over `[0, horizon]`, recording a sample every
/// `scenario.recording_interval` (and at the horizon).
pub fn integrate(initial: &MarketState, scenario: &Scenario, horizon: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    if !(horizon >= dt) {
        return Err(Error::invalid("horizon", "must be >= dt"));
    }
    let n_steps = (horizon / dt).round() as usize;
    let every = steps_per_sample(scenario.recording_interval, dt);
    let market_size = scenario.demand.market_size();

    let capacity = n_steps / every + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);

    let mut y = initial.to_array();
    times.push(0.0);
    states.push(*initial);

    let rhs = |s: &[f64; DIM], t: f64| fluid_rhs(&MarketState::from_array(*s), t, scenario).to_array();
    let axpy = |base: &[f64; DIM], k: &[f64; DIM], h: f64| {
        let mut out = *base;
        for (o, d) in out.iter_mut().zip(k) {
            *o += h * d;
        }
        out
    };

    for step in 0..n_steps {
        let t = step as f64 * dt;
        let k1 = rhs(&y, t);
        let k2 = rhs(&axpy(&y, &k1, 0.5 * dt), t + 0.5 * dt);
        let k3 = rhs(&axpy(&y, &k2, 0.5 * dt), t + 0.5 * dt);
        let k4 = rhs(&axpy(&y, &k3, dt), t + dt);
        for i in 0..DIM {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let mut state = MarketState::from_array(y);
        let t_next = (step + 1) as f64 * dt;
        state.check_finite(t_next)?;
        state.project(market_size);
        y = state.to_array();

        if (step + 1) % every == 0 || step + 1 == n_steps {
            times.push(t_next);
            states.push(state);
        }
    }

    Ok(Trajectory {
        times,
        states,
        step_size: dt,
    })
}

/// Integrates a scenario with its own initial state, horizon and step.
pub fn run(scenario: &Scenario) -> Result<Trajectory> {
    integrate(&scenario.initial_state, scenario, scenario.horizon, scenario.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandProcess;
    use crate::market::EconParams;
    use approx::assert_relative_eq;

    fn swarm(mode: EfficiencyMode, mu: f64, s: f64, cap: f64) -> SwarmParams {
        SwarmParams {
            peer_upload: mu,
            efficiency_mode: mode,
            download_cap: cap,
            server_capacity: s,
            seed_departure_rate: 1.0,
        }
    }

    #[test]
    fn service_rate_examples() {
        let eff = swarm(EfficiencyMode::Efficient, 0.5, 0.0, f64::INFINITY);
        for y in [0.0, 3.0, 100.0] {
            assert_eq!(service_rate(0.0, y, &eff), 0.0);
        }
        assert_relative_eq!(service_rate(1.0, 1.0, &eff), 1.0);
        let ineff = swarm(EfficiencyMode::Inefficient, 0.5, 2.0, 1.0);
        assert_relative_eq!(service_rate(10.0, 4.0, &ineff), 4.0);
    }

    #[test]
    fn delay_examples() {
        let eff = swarm(EfficiencyMode::Efficient, 0.5, 0.0, f64::INFINITY);
        assert_eq!(delay_estimate(0.0, 5.0, &eff), 0.0);
        // service = 0.5 * (4 + 0) = 2
        assert_relative_eq!(delay_estimate(4.0, 0.0, &eff), 2.0);
        let dead = swarm(EfficiencyMode::Inefficient, 0.5, 0.0, f64::INFINITY);
        assert_eq!(delay_estimate(3.0, 0.0, &dead), f64::INFINITY);
    }

    fn single_swarm() -> Scenario {
        let mut sc = Scenario::default();
        sc.demand = DemandProcess::constant(1.0, None).unwrap();
        sc.legal = swarm(EfficiencyMode::Efficient, 0.5, 0.0, f64::INFINITY);
        sc.illicit_enabled = false;
        sc.econ = EconParams {
            share_fraction: 0.0,
            base_seed_prob_legal: 1.0,
            rogue_base_prob: 0.0,
            reward_response: 0.0,
            rogue_response: 0.0,
            ..EconParams::default()
        };
        sc
    }

    #[test]
    fn rhs_vanishes_at_single_swarm_fixed_point() {
        // λ = μ (x + y) and γ y = λ give x* = y* = 1 for λ = 1, μ = 0.5, γ = 1.
        let sc = single_swarm();
        let state = MarketState {
            legal_downloaders: 1.0,
            legal_seeds: 1.0,
            adopters: 10.0,
            completed_legal: 9.0,
            ..MarketState::default()
        };
        let d = fluid_rhs(&state, 0.0, &sc);
        assert!(d.legal_downloaders.abs() < 1e-12);
        assert!(d.legal_seeds.abs() < 1e-12);
    }

    #[test]
    fn empty_system_only_receives_arrivals() {
        let mut sc = Scenario::default();
        sc.initial_state = MarketState::default();
        let d = fluid_rhs(&sc.initial_state, 0.0, &sc);
        let DemandProcess::Bass(b) = sc.demand else { panic!() };
        assert_relative_eq!(d.legal_downloaders + d.illicit_downloaders, b.p_innov * b.market_size);
        assert_relative_eq!(d.adopters, b.p_innov * b.market_size);
        assert_eq!(d.legal_seeds, 0.0);
        assert_eq!(d.illicit_seeds, 0.0);
        assert_eq!(d.completed_legal, 0.0);
    }

    #[test]
    fn sharing_without_response_only_moves_money() {
        let mut sc = Scenario::default();
        sc.econ.reward_response = 0.0;
        sc.econ.rogue_response = 0.0;
        // Without a choice between swarms the reward cannot change the split.
        sc.illicit_enabled = false;
        let state = MarketState {
            legal_downloaders: 30.0,
            legal_seeds: 12.0,
            illicit_downloaders: 8.0,
            illicit_seeds: 5.0,
            adopters: 38.0,
            ..MarketState::default()
        };
        sc.econ.share_fraction = 0.0;
        let a = fluid_rhs(&state, 0.0, &sc);
        sc.econ.share_fraction = 0.5;
        let b = fluid_rhs(&state, 0.0, &sc);
        assert_eq!(a.legal_downloaders, b.legal_downloaders);
        assert_eq!(a.legal_seeds, b.legal_seeds);
        assert_eq!(a.illicit_downloaders, b.illicit_downloaders);
        assert_eq!(a.illicit_seeds, b.illicit_seeds);
        assert_eq!(a.gross_revenue, b.gross_revenue);
        assert_eq!(a.shared_revenue, 0.0);
        assert_relative_eq!(b.shared_revenue, 0.5 * b.gross_revenue);
    }

    #[test]
    fn zero_demand_stays_zero() {
        let mut sc = Scenario::default();
        sc.demand = DemandProcess::constant(0.0, None).unwrap();
        let traj = integrate(&MarketState::default(), &sc, 5.0, 0.01).unwrap();
        assert!(traj.states.iter().all(|s| *s == MarketState::default()));
    }

    #[test]
    fn sampling_grid_is_uniform() {
        let sc = Scenario::default();
        let traj = integrate(&sc.initial_state, &sc, 2.0, 0.01).unwrap();
        assert_eq!(traj.len(), 21);
        for w in traj.times.windows(2) {
            assert_relative_eq!(w[1] - w[0], 0.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn projection_preserves_conservation() {
        let mut s = MarketState {
            legal_downloaders: -0.5,
            completed_legal: 3.0,
            adopters: 2.5,
            legal_seeds: -1e-3,
            ..MarketState::default()
        };
        s.project(100.0);
        assert_eq!(s.legal_downloaders, 0.0);
        assert_eq!(s.legal_seeds, 0.0);
        assert_eq!(s.conservation_residual(), 0.0);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let s = MarketState {
            illicit_seeds: f64::NAN,
            ..MarketState::default()
        };
        assert!(matches!(
            s.check_finite(1.0),
            Err(Error::NonFinite { component: "illicit_seeds", .. })
        ));
    }

    #[test]
    fn rejects_bad_step() {
        let sc = Scenario::default();
        assert!(integrate(&sc.initial_state, &sc, 1.0, 0.0).is_err());
        assert!(integrate(&sc.initial_state, &sc, 0.001, 0.01).is_err());
    }
}
