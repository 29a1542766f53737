//! Exact-jump simulation of the finite market.
//!
//! Every user is an individual: arrivals, download completions and seed
//! departures are events of a continuous-time Markov chain whose rates are
//! the fluid model's flows evaluated at the integer state. Arrivals are
//! sampled by thinning against the envelope `(p + q) M`; since `λ(A)` only
//! changes at events the thinned process is exact.
//!
//! Replication `i` of an ensemble uses the seed [`mix_seed`]`(base_seed, i)`,
//! so replications are independent of each other and of execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fluid::{self, Flows, MarketState, Trajectory};
use crate::market::{SeedingDecision, Swarm};
use crate::scenario::Scenario;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index`: `splitmix64(base + (index + 1) * 0x9E3779B97F4A7C15)`,
/// i.e. the `index + 1`-th output of a SplitMix64 stream started at `base`.
pub fn mix_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    Completion,
    Departure,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Completion => "completion",
            EventKind::Departure => "departure",
        }
    }
}

/// One accepted event and the state right after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub swarm: Swarm,
    pub state: MarketState,
}

/// Integer populations and counters of one replication.
#[derive(Debug, Clone, Copy)]
struct Counts {
    legal_downloaders: u64,
    legal_seeds: u64,
    illicit_downloaders: u64,
    illicit_seeds: u64,
    adopters: u64,
    completed_legal: u64,
    completed_illicit: u64,
    gross: f64,
    shared: f64,
}

fn whole(value: f64, field: &str) -> Result<u64> {
    if value >= 0.0 && value.fract() == 0.0 && value < 9.0e15 {
        Ok(value as u64)
    } else {
        Err(Error::invalid(
            format!("initial_state.{field}"),
            "must be a non-negative whole number for stochastic runs",
        ))
    }
}

impl Counts {
    fn from_state(s: &MarketState) -> Result<Self> {
        Ok(Counts {
            legal_downloaders: whole(s.legal_downloaders, "legal_downloaders")?,
            legal_seeds: whole(s.legal_seeds, "legal_seeds")?,
            illicit_downloaders: whole(s.illicit_downloaders, "illicit_downloaders")?,
            illicit_seeds: whole(s.illicit_seeds, "illicit_seeds")?,
            adopters: whole(s.adopters, "adopters")?,
            completed_legal: whole(s.completed_legal, "completed_legal")?,
            completed_illicit: whole(s.completed_illicit, "completed_illicit")?,
            gross: s.gross_revenue,
            shared: s.shared_revenue,
        })
    }

    fn to_state(self) -> MarketState {
        MarketState {
            legal_downloaders: self.legal_downloaders as f64,
            legal_seeds: self.legal_seeds as f64,
            illicit_downloaders: self.illicit_downloaders as f64,
            illicit_seeds: self.illicit_seeds as f64,
            adopters: self.adopters as f64,
            gross_revenue: self.gross,
            shared_revenue: self.shared,
            completed_legal: self.completed_legal as f64,
            completed_illicit: self.completed_illicit as f64,
        }
    }

    /// Sends a completer to its drawn fate.
    fn settle(&mut self, fate: &SeedingDecision, u: f64) {
        if u < fate.seed_legal {
            self.legal_seeds += 1;
        } else if u < fate.seed_legal + fate.seed_illicit {
            self.illicit_seeds += 1;
        }
    }
}

/// Sample times shared with the fluid integrator: every recording interval
/// (rounded to whole steps of `dt`) and the horizon itself.
pub fn sample_times(horizon: f64, dt: f64, recording_interval: f64) -> Vec<f64> {
    let n_steps = (horizon / dt).round() as usize;
    let every = fluid::steps_per_sample(recording_interval, dt);
    let mut times: Vec<f64> = (0..=n_steps).step_by(every).map(|k| k as f64 * dt).collect();
    if !n_steps.is_multiple_of(every) {
        times.push(n_steps as f64 * dt);
    }
    times
}

/// Simulates one replication.
pub fn simulate_once(scenario: &Scenario, horizon: f64, seed: u64) -> Result<(Trajectory, MarketState)> {
    let (traj, last, _) = simulate(scenario, horizon, seed, false)?;
    Ok((traj, last))
}

/// Simulates one replication and keeps every accepted event.
pub fn simulate_once_logged(
    scenario: &Scenario,
    horizon: f64,
    seed: u64,
) -> Result<(Trajectory, MarketState, Vec<EventRecord>)> {
    simulate(scenario, horizon, seed, true)
}

fn simulate(
    scenario: &Scenario,
    horizon: f64,
    seed: u64,
    keep_log: bool,
) -> Result<(Trajectory, MarketState, Vec<EventRecord>)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", "must be finite and > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Counts::from_state(&scenario.initial_state)?;
    let econ = scenario.econ;
    let sale_share = econ.share_fraction * econ.price;
    let market_size = scenario.demand.market_size();
    let envelope = scenario.demand.rate_bound();

    let grid = sample_times(horizon, scenario.dt, scenario.recording_interval);
    let mut states = Vec::with_capacity(grid.len());
    let mut log = Vec::new();
    let mut t = 0.0;

    loop {
        let state = counts.to_state();
        let flows = Flows::at(&state, scenario);
        let arrival_bound = if state.adopters < market_size { envelope } else { 0.0 };
        let rates = [
            arrival_bound,
            flows.service_legal,
            flows.service_illicit,
            flows.departure_legal,
            flows.departure_illicit,
        ];
        let total: f64 = rates.iter().sum();
        if !total.is_finite() || flows.arrival > arrival_bound * (1.0 + 1e-12) {
            return Err(Error::NonFinite {
                component: "event rate",
                time: t,
            });
        }

        let t_next = if total > 0.0 {
            // Exponential holding time by inversion; 1 - U lies in (0, 1].
            t - (1.0 - rng.random::<f64>()).ln() / total
        } else {
            f64::INFINITY
        };
        while states.len() < grid.len() && grid[states.len()] < t_next.min(horizon + 1e-12) {
            states.push(state);
        }
        if t_next > horizon {
            break;
        }
        t = t_next;

        let pick = rng.random::<f64>() * total;
        let (kind, swarm) = if pick < rates[0] {
            // Thinning: accept the candidate with probability λ(A) / envelope.
            if rng.random::<f64>() * arrival_bound >= flows.arrival {
                continue;
            }
            counts.adopters += 1;
            if rng.random::<f64>() < flows.split.frac_legal {
                counts.legal_downloaders += 1;
                counts.gross += econ.price;
                counts.shared += sale_share;
                (EventKind::Arrival, Swarm::Legal)
            } else {
                counts.illicit_downloaders += 1;
                (EventKind::Arrival, Swarm::Illicit)
            }
        } else if pick < rates[0] + rates[1] {
            counts.legal_downloaders -= 1;
            counts.completed_legal += 1;
            counts.settle(&flows.legal_fate, rng.random::<f64>());
            (EventKind::Completion, Swarm::Legal)
        } else if pick < rates[0] + rates[1] + rates[2] {
            counts.illicit_downloaders -= 1;
            counts.completed_illicit += 1;
            counts.settle(&flows.illicit_fate, rng.random::<f64>());
            (EventKind::Completion, Swarm::Illicit)
        } else if pick < rates[0] + rates[1] + rates[2] + rates[3] {
            counts.legal_seeds -= 1;
            (EventKind::Departure, Swarm::Legal)
        } else if counts.illicit_seeds > 0 {
            counts.illicit_seeds -= 1;
            (EventKind::Departure, Swarm::Illicit)
        } else {
            // Round-off in the partial sums landed past the last bucket.
            counts.legal_seeds = counts.legal_seeds.saturating_sub(1);
            (EventKind::Departure, Swarm::Legal)
        };

        if keep_log {
            log.push(EventRecord {
                time: t,
                kind,
                swarm,
                state: counts.to_state(),
            });
        }
    }

    let last = counts.to_state();
    while states.len() < grid.len() {
        states.push(last);
    }
    Ok((
        Trajectory {
            times: grid,
            states,
            step_size: scenario.dt,
        },
        last,
        log,
    ))
}

/// Final state of replication `index` of the ensemble rooted at `base_seed`.
pub fn replicate(scenario: &Scenario, horizon: f64, base_seed: u64, index: usize) -> Result<MarketState> {
    simulate_once(scenario, horizon, mix_seed(base_seed, index as u64))
        .map(|(_, last)| last)
        .map_err(|e| Error::Replication {
            index,
            source: Box::new(e),
        })
}

/// Mean and unbiased variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

impl Moments {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let count = values.len();
        if count == 0 {
            return Moments { mean: f64::NAN, variance: f64::NAN, count };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let variance = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Moments { mean, variance, count }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSummary {
    pub net_revenue: Moments,
    pub gross_revenue: Moments,
    pub completed_legal: Moments,
    pub completed_illicit: Moments,
    pub final_illicit_seeds: Moments,
}

/// Results of an ensemble of independent replications, in replication order.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRun {
    pub rng_seed: u64,
    pub replication_count: usize,
    pub final_states: Vec<MarketState>,
    /// Net revenue of each replication.
    pub revenue_samples: Vec<f64>,
    pub summary: EnsembleSummary,
}

impl StochasticRun {
    /// Builds a run from `(replication index, final state)` pairs produced in
    /// any order.
    pub fn assemble(rng_seed: u64, mut results: Vec<(usize, MarketState)>) -> Self {
        results.sort_by_key(|(i, _)| *i);
        let final_states: Vec<MarketState> = results.into_iter().map(|(_, s)| s).collect();
        let revenue_samples: Vec<f64> = final_states.iter().map(MarketState::net_revenue).collect();
        let column = |f: fn(&MarketState) -> f64| Moments::of(final_states.iter().map(f));
        let summary = EnsembleSummary {
            net_revenue: Moments::of(revenue_samples.iter().copied()),
            gross_revenue: column(|s| s.gross_revenue),
            completed_legal: column(|s| s.completed_legal),
            completed_illicit: column(|s| s.completed_illicit),
            final_illicit_seeds: column(|s| s.illicit_seeds),
        };
        StochasticRun {
            rng_seed,
            replication_count: final_states.len(),
            final_states,
            revenue_samples,
            summary,
        }
    }
}

/// Runs `n` replications (in parallel) and summarizes them.
pub fn simulate_ensemble(scenario: &Scenario, horizon: f64, base_seed: u64, n: usize) -> Result<StochasticRun> {
    if n == 0 {
        return Err(Error::invalid("reps", "need at least one replication"));
    }
    let results = (0..n)
        .into_par_iter()
        .map(|i| replicate(scenario, horizon, base_seed, i).map(|s| (i, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StochasticRun::assemble(base_seed, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandProcess;

    fn small() -> Scenario {
        Scenario::default().with_market_size(200.0)
    }

    #[test]
    fn empty_market_is_inert() {
        let mut sc = Scenario::default().with_market_size(0.0);
        sc.initial_state = MarketState::default();
        let (traj, last) = simulate_once(&sc, 10.0, 7).unwrap();
        assert!(traj.states.iter().all(|s| *s == MarketState::default()));
        assert_eq!(last, MarketState::default());
    }

    #[test]
    fn same_seed_same_events() {
        let sc = small();
        let (ta, la, ea) = simulate_once_logged(&sc, 20.0, 99).unwrap();
        let (tb, lb, eb) = simulate_once_logged(&sc, 20.0, 99).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(ta, tb);
        assert_eq!(la, lb);
        let (_, lc) = simulate_once(&sc, 20.0, 100).unwrap();
        assert_ne!(la, lc);
    }

    #[test]
    fn integer_conservation_after_every_event() {
        let sc = small();
        let (traj, _, log) = simulate_once_logged(&sc, 30.0, 3).unwrap();
        assert!(!log.is_empty());
        for rec in &log {
            assert_eq!(rec.state.conservation_residual(), 0.0, "at t={}", rec.time);
        }
        for s in &traj.states {
            assert_eq!(s.conservation_residual(), 0.0);
        }
        assert!(log.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn grid_matches_fluid_grid() {
        let sc = small();
        let fluid = fluid::run(&sc).unwrap();
        let (traj, _) = simulate_once(&sc, sc.horizon, 1).unwrap();
        assert_eq!(fluid.times, traj.times);
    }

    #[test]
    fn fractional_initial_state_rejected() {
        let mut sc = small();
        sc.initial_state.illicit_seeds = 0.5;
        assert!(matches!(simulate_once(&sc, 5.0, 1), Err(Error::Invalid { .. })));
    }

    #[test]
    fn exhausted_market_fast_forwards() {
        let mut sc = small();
        sc.demand = DemandProcess::constant(50.0, Some(20.0)).unwrap();
        let (traj, last) = simulate_once(&sc, sc.horizon, 5).unwrap();
        assert_eq!(last.adopters, 20.0);
        assert_eq!(*traj.times.last().unwrap(), sc.horizon);
    }

    #[test]
    fn single_replication_uses_mixed_seed() {
        let sc = small();
        let run = simulate_ensemble(&sc, 15.0, 42, 1).unwrap();
        let (_, last) = simulate_once(&sc, 15.0, mix_seed(42, 0)).unwrap();
        assert_eq!(run.final_states, vec![last]);
    }

    #[test]
    fn execution_order_is_irrelevant() {
        let sc = small();
        let forward: Vec<_> = (0..12).map(|i| (i, replicate(&sc, 15.0, 5, i).unwrap())).collect();
        let backward: Vec<_> = (0..12).rev().map(|i| (i, replicate(&sc, 15.0, 5, i).unwrap())).collect();
        let a = StochasticRun::assemble(5, forward);
        let b = StochasticRun::assemble(5, backward);
        assert_eq!(a, b);
        assert_eq!(a, simulate_ensemble(&sc, 15.0, 5, 12).unwrap());
    }

    #[test]
    fn mixed_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| mix_seed(0, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(mix_seed(1, 0), mix_seed(0, 1));
    }

    #[test]
    fn moments() {
        let m = Moments::of([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-12);
    }
}
