//! Built-in invariant checks and the reference scenarios they use.

use crate::demand::DemandProcess;
use crate::economics::{self, Engine};
use crate::error::Result;
use crate::fluid::{self, EfficiencyMode, MarketState, SwarmParams};
use crate::scenario::Scenario;
use crate::stochastic;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check { name, passed, detail }
    }
}

/// Single legal swarm fed at constant rate 1 with `μ = 0.5`, every completer
/// seeding and seeds leaving at rate 1. Its fixed point is `x = y = 1`.
pub fn fixed_point_scenario() -> Scenario {
    let mut sc = Scenario::default();
    sc.horizon = 60.0;
    sc.illicit_enabled = false;
    sc.demand = DemandProcess::Constant(crate::demand::ConstantDemand { rate: 1.0, total: None });
    sc.legal = SwarmParams {
        peer_upload: 0.5,
        efficiency_mode: EfficiencyMode::Efficient,
        download_cap: f64::INFINITY,
        server_capacity: 0.0,
        seed_departure_rate: 1.0,
    };
    sc.econ.base_seed_prob_legal = 1.0;
    sc.econ.reward_response = 0.0;
    sc.econ.rogue_response = 0.0;
    sc.econ.rogue_base_prob = 0.0;
    sc.initial_state = MarketState::default();
    sc
}

/// Seeding ignores the reward and there is no illicit swarm, so sharing can
/// only cost money.
pub fn sanity_pole_scenario() -> Scenario {
    let mut sc = Scenario::default().with_market_size(200.0);
    sc.horizon = 20.0;
    sc.dt = 0.02;
    sc.recording_interval = 0.2;
    sc.illicit_enabled = false;
    sc.econ.reward_response = 0.0;
    sc.econ.rogue_response = 0.0;
    sc.econ.rogue_base_prob = 0.0;
    sc.initial_state = MarketState::default();
    sc
}

/// A scenario whose vector field is smooth along the whole trajectory: no
/// download cap, a soft join rule, reward-independent seeding and populated
/// swarms that stay clear of the seed floor and the market size.
pub fn smooth_scenario() -> Scenario {
    let mut sc = Scenario::default().with_market_size(10_000.0);
    sc.horizon = 5.0;
    sc.recording_interval = 0.1;
    sc.y_floor = 10.0;
    sc.legal.download_cap = f64::INFINITY;
    sc.illicit.download_cap = f64::INFINITY;
    sc.econ.choice_temperature = 0.2;
    sc.econ.reward_response = 0.0;
    sc.econ.rogue_response = 0.0;
    sc.initial_state = MarketState {
        legal_downloaders: 40.0,
        legal_seeds: 60.0,
        illicit_downloaders: 20.0,
        illicit_seeds: 30.0,
        adopters: 60.0,
        ..MarketState::default()
    };
    sc
}

fn bass_normalization() -> Result<Check> {
    let mut sc = Scenario::default();
    let DemandProcess::Bass(bass) = sc.demand else { unreachable!("default demand is Bass") };
    let t_end = 5.0 * bass.peak_time()?;
    sc.horizon = (t_end / sc.recording_interval).ceil() * sc.recording_interval;
    let traj = fluid::run(&sc)?;
    let last = traj.final_state().expect("non-empty");
    let m = bass.market_size;
    let worst = traj
        .iter()
        .map(|(t, s)| (s.adopters - bass.cumulative(t)).abs())
        .fold(0.0, f64::max);
    let passed = last.adopters >= 0.99 * m && worst <= 1e-6 * m;
    Ok(Check::new(
        "bass_normalization",
        passed,
        format!("A(5t*)/M = {:.6}, max |A - closed form| = {worst:.3e}", last.adopters / m),
    ))
}

fn bass_peak() -> Result<Check> {
    let sc = Scenario::default();
    let t_star = sc.demand.peak_time()?;
    let traj = fluid::run(&sc)?;
    let (t_peak, _) = traj
        .iter()
        .map(|(t, s)| (t, sc.demand.arrival_rate(s.adopters).unwrap_or(0.0)))
        .fold((0.0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let err = (t_peak - t_star).abs();
    Ok(Check::new(
        "bass_peak",
        err <= sc.recording_interval,
        format!("simulated peak {t_peak:.3}, closed form {t_star:.3}"),
    ))
}

fn fixed_point() -> Result<Check> {
    let sc = fixed_point_scenario();
    let s = *fluid::run(&sc)?.final_state().expect("non-empty");
    let err = (s.legal_downloaders - 1.0).abs().max((s.legal_seeds - 1.0).abs());
    Ok(Check::new(
        "single_swarm_fixed_point",
        err <= 1e-3,
        format!("x = {:.6}, y = {:.6}", s.legal_downloaders, s.legal_seeds),
    ))
}

fn conservation_and_ledger() -> Result<Vec<Check>> {
    let sc = Scenario::default();
    let m = sc.demand.market_size();
    let delta = sc.econ.share_fraction;
    let traj = fluid::run(&sc)?;
    let fluid_cons = traj.iter().map(|(_, s)| s.conservation_residual().abs()).fold(0.0, f64::max);
    let fluid_ledger = traj
        .iter()
        .map(|(_, s)| (s.shared_revenue - delta * s.gross_revenue).abs() / s.gross_revenue.max(1.0))
        .fold(0.0, f64::max);

    let small = sc.with_market_size(200.0);
    let (stoch, _) = stochastic::simulate_once(&small, small.horizon, 7)?;
    let stoch_cons = stoch.iter().map(|(_, s)| s.conservation_residual().abs()).fold(0.0, f64::max);
    let stoch_ledger = stoch
        .iter()
        .map(|(_, s)| (s.shared_revenue - delta * s.gross_revenue).abs() / s.gross_revenue.max(1.0))
        .fold(0.0, f64::max);

    Ok(vec![
        Check::new(
            "conservation",
            fluid_cons <= 1e-6 * m && stoch_cons == 0.0,
            format!("fluid max residual {fluid_cons:.3e}, stochastic {stoch_cons:.3e}"),
        ),
        Check::new(
            "revenue_ledger",
            fluid_ledger <= 1e-9 && stoch_ledger <= 1e-12,
            format!("fluid max rel. error {fluid_ledger:.3e}, stochastic {stoch_ledger:.3e}"),
        ),
    ])
}

fn sanity_pole() -> Result<Check> {
    let sweep = economics::sweep_delta(&sanity_pole_scenario(), &economics::default_grid(), Engine::Fluid)?;
    Ok(Check::new(
        "no_competition_optimum",
        sweep.best_delta == 0.0,
        format!("best share fraction {}", sweep.best_delta),
    ))
}

fn determinism() -> Result<Check> {
    let sc = Scenario::default().with_market_size(200.0);
    let a = stochastic::simulate_ensemble(&sc, sc.horizon, 42, 8)?;
    let b = stochastic::simulate_ensemble(&sc, sc.horizon, 42, 8)?;
    Ok(Check::new(
        "stochastic_determinism",
        a == b,
        format!("mean net revenue {:.4} over 8 replications", a.summary.net_revenue.mean),
    ))
}

type CheckFn = fn() -> Result<Check>;

/// Runs every check. Errors inside a check are reported as failures.
pub fn run_all() -> Vec<Check> {
    let single: [(&'static str, CheckFn); 5] = [
        ("bass_normalization", bass_normalization),
        ("bass_peak", bass_peak),
        ("single_swarm_fixed_point", fixed_point),
        ("no_competition_optimum", sanity_pole),
        ("stochastic_determinism", determinism),
    ];
    let failed = |name, e: crate::Error| Check::new(name, false, format!("error: {e}"));
    let mut out: Vec<Check> = single
        .iter()
        .map(|(name, f)| f().unwrap_or_else(|e| failed(name, e)))
        .collect();
    match conservation_and_ledger() {
        Ok(checks) => out.extend(checks),
        Err(e) => out.push(failed("conservation", e)),
    }
    out
}
