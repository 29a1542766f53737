//! Revenue accounting, share-fraction optimization and market-size scaling
//! experiments.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fluid::{self, MarketState, Trajectory};
use crate::scenario::{Regime, Scenario};
use crate::stochastic;

/// Final revenue ledgers and completion counts of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevenueReport {
    pub gross: f64,
    pub shared: f64,
    pub net: f64,
    pub completed_legal: f64,
    pub completed_illicit: f64,
    pub legal_share_of_completions: f64,
}

impl RevenueReport {
    pub fn from_state(state: &MarketState) -> Self {
        let completed = state.completed_legal + state.completed_illicit;
        RevenueReport {
            gross: state.gross_revenue,
            shared: state.shared_revenue,
            net: state.net_revenue(),
            completed_legal: state.completed_legal,
            completed_illicit: state.completed_illicit,
            legal_share_of_completions: state.completed_legal / completed.max(1.0),
        }
    }

    /// Component-wise mean of several reports (ensemble averages).
    fn mean(reports: &[RevenueReport]) -> Self {
        let n = reports.len() as f64;
        let avg = |f: fn(&RevenueReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        RevenueReport {
            gross: avg(|r| r.gross),
            shared: avg(|r| r.shared),
            net: avg(|r| r.net),
            completed_legal: avg(|r| r.completed_legal),
            completed_illicit: avg(|r| r.completed_illicit),
            legal_share_of_completions: avg(|r| r.legal_share_of_completions),
        }
    }
}

/// Revenue report read off the last sample of a trajectory.
pub fn revenue_report(traj: &Trajectory) -> Result<RevenueReport> {
    traj.final_state()
        .map(RevenueReport::from_state)
        .ok_or_else(|| Error::invalid("trajectory", "is empty"))
}

/// How a scenario is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Fluid,
    /// Ensemble mean over `reps` replications rooted at `seed`.
    Stochastic { reps: usize, seed: u64 },
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Fluid => "fluid",
            Engine::Stochastic { .. } => "stochastic",
        }
    }

    pub fn evaluate(&self, scenario: &Scenario) -> Result<RevenueReport> {
        match *self {
            Engine::Fluid => revenue_report(&fluid::run(scenario)?),
            Engine::Stochastic { reps, seed } => {
                let run = stochastic::simulate_ensemble(scenario, scenario.horizon, seed, reps)?;
                let reports: Vec<RevenueReport> = run.final_states.iter().map(RevenueReport::from_state).collect();
                Ok(RevenueReport::mean(&reports))
            }
        }
    }
}

/// Outcome of a grid search over the share fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub deltas: Vec<f64>,
    pub net_revenues: Vec<f64>,
    pub reports: Vec<RevenueReport>,
    pub best_delta: f64,
    pub best_net: f64,
    pub baseline_net: f64,
    /// `best_net / max(baseline_net, 1e-9 * price)`.
    pub gain_ratio: f64,
    /// The no-sharing baseline fell below the ratio guard, so `gain_ratio`
    /// is capped rather than meaningful.
    pub baseline_collapsed: bool,
}

impl SweepResult {
    pub fn best_index(&self) -> usize {
        self.deltas
            .iter()
            .position(|&d| d == self.best_delta)
            .expect("best delta is on the grid")
    }

    pub fn best_report(&self) -> &RevenueReport {
        &self.reports[self.best_index()]
    }
}

/// Uniform grid `0, step, 2 step, ...` up to and including `max`.
pub fn delta_grid(step: f64, max: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", "must be finite and > 0"));
    }
    if !(0.0..=1.0).contains(&max) {
        return Err(Error::invalid("max", "must lie in [0, 1]"));
    }
    let n = (max / step + 1e-9).floor() as usize;
    // Rounded so that grid points print as the decimals they denote.
    Ok((0..=n).map(|i| (i as f64 * step * 1e12).round() / 1e12).collect())
}

/// Default grid: step 0.025 over `[0, 0.5]`.
pub fn default_grid() -> Vec<f64> {
    delta_grid(0.025, 0.5).expect("valid default grid")
}

/// Evaluates net revenue at every share fraction of `grid` and returns the
/// best one (ties go to the smallest share fraction).
pub fn sweep_delta(template: &Scenario, grid: &[f64], engine: Engine) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must not be empty"));
    }
    if let Some(&bad) = grid.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::invalid("grid", format!("share fraction {bad} is outside [0, 1]")));
    }
    let baseline_idx = grid
        .iter()
        .position(|&d| d == 0.0)
        .ok_or_else(|| Error::invalid("grid", "must contain 0 (the no-sharing baseline)"))?;

    let reports = grid
        .par_iter()
        .map(|&delta| {
            engine
                .evaluate(&template.with_share_fraction(delta))
                .map_err(|e| Error::Sweep { delta, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let net_revenues: Vec<f64> = reports.iter().map(|r| r.net).collect();

    let mut best = baseline_idx;
    for (i, (&d, &net)) in grid.iter().zip(&net_revenues).enumerate() {
        let incumbent = net_revenues[best];
        if net > incumbent || (net == incumbent && d < grid[best]) {
            best = i;
        }
    }
    let baseline_net = net_revenues[baseline_idx];
    let guard = 1e-9 * template.econ.price;
    let baseline_collapsed = baseline_net <= guard;
    let best_net = net_revenues[best];
    Ok(SweepResult {
        deltas: grid.to_vec(),
        net_revenues,
        reports,
        best_delta: grid[best],
        best_net,
        baseline_net,
        gain_ratio: if baseline_collapsed && best_net <= 0.0 { 1.0 } else { best_net / baseline_net.max(guard) },
        baseline_collapsed,
    })
}

/// One line of a scaling experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub regime: Regime,
    pub market_size: f64,
    pub engine: &'static str,
    pub delta_star: f64,
    pub net_no_share: f64,
    pub net_with_share: f64,
    pub gain_ratio: f64,
    pub baseline_collapsed: bool,
    pub legal_completion_share: f64,
    /// `|stochastic - fluid| / |fluid|` net revenue at the fluid optimum;
    /// `None` when only the fluid engine ran.
    pub fluid_stoch_rel_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn rows_for<'a>(&'a self, regime: Regime, engine: &'a str) -> impl Iterator<Item = &'a ExperimentRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.regime == regime && r.engine == engine)
    }
}

/// Sweeps the share fraction for every `(regime, M)` cell with the fluid
/// engine and, if `stochastic` is given, with the stochastic engine too.
/// Cells are built by [`Scenario::with_regime`] then
/// [`Scenario::with_market_size`]. Rows come out in `(regime, M, engine)`
/// order.
pub fn scaling_experiment(
    template: &Scenario,
    market_sizes: &[f64],
    regimes: &[Regime],
    grid: &[f64],
    stochastic: Option<Engine>,
) -> Result<ExperimentReport> {
    if market_sizes.len() < 2 {
        return Err(Error::invalid("sizes", "need at least two market sizes"));
    }
    if market_sizes.windows(2).any(|w| !(w[0] < w[1])) || market_sizes[0] <= 0.0 {
        return Err(Error::invalid("sizes", "must be positive and strictly increasing"));
    }
    if regimes.is_empty() {
        return Err(Error::invalid("regimes", "must not be empty"));
    }
    if !template.demand.market_size().is_finite() {
        return Err(Error::invalid("demand", "scaling needs a finite market size"));
    }
    if matches!(stochastic, Some(Engine::Fluid)) {
        return Err(Error::invalid("engine", "the second engine must be stochastic"));
    }

    let cells: Vec<(Regime, f64)> = regimes
        .iter()
        .flat_map(|&r| market_sizes.iter().map(move |&m| (r, m)))
        .collect();

    let per_cell = cells
        .par_iter()
        .map(|&(regime, m)| {
            let scenario = template.with_regime(regime)?.with_market_size(m);
            let fluid_sweep = sweep_delta(&scenario, grid, Engine::Fluid)?;
            let stoch_sweep = stochastic
                .map(|engine| sweep_delta(&scenario, grid, engine))
                .transpose()?;
            let rel_err = stoch_sweep.as_ref().map(|s| {
                let at = fluid_sweep.best_index();
                (s.net_revenues[at] - fluid_sweep.best_net).abs() / fluid_sweep.best_net.abs()
            });
            let row = |engine: &'static str, sweep: &SweepResult| ExperimentRow {
                regime,
                market_size: m,
                engine,
                delta_star: sweep.best_delta,
                net_no_share: sweep.baseline_net,
                net_with_share: sweep.best_net,
                gain_ratio: sweep.gain_ratio,
                baseline_collapsed: sweep.baseline_collapsed,
                legal_completion_share: sweep.best_report().legal_share_of_completions,
                fluid_stoch_rel_err: rel_err,
            };
            let mut rows = vec![row("fluid", &fluid_sweep)];
            if let Some(s) = &stoch_sweep {
                rows.push(row("stochastic", s));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        rows: per_cell.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandProcess;
    use crate::fluid::EfficiencyMode;
    use approx::assert_relative_eq;

    fn fast(mut sc: Scenario) -> Scenario {
        sc.horizon = 20.0;
        sc.dt = 0.02;
        sc.recording_interval = 0.2;
        sc
    }

    fn no_competition() -> Scenario {
        let mut sc = fast(Scenario::default().with_market_size(200.0));
        sc.illicit_enabled = false;
        sc.econ.reward_response = 0.0;
        sc.econ.rogue_response = 0.0;
        sc.econ.rogue_base_prob = 0.0;
        sc.initial_state = MarketState::default();
        sc
    }

    #[test]
    fn report_ledgers() {
        let sc = fast(Scenario::default().with_market_size(200.0));
        for (delta, expect_net_zero) in [(0.0, false), (1.0, true)] {
            let r = revenue_report(&fluid::run(&sc.with_share_fraction(delta)).unwrap()).unwrap();
            assert_eq!(r.net + r.shared, r.gross);
            if expect_net_zero {
                assert!(r.net.abs() <= 1e-12 * r.gross);
            } else {
                assert_eq!(r.net, r.gross);
            }
        }
    }

    #[test]
    fn all_legal_completions() {
        let r = revenue_report(&fluid::run(&no_competition()).unwrap()).unwrap();
        assert_eq!(r.completed_illicit, 0.0);
        assert_relative_eq!(r.legal_share_of_completions, 1.0);
    }

    #[test]
    fn empty_trajectory_rejected() {
        let t = Trajectory { times: vec![], states: vec![], step_size: 0.1 };
        assert!(revenue_report(&t).is_err());
    }

    #[test]
    fn sharing_is_pure_cost_without_competition() {
        let res = sweep_delta(&no_competition(), &default_grid(), Engine::Fluid).unwrap();
        assert_eq!(res.best_delta, 0.0);
        assert_eq!(res.gain_ratio, 1.0);
        assert!(res.net_revenues.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn singleton_grid() {
        let res = sweep_delta(&fast(Scenario::default()), &[0.0], Engine::Fluid).unwrap();
        assert_eq!(res.best_delta, 0.0);
        assert_eq!(res.gain_ratio, 1.0);
    }

    #[test]
    fn grid_must_hold_baseline_and_valid_fractions() {
        let sc = fast(Scenario::default());
        assert!(sweep_delta(&sc, &[], Engine::Fluid).is_err());
        assert!(sweep_delta(&sc, &[0.1, 0.2], Engine::Fluid).is_err());
        assert!(sweep_delta(&sc, &[0.0, 1.2], Engine::Fluid).is_err());
    }

    #[test]
    fn grid_values_are_clean() {
        let g = default_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[12], 0.3);
        assert_eq!(*g.last().unwrap(), 0.5);
    }

    #[test]
    fn ties_go_to_smallest_delta() {
        // With zero price every share fraction yields zero net revenue.
        let mut sc = fast(Scenario::default().with_market_size(100.0));
        sc.econ.price = 0.0;
        let res = sweep_delta(&sc, &[0.3, 0.0, 0.1], Engine::Fluid).unwrap();
        assert_eq!(res.best_delta, 0.0);
        assert!(res.baseline_collapsed);
    }

    #[test]
    fn engine_failure_is_tagged_with_delta() {
        let mut sc = fast(Scenario::default());
        sc.initial_state.illicit_seeds = 0.5;
        let err = sweep_delta(&sc, &[0.0], Engine::Stochastic { reps: 2, seed: 1 }).unwrap_err();
        assert!(matches!(err, Error::Sweep { delta, .. } if delta == 0.0));
    }

    #[test]
    fn experiment_shape() {
        let sc = fast(Scenario::default());
        let regimes = [Regime::parse("efficient-bass").unwrap(), Regime::parse("inefficient-constant").unwrap()];
        let rep = scaling_experiment(&sc, &[100.0, 200.0], &regimes, &[0.0, 0.2], None).unwrap();
        assert_eq!(rep.rows.len(), regimes.len() * 2);
        assert_eq!(rep.rows[0].regime, regimes[0]);
        assert_eq!(rep.rows[0].market_size, 100.0);
        assert_eq!(rep.rows[3].regime.mode, EfficiencyMode::Inefficient);
        assert!(rep.rows.iter().all(|r| r.fluid_stoch_rel_err.is_none()));

        let rep = scaling_experiment(
            &sc,
            &[100.0, 200.0],
            &regimes[..1],
            &[0.0, 0.2],
            Some(Engine::Stochastic { reps: 4, seed: 9 }),
        )
        .unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert_eq!(rep.rows[1].engine, "stochastic");
        assert_eq!(rep.rows[0].fluid_stoch_rel_err, rep.rows[1].fluid_stoch_rel_err);
    }

    #[test]
    fn experiment_rejects_bad_sizes() {
        let sc = fast(Scenario::default());
        let r = [Regime::parse("efficient-bass").unwrap()];
        assert!(scaling_experiment(&sc, &[100.0], &r, &[0.0], None).is_err());
        assert!(scaling_experiment(&sc, &[200.0, 100.0], &r, &[0.0], None).is_err());
        let mut unbounded = sc.clone();
        unbounded.demand = DemandProcess::constant(1.0, None).unwrap();
        assert!(scaling_experiment(&unbounded, &[1.0, 2.0], &r, &[0.0], None).is_err());
    }
}
