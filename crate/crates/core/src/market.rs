//! User decisions: which swarm an interested user joins, and what a user who
//! has finished downloading does next (seed legally, seed illicitly, or leave).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two competing distribution channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Swarm {
    /// Provider CDN supplemented by a revenue-sharing P2P swarm.
    Legal,
    /// Free, unlicensed P2P swarm.
    Illicit,
}

impl Swarm {
    pub fn as_str(self) -> &'static str {
        match self {
            Swarm::Legal => "legal",
            Swarm::Illicit => "illicit",
        }
    }
}

/// Prices, the share fraction, and the behavioral response parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconParams {
    /// Sale price of one legal copy.
    pub price: f64,
    /// Fraction `δ` of every sale paid out to the current legal seeds.
    pub share_fraction: f64,
    /// Cost `α` of one unit of download delay, in currency.
    pub delay_sensitivity: f64,
    /// Soft-min temperature `τ` of the join choice; 0 selects the hard rule.
    pub choice_temperature: f64,
    /// Probability that a legal completer seeds legally without any reward.
    pub base_seed_prob_legal: f64,
    /// Probability that an illicit completer seeds the illicit swarm.
    pub base_seed_prob_illicit: f64,
    /// Probability that a legal completer goes rogue without any reward.
    pub rogue_base_prob: f64,
    /// Increase of the legal seeding probability per unit of expected reward.
    pub reward_response: f64,
    /// Decrease of the rogue probability per unit of expected reward.
    pub rogue_response: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        EconParams {
            price: 1.0,
            share_fraction: 0.0,
            delay_sensitivity: 1.0,
            choice_temperature: 0.01,
            base_seed_prob_legal: 0.2,
            base_seed_prob_illicit: 0.5,
            rogue_base_prob: 0.3,
            reward_response: 1.0,
            rogue_response: 1.0,
        }
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("price", self.price),
            ("delay_sensitivity", self.delay_sensitivity),
            ("choice_temperature", self.choice_temperature),
            ("reward_response", self.reward_response),
            ("rogue_response", self.rogue_response),
        ];
        for (field, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        let unit = [
            ("share_fraction", self.share_fraction),
            ("base_seed_prob_legal", self.base_seed_prob_legal),
            ("base_seed_prob_illicit", self.base_seed_prob_illicit),
            ("rogue_base_prob", self.rogue_base_prob),
        ];
        for (field, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Split of arriving users between the two swarms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinSplit {
    pub frac_legal: f64,
    pub frac_illicit: f64,
}

impl JoinSplit {
    pub const ALL_LEGAL: JoinSplit = JoinSplit {
        frac_legal: 1.0,
        frac_illicit: 0.0,
    };

    fn from_legal(frac_legal: f64) -> Self {
        JoinSplit {
            frac_legal,
            frac_illicit: 1.0 - frac_legal,
        }
    }
}

/// Fate probabilities of a user who has just completed a download.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedingDecision {
    pub seed_legal: f64,
    pub seed_illicit: f64,
    pub exit: f64,
}

/// Myopic lifetime share income of one legal seed: the current per-seed
/// income rate `δ · price · purchases / max(y_L, y_floor)` times the mean
/// seeding duration `1 / γ_L`.
pub fn expected_seed_reward(
    legal_seeds: f64,
    legal_departure_rate: f64,
    y_floor: f64,
    econ: &EconParams,
    legal_purchase_rate: f64,
) -> f64 {
    if econ.share_fraction == 0.0 || legal_purchase_rate <= 0.0 {
        return 0.0;
    }
    let pool = legal_seeds.max(y_floor);
    if pool <= 0.0 {
        // No seed pool and no floor: nobody to pay, nothing to expect.
        return 0.0;
    }
    econ.share_fraction * econ.price * legal_purchase_rate / pool / legal_departure_rate
}

/// Generalized-cost comparison between the legal swarm (price net of the
/// expected reward, plus delay cost) and the free illicit swarm (delay cost
/// only). Infinite delays are admitted and represent a dead swarm.
pub fn join_split(delay_legal: f64, delay_illicit: f64, reward: f64, econ: &EconParams) -> JoinSplit {
    let alpha = econ.delay_sensitivity;
    let cost = |d: f64| if alpha == 0.0 || d == 0.0 { 0.0 } else { alpha * d };
    let cost_legal = (econ.price - reward).max(0.0) + cost(delay_legal);
    let cost_illicit = cost(delay_illicit);

    if econ.choice_temperature == 0.0 {
        return if cost_legal <= cost_illicit {
            JoinSplit::ALL_LEGAL
        } else {
            JoinSplit::from_legal(0.0)
        };
    }
    let gap = cost_legal - cost_illicit;
    if gap.is_nan() {
        // Both swarms dead (inf - inf): tie goes to the legal swarm.
        return JoinSplit::ALL_LEGAL;
    }
    // 1 / (1 + e^{gap/τ}) evaluated without overflow.
    let z = gap / econ.choice_temperature;
    let frac_legal = if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    JoinSplit::from_legal(frac_legal)
}

/// What a completer does next. Legal completers respond to the expected
/// reward; illicit completers never seed legally.
pub fn seeding_decision(completed_in: Swarm, reward: f64, econ: &EconParams) -> SeedingDecision {
    match completed_in {
        Swarm::Legal => {
            let seed_legal = (econ.base_seed_prob_legal + econ.reward_response * reward).clamp(0.0, 1.0);
            let seed_illicit =
                (econ.rogue_base_prob - econ.rogue_response * reward).clamp(0.0, 1.0 - seed_legal);
            SeedingDecision {
                seed_legal,
                seed_illicit,
                exit: (1.0 - (seed_legal + seed_illicit)).max(0.0),
            }
        }
        Swarm::Illicit => SeedingDecision {
            seed_legal: 0.0,
            seed_illicit: econ.base_seed_prob_illicit,
            exit: 1.0 - econ.base_seed_prob_illicit,
        },
    }
}
