//! Arrival process of newly interested users.
//!
//! Two processes are supported: the Bass diffusion model, where interest
//! spreads by word of mouth through a finite market, and a constant-rate
//! baseline. Both are coupled to the rest of the system only through the
//! cumulative number of adopters `A` (every user who has joined either swarm).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the Bass diffusion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BassParams {
    /// Coefficient of innovation `p` (spontaneous adoption rate).
    pub p_innov: f64,
    /// Coefficient of imitation `q` (word-of-mouth rate).
    pub q_imit: f64,
    /// Market size `M`.
    pub market_size: f64,
}

impl BassParams {
    pub fn new(p_innov: f64, q_imit: f64, market_size: f64) -> Result<Self> {
        let params = BassParams {
            p_innov,
            q_imit,
            market_size,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_innov.is_finite() && self.p_innov > 0.0) {
            return Err(Error::invalid("p_innov", "must be finite and > 0"));
        }
        if !(self.q_imit.is_finite() && self.q_imit >= 0.0) {
            return Err(Error::invalid("q_imit", "must be finite and >= 0"));
        }
        // A zero-size market is admitted so that the empty-market pole of the
        // stochastic model can be exercised.
        if !(self.market_size.is_finite() && self.market_size >= 0.0) {
            return Err(Error::invalid("market_size", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// `(p + q A / M) (M - A)`. Callers guarantee `0 <= A <= M`.
    #[inline]
    pub fn rate(&self, cum_adopters: f64) -> f64 {
        let m = self.market_size;
        if m <= 0.0 {
            return 0.0;
        }
        let remaining = (m - cum_adopters).max(0.0);
        (self.p_innov + self.q_imit * cum_adopters / m) * remaining
    }

    /// Upper bound of [`rate`](Self::rate) over `[0, M]`, used as the
    /// thinning envelope by the stochastic simulator.
    pub fn rate_bound(&self) -> f64 {
        (self.p_innov + self.q_imit) * self.market_size
    }

    /// Time at which the noise-free Bass arrival rate (from `A(0) = 0`)
    /// peaks: `ln(q/p) / (p + q)`.
    pub fn peak_time(&self) -> Result<f64> {
        if self.q_imit <= self.p_innov {
            return Err(Error::Domain(format!(
                "no interior peak: q_imit ({}) must exceed p_innov ({})",
                self.q_imit, self.p_innov
            )));
        }
        Ok((self.q_imit / self.p_innov).ln() / (self.p_innov + self.q_imit))
    }

    /// Closed-form Bass adoption curve `A(t)` from `A(0) = 0`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let (p, q) = (self.p_innov, self.q_imit);
        let e = (-(p + q) * t).exp();
        self.market_size * (1.0 - e) / (1.0 + (q / p) * e)
    }
}

/// Constant-rate arrivals, optionally stopping once a total number of
/// adopters has been reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantDemand {
    pub rate: f64,
    /// `None` means the process never stops.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DemandProcess {
    Bass(BassParams),
    Constant(ConstantDemand),
}

impl DemandProcess {
    pub fn bass(p_innov: f64, q_imit: f64, market_size: f64) -> Result<Self> {
        BassParams::new(p_innov, q_imit, market_size).map(DemandProcess::Bass)
    }

    pub fn constant(rate: f64, total: Option<f64>) -> Result<Self> {
        let demand = DemandProcess::Constant(ConstantDemand { rate, total });
        demand.validate()?;
        Ok(demand)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DemandProcess::Bass(b) => b.validate(),
            DemandProcess::Constant(c) => {
                if !(c.rate.is_finite() && c.rate >= 0.0) {
                    return Err(Error::invalid("rate", "must be finite and >= 0"));
                }
                match c.total {
                    Some(total) if !(total.is_finite() && total >= 0.0) => {
                        Err(Error::invalid("total", "must be finite and >= 0"))
                    }
                    _ => Ok(()),
                }
            }
        }
    }

    /// Largest attainable cumulative adopter count (`+inf` for an unbounded
    /// constant process).
    pub fn market_size(&self) -> f64 {
        match self {
            DemandProcess::Bass(b) => b.market_size,
            DemandProcess::Constant(c) => c.total.unwrap_or(f64::INFINITY),
        }
    }

    /// Rate of arrival of newly interested users given `A` cumulative adopters.
    pub fn arrival_rate(&self, cum_adopters: f64) -> Result<f64> {
        if cum_adopters.is_nan() || cum_adopters < 0.0 {
            return Err(Error::Domain(format!(
                "cumulative adopters must be >= 0, got {cum_adopters}"
            )));
        }
        match self {
            DemandProcess::Bass(b) => {
                if cum_adopters > b.market_size {
                    return Err(Error::Domain(format!(
                        "cumulative adopters {cum_adopters} exceed market size {}",
                        b.market_size
                    )));
                }
                Ok(b.rate(cum_adopters))
            }
            DemandProcess::Constant(_) => Ok(self.rate_unchecked(cum_adopters)),
        }
    }

    /// Arrival rate with `A` clamped into the domain; used inside integrator
    /// stages where round-off may push `A` marginally past `M`.
    #[inline]
    pub(crate) fn rate_unchecked(&self, cum_adopters: f64) -> f64 {
        match self {
            DemandProcess::Bass(b) => b.rate(cum_adopters.clamp(0.0, b.market_size)),
            DemandProcess::Constant(c) => match c.total {
                Some(total) if cum_adopters >= total => 0.0,
                _ => c.rate,
            },
        }
    }

    /// Envelope rate for thinning.
    pub fn rate_bound(&self) -> f64 {
        match self {
            DemandProcess::Bass(b) => b.rate_bound(),
            DemandProcess::Constant(c) => c.rate,
        }
    }

    pub fn peak_time(&self) -> Result<f64> {
        match self {
            DemandProcess::Bass(b) => b.peak_time(),
            DemandProcess::Constant(_) => Err(Error::Domain(
                "a constant-rate process has no interior peak".into(),
            )),
        }
    }

    /// Multiplies every extensive quantity (market size, rate, total) by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            DemandProcess::Bass(b) => DemandProcess::Bass(BassParams {
                market_size: b.market_size * factor,
                ..b
            }),
            DemandProcess::Constant(c) => DemandProcess::Constant(ConstantDemand {
                rate: c.rate * factor,
                total: c.total.map(|t| t * factor),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bass() -> DemandProcess {
        DemandProcess::bass(0.03, 0.38, 1000.0).unwrap()
    }

    #[test]
    fn bass_rate_examples() {
        assert_relative_eq!(bass().arrival_rate(0.0).unwrap(), 30.0, epsilon = 1e-12);
        assert_eq!(bass().arrival_rate(1000.0).unwrap(), 0.0);
        // (0.03 + 0.38 * 0.5) * 500 = 0.22 * 500
        assert_relative_eq!(bass().arrival_rate(500.0).unwrap(), 110.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_ignores_adopters() {
        let d = DemandProcess::constant(5.0, None).unwrap();
        for a in [0.0, 1.0, 1e6] {
            assert_eq!(d.arrival_rate(a).unwrap(), 5.0);
        }
        let capped = DemandProcess::constant(5.0, Some(10.0)).unwrap();
        assert_eq!(capped.arrival_rate(9.0).unwrap(), 5.0);
        assert_eq!(capped.arrival_rate(10.0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_domain_adopters_rejected() {
        assert!(matches!(bass().arrival_rate(-1.0), Err(Error::Domain(_))));
        assert!(matches!(bass().arrival_rate(1000.5), Err(Error::Domain(_))));
    }

    #[test]
    fn peak_time_closed_form() {
        let b = BassParams::new(0.03, 0.38, 1.0).unwrap();
        assert_relative_eq!(b.peak_time().unwrap(), 6.193, epsilon = 1e-3);
        // ln(50) / 0.51 = 7.6706; the commonly quoted 7.672 is a rounding.
        let b = BassParams::new(0.01, 0.5, 1.0).unwrap();
        assert_relative_eq!(b.peak_time().unwrap(), 50f64.ln() / 0.51, epsilon = 1e-12);
        assert_relative_eq!(b.peak_time().unwrap(), 7.672, epsilon = 2e-3);
        let b = BassParams::new(0.1, 0.1, 1.0).unwrap();
        assert!(matches!(b.peak_time(), Err(Error::Domain(_))));
    }

    #[test]
    fn peak_time_matches_numerical_maximum() {
        // Independent route: forward-Euler integration of dA/dt = rate(A) with a
        // fine step, locating the sample where the rate is largest.
        for (p, q) in [(0.03, 0.38), (0.01, 0.5)] {
            let b = BassParams::new(p, q, 1.0).unwrap();
            let h = 1e-4;
            let (mut a, mut t) = (0.0_f64, 0.0_f64);
            let (mut best_rate, mut best_t) = (0.0, 0.0);
            while t < 30.0 {
                let r = b.rate(a);
                if r > best_rate {
                    best_rate = r;
                    best_t = t;
                }
                a += h * r;
                t += h;
            }
            assert!((best_t - b.peak_time().unwrap()).abs() < 0.01, "p={p} q={q}");
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(BassParams::new(0.0, 0.3, 10.0).is_err());
        assert!(BassParams::new(0.1, -0.3, 10.0).is_err());
        assert!(BassParams::new(0.1, 0.3, -1.0).is_err());
        assert!(DemandProcess::constant(-1.0, None).is_err());
    }

    proptest! {
        #[test]
        fn rate_nonnegative_and_monotone_in_coefficients(
            p in 1e-4f64..1.0, q in 0.0f64..2.0, m in 1.0f64..1e5,
            frac in 0.0f64..=1.0, dp in 0.0f64..0.5, dq in 0.0f64..0.5,
        ) {
            let a = frac * m;
            let base = BassParams::new(p, q, m).unwrap();
            let r = base.rate(a);
            prop_assert!(r >= 0.0);
            prop_assert!(BassParams::new(p + dp, q, m).unwrap().rate(a) >= r);
            prop_assert!(BassParams::new(p, q + dq, m).unwrap().rate(a) >= r);
            prop_assert_eq!(base.rate(m), 0.0);
        }
    }
}
