//! Per-request delay and failure injection.
//!
//! Each request draws from its own generator: the model's seed selects the
//! key and the request counter selects the ChaCha stream, so the sequence of
//! delays is reproducible no matter how concurrent requests interleave.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayDistribution {
    #[default]
    None,
    Fixed {
        delay_ms: f64,
    },
    Exponential {
        mean_ms: f64,
    },
    /// Delay is `exp(N(mu, sigma))` milliseconds.
    #[serde(rename = "lognormal")]
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl DelayDistribution {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DelayDistribution::None => "none",
            DelayDistribution::Fixed { .. } => "fixed",
            DelayDistribution::Exponential { .. } => "exponential",
            DelayDistribution::LogNormal { .. } => "lognormal",
        }
    }

    /// Smallest delay the distribution can produce, in ms.
    pub fn min_delay_ms(&self) -> f64 {
        match *self {
            DelayDistribution::Fixed { delay_ms } => delay_ms,
            _ => 0.0,
        }
    }
}

impl fmt::Display for DelayDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DelayDistribution::None => write!(f, "none"),
            DelayDistribution::Fixed { delay_ms } => write!(f, "fixed:{delay_ms}"),
            DelayDistribution::Exponential { mean_ms } => write!(f, "exp:{mean_ms}"),
            DelayDistribution::LogNormal { mu, sigma } => write!(f, "lognorm:{mu},{sigma}"),
        }
    }
}

/// Parses the command-line form: `none`, `fixed:MS`, `exp:MEAN_MS`, `lognorm:MU,SIGMA`.
impl FromStr for DelayDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number {v:?} in latency spec {s:?}: {e}"))
        };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let dist = match (kind, arg) {
            ("none", None) => DelayDistribution::None,
            ("fixed", Some(a)) => DelayDistribution::Fixed { delay_ms: num(a)? },
            ("exp", Some(a)) => DelayDistribution::Exponential { mean_ms: num(a)? },
            ("lognorm", Some(a)) => {
                let (mu, sigma) = a
                    .split_once(',')
                    .ok_or_else(|| format!("lognorm needs MU,SIGMA in {s:?}"))?;
                DelayDistribution::LogNormal {
                    mu: num(mu)?,
                    sigma: num(sigma)?,
                }
            }
            _ => {
                return Err(format!(
                    "unknown latency spec {s:?}; expected none|fixed:MS|exp:MEAN_MS|lognorm:MU,SIGMA"
                ))
            }
        };
        Ok(dist)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LatencyModel {
    pub distribution: DelayDistribution,
    pub failure_rate: f64,
    pub rng_seed: u64,
}

impl LatencyModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(distribution: DelayDistribution, failure_rate: f64, rng_seed: u64) -> Self {
        LatencyModel {
            distribution,
            failure_rate,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be finite and >= 0, got {v}"))
            }
        };
        match self.distribution {
            DelayDistribution::None => {}
            DelayDistribution::Fixed { delay_ms } => nonneg("delay_ms", delay_ms)?,
            DelayDistribution::Exponential { mean_ms } => nonneg("mean_ms", mean_ms)?,
            DelayDistribution::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(format!("mu must be finite, got {mu}"));
                }
                nonneg("sigma", sigma)?;
            }
        }
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(format!("failure_rate must be in [0, 1], got {}", self.failure_rate));
        }
        Ok(())
    }

    /// Generator for the `counter`-th request.
    pub fn request_rng(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(counter);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyDraw {
    Delay(f64),
    Fail,
}

/// Draws one outcome: an injected failure with probability `failure_rate`,
/// otherwise a delay in ms from the configured distribution.
pub fn inject_latency<R: Rng + ?Sized>(model: &LatencyModel, rng: &mut R) -> LatencyDraw {
    if model.failure_rate > 0.0 && rng.random::<f64>() < model.failure_rate {
        return LatencyDraw::Fail;
    }
    let delay = match model.distribution {
        DelayDistribution::None => 0.0,
        DelayDistribution::Fixed { delay_ms } => delay_ms,
        DelayDistribution::Exponential { mean_ms } => {
            if mean_ms > 0.0 {
                Exp::new(1.0 / mean_ms).map(|d| d.sample(rng)).unwrap_or(0.0)
            } else {
                0.0
            }
        }
        DelayDistribution::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
            .map(|d| d.sample(rng))
            .unwrap_or(0.0),
    };
    LatencyDraw::Delay(delay)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delay(d: LatencyDraw) -> f64 {
        match d {
            LatencyDraw::Delay(ms) => ms,
            LatencyDraw::Fail => panic!("unexpected failure"),
        }
    }

    #[test]
    fn none_has_no_delay() {
        let m = LatencyModel::none();
        assert_eq!(delay(inject_latency(&m, &mut m.request_rng(0))), 0.0);
    }

    #[test]
    fn fixed_delay_is_exact() {
        let m = LatencyModel::new(DelayDistribution::Fixed { delay_ms: 50.0 }, 0.0, 1);
        for i in 0..10 {
            assert_eq!(delay(inject_latency(&m, &mut m.request_rng(i))), 50.0);
        }
    }

    #[test]
    fn exponential_is_reproducible_with_expected_mean() {
        let m = LatencyModel::new(DelayDistribution::Exponential { mean_ms: 20.0 }, 0.0, 42);
        let draws: Vec<f64> = (0..100_000)
            .map(|i| delay(inject_latency(&m, &mut m.request_rng(i))))
            .collect();
        let again: Vec<f64> = (0..100)
            .map(|i| delay(inject_latency(&m, &mut m.request_rng(i))))
            .collect();
        assert_eq!(&draws[..100], &again[..]);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 20.0).abs() / 20.0 < 0.02, "sample mean {mean}");
    }

    #[test]
    fn lognormal_is_positive() {
        let m = LatencyModel::new(DelayDistribution::LogNormal { mu: 3.0, sigma: 0.5 }, 0.0, 7);
        for i in 0..1000 {
            assert!(delay(inject_latency(&m, &mut m.request_rng(i))) > 0.0);
        }
    }

    #[test]
    fn failure_rate_extremes() {
        let always = LatencyModel::new(DelayDistribution::None, 1.0, 3);
        let never = LatencyModel::new(DelayDistribution::None, 0.0, 3);
        for i in 0..100 {
            assert_eq!(inject_latency(&always, &mut always.request_rng(i)), LatencyDraw::Fail);
            assert!(matches!(inject_latency(&never, &mut never.request_rng(i)), LatencyDraw::Delay(_)));
        }
    }

    #[test]
    fn parses_cli_forms() {
        assert_eq!("none".parse(), Ok(DelayDistribution::None));
        assert_eq!("fixed:50".parse(), Ok(DelayDistribution::Fixed { delay_ms: 50.0 }));
        assert_eq!("exp:20".parse(), Ok(DelayDistribution::Exponential { mean_ms: 20.0 }));
        assert_eq!(
            "lognorm:3,0.5".parse(),
            Ok(DelayDistribution::LogNormal { mu: 3.0, sigma: 0.5 })
        );
        assert!("exp".parse::<DelayDistribution>().is_err());
        assert!("gamma:1".parse::<DelayDistribution>().is_err());
        for d in ["none", "fixed:50", "exp:20.5", "lognorm:3,0.5"] {
            let parsed: DelayDistribution = d.parse().unwrap();
            assert_eq!(parsed.to_string().parse::<DelayDistribution>().unwrap(), parsed);
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(LatencyModel::new(DelayDistribution::Fixed { delay_ms: -1.0 }, 0.0, 0).validate().is_err());
        assert!(LatencyModel::new(DelayDistribution::None, 1.5, 0).validate().is_err());
        assert!(LatencyModel::new(DelayDistribution::Exponential { mean_ms: 5.0 }, 0.5, 0).validate().is_ok());
    }
}
