use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};

/// Work-unit demand distribution of generated tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandDist {
    Deterministic { value: f64 },
    Exponential { mean: f64 },
    /// Pareto with shape `alpha` truncated to `[low, high]`.
    BoundedPareto { alpha: f64, low: f64, high: f64 },
}

impl DemandDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DemandDist::Deterministic { value } => value,
            DemandDist::Exponential { mean } => {
                if mean <= 0.0 {
                    return 0.0;
                }
                Exp::new(1.0 / mean).expect("positive rate").sample(rng)
            }
            DemandDist::BoundedPareto { alpha, low, high } => {
                let u: f64 = rng.random();
                let ratio = (low / high).powf(alpha);
                low / (1.0 - u * (1.0 - ratio)).powf(1.0 / alpha)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DemandDist::Deterministic { value } => value,
            DemandDist::Exponential { mean } => mean,
            DemandDist::BoundedPareto { alpha, low, high } => {
                if (alpha - 1.0).abs() < 1e-12 {
                    let c = low * high / (high - low);
                    c * (high / low).ln()
                } else {
                    let la = low.powf(alpha);
                    la / (1.0 - (low / high).powf(alpha)) * alpha / (alpha - 1.0)
                        * (1.0 / low.powf(alpha - 1.0) - 1.0 / high.powf(alpha - 1.0))
                }
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            DemandDist::Deterministic { value } => value >= 0.0,
            DemandDist::Exponential { mean } => mean >= 0.0,
            DemandDist::BoundedPareto { alpha, low, high } => alpha > 0.0 && low > 0.0 && high > low,
        }
    }
}

/// Poisson arrival process with an end time and an optional arrival cap.
#[derive(Debug, Clone)]
pub struct PoissonSource {
    gap: Option<Exp<f64>>,
    stop: SimTime,
    max_arrivals: Option<u64>,
    emitted: u64,
}

impl PoissonSource {
    /// A non-positive rate yields a source that never fires.
    pub fn new(rate_per_s: f64, stop: SimTime) -> Self {
        PoissonSource {
            gap: (rate_per_s > 0.0).then(|| Exp::new(rate_per_s).expect("positive rate")),
            stop,
            max_arrivals: None,
            emitted: 0,
        }
    }

    pub fn with_max_arrivals(mut self, n: u64) -> Self {
        self.max_arrivals = Some(n);
        self
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Draws the next arrival after `now`, or `None` once the source is
    /// exhausted. Arrivals at or after the stop time are never emitted.
    pub fn next_arrival<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Option<SimTime> {
        let gap = self.gap.as_ref()?;
        if self.max_arrivals.is_some_and(|m| self.emitted >= m) {
            return None;
        }
        let at = now + SimDuration::from_secs(gap.sample(rng));
        if at >= self.stop {
            return None;
        }
        self.emitted += 1;
        Some(at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::des::rng::{RngStreams, Substream};

    #[test]
    fn stop_at_zero_emits_nothing() {
        let mut s = PoissonSource::new(10.0, SimTime::ZERO);
        let mut r = RngStreams::new(1);
        assert_eq!(s.next_arrival(SimTime::ZERO, r.stream(Substream::Arrivals)), None);
    }

    #[test]
    fn arrival_count_matches_rate() {
        let mut s = PoissonSource::new(50.0, SimTime::from_secs(1000.0));
        let mut r = RngStreams::new(3);
        let mut now = SimTime::ZERO;
        let mut n = 0u64;
        while let Some(t) = s.next_arrival(now, r.stream(Substream::Arrivals)) {
            now = t;
            n += 1;
        }
        // 50k expected, sd ~224
        assert!((n as f64 - 50_000.0).abs() < 1_200.0, "{n}");
    }

    #[test]
    fn capped_source_stops() {
        let mut s = PoissonSource::new(1.0, SimTime::MAX).with_max_arrivals(3);
        let mut r = RngStreams::new(3);
        let mut now = SimTime::ZERO;
        let mut n = 0;
        while let Some(t) = s.next_arrival(now, r.stream(Substream::Arrivals)) {
            now = t;
            n += 1;
        }
        assert_eq!(n, 3);
    }

    #[test]
    fn bounded_pareto_stays_in_range_and_matches_mean() {
        let d = DemandDist::BoundedPareto { alpha: 1.5, low: 1.0, high: 100.0 };
        let mut r = RngStreams::new(9);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = d.sample(r.stream(Substream::Services));
            assert!((1.0..=100.0).contains(&x));
            sum += x;
        }
        let m = sum / n as f64;
        assert!((m - d.mean()).abs() / d.mean() < 0.03, "{m} vs {}", d.mean());
    }
}
