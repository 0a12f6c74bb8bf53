/// Single-pass running mean and variance (Welford's update).
///
/// Variance is the population form `m2 / count`; both mean and variance
/// report 0.0 for an empty accumulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunningStat {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts an accumulator already holding one observation.
    pub fn seeded(value: f64) -> Self {
        let mut s = Self::new();
        s.push(value);
        s
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        let delta2 = value - self.mean;
        self.m2 += delta * delta2;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Recursive mean and variance with fading memory.
///
/// The update gain is `max(decay, 1/count)`: for the first `1/decay`
/// observations this reproduces the exact running mean and population
/// variance, and afterwards it becomes an exponentially weighted estimate
/// with effective window about `1/decay`, so the statistics keep tracking
/// a drifting stream instead of freezing as the count grows.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingStat {
    decay: f64,
    count: u64,
    mean: f64,
    var: f64,
}

impl FadingStat {
    pub fn new(decay: f64) -> Self {
        Self {
            decay,
            count: 0,
            mean: 0.0,
            var: 0.0,
        }
    }

    /// Builds an accumulator already holding the given summary, mainly for
    /// staging decision tests at exact values.
    pub fn from_parts(decay: f64, mean: f64, variance: f64, count: u64) -> Self {
        Self {
            decay,
            count,
            mean,
            var: variance,
        }
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let gain = self.decay.max(1.0 / self.count as f64);
        let old_delta = value - self.mean;
        self.mean += gain * old_delta;
        let new_delta = value - self.mean;
        self.var += gain * (old_delta * new_delta - self.var);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.var.max(0.0)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_reports_zero() {
        let s = RunningStat::new();
        assert_eq!(s.count(), 0);
        assert_eq!(s.mean(), 0.0);
        assert_eq!(s.variance(), 0.0);
        assert_eq!(s.std(), 0.0);
    }

    #[test]
    fn single_value_has_zero_variance() {
        let s = RunningStat::seeded(3.5);
        assert_eq!(s.count(), 1);
        assert_eq!(s.mean(), 3.5);
        assert_eq!(s.variance(), 0.0);
    }

    #[test]
    fn two_values_population_variance() {
        let mut s = RunningStat::new();
        s.push(0.0);
        s.push(2.0);
        assert_eq!(s.mean(), 1.0);
        assert_eq!(s.variance(), 1.0);
        assert_eq!(s.std(), 1.0);
    }

    #[test]
    fn matches_two_pass_computation() {
        let xs = [0.3, -1.2, 4.7, 0.0, 2.5, -0.8, 1.1];
        let mut s = RunningStat::new();
        for &x in &xs {
            s.push(x);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert_abs_diff_eq!(s.mean(), mean, epsilon = 1e-12);
        assert_abs_diff_eq!(s.variance(), var, epsilon = 1e-12);
    }

    #[test]
    fn constant_stream_variance_stays_zero() {
        let mut s = RunningStat::new();
        for _ in 0..1000 {
            s.push(7.25);
        }
        assert_eq!(s.mean(), 7.25);
        assert!(s.variance().abs() < 1e-18);
    }

    #[test]
    fn fading_matches_welford_below_the_window() {
        let xs = [0.3, -1.2, 4.7, 0.0, 2.5, -0.8, 1.1];
        let mut f = FadingStat::new(0.01);
        let mut w = RunningStat::new();
        for &x in &xs {
            f.push(x);
            w.push(x);
            assert_abs_diff_eq!(f.mean(), w.mean(), epsilon = 1e-12);
            assert_abs_diff_eq!(f.variance(), w.variance(), epsilon = 1e-12);
        }
        let mut two = FadingStat::new(0.01);
        two.push(0.0);
        two.push(2.0);
        assert_eq!(two.mean(), 1.0);
        assert_eq!(two.variance(), 1.0);
    }

    #[test]
    fn fading_forgets_an_old_level() {
        let mut s = FadingStat::new(0.1);
        for _ in 0..200 {
            s.push(0.0);
        }
        for _ in 0..100 {
            s.push(1.0);
        }
        assert!(s.mean() > 0.99, "mean {} still anchored to history", s.mean());
        let mut frozen = RunningStat::new();
        for _ in 0..200 {
            frozen.push(0.0);
        }
        for _ in 0..100 {
            frozen.push(1.0);
        }
        assert!(frozen.mean() < 0.34, "running mean should lag at 1/3");
    }

    #[test]
    fn fading_from_parts_reports_staged_values() {
        let s = FadingStat::from_parts(0.05, 1.0, 0.04, 7);
        assert_eq!(s.mean(), 1.0);
        assert_eq!(s.variance(), 0.04);
        assert_eq!(s.std(), 0.2);
        assert_eq!(s.count(), 7);
    }
}
