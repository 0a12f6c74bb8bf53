use ndarray::{Array1, ArrayView1, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rbm::{sigmoid, RbmState};
use crate::stats::{FadingStat, RunningStat};

/// Default fading-memory gain for the bias/variance decision statistics.
/// Roughly a 50-sample effective window: long enough to smooth single-sample
/// noise, short enough that the statistics keep tracking the model as it
/// learns.
pub const DEFAULT_STAT_DECAY: f64 = 0.02;

/// Expected sigmoid of a normal variable, elementwise:
/// `E[s(A)] ~= s(mu / sqrt(1 + (pi/8) sigma_sq))` for `A ~ N(mu, sigma_sq)`.
pub fn probit_expectation(
    mu: ArrayView1<f64>,
    sigma_sq: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if mu.len() != sigma_sq.len() {
        return Err(Error::DimensionMismatch {
            context: "probit_expectation",
            expected: mu.len(),
            got: sigma_sq.len(),
        });
    }
    if sigma_sq.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput(
            "negative variance in probit_expectation".into(),
        ));
    }
    let scale = std::f64::consts::PI / 8.0;
    Ok(Zip::from(&mu)
        .and(&sigma_sq)
        .map_collect(|&m, &s2| sigmoid(m / (1.0 + scale * s2).sqrt())))
}

/// One-sample estimate of how well the current network explains its input:
/// the squared-bias and variance of the model's expected reconstruction,
/// both averaged over visible dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct NsEstimate {
    pub bias_sq: f64,
    /// Signed: the sigmoid is nonlinear, so this term can dip below zero.
    pub variance: f64,
    pub ns: f64,
    pub ez: Array1<f64>,
    pub ex_hat: Array1<f64>,
    pub ex2_hat: Array1<f64>,
}

/// Expected reconstruction statistics for the current sample. `E[z]` comes
/// from `probit_expectation` with the sample's own pre-activation as the
/// center and the per-unit running variance as the spread, so units whose
/// drive fluctuates across the stream are flattened toward 0.5;
/// `E[X^] = s(W E[z] + b)`; the second moment reuses the same map with
/// `E[z]` squared elementwise.
pub fn network_significance(
    state: &RbmState,
    stats: &EvolveStats,
    x: ArrayView1<f64>,
) -> Result<NsEstimate> {
    if x.len() != state.n_visible() {
        return Err(Error::DimensionMismatch {
            context: "network_significance",
            expected: state.n_visible(),
            got: x.len(),
        });
    }
    if stats.preact_stats.len() != state.n_hidden() {
        return Err(Error::DimensionMismatch {
            context: "preactivation statistics",
            expected: state.n_hidden(),
            got: stats.preact_stats.len(),
        });
    }
    if stats.preact_stats.iter().any(|s| s.count() == 0) {
        return Err(Error::InvalidInput(
            "pre-activation statistics have no observations".into(),
        ));
    }
    let mu = state.preactivation(x)?;
    let sigma_sq = Array1::from_iter(stats.preact_stats.iter().map(|s| s.variance()));
    let ez = probit_expectation(mu.view(), sigma_sq.view())?;
    let ex_hat = (state.weights.dot(&ez) + &state.visible_bias).mapv(sigmoid);
    let ez_sq = &ez * &ez;
    let ex2_hat = (state.weights.dot(&ez_sq) + &state.visible_bias).mapv(sigmoid);

    let n = x.len() as f64;
    let bias_sq = Zip::from(&x)
        .and(&ex_hat)
        .fold(0.0, |acc, &xi, &ei| acc + (xi - ei) * (xi - ei))
        / n;
    let variance = Zip::from(&ex2_hat)
        .and(&ex_hat)
        .fold(0.0, |acc, &m2, &m1| acc + (m2 - m1 * m1))
        / n;
    let ns = bias_sq + variance;
    Ok(NsEstimate {
        bias_sq,
        variance,
        ns,
        ez,
        ex_hat,
        ex2_hat,
    })
}

/// Running state for the grow/prune controller: fading-memory statistics of
/// the squared-bias and variance sequences, their minimum trackers, and the
/// per-hidden-unit pre-activation statistics feeding `E[z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveStats {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub bias_stat: FadingStat,
    pub var_stat: FadingStat,
    pub bias_min_mean: f64,
    pub bias_min_std: f64,
    pub var_min_mean: f64,
    pub var_min_std: f64,
    pub preact_stats: Vec<RunningStat>,
}

impl EvolveStats {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        Self::with_decay(alpha, beta, gamma, delta, DEFAULT_STAT_DECAY)
    }

    pub fn with_decay(alpha: f64, beta: f64, gamma: f64, delta: f64, stat_decay: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            delta,
            bias_stat: FadingStat::new(stat_decay),
            var_stat: FadingStat::new(stat_decay),
            bias_min_mean: f64::INFINITY,
            bias_min_std: 0.0,
            var_min_mean: f64::INFINITY,
            var_min_std: 0.0,
            preact_stats: Vec::new(),
        }
    }

    /// Absorbs one sample: the significance scalars, the pre-activation
    /// vector, and a min-tracker refresh. A tracker moves only when the
    /// current recursive mean drops below the stored minimum mean, and then
    /// both the mean and the std are stored as a pair.
    pub fn update(&mut self, est: &NsEstimate, preactivation: ArrayView1<f64>) {
        debug_assert_eq!(preactivation.len(), self.preact_stats.len());
        for (stat, &v) in self.preact_stats.iter_mut().zip(preactivation.iter()) {
            stat.push(v);
        }
        self.push_significance(est);
    }

    fn push_significance(&mut self, est: &NsEstimate) {
        self.bias_stat.push(est.bias_sq);
        self.var_stat.push(est.variance);
        if self.bias_stat.mean() < self.bias_min_mean {
            self.bias_min_mean = self.bias_stat.mean();
            self.bias_min_std = self.bias_stat.std();
        }
        if self.var_stat.mean() < self.var_min_mean {
            self.var_min_mean = self.var_stat.mean();
            self.var_min_std = self.var_stat.std();
        }
    }

    /// Growth test: `mu_bias + sigma_bias >= mu_min + d1 * sigma_min` with
    /// `d1 = alpha * exp(-bias_sq^2) + beta`. Inclusive at the boundary.
    pub fn should_grow(&self, est: &NsEstimate) -> bool {
        let d1 = self.alpha * (-(est.bias_sq * est.bias_sq)).exp() + self.beta;
        let lhs = self.bias_stat.mean() + self.bias_stat.std();
        let rhs = self.bias_min_mean + d1 * self.bias_min_std;
        lhs >= rhs
    }

    /// Prune test: `mu_var + sigma_var >= mu_min + 2 * d2 * sigma_min` with
    /// `d2 = gamma * exp(-variance^2) + delta`, gated off when the network
    /// grew this sample or has a single hidden unit left.
    pub fn should_prune(&self, est: &NsEstimate, grew_this_step: bool, n_h: usize) -> bool {
        if grew_this_step || n_h <= 1 {
            return false;
        }
        let d2 = self.gamma * (-(est.variance * est.variance)).exp() + self.delta;
        let lhs = self.var_stat.mean() + self.var_stat.std();
        let rhs = self.var_min_mean + 2.0 * d2 * self.var_min_std;
        lhs >= rhs
    }

    fn reset_bias_min(&mut self) {
        self.bias_min_mean = self.bias_stat.mean();
        self.bias_min_std = self.bias_stat.std();
    }

    fn reset_var_min(&mut self) {
        self.var_min_mean = self.var_stat.mean();
        self.var_min_std = self.var_stat.std();
    }
}

impl Default for EvolveStats {
    fn default() -> Self {
        Self::new(0.86, 0.56, 1.25, 0.75)
    }
}

/// Index of the hidden unit contributing least expected activation.
/// Ties break toward the lowest index.
pub fn select_prune_index(est: &NsEstimate) -> Result<usize> {
    if est.ez.len() < 2 {
        return Err(Error::PruneForbidden);
    }
    let mut best = 0;
    for (j, &v) in est.ez.iter().enumerate() {
        if v < est.ez[best] {
            best = j;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureEvent {
    None,
    Grew,
    Pruned(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOutcome {
    pub event: StructureEvent,
    pub recon_error: f64,
    pub estimate: NsEstimate,
}

/// One full adaptation step on a sample: significance estimate, running-stat
/// update, at most one structural edit (growth wins over pruning), then the
/// contrastive parameter update. The first sample only initializes the
/// statistics; structural edits start from the second sample.
pub fn evolve_step<R: Rng + ?Sized>(
    state: &mut RbmState,
    stats: &mut EvolveStats,
    x: ArrayView1<f64>,
    rng: &mut R,
) -> Result<EvolveOutcome> {
    let first_sample = stats.bias_stat.count() == 0;
    let a = state.preactivation(x)?;
    if first_sample {
        stats.preact_stats = a.iter().map(|&v| RunningStat::seeded(v)).collect();
    }
    let est = network_significance(state, stats, x)?;

    let event = if first_sample {
        stats.push_significance(&est);
        StructureEvent::None
    } else {
        stats.update(&est, a.view());
        if stats.should_grow(&est) {
            let pre = state.grow_unit(x, rng)?;
            stats.preact_stats.push(RunningStat::seeded(pre));
            stats.reset_bias_min();
            StructureEvent::Grew
        } else if stats.should_prune(&est, false, state.n_hidden()) {
            let j = select_prune_index(&est)?;
            state.prune_unit(j)?;
            stats.preact_stats.remove(j);
            stats.reset_var_min();
            StructureEvent::Pruned(j)
        } else {
            StructureEvent::None
        }
    };

    let recon_error = state.cd1_update(x, rng)?;
    Ok(EvolveOutcome {
        event,
        recon_error,
        estimate: est,
    })
}
