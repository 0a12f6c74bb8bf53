use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{stream, Order, StreamSample};
use crate::error::{Error, Result};
use crate::evolve::{evolve_step, EvolveStats, StructureEvent, DEFAULT_STAT_DECAY};
use crate::knet::{ClusterSet, KnetParams};
use crate::metrics::{build_report, AssignmentLog, MetricsReport};
use crate::rbm::{RbmConfig, RbmState};

/// Cluster-removal threshold: an absolute sample count, a percentage of
/// the stream length, or disabled. Percentages fall back to 500 samples
/// when the stream length is unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Count(u64),
    PercentOfStream(f64),
    Disabled,
}

impl Threshold {
    pub fn resolve(&self, stream_len: Option<usize>) -> u64 {
        match *self {
            Threshold::Count(c) => c,
            Threshold::PercentOfStream(p) => match stream_len {
                Some(n) => ((p / 100.0 * n as f64).round() as u64).max(1),
                None => 500,
            },
            Threshold::Disabled => u64::MAX,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Threshold::Count(c) if c < 1 => {
                Err(Error::InvalidConfig("threshold must be at least 1".into()))
            }
            Threshold::PercentOfStream(p) if !(p > 0.0) => Err(Error::InvalidConfig(
                "threshold percentage must be positive".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Count(c) => write!(f, "{c}"),
            Threshold::PercentOfStream(p) => write!(f, "{p}%"),
            Threshold::Disabled => write!(f, "inf"),
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("disabled") {
            return Ok(Threshold::Disabled);
        }
        if let Some(pct) = s.strip_suffix('%') {
            let p: f64 = pct
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad threshold percentage '{s}'")))?;
            return Ok(Threshold::PercentOfStream(p));
        }
        let c: u64 = s
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad threshold '{s}'")))?;
        Ok(Threshold::Count(c))
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamOrder {
    AsIs,
    Shuffled,
}

/// Every tunable of a run. Defaults follow the reference operating point;
/// all fields can be overridden individually.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eta_c: f64,
    pub nu: f64,
    /// Novelty floor fraction of the mean center spacing; see
    /// [`KnetParams::spread_floor`].
    pub spread_floor: f64,
    pub rbm_lr: f64,
    pub momentum: f64,
    pub knet_lr0: f64,
    /// Learning-rate decay horizon for the cluster head, in samples;
    /// percentages track the stream length.
    pub knet_tau: Threshold,
    /// Settled neighborhood width fraction; see [`KnetParams::neighborhood`].
    pub neighborhood: f64,
    /// Cooperative-phase width fraction; see [`KnetParams::neighborhood0`].
    pub neighborhood0: f64,
    pub stat_decay: f64,
    pub threshold1: Threshold,
    pub threshold2: Threshold,
    pub seed: u64,
    pub order: StreamOrder,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.6,
            gamma: 1.25,
            delta: 0.75,
            eta_c: 1.25,
            nu: 2.5,
            spread_floor: 0.3,
            rbm_lr: 0.05,
            momentum: 0.5,
            knet_lr0: 0.5,
            knet_tau: Threshold::PercentOfStream(10.0),
            neighborhood: 0.2,
            neighborhood0: 1.0,
            stat_decay: DEFAULT_STAT_DECAY,
            threshold1: Threshold::PercentOfStream(2.0),
            threshold2: Threshold::PercentOfStream(4.0),
            seed: 0,
            order: StreamOrder::AsIs,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("eta_c", self.eta_c),
            ("nu", self.nu),
            ("rbm_lr", self.rbm_lr),
            ("knet_lr0", self.knet_lr0),
            ("neighborhood", self.neighborhood),
            ("neighborhood0", self.neighborhood0),
            ("stat_decay", self.stat_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.stat_decay > 1.0 {
            return Err(Error::InvalidConfig(
                "stat_decay must be at most 1".into(),
            ));
        }
        if !(self.spread_floor >= 0.0) || !self.spread_floor.is_finite() {
            return Err(Error::InvalidConfig(
                "spread_floor must be finite and nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        self.knet_tau.validate()?;
        self.threshold1.validate()?;
        self.threshold2.validate()?;
        Ok(())
    }

    /// Sets a named numeric field; used by sweeps and the CLI.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "alpha" => self.alpha = value,
            "beta" => self.beta = value,
            "gamma" => self.gamma = value,
            "delta" => self.delta = value,
            "eta_c" => self.eta_c = value,
            "nu" => self.nu = value,
            "spread_floor" => self.spread_floor = value,
            "rbm_lr" => self.rbm_lr = value,
            "momentum" => self.momentum = value,
            "knet_lr0" => self.knet_lr0 = value,
            "knet_tau" => self.knet_tau = Threshold::Count(value as u64),
            "neighborhood" => self.neighborhood = value,
            "neighborhood0" => self.neighborhood0 = value,
            "stat_decay" => self.stat_decay = value,
            "threshold1" => self.threshold1 = Threshold::Count(value as u64),
            "threshold2" => self.threshold2 = Threshold::Count(value as u64),
            "seed" => self.seed = value as u64,
            other => return Err(Error::UnknownParameter(other.into())),
        }
        Ok(())
    }

    pub fn stream_order(&self) -> Order {
        match self.order {
            StreamOrder::AsIs => Order::AsIs,
            StreamOrder::Shuffled => Order::Shuffled(self.seed),
        }
    }

    fn knet_params(&self, stream_len: Option<usize>) -> KnetParams {
        KnetParams {
            eta_c: self.eta_c,
            nu: self.nu,
            spread_floor: self.spread_floor,
            lr0: self.knet_lr0,
            tau: self.knet_tau.resolve(stream_len) as f64,
            neighborhood: self.neighborhood,
            neighborhood0: self.neighborhood0,
            threshold1: self.threshold1.resolve(stream_len),
            threshold2: self.threshold2.resolve(stream_len),
            stat_decay: self.stat_decay,
        }
    }
}

/// Everything observable about one processed sample. The flags are not
/// mutually exclusive: a step can grow the network and add a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub step: u64,
    pub n_h: usize,
    pub n_c: usize,
    pub recon_error: f64,
    pub grew: bool,
    pub pruned: Option<usize>,
    pub cluster_added: bool,
    pub clusters_removed: Vec<u64>,
    pub assigned_cluster: u64,
    /// Distance to the nearest center before this sample took effect;
    /// absent when no cluster existed yet.
    pub winner_distance: Option<f64>,
    pub ns_bias_sq: f64,
    pub ns_variance: f64,
}

/// The trained encoder and cluster set as they stood when the stream
/// ended, for assigning samples without further adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalModel {
    pub rbm: RbmState,
    pub clusters: ClusterSet,
}

impl FinalModel {
    /// Stable id of the cluster nearest to the sample's latent vector.
    pub fn assign(&self, x: ndarray::ArrayView1<f64>) -> Result<u64> {
        let z = self.rbm.hidden_activation(x)?;
        let (index, _) = self.clusters.assign(z.view())?;
        Ok(self.clusters.id_of(index))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub telemetry: Vec<TelemetryRecord>,
    pub log: AssignmentLog,
    pub model: FinalModel,
}

/// Single-pass run over a stream: per sample, adapt the encoder (grow,
/// prune, contrastive update), encode, then let the cluster head assign,
/// add, update, and retire clusters. The stream is consumed in the order
/// given; apply `data_io::stream` first for shuffling.
pub fn run_stream<I>(samples: I, config: &ExperimentConfig) -> Result<RunOutput>
where
    I: IntoIterator<Item = StreamSample>,
{
    config.validate()?;
    let mut iter = samples.into_iter();
    let stream_len = match iter.size_hint() {
        (lo, Some(hi)) if lo == hi => Some(hi),
        _ => None,
    };

    let first = iter.next().ok_or(Error::EmptyInput)?;
    let n_v = first.features.len();
    if n_v == 0 {
        return Err(Error::InvalidInput("zero-dimensional stream".into()));
    }

    let mut state = RbmState::new(
        n_v,
        RbmConfig {
            learning_rate: config.rbm_lr,
            momentum: config.momentum,
        },
        config.seed,
    )?;
    let mut stats = EvolveStats::with_decay(
        config.alpha,
        config.beta,
        config.gamma,
        config.delta,
        config.stat_decay,
    );
    let mut clusters = ClusterSet::new(config.knet_params(stream_len));
    // The training draws live on their own stream so they never overlap
    // the weight-initialization draws made from the same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut telemetry: Vec<TelemetryRecord> = Vec::with_capacity(stream_len.unwrap_or(0));
    let mut recon_errors: Vec<f64> = Vec::with_capacity(stream_len.unwrap_or(0));
    let mut log = AssignmentLog::new();

    let mut step: u64 = 0;
    let mut pending = Some(first);
    loop {
        let sample = match pending.take().or_else(|| iter.next()) {
            Some(s) => s,
            None => break,
        };
        step += 1;
        if sample.features.len() != n_v {
            return Err(Error::DimensionMismatch {
                context: "stream",
                expected: n_v,
                got: sample.features.len(),
            });
        }

        let outcome = evolve_step(&mut state, &mut stats, sample.features.view(), &mut rng)
            .map_err(|e| at_step(e, step))?;
        let z = state.hidden_activation(sample.features.view())?;
        match outcome.event {
            StructureEvent::Grew => clusters.resize_latent(StructureEvent::Grew, z[z.len() - 1]),
            ev @ StructureEvent::Pruned(_) => clusters.resize_latent(ev, 0.0),
            StructureEvent::None => {}
        }

        let mut cluster_added = false;
        let mut winner_distance = None;
        let assigned_index = if clusters.is_empty() {
            cluster_added = true;
            clusters.add_cluster(z.view(), step)
        } else {
            let (winner, dist) = clusters.assign(z.view())?;
            winner_distance = Some(dist);
            let add = clusters.dist_count() >= 1 && clusters.should_add_cluster(dist);
            // The add decision reads the statistics as they stood before this
            // sample; every winner distance then feeds them, so the threshold
            // tracks the full distance distribution rather than only the
            // distances that stayed below it.
            clusters.observe_distance(dist);
            if add {
                cluster_added = true;
                clusters.add_cluster(z.view(), step)
            } else {
                clusters.update_centers(z.view(), winner, step);
                winner
            }
        };
        let assigned_id = clusters.id_of(assigned_index);
        let removed = clusters.maybe_remove_clusters(step);

        if let Some(label) = sample.label {
            log.push(assigned_id, label);
        }
        recon_errors.push(outcome.recon_error);
        telemetry.push(TelemetryRecord {
            step,
            n_h: state.n_hidden(),
            n_c: clusters.len(),
            recon_error: outcome.recon_error,
            grew: outcome.event == StructureEvent::Grew,
            pruned: match outcome.event {
                StructureEvent::Pruned(j) => Some(j),
                _ => None,
            },
            cluster_added,
            clusters_removed: removed.iter().map(|r| r.id).collect(),
            assigned_cluster: assigned_id,
            winner_distance,
            ns_bias_sq: outcome.estimate.bias_sq,
            ns_variance: outcome.estimate.variance,
        });
    }

    let report = build_report(&log, &recon_errors, clusters.len(), state.n_hidden())?;
    Ok(RunOutput {
        report,
        telemetry,
        log,
        model: FinalModel {
            rbm: state,
            clusters,
        },
    })
}

fn at_step(e: Error, step: u64) -> Error {
    match e {
        Error::NumericDivergence(msg) => {
            Error::NumericDivergence(format!("at step {step}: {msg}"))
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: MetricsReport,
}

/// One run per value of a single config parameter, fanned out over up to
/// `jobs` worker threads. The stream factory is called once per run with
/// that run's config (so data can depend on the seed under sweep), and
/// rows come back in the order of `values`.
pub fn sweep<F>(
    base: &ExperimentConfig,
    param: &str,
    values: &[f64],
    jobs: usize,
    make_samples: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(&ExperimentConfig) -> Result<Vec<StreamSample>> + Sync,
{
    if values.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one value".into()));
    }
    if jobs == 0 {
        return Err(Error::InvalidInput("jobs must be at least 1".into()));
    }
    // Reject unknown parameters before spawning anything.
    base.clone().set_param(param, values[0])?;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<SweepRow>>>> =
        values.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(values.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= values.len() {
                    break;
                }
                let value = values[i];
                let result = (|| {
                    let mut config = base.clone();
                    config.set_param(param, value)?;
                    let samples = make_samples(&config)?;
                    let ordered = stream(samples, config.stream_order());
                    let out = run_stream(ordered, &config)?;
                    Ok(SweepRow {
                        value,
                        report: out.report,
                    })
                })();
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_syntax_roundtrip() {
        assert_eq!("500".parse::<Threshold>().unwrap(), Threshold::Count(500));
        assert_eq!(
            "1.5%".parse::<Threshold>().unwrap(),
            Threshold::PercentOfStream(1.5)
        );
        assert_eq!("inf".parse::<Threshold>().unwrap(), Threshold::Disabled);
        for t in [
            Threshold::Count(42),
            Threshold::PercentOfStream(2.0),
            Threshold::Disabled,
        ] {
            assert_eq!(t.to_string().parse::<Threshold>().unwrap(), t);
        }
        assert!("abc".parse::<Threshold>().is_err());
    }

    #[test]
    fn threshold_resolution() {
        assert_eq!(Threshold::Count(77).resolve(Some(10)), 77);
        assert_eq!(
            Threshold::PercentOfStream(1.5).resolve(Some(60_000)),
            900
        );
        assert_eq!(Threshold::PercentOfStream(1.5).resolve(None), 500);
        assert_eq!(Threshold::PercentOfStream(0.001).resolve(Some(10)), 1);
        assert_eq!(Threshold::Disabled.resolve(Some(10)), u64::MAX);
    }

    #[test]
    fn config_validation_catches_bad_rates() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        c.alpha = 0.86;
        c.momentum = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn set_param_rejects_unknown_names() {
        let mut c = ExperimentConfig::default();
        assert!(c.set_param("alpha", 0.9).is_ok());
        assert_eq!(c.alpha, 0.9);
        assert!(matches!(
            c.set_param("zeta", 1.0),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn config_serde_roundtrip() {
        let c = ExperimentConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
        assert!(json.contains("\"threshold1\":\"2%\""));
        assert!(json.contains("\"threshold2\":\"4%\""));
        assert!(json.contains("\"knet_tau\":\"10%\""));
    }
}
