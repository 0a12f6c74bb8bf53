use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::evolve::{StructureEvent, DEFAULT_STAT_DECAY};
use crate::stats::FadingStat;

/// Tunables for the online Kohonen head. Thresholds are sample counts;
/// `u64::MAX` disables removal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnetParams {
    pub eta_c: f64,
    pub nu: f64,
    /// Novelty floor as a fraction of the mean pairwise center distance.
    /// A candidate must sit farther from every center than this fraction
    /// of the set's own spread, so near-duplicates of an established
    /// cluster never spawn once the centers have separated. Inactive
    /// while fewer than two clusters exist, which keeps early growth
    /// permissive. Zero disables the floor.
    pub spread_floor: f64,
    pub lr0: f64,
    pub tau: f64,
    /// Settled neighborhood width as a fraction of the mean winner
    /// distance, so the kernel reaches redundant near-duplicate centers at
    /// any data scale without bridging genuinely separate ones.
    pub neighborhood: f64,
    /// Width fraction at the start of the stream. Early on every center
    /// follows every sample (cooperation), so redundant centers condense
    /// onto each other; the fraction relaxes toward `neighborhood` on the
    /// `tau` timescale, shrinking the region of influence as evidence
    /// accumulates.
    pub neighborhood0: f64,
    pub threshold1: u64,
    pub threshold2: u64,
    /// Fading-memory gain for the winner-distance statistics.
    pub stat_decay: f64,
}

impl Default for KnetParams {
    fn default() -> Self {
        Self {
            eta_c: 1.25,
            nu: 0.85,
            spread_floor: 0.0,
            lr0: 0.5,
            tau: 200.0,
            neighborhood: 0.3,
            neighborhood0: 1.0,
            threshold1: 500,
            threshold2: 500,
            stat_decay: DEFAULT_STAT_DECAY,
        }
    }
}

/// A cluster removed by the staleness sweep, reported with both its
/// position at removal time and its stable historical id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemovedCluster {
    pub index: usize,
    pub id: u64,
}

/// Online cluster set over the latent space. Every cluster keeps a center,
/// its creation step, the step it last won, and a stable id that survives
/// in logs after the cluster itself is removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub params: KnetParams,
    centers: Vec<Array1<f64>>,
    added_step: Vec<u64>,
    last_won_step: Vec<u64>,
    ids: Vec<u64>,
    next_id: u64,
    dist_stat: FadingStat,
    step_count: u64,
}

impl ClusterSet {
    pub fn new(params: KnetParams) -> Self {
        let dist_stat = FadingStat::new(params.stat_decay);
        Self {
            params,
            centers: Vec::new(),
            added_step: Vec::new(),
            last_won_step: Vec::new(),
            ids: Vec::new(),
            next_id: 0,
            dist_stat,
            step_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Array1<f64>] {
        &self.centers
    }

    /// Current neighborhood width: a fraction of the mean winner distance,
    /// zero until distances have been observed. The fraction decays from
    /// `neighborhood0` to `neighborhood` on the `tau` timescale.
    pub fn neighborhood_width(&self) -> f64 {
        let p = &self.params;
        let fade = (-(self.step_count as f64) / p.tau).exp();
        let fraction = p.neighborhood + (p.neighborhood0 - p.neighborhood) * fade;
        fraction * self.dist_stat.mean()
    }

    pub fn id_of(&self, index: usize) -> u64 {
        self.ids[index]
    }

    /// Winner distances observed so far.
    pub fn dist_count(&self) -> u64 {
        self.dist_stat.count()
    }

    pub fn observe_distance(&mut self, dist: f64) {
        self.dist_stat.push(dist);
    }

    pub fn learning_rate(&self) -> f64 {
        self.params.lr0 / (1.0 + self.step_count as f64 / self.params.tau)
    }

    /// Nearest center by Euclidean distance; ties resolve to the lowest
    /// index.
    pub fn assign(&self, z: ArrayView1<f64>) -> Result<(usize, f64)> {
        if self.centers.is_empty() {
            return Err(Error::NoClusters);
        }
        let mut winner = 0;
        let mut best = squared_dist(self.centers[0].view(), z);
        for (i, c) in self.centers.iter().enumerate().skip(1) {
            let d = squared_dist(c.view(), z);
            if d < best {
                best = d;
                winner = i;
            }
        }
        Ok((winner, best.sqrt()))
    }

    /// Mean Euclidean distance over unordered center pairs; zero while
    /// fewer than two clusters exist.
    pub fn mean_center_spacing(&self) -> f64 {
        let n = self.centers.len();
        if n < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                total += squared_dist(self.centers[i].view(), self.centers[j].view()).sqrt();
            }
        }
        total / (n * (n - 1) / 2) as f64
    }

    /// New-cluster test: the winner distance must exceed
    /// `mu_D + d3 * sigma_D` strictly, with `d3 = eta_c * exp(-dist) + nu`,
    /// and also clear `spread_floor` times the mean center spacing. The
    /// statistical part flags samples far outside the winner-distance
    /// distribution; the floor rejects artifacts of that distribution
    /// tightening, where a sample can sit many sigma out yet still lie
    /// far closer to its winner than the clusters are to each other.
    pub fn should_add_cluster(&self, min_dist: f64) -> bool {
        let d3 = self.params.eta_c * (-min_dist).exp() + self.params.nu;
        min_dist > self.dist_stat.mean() + d3 * self.dist_stat.std()
            && (self.params.spread_floor <= 0.0
                || min_dist > self.params.spread_floor * self.mean_center_spacing())
    }

    /// Appends a cluster centered on `z`, marking it as winning now.
    /// Returns its index.
    pub fn add_cluster(&mut self, z: ArrayView1<f64>, step: u64) -> usize {
        self.centers.push(z.to_owned());
        self.added_step.push(step);
        self.last_won_step.push(step);
        self.ids.push(self.next_id);
        self.next_id += 1;
        self.centers.len() - 1
    }

    /// Kohonen update: every center moves toward `z` weighted by a Gaussian
    /// kernel of its distance to the winning center, then the
    /// learning-rate schedule advances one tick. Until the neighborhood
    /// width is established (no distances observed yet), only the winner
    /// moves.
    pub fn update_centers(&mut self, z: ArrayView1<f64>, winner: usize, step: u64) {
        debug_assert!(winner < self.centers.len());
        let lr = self.learning_rate();
        let sigma = self.neighborhood_width();
        let winner_center = self.centers[winner].clone();
        for (c, center) in self.centers.iter_mut().enumerate() {
            let h = if c == winner {
                1.0
            } else if sigma > 0.0 {
                let d_sq = squared_dist(center.view(), winner_center.view());
                (-d_sq / (2.0 * sigma * sigma)).exp()
            } else {
                0.0
            };
            let g = lr * h;
            Zip::from(center).and(&z).for_each(|w, &zi| *w += g * (zi - *w));
        }
        self.last_won_step[winner] = step;
        self.step_count += 1;
    }

    /// Staleness sweep: a cluster is dropped when it is old enough to have
    /// had its chance (condition 1, age at least `threshold1`) yet has not
    /// won a sample for `threshold2` steps (condition 2), both inclusive.
    /// The set never empties: if every cluster qualifies, the most
    /// recently won one stays.
    pub fn maybe_remove_clusters(&mut self, step: u64) -> Vec<RemovedCluster> {
        if self.centers.is_empty() {
            return Vec::new();
        }
        let mut doomed: Vec<usize> = (0..self.centers.len())
            .filter(|&i| {
                step.saturating_sub(self.added_step[i]) >= self.params.threshold1
                    && step.saturating_sub(self.last_won_step[i]) >= self.params.threshold2
            })
            .collect();
        if doomed.len() == self.centers.len() {
            let mut keep = 0;
            for i in 1..self.centers.len() {
                if self.last_won_step[i] > self.last_won_step[keep] {
                    keep = i;
                }
            }
            doomed.retain(|&i| i != keep);
        }
        let removed: Vec<RemovedCluster> = doomed
            .iter()
            .map(|&i| RemovedCluster {
                index: i,
                id: self.ids[i],
            })
            .collect();
        for &i in doomed.iter().rev() {
            self.centers.remove(i);
            self.added_step.remove(i);
            self.last_won_step.remove(i);
            self.ids.remove(i);
        }
        removed
    }

    /// Keeps center dimensionality in lockstep with the latent space: a
    /// grown coordinate is seeded with the current sample's value on every
    /// center (which leaves the current winner unchanged); a pruned
    /// coordinate is dropped everywhere.
    pub fn resize_latent(&mut self, event: StructureEvent, z_new_coord: f64) {
        match event {
            StructureEvent::None => {}
            StructureEvent::Grew => {
                for center in &mut self.centers {
                    center
                        .append(ndarray::Axis(0), ndarray::aview1(&[z_new_coord]))
                        .expect("center append");
                }
            }
            StructureEvent::Pruned(j) => {
                for center in &mut self.centers {
                    debug_assert!(j < center.len());
                    center.remove_index(ndarray::Axis(0), j);
                }
            }
        }
    }
}

fn squared_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    Zip::from(&a)
        .and(&b)
        .fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y))
}
