use ndarray::{Array1, ArrayView1, Zip};

use crate::data_io::StreamSample;
use crate::error::{Error, Result};
use crate::metrics::AssignmentLog;

/// Sequential k-means with a fixed k: each center is the exact running
/// mean of the samples assigned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct OKMeansState {
    pub centers: Vec<Array1<f64>>,
    pub counts: Vec<u64>,
}

impl OKMeansState {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Assigns `x` to the nearest center (ties to the lowest index),
    /// then moves that center onto the running mean of its members.
    pub fn step(&mut self, x: ArrayView1<f64>) -> Result<usize> {
        let dim = self.centers[0].len();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "okmeans_step",
                expected: dim,
                got: x.len(),
            });
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centers.iter().enumerate() {
            let d = Zip::from(c)
                .and(&x)
                .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        self.counts[best] += 1;
        let inv = 1.0 / self.counts[best] as f64;
        Zip::from(&mut self.centers[best])
            .and(&x)
            .for_each(|c, &v| *c += (v - *c) * inv);
        Ok(best)
    }
}

/// Seeds k centers from the first k distinct samples of the prefix.
/// Duplicate arrivals in the prefix are absorbed as ordinary assignment
/// steps. Returns the state and the assignments of every consumed sample.
pub fn okmeans_init(k: usize, samples: &[StreamSample]) -> Result<(OKMeansState, Vec<usize>)> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut state = OKMeansState {
        centers: Vec::with_capacity(k),
        counts: Vec::with_capacity(k),
    };
    let mut assigned = Vec::new();
    for sample in samples {
        if state.centers.iter().any(|c| *c == sample.features) {
            assigned.push(state.step(sample.features.view())?);
        } else {
            state.centers.push(sample.features.clone());
            state.counts.push(1);
            assigned.push(state.centers.len() - 1);
        }
        if state.centers.len() == k {
            break;
        }
    }
    if state.centers.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            found: state.centers.len(),
        });
    }
    Ok((state, assigned))
}

/// Full baseline pass: initialize from the stream prefix, then one
/// MacQueen step per remaining sample. Labeled samples are logged for
/// evaluation.
pub fn run_okmeans(samples: &[StreamSample], k: usize) -> Result<(OKMeansState, AssignmentLog)> {
    let (mut state, warmup) = okmeans_init(k, samples)?;
    let mut log = AssignmentLog::new();
    for (sample, &a) in samples.iter().zip(&warmup) {
        if let Some(label) = sample.label {
            log.push(a as u64, label);
        }
    }
    for sample in &samples[warmup.len()..] {
        let a = state.step(sample.features.view())?;
        if let Some(label) = sample.label {
            log.push(a as u64, label);
        }
    }
    Ok((state, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::make_blobs;
    use crate::metrics::purity;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(features: Array1<f64>) -> StreamSample {
        StreamSample {
            features,
            label: None,
        }
    }

    #[test]
    fn init_uses_first_samples_as_centers() {
        let samples = vec![sample(array![0.0, 0.0]), sample(array![1.0, 1.0])];
        let (state, assigned) = okmeans_init(2, &samples).unwrap();
        assert_eq!(state.centers[0], array![0.0, 0.0]);
        assert_eq!(state.centers[1], array![1.0, 1.0]);
        assert_eq!(state.counts, vec![1, 1]);
        assert_eq!(assigned, vec![0, 1]);
    }

    #[test]
    fn init_skips_duplicates_for_centers() {
        let samples = vec![
            sample(array![0.5, 0.5]),
            sample(array![0.5, 0.5]),
            sample(array![0.9, 0.1]),
        ];
        let (state, assigned) = okmeans_init(2, &samples).unwrap();
        assert_eq!(state.centers[0], array![0.5, 0.5]);
        assert_eq!(state.centers[1], array![0.9, 0.1]);
        // The duplicate was absorbed by center 0.
        assert_eq!(assigned, vec![0, 0, 1]);
        assert_eq!(state.counts, vec![2, 1]);
    }

    #[test]
    fn init_with_too_few_samples_errors() {
        let samples = vec![sample(array![0.0]), sample(array![1.0])];
        assert!(matches!(
            okmeans_init(3, &samples),
            Err(Error::InsufficientData { needed: 3, found: 2 })
        ));
    }

    #[test]
    fn step_moves_center_to_running_mean() {
        let mut state = OKMeansState {
            centers: vec![Array1::from_vec(vec![0.0, 0.0])],
            counts: vec![1],
        };
        let a = state.step(array![2.0, 0.0].view()).unwrap();
        assert_eq!(a, 0);
        assert_eq!(state.centers[0], array![1.0, 0.0]);
        assert_eq!(state.counts[0], 2);
    }

    #[test]
    fn step_on_exact_center_only_bumps_count() {
        let mut state = OKMeansState {
            centers: vec![Array1::from_vec(vec![0.25, 0.75])],
            counts: vec![3],
        };
        state.step(array![0.25, 0.75].view()).unwrap();
        assert_eq!(state.centers[0], array![0.25, 0.75]);
        assert_eq!(state.counts[0], 4);
    }

    #[test]
    fn centers_equal_replayed_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let samples: Vec<StreamSample> = (0..200)
            .map(|_| sample(Array1::from_shape_fn(3, |_| rng.random::<f64>())))
            .collect();
        let (mut state, mut assigned) = okmeans_init(4, &samples).unwrap();
        for s in &samples[assigned.len()..] {
            assigned.push(state.step(s.features.view()).unwrap());
        }
        for c in 0..4 {
            let members: Vec<&StreamSample> = samples
                .iter()
                .zip(&assigned)
                .filter(|(_, &a)| a == c)
                .map(|(s, _)| s)
                .collect();
            assert_eq!(members.len() as u64, state.counts[c]);
            let mut mean = Array1::<f64>::zeros(3);
            for m in &members {
                mean += &m.features;
            }
            mean /= members.len() as f64;
            for j in 0..3 {
                assert!((mean[j] - state.centers[c][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn deterministic_assignment_sequence() {
        let (samples, _) = make_blobs(3, 50, 4, 0.4, 0.02, 2).unwrap();
        let (_, log_a) = run_okmeans(&samples, 3).unwrap();
        let (_, log_b) = run_okmeans(&samples, 3).unwrap();
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn separated_blobs_reach_high_purity() {
        // Round-robin label order so the init prefix spans all blobs.
        let (samples, _) = make_blobs(3, 200, 8, 0.5, 0.01, 6).unwrap();
        let mut by_label: Vec<Vec<StreamSample>> = vec![Vec::new(); 3];
        for s in samples {
            by_label[s.label.unwrap() as usize].push(s);
        }
        let mut ordered = Vec::new();
        for i in 0..200 {
            for blob in &by_label {
                ordered.push(blob[i].clone());
            }
        }
        let (_, log) = run_okmeans(&ordered, 3).unwrap();
        let p = purity(&log).unwrap();
        assert!(p >= 95.0, "purity {p}");
    }
}
