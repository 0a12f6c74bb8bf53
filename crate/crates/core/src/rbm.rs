use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// How the hidden layer is treated on the positive phase of a contrastive
/// update. `Stochastic` is the normal mode; `MeanField` substitutes the
/// activation probabilities for the Bernoulli draw so updates are exactly
/// reproducible without a random source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenSampling {
    Stochastic,
    MeanField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbmConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for RbmConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.5,
        }
    }
}

/// Bernoulli-Bernoulli RBM whose hidden layer can grow and shrink online.
/// Weights are visible-major: `weights[[i, j]]` connects visible unit `i`
/// to hidden unit `j`. Velocity buffers always mirror the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmState {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub vel_weights: Array2<f64>,
    pub vel_visible: Array1<f64>,
    pub vel_hidden: Array1<f64>,
    pub config: RbmConfig,
}

impl RbmState {
    /// Fresh network with a single hidden unit, weights uniform in
    /// [-0.01, 0.01], biases zero. Deterministic for a fixed seed.
    pub fn new(n_visible: usize, config: RbmConfig, seed: u64) -> Result<Self> {
        if n_visible == 0 {
            return Err(Error::InvalidInput("n_visible must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights =
            Array2::from_shape_fn((n_visible, 1), |_| rng.random_range(-0.01..0.01));
        Ok(Self {
            weights,
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(1),
            vel_weights: Array2::zeros((n_visible, 1)),
            vel_visible: Array1::zeros(n_visible),
            vel_hidden: Array1::zeros(1),
            config,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    fn check_visible(&self, x: ArrayView1<f64>, context: &'static str) -> Result<()> {
        if x.len() != self.n_visible() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.n_visible(),
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in {context} input"
            )));
        }
        Ok(())
    }

    /// Hidden pre-activations `x·W + c`.
    pub fn preactivation(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_visible(x, "preactivation")?;
        Ok(x.dot(&self.weights) + &self.hidden_bias)
    }

    /// Hidden unit on-probabilities `s(x·W + c)`, all in (0, 1).
    pub fn hidden_activation(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.preactivation(x)?.mapv(sigmoid))
    }

    /// Visible reconstruction probabilities `s(W·h + b)`.
    pub fn reconstruct(&self, hidden: ArrayView1<f64>) -> Result<Array1<f64>> {
        if hidden.len() != self.n_hidden() {
            return Err(Error::DimensionMismatch {
                context: "reconstruct",
                expected: self.n_hidden(),
                got: hidden.len(),
            });
        }
        Ok((self.weights.dot(&hidden) + &self.visible_bias).mapv(sigmoid))
    }

    /// One contrastive-divergence step (single Gibbs half-cycle) with
    /// momentum. Returns the L2 reconstruction error for `x`.
    ///
    /// The hidden state is sampled once for the positive phase; the
    /// reconstruction and the negative phase use probabilities throughout.
    pub fn cd1_update<R: Rng + ?Sized>(&mut self, x: ArrayView1<f64>, rng: &mut R) -> Result<f64> {
        self.cd1_update_with(x, rng, HiddenSampling::Stochastic)
    }

    pub fn cd1_update_with<R: Rng + ?Sized>(
        &mut self,
        x: ArrayView1<f64>,
        rng: &mut R,
        sampling: HiddenSampling,
    ) -> Result<f64> {
        self.check_visible(x, "cd1_update")?;
        let z0 = self.hidden_activation(x)?;
        let h0 = match sampling {
            HiddenSampling::Stochastic => {
                z0.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
            }
            HiddenSampling::MeanField => z0.clone(),
        };
        let xhat = self.reconstruct(h0.view())?;
        let z1 = self.hidden_activation(xhat.view())?;

        let lr = self.config.learning_rate;
        let momentum = self.config.momentum;

        // delta = momentum * velocity + lr * (<x z0> - <xhat z1>), applied
        // to the parameters and stored back as the new velocity.
        let mut delta_w = &self.vel_weights * momentum;
        for (i, mut row) in delta_w.outer_iter_mut().enumerate() {
            let pos = lr * x[i];
            let neg = lr * xhat[i];
            Zip::from(&mut row)
                .and(&z0)
                .and(&z1)
                .for_each(|d, &a, &b| *d += pos * a - neg * b);
        }
        self.weights += &delta_w;
        self.vel_weights = delta_w;

        let mut delta_b = &self.vel_visible * momentum;
        Zip::from(&mut delta_b)
            .and(&x)
            .and(&xhat)
            .for_each(|d, &a, &b| *d += lr * (a - b));
        self.visible_bias += &delta_b;
        self.vel_visible = delta_b;

        let mut delta_c = &self.vel_hidden * momentum;
        Zip::from(&mut delta_c)
            .and(&z0)
            .and(&z1)
            .for_each(|d, &a, &b| *d += lr * (a - b));
        self.hidden_bias += &delta_c;
        self.vel_hidden = delta_c;

        if !self.params_finite() {
            return Err(Error::NumericDivergence(
                "non-finite parameter after contrastive update".into(),
            ));
        }

        let recon_error = Zip::from(&x)
            .and(&xhat)
            .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
            .sqrt();
        Ok(recon_error)
    }

    fn params_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite())
            && self.visible_bias.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite())
    }

    /// Appends a hidden unit whose incoming weights are a scaled copy of
    /// the current input (scale uniform in [-0.1, 0.1]) and whose bias and
    /// velocities are zero. Returns the new unit's pre-activation on `x`.
    pub fn grow_unit<R: Rng + ?Sized>(&mut self, x: ArrayView1<f64>, rng: &mut R) -> Result<f64> {
        self.check_visible(x, "grow_unit")?;
        let scale = rng.random_range(-0.1..0.1);
        let col = x.mapv(|v| scale * v).insert_axis(Axis(1));
        self.weights = concatenate(Axis(1), &[self.weights.view(), col.view()])
            .expect("column append preserves row count");
        self.vel_weights = concatenate(
            Axis(1),
            &[
                self.vel_weights.view(),
                Array2::zeros((self.n_visible(), 1)).view(),
            ],
        )
        .expect("column append preserves row count");
        self.hidden_bias
            .append(Axis(0), Array1::zeros(1).view())
            .expect("bias append");
        self.vel_hidden
            .append(Axis(0), Array1::zeros(1).view())
            .expect("velocity append");
        let j = self.n_hidden() - 1;
        Ok(self.weights.column(j).dot(&x) + self.hidden_bias[j])
    }

    /// Removes hidden unit `index` together with its velocity entries.
    /// The last unit can never be pruned.
    pub fn prune_unit(&mut self, index: usize) -> Result<()> {
        let n = self.n_hidden();
        if n <= 1 {
            return Err(Error::PruneForbidden);
        }
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
        self.weights.remove_index(Axis(1), index);
        self.vel_weights.remove_index(Axis(1), index);
        self.hidden_bias.remove_index(Axis(0), index);
        self.vel_hidden.remove_index(Axis(0), index);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn unit_rbm(lr: f64, momentum: f64) -> RbmState {
        let mut s = RbmState::new(
            1,
            RbmConfig {
                learning_rate: lr,
                momentum,
            },
            0,
        )
        .unwrap();
        s.weights.fill(0.0);
        s
    }

    #[test]
    fn init_shapes_and_ranges() {
        let s = RbmState::new(5, RbmConfig::default(), 42).unwrap();
        assert_eq!(s.n_visible(), 5);
        assert_eq!(s.n_hidden(), 1);
        assert!(s.weights.iter().all(|w| w.abs() < 0.01));
        assert!(s.visible_bias.iter().all(|&b| b == 0.0));
        assert_eq!(s.hidden_bias[0], 0.0);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = RbmState::new(784, RbmConfig::default(), 7).unwrap();
        let b = RbmState::new(784, RbmConfig::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = RbmState::new(784, RbmConfig::default(), 8).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn hidden_activation_zero_weights_gives_half() {
        let s = unit_rbm(1.0, 0.0);
        let z = s.hidden_activation(array![1.0].view()).unwrap();
        assert_eq!(z[0], 0.5);
    }

    #[test]
    fn hidden_activation_known_value() {
        // Pre-activation 2 gives s(2).
        let mut s = unit_rbm(1.0, 0.0);
        s.weights[[0, 0]] = 2.0;
        let z = s.hidden_activation(array![1.0].view()).unwrap();
        assert_abs_diff_eq!(z[0], 0.8807970779778823, epsilon = 1e-15);
    }

    #[test]
    fn mean_field_update_matches_hand_computation() {
        // All-zero 1x1 network, x = [1], lr = 1, momentum = 0:
        // z0 = 0.5, xhat = 0.5, z1 = 0.5, so dW = 0.25, db = 0.5, dc = 0.
        let mut s = unit_rbm(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = s
            .cd1_update_with(array![1.0].view(), &mut rng, HiddenSampling::MeanField)
            .unwrap();
        assert_abs_diff_eq!(err, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.weights[[0, 0]], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.visible_bias[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.hidden_bias[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.vel_weights[[0, 0]], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn momentum_carries_previous_delta() {
        let mut s = unit_rbm(1.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.cd1_update_with(array![1.0].view(), &mut rng, HiddenSampling::MeanField)
            .unwrap();
        let w1 = s.weights[[0, 0]];
        let v1 = s.vel_weights[[0, 0]];
        assert_abs_diff_eq!(w1, 0.25, epsilon = 1e-15);
        // Second step: delta = 0.5 * v1 + lr * gradient(current state).
        let z0 = s.hidden_activation(array![1.0].view()).unwrap()[0];
        let xhat = s.reconstruct(array![z0].view()).unwrap()[0];
        let z1 = s.hidden_activation(array![xhat].view()).unwrap()[0];
        let expect_delta = 0.5 * v1 + (1.0 * z0 - xhat * z1);
        s.cd1_update_with(array![1.0].view(), &mut rng, HiddenSampling::MeanField)
            .unwrap();
        assert_abs_diff_eq!(s.weights[[0, 0]], w1 + expect_delta, epsilon = 1e-12);
        assert_abs_diff_eq!(s.vel_weights[[0, 0]], expect_delta, epsilon = 1e-12);
    }

    #[test]
    fn stochastic_update_is_deterministic_per_seed() {
        let x = array![1.0, 0.0, 1.0, 0.5];
        let mut a = RbmState::new(4, RbmConfig::default(), 3).unwrap();
        let mut b = a.clone();
        let mut ra = ChaCha8Rng::seed_from_u64(11);
        let mut rb = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            a.cd1_update(x.view(), &mut ra).unwrap();
            b.cd1_update(x.view(), &mut rb).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn grow_appends_scaled_input_column() {
        let mut s = RbmState::new(3, RbmConfig::default(), 0).unwrap();
        let x = array![1.0, 0.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pre = s.grow_unit(x.view(), &mut rng).unwrap();
        assert_eq!(s.n_hidden(), 2);
        let col = s.weights.column(1);
        // New column is c' * x, so its ratio against x is constant where x != 0.
        let scale = col[0] / x[0];
        assert!(scale.abs() < 0.1);
        assert_abs_diff_eq!(col[2], scale * x[2], epsilon = 1e-15);
        assert_eq!(col[1], 0.0);
        assert_eq!(s.hidden_bias[1], 0.0);
        assert_eq!(s.vel_hidden[1], 0.0);
        assert!(s.vel_weights.column(1).iter().all(|&v| v == 0.0));
        assert_abs_diff_eq!(pre, col.dot(&x), epsilon = 1e-15);
    }

    #[test]
    fn prune_removes_requested_column() {
        let mut s = RbmState::new(2, RbmConfig::default(), 0).unwrap();
        let x = array![1.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        s.grow_unit(x.view(), &mut rng).unwrap();
        s.grow_unit(x.view(), &mut rng).unwrap();
        let keep0 = s.weights.column(0).to_owned();
        let keep2 = s.weights.column(2).to_owned();
        s.prune_unit(1).unwrap();
        assert_eq!(s.n_hidden(), 2);
        assert_eq!(s.weights.column(0), keep0);
        assert_eq!(s.weights.column(1), keep2);
        assert_eq!(s.hidden_bias.len(), 2);
        assert_eq!(s.vel_hidden.len(), 2);
        assert_eq!(s.vel_weights.ncols(), 2);
    }

    #[test]
    fn prune_last_unit_is_refused() {
        let mut s = RbmState::new(2, RbmConfig::default(), 0).unwrap();
        assert!(matches!(s.prune_unit(0), Err(Error::PruneForbidden)));
    }

    #[test]
    fn prune_out_of_range_is_refused() {
        let mut s = RbmState::new(2, RbmConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        s.grow_unit(array![1.0, 0.0].view(), &mut rng).unwrap();
        assert!(matches!(
            s.prune_unit(2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = RbmState::new(3, RbmConfig::default(), 0).unwrap();
        let err = s.hidden_activation(array![1.0, 0.0].view()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 2, .. }));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut s = RbmState::new(2, RbmConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = s
            .cd1_update(array![f64::NAN, 0.0].view(), &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn reconstruction_error_falls_with_training() {
        // Four 8-bit patterns cycled for 2000 steps; the running mean of the
        // reconstruction error over the last 200 steps must drop below the
        // mean over the first 200.
        let patterns = [
            array![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            array![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            array![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            array![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        ];
        let mut s = RbmState::new(8, RbmConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Widen to 8 hidden units so the model has capacity.
        for _ in 0..7 {
            s.grow_unit(patterns[0].view(), &mut rng).unwrap();
        }
        let mut errs = Vec::new();
        for t in 0..2000 {
            let x = &patterns[t % 4];
            errs.push(s.cd1_update(x.view(), &mut rng).unwrap());
        }
        let head: f64 = errs[..200].iter().sum::<f64>() / 200.0;
        let tail: f64 = errs[1800..].iter().sum::<f64>() / 200.0;
        assert!(
            tail < head,
            "reconstruction error did not improve: head {head}, tail {tail}"
        );
    }
}
