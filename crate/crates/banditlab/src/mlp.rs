//! Two-layer reward network: rectifier MLP with masked-MSE training.
//!
//! The network maps a raw context `x` to one reward estimate per arm,
//!
//! ```text
//! φ(x) = rect(s_in · W1 x + b1)        (hidden features, dimension g)
//! f(x) = s_hid · W2 φ(x) + b2          (one output per arm)
//! ```
//!
//! where the forward scales `s_in`, `s_hid` are 1 under standard He-style
//! initialization and `1/√fan_in` under the NTK parameterization used by the
//! representation-drift probe. Training performs plain SGD on the masked
//! mean-squared error — only the played arm's output is differentiated per
//! example — with a hyperbolically decaying learning rate.
//!
//! The hidden activations `φ(x)` are the features the Bayesian linear layers
//! regress on; [`Mlp::last_layer_weights`] exports an arm's effective
//! feature-space coefficients for use as a prior mean, and [`Mlp::ntk`]
//! evaluates the empirical neural tangent kernel for drift measurements.

use crate::linalg::Vector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Exponential decay of the squared-gradient cache in the adaptive update.
const RMS_DECAY: f64 = 0.9;
/// Denominator guard of the adaptive update.
const RMS_EPS: f64 = 1e-10;

/// Failure modes of network construction and evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlpError {
    /// An input's dimension disagrees with the network's.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    /// An arm index is out of range.
    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    /// A minibatch had no examples or misaligned columns.
    #[error("invalid minibatch: {0}")]
    InvalidBatch(String),
    /// A constructor argument was outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Weight initialization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// He-style: weights `N(0, 2/fan_in)`, zero biases, unit forward scales.
    Standard,
    /// NTK parameterization: weights `N(0, 1)`, zero biases, forward scales
    /// `1/√fan_in` applied at evaluation time.
    Ntk,
}

/// A training minibatch of (context, played arm, observed reward) triples.
#[derive(Debug, Clone)]
pub struct Minibatch {
    contexts: Vec<Vector>,
    arms: Vec<usize>,
    rewards: Vec<f64>,
}

impl Minibatch {
    /// Validates alignment and non-emptiness.
    pub fn new(contexts: Vec<Vector>, arms: Vec<usize>, rewards: Vec<f64>) -> Result<Self, MlpError> {
        if contexts.is_empty() {
            return Err(MlpError::InvalidBatch("empty minibatch".into()));
        }
        if contexts.len() != arms.len() || contexts.len() != rewards.len() {
            return Err(MlpError::InvalidBatch(format!(
                "misaligned columns: {} contexts, {} arms, {} rewards",
                contexts.len(),
                arms.len(),
                rewards.len()
            )));
        }
        Ok(Minibatch { contexts, arms, rewards })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contexts(&self) -> &[Vector] {
        &self.contexts
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }
}

/// Flat gradient accumulator mirroring the parameter tensors.
struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Two-layer rectifier network with one output per arm.
#[derive(Debug, Clone)]
pub struct Mlp {
    input_dim: usize,
    hidden_dim: usize,
    num_arms: usize,
    /// `g × d`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `N × g`, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
    in_scale: f64,
    hid_scale: f64,
    lr_decay: f64,
    step_count: u64,
    /// RMS gradient cache, `[W1, b1, W2, b2]` concatenated.
    sq_grad: Vec<f64>,
}

impl Mlp {
    /// Fresh network under the given initialization scheme.
    ///
    /// `lr_decay` is the per-step hyperbolic decay constant κ in
    /// `lr_t = base_lr / (1 + κ·t)`.
    pub fn new<R: Rng>(
        input_dim: usize,
        hidden_dim: usize,
        num_arms: usize,
        scheme: InitScheme,
        lr_decay: f64,
        rng: &mut R,
    ) -> Result<Self, MlpError> {
        if input_dim == 0 || hidden_dim == 0 || num_arms == 0 {
            return Err(MlpError::InvalidArgument("all dimensions must be >= 1".into()));
        }
        if !(lr_decay >= 0.0) || !lr_decay.is_finite() {
            return Err(MlpError::InvalidArgument(format!("lr_decay must be finite and >= 0, got {lr_decay}")));
        }
        let (w1_std, w2_std, in_scale, hid_scale) = match scheme {
            InitScheme::Standard => ((2.0 / input_dim as f64).sqrt(), (2.0 / hidden_dim as f64).sqrt(), 1.0, 1.0),
            InitScheme::Ntk => (1.0, 1.0, 1.0 / (input_dim as f64).sqrt(), 1.0 / (hidden_dim as f64).sqrt()),
        };
        let mut draw = |std: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    std * z
                })
                .collect()
        };
        let w1 = draw(w1_std, hidden_dim * input_dim);
        let w2 = draw(w2_std, num_arms * hidden_dim);
        Ok(Mlp {
            input_dim,
            hidden_dim,
            num_arms,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; num_arms],
            in_scale,
            hid_scale,
            lr_decay,
            step_count: 0,
            sq_grad: vec![0.0; hidden_dim * input_dim + hidden_dim + num_arms * hidden_dim + num_arms],
        })
    }

    /// Builds a network from explicit weight tensors (checkpoint restore and
    /// tests). `w1` is `hidden_dim × input_dim` row-major, `w2` is
    /// `num_arms × hidden_dim` row-major; the scheme fixes the forward
    /// scales. Step count starts at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        num_arms: usize,
        scheme: InitScheme,
        lr_decay: f64,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self, MlpError> {
        if input_dim == 0 || hidden_dim == 0 || num_arms == 0 {
            return Err(MlpError::InvalidArgument("all dimensions must be >= 1".into()));
        }
        let expect = [
            (w1.len(), hidden_dim * input_dim),
            (b1.len(), hidden_dim),
            (w2.len(), num_arms * hidden_dim),
            (b2.len(), num_arms),
        ];
        for (got, want) in expect {
            if got != want {
                return Err(MlpError::DimensionMismatch { expected: want, actual: got });
            }
        }
        let (in_scale, hid_scale) = match scheme {
            InitScheme::Standard => (1.0, 1.0),
            InitScheme::Ntk => (1.0 / (input_dim as f64).sqrt(), 1.0 / (hidden_dim as f64).sqrt()),
        };
        Ok(Mlp {
            input_dim,
            hidden_dim,
            num_arms,
            w1,
            b1,
            w2,
            b2,
            in_scale,
            hid_scale,
            lr_decay,
            step_count: 0,
            sq_grad: vec![0.0; hidden_dim * input_dim + hidden_dim + num_arms * hidden_dim + num_arms],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    fn check_input(&self, x: &Vector) -> Result<(), MlpError> {
        if x.dim() != self.input_dim {
            return Err(MlpError::DimensionMismatch { expected: self.input_dim, actual: x.dim() });
        }
        Ok(())
    }

    fn check_arm(&self, arm: usize) -> Result<(), MlpError> {
        if arm >= self.num_arms {
            return Err(MlpError::ArmOutOfRange { arm, num_arms: self.num_arms });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Minibatch) -> Result<(), MlpError> {
        for x in &batch.contexts {
            self.check_input(x)?;
        }
        for &a in &batch.arms {
            self.check_arm(a)?;
        }
        Ok(())
    }

    /// Pre-activations and post-activation features for one input.
    fn hidden(&self, x: &Vector) -> (Vec<f64>, Vec<f64>) {
        let (g, d) = (self.hidden_dim, self.input_dim);
        let xs = x.as_slice();
        let mut pre = vec![0.0; g];
        for j in 0..g {
            let row = &self.w1[j * d..(j + 1) * d];
            let dot: f64 = row.iter().zip(xs).map(|(w, v)| w * v).sum();
            pre[j] = self.in_scale * dot + self.b1[j];
        }
        let phi = pre.iter().map(|&p| p.max(0.0)).collect();
        (pre, phi)
    }

    fn outputs_from_features(&self, phi: &[f64]) -> Vec<f64> {
        let (n, g) = (self.num_arms, self.hidden_dim);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &self.w2[i * g..(i + 1) * g];
            let dot: f64 = row.iter().zip(phi).map(|(w, p)| w * p).sum();
            out[i] = self.hid_scale * dot + self.b2[i];
        }
        out
    }

    /// Forward pass: per-arm reward estimates and the hidden feature vector.
    pub fn forward(&self, x: &Vector) -> Result<(Vector, Vector), MlpError> {
        self.check_input(x)?;
        let (_, phi) = self.hidden(x);
        let out = self.outputs_from_features(&phi);
        Ok((Vector::from_vec(out), Vector::from_vec(phi)))
    }

    /// Hidden feature vector `φ(x)` alone.
    pub fn features(&self, x: &Vector) -> Result<Vector, MlpError> {
        self.check_input(x)?;
        Ok(Vector::from_vec(self.hidden(x).1))
    }

    /// Masked MSE of the batch under the current weights: the mean over
    /// examples of `(f(b_j)_{a_j} − r_j)²`.
    pub fn masked_loss(&self, batch: &Minibatch) -> Result<f64, MlpError> {
        self.check_batch(batch)?;
        let mut loss = 0.0;
        for ((x, &a), &r) in batch.contexts.iter().zip(&batch.arms).zip(&batch.rewards) {
            let (_, phi) = self.hidden(x);
            let out = self.outputs_from_features(&phi);
            let e = out[a] - r;
            loss += e * e;
        }
        Ok(loss / batch.len() as f64)
    }

    /// Batch loss and gradients of the masked MSE.
    fn masked_grads(&self, batch: &Minibatch) -> (f64, Grads) {
        let (d, g, n) = (self.input_dim, self.hidden_dim, self.num_arms);
        let mut grads = Grads {
            w1: vec![0.0; g * d],
            b1: vec![0.0; g],
            w2: vec![0.0; n * g],
            b2: vec![0.0; n],
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for ((x, &a), &r) in batch.contexts.iter().zip(&batch.arms).zip(&batch.rewards) {
            let (pre, phi) = self.hidden(x);
            let out = self.outputs_from_features(&phi);
            let e = out[a] - r;
            loss += scale * e * e;
            let upstream = 2.0 * scale * e;
            grads.b2[a] += upstream;
            let w2_row = &self.w2[a * g..(a + 1) * g];
            let g_w2 = &mut grads.w2[a * g..(a + 1) * g];
            for j in 0..g {
                g_w2[j] += upstream * self.hid_scale * phi[j];
            }
            let xs = x.as_slice();
            for j in 0..g {
                if pre[j] > 0.0 {
                    let d_pre = upstream * self.hid_scale * w2_row[j];
                    grads.b1[j] += d_pre;
                    let g_w1 = &mut grads.w1[j * d..(j + 1) * d];
                    let din = d_pre * self.in_scale;
                    for (gw, &xv) in g_w1.iter_mut().zip(xs) {
                        *gw += din * xv;
                    }
                }
            }
        }
        (loss, grads)
    }

    /// One SGD step on the masked MSE with learning rate
    /// `base_lr / (1 + κ·step_count)`. Returns the pre-step batch loss.
    pub fn train_step(&mut self, batch: &Minibatch, base_lr: f64) -> Result<f64, MlpError> {
        self.check_batch(batch)?;
        let (loss, grads) = self.masked_grads(batch);
        let lr = base_lr / (1.0 + self.lr_decay * self.step_count as f64);
        let params = [
            (&mut self.w1, &grads.w1, 0usize),
            (&mut self.b1, &grads.b1, grads.w1.len()),
            (&mut self.w2, &grads.w2, grads.w1.len() + grads.b1.len()),
            (&mut self.b2, &grads.b2, grads.w1.len() + grads.b1.len() + grads.w2.len()),
        ];
        for (slab, gr, offset) in params {
            let cache = &mut self.sq_grad[offset..offset + gr.len()];
            for ((w, &g), c) in slab.iter_mut().zip(gr).zip(cache) {
                *c = RMS_DECAY * *c + (1.0 - RMS_DECAY) * g * g;
                *w -= lr * g / (c.sqrt() + RMS_EPS);
            }
        }
        self.step_count += 1;
        assert!(
            self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|w| w.is_finite()),
            "non-finite weight after training step {}",
            self.step_count
        );
        Ok(loss)
    }

    /// The arm's effective last-layer coefficients in feature space:
    /// `s_hid · W2[arm]`, bias excluded. Under the standard scheme this is
    /// the raw W2 row.
    pub fn last_layer_weights(&self, arm: usize) -> Result<Vector, MlpError> {
        self.check_arm(arm)?;
        let g = self.hidden_dim;
        let row = &self.w2[arm * g..(arm + 1) * g];
        Ok(Vector::from_vec(row.iter().map(|&w| self.hid_scale * w).collect()))
    }

    /// The arm's output bias b2.
    pub fn output_bias(&self, arm: usize) -> Result<f64, MlpError> {
        self.check_arm(arm)?;
        Ok(self.b2[arm])
    }

    /// Full-parameter gradient of output `arm` at input `x`, flattened in
    /// `[W1, b1, W2, b2]` order.
    fn output_gradient(&self, x: &Vector, arm: usize) -> Vec<f64> {
        let (d, g, n) = (self.input_dim, self.hidden_dim, self.num_arms);
        let (pre, phi) = self.hidden(x);
        let mut grad = vec![0.0; g * d + g + n * g + n];
        let (w1_part, rest) = grad.split_at_mut(g * d);
        let (b1_part, rest) = rest.split_at_mut(g);
        let (w2_part, b2_part) = rest.split_at_mut(n * g);
        let w2_row = &self.w2[arm * g..(arm + 1) * g];
        let xs = x.as_slice();
        for j in 0..g {
            if pre[j] > 0.0 {
                let d_pre = self.hid_scale * w2_row[j];
                b1_part[j] = d_pre;
                let din = d_pre * self.in_scale;
                for (slot, &xv) in w1_part[j * d..(j + 1) * d].iter_mut().zip(xs) {
                    *slot = din * xv;
                }
            }
            w2_part[arm * g + j] = self.hid_scale * phi[j];
        }
        b2_part[arm] = 1.0;
        grad
    }

    /// Empirical neural tangent kernel for one arm:
    /// `K(x, y) = ⟨∇_ω f(x)_arm, ∇_ω f(y)_arm⟩` over all parameters.
    pub fn ntk(&self, x: &Vector, y: &Vector, arm: usize) -> Result<f64, MlpError> {
        self.check_input(x)?;
        self.check_input(y)?;
        self.check_arm(arm)?;
        let gx = self.output_gradient(x, arm);
        let gy = self.output_gradient(y, arm);
        Ok(gx.iter().zip(&gy).map(|(a, b)| a * b).sum())
    }

    #[cfg(test)]
    fn params_flat(&self) -> Vec<f64> {
        let mut v = self.w1.clone();
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    #[cfg(test)]
    fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let (gd, g, ng) = (self.w1.len(), self.b1.len(), self.w2.len());
        if idx < gd {
            &mut self.w1[idx]
        } else if idx < gd + g {
            &mut self.b1[idx - gd]
        } else if idx < gd + g + ng {
            &mut self.w2[idx - gd - g]
        } else {
            &mut self.b2[idx - gd - g - ng]
        }
    }

    #[cfg(test)]
    fn grads_for_test(&self, batch: &Minibatch) -> Vec<f64> {
        let (_, g) = self.masked_grads(batch);
        let mut v = g.w1;
        v.extend_from_slice(&g.b1);
        v.extend_from_slice(&g.w2);
        v.extend_from_slice(&g.b2);
        v
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn zero_net(d: usize, g: usize, n: usize) -> Mlp {
        Mlp::from_parts(
            d,
            g,
            n,
            InitScheme::Standard,
            1e-3,
            vec![0.0; g * d],
            vec![0.0; g],
            vec![0.0; n * g],
            vec![0.0; n],
        )
        .unwrap()
    }

    fn seeded_net(d: usize, g: usize, n: usize, seed: u64) -> Mlp {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Mlp::new(d, g, n, InitScheme::Standard, 1e-3, &mut rng).unwrap()
    }

    fn seeded_batch(net: &Mlp, len: usize, seed: u64) -> Minibatch {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let contexts: Vec<Vector> = (0..len)
            .map(|_| {
                Vector::from_vec(
                    (0..net.input_dim()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
                )
            })
            .collect();
        let arms: Vec<usize> = (0..len).map(|_| rng.random_range(0..net.num_arms())).collect();
        let rewards: Vec<f64> = (0..len).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        Minibatch::new(contexts, arms, rewards).unwrap()
    }

    /// Straight-line forward oracle on nested vecs (standard scheme: both
    /// forward scales are 1).
    fn forward_oracle(net: &Mlp, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, g, n) = (net.input_dim(), net.hidden_dim(), net.num_arms());
        let mut phi = vec![0.0; g];
        for j in 0..g {
            let mut s = 0.0;
            for k in 0..d {
                s += net.w1()[j * d + k] * x[k];
            }
            let pre = s + net.b1()[j];
            phi[j] = if pre > 0.0 { pre } else { 0.0 };
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..g {
                s += net.w2()[i * g + j] * phi[j];
            }
            out[i] = s + net.b2()[i];
        }
        (out, phi)
    }

    // ---- forward ----

    #[test]
    fn zero_network_outputs_zero() {
        let net = zero_net(4, 6, 3);
        let (out, phi) = net.forward(&Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0; 3]);
        assert_eq!(phi.as_slice(), &[0.0; 6]);
    }

    #[test]
    fn identity_first_layer_rectifies_input() {
        let d = 4;
        let mut w1 = vec![0.0; d * d];
        for i in 0..d {
            w1[i * d + i] = 1.0;
        }
        let net = Mlp::from_parts(
            d,
            d,
            2,
            InitScheme::Standard,
            1e-3,
            w1,
            vec![0.0; d],
            vec![0.0; 2 * d],
            vec![0.0; 2],
        )
        .unwrap();
        let x = Vector::from_vec(vec![1.5, -2.0, 0.0, 0.25]);
        let (_, phi) = net.forward(&x).unwrap();
        assert_eq!(phi.as_slice(), &[1.5, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let net = seeded_net(5, 8, 3, 10);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let (out, phi) = net.forward(&Vector::from_vec(x.clone())).unwrap();
            let (o_out, o_phi) = forward_oracle(&net, &x);
            for (a, b) in out.as_slice().iter().zip(&o_out) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in phi.as_slice().iter().zip(&o_phi) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let net = zero_net(4, 6, 3);
        assert!(matches!(
            net.forward(&Vector::zeros(3)),
            Err(MlpError::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }

    // ---- training ----

    #[test]
    fn perfect_predictions_leave_weights_unchanged() {
        let net0 = seeded_net(4, 6, 3, 20);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let contexts: Vec<Vector> = (0..8)
            .map(|_| Vector::from_vec((0..4).map(|_| rng.random::<f64>() - 0.5).collect()))
            .collect();
        let arms: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
        // Rewards set to the net's own predictions: zero loss, zero gradient.
        let rewards: Vec<f64> = contexts
            .iter()
            .zip(&arms)
            .map(|(x, &a)| net0.forward(x).unwrap().0[a])
            .collect();
        let batch = Minibatch::new(contexts, arms, rewards).unwrap();
        let mut net = net0.clone();
        let loss = net.train_step(&batch, 0.01).unwrap();
        assert!(loss < 1e-28);
        assert_eq!(net.w1(), net0.w1());
        assert_eq!(net.b1(), net0.b1());
        assert_eq!(net.w2(), net0.w2());
        assert_eq!(net.b2(), net0.b2());
        assert_eq!(net.step_count(), 1);
    }

    #[test]
    fn scalar_network_matches_hand_derived_step() {
        // d = g = N = 1 with w1=0.7, b1=0.1, w2=-0.4, b2=0.2, x=0.5, r=1:
        //   pre = 0.45, φ = 0.45, f = 0.02, e = -0.98, loss = e².
        // Chain rule: ∂b2 = 2e, ∂w2 = 2e·φ, ∂pre = 2e·w2,
        //             ∂b1 = ∂pre, ∂w1 = ∂pre·x.
        let mut net = Mlp::from_parts(
            1,
            1,
            1,
            InitScheme::Standard,
            1e-3,
            vec![0.7],
            vec![0.1],
            vec![-0.4],
            vec![0.2],
        )
        .unwrap();
        let batch =
            Minibatch::new(vec![Vector::from_vec(vec![0.5])], vec![0], vec![1.0]).unwrap();
        let loss = net.train_step(&batch, 0.01).unwrap();

        let e = 0.02 - 1.0;
        assert!((loss - e * e).abs() < 1e-15);
        let d_b2 = 2.0 * e;
        let d_w2 = 2.0 * e * 0.45;
        let d_pre = 2.0 * e * -0.4;
        let d_b1 = d_pre;
        let d_w1 = d_pre * 0.5;
        assert!((net.w1()[0] - (0.7 - 0.01 * d_w1)).abs() < 1e-15);
        assert!((net.b1()[0] - (0.1 - 0.01 * d_b1)).abs() < 1e-15);
        assert!((net.w2()[0] - (-0.4 - 0.01 * d_w2)).abs() < 1e-15);
        assert!((net.b2()[0] - (0.2 - 0.01 * d_b2)).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        for pair in 0..10u64 {
            let mut net = seeded_net(4, 6, 3, 100 + pair);
            let batch = seeded_batch(&net, 12, 200 + pair);
            let analytic = net.grads_for_test(&batch);
            let n_params = net.params_flat().len();
            let h = 1e-5;
            for idx in 0..n_params {
                let orig = *net.param_mut(idx);
                *net.param_mut(idx) = orig + h;
                let up = net.masked_loss(&batch).unwrap();
                *net.param_mut(idx) = orig - h;
                let down = net.masked_loss(&batch).unwrap();
                *net.param_mut(idx) = orig;
                let fd = (up - down) / (2.0 * h);
                let an = analytic[idx];
                let tol = 1e-4 * an.abs().max(fd.abs()).max(1e-4);
                assert!(
                    (fd - an).abs() <= tol,
                    "pair {pair} param {idx}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn learning_rate_decays_hyperbolically() {
        // Replay three steps of the scalar network by hand, including the
        // per-step decay lr_t = 0.01/(1 + 0.5·t), and demand exact agreement.
        let mut net = Mlp::from_parts(
            1,
            1,
            1,
            InitScheme::Standard,
            0.5,
            vec![1.0],
            vec![0.0],
            vec![1.0],
            vec![0.0],
        )
        .unwrap();
        let batch = Minibatch::new(vec![Vector::from_vec(vec![1.0])], vec![0], vec![0.0]).unwrap();

        let (mut w1, mut b1, mut w2, mut b2) = (1.0f64, 0.0f64, 1.0f64, 0.0f64);
        for step in 0..3 {
            let lr = 0.01 / (1.0 + 0.5 * step as f64);
            let pre = w1 * 1.0 + b1;
            let phi = pre.max(0.0);
            let e = w2 * phi + b2;
            let d_pre = if pre > 0.0 { 2.0 * e * w2 } else { 0.0 };
            let (d_w1, d_b1, d_w2, d_b2) = (d_pre * 1.0, d_pre, 2.0 * e * phi, 2.0 * e);
            net.train_step(&batch, 0.01).unwrap();
            w1 -= lr * d_w1;
            b1 -= lr * d_b1;
            w2 -= lr * d_w2;
            b2 -= lr * d_b2;
            assert!((net.w1()[0] - w1).abs() < 1e-15, "w1 after step {step}");
            assert!((net.b1()[0] - b1).abs() < 1e-15, "b1 after step {step}");
            assert!((net.w2()[0] - w2).abs() < 1e-15, "w2 after step {step}");
            assert!((net.b2()[0] - b2).abs() < 1e-15, "b2 after step {step}");
        }
    }

    #[test]
    fn fixed_batch_training_reaches_near_zero_loss() {
        // Realizable target: rewards produced by a teacher of identical
        // architecture; 2000 full-batch steps must drive the masked MSE
        // below 1e-3.
        let teacher = seeded_net(5, 50, 2, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let contexts: Vec<Vector> = (0..16)
            .map(|_| Vector::from_vec((0..5).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()))
            .collect();
        let arms: Vec<usize> = (0..16).map(|_| rng.random_range(0..2)).collect();
        let rewards: Vec<f64> = contexts
            .iter()
            .zip(&arms)
            .map(|(x, &a)| teacher.forward(x).unwrap().0[a])
            .collect();
        let batch = Minibatch::new(contexts, arms, rewards).unwrap();
        let mut student = seeded_net(5, 50, 2, 9);
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            last = student.train_step(&batch, 0.01).unwrap();
        }
        let final_loss = student.masked_loss(&batch).unwrap();
        assert!(
            final_loss < 1e-3,
            "masked MSE after 2000 steps: {final_loss} (last pre-step {last})"
        );
    }

    // ---- last-layer export ----

    #[test]
    fn last_layer_weights_basic() {
        let mut net = zero_net(3, 4, 2);
        assert_eq!(net.last_layer_weights(0).unwrap().as_slice(), &[0.0; 4]);
        net.w2[1 * 4 + 2] = 1.0;
        let row = net.last_layer_weights(1).unwrap();
        assert_eq!(row.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(net.last_layer_weights(2), Err(MlpError::ArmOutOfRange { arm: 2, num_arms: 2 })));
    }

    #[test]
    fn trained_last_layer_beats_zero_prior_on_held_out_data() {
        // Linear-in-features target: r = θᵀφ₀(x) under the student's own
        // initial feature map. After 500 steps the exported last-layer row
        // must predict held-out rewards better than the zero vector.
        let mut net = seeded_net(6, 20, 2, 30);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let theta: Vec<f64> = (0..20).map(|_| rng.random::<f64>() - 0.5).collect();
        let initial = net.clone();
        let make = |rng: &mut ChaCha12Rng, n: usize| -> (Vec<Vector>, Vec<f64>) {
            let xs: Vec<Vector> = (0..n)
                .map(|_| {
                    Vector::from_vec((0..6).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect())
                })
                .collect();
            let rs: Vec<f64> = xs
                .iter()
                .map(|x| {
                    initial
                        .features(x)
                        .unwrap()
                        .as_slice()
                        .iter()
                        .zip(&theta)
                        .map(|(p, t)| p * t)
                        .sum()
                })
                .collect();
            (xs, rs)
        };
        let (train_x, train_r) = make(&mut rng, 64);
        let (held_x, held_r) = make(&mut rng, 64);
        let batch = Minibatch::new(train_x, vec![0; 64], train_r).unwrap();
        for _ in 0..500 {
            net.train_step(&batch, 0.01).unwrap();
        }
        let w = net.last_layer_weights(0).unwrap();
        let mut mse_w = 0.0;
        let mut mse_zero = 0.0;
        for (x, &r) in held_x.iter().zip(&held_r) {
            let phi = net.features(x).unwrap();
            let pred = phi.dot(&w);
            mse_w += (pred - r) * (pred - r);
            mse_zero += r * r;
        }
        assert!(
            mse_w < mse_zero,
            "trained prior MSE {mse_w} not better than zero prior {mse_zero}"
        );
    }

    // ---- NTK probe ----

    /// Closed-form kernel oracle from the analytic per-tensor gradients.
    fn ntk_oracle(net: &Mlp, x: &[f64], y: &[f64], arm: usize) -> f64 {
        let (d, g) = (net.input_dim(), net.hidden_dim());
        let phi = |v: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut pre = vec![0.0; g];
            for j in 0..g {
                let mut s = 0.0;
                for k in 0..d {
                    s += net.w1()[j * d + k] * v[k];
                }
                pre[j] = s + net.b1()[j];
            }
            let act = pre.iter().map(|&p| p.max(0.0)).collect();
            (pre, act)
        };
        let (pre_x, phi_x) = phi(x);
        let (pre_y, phi_y) = phi(y);
        let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let phixy: f64 = phi_x.iter().zip(&phi_y).map(|(a, b)| a * b).sum();
        let mut hidden_term = 0.0;
        for j in 0..g {
            if pre_x[j] > 0.0 && pre_y[j] > 0.0 {
                let w = net.w2()[arm * g + j];
                hidden_term += w * w * (1.0 + xy);
            }
        }
        // standard scheme: in_scale = hid_scale = 1.
        1.0 + phixy + hidden_term
    }

    #[test]
    fn ntk_diagonal_is_gradient_norm() {
        let net = seeded_net(5, 10, 3, 40);
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for _ in 0..10 {
            let x = Vector::from_vec((0..5).map(|_| rng.random::<f64>() - 0.5).collect());
            let k = net.ntk(&x, &x, 1).unwrap();
            assert!(k >= 0.0);
            let g = net.output_gradient(&x, 1);
            let norm2: f64 = g.iter().map(|v| v * v).sum();
            assert!((k - norm2).abs() < 1e-12);
        }
    }

    #[test]
    fn ntk_zero_input_reduces_to_bias_contribution() {
        // Zero input with zero biases kills the first-layer gradients and
        // the features, leaving only the output-bias component: K = 1.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let net = Mlp::new(4, 8, 2, InitScheme::Standard, 1e-3, &mut rng).unwrap();
        let zero = Vector::zeros(4);
        let k = net.ntk(&zero, &zero, 0).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn ntk_matches_closed_form_oracle() {
        let net = seeded_net(6, 12, 3, 43);
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        for _ in 0..25 {
            let x: Vec<f64> = (0..6).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let y: Vec<f64> = (0..6).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let arm = rng.random_range(0..3);
            let got = net.ntk(&Vector::from_vec(x.clone()), &Vector::from_vec(y.clone()), arm).unwrap();
            let want = ntk_oracle(&net, &x, &y, arm);
            assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn ntk_satisfies_cauchy_schwarz_on_100_pairs() {
        let net = seeded_net(5, 15, 2, 45);
        let mut rng = ChaCha12Rng::seed_from_u64(46);
        for _ in 0..100 {
            let x = Vector::from_vec((0..5).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect());
            let y = Vector::from_vec((0..5).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect());
            let kxy = net.ntk(&x, &y, 0).unwrap();
            let kxx = net.ntk(&x, &x, 0).unwrap();
            let kyy = net.ntk(&y, &y, 0).unwrap();
            assert!(kxy * kxy <= kxx * kyy * (1.0 + 1e-12));
        }
    }

    // ---- initialization ----

    #[test]
    fn init_is_deterministic_per_seed() {
        let mut r1 = ChaCha12Rng::seed_from_u64(99);
        let mut r2 = ChaCha12Rng::seed_from_u64(99);
        let a = Mlp::new(7, 13, 4, InitScheme::Ntk, 1e-3, &mut r1).unwrap();
        let b = Mlp::new(7, 13, 4, InitScheme::Ntk, 1e-3, &mut r2).unwrap();
        assert_eq!(a.w1(), b.w1());
        assert_eq!(a.w2(), b.w2());
    }

    #[test]
    fn standard_init_has_he_variance() {
        // fan_in = 50 ⇒ per-weight variance 2/50 = 0.04; sample over 10⁵
        // weights concentrates within 5%.
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        let net = Mlp::new(50, 2000, 1, InitScheme::Standard, 1e-3, &mut rng).unwrap();
        let ws = net.w1();
        assert_eq!(ws.len(), 100_000);
        let mean: f64 = ws.iter().sum::<f64>() / ws.len() as f64;
        let var: f64 = ws.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / ws.len() as f64;
        assert!((var - 0.04).abs() < 0.002, "sample variance {var}");
        // Biases start at zero in both schemes.
        assert!(net.b1().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn ntk_init_keeps_output_variance_width_independent() {
        // Unit input through the NTK parameterization: output variance stays
        // O(1) as width grows, so the 50-vs-1024 variance ratio is near 1.
        let variance_at_width = |g: usize| -> f64 {
            let mut outs = Vec::with_capacity(1000);
            for seed in 0..1000u64 {
                let mut rng = ChaCha12Rng::seed_from_u64(7000 + seed);
                let net = Mlp::new(9, g, 2, InitScheme::Ntk, 1e-3, &mut rng).unwrap();
                let x = Vector::from_vec(vec![1.0 / 3.0; 9]);
                let (out, _) = net.forward(&x).unwrap();
                outs.push(out[0]);
            }
            let m: f64 = outs.iter().sum::<f64>() / outs.len() as f64;
            outs.iter().map(|o| (o - m) * (o - m)).sum::<f64>() / outs.len() as f64
        };
        let v50 = variance_at_width(50);
        let v1024 = variance_at_width(1024);
        let ratio = v50 / v1024;
        assert!((0.5..=2.0).contains(&ratio), "variance ratio {ratio} (v50 {v50}, v1024 {v1024})");
    }

    // ---- minibatch validation ----

    #[test]
    fn minibatch_rejects_empty_and_misaligned() {
        assert!(Minibatch::new(vec![], vec![], vec![]).is_err());
        assert!(Minibatch::new(vec![Vector::zeros(2)], vec![0, 1], vec![0.5]).is_err());
        let net = zero_net(2, 3, 2);
        let bad_arm = Minibatch::new(vec![Vector::zeros(2)], vec![5], vec![0.5]).unwrap();
        assert!(matches!(
            net.masked_loss(&bad_arm),
            Err(MlpError::ArmOutOfRange { arm: 5, num_arms: 2 })
        ));
    }
}
