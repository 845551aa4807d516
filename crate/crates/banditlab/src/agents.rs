//! Decision policies: linear and neural-linear Thompson sampling.
//!
//! Every agent keeps one Bayesian linear-regression posterior per arm
//! ([`crate::posterior::ArmPosterior`]) and, each round, samples a
//! coefficient vector from each posterior and plays the arm whose sampled
//! model scores the current features highest (ties to the lowest index).
//! The variants differ in **which features** feed the regression and **how
//! the posteriors survive feature drift**:
//!
//! * [`AgentKind::LinearTs`] — regression directly on raw contexts; no
//!   network, no drift.
//! * [`AgentKind::NeuralLinearFull`] — regression on the hidden layer of an
//!   MLP trained every `full_retrain_period` rounds on the *unbounded*
//!   history; after each retrain all posteriors are recomputed from scratch
//!   (default priors) with fresh features.
//! * [`AgentKind::Lim2`] — the limited-memory flagship. A FIFO buffer holds
//!   `capacity_per_arm` tuples per arm; the network trains every round. The
//!   posterior would silently go stale as features drift, so after each
//!   training step the agent *likelihood-matches*: per arm it carries the
//!   prior covariance across the representation change with stochastic
//!   PSD-constrained gradient steps ([`crate::matching`]) — each round's
//!   matcher iterate is both the variance source and the starting point for
//!   the next — then adopts the matched inverse as the new prior precision
//!   and the network's last layer as the new prior mean, and rebuilds
//!   sufficient statistics from the buffer under fresh features. When the
//!   FIFO evicts a tuple, its precision is folded into the prior first
//!   ([`PsdMatchState::absorb`]), so the prior holds exactly the evidence
//!   the buffer can no longer represent: the prior mean distills everything
//!   the network has ever seen, and the matched prior covariance keeps
//!   predictive variances calibrated through drift, which is what the
//!   buffer alone cannot provide.
//! * [`AgentKind::NeuralLinearMm`] — ablation: like LiM2 but without
//!   matching; rebuilds use an identity prior precision and the last-layer
//!   prior mean ("moment matching" of the mean only).
//! * [`AgentKind::NeuralLinearNaive`] — ablation: rebuilds reset priors to
//!   identity/zero; everything outside the buffer is forgotten.
//! * [`AgentKind::NeuralLinearNtk`] — ablation: never rebuilds or matches;
//!   sufficient statistics accumulate across feature drift unrepaired (the
//!   posterior mixes features from different epochs).
//! * [`AgentKind::Uniform`] — plays uniformly at random; the benchmark's
//!   normalization baseline.
//!
//! Limited-memory variants can run [`TrainSchedule::Phased`] (no per-round
//! training; a burst of training plus one rebuild every `period` rounds),
//! which is how the catastrophic-forgetting experiment provokes regret
//! spikes at phase boundaries.

use crate::buffer::{BufferError, Experience, ReplayBuffer};
use crate::linalg::{spd_inverse, LinalgError, SymMatrix, Vector};
use crate::matching::{FeaturePair, MatchError, PsdMatchState};
use crate::mlp::{InitScheme, Mlp, MlpError};
use crate::posterior::{ArmPosterior, PosteriorError};
use rand::Rng;
use thiserror::Error;

/// Failure modes of agent construction and stepping.
#[derive(Debug, Error)]
pub enum AgentError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("posterior failure: {0}")]
    Posterior(#[from] PosteriorError),
    #[error("network failure: {0}")]
    Mlp(#[from] MlpError),
    #[error("replay buffer failure: {0}")]
    Buffer(#[from] BufferError),
    #[error("likelihood matching failure: {0}")]
    Match(#[from] MatchError),
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
}

/// The seven policies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Uniform,
    LinearTs,
    NeuralLinearFull,
    Lim2,
    NeuralLinearMm,
    NeuralLinearNaive,
    NeuralLinearNtk,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Uniform => "uniform",
            AgentKind::LinearTs => "linear-ts",
            AgentKind::NeuralLinearFull => "neural-linear-full",
            AgentKind::Lim2 => "lim2",
            AgentKind::NeuralLinearMm => "neural-linear-mm",
            AgentKind::NeuralLinearNaive => "neural-linear-naive",
            AgentKind::NeuralLinearNtk => "neural-linear-ntk",
        }
    }

    pub fn from_name(name: &str) -> Option<AgentKind> {
        AgentKind::all().into_iter().find(|k| k.name() == name)
    }

    pub fn all() -> [AgentKind; 7] {
        [
            AgentKind::Uniform,
            AgentKind::LinearTs,
            AgentKind::NeuralLinearFull,
            AgentKind::Lim2,
            AgentKind::NeuralLinearMm,
            AgentKind::NeuralLinearNaive,
            AgentKind::NeuralLinearNtk,
        ]
    }

    /// Does this variant carry a network, a replay buffer, and
    /// feature-space posteriors?
    pub fn is_neural(self) -> bool {
        !matches!(self, AgentKind::Uniform | AgentKind::LinearTs)
    }
}

/// When the network trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainSchedule {
    /// `inner_steps` training iterations every round (the default).
    Online,
    /// No per-round training; every `period` rounds run `iters` training
    /// iterations followed by one rebuild. Only the limited-memory
    /// rebuild-style ablations (`NeuralLinearMm`, `NeuralLinearNaive`)
    /// support this; it exists to expose forgetting at phase boundaries.
    Phased { period: usize, iters: usize },
}

/// Hyperparameters. `AgentConfig::new` fills the stock benchmark values;
/// override fields before constructing the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Hidden width g of the feature network.
    pub hidden_dim: usize,
    /// FIFO capacity per arm for limited-memory variants (the full-memory
    /// variant keeps everything regardless of this value).
    pub capacity_per_arm: usize,
    /// Training minibatch size = `batch_multiplier × num_arms`.
    pub batch_multiplier: usize,
    /// Inner training/matching iterations per round (P).
    pub inner_steps: usize,
    /// Full-memory variant: rounds between retrains (M).
    pub full_retrain_period: usize,
    /// Full-memory variant: training iterations per retrain.
    pub full_retrain_iters: usize,
    /// Base learning rate for both the network and the matcher.
    pub base_lr: f64,
    /// Hyperbolic decay κ: lr(t) = base_lr / (1 + κ·t).
    pub lr_decay: f64,
    /// Decay κ for the likelihood-matching steps. Defaults to 1.0 (a literal
    /// 1/t anneal): each matching step has curvature ~‖φ‖⁴ in the residual
    /// direction, so with g = 50 rectifier features (‖φ‖² ≈ g/2) the rate must
    /// fall below ~1/‖φ‖⁴ within the first few steps or the iterate diverges;
    /// the slow schedule that suits network training does not get there in
    /// time.
    pub match_decay: f64,
    /// Inverse-gamma noise prior shape and scale.
    pub a0: f64,
    pub b0: f64,
    /// Eigenvalue floor of the PSD matching cone.
    pub floor: f64,
    pub init_scheme: InitScheme,
    pub schedule: TrainSchedule,
}

impl AgentConfig {
    /// Stock benchmark configuration for the given variant.
    pub fn new(kind: AgentKind) -> AgentConfig {
        AgentConfig {
            kind,
            hidden_dim: 50,
            capacity_per_arm: 100,
            batch_multiplier: 16,
            inner_steps: 1,
            full_retrain_period: 400,
            full_retrain_iters: 800,
            base_lr: 0.01,
            lr_decay: 1e-3,
            match_decay: 1.0,
            a0: 6.0,
            b0: 6.0,
            floor: 1e-6,
            init_scheme: InitScheme::Standard,
            schedule: TrainSchedule::Online,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("capacity_per_arm", self.capacity_per_arm),
            ("batch_multiplier", self.batch_multiplier),
            ("inner_steps", self.inner_steps),
            ("full_retrain_period", self.full_retrain_period),
            ("full_retrain_iters", self.full_retrain_iters),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(AgentError::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !self.base_lr.is_finite() || self.base_lr < 0.0 {
            return Err(AgentError::InvalidArgument(format!(
                "base_lr must be finite and >= 0, got {}",
                self.base_lr
            )));
        }
        if !self.lr_decay.is_finite() || self.lr_decay < 0.0 {
            return Err(AgentError::InvalidArgument(format!(
                "lr_decay must be finite and >= 0, got {}",
                self.lr_decay
            )));
        }
        if !self.match_decay.is_finite() || self.match_decay < 0.0 {
            return Err(AgentError::InvalidArgument(format!(
                "match_decay must be finite and >= 0, got {}",
                self.match_decay
            )));
        }
        for (name, v) in [("a0", self.a0), ("b0", self.b0), ("floor", self.floor)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(AgentError::InvalidArgument(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if let TrainSchedule::Phased { period, iters } = self.schedule {
            if period == 0 || iters == 0 {
                return Err(AgentError::InvalidArgument(
                    "phased schedule needs period >= 1 and iters >= 1".into(),
                ));
            }
            if !matches!(self.kind, AgentKind::NeuralLinearMm | AgentKind::NeuralLinearNaive) {
                return Err(AgentError::InvalidArgument(format!(
                    "phased schedule is only supported for the rebuild ablations, not {}",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// A live policy: per-arm posteriors plus the variant-specific machinery.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    context_dim: usize,
    num_arms: usize,
    posteriors: Vec<ArmPosterior>,
    net: Option<Mlp>,
    buffer: Option<ReplayBuffer>,
    matchers: Option<Vec<PsdMatchState>>,
    t: u64,
}

/// Index of the strictly largest score; ties resolve to the lowest index.
pub(crate) fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Hidden features of many contexts under the current network.
fn feature_map(net: &Mlp, contexts: &[Vector]) -> Result<Vec<Vector>, MlpError> {
    contexts.iter().map(|c| net.features(c)).collect()
}

/// (fresh features, rewards) of everything the buffer holds for one arm.
fn arm_training_data(
    net: &Mlp,
    buffer: &ReplayBuffer,
    arm: usize,
) -> Result<(Vec<Vector>, Vec<f64>), AgentError> {
    let items = buffer.all_for_arm(arm)?;
    let mut feats = Vec::with_capacity(items.len());
    let mut rewards = Vec::with_capacity(items.len());
    for e in items {
        feats.push(net.features(&e.context)?);
        rewards.push(e.reward);
    }
    Ok((feats, rewards))
}

impl Agent {
    /// Builds an agent for a `context_dim`-dimensional task with `num_arms`
    /// actions. The RNG initializes network weights; linear variants do not
    /// consume randomness here.
    pub fn new<R: Rng>(
        config: AgentConfig,
        context_dim: usize,
        num_arms: usize,
        rng: &mut R,
    ) -> Result<Agent, AgentError> {
        config.validate()?;
        if context_dim == 0 {
            return Err(AgentError::InvalidArgument("context_dim must be >= 1".into()));
        }
        if num_arms == 0 {
            return Err(AgentError::InvalidArgument("num_arms must be >= 1".into()));
        }
        let neural = config.kind.is_neural();
        let feat_dim = if neural { config.hidden_dim } else { context_dim };
        let posteriors = if config.kind == AgentKind::Uniform {
            Vec::new()
        } else {
            (0..num_arms)
                .map(|_| ArmPosterior::new(feat_dim, config.a0, config.b0))
                .collect::<Result<Vec<_>, _>>()?
        };
        let net = if neural {
            Some(Mlp::new(
                context_dim,
                config.hidden_dim,
                num_arms,
                config.init_scheme,
                config.lr_decay,
                rng,
            )?)
        } else {
            None
        };
        let buffer = if neural {
            let capacity = if config.kind == AgentKind::NeuralLinearFull {
                usize::MAX // unbounded history
            } else {
                config.capacity_per_arm
            };
            Some(ReplayBuffer::new(num_arms, capacity)?)
        } else {
            None
        };
        let matchers = if config.kind == AgentKind::Lim2 {
            let states = (0..num_arms)
                .map(|_| {
                    PsdMatchState::new(
                        SymMatrix::identity(config.hidden_dim),
                        config.base_lr,
                        config.match_decay,
                        config.floor,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(states)
        } else {
            None
        };
        Ok(Agent { config, context_dim, num_arms, posteriors, net, buffer, matchers, t: 0 })
    }

    pub fn kind(&self) -> AgentKind {
        self.config.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    /// Rounds observed so far.
    pub fn rounds_seen(&self) -> u64 {
        self.t
    }

    /// The arm's posterior (`None` for the uniform policy).
    pub fn posterior(&self, arm: usize) -> Option<&ArmPosterior> {
        self.posteriors.get(arm)
    }

    pub fn net(&self) -> Option<&Mlp> {
        self.net.as_ref()
    }

    pub fn buffer(&self) -> Option<&ReplayBuffer> {
        self.buffer.as_ref()
    }

    /// The likelihood-matching iterate for one arm (`Lim2` only).
    pub fn matcher_state(&self, arm: usize) -> Option<&PsdMatchState> {
        self.matchers.as_ref().and_then(|m| m.get(arm))
    }

    /// The features the regression sees for this context: hidden activations
    /// for neural variants, the raw context otherwise.
    pub fn features(&self, context: &Vector) -> Result<Vector, AgentError> {
        self.check_context(context)?;
        match &self.net {
            Some(net) => Ok(net.features(context)?),
            None => Ok(context.clone()),
        }
    }

    fn check_context(&self, context: &Vector) -> Result<(), AgentError> {
        if context.dim() != self.context_dim {
            return Err(AgentError::DimensionMismatch {
                expected: self.context_dim,
                actual: context.dim(),
            });
        }
        Ok(())
    }

    fn batch_size(&self) -> usize {
        self.config.batch_multiplier * self.num_arms
    }

    /// Thompson step: sample coefficients from every arm's posterior and
    /// play the argmax of the sampled scores (ties to the lowest index).
    pub fn choose<R: Rng>(&mut self, context: &Vector, rng: &mut R) -> Result<usize, AgentError> {
        self.check_context(context)?;
        if self.config.kind == AgentKind::Uniform {
            return Ok(rng.random_range(0..self.num_arms));
        }
        let feat = match &self.net {
            Some(net) => net.features(context)?,
            None => context.clone(),
        };
        let mut scores = Vec::with_capacity(self.num_arms);
        for p in self.posteriors.iter_mut() {
            let theta = p.sample_coefficients(rng)?;
            scores.push(feat.dot(&theta));
        }
        Ok(argmax_lowest(&scores))
    }

    /// Feeds back the reward of the arm played this round and runs the
    /// variant's learning flow.
    pub fn update<R: Rng>(
        &mut self,
        context: &Vector,
        arm: usize,
        reward: f64,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        self.check_context(context)?;
        if arm >= self.num_arms {
            return Err(AgentError::ArmOutOfRange { arm, num_arms: self.num_arms });
        }
        if !reward.is_finite() {
            return Err(AgentError::InvalidArgument(format!("non-finite reward {reward}")));
        }
        self.t += 1;
        let cfg = self.config;
        match cfg.kind {
            AgentKind::Uniform => Ok(()),
            AgentKind::LinearTs => {
                self.posteriors[arm].observe(context, reward)?;
                Ok(())
            }
            AgentKind::NeuralLinearFull => self.update_full(context, arm, reward, rng),
            AgentKind::Lim2 => self.update_lim2(context, arm, reward, rng),
            AgentKind::NeuralLinearMm | AgentKind::NeuralLinearNaive => {
                match cfg.schedule {
                    TrainSchedule::Online => self.update_rebuild_online(context, arm, reward, rng),
                    TrainSchedule::Phased { period, iters } => {
                        self.update_rebuild_phased(context, arm, reward, period, iters, rng)
                    }
                }
            }
            AgentKind::NeuralLinearNtk => self.update_ntk(context, arm, reward, rng),
        }
    }

    /// Full-memory neural-linear: observe under current features; every
    /// `full_retrain_period` rounds retrain on the whole history and
    /// recompute every posterior from scratch with default priors.
    fn update_full<R: Rng>(
        &mut self,
        context: &Vector,
        arm: usize,
        reward: f64,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let cfg = self.config;
        let bsz = self.batch_size();
        let num_arms = self.num_arms;
        let net = self.net.as_mut().expect("neural agent carries a network");
        let buffer = self.buffer.as_mut().expect("neural agent carries a buffer");
        buffer.store(Experience { context: context.clone(), arm, reward })?;
        let phi = net.features(context)?;
        self.posteriors[arm].observe(&phi, reward)?;
        if self.t % cfg.full_retrain_period as u64 == 0 {
            for _ in 0..cfg.full_retrain_iters {
                let batch = buffer.sample(bsz, rng)?;
                net.train_step(&batch, cfg.base_lr)?;
            }
            let g = cfg.hidden_dim;
            for i in 0..num_arms {
                let (feats, rewards) = arm_training_data(net, buffer, i)?;
                self.posteriors[i].rebuild(
                    SymMatrix::identity(g),
                    Vector::zeros(g),
                    &feats,
                    &rewards,
                )?;
            }
        }
        Ok(())
    }

    /// The limited-memory likelihood-matching flow. Per round: store the
    /// tuple, absorbing any evicted tuple's precision into the prior; then
    /// `inner_steps` iterations of {sample a batch, record its features,
    /// train, record the drifted features, and per arm carry the prior
    /// covariance across the drift by matching, adopt the matched inverse as
    /// prior precision and the last layer as prior mean, and rebuild from
    /// the buffer under fresh features}; finally observe the played tuple
    /// with fresh features.
    ///
    /// Evidence bookkeeping: every observation is counted exactly once —
    /// through the buffer rebuild while its tuple is in memory, through the
    /// prior (via [`PsdMatchState::absorb`] at eviction) afterwards. The
    /// prior therefore holds precisely the knowledge the buffer can no
    /// longer represent.
    ///
    /// The matcher's iterate chains across rounds: each iteration treats its
    /// own previous output as both the variance source (the prior knowledge
    /// being transported through the representation change) and the initial
    /// guess for the projected-gradient steps. Replayed rounds never
    /// re-enter the prior, so nothing is double-counted however long it
    /// stays in memory.
    fn update_lim2<R: Rng>(
        &mut self,
        context: &Vector,
        arm: usize,
        reward: f64,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let cfg = self.config;
        let bsz = self.batch_size();
        let num_arms = self.num_arms;
        let net = self.net.as_mut().expect("neural agent carries a network");
        let buffer = self.buffer.as_mut().expect("neural agent carries a buffer");
        let matchers = self.matchers.as_mut().expect("lim2 carries matchers");
        let evicted = buffer.store(Experience { context: context.clone(), arm, reward })?;
        if let Some(old) = evicted {
            // The departing tuple's context leaves the buffer rebuild below,
            // so its precision moves into the prior: Φ⁰ ← Φ⁰ + φφᵀ under the
            // current features. Each observation is counted exactly once —
            // in the buffer while it lives there, in the prior afterwards.
            let phi_e = net.features(&old.context)?;
            matchers[old.arm].absorb(&phi_e)?;
        }
        for _ in 0..cfg.inner_steps {
            let batch = buffer.sample(bsz, rng)?;
            let old_feats = feature_map(net, batch.contexts())?;
            net.train_step(&batch, cfg.base_lr)?;
            let new_feats = feature_map(net, batch.contexts())?;
            for i in 0..num_arms {
                let pairs: Vec<FeaturePair> = batch
                    .arms()
                    .iter()
                    .enumerate()
                    .filter(|&(_, &a)| a == i)
                    .map(|(j, _)| FeaturePair::new(old_feats[j].clone(), new_feats[j].clone()))
                    .collect::<Result<_, _>>()?;
                let matcher = &mut matchers[i];
                if !pairs.is_empty() {
                    let carried = matcher.a().clone();
                    matcher.match_batch(&pairs, &carried)?;
                }
                let new_phi0 = spd_inverse(matcher.a())?;
                let new_mu0 = net.last_layer_weights(i)?;
                let (feats, rewards) = arm_training_data(net, buffer, i)?;
                self.posteriors[i].rebuild(new_phi0, new_mu0, &feats, &rewards)?;
            }
        }
        let phi = net.features(context)?;
        self.posteriors[arm].observe(&phi, reward)?;
        Ok(())
    }

    /// Online rebuild ablations (`Mm`, `Naive`): train like LiM2, skip
    /// matching; rebuild with identity prior precision and either the
    /// last-layer prior mean (`Mm`) or zero (`Naive`).
    fn update_rebuild_online<R: Rng>(
        &mut self,
        context: &Vector,
        arm: usize,
        reward: f64,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let cfg = self.config;
        let bsz = self.batch_size();
        let net = self.net.as_mut().expect("neural agent carries a network");
        let buffer = self.buffer.as_mut().expect("neural agent carries a buffer");
        buffer.store(Experience { context: context.clone(), arm, reward })?;
        for _ in 0..cfg.inner_steps {
            let batch = buffer.sample(bsz, rng)?;
            net.train_step(&batch, cfg.base_lr)?;
        }
        rebuild_with_default_precision(cfg.kind, net, buffer, &mut self.posteriors)?;
        let phi = net.features(context)?;
        self.posteriors[arm].observe(&phi, reward)?;
        Ok(())
    }

    /// Phased rebuild ablations: observe under current features each round;
    /// at phase boundaries run a training burst and one rebuild. The
    /// between-phase posteriors accumulate features of the stale network,
    /// and each boundary discards everything outside the buffer.
    fn update_rebuild_phased<R: Rng>(
        &mut self,
        context: &Vector,
        arm: usize,
        reward: f64,
        period: usize,
        iters: usize,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let cfg = self.config;
        let bsz = self.batch_size();
        let net = self.net.as_mut().expect("neural agent carries a network");
        let buffer = self.buffer.as_mut().expect("neural agent carries a buffer");
        buffer.store(Experience { context: context.clone(), arm, reward })?;
        let phi = net.features(context)?;
        self.posteriors[arm].observe(&phi, reward)?;
        if self.t % period as u64 == 0 {
            for _ in 0..iters {
                let batch = buffer.sample(bsz, rng)?;
                net.train_step(&batch, cfg.base_lr)?;
            }
            rebuild_with_default_precision(cfg.kind, net, buffer, &mut self.posteriors)?;
        }
        Ok(())
    }

    /// The accumulate-only ablation: train every round, observe with fresh
    /// features, never rebuild — sufficient statistics straddle feature
    /// epochs and the default priors are never replaced.
    fn update_ntk<R: Rng>(
        &mut self,
        context: &Vector,
        arm: usize,
        reward: f64,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let cfg = self.config;
        let bsz = self.batch_size();
        let net = self.net.as_mut().expect("neural agent carries a network");
        let buffer = self.buffer.as_mut().expect("neural agent carries a buffer");
        buffer.store(Experience { context: context.clone(), arm, reward })?;
        for _ in 0..cfg.inner_steps {
            let batch = buffer.sample(bsz, rng)?;
            net.train_step(&batch, cfg.base_lr)?;
        }
        let phi = net.features(context)?;
        self.posteriors[arm].observe(&phi, reward)?;
        Ok(())
    }
}

/// Rebuilds every posterior from the buffer under fresh features with
/// identity prior precision; the prior mean is the last layer (`Mm`) or
/// zero (`Naive`).
fn rebuild_with_default_precision(
    kind: AgentKind,
    net: &Mlp,
    buffer: &ReplayBuffer,
    posteriors: &mut [ArmPosterior],
) -> Result<(), AgentError> {
    let g = net.hidden_dim();
    for (i, posterior) in posteriors.iter_mut().enumerate() {
        let mu0 = if kind == AgentKind::NeuralLinearMm {
            net.last_layer_weights(i)?
        } else {
            Vector::zeros(g)
        };
        let items = buffer.all_for_arm(i)?;
        let mut feats = Vec::with_capacity(items.len());
        let mut rewards = Vec::with_capacity(items.len());
        for e in items {
            feats.push(net.features(&e.context)?);
            rewards.push(e.reward);
        }
        posterior.rebuild(SymMatrix::identity(g), mu0, &feats, &rewards)?;
    }
    Ok(())
}

// ── Tests ───────────────────────────────────────────────────────────────────
