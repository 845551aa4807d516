//! Likelihood matching over the PSD cone.
//!
//! When the network's feature map moves, the old posterior precision no
//! longer describes the uncertainty of new-feature predictions. Likelihood
//! matching fits a PSD matrix `A` (the inverse of the next prior precision)
//! so predictive variances are carried across the representation change:
//! for each stored context, the new-feature quadratic form `φ_newᵀ A φ_new`
//! is pushed toward the old-feature target `s² = φ_oldᵀ A₀ φ_old`, where
//! `A₀` is a fixed snapshot of the current posterior covariance.
//!
//! Minimizing `Σⱼ (Trace(Xⱼ A) − sⱼ²)²` with `Xⱼ = φ_new φ_newᵀ` is a linear
//! least-squares problem in the entries of `A`, constrained to
//! `λ_min(A) ≥ floor`. The solver is stochastic projected gradient descent:
//! one rank-one gradient step per feature pair followed by eigenvalue
//! thresholding. Because each step perturbs an already-floored iterate by a
//! single rank-one term, interlacing lets at most one eigenvalue cross the
//! floor, and [`crate::linalg::eig_threshold`] repairs it from a single
//! eigenpair instead of a full decomposition.

use crate::linalg::{eig_threshold, eig_threshold_inplace, LinalgError, SymMatrix, Vector};
use thiserror::Error;

/// Failure modes of the matching routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    /// Operand dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    /// A hyperparameter was outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A dense routine failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One feature vector observed under the old map and the new map.
#[derive(Debug, Clone)]
pub struct FeaturePair {
    phi_old: Vector,
    phi_new: Vector,
}

impl FeaturePair {
    pub fn new(phi_old: Vector, phi_new: Vector) -> Result<Self, MatchError> {
        if phi_old.dim() != phi_new.dim() {
            return Err(MatchError::DimensionMismatch {
                expected: phi_old.dim(),
                actual: phi_new.dim(),
            });
        }
        Ok(FeaturePair { phi_old, phi_new })
    }

    pub fn phi_old(&self) -> &Vector {
        &self.phi_old
    }

    pub fn phi_new(&self) -> &Vector {
        &self.phi_new
    }
}

/// Target predictive variance under the snapshot covariance:
/// `s² = φ_oldᵀ A₀ φ_old`.
pub fn target_variance(a0: &SymMatrix, phi_old: &Vector) -> Result<f64, MatchError> {
    if a0.dim() != phi_old.dim() {
        return Err(MatchError::DimensionMismatch { expected: a0.dim(), actual: phi_old.dim() });
    }
    Ok(a0.quad_form(phi_old))
}

/// Sum of squared variance residuals over the pairs (the matching loss):
/// `Σⱼ (φ_newᵀ A φ_new − φ_oldᵀ A₀ φ_old)²`.
pub fn objective(a: &SymMatrix, pairs: &[FeaturePair], a0: &SymMatrix) -> Result<f64, MatchError> {
    let mut total = 0.0;
    for p in pairs {
        if p.phi_new.dim() != a.dim() {
            return Err(MatchError::DimensionMismatch { expected: a.dim(), actual: p.phi_new.dim() });
        }
        let rho = a.quad_form(&p.phi_new) - target_variance(a0, &p.phi_old)?;
        total += rho * rho;
    }
    Ok(total)
}

/// Stochastic projected-gradient iterate over the floored PSD cone.
///
/// The learning rate decays hyperbolically across the state's lifetime:
/// `lr_t = base_lr / (1 + κ·t)` with `t` counting every gradient step taken
/// so far, mirroring the reward network's schedule.
#[derive(Debug, Clone)]
pub struct PsdMatchState {
    a: SymMatrix,
    step: u64,
    base_lr: f64,
    kappa: f64,
    floor: f64,
}

impl PsdMatchState {
    /// Starts from `a`, thresholded so the invariant `λ_min(A) ≥ floor`
    /// holds from the first step.
    pub fn new(a: SymMatrix, base_lr: f64, kappa: f64, floor: f64) -> Result<Self, MatchError> {
        // base_lr = 0 is allowed: a zero-rate optimizer is a well-defined
        // no-op, which frozen-network configurations rely on.
        if !(base_lr >= 0.0) || !base_lr.is_finite() {
            return Err(MatchError::InvalidArgument(format!("base_lr must be >= 0, got {base_lr}")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(MatchError::InvalidArgument(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(floor >= 0.0) || !floor.is_finite() {
            return Err(MatchError::InvalidArgument(format!("floor must be >= 0, got {floor}")));
        }
        let a = eig_threshold(&a, floor)?;
        Ok(PsdMatchState { a, step: 0, base_lr, kappa, floor })
    }

    /// Current iterate.
    pub fn a(&self) -> &SymMatrix {
        &self.a
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Replaces the iterate (thresholded), keeping the step counter — the
    /// learning-rate schedule spans the state's whole lifetime.
    pub fn reset_iterate(&mut self, a: SymMatrix) -> Result<(), MatchError> {
        if a.dim() != self.a.dim() {
            return Err(MatchError::DimensionMismatch { expected: self.a.dim(), actual: a.dim() });
        }
        let mut a = a;
        eig_threshold_inplace(&mut a, self.floor)?;
        self.a = a;
        Ok(())
    }

    /// Folds one observation's precision into the prior the iterate
    /// represents: with `A = (Φ⁰)⁻¹`, absorbing `φ` means `Φ⁰ ← Φ⁰ + φφᵀ`,
    /// which by Sherman–Morrison is the rank-one downdate
    /// `A ← A − (Aφ)(Aφ)ᵀ / (1 + φᵀAφ)` — O(g²), no inversion. Called when a
    /// tuple leaves the replay memory, so evidence the buffer can no longer
    /// vouch for lives on in the prior.
    pub fn absorb(&mut self, phi: &Vector) -> Result<(), MatchError> {
        if phi.dim() != self.a.dim() {
            return Err(MatchError::DimensionMismatch {
                expected: self.a.dim(),
                actual: phi.dim(),
            });
        }
        let ap = self.a.matvec(phi);
        let denom = 1.0 + self.a.quad_form(phi);
        self.a.add_outer(&ap, -1.0 / denom);
        eig_threshold_inplace(&mut self.a, self.floor)?;
        Ok(())
    }

    /// One stochastic step: with `X = φ_new φ_newᵀ` and residual
    /// `ρ = Trace(X·A) − s²`, updates `A ← threshold(A − lr·2ρ·X)`.
    pub fn pgd_step(&mut self, pair: &FeaturePair, a0: &SymMatrix) -> Result<(), MatchError> {
        if pair.phi_new.dim() != self.a.dim() {
            return Err(MatchError::DimensionMismatch {
                expected: self.a.dim(),
                actual: pair.phi_new.dim(),
            });
        }
        let s2 = target_variance(a0, &pair.phi_old)?;
        let rho = self.a.quad_form(&pair.phi_new) - s2;
        let lr = self.base_lr / (1.0 + self.kappa * self.step as f64);
        self.a.add_outer(&pair.phi_new, -2.0 * lr * rho);
        eig_threshold_inplace(&mut self.a, self.floor)?;
        self.step += 1;
        Ok(())
    }

    /// Applies [`PsdMatchState::pgd_step`] to every pair in order, with the
    /// snapshot `a0` held fixed across the whole batch.
    pub fn match_batch(&mut self, pairs: &[FeaturePair], a0: &SymMatrix) -> Result<(), MatchError> {
        for pair in pairs {
            self.pgd_step(pair, a0)?;
        }
        Ok(())
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
