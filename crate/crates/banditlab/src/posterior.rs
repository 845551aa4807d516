//! Per-arm Bayesian linear regression with an inverse-gamma noise prior.
//!
//! Each arm maintains a normal-inverse-gamma posterior over its reward
//! coefficients. With prior mean `μ⁰`, prior precision `Φ⁰`, accumulated
//! data precision `Φ = Σ φφᵀ` and moment `ψ = Σ rφ`, the posterior mean is
//!
//! ```text
//! μ̂ = (Φ⁰ + Φ)⁻¹ (Φ⁰ μ⁰ + ψ)
//! ```
//!
//! and the noise variance posterior is inverse-gamma with shape `a0 + n/2`
//! and scale `b0 + ½(Σr² + μ⁰ᵀΦ⁰μ⁰ − μ̂ᵀ(Φ⁰+Φ)μ̂)`. Thompson sampling draws
//! a noise variance, then coefficients from `N(μ̂, ν̃²(Φ⁰+Φ)⁻¹)`.
//!
//! The struct is a plain value owned by its agent; rebuilding with fresh
//! priors and a replayed feature history (the limited-memory flows) goes
//! through [`ArmPosterior::rebuild`].

use crate::linalg::{self, LinalgError, SymMatrix, Vector};
use rand::Rng;
use thiserror::Error;

/// Relative floor applied to the inverse-gamma scale: floating-point
/// cancellation in the conjugate identity can push it fractionally negative
/// after a rebuild with mismatched priors.
const SCALE_CLAMP_FACTOR: f64 = 1e-6;

/// Failure modes of posterior updates and sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    /// A feature vector's dimension disagrees with the posterior's.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    /// `rebuild` received lists of different lengths.
    #[error("mismatched rebuild lists: {feats} features vs {rewards} rewards")]
    MismatchedLists { feats: usize, rewards: usize },
    /// A hyperparameter was outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A dense routine failed (non-SPD precision, bad sampler arguments).
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Normal-inverse-gamma posterior for one arm's reward coefficients.
#[derive(Debug, Clone)]
pub struct ArmPosterior {
    dim: usize,
    /// Prior precision `Φ⁰` (SPD).
    phi0: SymMatrix,
    /// Prior mean `μ⁰`.
    mu0: Vector,
    /// Data precision `Φ = Σ φφᵀ` (PSD).
    phi: SymMatrix,
    /// Moment vector `ψ = Σ rφ`.
    psi: Vector,
    /// Sum of squared observed rewards.
    r2_sum: f64,
    /// Observations absorbed since the last rebuild.
    pulls: usize,
    a0: f64,
    b0: f64,
    /// Cholesky factor of `Φ⁰ + Φ`, invalidated by any state change.
    factor: Option<Vec<f64>>,
}

impl ArmPosterior {
    /// Fresh posterior: `Φ⁰ = I`, `μ⁰ = 0`, noise prior `InvGamma(a0, b0)`.
    pub fn new(dim: usize, a0: f64, b0: f64) -> Result<Self, PosteriorError> {
        if dim == 0 {
            return Err(PosteriorError::InvalidArgument("dim must be >= 1".into()));
        }
        if !(a0 > 0.0) || !a0.is_finite() || !(b0 > 0.0) || !b0.is_finite() {
            return Err(PosteriorError::InvalidArgument(format!(
                "inverse-gamma prior must be positive and finite, got a0 {a0}, b0 {b0}"
            )));
        }
        Ok(ArmPosterior {
            dim,
            phi0: SymMatrix::identity(dim),
            mu0: Vector::zeros(dim),
            phi: SymMatrix::zeros(dim),
            psi: Vector::zeros(dim),
            r2_sum: 0.0,
            pulls: 0,
            a0,
            b0,
            factor: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pulls(&self) -> usize {
        self.pulls
    }

    pub fn r2_sum(&self) -> f64 {
        self.r2_sum
    }

    pub fn prior_precision(&self) -> &SymMatrix {
        &self.phi0
    }

    pub fn prior_mean(&self) -> &Vector {
        &self.mu0
    }

    pub fn data_precision(&self) -> &SymMatrix {
        &self.phi
    }

    pub fn psi(&self) -> &Vector {
        &self.psi
    }

    /// Posterior precision `Φ⁰ + Φ`.
    pub fn posterior_precision(&self) -> SymMatrix {
        self.phi0.add(&self.phi)
    }

    /// Absorbs one observation: `Φ += φφᵀ`, `ψ += rφ`, `R² += r²`.
    pub fn observe(&mut self, feat: &Vector, reward: f64) -> Result<(), PosteriorError> {
        if feat.dim() != self.dim {
            return Err(PosteriorError::DimensionMismatch { expected: self.dim, actual: feat.dim() });
        }
        self.phi.add_outer(feat, 1.0);
        self.psi.add_scaled(reward, feat);
        self.r2_sum += reward * reward;
        self.pulls += 1;
        self.factor = None;
        Ok(())
    }

    /// Right-hand side `h = Φ⁰μ⁰ + ψ` of the posterior-mean system.
    fn moment_rhs(&self) -> Vector {
        let mut h = self.phi0.matvec(&self.mu0);
        h.add_scaled(1.0, &self.psi);
        h
    }

    fn ensure_factor(&mut self) -> Result<&[f64], PosteriorError> {
        if self.factor.is_none() {
            self.factor = Some(linalg::cholesky(&self.posterior_precision())?);
        }
        Ok(self.factor.as_deref().unwrap())
    }

    /// Posterior mean `μ̂ = (Φ⁰+Φ)⁻¹(Φ⁰μ⁰ + ψ)`.
    pub fn mu_hat(&self) -> Result<Vector, PosteriorError> {
        let h = self.moment_rhs();
        match &self.factor {
            Some(l) => Ok(linalg::chol_solve(l, self.dim, &h)),
            None => Ok(linalg::spd_solve(&self.posterior_precision(), &h)?),
        }
    }

    /// Inverse-gamma noise posterior `(shape, scale)`:
    /// `shape = a0 + pulls/2`,
    /// `scale = b0 + ½(Σr² + μ⁰ᵀΦ⁰μ⁰ − μ̂ᵀ(Φ⁰+Φ)μ̂)`, floored at `b0·1e-6`.
    ///
    /// The quadratic term uses the identity `μ̂ᵀ(Φ⁰+Φ)μ̂ = μ̂ᵀh` with
    /// `h = Φ⁰μ⁰ + ψ`, which avoids a second matrix product.
    pub fn noise_params(&self) -> Result<(f64, f64), PosteriorError> {
        let shape = self.a0 + self.pulls as f64 / 2.0;
        let h = self.moment_rhs();
        let mu_hat = match &self.factor {
            Some(l) => linalg::chol_solve(l, self.dim, &h),
            None => linalg::spd_solve(&self.posterior_precision(), &h)?,
        };
        let prior_quad = self.phi0.quad_form(&self.mu0);
        let raw = self.b0 + 0.5 * (self.r2_sum + prior_quad - mu_hat.dot(&h));
        Ok((shape, raw.max(self.b0 * SCALE_CLAMP_FACTOR)))
    }

    /// Thompson draw: `ν̃² ~ InvGamma(shape, scale)`, then
    /// `θ̃ ~ N(μ̂, ν̃²(Φ⁰+Φ)⁻¹)`.
    pub fn sample_coefficients<R: Rng>(&mut self, rng: &mut R) -> Result<Vector, PosteriorError> {
        let (shape, scale) = {
            self.ensure_factor()?;
            self.noise_params()?
        };
        let noise_var = linalg::sample_inv_gamma(shape, scale, rng)?;
        let h = self.moment_rhs();
        let l = self.factor.as_deref().expect("factor cached by ensure_factor");
        let mu_hat = linalg::chol_solve(l, self.dim, &h);
        Ok(linalg::sample_mvn_with_factor(&mu_hat, l, noise_var, rng))
    }

    /// Replaces the priors and recomputes the Gaussian data statistics
    /// (Φ, ψ) from the given tuples only. The noise-posterior state (pulls,
    /// Σr²) is untouched: the inverse-gamma posterior spans the arm's whole
    /// observation history, while the Gaussian part is windowed to whatever
    /// tuple set the caller can still vouch for under the current features.
    pub fn rebuild(
        &mut self,
        new_phi0: SymMatrix,
        new_mu0: Vector,
        feats: &[Vector],
        rewards: &[f64],
    ) -> Result<(), PosteriorError> {
        if new_phi0.dim() != self.dim {
            return Err(PosteriorError::DimensionMismatch { expected: self.dim, actual: new_phi0.dim() });
        }
        if new_mu0.dim() != self.dim {
            return Err(PosteriorError::DimensionMismatch { expected: self.dim, actual: new_mu0.dim() });
        }
        if feats.len() != rewards.len() {
            return Err(PosteriorError::MismatchedLists { feats: feats.len(), rewards: rewards.len() });
        }
        if let Some(bad) = feats.iter().find(|f| f.dim() != self.dim) {
            return Err(PosteriorError::DimensionMismatch { expected: self.dim, actual: bad.dim() });
        }
        self.phi0 = new_phi0;
        self.mu0 = new_mu0;
        self.phi = SymMatrix::zeros(self.dim);
        self.psi = Vector::zeros(self.dim);
        self.factor = None;
        for (f, &r) in feats.iter().zip(rewards) {
            self.phi.add_outer(f, 1.0);
            self.psi.add_scaled(r, f);
        }
        Ok(())
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    // ---- independent oracles ----

    /// Gauss-Jordan solve on nested vecs; shares nothing with `linalg`.
    fn gj_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
                .unwrap();
            m.swap(piv, col);
            rhs.swap(piv, col);
            let d = m[col][col];
            for j in 0..n {
                m[col][j] /= d;
            }
            rhs[col] /= d;
            for i in 0..n {
                if i != col {
                    let f = m[i][col];
                    if f != 0.0 {
                        for j in 0..n {
                            m[i][j] -= f * m[col][j];
                        }
                        rhs[i] -= f * rhs[col];
                    }
                }
            }
        }
        rhs
    }

    /// Ridge oracle: μ̂ = (λI + XᵀX)⁻¹ Xᵀy on nested vecs.
    fn ridge_oracle(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Vec<f64> {
        let d = xs[0].len();
        let mut gram = vec![vec![0.0; d]; d];
        let mut xty = vec![0.0; d];
        for (x, &y) in xs.iter().zip(ys) {
            for i in 0..d {
                for j in 0..d {
                    gram[i][j] += x[i] * x[j];
                }
                xty[i] += x[i] * y;
            }
        }
        for (i, row) in gram.iter_mut().enumerate() {
            row[i] += lambda;
        }
        gj_solve(&gram, &xty)
    }

    /// Residual-form conjugate scale:
    /// `b = b0 + ½[(y − Xμ̂)ᵀy + (μ⁰ − μ̂)ᵀΦ⁰μ⁰]`, algebraically equal to the
    /// implementation's moment form but computed through different quantities.
    fn residual_scale_oracle(
        xs: &[Vec<f64>],
        ys: &[f64],
        phi0_diag: f64,
        mu0: &[f64],
        b0: f64,
    ) -> f64 {
        let d = xs[0].len();
        let mut gram = vec![vec![0.0; d]; d];
        let mut h = vec![0.0; d];
        for (x, &y) in xs.iter().zip(ys) {
            for i in 0..d {
                for j in 0..d {
                    gram[i][j] += x[i] * x[j];
                }
                h[i] += x[i] * y;
            }
        }
        for i in 0..d {
            gram[i][i] += phi0_diag;
            h[i] += phi0_diag * mu0[i];
        }
        let mu_hat = gj_solve(&gram, &h);
        let mut resid_dot_y = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let pred: f64 = x.iter().zip(&mu_hat).map(|(a, b)| a * b).sum();
            resid_dot_y += (y - pred) * y;
        }
        let prior_term: f64 =
            mu0.iter().zip(&mu_hat).map(|(&m0, &mh)| (m0 - mh) * phi0_diag * m0).sum();
        b0 + 0.5 * (resid_dot_y + prior_term)
    }

    fn seeded_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let y = x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>()
                + 0.3 * (rng.random::<f64>() - 0.5);
            xs.push(x);
            ys.push(y);
        }
        (xs, ys)
    }

    // ---- construction and trivial states ----

    #[test]
    fn fresh_posterior_is_prior_only() {
        let p = ArmPosterior::new(4, 6.0, 6.0).unwrap();
        assert_eq!(p.mu_hat().unwrap().as_slice(), &[0.0; 4]);
        let (shape, scale) = p.noise_params().unwrap();
        assert_eq!(shape, 6.0);
        assert_eq!(scale, 6.0);
        assert_eq!(p.pulls(), 0);
    }

    #[test]
    fn new_rejects_bad_hyperparameters() {
        assert!(ArmPosterior::new(0, 6.0, 6.0).is_err());
        assert!(ArmPosterior::new(3, 0.0, 6.0).is_err());
        assert!(ArmPosterior::new(3, 6.0, -1.0).is_err());
        assert!(ArmPosterior::new(3, f64::NAN, 6.0).is_err());
    }

    #[test]
    fn zero_feature_touches_only_r2() {
        let mut p = ArmPosterior::new(3, 6.0, 6.0).unwrap();
        p.observe(&Vector::zeros(3), 5.0).unwrap();
        assert_eq!(p.data_precision().as_slice(), SymMatrix::zeros(3).as_slice());
        assert_eq!(p.psi().as_slice(), &[0.0; 3]);
        assert_eq!(p.r2_sum(), 25.0);
        assert_eq!(p.pulls(), 1);
    }

    #[test]
    fn basis_observation_fills_expected_entries() {
        let mut p = ArmPosterior::new(4, 6.0, 6.0).unwrap();
        p.observe(&Vector::basis(4, 2), 1.0).unwrap();
        let want = SymMatrix::from_diag(&[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.data_precision().as_slice(), want.as_slice());
        assert_eq!(p.psi().as_slice(), &[0.0, 0.0, 1.0, 0.0]);
    }

    // ---- hand-derived posterior example ----

    #[test]
    fn single_observation_hand_check() {
        // One pull of (e₁, r=1) against the unit prior: μ̂ solves
        // (I + e₁e₁ᵀ)x = e₁, so μ̂ = (1/2, 0, 0); shape = 6.5 and
        // scale = 6 + ½(1 − 0.5) = 6.25.
        let mut p = ArmPosterior::new(3, 6.0, 6.0).unwrap();
        p.observe(&Vector::basis(3, 0), 1.0).unwrap();
        let mu = p.mu_hat().unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-14);
        assert_eq!(mu[1], 0.0);
        assert_eq!(mu[2], 0.0);
        let (shape, scale) = p.noise_params().unwrap();
        assert!((shape - 6.5).abs() < 1e-14);
        assert!((scale - 6.25).abs() < 1e-12);
    }

    // ---- oracle comparisons ----

    #[test]
    fn mu_hat_matches_ridge_oracle() {
        for (n, d, seed) in [(50, 8, 1u64), (30, 10, 2), (12, 3, 3)] {
            let (xs, ys) = seeded_data(n, d, seed);
            let mut p = ArmPosterior::new(d, 6.0, 6.0).unwrap();
            for (x, &y) in xs.iter().zip(&ys) {
                p.observe(&Vector::from_vec(x.clone()), y).unwrap();
            }
            let got = p.mu_hat().unwrap();
            let want = ridge_oracle(&xs, &ys, 1.0);
            for i in 0..d {
                assert!(
                    (got[i] - want[i]).abs() < 1e-8,
                    "coef {i}: {} vs ridge {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn noise_scale_matches_residual_form_oracle() {
        let (xs, ys) = seeded_data(100, 6, 9);
        let mut p = ArmPosterior::new(6, 6.0, 6.0).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            p.observe(&Vector::from_vec(x.clone()), y).unwrap();
        }
        let (shape, scale) = p.noise_params().unwrap();
        assert_eq!(shape, 6.0 + 50.0);
        let want = residual_scale_oracle(&xs, &ys, 1.0, &[0.0; 6], 6.0);
        assert!((scale - want).abs() < 1e-8 * want, "scale {scale} vs oracle {want}");
        assert!(scale > 0.0);
    }

    #[test]
    fn noise_scale_with_nonzero_prior_mean_matches_oracle() {
        let (xs, ys) = seeded_data(40, 4, 13);
        let mu0 = vec![0.7, -0.3, 0.1, 0.9];
        let mut p = ArmPosterior::new(4, 6.0, 6.0).unwrap();
        // Install the non-default prior first, then feed the data through
        // observe so both the Gaussian and the noise statistics see it.
        p.rebuild(SymMatrix::from_diag(&[2.0; 4]), Vector::from_vec(mu0.clone()), &[], &[])
            .unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            p.observe(&Vector::from_vec(x.clone()), y).unwrap();
        }
        let (_, scale) = p.noise_params().unwrap();
        let want = residual_scale_oracle(&xs, &ys, 2.0, &mu0, 6.0);
        assert!((scale - want).abs() < 1e-8 * want.abs().max(1.0));
        // The conjugate identity keeps the unclamped scale positive.
        assert!(scale >= 6.0 * 1e-6);
    }

    // ---- batch-vs-sequential equivalence ----

    #[test]
    fn rebuild_equals_sequential_observes() {
        let (xs, ys) = seeded_data(30, 5, 21);
        let feats: Vec<Vector> = xs.iter().map(|x| Vector::from_vec(x.clone())).collect();

        let mut seq = ArmPosterior::new(5, 6.0, 6.0).unwrap();
        for (f, &y) in feats.iter().zip(&ys) {
            seq.observe(f, y).unwrap();
        }
        // A posterior that saw the same stream and then rebuilt its Gaussian
        // statistics from the identical tuple list is indistinguishable: Φ and
        // ψ are recomputed from the list, pulls and Σr² ride through unchanged.
        let mut batch = ArmPosterior::new(5, 6.0, 6.0).unwrap();
        for (f, &y) in feats.iter().zip(&ys) {
            batch.observe(f, y).unwrap();
        }
        batch.rebuild(SymMatrix::identity(5), Vector::zeros(5), &feats, &ys).unwrap();

        assert_eq!(seq.pulls(), batch.pulls());
        for (a, b) in seq.data_precision().as_slice().iter().zip(batch.data_precision().as_slice())
        {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in seq.psi().as_slice().iter().zip(batch.psi().as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((seq.r2_sum() - batch.r2_sum()).abs() < 1e-10);
        let (s1, c1) = seq.noise_params().unwrap();
        let (s2, c2) = batch.noise_params().unwrap();
        assert_eq!(s1, s2);
        assert!((c1 - c2).abs() < 1e-10);
    }

    #[test]
    fn observation_order_does_not_matter() {
        let (xs, ys) = seeded_data(25, 4, 33);
        let feats: Vec<Vector> = xs.iter().map(|x| Vector::from_vec(x.clone())).collect();
        let mut fwd = ArmPosterior::new(4, 6.0, 6.0).unwrap();
        let mut rev = ArmPosterior::new(4, 6.0, 6.0).unwrap();
        for (f, &y) in feats.iter().zip(&ys) {
            fwd.observe(f, y).unwrap();
        }
        for (f, &y) in feats.iter().zip(&ys).rev() {
            rev.observe(f, y).unwrap();
        }
        for (a, b) in fwd.data_precision().as_slice().iter().zip(rev.data_precision().as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in fwd.psi().as_slice().iter().zip(rev.psi().as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((fwd.r2_sum() - rev.r2_sum()).abs() < 1e-10);
    }

    // ---- rebuild semantics ----

    #[test]
    fn rebuild_clears_gaussian_stats_but_keeps_noise_state() {
        let mut p = ArmPosterior::new(3, 6.0, 6.0).unwrap();
        p.observe(&Vector::basis(3, 0), 2.0).unwrap();
        p.rebuild(SymMatrix::from_diag(&[2.0; 3]), Vector::zeros(3), &[], &[]).unwrap();
        // Φ and ψ reflect only the (empty) tuple list; the noise posterior
        // still remembers the one observation it has genuinely seen.
        assert_eq!(p.data_precision().as_slice(), SymMatrix::zeros(3).as_slice());
        assert_eq!(p.psi().as_slice(), Vector::zeros(3).as_slice());
        assert_eq!(p.prior_precision().get(0, 0), 2.0);
        assert_eq!(p.pulls(), 1);
        assert_eq!(p.r2_sum(), 4.0);
    }

    #[test]
    fn rebuild_with_doubled_prior_hand_check() {
        // (2I + e₁e₁ᵀ)x = e₁ gives x₁ = 1/3.
        let mut p = ArmPosterior::new(3, 6.0, 6.0).unwrap();
        p.rebuild(
            SymMatrix::from_diag(&[2.0; 3]),
            Vector::zeros(3),
            &[Vector::basis(3, 0)],
            &[1.0],
        )
        .unwrap();
        let mu = p.mu_hat().unwrap();
        assert!((mu[0] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(mu[1], 0.0);
    }

    #[test]
    fn errors_on_shape_violations() {
        let mut p = ArmPosterior::new(3, 6.0, 6.0).unwrap();
        assert!(matches!(
            p.observe(&Vector::zeros(2), 1.0),
            Err(PosteriorError::DimensionMismatch { expected: 3, actual: 2 })
        ));
        assert!(matches!(
            p.rebuild(SymMatrix::identity(3), Vector::zeros(3), &[Vector::zeros(3)], &[]),
            Err(PosteriorError::MismatchedLists { feats: 1, rewards: 0 })
        ));
        assert!(matches!(
            p.rebuild(SymMatrix::identity(2), Vector::zeros(3), &[], &[]),
            Err(PosteriorError::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    // ---- sampling ----

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let (xs, ys) = seeded_data(20, 4, 55);
        let build = || {
            let mut p = ArmPosterior::new(4, 6.0, 6.0).unwrap();
            for (x, &y) in xs.iter().zip(&ys) {
                p.observe(&Vector::from_vec(x.clone()), y).unwrap();
            }
            p
        };
        let mut p1 = build();
        let mut p2 = build();
        let mut r1 = ChaCha12Rng::seed_from_u64(7);
        let mut r2 = ChaCha12Rng::seed_from_u64(7);
        let a = p1.sample_coefficients(&mut r1).unwrap();
        let b = p2.sample_coefficients(&mut r2).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn tiny_noise_posterior_collapses_to_mean() {
        // Enormous shape drives ν̃² toward zero (the data term keeps the
        // scale near 0.25 regardless of b0), so the draw pins to μ̂ within
        // ~20 standard deviations of the residual noise.
        let mut p = ArmPosterior::new(3, 1e10, 1e-8).unwrap();
        p.observe(&Vector::basis(3, 0), 1.0).unwrap();
        let mu = p.mu_hat().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            let s = p.sample_coefficients(&mut rng).unwrap();
            for i in 0..3 {
                assert!((s[i] - mu[i]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn sample_moments_match_posterior() {
        // Empirical mean ≈ μ̂ and covariance ≈ E[ν̃²]·(Φ⁰+Φ)⁻¹ with
        // E[ν̃²] = scale/(shape−1).
        let mut p = ArmPosterior::new(2, 6.0, 6.0).unwrap();
        let feats =
            [vec![1.0, 0.2], vec![0.5, -1.0], vec![-0.3, 0.8], vec![1.2, 1.1], vec![0.0, -0.7]];
        for (k, f) in feats.iter().enumerate() {
            p.observe(&Vector::from_vec(f.clone()), 0.5 + 0.1 * k as f64).unwrap();
        }
        let mu = p.mu_hat().unwrap();
        let (shape, scale) = p.noise_params().unwrap();
        let expected_nv2 = scale / (shape - 1.0);
        let cov_base = crate::linalg::spd_inverse(&p.posterior_precision()).unwrap();

        let n = 100_000;
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let mut s = [0.0; 2];
        let mut c = [[0.0; 2]; 2];
        let draws: Vec<Vector> = (0..n).map(|_| p.sample_coefficients(&mut rng).unwrap()).collect();
        for x in &draws {
            s[0] += x[0];
            s[1] += x[1];
        }
        let m = [s[0] / n as f64, s[1] / n as f64];
        for x in &draws {
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += (x[i] - m[i]) * (x[j] - m[j]);
                }
            }
        }
        for i in 0..2 {
            assert!((m[i] - mu[i]).abs() < 0.02, "mean[{i}] {} vs μ̂ {}", m[i], mu[i]);
            for j in 0..2 {
                let got = c[i][j] / n as f64;
                let want = expected_nv2 * cov_base.get(i, j);
                assert!(
                    (got - want).abs() < 0.05 * want.abs().max(0.05),
                    "cov[{i}][{j}] {got} vs {want}"
                );
            }
        }
    }

    // ---- randomized conjugacy fuzz ----

    #[test]
    fn scale_stays_clamped_and_oracle_consistent_under_fuzz() {
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        for case in 0..50 {
            let d = 1 + case % 6;
            let n = 1 + (case * 7) % 40;
            let (xs, ys) = seeded_data(n, d, 1000 + case as u64);
            let mut p = ArmPosterior::new(d, 6.0, 6.0).unwrap();
            for (x, &y) in xs.iter().zip(&ys) {
                p.observe(&Vector::from_vec(x.clone()), y).unwrap();
            }
            let (_, scale) = p.noise_params().unwrap();
            assert!(scale >= 6.0 * 1e-6);
            let want = residual_scale_oracle(&xs, &ys, 1.0, &vec![0.0; d], 6.0);
            assert!((scale - want).abs() < 1e-8 * want.abs().max(1.0));
            let _ = rng.random::<u64>();
        }
    }
}
