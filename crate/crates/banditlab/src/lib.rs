//! A small laboratory for contextual bandits with parametric reward models.
//!
//! The crate implements three families of Thompson-sampling agents and the
//! scaffolding needed to benchmark them on classification-style bandit
//! problems:
//!
//! * **Linear Thompson sampling** — Bayesian linear regression with an
//!   inverse-gamma noise prior directly on raw contexts ([`agents`]).
//! * **Neural-linear Thompson sampling** — a small MLP learns a feature map
//!   online while Bayesian linear regression on the last hidden layer drives
//!   exploration; the full-memory variant retrains periodically from the
//!   entire history ([`mlp`], [`posterior`]).
//! * **Limited-memory neural-linear** — the same architecture restricted to a
//!   bounded FIFO replay buffer. The flagship variant keeps its posterior
//!   honest across representation drift by *likelihood matching*: after every
//!   training step it fits a PSD prior precision whose predictive variances
//!   under the new features match the old ones, via stochastic projected
//!   gradient descent over the PSD cone ([`matching`], [`buffer`]).
//!
//! [`env`] supplies dataset-backed and synthetic-linear bandit environments,
//! [`datagen`] generates the bundled benchmark datasets, and [`harness`] runs
//! seeded experiments (reward tables, score normalization, memory ablations,
//! forgetting probes, neural-tangent-kernel drift measurements) with
//! deterministic, file-based outputs. The `banditlab` binary exposes all of
//! it on the command line.
//!
//! Everything is deterministic given a seed: all randomness flows through
//! caller-supplied [`rand`] generators, and there is no global RNG anywhere.

pub mod agents;
pub mod buffer;
pub mod datagen;
pub mod env;
pub mod harness;
pub mod linalg;
pub mod matching;
pub mod mlp;
pub mod posterior;
