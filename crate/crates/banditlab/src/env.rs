//! Bandit environments.
//!
//! Two flavors are supported behind the [`Env`] enum:
//!
//! * [`DatasetBandit`] — a classification or reward-matrix dataset loaded
//!   from a CSV file plus a sidecar schema describing its columns. Each round
//!   reveals the next context of a seeded row permutation; rewards come from
//!   the hidden reward row (one-hot for classification datasets: 1 for the
//!   correct class, 0 otherwise).
//! * [`LinearSynthEnv`] — a realizable linear model: contexts drawn
//!   uniformly from the unit sphere, per-arm mean rewards `bᵀμᵢ` plus
//!   Gaussian noise. Exact per-step regret is available from the means.
//!
//! The sidecar schema is a small key-value text file:
//!
//! ```text
//! kind classification      # or: reward_matrix
//! delimiter comma          # comma | space | tab
//! header false             # true skips the first line
//! label_column 9           # classification: raw index of the class column
//! reward_columns 4 5       # reward_matrix: raw indices of reward columns
//! categorical 0 3          # optional: feature columns to one-hot encode
//! standardize false        # optional: z-score features after encoding
//! ```
//!
//! Categorical feature columns expand into one indicator column per distinct
//! value, ordered numerically when every value parses as a number and
//! lexicographically otherwise (class labels are ordered the same way).
//! Standardization uses the population variance; a constant column is left
//! centered at zero rather than divided by its zero deviation.

use crate::linalg::Vector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

/// Failure modes of environment construction and stepping.
#[derive(Debug, Error)]
pub enum EnvError {
    /// Filesystem failure while reading dataset or schema files.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The schema file is malformed.
    #[error("schema error: {0}")]
    Schema(String),
    /// The CSV did not parse under the schema.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// The dataset stream has no rows left.
    #[error("dataset exhausted")]
    Exhausted,
    /// A constructor argument was outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

// ── Schema ──────────────────────────────────────────────────────────────────

/// How reward rows are derived from the raw columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaKind {
    /// One column holds a class label; rewards are one-hot over classes.
    Classification { label_column: usize },
    /// The listed columns are per-arm rewards; the rest are features.
    RewardMatrix { reward_columns: Vec<usize> },
}

/// Parsed sidecar schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub kind: SchemaKind,
    pub delimiter: Delimiter,
    pub header: bool,
    pub categorical: Vec<usize>,
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    Space,
    Tab,
}

impl Schema {
    /// Parses the key-value sidecar format. Unknown keys are errors; `#`
    /// starts a comment.
    pub fn parse(text: &str) -> Result<Schema, EnvError> {
        let mut kind_word: Option<String> = None;
        let mut label_column: Option<usize> = None;
        let mut reward_columns: Option<Vec<usize>> = None;
        let mut delimiter = Delimiter::Comma;
        let mut header = false;
        let mut categorical = Vec::new();
        let mut standardize = false;

        for raw_line in text.lines() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let values: Vec<&str> = parts.collect();
            let one = |vs: &[&str]| -> Result<String, EnvError> {
                if vs.len() != 1 {
                    return Err(EnvError::Schema(format!("key '{key}' expects exactly one value")));
                }
                Ok(vs[0].to_string())
            };
            let parse_bool = |s: &str| -> Result<bool, EnvError> {
                match s {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    _ => Err(EnvError::Schema(format!("key '{key}': expected true/false, got '{s}'"))),
                }
            };
            let parse_indices = |vs: &[&str]| -> Result<Vec<usize>, EnvError> {
                if vs.is_empty() {
                    return Err(EnvError::Schema(format!("key '{key}' expects at least one index")));
                }
                vs.iter()
                    .map(|v| {
                        v.parse::<usize>().map_err(|_| {
                            EnvError::Schema(format!("key '{key}': '{v}' is not a column index"))
                        })
                    })
                    .collect()
            };
            match key {
                "kind" => kind_word = Some(one(&values)?),
                "label_column" => {
                    label_column = Some(one(&values)?.parse::<usize>().map_err(|_| {
                        EnvError::Schema("label_column must be a column index".into())
                    })?)
                }
                "reward_columns" => reward_columns = Some(parse_indices(&values)?),
                "delimiter" => {
                    delimiter = match one(&values)?.as_str() {
                        "comma" => Delimiter::Comma,
                        "space" => Delimiter::Space,
                        "tab" => Delimiter::Tab,
                        other => {
                            return Err(EnvError::Schema(format!("unknown delimiter '{other}'")))
                        }
                    }
                }
                "header" => header = parse_bool(&one(&values)?)?,
                "categorical" => categorical = parse_indices(&values)?,
                "standardize" => standardize = parse_bool(&one(&values)?)?,
                other => return Err(EnvError::Schema(format!("unknown key '{other}'"))),
            }
        }

        let kind = match kind_word.as_deref() {
            Some("classification") => {
                let col = label_column
                    .ok_or_else(|| EnvError::Schema("classification requires label_column".into()))?;
                SchemaKind::Classification { label_column: col }
            }
            Some("reward_matrix") => {
                let cols = reward_columns
                    .ok_or_else(|| EnvError::Schema("reward_matrix requires reward_columns".into()))?;
                SchemaKind::RewardMatrix { reward_columns: cols }
            }
            Some(other) => return Err(EnvError::Schema(format!("unknown kind '{other}'"))),
            None => return Err(EnvError::Schema("missing 'kind'".into())),
        };
        Ok(Schema { kind, delimiter, header, categorical, standardize })
    }

    pub fn load(path: &Path) -> Result<Schema, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })?;
        Schema::parse(&text)
    }
}

/// Sorts distinct raw tokens the way category columns and class labels are
/// ordered: numerically when every token parses as a finite number,
/// lexicographically otherwise.
fn sorted_categories(values: &BTreeSet<String>) -> Vec<String> {
    let mut cats: Vec<String> = values.iter().cloned().collect();
    let nums: Option<Vec<f64>> = cats
        .iter()
        .map(|c| c.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect();
    if let Some(nums) = nums {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(cats).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        cats = pairs.into_iter().map(|(_, c)| c).collect();
    } else {
        cats.sort();
    }
    cats
}

// ── DatasetBandit ───────────────────────────────────────────────────────────

/// A dataset-backed bandit: contexts with hidden per-arm reward rows,
/// streamed in a seeded random order.
#[derive(Debug, Clone)]
pub struct DatasetBandit {
    contexts: Vec<Vector>,
    rewards: Vec<Vec<f64>>,
    order: Vec<usize>,
    cursor: usize,
}

impl DatasetBandit {
    /// Loads a CSV under the given sidecar schema.
    pub fn load_csv(csv_path: &Path, schema: &Schema) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(csv_path)
            .map_err(|e| EnvError::Io { path: csv_path.display().to_string(), source: e })?;
        Self::from_csv_text(&text, schema)
    }

    /// Parses CSV text under the schema (the file-loading core, separated for
    /// tests).
    pub fn from_csv_text(text: &str, schema: &Schema) -> Result<Self, EnvError> {
        // Tokenize rows, tracking original line numbers for errors.
        let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            if schema.header && idx == 0 {
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            let tokens: Vec<String> = match schema.delimiter {
                Delimiter::Comma => raw.split(',').map(|t| t.trim().to_string()).collect(),
                Delimiter::Space => raw.split_whitespace().map(str::to_string).collect(),
                Delimiter::Tab => raw.split('\t').map(|t| t.trim().to_string()).collect(),
            };
            rows.push((line_no, tokens));
        }
        if rows.is_empty() {
            return Err(EnvError::Schema("dataset has no data rows".into()));
        }
        let width = rows[0].1.len();
        for (line, tokens) in &rows {
            if tokens.len() != width {
                return Err(EnvError::Parse {
                    line: *line,
                    message: format!("expected {width} columns, found {}", tokens.len()),
                });
            }
        }

        // Split raw columns into feature columns and reward source.
        let non_feature: Vec<usize> = match &schema.kind {
            SchemaKind::Classification { label_column } => vec![*label_column],
            SchemaKind::RewardMatrix { reward_columns } => reward_columns.clone(),
        };
        for &c in &non_feature {
            if c >= width {
                return Err(EnvError::Schema(format!(
                    "column {c} out of range for {width}-column file"
                )));
            }
        }
        let feature_cols: Vec<usize> = (0..width).filter(|c| !non_feature.contains(c)).collect();
        for &c in &schema.categorical {
            if !feature_cols.contains(&c) {
                return Err(EnvError::Schema(format!(
                    "categorical column {c} is not a feature column"
                )));
            }
        }

        // Category vocabularies for one-hot columns.
        let mut vocab: Vec<Option<Vec<String>>> = vec![None; width];
        for &c in &schema.categorical {
            let distinct: BTreeSet<String> = rows.iter().map(|(_, t)| t[c].clone()).collect();
            vocab[c] = Some(sorted_categories(&distinct));
        }

        // Class vocabulary for classification labels.
        let class_vocab: Option<Vec<String>> = match &schema.kind {
            SchemaKind::Classification { label_column } => {
                let distinct: BTreeSet<String> =
                    rows.iter().map(|(_, t)| t[*label_column].clone()).collect();
                Some(sorted_categories(&distinct))
            }
            SchemaKind::RewardMatrix { .. } => None,
        };

        let parse_num = |line: usize, token: &str| -> Result<f64, EnvError> {
            let v: f64 = token.parse().map_err(|_| EnvError::Parse {
                line,
                message: format!("'{token}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(EnvError::Parse { line, message: format!("non-finite value '{token}'") });
            }
            Ok(v)
        };

        let mut contexts: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
        let mut rewards: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
        for (line, tokens) in &rows {
            let mut feat = Vec::new();
            for &c in &feature_cols {
                match &vocab[c] {
                    Some(cats) => {
                        let pos = cats.iter().position(|cat| cat == &tokens[c]).expect(
                            "category vocabulary was built from these rows",
                        );
                        for k in 0..cats.len() {
                            feat.push(if k == pos { 1.0 } else { 0.0 });
                        }
                    }
                    None => feat.push(parse_num(*line, &tokens[c])?),
                }
            }
            let reward_row = match &schema.kind {
                SchemaKind::Classification { label_column } => {
                    let cats = class_vocab.as_ref().unwrap();
                    let pos = cats
                        .iter()
                        .position(|cat| cat == &tokens[*label_column])
                        .expect("class vocabulary was built from these rows");
                    (0..cats.len()).map(|k| if k == pos { 1.0 } else { 0.0 }).collect()
                }
                SchemaKind::RewardMatrix { reward_columns } => reward_columns
                    .iter()
                    .map(|&c| parse_num(*line, &tokens[c]))
                    .collect::<Result<Vec<f64>, EnvError>>()?,
            };
            contexts.push(feat);
            rewards.push(reward_row);
        }

        if schema.standardize {
            standardize_columns(&mut contexts);
        }

        let t = contexts.len();
        Ok(DatasetBandit {
            contexts: contexts.into_iter().map(Vector::from_vec).collect(),
            rewards,
            order: (0..t).collect(),
            cursor: 0,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.contexts.len()
    }

    pub fn dim(&self) -> usize {
        self.contexts[0].dim()
    }

    pub fn num_arms(&self) -> usize {
        self.rewards[0].len()
    }

    /// The `row`-th context in the original file order (unaffected by
    /// shuffling) — e.g. as a fixed probe input.
    pub fn context(&self, row: usize) -> &Vector {
        &self.contexts[row]
    }

    /// Re-deals the row order from a fresh seeded permutation and rewinds.
    pub fn shuffle(&mut self, seed: u64) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let n = self.order.len();
        self.order = (0..n).collect();
        // Fisher-Yates.
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            self.order.swap(i, j);
        }
        self.cursor = 0;
    }

    pub fn remaining(&self) -> usize {
        self.num_rows() - self.cursor
    }

    fn next_step(&mut self) -> Result<Step, EnvError> {
        if self.cursor >= self.num_rows() {
            return Err(EnvError::Exhausted);
        }
        let row = self.order[self.cursor];
        self.cursor += 1;
        Ok(Step {
            context: self.contexts[row].clone(),
            rewards: self.rewards[row].clone(),
            mean_rewards: self.rewards[row].clone(),
        })
    }
}

/// In-place z-scoring with population variance; constant columns are only
/// centered.
fn standardize_columns(rows: &mut [Vec<f64>]) {
    if rows.is_empty() {
        return;
    }
    let d = rows[0].len();
    let n = rows.len() as f64;
    for c in 0..d {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in rows.iter_mut() {
            r[c] -= mean;
            if sd > 1e-12 {
                r[c] /= sd;
            }
        }
    }
}

// ── LinearSynthEnv ──────────────────────────────────────────────────────────

/// Realizable linear bandit: `E[rᵢ | b] = bᵀμᵢ`, contexts uniform on the
/// unit sphere.
#[derive(Debug, Clone)]
pub struct LinearSynthEnv {
    true_mu: Vec<Vector>,
    noise_sigma: f64,
}

impl LinearSynthEnv {
    pub fn new(true_mu: Vec<Vector>, noise_sigma: f64) -> Result<Self, EnvError> {
        if true_mu.is_empty() {
            return Err(EnvError::InvalidArgument("need at least one arm".into()));
        }
        let d = true_mu[0].dim();
        if true_mu.iter().any(|m| m.dim() != d) {
            return Err(EnvError::InvalidArgument("arm coefficient dims disagree".into()));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(EnvError::InvalidArgument(format!(
                "noise_sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        Ok(LinearSynthEnv { true_mu, noise_sigma })
    }

    /// Arm coefficients drawn uniformly on the unit sphere (one per arm).
    pub fn with_random_arms<R: Rng>(
        num_arms: usize,
        dim: usize,
        noise_sigma: f64,
        rng: &mut R,
    ) -> Result<Self, EnvError> {
        if num_arms == 0 || dim == 0 {
            return Err(EnvError::InvalidArgument("num_arms and dim must be >= 1".into()));
        }
        let mu = (0..num_arms).map(|_| unit_sphere(dim, rng)).collect();
        LinearSynthEnv::new(mu, noise_sigma)
    }

    pub fn dim(&self) -> usize {
        self.true_mu[0].dim()
    }

    pub fn num_arms(&self) -> usize {
        self.true_mu.len()
    }

    pub fn true_mu(&self) -> &[Vector] {
        &self.true_mu
    }

    fn next_step<R: Rng>(&self, rng: &mut R) -> Step {
        let context = unit_sphere(self.dim(), rng);
        let mean_rewards: Vec<f64> = self.true_mu.iter().map(|m| m.dot(&context)).collect();
        let rewards: Vec<f64> = mean_rewards
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(rng);
                m + self.noise_sigma * z
            })
            .collect();
        Step { context, rewards, mean_rewards }
    }
}

/// Uniform draw from the unit sphere in `dim` dimensions.
fn unit_sphere<R: Rng>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return Vector::from_vec(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

// ── Env facade ──────────────────────────────────────────────────────────────

/// One interaction round, as the environment sees it. Agents receive only
/// `context` and, after acting, the chosen entry of `rewards`;
/// `mean_rewards` drives regret accounting in the harness.
#[derive(Debug, Clone)]
pub struct Step {
    pub context: Vector,
    pub rewards: Vec<f64>,
    pub mean_rewards: Vec<f64>,
}

impl Step {
    /// Instantaneous regret of playing `arm`: best mean minus chosen mean.
    pub fn regret(&self, arm: usize) -> f64 {
        let best = self.mean_rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        best - self.mean_rewards[arm]
    }

    /// Index of the best arm by mean reward (lowest index on ties).
    pub fn best_arm(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mean_rewards.iter().enumerate() {
            if m > self.mean_rewards[best] {
                best = i;
            }
        }
        best
    }
}

/// Either environment flavor behind one stepping interface.
#[derive(Debug, Clone)]
pub enum Env {
    Dataset(DatasetBandit),
    LinearSynth(LinearSynthEnv),
}

impl Env {
    pub fn dim(&self) -> usize {
        match self {
            Env::Dataset(d) => d.dim(),
            Env::LinearSynth(s) => s.dim(),
        }
    }

    pub fn num_arms(&self) -> usize {
        match self {
            Env::Dataset(d) => d.num_arms(),
            Env::LinearSynth(s) => s.num_arms(),
        }
    }

    /// Rounds left before exhaustion; `None` for endless environments.
    pub fn remaining(&self) -> Option<usize> {
        match self {
            Env::Dataset(d) => Some(d.remaining()),
            Env::LinearSynth(_) => None,
        }
    }

    /// Emits the next round. Datasets ignore `rng` (their order is fixed by
    /// [`DatasetBandit::shuffle`]); the synthetic model draws from it.
    pub fn next<R: Rng>(&mut self, rng: &mut R) -> Result<Step, EnvError> {
        match self {
            Env::Dataset(d) => d.next_step(),
            Env::LinearSynth(s) => Ok(s.next_step(rng)),
        }
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
