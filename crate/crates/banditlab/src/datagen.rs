//! Deterministic benchmark-dataset generators.
//!
//! The benchmark suite runs on locally generated datasets that mirror the
//! shapes of four classic classification tasks (a 9-feature/7-class shuttle
//! task, a 22-categorical/2-class mushroom task, and two high-dimensional
//! sensor/census tasks). Each generator writes a CSV plus the sidecar schema
//! understood by [`crate::env::DatasetBandit::load_csv`], and is fully
//! determined by `(rows, seed)`.
//!
//! The flagship `statlog_like` task is built so that the gap between linear
//! and nonlinear policies is structural, not incidental: each class is a
//! Gaussian cluster on its own axis, but a fixed fraction of every class sits
//! at the *antipode* of its cluster center. Linear one-vs-rest scorers pass
//! through the origin, so an antipodal pocket scores the negative of its own
//! class and is systematically misclassified, capping linear accuracy near
//! `1 − pocket_fraction`, while a one-hidden-layer network separates the
//! pockets easily. The calibration tests at the bottom of this module pin
//! those two ceilings with supervised probes (ridge regression and a
//! uniform-logging MLP fit) so the bandit experiments sit on known ground.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::{Path, PathBuf};

/// The four stock benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StockDataset {
    /// 9 numeric features, 7 classes, antipodal pockets. Space-delimited.
    StatlogLike,
    /// 22 categorical features (one-hot dim 117), 2 classes. Comma-delimited.
    MushroomLike,
    /// 377 numeric features, 9 classes, standardized. Comma + header.
    CensusLike,
    /// 561 numeric features, 6 classes, standardized. Space-delimited.
    SmartphonesLike,
}

impl StockDataset {
    pub fn name(self) -> &'static str {
        match self {
            StockDataset::StatlogLike => "statlog_like",
            StockDataset::MushroomLike => "mushroom_like",
            StockDataset::CensusLike => "census_like",
            StockDataset::SmartphonesLike => "smartphones_like",
        }
    }

    /// Enough rows for the stock experiments on each task.
    pub fn default_rows(self) -> usize {
        match self {
            StockDataset::StatlogLike => 6000,
            StockDataset::MushroomLike => 4000,
            StockDataset::CensusLike => 800,
            StockDataset::SmartphonesLike => 800,
        }
    }

    pub fn all() -> [StockDataset; 4] {
        [
            StockDataset::StatlogLike,
            StockDataset::MushroomLike,
            StockDataset::CensusLike,
            StockDataset::SmartphonesLike,
        ]
    }

    pub fn from_name(name: &str) -> Option<StockDataset> {
        StockDataset::all().into_iter().find(|d| d.name() == name)
    }
}

/// Paths of a generated dataset.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

/// Generates a stock dataset into `dir`, writing `<name>.csv` and
/// `<name>.schema`, and returns the paths.
pub fn write_dataset(
    kind: StockDataset,
    dir: &Path,
    rows: usize,
    seed: u64,
) -> std::io::Result<DatasetFiles> {
    let (csv_text, schema_text) = match kind {
        StockDataset::StatlogLike => statlog_like(rows, seed),
        StockDataset::MushroomLike => mushroom_like(rows, seed),
        StockDataset::CensusLike => {
            blob_classification(rows, seed, 377, 9, 3.0, 1.0, Header::Named, ',')
        }
        StockDataset::SmartphonesLike => {
            blob_classification(rows, seed, 561, 6, 3.0, 1.0, Header::None, ' ')
        }
    };
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", kind.name()));
    let schema = dir.join(format!("{}.schema", kind.name()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&csv)?);
    f.write_all(csv_text.as_bytes())?;
    f.flush()?;
    std::fs::write(&schema, schema_text)?;
    Ok(DatasetFiles { csv, schema })
}

/// Weighted class draw from cumulative probabilities.
fn draw_class<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

// ── statlog_like ────────────────────────────────────────────────────────────

/// Class frequencies, skewed like flight-phase data.
const STATLOG_CLASS_PROBS: [f64; 7] = [0.42, 0.18, 0.12, 0.10, 0.08, 0.06, 0.04];
/// Fraction of each class placed at the antipode of its cluster center.
const STATLOG_POCKET_FRACTION: f64 = 0.10;
/// Cluster-center radius and within-cluster noise.
const STATLOG_RADIUS: f64 = 2.0;
const STATLOG_SIGMA: f64 = 0.35;
const STATLOG_DIM: usize = 9;

fn statlog_like(rows: usize, seed: u64) -> (String, String) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut csv = String::with_capacity(rows * 64);
    for _ in 0..rows {
        let class = draw_class(&STATLOG_CLASS_PROBS, &mut rng);
        let pocket = rng.random::<f64>() < STATLOG_POCKET_FRACTION;
        let sign = if pocket { -1.0 } else { 1.0 };
        for d in 0..STATLOG_DIM {
            let center = if d == class { sign * STATLOG_RADIUS } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = center + STATLOG_SIGMA * z;
            if d > 0 {
                csv.push(' ');
            }
            csv.push_str(&format!("{v:.4}"));
        }
        csv.push_str(&format!(" {class}\n"));
    }
    let schema = format!(
        "kind classification\nlabel_column {STATLOG_DIM}\ndelimiter space\nheader false\nstandardize false\n"
    );
    (csv, schema)
}

// ── mushroom_like ───────────────────────────────────────────────────────────

/// Per-column category counts of the 22 mushroom attributes (sum 117).
const MUSHROOM_ARITIES: [usize; 22] =
    [6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 7];
const MUSHROOM_EDIBLE_PROB: f64 = 0.52;

fn mushroom_like(rows: usize, seed: u64) -> (String, String) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut csv = String::with_capacity(rows * 56);
    for _ in 0..rows {
        let edible = rng.random::<f64>() < MUSHROOM_EDIBLE_PROB;
        csv.push(if edible { 'e' } else { 'p' });
        for (col, &arity) in MUSHROOM_ARITIES.iter().enumerate() {
            // Column 4 (odor-like, arity 9) is strongly class-informative;
            // columns 8 and 19 are weakly informative; the rest are noise.
            let cat = match (col, arity) {
                (4, a) => informative_category(a, 4, edible, 0.05, &mut rng),
                (8, a) => informative_category(a, 6, edible, 0.25, &mut rng),
                (19, a) => informative_category(a, 4, edible, 0.30, &mut rng),
                (_, a) => rng.random_range(0..a),
            };
            csv.push(',');
            csv.push((b'a' + cat as u8) as char);
        }
        csv.push('\n');
    }
    let categorical: Vec<String> = (1..=MUSHROOM_ARITIES.len()).map(|c| c.to_string()).collect();
    let schema = format!(
        "kind classification\nlabel_column 0\ndelimiter comma\nheader false\ncategorical {}\nstandardize false\n",
        categorical.join(" ")
    );
    (csv, schema)
}

/// Draws a category: edible rows favor `0..split`, poisonous rows favor
/// `split..arity`, crossing over with probability `leak`.
fn informative_category<R: Rng>(
    arity: usize,
    split: usize,
    edible: bool,
    leak: f64,
    rng: &mut R,
) -> usize {
    let cross = rng.random::<f64>() < leak;
    let own_side = edible ^ cross;
    if own_side {
        rng.random_range(0..split.min(arity))
    } else {
        rng.random_range(split.min(arity)..arity)
    }
}

// ── high-dimensional blobs ──────────────────────────────────────────────────

enum Header {
    None,
    Named,
}

/// Gaussian-blob classification in high dimension: per-class center of norm
/// `radius`, isotropic noise `sigma`, uniform class frequencies.
fn blob_classification(
    rows: usize,
    seed: u64,
    dim: usize,
    classes: usize,
    radius: f64,
    sigma: f64,
    header: Header,
    delim: char,
) -> (String, String) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| radius * x / norm).collect()
        })
        .collect();
    let mut csv = String::with_capacity(rows * dim * 8);
    if let Header::Named = header {
        for d in 0..dim {
            if d > 0 {
                csv.push(delim);
            }
            csv.push_str(&format!("f{d}"));
        }
        csv.push(delim);
        csv.push_str("label\n");
    }
    for _ in 0..rows {
        let class = rng.random_range(0..classes);
        for d in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = centers[class][d] + sigma * z;
            if d > 0 {
                csv.push(delim);
            }
            csv.push_str(&format!("{v:.4}"));
        }
        csv.push(delim);
        csv.push_str(&format!("{class}\n"));
    }
    let delim_word = if delim == ' ' { "space" } else { "comma" };
    let header_word = if matches!(header, Header::Named) { "true" } else { "false" };
    let schema = format!(
        "kind classification\nlabel_column {dim}\ndelimiter {delim_word}\nheader {header_word}\nstandardize true\n"
    );
    (csv, schema)
}

// ── Tests ───────────────────────────────────────────────────────────────────
