//! Dense symmetric linear algebra sized for bandit posteriors.
//!
//! The posterior machinery only ever needs symmetric matrices up to a few
//! hundred rows that are rebuilt every round, so the routines here favour
//! exactness, determinism and simplicity over asymptotic cleverness: flat
//! row-major storage, cyclic Jacobi rotations for eigendecompositions,
//! Cholesky factorizations for solves, inverses and Gaussian sampling.
//!
//! [`SymMatrix`] keeps its two triangles bitwise identical at all times;
//! every mutating operation writes the mirrored entry from the same computed
//! value, so symmetry never decays through floating-point noise.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

/// Maximum number of full Jacobi sweeps before giving up.
const MAX_JACOBI_SWEEPS: usize = 64;

// ── Errors ──────────────────────────────────────────────────────────────────

/// Failure modes of the dense routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    /// Operand shapes disagree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    /// A Cholesky pivot was non-positive, so the matrix is not SPD.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { pivot: f64, row: usize },
    /// The Jacobi iteration hit its sweep cap with off-diagonal mass left.
    #[error("eigendecomposition did not converge (off-diagonal norm {off_norm:.3e})")]
    NoConvergence { off_norm: f64 },
    /// A scalar argument was outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

// ── Vector ──────────────────────────────────────────────────────────────────

/// A dense column vector with at least one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// All-zero vector of dimension `dim` (`dim >= 1`).
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "Vector requires dim >= 1");
        Vector { data: vec![0.0; dim] }
    }

    /// Wraps an owned buffer (must be non-empty).
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "Vector requires dim >= 1");
        Vector { data }
    }

    /// Standard basis vector `e_k` of dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Vector::zeros(dim);
        v.data[k] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Inner product; panics on shape mismatch (internal contract).
    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Vector) {
        assert_eq!(self.dim(), other.dim(), "add_scaled: dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

// ── SymMatrix ───────────────────────────────────────────────────────────────

/// A dense symmetric matrix with exactly mirrored storage.
///
/// Stored row-major as a full `dim * dim` buffer. Constructors symmetrize
/// their input by averaging; mutators write both triangles from one computed
/// value, so `get(i, j) == get(j, i)` holds bitwise after any sequence of
/// operations.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix of shape `dim x dim` (`dim >= 1`).
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix requires dim >= 1");
        SymMatrix { dim, data: vec![0.0; dim * dim] }
    }

    /// Identity matrix.
    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = d;
        }
        m
    }

    /// Builds from square row data, symmetrizing by averaging `(m + mᵀ) / 2`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        assert!(dim >= 1 && rows.iter().all(|r| r.len() == dim), "from_rows: input must be square");
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let avg = 0.5 * (rows[i][j] + rows[j][i]);
                m.data[i * dim + j] = avg;
                m.data[j * dim + i] = avg;
            }
        }
        m
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &Vector) -> Self {
        let mut m = SymMatrix::zeros(v.dim());
        m.add_outer(v, 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets entries `(i, j)` and `(j, i)` to the same value.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self += c * v vᵀ`, mirrored exactly.
    pub fn add_outer(&mut self, v: &Vector, c: f64) {
        assert_eq!(self.dim, v.dim(), "add_outer: dimension mismatch");
        let n = self.dim;
        for i in 0..n {
            let cvi = c * v.data[i];
            for j in i..n {
                let delta = cvi * v.data[j];
                self.data[i * n + j] += delta;
                if i != j {
                    self.data[j * n + i] = self.data[i * n + j];
                }
            }
        }
    }

    /// `self += c * I`.
    pub fn add_diag(&mut self, c: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += c;
        }
    }

    /// Entry-wise sum with another matrix of the same shape.
    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim, "add: dimension mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.dim, v.dim(), "matvec: dimension mismatch");
        let n = self.dim;
        let mut out = Vector::zeros(n);
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            out.data[i] = row.iter().zip(&v.data).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quad_form(&self, v: &Vector) -> f64 {
        self.matvec(v).dot(v)
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn max_abs_diag(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].abs()).fold(0.0, f64::max)
    }
}

// ── Eigendecomposition ──────────────────────────────────────────────────────

/// Result of [`sym_eig`]: eigenvalues in descending order with matching
/// orthonormal eigenvectors (`vectors[k]` pairs with `values[k]`).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<Vector>,
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Deterministic: the rotation schedule is fixed, so identical inputs yield
/// bitwise-identical output. Converges when every off-diagonal entry falls
/// below `1e-15 * ||m||_F / dim`; at the usual dimensions (≤ ~600) this takes
/// a handful of sweeps.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenDecomposition, LinalgError> {
    let n = m.dim;
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale = m.frobenius();
    if scale > 0.0 {
        let tol_pair = 1e-15 * scale / n as f64;
        let mut converged = false;
        for _sweep in 0..MAX_JACOBI_SWEEPS {
            let mut rotated = false;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() <= tol_pair {
                        continue;
                    }
                    rotated = true;
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        1.0 / (theta - (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        if i == p || i == q {
                            continue;
                        }
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        let new_ip = c * aip - s * aiq;
                        let new_iq = s * aip + c * aiq;
                        a[i * n + p] = new_ip;
                        a[p * n + i] = new_ip;
                        a[i * n + q] = new_iq;
                        a[q * n + i] = new_iq;
                    }
                    a[p * n + p] = app - t * apq;
                    a[q * n + q] = aqq + t * apq;
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    for i in 0..n {
                        let vip = v[i * n + p];
                        let viq = v[i * n + q];
                        v[i * n + p] = c * vip - s * viq;
                        v[i * n + q] = s * vip + c * viq;
                    }
                }
            }
            if !rotated {
                converged = true;
                break;
            }
        }
        if !converged {
            let off_norm = {
                let mut s = 0.0;
                for p in 0..n {
                    for q in p + 1..n {
                        s += a[p * n + q] * a[p * n + q];
                    }
                }
                (2.0 * s).sqrt()
            };
            if off_norm > 1e-13 * scale {
                return Err(LinalgError::NoConvergence { off_norm });
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let vectors: Vec<Vector> = order
        .iter()
        .map(|&k| Vector::from_vec((0..n).map(|i| v[i * n + k]).collect()))
        .collect();
    Ok(EigenDecomposition { values, vectors })
}

/// Projects a symmetric matrix onto `{A : λ_min(A) >= floor}` by clamping its
/// eigenvalues, i.e. the nearest such matrix in Frobenius norm.
///
/// Feasible inputs short-circuit: if a Cholesky factorization certifies
/// `m - floor·I` positive definite, the projection is the identity map and
/// `m` is returned unchanged (exactly). Infeasible inputs with only a few
/// eigenvalues below the floor — the common case for projected-gradient
/// iterates, where interlacing lets a rank-one step push at most one
/// eigenvalue through — are repaired from just those eigenpairs; see
/// [`lowrank_clamp_inplace`]. Only when that attempt declines does the full
/// decomposition run and the result get rebuilt as
/// `V · diag(max(λ_k, floor)) · Vᵀ`.
pub fn eig_threshold(m: &SymMatrix, floor: f64) -> Result<SymMatrix, LinalgError> {
    let mut out = m.clone();
    eig_threshold_inplace(&mut out, floor)?;
    Ok(out)
}

/// In-place [`eig_threshold`]: feasible matrices are left untouched (no
/// copies made), others are replaced by their projection.
pub fn eig_threshold_inplace(m: &mut SymMatrix, floor: f64) -> Result<(), LinalgError> {
    if !floor.is_finite() {
        return Err(LinalgError::InvalidArgument(format!("floor must be finite, got {floor}")));
    }
    if floored_psd(m, floor) {
        return Ok(());
    }
    if m.dim == 1 {
        m.data[0] = floor;
        return Ok(());
    }
    if lowrank_clamp_inplace(m, floor) {
        return Ok(());
    }
    *m = full_clamp(m, floor)?;
    Ok(())
}

/// Cholesky certificate that `λ_min(m) > floor` (strictly, up to pivot
/// tolerance) — the projection is the identity map on such matrices. The
/// shift is applied to the diagonal on the fly; nothing is allocated beyond
/// the factor itself.
fn floored_psd(m: &SymMatrix, floor: f64) -> bool {
    let n = m.dim;
    let mut l = vec![0.0; n * n];
    let shifted_diag = |j: usize| m.data[j * n + j] - floor;
    let max_abs_diag = (0..n).map(|j| shifted_diag(j).abs()).fold(0.0, f64::max);
    let pivot_floor = 1e-15 * max_abs_diag;
    for j in 0..n {
        let mut d = shifted_diag(j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= pivot_floor || !d.is_finite() {
            return false;
        }
        let dj = d.sqrt();
        l[j * n + j] = dj;
        for i in j + 1..n {
            let mut x = m.data[i * n + j];
            for k in 0..j {
                x -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = x / dj;
        }
    }
    true
}

/// Eigenvalue clamp via the full decomposition:
/// `V · diag(max(λ_k, floor)) · Vᵀ`.
fn full_clamp(m: &SymMatrix, floor: f64) -> Result<SymMatrix, LinalgError> {
    let eig = sym_eig(m)?;
    let n = m.dim;
    let clamped: Vec<f64> = eig.values.iter().map(|&l| l.max(floor)).collect();
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..n {
                s += clamped[k] * eig.vectors[k].data[i] * eig.vectors[k].data[j];
            }
            out.data[i * n + j] = s;
            out.data[j * n + i] = s;
        }
    }
    Ok(out)
}

/// Attempts the projection in low-rank form, returning `true` on success and
/// leaving `m` untouched otherwise.
///
/// When only `k` eigenvalues sit below the floor, the clamp is the rank-`k`
/// repair `A + Σᵢ (floor − μᵢ)·uᵢuᵢᵀ` over the `k` lowest eigenpairs — the
/// rest of the spectrum and its eigenvectors are unaffected by the update,
/// so nothing else needs computing. One Householder tridiagonalization feeds
/// a Sturm count (which reveals `k`), a bisection per eigenvalue, and inverse
/// iteration per eigenvector; each vector is orthogonalized against the ones
/// already found (a tight cluster would otherwise repeat a direction) and
/// verified against `m` by a dense residual check. The attempt declines —
/// and the caller falls back to the full decomposition — when `k` exceeds
/// `dim/3 + 1` or any eigenpair fails verification; `m` is modified only
/// after every pair has passed.
fn lowrank_clamp_inplace(m: &mut SymMatrix, floor: f64) -> bool {
    let tri = tridiagonalize(m);
    let k = sturm_count_below(&tri.diag, &tri.off, floor);
    if k == 0 || k > m.dim / 3 + 1 {
        return false;
    }
    let mut pairs: Vec<(f64, Vector)> = Vec::with_capacity(k);
    for idx in 0..k {
        let mu = bisect_kth_smallest(&tri.diag, &tri.off, idx, floor);
        match eigenvector_for(m, &tri, mu, &pairs) {
            Some(u) => pairs.push((mu, u)),
            None => return false,
        }
    }
    for (mu, u) in &pairs {
        m.add_outer(u, floor - mu);
    }
    true
}

/// Symmetric tridiagonal reduction `T = Qᵀ m Q` with the Householder
/// reflectors kept for back-transforming eigenvectors. `reflectors[k]` is a
/// unit vector acting on indices `k+1..n` (empty when the column needed no
/// reflection).
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    reflectors: Vec<Vec<f64>>,
}

fn tridiagonalize(m: &SymMatrix) -> Tridiagonal {
    let n = m.dim;
    // Only the lower triangle of the work array is maintained; the rank-two
    // update below never reads above the diagonal.
    let mut a = m.data.clone();
    let mut q = vec![0.0; n];
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(2));
    for k in 0..n.saturating_sub(2) {
        let tail = n - k - 1;
        let mut x = vec![0.0; tail];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = a[(k + 1 + i) * n + k];
        }
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        for t in v.iter_mut() {
            *t /= vnorm;
        }
        // Apply H = I − 2vvᵀ on both sides of the trailing block as the
        // symmetric rank-two update A ← A − vqᵀ − qvᵀ, where
        // q = 2(w − (vᵀw)v) and w = Av (matvec from the lower triangle).
        let q = &mut q[..tail];
        for (i, qi) in q.iter_mut().enumerate() {
            let row = (k + 1 + i) * n + k + 1;
            let mut s = 0.0;
            for (j, vj) in v.iter().enumerate().take(i + 1) {
                s += a[row + j] * vj;
            }
            for j in i + 1..tail {
                s += a[(k + 1 + j) * n + k + 1 + i] * v[j];
            }
            *qi = s;
        }
        let vw: f64 = v.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
        for (qi, vi) in q.iter_mut().zip(v.iter()) {
            *qi = 2.0 * (*qi - vw * vi);
        }
        for i in 0..tail {
            let row = (k + 1 + i) * n + k + 1;
            let (vi, qi) = (v[i], q[i]);
            for j in 0..=i {
                a[row + j] -= vi * q[j] + qi * v[j];
            }
        }
        a[(k + 1) * n + k] = alpha;
        for i in k + 2..n {
            a[i * n + k] = 0.0;
        }
        reflectors.push(v);
    }
    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let off: Vec<f64> = (0..n - 1).map(|i| a[(i + 1) * n + i]).collect();
    Tridiagonal { diag, off, reflectors }
}

/// Number of eigenvalues of the tridiagonal strictly below `sigma`, by the
/// Sturm-sequence pivot count.
fn sturm_count_below(diag: &[f64], off: &[f64], sigma: f64) -> usize {
    let scale = diag
        .iter()
        .map(|d| d.abs())
        .chain(off.iter().map(|e| e.abs()))
        .fold(0.0, f64::max);
    let pivmin = f64::MIN_POSITIVE.max(1e-30 * scale);
    let mut count = 0;
    let mut q = diag[0] - sigma;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if q.abs() < pivmin { if q < 0.0 { -pivmin } else { pivmin } } else { q };
        q = diag[i] - sigma - off[i - 1] * off[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `idx`-th smallest eigenvalue (0-based) of the tridiagonal by Sturm
/// bisection, given that at least `idx + 1` eigenvalues lie below `hi`.
/// Converges to full f64 resolution.
fn bisect_kth_smallest(diag: &[f64], off: &[f64], idx: usize, hi: f64) -> f64 {
    let n = diag.len();
    // Gershgorin lower bound: no eigenvalue lies below it, so the bisection
    // invariant `count(lo) ≤ idx < count(hi)` holds from the start.
    let mut lo = f64::INFINITY;
    for i in 0..n {
        let spread = if i > 0 { off[i - 1].abs() } else { 0.0 }
            + if i < n - 1 { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - spread);
    }
    let mut hi = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count_below(diag, off, mid) > idx {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvector of `m` for the (already bisected) eigenvalue `mu`: inverse
/// iteration on the tridiagonal, back-transformed through the Householder
/// reflectors, orthogonalized against the eigenvectors already `found`, and
/// verified against `m` itself. `None` when the residual check fails.
fn eigenvector_for(
    m: &SymMatrix,
    tri: &Tridiagonal,
    mu: f64,
    found: &[(f64, Vector)],
) -> Option<Vector> {
    let n = tri.diag.len();
    let scale = tri
        .diag
        .iter()
        .map(|d| d.abs())
        .chain(tri.off.iter().map(|e| e.abs()))
        .fold(0.0, f64::max)
        .max(mu.abs());
    let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * scale);
    for attempt in 0..2 {
        // Deterministic start; the retry pattern breaks accidental
        // orthogonality to the target vector.
        let mut z: Vec<f64> = (0..n)
            .map(|i| {
                if attempt == 0 {
                    1.0
                } else if i % 2 == 0 {
                    1.0 + i as f64 / n as f64
                } else {
                    -1.0
                }
            })
            .collect();
        for _ in 0..4 {
            tridiag_solve_guarded(&tri.diag, &tri.off, mu, &mut z, pivmin);
            let norm = z.iter().map(|t| t * t).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                break;
            }
            for t in z.iter_mut() {
                *t /= norm;
            }
        }
        // Back-transform: eigenvector of m is Q·z = H_0(H_1(…(H_last z))).
        for k in (0..tri.reflectors.len()).rev() {
            let v = &tri.reflectors[k];
            if v.is_empty() {
                continue;
            }
            let dot: f64 = v.iter().zip(&z[k + 1..]).map(|(a, b)| a * b).sum();
            for (j, vj) in v.iter().enumerate() {
                z[k + 1 + j] -= 2.0 * dot * vj;
            }
        }
        let mut u = Vector::from_vec(z);
        if !u.is_finite() {
            continue;
        }
        // A tight eigenvalue cluster can make inverse iteration land on a
        // direction already taken; projecting the found vectors out selects
        // a fresh member of the cluster's eigenspace instead, while leaving
        // vectors for well-separated eigenvalues essentially unchanged.
        for (_, w) in found {
            let overlap = u.dot(w);
            u.add_scaled(-overlap, w);
        }
        let norm = u.norm();
        if !(norm > 1e-4) {
            continue;
        }
        for t in u.data.iter_mut() {
            *t /= norm;
        }
        let mut residual = m.matvec(&u);
        residual.add_scaled(-mu, &u);
        if residual.norm() <= 1e-10 * scale.max(1.0) {
            return Some(u);
        }
    }
    None
}

/// Solves `(T − μI) z = rhs` in place for a symmetric tridiagonal `T`, with
/// tiny pivots replaced by ±pivmin (inverse-iteration convention: the
/// nearly-singular system amplifies the wanted eigendirection).
fn tridiag_solve_guarded(diag: &[f64], off: &[f64], mu: f64, rhs: &mut [f64], pivmin: f64) {
    let n = diag.len();
    let guard = |p: f64| if p.abs() < pivmin { if p < 0.0 { -pivmin } else { pivmin } } else { p };
    let mut d: Vec<f64> = (0..n).map(|i| diag[i] - mu).collect();
    for i in 0..n - 1 {
        d[i] = guard(d[i]);
        let factor = off[i] / d[i];
        d[i + 1] -= factor * off[i];
        rhs[i + 1] -= factor * rhs[i];
    }
    d[n - 1] = guard(d[n - 1]);
    rhs[n - 1] /= d[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - off[i] * rhs[i + 1]) / d[i];
    }
}

// ── Cholesky-based solvers ──────────────────────────────────────────────────

/// Lower-triangular Cholesky factor (flat row-major, upper half zero).
/// Fails with a `NotPositiveDefinite` error on any non-positive pivot.
pub(crate) fn cholesky(m: &SymMatrix) -> Result<Vec<f64>, LinalgError> {
    let n = m.dim;
    let mut l = vec![0.0; n * n];
    let pivot_floor = 1e-15 * m.max_abs_diag();
    for j in 0..n {
        let mut d = m.data[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= pivot_floor || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: d, row: j });
        }
        let dj = d.sqrt();
        l[j * n + j] = dj;
        for i in j + 1..n {
            let mut x = m.data[i * n + j];
            for k in 0..j {
                x -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = x / dj;
        }
    }
    Ok(l)
}

/// Solves `m x = rhs` for SPD `m` via Cholesky factorization and two
/// triangular solves.
pub fn spd_solve(m: &SymMatrix, rhs: &Vector) -> Result<Vector, LinalgError> {
    if m.dim != rhs.dim() {
        return Err(LinalgError::DimensionMismatch { expected: m.dim, actual: rhs.dim() });
    }
    let l = cholesky(m)?;
    Ok(chol_solve(&l, m.dim, rhs))
}

/// Triangular solves against an existing factor: `L y = rhs`, then `Lᵀ x = y`.
pub(crate) fn chol_solve(l: &[f64], n: usize, rhs: &Vector) -> Vector {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs.data[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Vector::from_vec(x)
}

/// Inverse of an SPD matrix, exactly symmetrized.
pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix, LinalgError> {
    let n = m.dim;
    let l = cholesky(m)?;
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    for k in 0..n {
        cols.push(chol_solve(&l, n, &Vector::basis(n, k)));
    }
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let avg = 0.5 * (cols[j].data[i] + cols[i].data[j]);
            out.data[i * n + j] = avg;
            out.data[j * n + i] = avg;
        }
    }
    Ok(out)
}

// ── Sampling ────────────────────────────────────────────────────────────────

/// Draws from the multivariate normal `N(mean, scale · precision⁻¹)`.
///
/// Works in precision form: with `precision = L Lᵀ`, a standard normal `z`
/// is mapped through `Lᵀ y = z`, giving `Cov(y) = precision⁻¹`, and the draw
/// is `mean + sqrt(scale) · y`.
pub fn sample_mvn<R: Rng>(
    mean: &Vector,
    precision: &SymMatrix,
    scale: f64,
    rng: &mut R,
) -> Result<Vector, LinalgError> {
    if precision.dim() != mean.dim() {
        return Err(LinalgError::DimensionMismatch { expected: precision.dim(), actual: mean.dim() });
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(LinalgError::InvalidArgument(format!("scale must be positive and finite, got {scale}")));
    }
    let l = cholesky(precision)?;
    Ok(sample_mvn_with_factor(mean, &l, scale, rng))
}

/// [`sample_mvn`] against a precomputed Cholesky factor of the precision.
pub(crate) fn sample_mvn_with_factor<R: Rng>(
    mean: &Vector,
    l: &[f64],
    scale: f64,
    rng: &mut R,
) -> Vector {
    let n = mean.dim();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    // Back-substitution for Lᵀ y = z.
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let root_scale = scale.sqrt();
    let mut out = mean.clone();
    for i in 0..n {
        out.data[i] += root_scale * y[i];
    }
    out
}

/// Draws from the inverse-gamma distribution with the given shape and scale.
///
/// If `Y ~ Gamma(shape, rate = scale)` then `1/Y ~ InvGamma(shape, scale)`,
/// with mean `scale / (shape - 1)` for `shape > 1`.
pub fn sample_inv_gamma<R: Rng>(shape: f64, scale: f64, rng: &mut R) -> Result<f64, LinalgError> {
    if !(shape > 0.0) || !shape.is_finite() || !(scale > 0.0) || !scale.is_finite() {
        return Err(LinalgError::InvalidArgument(format!(
            "inverse-gamma parameters must be positive and finite, got shape {shape}, scale {scale}"
        )));
    }
    let gamma = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| LinalgError::InvalidArgument(format!("gamma construction failed: {e}")))?;
    loop {
        let y: f64 = gamma.sample(rng);
        if y > 0.0 && y.is_finite() {
            return Ok(1.0 / y);
        }
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
