//! Dense linear algebra kernel for rank-deficient least squares.
//!
//! Everything here is sized for simulation work: matrices with a few
//! hundred rows and a few dozen columns. The kernel provides exactly what
//! the retraining dynamics need —
//!
//! - `min_norm_lse`: the minimizer of ‖Xβ − Y‖₂ with smallest ℓ2 norm,
//!   i.e. the rank-truncated pseudoinverse solution;
//! - `row_space_basis` / `complement_basis`: orthonormal bases of
//!   span(x̄₁, …, x̄_τ) and of its orthogonal complement;
//! - `project`: orthogonal projection onto a subspace;
//! - `min_eigenvalue_restricted`: the smallest eigenvalue of a symmetric
//!   matrix restricted to a subspace.
//!
//! Singular values are computed by one-sided Jacobi (never forming XᵀX, so
//! rank decisions are made at full precision); eigenvalues of small
//! symmetric matrices by cyclic Jacobi. Numerical rank uses a relative
//! cutoff: singular values below `rel_tol` × (largest singular value) are
//! treated as zero, `rel_tol` = 1e-10 by default.
//!
//! Bases follow a fixed sign convention — the first entry of each vector
//! with absolute value above 1e-10 is positive — which makes complement
//! bases (and hence the tie-breaking direction built from them)
//! deterministic. All operations are pure functions; no shared state.

// The rotation kernels update paired rows/columns of one matrix in place;
// index loops are their clearest form.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Relative singular-value cutoff for numerical rank.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Orthonormality tolerance for [`Basis`] validation.
pub const ORTHO_TOL: f64 = 1e-10;

/// Entries at or below this magnitude are ignored by the sign convention.
pub const SIGN_TOL: f64 = 1e-10;

/// Maximum allowed asymmetry |M[i,j] − M[j,i]| for symmetric-matrix inputs.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Convergence threshold for Jacobi sweeps (relative off-diagonal mass).
const JACOBI_EPS: f64 = 1e-14;

/// Hard cap on Jacobi sweeps; convergence is quadratic and typically takes
/// fewer than ten sweeps at the dimensions this crate targets.
const MAX_SWEEPS: usize = 60;

// ----------------------------------------------------------------------
// vector helpers
// ----------------------------------------------------------------------

/// Dot product. Panics on length mismatch (callers validate dimensions).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

// ----------------------------------------------------------------------
// Matrix
// ----------------------------------------------------------------------

/// Dense row-major matrix of finite reals.
///
/// Houses the stacked (modified) observation rows x̄₁, …, x̄_τ as well as
/// Gram and covariance matrices. `rows == 0` is allowed (an empty history),
/// `cols` is always at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries; `entries.len()` must equal
    /// `rows * cols` and every entry must be finite.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidParameter {
                what: "matrix must have at least one column".into(),
            });
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix entries",
                expected: rows * cols,
                got: entries.len(),
            });
        }
        if !all_finite(&entries) {
            return Err(Error::NonFinite {
                what: "matrix entries",
            });
        }
        Ok(Matrix {
            rows,
            cols,
            entries,
        })
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Matrix::zeros(n, n)?;
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        Ok(m)
    }

    /// Builds a matrix from a nonempty list of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidParameter {
                what: "from_rows needs at least one row".into(),
            });
        };
        let cols = first.len();
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: cols,
                    got: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Matrix::new(rows.len(), cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = vec![0.0; self.entries.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[j * self.rows + i] = self.get(i, j);
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            entries: t,
        }
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                what: "matmul inner dimension",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols)?;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.entries[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Matrix–vector product `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                what: "matvec length",
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Gram matrix XᵀX (always `cols × cols`, symmetric by construction).
    pub fn gram(&self) -> Matrix {
        let d = self.cols;
        let mut g = vec![0.0; d * d];
        for i in 0..self.rows {
            let row = self.row(i);
            for a in 0..d {
                if row[a] == 0.0 {
                    continue;
                }
                for b in a..d {
                    g[a * d + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                g[a * d + b] = g[b * d + a];
            }
        }
        Matrix {
            rows: d,
            cols: d,
            entries: g,
        }
    }

    fn check_finite(&self, what: &'static str) -> Result<()> {
        if all_finite(&self.entries) {
            Ok(())
        } else {
            Err(Error::NonFinite { what })
        }
    }
}

// ----------------------------------------------------------------------
// Basis
// ----------------------------------------------------------------------

/// Ordered orthonormal set of d-dimensional vectors (possibly empty).
///
/// Invariants, validated at construction: pairwise dot products within
/// 1e-10 of zero, norms within 1e-10 of one, and the sign convention —
/// the first entry of each vector with |entry| > 1e-10 is positive. The
/// convention pins down complement bases (and the exploration direction
/// v = Σb/‖Σb‖ built from them) uniquely.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    ambient_dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl Basis {
    /// Validates orthonormality and the sign convention.
    pub fn new(ambient_dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    what: "basis vector",
                    expected: ambient_dim,
                    got: v.len(),
                });
            }
            if !all_finite(v) {
                return Err(Error::NonFinite {
                    what: "basis vector",
                });
            }
            let n = l2_norm(v);
            if (n - 1.0).abs() > ORTHO_TOL {
                return Err(Error::InvalidBasis {
                    reason: format!("vector {i} has norm {n}, expected 1"),
                });
            }
            match v.iter().find(|x| x.abs() > SIGN_TOL) {
                Some(x) if *x < 0.0 => {
                    return Err(Error::InvalidBasis {
                        reason: format!("vector {i} violates the sign convention"),
                    });
                }
                None => {
                    return Err(Error::InvalidBasis {
                        reason: format!("vector {i} has no entry above {SIGN_TOL:e}"),
                    });
                }
                _ => {}
            }
            for (j, w) in vectors.iter().enumerate().take(i) {
                let d = dot(v, w);
                if d.abs() > ORTHO_TOL {
                    return Err(Error::InvalidBasis {
                        reason: format!("vectors {j} and {i} have dot product {d:e}"),
                    });
                }
            }
        }
        Ok(Basis {
            ambient_dim,
            vectors,
        })
    }

    /// The empty basis (of the zero subspace) in `ambient_dim` dimensions.
    pub fn empty(ambient_dim: usize) -> Self {
        Basis {
            ambient_dim,
            vectors: Vec::new(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Number of basis vectors (= subspace dimension).
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec<f64>> {
        self.vectors.iter()
    }
}

/// Flips `v` so that its first entry with |entry| > 1e-10 is positive.
fn sign_fix(v: &mut [f64]) {
    if let Some(lead) = v.iter().find(|x| x.abs() > SIGN_TOL) {
        if *lead < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

// ----------------------------------------------------------------------
// one-sided Jacobi SVD
// ----------------------------------------------------------------------

/// Thin SVD pieces produced by one-sided Jacobi, ordered by descending
/// singular value. Column `j` of the rotated input (`au`) equals σⱼ·uⱼ, and
/// `v[j]` is the matching right singular vector, so X·v[j] = au[j].
struct JacobiSvd {
    sigma: Vec<f64>,
    /// exact column sums of squares σⱼ² (not re-squared norms, so that
    /// consistent integer-valued systems solve without rounding)
    sigma_sq: Vec<f64>,
    /// right singular vectors (length-d each)
    v: Vec<Vec<f64>>,
    /// rotated input columns (length-τ each): au[j] = σⱼ·uⱼ
    au: Vec<Vec<f64>>,
}

impl JacobiSvd {
    /// Numerical rank under a relative cutoff: σⱼ counts while
    /// σⱼ ≥ rel_tol·σ_max (a zero matrix has rank 0).
    fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.sigma
            .iter()
            .take_while(|&&s| s >= rel_tol * smax)
            .count()
    }
}

/// One-sided Jacobi SVD of a τ×d matrix: orthogonalizes the columns of a
/// working copy by plane rotations, accumulating them into V. Never forms
/// XᵀX, so small singular values keep full precision.
fn one_sided_jacobi(x: &Matrix) -> JacobiSvd {
    let (t, d) = (x.rows(), x.cols());
    // column-major working copy and accumulated right rotations
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..t).map(|i| x.get(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let app = dot(&a[p], &a[p]);
                let aqq = dot(&a[q], &a[q]);
                let apq = dot(&a[p], &a[q]);
                if apq.abs() <= JACOBI_EPS * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let tan = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + tan * tan).sqrt();
                let sin = cos * tan;
                for i in 0..t {
                    let (ap, aq) = (a[p][i], a[q][i]);
                    a[p][i] = cos * ap - sin * aq;
                    a[q][i] = sin * ap + cos * aq;
                }
                for i in 0..d {
                    let (vp, vq) = (v[p][i], v[q][i]);
                    v[p][i] = cos * vp - sin * vq;
                    v[q][i] = sin * vp + cos * vq;
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    let sq: Vec<f64> = a.iter().map(|col| dot(col, col)).collect();
    // stable descending sort keeps equal singular values in column order
    order.sort_by(|&i, &j| sq[j].partial_cmp(&sq[i]).unwrap());

    let mut sigma = Vec::with_capacity(d);
    let mut sigma_sq = Vec::with_capacity(d);
    let mut vv = Vec::with_capacity(d);
    let mut au = Vec::with_capacity(d);
    for &j in &order {
        sigma.push(sq[j].sqrt());
        sigma_sq.push(sq[j]);
        vv.push(std::mem::take(&mut v[j]));
        au.push(std::mem::take(&mut a[j]));
    }
    JacobiSvd {
        sigma,
        sigma_sq,
        v: vv,
        au,
    }
}

// ----------------------------------------------------------------------
// public operations
// ----------------------------------------------------------------------

/// Minimum-norm least-squares solution of Xβ ≈ Y — the unique minimizer of
/// ‖Xβ − Y‖₂² with smallest ℓ2 norm, equivalently the rank-truncated
/// pseudoinverse solution X⁺Y. Lies in the row space of X. Uses the default
/// rank cutoff of 1e-10.
pub fn min_norm_lse(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    min_norm_lse_with_tol(x, y, DEFAULT_REL_TOL)
}

/// [`min_norm_lse`] with an explicit relative singular-value cutoff.
pub fn min_norm_lse_with_tol(x: &Matrix, y: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            what: "least-squares right-hand side",
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::InvalidParameter {
            what: "least squares needs at least one row".into(),
        });
    }
    x.check_finite("least-squares matrix")?;
    if !all_finite(y) {
        return Err(Error::NonFinite {
            what: "least-squares right-hand side",
        });
    }

    let svd = one_sided_jacobi(x);
    let rank = svd.rank(rel_tol);
    let d = x.cols();
    let mut beta = vec![0.0; d];
    for j in 0..rank {
        // coefficient along vⱼ: (uⱼᵀY)/σⱼ = (auⱼᵀY)/σⱼ²
        let coeff = dot(&svd.au[j], y) / svd.sigma_sq[j];
        for k in 0..d {
            beta[k] += coeff * svd.v[j][k];
        }
    }
    Ok(beta)
}

/// Orthonormal basis of the row space span(x̄₁, …, x̄_τ), ordered by
/// descending singular value and sign-normalized. Deterministic for fixed
/// input. Uses the default rank cutoff of 1e-10.
pub fn row_space_basis(x: &Matrix) -> Result<Basis> {
    row_space_basis_with_tol(x, DEFAULT_REL_TOL)
}

/// [`row_space_basis`] with an explicit relative singular-value cutoff.
pub fn row_space_basis_with_tol(x: &Matrix, rel_tol: f64) -> Result<Basis> {
    if x.rows() == 0 {
        return Err(Error::InvalidParameter {
            what: "row_space_basis needs a nonempty matrix".into(),
        });
    }
    x.check_finite("row_space_basis matrix")?;
    let svd = one_sided_jacobi(x);
    let rank = svd.rank(rel_tol);
    let mut vectors = Vec::with_capacity(rank);
    for j in 0..rank {
        let mut v = svd.v[j].clone();
        sign_fix(&mut v);
        vectors.push(v);
    }
    Basis::new(x.cols(), vectors)
}

/// Orthonormal basis of the orthogonal complement of span(B) in the
/// ambient space: eigenvectors of the projector I − Σ bbᵀ for its
/// (d − |B|)-fold unit eigenvalue, sign-normalized. Deterministic.
pub fn complement_basis(b: &Basis) -> Result<Basis> {
    let d = b.ambient_dim();
    let m = d - b.len();
    if m == 0 {
        return Ok(Basis::empty(d));
    }
    // projector onto the complement: P = I − Σ bbᵀ
    let mut p = Matrix::identity(d)?;
    for v in b.iter() {
        for i in 0..d {
            for j in 0..d {
                let e = p.get(i, j) - v[i] * v[j];
                p.set(i, j, e);
            }
        }
    }
    let eig = sym_eigen(&p);
    // eigenvalues ascending: the top m (all ≈ 1) span the complement
    let mut vectors = Vec::with_capacity(m);
    for idx in (d - m..d).rev() {
        let mut v = eig.vectors[idx].clone();
        sign_fix(&mut v);
        vectors.push(v);
    }
    Basis::new(d, vectors)
}

/// Orthogonal projection of `z` onto span(B): Σ_{q∈B} (zᵀq)·q. Idempotent
/// and norm-nonincreasing; the empty basis maps everything to zero.
pub fn project(z: &[f64], b: &Basis) -> Result<Vec<f64>> {
    if z.len() != b.ambient_dim() {
        return Err(Error::DimensionMismatch {
            what: "projection input",
            expected: b.ambient_dim(),
            got: z.len(),
        });
    }
    let mut out = vec![0.0; z.len()];
    for q in b.iter() {
        let c = dot(z, q);
        for (o, qi) in out.iter_mut().zip(q) {
            *o += c * qi;
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of M restricted to span(B): the minimum eigenvalue
/// of the |B|×|B| matrix with entries bᵢᵀMbⱼ. M must be symmetric to
/// within 1e-8; B must be nonempty.
pub fn min_eigenvalue_restricted(m: &Matrix, b: &Basis) -> Result<f64> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch {
            what: "restricted eigenvalue matrix (square)",
            expected: m.rows(),
            got: m.cols(),
        });
    }
    m.check_finite("restricted eigenvalue matrix")?;
    if m.rows() != b.ambient_dim() {
        return Err(Error::DimensionMismatch {
            what: "restricted eigenvalue basis",
            expected: m.rows(),
            got: b.ambient_dim(),
        });
    }
    if b.is_empty() {
        return Err(Error::InvalidParameter {
            what: "min_eigenvalue_restricted needs a nonempty basis".into(),
        });
    }
    let mut max_asym: f64 = 0.0;
    for i in 0..m.rows() {
        for j in (i + 1)..m.cols() {
            max_asym = max_asym.max((m.get(i, j) - m.get(j, i)).abs());
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym,
        });
    }

    let k = b.len();
    let mut g = Matrix::zeros(k, k)?;
    for (i, bi) in b.iter().enumerate() {
        let mbi = m.matvec(bi)?;
        for (j, bj) in b.iter().enumerate() {
            g.set(i, j, dot(&mbi, bj));
        }
    }
    // symmetrize to clear rounding before the eigensolve
    for i in 0..k {
        for j in (i + 1)..k {
            let s = 0.5 * (g.get(i, j) + g.get(j, i));
            g.set(i, j, s);
            g.set(j, i, s);
        }
    }
    let eig = sym_eigen(&g);
    Ok(eig.values[0])
}

// ----------------------------------------------------------------------
// symmetric Jacobi eigensolver
// ----------------------------------------------------------------------

/// Eigenpairs of a symmetric matrix, ascending by eigenvalue;
/// `vectors[i]` matches `values[i]`.
pub(crate) struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigensolver for small symmetric matrices (the crate never
/// needs more than a few dozen dimensions). Accuracy ~1e-14 relative.
pub(crate) fn sym_eigen(m: &Matrix) -> SymEig {
    let n = m.rows();
    debug_assert_eq!(n, m.cols());
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    // symmetrize defensively; callers pass symmetric matrices
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = s;
            a[j][i] = s;
        }
    }
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|x| x.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p][q].abs());
            }
        }
        if off <= JACOBI_EPS * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= JACOBI_EPS * scale * 1e-2 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A ← JᵀAJ on rows/columns p, q
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row][col]).collect())
        .collect();
    SymEig { values, vectors }
}

// ----------------------------------------------------------------------
// tests
// ----------------------------------------------------------------------
