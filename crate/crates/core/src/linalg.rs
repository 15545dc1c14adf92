//! Dense complex linear algebra on bipartite `d × d` spaces.
//!
//! Index convention: the basis vector `|a⟩⊗|b⟩` sits at row `a * d + b`, which
//! matches `kron(A, B)`. The doubled two-copy space used for second moments is
//! ordered `A ⊗ B ⊗ A' ⊗ B'`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest local dimension the crate accepts.
pub const MAX_LOCAL_DIM: usize = 16;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// One half of a bipartition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

pub fn check_local_dim(d: usize) -> Result<()> {
    if (2..=MAX_LOCAL_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(d))
    }
}

pub fn check_square(m: &CMatrix, n: usize) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.nrows(),
        });
    }
    Ok(())
}

/// Infers `d` from a `d² × d²` operator.
pub fn local_dim_of(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: n,
        });
    }
    check_local_dim(d)?;
    Ok(d)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `tr[A B]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// `U X U†`.
pub fn conjugate(u: &CMatrix, x: &CMatrix) -> CMatrix {
    u * x * u.adjoint()
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_diagonal(m: &CMatrix, tol: f64) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() <= tol))
}

/// Symmetrizes `(M + M†)/2` to wash out rounding before eigensolves.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Eigenpairs of a Hermitian matrix, unsorted as returned by the solver.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitian_part(m).symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Partial trace of a `d² × d²` operator; `Side::A` traces out A and keeps B.
pub fn partial_trace(m: &CMatrix, d: usize, traced: Side) -> Result<CMatrix> {
    check_square(m, d * d)?;
    let mut out = CMatrix::zeros(d, d);
    match traced {
        Side::B => {
            for a in 0..d {
                for c in 0..d {
                    out[(a, c)] = (0..d).map(|b| m[(a * d + b, c * d + b)]).sum();
                }
            }
        }
        Side::A => {
            for b in 0..d {
                for e in 0..d {
                    out[(b, e)] = (0..d).map(|a| m[(a * d + b, a * d + e)]).sum();
                }
            }
        }
    }
    Ok(out)
}

/// Reduced operator kept on `side` (the other side is traced out).
pub fn reduced(m: &CMatrix, d: usize, side: Side) -> Result<CMatrix> {
    match side {
        Side::A => partial_trace(m, d, Side::B),
        Side::B => partial_trace(m, d, Side::A),
    }
}

/// Partial transpose on subsystem A.
pub fn partial_transpose_a(m: &CMatrix, d: usize) -> Result<CMatrix> {
    check_square(m, d * d)?;
    Ok(CMatrix::from_fn(d * d, d * d, |r, c| {
        let (a, b) = (r / d, r % d);
        let (a2, b2) = (c / d, c % d);
        m[(a2 * d + b, a * d + b2)]
    }))
}

/// SWAP on `C^d ⊗ C^d` from its permutation definition `S|a⟩|b⟩ = |b⟩|a⟩`.
pub fn swap_operator(d: usize) -> CMatrix {
    let n = d * d;
    let mut s = CMatrix::zeros(n, n);
    for a in 0..d {
        for b in 0..d {
            s[(b * d + a, a * d + b)] = ONE;
        }
    }
    s
}

/// Local SWAP on the doubled space `A B A' B'`, exchanging `X` with `X'`.
pub fn copy_swap(d: usize, side: Side) -> CMatrix {
    let n = d * d * d * d;
    let idx = |a: usize, b: usize, a2: usize, b2: usize| ((a * d + b) * d + a2) * d + b2;
    let mut s = CMatrix::zeros(n, n);
    for a in 0..d {
        for b in 0..d {
            for a2 in 0..d {
                for b2 in 0..d {
                    let to = match side {
                        Side::A => idx(a2, b, a, b2),
                        Side::B => idx(a, b2, a2, b),
                    };
                    s[(to, idx(a, b, a2, b2))] = ONE;
                }
            }
        }
    }
    s
}

/// Reorders a two-copy operator given as `(X ⊗ X') ⊗ (Y ⊗ Y')` into `X Y X' Y'`.
pub fn interleave_copies(op: &CMatrix, d: usize) -> CMatrix {
    let n = d * d * d * d;
    // source index ((a*d + a2)*d + b)*d + b2, target ((a*d + b)*d + a2)*d + b2
    let perm = |i: usize| {
        let b2 = i % d;
        let b = (i / d) % d;
        let a2 = (i / (d * d)) % d;
        let a = i / (d * d * d);
        ((a * d + b) * d + a2) * d + b2
    };
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out[(perm(r), perm(c))] = op[(r, c)];
        }
    }
    out
}

/// `tr[ρ (X ⊗ Y)]` for a `d² × d²` operator ρ and `d × d` factors.
pub fn trace_with_product(rho: &CMatrix, x: &CMatrix, y: &CMatrix, d: usize) -> Complex64 {
    let mut acc = ZERO;
    for a in 0..d {
        for b in 0..d {
            let row = a * d + b;
            for c in 0..d {
                let xca = x[(c, a)];
                if xca == ZERO {
                    continue;
                }
                for e in 0..d {
                    acc += rho[(row, c * d + e)] * xca * y[(e, b)];
                }
            }
        }
    }
    acc
}

/// `tr_A[(X ⊗ 𝟙) ρ]`, a `d × d` operator on B.
pub fn contract_a(rho: &CMatrix, x: &CMatrix, d: usize) -> CMatrix {
    let mut out = CMatrix::zeros(d, d);
    for a in 0..d {
        for c in 0..d {
            let xac = x[(a, c)];
            if xac == ZERO {
                continue;
            }
            for b in 0..d {
                for e in 0..d {
                    out[(b, e)] += xac * rho[(c * d + b, a * d + e)];
                }
            }
        }
    }
    out
}

/// Random Hermitian matrix with Gaussian entries (GUE-like), for tests and sweeps.
pub fn random_hermitian<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(n, rng);
    hermitian_part(&g)
}

/// Complex Ginibre matrix with i.i.d. entries of unit variance `E|z|² = 1`.
pub fn ginibre<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// JSON form of a complex matrix: rows of `[re, im]` pairs, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JsonMatrix(pub CMatrix);

impl Serialize for JsonMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_rows(&self.0).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JsonMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(deserializer)?;
        matrix_from_rows(&rows)
            .map(JsonMatrix)
            .map_err(serde::de::Error::custom)
    }
}

pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::MatrixFormat("empty matrix".into()));
    }
    let ncols = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::MatrixFormat(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |r, c| {
        Complex64::new(rows[r][c][0], rows[r][c][1])
    }))
}

pub fn matrix_to_json(m: &CMatrix) -> String {
    serde_json::to_string(&JsonMatrix(m.clone())).expect("matrix serialization is infallible")
}

pub fn matrix_from_json(s: &str) -> Result<CMatrix> {
    Ok(serde_json::from_str::<JsonMatrix>(s)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn swap_squares_to_identity_and_has_trace_d() {
        for d in 2..=4 {
            let s = swap_operator(d);
            assert!(max_abs_diff(&(&s * &s), &identity(d * d)) < 1e-15);
            assert!(hermiticity_error(&s) == 0.0);
            assert!((trace(&s).re - d as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn swap_exchanges_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=4 {
            let a = random_hermitian(d, &mut rng);
            let b = random_hermitian(d, &mut rng);
            let lhs = trace(&(swap_operator(d) * kron(&a, &b)));
            let rhs = trace(&(&a * &b));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product_recovers_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(3, &mut rng);
        let b = random_hermitian(3, &mut rng);
        let ab = kron(&a, &b);
        let ta = trace(&a);
        let tb = trace(&b);
        let keep_a = partial_trace(&ab, 3, Side::B).unwrap();
        let keep_b = partial_trace(&ab, 3, Side::A).unwrap();
        assert!(max_abs_diff(&keep_a, &a.map(|z| z * tb)) < 1e-12);
        assert!(max_abs_diff(&keep_b, &b.map(|z| z * ta)) < 1e-12);
    }

    #[test]
    fn partial_transpose_of_product_transposes_first_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = ginibre(2, &mut rng);
        let b = ginibre(2, &mut rng);
        let pt = partial_transpose_a(&kron(&a, &b), 2).unwrap();
        assert!(max_abs_diff(&pt, &kron(&a.transpose(), &b)) < 1e-14);
    }

    #[test]
    fn trace_with_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = ginibre(9, &mut rng);
        let x = ginibre(3, &mut rng);
        let y = ginibre(3, &mut rng);
        let dense = trace(&(&rho * kron(&x, &y)));
        assert!((trace_with_product(&rho, &x, &y, 3) - dense).norm() < 1e-12);
        let cb = contract_a(&rho, &x, 3);
        let dense_b = partial_trace(&(kron(&x, &identity(3)) * &rho), 3, Side::A).unwrap();
        assert!(max_abs_diff(&cb, &dense_b) < 1e-12);
    }

    #[test]
    fn copy_swap_matches_interleaved_swap() {
        let d = 2;
        let sa = copy_swap(d, Side::A);
        let sb = copy_swap(d, Side::B);
        let expect_a = interleave_copies(&kron(&swap_operator(d), &identity(d * d)), d);
        let expect_b = interleave_copies(&kron(&identity(d * d), &swap_operator(d)), d);
        assert!(max_abs_diff(&sa, &expect_a) < 1e-15);
        assert!(max_abs_diff(&sb, &expect_b) < 1e-15);
    }

    #[test]
    fn json_rows_reject_ragged_input() {
        assert!(matrix_from_json("[[[1,0],[0,0]],[[0,0]]]").is_err());
        let m = matrix_from_json("[[[1,0],[0,-1]],[[0,1],[2,0]]]").unwrap();
        assert_eq!(m[(0, 1)], Complex64::new(0.0, -1.0));
        assert_eq!(matrix_from_json(&matrix_to_json(&m)).unwrap(), m);
    }

    #[test]
    fn local_dim_rejects_non_square_sizes() {
        assert!(local_dim_of(&identity(6)).is_err());
        assert_eq!(local_dim_of(&identity(9)).unwrap(), 3);
        assert!(check_local_dim(1).is_err());
        assert!(check_local_dim(17).is_err());
    }
}
