//! Generalized Gell-Mann basis and Bloch decompositions of bipartite operators.
//!
//! The basis is normalized as `tr[λ_i λ_j] = d δ_ij`, so for `d = 2` it is
//! exactly `(X, Y, Z)`. With this normalization a state reads
//!
//! ```text
//! ρ = (𝟙 + Σ r^A_i λ_i⊗𝟙 + Σ r^B_j 𝟙⊗λ_j + Σ t_ij λ_i⊗λ_j) / d²
//! ```
//!
//! and the coefficients are plain expectation values, `r^A_i = tr[ρ λ_i⊗𝟙]`
//! and `t_ij = tr[ρ λ_i⊗λ_j]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, CMatrix, Side};
use crate::state::DensityMatrix;

/// Traceless Hermitian basis `λ_1 … λ_{d²-1}` with `tr[λ_i λ_j] = d δ_ij`.
///
/// Ordering: symmetric off-diagonal pairs `(j, k)`, `j < k` row-major, then
/// the antisymmetric pairs in the same order, then the `d - 1` diagonal
/// generators. For `d = 2` this gives `X, Y, Z`.
#[derive(Clone, Debug)]
pub struct HermitianBasis {
    d: usize,
    matrices: Vec<CMatrix>,
}

pub fn gell_mann_basis(d: usize) -> Result<HermitianBasis> {
    linalg::check_local_dim(d)?;
    let scale = (d as f64 / 2.0).sqrt();
    let mut matrices = Vec::with_capacity(d * d - 1);
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = Complex64::new(scale, 0.0);
            m[(k, j)] = Complex64::new(scale, 0.0);
            matrices.push(m);
        }
    }
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = Complex64::new(0.0, -scale);
            m[(k, j)] = Complex64::new(0.0, scale);
            matrices.push(m);
        }
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt() * scale;
        let mut m = CMatrix::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = Complex64::new(norm, 0.0);
        }
        m[(l, l)] = Complex64::new(-(l as f64) * norm, 0.0);
        matrices.push(m);
    }
    Ok(HermitianBasis { d, matrices })
}

impl HermitianBasis {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn get(&self, i: usize) -> &CMatrix {
        &self.matrices[i]
    }

    /// `G_ij = tr[λ_i λ_j]`, which equals `d·𝟙`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            linalg::trace_product(&self.matrices[i], &self.matrices[j]).re
        })
    }

    /// Expansion `H = h_0 𝟙 + Σ h_i λ_i` of a local operator: returns `(h_0, h)`.
    pub fn local_coefficients(&self, h: &CMatrix) -> (f64, DVector<f64>) {
        let d = self.d as f64;
        let h0 = linalg::trace(h).re / d;
        let coeffs = DVector::from_iterator(
            self.len(),
            self.matrices
                .iter()
                .map(|l| linalg::trace_product(h, l).re / d),
        );
        (h0, coeffs)
    }

    pub fn local_operator(&self, h0: f64, coeffs: &DVector<f64>) -> CMatrix {
        let mut out = CMatrix::identity(self.d, self.d).scale(h0);
        for (l, c) in self.matrices.iter().zip(coeffs.iter()) {
            out += l.scale(*c);
        }
        out
    }

    /// Expansion of a `d² × d²` Hermitian operator in products `λ_μ ⊗ λ_ν`
    /// (with `λ_0 = 𝟙`).
    pub fn bipartite_coefficients(&self, op: &CMatrix) -> Result<BipartiteCoefficients> {
        let d = self.d;
        linalg::check_square(op, d * d)?;
        let norm = (d * d) as f64;
        let n = self.len();
        let identity = linalg::trace(op).re / norm;
        let op_b = linalg::partial_trace(op, d, Side::A)?;
        let op_a = linalg::partial_trace(op, d, Side::B)?;
        let local_a = DVector::from_iterator(
            n,
            self.matrices
                .iter()
                .map(|l| linalg::trace_product(&op_a, l).re / norm),
        );
        let local_b = DVector::from_iterator(
            n,
            self.matrices
                .iter()
                .map(|l| linalg::trace_product(&op_b, l).re / norm),
        );
        let mut corr = DMatrix::zeros(n, n);
        for (i, li) in self.matrices.iter().enumerate() {
            let reduced = linalg::contract_a(op, li, d);
            for (j, lj) in self.matrices.iter().enumerate() {
                corr[(i, j)] = linalg::trace_product(lj, &reduced).re / norm;
            }
        }
        Ok(BipartiteCoefficients {
            identity,
            local_a,
            local_b,
            corr,
        })
    }

    pub fn bipartite_operator(&self, c: &BipartiteCoefficients) -> CMatrix {
        let d = self.d;
        let id = CMatrix::identity(d, d);
        let mut out = CMatrix::identity(d * d, d * d).scale(c.identity);
        for (i, li) in self.matrices.iter().enumerate() {
            if c.local_a[i] != 0.0 {
                out += linalg::kron(li, &id).scale(c.local_a[i]);
            }
            if c.local_b[i] != 0.0 {
                out += linalg::kron(&id, li).scale(c.local_b[i]);
            }
            for (j, lj) in self.matrices.iter().enumerate() {
                if c.corr[(i, j)] != 0.0 {
                    out += linalg::kron(li, lj).scale(c.corr[(i, j)]);
                }
            }
        }
        out
    }
}

/// `op = c 𝟙 + Σ a_i λ_i⊗𝟙 + Σ b_j 𝟙⊗λ_j + Σ v_ij λ_i⊗λ_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteCoefficients {
    pub identity: f64,
    pub local_a: DVector<f64>,
    pub local_b: DVector<f64>,
    pub corr: DMatrix<f64>,
}

/// Bloch vectors and correlation matrix of a bipartite state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlochForm {
    pub d: usize,
    pub r_a: DVector<f64>,
    pub r_b: DVector<f64>,
    pub t: DMatrix<f64>,
}

impl BlochForm {
    pub fn r_a2(&self) -> f64 {
        self.r_a.norm_squared()
    }

    pub fn r_b2(&self) -> f64 {
        self.r_b.norm_squared()
    }

    pub fn t2(&self) -> f64 {
        self.t.norm_squared()
    }

    pub fn sector_lengths(&self) -> SectorLengths {
        SectorLengths {
            r_a2: self.r_a2(),
            r_b2: self.r_b2(),
            t2: self.t2(),
        }
    }

    /// `tr[ρ²] = (1 + r_A² + r_B² + t²)/d²`.
    pub fn purity(&self) -> f64 {
        self.sector_lengths().purity(self.d)
    }

    pub fn reconstruct(&self, basis: &HermitianBasis) -> CMatrix {
        let norm = (self.d * self.d) as f64;
        basis.bipartite_operator(&BipartiteCoefficients {
            identity: 1.0 / norm,
            local_a: self.r_a.unscale(norm),
            local_b: self.r_b.unscale(norm),
            corr: self.t.unscale(norm),
        })
    }
}

pub fn bloch_decompose(rho: &DensityMatrix, d: usize) -> Result<BlochForm> {
    let basis = gell_mann_basis(d)?;
    bloch_decompose_with(rho.matrix(), &basis)
}

/// Bloch coefficients of any `d² × d²` operator (trace not required to be one).
pub fn bloch_decompose_with(op: &CMatrix, basis: &HermitianBasis) -> Result<BlochForm> {
    let c = basis.bipartite_coefficients(op)?;
    let norm = (basis.d() * basis.d()) as f64;
    Ok(BlochForm {
        d: basis.d(),
        r_a: c.local_a.scale(norm),
        r_b: c.local_b.scale(norm),
        t: c.corr.scale(norm),
    })
}

/// The local-unitary invariants `r_A²`, `r_B²`, `t²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SectorLengths {
    pub r_a2: f64,
    pub r_b2: f64,
    pub t2: f64,
}

impl SectorLengths {
    /// Sector lengths from the global and marginal purities, without forming
    /// the Bloch vectors.
    pub fn of(rho: &DensityMatrix, d: usize) -> Result<Self> {
        let m = rho.matrix();
        linalg::check_square(m, d * d)?;
        let rho_a = linalg::partial_trace(m, d, Side::B)?;
        let rho_b = linalg::partial_trace(m, d, Side::A)?;
        let df = d as f64;
        let r_a2 = df * linalg::trace_product(&rho_a, &rho_a).re - 1.0;
        let r_b2 = df * linalg::trace_product(&rho_b, &rho_b).re - 1.0;
        let t2 = df * df * rho.purity() - 1.0 - r_a2 - r_b2;
        Ok(Self { r_a2, r_b2, t2 })
    }

    pub fn purity(&self, d: usize) -> f64 {
        (1.0 + self.r_a2 + self.r_b2 + self.t2) / (d * d) as f64
    }
}

/// `tr[ρ²]` computed directly.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.purity()
}
