//! Haar-random unitaries and the closed-form one- and two-copy twirls.
//!
//! Sampling is seed + stream addressable (ChaCha20 with the stream word set),
//! so parallel workers can draw disjoint substreams without coordination.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::SectorLengths;
use crate::error::Result;
use crate::linalg::{self, CMatrix, Side};
use crate::state::DensityMatrix;

/// Addresses one reproducible sequence of Haar unitaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub d: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl SamplerConfig {
    pub fn new(d: usize, seed: u64) -> Self {
        Self { d, seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }
}

/// Draws Haar-distributed unitaries via Ginibre + QR with the phase of the
/// triangular factor's diagonal moved into `Q`.
#[derive(Clone, Debug)]
pub struct HaarSampler {
    d: usize,
    rng: ChaCha20Rng,
}

impl HaarSampler {
    pub fn new(cfg: SamplerConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(cfg.stream);
        Self { d: cfg.d, rng }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn sample(&mut self) -> CMatrix {
        sample_haar(self.d, &mut self.rng)
    }

    /// An independent local pair `(U_A, U_B)`.
    pub fn sample_pair(&mut self) -> (CMatrix, CMatrix) {
        let ua = self.sample();
        let ub = self.sample();
        (ua, ub)
    }
}

impl Iterator for HaarSampler {
    type Item = CMatrix;

    fn next(&mut self) -> Option<CMatrix> {
        Some(self.sample())
    }
}

/// One Haar unitary drawn from an arbitrary RNG.
pub fn sample_haar<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let z = linalg::ginibre(d, rng);
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let norm = rjj.norm();
        let phase = if norm > 0.0 {
            rjj / norm
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// The first unitary of the sequence addressed by `cfg`.
pub fn haar_unitary(cfg: SamplerConfig) -> CMatrix {
    HaarSampler::new(cfg).sample()
}

/// `Λ₁(X) = ∫ dU U X U† = tr[X]/D · 𝟙`.
pub fn twirl1(x: &CMatrix) -> CMatrix {
    let n = x.nrows();
    CMatrix::identity(n, n) * (linalg::trace(x) / n as f64)
}

/// `Λ₂(X) = ∫ dU U^{⊗2} X U^{†⊗2}` on `C^D ⊗ C^D`.
pub fn twirl2(x: &CMatrix) -> Result<CMatrix> {
    let dd = linalg::local_dim_of(x)?;
    let big_d = dd as f64;
    let s = linalg::swap_operator(dd);
    let tr_x = linalg::trace(x);
    let tr_sx = linalg::trace_product(&s, x);
    let pref = 1.0 / (big_d * big_d - 1.0);
    let id_coeff = (tr_x - tr_sx / big_d) * pref;
    let s_coeff = (tr_sx - tr_x / big_d) * pref;
    Ok(CMatrix::identity(dd * dd, dd * dd) * id_coeff + s * s_coeff)
}

/// Closed form of `Φ(ρ) = ∫ dU_A dU_B (U_A⊗U_B)^{⊗2} ρ^{⊗2} (·)†` on the
/// doubled space `A B A' B'`.
pub fn phi_map(rho: &DensityMatrix, d: usize) -> Result<CMatrix> {
    let s = SectorLengths::of(rho, d)?;
    Ok(phi_from_sector_lengths(&s, d))
}

/// `Φ` depends on the state only through `(r_A², r_B², t²)`.
pub fn phi_from_sector_lengths(s: &SectorLengths, d: usize) -> CMatrix {
    let n = d * d * d * d;
    let df = d as f64;
    let id = CMatrix::identity(n, n);
    // dS_X − 𝟙 on the doubled space
    let ka = linalg::copy_swap(d, Side::A).scale(df) - &id;
    let kb = linalg::copy_swap(d, Side::B).scale(df) - &id;
    let m = df * df - 1.0;
    let inner = ka.scale(s.r_a2) + kb.scale(s.r_b2) + (&ka * &kb).scale(s.t2 / m);
    (id + inner.unscale(m)).unscale(df.powi(4))
}
