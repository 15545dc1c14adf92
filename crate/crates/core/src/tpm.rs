//! Noisy two-point energy measurements around a local random unitary.
//!
//! The first and second measurements use the POVMs
//! `P_i = ε Π_i + (1−ε)/d 𝟙` with the von Neumann–Lüders update, and an
//! outcome pair is assigned the presumed work `e_ij − e_kl`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::battery::{haar_covariance, variance_from_sectors, BatteryHamiltonian};
use crate::bloch::{bloch_decompose_with, gell_mann_basis, BlochForm, HermitianBasis, SectorLengths};
use crate::error::{Error, Result};
use crate::haar::SamplerConfig;
use crate::linalg::{self, CMatrix, Side};
use crate::spectral::SpectralDecomposition;
use crate::state::DensityMatrix;
use crate::stats::{sample_moments, WorkStatistics};

/// Branches whose probability is at or below this are skipped.
const BRANCH_FLOOR: f64 = 1e-300;

fn check_epsilon(name: &'static str, eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::OutOfRange {
            name,
            value: eps,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// `(f_ε, g_ε)` with `√P_i = f_ε Π_i + g_ε 𝟙`.
pub fn root_coefficients(eps: f64, d: usize) -> (f64, f64) {
    let df = d as f64;
    let g = ((1.0 - eps) / df).sqrt();
    let f = (eps + (1.0 - eps) / df).sqrt() - g;
    (f, g)
}

/// A noisy rank-one energy measurement on one side.
#[derive(Clone, Debug)]
pub struct NoisyPovm {
    pub epsilon: f64,
    pub f: f64,
    pub g: f64,
    pub elements: Vec<CMatrix>,
    pub roots: Vec<CMatrix>,
}

impl NoisyPovm {
    pub fn d(&self) -> usize {
        self.elements.len()
    }

    /// Heisenberg-picture elements `U† P_i U`.
    pub fn rotated(&self, u: &CMatrix) -> Vec<CMatrix> {
        let ud = u.adjoint();
        self.elements.iter().map(|p| &ud * p * u).collect()
    }
}

pub fn noisy_povm(spec: &SpectralDecomposition, side: Side, epsilon: f64) -> Result<NoisyPovm> {
    check_epsilon("epsilon", epsilon)?;
    let d = spec.d;
    let (f, g) = root_coefficients(epsilon, d);
    let id = linalg::identity(d);
    let projectors = spec.projectors(side);
    Ok(NoisyPovm {
        epsilon,
        f,
        g,
        elements: projectors
            .iter()
            .map(|p| p.scale(epsilon) + id.scale((1.0 - epsilon) / d as f64))
            .collect(),
        roots: projectors.iter().map(|p| p.scale(f) + id.scale(g)).collect(),
    })
}

/// Labels `e_ij` with `H_D = Σ e_ij P_i^A⊗P_j^B`.
pub fn energy_labels(spec: &SpectralDecomposition, eps_a: f64, eps_b: f64) -> Result<DMatrix<f64>> {
    check_epsilon("eps_a", eps_a)?;
    check_epsilon("eps_b", eps_b)?;
    if eps_a == 0.0 || eps_b == 0.0 {
        return Err(Error::DivergentLabels);
    }
    let d = spec.d;
    let df = d as f64;
    let shift = (1.0 - eps_a) / (df * eps_a) * spec.trace_a + (1.0 - eps_b) / (df * eps_b) * spec.trace_b;
    Ok(DMatrix::from_fn(d, d, |i, j| {
        spec.energies_a[i] / eps_a + spec.energies_b[j] / eps_b
            + spec.g * spec.diag_interaction[(i, j)] / (eps_a * eps_b)
            - shift
    }))
}

/// Exact per-unitary simulation of the protocol for a fixed state.
#[derive(Clone, Debug)]
pub struct TpmProtocol {
    d: usize,
    povm_a: NoisyPovm,
    povm_b: NoisyPovm,
    labels: DMatrix<f64>,
    /// `m_ij = tr[P_i⊗P_j ρ]`.
    first: DMatrix<f64>,
    /// Normalised post-measurement states `σ_ij` (absent for empty branches).
    branches: Vec<Option<CMatrix>>,
}

impl TpmProtocol {
    pub fn new(rho: &DensityMatrix, spec: &SpectralDecomposition, eps_a: f64, eps_b: f64) -> Result<Self> {
        let d = spec.d;
        if rho.dim() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: rho.dim(),
            });
        }
        let labels = energy_labels(spec, eps_a, eps_b)?;
        let povm_a = noisy_povm(spec, Side::A, eps_a)?;
        let povm_b = noisy_povm(spec, Side::B, eps_b)?;
        let mut first = DMatrix::zeros(d, d);
        let mut branches = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let k = linalg::kron(&povm_a.roots[i], &povm_b.roots[j]);
                let post = &k * rho.matrix() * &k;
                let m = linalg::trace(&post).re;
                first[(i, j)] = m;
                branches.push((m > BRANCH_FLOOR).then(|| post.unscale(m)));
            }
        }
        Ok(Self {
            d,
            povm_a,
            povm_b,
            labels,
            first,
            branches,
        })
    }

    pub fn labels(&self) -> &DMatrix<f64> {
        &self.labels
    }

    pub fn first_probabilities(&self) -> &DMatrix<f64> {
        &self.first
    }

    fn second(&self, sigma: &CMatrix, qa: &[CMatrix], qb: &[CMatrix]) -> DMatrix<f64> {
        let d = self.d;
        let mut out = DMatrix::zeros(d, d);
        for (k, q) in qa.iter().enumerate() {
            let reduced = linalg::contract_a(sigma, q, d);
            for (l, r) in qb.iter().enumerate() {
                out[(k, l)] = linalg::trace_product(r, &reduced).re;
            }
        }
        out
    }

    /// `m_{kl|ij}` after the rotation, or `None` for an empty branch.
    pub fn conditional(&self, i: usize, j: usize, ua: &CMatrix, ub: &CMatrix) -> Option<DMatrix<f64>> {
        let sigma = self.branches[i * self.d + j].as_ref()?;
        Some(self.second(sigma, &self.povm_a.rotated(ua), &self.povm_b.rotated(ub)))
    }

    /// `W_TPM(U) = Σ m_ij m_{kl|ij} (e_ij − e_kl)`.
    pub fn run(&self, ua: &CMatrix, ub: &CMatrix) -> f64 {
        let qa = self.povm_a.rotated(ua);
        let qb = self.povm_b.rotated(ub);
        let mut w = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                let Some(sigma) = &self.branches[i * self.d + j] else {
                    continue;
                };
                let cond = self.second(sigma, &qa, &qb);
                let e_ij = self.labels[(i, j)];
                let branch: f64 = cond
                    .iter()
                    .zip(self.labels.iter())
                    .map(|(m, e)| m * (e_ij - e))
                    .sum();
                w += self.first[(i, j)] * branch;
            }
        }
        w
    }

    /// Average presumed work over `shots` sampled outcome quadruples.
    /// Only for illustrating finite-statistics noise.
    pub fn run_shots<R: Rng + ?Sized>(&self, ua: &CMatrix, ub: &CMatrix, shots: usize, rng: &mut R) -> f64 {
        let d = self.d;
        let draw = |probs: &DMatrix<f64>, rng: &mut R| -> usize {
            let total: f64 = probs.iter().sum();
            let mut x = rng.random::<f64>() * total;
            for (idx, p) in probs.iter().enumerate() {
                x -= p;
                if x <= 0.0 {
                    return idx;
                }
            }
            probs.len() - 1
        };
        let qa = self.povm_a.rotated(ua);
        let qb = self.povm_b.rotated(ub);
        let conds: Vec<Option<DMatrix<f64>>> = self
            .branches
            .iter()
            .map(|b| b.as_ref().map(|s| self.second(s, &qa, &qb)))
            .collect();
        let mut total = 0.0;
        for _ in 0..shots {
            // column-major index: idx = i + d j
            let idx = draw(&self.first, rng);
            let (i, j) = (idx % d, idx / d);
            let cond = conds[i * d + j].as_ref().expect("sampled branch has weight");
            let next = draw(cond, rng);
            total += self.labels[(i, j)] - self.labels[(next % d, next / d)];
        }
        total / shots.max(1) as f64
    }
}

/// Single-unitary convenience wrapper around [`TpmProtocol`].
pub fn tpm_run(
    rho: &DensityMatrix,
    spec: &SpectralDecomposition,
    eps_a: f64,
    eps_b: f64,
    ua: &CMatrix,
    ub: &CMatrix,
) -> Result<f64> {
    linalg::check_square(ua, spec.d)?;
    linalg::check_square(ub, spec.d)?;
    Ok(TpmProtocol::new(rho, spec, eps_a, eps_b)?.run(ua, ub))
}

pub fn mc_tpm_statistics(
    rho: &DensityMatrix,
    spec: &SpectralDecomposition,
    eps_a: f64,
    eps_b: f64,
    n: usize,
    cfg: SamplerConfig,
) -> Result<WorkStatistics> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let protocol = TpmProtocol::new(rho, spec, eps_a, eps_b)?;
    let cfg = SamplerConfig { d: spec.d, ..cfg };
    let m = sample_moments(n, cfg, |s| {
        let (ua, ub) = s.sample_pair();
        protocol.run(&ua, &ub)
    });
    Ok(WorkStatistics::from_moments(&m))
}

/// Weight functions of the noisy protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TpmWeights {
    pub eps_a: f64,
    pub eps_b: f64,
    pub f_a: f64,
    pub g_a: f64,
    pub f_b: f64,
    pub g_b: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_ab: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub gamma_ab: f64,
    pub n0: f64,
    pub n1: f64,
    pub n_noisy: f64,
}

impl TpmWeights {
    /// `f_A² f_B²`, the weight of the fully dephased state.
    pub fn ff(&self) -> f64 {
        self.f_a * self.f_a * self.f_b * self.f_b
    }
}

pub fn tpm_weights(eps_a: f64, eps_b: f64, d: usize) -> Result<TpmWeights> {
    check_epsilon("eps_a", eps_a)?;
    check_epsilon("eps_b", eps_b)?;
    let (f_a, g_a) = root_coefficients(eps_a, d);
    let (f_b, g_b) = root_coefficients(eps_b, d);
    // d g² = 1 − ε, written out so that c = 1 exactly at ε = 0
    let c_a = 2.0 * f_a * g_a + (1.0 - eps_a);
    let c_b = 2.0 * f_b * g_b + (1.0 - eps_b);
    let ff = f_a * f_a * f_b * f_b;
    let kappa_a = f_a * f_a * c_b;
    let kappa_b = f_b * f_b * c_a;
    // κ_A κ_B / (f_A² f_B²) without the 0/0 at ε = 0
    let kappa_ab = c_a * c_b;
    let k_sum = kappa_a + kappa_b + kappa_ab;
    Ok(TpmWeights {
        eps_a,
        eps_b,
        f_a,
        g_a,
        f_b,
        g_b,
        kappa_a,
        kappa_b,
        kappa_ab,
        gamma_a: ff * k_sum + kappa_a * (kappa_b + kappa_ab),
        gamma_b: ff * k_sum + kappa_b * (kappa_a + kappa_ab),
        gamma_ab: ff * k_sum + kappa_a * kappa_b,
        n0: kappa_ab * kappa_ab,
        n1: ff * ff + kappa_a * kappa_a + kappa_b * kappa_b,
        n_noisy: 2.0 * (ff * k_sum + kappa_a * kappa_b + kappa_a * kappa_ab + kappa_b * kappa_ab),
    })
}

/// `ζ_ab = Σ_i tr(Π_i λ_a Π_i λ_b)/d`: the dephasing channel in Bloch
/// coordinates (a projector).
pub fn zeta_matrix(projectors: &[CMatrix], basis: &HermitianBasis) -> DMatrix<f64> {
    let n = basis.len();
    let d = basis.d() as f64;
    let dephased: Vec<CMatrix> = basis
        .matrices()
        .iter()
        .map(|l| projectors.iter().map(|p| p * l * p).sum())
        .collect();
    DMatrix::from_fn(n, n, |a, b| linalg::trace_product(&dephased[a], basis.get(b)).re / d)
}

/// Energy-basis populations and dephasing matrices of a state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TpmSpectralStats {
    pub p: DMatrix<f64>,
    pub p_a: DVector<f64>,
    pub p_b: DVector<f64>,
    pub p_ab2: f64,
    pub p_a2: f64,
    pub p_b2: f64,
    pub zeta_a: DMatrix<f64>,
    pub zeta_b: DMatrix<f64>,
    /// `Σ t_ab t_cb ζ^A_ac`.
    pub zeta_a_contraction: f64,
    /// `Σ t_ab t_ac ζ^B_bc`.
    pub zeta_b_contraction: f64,
    /// `Σ t_ab t_cd ζ^A_ac ζ^B_bd`.
    pub zeta_closing: f64,
}

impl TpmSpectralStats {
    /// `d² p_AB² − d p_A² − d p_B² + 1`.
    pub fn dephased_t2(&self, d: usize) -> f64 {
        let df = d as f64;
        df * df * self.p_ab2 - df * self.p_a2 - df * self.p_b2 + 1.0
    }
}

pub fn tpm_spectral_stats(rho: &DensityMatrix, spec: &SpectralDecomposition) -> Result<TpmSpectralStats> {
    let basis = gell_mann_basis(spec.d)?;
    let bloch = bloch_decompose_with(rho.matrix(), &basis)?;
    Ok(spectral_stats_with(rho, spec, &basis, &bloch))
}

fn spectral_stats_with(
    rho: &DensityMatrix,
    spec: &SpectralDecomposition,
    basis: &HermitianBasis,
    bloch: &BlochForm,
) -> TpmSpectralStats {
    let d = spec.d;
    let p = DMatrix::from_fn(d, d, |i, j| {
        linalg::trace_with_product(rho.matrix(), &spec.projectors_a[i], &spec.projectors_b[j], d).re
    });
    let p_a = DVector::from_fn(d, |i, _| p.row(i).sum());
    let p_b = DVector::from_fn(d, |j, _| p.column(j).sum());
    let zeta_a = zeta_matrix(&spec.projectors_a, basis);
    let zeta_b = zeta_matrix(&spec.projectors_b, basis);
    let t = &bloch.t;
    let zeta_a_contraction = (t.transpose() * &zeta_a * t).trace();
    let zeta_b_contraction = (t * &zeta_b * t.transpose()).trace();
    let zeta_closing = t.dot(&(&zeta_a * t * zeta_b.transpose()));
    TpmSpectralStats {
        p_ab2: p.norm_squared(),
        p_a2: p_a.norm_squared(),
        p_b2: p_b.norm_squared(),
        p,
        p_a,
        p_b,
        zeta_a,
        zeta_b,
        zeta_a_contraction,
        zeta_b_contraction,
        zeta_closing,
    }
}

/// Weighted Haar covariances between the four parts of the averaged
/// post-measurement state `χ = f_A²f_B² ξ_AB + κ_A ξ_A + κ_B ξ_B + κ_AB ρ`,
/// where `ξ_X` is `ρ` dephased on `X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XiTerms {
    pub xi_ab: f64,
    pub xi_a: f64,
    pub xi_b: f64,
    pub xi_rho: f64,
    pub xi_ab_a: f64,
    pub xi_ab_b: f64,
    pub xi_ab_rho: f64,
    pub xi_a_b: f64,
    pub xi_a_rho: f64,
    pub xi_b_rho: f64,
}

impl XiTerms {
    /// Diagonal terms plus twice the cross terms.
    pub fn total(&self) -> f64 {
        self.xi_ab
            + self.xi_a
            + self.xi_b
            + self.xi_rho
            + 2.0 * (self.xi_ab_a + self.xi_ab_b + self.xi_ab_rho + self.xi_a_b + self.xi_a_rho + self.xi_b_rho)
    }
}

fn dephase(m: &CMatrix, projectors: &[CMatrix], side: Side, d: usize) -> CMatrix {
    let id = linalg::identity(d);
    projectors
        .iter()
        .map(|p| {
            let k = match side {
                Side::A => linalg::kron(p, &id),
                Side::B => linalg::kron(&id, p),
            };
            &k * m * &k
        })
        .sum()
}

fn xi_terms_with(
    rho: &DensityMatrix,
    spec: &SpectralDecomposition,
    w: &TpmWeights,
    h_d: &BatteryHamiltonian,
    basis: &HermitianBasis,
    bloch_rho: &BlochForm,
) -> Result<XiTerms> {
    let d = spec.d;
    let xa = dephase(rho.matrix(), &spec.projectors_a, Side::A, d);
    let xb = dephase(rho.matrix(), &spec.projectors_b, Side::B, d);
    let xab = dephase(&xa, &spec.projectors_b, Side::B, d);
    let (ba, bb, bab) = (
        bloch_decompose_with(&xa, basis)?,
        bloch_decompose_with(&xb, basis)?,
        bloch_decompose_with(&xab, basis)?,
    );
    let cov = |x: &BlochForm, y: &BlochForm| haar_covariance(x, y, h_d);
    let (wab, wa, wb, wr) = (w.ff(), w.kappa_a, w.kappa_b, w.kappa_ab);
    Ok(XiTerms {
        xi_ab: wab * wab * cov(&bab, &bab),
        xi_a: wa * wa * cov(&ba, &ba),
        xi_b: wb * wb * cov(&bb, &bb),
        xi_rho: wr * wr * cov(bloch_rho, bloch_rho),
        xi_ab_a: wab * wa * cov(&bab, &ba),
        xi_ab_b: wab * wb * cov(&bab, &bb),
        xi_ab_rho: wab * wr * cov(&bab, bloch_rho),
        xi_a_b: wa * wb * cov(&ba, &bb),
        xi_a_rho: wa * wr * cov(&ba, bloch_rho),
        xi_b_rho: wb * wr * cov(&bb, bloch_rho),
    })
}

/// Closed-form mean and variance of the noisy TPM work over local Haar
/// unitaries, split by origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TpmVarianceReport {
    pub eps_a: f64,
    pub eps_b: f64,
    pub upsilon_ideal: f64,
    pub upsilon_proj: f64,
    pub upsilon_noisy: f64,
    /// `Υ_Ideal + Υ_Proj + Υ_Noisy`.
    pub var_tpm: f64,
    /// The same variance from the ten pairwise covariances of `χ`.
    pub var_tpm_xi: f64,
    /// Closed-form variance of the ideal protocol with `H_D`.
    pub var_d: f64,
    /// `Υ_Proj / n₁`; undefined when `n₁ = 0`.
    pub var_proj: Option<f64>,
    /// `Υ_Noisy / n_Noisy`; undefined when `n_Noisy = 0`.
    pub var_noisy: Option<f64>,
    /// `tr[ρH_D] − tr[H_D]/d²`.
    pub mean_tpm: f64,
    pub weights: TpmWeights,
    pub xi: XiTerms,
    pub p_ab2: f64,
    pub p_a2: f64,
    pub p_b2: f64,
    pub zeta_a_contraction: f64,
    pub zeta_b_contraction: f64,
}

/// The variance is insensitive to `tr[H_D]` (only the traceless parts of
/// `H_D` enter), so no explicit shift is needed.
pub fn tpm_variance_closed_form(
    rho: &DensityMatrix,
    spec: &SpectralDecomposition,
    eps_a: f64,
    eps_b: f64,
) -> Result<TpmVarianceReport> {
    let d = spec.d;
    if rho.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: rho.dim(),
        });
    }
    let w = tpm_weights(eps_a, eps_b, d)?;
    let basis = gell_mann_basis(d)?;
    let bloch = bloch_decompose_with(rho.matrix(), &basis)?;
    let st = spectral_stats_with(rho, spec, &basis, &bloch);
    let h_d = spec.diagonal_battery();
    let sectors = SectorLengths::of(rho, d)?;
    let (r_a2, r_b2) = (sectors.r_a2, sectors.r_b2);
    let (h_a2, h_b2, g2v2) = (h_d.h_a2(), h_d.h_b2(), h_d.g2v2());

    let df = d as f64;
    let m = df * df - 1.0;
    let da = df * st.p_a2 - 1.0;
    let db = df * st.p_b2 - 1.0;
    let dab = st.dephased_t2(d);
    let (za, zb) = (st.zeta_a_contraction, st.zeta_b_contraction);
    let ff2 = w.ff() * w.ff();
    let (ka, kb, kab) = (w.kappa_a, w.kappa_b, w.kappa_ab);

    let var_d = variance_from_sectors(&sectors, &h_d);
    let upsilon_ideal = kab * kab * var_d;
    let upsilon_proj = (((ff2 + ka * ka) * da + kb * kb * r_a2) * h_a2
        + ((ff2 + kb * kb) * db + ka * ka * r_b2) * h_b2
        + g2v2 / m * (ff2 * dab + ka * ka * za + kb * kb * zb))
        / m;
    let upsilon_noisy = 2.0 / m
        * ((w.gamma_a * da + kb * kab * r_a2) * h_a2
            + (w.gamma_b * db + ka * kab * r_b2) * h_b2
            + g2v2 / m * (w.gamma_ab * dab + ka * kab * za + kb * kab * zb));
    let xi = xi_terms_with(rho, spec, &w, &h_d, &basis, &bloch)?;
    let n = (d * d) as f64;
    Ok(TpmVarianceReport {
        eps_a,
        eps_b,
        upsilon_ideal,
        upsilon_proj,
        upsilon_noisy,
        var_tpm: upsilon_ideal + upsilon_proj + upsilon_noisy,
        var_tpm_xi: xi.total(),
        var_d,
        var_proj: (w.n1 > 0.0).then(|| upsilon_proj / w.n1),
        var_noisy: (w.n_noisy > 0.0).then(|| upsilon_noisy / w.n_noisy),
        mean_tpm: rho.expectation(&spec.h_diag) - linalg::trace(&spec.h_diag).re / n,
        weights: w,
        xi,
        p_ab2: st.p_ab2,
        p_a2: st.p_a2,
        p_b2: st.p_b2,
        zeta_a_contraction: za,
        zeta_b_contraction: zb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::IsingFamily;
    use crate::haar::HaarSampler;
    use crate::spectral::spectral_decomposition;
    use crate::state::random_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_battery(d: usize, rng: &mut ChaCha8Rng) -> BatteryHamiltonian {
        BatteryHamiltonian::new(
            linalg::random_hermitian(d, rng),
            linalg::random_hermitian(d, rng),
            linalg::random_hermitian(d * d, rng),
            0.6,
        )
        .unwrap()
    }

    #[test]
    fn povm_limits_and_roots() {
        let spec = spectral_decomposition(&BatteryHamiltonian::ising(0.5, 1.0, 0.5, 0.45));
        let sharp = noisy_povm(&spec, Side::A, 1.0).unwrap();
        for (p, pi) in sharp.elements.iter().zip(&spec.projectors_a) {
            assert!(linalg::max_abs_diff(p, pi) < 1e-15);
        }
        let blind = noisy_povm(&spec, Side::B, 0.0).unwrap();
        for p in &blind.elements {
            assert!(linalg::max_abs_diff(p, &linalg::identity(4).unscale(4.0)) < 1e-15);
        }
        for eps in [0.0, 0.13, 0.5, 0.99, 1.0] {
            let povm = noisy_povm(&spec, Side::A, eps).unwrap();
            let total: CMatrix = povm.elements.iter().sum();
            assert!(linalg::max_abs_diff(&total, &linalg::identity(4)) < 1e-12);
            for (r, p) in povm.roots.iter().zip(&povm.elements) {
                assert!(linalg::max_abs_diff(&(r * r), p) < 1e-12);
            }
            let (f, g) = (povm.f, povm.g);
            assert!((f * f + 2.0 * f * g + 4.0 * g * g - 1.0).abs() < 1e-12);
        }
        assert!(noisy_povm(&spec, Side::A, 1.5).is_err());
    }

    #[test]
    fn labels_decompose_the_diagonal_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = spectral_decomposition(&random_battery(3, &mut rng));
        let (ea, eb) = (0.3, 0.8);
        let e = energy_labels(&spec, ea, eb).unwrap();
        let pa = noisy_povm(&spec, Side::A, ea).unwrap();
        let pb = noisy_povm(&spec, Side::B, eb).unwrap();
        let mut h = CMatrix::zeros(9, 9);
        for i in 0..3 {
            for j in 0..3 {
                h += linalg::kron(&pa.elements[i], &pb.elements[j]).scale(e[(i, j)]);
            }
        }
        assert!(linalg::max_abs_diff(&h, &spec.h_diag) < 1e-12);
        let sharp = energy_labels(&spec, 1.0, 1.0).unwrap();
        assert!((sharp - &spec.joint_energies).amax() < 1e-14);
        assert!(matches!(energy_labels(&spec, 0.0, 0.5), Err(Error::DivergentLabels)));
    }

    #[test]
    fn first_measurement_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = spectral_decomposition(&random_battery(3, &mut rng));
        let rho = random_state(9, 4, &mut rng);
        let p = TpmProtocol::new(&rho, &spec, 0.4, 0.7).unwrap();
        let mean: f64 = p.first_probabilities().iter().zip(p.labels().iter()).map(|(m, e)| m * e).sum();
        assert!((mean - rho.expectation(&spec.h_diag)).abs() < 1e-12);
    }

    #[test]
    fn probabilities_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = spectral_decomposition(&random_battery(3, &mut rng));
        let rho = random_state(9, 2, &mut rng);
        let p = TpmProtocol::new(&rho, &spec, 0.6, 0.3).unwrap();
        assert!((p.first_probabilities().sum() - 1.0).abs() < 1e-12);
        let (ua, ub) = HaarSampler::new(SamplerConfig::new(3, 1)).sample_pair();
        for i in 0..3 {
            for j in 0..3 {
                let c = p.conditional(i, j, &ua, &ub).unwrap();
                assert!((c.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trivial_runs_give_zero() {
        let h = BatteryHamiltonian::ising(0.5, 1.0, 0.5, 0.45);
        let spec = spectral_decomposition(&h);
        let mm = DensityMatrix::maximally_mixed(16);
        let mut s = HaarSampler::new(SamplerConfig::new(4, 5));
        for _ in 0..3 {
            let (ua, ub) = s.sample_pair();
            assert!(tpm_run(&mm, &spec, 0.5, 0.5, &ua, &ub).unwrap().abs() < 1e-12);
        }
        // diagonal state, sharp measurements, no rotation
        let tau = IsingFamily::REFERENCE.state(0.45, 0.0).unwrap();
        let id = linalg::identity(4);
        assert!(tpm_run(&tau, &spec, 1.0, 1.0, &id, &id).unwrap().abs() < 1e-12);
    }

    /// Projective protocol by explicit enumeration of all outcome quadruples.
    fn projective_oracle(rho: &DensityMatrix, spec: &SpectralDecomposition, ua: &CMatrix, ub: &CMatrix) -> f64 {
        let d = spec.d;
        let u = linalg::kron(ua, ub);
        let mut w = 0.0;
        for i in 0..d {
            for j in 0..d {
                let pij = spec.joint_projector(i, j);
                let post = &pij * rho.matrix() * &pij;
                let m = linalg::trace(&post).re;
                if m <= 0.0 {
                    continue;
                }
                let rotated = linalg::conjugate(&u, &post.unscale(m));
                for k in 0..d {
                    for l in 0..d {
                        let q = linalg::trace_product(&spec.joint_projector(k, l), &rotated).re;
                        w += m * q * (spec.joint_energies[(i, j)] - spec.joint_energies[(k, l)]);
                    }
                }
            }
        }
        w
    }

    #[test]
    fn projective_run_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [2, 3] {
            let spec = spectral_decomposition(&random_battery(d, &mut rng));
            let rho = random_state(d * d, 3, &mut rng);
            let p = TpmProtocol::new(&rho, &spec, 1.0, 1.0).unwrap();
            let mut s = HaarSampler::new(SamplerConfig::new(d, 9));
            for _ in 0..3 {
                let (ua, ub) = s.sample_pair();
                assert!((p.run(&ua, &ub) - projective_oracle(&rho, &spec, &ua, &ub)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn run_matches_averaged_post_measurement_form() {
        // W(U) = tr[ρH_D] − tr[U χ U† H_D] with χ = Σ_ij J_ij(ρ)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = spectral_decomposition(&random_battery(3, &mut rng));
        let rho = random_state(9, 5, &mut rng);
        let (ea, eb) = (0.35, 0.8);
        let pa = noisy_povm(&spec, Side::A, ea).unwrap();
        let pb = noisy_povm(&spec, Side::B, eb).unwrap();
        let mut chi = CMatrix::zeros(9, 9);
        for ra in &pa.roots {
            for rb in &pb.roots {
                let k = linalg::kron(ra, rb);
                chi += &k * rho.matrix() * &k;
            }
        }
        let p = TpmProtocol::new(&rho, &spec, ea, eb).unwrap();
        let (ua, ub) = HaarSampler::new(SamplerConfig::new(3, 2)).sample_pair();
        let u = linalg::kron(&ua, &ub);
        let expected = rho.expectation(&spec.h_diag) - linalg::trace_product(&linalg::conjugate(&u, &chi), &spec.h_diag).re;
        assert!((p.run(&ua, &ub) - expected).abs() < 1e-12);
    }

    #[test]
    fn weights_limits_and_sum() {
        let w0 = tpm_weights(0.0, 0.0, 4).unwrap();
        assert!((w0.n0 - 1.0).abs() < 1e-15 && w0.n1.abs() < 1e-15 && w0.n_noisy.abs() < 1e-15);
        let w1 = tpm_weights(1.0, 1.0, 4).unwrap();
        assert!((w1.n1 - 1.0).abs() < 1e-15 && w1.n0 == 0.0 && w1.n_noisy == 0.0);
        for d in [2, 3, 4] {
            for i in 0..=20 {
                for j in 0..=20 {
                    let w = tpm_weights(i as f64 / 20.0, j as f64 / 20.0, d).unwrap();
                    assert!((w.n0 + w.n1 + w.n_noisy - 1.0).abs() < 1e-12);
                    for x in [w.n0, w.n1, w.n_noisy] {
                        assert!((-1e-15..=1.0 + 1e-15).contains(&x));
                    }
                }
            }
        }
    }

    #[test]
    fn zeta_is_a_projector_and_closing_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in [2, 3, 4] {
            let spec = spectral_decomposition(&random_battery(d, &mut rng));
            let rho = random_state(d * d, d, &mut rng);
            let st = tpm_spectral_stats(&rho, &spec).unwrap();
            assert!((&st.zeta_a * &st.zeta_a - &st.zeta_a).amax() < 1e-12);
            assert!((st.zeta_a.transpose() - &st.zeta_a).amax() < 1e-12);
            assert!((st.zeta_closing - st.dephased_t2(d)).abs() < 1e-10);
            let s = SectorLengths::of(&rho, d).unwrap();
            assert!(st.zeta_a_contraction <= s.t2 + 1e-12);
            assert!(st.zeta_b_contraction <= s.t2 + 1e-12);
            assert!(d as f64 * st.p_a2 - 1.0 <= s.r_a2 + 1e-12);
            assert!(st.dephased_t2(d) <= s.t2 + 1e-12);
            assert!((st.p.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_routes_agree_and_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2, 3, 4] {
            let spec = spectral_decomposition(&random_battery(d, &mut rng));
            let rho = random_state(d * d, 2, &mut rng);
            for (ea, eb) in [(0.2, 0.9), (0.5, 0.5), (1.0, 0.3), (1.0, 1.0), (0.0, 0.0)] {
                let r = tpm_variance_closed_form(&rho, &spec, ea, eb).unwrap();
                assert!((r.var_tpm - r.var_tpm_xi).abs() < 1e-10 * r.var_d.max(1e-3), "{r:?}");
                assert!(r.var_tpm <= r.var_d + 1e-12);
                let w = r.weights;
                let recomposed = w.n0 * r.var_d + r.var_proj.map_or(0.0, |v| w.n1 * v) + r.var_noisy.map_or(0.0, |v| w.n_noisy * v);
                assert!((recomposed - r.var_tpm).abs() < 1e-12);
            }
            let zero = tpm_variance_closed_form(&rho, &spec, 0.0, 0.0).unwrap();
            assert!((zero.var_tpm - zero.var_d).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_matches_closed_form_on_a_random_battery() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = spectral_decomposition(&random_battery(2, &mut rng));
        let rho = random_state(4, 2, &mut rng);
        let r = tpm_variance_closed_form(&rho, &spec, 0.4, 0.7).unwrap();
        let mc = mc_tpm_statistics(&rho, &spec, 0.4, 0.7, 20_000, SamplerConfig::new(2, 3)).unwrap();
        assert!(mc.variance_z(r.var_tpm) < 5.0, "{mc:?} vs {}", r.var_tpm);
        assert!(mc.mean_z(r.mean_tpm) < 5.0);
    }

    #[test]
    fn shots_converge_to_exact_run() {
        let fam = IsingFamily::REFERENCE;
        let spec = spectral_decomposition(&fam.battery(0.45));
        let rho = fam.state(0.45, 0.5).unwrap();
        let p = TpmProtocol::new(&rho, &spec, 0.5, 0.5).unwrap();
        let (ua, ub) = HaarSampler::new(SamplerConfig::new(4, 4)).sample_pair();
        let exact = p.run(&ua, &ub);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let approx = p.run_shots(&ua, &ub, 200_000, &mut r);
        assert!((approx - exact).abs() < 0.1, "{approx} vs {exact}");
    }
}
