//! Two-copy energy coincidence measurements.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::battery::{variance_from_sectors, BatteryHamiltonian};
use crate::bloch::SectorLengths;
use crate::error::{Error, Result};
use crate::haar::SamplerConfig;
use crate::linalg::{self, CMatrix, Side};
use crate::spectral::SpectralDecomposition;
use crate::state::DensityMatrix;
use crate::stats::{sample_moments, Estimate};
use crate::tpm::noisy_povm;

/// `P_XX' = Σ_i P_i⊗P_i = ε² Σ_i Π_i⊗Π_i + (1−ε²)/d 𝟙` on `X X'`.
pub fn coincidence_povm(spec: &SpectralDecomposition, side: Side, epsilon: f64) -> Result<CMatrix> {
    let povm = noisy_povm(spec, side, epsilon)?;
    Ok(povm.elements.iter().map(|p| linalg::kron(p, p)).sum())
}

/// Haar-averaged coincidence probability from the sector lengths.
pub fn avg_coincidence_from_sectors(s: &SectorLengths, d: usize, eps_a: f64, eps_b: f64) -> f64 {
    let df = d as f64;
    let (a2, b2) = (eps_a * eps_a, eps_b * eps_b);
    (1.0 + (s.r_a2 * a2 + s.r_b2 * b2) / (df + 1.0) + s.t2 * a2 * b2 / ((df + 1.0) * (df + 1.0))) / (df * df)
}

pub fn avg_coincidence_closed(rho: &DensityMatrix, d: usize, eps_a: f64, eps_b: f64) -> Result<f64> {
    for (name, e) in [("eps_a", eps_a), ("eps_b", eps_b)] {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::OutOfRange {
                name,
                value: e,
                range: "[0, 1]",
            });
        }
    }
    Ok(avg_coincidence_from_sectors(&SectorLengths::of(rho, d)?, d, eps_a, eps_b))
}

/// Coincidence probability for one rotation, evaluated from the
/// single-copy outcome distribution: `C(U) = Σ_ij m'_ij²`.
#[derive(Clone, Debug)]
pub struct CoincidenceEvaluator {
    d: usize,
    rho: CMatrix,
    povm_a: Vec<CMatrix>,
    povm_b: Vec<CMatrix>,
}

impl CoincidenceEvaluator {
    pub fn new(rho: &DensityMatrix, spec: &SpectralDecomposition, eps_a: f64, eps_b: f64) -> Result<Self> {
        let d = spec.d;
        if rho.dim() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: rho.dim(),
            });
        }
        Ok(Self {
            d,
            rho: rho.matrix().clone(),
            povm_a: noisy_povm(spec, Side::A, eps_a)?.elements,
            povm_b: noisy_povm(spec, Side::B, eps_b)?.elements,
        })
    }

    /// `m'_ij = tr[P_i⊗P_j (U_A⊗U_B)ρ(U_A⊗U_B)†]`.
    pub fn outcome_probabilities(&self, ua: &CMatrix, ub: &CMatrix) -> DMatrix<f64> {
        let d = self.d;
        let (uad, ubd) = (ua.adjoint(), ub.adjoint());
        let mut m = DMatrix::zeros(d, d);
        for (i, p) in self.povm_a.iter().enumerate() {
            let reduced = linalg::contract_a(&self.rho, &(&uad * p * ua), d);
            for (j, q) in self.povm_b.iter().enumerate() {
                m[(i, j)] = linalg::trace_product(&(&ubd * q * ub), &reduced).re;
            }
        }
        m
    }

    pub fn coincidence(&self, ua: &CMatrix, ub: &CMatrix) -> f64 {
        self.outcome_probabilities(ua, ub).norm_squared()
    }
}

/// Sample mean of `C(U)` over `n` Haar pairs, both copies rotated alike.
pub fn mc_coincidence(
    rho: &DensityMatrix,
    spec: &SpectralDecomposition,
    eps_a: f64,
    eps_b: f64,
    n: usize,
    cfg: SamplerConfig,
) -> Result<Estimate> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let eval = CoincidenceEvaluator::new(rho, spec, eps_a, eps_b)?;
    let cfg = SamplerConfig { d: spec.d, ..cfg };
    let m = sample_moments(n, cfg, |s| {
        let (ua, ub) = s.sample_pair();
        eval.coincidence(&ua, &ub)
    });
    Ok(Estimate::from_moments(&m))
}

/// Both sides of the coincidence bound on the work variance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoincidenceReport {
    pub eps_a: f64,
    pub eps_b: f64,
    pub cbar_closed: f64,
    pub cbar_mc: Option<Estimate>,
    pub variance: f64,
    pub t2: f64,
    /// `c` from `g²v² = (d−1)(h²ε² + c)`.
    pub c_term: f64,
    pub h2_min: f64,
    pub obs4_lhs: f64,
    pub obs4_rhs: f64,
}

impl CoincidenceReport {
    /// `rhs − lhs`; non-negative when the bound holds.
    pub fn slack(&self) -> f64 {
        self.obs4_rhs - self.obs4_lhs
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.slack() >= -tol
    }
}

/// `C̄ ≤ (1/d²)[1 + (d−1)ε²/h² Var + t² ε² (|c|−c) / (2(d+1)² h²)]`
/// with `h² = min(h_A², h_B²)`, for symmetric noise `ε`.
pub fn obs4_bound(rho: &DensityMatrix, h: &BatteryHamiltonian, epsilon: f64) -> Result<CoincidenceReport> {
    let d = h.d();
    let h2 = h.h_a2().min(h.h_b2());
    if !(h2 > 0.0) {
        return Err(Error::UndefinedBound(h2));
    }
    let df = d as f64;
    let lhs = avg_coincidence_closed(rho, d, epsilon, epsilon)?;
    let s = SectorLengths::of(rho, d)?;
    let variance = variance_from_sectors(&s, h);
    let e2 = epsilon * epsilon;
    let c = h.g2v2() / (df - 1.0) - h2 * e2;
    let rhs = (1.0
        + (df - 1.0) * e2 / h2 * variance
        + s.t2 * e2 * (c.abs() - c) / (2.0 * (df + 1.0) * (df + 1.0) * h2))
        / (df * df);
    Ok(CoincidenceReport {
        eps_a: epsilon,
        eps_b: epsilon,
        cbar_closed: lhs,
        cbar_mc: None,
        variance,
        t2: s.t2,
        c_term: c,
        h2_min: h2,
        obs4_lhs: lhs,
        obs4_rhs: rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::IsingFamily;
    use crate::haar::HaarSampler;
    use crate::spectral::spectral_decomposition;
    use crate::state::random_state;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ising_spec() -> SpectralDecomposition {
        spectral_decomposition(&BatteryHamiltonian::ising(0.5, 1.0, 0.5, 0.45))
    }

    #[test]
    fn povm_limits_and_trace() {
        let spec = ising_spec();
        let pi: CMatrix = spec
            .projectors_a
            .iter()
            .map(|p| linalg::kron(p, p))
            .sum();
        assert!(linalg::max_abs_diff(&coincidence_povm(&spec, Side::A, 1.0).unwrap(), &pi) < 1e-15);
        let blind = coincidence_povm(&spec, Side::A, 0.0).unwrap();
        assert!(linalg::max_abs_diff(&blind, &linalg::identity(16).unscale(4.0)) < 1e-15);
        for eps in [0.0, 0.3, 0.7, 1.0] {
            let p = coincidence_povm(&spec, Side::B, eps).unwrap();
            assert!((linalg::trace(&p).re - 4.0).abs() < 1e-12);
            let swap_tr = linalg::trace_product(&linalg::swap_operator(4), &p).re;
            assert!((swap_tr - (3.0 * eps * eps + 1.0)).abs() < 1e-12);
            let eig = linalg::hermitian_eigenvalues(&p);
            assert!(eig[0] >= -1e-12 && eig[eig.len() - 1] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn trivial_closed_form_values() {
        let mm = DensityMatrix::maximally_mixed(16);
        assert!((avg_coincidence_closed(&mm, 4, 0.6, 0.2).unwrap() - 1.0 / 16.0).abs() < 1e-15);
        let rho = IsingFamily::REFERENCE.state(0.45, 0.9).unwrap();
        assert!((avg_coincidence_closed(&rho, 4, 0.0, 0.0).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn fast_coincidence_matches_two_copy_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 2;
        let h = BatteryHamiltonian::new(
            linalg::random_hermitian(d, &mut rng),
            linalg::random_hermitian(d, &mut rng),
            linalg::random_hermitian(d * d, &mut rng),
            1.0,
        )
        .unwrap();
        let spec = spectral_decomposition(&h);
        let rho = random_state(4, 3, &mut rng);
        let (ea, eb) = (0.4, 0.9);
        let eval = CoincidenceEvaluator::new(&rho, &spec, ea, eb).unwrap();
        let op = linalg::interleave_copies(
            &linalg::kron(
                &coincidence_povm(&spec, Side::A, ea).unwrap(),
                &coincidence_povm(&spec, Side::B, eb).unwrap(),
            ),
            d,
        );
        let mut s = HaarSampler::new(SamplerConfig::new(d, 4));
        for _ in 0..5 {
            let (ua, ub) = s.sample_pair();
            let r = rho.rotate_local(&ua, &ub);
            let two = linalg::kron(r.matrix(), r.matrix());
            let dense = linalg::trace_product(&op, &two).re;
            assert!((dense - eval.coincidence(&ua, &ub)).abs() < 1e-12);
        }
    }

    #[test]
    fn sharp_coincidence_matches_outcome_enumeration() {
        let spec = ising_spec();
        let rho = IsingFamily::REFERENCE.state(0.45, 0.7).unwrap();
        let eval = CoincidenceEvaluator::new(&rho, &spec, 1.0, 1.0).unwrap();
        let (ua, ub) = HaarSampler::new(SamplerConfig::new(4, 6)).sample_pair();
        let r = rho.rotate_local(&ua, &ub);
        let p: Vec<f64> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| r.expectation(&spec.joint_projector(i, j)))
            .collect();
        let mut same = 0.0;
        for (x, px) in p.iter().enumerate() {
            for (y, py) in p.iter().enumerate() {
                if x == y {
                    same += px * py;
                }
            }
        }
        assert!((same - eval.coincidence(&ua, &ub)).abs() < 1e-12);
    }

    #[test]
    fn mc_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ising_spec();
        let rho = random_state(16, 2, &mut rng);
        let exact = avg_coincidence_closed(&rho, 4, 0.7, 0.7).unwrap();
        let est = mc_coincidence(&rho, &spec, 0.7, 0.7, 20_000, SamplerConfig::new(4, 1)).unwrap();
        assert!(est.z(exact) < 5.0, "{est:?} vs {exact}");
        let again = mc_coincidence(&rho, &spec, 0.7, 0.7, 20_000, SamplerConfig::new(4, 1)).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn obs4_holds_and_is_tight_where_expected() {
        let h = BatteryHamiltonian::ising(0.5, 1.0, 0.5, 0.45);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let rank = rng.random_range(1..=16);
            let rho = random_state(16, rank, &mut rng);
            let r = obs4_bound(&rho, &h, rng.random::<f64>()).unwrap();
            assert!(r.holds(1e-12), "{r:?}");
        }
        let mm = obs4_bound(&DensityMatrix::maximally_mixed(16), &h, 0.5).unwrap();
        assert!((mm.obs4_lhs - 1.0 / 16.0).abs() < 1e-15 && mm.slack().abs() < 1e-15);
        // isotropic states with equal fields: the slack vanishes when c ≤ 0
        let phi = DensityMatrix::maximally_entangled(4);
        let iso = DensityMatrix::mixture(&[(0.6, &phi), (0.4, &DensityMatrix::maximally_mixed(16))]).unwrap();
        let weak = BatteryHamiltonian::ising(0.5, 0.3, 0.5, 0.45);
        let r = obs4_bound(&iso, &weak, 0.9).unwrap();
        assert!(r.c_term < 0.0 && r.slack().abs() < 1e-15);
        let strong = BatteryHamiltonian::ising(0.5, 3.0, 0.5, 0.45);
        let r = obs4_bound(&iso, &strong, 0.9).unwrap();
        assert!(r.c_term > 0.0 && r.slack() > 0.0);
        let flat = BatteryHamiltonian::ising(0.0, 1.0, 0.5, 0.0);
        assert!(matches!(obs4_bound(&iso, &flat, 0.5), Err(Error::UndefinedBound(_))));
    }
}
