//! Bipartite batteries `H_AB = H_A⊗𝟙 + 𝟙⊗H_B + gV`, their states, and the
//! work extracted by local unitaries.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{gell_mann_basis, BlochForm, SectorLengths};
use crate::error::{Error, Result};
use crate::haar::SamplerConfig;
use crate::linalg::{self, CMatrix, CVector, Side};
use crate::spectral::descending_eigenbasis;
use crate::state::DensityMatrix;
use crate::stats::{run_streams, sample_moments, Moments, WorkStatistics};

/// Hermiticity tolerance for user-supplied Hamiltonian blocks.
const HAMILTONIAN_TOL: f64 = 1e-9;
/// Local/trace parts of `V` below this size are dropped silently.
const CANONICAL_TOL: f64 = 1e-12;
/// Spectra of the two local Gibbs states must agree to this precision.
const SPECTRUM_TOL: f64 = 1e-9;

/// A two-party battery with an interaction free of local and trace parts.
#[derive(Clone, Debug)]
pub struct BatteryHamiltonian {
    d: usize,
    h_a: CMatrix,
    h_b: CMatrix,
    v: CMatrix,
    g: f64,
    full: CMatrix,
    coefficients: HamiltonianCoefficients,
}

/// Expansion coefficients `h_i^X = tr[H_X λ_i]/d`, `v_ij = tr[V λ_i⊗λ_j]/d²`
/// over the traceless basis elements.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HamiltonianCoefficients {
    pub h_a: DVector<f64>,
    pub h_b: DVector<f64>,
    pub v: DMatrix<f64>,
    pub h_a2: f64,
    pub h_b2: f64,
    pub v2: f64,
}

/// `V = V' + loc_A⊗𝟙 + 𝟙⊗loc_B + c 𝟙` with `V'` free of local and trace parts.
fn split_interaction(v: &CMatrix, d: usize) -> Result<(CMatrix, CMatrix, CMatrix, f64)> {
    let df = d as f64;
    let id = linalg::identity(d);
    let c = linalg::trace(v).re / (df * df);
    let loc_a = linalg::partial_trace(v, d, Side::B)?.unscale(df) - id.scale(c);
    let loc_b = linalg::partial_trace(v, d, Side::A)?.unscale(df) - id.scale(c);
    let rest = v - linalg::kron(&loc_a, &id) - linalg::kron(&id, &loc_b) - linalg::identity(d * d).scale(c);
    Ok((rest, loc_a, loc_b, c))
}

/// Battery with Hermitian parts drawn from the Gaussian unitary ensemble,
/// already in canonical form.
pub fn random_battery<R: rand::Rng + ?Sized>(d: usize, g: f64, rng: &mut R) -> BatteryHamiltonian {
    let h_a = linalg::random_hermitian(d, rng);
    let h_b = linalg::random_hermitian(d, rng);
    let (v, loc_a, loc_b, _) =
        split_interaction(&linalg::random_hermitian(d * d, rng), d).expect("square input");
    BatteryHamiltonian::new(h_a + loc_a.scale(g), h_b + loc_b.scale(g), v, g)
        .expect("random Hermitian parts form a valid battery")
}

impl BatteryHamiltonian {
    /// Builds a battery, moving any local or trace part of `v` out of the
    /// interaction (local parts go into `H_A`, `H_B`; the trace is dropped).
    pub fn new(h_a: CMatrix, h_b: CMatrix, v: CMatrix, g: f64) -> Result<Self> {
        let d = h_a.nrows();
        linalg::check_local_dim(d)?;
        linalg::check_square(&h_a, d)?;
        linalg::check_square(&h_b, d)?;
        linalg::check_square(&v, d * d)?;
        for m in [&h_a, &h_b, &v] {
            let err = linalg::hermiticity_error(m);
            if err > HAMILTONIAN_TOL {
                return Err(Error::NotHermitian(err));
            }
        }
        if !g.is_finite() {
            return Err(Error::OutOfRange {
                name: "g",
                value: g,
                range: "finite",
            });
        }
        let (mut h_a, mut h_b) = (linalg::hermitian_part(&h_a), linalg::hermitian_part(&h_b));
        let id = linalg::identity(d);
        let (v, loc_a, loc_b, c) = split_interaction(&linalg::hermitian_part(&v), d)?;
        let local_size = linalg::max_abs(&loc_a).max(linalg::max_abs(&loc_b));
        if c.abs() > CANONICAL_TOL {
            warn!("interaction has trace part {c:.3e}; discarding it");
        }
        if local_size > CANONICAL_TOL {
            warn!("interaction has local parts (max entry {local_size:.3e}); folding them into H_A and H_B");
        }
        h_a += loc_a.scale(g);
        h_b += loc_b.scale(g);

        let basis = gell_mann_basis(d)?;
        let (_, ca) = basis.local_coefficients(&h_a);
        let (_, cb) = basis.local_coefficients(&h_b);
        let cv = basis.bipartite_coefficients(&v)?.corr;
        let coefficients = HamiltonianCoefficients {
            h_a2: ca.norm_squared(),
            h_b2: cb.norm_squared(),
            v2: cv.norm_squared(),
            h_a: ca,
            h_b: cb,
            v: cv,
        };
        let full = linalg::kron(&h_a, &id) + linalg::kron(&id, &h_b) + v.scale(g);
        Ok(Self {
            d,
            h_a,
            h_b,
            v,
            g,
            full,
            coefficients,
        })
    }

    /// Two Ising pairs `(1,2|3,4)` coupled through qubits 2 and 3.
    pub fn ising(j1: f64, j2: f64, j3: f64, b: f64) -> Self {
        let z = CMatrix::from_diagonal(&CVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ]));
        let id = linalg::identity(2);
        let zz = linalg::kron(&z, &z);
        let field = linalg::kron(&z, &id) + linalg::kron(&id, &z);
        let h_a = zz.scale(j1) + field.scale(b);
        let h_b = zz.scale(j3) + field.scale(b);
        let v = linalg::kron(&linalg::kron(&id, &z), &linalg::kron(&z, &id));
        Self::new(h_a, h_b, v, j2).expect("Ising battery is well formed")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn h_a(&self) -> &CMatrix {
        &self.h_a
    }

    pub fn h_b(&self) -> &CMatrix {
        &self.h_b
    }

    pub fn local(&self, side: Side) -> &CMatrix {
        match side {
            Side::A => &self.h_a,
            Side::B => &self.h_b,
        }
    }

    /// The canonical (traceless, no local parts) interaction.
    pub fn v(&self) -> &CMatrix {
        &self.v
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// `H_AB` as a `d² × d²` matrix.
    pub fn matrix(&self) -> CMatrix {
        self.full.clone()
    }

    pub fn matrix_ref(&self) -> &CMatrix {
        &self.full
    }

    pub fn coefficients(&self) -> &HamiltonianCoefficients {
        &self.coefficients
    }

    pub fn h_a2(&self) -> f64 {
        self.coefficients.h_a2
    }

    pub fn h_b2(&self) -> f64 {
        self.coefficients.h_b2
    }

    pub fn v2(&self) -> f64 {
        self.coefficients.v2
    }

    pub fn g2v2(&self) -> f64 {
        self.g * self.g * self.coefficients.v2
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.full).re
    }

    /// `H_AB + c𝟙`, realised as a shift of `H_A`.
    pub fn shifted(&self, c: f64) -> Self {
        let h_a = &self.h_a + linalg::identity(self.d).scale(c / self.d as f64);
        let mut out = self.clone();
        out.full = &self.full + linalg::identity(self.d * self.d).scale(c);
        out.h_a = h_a;
        out
    }
}

fn check_state(rho: &DensityMatrix, h: &BatteryHamiltonian) -> Result<()> {
    let n = h.d() * h.d();
    if rho.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho.dim(),
        });
    }
    Ok(())
}

fn check_unitaries(h: &BatteryHamiltonian, ua: &CMatrix, ub: &CMatrix) -> Result<()> {
    linalg::check_square(ua, h.d())?;
    linalg::check_square(ub, h.d())
}

/// `exp(−H/T)/Z` via the eigendecomposition of `H`.
pub fn gibbs_state(h: &CMatrix, temperature: f64) -> Result<DensityMatrix> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidTemperature(temperature));
    }
    let n = h.nrows();
    linalg::check_square(h, n)?;
    let err = linalg::hermiticity_error(h);
    if err > HAMILTONIAN_TOL {
        return Err(Error::NotHermitian(err));
    }
    let (values, vecs) = linalg::hermitian_eigen(&linalg::hermitian_part(h));
    let e_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = values
        .iter()
        .map(|e| (-(e - e_min) / temperature).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let mut rho = CMatrix::zeros(n, n);
    for (k, w) in weights.iter().enumerate() {
        let v = vecs.column(k);
        rho += (v * v.adjoint()).scale(w / z);
    }
    Ok(DensityMatrix::from_trusted(linalg::hermitian_part(&rho)))
}

/// `α|φ⟩⟨φ| + (1−α)τ_A⊗τ_B` with `|φ⟩ = Σ √p_i |e_i f_i⟩` a purification whose
/// marginals are `τ_A` and `τ_B`.
pub fn thermal_mixture_state(
    alpha: f64,
    tau_a: &DensityMatrix,
    tau_b: &DensityMatrix,
) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            range: "[0, 1]",
        });
    }
    let d = tau_a.dim();
    if tau_b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: tau_b.dim(),
        });
    }
    let (pa, ea) = descending_eigenbasis(tau_a.matrix());
    let (pb, fb) = descending_eigenbasis(tau_b.matrix());
    let mismatch = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if mismatch > SPECTRUM_TOL {
        return Err(Error::IncompatibleMarginals(mismatch));
    }
    let mut phi = CVector::zeros(d * d);
    for i in 0..d {
        let p = (0.5 * (pa[i] + pb[i])).max(0.0);
        phi += ea[i].kronecker(&fb[i]).scale(p.sqrt());
    }
    let entangled = &phi * phi.adjoint();
    let product = linalg::kron(tau_a.matrix(), tau_b.matrix());
    Ok(DensityMatrix::from_trusted(
        entangled.scale(alpha) + product.scale(1.0 - alpha),
    ))
}

/// The Ising battery together with the thermal-mixture states built from
/// its local Gibbs states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingFamily {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub temperature: f64,
}

impl IsingFamily {
    /// `J1 = J3 = 0.5`, `J2 = 1`, `T = 1.5` (energies in units of `J2`).
    pub const REFERENCE: IsingFamily = IsingFamily {
        j1: 0.5,
        j2: 1.0,
        j3: 0.5,
        temperature: 1.5,
    };

    pub fn battery(&self, b: f64) -> BatteryHamiltonian {
        BatteryHamiltonian::ising(self.j1, self.j2, self.j3, b)
    }

    pub fn local_gibbs(&self, b: f64) -> Result<(DensityMatrix, DensityMatrix)> {
        let h = self.battery(b);
        Ok((
            gibbs_state(h.h_a(), self.temperature)?,
            gibbs_state(h.h_b(), self.temperature)?,
        ))
    }

    pub fn state(&self, b: f64, alpha: f64) -> Result<DensityMatrix> {
        let (ta, tb) = self.local_gibbs(b)?;
        thermal_mixture_state(alpha, &ta, &tb)
    }
}

/// `W = tr[(ρ − UρU†)H_AB]` with `U = U_A⊗U_B`, evaluated densely.
pub fn work(
    rho: &DensityMatrix,
    h: &BatteryHamiltonian,
    ua: &CMatrix,
    ub: &CMatrix,
) -> Result<f64> {
    check_state(rho, h)?;
    check_unitaries(h, ua, ub)?;
    let rotated = rho.rotate_local(ua, ub);
    Ok(rho.expectation(h.matrix_ref()) - rotated.expectation(h.matrix_ref()))
}

/// Fast repeated evaluation of the work for one `(ρ, H)` pair.
///
/// Rotates the Hamiltonian instead of the state and splits the interaction
/// into a short operator-Schmidt sum, so only `d × d` products are needed.
#[derive(Clone, Debug)]
pub struct WorkEvaluator {
    d: usize,
    energy: f64,
    rho: CMatrix,
    rho_a: CMatrix,
    rho_b: CMatrix,
    h_a: CMatrix,
    h_b: CMatrix,
    terms: Vec<(CMatrix, CMatrix)>,
}

impl WorkEvaluator {
    pub fn new(rho: &DensityMatrix, h: &BatteryHamiltonian) -> Result<Self> {
        check_state(rho, h)?;
        let d = h.d();
        let basis = gell_mann_basis(d)?;
        let gv = h.coefficients().v.scale(h.g());
        let svd = gv.svd(true, true);
        let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let s_max = svd.singular_values.max();
        let mut terms = Vec::new();
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s <= 1e-14 * s_max.max(1e-300) {
                continue;
            }
            let a = basis.local_operator(0.0, &u.column(k).scale(*s).into_owned());
            let b = basis.local_operator(0.0, &vt.row(k).transpose());
            terms.push((a, b));
        }
        let m = rho.matrix();
        Ok(Self {
            d,
            energy: rho.expectation(h.matrix_ref()),
            rho: m.clone(),
            rho_a: linalg::reduced(m, d, Side::A)?,
            rho_b: linalg::reduced(m, d, Side::B)?,
            h_a: h.h_a().clone(),
            h_b: h.h_b().clone(),
            terms,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn work(&self, ua: &CMatrix, ub: &CMatrix) -> f64 {
        let (uad, ubd) = (ua.adjoint(), ub.adjoint());
        let rot_a = |x: &CMatrix| &uad * x * ua;
        let rot_b = |x: &CMatrix| &ubd * x * ub;
        let mut e = linalg::trace_product(&self.rho_a, &rot_a(&self.h_a)).re
            + linalg::trace_product(&self.rho_b, &rot_b(&self.h_b)).re;
        for (a, b) in &self.terms {
            e += linalg::trace_with_product(&self.rho, &rot_a(a), &rot_b(b), self.d).re;
        }
        self.energy - e
    }
}

/// `W̄ = tr[ρH_AB] − tr[H_AB]/d²`: the Haar-averaged final state is `𝟙/d²`.
pub fn analytic_work_mean(rho: &DensityMatrix, h: &BatteryHamiltonian) -> Result<f64> {
    check_state(rho, h)?;
    let n = (h.d() * h.d()) as f64;
    Ok(rho.expectation(h.matrix_ref()) - h.trace() / n)
}

/// Haar variance of the work from the sector lengths and field strengths.
pub fn variance_from_sectors(s: &SectorLengths, h: &BatteryHamiltonian) -> f64 {
    let m = (h.d() * h.d()) as f64 - 1.0;
    (s.r_a2 * h.h_a2() + s.r_b2 * h.h_b2() + s.t2 * h.g2v2() / m) / m
}

/// Haar covariance of `tr[U X U† H]` and `tr[U Y U† H]` for two operators
/// given by their Bloch forms; the variance is the diagonal case.
pub fn haar_covariance(x: &BlochForm, y: &BlochForm, h: &BatteryHamiltonian) -> f64 {
    let m = (h.d() * h.d()) as f64 - 1.0;
    let ra = x.r_a.dot(&y.r_a);
    let rb = x.r_b.dot(&y.r_b);
    let t = x.t.dot(&y.t);
    (ra * h.h_a2() + rb * h.h_b2() + t * h.g2v2() / m) / m
}

/// Closed-form mean and variance of the work over local Haar unitaries.
pub fn analytic_work_variance(
    rho: &DensityMatrix,
    h: &BatteryHamiltonian,
) -> Result<WorkStatistics> {
    let mean = analytic_work_mean(rho, h)?;
    let s = SectorLengths::of(rho, h.d())?;
    Ok(WorkStatistics::analytic(mean, variance_from_sectors(&s, h).max(0.0)))
}

/// Sample mean and variance of the work over `n` Haar pairs.
pub fn mc_work_statistics(
    rho: &DensityMatrix,
    h: &BatteryHamiltonian,
    n: usize,
    cfg: SamplerConfig,
) -> Result<WorkStatistics> {
    Ok(WorkStatistics::from_moments(&mc_work_moments(rho, h, n, cfg)?))
}

/// Raw moments of the sampled work (exposes skewness as well).
pub fn mc_work_moments(
    rho: &DensityMatrix,
    h: &BatteryHamiltonian,
    n: usize,
    cfg: SamplerConfig,
) -> Result<Moments> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let eval = WorkEvaluator::new(rho, h)?;
    let cfg = SamplerConfig { d: h.d(), ..cfg };
    Ok(sample_moments(n, cfg, |s| {
        let (ua, ub) = s.sample_pair();
        eval.work(&ua, &ub)
    }))
}

/// Histogram of sampled work values with bins `[k w, (k+1) w)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkHistogram {
    pub bin_width: f64,
    /// Left edge of the first bin (a multiple of `bin_width`).
    pub origin: f64,
    pub counts: Vec<u64>,
    pub n_samples: u64,
    pub statistics: WorkStatistics,
    pub skewness: f64,
    pub se_skewness: f64,
}

impl WorkHistogram {
    /// `(left edge, count)` pairs.
    pub fn bins(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, c)| (self.origin + i as f64 * self.bin_width, *c))
    }
}

pub fn work_histogram(
    rho: &DensityMatrix,
    h: &BatteryHamiltonian,
    n: usize,
    bin_width: f64,
    cfg: SamplerConfig,
) -> Result<WorkHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::OutOfRange {
            name: "bin_width",
            value: bin_width,
            range: "(0, inf)",
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let eval = WorkEvaluator::new(rho, h)?;
    let cfg = SamplerConfig { d: h.d(), ..cfg };
    let parts = run_streams(
        n,
        cfg,
        || (Moments::new(), BTreeMap::<i64, u64>::new()),
        |(m, bins), s| {
            let (ua, ub) = s.sample_pair();
            let w = eval.work(&ua, &ub);
            m.push(w);
            *bins.entry((w / bin_width).floor() as i64).or_default() += 1;
        },
    );
    let mut moments = Moments::new();
    let mut bins = BTreeMap::new();
    for (m, b) in &parts {
        moments.merge(m);
        for (k, c) in b {
            *bins.entry(*k).or_insert(0u64) += c;
        }
    }
    let lo = *bins.keys().next().unwrap_or(&0);
    let hi = *bins.keys().next_back().unwrap_or(&0);
    let counts = (lo..=hi).map(|k| bins.get(&k).copied().unwrap_or(0)).collect();
    Ok(WorkHistogram {
        bin_width,
        origin: lo as f64 * bin_width,
        counts,
        n_samples: moments.count(),
        statistics: WorkStatistics::from_moments(&moments),
        skewness: moments.skewness(),
        se_skewness: moments.se_skewness(),
    })
}
