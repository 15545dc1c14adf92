//! Schmidt-number certificates from the Haar work variance.

use serde::Serialize;

use crate::battery::{variance_from_sectors, BatteryHamiltonian};
use crate::bloch::SectorLengths;
use crate::error::{Error, Result};
use crate::linalg::{self, Side};
use crate::state::{partial_transpose_min_eig, DensityMatrix};

/// Relative margin a variance must clear before a bound counts as violated.
pub const DETECTION_MARGIN: f64 = 1e-9;
/// Purity tolerance for the pure-state branch.
pub const PURITY_TOL: f64 = 1e-9;
/// Allowed mismatch between `h_A²` and `h_B²` for the pure-state branch.
pub const FIELD_TOL: f64 = 1e-9;

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::OutOfRange {
            name: "k",
            value: k as f64,
            range: "1..=d",
        });
    }
    Ok(())
}

/// `s(k, d, r_A², r_B²) = kd − 1 + (kd−2)/2 (r_A²+r_B²) − kd/2 |r_A²−r_B²|`.
pub fn s_k(k: usize, d: usize, r_a2: f64, r_b2: f64) -> Result<f64> {
    check_k(k, d)?;
    let kd = (k * d) as f64;
    Ok(kd - 1.0 + 0.5 * (kd - 2.0) * (r_a2 + r_b2) - 0.5 * kd * (r_a2 - r_b2).abs())
}

/// Largest work variance compatible with Schmidt number at most `k`.
pub fn variance_bound(
    k: usize,
    d: usize,
    r_a2: f64,
    r_b2: f64,
    h_a2: f64,
    h_b2: f64,
    g2v2: f64,
) -> Result<f64> {
    let m = (d * d) as f64 - 1.0;
    Ok((r_a2 * h_a2 + r_b2 * h_b2 + g2v2 * s_k(k, d, r_a2, r_b2)? / m) / m)
}

/// `x` exceeds `bound` by more than the relative detection margin.
pub fn exceeds(x: f64, bound: f64) -> bool {
    x > bound + DETECTION_MARGIN * bound.abs().max(f64::MIN_POSITIVE)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub k: usize,
    pub bound: f64,
    pub violated: bool,
}

/// Outcome of the variance and purity tests for one `(ρ, H)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessReport {
    pub d: usize,
    pub sectors: SectorLengths,
    pub h_a2: f64,
    pub h_b2: f64,
    pub g2v2: f64,
    pub variance_used: f64,
    pub thresholds: Vec<Threshold>,
    pub detected_sn_lower_bound: usize,
    /// Schmidt-number lower bound from `tr ρ² ≤ k min(tr ρ_A², tr ρ_B²)`.
    pub purity_sn_lower_bound: usize,
    pub purity: f64,
    pub min_marginal_purity: f64,
    /// Negative means the state is NPT (entangled), independent of `k`.
    pub ppt_min_eig: f64,
    pub pure_state_branch: Option<PureStateReport>,
}

impl WitnessReport {
    /// Whether the variance route can see anything at all (`g²v² > 0`).
    pub fn variance_route_active(&self) -> bool {
        self.g2v2 > 0.0
    }

    pub fn routes_agree(&self) -> bool {
        !self.variance_route_active() || self.detected_sn_lower_bound == self.purity_sn_lower_bound
    }

    pub fn is_ppt(&self) -> bool {
        self.ppt_min_eig >= -DETECTION_MARGIN
    }
}

fn sn_from_violations(d: usize, violated: impl Fn(usize) -> bool) -> usize {
    (1..=d).filter(|&k| violated(k)).max().map_or(1, |k| k + 1)
}

/// Evaluates the variance bounds for `k = 1..d` and the equivalent purity test.
pub fn detect_schmidt_number(rho: &DensityMatrix, h: &BatteryHamiltonian) -> Result<WitnessReport> {
    let d = h.d();
    if rho.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: rho.dim(),
        });
    }
    let s = SectorLengths::of(rho, d)?;
    let variance = variance_from_sectors(&s, h);
    let thresholds = (1..=d)
        .map(|k| {
            let bound = variance_bound(k, d, s.r_a2, s.r_b2, h.h_a2(), h.h_b2(), h.g2v2())?;
            Ok(Threshold {
                k,
                bound,
                violated: exceeds(variance, bound),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let detected = sn_from_violations(d, |k| thresholds[k - 1].violated);

    let purity = rho.purity();
    let pa = linalg::trace_product(
        &linalg::reduced(rho.matrix(), d, Side::A)?,
        &linalg::reduced(rho.matrix(), d, Side::A)?,
    )
    .re;
    let pb = linalg::trace_product(
        &linalg::reduced(rho.matrix(), d, Side::B)?,
        &linalg::reduced(rho.matrix(), d, Side::B)?,
    )
    .re;
    let min_marginal = pa.min(pb);
    let purity_sn = sn_from_violations(d, |k| exceeds(purity, k as f64 * min_marginal));

    let pure_state_branch = if (purity - 1.0).abs() <= PURITY_TOL
        && (h.h_a2() - h.h_b2()).abs() <= FIELD_TOL * h.h_a2().max(1.0)
    {
        Some(pure_state_bound(rho, h)?)
    } else {
        None
    };

    Ok(WitnessReport {
        d,
        sectors: s,
        h_a2: h.h_a2(),
        h_b2: h.h_b2(),
        g2v2: h.g2v2(),
        variance_used: variance,
        thresholds,
        detected_sn_lower_bound: detected,
        purity_sn_lower_bound: purity_sn,
        purity,
        min_marginal_purity: min_marginal,
        ppt_min_eig: partial_transpose_min_eig(rho, d)?,
        pure_state_branch,
    })
}

/// Whether a variance threshold for pure states bounds from above or below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundDirection {
    /// `G > 0`: larger variances certify more entanglement.
    Upper,
    /// `G < 0`: smaller variances certify more entanglement.
    Lower,
    /// `G = 0`: the variance does not depend on `t²`.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PureStateReport {
    pub h2: f64,
    /// `G = g²v²/(d²−1) − h²`.
    pub g_term: f64,
    pub t2: f64,
    pub variance: f64,
    pub direction: BoundDirection,
    /// `(k, t²_max, variance threshold)` with `t²_max = d² + 1 − 2d/k`.
    pub thresholds: Vec<(usize, f64, f64)>,
    pub detected_sn_lower_bound: usize,
}

/// For pure states with `h_A² = h_B² = h²` the variance is
/// `h² + G t²/(d²−1)`, and Schmidt number `≤ k` forces `t² ≤ d²+1−2d/k`.
pub fn pure_state_bound(rho: &DensityMatrix, h: &BatteryHamiltonian) -> Result<PureStateReport> {
    let d = h.d();
    let purity = rho.purity();
    if (purity - 1.0).abs() > PURITY_TOL {
        return Err(Error::NotPure(purity));
    }
    if (h.h_a2() - h.h_b2()).abs() > FIELD_TOL * h.h_a2().max(1.0) {
        return Err(Error::AsymmetricFields {
            h_a2: h.h_a2(),
            h_b2: h.h_b2(),
        });
    }
    let df = d as f64;
    let m = df * df - 1.0;
    let h2 = 0.5 * (h.h_a2() + h.h_b2());
    let g_term = h.g2v2() / m - h2;
    let s = SectorLengths::of(rho, d)?;
    let variance = h2 + g_term * s.t2 / m;
    let g_scale = 1e-12 * h2.max(h.g2v2() / m);
    let direction = if g_term > g_scale {
        BoundDirection::Upper
    } else if g_term < -g_scale {
        BoundDirection::Lower
    } else {
        BoundDirection::None
    };
    let thresholds: Vec<(usize, f64, f64)> = (1..=d)
        .map(|k| {
            let t2_max = df * df + 1.0 - 2.0 * df / k as f64;
            (k, t2_max, h2 + g_term * t2_max / m)
        })
        .collect();
    let detected = sn_from_violations(d, |k| {
        let bound = thresholds[k - 1].2;
        match direction {
            BoundDirection::Upper => exceeds(variance, bound),
            BoundDirection::Lower => exceeds(-variance, -bound),
            BoundDirection::None => false,
        }
    });
    Ok(PureStateReport {
        h2,
        g_term,
        t2: s.t2,
        variance,
        direction,
        thresholds,
        detected_sn_lower_bound: detected,
    })
}

/// Smallest `α` in `(lo, hi]` at which a monotone predicate switches from
/// false to true, found by bisection to width `tol`. `None` if the predicate
/// is already true at `lo` or still false at `hi`.
pub fn bisect_threshold<F>(lo: f64, hi: f64, tol: f64, mut pred: F) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<bool>,
{
    if pred(lo)? || !pred(hi)? {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if pred(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

/// `α` above which isotropic states at local dimension `d` violate the
/// Schmidt-number-`k` bound: `√((kd−1)/(d²−1))`.
pub fn isotropic_alpha_threshold(k: usize, d: usize) -> Result<f64> {
    check_k(k, d)?;
    Ok((((k * d) as f64 - 1.0) / ((d * d) as f64 - 1.0)).sqrt())
}
