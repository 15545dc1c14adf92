//! Monte-Carlo estimates of the Haar integrals that have closed forms in
//! [`crate::haar`], used to cross-check them.

use crate::error::Result;
use crate::haar::SamplerConfig;
use crate::linalg::{self, CMatrix};
use crate::state::DensityMatrix;
use crate::stats::{run_streams, MatrixMoments};

fn merged(parts: Vec<MatrixMoments>, rows: usize, cols: usize) -> MatrixMoments {
    let mut total = MatrixMoments::new(rows, cols);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Sample moments of `U X U†` with `U` Haar on `C^D`.
pub fn mc_twirl1(x: &CMatrix, n: usize, seed: u64) -> Result<MatrixMoments> {
    let dim = x.nrows();
    linalg::check_square(x, dim)?;
    let cfg = SamplerConfig::new(dim, seed);
    let parts = run_streams(
        n,
        cfg,
        || MatrixMoments::new(dim, dim),
        |acc, s| acc.push(&linalg::conjugate(&s.sample(), x)),
    );
    Ok(merged(parts, dim, dim))
}

/// Sample moments of `U^{⊗2} X U^{†⊗2}` for `X` on `C^D ⊗ C^D`.
pub fn mc_twirl2(x: &CMatrix, n: usize, seed: u64) -> Result<MatrixMoments> {
    mc_twirl2_many(std::slice::from_ref(x), n, seed).map(|mut v| v.remove(0))
}

/// Like [`mc_twirl2`] for several operators sharing one unitary sequence.
pub fn mc_twirl2_many(xs: &[CMatrix], n: usize, seed: u64) -> Result<Vec<MatrixMoments>> {
    let Some(first) = xs.first() else {
        return Ok(Vec::new());
    };
    let d = linalg::local_dim_of(first)?;
    for x in xs {
        linalg::check_square(x, d * d)?;
    }
    let dim = d * d;
    let cfg = SamplerConfig::new(d, seed);
    let parts = run_streams(
        n,
        cfg,
        || vec![MatrixMoments::new(dim, dim); xs.len()],
        |acc, s| {
            let u = s.sample();
            let uu = linalg::kron(&u, &u);
            for (m, x) in acc.iter_mut().zip(xs) {
                m.push(&linalg::conjugate(&uu, x));
            }
        },
    );
    Ok((0..xs.len())
        .map(|k| {
            let mut total = MatrixMoments::new(dim, dim);
            for p in &parts {
                total.merge(&p[k]);
            }
            total
        })
        .collect())
}

/// Sample moments of `(U_A⊗U_B)^{⊗2} ρ^{⊗2} (·)†`, ordered `A B A' B'`.
pub fn mc_phi(rho: &DensityMatrix, d: usize, n: usize, seed: u64) -> Result<MatrixMoments> {
    linalg::check_square(rho.matrix(), d * d)?;
    let dim = d.pow(4);
    let two = linalg::kron(rho.matrix(), rho.matrix());
    let cfg = SamplerConfig::new(d, seed);
    let parts = run_streams(
        n,
        cfg,
        || MatrixMoments::new(dim, dim),
        |acc, s| {
            let (ua, ub) = s.sample_pair();
            let u = linalg::kron(&ua, &ub);
            acc.push(&linalg::conjugate(&linalg::kron(&u, &u), &two));
        },
    );
    Ok(merged(parts, dim, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::{phi_map, twirl1, twirl2};
    use crate::state::random_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn twirl1_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = linalg::random_hermitian(3, &mut rng);
        let m = mc_twirl1(&x, 20_000, 3).unwrap();
        assert!(m.compare(&twirl1(&x), 5.0, 1e-12).pass);
    }

    #[test]
    fn twirl2_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = linalg::random_hermitian(4, &mut rng);
        let m = mc_twirl2(&x, 20_000, 4).unwrap();
        let cmp = m.compare(&twirl2(&x).unwrap(), 5.0, 1e-12);
        assert!(cmp.pass, "max z {}", cmp.max_z);
        assert_eq!(m.count(), 20_000);
    }

    #[test]
    fn phi_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_state(4, 2, &mut rng);
        let m = mc_phi(&rho, 2, 20_000, 5).unwrap();
        let cmp = m.compare(&phi_map(&rho, 2).unwrap(), 5.0, 1e-12);
        assert!(cmp.pass, "max z {}", cmp.max_z);
    }
}
