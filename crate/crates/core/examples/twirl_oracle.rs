// Two-copy Haar twirl: closed form against a Monte-Carlo average.
//
//     cargo run --release --example twirl_oracle

use qbattery::haar::twirl2;
use qbattery::linalg;
use qbattery::oracle::mc_twirl2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 20_000;

pub fn run_example() -> qbattery::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for dim in [2, 3] {
        let x = linalg::random_hermitian(dim * dim, &mut rng);
        let exact = twirl2(&x)?;
        let mc = mc_twirl2(&x, SAMPLES, 17)?;
        let cmp = mc.compare(&exact, 5.0, 1e-12);
        println!(
            "D={dim}: max |MC - exact| = {:.2e}, max z = {:.2}, within 5 SE: {}",
            cmp.max_deviation, cmp.max_z, cmp.pass
        );
        assert!(cmp.pass);
    }
    Ok(())
}

fn main() -> qbattery::Result<()> {
    run_example()
}
