// Work mean and variance of the four-spin Ising battery under local Haar
// unitaries, closed form next to a sampled estimate.
//
//     cargo run --release --example work_variance

use qbattery::battery::{analytic_work_variance, mc_work_statistics, IsingFamily};
use qbattery::haar::SamplerConfig;

pub fn run_example() -> qbattery::Result<()> {
    let family = IsingFamily::REFERENCE;
    let n = 20_000;
    println!("   b  alpha   exact var      MC var        SE     z");
    for (i, (b, alpha)) in [(0.0, 0.08), (0.45, 0.5), (0.9, 0.96)].into_iter().enumerate() {
        let h = family.battery(b);
        let rho = family.state(b, alpha)?;
        let exact = analytic_work_variance(&rho, &h)?;
        let mc = mc_work_statistics(&rho, &h, n, SamplerConfig::new(h.d(), 5).with_stream(i as u64))?;
        let z = mc.variance_z(exact.variance);
        println!(
            "{b:>4} {alpha:>6} {:>11.6} {:>11.6} {:>9.2e} {z:>5.2}",
            exact.variance, mc.variance, mc.se_variance
        );
        assert!(z < 5.0);
    }
    Ok(())
}

fn main() -> qbattery::Result<()> {
    run_example()
}
