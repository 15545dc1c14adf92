// Two-copy coincidence probability under local random unitaries, and the
// bound it places on the work variance.
//
//     cargo run --release --example coincidence

use qbattery::battery::IsingFamily;
use qbattery::coincidence::{avg_coincidence_closed, mc_coincidence, obs4_bound};
use qbattery::haar::SamplerConfig;
use qbattery::spectral::spectral_decomposition;

pub fn run_example() -> qbattery::Result<()> {
    let family = IsingFamily::REFERENCE;
    let b = 0.45;
    let h = family.battery(b);
    let spec = spectral_decomposition(&h);
    let d = h.d();
    println!("alpha  eps   C closed   C sampled         bound on C   work variance");
    for (i, alpha) in [0.1, 0.5, 0.9].into_iter().enumerate() {
        let rho = family.state(b, alpha)?;
        for (j, eps) in [0.3, 1.0].into_iter().enumerate() {
            let closed = avg_coincidence_closed(&rho, d, eps, eps)?;
            let sc = SamplerConfig::new(d, 3).with_stream((2 * i + j) as u64);
            let mc = mc_coincidence(&rho, &spec, eps, eps, 10_000, sc)?;
            let rep = obs4_bound(&rho, &h, eps)?;
            println!(
                "{alpha:>5} {eps:>4}  {closed:.6}  {:.6}±{:.1e}  {:.6}     {:.5}",
                mc.value, mc.se, rep.obs4_rhs, rep.variance
            );
            assert!(mc.z(closed) < 5.0);
            assert!(rep.holds(1e-12));
        }
    }
    Ok(())
}

fn main() -> qbattery::Result<()> {
    run_example()
}
