// Sampled work distributions for a strongly and a weakly correlated state,
// printed as text histograms with bins of 0.1.
//
//     cargo run --release --example work_histogram [n]

use qbattery::battery::{analytic_work_variance, work_histogram, IsingFamily};
use qbattery::haar::SamplerConfig;
use qbattery::witness::detect_schmidt_number;

fn run_with(n: usize) -> qbattery::Result<()> {
    let family = IsingFamily::REFERENCE;
    let b = 0.45;
    let h = family.battery(b);
    for (i, alpha) in [0.96, 0.08].into_iter().enumerate() {
        let rho = family.state(b, alpha)?;
        let hist = work_histogram(&rho, &h, n, 0.1, SamplerConfig::new(h.d(), 42).with_stream(i as u64))?;
        let exact = analytic_work_variance(&rho, &h)?;
        let rep = detect_schmidt_number(&rho, &h)?;
        println!(
            "alpha = {alpha}: sample var {:.5} ± {:.5}, closed form {:.5}, SN >= {}",
            hist.statistics.variance, hist.statistics.se_variance, exact.variance, rep.detected_sn_lower_bound
        );
        let peak = hist.counts.iter().copied().max().unwrap_or(1).max(1);
        for (left, count) in hist.bins() {
            let bar = "#".repeat((60 * count / peak) as usize);
            println!("  {left:>5.1} {count:>7} {bar}");
        }
        assert_eq!(hist.counts.iter().sum::<u64>(), n as u64);
    }
    Ok(())
}

pub fn run_example() -> qbattery::Result<()> {
    run_with(20_000)
}

fn main() -> qbattery::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    run_with(n)
}
