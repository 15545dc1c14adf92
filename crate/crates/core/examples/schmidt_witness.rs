// Schmidt-number lower bounds from the work variance along the thermal
// mixture, and the isotropic-state thresholds located by bisection.
//
//     cargo run --release --example schmidt_witness

use qbattery::battery::{BatteryHamiltonian, IsingFamily};
use qbattery::state::DensityMatrix;
use qbattery::witness::{bisect_threshold, detect_schmidt_number, isotropic_alpha_threshold};

fn isotropic(alpha: f64, d: usize) -> qbattery::Result<DensityMatrix> {
    let phi = DensityMatrix::maximally_entangled(d);
    let mixed = DensityMatrix::maximally_mixed(d * d);
    DensityMatrix::mixture(&[(alpha, &phi), (1.0 - alpha, &mixed)])
}

pub fn run_example() -> qbattery::Result<()> {
    let family = IsingFamily::REFERENCE;
    let b = 0.45;
    let h = family.battery(b);
    println!("alpha  variance   k=1 bound  SN>=  PPT min eig");
    for alpha in [0.0, 0.08, 0.3, 0.6, 0.8, 0.96, 1.0] {
        let rep = detect_schmidt_number(&family.state(b, alpha)?, &h)?;
        println!(
            "{alpha:>5}  {:.5}   {:.5}    {}   {:+.4}",
            rep.variance_used, rep.thresholds[0].bound, rep.detected_sn_lower_bound, rep.ppt_min_eig
        );
    }

    // at infinite temperature the mixture is isotropic
    let h = BatteryHamiltonian::ising(0.5, 1.0, 0.5, b);
    let d = h.d();
    for k in 1..d {
        let found = bisect_threshold(0.0, 1.0, 1e-10, |a| {
            Ok(detect_schmidt_number(&isotropic(a, d)?, &h)?.detected_sn_lower_bound > k)
        })?
        .expect("fully entangled end detects");
        let exact = isotropic_alpha_threshold(k, d)?;
        println!("SN > {k} above alpha = {found:.8} (closed form {exact:.8})");
        assert!((found - exact).abs() < 1e-8);
    }
    Ok(())
}

fn main() -> qbattery::Result<()> {
    run_example()
}
