// Work variance accessible with noisy two-point energy measurements, the
// weights of its three contributions, and a sampled check.
//
//     cargo run --release --example noisy_tpm

use qbattery::battery::IsingFamily;
use qbattery::haar::SamplerConfig;
use qbattery::spectral::spectral_decomposition;
use qbattery::tpm::{mc_tpm_statistics, tpm_variance_closed_form, tpm_weights};

pub fn run_example() -> qbattery::Result<()> {
    let family = IsingFamily::REFERENCE;
    let b = 0.45;
    let h = family.battery(b);
    let spec = spectral_decomposition(&h);

    println!("  eps     n0      n1   n_noisy");
    for eps in [0.0, 0.2, 0.5, 0.8, 1.0] {
        let w = tpm_weights(eps, eps, h.d())?;
        println!("{eps:>5} {:.4} {:.4} {:.4}", w.n0, w.n1, w.n_noisy);
    }

    println!("alpha  var_D     var_TPM(0.2) var_TPM(0.5) var_TPM(1.0)");
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let rho = family.state(b, alpha)?;
        let mut line = format!("{alpha:>5}");
        for (i, eps) in [0.2, 0.5, 1.0].into_iter().enumerate() {
            let rep = tpm_variance_closed_form(&rho, &spec, eps, eps)?;
            if i == 0 {
                line += &format!("  {:.5}", rep.var_d);
            }
            line += &format!("   {:.5}", rep.var_tpm);
        }
        println!("{line}");
    }

    let rho = family.state(b, 0.9)?;
    let rep = tpm_variance_closed_form(&rho, &spec, 0.5, 0.5)?;
    let mc = mc_tpm_statistics(&rho, &spec, 0.5, 0.5, 5_000, SamplerConfig::new(h.d(), 9))?;
    println!(
        "alpha=0.9, eps=0.5: closed form {:.5}, sampled {:.5} ± {:.5}",
        rep.var_tpm, mc.variance, mc.se_variance
    );
    assert!(mc.variance_z(rep.var_tpm) < 5.0);
    Ok(())
}

fn main() -> qbattery::Result<()> {
    run_example()
}
