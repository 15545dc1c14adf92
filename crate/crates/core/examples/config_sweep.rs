// Config-driven runs: a small variance sweep written as CSV, and the
// verification suite.
//
//     cargo run --release --example config_sweep

use qbattery::config::ExperimentConfig;
use qbattery::runner::{run_variance_sweep, run_verify};

const SWEEP: &str = r#"{
    "battery": {"ising": {"J1": 0.5, "J2": 1.0, "J3": 0.5}},
    "state": {"thermal_mixture": {"T": 1.5}},
    "protocol": "variance",
    "parameters": {"b": [0.0, 0.45, 0.9], "alpha": [0.08, 0.5, 0.96]}
}"#;

pub fn run_example() -> qbattery::Result<()> {
    let cfg = ExperimentConfig::from_json(SWEEP)?;
    let table = run_variance_sweep(&cfg)?;
    print!("{}", table.to_csv_string());

    let verify = ExperimentConfig::from_json(
        r#"{"protocol": "verify", "sampling": {"seed": 1}, "verify": {"n": 4000, "instances": 20}}"#,
    )?;
    let report = run_verify(&verify)?;
    for c in &report.checks {
        println!("{:<48} {}", c.name, if c.pass { "ok" } else { "FAILED" });
    }
    assert!(report.pass);
    Ok(())
}

fn main() -> qbattery::Result<()> {
    run_example()
}
