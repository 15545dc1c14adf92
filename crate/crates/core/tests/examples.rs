macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(twirl_oracle, "twirl_oracle.rs");
example!(work_variance, "work_variance.rs");
example!(schmidt_witness, "schmidt_witness.rs");
example!(work_histogram, "work_histogram.rs");
example!(noisy_tpm, "noisy_tpm.rs");
example!(coincidence, "coincidence.rs");
example!(config_sweep, "config_sweep.rs");

#[test]
fn twirl_oracle_runs() {
    twirl_oracle::run_example().unwrap();
}

#[test]
fn work_variance_runs() {
    work_variance::run_example().unwrap();
}

#[test]
fn schmidt_witness_runs() {
    schmidt_witness::run_example().unwrap();
}

#[test]
fn work_histogram_runs() {
    work_histogram::run_example().unwrap();
}

#[test]
fn noisy_tpm_runs() {
    noisy_tpm::run_example().unwrap();
}

#[test]
fn coincidence_runs() {
    coincidence::run_example().unwrap();
}

#[test]
fn config_sweep_runs() {
    config_sweep::run_example().unwrap();
}
