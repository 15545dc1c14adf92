//! Grid sweeps driven by an [`ExperimentConfig`], emitting versioned CSV or
//! JSON tables.
//!
//! Every Monte-Carlo column is produced with
//! `SamplerConfig::new(d, seed).with_stream(stream)`, and `stream` is echoed
//! in the row, so any row can be recomputed with a single library call.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::battery::{
    analytic_work_variance, mc_work_statistics, random_battery, work_histogram, BatteryHamiltonian, WorkHistogram,
};
use crate::bloch::SectorLengths;
use crate::coincidence::{avg_coincidence_closed, mc_coincidence, obs4_bound};
use crate::config::{ExperimentConfig, Format, GridPoint, Protocol, VerifySettings};
use crate::error::Result;
use crate::haar::{phi_map, twirl1, twirl2, SamplerConfig};
use crate::linalg::{self, CMatrix};
use crate::oracle::{mc_phi, mc_twirl1, mc_twirl2};
use crate::spectral::spectral_decomposition;
use crate::state::{random_state, DensityMatrix};
use crate::stats::{z_score, MatrixMoments};
use crate::tpm::{mc_tpm_statistics, tpm_spectral_stats, tpm_variance_closed_form};
use crate::witness::{detect_schmidt_number, WitnessReport};

pub const CSV_SCHEMA: &str = "qbattery-csv v1";

/// Rows of numbers under fixed column names. Missing values are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub protocol: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn fmt_cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

impl Table {
    pub fn new(protocol: &str, columns: Vec<String>) -> Self {
        Table {
            protocol: protocol.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Value of `name` in row `row`.
    pub fn get(&self, row: usize, name: &str) -> Option<f64> {
        self.column(name).map(|c| self.rows[row][c])
    }

    /// Header line, column names, then rows. Empty cells are NaN.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {CSV_SCHEMA} protocol={}", self.protocol)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|x| fmt_cell(*x)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Array of objects keyed by column name; NaN becomes `null`.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, x)| (c.clone(), serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number)))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn point_columns() -> Vec<String> {
    ["b", "alpha", "T"].iter().map(|s| s.to_string()).collect()
}

fn point_values(p: &GridPoint) -> [f64; 3] {
    [
        p.b.unwrap_or(f64::NAN),
        p.alpha.unwrap_or(f64::NAN),
        p.temperature.unwrap_or(f64::NAN),
    ]
}

fn bound_columns(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("bound_k{k}")).collect()
}

struct Instance {
    point: GridPoint,
    h: BatteryHamiltonian,
    rho: DensityMatrix,
}

fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    cfg.grid()
        .into_par_iter()
        .map(|point| {
            let h = cfg.battery_at(point.b)?;
            let rho = cfg.state_at(&point, &h)?;
            Ok(Instance { point, h, rho })
        })
        .collect()
}

fn local_dim(cfg: &ExperimentConfig) -> Result<usize> {
    Ok(cfg.battery_at(cfg.grid().first().and_then(|p| p.b))?.d())
}

/// Closed-form variance, witness bounds for `k = 1..d`, detected Schmidt
/// number and PPT minimum eigenvalue per grid point; optional MC columns.
pub fn run_variance_sweep(cfg: &ExperimentConfig) -> Result<Table> {
    let d = local_dim(cfg)?;
    let mc = cfg.sampling.monte_carlo;
    let seed = if mc { Some(cfg.seed()?) } else { None };
    let mut columns = point_columns();
    columns.extend(["mean", "variance", "r_a2", "r_b2", "t2"].map(String::from));
    columns.extend(bound_columns(d));
    columns.extend(["detected_sn", "purity_sn", "ppt_min_eig"].map(String::from));
    if mc {
        columns.extend(["stream", "mc_mean", "mc_variance", "mc_se_variance"].map(String::from));
    }
    let insts = instances(cfg)?;
    let rows = insts
        .par_iter()
        .enumerate()
        .map(|(idx, inst)| {
            let stats = analytic_work_variance(&inst.rho, &inst.h)?;
            let rep = detect_schmidt_number(&inst.rho, &inst.h)?;
            let mut row = point_values(&inst.point).to_vec();
            row.extend([stats.mean, stats.variance, rep.sectors.r_a2, rep.sectors.r_b2, rep.sectors.t2]);
            row.extend(rep.thresholds.iter().map(|t| t.bound));
            row.extend([
                rep.detected_sn_lower_bound as f64,
                rep.purity_sn_lower_bound as f64,
                rep.ppt_min_eig,
            ]);
            if let Some(seed) = seed {
                let sc = SamplerConfig::new(d, seed).with_stream(idx as u64);
                let m = mc_work_statistics(&inst.rho, &inst.h, cfg.sampling.n_unitaries, sc)?;
                row.extend([idx as f64, m.mean, m.variance, m.se_variance]);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        protocol: "variance".into(),
        columns,
        rows,
    })
}

/// Full witness report per grid point.
#[derive(Clone, Debug, Serialize)]
pub struct WitnessRow {
    pub point: GridPoint,
    pub report: WitnessReport,
}

pub fn run_witness(cfg: &ExperimentConfig) -> Result<Vec<WitnessRow>> {
    instances(cfg)?
        .par_iter()
        .map(|inst| {
            Ok(WitnessRow {
                point: inst.point,
                report: detect_schmidt_number(&inst.rho, &inst.h)?,
            })
        })
        .collect()
}

pub fn witness_table(rows: &[WitnessRow]) -> Table {
    let d = rows.first().map_or(0, |r| r.report.d);
    let mut columns = point_columns();
    columns.push("variance".into());
    columns.extend(bound_columns(d));
    columns.extend(
        ["detected_sn", "purity_sn", "routes_agree", "ppt_min_eig", "pure_state_sn"].map(String::from),
    );
    let rows = rows
        .iter()
        .map(|r| {
            let rep = &r.report;
            let mut row = point_values(&r.point).to_vec();
            row.push(rep.variance_used);
            row.extend(rep.thresholds.iter().map(|t| t.bound));
            row.extend([
                rep.detected_sn_lower_bound as f64,
                rep.purity_sn_lower_bound as f64,
                f64::from(u8::from(rep.routes_agree())),
                rep.ppt_min_eig,
                rep.pure_state_branch
                    .as_ref()
                    .map_or(f64::NAN, |p| p.detected_sn_lower_bound as f64),
            ]);
            row
        })
        .collect();
    Table {
        protocol: "witness".into(),
        columns,
        rows,
    }
}

/// Histogram and its summary for one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct HistogramSummary {
    pub point: GridPoint,
    pub seed: u64,
    pub stream: u64,
    pub histogram: WorkHistogram,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    pub variance_z: f64,
    pub bounds: Vec<f64>,
    pub detected_sn: usize,
}

#[derive(Clone, Debug)]
pub struct HistogramRun {
    pub bins: Table,
    pub summaries: Vec<HistogramSummary>,
}

impl HistogramRun {
    pub fn summary_json(&self) -> Value {
        Value::Array(
            self.summaries
                .iter()
                .map(|s| {
                    json!({
                        "point": s.point,
                        "seed": s.seed,
                        "stream": s.stream,
                        "n_samples": s.histogram.n_samples,
                        "bin_width": s.histogram.bin_width,
                        "mean": s.histogram.statistics.mean,
                        "variance": s.histogram.statistics.variance,
                        "se_mean": s.histogram.statistics.se_mean,
                        "se_variance": s.histogram.statistics.se_variance,
                        "skewness": s.histogram.skewness,
                        "se_skewness": s.histogram.se_skewness,
                        "analytic_mean": s.analytic_mean,
                        "analytic_variance": s.analytic_variance,
                        "variance_z": s.variance_z,
                        "bounds": s.bounds,
                        "detected_sn": s.detected_sn,
                    })
                })
                .collect(),
        )
    }
}

/// Default grid: the two states of the reference histograms.
pub fn run_histogram(cfg: &ExperimentConfig) -> Result<HistogramRun> {
    let seed = cfg.seed()?;
    let d = local_dim(cfg)?;
    let mut cfg = cfg.clone();
    if cfg.parameters.alpha.is_none()
        && matches!(cfg.state, crate::config::StateSpec::ThermalMixture { alpha: None, .. })
    {
        cfg.parameters.alpha = Some(vec![0.96, 0.08]);
    }
    let width = cfg.bin_width();
    let insts = instances(&cfg)?;
    let mut summaries = Vec::with_capacity(insts.len());
    // Points run one after another; each histogram is stream-parallel.
    for (idx, inst) in insts.iter().enumerate() {
        let sc = SamplerConfig::new(d, seed).with_stream(idx as u64);
        let histogram = work_histogram(&inst.rho, &inst.h, cfg.sampling.n_unitaries, width, sc)?;
        let exact = analytic_work_variance(&inst.rho, &inst.h)?;
        let rep = detect_schmidt_number(&inst.rho, &inst.h)?;
        summaries.push(HistogramSummary {
            point: inst.point,
            seed,
            stream: idx as u64,
            variance_z: histogram.statistics.variance_z(exact.variance),
            analytic_mean: exact.mean,
            analytic_variance: exact.variance,
            bounds: rep.thresholds.iter().map(|t| t.bound).collect(),
            detected_sn: rep.detected_sn_lower_bound,
            histogram,
        });
    }
    let mut columns = point_columns();
    columns.extend(["bin_left", "bin_right", "count"].map(String::from));
    let mut bins = Table::new("histogram", columns);
    for s in &summaries {
        for (left, count) in s.histogram.bins() {
            let mut row = point_values(&s.point).to_vec();
            row.extend([left, left + s.histogram.bin_width, count as f64]);
            bins.rows.push(row);
        }
    }
    Ok(HistogramRun { bins, summaries })
}

/// Closed-form TPM variances and weights per `(grid point, ε_A, ε_B)`.
pub fn run_tpm_sweep(cfg: &ExperimentConfig) -> Result<Table> {
    let d = local_dim(cfg)?;
    let mc = cfg.sampling.monte_carlo;
    let seed = if mc { Some(cfg.seed()?) } else { None };
    let mut columns = point_columns();
    columns.extend(
        [
            "eps_a", "eps_b", "var_tpm", "var_d", "var_proj", "var_noisy", "mean_tpm", "n0", "n1",
            "n_noisy",
        ]
        .map(String::from),
    );
    columns.extend(bound_columns(d));
    if mc {
        columns.extend(["stream", "mc_var_tpm", "mc_se_var_tpm"].map(String::from));
    }
    let eps = cfg.epsilon_grid();
    let insts = instances(cfg)?;
    let jobs: Vec<(usize, &Instance, (f64, f64))> = insts
        .iter()
        .flat_map(|inst| eps.iter().map(move |e| (inst, *e)))
        .enumerate()
        .map(|(i, (inst, e))| (i, inst, e))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(idx, inst, (ea, eb))| {
            let spec = spectral_decomposition(&inst.h);
            let rep = tpm_variance_closed_form(&inst.rho, &spec, ea, eb)?;
            let wit = detect_schmidt_number(&inst.rho, &inst.h)?;
            let mut row = point_values(&inst.point).to_vec();
            row.extend([
                ea,
                eb,
                rep.var_tpm,
                rep.var_d,
                rep.var_proj.unwrap_or(f64::NAN),
                rep.var_noisy.unwrap_or(f64::NAN),
                rep.mean_tpm,
                rep.weights.n0,
                rep.weights.n1,
                rep.weights.n_noisy,
            ]);
            row.extend(wit.thresholds.iter().map(|t| t.bound));
            if let Some(seed) = seed {
                let sc = SamplerConfig::new(d, seed).with_stream(idx as u64);
                let m = mc_tpm_statistics(&inst.rho, &spec, ea, eb, cfg.sampling.n_unitaries, sc)?;
                row.extend([idx as f64, m.variance, m.se_variance]);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        protocol: "tpm".into(),
        columns,
        rows,
    })
}

/// Average coincidence and, for `ε_A = ε_B`, both sides of the coincidence
/// bound on the work variance.
pub fn run_coincidence(cfg: &ExperimentConfig) -> Result<Table> {
    let d = local_dim(cfg)?;
    let mc = cfg.sampling.monte_carlo;
    let seed = if mc { Some(cfg.seed()?) } else { None };
    let mut columns = point_columns();
    columns.extend(
        ["eps_a", "eps_b", "cbar", "variance", "t2", "obs4_lhs", "obs4_rhs", "obs4_slack"].map(String::from),
    );
    if mc {
        columns.extend(["stream", "mc_cbar", "mc_se_cbar"].map(String::from));
    }
    let eps = cfg.epsilon_grid();
    let insts = instances(cfg)?;
    let jobs: Vec<(usize, &Instance, (f64, f64))> = insts
        .iter()
        .flat_map(|inst| eps.iter().map(move |e| (inst, *e)))
        .enumerate()
        .map(|(i, (inst, e))| (i, inst, e))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(idx, inst, (ea, eb))| {
            let cbar = avg_coincidence_closed(&inst.rho, d, ea, eb)?;
            let s = SectorLengths::of(&inst.rho, d)?;
            let variance = crate::battery::variance_from_sectors(&s, &inst.h);
            let (lhs, rhs, slack) = match (ea == eb).then(|| obs4_bound(&inst.rho, &inst.h, ea)) {
                Some(Ok(r)) => (r.obs4_lhs, r.obs4_rhs, r.slack()),
                _ => (f64::NAN, f64::NAN, f64::NAN),
            };
            let mut row = point_values(&inst.point).to_vec();
            row.extend([ea, eb, cbar, variance, s.t2, lhs, rhs, slack]);
            if let Some(seed) = seed {
                let spec = spectral_decomposition(&inst.h);
                let sc = SamplerConfig::new(d, seed).with_stream(idx as u64);
                let e = mc_coincidence(&inst.rho, &spec, ea, eb, cfg.sampling.n_unitaries, sc)?;
                row.extend([idx as f64, e.value, e.se]);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        protocol: "coincidence".into(),
        columns,
        rows,
    })
}

/// One cross-check of the verification suite. Statistical checks pass when
/// `z ≤ tolerance`, exact checks when `deviation ≤ tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Largest absolute deviation from the exact value, or largest
    /// violation for inequality sweeps.
    pub deviation: f64,
    /// Standard error of the estimate; NaN for exact checks.
    pub se: f64,
    /// Deviation in standard errors; NaN for exact checks.
    pub z: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn statistical(name: &str, estimate: f64, se: f64, exact: f64, n_se: f64) -> Self {
        let deviation = (estimate - exact).abs();
        let z = z_score(deviation, se);
        Check {
            name: name.into(),
            deviation,
            se,
            z,
            tolerance: n_se,
            pass: z <= n_se,
        }
    }

    /// Elementwise comparison; `se` is the largest elementwise SE.
    fn matrix(name: &str, m: &MatrixMoments, exact: &CMatrix, n_se: f64) -> Self {
        let cmp = m.compare(exact, n_se, MATRIX_FLOOR);
        Check {
            name: name.into(),
            deviation: cmp.max_deviation,
            se: m.se().max(),
            z: cmp.max_z,
            tolerance: n_se,
            pass: cmp.pass,
        }
    }

    fn exact(name: &str, deviation: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            deviation,
            se: f64::NAN,
            z: f64::NAN,
            tolerance,
            pass: deviation <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub settings: VerifySettings,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

const EXACT_TOL: f64 = 1e-10;
const MATRIX_FLOOR: f64 = 1e-12;

/// Monte-Carlo cross-checks of every closed form plus exact inequality
/// sweeps over random instances.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let seed = cfg.seed()?;
    let v = cfg.verify.clone();
    let (d, n, n_se) = (v.d, v.n, v.n_se);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let x1 = linalg::random_hermitian(d, &mut rng);
    let m1 = mc_twirl1(&x1, n, seed)?;
    checks.push(Check::matrix("twirl1_vs_mc", &m1, &twirl1(&x1), n_se));

    let x2 = linalg::random_hermitian(d * d, &mut rng);
    let m2 = mc_twirl2(&x2, n, seed.wrapping_add(1))?;
    checks.push(Check::matrix("twirl2_vs_mc", &m2, &twirl2(&x2)?, n_se));

    let rho = random_state(d * d, d * d, &mut rng);
    let mp = mc_phi(&rho, d, n, seed.wrapping_add(2))?;
    checks.push(Check::matrix("phi_vs_mc", &mp, &phi_map(&rho, d)?, n_se));

    let h = random_battery(d, 0.7, &mut rng);
    let exact = analytic_work_variance(&rho, &h)?;
    let sc = SamplerConfig::new(d, seed.wrapping_add(3));
    let mc = mc_work_statistics(&rho, &h, n, sc)?;
    checks.push(Check::statistical("work_mean_vs_mc", mc.mean, mc.se_mean, exact.mean, n_se));
    checks.push(Check::statistical("work_variance_vs_mc", mc.variance, mc.se_variance, exact.variance, n_se));

    let spec = spectral_decomposition(&h);
    for (i, (ea, eb)) in [(0.5, 0.5), (0.3, 0.8)].into_iter().enumerate() {
        let rep = tpm_variance_closed_form(&rho, &spec, ea, eb)?;
        let sc = SamplerConfig::new(d, seed.wrapping_add(4)).with_stream(i as u64);
        let mc = mc_tpm_statistics(&rho, &spec, ea, eb, n, sc)?;
        checks.push(Check::statistical(
            &format!("tpm_variance_vs_mc[eps_a={ea},eps_b={eb}]"),
            mc.variance,
            mc.se_variance,
            rep.var_tpm,
            n_se,
        ));
        checks.push(Check::exact(
            &format!("tpm_variance_two_routes[eps_a={ea},eps_b={eb}]"),
            (rep.var_tpm - rep.var_tpm_xi).abs(),
            EXACT_TOL,
        ));
    }

    for (i, (ea, eb)) in [(0.7, 0.7), (0.4, 1.0)].into_iter().enumerate() {
        let closed = avg_coincidence_closed(&rho, d, ea, eb)?;
        let sc = SamplerConfig::new(d, seed.wrapping_add(5)).with_stream(i as u64);
        let e = mc_coincidence(&rho, &spec, ea, eb, n, sc)?;
        checks.push(Check::statistical(
            &format!("coincidence_vs_mc[eps_a={ea},eps_b={eb}]"),
            e.value,
            e.se,
            closed,
            n_se,
        ));
    }

    checks.extend(inequality_sweeps(d, v.instances, &mut rng)?);
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        settings: v,
        seed,
        checks,
        pass,
    })
}

/// Largest violation of each inequality over `count` random instances.
fn inequality_sweeps(d: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let df = d as f64;
    let mut worst = [0.0_f64; 8];
    for i in 0..count {
        let rank = 1 + i % (d * d);
        let rho = random_state(d * d, rank, rng);
        let h = random_battery(d, 0.7, rng);
        let spec = spectral_decomposition(&h);
        let s = SectorLengths::of(&rho, d)?;
        let st = tpm_spectral_stats(&rho, &spec)?;
        let ea = 0.05 + 0.95 * (i as f64 / count.max(1) as f64);
        let eb = 1.0 - 0.9 * (i as f64 / count.max(1) as f64);
        let rep = tpm_variance_closed_form(&rho, &spec, ea, eb)?;
        let obs4 = obs4_bound(&rho, &h, ea)?;
        let scale = 1.0 + rep.var_d.abs();
        let violations = [
            df * st.p_a2 - 1.0 - s.r_a2,
            df * st.p_b2 - 1.0 - s.r_b2,
            st.dephased_t2(d) - s.t2,
            st.zeta_a_contraction - s.t2,
            st.zeta_b_contraction - s.t2,
            (rep.var_tpm - rep.var_d) / scale,
            -obs4.slack() / (1.0 + obs4.obs4_rhs.abs()),
            (st.zeta_closing - st.dephased_t2(d)).abs(),
        ];
        for (w, x) in worst.iter_mut().zip(violations) {
            *w = w.max(x);
        }
    }
    let names = [
        "sweep_dephased_purity_a",
        "sweep_dephased_purity_b",
        "sweep_dephased_correlations",
        "sweep_zeta_a_contraction",
        "sweep_zeta_b_contraction",
        "sweep_tpm_below_ideal",
        "sweep_coincidence_bound",
        "sweep_zeta_closing_identity",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, w)| Check::exact(name, w, 1e-12))
        .collect())
}

/// What a run produced, ready to be written.
#[derive(Clone, Debug)]
pub enum RunOutput {
    Table(Table),
    Witness(Vec<WitnessRow>),
    Histogram(HistogramRun),
    Verify(VerifyReport),
}

impl RunOutput {
    /// Whether the run should be reported as a verification failure.
    pub fn failed(&self) -> bool {
        matches!(self, RunOutput::Verify(r) if !r.pass)
    }

    pub fn to_json(&self) -> Value {
        match self {
            RunOutput::Table(t) => t.to_json(),
            RunOutput::Witness(rows) => serde_json::to_value(rows).expect("serializable"),
            RunOutput::Histogram(h) => json!({"bins": h.bins.to_json(), "summary": h.summary_json()}),
            RunOutput::Verify(r) => serde_json::to_value(r).expect("serializable"),
        }
    }

    /// Primary output in the given format. Histograms in CSV form put the
    /// summary in a separate document, see [`RunOutput::write`].
    pub fn render(&self, format: Format) -> String {
        match (self, format) {
            (RunOutput::Table(t), Format::Csv) => t.to_csv_string(),
            (RunOutput::Witness(rows), Format::Csv) => witness_table(rows).to_csv_string(),
            (RunOutput::Histogram(h), Format::Csv) => h.bins.to_csv_string(),
            _ => serde_json::to_string_pretty(&self.to_json()).expect("serializable") + "\n",
        }
    }

    /// Writes to `path`, or stdout when `None`. A CSV histogram also writes
    /// `<path>.summary.json` (or prints the summary after the bins).
    pub fn write(&self, path: Option<&Path>, format: Format) -> Result<()> {
        let body = self.render(format);
        let summary = match (self, format) {
            (RunOutput::Histogram(h), Format::Csv) => {
                Some(serde_json::to_string_pretty(&h.summary_json()).expect("serializable") + "\n")
            }
            _ => None,
        };
        match path {
            Some(p) => {
                std::fs::write(p, body)?;
                if let Some(s) = summary {
                    std::fs::write(summary_path(p), s)?;
                }
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(body.as_bytes())?;
                if let Some(s) = summary {
                    out.write_all(s.as_bytes())?;
                }
            }
        }
        Ok(())
    }
}

pub fn summary_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

/// Runs the configured protocol.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    Ok(match cfg.protocol {
        Protocol::Variance => RunOutput::Table(run_variance_sweep(cfg)?),
        Protocol::Witness => RunOutput::Witness(run_witness(cfg)?),
        Protocol::Histogram => RunOutput::Histogram(run_histogram(cfg)?),
        Protocol::Tpm => RunOutput::Table(run_tpm_sweep(cfg)?),
        Protocol::Coincidence => RunOutput::Table(run_coincidence(cfg)?),
        Protocol::Verify => RunOutput::Verify(run_verify(cfg)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::StateSpec;

    fn fig2_cfg() -> ExperimentConfig {
        ExperimentConfig {
            parameters: crate::config::Parameters {
                b: Some(vec![0.0, 0.45]),
                alpha: Some(vec![0.0, 0.08, 0.96]),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn variance_sweep_endpoints() {
        let t = run_variance_sweep(&fig2_cfg()).unwrap();
        assert_eq!(t.rows.len(), 6);
        for r in 0..t.rows.len() {
            if t.get(r, "alpha") == Some(0.0) {
                assert_eq!(t.get(r, "detected_sn"), Some(1.0));
            }
            if t.get(r, "alpha") == Some(0.96) && t.get(r, "b") == Some(0.45) {
                let v = t.get(r, "variance").unwrap();
                assert!(v > t.get(r, "bound_k3").unwrap());
                assert_eq!(t.get(r, "detected_sn"), Some(4.0));
            }
        }
    }

    #[test]
    fn single_point_matches_direct_call() {
        let mut cfg = fig2_cfg();
        cfg.parameters.b = Some(vec![0.3]);
        cfg.parameters.alpha = Some(vec![0.7]);
        let t = run_variance_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        let fam = crate::battery::IsingFamily::REFERENCE;
        let rho = fam.state(0.3, 0.7).unwrap();
        let exact = analytic_work_variance(&rho, &fam.battery(0.3)).unwrap();
        assert_eq!(t.get(0, "variance"), Some(exact.variance));
    }

    #[test]
    fn csv_and_json_shapes() {
        let t = run_variance_sweep(&fig2_cfg()).unwrap();
        let csv = t.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# qbattery-csv v1 protocol=variance"));
        assert!(lines.next().unwrap().starts_with("b,alpha,T,mean,variance"));
        assert_eq!(csv.lines().count(), 2 + t.rows.len());
        let j = t.to_json();
        assert_eq!(j.as_array().unwrap().len(), t.rows.len());
        assert!(j[0]["bound_k1"].is_number());
    }

    #[test]
    fn tpm_weights_sum_to_one_and_mc_is_reproducible() {
        let mut cfg = fig2_cfg();
        cfg.protocol = Protocol::Tpm;
        cfg.parameters.b = None;
        cfg.parameters.alpha = Some(vec![0.5]);
        cfg.sampling.monte_carlo = true;
        cfg.sampling.seed = Some(3);
        cfg.sampling.n_unitaries = 200;
        let t = run_tpm_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 3);
        for r in 0..3 {
            let s = t.get(r, "n0").unwrap() + t.get(r, "n1").unwrap() + t.get(r, "n_noisy").unwrap();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(t.to_csv_string(), run_tpm_sweep(&cfg).unwrap().to_csv_string());
        // row 1 recomputed from its echoed parameters
        let fam = crate::battery::IsingFamily::REFERENCE;
        let h = fam.battery(0.45);
        let spec = spectral_decomposition(&h);
        let stream = t.get(1, "stream").unwrap() as u64;
        let sc = SamplerConfig::new(4, 3).with_stream(stream);
        let eps = t.get(1, "eps_a").unwrap();
        let m = mc_tpm_statistics(&fam.state(0.45, 0.5).unwrap(), &spec, eps, eps, 200, sc).unwrap();
        assert_eq!(t.get(1, "mc_var_tpm"), Some(m.variance));
    }

    #[test]
    fn coincidence_sweep_on_isotropic_states() {
        let cfg = ExperimentConfig {
            protocol: Protocol::Coincidence,
            state: StateSpec::Isotropic { alpha: None },
            parameters: crate::config::Parameters {
                alpha: Some(vec![0.0, 0.5, 1.0]),
                eps: Some(vec![0.3, 1.0]),
                ..Default::default()
            },
            ..Default::default()
        };
        let t = run_coincidence(&cfg).unwrap();
        assert_eq!(t.rows.len(), 6);
        for r in 0..6 {
            assert!(t.get(r, "obs4_slack").unwrap() >= -1e-12);
        }
    }

    #[test]
    fn verify_passes_and_corrupted_tolerance_fails() {
        let mut cfg = ExperimentConfig {
            protocol: Protocol::Verify,
            ..Default::default()
        };
        cfg.sampling.seed = Some(1);
        cfg.verify.n = 4000;
        cfg.verify.instances = 20;
        let rep = run_verify(&cfg).unwrap();
        assert!(rep.pass, "{:?}", rep.failures().collect::<Vec<_>>());
        let again = run_verify(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&rep).unwrap(), serde_json::to_string(&again).unwrap());
        cfg.verify.n_se = 0.0;
        let bad = run_verify(&cfg).unwrap();
        assert!(!bad.pass);
        assert!(bad.failures().all(|c| c.deviation > 0.0));
    }
}
