//! Runs a parsed scenario and writes its result files.
//!
//! Every experiment writes `results.csv` and `manifest.txt`. The manifest is
//! the effective scenario, so `andcoop run manifest.txt` regenerates the same
//! results. Extras depend on the kind:
//!
//! | kind | extras |
//! |------|--------|
//! | single, sweeps, pilot_tradeoff | `k_weak_histogram.csv`, `relay_energy.csv` |
//! | dmt | `dmt.csv` |
//! | optimize | `surface.csv`, `k_weak_histogram.csv`, `relay_energy.csv` |
//! | coverage | `coverage_summary.csv` and one matrix CSV per map |

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use andcoop::analytic::{dmt_single_hop, dmt_two_hop, multiplexing_grid, p2h_closed_form, IidScenario};
use andcoop::channel::{sample_placement, CsiMode};
use andcoop::coverage::{compute_coverage, CoverageResult};
use andcoop::montecarlo::{run, PlacementMode, RunSpec, RunStats};
use andcoop::optimizer::{default_beta_grid, default_theta_grid, optimize, OptSpec};
use andcoop::protocol::Scheme;
use andcoop::{db_to_linear, Error};

use crate::scenario::{emit, ExperimentKind, PlacementSetting, Scenario};
use crate::CliError;

/// Swept parameters of a row, in sweep order.
pub type Axis = Vec<(String, f64)>;

/// First line of every `results.csv`.
pub const RESULTS_VERSION_LINE: &str = "# andcoop-results v1";

pub const RESULTS_COLUMNS: [&str; 9] = [
    "axis",
    "eta_bpcu",
    "outage",
    "se",
    "n_cycles",
    "k_weak_mean",
    "overflow_rate",
    "mean_relay_energy_j",
    "source",
];

/// `andcoop <version> (<git describe>)`.
pub fn version_string() -> String {
    format!("andcoop {} ({})", env!("CARGO_PKG_VERSION"), env!("ANDCOOP_GIT_DESCRIBE"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    MonteCarlo,
    Analytic,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::MonteCarlo => "montecarlo",
            Source::Analytic => "analytic",
        }
    }
}

/// One line of `results.csv`. Missing values are written as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub axis: Axis,
    pub eta_bpcu: f64,
    pub outage: Option<f64>,
    pub se: Option<f64>,
    pub n_cycles: u64,
    pub k_weak_mean: Option<f64>,
    pub overflow_rate: Option<f64>,
    pub mean_relay_energy_j: Option<f64>,
    pub source: Source,
}

impl ResultRow {
    fn montecarlo(axis: Axis, eta: f64, stats: Option<&RunStats>) -> Self {
        ResultRow {
            axis,
            eta_bpcu: eta,
            outage: stats.map(|s| s.outage.estimate),
            se: stats.map(|s| s.outage.std_error),
            n_cycles: stats.map_or(0, |s| s.n_cycles()),
            k_weak_mean: stats.map(|s| s.mean_k_weak()),
            overflow_rate: stats.map(|s| s.overflow_rate),
            mean_relay_energy_j: stats.map(|s| s.mean_relay_energy_j()),
            source: Source::MonteCarlo,
        }
    }

    fn analytic(axis: Axis, eta: f64, outage: f64) -> Self {
        ResultRow {
            axis,
            eta_bpcu: eta,
            outage: Some(outage),
            se: Some(0.0),
            n_cycles: 0,
            k_weak_mean: None,
            overflow_rate: None,
            mean_relay_energy_j: None,
            source: Source::Analytic,
        }
    }

    /// `name=value` pairs joined by `;`, or `none`.
    pub fn axis_label(&self) -> String {
        axis_label(&self.axis)
    }
}

fn axis_label(axis: &[(String, f64)]) -> String {
    if axis.is_empty() {
        return "none".into();
    }
    axis.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// What an execution produced.
#[derive(Debug, Default)]
pub struct ExecSummary {
    pub rows: Vec<ResultRow>,
    pub files: Vec<PathBuf>,
    /// Per-point failures; the other points were still written.
    pub failures: Vec<CliError>,
}

/// Builds the engine spec for a scenario.
pub fn run_spec(sc: &Scenario) -> RunSpec {
    let placement = match sc.run.placement {
        PlacementSetting::PerBlock(b) => PlacementMode::PerBlock(b),
        PlacementSetting::PerCycle => PlacementMode::PerCycle,
        PlacementSetting::Fixed(seed) => PlacementMode::Fixed(sample_placement(&sc.network, seed)),
    };
    RunSpec {
        cfg: sc.network.clone(),
        params: sc.protocol,
        n_cycles: sc.run.cycles,
        master_seed: sc.run.seed,
        placement,
        iid_snr: sc.run.iid_snr_db.map(db_to_linear),
    }
}

fn eta(sc: &Scenario) -> f64 {
    let n = &sc.network;
    n.n_devices as f64 * n.payload_bits / (n.cycle_s * n.bandwidth_hz)
}

/// Closed-form outage when the scenario is an i.i.d. all-two-hop network.
fn analytic_outage(sc: &Scenario) -> Option<f64> {
    let effective_two_hop = matches!(sc.protocol.scheme, Scheme::TwoHop)
        || (sc.protocol.scheme == Scheme::AndCoop && sc.protocol.beta == 0.0);
    if !effective_two_hop || sc.protocol.csi != CsiMode::Perfect {
        return None;
    }
    let snr = db_to_linear(sc.run.iid_snr_db?);
    let n = &sc.network;
    let scn = IidScenario::two_hop(
        n.n_devices as u32,
        n.n_aps as u32,
        snr,
        n.payload_bits,
        n.cycle_s,
        sc.protocol.alpha,
        n.bandwidth_hz,
    );
    p2h_closed_form(&scn).ok()
}

/// Scenario variants evaluated by a sweep-like experiment.
fn sweep_points(sc: &Scenario) -> Result<Vec<(Axis, Scenario)>, CliError> {
    let e = &sc.experiment;
    let missing = |key: &str| CliError::Config(format!("experiment kind {} needs '{key}' in [experiment]", e.kind));
    let mut points = Vec::new();
    match e.kind {
        ExperimentKind::Single => points.push((Vec::new(), sc.clone())),
        ExperimentKind::PowerSweep if sc.run.iid_snr_db.is_some() => {
            for &v in e.snrs_db.as_ref().ok_or_else(|| missing("snrs_db"))? {
                let mut s = sc.clone();
                s.run.iid_snr_db = Some(v);
                points.push((vec![("snr_db".into(), v)], s));
            }
        }
        ExperimentKind::PowerSweep => {
            for &v in e.powers_dbm.as_ref().ok_or_else(|| missing("powers_dbm"))? {
                let mut s = sc.clone();
                s.network.p_ap_dbm = v;
                s.network.p_dev_dbm = v;
                points.push((vec![("power_dbm".into(), v)], s));
            }
        }
        ExperimentKind::RateSweep => {
            for &v in e.payloads_bytes.as_ref().ok_or_else(|| missing("payloads_bytes"))? {
                let mut s = sc.clone();
                s.network.payload_bits = 8.0 * v;
                points.push((vec![("payload_bytes".into(), v)], s));
            }
        }
        ExperimentKind::PopulationSweep => {
            for &v in e.populations.as_ref().ok_or_else(|| missing("populations"))? {
                let mut s = sc.clone();
                s.network.n_devices = v;
                points.push((vec![("n_devices".into(), v as f64)], s));
            }
        }
        ExperimentKind::PilotTradeoff => {
            if sc.protocol.csi != CsiMode::Imperfect {
                return Err(CliError::Config("pilot_tradeoff needs csi = imperfect".into()));
            }
            for &v in e.pilot_counts.as_ref().ok_or_else(|| missing("pilot_counts"))? {
                let mut s = sc.clone();
                s.protocol.pilots = v;
                points.push((vec![("pilots".into(), v as f64)], s));
            }
        }
        _ => unreachable!("not a sweep kind"),
    }
    Ok(points)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<File, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        self.files.push(path);
        Ok(f)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn results(&mut self, rows: &[ResultRow]) -> Result<(), CliError> {
        let mut f = self.create("results.csv")?;
        writeln!(f, "{RESULTS_VERSION_LINE}")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(RESULTS_COLUMNS)?;
        for r in rows {
            w.write_record([
                r.axis_label(),
                r.eta_bpcu.to_string(),
                opt(r.outage),
                opt(r.se),
                r.n_cycles.to_string(),
                opt(r.k_weak_mean),
                opt(r.overflow_rate),
                opt(r.mean_relay_energy_j),
                r.source.tag().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn run_extras(&mut self, stats: &[(String, &RunStats)]) -> Result<(), CliError> {
        let hist = stats.iter().flat_map(|(axis, s)| {
            s.k_weak_histogram.iter().enumerate().map(move |(k, c)| vec![axis.clone(), k.to_string(), c.to_string()])
        });
        self.csv("k_weak_histogram.csv", &["axis", "k_weak", "count"], hist)?;
        let energy = stats.iter().flat_map(|(axis, s)| {
            s.relay_energy_samples.iter().enumerate().map(move |(i, e)| vec![axis.clone(), i.to_string(), e.to_string()])
        });
        self.csv("relay_energy.csv", &["axis", "cycle", "energy_j"], energy)
    }

    fn manifest(&mut self, sc: &Scenario) -> Result<(), CliError> {
        let mut f = self.create("manifest.txt")?;
        writeln!(f, "# andcoop run manifest")?;
        writeln!(f, "# version: {}", version_string())?;
        writeln!(
            f,
            "# seeds: master {}; cycle i draws from stream (master, cycle, i); placement block j from (master, placement, j) and (master, statics, j)",
            sc.run.seed
        )?;
        writeln!(f, "# rerun: andcoop run manifest.txt --out <dir>")?;
        writeln!(f)?;
        f.write_all(emit(sc).as_bytes())?;
        Ok(())
    }

    fn coverage(&mut self, res: &CoverageResult) -> Result<(), CliError> {
        let n = res.resolution;
        let frac = |f: &andcoop::coverage::Fractions| [f.single_hop, f.broadcast, f.relay, f.combined];
        let all = frac(&res.fractions);
        let shadow = res.shadow_fractions.as_ref().map(frac);
        let names = ["single_hop", "broadcast", "relay", "combined"];
        let rows = (0..4).map(|i| vec![names[i].to_string(), all[i].to_string(), opt(shadow.map(|s| s[i]))]);
        self.csv("coverage_summary.csv", &["phase", "fraction", "shadow_fraction"], rows)?;

        let float_maps = [("coverage_ap_snr_db.csv", &res.ap_snr_db), ("coverage_relay_snr_db.csv", &res.relay_snr_db)];
        for (name, data) in float_maps {
            self.matrix(name, n, data.iter().map(|v| v.to_string()))?;
        }
        let masks = [
            ("coverage_single_hop.csv", &res.single_hop),
            ("coverage_broadcast.csv", &res.broadcast),
            ("coverage_relay.csv", &res.relay),
            ("coverage_combined.csv", &res.combined),
            ("coverage_shadow.csv", &res.shadow),
        ];
        for (name, data) in masks {
            self.matrix(name, n, data.iter().map(|&b| (b as u8).to_string()))?;
        }
        Ok(())
    }

    /// Row `r` holds the points at the `r`-th y coordinate.
    fn matrix(&mut self, name: &str, n: usize, cells: impl Iterator<Item = String>) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(self.create(name)?);
        let cells: Vec<String> = cells.collect();
        for row in cells.chunks(n) {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_sweep(sc: &Scenario, out: &mut Outputs, summary: &mut ExecSummary) -> Result<(), CliError> {
    let points = sweep_points(sc)?;
    let mut ok_stats = Vec::new();
    let mut analytic = Vec::new();
    for (axis, point) in &points {
        let stats = run(&run_spec(point));
        match &stats {
            Ok(_) => {}
            Err(e) => summary.failures.push(CliError::from(e.clone()).with_context(&axis_label(axis))),
        }
        summary.rows.push(ResultRow::montecarlo(axis.clone(), eta(point), stats.as_ref().ok()));
        if let Some(p) = analytic_outage(point) {
            analytic.push(ResultRow::analytic(axis.clone(), eta(point), p));
        }
        if let Ok(s) = stats {
            ok_stats.push((axis_label(axis), s));
        }
    }
    summary.rows.extend(analytic);
    out.results(&summary.rows)?;
    let refs: Vec<(String, &RunStats)> = ok_stats.iter().map(|(a, s)| (a.clone(), s)).collect();
    out.run_extras(&refs)
}

fn run_optimize(sc: &Scenario, out: &mut Outputs, summary: &mut ExecSummary) -> Result<(), CliError> {
    let e = &sc.experiment;
    let perfect = sc.protocol.csi == CsiMode::Perfect;
    let spec = OptSpec {
        base: run_spec(sc),
        beta_grid: e.beta_grid.clone().unwrap_or_else(default_beta_grid),
        theta_grid: e.theta_grid.clone().unwrap_or_else(|| if perfect { vec![1.0] } else { default_theta_grid() }),
        pilots: sc.protocol.pilots,
        cycles_per_point: sc.run.cycles,
    };
    let res = optimize(&spec)?;
    let axis = vec![("beta".to_string(), res.beta_hat), ("theta".to_string(), res.theta_hat)];
    summary.rows.push(ResultRow::montecarlo(axis.clone(), eta(sc), Some(&res.stats_at_opt)));
    out.results(&summary.rows)?;
    out.create("surface.csv")?.write_all(res.surface_csv().as_bytes())?;
    out.run_extras(&[(axis_label(&axis), &res.stats_at_opt)])
}

fn run_dmt(sc: &Scenario, out: &mut Outputs) -> Result<(), CliError> {
    let m = sc.network.n_aps as u32;
    let n = sc.network.n_devices as u32;
    let grid = multiplexing_grid(sc.experiment.dmt_points);
    let (lo, hi) = dmt_single_hop(m, n, &grid);
    let two = dmt_two_hop(m, n, sc.protocol.alpha, &grid)?;
    let rows = (0..grid.len()).map(|i| {
        vec![grid[i].to_string(), lo.diversity[i].to_string(), hi.diversity[i].to_string(), two.diversity[i].to_string()]
    });
    out.results(&[])?;
    out.csv("dmt.csv", &["multiplexing", "single_hop_lower", "single_hop_upper", "two_hop"], rows)
}

impl CliError {
    fn with_context(self, ctx: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{ctx}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{ctx}: {m}")),
        }
    }
}

fn execute_inner(sc: &Scenario, out_dir: &Path) -> Result<ExecSummary, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", out_dir.display())))?;
    let mut out = Outputs { dir: out_dir.to_path_buf(), files: Vec::new() };
    let mut summary = ExecSummary::default();
    match sc.experiment.kind {
        ExperimentKind::Dmt => run_dmt(sc, &mut out)?,
        ExperimentKind::Optimize => run_optimize(sc, &mut out, &mut summary)?,
        ExperimentKind::Coverage => {
            let res = compute_coverage(&sc.coverage.map_spec(&sc.network))?;
            out.results(&[])?;
            out.coverage(&res)?;
        }
        _ => run_sweep(sc, &mut out, &mut summary)?,
    }
    out.manifest(sc)?;
    summary.files = out.files;
    Ok(summary)
}

/// Runs `sc` and writes its files into `out_dir`.
///
/// `workers` pins the thread count; results do not depend on it.
pub fn execute(sc: &Scenario, out_dir: &Path, workers: Option<usize>) -> Result<ExecSummary, CliError> {
    match workers {
        None => execute_inner(sc, out_dir),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| CliError::from(Error::InvalidArgument(format!("cannot start worker pool: {e}"))))?;
            pool.install(|| execute_inner(sc, out_dir))
        }
    }
}
