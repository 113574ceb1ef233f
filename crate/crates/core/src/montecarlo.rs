//! Replication engine.
//!
//! Cycle `i` of a run draws its fading from the child seed
//! `(master_seed, Cycle, i)`; placements and link statics are keyed by their
//! block index the same way. Work is split into fixed-size chunks that do not
//! depend on the worker count and merged in chunk order, so a run is
//! bit-identical however many threads execute it.

use rayon::prelude::*;

use crate::channel::{link_statics, sample_cycle, sample_placement, LinkStatics, NetworkConfig, Placement};
use crate::protocol::{run_scheme, CycleOutcome, ProtocolParams, Scheme};
use crate::rng::{child_seed, Domain};
use crate::{Error, Result};

/// Target cycles per parallel work item.
const CHUNK_CYCLES: u64 = 1024;

/// Default placement cadence.
pub const DEFAULT_BLOCK: u64 = 100;

/// How device and AP positions evolve across cycles.
#[derive(Debug, Clone, PartialEq)]
pub enum PlacementMode {
    /// One placement for the whole run.
    Fixed(Placement),
    /// Fresh placement and large-scale statics every cycle.
    PerCycle,
    /// Fresh placement every `n` cycles.
    PerBlock(u64),
}

/// Everything needed to reproduce one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub cfg: NetworkConfig,
    pub params: ProtocolParams,
    pub n_cycles: u64,
    pub master_seed: u64,
    pub placement: PlacementMode,
    /// Replace geometry with one nominal linear SNR on every link.
    pub iid_snr: Option<f64>,
}

impl RunSpec {
    pub fn new(cfg: NetworkConfig, params: ProtocolParams, n_cycles: u64, master_seed: u64) -> Self {
        RunSpec { cfg, params, n_cycles, master_seed, placement: PlacementMode::PerBlock(DEFAULT_BLOCK), iid_snr: None }
    }

    /// Spec on the i.i.d. channel with nominal linear SNR `snr`.
    pub fn iid(cfg: NetworkConfig, params: ProtocolParams, snr: f64, n_cycles: u64, master_seed: u64) -> Self {
        RunSpec { iid_snr: Some(snr), ..Self::new(cfg, params, n_cycles, master_seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(Error::config("a run needs at least one cycle"));
        }
        self.cfg.validate()?;
        self.params.validate()?;
        self.params.data_time(&self.cfg)?;
        if let Scheme::KBest(k) = self.params.scheme {
            if k > self.cfg.n_devices {
                return Err(Error::config(format!("K = {k} exceeds the {} devices", self.cfg.n_devices)));
            }
        }
        match &self.placement {
            PlacementMode::PerBlock(0) => return Err(Error::config("placement block size must be positive")),
            PlacementMode::Fixed(p) if p.aps.len() != self.cfg.n_aps || p.devices.len() != self.cfg.n_devices => {
                return Err(Error::config("fixed placement does not match the network size"))
            }
            _ => {}
        }
        if let Some(snr) = self.iid_snr {
            if !(snr > 0.0) {
                return Err(Error::config(format!("i.i.d. SNR must be positive, got {snr}")));
            }
        }
        Ok(())
    }
}

/// Bernoulli probability estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub std_error: f64,
    pub n_trials: u64,
    pub n_events: u64,
}

impl EstimateWithCI {
    pub fn from_counts(n_events: u64, n_trials: u64) -> Self {
        assert!(n_trials > 0 && n_events <= n_trials);
        let p = n_events as f64 / n_trials as f64;
        EstimateWithCI { estimate: p, std_error: (p * (1.0 - p) / n_trials as f64).sqrt(), n_trials, n_events }
    }

    pub fn from_bernoulli(outcomes: impl IntoIterator<Item = bool>) -> Self {
        let (mut events, mut trials) = (0, 0);
        for o in outcomes {
            trials += 1;
            events += o as u64;
        }
        Self::from_counts(events, trials)
    }

    /// `sqrt(se₁² + se₂²)`.
    pub fn combined_se(&self, other: &EstimateWithCI) -> f64 {
        self.std_error.hypot(other.std_error)
    }

    /// `|self − value| ≤ k · se`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

/// Aggregated statistics of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub outage: EstimateWithCI,
    /// `histogram[k]` counts cycles with `k` weak devices.
    pub k_weak_histogram: Vec<u64>,
    /// Mean relay energy per device, one sample per cycle, joules.
    pub relay_energy_samples: Vec<f64>,
    pub overflow_rate: f64,
}

impl RunStats {
    pub fn n_cycles(&self) -> u64 {
        self.outage.n_trials
    }

    pub fn mean_k_weak(&self) -> f64 {
        let total: u64 = self.k_weak_histogram.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
        total as f64 / self.n_cycles() as f64
    }

    pub fn mean_relay_energy_j(&self) -> f64 {
        self.relay_energy_samples.iter().sum::<f64>() / self.relay_energy_samples.len() as f64
    }
}

#[derive(Debug, Default)]
struct Partial {
    events: u64,
    overflows: u64,
    histogram: Vec<u64>,
    energy: Vec<f64>,
}

impl Partial {
    fn record(&mut self, outcome: &CycleOutcome) {
        self.events += outcome.system_outage as u64;
        self.overflows += outcome.overflow as u64;
        self.histogram[outcome.k_weak] += 1;
        self.energy.push(outcome.mean_relay_energy_j());
    }
}

fn statics_for(spec: &RunSpec, block: u64) -> Result<LinkStatics> {
    let cfg = &spec.cfg;
    if let Some(snr) = spec.iid_snr {
        return Ok(LinkStatics::iid(cfg.n_aps, cfg.n_devices, snr));
    }
    let seed = child_seed(spec.master_seed, Domain::Statics, block);
    match &spec.placement {
        PlacementMode::Fixed(p) => link_statics(cfg, p, seed),
        _ => {
            let p = sample_placement(cfg, child_seed(spec.master_seed, Domain::Placement, block));
            link_statics(cfg, &p, seed)
        }
    }
}

fn run_range(spec: &RunSpec, start: u64, end: u64, shared: Option<&LinkStatics>) -> Result<Partial> {
    let mut part = Partial { histogram: vec![0; spec.cfg.n_devices + 1], ..Default::default() };
    part.energy.reserve((end - start) as usize);
    let block_len = match spec.placement {
        PlacementMode::PerCycle => 1,
        PlacementMode::PerBlock(b) => b,
        PlacementMode::Fixed(_) => u64::MAX,
    };
    let mut current: Option<(u64, LinkStatics)> = None;
    for i in start..end {
        let statics = match shared {
            Some(s) => s,
            None => {
                let block = i / block_len;
                if current.as_ref().map(|c| c.0) != Some(block) {
                    current = Some((block, statics_for(spec, block)?));
                }
                &current.as_ref().expect("set above").1
            }
        };
        let seed = child_seed(spec.master_seed, Domain::Cycle, i);
        let realization = sample_cycle(statics, spec.params.pilots, spec.params.csi, seed)?;
        let outcome = run_scheme(&realization, &spec.params, &spec.cfg)?;
        part.record(&outcome);
    }
    Ok(part)
}

fn chunk_len(spec: &RunSpec) -> u64 {
    match spec.placement {
        PlacementMode::PerBlock(b) if spec.iid_snr.is_none() => b * CHUNK_CYCLES.div_ceil(b),
        _ => CHUNK_CYCLES,
    }
}

/// Runs every cycle of `spec` on the global thread pool.
pub fn run(spec: &RunSpec) -> Result<RunStats> {
    spec.validate()?;
    let shared = match (&spec.placement, spec.iid_snr) {
        (_, Some(_)) | (PlacementMode::Fixed(_), None) => Some(statics_for(spec, 0)?),
        _ => None,
    };
    let chunk = chunk_len(spec);
    let n_chunks = spec.n_cycles.div_ceil(chunk);
    let parts: Vec<Result<Partial>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| run_range(spec, c * chunk, ((c + 1) * chunk).min(spec.n_cycles), shared.as_ref()))
        .collect();

    let mut events = 0;
    let mut overflows = 0;
    let mut histogram = vec![0u64; spec.cfg.n_devices + 1];
    let mut energy = Vec::with_capacity(spec.n_cycles as usize);
    for part in parts {
        let part = part?;
        events += part.events;
        overflows += part.overflows;
        for (h, c) in histogram.iter_mut().zip(&part.histogram) {
            *h += c;
        }
        energy.extend_from_slice(&part.energy);
    }
    Ok(RunStats {
        outage: EstimateWithCI::from_counts(events, spec.n_cycles),
        k_weak_histogram: histogram,
        relay_energy_samples: energy,
        overflow_rate: overflows as f64 / spec.n_cycles as f64,
    })
}

/// Runs `spec` on a dedicated pool with `workers` threads.
pub fn run_with_workers(spec: &RunSpec, workers: usize) -> Result<RunStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run(spec))
}

/// One point of a sweep: axis labels plus the spec to run.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub axis: Vec<(String, f64)>,
    pub spec: RunSpec,
}

/// Result row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub axis: Vec<(String, f64)>,
    pub stats: Result<RunStats>,
}

/// Runs each point in order. A failing point yields an error row and the
/// sweep continues.
pub fn sweep(points: Vec<SweepPoint>) -> Result<Vec<SweepRow>> {
    if points.is_empty() {
        return Err(Error::arg("sweep needs at least one point"));
    }
    Ok(points.into_iter().map(|p| SweepRow { stats: run(&p.spec), axis: p.axis }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn small_spec(cycles: u64) -> RunSpec {
        let cfg = NetworkConfig { n_devices: 6, n_aps: 2, p_ap_dbm: 0.0, p_dev_dbm: 0.0, ..Default::default() };
        RunSpec::new(cfg, ProtocolParams::perfect(Scheme::AndCoop, 0.4), cycles, 11)
    }

    #[test]
    fn rejects_zero_cycles() {
        assert!(matches!(run(&small_spec(0)), Err(Error::Config(_))));
    }

    #[test]
    fn infinite_power_never_fails() {
        let cfg = NetworkConfig { n_devices: 5, n_aps: 1, ..Default::default() };
        let spec = RunSpec::iid(cfg, ProtocolParams::perfect(Scheme::TwoHop, 0.0), f64::INFINITY, 10_000, 1);
        let stats = run(&spec).unwrap();
        assert_eq!(stats.outage.estimate, 0.0);
        assert_eq!(stats.outage.std_error, 0.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut spec = small_spec(5_000);
        spec.placement = PlacementMode::PerBlock(37);
        let one = run_with_workers(&spec, 1).unwrap();
        let eight = run_with_workers(&spec, 8).unwrap();
        assert_eq!(one, eight);
        assert_eq!(one.k_weak_histogram.iter().sum::<u64>(), 5_000);
        assert_eq!(one.relay_energy_samples.len(), 5_000);
    }

    #[test]
    fn every_placement_mode_runs() {
        let base = small_spec(500);
        let fixed = sample_placement(&base.cfg, 5);
        for mode in [PlacementMode::Fixed(fixed), PlacementMode::PerCycle, PlacementMode::PerBlock(100)] {
            let spec = RunSpec { placement: mode, ..base.clone() };
            let stats = run(&spec).unwrap();
            assert_eq!(stats.n_cycles(), 500);
        }
        assert!(run(&RunSpec { placement: PlacementMode::PerBlock(0), ..base }).is_err());
    }

    #[test]
    fn bernoulli_estimator_recovers_p() {
        let mut rng = rng_from_seed(child_seed(5, Domain::Cycle, 0));
        let est = EstimateWithCI::from_bernoulli((0..100_000).map(|_| rng.random::<f64>() < 0.1));
        assert!(est.within(0.1, 4.0), "{est:?}");
        assert_eq!(est.n_trials, 100_000);
    }

    #[test]
    fn beta_endpoints_match_endpoint_schemes() {
        let base = small_spec(2_000);
        let pairs = [(0.0, Scheme::TwoHop), (1.0, Scheme::SingleHop)];
        for (beta, scheme) in pairs {
            let a = run(&RunSpec { params: ProtocolParams::perfect(Scheme::AndCoop, beta), ..base.clone() }).unwrap();
            let b = run(&RunSpec { params: ProtocolParams::perfect(scheme, 0.5), ..base.clone() }).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sweep_keeps_order_and_failures() {
        let good = small_spec(100);
        let bad = RunSpec { n_cycles: 0, ..good.clone() };
        let rows = sweep(vec![
            SweepPoint { axis: vec![("x".into(), 1.0)], spec: good.clone() },
            SweepPoint { axis: vec![("x".into(), 2.0)], spec: bad },
            SweepPoint { axis: vec![("x".into(), 3.0)], spec: good },
        ])
        .unwrap();
        assert_eq!(rows.iter().map(|r| r.axis[0].1).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert!(rows[0].stats.is_ok() && rows[1].stats.is_err() && rows[2].stats.is_ok());
        assert!(sweep(vec![]).is_err());
    }
}
