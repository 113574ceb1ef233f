//! One cycle of the downlink schedulers.
//!
//! ANDCoop splits the data time `T_D` into a rate-adaptive single-hop phase
//! of `β T_D` and a two-hop cooperative phase of `(1 − β) T_D`:
//!
//! 1. the controller picks the strong set, the largest set of devices with
//!    the highest estimated rates that fits into `β T_D`;
//! 2. each strong device is served in its own TDMA slot at `θ` times its
//!    estimated rate;
//! 3. the messages of the remaining weak devices are aggregated and broadcast
//!    by the APs at `R_b = B K₂ₕ / (α T₂ₕ)`;
//! 4. every device that decodes the broadcast becomes a relay;
//! 5. APs and relays jointly retransmit at `R_r = B K₂ₕ / ((1 − α) T₂ₕ)`.
//!
//! `single_hop` (β = 1) and `two_hop` (β = 0) are the two endpoints. The
//! K-best scheduler serves only the `K` devices with the best channels and is
//! used to study multi-user diversity.

use crate::channel::{ChannelRealization, CsiMode, NetworkConfig};
use crate::link::{achievable_rate, decode_succeeds, RateBps};
use crate::{dbm_to_watts, Error, Result};

/// Relative slack when comparing accumulated airtime against a budget, so
/// that e.g. `0.1 + 0.2` fits into `0.3`.
const AIRTIME_REL_TOL: f64 = 1e-12;

/// `true` if `airtime` fits into `budget` up to rounding.
pub fn fits_within(airtime: f64, budget: f64) -> bool {
    airtime <= budget * (1.0 + AIRTIME_REL_TOL)
}

/// Scheduling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Adaptive split with the configured `β`.
    AndCoop,
    /// Rate-adaptive single hop for everyone (`β = 1`).
    SingleHop,
    /// Cooperative two-hop for everyone (`β = 0`), a.k.a. OccupyCoW.
    TwoHop,
    /// Serve only the `K` best devices with enlarged packets.
    KBest(usize),
}

/// Designer knobs of the protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Share of the data time given to the single-hop phase.
    pub beta: f64,
    /// Share of the two-hop phase given to the broadcast hop.
    pub alpha: f64,
    /// Rate back-off applied to estimated single-hop rates.
    pub theta: f64,
    /// Uplink pilot symbols per device.
    pub pilots: u32,
    pub scheme: Scheme,
    pub csi: CsiMode,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams { beta: 0.5, alpha: 0.5, theta: 1.0, pilots: 0, scheme: Scheme::AndCoop, csi: CsiMode::Perfect }
    }
}

impl ProtocolParams {
    /// Perfect-CSI parameters for `scheme` with split `beta` and `α = 0.5`.
    pub fn perfect(scheme: Scheme, beta: f64) -> Self {
        ProtocolParams { beta, scheme, ..Default::default() }
    }

    /// Imperfect-CSI ANDCoop with `pilots` symbols per device.
    pub fn imperfect(beta: f64, theta: f64, pilots: u32) -> Self {
        ProtocolParams { beta, theta, pilots, csi: CsiMode::Imperfect, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        match self.csi {
            CsiMode::Perfect => {
                if self.theta != 1.0 || self.pilots != 0 {
                    return Err(Error::config("perfect CSI requires theta = 1 and zero pilots"));
                }
            }
            CsiMode::Imperfect => {
                if self.pilots == 0 {
                    return Err(Error::config("imperfect CSI requires at least one pilot symbol"));
                }
                if matches!(self.scheme, Scheme::KBest(_)) {
                    return Err(Error::config("the K-best scheduler is defined for perfect CSI only"));
                }
            }
        }
        if self.scheme == Scheme::KBest(0) {
            return Err(Error::config("K-best requires K >= 1"));
        }
        Ok(())
    }

    /// `β` actually used by the scheme.
    pub fn effective_beta(&self) -> f64 {
        match self.scheme {
            Scheme::AndCoop => self.beta,
            Scheme::SingleHop | Scheme::KBest(_) => 1.0,
            Scheme::TwoHop => 0.0,
        }
    }

    /// Data time `T_D`: the cycle minus pilot overhead `N L / W`.
    pub fn data_time(&self, cfg: &NetworkConfig) -> Result<f64> {
        let overhead = match self.csi {
            CsiMode::Perfect => 0.0,
            CsiMode::Imperfect => cfg.n_devices as f64 * self.pilots as f64 / cfg.bandwidth_hz,
        };
        let t_data = cfg.cycle_s - overhead;
        if !(t_data > 0.0) {
            return Err(Error::config(format!(
                "pilot overhead {overhead:e} s leaves no data time in a {:e} s cycle",
                cfg.cycle_s
            )));
        }
        Ok(t_data)
    }
}

/// Broadcast and relay rates of the two-hop phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoHopRates {
    pub broadcast: RateBps,
    pub relay: RateBps,
}

/// Per-cycle schedule derived from the controller's channel estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Strong devices in transmission order.
    pub strong: Vec<usize>,
    /// Single-hop rate of each strong device, aligned with `strong`.
    pub strong_rates: Vec<RateBps>,
    pub weak: Vec<usize>,
    /// Present iff there are weak devices and the two-hop phase has time.
    pub two_hop: Option<TwoHopRates>,
    pub t_data: f64,
    pub t_1h: f64,
    pub t_2h: f64,
}

impl Schedule {
    pub fn k_weak(&self) -> usize {
        self.weak.len()
    }

    /// Weak devices with no time left to serve them.
    pub fn overflow(&self) -> bool {
        !self.weak.is_empty() && self.two_hop.is_none()
    }

    /// Airtime of the single-hop phase, `Σ B / R₁ₕ,ⱼ`.
    pub fn single_hop_airtime(&self, payload_bits: f64) -> f64 {
        self.strong_rates.iter().map(|r| payload_bits / r.bps()).sum()
    }
}

/// Largest set of devices that fits into `tau` seconds of single-hop airtime.
///
/// Devices are ranked by estimated rate, highest first, with ties broken by
/// lower device index; the longest prefix whose airtime `Σ B / (θ R̂ⱼ)` fits
/// is returned in transmission order. Devices with zero estimated rate are
/// never selected.
pub fn select_strong_set(est_rates: &[RateBps], tau: f64, theta: f64, payload_bits: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..est_rates.len()).collect();
    // Stable sort keeps index order among equal rates.
    order.sort_by(|&a, &b| est_rates[b].partial_cmp(&est_rates[a]).expect("rates are never NaN"));
    let mut airtime = 0.0;
    let mut chosen = Vec::new();
    for j in order {
        let rate = est_rates[j].bps() * theta;
        if rate <= 0.0 {
            break;
        }
        airtime += payload_bits / rate;
        if !fits_within(airtime, tau) {
            break;
        }
        chosen.push(j);
    }
    chosen
}

/// Steps 1-3: partitions devices and fixes every rate of the cycle.
pub fn build_schedule(
    realization: &ChannelRealization,
    params: &ProtocolParams,
    cfg: &NetworkConfig,
) -> Result<Schedule> {
    if realization.n_devices() != cfg.n_devices || realization.n_aps() != cfg.n_aps {
        return Err(Error::arg("realization dimensions do not match the network config"));
    }
    let t_data = params.data_time(cfg)?;
    let beta = params.effective_beta();
    let t_1h = beta * t_data;
    let t_2h = (1.0 - beta) * t_data;
    let w = cfg.bandwidth_hz;
    let b = cfg.payload_bits;

    let est_rates: Vec<RateBps> =
        (0..cfg.n_devices).map(|j| achievable_rate(realization.ap_sum_estimated(j), w)).collect();
    let strong = if t_1h > 0.0 { select_strong_set(&est_rates, t_1h, params.theta, b) } else { Vec::new() };
    let strong_rates = strong.iter().map(|&j| est_rates[j].scaled(params.theta)).collect();

    let mut in_strong = vec![false; cfg.n_devices];
    for &j in &strong {
        in_strong[j] = true;
    }
    let weak: Vec<usize> = (0..cfg.n_devices).filter(|&j| !in_strong[j]).collect();

    let two_hop = if !weak.is_empty() && t_2h > 0.0 {
        let load = b * weak.len() as f64;
        Some(TwoHopRates {
            broadcast: RateBps::new(load / (params.alpha * t_2h))?,
            relay: RateBps::new(load / ((1.0 - params.alpha) * t_2h))?,
        })
    } else {
        None
    };
    Ok(Schedule { strong, strong_rates, weak, two_hop, t_data, t_1h, t_2h })
}

/// Result of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    /// At least one device failed or the schedule overflowed.
    pub system_outage: bool,
    /// Devices were left without airtime.
    pub overflow: bool,
    /// Number of devices in the two-hop phase.
    pub k_weak: usize,
    /// Devices that decoded the broadcast and retransmitted it.
    pub relay_set: Vec<usize>,
    /// Energy spent relaying, joules, one entry per device.
    pub relay_energy_j: Vec<f64>,
    pub failed: Vec<usize>,
}

impl CycleOutcome {
    pub fn total_relay_energy_j(&self) -> f64 {
        self.relay_energy_j.iter().sum()
    }

    /// Relay energy averaged over all devices.
    pub fn mean_relay_energy_j(&self) -> f64 {
        self.total_relay_energy_j() / self.relay_energy_j.len() as f64
    }
}

/// SNR seen by weak device `dev` in the relay hop: the APs plus every relay.
pub fn relay_hop_snr(realization: &ChannelRealization, dev: usize, relays: &[usize]) -> f64 {
    realization.ap_sum(dev) + relays.iter().filter(|&&k| k != dev).map(|&k| realization.g_dev_dev(k, dev)).sum::<f64>()
}

/// Steps 1-5 against the true channel.
///
/// Strong devices fail when their adapted rate exceeds the true capacity.
/// Every device listens to the broadcast; those that decode it relay, and
/// relays spend `P_d (1 − α) T₂ₕ` joules each. Weak devices that missed the
/// broadcast combine AP and relay signals in the relay hop.
pub fn run_cycle(
    realization: &ChannelRealization,
    schedule: &Schedule,
    params: &ProtocolParams,
    cfg: &NetworkConfig,
) -> CycleOutcome {
    let n = cfg.n_devices;
    let w = cfg.bandwidth_hz;
    debug_assert!(fits_within(schedule.single_hop_airtime(cfg.payload_bits), schedule.t_1h));

    let mut failed: Vec<usize> = schedule
        .strong
        .iter()
        .zip(&schedule.strong_rates)
        .filter(|&(&j, &rate)| !decode_succeeds(realization.ap_sum(j), rate, w))
        .map(|(&j, _)| j)
        .collect();

    let overflow = schedule.overflow();
    let mut relay_set = Vec::new();
    let mut relay_energy_j = vec![0.0; n];

    if overflow {
        failed.extend_from_slice(&schedule.weak);
    } else if let Some(rates) = schedule.two_hop {
        relay_set = (0..n).filter(|&j| decode_succeeds(realization.ap_sum(j), rates.broadcast, w)).collect();
        let mut is_relay = vec![false; n];
        for &k in &relay_set {
            is_relay[k] = true;
        }
        for &j in &schedule.weak {
            if !is_relay[j] && !decode_succeeds(relay_hop_snr(realization, j, &relay_set), rates.relay, w) {
                failed.push(j);
            }
        }
        let energy = dbm_to_watts(cfg.p_dev_dbm) * (1.0 - params.alpha) * schedule.t_2h;
        for &k in &relay_set {
            relay_energy_j[k] = energy;
        }
    }
    failed.sort_unstable();

    CycleOutcome {
        system_outage: overflow || !failed.is_empty(),
        overflow,
        k_weak: schedule.k_weak(),
        relay_set,
        relay_energy_j,
        failed,
    }
}

/// K-best scheduling under perfect CSI.
///
/// Serves the `k` devices with the largest true rates, each with an enlarged
/// packet `N B / K`; outage iff their airtime exceeds the cycle. Scheduled
/// devices that do not fit are reported as failed.
pub fn run_cycle_k_best(realization: &ChannelRealization, k: usize, cfg: &NetworkConfig) -> Result<CycleOutcome> {
    let n = cfg.n_devices;
    if k == 0 || k > n {
        return Err(Error::arg(format!("K must lie in [1, {n}], got {k}")));
    }
    let rates: Vec<RateBps> = (0..n).map(|j| achievable_rate(realization.ap_sum(j), cfg.bandwidth_hz)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rates[b].partial_cmp(&rates[a]).expect("rates are never NaN"));
    let packet = cfg.payload_bits * (n as f64 / k as f64);

    let mut airtime = 0.0;
    let mut failed = Vec::new();
    for &j in order.iter().take(k) {
        airtime += packet / rates[j].bps();
        if !fits_within(airtime, cfg.cycle_s) {
            failed.push(j);
        }
    }
    failed.sort_unstable();
    let outage = !failed.is_empty();
    Ok(CycleOutcome {
        system_outage: outage,
        overflow: outage,
        k_weak: 0,
        relay_set: Vec::new(),
        relay_energy_j: vec![0.0; n],
        failed,
    })
}

/// Builds the schedule and runs the cycle for any scheme.
pub fn run_scheme(realization: &ChannelRealization, params: &ProtocolParams, cfg: &NetworkConfig) -> Result<CycleOutcome> {
    match params.scheme {
        Scheme::KBest(k) => run_cycle_k_best(realization, k, cfg),
        _ => {
            let schedule = build_schedule(realization, params, cfg)?;
            Ok(run_cycle(realization, &schedule, params, cfg))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_cycle, LinkStatics, OffDiagonal};
    use approx::assert_relative_eq;

    fn rates(v: &[f64]) -> Vec<RateBps> {
        v.iter().map(|&r| RateBps::new(r).unwrap()).collect()
    }

    #[test]
    fn strong_set_empty_budget() {
        assert!(select_strong_set(&rates(&[10.0, 5.0]), 0.0, 1.0, 1.0).is_empty());
    }

    #[test]
    fn strong_set_worked_example() {
        // Rates 10B, 5B, 2B per second with B = 1: airtimes 0.1, 0.2, 0.5.
        let set = select_strong_set(&rates(&[2.0, 10.0, 5.0]), 0.3, 1.0, 1.0);
        assert_eq!(set, vec![1, 2]);
    }

    #[test]
    fn strong_set_skips_zero_rates_and_applies_theta() {
        assert!(select_strong_set(&rates(&[0.0, 0.0]), 1e9, 1.0, 1.0).is_empty());
        // θ = 0.5 doubles every airtime.
        assert_eq!(select_strong_set(&rates(&[10.0, 5.0]), 0.3, 0.5, 1.0), vec![0]);
    }

    #[test]
    fn strong_set_ties_follow_device_index() {
        assert_eq!(select_strong_set(&rates(&[4.0, 4.0, 4.0]), 0.5, 1.0, 1.0), vec![0, 1]);
    }

    fn cfg(n: usize, m: usize) -> NetworkConfig {
        NetworkConfig { n_devices: n, n_aps: m, ..Default::default() }
    }

    fn realization(n: usize, m: usize, snr: f64, seed: u64) -> ChannelRealization {
        sample_cycle(&LinkStatics::iid(m, n, snr), 0, CsiMode::Perfect, seed).unwrap()
    }

    #[test]
    fn beta_zero_sends_everyone_to_two_hop() {
        let c = NetworkConfig::default();
        let r = realization(50, 1, 100.0, 1);
        let s = build_schedule(&r, &ProtocolParams::perfect(Scheme::AndCoop, 0.0), &c).unwrap();
        assert!(s.strong.is_empty());
        assert_eq!(s.k_weak(), 50);
        let rates = s.two_hop.unwrap();
        // 50 · 400 bit / (0.5 · 1 ms) = 40 Mbit/s = 2 bpcu.
        assert_relative_eq!(rates.broadcast.bps(), 40e6, max_relative = 1e-12);
        assert_relative_eq!(rates.relay.bps(), 40e6, max_relative = 1e-12);
    }

    #[test]
    fn single_hop_schedules_everyone_iff_airtime_fits() {
        let c = NetworkConfig::default();
        for seed in 0..200 {
            let r = realization(50, 1, 30.0, seed);
            let s = build_schedule(&r, &ProtocolParams::perfect(Scheme::SingleHop, 0.0), &c).unwrap();
            let total: f64 = (0..50).map(|j| c.payload_bits / achievable_rate(r.ap_sum(j), c.bandwidth_hz).bps()).sum();
            assert_eq!(s.k_weak() == 0, fits_within(total, c.cycle_s), "seed {seed}");
            let out = run_cycle(&r, &s, &ProtocolParams::perfect(Scheme::SingleHop, 0.0), &c);
            assert_eq!(out.system_outage, s.k_weak() > 0);
            assert_eq!(out.overflow, s.k_weak() > 0);
        }
    }

    #[test]
    fn pilot_overhead_exceeding_cycle_is_a_config_error() {
        let c = cfg(50, 1);
        let r = realization(50, 1, 10.0, 0);
        // 50 · 400 / 20 MHz = 1 ms.
        let p = ProtocolParams::imperfect(0.5, 0.8, 400);
        assert!(matches!(build_schedule(&r, &p, &c), Err(Error::Config(_))));
    }

    #[test]
    fn data_time_subtracts_pilots() {
        let c = cfg(50, 1);
        let t = ProtocolParams::imperfect(0.5, 0.8, 10).data_time(&c).unwrap();
        assert_relative_eq!(t, 1e-3 - 50.0 * 10.0 / 20e6, max_relative = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::perfect(Scheme::AndCoop, 1.5).validate().is_err());
        assert!(ProtocolParams { theta: 0.9, ..Default::default() }.validate().is_err());
        assert!(ProtocolParams::imperfect(0.5, 0.8, 0).validate().is_err());
        assert!(ProtocolParams { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(ProtocolParams::perfect(Scheme::KBest(0), 1.0).validate().is_err());
        assert!(ProtocolParams::imperfect(0.3, 0.6, 10).validate().is_ok());
    }

    #[test]
    fn infinite_snr_means_no_outage() {
        let c = cfg(5, 2);
        let r = realization(5, 2, f64::INFINITY, 3);
        let p = ProtocolParams::perfect(Scheme::TwoHop, 0.0);
        let s = build_schedule(&r, &p, &c).unwrap();
        let out = run_cycle(&r, &s, &p, &c);
        assert!(!out.system_outage);
        assert_eq!(out.relay_set, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn boundary_rate_succeeds_under_perfect_csi() {
        // Budget large enough for everyone: strong devices run exactly at capacity.
        let c = NetworkConfig { n_devices: 4, payload_bits: 1.0, ..Default::default() };
        for seed in 0..50 {
            let r = realization(4, 1, 5.0, seed);
            let p = ProtocolParams::perfect(Scheme::AndCoop, 0.5);
            let s = build_schedule(&r, &p, &c).unwrap();
            assert_eq!(s.strong.len(), 4);
            let out = run_cycle(&r, &s, &p, &c);
            assert!(out.failed.is_empty());
        }
    }

    #[test]
    fn strong_devices_may_relay_and_pay_energy() {
        // Device 0 strong; device 1 weak and unreachable from the AP.
        let g_ap = vec![1e6, 0.0];
        let g_dd = OffDiagonal::from_fn(2, |_, _| 1e6);
        let r = ChannelRealization::from_parts(1, 2, g_ap.clone(), g_ap, g_dd).unwrap();
        let c = NetworkConfig { n_devices: 2, payload_bits: 400.0, ..Default::default() };
        let p = ProtocolParams::perfect(Scheme::AndCoop, 0.5);
        let s = build_schedule(&r, &p, &c).unwrap();
        assert_eq!(s.strong, vec![0]);
        assert_eq!(s.weak, vec![1]);
        let out = run_cycle(&r, &s, &p, &c);
        assert_eq!(out.relay_set, vec![0]);
        assert!(!out.system_outage);
        let e = dbm_to_watts(23.0) * 0.5 * s.t_2h;
        assert_eq!(out.relay_energy_j, vec![e, 0.0]);
    }

    #[test]
    fn k_best_with_all_devices_matches_single_hop() {
        let c = cfg(6, 2);
        for seed in 0..300 {
            let r = realization(6, 2, 3.0, seed);
            let kb = run_cycle_k_best(&r, 6, &c).unwrap();
            let sh = run_scheme(&r, &ProtocolParams::perfect(Scheme::SingleHop, 1.0), &c).unwrap();
            assert_eq!(kb.system_outage, sh.system_outage, "seed {seed}");
        }
    }

    #[test]
    fn k_best_rejects_bad_k() {
        let c = cfg(3, 1);
        let r = realization(3, 1, 3.0, 0);
        assert!(run_cycle_k_best(&r, 0, &c).is_err());
        assert!(run_cycle_k_best(&r, 4, &c).is_err());
    }

    #[test]
    fn k_best_single_device_uses_the_best_channel() {
        let c = NetworkConfig { n_devices: 3, payload_bits: 1000.0, ..Default::default() };
        for seed in 0..300 {
            let r = realization(3, 1, 2.0, seed);
            let best = (0..3).map(|j| r.ap_sum(j)).fold(0.0, f64::max);
            let need = 3.0 * 1000.0 / c.cycle_s;
            let out = run_cycle_k_best(&r, 1, &c).unwrap();
            assert_eq!(out.system_outage, achievable_rate(best, c.bandwidth_hz).bps() * c.cycle_s < 3000.0, "{need}");
        }
    }
}
