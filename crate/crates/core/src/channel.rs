//! Network geometry, large-scale link statistics and per-cycle fading.
//!
//! Large-scale effects (distance, LOS blockage, log-normal shadowing) are
//! sampled once per [`Placement`] into [`LinkStatics`]. Each cycle then draws
//! independent Rayleigh fades on top of those averages, optionally with an
//! MMSE channel-estimation error on the AP-device links.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};

use crate::rng::rng_from_seed;
use crate::{db_to_linear, dbm_to_watts, Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Log-normal shadowing standard deviations in dB, by transmitter type and
/// LOS state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowingStd {
    pub ap_los_db: f64,
    pub ap_nlos_db: f64,
    pub dev_los_db: f64,
    pub dev_nlos_db: f64,
}

impl ShadowingStd {
    pub const NONE: ShadowingStd =
        ShadowingStd { ap_los_db: 0.0, ap_nlos_db: 0.0, dev_los_db: 0.0, dev_nlos_db: 0.0 };

    fn for_link(&self, from_ap: bool, los: bool) -> f64 {
        match (from_ap, los) {
            (true, true) => self.ap_los_db,
            (true, false) => self.ap_nlos_db,
            (false, true) => self.dev_los_db,
            (false, false) => self.dev_nlos_db,
        }
    }
}

/// Static scenario description. Defaults reproduce the factory-floor setup
/// with a single AP.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub floor_side_m: f64,
    pub n_devices: usize,
    pub n_aps: usize,
    /// Payload per device in bits.
    pub payload_bits: f64,
    pub cycle_s: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub p_ap_dbm: f64,
    pub p_dev_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    /// Path-loss exponent up to ten wavelengths.
    pub ple_near: f64,
    pub ple_los: f64,
    pub ple_nlos: f64,
    /// Floor `a` of the LOS probability.
    pub blockage_a: f64,
    /// Cutoff distance `b` beyond which the LOS probability equals `a`.
    pub blockage_b_m: f64,
    pub shadowing: ShadowingStd,
    /// Links shorter than this are evaluated at this distance.
    pub min_distance_m: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            floor_side_m: 100.0,
            n_devices: 50,
            n_aps: 1,
            payload_bits: 50.0 * 8.0,
            cycle_s: 1e-3,
            bandwidth_hz: 20e6,
            carrier_hz: 3.5e9,
            p_ap_dbm: 23.0,
            p_dev_dbm: 23.0,
            noise_psd_dbm_hz: -174.0,
            ple_near: 2.0,
            ple_los: 3.26,
            ple_nlos: 3.93,
            blockage_a: 0.25,
            blockage_b_m: 15.0,
            shadowing: ShadowingStd { ap_los_db: 1.4, ap_nlos_db: 4.6, dev_los_db: 8.7, dev_nlos_db: 15.2 },
            min_distance_m: 0.1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("floor_side_m", self.floor_side_m),
            ("payload_bits", self.payload_bits),
            ("cycle_s", self.cycle_s),
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_hz", self.carrier_hz),
            ("blockage_b_m", self.blockage_b_m),
            ("min_distance_m", self.min_distance_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.n_devices == 0 {
            return Err(Error::config("n_devices must be at least 1"));
        }
        if self.n_aps == 0 {
            return Err(Error::config("n_aps must be at least 1"));
        }
        for (name, v) in [
            ("p_ap_dbm", self.p_ap_dbm),
            ("p_dev_dbm", self.p_dev_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("ple_near", self.ple_near),
            ("ple_los", self.ple_los),
            ("ple_nlos", self.ple_nlos),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.blockage_a) {
            return Err(Error::config(format!("blockage_a must lie in [0, 1], got {}", self.blockage_a)));
        }
        let s = &self.shadowing;
        for v in [s.ap_los_db, s.ap_nlos_db, s.dev_los_db, s.dev_nlos_db] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("shadowing std must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Noise power `W σ₀` in dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10()
    }

    /// Noise PSD in W/Hz.
    pub fn noise_psd_w_hz(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz)
    }

    /// Overall spectral efficiency `η = N B / (T W)` in bits per channel use.
    pub fn spectral_efficiency(&self) -> f64 {
        self.n_devices as f64 * self.payload_bits / (self.cycle_s * self.bandwidth_hz)
    }

    pub fn path_loss(&self) -> PathLoss {
        PathLoss {
            wavelength_m: self.wavelength_m(),
            ple_near: self.ple_near,
            ple_los: self.ple_los,
            ple_nlos: self.ple_nlos,
            min_distance_m: self.min_distance_m,
        }
    }
}

/// Dual-slope path loss anchored at the 1 m free-space loss.
///
/// The near exponent applies up to the breakpoint `10 λ`; beyond it the LOS
/// or NLOS exponent continues from the breakpoint value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub wavelength_m: f64,
    pub ple_near: f64,
    pub ple_los: f64,
    pub ple_nlos: f64,
    pub min_distance_m: f64,
}

impl PathLoss {
    pub fn breakpoint_m(&self) -> f64 {
        10.0 * self.wavelength_m
    }

    /// Friis loss at 1 m, `20 log10(4π / λ)`.
    pub fn intercept_db(&self) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI / self.wavelength_m).log10()
    }

    /// Path loss in dB at `distance_m`.
    pub fn loss_db(&self, distance_m: f64, los: bool) -> f64 {
        let d = distance_m.max(self.min_distance_m);
        let d0 = self.breakpoint_m();
        let far = if los { self.ple_los } else { self.ple_nlos };
        if d <= d0 {
            self.intercept_db() + 10.0 * self.ple_near * d.log10()
        } else {
            self.intercept_db() + 10.0 * self.ple_near * d0.log10() + 10.0 * far * (d / d0).log10()
        }
    }
}

/// Probability that a link of length `distance_m` is line-of-sight:
/// `a + 1{ν ≤ b} (1 − a)/b² (ν − b)²`.
pub fn los_probability(distance_m: f64, a: f64, b: f64) -> f64 {
    debug_assert!(distance_m >= 0.0);
    if distance_m <= b {
        a + (1.0 - a) / (b * b) * (distance_m - b).powi(2)
    } else {
        a
    }
}

/// Point on the floor, metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Positions of APs and devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub aps: Vec<Point>,
    pub devices: Vec<Point>,
}

/// Draws AP and device positions uniformly on the square floor.
pub fn sample_placement(cfg: &NetworkConfig, seed: u64) -> Placement {
    let mut rng = rng_from_seed(seed);
    let side = cfg.floor_side_m;
    let mut point = || Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
    let aps = (0..cfg.n_aps).map(|_| point()).collect();
    let devices = (0..cfg.n_devices).map(|_| point()).collect();
    Placement { aps, devices }
}

/// Square matrix without its diagonal, row-major by transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonal<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy> OffDiagonal<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n.saturating_sub(1));
        for k in 0..n {
            for j in 0..n {
                if j != k {
                    data.push(f(k, j));
                }
            }
        }
        OffDiagonal { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, from: usize, to: usize) -> usize {
        debug_assert!(from != to && from < self.n && to < self.n);
        from * (self.n - 1) + if to < from { to } else { to - 1 }
    }

    /// Entry for the link `from → to`. `from` must differ from `to`.
    #[inline]
    pub fn get(&self, from: usize, to: usize) -> T {
        self.data[self.index(from, to)]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }
}

/// Large-scale statistics of every link for one placement.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStatics {
    n_aps: usize,
    n_devices: usize,
    /// Average linear SNR, index `ap * N + device`.
    avg_snr_ap_dev: Vec<f64>,
    avg_snr_dev_dev: OffDiagonal<f64>,
    los_ap_dev: Vec<bool>,
    los_dev_dev: OffDiagonal<bool>,
}

impl LinkStatics {
    /// Every link at the same nominal SNR, all LOS.
    pub fn iid(n_aps: usize, n_devices: usize, snr: f64) -> Self {
        LinkStatics {
            n_aps,
            n_devices,
            avg_snr_ap_dev: vec![snr; n_aps * n_devices],
            avg_snr_dev_dev: OffDiagonal::from_fn(n_devices, |_, _| snr),
            los_ap_dev: vec![true; n_aps * n_devices],
            los_dev_dev: OffDiagonal::from_fn(n_devices, |_, _| true),
        }
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn avg_snr_ap_dev(&self, ap: usize, dev: usize) -> f64 {
        self.avg_snr_ap_dev[ap * self.n_devices + dev]
    }

    pub fn avg_snr_dev_dev(&self, from: usize, to: usize) -> f64 {
        self.avg_snr_dev_dev.get(from, to)
    }

    pub fn los_ap_dev(&self, ap: usize, dev: usize) -> bool {
        self.los_ap_dev[ap * self.n_devices + dev]
    }

    pub fn los_dev_dev(&self, from: usize, to: usize) -> bool {
        self.los_dev_dev.get(from, to)
    }
}

/// Samples LOS states and shadowing for every link of `placement`.
///
/// Device pairs share one LOS state and one shadowing draw in both
/// directions. Average SNR is the received power over `W σ₀`.
pub fn link_statics(cfg: &NetworkConfig, placement: &Placement, seed: u64) -> Result<LinkStatics> {
    let (m, n) = (cfg.n_aps, cfg.n_devices);
    if placement.aps.len() != m || placement.devices.len() != n {
        return Err(Error::arg(format!(
            "placement has {} APs and {} devices, config expects {m} and {n}",
            placement.aps.len(),
            placement.devices.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let pl = cfg.path_loss();
    let noise_dbm = cfg.noise_power_dbm();
    let draw = |rng: &mut crate::rng::SimRng, d: f64, from_ap: bool| {
        let los = rng.random::<f64>() < los_probability(d, cfg.blockage_a, cfg.blockage_b_m);
        let std = cfg.shadowing.for_link(from_ap, los);
        let shadow = if std > 0.0 { Normal::new(0.0, std).unwrap().sample(rng) } else { 0.0 };
        let p_tx = if from_ap { cfg.p_ap_dbm } else { cfg.p_dev_dbm };
        (db_to_linear(p_tx - pl.loss_db(d, los) + shadow - noise_dbm), los)
    };

    let mut avg_snr_ap_dev = Vec::with_capacity(m * n);
    let mut los_ap_dev = Vec::with_capacity(m * n);
    for ap in &placement.aps {
        for dev in &placement.devices {
            let (snr, los) = draw(&mut rng, ap.distance(dev), true);
            avg_snr_ap_dev.push(snr);
            los_ap_dev.push(los);
        }
    }

    // Upper triangle first, then mirror.
    let mut pair = vec![(0.0, false); n * n];
    for k in 0..n {
        for j in (k + 1)..n {
            let d = placement.devices[k].distance(&placement.devices[j]);
            let v = draw(&mut rng, d, false);
            pair[k * n + j] = v;
            pair[j * n + k] = v;
        }
    }
    Ok(LinkStatics {
        n_aps: m,
        n_devices: n,
        avg_snr_ap_dev,
        avg_snr_dev_dev: OffDiagonal::from_fn(n, |k, j| pair[k * n + j].0),
        los_ap_dev,
        los_dev_dev: OffDiagonal::from_fn(n, |k, j| pair[k * n + j].1),
    })
}

/// Channel-state knowledge at the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// Genie-aided: estimates equal the true channel, no pilot overhead.
    Perfect,
    /// MMSE estimates from uplink pilots.
    Imperfect,
}

/// MMSE estimation-error variance `1 / (1 + L ρ)` for `pilots` symbols.
pub fn estimation_error_variance(pilots: u32, snr: f64) -> f64 {
    1.0 / (1.0 + pilots as f64 * snr)
}

/// True and estimated instantaneous SNRs of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n_aps: usize,
    n_devices: usize,
    g_ap_dev: Vec<f64>,
    g_hat_ap_dev: Vec<f64>,
    g_dev_dev: OffDiagonal<f64>,
}

impl ChannelRealization {
    /// Builds a realization from explicit SNR tables (index `ap * N + device`).
    pub fn from_parts(
        n_aps: usize,
        n_devices: usize,
        g_ap_dev: Vec<f64>,
        g_hat_ap_dev: Vec<f64>,
        g_dev_dev: OffDiagonal<f64>,
    ) -> Result<Self> {
        if g_ap_dev.len() != n_aps * n_devices
            || g_hat_ap_dev.len() != n_aps * n_devices
            || g_dev_dev.dim() != n_devices
        {
            return Err(Error::arg("realization tables do not match the network dimensions"));
        }
        if g_ap_dev.iter().chain(&g_hat_ap_dev).chain(g_dev_dev.values()).any(|g| !(*g >= 0.0)) {
            return Err(Error::arg("instantaneous SNRs must be non-negative"));
        }
        Ok(ChannelRealization { n_aps, n_devices, g_ap_dev, g_hat_ap_dev, g_dev_dev })
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn g_ap_dev(&self, ap: usize, dev: usize) -> f64 {
        self.g_ap_dev[ap * self.n_devices + dev]
    }

    pub fn g_hat_ap_dev(&self, ap: usize, dev: usize) -> f64 {
        self.g_hat_ap_dev[ap * self.n_devices + dev]
    }

    pub fn g_dev_dev(&self, from: usize, to: usize) -> f64 {
        self.g_dev_dev.get(from, to)
    }

    /// True SNR at `dev` summed over all APs.
    pub fn ap_sum(&self, dev: usize) -> f64 {
        (0..self.n_aps).map(|i| self.g_ap_dev(i, dev)).sum()
    }

    /// Estimated SNR at `dev` summed over all APs.
    pub fn ap_sum_estimated(&self, dev: usize) -> f64 {
        (0..self.n_aps).map(|i| self.g_hat_ap_dev(i, dev)).sum()
    }
}

/// Draws one cycle of block fading on top of `statics`.
///
/// Device-device links are never estimated. In imperfect mode the AP-device
/// fade is `h = ĥ + ε` with independent `ĥ ~ CN(0, 1 − σ_e)` and
/// `ε ~ CN(0, σ_e)`.
pub fn sample_cycle(statics: &LinkStatics, pilots: u32, mode: CsiMode, seed: u64) -> Result<ChannelRealization> {
    if mode == CsiMode::Imperfect && pilots == 0 {
        return Err(Error::config("imperfect CSI requires at least one pilot symbol"));
    }
    let mut rng = rng_from_seed(seed);
    let (m, n) = (statics.n_aps, statics.n_devices);
    let mut g = Vec::with_capacity(m * n);
    let g_hat = match mode {
        CsiMode::Perfect => {
            for &rho in &statics.avg_snr_ap_dev {
                let gain: f64 = Exp1.sample(&mut rng);
                g.push(rho * gain);
            }
            g.clone()
        }
        CsiMode::Imperfect => {
            let mut g_hat = Vec::with_capacity(m * n);
            for &rho in &statics.avg_snr_ap_dev {
                let var_e = estimation_error_variance(pilots, rho);
                let s_hat = ((1.0 - var_e) / 2.0).sqrt();
                let s_err = (var_e / 2.0).sqrt();
                let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
                let (hr, hi) = (s_hat * normal(), s_hat * normal());
                let (er, ei) = (s_err * normal(), s_err * normal());
                g_hat.push(rho * (hr * hr + hi * hi));
                g.push(rho * ((hr + er).powi(2) + (hi + ei).powi(2)));
            }
            g_hat
        }
    };
    let g_dev_dev = OffDiagonal::from_fn(n, |k, j| {
        let gain: f64 = Exp1.sample(&mut rng);
        statics.avg_snr_dev_dev(k, j) * gain
    });
    Ok(ChannelRealization { n_aps: m, n_devices: n, g_ap_dev: g, g_hat_ap_dev: g_hat, g_dev_dev })
}
