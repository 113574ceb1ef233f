//! Scenario files.
//!
//! Grammar: `[section]` headers, `key = value` lines, `#` comments and blank
//! lines. Lists are comma separated; points are written `x:y`. Every key is
//! optional and defaults to the factory-floor setup, but all four sections
//! `[network]`, `[protocol]`, `[run]` and `[experiment]` must be present.
//! An optional `[coverage]` section configures coverage maps.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use andcoop::channel::{NetworkConfig, Point};
use andcoop::coverage::{MapSpec, Wall};
use andcoop::protocol::{ProtocolParams, Scheme};
use andcoop::channel::CsiMode;

use crate::CliError;

pub const REQUIRED_SECTIONS: [&str; 4] = ["network", "protocol", "run", "experiment"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Single,
    PowerSweep,
    RateSweep,
    PopulationSweep,
    Dmt,
    Optimize,
    Coverage,
    PilotTradeoff,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Single,
        ExperimentKind::PowerSweep,
        ExperimentKind::RateSweep,
        ExperimentKind::PopulationSweep,
        ExperimentKind::Dmt,
        ExperimentKind::Optimize,
        ExperimentKind::Coverage,
        ExperimentKind::PilotTradeoff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Single => "single",
            ExperimentKind::PowerSweep => "power_sweep",
            ExperimentKind::RateSweep => "rate_sweep",
            ExperimentKind::PopulationSweep => "population_sweep",
            ExperimentKind::Dmt => "dmt",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::PilotTradeoff => "pilot_tradeoff",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment kind '{s}', expected one of {}", names.join(", "))
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Placement cadence as written in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementSetting {
    PerBlock(u64),
    PerCycle,
    /// One placement drawn from this seed.
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub cycles: u64,
    pub seed: u64,
    pub placement: PlacementSetting,
    /// Nominal SNR on every link, dB; replaces the geometry.
    pub iid_snr_db: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { cycles: 100_000, seed: 1, placement: PlacementSetting::PerBlock(100), iid_snr_db: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub powers_dbm: Option<Vec<f64>>,
    pub snrs_db: Option<Vec<f64>>,
    pub payloads_bytes: Option<Vec<f64>>,
    pub populations: Option<Vec<usize>>,
    pub pilot_counts: Option<Vec<u32>>,
    pub beta_grid: Option<Vec<f64>>,
    pub theta_grid: Option<Vec<f64>>,
    pub dmt_points: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            kind: ExperimentKind::Single,
            powers_dbm: None,
            snrs_db: None,
            payloads_bytes: None,
            populations: None,
            pilot_counts: None,
            beta_grid: None,
            theta_grid: None,
            dmt_points: 21,
        }
    }
}

/// Coverage-map settings; radio parameters come from `[network]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSection {
    pub side_m: f64,
    pub resolution: usize,
    pub ap: Point,
    pub ap_antennas: u32,
    pub relays: Vec<Point>,
    pub wall: Option<(Point, Point)>,
    pub penetration_loss_db: f64,
    pub target_outage: f64,
    pub rate_bpcu: f64,
}

impl Default for CoverageSection {
    fn default() -> Self {
        let d = MapSpec::default();
        let wall = d.wall.expect("default map has a wall");
        CoverageSection {
            side_m: d.side_m,
            resolution: d.resolution,
            ap: d.ap_position,
            ap_antennas: d.ap_antennas,
            relays: d.relay_positions,
            wall: Some((wall.a, wall.b)),
            penetration_loss_db: wall.penetration_loss_db,
            target_outage: d.target_outage,
            rate_bpcu: d.rate_bpcu,
        }
    }
}

impl CoverageSection {
    pub fn map_spec(&self, network: &NetworkConfig) -> MapSpec {
        MapSpec {
            network: network.clone(),
            side_m: self.side_m,
            resolution: self.resolution,
            ap_position: self.ap,
            ap_antennas: self.ap_antennas,
            relay_positions: self.relays.clone(),
            wall: self.wall.map(|(a, b)| Wall { a, b, penetration_loss_db: self.penetration_loss_db }),
            target_outage: self.target_outage,
            rate_bpcu: self.rate_bpcu,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub protocol: ProtocolParams,
    pub run: RunSection,
    pub experiment: ExperimentSection,
    pub coverage: CoverageSection,
}

fn scalar<T: FromStr>(value: &str, unit: &str) -> Result<T, String> {
    value.parse().map_err(|_| {
        if unit.is_empty() {
            format!("cannot parse '{value}'")
        } else {
            format!("cannot parse '{value}' as a number in {unit}")
        }
    })
}

fn list<T: FromStr>(value: &str, unit: &str) -> Result<Vec<T>, String> {
    let items: Vec<T> = value.split(',').map(|s| scalar(s.trim(), unit)).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("list must not be empty".into());
    }
    Ok(items)
}

fn point(value: &str) -> Result<Point, String> {
    let (x, y) = value.split_once(':').ok_or_else(|| format!("expected a point 'x:y', got '{value}'"))?;
    Ok(Point::new(scalar(x.trim(), "m")?, scalar(y.trim(), "m")?))
}

fn points(value: &str) -> Result<Vec<Point>, String> {
    if value == "none" {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| point(s.trim())).collect()
}

fn in_range(v: f64, lo: f64, hi: f64, what: &str) -> Result<f64, String> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{what} must lie in [{lo}, {hi}], got {v}"))
    }
}

fn positive(v: f64) -> Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::AndCoop => "andcoop",
        Scheme::SingleHop => "single_hop",
        Scheme::TwoHop => "two_hop",
        Scheme::KBest(_) => "k_best",
    }
}

/// Scheme as written; `k_best` takes its `K` from the separate `k` key.
#[derive(Clone, Copy)]
enum SchemeTag {
    Plain(Scheme),
    KBest,
}

struct Builder {
    sc: Scenario,
    scheme: Option<(SchemeTag, usize)>,
    k: Option<(usize, usize)>,
    placement: Option<(String, usize)>,
    block: Option<u64>,
    placement_seed: Option<u64>,
}

impl Builder {
    fn apply(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<(), String> {
        let net = &mut self.sc.network;
        let proto = &mut self.sc.protocol;
        let run = &mut self.sc.run;
        let exp = &mut self.sc.experiment;
        let cov = &mut self.sc.coverage;
        match (section, key) {
            ("network", "floor_side_m") => net.floor_side_m = positive(scalar(value, "m")?)?,
            ("network", "n_devices") => net.n_devices = scalar(value, "")?,
            ("network", "n_aps") => net.n_aps = scalar(value, "")?,
            ("network", "payload_bytes") => net.payload_bits = 8.0 * positive(scalar(value, "bytes")?)?,
            ("network", "cycle_s") => net.cycle_s = positive(scalar(value, "s")?)?,
            ("network", "bandwidth_hz") => net.bandwidth_hz = positive(scalar(value, "Hz")?)?,
            ("network", "carrier_hz") => net.carrier_hz = positive(scalar(value, "Hz")?)?,
            ("network", "p_ap_dbm") => net.p_ap_dbm = scalar(value, "dBm")?,
            ("network", "p_dev_dbm") => net.p_dev_dbm = scalar(value, "dBm")?,
            ("network", "noise_psd_dbm_hz") => net.noise_psd_dbm_hz = scalar(value, "dBm/Hz")?,
            ("network", "ple_near") => net.ple_near = scalar(value, "")?,
            ("network", "ple_los") => net.ple_los = scalar(value, "")?,
            ("network", "ple_nlos") => net.ple_nlos = scalar(value, "")?,
            ("network", "blockage_a") => net.blockage_a = in_range(scalar(value, "")?, 0.0, 1.0, "blockage_a")?,
            ("network", "blockage_b_m") => net.blockage_b_m = positive(scalar(value, "m")?)?,
            ("network", "shadow_ap_los_db") => net.shadowing.ap_los_db = scalar(value, "dB")?,
            ("network", "shadow_ap_nlos_db") => net.shadowing.ap_nlos_db = scalar(value, "dB")?,
            ("network", "shadow_dev_los_db") => net.shadowing.dev_los_db = scalar(value, "dB")?,
            ("network", "shadow_dev_nlos_db") => net.shadowing.dev_nlos_db = scalar(value, "dB")?,
            ("network", "min_distance_m") => net.min_distance_m = positive(scalar(value, "m")?)?,

            ("protocol", "scheme") => {
                let tag = match value {
                    "andcoop" => SchemeTag::Plain(Scheme::AndCoop),
                    "single_hop" => SchemeTag::Plain(Scheme::SingleHop),
                    "two_hop" => SchemeTag::Plain(Scheme::TwoHop),
                    "k_best" => SchemeTag::KBest,
                    _ => return Err(format!("unknown scheme '{value}', expected andcoop, single_hop, two_hop or k_best")),
                };
                self.scheme = Some((tag, line));
            }
            ("protocol", "k") => self.k = Some((scalar(value, "")?, line)),
            ("protocol", "beta") => proto.beta = in_range(scalar(value, "")?, 0.0, 1.0, "beta")?,
            ("protocol", "alpha") => proto.alpha = in_range(scalar(value, "")?, 0.0, 1.0, "alpha")?,
            ("protocol", "theta") => proto.theta = in_range(scalar(value, "")?, 0.0, 1.0, "theta")?,
            ("protocol", "pilots") => proto.pilots = scalar(value, "symbols")?,
            ("protocol", "csi") => {
                proto.csi = match value {
                    "perfect" => CsiMode::Perfect,
                    "imperfect" => CsiMode::Imperfect,
                    _ => return Err(format!("unknown CSI mode '{value}', expected perfect or imperfect")),
                }
            }

            ("run", "cycles") => {
                run.cycles = scalar(value, "")?;
                if run.cycles == 0 {
                    return Err("cycles must be at least 1".into());
                }
            }
            ("run", "seed") => run.seed = scalar(value, "")?,
            ("run", "placement") => self.placement = Some((value.to_string(), line)),
            ("run", "block") => {
                let b: u64 = scalar(value, "cycles")?;
                if b == 0 {
                    return Err("block must be at least 1".into());
                }
                self.block = Some(b);
            }
            ("run", "placement_seed") => self.placement_seed = Some(scalar(value, "")?),
            ("run", "iid_snr_db") => run.iid_snr_db = Some(scalar(value, "dB")?),

            ("experiment", "kind") => exp.kind = value.parse()?,
            ("experiment", "powers_dbm") => exp.powers_dbm = Some(list(value, "dBm")?),
            ("experiment", "snrs_db") => exp.snrs_db = Some(list(value, "dB")?),
            ("experiment", "payloads_bytes") => {
                let v: Vec<f64> = list(value, "bytes")?;
                v.iter().try_for_each(|&b| positive(b).map(|_| ()))?;
                exp.payloads_bytes = Some(v);
            }
            ("experiment", "populations") => exp.populations = Some(list(value, "")?),
            ("experiment", "pilot_counts") => exp.pilot_counts = Some(list(value, "symbols")?),
            ("experiment", "beta_grid") => {
                let v: Vec<f64> = list(value, "")?;
                for &b in &v {
                    in_range(b, 0.0, 1.0, "beta grid value")?;
                }
                exp.beta_grid = Some(v);
            }
            ("experiment", "theta_grid") => {
                let v: Vec<f64> = list(value, "")?;
                for &t in &v {
                    if !(t > 0.0 && t <= 1.0) {
                        return Err(format!("theta grid value must lie in (0, 1], got {t}"));
                    }
                }
                exp.theta_grid = Some(v);
            }
            ("experiment", "dmt_points") => {
                exp.dmt_points = scalar(value, "")?;
                if exp.dmt_points < 2 {
                    return Err("dmt_points must be at least 2".into());
                }
            }

            ("coverage", "side_m") => cov.side_m = positive(scalar(value, "m")?)?,
            ("coverage", "resolution") => cov.resolution = scalar(value, "")?,
            ("coverage", "ap") => cov.ap = point(value)?,
            ("coverage", "ap_antennas") => cov.ap_antennas = scalar(value, "")?,
            ("coverage", "relays") => cov.relays = points(value)?,
            ("coverage", "wall") => {
                cov.wall = if value == "none" {
                    None
                } else {
                    match points(value)?.as_slice() {
                        [a, b] => Some((*a, *b)),
                        _ => return Err("wall takes two endpoints 'x1:y1, x2:y2' or 'none'".into()),
                    }
                }
            }
            ("coverage", "penetration_loss_db") => cov.penetration_loss_db = scalar(value, "dB")?,
            ("coverage", "target_outage") => cov.target_outage = scalar(value, "")?,
            ("coverage", "rate_bpcu") => cov.rate_bpcu = scalar(value, "bit/s/Hz")?,
            _ => return Err(format!("unknown key '{key}' in section [{section}]")),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Scenario, CliError> {
        let at = |line: usize, msg: String| CliError::Config(format!("line {line}: {msg}"));
        match (self.scheme, self.k) {
            (Some((SchemeTag::KBest, line)), k) => {
                let Some((k, _)) = k else { return Err(at(line, "scheme k_best needs a 'k' key".into())) };
                self.sc.protocol.scheme = Scheme::KBest(k);
            }
            (_, Some((_, line))) => return Err(at(line, "'k' is only valid with scheme = k_best".into())),
            (Some((SchemeTag::Plain(s), _)), None) => self.sc.protocol.scheme = s,
            (None, None) => {}
        }
        if let Some((mode, line)) = self.placement {
            self.sc.run.placement = match mode.as_str() {
                "per_block" => PlacementSetting::PerBlock(self.block.unwrap_or(100)),
                "per_cycle" => PlacementSetting::PerCycle,
                "fixed" => PlacementSetting::Fixed(self.placement_seed.unwrap_or(self.sc.run.seed)),
                _ => return Err(at(line, format!("unknown placement '{mode}', expected per_block, per_cycle or fixed"))),
            };
        } else if let Some(b) = self.block {
            self.sc.run.placement = PlacementSetting::PerBlock(b);
        }
        let sc = self.sc;
        sc.network.validate().map_err(|e| CliError::Config(format!("[network]: {e}")))?;
        sc.protocol.validate().map_err(|e| CliError::Config(format!("[protocol]: {e}")))?;
        Ok(sc)
    }
}

/// Parses scenario text.
pub fn parse_str(text: &str) -> Result<Scenario, CliError> {
    let mut b = Builder {
        sc: Scenario::default(),
        scheme: None,
        k: None,
        placement: None,
        block: None,
        placement_seed: None,
    };
    let mut section: Option<String> = None;
    let mut seen_sections: Vec<String> = Vec::new();
    let mut seen_keys: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |msg: String| CliError::Config(format!("line {line_no}: {msg}"));
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err(format!("malformed section header '{line}'")))?.trim();
            if !REQUIRED_SECTIONS.contains(&name) && name != "coverage" {
                return Err(err(format!("unknown section [{name}]")));
            }
            if seen_sections.iter().any(|s| s == name) {
                return Err(err(format!("section [{name}] appears twice")));
            }
            seen_sections.push(name.to_string());
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.as_deref().ok_or_else(|| err(format!("key '{key}' appears before any section")))?;
        if seen_keys.iter().any(|(s, k)| s == sec && k == key) {
            return Err(err(format!("duplicate key '{key}' in [{sec}]")));
        }
        seen_keys.push((sec.to_string(), key.to_string()));
        b.apply(sec, key, value, line_no).map_err(err)?;
    }
    let missing: Vec<String> =
        REQUIRED_SECTIONS.iter().filter(|s| !seen_sections.iter().any(|x| x == *s)).map(|s| format!("[{s}]")).collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("missing sections: {}", missing.join(", "))));
    }
    b.finish()
}

pub fn parse_file(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_point(p: Point) -> String {
    format!("{}:{}", p.x, p.y)
}

/// Renders a scenario that [`parse_str`] reads back unchanged.
pub fn emit(sc: &Scenario) -> String {
    let mut s = String::new();
    let n = &sc.network;
    let kv = |s: &mut String, k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");

    s.push_str("[network]\n");
    kv(&mut s, "floor_side_m", n.floor_side_m.to_string());
    kv(&mut s, "n_devices", n.n_devices.to_string());
    kv(&mut s, "n_aps", n.n_aps.to_string());
    kv(&mut s, "payload_bytes", (n.payload_bits / 8.0).to_string());
    kv(&mut s, "cycle_s", n.cycle_s.to_string());
    kv(&mut s, "bandwidth_hz", n.bandwidth_hz.to_string());
    kv(&mut s, "carrier_hz", n.carrier_hz.to_string());
    kv(&mut s, "p_ap_dbm", n.p_ap_dbm.to_string());
    kv(&mut s, "p_dev_dbm", n.p_dev_dbm.to_string());
    kv(&mut s, "noise_psd_dbm_hz", n.noise_psd_dbm_hz.to_string());
    kv(&mut s, "ple_near", n.ple_near.to_string());
    kv(&mut s, "ple_los", n.ple_los.to_string());
    kv(&mut s, "ple_nlos", n.ple_nlos.to_string());
    kv(&mut s, "blockage_a", n.blockage_a.to_string());
    kv(&mut s, "blockage_b_m", n.blockage_b_m.to_string());
    kv(&mut s, "shadow_ap_los_db", n.shadowing.ap_los_db.to_string());
    kv(&mut s, "shadow_ap_nlos_db", n.shadowing.ap_nlos_db.to_string());
    kv(&mut s, "shadow_dev_los_db", n.shadowing.dev_los_db.to_string());
    kv(&mut s, "shadow_dev_nlos_db", n.shadowing.dev_nlos_db.to_string());
    kv(&mut s, "min_distance_m", n.min_distance_m.to_string());

    let p = &sc.protocol;
    s.push_str("\n[protocol]\n");
    kv(&mut s, "scheme", scheme_name(p.scheme).to_string());
    if let Scheme::KBest(k) = p.scheme {
        kv(&mut s, "k", k.to_string());
    }
    kv(&mut s, "beta", p.beta.to_string());
    kv(&mut s, "alpha", p.alpha.to_string());
    kv(&mut s, "theta", p.theta.to_string());
    kv(&mut s, "pilots", p.pilots.to_string());
    kv(&mut s, "csi", if p.csi == CsiMode::Perfect { "perfect" } else { "imperfect" }.to_string());

    let r = &sc.run;
    s.push_str("\n[run]\n");
    kv(&mut s, "cycles", r.cycles.to_string());
    kv(&mut s, "seed", r.seed.to_string());
    match r.placement {
        PlacementSetting::PerBlock(b) => {
            kv(&mut s, "placement", "per_block".into());
            kv(&mut s, "block", b.to_string());
        }
        PlacementSetting::PerCycle => kv(&mut s, "placement", "per_cycle".into()),
        PlacementSetting::Fixed(seed) => {
            kv(&mut s, "placement", "fixed".into());
            kv(&mut s, "placement_seed", seed.to_string());
        }
    }
    if let Some(v) = r.iid_snr_db {
        kv(&mut s, "iid_snr_db", v.to_string());
    }

    let e = &sc.experiment;
    s.push_str("\n[experiment]\n");
    kv(&mut s, "kind", e.kind.to_string());
    if let Some(v) = &e.powers_dbm {
        kv(&mut s, "powers_dbm", join(v));
    }
    if let Some(v) = &e.snrs_db {
        kv(&mut s, "snrs_db", join(v));
    }
    if let Some(v) = &e.payloads_bytes {
        kv(&mut s, "payloads_bytes", join(v));
    }
    if let Some(v) = &e.populations {
        kv(&mut s, "populations", join(v));
    }
    if let Some(v) = &e.pilot_counts {
        kv(&mut s, "pilot_counts", join(v));
    }
    if let Some(v) = &e.beta_grid {
        kv(&mut s, "beta_grid", join(v));
    }
    if let Some(v) = &e.theta_grid {
        kv(&mut s, "theta_grid", join(v));
    }
    kv(&mut s, "dmt_points", e.dmt_points.to_string());

    let c = &sc.coverage;
    s.push_str("\n[coverage]\n");
    kv(&mut s, "side_m", c.side_m.to_string());
    kv(&mut s, "resolution", c.resolution.to_string());
    kv(&mut s, "ap", fmt_point(c.ap));
    kv(&mut s, "ap_antennas", c.ap_antennas.to_string());
    let relays = if c.relays.is_empty() {
        "none".to_string()
    } else {
        c.relays.iter().map(|&p| fmt_point(p)).collect::<Vec<_>>().join(", ")
    };
    kv(&mut s, "relays", relays);
    let wall = match c.wall {
        Some((a, b)) => format!("{}, {}", fmt_point(a), fmt_point(b)),
        None => "none".into(),
    };
    kv(&mut s, "wall", wall);
    kv(&mut s, "penetration_loss_db", c.penetration_loss_db.to_string());
    kv(&mut s, "target_outage", c.target_outage.to_string());
    kv(&mut s, "rate_bpcu", c.rate_bpcu.to_string());
    s
}
