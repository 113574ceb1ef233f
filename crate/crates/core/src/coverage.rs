//! Deterministic coverage maps for single-hop versus two-hop relayed
//! transmission around a blocking wall.
//!
//! Each grid point sees the average SNR of the deterministic path loss; a
//! link whose straight segment crosses the wall uses the NLOS exponent plus
//! the wall's penetration loss. A point is covered in a phase when the
//! Rayleigh failure probability of that phase is at most the target.
//!
//! The single-hop phase spends the whole cycle at `rate_bpcu`; the two-hop
//! variant spends half a cycle on each hop at twice that rate. Relays are
//! assumed to have decoded. Several relays with unequal average SNRs are
//! scored with [`fail_prob`] at their geometric-mean SNR, which matches the
//! exact failure probability of the unequal sum to leading order in the
//! high-reliability regime.

use rayon::prelude::*;

use crate::channel::{NetworkConfig, Point};
use crate::link::{fail_prob, RateBps};
use crate::{db_to_linear, linear_to_db, Error, Result};

/// Opaque straight wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub a: Point,
    pub b: Point,
    pub penetration_loss_db: f64,
}

fn orient(p: Point, q: Point, r: Point) -> f64 {
    (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
}

/// `true` if the closed segments `p1p2` and `q1q2` share a point.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

impl Wall {
    pub fn blocks(&self, from: Point, to: Point) -> bool {
        segments_intersect(from, to, self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    /// Radio parameters; only bandwidth, carrier, powers, noise, path-loss
    /// exponents and the distance clamp are used.
    pub network: NetworkConfig,
    pub side_m: f64,
    /// Grid points per side.
    pub resolution: usize,
    pub ap_position: Point,
    pub ap_antennas: u32,
    pub relay_positions: Vec<Point>,
    pub wall: Option<Wall>,
    pub target_outage: f64,
    /// Single-hop spectral efficiency; each two-hop phase runs at twice this.
    pub rate_bpcu: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec {
            network: NetworkConfig::default(),
            side_m: 100.0,
            resolution: 101,
            ap_position: Point::new(50.0, 50.0),
            ap_antennas: 4,
            relay_positions: vec![Point::new(80.0, 22.0), Point::new(92.0, 50.0), Point::new(80.0, 78.0)],
            wall: Some(Wall { a: Point::new(72.0, 28.0), b: Point::new(72.0, 72.0), penetration_loss_db: 20.0 }),
            target_outage: 1e-9,
            rate_bpcu: 1.0,
        }
    }
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::config("coverage grid needs at least 2 points per side"));
        }
        if !(self.side_m > 0.0) {
            return Err(Error::config("coverage area side must be positive"));
        }
        if self.ap_antennas == 0 {
            return Err(Error::config("the AP needs at least one antenna"));
        }
        if let Some(w) = &self.wall {
            if !(w.penetration_loss_db >= 0.0) {
                return Err(Error::config("wall penetration loss must be non-negative"));
            }
        }
        if !(self.target_outage > 0.0 && self.target_outage <= 1.0) {
            return Err(Error::config("target outage must lie in (0, 1]"));
        }
        if !(self.rate_bpcu >= 0.0) {
            return Err(Error::config("rate must be non-negative"));
        }
        self.network.validate()
    }

    /// Coordinates of grid point `(row, col)`; rows run along y.
    pub fn grid_point(&self, row: usize, col: usize) -> Point {
        let step = self.side_m / (self.resolution - 1) as f64;
        Point::new(col as f64 * step, row as f64 * step)
    }

    fn link_snr(&self, from: Point, to: Point, p_dbm: f64) -> f64 {
        let cfg = &self.network;
        let mut pl = cfg.path_loss();
        let blocked = self.wall.filter(|w| w.blocks(from, to));
        let extra = blocked.map_or(0.0, |w| w.penetration_loss_db);
        if blocked.is_some() {
            pl.ple_los = pl.ple_nlos;
        }
        let loss = pl.loss_db(from.distance(&to), true) + extra;
        db_to_linear(p_dbm - loss - cfg.noise_power_dbm())
    }

    /// Whether the AP link to `p` crosses the wall.
    pub fn in_shadow(&self, p: Point) -> bool {
        self.wall.is_some_and(|w| w.blocks(self.ap_position, p))
    }
}

/// Coverage fractions per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions {
    pub single_hop: f64,
    pub broadcast: f64,
    pub relay: f64,
    pub combined: f64,
}

/// Row-major maps of `resolution × resolution` points.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageResult {
    pub resolution: usize,
    /// Per-antenna average SNR from the AP, dB.
    pub ap_snr_db: Vec<f64>,
    /// Geometric-mean relay SNR, dB; `-inf` without relays.
    pub relay_snr_db: Vec<f64>,
    pub single_hop: Vec<bool>,
    pub broadcast: Vec<bool>,
    pub relay: Vec<bool>,
    pub combined: Vec<bool>,
    pub shadow: Vec<bool>,
    pub fractions: Fractions,
    /// Fractions over the shadowed points only; `None` if there are none.
    pub shadow_fractions: Option<Fractions>,
}

fn fraction(mask: &[bool], filter: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for (i, &m) in mask.iter().enumerate() {
        if filter(i) {
            total += 1;
            hit += m as usize;
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

fn fractions(r: &CoverageResult, filter: impl Fn(usize) -> bool + Copy) -> Option<Fractions> {
    Some(Fractions {
        single_hop: fraction(&r.single_hop, filter)?,
        broadcast: fraction(&r.broadcast, filter)?,
        relay: fraction(&r.relay, filter)?,
        combined: fraction(&r.combined, filter)?,
    })
}

struct PointEval {
    ap_snr: f64,
    relay_snr: f64,
    single: bool,
    broadcast: bool,
    relay: bool,
    shadow: bool,
}

pub fn compute_coverage(spec: &MapSpec) -> Result<CoverageResult> {
    spec.validate()?;
    let w = spec.network.bandwidth_hz;
    let rate_1h = RateBps::from_bpcu(spec.rate_bpcu, w)?;
    let rate_2h = rate_1h.scaled(2.0);
    let n_relays = spec.relay_positions.len() as u32;
    let n = spec.resolution;

    let evals: Vec<PointEval> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let p = spec.grid_point(idx / n, idx % n);
            let ap_snr = spec.link_snr(spec.ap_position, p, spec.network.p_ap_dbm);
            let (relay_snr, relay) = if n_relays == 0 {
                (0.0, false)
            } else {
                let log_mean = spec
                    .relay_positions
                    .iter()
                    .map(|&r| spec.link_snr(r, p, spec.network.p_dev_dbm).ln())
                    .sum::<f64>()
                    / n_relays as f64;
                let snr = log_mean.exp();
                (snr, fail_prob(n_relays, rate_2h, w, snr) <= spec.target_outage)
            };
            PointEval {
                ap_snr,
                relay_snr,
                single: fail_prob(spec.ap_antennas, rate_1h, w, ap_snr) <= spec.target_outage,
                broadcast: fail_prob(spec.ap_antennas, rate_2h, w, ap_snr) <= spec.target_outage,
                relay,
                shadow: spec.in_shadow(p),
            }
        })
        .collect();

    let mut res = CoverageResult {
        resolution: n,
        ap_snr_db: evals.iter().map(|e| linear_to_db(e.ap_snr)).collect(),
        relay_snr_db: evals.iter().map(|e| linear_to_db(e.relay_snr)).collect(),
        single_hop: evals.iter().map(|e| e.single).collect(),
        broadcast: evals.iter().map(|e| e.broadcast).collect(),
        relay: evals.iter().map(|e| e.relay).collect(),
        combined: evals.iter().map(|e| e.broadcast || e.relay).collect(),
        shadow: evals.iter().map(|e| e.shadow).collect(),
        fractions: Fractions { single_hop: 0.0, broadcast: 0.0, relay: 0.0, combined: 0.0 },
        shadow_fractions: None,
    };
    res.fractions = fractions(&res, |_| true).expect("grid is nonempty");
    let shadow = res.shadow.clone();
    res.shadow_fractions = fractions(&res, |i| shadow[i]);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MapSpec {
        MapSpec { resolution: 41, ..Default::default() }
    }

    #[test]
    fn segment_intersection_cases() {
        let p = Point::new;
        assert!(segments_intersect(p(0.0, 0.0), p(2.0, 2.0), p(0.0, 2.0), p(2.0, 0.0)));
        assert!(!segments_intersect(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)));
        assert!(segments_intersect(p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.0), p(1.0, 5.0)));
        assert!(segments_intersect(p(0.0, 0.0), p(3.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)));
        assert!(!segments_intersect(p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), p(3.0, 0.0)));
    }

    #[test]
    fn trivial_target_covers_everything() {
        let res = compute_coverage(&MapSpec { target_outage: 1.0, ..small() }).unwrap();
        assert_eq!(res.fractions.single_hop, 1.0);
        assert_eq!(res.fractions.combined, 1.0);
    }

    #[test]
    fn ap_location_is_covered() {
        let spec = MapSpec { rate_bpcu: 5.0, ..small() };
        let res = compute_coverage(&spec).unwrap();
        let mid = 20 * 41 + 20;
        assert_eq!(spec.grid_point(20, 20), spec.ap_position);
        assert!(res.single_hop[mid] && res.broadcast[mid]);
    }

    #[test]
    fn combined_is_union() {
        let res = compute_coverage(&small()).unwrap();
        for i in 0..res.combined.len() {
            assert_eq!(res.combined[i], res.broadcast[i] || res.relay[i]);
        }
        let f = res.fractions;
        for v in [f.single_hop, f.broadcast, f.relay, f.combined] {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn coverage_shrinks_with_rate_and_stringency() {
        let mut prev = f64::INFINITY;
        for rate in [0.5, 1.0, 2.0, 4.0] {
            let f = compute_coverage(&MapSpec { rate_bpcu: rate, ..small() }).unwrap().fractions.single_hop;
            assert!(f <= prev);
            prev = f;
        }
        let mut prev = f64::INFINITY;
        for target in [1e-3, 1e-6, 1e-9, 1e-12] {
            let f = compute_coverage(&MapSpec { target_outage: target, ..small() }).unwrap().fractions;
            assert!(f.single_hop <= prev);
            prev = f.single_hop;
        }
    }

    #[test]
    fn removing_the_wall_never_hurts_single_hop() {
        let with = compute_coverage(&small()).unwrap();
        let without = compute_coverage(&MapSpec { wall: None, ..small() }).unwrap();
        assert!(without.fractions.single_hop >= with.fractions.single_hop);
        assert!(without.shadow_fractions.is_none());
        assert!(with.shadow_fractions.is_some());
    }

    #[test]
    fn validation() {
        assert!(compute_coverage(&MapSpec { resolution: 1, ..small() }).is_err());
        let wall = Wall { a: Point::new(0.0, 0.0), b: Point::new(1.0, 1.0), penetration_loss_db: -1.0 };
        assert!(compute_coverage(&MapSpec { wall: Some(wall), ..small() }).is_err());
        assert!(compute_coverage(&MapSpec { target_outage: 0.0, ..small() }).is_err());
    }
}
