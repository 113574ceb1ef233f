//! Closed-form and semi-analytic outage evaluators.
//!
//! These hold under the i.i.d. simplification where every AP-device and
//! device-device link has the same nominal SNR and independent Rayleigh
//! fading. They evaluate tails far below what simulation can reach and serve
//! as oracles for the Monte Carlo engine.

use crate::link::{fail_prob, fail_success_prob, RateBps};
use crate::special::ln_binomial;
use crate::{Error, Result};

/// Network with one nominal SNR on every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidScenario {
    pub n_devices: u32,
    pub n_aps: u32,
    /// Linear nominal SNR `ρ = P_t / (W σ₀)`.
    pub nominal_snr: f64,
    pub rate_broadcast: RateBps,
    pub rate_relay: RateBps,
    pub bandwidth_hz: f64,
}

impl IidScenario {
    /// Two-hop scenario serving all `n` devices with payload `payload_bits`
    /// in data time `t_data`, broadcast share `alpha`.
    pub fn two_hop(n: u32, m: u32, snr: f64, payload_bits: f64, t_data: f64, alpha: f64, bandwidth_hz: f64) -> Self {
        let load = n as f64 * payload_bits;
        IidScenario {
            n_devices: n,
            n_aps: m,
            nominal_snr: snr,
            rate_broadcast: RateBps::new(load / (alpha * t_data)).expect("positive load"),
            rate_relay: RateBps::new(load / ((1.0 - alpha) * t_data)).expect("positive load"),
            bandwidth_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_devices == 0 || self.n_aps == 0 {
            return Err(Error::arg("scenario needs at least one device and one AP"));
        }
        if !(self.nominal_snr > 0.0) || !(self.bandwidth_hz > 0.0) {
            return Err(Error::arg("nominal SNR and bandwidth must be positive"));
        }
        Ok(())
    }
}

/// Two-hop system outage when all devices are weak:
///
/// `Σ_{n=0}^{N−1} C(N,n) q_b^{N−n} (1 − q_b)^n [1 − (1 − q_r^{(M+n)})^{N−n}]`
///
/// with `q_b = p(M, R_b)` and `q_r^{(M+n)} = min{1, p(M+n, R_r) / p(M, R_b)}`,
/// where `n` counts the relays. Every term is formed in log space and the
/// terms are combined with a compensated log-sum-exp.
pub fn p2h_closed_form(scn: &IidScenario) -> Result<f64> {
    scn.validate()?;
    let (n, m) = (scn.n_devices, scn.n_aps);
    let (w, snr) = (scn.bandwidth_hz, scn.nominal_snr);
    let (q_b, s_b) = fail_success_prob(m, scn.rate_broadcast, w, snr);
    if q_b == 0.0 {
        return Ok(0.0);
    }
    let ln_qb = q_b.ln();
    let ln_sb = s_b.ln();
    let mut log_terms = Vec::with_capacity(n as usize);
    for relays in 0..n {
        let q_r = (fail_prob(m + relays, scn.rate_relay, w, snr) / q_b).min(1.0);
        let weak = (n - relays) as f64;
        // ln[1 − (1 − q_r)^{weak}]
        let ln_relay_fail = if q_r >= 1.0 { 0.0 } else { (-(weak * (-q_r).ln_1p()).exp_m1()).ln() };
        let ln_relays = if relays == 0 { 0.0 } else { relays as f64 * ln_sb };
        let t = ln_binomial(n as u64, relays as u64) + weak * ln_qb + ln_relays + ln_relay_fail;
        if t.is_finite() {
            log_terms.push(t);
        }
    }
    Ok(log_sum_exp(&log_terms).exp().clamp(0.0, 1.0))
}

/// High-SNR approximation of [`p2h_closed_form`].
///
/// Drops `(1 − q_b)^n` and linearizes `1 − (1 − q_r)^{N−n} ≈ (N − n) q_r`,
/// except for the no-relay term at `R_r ≤ R_b` where `q_r = 1`.
pub fn p2h_high_snr_approx(scn: &IidScenario) -> Result<f64> {
    scn.validate()?;
    let (n, m) = (scn.n_devices, scn.n_aps);
    let (w, snr) = (scn.bandwidth_hz, scn.nominal_snr);
    let q_b = fail_prob(m, scn.rate_broadcast, w, snr);
    if q_b == 0.0 {
        return Ok(0.0);
    }
    let mut log_terms = Vec::with_capacity(n as usize);
    for relays in 0..n {
        let weak = (n - relays) as f64;
        let ln_relay_fail = if relays == 0 && scn.rate_relay <= scn.rate_broadcast {
            0.0
        } else {
            weak.ln() + fail_prob(m + relays, scn.rate_relay, w, snr).ln() - q_b.ln()
        };
        log_terms.push(ln_binomial(n as u64, relays as u64) + weak * q_b.ln() + ln_relay_fail);
    }
    Ok(log_sum_exp(&log_terms).exp())
}

/// Single-hop (β = 1) outage bounds for `n` devices and `m` APs.
///
/// Lower bound: some device cannot carry its packet even with the whole
/// phase, `1 − (1 − p(M, B/t₁ₕ))^N`. Upper bound: every device can carry it
/// in an equal share, `1 − (1 − p(M, N B/t₁ₕ))^N`.
pub fn single_hop_bounds(n: u32, m: u32, payload_bits: f64, t_1h: f64, snr: f64, bandwidth_hz: f64) -> Result<(f64, f64)> {
    if !(t_1h > 0.0) {
        return Err(Error::arg("single-hop time must be positive"));
    }
    if n == 0 || m == 0 {
        return Err(Error::arg("need at least one device and one AP"));
    }
    let bound = |rate_bps: f64| {
        let (f, s) = fail_success_prob(m, RateBps::new(rate_bps).expect("positive rate"), bandwidth_hz, snr);
        // 1 − s^N without cancellation.
        let ln_s = if f < 0.5 { (-f).ln_1p() } else { s.ln() };
        -(n as f64 * ln_s).exp_m1()
    };
    let lower = bound(payload_bits / t_1h);
    let upper = bound(n as f64 * payload_bits / t_1h);
    Ok((lower, upper))
}

/// Diversity-multiplexing curve sampled on a multiplexing-gain grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DmtCurve {
    pub multiplexing: Vec<f64>,
    pub diversity: Vec<f64>,
}

impl DmtCurve {
    fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Self {
        DmtCurve { multiplexing: grid.to_vec(), diversity: grid.iter().map(|&r| f(r).max(0.0)).collect() }
    }
}

/// Uniform grid on `[0, 1]` with `points` samples.
pub fn multiplexing_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
}

/// Single-hop DMT bounds `(M(1 − r), M(1 − r/N))`.
pub fn dmt_single_hop(m: u32, n: u32, grid: &[f64]) -> (DmtCurve, DmtCurve) {
    let (m, n) = (m as f64, n as f64);
    (DmtCurve::from_fn(grid, |r| m * (1.0 - r)), DmtCurve::from_fn(grid, |r| m * (1.0 - r / n)))
}

/// Two-hop DMT `(M + N − 1)(1 − r / (1 − α))`, clipped at zero.
///
/// At `α = 1/2` this is `(M + N − 1)(1 − 2r)`, which vanishes at `r = 1/2`,
/// the maximum multiplexing gain of the scheme.
pub fn dmt_two_hop(m: u32, n: u32, alpha: f64, grid: &[f64]) -> Result<DmtCurve> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let d0 = (m + n - 1) as f64;
    Ok(DmtCurve::from_fn(grid, |r| d0 * (1.0 - r / (1.0 - alpha))))
}

/// Diversity order `M (N − K + 1)` of the K-best scheduler.
pub fn diversity_k_best(m: u32, n: u32, k: u32) -> Result<u32> {
    if k == 0 || k > n {
        return Err(Error::arg(format!("K must lie in [1, {n}], got {k}")));
    }
    Ok(m * (n - k + 1))
}

/// Local outage exponent of a sampled outage-vs-power curve.
///
/// For each interior point returns `(outage, slope)` where slope is the
/// centered difference of `−ln(outage)` against `ln(power)`.
pub fn empirical_outage_exponent(curve: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if curve.len() < 3 {
        return Err(Error::arg("need at least three points"));
    }
    for w in curve.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::arg("powers must be strictly increasing"));
        }
    }
    if let Some(&(p, o)) = curve.iter().find(|&&(p, o)| !(o > 0.0) || !(p > 0.0)) {
        return Err(Error::arg(format!("outage and power must be positive, got ({p}, {o})")));
    }
    Ok(curve
        .windows(3)
        .map(|w| {
            let slope = -(w[2].1.ln() - w[0].1.ln()) / (w[2].0.ln() - w[0].0.ln());
            (w[1].1, slope)
        })
        .collect())
}

/// Least-squares slope of `−ln(outage)` against `ln(power)`.
pub fn fitted_outage_exponent(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::arg("need at least two points"));
    }
    let pts: Vec<(f64, f64)> = curve.iter().map(|&(p, o)| (p.ln(), -o.ln())).collect();
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::arg("outage and power must be positive"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// `ln Σ e^{tᵢ}` with a max shift and Neumaier-compensated summation.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &t in terms {
        let v = (t - max).exp();
        let s = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - s) + v;
        } else {
            comp += (v - s) + sum;
        }
        sum = s;
    }
    max + (sum + comp).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const W: f64 = 20e6;

    fn scn(n: u32, m: u32, snr: f64, rb_bpcu: f64, rr_bpcu: f64) -> IidScenario {
        IidScenario {
            n_devices: n,
            n_aps: m,
            nominal_snr: snr,
            rate_broadcast: RateBps::from_bpcu(rb_bpcu, W).unwrap(),
            rate_relay: RateBps::from_bpcu(rr_bpcu, W).unwrap(),
            bandwidth_hz: W,
        }
    }

    #[test]
    fn single_device_reduces_to_product() {
        for (rb, rr) in [(1.0, 1.0), (0.8, 1.3), (1.5, 0.7)] {
            let s = scn(1, 2, 5.0, rb, rr);
            let q_b = fail_prob(2, s.rate_broadcast, W, 5.0);
            let q_r = (fail_prob(2, s.rate_relay, W, 5.0) / q_b).min(1.0);
            assert_relative_eq!(p2h_closed_form(&s).unwrap(), q_b * q_r, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_rates_never_fail() {
        assert_eq!(p2h_closed_form(&scn(4, 2, 3.0, 0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn matches_direct_summation_at_moderate_snr() {
        let s = scn(5, 2, 4.0, 1.2, 1.2);
        let q_b = fail_prob(2, s.rate_broadcast, W, 4.0);
        let mut direct = 0.0;
        for r in 0..5u32 {
            let q_r = (fail_prob(2 + r, s.rate_relay, W, 4.0) / q_b).min(1.0);
            let c = ln_binomial(5, r as u64).exp();
            direct += c * q_b.powi((5 - r) as i32) * (1.0 - q_b).powi(r as i32) * (1.0 - (1.0 - q_r).powi((5 - r) as i32));
        }
        assert_relative_eq!(p2h_closed_form(&s).unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_monotone_in_power_and_population() {
        let mut prev = 1.0;
        for db in (0..=60).step_by(3) {
            let p = p2h_closed_form(&scn(4, 2, crate::db_to_linear(db as f64), 1.0, 1.0)).unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= prev * (1.0 + 1e-12), "at {db} dB");
            prev = p;
        }
        // Fixed rates, more devices: every extra device is also an extra
        // potential relay, and at moderate-to-high SNR the added diversity
        // outweighs the extra receiver.
        let mut prev = 1.0;
        for n in 1..8 {
            let p = p2h_closed_form(&scn(n, 1, 10.0, 1.0, 1.0)).unwrap();
            assert!(p < prev, "n = {n}");
            prev = p;
        }
    }

    #[test]
    fn high_snr_approximation_converges() {
        let s = scn(3, 2, crate::db_to_linear(70.0), 1.0, 1.0);
        let exact = p2h_closed_form(&s).unwrap();
        let approx = p2h_high_snr_approx(&s).unwrap();
        assert_relative_eq!(exact, approx, max_relative = 1e-3);
    }

    #[test]
    fn bounds_coincide_for_one_device() {
        let (lo, hi) = single_hop_bounds(1, 2, 400.0, 1e-3, 3.0, W).unwrap();
        assert_eq!(lo, hi);
        assert_relative_eq!(lo, fail_prob(2, RateBps::new(4e5).unwrap(), W, 3.0), max_relative = 1e-12);
    }

    #[test]
    fn bounds_are_ordered() {
        for n in 1..10 {
            for m in 1..4 {
                for snr in [0.1, 1.0, 10.0, 1e3] {
                    let (lo, hi) = single_hop_bounds(n, m, 400.0, 1e-3, snr, W).unwrap();
                    assert!(lo <= hi && (0.0..=1.0).contains(&lo) && hi <= 1.0);
                }
            }
        }
        assert!(single_hop_bounds(3, 1, 400.0, 0.0, 1.0, W).is_err());
    }

    #[test]
    fn bounds_resolve_tiny_outage() {
        let snr = crate::db_to_linear(70.0);
        let (lo, hi) = single_hop_bounds(5, 3, 400.0, 1e-3, snr, W).unwrap();
        let p = fail_prob(3, RateBps::new(4e5).unwrap(), W, snr);
        assert!(p > 0.0 && p < 1e-20);
        assert_relative_eq!(lo, 5.0 * p, max_relative = 1e-9);
        assert!(hi > lo);
    }

    #[test]
    fn dmt_values() {
        let grid = [0.0, 0.25, 0.5, 1.0];
        let (lo, hi) = dmt_single_hop(3, 50, &grid);
        assert_eq!((lo.diversity[0], hi.diversity[0]), (3.0, 3.0));
        assert_eq!(lo.diversity[2], 1.5);
        assert_relative_eq!(hi.diversity[2], 2.97, max_relative = 1e-12);
        assert_eq!(lo.diversity[3], 0.0);
        let two = dmt_two_hop(3, 50, 0.5, &grid).unwrap();
        assert_eq!(two.diversity, vec![52.0, 26.0, 0.0, 0.0]);
        assert!(dmt_two_hop(3, 50, 1.0, &grid).is_err());
    }

    #[test]
    fn dmt_curves_are_nonincreasing() {
        let grid = multiplexing_grid(101);
        let (lo, hi) = dmt_single_hop(2, 7, &grid);
        let two = dmt_two_hop(2, 7, 0.3, &grid).unwrap();
        for c in [lo, hi, two] {
            assert!(c.diversity.windows(2).all(|w| w[1] <= w[0]));
            assert!(c.diversity.iter().all(|&d| d >= 0.0));
        }
    }

    #[test]
    fn k_best_diversity() {
        assert_eq!(diversity_k_best(1, 50, 50).unwrap(), 1);
        assert_eq!(diversity_k_best(3, 50, 1).unwrap(), 150);
        assert_eq!(diversity_k_best(2, 4, 2).unwrap(), 6);
        assert!(diversity_k_best(2, 4, 5).is_err());
    }

    #[test]
    fn exponent_of_pure_power_law() {
        let curve: Vec<(f64, f64)> = (1..8).map(|i| {
            let p = 10f64.powi(i);
            (p, 3.0 / p.powi(2))
        }).collect();
        for (_, slope) in empirical_outage_exponent(&curve).unwrap() {
            assert_relative_eq!(slope, 2.0, max_relative = 1e-12);
        }
        assert_relative_eq!(fitted_outage_exponent(&curve).unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn exponent_rejects_bad_curves() {
        assert!(empirical_outage_exponent(&[(1.0, 0.1), (2.0, 0.05)]).is_err());
        assert!(empirical_outage_exponent(&[(1.0, 0.1), (1.0, 0.05), (3.0, 0.01)]).is_err());
        assert!(empirical_outage_exponent(&[(1.0, 0.1), (2.0, 0.0), (3.0, 0.01)]).is_err());
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(log_sum_exp(&[0.0, 2f64.ln()]), 3f64.ln(), max_relative = 1e-14);
    }
}
