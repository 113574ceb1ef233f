//! Link-level mathematics: capacity outage, achievable rate and the failure
//! probability of a receiver served by `m` cooperating Rayleigh transmitters.

use std::fmt;

use crate::special::gamma_pq;
use crate::{Error, Result};

/// Transmission rate in bits per second.
///
/// Always non-negative. An unbounded SNR yields an infinite achievable rate,
/// which is representable.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct RateBps(f64);

impl RateBps {
    pub const ZERO: RateBps = RateBps(0.0);

    pub fn new(bps: f64) -> Result<Self> {
        if bps.is_nan() || bps < 0.0 {
            return Err(Error::arg(format!("rate must be non-negative, got {bps}")));
        }
        Ok(RateBps(bps))
    }

    /// Rate corresponding to `bpcu` bits per channel use over `bandwidth_hz`.
    pub fn from_bpcu(bpcu: f64, bandwidth_hz: f64) -> Result<Self> {
        Self::new(bpcu * bandwidth_hz)
    }

    pub fn bps(self) -> f64 {
        self.0
    }

    /// Scales the rate by a non-negative factor.
    pub fn scaled(self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0);
        RateBps(self.0 * factor)
    }
}

impl fmt::Display for RateBps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bit/s", self.0)
    }
}

/// Shannon rate `W log2(1 + snr)` of a receiver whose received SNRs from all
/// cooperating transmitters sum to `snr_sum`.
pub fn achievable_rate(snr_sum: f64, bandwidth_hz: f64) -> RateBps {
    debug_assert!(snr_sum >= 0.0);
    RateBps(bandwidth_hz * snr_sum.ln_1p() / std::f64::consts::LN_2)
}

/// `true` unless the capacity falls strictly below `rate`.
///
/// A rate equal to capacity succeeds.
pub fn decode_succeeds(snr_sum: f64, rate: RateBps, bandwidth_hz: f64) -> bool {
    achievable_rate(snr_sum, bandwidth_hz) >= rate
}

/// Minimum SNR needed to carry `rate`: `2^{R/W} − 1`.
pub fn snr_threshold(rate: RateBps, bandwidth_hz: f64) -> f64 {
    (rate.bps() / bandwidth_hz * std::f64::consts::LN_2).exp_m1()
}

/// Received power threshold `ω = W σ₀ (2^{R/W} − 1)` in watts.
pub fn omega(rate: RateBps, bandwidth_hz: f64, noise_psd_w_hz: f64) -> f64 {
    bandwidth_hz * noise_psd_w_hz * snr_threshold(rate, bandwidth_hz)
}

/// Inputs of [`fail_prob_m`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailProbParams {
    /// Number of cooperating transmitters.
    pub m: u32,
    pub rate: RateBps,
    pub bandwidth_hz: f64,
    /// Transmit power of each transmitter, watts.
    pub p_t_w: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd_w_hz: f64,
}

impl FailProbParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::arg("transmitter count m must be at least 1"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::arg("bandwidth must be positive"));
        }
        if !(self.p_t_w > 0.0) {
            return Err(Error::arg("transmit power must be positive"));
        }
        if !(self.noise_psd_w_hz > 0.0) {
            return Err(Error::arg("noise PSD must be positive"));
        }
        Ok(())
    }

    /// Nominal link SNR `ρ = P_t / (W σ₀)`.
    pub fn nominal_snr(&self) -> f64 {
        self.p_t_w / (self.bandwidth_hz * self.noise_psd_w_hz)
    }
}

/// Probability that `m` i.i.d. unit-mean Rayleigh branches at the nominal
/// power of `params` cannot carry `params.rate`.
///
/// Equals the regularized lower incomplete gamma `P(m, ω / P_t)`, the Erlang-m
/// CDF at `ω / P_t`.
pub fn fail_prob_m(params: &FailProbParams) -> Result<f64> {
    params.validate()?;
    let w = omega(params.rate, params.bandwidth_hz, params.noise_psd_w_hz);
    Ok(gamma_pq(params.m as f64, w / params.p_t_w).0)
}

/// [`fail_prob_m`] parameterized by the nominal SNR instead of powers.
///
/// `snr = ∞` gives zero. Panics in debug builds for `m = 0`.
pub fn fail_prob(m: u32, rate: RateBps, bandwidth_hz: f64, snr: f64) -> f64 {
    fail_success_prob(m, rate, bandwidth_hz, snr).0
}

/// `(fail, success)` pair for `m` branches at nominal SNR `snr`.
///
/// The success half is computed directly, not as `1 − fail`, so it stays
/// accurate when failure is almost certain.
pub fn fail_success_prob(m: u32, rate: RateBps, bandwidth_hz: f64, snr: f64) -> (f64, f64) {
    debug_assert!(m >= 1);
    let x = snr_threshold(rate, bandwidth_hz) / snr;
    gamma_pq(m as f64, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const W: f64 = 20e6;

    fn noise_psd() -> f64 {
        crate::dbm_to_watts(-174.0)
    }

    #[test]
    fn decode_boundaries() {
        assert!(!decode_succeeds(0.0, RateBps(1.0), W));
        assert!(decode_succeeds(1.0, RateBps(W), W));
        assert!(decode_succeeds(3.0, RateBps(2.0 * W), W));
        assert!(!decode_succeeds(2.999, RateBps(2.0 * W), W));
        assert!(decode_succeeds(0.0, RateBps::ZERO, W));
    }

    #[test]
    fn achievable_rate_values() {
        assert_eq!(achievable_rate(0.0, W).bps(), 0.0);
        assert_relative_eq!(achievable_rate(1.0, W).bps(), 20e6, max_relative = 1e-15);
        assert!(achievable_rate(2.0, W) > achievable_rate(1.999, W));
        assert!(achievable_rate(f64::INFINITY, W).bps().is_infinite());
    }

    #[test]
    fn omega_values() {
        let s = noise_psd();
        assert_eq!(omega(RateBps::ZERO, W, s), 0.0);
        assert_relative_eq!(omega(RateBps(W), W, s), W * s, max_relative = 1e-14);
        assert_relative_eq!(omega(RateBps(2.0 * W), W, s), 3.0 * W * s, max_relative = 1e-14);
    }

    fn params(m: u32, rate: f64, p_t_w: f64) -> FailProbParams {
        FailProbParams { m, rate: RateBps(rate), bandwidth_hz: W, p_t_w, noise_psd_w_hz: noise_psd() }
    }

    #[test]
    fn fail_prob_single_branch_is_exponential_cdf() {
        let p = params(1, 1.3 * W, 1e-12);
        let x = omega(p.rate, W, noise_psd()) / p.p_t_w;
        assert_relative_eq!(fail_prob_m(&p).unwrap(), 1.0 - (-x).exp(), max_relative = 1e-13);
    }

    #[test]
    fn fail_prob_zero_rate_is_zero() {
        for m in 1..6 {
            assert_eq!(fail_prob_m(&params(m, 0.0, 1e-3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn fail_prob_rejects_bad_params() {
        assert!(fail_prob_m(&params(0, W, 1e-3)).is_err());
        assert!(fail_prob_m(&params(1, W, 0.0)).is_err());
    }

    #[test]
    fn power_and_snr_forms_agree() {
        let p = params(3, 1.7 * W, 2e-11);
        let via_snr = fail_prob(3, p.rate, W, p.nominal_snr());
        assert_relative_eq!(fail_prob_m(&p).unwrap(), via_snr, max_relative = 1e-12);
        assert_eq!(fail_prob(2, p.rate, W, f64::INFINITY), 0.0);
    }

    #[test]
    fn monotone_over_grid() {
        let rates = [0.1, 0.5, 1.0, 2.0, 4.0];
        let powers = [1e-13, 1e-12, 1e-11, 1e-10, 1e-9];
        for m in 1..6u32 {
            for (i, &pt) in powers.iter().enumerate() {
                for (k, &r) in rates.iter().enumerate() {
                    let p = fail_prob_m(&params(m, r * W, pt)).unwrap();
                    assert!((0.0..=1.0).contains(&p));
                    if k > 0 {
                        assert!(p >= fail_prob_m(&params(m, rates[k - 1] * W, pt)).unwrap());
                    }
                    if i > 0 {
                        assert!(p <= fail_prob_m(&params(m, r * W, powers[i - 1])).unwrap());
                    }
                    if m > 1 {
                        assert!(p <= fail_prob_m(&params(m - 1, r * W, pt)).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn high_snr_asymptote_carries_the_factorial() {
        // P(m, x) / (x^m / m!) → 1 as x → 0.
        for m in 1..=6u32 {
            for x in [1e-3f64, 1e-4] {
                let snr = snr_threshold(RateBps(W), W) / x;
                let p = fail_prob(m, RateBps(W), W, snr);
                let fact: f64 = (1..=m).map(f64::from).product();
                let ratio = p / (x.powi(m as i32) / fact);
                assert!((ratio - 1.0).abs() < 0.02, "m={m} x={x} ratio={ratio}");
            }
        }
    }

    #[test]
    fn achievable_rate_is_always_decodable() {
        for snr in [0.0, 1e-9, 0.5, 1.0, 7.3, 1e3, 1e12] {
            assert!(decode_succeeds(snr, achievable_rate(snr, W), W));
        }
    }
}
