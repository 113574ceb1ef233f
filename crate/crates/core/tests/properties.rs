use andcoop::analytic::{p2h_closed_form, single_hop_bounds, IidScenario};
use andcoop::channel::{sample_cycle, ChannelRealization, CsiMode, LinkStatics, NetworkConfig, OffDiagonal};
use andcoop::link::{fail_prob, RateBps};
use andcoop::protocol::{
    build_schedule, fits_within, relay_hop_snr, run_cycle, select_strong_set, ProtocolParams, Scheme,
};
use andcoop::special::gamma_pq;
use proptest::prelude::*;

const W: f64 = 20e6;

fn rates(v: &[f64]) -> Vec<RateBps> {
    v.iter().map(|&r| RateBps::new(r).unwrap()).collect()
}

fn realization(m: usize, n: usize, ap: Vec<f64>, dd: Vec<f64>) -> ChannelRealization {
    let mut it = dd.into_iter();
    let g_dd = OffDiagonal::from_fn(n, |_, _| it.next().unwrap());
    ChannelRealization::from_parts(m, n, ap.clone(), ap, g_dd).unwrap()
}

prop_compose! {
    fn arb_network()(n in 1usize..9, m in 1usize..3)
        (ap in prop::collection::vec(0.0f64..20.0, n * m),
         dd in prop::collection::vec(0.0f64..20.0, n * (n - 1)),
         n in Just(n), m in Just(m)) -> (usize, usize, Vec<f64>, Vec<f64>) {
        (n, m, ap, dd)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn strong_set_has_maximum_cardinality(
        r in prop::collection::vec(1e5f64..1e8, 1..=12),
        tau in 1e-6f64..2e-3,
        theta in 0.1f64..=1.0,
    ) {
        let b = 400.0;
        let chosen = select_strong_set(&rates(&r), tau, theta, b);
        let n = r.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let air: f64 = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| b / (theta * r[j])).sum();
            if fits_within(air, tau) {
                best = best.max(mask.count_ones() as usize);
            }
        }
        prop_assert_eq!(chosen.len(), best);
        // The chosen devices are the fastest ones.
        let slowest_chosen = chosen.iter().map(|&j| r[j]).fold(f64::INFINITY, f64::min);
        for j in (0..n).filter(|j| !chosen.contains(j)) {
            prop_assert!(r[j] <= slowest_chosen);
        }
    }

    #[test]
    fn schedule_partitions_devices_and_respects_time(
        (n, m, ap, dd) in arb_network(),
        beta in 0.0f64..=1.0,
        payload in 10.0f64..20_000.0,
    ) {
        let cfg = NetworkConfig { n_devices: n, n_aps: m, payload_bits: payload, ..Default::default() };
        let params = ProtocolParams::perfect(Scheme::AndCoop, beta);
        let r = realization(m, n, ap, dd);
        let s = build_schedule(&r, &params, &cfg).unwrap();
        let mut all: Vec<usize> = s.strong.iter().chain(&s.weak).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(fits_within(s.single_hop_airtime(payload), s.t_1h));
        prop_assert!((s.t_1h + s.t_2h - s.t_data).abs() <= 1e-15);

        let out = run_cycle(&r, &s, &params, &cfg);
        prop_assert_eq!(out.system_outage, out.overflow || !out.failed.is_empty());
        prop_assert_eq!(out.k_weak, s.weak.len());
        for j in 0..n {
            prop_assert_eq!(out.relay_energy_j[j] > 0.0, out.relay_set.contains(&j));
        }
        for j in &out.failed {
            prop_assert!(!out.relay_set.contains(j) || s.strong.contains(j));
        }
    }

    #[test]
    fn more_relays_never_hurt((n, m, ap, dd) in arb_network(), mask in any::<u16>(), extra in any::<u16>()) {
        let r = realization(m, n, ap, dd);
        let small: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let large: Vec<usize> = (0..n).filter(|j| (mask | extra) >> j & 1 == 1).collect();
        for dev in 0..n {
            prop_assert!(relay_hop_snr(&r, dev, &large) >= relay_hop_snr(&r, dev, &small));
        }
    }

    #[test]
    fn fail_prob_is_monotone(m in 1u32..10, bpcu in 0.0f64..6.0, snr_db in -20.0f64..60.0, d in 0.0f64..3.0) {
        let snr = andcoop::db_to_linear(snr_db);
        let rate = RateBps::from_bpcu(bpcu, W).unwrap();
        let p = fail_prob(m, rate, W, snr);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(fail_prob(m, RateBps::from_bpcu(bpcu + d, W).unwrap(), W, snr) >= p);
        prop_assert!(fail_prob(m, rate, W, snr * andcoop::db_to_linear(d)) <= p);
        prop_assert!(fail_prob(m + 1, rate, W, snr) <= p);
    }

    #[test]
    fn gamma_halves_sum_to_one(a in 1u32..60, x in 0.0f64..200.0) {
        let (p, q) = gamma_pq(a as f64, x);
        prop_assert!((p + q - 1.0).abs() < 1e-12);
        prop_assert!(p >= 0.0 && q >= 0.0);
    }

    #[test]
    fn closed_form_is_a_probability_and_falls_with_power(
        n in 1u32..12, m in 1u32..4, snr_db in -10.0f64..50.0, alpha in 0.1f64..0.9,
    ) {
        let at = |db: f64| {
            p2h_closed_form(&IidScenario::two_hop(n, m, andcoop::db_to_linear(db), 400.0, 1e-3, alpha, W)).unwrap()
        };
        let p = at(snr_db);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(at(snr_db + 1.0) <= p * (1.0 + 1e-9));
    }

    #[test]
    fn bounds_are_ordered(n in 1u32..60, m in 1u32..4, snr_db in -10.0f64..50.0) {
        let (lo, hi) = single_hop_bounds(n, m, 400.0, 1e-3, andcoop::db_to_linear(snr_db), W).unwrap();
        prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    }

    #[test]
    fn cycle_sampling_is_deterministic(seed in any::<u64>(), n in 1usize..6, m in 1usize..3, pilots in 1u32..20) {
        let st = LinkStatics::iid(m, n, 10.0);
        let a = sample_cycle(&st, pilots, CsiMode::Imperfect, seed).unwrap();
        let b = sample_cycle(&st, pilots, CsiMode::Imperfect, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
