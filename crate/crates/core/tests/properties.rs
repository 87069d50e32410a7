use proptest::prelude::*;
use tetra_sds::config::ScenarioConfig;
use tetra_sds::engine::{simulate, EventClass, EventQueue};
use tetra_sds::ms_mac::fragments_needed;
use tetra_sds::tdma::SimTime;

fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    (
        1u32..12,
        0u32..200,
        0.02f64..0.6,
        prop::sample::select(vec!["RA", "TU", "HT", "ideal"]),
        prop::sample::select(vec!["none", "inverse_rate", "5"]),
        1u8..=15,
        1u8..=15,
        (0u32..3, any::<bool>(), any::<u32>()),
    )
        .prop_map(|(n_f, n_c, lambda_o, model, holding, wt, nu, (retries, abort, seed))| {
            let mut cfg = ScenarioConfig::default();
            for (k, v) in [
                ("traffic.n_f", n_f.to_string()),
                ("traffic.n_c", n_c.to_string()),
                ("traffic.lambda_o", lambda_o.to_string()),
                ("traffic.holding_timer", holding.to_string()),
                ("channel.model", model.to_string()),
                ("access.wt", wt.to_string()),
                ("access.nu", nu.to_string()),
                ("access.abort_in_flight", abort.to_string()),
                ("mac.sds_retry_limit", retries.to_string()),
                ("run.length_multiframes", "120".into()),
                ("metrics.warmup_multiframes", "10".into()),
                ("run.seed", seed.to_string()),
            ] {
                cfg.set(k, &v).unwrap();
            }
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_message_is_accounted_for(cfg in scenario()) {
        prop_assert!(cfg.validate().is_ok());
        let out = simulate(&cfg, 0).unwrap();
        let c = out.summary.counts;
        prop_assert!(c.is_conserved(), "{:?}", c);
        for (kind, counts) in &out.ledger {
            prop_assert!(counts.is_conserved(), "{}: {:?}", kind, counts);
        }
        if let Some(p) = out.summary.failure_probability {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        if let Some(d) = out.summary.average_delay {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn resolved_text_round_trips(cfg in scenario()) {
        let back = ScenarioConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fragment_count_is_the_smallest_cover(bits in 1u32..100_000, cap in 1u32..2_000) {
        let k = fragments_needed(bits, cap).unwrap();
        prop_assert!(u64::from(k) * u64::from(cap) >= u64::from(bits));
        prop_assert!(u64::from(k - 1) * u64::from(cap) < u64::from(bits));
    }

    #[test]
    fn event_queue_pops_in_key_order(items in prop::collection::vec((0u64..1_000, 0u8..4, 0u32..50), 1..200)) {
        let class = |c: u8| [EventClass::Boundary, EventClass::Timer, EventClass::CallEnd, EventClass::Arrival][c as usize];
        let mut q = EventQueue::new();
        for (i, &(t, c, s)) in items.iter().enumerate() {
            q.push(SimTime::from_nanos(t), class(c), s, i);
        }
        let mut last: Option<(SimTime, EventClass, u32, usize)> = None;
        let mut seen = 0;
        while let Some((key, i)) = q.pop() {
            let (t, c, s) = items[i];
            let cur = (SimTime::from_nanos(t), class(c), s, i);
            if let Some(prev) = last {
                prop_assert!(prev < cur, "{:?} before {:?}", prev, cur);
            }
            prop_assert_eq!(key.time, cur.0);
            last = Some(cur);
            seen += 1;
        }
        prop_assert_eq!(seen, items.len());
    }
}
