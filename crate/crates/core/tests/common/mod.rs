//! Independent oracles shared by the integration tests.
//!
//! The replay re-derives the MCCH frame arithmetic from the raw constants
//! instead of calling into `tdma`, so a slip in either one shows up.
#![allow(dead_code)]

pub mod mac_table;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tetra_sds::config::ScenarioConfig;
use tetra_sds::metrics::FlowRecord;
use tetra_sds::tdma::SimTime;

pub const SLOT: u64 = 14_167_000;
pub const SUB: u64 = SLOT / 2;
pub const FRAME: u64 = 4 * SLOT;

/// Uplink MCCH subslots sit at the start of each frame: two per frame.
pub fn index_at_or_after(t: u64) -> u64 {
    let (g, rem) = (t / FRAME, t % FRAME);
    match rem {
        0 => 2 * g,
        r if r <= SUB => 2 * g + 1,
        _ => 2 * (g + 1),
    }
}

pub fn time_of(idx: u64) -> u64 {
    (idx / 2) * FRAME + (idx % 2) * SUB
}

pub fn control(idx: u64) -> bool {
    (idx / 2) % 18 == 17
}

pub fn next_usable(mut idx: u64) -> u64 {
    while control(idx) {
        idx += 1;
    }
    idx
}

pub struct Replayed {
    pub generated: u64,
    pub access: u64,
    pub ack: u64,
}

/// One station, error-free channel, no other traffic: each message goes
/// MAC-ACCESS -> grant at the next frame -> 8 reserved subslots -> ACK on the next downlink subslot.
pub fn replay(generated: &[u64], reserved: u64) -> Vec<Replayed> {
    let mut free = 0;
    generated
        .iter()
        .map(|&t0| {
            let access = next_usable(index_at_or_after(t0.max(free)));
            let mut grant_frame = access / 2 + 1;
            if grant_frame % 18 == 17 {
                grant_frame += 1;
            }
            let mut idx = 2 * grant_frame;
            let mut last = idx;
            for _ in 0..reserved {
                idx = next_usable(idx);
                last = idx;
                idx += 1;
            }
            let ack = next_usable(last + 1);
            free = time_of(ack);
            Replayed {
                generated: t0,
                access,
                ack,
            }
        })
        .collect()
}

pub fn oracle_config(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    for (k, v) in [
        ("traffic.n_f", "1"),
        ("traffic.n_c", "0"),
        ("traffic.lambda_o", "0.1"),
        ("traffic.lambda_f", "0"),
        ("traffic.lambda_voice", "0"),
        ("traffic.holding_timer", "none"),
        ("traffic.report_bits", "800"),
        ("channel.model", "ideal"),
        ("access.wt", "5"),
        ("access.nu", "5"),
        ("access.initial_window", "1"),
        ("run.length_multiframes", "1500"),
        ("metrics.warmup_multiframes", "0"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.master_seed = seed;
    cfg.validate().unwrap();
    cfg
}

/// Age of the freshest update held by the receiver, evaluated just before
/// every closure instant. Each such value is a peak of the sawtooth.
pub fn brute_force_peaks(flow: &FlowRecord, warmup_end: SimTime) -> Vec<f64> {
    let mut events: Vec<(SimTime, SimTime)> = flow.deliveries.clone();
    events.sort_by_key(|&(g, c)| (c, g));
    let mut peaks = Vec::new();
    for (k, &(gen, closed)) in events.iter().enumerate() {
        let freshest = events[..k].iter().filter(|(_, c)| *c < closed).map(|(g, _)| *g).max();
        if let Some(held) = freshest {
            if gen >= warmup_end {
                peaks.push((closed.as_nanos() - held.as_nanos()) as f64 * 1e-9);
            }
        }
    }
    peaks
}

pub fn random_scenario(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    let model = ["RA", "TU", "HT", "ideal"][rng.random_range(0..4)];
    let holding = ["none", "inverse_rate", "30"][rng.random_range(0..3)];
    let closure = ["at_ack", "at_forwarding_complete"][rng.random_range(0..2)];
    let settings = [
        ("traffic.n_f", rng.random_range(1..=20u32).to_string()),
        ("traffic.n_c", rng.random_range(0..=300u32).to_string()),
        ("traffic.lambda_o", format!("{:.3}", rng.random_range(0.05..0.5))),
        ("traffic.holding_timer", holding.to_string()),
        ("channel.model", model.to_string()),
        ("metrics.paoi_closure", closure.to_string()),
        ("access.wt", rng.random_range(1..=15u8).to_string()),
        ("access.nu", rng.random_range(1..=15u8).to_string()),
        ("run.length_multiframes", "300".to_string()),
        ("metrics.warmup_multiframes", "20".to_string()),
        ("run.seed", rng.random::<u32>().to_string()),
    ];
    for (k, v) in settings {
        cfg.set(k, &v).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}


/// Checks every flow's PAoI samples against the sawtooth peaks and the run
/// summary. Returns the number of samples compared.
pub fn verify_paoi(cfg: &ScenarioConfig) -> Result<usize, String> {
    use tetra_sds::metrics::PaoiClosure;
    let out = tetra_sds::engine::simulate(cfg, 0).map_err(|e| e.to_string())?;
    let warmup_end = out.metrics.warmup_end();
    let flows: Vec<&FlowRecord> = match cfg.paoi_closure {
        PaoiClosure::AtAck => out.metrics.ack_flows().collect(),
        PaoiClosure::AtForwardingComplete => out.metrics.forward_flows().collect(),
    };
    let mut all = Vec::new();
    for flow in &flows {
        // The sawtooth peaks must equal closure minus the previous delivery's generation time.
        let peaks = brute_force_peaks(flow, warmup_end);
        let direct: Vec<f64> = flow
            .deliveries
            .windows(2)
            .filter(|w| w[1].0 >= warmup_end)
            .map(|w| (w[1].1.as_nanos() - w[0].0.as_nanos()) as f64 * 1e-9)
            .collect();
        if peaks.len() != direct.len() {
            return Err(format!("flow {:?}: {} peaks vs {} samples", flow.flow, peaks.len(), direct.len()));
        }
        if let Some((a, b)) = peaks.iter().zip(&direct).find(|(a, b)| (*a - *b).abs() >= 1e-12) {
            return Err(format!("flow {:?}: peak {a} vs sample {b}", flow.flow));
        }
        all.extend(peaks);
    }
    match (out.summary.average_paoi, all.is_empty()) {
        (None, true) => Ok(0),
        (Some(got), false) => {
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            if (got - mean).abs() <= 1e-9 * mean.max(1.0) {
                Ok(all.len())
            } else {
                Err(format!("summary PAoI {got} vs brute force {mean}"))
            }
        }
        (got, _) => Err(format!("summary PAoI {got:?} with {} brute-force samples", all.len())),
    }
}

/// Runs the single-responder oracle scenario and compares every delivery with
/// the replay. Returns the largest gap between delay and service time, in ns.
pub fn verify_single_responder(seed: u64) -> Result<u64, String> {
    let cfg = oracle_config(seed);
    let out = tetra_sds::engine::simulate(&cfg, 0).map_err(|e| e.to_string())?;
    let flows: Vec<&FlowRecord> = out.metrics.ack_flows().collect();
    if flows.len() != 1 || !flows[0].drops.is_empty() || out.summary.counts.dropped() != 0 {
        return Err("expected one flow with no drops".into());
    }
    if out.summary.counts.pending > 1 {
        return Err(format!("{} messages left pending", out.summary.counts.pending));
    }
    let deliveries = &flows[0].deliveries;
    let gens: Vec<u64> = deliveries.iter().map(|(g, _)| g.as_nanos()).collect();
    let mut worst = 0;
    for ((_, closed), r) in deliveries.iter().zip(replay(&gens, 8)) {
        if closed.as_nanos() != time_of(r.ack) {
            return Err(format!("message generated at {} ns closed at {closed}, replay says {} ns", r.generated, time_of(r.ack)));
        }
        let clean = time_of(r.access) - r.generated < SUB && r.ack - r.access <= 10;
        if clean {
            let service = 5 * FRAME - (r.access % 2) * SUB;
            let delay = closed.as_nanos() - r.generated;
            if delay < service || delay - service >= SUB {
                return Err(format!("delay {delay} ns vs service {service} ns"));
            }
            worst = worst.max(delay - service);
        }
    }
    Ok(worst)
}
