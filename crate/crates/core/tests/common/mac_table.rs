//! The MS transition table in docs/ms-mac-transitions.md and a way to reach each row.

use std::collections::BTreeSet;
use std::path::PathBuf;

use tetra_sds::ms_mac::{AccessCode, AccessParams, MacConfig, MacState, MsAction, MsContext, MsEvent};
use tetra_sds::tdma::{SimTime, SubslotAddress};
use tetra_sds::traffic::{MessageId, MessageKind, SdsMessage, StationId};

pub const EVENTS: [&str; 7] = [
    "MessageQueued",
    "AccessOpportunity",
    "WtExpiry",
    "GrantReceived",
    "ReservedSubslot",
    "AckReceived",
    "AckTimeout",
];

#[derive(Debug, Clone)]
pub struct Row {
    pub state: String,
    pub event: String,
    pub guard: String,
    pub next: String,
    pub action: String,
}

pub fn table() -> Vec<Row> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/ms-mac-transitions.md");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .filter(|l| l.starts_with('|'))
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_owned()).collect::<Vec<_>>())
        .filter(|c| c.len() == 5 && c[0] != "State" && !c[0].starts_with("---"))
        .map(|c| Row {
            state: c[0].clone(),
            event: c[1].clone(),
            guard: c[2].clone(),
            next: c[3].clone(),
            action: c[4].clone(),
        })
        .collect()
}

pub fn cfg() -> MacConfig {
    MacConfig {
        access: AccessParams::new(5, 2, AccessCode::A).unwrap(),
        ..MacConfig::default()
    }
}

pub fn msg(id: u64, bits: u32, retries: u32) -> SdsMessage {
    SdsMessage {
        id: MessageId(id),
        kind: MessageKind::Report,
        source: StationId(1),
        destination: StationId(0),
        payload_bits: bits,
        generated_at: SimTime::ZERO,
        holding_deadline: None,
        sds_retry_count: retries,
    }
}

pub fn at(mf: u32, frame: u8, sub: u8) -> SubslotAddress {
    SubslotAddress::new(mf, frame, sub).unwrap()
}

pub fn opportunity(code: AccessCode) -> MsEvent {
    MsEvent::AccessOpportunity { addr: at(0, 1, 0), code }
}

pub fn step(ms: &mut MsContext, ev: MsEvent) -> MsAction {
    ms.handle(ev, &cfg()).unwrap()
}

/// Station with one queued message of `bits`, after one MAC-ACCESS.
pub fn sent(bits: u32, retries: u32) -> MsContext {
    let mut ms = MsContext::new(StationId(1), AccessCode::A);
    step(&mut ms, MsEvent::MessageQueued(msg(1, bits, retries)));
    assert!(matches!(step(&mut ms, opportunity(AccessCode::A)), MsAction::SendAccess(_)));
    ms
}

pub fn armed() -> MsContext {
    let mut ms = sent(800, 0);
    assert_eq!(step(&mut ms, MsEvent::WtExpiry), MsAction::Rearm);
    ms
}

pub fn grant(n: usize) -> Vec<SubslotAddress> {
    (0..n).map(|k| at(0, 2 + (k / 2) as u8, (k % 2) as u8)).collect()
}

pub fn reserved(bits: u32, n: usize) -> MsContext {
    let mut ms = sent(bits, 0);
    assert_eq!(step(&mut ms, MsEvent::GrantReceived(grant(n))), MsAction::StoreGrant);
    ms
}

pub fn awaiting_ack(retries: u32) -> MsContext {
    let mut ms = sent(8, retries);
    assert!(matches!(step(&mut ms, MsEvent::GrantReceived(vec![])), MsAction::AwaitAck { .. }));
    ms
}

/// A station in `state` satisfying `guard`, and the event instance to fire.
pub fn setup(state: &str, event: &str, guard: &str) -> (MsContext, MsEvent) {
    let limit = cfg().sds_retry_limit;
    let default_event = || match event {
        "MessageQueued" => MsEvent::MessageQueued(msg(9, 100, 0)),
        "AccessOpportunity" => opportunity(AccessCode::A),
        "WtExpiry" => MsEvent::WtExpiry,
        "GrantReceived" => MsEvent::GrantReceived(grant(8)),
        "ReservedSubslot" => MsEvent::ReservedSubslot(grant(1)[0]),
        "AckReceived" => MsEvent::AckReceived,
        "AckTimeout" => MsEvent::AckTimeout,
        other => panic!("unknown event {other}"),
    };
    let with_message = || {
        let mut ms = MsContext::new(StationId(1), AccessCode::A);
        step(&mut ms, MsEvent::MessageQueued(msg(1, 800, 0)));
        ms
    };
    let ms = match (state, event, guard) {
        ("Idle", "AccessOpportunity", "queue empty") => MsContext::new(StationId(1), AccessCode::A),
        ("Idle", "AccessOpportunity", "code mismatch") => {
            return (with_message(), opportunity(AccessCode::B));
        }
        ("Idle", "AccessOpportunity", "backoff > 0") => {
            let mut ms = with_message();
            ms.set_backoff(2);
            ms
        }
        ("Idle", _, _) => with_message(),
        ("AwaitingGrant", "AccessOpportunity", "WT running") => sent(800, 0),
        ("AwaitingGrant", "AccessOpportunity", "code mismatch") => return (armed(), opportunity(AccessCode::C)),
        ("AwaitingGrant", "AccessOpportunity", "backoff > 0") => {
            let mut ms = armed();
            ms.set_backoff(1);
            ms
        }
        ("AwaitingGrant", "AccessOpportunity", "otherwise") => armed(),
        ("AwaitingGrant", "WtExpiry", "attempts < Nu") => sent(800, 0),
        ("AwaitingGrant", "WtExpiry", "attempts = Nu") => {
            let mut ms = armed();
            assert!(matches!(step(&mut ms, opportunity(AccessCode::A)), MsAction::SendAccess(_)));
            assert_eq!(ms.access_attempts_used(), cfg().access.nu());
            ms
        }
        ("AwaitingGrant", "WtExpiry" | "GrantReceived", "armed") => armed(),
        ("AwaitingGrant", "GrantReceived", "multi-fragment") => sent(800, 0),
        ("AwaitingGrant", "GrantReceived", "single fragment") => {
            return (sent(8, 0), MsEvent::GrantReceived(vec![]));
        }
        ("AwaitingGrant", _, "-") => sent(800, 0),
        ("SendingReserved", "ReservedSubslot", "scheduled, not last") => reserved(800, 8),
        ("SendingReserved", "ReservedSubslot", "scheduled, last") => reserved(184, 1),
        ("SendingReserved", "ReservedSubslot", "not scheduled") => {
            return (reserved(800, 8), MsEvent::ReservedSubslot(at(3, 1, 0)));
        }
        ("SendingReserved", _, "-") => reserved(800, 8),
        ("AwaitingAck", "AckTimeout", "retries < limit") => awaiting_ack(0),
        ("AwaitingAck", "AckTimeout", "retries = limit") => awaiting_ack(limit),
        ("AwaitingAck", _, "-") => awaiting_ack(0),
        other => panic!("no setup for row {other:?}"),
    };
    (ms, default_event())
}

pub type Pairs = Vec<(String, String)>;

/// (state, event) pairs of the machine that the table does not list, and listed pairs the machine lacks.
pub fn pair_mismatches(rows: &[Row]) -> (Pairs, Pairs) {
    let listed: BTreeSet<(String, String)> = rows.iter().map(|r| (r.state.clone(), r.event.clone())).collect();
    let all: BTreeSet<(String, String)> = MacState::ALL
        .iter()
        .flat_map(|s| EVENTS.iter().map(move |e| (s.to_string(), e.to_string())))
        .collect();
    (
        all.difference(&listed).cloned().collect(),
        listed.difference(&all).cloned().collect(),
    )
}

/// Fires every row's event from its state and guard; the first disagreement is the error.
pub fn verify_rows(rows: &[Row]) -> Result<usize, String> {
    for row in rows {
        let (mut ms, ev) = setup(&row.state, &row.event, &row.guard);
        if ms.state().to_string() != row.state || ev.label() != row.event {
            return Err(format!("cannot reach {row:?}"));
        }
        let action = ms.handle(ev, &cfg()).map_err(|e| format!("{row:?}: {e}"))?;
        if action.label() != row.action || ms.state().to_string() != row.next {
            return Err(format!("{row:?}: code gives {} -> {}", action.label(), ms.state()));
        }
    }
    Ok(rows.len())
}
