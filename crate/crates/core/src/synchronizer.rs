//! Round synchronizer over the asynchronous engine.
//!
//! Nodes simulate a round-structured protocol on top of asynchronous
//! message delivery by stamping every broadcast with a round number and a
//! stage: `⟨r, payload, 0, 0⟩` when entering round `r`, `⟨r, payload, 1, 0⟩`
//! after scanning every neighbor's round-`r` advert, and `⟨r, payload, 1, 1⟩`
//! after the round's connection step. Stages map to a strictly increasing
//! position `3(r-1) + scanned + done`, and each node blocks until every
//! neighbor has reached the position it needs before moving on. Neighbors
//! therefore never drift more than one round apart.
//!
//! Positions also make reordering recoverable: because a node cannot get
//! more than one stage ahead of a neighbor that has not heard it, at most
//! one advert can be jumped over, and the jumped advert is fully determined
//! by its neighbors in the sequence (`reconstruct_missed`). A larger jump
//! means the transport broke its promises and the run aborts.
//!
//! The protocol being synchronized plugs in through [`RoundAlgorithm`]:
//! payload production at round entry, neighbor-scan delivery, the
//! connect-or-pass decision, incoming-connection acceptance, and the
//! exchange performed over an accepted connection. Every step is traced and
//! [`validate_trace`] replays the trace against the structural rules.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::async_engine::{DelayPolicy, DeltaBounds};
use crate::event::EventQueue;
use crate::sync::{
    eligible_targets, is_phase_start, phase_length, place_tokens, Advert, SyncAlgorithm, Transfer,
    TokenPlacement,
};
use crate::token::{derive_seed, mix64, HashMode, Tag, TokenSet};
use crate::topology::Topology;
use crate::{Error, NodeId, Result};

/// One stamped broadcast: stage flags plus the round payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimAdvert {
    pub round: u32,
    pub scanned: bool,
    pub done: bool,
    pub payload: Vec<u8>,
}

impl SimAdvert {
    /// Strictly increasing stage position; `done` implies `scanned`.
    pub fn pos(&self) -> i64 {
        debug_assert!(self.scanned || !self.done);
        3 * (self.round as i64 - 1) + self.scanned as i64 + self.done as i64
    }

    fn stage_at(pos: i64) -> (u32, bool, bool) {
        debug_assert!(pos >= 0);
        let round = (pos / 3) as u32 + 1;
        match pos % 3 {
            0 => (round, false, false),
            1 => (round, true, false),
            _ => (round, true, true),
        }
    }
}

/// Fill in an advert that was jumped over by reordering.
///
/// `prev_pos` is the highest position already seen from the sender (`-1` if
/// nothing has been seen) and `prev_payload` that advert's payload. Returns
/// `None` when `current` directly follows, the missing middle advert when
/// exactly one was jumped, an error otherwise: a jump of two or more is
/// impossible for a sender obeying the stage protocol (`Protocol`), and a
/// non-advancing advert should have been filtered as superseded before
/// calling this (`Contract`).
pub fn reconstruct_missed(
    prev_pos: i64,
    prev_payload: &[u8],
    current: &SimAdvert,
) -> Result<Option<SimAdvert>> {
    let gap = current.pos() - prev_pos;
    match gap {
        g if g <= 0 => Err(Error::Contract(format!(
            "advert at position {} does not advance past {}",
            current.pos(),
            prev_pos
        ))),
        1 => Ok(None),
        2 => {
            let (round, scanned, done) = SimAdvert::stage_at(current.pos() - 1);
            // All stages of one round carry the same payload, so the middle
            // advert's payload comes from whichever side shares its round.
            let payload = if round == current.round {
                current.payload.clone()
            } else {
                prev_payload.to_vec()
            };
            Ok(Some(SimAdvert { round, scanned, done, payload }))
        }
        g => Err(Error::Protocol(format!(
            "advert jumped {g} positions (from {} to {}); at most one advert \
             can ever be in flight past another",
            prev_pos,
            current.pos()
        ))),
    }
}

/// Decision returned by the scan stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ConnectAction {
    Attempt { target: NodeId },
    Pass,
}

/// A round-structured protocol run over the synchronizer.
///
/// Callbacks fire in stage order for each node and round: `request_adv`
/// once at round entry, `deliver_adv` once with every neighbor's round
/// payload, `end_scan` once for the connect decision, `accept_incoming`
/// for each incoming attempt while the node has not yet accepted one this
/// round, and `communicate` once per accepted connection when its exchange
/// completes. `is_complete` is consulted at round boundaries for reporting
/// only; the run always executes the configured number of rounds.
pub trait RoundAlgorithm {
    fn request_adv(&mut self, node: NodeId, round: u32) -> Vec<u8>;
    fn deliver_adv(&mut self, node: NodeId, round: u32, ads: &BTreeMap<NodeId, Vec<u8>>);
    fn end_scan(&mut self, node: NodeId, round: u32) -> ConnectAction;
    fn accept_incoming(&mut self, node: NodeId, round: u32, from: NodeId) -> bool;
    fn communicate(&mut self, initiator: NodeId, acceptor: NodeId, round: u32) -> Vec<Transfer>;
    fn is_complete(&self) -> bool;
}

/// Order-independent digest of a payload, used in traces so validation can
/// match broadcasts to the payloads produced at round entry.
pub fn digest_payload(bytes: &[u8]) -> u64 {
    let mut h = mix64(0x9e37_79b9_7f4a_7c15 ^ bytes.len() as u64);
    for &b in bytes {
        h = mix64(h ^ b as u64);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    RoundEnter { node: NodeId, round: u32 },
    RequestAdv { node: NodeId, round: u32, payload_digest: u64 },
    Broadcast { node: NodeId, round: u32, scanned: bool, done: bool, payload_digest: u64 },
    DeliverAds { node: NodeId, round: u32, digests: Vec<(NodeId, u64)> },
    EndScan { node: NodeId, round: u32, action: ConnectAction },
    ConnectAttempt { from: NodeId, to: NodeId, round: u32 },
    Accept { node: NodeId, from: NodeId, round: u32, accepted: bool },
    Communicate { initiator: NodeId, acceptor: NodeId, round: u32, transfers: Vec<Transfer> },
    EndConnect { node: NodeId, round: u32 },
    Finish { node: NodeId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracedEvent {
    pub time: f64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncedConfig {
    pub rounds: u32,
    pub bounds: DeltaBounds,
    pub policy: DelayPolicy,
    pub seed: u64,
}

impl Default for SyncedConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            bounds: DeltaBounds::default(),
            policy: DelayPolicy::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncedResult {
    pub rounds: u32,
    pub end_time: f64,
    /// First round after which the algorithm reported completion, checked
    /// each time the whole network crosses a round boundary.
    pub completion_round: Option<u32>,
    pub trace: Vec<TracedEvent>,
    pub stale_drops: u64,
    pub superseded: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    /// Waiting for every neighbor's current-round payload.
    WaitAds,
    /// Waiting for every neighbor to finish its own scan.
    WaitScan,
    /// An outgoing attempt is in flight.
    Connecting,
    /// Waiting for every neighbor to finish its connection step.
    WaitDone,
    Finished,
}

struct NeighborView {
    seen_pos: i64,
    round: u32,
    payload: Vec<u8>,
}

struct SimNode {
    round: u32,
    stage: Stage,
    payload: Vec<u8>,
    views: BTreeMap<NodeId, NeighborView>,
    accepted_round: Option<u32>,
}

enum Ev {
    Adv { from: NodeId, to: NodeId, advert: SimAdvert, sent_at: f64 },
    Arrive { from: NodeId, to: NodeId, round: u32, resolve_at: f64 },
    Resolve { from: NodeId, to: NodeId, round: u32, accepted: bool },
    CommDone { initiator: NodeId, acceptor: NodeId, round: u32 },
}

struct SyncedEngine<'a, A: RoundAlgorithm> {
    topo: &'a Topology,
    cfg: &'a SyncedConfig,
    algo: &'a mut A,
    nodes: Vec<SimNode>,
    queue: EventQueue<Ev>,
    rng: ChaCha8Rng,
    now: f64,
    trace: Vec<TracedEvent>,
    /// How many nodes have moved past each round, for completion reporting.
    crossed: BTreeMap<u32, usize>,
    completion_round: Option<u32>,
    finished: usize,
    stale_drops: u64,
    superseded: u64,
}

impl<'a, A: RoundAlgorithm> SyncedEngine<'a, A> {
    fn trace(&mut self, event: TraceEvent) {
        self.trace.push(TracedEvent { time: self.now, event });
    }

    fn broadcast(&mut self, u: NodeId, scanned: bool, done: bool) {
        let advert = SimAdvert {
            round: self.nodes[u].round,
            scanned,
            done,
            payload: self.nodes[u].payload.clone(),
        };
        self.trace(TraceEvent::Broadcast {
            node: u,
            round: advert.round,
            scanned,
            done,
            payload_digest: digest_payload(&advert.payload),
        });
        for &v in self.topo.neighbors(u) {
            let delay = self.cfg.policy.sample(self.cfg.bounds.update, &mut self.rng);
            self.queue.push(
                self.now + delay,
                Ev::Adv { from: u, to: v, advert: advert.clone(), sent_at: self.now },
            );
        }
    }

    fn enter_round(&mut self, u: NodeId, round: u32) {
        if round > 1 {
            let crossed = self.crossed.entry(round - 1).or_insert(0);
            *crossed += 1;
            if *crossed == self.topo.n()
                && self.completion_round.is_none()
                && self.algo.is_complete()
            {
                self.completion_round = Some(round - 1);
            }
        }
        if round > self.cfg.rounds {
            self.nodes[u].stage = Stage::Finished;
            self.finished += 1;
            self.trace(TraceEvent::Finish { node: u });
            return;
        }
        self.nodes[u].round = round;
        self.nodes[u].stage = Stage::WaitAds;
        self.trace(TraceEvent::RoundEnter { node: u, round });
        let payload = self.algo.request_adv(u, round);
        self.trace(TraceEvent::RequestAdv {
            node: u,
            round,
            payload_digest: digest_payload(&payload),
        });
        self.nodes[u].payload = payload;
        self.broadcast(u, false, false);
    }

    fn finish_connect(&mut self, u: NodeId) {
        let round = self.nodes[u].round;
        self.trace(TraceEvent::EndConnect { node: u, round });
        self.nodes[u].stage = Stage::WaitDone;
        self.broadcast(u, true, true);
        self.advance(u);
    }

    /// Drive the node's stage machine as far as its neighbors allow.
    fn advance(&mut self, u: NodeId) {
        loop {
            let round = self.nodes[u].round;
            match self.nodes[u].stage {
                Stage::WaitAds => {
                    if self.nodes[u].views.values().any(|v| v.round < round) {
                        return;
                    }
                    let ads: BTreeMap<NodeId, Vec<u8>> = self.nodes[u]
                        .views
                        .iter()
                        .map(|(&v, view)| (v, view.payload.clone()))
                        .collect();
                    let digests =
                        ads.iter().map(|(&v, p)| (v, digest_payload(p))).collect();
                    self.algo.deliver_adv(u, round, &ads);
                    self.trace(TraceEvent::DeliverAds { node: u, round, digests });
                    self.nodes[u].stage = Stage::WaitScan;
                    self.broadcast(u, true, false);
                }
                Stage::WaitScan => {
                    let needed = 3 * (round as i64 - 1) + 1;
                    if self.nodes[u].views.values().any(|v| v.seen_pos < needed) {
                        return;
                    }
                    let action = self.algo.end_scan(u, round);
                    self.trace(TraceEvent::EndScan { node: u, round, action });
                    match action {
                        ConnectAction::Pass => {
                            self.finish_connect(u);
                            return;
                        }
                        ConnectAction::Attempt { target } => {
                            if !self.topo.contains_edge(u, target) {
                                // A broken algorithm, not a broken engine:
                                // surface it as a panic in tests via trace
                                // validation instead of corrupting state.
                                panic!(
                                    "round algorithm attempted non-neighbor \
                                     {target} from {u}"
                                );
                            }
                            self.nodes[u].stage = Stage::Connecting;
                            self.trace(TraceEvent::ConnectAttempt {
                                from: u,
                                to: target,
                                round,
                            });
                            let delay =
                                self.cfg.policy.sample(self.cfg.bounds.connect, &mut self.rng);
                            self.queue.push(
                                self.now + delay / 2.0,
                                Ev::Arrive {
                                    from: u,
                                    to: target,
                                    round,
                                    resolve_at: self.now + delay,
                                },
                            );
                            return;
                        }
                    }
                }
                Stage::WaitDone => {
                    let needed = 3 * (round as i64 - 1) + 2;
                    if self.nodes[u].views.values().any(|v| v.seen_pos < needed) {
                        return;
                    }
                    self.enter_round(u, round + 1);
                    if self.nodes[u].stage == Stage::Finished {
                        return;
                    }
                }
                Stage::Connecting | Stage::Finished => return,
            }
        }
    }

    fn apply_advert(&mut self, from: NodeId, to: NodeId, advert: &SimAdvert) {
        let view = self.nodes[to].views.get_mut(&from).expect("neighbor view");
        view.seen_pos = advert.pos();
        if advert.round > view.round {
            view.round = advert.round;
            view.payload = advert.payload.clone();
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<()> {
        match ev {
            Ev::Adv { from, to, advert, sent_at } => {
                if self.now - sent_at > self.cfg.bounds.old {
                    self.stale_drops += 1;
                    return Ok(());
                }
                let view = &self.nodes[to].views[&from];
                if advert.pos() <= view.seen_pos {
                    self.superseded += 1;
                    return Ok(());
                }
                let missed = reconstruct_missed(view.seen_pos, &view.payload, &advert)?;
                if let Some(middle) = missed {
                    self.apply_advert(from, to, &middle);
                }
                self.apply_advert(from, to, &advert);
                self.advance(to);
            }
            Ev::Arrive { from, to, round, resolve_at } => {
                let free = self.nodes[to].accepted_round != Some(round);
                let accepted = free && self.algo.accept_incoming(to, round, from);
                if accepted {
                    self.nodes[to].accepted_round = Some(round);
                }
                self.trace(TraceEvent::Accept { node: to, from, round, accepted });
                self.queue.push(resolve_at, Ev::Resolve { from, to, round, accepted });
            }
            Ev::Resolve { from, to, round, accepted } => {
                if accepted {
                    let delay = self.cfg.policy.sample(self.cfg.bounds.comm, &mut self.rng);
                    self.queue
                        .push(self.now + delay, Ev::CommDone { initiator: from, acceptor: to, round });
                } else {
                    self.finish_connect(from);
                }
            }
            Ev::CommDone { initiator, acceptor, round } => {
                let transfers = self.algo.communicate(initiator, acceptor, round);
                self.trace(TraceEvent::Communicate { initiator, acceptor, round, transfers });
                self.finish_connect(initiator);
            }
        }
        Ok(())
    }
}

/// Run `algo` for exactly `cfg.rounds` synchronized rounds.
pub fn run_synced<A: RoundAlgorithm>(
    topo: &Topology,
    cfg: &SyncedConfig,
    algo: &mut A,
) -> Result<SyncedResult> {
    cfg.bounds.validate()?;
    if cfg.rounds == 0 {
        return Err(Error::InvalidParameter("round count must be at least 1".into()));
    }
    let n = topo.n();
    let nodes = (0..n)
        .map(|u| SimNode {
            round: 0,
            stage: Stage::WaitAds,
            payload: Vec::new(),
            views: topo
                .neighbors(u)
                .iter()
                .map(|&v| (v, NeighborView { seen_pos: -1, round: 0, payload: Vec::new() }))
                .collect(),
            accepted_round: None,
        })
        .collect();
    let mut engine = SyncedEngine {
        topo,
        cfg,
        algo,
        nodes,
        queue: EventQueue::new(),
        rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x73796e63)),
        now: 0.0,
        trace: Vec::new(),
        crossed: BTreeMap::new(),
        completion_round: None,
        finished: 0,
        stale_drops: 0,
        superseded: 0,
    };

    for u in 0..n {
        engine.enter_round(u, 1);
    }
    for u in 0..n {
        engine.advance(u);
    }

    let mut end_time = 0.0f64;
    while let Some((time, ev)) = engine.queue.pop() {
        engine.now = time;
        end_time = time;
        engine.handle(ev)?;
    }
    if engine.finished != n {
        let stages: Vec<String> = engine
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, nd)| nd.stage != Stage::Finished)
            .map(|(u, nd)| format!("{u}: round {} {:?}", nd.round, nd.stage))
            .collect();
        return Err(Error::Protocol(format!(
            "synchronizer deadlocked with no events left; stuck nodes: {}",
            stages.join(", ")
        )));
    }

    Ok(SyncedResult {
        rounds: cfg.rounds,
        end_time,
        completion_round: engine.completion_round,
        trace: engine.trace,
        stale_drops: engine.stale_drops,
        superseded: engine.superseded,
    })
}

/// Wall-clock duration of each round: the span between successive moments
/// at which the whole network has entered the round (round 1 enters at
/// time zero; the final boundary is the last node's finish).
pub fn round_durations(result: &SyncedResult, n: usize) -> Vec<f64> {
    let rounds = result.rounds as usize;
    // boundary[r] = time everyone has moved past round r + 1.
    let mut entered: Vec<(usize, f64)> = vec![(0, 0.0); rounds];
    for ev in &result.trace {
        let slot = match ev.event {
            TraceEvent::RoundEnter { round, .. } if round >= 2 => round as usize - 2,
            TraceEvent::Finish { .. } => rounds - 1,
            _ => continue,
        };
        entered[slot].0 += 1;
        entered[slot].1 = entered[slot].1.max(ev.time);
    }
    let mut durations = Vec::with_capacity(rounds);
    let mut prev = 0.0f64;
    for (r, &(count, latest)) in entered.iter().enumerate() {
        debug_assert_eq!(count, n, "round {} boundary incomplete", r + 1);
        durations.push(latest - prev);
        prev = latest;
    }
    durations
}

/// Replay a trace against the synchronizer's structural rules. Returns one
/// message per violation.
///
/// Checked, in emission order: every broadcast carries the payload its node
/// produced for that round, exactly once per stage; every scan delivers
/// exactly the neighbor set with each neighbor's current-round payload; at
/// most one outgoing attempt and at most one accepted incoming connection
/// per node and round, attempts target neighbors and follow the scan
/// decision, exchanges only run over accepted connections; neighbors never
/// sit more than one round apart.
pub fn validate_trace(topo: &Topology, result: &SyncedResult) -> Vec<String> {
    let n = topo.n();
    let mut violations = Vec::new();
    let mut request_digest: BTreeMap<(NodeId, u32), u64> = BTreeMap::new();
    let mut broadcast_seen: BTreeMap<(NodeId, u32, bool, bool), u32> = BTreeMap::new();
    let mut scan_action: BTreeMap<(NodeId, u32), ConnectAction> = BTreeMap::new();
    let mut attempts: BTreeMap<(NodeId, u32), u32> = BTreeMap::new();
    let mut accepts: BTreeMap<(NodeId, u32), u32> = BTreeMap::new();
    let mut accepted_pairs: BTreeMap<(NodeId, NodeId, u32), bool> = BTreeMap::new();
    let mut end_connects: BTreeMap<(NodeId, u32), u32> = BTreeMap::new();
    let mut current_round: Vec<u32> = vec![0; n];

    for (idx, ev) in result.trace.iter().enumerate() {
        match &ev.event {
            TraceEvent::RoundEnter { node, round } => {
                current_round[*node] = *round;
                for &w in topo.neighbors(*node) {
                    let d = (*round as i64 - current_round[w] as i64).abs();
                    if current_round[w] > 0 && d > 1 {
                        violations.push(format!(
                            "event {idx}: node {node} entered round {round} while neighbor {w} \
                             is at round {}; neighbors must stay within one round",
                            current_round[w]
                        ));
                    }
                }
            }
            TraceEvent::RequestAdv { node, round, payload_digest } => {
                if request_digest.insert((*node, *round), *payload_digest).is_some() {
                    violations.push(format!(
                        "event {idx}: node {node} produced a second payload for round {round}"
                    ));
                }
            }
            TraceEvent::Broadcast { node, round, scanned, done, payload_digest } => {
                match request_digest.get(&(*node, *round)) {
                    None => violations.push(format!(
                        "event {idx}: node {node} broadcast for round {round} before producing \
                         its payload"
                    )),
                    Some(d) if d != payload_digest => violations.push(format!(
                        "event {idx}: node {node} round {round} broadcast carries a payload \
                         other than the one produced at round entry"
                    )),
                    _ => {}
                }
                let count = broadcast_seen.entry((*node, *round, *scanned, *done)).or_insert(0);
                *count += 1;
                if *count > 1 {
                    violations.push(format!(
                        "event {idx}: node {node} repeated its round {round} stage \
                         ({scanned},{done}) broadcast"
                    ));
                }
            }
            TraceEvent::DeliverAds { node, round, digests } => {
                let expected: Vec<NodeId> = topo.neighbors(*node).to_vec();
                let got: Vec<NodeId> = digests.iter().map(|&(v, _)| v).collect();
                if expected != got {
                    violations.push(format!(
                        "event {idx}: node {node} round {round} scan delivered ads from \
                         {got:?}, expected exactly the neighbor set {expected:?}"
                    ));
                }
                for &(v, d) in digests {
                    match request_digest.get(&(v, *round)) {
                        None => violations.push(format!(
                            "event {idx}: node {node} round {round} scan contains an ad from \
                             {v} that {v} never produced"
                        )),
                        Some(&expect) if expect != d => violations.push(format!(
                            "event {idx}: node {node} round {round} scan carries a stale or \
                             foreign payload for neighbor {v}"
                        )),
                        _ => {}
                    }
                }
            }
            TraceEvent::EndScan { node, round, action } => {
                if scan_action.insert((*node, *round), *action).is_some() {
                    violations.push(format!(
                        "event {idx}: node {node} scanned round {round} twice"
                    ));
                }
            }
            TraceEvent::ConnectAttempt { from, to, round } => {
                let count = attempts.entry((*from, *round)).or_insert(0);
                *count += 1;
                if *count > 1 {
                    violations.push(format!(
                        "event {idx}: node {from} attempted twice in round {round}"
                    ));
                }
                if !topo.contains_edge(*from, *to) {
                    violations.push(format!(
                        "event {idx}: round {round} attempt {from}->{to} crosses a non-edge"
                    ));
                }
                match scan_action.get(&(*from, *round)) {
                    Some(ConnectAction::Attempt { target }) if target == to => {}
                    _ => violations.push(format!(
                        "event {idx}: round {round} attempt {from}->{to} does not match the \
                         scan decision"
                    )),
                }
            }
            TraceEvent::Accept { node, from, round, accepted } => {
                if *accepted {
                    let count = accepts.entry((*node, *round)).or_insert(0);
                    *count += 1;
                    if *count > 1 {
                        violations.push(format!(
                            "event {idx}: node {node} accepted two connections in round {round}"
                        ));
                    }
                    accepted_pairs.insert((*from, *node, *round), true);
                }
            }
            TraceEvent::Communicate { initiator, acceptor, round, .. } => {
                if !accepted_pairs.contains_key(&(*initiator, *acceptor, *round)) {
                    violations.push(format!(
                        "event {idx}: round {round} exchange {initiator}->{acceptor} without \
                         an accepted connection"
                    ));
                }
            }
            TraceEvent::EndConnect { node, round } => {
                let count = end_connects.entry((*node, *round)).or_insert(0);
                *count += 1;
                if *count > 1 {
                    violations.push(format!(
                        "event {idx}: node {node} closed round {round} twice"
                    ));
                }
                if !scan_action.contains_key(&(*node, *round)) {
                    violations.push(format!(
                        "event {idx}: node {node} closed round {round} without scanning"
                    ));
                }
            }
            TraceEvent::Finish { .. } => {}
        }
    }
    violations
}

/// Tiny protocol for exercising the synchronizer itself: payloads identify
/// the node and round, scans are ignored, and the connect step always
/// passes.
#[derive(Default)]
pub struct ProbeAlgorithm;

impl RoundAlgorithm for ProbeAlgorithm {
    fn request_adv(&mut self, node: NodeId, round: u32) -> Vec<u8> {
        let mut payload = round.to_le_bytes().to_vec();
        payload.extend((node as u32).to_le_bytes());
        payload
    }

    fn deliver_adv(&mut self, _node: NodeId, _round: u32, _ads: &BTreeMap<NodeId, Vec<u8>>) {}

    fn end_scan(&mut self, _node: NodeId, _round: u32) -> ConnectAction {
        ConnectAction::Pass
    }

    fn accept_incoming(&mut self, _node: NodeId, _round: u32, _from: NodeId) -> bool {
        true
    }

    fn communicate(&mut self, _i: NodeId, _a: NodeId, _round: u32) -> Vec<Transfer> {
        Vec::new()
    }

    fn is_complete(&self) -> bool {
        false
    }
}

/// The same probe but attempting a connection every round.
pub struct CourtingProbe<'a> {
    pub topo: &'a Topology,
}

impl RoundAlgorithm for CourtingProbe<'_> {
    fn request_adv(&mut self, node: NodeId, round: u32) -> Vec<u8> {
        let mut payload = round.to_le_bytes().to_vec();
        payload.extend((node as u32).to_le_bytes());
        payload
    }

    fn deliver_adv(&mut self, _node: NodeId, _round: u32, _ads: &BTreeMap<NodeId, Vec<u8>>) {}

    fn end_scan(&mut self, node: NodeId, _round: u32) -> ConnectAction {
        ConnectAction::Attempt { target: self.topo.neighbors(node)[0] }
    }

    fn accept_incoming(&mut self, _node: NodeId, _round: u32, _from: NodeId) -> bool {
        true
    }

    fn communicate(&mut self, _i: NodeId, _a: NodeId, _round: u32) -> Vec<Transfer> {
        Vec::new()
    }

    fn is_complete(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug)]
struct DecodedAd {
    sender: bool,
    done: bool,
    tag: u64,
}

/// Random-spread gossip adapted to run over the synchronizer: the same
/// phase-based sender/receiver protocol as the synchronous engine, with
/// payloads carrying the role flags and token digest.
pub struct RandomSpreadOverSync {
    k: u32,
    phase_len: u64,
    tokens: Vec<TokenSet>,
    sender: Vec<bool>,
    done: Vec<bool>,
    heard: Vec<BTreeMap<NodeId, DecodedAd>>,
    hash_mode: HashMode,
    hash_seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSpreadOverSync {
    pub fn new(
        topo: &Topology,
        k: u32,
        placement: &TokenPlacement,
        hash_mode: HashMode,
        seed: u64,
    ) -> Result<Self> {
        let tokens = place_tokens(topo.n(), k, placement)?;
        Ok(Self {
            k,
            phase_len: phase_length(topo.degree_bound()),
            tokens,
            sender: vec![false; topo.n()],
            done: vec![false; topo.n()],
            heard: vec![BTreeMap::new(); topo.n()],
            hash_mode,
            hash_seed: derive_seed(seed, 0x726f756e64),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x616c676f)),
        })
    }

    pub fn tokens(&self) -> &[TokenSet] {
        &self.tokens
    }

    pub fn phase_len(&self) -> u64 {
        self.phase_len
    }

    fn tag_of(&self, node: NodeId, round: u32) -> u64 {
        Tag::for_tokens(&self.tokens[node], round as u64, self.hash_seed, self.hash_mode)
            .digest64()
    }
}

impl RoundAlgorithm for RandomSpreadOverSync {
    fn request_adv(&mut self, node: NodeId, round: u32) -> Vec<u8> {
        if is_phase_start(round as u64, self.phase_len) {
            self.sender[node] = self.rng.gen();
            self.done[node] = false;
        }
        let mut payload = vec![self.sender[node] as u8, self.done[node] as u8];
        payload.extend(self.tag_of(node, round).to_le_bytes());
        payload
    }

    fn deliver_adv(&mut self, node: NodeId, _round: u32, ads: &BTreeMap<NodeId, Vec<u8>>) {
        self.heard[node] = ads
            .iter()
            .map(|(&v, bytes)| {
                let tag = u64::from_le_bytes(bytes[2..10].try_into().expect("payload layout"));
                (v, DecodedAd { sender: bytes[0] != 0, done: bytes[1] != 0, tag })
            })
            .collect();
    }

    fn end_scan(&mut self, node: NodeId, round: u32) -> ConnectAction {
        if !self.sender[node] {
            return ConnectAction::Pass;
        }
        let own = Advert {
            node,
            sender: true,
            done: self.done[node],
            tag: Tag::Digest(self.tag_of(node, round)),
        };
        let neighbor_ads: Vec<Advert> = self.heard[node]
            .iter()
            .map(|(&v, ad)| Advert {
                node: v,
                sender: ad.sender,
                done: ad.done,
                tag: Tag::Digest(ad.tag),
            })
            .collect();
        let ad_refs: Vec<&Advert> = neighbor_ads.iter().collect();
        let candidates = eligible_targets(&own, &ad_refs, SyncAlgorithm::RandomSpread);
        if candidates.is_empty() {
            ConnectAction::Pass
        } else {
            let target = candidates[self.rng.gen_range(0..candidates.len())];
            ConnectAction::Attempt { target }
        }
    }

    fn accept_incoming(&mut self, node: NodeId, _round: u32, _from: NodeId) -> bool {
        if self.sender[node] || self.done[node] {
            return false;
        }
        self.done[node] = true;
        true
    }

    fn communicate(&mut self, initiator: NodeId, acceptor: NodeId, _round: u32) -> Vec<Transfer> {
        let diff = self.tokens[initiator].symmetric_difference(&self.tokens[acceptor]);
        if diff.is_empty() {
            return Vec::new();
        }
        let token = diff[self.rng.gen_range(0..diff.len())];
        let (from, to) = if self.tokens[initiator].contains(token) {
            (initiator, acceptor)
        } else {
            (acceptor, initiator)
        };
        self.tokens[to].insert(token);
        vec![Transfer { token, from, to }]
    }

    fn is_complete(&self) -> bool {
        let k = self.k as usize;
        self.tokens.iter().all(|set| set.len() == k)
    }
}
