//! Asynchronous pairwise-exchange engine.
//!
//! Each node runs an endless loop: broadcast a digest of its current token
//! set to every neighbor, then pick one neighbor whose last-heard digest
//! differs from its own and try to open a connection. Message and connection
//! timing is governed by per-kind delay bounds; an adversary (the delay
//! policy) chooses the actual latencies within those bounds. A connection
//! attempt reaches the target halfway through its sampled delay, where it is
//! accepted unless the target is already serving another incoming
//! connection; an accepted connection later moves one token across the pair's
//! symmetric difference.
//!
//! Blocking in the abstract loop is rendered with two parked states:
//!
//! * **parked-empty** — the node has no neighbor digests buffered and sits in
//!   the blocking receive; a digest delivery resumes it at the selection
//!   step.
//! * **parked-null** — every buffered digest equals the node's own, so
//!   selection returned nothing; the node keeps re-broadcasting at a bounded
//!   tick (one per update-delay bound) so silent-but-blocked neighbors still
//!   hear from it, and it re-runs selection whenever a new digest arrives or
//!   its own tokens change.
//!
//! Faults: crashed nodes halt mid-loop (messages already in flight still
//! arrive and attempts aimed at them fail); byzantine nodes advertise fresh
//! random digests, accept and open connections, but never move tokens.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::event::EventQueue;
use crate::token::{derive_seed, HashMode, Tag, TokenSet};
use crate::topology::Topology;
use crate::sync::{place_tokens, TokenPlacement};
use crate::{Error, NodeId, Result, TokenId};

/// Upper bounds on the four delay kinds. All positive and finite, with the
/// staleness horizon strictly above the update delivery bound so a message
/// can never be stale on arrival under a compliant policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaBounds {
    /// Delivery bound for token-digest broadcasts.
    pub update: f64,
    /// Staleness horizon: digests older than this are discarded on arrival.
    pub old: f64,
    /// Bound on connection establishment (attempt to resolution).
    pub connect: f64,
    /// Bound on an accepted connection's data exchange.
    pub comm: f64,
}

impl DeltaBounds {
    pub fn new(update: f64, old: f64, connect: f64, comm: f64) -> Result<Self> {
        let b = Self { update, old, connect, comm };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("update", self.update),
            ("old", self.old),
            ("connect", self.connect),
            ("comm", self.comm),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "delay bound '{name}' must be positive and finite, got {v}"
                )));
            }
        }
        if self.old <= self.update {
            return Err(Error::InvalidParameter(format!(
                "staleness horizon ({}) must exceed the update bound ({})",
                self.old, self.update
            )));
        }
        Ok(())
    }

    /// Length of one full interaction interval: an update broadcast followed
    /// by a connection attempt and its exchange.
    pub fn max_interval(&self) -> f64 {
        self.update + self.connect + self.comm
    }
}

impl Default for DeltaBounds {
    fn default() -> Self {
        Self { update: 1.0, old: 2.0, connect: 1.0, comm: 1.0 }
    }
}

/// How actual latencies are drawn within a bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayPolicy {
    /// Every delay equals its bound; the schedule is fully deterministic.
    #[default]
    FixedMax,
    /// Uniform over (0, bound].
    Uniform,
    /// Bimodal: the bound or one percent of it, each with probability 1/2.
    /// Maximizes reordering between fast and slow messages while staying
    /// within the contract.
    Adversarial,
}

impl DelayPolicy {
    pub fn sample(self, bound: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            DelayPolicy::FixedMax => bound,
            // 1 - gen() lies in (0, 1], so the delay is never zero.
            DelayPolicy::Uniform => bound * (1.0 - rng.gen::<f64>()),
            DelayPolicy::Adversarial => {
                if rng.gen_bool(0.5) {
                    bound
                } else {
                    bound * 0.01
                }
            }
        }
    }
}

/// Crash and byzantine assignments for a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    /// (node, time) pairs; the node halts at that time.
    #[serde(default)]
    pub crashes: Vec<(NodeId, f64)>,
    /// Nodes that advertise random digests and never move tokens.
    #[serde(default)]
    pub byzantine: BTreeSet<NodeId>,
}

impl FaultPlan {
    pub fn is_empty(&self) -> bool {
        self.crashes.is_empty() && self.byzantine.is_empty()
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(node, time) in &self.crashes {
            if node >= n {
                return Err(Error::InvalidParameter(format!(
                    "crash node {node} out of range for {n} nodes"
                )));
            }
            if !time.is_finite() || time < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "crash time {time} for node {node} must be non-negative"
                )));
            }
            if !seen.insert(node) {
                return Err(Error::InvalidParameter(format!(
                    "node {node} has multiple crash entries"
                )));
            }
        }
        if let Some(&node) = self.byzantine.iter().find(|&&b| b >= n) {
            return Err(Error::InvalidParameter(format!(
                "byzantine node {node} out of range for {n} nodes"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsyncConfig {
    /// Number of distinct tokens to spread.
    pub k: u32,
    pub placement: TokenPlacement,
    pub bounds: DeltaBounds,
    pub policy: DelayPolicy,
    pub hash_mode: HashMode,
    pub faults: FaultPlan,
    /// Give up at this time; `None` means 5000 interaction intervals.
    pub time_cap: Option<f64>,
    pub seed: u64,
    /// Record the full event timeline (memory-heavy on large runs).
    pub record_timeline: bool,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        Self {
            k: 1,
            placement: TokenPlacement::default(),
            bounds: DeltaBounds::default(),
            policy: DelayPolicy::default(),
            hash_mode: HashMode::default(),
            faults: FaultPlan::default(),
            time_cap: None,
            seed: 0,
            record_timeline: true,
        }
    }
}

/// One recorded engine event. `Update` carries the broadcast position so
/// reorder handling is visible; connection records carry their start times so
/// delay contracts can be checked from the timeline alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TimelineEntry {
    Update { time: f64, node: NodeId, pos: u64 },
    AdvDeliver { time: f64, from: NodeId, to: NodeId, sent_at: f64 },
    ConnectAttempt { time: f64, from: NodeId, to: NodeId },
    ConnectResolve { time: f64, from: NodeId, to: NodeId, attempted_at: f64, accepted: bool },
    CommDone { time: f64, from: NodeId, to: NodeId, started_at: f64 },
    Transfer { time: f64, token: TokenId, from: NodeId, to: NodeId },
    Crash { time: f64, node: NodeId },
    Complete { time: f64 },
}

impl TimelineEntry {
    pub fn time(&self) -> f64 {
        match *self {
            TimelineEntry::Update { time, .. }
            | TimelineEntry::AdvDeliver { time, .. }
            | TimelineEntry::ConnectAttempt { time, .. }
            | TimelineEntry::ConnectResolve { time, .. }
            | TimelineEntry::CommDone { time, .. }
            | TimelineEntry::Transfer { time, .. }
            | TimelineEntry::Crash { time, .. }
            | TimelineEntry::Complete { time } => time,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnEvent {
    pub time: f64,
    pub node: NodeId,
    pub token: TokenId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    /// Loop iterations started (initial, post-attempt, post-exchange, wakes).
    pub iterations: u64,
    /// Selections that found no differing digest.
    pub null_selects: u64,
    /// Re-broadcasts while parked with no differing digest.
    pub spin_ticks: u64,
    pub attempts: u64,
    pub failed_attempts: u64,
    pub accepted_incoming: u64,
    pub transfers_in: u64,
    pub transfers_out: u64,
    /// Digests discarded on arrival for exceeding the staleness horizon.
    pub dropped_stale: u64,
    /// Digests discarded because a later broadcast already arrived.
    pub superseded: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsyncResult {
    pub completed: bool,
    pub completion_time: Option<f64>,
    /// Time of the last processed event (completion time if completed).
    pub end_time: f64,
    /// True when the event queue drained with the run incomplete.
    pub stalled: bool,
    pub k: u32,
    pub transfers: u64,
    pub failed_attempts: u64,
    pub learn_events: Vec<LearnEvent>,
    /// Empty unless `record_timeline` was set.
    pub timeline: Vec<TimelineEntry>,
    pub node_stats: Vec<NodeStats>,
    pub initial_tokens: Vec<TokenSet>,
    pub final_tokens: Vec<TokenSet>,
    /// Per node, the fraction of its neighbors that are byzantine.
    pub byz_fractions: Vec<f64>,
    /// Maximum of `byz_fractions` over honest nodes.
    pub byz_fraction_max: f64,
}

impl AsyncResult {
    /// Largest gap between consecutive token-learn times over a completed
    /// run, counting the leading gap from time zero. `None` if the run never
    /// completed or nothing was learned.
    pub fn max_learn_gap(&self) -> Option<f64> {
        let end = self.completion_time?;
        let mut last = 0.0f64;
        let mut max_gap = 0.0f64;
        for ev in &self.learn_events {
            max_gap = max_gap.max(ev.time - last);
            last = ev.time;
        }
        max_gap = max_gap.max(end - last);
        Some(max_gap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LoopPhase {
    /// Blocked: no neighbor digests buffered.
    ParkedEmpty,
    /// Selection found no differing digest; waiting for news.
    ParkedNull,
    /// An outgoing attempt is in flight.
    AwaitingResolution,
    /// An accepted outgoing connection is exchanging.
    Communicating,
    Halted,
}

#[derive(Debug)]
enum Ev {
    AdvDeliver { from: NodeId, to: NodeId, sent_at: f64, pos: u64, tag: Tag },
    ConnectArrive { from: NodeId, to: NodeId, attempted_at: f64, resolve_at: f64 },
    ConnectResolve { from: NodeId, to: NodeId, attempted_at: f64, accepted: bool },
    CommDone { from: NodeId, to: NodeId, started_at: f64 },
    SpinTick { node: NodeId, epoch: u64 },
    Crash { node: NodeId },
}

struct AsyncNode {
    tokens: TokenSet,
    phase: LoopPhase,
    alive: bool,
    byzantine: bool,
    /// Another node's accepted connection is being served.
    busy_incoming: bool,
    /// Last-heard digest per neighbor, cleared on every successful selection.
    heard: BTreeMap<NodeId, Tag>,
    /// Highest broadcast position accepted per neighbor.
    seen_pos: BTreeMap<NodeId, u64>,
    /// Position counter for this node's own broadcasts.
    next_pos: u64,
    tick_epoch: u64,
    stats: NodeStats,
}

struct Engine<'a> {
    topo: &'a Topology,
    cfg: &'a AsyncConfig,
    nodes: Vec<AsyncNode>,
    queue: EventQueue<Ev>,
    rng: ChaCha8Rng,
    hash_seed: u64,
    now: f64,
    timeline: Vec<TimelineEntry>,
    learn_events: Vec<LearnEvent>,
    transfers: u64,
    completed_at: Option<f64>,
}

impl<'a> Engine<'a> {
    fn record(&mut self, entry: TimelineEntry) {
        if self.cfg.record_timeline {
            self.timeline.push(entry);
        }
    }

    fn own_tag(&mut self, u: NodeId) -> Tag {
        if self.nodes[u].byzantine {
            Tag::Digest(self.rng.gen())
        } else {
            Tag::for_tokens(&self.nodes[u].tokens, 0, self.hash_seed, self.cfg.hash_mode)
        }
    }

    /// Broadcast the node's digest, captured now, to every neighbor.
    fn broadcast(&mut self, u: NodeId) {
        let tag = self.own_tag(u);
        let pos = self.nodes[u].next_pos;
        self.nodes[u].next_pos += 1;
        self.record(TimelineEntry::Update { time: self.now, node: u, pos });
        for &v in self.topo.neighbors(u) {
            let delay = self.cfg.policy.sample(self.cfg.bounds.update, &mut self.rng);
            self.queue.push(
                self.now + delay,
                Ev::AdvDeliver { from: u, to: v, sent_at: self.now, pos, tag: tag.clone() },
            );
        }
    }

    /// Loop top: broadcast, then block or select.
    fn start_iteration(&mut self, u: NodeId) {
        if !self.nodes[u].alive {
            return;
        }
        self.nodes[u].stats.iterations += 1;
        self.broadcast(u);
        if self.nodes[u].heard.is_empty() {
            self.nodes[u].phase = LoopPhase::ParkedEmpty;
        } else {
            self.select(u);
        }
    }

    /// Selection step: uniform choice among neighbors whose buffered digest
    /// differs from the node's own (byzantine nodes treat every digest as
    /// differing). On a hit the buffer is cleared and an attempt launched.
    fn select(&mut self, u: NodeId) {
        let own = self.own_tag(u);
        let candidates: Vec<NodeId> = self.nodes[u]
            .heard
            .iter()
            .filter(|(_, tag)| self.nodes[u].byzantine || **tag != own)
            .map(|(&v, _)| v)
            .collect();
        if candidates.is_empty() {
            self.nodes[u].stats.null_selects += 1;
            self.enter_parked_null(u);
            return;
        }
        let target = candidates[self.rng.gen_range(0..candidates.len())];
        self.nodes[u].heard.clear();
        self.attempt(u, target);
    }

    fn enter_parked_null(&mut self, u: NodeId) {
        if self.nodes[u].phase == LoopPhase::ParkedNull {
            return; // tick stream already running
        }
        self.nodes[u].phase = LoopPhase::ParkedNull;
        self.nodes[u].tick_epoch += 1;
        let epoch = self.nodes[u].tick_epoch;
        self.queue
            .push(self.now + self.cfg.bounds.update, Ev::SpinTick { node: u, epoch });
    }

    fn attempt(&mut self, u: NodeId, v: NodeId) {
        self.nodes[u].phase = LoopPhase::AwaitingResolution;
        self.nodes[u].stats.attempts += 1;
        self.record(TimelineEntry::ConnectAttempt { time: self.now, from: u, to: v });
        let delay = self.cfg.policy.sample(self.cfg.bounds.connect, &mut self.rng);
        self.queue.push(
            self.now + delay / 2.0,
            Ev::ConnectArrive {
                from: u,
                to: v,
                attempted_at: self.now,
                resolve_at: self.now + delay,
            },
        );
    }

    /// A token moved into `to`; a node parked on "nothing differs" must
    /// re-evaluate because its own digest just changed.
    fn wake_on_token_change(&mut self, node: NodeId) {
        if self.nodes[node].alive && self.nodes[node].phase == LoopPhase::ParkedNull {
            self.start_iteration(node);
        }
    }

    fn check_completion(&mut self) {
        if self.completed_at.is_some() {
            return;
        }
        let k = self.cfg.k as usize;
        let mut any_honest_alive = false;
        for node in &self.nodes {
            if node.alive && !node.byzantine {
                any_honest_alive = true;
                if node.tokens.len() != k {
                    return;
                }
            }
        }
        if any_honest_alive {
            self.completed_at = Some(self.now);
            self.record(TimelineEntry::Complete { time: self.now });
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::AdvDeliver { from, to, sent_at, pos, tag } => {
                if !self.nodes[to].alive {
                    return;
                }
                if self.now - sent_at > self.cfg.bounds.old {
                    self.nodes[to].stats.dropped_stale += 1;
                    return;
                }
                let seen = self.nodes[to].seen_pos.get(&from).copied();
                if seen.is_some_and(|p| p >= pos) {
                    self.nodes[to].stats.superseded += 1;
                    return;
                }
                self.nodes[to].seen_pos.insert(from, pos);
                self.record(TimelineEntry::AdvDeliver { time: self.now, from, to, sent_at });
                self.nodes[to].heard.insert(from, tag);
                match self.nodes[to].phase {
                    LoopPhase::ParkedEmpty | LoopPhase::ParkedNull => self.select(to),
                    _ => {}
                }
            }
            Ev::ConnectArrive { from, to, attempted_at, resolve_at } => {
                let accepted = self.nodes[to].alive && !self.nodes[to].busy_incoming;
                if accepted {
                    self.nodes[to].busy_incoming = true;
                    self.nodes[to].stats.accepted_incoming += 1;
                }
                self.queue
                    .push(resolve_at, Ev::ConnectResolve { from, to, attempted_at, accepted });
            }
            Ev::ConnectResolve { from, to, attempted_at, accepted } => {
                self.record(TimelineEntry::ConnectResolve {
                    time: self.now,
                    from,
                    to,
                    attempted_at,
                    accepted,
                });
                if accepted {
                    let delay = self.cfg.policy.sample(self.cfg.bounds.comm, &mut self.rng);
                    if self.nodes[from].alive {
                        self.nodes[from].phase = LoopPhase::Communicating;
                    }
                    self.queue
                        .push(self.now + delay, Ev::CommDone { from, to, started_at: self.now });
                } else {
                    self.nodes[from].stats.failed_attempts += 1;
                    self.start_iteration(from);
                }
            }
            Ev::CommDone { from, to, started_at } => {
                self.nodes[to].busy_incoming = false;
                let eligible = self.nodes[from].alive
                    && self.nodes[to].alive
                    && !self.nodes[from].byzantine
                    && !self.nodes[to].byzantine;
                let mut learned: Option<NodeId> = None;
                if eligible {
                    let diff = self.nodes[from].tokens.symmetric_difference(&self.nodes[to].tokens);
                    if !diff.is_empty() {
                        let token = diff[self.rng.gen_range(0..diff.len())];
                        let (giver, taker) = if self.nodes[from].tokens.contains(token) {
                            (from, to)
                        } else {
                            (to, from)
                        };
                        self.nodes[taker].tokens.insert(token);
                        self.nodes[giver].stats.transfers_out += 1;
                        self.nodes[taker].stats.transfers_in += 1;
                        self.transfers += 1;
                        self.learn_events.push(LearnEvent {
                            time: self.now,
                            node: taker,
                            token,
                        });
                        self.record(TimelineEntry::Transfer {
                            time: self.now,
                            token,
                            from: giver,
                            to: taker,
                        });
                        learned = Some(taker);
                    }
                }
                self.record(TimelineEntry::CommDone { time: self.now, from, to, started_at });
                if learned.is_some() {
                    self.check_completion();
                }
                if let Some(taker) = learned {
                    if taker != from {
                        self.wake_on_token_change(taker);
                    }
                }
                self.start_iteration(from);
            }
            Ev::SpinTick { node, epoch } => {
                if self.nodes[node].alive
                    && self.nodes[node].phase == LoopPhase::ParkedNull
                    && self.nodes[node].tick_epoch == epoch
                {
                    self.nodes[node].stats.spin_ticks += 1;
                    self.broadcast(node);
                    self.queue
                        .push(self.now + self.cfg.bounds.update, Ev::SpinTick { node, epoch });
                }
            }
            Ev::Crash { node } => {
                if self.nodes[node].alive {
                    self.nodes[node].alive = false;
                    self.nodes[node].phase = LoopPhase::Halted;
                    self.record(TimelineEntry::Crash { time: self.now, node });
                    self.check_completion();
                }
            }
        }
    }
}

/// Run the asynchronous engine on a topology until every alive honest node
/// holds all `k` tokens, the time cap is reached, or no further events can
/// occur.
pub fn run_async(topo: &Topology, cfg: &AsyncConfig) -> Result<AsyncResult> {
    cfg.bounds.validate()?;
    cfg.faults.validate(topo.n())?;
    let n = topo.n();
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let initial = place_tokens(n, cfg.k, &cfg.placement)?;
    let time_cap = cfg.time_cap.unwrap_or(5000.0 * cfg.bounds.max_interval());
    if !time_cap.is_finite() || time_cap <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time cap must be positive and finite, got {time_cap}"
        )));
    }

    let byz_fractions: Vec<f64> = (0..n)
        .map(|u| {
            let deg = topo.degree(u);
            let byz = topo
                .neighbors(u)
                .iter()
                .filter(|v| cfg.faults.byzantine.contains(v))
                .count();
            byz as f64 / deg as f64
        })
        .collect();
    let byz_fraction_max = (0..n)
        .filter(|u| !cfg.faults.byzantine.contains(u))
        .map(|u| byz_fractions[u])
        .fold(0.0f64, f64::max);

    let nodes: Vec<AsyncNode> = initial
        .iter()
        .enumerate()
        .map(|(u, tokens)| AsyncNode {
            tokens: tokens.clone(),
            phase: LoopPhase::ParkedEmpty,
            alive: true,
            byzantine: cfg.faults.byzantine.contains(&u),
            busy_incoming: false,
            heard: BTreeMap::new(),
            seen_pos: BTreeMap::new(),
            next_pos: 1,
            tick_epoch: 0,
            stats: NodeStats::default(),
        })
        .collect();

    let mut engine = Engine {
        topo,
        cfg,
        nodes,
        queue: EventQueue::new(),
        rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x617379)),
        hash_seed: derive_seed(cfg.seed, 0x746167),
        now: 0.0,
        timeline: Vec::new(),
        learn_events: Vec::new(),
        transfers: 0,
        completed_at: None,
    };

    for &(node, time) in &cfg.faults.crashes {
        engine.queue.push(time, Ev::Crash { node });
    }

    // Everyone may already hold everything (k tokens on every honest node).
    engine.check_completion();
    if engine.completed_at.is_none() {
        for u in 0..n {
            engine.start_iteration(u);
        }
    }

    let mut end_time = 0.0f64;
    while engine.completed_at.is_none() {
        let Some(next_time) = engine.queue.peek_time() else {
            break;
        };
        if next_time > time_cap {
            end_time = time_cap;
            break;
        }
        let (time, ev) = engine.queue.pop().expect("peeked event");
        engine.now = time;
        end_time = time;
        engine.handle(ev);
    }

    let completed = engine.completed_at.is_some();
    if let Some(t) = engine.completed_at {
        end_time = t;
    }
    let stalled = !completed && engine.queue.is_empty();
    let failed_attempts = engine.nodes.iter().map(|nd| nd.stats.failed_attempts).sum();

    Ok(AsyncResult {
        completed,
        completion_time: engine.completed_at,
        end_time,
        stalled,
        k: cfg.k,
        transfers: engine.transfers,
        failed_attempts,
        learn_events: engine.learn_events,
        timeline: engine.timeline,
        node_stats: engine.nodes.iter().map(|nd| nd.stats.clone()).collect(),
        initial_tokens: initial,
        final_tokens: engine.nodes.into_iter().map(|nd| nd.tokens).collect(),
        byz_fractions,
        byz_fraction_max,
    })
}

/// Check a recorded timeline against the delay contracts and replay its
/// transfers against the initial placement. Returns one message per
/// violation; an empty vector means the timeline is consistent.
///
/// Checked: update deliveries within the update bound and never beyond the
/// staleness horizon; connection resolutions within the connect bound of
/// their attempt; exchanges within the comm bound of their resolution; every
/// transferred token lies in the pair's symmetric difference at transfer
/// time; transfers only happen inside accepted connections.
pub fn validate_timeline(result: &AsyncResult, bounds: &DeltaBounds) -> Vec<String> {
    const EPS: f64 = 1e-9;
    let mut violations = Vec::new();
    if result.timeline.is_empty() {
        if result.transfers > 0 {
            violations.push("timeline empty but transfers were recorded".into());
        }
        return violations;
    }
    let mut sets: Vec<BTreeSet<TokenId>> = result
        .initial_tokens
        .iter()
        .map(|s| s.iter().collect())
        .collect();
    // Accepted connections currently open, keyed by (initiator, acceptor).
    let mut open: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut last_time = f64::NEG_INFINITY;
    for entry in &result.timeline {
        let t = entry.time();
        if t < last_time - EPS {
            violations.push(format!("timeline not time-ordered at {t}"));
        }
        last_time = last_time.max(t);
        match *entry {
            TimelineEntry::AdvDeliver { time, from, to, sent_at } => {
                let lag = time - sent_at;
                if lag > bounds.update + EPS {
                    violations.push(format!(
                        "digest {from}->{to} took {lag}, above the update bound {}",
                        bounds.update
                    ));
                }
                if lag > bounds.old + EPS {
                    violations.push(format!(
                        "digest {from}->{to} delivered stale (age {lag} vs horizon {})",
                        bounds.old
                    ));
                }
            }
            TimelineEntry::ConnectResolve { time, from, to, attempted_at, accepted } => {
                let lag = time - attempted_at;
                if lag > bounds.connect + EPS {
                    violations.push(format!(
                        "connection {from}->{to} resolved after {lag}, above the connect bound {}",
                        bounds.connect
                    ));
                }
                if accepted {
                    open.insert((from, to), time);
                }
            }
            TimelineEntry::CommDone { time, from, to, started_at } => {
                let lag = time - started_at;
                if lag > bounds.comm + EPS {
                    violations.push(format!(
                        "exchange {from}->{to} took {lag}, above the comm bound {}",
                        bounds.comm
                    ));
                }
                if open.remove(&(from, to)).is_none() {
                    violations.push(format!(
                        "exchange {from}->{to} finished without an accepted connection"
                    ));
                }
            }
            TimelineEntry::Transfer { time, token, from, to } => {
                let has_from = sets[from].contains(&token);
                let has_to = sets[to].contains(&token);
                if !has_from || has_to {
                    violations.push(format!(
                        "transfer of token {token} {from}->{to} at {time} not in the pair's \
                         symmetric difference"
                    ));
                }
                let inside = open.contains_key(&(from, to)) || open.contains_key(&(to, from));
                if !inside {
                    violations.push(format!(
                        "transfer {from}->{to} at {time} outside any open connection"
                    ));
                }
                sets[to].insert(token);
            }
            _ => {}
        }
    }
    for (u, expected) in result.final_tokens.iter().enumerate() {
        let replayed: BTreeSet<TokenId> = sets[u].clone();
        let actual: BTreeSet<TokenId> = expected.iter().collect();
        if replayed != actual {
            violations.push(format!("node {u} final tokens disagree with replayed transfers"));
        }
    }
    violations
}
