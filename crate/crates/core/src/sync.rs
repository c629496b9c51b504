//! Synchronous round-based gossip engine.
//!
//! Each round: nodes advertise (role bit, connected-this-phase bit, token-set
//! tag), senders invite one eligible neighbor, each invited receiver accepts
//! at most one invitation, and every accepted connection exchanges tokens
//! drawn from the symmetric difference. Connections therefore always form a
//! matching, and every connection joins nodes with differing tags.
//!
//! Two algorithms share the machinery: `RandomSpread` draws its sender role
//! once per phase (phase length = ceil(log2 degree-bound)) and tracks a
//! per-phase connected bit; `CoinFlip` redraws the role every round and
//! considers any tag mismatch eligible.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::{HashMode, Tag, TokenSet};
use crate::topology::Topology;
use crate::{NodeId, TokenId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenPlacement {
    /// Token `t` starts at node `t` (the k lowest ids).
    #[default]
    LowestIds,
    /// Explicit (node, token) pairs; a token may start at several nodes.
    Explicit(Vec<(NodeId, TokenId)>),
}

/// How invitations reach a receiver that was targeted by several senders.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryPolicy {
    /// Receiver sees every invitation aimed at it.
    #[default]
    All,
    /// Receiver sees only the invitation whose connection would move the
    /// fewest tokens (ties to the lowest sender id).
    AdversarialOne,
    /// Receiver sees one uniformly chosen invitation.
    RandomOne,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncAlgorithm {
    #[default]
    RandomSpread,
    CoinFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub k: u32,
    pub placement: TokenPlacement,
    /// Max tokens moved per connection.
    pub tokens_per_connection: u32,
    pub delivery: DeliveryPolicy,
    pub algorithm: SyncAlgorithm,
    pub hash_mode: HashMode,
    pub round_cap: u64,
    pub seed: u64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            k: 1,
            placement: TokenPlacement::default(),
            tokens_per_connection: 1,
            delivery: DeliveryPolicy::default(),
            algorithm: SyncAlgorithm::default(),
            hash_mode: HashMode::default(),
            round_cap: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyncNode {
    pub id: NodeId,
    pub tokens: TokenSet,
    /// Role bit for the current phase: true = sender, false = receiver.
    pub sender: bool,
    /// Receiver-side bit: accepted a connection earlier in this phase.
    pub done: bool,
}

/// What a node broadcasts to its neighbors each round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Advert {
    pub node: NodeId,
    pub sender: bool,
    pub done: bool,
    pub tag: Tag,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub token: TokenId,
    pub from: NodeId,
    pub to: NodeId,
}

/// Everything observable about one executed round. `counts` are per-token
/// holder counts at the start of the round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u64,
    pub phase: u64,
    pub counts: Vec<usize>,
    pub invitations: Vec<(NodeId, NodeId)>,
    pub connections: Vec<(NodeId, NodeId)>,
    pub transfers: Vec<Transfer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub completed: bool,
    pub k: u32,
    pub rounds: u64,
    pub phase_length: u64,
    pub logs: Vec<RoundLog>,
    pub initial_tokens: Vec<TokenSet>,
    pub final_tokens: Vec<TokenSet>,
    pub transfers_total: u64,
}

impl RunResult {
    /// Token holder counts after the last executed round.
    pub fn final_counts(&self, k: u32) -> Vec<usize> {
        count_tokens(&self.final_tokens, k)
    }

    /// Number of rounds in which at least one token moved.
    pub fn rounds_with_transfers(&self) -> usize {
        self.logs.iter().filter(|l| !l.transfers.is_empty()).count()
    }
}

/// Initial token sets for `n` nodes under a placement. Every token in
/// `0..k` must be placed somewhere.
pub fn place_tokens(n: usize, k: u32, placement: &TokenPlacement) -> Result<Vec<TokenSet>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let mut sets = vec![TokenSet::new(); n];
    match placement {
        TokenPlacement::LowestIds => {
            if (k as usize) > n {
                return Err(Error::InvalidParameter(format!(
                    "k={k} tokens need k <= n={n} nodes under lowest-id placement"
                )));
            }
            for t in 0..k {
                sets[t as usize].insert(t);
            }
        }
        TokenPlacement::Explicit(pairs) => {
            for &(node, token) in pairs {
                if node >= n || token >= k {
                    return Err(Error::InvalidParameter(format!(
                        "placement pair ({node},{token}) out of range for n={n}, k={k}"
                    )));
                }
                sets[node].insert(token);
            }
            for t in 0..k {
                if !sets.iter().any(|s| s.contains(t)) {
                    return Err(Error::InvalidParameter(format!("token {t} placed nowhere")));
                }
            }
        }
    }
    Ok(sets)
}

/// Rounds per phase for a degree bound N: ceil(log2 N), never below 1.
pub fn phase_length(degree_bound: usize) -> u64 {
    debug_assert!(degree_bound >= 2);
    let bits = usize::BITS - (degree_bound - 1).leading_zeros();
    u64::from(bits).max(1)
}

/// True on the first round of each phase (rounds are 1-based).
pub fn is_phase_start(round: u64, phase_len: u64) -> bool {
    (round - 1).is_multiple_of(phase_len)
}

/// Neighbors a sender may invite this round, ascending by id.
/// Both algorithms require a differing tag; `RandomSpread` additionally
/// requires the neighbor to be an unconnected receiver.
pub fn eligible_targets(own: &Advert, neighbor_ads: &[&Advert], algorithm: SyncAlgorithm) -> Vec<NodeId> {
    neighbor_ads
        .iter()
        .filter(|ad| ad.tag != own.tag)
        .filter(|ad| match algorithm {
            SyncAlgorithm::RandomSpread => !ad.sender && !ad.done,
            SyncAlgorithm::CoinFlip => true,
        })
        .map(|ad| ad.node)
        .collect()
}

/// Applies the delivery policy to the round's invitations, returning for
/// each target the nonempty sender subset it actually sees.
pub fn deliver_invitations(
    invitations: &[(NodeId, NodeId)],
    policy: DeliveryPolicy,
    nodes: &[SyncNode],
    tokens_per_connection: u32,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<NodeId, Vec<NodeId>> {
    let mut by_target: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &(sender, target) in invitations {
        by_target.entry(target).or_default().push(sender);
    }
    for (&target, senders) in by_target.iter_mut() {
        senders.sort_unstable();
        match policy {
            DeliveryPolicy::All => {}
            DeliveryPolicy::RandomOne => {
                let pick = senders[rng.gen_range(0..senders.len())];
                *senders = vec![pick];
            }
            DeliveryPolicy::AdversarialOne => {
                // Keep the invitation whose connection would move the fewest
                // tokens, ties to the lowest sender id.
                let pick = *senders
                    .iter()
                    .min_by_key(|&&s| {
                        let moved = nodes[s]
                            .tokens
                            .symmetric_difference(&nodes[target].tokens)
                            .len()
                            .min(tokens_per_connection as usize);
                        (moved, s)
                    })
                    .unwrap();
                *senders = vec![pick];
            }
        }
    }
    by_target
}

/// Each invited receiver accepts one delivered invitation uniformly;
/// invitations aimed at nodes currently acting as senders are ignored.
/// Returns (sender, receiver) pairs sorted by sender id.
pub fn resolve_connections(
    delivered: &BTreeMap<NodeId, Vec<NodeId>>,
    nodes: &[SyncNode],
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for (&target, senders) in delivered {
        if nodes[target].sender || senders.is_empty() {
            continue;
        }
        let pick = senders[rng.gen_range(0..senders.len())];
        out.push((pick, target));
    }
    out.sort_unstable();
    out
}

/// Moves up to `limit` tokens between two sets, each drawn uniformly from
/// the current symmetric difference. Returns (token, moved_into_a).
pub fn exchange_tokens(
    a: &mut TokenSet,
    b: &mut TokenSet,
    limit: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<(TokenId, bool)> {
    let mut moved = Vec::new();
    for _ in 0..limit {
        let diff = a.symmetric_difference(b);
        if diff.is_empty() {
            break;
        }
        let token = diff[rng.gen_range(0..diff.len())];
        let into_a = b.contains(token);
        if into_a {
            a.insert(token);
        } else {
            b.insert(token);
        }
        moved.push((token, into_a));
    }
    moved
}

/// Edges whose endpoints hold differing token sets and differing role bits;
/// exactly the edges along which a connection could form this round.
pub fn productive_subgraph(topo: &Topology, nodes: &[SyncNode]) -> Vec<(NodeId, NodeId)> {
    topo.edges()
        .into_iter()
        .filter(|&(u, v)| nodes[u].tokens != nodes[v].tokens && nodes[u].sender != nodes[v].sender)
        .collect()
}

fn count_tokens(sets: &[TokenSet], k: u32) -> Vec<usize> {
    (0..k)
        .map(|t| sets.iter().filter(|s| s.contains(t)).count())
        .collect()
}

fn two_mut(nodes: &mut [SyncNode], a: usize, b: usize) -> (&mut SyncNode, &mut SyncNode) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = nodes.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = nodes.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Runs the configured algorithm until every node holds every token or the
/// round cap is reached.
pub fn run_sync(topo: &Topology, cfg: &SyncConfig) -> Result<RunResult> {
    if cfg.tokens_per_connection == 0 {
        return Err(Error::InvalidParameter("tokens_per_connection must be >= 1".into()));
    }
    if cfg.round_cap == 0 {
        return Err(Error::InvalidParameter("round_cap must be >= 1".into()));
    }
    let n = topo.n();
    let initial_tokens = place_tokens(n, cfg.k, &cfg.placement)?;
    let mut nodes: Vec<SyncNode> = initial_tokens
        .iter()
        .enumerate()
        .map(|(id, tokens)| SyncNode { id, tokens: tokens.clone(), sender: false, done: false })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phase_len = match cfg.algorithm {
        SyncAlgorithm::RandomSpread => phase_length(topo.degree_bound()),
        SyncAlgorithm::CoinFlip => 1,
    };

    let mut logs = Vec::new();
    let mut transfers_total = 0u64;
    let mut completed = all_complete(&nodes, cfg.k);
    let mut rounds = 0u64;

    for round in 1..=cfg.round_cap {
        if completed {
            break;
        }
        rounds = round;
        if is_phase_start(round, phase_len) {
            for node in nodes.iter_mut() {
                node.sender = rng.gen_bool(0.5);
                node.done = false;
            }
        }
        let counts = count_tokens_of(&nodes, cfg.k);

        let adverts: Vec<Advert> = nodes
            .iter()
            .map(|node| Advert {
                node: node.id,
                sender: node.sender,
                done: node.done,
                tag: Tag::for_tokens(&node.tokens, round, cfg.seed, cfg.hash_mode),
            })
            .collect();

        let mut invitations = Vec::new();
        for u in 0..n {
            if !nodes[u].sender {
                continue;
            }
            let neighbor_ads: Vec<&Advert> =
                topo.neighbors(u).iter().map(|&v| &adverts[v]).collect();
            let targets = eligible_targets(&adverts[u], &neighbor_ads, cfg.algorithm);
            if !targets.is_empty() {
                let target = targets[rng.gen_range(0..targets.len())];
                invitations.push((u, target));
            }
        }

        let delivered = deliver_invitations(
            &invitations,
            cfg.delivery,
            &nodes,
            cfg.tokens_per_connection,
            &mut rng,
        );
        let connections = resolve_connections(&delivered, &nodes, &mut rng);

        let mut transfers = Vec::new();
        for &(sender, receiver) in &connections {
            nodes[receiver].done = true;
            let (s, r) = two_mut(&mut nodes, sender, receiver);
            for (token, into_sender) in
                exchange_tokens(&mut s.tokens, &mut r.tokens, cfg.tokens_per_connection, &mut rng)
            {
                let (from, to) = if into_sender { (receiver, sender) } else { (sender, receiver) };
                transfers.push(Transfer { token, from, to });
            }
        }
        transfers_total += transfers.len() as u64;

        logs.push(RoundLog { round, phase: (round - 1) / phase_len + 1, counts, invitations, connections, transfers });
        completed = all_complete(&nodes, cfg.k);
    }

    Ok(RunResult {
        completed,
        k: cfg.k,
        rounds,
        phase_length: phase_len,
        logs,
        initial_tokens,
        final_tokens: nodes.into_iter().map(|n| n.tokens).collect(),
        transfers_total,
    })
}

fn count_tokens_of(nodes: &[SyncNode], k: u32) -> Vec<usize> {
    (0..k)
        .map(|t| nodes.iter().filter(|n| n.tokens.contains(t)).count())
        .collect()
}

fn all_complete(nodes: &[SyncNode], k: u32) -> bool {
    nodes.iter().all(|n| n.tokens.len() == k as usize)
}
