//! Argument parsing and config resolution.
//!
//! Every subcommand accepts `--config <file.json>` holding the same fields
//! as its flags; explicit flags win over the file, and anything left unset
//! falls back to the defaults documented on the flags.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gossip_core::async_engine::{AsyncConfig, DelayPolicy, DeltaBounds, FaultPlan};
use gossip_core::sync::{DeliveryPolicy, SyncAlgorithm, SyncConfig, TokenPlacement};
use gossip_core::synchronizer::SyncedConfig;
use gossip_core::token::HashMode;
use gossip_core::topology::{TopologyKind, TopologySpec};
use gossip_core::NodeId;

use crate::{HarnessError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "gossip-sim",
    about = "Token dissemination simulators for smartphone peer-to-peer meshes",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a topology and report its structure.
    Topo(TopoArgs),
    /// Run the round-based engine once.
    RunSync(RunSyncArgs),
    /// Run the asynchronous engine once.
    RunAsync(RunAsyncArgs),
    /// Run gossip over the round synchronizer once.
    RunSynced(RunSyncedArgs),
    /// Run one engine across sizes and seeds and aggregate medians.
    Sweep(SweepArgs),
    /// Rebuild the spread-size band report from a round-based run file.
    Bands(BandsArgs),
    /// Re-check a recorded run file against its behavioral contracts.
    Validate(ValidateArgs),
}

fn parse_kind(s: &str) -> std::result::Result<TopologyKind, String> {
    TopologyKind::from_str(s).map_err(|e| e.to_string())
}

fn parse_policy(s: &str) -> std::result::Result<DelayPolicy, String> {
    match s.replace('-', "_").as_str() {
        "fixed_max" => Ok(DelayPolicy::FixedMax),
        "uniform" => Ok(DelayPolicy::Uniform),
        "adversarial" => Ok(DelayPolicy::Adversarial),
        other => Err(format!("unknown delay policy '{other}'")),
    }
}

fn parse_algorithm(s: &str) -> std::result::Result<SyncAlgorithm, String> {
    match s.replace('-', "_").as_str() {
        "random_spread" => Ok(SyncAlgorithm::RandomSpread),
        "coin_flip" => Ok(SyncAlgorithm::CoinFlip),
        other => Err(format!("unknown algorithm '{other}'")),
    }
}

fn parse_delivery(s: &str) -> std::result::Result<DeliveryPolicy, String> {
    match s.replace('-', "_").as_str() {
        "all" => Ok(DeliveryPolicy::All),
        "adversarial_one" => Ok(DeliveryPolicy::AdversarialOne),
        "random_one" => Ok(DeliveryPolicy::RandomOne),
        other => Err(format!("unknown delivery policy '{other}'")),
    }
}

fn parse_crash(s: &str) -> std::result::Result<(NodeId, f64), String> {
    let (node, time) = s
        .split_once(':')
        .ok_or_else(|| format!("crash spec '{s}' must look like node:time"))?;
    let node = node.trim().parse::<NodeId>().map_err(|e| e.to_string())?;
    let time = time.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((node, time))
}

/// Shared topology selection flags.
#[derive(Args, Debug, Clone)]
pub struct TopoFlags {
    /// Topology kind: line, ring, clique, star, grid, binary_tree, barbell,
    /// random_regular:<d>, erdos_renyi:<p>.
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<TopologyKind>,
    /// Number of nodes.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for randomized topology kinds.
    #[arg(long)]
    pub topo_seed: Option<u64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct TopoFileConfig {
    kind: Option<String>,
    n: Option<usize>,
    topo_seed: Option<u64>,
}

fn resolve_spec(flags: &TopoFlags, file: &TopoFileConfig) -> Result<TopologySpec> {
    let kind = match (&flags.kind, &file.kind) {
        (Some(k), _) => *k,
        (None, Some(s)) => {
            TopologyKind::from_str(s).map_err(|e| HarnessError::Malformed(e.to_string()))?
        }
        (None, None) => {
            return Err(HarnessError::Malformed(
                "a topology kind is required (--kind or config file)".into(),
            ))
        }
    };
    let n = flags.n.or(file.n).ok_or_else(|| {
        HarnessError::Malformed("a node count is required (--n or config file)".into())
    })?;
    let seed = flags.topo_seed.or(file.topo_seed).unwrap_or(0);
    Ok(TopologySpec::new(kind, n, seed))
}

fn load_file<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

#[derive(Args, Debug)]
pub struct TopoArgs {
    #[command(flatten)]
    pub topo: TopoFlags,
    /// Also compute the exact vertex expansion (small graphs only).
    #[arg(long)]
    pub expansion: bool,
    /// Also check the expansion-based matching floor over all small cuts.
    #[arg(long)]
    pub matching_floor: bool,
    /// Write the edge list to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with the same fields as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub struct TopoResolved {
    pub spec: TopologySpec,
    pub expansion: bool,
    pub matching_floor: bool,
    pub out: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct TopoCmdFile {
    #[serde(flatten)]
    topo: TopoFileConfig,
    expansion: Option<bool>,
    matching_floor: Option<bool>,
}

impl TopoArgs {
    pub fn resolve(&self) -> Result<TopoResolved> {
        let file: TopoCmdFile = load_file(&self.config)?;
        Ok(TopoResolved {
            spec: resolve_spec(&self.topo, &file.topo)?,
            expansion: self.expansion || file.expansion.unwrap_or(false),
            matching_floor: self.matching_floor || file.matching_floor.unwrap_or(false),
            out: self.out.clone(),
        })
    }
}

#[derive(Args, Debug)]
pub struct RunSyncArgs {
    #[command(flatten)]
    pub topo: TopoFlags,
    /// Number of distinct tokens.
    #[arg(long)]
    pub k: Option<u32>,
    /// Run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// random_spread (phase-based roles) or coin_flip (fresh roles each round).
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm: Option<SyncAlgorithm>,
    /// Invitation delivery: all, adversarial_one, random_one.
    #[arg(long, value_parser = parse_delivery)]
    pub delivery: Option<DeliveryPolicy>,
    /// Tokens moved per accepted connection.
    #[arg(long)]
    pub tokens_per_connection: Option<u32>,
    /// Abort if not complete after this many rounds.
    #[arg(long)]
    pub round_cap: Option<u64>,
    /// Compare token sets exactly instead of by digest.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub oracle_tags: Option<bool>,
    /// Write the run (header, per-round lines, summary) to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with the same fields as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct RunSyncFile {
    #[serde(flatten)]
    topo: TopoFileConfig,
    k: Option<u32>,
    seed: Option<u64>,
    algorithm: Option<SyncAlgorithm>,
    delivery: Option<DeliveryPolicy>,
    tokens_per_connection: Option<u32>,
    round_cap: Option<u64>,
    oracle_tags: Option<bool>,
}

pub struct RunSyncResolved {
    pub spec: TopologySpec,
    pub config: SyncConfig,
    pub out: Option<PathBuf>,
}

impl RunSyncArgs {
    pub fn resolve(&self) -> Result<RunSyncResolved> {
        let file: RunSyncFile = load_file(&self.config)?;
        let mut config = SyncConfig {
            k: self.k.or(file.k).unwrap_or(1),
            seed: self.seed.or(file.seed).unwrap_or(0),
            ..SyncConfig::default()
        };
        if let Some(a) = self.algorithm.or(file.algorithm) {
            config.algorithm = a;
        }
        if let Some(d) = self.delivery.or(file.delivery) {
            config.delivery = d;
        }
        if let Some(c) = self.tokens_per_connection.or(file.tokens_per_connection) {
            config.tokens_per_connection = c;
        }
        if let Some(cap) = self.round_cap.or(file.round_cap) {
            config.round_cap = cap;
        }
        if self.oracle_tags.or(file.oracle_tags).unwrap_or(false) {
            config.hash_mode = HashMode::Oracle;
        }
        Ok(RunSyncResolved {
            spec: resolve_spec(&self.topo, &file.topo)?,
            config,
            out: self.out.clone(),
        })
    }
}

#[derive(Args, Debug)]
pub struct RunAsyncArgs {
    #[command(flatten)]
    pub topo: TopoFlags,
    /// Number of distinct tokens.
    #[arg(long)]
    pub k: Option<u32>,
    /// Run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Delay policy: fixed_max, uniform, adversarial.
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<DelayPolicy>,
    /// Delivery bound for digest broadcasts.
    #[arg(long)]
    pub delta_update: Option<f64>,
    /// Staleness horizon for digests.
    #[arg(long)]
    pub delta_old: Option<f64>,
    /// Connection establishment bound.
    #[arg(long)]
    pub delta_connect: Option<f64>,
    /// Exchange bound.
    #[arg(long)]
    pub delta_comm: Option<f64>,
    /// Comma-separated byzantine node ids.
    #[arg(long, value_delimiter = ',')]
    pub byzantine: Option<Vec<NodeId>>,
    /// Crash specs, each node:time.
    #[arg(long, value_delimiter = ',', value_parser = parse_crash)]
    pub crash: Option<Vec<(NodeId, f64)>>,
    /// Give up at this simulated time.
    #[arg(long)]
    pub time_cap: Option<f64>,
    /// Skip recording the event timeline.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub no_timeline: Option<bool>,
    /// Compare token sets exactly instead of by digest.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub oracle_tags: Option<bool>,
    /// Write the run (header, timeline lines, summary) to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with the same fields as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct RunAsyncFile {
    #[serde(flatten)]
    topo: TopoFileConfig,
    k: Option<u32>,
    seed: Option<u64>,
    policy: Option<DelayPolicy>,
    delta_update: Option<f64>,
    delta_old: Option<f64>,
    delta_connect: Option<f64>,
    delta_comm: Option<f64>,
    byzantine: Option<Vec<NodeId>>,
    crash: Option<Vec<(NodeId, f64)>>,
    time_cap: Option<f64>,
    no_timeline: Option<bool>,
    oracle_tags: Option<bool>,
}

pub struct RunAsyncResolved {
    pub spec: TopologySpec,
    pub config: AsyncConfig,
    pub out: Option<PathBuf>,
}

impl RunAsyncArgs {
    pub fn resolve(&self) -> Result<RunAsyncResolved> {
        let file: RunAsyncFile = load_file(&self.config)?;
        let defaults = DeltaBounds::default();
        let bounds = DeltaBounds {
            update: self.delta_update.or(file.delta_update).unwrap_or(defaults.update),
            old: self.delta_old.or(file.delta_old).unwrap_or(defaults.old),
            connect: self.delta_connect.or(file.delta_connect).unwrap_or(defaults.connect),
            comm: self.delta_comm.or(file.delta_comm).unwrap_or(defaults.comm),
        };
        let faults = FaultPlan {
            crashes: self.crash.clone().or(file.crash).unwrap_or_default(),
            byzantine: self
                .byzantine
                .clone()
                .or(file.byzantine)
                .map(BTreeSet::from_iter)
                .unwrap_or_default(),
        };
        let config = AsyncConfig {
            k: self.k.or(file.k).unwrap_or(1),
            placement: TokenPlacement::LowestIds,
            bounds,
            policy: self.policy.or(file.policy).unwrap_or_default(),
            hash_mode: if self.oracle_tags.or(file.oracle_tags).unwrap_or(false) {
                HashMode::Oracle
            } else {
                HashMode::Seeded
            },
            faults,
            time_cap: self.time_cap.or(file.time_cap),
            seed: self.seed.or(file.seed).unwrap_or(0),
            record_timeline: !self.no_timeline.or(file.no_timeline).unwrap_or(false),
        };
        Ok(RunAsyncResolved {
            spec: resolve_spec(&self.topo, &file.topo)?,
            config,
            out: self.out.clone(),
        })
    }
}

#[derive(Args, Debug)]
pub struct RunSyncedArgs {
    #[command(flatten)]
    pub topo: TopoFlags,
    /// Number of distinct tokens.
    #[arg(long)]
    pub k: Option<u32>,
    /// Rounds to execute.
    #[arg(long)]
    pub rounds: Option<u32>,
    /// Run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Delay policy: fixed_max, uniform, adversarial.
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<DelayPolicy>,
    /// Write the run (header, trace lines, summary) to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with the same fields as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct RunSyncedFile {
    #[serde(flatten)]
    topo: TopoFileConfig,
    k: Option<u32>,
    rounds: Option<u32>,
    seed: Option<u64>,
    policy: Option<DelayPolicy>,
}

pub struct RunSyncedResolved {
    pub spec: TopologySpec,
    pub config: SyncedConfig,
    pub k: u32,
    pub out: Option<PathBuf>,
}

impl RunSyncedArgs {
    pub fn resolve(&self) -> Result<RunSyncedResolved> {
        let file: RunSyncedFile = load_file(&self.config)?;
        let config = SyncedConfig {
            rounds: self.rounds.or(file.rounds).unwrap_or(10),
            policy: self.policy.or(file.policy).unwrap_or_default(),
            seed: self.seed.or(file.seed).unwrap_or(0),
            ..SyncedConfig::default()
        };
        Ok(RunSyncedResolved {
            spec: resolve_spec(&self.topo, &file.topo)?,
            config,
            k: self.k.or(file.k).unwrap_or(1),
            out: self.out.clone(),
        })
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub topo: TopoFlags,
    /// Node counts to sweep, comma separated (overrides --n).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Number of distinct tokens.
    #[arg(long)]
    pub k: Option<u32>,
    /// Seeds 0..count per size.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Engine to sweep: sync or async.
    #[arg(long)]
    pub mode: Option<String>,
    /// Delay policy for async sweeps.
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<DelayPolicy>,
    /// Write one CSV row per run to this file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write per-size medians as JSON lines to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with the same fields as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct SweepFile {
    #[serde(flatten)]
    topo: TopoFileConfig,
    sizes: Option<Vec<usize>>,
    k: Option<u32>,
    seeds: Option<u64>,
    mode: Option<String>,
    policy: Option<DelayPolicy>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Sync,
    Async,
}

pub struct SweepResolved {
    pub kind: TopologyKind,
    pub topo_seed: u64,
    pub sizes: Vec<usize>,
    pub k: u32,
    pub seeds: u64,
    pub mode: SweepMode,
    pub policy: DelayPolicy,
    pub csv: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl SweepArgs {
    pub fn resolve(&self) -> Result<SweepResolved> {
        let file: SweepFile = load_file(&self.config)?;
        let spec_probe = resolve_spec(
            &TopoFlags {
                kind: self.topo.kind,
                n: self.topo.n.or(Some(0)), // n unused; sizes drive the sweep
                topo_seed: self.topo.topo_seed,
            },
            &file.topo,
        )?;
        let sizes = self
            .sizes
            .clone()
            .or(file.sizes)
            .or_else(|| self.topo.n.map(|n| vec![n]))
            .ok_or_else(|| HarnessError::Malformed("--sizes (or --n) is required".into()))?;
        if sizes.is_empty() {
            return Err(HarnessError::Malformed("size list is empty".into()));
        }
        let mode = match self
            .mode
            .clone()
            .or(file.mode)
            .unwrap_or_else(|| "sync".into())
            .as_str()
        {
            "sync" => SweepMode::Sync,
            "async" => SweepMode::Async,
            other => {
                return Err(HarnessError::Malformed(format!(
                    "unknown sweep mode '{other}' (expected sync or async)"
                )))
            }
        };
        Ok(SweepResolved {
            kind: spec_probe.kind,
            topo_seed: spec_probe.seed,
            sizes,
            k: self.k.or(file.k).unwrap_or(1),
            seeds: self.seeds.or(file.seeds).unwrap_or(10),
            mode,
            policy: self.policy.or(file.policy).unwrap_or_default(),
            csv: self.csv.clone(),
            out: self.out.clone(),
        })
    }
}

#[derive(Args, Debug)]
pub struct BandsArgs {
    /// A run file produced by run-sync.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the report as JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// A run file produced by run-async or run-synced.
    #[arg(long)]
    pub input: PathBuf,
}
