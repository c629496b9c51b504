//! Subcommand implementations. Each returns a process exit code: 0 for
//! success, 2 when a validation subcommand found violations (errors become
//! `Err` and exit 1 in `main`).

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use gossip_core::async_engine::{run_async, validate_timeline, AsyncConfig};
use gossip_core::analysis::{band_table_over_run, classify_phases, verify_prefix};
use gossip_core::sync::{run_sync, SyncConfig, TokenPlacement};
use gossip_core::synchronizer::{
    round_durations, run_synced, validate_trace, RandomSpreadOverSync,
};
use gossip_core::token::HashMode;
use gossip_core::topology::{generate, TopologySpec, MAX_EXHAUSTIVE_N};

use crate::args::{
    BandsArgs, RunAsyncArgs, RunSyncArgs, RunSyncedArgs, SweepArgs, SweepMode, TopoArgs,
    ValidateArgs,
};
use crate::runfile::{
    self, peek_file_type, read_async_run, read_sync_run, read_synced_run, SyncedHeader,
    ASYNC_FILE, SYNC_FILE, SYNCED_FILE,
};
use crate::{median, HarnessError, Result};

pub fn topo(args: &TopoArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.resolve()?;
    let g = generate(&resolved.spec)?;
    writeln!(
        out,
        "kind={} n={} edges={} max_degree={} degree_bound={}",
        resolved.spec.kind,
        g.n(),
        g.edge_count(),
        g.max_degree(),
        g.degree_bound()
    )?;
    if resolved.expansion {
        let alpha = g.vertex_expansion(MAX_EXHAUSTIVE_N)?;
        writeln!(
            out,
            "expansion={}/{} (~{:.6})",
            alpha.numer(),
            alpha.denom(),
            *alpha.numer() as f64 / *alpha.denom() as f64
        )?;
    }
    if resolved.matching_floor {
        let report = g.check_matching_floor(MAX_EXHAUSTIVE_N)?;
        writeln!(
            out,
            "matching_floor_holds={} subsets={} min_ratio={:.6} quarter_alpha={:.6}",
            report.holds(),
            report.subsets_checked,
            report.min_ratio,
            report.quarter_alpha
        )?;
    }
    if let Some(path) = &resolved.out {
        std::fs::write(path, g.to_edge_list())?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(0)
}

pub fn run_sync_cmd(args: &RunSyncArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.resolve()?;
    let g = generate(&resolved.spec)?;
    let result = run_sync(&g, &resolved.config)?;
    writeln!(
        out,
        "completed={} rounds={} transfers={} phase_length={}",
        result.completed, result.rounds, result.transfers_total, result.phase_length
    )?;
    if let Some(path) = &resolved.out {
        runfile::write_sync_run(path, &resolved.spec, &resolved.config, &result)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(0)
}

pub fn run_async_cmd(args: &RunAsyncArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.resolve()?;
    let g = generate(&resolved.spec)?;
    let result = run_async(&g, &resolved.config)?;
    writeln!(
        out,
        "completed={} time={} end_time={} transfers={} failed_attempts={} stalled={}",
        result.completed,
        result
            .completion_time
            .map_or_else(|| "none".to_string(), |t| t.to_string()),
        result.end_time,
        result.transfers,
        result.failed_attempts,
        result.stalled
    )?;
    if let Some(path) = &resolved.out {
        runfile::write_async_run(path, &resolved.spec, &resolved.config, &result)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(0)
}

pub fn run_synced_cmd(args: &RunSyncedArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.resolve()?;
    let g = generate(&resolved.spec)?;
    let mut algo = RandomSpreadOverSync::new(
        &g,
        resolved.k,
        &TokenPlacement::LowestIds,
        HashMode::Seeded,
        resolved.config.seed,
    )?;
    let result = run_synced(&g, &resolved.config, &mut algo)?;
    let durations = round_durations(&result, g.n());
    let worst = durations.iter().copied().fold(0.0f64, f64::max);
    writeln!(
        out,
        "rounds={} completion_round={} end_time={} max_round_time={} stale_drops={} superseded={}",
        result.rounds,
        result
            .completion_round
            .map_or_else(|| "none".to_string(), |r| r.to_string()),
        result.end_time,
        worst,
        result.stale_drops,
        result.superseded
    )?;
    if let Some(path) = &resolved.out {
        let header = SyncedHeader {
            file: SYNCED_FILE.into(),
            spec: resolved.spec,
            config: resolved.config.clone(),
            k: resolved.k,
            gossip_seed: resolved.config.seed,
        };
        runfile::write_synced_run(path, &header, &result)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(0)
}

#[derive(Serialize, Clone)]
struct SweepRow {
    mode: &'static str,
    kind: String,
    n: usize,
    k: u32,
    seed: u64,
    completed: bool,
    rounds: Option<u64>,
    time: Option<f64>,
    transfers: u64,
}

#[derive(Serialize)]
struct SweepSummary {
    mode: &'static str,
    kind: String,
    n: usize,
    k: u32,
    seeds: u64,
    completed_fraction: f64,
    median_rounds: Option<f64>,
    median_time: Option<f64>,
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.resolve()?;
    let mut jobs = Vec::new();
    for &n in &resolved.sizes {
        for seed in 0..resolved.seeds {
            jobs.push((n, seed));
        }
    }
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(n, seed)| -> Result<SweepRow> {
            let spec = TopologySpec::new(resolved.kind, n, resolved.topo_seed);
            let g = generate(&spec)?;
            match resolved.mode {
                SweepMode::Sync => {
                    let config = SyncConfig { k: resolved.k, seed, ..SyncConfig::default() };
                    let result = run_sync(&g, &config)?;
                    Ok(SweepRow {
                        mode: "sync",
                        kind: resolved.kind.to_string(),
                        n,
                        k: resolved.k,
                        seed,
                        completed: result.completed,
                        rounds: Some(result.rounds),
                        time: None,
                        transfers: result.transfers_total,
                    })
                }
                SweepMode::Async => {
                    let config = AsyncConfig {
                        k: resolved.k,
                        policy: resolved.policy,
                        seed,
                        record_timeline: false,
                        ..AsyncConfig::default()
                    };
                    let result = run_async(&g, &config)?;
                    Ok(SweepRow {
                        mode: "async",
                        kind: resolved.kind.to_string(),
                        n,
                        k: resolved.k,
                        seed,
                        completed: result.completed,
                        rounds: None,
                        time: result.completion_time,
                        transfers: result.transfers,
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = rows;
    rows.sort_by_key(|r| (r.n, r.seed));

    if let Some(path) = &resolved.csv {
        let mut writer = csv::Writer::from_path(path)?;
        for row in &rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
    }

    let mut summaries = Vec::new();
    for &n in &resolved.sizes {
        let group: Vec<&SweepRow> = rows.iter().filter(|r| r.n == n).collect();
        let completed: Vec<&&SweepRow> = group.iter().filter(|r| r.completed).collect();
        let completed_fraction = completed.len() as f64 / group.len() as f64;
        let median_rounds = match resolved.mode {
            SweepMode::Sync if !completed.is_empty() => Some(median(
                &completed
                    .iter()
                    .map(|r| r.rounds.unwrap() as f64)
                    .collect::<Vec<_>>(),
            )),
            _ => None,
        };
        let median_time = match resolved.mode {
            SweepMode::Async if !completed.is_empty() => Some(median(
                &completed
                    .iter()
                    .map(|r| r.time.unwrap())
                    .collect::<Vec<_>>(),
            )),
            _ => None,
        };
        summaries.push(SweepSummary {
            mode: if resolved.mode == SweepMode::Sync { "sync" } else { "async" },
            kind: resolved.kind.to_string(),
            n,
            k: resolved.k,
            seeds: resolved.seeds,
            completed_fraction,
            median_rounds,
            median_time,
        });
    }
    for summary in &summaries {
        writeln!(out, "{}", serde_json::to_string(summary)?)?;
    }
    if let Some(path) = &resolved.out {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for summary in &summaries {
            serde_json::to_writer(&mut file, summary)?;
            file.write_all(b"\n")?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct BandsReport {
    n: usize,
    k: u32,
    rows: usize,
    /// Highest reached spread-size band, per token.
    final_bands: Vec<usize>,
    all_complete: bool,
    phases: gossip_core::analysis::PhaseReport,
}

pub fn bands(args: &BandsArgs, out: &mut dyn Write) -> Result<i32> {
    let (header, result) = read_sync_run(&args.input)?;
    let n = header.spec.n;
    let table = band_table_over_run(&result, n)?;
    let final_bands = verify_prefix(&table)?;
    let phases = classify_phases(&result, n)?;
    let report = BandsReport {
        n,
        k: result.k,
        rows: table.rows(),
        final_bands,
        all_complete: table.all_complete(),
        phases,
    };
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, format!("{text}\n"))?;
            writeln!(out, "wrote {}", path.display())?;
        }
        None => writeln!(out, "{text}")?,
    }
    Ok(0)
}

pub fn validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let kind = peek_file_type(&args.input)?;
    let violations: Vec<String> = match kind.as_str() {
        ASYNC_FILE => {
            let (header, result) = read_async_run(&args.input)?;
            if !header.config.record_timeline {
                return Err(HarnessError::Malformed(
                    "run was recorded without a timeline; re-run without --no-timeline".into(),
                ));
            }
            validate_timeline(&result, &header.config.bounds)
        }
        SYNCED_FILE => {
            let (header, result) = read_synced_run(&args.input)?;
            let g = generate(&header.spec)?;
            validate_trace(&g, &result)
        }
        SYNC_FILE => {
            return Err(HarnessError::Malformed(
                "round-based run files carry no timeline; use the bands subcommand".into(),
            ))
        }
        other => {
            return Err(HarnessError::Malformed(format!(
                "unknown run file type '{other}'"
            )))
        }
    };
    if violations.is_empty() {
        writeln!(out, "ok: no violations")?;
        Ok(0)
    } else {
        for v in &violations {
            writeln!(out, "violation: {v}")?;
        }
        writeln!(out, "{} violation(s) found", violations.len())?;
        Ok(2)
    }
}
