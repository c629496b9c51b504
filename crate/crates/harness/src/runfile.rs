//! Run-file layout shared by the run subcommands and `bands`/`validate`.
//!
//! Every file is JSON lines: a header object identifying the file type and
//! echoing the full configuration, one line per recorded event or round,
//! and a final `{"summary": …}` object whose bulky event list is stripped
//! (the per-line records carry it). Readers re-attach the lines to get the
//! original in-memory result back.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use gossip_core::async_engine::{AsyncConfig, AsyncResult, TimelineEntry};
use gossip_core::sync::{RoundLog, RunResult, SyncConfig};
use gossip_core::synchronizer::{SyncedConfig, SyncedResult, TracedEvent};
use gossip_core::topology::TopologySpec;

use crate::{HarnessError, Result};

pub const SYNC_FILE: &str = "sync_run";
pub const ASYNC_FILE: &str = "async_run";
pub const SYNCED_FILE: &str = "synced_run";

#[derive(Serialize, Deserialize, Debug)]
pub struct SyncHeader {
    pub file: String,
    pub spec: TopologySpec,
    pub config: SyncConfig,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct AsyncHeader {
    pub file: String,
    pub spec: TopologySpec,
    pub config: AsyncConfig,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct SyncedHeader {
    pub file: String,
    pub spec: TopologySpec,
    pub config: SyncedConfig,
    pub k: u32,
    pub gossip_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Summary<T> {
    summary: T,
}

fn write_lines<W: Write, H: Serialize, L: Serialize, S: Serialize>(
    mut w: W,
    header: &H,
    lines: impl Iterator<Item = L>,
    summary: &S,
) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for line in lines {
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut w, &Summary { summary })?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_sync_run(
    path: &Path,
    spec: &TopologySpec,
    config: &SyncConfig,
    result: &RunResult,
) -> Result<()> {
    let header = SyncHeader {
        file: SYNC_FILE.into(),
        spec: *spec,
        config: config.clone(),
    };
    let mut stripped = result.clone();
    let logs = std::mem::take(&mut stripped.logs);
    write_lines(
        BufWriter::new(File::create(path)?),
        &header,
        logs.iter(),
        &stripped,
    )
}

pub fn write_async_run(
    path: &Path,
    spec: &TopologySpec,
    config: &AsyncConfig,
    result: &AsyncResult,
) -> Result<()> {
    let header = AsyncHeader {
        file: ASYNC_FILE.into(),
        spec: *spec,
        config: config.clone(),
    };
    let mut stripped = result.clone();
    let timeline = std::mem::take(&mut stripped.timeline);
    write_lines(
        BufWriter::new(File::create(path)?),
        &header,
        timeline.iter(),
        &stripped,
    )
}

pub fn write_synced_run(
    path: &Path,
    header: &SyncedHeader,
    result: &SyncedResult,
) -> Result<()> {
    let mut stripped = result.clone();
    let trace = std::mem::take(&mut stripped.trace);
    write_lines(
        BufWriter::new(File::create(path)?),
        header,
        trace.iter(),
        &stripped,
    )
}

struct RawRunFile {
    header: serde_json::Value,
    lines: Vec<serde_json::Value>,
    summary: serde_json::Value,
}

fn read_raw(path: &Path) -> Result<RawRunFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        values.push(serde_json::from_str::<serde_json::Value>(&line)?);
    }
    if values.len() < 2 {
        return Err(HarnessError::Malformed(
            "run file needs at least a header and a summary line".into(),
        ));
    }
    let summary_obj = values.pop().unwrap();
    let summary = summary_obj
        .get("summary")
        .cloned()
        .ok_or_else(|| HarnessError::Malformed("last line is not a summary object".into()))?;
    let header = values.remove(0);
    Ok(RawRunFile { header, lines: values, summary })
}

/// File type tag from a run file's header line.
pub fn peek_file_type(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let value: serde_json::Value = serde_json::from_str(&first)?;
    value
        .get("file")
        .and_then(|v| v.as_str())
        .map(str::to_owned)
        .ok_or_else(|| HarnessError::Malformed("header has no file type tag".into()))
}

pub fn read_sync_run(path: &Path) -> Result<(SyncHeader, RunResult)> {
    let raw = read_raw(path)?;
    let header: SyncHeader = serde_json::from_value(raw.header)?;
    if header.file != SYNC_FILE {
        return Err(HarnessError::Malformed(format!(
            "expected a {SYNC_FILE} file, found '{}'",
            header.file
        )));
    }
    let mut result: RunResult = serde_json::from_value(raw.summary)?;
    result.logs = raw
        .lines
        .into_iter()
        .map(serde_json::from_value::<RoundLog>)
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, result))
}

pub fn read_async_run(path: &Path) -> Result<(AsyncHeader, AsyncResult)> {
    let raw = read_raw(path)?;
    let header: AsyncHeader = serde_json::from_value(raw.header)?;
    if header.file != ASYNC_FILE {
        return Err(HarnessError::Malformed(format!(
            "expected an {ASYNC_FILE} file, found '{}'",
            header.file
        )));
    }
    let mut result: AsyncResult = serde_json::from_value(raw.summary)?;
    result.timeline = raw
        .lines
        .into_iter()
        .map(serde_json::from_value::<TimelineEntry>)
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, result))
}

pub fn read_synced_run(path: &Path) -> Result<(SyncedHeader, SyncedResult)> {
    let raw = read_raw(path)?;
    let header: SyncedHeader = serde_json::from_value(raw.header)?;
    if header.file != SYNCED_FILE {
        return Err(HarnessError::Malformed(format!(
            "expected a {SYNCED_FILE} file, found '{}'",
            header.file
        )));
    }
    let mut result: SyncedResult = serde_json::from_value(raw.summary)?;
    result.trace = raw
        .lines
        .into_iter()
        .map(serde_json::from_value::<TracedEvent>)
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, result))
}
