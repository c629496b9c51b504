//! Progress analysis for dissemination runs: per-token size bands, phase
//! classification, and selection statistics over bipartite cuts.
//!
//! The size band of a token tracks how close its holder count is to covering
//! all nodes, on a doubling scale: growth rows fire as the count passes
//! 2, 4, ..., n/2 and shrink rows fire as the count of nodes still missing
//! the token drops below n/2, n/4, ..., 1.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matching::{maximum_matching_size, Bipartite};
use crate::sync::RunResult;
use crate::{Rational, TokenId};

/// Number of doubling steps from 2 up to n/2; row count is `2 * half_log + 1`.
fn half_log(n: usize) -> Result<usize> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "band tables need n a power of two >= 4, got {n}"
        )));
    }
    Ok((n / 2).trailing_zeros() as usize)
}

/// Whether a given row is satisfied by `count` holders out of `n`.
fn row_set(n: usize, l: usize, row: usize, count: usize) -> bool {
    debug_assert!((1..=2 * l + 1).contains(&row));
    if row <= l {
        count >= 1 << row
    } else {
        n - count < n >> (row - l)
    }
}

/// Highest satisfied row for `count` holders out of `n` (0 if none).
/// Rows satisfied by a count are always a prefix, so this determines them all.
pub fn band_of_count(n: usize, count: usize) -> Result<usize> {
    let l = half_log(n)?;
    if count > n {
        return Err(Error::InvalidParameter(format!("count {count} exceeds n={n}")));
    }
    let mut band = 0;
    for row in 1..=2 * l + 1 {
        if row_set(n, l, row, count) {
            band = row;
        } else {
            break;
        }
    }
    Ok(band)
}

/// Per-token bitmap of satisfied band rows, updated as holder counts grow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SizeBandTable {
    n: usize,
    l: usize,
    counts: Vec<usize>,
    bits: Vec<Vec<bool>>,
}

impl SizeBandTable {
    /// `n` must be a power of two at least 4 so the doubling rows land
    /// exactly on n/2.
    pub fn new(n: usize, k: u32) -> Result<Self> {
        let l = half_log(n)?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        Ok(Self {
            n,
            l,
            counts: vec![0; k as usize],
            bits: vec![vec![false; 2 * l + 1]; k as usize],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Doubling steps to n/2; rows run 1..=2*half_log+1.
    pub fn half_log(&self) -> usize {
        self.l
    }

    pub fn rows(&self) -> usize {
        2 * self.l + 1
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Applies new holder counts. Counts may never decrease (tokens are never
    /// forgotten), which also guarantees no bit ever clears.
    pub fn update(&mut self, counts: &[usize]) -> Result<()> {
        if counts.len() != self.counts.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} counts, got {}",
                self.counts.len(),
                counts.len()
            )));
        }
        for (t, (&new, &old)) in counts.iter().zip(&self.counts).enumerate() {
            if new > self.n {
                return Err(Error::Contract(format!(
                    "token {t} count {new} exceeds n={}",
                    self.n
                )));
            }
            if new < old {
                return Err(Error::Contract(format!(
                    "token {t} count decreased from {old} to {new}"
                )));
            }
        }
        for (t, &count) in counts.iter().enumerate() {
            let band = band_of_count(self.n, count).expect("validated above");
            for (row, bit) in self.bits[t].iter_mut().enumerate() {
                let set = row < band;
                debug_assert!(set || !*bit, "band bit cleared");
                *bit = set;
            }
        }
        self.counts.copy_from_slice(counts);
        Ok(())
    }

    /// Highest set row for token `t`; 0 means no row set yet.
    pub fn current_band(&self, t: TokenId) -> usize {
        self.bits[t as usize].iter().filter(|b| **b).count()
    }

    pub fn row_bits(&self, t: TokenId) -> &[bool] {
        &self.bits[t as usize]
    }

    /// True when every row of every token is set, i.e. all nodes hold all
    /// tokens.
    pub fn all_complete(&self) -> bool {
        self.bits.iter().all(|row| row.iter().all(|b| *b))
    }
}

/// Spread measure of one token: holders or non-holders, whichever is smaller.
pub fn n_star(count: usize, n: usize) -> usize {
    count.min(n - count)
}

/// Token with the largest spread measure, ties to the lowest id.
pub fn t_star(counts: &[usize], n: usize) -> TokenId {
    let mut best = 0usize;
    for (t, &c) in counts.iter().enumerate() {
        if n_star(c, n) > n_star(counts[best], n) {
            best = t;
        }
    }
    best as TokenId
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    /// Some token's band moved strictly closer to the center row than the
    /// phase's reference distance.
    Upgrade,
    /// No such movement while dissemination was still incomplete.
    Fill,
    /// The phase started with every token fully spread.
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub phase: u64,
    /// Band of the most-spread token at phase start.
    pub band: usize,
    /// That band's distance from the center row.
    pub distance: usize,
    pub kind: PhaseKind,
    pub connections: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhaseReport {
    pub records: Vec<PhaseRecord>,
    pub upgrade_total: usize,
    pub upgrades_by_band: BTreeMap<usize, usize>,
    /// Structural ceiling on upgrade phases: k * (2*half_log + 1).
    pub upgrade_bound: usize,
}

/// Classifies each phase of a finished run. The run's topology size must be
/// a power of two >= 4 (bands are undefined otherwise).
pub fn classify_phases(result: &RunResult, n: usize) -> Result<PhaseReport> {
    let l = half_log(n)?;
    let k = result.k as usize;
    let mut records = Vec::new();
    let mut upgrades_by_band: BTreeMap<usize, usize> = BTreeMap::new();

    // Group consecutive logs by phase id, tracking counts at phase start and
    // after the phase's last round.
    let mut idx = 0;
    while idx < result.logs.len() {
        let phase = result.logs[idx].phase;
        let start_counts = result.logs[idx].counts.clone();
        let mut connections = 0;
        let mut end = idx;
        while end < result.logs.len() && result.logs[end].phase == phase {
            connections += result.logs[end].connections.len();
            end += 1;
        }
        let end_counts = if end < result.logs.len() {
            result.logs[end].counts.clone()
        } else {
            result.final_counts(result.k)
        };

        let kind = if start_counts.iter().all(|&c| c == n) {
            PhaseKind::Terminal
        } else {
            classify_growth(n, l, &start_counts, &end_counts)?
        };
        let star = t_star(&start_counts, n);
        let band = band_of_count(n, start_counts[star as usize])?;
        let distance = band.abs_diff(l);
        if kind == PhaseKind::Upgrade {
            *upgrades_by_band.entry(band).or_insert(0) += 1;
        }
        records.push(PhaseRecord { phase, band, distance, kind, connections });
        idx = end;
    }

    let upgrade_total = records.iter().filter(|r| r.kind == PhaseKind::Upgrade).count();
    Ok(PhaseReport {
        records,
        upgrade_total,
        upgrades_by_band,
        upgrade_bound: k * (2 * l + 1),
    })
}

/// Upgrade test: does any token's band range over the phase come strictly
/// closer to the center row than the reference distance at phase start?
fn classify_growth(
    n: usize,
    l: usize,
    start_counts: &[usize],
    end_counts: &[usize],
) -> Result<PhaseKind> {
    let star = t_star(start_counts, n);
    let reference = band_of_count(n, start_counts[star as usize])?.abs_diff(l);
    for (t, (&s, &e)) in start_counts.iter().zip(end_counts).enumerate() {
        if e < s {
            return Err(Error::Contract(format!("token {t} count decreased during phase")));
        }
        let lo = band_of_count(n, s)?;
        let hi = band_of_count(n, e)?;
        // Counts move one connection at a time, so every band between lo and
        // hi was reachable by stopping early.
        let closest = if lo <= l && l <= hi { 0 } else { (l.abs_diff(lo)).min(l.abs_diff(hi)) };
        if closest < reference {
            return Ok(PhaseKind::Upgrade);
        }
    }
    Ok(PhaseKind::Fill)
}

/// Feeds every logged round of a run through a band table, enforcing count
/// monotonicity and the prefix structure along the way.
pub fn band_table_over_run(result: &RunResult, n: usize) -> Result<SizeBandTable> {
    let mut table = SizeBandTable::new(n, result.k)?;
    for log in &result.logs {
        table.update(&log.counts)?;
        verify_prefix(&table)?;
    }
    table.update(&result.final_counts(result.k))?;
    verify_prefix(&table)?;
    Ok(table)
}

/// Confirms that each token's set rows form a prefix; returns per-token bands.
pub fn verify_prefix(table: &SizeBandTable) -> Result<Vec<usize>> {
    let mut bands = Vec::with_capacity(table.k());
    for t in 0..table.k() {
        let bits = table.row_bits(t as TokenId);
        let band = bits.iter().filter(|b| **b).count();
        if bits.iter().take(band).any(|b| !*b) || bits.iter().skip(band).any(|b| *b) {
            return Err(Error::Contract(format!("token {t} band rows are not a prefix")));
        }
        bands.push(band);
    }
    Ok(bands)
}

/// Per-receiver weight: sum over incident senders of 1/degree(sender).
/// Every sender must have at least one edge; total weight is then exactly
/// the number of senders.
pub fn degree_weights(g: &Bipartite) -> Result<Vec<Rational>> {
    let mut weights = vec![Rational::new(0, 1); g.right];
    for l in 0..g.left {
        let deg = g.degree(l);
        if deg == 0 {
            return Err(Error::Contract(format!("sender {l} has no edges")));
        }
        for &r in g.neighbors(l) {
            weights[r] += Rational::new(1, deg as u64);
        }
    }
    Ok(weights)
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionTrialReport {
    /// Number of senders; equals the verified matching size.
    pub m: usize,
    /// Coverage target: sqrt(m) / log2(m).
    pub threshold: f64,
    pub trials: u32,
    pub passes: u32,
    pub pass_fraction: f64,
    /// Distinct-receiver count distribution over the trials.
    pub histogram: BTreeMap<usize, u32>,
}

/// Coverage target for `m` senders.
pub fn coverage_threshold(m: usize) -> f64 {
    if m <= 1 {
        1.0
    } else {
        (m as f64).sqrt() / (m as f64).log2()
    }
}

/// Monte-Carlo check of selection coverage: every sender picks a uniform
/// neighbor, and a trial passes when the distinct receivers selected reach
/// the coverage threshold. Requires a perfect matching on the senders, which
/// is verified before sampling.
pub fn selection_coverage_trial(
    g: &Bipartite,
    trials: u32,
    seed: u64,
) -> Result<SelectionTrialReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let m = g.left;
    if m == 0 {
        return Err(Error::InvalidParameter("graph has no senders".into()));
    }
    if maximum_matching_size(g) != m {
        return Err(Error::Contract(
            "selection trial requires a perfect matching on the senders".into(),
        ));
    }
    let threshold = coverage_threshold(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histogram: BTreeMap<usize, u32> = BTreeMap::new();
    let mut passes = 0;
    let mut hit = vec![false; g.right];
    for _ in 0..trials {
        hit.iter_mut().for_each(|h| *h = false);
        for l in 0..m {
            let nbrs = g.neighbors(l);
            hit[nbrs[rng.gen_range(0..nbrs.len())]] = true;
        }
        let distinct = hit.iter().filter(|h| **h).count();
        *histogram.entry(distinct).or_insert(0) += 1;
        if distinct as f64 >= threshold - 1e-9 {
            passes += 1;
        }
    }
    Ok(SelectionTrialReport {
        m,
        threshold,
        trials,
        passes,
        pass_fraction: f64::from(passes) / f64::from(trials),
        histogram,
    })
}
