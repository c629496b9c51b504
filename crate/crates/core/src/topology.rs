//! Connected undirected graphs: generators, vertex expansion, and matchings
//! across cuts.
//!
//! Expansion is computed as an exact fraction by exhaustive enumeration of
//! small subsets; line/ring/clique have closed forms available for sizes
//! beyond the enumeration limit.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{maximum_matching_size, Bipartite};
use crate::token::derive_seed;
use crate::{NodeId, Rational};

/// Set of node ids.
pub type NodeSet = BTreeSet<NodeId>;

/// Default `n` limit for exhaustive subset enumeration.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 20;
/// Hard cap on exhaustive enumeration regardless of the requested limit.
pub const MAX_EXHAUSTIVE_N: usize = 22;
/// Retry budget for randomized generators that must produce a connected graph.
pub const GENERATION_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    Line,
    Ring,
    Clique,
    Star,
    Grid,
    BinaryTree,
    RandomRegular { degree: usize },
    ErdosRenyi { p: f64 },
    Barbell,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyKind::Line => write!(f, "line"),
            TopologyKind::Ring => write!(f, "ring"),
            TopologyKind::Clique => write!(f, "clique"),
            TopologyKind::Star => write!(f, "star"),
            TopologyKind::Grid => write!(f, "grid"),
            TopologyKind::BinaryTree => write!(f, "binary_tree"),
            TopologyKind::RandomRegular { degree } => write!(f, "random_regular:{degree}"),
            TopologyKind::ErdosRenyi { p } => write!(f, "erdos_renyi:{p}"),
            TopologyKind::Barbell => write!(f, "barbell"),
        }
    }
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let plain = |kind: TopologyKind| match arg {
            None => Ok(kind),
            Some(_) => Err(format!("kind '{name}' takes no argument")),
        };
        match name {
            "line" => plain(TopologyKind::Line),
            "ring" => plain(TopologyKind::Ring),
            "clique" => plain(TopologyKind::Clique),
            "star" => plain(TopologyKind::Star),
            "grid" => plain(TopologyKind::Grid),
            "binary_tree" => plain(TopologyKind::BinaryTree),
            "barbell" => plain(TopologyKind::Barbell),
            "random_regular" => {
                let degree = arg
                    .ok_or("random_regular needs a degree, e.g. random_regular:3")?
                    .parse::<usize>()
                    .map_err(|e| format!("bad degree: {e}"))?;
                Ok(TopologyKind::RandomRegular { degree })
            }
            "erdos_renyi" => {
                let p = arg
                    .ok_or("erdos_renyi needs a probability, e.g. erdos_renyi:0.2")?
                    .parse::<f64>()
                    .map_err(|e| format!("bad probability: {e}"))?;
                Ok(TopologyKind::ErdosRenyi { p })
            }
            other => Err(format!("unknown topology kind '{other}'")),
        }
    }
}

/// Everything needed to (re)generate a topology deterministically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    #[serde(flatten)]
    pub kind: TopologyKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TopologySpec {
    pub fn new(kind: TopologyKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }
}

/// Connected undirected graph with no self-loops, plus the advertised degree
/// bound used by round-based algorithms to size their phases.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    n: usize,
    adj: Vec<Vec<NodeId>>,
    max_degree: usize,
    degree_bound: usize,
}

impl Topology {
    /// Builds and validates a topology from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("n must be >= 2, got {n}")));
        }
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u},{v}) out of range for n={n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidParameter(format!("self-loop at node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge ({},{})",
                    key.0, key.1
                )));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let max_degree = adj.iter().map(Vec::len).max().unwrap_or(0);
        let topo = Self {
            n,
            adj,
            max_degree,
            degree_bound: default_degree_bound(max_degree),
        };
        if !topo.is_connected() {
            return Err(Error::InvalidParameter("graph is not connected".into()));
        }
        Ok(topo)
    }

    /// Overrides the advertised degree bound (must be >= the max degree).
    pub fn with_degree_bound(mut self, bound: usize) -> Result<Self> {
        if bound < self.max_degree.max(2) {
            return Err(Error::InvalidParameter(format!(
                "degree bound {bound} below max degree {} (or below 2)",
                self.max_degree
            )));
        }
        self.degree_bound = bound;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Upper bound on node degree advertised to round-based algorithms;
    /// a power of two at least 2 unless overridden.
    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn contains_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n && v < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    /// All edges as (u, v) with u < v, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for &v in &self.adj[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Nodes outside `s` adjacent to at least one node in `s`.
    pub fn boundary(&self, s: &NodeSet) -> Result<NodeSet> {
        self.validate_subset(s)?;
        if s.len() == self.n {
            return Err(Error::InvalidSubset(
                "boundary of the full node set is undefined".into(),
            ));
        }
        let mut out = NodeSet::new();
        for &u in s {
            for &v in &self.adj[u] {
                if !s.contains(&v) {
                    out.insert(v);
                }
            }
        }
        Ok(out)
    }

    fn validate_subset(&self, s: &NodeSet) -> Result<()> {
        if s.is_empty() {
            return Err(Error::InvalidSubset("subset is empty".into()));
        }
        if let Some(&b) = s.iter().next_back() {
            if b >= self.n {
                return Err(Error::InvalidSubset(format!(
                    "node {b} out of range for n={}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Minimum of |boundary(S)| / |S| over all S with 0 < |S| <= n/2, as an
    /// exact fraction. Exhaustive, so `n` must be within `limit`.
    pub fn vertex_expansion(&self, limit: usize) -> Result<Rational> {
        let limit = limit.min(MAX_EXHAUSTIVE_N);
        if self.n > limit {
            return Err(Error::ExhaustiveLimit { n: self.n, limit });
        }
        let masks = self.neighbor_masks();
        let mut best: Option<Rational> = None;
        for s in 1u64..(1u64 << self.n) {
            let size = s.count_ones() as usize;
            if 2 * size > self.n {
                continue;
            }
            let mut reach = 0u64;
            let mut bits = s;
            while bits != 0 {
                let v = bits.trailing_zeros() as usize;
                reach |= masks[v];
                bits &= bits - 1;
            }
            let boundary = (reach & !s).count_ones() as u64;
            let ratio = Rational::new(boundary, size as u64);
            if best.as_ref().is_none_or(|b| ratio < *b) {
                best = Some(ratio);
            }
        }
        best.ok_or_else(|| Error::InvalidParameter("no admissible subset".into()))
    }

    fn neighbor_masks(&self) -> Vec<u64> {
        (0..self.n)
            .map(|u| self.adj[u].iter().fold(0u64, |m, &v| m | (1u64 << v)))
            .collect()
    }

    /// Size of a maximum matching in the bipartite graph of edges crossing
    /// the cut (S, V \ S). Requires 0 < |S| <= n/2.
    pub fn cut_matching(&self, s: &NodeSet) -> Result<usize> {
        self.validate_subset(s)?;
        if 2 * s.len() > self.n {
            return Err(Error::InvalidSubset(format!(
                "|S|={} exceeds n/2 for n={}",
                s.len(),
                self.n
            )));
        }
        Ok(maximum_matching_size(&self.crossing_graph(s)))
    }

    /// Bipartite graph with left = S, right = V \ S, and only cut-crossing
    /// edges. Left/right indices follow ascending node id.
    pub fn crossing_graph(&self, s: &NodeSet) -> Bipartite {
        let left: Vec<NodeId> = s.iter().copied().collect();
        let right: Vec<NodeId> = (0..self.n).filter(|v| !s.contains(v)).collect();
        let right_index: std::collections::BTreeMap<NodeId, usize> =
            right.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut g = Bipartite::new(left.len(), right.len());
        for (li, &u) in left.iter().enumerate() {
            for &v in &self.adj[u] {
                if let Some(&ri) = right_index.get(&v) {
                    g.add_edge(li, ri);
                }
            }
        }
        g
    }

    /// Checks, over every subset with 0 < |S| <= n/2, that the cut matching
    /// reaches at least a quarter of expansion times |S|.
    pub fn check_matching_floor(&self, limit: usize) -> Result<MatchingFloorReport> {
        let limit = limit.min(MAX_EXHAUSTIVE_N);
        if self.n > limit {
            return Err(Error::ExhaustiveLimit { n: self.n, limit });
        }
        let alpha = self.vertex_expansion(limit)?;
        let floor = alpha / Rational::from_integer(4);
        let mut min_ratio: Option<Rational> = None;
        let mut worst_set = Vec::new();
        let mut violations = Vec::new();
        let mut checked = 0u64;
        for s in 1u64..(1u64 << self.n) {
            let size = s.count_ones() as usize;
            if 2 * size > self.n {
                continue;
            }
            checked += 1;
            let set: NodeSet = (0..self.n).filter(|v| s & (1 << v) != 0).collect();
            let nu = self.cut_matching(&set)? as u64;
            let ratio = Rational::new(nu, size as u64);
            if min_ratio.as_ref().is_none_or(|m| ratio < *m) {
                min_ratio = Some(ratio);
                worst_set = set.iter().copied().collect();
            }
            if ratio < floor {
                violations.push(set.iter().copied().collect());
            }
        }
        let min_ratio = min_ratio
            .ok_or_else(|| Error::InvalidParameter("no admissible subset".into()))?;
        Ok(MatchingFloorReport {
            n: self.n,
            alpha,
            quarter_alpha: floor,
            min_ratio,
            worst_set,
            violations,
            subsets_checked: checked,
        })
    }

    /// Plain-text edge list: `n m` header, then one `u v` line per edge.
    pub fn to_edge_list(&self) -> String {
        let edges = self.edges();
        let mut out = format!("{} {}\n", self.n, edges.len());
        for (u, v) in edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    /// Parses the format produced by [`Topology::to_edge_list`], re-running
    /// all structural validation.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedGraphFile("missing header line".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parse_field(parts.next(), "n")?;
        let m: usize = parse_field(parts.next(), "m")?;
        if parts.next().is_some() {
            return Err(Error::MalformedGraphFile("header has trailing fields".into()));
        }
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let mut parts = line.split_whitespace();
            let u: usize = parse_field(parts.next(), "u")?;
            let v: usize = parse_field(parts.next(), "v")?;
            if parts.next().is_some() {
                return Err(Error::MalformedGraphFile(format!(
                    "edge line '{line}' has trailing fields"
                )));
            }
            edges.push((u, v));
        }
        if edges.len() != m {
            return Err(Error::MalformedGraphFile(format!(
                "header declares {m} edges, found {}",
                edges.len()
            )));
        }
        Self::from_edges(n, &edges)
    }
}

fn parse_field<T: FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::MalformedGraphFile(format!("missing field '{name}'")))?
        .parse()
        .map_err(|_| Error::MalformedGraphFile(format!("unparsable field '{name}'")))
}

/// Result of sweeping all small cuts for the matching floor.
#[derive(Clone, Debug, Serialize)]
pub struct MatchingFloorReport {
    pub n: usize,
    pub alpha: Rational,
    pub quarter_alpha: Rational,
    /// Minimum over subsets of cut-matching size divided by |S|.
    pub min_ratio: Rational,
    pub worst_set: Vec<NodeId>,
    /// Subsets where the matching fell below alpha/4 * |S| (expected empty).
    pub violations: Vec<Vec<NodeId>>,
    pub subsets_checked: u64,
}

impl MatchingFloorReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Smallest power of two >= the max degree, floored at 2 so that phase
/// lengths derived from it are always at least one round.
pub fn default_degree_bound(max_degree: usize) -> usize {
    max_degree.next_power_of_two().max(2)
}

/// Closed-form vertex expansion for kinds where it is known exactly; used for
/// sizes beyond the exhaustive limit.
pub fn closed_form_expansion(kind: TopologyKind, n: usize) -> Option<Rational> {
    if n < 2 {
        return None;
    }
    let half = (n / 2) as u64;
    match kind {
        TopologyKind::Line => Some(Rational::new(1, half)),
        TopologyKind::Ring if n >= 3 => Some(Rational::new(2, half)),
        TopologyKind::Clique => Some(Rational::new(n as u64 - half, half)),
        _ => None,
    }
}

/// Generates the topology described by `spec`. Randomized kinds retry with
/// fresh sub-seeds until connected, up to [`GENERATION_ATTEMPTS`] times.
pub fn generate(spec: &TopologySpec) -> Result<Topology> {
    let n = spec.n;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be >= 2, got {n}")));
    }
    match spec.kind {
        TopologyKind::Line => Topology::from_edges(n, &line_edges(n)),
        TopologyKind::Ring => {
            if n < 3 {
                return Err(Error::InvalidParameter("ring needs n >= 3".into()));
            }
            let mut edges = line_edges(n);
            edges.push((n - 1, 0));
            Topology::from_edges(n, &edges)
        }
        TopologyKind::Clique => {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    edges.push((u, v));
                }
            }
            Topology::from_edges(n, &edges)
        }
        TopologyKind::Star => {
            let edges: Vec<_> = (1..n).map(|v| (0, v)).collect();
            Topology::from_edges(n, &edges)
        }
        TopologyKind::Grid => {
            let rows = largest_divisor_at_most_sqrt(n);
            let cols = n / rows;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let u = r * cols + c;
                    if c + 1 < cols {
                        edges.push((u, u + 1));
                    }
                    if r + 1 < rows {
                        edges.push((u, u + cols));
                    }
                }
            }
            Topology::from_edges(n, &edges)
        }
        TopologyKind::BinaryTree => {
            let mut edges = Vec::new();
            for u in 0..n {
                for child in [2 * u + 1, 2 * u + 2] {
                    if child < n {
                        edges.push((u, child));
                    }
                }
            }
            Topology::from_edges(n, &edges)
        }
        TopologyKind::Barbell => {
            if n < 4 {
                return Err(Error::InvalidParameter("barbell needs n >= 4".into()));
            }
            let h = n / 2;
            let mut edges = Vec::new();
            for u in 0..h {
                for v in (u + 1)..h {
                    edges.push((u, v));
                }
            }
            for u in h..n {
                for v in (u + 1)..n {
                    edges.push((u, v));
                }
            }
            edges.push((h - 1, h));
            Topology::from_edges(n, &edges)
        }
        TopologyKind::RandomRegular { degree } => {
            if degree == 0 || degree >= n || !(n * degree).is_multiple_of(2) {
                return Err(Error::InvalidParameter(format!(
                    "random_regular needs 0 < d < n and n*d even, got n={n} d={degree}"
                )));
            }
            retry_generate(spec, |rng| random_regular_edges(n, degree, rng))
        }
        TopologyKind::ErdosRenyi { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "erdos_renyi needs 0 < p <= 1, got {p}"
                )));
            }
            retry_generate(spec, |rng| {
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in (u + 1)..n {
                        if rng.gen_bool(p) {
                            edges.push((u, v));
                        }
                    }
                }
                Some(edges)
            })
        }
    }
}

fn line_edges(n: usize) -> Vec<(NodeId, NodeId)> {
    (0..n - 1).map(|u| (u, u + 1)).collect()
}

fn largest_divisor_at_most_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r > 1 && !n.is_multiple_of(r) {
        r -= 1;
    }
    r.max(1)
}

fn retry_generate<F>(spec: &TopologySpec, mut build: F) -> Result<Topology>
where
    F: FnMut(&mut ChaCha8Rng) -> Option<Vec<(NodeId, NodeId)>>,
{
    for attempt in 0..GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, attempt as u64));
        if let Some(edges) = build(&mut rng) {
            if let Ok(topo) = Topology::from_edges(spec.n, &edges) {
                return Ok(topo);
            }
        }
    }
    Err(Error::GenerationFailed {
        kind: spec.kind.to_string(),
        attempts: GENERATION_ATTEMPTS,
    })
}

/// One attempt at a d-regular simple graph by pairing stubs; None if the
/// pairing produced a self-loop or duplicate edge.
fn random_regular_edges(
    n: usize,
    degree: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<(NodeId, NodeId)>> {
    let mut stubs: Vec<NodeId> = (0..n).flat_map(|u| std::iter::repeat_n(u, degree)).collect();
    // Fisher-Yates; rand's shuffle would work too, this keeps the draw order
    // explicit and stable.
    for i in (1..stubs.len()).rev() {
        let j = rng.gen_range(0..=i);
        stubs.swap(i, j);
    }
    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(stubs.len() / 2);
    for pair in stubs.chunks(2) {
        let (u, v) = (pair[0], pair[1]);
        if u == v || !seen.insert((u.min(v), u.max(v))) {
            return None;
        }
        edges.push((u, v));
    }
    Some(edges)
}
