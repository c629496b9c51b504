//! Bipartite graphs and maximum matching (Hopcroft-Karp).

use serde::{Deserialize, Serialize};

const NONE: usize = usize::MAX;

/// Bipartite graph with `left` senders and `right` receivers. Edges are kept
/// per left node, sorted, to make algorithms over it deterministic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bipartite {
    pub left: usize,
    pub right: usize,
    adj: Vec<Vec<usize>>,
}

impl Bipartite {
    pub fn new(left: usize, right: usize) -> Self {
        Self { left, right, adj: vec![Vec::new(); left] }
    }

    /// Adds an edge between left node `l` and right node `r`. Duplicate edges
    /// are ignored.
    pub fn add_edge(&mut self, l: usize, r: usize) {
        assert!(l < self.left && r < self.right, "edge ({l},{r}) out of range");
        if let Err(pos) = self.adj[l].binary_search(&r) {
            self.adj[l].insert(pos, r);
        }
    }

    pub fn neighbors(&self, l: usize) -> &[usize] {
        &self.adj[l]
    }

    pub fn degree(&self, l: usize) -> usize {
        self.adj[l].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }
}

/// A matching, as (left, right) pairs sorted by left node.
#[derive(Clone, Debug, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn size(&self) -> usize {
        self.pairs.len()
    }
}

/// Maximum matching via Hopcroft-Karp: repeated BFS layering plus DFS along
/// shortest augmenting paths.
pub fn maximum_matching(g: &Bipartite) -> Matching {
    let mut match_l = vec![NONE; g.left];
    let mut match_r = vec![NONE; g.right];
    let mut dist = vec![usize::MAX; g.left];
    let mut queue = Vec::with_capacity(g.left);

    loop {
        // BFS from free left nodes to build the layer structure.
        queue.clear();
        for l in 0..g.left {
            if match_l[l] == NONE {
                dist[l] = 0;
                queue.push(l);
            } else {
                dist[l] = usize::MAX;
            }
        }
        let mut found_free = false;
        let mut head = 0;
        while head < queue.len() {
            let l = queue[head];
            head += 1;
            for &r in g.neighbors(l) {
                match match_r[r] {
                    NONE => found_free = true,
                    l2 => {
                        if dist[l2] == usize::MAX {
                            dist[l2] = dist[l] + 1;
                            queue.push(l2);
                        }
                    }
                }
            }
        }
        if !found_free {
            break;
        }
        // Augment along disjoint shortest paths.
        for l in 0..g.left {
            if match_l[l] == NONE {
                augment(g, l, &mut match_l, &mut match_r, &mut dist);
            }
        }
    }

    let pairs = match_l
        .iter()
        .enumerate()
        .filter(|(_, &r)| r != NONE)
        .map(|(l, &r)| (l, r))
        .collect();
    Matching { pairs }
}

fn augment(
    g: &Bipartite,
    l: usize,
    match_l: &mut [usize],
    match_r: &mut [usize],
    dist: &mut [usize],
) -> bool {
    for &r in g.neighbors(l) {
        let l2 = match_r[r];
        let advances = l2 == NONE
            || (dist[l2] == dist[l].wrapping_add(1) && augment(g, l2, match_l, match_r, dist));
        if advances {
            match_l[l] = r;
            match_r[r] = l;
            return true;
        }
    }
    // Dead end: prune this node from the current layer structure.
    dist[l] = usize::MAX;
    false
}

/// Convenience wrapper returning only the matching size.
pub fn maximum_matching_size(g: &Bipartite) -> usize {
    maximum_matching(g).size()
}
