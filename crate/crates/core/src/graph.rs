//! Undirected simple graphs and exact distance-2 combinatorics.

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::Color;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("node {node} out of range (n = {n})")]
    OutOfRange { node: usize, n: usize },
    #[error("two-path count requested for u = v = {0}")]
    SameNode(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Immutable graph in compressed adjacency form. Neighbor lists are sorted,
/// and `rev[i]` is the port under which the owner of slot `i` appears at the
/// other endpoint.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    adj: Vec<u32>,
    rev: Vec<u32>,
    delta: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, m={}, delta={})", self.n, self.m(), self.delta)
    }
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::OutOfRange { node: u.max(v), n });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            lists[u].push(v as u32);
            lists[v].push(u as u32);
        }
        for (u, l) in lists.iter_mut().enumerate() {
            l.sort_unstable();
            if let Some(w) = l.windows(2).find(|w| w[0] == w[1]) {
                let v = w[0] as usize;
                return Err(GraphError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        Ok(Self::from_sorted_lists(lists))
    }

    /// Builds a graph after dropping self-loops and duplicate edges.
    pub fn from_edges_dedup(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::OutOfRange { node: u.max(v), n });
            }
            if u != v {
                lists[u].push(v as u32);
                lists[v].push(u as u32);
            }
        }
        for l in lists.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Self::from_sorted_lists(lists))
    }

    fn from_sorted_lists(lists: Vec<Vec<u32>>) -> Self {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for l in &lists {
            offsets.push(offsets.last().unwrap() + l.len());
        }
        let adj: Vec<u32> = lists.into_iter().flatten().collect();
        let mut rev = vec![0u32; adj.len()];
        for u in 0..n {
            for i in offsets[u]..offsets[u + 1] {
                let v = adj[i] as usize;
                let nb = &adj[offsets[v]..offsets[v + 1]];
                rev[i] = nb.binary_search(&(u as u32)).expect("symmetric adjacency") as u32;
            }
        }
        let delta = (0..n).map(|u| offsets[u + 1] - offsets[u]).max().unwrap_or(0);
        Graph { n, offsets, adj, rev, delta }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.adj.len() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.delta
    }

    /// Δ², the top color of the palette {0..Δ²}.
    pub fn delta_sq(&self) -> usize {
        self.delta * self.delta
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    pub fn port_of(&self, u: usize, v: usize) -> Option<usize> {
        self.neighbors(u).binary_search(&(v as u32)).ok()
    }

    /// Port of `u` in the neighbor list of `neighbors(u)[port]`.
    pub fn reverse_port(&self, u: usize, port: usize) -> usize {
        self.rev[self.offsets[u] + port] as usize
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u).iter().filter(move |&&v| (v as usize) > u).map(move |&v| (u, v as usize))
        })
    }

    fn check(&self, v: usize) -> Result<(), GraphError> {
        if v < self.n {
            Ok(())
        } else {
            Err(GraphError::OutOfRange { node: v, n: self.n })
        }
    }

    /// Nodes at distance 1 or 2 from `v`, sorted.
    pub fn d2_neighbors(&self, v: usize) -> Result<Vec<usize>, GraphError> {
        self.check(v)?;
        let mut out: Vec<usize> = Vec::new();
        for &x in self.neighbors(v) {
            out.push(x as usize);
            out.extend(self.neighbors(x as usize).iter().map(|&y| y as usize));
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&u| u != v);
        Ok(out)
    }

    /// |N(u) ∩ N(v)|.
    pub fn two_path_count(&self, u: usize, v: usize) -> Result<usize, GraphError> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Err(GraphError::SameNode(u));
        }
        Ok(sorted_intersection_len(self.neighbors(u), self.neighbors(v)))
    }

    /// Number of pairs of d2-neighbors of `v` that are themselves within
    /// distance 2, i.e. |E(G²[N_{G²}(v)])|.
    pub fn d2_neighborhood_edges(&self, v: usize) -> Result<usize, GraphError> {
        let nb = self.d2_neighbors(v)?;
        let mut count = 0usize;
        for (i, &a) in nb.iter().enumerate() {
            let da = self.d2_neighbors(a)?;
            count += nb[i + 1..].iter().filter(|b| da.binary_search(b).is_ok()).count();
        }
        Ok(count)
    }

    /// ζ = (C(Δ²,2) − |E(G²[v])|) / Δ².
    pub fn exact_sparsity(&self, v: usize) -> Result<Sparsity, GraphError> {
        let e = self.d2_neighborhood_edges(v)?;
        Ok(Sparsity::from_edge_count(self.delta_sq(), e))
    }

    /// (Δ²+1) − #distinct colors among d2-neighbors − #live d2-neighbors.
    pub fn slack(&self, v: usize, coloring: &[Option<Color>]) -> Result<i64, GraphError> {
        let nb = self.d2_neighbors(v)?;
        let mut colors: Vec<Color> = nb.iter().filter_map(|&u| coloring[u]).collect();
        colors.sort_unstable();
        colors.dedup();
        let live = nb.iter().filter(|&&u| coloring[u].is_none()).count();
        Ok(self.delta_sq() as i64 + 1 - colors.len() as i64 - live as i64)
    }

    /// Parses the text edge-list format: first line "n m", then m lines "u v".
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| GraphError::Parse("missing header".into()))?;
        let mut it = header.split_whitespace();
        let n: usize = parse_num(it.next())?;
        let m: usize = parse_num(it.next())?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let mut it = line.split_whitespace();
            edges.push((parse_num(it.next())?, parse_num(it.next())?));
        }
        if edges.len() != m {
            return Err(GraphError::Parse(format!("header says {m} edges, found {}", edges.len())));
        }
        Graph::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.m());
        for (u, v) in self.edges() {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }

    /// Eccentricity-based diameter; `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.n {
            let dist = self.bfs(s);
            for d in dist {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    pub fn bfs(&self, s: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[s] = Some(0);
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in self.neighbors(u) {
                if dist[v as usize].is_none() {
                    dist[v as usize] = Some(du + 1);
                    queue.push_back(v as usize);
                }
            }
        }
        dist
    }
}

fn parse_num(tok: Option<&str>) -> Result<usize, GraphError> {
    let tok = tok.ok_or_else(|| GraphError::Parse("missing number".into()))?;
    tok.parse().map_err(|_| GraphError::Parse(format!("bad number {tok:?}")))
}

pub(crate) fn sorted_intersection_len<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Exact sparsity ζ, kept as a rational with denominator Δ².
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sparsity {
    pub value: Ratio<i64>,
}

impl Sparsity {
    pub fn from_edge_count(delta_sq: usize, edges: usize) -> Self {
        let ds = delta_sq as i64;
        if ds == 0 {
            return Sparsity { value: Ratio::from_integer(0) };
        }
        let full = ds * (ds - 1) / 2;
        Sparsity { value: Ratio::new(full - edges as i64, ds) }
    }

    pub fn to_f64(self) -> f64 {
        *self.value.numer() as f64 / *self.value.denom() as f64
    }
}

/// The square graph G² with 2-path multiplicities, computed eagerly.
#[derive(Clone, Debug)]
pub struct SquareView {
    d2: Vec<Vec<u32>>,
    mult: Vec<Vec<(u32, u32)>>,
}

impl SquareView {
    pub fn new(g: &Graph) -> Self {
        let n = g.n();
        let mut d2 = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n);
        let mut counts: Vec<u32> = vec![0; n];
        let mut touched: Vec<u32> = Vec::new();
        for v in 0..n {
            for &x in g.neighbors(v) {
                for &y in g.neighbors(x as usize) {
                    if y as usize != v {
                        if counts[y as usize] == 0 {
                            touched.push(y);
                        }
                        counts[y as usize] += 1;
                    }
                }
            }
            touched.sort_unstable();
            let m: Vec<(u32, u32)> = touched.iter().map(|&y| (y, counts[y as usize])).collect();
            let mut set: Vec<u32> = touched.clone();
            set.extend_from_slice(g.neighbors(v));
            set.sort_unstable();
            set.dedup();
            for &y in &touched {
                counts[y as usize] = 0;
            }
            touched.clear();
            d2.push(set);
            mult.push(m);
        }
        SquareView { d2, mult }
    }

    pub fn d2_adjacency(&self, v: usize) -> &[u32] {
        &self.d2[v]
    }

    pub fn d2_degree(&self, v: usize) -> usize {
        self.d2[v].len()
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.d2[u].binary_search(&(v as u32)).is_ok()
    }

    /// Number of length-2 paths between `u` and `v` (u ≠ v).
    pub fn path_multiplicity(&self, u: usize, v: usize) -> usize {
        match self.mult[u].binary_search_by_key(&(v as u32), |p| p.0) {
            Ok(i) => self.mult[u][i].1 as usize,
            Err(_) => 0,
        }
    }

    /// |N_{G²}(u) ∩ N_{G²}(v)|.
    pub fn common_d2(&self, u: usize, v: usize) -> usize {
        sorted_intersection_len(&self.d2[u], &self.d2[v])
    }

    pub fn sparsity(&self, delta_sq: usize, v: usize) -> Sparsity {
        let nb = &self.d2[v];
        let mut e = 0usize;
        for (i, &a) in nb.iter().enumerate() {
            e += sorted_intersection_len(&nb[i + 1..], &self.d2[a as usize]);
        }
        Sparsity::from_edge_count(delta_sq, e)
    }
}
