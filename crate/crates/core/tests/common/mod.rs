#![allow(dead_code)]

use d2color::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn path(n: usize) -> Graph {
    Graph::new(n, (1..n).map(|i| (i - 1, i))).unwrap()
}

pub fn cycle(n: usize) -> Graph {
    Graph::new(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
}

pub fn star(leaves: usize) -> Graph {
    Graph::new(leaves + 1, (1..=leaves).map(|i| (0, i))).unwrap()
}

/// Erdős–Rényi by pair sweep; fine for the few hundred nodes used here.
pub fn gnp(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                e.push((u, v));
            }
        }
    }
    Graph::new(n, e).unwrap()
}

/// Polarity graph of PG(2, q) without loops.
pub fn polarity(q: u64) -> Graph {
    let mut pts = Vec::new();
    for x in 0..q {
        for y in 0..q {
            pts.push([1, x, y]);
        }
    }
    for y in 0..q {
        pts.push([0, 1, y]);
    }
    pts.push([0, 0, 1]);
    let mut e = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d: u64 = (0..3).map(|k| pts[i][k] * pts[j][k]).sum();
            if d % q == 0 {
                e.push((i, j));
            }
        }
    }
    Graph::new(pts.len(), e).unwrap()
}
