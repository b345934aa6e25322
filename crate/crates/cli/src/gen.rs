//! Deterministic graph generators.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use d2color::field::is_prime;
use d2color::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "camelCase")]
pub enum GenSpec {
    Gnp { n: usize, p: f64 },
    Ring { n: usize },
    Grid { a: usize, b: usize },
    Star { delta: usize },
    CliqueUnion { k: usize, s: usize, bridges: usize },
    Polarity { q: u64 },
    Hamming { m: u32 },
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenSpec::Gnp { n, p } => write!(f, "gnp({n},{p})"),
            GenSpec::Ring { n } => write!(f, "ring({n})"),
            GenSpec::Grid { a, b } => write!(f, "grid({a},{b})"),
            GenSpec::Star { delta } => write!(f, "star({delta})"),
            GenSpec::CliqueUnion { k, s, bridges } => write!(f, "cliqueUnion({k},{s},{bridges})"),
            GenSpec::Polarity { q } => write!(f, "polarity({q})"),
            GenSpec::Hamming { m } => write!(f, "hamming({m})"),
        }
    }
}

/// Parses `family(arg,...)`; `gnp` accepts `a/b` for `p`.
impl FromStr for GenSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once('(').context("expected family(args)")?;
        let args: Vec<&str> = rest.strip_suffix(')').context("missing ')'")?.split(',').map(str::trim).collect();
        let int = |i: usize| -> Result<u64> {
            args.get(i).context("missing argument")?.parse::<u64>().with_context(|| format!("bad argument {}", i + 1))
        };
        let want = |k: usize| -> Result<()> {
            if args.len() != k {
                bail!("{name} takes {k} arguments");
            }
            Ok(())
        };
        Ok(match name {
            "gnp" => {
                want(2)?;
                let p = match args[1].split_once('/') {
                    Some((a, b)) => a.parse::<f64>()? / b.parse::<f64>()?,
                    None => args[1].parse::<f64>()?,
                };
                GenSpec::Gnp { n: int(0)? as usize, p }
            }
            "ring" => {
                want(1)?;
                GenSpec::Ring { n: int(0)? as usize }
            }
            "grid" => {
                want(2)?;
                GenSpec::Grid { a: int(0)? as usize, b: int(1)? as usize }
            }
            "star" => {
                want(1)?;
                GenSpec::Star { delta: int(0)? as usize }
            }
            "cliqueUnion" => {
                want(3)?;
                GenSpec::CliqueUnion { k: int(0)? as usize, s: int(1)? as usize, bridges: int(2)? as usize }
            }
            "polarity" => {
                want(1)?;
                GenSpec::Polarity { q: int(0)? }
            }
            "hamming" => {
                want(1)?;
                GenSpec::Hamming { m: int(0)? as u32 }
            }
            other => bail!("unknown family {other}"),
        })
    }
}

pub fn generate(spec: &GenSpec, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = match *spec {
        GenSpec::Gnp { n, p } => {
            if !(0.0..=1.0).contains(&p) {
                bail!("p = {p} outside [0, 1]");
            }
            Graph::new(n, gnp_edges(n, p, &mut rng))?
        }
        GenSpec::Ring { n } => {
            if n < 3 {
                bail!("ring needs n >= 3");
            }
            Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))?
        }
        GenSpec::Grid { a, b } => {
            let mut e = Vec::new();
            for i in 0..a {
                for j in 0..b {
                    let v = i * b + j;
                    if j + 1 < b {
                        e.push((v, v + 1));
                    }
                    if i + 1 < a {
                        e.push((v, v + b));
                    }
                }
            }
            Graph::new(a * b, e)?
        }
        GenSpec::Star { delta } => Graph::new(delta + 1, (1..=delta).map(|i| (0, i)))?,
        GenSpec::CliqueUnion { k, s, bridges } => {
            let mut e = Vec::new();
            for c in 0..k {
                for i in 0..s {
                    for j in i + 1..s {
                        e.push((c * s + i, c * s + j));
                    }
                }
            }
            if k > 1 && s > 0 {
                for c in 0..k {
                    let d = (c + 1) % k;
                    if d == c || (k == 2 && c == 1) {
                        continue;
                    }
                    for _ in 0..bridges {
                        e.push((c * s + rng.gen_range(0..s), d * s + rng.gen_range(0..s)));
                    }
                }
            }
            Graph::from_edges_dedup(k * s, e)?
        }
        GenSpec::Polarity { q } => polarity(q)?,
        GenSpec::Hamming { m } => {
            if m > 20 {
                bail!("hamming dimension {m} too large");
            }
            let n = 1usize << m;
            let e = (0..n).flat_map(|v| (0..m).map(move |b| (v, v ^ (1 << b)))).filter(|&(u, v)| u < v);
            Graph::new(n, e.collect::<Vec<_>>())?
        }
    };
    Ok(g)
}

/// Edges of `G(n, p)` by geometric skipping over the pair sequence.
fn gnp_edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    if p <= 0.0 || n < 2 {
        return e;
    }
    if p >= 1.0 {
        for i in 0..n {
            for j in i + 1..n {
                e.push((i, j));
            }
        }
        return e;
    }
    let lq = (1.0 - p).ln();
    let (mut v, mut w) = (1usize, -1i64);
    while v < n {
        let r: f64 = rng.gen::<f64>();
        w += 1 + ((1.0 - r).ln() / lq).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            e.push((w as usize, v));
        }
    }
    e
}

/// Polarity graph of the projective plane over `F_q`: points are
/// normalized nonzero triples, adjacent when orthogonal and distinct.
fn polarity(q: u64) -> Result<Graph> {
    if !is_prime(q) {
        bail!("polarity(q) needs prime q, got {q}");
    }
    let mut pts: Vec<[u64; 3]> = Vec::new();
    for x in 0..q {
        for y in 0..q {
            pts.push([1, x, y]);
        }
    }
    for y in 0..q {
        pts.push([0, 1, y]);
    }
    pts.push([0, 0, 1]);
    let n = pts.len();
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (pts[i], pts[j]);
            if (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) % q == 0 {
                e.push((i, j));
            }
        }
    }
    Ok(Graph::new(n, e)?)
}
