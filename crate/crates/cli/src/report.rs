//! Acceptance statistics over run reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use d2color::engine::message::{log2_ceil, Budget};
use d2color::engine::transcript::Transcript;
use d2color::field::WalkStep;
use d2color::oracle;
use d2color::run::coloring_from_text;
use d2color::Graph;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::experiment::{Algorithm, ExperimentConfig};
use crate::runner::{read_rows, seed_dir, SeedRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Absolute,
    Statistical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub kind: Kind,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let kind = match self.kind {
            Kind::Absolute => "absolute",
            Kind::Statistical => "statistical",
        };
        write!(f, "criterion {:>2} [{kind}] {}: {verdict} ({})", self.id, self.name, self.detail)
    }
}

impl Criterion {
    pub fn new(id: u8, name: &str, kind: Kind, pass: bool, detail: impl Into<String>) -> Self {
        Criterion { id, name: name.into(), kind, pass, detail: detail.into() }
    }

    /// Passes iff `hits / total >= need`; an empty sample fails.
    pub fn fraction(id: u8, name: &str, hits: usize, total: usize, need: f64) -> Self {
        let frac = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
        let pass = total > 0 && frac >= need;
        Criterion::new(id, name, Kind::Statistical, pass, format!("{hits}/{total} = {:.4}, need >= {need}", frac))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub criteria: Vec<Criterion>,
}

impl Summary {
    /// 0 when everything passes, 2 if an absolute criterion failed, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.criteria.iter().any(|c| !c.pass && c.kind == Kind::Absolute) {
            2
        } else if self.criteria.iter().any(|c| !c.pass) {
            1
        } else {
            0
        }
    }

    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.criteria {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn median(xs: &[u64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_unstable();
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2] as f64
    } else {
        (v[k / 2 - 1] + v[k / 2]) as f64 / 2.0
    }
}

/// Least-squares line `y = a·x + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub a: f64,
    pub b: f64,
}

impl LinearFit {
    pub fn fit(points: &[(f64, f64)]) -> Self {
        let k = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
        let my = points.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let a = if sxx == 0.0 { 0.0 } else { sxy / sxx };
        LinearFit { a, b: my - a * mx }
    }

    pub fn at(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

/// Fits median rounds against `log2 n`; every median must lie within
/// `tol` of its own value from the line.
pub fn round_scaling(id: u8, samples: &BTreeMap<usize, Vec<u64>>, tol: f64) -> Criterion {
    let name = "round scaling";
    if samples.len() < 2 {
        return Criterion::new(id, name, Kind::Statistical, false, "need at least two sizes");
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|(&n, r)| (log2_ceil(n) as f64, median(r))).collect();
    let fit = LinearFit::fit(&pts);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &(x, m) in &pts {
        let rel = (m - fit.at(x)).abs() / m;
        worst = worst.max(rel);
        parts.push(format!("log n={x}: median {m}, fit {:.1}", fit.at(x)));
    }
    let pass = worst <= tol;
    let detail = format!("a={:.2} b={:.2}; {}; worst residual {:.3} vs {tol}", fit.a, fit.b, parts.join(", "), worst);
    Criterion::new(id, name, Kind::Statistical, pass, detail)
}

/// Non-increasing conditional expectations ending below one.
pub fn walk_monotone(walk: &[WalkStep]) -> Result<(), String> {
    for w in walk {
        if w.after > w.before {
            return Err(format!("bit {}: {} -> {}", w.bit, w.before, w.after));
        }
    }
    for pair in walk.windows(2) {
        if pair[1].before != pair[0].after {
            return Err(format!("bit {}: walk is not contiguous", pair[1].bit));
        }
    }
    match walk.last() {
        Some(w) if w.after >= Ratio::from_integer(1) => Err(format!("final value {} is not below 1", w.after)),
        _ => Ok(()),
    }
}

pub fn safety(id: u8, runs: &[&SeedRun]) -> Criterion {
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| !r.safe())
        .map(|r| match (&r.error, &r.validation) {
            (Some(e), _) => format!("{} seed {}: {e}", r.row.algorithm, r.row.seed),
            (None, Some(v)) => format!("{} seed {}: {}", r.row.algorithm, r.row.seed, witness(v)),
            (None, None) => format!("{} seed {}: not validated", r.row.algorithm, r.row.seed),
        })
        .collect();
    let detail = match bad.first() {
        None => format!("{} runs valid", runs.len()),
        Some(w) => format!("{} of {} runs unsafe; first: {w}", bad.len(), runs.len()),
    };
    Criterion::new(id, "safety", Kind::Absolute, bad.is_empty(), detail)
}

fn witness(v: &oracle::ValidationReport) -> String {
    if let Some((a, b, c, d)) = v.violations.first() {
        format!("nodes {a} and {b} share color {c} at distance {d}")
    } else if let Some(x) = v.palette_violations.first() {
        format!("node {x} has a color outside the palette")
    } else {
        "valid".into()
    }
}

pub fn bandwidth(id: u8, runs: &[&SeedRun]) -> Criterion {
    let mut worst = 0u32;
    let mut bad = Vec::new();
    for r in runs {
        worst = worst.max(r.row.max_edge_bits);
        if r.violations > 0 || r.row.max_edge_bits > r.budget_bits || r.error.as_deref().is_some_and(|e| e.contains("budget")) {
            bad.push(format!("{} seed {} n={}", r.row.algorithm, r.row.seed, r.row.n));
        }
    }
    let detail = match bad.first() {
        None => format!("{} runs, no violations, max edge bits {worst}", runs.len()),
        Some(w) => format!("{} runs over budget; first: {w}", bad.len()),
    };
    Criterion::new(id, "bandwidth", Kind::Absolute, bad.is_empty(), detail)
}

/// Per graph, the fraction of seeds whose largest live component after
/// shattering stays within `bound(n)`; the criterion needs `need` on
/// every graph.
pub fn shatter_envelope(id: u8, groups: &BTreeMap<String, Vec<&SeedRun>>, bound: impl Fn(usize) -> usize, need: f64) -> Criterion {
    let mut fails = Vec::new();
    let mut total = 0;
    let mut violations = 0;
    for (name, runs) in groups {
        let within = runs.iter().filter(|r| r.row.max_shatter_component.unwrap_or(0) <= bound(r.row.n)).count();
        total += runs.len();
        violations += runs.len() - within;
        if runs.is_empty() || (within as f64) < need * runs.len() as f64 {
            fails.push(format!("{name}: {within}/{}", runs.len()));
        }
    }
    let detail = if fails.is_empty() {
        format!("{} graphs, {violations} violations in {total} runs", groups.len())
    } else {
        format!("{violations} violations in {total} runs; below {need}: {}", fails.join(", "))
    };
    Criterion::new(id, "shattering envelope", Kind::Statistical, fails.is_empty(), detail)
}

/// A run directory with every number recomputed from its files.
pub struct LoadedRun {
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub runs: Vec<SeedRun>,
    /// Disagreements between the summary and the persisted artifacts.
    pub mismatches: Vec<String>,
}

pub fn load_dir(dir: &Path) -> Result<LoadedRun> {
    let config = ExperimentConfig::from_json(&fs::read_to_string(dir.join("config.json")).context("config.json")?)?;
    let graph = Graph::parse_edge_list(&fs::read_to_string(dir.join("graph.txt")).context("graph.txt")?)?;
    let rows = read_rows(&dir.join("summary.csv"))?;
    let budget = Budget::for_n(graph.n(), config.algo.engine.c_b).bits;
    let mut runs = Vec::new();
    let mut mismatches = Vec::new();
    for row in rows {
        let sd = seed_dir(dir, row.seed);
        let mut run: SeedRun = match fs::read_to_string(sd.join("stats.json")) {
            Ok(s) => serde_json::from_str(&s)?,
            Err(_) => SeedRun {
                row: row.clone(),
                error: None,
                budget_bits: budget,
                violations: 0,
                validation: None,
                live_trajectory: Vec::new(),
                shatter_components: Vec::new(),
                acd_check: None,
                outcome: None,
            },
        };
        run.row = row.clone();
        run.validation = None;
        if let Ok(text) = fs::read_to_string(sd.join("coloring.txt")) {
            match coloring_from_text(&text).map_err(anyhow::Error::msg).and_then(|c| Ok(oracle::validate(&graph, &c)?)) {
                Ok(v) => {
                    if v.ok != row.valid {
                        mismatches.push(format!("seed {}: summary says valid={}, coloring file gives {}", row.seed, row.valid, v.ok));
                    }
                    run.row.valid = v.ok;
                    run.validation = Some(v);
                }
                Err(e) => {
                    run.row.valid = false;
                    run.error.get_or_insert(format!("coloring file: {e}"));
                }
            }
        } else if run.error.is_none() {
            run.row.valid = false;
            run.error = Some("missing coloring file".into());
        }
        if let Ok(text) = fs::read_to_string(sd.join("transcript.jsonl")) {
            let t = Transcript::from_jsonl(&text)?;
            if t.rounds() != row.rounds || t.max_edge_bits() != row.max_edge_bits {
                mismatches.push(format!("seed {}: transcript disagrees with summary", row.seed));
            }
            run.row.rounds = t.rounds();
            run.row.max_edge_bits = t.max_edge_bits();
        }
        runs.push(run);
    }
    Ok(LoadedRun { config, graph, runs, mismatches })
}

/// Criteria that can be computed from persisted run directories: safety,
/// bandwidth, round scaling over log runs of several sizes, and the
/// shattering envelope over sublog runs.
pub fn report_dirs(dirs: &[impl AsRef<Path>]) -> Result<Summary> {
    let loaded = dirs.iter().map(|d| load_dir(d.as_ref())).collect::<Result<Vec<_>>>()?;
    let all: Vec<&SeedRun> = loaded.iter().flat_map(|l| &l.runs).collect();
    let mut summary = Summary::default();
    let mut c1 = safety(1, &all);
    let mismatches: Vec<&String> = loaded.iter().flat_map(|l| &l.mismatches).collect();
    if let Some(m) = mismatches.first() {
        c1.pass = false;
        c1.detail = format!("{}; {} summary mismatches, first: {m}", c1.detail, mismatches.len());
    }
    summary.criteria.push(c1);
    summary.criteria.push(bandwidth(2, &all));
    let mut by_n: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for l in loaded.iter().filter(|l| l.config.algorithm == Algorithm::Log) {
        for r in l.runs.iter().filter(|r| r.safe()) {
            by_n.entry(r.row.n).or_default().push(r.row.rounds);
        }
    }
    if by_n.len() >= 2 {
        summary.criteria.push(round_scaling(3, &by_n, 0.15));
    }
    let sub: Vec<&LoadedRun> = loaded.iter().filter(|l| l.config.algorithm == Algorithm::Sublog).collect();
    if !sub.is_empty() {
        let mut groups: BTreeMap<String, Vec<&SeedRun>> = BTreeMap::new();
        for l in &sub {
            groups.entry(l.config.graph.to_string()).or_default().extend(l.runs.iter());
        }
        let cfgs: BTreeMap<usize, usize> =
            sub.iter().map(|l| (l.graph.n(), l.config.algo.cluster_bound(log2_ceil(l.graph.n())))).collect();
        summary.criteria.push(shatter_envelope(8, &groups, |n| cfgs.get(&n).copied().unwrap_or(0), 0.95));
    }
    Ok(summary)
}
