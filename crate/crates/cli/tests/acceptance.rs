//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use d2color::acd::{decompose, AcdMode};
use d2color::engine::message::log2_ceil;
use d2color::field::{colorspace_reduce, ColorspaceReducer, FieldError};
use d2color::{oracle, Color, Graph};
use d2color_cli::experiment::{Algorithm, ExperimentConfig};
use d2color_cli::gen::{generate, GenSpec};
use d2color_cli::report::{bandwidth, round_scaling, safety, shatter_envelope, walk_monotone, Criterion, Kind, Summary};
use d2color_cli::runner::{run_seed, SeedRun};
use d2color_cli::seeds::bank;
use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAPH_SEED: u64 = 1;

fn gnp(n: usize) -> GenSpec {
    GenSpec::Gnp { n, p: 8.0 / n as f64 }
}

fn suite() -> Vec<GenSpec> {
    let mut v: Vec<GenSpec> = [256, 1024, 4096, 8192].into_iter().map(gnp).collect();
    v.extend([
        GenSpec::Ring { n: 1024 },
        GenSpec::Grid { a: 32, b: 32 },
        GenSpec::Star { delta: 48 },
        GenSpec::CliqueUnion { k: 16, s: 24, bridges: 16 },
    ]);
    v.extend([13, 17, 19].map(|q| GenSpec::Polarity { q }));
    v
}

fn config(spec: &GenSpec, algorithm: Algorithm) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(spec.clone(), algorithm, Vec::new());
    cfg.algo.engine.c_b = 8;
    if matches!(spec, GenSpec::Polarity { .. }) {
        cfg.algo.epsilon = Ratio::new(1, 6);
        cfg.algo.allow_large_epsilon = true;
    }
    cfg
}

#[derive(Default)]
struct Tally {
    hits: usize,
    total: usize,
    first_miss: Option<String>,
}

impl Tally {
    fn add(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.hits += 1;
        } else if self.first_miss.is_none() {
            self.first_miss = Some(what());
        }
    }

    fn criterion(&self, id: u8, name: &str, need: f64) -> Criterion {
        let mut c = Criterion::fraction(id, name, self.hits, self.total, need);
        if let Some(m) = &self.first_miss {
            c.detail = format!("{}; first miss: {m}", c.detail);
        }
        c
    }

    fn absolute(&self, id: u8, name: &str) -> Criterion {
        let pass = self.total > 0 && self.hits == self.total;
        let mut detail = format!("{}/{} checks hold", self.hits, self.total);
        if let Some(m) = &self.first_miss {
            detail = format!("{detail}; first failure: {m}");
        }
        Criterion::new(id, name, Kind::Absolute, pass, detail)
    }
}

#[derive(Default)]
struct Acc {
    runs: Vec<SeedRun>,
    by_family: BTreeMap<String, Vec<usize>>,
    slack: Tally,
    vstar: Tally,
    vstar_worst: BTreeMap<String, (usize, usize)>,
    derand: Tally,
    walks: Tally,
}

/// Sparsity of every node whose ζ reaches the threshold.
fn sparse_nodes(g: &Graph, threshold: i64) -> Vec<(usize, f64)> {
    if (g.delta_sq() as i64) < 2 * threshold {
        return Vec::new();
    }
    (0..g.n())
        .filter_map(|v| {
            let z = g.exact_sparsity(v).expect("node in range").value;
            (z >= Ratio::from_integer(threshold)).then(|| (v, *z.numer() as f64 / *z.denom() as f64))
        })
        .collect()
}

fn check_clusters(acc: &mut Acc, run: &SeedRun, label: &str) {
    let Some(sl) = run.outcome.as_ref().and_then(|o| o.stats.sublog.as_ref()) else { return };
    for class in &sl.classes {
        acc.derand.add(class.non_injective == 0, || format!("{label}: class {} non-injective {}", class.class, class.non_injective));
        for cl in &class.clusters {
            let red = ColorspaceReducer::new(cl.p, cl.d).expect("reported parameters are valid");
            let ok = cl.lists.iter().all(|(_, l, _)| red.injective_on(l, cl.seed));
            acc.derand.add(ok, || format!("{label}: cluster {} seed {} collides", cl.leader, cl.seed));
            if let Err(e) = walk_monotone(&cl.walk) {
                acc.walks.add(false, || format!("{label}: cluster {}: {e}", cl.leader));
            } else {
                acc.walks.add(true, String::new);
            }
        }
    }
}

fn sweep(acc: &mut Acc, spec: &GenSpec, algorithm: Algorithm, seeds: &[u64]) {
    let g = generate(spec, GRAPH_SEED).expect("suite spec generates");
    let cfg = config(spec, algorithm);
    cfg.validate().expect("suite config is valid");
    let label = format!("{spec} {}", algorithm.name());
    let threshold = cfg.algo.c2 as i64 * log2_ceil(g.n()) as i64;
    let sparse = if algorithm == Algorithm::Log { sparse_nodes(&g, threshold) } else { Vec::new() };
    let bound = 4.0 * std::f64::consts::E.powi(3);
    let t = Instant::now();
    let (mut vs_hits, mut vs_total) = (0, 0);
    for &seed in seeds {
        let mut run = run_seed(&g, &cfg, seed);
        if let Some(out) = &run.outcome {
            if algorithm == Algorithm::Log {
                if let Some(ft) = &out.stats.first_trial {
                    for &(v, z) in &sparse {
                        let s = g.slack(v, ft).expect("node in range");
                        acc.slack.add(s as f64 >= z / bound, || format!("{label} seed {seed} node {v}: slack {s}, zeta {z:.1}"));
                    }
                }
                if let Some(left) = out.stats.vstar_live_after_reduce {
                    vs_total += 1;
                    vs_hits += usize::from(left == 0);
                    acc.vstar.add(left == 0, || format!("{label} seed {seed}: {left} V* nodes live"));
                }
            }
        }
        check_clusters(acc, &run, &format!("{label} seed {seed}"));
        run.outcome = None;
        acc.by_family.entry(label.clone()).or_default().push(acc.runs.len());
        acc.runs.push(run);
    }
    if vs_total > 0 {
        acc.vstar_worst.insert(label.clone(), (vs_hits, vs_total));
    }
    eprintln!("{label}: {} seeds in {:.1?}", seeds.len(), t.elapsed());
}

fn scaling() -> Criterion {
    let mut samples: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for k in 10..=13 {
        let spec = gnp(1 << k);
        let g = generate(&spec, GRAPH_SEED).expect("gnp generates");
        let cfg = config(&spec, Algorithm::Log);
        for &s in bank("scaling") {
            let r = run_seed(&g, &cfg, s);
            if r.safe() {
                samples.entry(g.n()).or_default().push(r.row.rounds);
            }
        }
    }
    round_scaling(3, &samples, 0.15)
}

fn acd_checks() -> Criterion {
    let mut exact = Tally::default();
    let specs = [gnp(256), gnp(1024), GenSpec::Ring { n: 1024 }, GenSpec::Grid { a: 32, b: 32 }, GenSpec::Star { delta: 48 },
        GenSpec::CliqueUnion { k: 16, s: 24, bridges: 16 }, GenSpec::Polarity { q: 13 }];
    for spec in &specs {
        let g = generate(spec, GRAPH_SEED).expect("spec generates");
        let algo = config(spec, Algorithm::Log).algo;
        let params = algo.acd_params().expect("valid params");
        for &s in &bank("acdSampled")[..10] {
            let ok = decompose(&g, &params, algo.engine, s, Some(AcdMode::Exact))
                .map_err(|e| e.to_string())
                .and_then(|(acd, _)| oracle::verify_acd(&g, &acd, algo.epsilon).map_err(|e| e.to_string()))
                .map(|rep| (rep.ok(), rep.failed().iter().map(|c| c.property.clone()).collect::<Vec<_>>()));
            match ok {
                Ok((true, _)) => exact.add(true, String::new),
                Ok((false, f)) => exact.add(false, || format!("{spec} seed {s}: {f:?}")),
                Err(e) => exact.add(false, || format!("{spec} seed {s}: {e}")),
            }
        }
    }
    let mut parts = Vec::new();
    let mut sampled_pass = true;
    for q in [13, 17, 19] {
        let spec = GenSpec::Polarity { q };
        let g = generate(&spec, GRAPH_SEED).expect("polarity generates");
        let algo = config(&spec, Algorithm::Log).algo;
        let params = algo.acd_params().expect("valid params");
        let seeds = bank("acdSampled");
        let ok = seeds
            .iter()
            .filter(|&&s| {
                decompose(&g, &params, algo.engine, s, Some(AcdMode::Sampled))
                    .ok()
                    .and_then(|(acd, _)| oracle::verify_acd(&g, &acd, algo.epsilon).ok())
                    .is_some_and(|r| r.ok())
            })
            .count();
        sampled_pass &= ok as f64 >= 0.95 * seeds.len() as f64;
        parts.push(format!("polarity({q}) sampled {ok}/{}", seeds.len()));
    }
    let pass = exact.total > 0 && exact.hits == exact.total && sampled_pass;
    let mut detail = format!("exact {}/{}; {}", exact.hits, exact.total, parts.join(", "));
    if let Some(m) = &exact.first_miss {
        detail = format!("{detail}; first exact failure: {m}");
    }
    Criterion::new(5, "decomposition", Kind::Statistical, pass, detail)
}

const PRIMES: [u64; 10] = [7, 11, 13, 31, 101, 211, 401, 1009, 4099, 65521];

/// Random lists for one instance, shrunk until feasible.
fn random_instance(seed: u64) -> (u64, u32, Vec<Vec<Color>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = PRIMES[rng.gen_range(0..PRIMES.len())];
    let d = rng.gen_range(0..=2u32);
    let range = (p as u128).pow(d + 1).min(1 << 24) as usize;
    let k = rng.gen_range(1..=8);
    let lists = (0..k)
        .map(|_| {
            let size = rng.gen_range(1..=6usize).min(range);
            sample(&mut rng, range, size).into_iter().map(|c| c as Color).collect()
        })
        .collect();
    (p, d, lists)
}

fn random_derandomization(acc: &mut Acc) -> usize {
    let mut infeasible = 0;
    for &s in bank("derandomization") {
        let (p, d, mut lists) = random_instance(s);
        let red = ColorspaceReducer::new(p, d).expect("prime field");
        let (e, walk) = loop {
            match colorspace_reduce(&red, &lists) {
                Ok(r) => break r,
                Err(FieldError::Infeasible { .. }) => {
                    infeasible += 1;
                    let big = (0..lists.len()).max_by_key(|&i| lists[i].len()).expect("nonempty");
                    lists[big].pop();
                }
                Err(e) => panic!("instance {s}: {e}"),
            }
        };
        let label = || format!("instance {s} (p={p}, d={d}, lists {lists:?}) seed {e}");
        let injective = lists.iter().all(|l| red.injective_on(l, e));
        let good = oracle::brute_force_good_seeds(&lists, p, d).expect("small field");
        acc.derand.add(injective && good.binary_search(&e).is_ok(), label);
        match walk_monotone(&walk) {
            Ok(()) => acc.walks.add(true, String::new),
            Err(w) => acc.walks.add(false, || format!("instance {s}: {w}")),
        }
    }
    infeasible
}

fn determinism() -> Criterion {
    let specs = [gnp(256), gnp(1024), GenSpec::Ring { n: 1024 }, GenSpec::Grid { a: 32, b: 32 }, GenSpec::Star { delta: 48 },
        GenSpec::CliqueUnion { k: 16, s: 24, bridges: 16 }, GenSpec::Polarity { q: 13 }];
    let mut t = Tally::default();
    for (i, &seed) in bank("determinism").iter().enumerate() {
        let spec = &specs[i % specs.len()];
        let algorithm = if i % 2 == 0 { Algorithm::Log } else { Algorithm::Sublog };
        let g = generate(spec, GRAPH_SEED).expect("spec generates");
        let cfg = config(spec, algorithm);
        let art = |r: SeedRun| r.outcome.map(|o| (o.transcript.to_jsonl(), o.coloring_text()));
        let a = art(run_seed(&g, &cfg, seed));
        let b = art(run_seed(&g, &cfg, seed));
        t.add(a.is_some() && a == b, || format!("{spec} {} seed {seed}", algorithm.name()));
    }
    t.absolute(10, "determinism")
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut acc = Acc::default();
    let seeds = bank("safety");
    for spec in suite() {
        for algorithm in [Algorithm::Log, Algorithm::Sublog] {
            sweep(&mut acc, &spec, algorithm, seeds);
        }
    }

    // Post-shattering forced on every live node, so cluster coloring runs.
    let mut forced = Tally::default();
    let spec = gnp(256);
    let g = generate(&spec, GRAPH_SEED).expect("gnp generates");
    let mut cfg = config(&spec, Algorithm::Sublog);
    (cfg.algo.shatter_iters, cfg.algo.reduce_log_delta_mult, cfg.algo.multitrial_mult) = (0, 0, 0);
    for &s in &seeds[..20] {
        let r = run_seed(&g, &cfg, s);
        forced.add(r.safe(), || format!("forced post-shattering seed {s}: {:?}", r.error));
        check_clusters(&mut acc, &r, &format!("forced post-shattering seed {s}"));
    }
    let infeasible = random_derandomization(&mut acc);

    let all: Vec<&SeedRun> = acc.runs.iter().collect();
    let mut summary = Summary::default();
    summary.criteria.push(safety(1, &all));
    summary.criteria.push(bandwidth(2, &all));
    summary.criteria.push(scaling());
    summary.criteria.push(acc.slack.criterion(4, "slack from sparsity", 0.99));
    summary.criteria.push(acd_checks());
    let mut c6 = acc.vstar.criterion(6, "sparse-node completion", 0.99);
    if let Some((name, (h, t))) = acc.vstar_worst.iter().min_by(|a, b| (a.1 .0 * b.1 .1).cmp(&(b.1 .0 * a.1 .1))) {
        c6.detail = format!("{}; worst family {name}: {h}/{t}", c6.detail);
    }
    summary.criteria.push(c6);
    let mut c7 = acc.derand.absolute(7, "derandomization");
    c7.detail = format!("{}; {infeasible} infeasible lists shrunk", c7.detail);
    if forced.hits != forced.total {
        c7.pass = false;
        c7.detail = format!("{}; forced post-shattering unsafe: {}", c7.detail, forced.first_miss.clone().unwrap_or_default());
    }
    summary.criteria.push(c7);
    let mut groups: BTreeMap<String, Vec<&SeedRun>> = BTreeMap::new();
    let mut bounds: BTreeMap<usize, usize> = BTreeMap::new();
    for (label, idx) in acc.by_family.iter().filter(|(l, _)| l.ends_with("sublog")) {
        groups.insert(label.clone(), idx.iter().map(|&i| &acc.runs[i]).collect());
        for &i in idx {
            let n = acc.runs[i].row.n;
            bounds.insert(n, cfg.algo.cluster_bound(log2_ceil(n)));
        }
    }
    summary.criteria.push(shatter_envelope(8, &groups, |n| bounds[&n], 0.95));
    summary.criteria.push(acc.walks.absolute(9, "walk monotonicity"));
    summary.criteria.push(determinism());

    print!("{summary}");
    println!("acceptance: {} in {:.1?}", if summary.all_pass() { "all criteria pass" } else { "FAILED" }, start.elapsed());
    if summary.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
