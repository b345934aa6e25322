//! The logarithmic-round pipeline: decomposition, uninformed trials,
//! Reduce-Phase iterations, palette learning and informed finishing.

pub mod learn;
pub mod reduce;

use rand::Rng;

use crate::acd::{build_acd, AcdResult};
use crate::config::AlgoConfig;
use crate::engine::mailbox::Record;
use crate::engine::EngineError;
use crate::graph::Graph;
use crate::run::{D2Error, RunOutcome, RunStats};
use crate::state::{kind, Sim};
use crate::trial::{try_colors, Picks};

pub use learn::{learn_palette, LearnOptions, LearnStats};
pub use reduce::{reduce_phase, reduce_phase_with, ProposalEvent, ProposalKind, ReduceOpts};

/// Whether `Δ²` is small enough to skip the decomposition.
pub fn flood_branch(g: &Graph, c2: u32) -> bool {
    let l = crate::engine::message::log2_ceil(g.n()) as u64;
    (g.delta_sq() as u64) < c2 as u64 * l
}

/// `iters` rounds of uniform trials over the whole palette. Records the
/// coloring after the first one.
pub fn oneshot(sim: &mut Sim<'_>, iters: u64, stats: &mut RunStats) -> Result<(), EngineError> {
    let ds = sim.delta_sq;
    for i in 0..iters {
        if sim.live_count() == 0 {
            break;
        }
        try_colors(sim, |_, _, rng| {
            let mut p = Picks::new();
            p.push(rng.gen_range(0..=ds));
            p
        })?;
        if i == 0 {
            stats.first_trial = Some(sim.coloring());
        }
    }
    Ok(())
}

/// Informed trials from learned palettes until no live node remains.
/// Nodes with a notification backlog raise BUSY and their neighbors stay
/// quiet for the next trial.
pub fn finish(sim: &mut Sim<'_>) -> Result<usize, EngineError> {
    let ds = sim.delta_sq;
    sim.local(|_, s, _, _| {
        s.forward_notes = true;
        for nb in s.nbr.iter_mut() {
            nb.busy = false;
        }
    });
    let mut iters = 0;
    while sim.live_count() > 0 {
        iters += 1;
        sim.local(|_, s, _, _| {
            s.trial.quiet = s.nbr.iter().any(|nb| nb.busy);
            for nb in s.nbr.iter_mut() {
                nb.busy = false;
            }
            if s.mail.has_background() {
                s.mail.push_all(&Record::new(kind::BUSY));
            }
        });
        try_colors(sim, |_, s, rng| {
            let mut p = Picks::new();
            if s.trial.quiet || !rng.gen_bool(0.5) {
                return p;
            }
            let pal = s.palette.get_or_insert_with(|| (0..=ds).collect());
            if !pal.is_empty() {
                p.push(pal[rng.gen_range(0..pal.len())]);
            }
            p
        })?;
    }
    Ok(iters)
}

fn note_live(sim: &Sim<'_>, stats: &mut RunStats) {
    stats.live_trajectory.push((sim.net.phase().to_string(), sim.live_count()));
}

/// Colors `g` with `Δ²+1` colors.
pub fn d2_color(g: &Graph, cfg: &AlgoConfig, seed: u64) -> Result<RunOutcome, D2Error> {
    cfg.validate()?;
    let params = cfg.acd_params()?;
    let mut sim = Sim::new(g, cfg.engine, seed, cfg.eta);
    let mut stats = RunStats::default();
    let mut acd: Option<AcdResult> = None;
    let l = sim.log_n as u64;
    if flood_branch(g, cfg.c2) {
        stats.branch = "flood".into();
        sim.phase("LEARN");
        sim.hello()?;
        let ds = sim.delta_sq;
        sim.local(|_, s, _, _| {
            s.forward_notes = true;
            if s.live() {
                s.palette = Some((0..=ds).collect());
            }
        });
        note_live(&sim, &mut stats);
    } else {
        stats.branch = "acd".into();
        sim.phase("ACD");
        sim.hello()?;
        acd = Some(build_acd(&mut sim, &params, None)?);
        note_live(&sim, &mut stats);
        sim.phase("ONESHOT");
        oneshot(&mut sim, cfg.oneshot_mult as u64 * l, &mut stats)?;
        stats.vstar_live_after_oneshot = Some(sim.st.iter().filter(|s| s.live() && !s.core).count());
        note_live(&sim, &mut stats);
        reduce_iterations(&mut sim, cfg.reduce_mult as u64 * l, &mut stats)?;
        stats.vstar_live_after_reduce = Some(sim.st.iter().filter(|s| s.live() && !s.core).count());
        sim.phase("LEARN");
        let opts = LearnOptions::new(g.max_degree(), sim.log_n, cfg.learn_fanout, cfg.learn_walks, cfg.ideal_learn);
        stats.learn = Some(learn_palette(&mut sim, &opts, |_| None)?);
        note_live(&sim, &mut stats);
    }
    sim.phase("FINISH");
    stats.finish_iterations = finish(&mut sim)?;
    note_live(&sim, &mut stats);
    Ok(conclude(sim, acd, stats))
}

/// Runs Reduce-Phase iterations, stopping early once nothing is live.
pub fn reduce_iterations(sim: &mut Sim<'_>, iters: u64, stats: &mut RunStats) -> Result<(), EngineError> {
    for i in 0..iters {
        if sim.live_count() == 0 {
            break;
        }
        sim.phase(format!("REDUCE({i})"));
        reduce_phase(sim, &mut stats.proposals)?;
    }
    note_live(sim, stats);
    Ok(())
}

pub(crate) fn conclude(sim: Sim<'_>, acd: Option<AcdResult>, stats: RunStats) -> RunOutcome {
    let coloring = sim.st.iter().map(|s| s.color.expect("every node colored")).collect();
    RunOutcome { coloring, transcript: sim.net.into_transcript(), acd, stats }
}
