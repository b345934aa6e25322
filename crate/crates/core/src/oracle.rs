//! Sequential full-information reference computations.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acd::AcdResult;
use crate::field::{ColorspaceReducer, FieldError, BRUTE_FORCE_LIMIT};
use crate::graph::{sorted_intersection_len, Graph, SquareView};
use crate::Color;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("coloring has {got} entries for {n} nodes")]
    WrongLength { got: usize, n: usize },
    #[error("node {0} is uncolored")]
    Uncolored(usize),
    #[error("node {0} is already colored")]
    AlreadyColored(usize),
    #[error("order is not a permutation")]
    BadOrder,
    #[error("malformed decomposition: {0}")]
    Malformed(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    /// `(u, v, color, distance)` with `u < v`.
    pub violations: Vec<(usize, usize, Color, u8)>,
    pub palette_violations: Vec<usize>,
}

/// Checks a total coloring.
pub fn validate(g: &Graph, coloring: &[Color]) -> Result<ValidationReport, OracleError> {
    let opt: Vec<Option<Color>> = coloring.iter().copied().map(Some).collect();
    if coloring.len() != g.n() {
        return Err(OracleError::WrongLength { got: coloring.len(), n: g.n() });
    }
    partial_validate(g, &opt)
}

/// Checks a coloring with live (`None`) nodes; only colored pairs conflict.
pub fn partial_validate(g: &Graph, coloring: &[Option<Color>]) -> Result<ValidationReport, OracleError> {
    if coloring.len() != g.n() {
        return Err(OracleError::WrongLength { got: coloring.len(), n: g.n() });
    }
    let top = g.delta_sq() as Color;
    let mut rep = ValidationReport::default();
    for v in 0..g.n() {
        let Some(cv) = coloring[v] else { continue };
        if cv > top {
            rep.palette_violations.push(v);
        }
        let mut seen: Vec<usize> = Vec::new();
        for &w in g.neighbors(v) {
            let w = w as usize;
            if w > v && coloring[w] == Some(cv) {
                rep.violations.push((v, w, cv, 1));
            }
            for &x in g.neighbors(w) {
                let x = x as usize;
                if x > v && !g.has_edge(v, x) && coloring[x] == Some(cv) {
                    seen.push(x);
                }
            }
        }
        seen.sort_unstable();
        seen.dedup();
        rep.violations.extend(seen.into_iter().map(|x| (v, x, cv, 2)));
    }
    rep.ok = rep.violations.is_empty() && rep.palette_violations.is_empty();
    Ok(rep)
}

/// Smallest free color for each node in `order`.
pub fn greedy_d2(g: &Graph, order: &[usize]) -> Result<Vec<Color>, OracleError> {
    let mut seen = vec![false; g.n()];
    if order.len() != g.n() || order.iter().any(|&v| v >= g.n() || std::mem::replace(&mut seen[v], true)) {
        return Err(OracleError::BadOrder);
    }
    let mut col: Vec<Option<Color>> = vec![None; g.n()];
    let mut used = vec![usize::MAX; g.delta_sq() + 2];
    for &v in order {
        for u in g.d2_neighbors(v).expect("in range") {
            if let Some(c) = col[u] {
                used[c as usize] = v;
            }
        }
        let c = (0..used.len()).find(|&c| used[c] != v).expect("a free color exists");
        col[v] = Some(c as Color);
    }
    Ok(col.into_iter().map(|c| c.expect("all colored")).collect())
}

/// `{0..Δ²}` minus the colors of `v`'s colored d2-neighbors.
pub fn exact_palette(g: &Graph, coloring: &[Option<Color>], v: usize) -> Result<Vec<Color>, OracleError> {
    if coloring[v].is_some() {
        return Err(OracleError::AlreadyColored(v));
    }
    let mut taken = vec![false; g.delta_sq() + 1];
    for u in g.d2_neighbors(v).expect("in range") {
        if let Some(c) = coloring[u] {
            if (c as usize) < taken.len() {
                taken[c as usize] = true;
            }
        }
    }
    Ok((0..taken.len()).filter(|&c| !taken[c]).map(|c| c as Color).collect())
}

/// Live d2-degree of `v`.
pub fn live_d2_degree(g: &Graph, coloring: &[Option<Color>], v: usize) -> usize {
    g.d2_neighbors(v).expect("in range").into_iter().filter(|&u| coloring[u].is_none()).count()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property: String,
    pub passed: bool,
    /// First failing node or pair with measured quantity and bound.
    pub witness: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcdReport {
    pub checks: Vec<PropertyCheck>,
    pub h_degree_checks: Vec<PropertyCheck>,
}

impl AcdReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().chain(&self.h_degree_checks).all(|c| c.passed)
    }

    pub fn definition_ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&PropertyCheck> {
        self.checks.iter().chain(&self.h_degree_checks).filter(|c| !c.passed).collect()
    }
}

struct Checker {
    name: &'static str,
    witness: Option<String>,
}

impl Checker {
    fn new(name: &'static str) -> Self {
        Checker { name, witness: None }
    }

    fn require(&mut self, ok: bool, w: impl FnOnce() -> String) {
        if !ok && self.witness.is_none() {
            self.witness = Some(w());
        }
    }

    fn done(self) -> PropertyCheck {
        PropertyCheck { property: self.name.to_string(), passed: self.witness.is_none(), witness: self.witness }
    }
}

type Q = Ratio<i128>;

fn q(r: Ratio<i64>) -> Q {
    Ratio::new(*r.numer() as i128, *r.denom() as i128)
}

fn qi(x: usize) -> Q {
    Q::from_integer(x as i128)
}

/// Checks every property of the decomposition definition and the
/// Ĥ-degree bounds exactly.
pub fn verify_acd(g: &Graph, acd: &AcdResult, epsilon: Ratio<i64>) -> Result<AcdReport, OracleError> {
    let n = g.n();
    let sq = SquareView::new(g);
    let ds = g.delta_sq();
    let dsq = qi(ds);
    let eps = q(epsilon);
    let one = Q::from_integer(1);

    let mut in_ext: Vec<Option<usize>> = vec![None; n];
    let mut in_core: Vec<Option<usize>> = vec![None; n];
    let mut is_star = vec![false; n];
    for &v in &acd.v_star {
        if v >= n {
            return Err(OracleError::Malformed(format!("node {v} out of range")));
        }
        is_star[v] = true;
    }
    for (i, c) in acd.components.iter().enumerate() {
        for &v in &c.extended {
            if v >= n {
                return Err(OracleError::Malformed(format!("node {v} out of range")));
            }
            if let Some(j) = in_ext[v] {
                return Err(OracleError::Malformed(format!("node {v} in extended components {j} and {i}")));
            }
            in_ext[v] = Some(i);
        }
        for &v in &c.core {
            if in_ext[v] != Some(i) {
                return Err(OracleError::Malformed(format!("core node {v} outside its extended component {i}")));
            }
            if is_star[v] {
                return Err(OracleError::Malformed(format!("core node {v} also in V*")));
            }
            in_core[v] = Some(i);
        }
        for &v in &c.extended {
            if in_core[v].is_none() && !is_star[v] {
                return Err(OracleError::Malformed(format!("extension node {v} not in V*")));
            }
        }
    }
    for v in 0..n {
        if !is_star[v] && in_ext[v].is_none() {
            return Err(OracleError::Malformed(format!("node {v} covered by nothing")));
        }
    }

    let zeta: Vec<Q> = (0..n)
        .map(|v| {
            let s = sq.sparsity(ds, v).value;
            Ratio::new(*s.numer() as i128, *s.denom() as i128)
        })
        .collect();

    let mut p1 = Checker::new("1: V* nodes are sparse");
    let bound1 = eps * eps * dsq / Q::from_integer(4);
    for &v in &acd.v_star {
        p1.require(zeta[v] >= bound1, || format!("node {v}: zeta {} < {}", zeta[v], bound1));
    }

    let mut p2a = Checker::new("2a: core size");
    let mut p2b = Checker::new("2b: mutual similarity");
    let mut p2c = Checker::new("2c: few non-neighbors");
    let mut p2d = Checker::new("2d: many core neighbors");
    let mut p2e = Checker::new("2e: dissimilar to outsiders");
    let mut h1 = Checker::new("H1: H-degree lower bound");
    let mut h2 = Checker::new("H2: few non-neighbors in extended component");
    let mut h3 = Checker::new("H3: H-neighborhood edge count");

    let ten = one - Q::from_integer(10) * eps;
    let mut counter = vec![0u32; n];
    for (i, c) in acd.components.iter().enumerate() {
        let bound_a = (one - Q::from_integer(2) * eps) * dsq;
        p2a.require(qi(c.core.len()) >= bound_a, || format!("component {i}: |C| = {} < {}", c.core.len(), bound_a));

        for (a, &u) in c.extended.iter().enumerate() {
            for &v in &c.extended[a + 1..] {
                let common = sq.common_d2(u, v);
                p2b.require(qi(common) >= ten * dsq, || format!("pair ({u},{v}): {common} common < {}", ten * dsq));
            }
        }

        let bound_c = Q::from_integer(28) * eps * dsq;
        for &v in &c.extended {
            let adj = sq.d2_adjacency(v);
            let inside = sorted_intersection_len(&c.extended.iter().map(|&x| x as u32).collect::<Vec<_>>(), adj);
            let non = c.extended.len() - 1 - inside;
            p2c.require(qi(non) <= bound_c, || format!("node {v}: {non} non-neighbors > {bound_c}"));
            let core_nb = sorted_intersection_len(&c.core.iter().map(|&x| x as u32).collect::<Vec<_>>(), adj);
            p2d.require(qi(core_nb) >= ten * dsq, || format!("node {v}: {core_nb} core neighbors < {}", ten * dsq));
        }

        let bound_e = (one - eps) * dsq;
        for &v in &c.core {
            let mut touched = Vec::new();
            for &w in sq.d2_adjacency(v) {
                for &x in sq.d2_adjacency(w as usize) {
                    let x = x as usize;
                    if x != v && in_ext[x] != Some(i) {
                        if counter[x] == 0 {
                            touched.push(x);
                        }
                        counter[x] += 1;
                    }
                }
            }
            for &x in &touched {
                let k = counter[x] as usize;
                p2e.require(qi(k) < bound_e, || format!("pair ({v},{x}): {k} common >= {bound_e}"));
                counter[x] = 0;
            }
        }

        let ext32: Vec<u32> = c.extended.iter().map(|&x| x as u32).collect();
        for &v in &c.extended {
            let z = zeta[v];
            let nh: Vec<u32> = sq.d2_adjacency(v).iter().copied().filter(|&u| in_ext[u as usize] == Some(i)).collect();
            let b1 = dsq - (Q::from_integer(2) * z + one) / eps;
            h1.require(qi(nh.len()) >= b1, || format!("node {v}: {} H-neighbors < {b1}", nh.len()));
            let non = ext32.len() - 1 - sorted_intersection_len(&ext32, sq.d2_adjacency(v));
            let b2 = Q::from_integer(3) * z;
            h2.require(qi(non) <= b2, || format!("node {v}: {non} non-neighbors > {b2}"));
            let mut edges = 0usize;
            for (a, &x) in nh.iter().enumerate() {
                edges += sorted_intersection_len(&nh[a + 1..], sq.d2_adjacency(x as usize));
            }
            let pairs = Q::from_integer((ds as i128) * (ds as i128 - 1) / 2);
            let b3 = pairs - (Q::from_integer(2) / eps + one) * z * dsq;
            h3.require(qi(edges) >= b3, || format!("node {v}: {edges} edges < {b3}"));
        }
    }

    Ok(AcdReport {
        checks: vec![p1.done(), p2a.done(), p2b.done(), p2c.done(), p2d.done(), p2e.done()],
        h_degree_checks: vec![h1.done(), h2.done(), h3.done()],
    })
}

/// Seeds `e` with `f_e` injective on every list.
pub fn brute_force_good_seeds(lists: &[Vec<Color>], p: u64, d: u32) -> Result<Vec<u64>, OracleError> {
    if p > BRUTE_FORCE_LIMIT {
        return Err(FieldError::TooLarge(p).into());
    }
    let red = ColorspaceReducer::new(p, d)?;
    for l in lists {
        for &c in l {
            red.digits(c as u64)?;
        }
    }
    Ok((0..p).filter(|&e| lists.iter().all(|l| red.injective_on(l, e))).collect())
}

/// Inactive nodes `u ≠ v` of `core` with at most `4φ` 2-paths into the
/// active part of `core` and exactly one 2-path to `v`.
pub fn decent_set(g: &Graph, core: &[usize], active: &[bool], v: usize) -> Vec<usize> {
    let phi = core.iter().filter(|&&a| active[a]).count();
    let mut in_core = vec![false; g.n()];
    for &c in core {
        in_core[c] = true;
    }
    let mut paths_to_active = vec![0usize; g.n()];
    for &a in core.iter().filter(|&&a| active[a]) {
        for &w in g.neighbors(a) {
            for &u in g.neighbors(w as usize) {
                if u as usize != a {
                    paths_to_active[u as usize] += 1;
                }
            }
        }
    }
    core.iter()
        .copied()
        .filter(|&u| u != v && !active[u])
        .filter(|&u| paths_to_active[u] <= 4 * phi)
        .filter(|&u| g.two_path_count(u, v).expect("distinct") == 1)
        .collect()
}
