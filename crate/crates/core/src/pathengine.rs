//! Power-weighted shortest paths `L(x, y; A)` over the complete graph on
//! `A ∪ {x, y}` with edge weights `dist_1(u, v)^p`.
//!
//! Two solvers share one label order, so they agree on ties:
//!
//! * [`shortest_path_exact`]: dense `O(n^2)` Dijkstra over every edge.
//! * [`shortest_path_pruned`]: Dijkstra restricted to edges of length at most
//!   `r`, read from a uniform grid, followed by a certificate check. Let `L̂`
//!   be the restricted distance to `y`. For every settled `u` with
//!   `L̂ - dist(u) > r^p`, every excluded neighbour `b` with
//!   `dist(u) + w(u, b) < L̂` must already satisfy
//!   `dist(b) <= dist(u) + w(u, b)`. If so no path through an excluded edge
//!   can beat `L̂`. Otherwise `r` doubles; at `r >= diameter` the search is
//!   complete and exact.
//!
//! Vertex numbering: `0` is the source, `1..=n` the cloud in order, `n + 1`
//! the target. Equal-length paths are ordered by hop count, then by the
//! lexicographic order of their vertex sequences.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_power, weight_from_dist2, ConformalParams, DomainSpec};
use crate::sampling::PointCloud;

pub const DEFAULT_EXACT_CAP: usize = 5000;
pub const DEFAULT_RADIUS_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Pruned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    ExactMode,
    PrunedVerified,
    PrunedUnverified,
}

#[derive(Debug, Clone)]
pub struct PathQuery<'a> {
    pub cloud: &'a PointCloud,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub p: f64,
    pub mode: Mode,
    /// Explicit pruning radii tried in order before doubling the last one.
    pub radius_schedule: Option<Vec<f64>>,
    /// `c_r` in `r_0 = c_r (n f_m)^((alpha - 1)/d)`.
    pub radius_factor: f64,
    /// Point intensity `n f_m`; defaults to `n / volume`.
    pub intensity: Option<f64>,
    pub exact_cap: usize,
    /// Stop doubling after this many rounds and return an unverified path.
    pub max_doublings: Option<usize>,
}

impl<'a> PathQuery<'a> {
    pub fn new(cloud: &'a PointCloud, source: &[f64], target: &[f64], p: f64) -> Self {
        Self {
            cloud,
            source: source.to_vec(),
            target: target.to_vec(),
            p,
            mode: Mode::Pruned,
            radius_schedule: None,
            radius_factor: DEFAULT_RADIUS_FACTOR,
            intensity: None,
            exact_cap: DEFAULT_EXACT_CAP,
            max_doublings: None,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_intensity(mut self, intensity: f64) -> Self {
        self.intensity = Some(intensity);
        self
    }

    pub fn with_radius_schedule(mut self, radii: Vec<f64>) -> Self {
        self.radius_schedule = Some(radii);
        self
    }

    /// Same query with the anchors swapped.
    pub fn reversed(&self) -> Self {
        let mut q = self.clone();
        std::mem::swap(&mut q.source, &mut q.target);
        q
    }

    fn validate(&self) -> Result<()> {
        check_power(self.p)?;
        let domain = self.cloud.domain();
        domain.check_point(&self.source)?;
        domain.check_point(&self.target)?;
        if !(self.radius_factor > 0.0 && self.radius_factor.is_finite()) {
            return Err(Error::Parameter(format!(
                "radius factor must be > 0, got {}",
                self.radius_factor
            )));
        }
        if let Some(radii) = &self.radius_schedule {
            if radii.iter().any(|r| !(*r > 0.0)) {
                return Err(Error::Parameter("pruning radii must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub length: f64,
    /// Vertex indices from source to target (see module docs for numbering).
    pub node_sequence: Vec<usize>,
    pub nodes: Vec<Vec<f64>>,
    pub cardinality: usize,
    pub max_edge: f64,
    pub certificate: Certificate,
    /// Pruning radius of the accepted round, `None` in exact mode.
    pub radius: Option<f64>,
    /// Number of restricted searches run (pruned mode).
    pub rounds: usize,
    /// True when pruned mode fell back to the full edge set.
    pub fallback: bool,
}

#[derive(Serialize)]
struct PathJson<'a> {
    length: f64,
    cardinality: usize,
    max_edge: f64,
    certificate: Certificate,
    nodes: &'a [Vec<f64>],
}

impl PathResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&PathJson {
            length: self.length,
            cardinality: self.cardinality,
            max_edge: self.max_edge,
            certificate: self.certificate,
            nodes: &self.nodes,
        })
        .expect("path result serialises")
    }

    /// Base length of every consecutive hop.
    pub fn edge_lengths(&self, domain: &DomainSpec) -> Vec<f64> {
        self.nodes
            .windows(2)
            .map(|w| domain.dist2(&w[0], &w[1]).sqrt())
            .collect()
    }

    pub fn first_edge(&self, domain: &DomainSpec) -> f64 {
        domain.dist2(&self.nodes[0], &self.nodes[1]).sqrt()
    }

    pub fn last_edge(&self, domain: &DomainSpec) -> f64 {
        let k = self.nodes.len();
        domain.dist2(&self.nodes[k - 2], &self.nodes[k - 1]).sqrt()
    }

    /// Forward sum of `dist_1^p` along the stored node coordinates.
    pub fn recompute_length(&self, domain: &DomainSpec, p: f64) -> f64 {
        self.nodes.windows(2).fold(0.0, |acc, w| {
            acc + weight_from_dist2(domain.dist2(&w[0], &w[1]), p)
        })
    }
}

struct Graph<'a> {
    domain: &'a DomainSpec,
    d: usize,
    coords: Vec<f64>,
    p: f64,
}

impl<'a> Graph<'a> {
    fn new(q: &'a PathQuery<'_>) -> Self {
        let d = q.cloud.dimension();
        let mut coords = Vec::with_capacity(q.cloud.coords().len() + 2 * d);
        coords.extend_from_slice(&q.source);
        coords.extend_from_slice(q.cloud.coords());
        coords.extend_from_slice(&q.target);
        Self {
            domain: q.cloud.domain(),
            d,
            coords,
            p: q.p,
        }
    }

    fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    fn target(&self) -> usize {
        self.len() - 1
    }

    #[inline]
    fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    fn dist2(&self, i: usize, j: usize) -> f64 {
        self.domain.dist2(self.vertex(i), self.vertex(j))
    }

    #[inline]
    fn weight(&self, i: usize, j: usize) -> f64 {
        weight_from_dist2(self.dist2(i, j), self.p)
    }
}

const NO_PRED: u32 = u32::MAX;

struct Labels {
    dist: Vec<f64>,
    hops: Vec<u32>,
    pred: Vec<u32>,
    settled: Vec<bool>,
    settled_order: Vec<u32>,
}

impl Labels {
    fn new(n: usize) -> Self {
        let mut l = Self {
            dist: vec![f64::INFINITY; n],
            hops: vec![u32::MAX; n],
            pred: vec![NO_PRED; n],
            settled: vec![false; n],
            settled_order: Vec::new(),
        };
        l.dist[0] = 0.0;
        l.hops[0] = 1;
        l
    }

    /// Orders the vertex sequences ending at `a` and `b`, which must have
    /// equal hop counts.
    fn seq_cmp(&self, mut a: usize, mut b: usize) -> Ordering {
        let mut ord = Ordering::Equal;
        while a != b {
            ord = a.cmp(&b);
            a = self.pred[a] as usize;
            b = self.pred[b] as usize;
        }
        ord
    }

    /// Would reaching `v` via `u` with length `cand` improve its label?
    #[inline]
    fn improves(&self, cand: f64, u: usize, v: usize) -> bool {
        let cur = self.dist[v];
        if cand < cur {
            return true;
        }
        if cand > cur {
            return false;
        }
        let hops = self.hops[u] + 1;
        match hops.cmp(&self.hops[v]) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => {
                let pv = self.pred[v];
                pv != NO_PRED && pv as usize != u && self.seq_cmp(u, pv as usize) == Ordering::Less
            }
        }
    }

    #[inline]
    fn set(&mut self, v: usize, cand: f64, u: usize) {
        self.dist[v] = cand;
        self.hops[v] = self.hops[u] + 1;
        self.pred[v] = u as u32;
    }

    fn settle(&mut self, u: usize) {
        self.settled[u] = true;
        self.settled_order.push(u as u32);
    }

    fn sequence_to(&self, t: usize) -> Vec<usize> {
        let mut seq = vec![t];
        let mut cur = t;
        while self.pred[cur] != NO_PRED {
            cur = self.pred[cur] as usize;
            seq.push(cur);
        }
        seq.reverse();
        seq
    }
}

fn assemble(g: &Graph<'_>, labels: &Labels, certificate: Certificate) -> PathResult {
    let t = g.target();
    let node_sequence = labels.sequence_to(t);
    let nodes: Vec<Vec<f64>> = node_sequence
        .iter()
        .map(|&i| g.vertex(i).to_vec())
        .collect();
    let max_edge = node_sequence
        .windows(2)
        .map(|w| g.dist2(w[0], w[1]).sqrt())
        .fold(0.0, f64::max);
    PathResult {
        length: labels.dist[t],
        cardinality: node_sequence.len(),
        node_sequence,
        nodes,
        max_edge,
        certificate,
        radius: None,
        rounds: 0,
        fallback: false,
    }
}

/// With `p = 1` the triangle inequality makes the direct edge optimal, and it
/// has the fewest hops.
fn direct_path(g: &Graph<'_>, certificate: Certificate) -> PathResult {
    let t = g.target();
    let length = g.weight(0, t);
    PathResult {
        length,
        node_sequence: vec![0, t],
        nodes: vec![g.vertex(0).to_vec(), g.vertex(t).to_vec()],
        cardinality: 2,
        max_edge: g.dist2(0, t).sqrt(),
        certificate,
        radius: None,
        rounds: 0,
        fallback: false,
    }
}

fn dense_dijkstra<F: Fn(usize, usize) -> bool>(g: &Graph<'_>, allowed: F) -> Labels {
    let n = g.len();
    let target = g.target();
    let mut labels = Labels::new(n);
    let mut open: Vec<usize> = (0..n).collect();
    while !open.is_empty() {
        let mut best = 0;
        for k in 1..open.len() {
            let (a, b) = (open[k], open[best]);
            if (labels.dist[a], labels.hops[a]) < (labels.dist[b], labels.hops[b]) {
                best = k;
            }
        }
        let u = open.swap_remove(best);
        if labels.dist[u].is_infinite() {
            break;
        }
        labels.settle(u);
        if u == target {
            break;
        }
        let du = labels.dist[u];
        for &v in &open {
            if !allowed(u, v) {
                continue;
            }
            let cand = du + g.weight(u, v);
            if labels.improves(cand, u, v) {
                labels.set(v, cand, u);
            }
        }
    }
    labels
}

/// Globally optimal path over the complete graph.
pub fn shortest_path_exact(q: &PathQuery<'_>) -> Result<PathResult> {
    q.validate()?;
    if q.cloud.len() > q.exact_cap {
        return Err(Error::ExactCapExceeded {
            n: q.cloud.len(),
            cap: q.exact_cap,
        });
    }
    let g = Graph::new(q);
    if q.p == 1.0 {
        return Ok(direct_path(&g, Certificate::ExactMode));
    }
    let labels = dense_dijkstra(&g, |_, _| true);
    Ok(assemble(&g, &labels, Certificate::ExactMode))
}

/// `h(u, v; w) < 0`: the two-hop path through `w` is strictly shorter than
/// the direct edge, so `(u, v)` is on no shortest path.
pub fn dominated(u: &[f64], v: &[f64], w: &[f64], p: f64, domain: &DomainSpec) -> bool {
    let uw = weight_from_dist2(domain.dist2(u, w), p);
    let wv = weight_from_dist2(domain.dist2(w, v), p);
    let uv = weight_from_dist2(domain.dist2(u, v), p);
    uw + wv - uv < 0.0
}

/// Exact search after deleting every edge dominated by some third vertex.
/// Returns the path and the number of deleted (undirected) edges.
pub fn shortest_path_domination_filtered(q: &PathQuery<'_>) -> Result<(PathResult, usize)> {
    q.validate()?;
    if q.cloud.len() > q.exact_cap {
        return Err(Error::ExactCapExceeded {
            n: q.cloud.len(),
            cap: q.exact_cap,
        });
    }
    let g = Graph::new(q);
    let n = g.len();
    let mut w = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let x = g.weight(a, b);
            w[a * n + b] = x;
            w[b * n + a] = x;
        }
    }
    let mut allowed = vec![true; n * n];
    let mut removed = 0;
    for a in 0..n {
        for b in a + 1..n {
            let direct = w[a * n + b];
            let hit =
                (0..n).any(|c| c != a && c != b && w[a * n + c] + w[c * n + b] - direct < 0.0);
            if hit {
                allowed[a * n + b] = false;
                allowed[b * n + a] = false;
                removed += 1;
            }
        }
    }
    let labels = dense_dijkstra(&g, |u, v| allowed[u * n + v]);
    if labels.dist[g.target()].is_infinite() {
        return Err(Error::Parameter(
            "target unreachable after domination filter".into(),
        ));
    }
    Ok((assemble(&g, &labels, Certificate::ExactMode), removed))
}

/// Uniform bucket grid over all graph vertices, wrapping on the torus.
struct Grid {
    dims: Vec<usize>,
    cell: Vec<f64>,
    starts: Vec<u32>,
    items: Vec<u32>,
    wrap: bool,
}

impl Grid {
    fn build(g: &Graph<'_>, target_cell: f64) -> Result<Self> {
        let n = g.len();
        let sides = g.domain.sides();
        if !(target_cell.is_finite() && target_cell > 0.0) {
            return Err(Error::Index(format!("invalid cell size {target_cell}")));
        }
        let dims: Vec<usize> = sides
            .iter()
            .map(|s| ((s / target_cell).floor() as usize).clamp(1, 1 << 16))
            .collect();
        let total: usize = dims.iter().product();
        if total > 64 * n + 1024 {
            return Err(Error::Index(format!(
                "grid of {total} cells for {n} points"
            )));
        }
        let cell: Vec<f64> = sides
            .iter()
            .zip(&dims)
            .map(|(s, m)| s / *m as f64)
            .collect();
        let mut grid = Self {
            dims,
            cell,
            starts: vec![0; total + 1],
            items: vec![0; n],
            wrap: g.domain.is_torus(),
        };
        let mut keys = Vec::with_capacity(n);
        for i in 0..n {
            let x = g.vertex(i);
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::Index(format!("non-finite coordinate at vertex {i}")));
            }
            let k = grid.key(x);
            keys.push(k);
            grid.starts[k + 1] += 1;
        }
        for c in 0..total {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        Ok(grid)
    }

    fn axis_cell(&self, axis: usize, c: f64) -> usize {
        ((c / self.cell[axis]).floor() as isize).clamp(0, self.dims[axis] as isize - 1) as usize
    }

    fn key(&self, x: &[f64]) -> usize {
        let mut k = 0;
        for axis in (0..self.dims.len()).rev() {
            k = k * self.dims[axis] + self.axis_cell(axis, x[axis]);
        }
        k
    }

    /// Calls `f` on every vertex in cells overlapping the radius-`r` box
    /// around `x` (a superset of the true neighbours).
    fn for_each_candidate<F: FnMut(usize)>(
        &self,
        x: &[f64],
        r: f64,
        ranges: &mut Vec<Vec<usize>>,
        mut f: F,
    ) {
        let d = self.dims.len();
        ranges.resize(d, Vec::new());
        for axis in 0..d {
            let m = self.dims[axis];
            let list = &mut ranges[axis];
            list.clear();
            let lo = ((x[axis] - r) / self.cell[axis]).floor();
            let hi = ((x[axis] + r) / self.cell[axis]).floor();
            if self.wrap {
                if hi - lo + 1.0 >= m as f64 {
                    list.extend(0..m);
                } else {
                    let mm = m as isize;
                    for c in lo as isize..=hi as isize {
                        list.push(c.rem_euclid(mm) as usize);
                    }
                }
            } else {
                let lo = lo.max(0.0) as usize;
                let hi = (hi.max(0.0) as usize).min(m - 1);
                list.extend(lo..=hi);
            }
        }
        let mut idx = vec![0usize; d];
        loop {
            let mut key = 0;
            for axis in (0..d).rev() {
                key = key * self.dims[axis] + ranges[axis][idx[axis]];
            }
            let (s, e) = (self.starts[key] as usize, self.starts[key + 1] as usize);
            for &v in &self.items[s..e] {
                f(v as usize);
            }
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < ranges[axis].len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == d {
                    return;
                }
            }
        }
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    hops: u32,
    v: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.hops.cmp(&self.hops))
            .then(other.v.cmp(&self.v))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over edges with squared length `<= r2`, stopped once the target settles.
fn restricted_dijkstra(g: &Graph<'_>, grid: &Grid, r: f64) -> Labels {
    let n = g.len();
    let target = g.target();
    let r2 = r * r;
    let mut labels = Labels::new(n);
    let mut heap = BinaryHeap::new();
    let mut ranges = Vec::new();
    heap.push(HeapEntry {
        dist: 0.0,
        hops: 1,
        v: 0,
    });
    while let Some(HeapEntry { dist, hops, v }) = heap.pop() {
        let u = v as usize;
        if labels.settled[u] || dist != labels.dist[u] || hops != labels.hops[u] {
            continue;
        }
        labels.settle(u);
        if u == target {
            break;
        }
        let xu = g.vertex(u);
        grid.for_each_candidate(xu, r, &mut ranges, |v| {
            if labels.settled[v] {
                return;
            }
            let d2 = g.domain.dist2(xu, g.vertex(v));
            if d2 > r2 {
                return;
            }
            let cand = dist + weight_from_dist2(d2, g.p);
            if labels.improves(cand, u, v) {
                let changed = cand != labels.dist[v] || labels.hops[u] + 1 != labels.hops[v];
                labels.set(v, cand, u);
                if changed {
                    heap.push(HeapEntry {
                        dist: cand,
                        hops: labels.hops[v],
                        v: v as u32,
                    });
                }
            }
        });
    }
    labels
}

/// Checks that no edge longer than `r` can improve on the restricted answer.
fn certify(g: &Graph<'_>, grid: &Grid, labels: &Labels, r: f64) -> bool {
    let bound = labels.dist[g.target()];
    let r2 = r * r;
    let rp = weight_from_dist2(r2, g.p);
    let mut ranges = Vec::new();
    for &u in &labels.settled_order {
        let u = u as usize;
        let du = labels.dist[u];
        let slack = bound - du;
        if slack <= rp {
            continue;
        }
        let reach = slack.powf(1.0 / g.p);
        let reach2 = reach * reach;
        let xu = g.vertex(u);
        let mut ok = true;
        grid.for_each_candidate(xu, reach, &mut ranges, |b| {
            if !ok || b == u {
                return;
            }
            let d2 = g.domain.dist2(xu, g.vertex(b));
            if d2 <= r2 || d2 > reach2 {
                return;
            }
            let cand = du + weight_from_dist2(d2, g.p);
            if cand >= bound {
                return;
            }
            if !labels.settled[b] || cand < labels.dist[b] {
                ok = false;
            }
        });
        if !ok {
            return false;
        }
    }
    true
}

/// Initial pruning radius `c_r (n f_m)^((alpha - 1)/d)`.
pub fn initial_radius(q: &PathQuery<'_>) -> Result<f64> {
    let domain = q.cloud.domain();
    let n = q.cloud.len();
    let intensity = q.intensity.unwrap_or(n as f64 / domain.volume());
    if n == 0 || intensity <= 0.0 {
        // only the direct edge exists
        return Ok(domain
            .dist2(&q.source, &q.target)
            .sqrt()
            .max(f64::MIN_POSITIVE));
    }
    let params = ConformalParams::new(q.p, domain.dimension())?;
    Ok(q.radius_factor * intensity.powf(params.link_exponent()))
}

/// Accelerated search whose answer equals [`shortest_path_exact`].
pub fn shortest_path_pruned(q: &PathQuery<'_>) -> Result<PathResult> {
    q.validate()?;
    let g = Graph::new(q);
    if q.p == 1.0 {
        return Ok(direct_path(&g, Certificate::PrunedVerified));
    }
    let diameter = g.domain.diameter();
    let schedule = q.radius_schedule.clone().unwrap_or_default();
    let mut r = match schedule.first() {
        Some(&r) => r,
        None => initial_radius(q)?,
    };
    let d = g.d as f64;
    // about one vertex per cell, never coarser than half the first radius
    let spacing = (g.domain.volume() / g.len() as f64).powf(1.0 / d);
    let grid = Grid::build(&g, (0.5 * r).max(spacing))?;
    let mut rounds = 0;
    loop {
        if r >= diameter {
            let labels = restricted_dijkstra(&g, &grid, f64::INFINITY);
            let mut res = assemble(&g, &labels, Certificate::ExactMode);
            res.radius = Some(r);
            res.rounds = rounds + 1;
            res.fallback = true;
            return Ok(res);
        }
        rounds += 1;
        let labels = restricted_dijkstra(&g, &grid, r);
        let reached = labels.settled[g.target()];
        if reached && certify(&g, &grid, &labels, r) {
            let mut res = assemble(&g, &labels, Certificate::PrunedVerified);
            res.radius = Some(r);
            res.rounds = rounds;
            return Ok(res);
        }
        if reached && q.max_doublings.is_some_and(|m| rounds > m) {
            let mut res = assemble(&g, &labels, Certificate::PrunedUnverified);
            res.radius = Some(r);
            res.rounds = rounds;
            return Ok(res);
        }
        r = match schedule.get(rounds) {
            Some(&next) => next,
            None => 2.0 * r,
        };
    }
}

/// Dispatches on `q.mode`.
pub fn shortest_path(q: &PathQuery<'_>) -> Result<PathResult> {
    match q.mode {
        Mode::Exact => shortest_path_exact(q),
        Mode::Pruned => shortest_path_pruned(q),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkStats {
    pub max_edge: f64,
    pub threshold: f64,
    /// Some link is longer than the threshold.
    pub exceeds: bool,
}

/// Compares the longest link with `(n f_m)^((alpha - 1)/d)`.
pub fn path_link_stats(
    result: &PathResult,
    params: &ConformalParams,
    n: usize,
    f_m: f64,
) -> LinkStats {
    let threshold = (n as f64 * f_m).powf(params.link_exponent());
    LinkStats {
        max_edge: result.max_edge,
        threshold,
        exceeds: result.max_edge > threshold,
    }
}
