//! Discrete metric measure spaces: weighted graphs with an optional lattice chart.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fit::log_log_fit;

pub type VertexId = usize;

/// A subset of the vertices of a graph, stored as a membership mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VertexSet {
    mask: Vec<bool>,
    len: usize,
}

impl std::fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl VertexSet {
    pub fn empty(universe: usize) -> Self {
        VertexSet {
            mask: vec![false; universe],
            len: 0,
        }
    }

    pub fn full(universe: usize) -> Self {
        VertexSet {
            mask: vec![true; universe],
            len: universe,
        }
    }

    /// Builds a set from ids; ids outside the universe are ignored.
    pub fn from_ids(universe: usize, ids: impl IntoIterator<Item = VertexId>) -> Self {
        let mut s = Self::empty(universe);
        for v in ids {
            if v < universe {
                s.insert(v);
            }
        }
        s
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        let len = mask.iter().filter(|b| **b).count();
        VertexSet { mask, len }
    }

    pub fn from_predicate(universe: usize, mut pred: impl FnMut(VertexId) -> bool) -> Self {
        Self::from_mask((0..universe).map(&mut pred).collect())
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, v: VertexId) -> bool {
        self.mask.get(v).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, v: VertexId) -> bool {
        if self.mask[v] {
            false
        } else {
            self.mask[v] = true;
            self.len += 1;
            true
        }
    }

    pub fn remove(&mut self, v: VertexId) -> bool {
        if self.mask[v] {
            self.mask[v] = false;
            self.len -= 1;
            true
        } else {
            false
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.mask.iter().enumerate().filter_map(|(i, b)| b.then_some(i))
    }

    pub fn first(&self) -> Option<VertexId> {
        self.iter().next()
    }

    pub fn as_mask(&self) -> &[bool] {
        &self.mask
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert_eq!(
            self.universe(),
            other.universe(),
            "vertex sets of different graphs"
        );
        Self::from_mask(
            self.mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        )
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Self {
        Self::from_mask(self.mask.iter().map(|b| !b).collect())
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !(*a && *b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: VertexId,
    pub b: VertexId,
    pub length: f64,
    pub conductance: f64,
}

/// A single lattice coordinate patch covering every vertex.
#[derive(Clone, Debug)]
pub struct GridChart {
    dim: usize,
    spacing: f64,
    lattice: Vec<[i64; 3]>,
    lookup: HashMap<[i64; 3], VertexId>,
    forward: Vec<[Option<VertexId>; 3]>,
}

impl GridChart {
    /// Builds a chart from integer lattice coordinates, one per vertex.
    pub fn new(dim: usize, spacing: f64, lattice: Vec<[i64; 3]>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::construction(
                "dim",
                format!("must be 1, 2 or 3, got {dim}"),
            ));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::construction(
                "spacing",
                format!("must be positive, got {spacing}"),
            ));
        }
        let mut lookup = HashMap::with_capacity(lattice.len());
        for (v, idx) in lattice.iter().enumerate() {
            if idx[dim..].iter().any(|c| *c != 0) {
                return Err(Error::construction(
                    "coords",
                    format!("vertex {v} has coordinates beyond dimension {dim}"),
                ));
            }
            if lookup.insert(*idx, v).is_some() {
                return Err(Error::construction(
                    "coords",
                    format!("vertex {v} repeats lattice point {idx:?}"),
                ));
            }
        }
        let forward = lattice
            .iter()
            .map(|idx| {
                let mut f = [None; 3];
                for (k, slot) in f.iter_mut().enumerate().take(dim) {
                    let mut n = *idx;
                    n[k] += 1;
                    *slot = lookup.get(&n).copied();
                }
                f
            })
            .collect();
        Ok(GridChart {
            dim,
            spacing,
            lattice,
            lookup,
            forward,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn lattice(&self, v: VertexId) -> [i64; 3] {
        self.lattice[v]
    }

    pub fn coordinates(&self, v: VertexId) -> [f64; 3] {
        let l = self.lattice[v];
        [
            l[0] as f64 * self.spacing,
            l[1] as f64 * self.spacing,
            l[2] as f64 * self.spacing,
        ]
    }

    pub fn vertex_at(&self, idx: [i64; 3]) -> Option<VertexId> {
        self.lookup.get(&idx).copied()
    }

    /// Forward lattice neighbor of `v` along axis `k`, if it exists.
    #[inline]
    pub fn forward(&self, v: VertexId, k: usize) -> Option<VertexId> {
        self.forward[v][k]
    }

    pub fn backward(&self, v: VertexId, k: usize) -> Option<VertexId> {
        let mut n = self.lattice[v];
        n[k] -= 1;
        self.vertex_at(n)
    }
}

/// How distances between vertices are measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MetricKind {
    /// Euclidean distance of chart coordinates. Requires a chart.
    #[default]
    Chart,
    /// Weighted shortest-path distance along edges.
    ShortestPath,
}

/// A finite connected weighted graph with vertex measures.
pub struct MetricGraph {
    measure: Vec<f64>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(VertexId, usize)>>,
    chart: Option<GridChart>,
    metric: MetricKind,
    cache: RwLock<HashMap<VertexId, Arc<Vec<f64>>>>,
}

impl Clone for MetricGraph {
    fn clone(&self) -> Self {
        MetricGraph {
            measure: self.measure.clone(),
            edges: self.edges.clone(),
            adjacency: self.adjacency.clone(),
            chart: self.chart.clone(),
            metric: self.metric,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl std::fmt::Debug for MetricGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricGraph")
            .field("vertices", &self.measure.len())
            .field("edges", &self.edges.len())
            .field("dim", &self.chart.as_ref().map(|c| c.dim))
            .field("metric", &self.metric)
            .finish()
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, VertexId);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl MetricGraph {
    /// Validates and assembles a graph. The metric defaults to the chart
    /// metric when a chart is given and to shortest paths otherwise.
    pub fn new(measure: Vec<f64>, edges: Vec<Edge>, chart: Option<GridChart>) -> Result<Self> {
        let n = measure.len();
        if n == 0 {
            return Err(Error::construction("vertices", "graph has no vertices"));
        }
        for (v, m) in measure.iter().enumerate() {
            if !(*m > 0.0 && m.is_finite()) {
                return Err(Error::construction(
                    "measure",
                    format!("vertex {v} has non-positive measure {m}"),
                ));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.a >= n || e.b >= n {
                return Err(Error::construction(
                    "edges",
                    format!("edge {i} references a missing vertex"),
                ));
            }
            if e.a == e.b {
                return Err(Error::construction("edges", format!("edge {i} is a loop")));
            }
            if !(e.length > 0.0 && e.length.is_finite()) {
                return Err(Error::construction(
                    "length",
                    format!("edge {i} has non-positive length {}", e.length),
                ));
            }
            if !(e.conductance > 0.0 && e.conductance.is_finite()) {
                return Err(Error::construction(
                    "conductance",
                    format!("edge {i} has non-positive conductance {}", e.conductance),
                ));
            }
            adjacency[e.a].push((e.b, i));
            adjacency[e.b].push((e.a, i));
        }
        if let Some(c) = &chart {
            if c.lattice.len() != n {
                return Err(Error::construction(
                    "chart",
                    format!("chart covers {} vertices, graph has {n}", c.lattice.len()),
                ));
            }
            for v in 0..n {
                for k in 0..c.dim {
                    if let Some(w) = c.forward(v, k) {
                        let ok = adjacency[v].iter().any(|&(u, ei)| {
                            u == w && (edges[ei].length - c.spacing).abs() <= 1e-12 * c.spacing
                        });
                        if !ok {
                            return Err(Error::construction(
                                "chart",
                                format!("chart neighbors {v} and {w} are not joined by an edge of length h"),
                            ));
                        }
                    }
                }
            }
        }
        let metric = if chart.is_some() {
            MetricKind::Chart
        } else {
            MetricKind::ShortestPath
        };
        let g = MetricGraph {
            measure,
            edges,
            adjacency,
            chart,
            metric,
            cache: RwLock::new(HashMap::new()),
        };
        let reached = g.component_of(0, &VertexSet::full(n));
        if reached.len() != n {
            return Err(Error::construction(
                "edges",
                format!(
                    "graph is disconnected: {} of {n} vertices reachable from 0",
                    reached.len()
                ),
            ));
        }
        Ok(g)
    }

    /// Returns the same graph with a different distance.
    pub fn with_metric(mut self, metric: MetricKind) -> Result<Self> {
        if metric == MetricKind::Chart && self.chart.is_none() {
            return Err(Error::param("metric", "chart metric requires a chart"));
        }
        self.metric = metric;
        self.cache = RwLock::new(HashMap::new());
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn measure(&self, v: VertexId) -> f64 {
        self.measure[v]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measure
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` paired with the index of the connecting edge.
    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, usize)] {
        &self.adjacency[v]
    }

    pub fn chart(&self) -> Option<&GridChart> {
        self.chart.as_ref()
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn all(&self) -> VertexSet {
        VertexSet::full(self.len())
    }

    pub fn set_measure(&self, s: &VertexSet) -> f64 {
        s.iter().map(|v| self.measure[v]).sum()
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    /// Default sphere band width: the chart spacing, else the shortest edge.
    pub fn band_width(&self) -> f64 {
        match &self.chart {
            Some(c) => c.spacing,
            None => self.min_edge_length(),
        }
    }

    /// Distances from `x0` to every vertex, cached per source.
    pub fn distances_from(&self, x0: VertexId) -> Arc<Vec<f64>> {
        if let Some(d) = self.cache.read().expect("distance cache poisoned").get(&x0) {
            return Arc::clone(d);
        }
        let d = Arc::new(match self.metric {
            MetricKind::Chart => self.chart_distances(x0),
            MetricKind::ShortestPath => self.dijkstra(&[x0]),
        });
        self.cache
            .write()
            .expect("distance cache poisoned")
            .insert(x0, Arc::clone(&d));
        d
    }

    pub fn distance(&self, x: VertexId, y: VertexId) -> f64 {
        if self.metric == MetricKind::Chart {
            let c = self.chart.as_ref().expect("chart metric without chart");
            return euclid(&c.coordinates(x), &c.coordinates(y));
        }
        self.distances_from(x)[y]
    }

    pub fn clear_distance_cache(&self) {
        self.cache.write().expect("distance cache poisoned").clear();
    }

    fn chart_distances(&self, x0: VertexId) -> Vec<f64> {
        let c = self.chart.as_ref().expect("chart metric without chart");
        let p = c.coordinates(x0);
        (0..self.len()).map(|v| euclid(&p, &c.coordinates(v))).collect()
    }

    /// Multi-source shortest path distances.
    fn dijkstra(&self, sources: &[VertexId]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(HeapItem(0.0, s));
        }
        while let Some(HeapItem(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, ei) in &self.adjacency[v] {
                let nd = d + self.edges[ei].length;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(HeapItem(nd, w));
                }
            }
        }
        dist
    }

    /// Distance from every vertex to the nearest member of `set`.
    pub fn distances_to_set(&self, set: &VertexSet) -> Vec<f64> {
        match self.metric {
            MetricKind::ShortestPath => {
                let sources: Vec<_> = set.iter().collect();
                self.dijkstra(&sources)
            }
            MetricKind::Chart => {
                let mut out = vec![f64::INFINITY; self.len()];
                for s in set.iter() {
                    let d = self.chart_distances(s);
                    for (o, di) in out.iter_mut().zip(d) {
                        *o = o.min(di);
                    }
                }
                out
            }
        }
    }

    /// Connected component of `start` inside `within` (edge adjacency).
    pub fn component_of(&self, start: VertexId, within: &VertexSet) -> VertexSet {
        let mut seen = VertexSet::empty(self.len());
        if !within.contains(start) {
            return seen;
        }
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(v) = stack.pop() {
            for &(w, _) in &self.adjacency[v] {
                if within.contains(w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Connected components of `set`, ordered by smallest member.
    pub fn components(&self, set: &VertexSet) -> Vec<VertexSet> {
        let mut remaining = set.clone();
        let mut out = Vec::new();
        while let Some(v) = remaining.first() {
            let c = self.component_of(v, &remaining);
            remaining = remaining.difference(&c);
            out.push(c);
        }
        out
    }

    /// Vertices outside `set` joined to it by an edge.
    pub fn outer_boundary(&self, set: &VertexSet) -> VertexSet {
        let mut b = VertexSet::empty(self.len());
        for v in set.iter() {
            for &(w, _) in &self.adjacency[v] {
                if !set.contains(w) {
                    b.insert(w);
                }
            }
        }
        b
    }

    /// Members of `set` joined by an edge to a vertex outside it.
    pub fn inner_boundary(&self, set: &VertexSet) -> VertexSet {
        VertexSet::from_predicate(self.len(), |v| {
            set.contains(v) && self.adjacency[v].iter().any(|&(w, _)| !set.contains(w))
        })
    }

    /// A lower bound for the diameter from two sweeps, exact on lattices
    /// with the chart metric.
    pub fn diameter_estimate(&self, x0: VertexId) -> f64 {
        let d0 = self.distances_from(x0);
        let far = argmax(&d0);
        let d1 = self.distances_from(far);
        d1.iter().copied().fold(0.0, f64::max)
    }

    /// The lattice vertex closest to the barycenter of the chart box.
    pub fn center_vertex(&self) -> Option<VertexId> {
        let c = self.chart.as_ref()?;
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for l in &c.lattice {
            for k in 0..3 {
                lo[k] = lo[k].min(l[k]);
                hi[k] = hi[k].max(l[k]);
            }
        }
        let mid = [
            (lo[0] + hi[0]).div_euclid(2),
            (lo[1] + hi[1]).div_euclid(2),
            (lo[2] + hi[2]).div_euclid(2),
        ];
        c.vertex_at(mid)
    }
}

fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Axis-aligned lattice with `side` vertices per axis.
///
/// Edge conductance is `spacing^(dim-1)` so that for p = 2 the edge energy
/// agrees with the finite-difference Dirichlet energy, and each vertex
/// carries measure `spacing^dim`.
pub fn build_grid(dim: usize, side: usize, spacing: f64) -> Result<MetricGraph> {
    if !(1..=3).contains(&dim) {
        return Err(Error::construction(
            "dimension",
            format!("must be 1, 2 or 3, got {dim}"),
        ));
    }
    if side < 2 {
        return Err(Error::construction(
            "side",
            format!("must be at least 2, got {side}"),
        ));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::construction(
            "spacing",
            format!("must be positive, got {spacing}"),
        ));
    }
    let n = side
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::construction("side", "vertex count overflows"))?;
    let stride = [1, side, side * side];
    let lattice: Vec<[i64; 3]> = (0..n)
        .map(|v| {
            let mut l = [0i64; 3];
            for k in 0..dim {
                l[k] = ((v / stride[k]) % side) as i64;
            }
            l
        })
        .collect();
    let conductance = spacing.powi(dim as i32 - 1);
    let mut edges = Vec::with_capacity(dim * n);
    for (v, l) in lattice.iter().enumerate() {
        for k in 0..dim {
            if (l[k] as usize) + 1 < side {
                edges.push(Edge {
                    a: v,
                    b: v + stride[k],
                    length: spacing,
                    conductance,
                });
            }
        }
    }
    let measure = vec![spacing.powi(dim as i32); n];
    let chart = GridChart::new(dim, spacing, lattice)?;
    MetricGraph::new(measure, edges, Some(chart))
}

/// Vertex id of a lattice index on a grid from [`build_grid`].
pub fn grid_vertex(side: usize, index: &[usize]) -> VertexId {
    index.iter().rev().fold(0, |acc, &i| acc * side + i)
}

/// Open ball `{y : d(x0, y) < r}`.
pub fn ball(g: &MetricGraph, x0: VertexId, r: f64) -> VertexSet {
    let d = g.distances_from(x0);
    VertexSet::from_predicate(g.len(), |v| d[v] < r)
}

/// Closed ball `{y : d(x0, y) ≤ r}`.
pub fn closed_ball(g: &MetricGraph, x0: VertexId, r: f64) -> VertexSet {
    let d = g.distances_from(x0);
    VertexSet::from_predicate(g.len(), |v| d[v] <= r)
}

/// Sphere band of the default width, `None` when no vertex falls in it.
pub fn sphere_band(g: &MetricGraph, x0: VertexId, r: f64) -> Option<VertexSet> {
    sphere_band_with_width(g, x0, r, g.band_width())
}

/// `{y : r - w/2 ≤ d(x0, y) < r + w/2}`, `None` when empty.
pub fn sphere_band_with_width(g: &MetricGraph, x0: VertexId, r: f64, w: f64) -> Option<VertexSet> {
    let d = g.distances_from(x0);
    let lo = r - 0.5 * w;
    let hi = r + 0.5 * w;
    let s = VertexSet::from_predicate(g.len(), |v| d[v] >= lo && d[v] < hi);
    (!s.is_empty()).then_some(s)
}

/// A Poincaré inequality sample on the ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincareSample {
    pub center: VertexId,
    pub radius: f64,
    pub field: String,
    /// Mean oscillation `⨍|u - u_B|`.
    pub left: f64,
    /// `r (⨍ g^p)^{1/p}` with `g` the chart gradient norm or the edge upper gradient.
    pub right: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub doubling: f64,
    pub ahlfors_q: f64,
    pub ahlfors_residual: f64,
    pub pointwise_dimension: f64,
    /// Smallest `C` with `left ≤ C·right` over all samples.
    pub poincare_constant: f64,
    pub poincare: Vec<PoincareSample>,
}

/// Samples doubling, Ahlfors and Poincaré behavior around `x0`.
pub fn estimate_regularity(g: &MetricGraph, x0: VertexId, radii: &[f64], p: f64) -> Result<RegularityReport> {
    if x0 >= g.len() {
        return Err(Error::param("x0", format!("vertex {x0} not in graph")));
    }
    if radii.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 radii, got {}", radii.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::param("p", format!("must be at least 1, got {p}")));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::param("radii", "must be positive and increasing"));
    }
    let diam = g.diameter_estimate(x0);
    if let Some(r) = radii.iter().find(|r| **r >= diam) {
        return Err(Error::param(
            "radii",
            format!("radius {r} is not below the diameter {diam}"),
        ));
    }

    let d0 = g.distances_from(x0);
    let ball_measure = |d: &[f64], r: f64| -> f64 {
        d.iter()
            .zip(g.measures())
            .filter(|(di, _)| **di < r)
            .map(|(_, m)| m)
            .sum()
    };

    let masses: Vec<f64> = radii.iter().map(|&r| ball_measure(&d0, r)).collect();
    let fit = log_log_fit(radii, &masses)?;
    let half = (radii.len() / 2).max(2);
    let local = log_log_fit(&radii[..half], &masses[..half])?;

    // Doubling is sampled at x0 and a few vertices of the innermost band.
    let mut centers = vec![x0];
    if let Some(band) = sphere_band(g, x0, radii[0]) {
        let members: Vec<_> = band.iter().collect();
        let step = (members.len() / 4).max(1);
        centers.extend(members.iter().step_by(step).take(4));
    }
    let mut doubling: f64 = 1.0;
    for &c in &centers {
        let d = g.distances_from(c);
        for &r in radii {
            let small = ball_measure(&d, r);
            let big = ball_measure(&d, 2.0 * r);
            doubling = doubling.max(big / small);
        }
    }

    let fields = poincare_fields(g, x0);
    let mut poincare = Vec::new();
    for (name, u) in &fields {
        let grad = upper_gradient_norms(g, u);
        for &r in radii {
            let members: Vec<_> = (0..g.len()).filter(|v| d0[*v] < r).collect();
            let mass: f64 = members.iter().map(|v| g.measure(*v)).sum();
            let mean = members.iter().map(|v| u[*v] * g.measure(*v)).sum::<f64>() / mass;
            let left = members
                .iter()
                .map(|v| (u[*v] - mean).abs() * g.measure(*v))
                .sum::<f64>()
                / mass;
            let gp = members
                .iter()
                .map(|v| grad[*v].powf(p) * g.measure(*v))
                .sum::<f64>()
                / mass;
            poincare.push(PoincareSample {
                center: x0,
                radius: r,
                field: name.clone(),
                left,
                right: r * gp.powf(1.0 / p),
            });
        }
    }
    let poincare_constant = poincare
        .iter()
        .filter(|s| s.right > 0.0)
        .map(|s| s.left / s.right)
        .fold(0.0, f64::max);

    Ok(RegularityReport {
        doubling,
        ahlfors_q: fit.slope,
        ahlfors_residual: fit.residual,
        pointwise_dimension: local.slope,
        poincare_constant,
        poincare,
    })
}

fn poincare_fields(g: &MetricGraph, x0: VertexId) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = Vec::new();
    match g.chart() {
        Some(c) => {
            for k in 0..c.dim() {
                out.push((
                    format!("coordinate{k}"),
                    (0..g.len()).map(|v| c.coordinates(v)[k]).collect(),
                ));
            }
            for i in 0..3 {
                let mut freq = [0.0; 3];
                let mut phase = [0.0; 3];
                for k in 0..c.dim() {
                    freq[k] = rng.random_range(0.5..3.0);
                    phase[k] = rng.random_range(0.0..std::f64::consts::TAU);
                }
                let u = (0..g.len())
                    .map(|v| {
                        let x = c.coordinates(v);
                        (0..c.dim()).map(|k| (freq[k] * x[k] + phase[k]).sin()).sum()
                    })
                    .collect();
                out.push((format!("smooth{i}"), u));
            }
        }
        None => {
            out.push(("distance".into(), g.distances_from(x0).to_vec()));
            for i in 0..3 {
                let y = rng.random_range(0..g.len());
                out.push((format!("distance{i}"), g.distances_from(y).to_vec()));
            }
        }
    }
    out
}

/// Vertex-wise gradient norm: chart vector length when a chart exists,
/// otherwise the largest incident difference quotient.
fn upper_gradient_norms(g: &MetricGraph, u: &[f64]) -> Vec<f64> {
    match g.chart() {
        Some(c) => (0..g.len())
            .map(|v| {
                (0..c.dim())
                    .filter_map(|k| c.forward(v, k).map(|w| (u[w] - u[v]) / c.spacing()))
                    .map(|q| q * q)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect(),
        None => (0..g.len())
            .map(|v| {
                g.neighbors(v)
                    .iter()
                    .map(|&(w, ei)| (u[w] - u[v]).abs() / g.edges()[ei].length)
                    .fold(0.0, f64::max)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_path() {
        let g = build_grid(1, 3, 0.5).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edges().len(), 2);
        assert!(g.edges().iter().all(|e| e.length == 0.5));
        assert!(g.measures().iter().all(|m| *m == 0.5));
    }

    #[test]
    fn three_by_three() {
        let g = build_grid(2, 3, 1.0).unwrap();
        assert_eq!(g.edges().len(), 12);
        assert_eq!(g.set_measure(&g.all()), 9.0);
    }

    #[test]
    fn invalid_grid_parameters_are_named() {
        match build_grid(4, 3, 1.0) {
            Err(Error::Construction { name, .. }) => assert_eq!(name, "dimension"),
            other => panic!("unexpected {other:?}"),
        }
        match build_grid(2, 1, 1.0) {
            Err(Error::Construction { name, .. }) => assert_eq!(name, "side"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let e = vec![Edge {
            a: 0,
            b: 1,
            length: 1.0,
            conductance: 1.0,
        }];
        assert!(MetricGraph::new(vec![1.0; 3], e, None).is_err());
    }

    #[test]
    fn balls_on_path() {
        let g = build_grid(1, 7, 1.0).unwrap();
        let b = ball(&g, 3, 1.5);
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(ball(&g, 3, 0.5).iter().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn bands() {
        let g = build_grid(2, 9, 1.0)
            .unwrap()
            .with_metric(MetricKind::ShortestPath)
            .unwrap();
        let c = grid_vertex(9, &[4, 4]);
        assert_eq!(sphere_band(&g, c, 1.0).unwrap().len(), 4);
        assert!(sphere_band_with_width(&g, c, 1.5, 0.2).is_none());
        let p = build_grid(1, 9, 0.25).unwrap();
        let b = sphere_band(&p, 4, 0.75).unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![1, 7]);
    }

    #[test]
    fn grid_vertex_matches_coordinates() {
        let g = build_grid(3, 4, 1.0).unwrap();
        let v = grid_vertex(4, &[1, 2, 3]);
        assert_eq!(g.chart().unwrap().lattice(v), [1, 2, 3]);
    }

    #[test]
    fn center_of_odd_grid() {
        let g = build_grid(2, 5, 1.0).unwrap();
        assert_eq!(g.center_vertex(), Some(grid_vertex(5, &[2, 2])));
    }
}
