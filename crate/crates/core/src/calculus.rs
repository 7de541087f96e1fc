//! Discrete differential structure: chart and edge gradients, p-energy and
//! its first variation.

use crate::error::{Error, Result};
use crate::space::{MetricGraph, VertexId, VertexSet};

/// Smallest free fraction of a cut edge. Keeps coefficients finite when a
/// level crossing lands on a vertex.
const MIN_CUT_FRACTION: f64 = 1e-6;

/// Relative distance below which a vertex counts as lying on a level set.
const SNAP: f64 = 1e-9;

/// Values on a subset of the vertices of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    domain: VertexSet,
    values: Vec<f64>,
}

impl ScalarField {
    /// A field defined on every vertex.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let domain = VertexSet::full(values.len());
        Self::on(domain, values)
    }

    /// A field defined on `domain`. Entries outside it are ignored and
    /// stored as zero.
    pub fn on(domain: VertexSet, mut values: Vec<f64>) -> Result<Self> {
        if domain.universe() != values.len() {
            return Err(Error::param(
                "values",
                format!("{} values for a universe of {}", values.len(), domain.universe()),
            ));
        }
        for (v, x) in values.iter_mut().enumerate() {
            if domain.contains(v) {
                if !x.is_finite() {
                    return Err(Error::param("values", format!("non-finite value at vertex {v}")));
                }
            } else {
                *x = 0.0;
            }
        }
        Ok(ScalarField { domain, values })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ScalarField {
            domain: VertexSet::full(n),
            values: vec![c; n],
        }
    }

    pub fn from_fn(g: &MetricGraph, f: impl FnMut(VertexId) -> f64) -> Self {
        ScalarField {
            domain: g.all(),
            values: (0..g.len()).map(f).collect(),
        }
    }

    pub fn domain(&self) -> &VertexSet {
        &self.domain
    }

    /// Raw values indexed by vertex; zero outside the domain.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, v: VertexId) -> Option<f64> {
        self.domain.contains(v).then(|| self.values[v])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|x| s * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(v, x)| if self.domain.contains(v) { f(*x) } else { 0.0 })
            .collect();
        ScalarField {
            domain: self.domain.clone(),
            values,
        }
    }

    pub fn max_on(&self, set: &VertexSet) -> Option<f64> {
        set.iter()
            .filter_map(|v| self.get(v))
            .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x))))
    }

    pub fn min_on(&self, set: &VertexSet) -> Option<f64> {
        set.iter()
            .filter_map(|v| self.get(v))
            .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.min(x))))
    }
}

/// Which discrete differential is used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum GradientMode {
    /// Forward differences along the chart axes.
    #[default]
    Chart,
    /// Difference quotients along edges.
    Edge,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chart" => Ok(GradientMode::Chart),
            "edge" => Ok(GradientMode::Edge),
            _ => Err(Error::param(
                "mode",
                format!("expected `chart` or `edge`, got `{s}`"),
            )),
        }
    }
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradientMode::Chart => "chart",
            GradientMode::Edge => "edge",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GradientField {
    Chart {
        dim: usize,
        vectors: Vec<[f64; 3]>,
        defined: VertexSet,
    },
    /// One quotient per edge, oriented from `edge.a` to `edge.b`.
    Edge { quotients: Vec<Option<f64>> },
}

impl GradientField {
    pub fn mode(&self) -> GradientMode {
        match self {
            GradientField::Chart { .. } => GradientMode::Chart,
            GradientField::Edge { .. } => GradientMode::Edge,
        }
    }

    /// Euclidean length of the chart vector, or absolute edge quotient.
    pub fn norms(&self) -> Vec<Option<f64>> {
        match self {
            GradientField::Chart { vectors, defined, .. } => vectors
                .iter()
                .enumerate()
                .map(|(v, d)| defined.contains(v).then(|| norm3(d)))
                .collect(),
            GradientField::Edge { quotients } => quotients.iter().map(|q| q.map(f64::abs)).collect(),
        }
    }
}

fn norm3(d: &[f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn chart_of(g: &MetricGraph) -> Result<&crate::space::GridChart> {
    g.chart()
        .ok_or_else(|| Error::Precondition("chart mode requires a grid chart".into()))
}

/// Discrete gradient of `u` in the requested mode.
pub fn gradient(g: &MetricGraph, u: &ScalarField, mode: GradientMode) -> Result<GradientField> {
    check_universe(g, u)?;
    match mode {
        GradientMode::Chart => {
            let c = chart_of(g)?;
            let h = c.spacing();
            let mut vectors = vec![[0.0; 3]; g.len()];
            for v in u.domain().iter() {
                for k in 0..c.dim() {
                    if let Some(w) = c.forward(v, k) {
                        let uw = u.get(w).ok_or(Error::MissingValue(w))?;
                        vectors[v][k] = (uw - u.values[v]) / h;
                    }
                }
            }
            Ok(GradientField::Chart {
                dim: c.dim(),
                vectors,
                defined: u.domain().clone(),
            })
        }
        GradientMode::Edge => Ok(GradientField::Edge {
            quotients: g
                .edges()
                .iter()
                .map(|e| Some((u.get(e.b)? - u.get(e.a)?) / e.length))
                .collect(),
        }),
    }
}

fn check_universe(g: &MetricGraph, u: &ScalarField) -> Result<()> {
    if u.len() != g.len() {
        return Err(Error::param(
            "u",
            format!("field has {} entries, graph has {} vertices", u.len(), g.len()),
        ));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("must exceed 1, got {p}")));
    }
    Ok(())
}

/// How the boundary of a plate is located between lattice vertices.
#[derive(Clone, Debug, PartialEq)]
pub enum Placement {
    /// The plate boundary passes through its boundary vertices.
    Vertex,
    /// The zero set of a level function, positive inside the plate.
    Level(Vec<f64>),
    /// `{field ≥ threshold}` where `field` is linear along each edge, except
    /// on edges entering `base`, where it reaches `top` at the boundary of `base`.
    Superlevel {
        field: Vec<f64>,
        threshold: f64,
        top: f64,
        base: Option<Box<Plate>>,
    },
}

/// A plate of a condenser. Cut-edge placements shorten the free part of
/// each edge that crosses the plate boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Plate {
    pub members: VertexSet,
    pub placement: Placement,
}

impl Plate {
    pub fn vertices(members: VertexSet) -> Self {
        Plate {
            members,
            placement: Placement::Vertex,
        }
    }

    /// Plate `{level ≥ 0}`.
    pub fn from_level(level: Vec<f64>) -> Self {
        let members = VertexSet::from_mask(level.iter().map(|x| *x >= 0.0).collect());
        Plate {
            members,
            placement: Placement::Level(level),
        }
    }

    /// Plate `{field ≥ threshold} ∩ within`. Vertices within rounding of
    /// the threshold join the plate so no crossing degenerates to a point.
    pub fn superlevel(
        field: Vec<f64>,
        threshold: f64,
        top: f64,
        base: Option<Plate>,
        within: &VertexSet,
    ) -> Self {
        let scale = within
            .iter()
            .map(|v| field[v].abs())
            .fold(threshold.abs(), f64::max);
        let cut = threshold - SNAP * scale;
        let members = VertexSet::from_predicate(field.len(), |v| within.contains(v) && field[v] >= cut);
        Plate {
            members,
            placement: Placement::Superlevel {
                field,
                threshold,
                top,
                base: base.map(Box::new),
            },
        }
    }

    /// Parameter along `x → y` at which the plate is entered, for `x`
    /// outside and `y` inside.
    fn entry(&self, x: VertexId, y: VertexId) -> f64 {
        let t = match &self.placement {
            Placement::Vertex => 1.0,
            Placement::Level(phi) => {
                let (a, b) = (phi[x], phi[y]);
                if a < 0.0 && b >= 0.0 {
                    a / (a - b)
                } else {
                    1.0
                }
            }
            Placement::Superlevel {
                field,
                threshold,
                top,
                base,
            } => {
                let fx = field[x];
                let (reach, end) = match base {
                    Some(b) if b.members.contains(y) && !b.members.contains(x) => (b.entry(x, y), *top),
                    _ => (1.0, field[y]),
                };
                if end > fx {
                    reach * (threshold - fx) / (end - fx)
                } else {
                    reach
                }
            }
        };
        t.clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Leaf {
    v: u32,
    a: f64,
}

/// The p-energy as a sum of star terms `w·(Σ_k (a_k (u_{y_k} - u_x))²)^{p/2}`.
///
/// Chart mode has one term per vertex with its forward neighbors as leaves.
/// Edge mode has one single-leaf term per edge.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    p: f64,
    n: usize,
    centers: Vec<u32>,
    weights: Vec<f64>,
    starts: Vec<u32>,
    leaves: Vec<Leaf>,
}

impl EnergyModel {
    /// Energy of fields on `region`. In chart mode a forward neighbor outside
    /// `available` is an error when `strict`, otherwise its component is dropped.
    pub fn new(
        g: &MetricGraph,
        mode: GradientMode,
        region: &VertexSet,
        available: &VertexSet,
        strict: bool,
        p: f64,
    ) -> Result<Self> {
        Self::with_plates(g, mode, region, available, strict, p, &[])
    }

    pub fn with_plates(
        g: &MetricGraph,
        mode: GradientMode,
        region: &VertexSet,
        available: &VertexSet,
        strict: bool,
        p: f64,
        plates: &[&Plate],
    ) -> Result<Self> {
        let mut plate_of = vec![0u8; g.len()];
        for (i, pl) in plates.iter().enumerate() {
            for v in pl.members.iter() {
                plate_of[v] = i as u8 + 1;
            }
        }
        let cut = |x: VertexId, y: VertexId| -> f64 {
            let f = cut_fraction(plates, &plate_of, x, y);
            if f < 1.0 {
                f.powf(1.0 / p - 1.0)
            } else {
                1.0
            }
        };
        let mut m = EnergyModel {
            p,
            n: g.len(),
            centers: Vec::new(),
            weights: Vec::new(),
            starts: vec![0],
            leaves: Vec::new(),
        };
        match mode {
            GradientMode::Chart => {
                let c = chart_of(g)?;
                let a = 1.0 / c.spacing();
                for x in region.iter() {
                    let before = m.leaves.len();
                    for k in 0..c.dim() {
                        if let Some(y) = c.forward(x, k) {
                            if available.contains(y) {
                                m.leaves.push(Leaf {
                                    v: y as u32,
                                    a: a * cut(x, y),
                                });
                            } else if strict {
                                return Err(Error::MissingValue(y));
                            }
                        }
                    }
                    if m.leaves.len() > before {
                        m.centers.push(x as u32);
                        m.weights.push(g.measure(x));
                        m.starts.push(m.leaves.len() as u32);
                    }
                }
            }
            GradientMode::Edge => {
                for e in g.edges() {
                    if region.contains(e.a) && region.contains(e.b) {
                        m.centers.push(e.a as u32);
                        m.weights.push(e.conductance * e.length);
                        m.leaves.push(Leaf {
                            v: e.b as u32,
                            a: cut(e.a, e.b) / e.length,
                        });
                        m.starts.push(m.leaves.len() as u32);
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn num_terms(&self) -> usize {
        self.centers.len()
    }

    #[inline]
    fn term(&self, t: usize) -> (usize, f64, &[Leaf]) {
        let s = self.starts[t] as usize;
        let e = self.starts[t + 1] as usize;
        (self.centers[t] as usize, self.weights[t], &self.leaves[s..e])
    }

    /// Vertices touched by term `t`, center first.
    pub fn term_vertices(&self, t: usize) -> impl Iterator<Item = VertexId> + '_ {
        let (x, _, leaves) = self.term(t);
        std::iter::once(x).chain(leaves.iter().map(|l| l.v as usize))
    }

    #[inline]
    fn squared(&self, t: usize, u: &[f64]) -> f64 {
        let (x, _, leaves) = self.term(t);
        leaves
            .iter()
            .map(|l| {
                let c = l.a * (u[l.v as usize] - u[x]);
                c * c
            })
            .sum()
    }

    /// Unregularized energy of the raw value vector `u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.energy_reg(u, 0.0)
    }

    pub fn energy_reg(&self, u: &[f64], eps: f64) -> f64 {
        let half = 0.5 * self.p;
        (0..self.num_terms())
            .map(|t| self.weights[t] * (self.squared(t, u) + eps).powf(half))
            .sum()
    }

    /// Partial derivatives of the (regularized) energy for every vertex.
    pub fn gradient_reg(&self, u: &[f64], eps: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let e = 0.5 * self.p - 1.0;
        for t in 0..self.num_terms() {
            let s = self.squared(t, u) + eps;
            if s == 0.0 {
                continue;
            }
            let (x, w, leaves) = self.term(t);
            let sigma = w * self.p * s.powf(e);
            for l in leaves {
                let y = l.v as usize;
                let c = l.a * (u[y] - u[x]);
                let gc = sigma * c * l.a;
                out[y] += gc;
                out[x] -= gc;
            }
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        self.gradient_reg(u, 0.0, &mut g);
        g
    }

    /// `∫ |Du|^{p-2} Du·Dφ dμ`, the weak form paired with `phi`.
    pub fn pairing(&self, u: &[f64], phi: &[f64]) -> f64 {
        let e = 0.5 * self.p - 1.0;
        let mut total = 0.0;
        for t in 0..self.num_terms() {
            let s = self.squared(t, u);
            if s == 0.0 {
                continue;
            }
            let (x, w, leaves) = self.term(t);
            let dot: f64 = leaves
                .iter()
                .map(|l| {
                    let y = l.v as usize;
                    l.a * (u[y] - u[x]) * l.a * (phi[y] - phi[x])
                })
                .sum();
            total += w * s.powf(e) * dot;
        }
        total
    }

    /// `(Σ_terms ∋ v w·|Dδ_v|^p)^{1/p}`, the energy seminorm of the indicator of `v`.
    pub fn indicator_seminorms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n];
        for t in 0..self.num_terms() {
            let (x, w, leaves) = self.term(t);
            let s: f64 = leaves.iter().map(|l| l.a * l.a).sum();
            acc[x] += w * s.powf(0.5 * self.p);
            for l in leaves {
                acc[l.v as usize] += w * l.a.abs().powf(self.p);
            }
        }
        acc.into_iter().map(|x| x.powf(1.0 / self.p)).collect()
    }

    /// Visits the Hessian of the regularized energy term by term: `f(t, i, j, h)`
    /// adds `h` to entry `(i, j)`. The visiting order depends only on the model.
    pub(crate) fn hessian_terms(
        &self,
        u: &[f64],
        eps: f64,
        mut f: impl FnMut(usize, VertexId, VertexId, f64),
    ) {
        let p = self.p;
        let e1 = 0.5 * p - 1.0;
        let mut c = [0.0f64; 3];
        let mut a = [0.0f64; 3];
        let mut ys = [0usize; 3];
        for t in 0..self.num_terms() {
            let (x, w, leaves) = self.term(t);
            let k = leaves.len();
            for (i, l) in leaves.iter().enumerate() {
                ys[i] = l.v as usize;
                a[i] = l.a;
                c[i] = l.a * (u[ys[i]] - u[x]);
            }
            let s: f64 = c[..k].iter().map(|v| v * v).sum::<f64>() + eps;
            // Every pair is still visited at s = 0 so callers can rely on the order.
            let (d, o) = if s > 0.0 {
                (w * p * s.powf(e1), w * p * (p - 2.0) * s.powf(e1 - 1.0))
            } else if p == 2.0 {
                (w * p, 0.0)
            } else {
                (0.0, 0.0)
            };
            // Hessian in component space, mapped through c_i = a_i (u_{y_i} - u_x).
            for i in 0..k {
                for j in 0..k {
                    let hc = if i == j { d } else { 0.0 } + o * c[i] * c[j];
                    let h = hc * a[i] * a[j];
                    f(t, ys[i], ys[j], h);
                    f(t, ys[i], x, -h);
                    f(t, x, ys[j], -h);
                    f(t, x, x, h);
                }
            }
        }
    }
}

/// Fraction of the segment `x → y` that lies outside every plate.
fn cut_fraction(plates: &[&Plate], plate_of: &[u8], x: VertexId, y: VertexId) -> f64 {
    let (px, py) = (plate_of[x], plate_of[y]);
    if px == py {
        return 1.0;
    }
    let plate = |q: u8| plates[q as usize - 1];
    let start = if px == 0 { 0.0 } else { 1.0 - plate(px).entry(y, x) };
    let end = if py == 0 { 1.0 } else { plate(py).entry(x, y) };
    (end - start).clamp(MIN_CUT_FRACTION, 1.0)
}

/// p-energy of `u` over `region`.
pub fn p_energy(
    g: &MetricGraph,
    u: &ScalarField,
    p: f64,
    region: &VertexSet,
    mode: GradientMode,
) -> Result<f64> {
    check_p(p)?;
    energy_unchecked(g, u, p, region, mode)
}

fn energy_unchecked(
    g: &MetricGraph,
    u: &ScalarField,
    p: f64,
    region: &VertexSet,
    mode: GradientMode,
) -> Result<f64> {
    check_universe(g, u)?;
    if !region.is_subset(u.domain()) {
        return Err(Error::param(
            "region",
            "region is not contained in the field domain",
        ));
    }
    let m = EnergyModel::new(g, mode, region, u.domain(), true, p)?;
    Ok(m.energy(u.values()))
}

/// Partial derivatives of the p-energy of `u` over its domain with respect
/// to the values on `free`.
pub fn energy_gradient(
    g: &MetricGraph,
    u: &ScalarField,
    p: f64,
    free: &VertexSet,
    mode: GradientMode,
) -> Result<ScalarField> {
    check_p(p)?;
    check_universe(g, u)?;
    if !free.is_subset(u.domain()) {
        return Err(Error::param(
            "free",
            "free set is not contained in the field domain",
        ));
    }
    let m = EnergyModel::new(g, mode, u.domain(), u.domain(), true, p)?;
    ScalarField::on(free.clone(), m.gradient(u.values()))
}

/// `(Σ|u|^p μ)^{1/p} + (p-energy)^{1/p}` over the domain of `u`.
pub fn sobolev_norm(g: &MetricGraph, u: &ScalarField, p: f64, mode: GradientMode) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("must be at least 1, got {p}")));
    }
    let lp: f64 = u
        .domain()
        .iter()
        .map(|v| u.values[v].abs().powf(p) * g.measure(v))
        .sum();
    let e = energy_unchecked(g, u, p, u.domain(), mode)?;
    Ok(lp.powf(1.0 / p) + e.powf(1.0 / p))
}

/// Range of `|Du(x)| / max_{edges at x} |Δu|/ℓ` over vertices where both are nonzero.
pub fn comparability_ratio(g: &MetricGraph, u: &ScalarField) -> Result<(f64, f64)> {
    let grad = gradient(g, u, GradientMode::Chart)?;
    let chart = grad.norms();
    let mut upper = vec![0.0f64; g.len()];
    for e in g.edges() {
        if let (Some(a), Some(b)) = (u.get(e.a), u.get(e.b)) {
            let q = (b - a).abs() / e.length;
            upper[e.a] = upper[e.a].max(q);
            upper[e.b] = upper[e.b].max(q);
        }
    }
    let scale = upper.iter().copied().fold(0.0, f64::max);
    let floor = 1e-12 * scale;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for v in u.domain().iter() {
        let c = chart[v].unwrap_or(0.0);
        if c > floor && upper[v] > floor {
            let r = c / upper[v];
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if hi == 0.0 {
        return Err(Error::Degenerate(
            "comparability ratio undefined: field is constant".into(),
        ));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::build_grid;

    fn linear_1d(n: usize) -> (MetricGraph, ScalarField) {
        let g = build_grid(1, n + 1, 1.0 / n as f64).unwrap();
        let u = ScalarField::from_fn(&g, |v| v as f64 / n as f64);
        (g, u)
    }

    #[test]
    fn constant_has_zero_gradient_and_energy() {
        let g = build_grid(2, 5, 0.25).unwrap();
        let u = ScalarField::constant(g.len(), 3.0);
        for mode in [GradientMode::Chart, GradientMode::Edge] {
            let d = gradient(&g, &u, mode).unwrap();
            assert!(d.norms().iter().flatten().all(|x| *x == 0.0));
            assert_eq!(p_energy(&g, &u, 2.5, &g.all(), mode).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_energy_is_one_for_every_p() {
        let (g, u) = linear_1d(10);
        for p in [1.5, 2.0, 3.0] {
            for mode in [GradientMode::Chart, GradientMode::Edge] {
                let e = p_energy(&g, &u, p, &g.all(), mode).unwrap();
                assert!((e - 1.0).abs() < 1e-12, "p={p} {mode:?} e={e}");
            }
        }
    }

    #[test]
    fn forward_difference_of_square() {
        let h = 0.1;
        let g = build_grid(1, 11, h).unwrap();
        let u = ScalarField::from_fn(&g, |v| (v as f64 * h).powi(2));
        let GradientField::Chart { vectors, .. } = gradient(&g, &u, GradientMode::Chart).unwrap() else {
            unreachable!()
        };
        for v in 0..10 {
            let x = v as f64 * h;
            assert!((vectors[v][0] - (2.0 * x + h)).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_stencil_value_names_vertex() {
        let g = build_grid(1, 4, 1.0).unwrap();
        let u = ScalarField::on(VertexSet::from_ids(4, [0, 1]), vec![0.0; 4]).unwrap();
        match gradient(&g, &u, GradientMode::Chart) {
            Err(Error::MissingValue(2)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn three_vertex_derivative() {
        let g = build_grid(1, 3, 0.5).unwrap();
        for t in [0.2, 0.5, 0.9] {
            let u = ScalarField::new(vec![0.0, t, 1.0]).unwrap();
            let d = energy_gradient(&g, &u, 2.0, &VertexSet::from_ids(3, [1]), GradientMode::Chart).unwrap();
            // E = h·((t/h)² + ((1-t)/h)²), so dE/dt = 2(2t - 1)/h.
            assert!((d.get(1).unwrap() - 4.0 * (2.0 * t - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn p_at_most_one_is_rejected() {
        let (g, u) = linear_1d(4);
        assert!(matches!(
            p_energy(&g, &u, 1.0, &g.all(), GradientMode::Chart),
            Err(Error::Parameter { name: "p", .. })
        ));
        assert!(sobolev_norm(&g, &u, 0.5, GradientMode::Chart).is_err());
        assert!(sobolev_norm(&g, &u, 1.0, GradientMode::Chart).is_ok());
    }

    #[test]
    fn sobolev_norm_of_constant() {
        let g = build_grid(2, 4, 0.5).unwrap();
        let u = ScalarField::constant(g.len(), 2.0);
        let m: f64 = g.set_measure(&g.all());
        let s = sobolev_norm(&g, &u, 3.0, GradientMode::Chart).unwrap();
        assert!((s - 2.0 * m.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn comparability_of_coordinate_fields() {
        let g = build_grid(2, 6, 0.2).unwrap();
        let c = g.chart().unwrap().clone();
        let x = ScalarField::from_fn(&g, |v| c.coordinates(v)[0]);
        let (lo, hi) = comparability_ratio(&g, &x).unwrap();
        assert!(lo >= 1.0 - 1e-12 && hi <= 2f64.sqrt() + 1e-12);
        let diag = ScalarField::from_fn(&g, |v| c.coordinates(v)[0] + c.coordinates(v)[1]);
        let (_, hi) = comparability_ratio(&g, &diag).unwrap();
        assert!((hi - 2f64.sqrt()).abs() < 1e-12);
        assert!(comparability_ratio(&g, &ScalarField::constant(g.len(), 1.0)).is_err());
    }

    #[test]
    fn cut_coefficient_is_exact_in_one_dimension() {
        // Plates {x ≤ 0.25} and {x ≥ 0.65} on a lattice of spacing 0.1.
        let h = 0.1;
        let g = build_grid(1, 11, h).unwrap();
        let x = |v: usize| v as f64 * h;
        let inner = Plate::from_level((0..11).map(|v| 0.25 - x(v)).collect());
        let outer = Plate::from_level((0..11).map(|v| x(v) - 0.65).collect());
        for p in [1.5, 2.0, 3.0] {
            let m = EnergyModel::with_plates(
                &g,
                GradientMode::Chart,
                &g.all(),
                &g.all(),
                true,
                p,
                &[&inner, &outer],
            )
            .unwrap();
            let u: Vec<f64> = (0..11).map(|v| ((0.65 - x(v)) / 0.4).clamp(0.0, 1.0)).collect();
            let e = m.energy(&u);
            assert!((e - 0.4f64.powf(1.0 - p)).abs() < 1e-12, "p={p} e={e}");
        }
    }
}
