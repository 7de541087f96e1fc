//! Variational capacities of condensers and the checks built on them.

use crate::calculus::{EnergyModel, GradientMode, Plate, ScalarField};
use crate::dirichlet::{solve_dirichlet, DirichletProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::fit::log_log_fit;
use crate::report::{Report, ReportRow};
use crate::space::{build_grid, MetricGraph, VertexId, VertexSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CondenserKind {
    /// `(K, Ω)`: the outer plate is the complement of `Ω` and the energy
    /// is taken over the whole graph.
    Relative,
    /// `(E, F; Ω)`: the energy is taken over `Ω ∪ E ∪ F` only.
    Condenser,
}

/// A pair of disjoint plates inside an ambient set.
#[derive(Clone, Debug, PartialEq)]
pub struct Condenser {
    inner: Plate,
    outer: Plate,
    omega: VertexSet,
    domain: VertexSet,
    kind: CondenserKind,
}

impl Condenser {
    /// Relative condenser `(K, Ω)`.
    pub fn relative(g: &MetricGraph, k: VertexSet, omega: VertexSet) -> Result<Self> {
        check_sets(g, &[&k, &omega])?;
        let outer = Plate::vertices(omega.complement());
        Self::from_plates(g, Plate::vertices(k), outer, omega, CondenserKind::Relative)
    }

    /// Condenser `(E, F; Ω)`.
    pub fn new(g: &MetricGraph, e: VertexSet, f: VertexSet, omega: VertexSet) -> Result<Self> {
        check_sets(g, &[&e, &f, &omega])?;
        Self::from_plates(
            g,
            Plate::vertices(e),
            Plate::vertices(f),
            omega,
            CondenserKind::Condenser,
        )
    }

    pub fn from_plates(
        g: &MetricGraph,
        inner: Plate,
        outer: Plate,
        omega: VertexSet,
        kind: CondenserKind,
    ) -> Result<Self> {
        check_sets(g, &[&inner.members, &outer.members, &omega])?;
        let domain = match kind {
            CondenserKind::Relative => g.all(),
            CondenserKind::Condenser => omega.union(&inner.members).union(&outer.members),
        };
        Ok(Condenser {
            inner,
            outer,
            omega,
            domain,
            kind,
        })
    }

    /// `(B̄(x0, r), B(x0, R))` with both plate boundaries placed on the
    /// exact spheres by cutting lattice edges.
    pub fn ring(g: &MetricGraph, x0: VertexId, r: f64, big_r: f64) -> Result<Self> {
        if !(r > 0.0 && r < big_r) {
            return Err(Error::param(
                "r",
                format!("need 0 < r < R, got r = {r}, R = {big_r}"),
            ));
        }
        let d = g.distances_from(x0);
        let inner = Plate::from_level(d.iter().map(|x| r - x).collect());
        let outer = Plate::from_level(d.iter().map(|x| x - big_r).collect());
        let omega = VertexSet::from_predicate(g.len(), |v| d[v] < big_r);
        Self::from_plates(g, inner, outer, omega, CondenserKind::Relative)
    }

    /// The same condenser with the roles of the plates exchanged.
    pub fn swapped(&self) -> Self {
        Condenser {
            inner: self.outer.clone(),
            outer: self.inner.clone(),
            ..self.clone()
        }
    }

    pub fn inner(&self) -> &Plate {
        &self.inner
    }

    pub fn outer(&self) -> &Plate {
        &self.outer
    }

    pub fn omega(&self) -> &VertexSet {
        &self.omega
    }

    /// Vertices carrying energy terms.
    pub fn domain(&self) -> &VertexSet {
        &self.domain
    }

    pub fn kind(&self) -> CondenserKind {
        self.kind
    }

    pub fn energy_model(&self, g: &MetricGraph, p: f64, mode: GradientMode) -> Result<EnergyModel> {
        EnergyModel::with_plates(
            g,
            mode,
            &self.domain,
            &self.domain,
            false,
            p,
            &[&self.inner, &self.outer],
        )
    }

    /// Energy of `u` under this condenser's plate placement.
    pub fn energy(&self, g: &MetricGraph, u: &ScalarField, p: f64, mode: GradientMode) -> Result<f64> {
        Ok(self.energy_model(g, p, mode)?.energy(u.values()))
    }
}

fn check_sets(g: &MetricGraph, sets: &[&VertexSet]) -> Result<()> {
    if sets.iter().any(|s| s.universe() != g.len()) {
        return Err(Error::param("condenser", "vertex sets must belong to the graph"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityResult {
    pub value: f64,
    pub potential: ScalarField,
    pub residual: f64,
    pub p: f64,
    pub mode: GradientMode,
    /// How far the potential leaves `[0, 1]`; zero up to solver accuracy.
    pub excursion: f64,
}

/// Outcome of a capacity computation.
#[derive(Clone, Debug, PartialEq)]
pub enum Capacity {
    Finite(CapacityResult),
    /// No path joins the plates inside the domain.
    Zero,
    /// The plates intersect, so no admissible function exists.
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapacityValue {
    Finite(f64),
    Zero,
    Infinite,
}

impl CapacityValue {
    /// The numeric value, `None` for infinite capacity.
    pub fn finite(self) -> Option<f64> {
        match self {
            CapacityValue::Finite(v) => Some(v),
            CapacityValue::Zero => Some(0.0),
            CapacityValue::Infinite => None,
        }
    }
}

impl Capacity {
    pub fn value(&self) -> CapacityValue {
        match self {
            Capacity::Finite(r) => CapacityValue::Finite(r.value),
            Capacity::Zero => CapacityValue::Zero,
            Capacity::Infinite => CapacityValue::Infinite,
        }
    }

    /// The solved potential, or a degeneracy error.
    pub fn into_result(self) -> Result<CapacityResult> {
        match self {
            Capacity::Finite(r) => Ok(r),
            Capacity::Zero => Err(Error::Degenerate(
                "plates are not connected: capacity is zero".into(),
            )),
            Capacity::Infinite => Err(Error::Degenerate("plates intersect: capacity is infinite".into())),
        }
    }
}

/// Solves for the p-potential: 1 on the inner plate, 0 on the outer plate,
/// p-harmonic in between. Free components touching a single plate take that
/// plate's value; components touching neither are set to zero.
pub fn p_potential(g: &MetricGraph, c: &Condenser, cfg: &SolverConfig) -> Result<Capacity> {
    cfg.validate()?;
    let e = &c.inner.members;
    let f = &c.outer.members;
    if !e.is_disjoint(f) {
        return Ok(Capacity::Infinite);
    }
    if e.is_empty() || f.is_empty() {
        return Ok(Capacity::Zero);
    }
    let domain = &c.domain;
    let plates = e.union(f);
    let free = domain.difference(&plates);

    let mut joined = false;
    let mut values = vec![0.0; g.len()];
    for v in e.iter() {
        values[v] = 1.0;
    }
    let mut omega = VertexSet::empty(g.len());
    for comp in g.components(&free) {
        let touches = |plate: &VertexSet| g.outer_boundary(&comp).iter().any(|w| plate.contains(w));
        match (touches(e), touches(f)) {
            (true, true) => {
                joined = true;
                omega = omega.union(&comp);
            }
            (true, false) => comp.iter().for_each(|v| values[v] = 1.0),
            _ => {}
        }
    }
    if !joined {
        let direct = e.iter().any(|v| {
            g.neighbors(v)
                .iter()
                .any(|&(w, _)| f.contains(w) && domain.contains(w))
        });
        if !direct {
            return Ok(Capacity::Zero);
        }
    }
    let boundary = ScalarField::on(domain.difference(&omega), values)?;
    let prob = DirichletProblem::on_domain(g, domain.clone(), omega, boundary)?
        .with_plates(vec![c.inner.clone(), c.outer.clone()]);
    let sol = solve_dirichlet(&prob, cfg)?;
    let excursion = domain
        .iter()
        .map(|v| {
            let x = sol.field.values()[v];
            (-x).max(x - 1.0).max(0.0)
        })
        .fold(0.0, f64::max);
    Ok(Capacity::Finite(CapacityResult {
        value: sol.energy,
        potential: sol.field,
        residual: sol.residual,
        p: cfg.p,
        mode: cfg.mode,
        excursion,
    }))
}

/// The capacity value alone.
pub fn capacity(g: &MetricGraph, c: &Condenser, cfg: &SolverConfig) -> Result<CapacityValue> {
    Ok(p_potential(g, c, cfg)?.value())
}

/// Capacity of the level-set condenser of a potential.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetCapacity {
    pub value: f64,
    /// `cap / (β - α)^{p-1}` of the original condenser.
    pub expected: f64,
    /// `|value - expected| / expected`.
    pub gap: f64,
    /// `clamp((u - α)/(β - α), 0, 1)`.
    pub truncated: ScalarField,
    /// Energy of `truncated` in the level-set condenser.
    pub truncated_energy: f64,
}

/// Capacity of `({u ≥ β}, {u > α})` for the potential `u` of `c`, compared
/// with `cap(c) / (β - α)^{p-1}`.
pub fn level_set_capacity(
    g: &MetricGraph,
    c: &Condenser,
    res: &CapacityResult,
    alpha: f64,
    beta: f64,
    cfg: &SolverConfig,
) -> Result<LevelSetCapacity> {
    if !(0.0 <= alpha && alpha < beta && beta <= 1.0) {
        return Err(Error::param(
            "alpha",
            format!("need 0 ≤ α < β ≤ 1, got α = {alpha}, β = {beta}"),
        ));
    }
    let lc = level_condenser(g, c, &res.potential, alpha, beta, 1.0, 0.0)?;
    let mut cfg = cfg.clone();
    cfg.p = res.p;
    cfg.mode = res.mode;
    let value = match p_potential(g, &lc, &cfg)? {
        Capacity::Finite(r) => r.value,
        Capacity::Zero => 0.0,
        Capacity::Infinite => {
            return Err(Error::Degenerate("level sets intersect".into()));
        }
    };
    let expected = res.value / (beta - alpha).powf(res.p - 1.0);
    let truncated = res
        .potential
        .map(|x| ((x - alpha) / (beta - alpha)).clamp(0.0, 1.0));
    let truncated_energy = lc.energy(g, &truncated, res.p, res.mode)?;
    Ok(LevelSetCapacity {
        value,
        expected,
        gap: (value - expected).abs() / expected,
        truncated,
        truncated_energy,
    })
}

/// `({u ≥ β}, {u ≤ α})` inside the domain of `c`. Plate boundaries follow the
/// piecewise linear interpolation of `u`, which takes the value `top` on the
/// inner plate of `c` and `bottom` on its outer plate.
pub(crate) fn level_condenser(
    g: &MetricGraph,
    c: &Condenser,
    u: &ScalarField,
    alpha: f64,
    beta: f64,
    top: f64,
    bottom: f64,
) -> Result<Condenser> {
    let within = c.domain.intersection(u.domain());
    let vals = u.values().to_vec();
    let inner = Plate::superlevel(vals.clone(), beta, top, Some(c.inner.clone()), &within);
    let neg: Vec<f64> = vals.iter().map(|x| -x).collect();
    let outer = Plate::superlevel(neg, -alpha, -bottom, Some(c.outer.clone()), &within);
    if inner.members.is_empty() {
        return Err(Error::Degenerate(format!(
            "superlevel set {{u ≥ {beta}}} is empty"
        )));
    }
    if outer.members.is_empty() {
        return Err(Error::Degenerate(format!(
            "sublevel set {{u ≤ {alpha}}} is empty"
        )));
    }
    let omega = match c.kind {
        CondenserKind::Relative => outer.members.complement(),
        CondenserKind::Condenser => c.omega.clone(),
    };
    Condenser::from_plates(g, inner, outer, omega, c.kind)
}

/// One instance for [`capacity_calculus_check`].
#[derive(Clone, Debug, PartialEq)]
pub enum CalculusInstance {
    /// `K1 ⊂ K2`: `cap(K1, Ω) ≤ cap(K2, Ω)`.
    Monotone {
        k1: VertexSet,
        k2: VertexSet,
        omega: VertexSet,
    },
    /// `Ω1 ⊂ Ω2`: `cap(K, Ω2) ≤ cap(K, Ω1)`.
    Antitone {
        k: VertexSet,
        omega1: VertexSet,
        omega2: VertexSet,
    },
    /// Decreasing chain ending at its intersection.
    DecreasingChain { chain: Vec<VertexSet>, omega: VertexSet },
    /// `cap(∪K_i, Ω) ≤ Σ cap(K_i, Ω)`.
    Subadditive { parts: Vec<VertexSet>, omega: VertexSet },
    /// `E_1 ⊂ Ω_1 ⊂ E_2 ⊂ Ω_2 ⊂ …`:
    /// `cap(E_1, Ω)^{1/(1-p)} ≥ Σ cap(E_i, Ω_i)^{1/(1-p)}` with `Ω` the last `Ω_i`.
    Nesting {
        e: Vec<VertexSet>,
        omegas: Vec<VertexSet>,
    },
}

impl CalculusInstance {
    pub fn property(&self) -> &'static str {
        match self {
            CalculusInstance::Monotone { .. } => "monotone",
            CalculusInstance::Antitone { .. } => "antitone",
            CalculusInstance::DecreasingChain { .. } => "decreasing_chain",
            CalculusInstance::Subadditive { .. } => "subadditive",
            CalculusInstance::Nesting { .. } => "nesting",
        }
    }
}

/// Relative tolerance for inequalities between independently solved capacities.
pub const CALCULUS_TOL: f64 = 1e-8;

fn rel_cap(g: &MetricGraph, k: &VertexSet, omega: &VertexSet, cfg: &SolverConfig) -> Result<f64> {
    let c = Condenser::relative(g, k.clone(), omega.clone())?;
    capacity(g, &c, cfg)?
        .finite()
        .ok_or_else(|| Error::Degenerate("compact set meets the complement of Ω".into()))
}

/// Margin of one calculus instance: positive or zero means the inequality
/// holds, and the row passes when the margin exceeds `-CALCULUS_TOL`.
pub fn calculus_margin(g: &MetricGraph, inst: &CalculusInstance, cfg: &SolverConfig) -> Result<f64> {
    let rel = |a: f64, b: f64| (a - b) / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    Ok(match inst {
        CalculusInstance::Monotone { k1, k2, omega } => {
            rel(rel_cap(g, k2, omega, cfg)?, rel_cap(g, k1, omega, cfg)?)
        }
        CalculusInstance::Antitone { k, omega1, omega2 } => {
            rel(rel_cap(g, k, omega1, cfg)?, rel_cap(g, k, omega2, cfg)?)
        }
        CalculusInstance::DecreasingChain { chain, omega } => {
            let caps = chain
                .iter()
                .map(|k| rel_cap(g, k, omega, cfg))
                .collect::<Result<Vec<_>>>()?;
            let limit = chain
                .iter()
                .skip(1)
                .fold(chain[0].clone(), |acc, k| acc.intersection(k));
            let lim = rel_cap(g, &limit, omega, cfg)?;
            let last = *caps.last().expect("nonempty chain");
            let steps = caps
                .windows(2)
                .map(|w| rel(w[0], w[1]))
                .fold(f64::INFINITY, f64::min);
            steps.min(-rel(last, lim).abs())
        }
        CalculusInstance::Subadditive { parts, omega } => {
            let union = parts.iter().skip(1).fold(parts[0].clone(), |acc, k| acc.union(k));
            let total: f64 = parts
                .iter()
                .map(|k| rel_cap(g, k, omega, cfg))
                .sum::<Result<f64>>()?;
            rel(total, rel_cap(g, &union, omega, cfg)?)
        }
        CalculusInstance::Nesting { e, omegas } => {
            let q = 1.0 / (1.0 - cfg.p);
            let big = omegas.last().expect("nonempty nesting");
            let lhs = rel_cap(g, &e[0], big, cfg)?.powf(q);
            let rhs: f64 = e
                .iter()
                .zip(omegas)
                .map(|(ei, oi)| rel_cap(g, ei, oi, cfg).map(|c| c.powf(q)))
                .sum::<Result<f64>>()?;
            rel(lhs, rhs)
        }
    })
}

/// Verifies the capacity calculus on each instance; one report row each.
pub fn capacity_calculus_check(
    g: &MetricGraph,
    instances: &[CalculusInstance],
    cfg: &SolverConfig,
) -> Report {
    let mut report = Report::default();
    for (i, inst) in instances.iter().enumerate() {
        let id = format!("{}_{i}", inst.property());
        match calculus_margin(g, inst, cfg) {
            Ok(m) => report.push(ReportRow::new(id, "margin", m, Some(-CALCULUS_TOL), None)),
            Err(e) => report.push(ReportRow::failed(id, &format!("error: {e}"))),
        }
    }
    report
}

/// Which bound form applies at the pole.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RingBranch {
    /// `1 < p < Q(x0)`: power form `μ(B_r)/r^p`.
    Power,
    /// `p = Q(x0)`: logarithmic form `log(R/r)^{1-Q}`.
    Log,
    /// `p > Q(x0)`: the estimates do not apply.
    Inapplicable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingRow {
    pub r: f64,
    pub big_r: f64,
    pub capacity: f64,
    pub lower_form: f64,
    pub upper_form: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RingReport {
    pub branch: RingBranch,
    pub q: f64,
    pub rows: Vec<RingRow>,
    /// Largest `C` with `cap ≥ C·lower_form` across the sweep.
    pub c_low: f64,
    /// Smallest `C` with `cap ≤ C·upper_form` across the sweep.
    pub c_high: f64,
    /// `(max - min)/max` of `cap/upper_form` over the sweep.
    pub variation: f64,
    pub pass: bool,
    pub note: String,
}

/// Ring capacity bounds over a sweep of radius pairs.
///
/// `q` is the pointwise dimension at `x0`; `p` within 5% of `q` selects the
/// logarithmic branch. The sweep passes when `cap/upper_form` varies by at
/// most `stability` and the fitted lower constant is positive.
pub fn ring_bounds_check(
    g: &MetricGraph,
    x0: VertexId,
    pairs: &[(f64, f64)],
    q: f64,
    r0: f64,
    stability: f64,
    cfg: &SolverConfig,
) -> Result<RingReport> {
    let p = cfg.p;
    for &(r, big_r) in pairs {
        if !(r > 0.0 && r < big_r) {
            return Err(Error::param("r", format!("need 0 < r < R, got ({r}, {big_r})")));
        }
        if big_r > r0 {
            return Err(Error::param("R", format!("R = {big_r} exceeds R0 = {r0}")));
        }
    }
    let branch = if (p - q).abs() <= 0.05 * q {
        RingBranch::Log
    } else if p < q {
        RingBranch::Power
    } else {
        RingBranch::Inapplicable
    };
    if branch == RingBranch::Inapplicable {
        return Ok(RingReport {
            branch,
            q,
            rows: Vec::new(),
            c_low: 0.0,
            c_high: 0.0,
            variation: 0.0,
            pass: true,
            note: format!("p = {p} exceeds Q(x0) = {q}: branch inapplicable"),
        });
    }
    let d = g.distances_from(x0);
    let mut rows = Vec::with_capacity(pairs.len());
    for &(r, big_r) in pairs {
        let c = Condenser::ring(g, x0, r, big_r)?;
        let cap = capacity(g, &c, cfg)?
            .finite()
            .ok_or_else(|| Error::Degenerate("ring plates intersect".into()))?;
        let mass: f64 = (0..g.len()).filter(|v| d[*v] < r).map(|v| g.measure(v)).sum();
        let shrink = 1.0 - r / big_r;
        let (lower_form, upper_form) = match branch {
            RingBranch::Power => {
                let f = mass / r.powf(p);
                (shrink.powf(p * (p - 1.0)) * f, f)
            }
            _ => {
                let f = (big_r / r).ln().powf(1.0 - q);
                (shrink.powf(q * (q - 1.0)) * f, f)
            }
        };
        rows.push(RingRow {
            r,
            big_r,
            capacity: cap,
            lower_form,
            upper_form,
        });
    }
    let lows: Vec<f64> = rows.iter().map(|r| r.capacity / r.lower_form).collect();
    let highs: Vec<f64> = rows.iter().map(|r| r.capacity / r.upper_form).collect();
    let c_low = lows.iter().copied().fold(f64::INFINITY, f64::min);
    let c_high = highs.iter().copied().fold(0.0, f64::max);
    let h_min = highs.iter().copied().fold(f64::INFINITY, f64::min);
    let variation = if c_high > 0.0 {
        (c_high - h_min) / c_high
    } else {
        0.0
    };
    Ok(RingReport {
        branch,
        q,
        pass: c_low > 0.0 && variation <= stability,
        rows,
        c_low,
        c_high,
        variation,
        note: String::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoewnerRow {
    /// Index of the pair in the input.
    pub pair: usize,
    /// `dist(E, F) / min(diam E, diam F)`.
    pub t: f64,
    pub capacity: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoewnerProfile {
    pub rows: Vec<LoewnerRow>,
    pub warnings: Vec<String>,
}

fn set_diameter(g: &MetricGraph, s: &VertexSet) -> f64 {
    s.iter()
        .map(|v| {
            let d = g.distances_from(v);
            s.iter().map(|w| d[w]).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// `(t, cap_Q(E, F; X))` for each pair of continua, sorted by `t`.
/// Distances and diameters use the graph metric.
pub fn loewner_profile(
    g: &MetricGraph,
    pairs: &[(VertexSet, VertexSet)],
    cfg: &SolverConfig,
) -> Result<LoewnerProfile> {
    let mut out = LoewnerProfile::default();
    for (i, (e, f)) in pairs.iter().enumerate() {
        let bad = [e, f].iter().find_map(|s| {
            if s.len() < 2 {
                Some("fewer than 2 vertices")
            } else if g.components(s).len() != 1 {
                Some("not connected")
            } else {
                None
            }
        });
        if let Some(why) = bad {
            out.warnings.push(format!("pair {i} skipped: continuum {why}"));
            continue;
        }
        if !e.is_disjoint(f) {
            out.warnings.push(format!("pair {i} skipped: continua intersect"));
            continue;
        }
        let dist_to_e = g.distances_to_set(e);
        let dist = f.iter().map(|v| dist_to_e[v]).fold(f64::INFINITY, f64::min);
        let diam = set_diameter(g, e).min(set_diameter(g, f));
        let c = Condenser::new(g, e.clone(), f.clone(), g.all())?;
        match capacity(g, &c, cfg)? {
            CapacityValue::Finite(v) => out.rows.push(LoewnerRow {
                pair: i,
                t: dist / diam,
                capacity: v,
            }),
            other => out.warnings.push(format!("pair {i} skipped: capacity {other:?}")),
        }
    }
    out.rows
        .sort_by(|a, b| a.t.total_cmp(&b.t).then(a.pair.cmp(&b.pair)));
    Ok(out)
}

/// `cap_p(K, Ω_i)` for each `(graph, K, Ω_i)` of an expanding sequence.
pub fn parabolicity_probe(
    instances: &[(&MetricGraph, VertexSet, VertexSet)],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    instances
        .iter()
        .map(|(g, k, omega)| rel_cap(g, k, omega, cfg))
        .collect()
}

/// Parabolicity probe on balls: `cap_p(B̄(x0, r), B(x0, R_i))` where each
/// `R_i` gets its own grid just large enough to hold the outer ball.
pub fn parabolicity_probe_balls(
    dim: usize,
    spacing: f64,
    r: f64,
    radii: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(radii.len());
    for &big_r in radii {
        let side = 2 * (big_r / spacing).ceil() as usize + 3;
        let g = build_grid(dim, side, spacing)?;
        let x0 = g.center_vertex().expect("grids have a chart");
        let c = Condenser::ring(&g, x0, r, big_r)?;
        out.push(
            capacity(&g, &c, cfg)?
                .finite()
                .ok_or_else(|| Error::Degenerate("ring plates intersect".into()))?,
        );
    }
    Ok(out)
}

/// Exponent `a` of the fitted decay `cap ≈ C·n^{-a}`.
pub fn decay_exponent(steps: &[f64], caps: &[f64]) -> Result<f64> {
    Ok(-log_log_fit(steps, caps)?.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::grid_vertex;

    fn unit_path(n: usize) -> MetricGraph {
        build_grid(1, n, 1.0 / (n - 1) as f64).unwrap()
    }

    #[test]
    fn single_resistor() {
        let e = vec![crate::space::Edge {
            a: 0,
            b: 1,
            length: 1.0,
            conductance: 1.0,
        }];
        let g = MetricGraph::new(vec![1.0, 1.0], e, None).unwrap();
        let c = Condenser::new(
            &g,
            VertexSet::from_ids(2, [0]),
            VertexSet::from_ids(2, [1]),
            g.all(),
        )
        .unwrap();
        let cfg = SolverConfig::default().with_mode(GradientMode::Edge);
        let r = p_potential(&g, &c, &cfg).unwrap().into_result().unwrap();
        assert_eq!(r.potential.values(), &[1.0, 0.0]);
        assert!((r.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interval_plates() {
        let g = unit_path(11);
        let e = VertexSet::from_predicate(11, |v| v <= 2);
        let f = VertexSet::from_predicate(11, |v| v >= 7);
        for (p, want) in [(2.0, 2.0), (3.0, 4.0)] {
            let c = Condenser::new(&g, e.clone(), f.clone(), g.all()).unwrap();
            let v = capacity(&g, &c, &SolverConfig::new(p).unwrap()).unwrap();
            assert!((v.finite().unwrap() - want).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn degenerate_outcomes() {
        let g = unit_path(6);
        let cfg = SolverConfig::default();
        let both = VertexSet::from_ids(6, [2]);
        let c = Condenser::new(&g, both.clone(), both.clone(), g.all()).unwrap();
        assert_eq!(capacity(&g, &c, &cfg).unwrap(), CapacityValue::Infinite);
        // Ω = everything: no outer plate.
        let c = Condenser::relative(&g, both.clone(), g.all()).unwrap();
        assert_eq!(capacity(&g, &c, &cfg).unwrap(), CapacityValue::Zero);
        // A condenser whose ambient set separates the plates.
        let c = Condenser::new(
            &g,
            VertexSet::from_ids(6, [0]),
            VertexSet::from_ids(6, [5]),
            VertexSet::from_ids(6, [1, 4]),
        )
        .unwrap();
        assert_eq!(capacity(&g, &c, &cfg).unwrap(), CapacityValue::Zero);
    }

    #[test]
    fn boundary_layer_when_k_is_omega() {
        let g = unit_path(11);
        let omega = VertexSet::from_predicate(11, |v| (3..=6).contains(&v));
        let c = Condenser::relative(&g, omega.clone(), omega.clone()).unwrap();
        let r = p_potential(&g, &c, &SolverConfig::default())
            .unwrap()
            .into_result()
            .unwrap();
        // Two boundary edges of length 0.1 each carry a unit jump.
        assert!((r.value - 20.0).abs() < 1e-9);
    }

    #[test]
    fn level_set_identity_in_one_dimension() {
        let g = unit_path(101);
        let k = VertexSet::from_ids(101, [50]);
        let omega = VertexSet::from_predicate(101, |v| v > 0 && v < 100);
        let c = Condenser::relative(&g, k, omega).unwrap();
        let cfg = SolverConfig::default();
        let r = p_potential(&g, &c, &cfg).unwrap().into_result().unwrap();
        assert!((r.value - 4.0).abs() < 1e-9);
        let l = level_set_capacity(&g, &c, &r, 0.0, 0.5, &cfg).unwrap();
        assert!((l.value - 8.0).abs() < 1e-8 && l.gap <= 1e-8, "{l:?}");
        let full = level_set_capacity(&g, &c, &r, 0.0, 1.0, &cfg).unwrap();
        assert!(full.gap < 1e-12);
        assert!(level_set_capacity(&g, &c, &r, 0.5, 0.2, &cfg).is_err());
    }

    #[test]
    fn ring_identity_with_cut_plates() {
        let g = unit_path(21);
        let c = Condenser::ring(&g, 10, 0.125, 0.375).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let cfg = SolverConfig::new(p).unwrap();
            let r = p_potential(&g, &c, &cfg).unwrap().into_result().unwrap();
            let want = 2.0 * 0.25f64.powf(1.0 - p);
            assert!((r.value - want).abs() < 1e-9 * want, "p={p} {}", r.value);
            let l = level_set_capacity(&g, &c, &r, 0.0, 1.0, &cfg).unwrap();
            assert!(l.gap < 1e-9, "p={p} gap={}", l.gap);
            let l = level_set_capacity(&g, &c, &r, 0.3, 0.8, &cfg).unwrap();
            assert!(l.gap < 1e-9, "p={p} gap={}", l.gap);
        }
    }

    #[test]
    fn ring_branch_guard_in_one_dimension() {
        let g = unit_path(41);
        let rep = ring_bounds_check(&g, 20, &[(0.1, 0.3)], 1.0, 0.5, 0.25, &SolverConfig::default()).unwrap();
        assert_eq!(rep.branch, RingBranch::Inapplicable);
        assert!(rep.note.contains("inapplicable"));
    }

    #[test]
    fn loewner_skips_degenerate_pairs() {
        let g = build_grid(2, 9, 1.0).unwrap();
        let a = VertexSet::from_ids(g.len(), [grid_vertex(9, &[1, 1])]);
        let e = VertexSet::from_ids(g.len(), [grid_vertex(9, &[1, 1]), grid_vertex(9, &[1, 2])]);
        let f = VertexSet::from_ids(g.len(), [grid_vertex(9, &[2, 1]), grid_vertex(9, &[2, 2])]);
        let prof = loewner_profile(&g, &[(a, f.clone()), (e, f)], &SolverConfig::default()).unwrap();
        assert_eq!(prof.warnings.len(), 1);
        assert_eq!(prof.rows.len(), 1);
        assert!(prof.rows[0].capacity > 0.0 && prof.rows[0].capacity.is_finite());
    }

    #[test]
    fn parabolicity_in_one_dimension() {
        let caps =
            parabolicity_probe_balls(1, 1.0, 1.0, &[4.0, 8.0, 16.0], &SolverConfig::default()).unwrap();
        for (c, big_r) in caps.iter().zip([4.0, 8.0, 16.0]) {
            assert!((c - 2.0 / (big_r - 1.0)).abs() < 1e-10);
        }
    }
}
