//! Global Green functions with a logarithmic pole, built on expanding grids.
//!
//! Stage `i` solves the ring potential of `(B̄(x0, 2^{-i}), B(x0, 2^i))` on a
//! grid just large enough for the outer ball and rescales it so that its
//! range over the fixed annulus `{1 ≤ d < 2}` is `[0, 1]`. The deepest stage
//! is then multiplied by the constant that makes level-set capacities equal
//! `(β - α)^{1-Q}`.

use rayon::prelude::*;

use crate::calculus::{gradient, GradientMode, ScalarField};
use crate::capacity::{capacity, level_condenser, p_potential, Condenser};
use crate::dirichlet::{oscillation_profile, ProfileRow, SolverConfig};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LineFit};
use crate::report::{Report, ReportRow};
use crate::space::{build_grid, estimate_regularity, MetricGraph, VertexId};

/// Square lattices of one spacing, sized to hold a ball around their center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeFamily {
    pub dim: usize,
    pub spacing: f64,
}

impl LatticeFamily {
    pub fn new(dim: usize, spacing: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::param("dimension", format!("must be 1, 2 or 3, got {dim}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::param("spacing", "must be positive"));
        }
        Ok(LatticeFamily { dim, spacing })
    }

    /// Side length of the grid for an outer radius.
    pub fn side_for(&self, radius: f64) -> usize {
        2 * (radius / self.spacing).ceil() as usize + 3
    }

    pub fn vertices_for(&self, radius: f64) -> usize {
        self.side_for(radius).pow(self.dim as u32)
    }

    /// The grid for `radius` and its center vertex.
    pub fn grid(&self, radius: f64) -> Result<(MetricGraph, VertexId)> {
        let g = build_grid(self.dim, self.side_for(radius), self.spacing)?;
        let c = g.center_vertex().expect("grids carry a chart");
        Ok((g, c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalGreenOptions {
    pub stages: usize,
    /// Largest number of vertices allowed for one stage grid.
    pub max_vertices: usize,
    /// Allowed relative mismatch between `Q` and the fitted Ahlfors exponent.
    pub q_tol: f64,
}

impl Default for GlobalGreenOptions {
    fn default() -> Self {
        GlobalGreenOptions {
            stages: 4,
            max_vertices: 4_000_000,
            q_tol: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageTrace {
    pub stage: usize,
    pub r_in: f64,
    pub r_out: f64,
    pub min: f64,
    pub max: f64,
    pub divisor: f64,
    /// Sup change from the previous stage between its plates, `NaN` at the
    /// first stage.
    pub overlap_change: f64,
}

#[derive(Clone, Debug)]
pub struct GlobalGreenResult {
    /// Grid of the deepest stage.
    pub graph: MetricGraph,
    pub field: ScalarField,
    pub pole: VertexId,
    pub q: f64,
    pub mode: GradientMode,
    /// Final multiplier applied to the deepest stage.
    pub lambda: f64,
    /// Field value on the inner and outer plates of the deepest stage.
    pub inner_value: f64,
    pub outer_value: f64,
    pub trace: Vec<StageTrace>,
}

impl GlobalGreenResult {
    pub fn r_in(&self) -> f64 {
        self.trace.last().expect("at least one stage").r_in
    }

    pub fn r_out(&self) -> f64 {
        self.trace.last().expect("at least one stage").r_out
    }

    /// The ring condenser of the deepest stage.
    pub fn condenser(&self) -> Result<Condenser> {
        Condenser::ring(&self.graph, self.pole, self.r_in(), self.r_out())
    }

    /// `m(r)` and `M(r)` on sphere bands.
    pub fn profile(&self, radii: &[f64]) -> Vec<ProfileRow> {
        oscillation_profile(&self.graph, &self.field, self.pole, radii).rows
    }

    /// Value of the field at the vertex with the given lattice offset from the pole.
    pub fn at_offset(&self, offset: [i64; 3]) -> Option<f64> {
        let c = self.graph.chart()?;
        let o = c.lattice(self.pole);
        let v = c.vertex_at([o[0] + offset[0], o[1] + offset[1], o[2] + offset[2]])?;
        Some(self.field.values()[v])
    }

    /// Stage trace as CSV.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("stage,r_in,r_out,m_i,M_i,divisor,overlap_change\n");
        for t in &self.trace {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t.stage, t.r_in, t.r_out, t.min, t.max, t.divisor, t.overlap_change
            ));
        }
        s
    }
}

fn pole_offset(g: &MetricGraph, pole: VertexId, v: VertexId) -> [i64; 3] {
    let c = g.chart().expect("lattice grid");
    let (a, b) = (c.lattice(v), c.lattice(pole));
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Fitted Ahlfors exponent at the center of a small grid from the family.
pub fn lattice_dimension(family: &LatticeFamily) -> Result<f64> {
    let h = family.spacing;
    let (g, x0) = family.grid(32.0 * h)?;
    let radii = [4.0 * h, 8.0 * h, 16.0 * h];
    Ok(estimate_regularity(&g, x0, &radii, 2.0)?.ahlfors_q)
}

/// Global `Q`-harmonic Green function with pole at the grid centers.
pub fn green_global(
    family: &LatticeFamily,
    q: f64,
    cfg: &SolverConfig,
    opts: &GlobalGreenOptions,
) -> Result<GlobalGreenResult> {
    if opts.stages < 1 {
        return Err(Error::param("stages", "at least one stage is required"));
    }
    let fitted = lattice_dimension(family)?;
    if (fitted - q).abs() > opts.q_tol * q {
        return Err(Error::param(
            "Q",
            format!("Q = {q} does not match the fitted Ahlfors exponent {fitted:.3}"),
        ));
    }
    let feasible = (1..=opts.stages)
        .take_while(|&i| family.vertices_for(2f64.powi(i as i32)) <= opts.max_vertices)
        .last()
        .unwrap_or(0);
    if feasible < opts.stages {
        return Err(Error::Resource(format!(
            "stage {} needs {} vertices (budget {}); largest feasible stage is {feasible}",
            feasible + 1,
            family.vertices_for(2f64.powi(feasible as i32 + 1)),
            opts.max_vertices
        )));
    }
    let mut cfg = cfg.clone();
    cfg.p = q;
    cfg.validate()?;

    let mut trace = Vec::new();
    let mut prev: Option<(MetricGraph, VertexId, Vec<f64>, f64, f64)> = None;
    let mut last = None;
    for i in 1..=opts.stages {
        let r_in = 0.5f64.powi(i as i32);
        let r_out = 2f64.powi(i as i32);
        let (g, x0) = family.grid(r_out)?;
        let c = Condenser::ring(&g, x0, r_in, r_out)?;
        let u = p_potential(&g, &c, &cfg)?.into_result()?.potential;
        let d = g.distances_from(x0);
        let ring = (0..g.len()).filter(|v| d[*v] >= 1.0 && d[*v] < 2.0);
        let (lo, hi) = ring.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let x = u.values()[v];
            (lo.min(x), hi.max(x))
        });
        let divisor = hi - lo;
        if !(divisor > 0.0) {
            return Err(Error::Degenerate(format!(
                "stage {i}: the potential is constant on the reference annulus"
            )));
        }
        let v: Vec<f64> = u.values().iter().map(|x| (x - lo) / divisor).collect();
        let overlap_change = match &prev {
            Some((pg, px, pv, pr_in, pr_out)) => {
                let pd = pg.distances_from(*px);
                let chart = g.chart().expect("lattice grid");
                let o = chart.lattice(x0);
                (0..pg.len())
                    .filter(|w| pd[*w] > *pr_in && pd[*w] < *pr_out)
                    .map(|w| {
                        let off = pole_offset(pg, *px, w);
                        let here = chart
                            .vertex_at([o[0] + off[0], o[1] + off[1], o[2] + off[2]])
                            .expect("stage grids grow");
                        (v[here] - pv[w]).abs()
                    })
                    .fold(0.0, f64::max)
            }
            None => f64::NAN,
        };
        trace.push(StageTrace {
            stage: i,
            r_in,
            r_out,
            min: lo,
            max: hi,
            divisor,
            overlap_change,
        });
        if i == opts.stages {
            last = Some((g.clone(), x0, v.clone(), c, lo, divisor));
        }
        prev = Some((g, x0, v, r_in, r_out));
    }
    let (g, x0, v, c, lo, divisor) = last.expect("at least one stage");
    let inner = (1.0 - lo) / divisor;
    let outer = -lo / divisor;
    let vf = ScalarField::new(v)?;
    let lc = level_condenser(&g, &c, &vf, 0.0, 1.0, inner, outer)?;
    let cap = p_potential(&g, &lc, &cfg)?.into_result()?.value;
    let lambda = cap.powf(1.0 / (1.0 - q));
    Ok(GlobalGreenResult {
        field: vf.scaled(lambda),
        graph: g,
        pole: x0,
        q,
        mode: cfg.mode,
        lambda,
        inner_value: lambda * inner,
        outer_value: lambda * outer,
        trace,
    })
}

/// `cap_Q({u ≥ β}, {u > α})` against `(β - α)^{1-Q}`; returns the relative gap.
pub fn global_level_gap(gr: &GlobalGreenResult, alpha: f64, beta: f64, cfg: &SolverConfig) -> Result<f64> {
    if !(alpha < beta) {
        return Err(Error::param(
            "alpha",
            format!("need α < β, got ({alpha}, {beta})"),
        ));
    }
    if alpha <= gr.outer_value || beta >= gr.inner_value {
        return Err(Error::Degenerate(format!(
            "levels ({alpha}, {beta}) leave the range ({}, {}) of the truncated construction",
            gr.outer_value, gr.inner_value
        )));
    }
    let c = gr.condenser()?;
    let lc = level_condenser(
        &gr.graph,
        &c,
        &gr.field,
        alpha,
        beta,
        gr.inner_value,
        gr.outer_value,
    )?;
    let mut cfg = cfg.clone();
    cfg.p = gr.q;
    cfg.mode = gr.mode;
    let cap = p_potential(&gr.graph, &lc, &cfg)?.into_result()?.value;
    let want = (beta - alpha).powf(1.0 - gr.q);
    Ok((cap - want).abs() / want)
}

/// Level-set identity rows for sampled `(α, β)`.
pub fn validate_global(
    gr: &GlobalGreenResult,
    samples: &[(f64, f64)],
    cfg: &SolverConfig,
    tol: f64,
) -> Report {
    let rows: Vec<ReportRow> = samples
        .par_iter()
        .map(|&(a, b)| {
            let id = format!("iv_a{a}_b{b}");
            match global_level_gap(gr, a, b, cfg) {
                Ok(gap) => ReportRow::new(id, "level_gap", gap, None, Some(tol)),
                Err(e) => ReportRow::failed(id, &format!("level_gap: {e}")),
            }
        })
        .collect();
    Report { rows }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeFit {
    pub r_lo: f64,
    pub r_hi: f64,
    /// Fit of `M(r)` against `log(1/r)`.
    pub max: LineFit,
    /// Fit of `m(r)` against `log(1/r)`.
    pub min: LineFit,
    /// Largest `M(r) - m(r)` over the range.
    pub oscillation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogFits {
    pub inner: RangeFit,
    pub outer: RangeFit,
}

impl LogFits {
    /// All four slopes positive with largest/smallest ratio at most `c`.
    pub fn pass(&self, c: f64) -> bool {
        let s = [
            self.inner.max.slope,
            self.inner.min.slope,
            self.outer.max.slope,
            self.outer.min.slope,
        ];
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lo > 0.0 && hi / lo <= c
    }
}

fn range_fit(gr: &GlobalGreenResult, (r_lo, r_hi): (f64, f64)) -> Result<RangeFit> {
    if !(r_lo > 0.0 && r_hi >= 4.0 * r_lo) {
        return Err(Error::Fit(format!(
            "range [{r_lo}, {r_hi}] spans less than a factor 4"
        )));
    }
    if r_lo < gr.r_in() || r_hi > 0.9 * gr.r_out() {
        return Err(Error::Fit(format!(
            "range [{r_lo}, {r_hi}] leaves [{}, {}]",
            gr.r_in(),
            0.9 * gr.r_out()
        )));
    }
    let h = gr.graph.band_width();
    let n = ((r_hi - r_lo) / h).round().max(4.0) as usize;
    let radii: Vec<f64> = (0..=n)
        .map(|k| r_lo + (r_hi - r_lo) * k as f64 / n as f64)
        .collect();
    let rows = gr.profile(&radii);
    let x: Vec<f64> = rows.iter().map(|r| (1.0 / r.r).ln()).collect();
    let hi: Vec<f64> = rows.iter().map(|r| r.max).collect();
    let lo: Vec<f64> = rows.iter().map(|r| r.min).collect();
    Ok(RangeFit {
        r_lo,
        r_hi,
        max: linear_fit(&x, &hi)?,
        min: linear_fit(&x, &lo)?,
        oscillation: rows.iter().map(|r| r.max - r.min).fold(0.0, f64::max),
    })
}

/// Least-squares fits of `M(r)` and `m(r)` against `log(1/r)` near the pole
/// and far from it.
pub fn log_asymptotics_fit(gr: &GlobalGreenResult, inner: (f64, f64), outer: (f64, f64)) -> Result<LogFits> {
    Ok(LogFits {
        inner: range_fit(gr, inner)?,
        outer: range_fit(gr, outer)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinMaxRow {
    pub r: f64,
    pub r0: f64,
    pub big_r: f64,
    /// `(m(r) - M(R)) / cap(B̄_r, B_R)^{1/(1-Q)}`; the upper inequality
    /// holds with any `C` at least this large.
    pub upper_ratio: f64,
    /// `(m(r) - m(R)) / cap(B̄_{r0}, B_R)^{1/(1-Q)}`, or `None` when
    /// `m(r) < M(r0)` and the lower inequality does not apply.
    pub lower_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinMaxReport {
    pub rows: Vec<MinMaxRow>,
    pub warnings: Vec<String>,
    /// Smallest `C ≥ 1` for which both inequalities hold on every row.
    pub c: f64,
}

/// Both min-max capacity inequalities over `(r, r0, R)` triples with
/// `r < r0 < R`. Capacities are ring capacities on the deepest stage grid.
pub fn min_max_capacity_check(
    gr: &GlobalGreenResult,
    triples: &[(f64, f64, f64)],
    cfg: &SolverConfig,
) -> Result<MinMaxReport> {
    let mut cfg = cfg.clone();
    cfg.p = gr.q;
    cfg.mode = gr.mode;
    let e = 1.0 / (1.0 - gr.q);
    let mut out = MinMaxReport {
        c: 1.0,
        ..Default::default()
    };
    for &(r, r0, big_r) in triples {
        if !(gr.r_in() < r && r < r0 && r0 < big_r && big_r < gr.r_out()) {
            out.warnings
                .push(format!("triple ({r}, {r0}, {big_r}) skipped: infeasible"));
            continue;
        }
        let prof = gr.profile(&[r, r0, big_r]);
        if prof.len() != 3 {
            out.warnings
                .push(format!("triple ({r}, {r0}, {big_r}) skipped: empty band"));
            continue;
        }
        let (mr, m_r0, m_big) = (prof[0].min, prof[1].max, (prof[2].min, prof[2].max));
        let ring = |a: f64| -> Result<f64> {
            let c = Condenser::ring(&gr.graph, gr.pole, a, big_r)?;
            capacity(&gr.graph, &c, &cfg)?
                .finite()
                .ok_or_else(|| Error::Degenerate("ring plates intersect".into()))
        };
        let upper_ratio = (mr - m_big.1) / ring(r)?.powf(e);
        let lower_ratio = if mr >= m_r0 {
            Some((mr - m_big.0) / ring(r0)?.powf(e))
        } else {
            None
        };
        out.c = out.c.max(upper_ratio);
        if let Some(l) = lower_ratio {
            out.c = out.c.max(1.0 / l);
        }
        out.rows.push(MinMaxRow {
            r,
            r0,
            big_r,
            upper_ratio,
            lower_ratio,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniquenessOptions {
    /// Annulus `[inner, outer]` compared.
    pub inner: f64,
    pub outer: f64,
    /// Lattice offset of the matching vertex from the pole.
    pub reference: [i64; 3],
    pub sup_tol: f64,
    pub grad_tol: f64,
}

impl Default for UniquenessOptions {
    fn default() -> Self {
        UniquenessOptions {
            inner: 0.25,
            outer: 4.0,
            reference: [24, 0, 0],
            sup_tol: 5e-3,
            grad_tol: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uniqueness {
    pub sup: f64,
    /// `Σ μ |D(u - v)|^Q` over the annulus.
    pub gradient_q: f64,
    pub matched: bool,
    /// Set when `Q < 2`, where the difference estimate is not available.
    pub advisory: bool,
}

/// Compares two global Green functions with the same pole after matching
/// them at a reference vertex.
pub fn uniqueness_diagnostics(
    u: &GlobalGreenResult,
    v: &GlobalGreenResult,
    opts: &UniquenessOptions,
) -> Result<Uniqueness> {
    if u.q != v.q {
        return Err(Error::param("v", "exponents differ"));
    }
    let (cu, cv) = match (u.graph.chart(), v.graph.chart()) {
        (Some(a), Some(b)) if a.spacing() == b.spacing() && a.dim() == b.dim() => (a, b),
        _ => return Err(Error::param("v", "fields live on incompatible lattices")),
    };
    let limit = u.r_out().min(v.r_out());
    if !(opts.inner > u.r_in().max(v.r_in()) && opts.outer < limit) {
        return Err(Error::param(
            "outer",
            "comparison annulus leaves the common domain",
        ));
    }
    let (ou, ov) = (cu.lattice(u.pole), cv.lattice(v.pole));
    let transfer = |w: VertexId| -> Option<f64> {
        let l = cu.lattice(w);
        let t = cv.vertex_at([l[0] - ou[0] + ov[0], l[1] - ou[1] + ov[1], l[2] - ou[2] + ov[2]])?;
        Some(v.field.values()[t])
    };
    let (ru, rv) = (u.at_offset(opts.reference), v.at_offset(opts.reference));
    let shift = match (ru, rv) {
        (Some(a), Some(b)) => a - b,
        _ => return Err(Error::param("reference", "matching vertex lies outside a domain")),
    };
    let d = u.graph.distances_from(u.pole);
    let diff: Vec<f64> = (0..u.graph.len())
        .map(|w| match transfer(w) {
            Some(x) => u.field.values()[w] - x - shift,
            None => 0.0,
        })
        .collect();
    let inside = |w: VertexId| d[w] >= opts.inner && d[w] <= opts.outer;
    let sup = (0..u.graph.len())
        .filter(|w| inside(*w))
        .map(|w| diff[w].abs())
        .fold(0.0, f64::max);
    let norms = gradient(&u.graph, &ScalarField::new(diff)?, GradientMode::Chart)?.norms();
    let gradient_q: f64 = (0..u.graph.len())
        .filter(|w| inside(*w))
        .map(|w| u.graph.measure(w) * norms[w].unwrap_or(0.0).powf(u.q))
        .sum();
    let advisory = u.q < 2.0;
    Ok(Uniqueness {
        sup,
        gradient_q,
        matched: !advisory && sup <= opts.sup_tol && gradient_q <= opts.grad_tol,
        advisory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GlobalGreenResult {
        let fam = LatticeFamily::new(2, 0.25).unwrap();
        let opts = GlobalGreenOptions {
            stages: 3,
            ..Default::default()
        };
        green_global(&fam, 2.0, &SolverConfig::default(), &opts).unwrap()
    }

    #[test]
    fn reference_annulus_is_normalized() {
        let gr = small();
        assert_eq!(gr.trace.len(), 3);
        assert!(gr.trace.iter().all(|t| t.divisor > 0.0));
        assert!(gr.lambda > 0.0);
        assert!(gr.inner_value > 0.0 && gr.outer_value < 0.0);
    }

    #[test]
    fn level_identity_across_zero() {
        let gr = small();
        let cfg = SolverConfig::default();
        for (a, b) in [(-0.1, 0.1), (-0.2, -0.05), (0.05, 0.3)] {
            let gap = global_level_gap(&gr, a, b, &cfg).unwrap();
            assert!(gap < 1e-8, "({a}, {b}) gap {gap}");
        }
        assert!(global_level_gap(&gr, gr.outer_value - 1.0, 0.1, &cfg).is_err());
    }

    #[test]
    fn self_comparison_vanishes() {
        let gr = small();
        let opts = UniquenessOptions {
            inner: 0.5,
            outer: 4.0,
            reference: [6, 0, 0],
            ..Default::default()
        };
        let r = uniqueness_diagnostics(&gr, &gr, &opts).unwrap();
        assert_eq!((r.sup, r.gradient_q), (0.0, 0.0));
        assert!(r.matched);
        let mut shifted = gr.clone();
        shifted.field = gr.field.map(|x| x + 0.5);
        let r = uniqueness_diagnostics(&gr, &shifted, &opts).unwrap();
        assert!(r.sup < 1e-12 && r.gradient_q < 1e-20);
    }

    #[test]
    fn budget_names_feasible_stage() {
        let fam = LatticeFamily::new(2, 0.25).unwrap();
        let opts = GlobalGreenOptions {
            stages: 6,
            max_vertices: 40_000,
            ..Default::default()
        };
        match green_global(&fam, 2.0, &SolverConfig::default(), &opts) {
            Err(Error::Resource(m)) => assert!(m.contains("largest feasible stage is 4"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let fam = LatticeFamily::new(2, 0.25).unwrap();
        let r = green_global(
            &fam,
            3.0,
            &SolverConfig::default(),
            &GlobalGreenOptions::default(),
        );
        assert!(matches!(r, Err(Error::Parameter { name: "Q", .. })));
    }
}
