//! Green functions on bounded domains.
//!
//! [`green_compact`] builds potentials of shrinking balls around the pole,
//! rescales each one by its capacity, and keeps the deepest. On a finite graph
//! the balls reach `{x0}` after finitely many levels, so the pole value stays
//! finite. [`normalize_green`] then fixes the multiplicative constant from one
//! level-set capacity.

use rayon::prelude::*;

use crate::calculus::{gradient, EnergyModel, GradientMode, Plate, ScalarField};
use crate::capacity::{level_condenser, p_potential, Capacity, Condenser, CondenserKind};
use crate::dirichlet::{oscillation_profile, residual, ProfileRow, SolverConfig};
use crate::error::{Error, Result};
use crate::report::{Report, ReportRow};
use crate::space::{ball, closed_ball, MetricGraph, VertexId, VertexSet};

/// Default `(a, b)` samples for level-set checks, as fractions of the pole value.
pub const DEFAULT_LEVEL_FRACTIONS: [(f64, f64); 3] = [(0.1, 0.3), (0.25, 0.6), (0.05, 0.45)];

/// Residual bound for the p-harmonicity check away from the pole.
pub const HARMONIC_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GreenOptions {
    /// Number of shrinking-ball levels; `None` runs until the ball is `{x0}`.
    pub levels: Option<usize>,
    /// Radius scale: level `i` uses the ball of radius `2^{-i}·scale`.
    /// Defaults to the distance from the pole to the complement of `Ω`.
    pub scale: Option<f64>,
    /// Normalization level; defaults to half the pole value.
    pub s: Option<f64>,
    /// Relative gap allowed in the level-set identity.
    pub level_tol: f64,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            levels: None,
            scale: None,
            s: None,
            level_tol: 0.02,
        }
    }
}

/// One shrinking-ball level of the construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelTrace {
    pub radius: f64,
    pub ball_size: usize,
    pub capacity: f64,
    /// Sup-norm change from the previous level, `NaN` at the first.
    pub change: f64,
}

/// Level-set identity sample stored with a Green function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelGap {
    pub a: f64,
    pub b: f64,
    pub capacity: f64,
    pub expected: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenResult {
    pub field: ScalarField,
    pub omega: VertexSet,
    pub pole: VertexId,
    pub p: f64,
    pub mode: GradientMode,
    /// Multiplier applied by the last normalization.
    pub lambda: f64,
    pub pole_value: f64,
    /// Filled by [`fundamental_constant`].
    pub k: Option<f64>,
    pub profile: Vec<ProfileRow>,
    pub trace: Vec<LevelTrace>,
    pub gaps: Vec<LevelGap>,
}

fn check_pole(g: &MetricGraph, omega: &VertexSet, x0: VertexId) -> Result<()> {
    if omega.universe() != g.len() || x0 >= g.len() {
        return Err(Error::param("omega", "set and pole must belong to the graph"));
    }
    if omega.len() == g.len() {
        return Err(Error::IllPosed(
            "Ω has no complement, so no boundary values exist".into(),
        ));
    }
    if !omega.contains(x0) {
        return Err(Error::param("x0", format!("pole {x0} is not in Ω")));
    }
    if g.inner_boundary(omega).contains(x0) {
        return Err(Error::param(
            "x0",
            format!("pole {x0} lies on the boundary stencil of Ω"),
        ));
    }
    Ok(())
}

fn pole_distance(g: &MetricGraph, omega: &VertexSet, x0: VertexId) -> f64 {
    let d = g.distances_from(x0);
    omega
        .complement()
        .iter()
        .map(|v| d[v])
        .fold(f64::INFINITY, f64::min)
}

/// Potential of `(K, Ω)` divided by `cap(K, Ω)^{1/(p-1)}`.
fn scaled_potential(
    g: &MetricGraph,
    k: &VertexSet,
    omega: &VertexSet,
    cfg: &SolverConfig,
) -> Result<(ScalarField, f64)> {
    let c = Condenser::relative(g, k.clone(), omega.clone())?;
    match p_potential(g, &c, cfg)? {
        Capacity::Finite(r) => {
            let factor = r.value.powf(-1.0 / (cfg.p - 1.0));
            Ok((r.potential.scaled(factor), r.value))
        }
        other => Err(Error::Degenerate(format!(
            "pole condenser has capacity {:?}",
            other.value()
        ))),
    }
}

/// Compact-domain Green function with pole `x0`.
pub fn green_compact(
    g: &MetricGraph,
    omega: &VertexSet,
    x0: VertexId,
    cfg: &SolverConfig,
    opts: &GreenOptions,
) -> Result<GreenResult> {
    check_pole(g, omega, x0)?;
    if opts.levels == Some(0) {
        return Err(Error::param("levels", "at least one level is required"));
    }
    let scale = opts.scale.unwrap_or_else(|| pole_distance(g, omega, x0));
    if !(scale > 0.0) {
        return Err(Error::param("scale", "must be positive"));
    }
    if !closed_ball(g, x0, 0.5 * scale).is_subset(omega) {
        return Err(Error::param("scale", "the first ball must lie inside Ω"));
    }
    let mut trace = Vec::new();
    let mut current: Option<(VertexSet, ScalarField)> = None;
    let mut i: usize = 1;
    loop {
        let radius = scale * 0.5f64.powi(i as i32);
        let b = closed_ball(g, x0, radius);
        let same = current.as_ref().is_some_and(|(prev, _)| *prev == b);
        if !same {
            let (v, cap) = scaled_potential(g, &b, omega, cfg)?;
            let change = match &current {
                Some((_, prev)) => prev
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(a, c)| (a - c).abs())
                    .fold(0.0, f64::max),
                None => f64::NAN,
            };
            trace.push(LevelTrace {
                radius,
                ball_size: b.len(),
                capacity: cap,
                change,
            });
            current = Some((b.clone(), v));
        }
        if b.len() == 1 || opts.levels.is_some_and(|l| i >= l) {
            break;
        }
        i += 1;
    }
    let (_, v) = current.expect("at least one level");
    let mut gr = normalize_green(g, &v, omega, x0, cfg, opts)?;
    gr.trace = trace;
    Ok(gr)
}

/// Rescales `v` so that `cap({u ≥ s}, Ω) = s^{1-p}` for `u = λv`.
pub fn normalize_green(
    g: &MetricGraph,
    v: &ScalarField,
    omega: &VertexSet,
    x0: VertexId,
    cfg: &SolverConfig,
    opts: &GreenOptions,
) -> Result<GreenResult> {
    check_pole(g, omega, x0)?;
    cfg.validate()?;
    if v.len() != g.len() {
        return Err(Error::param("v", "field must cover the graph"));
    }
    let pole = v.values()[x0];
    if !(pole > 0.0) {
        return Err(Error::Degenerate(format!(
            "field is not positive at the pole ({pole})"
        )));
    }
    let s = opts.s.unwrap_or(0.5 * pole);
    let top = Plate::superlevel(
        v.values().to_vec(),
        s,
        pole,
        Some(Plate::vertices(VertexSet::from_ids(g.len(), [x0]))),
        &g.all(),
    );
    if top.members.is_empty() || !top.members.is_subset(omega) {
        return Err(Error::Degenerate(format!(
            "level set {{v ≥ {s}}} is empty or leaves Ω"
        )));
    }
    if top.members == *omega {
        return Err(Error::Degenerate(format!("level set {{v ≥ {s}}} fills Ω")));
    }
    let outer = Plate::vertices(omega.complement());
    let c = Condenser::from_plates(g, top, outer, omega.clone(), CondenserKind::Relative)?;
    let cap = p_potential(g, &c, cfg)?.into_result()?.value;
    let t = cap.powf(1.0 / (1.0 - cfg.p));
    let lambda = t / s;

    let mut values = v.values().to_vec();
    for (i, x) in values.iter_mut().enumerate() {
        *x = if omega.contains(i) { lambda * *x } else { 0.0 };
    }
    let field = ScalarField::on(g.all(), values)?;
    let pole_value = field.values()[x0];
    let mut gr = GreenResult {
        field,
        omega: omega.clone(),
        pole: x0,
        p: cfg.p,
        mode: cfg.mode,
        lambda,
        pole_value,
        k: None,
        profile: Vec::new(),
        trace: Vec::new(),
        gaps: Vec::new(),
    };
    gr.profile = green_profile(g, &gr);
    let samples: Vec<(f64, f64)> = DEFAULT_LEVEL_FRACTIONS
        .iter()
        .map(|(a, b)| (a * pole_value, b * pole_value))
        .collect();
    gr.gaps = samples
        .par_iter()
        .map(|&(a, b)| level_gap(g, &gr, a, b, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(gr)
}

fn green_profile(g: &MetricGraph, gr: &GreenResult) -> Vec<ProfileRow> {
    let r0 = pole_distance(g, &gr.omega, gr.pole);
    let h = g.band_width();
    let step = h.max(r0 / 64.0);
    let radii: Vec<f64> = (2..).map(|k| k as f64 * step).take_while(|r| *r < r0).collect();
    oscillation_profile(g, &gr.field, gr.pole, &radii).rows
}

/// `cap_p({u ≥ b}, {u > a})` against `(b - a)^{1-p}`.
pub fn level_gap(g: &MetricGraph, gr: &GreenResult, a: f64, b: f64, cfg: &SolverConfig) -> Result<LevelGap> {
    if !(0.0 <= a && a < b) {
        return Err(Error::param("a", format!("need 0 ≤ a < b, got ({a}, {b})")));
    }
    if b > gr.pole_value {
        return Err(Error::Degenerate(format!(
            "b = {b} exceeds the pole value {}: empty superlevel set",
            gr.pole_value
        )));
    }
    let base = Condenser::relative(g, VertexSet::from_ids(g.len(), [gr.pole]), gr.omega.clone())?;
    let lc = level_condenser(g, &base, &gr.field, a, b, gr.pole_value, 0.0)?;
    let mut cfg = cfg.clone();
    cfg.p = gr.p;
    cfg.mode = gr.mode;
    let capacity = p_potential(g, &lc, &cfg)?.into_result()?.value;
    let expected = (b - a).powf(1.0 - gr.p);
    Ok(LevelGap {
        a,
        b,
        capacity,
        expected,
        gap: (capacity - expected).abs() / expected,
    })
}

/// Checks the defining conditions: p-harmonic off the pole, the pole value
/// identity, zero outside `Ω`, and the level-set identity at each sample.
pub fn validate_green(
    g: &MetricGraph,
    gr: &GreenResult,
    samples: &[(f64, f64)],
    cfg: &SolverConfig,
    level_tol: f64,
) -> Report {
    let mut report = Report::default();
    let mut off_pole = gr.omega.clone();
    off_pole.remove(gr.pole);
    match residual(g, &gr.field, gr.p, &off_pole, gr.mode) {
        Ok(r) => report.push(ReportRow::new(
            "i",
            "harmonic_residual",
            r,
            None,
            Some(HARMONIC_TOL),
        )),
        Err(e) => report.push(ReportRow::failed("i", &format!("harmonic_residual: {e}"))),
    }
    let mut pole_cfg = cfg.clone();
    pole_cfg.p = gr.p;
    pole_cfg.mode = gr.mode;
    let single = VertexSet::from_ids(g.len(), [gr.pole]);
    match scaled_potential(g, &single, &gr.omega, &pole_cfg) {
        Ok((v, _)) => {
            let want = v.values()[gr.pole];
            let gap = (gr.pole_value - want).abs() / want;
            report.push(ReportRow::new("ii", "pole_value_gap", gap, None, Some(1e-6)));
        }
        Err(e) => report.push(ReportRow::failed("ii", &format!("pole_value_gap: {e}"))),
    }
    let outside = gr
        .omega
        .complement()
        .iter()
        .map(|v| gr.field.values()[v].abs())
        .fold(0.0, f64::max);
    report.push(ReportRow::new("iii", "exterior_max", outside, None, Some(0.0)));
    let rows: Vec<ReportRow> = samples
        .par_iter()
        .map(|&(a, b)| {
            let id = format!("iv_a{a}_b{b}");
            match level_gap(g, gr, a, b, cfg) {
                Ok(l) => ReportRow::new(id, "level_gap", l.gap, None, Some(level_tol)),
                Err(Error::Degenerate(_)) => ReportRow::failed(id, "level_gap: degenerate"),
                Err(e) => ReportRow::failed(id, &format!("level_gap: {e}")),
            }
        })
        .collect();
    rows.into_iter().for_each(|r| report.push(r));
    report
}

/// `∫ |Du|^{p-2} Du·Dφ_R` for radial cutoffs `φ_R` (1 on `B(x0, R/2)`, 0
/// off `B(x0, R)`). Returns the mean `K` and the largest relative deviation
/// from it, and stores `K` in `gr`.
pub fn fundamental_constant(g: &MetricGraph, gr: &mut GreenResult, radii: &[f64]) -> Result<(f64, f64)> {
    if radii.is_empty() {
        return Err(Error::param("radii", "at least one cutoff radius is required"));
    }
    let d = g.distances_from(gr.pole);
    for &r in radii {
        if !(r > 0.0) || !closed_ball(g, gr.pole, r).is_subset(&gr.omega) {
            return Err(Error::param(
                "radii",
                format!("cutoff support B(x0, {r}) leaves Ω"),
            ));
        }
    }
    let model = EnergyModel::new(g, gr.mode, &g.all(), &g.all(), false, gr.p)?;
    let ks: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            let phi: Vec<f64> = d.iter().map(|x| ((r - x) / (0.5 * r)).clamp(0.0, 1.0)).collect();
            model.pairing(gr.field.values(), &phi)
        })
        .collect();
    let k = ks.iter().sum::<f64>() / ks.len() as f64;
    let spread = ks.iter().map(|x| (x - k).abs()).fold(0.0, f64::max) / k.abs();
    gr.k = Some(k);
    Ok((k, spread))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearPoleRow {
    pub r: f64,
    /// `∫_{B_r∖{x0}} |Du|^{p-1}`.
    pub flux: f64,
    /// `r` when `p < Q`, `r·log(2R0/r)^{Q-1}` when `p = Q`.
    pub flux_form: f64,
    /// `∫_{B_r∖{x0}} |Du|^p`.
    pub energy: f64,
    /// `r^{-p} ∫_{B_{2r}∖B_r} |u|^p`.
    pub annulus: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NearPoleReport {
    pub q: f64,
    pub r0: f64,
    pub rows: Vec<NearPoleRow>,
    /// `max flux/flux_form` over the sweep.
    pub flux_constant: f64,
    /// `(max - min)/max` of `flux/flux_form`.
    pub flux_variation: f64,
    /// `max energy/annulus`, `None` when the field is constant.
    pub caccioppoli_constant: Option<f64>,
    pub caccioppoli_variation: Option<f64>,
}

impl NearPoleReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.flux_variation <= tol && self.caccioppoli_variation.is_some_and(|v| v <= tol)
    }
}

fn variation(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

/// Near-pole integrability of `|Du|^{p-1}` and the Caccioppoli ratio over a
/// radius sweep. `q` is the pointwise dimension at the pole; `r0` defaults
/// to the distance from the pole to the complement of `Ω`.
pub fn near_pole_integrability(
    g: &MetricGraph,
    gr: &GreenResult,
    radii: &[f64],
    q: f64,
    r0: Option<f64>,
) -> Result<NearPoleReport> {
    let r0 = r0.unwrap_or_else(|| pole_distance(g, &gr.omega, gr.pole));
    if radii.len() < 2 {
        return Err(Error::param("radii", "a sweep needs at least two radii"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r < 0.25 * r0)) {
        return Err(Error::param(
            "radii",
            format!("radius {r} is outside (0, R0/4) with R0 = {r0}"),
        ));
    }
    let p = gr.p;
    let norms = gradient(g, &gr.field, GradientMode::Chart)?.norms();
    let d = g.distances_from(gr.pole);
    let u = gr.field.values();
    let log_branch = (p - q).abs() <= 0.05 * q;
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let inner = ball(g, gr.pole, r);
        let (mut flux, mut energy, mut annulus) = (0.0, 0.0, 0.0);
        for v in inner.iter().filter(|v| *v != gr.pole) {
            let n = norms[v].ok_or(Error::MissingValue(v))?;
            flux += g.measure(v) * n.powf(p - 1.0);
            energy += g.measure(v) * n.powf(p);
        }
        for v in (0..g.len()).filter(|v| d[*v] >= r && d[*v] < 2.0 * r) {
            annulus += g.measure(v) * u[v].abs().powf(p);
        }
        annulus *= r.powf(-p);
        let flux_form = if log_branch {
            r * (2.0 * r0 / r).ln().powf(q - 1.0)
        } else {
            r
        };
        rows.push(NearPoleRow {
            r,
            flux,
            flux_form,
            energy,
            annulus,
        });
    }
    let flux_ratios: Vec<f64> = rows.iter().map(|x| x.flux / x.flux_form).collect();
    let cacc: Option<Vec<f64>> = rows
        .iter()
        .map(|x| (x.annulus > 0.0).then(|| x.energy / x.annulus))
        .collect();
    Ok(NearPoleReport {
        q,
        r0,
        flux_constant: flux_ratios.iter().copied().fold(0.0, f64::max),
        flux_variation: variation(&flux_ratios),
        caccioppoli_constant: cacc.as_ref().map(|c| c.iter().copied().fold(0.0, f64::max)),
        caccioppoli_variation: cacc.as_ref().map(|c| variation(c)),
        rows,
    })
}

/// Sup of `|u - v|` over `Ω∖{x0}` after matching the two fields at the
/// smallest interior vertex adjacent to the boundary.
pub fn green_difference_bound(
    g: &MetricGraph,
    u: &GreenResult,
    v: &GreenResult,
    tol: f64,
) -> Result<(f64, bool)> {
    if u.omega != v.omega || u.pole != v.pole || u.p != v.p {
        return Err(Error::param(
            "v",
            "Green functions differ in domain, pole or exponent",
        ));
    }
    let reference = g
        .inner_boundary(&u.omega)
        .iter()
        .find(|x| *x != u.pole)
        .ok_or_else(|| Error::Degenerate("Ω has no boundary-adjacent vertex".into()))?;
    let shift = u.field.values()[reference] - v.field.values()[reference];
    let sup = u
        .omega
        .iter()
        .filter(|x| *x != u.pole)
        .map(|x| (u.field.values()[x] - v.field.values()[x] - shift).abs())
        .fold(0.0, f64::max);
    Ok((sup, sup <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::build_grid;

    fn tent() -> (MetricGraph, VertexSet, GreenResult) {
        let g = build_grid(1, 101, 0.01).unwrap();
        let omega = VertexSet::from_predicate(101, |v| v > 0 && v < 100);
        let gr = green_compact(&g, &omega, 50, &SolverConfig::default(), &GreenOptions::default()).unwrap();
        (g, omega, gr)
    }

    #[test]
    fn one_dimensional_tent() {
        let (_, _, gr) = tent();
        for (v, x) in gr.field.values().iter().enumerate() {
            let t = v as f64 * 0.01;
            assert!((x - t.min(1.0 - t) / 2.0).abs() < 1e-8, "v={v} {x}");
        }
        assert!((gr.pole_value - 0.25).abs() < 1e-8);
        assert!((gr.lambda - 1.0).abs() < 1e-6);
        assert!(gr.trace.last().unwrap().ball_size == 1);
        assert!(gr.gaps.iter().all(|l| l.gap < 1e-6));
    }

    #[test]
    fn tent_validation_and_constant() {
        let (g, _, mut gr) = tent();
        let cfg = SolverConfig::default();
        let rep = validate_green(&g, &gr, &[(0.05, 0.15), (0.1, 0.2), (0.0, 0.2)], &cfg, 1e-6);
        assert!(rep.all_pass(), "{}", rep.to_csv());
        let l = level_gap(&g, &gr, 0.05, 0.15, &cfg).unwrap();
        assert!((l.capacity - 10.0).abs() < 1e-6);
        let rep = validate_green(&g, &gr, &[(0.1, 0.3)], &cfg, 1e-6);
        assert!(!rep.all_pass());
        let (k, spread) = fundamental_constant(&g, &mut gr, &[0.1, 0.2, 0.4]).unwrap();
        assert!((k - 1.0).abs() < 1e-6 && spread < 1e-6);
        assert!(fundamental_constant(&g, &mut gr, &[0.6]).is_err());
    }

    #[test]
    fn normalization_is_scale_free() {
        let (g, omega, gr) = tent();
        let cfg = SolverConfig::default();
        let opts = GreenOptions::default();
        let again = normalize_green(&g, &gr.field, &omega, 50, &cfg, &opts).unwrap();
        assert!((again.lambda - 1.0).abs() < 1e-6);
        let big = normalize_green(&g, &gr.field.scaled(10.0), &omega, 50, &cfg, &opts).unwrap();
        for (a, b) in big.field.values().iter().zip(gr.field.values()) {
            assert!((a - b).abs() < 1e-8);
        }
        let slope_one = ScalarField::from_fn(&g, |v| {
            let t = v as f64 * 0.01;
            t.min(1.0 - t)
        });
        let half = normalize_green(&g, &slope_one, &omega, 50, &cfg, &opts).unwrap();
        assert!((half.lambda - 0.5).abs() < 1e-9);
        let (sup, matched) = green_difference_bound(&g, &gr, &big, 1e-4).unwrap();
        assert!(matched && sup < 1e-8);
    }

    #[test]
    fn pole_errors() {
        let g = build_grid(1, 11, 0.1).unwrap();
        let omega = VertexSet::from_predicate(11, |v| v > 0 && v < 10);
        let cfg = SolverConfig::default();
        let opts = GreenOptions::default();
        assert!(matches!(
            green_compact(&g, &omega, 1, &cfg, &opts),
            Err(Error::Parameter { name: "x0", .. })
        ));
        assert!(matches!(
            green_compact(&g, &g.all(), 5, &cfg, &opts),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn near_pole_constant_field_is_undefined() {
        let (g, omega, mut gr) = tent();
        gr.field = ScalarField::on(g.all(), vec![0.0; 101]).unwrap();
        let rep = near_pole_integrability(&g, &gr, &[0.02, 0.04], 1.0, None).unwrap();
        assert!(rep.caccioppoli_constant.is_none());
        assert!(!rep.pass(0.3));
        assert!(near_pole_integrability(&g, &gr, &[0.02, 0.3], 1.0, None).is_err());
        let _ = omega;
    }
}
