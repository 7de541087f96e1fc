use std::fmt::Write as _;
use std::io::Write;

use greenpot::capacity::{decay_exponent, loewner_profile, parabolicity_probe_balls, ring_bounds_check};
use greenpot::dirichlet::{harnack_ratio, oscillation_profile, residual};
use greenpot::global::{
    log_asymptotics_fit, min_max_capacity_check, uniqueness_diagnostics, validate_global, LatticeFamily,
    UniquenessOptions,
};
use greenpot::green::{
    fundamental_constant, green_difference_bound, near_pole_integrability, validate_green,
    DEFAULT_LEVEL_FRACTIONS,
};
use greenpot::io::{
    global_green_metadata, green_metadata, read_field, write_atomic, write_field, write_graph,
};
use greenpot::prelude::*;
use greenpot::report::{Report, ReportRow};
use greenpot::space::{estimate_regularity, VertexId};
use greenpot::verify::{principles_suite, SuiteOptions};

use crate::schema::schema_csv;
use crate::{CliError, Settings};

/// Files and an optional pass/fail report produced by one subcommand.
#[derive(Default)]
struct Outcome {
    files: Vec<(String, String)>,
    report: Option<Report>,
    summary: Vec<(String, String)>,
}

impl Outcome {
    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn scalar(&mut self, name: &str, value: impl ToString) {
        self.summary.push((name.to_string(), value.to_string()));
    }

    fn check(&mut self, row: ReportRow) {
        self.report.get_or_insert_with(Report::default).push(row);
    }
}

fn summary_csv(rows: &[(String, String)]) -> String {
    let mut s = String::from("quantity,value\n");
    for (k, v) in rows {
        writeln!(s, "{k},{v}").unwrap();
    }
    s
}

pub fn dispatch(name: &str, s: &Settings, out: &mut dyn Write) -> Result<(), CliError> {
    let (outcome, report_file) = match name {
        "solve" => (solve(s)?, "report.csv"),
        "capacity" => (capacity(s)?, "report.csv"),
        "green" => (green(s)?, "validation.csv"),
        "global-green" => (global_green(s)?, "validation.csv"),
        "verify" => (verify(s)?, "principles.csv"),
        "profile" => (profile(s)?, ""),
        "regularity" => (regularity(s)?, ""),
        other => return Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    };
    let dir = s.out_dir();
    std::fs::create_dir_all(&dir)?;
    let mut files = outcome.files;
    if !outcome.summary.is_empty() {
        let fname = if name == "regularity" {
            "regularity.csv"
        } else {
            "summary.csv"
        };
        files.push((fname.into(), summary_csv(&outcome.summary)));
    }
    if let Some(r) = &outcome.report {
        files.push((report_file.into(), r.to_csv()));
    }
    files.push((format!("{name}.schema.csv"), schema_csv(name)));
    for (f, contents) in &files {
        write_atomic(dir.join(f), contents)?;
    }
    for (k, v) in &outcome.summary {
        writeln!(out, "{k} = {v}")?;
    }
    writeln!(out, "wrote {} file(s) to {}", files.len(), dir.display())?;
    match &outcome.report {
        Some(r) if !r.all_pass() => {
            for row in r.failures() {
                writeln!(out, "FAIL {} {} = {}", row.instance_id, row.quantity, row.value)?;
            }
            Err(CliError::Validation(r.failures().count()))
        }
        _ => Ok(()),
    }
}

/// Distance from `x0` to the nearest vertex with a truncated stencil, or
/// half the eccentricity on graphs without coordinates.
fn reach(g: &MetricGraph, x0: VertexId) -> f64 {
    let d = g.distances_from(x0);
    match g.chart() {
        Some(c) => {
            let full = 2 * c.dim();
            (0..g.len())
                .filter(|&v| g.neighbors(v).len() < full)
                .map(|v| d[v])
                .fold(f64::INFINITY, f64::min)
        }
        None => 0.5 * d.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max),
    }
}

/// `n` radii doubling up to `top`.
fn doubling_radii(top: f64, n: usize) -> Vec<f64> {
    (0..n).rev().map(|k| top / 2f64.powi(k as i32)).collect()
}

fn solve(s: &Settings) -> Result<Outcome, CliError> {
    let g = s.graph()?;
    let cfg = s.solver("solver.p")?;
    let (omega, data) = s.domain(&g, "solve.boundary")?;
    let data = match data {
        Some(f) => f,
        None => {
            let c = g.chart().expect("domain() needs a chart without a boundary file");
            ScalarField::on(
                omega.complement(),
                (0..g.len()).map(|v| c.coordinates(v)[0]).collect(),
            )?
        }
    };
    let prob = DirichletProblem::new(&g, omega.clone(), data)?;
    let sol = solve_dirichlet(&prob, &cfg)?;
    let u = &sol.field;
    let mut o = Outcome::default();

    let dedu = energy_gradient(&g, u, cfg.p, &omega, cfg.mode)?;
    let mut csv = String::from("vertex,value,energy_gradient\n");
    for v in u.domain().iter() {
        writeln!(csv, "{v},{},{}", u.values()[v], dedu.get(v).unwrap_or(0.0)).unwrap();
    }
    o.file("solution.csv", csv);
    o.file("solution.field", write_field(u));

    let mut csv = String::from("index,gradient_norm\n");
    for (i, n) in gradient(&g, u, cfg.mode)?.norms().iter().enumerate() {
        if let Some(n) = n {
            writeln!(csv, "{i},{n}").unwrap();
        }
    }
    o.file("gradient.csv", csv);

    let res = residual(&g, u, cfg.p, &omega, cfg.mode)?;
    o.scalar("p", cfg.p);
    o.scalar("energy", p_energy(&g, u, cfg.p, u.domain(), cfg.mode)?);
    o.scalar("residual", res);
    o.scalar("iterations", sol.iterations);
    o.scalar("sobolev_norm", sobolev_norm(&g, u, cfg.p, cfg.mode)?);
    if g.chart().is_some() {
        let (lo, hi) = comparability_ratio(&g, u)?;
        o.scalar("comparability_low", lo);
        o.scalar("comparability_high", hi);
    }
    if let Some(r) = s.get::<f64>("solve.harnack_radius")? {
        let x = s.vertex(&g, "solve.center")?;
        o.scalar("harnack_ratio", harnack_ratio(&g, u, x, r)?);
    }
    o.check(ReportRow::new("solve", "residual", res, None, Some(cfg.grad_tol)));
    Ok(o)
}

fn profile(s: &Settings) -> Result<Outcome, CliError> {
    let g = s.graph()?;
    let path = s
        .path("profile.field")
        .ok_or_else(|| CliError::Config("`profile.field` is required".into()))?;
    let u = read_field(&std::fs::read_to_string(&path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if u.len() != g.len() {
        return Err(CliError::Config(format!(
            "field has {} vertices, the graph has {}",
            u.len(),
            g.len()
        )));
    }
    let x0 = s.vertex(&g, "profile.center")?;
    let radii = match s.list("profile.radii")? {
        Some(r) => r,
        None => doubling_radii(reach(&g, x0), 6),
    };
    let prof = oscillation_profile(&g, &u, x0, &radii);
    let mut csv = String::from("r,min,max,oscillation,ball_size,band_size\n");
    for row in &prof.rows {
        let band = sphere_band(&g, x0, row.r).map_or(0, |b| b.len());
        writeln!(
            csv,
            "{},{},{},{},{},{band}",
            row.r,
            row.min,
            row.max,
            row.max - row.min,
            ball(&g, x0, row.r).len()
        )
        .unwrap();
    }
    let mut o = Outcome::default();
    o.file("profile.csv", csv);
    o.scalar("radii", prof.rows.len());
    o.scalar("skipped", prof.warnings.len());
    Ok(o)
}

fn regularity(s: &Settings) -> Result<Outcome, CliError> {
    let g = s.graph()?;
    let p = s.get_or("solver.p", 2.0)?;
    let x0 = s.vertex(&g, "regularity.center")?;
    let radii = match s.list("regularity.radii")? {
        Some(r) => r,
        None => doubling_radii(0.9 * reach(&g, x0), 3),
    };
    let rep = estimate_regularity(&g, x0, &radii, p)?;
    let mut o = Outcome::default();
    o.file("graph.txt", write_graph(&g));
    let mut csv = String::from("center,radius,field,left,right\n");
    for ps in &rep.poincare {
        writeln!(
            csv,
            "{},{},{},{},{}",
            ps.center, ps.radius, ps.field, ps.left, ps.right
        )
        .unwrap();
    }
    o.file("poincare.csv", csv);
    o.scalar("doubling", rep.doubling);
    o.scalar("ahlfors_q", rep.ahlfors_q);
    o.scalar("ahlfors_residual", rep.ahlfors_residual);
    o.scalar("pointwise_dimension", rep.pointwise_dimension);
    o.scalar("poincare_constant", rep.poincare_constant);
    Ok(o)
}

fn capacity(s: &Settings) -> Result<Outcome, CliError> {
    let cfg = s.solver("solver.p")?;
    let mut o = Outcome::default();
    match s.raw("capacity.task").unwrap_or("ring") {
        "ring" => {
            let g = s.graph()?;
            let x0 = s.vertex(&g, "capacity.center")?;
            let reach = reach(&g, x0);
            let r = s.get_or("capacity.r", 0.25 * reach)?;
            let big_r = s.get_or("capacity.big_r", 0.75 * reach)?;
            let (alpha, beta) = (
                s.get_or("capacity.alpha", 0.25)?,
                s.get_or("capacity.beta", 0.75)?,
            );
            let tol = s.get_or("capacity.level_tol", 0.02)?;
            let c = Condenser::ring(&g, x0, r, big_r)?;
            let res = p_potential(&g, &c, &cfg)?.into_result()?;
            let lvl = level_set_capacity(&g, &c, &res, alpha, beta, &cfg)?;
            o.file("potential.field", write_field(&res.potential));
            o.scalar("capacity", res.value);
            o.scalar("residual", res.residual);
            o.scalar("excursion", res.excursion);
            o.scalar("level_set_capacity", lvl.value);
            o.scalar("level_set_expected", lvl.expected);
            o.check(ReportRow::new("ring", "level_set_gap", lvl.gap, None, Some(tol)));
        }
        "sweep" => {
            let g = s.graph()?;
            let x0 = s.vertex(&g, "capacity.center")?;
            let reach = reach(&g, x0);
            let rs = s
                .list("capacity.r")?
                .unwrap_or_else(|| vec![reach / 16.0, reach / 8.0, reach / 4.0]);
            let bigs = s
                .list("capacity.big_r")?
                .unwrap_or_else(|| vec![reach / 4.0, reach / 2.0, reach]);
            if rs.len() != bigs.len() {
                return Err(CliError::Config(
                    "`capacity.r` and `capacity.big_r` differ in length".into(),
                ));
            }
            let pairs: Vec<(f64, f64)> = rs.into_iter().zip(bigs).collect();
            let dim = g.chart().map(|c| c.dim() as f64);
            let q = match s.get("capacity.q")?.or(dim) {
                Some(q) => q,
                None => {
                    return Err(CliError::Config(
                        "`capacity.q` is required without coordinates".into(),
                    ))
                }
            };
            let r0 = s.get_or("capacity.r0", reach)?;
            let stability = s.get_or("capacity.stability", 0.25)?;
            let rep = ring_bounds_check(&g, x0, &pairs, q, r0, stability, &cfg)?;
            let mut csv = String::from("r,R,capacity,lower_form,upper_form\n");
            for row in &rep.rows {
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    row.r, row.big_r, row.capacity, row.lower_form, row.upper_form
                )
                .unwrap();
            }
            o.file("ring.csv", csv);
            o.scalar("branch", format!("{:?}", rep.branch).to_lowercase());
            o.scalar("c_low", rep.c_low);
            o.scalar("c_high", rep.c_high);
            o.check(ReportRow::new(
                "sweep",
                "upper_variation",
                rep.variation,
                None,
                Some(stability),
            ));
            o.check(ReportRow::new(
                "sweep",
                "c_low",
                rep.c_low,
                Some(f64::MIN_POSITIVE),
                None,
            ));
        }
        "loewner" => {
            let g = s.graph()?;
            let chart = g
                .chart()
                .filter(|c| c.dim() >= 2)
                .ok_or_else(|| CliError::Config("loewner task needs a grid of dimension 2 or 3".into()))?;
            let x0 = s.vertex(&g, "capacity.center")?;
            let c0 = chart.lattice(x0)[0];
            let gaps = s
                .list("capacity.gaps")?
                .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
            let pairs: Vec<(VertexSet, VertexSet)> = gaps
                .iter()
                .map(|&k| {
                    let k = k as i64;
                    let col = |c: i64| VertexSet::from_predicate(g.len(), |v| chart.lattice(v)[0] == c);
                    (col(c0 - k), col(c0 + k))
                })
                .collect();
            let prof = loewner_profile(&g, &pairs, &cfg)?;
            let mut csv = String::from("pair,t,capacity\n");
            for r in &prof.rows {
                writeln!(csv, "{},{},{}", r.pair, r.t, r.capacity).unwrap();
            }
            o.file("loewner.csv", csv);
            o.scalar("pairs", prof.rows.len());
            o.scalar("skipped", prof.warnings.len());
        }
        "parabolicity" => {
            let dim = s.get_or("space.dim", 2)?;
            let h = s.get_or("capacity.spacing", 1.0)?;
            let r = s.get_or("capacity.r", 2.0)?;
            let radii = s
                .list("capacity.radii")?
                .unwrap_or_else(|| vec![4.0, 8.0, 16.0, 32.0]);
            let caps = parabolicity_probe_balls(dim, h, r, &radii, &cfg)?;
            let mut csv = String::from("R,capacity\n");
            for (big_r, c) in radii.iter().zip(&caps) {
                writeln!(csv, "{big_r},{c}").unwrap();
            }
            o.file("parabolicity.csv", csv);
            let steps: Vec<f64> = radii.iter().map(|big_r| (big_r / r).log2()).collect();
            o.scalar("decay_exponent", decay_exponent(&steps, &caps)?);
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown `capacity.task` `{other}`, expected ring, sweep, loewner or parabolicity"
            )))
        }
    }
    Ok(o)
}

fn green(s: &Settings) -> Result<Outcome, CliError> {
    let g = s.graph()?;
    let cfg = s.solver("solver.p")?;
    let (omega, _) = s.domain(&g, "green.boundary")?;
    let x0 = s.vertex(&g, "green.pole")?;
    let opts = GreenOptions {
        levels: s.get("green.levels")?,
        scale: s.get("green.scale")?,
        s: s.get("green.s")?,
        level_tol: s.get_or("green.level_tol", GreenOptions::default().level_tol)?,
    };
    let mut gr = green_compact(&g, &omega, x0, &cfg, &opts)?;
    let r0 = gr
        .omega
        .complement()
        .iter()
        .map(|v| g.distance(x0, v))
        .fold(f64::INFINITY, f64::min);
    let k_radii = s
        .list("green.k_radii")?
        .unwrap_or_else(|| vec![0.25 * r0, 0.5 * r0, 0.75 * r0]);
    let (k, spread) = fundamental_constant(&g, &mut gr, &k_radii)?;
    let samples: Vec<(f64, f64)> = DEFAULT_LEVEL_FRACTIONS
        .iter()
        .map(|(a, b)| (a * gr.pole_value, b * gr.pole_value))
        .collect();
    let mut o = Outcome {
        report: Some(validate_green(&g, &gr, &samples, &cfg, opts.level_tol)),
        ..Default::default()
    };

    o.scalar("p", gr.p);
    o.scalar("lambda", gr.lambda);
    o.scalar("pole_value", gr.pole_value);
    o.scalar("k", k);
    o.scalar("k_spread", spread);

    let q = match s.get("green.q")?.or(g.chart().map(|c| c.dim() as f64)) {
        Some(q) => q,
        None => {
            return Err(CliError::Config(
                "`green.q` is required without coordinates".into(),
            ))
        }
    };
    let h = g.band_width();
    let near_radii = s.list("green.near_radii")?.unwrap_or_else(|| {
        doubling_radii(0.2 * r0, 4)
            .into_iter()
            .filter(|r| *r >= 2.0 * h)
            .collect()
    });
    let mut csv = String::from("r,flux,flux_form,energy,annulus\n");
    if near_radii.len() >= 2 {
        let np = near_pole_integrability(&g, &gr, &near_radii, q, None)?;
        for r in &np.rows {
            writeln!(
                csv,
                "{},{},{},{},{}",
                r.r, r.flux, r.flux_form, r.energy, r.annulus
            )
            .unwrap();
        }
        o.scalar("flux_variation", np.flux_variation);
        if let Some(v) = np.caccioppoli_variation {
            o.scalar("caccioppoli_variation", v);
        }
    }
    o.file("near_pole.csv", csv);

    if let Some(scale) = s.get::<f64>("green.compare_scale")? {
        let other = green_compact(
            &g,
            &omega,
            x0,
            &cfg,
            &GreenOptions {
                scale: Some(scale),
                ..opts.clone()
            },
        )?;
        let tol = s.get_or("green.uniqueness_tol", 1e-4)?;
        let (sup, matched) = green_difference_bound(&g, &gr, &other, tol)?;
        o.scalar("difference_sup", sup);
        o.scalar("difference_matched", matched);
    }

    let mut csv = String::from("r,min,max\n");
    for r in &gr.profile {
        writeln!(csv, "{},{},{}", r.r, r.min, r.max).unwrap();
    }
    o.file("profile.csv", csv);
    let mut csv = String::from("level,radius,ball_size,capacity,change\n");
    for (i, t) in gr.trace.iter().enumerate() {
        writeln!(
            csv,
            "{i},{},{},{},{}",
            t.radius, t.ball_size, t.capacity, t.change
        )
        .unwrap();
    }
    o.file("trace.csv", csv);
    o.file("green.field", write_field(&gr.field));
    o.file("green.meta", green_metadata(&gr).to_text());
    Ok(o)
}

fn global_green(s: &Settings) -> Result<Outcome, CliError> {
    let dim = s.get_or("space.dim", 2)?;
    let family = LatticeFamily::new(dim, s.get_or("space.spacing", 1.0 / 16.0)?)?;
    let q = s.get_or("global.q", dim as f64)?;
    let mut cfg = s.solver("solver.p")?;
    cfg.p = q;
    cfg.validate()?;
    let d = GlobalGreenOptions::default();
    let opts = GlobalGreenOptions {
        stages: s.get_or("global.stages", d.stages)?,
        max_vertices: s.get_or("global.max_vertices", d.max_vertices)?,
        q_tol: s.get_or("global.q_tol", d.q_tol)?,
    };
    let gr = green_global(&family, q, &cfg, &opts)?;
    let h = family.spacing;
    let (r_in, r_out) = (gr.r_in(), gr.r_out());

    let pair = |key: &str, default: (f64, f64)| -> Result<(f64, f64), CliError> {
        match s.list(key)?.as_deref() {
            None => Ok(default),
            Some([a, b]) => Ok((*a, *b)),
            Some(_) => Err(CliError::Config(format!("`{key}` needs two radii"))),
        }
    };
    let inner = pair("global.inner", ((4.0 * h).max(r_in), (16.0 * h).max(4.0 * r_in)))?;
    let outer = pair("global.outer", (r_out / 8.0, r_out / 2.0))?;
    let fits = log_asymptotics_fit(&gr, inner, outer)?;
    let c = s.get_or("global.fit_ratio", 1.25)?;

    let mut o = Outcome::default();
    let samples = [(-0.1, 0.1), (0.05, 0.3), (-0.3, -0.1)];
    let mut report = validate_global(&gr, &samples, &cfg, s.get_or("global.level_tol", 0.02)?);
    let mut csv = String::from("range,quantity,slope,intercept,residual\n");
    for (name, f) in [("inner", fits.inner), ("outer", fits.outer)] {
        for (qn, l) in [("max", f.max), ("min", f.min)] {
            writeln!(csv, "{name},{qn},{},{},{}", l.slope, l.intercept, l.residual).unwrap();
        }
    }
    o.file("fits.csv", csv);
    let slopes = [
        fits.inner.max.slope,
        fits.inner.min.slope,
        fits.outer.max.slope,
        fits.outer.min.slope,
    ];
    let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report.push(ReportRow::new(
        "fits",
        "slope_ratio",
        if lo > 0.0 { hi / lo } else { f64::INFINITY },
        None,
        Some(c),
    ));

    let triples: Vec<(f64, f64, f64)> = match s.list("global.triples")? {
        None => [
            (4.0, 8.0, 32.0),
            (4.0, 16.0, 64.0),
            (8.0, 16.0, 64.0),
            (8.0, 16.0, 128.0),
            (16.0, 32.0, 128.0),
        ]
        .iter()
        .map(|(a, b, c)| (a * h, b * h, c * h))
        .collect(),
        Some(t) if t.len() % 3 == 0 => t.chunks(3).map(|w| (w[0], w[1], w[2])).collect(),
        Some(_) => {
            return Err(CliError::Config(
                "`global.triples` needs a multiple of three radii".into(),
            ))
        }
    };
    let mm = min_max_capacity_check(&gr, &triples, &cfg)?;
    let mut csv = String::from("r,r0,R,upper_ratio,lower_ratio\n");
    for r in &mm.rows {
        let lower = r.lower_ratio.map(|x| x.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{},{},{lower}", r.r, r.r0, r.big_r, r.upper_ratio).unwrap();
    }
    o.file("minmax.csv", csv);

    o.scalar("q", gr.q);
    o.scalar("lambda", gr.lambda);
    o.scalar("inner_value", gr.inner_value);
    o.scalar("outer_value", gr.outer_value);
    o.scalar("minmax_c", mm.c);
    if s.get_or("global.uniqueness", true)? && opts.stages > 1 {
        let prev = green_global(
            &family,
            q,
            &cfg,
            &GlobalGreenOptions {
                stages: opts.stages - 1,
                ..opts.clone()
            },
        )?;
        let u = uniqueness_diagnostics(&gr, &prev, &UniquenessOptions::default())?;
        o.scalar("uniqueness_sup", u.sup);
        o.scalar("uniqueness_gradient", u.gradient_q);
        report.push(ReportRow::new(
            "uniqueness",
            "sup_difference",
            u.sup,
            None,
            Some(UniquenessOptions::default().sup_tol),
        ));
    }
    o.report = Some(report);
    o.file("trace.csv", gr.trace_csv());
    o.file("global.field", write_field(&gr.field));
    o.file("global.meta", global_green_metadata(&gr).to_text());
    Ok(o)
}

fn verify(s: &Settings) -> Result<Outcome, CliError> {
    match s.raw("verify.suite").unwrap_or("principles") {
        "principles" => {}
        other => {
            return Err(CliError::Config(format!(
                "unknown suite `{other}`, expected `principles`"
            )))
        }
    }
    let opts = SuiteOptions {
        seed: s.seed()?,
        instances: s.get_or("verify.instances", 100)?,
        ..Default::default()
    };
    let report = principles_suite(&opts);
    let mut o = Outcome::default();
    o.scalar("seed", opts.seed);
    o.scalar("instances", report.rows.len());
    o.scalar("failures", report.failures().count());
    o.report = Some(report);
    Ok(o)
}
