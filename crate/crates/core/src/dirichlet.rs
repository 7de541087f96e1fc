//! The p-harmonic Dirichlet problem and the structural diagnostics built on it.

use std::io::Write;
use std::path::PathBuf;

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::calculus::{EnergyModel, GradientMode, Plate, ScalarField};
use crate::error::{Error, Result};
use crate::space::{ball, sphere_band, MetricGraph, VertexId, VertexSet};

/// Admissible range of the exponent for solves.
pub const P_MIN: f64 = 1.2;
pub const P_MAX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub p: f64,
    /// Relative energy change below which the iteration may stop.
    pub energy_tol: f64,
    /// Bound on the normalized weak-form residual.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub shrink: f64,
    /// Added inside `|Du|²` before raising to `p/2`.
    pub eps_reg: f64,
    pub mode: GradientMode,
    /// When set, each iteration appends `iteration,energy,residual` here.
    pub log_path: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p: 2.0,
            energy_tol: 1e-10,
            grad_tol: 1e-9,
            max_iter: 10_000,
            shrink: 0.5,
            eps_reg: 1e-12,
            mode: GradientMode::Chart,
            log_path: None,
        }
    }
}

impl SolverConfig {
    pub fn new(p: f64) -> Result<Self> {
        let cfg = SolverConfig {
            p,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: GradientMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > P_MIN && self.p <= P_MAX) {
            return Err(Error::param(
                "p",
                format!("must lie in ({P_MIN}, {P_MAX}], got {}", self.p),
            ));
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::param("energy_tol", "must be positive"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::param("grad_tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::param("shrink", "must lie in (0, 1)"));
        }
        if !(self.eps_reg >= 0.0 && self.eps_reg.is_finite()) {
            return Err(Error::param("eps_reg", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Minimize the p-energy over fields fixed to `boundary` off `omega`.
#[derive(Clone, Debug)]
pub struct DirichletProblem<'g> {
    graph: &'g MetricGraph,
    omega: VertexSet,
    boundary: ScalarField,
    domain: VertexSet,
    plates: Vec<Plate>,
}

impl<'g> DirichletProblem<'g> {
    /// The energy lives on `omega ∪ domain(boundary)`, and every graph
    /// neighbor of `omega` must carry boundary data.
    pub fn new(graph: &'g MetricGraph, omega: VertexSet, boundary: ScalarField) -> Result<Self> {
        if omega.universe() != graph.len() || boundary.len() != graph.len() {
            return Err(Error::param("omega", "sets and fields must cover the graph"));
        }
        if !omega.is_disjoint(boundary.domain()) {
            let v = omega.intersection(boundary.domain()).first().unwrap_or(0);
            return Err(Error::param(
                "boundary",
                format!("boundary data given at unknown vertex {v}"),
            ));
        }
        let domain = omega.union(boundary.domain());
        for v in graph.outer_boundary(&omega).iter() {
            if !domain.contains(v) {
                return Err(Error::MissingValue(v));
            }
        }
        Ok(DirichletProblem {
            graph,
            omega,
            boundary,
            domain,
            plates: Vec::new(),
        })
    }

    /// Like [`DirichletProblem::new`] with the energy restricted to `domain`.
    /// Neighbors outside `domain` are ignored, which imposes a natural
    /// (Neumann) condition there. Fixed vertices of `domain` need data.
    pub fn on_domain(
        graph: &'g MetricGraph,
        domain: VertexSet,
        omega: VertexSet,
        boundary: ScalarField,
    ) -> Result<Self> {
        if domain.universe() != graph.len()
            || omega.universe() != graph.len()
            || boundary.len() != graph.len()
        {
            return Err(Error::param("omega", "sets and fields must cover the graph"));
        }
        if !omega.is_subset(&domain) {
            return Err(Error::param("domain", "omega must lie inside the domain"));
        }
        let fixed = domain.difference(&omega);
        if let Some(v) = fixed.difference(boundary.domain()).first() {
            return Err(Error::MissingValue(v));
        }
        Ok(DirichletProblem {
            graph,
            omega,
            boundary,
            domain,
            plates: Vec::new(),
        })
    }

    /// Plates whose level functions place their boundary between vertices.
    pub fn with_plates(mut self, plates: Vec<Plate>) -> Self {
        self.plates = plates;
        self
    }

    pub fn omega(&self) -> &VertexSet {
        &self.omega
    }

    pub fn domain(&self) -> &VertexSet {
        &self.domain
    }

    pub fn graph(&self) -> &MetricGraph {
        self.graph
    }

    pub(crate) fn model(&self, p: f64, mode: GradientMode) -> Result<EnergyModel> {
        let refs: Vec<&Plate> = self.plates.iter().collect();
        EnergyModel::with_plates(self.graph, mode, &self.domain, &self.domain, false, p, &refs)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Defined on the problem domain.
    pub field: ScalarField,
    /// Unregularized p-energy of `field`.
    pub energy: f64,
    /// Normalized weak-form residual on omega.
    pub residual: f64,
    pub iterations: usize,
}

const NONE: u32 = u32::MAX;

/// Sparse lower-triangular Hessian pattern with a symbolic factorization
/// shared by every Newton step.
struct Hessian {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    slots: Vec<u32>,
    vals: Vec<f64>,
    symbolic: SymbolicLlt<usize>,
}

impl Hessian {
    fn new(model: &EnergyModel, local: &[u32], m: usize) -> Result<Self> {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, c) in cols.iter_mut().enumerate() {
            c.push(i);
        }
        for t in 0..model.num_terms() {
            let vs: Vec<u32> = model
                .term_vertices(t)
                .map(|v| local[v])
                .filter(|l| *l != NONE)
                .collect();
            for &a in &vs {
                for &b in &vs {
                    if a > b {
                        cols[b as usize].push(a as usize);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(m + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in &mut cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        drop(cols);
        let mut slots = Vec::new();
        let zeros = vec![0.0; local.len()];
        model.hessian_terms(&zeros, 1.0, |_, i, j, _| {
            let (li, lj) = (local[i], local[j]);
            if li == NONE || lj == NONE || li < lj {
                slots.push(NONE);
                return;
            }
            let (r, c) = (li as usize, lj as usize);
            let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            let k = rows.binary_search(&r).expect("pattern covers every term pair");
            slots.push((col_ptr[c] + k) as u32);
        });
        let sym = SymbolicSparseColMatRef::new_checked(m, m, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLlt::try_new(sym, Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("symbolic factorization: {e:?}")))?;
        let nnz = row_idx.len();
        Ok(Hessian {
            col_ptr,
            row_idx,
            slots,
            vals: vec![0.0; nnz],
            symbolic,
        })
    }

    fn assemble(&mut self, model: &EnergyModel, u: &[f64], eps: f64) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
        let mut k = 0;
        let slots = &self.slots;
        let vals = &mut self.vals;
        model.hessian_terms(u, eps, |_, _, _, h| {
            let s = slots[k];
            if s != NONE {
                vals[s as usize] += h;
            }
            k += 1;
        });
    }

    fn diagonal_max(&self) -> f64 {
        (0..self.col_ptr.len() - 1)
            .map(|c| self.vals[self.col_ptr[c]])
            .fold(0.0, f64::max)
    }

    /// Solves `H x = rhs` in place, shifting the diagonal if the plain
    /// factorization fails. Returns false when no shift helps.
    fn solve(&mut self, rhs: &mut [f64]) -> bool {
        let m = rhs.len();
        let base = self.diagonal_max().max(f64::MIN_POSITIVE);
        let mut shift = 0.0;
        for attempt in 0..5 {
            if attempt > 0 {
                let add = if shift == 0.0 { 1e-10 * base } else { 99.0 * shift };
                for c in 0..m {
                    self.vals[self.col_ptr[c]] += add;
                }
                shift += add;
            }
            let sym = SymbolicSparseColMatRef::new_checked(m, m, &self.col_ptr, None, &self.row_idx);
            let mat = SparseColMatRef::new(sym, &self.vals);
            if let Ok(llt) = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower) {
                llt.solve_in_place(MatMut::from_column_major_slice_mut(rhs, m, 1));
                return rhs.iter().all(|x| x.is_finite());
            }
        }
        false
    }
}

struct Free {
    ids: Vec<VertexId>,
    local: Vec<u32>,
}

fn free_indexing(n: usize, omega: &VertexSet) -> Free {
    let ids: Vec<_> = omega.iter().collect();
    let mut local = vec![NONE; n];
    for (i, v) in ids.iter().enumerate() {
        local[*v] = i as u32;
    }
    Free { ids, local }
}

/// Every component of the unknowns must reach a fixed vertex through the
/// energy terms.
fn check_anchored(model: &EnergyModel, free: &Free, n: usize) -> Result<()> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for t in 0..model.num_terms() {
        let mut it = model.term_vertices(t);
        let first = it.next().expect("terms have a center");
        let r0 = find(&mut parent, first);
        for v in it {
            let r = find(&mut parent, v);
            if r != r0 {
                parent[r] = r0;
            }
        }
    }
    let mut anchored = vec![false; n];
    for v in 0..n {
        if free.local[v] == NONE {
            let r = find(&mut parent, v);
            anchored[r] = true;
        }
    }
    for &v in &free.ids {
        let r = find(&mut parent, v);
        if !anchored[r] {
            return Err(Error::IllPosed(format!(
                "the component of vertex {v} has no boundary contact"
            )));
        }
    }
    Ok(())
}

fn normalized_residual(g: &[f64], seminorms: &[f64], free: &Free, p: f64) -> f64 {
    free.ids
        .iter()
        .map(|&v| {
            let s = seminorms[v];
            if s > 0.0 {
                g[v].abs() / (p * s)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Solves the Dirichlet problem. For p = 2 this is one sparse linear solve;
/// otherwise damped Newton with backtracking starts from the p = 2 solution.
pub fn solve_dirichlet(prob: &DirichletProblem<'_>, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let n = prob.graph.len();
    let free = free_indexing(n, &prob.omega);
    let model = prob.model(cfg.p, cfg.mode)?;
    check_anchored(&model, &free, n)?;

    let mut u: Vec<f64> = prob.boundary.values().to_vec();
    for &v in &free.ids {
        u[v] = 0.0;
    }
    let mut log = match &cfg.log_path {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(f, "iteration,energy,residual")?;
            Some(f)
        }
        None => None,
    };
    if free.ids.is_empty() {
        return finish(prob, &model, u, 0, cfg);
    }

    let m = free.ids.len();
    let mut hess = Hessian::new(&model, &free.local, m)?;
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; m];

    // Quadratic start: exact for p = 2 and the initial guess otherwise.
    let quad = if cfg.p == 2.0 {
        None
    } else {
        Some(prob.model(2.0, cfg.mode)?)
    };
    {
        let q = quad.as_ref().unwrap_or(&model);
        hess.assemble(q, &u, 0.0);
        for _ in 0..3 {
            q.gradient_reg(&u, 0.0, &mut grad);
            for (i, &v) in free.ids.iter().enumerate() {
                rhs[i] = -grad[v];
            }
            if !hess.solve(&mut rhs) {
                return Err(Error::LinearAlgebra(
                    "quadratic system is not positive definite".into(),
                ));
            }
            for (i, &v) in free.ids.iter().enumerate() {
                u[v] += rhs[i];
            }
            let seminorms = q.indicator_seminorms();
            q.gradient_reg(&u, 0.0, &mut grad);
            if normalized_residual(&grad, &seminorms, &free, 2.0) <= 1e-3 * cfg.grad_tol {
                break;
            }
        }
    }
    drop(quad);
    if cfg.p == 2.0 {
        return finish(prob, &model, u, 1, cfg);
    }

    let eps = cfg.eps_reg;
    let seminorms = model.indicator_seminorms();
    let mut energy = model.energy_reg(&u, eps);
    let mut best = (f64::INFINITY, u.clone(), f64::INFINITY);
    let mut rel_change = 0.0;
    let mut dir = vec![0.0; m];
    let mut trial = u.clone();
    for it in 0..=cfg.max_iter {
        model.gradient_reg(&u, eps, &mut grad);
        let res = normalized_residual(&grad, &seminorms, &free, cfg.p);
        if let Some(f) = log.as_mut() {
            writeln!(f, "{it},{energy},{res}")?;
        }
        if res < best.2 {
            best = (energy, u.clone(), res);
        }
        if res <= cfg.grad_tol && rel_change <= cfg.energy_tol {
            return finish(prob, &model, u, it, cfg);
        }
        if it == cfg.max_iter {
            break;
        }

        hess.assemble(&model, &u, eps);
        for (i, &v) in free.ids.iter().enumerate() {
            rhs[i] = -grad[v];
        }
        let newton = hess.solve(&mut rhs);
        let mut slope = 0.0;
        if newton {
            dir.copy_from_slice(&rhs);
            slope = free.ids.iter().enumerate().map(|(i, &v)| grad[v] * dir[i]).sum();
        }
        if !newton || !(slope < 0.0) {
            for (i, &v) in free.ids.iter().enumerate() {
                dir[i] = -grad[v];
            }
            slope = -dir.iter().map(|d| d * d).sum::<f64>();
        }

        let slack = 64.0 * f64::EPSILON * energy.abs();
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            trial.copy_from_slice(&u);
            for (i, &v) in free.ids.iter().enumerate() {
                trial[v] += step * dir[i];
            }
            let e = model.energy_reg(&trial, eps);
            if e <= energy + 1e-4 * step * slope + slack {
                accepted = Some(e);
                break;
            }
            step *= cfg.shrink;
        }
        let Some(e_new) = accepted else {
            break;
        };
        rel_change = (energy - e_new).abs() / e_new.abs().max(f64::MIN_POSITIVE);
        std::mem::swap(&mut u, &mut trial);
        energy = e_new;
    }
    let (_, u_best, res) = best;
    let field = ScalarField::on(prob.domain.clone(), u_best)?;
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: res,
        best: Box::new(field),
    })
}

fn finish(
    prob: &DirichletProblem<'_>,
    model: &EnergyModel,
    u: Vec<f64>,
    iterations: usize,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let grad = model.gradient(&u);
    let free = free_indexing(u.len(), &prob.omega);
    let residual = normalized_residual(&grad, &model.indicator_seminorms(), &free, cfg.p);
    let energy = model.energy(&u);
    Ok(Solution {
        field: ScalarField::on(prob.domain.clone(), u)?,
        energy,
        residual,
        iterations,
    })
}

/// Largest weak-form pairing `|∫|Du|^{p-2}Du·Dδ_v|` over `v ∈ omega`, each
/// divided by the energy seminorm of the indicator `δ_v`.
pub fn residual(
    g: &MetricGraph,
    u: &ScalarField,
    p: f64,
    omega: &VertexSet,
    mode: GradientMode,
) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::param("p", format!("must exceed 1, got {p}")));
    }
    for v in g.outer_boundary(omega).iter().chain(omega.iter()) {
        if u.get(v).is_none() {
            return Err(Error::MissingValue(v));
        }
    }
    let model = EnergyModel::new(g, mode, u.domain(), u.domain(), false, p)?;
    let grad = model.gradient(u.values());
    let free = free_indexing(g.len(), omega);
    Ok(normalized_residual(&grad, &model.indicator_seminorms(), &free, p))
}

/// `sup u / inf u` over `B(x, R)`, requiring `u > 0` on `B(x, 6R)`.
pub fn harnack_ratio(g: &MetricGraph, u: &ScalarField, x: VertexId, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::param("R", "radius must be positive"));
    }
    for v in ball(g, x, 6.0 * r).iter() {
        match u.get(v) {
            Some(val) if val > 0.0 => {}
            Some(val) => {
                return Err(Error::Precondition(format!(
                    "u = {val} is not positive at vertex {v} inside B(x, 6R)"
                )))
            }
            None => return Err(Error::MissingValue(v)),
        }
    }
    let b = ball(g, x, r);
    let hi = u.max_on(&b).expect("ball contains its center");
    let lo = u.min_on(&b).expect("ball contains its center");
    Ok(hi / lo)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileRow {
    pub r: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Profile {
    pub rows: Vec<ProfileRow>,
    pub warnings: Vec<String>,
}

/// `m(r)` and `M(r)` of `u` over the default sphere band at each radius.
pub fn oscillation_profile(g: &MetricGraph, u: &ScalarField, x0: VertexId, radii: &[f64]) -> Profile {
    let mut out = Profile::default();
    for &r in radii {
        let band = sphere_band(g, x0, r).map(|b| b.intersection(u.domain()));
        match band {
            Some(b) if !b.is_empty() => out.rows.push(ProfileRow {
                r,
                min: u.min_on(&b).expect("nonempty"),
                max: u.max_on(&b).expect("nonempty"),
            }),
            _ => out.warnings.push(format!("empty sphere band at r = {r}")),
        }
    }
    out
}

/// Whether every component of `{u > α}` and of `{u < α}` inside `omega`
/// reaches a vertex next to the complement of `omega`.
pub fn level_components_reach_boundary(
    g: &MetricGraph,
    u: &ScalarField,
    omega: &VertexSet,
    alpha: f64,
) -> bool {
    let touching = g.inner_boundary(omega);
    let above = VertexSet::from_predicate(g.len(), |v| omega.contains(v) && u.values()[v] > alpha);
    let below = VertexSet::from_predicate(g.len(), |v| omega.contains(v) && u.values()[v] < alpha);
    [above, below]
        .iter()
        .all(|s| g.components(s).iter().all(|c| !c.is_disjoint(&touching)))
}
