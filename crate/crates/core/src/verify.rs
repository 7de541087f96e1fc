//! Seeded randomized checks of the comparison and maximum principles, level
//! component exclusion and the capacity calculus.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calculus::{GradientMode, ScalarField};
use crate::capacity::{calculus_margin, CalculusInstance, CALCULUS_TOL};
use crate::dirichlet::{level_components_reach_boundary, solve_dirichlet, DirichletProblem, SolverConfig};
use crate::error::Result;
use crate::report::{Report, ReportRow};
use crate::space::{ball, build_grid, closed_ball, MetricGraph, VertexSet};

/// Slack for pointwise inequalities between solver outputs.
pub const PRINCIPLE_TOL: f64 = 1e-8;

const EXPONENTS: [f64; 3] = [1.5, 2.0, 3.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Principle {
    Comparison,
    Maximum,
    LevelComponents,
    Monotone,
    Antitone,
    DecreasingChain,
    Subadditive,
    Nesting,
}

impl Principle {
    pub const ALL: [Principle; 8] = [
        Principle::Comparison,
        Principle::Maximum,
        Principle::LevelComponents,
        Principle::Monotone,
        Principle::Antitone,
        Principle::DecreasingChain,
        Principle::Subadditive,
        Principle::Nesting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Principle::Comparison => "comparison",
            Principle::Maximum => "weak_maximum",
            Principle::LevelComponents => "level_components",
            Principle::Monotone => "cap_monotone",
            Principle::Antitone => "cap_antitone",
            Principle::DecreasingChain => "cap_decreasing_chain",
            Principle::Subadditive => "cap_subadditive",
            Principle::Nesting => "cap_nesting",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random instances per principle.
    pub instances: usize,
    pub principles: Vec<Principle>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            instances: 100,
            principles: Principle::ALL.to_vec(),
        }
    }
}

fn instance_rng(seed: u64, principle: Principle, index: usize) -> ChaCha8Rng {
    let mix = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(principle.tag() << 32)
        .wrapping_add(index as u64);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Random small square grid with `Ω` = interior minus a few holes.
fn random_domain(rng: &mut ChaCha8Rng) -> (MetricGraph, VertexSet) {
    let side = rng.random_range(6..=10);
    let g = build_grid(2, side, 1.0 / (side - 1) as f64).expect("valid grid");
    let omega = loop {
        let o = VertexSet::from_predicate(g.len(), |v| g.neighbors(v).len() == 4 && !rng.random_bool(0.1));
        if !o.is_empty() {
            break o;
        }
    };
    (g, omega)
}

/// Chart mode where the energy is a Dirichlet form, edge mode otherwise.
fn lattice_mode(p: f64) -> GradientMode {
    if p == 2.0 {
        GradientMode::Chart
    } else {
        GradientMode::Edge
    }
}

fn solve(g: &MetricGraph, omega: &VertexSet, data: &[f64], cfg: &SolverConfig) -> Result<ScalarField> {
    let bd = ScalarField::on(omega.complement(), data.to_vec())?;
    Ok(solve_dirichlet(&DirichletProblem::new(g, omega.clone(), bd)?, cfg)?.field)
}

fn comparison(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (g, omega) = random_domain(rng);
    let p = *EXPONENTS.choose(rng).expect("nonempty");
    let cfg = SolverConfig::new(p)?;
    let f: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up: Vec<f64> = f.iter().map(|x| x + rng.random_range(0.0..1.0)).collect();
    let u = solve(&g, &omega, &f, &cfg)?;
    let v = solve(&g, &omega, &up, &cfg)?;
    Ok(omega
        .iter()
        .map(|x| u.values()[x] - v.values()[x])
        .fold(f64::NEG_INFINITY, f64::max))
}

fn maximum(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (g, omega) = random_domain(rng);
    let p = *EXPONENTS.choose(rng).expect("nonempty");
    let cfg = SolverConfig::new(p)?;
    let f: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = solve(&g, &omega, &f, &cfg)?;
    let rim = g.outer_boundary(&omega);
    let bmax = rim.iter().map(|x| f[x]).fold(f64::NEG_INFINITY, f64::max);
    let bmin = rim.iter().map(|x| f[x]).fold(f64::INFINITY, f64::min);
    let umax = u.max_on(&omega).expect("nonempty");
    let umin = u.min_on(&omega).expect("nonempty");
    Ok((umax - bmax).max(bmin - umin))
}

/// 0 when every level component reaches the boundary, 1 otherwise.
fn level_components(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (g, omega) = random_domain(rng);
    let p = *EXPONENTS.choose(rng).expect("nonempty");
    let cfg = SolverConfig::new(p)?;
    let f: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = solve(&g, &omega, &f, &cfg)?;
    let lo = u.min_on(&omega).expect("nonempty");
    let hi = u.max_on(&omega).expect("nonempty");
    let alpha = lo + (hi - lo) * rng.random_range(0.05..0.95);
    Ok(if level_components_reach_boundary(&g, &u, &omega, alpha) {
        0.0
    } else {
        1.0
    })
}

fn random_subset(rng: &mut ChaCha8Rng, pool: &VertexSet, prob: f64) -> VertexSet {
    let s = VertexSet::from_predicate(pool.universe(), |v| pool.contains(v) && rng.random_bool(prob));
    if s.is_empty() {
        let ids: Vec<_> = pool.iter().collect();
        VertexSet::from_ids(pool.universe(), [*ids.choose(rng).expect("nonempty pool")])
    } else {
        s
    }
}

fn calculus(rng: &mut ChaCha8Rng, which: Principle) -> Result<f64> {
    let (g, omega) = random_domain(rng);
    let p = *EXPONENTS.choose(rng).expect("nonempty");
    let cfg = SolverConfig::new(p)?.with_mode(lattice_mode(p));
    let inst = match which {
        Principle::Monotone => {
            let k1 = random_subset(rng, &omega, 0.15);
            let k2 = k1.union(&random_subset(rng, &omega, 0.15));
            CalculusInstance::Monotone { k1, k2, omega }
        }
        Principle::Antitone => {
            let k = random_subset(rng, &omega, 0.15);
            let drop = random_subset(rng, &omega.difference(&k), 0.2);
            let omega1 = omega.difference(&drop);
            CalculusInstance::Antitone {
                k,
                omega1,
                omega2: omega,
            }
        }
        Principle::DecreasingChain => {
            let mut chain = vec![random_subset(rng, &omega, 0.4)];
            for _ in 0..3 {
                let last = chain.last().expect("nonempty").clone();
                let next = last.difference(&random_subset(rng, &last, 0.3));
                chain.push(if next.is_empty() { last } else { next });
            }
            CalculusInstance::DecreasingChain { chain, omega }
        }
        Principle::Subadditive => {
            let n = rng.random_range(2..=3);
            let parts = (0..n).map(|_| random_subset(rng, &omega, 0.1)).collect();
            CalculusInstance::Subadditive { parts, omega }
        }
        Principle::Nesting => return nesting(rng, &cfg),
        _ => unreachable!("not a calculus property"),
    };
    calculus_margin(&g, &inst, &cfg)
}

/// Concentric balls `E_1 ⊂ Ω_1 ⊂ E_2 ⊂ …` on a larger grid, with two
/// lattice layers between `Ω_i` and `E_{i+1}`.
fn nesting(rng: &mut ChaCha8Rng, cfg: &SolverConfig) -> Result<f64> {
    let side = rng.random_range(21..=27);
    let g = build_grid(2, side, 1.0).expect("valid grid");
    let c = g.center_vertex().expect("chart");
    let rings = rng.random_range(2..=3);
    let (mut e, mut omegas) = (Vec::new(), Vec::new());
    let mut r = rng.random_range(0.0..1.5);
    for _ in 0..rings {
        e.push(closed_ball(&g, c, r));
        r += rng.random_range(1.0..2.5);
        omegas.push(ball(&g, c, r));
        r += 2.0 + rng.random_range(0.0..1.0);
    }
    calculus_margin(&g, &CalculusInstance::Nesting { e, omegas }, cfg)
}

fn run_one(seed: u64, which: Principle, index: usize) -> ReportRow {
    let mut rng = instance_rng(seed, which, index);
    let id = format!("{}_{index}", which.name());
    let (value, low, high) = match which {
        Principle::Comparison => (comparison(&mut rng), None, Some(PRINCIPLE_TOL)),
        Principle::Maximum => (maximum(&mut rng), None, Some(PRINCIPLE_TOL)),
        Principle::LevelComponents => (level_components(&mut rng), None, Some(0.0)),
        other => (calculus(&mut rng, other), Some(-CALCULUS_TOL), None),
    };
    match value {
        Ok(v) => ReportRow::new(id, which.name(), v, low, high),
        Err(e) => ReportRow::failed(id, &format!("{}: {e}", which.name())),
    }
}

/// Runs every selected principle on `instances` seeded random instances.
/// Rows are ordered by principle and index, independent of thread count.
pub fn principles_suite(opts: &SuiteOptions) -> Report {
    let jobs: Vec<(Principle, usize)> = opts
        .principles
        .iter()
        .flat_map(|&p| (0..opts.instances).map(move |i| (p, i)))
        .collect();
    let rows = jobs.par_iter().map(|&(p, i)| run_one(opts.seed, p, i)).collect();
    Report { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_and_is_reproducible() {
        let opts = SuiteOptions {
            seed: 7,
            instances: 4,
            ..Default::default()
        };
        let a = principles_suite(&opts);
        assert_eq!(a.rows.len(), 32);
        assert!(a.all_pass(), "{}", a.to_csv());
        assert_eq!(a.to_csv(), principles_suite(&opts).to_csv());
    }
}
