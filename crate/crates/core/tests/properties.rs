use greenpot::calculus::GradientField;
use greenpot::global::LatticeFamily;
use greenpot::io::{read_field, read_graph, write_field, write_graph};
use greenpot::prelude::*;
use greenpot::space::{estimate_regularity, Edge};
use proptest::prelude::*;

/// Connected graph: a random tree plus extra edges, positive weights.
fn weighted_graph(max_n: usize) -> impl Strategy<Value = MetricGraph> {
    (3..max_n).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
        let extra = prop::collection::vec((0..n, 0..n), 0..n);
        let weights = prop::collection::vec((0.1f64..3.0, 0.1f64..3.0), 2 * n);
        let measures = prop::collection::vec(0.1f64..2.0, n);
        (parents, extra, weights, measures).prop_map(|(parents, extra, w, measure)| {
            let mut pairs: Vec<(usize, usize)> =
                parents.iter().enumerate().map(|(i, &p)| (p, i + 1)).collect();
            for (a, b) in extra {
                let (a, b) = (a.min(b), a.max(b));
                if a != b && !pairs.iter().any(|&(x, y)| (x.min(y), x.max(y)) == (a, b)) {
                    pairs.push((a, b));
                }
            }
            let edges = pairs
                .iter()
                .zip(w.iter().cycle())
                .map(|(&(a, b), &(length, conductance))| Edge {
                    a,
                    b,
                    length,
                    conductance,
                })
                .collect();
            MetricGraph::new(measure, edges, None).unwrap()
        })
    })
}

fn grid() -> impl Strategy<Value = MetricGraph> {
    (1usize..=3, 0.05f64..2.0).prop_flat_map(|(dim, h)| {
        let max_side: usize = [0, 12, 7, 4][dim];
        (3usize..=max_side).prop_map(move |side| build_grid(dim, side, h).unwrap())
    })
}

fn edge_cfg(p: f64) -> SolverConfig {
    SolverConfig::new(p).unwrap().with_mode(GradientMode::Edge)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metric_axioms_on_weighted_graphs(g in weighted_graph(14)) {
        let n = g.len();
        for x in 0..n {
            prop_assert_eq!(g.distance(x, x), 0.0);
            for y in 0..n {
                let dxy = g.distance(x, y);
                prop_assert!(dxy > 0.0 || x == y);
                prop_assert!((dxy - g.distance(y, x)).abs() <= 1e-12 * (1.0 + dxy));
                for z in 0..n {
                    prop_assert!(g.distance(x, z) <= dxy + g.distance(y, z) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn metric_axioms_on_grids(g in grid(), seed in any::<u64>()) {
        let n = g.len();
        let pick = |k: u64| (seed.wrapping_mul(k * 2 + 1) >> 7) as usize % n;
        for k in 0..6 {
            let (x, y, z) = (pick(3 * k), pick(3 * k + 1), pick(3 * k + 2));
            prop_assert_eq!(g.distance(x, x), 0.0);
            prop_assert_eq!(g.distance(x, y), g.distance(y, x));
            prop_assert!(g.distance(x, z) <= g.distance(x, y) + g.distance(y, z) + 1e-12);
        }
    }

    #[test]
    fn balls_contain_center_and_have_positive_measure(g in weighted_graph(12), r in 1e-3f64..5.0, x in 0usize..12) {
        let x = x % g.len();
        let b = ball(&g, x, r);
        prop_assert!(b.contains(x));
        prop_assert!(g.set_measure(&b) > 0.0);
        prop_assert!(b.is_subset(&closed_ball(&g, x, r)));
    }

    #[test]
    fn chart_is_injective_with_unit_steps(g in grid()) {
        let c = g.chart().unwrap();
        let h = c.spacing();
        for v in 0..g.len() {
            prop_assert_eq!(c.vertex_at(c.lattice(v)), Some(v));
        }
        for e in g.edges() {
            prop_assert!((g.distance(e.a, e.b) - h).abs() <= 1e-12 * h);
        }
    }

    #[test]
    fn doubling_and_poincare_samples(side in 9usize..15, h in 0.1f64..1.0, p in 1.3f64..4.0) {
        let g = build_grid(2, side, h).unwrap();
        let x = g.center_vertex().unwrap();
        let top = (side / 2) as f64 * h;
        let radii = [top / 4.0, top / 2.0, top];
        let rep = estimate_regularity(&g, x, &radii, p).unwrap();
        prop_assert!(rep.doubling >= 1.0);
        for s in &rep.poincare {
            prop_assert!(s.left <= rep.poincare_constant * s.right * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn edge_quotients_flip_with_orientation(g in weighted_graph(10), vals in prop::collection::vec(-5.0f64..5.0, 10)) {
        let n = g.len();
        let u = ScalarField::new(vals[..n].to_vec()).unwrap();
        let flipped: Vec<Edge> = g.edges().iter().map(|e| Edge { a: e.b, b: e.a, ..*e }).collect();
        let h = MetricGraph::new(g.measures().to_vec(), flipped, None).unwrap();
        let (GradientField::Edge { quotients: q }, GradientField::Edge { quotients: r }) =
            (gradient(&g, &u, GradientMode::Edge).unwrap(), gradient(&h, &u, GradientMode::Edge).unwrap())
        else {
            unreachable!()
        };
        for (a, b) in q.iter().zip(&r) {
            prop_assert_eq!(a.unwrap(), -b.unwrap());
        }
    }

    #[test]
    fn chart_norm_is_euclidean(g in grid(), seed in 0u64..1000) {
        let u = ScalarField::from_fn(&g, |v| ((v as u64 * 2654435761 + seed) % 97) as f64 / 13.0);
        let c = g.chart().unwrap();
        let h = c.spacing();
        let norms = gradient(&g, &u, GradientMode::Chart).unwrap().norms();
        for (v, norm) in norms.iter().enumerate() {
            let sq: f64 = (0..c.dim())
                .filter_map(|k| c.forward(v, k).map(|w| ((u.values()[w] - u.values()[v]) / h).powi(2)))
                .sum();
            prop_assert!((norm.unwrap() - sq.sqrt()).abs() <= 1e-12 * (1.0 + sq.sqrt()));
        }
    }

    #[test]
    fn condenser_value_is_energy_of_potential(g in weighted_graph(12), p in 1.3f64..5.0) {
        let n = g.len();
        let e = VertexSet::from_ids(n, [0]);
        let f = VertexSet::from_ids(n, [n - 1]);
        let c = Condenser::new(&g, e, f, g.all()).unwrap();
        let cfg = edge_cfg(p);
        let r = p_potential(&g, &c, &cfg).unwrap().into_result().unwrap();
        let energy = c.energy(&g, &r.potential, p, GradientMode::Edge).unwrap();
        prop_assert!((r.value - energy).abs() <= 1e-12 * energy.max(1.0));
        prop_assert!(r.value > 0.0);
        for v in r.potential.domain().iter() {
            let x = r.potential.values()[v];
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&x));
        }
    }

    #[test]
    fn io_round_trip_is_exact(g in weighted_graph(12), vals in prop::collection::vec(-1e6f64..1e6, 12), mask in prop::collection::vec(any::<bool>(), 12)) {
        let back = read_graph(&write_graph(&g)).unwrap();
        prop_assert_eq!(back.measures(), g.measures());
        prop_assert_eq!(back.edges(), g.edges());
        let n = g.len();
        let dom = VertexSet::from_mask(mask[..n].to_vec());
        let u = ScalarField::on(dom, vals[..n].to_vec()).unwrap();
        let w = read_field(&write_field(&u)).unwrap();
        prop_assert_eq!(w.domain(), u.domain());
        for v in u.domain().iter() {
            prop_assert_eq!(w.values()[v].to_bits(), u.values()[v].to_bits());
        }
    }

    #[test]
    fn grid_io_keeps_the_chart(g in grid()) {
        let back = read_graph(&write_graph(&g)).unwrap();
        let (a, b) = (g.chart().unwrap(), back.chart().unwrap());
        prop_assert_eq!(a.dim(), b.dim());
        prop_assert_eq!(a.spacing(), b.spacing());
        for v in 0..g.len() {
            prop_assert_eq!(a.lattice(v), b.lattice(v));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn comparison_of_ordered_data(side in 6usize..10, p in 1.5f64..3.5, lift in prop::collection::vec(0.0f64..1.0, 100)) {
        let g = build_grid(2, side, 1.0 / (side - 1) as f64).unwrap();
        let omega = VertexSet::from_predicate(g.len(), |v| g.neighbors(v).len() == 4);
        let bd = omega.complement();
        let c = g.chart().unwrap();
        let f: Vec<f64> = (0..g.len()).map(|v| c.coordinates(v)[0] * c.coordinates(v)[1]).collect();
        let fl: Vec<f64> = f.iter().zip(&lift).map(|(a, b)| a + b).collect();
        let cfg = SolverConfig::new(p).unwrap();
        let solve = |data: Vec<f64>| {
            let prob = DirichletProblem::new(&g, omega.clone(), ScalarField::on(bd.clone(), data).unwrap()).unwrap();
            solve_dirichlet(&prob, &cfg).unwrap().field
        };
        let (u, v) = (solve(f), solve(fl));
        let (lo, hi) = (u.min_on(&bd).unwrap(), u.max_on(&bd).unwrap());
        for x in omega.iter() {
            prop_assert!(u.values()[x] <= v.values()[x] + 1e-8);
            prop_assert!((lo - 1e-8..=hi + 1e-8).contains(&u.values()[x]));
        }
    }

    #[test]
    fn green_function_invariants(side in 9usize..14, p in 1.5f64..3.5, edge in any::<bool>()) {
        let (p, mode) = if edge { (p, GradientMode::Edge) } else { (2.0, GradientMode::Chart) };
        let g = build_grid(2, side, 1.0 / (side - 1) as f64).unwrap();
        let omega = VertexSet::from_predicate(g.len(), |v| g.neighbors(v).len() == 4);
        let x0 = g.center_vertex().unwrap();
        let cfg = SolverConfig::new(p).unwrap().with_mode(mode);
        let gr = green_compact(&g, &omega, x0, &cfg, &GreenOptions::default()).unwrap();
        for v in 0..g.len() {
            let u = gr.field.values()[v];
            prop_assert!(u.is_finite());
            if !omega.contains(v) {
                prop_assert_eq!(u, 0.0);
            }
        }
        let single = Condenser::relative(&g, VertexSet::from_ids(g.len(), [x0]), omega.clone()).unwrap();
        let cap = capacity(&g, &single, &cfg).unwrap().finite().unwrap();
        let want = cap.powf(1.0 / (1.0 - p));
        prop_assert!((gr.pole_value - want).abs() <= 1e-6 * want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn global_green_sign_pattern(k in 4u32..8) {
        let fam = LatticeFamily::new(2, 1.0 / k as f64).unwrap();
        let opts = GlobalGreenOptions { stages: 2, ..Default::default() };
        let gr = green_global(&fam, 2.0, &SolverConfig::default(), &opts).unwrap();
        prop_assert!(gr.trace.iter().all(|t| t.divisor > 0.0));
        prop_assert!(gr.inner_value > 0.0);
        prop_assert!(gr.outer_value < 0.0);
    }
}
