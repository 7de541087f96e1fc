//! CSV column documentation and the operation-to-subcommand map.

/// Library operation and the subcommand that exposes it.
pub const OPERATIONS: &[(&str, &str)] = &[
    ("build_grid", "regularity"),
    ("estimate_regularity", "regularity"),
    ("ball", "profile"),
    ("sphere_band", "profile"),
    ("oscillation_profile", "profile"),
    ("gradient", "solve"),
    ("p_energy", "solve"),
    ("energy_gradient", "solve"),
    ("sobolev_norm", "solve"),
    ("comparability_ratio", "solve"),
    ("solve_dirichlet", "solve"),
    ("residual", "solve"),
    ("harnack_ratio", "solve"),
    ("p_potential", "capacity"),
    ("capacity", "capacity"),
    ("level_set_capacity", "capacity"),
    ("ring_bounds_check", "capacity"),
    ("loewner_profile", "capacity"),
    ("parabolicity_probe", "capacity"),
    ("capacity_calculus_check", "verify"),
    ("green_compact", "green"),
    ("normalize_green", "green"),
    ("validate_green", "green"),
    ("fundamental_constant", "green"),
    ("near_pole_integrability", "green"),
    ("green_difference_bound", "green"),
    ("green_global", "global-green"),
    ("log_asymptotics_fit", "global-green"),
    ("min_max_capacity_check", "global-green"),
    ("uniqueness_diagnostics", "global-green"),
    ("run", "run"),
];

pub const SUBCOMMANDS: &[&str] = &[
    "solve",
    "capacity",
    "green",
    "global-green",
    "verify",
    "profile",
    "regularity",
    "run",
];

const REPORT: &[(&str, &str)] = &[
    ("instance_id", "row identifier"),
    ("quantity", "checked quantity"),
    ("value", "measured value"),
    ("bound_low", "lower bound, empty when absent"),
    ("bound_high", "upper bound, empty when absent"),
    ("pass", "true when value lies within the bounds"),
];

const SUMMARY: &[(&str, &str)] = &[("quantity", "scalar name"), ("value", "scalar value")];

type Columns = &'static [(&'static str, &'static str)];

/// CSV files written by a subcommand and their columns.
pub fn files(subcommand: &str) -> Vec<(&'static str, Columns)> {
    match subcommand {
        "solve" => vec![
            (
                "solution.csv",
                &[
                    ("vertex", "vertex id"),
                    ("value", "solution value"),
                    ("energy_gradient", "derivative of the p-energy, 0 off the domain"),
                ],
            ),
            (
                "gradient.csv",
                &[
                    ("index", "vertex id in chart mode, edge index in edge mode"),
                    ("gradient_norm", "pointwise gradient norm"),
                ],
            ),
            ("summary.csv", SUMMARY),
            ("report.csv", REPORT),
        ],
        "profile" => vec![(
            "profile.csv",
            &[
                ("r", "radius"),
                ("min", "minimum over the sphere band"),
                ("max", "maximum over the sphere band"),
                ("oscillation", "max minus min"),
                ("ball_size", "vertices in the open ball"),
                ("band_size", "vertices in the sphere band"),
            ],
        )],
        "regularity" => vec![
            ("regularity.csv", SUMMARY),
            (
                "poincare.csv",
                &[
                    ("center", "ball center"),
                    ("radius", "ball radius"),
                    ("field", "test field name"),
                    ("left", "mean oscillation"),
                    ("right", "scaled gradient mean"),
                ],
            ),
        ],
        "capacity" => vec![
            ("summary.csv", SUMMARY),
            ("report.csv", REPORT),
            (
                "ring.csv",
                &[
                    ("r", "inner radius"),
                    ("R", "outer radius"),
                    ("capacity", "ring capacity"),
                    ("lower_form", "lower bound form"),
                    ("upper_form", "upper bound form"),
                ],
            ),
            (
                "loewner.csv",
                &[
                    ("pair", "pair index"),
                    ("t", "distance over smaller diameter"),
                    ("capacity", "condenser capacity"),
                ],
            ),
            (
                "parabolicity.csv",
                &[("R", "outer ball radius"), ("capacity", "relative capacity")],
            ),
        ],
        "green" => vec![
            ("summary.csv", SUMMARY),
            ("validation.csv", REPORT),
            (
                "profile.csv",
                &[("r", "radius"), ("min", "m(r)"), ("max", "M(r)")],
            ),
            (
                "trace.csv",
                &[
                    ("level", "construction level"),
                    ("radius", "ball radius"),
                    ("ball_size", "vertices in the ball"),
                    ("capacity", "capacity of the ball"),
                    ("change", "sup change from the previous level"),
                ],
            ),
            (
                "near_pole.csv",
                &[
                    ("r", "radius"),
                    ("flux", "integral of |Du|^(p-1) over the punctured ball"),
                    ("flux_form", "comparison form"),
                    ("energy", "integral of |Du|^p over the punctured ball"),
                    ("annulus", "scaled annulus integral of |u|^p"),
                ],
            ),
        ],
        "global-green" => vec![
            ("summary.csv", SUMMARY),
            ("validation.csv", REPORT),
            (
                "trace.csv",
                &[
                    ("stage", "stage index"),
                    ("r_in", "inner plate radius"),
                    ("r_out", "outer plate radius"),
                    ("m_i", "minimum before normalization"),
                    ("M_i", "maximum before normalization"),
                    ("divisor", "normalizing divisor"),
                    ("overlap_change", "sup change on the previous annulus"),
                ],
            ),
            (
                "fits.csv",
                &[
                    ("range", "inner or outer"),
                    ("quantity", "max or min"),
                    ("slope", "coefficient of log(1/r)"),
                    ("intercept", "fit intercept"),
                    ("residual", "root mean square residual"),
                ],
            ),
            (
                "minmax.csv",
                &[
                    ("r", "inner radius"),
                    ("r0", "middle radius"),
                    ("R", "outer radius"),
                    ("upper_ratio", "ratio in the upper inequality"),
                    (
                        "lower_ratio",
                        "ratio in the lower inequality, empty when undefined",
                    ),
                ],
            ),
        ],
        "verify" => vec![("principles.csv", REPORT)],
        _ => Vec::new(),
    }
}

/// The schema file content for one subcommand.
pub fn schema_csv(subcommand: &str) -> String {
    let mut s = String::from("file,column,description\n");
    for (file, cols) in files(subcommand) {
        for (c, d) in cols {
            s.push_str(&format!("{file},{c},\"{d}\"\n"));
        }
    }
    s
}
