use std::path::{Path, PathBuf};
use std::str::FromStr;

use greenpot::io::{read_field, read_graph, KeyValues};
use greenpot::prelude::*;
use greenpot::space::VertexId;

use crate::CliError;

/// Merged configuration: file values overlaid by command-line flags.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    kv: KeyValues,
    base: PathBuf,
}

/// Keys whose values name input files that must exist.
const FILE_KEYS: [&str; 4] = ["space.graph", "solve.boundary", "profile.field", "green.boundary"];

impl Settings {
    pub fn load(config: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let (kv, base) = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                let kv = KeyValues::parse(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                (kv, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (KeyValues::new(), PathBuf::new()),
        };
        let mut s = Settings { kv, base };
        for (k, v) in overrides {
            s.kv.set(k, v);
        }
        for key in FILE_KEYS {
            if let Some(p) = s.path(key) {
                if !p.is_file() {
                    return Err(CliError::Config(format!(
                        "`{key}` names a missing file: {}",
                        p.display()
                    )));
                }
            }
        }
        Ok(s)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.kv.get(key).filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse()
                            .map_err(|_| CliError::Config(format!("invalid number `{x}` in `{key}`")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Relative paths resolve against the config file directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() || self.base.as_os_str().is_empty() {
                p
            } else {
                self.base.join(p)
            }
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("output.dir")
            .unwrap_or_else(|| PathBuf::from("greenpot-out"))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get_or("seed", 0)
    }

    pub fn solver(&self, p_key: &str) -> Result<SolverConfig, CliError> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            p: self.get_or(p_key, 2.0)?,
            energy_tol: self.get_or("solver.energy_tol", d.energy_tol)?,
            grad_tol: self.get_or("solver.grad_tol", d.grad_tol)?,
            max_iter: self.get_or("solver.max_iter", d.max_iter)?,
            shrink: self.get_or("solver.shrink", d.shrink)?,
            eps_reg: self.get_or("solver.eps_reg", d.eps_reg)?,
            mode: self.get_or("solver.mode", d.mode)?,
            log_path: self.path("solver.log"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A graph file when `space.graph` is set, otherwise a grid.
    pub fn graph(&self) -> Result<MetricGraph, CliError> {
        let g = match self.path("space.graph") {
            Some(p) => {
                let text = std::fs::read_to_string(&p)?;
                read_graph(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => {
                let side: usize = self.get_or("space.side", 33)?;
                let dim = self.get_or("space.dim", 2)?;
                let spacing = self.get_or("space.spacing", 1.0 / side.saturating_sub(1).max(1) as f64)?;
                build_grid(dim, side, spacing)?
            }
        };
        match self.raw("space.metric") {
            None | Some("chart") if g.chart().is_some() => Ok(g),
            None | Some("shortest_path") => Ok(g.with_metric(MetricKind::ShortestPath)?),
            Some("chart") => Err(CliError::Config(
                "`space.metric = chart` needs a graph with coordinates".into(),
            )),
            Some(other) => Err(CliError::Config(format!(
                "invalid value `{other}` for `space.metric`, expected `chart` or `shortest_path`"
            ))),
        }
    }

    /// `center` or a vertex id.
    pub fn vertex(&self, g: &MetricGraph, key: &str) -> Result<VertexId, CliError> {
        match self.raw(key).unwrap_or("center") {
            "center" => g
                .center_vertex()
                .ok_or_else(|| CliError::Config(format!("`{key} = center` needs a graph with coordinates"))),
            v => {
                let id: VertexId = v
                    .parse()
                    .map_err(|_| CliError::Config(format!("invalid vertex `{v}` for `{key}`")))?;
                if id >= g.len() {
                    return Err(CliError::Config(format!(
                        "`{key}` = {id} is not a vertex of the graph"
                    )));
                }
                Ok(id)
            }
        }
    }

    /// The domain given by the complement of a boundary field file, or the
    /// grid interior.
    pub fn domain(&self, g: &MetricGraph, key: &str) -> Result<(VertexSet, Option<ScalarField>), CliError> {
        if let Some(p) = self.path(key) {
            let f = read_field(&std::fs::read_to_string(&p)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            if f.len() != g.len() {
                return Err(CliError::Config(format!(
                    "{} has {} vertices, the graph has {}",
                    p.display(),
                    f.len(),
                    g.len()
                )));
            }
            return Ok((f.domain().complement(), Some(f)));
        }
        let chart = g
            .chart()
            .ok_or_else(|| CliError::Config(format!("graphs without coordinates need `{key}`")))?;
        let full = 2 * chart.dim();
        Ok((
            VertexSet::from_predicate(g.len(), |v| g.neighbors(v).len() == full),
            None,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        std::fs::write(&cfg, "seed = 3\n[space]\nside = 9\n").unwrap();
        let s = Settings::load(Some(&cfg), &[("space.side".into(), "5".into())]).unwrap();
        assert_eq!(s.seed().unwrap(), 3);
        assert_eq!(s.graph().unwrap().len(), 25);
    }

    #[test]
    fn missing_files_are_rejected_at_load() {
        let err = Settings::load(None, &[("space.graph".into(), "/nonexistent/g.txt".into())]).unwrap_err();
        assert!(err.to_string().contains("space.graph"));
    }
}
