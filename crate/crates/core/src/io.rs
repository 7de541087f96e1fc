//! Text formats for graphs, fields and key=value metadata.
//!
//! Floats are written with `{}`, which is the shortest decimal that parses
//! back to the same `f64`, so every value written here round-trips exactly.
//!
//! Graph files start with `vertices N edges M dim D spacing H`, followed by
//! `v <id> <measure> [<coords>]` and `e <id1> <id2> <length> <conductance>`
//! lines. Graphs without a chart use `dim 0 spacing 0`. Blank lines and
//! lines starting with `#` are ignored everywhere.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::calculus::ScalarField;
use crate::error::{Error, Result};
use crate::global::GlobalGreenResult;
use crate::green::GreenResult;
use crate::space::{Edge, GridChart, MetricGraph, VertexSet};

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn num<T: FromStr>(line: usize, what: &str, tok: Option<&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

fn expect_word(line: usize, tok: Option<&str>, word: &str) -> Result<()> {
    match tok {
        Some(t) if t == word => Ok(()),
        Some(t) => Err(parse_err(line, format!("expected `{word}`, found `{t}`"))),
        None => Err(parse_err(line, format!("expected `{word}`"))),
    }
}

pub fn write_graph(g: &MetricGraph) -> String {
    let (dim, spacing) = g.chart().map_or((0, 0.0), |c| (c.dim(), c.spacing()));
    let mut s = format!(
        "vertices {} edges {} dim {dim} spacing {spacing}\n",
        g.len(),
        g.edges().len()
    );
    for v in 0..g.len() {
        write!(s, "v {v} {}", g.measure(v)).unwrap();
        if let Some(c) = g.chart() {
            for x in &c.coordinates(v)[..dim] {
                write!(s, " {x}").unwrap();
            }
        }
        s.push('\n');
    }
    for e in g.edges() {
        writeln!(s, "e {} {} {} {}", e.a, e.b, e.length, e.conductance).unwrap();
    }
    s
}

pub fn read_graph(text: &str) -> Result<MetricGraph> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty graph file"))?;
    let mut t = header.split_whitespace();
    expect_word(hl, t.next(), "vertices")?;
    let n: usize = num(hl, "vertex count", t.next())?;
    expect_word(hl, t.next(), "edges")?;
    let m: usize = num(hl, "edge count", t.next())?;
    expect_word(hl, t.next(), "dim")?;
    let dim: usize = num(hl, "dimension", t.next())?;
    expect_word(hl, t.next(), "spacing")?;
    let spacing: f64 = num(hl, "spacing", t.next())?;
    if let Some(extra) = t.next() {
        return Err(parse_err(hl, format!("unexpected token `{extra}`")));
    }
    if dim > 3 {
        return Err(parse_err(hl, format!("dimension must be at most 3, got {dim}")));
    }

    let mut measure = vec![f64::NAN; n];
    let mut lattice = vec![[0i64; 3]; n];
    let mut seen = vec![false; n];
    let mut edges = Vec::with_capacity(m);
    let mut last = hl;
    for (ln, l) in lines {
        last = ln;
        let mut t = l.split_whitespace();
        match t.next() {
            Some("v") => {
                let id: usize = num(ln, "vertex id", t.next())?;
                if id >= n {
                    return Err(parse_err(ln, format!("vertex id {id} out of range 0..{n}")));
                }
                if std::mem::replace(&mut seen[id], true) {
                    return Err(parse_err(ln, format!("vertex {id} listed twice")));
                }
                measure[id] = num(ln, "measure", t.next())?;
                for slot in lattice[id].iter_mut().take(dim) {
                    let x: f64 = num(ln, "coordinate", t.next())?;
                    let k = x / spacing;
                    if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
                        return Err(parse_err(ln, format!("coordinate {x} is off the lattice")));
                    }
                    *slot = k.round() as i64;
                }
            }
            Some("e") => {
                let a: usize = num(ln, "endpoint", t.next())?;
                let b: usize = num(ln, "endpoint", t.next())?;
                let length: f64 = num(ln, "length", t.next())?;
                let conductance: f64 = num(ln, "conductance", t.next())?;
                edges.push(Edge {
                    a,
                    b,
                    length,
                    conductance,
                });
            }
            Some(other) => return Err(parse_err(ln, format!("unknown record `{other}`"))),
            None => unreachable!("blank lines are skipped"),
        }
        if let Some(extra) = t.next() {
            return Err(parse_err(ln, format!("unexpected token `{extra}`")));
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(parse_err(last, format!("vertex {v} is missing")));
    }
    if edges.len() != m {
        return Err(parse_err(
            last,
            format!("header declares {m} edges, found {}", edges.len()),
        ));
    }
    let chart = if dim == 0 {
        None
    } else {
        Some(GridChart::new(dim, spacing, lattice)?)
    };
    MetricGraph::new(measure, edges, chart)
}

/// Fields are `field vertices N defined K` followed by `<id> <value>` lines
/// for the defined vertices.
pub fn write_field(u: &ScalarField) -> String {
    let mut s = format!("field vertices {} defined {}\n", u.len(), u.domain().len());
    for v in u.domain().iter() {
        writeln!(s, "{v} {}", u.values()[v]).unwrap();
    }
    s
}

pub fn read_field(text: &str) -> Result<ScalarField> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty field file"))?;
    let mut t = header.split_whitespace();
    expect_word(hl, t.next(), "field")?;
    expect_word(hl, t.next(), "vertices")?;
    let n: usize = num(hl, "vertex count", t.next())?;
    expect_word(hl, t.next(), "defined")?;
    let k: usize = num(hl, "defined count", t.next())?;
    let mut values = vec![0.0; n];
    let mut domain = VertexSet::empty(n);
    let mut last = hl;
    for (ln, l) in lines {
        last = ln;
        let mut t = l.split_whitespace();
        let v: usize = num(ln, "vertex id", t.next())?;
        if v >= n {
            return Err(parse_err(ln, format!("vertex id {v} out of range 0..{n}")));
        }
        if !domain.insert(v) {
            return Err(parse_err(ln, format!("vertex {v} listed twice")));
        }
        values[v] = num(ln, "value", t.next())?;
        if let Some(extra) = t.next() {
            return Err(parse_err(ln, format!("unexpected token `{extra}`")));
        }
    }
    if domain.len() != k {
        return Err(parse_err(
            last,
            format!("header declares {k} values, found {}", domain.len()),
        ));
    }
    ScalarField::on(domain, values)
}

/// Ordered `key=value` pairs. `[section]` headers prefix the keys that
/// follow them with `section.`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        let mut section = String::new();
        for (ln, l) in content_lines(text) {
            if let Some(rest) = l.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(ln, "unterminated section header"))?
                    .trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(parse_err(ln, format!("invalid section name `{name}`")));
                }
                section = format!("{name}.");
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| parse_err(ln, format!("expected key=value, found `{l}`")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(parse_err(ln, "empty key"));
            }
            let full = format!("{section}{key}");
            if let Some((_, _, first)) = kv.entries.iter().find(|(k, _, _)| *k == full) {
                return Err(parse_err(ln, format!("key `{full}` already set on line {first}")));
            }
            kv.entries.push((full, v.trim().to_string(), ln));
        }
        Ok(kv)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string(), 0));
    }

    /// Inserts or overwrites.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        match self.entries.iter_mut().find(|(k, _, _)| k == key) {
            Some(e) => e.1 = value.to_string(),
            None => self.push(key, value),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    /// Source line of a parsed key, 0 for keys set in code.
    pub fn line(&self, key: &str) -> Option<usize> {
        self.entries.iter().find(|(k, _, _)| k == key).map(|e| e.2)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                parse_err(
                    self.line(key).unwrap_or(0),
                    format!("invalid value `{v}` for `{key}`"),
                )
            }),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v, _)| (k.as_str(), v.as_str()))
    }

    /// Flat text, one `key=value` per line, in insertion order.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v, _)| format!("{k}={v}\n"))
            .collect()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), |v| v.to_string())
}

pub fn green_metadata(gr: &GreenResult) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("pole", gr.pole);
    kv.push("p", gr.p);
    kv.push("mode", gr.mode);
    kv.push("lambda", gr.lambda);
    kv.push("pole_value", gr.pole_value);
    kv.push("k", opt(gr.k));
    kv.push("levels", gr.trace.len());
    for (i, t) in gr.trace.iter().enumerate() {
        kv.push(format!("level.{i}.radius"), t.radius);
        kv.push(format!("level.{i}.ball_size"), t.ball_size);
        kv.push(format!("level.{i}.capacity"), t.capacity);
        kv.push(format!("level.{i}.change"), t.change);
    }
    kv
}

pub fn global_green_metadata(gr: &GlobalGreenResult) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("pole", gr.pole);
    kv.push("q", gr.q);
    kv.push("mode", gr.mode);
    kv.push("lambda", gr.lambda);
    kv.push("inner_value", gr.inner_value);
    kv.push("outer_value", gr.outer_value);
    kv.push("stages", gr.trace.len());
    for t in &gr.trace {
        let i = t.stage;
        kv.push(format!("stage.{i}.r_in"), t.r_in);
        kv.push(format!("stage.{i}.r_out"), t.r_out);
        kv.push(format!("stage.{i}.min"), t.min);
        kv.push(format!("stage.{i}.max"), t.max);
        kv.push(format!("stage.{i}.divisor"), t.divisor);
        kv.push(format!("stage.{i}.overlap_change"), t.overlap_change);
    }
    kv
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::build_grid;

    #[test]
    fn grid_round_trip_is_exact() {
        let g = build_grid(2, 5, 0.1).unwrap();
        let text = write_graph(&g);
        let back = read_graph(&text).unwrap();
        assert_eq!(write_graph(&back), text);
        assert_eq!(back.chart().unwrap().dim(), 2);
        assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn chartless_graph_round_trip() {
        let text = "vertices 3 edges 2 dim 0 spacing 0\nv 0 1\nv 1 0.3333333333333333\nv 2 2\ne 0 1 0.7 1.1\ne 1 2 1 3\n";
        let g = read_graph(text).unwrap();
        assert!(g.chart().is_none());
        assert_eq!(write_graph(&g), text);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "vertices 2 edges 1 dim 0 spacing 0\n# comment\nv 0 1\nv 1 x\ne 0 1 1 1\n";
        match read_graph(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        match read_graph("vertices 2 edges 1 dim 0 spacing 0\nv 0 1\ne 0 1 1 1\n") {
            Err(Error::Parse { reason, .. }) => assert!(reason.contains("vertex 1 is missing")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn field_round_trip_keeps_domain() {
        let dom = VertexSet::from_ids(4, [0, 2]);
        let u = ScalarField::on(dom, vec![0.1 + 0.2, 0.0, -1e-300, 0.0]).unwrap();
        let back = read_field(&write_field(&u)).unwrap();
        assert_eq!(back.domain(), u.domain());
        assert_eq!(back.values()[0].to_bits(), u.values()[0].to_bits());
        assert_eq!(back.values()[2].to_bits(), u.values()[2].to_bits());
    }

    #[test]
    fn key_values_sections_and_duplicates() {
        let kv = KeyValues::parse("a = 1\n[solver]\ntol=1e-9\n").unwrap();
        assert_eq!(kv.get("solver.tol"), Some("1e-9"));
        assert_eq!(kv.parsed::<f64>("a").unwrap(), Some(1.0));
        match KeyValues::parse("a=1\n\na=2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
