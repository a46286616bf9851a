//! Plain-text instance formats.
//!
//! Graphs use the rudy layout: a header line `n m` followed by `m` lines
//! `i j w` with 1-based node indices. Adjacency files are graphs with unit
//! weights. Tensors start with `d n_1 ... n_d` and continue with the
//! row-major values. Label files hold one 1-based label per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::applications::{DenseTensor, WeightedGraph};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Non-blank lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from `{tok}`")))
}

pub fn parse_graph(text: &str) -> Result<WeightedGraph> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty graph file"))?;
    let mut tok = header.split_whitespace();
    let n: usize = field(tok.next(), hl, "node count")?;
    let m: usize = field(tok.next(), hl, "edge count")?;
    if tok.next().is_some() {
        return Err(parse_err(hl, "header must be `n m`"));
    }
    let mut edges = Vec::with_capacity(m);
    for (ln, line) in lines {
        let mut tok = line.split_whitespace();
        let i: usize = field(tok.next(), ln, "source node")?;
        let j: usize = field(tok.next(), ln, "target node")?;
        let w: f64 = field(tok.next(), ln, "weight")?;
        if tok.next().is_some() {
            return Err(parse_err(ln, "edge line must be `i j w`"));
        }
        if i == 0 || j == 0 || i > n || j > n {
            return Err(parse_err(ln, format!("node index outside 1..={n}")));
        }
        if i == j {
            return Err(parse_err(ln, "self loop"));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(parse_err(ln, format!("weight {w} must be finite and nonnegative")));
        }
        if edges.len() == m {
            return Err(parse_err(ln, format!("more than the {m} edges announced in the header")));
        }
        edges.push((i, j, w));
    }
    if edges.len() != m {
        return Err(parse_err(hl, format!("header announces {m} edges, found {}", edges.len())));
    }
    WeightedGraph::from_edges(n, &edges)
}

pub fn format_graph(g: &WeightedGraph) -> String {
    let mut s = format!("{} {}\n", g.n(), g.edges().len());
    for &(i, j, w) in g.edges() {
        let _ = writeln!(s, "{i} {j} {w}");
    }
    s
}

/// A graph whose weights must all equal 1, as a dense 0/1 matrix.
pub fn parse_adjacency(text: &str) -> Result<DMatrix<f64>> {
    let g = parse_graph(text)?;
    if g.edges().iter().any(|e| e.2 != 1.0) {
        return Err(Error::InvalidArgument("adjacency edges must have weight 1 and appear once".into()));
    }
    Ok(g.weights().clone())
}

pub fn format_adjacency(a: &DMatrix<f64>) -> String {
    let n = a.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if a[(i, j)] != 0.0 {
                edges.push((i + 1, j + 1));
            }
        }
    }
    let mut s = format!("{n} {}\n", edges.len());
    for (i, j) in edges {
        let _ = writeln!(s, "{i} {j} 1");
    }
    s
}

pub fn parse_tensor(text: &str) -> Result<DenseTensor> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty tensor file"))?;
    let mut tok = header.split_whitespace();
    let d: usize = field(tok.next(), hl, "order")?;
    if d == 0 {
        return Err(parse_err(hl, "order must be positive"));
    }
    let mut dims = Vec::with_capacity(d);
    for k in 0..d {
        let n: usize = field(tok.next(), hl, &format!("size of mode {}", k + 1))?;
        if n == 0 {
            return Err(parse_err(hl, format!("mode {} has size 0", k + 1)));
        }
        dims.push(n);
    }
    let len: usize = dims.iter().product();
    let mut values = Vec::with_capacity(len);
    let rest = tok.map(|t| (hl, t));
    let body = lines.flat_map(|(ln, l)| l.split_whitespace().map(move |t| (ln, t)));
    let mut last = hl;
    for (ln, t) in rest.chain(body) {
        let v: f64 = field(Some(t), ln, "value")?;
        if !v.is_finite() {
            return Err(parse_err(ln, format!("non-finite value `{t}`")));
        }
        if values.len() == len {
            return Err(parse_err(ln, format!("more than the {len} values implied by {dims:?}")));
        }
        values.push(v);
        last = ln;
    }
    if values.len() != len {
        return Err(parse_err(last, format!("expected {len} values, found {}", values.len())));
    }
    DenseTensor::new(dims, values)
}

pub fn format_tensor(t: &DenseTensor) -> String {
    let mut s = t.order().to_string();
    for n in t.dims() {
        let _ = write!(s, " {n}");
    }
    s.push('\n');
    let row = *t.dims().last().expect("tensor has at least one mode");
    for chunk in t.data().chunks(row) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(ln, l)| {
            let v: usize = field(Some(l), ln, "label")?;
            if v == 0 {
                return Err(parse_err(ln, "labels are 1-based"));
            }
            Ok(v)
        })
        .collect()
}

pub fn format_labels<T: std::fmt::Display>(labels: &[T]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn read_graph(path: &Path) -> Result<WeightedGraph> {
    with_path(path, parse_graph(&read(path)?))
}

pub fn read_adjacency(path: &Path) -> Result<DMatrix<f64>> {
    with_path(path, parse_adjacency(&read(path)?))
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    with_path(path, parse_tensor(&read(path)?))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    with_path(path, parse_labels(&read(path)?))
}
