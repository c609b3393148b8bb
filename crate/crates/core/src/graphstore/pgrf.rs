//! PGRF: a line-oriented text format for node-classification datasets.
//!
//! ```text
//! pgrf 1
//! n m d c
//! u v            (m lines, 0-indexed, each undirected pair once)
//! x_1 ... x_d    (n lines)
//! label          (n lines, -1 = unlabeled)
//! t|v|s|-        (n lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, Graph, Split};
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(parse_err(self.last + 1, format!("unexpected end of file, expected {what}"))),
        }
    }
}

fn parse_usizes(line: usize, text: &str, count: usize, what: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != count {
        return Err(parse_err(line, format!("expected {count} fields for {what}, found {}", parts.len())));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| parse_err(line, format!("invalid integer `{p}` in {what}")))
        })
        .collect()
}

pub fn parse_dataset_str(text: &str) -> Result<Dataset> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, magic) = lines.next("header")?;
    if magic.trim() != "pgrf 1" {
        return Err(parse_err(ln, format!("bad magic `{}`, expected `pgrf 1`", magic.trim())));
    }
    let (ln, dims) = lines.next("sizes line")?;
    let sizes = parse_usizes(ln, dims, 4, "sizes `n m d c`")?;
    let (n, m, d, c) = (sizes[0], sizes[1], sizes[2], sizes[3]);

    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = lines.next("edge line")?;
        let uv = parse_usizes(ln, l, 2, "edge")?;
        if uv[0] >= n || uv[1] >= n {
            return Err(parse_err(ln, format!("edge ({}, {}) out of range for n = {n}", uv[0], uv[1])));
        }
        if uv[0] == uv[1] {
            return Err(parse_err(ln, format!("self-loop ({}, {})", uv[0], uv[1])));
        }
        edges.push((uv[0], uv[1]));
    }
    let graph = Graph::from_edges(n, &edges)?;

    let mut feats = Vec::with_capacity(n * d);
    for _ in 0..n {
        let (ln, l) = lines.next("feature line")?;
        let before = feats.len();
        for tok in l.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(ln, format!("invalid real `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(ln, format!("non-finite feature `{tok}`")));
            }
            feats.push(v);
        }
        if feats.len() - before != d {
            return Err(parse_err(ln, format!("expected {d} features, found {}", feats.len() - before)));
        }
    }
    let features = Matrix::from_vec(n, d, feats)?;

    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.next("label line")?;
        let y: i64 = l
            .trim()
            .parse()
            .map_err(|_| parse_err(ln, format!("invalid label `{}`", l.trim())))?;
        if y < -1 || y >= c as i64 {
            return Err(parse_err(ln, format!("label {y} outside [-1, {c})")));
        }
        labels.push(y);
    }

    let mut splits = Vec::with_capacity(n);
    for i in 0..n {
        let (ln, l) = lines.next("split line")?;
        let s = Split::from_code(l.trim())
            .ok_or_else(|| parse_err(ln, format!("invalid split mark `{}`", l.trim())))?;
        if s != Split::None && labels[i] < 0 {
            return Err(parse_err(ln, format!("node {i} is split-marked but unlabeled")));
        }
        splits.push(s);
    }

    while let Ok((ln, l)) = lines.next("") {
        if !l.trim().is_empty() {
            return Err(parse_err(ln, "trailing content after split section"));
        }
    }

    Dataset::new(graph, features, labels, splits, c)
}

pub fn write_dataset_string(data: &Dataset) -> Result<String> {
    data.validate()?;
    let edges = data.graph.edges();
    let mut s = String::new();
    writeln!(s, "pgrf 1").unwrap();
    writeln!(s, "{} {} {} {}", data.n(), edges.len(), data.feature_dim(), data.num_classes).unwrap();
    for (u, v) in edges {
        writeln!(s, "{u} {v}").unwrap();
    }
    for i in 0..data.n() {
        let row: Vec<String> = data.features.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    for y in &data.labels {
        writeln!(s, "{y}").unwrap();
    }
    for sp in &data.splits {
        writeln!(s, "{}", sp.code()).unwrap();
    }
    Ok(s)
}

pub fn parse_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset_str(&text)
}

pub fn write_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_dataset_string(data)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "pgrf 1\n3 2 2 2\n0 1\n2 1\n0.5 1\n-2 3.25\n0 0\n0\n1\n-1\nt\nv\n-\n";

    #[test]
    fn parses_small_file() {
        let d = parse_dataset_str(SMALL).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.graph.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(d.features.row(1), &[-2.0, 3.25]);
        assert_eq!(d.labels, vec![0, 1, -1]);
        assert_eq!(d.splits, vec![Split::Train, Split::Valid, Split::None]);
        let again = parse_dataset_str(&write_dataset_string(&d).unwrap()).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn out_of_range_edge_names_line() {
        let text = SMALL.replace("2 1\n", "5 2\n");
        match parse_dataset_str(&text) {
            Err(Error::Parse { line: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_edge_line_is_rejected() {
        let text = "pgrf 1\n2 2 1 2\n0 1\n0.5\n1.5\n0\n1\nt\nt\n";
        assert!(matches!(parse_dataset_str(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_magic_and_labels() {
        assert!(matches!(
            parse_dataset_str(&SMALL.replace("pgrf 1", "pgrf 2")),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = SMALL.replace("\n1\n-1\n", "\n7\n-1\n");
        assert!(matches!(parse_dataset_str(&text), Err(Error::Parse { line: 9, .. })));
        let text = SMALL.replace("t\nv\n-\n", "t\nv\ns\n");
        assert!(matches!(parse_dataset_str(&text), Err(Error::Parse { line: 13, .. })));
    }
}
