//! Plain-text snapshot container.
//!
//! ```text
//! <|V|> <T> <granularity>
//! <t> <|E_t|>
//! <i> <j>        (one line per edge, i < j, sorted)
//! ...
//! ```
//!
//! `t` runs from 1 to `T`. Writing is canonical, so reading and rewriting a
//! file reproduces it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, TnaError};
use crate::graph::{Snapshot, TemporalGraph};

pub fn to_string(g: &TemporalGraph) -> String {
    let mut out = String::new();
    // write! into a String cannot fail
    let _ = writeln!(out, "{} {} {}", g.vertex_count(), g.len(), g.granularity());
    for (t, s) in g.snapshots().iter().enumerate() {
        let _ = writeln!(out, "{} {}", t + 1, s.edge_count());
        for (i, j) in s.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
    }
    out
}

fn malformed(line: usize, message: impl std::fmt::Display) -> TnaError {
    TnaError::Format {
        what: "snapshot file",
        message: format!("line {line}: {message}"),
    }
}

fn parse_fields<const N: usize>(line_no: usize, line: &str) -> Result<[&str; N]> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    fields.try_into().map_err(|f: Vec<&str>| {
        malformed(line_no, format!("expected {N} fields, found {}", f.len()))
    })
}

fn parse_count(line_no: usize, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| malformed(line_no, format!("{field:?} is not a count")))
}

pub fn from_str(text: &str) -> Result<TemporalGraph> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (no, header) = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
    let [v, t, granularity] = parse_fields::<3>(no, header)?;
    let vertex_count = parse_count(no, v)?;
    let t_count = parse_count(no, t)?;

    let mut snapshots = Vec::with_capacity(t_count);
    for expected_t in 1..=t_count {
        let (no, line) = lines
            .next()
            .ok_or_else(|| malformed(no, format!("missing snapshot {expected_t}")))?;
        let [t, e] = parse_fields::<2>(no, line)?;
        if parse_count(no, t)? != expected_t {
            return Err(malformed(no, format!("expected snapshot {expected_t}")));
        }
        let edge_count = parse_count(no, e)?;
        let mut edges = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            let (no, line) = lines
                .next()
                .ok_or_else(|| malformed(no, "truncated edge list"))?;
            let [i, j] = parse_fields::<2>(no, line)?;
            let edge = (parse_count(no, i)?, parse_count(no, j)?);
            if edge.0 >= edge.1 || edge.1 >= vertex_count {
                return Err(malformed(no, format!("invalid edge {} {}", edge.0, edge.1)));
            }
            if edges.last().is_some_and(|last| *last >= edge) {
                return Err(malformed(no, "edges must be sorted and unique"));
            }
            edges.push(edge);
        }
        snapshots.push(Snapshot::from_sorted(vertex_count, edges));
    }
    if let Some((no, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(malformed(no, format!("trailing content {extra:?}")));
    }
    TemporalGraph::new(snapshots, granularity)
}

pub fn write(g: &TemporalGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_string(g))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<TemporalGraph> {
    from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TemporalGraph {
        TemporalGraph::new(
            vec![
                Snapshot::new(4, [(0, 1)]).unwrap(),
                Snapshot::new(4, [(0, 1), (2, 3)]).unwrap(),
                Snapshot::empty(4),
            ],
            "month",
        )
        .unwrap()
    }

    #[test]
    fn layout() {
        assert_eq!(
            to_string(&sample()),
            "4 3 month\n1 1\n0 1\n2 2\n0 1\n2 3\n3 0\n"
        );
    }

    #[test]
    fn round_trip_is_exact() {
        let text = to_string(&sample());
        let back = from_str(&text).unwrap();
        assert_eq!(back, sample());
        assert_eq!(to_string(&back), text);
    }

    #[test]
    fn rejects_malformed() {
        assert!(from_str("").is_err());
        assert!(from_str("3 1 x\n1 1\n1 0\n").is_err());
        assert!(from_str("3 1 x\n1 2\n0 1\n").is_err());
        assert!(from_str("3 1 x\n1 2\n0 2\n0 1\n").is_err());
        assert!(from_str("3 1 x\n2 0\n").is_err());
        assert!(from_str("3 1 x\n1 0\n0 1\n").is_err());
    }
}
