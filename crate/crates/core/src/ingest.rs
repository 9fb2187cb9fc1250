//! Timestamped edge lists to cumulative snapshot sequences.
//!
//! Rows are `source target ... timestamp` in any column order; comment
//! lines start with `#` (SNAP) or `%` (KONECT). Vertex labels are
//! re-indexed densely over the union of all endpoints, ordered numerically
//! when every label is an integer and lexically otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};
use crate::graph::{canonical, Edge, Snapshot, TemporalGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Comma,
    Whitespace,
    /// Comma if the line contains one, whitespace otherwise.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub source: usize,
    pub target: usize,
    pub timestamp: usize,
    pub delimiter: Delimiter,
}

impl ColumnSchema {
    /// `source target timestamp`.
    pub const SNAP: ColumnSchema = ColumnSchema {
        source: 0,
        target: 1,
        timestamp: 2,
        delimiter: Delimiter::Auto,
    };

    /// KONECT `out.*` layout: `source target weight timestamp`.
    pub const KONECT: ColumnSchema = ColumnSchema {
        source: 0,
        target: 1,
        timestamp: 3,
        delimiter: Delimiter::Whitespace,
    };
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema::SNAP
    }
}

/// How timestamps are bucketed into snapshots. Calendar periods are UTC.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    /// ISO weeks starting Monday 00:00 UTC.
    Week,
    Month,
    /// `n` buckets holding equal numbers of edge events, in time order.
    FixedCount(usize),
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Week => f.write_str("week"),
            Granularity::Month => f.write_str("month"),
            Granularity::FixedCount(n) => write!(f, "fixed:{n}"),
        }
    }
}

impl FromStr for Granularity {
    type Err = TnaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "week" | "weekly" => Ok(Granularity::Week),
            "month" | "monthly" => Ok(Granularity::Month),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|n| n.parse().ok())
                .filter(|n| *n > 0)
                .map(Granularity::FixedCount)
                .ok_or_else(|| {
                    TnaError::Config(format!(
                        "unknown granularity {s:?} (week, month or fixed:<n>)"
                    ))
                }),
        }
    }
}

/// One parsed row, endpoints already re-indexed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeEvent {
    pub source: usize,
    pub target: usize,
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedEdges {
    pub events: Vec<EdgeEvent>,
    /// Original vertex label of each dense index.
    pub labels: Vec<String>,
    pub skipped_self_loops: usize,
}

fn split_line(line: &str, delimiter: Delimiter) -> Vec<&str> {
    let comma = match delimiter {
        Delimiter::Comma => true,
        Delimiter::Whitespace => false,
        Delimiter::Auto => line.contains(','),
    };
    if comma {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn parse_timestamp(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(|v| v.floor() as i64)
}

pub fn parse_edges(reader: impl BufRead, schema: &ColumnSchema) -> Result<ParsedEdges> {
    parse_rows(reader, schema, true)
}

/// Untimed `source target` rows (extra columns ignored) as one snapshot,
/// e.g. a static seed graph for rewiring. Duplicates and reversed pairs
/// collapse; self-loops are dropped.
pub fn parse_static_edges(reader: impl BufRead) -> Result<(Snapshot, Vec<String>)> {
    let schema = ColumnSchema {
        source: 0,
        target: 1,
        timestamp: 0,
        delimiter: Delimiter::Auto,
    };
    let parsed = parse_rows(reader, &schema, false)?;
    let snapshot = Snapshot::new(
        parsed.labels.len(),
        parsed.events.iter().map(|e| (e.source, e.target)),
    )?;
    Ok((snapshot, parsed.labels))
}

fn parse_rows(reader: impl BufRead, schema: &ColumnSchema, timed: bool) -> Result<ParsedEdges> {
    let ts_column = if timed { schema.timestamp } else { 0 };
    let needed = schema.source.max(schema.target).max(ts_column) + 1;
    let mut raw: Vec<(String, String, i64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let fields = split_line(trimmed, schema.delimiter);
        if fields.len() < needed {
            return Err(TnaError::Ingest {
                line: line_no,
                message: format!("expected at least {needed} columns, found {}", fields.len()),
            });
        }
        let ts = if timed {
            parse_timestamp(fields[schema.timestamp]).ok_or_else(|| TnaError::Ingest {
                line: line_no,
                message: format!("unparseable timestamp {:?}", fields[schema.timestamp]),
            })?
        } else {
            0
        };
        let (s, t) = (fields[schema.source], fields[schema.target]);
        if s.is_empty() || t.is_empty() {
            return Err(TnaError::Ingest {
                line: line_no,
                message: "empty vertex label".into(),
            });
        }
        raw.push((s.to_string(), t.to_string(), ts));
    }

    let mut labels: BTreeSet<&str> = BTreeSet::new();
    for (s, t, _) in &raw {
        labels.insert(s);
        labels.insert(t);
    }
    let mut labels: Vec<String> = labels.into_iter().map(str::to_string).collect();
    if labels.iter().all(|l| l.parse::<i128>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i128>().unwrap_or_default());
    }
    let index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let mut events = Vec::with_capacity(raw.len());
    let mut skipped_self_loops = 0;
    for (s, t, ts) in &raw {
        let (source, target) = (index[s.as_str()], index[t.as_str()]);
        if source == target {
            skipped_self_loops += 1;
            continue;
        }
        events.push(EdgeEvent {
            source,
            target,
            timestamp: *ts,
        });
    }
    Ok(ParsedEdges {
        events,
        labels,
        skipped_self_loops,
    })
}

const SECONDS_PER_DAY: i64 = 86_400;

fn period_key(ts: i64, granularity: Granularity) -> i64 {
    match granularity {
        // 1970-01-01 was a Thursday; shifting by three days puts Monday at 0.
        Granularity::Week => (ts.div_euclid(SECONDS_PER_DAY) + 3).div_euclid(7),
        Granularity::Month => {
            let dt = DateTime::from_timestamp(ts, 0).unwrap_or_default();
            dt.year() as i64 * 12 + dt.month0() as i64
        }
        Granularity::FixedCount(_) => unreachable!("fixed-count bucketing is positional"),
    }
}

/// Buckets events into cumulative snapshots over `vertex_count` vertices.
/// Calendar bucketing spans every period from the first non-empty one to
/// the last; a period without events repeats the previous snapshot.
pub fn partition_events(
    events: &[EdgeEvent],
    vertex_count: usize,
    granularity: Granularity,
) -> Result<TemporalGraph> {
    let mut ordered: Vec<&EdgeEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.timestamp);
    let m = ordered.len();

    let buckets: Vec<usize> = match granularity {
        Granularity::FixedCount(0) => {
            return Err(TnaError::Config("fixed:<n> needs n >= 1".into()));
        }
        Granularity::FixedCount(n) => (0..m).map(|k| k * n / m.max(1)).collect(),
        calendar => {
            let first = ordered
                .first()
                .map_or(0, |e| period_key(e.timestamp, calendar));
            ordered
                .iter()
                .map(|e| (period_key(e.timestamp, calendar) - first) as usize)
                .collect()
        }
    };
    let bucket_count = match granularity {
        Granularity::FixedCount(n) => n.min(m),
        _ => buckets.last().map_or(0, |b| b + 1),
    };

    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    let mut snapshots = Vec::with_capacity(bucket_count);
    let mut k = 0;
    for bucket in 0..bucket_count {
        while k < m && buckets[k] == bucket {
            edges.insert(canonical(ordered[k].source, ordered[k].target));
            k += 1;
        }
        snapshots.push(Snapshot::from_sorted(
            vertex_count,
            edges.iter().copied().collect(),
        ));
    }
    TemporalGraph::new(snapshots, granularity.to_string())
}

#[derive(Clone, Debug)]
pub struct IngestReport {
    pub graph: TemporalGraph,
    pub labels: Vec<String>,
    pub skipped_self_loops: usize,
}

/// Reads and buckets an edge list. Edge direction is discarded whether or
/// not `directed_input` is set; the flag only records provenance in logs.
pub fn ingest_edge_list(
    path: impl AsRef<Path>,
    schema: &ColumnSchema,
    granularity: Granularity,
    directed_input: bool,
) -> Result<IngestReport> {
    let file = File::open(path.as_ref())?;
    let parsed = parse_edges(BufReader::new(file), schema)?;
    log::info!(
        "read {} events over {} vertices from {} ({} self-loops dropped, directed input: {directed_input})",
        parsed.events.len(),
        parsed.labels.len(),
        path.as_ref().display(),
        parsed.skipped_self_loops,
    );
    let graph = partition_events(&parsed.events, parsed.labels.len(), granularity)?;
    let non_empty = graph
        .snapshots()
        .iter()
        .filter(|s| s.edge_count() > 0)
        .count();
    if non_empty < 3 {
        return Err(TnaError::contract(format!(
            "only {non_empty} non-empty snapshots; at least 3 are needed"
        )));
    }
    Ok(IngestReport {
        graph,
        labels: parsed.labels,
        skipped_self_loops: parsed.skipped_self_loops,
    })
}

/// SNAP for three-column rows, KONECT for four or more whitespace
/// separated ones, judged on the first data row.
pub fn sniff_schema(reader: impl BufRead) -> Result<ColumnSchema> {
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let konect = !trimmed.contains(',') && trimmed.split_whitespace().count() >= 4;
        return Ok(if konect {
            ColumnSchema::KONECT
        } else {
            ColumnSchema::SNAP
        });
    }
    Err(TnaError::contract("edge list has no data rows"))
}

/// Reads a snapshot file, falling back to ingesting a raw edge list.
pub fn load_graph(path: impl AsRef<Path>, granularity: Granularity) -> Result<TemporalGraph> {
    let path = path.as_ref();
    match crate::snapfile::read(path) {
        Ok(g) => Ok(g),
        Err(TnaError::Format { .. }) => {
            let schema = sniff_schema(BufReader::new(File::open(path)?))?;
            Ok(ingest_edge_list(path, &schema, granularity, true)?.graph)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const JAN_15_2004: i64 = 1_074_124_800;
    const FEB_10_2004: i64 = 1_076_371_200;

    #[test]
    fn consecutive_months() {
        let text = format!("0 1 {JAN_15_2004}\n1 2 {FEB_10_2004}\n");
        let parsed = parse_edges(text.as_bytes(), &ColumnSchema::SNAP).unwrap();
        let g = partition_events(&parsed.events, 3, Granularity::Month).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.snapshot(1).unwrap().edges(), &[(0, 1)]);
        assert_eq!(g.snapshot(2).unwrap().edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn iso_week_boundaries() {
        // 2004-04-18 is a Sunday, 2004-04-19 a Monday.
        let sun = 1_082_246_400;
        let mon = sun + SECONDS_PER_DAY;
        assert_eq!(
            period_key(sun, Granularity::Week) + 1,
            period_key(mon, Granularity::Week)
        );
        assert_eq!(
            period_key(mon, Granularity::Week),
            period_key(mon + 6 * SECONDS_PER_DAY + 86_399, Granularity::Week)
        );
    }

    #[test]
    fn empty_middle_period_repeats_snapshot() {
        let apr = 1_081_000_000; // 2004-04
        let jun = 1_086_200_000; // 2004-06
        let events = [
            EdgeEvent {
                source: 0,
                target: 1,
                timestamp: apr,
            },
            EdgeEvent {
                source: 1,
                target: 2,
                timestamp: jun,
            },
        ];
        let g = partition_events(&events, 3, Granularity::Month).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(
            g.snapshot(2).unwrap().edges(),
            g.snapshot(1).unwrap().edges()
        );
    }

    #[test]
    fn fixed_count_buckets() {
        let events: Vec<EdgeEvent> = (0..6)
            .map(|k| EdgeEvent {
                source: k,
                target: k + 1,
                timestamp: 100 - k as i64,
            })
            .collect();
        let g = partition_events(&events, 7, Granularity::FixedCount(3)).unwrap();
        assert_eq!(g.len(), 3);
        let counts: Vec<usize> = g.snapshots().iter().map(|s| s.edge_count()).collect();
        assert_eq!(counts, vec![2, 4, 6]);
        // earliest timestamps first
        assert!(g.snapshot(1).unwrap().has_edge(5, 6));
    }

    #[test]
    fn labels_reindexed_numerically_and_symmetrised() {
        let text = "# comment\n% konect comment\n10 2 5\n2 10 6\n3 3 7\n";
        let parsed = parse_edges(text.as_bytes(), &ColumnSchema::SNAP).unwrap();
        assert_eq!(parsed.labels, vec!["2", "3", "10"]);
        assert_eq!(parsed.skipped_self_loops, 1);
        let g = partition_events(&parsed.events, 3, Granularity::FixedCount(1)).unwrap();
        assert_eq!(g.snapshot(1).unwrap().edges(), &[(0, 2)]);
    }

    #[test]
    fn comma_rows_and_float_timestamps() {
        let text = "7,8,1,1289241911.72836\n";
        let schema = ColumnSchema {
            timestamp: 3,
            ..ColumnSchema::SNAP
        };
        let parsed = parse_edges(text.as_bytes(), &schema).unwrap();
        assert_eq!(parsed.events[0].timestamp, 1_289_241_911);
    }

    #[test]
    fn bad_row_reports_line_number() {
        let text = "0 1 5\n\n0 2 yesterday\n";
        match parse_edges(text.as_bytes(), &ColumnSchema::SNAP) {
            Err(TnaError::Ingest { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short = "0 1\n";
        assert!(matches!(
            parse_edges(short.as_bytes(), &ColumnSchema::SNAP),
            Err(TnaError::Ingest { line: 1, .. })
        ));
    }

    #[test]
    fn granularity_parsing() {
        assert_eq!("week".parse::<Granularity>().unwrap(), Granularity::Week);
        assert_eq!(
            "fixed:12".parse::<Granularity>().unwrap(),
            Granularity::FixedCount(12)
        );
        assert!("fixed:0".parse::<Granularity>().is_err());
        assert!("daily".parse::<Granularity>().is_err());
    }

    #[test]
    fn sniffs_column_layout() {
        let konect = "% sym unweighted\n1 2 1 1082008561\n";
        assert_eq!(
            sniff_schema(konect.as_bytes()).unwrap(),
            ColumnSchema::KONECT
        );
        assert_eq!(
            sniff_schema("# c\n1 2 99\n".as_bytes()).unwrap(),
            ColumnSchema::SNAP
        );
        assert_eq!(
            sniff_schema("a,b,c,4\n".as_bytes()).unwrap(),
            ColumnSchema::SNAP
        );
        assert!(sniff_schema("# only comments\n".as_bytes()).is_err());
    }

    #[test]
    fn static_edges_reindex_and_collapse() {
        let text = "# cora\n10 20\n20 10\n20 30 extra\n30 30\n";
        let (s, labels) = parse_static_edges(text.as_bytes()).unwrap();
        assert_eq!(labels, vec!["10", "20", "30"]);
        assert_eq!(s.edges(), &[(0, 1), (1, 2)]);
        assert!(parse_static_edges("1\n".as_bytes()).is_err());
    }
}
