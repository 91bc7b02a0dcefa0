//! Line-oriented graph files.
//!
//! ```text
//! # comment
//! n m
//! u v w     (m lines, 0-based ids)
//! ```
//!
//! Topology files use the same layout; a trailing weight column is accepted
//! and ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Edge, Topology, WeightedGraph};
use crate::error::{Error, Result};

struct RawGraph {
    n: usize,
    rows: Vec<(usize, usize, Option<f64>)>,
}

fn parse_raw<R: Read>(reader: R) -> Result<RawGraph> {
    let mut header: Option<(usize, usize)> = None;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let parse_id = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse { line: lineno, message: format!("bad integer {s:?}: {e}") })
        };
        match header {
            None => {
                if fields.len() != 2 {
                    return Err(Error::Parse { line: lineno, message: "expected header `n m`".into() });
                }
                header = Some((parse_id(fields[0])?, parse_id(fields[1])?));
            }
            Some(_) => {
                if fields.len() < 2 || fields.len() > 3 {
                    return Err(Error::Parse { line: lineno, message: "expected `u v w`".into() });
                }
                let w = match fields.get(2) {
                    Some(s) => Some(s.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno,
                        message: format!("bad weight {s:?}: {e}"),
                    })?),
                    None => None,
                };
                rows.push((parse_id(fields[0])?, parse_id(fields[1])?, w));
            }
        }
    }
    let (n, m) = header.ok_or(Error::Parse { line: 0, message: "missing header".into() })?;
    if rows.len() != m {
        return Err(Error::Parse {
            line: 0,
            message: format!("header declares {m} edges, found {}", rows.len()),
        });
    }
    Ok(RawGraph { n, rows })
}

pub fn parse_graph<R: Read>(reader: R, weight_bound: Option<f64>) -> Result<WeightedGraph> {
    let raw = parse_raw(reader)?;
    let mut edges = Vec::with_capacity(raw.rows.len());
    for (i, (u, v, w)) in raw.rows.into_iter().enumerate() {
        let w = w.ok_or_else(|| Error::Parse { line: 0, message: format!("edge {i} has no weight") })?;
        edges.push(Edge::new(u, v, w));
    }
    WeightedGraph::new(raw.n, edges, weight_bound)
}

pub fn parse_topology<R: Read>(reader: R) -> Result<Topology> {
    let raw = parse_raw(reader)?;
    Topology::new(raw.n, raw.rows.into_iter().map(|(u, v, _)| (u, v)).collect())
}

pub fn read_graph(path: &Path, weight_bound: Option<f64>) -> Result<WeightedGraph> {
    parse_graph(File::open(path)?, weight_bound)
}

pub fn read_topology(path: &Path) -> Result<Topology> {
    parse_topology(File::open(path)?)
}

/// Writes weights with 17 significant digits so they parse back bit-exactly.
pub fn write_graph<W: Write>(g: &WeightedGraph, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", g.n(), g.edges().len())?;
    for e in g.edges() {
        writeln!(out, "{} {} {:.16e}", e.u, e.v, e.w)?;
    }
    Ok(())
}
