//! Text format for pairwise MRFs consumed by the `gibbs` subcommand:
//!
//! ```text
//! mrf <K>
//! vertex <id> <p_0> ... <p_{K-1}>
//! edge <u> <v> <psi_00> <psi_01> ... (K*K values, row-major by source)
//! ```
//!
//! Vertex ids must be dense from zero; `#` starts a comment.

use std::path::Path;

use grapple::algorithms::gibbs::{GibbsEdgeData, GibbsVertexData};
use grapple::{GibbsGraph, VertexId};

use crate::common::{CliError, CliResult};

pub fn read_mrf(path: &Path, seed: u64) -> CliResult<GibbsGraph> {
    let text = std::fs::read_to_string(path).map_err(CliError::Io)?;
    let mut labels: Option<usize> = None;
    let mut potentials: Vec<Vec<f64>> = Vec::new();
    let mut edges: Vec<(u32, u32, Vec<f64>)> = Vec::new();

    let bad = |lineno: usize, msg: &str| {
        CliError::config(format!("{}:{}: {msg}", path.display(), lineno + 1))
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "mrf" => {
                let k = tokens
                    .get(1)
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| bad(lineno, "expected `mrf K`"))?;
                if k < 2 {
                    return Err(bad(lineno, "need at least two labels"));
                }
                labels = Some(k);
            }
            "vertex" => {
                let k = labels.ok_or_else(|| bad(lineno, "`mrf K` must come first"))?;
                let id: usize = tokens
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(lineno, "bad vertex id"))?;
                if id != potentials.len() {
                    return Err(bad(lineno, "vertex ids must be dense from zero"));
                }
                let pot: Vec<f64> = tokens[2..]
                    .iter()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(lineno, "bad potential value"))?;
                if pot.len() != k {
                    return Err(bad(lineno, "potential length must equal K"));
                }
                potentials.push(pot);
            }
            "edge" => {
                let k = labels.ok_or_else(|| bad(lineno, "`mrf K` must come first"))?;
                let u: u32 = tokens
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(lineno, "bad edge source"))?;
                let v: u32 = tokens
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(lineno, "bad edge target"))?;
                let coupling: Vec<f64> = tokens[3..]
                    .iter()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(lineno, "bad coupling value"))?;
                if coupling.len() != k * k {
                    return Err(bad(lineno, "coupling must have K*K values"));
                }
                edges.push((u, v, coupling));
            }
            other => return Err(bad(lineno, &format!("unknown record `{other}`"))),
        }
    }

    let _k = labels.ok_or_else(|| CliError::config("missing `mrf K` header"))?;
    let mut g = GibbsGraph::new();
    for (i, pot) in potentials.into_iter().enumerate() {
        g.add_vertex(GibbsVertexData::new(pot, seed, VertexId(i as u32)))
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    for (u, v, coupling) in edges {
        g.add_edge(VertexId(u), VertexId(v), GibbsEdgeData { coupling })
            .map_err(|e| CliError::config(format!("edge {u}->{v}: {e}")))?;
    }
    g.freeze();
    Ok(g)
}
