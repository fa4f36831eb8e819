//! Road network storage and the plain-text graph format.
//!
//! ```text
//! # comment
//! node <id> <lat> <lon>
//! edge <id> <from> <to> <length_m> <speed_mps> <oneway 0|1>
//! ```
//!
//! A two-way road (`oneway 0`) becomes two directed arcs that share the edge
//! id, so a traffic factor for that id applies in both directions.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine, LatLon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub pos: LatLon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub base_speed_mps: f64,
    pub oneway: bool,
}

/// One traversable direction of an [`Edge`], in dense node indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub edge: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate node id {id}")]
    DuplicateNode { line: usize, id: NodeId },
    #[error("line {line}: duplicate edge id {id}")]
    DuplicateEdge { line: usize, id: EdgeId },
    #[error("line {line}: edge {edge} references missing node {node}")]
    DanglingEndpoint { line: usize, edge: EdgeId, node: NodeId },
    #[error("line {line}: edge {edge} has non-positive {field}")]
    NonPositive {
        line: usize,
        edge: EdgeId,
        field: &'static str,
    },
    #[error("line {line}: node {id} has out-of-range coordinates")]
    BadCoordinate { line: usize, id: NodeId },
}

/// Validated, immutable road graph with a compressed adjacency index.
///
/// Nodes are stored sorted by id, so dense index order equals id order and
/// index-based tie breaks are id-based tie breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: BTreeMap<NodeId, usize>,
    edge_index: BTreeMap<EdgeId, usize>,
    arcs: Vec<Arc>,
    offsets: Vec<usize>,
    max_speed: f64,
    detour_floor: f64,
}

impl RoadGraph {
    /// Validates nodes and edges and builds the adjacency index.
    ///
    /// Line numbers in errors are 1-based positions in the combined
    /// node-then-edge sequence when the graph was not parsed from text.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let node_lines: Vec<usize> = (1..=nodes.len()).collect();
        let edge_lines: Vec<usize> = (nodes.len() + 1..=nodes.len() + edges.len()).collect();
        Self::build(nodes, &node_lines, edges, &edge_lines)
    }

    fn build(
        mut nodes: Vec<Node>,
        node_lines: &[usize],
        edges: Vec<Edge>,
        edge_lines: &[usize],
    ) -> Result<Self, GraphError> {
        let mut seen = BTreeMap::new();
        for (n, &line) in nodes.iter().zip(node_lines) {
            if !n.pos.is_valid() {
                return Err(GraphError::BadCoordinate { line, id: n.id });
            }
            if seen.insert(n.id, ()).is_some() {
                return Err(GraphError::DuplicateNode { line, id: n.id });
            }
        }
        nodes.sort_by_key(|n| n.id);
        let node_index: BTreeMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();

        let mut edge_index = BTreeMap::new();
        let mut arcs = Vec::with_capacity(edges.len() * 2);
        let mut max_speed: f64 = 0.0;
        let mut detour_floor: f64 = 1.0;
        for (ei, (e, &line)) in edges.iter().zip(edge_lines).enumerate() {
            if edge_index.insert(e.id, ei).is_some() {
                return Err(GraphError::DuplicateEdge { line, id: e.id });
            }
            let from = *node_index.get(&e.from).ok_or(GraphError::DanglingEndpoint {
                line,
                edge: e.id,
                node: e.from,
            })?;
            let to = *node_index.get(&e.to).ok_or(GraphError::DanglingEndpoint {
                line,
                edge: e.id,
                node: e.to,
            })?;
            if !(e.length_m > 0.0 && e.length_m.is_finite()) {
                return Err(GraphError::NonPositive {
                    line,
                    edge: e.id,
                    field: "length",
                });
            }
            if !(e.base_speed_mps > 0.0 && e.base_speed_mps.is_finite()) {
                return Err(GraphError::NonPositive {
                    line,
                    edge: e.id,
                    field: "speed",
                });
            }
            max_speed = max_speed.max(e.base_speed_mps);
            let crow = haversine(nodes[from].pos, nodes[to].pos);
            if crow > 0.0 {
                detour_floor = detour_floor.min(e.length_m / crow);
            }
            arcs.push(Arc { edge: ei, from, to });
            if !e.oneway {
                arcs.push(Arc {
                    edge: ei,
                    from: to,
                    to: from,
                });
            }
        }
        // group by tail node; within a tail, by head id then edge id for stable iteration
        arcs.sort_by(|a, b| {
            (a.from, a.to, edges[a.edge].id).cmp(&(b.from, b.to, edges[b.edge].id))
        });
        let mut offsets = alloc::vec![0usize; nodes.len() + 1];
        for a in &arcs {
            offsets[a.from + 1] += 1;
        }
        for i in 0..nodes.len() {
            offsets[i + 1] += offsets[i];
        }

        Ok(Self {
            nodes,
            edges,
            node_index,
            edge_index,
            arcs,
            offsets,
            max_speed,
            detour_floor,
        })
    }

    /// Parses the plain-text graph format.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut nodes = Vec::new();
        let mut node_lines = Vec::new();
        let mut edges = Vec::new();
        let mut edge_lines = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match fields[0] {
                "node" => {
                    if fields.len() != 4 {
                        return Err(syntax(line, "expected `node <id> <lat> <lon>`"));
                    }
                    let id = NodeId(parse_field(line, fields[1], "node id")?);
                    let lat = parse_field(line, fields[2], "lat")?;
                    let lon = parse_field(line, fields[3], "lon")?;
                    nodes.push(Node {
                        id,
                        pos: LatLon::new(lat, lon),
                    });
                    node_lines.push(line);
                }
                "edge" => {
                    if fields.len() != 7 {
                        return Err(syntax(
                            line,
                            "expected `edge <id> <from> <to> <length_m> <speed_mps> <oneway>`",
                        ));
                    }
                    let oneway = match fields[6] {
                        "0" => false,
                        "1" => true,
                        other => {
                            return Err(syntax(
                                line,
                                &alloc::format!("oneway must be 0 or 1, got `{other}`"),
                            ))
                        }
                    };
                    edges.push(Edge {
                        id: EdgeId(parse_field(line, fields[1], "edge id")?),
                        from: NodeId(parse_field(line, fields[2], "from")?),
                        to: NodeId(parse_field(line, fields[3], "to")?),
                        length_m: parse_field(line, fields[4], "length")?,
                        base_speed_mps: parse_field(line, fields[5], "speed")?,
                        oneway,
                    });
                    edge_lines.push(line);
                }
                other => {
                    return Err(syntax(line, &alloc::format!("unknown record `{other}`")));
                }
            }
        }
        Self::build(nodes, &node_lines, edges, &edge_lines)
    }

    /// Serializes back to the text format; `parse(to_text(g)) == g`.
    pub fn to_text(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(out, "node {} {} {}", n.id, n.pos.lat, n.pos.lon);
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "edge {} {} {} {} {} {}",
                e.id,
                e.from,
                e.to,
                e.length_m,
                e.base_speed_mps,
                u8::from(e.oneway)
            );
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of road records (a two-way road counts once).
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn edge_idx(&self, id: EdgeId) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    pub fn edge_by_id(&self, id: EdgeId) -> Option<&Edge> {
        self.edge_idx(id).map(|i| &self.edges[i])
    }

    pub fn position(&self, id: NodeId) -> Option<LatLon> {
        self.node_idx(id).map(|i| self.nodes[i].pos)
    }

    /// Outgoing arcs of the node at dense index `idx`, ordered by head id.
    pub fn out_arcs(&self, idx: usize) -> &[Arc] {
        &self.arcs[self.offsets[idx]..self.offsets[idx + 1]]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// All arcs running from `from` to `to`.
    pub fn arc_between(&self, from: usize, to: usize) -> impl Iterator<Item = &Arc> {
        self.out_arcs(from).iter().filter(move |a| a.to == to)
    }

    /// Largest free-flow speed on any edge, in m/s. Zero for an edgeless graph.
    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    /// Smallest ratio of edge length to the great-circle distance between its
    /// endpoints, capped at 1. Scales the A* heuristic so it stays admissible
    /// even when a stored length is shorter than the straight line.
    pub fn detour_floor(&self) -> f64 {
        self.detour_floor
    }

    /// Number of weakly connected components.
    pub fn component_count(&self) -> usize {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for a in &self.arcs {
            let (ra, rb) = (find(&mut parent, a.from), find(&mut parent, a.to));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }
}

fn syntax(line: usize, message: &str) -> GraphError {
    GraphError::Syntax {
        line,
        message: message.to_string(),
    }
}

fn parse_field<T: core::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T, GraphError> {
    s.parse()
        .map_err(|_| syntax(line, &alloc::format!("invalid {what} `{s}`")))
}
