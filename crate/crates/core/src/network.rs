//! Random directed network of sensing nodes and the gateway that collects
//! their messages.
//!
//! Nodes are indexed `0..n` in memory. The text format and all user-facing
//! messages use 1-based ids.
//!
//! Every edge is placed independently and uniformly over the `n(n-1)`
//! ordered pairs of distinct nodes. Parallel edges are therefore possible
//! and are kept; removing them would bias the per-pair edge statistics.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

/// Directed multigraph with per-edge capacity `C0` and a gateway node.
///
/// Immutable once built; the incoming and outgoing edge lists are indexed at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    node_count: usize,
    edges: Vec<Edge>,
    capacity: f64,
    gateway: usize,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl NetworkGraph {
    /// Build a graph from an explicit edge list, checking every invariant.
    pub fn new(node_count: usize, edges: Vec<Edge>, capacity: f64, gateway: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("a network needs at least one node"));
        }
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::invalid(format!(
                "link capacity must be positive and finite, got {capacity}"
            )));
        }
        if gateway >= node_count {
            return Err(Error::invalid(format!(
                "gateway {} is not a node of a {node_count}-node network",
                gateway + 1
            )));
        }
        let mut incoming = vec![Vec::new(); node_count];
        let mut outgoing = vec![Vec::new(); node_count];
        for (id, edge) in edges.iter().enumerate() {
            if edge.tail >= node_count || edge.head >= node_count {
                return Err(Error::invalid(format!(
                    "edge {} ({} -> {}) references a node outside 1..={node_count}",
                    id + 1,
                    edge.tail + 1,
                    edge.head + 1
                )));
            }
            if edge.tail == edge.head {
                return Err(Error::invalid(format!(
                    "edge {} is a self-loop on node {}",
                    id + 1,
                    edge.tail + 1
                )));
            }
            outgoing[edge.tail].push(id);
            incoming[edge.head].push(id);
        }
        Ok(Self {
            node_count,
            edges,
            capacity,
            gateway,
            incoming,
            outgoing,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    /// Bits per channel use carried by each edge.
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn gateway(&self) -> usize {
        self.gateway
    }

    /// Ids of edges whose head is `v`.
    pub fn incoming(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    /// Ids of edges whose tail is `v`.
    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    /// Shortest directed hop count from every node to the gateway, `None`
    /// where no directed path exists.
    pub fn hops_to_gateway(&self) -> Vec<Option<usize>> {
        let mut hops = vec![None; self.node_count];
        hops[self.gateway] = Some(0);
        let mut queue = VecDeque::from([self.gateway]);
        // Breadth-first search over reversed edges.
        while let Some(v) = queue.pop_front() {
            let next = hops[v].map(|h| h + 1);
            for &e in &self.incoming[v] {
                let tail = self.edges[e].tail;
                if hops[tail].is_none() {
                    hops[tail] = next;
                    queue.push_back(tail);
                }
            }
        }
        hops
    }

    /// First non-gateway node (0-based) with no route to the gateway.
    pub fn first_unreachable(&self) -> Option<usize> {
        self.hops_to_gateway().iter().position(Option::is_none)
    }

    /// Serialize to the line-oriented text format:
    /// a header `n |E| C0 gateway`, then one `tail head` line per edge, with
    /// 1-based node ids.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} {} {} {}",
            self.node_count,
            self.edges.len(),
            self.capacity,
            self.gateway + 1
        )
        .unwrap();
        for edge in &self.edges {
            writeln!(out, "{} {}", edge.tail + 1, edge.head + 1).unwrap();
        }
        out
    }

    pub fn write_text<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, line)| (i + 1, line))
            .filter(|(_, line)| line.as_ref().map_or(true, |l| !l.trim().is_empty()));

        let (line_no, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header line"))?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(line_no, "header must be `n |E| C0 gateway`"));
        }
        let node_count: usize = parse_field(line_no, fields[0], "node count")?;
        let edge_count: usize = parse_field(line_no, fields[1], "edge count")?;
        let capacity: f64 = parse_field(line_no, fields[2], "capacity")?;
        let gateway: usize = parse_field(line_no, fields[3], "gateway")?;
        if gateway == 0 {
            return Err(Error::parse(line_no, "node ids are 1-based"));
        }

        let mut edges = Vec::with_capacity(edge_count);
        for (line_no, line) in lines {
            let line = line?;
            let mut parts = line.split_whitespace();
            let (Some(tail), Some(head), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(line_no, "edge line must be `tail head`"));
            };
            let tail: usize = parse_field(line_no, tail, "tail")?;
            let head: usize = parse_field(line_no, head, "head")?;
            if tail == 0 || head == 0 {
                return Err(Error::parse(line_no, "node ids are 1-based"));
            }
            edges.push(Edge {
                tail: tail - 1,
                head: head - 1,
            });
        }
        if edges.len() != edge_count {
            return Err(Error::parse(
                line_no,
                format!("header announces {edge_count} edges but {} were listed", edges.len()),
            ));
        }
        Self::new(node_count, edges, capacity, gateway - 1)
    }
}

impl std::str::FromStr for NetworkGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::read_text(s.as_bytes())
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, raw: &str, what: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {what} from `{raw}`")))
}

/// Draw a random network with `edge_count` i.i.d. edges, each uniform over
/// the ordered pairs of distinct nodes.
///
/// `gateway` is 0-based. The result is a pure function of the arguments.
pub fn generate_network(
    node_count: usize,
    edge_count: usize,
    capacity: f64,
    gateway: usize,
    seed: u64,
) -> Result<NetworkGraph> {
    if node_count < 2 {
        return Err(Error::invalid(format!(
            "a random network needs at least 2 nodes, got {node_count}"
        )));
    }
    if gateway >= node_count {
        return Err(Error::invalid(format!(
            "gateway {} is not a node of a {node_count}-node network",
            gateway + 1
        )));
    }
    let mut rng = rng_from_seed(seed);
    let edges = (0..edge_count)
        .map(|_| {
            let tail = rng.random_range(0..node_count);
            // Uniform over the n-1 nodes other than `tail`.
            let mut head = rng.random_range(0..node_count - 1);
            if head >= tail {
                head += 1;
            }
            Edge { tail, head }
        })
        .collect();
    NetworkGraph::new(node_count, edges, capacity, gateway)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> NetworkGraph {
        let edges = vec![Edge { tail: 0, head: 1 }, Edge { tail: 1, head: 2 }];
        NetworkGraph::new(3, edges, 1.0, 2).unwrap()
    }

    #[test]
    fn single_edge_in_and_out_sets() {
        let g = NetworkGraph::new(2, vec![Edge { tail: 0, head: 1 }], 1.0, 1).unwrap();
        assert_eq!(g.incoming(1), &[0]);
        assert_eq!(g.outgoing(0), &[0]);
        assert!(g.incoming(0).is_empty());
        assert!(g.outgoing(1).is_empty());
    }

    #[test]
    fn chain_hops_to_gateway() {
        assert_eq!(chain().hops_to_gateway(), vec![Some(2), Some(1), Some(0)]);
    }

    #[test]
    fn isolated_node_is_unreachable() {
        let g = NetworkGraph::new(3, vec![Edge { tail: 0, head: 2 }], 1.0, 2).unwrap();
        assert_eq!(g.hops_to_gateway(), vec![Some(1), None, Some(0)]);
        assert_eq!(g.first_unreachable(), Some(1));
    }

    #[test]
    fn empty_graph_leaves_only_gateway_reachable() {
        let g = generate_network(6, 0, 1.0, 5, 3).unwrap();
        assert_eq!(g.edge_count(), 0);
        for v in 0..6 {
            assert!(g.incoming(v).is_empty() && g.outgoing(v).is_empty());
        }
        let hops = g.hops_to_gateway();
        assert_eq!(hops[5], Some(0));
        assert!(hops[..5].iter().all(Option::is_none));
    }

    #[test]
    fn rejects_self_loops_and_bad_ids() {
        assert!(NetworkGraph::new(2, vec![Edge { tail: 1, head: 1 }], 1.0, 0).is_err());
        assert!(NetworkGraph::new(2, vec![Edge { tail: 0, head: 2 }], 1.0, 0).is_err());
        assert!(NetworkGraph::new(2, vec![], 1.0, 2).is_err());
        assert!(NetworkGraph::new(2, vec![], 0.0, 0).is_err());
    }

    #[test]
    fn generator_rejects_invalid_configuration() {
        assert!(matches!(
            generate_network(1, 0, 1.0, 0, 0),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(matches!(
            generate_network(4, 3, 1.0, 4, 0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn degree_sums_equal_edge_count() {
        for seed in 0..20 {
            let g = generate_network(4, 6, 1.0, 3, seed).unwrap();
            let ins: usize = (0..4).map(|v| g.incoming(v).len()).sum();
            let outs: usize = (0..4).map(|v| g.outgoing(v).len()).sum();
            assert_eq!((ins, outs), (6, 6));
        }
    }

    #[test]
    fn same_seed_same_edges() {
        let a = generate_network(30, 90, 1.0, 29, 11).unwrap();
        let b = generate_network(30, 90, 1.0, 29, 11).unwrap();
        let c = generate_network(30, 90, 1.0, 29, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn text_format_layout() {
        let text = chain().to_text();
        assert_eq!(text, "3 2 1 3\n1 2\n2 3\n");
        let back: NetworkGraph = text.parse().unwrap();
        assert_eq!(back, chain());
    }

    #[test]
    fn text_format_rejects_mismatched_edge_count() {
        assert!(matches!(
            "3 3 1 3\n1 2\n2 3\n".parse::<NetworkGraph>(),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            "3 1 1 0\n1 2\n".parse::<NetworkGraph>(),
            Err(Error::Parse { .. })
        ));
    }
}
