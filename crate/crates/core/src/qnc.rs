//! One-step quantized network coding.
//!
//! The round has three packet slots:
//!
//! 1. every node broadcasts `Q(X_v)` on all of its outgoing edges, so edge
//!    `e` carries `Y_e = Q(X_tail(e)) = X_tail(e) + N_e`;
//! 2. node `v` mixes what it heard with its own (unquantized) message,
//!    `P_v = sum_{e in In(v)} beta_{v,e} Y_e + alpha_v X_v`, with every
//!    coefficient drawn uniformly from `{-kappa, +kappa}`;
//! 3. a random subset of nodes forwards `Q(P_v)` to the gateway.
//!
//! Because every step is linear, the packets received at the gateway obey
//! `z = Psi X + n_eff` for a measurement matrix `Psi` and an effective noise
//! vector `n_eff` that [`assemble_measurement`] builds explicitly from the
//! coefficients and the recorded quantization noise.
//!
//! For analysis there is also an *idealized* matrix with i.i.d. entries
//! matching the moments `E[psi] = 0`, `E[psi^2] = 1`, `E[psi^4] = kappa^2`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkGraph;
use crate::quantize::QuantizerSpec;
use crate::rng::rng_from_seed;

/// `kappa = sqrt(2 n^2 / (n + |E|))`.
pub fn kappa_of(node_count: usize, edge_count: usize) -> f64 {
    let n = node_count as f64;
    (2.0 * n * n / (n + edge_count as f64)).sqrt()
}

/// Local mixing coefficients. `beta` is indexed by edge id: each edge has
/// exactly one head, so `beta[e]` is the coefficient node `head(e)` applies
/// to the packet arriving on `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingCoefficients {
    pub kappa: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl CodingCoefficients {
    /// Build from explicit values, checking that every magnitude is `kappa`.
    pub fn new(kappa: f64, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
        }
        if let Some(bad) = alpha.iter().chain(&beta).find(|c| c.abs() != kappa) {
            return Err(Error::invalid(format!(
                "coefficient {bad} is not in {{-{kappa}, +{kappa}}}"
            )));
        }
        Ok(Self { kappa, alpha, beta })
    }
}

/// Draw `alpha_v` for every node, then `beta` for every edge, each an
/// independent fair sign times `kappa`.
pub fn draw_coefficients(graph: &NetworkGraph, kappa: f64, seed: u64) -> CodingCoefficients {
    let mut rng = rng_from_seed(seed);
    let mut sign = || if rng.random::<bool>() { kappa } else { -kappa };
    let alpha = (0..graph.node_count()).map(|_| sign()).collect();
    let beta = (0..graph.edge_count()).map(|_| sign()).collect();
    CodingCoefficients { kappa, alpha, beta }
}

/// Everything that crossed a link during one encoding round.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRound {
    /// Broadcast packet on each edge, `Q(X_tail(e))`.
    pub broadcast: Vec<f64>,
    /// Its quantization noise `Q(X_tail(e)) - X_tail(e)`.
    pub broadcast_noise: Vec<f64>,
    /// Mixed value `P_v` at each node.
    pub mixed: Vec<f64>,
    /// Packet each node would forward, `Q(P_v)`.
    pub forwarded: Vec<f64>,
    /// `Q(P_v) - P_v`.
    pub forward_noise: Vec<f64>,
    /// `P_v` fell outside the quantizer range and was clamped.
    pub clamped: Vec<bool>,
    /// Messages that had to be clamped before broadcast.
    pub message_clamps: usize,
}

impl EncodedRound {
    pub fn clamp_count(&self) -> usize {
        self.message_clamps + self.clamped.iter().filter(|c| **c).count()
    }
}

/// Run the broadcast and mixing slots. The same quantizer is used for the
/// broadcast messages and for the mixed packets.
pub fn encode_round(
    graph: &NetworkGraph,
    messages: &[f64],
    coeffs: &CodingCoefficients,
    quantizer: &QuantizerSpec,
) -> Result<EncodedRound> {
    let n = graph.node_count();
    if messages.len() != n {
        return Err(Error::invalid(format!(
            "{} messages for a {n}-node network",
            messages.len()
        )));
    }
    if coeffs.alpha.len() != n || coeffs.beta.len() != graph.edge_count() {
        return Err(Error::invalid("coefficients were drawn for a different network"));
    }

    let quantized: Vec<_> = messages.iter().map(|&x| quantizer.quantize(x)).collect();
    let message_clamps = quantized.iter().filter(|q| q.clamped).count();
    let broadcast: Vec<f64> = graph.edges().iter().map(|e| quantized[e.tail].value).collect();
    let broadcast_noise = graph
        .edges()
        .iter()
        .zip(&broadcast)
        .map(|(e, y)| y - messages[e.tail])
        .collect();

    let mixed: Vec<f64> = (0..n)
        .map(|v| {
            let heard: f64 = graph.incoming(v).iter().map(|&e| coeffs.beta[e] * broadcast[e]).sum();
            heard + coeffs.alpha[v] * messages[v]
        })
        .collect();
    let outgoing: Vec<_> = mixed.iter().map(|&p| quantizer.quantize(p)).collect();
    let forwarded: Vec<f64> = outgoing.iter().map(|q| q.value).collect();
    let forward_noise = forwarded.iter().zip(&mixed).map(|(q, p)| q - p).collect();

    Ok(EncodedRound {
        broadcast,
        broadcast_noise,
        mixed,
        forwarded,
        forward_noise,
        clamped: outgoing.iter().map(|q| q.clamped).collect(),
        message_clamps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Forwarding {
    /// Each node forwards independently with probability `p`.
    Bernoulli { p: f64 },
    /// A uniformly random set of exactly `m` nodes forwards.
    Exact { m: usize },
}

impl Default for Forwarding {
    fn default() -> Self {
        Forwarding::Bernoulli { p: 1.0 }
    }
}

/// Forwarding nodes in increasing id order.
pub fn select_forwarders(node_count: usize, mode: Forwarding, seed: u64) -> Result<Vec<usize>> {
    let mut rng = rng_from_seed(seed);
    match mode {
        Forwarding::Bernoulli { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("forwarding probability {p} is not in [0, 1]")));
            }
            Ok((0..node_count).filter(|_| rng.random_bool(p)).collect())
        }
        Forwarding::Exact { m } => {
            if m > node_count {
                return Err(Error::invalid(format!(
                    "cannot forward {m} packets from {node_count} nodes"
                )));
            }
            let mut chosen = index::sample(&mut rng, node_count, m).into_vec();
            chosen.sort_unstable();
            Ok(chosen)
        }
    }
}

/// Linear system seen by the decoder: `z = psi * x + n_eff`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSystem {
    pub psi: DMatrix<f64>,
    pub n_eff: Vec<f64>,
    pub z: Vec<f64>,
    /// Node (0-based) whose packet produced each row; `None` for synthetic rows.
    pub row_source: Vec<Option<usize>>,
    /// The row's packet was clamped before quantization.
    pub clamped: Vec<bool>,
}

impl MeasurementSystem {
    pub fn rows(&self) -> usize {
        self.psi.nrows()
    }

    pub fn cols(&self) -> usize {
        self.psi.ncols()
    }

    /// `max_i |z_i - (psi x + n_eff)_i|`.
    pub fn consistency_defect(&self, x: &[f64]) -> f64 {
        let predicted = &self.psi * DVector::from_column_slice(x);
        predicted
            .iter()
            .zip(&self.n_eff)
            .zip(&self.z)
            .map(|((p, n), z)| (z - (p + n)).abs())
            .fold(0.0, f64::max)
    }

    /// CSV export: `# n=` and `# m=` header lines, then
    /// `row,source,z,n_eff,psi_1..psi_n` with 1-based row and source ids
    /// (empty source for synthetic rows). Values use the shortest exact
    /// decimal form, so the file round-trips bit for bit.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# n={}", self.cols())?;
        writeln!(writer, "# m={}", self.rows())?;
        let mut header = String::from("row,source,z,n_eff");
        for j in 1..=self.cols() {
            header.push_str(&format!(",psi_{j}"));
        }
        writeln!(writer, "{header}")?;
        for i in 0..self.rows() {
            let source = self.row_source[i].map(|v| (v + 1).to_string()).unwrap_or_default();
            let mut line = format!("{},{},{},{}", i + 1, source, self.z[i], self.n_eff[i]);
            for j in 0..self.cols() {
                line.push_str(&format!(",{}", self.psi[(i, j)]));
            }
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut n = None;
        let mut m = None;
        let mut header_seen = false;
        let mut psi_values = Vec::new();
        let mut z = Vec::new();
        let mut n_eff = Vec::new();
        let mut row_source = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.trim().split_once('=') {
                    let parsed = value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| Error::parse(line_no, format!("bad `{}` header", key.trim())));
                    match key.trim() {
                        "n" => n = Some(parsed?),
                        "m" => m = Some(parsed?),
                        _ => {}
                    }
                }
                continue;
            }
            let cols = n.ok_or_else(|| Error::parse(line_no, "missing `# n=` header"))?;
            let fields: Vec<&str> = line.split(',').collect();
            if !header_seen {
                if fields.len() != cols + 4 || fields[..4] != ["row", "source", "z", "n_eff"] {
                    return Err(Error::parse(line_no, "unexpected column header"));
                }
                header_seen = true;
                continue;
            }
            if fields.len() != cols + 4 {
                return Err(Error::parse(line_no, format!("expected {} fields", cols + 4)));
            }
            let num = |raw: &str| -> Result<f64> {
                raw.parse()
                    .map_err(|_| Error::parse(line_no, format!("cannot parse number `{raw}`")))
            };
            row_source.push(if fields[1].is_empty() {
                None
            } else {
                let v: usize = fields[1]
                    .parse()
                    .map_err(|_| Error::parse(line_no, "bad source node"))?;
                if v == 0 || v > cols {
                    return Err(Error::parse(line_no, "source node out of range"));
                }
                Some(v - 1)
            });
            z.push(num(fields[2])?);
            n_eff.push(num(fields[3])?);
            for raw in &fields[4..] {
                psi_values.push(num(raw)?);
            }
        }
        let cols = n.ok_or_else(|| Error::parse(0, "missing `# n=` header"))?;
        let rows = z.len();
        if let Some(m) = m {
            if m != rows {
                return Err(Error::parse(0, format!("header announces {m} rows, found {rows}")));
            }
        }
        Ok(Self {
            psi: DMatrix::from_row_slice(rows, cols, &psi_values),
            n_eff,
            z,
            row_source,
            clamped: vec![false; rows],
        })
    }
}

/// Build the gateway's measurement system from one encoded round.
///
/// Row `i` belongs to forwarder `v'`: column `v'` holds `alpha_{v'}`, column
/// `v` holds the sum of `beta_{v',e}` over (possibly parallel) edges
/// `e: v -> v'`, and `n_eff[i] = N_out(v') + sum_{e in In(v')} beta_{v',e} N_e`.
/// `z[i]` is copied from the simulated packet, not recomputed.
pub fn assemble_measurement(
    graph: &NetworkGraph,
    coeffs: &CodingCoefficients,
    forwarders: &[usize],
    round: &EncodedRound,
) -> MeasurementSystem {
    let n = graph.node_count();
    let m = forwarders.len();
    let mut psi = DMatrix::zeros(m, n);
    let mut n_eff = Vec::with_capacity(m);
    for (i, &v) in forwarders.iter().enumerate() {
        psi[(i, v)] = coeffs.alpha[v];
        let mut noise = round.forward_noise[v];
        for &e in graph.incoming(v) {
            psi[(i, graph.edge(e).tail)] += coeffs.beta[e];
            noise += coeffs.beta[e] * round.broadcast_noise[e];
        }
        n_eff.push(noise);
    }
    MeasurementSystem {
        psi,
        n_eff,
        z: forwarders.iter().map(|&v| round.forwarded[v]).collect(),
        row_source: forwarders.iter().map(|&v| Some(v)).collect(),
        clamped: forwarders.iter().map(|&v| round.clamped[v]).collect(),
    }
}

/// Provable bound on a row's effective noise:
/// `delta_q * (1 + sum_{e in In(v)} |beta_{v,e}|)`. It holds whenever the
/// row's packet was not clamped.
pub fn effective_noise_bound(graph: &NetworkGraph, coeffs: &CodingCoefficients, v: usize, step: f64) -> f64 {
    let beta_mass: f64 = graph.incoming(v).iter().map(|&e| coeffs.beta[e].abs()).sum();
    step * (1.0 + beta_mass)
}

/// `m x n` matrix of i.i.d. entries: `0` with probability `1 - 1/kappa^2`,
/// `+kappa` or `-kappa` each with probability `1/(2 kappa^2)`.
pub fn idealized_matrix(rows: usize, cols: usize, kappa: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!(
            "idealized entries need kappa >= 1, got {kappa}"
        )));
    }
    let density = 1.0 / (kappa * kappa);
    let mut rng = rng_from_seed(seed);
    // Row-major fill so the stream order does not depend on storage layout.
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let draw: f64 = rng.random();
        let sign: bool = rng.random();
        values.push(match (draw < density, sign) {
            (false, _) => 0.0,
            (true, true) => kappa,
            (true, false) => -kappa,
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationEntry {
    pub node: usize,
    /// `sum_{e in In(v)} |beta_{v,e}| + |alpha_v|`.
    pub coefficient_mass: f64,
    pub compliant: bool,
}

/// Check the no-overflow normalization `sum |beta| + |alpha| <= 1` at every
/// node. Diagnostic only; coefficients are never rescaled.
pub fn check_normalization(graph: &NetworkGraph, coeffs: &CodingCoefficients) -> Vec<NormalizationEntry> {
    (0..graph.node_count())
        .map(|v| {
            let mass = graph.incoming(v).iter().map(|&e| coeffs.beta[e].abs()).sum::<f64>() + coeffs.alpha[v].abs();
            NormalizationEntry {
                node: v,
                coefficient_mass: mass,
                compliant: mass <= 1.0,
            }
        })
        .collect()
}

pub fn normalization_violations(graph: &NetworkGraph, coeffs: &CodingCoefficients) -> usize {
    check_normalization(graph, coeffs)
        .iter()
        .filter(|entry| !entry.compliant)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_network, Edge};

    fn single_edge() -> NetworkGraph {
        NetworkGraph::new(2, vec![Edge { tail: 0, head: 1 }], 1.0, 1).unwrap()
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_of(10, 40), 2.0);
        assert!((kappa_of(2, 2) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((kappa_of(100, 400) - 6.324_555_32).abs() < 1e-8);
    }

    #[test]
    fn coefficient_magnitudes_are_kappa() {
        let g = generate_network(12, 40, 1.0, 0, 4).unwrap();
        let c = draw_coefficients(&g, 1.7, 9);
        assert_eq!(c.alpha.len(), 12);
        assert_eq!(c.beta.len(), 40);
        assert!(c.alpha.iter().chain(&c.beta).all(|b| b.abs() == 1.7));
        assert!(CodingCoefficients::new(1.0, vec![1.0, -1.0], vec![0.5]).is_err());
    }

    #[test]
    fn node_draws_one_beta_per_incoming_edge() {
        let edges = vec![
            Edge { tail: 0, head: 3 },
            Edge { tail: 1, head: 3 },
            Edge { tail: 2, head: 3 },
        ];
        let g = NetworkGraph::new(4, edges, 1.0, 3).unwrap();
        let c = draw_coefficients(&g, 2.0, 1);
        let betas: Vec<f64> = g.incoming(3).iter().map(|&e| c.beta[e]).collect();
        assert_eq!(betas.len(), 3);
        assert!(c.alpha[3].abs() == 2.0);
    }

    #[test]
    fn node_without_inputs_mixes_only_itself() {
        let g = single_edge();
        let c = CodingCoefficients::new(1.0, vec![-1.0, 1.0], vec![1.0]).unwrap();
        let q = QuantizerSpec::new(4.0, 8, 1.0).unwrap();
        let r = encode_round(&g, &[0.3, 0.5], &c, &q).unwrap();
        assert_eq!(r.mixed[0], -0.3);
    }

    #[test]
    fn two_node_hand_evaluation() {
        let g = single_edge();
        // Range 4 with 16 cells: step 0.5, so Q(0.3) = 0.0.
        let q = QuantizerSpec::new(4.0, 4, 1.0).unwrap();
        for (a2, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let c = CodingCoefficients::new(1.0, vec![1.0, a2], vec![b]).unwrap();
            let r = encode_round(&g, &[0.3, 0.5], &c, &q).unwrap();
            assert_eq!(r.broadcast, vec![0.0]);
            assert_eq!(r.mixed[1], b * 0.0 + a2 * 0.5);
        }
    }

    #[test]
    fn zero_messages_produce_zero_packets() {
        let g = generate_network(8, 20, 1.0, 0, 2).unwrap();
        let c = draw_coefficients(&g, kappa_of(8, 20), 3);
        let q = QuantizerSpec::new(1.0, 6, 1.0).unwrap();
        let r = encode_round(&g, &[0.0; 8], &c, &q).unwrap();
        assert!(r.broadcast.iter().chain(&r.broadcast_noise).all(|v| *v == 0.0));
        assert!(r.mixed.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forwarder_selection_edges() {
        assert_eq!(
            select_forwarders(7, Forwarding::Bernoulli { p: 1.0 }, 0).unwrap(),
            (0..7).collect::<Vec<_>>()
        );
        assert!(select_forwarders(7, Forwarding::Bernoulli { p: 0.0 }, 0)
            .unwrap()
            .is_empty());
        let five = select_forwarders(20, Forwarding::Exact { m: 5 }, 3).unwrap();
        assert_eq!(five.len(), 5);
        assert!(five.windows(2).all(|w| w[0] < w[1]));
        assert!(select_forwarders(4, Forwarding::Exact { m: 5 }, 0).is_err());
        assert!(select_forwarders(4, Forwarding::Bernoulli { p: 1.5 }, 0).is_err());
    }

    #[test]
    fn isolated_forwarder_row() {
        let g = NetworkGraph::new(3, vec![Edge { tail: 1, head: 2 }], 1.0, 2).unwrap();
        let c = CodingCoefficients::new(1.5, vec![1.5, -1.5, 1.5], vec![-1.5]).unwrap();
        let q = QuantizerSpec::new(2.0, 5, 1.0).unwrap();
        let x = [0.4, -0.2, 0.1];
        let r = encode_round(&g, &x, &c, &q).unwrap();
        let sys = assemble_measurement(&g, &c, &[0], &r);
        assert_eq!(sys.psi.row(0).iter().copied().collect::<Vec<_>>(), vec![1.5, 0.0, 0.0]);
        assert!((sys.z[0] - (1.5 * 0.4 + sys.n_eff[0])).abs() < 1e-15);
        assert_eq!(sys.row_source, vec![Some(0)]);
    }

    #[test]
    fn three_node_hand_assembly() {
        // Edges 1->3 and 2->3; node 3 forwards. Range 2, 3 bits: step 0.5.
        let g = NetworkGraph::new(3, vec![Edge { tail: 0, head: 2 }, Edge { tail: 1, head: 2 }], 1.0, 2).unwrap();
        let c = CodingCoefficients::new(1.0, vec![1.0, 1.0, -1.0], vec![1.0, -1.0]).unwrap();
        let q = QuantizerSpec::new(2.0, 3, 1.0).unwrap();
        let x = [0.7, 0.2, 0.3];
        let r = encode_round(&g, &x, &c, &q).unwrap();
        // Q(0.7) = 0.5, Q(0.2) = 0.0; P_3 = 0.5 - 0.0 - 0.3 = 0.2; Q(0.2) = 0.0.
        assert_eq!(r.broadcast, vec![0.5, 0.0]);
        assert!((r.mixed[2] - 0.2).abs() < 1e-15);
        let sys = assemble_measurement(&g, &c, &[2], &r);
        assert_eq!(
            sys.psi.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, -1.0, -1.0]
        );
        // n_eff = N_out + beta_1 N_1 + beta_2 N_2 = (0 - 0.2) + (0.5 - 0.7) - (0.0 - 0.2)
        assert!((sys.n_eff[0] - (-0.2 - 0.2 + 0.2)).abs() < 1e-12);
        assert_eq!(sys.z, vec![0.0]);
        assert!(sys.consistency_defect(&x) < 1e-12);
    }

    #[test]
    fn parallel_edges_add_into_one_entry() {
        let edges = vec![Edge { tail: 0, head: 1 }, Edge { tail: 0, head: 1 }];
        let g = NetworkGraph::new(2, edges, 1.0, 1).unwrap();
        let c = CodingCoefficients::new(1.0, vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let q = QuantizerSpec::new(4.0, 6, 1.0).unwrap();
        let r = encode_round(&g, &[0.25, 0.5], &c, &q).unwrap();
        let sys = assemble_measurement(&g, &c, &[1], &r);
        assert_eq!(sys.psi[(0, 0)], 2.0);
    }

    #[test]
    fn empty_forwarder_list_gives_empty_system() {
        let g = single_edge();
        let c = draw_coefficients(&g, 1.0, 0);
        let q = QuantizerSpec::new(1.0, 4, 1.0).unwrap();
        let r = encode_round(&g, &[0.1, 0.2], &c, &q).unwrap();
        let sys = assemble_measurement(&g, &c, &[], &r);
        assert_eq!((sys.rows(), sys.cols()), (0, 2));
    }

    #[test]
    fn idealized_kappa_one_has_no_zeros() {
        let a = idealized_matrix(50, 40, 1.0, 5).unwrap();
        assert!(a.iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn idealized_rejects_small_kappa() {
        assert!(matches!(
            idealized_matrix(2, 2, 0.9, 0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn idealized_moments_for_kappa_two() {
        // Exact law: P(0) = 3/4, P(+-2) = 1/8, so E[psi^2] = 1 and E[psi^4] = 4.
        let a = idealized_matrix(1000, 1000, 2.0, 17).unwrap();
        let count = a.len() as f64;
        let mean = a.iter().sum::<f64>() / count;
        let second = a.iter().map(|v| v * v).sum::<f64>() / count;
        let fourth = a.iter().map(|v| v.powi(4)).sum::<f64>() / count;
        assert!(mean.abs() < 0.01);
        assert!((second - 1.0).abs() < 0.02);
        assert!((fourth - 4.0).abs() < 0.2);
    }

    #[test]
    fn normalization_diagnostics() {
        let g = single_edge();
        let c = CodingCoefficients::new(2.0, vec![2.0, -2.0], vec![2.0]).unwrap();
        let report = check_normalization(&g, &c);
        assert_eq!(report[1].coefficient_mass, 4.0);
        assert!(!report[1].compliant);

        let small = CodingCoefficients::new(0.4, vec![0.4, 0.4], vec![-0.4]).unwrap();
        let report = check_normalization(&g, &small);
        assert_eq!(report[1].coefficient_mass, 0.8);
        assert!(report[1].compliant);
    }

    #[test]
    fn graph_kappa_always_violates_normalization() {
        for seed in 0..10 {
            let g = generate_network(15, 10 * seed as usize, 1.0, 0, seed).unwrap();
            let kappa = kappa_of(15, g.edge_count());
            assert!(kappa >= 2f64.sqrt() - 1e-12);
            let c = draw_coefficients(&g, kappa, seed);
            assert_eq!(normalization_violations(&g, &c), 15);
        }
    }

    #[test]
    fn measurement_csv_round_trip() {
        let g = generate_network(6, 14, 1.0, 5, 8).unwrap();
        let c = draw_coefficients(&g, kappa_of(6, 14), 2);
        let q = QuantizerSpec::new(8.0, 6, 1.0).unwrap();
        let x = [0.1, -0.35, 0.9, 0.0, -1.0, 0.45];
        let r = encode_round(&g, &x, &c, &q).unwrap();
        let sys = assemble_measurement(&g, &c, &[0, 2, 3, 5], &r);
        let mut buf = Vec::new();
        sys.write_csv(&mut buf).unwrap();
        let back = MeasurementSystem::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.psi, sys.psi);
        assert_eq!(back.z, sys.z);
        assert_eq!(back.n_eff, sys.n_eff);
        assert_eq!(back.row_source, sys.row_source);
    }
}
