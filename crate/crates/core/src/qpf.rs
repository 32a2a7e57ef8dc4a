//! Quantize-and-forward baseline: every node quantizes its own message and
//! routes the packet unchanged to the gateway.

use crate::error::{Error, Result};
use crate::network::NetworkGraph;
use crate::quantize::QuantizerSpec;
use crate::sources::MessageEnsemble;

/// Smallest packet length `L` whose mean quantization error `delta_q / 2`
/// is at most `target`.
///
/// A target at or above `q_max` is met by a single level in the
/// logarithmic approximation, so that case returns the shortest valid
/// packet and logs a warning.
pub fn required_packet_length(q_max: f64, target: f64, capacity: f64) -> Result<u32> {
    if !(q_max > 0.0 && target > 0.0 && capacity > 0.0) {
        return Err(Error::invalid(format!(
            "packet sizing needs positive q_max, target and capacity (got {q_max}, {target}, {capacity})"
        )));
    }
    let shortest = (1.0 / capacity).ceil().max(1.0) as u32;
    if target >= q_max {
        log::warn!("target distortion {target} >= q_max {q_max}; using the shortest packet L = {shortest}");
        return Ok(shortest);
    }
    let mut length = shortest;
    loop {
        let spec = QuantizerSpec::new(q_max, length, capacity)?;
        if spec.step() / 2.0 <= target {
            return Ok(length);
        }
        length = length
            .checked_add(1)
            .ok_or_else(|| Error::invalid("no packet length reaches the target distortion"))?;
    }
}

/// Delivered load: one packet of length `L` per non-gateway node.
pub fn qpf_load(node_count: u64, packet_length: u64) -> u64 {
    node_count.saturating_sub(1) * packet_length
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpfResult {
    /// Gateway reconstruction: quantized values, exact for the gateway itself.
    pub recovered: Vec<f64>,
    pub per_node_abs_error: Vec<f64>,
    /// `(n - 1) * L`.
    pub delivered_load: u64,
    /// `sum_v hops(v) * L`, the channel uses actually spent on forwarding.
    pub hop_load: u64,
    pub clamp_count: usize,
}

pub fn simulate_qpf(graph: &NetworkGraph, ensemble: &MessageEnsemble, packet_length: u32) -> Result<QpfResult> {
    let n = graph.node_count();
    if ensemble.len() != n {
        return Err(Error::invalid(format!(
            "ensemble has {} messages for a {n}-node network",
            ensemble.len()
        )));
    }
    let spec = QuantizerSpec::new(ensemble.q_max, packet_length, graph.capacity())?;
    let hops = graph.hops_to_gateway();
    let gateway = graph.gateway();

    let mut recovered = Vec::with_capacity(n);
    let mut clamp_count = 0;
    let mut hop_total = 0u64;
    for (v, (&x, hop)) in ensemble.x.iter().zip(&hops).enumerate() {
        if v == gateway {
            recovered.push(x);
            continue;
        }
        let Some(hop) = hop else {
            return Err(Error::RoutingInfeasible {
                node: v + 1,
                gateway: gateway + 1,
            });
        };
        hop_total += *hop as u64;
        let q = spec.quantize(x);
        clamp_count += q.clamped as usize;
        recovered.push(q.value);
    }
    let per_node_abs_error = ensemble.x.iter().zip(&recovered).map(|(x, y)| (x - y).abs()).collect();

    Ok(QpfResult {
        recovered,
        per_node_abs_error,
        delivered_load: qpf_load(n as u64, packet_length as u64),
        hop_load: hop_total * packet_length as u64,
        clamp_count,
    })
}
