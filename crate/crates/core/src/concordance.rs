//! Map from each element of the model to the code that implements it and
//! the test that checks it. `CONCORDANCE.md` is generated from here.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcordanceEntry {
    /// Key from [`MODEL_ITEMS`].
    pub item: &'static str,
    /// Where the element sits in the model.
    pub location: &'static str,
    pub module: &'static str,
    pub operation: &'static str,
    pub test: &'static str,
}

/// Every model element that needs at least one registry entry.
pub const MODEL_ITEMS: &[&str] = &[
    "edge-placement",
    "in-out-sets",
    "initial-rest",
    "bounded-messages",
    "sparse-transform",
    "distortion-target",
    "network-load",
    "quantizer-step",
    "quantizer-error",
    "qpf-packet-length",
    "qpf-load",
    "broadcast-round",
    "linear-combination",
    "kappa",
    "overflow-normalization",
    "forwarding-decision",
    "measurement-matrix",
    "effective-noise",
    "moment-conditions",
    "block-partition",
    "median-estimator",
    "decoder-clipping",
    "packet-count-bound",
    "load-minimization",
    "closed-form-load",
    "load-scaling",
];

const fn entry(
    item: &'static str,
    location: &'static str,
    module: &'static str,
    operation: &'static str,
    test: &'static str,
) -> ConcordanceEntry {
    ConcordanceEntry {
        item,
        location,
        module,
        operation,
        test,
    }
}

pub const REGISTRY: &[ConcordanceEntry] = &[
    entry(
        "edge-placement",
        "Network model: i.i.d. uniform edge placement",
        "network",
        "generate_network",
        "same_seed_same_edges",
    ),
    entry(
        "edge-placement",
        "Network model: i.i.d. uniform edge placement",
        "network",
        "generate_network",
        "degree_sums_equal_edge_count",
    ),
    entry(
        "in-out-sets",
        "Network model: incoming and outgoing edge sets",
        "network",
        "NetworkGraph::incoming",
        "single_edge_in_and_out_sets",
    ),
    entry(
        "initial-rest",
        "Network model: nodes start with no received packets",
        "qnc",
        "encode_round",
        "node_without_inputs_mixes_only_itself",
    ),
    entry(
        "bounded-messages",
        "Source model: messages bounded by q_max",
        "sources",
        "sample_messages",
        "identity_ensemble_is_sparse_in_signal_domain",
    ),
    entry(
        "sparse-transform",
        "Source model: k-sparse in an orthonormal transform",
        "sources",
        "make_transform",
        "dct_round_trip_recovers_coefficients",
    ),
    entry(
        "sparse-transform",
        "Source model: k-sparse in an orthonormal transform",
        "sources",
        "make_transform",
        "random_orthonormal_preserves_norms",
    ),
    entry(
        "distortion-target",
        "Problem statement: per-node mean absolute error target",
        "harness",
        "estimate_distortion",
        "single_trial_means_are_the_errors",
    ),
    entry(
        "network-load",
        "Problem statement: load as packets times packet length",
        "harness",
        "run_trials",
        "zero_source_qpf_is_exact",
    ),
    entry(
        "quantizer-step",
        "Baseline: uniform quantizer step",
        "quantize",
        "step_size",
        "step_size_examples",
    ),
    entry(
        "quantizer-error",
        "Baseline: maximum and mean quantization error",
        "quantize",
        "QuantizerSpec::quantize",
        "error_is_bounded_by_step",
    ),
    entry(
        "quantizer-error",
        "Baseline: maximum and mean quantization error",
        "quantize",
        "QuantizerSpec::quantize",
        "quantizer_error_laws",
    ),
    entry(
        "qpf-packet-length",
        "Baseline: packet length for a distortion target",
        "qpf",
        "required_packet_length",
        "packet_length_matches_search_and_log_rule",
    ),
    entry(
        "qpf-load",
        "Baseline: total load of quantize and forward",
        "qpf",
        "qpf_load",
        "load_examples",
    ),
    entry(
        "qpf-load",
        "Baseline: achievability of the target",
        "qpf",
        "simulate_qpf",
        "qpf_meets_target_distortion",
    ),
    entry(
        "broadcast-round",
        "Coding scheme: broadcast of quantized messages",
        "qnc",
        "encode_round",
        "two_node_hand_evaluation",
    ),
    entry(
        "linear-combination",
        "Coding scheme: random linear combination at each node",
        "qnc",
        "draw_coefficients",
        "node_draws_one_beta_per_incoming_edge",
    ),
    entry(
        "linear-combination",
        "Coding scheme: random linear combination at each node",
        "qnc",
        "draw_coefficients",
        "coefficient_magnitudes_are_kappa",
    ),
    entry(
        "kappa",
        "Coding scheme: coefficient magnitude",
        "qnc",
        "kappa_of",
        "kappa_examples",
    ),
    entry(
        "overflow-normalization",
        "Coding scheme: overflow normalization (diagnostic)",
        "qnc",
        "check_normalization",
        "normalization_diagnostics",
    ),
    entry(
        "forwarding-decision",
        "Coding scheme: random forwarding decision",
        "qnc",
        "select_forwarders",
        "forwarder_selection_edges",
    ),
    entry(
        "measurement-matrix",
        "Coding scheme: total measurement matrix",
        "qnc",
        "assemble_measurement",
        "three_node_hand_assembly",
    ),
    entry(
        "measurement-matrix",
        "Coding scheme: total measurement matrix",
        "qnc",
        "assemble_measurement",
        "protocol_matches_matrix_model",
    ),
    entry(
        "effective-noise",
        "Coding scheme: total effective noise",
        "qnc",
        "effective_noise_bound",
        "effective_noise_respects_bound",
    ),
    entry(
        "moment-conditions",
        "Decoder analysis: entry moment conditions",
        "qnc",
        "idealized_matrix",
        "idealized_entry_moments",
    ),
    entry(
        "block-partition",
        "Decoder analysis: partition into blocks",
        "decode",
        "choose_partition",
        "partition_worked_example",
    ),
    entry(
        "median-estimator",
        "Decoder analysis: median of block estimates",
        "decode",
        "median_of_means_decode",
        "two_block_hand_example",
    ),
    entry(
        "median-estimator",
        "Decoder analysis: median of block estimates",
        "decode",
        "median_of_means_decode",
        "median_ignores_a_minority_of_corrupted_blocks",
    ),
    entry(
        "decoder-clipping",
        "Load analysis: clipping of decoder output",
        "decode",
        "median_of_means_decode",
        "clipping_never_increases_error",
    ),
    entry(
        "packet-count-bound",
        "Decoder guarantee: sufficient packet count",
        "decode",
        "theorem1_min_packets",
        "packet_bound_examples",
    ),
    entry(
        "packet-count-bound",
        "Decoder guarantee: sufficient packet count",
        "decode",
        "median_of_means_decode",
        "median_decoder_meets_packet_budget",
    ),
    entry(
        "load-minimization",
        "Load analysis: constrained load minimization",
        "bounds",
        "qnc_load_bound",
        "grid_bound_dominates_closed_form",
    ),
    entry(
        "closed-form-load",
        "Load analysis: closed-form load for unit packets",
        "bounds",
        "qnc_load_corollary",
        "closed_form_reference_value",
    ),
    entry(
        "load-scaling",
        "Comparison: logarithmic against linear load growth",
        "bounds",
        "compare_loads",
        "load_scaling_sweep",
    ),
];

/// Model items without a registry entry, in [`MODEL_ITEMS`] order.
pub fn missing_items(entries: &[ConcordanceEntry]) -> Vec<&'static str> {
    MODEL_ITEMS
        .iter()
        .copied()
        .filter(|item| !entries.iter().any(|e| e.item == *item))
        .collect()
}

/// Render `entries` as a markdown table, failing if any model item is
/// uncovered.
pub fn render_entries(entries: &[ConcordanceEntry]) -> Result<String> {
    let missing = missing_items(entries);
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "concordance has no entry for: {}",
            missing.join(", ")
        )));
    }
    let mut out = String::from(
        "# Concordance\n\n\
         Generated by `qnclab concordance`. Each model element maps to the code that\n\
         implements it and a test that checks it.\n\n\
         | Model element | Module | Operation | Test |\n\
         |---|---|---|---|\n",
    );
    for e in entries {
        out.push_str(&format!(
            "| {} | `{}` | `{}` | `{}` |\n",
            e.location, e.module, e.operation, e.test
        ));
    }
    Ok(out)
}

pub fn render_concordance() -> Result<String> {
    render_entries(REGISTRY)
}
