use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DecoderChoice, ExperimentConfig, Scheme};
use crate::decode::{ist_sparse_decode, median, median_of_means_decode, IstParams, MedianDecoderParams, Partition};
use crate::error::{Error, Result};
use crate::network::{generate_network, NetworkGraph};
use crate::qnc::{
    assemble_measurement, draw_coefficients, encode_round, idealized_matrix, normalization_violations,
    select_forwarders,
};
use crate::qpf::simulate_qpf;
use crate::quantize::QuantizerSpec;
use crate::rng::{rng_from_seed, split_seed};
use crate::sources::{sample_messages, Basis, Transform};

/// Sub-seed indices under a trial seed.
pub mod stream {
    pub const GRAPH: u64 = 0;
    pub const MESSAGES: u64 = 1;
    pub const COEFFICIENTS: u64 = 2;
    pub const FORWARDERS: u64 = 3;
    pub const MATRIX: u64 = 4;
    pub const NOISE: u64 = 5;
}

const GRAPH_ATTEMPTS: u64 = 1000;
const MAX_ABORT_FRACTION: f64 = 0.1;

/// Seed of trial `t`.
pub fn trial_seed(master: u64, t: usize) -> u64 {
    split_seed(master, t as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionEstimate {
    pub per_node_mean: Vec<f64>,
    pub max: f64,
}

/// Mean of `|X_v - X_hat_v|` per node across trials, and its maximum over
/// nodes.
pub fn estimate_distortion(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<DistortionEstimate> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::invalid(format!(
            "need matching, non-empty trial lists (got {} estimates, {} truths)",
            estimates.len(),
            truths.len()
        )));
    }
    let errors = estimates
        .iter()
        .zip(truths)
        .map(|(est, truth)| {
            if est.len() != truth.len() {
                return Err(Error::invalid("estimate and truth lengths differ"));
            }
            Ok(est.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(mean_errors(&errors))
}

fn mean_errors(errors: &[Vec<f64>]) -> DistortionEstimate {
    let n = errors.first().map_or(0, Vec::len);
    let mut per_node_mean = vec![0.0; n];
    for trial in errors {
        for (sum, e) in per_node_mean.iter_mut().zip(trial) {
            *sum += e;
        }
    }
    let count = errors.len() as f64;
    per_node_mean.iter_mut().for_each(|s| *s /= count);
    let max = per_node_mean.iter().copied().fold(0.0, f64::max);
    DistortionEstimate { per_node_mean, max }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub trial_seeds: Vec<u64>,
    pub completed: usize,
    pub aborted: usize,
    /// Mean absolute error per node over completed trials.
    pub per_node_mean_error: Vec<f64>,
    pub distortion_max: f64,
    /// Largest coordinate error of each completed trial, in trial order.
    pub trial_max_error: Vec<f64>,
    /// Median of all coordinate errors across completed trials.
    pub median_abs_error: f64,
    /// Packets reaching the gateway, averaged over completed trials.
    pub m: f64,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub q_prime_max: Option<f64>,
    pub packet_length: u32,
    /// `m * L`, averaged over completed trials.
    pub load_delivered: f64,
    pub clip_count: usize,
    pub clamp_count: usize,
    pub norm_violations: usize,
    pub wall_ms: u64,
}

struct TrialOutcome {
    abs_error: Vec<f64>,
    rows: usize,
    clip_count: usize,
    clamp_count: usize,
    norm_violations: usize,
}

/// Settings resolved once per run.
struct Plan {
    quantizer: QuantizerSpec,
    basis: Basis,
    kappa: f64,
    partition: Option<Partition>,
    idealized_rows: usize,
}

/// Run every trial of `config` and aggregate the results. Trials run on a
/// pool of `config.workers` threads; results do not depend on scheduling.
pub fn run_trials(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    config.validate()?;
    let started = Instant::now();
    let n = config.network.nodes;
    let is_qnc = config.scheme != Scheme::Qpf;
    let uses_median = is_qnc && config.qnc.decoder == DecoderChoice::MedianOfMeans;
    let plan = Plan {
        quantizer: config.quantizer_spec()?,
        basis: Basis::new(n, Transform::new(config.source.transform, config.source.transform_seed)),
        kappa: config.kappa(),
        partition: if uses_median { Some(config.partition()?) } else { None },
        idealized_rows: if config.scheme == Scheme::QncIdealized {
            config.idealized_rows()?
        } else {
            0
        },
    };

    let trial_seeds: Vec<u64> = (0..config.trials).map(|t| trial_seed(config.seed, t)).collect();
    let run = || -> Vec<Result<TrialOutcome>> {
        trial_seeds
            .par_iter()
            .map(|&seed| run_one(config, &plan, seed))
            .collect()
    };
    let outcomes = if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?
            .install(run)
    } else {
        run()
    };

    let mut completed = Vec::new();
    let mut aborted = 0;
    let mut first_failure = None;
    for outcome in outcomes {
        match outcome {
            Ok(o) => completed.push(o),
            Err(e) => {
                aborted += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if completed.is_empty() || aborted as f64 > MAX_ABORT_FRACTION * config.trials as f64 {
        return Err(Error::TrialsAborted {
            aborted,
            trials: config.trials,
            first: first_failure.unwrap_or_default(),
        });
    }
    if aborted > 0 {
        log::warn!(
            "{aborted} of {} trials aborted: {}",
            config.trials,
            first_failure.unwrap_or_default()
        );
    }

    let errors: Vec<Vec<f64>> = completed.iter().map(|o| o.abs_error.clone()).collect();
    let distortion = mean_errors(&errors);
    let mut all_errors: Vec<f64> = errors.iter().flatten().copied().collect();
    let count = completed.len() as f64;
    let m = completed.iter().map(|o| o.rows as f64).sum::<f64>() / count;
    let packet_length = plan.quantizer.packet_length();

    Ok(ExperimentRecord {
        config: config.clone(),
        trial_seeds,
        completed: completed.len(),
        aborted,
        trial_max_error: errors.iter().map(|e| e.iter().copied().fold(0.0, f64::max)).collect(),
        median_abs_error: median(&mut all_errors),
        per_node_mean_error: distortion.per_node_mean,
        distortion_max: distortion.max,
        m,
        m1: plan.partition.map(|p| p.m1),
        m2: plan.partition.map(|p| p.m2),
        epsilon: uses_median.then_some(config.qnc.epsilon),
        gamma: uses_median.then_some(config.qnc.gamma),
        kappa: is_qnc.then_some(plan.kappa),
        q_prime_max: is_qnc.then(|| config.q_prime_bound()),
        packet_length,
        load_delivered: m * packet_length as f64,
        clip_count: completed.iter().map(|o| o.clip_count).sum(),
        clamp_count: completed.iter().map(|o| o.clamp_count).sum(),
        norm_violations: completed.iter().map(|o| o.norm_violations).sum(),
        wall_ms: if config.timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
    })
}

/// Draw the trial's network, redrawing when every node must reach the
/// gateway.
pub fn trial_network(config: &ExperimentConfig, seed: u64) -> Result<NetworkGraph> {
    let net = &config.network;
    let base = split_seed(seed, stream::GRAPH);
    if !net.require_connected {
        return generate_network(net.nodes, net.edges, net.capacity, config.gateway(), base);
    }
    for attempt in 0..GRAPH_ATTEMPTS {
        let graph = generate_network(
            net.nodes,
            net.edges,
            net.capacity,
            config.gateway(),
            split_seed(base, attempt),
        )?;
        if graph.first_unreachable().is_none() {
            return Ok(graph);
        }
    }
    Err(Error::invalid(format!(
        "no connected network after {GRAPH_ATTEMPTS} draws; raise the edge count"
    )))
}

fn run_one(config: &ExperimentConfig, plan: &Plan, seed: u64) -> Result<TrialOutcome> {
    let ensemble = sample_messages(
        config.source.sparsity,
        config.source.q_max,
        &plan.basis,
        config.source.coefficients,
        split_seed(seed, stream::MESSAGES),
    )?;

    if config.scheme == Scheme::Qpf {
        let graph = trial_network(config, seed)?;
        let result = simulate_qpf(&graph, &ensemble, plan.quantizer.packet_length())?;
        return Ok(TrialOutcome {
            abs_error: result.per_node_abs_error,
            rows: config.network.nodes - 1,
            clip_count: 0,
            clamp_count: result.clamp_count,
            norm_violations: 0,
        });
    }

    let (psi, z, clamp_count, norm_violations) = match config.scheme {
        Scheme::QncNetwork => {
            let graph = trial_network(config, seed)?;
            let coeffs = draw_coefficients(&graph, plan.kappa, split_seed(seed, stream::COEFFICIENTS));
            let round = encode_round(&graph, &ensemble.x, &coeffs, &plan.quantizer)?;
            let forwarders = select_forwarders(
                graph.node_count(),
                config.qnc.forwarding,
                split_seed(seed, stream::FORWARDERS),
            )?;
            let system = assemble_measurement(&graph, &coeffs, &forwarders, &round);
            let clamps = system.clamped.iter().filter(|c| **c).count() + round.message_clamps;
            (system.psi, system.z, clamps, normalization_violations(&graph, &coeffs))
        }
        _ => {
            let n = config.network.nodes;
            let psi = idealized_matrix(plan.idealized_rows, n, plan.kappa, split_seed(seed, stream::MATRIX))?;
            let z = idealized_packets(
                &psi,
                &ensemble.x,
                plan.quantizer.step(),
                split_seed(seed, stream::NOISE),
            );
            (psi, z, 0, 0)
        }
    };

    let report = match plan.partition {
        Some(partition) => median_of_means_decode(
            &z,
            &psi,
            &MedianDecoderParams {
                m1: partition.m1,
                m2: partition.m2,
                epsilon: config.qnc.epsilon,
                gamma: config.qnc.gamma,
                q_max: config.source.q_max,
                strict_median: config.qnc.strict_median,
            },
        )?,
        None => {
            let params = IstParams {
                schedule: config.qnc.ist.schedule,
                max_iters: config.qnc.ist.max_iters,
                tol: config.qnc.ist.tol,
                q_max: config.source.q_max,
            };
            ist_sparse_decode(&z, &psi, &plan.basis.matrix, &params)?.report
        }
    }
    .score(&ensemble.x);

    Ok(TrialOutcome {
        abs_error: report.per_coord_abs_error.unwrap_or_default(),
        rows: psi.nrows(),
        clip_count: report.clip_count,
        clamp_count,
        norm_violations,
    })
}

/// `psi * x` plus independent noise uniform on `[-step, step]` per row.
pub fn idealized_packets(psi: &DMatrix<f64>, x: &[f64], step: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..psi.nrows())
        .map(|i| {
            let clean: f64 = psi.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
            clean + rng.random_range(-step..=step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Scheme;
    use crate::sources::TransformKind;

    #[test]
    fn perfect_recovery_has_zero_distortion() {
        let x = vec![vec![0.5, -0.25], vec![1.0, 0.0]];
        let d = estimate_distortion(&x, &x).unwrap();
        assert_eq!(d.per_node_mean, vec![0.0, 0.0]);
        assert_eq!(d.max, 0.0);
    }

    #[test]
    fn single_trial_means_are_the_errors() {
        let d = estimate_distortion(&[vec![0.1, 0.3]], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(d.per_node_mean, vec![0.1, 0.3]);
        assert_eq!(d.max, 0.3);
    }

    #[test]
    fn two_trials_average() {
        let d = estimate_distortion(&[vec![0.1], vec![0.3]], &[vec![0.0], vec![0.0]]).unwrap();
        assert!((d.per_node_mean[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_trial_list_is_rejected() {
        assert!(estimate_distortion(&[], &[]).is_err());
    }

    #[test]
    fn zero_source_qpf_is_exact() {
        let mut config = ExperimentConfig::example(Scheme::Qpf);
        config.source.sparsity = 0;
        config.network.require_connected = true;
        config.trials = 5;
        let record = run_trials(&config).unwrap();
        assert!(record.per_node_mean_error.iter().all(|e| *e == 0.0));
        assert_eq!(record.load_delivered, 19.0 * 8.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut config = ExperimentConfig::example(Scheme::QncIdealized);
        config.source.transform = TransformKind::Identity;
        config.qnc.kappa = Some(2f64.sqrt());
        config.qnc.m1 = Some(9);
        config.qnc.m2 = Some(7);
        config.trials = 12;
        config.timing = false;
        config.workers = 1;
        let one = run_trials(&config).unwrap();
        config.workers = 4;
        let four = run_trials(&config).unwrap();
        assert_eq!(one.per_node_mean_error, four.per_node_mean_error);
        assert_eq!(one.trial_max_error, four.trial_max_error);
    }

    #[test]
    fn unreachable_nodes_abort_the_run() {
        let mut config = ExperimentConfig::example(Scheme::Qpf);
        config.network.edges = 3;
        config.trials = 10;
        let err = run_trials(&config).unwrap_err();
        assert!(matches!(err, Error::TrialsAborted { .. }));
    }
}
