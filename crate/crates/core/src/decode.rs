//! Gateway decoders and packet-count sizing.
//!
//! The median-of-means decoder splits the first `m1 * m2` rows of the
//! measurement system into `m2` blocks of `m1` rows. For block `l` and
//! coordinate `j` it forms the correlation
//!
//! ```text
//! r[l][j] = (1 / m1) * sum_{i in block l} psi[i][j] * z[i]
//! ```
//!
//! which is an unbiased estimate of `x_j` when the entries of `psi` are
//! independent with zero mean and unit variance. The estimate for `x_j` is
//! the median of `r[1][j] .. r[m2][j]`, clipped to `[-q_max, q_max]`.
//!
//! Chebyshev's inequality bounds the failure probability of one block, and
//! a Chernoff bound on the number of failed blocks controls the median.
//! [`choose_partition`] turns those two bounds into block sizes.
//!
//! [`ist_sparse_decode`] is an iterative soft-thresholding decoder for the
//! regime with fewer packets than messages.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    #[default]
    Natural,
    Binary,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Binary => x.log2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianDecoderParams {
    /// Rows per block.
    pub m1: usize,
    /// Number of blocks.
    pub m2: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub q_max: f64,
    /// Require an odd block count so the median is a single order statistic.
    pub strict_median: bool,
}

impl MedianDecoderParams {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(Error::invalid("block size and block count must be positive"));
        }
        if self.strict_median && self.m2 % 2 == 0 {
            return Err(Error::invalid(format!(
                "strict-median mode needs an odd block count, got m2 = {}",
                self.m2
            )));
        }
        if !(self.q_max > 0.0) {
            return Err(Error::invalid("clipping bound q_max must be positive"));
        }
        Ok(())
    }

    pub fn required_rows(&self) -> usize {
        self.m1 * self.m2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IstParams {
    pub schedule: ThresholdSchedule,
    pub max_iters: usize,
    /// Stop once the threshold has reached its floor and no coefficient
    /// moves by more than `tol * max(1, max|s|)`.
    pub tol: f64,
    pub q_max: f64,
}

impl Default for IstParams {
    fn default() -> Self {
        Self {
            schedule: ThresholdSchedule::default(),
            max_iters: 5000,
            tol: 1e-12,
            q_max: 1.0,
        }
    }
}

/// Shrinkage thresholds, expressed as fractions of `max_j |(A^T z)_j|`
/// where `A = psi * phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdSchedule {
    Constant {
        fraction: f64,
    },
    /// `max(start * decay^t, floor)`.
    Geometric {
        start: f64,
        decay: f64,
        floor: f64,
    },
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        ThresholdSchedule::Geometric {
            start: 0.5,
            decay: 0.9,
            floor: 1e-10,
        }
    }
}

impl ThresholdSchedule {
    fn fraction(&self, iteration: usize) -> f64 {
        match *self {
            ThresholdSchedule::Constant { fraction } => fraction,
            ThresholdSchedule::Geometric { start, decay, floor } => {
                (start * decay.powi(iteration.min(i32::MAX as usize) as i32)).max(floor)
            }
        }
    }

    fn at_floor(&self, iteration: usize) -> bool {
        match *self {
            ThresholdSchedule::Constant { .. } => true,
            ThresholdSchedule::Geometric { floor, .. } => self.fraction(iteration) <= floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decoder", rename_all = "kebab-case")]
pub enum DecoderEcho {
    MedianOfMeans(MedianDecoderParams),
    SoftThreshold(IstParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderReport {
    pub x_hat: Vec<f64>,
    /// Filled in by [`DecoderReport::score`] when the truth is known.
    pub per_coord_abs_error: Option<Vec<f64>>,
    pub clip_count: usize,
    /// Rows beyond `m1 * m2`, ignored by the median decoder.
    pub dropped_rows: usize,
    pub converged: bool,
    pub iterations: usize,
    pub params: DecoderEcho,
}

impl DecoderReport {
    pub fn score(mut self, truth: &[f64]) -> Self {
        self.per_coord_abs_error = Some(self.x_hat.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect());
        self
    }
}

fn clip(values: &mut [f64], bound: f64) -> usize {
    let mut clipped = 0;
    for v in values.iter_mut() {
        if v.abs() > bound {
            *v = bound.copysign(*v);
            clipped += 1;
        }
    }
    clipped
}

/// Median of a nonempty slice; even lengths average the two central values.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Per-block correlations `r[l][j]` for one coordinate.
pub fn block_correlations(z: &[f64], psi: &DMatrix<f64>, j: usize, m1: usize, m2: usize) -> Vec<f64> {
    let column = psi.column(j);
    (0..m2)
        .map(|l| {
            let rows = l * m1..(l + 1) * m1;
            rows.map(|i| column[i] * z[i]).sum::<f64>() / m1 as f64
        })
        .collect()
}

pub fn median_of_means_decode(z: &[f64], psi: &DMatrix<f64>, params: &MedianDecoderParams) -> Result<DecoderReport> {
    params.validate()?;
    let available = psi.nrows();
    if z.len() != available {
        return Err(Error::invalid(format!(
            "{} packets for a measurement matrix with {available} rows",
            z.len()
        )));
    }
    let required = params.required_rows();
    if available < required {
        return Err(Error::InsufficientMeasurements { required, available });
    }

    let mut x_hat: Vec<f64> = (0..psi.ncols())
        .into_par_iter()
        .map(|j| median(&mut block_correlations(z, psi, j, params.m1, params.m2)))
        .collect();
    let clip_count = clip(&mut x_hat, params.q_max);

    Ok(DecoderReport {
        x_hat,
        per_coord_abs_error: None,
        clip_count,
        dropped_rows: available - required,
        converged: true,
        iterations: 1,
        params: DecoderEcho::MedianOfMeans(*params),
    })
}

/// Inputs to the packet-count bounds. `kappa_sq` is passed squared so the
/// common integer values stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingInputs {
    pub n: usize,
    pub k: usize,
    pub q_prime_max: f64,
    pub kappa_sq: f64,
    pub delta_q: f64,
    pub epsilon: f64,
    pub gamma: f64,
    #[serde(default)]
    pub log_base: LogBase,
}

impl SizingInputs {
    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.gamma > 0.0) {
            return Err(Error::invalid(format!(
                "accuracy epsilon and confidence gamma must be positive (got {}, {})",
                self.epsilon, self.gamma
            )));
        }
        if self.n == 0 {
            return Err(Error::invalid("sizing needs at least one message"));
        }
        Ok(())
    }

    /// `(kappa^2 - 1) k q'^2 + delta_q^2`, the per-sample variance budget.
    pub fn variance_budget(&self) -> f64 {
        (self.kappa_sq - 1.0) * self.k as f64 * self.q_prime_max.powi(2) + self.delta_q.powi(2)
    }

    /// Real-valued lower bound on the block size, before integerization.
    pub fn block_size_bound(&self) -> f64 {
        4.0 * self.variance_budget() / self.epsilon.powi(2)
    }

    /// Real-valued lower bound on the block count, before integerization.
    pub fn block_count_bound(&self) -> f64 {
        12.0 * (1.0 + self.gamma) * self.log_base.log(self.n as f64)
    }

    /// Real-valued lower bound on the total packet count.
    pub fn packet_bound(&self) -> f64 {
        48.0 * (1.0 + self.gamma) * self.variance_budget() / self.epsilon.powi(2) * self.log_base.log(self.n as f64)
    }
}

fn smallest_integer_above(bound: f64) -> usize {
    if bound < 0.0 {
        0
    } else {
        bound.floor() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub m1: usize,
    pub m2: usize,
}

impl Partition {
    pub fn rows(&self) -> usize {
        self.m1 * self.m2
    }
}

/// Block size and count meeting the per-block Chebyshev bound and the
/// union bound over all `n` coordinates. With `strict_median` the block
/// count is bumped to the next odd number.
pub fn choose_partition(inputs: &SizingInputs, strict_median: bool) -> Result<Partition> {
    inputs.check()?;
    let m1 = smallest_integer_above(inputs.block_size_bound()).max(1);
    let mut m2 = smallest_integer_above(inputs.block_count_bound()).max(1);
    if strict_median && m2 % 2 == 0 {
        m2 += 1;
    }
    Ok(Partition { m1, m2 })
}

/// Smallest packet count strictly above the sufficient bound.
pub fn theorem1_min_packets(inputs: &SizingInputs) -> Result<usize> {
    inputs.check()?;
    Ok(smallest_integer_above(inputs.packet_bound()))
}

// Largest eigenvalue of A^T A by power iteration.
fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Fixed, non-symmetric start vector so the iteration is deterministic.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_749_895).fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..500 {
        let w = a.tr_mul(&(a * &v));
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        let converged = (next - estimate).abs() <= 1e-12 * next;
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

/// Result of [`ist_sparse_decode`] with the residual trace kept for
/// diagnostics.
#[derive(Debug, Clone)]
pub struct IstOutcome {
    pub report: DecoderReport,
    /// `||z - psi phi s_t||_2` after each iteration, starting from `s_0 = 0`.
    pub residuals: Vec<f64>,
}

/// Iterative soft-thresholding over transform coefficients `s`, with
/// `x_hat = phi s` clipped to `[-q_max, q_max]`.
pub fn ist_sparse_decode(
    z: &[f64],
    psi: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    params: &IstParams,
) -> Result<IstOutcome> {
    if z.len() != psi.nrows() {
        return Err(Error::invalid(format!(
            "{} packets for a measurement matrix with {} rows",
            z.len(),
            psi.nrows()
        )));
    }
    if basis.nrows() != psi.ncols() || !basis.is_square() {
        return Err(Error::invalid("transform does not match the measurement matrix width"));
    }
    let a = psi * basis;
    let z = DVector::from_column_slice(z);
    let n = a.ncols();
    let mut s = DVector::zeros(n);
    let mut residuals = vec![z.norm()];

    let lipschitz = spectral_norm_sq(&a) * 1.02;
    let correlation = a.tr_mul(&z);
    let scale = correlation.amax();
    let mut converged = false;
    let mut iterations = 0;

    if lipschitz > 0.0 && scale > 0.0 {
        let step = 1.0 / lipschitz;
        for t in 0..params.max_iters {
            let threshold = params.schedule.fraction(t) * scale;
            let residual = &z - &a * &s;
            let gradient_step = &s + a.tr_mul(&residual) * step;
            let next = gradient_step.map(|v| soft_threshold(v, threshold * step));
            let movement = (&next - &s).amax();
            s = next;
            iterations = t + 1;
            residuals.push((&z - &a * &s).norm());
            if params.schedule.at_floor(t) && movement <= params.tol * s.amax().max(1.0) {
                converged = true;
                break;
            }
        }
    } else {
        converged = true;
    }

    let mut x_hat: Vec<f64> = (basis * &s).iter().copied().collect();
    let clip_count = clip(&mut x_hat, params.q_max);
    Ok(IstOutcome {
        report: DecoderReport {
            x_hat,
            per_coord_abs_error: None,
            clip_count,
            dropped_rows: 0,
            converged,
            iterations,
            params: DecoderEcho::SoftThreshold(params.clone()),
        },
        residuals,
    })
}
