//! Closed-form network-load calculators.
//!
//! For quantize-and-forward the load is `(n - 1) * L` with `L` the shortest
//! packet meeting the distortion target, so it grows linearly in `n`.
//!
//! For one-step coding, a decoder that fails with probability `n^-gamma`
//! and is clipped to `[-q_max, q_max]` has mean error at most
//! `eps (1 - n^-gamma) + 2 q_max n^-gamma`. Keeping that below `D0` and
//! minimizing the packet count times the packet length `L'` gives
//!
//! ```text
//! min over (eps, gamma, L') of
//!     48 (1 + gamma) ((kappa^2 - 1) k q'^2 + q_max^2 2^(2 - 2 L' C0)) / eps^2 * L' * ln n
//! subject to eps (1 - n^-gamma) + 2 q_max n^-gamma <= D0
//! ```
//!
//! which [`qnc_load_bound`] evaluates on a grid. Fixing `gamma = 1`,
//! `eps = D0 - 2 q_max / n` and `L' = 1` gives the closed form in
//! [`qnc_load_corollary`], which grows like `ln n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qpf::{qpf_load, required_packet_length};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadBoundInputs {
    pub n: usize,
    pub k: usize,
    pub q_max: f64,
    pub q_prime_max: f64,
    pub kappa_sq: f64,
    /// Bits per channel use, `C0`.
    pub capacity: f64,
    /// Target mean absolute distortion, `D0`.
    pub target_distortion: f64,
}

impl LoadBoundInputs {
    /// `2 q_max / n`, the distortion floor contributed by clipped failures.
    pub fn clipping_floor(&self) -> f64 {
        2.0 * self.q_max / self.n as f64
    }

    fn check(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("load bounds need at least 2 nodes"));
        }
        if !(self.q_max > 0.0 && self.capacity > 0.0 && self.target_distortion > 0.0) {
            return Err(Error::invalid("q_max, capacity and target distortion must be positive"));
        }
        if !(self.kappa_sq >= 1.0) {
            return Err(Error::invalid(format!(
                "kappa^2 must be at least 1, got {}",
                self.kappa_sq
            )));
        }
        Ok(())
    }

    fn sparse_energy(&self) -> f64 {
        (self.kappa_sq - 1.0) * self.k as f64 * self.q_prime_max.powi(2)
    }

    /// Objective of the constrained program at one grid point.
    pub fn objective(&self, epsilon: f64, gamma: f64, packet_length: u32) -> f64 {
        let length = packet_length as f64;
        let quantization = self.q_max.powi(2) * 2f64.powf(2.0 - 2.0 * length * self.capacity);
        48.0 * (1.0 + gamma) * (self.sparse_energy() + quantization) / epsilon.powi(2) * length * (self.n as f64).ln()
    }

    /// Mean-error bound of a clipped decoder with accuracy `epsilon` and
    /// failure probability `n^-gamma`.
    pub fn clipped_distortion(&self, epsilon: f64, gamma: f64) -> f64 {
        let failure = (self.n as f64).powf(-gamma);
        epsilon * (1.0 - failure) + 2.0 * self.q_max * failure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub epsilons: Vec<f64>,
    pub gammas: Vec<f64>,
    pub packet_lengths: Vec<u32>,
}

impl SearchGrid {
    /// 200 log-spaced accuracies strictly inside `(1e-3 D0, D0)`,
    /// `gamma in {0.25, 0.5, 1, 2, 4}` and `L' in 1..=32`. When the
    /// closed-form point is defined its accuracy `D0 - 2 q_max / n` is added
    /// too, so the grid minimum never exceeds the closed form.
    pub fn default_for(inputs: &LoadBoundInputs) -> Self {
        let d0 = inputs.target_distortion;
        let mut epsilons: Vec<f64> = (1..=200)
            .map(|i| d0 * 10f64.powf(-3.0 + 3.0 * i as f64 / 201.0))
            .collect();
        let closed_form = d0 - inputs.clipping_floor();
        if closed_form > 0.0 {
            epsilons.push(closed_form);
        }
        Self {
            epsilons,
            gammas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            packet_lengths: (1..=32).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty() || self.gammas.is_empty() || self.packet_lengths.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LoadBound {
    Feasible {
        load: f64,
        epsilon: f64,
        gamma: f64,
        packet_length: u32,
    },
    Infeasible,
}

impl LoadBound {
    pub fn load(&self) -> Option<f64> {
        match self {
            LoadBound::Feasible { load, .. } => Some(*load),
            LoadBound::Infeasible => None,
        }
    }
}

/// Grid minimum of the constrained load program. Ties keep the first grid
/// point in (epsilon, gamma, L') order.
pub fn qnc_load_bound(inputs: &LoadBoundInputs, grid: &SearchGrid) -> Result<LoadBound> {
    inputs.check()?;
    if grid.is_empty() {
        return Err(Error::invalid("load search grid is empty"));
    }
    let mut best = LoadBound::Infeasible;
    for &epsilon in &grid.epsilons {
        if !(epsilon > 0.0) {
            continue;
        }
        for &gamma in &grid.gammas {
            if !(gamma > 0.0) || inputs.clipped_distortion(epsilon, gamma) > inputs.target_distortion {
                continue;
            }
            for &packet_length in &grid.packet_lengths {
                if packet_length == 0 {
                    continue;
                }
                let load = inputs.objective(epsilon, gamma, packet_length);
                if best.load().map_or(true, |current| load < current) {
                    best = LoadBound::Feasible {
                        load,
                        epsilon,
                        gamma,
                        packet_length,
                    };
                }
            }
        }
    }
    Ok(best)
}

/// `96 ((kappa^2 - 1) k q'^2 + q_max^2 2^(2 - 2 C0)) / (D0 - 2 q_max / n)^2 * ln n`.
pub fn qnc_load_corollary(inputs: &LoadBoundInputs) -> Result<f64> {
    inputs.check()?;
    let margin = inputs.target_distortion - inputs.clipping_floor();
    if !(margin > 0.0) {
        return Err(Error::invalid(format!(
            "target distortion {} must exceed 2 q_max / n = {}",
            inputs.target_distortion,
            inputs.clipping_floor()
        )));
    }
    let quantization = inputs.q_max.powi(2) * 2f64.powf(2.0 - 2.0 * inputs.capacity);
    Ok(96.0 * (inputs.sparse_energy() + quantization) / margin.powi(2) * (inputs.n as f64).ln())
}

/// How `kappa^2` is chosen for each row of a comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum KappaMode {
    /// Same `kappa^2` for every `n`.
    Fixed { kappa_sq: f64 },
    /// `kappa^2 = 2 n^2 / (n + |E|)` with `|E| = edges_per_node * n`.
    FromGraph { edges_per_node: f64 },
}

impl KappaMode {
    pub fn kappa_sq(&self, n: usize) -> f64 {
        match *self {
            KappaMode::Fixed { kappa_sq } => kappa_sq,
            KappaMode::FromGraph { edges_per_node } => {
                let n = n as f64;
                2.0 * n * n / (n + edges_per_node * n)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadComparisonRow {
    pub n: usize,
    pub kappa_sq: f64,
    pub packet_length: u32,
    pub qpf_load: u64,
    pub qnc_bound: f64,
    /// `qnc_bound / qpf_load`.
    pub ratio: f64,
}

/// Loads of both schemes for every `n` in `sizes`. `shared.n` and
/// `shared.kappa_sq` are ignored in favor of the row's own values.
pub fn compare_loads(sizes: &[usize], shared: &LoadBoundInputs, kappa: KappaMode) -> Result<Vec<LoadComparisonRow>> {
    let packet_length = required_packet_length(shared.q_max, shared.target_distortion, shared.capacity)?;
    sizes
        .iter()
        .map(|&n| {
            let inputs = LoadBoundInputs {
                n,
                kappa_sq: kappa.kappa_sq(n),
                ..*shared
            };
            let qnc_bound = qnc_load_corollary(&inputs)?;
            let qpf = qpf_load(n as u64, packet_length as u64);
            Ok(LoadComparisonRow {
                n,
                kappa_sq: inputs.kappa_sq,
                packet_length,
                qpf_load: qpf,
                qnc_bound,
                ratio: qnc_bound / qpf as f64,
            })
        })
        .collect()
}

pub fn ratios_strictly_decreasing(rows: &[LoadComparisonRow]) -> bool {
    rows.windows(2).all(|w| w[1].ratio < w[0].ratio)
}

/// CSV table `n,kappa_sq,packet_length,qpf_load,qnc_bound,ratio`.
pub fn comparison_csv(rows: &[LoadComparisonRow]) -> String {
    let mut out = String::from("n,kappa_sq,packet_length,qpf_load,qnc_bound,ratio\n");
    for row in rows {
        out.push_str(&format!(
            "{},{:.16e},{},{},{:.16e},{:.16e}\n",
            row.n, row.kappa_sq, row.packet_length, row.qpf_load, row.qnc_bound, row.ratio
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> LoadBoundInputs {
        LoadBoundInputs {
            n: 100,
            k: 5,
            q_max: 1.0,
            q_prime_max: 1.0,
            kappa_sq: 4.0,
            capacity: 1.0,
            target_distortion: 0.3,
        }
    }

    // Direct evaluation of the closed form, written out independently.
    fn closed_form(i: &LoadBoundInputs) -> f64 {
        let numerator = (i.kappa_sq - 1.0) * i.k as f64 * i.q_prime_max * i.q_prime_max
            + i.q_max * i.q_max * 2f64.powf(2.0 - 2.0 * i.capacity);
        let margin = i.target_distortion - 2.0 * i.q_max / i.n as f64;
        96.0 * numerator / (margin * margin) * (i.n as f64).ln()
    }

    #[test]
    fn closed_form_reference_value() {
        let value = qnc_load_corollary(&reference()).unwrap();
        // 96 * 16 / 0.28^2 * ln 100 = 19591.837 * 4.6051702 = 90223.742
        assert!((value - 90_223.742).abs() < 1e-3, "{value}");
        assert_eq!(value, closed_form(&reference()));
    }

    #[test]
    fn closed_form_size_ratio_includes_margin_drift() {
        let small = qnc_load_corollary(&reference()).unwrap();
        let large = qnc_load_corollary(&LoadBoundInputs {
            n: 1_000_000,
            ..reference()
        })
        .unwrap();
        // ln ratio is 3, times the squared margin ratio (0.28 / 0.299998)^2.
        let expected = 3.0 * (0.28_f64 / (0.3 - 2e-6)).powi(2);
        assert!((large / small - expected).abs() < 1e-9, "{}", large / small);
    }

    #[test]
    fn closed_form_infinite_capacity_limit() {
        let value = qnc_load_corollary(&LoadBoundInputs {
            capacity: 60.0,
            ..reference()
        })
        .unwrap();
        let limit = 96.0 * 15.0 / 0.28f64.powi(2) * 100f64.ln();
        assert!((value - limit).abs() < 1e-9 * limit);
    }

    #[test]
    fn closed_form_rejects_unreachable_target() {
        let err = qnc_load_corollary(&LoadBoundInputs {
            target_distortion: 0.02,
            ..reference()
        })
        .unwrap_err();
        assert!(err.to_string().contains("0.02"));
    }

    #[test]
    fn grid_minimum_is_below_closed_form() {
        let inputs = reference();
        let bound = qnc_load_bound(&inputs, &SearchGrid::default_for(&inputs)).unwrap();
        let closed_form = qnc_load_corollary(&inputs).unwrap();
        assert!(bound.load().unwrap() <= closed_form);
        assert!(bound.load().unwrap() <= 90_225.0);
    }

    #[test]
    fn closed_form_point_is_feasible() {
        let inputs = reference();
        let epsilon = inputs.target_distortion - inputs.clipping_floor();
        assert!(inputs.clipped_distortion(epsilon, 1.0) <= inputs.target_distortion);
        let objective = inputs.objective(epsilon, 1.0, 1);
        assert!((objective - qnc_load_corollary(&inputs).unwrap()).abs() < 1e-9 * objective);
    }

    #[test]
    fn unreachable_target_is_infeasible_not_an_error() {
        let inputs = LoadBoundInputs {
            target_distortion: 0.015,
            ..reference()
        };
        let grid = SearchGrid {
            epsilons: vec![0.001, 0.005, 0.01],
            gammas: vec![0.5, 1.0],
            packet_lengths: vec![1, 2],
        };
        assert_eq!(qnc_load_bound(&inputs, &grid).unwrap(), LoadBound::Infeasible);
    }

    #[test]
    fn monotone_in_problem_difficulty() {
        let base = reference();
        let grid = SearchGrid {
            epsilons: (1..=60).map(|i| i as f64 * 0.01).collect(),
            gammas: vec![0.5, 1.0, 2.0],
            packet_lengths: (1..=8).collect(),
        };
        let value = |i: LoadBoundInputs| {
            (
                qnc_load_corollary(&i).unwrap(),
                qnc_load_bound(&i, &grid).unwrap().load().unwrap(),
            )
        };
        let (c0, t0) = value(base);
        for harder in [
            LoadBoundInputs { k: 6, ..base },
            LoadBoundInputs {
                q_prime_max: 1.2,
                ..base
            },
            LoadBoundInputs { kappa_sq: 5.0, ..base },
        ] {
            let (c, t) = value(harder);
            assert!(c >= c0 && t >= t0);
        }
        let (c, t) = value(LoadBoundInputs {
            target_distortion: 0.4,
            ..base
        });
        assert!(c <= c0 && t <= t0);
    }

    #[test]
    fn comparison_rows_match_calculators() {
        let rows = compare_loads(&[100], &reference(), KappaMode::Fixed { kappa_sq: 4.0 }).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].qnc_bound, qnc_load_corollary(&reference()).unwrap());
        let l = required_packet_length(1.0, 0.3, 1.0).unwrap();
        assert_eq!(rows[0].qpf_load, qpf_load(100, l as u64));
    }

    #[test]
    fn comparison_scaling() {
        let sizes = [100, 1_000, 10_000, 100_000, 1_000_000];
        let shared = reference();
        let rows = compare_loads(&sizes, &shared, KappaMode::Fixed { kappa_sq: 4.0 }).unwrap();
        // Once the margin drift is divided out, the bound is exactly proportional to ln n.
        let normalized: Vec<f64> = rows
            .iter()
            .map(|r| r.qnc_bound / (r.n as f64).ln() * (shared.target_distortion - 2.0 / r.n as f64).powi(2))
            .collect();
        for v in &normalized {
            assert!((v - normalized[0]).abs() < 1e-9 * normalized[0]);
        }
        let per_node = rows[0].qpf_load / 99;
        for r in &rows {
            assert_eq!(r.qpf_load, per_node * (r.n as u64 - 1));
        }
        assert!(ratios_strictly_decreasing(&rows));
    }

    #[test]
    fn graph_kappa_grows_with_size() {
        let mode = KappaMode::FromGraph { edges_per_node: 4.0 };
        assert_eq!(mode.kappa_sq(10), 4.0);
        assert!(mode.kappa_sq(1000) > mode.kappa_sq(100));
    }
}
