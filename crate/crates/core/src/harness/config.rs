use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decode::{choose_partition, LogBase, Partition, SizingInputs, ThresholdSchedule};
use crate::error::{Error, Result};
use crate::qnc::{kappa_of, Forwarding};
use crate::qpf::required_packet_length;
use crate::quantize::{QuantizerSpec, Reconstruction};
use crate::sources::{CoefficientLaw, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Qpf,
    QncNetwork,
    QncIdealized,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Qpf => "qpf",
            Scheme::QncNetwork => "qnc-network",
            Scheme::QncIdealized => "qnc-idealized",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qpf" => Ok(Scheme::Qpf),
            "qnc-network" => Ok(Scheme::QncNetwork),
            "qnc-idealized" => Ok(Scheme::QncIdealized),
            other => Err(Error::invalid(format!(
                "unknown scheme `{other}` (expected qpf, qnc-network or qnc-idealized)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderChoice {
    #[default]
    MedianOfMeans,
    SoftThreshold,
}

impl FromStr for DecoderChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median-of-means" | "median" => Ok(DecoderChoice::MedianOfMeans),
            "soft-threshold" | "ist" => Ok(DecoderChoice::SoftThreshold),
            other => Err(Error::invalid(format!("unknown decoder `{other}`"))),
        }
    }
}

fn default_capacity() -> f64 {
    1.0
}

fn default_q_max() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub nodes: usize,
    pub edges: usize,
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    /// 1-based; defaults to the last node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway: Option<usize>,
    /// Redraw the graph until every node has a route to the gateway.
    #[serde(default)]
    pub require_connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    pub sparsity: usize,
    #[serde(default = "default_q_max")]
    pub q_max: f64,
    #[serde(default = "default_transform")]
    pub transform: TransformKind,
    #[serde(default)]
    pub transform_seed: u64,
    #[serde(default)]
    pub coefficients: CoefficientLaw,
}

fn default_transform() -> TransformKind {
    TransformKind::DiscreteCosine
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerParams {
    /// Channel uses per packet. When absent it is derived from the target
    /// distortion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_length: Option<u32>,
    #[serde(default)]
    pub reconstruction: Reconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IstSettings {
    pub schedule: ThresholdSchedule,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IstSettings {
    fn default() -> Self {
        let defaults = crate::decode::IstParams::default();
        Self {
            schedule: defaults.schedule,
            max_iters: defaults.max_iters,
            tol: defaults.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QncParams {
    #[serde(default)]
    pub decoder: DecoderChoice,
    /// Coefficient magnitude; defaults to `kappa_of(nodes, edges)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<usize>,
    /// Row count of the idealized matrix when not derived from `m1 * m2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_true")]
    pub strict_median: bool,
    /// Coefficient bound used for block sizing; see [`ExperimentConfig::q_prime_bound`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_prime_max: Option<f64>,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(default)]
    pub forwarding: Forwarding,
    #[serde(default)]
    pub ist: IstSettings,
}

impl Default for QncParams {
    fn default() -> Self {
        Self {
            decoder: DecoderChoice::default(),
            kappa: None,
            m1: None,
            m2: None,
            measurements: None,
            epsilon: default_epsilon(),
            gamma: default_gamma(),
            strict_median: true,
            q_prime_max: None,
            log_base: LogBase::default(),
            forwarding: Forwarding::default(),
            ist: IstSettings::default(),
        }
    }
}

/// One experiment: scheme, network, sources, quantizer, coding and decoder
/// settings, trial count and master seed. The TOML form is the structured
/// text representation accepted by `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads for trials; 0 uses the global pool.
    #[serde(default)]
    pub workers: usize,
    /// Record wall-clock time. Disable for byte-identical output.
    #[serde(default = "default_true")]
    pub timing: bool,
    /// `D0`, used to size packets and by `--assert`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_distortion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub network: NetworkParams,
    pub source: SourceParams,
    #[serde(default)]
    pub quantizer: QuantizerParams,
    #[serde(default)]
    pub qnc: QncParams,
}

impl ExperimentConfig {
    /// A small, valid configuration to start from.
    pub fn example(scheme: Scheme) -> Self {
        Self {
            scheme,
            trials: 100,
            seed: 1,
            workers: 0,
            timing: true,
            target_distortion: None,
            output: None,
            network: NetworkParams {
                nodes: 20,
                edges: 80,
                capacity: 1.0,
                gateway: None,
                require_connected: false,
            },
            source: SourceParams {
                sparsity: 2,
                q_max: 1.0,
                transform: TransformKind::DiscreteCosine,
                transform_seed: 0,
                coefficients: CoefficientLaw::Uniform,
            },
            quantizer: QuantizerParams {
                packet_length: Some(8),
                reconstruction: Reconstruction::LowerEdge,
            },
            qnc: QncParams::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// 0-based gateway.
    pub fn gateway(&self) -> usize {
        self.network
            .gateway
            .map_or(self.network.nodes.saturating_sub(1), |g| g.saturating_sub(1))
    }

    pub fn packet_length(&self) -> Result<u32> {
        match (self.quantizer.packet_length, self.target_distortion) {
            (Some(length), _) => Ok(length),
            (None, Some(target)) => required_packet_length(self.source.q_max, target, self.network.capacity),
            (None, None) => Err(Error::invalid(
                "set quantizer.packet_length or target_distortion to size packets",
            )),
        }
    }

    pub fn quantizer_spec(&self) -> Result<QuantizerSpec> {
        Ok(
            QuantizerSpec::new(self.source.q_max, self.packet_length()?, self.network.capacity)?
                .with_reconstruction(self.quantizer.reconstruction),
        )
    }

    pub fn kappa(&self) -> f64 {
        self.qnc
            .kappa
            .unwrap_or_else(|| kappa_of(self.network.nodes, self.network.edges))
    }

    /// Coefficient bound used for block sizing: the configured value, else
    /// `q_max` for the identity transform (where `S = X`), else the
    /// worst case `sqrt(n) q_max` allowed by norm preservation.
    pub fn q_prime_bound(&self) -> f64 {
        self.qnc.q_prime_max.unwrap_or(match self.source.transform {
            TransformKind::Identity => self.source.q_max,
            _ => (self.network.nodes as f64).sqrt() * self.source.q_max,
        })
    }

    pub fn sizing_inputs(&self) -> Result<SizingInputs> {
        let kappa = self.kappa();
        Ok(SizingInputs {
            n: self.network.nodes,
            k: self.source.sparsity,
            q_prime_max: self.q_prime_bound(),
            kappa_sq: kappa * kappa,
            delta_q: self.quantizer_spec()?.step(),
            epsilon: self.qnc.epsilon,
            gamma: self.qnc.gamma,
            log_base: self.qnc.log_base,
        })
    }

    /// Block layout of the median decoder: explicit `m1`/`m2` when both are
    /// set, otherwise sized from the accuracy and confidence targets.
    pub fn partition(&self) -> Result<Partition> {
        match (self.qnc.m1, self.qnc.m2) {
            (Some(m1), Some(m2)) => Ok(Partition { m1, m2 }),
            (None, None) => choose_partition(&self.sizing_inputs()?, self.qnc.strict_median),
            _ => Err(Error::invalid("set both qnc.m1 and qnc.m2, or neither")),
        }
    }

    /// Rows of the idealized matrix.
    pub fn idealized_rows(&self) -> Result<usize> {
        match (self.qnc.measurements, self.qnc.decoder) {
            (Some(m), _) => Ok(m),
            (None, DecoderChoice::MedianOfMeans) => Ok(self.partition()?.rows()),
            (None, DecoderChoice::SoftThreshold) => Err(Error::invalid(
                "the soft-threshold decoder needs qnc.measurements in idealized mode",
            )),
        }
    }

    /// Check every precondition the trial pipeline relies on.
    pub fn validate(&self) -> Result<()> {
        let n = self.network.nodes;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if n < 2 {
            return Err(Error::invalid(format!("a network needs at least 2 nodes, got {n}")));
        }
        if let Some(g) = self.network.gateway {
            if g == 0 || g > n {
                return Err(Error::invalid(format!("gateway {g} is not in 1..={n}")));
            }
        }
        if !(self.network.capacity.is_finite() && self.network.capacity > 0.0) {
            return Err(Error::invalid("capacity must be positive"));
        }
        if self.source.sparsity > n {
            return Err(Error::invalid(format!(
                "sparsity {} exceeds the node count {n}",
                self.source.sparsity
            )));
        }
        if !(self.source.q_max.is_finite() && self.source.q_max > 0.0) {
            return Err(Error::invalid("q_max must be positive"));
        }
        if let Some(d0) = self.target_distortion {
            if !(d0 > 0.0) {
                return Err(Error::invalid("target distortion must be positive"));
            }
        }
        self.quantizer_spec()?;

        if self.scheme == Scheme::Qpf {
            return Ok(());
        }
        let kappa = self.kappa();
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::invalid("kappa must be positive"));
        }
        if !(self.qnc.epsilon > 0.0 && self.qnc.gamma > 0.0) {
            return Err(Error::invalid("qnc.epsilon and qnc.gamma must be positive"));
        }
        match self.qnc.forwarding {
            Forwarding::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                return Err(Error::invalid(format!("forwarding probability {p} is not in [0, 1]")));
            }
            Forwarding::Exact { m } if m > n => {
                return Err(Error::invalid(format!("cannot forward {m} packets from {n} nodes")));
            }
            _ => {}
        }
        if self.qnc.decoder == DecoderChoice::MedianOfMeans {
            let partition = self.partition()?;
            if partition.m1 == 0 || partition.m2 == 0 {
                return Err(Error::invalid("m1 and m2 must be positive"));
            }
            if self.qnc.strict_median && partition.m2 % 2 == 0 {
                return Err(Error::invalid(format!(
                    "strict-median mode needs an odd m2, got {}",
                    partition.m2
                )));
            }
            if self.scheme == Scheme::QncNetwork && partition.rows() > n {
                return Err(Error::invalid(format!(
                    "one-step coding delivers at most {n} packets but m1 * m2 = {}",
                    partition.rows()
                )));
            }
        }
        if self.scheme == Scheme::QncIdealized {
            if kappa < 1.0 {
                return Err(Error::invalid(format!(
                    "idealized entries need kappa >= 1, got {kappa}"
                )));
            }
            self.idealized_rows()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut config = ExperimentConfig::example(Scheme::QncIdealized);
        config.target_distortion = Some(0.1 + 0.2);
        config.qnc.kappa = Some(2f64.sqrt());
        config.qnc.forwarding = Forwarding::Exact { m: 7 };
        config.output = Some(PathBuf::from("out/run.csv"));
        let text = config.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), config);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let config = ExperimentConfig::from_toml_str(
            r#"
            scheme = "qpf"
            trials = 10
            seed = 3
            target_distortion = 0.015625
            [network]
            nodes = 50
            edges = 400
            [source]
            sparsity = 5
            "#,
        )
        .unwrap();
        assert_eq!(config.gateway(), 49);
        assert_eq!(config.packet_length().unwrap(), 6);
        assert!(config.timing);
        config.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("scheme = \"qpf\"\ntrials = 1\nseed = 0\nbogus = 1\n").unwrap_err();
        assert!(err.is_configuration());
    }

    #[test]
    fn worked_partition_from_targets() {
        let mut config = ExperimentConfig::example(Scheme::QncIdealized);
        config.source.transform = TransformKind::Identity;
        config.quantizer.packet_length = Some(1);
        config.qnc.kappa = Some(2f64.sqrt());
        assert_eq!(config.partition().unwrap(), Partition { m1: 49, m2: 55 });
        assert_eq!(config.idealized_rows().unwrap(), 2695);
    }

    #[test]
    fn validation_catches_bad_settings() {
        let mut config = ExperimentConfig::example(Scheme::Qpf);
        config.source.sparsity = 21;
        assert!(config.validate().is_err());

        let mut config = ExperimentConfig::example(Scheme::QncNetwork);
        assert!(config.validate().is_err(), "derived partition is far larger than n");
        config.qnc.m1 = Some(4);
        config.qnc.m2 = Some(5);
        config.validate().unwrap();
        config.qnc.m2 = Some(4);
        assert!(config.validate().is_err(), "even m2 in strict mode");

        let mut config = ExperimentConfig::example(Scheme::QncIdealized);
        config.qnc.kappa = Some(0.5);
        assert!(config.validate().is_err());
    }
}
