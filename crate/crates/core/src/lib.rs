/*!
Simulation and analysis of one-step quantized network coding for
gathering sparse sensor readings at a single gateway.

A run has four stages:

1. [`network`] draws a random directed multigraph with a gateway.
2. [`sources`] samples messages that are sparse in some orthonormal basis.
3. [`qnc`] mixes quantized messages at every node and builds the linear
   system seen by the gateway, while [`qpf`] is the plain quantize and
   forward baseline.
4. [`decode`] recovers the messages with a median-of-means estimator or
   iterative soft thresholding.

[`bounds`] evaluates the closed-form and grid-searched load bounds and
[`harness`] ties everything together into seeded Monte Carlo experiments.

```
use qnclab::harness::{run_trials, ExperimentConfig, Scheme};

let mut config = ExperimentConfig::example(Scheme::Qpf);
config.trials = 4;
config.network.require_connected = true;
let record = run_trials(&config)?;
assert!(record.distortion_max <= 2.0 / 256.0);
# Ok::<(), qnclab::Error>(())
```
*/

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod concordance;
pub mod decode;
mod error;
pub mod harness;
pub mod network;
pub mod qnc;
pub mod qpf;
pub mod quantize;
pub mod rng;
pub mod sources;

pub use error::{Error, Result};
