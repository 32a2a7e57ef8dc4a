//! Correlated sensor messages: bounded values that are exactly `k`-sparse
//! under an orthonormal transform.
//!
//! Messages are generated in the sparse domain. A support of size `k` is
//! drawn uniformly, the nonzero coefficients are drawn from a
//! [`CoefficientLaw`], the messages are synthesized as `X = phi * S`, and
//! finally the pair `(X, S)` is rescaled by one positive factor so that
//! `max_v |X_v| = q_max` exactly. The rescaling leaves the support, the sign
//! pattern and the relation `S = phi^T X` unchanged.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Identity,
    DiscreteCosine,
    RandomOrthonormal,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Identity => "identity",
            TransformKind::DiscreteCosine => "discrete-cosine",
            TransformKind::RandomOrthonormal => "random-orthonormal",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(TransformKind::Identity),
            "discrete-cosine" | "dct" => Ok(TransformKind::DiscreteCosine),
            "random-orthonormal" => Ok(TransformKind::RandomOrthonormal),
            other => Err(Error::invalid(format!("unknown transform kind `{other}`"))),
        }
    }
}

/// Describes a sparsifying basis without materializing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transform {
    pub kind: TransformKind,
    /// Only used by [`TransformKind::RandomOrthonormal`].
    pub seed: u64,
}

impl Transform {
    pub fn new(kind: TransformKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn identity() -> Self {
        Self::new(TransformKind::Identity, 0)
    }

    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        make_transform(n, self.kind, self.seed)
    }
}

/// Orthonormal `n x n` basis; columns are the basis vectors, so `X = phi * S`.
pub fn make_transform(n: usize, kind: TransformKind, seed: u64) -> DMatrix<f64> {
    match kind {
        TransformKind::Identity => DMatrix::identity(n, n),
        TransformKind::DiscreteCosine => dct_basis(n),
        TransformKind::RandomOrthonormal => random_orthonormal(n, seed),
    }
}

// Orthonormal DCT-II synthesis basis.
fn dct_basis(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        let scale = if j == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (std::f64::consts::PI * (2 * i + 1) as f64 * j as f64 / (2.0 * nf)).cos()
    })
}

fn random_orthonormal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let gaussian = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    // Fix column signs so the result does not depend on the QR sign convention.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// A materialized transform, cached so trials do not rebuild it.
#[derive(Debug, Clone)]
pub struct Basis {
    pub transform: Transform,
    pub matrix: DMatrix<f64>,
}

impl Basis {
    pub fn new(n: usize, transform: Transform) -> Self {
        Self {
            transform,
            matrix: transform.matrix(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Distribution of the nonzero transform coefficients before rescaling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientLaw {
    /// Uniform on `[-1, 1]`.
    #[default]
    Uniform,
    Gaussian,
    Rademacher,
}

impl FromStr for CoefficientLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(CoefficientLaw::Uniform),
            "gaussian" => Ok(CoefficientLaw::Gaussian),
            "rademacher" => Ok(CoefficientLaw::Rademacher),
            other => Err(Error::invalid(format!("unknown coefficient law `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageEnsemble {
    /// Messages `X_v`, one per node.
    pub x: Vec<f64>,
    /// Transform coefficients `S = phi^T X`.
    pub s: Vec<f64>,
    pub transform: Transform,
    pub k: usize,
    pub q_max: f64,
    /// Realized `max |S_j|`.
    pub q_prime_max: f64,
}

impl MessageEnsemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `k = 0` gives the all-zero ensemble.
    pub fn is_degenerate(&self) -> bool {
        self.k == 0
    }

    /// Write as CSV with `# key=value` header lines followed by `v,X_v,S_v`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# k={}", self.k)?;
        writeln!(writer, "# q_max={}", self.q_max)?;
        writeln!(writer, "# q_prime_max={}", self.q_prime_max)?;
        writeln!(writer, "# transform={}", self.transform.kind)?;
        writeln!(writer, "# transform_seed={}", self.transform.seed)?;
        writeln!(writer, "v,X_v,S_v")?;
        for (v, (x, s)) in self.x.iter().zip(&self.s).enumerate() {
            writeln!(writer, "{},{},{}", v + 1, x, s)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut k = None;
        let mut q_max = None;
        let mut q_prime_max = None;
        let mut kind = None;
        let mut seed = None;
        let mut x = Vec::new();
        let mut s = Vec::new();
        let mut seen_columns = false;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::parse(line_no, "header lines are `# key=value`"))?;
                let bad = |what: &str| Error::parse(line_no, format!("cannot parse {what} `{value}`"));
                match key.trim() {
                    "k" => k = Some(value.parse().map_err(|_| bad("k"))?),
                    "q_max" => q_max = Some(value.parse().map_err(|_| bad("q_max"))?),
                    "q_prime_max" => q_prime_max = Some(value.parse().map_err(|_| bad("q_prime_max"))?),
                    "transform" => kind = Some(value.parse::<TransformKind>()?),
                    "transform_seed" => seed = Some(value.parse().map_err(|_| bad("transform_seed"))?),
                    _ => {}
                }
                continue;
            }
            if !seen_columns {
                if line != "v,X_v,S_v" {
                    return Err(Error::parse(line_no, "expected column header `v,X_v,S_v`"));
                }
                seen_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(line_no, "rows are `v,X_v,S_v`"));
            }
            let v: usize = fields[0].parse().map_err(|_| Error::parse(line_no, "bad node id"))?;
            if v != x.len() + 1 {
                return Err(Error::parse(line_no, "rows must list nodes 1..n in order"));
            }
            x.push(fields[1].parse().map_err(|_| Error::parse(line_no, "bad X_v"))?);
            s.push(fields[2].parse().map_err(|_| Error::parse(line_no, "bad S_v"))?);
        }
        let missing = |what: &str| Error::parse(0, format!("missing `# {what}=` header"));
        Ok(Self {
            x,
            s,
            transform: Transform::new(kind.ok_or_else(|| missing("transform"))?, seed.unwrap_or(0)),
            k: k.ok_or_else(|| missing("k"))?,
            q_max: q_max.ok_or_else(|| missing("q_max"))?,
            q_prime_max: q_prime_max.ok_or_else(|| missing("q_prime_max"))?,
        })
    }
}

/// Draw one ensemble of `n = basis.dim()` messages.
pub fn sample_messages(k: usize, q_max: f64, basis: &Basis, law: CoefficientLaw, seed: u64) -> Result<MessageEnsemble> {
    let n = basis.dim();
    if k > n {
        return Err(Error::invalid(format!(
            "sparsity k = {k} exceeds the number of messages n = {n}"
        )));
    }
    if !(q_max.is_finite() && q_max > 0.0) {
        return Err(Error::invalid(format!("q_max must be positive, got {q_max}")));
    }
    if k == 0 {
        return Ok(MessageEnsemble {
            x: vec![0.0; n],
            s: vec![0.0; n],
            transform: basis.transform,
            k,
            q_max,
            q_prime_max: 0.0,
        });
    }

    let mut rng = rng_from_seed(seed);
    let mut s = DVector::zeros(n);
    for j in index::sample(&mut rng, n, k) {
        s[j] = loop {
            let c = match law {
                CoefficientLaw::Uniform => rng.random_range(-1.0..=1.0),
                CoefficientLaw::Gaussian => rng.sample::<f64, _>(StandardNormal),
                CoefficientLaw::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            if c != 0.0 {
                break c;
            }
        };
    }

    let x = &basis.matrix * &s;
    let (peak_index, peak) =
        x.iter().enumerate().fold(
            (0, 0.0_f64),
            |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best },
        );
    let scale = q_max / peak;
    let mut x: Vec<f64> = x.iter().map(|v| (v * scale).clamp(-q_max, q_max)).collect();
    x[peak_index] = q_max.copysign(x[peak_index]);
    let s: Vec<f64> = s.iter().map(|c| c * scale).collect();
    let q_prime_max = s.iter().fold(0.0_f64, |m, c| m.max(c.abs()));

    Ok(MessageEnsemble {
        x,
        s,
        transform: basis.transform,
        k,
        q_max,
        q_prime_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_orthonormality_defect(phi: &DMatrix<f64>) -> f64 {
        let n = phi.nrows();
        // Explicit triple loop so the check does not share code with nalgebra's product.
        let mut worst = 0.0_f64;
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|i| phi[(i, a)] * phi[(i, b)]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_transform_is_exact() {
        let phi = make_transform(5, TransformKind::Identity, 0);
        assert_eq!(phi.transpose() * &phi, DMatrix::identity(5, 5));
    }

    #[test]
    fn dct_is_orthonormal() {
        let phi = make_transform(8, TransformKind::DiscreteCosine, 0);
        assert!(max_orthonormality_defect(&phi) < 1e-10);
    }

    #[test]
    fn random_orthonormal_preserves_norms() {
        let phi = make_transform(16, TransformKind::RandomOrthonormal, 99);
        assert!(max_orthonormality_defect(&phi) < 1e-10);
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let x = DVector::from_fn(16, |_, _| rng.random_range(-3.0..3.0));
            assert!(((&phi * &x).norm() - x.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn random_orthonormal_is_seeded() {
        let a = make_transform(6, TransformKind::RandomOrthonormal, 1);
        let b = make_transform(6, TransformKind::RandomOrthonormal, 1);
        let c = make_transform(6, TransformKind::RandomOrthonormal, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn identity_ensemble_is_sparse_in_signal_domain() {
        let basis = Basis::new(20, Transform::identity());
        let e = sample_messages(4, 2.5, &basis, CoefficientLaw::Uniform, 8).unwrap();
        assert_eq!(e.x.iter().filter(|v| **v != 0.0).count(), 4);
        assert_eq!(e.x.iter().fold(0.0_f64, |m, v| m.max(v.abs())), 2.5);
        assert_eq!(e.x, e.s);
    }

    #[test]
    fn zero_sparsity_gives_zero_ensemble() {
        let basis = Basis::new(7, Transform::new(TransformKind::DiscreteCosine, 0));
        let e = sample_messages(0, 1.0, &basis, CoefficientLaw::Uniform, 1).unwrap();
        assert!(e.is_degenerate());
        assert!(e.x.iter().chain(&e.s).all(|v| *v == 0.0));
        assert_eq!(e.q_prime_max, 0.0);
    }

    #[test]
    fn too_many_nonzeros_is_rejected() {
        let basis = Basis::new(3, Transform::identity());
        assert!(matches!(
            sample_messages(4, 1.0, &basis, CoefficientLaw::Uniform, 0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn dct_round_trip_recovers_coefficients() {
        let basis = Basis::new(32, Transform::new(TransformKind::DiscreteCosine, 0));
        let e = sample_messages(4, 1.0, &basis, CoefficientLaw::Uniform, 77).unwrap();
        let s = basis.matrix.transpose() * DVector::from_vec(e.x.clone());
        let scale = e.q_prime_max.max(1.0);
        for (got, want) in s.iter().zip(&e.s) {
            assert!((got - want).abs() <= 1e-10 * scale);
        }
        assert_eq!(s.iter().filter(|v| v.abs() > 1e-10).count(), 4);
    }

    #[test]
    fn ensemble_csv_round_trip() {
        let basis = Basis::new(9, Transform::new(TransformKind::RandomOrthonormal, 3));
        let e = sample_messages(3, 0.75, &basis, CoefficientLaw::Gaussian, 21).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let back = MessageEnsemble::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, e);
    }
}
