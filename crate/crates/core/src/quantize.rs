//! Uniform scalar quantizer on `[-q_max, q_max]`.
//!
//! A packet of `L` channel uses over a link carrying `C0` bits per use
//! indexes `floor(2^(L*C0))` cells of width
//! `delta_q = 2 q_max / floor(2^(L*C0))`.
//!
//! The default reconstruction is the lower edge of the cell, which gives a
//! worst-case error of `delta_q` and a mean error of `delta_q / 2` for
//! uniform inputs. [`Reconstruction::Midpoint`] halves both figures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    #[default]
    LowerEdge,
    Midpoint,
}

/// Step size for `L` channel uses at `C0` bits per use.
pub fn step_size(q_max: f64, packet_length: u32, capacity: f64) -> Result<f64> {
    Ok(2.0 * q_max / cell_count(q_max, packet_length, capacity)?)
}

fn cell_count(q_max: f64, packet_length: u32, capacity: f64) -> Result<f64> {
    if !(q_max.is_finite() && q_max > 0.0) {
        return Err(Error::invalid(format!(
            "quantizer range q_max must be positive, got {q_max}"
        )));
    }
    let bits = packet_length as f64 * capacity;
    if !(bits >= 1.0) {
        return Err(Error::invalid(format!(
            "a packet of L = {packet_length} uses at C0 = {capacity} bits/use carries {bits} bits; at least 1 is needed"
        )));
    }
    let cells = 2f64.powf(bits).floor();
    if !cells.is_finite() {
        return Err(Error::invalid(format!("{bits} bits per packet is out of range")));
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub value: f64,
    /// The input lay outside `[-q_max, q_max]` and was clamped first.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    q_max: f64,
    packet_length: u32,
    capacity: f64,
    cells: f64,
    step: f64,
    reconstruction: Reconstruction,
}

impl QuantizerSpec {
    pub fn new(q_max: f64, packet_length: u32, capacity: f64) -> Result<Self> {
        let cells = cell_count(q_max, packet_length, capacity)?;
        Ok(Self {
            q_max,
            packet_length,
            capacity,
            cells,
            step: 2.0 * q_max / cells,
            reconstruction: Reconstruction::LowerEdge,
        })
    }

    pub fn with_reconstruction(mut self, reconstruction: Reconstruction) -> Self {
        self.reconstruction = reconstruction;
        self
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn packet_length(&self) -> u32 {
        self.packet_length
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn cells(&self) -> f64 {
        self.cells
    }

    /// `delta_q`.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn reconstruction(&self) -> Reconstruction {
        self.reconstruction
    }

    fn edge(&self, index: f64) -> f64 {
        -self.q_max + index * self.step
    }

    /// Cell index of an in-range value.
    ///
    /// The estimate from division is corrected against the same `edge`
    /// expression used for reconstruction, so `edge(i) <= x < edge(i + 1)`
    /// holds in floating point. That makes the quantizer idempotent and
    /// monotone without tolerance fudging.
    fn cell_of(&self, x: f64) -> f64 {
        let last = self.cells - 1.0;
        let mut i = ((x + self.q_max) / self.step).floor().clamp(0.0, last);
        if i > 0.0 && self.edge(i) > x {
            i -= 1.0;
        }
        if i < last && self.edge(i + 1.0) <= x {
            i += 1.0;
        }
        i
    }

    pub fn quantize(&self, x: f64) -> Quantized {
        let clamped = !(-self.q_max..=self.q_max).contains(&x);
        let x = x.clamp(-self.q_max, self.q_max);
        let edge = self.edge(self.cell_of(x));
        let value = match self.reconstruction {
            Reconstruction::LowerEdge => edge,
            Reconstruction::Midpoint => edge + 0.5 * self.step,
        };
        Quantized { value, clamped }
    }

    /// Reconstruction value only, ignoring the clamp flag.
    pub fn apply(&self, x: f64) -> f64 {
        self.quantize(x).value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four_cells() -> QuantizerSpec {
        // q_max = 1, 2 bits: 4 cells of width 0.5.
        QuantizerSpec::new(1.0, 2, 1.0).unwrap()
    }

    #[test]
    fn step_size_examples() {
        assert_eq!(step_size(1.0, 8, 1.0).unwrap(), 0.0078125);
        assert_eq!(step_size(1.0, 1, 1.0).unwrap(), 1.0);
        // floor(2^1.5) = 2
        assert_eq!(step_size(2.0, 3, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn fewer_than_two_levels_is_rejected() {
        assert!(matches!(step_size(1.0, 1, 0.5), Err(Error::InvalidConfiguration(_))));
        assert!(matches!(step_size(1.0, 0, 4.0), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn lower_edge_examples() {
        let q = four_cells();
        assert_eq!(q.step(), 0.5);
        assert_eq!(q.apply(-1.0), -1.0);
        assert_eq!(q.apply(0.3), 0.0);
        assert_eq!(q.apply(0.999), 0.5);
        // Top boundary belongs to the last cell.
        assert_eq!(q.apply(1.0), 0.5);
    }

    #[test]
    fn out_of_range_is_clamped_and_flagged() {
        let q = four_cells();
        assert_eq!(
            q.quantize(3.0),
            Quantized {
                value: 0.5,
                clamped: true
            }
        );
        assert_eq!(
            q.quantize(-3.0),
            Quantized {
                value: -1.0,
                clamped: true
            }
        );
        assert!(!q.quantize(0.2).clamped);
    }

    #[test]
    fn midpoint_variant_halves_the_error() {
        let q = four_cells().with_reconstruction(Reconstruction::Midpoint);
        assert_eq!(q.apply(0.3), 0.25);
        assert_eq!(q.apply(-1.0), -0.75);
    }

    #[test]
    fn zero_is_a_cell_edge_for_even_cell_counts() {
        for bits in 1..12 {
            assert_eq!(QuantizerSpec::new(1.7, bits, 1.0).unwrap().apply(0.0), 0.0);
        }
    }

    proptest! {
        #[test]
        fn error_is_bounded_by_step(
            x in -1.0f64..=1.0,
            q_max in 0.1f64..10.0,
            length in 1u32..12,
            capacity in 1.0f64..2.5,
        ) {
            let q = QuantizerSpec::new(q_max, length, capacity).unwrap();
            let x = x * q_max;
            let y = q.apply(x);
            prop_assert!((x - y).abs() <= q.step() * (1.0 + 1e-12));
            prop_assert!(y <= x);
            prop_assert!(y.abs() <= q_max);
        }

        #[test]
        fn quantizer_is_idempotent(x in -5.0f64..5.0, length in 1u32..10, capacity in 1.0f64..1.7) {
            let q = QuantizerSpec::new(5.0, length, capacity).unwrap();
            let y = q.apply(x);
            prop_assert_eq!(q.apply(y), y);
        }

        #[test]
        fn quantizer_is_monotone(a in -2.0f64..2.0, b in -2.0f64..2.0, length in 1u32..10) {
            let q = QuantizerSpec::new(1.3, length, 1.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(q.apply(lo) <= q.apply(hi));
        }
    }
}
