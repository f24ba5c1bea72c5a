//! Binary spike trains over a fixed time window.

use crate::error::{Error, Result};
use crate::tensor::{fmt_shape, numel, Shape, Tensor};

/// `T` binary planes over a rank-4 shape, stored time-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTrain {
    window: usize,
    shape: Shape,
    bits: Vec<bool>,
}

impl SpikeTrain {
    pub fn zeros(window: usize, shape: Shape) -> Self {
        assert!(window >= 1, "spike window must be positive");
        Self {
            window,
            shape,
            bits: vec![false; window * numel(&shape)],
        }
    }

    /// Builds a train from time-major bits (`window` planes of `numel(shape)`).
    pub fn from_bits(window: usize, shape: Shape, bits: Vec<bool>) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter(
                "spike window must be positive".into(),
            ));
        }
        if bits.len() != window * numel(&shape) {
            return Err(Error::shape(
                "spike train bits",
                window * numel(&shape),
                bits.len(),
            ));
        }
        Ok(Self {
            window,
            shape,
            bits,
        })
    }

    /// Builds a train from a list of planes.
    pub fn from_planes(shape: Shape, planes: Vec<Vec<bool>>) -> Result<Self> {
        let window = planes.len();
        let size = numel(&shape);
        let mut bits = Vec::with_capacity(window * size);
        for p in planes {
            if p.len() != size {
                return Err(Error::shape("spike plane", size, p.len()));
            }
            bits.extend(p);
        }
        Self::from_bits(window, shape, bits)
    }

    /// Single-element train from a 0/1 sequence, mostly for tests and traces.
    pub fn from_sequence(seq: &[u8]) -> Result<Self> {
        let mut bits = Vec::with_capacity(seq.len());
        for (i, &b) in seq.iter().enumerate() {
            match b {
                0 => bits.push(false),
                1 => bits.push(true),
                _ => {
                    return Err(Error::OutOfDomain {
                        value: b as f64,
                        index: i,
                        domain: "{0, 1}",
                    })
                }
            }
        }
        Self::from_bits(seq.len(), [1, 1, 1, 1], bits)
    }

    /// Evenly distributed train with the given per-element counts: element
    /// `i` has `floor(t * count_i / T)` spikes after `t` steps.
    pub fn from_counts_even(window: usize, shape: Shape, counts: &[u32]) -> Result<Self> {
        let size = numel(&shape);
        if counts.len() != size {
            return Err(Error::shape("spike counts", size, counts.len()));
        }
        if let Some(i) = counts.iter().position(|&c| c as usize > window) {
            return Err(Error::OutOfDomain {
                value: counts[i] as f64,
                index: i,
                domain: "[0, T] spike counts",
            });
        }
        let mut train = Self::zeros(window, shape);
        // integer IF: membrane in units of 1/T, threshold T
        let mut membrane = vec![0usize; size];
        for t in 0..window {
            let plane = &mut train.bits[t * size..(t + 1) * size];
            for ((u, &c), bit) in membrane.iter_mut().zip(counts).zip(plane.iter_mut()) {
                *u += c as usize;
                if *u >= window {
                    *u -= window;
                    *bit = true;
                }
            }
        }
        Ok(train)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Elements per plane.
    pub fn plane_len(&self) -> usize {
        numel(&self.shape)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn plane(&self, t: usize) -> &[bool] {
        let size = self.plane_len();
        &self.bits[t * size..(t + 1) * size]
    }

    pub fn plane_mut(&mut self, t: usize) -> &mut [bool] {
        let size = self.plane_len();
        &mut self.bits[t * size..(t + 1) * size]
    }

    pub fn get(&self, t: usize, element: usize) -> bool {
        self.bits[t * self.plane_len() + element]
    }

    pub fn set(&mut self, t: usize, element: usize, value: bool) {
        let size = self.plane_len();
        self.bits[t * size + element] = value;
    }

    /// The temporal sequence of one element.
    pub fn sequence(&self, element: usize) -> Vec<u8> {
        (0..self.window)
            .map(|t| self.get(t, element) as u8)
            .collect()
    }

    /// Plane `t` as a 0/1 tensor.
    pub fn plane_tensor(&self, t: usize) -> Tensor {
        let data = self
            .plane(t)
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Tensor::new(self.shape, data).expect("plane data is finite and sized")
    }

    /// Per-element spike counts.
    pub fn counts(&self) -> Vec<u32> {
        let size = self.plane_len();
        let mut counts = vec![0u32; size];
        for t in 0..self.window {
            for (c, &b) in counts.iter_mut().zip(self.plane(t)) {
                *c += b as u32;
            }
        }
        counts
    }

    pub fn count_tensor(&self) -> Tensor {
        Tensor::new(
            self.shape,
            self.counts().into_iter().map(f64::from).collect(),
        )
        .expect("counts are finite")
    }

    /// Total number of set bits.
    pub fn fired(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Total number of spike positions (`T * numel(shape)`).
    pub fn slots(&self) -> u64 {
        self.bits.len() as u64
    }

    /// The first `steps` planes.
    pub fn truncate(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps > self.window {
            return Err(Error::InvalidParameter(format!(
                "truncation to {steps} steps outside [1, {}]",
                self.window
            )));
        }
        Self::from_bits(
            steps,
            self.shape,
            self.bits[..steps * self.plane_len()].to_vec(),
        )
    }

    /// Reorders every element's sequence by the same time permutation:
    /// new plane `t` is old plane `perm[t]`.
    pub fn permute_time(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.window];
        if perm.len() != self.window
            || perm
                .iter()
                .any(|&p| p >= self.window || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidParameter(format!(
                "not a permutation of 0..{}",
                self.window
            )));
        }
        let planes = perm.iter().map(|&p| self.plane(p).to_vec()).collect();
        Self::from_planes(self.shape, planes)
    }

    /// Stacks trains with equal window along the batch dimension.
    pub fn concat_batch(parts: &[SpikeTrain]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot concatenate zero trains".into()))?;
        let mut shape = first.shape;
        shape[0] = parts.iter().map(|p| p.shape[0]).sum();
        for p in parts {
            if p.window != first.window || p.shape[1..] != first.shape[1..] {
                return Err(Error::shape(
                    "spike batch concatenation",
                    format!("T={} {}", first.window, fmt_shape(&first.shape)),
                    format!("T={} {}", p.window, fmt_shape(&p.shape)),
                ));
            }
        }
        let mut bits = Vec::with_capacity(first.window * numel(&shape));
        for t in 0..first.window {
            for p in parts {
                bits.extend_from_slice(p.plane(t));
            }
        }
        Self::from_bits(first.window, shape, bits)
    }
}
