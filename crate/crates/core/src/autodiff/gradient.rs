//! Flat gradient storage with an optional shape descriptor.

use alloc::vec;
use alloc::vec::Vec;

/// Gradient entries in leaf/parameter order. `segments` optionally records
/// the (rows, cols) of each underlying tensor so a flat gradient can be
/// mapped back onto structured parameters; it is empty for plain leaf
/// gradients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientVector {
    entries: Vec<f64>,
    segments: Vec<(usize, usize)>,
}

impl GradientVector {
    pub fn zeros(n: usize) -> Self {
        Self { entries: vec![0.0; n], segments: Vec::new() }
    }

    pub fn from_entries(entries: Vec<f64>) -> Self {
        Self { entries, segments: Vec::new() }
    }

    pub fn with_segments(entries: Vec<f64>, segments: Vec<(usize, usize)>) -> Self {
        debug_assert_eq!(entries.len(), segments.iter().map(|(r, c)| r * c).sum::<usize>());
        Self { entries, segments }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn segments(&self) -> &[(usize, usize)] {
        &self.segments
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|g| g.is_finite())
    }

    /// Euclidean norm, used by the optional gradient clip.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|g| g * g).sum())
    }

    pub fn scale(&mut self, c: f64) {
        self.entries.iter_mut().for_each(|g| *g *= c);
    }
}

impl core::ops::Index<usize> for GradientVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}
