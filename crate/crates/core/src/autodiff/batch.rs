use std::cell::RefCell;

use super::jet::{Jet2, SLOTS};

/// Upper bound on the number of `f64`s kept for reuse per thread (256 MiB).
const POOL_LIMIT: usize = 32 << 20;

thread_local! {
    // Freed jet storage, reused by later batches on the same thread. Fresh
    // large allocations are page-faulted in on first touch, which costs more
    // than the arithmetic for most layers.
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

/// Zeroed storage of length `len`, reusing a recycled buffer when one fits.
pub(crate) fn pooled_zeros(len: usize) -> Vec<f64> {
    let reused = POOL.try_with(|pool| {
        let mut pool = pool.borrow_mut();
        let best = pool
            .iter()
            .enumerate()
            .filter(|(_, v)| v.capacity() >= len && v.capacity() <= 2 * len.max(1024))
            .min_by_key(|(_, v)| v.capacity())
            .map(|(i, _)| i);
        best.map(|i| pool.swap_remove(i))
    });
    match reused.ok().flatten() {
        Some(mut v) => {
            v.clear();
            v.resize(len, 0.0);
            v
        }
        None => vec![0.0; len],
    }
}

/// Hands storage back for reuse on this thread.
pub(crate) fn recycle(v: Vec<f64>) {
    if v.capacity() < 1024 {
        return;
    }
    let _ = POOL.try_with(|pool| {
        let mut pool = pool.borrow_mut();
        let held: usize = pool.iter().map(Vec::capacity).sum();
        if held + v.capacity() <= POOL_LIMIT {
            pool.push(v);
        }
    });
}

/// Jets for `points x channels`, stored slot-major: slot `s` is a contiguous
/// row-major `points x channels` matrix. Stacking the slots gives one
/// `(SLOTS * points) x channels` matrix, which is what the shared affine
/// layers multiply.
#[derive(Debug, PartialEq)]
pub struct JetBatch {
    points: usize,
    channels: usize,
    data: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(points: usize, channels: usize) -> Self {
        Self { points, channels, data: pooled_zeros(SLOTS * points * channels) }
    }

    /// Seeds the inputs: channel 0 is x, channel 1 is y.
    pub fn seed_coordinates(coords: &[[f64; 2]]) -> Self {
        let n = coords.len();
        let mut out = Self::zeros(n, 2);
        for (p, c) in coords.iter().enumerate() {
            out.set(p, 0, Jet2::var_x(c[0]));
            out.set(p, 1, Jet2::var_y(c[1]));
        }
        out
    }

    pub fn from_jets(points: usize, channels: usize, jets: &[Jet2]) -> Self {
        assert_eq!(jets.len(), points * channels);
        let mut out = Self::zeros(points, channels);
        for p in 0..points {
            for c in 0..channels {
                out.set(p, c, jets[p * channels + c]);
            }
        }
        out
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn offset(&self, slot: usize, p: usize, c: usize) -> usize {
        (slot * self.points + p) * self.channels + c
    }

    #[inline]
    pub fn at(&self, slot: usize, p: usize, c: usize) -> f64 {
        self.data[self.offset(slot, p, c)]
    }

    #[inline]
    pub fn at_mut(&mut self, slot: usize, p: usize, c: usize) -> &mut f64 {
        let o = self.offset(slot, p, c);
        &mut self.data[o]
    }

    pub fn get(&self, p: usize, c: usize) -> Jet2 {
        Jet2::from_slots(std::array::from_fn(|s| self.at(s, p, c)))
    }

    pub fn set(&mut self, p: usize, c: usize, jet: Jet2) {
        for (s, v) in jet.slots().into_iter().enumerate() {
            *self.at_mut(s, p, c) = v;
        }
    }

    /// The `points x channels` matrix of one slot.
    pub fn slot(&self, slot: usize) -> &[f64] {
        let len = self.points * self.channels;
        &self.data[slot * len..(slot + 1) * len]
    }

    pub fn slot_mut(&mut self, slot: usize) -> &mut [f64] {
        let len = self.points * self.channels;
        &mut self.data[slot * len..(slot + 1) * len]
    }

    /// One point's channel vector in one slot.
    pub fn row(&self, slot: usize, p: usize) -> &[f64] {
        let o = self.offset(slot, p, 0);
        &self.data[o..o + self.channels]
    }

    pub fn row_mut(&mut self, slot: usize, p: usize) -> &mut [f64] {
        let o = self.offset(slot, p, 0);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reorders points: point `i` of the result is point `perm[i]` of `self`.
    pub fn permute_points(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.points, self.channels);
        for s in 0..SLOTS {
            for (i, &src) in perm.iter().enumerate() {
                out.row_mut(s, i).copy_from_slice(self.row(s, src));
            }
        }
        out
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.points, self.channels), (other.points, other.channels));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Clone for JetBatch {
    fn clone(&self) -> Self {
        let mut data = pooled_zeros(self.data.len());
        data.copy_from_slice(&self.data);
        Self { points: self.points, channels: self.channels, data }
    }
}

impl Drop for JetBatch {
    fn drop(&mut self) {
        recycle(std::mem::take(&mut self.data));
    }
}
