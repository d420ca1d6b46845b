use rand::Rng;

use super::HrlError;
use crate::numgrad::{Tensor, TensorArchive};

/// One environment step as seen by the low level (and by flat SAC, which
/// leaves `z` empty and `k = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct LowTransition {
    pub s: Vec<f64>,
    pub k: usize,
    pub z: Vec<f64>,
    pub a_pre: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// True termination only; time limits bootstrap and are stored as false.
    pub done: bool,
}

/// One executed skill: `reward` is the undiscounted sum of its member rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct HighTransition {
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub reward: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-width flat encoding used for checkpoints.
pub trait Record: Sized {
    fn encode(&self, out: &mut Vec<f64>);
    fn decode(row: &[f64], dims: &RecordDims) -> Self;
    fn width(dims: &RecordDims) -> usize;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordDims {
    pub state: usize,
    pub latent: usize,
    pub action: usize,
}

fn take<'a>(row: &mut &'a [f64], n: usize) -> &'a [f64] {
    let (a, b) = row.split_at(n);
    *row = b;
    a
}

impl Record for LowTransition {
    fn encode(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.s);
        out.push(self.k as f64);
        out.extend_from_slice(&self.z);
        out.extend_from_slice(&self.a_pre);
        out.extend_from_slice(&self.a);
        out.push(self.r);
        out.extend_from_slice(&self.s_next);
        out.push(if self.done { 1.0 } else { 0.0 });
    }

    fn decode(mut row: &[f64], d: &RecordDims) -> Self {
        let s = take(&mut row, d.state).to_vec();
        let k = take(&mut row, 1)[0] as usize;
        let z = take(&mut row, d.latent).to_vec();
        let a_pre = take(&mut row, d.action).to_vec();
        let a = take(&mut row, d.action).to_vec();
        let r = take(&mut row, 1)[0];
        let s_next = take(&mut row, d.state).to_vec();
        let done = take(&mut row, 1)[0] != 0.0;
        Self { s, k, z, a_pre, a, r, s_next, done }
    }

    fn width(d: &RecordDims) -> usize {
        2 * d.state + d.latent + 2 * d.action + 3
    }
}

impl Record for HighTransition {
    fn encode(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.s);
        out.extend_from_slice(&self.z);
        out.push(self.reward);
        out.extend_from_slice(&self.s_next);
        out.push(if self.done { 1.0 } else { 0.0 });
    }

    fn decode(mut row: &[f64], d: &RecordDims) -> Self {
        let s = take(&mut row, d.state).to_vec();
        let z = take(&mut row, d.latent).to_vec();
        let reward = take(&mut row, 1)[0];
        let s_next = take(&mut row, d.state).to_vec();
        let done = take(&mut row, 1)[0] != 0.0;
        Self { s, z, reward, s_next, done }
    }

    fn width(d: &RecordDims) -> usize {
        2 * d.state + d.latent + 2
    }
}

/// FIFO ring buffer with uniform sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
    pushed: u64,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), next: 0, pushed: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions, including overwritten ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    /// `n` draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<T> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| self.items[rng.gen_range(0..self.items.len())].clone()).collect()
    }
}

impl<T: Clone + Record> ReplayBuffer<T> {
    pub fn write_archive(&self, ar: &mut TensorArchive, name: &str, dims: &RecordDims) {
        let w = T::width(dims);
        let mut data = Vec::with_capacity(self.items.len() * w);
        for it in &self.items {
            it.encode(&mut data);
        }
        ar.set_meta(format!("{name}.capacity"), self.capacity);
        ar.set_meta(format!("{name}.next"), self.next);
        ar.set_meta(format!("{name}.pushed"), self.pushed);
        ar.set_meta(format!("{name}.len"), self.items.len());
        if !self.items.is_empty() {
            ar.insert(name, Tensor::from_raw(self.items.len(), w, data));
        }
    }

    pub fn read_archive(ar: &TensorArchive, name: &str, dims: &RecordDims) -> Result<Self, HrlError> {
        let capacity: usize = ar.meta_parse(&format!("{name}.capacity"))?;
        let len: usize = ar.meta_parse(&format!("{name}.len"))?;
        let mut buf = Self::new(capacity.max(1));
        buf.next = ar.meta_parse(&format!("{name}.next"))?;
        buf.pushed = ar.meta_parse(&format!("{name}.pushed"))?;
        if len > 0 {
            let t = ar.get(name).ok_or_else(|| HrlError::Checkpoint(format!("missing buffer {name}")))?;
            if t.dims2() != (len, T::width(dims)) {
                return Err(HrlError::Checkpoint(format!("buffer {name} has shape {:?}", t.shape())));
            }
            buf.items = (0..len).map(|i| T::decode(t.row_slice(i), dims)).collect();
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn low(i: usize) -> LowTransition {
        LowTransition {
            s: vec![i as f64, 1.0],
            k: i % 3,
            z: vec![0.5, -0.5, 0.25],
            a_pre: vec![0.1],
            a: vec![0.1f64.tanh()],
            r: i as f64 * 0.5,
            s_next: vec![i as f64 + 1.0, 1.0],
            done: i % 2 == 0,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.pushed(), 5);
        let mut v: Vec<i32> = (0..3).map(|i| *b.get(i)).collect();
        v.sort();
        assert_eq!(v, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_is_seeded() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..10 {
            b.push(i);
        }
        let s1 = b.sample(20, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let s2 = b.sample(20, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s1, s2);
    }

    #[test]
    fn archive_round_trip() {
        let dims = RecordDims { state: 2, latent: 3, action: 1 };
        let mut b = ReplayBuffer::new(4);
        for i in 0..6 {
            b.push(low(i));
        }
        let mut ar = TensorArchive::new();
        b.write_archive(&mut ar, "ll", &dims);
        let back = ReplayBuffer::<LowTransition>::read_archive(&ar, "ll", &dims).unwrap();
        assert_eq!(back, b);

        let mut h = ReplayBuffer::new(2);
        h.push(HighTransition { s: vec![1.0, 2.0], z: vec![0.0; 3], reward: 3.0, s_next: vec![2.0, 2.0], done: false });
        h.write_archive(&mut ar, "hl", &dims);
        assert_eq!(ReplayBuffer::<HighTransition>::read_archive(&ar, "hl", &dims).unwrap(), h);
    }
}
