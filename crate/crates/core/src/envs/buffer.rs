use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{config, contract, Error, Result};
use crate::numcore::Mat;

const MAGIC: &[u8; 4] = b"XNRB";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

/// One step of experience.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

impl Transition {
    fn check(&self, obs_dim: usize, act_dim: usize) -> Result<()> {
        if self.s.len() != obs_dim || self.s_next.len() != obs_dim || self.a.len() != act_dim {
            return config(format!(
                "transition dims ({}, {}, {}) do not match buffer ({}, {})",
                self.s.len(),
                self.a.len(),
                self.s_next.len(),
                obs_dim,
                act_dim
            ));
        }
        let finite = self
            .s
            .iter()
            .chain(&self.a)
            .chain(&self.s_next)
            .all(|v| v.is_finite())
            && self.r.is_finite();
        if !finite {
            return contract("transition has non-finite entries");
        }
        if self.a.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return contract("transition action outside [-1, 1]");
        }
        Ok(())
    }
}

/// A minibatch laid out as matrices, one row per transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub s: Mat,
    pub a: Mat,
    pub r: Vec<f64>,
    pub s_next: Mat,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Fixed-capacity FIFO experience memory.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return config("buffer capacity must be positive");
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.check(self.obs_dim, self.act_dim)?;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// The `i`-th transition counted from the oldest.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.items.len() {
            return None;
        }
        let start = if self.items.len() == self.capacity {
            self.cursor
        } else {
            0
        };
        Some(&self.items[(start + i) % self.capacity])
    }

    /// Oldest-first iteration.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (0..self.items.len()).map(move |i| self.get(i).expect("index in range"))
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if n == 0 || self.items.len() < n {
            return contract(format!(
                "cannot sample {} transitions from a buffer holding {}",
                n,
                self.items.len()
            ));
        }
        let len = self.items.len();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..len)).collect();
        Ok(self.gather(idx.iter().map(|&i| &self.items[i])))
    }

    /// Every stored transition, oldest first.
    pub fn enumerate(&self) -> Result<Batch> {
        if self.items.is_empty() {
            return contract("cannot enumerate an empty buffer");
        }
        Ok(self.gather(self.iter()))
    }

    /// Transitions at the given oldest-first positions.
    pub fn select(&self, positions: &[usize]) -> Result<Batch> {
        if positions.is_empty() {
            return contract("empty selection");
        }
        let mut picked = Vec::with_capacity(positions.len());
        for &p in positions {
            match self.get(p) {
                Some(t) => picked.push(t),
                None => return contract(format!("position {} out of range", p)),
            }
        }
        Ok(self.gather(picked.into_iter()))
    }

    fn gather<'a>(&self, it: impl Iterator<Item = &'a Transition>) -> Batch {
        let mut s = Vec::new();
        let mut a = Vec::new();
        let mut r = Vec::new();
        let mut s_next = Vec::new();
        let mut done = Vec::new();
        for t in it {
            s.extend_from_slice(&t.s);
            a.extend_from_slice(&t.a);
            r.push(t.r);
            s_next.extend_from_slice(&t.s_next);
            done.push(if t.done { 1.0 } else { 0.0 });
        }
        let n = r.len();
        Batch {
            s: Mat::new(n, self.obs_dim, s).expect("rows are checked on push"),
            a: Mat::new(n, self.act_dim, a).expect("rows are checked on push"),
            r,
            s_next: Mat::new(n, self.obs_dim, s_next).expect("rows are checked on push"),
            done,
        }
    }

    /// Serialized form: little-endian header (magic, version, dims, count,
    /// capacity) followed by oldest-first packed `f64` records
    /// `s, a, r, s_next, done`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let rec = 2 * self.obs_dim + self.act_dim + 2;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * rec * self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.obs_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.act_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.capacity as u64).to_le_bytes());
        for t in self.iter() {
            let done = if t.done { 1.0 } else { 0.0 };
            for v in
                t.s.iter()
                    .chain(&t.a)
                    .chain([&t.r])
                    .chain(&t.s_next)
                    .chain([&done])
            {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Err(Error::Format(m.to_string()));
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return fmt("not a replay buffer file");
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported buffer version {}",
                version
            )));
        }
        let obs_dim = u32_at(8) as usize;
        let act_dim = u32_at(12) as usize;
        let count = u64_at(16) as usize;
        let capacity = u64_at(24) as usize;
        let rec = 2 * obs_dim + act_dim + 2;
        if count > capacity || bytes.len() != HEADER_LEN + 8 * rec * count {
            return fmt("buffer file length does not match its header");
        }
        let mut buf = ReplayBuffer::new(capacity, obs_dim, act_dim)
            .or_else(|_| fmt("buffer file has zero capacity"))?;
        let vals: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for r in vals.chunks_exact(rec) {
            let (s, rest) = r.split_at(obs_dim);
            let (a, rest) = rest.split_at(act_dim);
            let (rw, rest) = rest.split_at(1);
            let (s_next, d) = rest.split_at(obs_dim);
            buf.push(Transition {
                s: s.to_vec(),
                a: a.to_vec(),
                r: rw[0],
                s_next: s_next.to_vec(),
                done: d[0] != 0.0,
            })
            .map_err(|e| Error::Format(format!("bad record: {}", e)))?;
        }
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::seeded;

    fn t(x: f64) -> Transition {
        Transition {
            s: vec![x],
            a: vec![0.0],
            r: x,
            s_next: vec![x + 1.0],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2, 1, 1).unwrap();
        for x in [1.0, 2.0, 3.0] {
            b.push(t(x)).unwrap();
        }
        let rs: Vec<f64> = b.iter().map(|t| t.r).collect();
        assert_eq!(rs, vec![2.0, 3.0]);
    }

    #[test]
    fn undersized_sample_is_contract_violation() {
        let b = ReplayBuffer::new(4, 1, 1).unwrap();
        let mut rng = seeded(0, 0);
        assert!(matches!(b.sample(1, &mut rng), Err(Error::Contract(_))));
        assert!(matches!(b.enumerate(), Err(Error::Contract(_))));
    }

    #[test]
    fn enumerate_covers_everything() {
        let mut b = ReplayBuffer::new(5, 1, 1).unwrap();
        for x in 0..5 {
            b.push(t(x as f64)).unwrap();
        }
        let batch = b.enumerate().unwrap();
        assert_eq!(batch.r, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(batch.s_next.col(0), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn seeded_samples_repeat() {
        let mut b = ReplayBuffer::new(50, 1, 1).unwrap();
        for x in 0..50 {
            b.push(t(x as f64)).unwrap();
        }
        let a1 = b.sample(16, &mut seeded(3, 4)).unwrap();
        let a2 = b.sample(16, &mut seeded(3, 4)).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn rejects_out_of_range_action() {
        let mut b = ReplayBuffer::new(2, 1, 1).unwrap();
        let mut bad = t(0.0);
        bad.a = vec![1.5];
        assert!(b.push(bad).is_err());
    }

    #[test]
    fn bytes_round_trip() {
        let mut b = ReplayBuffer::new(3, 1, 1).unwrap();
        for x in 0..5 {
            let mut tr = t(x as f64);
            tr.done = x % 2 == 0;
            b.push(tr).unwrap();
        }
        let back = ReplayBuffer::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(
            back.iter().collect::<Vec<_>>(),
            b.iter().collect::<Vec<_>>()
        );
        assert_eq!(back.capacity(), 3);
    }

    #[test]
    fn truncated_file_is_format_error() {
        let mut b = ReplayBuffer::new(3, 1, 1).unwrap();
        b.push(t(1.0)).unwrap();
        let bytes = b.to_bytes();
        let r = ReplayBuffer::from_bytes(&bytes[..bytes.len() - 1]);
        assert!(matches!(r, Err(Error::Format(_))));
        assert!(matches!(
            ReplayBuffer::from_bytes(b"nope"),
            Err(Error::Format(_))
        ));
    }
}
