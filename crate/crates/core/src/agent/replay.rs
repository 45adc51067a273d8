use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::Episode;
use crate::world_model::{Sequence, SequenceBatch};
use crate::{Error, Result, Scalar};

/// Stored episodes with a private sampling stream. When full, the oldest
/// episode is dropped.
#[derive(Debug, Clone)]
pub struct ReplayDataset {
    episodes: VecDeque<Episode>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayDataset {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            episodes: VecDeque::new(),
            capacity: capacity.max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    /// `(episode index, start)` of one uniformly drawn window of length `len`.
    pub fn draw_window(&mut self, len: usize) -> Result<(usize, usize)> {
        let eligible: Vec<usize> = (0..self.episodes.len())
            .filter(|&i| self.episodes[i].len() >= len)
            .collect();
        if eligible.is_empty() || len == 0 {
            return Err(Error::InsufficientData(format!(
                "no stored episode holds a window of {len} steps"
            )));
        }
        let ep = eligible[self.rng.gen_range(0..eligible.len())];
        let start = self.rng.gen_range(0..=self.episodes[ep].len() - len);
        Ok((ep, start))
    }

    /// `batch` contiguous windows of `len` steps.
    pub fn sample<T: Scalar>(&mut self, batch: usize, len: usize) -> Result<SequenceBatch<T>> {
        if batch == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let seqs: Vec<Sequence<T>> = (0..batch)
            .map(|_| {
                let (ep, start) = self.draw_window(len)?;
                Ok(self.episodes[ep].window(start, len))
            })
            .collect::<Result<_>>()?;
        SequenceBatch::from_sequences(&seqs)
    }
}
