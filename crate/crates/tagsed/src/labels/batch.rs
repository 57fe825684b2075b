//! Batch composition: fixed per-source quotas, sampled without
//! replacement within each source's shuffled pass.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// How many clips of each provenance go into one batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub n_strong: usize,
    pub n_weak: usize,
    pub n_unlabeled: usize,
}

impl BatchPlan {
    /// Quarter strong, quarter weak, remainder unlabeled.
    pub fn for_batch_size(batch: usize) -> Self {
        let q = batch / 4;
        BatchPlan {
            n_strong: q,
            n_weak: q,
            n_unlabeled: batch - 2 * q,
        }
    }

    pub fn total(&self) -> usize {
        self.n_strong + self.n_weak + self.n_unlabeled
    }

    /// Redistribute quotas of empty sources onto the non-empty ones,
    /// keeping the batch size. Quotas are handed out round-robin in
    /// strong, weak, unlabeled order so the result is deterministic.
    pub fn adjusted_for(&self, sizes: [usize; 3]) -> BatchPlan {
        let quotas = [self.n_strong, self.n_weak, self.n_unlabeled];
        let alive: Vec<usize> = (0..3).filter(|&i| sizes[i] > 0).collect();
        assert!(!alive.is_empty(), "all batch sources are empty");
        let mut out = [0usize; 3];
        let mut spare = 0;
        for i in 0..3 {
            if sizes[i] > 0 {
                out[i] = quotas[i];
            } else {
                spare += quotas[i];
            }
        }
        let mut cursor = 0;
        while spare > 0 {
            let i = alive[cursor % alive.len()];
            out[i] += 1;
            spare -= 1;
            cursor += 1;
        }
        BatchPlan {
            n_strong: out[0],
            n_weak: out[1],
            n_unlabeled: out[2],
        }
    }
}

/// Indices of the clips composing one batch, per source.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub strong: Vec<usize>,
    pub weak: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

struct SourceQueue {
    order: Vec<usize>,
    pos: usize,
}

impl SourceQueue {
    fn new(len: usize) -> Self {
        SourceQueue {
            order: (0..len).collect(),
            pos: len, // force a shuffle before first use
        }
    }

    fn draw(&mut self, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            if self.pos >= self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Draws batches matching a [`BatchPlan`] from three datasets given by
/// size. Each source is shuffled and consumed without replacement; it
/// reshuffles when its pass is exhausted.
pub struct BatchSampler {
    plan: BatchPlan,
    queues: [SourceQueue; 3],
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(sizes: [usize; 3], plan: BatchPlan, rng: ChaCha8Rng) -> Self {
        let plan = plan.adjusted_for(sizes);
        BatchSampler {
            plan,
            queues: [
                SourceQueue::new(sizes[0]),
                SourceQueue::new(sizes[1]),
                SourceQueue::new(sizes[2]),
            ],
            rng,
        }
    }

    pub fn plan(&self) -> BatchPlan {
        self.plan
    }

    pub fn next_batch(&mut self) -> Batch {
        Batch {
            strong: self.queues[0].draw(self.plan.n_strong, &mut self.rng),
            weak: self.queues[1].draw(self.plan.n_weak, &mut self.rng),
            unlabeled: self.queues[2].draw(self.plan.n_unlabeled, &mut self.rng),
        }
    }
}
