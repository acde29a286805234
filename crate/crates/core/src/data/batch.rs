//! Minibatch index sampling.

use std::collections::BTreeMap;

use super::ClassId;
use crate::error::{Error, Result};
use crate::numcore::Rng;

#[derive(Clone, Debug)]
enum Mode {
    /// Epoch-wise permutation; the trailing partial batch is dropped.
    Shuffle { order: Vec<usize>, cursor: usize },
    /// Class drawn uniformly, then a row of that class uniformly.
    Balanced { by_class: Vec<Vec<usize>> },
}

/// Endless source of row-index batches over a fixed pool.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    pool_size: usize,
    batch_size: usize,
    rng: Rng,
    mode: Mode,
}

impl BatchSampler {
    pub fn shuffled(pool_size: usize, batch_size: usize, rng: Rng) -> Result<Self> {
        check(pool_size, batch_size)?;
        let mut s = BatchSampler {
            pool_size,
            batch_size,
            rng,
            mode: Mode::Shuffle {
                order: (0..pool_size).collect(),
                cursor: 0,
            },
        };
        s.reshuffle();
        Ok(s)
    }

    /// Class-balanced sampling with replacement.
    pub fn balanced(labels: &[ClassId], batch_size: usize, rng: Rng) -> Result<Self> {
        check(labels.len(), batch_size)?;
        let mut groups: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &y) in labels.iter().enumerate() {
            groups.entry(y).or_default().push(i);
        }
        Ok(BatchSampler {
            pool_size: labels.len(),
            batch_size,
            rng,
            mode: Mode::Balanced {
                by_class: groups.into_values().collect(),
            },
        })
    }

    fn reshuffle(&mut self) {
        if let Mode::Shuffle { order, cursor } = &mut self.mode {
            self.rng.shuffle(order);
            *cursor = 0;
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Full batches in one pass over the pool.
    pub fn batches_per_epoch(&self) -> usize {
        self.pool_size / self.batch_size
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let b = self.batch_size;
        let need_reshuffle = matches!(&self.mode, Mode::Shuffle { order, cursor } if cursor + b > order.len());
        if need_reshuffle {
            self.reshuffle();
        }
        match &mut self.mode {
            Mode::Shuffle { order, cursor } => {
                let out = order[*cursor..*cursor + b].to_vec();
                *cursor += b;
                out
            }
            Mode::Balanced { by_class } => (0..b)
                .map(|_| {
                    let group = &by_class[self.rng.below(by_class.len())];
                    group[self.rng.below(group.len())]
                })
                .collect(),
        }
    }
}

fn check(pool_size: usize, batch_size: usize) -> Result<()> {
    if pool_size == 0 {
        return Err(Error::Config("cannot sample batches from an empty pool".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if batch_size > pool_size {
        return Err(Error::Config(format!(
            "batch_size {batch_size} exceeds pool size {pool_size}"
        )));
    }
    Ok(())
}

/// Index batches for one epoch.
pub fn batch_iter(
    pool_size: usize,
    labels: Option<&[ClassId]>,
    batch_size: usize,
    rng: Rng,
    balanced: bool,
) -> Result<impl Iterator<Item = Vec<usize>>> {
    let mut sampler = match (balanced, labels) {
        (true, Some(l)) => {
            if l.len() != pool_size {
                return Err(Error::Validation("labels do not cover the pool".into()));
            }
            BatchSampler::balanced(l, batch_size, rng)?
        }
        (true, None) => return Err(Error::Config("balanced sampling needs labels".into())),
        (false, _) => BatchSampler::shuffled(pool_size, batch_size, rng)?,
    };
    let n = sampler.batches_per_epoch();
    Ok((0..n).map(move |_| sampler.next_batch()))
}
