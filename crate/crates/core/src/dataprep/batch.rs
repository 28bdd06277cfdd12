use super::CorpusRecord;
use crate::error::{Error, Result};

/// Record indices grouped into micro-batches under a packed-token budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub batches: Vec<Vec<usize>>,
    pub max_tokens_per_batch: usize,
}

impl BatchPlan {
    pub fn n_records(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

/// Sorts records by packed length (ties by index) and fills batches greedily.
pub fn plan_batches(records: &[CorpusRecord], max_tokens_per_batch: usize) -> Result<BatchPlan> {
    if let Some(r) = records.iter().find(|r| r.packed_len() > max_tokens_per_batch) {
        return Err(Error::Capacity {
            record: r.provenance.clone(),
            length: r.packed_len(),
            budget: max_tokens_per_batch,
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].packed_len(), i));
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut used = 0;
    for i in order {
        let len = records[i].packed_len();
        match batches.last_mut() {
            Some(b) if used + len <= max_tokens_per_batch => {
                b.push(i);
                used += len;
            }
            _ => {
                batches.push(vec![i]);
                used = len;
            }
        }
    }
    Ok(BatchPlan {
        batches,
        max_tokens_per_batch,
    })
}
