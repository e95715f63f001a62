//! Full-ranking leave-one-out evaluation and attention export.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{pad_truncate, EvalSplit, SequenceDataset};
use crate::encoder::{predict_scores, Encoder, ModelParams};
use crate::error::{Error, Result};
use crate::par::map_indexed;

/// 1 + the number of items scoring strictly higher than `target`, plus the
/// number of other items tying with it: ties count against the target.
pub fn rank_of_target(logits: &[f64], target: usize) -> usize {
    let t = logits[target];
    1 + logits
        .iter()
        .enumerate()
        .filter(|&(i, &z)| i != target && z >= t)
        .count()
}

/// `(HR@n, NDCG@n)` for single-target ranks (1-based).
pub fn metrics_from_ranks(ranks: &[usize], n: usize) -> Result<(f64, f64)> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    let (mut hits, mut dcg) = (0.0, 0.0);
    for &r in ranks.iter().filter(|&&r| r <= n) {
        hits += 1.0;
        dcg += 1.0 / ((r + 1) as f64).log2();
    }
    let count = ranks.len() as f64;
    Ok((hits / count, dcg / count))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "HR@5")]
    pub hr5: f64,
    #[serde(rename = "HR@10")]
    pub hr10: f64,
    #[serde(rename = "NDCG@5")]
    pub ndcg5: f64,
    #[serde(rename = "NDCG@10")]
    pub ndcg10: f64,
    pub num_users: usize,
}

impl EvalReport {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let (hr5, ndcg5) = metrics_from_ranks(ranks, 5)?;
        let (hr10, ndcg10) = metrics_from_ranks(ranks, 10)?;
        Ok(Self {
            hr5,
            hr10,
            ndcg5,
            ndcg10,
            num_users: ranks.len(),
        })
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "HR@5={:.4} HR@10={:.4} NDCG@5={:.4} NDCG@10={:.4} users={}",
            self.hr5, self.hr10, self.ndcg5, self.ndcg10, self.num_users
        )
    }
}

fn check_vocabulary(encoder: &Encoder, ds: &SequenceDataset) -> Result<()> {
    let model_items = encoder.config().num_items;
    if model_items != ds.num_items() {
        return Err(Error::Vocabulary(format!(
            "model has {model_items} items, dataset has {}",
            ds.num_items()
        )));
    }
    Ok(())
}

/// Rank of every user's held-out item on `split`, in user order.
///
/// With `exclude_seen`, items in the user's input history other than the
/// target itself are removed from the candidate set.
pub fn target_ranks(
    encoder: &Encoder,
    params: &ModelParams,
    ds: &SequenceDataset,
    split: EvalSplit,
    exclude_seen: bool,
) -> Result<Vec<usize>> {
    check_vocabulary(encoder, ds)?;
    if ds.num_users() == 0 {
        return Err(Error::Empty("evaluation split"));
    }
    let n = encoder.config().max_len;
    map_indexed(ds.num_users(), |u| {
        let (history, target) = ds.eval_example(u, split);
        let ids = pad_truncate(history, n);
        let fwd = encoder.forward(params, &ids, None, None)?;
        let mut logits = predict_scores(params, fwd.final_state()).to_vec();
        if exclude_seen {
            for &i in history {
                if i != target {
                    logits[i] = f64::NEG_INFINITY;
                }
            }
        }
        Ok(rank_of_target(&logits, target))
    })
    .into_iter()
    .collect()
}

pub fn evaluate(
    encoder: &Encoder,
    params: &ModelParams,
    ds: &SequenceDataset,
    split: EvalSplit,
    exclude_seen: bool,
) -> Result<EvalReport> {
    EvalReport::from_ranks(&target_ranks(encoder, params, ds, split, exclude_seen)?)
}

/// Writes, for every layer `l` and head `h` (1-based), the time-domain
/// attention matrix `layer{l}_head{h}_attention.csv` (`N` rows of `N`
/// comma-separated weights, row = query position) and the frequency-domain
/// delays `layer{l}_head{h}_delays.csv` (header `tau,weight`, one row per
/// selected lag). Returns the written paths.
pub fn export_attention(
    encoder: &Encoder,
    params: &ModelParams,
    ids: &[usize],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let fwd = encoder.forward(params, ids, None, None)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut written = Vec::new();
    let write = |path: PathBuf, text: String, written: &mut Vec<PathBuf>| -> Result<()> {
        fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        written.push(path);
        Ok(())
    };
    for (l, reports) in fwd.delay_reports().iter().enumerate() {
        for (h, probs) in fwd.attention(l).iter().enumerate() {
            let mut text = String::new();
            for row in probs.rows() {
                let cells: Vec<String> = row.iter().map(|w| format!("{w:.9e}")).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            write(dir.join(format!("layer{}_head{}_attention.csv", l + 1, h + 1)), text, &mut written)?;
        }
        for r in reports {
            let mut text = String::from("tau,weight\n");
            for (tau, w) in r.lags.iter().zip(&r.weights) {
                text.push_str(&format!("{tau},{w:.9e}\n"));
            }
            write(dir.join(format!("layer{}_head{}_delays.csv", l + 1, r.head + 1)), text, &mut written)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_are_pessimistic() {
        assert_eq!(rank_of_target(&[f64::NEG_INFINITY, 0.1, 0.9, 0.3], 2), 1);
        assert_eq!(rank_of_target(&[f64::NEG_INFINITY, 0.9, 0.9, 0.3], 2), 2);
        let mut flat = vec![0.0; 11];
        flat[0] = f64::NEG_INFINITY;
        assert_eq!(rank_of_target(&flat, 4), 10);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(metrics_from_ranks(&[1, 1, 1], 5).unwrap(), (1.0, 1.0));
        let (hr, ndcg) = metrics_from_ranks(&[2], 5).unwrap();
        assert_eq!(hr, 1.0);
        assert!((ndcg - 0.63093).abs() < 1e-5);
        assert_eq!(metrics_from_ranks(&[6], 5).unwrap(), (0.0, 0.0));
        assert!(metrics_from_ranks(&[], 5).is_err());
    }

    #[test]
    fn report_uses_canonical_metric_names() {
        let r = EvalReport::from_ranks(&[1, 7, 20]).unwrap();
        let json = serde_json::to_value(r).unwrap();
        for key in ["HR@5", "HR@10", "NDCG@5", "NDCG@10", "num_users"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
