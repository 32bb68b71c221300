//! Inner remedy loop: partition pseudo labels by confidence, retrain a
//! stronger classifier on source plus confident target samples, and relabel
//! the rest.

use crate::classifier::NnModel;
use crate::error::{Error, Result};
use crate::types::{FeatureMatrix, LabeledDomain, PseudoLabelState};
use crate::utsp::partition_subset;

/// Runs `inner_iters` rounds of partition + relabel on projected features.
///
/// Each round partitions the current working set, moves its confident part
/// into a frozen pool, trains the strong classifier on the source plus the
/// pool, and relabels what remains; the relabelled remainder becomes the next
/// working set. Samples in the pool keep their label from then on.
///
/// Stops early when the working set is empty or two consecutive rounds
/// select nothing new.
pub fn remedy(
    source: &LabeledDomain,
    target: &FeatureMatrix,
    pseudo: &PseudoLabelState,
    rho: f64,
    inner_iters: usize,
) -> Result<PseudoLabelState> {
    if inner_iters == 0 {
        return Err(Error::InvalidConfig(
            "inner_iters must be at least 1".into(),
        ));
    }
    if source.features().dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.features().dim(),
            found: target.dim(),
        });
    }
    if pseudo.n_samples() != target.n_samples() {
        return Err(Error::LengthMismatch {
            left: pseudo.n_samples(),
            right: target.n_samples(),
        });
    }

    let mut labels = pseudo.labels().to_vec();
    let mut pool: Vec<usize> = Vec::new();
    let mut working: Vec<usize> = (0..labels.len()).collect();
    let mut idle_rounds = 0;

    for _ in 0..inner_iters {
        if working.is_empty() {
            break;
        }
        let parts = partition_subset(target, &labels, &working, rho)?;
        let mut selected = Vec::new();
        let mut rest = Vec::new();
        for p in parts {
            selected.extend(p.high);
            rest.extend(p.low);
        }
        rest.sort_unstable();

        if selected.is_empty() {
            idle_rounds += 1;
            if idle_rounds >= 2 {
                break;
            }
        } else {
            idle_rounds = 0;
        }
        pool.extend(&selected);
        pool.sort_unstable();

        if !rest.is_empty() {
            let strong = strong_classifier(source, target, &labels, &pool)?;
            let queries = target.select_columns(&rest)?;
            for (&i, label) in rest.iter().zip(strong.predict(&queries)?) {
                labels[i] = label;
            }
        }
        working = rest;
    }

    PseudoLabelState::from_partition(labels, pool, working)
}

fn strong_classifier(
    source: &LabeledDomain,
    target: &FeatureMatrix,
    labels: &[usize],
    pool: &[usize],
) -> Result<NnModel> {
    let mut train_labels = source.labels().to_vec();
    let features = if pool.is_empty() {
        source.features().clone()
    } else {
        train_labels.extend(pool.iter().map(|&i| labels[i]));
        source.features().hstack(&target.select_columns(pool)?)?
    };
    if train_labels.is_empty() {
        return Err(Error::DegenerateTrainingSet);
    }
    NnModel::fit(features, train_labels)
}
