//! Confidence partition of pseudo labels by intra-class similarity.
//!
//! For every pseudo class the members are connected by a cosine-similarity
//! graph thresholded at a rank percentile of the pairwise similarities. Nodes
//! without neighbours are deleted; the connected component of the
//! highest-degree survivor is kept as high-confidence, everything else in the
//! class is demoted to low-confidence. Classes with at most
//! [`SMALL_CLASS_LIMIT`] members are kept whole.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{bfs_tree, AdjacencyMask, SpanningTree};
use crate::types::{ClassSimilarityGraph, FeatureMatrix, PseudoLabelState};

/// Classes this small are always high-confidence so they cannot vanish.
pub const SMALL_CLASS_LIMIT: usize = 3;

/// Pairwise cosine similarity with a zero diagonal.
///
/// Fails with [`Error::ZeroNormSample`] if any column is the zero vector.
pub fn intra_class_similarity(members: &FeatureMatrix) -> Result<DMatrix<f64>> {
    let (sim, zero_norm) = cosine_similarity(members);
    match zero_norm.first() {
        Some(&index) => Err(Error::ZeroNormSample { index }),
        None => Ok(sim),
    }
}

/// Like [`intra_class_similarity`] but zero-norm columns get similarity 0 to
/// every other sample; their indices are returned alongside.
pub fn cosine_similarity(members: &FeatureMatrix) -> (DMatrix<f64>, Vec<usize>) {
    let n = members.n_samples();
    let norms: Vec<f64> = (0..n)
        .map(|i| members.column(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let zero_norm: Vec<usize> = (0..n).filter(|&i| norms[i] == 0.0).collect();
    let mut sim = DMatrix::zeros(n, n);
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        let zi = members.column(i);
        for j in i + 1..n {
            if norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = zi.iter().zip(members.column(j)).map(|(a, b)| a * b).sum();
            let s = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            sim[(i, j)] = s;
            sim[(j, i)] = s;
        }
    }
    (sim, zero_norm)
}

/// Non-zero strict-upper-triangle entries, ascending.
pub fn ranked_upper_entries(similarity: &DMatrix<f64>) -> Vec<f64> {
    let n = similarity.nrows();
    let mut entries: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| similarity[(i, j)])
        .filter(|&s| s != 0.0)
        .collect();
    entries.sort_by(f64::total_cmp);
    entries
}

/// Edge threshold: the `floor(rho * n_p)`-th smallest (1-based) non-zero upper
/// entry, with rank 0 clamped to 1.
pub fn similarity_threshold(similarity: &DMatrix<f64>, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidConfig(format!("rho {rho} not in (0, 1)")));
    }
    if similarity.nrows() < 2 || !similarity.is_square() {
        return Err(Error::NoPairs);
    }
    let ranked = ranked_upper_entries(similarity);
    if ranked.is_empty() {
        return Err(Error::NoPairs);
    }
    let rank = ((rho * ranked.len() as f64).floor() as usize).max(1);
    Ok(ranked[rank - 1])
}

/// `M[i][j] = 1` iff `i != j` and `similarity[i][j] >= delta`.
pub fn adjacency_mask(similarity: &DMatrix<f64>, delta: f64) -> AdjacencyMask {
    AdjacencyMask::from_upper(similarity.nrows(), |i, j| similarity[(i, j)] >= delta)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsolatedSplit {
    /// Nodes with at least one neighbour, ascending.
    pub retained: Vec<usize>,
    pub deleted: Vec<usize>,
    /// Mask induced on `retained`, renumbered `0..retained.len()`.
    pub mask: AdjacencyMask,
}

pub fn delete_isolated(mask: &AdjacencyMask) -> IsolatedSplit {
    let (retained, deleted): (Vec<usize>, Vec<usize>) = mask.degrees().iter().enumerate().fold(
        (Vec::new(), Vec::new()),
        |(mut keep, mut drop), (i, &d)| {
            if d > 0 {
                keep.push(i)
            } else {
                drop.push(i)
            }
            (keep, drop)
        },
    );
    let mask = mask.restrict(&retained);
    IsolatedSplit {
        retained,
        deleted,
        mask,
    }
}

/// Index of the largest degree; ties go to the smallest index.
pub fn root_node(degrees: &[usize]) -> Option<usize> {
    degrees
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, usize)>, (i, &d)| match best {
            Some((_, bd)) if bd >= d => best,
            _ => Some((i, d)),
        })
        .map(|(i, _)| i)
}

/// Spanning tree over everything reachable from `root`.
pub fn spanning_tree_select(mask: &AdjacencyMask, root: usize) -> SpanningTree {
    bfs_tree(mask, root)
}

/// How a single pseudo class was split.
#[derive(Clone, Debug)]
pub struct ClassPartition {
    pub class_id: usize,
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    /// Present when the full graph procedure ran (class larger than the
    /// small-class limit and at least one non-zero similarity pair).
    pub graph: Option<ClassSimilarityGraph>,
}

/// Runs the graph procedure on one class. `members` are target indices.
pub fn partition_class(
    features: &FeatureMatrix,
    class_id: usize,
    members: Vec<usize>,
    rho: f64,
) -> Result<ClassPartition> {
    if members.len() <= SMALL_CLASS_LIMIT {
        return Ok(ClassPartition {
            class_id,
            high: members,
            low: Vec::new(),
            graph: None,
        });
    }
    let sub = features.select_columns(&members)?;
    let (similarity, zero_norm) = cosine_similarity(&sub);
    if !zero_norm.is_empty() {
        log::warn!(
            "pseudo class {class_id}: {} zero-norm sample(s) treated as isolated",
            zero_norm.len()
        );
    }
    let threshold = match similarity_threshold(&similarity, rho) {
        Ok(t) => t,
        Err(Error::NoPairs) => {
            return Ok(ClassPartition {
                class_id,
                high: members,
                low: Vec::new(),
                graph: None,
            })
        }
        Err(e) => return Err(e),
    };
    let mut mask = adjacency_mask(&similarity, threshold);
    for &z in &zero_norm {
        mask.isolate(z);
    }
    let degrees = mask.degrees();

    let split = delete_isolated(&mask);
    let mut high = Vec::new();
    let mut low: Vec<usize> = split.deleted.iter().map(|&i| members[i]).collect();
    if let Some(root) = root_node(&split.mask.degrees()) {
        let tree = spanning_tree_select(&split.mask, root);
        let mut in_tree = vec![false; split.retained.len()];
        for &v in &tree.nodes {
            in_tree[v] = true;
        }
        for (local, &node) in split.retained.iter().enumerate() {
            if in_tree[local] {
                high.push(members[node]);
            } else {
                low.push(members[node]);
            }
        }
    }
    low.sort_unstable();

    Ok(ClassPartition {
        class_id,
        high,
        low,
        graph: Some(ClassSimilarityGraph {
            class_id,
            member_indices: members,
            similarity,
            threshold,
            mask,
            degrees,
        }),
    })
}

/// Groups `subset` (target indices) by their label, ascending within each class.
pub fn group_by_label(labels: &[usize], subset: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in subset {
        classes.entry(labels[i]).or_default().push(i);
    }
    for members in classes.values_mut() {
        members.sort_unstable();
    }
    classes
}

/// Partitions the samples in `subset` class by class. Returns per-class
/// results ordered by class id.
pub fn partition_subset(
    features: &FeatureMatrix,
    labels: &[usize],
    subset: &[usize],
    rho: f64,
) -> Result<Vec<ClassPartition>> {
    if labels.len() != features.n_samples() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: features.n_samples(),
        });
    }
    group_by_label(labels, subset)
        .into_par_iter()
        .map(|(class_id, members)| partition_class(features, class_id, members, rho))
        .collect()
}

/// Splits every target sample into high/low confidence. Labels are unchanged.
pub fn utsp_partition(
    target: &FeatureMatrix,
    pseudo: &PseudoLabelState,
    rho: f64,
) -> Result<PseudoLabelState> {
    let all: Vec<usize> = (0..pseudo.n_samples()).collect();
    let parts = partition_subset(target, pseudo.labels(), &all, rho)?;
    let (high, low) = parts
        .into_iter()
        .fold((Vec::new(), Vec::new()), |(mut h, mut l), p| {
            h.extend(p.high);
            l.extend(p.low);
            (h, l)
        });
    PseudoLabelState::from_partition(pseudo.labels().to_vec(), high, low)
}
