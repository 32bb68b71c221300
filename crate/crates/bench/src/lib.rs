//! Seeded workloads shared by the benchmarks.

use label_remedy::datasets::{l2_normalize_columns, make_synthetic_shift, plant_label_noise};
use label_remedy::{LabeledDomain, PseudoLabelState, UnlabeledDomain};

/// Normalised source/target pair with 30% planted pseudo-label noise.
pub struct Workload {
    pub source: LabeledDomain,
    pub target: UnlabeledDomain,
    pub pseudo: PseudoLabelState,
    pub ground_truth: Vec<usize>,
}

pub fn workload(classes: usize, per_class: usize, dim: usize, seed: u64) -> Workload {
    let data = make_synthetic_shift(classes, per_class, dim, 2.0, 0.5, seed).expect("valid sizes");
    let crude = plant_label_noise(&data.ground_truth, classes, 0.3, seed ^ 0x5eed);
    let source = data
        .source
        .with_features(l2_normalize_columns(data.source.features()).features)
        .expect("same labels");
    let target = UnlabeledDomain::new(l2_normalize_columns(data.target.features()).features);
    Workload {
        source,
        target,
        pseudo: PseudoLabelState::all_high(crude).expect("non-empty"),
        ground_truth: data.ground_truth,
    }
}
