//! Outer adaptation loop: learn a projection, pseudo-label the target with a
//! source-trained nearest neighbour, remedy the pseudo labels, repeat.

use thiserror::Error;

use crate::adapters::{fit_with_solver, MmdSolver};
use crate::classifier::NnModel;
use crate::datasets::l2_normalize_columns;
use crate::error::Error;
use crate::eval::accuracy;
use crate::remedy::remedy;
use crate::types::{
    AdapterKind, ExperimentConfig, FeatureMatrix, LabeledDomain, Projection, PseudoLabelState,
    UnlabeledDomain,
};

/// Diagnostics for one outer iteration. Accuracies are only filled in when
/// ground truth was supplied.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub iter: usize,
    pub crude_label_accuracy: Option<f64>,
    pub remedied_label_accuracy: Option<f64>,
    pub high_conf_fraction: f64,
    pub per_class_high_counts: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub pseudo: PseudoLabelState,
    pub trace: Vec<IterationTrace>,
}

impl RunOutcome {
    pub fn labels(&self) -> &[usize] {
        self.pseudo.labels()
    }
}

/// A failed run keeps the iterations that completed.
#[derive(Debug, Error)]
#[error("iteration {iteration} failed: {source}")]
pub struct RunFailure {
    pub iteration: usize,
    pub trace: Vec<IterationTrace>,
    #[source]
    pub source: Error,
}

impl RunFailure {
    fn setup(source: Error) -> Self {
        Self {
            iteration: 0,
            trace: Vec::new(),
            source,
        }
    }
}

/// Runs the full loop. `ground_truth` is only read to fill in the trace.
pub fn run(
    source: &LabeledDomain,
    target: &UnlabeledDomain,
    cfg: &ExperimentConfig,
    ground_truth: Option<&[usize]>,
) -> Result<RunOutcome, RunFailure> {
    let m = source.features().dim();
    let prepared = prepare(source, target, cfg, ground_truth).map_err(RunFailure::setup)?;
    let Prepared {
        source,
        target,
        solver,
    } = prepared;

    let mut trace: Vec<IterationTrace> = Vec::new();
    let mut current: Option<PseudoLabelState> = None;
    for iter in 1..=cfg.outer_iters {
        let step = outer_step(&source, &target, solver.as_ref(), cfg, current.as_ref(), m);
        let state = match step {
            Ok(s) => s,
            Err(e) => {
                return Err(RunFailure {
                    iteration: iter,
                    trace,
                    source: e,
                })
            }
        };
        let (crude, next) = state;
        trace.push(IterationTrace {
            iter,
            crude_label_accuracy: ground_truth.map(|gt| accuracy_or_zero(&crude, gt)),
            remedied_label_accuracy: ground_truth.map(|gt| accuracy_or_zero(next.labels(), gt)),
            high_conf_fraction: next.high_fraction(),
            per_class_high_counts: next.high_counts_per_class(source.num_classes()),
        });
        let unchanged = current
            .as_ref()
            .is_some_and(|c| c.labels() == next.labels());
        current = Some(next);
        if cfg.early_stop && unchanged {
            break;
        }
    }
    Ok(RunOutcome {
        pseudo: current.expect("at least one outer iteration"),
        trace,
    })
}

struct Prepared {
    source: LabeledDomain,
    target: UnlabeledDomain,
    solver: Option<MmdSolver>,
}

fn prepare(
    source: &LabeledDomain,
    target: &UnlabeledDomain,
    cfg: &ExperimentConfig,
    ground_truth: Option<&[usize]>,
) -> Result<Prepared, Error> {
    let m = source.features().dim();
    cfg.validate(m)?;
    if target.features().dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: target.features().dim(),
        });
    }
    if let Some(gt) = ground_truth {
        if gt.len() != target.n_samples() {
            return Err(Error::LengthMismatch {
                left: gt.len(),
                right: target.n_samples(),
            });
        }
    }
    let source = source.with_features(l2_normalize_columns(source.features()).features)?;
    let target = UnlabeledDomain::new(l2_normalize_columns(target.features()).features);
    let solver = match cfg.adapter {
        AdapterKind::Identity => None,
        AdapterKind::Jda | AdapterKind::Bda => Some(MmdSolver::new(&source, &target)?),
    };
    Ok(Prepared {
        source,
        target,
        solver,
    })
}

/// One outer iteration; returns the crude labels and the remedied state.
fn outer_step(
    source: &LabeledDomain,
    target: &UnlabeledDomain,
    solver: Option<&MmdSolver>,
    cfg: &ExperimentConfig,
    previous: Option<&PseudoLabelState>,
    m: usize,
) -> Result<(Vec<usize>, PseudoLabelState), Error> {
    let projection = match solver {
        Some(s) => fit_with_solver(s, cfg.adapter, source, target, previous, cfg)?,
        None => Projection::identity(cfg.subspace_dim.min(m), m)?,
    };
    let z_source = project(&projection, source.features())?;
    let z_target = project(&projection, target.features())?;
    let projected_source = source.with_features(z_source)?;

    let weak = NnModel::fit(
        projected_source.features().clone(),
        projected_source.labels().to_vec(),
    )?;
    let crude = weak.predict(&z_target)?;
    let crude_state = PseudoLabelState::all_high(crude.clone())?;
    let next = if cfg.tsrp {
        remedy(
            &projected_source,
            &z_target,
            &crude_state,
            cfg.rho,
            cfg.inner_iters,
        )?
    } else {
        crude_state
    };
    Ok((crude, next))
}

fn project(p: &Projection, x: &FeatureMatrix) -> Result<FeatureMatrix, Error> {
    Ok(l2_normalize_columns(&p.apply(x)?).features)
}

fn accuracy_or_zero(pred: &[usize], truth: &[usize]) -> f64 {
    accuracy(pred, truth).unwrap_or(0.0)
}
