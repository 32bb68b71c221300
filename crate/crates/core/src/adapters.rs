//! Projection learners that align source and target distributions.
//!
//! The JDA/BDA adapters minimise a maximum mean discrepancy objective
//! `tr(P X M X^T P^T) + lambda ||P||^2` subject to `P X H X^T P^T = I`, which is
//! the generalized symmetric eigenproblem
//!
//! ```text
//! (X M X^T + lambda I) p = eta (X H X^T) p
//! ```
//!
//! solved for the `k` smallest `eta`. `M` is a sum of weighted rank-one terms
//! `e e^T`, one marginal term and one per class, so `X M X^T` is assembled from
//! `X e` vectors without forming the `n x n` matrix.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::{
    AdapterKind, ExperimentConfig, LabeledDomain, Projection, PseudoLabelState, UnlabeledDomain,
};

/// Jitter added to the centering scatter before factorisation.
pub const CHOLESKY_JITTER: f64 = 1e-9;

/// Relative eigenvalue cutoff for the numerical rank of `X H X^T`.
const RANK_TOLERANCE: f64 = 1e-10;

const EIG_MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmdTermKind {
    Marginal,
    Class(usize),
}

/// One rank-one MMD constituent `e e^T` over the concatenated samples.
#[derive(Clone, Debug)]
pub struct MmdTerm {
    pub kind: MmdTermKind,
    pub indicator: DVector<f64>,
}

impl MmdTerm {
    pub fn dense(&self) -> DMatrix<f64> {
        &self.indicator * self.indicator.transpose()
    }
}

/// MMD weights over `[X^S, X^T]` plus the centering matrix.
#[derive(Clone, Debug)]
pub struct MmdSystem {
    pub n_source: usize,
    pub n_target: usize,
    /// `M_0` first, then one term per source class, ascending.
    pub terms: Vec<MmdTerm>,
    /// Combination weight of each term, already divided by `||M||_F`.
    pub weights: Vec<f64>,
}

impl MmdSystem {
    pub fn n_total(&self) -> usize {
        self.n_source + self.n_target
    }

    pub fn marginal(&self) -> &MmdTerm {
        &self.terms[0]
    }

    pub fn class_terms(&self) -> &[MmdTerm] {
        &self.terms[1..]
    }

    /// Combined `M` as a dense `n x n` matrix.
    pub fn dense_m(&self) -> DMatrix<f64> {
        let n = self.n_total();
        self.terms
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(n, n), |acc, (t, &w)| acc + t.dense() * w)
    }

    /// Centering matrix `I - (1/n) 1 1^T`.
    pub fn dense_h(&self) -> DMatrix<f64> {
        let n = self.n_total();
        DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
    }

    /// `X M X^T` from the rank-one factors.
    pub fn scatter(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = x.nrows();
        self.terms
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(m, m), |mut acc, (t, &w)| {
                let v = x * &t.indicator;
                acc.ger(w, &v, &v, 1.0);
                acc
            })
    }
}

/// Builds the marginal term and, when pseudo labels exist, one conditional
/// term per source class.
///
/// `mu = None` gives the joint weighting (`C * M_0 + sum M_c`); `Some(mu)` the
/// balanced one (`(1 - mu) C M_0 + mu sum M_c`). The combination is scaled to
/// unit Frobenius norm. A class with no target members contributes only its
/// source block.
pub fn build_mmd_matrices(
    source: &LabeledDomain,
    target: &UnlabeledDomain,
    pseudo: Option<&PseudoLabelState>,
    mu: Option<f64>,
) -> Result<MmdSystem> {
    let ns = source.n_samples();
    let nt = target.n_samples();
    if let Some(p) = pseudo {
        if p.n_samples() != nt {
            return Err(Error::LengthMismatch {
                left: p.n_samples(),
                right: nt,
            });
        }
    }
    let n_classes = source.num_classes();

    let marginal = DVector::from_fn(ns + nt, |i, _| {
        if i < ns {
            1.0 / ns as f64
        } else {
            -1.0 / nt as f64
        }
    });
    let mut terms = vec![MmdTerm {
        kind: MmdTermKind::Marginal,
        indicator: marginal,
    }];

    if let Some(pseudo) = pseudo {
        let mut src_counts = vec![0usize; n_classes];
        for &y in source.labels() {
            src_counts[y] += 1;
        }
        let mut tgt_counts = vec![0usize; n_classes];
        for &y in pseudo.labels() {
            if y < n_classes {
                tgt_counts[y] += 1;
            }
        }
        for c in 0..n_classes {
            let mut e = DVector::zeros(ns + nt);
            for (i, &y) in source.labels().iter().enumerate() {
                if y == c {
                    e[i] = 1.0 / src_counts[c] as f64;
                }
            }
            if tgt_counts[c] > 0 {
                for (j, &y) in pseudo.labels().iter().enumerate() {
                    if y == c {
                        e[ns + j] = -1.0 / tgt_counts[c] as f64;
                    }
                }
            }
            terms.push(MmdTerm {
                kind: MmdTermKind::Class(c),
                indicator: e,
            });
        }
    }

    let marginal_weight = match mu {
        Some(mu) if terms.len() > 1 => (1.0 - mu) * n_classes as f64,
        _ => n_classes as f64,
    };
    let class_weight = mu.unwrap_or(1.0);
    let mut weights: Vec<f64> = std::iter::once(marginal_weight)
        .chain(std::iter::repeat_n(class_weight, terms.len() - 1))
        .collect();

    // ||sum w_i e_i e_i^T||_F^2 = sum_ij w_i w_j (e_i . e_j)^2
    let mut fro2 = 0.0;
    for (a, ta) in terms.iter().enumerate() {
        for (b, tb) in terms.iter().enumerate() {
            let d = ta.indicator.dot(&tb.indicator);
            fro2 += weights[a] * weights[b] * d * d;
        }
    }
    if fro2 > 0.0 {
        let scale = fro2.sqrt();
        weights.iter_mut().for_each(|w| *w /= scale);
    }

    Ok(MmdSystem {
        n_source: ns,
        n_target: nt,
        terms,
        weights,
    })
}

/// Factorised constraint side of the eigenproblem for one `[X^S, X^T]`.
///
/// The centering scatter does not depend on pseudo labels, so one solver is
/// reused for every outer iteration.
#[derive(Clone, Debug)]
pub struct MmdSolver {
    x: DMatrix<f64>,
    /// `L^{-1}` where `L L^T = X H X^T + jitter I`.
    l_inv: DMatrix<f64>,
    /// `L^{-1} L^{-T}`.
    b_inv: DMatrix<f64>,
    rank: usize,
}

impl MmdSolver {
    pub fn new(source: &LabeledDomain, target: &UnlabeledDomain) -> Result<Self> {
        let x = source.features().hstack(target.features())?.into_matrix();
        let scatter = centering_scatter(&x);
        let m = scatter.nrows();

        let spectrum = SymmetricEigen::try_new(scatter.clone(), f64::EPSILON, EIG_MAX_ITER)
            .ok_or_else(|| Error::EigSolverFailure("centering scatter did not converge".into()))?;
        let top = spectrum.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let rank = spectrum
            .eigenvalues
            .iter()
            .filter(|&&v| v > RANK_TOLERANCE * top.max(f64::MIN_POSITIVE))
            .count();

        let jittered = scatter + DMatrix::identity(m, m) * CHOLESKY_JITTER;
        let chol = Cholesky::new(jittered).ok_or_else(|| {
            Error::EigSolverFailure("centering scatter is not positive definite".into())
        })?;
        let l = chol.l();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .ok_or_else(|| Error::EigSolverFailure("singular Cholesky factor".into()))?;
        let b_inv = &l_inv * l_inv.transpose();
        Ok(Self {
            x,
            l_inv,
            b_inv,
            rank,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.x.nrows()
    }

    /// Numerical rank of `X H X^T`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Concatenated `[X^S, X^T]`.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Returns the projection and its `k` generalized eigenvalues, ascending.
    pub fn solve(&self, mmd: &MmdSystem, lambda: f64, k: usize) -> Result<(Projection, Vec<f64>)> {
        let m = self.feature_dim();
        if k == 0 || k > m {
            return Err(Error::InvalidConfig(format!(
                "subspace dim {k} not in [1, {m}]"
            )));
        }
        if k > self.rank {
            return Err(Error::SingularSystem {
                rank: self.rank,
                dim: k,
            });
        }
        if mmd.n_total() != self.x.ncols() {
            return Err(Error::LengthMismatch {
                left: mmd.n_total(),
                right: self.x.ncols(),
            });
        }
        // L^{-1} (lambda I + sum w v v^T) L^{-T} = lambda B^{-1} + sum w (L^{-1} v)(L^{-1} v)^T
        let mut reduced = &self.b_inv * lambda;
        for (term, &w) in mmd.terms.iter().zip(&mmd.weights) {
            let v = &self.l_inv * (&self.x * &term.indicator);
            reduced.ger(w, &v, &v, 1.0);
        }
        symmetrize(&mut reduced);

        let eig =
            SymmetricEigen::try_new(reduced, f64::EPSILON, EIG_MAX_ITER).ok_or_else(|| {
                Error::EigSolverFailure("reduced eigenproblem did not converge".into())
            })?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then(a.cmp(&b))
        });

        let mut p = DMatrix::zeros(k, m);
        let mut values = Vec::with_capacity(k);
        for (row, &idx) in order.iter().take(k).enumerate() {
            let w = eig.eigenvectors.column(idx);
            let mut pv = self.l_inv.tr_mul(&w);
            // fix the sign so the largest-magnitude entry is positive
            let lead = pv.iamax();
            if pv[lead] < 0.0 {
                pv.neg_mut();
            }
            p.row_mut(row).copy_from(&pv.transpose());
            values.push(eig.eigenvalues[idx]);
        }
        Ok((Projection::new(p)?, values))
    }
}

/// `X H X^T`, computed from mean-centred columns.
pub fn centering_scatter(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.column_mean();
    let mut centred = x.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let mut s = &centred * centred.transpose();
    symmetrize(&mut s);
    s
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// `||P (X H X^T) P^T - I||_F / sqrt(k)` for the concatenated data `X`.
pub fn constraint_residual(projection: &Projection, x: &DMatrix<f64>) -> f64 {
    let p = projection.matrix();
    let k = p.nrows();
    let gram = p * centering_scatter(x) * p.transpose();
    (gram - DMatrix::identity(k, k)).norm() / (k as f64).sqrt()
}

/// Learns `P` for one adapter. Without pseudo labels only the marginal term
/// is used.
pub fn fit_projection(
    adapter: AdapterKind,
    source: &LabeledDomain,
    target: &UnlabeledDomain,
    pseudo: Option<&PseudoLabelState>,
    cfg: &ExperimentConfig,
) -> Result<Projection> {
    let m = source.features().dim();
    match adapter {
        AdapterKind::Identity => Projection::identity(cfg.subspace_dim.min(m), m),
        AdapterKind::Jda | AdapterKind::Bda => {
            let solver = MmdSolver::new(source, target)?;
            fit_with_solver(&solver, adapter, source, target, pseudo, cfg)
        }
    }
}

/// [`fit_projection`] against a prebuilt solver.
pub fn fit_with_solver(
    solver: &MmdSolver,
    adapter: AdapterKind,
    source: &LabeledDomain,
    target: &UnlabeledDomain,
    pseudo: Option<&PseudoLabelState>,
    cfg: &ExperimentConfig,
) -> Result<Projection> {
    let mu = match adapter {
        AdapterKind::Bda => Some(cfg.mu),
        AdapterKind::Jda => None,
        AdapterKind::Identity => {
            let m = solver.feature_dim();
            return Projection::identity(cfg.subspace_dim.min(m), m);
        }
    };
    let mmd = build_mmd_matrices(source, target, pseudo, mu)?;
    solver
        .solve(&mmd, cfg.lambda, cfg.subspace_dim)
        .map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use crate::types::FeatureMatrix;

    use super::*;

    fn source(cols: &[Vec<f64>], labels: Vec<usize>) -> LabeledDomain {
        LabeledDomain::new(FeatureMatrix::from_columns(cols).unwrap(), labels).unwrap()
    }

    fn target(cols: &[Vec<f64>]) -> UnlabeledDomain {
        UnlabeledDomain::new(FeatureMatrix::from_columns(cols).unwrap())
    }

    #[test]
    fn marginal_rows_sum_to_zero() {
        let s = source(&[vec![1.0], vec![2.0]], vec![0, 0]);
        let t = target(&[vec![3.0], vec![4.0]]);
        let sys = build_mmd_matrices(&s, &t, None, None).unwrap();
        let m0 = sys.marginal().dense();
        for r in 0..4 {
            assert_eq!(m0.row(r).sum(), 0.0);
        }
        assert_eq!(m0[(0, 1)], 0.25);
        assert_eq!(m0[(2, 3)], 0.25);
        assert_eq!(m0[(0, 3)], -0.25);
    }

    #[test]
    fn single_class_term_equals_marginal() {
        let s = source(&[vec![1.0], vec![2.0], vec![0.5]], vec![0, 0, 0]);
        let t = target(&[vec![3.0], vec![4.0]]);
        let pseudo = PseudoLabelState::all_high(vec![0, 0]).unwrap();
        let sys = build_mmd_matrices(&s, &t, Some(&pseudo), None).unwrap();
        assert_eq!(sys.class_terms()[0].dense(), sys.marginal().dense());
    }

    #[test]
    fn class_terms_match_hand_built_matrices() {
        let s = source(&[vec![1.0], vec![2.0], vec![0.5]], vec![0, 1, 1]);
        let t = target(&[vec![3.0], vec![4.0]]);
        let pseudo = PseudoLabelState::all_high(vec![0, 1]).unwrap();
        let sys = build_mmd_matrices(&s, &t, Some(&pseudo), None).unwrap();
        // class 0: source {0}, target {3}; class 1: source {1, 2}, target {4}
        #[rustfmt::skip]
        let m_0 = DMatrix::from_row_slice(5, 5, &[
             1.0, 0.0, 0.0, -1.0, 0.0,
             0.0, 0.0, 0.0,  0.0, 0.0,
             0.0, 0.0, 0.0,  0.0, 0.0,
            -1.0, 0.0, 0.0,  1.0, 0.0,
             0.0, 0.0, 0.0,  0.0, 0.0,
        ]);
        #[rustfmt::skip]
        let m_1 = DMatrix::from_row_slice(5, 5, &[
            0.0,  0.0,   0.0,  0.0,  0.0,
            0.0,  0.25,  0.25, 0.0, -0.5,
            0.0,  0.25,  0.25, 0.0, -0.5,
            0.0,  0.0,   0.0,  0.0,  0.0,
            0.0, -0.5,  -0.5,  0.0,  1.0,
        ]);
        assert_abs_diff_eq!(sys.class_terms()[0].dense(), m_0, epsilon = 1e-15);
        assert_abs_diff_eq!(sys.class_terms()[1].dense(), m_1, epsilon = 1e-15);
        for t in &sys.terms {
            assert_abs_diff_eq!(t.dense().row_sum().norm(), 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(sys.dense_m().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_target_class_keeps_source_block() {
        let s = source(&[vec![1.0], vec![2.0]], vec![0, 1]);
        let t = target(&[vec![3.0], vec![4.0]]);
        let pseudo = PseudoLabelState::all_high(vec![0, 0]).unwrap();
        let sys = build_mmd_matrices(&s, &t, Some(&pseudo), None).unwrap();
        let m1 = sys.class_terms()[1].dense();
        assert_eq!(m1[(1, 1)], 1.0);
        assert_eq!(m1.sum(), 1.0);
    }

    #[test]
    fn centering_matrix_is_idempotent() {
        let s = source(&[vec![1.0], vec![2.0]], vec![0, 0]);
        let t = target(&[vec![3.0], vec![4.0], vec![5.0]]);
        let sys = build_mmd_matrices(&s, &t, None, None).unwrap();
        let h = sys.dense_h();
        assert!((&h * &h - &h).norm() < 1e-10);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn balanced_weights_follow_mu() {
        let s = source(&[vec![1.0], vec![2.0]], vec![0, 1]);
        let t = target(&[vec![3.0], vec![4.0]]);
        let pseudo = PseudoLabelState::all_high(vec![0, 1]).unwrap();
        let sys = build_mmd_matrices(&s, &t, Some(&pseudo), Some(0.25)).unwrap();
        // (1 - mu) * C : mu = 1.5 : 0.25
        assert_abs_diff_eq!(sys.weights[0] / sys.weights[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_adapter_selects_leading_coordinates() {
        let s = source(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], vec![0, 1]);
        let t = target(&[vec![7.0, 8.0, 9.0]]);
        let cfg = ExperimentConfig {
            adapter: AdapterKind::Identity,
            subspace_dim: 3,
            ..ExperimentConfig::default()
        };
        let p = fit_projection(AdapterKind::Identity, &s, &t, None, &cfg).unwrap();
        let z = p.apply(t.features()).unwrap();
        assert_eq!(z.column(0), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn factored_scatter_matches_dense() {
        let s = source(
            &[vec![1.0, 0.5], vec![2.0, -1.0], vec![0.3, 0.3]],
            vec![0, 1, 1],
        );
        let t = target(&[vec![3.0, 1.0], vec![4.0, 0.0]]);
        let pseudo = PseudoLabelState::all_high(vec![1, 0]).unwrap();
        let sys = build_mmd_matrices(&s, &t, Some(&pseudo), Some(0.3)).unwrap();
        let x = s.features().hstack(t.features()).unwrap().into_matrix();
        let dense = &x * sys.dense_m() * x.transpose();
        assert_abs_diff_eq!(sys.scatter(&x), dense, epsilon = 1e-12);
        let dense_h = &x * sys.dense_h() * x.transpose();
        assert_abs_diff_eq!(centering_scatter(&x), dense_h, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_scatter_is_reported() {
        // all samples on one line: X H X^T has rank 1
        let s = source(&[vec![1.0, 1.0], vec![2.0, 2.0]], vec![0, 1]);
        let t = target(&[vec![3.0, 3.0], vec![4.0, 4.0]]);
        let cfg = ExperimentConfig {
            subspace_dim: 2,
            ..ExperimentConfig::default()
        };
        let r = fit_projection(AdapterKind::Jda, &s, &t, None, &cfg);
        assert!(matches!(r, Err(Error::SingularSystem { rank: 1, dim: 2 })));
    }
}
