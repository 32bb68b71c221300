//! Brute-force reference implementations used as test oracles. Nothing here
//! calls into the library's algorithms; they only share input types.

#![allow(dead_code, clippy::needless_range_loop)]

use label_remedy::{FeatureMatrix, LabeledDomain, UnlabeledDomain};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Dense symmetric 0/1 adjacency, `adj[i][j]`.
pub type Dense = Vec<Vec<bool>>;

pub fn erdos_renyi(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Dense {
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    adj
}

/// Component of the max-degree non-isolated node (first index on ties),
/// found with union-find. Empty when every node is isolated.
pub fn dominant_component(adj: &Dense) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj
        .iter()
        .map(|r| r.iter().filter(|&&b| b).count())
        .collect();
    let mut root = None;
    for i in 0..n {
        if degree[i] > 0 && root.is_none_or(|r: usize| degree[i] > degree[r]) {
            root = Some(i);
        }
    }
    let Some(root) = root else {
        return Vec::new();
    };
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if adj[i][j] {
                uf.union(i, j);
            }
        }
    }
    let r = uf.find(root);
    (0..n).filter(|&i| uf.find(i) == r).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Threshold by full sort: the `floor(rho * n_p)`-th smallest non-zero upper
/// entry (rank clamped to at least 1).
pub fn sorted_threshold(sim: &[Vec<f64>], rho: f64) -> Option<f64> {
    let n = sim.len();
    let mut upper = Vec::new();
    for (i, row) in sim.iter().enumerate() {
        for &s in &row[i + 1..n] {
            if s != 0.0 {
                upper.push(s);
            }
        }
    }
    if upper.is_empty() {
        return None;
    }
    upper.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((rho * upper.len() as f64).floor() as usize).max(1);
    Some(upper[rank - 1])
}

/// Confidence split of one pseudo class, composed step by step from dense
/// matrices. Returns `(high, low)` as local indices.
pub fn reference_class_split(cols: &[Vec<f64>], rho: f64) -> (Vec<usize>, Vec<usize>) {
    let n = cols.len();
    if n <= 3 {
        return ((0..n).collect(), Vec::new());
    }
    let sim: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        cosine(&cols[i], &cols[j])
                    }
                })
                .collect()
        })
        .collect();
    let Some(delta) = sorted_threshold(&sim, rho) else {
        return ((0..n).collect(), Vec::new());
    };
    let zero: Vec<bool> = cols.iter().map(|c| c.iter().all(|&v| v == 0.0)).collect();
    let adj: Dense = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| i != j && !zero[i] && !zero[j] && sim[i][j] >= delta)
                .collect()
        })
        .collect();
    let high = dominant_component(&adj);
    let low = (0..n).filter(|i| !high.contains(i)).collect();
    (high, low)
}

/// 1-NN by exhaustive scan; ties keep the first training sample.
pub fn brute_nn(train: &[Vec<f64>], labels: &[usize], query: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (t, &l) in train.iter().zip(labels) {
        let d: f64 = t.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, l);
        }
    }
    best.1
}

/// Scripted inner loop: per-class dense split of the working set, frozen
/// confident pool, brute-force NN relabelling of the rest.
pub fn reference_remedy(
    source: &[Vec<f64>],
    source_labels: &[usize],
    target: &[Vec<f64>],
    crude: &[usize],
    rho: f64,
    inner_iters: usize,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut labels = crude.to_vec();
    let mut pool: Vec<usize> = Vec::new();
    let mut working: Vec<usize> = (0..target.len()).collect();
    let mut idle = 0;
    for _ in 0..inner_iters {
        if working.is_empty() {
            break;
        }
        let mut classes: Vec<usize> = working.iter().map(|&i| labels[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        let mut selected = Vec::new();
        let mut rest = Vec::new();
        for c in classes {
            let members: Vec<usize> = working
                .iter()
                .copied()
                .filter(|&i| labels[i] == c)
                .collect();
            let cols: Vec<Vec<f64>> = members.iter().map(|&i| target[i].clone()).collect();
            let (high, low) = reference_class_split(&cols, rho);
            selected.extend(high.iter().map(|&l| members[l]));
            rest.extend(low.iter().map(|&l| members[l]));
        }
        rest.sort_unstable();
        if selected.is_empty() {
            idle += 1;
            if idle >= 2 {
                break;
            }
        } else {
            idle = 0;
        }
        pool.extend(selected);
        pool.sort_unstable();
        let mut train = source.to_vec();
        let mut train_labels = source_labels.to_vec();
        for &i in &pool {
            train.push(target[i].clone());
            train_labels.push(labels[i]);
        }
        let updates: Vec<(usize, usize)> = rest
            .iter()
            .map(|&i| (i, brute_nn(&train, &train_labels, &target[i])))
            .collect();
        for (i, l) in updates {
            labels[i] = l;
        }
        working = rest;
    }
    (labels, pool, working)
}

pub fn columns(x: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..x.n_samples()).map(|i| x.column(i).to_vec()).collect()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Dense JDA-style MMD matrix written straight from the block definition:
/// `C * M_0 + sum_c M_c`, then scaled to unit Frobenius norm.
pub fn dense_jda_m(source_labels: &[usize], pseudo: &[usize], classes: usize) -> DMatrix<f64> {
    let ns = source_labels.len();
    let nt = pseudo.len();
    let n = ns + nt;
    let block = |in_s: &dyn Fn(usize) -> bool, in_t: &dyn Fn(usize) -> bool| {
        let cs = (0..ns).filter(|&i| in_s(i)).count() as f64;
        let ct = (0..nt).filter(|&j| in_t(j)).count() as f64;
        DMatrix::from_fn(n, n, |i, j| {
            let si = i < ns && in_s(i);
            let sj = j < ns && in_s(j);
            let ti = i >= ns && ct > 0.0 && in_t(i - ns);
            let tj = j >= ns && ct > 0.0 && in_t(j - ns);
            if si && sj {
                1.0 / (cs * cs)
            } else if ti && tj {
                1.0 / (ct * ct)
            } else if (si && tj) || (ti && sj) {
                -1.0 / (cs * ct)
            } else {
                0.0
            }
        })
    };
    let mut m = block(&|_| true, &|_| true) * classes as f64;
    for c in 0..classes {
        m += block(&|i| source_labels[i] == c, &|j| pseudo[j] == c);
    }
    let f = m.norm();
    m / f
}

pub fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Generalized symmetric-definite eigenproblem `A p = eta B p` through the
/// symmetric square root of `B`. Returns `(eta ascending, p as columns)`.
pub fn dense_generalized_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let be = SymmetricEigen::new(b.clone());
    let inv_sqrt = DMatrix::from_diagonal(&be.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let b_half_inv = &be.eigenvectors * inv_sqrt * be.eigenvectors.transpose();
    let c = &b_half_inv * a * &b_half_inv;
    let c = (&c + c.transpose()) * 0.5;
    let ce = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..ce.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| ce.eigenvalues[i].partial_cmp(&ce.eigenvalues[j]).unwrap());
    let values = order.iter().map(|&i| ce.eigenvalues[i]).collect();
    let vecs: Vec<DVector<f64>> = order
        .iter()
        .map(|&i| &b_half_inv * ce.eigenvectors.column(i))
        .collect();
    (values, DMatrix::from_columns(&vecs))
}

pub fn l2_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    out
}

pub fn domains(
    xs: DMatrix<f64>,
    ys: Vec<usize>,
    xt: DMatrix<f64>,
) -> (LabeledDomain, UnlabeledDomain) {
    (
        LabeledDomain::new(FeatureMatrix::new(xs).unwrap(), ys).unwrap(),
        UnlabeledDomain::new(FeatureMatrix::new(xt).unwrap()),
    )
}
