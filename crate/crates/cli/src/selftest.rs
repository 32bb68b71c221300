//! Runtime oracle checks: every core step is compared against a brute-force
//! computation on seeded random instances.

use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use label_remedy::datasets::{decode_raw, encode_raw, l2_normalize_columns};
use label_remedy::utsp::{delete_isolated, root_node, similarity_threshold, spanning_tree_select};
use label_remedy::{
    constraint_residual, fit_projection, utsp_partition, AdapterKind, AdjacencyMask,
    ExperimentConfig, FeatureMatrix, LabeledDomain, NnModel, PseudoLabelState, UnlabeledDomain,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Args)]
pub struct SelftestArgs {
    /// Random instances per check.
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Component of the first max-degree node, via union-find.
fn union_find_component(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut degree = vec![0usize; n];
    for &(a, b) in edges {
        degree[a] += 1;
        degree[b] += 1;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let top = degree.iter().copied().max().unwrap_or(0);
    if top == 0 {
        return Vec::new();
    }
    let root = degree.iter().position(|&d| d == top).expect("max exists");
    let r = find(&mut parent, root);
    (0..n).filter(|&i| find(&mut parent, i) == r).collect()
}

fn check_selection(cases: usize, rng: &mut ChaCha8Rng) -> bool {
    (0..cases).all(|_| {
        let n = rng.random_range(1..=60);
        let p = rng.random_range(0.05..=0.5);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let split = delete_isolated(&AdjacencyMask::from_edges(n, &edges));
        let ours: Vec<usize> = root_node(&split.mask.degrees())
            .map(|r| {
                spanning_tree_select(&split.mask, r)
                    .nodes
                    .iter()
                    .map(|&l| split.retained[l])
                    .collect()
            })
            .unwrap_or_default();
        ours == union_find_component(n, &edges)
    })
}

fn check_threshold(cases: usize, rng: &mut ChaCha8Rng) -> bool {
    (0..cases).all(|_| {
        let n = rng.random_range(2..40);
        let rho = rng.random_range(0.01..0.99);
        let mut s = DMatrix::zeros(n, n);
        let mut upper = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let v = if rng.random_bool(0.1) {
                    0.0
                } else {
                    rng.random_range(-1.0..1.0)
                };
                s[(i, j)] = v;
                s[(j, i)] = v;
                if v != 0.0 {
                    upper.push(v);
                }
            }
        }
        upper.sort_by(f64::total_cmp);
        match similarity_threshold(&s, rho) {
            Ok(delta) => {
                let rank = ((rho * upper.len() as f64).floor() as usize).max(1);
                delta == upper[rank - 1]
            }
            Err(_) => upper.is_empty(),
        }
    })
}

fn check_scale(cases: usize, rng: &mut ChaCha8Rng) -> bool {
    (0..cases).all(|_| {
        let (dim, n) = (rng.random_range(2..10), rng.random_range(8..40));
        let x = random_matrix(dim, n, rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let scaled = DMatrix::from_fn(dim, n, |i, j| {
            if labels[j] == 0 {
                7.3 * x[(i, j)]
            } else {
                x[(i, j)]
            }
        });
        let pseudo = PseudoLabelState::all_high(labels).expect("non-empty");
        let a = utsp_partition(&FeatureMatrix::new(x).expect("finite"), &pseudo, 0.85);
        let b = utsp_partition(&FeatureMatrix::new(scaled).expect("finite"), &pseudo, 0.85);
        matches!((a, b), (Ok(a), Ok(b)) if a.high_conf() == b.high_conf())
    })
}

fn check_nn(cases: usize, rng: &mut ChaCha8Rng) -> bool {
    (0..cases).all(|_| {
        let (dim, n) = (rng.random_range(1..8), rng.random_range(1..30));
        let train = random_matrix(dim, n, rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let queries = random_matrix(dim, 5, rng);
        let Ok(model) = NnModel::fit(
            FeatureMatrix::new(train.clone()).expect("finite"),
            labels.clone(),
        ) else {
            return false;
        };
        let Ok(pred) = model.predict(&FeatureMatrix::new(queries.clone()).expect("finite")) else {
            return false;
        };
        pred.iter().enumerate().all(|(q, &p)| {
            let mut best = (f64::INFINITY, 0);
            for (t, &label) in labels.iter().enumerate() {
                let d = (train.column(t) - queries.column(q)).norm_squared();
                if d < best.0 {
                    best = (d, label);
                }
            }
            best.1 == p
        })
    })
}

fn check_constraint(cases: usize, rng: &mut ChaCha8Rng) -> bool {
    (0..cases.div_ceil(10)).all(|_| {
        let (m, ns, nt) = (10, 16, 14);
        let xs = random_matrix(m, ns, rng);
        let xt = random_matrix(m, nt, rng);
        let source = LabeledDomain::new(
            FeatureMatrix::new(xs).expect("finite"),
            (0..ns).map(|i| i % 3).collect(),
        )
        .expect("labels fit");
        let target = UnlabeledDomain::new(FeatureMatrix::new(xt).expect("finite"));
        let pseudo = PseudoLabelState::all_high((0..nt).map(|_| rng.random_range(0..3)).collect())
            .expect("non-empty");
        let x = source
            .features()
            .hstack(target.features())
            .expect("same dim")
            .into_matrix();
        [AdapterKind::Jda, AdapterKind::Bda]
            .into_iter()
            .all(|adapter| {
                let cfg = ExperimentConfig {
                    adapter,
                    subspace_dim: 5,
                    ..ExperimentConfig::default()
                };
                fit_projection(adapter, &source, &target, Some(&pseudo), &cfg)
                    .is_ok_and(|p| constraint_residual(&p, &x) <= 1e-6)
            })
    })
}

fn check_io(cases: usize, rng: &mut ChaCha8Rng) -> bool {
    (0..cases).all(|_| {
        let x = FeatureMatrix::new(random_matrix(
            rng.random_range(1..6),
            rng.random_range(1..6),
            rng,
        ))
        .expect("finite");
        let back = decode_raw(std::path::Path::new("memory"), &encode_raw(&x));
        let normalised = l2_normalize_columns(&x).features;
        let twice = l2_normalize_columns(&normalised).features;
        back.is_ok_and(|b| b == x) && (normalised.as_matrix() - twice.as_matrix()).amax() <= 1e-12
    })
}

pub fn selftest(args: SelftestArgs) -> Result<ExitCode> {
    type Check = fn(usize, &mut ChaCha8Rng) -> bool;
    let checks: [(&str, Check); 6] = [
        ("spanning-tree selection vs union-find", check_selection),
        ("similarity threshold vs full sort", check_threshold),
        ("partition under class scaling", check_scale),
        ("nearest neighbour vs exhaustive scan", check_nn),
        ("projection scatter constraint", check_constraint),
        ("raw_f64 round trip and normalisation", check_io),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i as u64));
        let start = Instant::now();
        let ok = check(args.cases, &mut rng);
        failed += usize::from(!ok);
        println!(
            "{} {name} ({:.2?})",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed()
        );
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
