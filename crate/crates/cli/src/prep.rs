//! Offline dataset preparation. Nothing is downloaded: feature files must
//! already be on disk.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use label_remedy::datasets::{
    coil_pose_split, load_labels, load_matrix, resize_images, save_raw, sha256_file,
    subsample_indices, DatasetManifest, LabelMap, MatrixFormat,
};
use label_remedy::FeatureMatrix;

#[derive(Args)]
pub struct PrepArgs {
    /// Feature file (`.csv`, or `raw_f64` otherwise).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: Option<MatrixFormat>,
    /// Label file, one label per line. Needed unless the CSV has a label column.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Dataset name used for the output files and manifest.
    #[arg(long)]
    name: String,
    #[arg(long)]
    out_dir: PathBuf,
    /// Keep a seeded uniform sample of this many samples.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bilinear image resize, e.g. `28x28:16x16`.
    #[arg(long)]
    resize: Option<String>,
    /// Split a pose-ordered COIL20 file into `coil1` and `coil2`.
    #[arg(long)]
    coil_split: bool,
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once('x')
        .with_context(|| format!("expected WxH, got `{s}`"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn parse_resize(s: &str) -> Result<((usize, usize), (usize, usize))> {
    let (from, to) = s
        .split_once(':')
        .with_context(|| format!("expected FROM:TO, got `{s}`"))?;
    Ok((parse_size(from)?, parse_size(to)?))
}

pub fn prep(args: PrepArgs) -> Result<()> {
    let format = args
        .format
        .unwrap_or_else(|| MatrixFormat::from_path(&args.input));
    let loaded = load_matrix(&args.input, format)?;
    let (labels, names) = match (&args.labels, loaded.labels, loaded.label_map) {
        (Some(p), ..) => load_labels(p)?,
        (None, Some(l), Some(m)) => (l, m),
        _ => bail!(
            "{} has no label column; pass --labels",
            args.input.display()
        ),
    };
    if labels.len() != loaded.features.n_samples() {
        bail!(
            "{} labels for {} samples",
            labels.len(),
            loaded.features.n_samples()
        );
    }

    let mut features = loaded.features;
    if let Some(spec) = &args.resize {
        let (from, to) = parse_resize(spec)?;
        features = resize_images(&features, from, to)?;
    }
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    if args.coil_split {
        let (first, second) = coil_pose_split(&labels)?;
        for (name, idx) in [("coil1", first), ("coil2", second)] {
            write_domain(&args.out_dir, name, &features, &labels, &names, &idx)?;
        }
        return Ok(());
    }
    let idx = match args.subsample {
        Some(n) => subsample_indices(features.n_samples(), n, args.seed)?,
        None => (0..features.n_samples()).collect(),
    };
    write_domain(&args.out_dir, &args.name, &features, &labels, &names, &idx)
}

/// Writes `<name>.f64`, `<name>.labels` (original label tokens) and
/// `<name>.manifest` for the selected columns.
fn write_domain(
    dir: &Path,
    name: &str,
    features: &FeatureMatrix,
    labels: &[usize],
    names: &LabelMap,
    idx: &[usize],
) -> Result<()> {
    let subset = features.select_columns(idx)?;
    let feature_file = format!("{name}.f64");
    let label_file = format!("{name}.labels");
    let manifest_path = dir.join(format!("{name}.manifest"));
    let mut manifest = DatasetManifest {
        name: name.to_string(),
        format: MatrixFormat::RawF64,
        feature_path: feature_file.clone().into(),
        label_path: Some(label_file.clone().into()),
        feature_dim: subset.dim(),
        expected_samples: subset.n_samples(),
        checksum: String::new(),
    };
    // Known dataset names must match their reference shape.
    DatasetManifest::parse(&manifest_path, &manifest.render())?;

    let feature_path = dir.join(&feature_file);
    save_raw(&feature_path, &subset)?;
    let tokens: String = idx
        .iter()
        .map(|&i| format!("{}\n", names.name(labels[i]).unwrap_or_default()))
        .collect();
    let label_path = dir.join(&label_file);
    fs::write(&label_path, tokens).with_context(|| format!("writing {}", label_path.display()))?;
    manifest.checksum = sha256_file(&feature_path)?;
    fs::write(&manifest_path, manifest.render())
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    println!(
        "{}: {} samples x {} dims",
        manifest_path.display(),
        subset.n_samples(),
        subset.dim()
    );
    Ok(())
}
