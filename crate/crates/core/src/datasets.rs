//! Feature-file I/O, dataset manifests, seeded subsampling, synthetic
//! domain-shift generation and column normalisation.
//!
//! Two matrix formats are supported:
//!
//! * `csv`: a header line `dim=D,n=N`, then one sample per line as `D` comma
//!   separated floats, optionally followed by a label token.
//! * `raw_f64`: magic `LRMX`, little-endian `u32` dim, `u32` n, then the
//!   column-major `f64` payload. Labels live in a separate text file with one
//!   label per line.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{FeatureMatrix, LabeledDomain, UnlabeledDomain};

pub const RAW_MAGIC: &[u8; 4] = b"LRMX";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RawF64,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::RawF64,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "raw_f64" | "raw" => Ok(MatrixFormat::RawF64),
            other => Err(Error::InvalidConfig(format!(
                "unknown matrix format `{other}`"
            ))),
        }
    }
}

impl fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::RawF64 => "raw_f64",
        })
    }
}

/// Original label tokens, indexed by dense class id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    /// Remaps arbitrary tokens to `[0, C)`. Tokens sort numerically when they
    /// all parse as integers, lexically otherwise.
    pub fn remap<S: AsRef<str>>(tokens: &[S]) -> (Vec<usize>, LabelMap) {
        let mut names: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        names.sort();
        names.dedup();
        if names.iter().all(|n| n.parse::<i64>().is_ok()) {
            names.sort_by_key(|n| n.parse::<i64>().unwrap_or_default());
        }
        let index: BTreeMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let labels = tokens.iter().map(|t| index[t.as_ref()]).collect();
        (labels, LabelMap { names })
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.get(class).map(String::as_str)
    }
}

#[derive(Clone, Debug)]
pub struct LoadedMatrix {
    pub features: FeatureMatrix,
    pub labels: Option<Vec<usize>>,
    pub label_map: Option<LabelMap>,
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<LoadedMatrix> {
    match format {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::RawF64 => Ok(LoadedMatrix {
            features: load_raw(path)?,
            labels: None,
            label_map: None,
        }),
    }
}

fn parse_header(path: &Path, line: &str) -> Result<(usize, usize)> {
    let mut dim = None;
    let mut n = None;
    for field in line.split(',') {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(path, format!("bad header field `{field}`")))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("bad header value `{v}`")))?;
        match k.trim() {
            "dim" => dim = Some(v),
            "n" => n = Some(v),
            other => return Err(Error::parse(path, format!("unknown header key `{other}`"))),
        }
    }
    match (dim, n) {
        (Some(d), Some(n)) => Ok((d, n)),
        _ => Err(Error::parse(path, "header must contain dim= and n=")),
    }
}

fn load_csv(path: &Path) -> Result<LoadedMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?;
    let (dim, n) = parse_header(path, header)?;

    let mut data = Vec::with_capacity(dim * n);
    let mut tokens = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let labeled = match fields.len() {
            f if f == dim => false,
            f if f == dim + 1 => true,
            f => {
                return Err(Error::parse(
                    path,
                    format!(
                        "row {}: expected {dim} or {} fields, found {f}",
                        lineno + 1,
                        dim + 1
                    ),
                ))
            }
        };
        if rows > 0 && labeled != !tokens.is_empty() {
            return Err(Error::parse(
                path,
                format!("row {}: inconsistent label column", lineno + 1),
            ));
        }
        for f in &fields[..dim] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, format!("row {}: bad number `{f}`", lineno + 1)))?;
            data.push(v);
        }
        if labeled {
            tokens.push(fields[dim].to_string());
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::ShapeMismatch {
            path: path.into(),
            expected: format!("{n} rows"),
            found: format!("{rows} rows"),
        });
    }
    let features = FeatureMatrix::new(DMatrix::from_vec(dim, n, data))?;
    let (labels, label_map) = if tokens.is_empty() {
        (None, None)
    } else {
        let (l, m) = LabelMap::remap(&tokens);
        (Some(l), Some(m))
    };
    Ok(LoadedMatrix {
        features,
        labels,
        label_map,
    })
}

pub fn save_csv(path: &Path, features: &FeatureMatrix, labels: Option<&[usize]>) -> Result<()> {
    let mut out = format!("dim={},n={}\n", features.dim(), features.n_samples());
    for i in 0..features.n_samples() {
        let row: Vec<String> = features
            .column(i)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        out.push_str(&row.join(","));
        if let Some(l) = labels {
            out.push_str(&format!(",{}", l[i]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_raw(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(path, &bytes)
}

/// Parses an in-memory `raw_f64` image; `path` only labels errors.
pub fn decode_raw(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < 12 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::parse(path, "missing LRMX header"));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[12..];
    if payload.len() != dim * n * 8 {
        return Err(Error::ShapeMismatch {
            path: path.into(),
            expected: format!("{} payload bytes for {dim}x{n}", dim * n * 8),
            found: format!("{} bytes", payload.len()),
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    FeatureMatrix::new(DMatrix::from_vec(dim, n, data))
}

pub fn encode_raw(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + features.as_matrix().len() * 8);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(features.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(features.n_samples() as u32).to_le_bytes());
    for v in features.as_matrix().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_raw(path: &Path, features: &FeatureMatrix) -> Result<()> {
    fs::write(path, encode_raw(features)).map_err(|e| Error::io(path, e))
}

/// One label token per line.
pub fn load_labels(path: &Path) -> Result<(Vec<usize>, LabelMap)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tokens: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(Error::parse(path, "no labels"));
    }
    Ok(LabelMap::remap(&tokens))
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for l in labels {
        writeln!(f, "{l}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Reference sizes of the standard benchmark domains: (name, samples, classes, dims).
pub const KNOWN_DATASETS: &[(&str, usize, usize, &[usize])] = &[
    ("pie", 11554, 68, &[1024]),
    ("mnist", 2000, 10, &[256]),
    ("usps", 1800, 10, &[256]),
    ("amazon", 958, 10, &[800, 4096]),
    ("caltech", 1123, 10, &[800, 4096]),
    ("dslr", 157, 10, &[800, 4096]),
    ("webcam", 295, 10, &[800, 4096]),
    ("coil20", 1440, 20, &[1024]),
    ("coil1", 720, 20, &[1024]),
    ("coil2", 720, 20, &[1024]),
];

pub fn known_dataset(name: &str) -> Option<(usize, usize, &'static [usize])> {
    KNOWN_DATASETS
        .iter()
        .find(|(n, ..)| n.eq_ignore_ascii_case(name))
        .map(|&(_, s, c, d)| (s, c, d))
}

/// Plain `key = value` description of one domain's files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub format: MatrixFormat,
    pub feature_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub feature_dim: usize,
    pub expected_samples: usize,
    /// Hex SHA-256 of the feature file; empty to skip verification.
    pub checksum: String,
}

impl DatasetManifest {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, format!("expected key = value, got `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| Error::parse(path, format!("missing key `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(path, format!("`{k}` is not an integer")))
        };
        let manifest = DatasetManifest {
            name: get("name")?,
            format: kv
                .get("format")
                .map_or(Ok(MatrixFormat::RawF64), |f| f.parse())?,
            feature_path: get("feature_path")?.into(),
            label_path: kv
                .get("label_path")
                .filter(|p| !p.is_empty())
                .map(PathBuf::from),
            feature_dim: num("feature_dim")?,
            expected_samples: num("expected_samples")?,
            checksum: kv.get("checksum").cloned().unwrap_or_default(),
        };
        if let Some((samples, _, dims)) = known_dataset(&manifest.name) {
            if samples != manifest.expected_samples || !dims.contains(&manifest.feature_dim) {
                return Err(Error::ShapeMismatch {
                    path: path.into(),
                    expected: format!("{samples} samples of dim {dims:?}"),
                    found: format!(
                        "{} samples of dim {}",
                        manifest.expected_samples, manifest.feature_dim
                    ),
                });
            }
        }
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "name = {}\nformat = {}\nfeature_path = {}\n",
            self.name,
            self.format,
            self.feature_path.display()
        );
        if let Some(l) = &self.label_path {
            out.push_str(&format!("label_path = {}\n", l.display()));
        }
        out.push_str(&format!(
            "feature_dim = {}\nexpected_samples = {}\nchecksum = {}\n",
            self.feature_dim, self.expected_samples, self.checksum
        ));
        out
    }
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub label_map: LabelMap,
}

/// Loads the domain described by a manifest; relative paths resolve against
/// the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let feature_path = base.join(&manifest.feature_path);
    if !manifest.checksum.is_empty() {
        let found = sha256_file(&feature_path)?;
        if !found.eq_ignore_ascii_case(&manifest.checksum) {
            return Err(Error::ChecksumMismatch {
                path: feature_path,
                expected: manifest.checksum.clone(),
                found,
            });
        }
    }
    let loaded = load_matrix(&feature_path, manifest.format)?;
    let (labels, label_map) = match (&manifest.label_path, loaded.labels, loaded.label_map) {
        (Some(lp), ..) => load_labels(&base.join(lp))?,
        (None, Some(l), Some(m)) => (l, m),
        _ => {
            return Err(Error::parse(
                manifest_path,
                "no labels: set label_path or use labelled csv",
            ))
        }
    };
    let f = &loaded.features;
    if f.dim() != manifest.feature_dim || f.n_samples() != manifest.expected_samples {
        return Err(Error::ShapeMismatch {
            path: feature_path,
            expected: format!("{}x{}", manifest.feature_dim, manifest.expected_samples),
            found: format!("{}x{}", f.dim(), f.n_samples()),
        });
    }
    if labels.len() != f.n_samples() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: f.n_samples(),
        });
    }
    Ok(LoadedDataset {
        manifest,
        features: loaded.features,
        labels,
        label_map,
    })
}

/// Seeded uniform sample of `n` distinct indices out of `total`, ascending.
pub fn subsample_indices(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > total {
        return Err(Error::InvalidConfig(format!(
            "cannot sample {n} of {total}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, total, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Bilinear resize of square-pixel images stored one per column, row-major.
pub fn resize_images(
    features: &FeatureMatrix,
    from: (usize, usize),
    to: (usize, usize),
) -> Result<FeatureMatrix> {
    let (fw, fh) = from;
    let (tw, th) = to;
    if fw * fh != features.dim() || tw == 0 || th == 0 {
        return Err(Error::DimensionMismatch {
            expected: fw * fh,
            found: features.dim(),
        });
    }
    let sx = fw as f64 / tw as f64;
    let sy = fh as f64 / th as f64;
    let mut out = DMatrix::zeros(tw * th, features.n_samples());
    for s in 0..features.n_samples() {
        let img = features.column(s);
        let px = |x: usize, y: usize| img[y * fw + x];
        for y in 0..th {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (fh - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(fh - 1);
            let wy = fy - y0 as f64;
            for x in 0..tw {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (fw - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(fw - 1);
                let wx = fx - x0 as f64;
                let top = px(x0, y0) * (1.0 - wx) + px(x1, y0) * wx;
                let bottom = px(x0, y1) * (1.0 - wx) + px(x1, y1) * wx;
                out[(y * tw + x, s)] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    FeatureMatrix::new(out)
}

/// Splits COIL20 into its two pose halves. Samples of each object must appear
/// in pose order (0, 5, ..., 355 degrees). The first half holds poses
/// 0-85 and 180-265 degrees, the second 90-175 and 270-355.
pub fn coil_pose_split(labels: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let pose = seen.entry(l).or_insert(0);
        if (*pose / 18).is_multiple_of(2) {
            first.push(i);
        } else {
            second.push(i);
        }
        *pose += 1;
    }
    if let Some((class, count)) = seen.iter().find(|(_, &c)| c != 72) {
        return Err(Error::ShapeMismatch {
            path: PathBuf::from("coil20"),
            expected: "72 poses per object".into(),
            found: format!("{count} for class {class}"),
        });
    }
    Ok((first, second))
}

/// Output of [`l2_normalize_columns`]; `zero_columns` were left untouched.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub features: FeatureMatrix,
    pub zero_columns: Vec<usize>,
}

pub fn l2_normalize_columns(features: &FeatureMatrix) -> Normalized {
    let mut data = features.as_matrix().clone();
    let mut zero_columns = Vec::new();
    for (i, mut col) in data.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            zero_columns.push(i);
        } else {
            col /= norm;
        }
    }
    if !zero_columns.is_empty() {
        log::warn!("{} zero column(s) left unnormalised", zero_columns.len());
    }
    Normalized {
        features: FeatureMatrix::new(data).expect("normalising finite data stays finite"),
        zero_columns,
    }
}

/// Per-coordinate standard deviation of samples around their class center.
pub const SYNTHETIC_CLUSTER_STD: f64 = 0.3;

#[derive(Clone, Debug)]
pub struct SyntheticShift {
    pub source: LabeledDomain,
    pub target: UnlabeledDomain,
    pub ground_truth: Vec<usize>,
}

/// Gaussian class clusters; the target copies the clusters, translates them by
/// `shift` along one random unit direction and adds isotropic noise with
/// per-coordinate standard deviation `noise_rate` (centers are drawn with unit
/// per-coordinate scale).
pub fn make_synthetic_shift(
    classes: usize,
    per_class: usize,
    dim: usize,
    shift: f64,
    noise_rate: f64,
    seed: u64,
) -> Result<SyntheticShift> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidConfig(
            "synthetic sizes must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&noise_rate) || !shift.is_finite() || shift < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "shift {shift} must be >= 0 and noise_rate {noise_rate} in [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let cluster = Normal::new(0.0, SYNTHETIC_CLUSTER_STD).expect("valid std");
    let target_std = (SYNTHETIC_CLUSTER_STD.powi(2) + noise_rate.powi(2)).sqrt();
    let target_noise = Normal::new(0.0, target_std).expect("valid std");

    let n = classes * per_class;
    let mut src = DMatrix::zeros(dim, n);
    let mut tgt = DMatrix::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for k in 0..per_class {
            let col = c * per_class + k;
            for d in 0..dim {
                src[(d, col)] = center[d] + cluster.sample(&mut rng);
                tgt[(d, col)] = center[d] + shift * direction[d] + target_noise.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    let source = LabeledDomain::with_classes(FeatureMatrix::new(src)?, labels.clone(), classes)?;
    let target = UnlabeledDomain::new(FeatureMatrix::new(tgt)?);
    Ok(SyntheticShift {
        source,
        target,
        ground_truth: labels,
    })
}

/// Flips `fraction` of the labels (chosen uniformly) to a different class.
pub fn plant_label_noise(labels: &[usize], classes: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_flip = ((labels.len() as f64) * fraction).round() as usize;
    let mut noisy = labels.to_vec();
    if classes < 2 {
        return noisy;
    }
    for i in sample(&mut rng, labels.len(), n_flip.min(labels.len())) {
        let offset = rng.random_range(1..classes);
        noisy[i] = (labels[i] + offset) % classes;
    }
    noisy
}
