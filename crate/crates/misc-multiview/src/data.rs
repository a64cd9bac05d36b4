//! Dataset and model persistence, plus the synthetic ground-truth generator
//! used to verify recovery at desk scale.
//!
//! All numeric serialization is textual with shortest round-trip floats, so
//! save/load cycles are exact to the bit and diffs stay readable.
//!
//! Dataset manifest (`key = value` lines, paths relative to the manifest):
//!
//! ```text
//! n = 200
//! m = 3
//! view_dims = 8,8,8
//! views = view_1.csv,view_2.csv,view_3.csv
//! labels = labels.csv
//! ```
//!
//! View CSVs hold `n` rows of `d_j` comma-separated decimals, no header;
//! the labels CSV holds one integer per row and may be omitted for
//! prediction-only data. A bundle directory holds a `manifest` with the
//! shapes, hyperparameters and class tag, `W_1.csv..W_m.csv`, and
//! `omega.csv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelBundle, MultiviewDataset};

const REJECTION_LIMIT: usize = 1_000_000;
// Multiclass generator geometry: prototype magnitude vs within-class jitter.
const PROTOTYPE_SCALE: f64 = 2.0;
const CLASS_JITTER: f64 = 0.5;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Key-value lines; `#` starts a comment, blank lines are skipped.
fn read_kv_file(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, line_no, format!("expected `key = value`, got {raw:?}")))?;
        entries.push((line_no, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn format_float(v: f64) -> String {
    // shortest representation that round-trips exactly
    format!("{v}")
}

fn write_matrix_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in matrix.rows() {
        let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn read_matrix_csv(path: &Path, expected_cols: Option<usize>) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut data = Vec::new();
    let mut cols = expected_cols;
    let mut rows = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        match cols {
            None => cols = Some(cells.len()),
            Some(c) if c != cells.len() => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected {c} columns, got {}", cells.len()),
                ))
            }
            Some(_) => {}
        }
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|e| {
                parse_err(path, line_no, format!("column {}: non-numeric cell {cell:?} ({e})", col + 1))
            })?;
            data.push(value);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| parse_err(path, 0, format!("inconsistent matrix shape: {e}")))
}

fn read_labels_csv(path: &Path) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let value: i64 = line.parse().map_err(|e| {
            parse_err(path, idx + 1, format!("non-integer label {line:?} ({e})"))
        })?;
        labels.push(value);
    }
    Ok(labels)
}

struct ManifestFields {
    n: usize,
    m: usize,
    view_dims: Vec<usize>,
    views: Vec<String>,
    labels: Option<String>,
}

fn parse_dataset_manifest(path: &Path) -> Result<ManifestFields> {
    let mut n = None;
    let mut m = None;
    let mut view_dims = None;
    let mut views = None;
    let mut labels = None;
    for (line_no, key, value) in read_kv_file(path)? {
        match key.as_str() {
            "n" => {
                n = Some(value.parse::<usize>().map_err(|e| {
                    parse_err(path, line_no, format!("n: {e}"))
                })?)
            }
            "m" => {
                m = Some(value.parse::<usize>().map_err(|e| {
                    parse_err(path, line_no, format!("m: {e}"))
                })?)
            }
            "view_dims" => {
                let dims = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<usize>, _>>()
                    .map_err(|e| parse_err(path, line_no, format!("view_dims: {e}")))?;
                view_dims = Some(dims);
            }
            "views" => {
                views = Some(value.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
            }
            "labels" => labels = Some(value),
            other => {
                return Err(parse_err(path, line_no, format!("unknown manifest key {other:?}")))
            }
        }
    }
    let missing = |what: &str| parse_err(path, 0, format!("missing required key `{what}`"));
    Ok(ManifestFields {
        n: n.ok_or_else(|| missing("n"))?,
        m: m.ok_or_else(|| missing("m"))?,
        view_dims: view_dims.ok_or_else(|| missing("view_dims"))?,
        views: views.ok_or_else(|| missing("views"))?,
        labels,
    })
}

/// Loads a dataset from its manifest, checks every declared dimension
/// against the files on disk, and validates the result.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<MultiviewDataset> {
    let manifest_path = manifest_path.as_ref();
    let fields = parse_dataset_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    if fields.view_dims.len() != fields.m {
        return Err(parse_err(
            manifest_path,
            0,
            format!(
                "view_dims lists {} entries but m = {}",
                fields.view_dims.len(),
                fields.m
            ),
        ));
    }
    if fields.views.len() != fields.m {
        return Err(parse_err(
            manifest_path,
            0,
            format!("views lists {} files but m = {}", fields.views.len(), fields.m),
        ));
    }

    let mut views = Vec::with_capacity(fields.m);
    for (j, rel) in fields.views.iter().enumerate() {
        let view_path = dir.join(rel);
        let matrix = read_matrix_csv(&view_path, Some(fields.view_dims[j]))
            .map_err(|e| match e {
                Error::Parse { path, line, message } => Error::Parse {
                    path,
                    line,
                    message: format!("view {} ({rel}): {message}", j + 1),
                },
                other => other,
            })?;
        if matrix.nrows() != fields.n {
            return Err(parse_err(
                &view_path,
                0,
                format!(
                    "view {} ({rel}): expected n={} rows, got {}",
                    j + 1,
                    fields.n,
                    matrix.nrows()
                ),
            ));
        }
        views.push(matrix);
    }

    let labels = match &fields.labels {
        Some(rel) => {
            let labels_path = dir.join(rel);
            let labels = read_labels_csv(&labels_path)?;
            if labels.len() != fields.n {
                return Err(parse_err(
                    &labels_path,
                    0,
                    format!("expected n={} labels, got {}", fields.n, labels.len()),
                ));
            }
            Some(labels)
        }
        None => None,
    };

    MultiviewDataset::new(views, labels)
}

/// Writes a dataset in manifest format under `dir` and returns the manifest
/// path. View files are `view_1.csv..view_m.csv`; labels, when present,
/// land in `labels.csv`.
pub fn save_dataset(dataset: &MultiviewDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let view_files: Vec<String> = (1..=dataset.m).map(|j| format!("view_{j}.csv")).collect();
    for (view, name) in dataset.views.iter().zip(&view_files) {
        write_matrix_csv(&dir.join(name), view)?;
    }
    if let Some(labels) = &dataset.labels {
        let mut out = String::new();
        for label in labels {
            out.push_str(&label.to_string());
            out.push('\n');
        }
        let labels_path = dir.join("labels.csv");
        fs::write(&labels_path, out).map_err(io_err(&labels_path))?;
    }

    let manifest_path = dir.join("manifest");
    let mut file = fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?;
    let dims: Vec<String> = dataset.view_dims.iter().map(|d| d.to_string()).collect();
    writeln!(file, "n = {}", dataset.n).map_err(io_err(&manifest_path))?;
    writeln!(file, "m = {}", dataset.m).map_err(io_err(&manifest_path))?;
    writeln!(file, "view_dims = {}", dims.join(",")).map_err(io_err(&manifest_path))?;
    writeln!(file, "views = {}", view_files.join(",")).map_err(io_err(&manifest_path))?;
    if dataset.labels.is_some() {
        writeln!(file, "labels = labels.csv").map_err(io_err(&manifest_path))?;
    }
    Ok(manifest_path)
}

/// Persists one binary model bundle into `dir`.
pub fn save_bundle(bundle: &ModelBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let hp = &bundle.hyperparams;
    let dims = bundle.view_dims();

    let manifest_path = dir.join("manifest");
    let mut file = fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?;
    let dims_text: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    writeln!(file, "m = {}", bundle.w.len()).map_err(io_err(&manifest_path))?;
    writeln!(file, "view_dims = {}", dims_text.join(",")).map_err(io_err(&manifest_path))?;
    writeln!(file, "d = {}", bundle.d()).map_err(io_err(&manifest_path))?;
    writeln!(file, "class_tag = {}", bundle.class_tag).map_err(io_err(&manifest_path))?;
    writeln!(file, "alpha = {}", format_float(hp.alpha)).map_err(io_err(&manifest_path))?;
    writeln!(file, "gamma = {}", format_float(hp.gamma)).map_err(io_err(&manifest_path))?;
    writeln!(file, "c = {}", format_float(hp.c)).map_err(io_err(&manifest_path))?;
    writeln!(file, "max_iters = {}", hp.max_iters).map_err(io_err(&manifest_path))?;
    writeln!(file, "t_inf = {}", hp.t_inf).map_err(io_err(&manifest_path))?;
    writeln!(file, "seed = {}", hp.seed).map_err(io_err(&manifest_path))?;
    writeln!(file, "init_scale = {}", format_float(hp.init_scale))
        .map_err(io_err(&manifest_path))?;

    for (j, w) in bundle.w.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("W_{}.csv", j + 1)), w)?;
    }
    let omega = Array2::from_shape_vec(
        (bundle.omega.len(), 1),
        bundle.omega.to_vec(),
    )
    .expect("column vector");
    write_matrix_csv(&dir.join("omega.csv"), &omega)
}

/// Loads a bundle saved by [`save_bundle`], verifying shapes against the
/// manifest.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    let corrupt = |message: String| Error::CorruptBundle {
        path: dir.to_path_buf(),
        message,
    };
    let manifest_path = dir.join("manifest");
    let mut fields = std::collections::BTreeMap::new();
    for (_, key, value) in read_kv_file(&manifest_path)? {
        fields.insert(key, value);
    }
    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| corrupt(format!("manifest missing key `{key}`")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|e| corrupt(format!("manifest key `{key}`: {e}")))
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|e| corrupt(format!("manifest key `{key}`: {e}")))
    };

    let m = parse_usize("m")?;
    let d = parse_usize("d")?;
    let view_dims: Vec<usize> = get("view_dims")?
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| corrupt(format!("manifest key `view_dims`: {e}")))?;
    if view_dims.len() != m {
        return Err(corrupt(format!(
            "view_dims lists {} entries but m = {m}",
            view_dims.len()
        )));
    }
    let class_tag: i64 = get("class_tag")?
        .parse()
        .map_err(|e| corrupt(format!("manifest key `class_tag`: {e}")))?;

    let hyperparams = Hyperparams {
        alpha: parse_f64("alpha")?,
        gamma: parse_f64("gamma")?,
        c: parse_f64("c")?,
        d,
        max_iters: parse_usize("max_iters")?,
        t_inf: parse_usize("t_inf")?,
        seed: get("seed")?
            .parse()
            .map_err(|e| corrupt(format!("manifest key `seed`: {e}")))?,
        init_scale: parse_f64("init_scale")?,
    };

    let mut w = Vec::with_capacity(m);
    for (j, &dj) in view_dims.iter().enumerate() {
        let path = dir.join(format!("W_{}.csv", j + 1));
        let matrix = read_matrix_csv(&path, Some(d))?;
        if matrix.nrows() != dj || matrix.ncols() != d {
            return Err(corrupt(format!(
                "W_{} is {}x{}, manifest declares {}x{}",
                j + 1,
                matrix.nrows(),
                matrix.ncols(),
                dj,
                d
            )));
        }
        w.push(matrix);
    }
    let omega_mat = read_matrix_csv(&dir.join("omega.csv"), Some(1))?;
    if omega_mat.nrows() != d {
        return Err(corrupt(format!(
            "omega has {} rows, manifest declares d = {d}",
            omega_mat.nrows()
        )));
    }
    let omega = Array1::from_iter(omega_mat.column(0).iter().copied());

    for (j, mat) in w.iter().enumerate() {
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("W_{} contains non-finite entries", j + 1)));
        }
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(corrupt("omega contains non-finite entries".to_string()));
    }

    Ok(ModelBundle {
        w,
        omega,
        hyperparams,
        class_tag,
    })
}

/// Loads every `class_*` bundle under a directory (or the directory itself
/// when it is a single bundle), sorted by class tag.
pub fn load_all_bundles(dir: impl AsRef<Path>) -> Result<Vec<ModelBundle>> {
    let dir = dir.as_ref();
    let mut bundles = Vec::new();
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut class_dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("class_"))
        })
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        bundles.push(load_bundle(dir)?);
    } else {
        for class_dir in class_dirs {
            bundles.push(load_bundle(&class_dir)?);
        }
    }
    bundles.sort_by_key(|b| b.class_tag);
    Ok(bundles)
}

/// Recipe for a synthetic dataset with known ground truth.
///
/// Binary mode (`n_classes == 2`) draws a true classifier and
/// rejection-samples intact vectors until each clears `margin`; labels are
/// the sign of the true decision value. Multiclass mode places one Gaussian
/// prototype per class and labels each point by its nearest prototype.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub view_dims: Vec<usize>,
    pub n_classes: usize,
    pub noise_sigma: f64,
    pub margin: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n must be >= 1".to_string());
        }
        if self.m == 0 || self.view_dims.len() != self.m {
            problems.push(format!(
                "m = {} must be >= 1 and match view_dims (len {})",
                self.m,
                self.view_dims.len()
            ));
        }
        if self.view_dims.iter().any(|&d| d == 0) || self.d == 0 {
            problems.push("dimensions must be positive".to_string());
        }
        if self.n_classes < 2 {
            problems.push("n_classes must be >= 2".to_string());
        }
        if !(self.noise_sigma >= 0.0) {
            problems.push(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.margin > 0.0) {
            problems.push(format!("margin must be > 0, got {}", self.margin));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// The generating variables behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub z: Array2<f64>,
    pub w: Vec<Array2<f64>>,
    /// True classifier (binary mode).
    pub omega: Option<Array1<f64>>,
    /// Class prototypes in intact space (multiclass mode).
    pub prototypes: Option<Array2<f64>>,
}

/// Draws a dataset from the generative model the method assumes: intact
/// vectors mapped through unit-column linear transforms plus isotropic
/// noise. Deterministic under `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(MultiviewDataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");

    let binary = spec.n_classes == 2;
    let omega_star = binary.then(|| Array1::from_shape_fn(spec.d, |_| standard.sample(&mut rng)));
    let prototypes = (!binary).then(|| {
        Array2::from_shape_fn((spec.n_classes, spec.d), |_| {
            standard.sample(&mut rng) * PROTOTYPE_SCALE
        })
    });

    let w_star: Vec<Array2<f64>> = spec
        .view_dims
        .iter()
        .map(|&dj| {
            let mut w = Array2::from_shape_fn((dj, spec.d), |_| standard.sample(&mut rng));
            for mut col in w.columns_mut() {
                let norm = col.dot(&col).sqrt();
                if norm > 0.0 {
                    col.mapv_inplace(|v| v / norm);
                }
            }
            w
        })
        .collect();

    let mut z_star = Array2::zeros((spec.n, spec.d));
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        if let Some(omega) = &omega_star {
            let mut accepted = false;
            for _ in 0..REJECTION_LIMIT {
                let z = Array1::from_shape_fn(spec.d, |_| standard.sample(&mut rng));
                let value = omega.dot(&z);
                if value.abs() >= spec.margin {
                    z_star.row_mut(i).assign(&z);
                    labels.push(if value >= 0.0 { 1 } else { -1 });
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::InvalidConfig(format!(
                    "rejection sampling exceeded {REJECTION_LIMIT} draws for point {i}; margin {} too large",
                    spec.margin
                )));
            }
        } else {
            let prototypes = prototypes.as_ref().expect("multiclass mode");
            let intended = i % spec.n_classes;
            let z = Array1::from_shape_fn(spec.d, |b| {
                prototypes[[intended, b]] + standard.sample(&mut rng) * CLASS_JITTER
            });
            let mut nearest = 0usize;
            let mut nearest_dist = f64::INFINITY;
            for k in 0..spec.n_classes {
                let diff = &z - &prototypes.row(k);
                let dist = diff.dot(&diff);
                if dist < nearest_dist {
                    nearest_dist = dist;
                    nearest = k;
                }
            }
            z_star.row_mut(i).assign(&z);
            labels.push(nearest as i64);
        }
    }

    let mut views: Vec<Array2<f64>> = spec
        .view_dims
        .iter()
        .map(|&dj| Array2::zeros((spec.n, dj)))
        .collect();
    for i in 0..spec.n {
        let z_i = z_star.row(i).to_owned();
        for (j, w) in w_star.iter().enumerate() {
            let mut x = w.dot(&z_i);
            for value in x.iter_mut() {
                *value += spec.noise_sigma * standard.sample(&mut rng);
            }
            views[j].row_mut(i).assign(&x);
        }
    }

    let dataset = MultiviewDataset::new(views, Some(labels))?;
    let ground_truth = GroundTruth {
        z: z_star,
        w: w_star,
        omega: omega_star,
        prototypes,
    };
    Ok((dataset, ground_truth))
}

/// Writes the generating variables next to a synthetic dataset.
pub fn save_ground_truth(gt: &GroundTruth, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_matrix_csv(&dir.join("Z.csv"), &gt.z)?;
    for (j, w) in gt.w.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("W_{}.csv", j + 1)), w)?;
    }
    if let Some(omega) = &gt.omega {
        let col = Array2::from_shape_vec((omega.len(), 1), omega.to_vec()).expect("column vector");
        write_matrix_csv(&dir.join("omega.csv"), &col)?;
    }
    if let Some(prototypes) = &gt.prototypes {
        write_matrix_csv(&dir.join("prototypes.csv"), prototypes)?;
    }
    Ok(())
}
