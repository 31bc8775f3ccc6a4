use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rectangular, finite, row-major numeric dataset (rows = data, columns = features).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Array2<f64>,
    feature_names: Option<Vec<String>>,
    source_id: String,
}

impl Dataset {
    pub fn new(
        rows: Array2<f64>,
        feature_names: Option<Vec<String>>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::EmptyInput("dataset has no rows".into()));
        }
        if rows.ncols() == 0 {
            return Err(Error::EmptyInput("dataset has no columns".into()));
        }
        if let Some(names) = &feature_names {
            if names.len() != rows.ncols() {
                return Err(Error::DimMismatch(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    rows.ncols()
                )));
            }
        }
        if let Some((i, j)) = first_non_finite(&rows) {
            return Err(Error::Parse {
                row: i + 1,
                col: j + 1,
                detail: "non-finite value".into(),
            });
        }
        Ok(Dataset {
            rows,
            feature_names,
            source_id: source_id.into(),
        })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// New dataset holding the given rows (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("subset selects no rows".into()));
        }
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::InvalidParam(format!(
                    "subset index {i} out of range for {} rows",
                    self.n_rows()
                )));
            }
        }
        let rows = self.rows.select(Axis(0), indices);
        Ok(Dataset {
            rows,
            feature_names: self.feature_names.clone(),
            source_id: self.source_id.clone(),
        })
    }
}

fn first_non_finite(a: &Array2<f64>) -> Option<(usize, usize)> {
    for ((i, j), v) in a.indexed_iter() {
        if !v.is_finite() {
            return Some((i, j));
        }
    }
    None
}

/// Read a numeric CSV file. With `has_header` the first line provides feature
/// names; with `drop_last_column` the trailing column (e.g. a class label) is
/// discarded before parsing. Rows and columns in errors are 1-based positions
/// in the file.
pub fn load_csv(path: &Path, has_header: bool, drop_last_column: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
            other => Error::Format(format!("{other:?}")),
        })?;

    let mut records = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: idx + 1,
            col: 0,
            detail: e.to_string(),
        })?;
        // Skip fully blank lines (common trailing newline artifacts).
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((idx + 1, rec));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no rows", path.display())));
    }

    let mut feature_names = None;
    let mut data_start = 0;
    if has_header {
        let (_, header) = &records[0];
        let mut names: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        if drop_last_column && !names.is_empty() {
            names.pop();
        }
        feature_names = Some(names);
        data_start = 1;
    }
    let data = &records[data_start..];
    if data.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }

    let width_full = data[0].1.len();
    let keep = if drop_last_column {
        if width_full < 2 {
            return Err(Error::EmptyInput(
                "cannot drop the last column of a single-column file".into(),
            ));
        }
        width_full - 1
    } else {
        width_full
    };

    let mut values = Vec::with_capacity(data.len() * keep);
    for (line, rec) in data {
        if rec.len() != width_full {
            return Err(Error::RaggedRow {
                row: *line,
                expected: width_full,
                found: rec.len(),
            });
        }
        for (j, field) in rec.iter().take(keep).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: *line,
                col: j + 1,
                detail: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: *line,
                    col: j + 1,
                    detail: format!("non-finite value: {field:?}"),
                });
            }
            values.push(v);
        }
    }

    let rows = Array2::from_shape_vec((data.len(), keep), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    // Reject a name-only header paired with zero data columns.
    if let Some(names) = &feature_names {
        if names.len() != keep {
            return Err(Error::RaggedRow {
                row: 1,
                expected: keep,
                found: names.len(),
            });
        }
    }
    Dataset::new(rows, feature_names, source)
}

/// Per-feature affine transform captured by z-score normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormalizationParams {
    /// Apply the stored transform to new data with the same feature layout.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.means.len() {
            return Err(Error::DimMismatch(format!(
                "normalization params cover {} features, data has {}",
                self.means.len(),
                data.n_features()
            )));
        }
        let mut rows = data.rows.clone();
        for (j, mut col) in rows.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.stds[j]);
        }
        Ok(Dataset {
            rows,
            feature_names: data.feature_names.clone(),
            source_id: data.source_id.clone(),
        })
    }

    /// Invert the transform.
    pub fn denormalize(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.means.len() {
            return Err(Error::DimMismatch(format!(
                "normalization params cover {} features, data has {}",
                self.means.len(),
                data.n_features()
            )));
        }
        let mut rows = data.rows.clone();
        for (j, mut col) in rows.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * self.stds[j] + self.means[j]);
        }
        Ok(Dataset {
            rows,
            feature_names: data.feature_names.clone(),
            source_id: data.source_id.clone(),
        })
    }
}

/// Center each feature and scale it to unit sample standard deviation
/// (divisor N-1). A constant feature is an error, not a silent division.
pub fn normalize_zscore(data: &Dataset) -> Result<(Dataset, NormalizationParams)> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::DegenerateData(
            "z-score normalization needs at least 2 rows".into(),
        ));
    }
    let means = data
        .rows
        .mean_axis(Axis(0))
        .expect("non-empty by construction");
    let stds = data.rows.std_axis(Axis(0), 1.0);
    for (j, &s) in stds.iter().enumerate() {
        if s <= f64::EPSILON {
            let name = data
                .feature_names
                .as_ref()
                .and_then(|ns| ns.get(j).cloned())
                .unwrap_or_else(|| format!("column {}", j + 1));
            return Err(Error::DegenerateFeature { index: j, name });
        }
    }
    let params = NormalizationParams {
        means: means.to_vec(),
        stds: stds.to_vec(),
    };
    let normalized = params.apply(data)?;
    Ok((normalized, params))
}

/// A k-fold assignment of rows: `assignments[i]` is the fold holding row `i`
/// as a test point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParam("fold plan needs k >= 2".into()));
        }
        if self.assignments.len() < self.k {
            return Err(Error::InvalidParam(format!(
                "{} rows cannot fill {} folds",
                self.assignments.len(),
                self.k
            )));
        }
        if let Some(&bad) = self.assignments.iter().find(|&&f| f >= self.k) {
            return Err(Error::InvalidParam(format!(
                "fold label {bad} out of range for k = {}",
                self.k
            )));
        }
        Ok(())
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Shuffle rows with a seeded generator and deal them round-robin, so fold
/// sizes differ by at most one.
pub fn kfold_split(n_rows: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("k = {k}, need at least 2")));
    }
    if k > n_rows {
        return Err(Error::InvalidParam(format!(
            "k = {k} exceeds the {n_rows} available rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut rng);
    let mut assignments = vec![0usize; n_rows];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

/// Recipe for an isotropic Gaussian blob mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub centers: Vec<Vec<f64>>,
    pub std: f64,
    pub points_per_blob: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Nine blobs on the 3x3 grid {-2, 0, 2}^2 with std 0.25 and 50 points each.
    fn default() -> Self {
        let mut centers = Vec::new();
        for &y in &[-2.0, 0.0, 2.0] {
            for &x in &[-2.0, 0.0, 2.0] {
                centers.push(vec![x, y]);
            }
        }
        SyntheticSpec {
            centers,
            std: 0.25,
            points_per_blob: 50,
            seed: 0,
        }
    }
}

/// Draw `points_per_blob` samples around each center: x = c + std * z with
/// z standard normal, so std = 0 reproduces the centers exactly.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.centers.is_empty() {
        return Err(Error::InvalidParam("no blob centers given".into()));
    }
    let dim = spec.centers[0].len();
    if dim == 0 {
        return Err(Error::InvalidParam("blob centers have no dimensions".into()));
    }
    for (b, c) in spec.centers.iter().enumerate() {
        if c.len() != dim {
            return Err(Error::DimMismatch(format!(
                "blob {b} has {} dimensions, expected {dim}",
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("blob {b} has a non-finite center")));
        }
    }
    if !spec.std.is_finite() || spec.std < 0.0 {
        return Err(Error::InvalidParam(format!(
            "blob std must be finite and non-negative, got {}",
            spec.std
        )));
    }
    if spec.points_per_blob == 0 {
        return Err(Error::InvalidParam("points_per_blob must be at least 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.centers.len() * spec.points_per_blob;
    let mut values = Vec::with_capacity(n * dim);
    for center in &spec.centers {
        for _ in 0..spec.points_per_blob {
            for &c in center {
                let z: f64 = rng.sample(StandardNormal);
                values.push(c + spec.std * z);
            }
        }
    }
    let rows = Array2::from_shape_vec((n, dim), values).expect("sized above");
    Dataset::new(rows, None, "synthetic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_csv_plain() {
        let f = write_temp("1.0,2.0\n3.0,4.0\n");
        let d = load_csv(f.path(), false, false).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.rows(), &array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(d.feature_names().is_none());
    }

    #[test]
    fn load_csv_header_and_label_column() {
        let f = write_temp("a,b,species\n1,2,setosa\n3,4,virginica\n");
        let d = load_csv(f.path(), true, true).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(d.rows(), &array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn load_csv_ragged_row_is_positioned() {
        let f = write_temp("1,2\n3,4,5\n");
        match load_csv(f.path(), false, false) {
            Err(Error::RaggedRow { row, expected, found }) => {
                assert_eq!((row, expected, found), (2, 2, 3));
            }
            other => panic!("expected ragged row error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_bad_number_is_positioned() {
        let f = write_temp("1,2\n3,oops\n");
        match load_csv(f.path(), false, false) {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (2, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_empty() {
        let f = write_temp("");
        assert!(matches!(load_csv(f.path(), false, false), Err(Error::EmptyInput(_))));
        let g = write_temp("a,b\n");
        assert!(matches!(load_csv(g.path(), true, false), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn load_csv_missing_file_is_io() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), false, false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn zscore_matches_hand_oracle() {
        // Column 1: 1, 2, 3 -> mean 2, sample std 1.
        // Column 2: 2, 4, 12 -> mean 6, sample std sqrt(28).
        let d = Dataset::new(array![[1.0, 2.0], [2.0, 4.0], [3.0, 12.0]], None, "t").unwrap();
        let (z, p) = normalize_zscore(&d).unwrap();
        assert_eq!(p.means, vec![2.0, 6.0]);
        let s2 = 28.0f64.sqrt();
        assert!((p.stds[0] - 1.0).abs() < 1e-12);
        assert!((p.stds[1] - s2).abs() < 1e-12);
        let expect = array![
            [-1.0, -4.0 / s2],
            [0.0, -2.0 / s2],
            [1.0, 6.0 / s2]
        ];
        for (a, b) in z.rows().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_post_invariants_and_roundtrip() {
        let d = gen_synthetic(&SyntheticSpec {
            seed: 7,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let (z, p) = normalize_zscore(&d).unwrap();
        let means = z.rows().mean_axis(Axis(0)).unwrap();
        let stds = z.rows().std_axis(Axis(0), 1.0);
        for &m in means.iter() {
            assert!(m.abs() < 1e-10, "residual mean {m}");
        }
        for &s in stds.iter() {
            assert!((s - 1.0).abs() < 1e-10, "residual std {s}");
        }
        let back = p.denormalize(&z).unwrap();
        for (a, b) in back.rows().iter().zip(d.rows().iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zscore_rejects_constant_feature() {
        let d = Dataset::new(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], None, "t").unwrap();
        match normalize_zscore(&d) {
            Err(Error::DegenerateFeature { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected degenerate feature, got {other:?}"),
        }
    }

    #[test]
    fn kfold_partitions_evenly() {
        let plan = kfold_split(23, 5, 42).unwrap();
        plan.validate().unwrap();
        let mut counts = vec![0usize; 5];
        for &f in &plan.assignments {
            counts[f] += 1;
        }
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().min().unwrap();
        assert!(max - min <= 1, "counts {counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), 23);

        for fold in 0..5 {
            let mut all = plan.train_indices(fold);
            all.extend(plan.test_indices(fold));
            all.sort_unstable();
            assert_eq!(all, (0..23).collect::<Vec<_>>());
        }
    }

    #[test]
    fn kfold_seeded_determinism() {
        let a = kfold_split(40, 5, 9).unwrap();
        let b = kfold_split(40, 5, 9).unwrap();
        assert_eq!(a, b);
        let c = kfold_split(40, 5, 10).unwrap();
        assert_ne!(a, c, "distinct seeds should shuffle differently");
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(kfold_split(10, 1, 0).is_err());
        assert!(kfold_split(3, 5, 0).is_err());
    }

    #[test]
    fn fold_plan_json_shape() {
        let plan = kfold_split(4, 2, 1).unwrap();
        let s = serde_json::to_string(&plan).unwrap();
        let back: FoldPlan = serde_json::from_str(&s).unwrap();
        assert_eq!(plan, back);
        assert!(s.starts_with("{\"k\":2,\"assignments\":["), "json was {s}");
    }

    #[test]
    fn synthetic_default_layout() {
        let spec = SyntheticSpec::default();
        assert_eq!(spec.centers.len(), 9);
        let d = gen_synthetic(&spec).unwrap();
        assert_eq!(d.n_rows(), 450);
        assert_eq!(d.n_features(), 2);
        // Per-blob sample means stay near the configured centers.
        let tol = 4.0 * spec.std / (spec.points_per_blob as f64).sqrt();
        for (b, center) in spec.centers.iter().enumerate() {
            let rows: Vec<usize> = (b * 50..(b + 1) * 50).collect();
            let blob = d.subset(&rows).unwrap();
            let mean = blob.rows().mean_axis(Axis(0)).unwrap();
            for (m, c) in mean.iter().zip(center.iter()) {
                assert!((m - c).abs() < tol, "blob {b}: mean {m} vs center {c}");
            }
        }
    }

    #[test]
    fn synthetic_zero_std_hits_centers() {
        let spec = SyntheticSpec {
            std: 0.0,
            points_per_blob: 3,
            ..SyntheticSpec::default()
        };
        let d = gen_synthetic(&spec).unwrap();
        for (b, center) in spec.centers.iter().enumerate() {
            for p in 0..3 {
                let row = d.rows().row(b * 3 + p);
                assert_eq!(row.to_vec(), *center);
            }
        }
    }

    #[test]
    fn synthetic_seeded_determinism() {
        let spec = SyntheticSpec::default();
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.rows(), b.rows());
        let c = gen_synthetic(&SyntheticSpec {
            seed: 1,
            ..SyntheticSpec::default()
        })
        .unwrap();
        assert_ne!(a.rows(), c.rows());
    }

    #[test]
    fn subset_checks_bounds() {
        let d = Dataset::new(array![[1.0], [2.0]], None, "t").unwrap();
        assert!(d.subset(&[0, 2]).is_err());
        assert!(d.subset(&[]).is_err());
        let s = d.subset(&[1, 0]).unwrap();
        assert_eq!(s.rows(), &array![[2.0], [1.0]]);
    }
}
