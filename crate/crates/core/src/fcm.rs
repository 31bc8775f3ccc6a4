use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Serialize an Array2 as a plain nested row-major array.
pub(crate) mod matrix_serde {
    use ndarray::Array2;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::matrix_from_rows(rows).map_err(D::Error::custom)
    }
}

pub(crate) fn matrix_from_rows(rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    if rows.is_empty() {
        return Err(Error::Format("matrix has no rows".into()));
    }
    let width = rows[0].len();
    if width == 0 {
        return Err(Error::Format("matrix has no columns".into()));
    }
    let mut values = Vec::with_capacity(rows.len() * width);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Format(format!(
                "matrix row {i} has {} entries, expected {width}",
                r.len()
            )));
        }
        values.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), width), values).map_err(|e| Error::Format(e.to_string()))
}

/// Cluster prototypes, one per row (c x n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    #[serde(with = "matrix_serde")]
    centers: Array2<f64>,
}

impl Prototypes {
    pub fn new(centers: Array2<f64>) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(Error::EmptyInput("prototypes are empty".into()));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite prototype coordinate".into()));
        }
        Ok(Prototypes { centers })
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn c(&self) -> usize {
        self.centers.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.centers.ncols()
    }
}

/// Fuzzy partition matrix, clusters by rows and data by columns (c x N).
/// Each column is a membership distribution over the clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMatrix {
    #[serde(with = "matrix_serde")]
    grades: Array2<f64>,
}

impl PartitionMatrix {
    pub fn grades(&self) -> &Array2<f64> {
        &self.grades
    }

    pub fn c(&self) -> usize {
        self.grades.nrows()
    }

    pub fn n(&self) -> usize {
        self.grades.ncols()
    }
}

/// Squared Euclidean distance between two equally sized vectors.
pub fn sq_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(sq_distance_unchecked(a, b))
}

#[inline]
fn sq_distance_unchecked(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn check_fuzzifier(m: f64) -> Result<()> {
    if !m.is_finite() || m <= 1.0 {
        return Err(Error::InvalidParam(format!(
            "fuzzification factor must be finite and > 1, got {m}"
        )));
    }
    Ok(())
}

fn check_dims(x: &Array2<f64>, v: &Prototypes) -> Result<()> {
    if x.ncols() != v.n_features() {
        return Err(Error::DimMismatch(format!(
            "data has {} features, prototypes have {}",
            x.ncols(),
            v.n_features()
        )));
    }
    Ok(())
}

/// Membership update: u_ji = 1 / sum_k (d2_ji / d2_ki)^(1/(m-1)).
/// A datum at zero distance from one or more prototypes splits its full
/// membership evenly among the coincident clusters.
pub fn update_memberships(x: &Array2<f64>, v: &Prototypes, m: f64) -> Result<PartitionMatrix> {
    check_fuzzifier(m)?;
    check_dims(x, v)?;
    let n = x.nrows();
    let c = v.c();
    let exp = 1.0 / (m - 1.0);
    let mut grades = Array2::zeros((c, n));
    let mut d2 = vec![0.0f64; c];
    for i in 0..n {
        let xi = x.row(i);
        for (j, slot) in d2.iter_mut().enumerate() {
            *slot = sq_distance_unchecked(xi, v.centers.row(j));
        }
        let coincident = d2.iter().filter(|&&d| d == 0.0).count();
        if coincident > 0 {
            let w = 1.0 / coincident as f64;
            for j in 0..c {
                grades[(j, i)] = if d2[j] == 0.0 { w } else { 0.0 };
            }
        } else {
            for j in 0..c {
                let mut s = 0.0;
                for &dk in &d2 {
                    s += (d2[j] / dk).powf(exp);
                }
                grades[(j, i)] = 1.0 / s;
            }
        }
    }
    Ok(PartitionMatrix { grades })
}

/// Prototype update: v_j = sum_i u_ji^m x_i / sum_i u_ji^m.
pub fn update_prototypes(x: &Array2<f64>, u: &PartitionMatrix, m: f64) -> Result<Prototypes> {
    check_fuzzifier(m)?;
    if u.n() != x.nrows() {
        return Err(Error::DimMismatch(format!(
            "partition covers {} data, matrix has {} rows",
            u.n(),
            x.nrows()
        )));
    }
    let c = u.c();
    let nf = x.ncols();
    let mut centers = Array2::zeros((c, nf));
    for j in 0..c {
        let mut num = Array1::<f64>::zeros(nf);
        let mut den = 0.0;
        for i in 0..x.nrows() {
            let w = u.grades[(j, i)].powf(m);
            den += w;
            num.scaled_add(w, &x.row(i));
        }
        if !(den > 0.0) {
            return Err(Error::DeadCluster { cluster: j });
        }
        let row = num.mapv(|v| v / den);
        centers.row_mut(j).assign(&row);
    }
    Prototypes::new(centers)
}

/// Weighted within-cluster scatter: J = sum_ij u_ji^m d2(x_i, v_j).
pub fn objective_j(x: &Array2<f64>, u: &PartitionMatrix, v: &Prototypes, m: f64) -> Result<f64> {
    check_fuzzifier(m)?;
    check_dims(x, v)?;
    if u.n() != x.nrows() || u.c() != v.c() {
        return Err(Error::DimMismatch("partition does not match data/prototypes".into()));
    }
    let mut j_total = 0.0;
    for i in 0..x.nrows() {
        let xi = x.row(i);
        for j in 0..v.c() {
            let w = u.grades[(j, i)].powf(m);
            if w > 0.0 {
                j_total += w * sq_distance_unchecked(xi, v.centers.row(j));
            }
        }
    }
    Ok(j_total)
}

/// Seeded initialization: c distinct data rows drawn without replacement.
pub fn init_prototypes(x: &Array2<f64>, c: usize, seed: u64) -> Result<Prototypes> {
    if c < 2 {
        return Err(Error::InvalidParam(format!("cluster count {c}, need at least 2")));
    }
    let mut seen = std::collections::HashSet::new();
    let mut distinct = Vec::new();
    for (i, row) in x.rows().into_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            distinct.push(i);
        }
    }
    if distinct.len() < c {
        return Err(Error::DegenerateData(format!(
            "{} distinct rows cannot seed {c} clusters",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, distinct.len(), c);
    let mut centers = Array2::zeros((c, x.ncols()));
    for (slot, pick) in picks.iter().enumerate() {
        centers.row_mut(slot).assign(&x.row(distinct[pick]));
    }
    Prototypes::new(centers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub c: usize,
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl FcmConfig {
    pub fn new(c: usize, m: f64, seed: u64) -> Self {
        FcmConfig {
            c,
            m,
            tol: 1e-5,
            max_iter: 300,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::InvalidParam(format!(
                "cluster count {}, need at least 2",
                self.c
            )));
        }
        check_fuzzifier(self.m)?;
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidParam(format!("tolerance {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParam("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmModel {
    pub prototypes: Prototypes,
    pub partition: PartitionMatrix,
    pub fuzzifier: f64,
    pub iterations_run: usize,
    pub final_delta: f64,
    pub objective_trace: Vec<f64>,
}

/// Alternating optimization from explicit starting prototypes. Memberships
/// are computed from the initial prototypes first; each iteration then
/// refreshes prototypes from memberships and memberships from the new
/// prototypes. Stops when max |u - u_prev| <= tol or after max_iter sweeps.
pub fn fcm_fit_from(data: &Dataset, cfg: &FcmConfig, init: Prototypes) -> Result<FcmModel> {
    cfg.validate()?;
    let x = data.rows();
    if init.c() != cfg.c {
        return Err(Error::DimMismatch(format!(
            "initial prototypes have {} rows, config wants c = {}",
            init.c(),
            cfg.c
        )));
    }
    check_dims(x, &init)?;
    if data.n_rows() < cfg.c {
        return Err(Error::InvalidParam(format!(
            "cannot split {} rows into {} clusters",
            data.n_rows(),
            cfg.c
        )));
    }

    let mut v = init;
    let mut u = update_memberships(x, &v, cfg.m)?;
    let mut trace = vec![objective_j(x, &u, &v, cfg.m)?];
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    for t in 1..=cfg.max_iter {
        v = update_prototypes(x, &u, cfg.m)?;
        let u_next = update_memberships(x, &v, cfg.m)?;
        delta = u_next
            .grades
            .iter()
            .zip(u.grades.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        u = u_next;
        trace.push(objective_j(x, &u, &v, cfg.m)?);
        iterations = t;
        if delta <= cfg.tol {
            break;
        }
    }

    Ok(FcmModel {
        prototypes: v,
        partition: u,
        fuzzifier: cfg.m,
        iterations_run: iterations,
        final_delta: delta,
        objective_trace: trace,
    })
}

/// Standard fit: seeded initialization, then alternating optimization.
pub fn fcm_fit(data: &Dataset, cfg: &FcmConfig) -> Result<FcmModel> {
    cfg.validate()?;
    let init = init_prototypes(data.rows(), cfg.c, cfg.seed)?;
    fcm_fit_from(data, cfg, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, normalize_zscore, SyntheticSpec};
    use ndarray::array;

    fn dataset(rows: Array2<f64>) -> Dataset {
        Dataset::new(rows, None, "test").unwrap()
    }

    #[test]
    fn sq_distance_hand_values() {
        let a = array![1.0, 2.0];
        let b = array![4.0, 6.0];
        assert_eq!(sq_distance(a.view(), b.view()).unwrap(), 25.0);
        let c = array![1.0];
        assert!(sq_distance(a.view(), c.view()).is_err());
    }

    #[test]
    fn membership_hand_example() {
        // x = 0 against prototypes -1 and 2 with m = 2:
        // d2 = (1, 4), u_1 = 1/(1 + 1/4) = 0.8, u_2 = 0.2.
        let x = array![[0.0]];
        let v = Prototypes::new(array![[-1.0], [2.0]]).unwrap();
        let u = update_memberships(&x, &v, 2.0).unwrap();
        assert!((u.grades()[(0, 0)] - 0.8).abs() < 1e-12);
        assert!((u.grades()[(1, 0)] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn membership_zero_distance_conventions() {
        let x = array![[1.0, 1.0]];
        let v = Prototypes::new(array![[1.0, 1.0], [3.0, 0.0]]).unwrap();
        let u = update_memberships(&x, &v, 2.0).unwrap();
        assert_eq!(u.grades()[(0, 0)], 1.0);
        assert_eq!(u.grades()[(1, 0)], 0.0);

        let v2 = Prototypes::new(array![[1.0, 1.0], [1.0, 1.0], [3.0, 0.0]]).unwrap();
        let u2 = update_memberships(&x, &v2, 2.0).unwrap();
        assert_eq!(u2.grades()[(0, 0)], 0.5);
        assert_eq!(u2.grades()[(1, 0)], 0.5);
        assert_eq!(u2.grades()[(2, 0)], 0.0);
    }

    #[test]
    fn membership_columns_sum_to_one() {
        let d = gen_synthetic(&SyntheticSpec {
            seed: 3,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let v = init_prototypes(d.rows(), 4, 11).unwrap();
        for &m in &[1.1, 2.0, 5.1] {
            let u = update_memberships(d.rows(), &v, m).unwrap();
            for i in 0..u.n() {
                let s: f64 = u.grades().column(i).sum();
                assert!((s - 1.0).abs() < 1e-12, "m = {m}, column {i} sums to {s}");
            }
        }
    }

    #[test]
    fn prototype_update_hand_example() {
        // Crisp memberships recover the assigned points exactly.
        let x = array![[0.0], [3.0]];
        let u = PartitionMatrix {
            grades: array![[1.0, 0.0], [0.0, 1.0]],
        };
        let v = update_prototypes(&x, &u, 2.0).unwrap();
        assert_eq!(v.centers(), &array![[0.0], [3.0]]);

        // Soft memberships: weights are grades squared at m = 2.
        // v_1 = (0.64 * 0 + 0.04 * 3) / 0.68
        let u2 = PartitionMatrix {
            grades: array![[0.8, 0.2], [0.2, 0.8]],
        };
        let v2 = update_prototypes(&x, &u2, 2.0).unwrap();
        assert!((v2.centers()[(0, 0)] - 0.12 / 0.68).abs() < 1e-12);
        assert!((v2.centers()[(1, 0)] - (0.04 * 0.0 + 0.64 * 3.0) / 0.68).abs() < 1e-12);
    }

    #[test]
    fn prototype_update_dead_cluster() {
        let x = array![[0.0], [3.0]];
        let u = PartitionMatrix {
            grades: array![[1.0, 1.0], [0.0, 0.0]],
        };
        match update_prototypes(&x, &u, 2.0) {
            Err(Error::DeadCluster { cluster }) => assert_eq!(cluster, 1),
            other => panic!("expected dead cluster, got {other:?}"),
        }
    }

    #[test]
    fn objective_hand_example() {
        // x = 0, u = (0.8, 0.2), v = (-1, 2), m = 2:
        // J = 0.64 * 1 + 0.04 * 4 = 0.8.
        let x = array![[0.0]];
        let u = PartitionMatrix {
            grades: array![[0.8], [0.2]],
        };
        let v = Prototypes::new(array![[-1.0], [2.0]]).unwrap();
        let j = objective_j(&x, &u, &v, 2.0).unwrap();
        assert!((j - 0.8).abs() < 1e-12);
    }

    #[test]
    fn init_prototypes_are_distinct_data_rows() {
        let d = gen_synthetic(&SyntheticSpec {
            seed: 5,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let v = init_prototypes(d.rows(), 4, 17).unwrap();
        let rows: Vec<Vec<f64>> = d.rows().rows().into_iter().map(|r| r.to_vec()).collect();
        let mut seen = Vec::new();
        for center in v.centers().rows() {
            let cv = center.to_vec();
            assert!(rows.contains(&cv), "prototype not a data row");
            assert!(!seen.contains(&cv), "prototype repeated");
            seen.push(cv);
        }
        let again = init_prototypes(d.rows(), 4, 17).unwrap();
        assert_eq!(v, again);
    }

    #[test]
    fn init_prototypes_rejects_too_few_distinct_rows() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [3.0, 4.0]];
        match init_prototypes(&x, 3, 0) {
            Err(Error::DegenerateData(_)) => {}
            other => panic!("expected degenerate data, got {other:?}"),
        }
    }

    fn assert_partition_invariants(u: &PartitionMatrix) {
        for g in u.grades().iter() {
            assert!((0.0..=1.0 + 1e-12).contains(g), "grade {g} out of range");
        }
        for i in 0..u.n() {
            let s: f64 = u.grades().column(i).sum();
            assert!((s - 1.0).abs() < 1e-12, "column {i} sums to {s}");
        }
    }

    fn assert_trace_non_increasing(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "objective rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn fit_two_blobs() {
        let spec = SyntheticSpec {
            centers: vec![vec![0.0, 0.0], vec![5.0, 5.0]],
            std: 0.3,
            points_per_blob: 40,
            seed: 2,
        };
        let d = gen_synthetic(&spec).unwrap();
        let model = fcm_fit(&d, &FcmConfig::new(2, 2.0, 7)).unwrap();
        assert!(model.final_delta <= 1e-5);
        assert!(model.iterations_run < 300);
        assert_partition_invariants(&model.partition);
        assert_trace_non_increasing(&model.objective_trace);

        // Each blob center should sit close to one prototype.
        let mut found = vec![false; 2];
        for center in [vec![0.0, 0.0], vec![5.0, 5.0]] {
            for (j, proto) in model.prototypes.centers().rows().into_iter().enumerate() {
                let d2: f64 = proto
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 < 0.05 {
                    found[j] = true;
                }
            }
        }
        assert!(found.iter().all(|&f| f), "prototypes missed a blob");
    }

    #[test]
    fn fit_prototypes_stay_in_hull() {
        let d = gen_synthetic(&SyntheticSpec {
            seed: 13,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let model = fcm_fit(&d, &FcmConfig::new(5, 2.0, 23)).unwrap();
        for j in 0..d.n_features() {
            let col = d.rows().column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for proto in model.prototypes.centers().rows() {
                assert!(proto[j] >= lo - 1e-12 && proto[j] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn fit_iris_converges() {
        let path = std::path::Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/data/iris.csv"
        ));
        let raw = crate::dataset::load_csv(path, true, true).unwrap();
        assert_eq!((raw.n_rows(), raw.n_features()), (150, 4));
        let (z, _) = normalize_zscore(&raw).unwrap();
        let model = fcm_fit(&z, &FcmConfig::new(3, 2.0, 42)).unwrap();
        assert!(model.iterations_run < 300, "took {}", model.iterations_run);
        assert!(model.final_delta <= 1e-5);
        assert_partition_invariants(&model.partition);
        assert_trace_non_increasing(&model.objective_trace);
    }

    #[test]
    fn fit_low_fuzzifier_sharpens_partition() {
        let d = gen_synthetic(&SyntheticSpec {
            seed: 19,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let sharp = fcm_fit(&d, &FcmConfig::new(4, 1.05, 3)).unwrap();
        let soft = fcm_fit(&d, &FcmConfig::new(4, 3.0, 3)).unwrap();
        let mean_max = |m: &FcmModel| {
            let u = m.partition.grades();
            let mut acc = 0.0;
            for i in 0..u.ncols() {
                acc += u.column(i).iter().cloned().fold(0.0, f64::max);
            }
            acc / u.ncols() as f64
        };
        assert!(
            mean_max(&sharp) > mean_max(&soft),
            "sharp {} vs soft {}",
            mean_max(&sharp),
            mean_max(&soft)
        );
    }

    #[test]
    fn fit_permutation_equivariance() {
        let d = gen_synthetic(&SyntheticSpec {
            centers: vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0]],
            std: 0.4,
            points_per_blob: 30,
            seed: 8,
        })
        .unwrap();
        let init = init_prototypes(d.rows(), 3, 31).unwrap();
        let cfg = FcmConfig::new(3, 2.0, 0);
        let base = fcm_fit_from(&d, &cfg, init.clone()).unwrap();

        let mut perm: Vec<usize> = (0..d.n_rows()).collect();
        perm.reverse();
        let permuted = d.subset(&perm).unwrap();
        let permuted_fit = fcm_fit_from(&permuted, &cfg, init).unwrap();

        for (a, b) in base
            .prototypes
            .centers()
            .iter()
            .zip(permuted_fit.prototypes.centers().iter())
        {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn model_json_roundtrip() {
        let d = gen_synthetic(&SyntheticSpec {
            centers: vec![vec![0.0], vec![3.0]],
            std: 0.2,
            points_per_blob: 10,
            seed: 4,
        })
        .unwrap();
        let model = fcm_fit(&d, &FcmConfig::new(2, 2.0, 1)).unwrap();
        let s = serde_json::to_string(&model).unwrap();
        let back: FcmModel = serde_json::from_str(&s).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn config_validation() {
        assert!(FcmConfig::new(1, 2.0, 0).validate().is_err());
        assert!(FcmConfig::new(2, 1.0, 0).validate().is_err());
        assert!(FcmConfig::new(2, f64::NAN, 0).validate().is_err());
        let mut cfg = FcmConfig::new(2, 2.0, 0);
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
    }
}
