use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fcm::{FcmModel, Prototypes};

/// Relative Rayleigh-quotient change below which power iteration stops.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Power iteration cap.
pub const SPECTRAL_MAX_ITER: usize = 1000;

/// One fuzzification factor per cluster, each > 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzifierVector {
    values: Vec<f64>,
}

impl FuzzifierVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("fuzzifier vector is empty".into()));
        }
        for (j, &m) in values.iter().enumerate() {
            if !m.is_finite() || m <= 1.0 {
                return Err(Error::InvalidParam(format!(
                    "fuzzifier {j} must be finite and > 1, got {m}"
                )));
            }
        }
        Ok(FuzzifierVector { values })
    }

    pub fn uniform(m: f64, c: usize) -> Result<Self> {
        FuzzifierVector::new(vec![m; c])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Memberships raised to their cluster's fuzzification factor (c x N).
/// Stored directly in powered form: entry (j, i) is
/// [sum_k (d_ji / d_ki)^(2/(m_j - 1))]^(-m_j).
#[derive(Debug, Clone, PartialEq)]
pub struct PoweredPartition {
    grades_pow: Array2<f64>,
}

impl PoweredPartition {
    pub fn grades_pow(&self) -> &Array2<f64> {
        &self.grades_pow
    }

    pub fn c(&self) -> usize {
        self.grades_pow.nrows()
    }

    pub fn n(&self) -> usize {
        self.grades_pow.ncols()
    }
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

/// Per-cluster-powered memberships. With every factor equal this reduces
/// elementwise to the plain membership matrix raised to that factor; a datum
/// coincident with prototypes splits membership evenly among them before
/// powering.
pub fn powered_memberships(
    x: &Array2<f64>,
    v: &Prototypes,
    m: &FuzzifierVector,
) -> Result<PoweredPartition> {
    check_dims(x, v)?;
    let c = v.c();
    if m.len() != c {
        return Err(Error::DimMismatch(format!(
            "fuzzifier vector has {} entries for {c} clusters",
            m.len()
        )));
    }
    let n = x.nrows();
    let mut grades_pow = Array2::zeros((c, n));
    let mut d2 = vec![0.0f64; c];
    for i in 0..n {
        let xi = x.row(i);
        for (j, slot) in d2.iter_mut().enumerate() {
            let mut s = 0.0;
            for (a, b) in xi.iter().zip(v.centers().row(j).iter()) {
                let d = a - b;
                s += d * d;
            }
            *slot = s;
        }
        let coincident = d2.iter().filter(|&&d| d == 0.0).count();
        if coincident > 0 {
            let w = 1.0 / coincident as f64;
            for j in 0..c {
                grades_pow[(j, i)] = if d2[j] == 0.0 {
                    w.powf(m.values[j])
                } else {
                    0.0
                };
            }
        } else {
            for j in 0..c {
                let exp = 1.0 / (m.values[j] - 1.0);
                let mut s = 0.0;
                for &dk in &d2 {
                    s += (d2[j] / dk).powf(exp);
                }
                grades_pow[(j, i)] = s.powf(-m.values[j]);
            }
        }
    }
    Ok(PoweredPartition { grades_pow })
}

/// Prototype refinement from powered memberships:
/// v_j = sum_i w_ji x_i / sum_i w_ji.
pub fn refine_prototypes(x: &Array2<f64>, upow: &PoweredPartition) -> Result<Prototypes> {
    if upow.n() != x.nrows() {
        return Err(Error::DimMismatch(format!(
            "powered partition covers {} data, matrix has {} rows",
            upow.n(),
            x.nrows()
        )));
    }
    let c = upow.c();
    let nf = x.ncols();
    let mut centers = Array2::zeros((c, nf));
    for j in 0..c {
        let mut num = Array1::<f64>::zeros(nf);
        let mut den = 0.0;
        for i in 0..x.nrows() {
            let w = upow.grades_pow[(j, i)];
            den += w;
            num.scaled_add(w, &x.row(i));
        }
        if !(den > 0.0) {
            return Err(Error::DeadCluster { cluster: j });
        }
        centers.row_mut(j).assign(&num.mapv(|v| v / den));
    }
    Prototypes::new(centers)
}

/// Degranulation: each datum is rebuilt as the powered-membership-weighted
/// mean of the prototypes, x_hat_i = sum_j w_ji v_j / sum_j w_ji.
pub fn reconstruct(upow: &PoweredPartition, v: &Prototypes) -> Result<Array2<f64>> {
    if upow.c() != v.c() {
        return Err(Error::DimMismatch(format!(
            "powered partition has {} clusters, prototypes {}",
            upow.c(),
            v.c()
        )));
    }
    let n = upow.n();
    let nf = v.n_features();
    let mut x_hat = Array2::zeros((n, nf));
    for i in 0..n {
        let mut num = Array1::<f64>::zeros(nf);
        let mut den = 0.0;
        for j in 0..v.c() {
            let w = upow.grades_pow[(j, i)];
            den += w;
            num.scaled_add(w, &v.centers().row(j));
        }
        if !(den > 0.0) {
            return Err(Error::IsolatedDatum { row: i });
        }
        x_hat.row_mut(i).assign(&num.mapv(|v| v / den));
    }
    Ok(x_hat)
}

/// Column-normalized reconstruction weights (each column sums to 1).
pub fn reconstruction_weights(upow: &PoweredPartition) -> Result<Array2<f64>> {
    let mut w = upow.grades_pow.clone();
    for i in 0..upow.n() {
        let s: f64 = w.column(i).sum();
        if !(s > 0.0) {
            return Err(Error::IsolatedDatum { row: i });
        }
        w.column_mut(i).mapv_inplace(|v| v / s);
    }
    Ok(w)
}

/// Scalar-fuzzifier degranulation, definitionally the vector pipeline with a
/// uniform vector.
pub fn reconstruct_scalar(x: &Array2<f64>, v: &Prototypes, m: f64) -> Result<Array2<f64>> {
    let uniform = FuzzifierVector::uniform(m, v.c())?;
    let upow = powered_memberships(x, v, &uniform)?;
    reconstruct(&upow, v)
}

/// Largest singular value via power iteration on A^T A. The start vector is
/// drawn from a fixed-seed generator so results are reproducible; convergence
/// is declared after the relative Rayleigh-quotient change stays within tol
/// on two consecutive iterations. When the top of the spectrum is so
/// clustered that the change detector cannot settle within max_iter (the
/// iterate drifts across a near-tied eigenpair), the estimate is finished by
/// a deterministic Jacobi diagonalization of the Gram matrix instead of
/// failing; Jacobi has no tie sensitivity, and the Gram matrix is only as
/// wide as A has columns.
pub fn spectral_norm(a: &Array2<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParam(format!("spectral tolerance {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParam("spectral max_iter must be at least 1".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }

    let b = a.t().dot(a);
    let k = b.nrows();
    if k == 1 {
        return Ok(b[(0, 0)].max(0.0).sqrt());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut q = random_unit(&mut rng, k);
    let mut rho_prev = f64::NAN;
    let mut hits = 0;
    for _ in 0..max_iter {
        let z = b.dot(&q);
        let rho: f64 = q.dot(&z);
        let zn = z.dot(&z).sqrt();
        if !(zn > 0.0) {
            // q landed in the null space; restart from a fresh direction.
            q = random_unit(&mut rng, k);
            rho_prev = f64::NAN;
            hits = 0;
            continue;
        }
        q = z.mapv(|v| v / zn);
        if rho_prev.is_finite() {
            let delta = (rho - rho_prev).abs();
            if delta <= tol * rho.abs().max(rho_prev.abs()) {
                hits += 1;
                if hits >= 2 {
                    return Ok(rho.max(0.0).sqrt());
                }
            } else {
                hits = 0;
            }
        }
        rho_prev = rho;
    }
    Ok(jacobi_lambda_max(&b)?.max(0.0).sqrt())
}

/// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
/// Deterministic and insensitive to eigenvalue ties, at the cost of fully
/// diagonalizing the matrix; used only to finish the rare spectra that power
/// iteration cannot certify.
fn jacobi_lambda_max(b: &Array2<f64>) -> Result<f64> {
    const SWEEPS: usize = 50;
    let k = b.nrows();
    let mut m = b.clone();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..SWEEPS {
        let off: f64 = (0..k)
            .map(|p| (p + 1..k).map(|q| m[(p, q)] * m[(p, q)]).sum::<f64>())
            .sum();
        if off.sqrt() <= 1e-14 * scale {
            return Ok((0..k).map(|p| m[(p, p)]).fold(f64::NEG_INFINITY, f64::max));
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..k {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for i in 0..k {
                    let mpi = m[(p, i)];
                    let mqi = m[(q, i)];
                    m[(p, i)] = c * mpi - s * mqi;
                    m[(q, i)] = s * mpi + c * mqi;
                }
            }
        }
    }
    Err(Error::Numeric(format!(
        "jacobi diagonalization did not settle within {SWEEPS} sweeps on a {k}x{k} matrix"
    )))
}

fn random_unit(rng: &mut ChaCha8Rng, k: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_iter((0..k).map(|_| rng.random_range(-1.0..1.0)));
        let n = v.dot(&v).sqrt();
        if n > 1e-3 {
            return v.mapv(|x| x / n);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub x_hat: Array2<f64>,
    /// Reconstruction error R_e = ||X_hat - X||_2 / N.
    pub error: f64,
    /// The spectral norm before division by N.
    pub raw_norm: f64,
}

/// R_e between a reconstruction and the original data.
pub fn reconstruction_error(x_hat: Array2<f64>, x: &Array2<f64>) -> Result<ReconstructionResult> {
    if x_hat.dim() != x.dim() {
        return Err(Error::DimMismatch(format!(
            "reconstruction is {:?}, data is {:?}",
            x_hat.dim(),
            x.dim()
        )));
    }
    let diff = &x_hat - x;
    let raw_norm = spectral_norm(&diff, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
    let error = raw_norm / x.nrows() as f64;
    Ok(ReconstructionResult {
        x_hat,
        error,
        raw_norm,
    })
}

/// Everything produced by one pass of the vector-fuzzifier pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeEval {
    /// ||X_hat - X||_2 (not divided by N).
    pub objective: f64,
    /// Refined prototypes V_hat.
    pub prototypes: Prototypes,
    /// Powered memberships at the refined prototypes.
    pub powered: PoweredPartition,
    pub x_hat: Array2<f64>,
}

/// Single evaluation of a fuzzifier vector against a fitted base model:
/// powered memberships at the base prototypes, one prototype refinement,
/// powered memberships at the refined prototypes, degranulation, and the
/// spectral norm of the residual.
pub fn composite_objective(
    data: &Dataset,
    base: &FcmModel,
    m: &FuzzifierVector,
) -> Result<CompositeEval> {
    let x = data.rows();
    let upow0 = powered_memberships(x, &base.prototypes, m)?;
    let v_hat = refine_prototypes(x, &upow0)?;
    let powered = powered_memberships(x, &v_hat, m)?;
    let x_hat = reconstruct(&powered, &v_hat)?;
    let diff = &x_hat - x;
    let objective = spectral_norm(&diff, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
    Ok(CompositeEval {
        objective,
        prototypes: v_hat,
        powered,
        x_hat,
    })
}
