use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::fcm::{fcm_fit, FcmConfig, FcmModel, Prototypes};
use crate::pso::{pso_minimize, PsoConfig, PsoResult};
use crate::reconstruction::{
    composite_objective, powered_memberships, reconstruct, reconstruct_scalar,
    reconstruction_error, FuzzifierVector,
};

/// A fitted base model plus the fuzzifier vector selected for it and the
/// prototypes refined under that vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedModel {
    pub base: FcmModel,
    pub fuzzifiers: FuzzifierVector,
    pub prototypes: Prototypes,
    /// Training reconstruction error, best swarm fitness divided by N_train.
    pub train_error: f64,
    pub pso: PsoResult,
}

/// Fit FCM, then search for a per-cluster fuzzifier vector that minimizes the
/// composite reconstruction objective. The swarm is seeded at the uniform
/// vector [m, ..., m], so the selected vector never scores worse than the
/// scalar baseline on the training set. `pso_cfg.max_iter == 0` disables the
/// search entirely and keeps the uniform vector.
pub fn train_refined(
    train: &Dataset,
    fcm_cfg: &FcmConfig,
    pso_cfg: &PsoConfig,
) -> Result<RefinedModel> {
    fcm_cfg.validate()?;
    let base = fcm_fit(train, fcm_cfg)?;
    let seed_vec = vec![fcm_cfg.m; fcm_cfg.c];
    let n = train.n_rows() as f64;

    let (pso, eval) = if pso_cfg.max_iter == 0 {
        let uniform = FuzzifierVector::new(seed_vec.clone())?;
        let eval = composite_objective(train, &base, &uniform)?;
        let pso = PsoResult {
            best_position: seed_vec.clone(),
            best_value: eval.objective,
            history: vec![eval.objective],
            position_history: vec![seed_vec],
            iterations_run: 0,
            stopped_early: false,
        };
        (pso, eval)
    } else {
        let fitness = |m: &[f64]| -> f64 {
            FuzzifierVector::new(m.to_vec())
                .and_then(|fv| composite_objective(train, &base, &fv))
                .map(|e| e.objective)
                .unwrap_or(f64::INFINITY)
        };
        let pso = pso_minimize(fitness, fcm_cfg.c, pso_cfg, Some(&seed_vec))?;
        let best = FuzzifierVector::new(pso.best_position.clone())?;
        let eval = composite_objective(train, &base, &best)?;
        (pso, eval)
    };

    Ok(RefinedModel {
        base,
        fuzzifiers: FuzzifierVector::new(pso.best_position.clone())?,
        prototypes: eval.prototypes,
        train_error: pso.best_value / n,
        pso,
    })
}

/// Reconstruction error of arbitrary data under a refined model: powered
/// memberships against the refined prototypes, degranulation, R_e.
pub fn evaluate_refined(model: &RefinedModel, data: &Dataset) -> Result<f64> {
    let upow = powered_memberships(data.rows(), &model.prototypes, &model.fuzzifiers)?;
    let x_hat = reconstruct(&upow, &model.prototypes)?;
    Ok(reconstruction_error(x_hat, data.rows())?.error)
}

/// Scalar-fuzzifier baseline: the base fit plus one prototype refinement at
/// the uniform vector, which makes its training error identical to the
/// fitness of the refined pipeline's seed particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub base: FcmModel,
    pub prototypes: Prototypes,
    pub fuzzifier: f64,
    pub train_error: f64,
}

pub fn baseline_fit(train: &Dataset, fcm_cfg: &FcmConfig) -> Result<BaselineModel> {
    fcm_cfg.validate()?;
    let base = fcm_fit(train, fcm_cfg)?;
    let uniform = FuzzifierVector::uniform(fcm_cfg.m, fcm_cfg.c)?;
    let eval = composite_objective(train, &base, &uniform)?;
    Ok(BaselineModel {
        base,
        prototypes: eval.prototypes,
        fuzzifier: fcm_cfg.m,
        train_error: eval.objective / train.n_rows() as f64,
    })
}

/// R_e of arbitrary data under the baseline model.
pub fn baseline_score(model: &BaselineModel, data: &Dataset) -> Result<f64> {
    let x_hat = reconstruct_scalar(data.rows(), &model.prototypes, model.fuzzifier)?;
    Ok(reconstruction_error(x_hat, data.rows())?.error)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub train_error: f64,
    pub test_error: f64,
}

/// Train-set and eval-set reconstruction errors of the scalar baseline.
pub fn evaluate_baseline(
    train: &Dataset,
    eval_set: &Dataset,
    fcm_cfg: &FcmConfig,
) -> Result<EvalScores> {
    let model = baseline_fit(train, fcm_cfg)?;
    let test_error = baseline_score(&model, eval_set)?;
    Ok(EvalScores {
        train_error: model.train_error,
        test_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SyntheticSpec};
    use ndarray::array;

    fn blobs(seed: u64) -> Dataset {
        gen_synthetic(&SyntheticSpec {
            centers: vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]],
            std: 0.4,
            points_per_blob: 25,
            seed,
        })
        .unwrap()
    }

    fn small_pso(dim: usize, iters: usize) -> PsoConfig {
        let mut cfg = PsoConfig::for_dim(dim);
        cfg.particles = 12;
        cfg.max_iter = iters;
        cfg.stall_window = 20;
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn disabled_search_reproduces_the_baseline_exactly() {
        let d = blobs(1);
        let fcm_cfg = FcmConfig::new(3, 2.0, 9);
        let refined = train_refined(&d, &fcm_cfg, &small_pso(3, 0)).unwrap();
        let baseline = baseline_fit(&d, &fcm_cfg).unwrap();
        assert_eq!(refined.train_error, baseline.train_error);
        assert_eq!(refined.prototypes, baseline.prototypes);
        assert_eq!(refined.fuzzifiers.values(), &[2.0, 2.0, 2.0]);
        assert_eq!(refined.pso.iterations_run, 0);
    }

    #[test]
    fn search_never_loses_to_the_baseline() {
        let d = blobs(2);
        let fcm_cfg = FcmConfig::new(3, 2.0, 17);
        let refined = train_refined(&d, &fcm_cfg, &small_pso(3, 40)).unwrap();
        let baseline = baseline_fit(&d, &fcm_cfg).unwrap();
        assert!(
            refined.train_error <= baseline.train_error,
            "refined {} vs baseline {}",
            refined.train_error,
            baseline.train_error
        );
        assert_eq!(refined.pso.history[0] / d.n_rows() as f64, baseline.train_error);
    }

    #[test]
    fn evaluate_refined_is_consistent_with_training_error() {
        let d = blobs(3);
        let fcm_cfg = FcmConfig::new(3, 2.0, 23);
        let refined = train_refined(&d, &fcm_cfg, &small_pso(3, 25)).unwrap();
        let again = evaluate_refined(&refined, &d).unwrap();
        assert!(
            (again - refined.train_error).abs() < 1e-12,
            "{again} vs {}",
            refined.train_error
        );
    }

    #[test]
    fn evaluating_a_prototype_row_gives_zero_error() {
        let d = blobs(4);
        let fcm_cfg = FcmConfig::new(3, 2.0, 31);
        let refined = train_refined(&d, &fcm_cfg, &small_pso(3, 10)).unwrap();
        let proto = refined.prototypes.centers().row(0).to_owned();
        let single = Dataset::new(
            array![[proto[0], proto[1]]],
            None,
            "probe",
        )
        .unwrap();
        let err = evaluate_refined(&refined, &single).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let d = blobs(5);
        let fcm_cfg = FcmConfig::new(3, 2.0, 41);
        let a = train_refined(&d, &fcm_cfg, &small_pso(3, 20)).unwrap();
        let b = train_refined(&d, &fcm_cfg, &small_pso(3, 20)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_scores_both_splits() {
        let d = blobs(6);
        let train_rows: Vec<usize> = (0..60).collect();
        let test_rows: Vec<usize> = (60..75).collect();
        let train = d.subset(&train_rows).unwrap();
        let test = d.subset(&test_rows).unwrap();
        let scores = evaluate_baseline(&train, &test, &FcmConfig::new(3, 2.0, 51)).unwrap();
        assert!(scores.train_error > 0.0 && scores.train_error.is_finite());
        assert!(scores.test_error > 0.0 && scores.test_error.is_finite());
    }
}
