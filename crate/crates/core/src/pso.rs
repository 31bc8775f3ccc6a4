use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub max_iter: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Stop after this many consecutive iterations whose global-best
    /// improvement stays below stall_eps.
    pub stall_window: usize,
    pub stall_eps: f64,
    pub bounds_low: Vec<f64>,
    pub bounds_high: Vec<f64>,
    pub seed: u64,
}

impl PsoConfig {
    /// Stock swarm for a search box [1.05, 10]^dim.
    pub fn for_dim(dim: usize) -> Self {
        PsoConfig {
            particles: 75,
            max_iter: 500,
            inertia: 0.8,
            cognitive: 1.49445,
            social: 1.49445,
            stall_window: 75,
            stall_eps: 1e-12,
            bounds_low: vec![1.05; dim],
            bounds_high: vec![10.0; dim],
            seed: 0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidParam("search space has no dimensions".into()));
        }
        if self.particles < 2 {
            return Err(Error::InvalidParam(format!(
                "swarm of {} particles, need at least 2",
                self.particles
            )));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParam(format!("{name} weight {v}")));
            }
        }
        if self.stall_window == 0 {
            return Err(Error::InvalidParam("stall_window must be at least 1".into()));
        }
        if !(self.stall_eps >= 0.0) {
            return Err(Error::InvalidParam(format!("stall_eps {}", self.stall_eps)));
        }
        if self.bounds_low.len() != dim || self.bounds_high.len() != dim {
            return Err(Error::DimMismatch(format!(
                "bounds cover {}/{} dimensions, search space has {dim}",
                self.bounds_low.len(),
                self.bounds_high.len()
            )));
        }
        for d in 0..dim {
            let (lo, hi) = (self.bounds_low[d], self.bounds_high[d]);
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidParam(format!(
                    "bounds [{lo}, {hi}] in dimension {d}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_value: f64,
}

/// v' = w v + c1 r1 (p_best - x) + c2 r2 (g_best - x), componentwise, then
/// clamped to +-(hi - lo) per dimension.
pub fn update_velocity(
    particle: &Particle,
    g_best: &[f64],
    cfg: &PsoConfig,
    r1: &[f64],
    r2: &[f64],
) -> Vec<f64> {
    let dim = particle.position.len();
    let mut v = Vec::with_capacity(dim);
    for d in 0..dim {
        let x = particle.position[d];
        let raw = cfg.inertia * particle.velocity[d]
            + cfg.cognitive * r1[d] * (particle.best_position[d] - x)
            + cfg.social * r2[d] * (g_best[d] - x);
        let vmax = cfg.bounds_high[d] - cfg.bounds_low[d];
        v.push(raw.clamp(-vmax, vmax));
    }
    v
}

/// x' = x + v with box clamping; a clamped component has its velocity zeroed.
pub fn update_position(
    position: &[f64],
    velocity: &mut [f64],
    lo: &[f64],
    hi: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(position.len());
    for d in 0..position.len() {
        let mut x = position[d] + velocity[d];
        if x < lo[d] {
            x = lo[d];
            velocity[d] = 0.0;
        } else if x > hi[d] {
            x = hi[d];
            velocity[d] = 0.0;
        }
        out.push(x);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_value: f64,
    /// Global best value after initialization and after each iteration.
    pub history: Vec<f64>,
    /// Global best position matching each history entry.
    pub position_history: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub stopped_early: bool,
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Global-best particle swarm minimization over a box. Evaluation is
/// synchronous: every particle moves against the global best of the previous
/// iteration, then the global best is re-reduced in particle order (ties keep
/// the lowest index). With `seed_position` given, particle 0 starts there
/// (clamped into the box), which caps the final best at that point's fitness.
pub fn pso_minimize<F: FnMut(&[f64]) -> f64>(
    mut fitness: F,
    dim: usize,
    cfg: &PsoConfig,
    seed_position: Option<&[f64]>,
) -> Result<PsoResult> {
    cfg.validate(dim)?;
    if let Some(s) = seed_position {
        if s.len() != dim {
            return Err(Error::DimMismatch(format!(
                "seed position has {} dimensions, search space has {dim}",
                s.len()
            )));
        }
    }
    let lo = &cfg.bounds_low;
    let hi = &cfg.bounds_high;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut swarm: Vec<Particle> = Vec::with_capacity(cfg.particles);
    for p in 0..cfg.particles {
        let position: Vec<f64> = match (p, seed_position) {
            (0, Some(s)) => s
                .iter()
                .enumerate()
                .map(|(d, &x)| x.clamp(lo[d], hi[d]))
                .collect(),
            _ => (0..dim).map(|d| rng.random_range(lo[d]..=hi[d])).collect(),
        };
        let value = sanitize(fitness(&position));
        swarm.push(Particle {
            velocity: vec![0.0; dim],
            best_position: position.clone(),
            position,
            best_value: value,
        });
    }

    let (mut g_pos, mut g_val) = {
        let mut idx = 0;
        for p in 1..swarm.len() {
            if swarm[p].best_value < swarm[idx].best_value {
                idx = p;
            }
        }
        (swarm[idx].best_position.clone(), swarm[idx].best_value)
    };
    if !g_val.is_finite() {
        return Err(Error::Numeric(
            "no swarm particle reached finite fitness at initialization".into(),
        ));
    }

    let mut history = vec![g_val];
    let mut position_history = vec![g_pos.clone()];
    let mut stall = 0usize;
    let mut stopped_early = false;
    let mut iterations_run = 0usize;

    for iter in 1..=cfg.max_iter {
        let prev_best = g_val;
        for p in 0..cfg.particles {
            let r1: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let r2: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let mut velocity = update_velocity(&swarm[p], &g_pos, cfg, &r1, &r2);
            let position = update_position(&swarm[p].position, &mut velocity, lo, hi);
            let value = sanitize(fitness(&position));
            let particle = &mut swarm[p];
            particle.velocity = velocity;
            particle.position = position;
            if value < particle.best_value {
                particle.best_value = value;
                particle.best_position = particle.position.clone();
            }
        }
        for particle in &swarm {
            if particle.best_value < g_val {
                g_val = particle.best_value;
                g_pos = particle.best_position.clone();
            }
        }
        iterations_run = iter;
        history.push(g_val);
        position_history.push(g_pos.clone());
        if prev_best - g_val < cfg.stall_eps {
            stall += 1;
        } else {
            stall = 0;
        }
        if stall >= cfg.stall_window {
            stopped_early = true;
            break;
        }
    }

    Ok(PsoResult {
        best_position: g_pos,
        best_value: g_val,
        history,
        position_history,
        iterations_run,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    fn sphere_at(target: &[f64]) -> impl Fn(&[f64]) -> f64 + '_ {
        move |x: &[f64]| {
            x.iter()
                .zip(target.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        }
    }

    #[test]
    fn velocity_hand_example() {
        // v = 0, x = 2, p_best = 1, g_best = 3, r1 = r2 = 0.5:
        // the cognitive and social pulls cancel exactly.
        let cfg = PsoConfig::for_dim(1);
        let p = Particle {
            position: vec![2.0],
            velocity: vec![0.0],
            best_position: vec![1.0],
            best_value: 0.0,
        };
        let v = update_velocity(&p, &[3.0], &cfg, &[0.5], &[0.5]);
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn velocity_is_clamped_to_box_range() {
        let mut cfg = PsoConfig::for_dim(1);
        cfg.bounds_low = vec![0.0];
        cfg.bounds_high = vec![1.0];
        let p = Particle {
            position: vec![0.0],
            velocity: vec![0.0],
            best_position: vec![0.0],
            best_value: 0.0,
        };
        let v = update_velocity(&p, &[100.0], &cfg, &[1.0], &[1.0]);
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn position_clamp_zeroes_velocity() {
        let mut v = vec![2.0, -3.0, 0.5];
        let x = update_position(&[9.5, 1.2, 5.0], &mut v, &[1.05, 1.05, 1.05], &[10.0, 10.0, 10.0]);
        assert_eq!(x, vec![10.0, 1.05, 5.5]);
        assert_eq!(v, vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn constant_fitness_stalls_out() {
        let mut cfg = PsoConfig::for_dim(2);
        cfg.particles = 10;
        cfg.max_iter = 500;
        cfg.stall_window = 25;
        cfg.seed = 3;
        let seed = [2.0, 2.0];
        let r = pso_minimize(|_| 7.5, 2, &cfg, Some(&seed)).unwrap();
        assert!(r.stopped_early);
        assert_eq!(r.iterations_run, 25);
        assert_eq!(r.history.len(), 26);
        assert!(r.history.iter().all(|&v| v == 7.5));
        assert_eq!(r.best_position, seed.to_vec());
    }

    #[test]
    fn sphere_is_minimized() {
        let target = [3.0, 7.0, 2.0];
        let mut cfg = PsoConfig::for_dim(3);
        cfg.particles = 30;
        cfg.max_iter = 200;
        cfg.seed = 5;
        let r = pso_minimize(sphere_at(&target), 3, &cfg, None).unwrap();
        assert!(r.best_value < 1e-6, "best {}", r.best_value);
        for (a, b) in r.best_position.iter().zip(target.iter()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn seeding_caps_the_result() {
        // A deliberately tiny, short run cannot do worse than the seed.
        let seed = [1.5, 1.5];
        let mut cfg = PsoConfig::for_dim(2);
        cfg.particles = 3;
        cfg.max_iter = 2;
        cfg.seed = 11;
        let f = sphere_at(&[1.5, 1.5]);
        let seed_fitness = f(&seed);
        let r = pso_minimize(f, 2, &cfg, Some(&seed)).unwrap();
        assert!(r.best_value <= seed_fitness);
        assert_eq!(r.history[0], seed_fitness);
    }

    #[test]
    fn history_is_monotone_and_positions_stay_in_bounds() {
        let queried = RefCell::new(Vec::new());
        let mut cfg = PsoConfig::for_dim(2);
        cfg.particles = 12;
        cfg.max_iter = 60;
        cfg.seed = 21;
        let r = pso_minimize(
            |x| {
                queried.borrow_mut().push(x.to_vec());
                sphere_at(&[4.0, 4.0])(x)
            },
            2,
            &cfg,
            Some(&[2.0, 2.0]),
        )
        .unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for q in queried.borrow().iter() {
            for d in 0..2 {
                assert!(q[d] >= cfg.bounds_low[d] && q[d] <= cfg.bounds_high[d], "{q:?}");
            }
        }
        assert_eq!(queried.borrow()[0], vec![2.0, 2.0]);
    }

    #[test]
    fn zero_iterations_evaluates_initial_swarm_only() {
        let mut cfg = PsoConfig::for_dim(2);
        cfg.particles = 5;
        cfg.max_iter = 0;
        cfg.seed = 2;
        let r = pso_minimize(sphere_at(&[2.0, 2.0]), 2, &cfg, None).unwrap();
        assert_eq!(r.iterations_run, 0);
        assert_eq!(r.history.len(), 1);
        assert!(!r.stopped_early);
    }

    #[test]
    fn nan_fitness_is_treated_as_worst() {
        let mut cfg = PsoConfig::for_dim(1);
        cfg.particles = 8;
        cfg.max_iter = 40;
        cfg.seed = 9;
        // NaN on half the box must not poison the reduction.
        let r = pso_minimize(
            |x| {
                if x[0] > 5.0 {
                    f64::NAN
                } else {
                    (x[0] - 2.0) * (x[0] - 2.0)
                }
            },
            1,
            &cfg,
            Some(&[4.0]),
        )
        .unwrap();
        assert!(r.best_value.is_finite());
        assert!((r.best_position[0] - 2.0).abs() < 1e-2);

        let all_nan = pso_minimize(|_| f64::NAN, 1, &cfg, None);
        assert!(all_nan.is_err());
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let mut cfg = PsoConfig::for_dim(3);
        cfg.particles = 10;
        cfg.max_iter = 30;
        cfg.seed = 77;
        let a = pso_minimize(sphere_at(&[2.0, 3.0, 4.0]), 3, &cfg, None).unwrap();
        let b = pso_minimize(sphere_at(&[2.0, 3.0, 4.0]), 3, &cfg, None).unwrap();
        assert_eq!(a, b);
        cfg.seed = 78;
        let c = pso_minimize(sphere_at(&[2.0, 3.0, 4.0]), 3, &cfg, None).unwrap();
        assert_ne!(a.best_position, c.best_position);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PsoConfig::for_dim(2);
        assert!(cfg.validate(2).is_ok());
        assert!(cfg.validate(3).is_err());
        cfg.particles = 1;
        assert!(cfg.validate(2).is_err());
        cfg = PsoConfig::for_dim(2);
        cfg.bounds_low[0] = 10.0;
        assert!(cfg.validate(2).is_err());
        cfg = PsoConfig::for_dim(2);
        cfg.inertia = -0.1;
        assert!(cfg.validate(2).is_err());
    }
}
