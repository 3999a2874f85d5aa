//! The upper layer: global-best particle swarm optimization over the
//! H-dimensional price box, plus an exhaustive grid-search oracle for
//! desk-scale verification.
//!
//! Conventions: the objective is *minimized* (callers pass negated profit),
//! while results and history are reported as profit. Updates are
//! synchronous — all particles are evaluated, then the bests move — so runs
//! are bit-deterministic per seed no matter how evaluations are scheduled.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{PriceBounds, PriceSchedule};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid bounds: require min < max, got [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
    #[error("invalid swarm configuration: {0}")]
    InvalidConfig(String),
    #[error("grid of {points} lattice points exceeds the {limit} budget")]
    BudgetExceeded { points: u128, limit: u128 },
}

/// PSO hyperparameters. Defaults are the standard constriction-style values.
#[derive(Debug, Clone, Copy)]
pub struct SwarmConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of the box range, in `(0, 1]`.
    pub velocity_clamp: f64,
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            swarm_size: 30,
            iterations: 100,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            velocity_clamp: 0.2,
            seed: 0,
        }
    }
}

impl SwarmConfig {
    fn check(&self) -> Result<(), OptimizerError> {
        if self.swarm_size < 1 {
            return Err(OptimizerError::InvalidConfig("swarm_size must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(OptimizerError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.velocity_clamp > 0.0 && self.velocity_clamp <= 1.0) {
            return Err(OptimizerError::InvalidConfig("velocity_clamp must be in (0, 1]".into()));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(v > 0.0) {
                return Err(OptimizerError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Outcome of one PSO run.
#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub best_schedule: PriceSchedule,
    pub best_profit: f64,
    /// Best-so-far profit after each iteration; non-decreasing by
    /// construction and ending at `best_profit`.
    pub history: Vec<f64>,
    /// Mean swarm profit at each iteration, for convergence plots.
    pub mean_history: Vec<f64>,
    pub evaluations: usize,
    /// Positions found outside the box after clipping; always 0 unless the
    /// bound handling is broken. Kept as run evidence.
    pub bound_violations: usize,
}

impl OptimizationRun {
    /// The minimized objective value at the optimum.
    pub fn best_objective(&self) -> f64 {
        -self.best_profit
    }
}

/// Global-best PSO with box clipping: positions start uniform in the box,
/// velocities are clamped to `velocity_clamp * range`, and any component
/// clipped back to a bound has its velocity zeroed.
pub fn pso_optimize<F>(
    objective: F,
    bounds: &PriceBounds,
    dimensions: usize,
    cfg: &SwarmConfig,
) -> Result<OptimizationRun, OptimizerError>
where
    F: Fn(&PriceSchedule) -> f64 + Sync,
{
    if !(bounds.min < bounds.max) {
        return Err(OptimizerError::InvalidBounds { min: bounds.min, max: bounds.max });
    }
    if dimensions < 1 {
        return Err(OptimizerError::InvalidConfig("dimensions must be >= 1".into()));
    }
    cfg.check()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.swarm_size;
    let v_max = cfg.velocity_clamp * bounds.range();

    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dimensions).map(|_| rng.gen_range(bounds.min..=bounds.max)).collect())
        .collect();
    let mut velocities: Vec<Vec<f64>> = vec![vec![0.0; dimensions]; n];

    let evaluate = |positions: &[Vec<f64>]| -> Vec<f64> {
        positions
            .par_iter()
            .map(|x| objective(&PriceSchedule::new(x.clone(), *bounds)))
            .collect()
    };

    let mut values = evaluate(&positions);
    let mut personal_best = positions.clone();
    let mut personal_best_values = values.clone();
    let (mut global_best_value, mut global_best) = {
        let mut best = 0;
        for p in 1..n {
            if personal_best_values[p] < personal_best_values[best] {
                best = p;
            }
        }
        (personal_best_values[best], personal_best[best].clone())
    };

    let mut history = Vec::with_capacity(cfg.iterations);
    let mut mean_history = Vec::with_capacity(cfg.iterations);
    let mut bound_violations = 0usize;

    for _ in 0..cfg.iterations {
        for p in 0..n {
            for d in 0..dimensions {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = cfg.inertia * velocities[p][d]
                    + cfg.cognitive * r1 * (personal_best[p][d] - positions[p][d])
                    + cfg.social * r2 * (global_best[d] - positions[p][d]);
                let v = v.clamp(-v_max, v_max);
                let mut x = positions[p][d] + v;
                let mut v = v;
                if x < bounds.min {
                    x = bounds.min;
                    v = 0.0;
                } else if x > bounds.max {
                    x = bounds.max;
                    v = 0.0;
                }
                positions[p][d] = x;
                velocities[p][d] = v;
            }
        }
        bound_violations += positions
            .iter()
            .flatten()
            .filter(|&&x| x < bounds.min || x > bounds.max)
            .count();

        values = evaluate(&positions);
        for p in 0..n {
            if values[p] < personal_best_values[p] {
                personal_best_values[p] = values[p];
                personal_best[p].clone_from(&positions[p]);
            }
        }
        for p in 0..n {
            if personal_best_values[p] < global_best_value {
                global_best_value = personal_best_values[p];
                global_best.clone_from(&personal_best[p]);
            }
        }

        history.push(-global_best_value);
        let mean_value = values.iter().sum::<f64>() / n as f64;
        mean_history.push(-mean_value);
    }

    Ok(OptimizationRun {
        best_schedule: PriceSchedule::new(global_best, *bounds),
        best_profit: -global_best_value,
        history,
        mean_history,
        evaluations: n * (cfg.iterations + 1),
        bound_violations,
    })
}

/// How many lattice points `grid_search` will evaluate at most.
pub const GRID_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_schedule: PriceSchedule,
    pub best_profit: f64,
    pub evaluations: usize,
}

impl GridSearchResult {
    pub fn best_objective(&self) -> f64 {
        -self.best_profit
    }
}

/// Exhaustive search over the lattice with `steps_per_dim` points per
/// dimension, both endpoints included. Ties go to the lexicographically
/// smallest schedule. Refuses lattices past [`GRID_BUDGET`].
pub fn grid_search<F>(
    objective: F,
    bounds: &PriceBounds,
    dimensions: usize,
    steps_per_dim: usize,
) -> Result<GridSearchResult, OptimizerError>
where
    F: Fn(&PriceSchedule) -> f64,
{
    if !(bounds.min < bounds.max) {
        return Err(OptimizerError::InvalidBounds { min: bounds.min, max: bounds.max });
    }
    if dimensions < 1 || steps_per_dim < 1 {
        return Err(OptimizerError::InvalidConfig(
            "dimensions and steps_per_dim must be >= 1".into(),
        ));
    }
    let points = (steps_per_dim as u128)
        .checked_pow(dimensions as u32)
        .ok_or(OptimizerError::BudgetExceeded { points: u128::MAX, limit: GRID_BUDGET })?;
    if points > GRID_BUDGET {
        return Err(OptimizerError::BudgetExceeded { points, limit: GRID_BUDGET });
    }

    let level = |idx: usize| {
        if steps_per_dim == 1 {
            bounds.min
        } else {
            bounds.min + bounds.range() * idx as f64 / (steps_per_dim - 1) as f64
        }
    };

    let mut indices = vec![0usize; dimensions];
    let mut best_value = f64::INFINITY;
    let mut best_point: Vec<f64> = Vec::new();
    let mut evaluations = 0usize;
    loop {
        let point: Vec<f64> = indices.iter().map(|&i| level(i)).collect();
        let value = objective(&PriceSchedule::new(point.clone(), *bounds));
        evaluations += 1;
        // Strict improvement keeps the first (lexicographically smallest)
        // schedule on ties; the odometer walks in lexicographic order.
        if value < best_value {
            best_value = value;
            best_point = point;
        }
        let mut dim = dimensions;
        loop {
            if dim == 0 {
                return Ok(GridSearchResult {
                    best_schedule: PriceSchedule::new(best_point, *bounds),
                    best_profit: -best_value,
                    evaluations,
                });
            }
            dim -= 1;
            indices[dim] += 1;
            if indices[dim] < steps_per_dim {
                break;
            }
            indices[dim] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(schedule: &PriceSchedule) -> f64 {
        schedule.prices.iter().map(|x| x * x).sum()
    }

    #[test]
    fn pso_minimizes_the_sphere_function() {
        let bounds = PriceBounds::new(-1.0, 1.0);
        let cfg = SwarmConfig { iterations: 200, seed: 42, ..SwarmConfig::default() };
        let run = pso_optimize(sphere, &bounds, 3, &cfg).unwrap();
        assert!(
            run.best_objective() <= 1e-6,
            "sphere optimum not reached: {}",
            run.best_objective()
        );
    }

    #[test]
    fn pso_drives_a_monotone_objective_to_the_upper_bound() {
        // Linear decreasing objective = inelastic demand: optimum sits at
        // max price in every slot.
        let objective = |s: &PriceSchedule| -> f64 { -s.prices.iter().sum::<f64>() };
        let bounds = PriceBounds::new(0.09, 0.22);
        let cfg = SwarmConfig { seed: 7, ..SwarmConfig::default() };
        let run = pso_optimize(objective, &bounds, 5, &cfg).unwrap();
        for &p in &run.best_schedule.prices {
            assert!((p - 0.22).abs() < 1e-6, "expected upper bound, got {p}");
        }
    }

    #[test]
    fn pso_history_is_non_decreasing_and_ends_at_best() {
        let bounds = PriceBounds::new(-1.0, 1.0);
        let cfg = SwarmConfig { iterations: 50, seed: 3, ..SwarmConfig::default() };
        let run = pso_optimize(sphere, &bounds, 4, &cfg).unwrap();
        assert_eq!(run.history.len(), 50);
        for pair in run.history.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        assert_eq!(*run.history.last().unwrap(), run.best_profit);
    }

    #[test]
    fn pso_is_bit_deterministic_per_seed() {
        let bounds = PriceBounds::new(-2.0, 2.0);
        let cfg = SwarmConfig { iterations: 40, seed: 99, ..SwarmConfig::default() };
        let a = pso_optimize(sphere, &bounds, 3, &cfg).unwrap();
        let b = pso_optimize(sphere, &bounds, 3, &cfg).unwrap();
        assert_eq!(a.best_schedule.prices, b.best_schedule.prices);
        assert_eq!(a.history, b.history);
        assert_eq!(a.mean_history, b.mean_history);
        let other = pso_optimize(
            sphere,
            &bounds,
            3,
            &SwarmConfig { seed: 100, ..cfg },
        )
        .unwrap();
        assert_ne!(a.best_schedule.prices, other.best_schedule.prices);
    }

    #[test]
    fn pso_never_leaves_the_box() {
        let bounds = PriceBounds::new(0.09, 0.22);
        let cfg = SwarmConfig { seed: 5, ..SwarmConfig::default() };
        let run = pso_optimize(sphere, &bounds, 5, &cfg).unwrap();
        assert_eq!(run.bound_violations, 0);
        for &p in &run.best_schedule.prices {
            assert!((0.09..=0.22).contains(&p));
        }
    }

    #[test]
    fn pso_rejects_inverted_bounds() {
        let err = pso_optimize(sphere, &PriceBounds::new(0.3, 0.1), 2, &SwarmConfig::default())
            .unwrap_err();
        assert!(matches!(err, OptimizerError::InvalidBounds { .. }));
    }

    #[test]
    fn minimal_swarm_runs_and_reports_one_history_entry() {
        let bounds = PriceBounds::new(0.09, 0.22);
        let cfg = SwarmConfig { swarm_size: 1, iterations: 1, seed: 1, ..SwarmConfig::default() };
        let run = pso_optimize(sphere, &bounds, 2, &cfg).unwrap();
        assert_eq!(run.history.len(), 1);
        assert_eq!(run.evaluations, 2);
    }

    #[test]
    fn grid_search_picks_the_top_price_for_monotone_demand() {
        let objective = |s: &PriceSchedule| -> f64 { -s.prices.iter().sum::<f64>() };
        let result = grid_search(objective, &PriceBounds::new(0.09, 0.22), 1, 3).unwrap();
        assert_eq!(result.best_schedule.prices, vec![0.22]);
        assert_eq!(result.evaluations, 3);
    }

    #[test]
    fn grid_search_breaks_ties_lexicographically() {
        let constant = |_: &PriceSchedule| -> f64 { 1.0 };
        let result = grid_search(constant, &PriceBounds::new(0.09, 0.22), 2, 3).unwrap();
        assert_eq!(result.best_schedule.prices, vec![0.09, 0.09]);
    }

    #[test]
    fn grid_search_enforces_the_lattice_budget() {
        let err = grid_search(sphere, &PriceBounds::new(0.0, 1.0), 9, 11).unwrap_err();
        assert!(matches!(err, OptimizerError::BudgetExceeded { .. }));
    }

    #[test]
    fn grid_search_lattice_includes_both_endpoints() {
        let seen = std::cell::RefCell::new(Vec::new());
        let objective = |s: &PriceSchedule| {
            seen.borrow_mut().push(s.prices[0]);
            s.prices[0]
        };
        grid_search(objective, &PriceBounds::new(0.0, 1.0), 1, 5).unwrap();
        let seen = seen.into_inner();
        assert_eq!(seen.len(), 5);
        assert_eq!(seen[0], 0.0);
        assert_eq!(*seen.last().unwrap(), 1.0);
    }
}
