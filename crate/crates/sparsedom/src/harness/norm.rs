//! Empirical weighted operator norms.
//!
//! Lower bounds by construction: the maximum of `||Tf||_{L^p(w)} /
//! ||f||_{L^p(w)}` over a battery of structured and random test functions.
//! Exponent-fit acceptance criteria are therefore stated as upper bounds
//! on slopes.

use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dyadic::DyadicSystem;
use crate::space::{GridFunction, Space};
use crate::weights::{weighted_lp_norm, Weight};

/// Battery of test functions: point masses, dyadic cube indicators (when a
/// system is supplied), and seeded random fillers up to `trials` total.
pub fn test_battery(
    space: &Arc<Space>,
    system: Option<&DyadicSystem>,
    trials: usize,
    seed: u64,
) -> Vec<GridFunction> {
    assert!(trials >= 16, "weighted_operator_norm needs trials >= 16");
    let n = space.len();
    let mut batch = Vec::with_capacity(trials);
    for k in 0..4 {
        let cell = (k * n / 4 + n / 8).min(n - 1) as u32;
        batch.push(GridFunction::indicator(space.clone(), &[cell]));
    }
    if let Some(sys) = system {
        let mid = sys.n_levels() / 2;
        for &id in sys.levels[mid].iter().take(4) {
            batch.push(GridFunction::indicator(space.clone(), &sys.cube(id).members));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while batch.len() < trials {
        batch.push(GridFunction::from_values(
            space.clone(),
            1,
            1.0,
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ));
    }
    batch
}

/// Weight-adapted extremizer candidates: `w^(-1)` cut to cubes around the
/// weight's minimum (the classical A_p test functions for power weights).
fn adapted_battery(space: &Arc<Space>, system: Option<&DyadicSystem>, w: &Weight) -> Vec<GridFunction> {
    let mut batch = Vec::new();
    let inv = GridFunction::from_values(
        space.clone(),
        1,
        1.0,
        w.values.iter().map(|&v| 1.0 / v).collect(),
    );
    batch.push(inv.clone());
    if let Some(sys) = system {
        // cubes containing the cell where w is smallest, at every level
        let hot = w
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        for lv in 0..sys.n_levels() {
            let q = sys.cube_at_level(lv, hot);
            batch.push(inv.restricted_to(&sys.cube(q).members));
        }
    }
    batch
}

/// `max_f ||A f||_{L^p(w)} / ||f||_{L^p(w)}` over the battery; monotone
/// nondecreasing in `trials`.
pub fn weighted_operator_norm(
    apply: impl Fn(&GridFunction) -> GridFunction,
    space: &Arc<Space>,
    system: Option<&DyadicSystem>,
    p: f64,
    w: &Weight,
    trials: usize,
    seed: u64,
) -> f64 {
    let mut batch = test_battery(space, system, trials, seed);
    batch.extend(adapted_battery(space, system, w));
    let mut worst = 0.0f64;
    for f in batch {
        let den = weighted_lp_norm(&f, p, w);
        if den > 0.0 {
            worst = worst.max(weighted_lp_norm(&apply(&f), p, w) / den);
        }
    }
    worst
}
