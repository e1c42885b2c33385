//! Test operators and the localization-family abstraction.
//!
//! An [`Operator`] is a map on grid functions together with an
//! alpha-localization family `{T_Q}`: per-cube operators that agree with
//! `T` on inputs supported in the dilate `alpha Q` and are dominated by it
//! there. The canonical family is `T_Q f = T(f 1_{alpha Q})` restricted to
//! `Q`; the Rademacher maximal operator supplies its own family, including
//! a non-pointwise difference operator `T_{Q \ Q'}`.

pub mod hilbert;
pub mod kernel;
pub mod multiplier;
pub mod rademacher;

use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicSystem;
use crate::space::GridFunction;

pub use hilbert::{discrete_hilbert, dini_norm_closed_form, dini_norm_quadrature, DiniKernel};
pub use kernel::{riesz_potential, KernelOperator};
pub use multiplier::{anisotropic_multiplier, hilbert_symbol, riesz_symbol, MultiplierOperator, MultiplierSymbol};
pub use rademacher::{lattice_maximal, rademacher_maximal, section8_example, RademacherMode, RademacherOperator, RademacherParams};

/// Serializable operator metadata, echoed into every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub name: String,
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl OperatorDescriptor {
    pub fn new(name: &str) -> Self {
        OperatorDescriptor { name: name.to_string(), params: serde_json::Map::new() }
    }

    pub fn with(mut self, key: &str, value: serde_json::Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

/// A vector-valued operator with an alpha-localization family.
pub trait Operator: Send + Sync {
    fn apply(&self, f: &GridFunction) -> GridFunction;

    /// Dilation parameter of the localization family.
    fn alpha(&self) -> f64;

    fn descriptor(&self) -> OperatorDescriptor;

    /// `T_Q f`, supported on the members of `Q`.
    ///
    /// Default: the canonical localization `T(f 1_{alpha Q})` restricted
    /// to `Q`.
    fn localize(&self, sys: &DyadicSystem, cube: usize, f: &GridFunction) -> GridFunction {
        let ball = sys.dilate(cube, self.alpha());
        let masked = f.restricted_to(sys.space.ball_members(&ball));
        self.apply(&masked).restricted_to(&sys.cube(cube).members)
    }

    /// `T_{Q \ Q'} f = T_Q f - T_{Q'} f` on `Q'`, zero elsewhere.
    fn localize_diff(
        &self,
        sys: &DyadicSystem,
        outer: usize,
        inner: usize,
        f: &GridFunction,
    ) -> GridFunction {
        let a = self.localize(sys, outer, f);
        let b = self.localize(sys, inner, f);
        a.sub(&b).restricted_to(&sys.cube(inner).members)
    }
}

/// The identity map with a trivial localization family; useful as a sanity
/// fixture for the sparse machinery.
#[derive(Debug, Clone)]
pub struct IdentityOperator {
    pub alpha: f64,
}

impl IdentityOperator {
    pub fn new(alpha: f64) -> Self {
        IdentityOperator { alpha }
    }
}

impl Operator for IdentityOperator {
    fn apply(&self, f: &GridFunction) -> GridFunction {
        f.clone()
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor::new("identity").with("alpha", self.alpha.into())
    }
}

/// Empirical r-sublinearity constant over random disjoint decompositions:
/// the smallest `C_r` with `||T(sum f_k)(s)|| <= C_r (sum ||T f_k(s)||^r)^(1/r)`
/// observed, together with the worst witness.
#[derive(Debug, Clone, Serialize)]
pub struct SublinearityReport {
    pub c_r: f64,
    pub worst_point: usize,
    pub worst_trial: usize,
    pub trials: usize,
}

pub fn r_sublinearity_check(
    op: &dyn Operator,
    f_batch: &[GridFunction],
    r: f64,
    pieces: usize,
    seed: u64,
) -> SublinearityReport {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        SublinearityReport { c_r: 0.0, worst_point: 0, worst_trial: 0, trials: f_batch.len() };
    for (trial, f) in f_batch.iter().enumerate() {
        let n = f.space.len();
        let assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..pieces)).collect();
        let whole = op.apply(f);
        let mut part_norms = vec![0.0f64; n];
        for k in 0..pieces {
            let members: Vec<u32> =
                (0..n).filter(|&i| assignment[i] == k).map(|i| i as u32).collect();
            let tfk = op.apply(&f.restricted_to(&members));
            for i in 0..n {
                part_norms[i] += tfk.x_norm(i).powf(r);
            }
        }
        for i in 0..n {
            let denom = part_norms[i].powf(1.0 / r);
            let num = whole.x_norm(i);
            if denom > 1e-300 && num / denom > report.c_r {
                report.c_r = num / denom;
                report.worst_point = i;
                report.worst_trial = trial;
            }
        }
    }
    report
}

/// Localized variant over nested cube chains: the smallest empirical `C_r`
/// with
/// `||T_{Q_1} f(s)|| <= C_r (||T_{Q_n} f(s)||^r + sum_k ||T_{Q_k \ Q_{k+1}} f(s)||^r)^(1/r)`
/// on `Q_n`, over random sub-chains of random points.
pub fn localized_r_sublinearity_check(
    op: &dyn Operator,
    sys: &DyadicSystem,
    f_batch: &[GridFunction],
    r: f64,
    chains: usize,
    seed: u64,
) -> SublinearityReport {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = SublinearityReport { c_r: 0.0, worst_point: 0, worst_trial: 0, trials: chains };
    let n = sys.space.len();
    for trial in 0..chains {
        let f = &f_batch[trial % f_batch.len()];
        let point = rng.gen_range(0..n);
        let full_chain = sys.chain(point);
        if full_chain.len() < 2 {
            continue;
        }
        let len = rng.gen_range(2..=full_chain.len());
        let mut picks: Vec<usize> = (0..full_chain.len()).collect();
        picks.shuffle(&mut rng);
        let mut levels: Vec<usize> = picks[..len].to_vec();
        levels.sort_unstable();
        let cubes: Vec<usize> = levels.iter().map(|&lv| full_chain[lv]).collect();

        let outer = op.localize(sys, cubes[0], f);
        let innermost = op.localize(sys, *cubes.last().unwrap(), f);
        let mut acc: Vec<f64> = (0..n).map(|i| innermost.x_norm(i).powf(r)).collect();
        for w in cubes.windows(2) {
            let diff = op.localize_diff(sys, w[0], w[1], f);
            for i in 0..n {
                acc[i] += diff.x_norm(i).powf(r);
            }
        }
        for &p in &sys.cube(*cubes.last().unwrap()).members {
            let i = p as usize;
            let denom = acc[i].powf(1.0 / r);
            let num = outer.x_norm(i);
            if denom > 1e-300 && num / denom > report.c_r {
                report.c_r = num / denom;
                report.worst_point = i;
                report.worst_trial = trial;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Space;
    use rand::prelude::*;

    #[test]
    fn identity_is_one_sublinear_with_constant_one() {
        let s = Space::make_interval_space(5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let batch: Vec<GridFunction> = (0..5)
            .map(|_| {
                GridFunction::from_values(
                    s.clone(),
                    1,
                    1.0,
                    (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let op = IdentityOperator::new(1.0);
        // disjoint supports: exactly one term is nonzero at each point
        let rep = r_sublinearity_check(&op, &batch, 2.0, 4, 9);
        assert!((rep.c_r - 1.0).abs() < 1e-12, "C_r = {}", rep.c_r);
        let rep1 = r_sublinearity_check(&op, &batch, 1.0, 3, 9);
        assert!((rep1.c_r - 1.0).abs() < 1e-12);
    }
}
