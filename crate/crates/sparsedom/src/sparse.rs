//! The sparse-family construction and the l^r sparse operators and forms.
//!
//! The construction is the stopping-time iteration: for each selected cube
//! `P`, the exceptional set
//!
//! ```text
//! Omega_P = { s in P : ||T_P f(s)||_Y       > lambda C_T <||f||_X>_{p0, alpha P} }
//!     union { s in P : M#_{T,P} f(s)        > lambda C_T <||f||_X>_{p0, alpha P} }
//! ```
//!
//! is computed exactly, the stopping cubes are the maximal dyadic strict
//! subcubes with `<1_Omega>_{1,P'} > 1/c2` (so that `Omega_{P,c2}` is their
//! union), the witness is `E_P = P \ union(S_P)`, and the iteration recurses
//! on the stopping cubes. With `lambda = 4 c1 c2` the selected family is
//! 1/2-sparse. The fractional variant inserts the factor
//! `mu(alpha P)^(1/p0 - 1/q0)` into the thresholds.
//!
//! Global domination covers the support of `f` by the covering lemma and
//! runs the local construction per piece; `upgraded` mode replaces each
//! dilate `alpha P` by a containing cube from the adjacent shifted systems.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;

use crate::dyadic::{covering_partition, AdjacentSystems, CubeRef, DyadicSystem};
use crate::error::{Result, SparseDomError};
use crate::maximal::{localized_sharp_truncation, localized_q_truncation};
use crate::operators::Operator;
use crate::space::GridFunction;
use crate::weights::{lp_norm, weak_lp_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragesMode {
    /// Averages over the dilates `alpha P`.
    Dilated,
    /// Averages over containing cubes from the adjacent systems; the
    /// sparsity parameter drops by the containment measure ratio.
    Upgraded,
}

/// How to obtain the operator constant `C_T`.
#[derive(Debug, Clone, Copy)]
pub enum CtMode {
    Supplied(f64),
    /// Estimated as `max_f ||Tf||_{p1,weak}/||f||_{p1} + max_f
    /// ||M#_{T,root} f||_{p2,weak}/||f||_{p2}` over a random battery.
    Estimate { battery: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ConstructionParams {
    /// Averaging exponent `p0 = max(p1, p2)`.
    pub p0: f64,
    /// l^r index of the target sparse operator.
    pub r: f64,
    /// Localization dilation.
    pub alpha: f64,
    pub c_t: CtMode,
    /// Level-set multiplier; `None` uses the default `4 c1 c2`.
    pub lambda: Option<f64>,
    /// Alternative lambda as a multiple of the computed c1 (must exceed 2).
    pub lambda_factor_c1: Option<f64>,
    /// Fractional off-diagonal exponent (Riesz potentials).
    pub q0: Option<f64>,
    /// Use the q-maximal truncation in the exceptional sets (sparse forms).
    pub q_truncation: Option<f64>,
    /// Double lambda per cube when the measure bound fails (estimated C_T).
    pub adaptive: bool,
    pub mode: AveragesMode,
}

impl ConstructionParams {
    pub fn validate(&self) -> Result<()> {
        if self.p0 < 1.0 || self.r < 1.0 || self.alpha < 1.0 {
            return Err(SparseDomError::InvalidParam(format!(
                "need p0, r >= 1 and alpha >= 1; got p0={}, r={}, alpha={}",
                self.p0, self.r, self.alpha
            )));
        }
        if let Some(q0) = self.q0 {
            if q0 < self.p0 {
                return Err(SparseDomError::InvalidParam(format!(
                    "fractional variant needs q0 >= p0, got q0={q0} < p0={}",
                    self.p0
                )));
            }
        }
        Ok(())
    }
}

/// One cube of a sparse family, self-contained (member lists copied out of
/// the owning systems so families serialize on their own).
#[derive(Debug, Clone, Serialize)]
pub struct SparseEntry {
    pub cube: CubeRef,
    pub generation: i32,
    pub indicator: Vec<u32>,
    pub witness: Vec<u32>,
    pub avg_members: Vec<u32>,
    pub cube_measure: f64,
    pub avg_measure: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseFamily {
    pub entries: Vec<SparseEntry>,
    /// Verified sparsity parameter: min mu(E_Q)/mu(Q).
    pub eta: f64,
    pub mode: AveragesMode,
    pub degenerate_covering: bool,
    /// `max mu(P')/mu(P)` over upgraded cubes (upgraded mode only).
    pub upgrade_measure_ratio: Option<f64>,
}

/// Per-stopping-cube data for the two-sided bound of the local
/// Calderon--Zygmund decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct StopInfo {
    pub cube: usize,
    pub measure: f64,
    pub omega_overlap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub cube: usize,
    pub generation: i32,
    pub cube_measure: f64,
    pub omega_measure: f64,
    pub lambda: f64,
    pub adaptive_doublings: u32,
    pub stopping: Vec<StopInfo>,
    pub stopping_measure: f64,
    /// Single-cell cube with nonempty exceptional set: recursion floor.
    pub cell_floor: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstructionTrace {
    pub records: Vec<TraceRecord>,
    pub c1: f64,
    pub c2: f64,
    pub c_t: f64,
    pub lambda0: f64,
}

impl ConstructionTrace {
    /// `sum mu(S_P) <= mu(P)/2` in every record.
    pub fn stopping_mass_ok(&self) -> bool {
        self.records.iter().all(|r| r.stopping_measure <= 0.5 * r.cube_measure + 1e-12)
    }

    /// Two-sided stopping bounds: `mu(P')/c2 <= mu(P' cap Omega_P) <= mu(P')/2`.
    pub fn stopping_bounds_ok(&self) -> bool {
        self.records.iter().all(|r| {
            r.stopping.iter().all(|s| {
                s.omega_overlap >= s.measure / self.c2 - 1e-12
                    && s.omega_overlap <= 0.5 * s.measure + 1e-12
            })
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).unwrap());
            out.push('\n');
        }
        out
    }
}

/// Operator constant from measured weak-norm ratios over a seeded battery
/// of random test functions, following `C_T = ||T|| + sup_P ||M#_{T,P}||`
/// with the localized truncation evaluated at the root cube.
pub fn estimate_c_t(
    op: &dyn Operator,
    sys: &DyadicSystem,
    root: usize,
    dim: usize,
    r_exp: f64,
    p1: f64,
    p2: f64,
    battery: usize,
    seed: u64,
) -> f64 {
    use rand::prelude::*;
    let space = &sys.space;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst_t = 0.0f64;
    let mut worst_m = 0.0f64;
    for _ in 0..battery {
        let f = GridFunction::from_values(
            space.clone(),
            dim,
            r_exp,
            (0..space.len() * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let tf = op.apply(&f);
        let denom1 = lp_norm(&f, p1);
        if denom1 > 0.0 {
            worst_t = worst_t.max(weak_lp_norm(&tf, p1) / denom1);
        }
        let msharp = localized_sharp_truncation(op, sys, root, &f);
        let denom2 = lp_norm(&f, p2);
        if denom2 > 0.0 {
            worst_m = worst_m.max(weak_lp_norm(&msharp, p2) / denom2);
        }
    }
    worst_t + worst_m
}

/// Maximal dyadic strict subcubes of `P` with `<1_Omega>_{1,P'} > 1/c2`.
fn stopping_cubes(sys: &DyadicSystem, parent: usize, in_omega: &[bool], c2: f64) -> Vec<StopInfo> {
    let mut out = Vec::new();
    let mut stack: Vec<usize> = sys.cube(parent).children.clone();
    while let Some(q) = stack.pop() {
        let cube = sys.cube(q);
        let overlap: f64 = cube
            .members
            .iter()
            .filter(|&&p| in_omega[p as usize])
            .map(|&p| sys.space.mass(p as usize))
            .sum();
        if overlap * c2 > cube.measure {
            out.push(StopInfo { cube: q, measure: cube.measure, omega_overlap: overlap });
        } else {
            stack.extend(cube.children.iter().copied());
        }
    }
    out.sort_by_key(|s| s.cube);
    out
}

/// Local sparse construction on the subtree of `root`. Returns the
/// 1/2-sparse family (dilated averages) and the per-iteration trace.
pub fn construct_sparse_family(
    op: &dyn Operator,
    f: &GridFunction,
    sys: &DyadicSystem,
    root: usize,
    params: &ConstructionParams,
) -> Result<(SparseFamily, ConstructionTrace)> {
    params.validate()?;
    let space = &sys.space;
    let c1 = sys.dilation_measure_bound(params.alpha);
    let c2 = sys.c2;
    let c_t = match params.c_t {
        CtMode::Supplied(v) => v,
        CtMode::Estimate { battery, seed } => {
            estimate_c_t(op, sys, root, f.dim, f.r_exp, params.p0, params.p0, battery, seed)
        }
    };
    let lambda0 = params
        .lambda
        .or(params.lambda_factor_c1.map(|f| f * c1))
        .unwrap_or(4.0 * c1 * c2);
    if lambda0 <= 2.0 * c1 {
        return Err(SparseDomError::InvalidParam(format!(
            "lambda = {lambda0} must exceed 2 c1 = {}",
            2.0 * c1
        )));
    }

    let mut entries = Vec::new();
    let mut records = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(p_id) = queue.pop_front() {
        let cube = sys.cube(p_id);
        let tpf = op.localize(sys, p_id, f);
        let msharp = match params.q_truncation {
            Some(q) => localized_q_truncation(op, sys, p_id, f, q),
            None => localized_sharp_truncation(op, sys, p_id, f),
        };
        let dilated = sys.dilate(p_id, params.alpha);
        let avg_members = space.ball_members(&dilated).to_vec();
        let avg_measure = space.ball_measure(&dilated);
        let avg = f.p_average(&avg_members, params.p0);
        let frac = match params.q0 {
            Some(q0) => avg_measure.powf(1.0 / params.p0 - 1.0 / q0),
            None => 1.0,
        };
        let base_threshold = c_t * avg * frac;

        // Single-cell cubes are the recursion floor: no subcubes to stop
        // on, the cell itself becomes the witness whatever Omega is.
        let is_cell = cube.children.is_empty();
        let mut lambda = lambda0;
        let mut doublings = 0u32;
        let (omega_mask, omega_measure) = loop {
            let mut mask = vec![false; space.len()];
            let mut mu = 0.0;
            for &p in &cube.members {
                let i = p as usize;
                let thr = lambda * base_threshold;
                if tpf.x_norm(i) > thr || msharp.values[i] > thr {
                    mask[i] = true;
                    mu += space.mass(i);
                }
            }
            // Eq-(3.2)-style measure bound, tightened to mu(P)/(2 c2) so the
            // stopping mass stays below mu(P)/2 for any supplied lambda
            let bound = (2.0 * c1 / lambda).min(1.0 / (2.0 * c2)) * cube.measure;
            if is_cell || mu <= bound + 1e-15 {
                break (mask, mu);
            }
            if !params.adaptive {
                return Err(SparseDomError::MeasureBoundViolated { cube: p_id, mu_omega: mu, bound });
            }
            lambda *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(SparseDomError::InvalidParam(
                    "adaptive lambda doubling did not restore the measure bound".into(),
                ));
            }
        };

        let stopping = if is_cell { Vec::new() } else { stopping_cubes(sys, p_id, &omega_mask, c2) };
        let stopping_measure: f64 = stopping.iter().map(|s| s.measure).sum();
        let cell_floor = is_cell && omega_measure > 0.0;

        let mut in_stop = vec![false; space.len()];
        for s in &stopping {
            for &p in &sys.cube(s.cube).members {
                in_stop[p as usize] = true;
            }
        }
        let witness: Vec<u32> = cube.members.iter().copied().filter(|&p| !in_stop[p as usize]).collect();

        entries.push(SparseEntry {
            cube: CubeRef { system: 0, cube: p_id },
            generation: cube.k,
            indicator: cube.members.clone(),
            witness,
            avg_members,
            cube_measure: cube.measure,
            avg_measure,
        });
        for s in &stopping {
            queue.push_back(s.cube);
        }
        records.push(TraceRecord {
            cube: p_id,
            generation: cube.k,
            cube_measure: cube.measure,
            omega_measure,
            lambda,
            adaptive_doublings: doublings,
            stopping,
            stopping_measure,
            cell_floor,
        });
    }

    let mut family = SparseFamily {
        entries,
        eta: 0.0,
        mode: AveragesMode::Dilated,
        degenerate_covering: false,
        upgrade_measure_ratio: None,
    };
    let (ok, eta, _) = verify_sparsity_in(&family, space);
    debug_assert!(ok, "construction must produce disjoint witnesses");
    family.eta = eta;
    Ok((family, ConstructionTrace { records, c1, c2, c_t, lambda0 }))
}

/// Global sparse domination: cover the support of `f` by the covering
/// lemma on the base system, run the local construction per piece, and
/// optionally upgrade dilated averages to containing cubes from the
/// adjacent systems.
pub fn construct_global_sparse(
    op: &dyn Operator,
    f: &GridFunction,
    adjacent: &AdjacentSystems,
    params: &ConstructionParams,
) -> Result<(SparseFamily, ConstructionTrace)> {
    params.validate()?;
    let base = &adjacent.systems[0];
    let space = &base.space;
    let supp = f.support();
    if supp.is_empty() {
        return Ok((
            SparseFamily {
                entries: Vec::new(),
                eta: 1.0,
                mode: params.mode,
                degenerate_covering: false,
                upgrade_measure_ratio: None,
            },
            ConstructionTrace { records: Vec::new(), c1: 0.0, c2: base.c2, c_t: 0.0, lambda0: 0.0 },
        ));
    }
    let (pieces, degenerate) = if supp.len() < 2 {
        let root = base.root().ok_or_else(|| {
            SparseDomError::CoveringFailed("point-mass support needs a root cube".into())
        })?;
        (vec![root], true)
    } else {
        match covering_partition(base, &supp, params.alpha) {
            Ok(part) => (part.cubes, part.degenerate),
            Err(SparseDomError::InvalidParam(msg)) => return Err(SparseDomError::InvalidParam(msg)),
            Err(e) => return Err(e),
        }
    };

    // resolve an estimated C_T once: the weak norms are properties of the
    // operator and the system, not of the covering piece
    let mut piece_params = params.clone();
    if let CtMode::Estimate { battery, seed } = params.c_t {
        let anchor = base.root().unwrap_or(pieces[0]);
        let c_t = estimate_c_t(op, base, anchor, f.dim, f.r_exp, params.p0, params.p0, battery, seed);
        piece_params.c_t = CtMode::Supplied(c_t);
    }
    let mut entries = Vec::new();
    let mut records = Vec::new();
    let mut c1 = 0.0;
    let mut c_t = 0.0;
    let mut lambda0 = 0.0;
    for &piece in &pieces {
        let (fam, tr) = construct_sparse_family(op, f, base, piece, &piece_params)?;
        entries.extend(fam.entries);
        records.extend(tr.records);
        c1 = tr.c1;
        c_t = tr.c_t;
        lambda0 = tr.lambda0;
    }

    let mut upgrade_ratio = None;
    if params.mode == AveragesMode::Upgraded {
        let mut worst = 0.0f64;
        for entry in &mut entries {
            let ball = base.dilate(entry.cube.cube, params.alpha);
            let (sys_idx, cube_id) = adjacent.containing_cube(&ball)?;
            let target = adjacent.systems[sys_idx].cube(cube_id);
            worst = worst.max(target.measure / entry.cube_measure);
            entry.cube = CubeRef { system: sys_idx, cube: cube_id };
            entry.generation = target.k;
            entry.indicator = target.members.clone();
            entry.avg_members = target.members.clone();
            entry.avg_measure = target.measure;
            entry.cube_measure = target.measure;
        }
        upgrade_ratio = Some(worst);
    }

    let mut family = SparseFamily {
        entries,
        eta: 0.0,
        mode: params.mode,
        degenerate_covering: degenerate,
        upgrade_measure_ratio: upgrade_ratio,
    };
    let (ok, eta, pair) = verify_sparsity_in(&family, space);
    if !ok {
        return Err(SparseDomError::CoveringFailed(format!(
            "witness sets overlap across covering pieces: {pair:?}"
        )));
    }
    family.eta = eta;
    Ok((family, ConstructionTrace { records, c1, c2: base.c2, c_t, lambda0 }))
}

/// Sparse operator `(sum_Q <||f||_X>_{p0,Q}^r 1_Q)^(1/r)` with each entry's
/// declared averaging set.
pub fn sparse_operator(family: &SparseFamily, f: &GridFunction, p0: f64, r: f64) -> GridFunction {
    assert!(p0 >= 1.0 && r >= 1.0);
    let space = &f.space;
    let mut acc = vec![0.0f64; space.len()];
    for entry in &family.entries {
        let a = f.p_average(&entry.avg_members, p0);
        if a == 0.0 {
            continue;
        }
        let ar = a.powf(r);
        for &p in &entry.indicator {
            acc[p as usize] += ar;
        }
    }
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for (o, a) in out.values.iter_mut().zip(acc) {
        *o = a.powf(1.0 / r);
    }
    out
}

/// Fractional sparse operator: the per-cube factor
/// `mu(alpha P)^(r/p0 - r/q0)` rides along each average.
pub fn fractional_sparse_operator(
    family: &SparseFamily,
    f: &GridFunction,
    p0: f64,
    q0: f64,
    r: f64,
) -> GridFunction {
    assert!(q0 >= p0 && p0 >= 1.0 && r >= 1.0);
    let space = &f.space;
    let mut acc = vec![0.0f64; space.len()];
    for entry in &family.entries {
        let a = f.p_average(&entry.avg_members, p0);
        if a == 0.0 {
            continue;
        }
        let term = entry.avg_measure.powf(r / p0 - r / q0) * a.powf(r);
        for &p in &entry.indicator {
            acc[p as usize] += term;
        }
    }
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for (o, a) in out.values.iter_mut().zip(acc) {
        *o = a.powf(1.0 / r);
    }
    out
}

/// Sparse form
/// `(sum_P mu(P) <||f||_X>_{p0,alpha P}^r <|g|>_{1/(1/r - 1/q0), P}^r)^(1/r)`.
pub fn sparse_form(
    family: &SparseFamily,
    f: &GridFunction,
    g: &GridFunction,
    p0: f64,
    q0: f64,
    r: f64,
) -> f64 {
    assert!(r > 0.0 && r < q0, "form needs r in (0, q0)");
    assert!(p0 >= 1.0 && p0 < q0, "form needs p0 in [1, q0)");
    let s = 1.0 / (1.0 / r - 1.0 / q0);
    let mut acc = 0.0;
    for entry in &family.entries {
        let fa = f.p_average(&entry.avg_members, p0);
        let ga = g.p_average(&entry.indicator, s);
        acc += entry.cube_measure * fa.powf(r) * ga.powf(r);
    }
    acc.powf(1.0 / r)
}

/// Checks witness disjointness and returns `(ok, min mu(E_Q)/mu(Q),
/// first overlapping pair)`.
pub fn verify_sparsity_in(
    family: &SparseFamily,
    space: &crate::space::Space,
) -> (bool, f64, Option<(usize, usize)>) {
    let mut owner: Vec<Option<usize>> = vec![None; space.len()];
    let mut min_ratio = f64::INFINITY;
    for (idx, entry) in family.entries.iter().enumerate() {
        let mut w_mass = 0.0;
        for &p in &entry.witness {
            let i = p as usize;
            if let Some(prev) = owner[i] {
                return (false, 0.0, Some((prev, idx)));
            }
            owner[i] = Some(idx);
            w_mass += space.mass(i);
        }
        min_ratio = min_ratio.min(w_mass / entry.cube_measure);
    }
    if family.entries.is_empty() {
        return (true, 1.0, None);
    }
    (true, min_ratio, None)
}

/// Pointwise comparison of `||Tf||_Y` against a sparse majorant.
#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub p90_ratio: f64,
    /// Points with `Tf != 0` but sparse majorant `= 0`.
    pub uncovered: usize,
    pub points_compared: usize,
}

pub fn domination_report(tf: &GridFunction, sparse: &GridFunction) -> DominationReport {
    let n = tf.space.len();
    let mut ratios = Vec::new();
    let mut uncovered = 0;
    for i in 0..n {
        let num = tf.x_norm(i);
        let den = sparse.x_norm(i);
        if den > 0.0 {
            ratios.push(num / den);
        } else if num > 1e-12 {
            uncovered += 1;
        }
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| -> f64 {
        if ratios.is_empty() {
            0.0
        } else {
            ratios[((ratios.len() - 1) as f64 * q).round() as usize]
        }
    };
    DominationReport {
        max_ratio: ratios.last().copied().unwrap_or(0.0),
        median_ratio: pick(0.5),
        p90_ratio: pick(0.9),
        uncovered,
        points_compared: ratios.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{discrete_hilbert, IdentityOperator};
    use crate::space::Space;
    use rand::prelude::*;

    fn grid64() -> (Arc<Space>, Arc<DyadicSystem>) {
        let s = Space::make_grid_space(1, &[1.0], 64, 1.0).unwrap();
        let d = Arc::new(DyadicSystem::build_anisotropic_system(s.clone(), 0, 6).unwrap());
        (s, d)
    }

    fn params(p0: f64, r: f64, alpha: f64, c_t: CtMode) -> ConstructionParams {
        ConstructionParams {
            p0,
            r,
            alpha,
            c_t,
            lambda: None,
            lambda_factor_c1: None,
            q0: None,
            q_truncation: None,
            adaptive: true,
            mode: AveragesMode::Dilated,
        }
    }

    fn rand_f(s: &Arc<Space>, rng: &mut rand_chacha::ChaCha8Rng) -> GridFunction {
        GridFunction::from_values(
            s.clone(),
            1,
            1.0,
            (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn identity_on_constant_one_gives_root_family() {
        let (s, d) = grid64();
        let op = IdentityOperator::new(2.0);
        let f = GridFunction::constant(s.clone(), 1.0);
        let root = d.root().unwrap();
        let (fam, trace) =
            construct_sparse_family(&op, &f, &d, root, &params(1.0, 1.0, 2.0, CtMode::Supplied(1.0)))
                .unwrap();
        assert_eq!(fam.entries.len(), 1);
        assert_eq!(fam.entries[0].cube.cube, root);
        assert_eq!(fam.entries[0].witness.len(), s.len(), "E_Q = Q");
        assert!((fam.eta - 1.0).abs() < 1e-12);
        assert_eq!(trace.records[0].omega_measure, 0.0, "Omega empty at every step");
    }

    #[test]
    fn hilbert_construction_is_half_sparse_with_trace_invariants() {
        let (s, d) = grid64();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
        let root = d.root().unwrap();
        for _ in 0..5 {
            let f = rand_f(&s, &mut rng);
            let (fam, trace) = construct_sparse_family(
                &op,
                &f,
                &d,
                root,
                &params(1.0, 1.0, op.alpha(), CtMode::Estimate { battery: 8, seed: 5 }),
            )
            .unwrap();
            let (ok, eta, _) = verify_sparsity_in(&fam, &s);
            assert!(ok);
            assert!(eta >= 0.5 - 1e-12, "1/2-sparse, got eta = {eta}");
            assert!(trace.stopping_mass_ok(), "sum mu(S_P) <= mu(P)/2");
            assert!(trace.stopping_bounds_ok(), "two-sided stopping bounds");
        }
    }

    #[test]
    fn hilbert_pointwise_domination_finite() {
        let (s, d) = grid64();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(103);
        let root = d.root().unwrap();
        let pars = params(1.0, 1.0, op.alpha(), CtMode::Estimate { battery: 8, seed: 7 });
        for _ in 0..5 {
            let f = rand_f(&s, &mut rng);
            let (fam, _) = construct_sparse_family(&op, &f, &d, root, &pars).unwrap();
            let tqf = op.localize(&d, root, &f);
            let sp = sparse_operator(&fam, &f, 1.0, 1.0);
            let rep = domination_report(&tqf, &sp);
            assert_eq!(rep.uncovered, 0);
            assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
        }
    }

    #[test]
    fn global_construction_modes() {
        let (s, _d) = grid64();
        let adj = AdjacentSystems::build_shifted_systems(s.clone(), 0, 6).unwrap();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(107);
        let f = rand_f(&s, &mut rng);

        let mut pars = params(1.0, 1.0, op.alpha(), CtMode::Estimate { battery: 8, seed: 11 });
        let (fam, _) = construct_global_sparse(&op, &f, &adj, &pars).unwrap();
        assert!(fam.eta >= 0.5 - 1e-12);

        pars.mode = AveragesMode::Upgraded;
        let (upg, _) = construct_global_sparse(&op, &f, &adj, &pars).unwrap();
        let c1p = upg.upgrade_measure_ratio.unwrap();
        assert!(upg.eta >= 0.5 / c1p - 1e-12, "eta >= 1/(2 c1'), got {} vs {}", upg.eta, 0.5 / c1p);
        // averages upgrade: <f>_{p0,aP} <= c1' <f>_{p0,P'} for every cube
        for (e_dil, e_upg) in fam.entries.iter().zip(&upg.entries) {
            let a_dil = f.p_average(&e_dil.avg_members, 1.0);
            let a_upg = f.p_average(&e_upg.avg_members, 1.0);
            assert!(
                a_dil <= c1p * a_upg + 1e-12,
                "dilated {a_dil} vs c1' * upgraded {}",
                c1p * a_upg
            );
        }
    }

    #[test]
    fn zero_function_gives_empty_domination() {
        let (s, _d) = grid64();
        let adj = AdjacentSystems::build_shifted_systems(s.clone(), 0, 6).unwrap();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let f = GridFunction::constant(s.clone(), 0.0);
        let pars = params(1.0, 1.0, op.alpha(), CtMode::Supplied(1.0));
        let (fam, _) = construct_global_sparse(&op, &f, &adj, &pars).unwrap();
        let sp = sparse_operator(&fam, &f, 1.0, 1.0);
        assert!(sp.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sparse_operator_arithmetic() {
        let (s, d) = grid64();
        let f = GridFunction::constant(s.clone(), 1.0);
        // hand-built family: root and one nested child, witnesses split
        let root = d.root().unwrap();
        let child = d.cube(root).children[0];
        let entry = |q: usize, witness: Vec<u32>| SparseEntry {
            cube: CubeRef { system: 0, cube: q },
            generation: d.cube(q).k,
            indicator: d.cube(q).members.clone(),
            witness,
            avg_members: d.cube(q).members.clone(),
            cube_measure: d.cube(q).measure,
            avg_measure: d.cube(q).measure,
        };
        let fam = SparseFamily {
            entries: vec![
                entry(root, d.cube(root).members[32..].to_vec()),
                entry(child, d.cube(child).members[..32].to_vec()),
            ],
            eta: 0.5,
            mode: AveragesMode::Dilated,
            degenerate_covering: false,
            upgrade_measure_ratio: None,
        };
        // constant 1: both averages are 1; r = 2 gives sqrt(2) on the child
        let sp = sparse_operator(&fam, &f, 1.0, 2.0);
        let inside = d.cube(child).members[0] as usize;
        let outside = d.cube(root).members[63] as usize;
        assert!((sp.values[inside] - 2f64.sqrt()).abs() < 1e-12);
        assert!((sp.values[outside] - 1.0).abs() < 1e-12);
        // single cube, r = 1
        let single = SparseFamily {
            entries: vec![entry(child, vec![])],
            eta: 0.0,
            mode: AveragesMode::Dilated,
            degenerate_covering: false,
            upgrade_measure_ratio: None,
        };
        let sp1 = sparse_operator(&single, &f, 1.0, 1.0);
        assert!((sp1.values[inside] - 1.0).abs() < 1e-12);
        assert_eq!(sp1.values[outside], 0.0);
        // empty family
        let empty = SparseFamily {
            entries: vec![],
            eta: 1.0,
            mode: AveragesMode::Dilated,
            degenerate_covering: false,
            upgrade_measure_ratio: None,
        };
        assert!(sparse_operator(&empty, &f, 1.0, 1.0).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fractional_reduces_to_plain_at_q0_equals_p0() {
        let (s, d) = grid64();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(109);
        let f = rand_f(&s, &mut rng);
        let (fam, _) = construct_sparse_family(
            &op,
            &f,
            &d,
            d.root().unwrap(),
            &params(1.0, 1.0, op.alpha(), CtMode::Supplied(2.0)),
        )
        .unwrap();
        let plain = sparse_operator(&fam, &f, 1.0, 1.0);
        let frac = fractional_sparse_operator(&fam, &f, 1.0, 1.0, 1.0);
        for i in 0..s.len() {
            assert!((plain.values[i] - frac.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn form_trivial_values() {
        let (s, d) = grid64();
        let root = d.root().unwrap();
        let child = d.cube(root).children[0];
        let fam = SparseFamily {
            entries: vec![SparseEntry {
                cube: CubeRef { system: 0, cube: child },
                generation: 1,
                indicator: d.cube(child).members.clone(),
                witness: vec![],
                avg_members: d.cube(child).members.clone(),
                cube_measure: d.cube(child).measure,
                avg_measure: d.cube(child).measure,
            }],
            eta: 1.0,
            mode: AveragesMode::Dilated,
            degenerate_covering: false,
            upgrade_measure_ratio: None,
        };
        let one = GridFunction::constant(s.clone(), 1.0);
        let zero = GridFunction::constant(s.clone(), 0.0);
        let r = 2.0;
        let v = sparse_form(&fam, &one, &one, 1.0, 4.0, r);
        let expect = d.cube(child).measure.powf(1.0 / r);
        assert!((v - expect).abs() < 1e-12, "f,g = 1 on one cube: mu(Q)^(1/r)");
        assert_eq!(sparse_form(&fam, &one, &zero, 1.0, 4.0, r), 0.0);
    }

    #[test]
    fn sparsity_checker_catches_overlap() {
        let (s, d) = grid64();
        let root = d.root().unwrap();
        let mk = |w: Vec<u32>| SparseEntry {
            cube: CubeRef { system: 0, cube: root },
            generation: 0,
            indicator: d.cube(root).members.clone(),
            witness: w,
            avg_members: d.cube(root).members.clone(),
            cube_measure: d.cube(root).measure,
            avg_measure: d.cube(root).measure,
        };
        let fam = SparseFamily {
            entries: vec![mk(vec![1, 2, 3]), mk(vec![3, 4])],
            eta: 0.0,
            mode: AveragesMode::Dilated,
            degenerate_covering: false,
            upgrade_measure_ratio: None,
        };
        let (ok, _, pair) = verify_sparsity_in(&fam, &s);
        assert!(!ok);
        assert_eq!(pair, Some((0, 1)));
    }

    #[test]
    fn domination_report_trivials() {
        let (s, _d) = grid64();
        let f = GridFunction::constant(s.clone(), 2.0);
        let rep = domination_report(&f, &f);
        assert!((rep.max_ratio - 1.0).abs() < 1e-12);
        assert_eq!(rep.uncovered, 0);
        let zero = GridFunction::constant(s.clone(), 0.0);
        let rep0 = domination_report(&zero, &f);
        assert_eq!(rep0.max_ratio, 0.0);
    }

    #[test]
    fn sparse_operator_properties() {
        let (s, d) = grid64();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(113);
        let f = rand_f(&s, &mut rng);
        let (fam, _) = construct_sparse_family(
            &op,
            &f,
            &d,
            d.root().unwrap(),
            &params(1.0, 1.0, op.alpha(), CtMode::Supplied(2.0)),
        )
        .unwrap();
        // r-monotonicity: nonincreasing in r
        let s1 = sparse_operator(&fam, &f, 1.0, 1.0);
        let s2 = sparse_operator(&fam, &f, 1.0, 2.0);
        let s3 = sparse_operator(&fam, &f, 1.0, 3.0);
        for i in 0..s.len() {
            assert!(s2.values[i] <= s1.values[i] + 1e-12);
            assert!(s3.values[i] <= s2.values[i] + 1e-12);
        }
        // 1-homogeneity
        let sc = sparse_operator(&fam, &f.scaled(-3.0), 1.0, 2.0);
        for i in 0..s.len() {
            assert!((sc.values[i] - 3.0 * s2.values[i]).abs() < 1e-10);
        }
        // monotone under adding cubes
        let mut bigger = fam.clone();
        let extra = d.levels[2][1];
        bigger.entries.push(SparseEntry {
            cube: CubeRef { system: 0, cube: extra },
            generation: 2,
            indicator: d.cube(extra).members.clone(),
            witness: vec![],
            avg_members: d.cube(extra).members.clone(),
            cube_measure: d.cube(extra).measure,
            avg_measure: d.cube(extra).measure,
        });
        let sb = sparse_operator(&bigger, &f, 1.0, 2.0);
        for i in 0..s.len() {
            assert!(sb.values[i] >= s2.values[i] - 1e-12);
        }
    }

    #[test]
    fn q_truncation_engine_compiles_with_forms() {
        // smoke: the q-truncation drives the form-side construction path
        let (s, d) = grid64();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(127);
        let f = rand_f(&s, &mut rng);
        let root = d.root().unwrap();
        let m = localized_q_truncation(&op, &d, root, &f, 4.0);
        assert!(m.values.iter().all(|v| v.is_finite()));
    }
}
