//! Maximal operators: dyadic and ball Hardy--Littlewood maximal functions,
//! the sharp grand maximal truncation operator and its localized variants.
//!
//! Everything is an exact maximum over the finite families involved;
//! `esssup` is the maximum over member cells.

use rayon::prelude::*;

use crate::dyadic::DyadicSystem;
use crate::error::{Result, SparseDomError};
use crate::operators::Operator;
use crate::space::{vec_norm, GridFunction, Space};

/// Brute-force guard for [`sharp_grand_truncation`].
const SHARP_GUARD_POINTS: usize = 1024;

/// Dyadic maximal function `M^D_{p0} f(s) = sup_{Q contains s} <||f||_X^{p0}>_{1,Q}^{1/p0}`.
pub fn dyadic_maximal(f: &GridFunction, sys: &DyadicSystem, p0: f64) -> GridFunction {
    assert!(p0 >= 1.0);
    let space = &sys.space;
    let n = space.len();
    let pw: Vec<f64> = (0..n).map(|i| f.x_norm(i).powf(p0) * space.mass(i)).collect();
    let mut cube_avg = vec![0.0; sys.cubes.len()];
    for cube in &sys.cubes {
        let num: f64 = cube.members.iter().map(|&p| pw[p as usize]).sum();
        cube_avg[cube.id] = (num / cube.measure).powf(1.0 / p0);
    }
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for lv in 0..sys.n_levels() {
        for s in 0..n {
            let q = sys.cube_at_level(lv, s);
            if cube_avg[q] > out.values[s] {
                out.values[s] = cube_avg[q];
            }
        }
    }
    out
}

/// Dyadic maximal function restricted to the subtree of one cube:
/// `M^{D(P)}` of the local Calderon--Zygmund decomposition. Zero outside `P`.
pub fn dyadic_maximal_restricted(
    f: &GridFunction,
    sys: &DyadicSystem,
    root: usize,
    p0: f64,
) -> GridFunction {
    assert!(p0 >= 1.0);
    let space = &sys.space;
    let n = space.len();
    let pw: Vec<f64> = (0..n).map(|i| f.x_norm(i).powf(p0) * space.mass(i)).collect();
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for qid in sys.subtree(root) {
        let cube = sys.cube(qid);
        let num: f64 = cube.members.iter().map(|&p| pw[p as usize]).sum();
        let avg = (num / cube.measure).powf(1.0 / p0);
        for &p in &cube.members {
            let s = p as usize;
            if avg > out.values[s] {
                out.values[s] = avg;
            }
        }
    }
    out
}

/// Ball Hardy--Littlewood maximal function
/// `M_{p0} f(s) = sup_{B contains s} <||f||_X^{p0}>_{1,B}^{1/p0}`, exact over
/// the complete ball enumeration.
///
/// Per center, ball member sets are prefixes of the distance-sorted order,
/// so a suffix maximum over the prefix averages yields, for every point,
/// the best ball from that center containing it in linear time.
pub fn hl_maximal(f: &GridFunction, space: &std::sync::Arc<Space>, p0: f64) -> GridFunction {
    assert!(p0 >= 1.0);
    let n = space.len();
    let pw: Vec<f64> = (0..n).map(|i| f.x_norm(i).powf(p0) * space.mass(i)).collect();
    let per_center: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let full = space.ball_at(c, f64::INFINITY);
            let order = space.ball_members(&full);
            // prefix averages at distinct-distance cuts; only those prefixes
            // are realizable ball member sets
            let mut cuts: Vec<(usize, f64)> = Vec::new();
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, &t) in order.iter().enumerate() {
                num += pw[t as usize];
                den += space.mass(t as usize);
                let is_cut = i + 1 == n
                    || space.dist(c, order[i + 1] as usize) > space.dist(c, t as usize);
                if is_cut {
                    cuts.push((i + 1, (num / den).powf(1.0 / p0)));
                }
            }
            let mut suffix = vec![0.0f64; cuts.len()];
            let mut run = 0.0f64;
            for (j, &(_, avg)) in cuts.iter().enumerate().rev() {
                run = run.max(avg);
                suffix[j] = run;
            }
            // the balls from this center containing order[i] are the cuts
            // with count > i; the suffix max gives the best of them
            let mut best = vec![0.0f64; n];
            let mut j = 0usize;
            for i in 0..n {
                while cuts[j].0 <= i {
                    j += 1;
                }
                best[order[i] as usize] = suffix[j];
            }
            best
        })
        .collect();
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for best in per_center {
        for s in 0..n {
            if best[s] > out.values[s] {
                out.values[s] = best[s];
            }
        }
    }
    out
}

/// Sharp grand maximal truncation operator
/// `M^#_{T,alpha} f(s) = sup_{B contains s} osc_B T(f 1_{S \ alpha B})`,
/// where `osc_B g = max_{s',s'' in B} ||g(s') - g(s'')||_Y` and the
/// supremum runs over all real radii.
///
/// From a fixed center, the pair (members of `B`, members of `alpha B`) is
/// constant between consecutive values of the attained distances and the
/// attained distances divided by `alpha`, so sweeping that refined cut set
/// makes the supremum exact. Guarded at 1024 points unless `force` is set.
pub fn sharp_grand_truncation(
    op: &dyn Operator,
    f: &GridFunction,
    alpha: f64,
    force: bool,
) -> Result<GridFunction> {
    let space = &f.space;
    let n = space.len();
    if n > SHARP_GUARD_POINTS && !force {
        return Err(SparseDomError::GuardExceeded { points: n, limit: SHARP_GUARD_POINTS });
    }
    let per_center: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let full = space.ball_at(c, f64::INFINITY);
            let order = space.ball_members(&full).to_vec();
            let mut cuts: Vec<f64> = Vec::with_capacity(2 * n);
            for &t in &order {
                let d = space.dist(c, t as usize);
                if d > 0.0 {
                    cuts.push(d);
                    cuts.push(d / alpha);
                }
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup();
            // evaluate each radius interval at its supremum; beyond the last
            // cut both member sets are everything and the mask is empty
            let mut entries = Vec::new();
            for &rho in &cuts {
                let outer = space.ball_count(c, rho);
                if outer < 2 {
                    continue; // oscillation over fewer than 2 points is 0
                }
                let inner_ball = space.ball_at(c, alpha * rho);
                if inner_ball.count as usize == n {
                    continue; // empty mask: the truncation vanishes
                }
                let masked = f.restricted_to_complement(space.ball_members(&inner_ball));
                let g = op.apply(&masked);
                let osc = oscillation(&g, &order[..outer]);
                entries.push((outer, osc));
            }
            entries
        })
        .collect();
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for (c, entries) in per_center.iter().enumerate() {
        let full = space.ball_at(c, f64::INFINITY);
        let order = space.ball_members(&full);
        for &(outer, osc) in entries {
            for &p in &order[..outer] {
                let s = p as usize;
                if osc > out.values[s] {
                    out.values[s] = osc;
                }
            }
        }
    }
    Ok(out)
}

/// `max_{s',s''} ||g(s') - g(s'')||_Y` over an index set.
fn oscillation(g: &GridFunction, members: &[u32]) -> f64 {
    if g.dim == 1 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in members {
            let v = g.values[p as usize];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if members.is_empty() {
            0.0
        } else {
            hi - lo
        }
    } else {
        let mut worst = 0.0f64;
        for (i, &p) in members.iter().enumerate() {
            for &q in &members[i + 1..] {
                let a = g.value(p as usize);
                let b = g.value(q as usize);
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                worst = worst.max(vec_norm(&d, g.r_exp));
            }
        }
        worst
    }
}

/// Localized sharp grand maximal truncation
/// `M^#_{T,Q} f(s) = sup_{Q' in D(Q), s in Q'} osc_{Q'} T_{Q \ Q'} f`,
/// zero outside `Q`.
pub fn localized_sharp_truncation(
    op: &dyn Operator,
    sys: &DyadicSystem,
    cube: usize,
    f: &GridFunction,
) -> GridFunction {
    let space = &sys.space;
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for inner in sys.subtree(cube) {
        let diff = op.localize_diff(sys, cube, inner, f);
        let members = &sys.cube(inner).members;
        let osc = oscillation(&diff, members);
        for &p in members {
            let s = p as usize;
            if osc > out.values[s] {
                out.values[s] = osc;
            }
        }
    }
    out
}

/// Localized sharp grand q-maximal truncation: the inner `esssup` replaced
/// by the double q-average
/// `(avint_{Q'} avint_{Q'} ||T_{Q\Q'}f(s') - T_{Q\Q'}f(s'')||_Y^q)^{1/q}`.
pub fn localized_q_truncation(
    op: &dyn Operator,
    sys: &DyadicSystem,
    cube: usize,
    f: &GridFunction,
    q: f64,
) -> GridFunction {
    assert!(q > 1.0 && q.is_finite());
    let space = &sys.space;
    let mut out = GridFunction::zeros(space.clone(), 1, 1.0);
    for inner in sys.subtree(cube) {
        let diff = op.localize_diff(sys, cube, inner, f);
        let members = &sys.cube(inner).members;
        let mu: f64 = members.iter().map(|&p| space.mass(p as usize)).sum();
        let mut acc = 0.0;
        for &p in members {
            for &r in members {
                let a = diff.value(p as usize);
                let b = diff.value(r as usize);
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                acc += vec_norm(&d, diff.r_exp).powf(q)
                    * space.mass(p as usize)
                    * space.mass(r as usize);
            }
        }
        let val = (acc / (mu * mu)).powf(1.0 / q);
        for &p in members {
            let s = p as usize;
            if val > out.values[s] {
                out.values[s] = val;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{discrete_hilbert, IdentityOperator};
    use crate::space::Space;
    use crate::weights::{lp_norm, weak_lp_norm};
    use rand::prelude::*;
    use std::sync::Arc;

    fn interval(depth: u32) -> (Arc<Space>, DyadicSystem) {
        let s = Space::make_interval_space(depth).unwrap();
        let d = DyadicSystem::build_anisotropic_system(s.clone(), 0, depth as i32).unwrap();
        (s, d)
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
    fn constant_function_fixed_point() {
        let (s, d) = interval(5);
        let f = GridFunction::constant(s.clone(), -3.0);
        let md = dyadic_maximal(&f, &d, 1.0);
        let mb = hl_maximal(&f, &s, 1.0);
        for i in 0..s.len() {
            assert!((md.values[i] - 3.0).abs() < 1e-12);
            assert!((mb.values[i] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn indicator_chain_value_matches_brute_force() {
        let (s, d) = interval(5);
        let q = d.levels[3][5]; // some dyadic interval
        let f = GridFunction::indicator(s.clone(), &d.cube(q).members);
        let md = dyadic_maximal(&f, &d, 1.0);
        for i in 0..s.len() {
            // brute force: max over all cubes containing i of mu(Q cap A)/mu(R)
            let mut expect = 0.0f64;
            for cube in &d.cubes {
                if cube.members.contains(&(i as u32)) {
                    let inter: f64 = cube
                        .members
                        .iter()
                        .filter(|p| d.cube(q).members.contains(p))
                        .map(|&p| s.mass(p as usize))
                        .sum();
                    expect = expect.max(inter / cube.measure);
                }
            }
            assert!((md.values[i] - expect).abs() < 1e-12, "point {i}");
        }
        // for s outside Q the best cube is the smallest common dyadic ancestor
        let outside = (0..s.len() as u32).find(|p| !d.cube(q).members.contains(p)).unwrap();
        let mut anc = d.chain(outside as usize);
        anc.retain(|&c| d.cube(q).members.iter().all(|p| d.cube(c).members.contains(p)));
        let smallest = anc.last().copied().unwrap();
        let expect = d.cube(q).measure / d.cube(smallest).measure;
        assert!((md.values[outside as usize] - expect).abs() < 1e-12);
    }

    #[test]
    fn doob_weak_1_1() {
        let (s, d) = interval(6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let f = rand_f(&s, &mut rng);
            let md = dyadic_maximal(&f, &d, 1.0);
            assert!(weak_lp_norm(&md, 1.0) <= lp_norm(&f, 1.0) + 1e-12);
        }
    }

    #[test]
    fn hl_dominates_dilate_averages_and_adjacent_bound() {
        let (s, d) = interval(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        let f = rand_f(&s, &mut rng);
        let mb = hl_maximal(&f, &s, 1.0);
        // M f(s) >= average over any dilate ball containing s
        for cube in &d.cubes {
            let ball = d.dilate(cube.id, 1.5);
            let avg = f.p_average(s.ball_members(&ball), 1.0);
            for &p in s.ball_members(&ball) {
                assert!(mb.values[p as usize] >= avg - 1e-12);
            }
        }
        // M f <= c * sum_j M^{D_j} f with the containment measure ratio
        let adj = crate::dyadic::AdjacentSystems::build_shifted_systems(s.clone(), 0, 5).unwrap();
        let sums: Vec<f64> = {
            let mut acc = vec![0.0; s.len()];
            for sys in &adj.systems {
                let m = dyadic_maximal(&f, sys, 1.0);
                for i in 0..s.len() {
                    acc[i] += m.values[i];
                }
            }
            acc
        };
        for i in 0..s.len() {
            assert!(
                mb.values[i] <= adj.containment_measure_ratio * sums[i] + 1e-9,
                "point {i}: {} vs {}",
                mb.values[i],
                adj.containment_measure_ratio * sums[i]
            );
        }
    }

    #[test]
    fn hl_matches_naive_reference() {
        let s = Space::make_grid_space(2, &[1.0, 2.0], 4, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        let f = rand_f(&s, &mut rng);
        let fast = hl_maximal(&f, &s, 2.0);
        // naive reference over the ball enumeration
        let mut slow = vec![0.0f64; s.len()];
        for b in s.enumerate_balls() {
            let avg = f.p_average(s.ball_members(&b), 2.0);
            for &p in s.ball_members(&b) {
                slow[p as usize] = slow[p as usize].max(avg);
            }
        }
        for i in 0..s.len() {
            assert!((fast.values[i] - slow[i]).abs() < 1e-12, "point {i}");
        }
    }

    #[test]
    fn p0_monotonicity_and_sublinearity() {
        let (s, _d) = interval(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(53);
        for _ in 0..5 {
            let f = rand_f(&s, &mut rng);
            let g = rand_f(&s, &mut rng);
            let m1 = hl_maximal(&f, &s, 1.0);
            let m2 = hl_maximal(&f, &s, 2.0);
            for i in 0..s.len() {
                assert!(m1.values[i] <= m2.values[i] + 1e-12, "power-mean monotonicity");
            }
            let sum = f.add(&g);
            let msum = hl_maximal(&sum, &s, 1.0);
            let mg = hl_maximal(&g, &s, 1.0);
            for i in 0..s.len() {
                assert!(msum.values[i] <= m1.values[i] + mg.values[i] + 1e-12);
            }
        }
    }

    #[test]
    fn identity_sharp_truncation_vanishes() {
        let s = Space::make_interval_space(5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(59);
        let f = rand_f(&s, &mut rng);
        let op = IdentityOperator::new(2.0);
        let m = sharp_grand_truncation(&op, &f, 2.0, false).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sharp_truncation_is_homogeneous() {
        let s = Space::make_grid_space(1, &[1.0], 32, 1.0).unwrap();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        let f = rand_f(&s, &mut rng);
        let m1 = sharp_grand_truncation(&op, &f, op.alpha(), false).unwrap();
        let m2 = sharp_grand_truncation(&op, &f.scaled(-2.5), op.alpha(), false).unwrap();
        for i in 0..s.len() {
            assert!((m2.values[i] - 2.5 * m1.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn sharp_truncation_guard() {
        let s = Space::make_grid_space(1, &[1.0], 2048, 1.0).unwrap();
        let f = GridFunction::constant(s.clone(), 1.0);
        let op = IdentityOperator::new(2.0);
        assert!(matches!(
            sharp_grand_truncation(&op, &f, 2.0, false),
            Err(SparseDomError::GuardExceeded { .. })
        ));
    }

    #[test]
    fn localized_below_global_for_canonical_family() {
        // M^#_{T,Q} f <= M^#_{T,alpha}(f 1_{alpha Q}) on Q
        let s = Space::make_grid_space(1, &[1.0], 32, 1.0).unwrap();
        let d = DyadicSystem::build_anisotropic_system(s.clone(), 0, 5).unwrap();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(67);
        let f = rand_f(&s, &mut rng);
        let q = d.levels[1][0];
        let local = localized_sharp_truncation(&op, &d, q, &f);
        let masked = f.restricted_to(s.ball_members(&d.dilate(q, op.alpha())));
        let global = sharp_grand_truncation(&op, &masked, op.alpha(), false).unwrap();
        for &p in &d.cube(q).members {
            let i = p as usize;
            assert!(
                local.values[i] <= global.values[i] + 1e-10,
                "point {i}: {} vs {}",
                local.values[i],
                global.values[i]
            );
        }
    }

    #[test]
    fn q_truncation_monotone_and_approaches_esssup() {
        let s = Space::make_grid_space(1, &[1.0], 32, 1.0).unwrap();
        let d = DyadicSystem::build_anisotropic_system(s.clone(), 0, 5).unwrap();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let f = rand_f(&s, &mut rng);
        let root = d.root().unwrap();
        let m2 = localized_q_truncation(&op, &d, root, &f, 2.0);
        let m8 = localized_q_truncation(&op, &d, root, &f, 8.0);
        let m64 = localized_q_truncation(&op, &d, root, &f, 64.0);
        let msharp = localized_sharp_truncation(&op, &d, root, &f);
        for i in 0..s.len() {
            assert!(m2.values[i] <= m8.values[i] + 1e-12, "monotone in q");
            assert!(m8.values[i] <= m64.values[i] + 1e-12);
            assert!(m64.values[i] <= msharp.values[i] + 1e-12, "q-average below esssup");
            if msharp.values[i] > 1e-9 {
                assert!(
                    m64.values[i] >= 0.95 * msharp.values[i],
                    "q=64 within 5% of the esssup variant at {i}: {} vs {}",
                    m64.values[i],
                    msharp.values[i]
                );
            }
        }
    }

    #[test]
    fn constant_diff_has_zero_oscillation() {
        let s = Space::make_interval_space(4).unwrap();
        let g = GridFunction::constant(s.clone(), 5.0);
        let members: Vec<u32> = (0..8).collect();
        assert_eq!(oscillation(&g, &members), 0.0);
    }
}
