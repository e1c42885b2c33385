//! Discrete truncated Hilbert transform and Dini kernel certification.
//!
//! The kernel is `K(s,t) = 1/(s-t)` with the diagonal omitted. The grid
//! breaks exact scaling, so the smoothness modulus `omega(t) = C t` is
//! fitted: `C` is the smallest constant passing the exhaustive two-sided
//! smoothness scan with `c_K = 2`, and `||K||_Dini = C` in closed form.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SparseDomError};
use crate::space::Space;

use super::kernel::KernelOperator;
use super::OperatorDescriptor;

/// Dini-kernel certificate: power modulus `omega(t) = c * t^beta` together
/// with the constant `c_K` of the smoothness scan and the Dini norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiniKernel {
    pub c: f64,
    pub beta: f64,
    pub c_k: f64,
    pub dini_norm: f64,
}

impl DiniKernel {
    pub fn omega(&self, t: f64) -> f64 {
        self.c * t.powf(self.beta)
    }
}

/// `||K||_Dini = integral_0^1 omega(t) dt/t` for `omega = c t^beta`.
pub fn dini_norm_closed_form(c: f64, beta: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(SparseDomError::DivergentDini(beta));
    }
    Ok(c / beta)
}

/// Adaptive quadrature of `integral_0^1 omega(t) dt/t` on a log scale:
/// decade-by-decade composite Simpson until the last decade contributes
/// below 1e-12 of the running total (relative target 1e-8).
pub fn dini_norm_quadrature(omega: impl Fn(f64) -> f64) -> f64 {
    // on u = ln t the integrand is omega(e^u), smooth for power moduli
    let simpson_decade = |hi: f64| -> f64 {
        let lo = hi / 10.0;
        let (a, b) = (lo.ln(), hi.ln());
        let steps = 128usize;
        let h = (b - a) / steps as f64;
        let mut acc = omega(a.exp()) + omega(b.exp());
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * omega((a + i as f64 * h).exp());
        }
        acc * h / 3.0
    };
    let mut total = 0.0;
    let mut hi = 1.0;
    for _ in 0..200 {
        let piece = simpson_decade(hi);
        total += piece;
        if piece < 1e-12 * total.max(1e-300) {
            break;
        }
        hi /= 10.0;
    }
    total
}

/// Smallest `C` such that `omega(t) = C t` passes the two-sided kernel
/// smoothness scan on the grid:
/// `|K(s,t) - K(s,t')| <= omega(d(t,t')/d(s,t)) / mu(B(s, d(s,t)))`
/// whenever `0 < d(t,t') <= d(s,t)/c_K`, and symmetrically in the first slot.
fn fit_lipschitz_modulus(space: &Arc<Space>, kernel: &[f64], c_k: f64) -> f64 {
    let n = space.len();
    let k = |s: usize, t: usize| kernel[s * n + t];
    let mut c_fit = 0.0f64;
    for s in 0..n {
        for t in 0..n {
            if t == s {
                continue;
            }
            let d_st = space.dist(s, t);
            let mu_b = space.ball_measure_at(s, d_st);
            if mu_b <= 0.0 {
                continue;
            }
            // second-slot smoothness: perturb t -> t'
            for tp in 0..n {
                if tp == s || tp == t {
                    continue;
                }
                let d_tt = space.dist(t, tp);
                if d_tt > d_st / c_k {
                    continue;
                }
                let lhs = (k(s, t) - k(s, tp)).abs();
                c_fit = c_fit.max(lhs * mu_b * d_st / d_tt);
            }
            // first-slot smoothness: perturb s -> s'
            for sp in 0..n {
                if sp == s || sp == t {
                    continue;
                }
                let d_ss = space.dist(s, sp);
                if d_ss > d_st / c_k {
                    continue;
                }
                let lhs = (k(s, t) - k(sp, t)).abs();
                c_fit = c_fit.max(lhs * mu_b * d_st / d_ss);
            }
        }
    }
    c_fit
}

/// Verifies the two-sided smoothness bounds for a given modulus; returns
/// the worst ratio `lhs / rhs` (passing means <= 1 up to float fuzz).
pub fn verify_dini_smoothness(space: &Arc<Space>, kernel: &[f64], dini: &DiniKernel) -> f64 {
    let n = space.len();
    let k = |s: usize, t: usize| kernel[s * n + t];
    let mut worst = 0.0f64;
    for s in 0..n {
        for t in 0..n {
            if t == s {
                continue;
            }
            let d_st = space.dist(s, t);
            let mu_b = space.ball_measure_at(s, d_st);
            if mu_b <= 0.0 {
                continue;
            }
            for tp in 0..n {
                if tp == s || tp == t {
                    continue;
                }
                let d_tt = space.dist(t, tp);
                if d_tt > d_st / dini.c_k || d_tt == 0.0 {
                    continue;
                }
                let rhs = dini.omega(d_tt / d_st) / mu_b;
                if rhs > 0.0 {
                    worst = worst.max((k(s, t) - k(s, tp)).abs() / rhs);
                }
            }
            for sp in 0..n {
                if sp == s || sp == t {
                    continue;
                }
                let d_ss = space.dist(s, sp);
                if d_ss > d_st / dini.c_k || d_ss == 0.0 {
                    continue;
                }
                let rhs = dini.omega(d_ss / d_st) / mu_b;
                if rhs > 0.0 {
                    worst = worst.max((k(s, t) - k(sp, t)).abs() / rhs);
                }
            }
        }
    }
    worst
}

/// Discrete truncated Hilbert transform on a 1-D grid, with the fitted
/// Dini certificate in its descriptor and the localization dilation
/// `alpha = 3 c_d^2 max(1/delta, c_K)`.
pub fn discrete_hilbert(space: &Arc<Space>) -> Result<(KernelOperator, DiniKernel)> {
    if space.dim != 1 {
        return Err(SparseDomError::InvalidParam(format!(
            "discrete Hilbert transform needs a 1-D grid, got dim {}",
            space.dim
        )));
    }
    let n = space.len();
    let mut kernel = vec![0.0; n * n];
    for s in 0..n {
        for t in 0..n {
            if t != s {
                kernel[s * n + t] = 1.0 / (space.coord(s)[0] - space.coord(t)[0]);
            }
        }
    }
    let c_k = 2.0;
    let c_fit = fit_lipschitz_modulus(space, &kernel, c_k);
    let dini = DiniKernel { c: c_fit, beta: 1.0, c_k, dini_norm: dini_norm_closed_form(c_fit, 1.0)? };

    let delta = 2f64.powf(-space.anisotropy.iter().cloned().fold(f64::INFINITY, f64::min));
    let alpha = 3.0 * space.c_d * space.c_d * (1.0 / delta).max(c_k);
    let desc = OperatorDescriptor::new("discrete_hilbert")
        .with("alpha", alpha.into())
        .with("dini_c", dini.c.into())
        .with("dini_norm", dini.dini_norm.into())
        .with("c_k", c_k.into());
    Ok((KernelOperator::new(space.clone(), kernel, alpha, desc), dini))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Operator;
    use crate::space::GridFunction;
    use rand::prelude::*;

    #[test]
    fn single_cell_input_gives_kernel_column() {
        let s = Space::make_grid_space(1, &[1.0], 16, 1.0).unwrap();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let src = 4usize;
        let f = GridFunction::indicator(s.clone(), &[src as u32]);
        let tf = op.apply(&f);
        for t in 0..s.len() {
            if t == src {
                assert_eq!(tf.values[t], 0.0);
            } else {
                let expect = s.mass(src) / (s.coord(t)[0] - s.coord(src)[0]);
                // Tf(t) = K(t, src) mu(src) = mu(src)/(t - src)
                assert!((tf.values[t] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn antisymmetry_pairing() {
        let s = Space::make_grid_space(1, &[1.0], 32, 1.0).unwrap();
        let (op, _) = discrete_hilbert(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let f = GridFunction::from_scalar_fn(s.clone(), |_, _| rng.gen_range(-1.0..1.0));
            let g = GridFunction::from_scalar_fn(s.clone(), |_, _| rng.gen_range(-1.0..1.0));
            let tf = op.apply(&f);
            let tg = op.apply(&g);
            let pair_fg: f64 = (0..s.len()).map(|i| tf.values[i] * g.values[i] * s.mass(i)).sum();
            let pair_gf: f64 = (0..s.len()).map(|i| f.values[i] * tg.values[i] * s.mass(i)).sum();
            assert!((pair_fg + pair_gf).abs() < 1e-10, "K(s,t) = -K(t,s)");
        }
    }

    #[test]
    fn fitted_modulus_passes_smoothness_scan() {
        let s = Space::make_grid_space(1, &[1.0], 64, 1.0).unwrap();
        let (op, dini) = discrete_hilbert(&s).unwrap();
        assert!(dini.c.is_finite() && dini.c > 0.0);
        let worst = verify_dini_smoothness(&s, &op.kernel, &dini);
        assert!(worst <= 1.0 + 1e-9, "scan ratio {worst}");
    }

    #[test]
    fn dini_closed_forms() {
        assert!((dini_norm_closed_form(3.0, 1.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((dini_norm_closed_form(1.5, 0.5).unwrap() - 3.0).abs() < 1e-15);
        assert!(dini_norm_closed_form(1.0, 0.0).is_err());
        assert!(dini_norm_closed_form(1.0, -0.5).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let c = rng.gen_range(0.1..5.0);
            let beta = rng.gen_range(0.3..2.0);
            let exact = dini_norm_closed_form(c, beta).unwrap();
            let quad = dini_norm_quadrature(|t| c * t.powf(beta));
            assert!(
                (quad - exact).abs() <= 1e-8 * exact,
                "c={c} beta={beta}: quad {quad} vs exact {exact}"
            );
        }
    }
}
