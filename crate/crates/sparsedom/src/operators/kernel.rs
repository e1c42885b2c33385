//! Kernel-sum operators: `Tf(s) = sum_{t != s} K(s,t) f(t) mu(t)`, acting
//! componentwise on vector values. The diagonal is omitted (principal-value
//! discretization).

use std::sync::Arc;

use crate::error::{Result, SparseDomError};
use crate::space::{GridFunction, Space};

use super::{Operator, OperatorDescriptor};

/// A scalar kernel matrix applied componentwise to vector-valued grid
/// functions.
pub struct KernelOperator {
    pub space: Arc<Space>,
    /// Row-major `n x n` kernel values; diagonal entries are zero.
    pub kernel: Vec<f64>,
    alpha: f64,
    descriptor: OperatorDescriptor,
}

impl KernelOperator {
    pub fn new(space: Arc<Space>, kernel: Vec<f64>, alpha: f64, descriptor: OperatorDescriptor) -> Self {
        assert_eq!(kernel.len(), space.len() * space.len());
        KernelOperator { space, kernel, alpha, descriptor }
    }

    pub fn k(&self, s: usize, t: usize) -> f64 {
        self.kernel[s * self.space.len() + t]
    }
}

impl Operator for KernelOperator {
    fn apply(&self, f: &GridFunction) -> GridFunction {
        let n = self.space.len();
        let m = f.dim;
        let support = f.support();
        let mut out = GridFunction::zeros(self.space.clone(), m, f.r_exp);
        for s in 0..n {
            let row = &self.kernel[s * n..(s + 1) * n];
            let acc = &mut out.values[s * m..(s + 1) * m];
            for &t in &support {
                let t = t as usize;
                let w = row[t] * self.space.mass(t);
                if w == 0.0 {
                    continue;
                }
                let fv = &f.values[t * m..(t + 1) * m];
                for c in 0..m {
                    acc[c] += w * fv[c];
                }
            }
        }
        out
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn descriptor(&self) -> OperatorDescriptor {
        self.descriptor.clone()
    }
}

/// Discrete Riesz potential: kernel `d(s,t)^(alpha_frac - d_hom)` with the
/// homogeneous dimension `d_hom = |a|_1` governing ball growth on the
/// anisotropic grid.
pub fn riesz_potential(space: &Arc<Space>, alpha_frac: f64) -> Result<KernelOperator> {
    let d_hom: f64 = space.anisotropy.iter().sum();
    if !(alpha_frac > 0.0 && alpha_frac < d_hom) {
        return Err(SparseDomError::InvalidParam(format!(
            "riesz potential needs 0 < alpha_frac < |a|_1 = {d_hom}, got {alpha_frac}"
        )));
    }
    let n = space.len();
    let mut kernel = vec![0.0; n * n];
    for s in 0..n {
        for t in 0..n {
            if t != s {
                kernel[s * n + t] = space.dist(s, t).powf(alpha_frac - d_hom);
            }
        }
    }
    let delta = 2f64.powf(-space.anisotropy.iter().cloned().fold(f64::INFINITY, f64::min));
    let alpha = 3.0 * space.c_d * space.c_d / delta;
    let desc = OperatorDescriptor::new("riesz_potential")
        .with("alpha_frac", alpha_frac.into())
        .with("homogeneous_dim", d_hom.into())
        .with("alpha", alpha.into());
    Ok(KernelOperator::new(space.clone(), kernel, alpha, desc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Space;

    #[test]
    fn riesz_single_cell_is_kernel_column_times_mass() {
        let s = Space::make_interval_space(4).unwrap();
        let op = riesz_potential(&s, 0.5).unwrap();
        let f = GridFunction::indicator(s.clone(), &[5]);
        let tf = op.apply(&f);
        for t in 0..s.len() {
            let expect = op.k(t, 5) * s.mass(5);
            assert!((tf.values[t] - expect).abs() < 1e-14);
        }
        assert_eq!(tf.values[5], 0.0, "no self-interaction");
    }

    #[test]
    fn riesz_positivity() {
        let s = Space::make_interval_space(5).unwrap();
        let op = riesz_potential(&s, 0.5).unwrap();
        let f = GridFunction::from_scalar_fn(s.clone(), |i, _| (i % 3) as f64);
        let tf = op.apply(&f);
        assert!(tf.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn riesz_rejects_out_of_range_exponent() {
        let s = Space::make_interval_space(3).unwrap();
        assert!(riesz_potential(&s, 0.0).is_err());
        assert!(riesz_potential(&s, 1.0).is_err());
        assert!(riesz_potential(&s, 0.5).is_ok());
    }
}
