//! Finite discretized spaces of homogeneous type.
//!
//! A [`Space`] is a finite set of cell centers in R^d carrying a per-point
//! mass (the cell volume) and the anisotropic quasi-norm
//! `|s|_a = (sum_j |s_j|^(2/a_j))^(1/2)` as quasi-distance. Isotropic grids
//! and the unit interval are the all-ones anisotropy special case.
//!
//! Balls are enumerated exactly: from a fixed center, the member set of
//! `B(s, rho)` only changes when `rho` crosses a distance that is actually
//! attained, so sweeping the sorted distances from each center realizes
//! every member set any ball can have.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SparseDomError};

/// Exact c_d by triple scan up to this many points; analytic bound beyond.
const EXACT_CD_LIMIT: usize = 64;

/// Default exhaustive sample limit for [`doubling_constant`].
const DOUBLING_EXHAUSTIVE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    /// Uniform grid of cell centers on `[-extent, extent)^d`.
    Grid,
    /// `2^depth` uniform cells of `[0, 1)`.
    Interval,
}

/// A finite space of homogeneous type: points, masses, quasi-metric.
#[derive(Debug)]
pub struct Space {
    pub kind: SpaceKind,
    pub dim: usize,
    /// Anisotropy vector `a`; all-ones for isotropic spaces.
    pub anisotropy: Vec<f64>,
    pub cells_per_axis: Vec<usize>,
    /// Lower-left corner of the domain box, per axis.
    pub origin: Vec<f64>,
    /// Domain side length, per axis.
    pub axis_len: Vec<f64>,
    /// Flattened coordinates, `dim` entries per point.
    coords: Vec<f64>,
    /// Per-point mass (cell volume).
    measure: Vec<f64>,
    pub total_measure: f64,
    /// Quasi-metric constant: `d(s,t) <= c_d (d(s,u) + d(u,t))`.
    pub c_d: f64,
    ball_index: OnceLock<BallIndex>,
}

/// A metric ball, represented by its center, radius and member count.
///
/// The member set is `{t : d(center, t) < radius}`; it equals the first
/// `count` entries of the center's distance-sorted point order, so members
/// are recovered through [`Space::ball_members`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: u32,
    pub radius: f64,
    pub count: u32,
}

/// Per-center distance-sorted orders; backs ball enumeration and measures.
#[derive(Debug)]
struct BallIndex {
    /// For each center: point indices sorted by (distance, index).
    order: Vec<Vec<u32>>,
    /// Distances aligned with `order`.
    dist: Vec<Vec<f64>>,
    /// Prefix measures: `prefix[c][k]` = mass of the first `k` points.
    prefix: Vec<Vec<f64>>,
}

impl Space {
    /// Uniform grid of cell centers on `[-extent, extent)^d` with the
    /// anisotropic quasi-norm of differences as distance.
    pub fn make_grid_space(dim: usize, anisotropy: &[f64], n: usize, extent: f64) -> Result<Arc<Space>> {
        if anisotropy.len() != dim {
            return Err(SparseDomError::DimensionMismatch { expected: dim, got: anisotropy.len() });
        }
        for &a in anisotropy {
            if !(a > 0.0) {
                return Err(SparseDomError::NonPositiveAnisotropy(a));
            }
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(SparseDomError::NotPowerOfTwo(n));
        }
        if !(extent > 0.0) {
            return Err(SparseDomError::InvalidParam(format!("extent must be positive, got {extent}")));
        }
        let origin = vec![-extent; dim];
        let axis_len = vec![2.0 * extent; dim];
        let cells = vec![n; dim];
        Ok(Self::build(SpaceKind::Grid, dim, anisotropy.to_vec(), cells, origin, axis_len))
    }

    /// `2^depth` uniform cells of `[0,1)` with the Euclidean metric.
    pub fn make_interval_space(depth: u32) -> Result<Arc<Space>> {
        if depth < 1 {
            return Err(SparseDomError::InvalidParam("interval depth must be >= 1".into()));
        }
        let n = 1usize << depth;
        Ok(Self::build(SpaceKind::Interval, 1, vec![1.0], vec![n], vec![0.0], vec![1.0]))
    }

    fn build(
        kind: SpaceKind,
        dim: usize,
        anisotropy: Vec<f64>,
        cells_per_axis: Vec<usize>,
        origin: Vec<f64>,
        axis_len: Vec<f64>,
    ) -> Arc<Space> {
        let n_points: usize = cells_per_axis.iter().product();
        let cell_vol: f64 = (0..dim).map(|j| axis_len[j] / cells_per_axis[j] as f64).product();
        let mut coords = Vec::with_capacity(n_points * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..n_points {
            for j in 0..dim {
                let h = axis_len[j] / cells_per_axis[j] as f64;
                coords.push(origin[j] + (idx[j] as f64 + 0.5) * h);
            }
            // row-major increment, last axis fastest
            for j in (0..dim).rev() {
                idx[j] += 1;
                if idx[j] < cells_per_axis[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        let measure = vec![cell_vol; n_points];
        let total_measure = cell_vol * n_points as f64;
        let mut space = Space {
            kind,
            dim,
            anisotropy,
            cells_per_axis,
            origin,
            axis_len,
            coords,
            measure,
            total_measure,
            c_d: 1.0,
            ball_index: OnceLock::new(),
        };
        space.c_d = space.compute_cd();
        Arc::new(space)
    }

    /// Exact maximum of `d(s,t)/(d(s,u)+d(u,t))` on small spaces, else the
    /// analytic bound `max(1, 2^(1/min_j a_j - 1))`.
    fn compute_cd(&self) -> f64 {
        let n = self.len();
        if n <= EXACT_CD_LIMIT {
            let mut worst: f64 = 1.0;
            for s in 0..n {
                for t in 0..n {
                    if t == s {
                        continue;
                    }
                    let dst = self.dist(s, t);
                    for u in 0..n {
                        if u == s || u == t {
                            continue;
                        }
                        let denom = self.dist(s, u) + self.dist(u, t);
                        if denom > 0.0 {
                            worst = worst.max(dst / denom);
                        }
                    }
                }
            }
            worst
        } else {
            let a_min = self.anisotropy.iter().cloned().fold(f64::INFINITY, f64::min);
            (2f64.powf(1.0 / a_min - 1.0)).max(1.0)
        }
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.measure[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.measure
    }

    /// Anisotropic quasi-distance between stored points.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist_to_coord(i, self.coord(j))
    }

    /// Distance from point `i` to an arbitrary coordinate tuple.
    pub fn dist_to_coord(&self, i: usize, x: &[f64]) -> f64 {
        let p = self.coord(i);
        let mut acc = 0.0;
        for j in 0..self.dim {
            let d = (p[j] - x[j]).abs();
            let a = self.anisotropy[j];
            acc += if a == 1.0 { d * d } else { d.powf(2.0 / a) };
        }
        acc.sqrt()
    }

    /// Distance in the metric from a point to a half-cell offset along the
    /// closest axis; used to floor singular power weights.
    pub fn half_cell_distance(&self) -> f64 {
        (0..self.dim)
            .map(|j| {
                let h = self.axis_len[j] / self.cells_per_axis[j] as f64;
                (h / 2.0).powf(1.0 / self.anisotropy[j])
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn index(&self) -> &BallIndex {
        self.ball_index.get_or_init(|| {
            let n = self.len();
            let mut order = Vec::with_capacity(n);
            let mut dist = Vec::with_capacity(n);
            let mut prefix = Vec::with_capacity(n);
            for c in 0..n {
                let mut pairs: Vec<(f64, u32)> = (0..n).map(|t| (self.dist(c, t), t as u32)).collect();
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let mut pm = Vec::with_capacity(n + 1);
                pm.push(0.0);
                let mut acc = 0.0;
                for &(_, t) in &pairs {
                    acc += self.measure[t as usize];
                    pm.push(acc);
                }
                order.push(pairs.iter().map(|p| p.1).collect());
                dist.push(pairs.iter().map(|p| p.0).collect());
                prefix.push(pm);
            }
            BallIndex { order, dist, prefix }
        })
    }

    /// Member count of `B(center, radius)` = #{t : d(center,t) < radius}.
    pub fn ball_count(&self, center: usize, radius: f64) -> usize {
        let idx = self.index();
        idx.dist[center].partition_point(|&d| d < radius)
    }

    pub fn ball_at(&self, center: usize, radius: f64) -> Ball {
        Ball { center: center as u32, radius, count: self.ball_count(center, radius) as u32 }
    }

    /// Members of a ball, as a slice of the center's distance-sorted order.
    pub fn ball_members(&self, ball: &Ball) -> &[u32] {
        &self.index().order[ball.center as usize][..ball.count as usize]
    }

    /// Mass of a ball.
    pub fn ball_measure(&self, ball: &Ball) -> f64 {
        self.index().prefix[ball.center as usize][ball.count as usize]
    }

    pub fn ball_measure_at(&self, center: usize, radius: f64) -> f64 {
        self.index().prefix[center][self.ball_count(center, radius)]
    }

    /// All distinct balls: for each center, one ball per distinct member set
    /// as the radius sweeps the attained distances, deduplicated by member
    /// set across centers. The returned list realizes every member set any
    /// ball in the space can have.
    pub fn enumerate_balls(&self) -> Vec<Ball> {
        let idx = self.index();
        let n = self.len();
        let mixes: Vec<u64> = (0..n as u64).map(splitmix64).collect();
        let mut seen = std::collections::HashSet::new();
        let mut balls = Vec::new();
        for c in 0..n {
            let dists = &idx.dist[c];
            let ord = &idx.order[c];
            let mut hash = 0u64;
            let mut k = 0usize;
            while k < n {
                // advance over the tie-block at this distance value
                let d = dists[k];
                while k < n && dists[k] == d {
                    hash ^= mixes[ord[k] as usize];
                    k += 1;
                }
                let radius = if k < n { dists[k] } else { max_radius_pad(d) };
                if seen.insert((k as u32, hash)) {
                    balls.push(Ball { center: c as u32, radius, count: k as u32 });
                }
            }
        }
        balls
    }

    /// Doubling ratio `max mu(B(s,2 rho)) / mu(B(s,rho))` over the sample
    /// set. With `None`, spaces up to 4096 points default to all centers
    /// crossed with all distinct attained distances.
    pub fn doubling_constant(&self, samples: Option<&[(usize, f64)]>) -> Result<f64> {
        let owned: Vec<(usize, f64)>;
        let samples = match samples {
            Some(s) => {
                if s.is_empty() {
                    return Err(SparseDomError::InvalidParam("empty doubling sample set".into()));
                }
                s
            }
            None => {
                if self.len() > DOUBLING_EXHAUSTIVE_LIMIT {
                    return Err(SparseDomError::GuardExceeded {
                        points: self.len(),
                        limit: DOUBLING_EXHAUSTIVE_LIMIT,
                    });
                }
                let idx = self.index();
                let mut radii: Vec<f64> = idx.dist.iter().flatten().copied().filter(|&d| d > 0.0).collect();
                radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
                radii.dedup();
                owned = (0..self.len())
                    .flat_map(|c| radii.iter().map(move |&r| (c, r)))
                    .collect();
                &owned
            }
        };
        let mut worst = 0.0f64;
        for &(c, rho) in samples {
            let small = self.ball_measure_at(c, rho);
            if small <= 0.0 {
                return Err(SparseDomError::InvalidParam(format!(
                    "ball B({c}, {rho}) has zero measure; metric bug"
                )));
            }
            let big = self.ball_measure_at(c, 2.0 * rho);
            worst = worst.max(big / small);
        }
        Ok(worst)
    }
}

/// Representative radius for the all-points ball from one center.
fn max_radius_pad(max_dist: f64) -> f64 {
    if max_dist > 0.0 {
        max_dist * (1.0 + 1e-9)
    } else {
        1.0
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// A function on the grid with values in the finite-dimensional normed
/// space `X = l^(r_exp)_m`: one m-vector per point.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub space: Arc<Space>,
    /// Value dimension m.
    pub dim: usize,
    /// Norm exponent of X; `f64::INFINITY` for the max norm.
    pub r_exp: f64,
    /// Flattened values, `dim` entries per point.
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(space: Arc<Space>, dim: usize, r_exp: f64) -> Self {
        let n = space.len();
        GridFunction { space, dim, r_exp, values: vec![0.0; n * dim] }
    }

    pub fn from_values(space: Arc<Space>, dim: usize, r_exp: f64, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), space.len() * dim, "one value vector per point");
        GridFunction { space, dim, r_exp, values }
    }

    /// Scalar function from a pointwise closure.
    pub fn from_scalar_fn(space: Arc<Space>, mut f: impl FnMut(usize, &[f64]) -> f64) -> Self {
        let vals: Vec<f64> = (0..space.len()).map(|i| f(i, space.coord(i))).collect();
        GridFunction { space, dim: 1, r_exp: 1.0, values: vals }
    }

    pub fn constant(space: Arc<Space>, c: f64) -> Self {
        let n = space.len();
        GridFunction { space, dim: 1, r_exp: 1.0, values: vec![c; n] }
    }

    /// Indicator of a set of point indices.
    pub fn indicator(space: Arc<Space>, members: &[u32]) -> Self {
        let mut g = Self::zeros(space, 1, 1.0);
        for &i in members {
            g.values[i as usize] = 1.0;
        }
        g
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// `||f(i)||_X` with the declared exponent.
    pub fn x_norm(&self, i: usize) -> f64 {
        vec_norm(self.value(i), self.r_exp)
    }

    pub fn x_norms(&self) -> Vec<f64> {
        (0..self.space.len()).map(|i| self.x_norm(i)).collect()
    }

    /// Support: indices with a nonzero value vector.
    pub fn support(&self) -> Vec<u32> {
        (0..self.space.len())
            .filter(|&i| self.value(i).iter().any(|&v| v != 0.0))
            .map(|i| i as u32)
            .collect()
    }

    /// `f * 1_members`: zero outside the given index set.
    pub fn restricted_to(&self, members: &[u32]) -> GridFunction {
        let mut out = Self::zeros(self.space.clone(), self.dim, self.r_exp);
        for &i in members {
            let i = i as usize;
            out.values[i * self.dim..(i + 1) * self.dim]
                .copy_from_slice(self.value(i));
        }
        out
    }

    /// `f * 1_{S \ members}`: zero on the given index set.
    pub fn restricted_to_complement(&self, members: &[u32]) -> GridFunction {
        let mut out = self.clone();
        for &i in members {
            let i = i as usize;
            out.values[i * self.dim..(i + 1) * self.dim].fill(0.0);
        }
        out
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v -= w;
        }
        out
    }

    /// p0-average of `||f||_X` over an index set:
    /// `(integral_E ||f||_X^p0 dmu / mu(E))^(1/p0)`.
    pub fn p_average(&self, members: &[u32], p0: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in members {
            let i = i as usize;
            num += self.x_norm(i).powf(p0) * self.space.mass(i);
            den += self.space.mass(i);
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).powf(1.0 / p0)
        }
    }
}

/// l^r norm of a small vector; `r = INFINITY` gives the max norm.
pub fn vec_norm(v: &[f64], r: f64) -> f64 {
    if v.len() == 1 {
        return v[0].abs();
    }
    if r.is_infinite() {
        v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    } else if r == 2.0 {
        v.iter().map(|&x| x * x).sum::<f64>().sqrt()
    } else if r == 1.0 {
        v.iter().map(|&x| x.abs()).sum()
    } else if r == 1.5 {
        // |x|^1.5 = |x| sqrt(|x|); powf dominates hot loops otherwise
        let s: f64 = v.iter().map(|&x| {
            let a = x.abs();
            a * a.sqrt()
        })
        .sum();
        s.powf(2.0 / 3.0)
    } else {
        v.iter().map(|&x| x.abs().powf(r)).sum::<f64>().powf(1.0 / r)
    }
}
