//! Dyadic systems on discretized spaces.
//!
//! Generations are indexed by `k >= 0`. At generation `k`, axis `j` has been
//! halved `floor(a_j * k)` times, so for integer anisotropies the cubes are
//! exactly the anisotropic tiles `prod_j 2^(-a_j k)([0,1) + m_j)` scaled to
//! the domain box. Fractional anisotropies make an axis skip generations
//! (the cube equals its parent along that axis). The scale parameter is
//! `delta = 2^(-min_j a_j)`.
//!
//! Shifted systems translate the tiling by `{0, 1/3, 2/3}` of the tile size
//! per axis, with the sign of the shift alternating with the halving count.
//! The alternation keeps consecutive generations nested: the offset between
//! parent and child grids is `sigma * (2^q - (-1)^q) / 2^(m+q)` tile units
//! and `3 | (2^q - (-1)^q)`, so third-shifts land on child boundaries.
//!
//! Membership tests use exact integer arithmetic in units of `1/(6 n_j)` of
//! the domain, so cube assignment is deterministic and float-free.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SparseDomError};
use crate::space::{Ball, Space};

/// A dyadic cube: one tile of one generation, intersected with the grid.
#[derive(Debug, Clone)]
pub struct Cube {
    pub id: usize,
    /// Generation index.
    pub k: i32,
    /// Center coordinates (a grid point: the member closest to the
    /// geometric box center).
    pub center: Vec<f64>,
    pub center_idx: usize,
    /// Sorted grid point indices inside the tile.
    pub members: Vec<u32>,
    pub measure: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Box index tuple of the tile (diagnostics / serialization).
    pub box_index: Vec<i64>,
}

/// A leveled family of cubes partitioning the space at every generation.
#[derive(Debug)]
pub struct DyadicSystem {
    pub space: Arc<Space>,
    pub cubes: Vec<Cube>,
    /// Cube ids per level, ordered `k_min..=k_max`.
    pub levels: Vec<Vec<usize>>,
    /// For each level: point index -> cube id.
    pub point_to_cube: Vec<Vec<u32>>,
    pub k_min: i32,
    pub k_max: i32,
    /// Scale ratio per generation: `2^(-min_j a_j)`.
    pub delta: f64,
    /// Inner sandwich constant: `B(z, c0 delta^k) cap grid` is inside every cube.
    pub c0: f64,
    /// Outer sandwich constant: every cube is inside `B(z, big_c0 delta^k)`.
    pub big_c0: f64,
    /// Shift fractions per axis, each in `{0, 1/3, 2/3}`.
    pub shift: Vec<f64>,
    /// Twice the maximal parent/child measure ratio; the stopping-cube
    /// constant of the local Calderon-Zygmund decomposition.
    pub c2: f64,
}

/// Report from [`DyadicSystem::verify_axioms`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomReport {
    /// Property (i): every level partitions the space.
    pub partition_ok: bool,
    pub partition_witness: Option<String>,
    /// Property (ii): cubes of different levels intersect only by inclusion.
    pub nesting_ok: bool,
    pub nesting_witness: Option<String>,
    /// Property (iii): ball sandwich with the stored constants.
    pub sandwich_ok: bool,
    pub sandwich_witness: Option<String>,
    pub c0: f64,
    pub big_c0: f64,
    pub delta: f64,
}

impl AxiomReport {
    pub fn all_ok(&self) -> bool {
        self.partition_ok && self.nesting_ok && self.sandwich_ok
    }
}

/// Shift numerators per axis: sigma = s/3 with s in {0,1,2}.
type ShiftTuple = Vec<i64>;

impl DyadicSystem {
    /// Builds the anisotropic dyadic system of the grid with zero shift.
    pub fn build_anisotropic_system(space: Arc<Space>, k_min: i32, k_max: i32) -> Result<DyadicSystem> {
        Self::build_shifted(space, k_min, k_max, vec![0; 0])
    }

    fn build_shifted(space: Arc<Space>, k_min: i32, k_max: i32, shift3: ShiftTuple) -> Result<DyadicSystem> {
        if k_min < 0 || k_max < k_min {
            return Err(SparseDomError::BadGenerationRange(k_min, k_max));
        }
        let dim = space.dim;
        let shift3 = if shift3.is_empty() { vec![0; dim] } else { shift3 };
        assert_eq!(shift3.len(), dim);
        for (j, &n) in space.cells_per_axis.iter().enumerate() {
            if !n.is_power_of_two() {
                return Err(SparseDomError::NotPowerOfTwo(n));
            }
            let m_fine = halvings(space.anisotropy[j], k_max);
            if (1usize << m_fine.min(62)) > n {
                return Err(SparseDomError::EmptyFineCubes { k_min, k_max, axis: j });
            }
        }

        let n_points = space.len();
        let axis_index = AxisIndexer::new(&space);
        let delta = 2f64.powf(-space.anisotropy.iter().cloned().fold(f64::INFINITY, f64::min));

        let mut cubes: Vec<Cube> = Vec::new();
        let mut levels: Vec<Vec<usize>> = Vec::new();
        let mut point_to_cube: Vec<Vec<u32>> = Vec::new();

        for k in k_min..=k_max {
            let ms: Vec<u32> = (0..dim).map(|j| halvings(space.anisotropy[j], k)).collect();
            // group points by exact integer box tuple
            let mut groups: BTreeMap<Vec<i64>, Vec<u32>> = BTreeMap::new();
            for p in 0..n_points {
                let key: Vec<i64> = (0..dim)
                    .map(|j| box_of_cell(axis_index.cell(p, j), space.cells_per_axis[j], ms[j], shift3[j]))
                    .collect();
                groups.entry(key).or_default().push(p as u32);
            }
            let mut level_ids = Vec::with_capacity(groups.len());
            let mut p2c = vec![u32::MAX; n_points];
            for (key, members) in groups {
                let id = cubes.len();
                // geometric box center, clipped to the domain
                let center_geo: Vec<f64> = (0..dim)
                    .map(|j| {
                        let size = space.axis_len[j] / (1u64 << ms[j]) as f64;
                        let sgn = if ms[j] % 2 == 0 { 1.0 } else { -1.0 };
                        let lo = space.origin[j] + (key[j] as f64 + sgn * shift3[j] as f64 / 3.0) * size;
                        let lo_c = lo.max(space.origin[j]);
                        let hi_c = (lo + size).min(space.origin[j] + space.axis_len[j]);
                        0.5 * (lo_c + hi_c)
                    })
                    .collect();
                let center_idx = members
                    .iter()
                    .map(|&p| (space.dist_to_coord(p as usize, &center_geo), p))
                    .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
                    .unwrap()
                    .1 as usize;
                let measure = members.iter().map(|&p| space.mass(p as usize)).sum();
                for &p in &members {
                    p2c[p as usize] = id as u32;
                }
                cubes.push(Cube {
                    id,
                    k,
                    center: space.coord(center_idx).to_vec(),
                    center_idx,
                    members,
                    measure,
                    parent: None,
                    children: Vec::new(),
                    box_index: key,
                });
                level_ids.push(id);
            }
            levels.push(level_ids);
            point_to_cube.push(p2c);
        }

        // parent/child links through the level maps
        for lv in 1..levels.len() {
            for &id in &levels[lv] {
                let first = cubes[id].members[0] as usize;
                let parent = point_to_cube[lv - 1][first] as usize;
                debug_assert!(cubes[id]
                    .members
                    .iter()
                    .all(|&p| point_to_cube[lv - 1][p as usize] as usize == parent));
                cubes[id].parent = Some(parent);
                cubes[parent].children.push(id);
            }
        }

        // sandwich constants from cube geometry
        let mut c0 = f64::INFINITY;
        let mut big_c0 = 0.0f64;
        for cube in &cubes {
            let scale = delta.powi(cube.k);
            let r_out = cube
                .members
                .iter()
                .map(|&p| space.dist(cube.center_idx, p as usize))
                .fold(0.0f64, f64::max);
            big_c0 = big_c0.max(r_out / scale);
            if cube.members.len() < n_points {
                let mut inside = vec![false; n_points];
                for &p in &cube.members {
                    inside[p as usize] = true;
                }
                let r_in = (0..n_points)
                    .filter(|&p| !inside[p])
                    .map(|p| space.dist(cube.center_idx, p))
                    .fold(f64::INFINITY, f64::min);
                c0 = c0.min(r_in / scale);
            }
        }
        if !c0.is_finite() {
            // single all-space cube at every level
            c0 = big_c0;
        }

        let mut c2 = 0.0f64;
        for cube in &cubes {
            if let Some(par) = cube.parent {
                c2 = c2.max(cubes[par].measure / cube.measure);
            }
        }
        let c2 = if c2 > 0.0 { 2.0 * c2 } else { 2.0 };

        Ok(DyadicSystem {
            space,
            cubes,
            levels,
            point_to_cube,
            k_min,
            k_max,
            delta,
            c0,
            big_c0,
            shift: shift3.iter().map(|&s| s as f64 / 3.0).collect(),
            c2,
        })
    }

    pub fn cube(&self, id: usize) -> &Cube {
        &self.cubes[id]
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Cube id containing a point at a given level position (0 = coarsest).
    pub fn cube_at_level(&self, level_pos: usize, point: usize) -> usize {
        self.point_to_cube[level_pos][point] as u32 as usize
    }

    /// Ancestor chain of a point, coarsest first.
    pub fn chain(&self, point: usize) -> Vec<usize> {
        (0..self.n_levels()).map(|lv| self.cube_at_level(lv, point)).collect()
    }

    /// Preorder list of a cube and all its descendants.
    pub fn subtree(&self, root: usize) -> Vec<usize> {
        let mut out = vec![root];
        let mut stack = vec![root];
        while let Some(q) = stack.pop() {
            for &c in &self.cubes[q].children {
                out.push(c);
                stack.push(c);
            }
        }
        out.sort_unstable();
        out
    }

    /// The root cube, when the coarsest level is a single cube covering S.
    pub fn root(&self) -> Option<usize> {
        if self.levels[0].len() == 1 {
            Some(self.levels[0][0])
        } else {
            None
        }
    }

    /// Dilation `alpha Q := B(z, alpha * C0 * delta^k)`, clipped to the grid.
    ///
    /// The stored radius carries a relative pad of 1e-12 so the strict-ball
    /// member set equals the closed ball of the nominal radius: C0 is the
    /// attained max ratio on a finite grid, so cube members may sit exactly
    /// on the boundary and `Q subset alpha Q` must still hold.
    pub fn dilate(&self, cube_id: usize, alpha: f64) -> Ball {
        let cube = &self.cubes[cube_id];
        let radius = alpha * self.big_c0 * self.delta.powi(cube.k) * (1.0 + 1e-12);
        self.space.ball_at(cube.center_idx, radius)
    }

    /// `sup_Q mu(alpha Q) / mu(Q)`: the dilation measure constant c1.
    pub fn dilation_measure_bound(&self, alpha: f64) -> f64 {
        self.cubes
            .iter()
            .map(|c| self.space.ball_measure(&self.dilate(c.id, alpha)) / c.measure)
            .fold(0.0f64, f64::max)
    }

    /// Exhaustively checks properties (i)-(iii) with the stored constants.
    pub fn verify_axioms(&self) -> AxiomReport {
        let n = self.space.len();
        let mut partition_ok = true;
        let mut partition_witness = None;
        for (lv, ids) in self.levels.iter().enumerate() {
            let mut count = vec![0u32; n];
            for &id in ids {
                for &p in &self.cubes[id].members {
                    count[p as usize] += 1;
                }
            }
            if let Some(p) = count.iter().position(|&c| c != 1) {
                partition_ok = false;
                partition_witness = Some(format!(
                    "level {} covers point {} exactly {} times",
                    lv, p, count[p]
                ));
                break;
            }
        }

        let sets: Vec<BitSet> = self.cubes.iter().map(|c| BitSet::from_members(n, &c.members)).collect();
        let mut nesting_ok = true;
        let mut nesting_witness = None;
        'outer: for fine in &self.cubes {
            for coarse in &self.cubes {
                if fine.k <= coarse.k {
                    continue;
                }
                let fs = &sets[fine.id];
                let cs = &sets[coarse.id];
                if fs.intersects(cs) && !fs.subset_of(cs) {
                    nesting_ok = false;
                    nesting_witness = Some(format!(
                        "cube {} (k={}) straddles cube {} (k={})",
                        fine.id, fine.k, coarse.id, coarse.k
                    ));
                    break 'outer;
                }
            }
        }

        // Outer inclusion is checked against the closed ball: on a finite
        // grid the supremum distance is attained, so C0 is the exact max
        // ratio and members sit on the boundary.
        let mut sandwich_ok = true;
        let mut sandwich_witness = None;
        'sw: for cube in &self.cubes {
            let scale = self.delta.powi(cube.k);
            let inner = self.space.ball_at(cube.center_idx, self.c0 * scale);
            let cube_set = &sets[cube.id];
            for &p in self.space.ball_members(&inner) {
                if !cube_set.contains(p as usize) {
                    sandwich_ok = false;
                    sandwich_witness = Some(format!(
                        "inner ball of cube {} contains non-member {}",
                        cube.id, p
                    ));
                    break 'sw;
                }
            }
            let r_bound = self.big_c0 * scale * (1.0 + 1e-12);
            for &p in &cube.members {
                if self.space.dist(cube.center_idx, p as usize) > r_bound {
                    sandwich_ok = false;
                    sandwich_witness = Some(format!(
                        "cube {} member {} exits its outer ball",
                        cube.id, p
                    ));
                    break 'sw;
                }
            }
        }

        AxiomReport {
            partition_ok,
            partition_witness,
            nesting_ok,
            nesting_witness,
            sandwich_ok,
            sandwich_witness,
            c0: self.c0,
            big_c0: self.big_c0,
            delta: self.delta,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cubes: Vec<serde_json::Value> = self
            .cubes
            .iter()
            .map(|c| {
                serde_json::json!({
                    "id": c.id,
                    "k": c.k,
                    "center": c.center,
                    "center_idx": c.center_idx,
                    "members": c.members,
                    "parent": c.parent,
                    "children": c.children,
                })
            })
            .collect();
        serde_json::json!({
            "k_min": self.k_min,
            "k_max": self.k_max,
            "delta": self.delta,
            "c0": self.c0,
            "C0": self.big_c0,
            "shift": self.shift,
            "cubes": cubes,
        })
    }
}

/// Number of halvings of axis with anisotropy `a` at generation `k`.
fn halvings(a: f64, k: i32) -> u32 {
    (a * k as f64 + 1e-9).floor() as u32
}

/// Exact shifted box index of a cell: `floor(x * 2^m - (-1)^m * s/3)` where
/// `x = (2i+1)/(2n)` is the normalized cell center. Integer arithmetic in
/// units of `1/(6n)`.
fn box_of_cell(cell: usize, n: usize, m: u32, s: i64) -> i64 {
    let sgn: i64 = if m % 2 == 0 { 1 } else { -1 };
    let num = 3 * (2 * cell as i64 + 1) * (1i64 << m) - sgn * s * 2 * n as i64;
    num.div_euclid(6 * n as i64)
}

/// Decomposes flat point indices into per-axis cell indices.
struct AxisIndexer {
    strides: Vec<usize>,
    cells: Vec<usize>,
}

impl AxisIndexer {
    fn new(space: &Space) -> Self {
        let dim = space.dim;
        let mut strides = vec![1usize; dim];
        for j in (0..dim.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * space.cells_per_axis[j + 1];
        }
        AxisIndexer { strides, cells: space.cells_per_axis.clone() }
    }

    fn cell(&self, point: usize, axis: usize) -> usize {
        (point / self.strides[axis]) % self.cells[axis]
    }
}

#[derive(Clone)]
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn from_members(n: usize, members: &[u32]) -> Self {
        let mut words = vec![0u64; (n + 63) / 64];
        for &p in members {
            words[p as usize / 64] |= 1 << (p % 64);
        }
        BitSet { words }
    }

    fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    fn intersects(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    fn subset_of(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

/// A bundle of shifted dyadic systems with the ball-containment property of
/// adjacent systems: every ball fits inside a cube of comparable scale from
/// one of them.
#[derive(Debug)]
pub struct AdjacentSystems {
    pub systems: Vec<Arc<DyadicSystem>>,
    /// Worst ratio `scale(Q_best) / radius(B)` over all enumerated balls,
    /// where scale is the diameter proxy `C0 delta^k`.
    pub gamma: f64,
    /// Worst ratio `mu(Q_best) / mu(B)` over all enumerated balls.
    pub containment_measure_ratio: f64,
}

/// Reference to a cube inside an [`AdjacentSystems`] bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeRef {
    pub system: usize,
    pub cube: usize,
}

impl AdjacentSystems {
    /// Base system plus per-axis translates by `{0, 1/3, 2/3}` of the tile
    /// size (3^d systems). The containment property is verified exhaustively
    /// over [`Space::enumerate_balls`]; failure is an error with a witness.
    pub fn build_shifted_systems(space: Arc<Space>, k_min: i32, k_max: i32) -> Result<AdjacentSystems> {
        let dim = space.dim;
        let mut shifts: Vec<ShiftTuple> = vec![vec![0; dim]];
        // lexicographic over {0,1,2}^d, base system first
        let total = 3usize.pow(dim as u32);
        for code in 1..total {
            let mut c = code;
            let mut t = vec![0i64; dim];
            for j in (0..dim).rev() {
                t[j] = (c % 3) as i64;
                c /= 3;
            }
            shifts.push(t);
        }
        let mut systems = Vec::with_capacity(shifts.len());
        for t in shifts {
            systems.push(Arc::new(DyadicSystem::build_shifted(space.clone(), k_min, k_max, t)?));
        }

        let balls = space.enumerate_balls();
        let mut gamma = 0.0f64;
        let mut measure_ratio = 0.0f64;
        let adjacent = AdjacentSystems { systems, gamma: 0.0, containment_measure_ratio: 0.0 };
        for ball in &balls {
            let (sys, cube) = adjacent.containing_cube(&ball)?;
            let s = &adjacent.systems[sys];
            let scale = s.big_c0 * s.delta.powi(s.cube(cube).k);
            gamma = gamma.max(scale / ball.radius);
            measure_ratio = measure_ratio.max(s.cube(cube).measure / space.ball_measure(ball));
        }
        Ok(AdjacentSystems { gamma, containment_measure_ratio: measure_ratio, ..adjacent })
    }

    /// Smallest-scale cube (diameter proxy `C0 delta^k`) containing the ball
    /// across all systems; ties broken by lowest system index, then lowest
    /// cube id.
    pub fn containing_cube(&self, ball: &Ball) -> Result<(usize, usize)> {
        let space = &self.systems[0].space;
        let members = space.ball_members(ball);
        let center = ball.center as usize;
        let mut best: Option<(f64, usize, usize)> = None;
        for (si, sys) in self.systems.iter().enumerate() {
            // the only candidate at each level is the cube holding the center
            for lv in (0..sys.n_levels()).rev() {
                let cand = sys.cube_at_level(lv, center);
                let contained = members
                    .iter()
                    .all(|&p| sys.cube_at_level(lv, p as usize) == cand);
                if contained {
                    let scale = sys.big_c0 * sys.delta.powi(sys.cube(cand).k);
                    let better = match best {
                        None => true,
                        Some((bs, bsi, bid)) => {
                            scale < bs - 1e-15 * bs.abs()
                                || ((scale - bs).abs() <= 1e-15 * bs.abs()
                                    && (si, cand) < (bsi, bid))
                        }
                    };
                    if better {
                        best = Some((scale, si, cand));
                    }
                    break; // coarser levels in this system only get bigger
                }
            }
        }
        match best {
            Some((_, si, id)) => Ok((si, id)),
            None => Err(SparseDomError::NoContainingCube { center, radius: ball.radius }),
        }
    }
}

/// Output of [`covering_partition`].
#[derive(Debug, Clone)]
pub struct CoveringPartition {
    pub cubes: Vec<usize>,
    /// True when the stopping search found no admissible generation and the
    /// single root cube was returned instead.
    pub degenerate: bool,
}

/// Proof algorithm of the covering lemma: for each point `s`, take the
/// coarsest generation where `E` is not yet inside `2 c_d Q_s^k`; the
/// deduplicated cubes partition S and every dilate `alpha Q` contains `E`.
pub fn covering_partition(system: &DyadicSystem, e_set: &[u32], alpha: f64) -> Result<CoveringPartition> {
    let space = &system.space;
    let mut distinct: Vec<u32> = e_set.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(SparseDomError::InvalidParam(
            "covering_partition needs E with at least 2 distinct points (diam(E) > 0)".into(),
        ));
    }
    let min_alpha = 3.0 * space.c_d * space.c_d / system.delta;
    if alpha < min_alpha - 1e-12 {
        return Err(SparseDomError::InvalidParam(format!(
            "alpha = {alpha} below covering threshold 3 c_d^2 / delta = {min_alpha}"
        )));
    }

    let n = space.len();
    let two_cd = 2.0 * space.c_d;
    let mut chosen: Vec<Option<usize>> = vec![None; n];
    for s in 0..n {
        for lv in 0..system.n_levels() {
            let q = system.cube_at_level(lv, s);
            let cube = system.cube(q);
            let radius = two_cd * system.big_c0 * system.delta.powi(cube.k);
            let contains_e = distinct
                .iter()
                .all(|&e| space.dist(cube.center_idx, e as usize) < radius);
            if !contains_e {
                chosen[s] = Some(q);
                break;
            }
        }
        if chosen[s].is_none() {
            // K_s empty: every generation swallows E in its 2 c_d dilate
            let root = system.root().ok_or_else(|| {
                SparseDomError::CoveringFailed(
                    "degenerate covering but the coarsest level is not a single root".into(),
                )
            })?;
            return Ok(CoveringPartition { cubes: vec![root], degenerate: true });
        }
    }

    let mut cubes: Vec<usize> = chosen.iter().map(|c| c.unwrap()).collect();
    cubes.sort_unstable();
    cubes.dedup();

    // verify the three posts
    let mut count = vec![0u32; n];
    for &q in &cubes {
        for &p in &system.cube(q).members {
            count[p as usize] += 1;
        }
    }
    if let Some(p) = count.iter().position(|&c| c != 1) {
        return Err(SparseDomError::CoveringFailed(format!(
            "selected cubes cover point {} exactly {} times",
            p, count[p]
        )));
    }
    for &q in &cubes {
        let cube = system.cube(q);
        let radius = alpha * system.big_c0 * system.delta.powi(cube.k);
        for &e in &distinct {
            if space.dist(cube.center_idx, e as usize) >= radius {
                return Err(SparseDomError::CoveringFailed(format!(
                    "E point {} escapes alpha-dilate of cube {}",
                    e, q
                )));
            }
        }
    }
    Ok(CoveringPartition { cubes, degenerate: false })
}
