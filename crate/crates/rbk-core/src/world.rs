//! Occupancy worlds and synthetic map generation.
//!
//! Obstacles are stored as a point set sampled at map resolution (pillars and
//! noise voxels are rasterized to cell centers). Two inflated configuration
//! spaces are materialized as bit grids: a coarse one used by the front-end
//! search and a tighter one used by tube expansion and optimization. Nearest
//! obstacle queries are exact and answered from a kd-tree over the raw
//! points.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{flt, Vec3};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum WorldError {
    /// Clearances must satisfy `c_rbk > c_elas > robot_radius >= 0`.
    ClearanceOrdering { c_rbk: f64, c_elas: f64, robot_radius: f64 },
    /// Resolution and dimensions must be positive.
    BadGeometry,
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::ClearanceOrdering { c_rbk, c_elas, robot_radius } => write!(
                f,
                "clearances must satisfy c_rbk > c_elas > robot_radius >= 0, \
                 got {c_rbk} / {c_elas} / {robot_radius}"
            ),
            WorldError::BadGeometry => write!(f, "resolution and dims must be positive"),
        }
    }
}

impl core::error::Error for WorldError {}

/// Clearance configuration for the two-level inflation strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearances {
    /// Minimum clearance of the search configuration space, meters.
    pub c_rbk: f64,
    /// Minimum clearance of the optimization configuration space, meters.
    pub c_elas: f64,
    /// Robot radius, meters.
    pub robot_radius: f64,
}

impl Clearances {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.c_rbk > self.c_elas && self.c_elas > self.robot_radius && self.robot_radius >= 0.0
        {
            Ok(())
        } else {
            Err(WorldError::ClearanceOrdering {
                c_rbk: self.c_rbk,
                c_elas: self.c_elas,
                robot_radius: self.robot_radius,
            })
        }
    }
}

/// Which inflated configuration space a query runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClearanceLevel {
    Rbk,
    Elas,
}

/// Integer cell coordinate.
pub type Cell = [i32; 3];

#[derive(Debug, Clone)]
struct BitGrid {
    words: Vec<u64>,
}

impl BitGrid {
    fn new(len: usize) -> Self {
        BitGrid { words: vec![0; len.div_ceil(64)] }
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

// ---------------------------------------------------------------------------
// kd-tree over obstacle points.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct KdNode {
    point: Vec3,
    axis: u8,
    left: i32,
    right: i32,
}

/// Static kd-tree with exact nearest and radius queries.
#[derive(Debug, Clone, Default)]
pub struct KdTree {
    nodes: Vec<KdNode>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> KdTree {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = KdTree { nodes: Vec::with_capacity(points.len()), root: -1 };
        tree.root = tree.build_rec(points, &mut idx, 0);
        tree
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn build_rec(&mut self, points: &[Vec3], idx: &mut [usize], depth: usize) -> i32 {
        if idx.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a]
                .axis(axis as usize)
                .total_cmp(&points[b].axis(axis as usize))
                .then(a.cmp(&b))
        });
        let point = points[idx[mid]];
        let node_id = self.nodes.len() as i32;
        self.nodes.push(KdNode { point, axis, left: -1, right: -1 });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build_rec(points, lo, depth + 1);
        let right = self.build_rec(points, &mut hi[1..], depth + 1);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    /// Exact nearest point and distance, or `None` for an empty tree.
    pub fn nearest(&self, q: &Vec3) -> Option<(Vec3, f64)> {
        if self.root < 0 {
            return None;
        }
        let mut best = (Vec3::ZERO, f64::INFINITY);
        self.nearest_rec(self.root, q, &mut best);
        Some((best.0, flt::sqrt(best.1)))
    }

    fn nearest_rec(&self, id: i32, q: &Vec3, best: &mut (Vec3, f64)) {
        let node = &self.nodes[id as usize];
        let d2 = q.dist_sq(&node.point);
        if d2 < best.1 {
            *best = (node.point, d2);
        }
        let delta = q.axis(node.axis as usize) - node.point.axis(node.axis as usize);
        let (near, far) = if delta < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        if near >= 0 {
            self.nearest_rec(near, q, best);
        }
        if far >= 0 && delta * delta < best.1 {
            self.nearest_rec(far, q, best);
        }
    }

    /// Visit every point within `radius` of `q`.
    pub fn within_radius(&self, q: &Vec3, radius: f64, visit: &mut dyn FnMut(&Vec3)) {
        if self.root >= 0 {
            self.radius_rec(self.root, q, radius, radius * radius, visit);
        }
    }

    fn radius_rec(
        &self,
        id: i32,
        q: &Vec3,
        radius: f64,
        r2: f64,
        visit: &mut dyn FnMut(&Vec3),
    ) {
        let node = &self.nodes[id as usize];
        if q.dist_sq(&node.point) <= r2 {
            visit(&node.point);
        }
        let delta = q.axis(node.axis as usize) - node.point.axis(node.axis as usize);
        if node.left >= 0 && delta <= radius {
            self.radius_rec(node.left, q, radius, r2, visit);
        }
        if node.right >= 0 && -delta <= radius {
            self.radius_rec(node.right, q, radius, r2, visit);
        }
    }
}

// ---------------------------------------------------------------------------
// Occupancy world.
// ---------------------------------------------------------------------------

/// Immutable occupancy world snapshot with two inflated configuration spaces.
#[derive(Debug, Clone)]
pub struct OccupancyWorld {
    resolution: f64,
    dims: [usize; 3],
    origin: Vec3,
    clearances: Clearances,
    points: Vec<Vec3>,
    kd: KdTree,
    raw: BitGrid,
    occ_rbk: BitGrid,
    occ_elas: BitGrid,
}

impl OccupancyWorld {
    /// Materialize both inflated grids and the nearest-neighbor index.
    ///
    /// A cell is occupied at clearance `c` when it contains an obstacle point
    /// or its center lies within `c` of one; the containment clause makes the
    /// nesting `occ(c_rbk) ⊇ occ(c_elas) ⊇ raw` unconditional.
    pub fn build(
        obstacles: Vec<Vec3>,
        resolution: f64,
        dims: [usize; 3],
        origin: Vec3,
        clearances: Clearances,
    ) -> Result<OccupancyWorld, WorldError> {
        if !(resolution > 0.0) || dims.iter().any(|&d| d == 0) {
            return Err(WorldError::BadGeometry);
        }
        clearances.validate()?;
        let len = dims[0] * dims[1] * dims[2];
        let mut world = OccupancyWorld {
            resolution,
            dims,
            origin,
            clearances,
            kd: KdTree::build(&obstacles),
            points: obstacles,
            raw: BitGrid::new(len),
            occ_rbk: BitGrid::new(len),
            occ_elas: BitGrid::new(len),
        };
        let points = core::mem::take(&mut world.points);
        for p in &points {
            world.mark_point(p);
        }
        world.points = points;
        Ok(world)
    }

    /// Publish a fresh snapshot with additional obstacles folded in. The
    /// receding-horizon harness uses this as obstacles enter sensor range;
    /// readers keep using the old snapshot until handed the new one.
    pub fn with_additional_obstacles(mut self, new_points: &[Vec3]) -> OccupancyWorld {
        if new_points.is_empty() {
            return self;
        }
        for p in new_points {
            self.mark_point(p);
        }
        self.points.extend_from_slice(new_points);
        self.kd = KdTree::build(&self.points);
        self
    }

    fn mark_point(&mut self, p: &Vec3) {
        if let Some(cell) = self.cell_of(p) {
            let idx = self.index(&cell);
            self.raw.set(idx);
            self.occ_rbk.set(idx);
            self.occ_elas.set(idx);
        }
        let c_rbk = self.clearances.c_rbk;
        let c_elas = self.clearances.c_elas;
        let reach = (c_rbk / self.resolution) as i32 + 1;
        let base = self.cell_of_unclamped(p);
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let cell = [base[0] + dx, base[1] + dy, base[2] + dz];
                    if !self.in_bounds(&cell) {
                        continue;
                    }
                    let d = self.center(&cell).dist(p);
                    if d <= c_rbk {
                        let idx = self.index(&cell);
                        self.occ_rbk.set(idx);
                        if d <= c_elas {
                            self.occ_elas.set(idx);
                        }
                    }
                }
            }
        }
    }

    #[inline]
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    #[inline]
    pub fn clearances(&self) -> Clearances {
        self.clearances
    }

    #[inline]
    pub fn obstacle_points(&self) -> &[Vec3] {
        &self.points
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn in_bounds(&self, cell: &Cell) -> bool {
        (0..3).all(|a| cell[a] >= 0 && (cell[a] as usize) < self.dims[a])
    }

    /// Linear index of an in-bounds cell (x fastest).
    #[inline]
    pub fn index(&self, cell: &Cell) -> usize {
        (cell[2] as usize * self.dims[1] + cell[1] as usize) * self.dims[0] + cell[0] as usize
    }

    fn cell_of_unclamped(&self, p: &Vec3) -> Cell {
        [
            flt::floor((p.x - self.origin.x) / self.resolution) as i32,
            flt::floor((p.y - self.origin.y) / self.resolution) as i32,
            flt::floor((p.z - self.origin.z) / self.resolution) as i32,
        ]
    }

    /// Containing cell, or `None` outside the grid.
    pub fn cell_of(&self, p: &Vec3) -> Option<Cell> {
        let cell = self.cell_of_unclamped(p);
        if self.in_bounds(&cell) {
            Some(cell)
        } else {
            None
        }
    }

    /// World coordinates of a cell center.
    pub fn center(&self, cell: &Cell) -> Vec3 {
        Vec3::new(
            self.origin.x + (cell[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (cell[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (cell[2] as f64 + 0.5) * self.resolution,
        )
    }

    pub fn occupied(&self, cell: &Cell, level: ClearanceLevel) -> bool {
        let idx = self.index(cell);
        match level {
            ClearanceLevel::Rbk => self.occ_rbk.get(idx),
            ClearanceLevel::Elas => self.occ_elas.get(idx),
        }
    }

    pub fn raw_occupied(&self, cell: &Cell) -> bool {
        self.raw.get(self.index(cell))
    }

    pub fn free(&self, cell: &Cell, level: ClearanceLevel) -> bool {
        self.in_bounds(cell) && !self.occupied(cell, level)
    }

    pub fn occupied_count(&self, level: ClearanceLevel) -> usize {
        match level {
            ClearanceLevel::Rbk => self.occ_rbk.count(),
            ClearanceLevel::Elas => self.occ_elas.count(),
        }
    }

    /// Exact nearest obstacle point; `None` when the world has no obstacles
    /// (callers cap the distance at their inflation or sensing limit).
    pub fn nn_search(&self, p: &Vec3) -> Option<(Vec3, f64)> {
        self.kd.nearest(p)
    }

    /// Distance from `p` to the nearest obstacle, or `f64::INFINITY`.
    pub fn clearance(&self, p: &Vec3) -> f64 {
        self.nn_search(p).map_or(f64::INFINITY, |(_, d)| d)
    }

    pub fn kd_tree(&self) -> &KdTree {
        &self.kd
    }
}

// ---------------------------------------------------------------------------
// Grid graph.
// ---------------------------------------------------------------------------

/// Grid connectivity: 6/18/26 neighbors in 3-D, 4/8 for single-layer grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
    Four,
    Eight,
}

impl Connectivity {
    /// Neighbor offsets, in a fixed deterministic order.
    pub fn offsets(&self) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        let planar = matches!(self, Connectivity::Four | Connectivity::Eight);
        let zs: &[i32] = if planar { &[0] } else { &[-1, 0, 1] };
        for &dz in zs {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six | Connectivity::Four => l1 == 1,
                        Connectivity::Eighteen => l1 <= 2,
                        Connectivity::TwentySix | Connectivity::Eight => true,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// Longest neighbor step in cells.
    pub fn max_step_cells(&self) -> f64 {
        match self {
            Connectivity::Six | Connectivity::Four => 1.0,
            Connectivity::Eighteen | Connectivity::Eight => flt::sqrt(2.0),
            Connectivity::TwentySix => flt::sqrt(3.0),
        }
    }
}

/// A view of one inflated configuration space as an M-connect graph over
/// free cells.
#[derive(Clone)]
pub struct GridGraph<'w> {
    pub world: &'w OccupancyWorld,
    pub connectivity: Connectivity,
    pub level: ClearanceLevel,
}

impl<'w> GridGraph<'w> {
    pub fn new(world: &'w OccupancyWorld, connectivity: Connectivity, level: ClearanceLevel) -> Self {
        GridGraph { world, connectivity, level }
    }

    #[inline]
    pub fn free(&self, cell: &Cell) -> bool {
        self.world.free(cell, self.level)
    }

    /// Maximum distance between neighboring control points, meters.
    pub fn d_max(&self) -> f64 {
        self.connectivity.max_step_cells() * self.world.resolution()
    }
}

// ---------------------------------------------------------------------------
// Synthetic maps.
// ---------------------------------------------------------------------------

/// Random-pillar map parameters.
#[derive(Debug, Clone)]
pub struct PillarMapParams {
    /// World extent in meters per axis; pillars span the full z extent.
    pub extent: [f64; 3],
    /// Pillars per square meter of floor area.
    pub density: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Rasterization step, normally the map resolution.
    pub resolution: f64,
    /// Disks (center, radius) kept free of pillar centers, e.g. around the
    /// start and goal; rejected centers are resampled deterministically.
    pub keep_clear: Vec<(Vec3, f64)>,
}

/// Vertical cylinders at uniform random positions, rasterized to obstacle
/// points on the cell-center lattice. Deterministic in the seed.
pub fn generate_random_pillars(seed: u64, params: &PillarMapParams) -> Vec<Vec3> {
    assert!(params.density >= 0.0);
    let mut rng = Rng::new(seed);
    let area = params.extent[0] * params.extent[1];
    let count = flt::round(params.density * area) as usize;
    let res = params.resolution;
    let mut points = Vec::new();
    for _ in 0..count {
        let (mut cx, mut cy);
        loop {
            cx = rng.range_f64(0.0, params.extent[0]);
            cy = rng.range_f64(0.0, params.extent[1]);
            let c = Vec3::new(cx, cy, 0.0);
            let blocked = params.keep_clear.iter().any(|(p, r)| {
                let dx = p.x - c.x;
                let dy = p.y - c.y;
                dx * dx + dy * dy < r * r
            });
            if !blocked {
                break;
            }
        }
        let radius = rng.range_f64(params.radius_min, params.radius_max);
        let reach = flt::ceil(radius / res) as i32;
        let base_x = flt::floor(cx / res) as i32;
        let base_y = flt::floor(cy / res) as i32;
        let nz = flt::ceil(params.extent[2] / res) as i32;
        let mut columns: Vec<(f64, f64)> = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let px = (base_x + dx) as f64 * res + 0.5 * res;
                let py = (base_y + dy) as f64 * res + 0.5 * res;
                if px < 0.0 || py < 0.0 || px >= params.extent[0] || py >= params.extent[1] {
                    continue;
                }
                let ddx = px - cx;
                let ddy = py - cy;
                if ddx * ddx + ddy * ddy > radius * radius {
                    continue;
                }
                columns.push((px, py));
            }
        }
        if columns.is_empty() {
            // Pillars thinner than the lattice still occupy their own cell.
            columns.push((
                (base_x as f64 + 0.5) * res,
                (base_y as f64 + 0.5) * res,
            ));
        }
        for (px, py) in columns {
            for iz in 0..nz {
                points.push(Vec3::new(px, py, (iz as f64 + 0.5) * res));
            }
        }
    }
    points
}

/// Gradient-noise map parameters.
#[derive(Debug, Clone, Copy)]
pub struct NoiseMapParams {
    pub dims: [usize; 3],
    pub resolution: f64,
    /// Cells with normalized noise value >= threshold become obstacles.
    pub threshold: f64,
    /// Noise frequency in cycles per cell; default 1/12 gives features a
    /// dozen cells wide.
    pub frequency: f64,
}

impl NoiseMapParams {
    pub fn new(dims: [usize; 3], resolution: f64, threshold: f64) -> Self {
        NoiseMapParams { dims, resolution, threshold, frequency: 1.0 / 12.0 }
    }
}

/// Classic 3-D gradient (Perlin) noise thresholded to occupancy; obstacle
/// points are the occupied cell centers. Deterministic in the seed.
pub fn generate_noise_map(seed: u64, params: &NoiseMapParams) -> Vec<Vec3> {
    assert!(params.threshold > 0.0 && params.threshold < 1.0);
    let noise = PerlinNoise::new(seed);
    let res = params.resolution;
    let mut points = Vec::new();
    for z in 0..params.dims[2] {
        for y in 0..params.dims[1] {
            for x in 0..params.dims[0] {
                let v = noise.sample(
                    x as f64 * params.frequency,
                    y as f64 * params.frequency,
                    z as f64 * params.frequency,
                );
                // Map from roughly [-1, 1] to [0, 1].
                let value = 0.5 * (v + 1.0);
                if value >= params.threshold {
                    points.push(Vec3::new(
                        (x as f64 + 0.5) * res,
                        (y as f64 + 0.5) * res,
                        (z as f64 + 0.5) * res,
                    ));
                }
            }
        }
    }
    points
}

/// Ken Perlin's improved noise with a seeded permutation table.
struct PerlinNoise {
    perm: [u8; 512],
}

impl PerlinNoise {
    fn new(seed: u64) -> Self {
        let mut table: Vec<u8> = (0..=255).collect();
        Rng::new(seed).shuffle(&mut table);
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = table[i % 256];
        }
        PerlinNoise { perm }
    }

    fn sample(&self, x: f64, y: f64, z: f64) -> f64 {
        let xi = (flt::floor(x) as i64 & 255) as usize;
        let yi = (flt::floor(y) as i64 & 255) as usize;
        let zi = (flt::floor(z) as i64 & 255) as usize;
        let xf = x - flt::floor(x);
        let yf = y - flt::floor(y);
        let zf = z - flt::floor(z);
        let u = fade(xf);
        let v = fade(yf);
        let w = fade(zf);
        let p = &self.perm;
        let a = p[xi] as usize + yi;
        let aa = p[a] as usize + zi;
        let ab = p[a + 1] as usize + zi;
        let b = p[xi + 1] as usize + yi;
        let ba = p[b] as usize + zi;
        let bb = p[b + 1] as usize + zi;
        let lerp = |t: f64, a: f64, b: f64| a + t * (b - a);
        lerp(
            w,
            lerp(
                v,
                lerp(u, grad(p[aa], xf, yf, zf), grad(p[ba], xf - 1.0, yf, zf)),
                lerp(u, grad(p[ab], xf, yf - 1.0, zf), grad(p[bb], xf - 1.0, yf - 1.0, zf)),
            ),
            lerp(
                v,
                lerp(
                    u,
                    grad(p[aa + 1], xf, yf, zf - 1.0),
                    grad(p[ba + 1], xf - 1.0, yf, zf - 1.0),
                ),
                lerp(
                    u,
                    grad(p[ab + 1], xf, yf - 1.0, zf - 1.0),
                    grad(p[bb + 1], xf - 1.0, yf - 1.0, zf - 1.0),
                ),
            ),
        )
    }
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn grad(hash: u8, x: f64, y: f64, z: f64) -> f64 {
    let h = hash & 15;
    let u = if h < 8 { x } else { y };
    let v = if h < 4 {
        y
    } else if h == 12 || h == 14 {
        x
    } else {
        z
    };
    (if h & 1 == 0 { u } else { -u }) + (if h & 2 == 0 { v } else { -v })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clearances() -> Clearances {
        Clearances { c_rbk: 0.48, c_elas: 0.3, robot_radius: 0.2 }
    }

    #[test]
    fn clearance_ordering_enforced() {
        let bad = Clearances { c_rbk: 0.3, c_elas: 0.3, robot_radius: 0.1 };
        assert!(bad.validate().is_err());
        let res = OccupancyWorld::build(Vec::new(), 0.25, [4, 4, 4], Vec3::ZERO, bad);
        assert!(matches!(res, Err(WorldError::ClearanceOrdering { .. })));
    }

    #[test]
    fn empty_world_is_all_free() {
        let w = OccupancyWorld::build(Vec::new(), 0.25, [8, 8, 4], Vec3::ZERO, clearances())
            .unwrap();
        assert_eq!(w.occupied_count(ClearanceLevel::Rbk), 0);
        assert_eq!(w.occupied_count(ClearanceLevel::Elas), 0);
        assert!(w.nn_search(&Vec3::new(1.0, 1.0, 0.5)).is_none());
        assert_eq!(w.clearance(&Vec3::ZERO), f64::INFINITY);
    }

    #[test]
    fn single_point_inflates_to_a_ball() {
        let c = clearances();
        let p = Vec3::new(1.0, 1.0, 0.5);
        let w = OccupancyWorld::build(vec![p], 0.25, [8, 8, 4], Vec3::ZERO, c).unwrap();
        for z in 0..4i32 {
            for y in 0..8i32 {
                for x in 0..8i32 {
                    let cell = [x, y, z];
                    let center = w.center(&cell);
                    let d = center.dist(&p);
                    let contains = w.cell_of(&p) == Some(cell);
                    assert_eq!(
                        w.occupied(&cell, ClearanceLevel::Rbk),
                        d <= c.c_rbk || contains,
                        "cell {cell:?} dist {d}"
                    );
                    assert_eq!(
                        w.occupied(&cell, ClearanceLevel::Elas),
                        d <= c.c_elas || contains,
                        "cell {cell:?} dist {d}"
                    );
                }
            }
        }
    }

    #[test]
    fn nested_occupancy_on_random_map() {
        let mut rng = Rng::new(11);
        let pts: Vec<Vec3> = (0..40)
            .map(|_| Vec3::new(rng.range_f64(0.0, 2.0), rng.range_f64(0.0, 2.0), rng.range_f64(0.0, 1.0)))
            .collect();
        let w = OccupancyWorld::build(pts, 0.25, [8, 8, 4], Vec3::ZERO, clearances()).unwrap();
        for i in 0..w.cell_count() {
            let elas = w.occ_elas.get(i);
            let rbk = w.occ_rbk.get(i);
            let raw = w.raw.get(i);
            assert!(!raw || elas, "raw occupied must be elas occupied");
            assert!(!elas || rbk, "elas occupied must be rbk occupied");
        }
    }

    #[test]
    fn nearest_matches_spec_examples() {
        let c = clearances();
        let w = OccupancyWorld::build(vec![Vec3::ZERO], 0.5, [8, 8, 4], Vec3::ZERO, c).unwrap();
        let (p, d) = w.nn_search(&Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(p, Vec3::ZERO);
        assert!((d - 1.0).abs() < 1e-12);

        let w2 = OccupancyWorld::build(
            vec![Vec3::ZERO, Vec3::new(5.0, 0.0, 0.0)],
            0.5,
            [12, 8, 4],
            Vec3::ZERO,
            c,
        )
        .unwrap();
        let (p2, d2) = w2.nn_search(&Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(p2, Vec3::ZERO);
        assert!((d2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = Rng::new(99);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| {
                Vec3::new(
                    rng.range_f64(0.0, 10.0),
                    rng.range_f64(0.0, 10.0),
                    rng.range_f64(0.0, 3.0),
                )
            })
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..100 {
            let q = Vec3::new(
                rng.range_f64(-1.0, 11.0),
                rng.range_f64(-1.0, 11.0),
                rng.range_f64(-1.0, 4.0),
            );
            let (_, d) = tree.nearest(&q).unwrap();
            let brute = pts.iter().map(|p| p.dist(&q)).fold(f64::INFINITY, f64::min);
            assert!((d - brute).abs() < 1e-12, "kd {d} vs scan {brute}");
        }
    }

    #[test]
    fn radius_query_matches_linear_scan() {
        let mut rng = Rng::new(5);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.range_f64(0.0, 5.0),
                    rng.range_f64(0.0, 5.0),
                    rng.range_f64(0.0, 5.0),
                )
            })
            .collect();
        let tree = KdTree::build(&pts);
        let q = Vec3::new(2.5, 2.5, 2.5);
        let r = 1.25;
        let mut found = 0usize;
        tree.within_radius(&q, r, &mut |_| found += 1);
        let brute = pts.iter().filter(|p| p.dist(&q) <= r).count();
        assert_eq!(found, brute);
    }

    #[test]
    fn pillar_count_follows_density() {
        let params = PillarMapParams {
            extent: [10.0, 10.0, 3.0],
            density: 0.25,
            radius_min: 0.2,
            radius_max: 0.2,
            resolution: 0.5,
            keep_clear: Vec::new(),
        };
        let pts = generate_random_pillars(3, &params);
        // 25 pillars of radius 0.2 at 0.5 m resolution: each rasterizes to at
        // least one column of extent/res = 6 points.
        assert!(pts.len() >= 25 * 6);
        let zero = PillarMapParams { density: 0.0, ..params.clone() };
        assert!(generate_random_pillars(3, &zero).is_empty());
        let again = generate_random_pillars(3, &params);
        assert_eq!(pts, again);
    }

    #[test]
    fn keep_clear_excludes_disks() {
        let guard = (Vec3::new(5.0, 5.0, 0.0), 2.0);
        let params = PillarMapParams {
            extent: [10.0, 10.0, 1.0],
            density: 1.0,
            radius_min: 0.01,
            radius_max: 0.01,
            resolution: 0.5,
            keep_clear: vec![guard],
        };
        let pts = generate_random_pillars(8, &params);
        for p in &pts {
            let dx = p.x - guard.0.x;
            let dy = p.y - guard.0.y;
            // Pillar centers are excluded; rasterized points may extend one
            // radius beyond.
            assert!(dx * dx + dy * dy >= (guard.1 - 0.51) * (guard.1 - 0.51));
        }
    }

    #[test]
    fn noise_thresholds_behave_monotonically() {
        let mut prev = usize::MAX;
        for &thr in &[0.3, 0.45, 0.6, 0.75] {
            let params = NoiseMapParams::new([16, 16, 8], 0.25, thr);
            let n = generate_noise_map(7, &params).len();
            assert!(n <= prev, "occupancy should not grow with threshold");
            prev = n;
        }
        let empty = NoiseMapParams::new([16, 16, 8], 0.25, 0.999);
        assert!(generate_noise_map(7, &empty).is_empty());
        let full = NoiseMapParams::new([16, 16, 8], 0.25, 0.001);
        assert_eq!(generate_noise_map(7, &full).len(), 16 * 16 * 8);
    }

    #[test]
    fn noise_map_is_deterministic() {
        let params = NoiseMapParams::new([12, 12, 6], 0.25, 0.6);
        assert_eq!(generate_noise_map(21, &params), generate_noise_map(21, &params));
    }

    #[test]
    fn connectivity_offsets() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
        assert_eq!(Connectivity::Four.offsets().len(), 4);
        assert_eq!(Connectivity::Eight.offsets().len(), 8);
    }

    #[test]
    fn grid_graph_d_max() {
        let w = OccupancyWorld::build(Vec::new(), 1.0 / 6.0, [6, 6, 6], Vec3::ZERO, clearances())
            .unwrap();
        let g = GridGraph::new(&w, Connectivity::TwentySix, ClearanceLevel::Rbk);
        assert!((g.d_max() - flt::sqrt(3.0) / 6.0).abs() < 1e-12);
    }
}
