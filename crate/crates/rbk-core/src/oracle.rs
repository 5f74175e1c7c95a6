//! Ground-truth and baseline planners for optimality studies.
//!
//! `full_span_search` runs an exact A* over span states (the last `k-1`
//! control-point cells), which is optimal for the search objective but blows
//! up as `M^{k-1}`; it is only meant for small study grids. The position-only
//! A* plus direct B-spline parameterization reproduces the naive two-step
//! pipeline the kinodynamic search replaces.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::linalg::Vec3;
use crate::rng::Rng;
use crate::search::heuristic;
use crate::spline::{
    check_span_feasible, span_control_cost, trajectory_cost, BasisTables, UniformBsplineSpec,
};
use crate::world::{Cell, Clearances, ClearanceLevel, Connectivity, GridGraph, OccupancyWorld};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// Estimated span-state count exceeds the configured budget.
    StateBudget { estimate: f64, budget: f64 },
    /// Span-state keys do not fit the packed representation.
    GridTooLarge,
    /// Start or goal control points must lie exactly on cell centers.
    NotOnGrid { point: Vec3 },
    /// Start or goal blocked or outside the grid.
    QueryNotFree { point: Vec3 },
    NoPath,
    BadSpanLength { expected: usize, got: usize },
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::StateBudget { estimate, budget } => {
                write!(f, "estimated {estimate:.3e} span states exceed budget {budget:.3e}")
            }
            OracleError::GridTooLarge => write!(f, "span-state key does not fit 128 bits"),
            OracleError::NotOnGrid { point } => {
                write!(f, "point ({}, {}, {}) is not a cell center", point.x, point.y, point.z)
            }
            OracleError::QueryNotFree { point } => {
                write!(f, "point ({}, {}, {}) is not free", point.x, point.y, point.z)
            }
            OracleError::NoPath => write!(f, "no path"),
            OracleError::BadSpanLength { expected, got } => {
                write!(f, "span has {got} points, expected {expected}")
            }
        }
    }
}

impl core::error::Error for OracleError {}

/// Limits and switches for the exact search.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    /// Refuse instances whose estimated state count exceeds this.
    pub max_states_estimate: f64,
    /// `false` degrades A* to Dijkstra for audit runs.
    pub use_heuristic: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_states_estimate: 4e6, use_heuristic: true }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub points: Vec<Vec3>,
    pub cost: f64,
    pub expansions: usize,
}

struct SpanHeapEntry {
    f: f64,
    g: f64,
    key: u128,
}

impl PartialEq for SpanHeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for SpanHeapEntry {}
impl PartialOrd for SpanHeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SpanHeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.key.cmp(&self.key))
    }
}

#[derive(Debug, Clone, Copy)]
struct SpanRec {
    g: f64,
    parent: u128,
    closed: bool,
}

const NO_PARENT: u128 = u128::MAX;
/// Key of the virtual goal node reached by the splice edge.
const GOAL_KEY: u128 = u128::MAX - 1;

fn cell_center_exact(world: &OccupancyWorld, p: &Vec3) -> Result<Cell, OracleError> {
    let cell = world.cell_of(p).ok_or(OracleError::QueryNotFree { point: *p })?;
    if world.center(&cell).dist(p) > 1e-9 {
        return Err(OracleError::NotOnGrid { point: *p });
    }
    Ok(cell)
}

/// Exact minimum-cost search over span states.
///
/// Optimal over all sequences of neighboring, dynamically feasible spans
/// whose interior points sit on free cell centers and that terminate with
/// the same goal-splice rule as the greedy search, so its cost lower-bounds
/// the greedy result on every instance.
pub fn full_span_search(
    tables: &BasisTables,
    spec: &UniformBsplineSpec,
    graph: &GridGraph<'_>,
    query: &crate::search::SearchQuery,
    limits: &OracleLimits,
) -> Result<OracleResult, OracleError> {
    let k = tables.k();
    if query.init.len() != k {
        return Err(OracleError::BadSpanLength { expected: k, got: query.init.len() });
    }
    if query.goal.len() != k {
        return Err(OracleError::BadSpanLength { expected: k, got: query.goal.len() });
    }
    let world = graph.world;
    let offsets = graph.connectivity.offsets();
    let m_connect = offsets.len() as f64;
    let estimate = world.cell_count() as f64 * libm::pow(m_connect, (k - 2) as f64);
    if estimate > limits.max_states_estimate {
        return Err(OracleError::StateBudget { estimate, budget: limits.max_states_estimate });
    }
    let bits = usize::BITS - (world.cell_count().max(2) - 1).leading_zeros();
    if bits as usize * (k - 1) > 120 {
        return Err(OracleError::GridTooLarge);
    }
    let mask = (1u128 << bits) - 1;

    let mut init_cells = Vec::with_capacity(k);
    for p in &query.init {
        let cell = cell_center_exact(world, p)?;
        if !graph.free(&cell) {
            return Err(OracleError::QueryNotFree { point: *p });
        }
        init_cells.push(cell);
    }
    let goal_cell = cell_center_exact(world, &query.goal[0])?;
    for p in &query.goal {
        let cell = cell_center_exact(world, p)?;
        if !graph.free(&cell) {
            return Err(OracleError::QueryNotFree { point: *p });
        }
    }

    let pack = |cells: &[Cell]| -> u128 {
        let mut key = 0u128;
        for c in cells {
            key = key << bits | world.index(c) as u128;
        }
        key
    };
    let unpack = |key: u128| -> Vec<Cell> {
        let mut cells = vec![[0i32; 3]; k - 1];
        let dims = world.dims();
        let mut key = key;
        for i in (0..k - 1).rev() {
            let idx = (key & mask) as usize;
            key >>= bits;
            cells[i] = [
                (idx % dims[0]) as i32,
                ((idx / dims[0]) % dims[1]) as i32,
                (idx / (dims[0] * dims[1])) as i32,
            ];
        }
        cells
    };

    let init_key = pack(&init_cells[1..]);
    let g0 = span_control_cost(tables, spec, &query.init).expect("span length checked")
        + query.lambda * k as f64 * tables.dt();
    let h = |newest: &Cell| -> f64 {
        if limits.use_heuristic {
            heuristic(&world.center(newest), &query.goal[0], query.lambda, query.v_max)
        } else {
            0.0
        }
    };

    let mut recs: BTreeMap<u128, SpanRec> = BTreeMap::new();
    recs.insert(init_key, SpanRec { g: g0, parent: NO_PARENT, closed: false });
    let mut heap = BinaryHeap::new();
    heap.push(SpanHeapEntry { f: g0 + h(&init_cells[k - 1]), g: g0, key: init_key });

    // Reconstruct the appended-cell list of a state by walking parents.
    let assemble = |recs: &BTreeMap<u128, SpanRec>, key: u128| -> Vec<Vec3> {
        let mut appended_rev: Vec<Cell> = Vec::new();
        let mut cur = key;
        while cur != init_key {
            let cells = unpack(cur);
            appended_rev.push(cells[k - 2]);
            cur = recs[&cur].parent;
        }
        let mut points = query.init.clone();
        if appended_rev.is_empty() {
            if points[k - 1].dist_sq(&query.goal[0]) < 1e-24 {
                points.extend_from_slice(&query.goal[1..]);
            } else {
                points.extend_from_slice(&query.goal);
            }
        } else {
            appended_rev.remove(0); // terminal cell replaced by exact goal point
            for c in appended_rev.iter().rev() {
                points.push(world.center(c));
            }
            points.extend_from_slice(&query.goal);
        }
        points
    };

    let mut expansions = 0usize;
    let mut span_buf = vec![Vec3::ZERO; k];
    while let Some(entry) = heap.pop() {
        if entry.key == GOAL_KEY {
            let parent = recs[&GOAL_KEY].parent;
            let points = assemble(&recs, parent);
            let cost = trajectory_cost(tables, spec, &points, query.lambda).expect("len >= k");
            return Ok(OracleResult { points, cost, expansions });
        }
        {
            let rec = recs[&entry.key];
            if rec.closed || entry.g > rec.g {
                continue;
            }
            recs.get_mut(&entry.key).expect("present").closed = true;
        }
        expansions += 1;
        let cells = unpack(entry.key);
        let newest = cells[k - 2];

        if newest == goal_cell {
            // Virtual splice edge: cost of the full assembled trajectory
            // minus the accumulated g, gated on splice feasibility.
            let points = assemble(&recs, entry.key);
            let mut ok = true;
            let splice_start = points.len().saturating_sub(2 * k - 1);
            for span in points[splice_start..].windows(k) {
                if !check_span_feasible(tables, spec, span).expect("window k").feasible {
                    ok = false;
                    break;
                }
            }
            if ok {
                let total = trajectory_cost(tables, spec, &points, query.lambda).expect("len");
                let better = match recs.get(&GOAL_KEY) {
                    Some(r) => total < r.g,
                    None => true,
                };
                if better {
                    recs.insert(GOAL_KEY, SpanRec { g: total, parent: entry.key, closed: false });
                    heap.push(SpanHeapEntry { f: total, g: total, key: GOAL_KEY });
                }
            }
        }

        for (i, c) in cells.iter().enumerate() {
            span_buf[i] = world.center(c);
        }
        for off in &offsets {
            let nbr = [newest[0] + off[0], newest[1] + off[1], newest[2] + off[2]];
            if !graph.free(&nbr) {
                continue;
            }
            span_buf[k - 1] = world.center(&nbr);
            if !check_span_feasible(tables, spec, &span_buf).expect("len k").feasible {
                continue;
            }
            let step = span_control_cost(tables, spec, &span_buf).expect("len k")
                + query.lambda * tables.dt();
            let g_new = entry.g + step;
            let key_new = (entry.key << bits | world.index(&nbr) as u128)
                & ((1u128 << (bits as usize * (k - 1))) - 1);
            let insert = match recs.get(&key_new) {
                Some(r) => !r.closed && g_new < r.g,
                None => true,
            };
            if insert {
                recs.insert(key_new, SpanRec { g: g_new, parent: entry.key, closed: false });
                heap.push(SpanHeapEntry {
                    f: g_new + h(&nbr),
                    g: g_new,
                    key: key_new,
                });
            }
        }
    }
    Err(OracleError::NoPath)
}

// ---------------------------------------------------------------------------
// Position-only baseline.
// ---------------------------------------------------------------------------

struct CellHeapEntry {
    f: f64,
    g: f64,
    cell_idx: u32,
}

impl PartialEq for CellHeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for CellHeapEntry {}
impl PartialOrd for CellHeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CellHeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.cell_idx.cmp(&self.cell_idx))
    }
}

/// Shortest path on the grid under Euclidean edge lengths. A* with the
/// straight-line heuristic when `use_heuristic`, plain Dijkstra otherwise.
pub fn astar_shortest_path(
    graph: &GridGraph<'_>,
    start: &Cell,
    goal: &Cell,
    use_heuristic: bool,
) -> Result<Vec<Cell>, OracleError> {
    let world = graph.world;
    if !graph.free(start) {
        return Err(OracleError::QueryNotFree { point: world.center(start) });
    }
    if !graph.free(goal) {
        return Err(OracleError::QueryNotFree { point: world.center(goal) });
    }
    let offsets = graph.connectivity.offsets();
    let res = world.resolution();
    let step_len: Vec<f64> = offsets
        .iter()
        .map(|o| {
            let d2 = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64;
            crate::linalg::flt::sqrt(d2) * res
        })
        .collect();
    let goal_center = world.center(goal);
    let h = |cell: &Cell| -> f64 {
        if use_heuristic {
            world.center(cell).dist(&goal_center)
        } else {
            0.0
        }
    };

    #[derive(Clone, Copy)]
    struct Rec {
        g: f64,
        parent: i64,
        closed: bool,
        seen: bool,
    }
    let mut recs = vec![Rec { g: 0.0, parent: -1, closed: false, seen: false }; world.cell_count()];
    let start_idx = world.index(start);
    recs[start_idx] = Rec { g: 0.0, parent: -1, closed: false, seen: true };
    let mut heap = BinaryHeap::new();
    heap.push(CellHeapEntry { f: h(start), g: 0.0, cell_idx: start_idx as u32 });
    let dims = world.dims();
    let cell_from = |idx: usize| -> Cell {
        [
            (idx % dims[0]) as i32,
            ((idx / dims[0]) % dims[1]) as i32,
            (idx / (dims[0] * dims[1])) as i32,
        ]
    };

    while let Some(entry) = heap.pop() {
        let idx = entry.cell_idx as usize;
        if recs[idx].closed || entry.g > recs[idx].g {
            continue;
        }
        recs[idx].closed = true;
        let cell = cell_from(idx);
        if cell == *goal {
            let mut path = Vec::new();
            let mut cur = idx as i64;
            while cur >= 0 {
                path.push(cell_from(cur as usize));
                cur = recs[cur as usize].parent;
            }
            path.reverse();
            return Ok(path);
        }
        for (oi, off) in offsets.iter().enumerate() {
            let nbr = [cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]];
            if !graph.free(&nbr) {
                continue;
            }
            let nbr_idx = world.index(&nbr);
            if recs[nbr_idx].closed {
                continue;
            }
            let g_new = entry.g + step_len[oi];
            if recs[nbr_idx].seen && g_new >= recs[nbr_idx].g {
                continue;
            }
            recs[nbr_idx] = Rec { g: g_new, parent: idx as i64, closed: false, seen: true };
            heap.push(CellHeapEntry {
                f: g_new + h(&nbr),
                g: g_new,
                cell_idx: nbr_idx as u32,
            });
        }
    }
    Err(OracleError::NoPath)
}

/// Euclidean length of a cell path.
pub fn path_length(world: &OccupancyWorld, path: &[Cell]) -> f64 {
    path.windows(2).map(|w| world.center(&w[0]).dist(&world.center(&w[1]))).sum()
}

/// A position-only path used directly as control points, plus cost and a
/// per-span feasibility report.
#[derive(Debug, Clone)]
pub struct ParameterizedPath {
    pub points: Vec<Vec3>,
    pub cost: f64,
    /// Indices (into the span list) that violate the feasibility condition.
    pub infeasible_spans: Vec<usize>,
}

impl ParameterizedPath {
    pub fn feasible(&self) -> bool {
        self.infeasible_spans.is_empty()
    }
}

/// Append a shortest-path cell sequence to the start span as raw control
/// points, terminate with the goal span, and report the resulting objective
/// and any dynamically infeasible spans. Violations are reported, not fixed.
pub fn parameterize_path_as_bspline(
    tables: &BasisTables,
    spec: &UniformBsplineSpec,
    world: &OccupancyWorld,
    path: &[Cell],
    query: &crate::search::SearchQuery,
) -> Result<ParameterizedPath, OracleError> {
    let k = tables.k();
    if query.init.len() != k || query.goal.len() != k {
        return Err(OracleError::BadSpanLength {
            expected: k,
            got: query.init.len().min(query.goal.len()),
        });
    }
    if path.is_empty() {
        return Err(OracleError::NoPath);
    }
    let mut interior: Vec<Vec3> = path.iter().map(|c| world.center(c)).collect();
    // The path starts at the cell of the start span's newest point.
    if interior[0].dist_sq(&query.init[k - 1]) < 1e-18 {
        interior.remove(0);
    }
    let mut points = query.init.clone();
    if interior.is_empty() {
        if points[k - 1].dist_sq(&query.goal[0]) < 1e-24 {
            points.extend_from_slice(&query.goal[1..]);
        } else {
            points.extend_from_slice(&query.goal);
        }
    } else {
        interior.pop(); // path's last cell is the goal cell, replaced exactly
        points.extend_from_slice(&interior);
        points.extend_from_slice(&query.goal);
    }
    let cost = trajectory_cost(tables, spec, &points, query.lambda).expect("len >= k");
    let mut infeasible = Vec::new();
    for (i, span) in points.windows(k).enumerate() {
        if !check_span_feasible(tables, spec, span).expect("len k").feasible {
            infeasible.push(i);
        }
    }
    Ok(ParameterizedPath { points, cost, infeasible_spans: infeasible })
}

// ---------------------------------------------------------------------------
// Monte-Carlo study instances.
// ---------------------------------------------------------------------------

/// Configuration of the small-grid optimality study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub dims: [usize; 3],
    pub resolution: f64,
    pub connectivity: Connectivity,
    pub obstacle_cells: usize,
    /// Knot step used by the study spline (coarser than the flight default so
    /// static goal splices stay feasible on this grid).
    pub dt: f64,
    pub v_max: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            dims: [14, 14, 1],
            resolution: 0.5,
            connectivity: Connectivity::Eight,
            obstacle_cells: 16,
            dt: 1.0,
            v_max: 3.5,
        }
    }
}

impl StudyConfig {
    pub fn clearances(&self) -> Clearances {
        // Tight enough that an obstacle point blocks exactly its own cell.
        Clearances {
            c_rbk: 0.55 * self.resolution,
            c_elas: 0.35 * self.resolution,
            robot_radius: 0.15 * self.resolution,
        }
    }
}

/// One random study instance: obstacles, a random feasible start span, and a
/// static goal span.
pub struct StudyInstance {
    pub world: OccupancyWorld,
    pub query: crate::search::SearchQuery,
}

/// Deterministically generate a study instance. Start location, start span
/// pattern, obstacle cells and goal location are all drawn from the seed.
pub fn random_study_instance(
    seed: u64,
    cfg: &StudyConfig,
    tables: &BasisTables,
    spec: &UniformBsplineSpec,
) -> StudyInstance {
    let k = tables.k();
    let mut rng = Rng::new(seed);
    let dims = cfg.dims;
    let cell = |rng: &mut Rng| -> Cell {
        [
            rng.below_usize(dims[0]) as i32,
            rng.below_usize(dims[1]) as i32,
            rng.below_usize(dims[2]) as i32,
        ]
    };
    loop {
        let start = cell(&mut rng);
        let goal = cell(&mut rng);
        let min_sep = 0.4 * (dims[0].min(dims[1]) as f64);
        let sep = {
            let dx = (start[0] - goal[0]) as f64;
            let dy = (start[1] - goal[1]) as f64;
            let dz = (start[2] - goal[2]) as f64;
            crate::linalg::flt::sqrt(dx * dx + dy * dy + dz * dz)
        };
        if sep < min_sep {
            continue;
        }
        // Obstacles anywhere except the start/goal cells and their ring.
        let mut obstacles: Vec<Cell> = Vec::new();
        let mut guard = 0;
        while obstacles.len() < cfg.obstacle_cells && guard < 1000 {
            guard += 1;
            let c = cell(&mut rng);
            let near = |a: &Cell, b: &Cell| {
                (a[0] - b[0]).abs() <= 1 && (a[1] - b[1]).abs() <= 1 && (a[2] - b[2]).abs() <= 1
            };
            if near(&c, &start) || near(&c, &goal) || obstacles.contains(&c) {
                continue;
            }
            obstacles.push(c);
        }
        let origin = Vec3::ZERO;
        let centers: Vec<Vec3> = obstacles
            .iter()
            .map(|c| {
                Vec3::new(
                    (c[0] as f64 + 0.5) * cfg.resolution,
                    (c[1] as f64 + 0.5) * cfg.resolution,
                    (c[2] as f64 + 0.5) * cfg.resolution,
                )
            })
            .collect();
        let world =
            OccupancyWorld::build(centers, cfg.resolution, dims, origin, cfg.clearances())
                .expect("valid study clearances");
        let graph = GridGraph::new(&world, cfg.connectivity, ClearanceLevel::Rbk);
        if !graph.free(&start) || !graph.free(&goal) {
            continue;
        }

        // Random feasible start-span pattern: walk k-1 steps backward from
        // the start cell among {stay} ∪ neighbor offsets.
        let mut offsets = cfg.connectivity.offsets();
        offsets.push([0, 0, 0]);
        let mut pattern_ok = false;
        let mut init = vec![Vec3::ZERO; k];
        for _attempt in 0..50 {
            let mut cells = vec![start; k];
            let mut ok = true;
            for i in (0..k - 1).rev() {
                let off = offsets[rng.below_usize(offsets.len())];
                let c = [
                    cells[i + 1][0] - off[0],
                    cells[i + 1][1] - off[1],
                    cells[i + 1][2] - off[2],
                ];
                if !graph.free(&c) {
                    ok = false;
                    break;
                }
                cells[i] = c;
            }
            if !ok {
                continue;
            }
            for (i, c) in cells.iter().enumerate() {
                init[i] = world.center(c);
            }
            if check_span_feasible(tables, spec, &init).expect("len k").feasible {
                pattern_ok = true;
                break;
            }
        }
        if !pattern_ok {
            continue;
        }
        let goal_span = vec![world.center(&goal); k];
        let lambda = crate::search::auto_lambda(tables, spec, &init, &goal_span[0], graph.d_max());
        let query = crate::search::SearchQuery {
            init,
            goal: goal_span,
            lambda,
            v_max: cfg.v_max,
            expansion_budget: 0,
        };
        return StudyInstance { world, query };
    }
}
