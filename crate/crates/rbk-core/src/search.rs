//! Greedy B-spline kinodynamic (RBK) search.
//!
//! The search walks a position grid exactly like A*, but each node carries
//! enough predecessor context to reconstruct the span of the `k` most recent
//! control points. Expanding to a neighbor cell forms a new span whose
//! closed-form control cost extends the accumulated objective and whose
//! linear feasibility condition gates the expansion. A grid cell is
//! finalized with its first-popped span; that greedy choice is what keeps
//! the complexity at position-search level and is also the source of
//! suboptimality relative to the exact span-graph search in [`crate::oracle`].

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::linalg::Vec3;
use crate::spline::{
    check_span_feasible, span_control_cost, trajectory_cost, BasisTables, UniformBsplineSpec,
};
use crate::world::{Cell, GridGraph};

#[derive(Debug, Clone, PartialEq)]
pub enum SearchError {
    /// A start or goal control point lies outside the grid or in an occupied
    /// cell of the search configuration space.
    QueryNotFree { point: Vec3 },
    /// The initial span violates the configured derivative bounds.
    InitInfeasible,
    /// Open set exhausted without reaching the goal.
    NoPath { expansions: usize },
    /// Node-expansion budget exceeded.
    BudgetExceeded { expansions: usize },
    /// Start or goal span has the wrong number of points.
    BadSpanLength { expected: usize, got: usize },
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::QueryNotFree { point } => {
                write!(f, "query point ({}, {}, {}) is not in free space", point.x, point.y, point.z)
            }
            SearchError::InitInfeasible => write!(f, "initial span violates derivative bounds"),
            SearchError::NoPath { expansions } => {
                write!(f, "open set exhausted after {expansions} expansions")
            }
            SearchError::BudgetExceeded { expansions } => {
                write!(f, "expansion budget exceeded at {expansions}")
            }
            SearchError::BadSpanLength { expected, got } => {
                write!(f, "span has {got} points, expected {expected}")
            }
        }
    }
}

impl core::error::Error for SearchError {}

/// One kinodynamic search request.
#[derive(Debug, Clone)]
pub struct SearchQuery {
    /// First `k` control points (the current short trajectory), oldest first.
    pub init: Vec<Vec3>,
    /// Last `k` control points; the search terminates when the newest point
    /// reaches the cell of `goal[0]` and then appends `goal[1..]`.
    pub goal: Vec<Vec3>,
    /// Weight of the total time cost.
    pub lambda: f64,
    /// Euclidean speed bound used by the admissible heuristic, m/s.
    pub v_max: f64,
    /// Expansion budget; `0` means `10 * cell count`.
    pub expansion_budget: usize,
}

/// Successful search result.
#[derive(Debug, Clone)]
pub struct RbkTrajectory {
    /// Start span ++ searched interior ++ goal span, oldest first.
    pub points: Vec<Vec3>,
    /// Total objective of `points`: span control costs plus time cost.
    pub cost: f64,
    /// Whether the hybrid spans created by appending the goal span also pass
    /// the feasibility check. The searched prefix always does; an infeasible
    /// splice is reported here for the back-end to smooth rather than hidden.
    pub goal_splice_feasible: bool,
    pub expansions: usize,
}

/// Admissible heuristic: remaining time lower bound scaled by `lambda`.
pub fn heuristic(p: &Vec3, goal: &Vec3, lambda: f64, v_max: f64) -> f64 {
    debug_assert!(v_max > 0.0);
    lambda * p.dist(goal) / v_max
}

/// Termination test: the newest control point of the current span has
/// reached the cell of the goal span's first control point.
pub fn near_end(current_newest: &Cell, goal_first: &Cell) -> bool {
    current_newest == goal_first
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Parent {
    /// Index into the start-span seed chain.
    Seed(usize),
    /// Finalized predecessor cell.
    Cell(u32),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Unseen,
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy)]
struct CellRecord {
    g: f64,
    parent: Parent,
    state: NodeState,
}

struct HeapEntry {
    f: f64,
    g: f64,
    cell_idx: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for lowest f, then lowest g, then
        // lowest cell index, which makes tie-breaking deterministic.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.cell_idx.cmp(&self.cell_idx))
    }
}

/// Span retrieval and expansion state shared by the search loop.
struct Chain<'a> {
    graph: &'a GridGraph<'a>,
    seed: &'a [Vec3],
    /// Cell of the seed's newest point; its node position is the true seed
    /// point, which may sit off the cell center (warm replan starts).
    start_idx: u32,
    records: Vec<CellRecord>,
}

impl<'a> Chain<'a> {
    fn position_of(&self, parent: Parent) -> Vec3 {
        match parent {
            Parent::Seed(i) => self.seed[i],
            Parent::Cell(idx) => self.cell_position(idx),
            Parent::None => unreachable!("chain shorter than k-1 predecessors"),
        }
    }

    fn cell_position(&self, idx: u32) -> Vec3 {
        if idx == self.start_idx {
            self.seed[self.seed.len() - 1]
        } else {
            let cell = self.cell_from_index(idx);
            self.graph.world.center(&cell)
        }
    }

    fn cell_from_index(&self, idx: u32) -> Cell {
        let dims = self.graph.world.dims();
        let idx = idx as usize;
        let x = idx % dims[0];
        let y = (idx / dims[0]) % dims[1];
        let z = idx / (dims[0] * dims[1]);
        [x as i32, y as i32, z as i32]
    }

    fn parent_of(&self, parent: Parent) -> Parent {
        match parent {
            Parent::Seed(0) | Parent::None => Parent::None,
            Parent::Seed(i) => Parent::Seed(i - 1),
            Parent::Cell(idx) => self.records[idx as usize].parent,
        }
    }

    /// Stack the `k-1` predecessors of `newest` (a parent link) with the
    /// position `newest_pos`, oldest first.
    fn retrieve_span(&self, newest_parent: Parent, newest_pos: Vec3, k: usize) -> Vec<Vec3> {
        let mut span = vec![Vec3::ZERO; k];
        span[k - 1] = newest_pos;
        let mut link = newest_parent;
        for i in (0..k - 1).rev() {
            span[i] = self.position_of(link);
            link = self.parent_of(link);
        }
        span
    }
}

/// Run the RBK search over the given graph (free cells at the search-level
/// clearance).
pub fn rbk_search(
    tables: &BasisTables,
    spec: &UniformBsplineSpec,
    graph: &GridGraph<'_>,
    query: &SearchQuery,
) -> Result<RbkTrajectory, SearchError> {
    let k = tables.k();
    if query.init.len() != k {
        return Err(SearchError::BadSpanLength { expected: k, got: query.init.len() });
    }
    if query.goal.len() != k {
        return Err(SearchError::BadSpanLength { expected: k, got: query.goal.len() });
    }
    let world = graph.world;
    for p in query.init.iter().chain(query.goal.iter()) {
        let cell = world.cell_of(p).ok_or(SearchError::QueryNotFree { point: *p })?;
        if !graph.free(&cell) {
            return Err(SearchError::QueryNotFree { point: *p });
        }
    }
    // Warm starts come back through the optimizer, which enforces bounds to
    // a finite tolerance; allow the same slack here.
    let init_report = check_span_feasible(tables, spec, &query.init).expect("span length checked");
    if init_report.margins.iter().any(|m| m.margin < -1e-6) {
        return Err(SearchError::InitInfeasible);
    }

    let goal_first_cell = world.cell_of(&query.goal[0]).expect("checked above");
    let goal_first_center = query.goal[0];
    let budget = if query.expansion_budget == 0 {
        10 * world.cell_count()
    } else {
        query.expansion_budget
    };

    let start_cell = world.cell_of(&query.init[k - 1]).expect("checked above");
    let start_idx = world.index(&start_cell) as u32;
    let mut chain = Chain {
        graph,
        seed: &query.init,
        start_idx,
        records: vec![
            CellRecord { g: 0.0, parent: Parent::None, state: NodeState::Unseen };
            world.cell_count()
        ],
    };
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let offsets = graph.connectivity.offsets();

    // Seed: the newest start-span point enters the open set carrying the
    // start span's own cost.
    let g0 = span_control_cost(tables, spec, &query.init).expect("span length checked")
        + query.lambda * k as f64 * tables.dt();
    chain.records[start_idx as usize] = CellRecord {
        g: g0,
        parent: Parent::Seed(k - 2),
        state: NodeState::Open,
    };
    heap.push(HeapEntry {
        f: g0 + heuristic(&query.init[k - 1], &goal_first_center, query.lambda, query.v_max),
        g: g0,
        cell_idx: start_idx,
    });

    let mut expansions = 0usize;
    let mut span_buf = vec![Vec3::ZERO; k];

    while let Some(entry) = heap.pop() {
        let rec = chain.records[entry.cell_idx as usize];
        if rec.state == NodeState::Closed || entry.g > rec.g {
            continue; // stale heap entry
        }
        chain.records[entry.cell_idx as usize].state = NodeState::Closed;
        expansions += 1;
        if expansions > budget {
            return Err(SearchError::BudgetExceeded { expansions });
        }

        let cur_cell = chain.cell_from_index(entry.cell_idx);
        let cur_pos = chain.cell_position(entry.cell_idx);
        let cur_span = chain.retrieve_span(rec.parent, cur_pos, k);

        if near_end(&cur_cell, &goal_first_cell) {
            return Ok(finish(tables, spec, query, &chain, entry.cell_idx, expansions));
        }

        for off in &offsets {
            let nbr = [cur_cell[0] + off[0], cur_cell[1] + off[1], cur_cell[2] + off[2]];
            if !graph.free(&nbr) {
                continue;
            }
            let nbr_idx = world.index(&nbr) as u32;
            let nbr_rec = &chain.records[nbr_idx as usize];
            if nbr_rec.state == NodeState::Closed {
                continue;
            }
            let nbr_pos = world.center(&nbr);
            span_buf[..k - 1].copy_from_slice(&cur_span[1..]);
            span_buf[k - 1] = nbr_pos;
            if !check_span_feasible(tables, spec, &span_buf)
                .expect("span length fixed")
                .feasible
            {
                continue;
            }
            let step = span_control_cost(tables, spec, &span_buf).expect("span length fixed")
                + query.lambda * tables.dt();
            let g_new = entry.g + step;
            let known = nbr_rec.state == NodeState::Open;
            if known && g_new >= nbr_rec.g {
                continue;
            }
            chain.records[nbr_idx as usize] = CellRecord {
                g: g_new,
                parent: Parent::Cell(entry.cell_idx),
                state: NodeState::Open,
            };
            heap.push(HeapEntry {
                f: g_new + heuristic(&nbr_pos, &goal_first_center, query.lambda, query.v_max),
                g: g_new,
                cell_idx: nbr_idx,
            });
        }
    }
    Err(SearchError::NoPath { expansions })
}

/// Assemble the final trajectory: walk the chain back to the seed, append
/// the goal span remainder, re-check the hybrid spans, and recompute the
/// total cost from scratch.
fn finish(
    tables: &BasisTables,
    spec: &UniformBsplineSpec,
    query: &SearchQuery,
    chain: &Chain<'_>,
    terminal_idx: u32,
    expansions: usize,
) -> RbkTrajectory {
    let k = tables.k();
    let mut interior_rev: Vec<Vec3> = Vec::new();
    let mut link = Parent::Cell(terminal_idx);
    loop {
        match link {
            Parent::Cell(idx) => {
                interior_rev.push(chain.cell_position(idx));
                link = chain.records[idx as usize].parent;
            }
            Parent::Seed(_) | Parent::None => break,
        }
    }
    // The deepest chain entry is the seed's newest point; the start span
    // already carries it.
    let mut interior: Vec<Vec3> = interior_rev.into_iter().rev().skip(1).collect();
    let mut points: Vec<Vec3> = query.init.clone();
    if interior.is_empty() {
        // Terminated on the seed itself: keep the start span untouched and
        // append the goal span, deduplicating an exactly shared point.
        if points[k - 1].dist_sq(&query.goal[0]) < 1e-24 {
            points.extend_from_slice(&query.goal[1..]);
        } else {
            points.extend_from_slice(&query.goal);
        }
    } else {
        // The terminal point stands in for the goal span's first point;
        // substitute the exact goal coordinates and append the remainder.
        interior.pop();
        points.extend_from_slice(&interior);
        points.extend_from_slice(&query.goal);
    }

    let splice_start = points.len().saturating_sub(2 * k - 1);
    let mut splice_ok = true;
    for span in points[splice_start..].windows(k) {
        if !check_span_feasible(tables, spec, span).expect("window length k").feasible {
            splice_ok = false;
            break;
        }
    }
    let cost = trajectory_cost(tables, spec, &points, query.lambda).expect("len >= k");
    RbkTrajectory { points, cost, goal_splice_feasible: splice_ok, expansions }
}

/// Auto-scale the time weight so that a knot of time cost is on the same
/// order as the control cost of a typical span of a straight-line probe from
/// the start state toward the goal.
pub fn auto_lambda(
    tables: &BasisTables,
    spec: &UniformBsplineSpec,
    init: &[Vec3],
    goal_first: &Vec3,
    step: f64,
) -> f64 {
    let k = tables.k();
    if init.len() != k {
        return 1.0;
    }
    let from = init[k - 1];
    let dir = (*goal_first - from).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
    let dist = from.dist(goal_first);
    let n = ((dist / step) as usize).clamp(k, 4 * k);
    let mut probe: Vec<Vec3> = init.to_vec();
    for i in 1..=n {
        probe.push(from + dir * (step * i as f64));
    }
    let mut costs: Vec<f64> = probe
        .windows(k)
        .map(|span| span_control_cost(tables, spec, span).expect("window length k"))
        .collect();
    costs.sort_by(f64::total_cmp);
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    (mean / tables.dt()).max(1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Clearances, ClearanceLevel, Connectivity, OccupancyWorld};

    fn world_empty(res: f64, dims: [usize; 3]) -> OccupancyWorld {
        OccupancyWorld::build(
            Vec::new(),
            res,
            dims,
            Vec3::ZERO,
            Clearances { c_rbk: 0.48, c_elas: 0.3, robot_radius: 0.2 },
        )
        .unwrap()
    }

    fn static_span(world: &OccupancyWorld, cell: Cell, k: usize) -> Vec<Vec3> {
        vec![world.center(&cell); k]
    }

    #[test]
    fn heuristic_formula() {
        let p = Vec3::new(0.0, 0.0, 0.0);
        let g = Vec3::new(3.0, 0.0, 0.0);
        assert_eq!(heuristic(&p, &g, 1.0, 2.0), 1.5);
        assert_eq!(heuristic(&g, &g, 1.0, 2.0), 0.0);
        assert_eq!(heuristic(&p, &g, 0.0, 2.0), 0.0);
    }

    #[test]
    fn near_end_is_cell_exact() {
        assert!(near_end(&[3, 4, 5], &[3, 4, 5]));
        assert!(!near_end(&[3, 4, 5], &[3, 4, 6]));
    }

    #[test]
    fn colocated_static_start_and_goal() {
        let spec = UniformBsplineSpec::quintic_snap(0.35);
        let tables = BasisTables::new(&spec).unwrap();
        let world = world_empty(0.5, [8, 8, 4]);
        let graph = GridGraph::new(&world, Connectivity::TwentySix, ClearanceLevel::Rbk);
        let cell = [4, 4, 2];
        let span = static_span(&world, cell, 6);
        let query = SearchQuery {
            init: span.clone(),
            goal: span,
            lambda: 2.0,
            v_max: 3.5,
            expansion_budget: 0,
        };
        let out = rbk_search(&tables, &spec, &graph, &query).unwrap();
        assert_eq!(out.points.len(), 11); // 2k - 1 points, overlap of one
        assert!(out.goal_splice_feasible);
        // Zero control cost, pure time cost of (n+1) knots.
        let expect = 2.0 * 11.0 * 0.35;
        assert!((out.cost - expect).abs() < 1e-9, "cost {} expect {}", out.cost, expect);
    }

    #[test]
    fn straight_line_planning_in_empty_world() {
        let spec = UniformBsplineSpec::quintic_snap(1.0);
        let tables = BasisTables::new(&spec).unwrap();
        let world = world_empty(0.5, [16, 8, 4]);
        let graph = GridGraph::new(&world, Connectivity::TwentySix, ClearanceLevel::Rbk);
        let init = static_span(&world, [2, 4, 2], 6);
        let goal = static_span(&world, [13, 4, 2], 6);
        let lambda = auto_lambda(&tables, &spec, &init, &goal[0], graph.d_max());
        let query = SearchQuery { init, goal: goal.clone(), lambda, v_max: 3.5, expansion_budget: 0 };
        let out = rbk_search(&tables, &spec, &graph, &query).unwrap();
        // Ends exactly with the goal span.
        assert_eq!(&out.points[out.points.len() - 6..], goal.as_slice());
        // All searched spans feasible.
        for span in out.points.windows(6) {
            let rep = check_span_feasible(&tables, &spec, span).unwrap();
            if !out.goal_splice_feasible {
                continue;
            }
            assert!(rep.feasible);
        }
        // Cost matches the independent recomputation.
        let recompute = trajectory_cost(&tables, &spec, &out.points, lambda).unwrap();
        assert!((out.cost - recompute).abs() < 1e-9);
    }

    #[test]
    fn deterministic_output() {
        let spec = UniformBsplineSpec::quintic_snap(1.0);
        let tables = BasisTables::new(&spec).unwrap();
        let world = world_empty(0.5, [12, 12, 4]);
        let graph = GridGraph::new(&world, Connectivity::TwentySix, ClearanceLevel::Rbk);
        let init = static_span(&world, [1, 1, 1], 6);
        let goal = static_span(&world, [10, 9, 2], 6);
        let query =
            SearchQuery { init, goal, lambda: 1.0, v_max: 3.5, expansion_budget: 0 };
        let a = rbk_search(&tables, &spec, &graph, &query).unwrap();
        let b = rbk_search(&tables, &spec, &graph, &query).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.expansions, b.expansions);
    }

    #[test]
    fn rejects_blocked_queries() {
        let spec = UniformBsplineSpec::quintic_snap(1.0);
        let tables = BasisTables::new(&spec).unwrap();
        let p = Vec3::new(1.25, 1.25, 0.75);
        let world = OccupancyWorld::build(
            vec![p],
            0.5,
            [8, 8, 4],
            Vec3::ZERO,
            Clearances { c_rbk: 0.48, c_elas: 0.3, robot_radius: 0.2 },
        )
        .unwrap();
        let graph = GridGraph::new(&world, Connectivity::TwentySix, ClearanceLevel::Rbk);
        let init = vec![p; 6];
        let goal = static_span(&world, [6, 6, 2], 6);
        let query = SearchQuery { init, goal, lambda: 1.0, v_max: 3.5, expansion_budget: 0 };
        assert!(matches!(
            rbk_search(&tables, &spec, &graph, &query),
            Err(SearchError::QueryNotFree { .. })
        ));
    }

    #[test]
    fn walled_world_has_no_path() {
        let spec = UniformBsplineSpec::quintic_snap(1.0);
        let tables = BasisTables::new(&spec).unwrap();
        // A dense wall of obstacle points across the whole cross-section.
        let mut pts = Vec::new();
        for y in 0..16 {
            for z in 0..8 {
                pts.push(Vec3::new(4.0, y as f64 * 0.25, z as f64 * 0.25));
            }
        }
        let world = OccupancyWorld::build(
            pts,
            0.5,
            [16, 8, 4],
            Vec3::ZERO,
            Clearances { c_rbk: 0.48, c_elas: 0.3, robot_radius: 0.2 },
        )
        .unwrap();
        let graph = GridGraph::new(&world, Connectivity::TwentySix, ClearanceLevel::Rbk);
        let init = static_span(&world, [1, 4, 2], 6);
        let goal = static_span(&world, [14, 4, 2], 6);
        let query = SearchQuery { init, goal, lambda: 1.0, v_max: 3.5, expansion_budget: 0 };
        assert!(matches!(
            rbk_search(&tables, &spec, &graph, &query),
            Err(SearchError::NoPath { .. })
        ));
    }

    #[test]
    fn spans_of_result_overlap_by_k_minus_one() {
        let spec = UniformBsplineSpec::quintic_snap(1.0);
        let tables = BasisTables::new(&spec).unwrap();
        let world = world_empty(0.5, [12, 12, 4]);
        let graph = GridGraph::new(&world, Connectivity::TwentySix, ClearanceLevel::Rbk);
        let init = static_span(&world, [1, 1, 1], 6);
        let goal = static_span(&world, [9, 10, 2], 6);
        let query = SearchQuery { init, goal, lambda: 1.0, v_max: 3.5, expansion_budget: 0 };
        let out = rbk_search(&tables, &spec, &graph, &query).unwrap();
        // Consecutive windows share k-1 points by construction of a single
        // point list; verify the list is step-consistent on the grid.
        for pair in out.points.windows(2) {
            assert!(pair[0].dist(&pair[1]) <= graph.d_max() + 1e-9);
        }
    }
}
