//! Receding-horizon replanning loop.
//!
//! The plan is one long control-point sequence partitioned into contiguous
//! blocks: executed, committed, optimizing (the sliding window), and
//! unoptimized. The trajectory server reads only executed and committed
//! points; the search and the optimizer touch only the mutable tail, so a
//! replan never disturbs what the vehicle is already flying. A collision on
//! the committed part cannot be replanned away and triggers the stopping
//! policy instead.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::elastic::qcqp::{solve_placement_qcqp, PlacementQcqp, QcqpError, SolveOptions};
use crate::elastic::safety::{enforce_safety, SafetyError, SafetyParams};
use crate::elastic::tube::{elastic_tube, TubeParams};
use crate::linalg::{flt, Vec3};
use crate::search::{auto_lambda, rbk_search, SearchError, SearchQuery};
use crate::spline::{evaluate, BasisTables, SplineError, UniformBsplineSpec};
use crate::world::{Cell, ClearanceLevel, Connectivity, GridGraph, OccupancyWorld};

/// Monotonic time source for component timing. The core never reads a real
/// clock; hosts that want wall-clock stats pass one in, everything else uses
/// [`NoopStopwatch`].
pub trait Stopwatch {
    fn now(&mut self) -> f64;
}

/// Zero time source; all durations come out as 0.
pub struct NoopStopwatch;

impl Stopwatch for NoopStopwatch {
    fn now(&mut self) -> f64 {
        0.0
    }
}

/// Front-end activation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Replan only on collision (and horizon extension).
    Passive,
    /// Additionally replan on a knot-based timer.
    Active,
}

#[derive(Debug, Clone)]
pub struct PlanConfig {
    /// Sliding-window size in control points.
    pub window: usize,
    /// Local sensing range in meters; local targets are chosen inside it.
    pub sensing_range: f64,
    pub mode: Mode,
    /// Active-mode timer period in knots.
    pub timer_knots: usize,
    /// Fixed time-cost weight, or `None` to auto-scale per replan.
    pub lambda: Option<f64>,
    /// Euclidean speed bound for the search heuristic.
    pub v_max: f64,
    pub connectivity: Connectivity,
    /// RBK expansion budget; 0 selects the default.
    pub expansion_budget: usize,
    pub qcqp: SolveOptions,
    pub safety_samples: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            window: 12,
            sensing_range: 4.0,
            mode: Mode::Passive,
            timer_knots: 6,
            lambda: None,
            v_max: 3.5,
            connectivity: Connectivity::TwentySix,
            expansion_budget: 0,
            qcqp: SolveOptions::default(),
            safety_samples: 20,
        }
    }
}

/// Control-point lifecycle stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Executed,
    Committed,
    Optimizing,
    Unoptimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplanReason {
    Init,
    Collision,
    Timer,
    GoalMoved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Collision detected on the committed trajectory.
    CommittedCollision,
    /// A collision ahead could not be replanned around.
    ReplanFailed,
    /// The plan would run out before reaching the goal.
    HorizonExhausted,
}

/// Step and replan events, with component durations measured through the
/// host stopwatch.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Commit {
        upto: usize,
    },
    Replan {
        reason: ReplanReason,
        seconds: f64,
        expansions: usize,
        splice_feasible: bool,
        success: bool,
    },
    Opt {
        tube_seconds: f64,
        solve_seconds: f64,
        total_seconds: f64,
        objective_initial: f64,
        objective: f64,
        feasible: bool,
        variables: usize,
    },
    SafetyDensify {
        added: usize,
    },
    Stop {
        reason: StopReason,
    },
    Goal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanError {
    Search(SearchError),
    Spline(SplineError),
    Qcqp(QcqpError),
    Safety(SafetyError),
    /// No free cell near the requested local target.
    NoLocalTarget,
    /// The start span must have exactly `k` points inside the world.
    BadStartSpan,
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::Search(e) => write!(f, "search: {e}"),
            PlanError::Spline(e) => write!(f, "spline: {e}"),
            PlanError::Qcqp(e) => write!(f, "placement optimization: {e}"),
            PlanError::Safety(e) => write!(f, "safety enforcement: {e}"),
            PlanError::NoLocalTarget => write!(f, "no free cell near the local target"),
            PlanError::BadStartSpan => write!(f, "start span invalid"),
        }
    }
}

impl core::error::Error for PlanError {}

impl From<SearchError> for PlanError {
    fn from(e: SearchError) -> Self {
        PlanError::Search(e)
    }
}
impl From<SplineError> for PlanError {
    fn from(e: SplineError) -> Self {
        PlanError::Spline(e)
    }
}

/// The replanner state.
#[derive(Debug, Clone)]
pub struct PlanState {
    tables: BasisTables,
    spec: UniformBsplineSpec,
    cfg: PlanConfig,
    points: Vec<Vec3>,
    committed_len: usize,
    clock: f64,
    origin: f64,
    goal: Vec3,
    guide_from: Vec3,
    /// Goal point of the current plan (the local target).
    plan_target: Vec3,
    halted: Option<(f64, Vec3)>,
    reached: bool,
    last_replan_knot: i64,
}

impl PlanState {
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn committed_len(&self) -> usize {
        self.committed_len
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn is_halted(&self) -> bool {
        self.halted.is_some()
    }

    pub fn reached_goal(&self) -> bool {
        self.reached
    }

    pub fn knot_step(&self) -> f64 {
        self.tables.dt()
    }

    fn current_segment(&self) -> i64 {
        flt::floor((self.clock - self.origin) / self.tables.dt()) as i64
    }

    /// End of the curve domain: the last segment finishes here.
    pub fn plan_end_time(&self) -> f64 {
        let k = self.tables.k();
        self.origin + (self.points.len() - k + 1) as f64 * self.tables.dt()
    }

    /// Lifecycle label per control point.
    pub fn labels(&self) -> Vec<Label> {
        let k = self.tables.k();
        let dt = self.tables.dt();
        let executed_until =
            flt::floor((self.clock - self.origin) / dt).max(0.0) as usize;
        let win_end = (self.committed_len + self.cfg.window)
            .min(self.points.len().saturating_sub(k));
        let mut out = Vec::with_capacity(self.points.len());
        for j in 0..self.points.len() {
            let label = if j < self.committed_len {
                // Point j's last influencing segment ends at (j+1) dt.
                if j + 1 <= executed_until {
                    Label::Executed
                } else {
                    Label::Committed
                }
            } else if j < win_end {
                Label::Optimizing
            } else {
                Label::Unoptimized
            };
            out.push(label);
        }
        out
    }

    /// Immutable view of the executed+committed trajectory for the server.
    pub fn committed_trajectory(&self) -> CommittedTrajectory {
        CommittedTrajectory {
            tables: self.tables.clone(),
            points: self.points[..self.committed_len].to_vec(),
            origin: self.origin,
            hold: self.halted,
        }
    }

    /// Position on the executing trajectory at the current clock.
    pub fn position(&self) -> Vec3 {
        self.committed_trajectory()
            .evaluate(self.clock, 0)
            .unwrap_or_else(|_| *self.points.last().expect("plan nonempty"))
    }

    /// Advance the clock, promote labels, watch for collisions against the
    /// given world snapshot, and replan/refine as needed.
    pub fn step(
        &mut self,
        world: &OccupancyWorld,
        dt_sim: f64,
        sw: &mut dyn Stopwatch,
    ) -> Vec<Event> {
        let mut events = Vec::new();
        if self.halted.is_some() || self.reached {
            return events;
        }
        debug_assert!(dt_sim > 0.0);
        self.clock += dt_sim;
        let k = self.tables.k();
        let robot = world.clearances().robot_radius;
        let segment = self.current_segment();

        // Promotions: committed boundary stays k+1 points ahead of the
        // executing segment.
        let target = ((segment + k as i64 + 1).max(0) as usize).min(self.points.len());
        if target > self.committed_len {
            self.committed_len = target;
            events.push(Event::Commit { upto: self.committed_len });
        }

        // Committed trajectory ahead of the clock must stay clear; a hit
        // there is unrecoverable by replanning.
        let first_active = segment.max(0) as usize;
        if self.committed_len >= k {
            for i in first_active..=self.committed_len.saturating_sub(k) {
                if self.span_collides(world, i, robot) {
                    self.halt(StopReason::CommittedCollision, &mut events);
                    return events;
                }
            }
        }

        // Mutable region: collision means replan; in active mode a timer
        // replans regardless.
        let mut reason = None;
        let scan_from = (self.committed_len + 1).saturating_sub(k).max(first_active);
        if self.points.len() >= k {
            for i in scan_from..=self.points.len() - k {
                if self.span_collides(world, i, robot) {
                    reason = Some(ReplanReason::Collision);
                    break;
                }
            }
        }
        if reason.is_none()
            && self.cfg.mode == Mode::Active
            && segment - self.last_replan_knot >= self.cfg.timer_knots as i64
        {
            reason = Some(ReplanReason::Timer);
        }
        let goal_here = self.plan_target.dist(&self.goal) <= 0.75 * world.resolution();
        if reason.is_none()
            && !goal_here
            && self.points.len() - self.committed_len < self.cfg.window + k
        {
            // The local target advances along the guide line as the plan is
            // consumed.
            reason = Some(ReplanReason::GoalMoved);
        }

        if let Some(reason) = reason {
            self.replan(world, reason, sw, &mut events);
            if self.halted.is_some() {
                return events;
            }
        }

        self.optimize_window(world, sw, &mut events);
        if self.halted.is_some() {
            return events;
        }

        // Arrival: the plan ends at the global goal and the curve domain has
        // been consumed.
        let goal_now = self.plan_target.dist(&self.goal) <= 0.75 * world.resolution();
        if goal_now && self.clock >= self.plan_end_time() {
            self.committed_len = self.points.len();
            self.reached = true;
            events.push(Event::Goal);
            return events;
        }
        // A plan about to run out anywhere else is a stall; stop rather than
        // hover silently.
        if !goal_now && segment >= (self.points.len() - k) as i64 {
            self.halt(StopReason::HorizonExhausted, &mut events);
        }
        events
    }

    fn span_collides(&self, world: &OccupancyWorld, i: usize, robot: f64) -> bool {
        let k = self.tables.k();
        let span = &self.points[i..i + k];
        for s in 0..=self.cfg.safety_samples {
            let u = s as f64 / self.cfg.safety_samples as f64;
            let p = evaluate(&self.tables, span, u, 0).expect("span length k");
            if world.clearance(&p) <= robot {
                return true;
            }
        }
        false
    }

    fn halt(&mut self, reason: StopReason, events: &mut Vec<Event>) {
        let hold = self.position();
        self.halted = Some((self.clock, hold));
        events.push(Event::Stop { reason });
    }

    fn replan(
        &mut self,
        world: &OccupancyWorld,
        reason: ReplanReason,
        sw: &mut dyn Stopwatch,
        events: &mut Vec<Event>,
    ) {
        let k = self.tables.k();
        let boundary: Vec<Vec3> =
            self.points[self.committed_len - k..self.committed_len].to_vec();
        let from = boundary[k - 1];
        let graph = GridGraph::new(world, self.cfg.connectivity, ClearanceLevel::Rbk);
        let target_cell = match local_target(
            &graph,
            &from,
            &self.guide_from,
            &self.goal,
            self.cfg.sensing_range,
        ) {
            Some(c) => c,
            None => {
                events.push(Event::Replan {
                    reason,
                    seconds: 0.0,
                    expansions: 0,
                    splice_feasible: false,
                    success: false,
                });
                if reason == ReplanReason::Collision {
                    self.halt(StopReason::ReplanFailed, events);
                }
                return;
            }
        };
        let goal_span = vec![world.center(&target_cell); k];
        let lambda = self.cfg.lambda.unwrap_or_else(|| {
            auto_lambda(&self.tables, &self.spec, &boundary, &goal_span[0], graph.d_max())
        });
        let query = SearchQuery {
            init: boundary,
            goal: goal_span,
            lambda,
            v_max: self.cfg.v_max,
            expansion_budget: self.cfg.expansion_budget,
        };
        let t0 = sw.now();
        let result = rbk_search(&self.tables, &self.spec, &graph, &query);
        let seconds = sw.now() - t0;
        match result {
            Ok(traj) => {
                events.push(Event::Replan {
                    reason,
                    seconds,
                    expansions: traj.expansions,
                    splice_feasible: traj.goal_splice_feasible,
                    success: true,
                });
                self.points.truncate(self.committed_len);
                self.points.extend_from_slice(&traj.points[k..]);
                self.plan_target = *traj.points.last().expect("nonempty");
                self.last_replan_knot = self.current_segment();
            }
            Err(_e) => {
                events.push(Event::Replan {
                    reason,
                    seconds,
                    expansions: 0,
                    splice_feasible: false,
                    success: false,
                });
                if reason == ReplanReason::Collision {
                    self.halt(StopReason::ReplanFailed, events);
                }
            }
        }
    }

    fn optimize_window(
        &mut self,
        world: &OccupancyWorld,
        sw: &mut dyn Stopwatch,
        events: &mut Vec<Event>,
    ) {
        let k = self.tables.k();
        let var_lo = self.committed_len;
        let var_hi = (self.committed_len + self.cfg.window)
            .min(self.points.len().saturating_sub(k));
        if var_lo >= var_hi {
            return;
        }
        let t0 = sw.now();
        let tube_params = TubeParams::from_resolution(world.resolution(), self.cfg.sensing_range);
        let tube = match elastic_tube(world, &self.points[var_lo..var_hi], &tube_params) {
            Ok(t) => t,
            Err(_) => return,
        };
        let t1 = sw.now();
        let qcqp = match PlacementQcqp::build(
            &self.tables,
            &self.spec,
            &self.points,
            var_lo..var_hi,
            false,
            false,
            &tube,
        ) {
            Ok(q) => q,
            Err(_e) => return,
        };
        let outcome = match solve_placement_qcqp(&qcqp, &self.cfg.qcqp) {
            Ok(o) => o,
            Err(_e) => return,
        };
        let t2 = sw.now();
        let vars = qcqp.num_variables();
        self.points = outcome.placement;
        events.push(Event::Opt {
            tube_seconds: t1 - t0,
            solve_seconds: t2 - t1,
            total_seconds: t2 - t0,
            objective_initial: outcome.objective_initial,
            objective: outcome.objective,
            feasible: outcome.feasible,
            variables: vars,
        });

        let before = self.points.len();
        match enforce_safety(
            &self.tables,
            &self.points,
            self.committed_len,
            world,
            &SafetyParams {
                robot_radius: world.clearances().robot_radius,
                samples_per_span: self.cfg.safety_samples,
                max_passes: 40,
            },
        ) {
            Ok(pts) => {
                if pts.len() > before {
                    events.push(Event::SafetyDensify { added: pts.len() - before });
                }
                self.points = pts;
            }
            Err(_e) => {
                self.halt(StopReason::CommittedCollision, events);
            }
        }
    }
}

/// Evaluable handle over the immutable prefix; replans never invalidate it.
#[derive(Debug, Clone)]
pub struct CommittedTrajectory {
    tables: BasisTables,
    points: Vec<Vec3>,
    origin: f64,
    hold: Option<(f64, Vec3)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutOfHorizon {
    pub t: f64,
}

impl fmt::Display for OutOfHorizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "query at t={} is beyond the committed horizon", self.t)
    }
}

impl core::error::Error for OutOfHorizon {}

impl CommittedTrajectory {
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Last instant this handle can answer for.
    pub fn horizon(&self) -> f64 {
        let k = self.tables.k();
        if self.points.len() < k {
            return self.origin;
        }
        self.origin + (self.points.len() - k + 1) as f64 * self.tables.dt()
    }

    /// Position (`l = 0`) or derivative at time `t`.
    pub fn evaluate(&self, t: f64, l: usize) -> Result<Vec3, OutOfHorizon> {
        if let Some((t_h, hold)) = self.hold {
            if t >= t_h {
                return Ok(if l == 0 { hold } else { Vec3::ZERO });
            }
        }
        let k = self.tables.k();
        let dt = self.tables.dt();
        if self.points.len() < k || t < self.origin {
            return Err(OutOfHorizon { t });
        }
        let rel = (t - self.origin) / dt;
        let mut seg = flt::floor(rel) as i64;
        let max_seg = (self.points.len() - k) as i64;
        let mut u = rel - seg as f64;
        if seg == max_seg + 1 && u <= 1e-9 {
            seg = max_seg;
            u = 1.0;
        }
        if seg < 0 || seg > max_seg {
            return Err(OutOfHorizon { t });
        }
        let span = &self.points[seg as usize..seg as usize + k];
        Ok(evaluate(&self.tables, span, u.clamp(0.0, 1.0), l).expect("span length k"))
    }
}

/// Choose the next local target: advance along the straight guide line from
/// the mission start to the goal, clamp inside the sensing range, snap to a
/// cell, and fall back to the nearest free cell when the snapped one is
/// blocked.
pub fn local_target(
    graph: &GridGraph<'_>,
    from: &Vec3,
    guide_from: &Vec3,
    goal: &Vec3,
    sensing_range: f64,
) -> Option<Cell> {
    let world = graph.world;
    let candidate = if goal.dist(from) <= 0.95 * sensing_range {
        *goal
    } else {
        let line = *goal - *guide_from;
        let len = line.norm();
        if len < 1e-9 {
            *goal
        } else {
            let dir = line / len;
            let s0 = (*from - *guide_from).dot(&dir).clamp(0.0, len);
            let adv = (s0 + 0.9 * sensing_range).min(len);
            let mut cand = *guide_from + dir * adv;
            let off = cand - *from;
            let d = off.norm();
            if d > 0.95 * sensing_range {
                cand = *from + off * (0.95 * sensing_range / d);
            }
            cand
        }
    };
    // Clamp into the grid.
    let dims = world.dims();
    let res = world.resolution();
    let org = world.origin();
    let clamp_axis = |v: f64, lo: f64, n: usize| -> f64 {
        v.clamp(lo + 0.5 * res, lo + (n as f64 - 0.5) * res)
    };
    let clamped = Vec3::new(
        clamp_axis(candidate.x, org.x, dims[0]),
        clamp_axis(candidate.y, org.y, dims[1]),
        clamp_axis(candidate.z, org.z, dims[2]),
    );
    let cell = world.cell_of(&clamped)?;
    if graph.free(&cell) {
        return Some(cell);
    }
    // Expanding Chebyshev rings; nearest free cell by true distance with a
    // deterministic tie-break on the linear index.
    let max_r = dims.iter().copied().max().unwrap_or(1) as i32;
    for radius in 1..=max_r {
        let mut best: Option<(f64, usize, Cell)> = None;
        for dz in -radius..=radius {
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != radius {
                        continue;
                    }
                    let c = [cell[0] + dx, cell[1] + dy, cell[2] + dz];
                    if !graph.free(&c) {
                        continue;
                    }
                    let d = world.center(&c).dist(&clamped);
                    let idx = world.index(&c);
                    let better = match &best {
                        Some((bd, bi, _)) => d < *bd - 1e-12 || (d < *bd + 1e-12 && idx < *bi),
                        None => true,
                    };
                    if better {
                        best = Some((d, idx, c));
                    }
                }
            }
        }
        if let Some((_, _, c)) = best {
            return Some(c);
        }
    }
    None
}

/// Build the initial plan: search to a local target on the guide line, run
/// one full placement optimization with pinned endpoints, and enforce
/// safety.
pub fn init_plan(
    tables: &BasisTables,
    spec: &UniformBsplineSpec,
    cfg: &PlanConfig,
    world: &OccupancyWorld,
    start_span: Vec<Vec3>,
    goal: Vec3,
    start_time: f64,
    sw: &mut dyn Stopwatch,
) -> Result<(PlanState, Vec<Event>), PlanError> {
    let k = tables.k();
    if start_span.len() != k {
        return Err(PlanError::BadStartSpan);
    }
    let mut events = Vec::new();
    let graph = GridGraph::new(world, cfg.connectivity, ClearanceLevel::Rbk);
    let from = start_span[k - 1];
    let target_cell = local_target(&graph, &from, &from, &goal, cfg.sensing_range)
        .ok_or(PlanError::NoLocalTarget)?;
    let goal_span = vec![world.center(&target_cell); k];
    let lambda = cfg
        .lambda
        .unwrap_or_else(|| auto_lambda(tables, spec, &start_span, &goal_span[0], graph.d_max()));
    let query = SearchQuery {
        init: start_span.clone(),
        goal: goal_span,
        lambda,
        v_max: cfg.v_max,
        expansion_budget: cfg.expansion_budget,
    };
    let t0 = sw.now();
    let traj = rbk_search(tables, spec, &graph, &query)?;
    let seconds = sw.now() - t0;
    events.push(Event::Replan {
        reason: ReplanReason::Init,
        seconds,
        expansions: traj.expansions,
        splice_feasible: traj.goal_splice_feasible,
        success: true,
    });

    let mut state = PlanState {
        tables: tables.clone(),
        spec: spec.clone(),
        cfg: cfg.clone(),
        plan_target: *traj.points.last().expect("nonempty"),
        points: traj.points,
        committed_len: k,
        clock: start_time,
        origin: start_time,
        goal,
        guide_from: from,
        halted: None,
        reached: false,
        last_replan_knot: 0,
    };

    // One full refinement pass over the whole placement with both endpoints
    // pinned, then the safety densification.
    let len = state.points.len();
    let var_lo = k - 1;
    let var_hi = len - k + 1;
    if var_hi > var_lo + 1 {
        let tube_params = TubeParams::from_resolution(world.resolution(), cfg.sensing_range);
        let t0 = sw.now();
        let tube = elastic_tube(world, &state.points[var_lo..var_hi], &tube_params)
            .map_err(|_| PlanError::NoLocalTarget)?;
        let t1 = sw.now();
        let qcqp = PlacementQcqp::build(
            tables,
            spec,
            &state.points,
            var_lo..var_hi,
            true,
            true,
            &tube,
        )
        .map_err(PlanError::Qcqp)?;
        let outcome = solve_placement_qcqp(&qcqp, &cfg.qcqp).map_err(PlanError::Qcqp)?;
        let t2 = sw.now();
        events.push(Event::Opt {
            tube_seconds: t1 - t0,
            solve_seconds: t2 - t1,
            total_seconds: t2 - t0,
            objective_initial: outcome.objective_initial,
            objective: outcome.objective,
            feasible: outcome.feasible,
            variables: qcqp.num_variables(),
        });
        state.points = outcome.placement;
    }
    let before = state.points.len();
    let refined = enforce_safety(
        tables,
        &state.points,
        k,
        world,
        &SafetyParams {
            robot_radius: world.clearances().robot_radius,
            samples_per_span: cfg.safety_samples,
            max_passes: 40,
        },
    )
    .map_err(PlanError::Safety)?;
    if refined.len() > before {
        events.push(Event::SafetyDensify { added: refined.len() - before });
    }
    state.points = refined;
    Ok((state, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Clearances;

    fn test_world(obstacles: Vec<Vec3>) -> OccupancyWorld {
        OccupancyWorld::build(
            obstacles,
            0.25,
            [40, 40, 8],
            Vec3::ZERO,
            Clearances { c_rbk: 0.55, c_elas: 0.38, robot_radius: 0.2 },
        )
        .unwrap()
    }

    fn quintic() -> (UniformBsplineSpec, BasisTables) {
        // res 0.25 m worlds: the rest->cruise ramp needs dt >= 0.67 to pass
        // the conservative acceleration condition.
        let spec = UniformBsplineSpec::quintic_snap(0.7);
        let tables = BasisTables::new(&spec).unwrap();
        (spec, tables)
    }

    fn static_start(world: &OccupancyWorld, cell: Cell, k: usize) -> Vec<Vec3> {
        vec![world.center(&cell); k]
    }

    #[test]
    fn init_reaches_in_range_goal_directly() {
        let (spec, tables) = quintic();
        let world = test_world(Vec::new());
        let cfg = PlanConfig::default();
        let start = static_start(&world, [4, 4, 2], 6);
        let goal = world.center(&[14, 4, 2]); // 2.5 m away, inside sensing
        let (state, events) =
            init_plan(&tables, &spec, &cfg, &world, start, goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        assert!(matches!(events[0], Event::Replan { success: true, .. }));
        assert!(state.plan_target.dist(&goal) < 1e-9);
    }

    #[test]
    fn init_picks_local_target_at_sensing_boundary() {
        let (spec, tables) = quintic();
        let world = test_world(Vec::new());
        let cfg = PlanConfig::default();
        let start = static_start(&world, [2, 2, 2], 6);
        let goal = world.center(&[38, 38, 3]); // far beyond sensing
        let (state, _) =
            init_plan(&tables, &spec, &cfg, &world, start.clone(), goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        let d = state.plan_target.dist(&start[5]);
        assert!(d <= cfg.sensing_range, "target {d} beyond sensing");
        assert!(d >= 0.5 * cfg.sensing_range, "target {d} suspiciously close");
    }

    #[test]
    fn passive_empty_world_runs_to_goal_without_collision_replans() {
        let (spec, tables) = quintic();
        let world = test_world(Vec::new());
        let cfg = PlanConfig::default();
        let start = static_start(&world, [3, 3, 2], 6);
        let goal = world.center(&[30, 30, 3]);
        let (mut state, _) =
            init_plan(&tables, &spec, &cfg, &world, start, goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        let mut collision_replans = 0;
        let mut steps = 0;
        while !state.reached_goal() && !state.is_halted() && steps < 4000 {
            let events = state.step(&world, 0.1, &mut NoopStopwatch);
            for e in &events {
                if let Event::Replan { reason: ReplanReason::Collision, .. } = e {
                    collision_replans += 1;
                }
            }
            steps += 1;
        }
        assert!(state.reached_goal(), "did not reach goal in {steps} steps");
        assert_eq!(collision_replans, 0);
    }

    #[test]
    fn committed_prefix_survives_replans_bitwise() {
        let (spec, tables) = quintic();
        let world = test_world(Vec::new());
        let cfg = PlanConfig { mode: Mode::Active, ..PlanConfig::default() };
        let start = static_start(&world, [3, 3, 2], 6);
        let goal = world.center(&[36, 36, 3]);
        let (mut state, _) =
            init_plan(&tables, &spec, &cfg, &world, start, goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        let mut steps = 0;
        while !state.reached_goal() && !state.is_halted() && steps < 4000 {
            let before: Vec<Vec3> = state.points[..state.committed_len].to_vec();
            let events = state.step(&world, 0.1, &mut NoopStopwatch);
            let after = &state.points[..before.len()];
            assert_eq!(before.as_slice(), after, "committed prefix changed at step {steps}");
            let _ = events;
            steps += 1;
        }
        assert!(state.reached_goal());
    }

    #[test]
    fn active_mode_replans_on_timer() {
        let (spec, tables) = quintic();
        let world = test_world(Vec::new());
        let cfg = PlanConfig { mode: Mode::Active, timer_knots: 4, ..PlanConfig::default() };
        let start = static_start(&world, [3, 3, 2], 6);
        let goal = world.center(&[36, 36, 3]);
        let (mut state, _) =
            init_plan(&tables, &spec, &cfg, &world, start, goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        let mut timer_replans = 0;
        for _ in 0..400 {
            if state.reached_goal() || state.is_halted() {
                break;
            }
            for e in state.step(&world, 0.1, &mut NoopStopwatch) {
                if let Event::Replan { reason: ReplanReason::Timer, success: true, .. } = e {
                    timer_replans += 1;
                }
            }
        }
        assert!(timer_replans > 2, "only {timer_replans} timer replans");
    }

    #[test]
    fn obstacle_on_committed_segment_stops_the_plan() {
        let (spec, tables) = quintic();
        let empty = test_world(Vec::new());
        let cfg = PlanConfig::default();
        let start = static_start(&empty, [3, 20, 2], 6);
        let goal = empty.center(&[36, 20, 3]);
        let (mut state, _) =
            init_plan(&tables, &spec, &cfg, &empty, start, goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        // Let it fly a little, then drop an obstacle right on the committed
        // path ahead of the vehicle.
        for _ in 0..5 {
            state.step(&empty, 0.1, &mut NoopStopwatch);
        }
        let ahead = state
            .committed_trajectory()
            .evaluate(state.clock() + 0.5 * state.knot_step(), 0)
            .unwrap();
        let blocked = test_world(alloc::vec![ahead]);
        let events = state.step(&blocked, 0.1, &mut NoopStopwatch);
        assert!(
            events.iter().any(|e| matches!(e, Event::Stop { reason: StopReason::CommittedCollision })),
            "expected stop, got {events:?}"
        );
        assert!(state.is_halted());
        // The server holds position after the stop.
        let hold_a = state.committed_trajectory().evaluate(state.clock() + 1.0, 0).unwrap();
        let hold_b = state.committed_trajectory().evaluate(state.clock() + 5.0, 0).unwrap();
        assert_eq!(hold_a, hold_b);
    }

    #[test]
    fn committed_trajectory_rejects_out_of_horizon_queries() {
        let (spec, tables) = quintic();
        let world = test_world(Vec::new());
        let cfg = PlanConfig::default();
        let start = static_start(&world, [3, 3, 2], 6);
        let goal = world.center(&[20, 3, 2]);
        let (state, _) =
            init_plan(&tables, &spec, &cfg, &world, start, goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        let traj = state.committed_trajectory();
        assert!(traj.evaluate(-1.0, 0).is_err());
        assert!(traj.evaluate(traj.horizon() + 0.5, 0).is_err());
        let p = traj.evaluate(0.0, 0).unwrap();
        assert!(p.dist(&state.points()[0]) < 1.0);
    }

    #[test]
    fn labels_partition_in_order() {
        let (spec, tables) = quintic();
        let world = test_world(Vec::new());
        let cfg = PlanConfig::default();
        let start = static_start(&world, [3, 3, 2], 6);
        let goal = world.center(&[30, 30, 3]);
        let (mut state, _) =
            init_plan(&tables, &spec, &cfg, &world, start, goal, 0.0, &mut NoopStopwatch)
                .unwrap();
        for _ in 0..30 {
            state.step(&world, 0.1, &mut NoopStopwatch);
            let labels = state.labels();
            let rank = |l: &Label| match l {
                Label::Executed => 0,
                Label::Committed => 1,
                Label::Optimizing => 2,
                Label::Unoptimized => 3,
            };
            for pair in labels.windows(2) {
                assert!(rank(&pair[0]) <= rank(&pair[1]), "labels out of order: {labels:?}");
            }
            let optimizing = labels.iter().filter(|l| **l == Label::Optimizing).count();
            assert!(optimizing <= cfg.window);
        }
    }
}
