//! Post-optimization safety enforcement.
//!
//! Bubble containment constrains control points, not the curve, which
//! deviates from its control polygon. Under the two-level inflation
//! condition the polygon itself is clearance-safe, so any residual collision
//! is attributable to that deviation and can be removed by densifying
//! control points locally: the curve contracts onto the polygon as points
//! are added, with full interpolation (k-1 duplicates) as the limit case.

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Vec3;
use crate::spline::{evaluate, BasisTables};
use crate::world::OccupancyWorld;

#[derive(Debug, Clone, PartialEq)]
pub enum SafetyError {
    /// The control polygon itself runs closer than the robot radius to an
    /// obstacle; densification cannot fix that. Indicates the inflation
    /// precondition was violated upstream.
    PolylineCollision { segment: usize, clearance: f64 },
    /// Densification failed to converge within the pass budget.
    DidNotConverge { passes: usize, clearance: f64 },
}

impl fmt::Display for SafetyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SafetyError::PolylineCollision { segment, clearance } => write!(
                f,
                "control polygon segment {segment} has clearance {clearance}; \
                 inflation precondition violated"
            ),
            SafetyError::DidNotConverge { passes, clearance } => {
                write!(f, "clearance still {clearance} after {passes} densification passes")
            }
        }
    }
}

impl core::error::Error for SafetyError {}

#[derive(Debug, Clone, Copy)]
pub struct SafetyParams {
    pub robot_radius: f64,
    /// Curve samples per span when scanning for collisions.
    pub samples_per_span: usize,
    pub max_passes: usize,
}

impl SafetyParams {
    pub fn new(robot_radius: f64) -> Self {
        SafetyParams { robot_radius, samples_per_span: 20, max_passes: 40 }
    }
}

/// Smallest sampled clearance over all spans of a sequence.
pub fn min_trajectory_clearance(
    tables: &BasisTables,
    points: &[Vec3],
    world: &OccupancyWorld,
    samples_per_span: usize,
) -> f64 {
    let k = tables.k();
    let mut worst = f64::INFINITY;
    if points.len() < k {
        return worst;
    }
    for span in points.windows(k) {
        for s in 0..=samples_per_span {
            let u = s as f64 / samples_per_span as f64;
            let p = evaluate(tables, span, u, 0).expect("span length k");
            let c = world.clearance(&p);
            if c < worst {
                worst = c;
            }
        }
    }
    worst
}

fn segment_clearance(world: &OccupancyWorld, a: &Vec3, b: &Vec3, step: f64) -> f64 {
    let len = a.dist(b);
    let n = (len / step) as usize + 1;
    let mut worst = f64::INFINITY;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let p = *a + (*b - *a) * t;
        worst = worst.min(world.clearance(&p));
    }
    worst
}

/// Densify control points until every sampled curve point keeps more than
/// the robot radius of clearance. Only the spans in `mutable_from..` may be
/// modified; a collision whose span starts earlier is reported as a polygon
/// failure for the caller's stopping logic.
pub fn enforce_safety(
    tables: &BasisTables,
    points: &[Vec3],
    mutable_from: usize,
    world: &OccupancyWorld,
    params: &SafetyParams,
) -> Result<Vec<Vec3>, SafetyError> {
    let k = tables.k();
    let mut pts = points.to_vec();
    if pts.len() < k {
        return Ok(pts);
    }
    let probe_step = 0.25 * world.resolution().max(1e-6);
    for pass in 0..params.max_passes {
        let mut split = alloc::vec![false; pts.len().saturating_sub(1)];
        let mut any = false;
        let mut worst = f64::INFINITY;
        for (i, span) in pts.windows(k).enumerate() {
            let mut offending = false;
            for s in 0..=params.samples_per_span {
                let u = s as f64 / params.samples_per_span as f64;
                let p = evaluate(tables, span, u, 0).expect("span length k");
                let c = world.clearance(&p);
                worst = worst.min(c);
                if c <= params.robot_radius {
                    offending = true;
                }
            }
            if !offending {
                continue;
            }
            // Attribute: if the span's own polygon is this close, adding
            // points cannot help.
            for (j, seg) in span.windows(2).enumerate() {
                let pc = segment_clearance(world, &seg[0], &seg[1], probe_step);
                if pc <= params.robot_radius {
                    return Err(SafetyError::PolylineCollision {
                        segment: i + j,
                        clearance: pc,
                    });
                }
            }
            if i < mutable_from.saturating_sub(k - 1) {
                return Err(SafetyError::PolylineCollision {
                    segment: i,
                    clearance: worst,
                });
            }
            for (j, flag) in split.iter_mut().enumerate().skip(i).take(k - 1) {
                if pts[j].dist_sq(&pts[j + 1]) > 1e-24 {
                    *flag = true;
                    any = true;
                }
            }
        }
        if !any {
            return Ok(pts);
        }
        let _ = pass;
        let mut next = Vec::with_capacity(pts.len() * 2);
        for i in 0..pts.len() - 1 {
            next.push(pts[i]);
            if split[i] {
                next.push((pts[i] + pts[i + 1]) * 0.5);
            }
        }
        next.push(*pts.last().expect("nonempty"));
        pts = next;
    }
    let final_clear = min_trajectory_clearance(tables, &pts, world, params.samples_per_span);
    if final_clear > params.robot_radius {
        Ok(pts)
    } else {
        Err(SafetyError::DidNotConverge { passes: params.max_passes, clearance: final_clear })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Clearances;
    use alloc::vec;

    fn world_with(points: Vec<Vec3>) -> OccupancyWorld {
        OccupancyWorld::build(
            points,
            0.2,
            [60, 30, 10],
            Vec3::new(-2.0, -2.0, -1.0),
            Clearances { c_rbk: 0.42, c_elas: 0.3, robot_radius: 0.15 },
        )
        .unwrap()
    }

    #[test]
    fn clear_trajectory_is_returned_unchanged() {
        let tables = BasisTables::build(6, 0.3).unwrap();
        let world = world_with(vec![Vec3::new(3.0, 3.0, 0.0)]);
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64 * 0.3, 0.0, 0.0)).collect();
        let out =
            enforce_safety(&tables, &pts, 0, &world, &SafetyParams::new(0.15)).unwrap();
        assert_eq!(out, pts);
    }

    #[test]
    fn corner_cut_gets_densified() {
        // The curve cuts a corner whose polygon skirts an obstacle; safety
        // enforcement must pull the curve back without touching the polygon
        // geometry.
        let tables = BasisTables::build(6, 0.3).unwrap();
        let obstacle = Vec3::new(1.6, 0.52, 0.0);
        let world = world_with(vec![obstacle]);
        let mut pts: Vec<Vec3> = (0..6).map(|i| Vec3::new(i as f64 * 0.32, 0.0, 0.0)).collect();
        pts.extend((1..6).map(|i| Vec3::new(1.6, i as f64 * -0.32, 0.0)));
        // Shift so the corner bends just beside the obstacle.
        for p in &mut pts {
            p.y += 0.2;
        }
        let params = SafetyParams::new(0.15);
        let before = min_trajectory_clearance(&tables, &pts, &world, 20);
        let out = enforce_safety(&tables, &pts, 0, &world, &params);
        match out {
            Ok(refined) => {
                let after = min_trajectory_clearance(&tables, &refined, &world, 20);
                assert!(after > params.robot_radius, "after={after} before={before}");
                assert_eq!(refined[0], pts[0]);
                assert_eq!(*refined.last().unwrap(), *pts.last().unwrap());
            }
            Err(SafetyError::PolylineCollision { .. }) => {
                // Acceptable only if the polygon itself is too close; verify.
                let mut polygon_worst = f64::INFINITY;
                for seg in pts.windows(2) {
                    polygon_worst =
                        polygon_worst.min(segment_clearance(&world, &seg[0], &seg[1], 0.05));
                }
                assert!(polygon_worst <= params.robot_radius);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn polygon_collision_is_a_hard_failure() {
        let tables = BasisTables::build(6, 0.3).unwrap();
        let obstacle = Vec3::new(1.5, 0.0, 0.0);
        let world = world_with(vec![obstacle]);
        // The polygon runs straight through the obstacle.
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64 * 0.3, 0.0, 0.0)).collect();
        match enforce_safety(&tables, &pts, 0, &world, &SafetyParams::new(0.15)) {
            Err(SafetyError::PolylineCollision { clearance, .. }) => {
                assert!(clearance <= 0.15);
            }
            other => panic!("expected polygon failure, got {other:?}"),
        }
    }
}
