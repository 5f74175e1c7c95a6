//! Elastic tube expansion.
//!
//! For each placement point the nearest obstacle defines an initial bubble;
//! the bubble center is then pushed away from that obstacle as far as the
//! new bubble still contains the original one, found by binary search on the
//! push distance so only a handful of nearest-neighbor queries are spent per
//! point.

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Vec3;
use crate::world::OccupancyWorld;

#[derive(Debug, Clone, PartialEq)]
pub enum TubeError {
    /// Parameters must satisfy `0 <= d_infl_min < d_infl_max <= radius_cap`.
    BadParams,
}

impl fmt::Display for TubeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TubeError::BadParams => {
                write!(f, "need 0 <= d_infl_min < d_infl_max <= radius_cap and d_thres, d_tol > 0")
            }
        }
    }
}

impl core::error::Error for TubeError {}

/// Tube expansion parameters.
#[derive(Debug, Clone, Copy)]
pub struct TubeParams {
    /// Lower end of the push-distance search, meters.
    pub d_infl_min: f64,
    /// Upper end of the push-distance search, meters.
    pub d_infl_max: f64,
    /// Containment slack: the pushed bubble must contain the original one up
    /// to this threshold. Should stay below the map resolution.
    pub d_thres: f64,
    /// Binary-search interval end condition, typically the map resolution.
    pub d_infl_tol: f64,
    /// Bubble radii are capped here (the sensed-space radius); free space
    /// beyond the sensor horizon cannot be trusted.
    pub radius_cap: f64,
}

impl TubeParams {
    /// Defaults derived from the map resolution and sensing range.
    pub fn from_resolution(resolution: f64, sensing_range: f64) -> TubeParams {
        TubeParams {
            d_infl_min: 0.0,
            d_infl_max: (0.5 * sensing_range).max(resolution),
            d_thres: 0.5 * resolution,
            d_infl_tol: resolution,
            radius_cap: sensing_range,
        }
    }

    fn validate(&self) -> Result<(), TubeError> {
        let ok = self.d_infl_min >= 0.0
            && self.d_infl_max > self.d_infl_min
            && self.radius_cap >= self.d_infl_max
            && self.d_thres > 0.0
            && self.d_infl_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TubeError::BadParams)
        }
    }
}

/// A chain of free-space bubbles around a control-point placement.
#[derive(Debug, Clone)]
pub struct ElasticTube {
    /// The placement the tube was grown from.
    pub sources: Vec<Vec3>,
    pub centers: Vec<Vec3>,
    pub radii: Vec<f64>,
}

impl ElasticTube {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Containment of each source in its bubble, the defining invariant.
    pub fn contains_sources(&self, slack: f64) -> bool {
        self.sources
            .iter()
            .zip(self.centers.iter().zip(self.radii.iter()))
            .all(|(p, (q, r))| q.dist(p) <= r + slack)
    }
}

/// Direction away from the midpoint of the adjacent placement points, the
/// fallback when the nearest-obstacle direction is undefined.
fn fallback_direction(placement: &[Vec3], i: usize) -> Option<Vec3> {
    let n = placement.len();
    let anchor = if n == 1 {
        return None;
    } else if i == 0 {
        placement[1]
    } else if i == n - 1 {
        placement[n - 2]
    } else {
        (placement[i - 1] + placement[i + 1]) * 0.5
    };
    (placement[i] - anchor).normalized()
}

/// Grow one bubble per placement point in the optimization-level
/// configuration space.
pub fn elastic_tube(
    world: &OccupancyWorld,
    placement: &[Vec3],
    params: &TubeParams,
) -> Result<ElasticTube, TubeError> {
    params.validate()?;
    let mut centers = Vec::with_capacity(placement.len());
    let mut radii = Vec::with_capacity(placement.len());
    for (i, p) in placement.iter().enumerate() {
        let (center, radius) = match world.nn_search(p) {
            None => {
                // Obstacle-free world: push as far as allowed, cap the radius
                // at the sensed-space limit.
                match fallback_direction(placement, i) {
                    Some(dir) => (*p + dir * params.d_infl_max, params.radius_cap),
                    None => (*p, params.radius_cap),
                }
            }
            Some((nearest, r0)) => {
                let dir = (*p - nearest).normalized().or_else(|| fallback_direction(placement, i));
                match dir {
                    None => (*p, r0.min(params.radius_cap)),
                    Some(f) => {
                        // A zero push trivially satisfies containment; a
                        // positive lower end must be verified first.
                        let mut lo = params.d_infl_min;
                        let mut hi = params.d_infl_max;
                        let mut best = (*p, r0);
                        if lo > 0.0 {
                            let q = *p + f * lo;
                            let r = world.clearance(&q);
                            if crate::linalg::flt::abs(r - lo - r0) <= params.d_thres {
                                best = (q, r);
                            } else {
                                hi = lo;
                                lo = 0.0;
                            }
                        }
                        while hi - lo > params.d_infl_tol {
                            let d = 0.5 * (lo + hi);
                            let q = *p + f * d;
                            let r = world.clearance(&q);
                            if crate::linalg::flt::abs(r - d - r0) > params.d_thres {
                                hi = d;
                            } else {
                                lo = d;
                                best = (q, r);
                            }
                        }
                        (best.0, best.1.min(params.radius_cap))
                    }
                }
            }
        };
        centers.push(center);
        radii.push(radius);
    }
    Ok(ElasticTube { sources: placement.to_vec(), centers, radii })
}
