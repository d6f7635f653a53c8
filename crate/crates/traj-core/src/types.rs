use std::collections::{BTreeMap, BTreeSet};

use crate::{Result, TrajError};

/// A single GPS fix: position in degrees and a unix timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub lat: f64,
    pub lng: f64,
    pub t: i64,
}

impl GpsPoint {
    pub fn new(lat: f64, lng: f64, t: i64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(TrajError::Range {
                line: 0,
                field: "lat",
                value: lat,
            });
        }
        if !(-180.0..=180.0).contains(&lng) || !lng.is_finite() {
            return Err(TrajError::Range {
                line: 0,
                field: "lng",
                value: lng,
            });
        }
        if t < 0 {
            return Err(TrajError::Range {
                line: 0,
                field: "t",
                value: t as f64,
            });
        }
        Ok(GpsPoint { lat, lng, t })
    }

    pub fn position(&self) -> (f64, f64) {
        (self.lat, self.lng)
    }
}

/// One trip: a time-ordered GPS point sequence with its user label.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub user: String,
    pub points: Vec<GpsPoint>,
}

/// All trajectories of a single user.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub user: String,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(user: String, trajectories: Vec<Trajectory>) -> Result<Self> {
        for t in &trajectories {
            if t.user != user {
                return Err(TrajError::InvalidTrajectory {
                    id: t.id.clone(),
                    problems: vec![format!("user `{}` does not match set user `{}`", t.user, user)],
                });
            }
        }
        Ok(TrajectorySet { user, trajectories })
    }
}

/// Proportions of land-use categories around a location; sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalZoneVector {
    proportions: Vec<f64>,
}

impl FunctionalZoneVector {
    pub fn new(proportions: Vec<f64>) -> Result<Self> {
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || proportions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(TrajError::ZoneSum(sum));
        }
        Ok(FunctionalZoneVector { proportions })
    }

    pub fn uniform(k: usize) -> Self {
        FunctionalZoneVector {
            proportions: vec![1.0 / k as f64; k],
        }
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn len(&self) -> usize {
        self.proportions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proportions.is_empty()
    }

    /// Index of the dominant category.
    pub fn dominant(&self) -> usize {
        self.proportions
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAttrs {
    pub length_m: f64,
    pub width_m: f64,
    pub lane_count: u32,
    pub point_count: u32,
    /// Road class index in [0, C).
    pub road_class: u32,
    pub zone: FunctionalZoneVector,
}

/// Directed road segment: geometry plus connectivity in the dual graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: String,
    pub polyline: Vec<(f64, f64)>,
    pub in_edges: BTreeSet<String>,
    pub out_edges: BTreeSet<String>,
    pub attrs: SegmentAttrs,
}

impl RoadSegment {
    pub fn start(&self) -> (f64, f64) {
        self.polyline[0]
    }

    pub fn end(&self) -> (f64, f64) {
        *self.polyline.last().unwrap()
    }
}

/// Sequence of road segment ids a trajectory traversed. Consecutive segments
/// must be connected (successor listed in predecessor's out-edges).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub segments: Vec<String>,
}

impl Route {
    pub fn new(segments: Vec<String>) -> Self {
        Route { segments }
    }

    pub fn validate(&self, network: &RoadNetwork) -> Result<()> {
        for w in self.segments.windows(2) {
            let seg = network.segment(&w[0])?;
            if !seg.out_edges.contains(&w[1]) {
                return Err(TrajError::RouteConnectivity {
                    from: w[0].clone(),
                    to: w[1].clone(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Directed road network: segment table plus intersection coordinates.
#[derive(Debug, Clone, Default)]
pub struct RoadNetwork {
    pub segments: BTreeMap<String, RoadSegment>,
    pub intersections: BTreeMap<String, (f64, f64)>,
}

impl RoadNetwork {
    pub fn segment(&self, id: &str) -> Result<&RoadSegment> {
        self.segments
            .get(id)
            .ok_or_else(|| TrajError::UnknownSegment(id.to_string()))
    }

    /// Check that every in/out edge reference resolves and segment geometry
    /// invariants hold.
    pub fn validate(&self) -> Result<()> {
        for (id, seg) in &self.segments {
            if seg.polyline.len() < 2 {
                return Err(TrajError::Network(format!("segment `{id}` polyline too short")));
            }
            if seg.attrs.length_m <= 0.0 {
                return Err(TrajError::Network(format!("segment `{id}` has non-positive length")));
            }
            for e in seg.in_edges.iter().chain(seg.out_edges.iter()) {
                if !self.segments.contains_key(e) {
                    return Err(TrajError::Network(format!(
                        "segment `{id}` references missing segment `{e}`"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Return the trajectory unchanged iff all invariants hold; otherwise list
/// every violation. Never mutates its input.
pub fn validate_trajectory(traj: &Trajectory) -> std::result::Result<&Trajectory, Vec<String>> {
    let mut problems = Vec::new();
    if traj.points.len() < 2 {
        problems.push("too short: needs at least 2 points".to_string());
    }
    for (i, w) in traj.points.windows(2).enumerate() {
        if w[1].t == w[0].t {
            problems.push(format!("duplicate timestamp {} at points {}..{}", w[0].t, i, i + 1));
        } else if w[1].t < w[0].t {
            problems.push(format!(
                "non-monotone timestamps at points {}..{}: {} then {}",
                i,
                i + 1,
                w[0].t,
                w[1].t
            ));
        }
    }
    if problems.is_empty() {
        Ok(traj)
    } else {
        Err(problems)
    }
}
