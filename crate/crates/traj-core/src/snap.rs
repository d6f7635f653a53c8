//! Trajectory-to-route snapping: greedy nearest-segment assignment per point
//! with a two-hop continuity constraint, then run collapsing. Stands in for
//! full map matching; synthetic data keeps geometry well behaved.

use std::collections::{BTreeSet, VecDeque};

use crate::geo::{
    bearing_rad, from_local_m, haversine_m, point_polyline_distance_m, to_local_m, wrap_angle,
};
use crate::types::{RoadNetwork, Route, Trajectory};
use crate::{Result, TrajError};

#[derive(Debug, Clone, Copy)]
pub struct SnapConfig {
    /// Maximum distance from a point to its segment, meters.
    pub radius_m: f64,
    /// Depth bound when bridging assignments that lost continuity.
    pub bridge_depth: usize,
    /// Minimum displacement for a travel bearing to be trusted; below this
    /// the previous bearing carries over (GPS noise dominates short steps).
    pub min_heading_disp_m: f64,
    /// Score bonus for staying on the previously assigned segment.
    pub stickiness_m: f64,
    /// Neighbors farther than this from a point are excluded from its
    /// smoothing window, so one wild outlier cannot drag its neighbors off.
    pub outlier_gate_m: f64,
}

impl Default for SnapConfig {
    fn default() -> Self {
        SnapConfig {
            radius_m: 50.0,
            bridge_depth: 16,
            min_heading_disp_m: 12.0,
            stickiness_m: 8.0,
            outlier_gate_m: 500.0,
        }
    }
}

/// Snap a trajectory onto the network, returning the connected route it
/// traversed. Consecutive duplicate assignments collapse to one segment.
pub fn snap_to_route(traj: &Trajectory, network: &RoadNetwork, cfg: &SnapConfig) -> Result<Route> {
    if network.is_empty() {
        return Err(TrajError::Network("empty road network".into()));
    }
    let n = traj.points.len();

    // 3-point moving average knocks GPS noise down before any scoring
    let origin = traj.points[0].position();
    let local: Vec<(f64, f64)> = traj
        .points
        .iter()
        .map(|p| to_local_m(p.position(), origin))
        .collect();
    let positions: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let center = local[i];
            let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
            for p in &local[lo..=hi] {
                let dist = ((p.0 - center.0).powi(2) + (p.1 - center.1).powi(2)).sqrt();
                if dist <= cfg.outlier_gate_m {
                    sx += p.0;
                    sy += p.1;
                    m += 1.0;
                }
            }
            from_local_m((sx / m, sy / m), origin)
        })
        .collect();

    // travel bearing per point over a centered window; short displacements
    // carry the previous bearing because GPS noise dominates them
    let mut bearings = vec![None::<f64>; n];
    let mut last = None;
    for i in 0..n {
        let from = positions[i.saturating_sub(1)];
        let to = positions[(i + 1).min(n - 1)];
        if haversine_m(from, to) >= cfg.min_heading_disp_m {
            last = Some(bearing_rad(from, to));
        }
        bearings[i] = last;
    }
    // leading stationary points inherit the first known bearing
    let first_known = bearings.iter().flatten().next().copied();
    for b in bearings.iter_mut() {
        if b.is_none() {
            *b = first_known;
        }
    }

    // per-point candidates within the snap radius, scored by distance plus a
    // heading penalty that separates a directed segment from its reverse twin
    let mut assigned: Vec<&str> = Vec::with_capacity(n);
    for (i, p) in positions.iter().enumerate() {
        let mut candidates: Vec<(&str, f64)> = Vec::new();
        for (id, seg) in &network.segments {
            let d = point_polyline_distance_m(*p, &seg.polyline);
            if d <= cfg.radius_m {
                let mut score = match bearings[i] {
                    Some(travel) => {
                        let seg_bearing = bearing_rad(seg.start(), seg.end());
                        d + 0.5 * cfg.radius_m * (1.0 - wrap_angle(seg_bearing - travel).cos())
                    }
                    None => d,
                };
                if assigned.last() == Some(&id.as_str()) {
                    score -= cfg.stickiness_m;
                }
                candidates.push((id.as_str(), score));
            }
        }
        if candidates.is_empty() {
            return Err(TrajError::UnmatchedPoint {
                index: i,
                radius_m: cfg.radius_m,
            });
        }
        candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(b.0)));
        let pick = match assigned.last() {
            None => candidates[0].0,
            Some(prev) => candidates
                .iter()
                .find(|(id, _)| within_two_hops(network, prev, id))
                .map(|(id, _)| *id)
                .unwrap_or(candidates[0].0),
        };
        assigned.push(pick);
    }

    // collapse runs, then stitch non-adjacent neighbors through the graph
    let mut collapsed: Vec<&str> = Vec::new();
    for id in assigned {
        if collapsed.last() != Some(&id) {
            collapsed.push(id);
        }
    }
    let mut segments: Vec<String> = Vec::new();
    segments.push(collapsed[0].to_string());
    for pair in collapsed.windows(2) {
        let (from, to) = (pair[0], pair[1]);
        let from_seg = network.segment(from)?;
        if from_seg.out_edges.contains(to) {
            segments.push(to.to_string());
            continue;
        }
        let path = bfs_path(network, from, to, cfg.bridge_depth).ok_or_else(|| {
            TrajError::Disconnected {
                from: from.to_string(),
                to: to.to_string(),
            }
        })?;
        for hop in path.into_iter().skip(1) {
            segments.push(hop);
        }
    }
    // bridging can reintroduce immediate repeats at junctions
    segments.dedup();
    Ok(Route::new(segments))
}

fn within_two_hops(network: &RoadNetwork, from: &str, to: &str) -> bool {
    if from == to {
        return true;
    }
    let Ok(seg) = network.segment(from) else {
        return false;
    };
    if seg.out_edges.contains(to) {
        return true;
    }
    seg.out_edges.iter().any(|mid| {
        network
            .segment(mid)
            .map(|m| m.out_edges.contains(to))
            .unwrap_or(false)
    })
}

/// Shortest hop path `from -> .. -> to` over out-edges, bounded by `depth`.
fn bfs_path(network: &RoadNetwork, from: &str, to: &str, depth: usize) -> Option<Vec<String>> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<Vec<&str>> = VecDeque::new();
    queue.push_back(vec![from]);
    seen.insert(from);
    while let Some(path) = queue.pop_front() {
        let cur = *path.last().unwrap();
        if cur == to {
            return Some(path.into_iter().map(String::from).collect());
        }
        if path.len() > depth {
            continue;
        }
        if let Ok(seg) = network.segment(cur) {
            for nxt in &seg.out_edges {
                if seen.insert(nxt) {
                    let mut p = path.clone();
                    p.push(nxt);
                    queue.push_back(p);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{FunctionalZoneVector, GpsPoint, RoadSegment, SegmentAttrs};
    use std::collections::BTreeMap;

    /// Two east-west segments joined end to end: a -> b, plus reverse twins.
    fn line_network() -> RoadNetwork {
        let mut segments = BTreeMap::new();
        let mk = |id: &str,
                  polyline: Vec<(f64, f64)>,
                  ins: &[&str],
                  outs: &[&str]|
         -> RoadSegment {
            RoadSegment {
                id: id.to_string(),
                polyline: polyline.clone(),
                in_edges: ins.iter().map(|s| s.to_string()).collect(),
                out_edges: outs.iter().map(|s| s.to_string()).collect(),
                attrs: SegmentAttrs {
                    length_m: crate::geo::polyline_length_m(&polyline),
                    width_m: 10.0,
                    lane_count: 2,
                    point_count: 2,
                    road_class: 1,
                    zone: FunctionalZoneVector::uniform(5),
                },
            }
        };
        segments.insert(
            "a".into(),
            mk("a", vec![(39.9, 116.300), (39.9, 116.305)], &[], &["b"]),
        );
        segments.insert(
            "b".into(),
            mk("b", vec![(39.9, 116.305), (39.9, 116.310)], &["a"], &[]),
        );
        segments.insert(
            "a_rev".into(),
            mk("a_rev", vec![(39.9, 116.305), (39.9, 116.300)], &["b_rev"], &[]),
        );
        segments.insert(
            "b_rev".into(),
            mk("b_rev", vec![(39.9, 116.310), (39.9, 116.305)], &[], &["a_rev"]),
        );
        RoadNetwork {
            segments,
            intersections: BTreeMap::new(),
        }
    }

    fn traj(points: &[(f64, f64)]) -> Trajectory {
        Trajectory {
            id: "t".into(),
            user: "u".into(),
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(lat, lng))| GpsPoint::new(lat, lng, (i as i64) * 10).unwrap())
                .collect(),
        }
    }

    #[test]
    fn all_points_on_one_segment_give_length_one_route() {
        let net = line_network();
        let t = traj(&[(39.9, 116.301), (39.9, 116.302), (39.9, 116.303)]);
        let route = snap_to_route(&t, &net, &SnapConfig::default()).unwrap();
        assert_eq!(route.segments, vec!["a".to_string()]);
    }

    #[test]
    fn eastbound_points_pick_eastbound_twins() {
        let net = line_network();
        let t = traj(&[
            (39.9, 116.301),
            (39.9, 116.304),
            (39.9, 116.306),
            (39.9, 116.309),
        ]);
        let route = snap_to_route(&t, &net, &SnapConfig::default()).unwrap();
        assert_eq!(route.segments, vec!["a".to_string(), "b".to_string()]);
        route.validate(&net).unwrap();
    }

    #[test]
    fn westbound_points_pick_reverse_twins() {
        let net = line_network();
        let t = traj(&[(39.9, 116.309), (39.9, 116.306), (39.9, 116.304), (39.9, 116.301)]);
        let route = snap_to_route(&t, &net, &SnapConfig::default()).unwrap();
        assert_eq!(route.segments, vec!["b_rev".to_string(), "a_rev".to_string()]);
        route.validate(&net).unwrap();
    }

    #[test]
    fn far_point_reports_unmatched_index() {
        let net = line_network();
        // second point ~10 km north of the line
        let t = traj(&[(39.9, 116.301), (39.99, 116.301)]);
        let err = snap_to_route(&t, &net, &SnapConfig::default()).unwrap_err();
        match err {
            TrajError::UnmatchedPoint { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other}"),
        }
    }
}
