use traj_core::geo::{bearing_rad, to_local_m};
use traj_core::{RoadNetwork, RoadSegment, Route};

use crate::{FeatureConfig, Result, LOCATION_SCALE};

/// Per-segment feature dimension: bounding box (center 2, edge lengths 2,
/// area 1, direction 1), origin/destination locations (4), in/out
/// intersection counts (2), zone vector (K), length/width (2), point count
/// (1), lane count (1), one-hot road class (C).
pub fn route_dim(cfg: &FeatureConfig) -> usize {
    16 + cfg.zone_categories + cfg.road_classes
}

/// Fixed-layout attribute vector for one road segment. Locations are offsets
/// in meters from the dataset-wide reference origin, scaled by 1e-4.
pub fn segment_features(seg: &RoadSegment, cfg: &FeatureConfig) -> Vec<f64> {
    let mut v = Vec::with_capacity(route_dim(cfg));
    let pts: Vec<(f64, f64)> = seg
        .polyline
        .iter()
        .map(|p| to_local_m(*p, cfg.ref_origin))
        .collect();
    let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    // bounding box: center, edge lengths, area, direction
    v.push((min_x + max_x) / 2.0 * LOCATION_SCALE);
    v.push((min_y + max_y) / 2.0 * LOCATION_SCALE);
    v.push((max_x - min_x) * LOCATION_SCALE);
    v.push((max_y - min_y) * LOCATION_SCALE);
    v.push((max_x - min_x) * (max_y - min_y) * LOCATION_SCALE * LOCATION_SCALE);
    v.push(bearing_rad(seg.start(), seg.end()));
    // endpoint locations
    let s = to_local_m(seg.start(), cfg.ref_origin);
    let e = to_local_m(seg.end(), cfg.ref_origin);
    v.push(s.0 * LOCATION_SCALE);
    v.push(s.1 * LOCATION_SCALE);
    v.push(e.0 * LOCATION_SCALE);
    v.push(e.1 * LOCATION_SCALE);
    // intersection counts
    v.push(seg.in_edges.len() as f64);
    v.push(seg.out_edges.len() as f64);
    // buffer zone vector
    let zone = seg.attrs.zone.proportions();
    for k in 0..cfg.zone_categories {
        v.push(zone.get(k).copied().unwrap_or(0.0));
    }
    v.push(seg.attrs.length_m * LOCATION_SCALE);
    v.push(seg.attrs.width_m * LOCATION_SCALE);
    v.push(seg.attrs.point_count as f64);
    v.push(seg.attrs.lane_count as f64);
    for c in 0..cfg.road_classes {
        v.push(if seg.attrs.road_class as usize == c { 1.0 } else { 0.0 });
    }
    v
}

/// One attribute vector per segment, in route order.
pub fn route_features(
    route: &Route,
    network: &RoadNetwork,
    cfg: &FeatureConfig,
) -> Result<Vec<Vec<f64>>> {
    route
        .segments
        .iter()
        .map(|id| Ok(segment_features(network.segment(id)?, cfg)))
        .collect()
}
