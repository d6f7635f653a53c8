use traj_core::geo::{bearing_rad, haversine_m, point_polyline_distance_m, to_local_m};
use traj_core::{RoadNetwork, Route, Trajectory};

use crate::kinematics::{KinematicSeries, NUM_QUANTITIES};
use crate::{FeatureConfig, Result, LOCATION_SCALE};

/// Global semantic vector, fixed layout:
/// [mean, std] per kinematic quantity (10), origin xy (2), destination xy (2),
/// trajectory bbox edge lengths (2) and area (1), overall direction (1),
/// path length (1), departure-hour one-hot (24), duration (1),
/// origin-buffer zone (K), destination-buffer zone (K), their difference (K),
/// route-segment means of lane/length/width/point/in/out (6).
pub fn global_features(
    traj: &Trajectory,
    route: &Route,
    series: &KinematicSeries,
    network: &RoadNetwork,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>> {
    let k = cfg.zone_categories;
    let mut v = Vec::with_capacity(crate::global_dim(cfg));

    for q in 0..NUM_QUANTITIES {
        let xs = series.quantity(q);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        v.push(mean);
        v.push(var.sqrt());
    }

    let origin = traj.points[0].position();
    let dest = traj.points.last().unwrap().position();
    let o = to_local_m(origin, cfg.ref_origin);
    let d = to_local_m(dest, cfg.ref_origin);
    v.push(o.0 * LOCATION_SCALE);
    v.push(o.1 * LOCATION_SCALE);
    v.push(d.0 * LOCATION_SCALE);
    v.push(d.1 * LOCATION_SCALE);

    let xs: Vec<(f64, f64)> = traj
        .points
        .iter()
        .map(|p| to_local_m(p.position(), cfg.ref_origin))
        .collect();
    let min_x = xs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = xs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = xs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = xs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    v.push((max_x - min_x) * LOCATION_SCALE);
    v.push((max_y - min_y) * LOCATION_SCALE);
    v.push((max_x - min_x) * (max_y - min_y) * LOCATION_SCALE * LOCATION_SCALE);
    v.push(if origin == dest { 0.0 } else { bearing_rad(origin, dest) });

    let path_len: f64 = traj
        .points
        .windows(2)
        .map(|w| haversine_m(w[0].position(), w[1].position()))
        .sum();
    v.push(path_len * LOCATION_SCALE);

    let hour = ((traj.points[0].t / 3600) % 24) as usize;
    for h in 0..24 {
        v.push(if h == hour { 1.0 } else { 0.0 });
    }
    let duration = (traj.points.last().unwrap().t - traj.points[0].t) as f64;
    v.push(duration * 1e-3);

    let zo = buffer_zone(origin, network, cfg);
    let zd = buffer_zone(dest, network, cfg);
    v.extend_from_slice(&zo);
    v.extend_from_slice(&zd);
    for i in 0..k {
        v.push(zd[i] - zo[i]);
    }

    // means over route segments
    let mut lane = 0.0;
    let mut length = 0.0;
    let mut width = 0.0;
    let mut points = 0.0;
    let mut ins = 0.0;
    let mut outs = 0.0;
    for id in &route.segments {
        let seg = network.segment(id)?;
        lane += seg.attrs.lane_count as f64;
        length += seg.attrs.length_m;
        width += seg.attrs.width_m;
        points += seg.attrs.point_count as f64;
        ins += seg.in_edges.len() as f64;
        outs += seg.out_edges.len() as f64;
    }
    let m = route.segments.len().max(1) as f64;
    v.push(lane / m);
    v.push(length / m * LOCATION_SCALE);
    v.push(width / m * LOCATION_SCALE);
    v.push(points / m);
    v.push(ins / m);
    v.push(outs / m);

    debug_assert_eq!(v.len(), crate::global_dim(cfg));
    Ok(v)
}

/// Mean zone vector of segments within the buffer radius of a point, falling
/// back to the nearest segment's zone when the buffer is empty.
fn buffer_zone(point: (f64, f64), network: &RoadNetwork, cfg: &FeatureConfig) -> Vec<f64> {
    let k = cfg.zone_categories;
    let mut acc = vec![0.0; k];
    let mut count = 0usize;
    let mut nearest: Option<(f64, &[f64])> = None;
    for seg in network.segments.values() {
        let d = point_polyline_distance_m(point, &seg.polyline);
        let zone = seg.attrs.zone.proportions();
        if d <= cfg.buffer_m {
            for (a, z) in acc.iter_mut().zip(zone) {
                *a += z;
            }
            count += 1;
        }
        if nearest.as_ref().map_or(true, |(nd, _)| d < *nd) {
            nearest = Some((d, zone));
        }
    }
    if count > 0 {
        for a in acc.iter_mut() {
            *a /= count as f64;
        }
        acc
    } else if let Some((_, zone)) = nearest {
        zone.iter().take(k).copied().collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::kinematics;
    use std::collections::BTreeMap;
    use traj_core::{FunctionalZoneVector, GpsPoint, RoadSegment, SegmentAttrs};

    fn network() -> RoadNetwork {
        let polyline = vec![(39.90, 116.30), (39.90, 116.31)];
        let seg = RoadSegment {
            id: "r1".into(),
            polyline: polyline.clone(),
            in_edges: Default::default(),
            out_edges: Default::default(),
            attrs: SegmentAttrs {
                length_m: traj_core::geo::polyline_length_m(&polyline),
                width_m: 7.0,
                lane_count: 3,
                point_count: 2,
                road_class: 1,
                zone: FunctionalZoneVector::new(vec![0.6, 0.1, 0.1, 0.1, 0.1]).unwrap(),
            },
        };
        let mut segments = BTreeMap::new();
        segments.insert("r1".to_string(), seg);
        RoadNetwork {
            segments,
            intersections: BTreeMap::new(),
        }
    }

    fn traj_on_segment() -> Trajectory {
        Trajectory {
            id: "t".into(),
            user: "u".into(),
            points: vec![
                GpsPoint::new(39.90, 116.301, 8 * 3600 + 30 * 60).unwrap(),
                GpsPoint::new(39.90, 116.304, 8 * 3600 + 30 * 60 + 30).unwrap(),
                GpsPoint::new(39.90, 116.308, 8 * 3600 + 30 * 60 + 60).unwrap(),
            ],
        }
    }

    #[test]
    fn departure_hour_one_hot() {
        let cfg = FeatureConfig::default();
        let net = network();
        let t = traj_on_segment();
        let series = kinematics(&t).unwrap();
        let route = traj_core::Route::new(vec!["r1".into()]);
        let g = global_features(&t, &route, &series, &net, &cfg).unwrap();
        let hour_block = &g[19..19 + 24];
        assert_eq!(hour_block[8], 1.0);
        assert_eq!(hour_block.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn same_origin_destination_zeroes_zone_difference() {
        let cfg = FeatureConfig::default();
        let net = network();
        let mut t = traj_on_segment();
        // loop trip: end where it started
        let last = t.points.len() - 1;
        t.points[last] = GpsPoint::new(39.90, 116.301, t.points[last].t).unwrap();
        let series = kinematics(&t).unwrap();
        let route = traj_core::Route::new(vec!["r1".into()]);
        let g = global_features(&t, &route, &series, &net, &cfg).unwrap();
        let k = cfg.zone_categories;
        let diff_block = &g[44 + 2 * k..44 + 3 * k];
        assert!(diff_block.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn full_vector_matches_componentwise_oracle() {
        // assemble the expected vector field by field, independently
        let cfg = FeatureConfig::default();
        let net = network();
        let t = traj_on_segment();
        let series = kinematics(&t).unwrap();
        let route = traj_core::Route::new(vec!["r1".into()]);
        let g = global_features(&t, &route, &series, &net, &cfg).unwrap();
        assert_eq!(g.len(), crate::global_dim(&cfg));

        // speed mean/std oracle over the padded series
        let speeds = &series.speed;
        let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
        let std = (speeds.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / speeds.len() as f64)
            .sqrt();
        assert!((g[0] - mean).abs() < 1e-12);
        assert!((g[1] - std).abs() < 1e-12);

        // origin/destination encoding oracle
        let o = to_local_m((39.90, 116.301), cfg.ref_origin);
        assert!((g[10] - o.0 * 1e-4).abs() < 1e-12);
        assert!((g[11] - o.1 * 1e-4).abs() < 1e-12);

        // duration and path length
        let dur = 60.0;
        assert!((g[43] - dur * 1e-3).abs() < 1e-12);
        let plen: f64 = t
            .points
            .windows(2)
            .map(|w| haversine_m(w[0].position(), w[1].position()))
            .sum();
        assert!((g[18] - plen * 1e-4).abs() < 1e-12);

        // zone blocks: both endpoints on r1, zone = its vector
        let k = cfg.zone_categories;
        let zone = [0.6, 0.1, 0.1, 0.1, 0.1];
        for i in 0..k {
            assert!((g[44 + i] - zone[i]).abs() < 1e-12);
            assert!((g[44 + k + i] - zone[i]).abs() < 1e-12);
            assert!((g[44 + 2 * k + i]).abs() < 1e-12);
        }

        // route segment means (single segment)
        let base = 44 + 3 * k;
        assert_eq!(g[base], 3.0); // lanes
        assert!((g[base + 2] - 7.0 * 1e-4).abs() < 1e-12); // width
        assert_eq!(g[base + 3], 2.0); // point count
    }
}
