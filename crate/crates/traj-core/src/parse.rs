//! File formats.
//!
//! Trajectory file: CSV `traj_id,user_id,t,lat,lng` with a required header
//! row, UTF-8. Road network file: one segment per line,
//! `seg_id,polyline,in_edges,out_edges,length_m,width_m,lane_count,point_count,road_class,zone`
//! where `polyline` is semicolon-separated `lat:lng` pairs, edge lists are
//! semicolon-separated ids, and `zone` is colon-separated reals.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::types::{
    FunctionalZoneVector, GpsPoint, RoadNetwork, RoadSegment, SegmentAttrs, Trajectory,
    TrajectorySet,
};
use crate::{Result, TrajError};

pub const TRAJECTORY_HEADER: &str = "traj_id,user_id,t,lat,lng";
pub const NETWORK_HEADER: &str =
    "seg_id,polyline,in_edges,out_edges,length_m,width_m,lane_count,point_count,road_class,zone";

fn parse_err(line: usize, msg: impl Into<String>) -> TrajError {
    TrajError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse a line-delimited trajectory stream into per-user sets. Points are
/// grouped by `traj_id`, sorted by timestamp, and validated.
pub fn parse_trajectories(reader: impl BufRead) -> Result<Vec<TrajectorySet>> {
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, line)) => {
            let line = line?;
            if line.trim() != TRAJECTORY_HEADER {
                return Err(parse_err(1, format!("expected header `{TRAJECTORY_HEADER}`")));
            }
        }
    }

    // traj_id -> (user, points); insertion-ordered so output is stable
    let mut order: Vec<String> = Vec::new();
    let mut by_traj: BTreeMap<String, (String, Vec<GpsPoint>)> = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(lineno, format!("expected 5 fields, got {}", fields.len())));
        }
        let t: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad timestamp `{}`", fields[2])))?;
        let lat: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad lat `{}`", fields[3])))?;
        let lng: f64 = fields[4]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad lng `{}`", fields[4])))?;
        let point = GpsPoint::new(lat, lng, t).map_err(|e| match e {
            TrajError::Range { field, value, .. } => TrajError::Range {
                line: lineno,
                field,
                value,
            },
            other => other,
        })?;
        let traj_id = fields[0].trim().to_string();
        let user = fields[1].trim().to_string();
        let entry = by_traj.entry(traj_id.clone()).or_insert_with(|| {
            order.push(traj_id.clone());
            (user.clone(), Vec::new())
        });
        if entry.0 != user {
            return Err(parse_err(
                lineno,
                format!("trajectory `{traj_id}` has conflicting users `{}` and `{user}`", entry.0),
            ));
        }
        entry.1.push(point);
    }

    let mut user_order: Vec<String> = Vec::new();
    let mut by_user: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for traj_id in order {
        let (user, mut points) = by_traj.remove(&traj_id).unwrap();
        points.sort_by_key(|p| p.t);
        let traj = Trajectory {
            id: traj_id,
            user: user.clone(),
            points,
        };
        if let Err(problems) = crate::types::validate_trajectory(&traj) {
            return Err(TrajError::InvalidTrajectory {
                id: traj.id,
                problems,
            });
        }
        by_user
            .entry(user.clone())
            .or_insert_with(|| {
                user_order.push(user.clone());
                Vec::new()
            })
            .push(traj);
    }
    Ok(user_order
        .into_iter()
        .map(|user| {
            let trajectories = by_user.remove(&user).unwrap();
            TrajectorySet { user, trajectories }
        })
        .collect())
}

pub fn serialize_trajectories(sets: &[TrajectorySet], mut w: impl Write) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for set in sets {
        for traj in &set.trajectories {
            for p in &traj.points {
                writeln!(w, "{},{},{},{},{}", traj.id, traj.user, p.t, p.lat, p.lng)?;
            }
        }
    }
    Ok(())
}

pub fn parse_road_network(reader: impl BufRead) -> Result<RoadNetwork> {
    let mut network = RoadNetwork::default();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        None => return Ok(network),
        Some((_, line)) => {
            let line = line?;
            if line.trim() != NETWORK_HEADER {
                return Err(parse_err(1, format!("expected header `{NETWORK_HEADER}`")));
            }
        }
    }
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(parse_err(lineno, format!("expected 10 fields, got {}", fields.len())));
        }
        let id = fields[0].trim().to_string();
        let polyline = fields[1]
            .split(';')
            .map(|pair| {
                let mut it = pair.split(':');
                let lat = it
                    .next()
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| parse_err(lineno, format!("bad polyline pair `{pair}`")))?;
                let lng = it
                    .next()
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| parse_err(lineno, format!("bad polyline pair `{pair}`")))?;
                Ok((lat, lng))
            })
            .collect::<Result<Vec<_>>>()?;
        let split_ids = |s: &str| {
            s.split(';')
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().to_string())
                .collect()
        };
        let in_edges = split_ids(fields[2]);
        let out_edges = split_ids(fields[3]);
        let num =
            |s: &str, what: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad {what} `{s}`")))
            };
        let length_m = num(fields[4], "length")?;
        let width_m = num(fields[5], "width")?;
        let lane_count = num(fields[6], "lane_count")? as u32;
        let point_count = num(fields[7], "point_count")? as u32;
        let road_class = num(fields[8], "road_class")? as u32;
        let zone_vals = fields[9]
            .split(':')
            .map(|v| num(v, "zone value"))
            .collect::<Result<Vec<_>>>()?;
        let zone = FunctionalZoneVector::new(zone_vals)
            .map_err(|e| parse_err(lineno, format!("zone: {e}")))?;
        network.segments.insert(
            id.clone(),
            RoadSegment {
                id,
                polyline,
                in_edges,
                out_edges,
                attrs: SegmentAttrs {
                    length_m,
                    width_m,
                    lane_count,
                    point_count,
                    road_class,
                    zone,
                },
            },
        );
    }
    network.validate()?;
    Ok(network)
}

pub fn serialize_road_network(network: &RoadNetwork, mut w: impl Write) -> Result<()> {
    writeln!(w, "{NETWORK_HEADER}")?;
    for (id, seg) in &network.segments {
        let polyline = seg
            .polyline
            .iter()
            .map(|(lat, lng)| format!("{lat}:{lng}"))
            .collect::<Vec<_>>()
            .join(";");
        let in_edges = seg.in_edges.iter().cloned().collect::<Vec<_>>().join(";");
        let out_edges = seg.out_edges.iter().cloned().collect::<Vec<_>>().join(";");
        let zone = seg
            .attrs
            .zone
            .proportions()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(":");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            id,
            polyline,
            in_edges,
            out_edges,
            seg.attrs.length_m,
            seg.attrs.width_m,
            seg.attrs.lane_count,
            seg.attrs.point_count,
            seg.attrs.road_class,
            zone
        )?;
    }
    Ok(())
}
