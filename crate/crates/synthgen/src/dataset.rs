use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use traj_core::geo::{from_local_m, to_local_m};
use traj_core::{GpsPoint, RoadNetwork, Route, Trajectory, TrajectorySet};

use crate::network::{parse_segment_id, speed_limit};
use crate::profile::DriverProfile;
use crate::rng::{derive_seed, normal};
use crate::{GenError, Result};

/// Dataset generation parameters.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub per_user: usize,
    pub sample_period_s: i64,
    /// Isotropic GPS noise sigma in meters.
    pub noise_sigma_m: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            per_user: 30,
            sample_period_s: 5,
            noise_sigma_m: 5.0,
            seed: 2024,
        }
    }
}

/// 2018-12-03 00:00:00 UTC; trips are laid out on days from here.
const BASE_EPOCH: i64 = 1_543_795_200;
/// Trips start and end this far inside the first/last segment, so endpoints
/// do not sit exactly on an intersection shared by many segments.
const ENDPOINT_INSET_M: f64 = 20.0;
const MIN_TRIP_CELLS: i64 = 3;

#[derive(Debug, Clone, Copy)]
enum RouteKind {
    Shortest,
    Fastest,
    Habit,
}

/// Generate `per_user` trajectories for every profile. Returns per-user sets
/// plus the ground-truth route of every trajectory. Fully deterministic for a
/// given (network, profiles, params).
pub fn generate_dataset(
    network: &RoadNetwork,
    profiles: &[DriverProfile],
    params: &GenParams,
) -> Result<(Vec<TrajectorySet>, BTreeMap<String, Route>)> {
    if params.per_user == 0 {
        return Err(GenError::Spec("per_user must be at least 1".into()));
    }
    if params.sample_period_s <= 0 {
        return Err(GenError::Spec("sample_period_s must be positive".into()));
    }
    for p in profiles {
        p.validate()?;
    }

    let intersections: Vec<(String, (f64, f64))> = network
        .intersections
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();

    // intersections whose adjacent segments are dominated by each zone category
    let mut zone_spots: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, (id, _)) in intersections.iter().enumerate() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for seg in network.segments.values() {
            let (from, _) = parse_segment_id(&seg.id);
            if crate::network::intersection_id(from.0, from.1) == *id {
                *counts.entry(seg.attrs.zone.dominant()).or_default() += 1;
            }
        }
        if let Some((&dominant, _)) = counts.iter().max_by_key(|(_, &c)| c) {
            zone_spots.entry(dominant).or_default().push(idx);
        }
    }

    let mut sets = Vec::with_capacity(profiles.len());
    let mut truth: BTreeMap<String, Route> = BTreeMap::new();

    for (ui, profile) in profiles.iter().enumerate() {
        let mut history: BTreeSet<String> = BTreeSet::new();
        let mut trajectories = Vec::with_capacity(params.per_user);
        for trip in 0..params.per_user {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                params.seed,
                &[ui as u64, trip as u64],
            ));
            let (origin, dest) =
                sample_od(&intersections, &zone_spots, profile, &mut rng)?;
            let kind = sample_route_kind(profile, &mut rng);
            let route = choose_route(network, &intersections[origin].0, &intersections[dest].0, kind, &history)?;
            for seg in &route.segments {
                history.insert(seg.clone());
            }
            let traj_id = format!("{}_t{}", profile.user, trip);
            let points = integrate_kinematics(network, &route, profile, params, &mut rng)?;
            truth.insert(traj_id.clone(), route);
            trajectories.push(Trajectory {
                id: traj_id,
                user: profile.user.clone(),
                points,
            });
        }
        sets.push(TrajectorySet {
            user: profile.user.clone(),
            trajectories,
        });
    }
    Ok((sets, truth))
}

fn sample_od(
    intersections: &[(String, (f64, f64))],
    zone_spots: &BTreeMap<usize, Vec<usize>>,
    profile: &DriverProfile,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize)> {
    let grid_pos = |idx: usize| -> (i64, i64) {
        let id = &intersections[idx].0;
        let nums: Vec<i64> = id[1..].split('_').map(|v| v.parse().unwrap()).collect();
        (nums[0], nums[1])
    };
    let habit_pool = zone_spots.get(&profile.habit_zones);
    for _ in 0..64 {
        let origin = rng.gen_range(0..intersections.len());
        let dest = if rng.gen::<f64>() < 0.7 {
            match habit_pool {
                Some(pool) if !pool.is_empty() => pool[rng.gen_range(0..pool.len())],
                _ => rng.gen_range(0..intersections.len()),
            }
        } else {
            rng.gen_range(0..intersections.len())
        };
        let (r1, c1) = grid_pos(origin);
        let (r2, c2) = grid_pos(dest);
        if (r1 - r2).abs() + (c1 - c2).abs() >= MIN_TRIP_CELLS {
            return Ok((origin, dest));
        }
    }
    // fall back to the most distant pair from a uniform draw
    let origin = rng.gen_range(0..intersections.len());
    let (r1, c1) = grid_pos(origin);
    let dest = (0..intersections.len())
        .max_by_key(|&i| {
            let (r2, c2) = grid_pos(i);
            (r1 - r2).abs() + (c1 - c2).abs()
        })
        .unwrap();
    Ok((origin, dest))
}

fn sample_route_kind(profile: &DriverProfile, rng: &mut ChaCha8Rng) -> RouteKind {
    let u: f64 = rng.gen();
    let w = profile.route_pref;
    if u < w.weight_shortest {
        RouteKind::Shortest
    } else if u < w.weight_shortest + w.weight_fastest {
        RouteKind::Fastest
    } else {
        RouteKind::Habit
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    seg: String,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost with id tie-break for determinism
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap()
            .then_with(|| other.seg.cmp(&self.seg))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the directed segment graph from any segment leaving `origin`
/// to any segment entering `dest`.
fn choose_route(
    network: &RoadNetwork,
    origin: &str,
    dest: &str,
    kind: RouteKind,
    history: &BTreeSet<String>,
) -> Result<Route> {
    let seg_cost = |id: &str| -> f64 {
        let seg = &network.segments[id];
        let base = match kind {
            RouteKind::Shortest => seg.attrs.length_m,
            RouteKind::Fastest => seg.attrs.length_m / speed_limit(seg.attrs.road_class),
            RouteKind::Habit => {
                let discount = if history.contains(id) { 0.45 } else { 1.0 };
                seg.attrs.length_m * discount
            }
        };
        base
    };
    let starts_at = |id: &str, node: &str| {
        let (from, _) = parse_segment_id(id);
        crate::network::intersection_id(from.0, from.1) == node
    };
    let ends_at = |id: &str, node: &str| {
        let (_, to) = parse_segment_id(id);
        crate::network::intersection_id(to.0, to.1) == node
    };

    let mut dist: BTreeMap<String, f64> = BTreeMap::new();
    let mut prev: BTreeMap<String, String> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for id in network.segments.keys() {
        if starts_at(id, origin) {
            let c = seg_cost(id);
            dist.insert(id.clone(), c);
            heap.push(HeapEntry {
                cost: c,
                seg: id.clone(),
            });
        }
    }
    let mut goal: Option<String> = None;
    while let Some(HeapEntry { cost, seg }) = heap.pop() {
        if dist.get(&seg).map_or(true, |&d| cost > d) {
            continue;
        }
        if ends_at(&seg, dest) {
            goal = Some(seg);
            break;
        }
        for next in &network.segments[&seg].out_edges {
            let ncost = cost + seg_cost(next);
            if dist.get(next).map_or(true, |&d| ncost < d) {
                dist.insert(next.clone(), ncost);
                prev.insert(next.clone(), seg.clone());
                heap.push(HeapEntry {
                    cost: ncost,
                    seg: next.clone(),
                });
            }
        }
    }
    let goal = goal.ok_or_else(|| GenError::Disconnected {
        from: origin.to_string(),
        to: dest.to_string(),
    })?;
    let mut segments = vec![goal.clone()];
    let mut cur = goal;
    while let Some(p) = prev.get(&cur) {
        segments.push(p.clone());
        cur = p.clone();
    }
    segments.reverse();
    Ok(Route::new(segments))
}

/// Drive the route: per-segment cruise speeds from the profile, first-order
/// speed tracking with jitter, fixed sampling period, isotropic GPS noise.
fn integrate_kinematics(
    network: &RoadNetwork,
    route: &Route,
    profile: &DriverProfile,
    params: &GenParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GpsPoint>> {
    // departure time
    let hour = {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = 23;
        for (h, &p) in profile.departure_dist.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = h;
                break;
            }
        }
        pick as i64
    };
    let day = rng.gen_range(0..28i64);
    let t0 = BASE_EPOCH + day * 86_400 + hour * 3_600 + rng.gen_range(0..3_600i64);

    // stitched geometry in a local plane
    let origin_ll = network.segments[&route.segments[0]].polyline[0];
    let mut path: Vec<(f64, f64)> = Vec::new();
    let mut seg_end_m: Vec<(f64, f64)> = Vec::new(); // (cumulative end, cruise speed)
    let mut total = 0.0;
    for id in &route.segments {
        let seg = &network.segments[id];
        let limit = speed_limit(seg.attrs.road_class);
        let cruise = (profile.speed_mean + profile.speed_std * normal(rng)).clamp(3.0, limit);
        for (i, p) in seg.polyline.iter().enumerate() {
            let xy = to_local_m(*p, origin_ll);
            if i == 0 && !path.is_empty() {
                continue; // joint shared with the previous segment
            }
            path.push(xy);
        }
        total += seg.attrs.length_m;
        seg_end_m.push((total, cruise));
    }

    let inset = ENDPOINT_INSET_M.min(total / 4.0);
    let start_m = inset;
    let end_m = total - inset;

    let cruise_at = |pos: f64| -> f64 {
        for (end, cruise) in &seg_end_m {
            if pos <= *end {
                return *cruise;
            }
        }
        seg_end_m.last().unwrap().1
    };
    let position_at = |pos: f64| -> (f64, f64) {
        let mut remaining = pos;
        for w in path.windows(2) {
            let dx = w[1].0 - w[0].0;
            let dy = w[1].1 - w[0].1;
            let len = (dx * dx + dy * dy).sqrt();
            if remaining <= len || len == 0.0 {
                let t = if len == 0.0 { 0.0 } else { remaining / len };
                return (w[0].0 + t * dx, w[0].1 + t * dy);
            }
            remaining -= len;
        }
        *path.last().unwrap()
    };

    let dt = params.sample_period_s as f64;
    let mut points = Vec::new();
    let mut pos = start_m;
    let mut speed = 0.6 * cruise_at(pos);
    let mut step = 0i64;
    loop {
        let (x, y) = position_at(pos);
        let nx = x + params.noise_sigma_m * normal(rng);
        let ny = y + params.noise_sigma_m * normal(rng);
        let (lat, lng) = from_local_m((nx, ny), origin_ll);
        points.push(GpsPoint::new(lat, lng, t0 + step * params.sample_period_s)?);
        if pos >= end_m {
            break;
        }
        let target = cruise_at(pos);
        let accel = ((target - speed) / dt).clamp(-2.0, 2.0) + profile.accel_jitter * normal(rng);
        speed = (speed + accel * dt).clamp(2.0, 30.0);
        let next = pos + speed * dt;
        step += 1;
        if next >= end_m {
            // arrival: skip a final fix that would nearly duplicate the last
            // one, keeping inter-point displacements meaningful
            if end_m - pos >= 12.0 {
                pos = end_m;
                continue;
            }
            break;
        }
        pos = next;
    }
    if points.len() < 2 {
        // degenerate short trip: add an explicit arrival fix
        let (x, y) = position_at(end_m);
        let (lat, lng) = from_local_m((x, y), origin_ll);
        points.push(GpsPoint::new(lat, lng, t0 + params.sample_period_s)?);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_network, NetworkSpec};
    use traj_core::validate_trajectory;

    fn test_network() -> RoadNetwork {
        generate_network(&NetworkSpec::default()).unwrap()
    }

    fn profiles(n: usize) -> Vec<DriverProfile> {
        (0..n)
            .map(|i| DriverProfile::sample(&format!("u{i:02}"), i, 5, 7))
            .collect()
    }

    #[test]
    fn one_profile_three_trips_all_labeled() {
        let net = test_network();
        let p = profiles(1);
        let (sets, truth) = generate_dataset(
            &net,
            &p,
            &GenParams {
                per_user: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].trajectories.len(), 3);
        assert!(sets[0].trajectories.iter().all(|t| t.user == "u00"));
        assert_eq!(truth.len(), 3);
    }

    #[test]
    fn generation_is_deterministic() {
        let net = test_network();
        let p = profiles(2);
        let params = GenParams {
            per_user: 4,
            ..Default::default()
        };
        let (a, _) = generate_dataset(&net, &p, &params).unwrap();
        let (b, _) = generate_dataset(&net, &p, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectories_validate_and_routes_connect() {
        let net = test_network();
        let p = profiles(3);
        let params = GenParams {
            per_user: 5,
            ..Default::default()
        };
        let (sets, truth) = generate_dataset(&net, &p, &params).unwrap();
        for set in &sets {
            for t in &set.trajectories {
                validate_trajectory(t).unwrap();
                truth[&t.id].validate(&net).unwrap();
            }
        }
    }

    #[test]
    fn speed_profiles_separate_empirical_means() {
        // all-arterial network so limits do not clamp the fast driver
        let spec = NetworkSpec {
            grid_rows: 7,
            grid_cols: 7,
            ..Default::default()
        };
        let net = generate_network(&spec).unwrap();
        let mut slow = DriverProfile::sample("slow", 0, 5, 1);
        slow.speed_mean = 8.0;
        slow.speed_std = 0.5;
        let mut fast = DriverProfile::sample("fast", 1, 5, 1);
        fast.speed_mean = 16.0;
        fast.speed_std = 0.5;
        let params = GenParams {
            per_user: 50,
            sample_period_s: 5,
            noise_sigma_m: 2.0,
            seed: 99,
        };
        let (sets, _) = generate_dataset(&net, &[slow, fast], &params).unwrap();
        let mean_speed = |set: &TrajectorySet| -> f64 {
            let mut speeds = Vec::new();
            for t in &set.trajectories {
                let mut dist = 0.0;
                for w in t.points.windows(2) {
                    dist += traj_core::geo::haversine_m(w[0].position(), w[1].position());
                }
                let dur = (t.points.last().unwrap().t - t.points[0].t) as f64;
                if dur > 0.0 {
                    speeds.push(dist / dur);
                }
            }
            speeds.iter().sum::<f64>() / speeds.len() as f64
        };
        let slow_mean = mean_speed(&sets[0]);
        let fast_mean = mean_speed(&sets[1]);
        assert!(
            fast_mean - slow_mean > 4.0,
            "slow {slow_mean:.2} vs fast {fast_mean:.2}"
        );
    }
}
