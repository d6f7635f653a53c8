//! Great-circle geometry on WGS-84-ish sphere coordinates in degrees.

/// IUGG mean earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Haversine great-circle distance in meters between two (lat, lng) points.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lng1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lng2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlng = lng2 - lng1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlng / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial bearing from `a` to `b` in radians, north = 0, east = pi/2,
/// normalized to [0, 2*pi).
pub fn bearing_rad(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lng1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lng2) = (b.0.to_radians(), b.1.to_radians());
    let dlng = lng2 - lng1;
    let y = dlng.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlng.cos();
    let th = y.atan2(x);
    (th + 2.0 * std::f64::consts::PI) % (2.0 * std::f64::consts::PI)
}

/// Smallest signed angular difference `b - a` wrapped to (-pi, pi].
pub fn wrap_angle(delta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut d = delta % two_pi;
    if d > std::f64::consts::PI {
        d -= two_pi;
    } else if d <= -std::f64::consts::PI {
        d += two_pi;
    }
    d
}

/// Local equirectangular projection to meters around a reference latitude.
/// City-scale distances only; used where plane geometry is needed
/// (point-to-segment projection).
pub fn to_local_m(p: (f64, f64), origin: (f64, f64)) -> (f64, f64) {
    let meters_per_deg_lat = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let x = (p.1 - origin.1) * meters_per_deg_lat * origin.0.to_radians().cos();
    let y = (p.0 - origin.0) * meters_per_deg_lat;
    (x, y)
}

/// Inverse of `to_local_m`.
pub fn from_local_m(xy: (f64, f64), origin: (f64, f64)) -> (f64, f64) {
    let meters_per_deg_lat = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let lat = origin.0 + xy.1 / meters_per_deg_lat;
    let lng = origin.1 + xy.0 / (meters_per_deg_lat * origin.0.to_radians().cos());
    (lat, lng)
}

/// Distance in meters from point `p` to the polyline, both in degrees.
/// Projects into a local plane around the point, which is accurate at the
/// sub-kilometer scales snapping works with.
pub fn point_polyline_distance_m(p: (f64, f64), polyline: &[(f64, f64)]) -> f64 {
    let origin = p;
    let pl = to_local_m(p, origin);
    let mut best = f64::INFINITY;
    for w in polyline.windows(2) {
        let a = to_local_m(w[0], origin);
        let b = to_local_m(w[1], origin);
        best = best.min(point_segment_distance(pl, a, b));
    }
    if polyline.len() == 1 {
        let a = to_local_m(polyline[0], origin);
        best = ((pl.0 - a.0).powi(2) + (pl.1 - a.1).powi(2)).sqrt();
    }
    best
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let ap = (p.0 - a.0, p.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0)
    };
    let proj = (a.0 + t * ab.0, a.1 + t * ab.1);
    ((p.0 - proj.0).powi(2) + (p.1 - proj.1).powi(2)).sqrt()
}

/// Length of a polyline in meters.
pub fn polyline_length_m(polyline: &[(f64, f64)]) -> f64 {
    polyline.windows(2).map(|w| haversine_m(w[0], w[1])).sum()
}
