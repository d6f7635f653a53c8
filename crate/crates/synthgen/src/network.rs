use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use traj_core::geo::{from_local_m, polyline_length_m};
use traj_core::{FunctionalZoneVector, RoadNetwork, RoadSegment, SegmentAttrs};

use crate::rng::derive_seed;
use crate::{GenError, Result};

/// Grid road network specification. Every undirected grid edge becomes two
/// directed segments; zones and road classes are assigned from the seeds.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub cell_m: f64,
    pub origin: (f64, f64),
    pub zone_seed: u64,
    pub class_seed: u64,
    /// Number of land-use categories K.
    pub zone_categories: usize,
    /// Number of road classes C.
    pub road_classes: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            grid_rows: 6,
            grid_cols: 6,
            cell_m: 200.0,
            origin: (39.90, 116.30),
            zone_seed: 11,
            class_seed: 12,
            zone_categories: 5,
            road_classes: 5,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_rows < 2 || self.grid_cols < 2 {
            return Err(GenError::Spec("grid must be at least 2x2".into()));
        }
        if self.cell_m <= 0.0 {
            return Err(GenError::Spec("cell_m must be positive".into()));
        }
        if self.zone_categories == 0 || self.road_classes == 0 {
            return Err(GenError::Spec("zone/class counts must be positive".into()));
        }
        Ok(())
    }
}

pub fn intersection_id(r: usize, c: usize) -> String {
    format!("i{r}_{c}")
}

pub fn segment_id(r1: usize, c1: usize, r2: usize, c2: usize) -> String {
    format!("e{r1}_{c1}_{r2}_{c2}")
}

/// Speed limit in m/s for a road class; arterials are faster.
pub fn speed_limit(road_class: u32) -> f64 {
    8.0 + 3.0 * road_class as f64
}

/// Generate the deterministic grid network for a spec.
pub fn generate_network(spec: &NetworkSpec) -> Result<RoadNetwork> {
    spec.validate()?;
    let (rows, cols) = (spec.grid_rows, spec.grid_cols);

    let mut intersections = BTreeMap::new();
    for r in 0..rows {
        for c in 0..cols {
            let xy = (c as f64 * spec.cell_m, r as f64 * spec.cell_m);
            intersections.insert(intersection_id(r, c), from_local_m(xy, spec.origin));
        }
    }

    // undirected edges in a fixed scan order; each yields two directed twins
    let mut undirected: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                undirected.push(((r, c), (r, c + 1)));
            }
            if r + 1 < rows {
                undirected.push(((r, c), (r + 1, c)));
            }
        }
    }

    // zone districts: coarse 2x2-cell blocks with a dominant land-use category
    let k = spec.zone_categories;
    let dominant_of_block = |r: usize, c: usize| -> usize {
        let block = (r / 2, c / 2);
        let s = derive_seed(spec.zone_seed, &[block.0 as u64, block.1 as u64]);
        (s % k as u64) as usize
    };

    let mut segments: BTreeMap<String, RoadSegment> = BTreeMap::new();
    for (a, b) in &undirected {
        let mid = ((a.0 + b.0) as f64 / 2.0, (a.1 + b.1) as f64 / 2.0);
        let dominant = dominant_of_block(mid.0.round() as usize, mid.1.round() as usize);

        let mut zone_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            spec.zone_seed,
            &[1, a.0 as u64, a.1 as u64, b.0 as u64, b.1 as u64],
        ));
        let mut props: Vec<f64> = (0..k).map(|_| 0.05 + 0.1 * zone_rng.gen::<f64>()).collect();
        props[dominant] += 0.6;
        let total: f64 = props.iter().sum();
        let mut props: Vec<f64> = props.iter().map(|p| p / total).collect();
        // force an exact simplex despite rounding
        let correction: f64 = 1.0 - props.iter().sum::<f64>();
        props[0] += correction;
        let zone = FunctionalZoneVector::new(props).expect("normalized zone vector");

        // arterial corridors every third row/column, local streets elsewhere
        let mut class_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            spec.class_seed,
            &[a.0 as u64, a.1 as u64, b.0 as u64, b.1 as u64],
        ));
        let horizontal = a.0 == b.0;
        let corridor = if horizontal { a.0 % 3 == 0 } else { a.1 % 3 == 0 };
        let top = spec.road_classes as u32 - 1;
        let road_class = if corridor {
            top
        } else {
            class_rng.gen_range(0..top.max(1))
        };

        for (from, to) in [(*a, *b), (*b, *a)] {
            let p1 = intersections[&intersection_id(from.0, from.1)];
            let p2 = intersections[&intersection_id(to.0, to.1)];
            let polyline = vec![p1, p2];
            let length_m = polyline_length_m(&polyline);
            let id = segment_id(from.0, from.1, to.0, to.1);
            segments.insert(
                id.clone(),
                RoadSegment {
                    id,
                    polyline,
                    in_edges: Default::default(),
                    out_edges: Default::default(),
                    attrs: SegmentAttrs {
                        length_m,
                        width_m: 3.5 * (road_class + 1) as f64,
                        lane_count: road_class + 1,
                        point_count: 2,
                        road_class,
                        zone: zone.clone(),
                    },
                },
            );
        }
    }

    // connectivity: an incoming segment chains to every outgoing segment at
    // its end intersection except the U-turn twin
    let neighbors = |r: usize, c: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if r > 0 {
            out.push((r - 1, c));
        }
        if r + 1 < rows {
            out.push((r + 1, c));
        }
        if c > 0 {
            out.push((r, c - 1));
        }
        if c + 1 < cols {
            out.push((r, c + 1));
        }
        out
    };
    let ids: Vec<String> = segments.keys().cloned().collect();
    for id in &ids {
        let (from, to) = parse_segment_id(id);
        let mut outs = Vec::new();
        for next in neighbors(to.0, to.1) {
            if next == from {
                continue; // no U-turns
            }
            outs.push(segment_id(to.0, to.1, next.0, next.1));
        }
        for out_id in outs {
            segments.get_mut(id).unwrap().out_edges.insert(out_id.clone());
            segments.get_mut(&out_id).unwrap().in_edges.insert(id.clone());
        }
    }

    let network = RoadNetwork {
        segments,
        intersections,
    };
    network.validate()?;
    Ok(network)
}

pub(crate) fn parse_segment_id(id: &str) -> ((usize, usize), (usize, usize)) {
    let nums: Vec<usize> = id[1..].split('_').map(|v| v.parse().unwrap()).collect();
    ((nums[0], nums[1]), (nums[2], nums[3]))
}
