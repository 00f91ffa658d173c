//! Degradation maps: piecewise-linear interpolation of per-location median
//! shifts over a Delaunay triangulation, nearest-source value outside the hull.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spade::handles::FixedVertexHandle;
use spade::{DelaunayTriangulation, HasPosition, Point2, PositionInTriangulation, Triangulation};

use crate::error::{Error, Result};
use crate::model::{median, GridLocation};
use crate::trend::ShiftRecord;

/// Median shift across devices at each oscillator location.
pub fn location_medians(records: &[ShiftRecord]) -> Result<BTreeMap<GridLocation, f64>> {
    if records.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut grouped: BTreeMap<GridLocation, Vec<f64>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.location).or_default().push(r.delta);
    }
    grouped
        .into_iter()
        .map(|(loc, deltas)| median(&deltas).map(|m| (loc, m)))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Source {
    location: GridLocation,
    value: f64,
}

impl HasPosition for Source {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        Point2::new(self.location.x as f64, self.location.y as f64)
    }
}

/// Evaluates the interpolant at arbitrary points.
pub struct Interpolator {
    triangulation: DelaunayTriangulation<Source>,
    /// Sorted by location.
    sources: Vec<Source>,
}

fn cross(o: GridLocation, a: GridLocation, b: GridLocation) -> i128 {
    let (ax, ay) = ((a.x - o.x) as i128, (a.y - o.y) as i128);
    let (bx, by) = ((b.x - o.x) as i128, (b.y - o.y) as i128);
    ax * by - ay * bx
}

impl Interpolator {
    pub fn new(sources: &BTreeMap<GridLocation, f64>) -> Result<Self> {
        if sources.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "need at least 3 source locations, got {}",
                sources.len()
            )));
        }
        if let Some((loc, _)) = sources.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite source value at {loc}")));
        }
        let sources: Vec<Source> = sources
            .iter()
            .map(|(&location, &value)| Source { location, value })
            .collect();
        let (a, b) = (sources[0].location, sources[1].location);
        if sources[2..].iter().all(|s| cross(a, b, s.location) == 0) {
            return Err(Error::DegenerateGeometry("all source locations are collinear".into()));
        }
        let mut triangulation = DelaunayTriangulation::new();
        for s in &sources {
            triangulation
                .insert(*s)
                .map_err(|e| Error::DegenerateGeometry(format!("cannot triangulate {}: {e:?}", s.location)))?;
        }
        Ok(Self { triangulation, sources })
    }

    fn value(&self, v: FixedVertexHandle) -> f64 {
        self.triangulation.vertex(v).data().value
    }

    fn nearest(&self, x: f64, y: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for s in &self.sources {
            let dx = s.location.x as f64 - x;
            let dy = s.location.y as f64 - y;
            let d = dx * dx + dy * dy;
            if d < best.0 {
                best = (d, s.value);
            }
        }
        best.1
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let p = Point2::new(x, y);
        match self.triangulation.locate(p) {
            PositionInTriangulation::OnVertex(v) => self.value(v),
            PositionInTriangulation::OnEdge(e) => {
                let edge = self.triangulation.directed_edge(e);
                let [mut from, mut to] = edge.vertices();
                // either half-edge may be returned; fix the direction so results are reproducible
                if to.data().location < from.data().location {
                    std::mem::swap(&mut from, &mut to);
                }
                let (a, b) = (from.position(), to.position());
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                let (va, vb) = (from.data().value, to.data().value);
                (va + t * (vb - va)).clamp(va.min(vb), va.max(vb))
            }
            PositionInTriangulation::OnFace(f) => {
                let mut verts = self.triangulation.face(f).vertices();
                verts.sort_by_key(|v| v.data().location);
                let [a, b, c] = verts.map(|v| v.position());
                let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
                let w0 = (((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det).max(0.0);
                let w1 = (((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det).max(0.0);
                let w2 = (1.0 - w0 - w1).max(0.0);
                let sum = w0 + w1 + w2;
                let values = verts.map(|v| v.data().value);
                let raw = (w0 * values[0] + w1 * values[1] + w2 * values[2]) / sum;
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                raw.clamp(lo, hi)
            }
            PositionInTriangulation::OutsideOfConvexHull(_) | PositionInTriangulation::NoTriangulation => {
                self.nearest(x, y)
            }
        }
    }

    /// Evaluates on a caller-supplied lattice.
    pub fn interpolate_on(&self, xs: Vec<f64>, ys: Vec<f64>) -> DegradationMap {
        let values = ys
            .par_iter()
            .flat_map_iter(|&y| xs.iter().map(move |&x| (x, y)))
            .map(|(x, y)| self.eval(x, y))
            .collect();
        DegradationMap {
            xs,
            ys,
            values,
            sources: self.sources.iter().map(|s| (s.location, s.value)).collect(),
        }
    }
}

/// Interpolated median shifts on a regular lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major: `values[j * xs.len() + i]` is at `(xs[i], ys[j])`.
    pub values: Vec<f64>,
    pub sources: Vec<(GridLocation, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    /// Most negative interpolated value.
    pub hotspot: MapPoint,
    pub maximum: MapPoint,
    /// Source with the most negative median shift.
    pub worst_source: GridLocation,
    pub worst_source_value: f64,
    pub resolution: (usize, usize),
    pub source_count: usize,
}

impl DegradationMap {
    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }

    pub fn points(&self) -> impl Iterator<Item = MapPoint> + '_ {
        self.ys.iter().enumerate().flat_map(move |(j, &y)| {
            self.xs.iter().enumerate().map(move |(i, &x)| MapPoint {
                x,
                y,
                value: self.value_at(i, j),
            })
        })
    }

    /// Extrema take the first point in row-major order on ties.
    pub fn summary(&self) -> MapSummary {
        let mut points = self.points();
        let first = points.next().expect("maps have at least one point");
        let (mut lo, mut hi) = (first, first);
        for p in points {
            if p.value < lo.value {
                lo = p;
            }
            if p.value > hi.value {
                hi = p;
            }
        }
        let worst = self
            .sources
            .iter()
            .fold(self.sources[0], |best, &s| if s.1 < best.1 { s } else { best });
        MapSummary {
            hotspot: lo,
            maximum: hi,
            worst_source: worst.0,
            worst_source_value: worst.1,
            resolution: (self.xs.len(), self.ys.len()),
            source_count: self.sources.len(),
        }
    }
}

fn axis(lo: i64, hi: i64, n: usize) -> Vec<f64> {
    let steps = (n - 1) as i64;
    (0..n as i64)
        .map(|i| (lo * steps + (hi - lo) * i) as f64 / steps as f64)
        .collect()
}

/// Interpolates over the sources' bounding box with `resolution` points per axis.
pub fn interpolate(sources: &BTreeMap<GridLocation, f64>, resolution: usize) -> Result<DegradationMap> {
    if resolution < 2 {
        return Err(Error::invalid("resolution", "need at least 2 points per axis"));
    }
    let interpolator = Interpolator::new(sources)?;
    let (x0, x1) = bounds(sources.keys().map(|l| l.x));
    let (y0, y1) = bounds(sources.keys().map(|l| l.y));
    Ok(interpolator.interpolate_on(axis(x0, x1, resolution), axis(y0, y1, resolution)))
}

fn bounds(values: impl Iterator<Item = i64>) -> (i64, i64) {
    values.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn src(points: &[(i64, i64, f64)]) -> BTreeMap<GridLocation, f64> {
        points.iter().map(|&(x, y, v)| (GridLocation::new(x, y), v)).collect()
    }

    fn record(device: &str, x: i64, y: i64, delta: f64) -> ShiftRecord {
        ShiftRecord {
            device_id: device.into(),
            ro_id: "ro000".into(),
            location: GridLocation::new(x, y),
            f0_median: 1.0,
            f1_median: 1.0 + delta,
            delta,
        }
    }

    #[test]
    fn medians_per_location() {
        let one = location_medians(&[record("a", 1, 1, -0.1), record("a", 2, 2, -0.2)]).unwrap();
        assert_eq!(one[&GridLocation::new(2, 2)], -0.2);
        let two = location_medians(&[record("a", 1, 1, -0.1), record("b", 1, 1, -0.3)]).unwrap();
        assert!((two[&GridLocation::new(1, 1)] + 0.2).abs() < 1e-15);
        assert_eq!(location_medians(&[]), Err(Error::EmptySample));
    }

    #[test]
    fn exact_at_sources_and_centroid() {
        let s = src(&[(0, 0, 1.0), (30, 0, 2.0), (0, 30, 6.0)]);
        let it = Interpolator::new(&s).unwrap();
        for (loc, v) in &s {
            assert_eq!(it.eval(loc.x as f64, loc.y as f64), *v);
        }
        assert!((it.eval(10.0, 10.0) - 3.0).abs() < 1e-12);
        // midpoint of an edge
        assert!((it.eval(15.0, 0.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn nearest_source_outside_hull() {
        let s = src(&[(0, 0, 1.0), (10, 0, 2.0), (0, 10, 3.0)]);
        let it = Interpolator::new(&s).unwrap();
        assert_eq!(it.eval(-5.0, -1.0), 1.0);
        assert_eq!(it.eval(30.0, 1.0), 2.0);
        // equidistant from (10,0) and (0,10); the lexicographically smaller wins
        assert_eq!(it.eval(20.0, 20.0), 3.0);
    }

    #[test]
    fn degenerate_sources_rejected() {
        assert!(matches!(
            Interpolator::new(&src(&[(0, 0, 1.0), (1, 1, 2.0)])),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            Interpolator::new(&src(&[(0, 0, 1.0), (1, 1, 2.0), (5, 5, 0.0), (9, 9, 1.0)])),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn grid_hits_sources_exactly() {
        let mut s = BTreeMap::new();
        for i in 0..5 {
            for j in 0..4 {
                s.insert(
                    GridLocation::new(8 + 16 * i, 12 + 24 * j),
                    -((i * 7 + j * 3) % 5) as f64 * 1e-4,
                );
            }
        }
        // 12 steps divide both the 4 column and 3 row spacings
        let map = interpolate(&s, 13).unwrap();
        assert_eq!(map.xs[3], 24.0);
        for (loc, v) in &s {
            let p = map.points().find(|p| p.x == loc.x as f64 && p.y == loc.y as f64);
            assert_eq!(p.map(|p| p.value), Some(*v));
        }
        let summary = map.summary();
        assert_eq!(summary.hotspot.value, summary.worst_source_value);
    }

    fn arb_sources() -> impl Strategy<Value = BTreeMap<GridLocation, f64>> {
        prop::collection::btree_map(
            (0i64..50, 0i64..50).prop_map(|(x, y)| GridLocation::new(x, y)),
            -1.0f64..1.0,
            3..25,
        )
        .prop_filter("non-collinear", |m| {
            let locs: Vec<_> = m.keys().copied().collect();
            locs[2..].iter().any(|&c| cross(locs[0], locs[1], c) != 0)
        })
    }

    proptest! {
        #[test]
        fn values_bounded_and_exact_at_sources(s in arb_sources(), qx in -10.0f64..60.0, qy in -10.0f64..60.0) {
            let it = Interpolator::new(&s).unwrap();
            let lo = s.values().copied().fold(f64::INFINITY, f64::min);
            let hi = s.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = it.eval(qx, qy);
            prop_assert!(v >= lo && v <= hi);
            for (loc, val) in &s {
                prop_assert_eq!(it.eval(loc.x as f64, loc.y as f64), *val);
            }
        }

        #[test]
        fn refinement_keeps_coinciding_points(s in arb_sources(), r in 2usize..8) {
            let coarse = interpolate(&s, r).unwrap();
            let fine = interpolate(&s, 2 * r - 1).unwrap();
            for j in 0..r {
                for i in 0..r {
                    prop_assert_eq!(coarse.value_at(i, j), fine.value_at(2 * i, 2 * j));
                }
            }
        }

        #[test]
        fn insertion_order_is_irrelevant(s in arb_sources(), qx in 0.0f64..50.0, qy in 0.0f64..50.0) {
            // sources are keyed by location, so any input order yields the same map
            let reversed: BTreeMap<_, _> = s.iter().rev().map(|(k, v)| (*k, *v)).collect();
            let a = Interpolator::new(&s).unwrap().eval(qx, qy);
            let b = Interpolator::new(&reversed).unwrap().eval(qx, qy);
            prop_assert_eq!(a, b);
        }
    }
}
