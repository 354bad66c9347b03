//! Synthetic urban scene: a flat ground plane with axis-aligned box
//! buildings, scanned once from the air over a coverage polygon and once from
//! a street-level trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_overlap_ratio, OVERLAP_RADIUS};
use crate::cloud::{CloudSource, Point3, PointCloud, RigidTransform, SpatialIndex};
use crate::error::{Error, Result};

/// Allowed gap between the requested and realized overlap.
const OVERLAP_TOLERANCE: f64 = 0.05;
/// Minimum spacing (m) between building footprints.
const BUILDING_GAP: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Meters along x and y, centered on the origin.
    pub extent: [f64; 2],
    pub building_count: usize,
    /// Footprint side length range (m).
    pub footprint_range: [f64; 2],
    /// Building height range (m).
    pub height_range: [f64; 2],
    /// Minimum distance (m) from the trajectory to any building.
    pub street_clearance: f64,
    /// Aerial points per m² on ground and roofs.
    pub aerial_density: f64,
    /// Aerial points per m² on facades.
    pub aerial_facade_density: f64,
    /// Aerial coverage polygon; when absent a rectangle is fitted to the
    /// target overlap.
    pub aerial_coverage: Option<Vec<[f64; 2]>>,
    pub trajectory: Vec<[f64; 2]>,
    /// Terrestrial sensor range (m), measured in the ground plane.
    pub sensor_range: f64,
    pub terrestrial_ground_density: f64,
    pub terrestrial_facade_density: f64,
    pub terrestrial_roof_density: f64,
    /// Gaussian noise (m) per coordinate.
    pub noise_sigma: f64,
    /// Requested overlap ratio for both clouds.
    pub target_overlap: f64,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            extent: [400.0, 400.0],
            building_count: 150,
            footprint_range: [8.0, 25.0],
            height_range: [6.0, 30.0],
            street_clearance: 6.0,
            aerial_density: 3.0,
            aerial_facade_density: 0.3,
            aerial_coverage: None,
            trajectory: vec![[-185.0, -30.0], [-60.0, -10.0], [50.0, 20.0], [185.0, 5.0]],
            sensor_range: 50.0,
            terrestrial_ground_density: 1.0,
            terrestrial_facade_density: 2.0,
            terrestrial_roof_density: 1.0,
            noise_sigma: 0.03,
            target_overlap: 0.2,
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return bad("extent must be positive");
        }
        let densities = [
            self.aerial_density,
            self.aerial_facade_density,
            self.terrestrial_ground_density,
            self.terrestrial_facade_density,
            self.terrestrial_roof_density,
        ];
        if densities.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("densities must be positive");
        }
        for r in [self.footprint_range, self.height_range] {
            if !(r[0] > 0.0 && r[1] >= r[0]) {
                return bad("footprint and height ranges must be positive and ordered");
            }
        }
        if self.trajectory.len() < 2 {
            return bad("trajectory needs at least two vertices");
        }
        if !(self.sensor_range > 0.0) || self.street_clearance < 0.0 || self.noise_sigma < 0.0 {
            return bad("sensor range must be positive; clearance and noise non-negative");
        }
        if !(self.target_overlap > 0.0 && self.target_overlap <= 1.0) {
            return bad("target overlap must lie in (0, 1]");
        }
        if let Some(poly) = &self.aerial_coverage {
            if poly.len() < 3 {
                return bad("coverage polygon needs at least three vertices");
            }
        }
        Ok(())
    }

    fn half(&self) -> [f64; 2] {
        [self.extent[0] / 2.0, self.extent[1] / 2.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

impl Building {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(p[0] - self.max[0]).max(0.0);
        let dy = (self.min[1] - p[1]).max(p[1] - self.max[1]).max(0.0);
        dx.hypot(dy)
    }

    /// Facades as (start corner, direction, length, outward normal).
    fn facades(&self) -> [([f64; 2], [f64; 2], f64, [f64; 2]); 4] {
        let [x0, y0] = self.min;
        let [x1, y1] = self.max;
        let (w, d) = (x1 - x0, y1 - y0);
        [
            ([x0, y0], [1.0, 0.0], w, [0.0, -1.0]),
            ([x1, y0], [0.0, 1.0], d, [1.0, 0.0]),
            ([x0, y1], [1.0, 0.0], w, [0.0, 1.0]),
            ([x0, y0], [0.0, 1.0], d, [-1.0, 0.0]),
        ]
    }
}

/// A generated scene. Both clouds share one frame, so the ground truth is
/// the identity.
#[derive(Debug, Clone)]
pub struct Scene {
    pub aerial: PointCloud,
    pub terrestrial: PointCloud,
    pub ground_truth: RigidTransform,
    pub buildings: Vec<Building>,
    pub coverage: Vec<[f64; 2]>,
    /// Realized (aerial, terrestrial) overlap ratios at 1 m.
    pub overlap: (f64, f64),
}

/// Builds the scene, fitting an aerial coverage rectangle to the target
/// overlap unless a polygon is given. Errors when the realized overlap of
/// either cloud misses the target by more than five percentage points.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let parts = Parts::build(spec)?;
    let coverage = match &spec.aerial_coverage {
        Some(poly) => poly.clone(),
        None => parts.fit_coverage(spec)?,
    };
    let scene = parts.finish(coverage);
    let t = spec.target_overlap;
    let (fa, ft) = scene.overlap;
    if (fa - t).abs() > OVERLAP_TOLERANCE || (ft - t).abs() > OVERLAP_TOLERANCE {
        return Err(Error::UnsatisfiableOverlap {
            requested: t,
            min: fa.min(ft),
            max: fa.max(ft),
        });
    }
    Ok(scene)
}

/// Builds the scene for an explicit aerial coverage polygon without checking
/// the overlap target. The aerial cloud for a sub-polygon is a subset of the
/// one for the enclosing polygon.
pub fn sample_scene(spec: &SceneSpec, coverage: &[[f64; 2]]) -> Result<Scene> {
    spec.validate()?;
    if coverage.len() < 3 {
        return Err(Error::InvalidParameter(
            "coverage polygon needs at least three vertices".into(),
        ));
    }
    Ok(Parts::build(spec)?.finish(coverage.to_vec()))
}

struct Parts {
    buildings: Vec<Building>,
    terrestrial: PointCloud,
    /// Aerial samples over the whole extent, filtered by coverage later.
    aerial_all: Vec<Point3>,
}

impl Parts {
    fn build(spec: &SceneSpec) -> Result<Self> {
        let buildings = layout(spec);
        let terrestrial = scan_terrestrial(spec, &buildings);
        if terrestrial.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let aerial_all = scan_aerial(spec, &buildings);
        Ok(Self {
            buildings,
            terrestrial,
            aerial_all,
        })
    }

    fn finish(self, coverage: Vec<[f64; 2]>) -> Scene {
        let aerial: PointCloud = self
            .aerial_all
            .into_iter()
            .filter(|p| in_polygon(&coverage, p.x, p.y))
            .collect();
        let aerial = aerial.with_source(CloudSource::Aerial);
        let overlap = compute_overlap_ratio(&aerial, &self.terrestrial, OVERLAP_RADIUS);
        Scene {
            aerial,
            terrestrial: self.terrestrial,
            ground_truth: RigidTransform::identity(),
            buildings: self.buildings,
            coverage,
            overlap,
        }
    }

    /// Axis-aligned rectangle `[x0, +x edge] × [yc − h/2, yc + h/2]`: `x0`
    /// sets how much of the trajectory is covered, `h` how much non-overlap
    /// area the aerial scan adds. Both are found by alternating bisection.
    fn fit_coverage(&self, spec: &SceneSpec) -> Result<Vec<[f64; 2]>> {
        let [hx, hy] = spec.half();
        let target = spec.target_overlap;
        let table = OverlapTable::new(&self.aerial_all, &self.terrestrial);
        let tls = &self.terrestrial.points;

        let rect = |x0: f64, h: f64| -> [f64; 4] {
            let ys: Vec<f64> = tls.iter().filter(|p| p.x >= x0).map(|p| p.y).collect();
            let yc = if ys.is_empty() {
                0.0
            } else {
                let (lo, hi) = ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &y| (a.min(y), b.max(y)));
                (lo + hi) / 2.0
            };
            [x0, yc - h / 2.0, hx + 1.0, yc + h / 2.0]
        };
        let full_h = 2.0 * (2.0 * hy + 2.0);
        let reachable = table.fractions(&rect(-hx - 1.0, full_h)).1;
        if reachable < target - OVERLAP_TOLERANCE {
            return Err(Error::UnsatisfiableOverlap {
                requested: target,
                min: 0.0,
                max: reachable,
            });
        }

        let (mut x0, mut h) = (-hx - 1.0, full_h);
        for _ in 0..4 {
            // Terrestrial fraction falls as x0 grows.
            x0 = bisect(-hx - 1.0, hx + 1.0, |x| table.fractions(&rect(x, h)).1 > target);
            // Aerial fraction falls as h grows.
            h = bisect(1.0, full_h, |hh| table.fractions(&rect(x0, hh)).0 > target);
        }
        let [a, b, c, d] = rect(x0, h);
        Ok(vec![[a, b], [c, b], [c, d], [a, d]])
    }
}

/// Largest `x` in `[lo, hi]` with `above(x)` true, assuming monotonicity.
fn bisect(mut lo: f64, mut hi: f64, above: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Precomputed neighbor relations between all aerial samples and the
/// terrestrial cloud, so the overlap of any rectangular coverage is cheap.
struct OverlapTable<'a> {
    aerial: &'a [Point3],
    aerial_near: Vec<bool>,
    terrestrial_nbrs: Vec<Vec<u32>>,
}

impl<'a> OverlapTable<'a> {
    fn new(aerial: &'a [Point3], terrestrial: &PointCloud) -> Self {
        let t_index = SpatialIndex::build(terrestrial).expect("terrestrial cloud is non-empty");
        let aerial_near = aerial
            .par_iter()
            .map(|p| t_index.has_neighbor_within(p, OVERLAP_RADIUS))
            .collect();
        let a_cloud = PointCloud::new(aerial.to_vec());
        let terrestrial_nbrs = match SpatialIndex::build(&a_cloud) {
            Ok(a_index) => terrestrial
                .points
                .par_iter()
                .map(|p| {
                    a_index
                        .within_radius(p, OVERLAP_RADIUS)
                        .into_iter()
                        .map(|i| i as u32)
                        .collect()
                })
                .collect(),
            Err(_) => vec![Vec::new(); terrestrial.len()],
        };
        Self {
            aerial,
            aerial_near,
            terrestrial_nbrs,
        }
    }

    fn fractions(&self, r: &[f64; 4]) -> (f64, f64) {
        let inside = |p: &Point3| p.x >= r[0] && p.x <= r[2] && p.y >= r[1] && p.y <= r[3];
        let (n, near) = self
            .aerial
            .par_iter()
            .zip(&self.aerial_near)
            .filter(|(p, _)| inside(p))
            .map(|(_, &near)| (1usize, near as usize))
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let covered = self
            .terrestrial_nbrs
            .par_iter()
            .filter(|nb| nb.iter().any(|&i| inside(&self.aerial[i as usize])))
            .count();
        let fa = if n == 0 { 0.0 } else { near as f64 / n as f64 };
        (fa, covered as f64 / self.terrestrial_nbrs.len() as f64)
    }
}

/// Even-odd point-in-polygon test.
fn in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let ([xi, yi], [xj, yj]) = (poly[i], poly[j]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, [f64; 2]) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + s * dx, a[1] + s * dy];
    ((p[0] - q[0]).hypot(p[1] - q[1]), q)
}

/// Distance to the trajectory and the closest trajectory point.
fn trajectory_distance(traj: &[[f64; 2]], p: [f64; 2]) -> (f64, [f64; 2]) {
    traj.windows(2)
        .map(|w| segment_distance(p, w[0], w[1]))
        .fold((f64::INFINITY, p), |best, c| if c.0 < best.0 { c } else { best })
}

fn rng_for(spec: &SceneSpec, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(stream);
    rng
}

fn layout(spec: &SceneSpec) -> Vec<Building> {
    let mut rng = rng_for(spec, 0);
    let [hx, hy] = spec.half();
    let [f0, f1] = spec.footprint_range;
    let [h0, h1] = spec.height_range;
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let mut out: Vec<Building> = Vec::with_capacity(spec.building_count);
    let max_attempts = 200 * spec.building_count.max(1);
    for _ in 0..max_attempts {
        if out.len() == spec.building_count {
            break;
        }
        let (w, d) = (draw(&mut rng, f0, f1), draw(&mut rng, f0, f1));
        let height = draw(&mut rng, h0, h1);
        if w >= 2.0 * hx || d >= 2.0 * hy {
            continue;
        }
        let x = rng.gen_range(-hx..hx - w);
        let y = rng.gen_range(-hy..hy - d);
        let b = Building {
            min: [x, y],
            max: [x + w, y + d],
            height,
        };
        let clashes = out.iter().any(|o| {
            b.min[0] < o.max[0] + BUILDING_GAP
                && o.min[0] < b.max[0] + BUILDING_GAP
                && b.min[1] < o.max[1] + BUILDING_GAP
                && o.min[1] < b.max[1] + BUILDING_GAP
        });
        if clashes || street_distance(&b, &spec.trajectory) < spec.street_clearance {
            continue;
        }
        out.push(b);
    }
    out
}

/// Distance between a footprint and the trajectory polyline, sampled along
/// each segment finely enough for clearance checks.
fn street_distance(b: &Building, traj: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for w in traj.windows(2) {
        let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        let steps = (len / 0.25).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let s = k as f64 / steps as f64;
            let p = [w[0][0] + s * (w[1][0] - w[0][0]), w[0][1] + s * (w[1][1] - w[0][1])];
            best = best.min(b.distance_to(p));
        }
    }
    best
}

struct Noise {
    dist: Option<Normal<f64>>,
}

impl Noise {
    fn new(sigma: f64) -> Self {
        Self {
            dist: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma")),
        }
    }

    fn apply(&self, rng: &mut ChaCha8Rng, x: f64, y: f64, z: f64) -> Point3 {
        match &self.dist {
            Some(n) => Point3::new(x + n.sample(rng), y + n.sample(rng), z + n.sample(rng)),
            None => Point3::new(x, y, z),
        }
    }
}

fn count(density: f64, area: f64) -> usize {
    (density * area).round() as usize
}

fn roof_height(buildings: &[Building], x: f64, y: f64) -> f64 {
    buildings
        .iter()
        .filter(|b| b.contains(x, y))
        .map(|b| b.height)
        .fold(0.0, f64::max)
}

/// Roofs and ground from above over the whole extent, plus sparse facades.
fn scan_aerial(spec: &SceneSpec, buildings: &[Building]) -> Vec<Point3> {
    let mut rng = rng_for(spec, 2);
    let noise = Noise::new(spec.noise_sigma);
    let [hx, hy] = spec.half();
    let n = count(spec.aerial_density, spec.extent[0] * spec.extent[1]);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.gen_range(-hx..hx);
        let y = rng.gen_range(-hy..hy);
        let z = roof_height(buildings, x, y);
        pts.push(noise.apply(&mut rng, x, y, z));
    }
    for b in buildings {
        for (start, dir, len, _) in b.facades() {
            for _ in 0..count(spec.aerial_facade_density, len * b.height) {
                let s = rng.gen_range(0.0..len);
                let z = rng.gen_range(0.0..b.height);
                pts.push(noise.apply(&mut rng, start[0] + s * dir[0], start[1] + s * dir[1], z));
            }
        }
    }
    pts
}

/// Ground, facades facing the trajectory and sparse roofs within sensor range.
fn scan_terrestrial(spec: &SceneSpec, buildings: &[Building]) -> PointCloud {
    let mut rng = rng_for(spec, 1);
    let noise = Noise::new(spec.noise_sigma);
    let [hx, hy] = spec.half();
    let range = spec.sensor_range;
    let traj = &spec.trajectory;
    let mut pts = Vec::new();

    for _ in 0..count(spec.terrestrial_ground_density, spec.extent[0] * spec.extent[1]) {
        let x = rng.gen_range(-hx..hx);
        let y = rng.gen_range(-hy..hy);
        let n = noise.apply(&mut rng, x, y, 0.0);
        if trajectory_distance(traj, [x, y]).0 <= range && !buildings.iter().any(|b| b.contains(x, y)) {
            pts.push(n);
        }
    }
    for b in buildings {
        for (start, dir, len, normal) in b.facades() {
            for _ in 0..count(spec.terrestrial_facade_density, len * b.height) {
                let s = rng.gen_range(0.0..len);
                let z = rng.gen_range(0.0..b.height);
                let (x, y) = (start[0] + s * dir[0], start[1] + s * dir[1]);
                let p = noise.apply(&mut rng, x, y, z);
                let (d, q) = trajectory_distance(traj, [x, y]);
                let facing = (q[0] - x) * normal[0] + (q[1] - y) * normal[1] > 0.0;
                if d <= range && facing {
                    pts.push(p);
                }
            }
        }
        let area = (b.max[0] - b.min[0]) * (b.max[1] - b.min[1]);
        for _ in 0..count(spec.terrestrial_roof_density, area) {
            let x = rng.gen_range(b.min[0]..b.max[0]);
            let y = rng.gen_range(b.min[1]..b.max[1]);
            let p = noise.apply(&mut rng, x, y, b.height);
            if trajectory_distance(traj, [x, y]).0 <= range {
                pts.push(p);
            }
        }
    }
    PointCloud::new(pts).with_source(CloudSource::Terrestrial)
}
