//! Geometric primitives, point cloud I/O, voxel downsampling and exact
//! nearest-neighbour search.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Where a cloud was captured from. Informational only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudSource {
    Aerial,
    Terrestrial,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub source: CloudSource,
}

/// Axis-aligned bounds of a cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point3,
    pub max: Point3,
}

impl Bounds {
    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            source: CloudSource::Unknown,
        }
    }

    pub fn with_source(mut self, source: CloudSource) -> Self {
        self.source = source;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn bounds(&self) -> Option<Bounds> {
        let first = *self.points.first()?;
        let mut min = first;
        let mut max = first;
        for p in &self.points[1..] {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Some(Bounds { min, max })
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    fn ensure_non_empty(&self) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    #[serde(rename = "R", with = "matrix_rows")]
    pub rotation: Matrix3<f64>,
    #[serde(rename = "t", with = "vector_array")]
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::new(*rot.matrix(), translation)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * first.rotation,
            self.rotation * first.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    /// Checks `RᵀR = I` and `det R = +1` within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        orth <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// Rotation angle of `R` in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = self.rotation[(r, c)];
            }
            m[r][3] = self.translation[r];
        }
        m[3][3] = 1.0;
        m
    }
}

mod matrix_rows {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

mod vector_array {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(a[0], a[1], a[2]))
    }
}

pub fn apply_transform(cloud: &PointCloud, transform: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| transform.apply(p)).collect(),
        source: cloud.source,
    }
}

/// Replaces the points of each occupied `voxel`-sized cell by their centroid.
///
/// Output order follows the first occurrence of each cell in the input.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0) || !voxel.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    let mut slots: HashMap<[i64; 3], usize> = HashMap::with_capacity(cloud.len() / 2);
    let mut sums: Vec<(Vector3<f64>, usize)> = Vec::new();
    for p in &cloud.points {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let slot = *slots.entry(key).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0));
            sums.len() - 1
        });
        sums[slot].0 += p.coords;
        sums[slot].1 += 1;
    }
    Ok(PointCloud {
        points: sums
            .into_iter()
            .map(|(s, n)| Point3::from(s / n as f64))
            .collect(),
        source: cloud.source,
    })
}

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact nearest-neighbour index over a fixed set of points.
///
/// A kd-tree split at the median of the widest axis; duplicate coordinates
/// are fine since each side is searched whenever the query is within reach
/// of the split plane.
pub struct SpatialIndex {
    points: Vec<Point3>,
    /// Permutation of point indices, grouped by leaf.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl std::fmt::Debug for SpatialIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialIndex")
            .field("len", &self.points.len())
            .finish()
    }
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        cloud.ensure_non_empty()?;
        let mut index = Self {
            points: cloud.points.clone(),
            order: (0..cloud.len()).collect(),
            nodes: Vec::with_capacity(2 * cloud.len() / LEAF_SIZE + 1),
        };
        index.build_node(0, cloud.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let slice = &mut self.order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice.iter() {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] == lo[axis] {
            // All points coincide.
            return id;
        }
        let mid = slice.len() / 2;
        let pts = &self.points;
        slice.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = pts[slice[mid]][axis];
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Index and squared distance of the closest indexed point.
    pub fn nearest_index(&self, q: &Point3) -> (usize, f64) {
        self.nearest_bounded(q, f64::INFINITY)
    }

    /// Closest indexed point no farther than `max_dist`, with its squared
    /// distance.
    pub fn nearest_within(&self, q: &Point3, max_dist: f64) -> Option<(usize, f64)> {
        let found = self.nearest_bounded(q, max_dist * max_dist);
        (found.0 != usize::MAX).then_some(found)
    }

    fn nearest_bounded(&self, q: &Point3, limit_sq: f64) -> (usize, f64) {
        let mut best = (usize::MAX, limit_sq);
        // (node, lower bound on squared distance to anything inside it)
        let mut stack: Vec<(usize, f64)> = vec![(0, 0.0)];
        while let Some((id, bound)) = stack.pop() {
            if bound > best.1 {
                continue;
            }
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d2 = (self.points[i] - q).norm_squared();
                        if d2 < best.1 || (d2 == best.1 && i < best.0) {
                            best = (i, d2);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[axis] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    stack.push((far, bound.max(diff * diff)));
                    stack.push((near, bound));
                }
            }
        }
        best
    }

    pub fn has_neighbor_within(&self, q: &Point3, radius: f64) -> bool {
        self.nearest_within(q, radius).is_some()
    }

    /// Indices of all points within `radius` of `q`, in ascending order.
    pub fn within_radius(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                ),
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[axis] - value;
                    if diff <= radius {
                        stack.push(left);
                    }
                    if diff >= -radius {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Closest indexed point to `q` and its Euclidean distance.
pub fn nearest(index: &SpatialIndex, q: &Point3) -> (Point3, f64) {
    let (i, d2) = index.nearest_index(q);
    (index.points[i], d2.sqrt())
}

/// On-disk cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Xyz,
    Ply,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" => Some(CloudFormat::Xyz),
            "ply" => Some(CloudFormat::Ply),
            _ => None,
        }
    }
}

impl std::str::FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" => Ok(CloudFormat::Xyz),
            "ply" => Ok(CloudFormat::Ply),
            other => Err(Error::InvalidParameter(format!(
                "unknown cloud format {other:?}"
            ))),
        }
    }
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let cloud = match format {
        CloudFormat::Xyz => parse_xyz(&String::from_utf8_lossy(&bytes))?,
        CloudFormat::Ply => parse_ply(&bytes)?,
    };
    cloud.ensure_non_empty()?;
    Ok(cloud)
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        CloudFormat::Xyz => write_xyz(cloud, &mut w),
        CloudFormat::Ply => write_ply_binary(cloud, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn check_finite(p: Point3, location: impl FnOnce() -> String) -> Result<Point3> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(p)
    } else {
        Err(Error::parse(location(), "non-finite coordinate"))
    }
}

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", lineno + 1);
        let mut fields = line.split_whitespace();
        let mut coord = [0.0; 3];
        for c in coord.iter_mut() {
            let tok = fields
                .next()
                .ok_or_else(|| Error::parse(loc(), "expected three coordinates"))?;
            *c = tok
                .parse()
                .map_err(|_| Error::parse(loc(), format!("invalid number {tok:?}")))?;
        }
        points.push(check_finite(Point3::from(coord), loc)?);
    }
    Ok(PointCloud::new(points))
}

fn write_xyz(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

fn write_ply_binary(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    )?;
    for p in &cloud.points {
        for c in p.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyScalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyScalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => PlyScalar::I8,
            "uchar" | "uint8" => PlyScalar::U8,
            "short" | "int16" => PlyScalar::I16,
            "ushort" | "uint16" => PlyScalar::U16,
            "int" | "int32" => PlyScalar::I32,
            "uint" | "uint32" => PlyScalar::U32,
            "float" | "float32" => PlyScalar::F32,
            "double" | "float64" => PlyScalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyScalar::I8 | PlyScalar::U8 => 1,
            PlyScalar::I16 | PlyScalar::U16 => 2,
            PlyScalar::I32 | PlyScalar::U32 | PlyScalar::F32 => 4,
            PlyScalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PlyScalar::I8 => b[0] as i8 as f64,
            PlyScalar::U8 => b[0] as f64,
            PlyScalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PlyScalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PlyScalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyScalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyScalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyScalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<(String, PlyScalar)>,
    has_list: bool,
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    const END: &[u8] = b"end_header";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::parse("ply header", "missing end_header"))?;
    let mut body_start = header_end + END.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::parse("ply header", "header is not valid utf-8"))?;

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::parse("ply header", "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _ver] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLe,
                    other => {
                        return Err(Error::parse(
                            "ply header",
                            format!("unsupported format {other}"),
                        ))
                    }
                })
            }
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse("ply header", "bad element count"))?,
                properties: Vec::new(),
                has_list: false,
            }),
            ["property", "list", ..] => {
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("ply header", "property before element"))?
                    .has_list = true;
            }
            ["property", ty, name] => {
                let scalar = PlyScalar::parse(ty).ok_or_else(|| {
                    Error::parse("ply header", format!("unknown property type {ty}"))
                })?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("ply header", "property before element"))?
                    .properties
                    .push((name.to_string(), scalar));
            }
            _ => return Err(Error::parse("ply header", format!("unexpected line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse("ply header", "missing format line"))?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse("ply header", "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    if vertex.has_list {
        return Err(Error::parse("ply header", "list properties on vertex"));
    }
    let axis = |n: &str| {
        vertex
            .properties
            .iter()
            .position(|(name, _)| name == n)
            .ok_or_else(|| Error::parse("ply header", format!("vertex has no {n} property")))
    };
    let (ix, iy, iz) = (axis("x")?, axis("y")?, axis("z")?);
    for &i in &[ix, iy, iz] {
        if !matches!(vertex.properties[i].1, PlyScalar::F32 | PlyScalar::F64) {
            return Err(Error::parse("ply header", "x/y/z must be float or double"));
        }
    }

    let body = &bytes[body_start..];
    let mut points = Vec::with_capacity(vertex.count);
    match encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| Error::parse("ply body", "body is not valid utf-8"))?;
            let mut rows = text.lines().filter(|l| !l.trim().is_empty());
            // Skip rows belonging to elements declared before the vertices.
            for e in &elements[..vertex_pos] {
                for _ in 0..e.count {
                    rows.next();
                }
            }
            for k in 0..vertex.count {
                let loc = || format!("ply vertex {k}");
                let row = rows
                    .next()
                    .ok_or_else(|| Error::parse(loc(), "unexpected end of data"))?;
                let vals: Vec<&str> = row.split_whitespace().collect();
                if vals.len() < vertex.properties.len() {
                    return Err(Error::parse(loc(), "too few values"));
                }
                let get = |i: usize| -> Result<f64> {
                    vals[i]
                        .parse()
                        .map_err(|_| Error::parse(loc(), format!("invalid number {:?}", vals[i])))
                };
                let p = Point3::new(get(ix)?, get(iy)?, get(iz)?);
                points.push(check_finite(p, loc)?);
            }
        }
        PlyEncoding::BinaryLe => {
            let mut offset = 0usize;
            for e in &elements[..vertex_pos] {
                if e.has_list {
                    return Err(Error::parse(
                        "ply header",
                        "list-bearing element precedes vertices in binary file",
                    ));
                }
                offset += e.count * e.properties.iter().map(|(_, t)| t.size()).sum::<usize>();
            }
            let offsets: Vec<usize> = vertex
                .properties
                .iter()
                .scan(0, |acc, (_, t)| {
                    let o = *acc;
                    *acc += t.size();
                    Some(o)
                })
                .collect();
            let stride: usize = vertex.properties.iter().map(|(_, t)| t.size()).sum();
            let needed = offset + stride * vertex.count;
            if body.len() < needed {
                return Err(Error::parse(
                    "ply body",
                    format!("truncated: need {needed} bytes, have {}", body.len()),
                ));
            }
            for k in 0..vertex.count {
                let rec = &body[offset + k * stride..offset + (k + 1) * stride];
                let read = |i: usize| vertex.properties[i].1.read_le(&rec[offsets[i]..]);
                let p = Point3::new(read(ix), read(iy), read(iz));
                points.push(check_finite(p, || format!("ply vertex {k}"))?);
            }
        }
    }
    Ok(PointCloud::new(points))
}
