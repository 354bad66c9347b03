//! Bird's-eye-view rasterization of gravity-aligned clouds.
//!
//! A cloud is first scaled by a density-adaptive factor `res`
//! (`N·γ / area`), then binned into pixels with `i = ⌈x − x_min⌉`,
//! `j = ⌈y − y_min⌉`. Each pixel keeps the highest `z` it received; the
//! grayscale image is that height normalized to `0..=255`. Two sharpening
//! kernels are then applied to bring out structure edges.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major; `u` indexes columns, `v` rows.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: u8) {
        self.data[v * self.width + u] = value;
    }

    /// Pixel with coordinates clamped into the image (replicate border).
    #[inline]
    pub fn get_clamped(&self, u: isize, v: isize) -> u8 {
        let u = u.clamp(0, self.width as isize - 1) as usize;
        let v = v.clamp(0, self.height as isize - 1) as usize;
        self.get(u, v)
    }

    /// Copy of the rectangle `[u0, u0+w) × [v0, v0+h)`; must lie inside the image.
    pub fn crop(&self, u0: usize, v0: usize, w: usize, h: usize) -> GrayImage {
        assert!(u0 + w <= self.width && v0 + h <= self.height);
        GrayImage::from_fn(w, h, |u, v| self.get(u0 + u, v0 + v))
    }
}

/// Sharpening kernels applied in sequence by [`enhance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnhanceKernels {
    pub w1: [[i32; 3]; 3],
    pub w2: [[i32; 3]; 3],
}

pub const ENHANCE_KERNELS: EnhanceKernels = EnhanceKernels {
    w1: [[-2, -2, -2], [-2, 32, -2], [-2, -2, -2]],
    w2: [[-1, -1, -1], [-1, 10, -1], [-1, -1, -1]],
};

impl Default for EnhanceKernels {
    fn default() -> Self {
        ENHANCE_KERNELS
    }
}

/// Height raster plus the grayscale image derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    pub width: usize,
    pub height: usize,
    pub gray: GrayImage,
    /// Max scaled `z` per pixel, `NaN` where no point fell.
    pub heights: Vec<f64>,
    /// Unscaled `z` of the point that set `heights`, `NaN` where empty.
    pub metric_heights: Vec<f64>,
    /// Points per pixel.
    pub counts: Vec<u32>,
    pub res: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl BevRaster {
    #[inline]
    pub fn height_at(&self, i: usize, j: usize) -> Option<f64> {
        if i >= self.width || j >= self.height {
            return None;
        }
        let h = self.heights[j * self.width + i];
        (!h.is_nan()).then_some(h)
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.height_at(i, j).is_some()
    }

    pub fn occupied_count(&self) -> usize {
        self.heights.iter().filter(|h| !h.is_nan()).count()
    }

    /// Pixel holding `p` (a point in the scaled frame), if inside the raster.
    pub fn bucket_of(&self, p: &Point3) -> Option<(usize, usize)> {
        let i = bucket_index(p.x - self.x_min);
        let j = bucket_index(p.y - self.y_min);
        (i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height)
            .then_some((i as usize, j as usize))
    }

    pub fn metadata(&self) -> BevMetadata {
        BevMetadata {
            schema: BEV_SCHEMA.to_string(),
            res: self.res,
            x_min: self.x_min,
            y_min: self.y_min,
            z_min: self.z_min,
            z_max: self.z_max,
            width: self.width,
            height: self.height,
        }
    }
}

pub const BEV_SCHEMA: &str = "mtpcr-bev/1";

/// Sidecar record written next to exported BEV images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevMetadata {
    pub schema: String,
    pub res: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub width: usize,
    pub height: usize,
}

/// `⌈d⌉`, except that values within a few ulps of an integer snap to it so
/// that re-binning a pixel's own coordinate is stable under rounding.
#[inline]
pub fn bucket_index(d: f64) -> i64 {
    let r = d.round();
    if (d - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        d.ceil() as i64
    }
}

/// Density-adaptive scale factor `N·γ / ((x_max − x_min)(y_max − y_min))`.
pub fn compute_resolution(cloud: &PointCloud, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let b = cloud.bounds().ok_or(Error::EmptyCloud)?;
    let e = b.extent();
    if !(e.x > 0.0 && e.y > 0.0) {
        return Err(Error::DegenerateExtent);
    }
    Ok(cloud.len() as f64 * gamma / (e.x * e.y))
}

pub fn scale_cloud(cloud: &PointCloud, res: f64) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| p * res).collect(),
        source: cloud.source,
    }
}

/// Bins an already-scaled cloud; `res` is recorded for the way back.
pub fn rasterize(scaled: &PointCloud, res: f64) -> Result<BevRaster> {
    let metric: Vec<f64> = scaled.points.iter().map(|p| p.z / res).collect();
    rasterize_impl(scaled, &metric, res)
}

/// Scales by `res` and rasterizes, keeping the exact unscaled heights.
pub fn rasterize_cloud(cloud: &PointCloud, res: f64) -> Result<BevRaster> {
    let metric: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
    rasterize_impl(&scale_cloud(cloud, res), &metric, res)
}

fn rasterize_impl(scaled: &PointCloud, metric_z: &[f64], res: f64) -> Result<BevRaster> {
    let b = scaled.bounds().ok_or(Error::EmptyCloud)?;
    let (x_min, y_min) = (b.min.x, b.min.y);
    let width = bucket_index(b.max.x - x_min) as usize + 1;
    let height = bucket_index(b.max.y - y_min) as usize + 1;
    let cells = width
        .checked_mul(height)
        .filter(|&c| c <= 400_000_000)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("raster of {width}x{height} pixels is too large"))
        })?;

    let mut heights = vec![f64::NAN; cells];
    let mut metric_heights = vec![f64::NAN; cells];
    let mut counts = vec![0u32; cells];
    for (p, &mz) in scaled.points.iter().zip(metric_z) {
        let i = bucket_index(p.x - x_min) as usize;
        let j = bucket_index(p.y - y_min) as usize;
        let k = j * width + i;
        counts[k] += 1;
        if heights[k].is_nan() || p.z > heights[k] {
            heights[k] = p.z;
            metric_heights[k] = mz;
        }
    }

    let (z_min, z_max) = (b.min.z, b.max.z);
    let range = z_max - z_min;
    let data = heights
        .iter()
        .map(|&h| {
            if h.is_nan() {
                0
            } else if range > 0.0 {
                (255.0 * (h - z_min) / range).floor().clamp(0.0, 255.0) as u8
            } else {
                255
            }
        })
        .collect();

    Ok(BevRaster {
        width,
        height,
        gray: GrayImage {
            width,
            height,
            data,
        },
        heights,
        metric_heights,
        counts,
        res,
        x_min,
        y_min,
        z_min,
        z_max,
    })
}

fn convolve_clamped(img: &GrayImage, k: &[[i32; 3]; 3]) -> GrayImage {
    let (w, h) = (img.width as isize, img.height as isize);
    let mut out = GrayImage::new(img.width, img.height);
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0i32;
            for (dv, row) in k.iter().enumerate() {
                for (du, &c) in row.iter().enumerate() {
                    acc += c * img.get_clamped(u + du as isize - 1, v + dv as isize - 1) as i32;
                }
            }
            out.set(u as usize, v as usize, acc.clamp(0, 255) as u8);
        }
    }
    out
}

/// Two-stage sharpening, clamped to `0..=255` after each stage.
pub fn enhance(gray: &GrayImage) -> GrayImage {
    enhance_with(gray, &ENHANCE_KERNELS)
}

pub fn enhance_with(gray: &GrayImage, kernels: &EnhanceKernels) -> GrayImage {
    if gray.is_empty() {
        return gray.clone();
    }
    convolve_clamped(&convolve_clamped(gray, &kernels.w1), &kernels.w2)
}

/// Shrinks an image by `factor >= 1`, keeping the brightest pixel of each
/// block. Output pixel `i` covers input pixels `floor(i·f)..floor((i+1)·f)`.
pub fn downsample_max(img: &GrayImage, factor: f64) -> GrayImage {
    if !(factor > 1.0) || img.is_empty() {
        return img.clone();
    }
    let span = |i: usize, n: usize| {
        let lo = ((i as f64 * factor).floor() as usize).min(n - 1);
        let hi = (((i + 1) as f64 * factor).floor() as usize).clamp(lo + 1, n);
        lo..hi
    };
    let w = (img.width as f64 / factor).ceil() as usize;
    let h = (img.height as f64 / factor).ceil() as usize;
    GrayImage::from_fn(w, h, |i, j| {
        let (us, vs) = (span(i, img.width), span(j, img.height));
        vs.flat_map(|v| us.clone().map(move |u| (u, v)))
            .map(|(u, v)| img.get(u, v))
            .max()
            .unwrap_or(0)
    })
}

/// Grayscale dilation with a square `(2r+1)²` window.
pub fn dilate(img: &GrayImage, radius: usize) -> GrayImage {
    if radius == 0 || img.is_empty() {
        return img.clone();
    }
    let r = radius as isize;
    let pass = |src: &GrayImage, dx: isize, dy: isize| {
        GrayImage::from_fn(src.width, src.height, |u, v| {
            (-r..=r)
                .map(|o| src.get_clamped(u as isize + o * dx, v as isize + o * dy))
                .max()
                .unwrap_or(0)
        })
    };
    pass(&pass(img, 1, 0), 0, 1)
}

/// Writes a binary (P5) graymap.
pub fn encode_image(img: &GrayImage, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &img.data,
            img.width as u32,
            img.height as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn decode_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let invalid = |msg: String| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, msg));
    let decoder = image::codecs::pnm::PnmDecoder::new(Cursor::new(bytes))
        .map_err(|e| invalid(e.to_string()))?;
    if decoder.color_type() != image::ColorType::L8 {
        return Err(invalid(format!(
            "expected 8-bit graymap, found {:?}",
            decoder.color_type()
        )));
    }
    let (w, h) = decoder.dimensions();
    let mut data = vec![0u8; decoder.total_bytes() as usize];
    decoder
        .read_image(&mut data)
        .map_err(|e| invalid(e.to_string()))?;
    GrayImage::from_raw(w as usize, h as usize, data)
        .ok_or_else(|| invalid("pixel count mismatch".into()))
}

pub fn write_metadata(meta: &BevMetadata, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_metadata(path: &Path) -> Result<BevMetadata> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_keeps_block_maxima() {
        let img = GrayImage::from_fn(5, 4, |u, v| (u + 10 * v) as u8);
        let d = downsample_max(&img, 2.0);
        assert_eq!((d.width(), d.height()), (3, 2));
        assert_eq!(d.as_raw(), &[11, 13, 14, 31, 33, 34]);
        assert_eq!(downsample_max(&img, 1.0), img);
        let odd = downsample_max(&img, 2.5);
        assert_eq!((odd.width(), odd.height()), (2, 2));
        assert_eq!(odd.get(0, 0), 11);
    }

    #[test]
    fn dilation_spreads_maxima() {
        let mut img = GrayImage::new(5, 5);
        img.set(2, 2, 9);
        let d = dilate(&img, 1);
        for v in 0..5 {
            for u in 0..5 {
                let near = (1..=3).contains(&u) && (1..=3).contains(&v);
                assert_eq!(d.get(u, v), if near { 9 } else { 0 });
            }
        }
    }
    use proptest::prelude::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        pts.iter().map(|&p| Point3::from(p)).collect()
    }

    #[test]
    fn resolution_examples() {
        let corners = |n: usize, w: f64, h: f64| -> PointCloud {
            let mut pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(w, h, 0.0)];
            pts.resize(n, Point3::new(w / 2.0, h / 2.0, 1.0));
            PointCloud::new(pts)
        };
        assert_eq!(compute_resolution(&corners(200_000, 400.0, 500.0), 1.0).unwrap(), 1.0);
        assert_eq!(compute_resolution(&corners(2_000_000, 1000.0, 1000.0), 2.0).unwrap(), 4.0);
        let flat_x = cloud(&[[1.0, 0.0, 0.0], [1.0, 5.0, 0.0]]);
        assert!(matches!(compute_resolution(&flat_x, 1.0), Err(Error::DegenerateExtent)));
        assert!(matches!(
            compute_resolution(&PointCloud::default(), 1.0),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn resolution_is_linear_in_count_and_gamma() {
        let base = cloud(&[[0.0, 0.0, 0.0], [10.0, 20.0, 1.0]]);
        let mut doubled = base.clone();
        doubled.points.extend(base.points.clone());
        let r = compute_resolution(&base, 1.5).unwrap();
        assert_eq!(compute_resolution(&doubled, 1.5).unwrap(), 2.0 * r);
        assert_eq!(compute_resolution(&base, 3.0).unwrap(), 2.0 * r);
        let wider = scale_cloud(&base, 2.0);
        assert_eq!(compute_resolution(&wider, 1.5).unwrap(), r / 4.0);
    }

    #[test]
    fn scale_examples() {
        let c = cloud(&[[2.0, -3.0, 1.0]]);
        assert_eq!(scale_cloud(&c, 1.0), c);
        assert_eq!(scale_cloud(&c, 5.0).points[0], Point3::new(10.0, -15.0, 5.0));
        let back = scale_cloud(&scale_cloud(&c, 0.37), 1.0 / 0.37);
        assert!((back.points[0] - c.points[0]).norm() < 1e-12);
    }

    #[test]
    fn two_point_raster() {
        let r = rasterize(&cloud(&[[0.0, 0.0, 0.0], [2.4, 1.2, 5.0]]), 1.0).unwrap();
        assert_eq!((r.width, r.height), (4, 3));
        assert_eq!(r.height_at(0, 0), Some(0.0));
        assert_eq!(r.gray.get(0, 0), 0);
        assert_eq!(r.height_at(3, 2), Some(5.0));
        assert_eq!(r.gray.get(3, 2), 255);
        assert_eq!(r.occupied_count(), 2);
        for j in 0..3 {
            for i in 0..4 {
                if (i, j) != (0, 0) && (i, j) != (3, 2) {
                    assert!(!r.is_occupied(i, j));
                    assert_eq!(r.gray.get(i, j), 0);
                }
            }
        }
    }

    #[test]
    fn bucket_keeps_max_height() {
        let r = rasterize(&cloud(&[[0.0, 0.0, 0.0], [1.5, 0.5, 1.0], [1.7, 0.2, 3.0]]), 1.0).unwrap();
        assert_eq!(r.height_at(2, 1), Some(3.0));
        assert_eq!(r.counts[r.width + 2], 2);
    }

    #[test]
    fn flat_cloud_is_fully_bright() {
        let r = rasterize(&cloud(&[[0.0, 0.0, 2.0], [3.0, 1.0, 2.0], [1.0, 2.5, 2.0]]), 1.0).unwrap();
        for j in 0..r.height {
            for i in 0..r.width {
                let g = r.gray.get(i, j);
                assert_eq!(g, if r.is_occupied(i, j) { 255 } else { 0 });
            }
        }
    }

    #[test]
    fn enhance_examples() {
        assert_eq!(enhance(&GrayImage::new(7, 5)), GrayImage::new(7, 5));
        assert_eq!(enhance(&GrayImage::filled(7, 5, 5)), GrayImage::filled(7, 5, 160));

        let mut dot = GrayImage::new(9, 9);
        dot.set(4, 4, 255);
        let out = enhance(&dot);
        assert_eq!(out.get(4, 4), 255);
        for (du, dv) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            assert_eq!(out.get((4 + du) as usize, (4 + dv) as usize), 0);
        }
    }

    #[test]
    fn kernel_coefficients() {
        assert_eq!(ENHANCE_KERNELS.w1, [[-2, -2, -2], [-2, 32, -2], [-2, -2, -2]]);
        assert_eq!(ENHANCE_KERNELS.w2, [[-1, -1, -1], [-1, 10, -1], [-1, -1, -1]]);
    }

    #[test]
    fn image_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = GrayImage::from_fn(37, 19, |u, v| ((u * 31 + v * 17) % 256) as u8);
        encode_image(&img, &path).unwrap();
        assert_eq!(decode_image(&path).unwrap(), img);
        assert!(fs::read(&path).unwrap().starts_with(b"P5"));

        let one = GrayImage::new(1, 1);
        encode_image(&one, &path).unwrap();
        assert_eq!(decode_image(&path).unwrap(), one);

        encode_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(decode_image(&path), Err(Error::Io { .. })));
        assert!(matches!(decode_image(&dir.path().join("missing.pgm")), Err(Error::Io { .. })));
    }

    #[test]
    fn metadata_round_trip() {
        let r = rasterize(&cloud(&[[0.0, 0.0, 0.0], [2.4, 1.2, 5.0]]), 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_metadata(&r.metadata(), &path).unwrap();
        assert_eq!(read_metadata(&path).unwrap(), r.metadata());
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -5.0..30.0f64), 1..300)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn every_point_lands_in_one_bucket(c in arb_cloud(), res in 0.1..4.0f64) {
            let scaled = scale_cloud(&c, res);
            let r = rasterize(&scaled, res).unwrap();
            prop_assert_eq!(r.counts.iter().map(|&n| n as usize).sum::<usize>(), c.len());
            for p in &scaled.points {
                let (i, j) = r.bucket_of(p).unwrap();
                prop_assert!(r.height_at(i, j).unwrap() >= p.z);
                prop_assert!(r.z_min <= r.height_at(i, j).unwrap());
                prop_assert!(r.height_at(i, j).unwrap() <= r.z_max);
            }
        }

        #[test]
        fn gray_is_monotone_in_height(c in arb_cloud()) {
            let r = rasterize(&c, 1.0).unwrap();
            let mut occ: Vec<(f64, u8)> = (0..r.height)
                .flat_map(|j| (0..r.width).map(move |i| (i, j)))
                .filter_map(|(i, j)| r.height_at(i, j).map(|h| (h, r.gray.get(i, j))))
                .collect();
            occ.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in occ.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
        }

        #[test]
        fn enhance_keeps_range_and_size(data in prop::collection::vec(any::<u8>(), 1..400), w in 1usize..20) {
            let h = data.len() / w;
            prop_assume!(h >= 1);
            let img = GrayImage::from_raw(w, h, data[..w * h].to_vec()).unwrap();
            let out = enhance(&img);
            prop_assert_eq!((out.width(), out.height()), (w, h));
        }
    }
}
