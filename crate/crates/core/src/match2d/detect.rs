//! Harris corners with oriented, mean-normalized patch descriptors.

use rayon::prelude::*;

use super::{Keypoint2, MatcherConfig};
use crate::bev::GrayImage;

/// Side length of the square descriptor sampling grid.
pub const PATCH_SIZE: usize = 16;
pub const DESCRIPTOR_LEN: usize = PATCH_SIZE * PATCH_SIZE;

/// A keypoint with its unit-norm descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint2,
    /// Patch orientation in radians.
    pub angle: f64,
    pub descriptor: Vec<f32>,
}

#[derive(Debug, Clone)]
pub(crate) struct FloatImage {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            data: img.as_raw().iter().map(|&g| g as f32 / 255.0).collect(),
        }
    }

    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    /// Bilinear sample with replicated borders.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x0 + 1, y0) * fx;
        let bottom = self.at(x0, y0 + 1) * (1.0 - fx) + self.at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    fn map(&self, f: impl Fn(usize, usize) -> f32 + Sync) -> Self {
        let data = (0..self.w * self.h)
            .into_par_iter()
            .map(|k| f(k % self.w, k / self.w))
            .collect();
        Self {
            w: self.w,
            h: self.h,
            data,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / sum) as f32).collect()
}

/// Separable Gaussian blur with replicated borders; `sigma <= 0` copies.
pub(crate) fn blur(img: &FloatImage, sigma: f64) -> FloatImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let conv = |src: &FloatImage, dx: isize, dy: isize| {
        src.map(|x, y| {
            k.iter()
                .enumerate()
                .map(|(i, w)| {
                    let o = i as isize - r;
                    w * src.at(x as isize + o * dx, y as isize + o * dy)
                })
                .sum()
        })
    };
    conv(&conv(img, 1, 0), 0, 1)
}

pub(crate) fn sobel(img: &FloatImage) -> (FloatImage, FloatImage) {
    let gx = img.map(|x, y| {
        let (x, y) = (x as isize, y as isize);
        (img.at(x + 1, y - 1) + 2.0 * img.at(x + 1, y) + img.at(x + 1, y + 1))
            - (img.at(x - 1, y - 1) + 2.0 * img.at(x - 1, y) + img.at(x - 1, y + 1))
    });
    let gy = img.map(|x, y| {
        let (x, y) = (x as isize, y as isize);
        (img.at(x - 1, y + 1) + 2.0 * img.at(x, y + 1) + img.at(x + 1, y + 1))
            - (img.at(x - 1, y - 1) + 2.0 * img.at(x, y - 1) + img.at(x + 1, y - 1))
    });
    (gx, gy)
}

pub(crate) fn harris_response(img: &FloatImage, sigma: f64, k: f64) -> FloatImage {
    let (gx, gy) = sobel(img);
    let prod = |a: &FloatImage, b: &FloatImage| a.map(|x, y| a.data[y * a.w + x] * b.data[y * b.w + x]);
    let sxx = blur(&prod(&gx, &gx), sigma);
    let syy = blur(&prod(&gy, &gy), sigma);
    let sxy = blur(&prod(&gx, &gy), sigma);
    let k = k as f32;
    img.map(|x, y| {
        let i = y * img.w + x;
        let (a, b, c) = (sxx.data[i], syy.data[i], sxy.data[i]);
        a * b - c * c - k * (a + b) * (a + b)
    })
}

/// Vertex offset of the parabola through three samples, in [-0.5, 0.5].
fn parabola_peak(l: f32, c: f32, r: f32) -> f64 {
    let denom = l - 2.0 * c + r;
    if denom.abs() < 1e-12 {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5) as f64
}

/// Harris corners after non-maximum suppression, strongest first.
pub(crate) fn harris_corners(img: &FloatImage, cfg: &MatcherConfig) -> Vec<Keypoint2> {
    if img.w < 3 || img.h < 3 {
        return Vec::new();
    }
    let resp = harris_response(img, cfg.harris_sigma, cfg.harris_k);
    let max = resp.data.iter().copied().fold(0.0f32, f32::max);
    if max <= 1e-9 {
        return Vec::new();
    }
    let thresh = max * cfg.response_threshold as f32;
    let r = cfg.nms_radius as isize;
    let (w, h) = (img.w as isize, img.h as isize);
    let mut kps: Vec<Keypoint2> = (0..img.w * img.h)
        .into_par_iter()
        .filter_map(|i| {
            let c = resp.data[i];
            if c <= thresh {
                return None;
            }
            let (x, y) = ((i % img.w) as isize, (i / img.w) as isize);
            for ny in (y - r).max(0)..=(y + r).min(h - 1) {
                for nx in (x - r).max(0)..=(x + r).min(w - 1) {
                    let j = (ny * w + nx) as usize;
                    let o = resp.data[j];
                    // Ties go to the earliest pixel in raster order.
                    if o > c || (o == c && j < i) {
                        return None;
                    }
                }
            }
            let du = parabola_peak(resp.at(x - 1, y), c, resp.at(x + 1, y));
            let dv = parabola_peak(resp.at(x, y - 1), c, resp.at(x, y + 1));
            let u = (x as f64 + du).clamp(0.0, (img.w - 1) as f64);
            let v = (y as f64 + dv).clamp(0.0, (img.h - 1) as f64);
            Some(Keypoint2::new(u, v, c as f64))
        })
        .collect();
    kps.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.v.total_cmp(&b.v))
            .then(a.u.total_cmp(&b.u))
    });
    kps.truncate(cfg.max_keypoints);
    kps
}

/// Direction of the Gaussian-weighted mean gradient around a point; stable
/// for corners, where it bisects the two edges.
fn orientation(gx: &FloatImage, gy: &FloatImage, u: f64, v: f64, radius: f64) -> f64 {
    let r = radius.ceil() as isize;
    let (cx, cy) = (u.round() as isize, v.round() as isize);
    let s2 = 2.0 * (radius / 2.0).powi(2);
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > radius * radius {
                continue;
            }
            let w = (-d2 / s2).exp();
            sx += w * gx.at(cx + dx, cy + dy) as f64;
            sy += w * gy.at(cx + dx, cy + dy) as f64;
        }
    }
    sy.atan2(sx)
}

fn describe(smooth: &FloatImage, kp: &Keypoint2, angle: f64, step: f64) -> Option<Vec<f32>> {
    let (s, c) = angle.sin_cos();
    let half = (PATCH_SIZE as f64 - 1.0) / 2.0;
    let mut d = Vec::with_capacity(DESCRIPTOR_LEN);
    for j in 0..PATCH_SIZE {
        for i in 0..PATCH_SIZE {
            let (a, b) = ((i as f64 - half) * step, (j as f64 - half) * step);
            d.push(smooth.sample(kp.u + c * a - s * b, kp.v + s * a + c * b));
        }
    }
    let mean = d.iter().sum::<f32>() / d.len() as f32;
    d.iter_mut().for_each(|x| *x -= mean);
    let norm = d.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm < 1e-6 {
        return None;
    }
    d.iter_mut().for_each(|x| *x /= norm);
    Some(d)
}

/// Detects up to `max_keypoints` Harris corners, strongest first, each with
/// a unit-norm descriptor. Keypoints on flat patches are dropped.
pub fn detect_keypoints(image: &GrayImage, cfg: &MatcherConfig) -> Vec<Feature> {
    if image.is_empty() {
        return Vec::new();
    }
    let img = FloatImage::from_gray(image);
    let kps = harris_corners(&img, cfg);
    if kps.is_empty() {
        return Vec::new();
    }
    let step = cfg.descriptor_step;
    let smooth = blur(&img, cfg.descriptor_blur * step);
    let (gx, gy) = sobel(&smooth);
    let radius = half_extent(step);
    kps.par_iter()
        .filter_map(|kp| {
            let angle = orientation(&gx, &gy, kp.u, kp.v, radius);
            describe(&smooth, kp, angle, step).map(|descriptor| Feature {
                keypoint: *kp,
                angle,
                descriptor,
            })
        })
        .collect()
}

fn half_extent(step: f64) -> f64 {
    (PATCH_SIZE as f64 / 2.0) * step
}
