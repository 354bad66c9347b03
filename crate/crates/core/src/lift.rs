//! Maps matched BEV keypoints back to 3D.
//!
//! `X = (u + x_min) / res`, `Y = (v + y_min) / res`, and `Z` comes from the
//! height grid at the nearest pixel. The planar coordinates keep the
//! matcher's sub-pixel precision.

use serde::{Deserialize, Serialize};

use crate::bev::BevRaster;
use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::match2d::{Keypoint2, MatchSet};

/// Where the lifted height comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightSource {
    /// The stored height of the pixel's highest point (lossless).
    #[default]
    Grid,
    /// Height reconstructed from the 8-bit gray level at the centre of its
    /// quantization bin; error is at most half a gray step.
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence3D {
    #[serde(rename = "src")]
    pub source: Point3,
    #[serde(rename = "tgt")]
    pub target: Point3,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence3D>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("correspondences serialize")
    }
}

impl FromIterator<Correspondence3D> for CorrespondenceSet {
    fn from_iter<I: IntoIterator<Item = Correspondence3D>>(iter: I) -> Self {
        Self {
            pairs: iter.into_iter().collect(),
        }
    }
}

/// Nearest pixel of a keypoint.
pub fn keypoint_pixel(kp: &Keypoint2) -> Option<(usize, usize)> {
    let (i, j) = (kp.u.round(), kp.v.round());
    (i >= 0.0 && j >= 0.0).then_some((i as usize, j as usize))
}

pub fn lift_point(kp: &Keypoint2, raster: &BevRaster, source: HeightSource) -> Result<Point3> {
    lift_point_snapped(kp, raster, source, 0.0)
}

/// Like [`lift_point`], but when `radius_px > 0` the height comes from the
/// highest occupied pixel within that many pixels of the keypoint pixel.
/// Errors only when that whole neighborhood is empty.
pub fn lift_point_snapped(
    kp: &Keypoint2,
    raster: &BevRaster,
    source: HeightSource,
    radius_px: f64,
) -> Result<Point3> {
    let empty = || Error::EmptyPixel { u: kp.u, v: kp.v };
    let (ci, cj) = keypoint_pixel(kp).ok_or_else(empty)?;
    let r = radius_px.max(0.0).floor() as isize;
    let mut best: Option<(usize, usize, f64)> = None;
    for dj in -r..=r {
        for di in -r..=r {
            if ((di * di + dj * dj) as f64) > radius_px * radius_px {
                continue;
            }
            let (i, j) = (ci as isize + di, cj as isize + dj);
            if i < 0 || j < 0 || i as usize >= raster.width || j as usize >= raster.height {
                continue;
            }
            let (i, j) = (i as usize, j as usize);
            if let Some(h) = raster.height_at(i, j) {
                if best.map_or(true, |(_, _, bh)| h > bh) {
                    best = Some((i, j, h));
                }
            }
        }
    }
    let (i, j, _) = best.ok_or_else(empty)?;
    let k = j * raster.width + i;
    let z = match source {
        HeightSource::Grid => raster.metric_heights[k],
        HeightSource::Gray => {
            let range = raster.z_max - raster.z_min;
            let g = raster.gray.get(i, j) as f64;
            let scaled = (raster.z_min + (g + 0.5) * range / 255.0).min(raster.z_max);
            scaled / raster.res
        }
    };
    Ok(Point3::new(
        (kp.u + raster.x_min) / raster.res,
        (kp.v + raster.y_min) / raster.res,
        z,
    ))
}

/// Lifts both ends of every match; pairs touching an empty pixel are dropped.
pub fn lift_matches(
    ms: &MatchSet,
    raster_a: &BevRaster,
    raster_b: &BevRaster,
    source: HeightSource,
) -> Result<CorrespondenceSet> {
    lift_matches_snapped(ms, raster_a, raster_b, source, 0.0)
}

/// As [`lift_matches`] with height snapping over a radius given in meters
/// (converted to pixels per raster).
pub fn lift_matches_snapped(
    ms: &MatchSet,
    raster_a: &BevRaster,
    raster_b: &BevRaster,
    source: HeightSource,
    snap_m: f64,
) -> Result<CorrespondenceSet> {
    let cs: CorrespondenceSet = ms
        .pairs
        .iter()
        .filter_map(|m| {
            let a = lift_point_snapped(&m.a, raster_a, source, snap_m * raster_a.res).ok()?;
            let b = lift_point_snapped(&m.b, raster_b, source, snap_m * raster_b.res).ok()?;
            Some(Correspondence3D {
                source: a,
                target: b,
                confidence: m.confidence,
            })
        })
        .collect();
    if cs.len() < 3 {
        return Err(Error::TooFewCorrespondences(cs.len()));
    }
    Ok(cs)
}
