//! Keypoint matching between two BEV images, with a second focused pass
//! when the matched region looks small.

mod detect;
mod external;

pub use detect::{detect_keypoints, Feature, DESCRIPTOR_LEN, PATCH_SIZE};
pub use external::MATCH_SCHEMA;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bev::GrayImage;
use crate::error::{Error, Result};

/// Sub-pixel image location with a detector score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint2 {
    pub u: f64,
    pub v: f64,
    pub score: f64,
}

impl Keypoint2 {
    pub fn new(u: f64, v: f64, score: f64) -> Self {
        Self { u, v, score }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub a: Keypoint2,
    pub b: Keypoint2,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The same pairs with image roles exchanged.
    pub fn swapped(&self) -> MatchSet {
        MatchSet {
            pairs: self
                .pairs
                .iter()
                .map(|p| MatchPair {
                    a: p.b,
                    b: p.a,
                    confidence: p.confidence,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MatcherBackend {
    #[default]
    Builtin,
    /// Command template with `{imgA}`, `{imgB}` and `{out}` placeholders.
    External { command: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub backend: MatcherBackend,
    pub max_keypoints: usize,
    pub ratio_threshold: f64,
    /// FOCUS runs when the smaller estimated overlap fraction is below this.
    pub focus_threshold: f64,
    /// Pixels added around the matched region before re-matching.
    pub focus_margin: usize,
    pub harris_sigma: f64,
    pub harris_k: f64,
    pub nms_radius: usize,
    /// Corner responses below this fraction of the image maximum are ignored.
    pub response_threshold: f64,
    /// Pixel spacing of the descriptor sampling grid.
    pub descriptor_step: f64,
    /// Pre-smoothing for descriptors, in units of `descriptor_step`.
    pub descriptor_blur: f64,
    /// Largest disagreement (pixels) between a pair's distances in the two
    /// images for two matches to count as consistent. Zero disables the
    /// filter.
    pub consistency_tolerance: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            backend: MatcherBackend::Builtin,
            max_keypoints: 4096,
            ratio_threshold: 0.85,
            focus_threshold: 0.3,
            focus_margin: 32,
            harris_sigma: 1.5,
            harris_k: 0.04,
            nms_radius: 4,
            response_threshold: 0.01,
            descriptor_step: 4.0,
            descriptor_blur: 0.5,
            consistency_tolerance: 4.0,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.max_keypoints < 1 {
            return bad("max_keypoints must be at least 1");
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return bad("ratio_threshold must lie in (0, 1]");
        }
        if !(self.focus_threshold > 0.0 && self.focus_threshold <= 1.0) {
            return bad("focus_threshold must lie in (0, 1]");
        }
        if !(self.harris_sigma > 0.0 && self.descriptor_step > 0.0 && self.descriptor_blur >= 0.0) {
            return bad("harris_sigma and descriptor_step must be positive");
        }
        if !(self.consistency_tolerance >= 0.0 && self.consistency_tolerance.is_finite()) {
            return bad("consistency_tolerance must be >= 0");
        }
        if !(0.0..1.0).contains(&self.response_threshold) {
            return bad("response_threshold must lie in [0, 1)");
        }
        if let MatcherBackend::External { command } = &self.backend {
            external::validate_template(command)?;
        }
        Ok(())
    }
}

/// Mutual nearest neighbors in descriptor space that also pass the ratio
/// test in both directions. Confidence is `1 - d²/4`, the cosine
/// similarity mapped to [0, 1].
pub fn match_features(fa: &[Feature], fb: &[Feature], ratio: f64) -> MatchSet {
    if fa.is_empty() || fb.is_empty() {
        return MatchSet::default();
    }
    let ab = nearest_two(fa, fb);
    let ba = nearest_two(fb, fa);
    // A missing runner-up has infinite distance and always passes.
    let passes = |(_, d1, d2): (usize, f32, f32)| (d1 as f64).sqrt() < ratio * (d2 as f64).sqrt();
    let pairs = ab
        .iter()
        .enumerate()
        .filter_map(|(i, &(j, d1, d2))| {
            if ba[j].0 != i || !passes((j, d1, d2)) || !passes(ba[j]) {
                return None;
            }
            Some(MatchPair {
                a: fa[i].keypoint,
                b: fb[j].keypoint,
                confidence: (1.0 - d1 as f64 / 4.0).clamp(0.0, 1.0),
            })
        })
        .collect();
    MatchSet { pairs }
}

/// For each feature in `from`: index of the closest feature in `to`, the
/// squared distance to it, and the runner-up squared distance. Ties go to
/// the lower index.
fn nearest_two(from: &[Feature], to: &[Feature]) -> Vec<(usize, f32, f32)> {
    from.par_iter()
        .map(|f| {
            let mut best = (0usize, f32::INFINITY);
            let mut second = f32::INFINITY;
            for (j, g) in to.iter().enumerate() {
                let d: f32 = f
                    .descriptor
                    .iter()
                    .zip(&g.descriptor)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                if d < best.1 {
                    second = best.1;
                    best = (j, d);
                } else if d < second {
                    second = d;
                }
            }
            (best.0, best.1, second)
        })
        .collect()
}

/// Largest mutually consistent subset found by peeling: two matches are
/// consistent when the distance between their keypoints agrees across the
/// images within `tolerance`, as it must under a rigid in-plane motion. The
/// least-connected match is dropped until every survivor is consistent with
/// every other. Ties are broken independently of image order, so swapping
/// the images swaps the result. Survivors keep their original order.
pub fn consistent_subset(ms: &MatchSet, tolerance: f64) -> MatchSet {
    let n = ms.len();
    if n < 3 {
        return ms.clone();
    }
    let p = &ms.pairs;
    let dist = |x: &Keypoint2, y: &Keypoint2| (x.u - y.u).hypot(x.v - y.v);
    let compat: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| i != j && (dist(&p[i].a, &p[j].a) - dist(&p[i].b, &p[j].b)).abs() <= tolerance)
                .collect()
        })
        .collect();
    let key = |i: usize| {
        let (x, y) = ((p[i].a.u, p[i].a.v), (p[i].b.u, p[i].b.v));
        if x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).is_le() {
            (x, y)
        } else {
            (y, x)
        }
    };
    let cmp_key = |i: usize, j: usize| {
        let (ki, kj) = (key(i), key(j));
        let c = |a: (f64, f64), b: (f64, f64)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1));
        c(ki.0, kj.0).then(c(ki.1, kj.1))
    };
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = compat.iter().map(|row| row.iter().filter(|&&c| c).count()).collect();
    let mut remaining = n;
    loop {
        // Weakest survivor: fewest consistent partners, then lowest
        // confidence, then largest order-free key.
        let worst = (0..n)
            .filter(|&i| alive[i])
            .min_by(|&i, &j| {
                degree[i]
                    .cmp(&degree[j])
                    .then(p[i].confidence.total_cmp(&p[j].confidence))
                    .then(cmp_key(j, i))
            })
            .expect("non-empty");
        if degree[worst] + 1 == remaining {
            break;
        }
        alive[worst] = false;
        remaining -= 1;
        for j in 0..n {
            if alive[j] && compat[worst][j] {
                degree[j] -= 1;
            }
        }
    }
    MatchSet {
        pairs: (0..n).filter(|&i| alive[i]).map(|i| p[i]).collect(),
    }
}

/// Matches two images with the configured backend.
pub fn match_images(img_a: &GrayImage, img_b: &GrayImage, cfg: &MatcherConfig) -> Result<MatchSet> {
    match &cfg.backend {
        MatcherBackend::Builtin => {
            let (fa, fb) = rayon::join(|| detect_keypoints(img_a, cfg), || detect_keypoints(img_b, cfg));
            let ms = match_features(&fa, &fb, cfg.ratio_threshold);
            Ok(if cfg.consistency_tolerance > 0.0 {
                consistent_subset(&ms, cfg.consistency_tolerance)
            } else {
                ms
            })
        }
        MatcherBackend::External { command } => external::run(command, img_a, img_b),
    }
}

/// Inclusive pixel bounding box of a keypoint set.
fn keypoint_bounds<'a>(kps: impl Iterator<Item = &'a Keypoint2>) -> Option<[f64; 4]> {
    kps.fold(None, |acc, k| {
        Some(match acc {
            None => [k.u, k.v, k.u, k.v],
            Some([a, b, c, d]) => [a.min(k.u), b.min(k.v), c.max(k.u), d.max(k.v)],
        })
    })
}

/// Fraction of each image covered by the bounding box of its matched
/// keypoints, counting whole pixels.
pub fn estimate_overlap_fraction(
    ms: &MatchSet,
    dims_a: (usize, usize),
    dims_b: (usize, usize),
) -> (f64, f64) {
    let frac = |bb: Option<[f64; 4]>, (w, h): (usize, usize)| match bb {
        Some([u0, v0, u1, v1]) if w > 0 && h > 0 => {
            let area = (u1 - u0 + 1.0) * (v1 - v0 + 1.0);
            (area / (w * h) as f64).clamp(0.0, 1.0)
        }
        _ => 0.0,
    };
    (
        frac(keypoint_bounds(ms.pairs.iter().map(|p| &p.a)), dims_a),
        frac(keypoint_bounds(ms.pairs.iter().map(|p| &p.b)), dims_b),
    )
}

/// Crop window `(u0, v0, w, h)` around keypoints, grown by `margin`.
fn focus_window<'a>(
    kps: impl Iterator<Item = &'a Keypoint2>,
    img: &GrayImage,
    margin: usize,
) -> Option<(usize, usize, usize, usize)> {
    let [u0, v0, u1, v1] = keypoint_bounds(kps)?;
    let m = margin as f64;
    let lo = |x: f64| (x.floor() - m).max(0.0) as usize;
    let hi = |x: f64, n: usize| ((x.ceil() + m) as usize).min(n - 1);
    let (a, b) = (lo(u0), lo(v0));
    let (c, d) = (hi(u1, img.width()), hi(v1, img.height()));
    let (w, h) = (c + 1 - a, d + 1 - b);
    (w >= 3 && h >= 3).then_some((a, b, w, h))
}

fn dedup_key(k: &Keypoint2) -> (i64, i64) {
    ((k.u * 2.0).round() as i64, (k.v * 2.0).round() as i64)
}

/// Re-runs matching on the matched regions of both images and merges the
/// new pairs into `ms`. Existing pairs are never dropped; a re-detected pair
/// with the same rounded endpoints keeps the higher confidence, and a new
/// pair is only added when neither endpoint is already matched.
pub fn focus_rematch(
    img_a: &GrayImage,
    img_b: &GrayImage,
    ms: &MatchSet,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    let windows = (
        focus_window(ms.pairs.iter().map(|p| &p.a), img_a, cfg.focus_margin),
        focus_window(ms.pairs.iter().map(|p| &p.b), img_b, cfg.focus_margin),
    );
    let (Some(wa), Some(wb)) = windows else {
        return Ok(ms.clone());
    };
    let crop_a = img_a.crop(wa.0, wa.1, wa.2, wa.3);
    let crop_b = img_b.crop(wb.0, wb.1, wb.2, wb.3);
    let local = match_images(&crop_a, &crop_b, cfg)?;
    let shift = |k: Keypoint2, (u0, v0, _, _): (usize, usize, usize, usize)| {
        Keypoint2::new(k.u + u0 as f64, k.v + v0 as f64, k.score)
    };
    let extra = local.pairs.into_iter().map(|p| MatchPair {
        a: shift(p.a, wa),
        b: shift(p.b, wb),
        confidence: p.confidence,
    });
    Ok(merge_matches(ms, extra))
}

fn merge_matches(base: &MatchSet, extra: impl Iterator<Item = MatchPair>) -> MatchSet {
    let mut out = base.clone();
    let mut by_pair: HashMap<((i64, i64), (i64, i64)), usize> = HashMap::new();
    let mut used_a: HashMap<(i64, i64), usize> = HashMap::new();
    let mut used_b: HashMap<(i64, i64), usize> = HashMap::new();
    for (i, p) in out.pairs.iter().enumerate() {
        by_pair.entry((dedup_key(&p.a), dedup_key(&p.b))).or_insert(i);
        used_a.entry(dedup_key(&p.a)).or_insert(i);
        used_b.entry(dedup_key(&p.b)).or_insert(i);
    }
    for p in extra {
        let (ka, kb) = (dedup_key(&p.a), dedup_key(&p.b));
        if let Some(&i) = by_pair.get(&(ka, kb)) {
            if p.confidence > out.pairs[i].confidence {
                out.pairs[i] = p;
            }
            continue;
        }
        if used_a.contains_key(&ka) || used_b.contains_key(&kb) {
            continue;
        }
        let i = out.pairs.len();
        out.pairs.push(p);
        by_pair.insert((ka, kb), i);
        used_a.insert(ka, i);
        used_b.insert(kb, i);
    }
    out
}

/// Match counts and the overlap gate decision of one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub first_pass: usize,
    pub overlap: (f64, f64),
    pub focus_used: bool,
    pub final_count: usize,
}

/// First-pass matching, followed by one FOCUS pass when the smaller
/// estimated overlap fraction is below the threshold.
pub fn match_pipeline(img_a: &GrayImage, img_b: &GrayImage, cfg: &MatcherConfig) -> Result<MatchSet> {
    match_pipeline_with_stats(img_a, img_b, cfg, true).map(|(ms, _)| ms)
}

/// As [`match_pipeline`]; `allow_focus = false` skips the second pass
/// regardless of overlap.
pub fn match_pipeline_with_stats(
    img_a: &GrayImage,
    img_b: &GrayImage,
    cfg: &MatcherConfig,
    allow_focus: bool,
) -> Result<(MatchSet, MatchStats)> {
    let first = match_images(img_a, img_b, cfg)?;
    let overlap = estimate_overlap_fraction(
        &first,
        (img_a.width(), img_a.height()),
        (img_b.width(), img_b.height()),
    );
    let focus_used = allow_focus && should_focus(&first, overlap, cfg.focus_threshold);
    let ms = if focus_used {
        focus_rematch(img_a, img_b, &first, cfg)?
    } else {
        first.clone()
    };
    let stats = MatchStats {
        first_pass: first.len(),
        overlap,
        focus_used,
        final_count: ms.len(),
    };
    Ok((ms, stats))
}

/// The overlap gate: FOCUS needs matches and a small matched region.
pub fn should_focus(ms: &MatchSet, overlap: (f64, f64), threshold: f64) -> bool {
    !ms.is_empty() && overlap.0.min(overlap.1) < threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blocks(seed: u64, w: usize, h: usize, n: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rects: Vec<(usize, usize, usize, usize, u8)> = (0..n)
            .map(|_| {
                let (bw, bh) = (rng.gen_range(8..30), rng.gen_range(8..30));
                (
                    rng.gen_range(0..w - bw),
                    rng.gen_range(0..h - bh),
                    bw,
                    bh,
                    rng.gen_range(60..=255),
                )
            })
            .collect();
        GrayImage::from_fn(w, h, |u, v| {
            rects
                .iter()
                .filter(|r| u >= r.0 && u < r.0 + r.2 && v >= r.1 && v < r.1 + r.3)
                .map(|r| r.4)
                .max()
                .unwrap_or(0)
        })
    }

    fn kp(u: f64, v: f64) -> Keypoint2 {
        Keypoint2::new(u, v, 1.0)
    }

    fn pair(a: (f64, f64), b: (f64, f64), c: f64) -> MatchPair {
        MatchPair {
            a: kp(a.0, a.1),
            b: kp(b.0, b.1),
            confidence: c,
        }
    }

    #[test]
    fn self_match_is_identity() {
        let img = blocks(1, 200, 160, 25);
        let cfg = MatcherConfig::default();
        let n = detect_keypoints(&img, &cfg).len();
        let ms = match_images(&img, &img, &cfg).unwrap();
        assert!(n > 10);
        assert_eq!(ms.len(), n);
        assert!(ms.pairs.iter().all(|p| p.a == p.b && p.confidence > 0.999));
    }

    #[test]
    fn translated_copy() {
        let big = blocks(2, 220, 160, 30);
        let a = big.crop(0, 0, 200, 160);
        let b = big.crop(10, 0, 200, 160);
        let ms = match_images(&a, &b, &MatcherConfig::default()).unwrap();
        assert!(ms.len() >= 10);
        let good = ms
            .pairs
            .iter()
            .filter(|p| ((p.a.u - p.b.u) - 10.0).abs() <= 1.0 && (p.a.v - p.b.v).abs() <= 1.0)
            .count();
        assert!(good as f64 >= 0.8 * ms.len() as f64, "{good}/{}", ms.len());
    }

    #[test]
    fn unrelated_noise_rarely_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut noise = || GrayImage::from_fn(128, 128, |_, _| rng.gen());
        let (a, b) = (noise(), noise());
        let cfg = MatcherConfig::default();
        let n = detect_keypoints(&a, &cfg).len().min(detect_keypoints(&b, &cfg).len());
        let ms = match_images(&a, &b, &cfg).unwrap();
        assert!((ms.len() as f64) < 0.1 * n as f64, "{} of {n}", ms.len());
    }

    #[test]
    fn symmetric_under_swap() {
        let big = blocks(4, 260, 200, 40);
        let a = big.crop(0, 0, 200, 200);
        let b = big.crop(40, 0, 200, 200);
        let cfg = MatcherConfig::default();
        let ab = match_images(&a, &b, &cfg).unwrap();
        let ba = match_images(&b, &a, &cfg).unwrap();
        let key = |m: &MatchSet| {
            let mut v: Vec<_> = m
                .pairs
                .iter()
                .map(|p| (p.a.u.to_bits(), p.a.v.to_bits(), p.b.u.to_bits(), p.b.v.to_bits(), p.confidence.to_bits()))
                .collect();
            v.sort();
            v
        };
        assert!(!ab.is_empty());
        assert_eq!(key(&ab), key(&ba.swapped()));
    }

    #[test]
    fn consistency_keeps_rigid_inliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (c, sn, t) = (0.6f64.cos(), 0.6f64.sin(), (40.0, -15.0));
        let mut pairs = Vec::new();
        for k in 0..40 {
            let (u, v) = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
            let b = if k % 3 == 0 {
                (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0))
            } else {
                (c * u - sn * v + t.0 + rng.gen_range(-0.5..0.5), sn * u + c * v + t.1)
            };
            pairs.push(pair((u, v), b, rng.gen_range(0.5..1.0)));
        }
        let ms = MatchSet { pairs };
        let kept = consistent_subset(&ms, 4.0);
        let inliers: Vec<MatchPair> = ms.pairs.iter().enumerate().filter(|(k, _)| k % 3 != 0).map(|(_, p)| *p).collect();
        assert_eq!(kept.pairs, inliers);
        let swapped = consistent_subset(&ms.swapped(), 4.0);
        assert_eq!(swapped, kept.swapped());
    }

    #[test]
    fn consistency_leaves_small_sets() {
        let ms = MatchSet {
            pairs: vec![pair((0.0, 0.0), (50.0, 50.0), 0.9), pair((10.0, 0.0), (0.0, 0.0), 0.8)],
        };
        assert_eq!(consistent_subset(&ms, 1.0), ms);
    }

    #[test]
    fn mutual_uniqueness() {
        let a = blocks(5, 200, 200, 30);
        let ms = match_images(&a, &blocks(6, 200, 200, 30), &MatcherConfig::default()).unwrap();
        let mut ka: Vec<_> = ms.pairs.iter().map(|p| (p.a.u.to_bits(), p.a.v.to_bits())).collect();
        ka.sort();
        ka.dedup();
        assert_eq!(ka.len(), ms.len());
    }

    #[test]
    fn overlap_estimates() {
        assert_eq!(estimate_overlap_fraction(&MatchSet::default(), (10, 10), (10, 10)), (0.0, 0.0));
        let full = MatchSet {
            pairs: vec![pair((0.0, 0.0), (0.0, 0.0), 1.0), pair((99.0, 79.0), (49.0, 59.0), 1.0)],
        };
        assert_eq!(estimate_overlap_fraction(&full, (100, 80), (50, 60)), (1.0, 1.0));
        let quad = MatchSet {
            pairs: vec![pair((0.0, 0.0), (50.0, 50.0), 1.0), pair((49.0, 49.0), (99.0, 99.0), 1.0)],
        };
        let (fa, fb) = estimate_overlap_fraction(&quad, (100, 100), (100, 100));
        assert!((fa - 0.25).abs() <= 0.02 && (fb - 0.25).abs() <= 0.02);
    }

    #[test]
    fn focus_gate() {
        let ms = MatchSet {
            pairs: vec![pair((1.0, 1.0), (1.0, 1.0), 1.0)],
        };
        assert!(!should_focus(&ms, (0.5, 0.5), 0.3));
        assert!(should_focus(&ms, (0.1, 0.5), 0.3));
        assert!(should_focus(&ms, (0.99, 0.99), 1.0));
        assert!(!should_focus(&MatchSet::default(), (0.0, 0.0), 1.0));
    }

    #[test]
    fn merge_keeps_existing_pairs() {
        let base = MatchSet {
            pairs: vec![pair((10.0, 10.0), (20.0, 20.0), 0.5), pair((30.0, 30.0), (40.0, 40.0), 0.9)],
        };
        let extra = vec![
            pair((10.1, 10.1), (20.1, 19.9), 0.8),
            pair((30.0, 30.0), (55.0, 55.0), 1.0),
            pair((60.0, 60.0), (70.0, 70.0), 0.6),
        ];
        let m = merge_matches(&base, extra.into_iter());
        assert_eq!(m.len(), 3);
        assert_eq!(m.pairs[0].confidence, 0.8);
        assert_eq!(m.pairs[1], base.pairs[1]);
        assert_eq!(m.pairs[2].a, kp(60.0, 60.0));
        let same = merge_matches(&base, std::iter::empty());
        assert_eq!(same, base);
    }

    #[test]
    fn focus_maps_back_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let big = blocks(8, 300, 240, 60);
        let a = big.crop(0, 0, 240, 240);
        let b = big.crop(60, 0, 240, 240);
        let cfg = MatcherConfig::default();
        for _ in 0..5 {
            let n = rng.gen_range(1..5);
            let ms = MatchSet {
                pairs: (0..n)
                    .map(|_| {
                        let (u, v) = (rng.gen_range(60.0..239.0), rng.gen_range(0.0..239.0));
                        pair((u, v), (u - 60.0, v), 0.5)
                    })
                    .collect(),
            };
            let out = focus_rematch(&a, &b, &ms, &cfg).unwrap();
            assert!(out.len() >= ms.len());
            assert_eq!(&out.pairs[..ms.len()], &ms.pairs[..]);
            for p in &out.pairs {
                assert!(p.a.u >= 0.0 && p.a.u < 240.0 && p.a.v >= 0.0 && p.a.v < 240.0);
                assert!(p.b.u >= 0.0 && p.b.u < 240.0 && p.b.v >= 0.0 && p.b.v < 240.0);
            }
        }
    }
}
