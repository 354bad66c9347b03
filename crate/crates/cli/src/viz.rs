//! Side-by-side match figures.

use mtpcr::bev::GrayImage;
use mtpcr::match2d::MatchSet;

/// Brightest value the background may take, so that lines stand out.
pub const BACKGROUND_MAX: u8 = 191;
pub const LINE: u8 = 255;

/// `a` and `b` next to each other (top-aligned), dimmed, with a line per
/// match from its point in `a` to its point in `b`.
pub fn composite(a: &GrayImage, b: &GrayImage, ms: &MatchSet) -> GrayImage {
    let (w, h) = (a.width() + b.width(), a.height().max(b.height()));
    let dim = |x: u8| (x as u16 * BACKGROUND_MAX as u16 / 255) as u8;
    let mut out = GrayImage::from_fn(w, h, |u, v| {
        if u < a.width() {
            if v < a.height() {
                dim(a.get(u, v))
            } else {
                0
            }
        } else if v < b.height() {
            dim(b.get(u - a.width(), v))
        } else {
            0
        }
    });
    let offset = a.width() as f64;
    for p in &ms.pairs {
        draw_line(
            &mut out,
            (p.a.u.round() as i64, p.a.v.round() as i64),
            ((p.b.u + offset).round() as i64, p.b.v.round() as i64),
        );
    }
    out
}

/// Bresenham segment, clipped to the image.
fn draw_line(img: &mut GrayImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64)) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as usize) < img.width() && (y0 as usize) < img.height() {
            img.set(x0 as usize, y0 as usize, LINE);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
