//! Overlay and plot rendering: 1-px anti-aliased strokes on RGB buffers.

use epiline::geometry::{clip_to_rect, HomLine};
use epiline::imaging::GrayImage;
use image::{Rgb, RgbImage};

pub fn to_rgb(img: &GrayImage) -> RgbImage {
    let g = img.to_luma8();
    RgbImage::from_fn(g.width(), g.height(), |x, y| {
        let v = g.get_pixel(x, y).0[0];
        Rgb([v, v, v])
    })
}

fn blend(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3], cover: f64) {
    if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 || cover <= 0.0 {
        return;
    }
    let px = img.get_pixel_mut(x as u32, y as u32);
    for c in 0..3 {
        let v = px.0[c] as f64 * (1.0 - cover) + color[c] as f64 * cover;
        px.0[c] = v.round().clamp(0.0, 255.0) as u8;
    }
}

/// Xiaolin Wu's line between two points in pixel coordinates.
pub fn segment(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], color: [u8; 3]) {
    let steep = (b[1] - a[1]).abs() > (b[0] - a[0]).abs();
    let (mut x0, mut y0, mut x1, mut y1) = if steep { (a[1], a[0], b[1], b[0]) } else { (a[0], a[1], b[0], b[1]) };
    if x0 > x1 {
        std::mem::swap(&mut x0, &mut x1);
        std::mem::swap(&mut y0, &mut y1);
    }
    let dx = x1 - x0;
    let grad = if dx == 0.0 { 1.0 } else { (y1 - y0) / dx };
    let mut plot = |x: i64, y: i64, c: f64| {
        if steep {
            blend(img, y, x, color, c)
        } else {
            blend(img, x, y, color, c)
        }
    };
    let start = x0.round() as i64;
    let end = x1.round() as i64;
    let mut y = y0 + grad * (start as f64 - x0);
    for x in start..=end {
        let fl = y.floor();
        let frac = y - fl;
        plot(x, fl as i64, 1.0 - frac);
        plot(x, fl as i64 + 1, frac);
        y += grad;
    }
}

/// Draws the visible chord of `l`; returns false when it misses the image.
pub fn line(img: &mut RgbImage, l: &HomLine, color: [u8; 3]) -> bool {
    let b = epiline::geometry::ImageBounds::new(img.width() as usize, img.height() as usize).expect("non-empty image");
    match clip_to_rect(l, b) {
        Some((p, q)) => {
            segment(img, p, q, color);
            true
        }
        None => false,
    }
}

/// Two stacked panels: the raw profiles, then the first against the warped
/// second.
pub fn profile_plot(a: &[f64], b: &[f64], warped: &[f64]) -> RgbImage {
    let (w, panel) = (800u32, 220u32);
    let mut img = RgbImage::from_pixel(w, 2 * panel, Rgb([255, 255, 255]));
    let margin = 10.0;
    let n = a.len().max(2);
    let xs = |i: usize| margin + i as f64 * (w as f64 - 2.0 * margin) / (n - 1) as f64;
    for k in 0..2 {
        let top = (k * panel) as f64;
        let ys = |v: f64| top + panel as f64 - margin - v.clamp(0.0, 255.0) / 255.0 * (panel as f64 - 2.0 * margin);
        let axis = [170, 170, 170];
        segment(&mut img, [margin, ys(0.0)], [w as f64 - margin, ys(0.0)], axis);
        segment(&mut img, [margin, ys(0.0)], [margin, ys(255.0)], axis);
        let second = if k == 0 { b } else { warped };
        for (series, color) in [(a, [20, 20, 20]), (second, [220, 60, 40])] {
            for i in 1..series.len() {
                segment(&mut img, [xs(i - 1), ys(series[i - 1])], [xs(i), ys(series[i])], color);
            }
        }
    }
    img
}
