//! Minimal static line-plot rendering to PNG.

use bluref_core::Image;

const WIDTH: usize = 480;
const HEIGHT: usize = 320;
const MARGIN: usize = 40;

fn put(img: &mut Image, y: i64, x: i64, rgb: (f32, f32, f32)) {
    if y < 0 || x < 0 || y as usize >= img.height() || x as usize >= img.width() {
        return;
    }
    let (y, x) = (y as usize, x as usize);
    img.set(y, x, 0, rgb.0);
    img.set(y, x, 1, rgb.1);
    img.set(y, x, 2, rgb.2);
}

fn draw_segment(img: &mut Image, a: (i64, i64), b: (i64, i64), rgb: (f32, f32, f32)) {
    let (mut y0, mut x0) = a;
    let (y1, x1) = b;
    let dy = (y1 - y0).abs();
    let dx = (x1 - x0).abs();
    let sy = if y0 < y1 { 1 } else { -1 };
    let sx = if x0 < x1 { 1 } else { -1 };
    let mut err = dx - dy;
    loop {
        put(img, y0, x0, rgb);
        if y0 == y1 && x0 == x1 {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dy {
            err -= dy;
            x0 += sx;
        }
        if e2 < dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Render `(x, y)` samples as a single blue polyline on white with black
/// axes. Returns an RGB image; callers write it out as PNG.
pub fn line_plot(points: &[(f64, f64)]) -> Image {
    let mut img = Image::constant(HEIGHT, WIDTH, 3, 1.0);
    let axis = (0.0, 0.0, 0.0);
    // axes
    draw_segment(
        &mut img,
        (MARGIN as i64, MARGIN as i64),
        ((HEIGHT - MARGIN) as i64, MARGIN as i64),
        axis,
    );
    draw_segment(
        &mut img,
        ((HEIGHT - MARGIN) as i64, MARGIN as i64),
        ((HEIGHT - MARGIN) as i64, (WIDTH - MARGIN) as i64),
        axis,
    );
    if points.is_empty() {
        return img;
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let fx = (x - x_min) / (x_max - x_min);
        let fy = (y - y_min) / (y_max - y_min);
        let px = MARGIN as f64 + fx * (WIDTH - 2 * MARGIN) as f64;
        let py = (HEIGHT - MARGIN) as f64 - fy * (HEIGHT - 2 * MARGIN) as f64;
        (py.round() as i64, px.round() as i64)
    };
    let line = (0.1, 0.25, 0.8);
    for pair in points.windows(2) {
        let a = to_px(pair[0].0, pair[0].1);
        let b = to_px(pair[1].0, pair[1].1);
        draw_segment(&mut img, a, b, line);
    }
    // emphasize samples with 3x3 dots
    for &(x, y) in points {
        let (py, px) = to_px(x, y);
        for dy in -1..=1 {
            for dx in -1..=1 {
                put(&mut img, py + dy, px + dx, line);
            }
        }
    }
    img
}
