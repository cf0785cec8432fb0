//! Scanpath overlays: numbered circles joined by lines, prediction in blue,
//! ground truth in brown, final fixation filled.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use scanshare_core::data::{pixel_to_u8, Fixation, ImageSample, Scanpath};

use crate::error::{CliError, Result};

pub const PREDICTED: Rgb<u8> = Rgb([30, 90, 255]);
pub const GROUND_TRUTH: Rgb<u8> = Rgb([150, 90, 40]);
const LABEL: Rgb<u8> = Rgb([255, 255, 255]);

/// 3x5 bitmaps for 0-9, one row per entry, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 1, 1],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

#[derive(Debug, Clone)]
pub struct Overlay {
    pub image: RgbImage,
    /// Circle centers in output pixels, in fixation order.
    pub predicted_centers: Vec<(u32, u32)>,
    pub ground_truth_centers: Vec<(u32, u32)>,
}

impl Overlay {
    pub fn png_bytes(&self) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        self.image
            .write_to(&mut buf, ImageFormat::Png)
            .expect("PNG encoding into memory");
        buf.into_inner()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.png_bytes()).map_err(|e| CliError::io(path, e))
    }
}

/// Output pixel under a fixation at `scale` times the image size.
pub fn fixation_pixel(f: Fixation, width: u32, height: u32) -> (u32, u32) {
    let x = ((f.x * width as f64) as u32).min(width - 1);
    let y = ((f.y * height as f64) as u32).min(height - 1);
    (x, y)
}

pub fn render_overlay(image: &ImageSample, predicted: &Scanpath, ground_truth: Option<&Scanpath>, scale: u32) -> Overlay {
    let scale = scale.max(1);
    let (h, w) = (image.height(), image.width());
    let (ow, oh) = (w as u32 * scale, h as u32 * scale);
    let px = image.pixels.data();
    let mut canvas = RgbImage::from_fn(ow, oh, |x, y| {
        let i = (y / scale) as usize * w + (x / scale) as usize;
        Rgb([pixel_to_u8(px[i]), pixel_to_u8(px[h * w + i]), pixel_to_u8(px[2 * h * w + i])])
    });
    let radius = (3 * scale).max(4) as i64;
    let ground_truth_centers = match ground_truth {
        Some(gt) => draw_scanpath(&mut canvas, gt, GROUND_TRUTH, radius),
        None => Vec::new(),
    };
    let predicted_centers = draw_scanpath(&mut canvas, predicted, PREDICTED, radius);
    Overlay {
        image: canvas,
        predicted_centers,
        ground_truth_centers,
    }
}

fn draw_scanpath(canvas: &mut RgbImage, sp: &Scanpath, color: Rgb<u8>, radius: i64) -> Vec<(u32, u32)> {
    let centers: Vec<(u32, u32)> = sp
        .fixations
        .iter()
        .map(|&f| fixation_pixel(f, canvas.width(), canvas.height()))
        .collect();
    for pair in centers.windows(2) {
        line(canvas, pair[0], pair[1], color);
    }
    for (i, &c) in centers.iter().enumerate() {
        let last = i + 1 == centers.len();
        circle(canvas, c, radius, color, last);
        number(canvas, c, i + 1, if last { LABEL } else { color });
    }
    centers
}

fn put(canvas: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < canvas.width() && (y as u32) < canvas.height() {
        canvas.put_pixel(x as u32, y as u32, color);
    }
}

fn line(canvas: &mut RgbImage, a: (u32, u32), b: (u32, u32), color: Rgb<u8>) {
    let (mut x, mut y) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
    let (sx, sy) = (if x < x1 { 1 } else { -1 }, if y < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(canvas, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Ring of width two, or a disc when `filled`.
fn circle(canvas: &mut RgbImage, c: (u32, u32), r: i64, color: Rgb<u8>, filled: bool) {
    let (cx, cy) = (c.0 as i64, c.1 as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = dx * dx + dy * dy;
            if d2 <= r * r && (filled || d2 >= (r - 2) * (r - 2)) {
                put(canvas, cx + dx, cy + dy, color);
            }
        }
    }
}

fn number(canvas: &mut RgbImage, c: (u32, u32), n: usize, color: Rgb<u8>) {
    let digits: Vec<usize> = n.to_string().bytes().map(|b| (b - b'0') as usize).collect();
    let width = digits.len() as i64 * 4 - 1;
    let (x0, y0) = (c.0 as i64 - width / 2, c.1 as i64 - 2);
    for (k, &d) in digits.iter().enumerate() {
        for (row, bits) in DIGITS[d].iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    put(canvas, x0 + k as i64 * 4 + col, y0 + row as i64, color);
                }
            }
        }
    }
}
