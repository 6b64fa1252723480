//! Minimal raster line plots (no text): a frame, light grid lines at the
//! decades of log axes, and one coloured polyline with markers per series.

use image::{Rgb, RgbImage};
use std::path::Path;

const W: u32 = 640;
const H: u32 = 480;
const MARGIN: f64 = 40.0;
const COLOURS: [[u8; 3]; 5] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
];

pub struct Series {
    pub points: Vec<(f64, f64)>,
    /// Drawn dashed, for reference curves.
    pub dashed: bool,
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if lo > hi {
        return None;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    Some((lo - pad, hi + pad))
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>, dashed: bool) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for k in 0..=n {
        if dashed && (k / 6) % 2 == 1 {
            continue;
        }
        let t = k as f64 / n as f64;
        let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        if x >= 0.0 && y >= 0.0 && (x as u32) < W && (y as u32) < H {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

/// Writes a PNG with log10-transformed axes when `log` is set; points with
/// non-positive coordinates are dropped there.
pub fn line_plot(path: &Path, series: &[Series], log: bool) -> Result<(), String> {
    let tf = |v: f64| if log { v.log10() } else { v };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|p| !log || (p.0 > 0.0 && p.1 > 0.0))
                .map(|&(x, y)| (tf(x), tf(y)))
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .collect()
        })
        .collect();
    let (x0, x1) = range(pts.iter().flatten().map(|p| p.0)).ok_or("nothing to plot")?;
    let (y0, y1) = range(pts.iter().flatten().map(|p| p.1)).ok_or("nothing to plot")?;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W as f64 - 2.0 * MARGIN);
    let sy = |y: f64| H as f64 - MARGIN - (y - y0) / (y1 - y0) * (H as f64 - 2.0 * MARGIN);

    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let grid = Rgb([225, 225, 225]);
    if log {
        for d in x0.ceil() as i32..=x1.floor() as i32 {
            let x = sx(d as f64);
            line(&mut img, (x, MARGIN), (x, H as f64 - MARGIN), grid, false);
        }
        for d in y0.ceil() as i32..=y1.floor() as i32 {
            let y = sy(d as f64);
            line(&mut img, (MARGIN, y), (W as f64 - MARGIN, y), grid, false);
        }
    }
    let black = Rgb([0, 0, 0]);
    let (l, r, t, b) = (MARGIN, W as f64 - MARGIN, MARGIN, H as f64 - MARGIN);
    for (p, q) in [
        ((l, b), (r, b)),
        ((l, t), (r, t)),
        ((l, t), (l, b)),
        ((r, t), (r, b)),
    ] {
        line(&mut img, p, q, black, false);
    }
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let c = Rgb(COLOURS[k % COLOURS.len()]);
        let scr: Vec<(f64, f64)> = p.iter().map(|&(x, y)| (sx(x), sy(y))).collect();
        for w in scr.windows(2) {
            line(&mut img, w[0], w[1], c, s.dashed);
        }
        for &(x, y) in &scr {
            for d in -2..=2 {
                let d = d as f64;
                line(&mut img, (x - 2.0, y + d), (x + 2.0, y + d), c, false);
            }
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_a_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.png");
        let s = Series {
            points: vec![(0.1, 0.01), (0.2, 0.04), (0.4, 0.16)],
            dashed: false,
        };
        line_plot(&p, &[s], true).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (W, H));
        assert!(img.pixels().any(|px| px.0 == COLOURS[0]));
        let empty = Series {
            points: vec![(0.0, -1.0)],
            dashed: false,
        };
        assert!(line_plot(&p, &[empty], true).is_err());
    }
}
