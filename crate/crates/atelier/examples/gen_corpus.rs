//! Regenerates the stand-in drafts and the PNG mask under `corpus/`.
//!
//! The drafts only imitate the three kinds of input in the original
//! examples: a line sketch, a painted abstract, and a photographed foil
//! figure. Output is deterministic.
//!
//! ```text
//! cargo run -p atelier --example gen_corpus
//! ```

use std::f32::consts::{PI, TAU};
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{GrayImage, Luma, Rgb, RgbImage};

type Pt = (f32, f32);

fn noise(x: u32, y: u32, salt: u32) -> u32 {
    let mut h = x.wrapping_mul(0x9E37_79B1) ^ y.wrapping_mul(0x85EB_CA77) ^ salt.wrapping_mul(0xC2B2_AE3D);
    h ^= h >> 15;
    h = h.wrapping_mul(0x2C1B_3C6D);
    h ^= h >> 12;
    h = h.wrapping_mul(0x297A_2D39);
    h ^ (h >> 15)
}

fn disc(img: &mut RgbImage, (cx, cy): Pt, r: f32, c: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let x0 = (cx - r).floor().max(0.0) as u32;
    let y0 = (cy - r).floor().max(0.0) as u32;
    let x1 = ((cx + r).ceil() as u32).min(w - 1);
    let y1 = ((cy + r).ceil() as u32).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f32 - cx, y as f32 - cy);
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x, y, c);
            }
        }
    }
}

fn line(img: &mut RgbImage, a: Pt, b: Pt, width: f32, c: Rgb<u8>) {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let n = (len * 2.0).ceil().max(1.0) as u32;
    for i in 0..=n {
        let t = i as f32 / n as f32;
        disc(img, (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t), width / 2.0, c);
    }
}

fn polyline(img: &mut RgbImage, pts: &[Pt], width: f32, c: Rgb<u8>) {
    for w in pts.windows(2) {
        line(img, w[0], w[1], width, c);
    }
}

fn arc(center: Pt, rx: f32, ry: f32, from: f32, to: f32, n: usize) -> Vec<Pt> {
    (0..=n)
        .map(|i| {
            let t = from + (to - from) * i as f32 / n as f32;
            (center.0 + rx * t.cos(), center.1 + ry * t.sin())
        })
        .collect()
}

fn head_in_pot() -> RgbImage {
    let ink = Rgb([20, 20, 20]);
    let mut img = RgbImage::from_pixel(600, 600, Rgb([255, 255, 255]));
    for i in 0..14u32 {
        let x = 20.0 + (noise(i, 0, 1) % 120) as f32;
        let y = 20.0 + (noise(i, 1, 1) % 560) as f32;
        let dx = 30.0 + (noise(i, 2, 1) % 40) as f32;
        line(&mut img, (x, y), (x + dx, y - dx * 0.6), 1.5, Rgb([170, 170, 170]));
        line(&mut img, (600.0 - x, y), (600.0 - x - dx, y - dx * 0.5), 1.5, Rgb([170, 170, 170]));
    }
    let head: Vec<Pt> = arc((300.0, 250.0), 95.0, 120.0, 0.0, TAU, 160).into_iter().filter(|p| p.1 < 362.0).collect();
    for w in head.windows(2) {
        if (w[0].0 - w[1].0).abs() < 20.0 {
            line(&mut img, w[0], w[1], 3.0, ink);
        }
    }
    for ex in [262.0, 338.0] {
        polyline(&mut img, &arc((ex, 238.0), 18.0, 8.0, PI, TAU, 20), 2.5, ink);
        disc(&mut img, (ex, 238.0), 5.0, ink);
        polyline(&mut img, &arc((ex, 222.0), 20.0, 6.0, PI * 1.1, PI * 1.9, 12), 2.0, ink);
    }
    polyline(&mut img, &[(300.0, 245.0), (290.0, 290.0), (306.0, 293.0)], 2.5, ink);
    polyline(&mut img, &arc((300.0, 300.0), 26.0, 18.0, 0.3, PI - 0.3, 20), 2.5, ink);
    for (i, c) in [(240.0, 148.0), (300.0, 122.0), (360.0, 148.0)].into_iter().enumerate() {
        for r in [10.0, 20.0, 30.0] {
            polyline(&mut img, &arc(c, r, r * 0.8, 0.0, TAU, 40), 2.0, ink);
        }
        let stem = if i == 1 { (300.0, 175.0) } else { (c.0 + (300.0 - c.0) * 0.3, 180.0) };
        line(&mut img, (c.0, c.1 + 24.0), stem, 2.0, ink);
    }
    for (a, b) in [((205.0, 180.0), (170.0, 160.0)), ((395.0, 180.0), (432.0, 158.0))] {
        polyline(&mut img, &[a, ((a.0 + b.0) / 2.0, b.1 - 12.0), b, ((a.0 + b.0) / 2.0, a.1 + 4.0), a], 2.0, ink);
    }
    polyline(&mut img, &[(180.0, 362.0), (420.0, 362.0), (420.0, 396.0), (180.0, 396.0), (180.0, 362.0)], 3.0, ink);
    polyline(&mut img, &[(195.0, 396.0), (232.0, 562.0), (368.0, 562.0), (405.0, 396.0)], 3.0, ink);
    for k in 0..5 {
        let y = 420.0 + 28.0 * k as f32;
        line(&mut img, (215.0 + k as f32 * 4.0, y), (250.0 + k as f32 * 4.0, y + 6.0), 1.5, ink);
    }
    img
}

fn spiral() -> RgbImage {
    let (w, h) = (640u32, 640u32);
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        let n = (noise(x / 3, y / 3, 7) % 24) as u8;
        let t = (y * 40 / h) as u8;
        Rgb([200 - t / 2 + n / 2, 214 - t / 3 + n / 2, 235 - n / 3])
    });
    let center = (320.0, 340.0);
    let pts: Vec<Pt> = (0..1400)
        .map(|i| {
            let th = i as f32 * 0.015;
            let r = 6.0 + 13.5 * th;
            (center.0 + r * th.cos(), center.1 + r * th.sin())
        })
        .collect();
    for (i, w) in pts.windows(2).enumerate() {
        let c = if (i / 120) % 2 == 0 { Rgb([28, 52, 160]) } else { Rgb([12, 12, 20]) };
        line(&mut img, w[0], w[1], 11.0, c);
    }
    let zig: Vec<Pt> = (0..=6)
        .map(|k| {
            let t = k as f32 / 6.0;
            let x = center.0 + if k % 2 == 0 { -34.0 } else { 34.0 } * (1.0 - t);
            (x, 12.0 + (center.1 - 12.0) * t)
        })
        .collect();
    polyline(&mut img, &zig, 8.0, Rgb([206, 28, 30]));
    img
}

fn foil_figure() -> RgbImage {
    let (w, h) = (800u32, 600u32);
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        let dx = x as f32 / w as f32 - 0.5;
        let dy = y as f32 / h as f32 - 0.45;
        let vignette = 1.0 - 0.9 * (dx * dx + dy * dy);
        let table = if y > 430 { 0.8 } else { 1.0 };
        let grain = (noise(x, y, 3) % 9) as f32 - 4.0;
        let base = (182.0 * vignette * table + grain).clamp(0.0, 255.0);
        Rgb([base as u8, (base * 0.96) as u8, (base * 0.9) as u8])
    });
    for y in 470..530u32 {
        for x in 280..560u32 {
            let (dx, dy) = ((x as f32 - 420.0) / 140.0, (y as f32 - 500.0) / 30.0);
            if dx * dx + dy * dy <= 1.0 {
                let p = img.get_pixel_mut(x, y);
                *p = Rgb([p[0] / 2 + 20, p[1] / 2 + 18, p[2] / 2 + 16]);
            }
        }
    }
    let limbs: [(Pt, Pt, f32); 9] = [
        ((400.0, 250.0), (410.0, 360.0), 46.0),
        ((392.0, 262.0), (345.0, 190.0), 16.0),
        ((345.0, 190.0), (330.0, 110.0), 14.0),
        ((410.0, 262.0), (458.0, 192.0), 16.0),
        ((458.0, 192.0), (478.0, 112.0), 14.0),
        ((405.0, 360.0), (360.0, 420.0), 22.0),
        ((360.0, 420.0), (470.0, 470.0), 20.0),
        ((420.0, 360.0), (450.0, 425.0), 22.0),
        ((450.0, 425.0), (530.0, 478.0), 20.0),
    ];
    let mut foil = RgbImage::new(w, h);
    for (a, b, width) in limbs {
        line(&mut foil, a, b, width, Rgb([1, 0, 0]));
    }
    disc(&mut foil, (398.0, 208.0), 27.0, Rgb([1, 0, 0]));
    for (x, y, p) in foil.enumerate_pixels() {
        if p[0] == 1 {
            let facet = (noise(x / 5, y / 5, 11) % 90) as i32;
            let sheen = if noise(x / 3, y / 4, 13).is_multiple_of(17) { 50 } else { 0 };
            let v = (140 + facet + sheen - (x as i32 - 400).abs() / 6).clamp(0, 255) as u8;
            img.put_pixel(x, y, Rgb([v, v, v.saturating_add(6)]));
        }
    }
    img
}

fn figure_mask() -> GrayImage {
    GrayImage::from_fn(512, 512, |x, y| {
        let (dx, dy) = ((x as f32 - 258.0) / 105.0, (y as f32 - 250.0) / 175.0);
        Luma([if dx * dx + dy * dy <= 1.0 { 255 } else { 0 }])
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    std::fs::create_dir_all(root.join("drafts"))?;
    std::fs::create_dir_all(root.join("masks"))?;
    head_in_pot().save(root.join("drafts/1a-head-in-pot.png"))?;
    spiral().save(root.join("drafts/2a-spiral.png"))?;
    let mut jpeg = Vec::new();
    JpegEncoder::new_with_quality(&mut jpeg, 90).encode_image(&foil_figure())?;
    std::fs::write(root.join("drafts/3a-foil-figure.jpg"), jpeg)?;
    figure_mask().save(root.join("masks/3c-figure.png"))?;
    println!("wrote drafts and masks under {}", root.display());
    Ok(())
}
