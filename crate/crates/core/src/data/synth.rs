//! Synthetic plate-like images: rendered 5x7 bitmap text on colored rectangles.
//!
//! Used for fixtures, smoke runs and the scaled-proxy experiments; real
//! datasets come in through manifests.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image_io::{quantize_8bit, save_rgb};
use super::manifest::{write_manifest, ImageRecord, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const GLYPHS: &[(char, [u8; 7])] = &[
    ('0', [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E]),
    ('1', [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E]),
    ('2', [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F]),
    ('3', [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E]),
    ('4', [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02]),
    ('5', [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E]),
    ('6', [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E]),
    ('7', [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08]),
    ('8', [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E]),
    ('9', [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C]),
    ('A', [0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11]),
    ('B', [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E]),
    ('C', [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E]),
    ('D', [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C]),
    ('E', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F]),
    ('F', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10]),
    ('G', [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F]),
    ('H', [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11]),
    ('J', [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C]),
    ('K', [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11]),
    ('L', [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F]),
    ('M', [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11]),
    ('N', [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11]),
    ('P', [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10]),
    ('Q', [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D]),
    ('R', [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11]),
    ('S', [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E]),
    ('T', [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04]),
    ('U', [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('V', [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04]),
    ('W', [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A]),
    ('X', [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11]),
    ('Y', [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04]),
    ('Z', [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F]),
];

/// `(background, foreground)` colour schemes.
const PALETTE: &[([f32; 3], [f32; 3])] = &[
    ([0.05, 0.25, 0.75], [0.95, 0.95, 0.95]),
    ([0.95, 0.78, 0.10], [0.05, 0.05, 0.05]),
    ([0.45, 0.85, 0.45], [0.05, 0.05, 0.05]),
    ([0.92, 0.92, 0.92], [0.05, 0.05, 0.05]),
];

fn glyph(c: char) -> Option<&'static [u8; 7]> {
    GLYPHS.iter().find(|(g, _)| *g == c).map(|(_, rows)| rows)
}

pub fn supported_chars() -> impl Iterator<Item = char> {
    GLYPHS.iter().map(|(c, _)| *c)
}

/// Seven characters: two letters then five letters or digits.
pub fn random_plate_text<R: Rng + ?Sized>(rng: &mut R) -> String {
    let letters: Vec<char> = supported_chars().filter(|c| c.is_ascii_alphabetic()).collect();
    let all: Vec<char> = supported_chars().collect();
    let mut s = String::new();
    for i in 0..7 {
        let pool = if i < 2 { &letters } else { &all };
        s.push(pool[rng.random_range(0..pool.len())]);
    }
    s
}

/// Text coverage in `[0, 1]` at a sub-pixel position.
fn text_mask(text: &[&[u8; 7]], h: f32, w: f32, y: f32, x: f32) -> bool {
    let n = text.len() as f32;
    let ch = 0.62 * h;
    let cw = ch * 5.0 / 7.0;
    let gap = 0.3 * cw;
    let total = n * cw + (n - 1.0) * gap;
    let x0 = (w - total) / 2.0;
    let y0 = (h - ch) / 2.0;
    if y < y0 || y >= y0 + ch || x < x0 || x >= x0 + total {
        return false;
    }
    let rel = x - x0;
    let idx = (rel / (cw + gap)) as usize;
    let within = rel - idx as f32 * (cw + gap);
    if idx >= text.len() || within >= cw {
        return false;
    }
    let col = ((within / cw) * 5.0) as usize;
    let row = (((y - y0) / ch) * 7.0) as usize;
    (text[idx][row.min(6)] >> (4 - col.min(4))) & 1 == 1
}

/// Renders `text` on a plate of `height x width` pixels.
pub fn render_plate<R: Rng + ?Sized>(text: &str, height: usize, width: usize, rng: &mut R) -> Result<Tensor<f32>> {
    let glyphs: Vec<&[u8; 7]> = text
        .chars()
        .map(|c| glyph(c).ok_or_else(|| Error::InvalidArgument(format!("no glyph for {c:?}"))))
        .collect::<Result<_>>()?;
    let (mut bg, mut fg) = PALETTE[rng.random_range(0..PALETTE.len())];
    for v in bg.iter_mut().chain(fg.iter_mut()) {
        *v = (*v + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
    }
    let light_left = rng.random_range(0.85f32..1.1);
    let light_right = rng.random_range(0.85f32..1.1);
    let noise = Normal::new(0.0f32, 0.01).expect("valid sigma");
    let (hf, wf) = (height as f32, width as f32);
    let border = (hf * 0.05).max(1.0);
    const SS: usize = 4;
    let mut data = vec![0.0f32; 3 * height * width];
    for y in 0..height {
        for x in 0..width {
            let mut cover = 0.0f32;
            for sy in 0..SS {
                for sx in 0..SS {
                    let py = y as f32 + (sy as f32 + 0.5) / SS as f32;
                    let px = x as f32 + (sx as f32 + 0.5) / SS as f32;
                    let on_border = {
                        let d = py.min(hf - py).min(px).min(wf - px);
                        d >= border && d < 2.0 * border
                    };
                    if on_border || text_mask(&glyphs, hf, wf, py, px) {
                        cover += 1.0;
                    }
                }
            }
            cover /= (SS * SS) as f32;
            let t = x as f32 / (wf - 1.0).max(1.0);
            let light = light_left * (1.0 - t) + light_right * t;
            for c in 0..3 {
                let v = (bg[c] * (1.0 - cover) + fg[c] * cover) * light + noise.sample(rng);
                data[(c * height + y) * width + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_vec(&[3, height, width], data)
}

/// `n` quantized plates with their texts, deterministic in `seed`.
pub fn synthetic_plates(n: usize, height: usize, width: usize, seed: u64) -> Result<Vec<(Tensor<f32>, String)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let text = random_plate_text(&mut rng);
            let img = render_plate(&text, height, width, &mut rng)?;
            Ok((quantize_8bit(&img), text))
        })
        .collect()
}

/// Writes plates as PNGs plus a `manifest.jsonl` under `dir`; returns the manifest path.
pub fn write_synthetic_dataset(
    dir: impl AsRef<Path>,
    counts: &[(Split, usize)],
    height: usize,
    width: usize,
    seed: u64,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for (k, &(split, n)) in counts.iter().enumerate() {
        let plates = synthetic_plates(n, height, width, seed.wrapping_add(k as u64 * 0x9E37_79B9))?;
        for (i, (img, text)) in plates.into_iter().enumerate() {
            let name = format!("{split}_{i:05}.png");
            save_rgb(&img, dir.join(&name))?;
            records.push(ImageRecord {
                path: PathBuf::from(name),
                plate_text: Some(text),
                split,
                source_tag: "synthetic".into(),
            });
        }
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::load_manifest;

    #[test]
    fn plates_are_deterministic_and_in_range() {
        let a = synthetic_plates(3, 32, 96, 5).unwrap();
        let b = synthetic_plates(3, 32, 96, 5).unwrap();
        for ((ia, ta), (ib, tb)) in a.iter().zip(&b) {
            assert_eq!(ta, tb);
            assert_eq!(ia, ib);
            assert_eq!(ta.chars().count(), 7);
            assert!(ia.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn text_is_visible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = render_plate("AB12345", 64, 192, &mut rng).unwrap();
        // the middle row crosses glyph strokes, so its values are far from uniform
        let row: Vec<f32> = (0..192).map(|x| img.data()[32 * 192 + x]).collect();
        let (lo, hi) = row.iter().fold((1f32, 0f32), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi - lo > 0.4);
    }

    #[test]
    fn unknown_character_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(render_plate("a?", 16, 32, &mut rng).is_err());
    }

    #[test]
    fn dataset_writer_produces_loadable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_synthetic_dataset(dir.path(), &[(Split::Train, 2), (Split::Test, 1)], 16, 48, 0).unwrap();
        let man = load_manifest(m).unwrap();
        assert_eq!(man.records.len(), 3);
        assert_eq!(man.split_counts[&Split::Train], 2);
        assert!(man.records.iter().all(|r| r.path.exists() && r.plate_text.is_some()));
    }
}
