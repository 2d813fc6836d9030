use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decodes any supported image into a `[3, H, W]` tensor in `[0, 1]`.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })?
        .to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px.0[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("sized above")
}

pub fn tensor_to_rgb(t: &Tensor<f32>) -> Result<RgbImage> {
    let (c, h, w) = t.dims3()?;
    if c != 3 {
        return Err(Error::shape("tensor_to_rgb", "3 channels", c));
    }
    let d = t.data();
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let at = |ch: usize| {
            let v = d[(ch * h + y as usize) * w + x as usize];
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        Rgb([at(0), at(1), at(2)])
    }))
}

pub fn save_rgb(t: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    tensor_to_rgb(t)?.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })
}

/// Writes a single-channel map as 16-bit grayscale, scaled so `max` maps to 65535.
pub fn save_gray16(values: &[f64], h: usize, w: usize, max: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if values.len() != h * w {
        return Err(Error::shape("save_gray16", h * w, values.len()));
    }
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let v = values[y as usize * w + x as usize];
        Luma([(v * scale).clamp(0.0, 65535.0).round() as u16])
    });
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })
}

/// Rounds through 8-bit storage, the precision images have once written to disk.
pub fn quantize_8bit(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let t = quantize_8bit(&Tensor::from_vec(&[3, 2, 3], (0..18).map(|i| i as f32 / 17.0).collect()).unwrap());
        save_rgb(&t, &p).unwrap();
        assert_eq!(load_rgb(&p).unwrap(), t);
    }

    #[test]
    fn unreadable_path_is_io_error() {
        assert!(load_rgb("/nonexistent/file.png").is_err());
    }
}
