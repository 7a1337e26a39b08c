//! Raster input and output.
//!
//! Label maps are 8-bit indexed PNGs whose pixel index is the label (index
//! 0 is unused and black). The palette is fixed, so the same label always
//! gets the same colour.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use featseg::grid::ImageGrid;
use featseg::metrics::SegMask;
use image::{DynamicImage, Rgb, RgbImage};

use crate::error::{CliError, Result};

/// First palette entries; later labels use [`palette_color`]'s formula.
const BASE_PALETTE: [[u8; 3]; 13] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

/// Colour of palette index `i`.
pub fn palette_color(i: u8) -> [u8; 3] {
    match BASE_PALETTE.get(i as usize) {
        Some(c) => *c,
        None => {
            let i = i as u32;
            [(i * 97 % 256) as u8, ((i * 57 + 80) % 256) as u8, ((i * 191 + 160) % 256) as u8]
        }
    }
}

/// Reads a grayscale or colour raster into `[0, 1]` intensities; colour
/// images keep three channels.
pub fn read_image(path: &Path) -> Result<ImageGrid> {
    let img = image::open(path).map_err(|e| CliError::image(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grid = if img.color().has_color() {
        let rgb = img.to_rgb32f();
        ImageGrid::new(w, h, 3, rgb.into_raw().into_iter().map(f64::from).collect())
    } else {
        let gray = img.to_luma32f();
        ImageGrid::new(w, h, 1, gray.into_raw().into_iter().map(f64::from).collect())
    };
    grid.map_err(|e| CliError::image(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn png_error(path: &Path, e: png::EncodingError) -> CliError {
    CliError::image(path, e)
}

/// Writes `mask` as an indexed PNG with the fixed palette.
pub fn write_label_map(path: &Path, mask: &SegMask) -> Result<()> {
    if mask.k() > 255 {
        return Err(CliError::Failed(format!("{} labels do not fit an 8-bit label map", mask.k())));
    }
    let mut enc = png::Encoder::new(create(path)?, mask.width() as u32, mask.height() as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette((0..=255u8).flat_map(palette_color).collect::<Vec<u8>>());
    let mut writer = enc.write_header().map_err(|e| png_error(path, e))?;
    let data: Vec<u8> = mask.labels().iter().map(|&l| l as u8).collect();
    writer.write_image_data(&data).map_err(|e| png_error(path, e))?;
    writer.finish().map_err(|e| png_error(path, e))
}

/// Reads a label map: raw palette indices of an indexed PNG, or the values
/// of an 8/16-bit grayscale PNG.
pub fn read_label_map(path: &Path) -> Result<SegMask> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| CliError::image(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| CliError::image(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let labels: Vec<u32> = match (info.color_type, info.bit_depth) {
        (png::ColorType::Indexed | png::ColorType::Grayscale, png::BitDepth::Eight) => {
            (0..h).flat_map(|y| buf[y * info.line_size..y * info.line_size + w].iter().map(|&v| v as u32)).collect()
        }
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => (0..h)
            .flat_map(|y| {
                let row = &buf[y * info.line_size..y * info.line_size + 2 * w];
                row.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
            })
            .collect(),
        (c, d) => {
            return Err(CliError::image(
                path,
                format!("label maps must be 8-bit indexed or 8/16-bit grayscale, found {c:?} {d:?}"),
            ))
        }
    };
    SegMask::new(w, h, labels).map_err(|e| CliError::image(path, e))
}

fn to_unit_range(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }).collect()
}

/// Writes the channel mean of `image` as 16-bit grayscale, stretched so
/// the minimum maps to 0 and the maximum to 65535.
pub fn write_gray16(path: &Path, image: &ImageGrid) -> Result<()> {
    let gray = image.mean_channel();
    let data: Vec<u16> = to_unit_range(gray.values()).iter().map(|v| (v * 65535.0).round() as u16).collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(gray.width() as u32, gray.height() as u32, data)
        .expect("buffer matches extent");
    DynamicImage::ImageLuma16(buf).save(path).map_err(|e| CliError::image(path, e))
}

/// Stretched grayscale rendering of `image` with pixels on region
/// boundaries painted red.
pub fn write_overlay(path: &Path, image: &ImageGrid, mask: &SegMask) -> Result<()> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(CliError::Failed(format!(
            "overlay: image {}x{} vs mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    let gray = to_unit_range(image.mean_channel().values());
    let w = image.width();
    let mut out = RgbImage::new(w as u32, image.height() as u32);
    for (i, v) in gray.iter().enumerate() {
        let g = (v * 255.0).round() as u8;
        out.put_pixel((i % w) as u32, (i / w) as u32, Rgb([g, g, g]));
    }
    for (x, y) in mask.boundary_pixels() {
        out.put_pixel(x as u32, y as u32, Rgb([255, 0, 0]));
    }
    out.save(path).map_err(|e| CliError::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = SegMask::new(3, 2, vec![1, 2, 3, 3, 2, 200]).unwrap();
        write_label_map(&path, &mask).unwrap();
        assert_eq!(read_label_map(&path).unwrap(), mask);
    }

    #[test]
    fn gray16_round_trip_is_stretched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img = ImageGrid::from_fn(4, 3, |x, y| x as f64 - 2.0 * y as f64).unwrap();
        write_gray16(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(back.min_value(), 0.0);
        assert_eq!(back.max_value(), 1.0);
        // (3 - 0) - (-4) = 7 steps of 1/7
        assert!((back.get(1, 0) - 5.0 / 7.0).abs() < 1e-4);
    }

    #[test]
    fn overlay_marks_boundaries_red() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.png");
        let img = ImageGrid::zeros(4, 1);
        let mask = SegMask::new(4, 1, vec![1, 1, 2, 2]).unwrap();
        write_overlay(&path, &img, &mask).unwrap();
        let rgb = image::open(&path).unwrap().to_rgb8();
        assert_eq!(rgb.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(rgb.get_pixel(1, 0).0, [255, 0, 0]);
        assert_eq!(rgb.get_pixel(2, 0).0, [255, 0, 0]);
    }

    #[test]
    fn palette_is_fixed() {
        assert_eq!(palette_color(0), [0, 0, 0]);
        assert_eq!(palette_color(1), [230, 25, 75]);
        assert_ne!(palette_color(20), palette_color(21));
    }
}
