//! PNG image/mask I/O and the portable little-endian flow tensor format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BinaryMask, FlowField, Image};
use crate::error::{BlurefError, Result};

const FLOW_MAGIC: &[u8; 4] = b"BFLW";
const FLOW_VERSION: u32 = 1;

/// Write an image as 8-bit PNG (gray or RGB), quantizing by `round(v * 255)`.
pub fn write_image_png(img: &Image, path: &Path) -> Result<()> {
    let h = img.height() as u32;
    let w = img.width() as u32;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    match img.channels() {
        1 => {
            let buf = image::GrayImage::from_raw(w, h, bytes)
                .ok_or_else(|| BlurefError::InvalidInput("gray buffer size mismatch".into()))?;
            buf.save_with_format(path, image::ImageFormat::Png)?;
        }
        3 => {
            let buf = image::RgbImage::from_raw(w, h, bytes)
                .ok_or_else(|| BlurefError::InvalidInput("rgb buffer size mismatch".into()))?;
            buf.save_with_format(path, image::ImageFormat::Png)?;
        }
        c => return Err(BlurefError::InvalidInput(format!("unsupported channel count {c}"))),
    }
    Ok(())
}

/// Read an 8-bit PNG into `[0,1]` values; gray stays single-channel,
/// everything else is converted to RGB.
pub fn read_image_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path)?;
    match dynimg {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            let data = g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
            Image::new(h as usize, w as usize, 1, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
            Image::new(h as usize, w as usize, 3, data)
        }
    }
}

/// Write a binary mask as a gray PNG holding only 0 and 255.
pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = mask.values().iter().map(|&v| v * 255).collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .ok_or_else(|| BlurefError::InvalidInput("mask buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let g = image::open(path)?.to_luma8();
    let (w, h) = g.dimensions();
    let values: Vec<u8> = g.into_raw().into_iter().map(|v| u8::from(v >= 128)).collect();
    BinaryMask::new(h as usize, w as usize, values)
}

/// Flow file: 16-byte header (magic "BFLW", u32 version, u32 H, u32 W, all
/// little-endian) followed by the f32 dx plane then the dy plane.
pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FLOW_MAGIC)?;
    w.write_all(&FLOW_VERSION.to_le_bytes())?;
    w.write_all(&(flow.height() as u32).to_le_bytes())?;
    w.write_all(&(flow.width() as u32).to_le_bytes())?;
    for plane in [flow.dx(), flow.dy()] {
        for &v in plane {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != FLOW_MAGIC {
        return Err(BlurefError::InvalidInput(format!("{}: bad flow magic", path.display())));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FLOW_VERSION {
        return Err(BlurefError::InvalidInput(format!("unsupported flow version {version}")));
    }
    let h = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut raw = vec![0u8; h * w * 2 * 4];
    r.read_exact(&mut raw)?;
    let mut values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    let dx: Vec<f32> = values.by_ref().take(h * w).collect();
    let dy: Vec<f32> = values.collect();
    FlowField::new(h, w, dx, dy)
}
