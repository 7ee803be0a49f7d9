//! Binary PGM (P5) and PPM (P6) reading and writing.
//!
//! Samples wider than 8 bits (maxval > 255) are stored big-endian. Pixel
//! spacing has no slot in the format; it travels in a header comment
//! `# pixel_spacing_mm <value>` and defaults to 0.05 mm when absent.

use std::fs;
use std::path::Path;

use super::image::{BinaryMask, GrayImage, RgbImage, DEFAULT_PIXEL_SPACING_MM};
use crate::error::{Error, Result};

const SPACING_KEY: &str = "pixel_spacing_mm";

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!(
        "P5\n# {SPACING_KEY} {}\n{} {}\n{}\n",
        image.pixel_spacing_mm,
        image.width(),
        image.height(),
        image.maxval()
    )
    .into_bytes();
    if image.maxval() > 255 {
        for &p in image.pixels() {
            out.extend_from_slice(&p.to_be_bytes());
        }
    } else {
        out.extend(image.pixels().iter().map(|&p| p as u8));
    }
    out
}

pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}

/// Masks are stored as 8-bit PGM with 0 / 255 samples.
pub fn write_mask_pgm(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let pixels = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_pgm(&GrayImage::new(mask.width(), mask.height(), 255, pixels)?, path)
}

pub fn write_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    for px in image.pixels() {
        out.extend_from_slice(px);
    }
    fs::write(path, out)?;
    Ok(())
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u16,
    spacing: Option<f64>,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let bad = |m: &str| Error::ImageFormat(m.to_string());
    if bytes.len() < 2 {
        return Err(bad("file too short"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    let mut spacing = None;
    while fields.len() < 3 {
        match bytes.get(pos) {
            None => return Err(bad("header ended early")),
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map_or(bytes.len(), |e| pos + e);
                let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                let mut parts = comment.split_whitespace();
                if parts.next() == Some(SPACING_KEY) {
                    spacing = parts.next().and_then(|v| v.parse::<f64>().ok()).filter(|v| *v > 0.0);
                }
                pos = end;
            }
            Some(b) if b.is_ascii_digit() => {
                let start = pos;
                while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                    pos += 1;
                }
                let text = std::str::from_utf8(&bytes[start..pos]).expect("digits");
                fields.push(text.parse::<usize>().map_err(|_| bad("header number out of range"))?);
            }
            Some(_) => return Err(bad("unexpected byte in header")),
        }
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(bad("missing whitespace after maxval"));
    }
    let maxval = fields[2];
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must lie in 1..=65535"));
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: maxval as u16,
        spacing,
        data_start: pos + 1,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P5" {
        return Err(Error::ImageFormat("not a binary PGM (P5)".into()));
    }
    let n = h.width * h.height;
    let wide = h.maxval > 255;
    let need = if wide { 2 * n } else { n };
    let raster = bytes
        .get(h.data_start..h.data_start + need)
        .ok_or_else(|| Error::ImageFormat(format!("raster truncated: need {need} bytes")))?;
    let pixels = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    Ok(
        GrayImage::new(h.width, h.height, h.maxval, pixels)?
            .with_spacing(h.spacing.unwrap_or(DEFAULT_PIXEL_SPACING_MM)),
    )
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

/// Any nonzero sample is a mask pixel.
pub fn read_mask_pgm(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = read_pgm(path)?;
    BinaryMask::from_bits(
        img.width(),
        img.height(),
        img.pixels().iter().map(|&p| p != 0).collect(),
    )
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let bytes = fs::read(path)?;
    let h = parse_header(&bytes)?;
    if &h.magic != b"P6" || h.maxval != 255 {
        return Err(Error::ImageFormat("only 8-bit binary PPM (P6) is supported".into()));
    }
    let n = h.width * h.height;
    let raster = bytes
        .get(h.data_start..h.data_start + 3 * n)
        .ok_or_else(|| Error::ImageFormat("raster truncated".into()))?;
    RgbImage::from_pixels(
        h.width,
        h.height,
        raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sixteen_bit_samples_are_big_endian() {
        let img = GrayImage::new(2, 1, 1000, vec![0x0102, 999]).unwrap();
        let bytes = encode_pgm(&img);
        let tail = &bytes[bytes.len() - 4..];
        assert_eq!(tail, &[0x01, 0x02, 0x03, 0xE7]);
    }

    #[test]
    fn parses_foreign_header_with_comments() {
        let mut bytes = b"P5 # made elsewhere\n3 # w\n 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.get(2, 1), 6);
        assert_eq!(img.pixel_spacing_mm, DEFAULT_PIXEL_SPACING_MM);
    }

    #[test]
    fn rejects_truncated_and_wrong_magic() {
        let img = GrayImage::new(4, 4, 255, vec![7; 16]).unwrap();
        let bytes = encode_pgm(&img);
        assert!(decode_pgm(&bytes[..bytes.len() - 1]).is_err());
        let mut p6 = bytes.clone();
        p6[1] = b'6';
        assert!(decode_pgm(&p6).is_err());
    }

    #[test]
    fn mask_and_rgb_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut mask = BinaryMask::new(5, 3);
        mask.set(4, 2, true);
        mask.set(0, 1, true);
        let p = dir.path().join("m.pgm");
        write_mask_pgm(&mask, &p).unwrap();
        assert_eq!(read_mask_pgm(&p).unwrap(), mask);

        let mut rgb = RgbImage::new(2, 2);
        rgb.set(1, 0, [255, 10, 3]);
        let p = dir.path().join("o.ppm");
        write_ppm(&rgb, &p).unwrap();
        assert_eq!(read_ppm(&p).unwrap(), rgb);
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..12, h in 1usize..12, maxval in prop_oneof![Just(255u16), Just(4095u16), Just(65535u16)], seed in any::<u64>(), spacing in 0.01f64..1.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let px = (0..w * h).map(|_| rng.random_range(0..=maxval)).collect();
            let img = GrayImage::new(w, h, maxval, px).unwrap().with_spacing(spacing);
            prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
        }
    }
}
