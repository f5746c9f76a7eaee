//! 8-bit grayscale heatmaps as binary PGM.

use serde::{Deserialize, Serialize};

/// Normalization bounds stored next to each image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    /// `min == max`; the image is uniform mid-gray.
    pub constant: bool,
}

/// Min-max normalize a row-major plane into a `P5` image, row 0 at the top.
pub fn heatmap(plane: &[f64], height: usize, width: usize) -> (Vec<u8>, HeatmapMeta) {
    let min = plane.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let constant = min == max;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(plane.iter().map(|&v| {
        if constant {
            128
        } else {
            (255.0 * (v - min) / (max - min)).round().clamp(0.0, 255.0) as u8
        }
    }));
    (
        out,
        HeatmapMeta {
            width,
            height,
            min,
            max,
            constant,
        },
    )
}

/// Split a `P5` image into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, &[u8])> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let pixels = bytes.get(pos + 1..)?;
    (pixels.len() == w * h).then_some((w, h, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_map_to_black_and_white() {
        let plane = [0.5, -2.0, 3.0, 1.0, 0.0, 2.5];
        let (img, meta) = heatmap(&plane, 2, 3);
        let (w, h, px) = parse_pgm(&img).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!((px[1], px[2]), (0, 255));
        // (0.5 + 2) / 5 · 255 = 127.5, rounded half away from zero.
        assert_eq!(px[0], 128);
        assert_eq!((meta.min, meta.max, meta.constant), (-2.0, 3.0, false));
    }

    #[test]
    fn constant_plane_is_uniform_gray() {
        let (img, meta) = heatmap(&[4.2; 12], 3, 4);
        let (w, h, px) = parse_pgm(&img).unwrap();
        assert_eq!((w, h), (4, 3));
        assert!(px.iter().all(|&p| p == 128));
        assert!(meta.constant);
        assert_eq!(meta.min, meta.max);
    }
}
