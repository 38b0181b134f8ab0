//! PNG overlays: grayscale entropy heatmaps and palette-coloured
//! segmentations.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};
use segtriage_core::metrics::{argmax_segmentation, mean_probability};
use segtriage_core::uncertainty::entropy_map;
use segtriage_core::Bundle;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayKind {
    Entropy,
    Segmentation,
}

impl OverlayKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "entropy" => Some(OverlayKind::Entropy),
            "segmentation" => Some(OverlayKind::Segmentation),
            _ => None,
        }
    }
}

/// Class colours. Classes beyond the listed colours fall back to the
/// built-in sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Palette(pub Vec<[u8; 3]>);

const BUILTIN: [[u8; 3]; 8] = [
    [0, 0, 0],
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 255, 255],
];

impl Default for Palette {
    /// Black background, then red, green, blue and further primaries.
    fn default() -> Self {
        Palette(BUILTIN.to_vec())
    }
}

impl Palette {
    /// Reads a JSON array of `[r, g, b]` triples.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let palette: Palette = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if palette.0.is_empty() {
            return Err(format!("{}: palette is empty", path.display()));
        }
        Ok(palette)
    }

    pub fn color(&self, class: usize) -> [u8; 3] {
        match self.0.get(class) {
            Some(&c) => c,
            None => {
                // Each further cycle through the builtin list is darkened.
                let base = BUILTIN[class % BUILTIN.len()];
                let tint = (class / BUILTIN.len()) as u8;
                base.map(|v| v.wrapping_sub(tint.wrapping_mul(37)))
            }
        }
    }
}

fn encode(write: impl FnOnce(&mut Cursor<&mut Vec<u8>>) -> image::ImageResult<()>) -> Vec<u8> {
    let mut out = Vec::new();
    write(&mut Cursor::new(&mut out)).expect("png encoding into memory");
    out
}

pub fn render(bundle: &Bundle, kind: OverlayKind, palette: &Palette) -> Vec<u8> {
    let mean = mean_probability(&bundle.probabilities);
    let (w, h) = (bundle.width() as u32, bundle.height() as u32);
    match kind {
        OverlayKind::Entropy => {
            let gray = entropy_map(&mean).to_grayscale();
            let img = GrayImage::from_raw(w, h, gray).expect("raster size");
            encode(|c| img.write_to(c, ImageFormat::Png))
        }
        OverlayKind::Segmentation => {
            let seg = argmax_segmentation(&mean);
            let rgb: Vec<u8> = seg.values.iter().flat_map(|&c| palette.color(c as usize)).collect();
            let img = RgbImage::from_raw(w, h, rgb).expect("raster size");
            encode(|c| img.write_to(c, ImageFormat::Png))
        }
    }
}
