//! Grid rendering as binary PPM (P6) or SVG.
//!
//! Each grid cell becomes a `scale x scale` block colored by load band.
//! Cells at or over their threshold are drawn white; from `scale >= 3` on
//! they also carry a black diagonal cross as overflow marker.

use std::fmt::Write as _;

use thiserror::Error;

use crate::network::Network;
use crate::sandpile::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const GREEN: Rgb = Rgb(0, 128, 0);
    pub const YELLOW: Rgb = Rgb(255, 255, 0);
    pub const MAGENTA: Rgb = Rgb(255, 0, 255);
    pub const RED: Rgb = Rgb(255, 0, 0);
    pub const BLACK: Rgb = Rgb(0, 0, 0);
    pub const WHITE: Rgb = Rgb(255, 255, 255);

    fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Band {
    /// Lowest height in the band; the band runs up to the next band's start.
    pub from: u64,
    pub color: Rgb,
    pub label: &'static str,
}

/// Height bands below the threshold plus the overflow color.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorMap {
    bands: Vec<Band>,
    overflow: Rgb,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("rendering needs a grid network")]
    NotAGrid,
    #[error("configuration has {got} entries, grid has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("color bands must start at 0 and strictly increase")]
    BadBands,
    #[error("scale must be at least 1")]
    ZeroScale,
}

/// Band of a height, as seen by the color map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shade<'a> {
    Band(&'a Band),
    Overflow,
}

impl ColorMap {
    pub fn new(bands: Vec<Band>, overflow: Rgb) -> Result<Self, RenderError> {
        let starts_at_zero = bands.first().is_some_and(|b| b.from == 0);
        let increasing = bands.windows(2).all(|w| w[0].from < w[1].from);
        if !starts_at_zero || !increasing {
            return Err(RenderError::BadBands);
        }
        Ok(ColorMap { bands, overflow })
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn shade(&self, height: u64, threshold: u64) -> Shade<'_> {
        if height >= threshold {
            return Shade::Overflow;
        }
        let k = self.bands.partition_point(|b| b.from <= height);
        Shade::Band(&self.bands[k - 1])
    }

    pub fn color(&self, height: u64, threshold: u64) -> Rgb {
        match self.shade(height, threshold) {
            Shade::Band(b) => b.color,
            Shade::Overflow => self.overflow,
        }
    }
}

impl Default for ColorMap {
    /// 0 green, 1-2 yellow, 3 magenta, 4-5 red, 6 and up black.
    fn default() -> Self {
        let band = |from, color, label| Band { from, color, label };
        ColorMap {
            bands: vec![
                band(0, Rgb::GREEN, "green"),
                band(1, Rgb::YELLOW, "yellow"),
                band(3, Rgb::MAGENTA, "magenta"),
                band(4, Rgb::RED, "red"),
                band(6, Rgb::BLACK, "black"),
            ],
            overflow: Rgb::WHITE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm { scale: usize },
    Svg { scale: usize },
}

fn on_cross(x: usize, y: usize, scale: usize) -> bool {
    scale >= 3 && (x == y || x + y == scale - 1)
}

pub fn render_grid(
    net: &Network,
    z: &Configuration,
    colors: &ColorMap,
    format: ImageFormat,
) -> Result<Vec<u8>, RenderError> {
    let spec = net.grid_spec().ok_or(RenderError::NotAGrid)?;
    if z.len() != net.len() {
        return Err(RenderError::LengthMismatch { expected: net.len(), got: z.len() });
    }
    let n = spec.n;
    let cell = |i: usize| (colors.shade(z.values()[i], net.threshold_at(i)), colors.color(z.values()[i], net.threshold_at(i)));
    match format {
        ImageFormat::Ppm { scale } => {
            if scale == 0 {
                return Err(RenderError::ZeroScale);
            }
            let side = n * scale;
            let header = format!("P6\n{side} {side}\n255\n");
            let mut out = Vec::with_capacity(header.len() + side * side * 3);
            out.extend_from_slice(header.as_bytes());
            for py in 0..side {
                for px in 0..side {
                    let (shade, color) = cell((py / scale) * n + px / scale);
                    let color = if shade == Shade::Overflow && on_cross(px % scale, py % scale, scale) {
                        Rgb::BLACK
                    } else {
                        color
                    };
                    out.extend_from_slice(&[color.0, color.1, color.2]);
                }
            }
            Ok(out)
        }
        ImageFormat::Svg { scale } => {
            if scale == 0 {
                return Err(RenderError::ZeroScale);
            }
            let side = n * scale;
            let mut s = String::new();
            let _ = writeln!(
                s,
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}">"#
            );
            for i in 0..net.len() {
                let (x, y) = ((i % n) * scale, (i / n) * scale);
                let (shade, color) = cell(i);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{scale}" height="{scale}" fill="{}"><title>{}</title></rect>"#,
                    color.hex(),
                    z.values()[i]
                );
                if shade == Shade::Overflow {
                    let (x2, y2) = (x + scale, y + scale);
                    let _ = writeln!(
                        s,
                        r##"<path d="M{x} {y}L{x2} {y2}M{x2} {y}L{x} {y2}" stroke="#000000" class="overflow"/>"##
                    );
                }
            }
            s.push_str("</svg>\n");
            Ok(s.into_bytes())
        }
    }
}
