//! Fixed-palette rasterization and the P6 pixmap / PNG encodings.

use std::io;

pub type Rgb = [u8; 3];

pub mod palette {
    use super::Rgb;

    pub const BACKGROUND: Rgb = [24, 24, 32];
    pub const GRID: Rgb = [48, 48, 60];
    pub const WALL: Rgb = [96, 96, 110];
    pub const GROUND: Rgb = [120, 84, 48];
    pub const PLAYER: Rgb = [230, 60, 60];
    pub const PLAYER_ALT: Rgb = [250, 140, 140];
    pub const FOOD: Rgb = [80, 200, 80];
    pub const COIN: Rgb = [240, 200, 40];
    pub const FLAG: Rgb = [60, 200, 120];
    pub const HAZARD: Rgb = [200, 40, 200];
    pub const HURDLE: Rgb = [240, 140, 30];
    pub const BAR: Rgb = [60, 140, 240];
    pub const HIDDEN: Rgb = [140, 140, 150];
    pub const REVEALED: Rgb = [210, 210, 200];
    pub const MINE: Rgb = [10, 10, 10];
    pub const CUSTOMER: Rgb = [120, 80, 200];
    pub const SHELF: Rgb = [170, 110, 60];
    pub const COUNTER: Rgb = [60, 170, 170];
    pub const TREE: Rgb = [40, 140, 40];

    /// Shades for small integers (mine counts, tile exponents, stock levels).
    pub const LEVELS: [Rgb; 12] = [
        [238, 228, 218],
        [237, 224, 200],
        [242, 177, 121],
        [245, 149, 99],
        [246, 124, 95],
        [246, 94, 59],
        [237, 207, 114],
        [237, 204, 97],
        [237, 200, 80],
        [237, 197, 63],
        [237, 194, 46],
        [60, 58, 50],
    ];

    pub fn level(i: usize) -> Rgb {
        LEVELS[i.min(LEVELS.len() - 1)]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        let mut c = Self {
            width,
            height,
            pixels: vec![0; width as usize * height as usize * 3],
        };
        c.fill_rect(0, 0, width as i32, height as i32, palette::BACKGROUND);
        c
    }

    pub fn fill_rect(&mut self, x: i32, y: i32, w: i32, h: i32, color: Rgb) {
        let x0 = x.max(0) as u32;
        let y0 = y.max(0) as u32;
        let x1 = ((x + w).max(0) as u32).min(self.width);
        let y1 = ((y + h).max(0) as u32).min(self.height);
        for py in y0..y1 {
            let row = (py * self.width) as usize * 3;
            for px in x0..x1 {
                let i = row + px as usize * 3;
                self.pixels[i..i + 3].copy_from_slice(&color);
            }
        }
    }

    /// Fills grid cell `(col, row)` of a `size`-pixel lattice, leaving a
    /// one-pixel gutter.
    pub fn cell(&mut self, col: i32, row: i32, size: i32, color: Rgb) {
        self.fill_rect(col * size + 1, row * size + 1, size - 2, size - 2, color);
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn to_png(&self) -> io::Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(io::Error::other)?;
            writer.write_image_data(&self.pixels).map_err(io::Error::other)?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub text_grid: String,
    pub frame: Canvas,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_size() {
        let mut c = Canvas::new(4, 2);
        c.fill_rect(1, 0, 2, 1, palette::PLAYER);
        let ppm = c.to_ppm();
        assert!(ppm.starts_with(b"P6\n4 2\n255\n"));
        assert_eq!(ppm.len(), 11 + 4 * 2 * 3);
        assert_eq!(c.pixel(1, 0), palette::PLAYER);
        assert_eq!(c.pixel(0, 0), palette::BACKGROUND);
    }

    #[test]
    fn png_signature() {
        let png = Canvas::new(3, 3).to_png().unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }
}
