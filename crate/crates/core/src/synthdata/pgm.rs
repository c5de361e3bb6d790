//! Binary PGM (P5, maxval 255).

use std::fs;
use std::path::Path;

use crate::error::{MvpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, `[0, 1]`.
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(MvpError::dim(
                "GrayImage::new",
                format!("{} pixels for {width}x{height}", pixels.len()),
            ));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn square(size: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::new(size, size, pixels)
    }

    /// Places images left to right; all must share a height.
    pub fn hconcat(images: &[GrayImage]) -> Result<Self> {
        let Some(first) = images.first() else {
            return Err(MvpError::contract("nothing to concatenate"));
        };
        let height = first.height;
        if images.iter().any(|im| im.height != height) {
            return Err(MvpError::dim("hconcat", "images differ in height"));
        }
        let width: usize = images.iter().map(|im| im.width).sum();
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for im in images {
                pixels.extend_from_slice(&im.pixels[r * im.width..(r + 1) * im.width]);
            }
        }
        Ok(Self { width, height, pixels })
    }
}

pub fn encode_pgm(image: &GrayImage) -> Result<Vec<u8>> {
    if image.pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(MvpError::contract("PGM pixels must lie in [0, 1]"));
    }
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|v| (v * 255.0).round() as u8));
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, detail: impl Into<String>) -> MvpError {
        MvpError::ParseAt {
            what: "PGM".into(),
            offset: self.pos,
            detail: detail.into(),
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| MvpError::ParseAt {
                what: "PGM".into(),
                offset: start,
                detail: "number too large".into(),
            })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    if !bytes.starts_with(b"P5") {
        return Err(cur.err("missing P5 magic"));
    }
    cur.pos = 2;
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(cur.err(format!("unsupported maxval {maxval}")));
    }
    if !cur.bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(cur.err("expected one whitespace byte before raster"));
    }
    cur.pos += 1;
    let n = width * height;
    let raster = &bytes[cur.pos..];
    if raster.len() != n {
        let at = cur.pos + raster.len().min(n);
        return Err(MvpError::ParseAt {
            what: "PGM".into(),
            offset: at,
            detail: format!("raster has {} bytes, expected {n}", raster.len()),
        });
    }
    GrayImage::new(width, height, raster.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image)?).map_err(|e| MvpError::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| MvpError::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        MvpError::ParseAt { offset, detail, .. } => MvpError::ParseAt {
            what: path.display().to_string(),
            offset,
            detail,
        },
        other => other,
    })
}
