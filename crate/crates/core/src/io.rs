//! Image files (binary PGM, 8-bit grayscale PNG) and the plain-text model
//! dump.

use std::fmt::Write as _;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Result, SmoeError};
use crate::image::{quantize, GrayImage};
use crate::model::SmoeModel;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Loads a P5 PGM (maxval 255) or 8-bit grayscale PNG, chosen by magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SmoeError::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else {
        decode_pgm(bytes)
    }
}

/// Writes a P5 PGM: header `P5\n<w> <h>\n255\n` followed by one byte per
/// pixel, `round(clamp(v, 0, 1) · 255)`.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| SmoeError::io(path, e))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.pixels().iter().map(|&v| quantize(v)));
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &'static str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(SmoeError::format(field, "expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| SmoeError::format(field, "number out of range"))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(SmoeError::format(
            "magic",
            "expected `P5` (binary PGM) or a PNG signature",
        ));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(SmoeError::format(
            "maxval",
            format!("only 255 is supported, got {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(SmoeError::format(
            "width",
            "image dimensions must be positive",
        ));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(SmoeError::format(
                "maxval",
                "missing whitespace before pixel data",
            ))
        }
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| SmoeError::format("width", "image too large"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(SmoeError::format(
            "payload",
            format!(
                "expected {need} bytes of pixel data, found {}",
                payload.len()
            ),
        ));
    }
    let pixels = payload[..need].iter().map(|&b| b as f64 / 255.0).collect();
    GrayImage::new(width, height, pixels)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let png_err = |e: png::DecodingError| SmoeError::format("png", e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| SmoeError::format("png", "image too large"))?
    ];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(SmoeError::format(
            "color_type",
            format!("expected grayscale, got {:?}", info.color_type),
        ));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(SmoeError::format(
            "bit_depth",
            format!("expected 8 bits, got {:?}", info.bit_depth),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        pixels.extend(row[..w].iter().map(|&b| b as f64 / 255.0));
    }
    GrayImage::new(w, h, pixels)
}

/// Human-readable dump of a model: a header followed by one stanza per
/// kernel. Values use Rust's shortest round-trip float formatting.
///
/// ```text
/// dim = 2
/// kernels = 1
///
/// [kernel 0]
/// center = 0.5 0.5
/// precision = 4 0 0 4
/// factor = 0.6931471805599453 0 0.6931471805599453
/// mix_logit = 0
/// mix_weight = 1
/// expert = 0.25
/// ```
///
/// `precision` is `Σ⁻¹` row-major; `factor` lists the stored lower-triangle
/// entries (diagonal as logs) in flat parameter order.
pub fn model_to_text<const N: usize>(model: &SmoeModel<N>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim = {N}");
    let _ = writeln!(s, "kernels = {}", model.num_kernels());
    let pis = model.mixing_weights();
    for (j, (k, pi)) in model.kernels().iter().zip(pis).enumerate() {
        let _ = writeln!(s, "\n[kernel {j}]");
        let _ = writeln!(s, "center = {}", join(k.center.iter()));
        let p = k.precision_matrix();
        let _ = writeln!(s, "precision = {}", join(p.iter().flatten()));
        let lower = (0..N).flat_map(|i| k.precision_factor[i][..=i].to_vec());
        let _ = writeln!(s, "factor = {}", join(lower.collect::<Vec<_>>().iter()));
        let _ = writeln!(s, "mix_logit = {}", k.mix_logit);
        let _ = writeln!(s, "mix_weight = {pi}");
        let _ = writeln!(s, "expert = {}", k.expert);
    }
    s
}

fn join<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}
