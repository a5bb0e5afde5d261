//! Portable graymap (P2/P5, maxval 255) read/write and 8-bit grayscale PNG input.

use std::fs;
use std::io::{self, Cursor};
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(Error::NotFound(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    decode(&bytes)
}

/// Decode an in-memory graymap or PNG, sniffing the format from its magic bytes.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    match bytes {
        [b'P', b'2', ..] => decode_pnm(bytes, false),
        [b'P', b'5', ..] => decode_pnm(bytes, true),
        [b'P', d, ..] if d.is_ascii_digit() => Err(Error::UnsupportedFormat(format!(
            "netpbm variant P{} is not a graymap",
            *d as char
        ))),
        [0x89, b'P', b'N', b'G', ..] => decode_png(bytes),
        _ => Err(Error::UnsupportedFormat("unrecognized magic bytes".into())),
    }
}

/// Writes a binary graymap through a temporary sibling file, renamed on success.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.data());
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                Error::CorruptData(format!("truncated header, missing {what}"))
            } else {
                Error::CorruptData(format!(
                    "expected {what}, found byte 0x{:02x}",
                    self.bytes[self.pos]
                ))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptData(format!("{what} out of range")))
    }
}

fn decode_pnm(bytes: &[u8], binary: bool) -> Result<GrayImage> {
    let mut r = HeaderReader { bytes, pos: 2 };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptData(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval}, only 255 is supported"
        )));
    }
    let n = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| Error::CorruptData("dimensions overflow".into()))?;

    if binary {
        // exactly one whitespace byte separates the header from the payload
        match bytes.get(r.pos) {
            Some(c) if c.is_ascii_whitespace() => r.pos += 1,
            Some(_) => return Err(Error::CorruptData("missing whitespace after maxval".into())),
            None => return Err(Error::CorruptData("truncated payload: 0 bytes".into())),
        }
        let payload = &bytes[r.pos..];
        if payload.len() < n {
            return Err(Error::CorruptData(format!(
                "truncated payload: {} of {n} bytes",
                payload.len()
            )));
        }
        GrayImage::from_raw(width, height, payload[..n].to_vec())
    } else {
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let v = r.number("sample").map_err(|_| {
                Error::CorruptData(format!("truncated payload: {i} of {n} samples"))
            })?;
            if v > maxval {
                return Err(Error::CorruptData(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            data.push(v as u8);
        }
        GrayImage::from_raw(width, height, data)
    }
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_error)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "PNG must be 8-bit single-channel, found {color:?} at {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptData("PNG dimensions overflow".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_error)?;
    let (w, h) = (info.width, info.height);
    let stride = info.line_size;
    let mut data = Vec::with_capacity(w as usize * h as usize);
    for row in buf.chunks(stride).take(h as usize) {
        data.extend_from_slice(&row[..w as usize]);
    }
    GrayImage::from_raw(w, h, data)
}

fn png_error(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) if io.kind() == io::ErrorKind::UnexpectedEof => {
            Error::CorruptData("truncated PNG stream".into())
        }
        png::DecodingError::IoError(io) => Error::Io(io),
        other => Error::CorruptData(other.to_string()),
    }
}
