//! Portable graymap I/O (binary `P5` and plain `P2`).

use std::io::{Read, Write};

use super::Image;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    /// Byte offset of the raster.
    data_start: usize,
    /// Line on which the raster starts.
    data_line: usize,
}

fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'2') {
        return Err(parse_err(1, "expected a P5 or P2 graymap"));
    }
    let mut pos = 2;
    let mut line = 1;
    let mut fields = [0u64; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        if b == b'\n' {
                            break;
                        }
                        pos += 1;
                    }
                }
                Some(b'\n') => {
                    line += 1;
                    pos += 1;
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(parse_err(line, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(line, format!("expected header field {} to be a number", k + 1)));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| parse_err(line, format!("header value {text} is too large")))?;
    }
    // exactly one whitespace byte separates the header from a binary raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {
            if *b == b'\n' {
                line += 1;
            }
            pos += 1;
        }
        _ => return Err(parse_err(line, "missing whitespace after header")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(parse_err(line, "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(line, format!("maxval {maxval} outside 1..=65535")));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_start: pos,
        data_line: line,
    })
}

/// Parses a graymap; intensities are rescaled so that `maxval` maps to 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let hdr = read_header(bytes)?;
    let count = hdr.width * hdr.height;
    let scale = 255.0 / hdr.maxval as f64;
    let mut pixels = Vec::with_capacity(count);
    if hdr.magic[1] == b'5' {
        let wide = hdr.maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let data = &bytes[hdr.data_start..];
        if data.len() < need {
            return Err(parse_err(hdr.data_line, format!("raster has {} bytes, expected {need}", data.len())));
        }
        for i in 0..count {
            let v = if wide {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
            } else {
                data[i] as u32
            };
            pixels.push(v as f64 * scale);
        }
    } else {
        let text = std::str::from_utf8(&bytes[hdr.data_start..])
            .map_err(|_| parse_err(hdr.data_line, "plain raster is not text"))?;
        for (offset, row) in text.lines().enumerate() {
            let content = row.split('#').next().unwrap_or("");
            for tok in content.split_ascii_whitespace() {
                let v: u32 = tok
                    .parse()
                    .map_err(|_| parse_err(hdr.data_line + offset, format!("invalid pixel value {tok:?}")))?;
                if v > hdr.maxval {
                    return Err(parse_err(hdr.data_line + offset, format!("pixel {v} exceeds maxval {}", hdr.maxval)));
                }
                pixels.push(v as f64 * scale);
            }
        }
        if pixels.len() != count {
            return Err(parse_err(hdr.data_line, format!("found {} pixels, expected {count}", pixels.len())));
        }
    }
    Image::new(hdr.height, hdr.width, pixels)
}

pub fn read_pgm(path: &std::path::Path) -> Result<Image> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Binary graymap with maxval 255; values are rounded and clamped.
pub fn encode_p5(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.w, img.h).into_bytes();
    out.extend(img.pixels.iter().map(|&v| quantize(v)));
    out
}

/// Plain graymap of nonnegative integers. Without an explicit `maxval` the largest value
/// (at least 1) is used.
pub fn encode_p2(values: &[u32], h: usize, w: usize, maxval: Option<u32>) -> Vec<u8> {
    let largest = values.iter().copied().max().unwrap_or(0).max(1);
    let maxval = maxval.map_or(largest, |m| m.max(largest));
    let mut out = format!("P2\n{w} {h}\n{maxval}\n");
    for row in values.chunks(w) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_pgm(path: &std::path::Path, img: &Image) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_p5(img))?;
    Ok(())
}

/// Writes an image as plain text, rounded and clamped to 0..=255.
pub fn write_pgm_plain(path: &std::path::Path, img: &Image) -> Result<()> {
    let values: Vec<u32> = img.pixels.iter().map(|&v| quantize(v) as u32).collect();
    std::fs::File::create(path)?.write_all(&encode_p2(&values, img.h, img.w, Some(255)))?;
    Ok(())
}
