//! Portable float map output.

use std::io::{self, Write};

/// Writes a PFM image. `pixels` are row-major from the top row;
/// `channels` is 1 (grayscale "Pf") or 3 ("PF"). A 2-channel source must be
/// padded by the caller.
pub fn write_pfm(
    out: &mut impl Write,
    width: usize,
    height: usize,
    channels: usize,
    pixels: &[f32],
) -> io::Result<()> {
    let tag = match channels {
        1 => "Pf",
        3 => "PF",
        _ => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "pfm needs 1 or 3 channels",
            ))
        }
    };
    if pixels.len() != width * height * channels {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "pixel buffer size mismatch",
        ));
    }
    write!(out, "{tag}\n{width} {height}\n-1.0\n")?;
    let row = width * channels;
    let mut buf = Vec::with_capacity(pixels.len() * 4);
    // PFM stores rows bottom to top.
    for y in (0..height).rev() {
        for v in &pixels[y * row..(y + 1) * row] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

/// Reads a PFM written by [`write_pfm`], returning width, height, channels
/// and top-down pixels.
pub fn read_pfm(data: &[u8]) -> io::Result<(usize, usize, usize, Vec<f32>)> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| bad("header not utf-8"))?);
    }
    pos += 1;
    let channels = match fields[0] {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("not a pfm")),
    };
    let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("scale"))?;
    let n = width * height * channels;
    let body = data
        .get(pos..pos + n * 4)
        .ok_or_else(|| bad("truncated body"))?;
    let mut rows = vec![0f32; n];
    let row = width * channels;
    for (i, c) in body.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (y, x) = (i / row, i % row);
        rows[(height - 1 - y) * row + x] = v;
    }
    Ok((width, height, channels, rows))
}
