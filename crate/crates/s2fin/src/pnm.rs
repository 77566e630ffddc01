//! Binary PGM (16-bit) and PPM (8-bit) images.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// Writes `values` scaled so the maximum maps to 65535; negatives clamp to 0.
pub fn write_pgm16<W: Write>(mut w: W, width: usize, height: usize, values: &[f64]) -> io::Result<()> {
    assert_eq!(values.len(), width * height, "pgm: value count");
    let max = values.iter().copied().fold(0.0f64, f64::max);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    let mut bytes = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let q = if max > 0.0 { (v.max(0.0) / max * 65535.0).round() as u16 } else { 0 };
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&bytes)
}

/// Fixed color of each class; class 0 (unlabeled) is black.
pub fn palette(class: u16) -> [u8; 3] {
    const COLORS: [[u8; 3]; 16] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 212],
        [0, 128, 128],
        [220, 190, 255],
        [170, 110, 40],
        [255, 250, 200],
        [128, 0, 0],
        [170, 255, 195],
    ];
    match class {
        0 => [0, 0, 0],
        k => {
            let i = (k as usize - 1) % COLORS.len();
            let round = ((k as usize - 1) / COLORS.len()) as u8;
            let base = COLORS[i];
            [base[0] ^ round.wrapping_mul(37), base[1] ^ round.wrapping_mul(91), base[2].max(1)]
        }
    }
}

/// Paletted class map as a binary PPM.
pub fn write_class_ppm<W: Write>(mut w: W, width: usize, height: usize, classes: &[u16]) -> io::Result<()> {
    assert_eq!(classes.len(), width * height, "ppm: pixel count");
    write!(w, "P6\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = classes.iter().flat_map(|&c| palette(c)).collect();
    w.write_all(&bytes)
}

/// Header and raw samples of a binary PNM file.
#[derive(Debug, Clone, PartialEq)]
pub struct Pnm {
    pub magic: String,
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub data: Vec<u8>,
}

/// Parses a `P5` or `P6` file and checks the payload length.
pub fn parse_pnm(bytes: &[u8]) -> Result<Pnm> {
    let bad = |m: &str| Error::format("pnm", m);
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("non-ascii header"))?);
    }
    i += 1;
    let magic = fields[0].to_string();
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(bad("unsupported magic")),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])? as u32);
    let depth = if maxval > 255 { 2 } else { 1 };
    let data = bytes.get(i..).unwrap_or_default().to_vec();
    let expected = width * height * channels * depth;
    if data.len() != expected {
        return Err(Error::PayloadSize {
            file: "pnm".into(),
            expected: expected as u64,
            actual: data.len() as u64,
        });
    }
    Ok(Pnm { magic, width, height, maxval, data })
}
