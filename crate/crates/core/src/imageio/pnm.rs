//! Netpbm codec: P2/P3/P5/P6 readers, P5/P6 writers.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imageio::{ErpImage, SaliencyMap};
use crate::Real;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample {value} exceeds maxval {maxval}")]
    SampleOverflow { value: u32, maxval: u32 },
    #[error("expected a {expected} file, found magic {found}")]
    WrongKind { expected: &'static str, found: String },
    #[error("raster has zero width or height")]
    EmptyRaster,
    #[error("raster data length {actual} does not match dimensions (expected {expected})")]
    DataLength { expected: usize, actual: usize },
    #[error("pixel value {0} outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("saliency value {0} is negative or not finite")]
    NegativeSaliency(f64),
}

/// Decoded Netpbm raster with raw integer samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

impl Pnm {
    fn scaled<T: Real>(&self) -> Vec<T> {
        let m = T::lit(self.maxval as f64);
        self.samples.iter().map(|s| T::lit(*s as f64) / m).collect()
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::MalformedHeader(format!("{what} out of range")))
    }
}

/// Parses any of P2, P3, P5, P6.
pub fn decode_pnm(bytes: &[u8]) -> Result<Pnm, ImageError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(ImageError::MalformedHeader("missing P magic".into()));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        other => {
            return Err(ImageError::MalformedHeader(format!(
                "unsupported magic P{}",
                other as char
            )))
        }
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::MalformedHeader(format!("maxval {maxval} not in 1..=65535")));
    }
    let expected = width * height * channels;
    let mut samples = Vec::with_capacity(expected);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(h.pos) {
            Some(b) if b.is_ascii_whitespace() => h.pos += 1,
            _ => return Err(ImageError::MalformedHeader("no separator before raster".into())),
        }
        let raster = &bytes[h.pos..];
        if maxval < 256 {
            samples.extend(raster.iter().take(expected).map(|b| *b as u16));
        } else {
            samples.extend(
                raster
                    .chunks_exact(2)
                    .take(expected)
                    .map(|p| u16::from_be_bytes([p[0], p[1]])),
            );
        }
    } else {
        while samples.len() < expected {
            h.skip_space_and_comments();
            if h.pos >= bytes.len() {
                break;
            }
            let v = h
                .number("sample")
                .map_err(|_| ImageError::MalformedHeader(format!("invalid ascii sample at byte {}", h.pos)))?;
            samples.push(v.min(u16::MAX as u32) as u16);
            if v > maxval {
                return Err(ImageError::SampleOverflow { value: v, maxval });
            }
        }
    }
    if samples.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: samples.len(),
        });
    }
    if let Some(s) = samples.iter().find(|s| **s as u32 > maxval) {
        return Err(ImageError::SampleOverflow {
            value: *s as u32,
            maxval,
        });
    }
    Ok(Pnm {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, ImageError> {
    fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => ImageError::NotFound(path.to_path_buf()),
        _ => ImageError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
    fs::write(path, bytes).map_err(|e| ImageError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads a PPM (P3/P6) into an RGB image scaled to `[0, 1]`.
pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<ErpImage<T>, ImageError> {
    let pnm = decode_pnm(&read(path.as_ref())?)?;
    if pnm.channels != 3 {
        return Err(ImageError::WrongKind {
            expected: "PPM (P3/P6)",
            found: "PGM".into(),
        });
    }
    let img = ErpImage::new(pnm.width, pnm.height, pnm.scaled())?;
    if let Some(w) = img.aspect_warning() {
        log::warn!("{}: {w}", path.as_ref().display());
    }
    Ok(img)
}

/// Reads a PGM (P2/P5) saliency map scaled by its maxval.
pub fn load_saliency<T: Real>(path: impl AsRef<Path>) -> Result<SaliencyMap<T>, ImageError> {
    let pnm = decode_pnm(&read(path.as_ref())?)?;
    if pnm.channels != 1 {
        return Err(ImageError::WrongKind {
            expected: "PGM (P2/P5)",
            found: "PPM".into(),
        });
    }
    SaliencyMap::new(pnm.width, pnm.height, pnm.scaled())
}

fn quantize<T: Real>(v: T) -> u8 {
    (v.max(T::zero()).min(T::one()) * T::lit(255.0))
        .round()
        .to_u8()
        .unwrap_or(255)
}

/// Binary P6 with maxval 255.
pub fn encode_ppm<T: Real>(img: &ErpImage<T>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| quantize(*v)));
    out
}

/// Binary P5 with maxval 255; values are scaled by the map's maximum when it
/// exceeds 1.
pub fn encode_pgm<T: Real>(map: &SaliencyMap<T>) -> Vec<u8> {
    let scale = map.max_value().max(T::one());
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.data().iter().map(|v| quantize(*v / scale)));
    out
}

pub fn save_ppm<T: Real>(path: impl AsRef<Path>, img: &ErpImage<T>) -> Result<(), ImageError> {
    write(path.as_ref(), &encode_ppm(img))
}

pub fn save_pgm<T: Real>(path: impl AsRef<Path>, map: &SaliencyMap<T>) -> Result<(), ImageError> {
    write(path.as_ref(), &encode_pgm(map))
}
