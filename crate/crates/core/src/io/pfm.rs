//! Portable float maps: `Pf` (one channel) or `PF` (three channels),
//! little-endian `f32`, rows stored bottom to top.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::{DepthMap, PointMap};

#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Top row first, channels interleaved.
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{magic}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        let row = self.width * self.channels;
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format("PFM", path, msg);
        // Three whitespace-terminated header tokens: magic, "W H", scale.
        let mut tokens = Vec::new();
        let mut pos = 0;
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        pos += 1; // single whitespace byte before the payload
        let channels = match tokens[0] {
            "Pf" => 1,
            "PF" => 3,
            other => return Err(bad(&format!("unknown magic {other:?}"))),
        };
        let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
        let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
        let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
        if scale == 0.0 || !scale.is_finite() {
            return Err(bad("scale must be non-zero"));
        }
        let little = scale < 0.0;
        let row = width * channels;
        let need = row * height * 4;
        let payload = bytes.get(pos..).ok_or_else(|| bad("missing payload"))?;
        if payload.len() != need {
            return Err(bad(&format!("expected {need} payload bytes, found {}", payload.len())));
        }
        let mut data = vec![0f32; row * height];
        for (k, chunk) in payload.chunks_exact(4).enumerate() {
            let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
            let (file_row, col) = (k / row, k % row);
            data[(height - 1 - file_row) * row + col] = v;
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    Pfm {
        width: depth.width,
        height: depth.height,
        channels: 1,
        data: depth.data.iter().map(|&v| v as f32).collect(),
    }
    .write(path)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let pfm = Pfm::read(path)?;
    if pfm.channels != 1 {
        return Err(Error::format("PFM", path, "depth map must have one channel"));
    }
    DepthMap::from_data(pfm.width, pfm.height, pfm.data.iter().map(|&v| f64::from(v)).collect())
        .map_err(|e| Error::format("PFM", path, e.to_string()))
}

/// Writes points as a three-channel map and confidences as a one-channel map.
pub fn write_point_map(points_path: &Path, confidence_path: &Path, map: &PointMap) -> Result<()> {
    Pfm {
        width: map.width,
        height: map.height,
        channels: 3,
        data: map.points.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect(),
    }
    .write(points_path)?;
    Pfm {
        width: map.width,
        height: map.height,
        channels: 1,
        data: map.confidence.iter().map(|&c| c as f32).collect(),
    }
    .write(confidence_path)
}

pub fn read_point_map(points_path: &Path, confidence_path: &Path) -> Result<PointMap> {
    let p = Pfm::read(points_path)?;
    let c = Pfm::read(confidence_path)?;
    if p.channels != 3 || c.channels != 1 || (p.width, p.height) != (c.width, c.height) {
        return Err(Error::format(
            "PFM",
            points_path,
            "point map needs a 3-channel point file and a matching 1-channel confidence file",
        ));
    }
    let points = p
        .data
        .chunks_exact(3)
        .map(|v| Vector3::new(f64::from(v[0]), f64::from(v[1]), f64::from(v[2])))
        .collect();
    PointMap::new(p.width, p.height, points, c.data.iter().map(|&v| f64::from(v)).collect())
        .map_err(|e| Error::format("PFM", confidence_path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let data: Vec<f32> = (0..5 * 3 * 3).map(|i| (i as f32 * 0.731).sin() * 1e3 + f32::EPSILON).collect();
        let pfm = Pfm {
            width: 5,
            height: 3,
            channels: 3,
            data,
        };
        let bytes = pfm.to_bytes();
        assert!(bytes.starts_with(b"PF\n5 3\n-1.0\n"));
        let back = Pfm::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, pfm);
    }

    #[test]
    fn bottom_row_first() {
        let pfm = Pfm {
            width: 1,
            height: 2,
            channels: 1,
            data: vec![1.0, 2.0],
        };
        let bytes = pfm.to_bytes();
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(&payload[..4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn big_endian_input() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        let pfm = Pfm::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(pfm.data, vec![1.5, -2.0]);
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = b"Pf\n2 2\n-1.0\n\0\0\0\0".to_vec();
        assert!(matches!(Pfm::from_bytes(&bytes, Path::new("mem")), Err(Error::Format { .. })));
    }
}
