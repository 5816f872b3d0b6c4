//! Gaussian clouds as PLY vertex lists, using the property names common to
//! splatting tools. Values are stored raw: `opacity` is the logit, `scale_*`
//! are log scales and `rot_*` is the `(w, x, y, z)` quaternion.

use std::fs;
use std::path::Path;

use nalgebra::{Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scene::{sh, GaussianCloud, GaussianPrimitive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    BinaryLittleEndian,
    Ascii,
}

fn property_names(sh_degree: usize) -> Vec<String> {
    let rest = sh::coeff_count(sh_degree) - 1;
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"].map(String::from).to_vec();
    names.extend((0..3 * rest).map(|k| format!("f_rest_{k}")));
    names.push("opacity".into());
    names.extend((0..3).map(|k| format!("scale_{k}")));
    names.extend((0..4).map(|k| format!("rot_{k}")));
    names
}

fn primitive_values(p: &GaussianPrimitive) -> Vec<f64> {
    let rest = p.sh_coeffs.len() - 1;
    let mut v = vec![p.position.x, p.position.y, p.position.z];
    v.extend(p.sh_coeffs[0].iter());
    // Higher bands are stored channel-major.
    for c in 0..3 {
        v.extend((1..=rest).map(|k| p.sh_coeffs[k][c]));
    }
    v.push(p.opacity_logit);
    v.extend(p.log_scales.iter());
    v.extend(p.rotation.iter());
    v
}

fn primitive_from_values(v: &[f64], sh_degree: usize) -> GaussianPrimitive {
    let n = sh::coeff_count(sh_degree);
    let rest = n - 1;
    let mut sh_coeffs = vec![Vector3::new(v[3], v[4], v[5])];
    for k in 1..n {
        sh_coeffs.push(Vector3::new(v[6 + (k - 1)], v[6 + rest + (k - 1)], v[6 + 2 * rest + (k - 1)]));
    }
    let o = 6 + 3 * rest;
    GaussianPrimitive {
        position: Vector3::new(v[0], v[1], v[2]),
        rotation: Vector4::new(v[o + 4], v[o + 5], v[o + 6], v[o + 7]),
        log_scales: Vector3::new(v[o + 1], v[o + 2], v[o + 3]),
        opacity_logit: v[o],
        sh_coeffs,
    }
}

pub fn ply_bytes(cloud: &GaussianCloud, format: PlyFormat) -> Vec<u8> {
    let names = property_names(cloud.sh_degree);
    let mut header = String::from("ply\n");
    header += match format {
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
        PlyFormat::Ascii => "format ascii 1.0\n",
    };
    header += &format!("comment sh_degree {}\n", cloud.sh_degree);
    header += &format!("element vertex {}\n", cloud.len());
    for n in &names {
        header += &format!("property double {n}\n");
    }
    header += "end_header\n";
    let mut out = header.into_bytes();
    for p in &cloud.primitives {
        let values = primitive_values(p);
        match format {
            PlyFormat::BinaryLittleEndian => values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            PlyFormat::Ascii => {
                let line: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn write_ply(path: &Path, cloud: &GaussianCloud, format: PlyFormat) -> Result<()> {
    fs::write(path, ply_bytes(cloud, format)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Little,
    Big,
}

#[derive(Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], enc: Encoding) -> f64 {
        macro_rules! get {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                if enc == Encoding::Big {
                    <$t>::from_be_bytes(a) as f64
                } else {
                    <$t>::from_le_bytes(a) as f64
                }
            }};
        }
        match self {
            Scalar::I8 => get!(i8, 1),
            Scalar::U8 => get!(u8, 1),
            Scalar::I16 => get!(i16, 2),
            Scalar::U16 => get!(u16, 2),
            Scalar::I32 => get!(i32, 4),
            Scalar::U32 => get!(u32, 4),
            Scalar::F32 => get!(f32, 4),
            Scalar::F64 => get!(f64, 8),
        }
    }
}

pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<GaussianCloud> {
    let bad = |msg: String| Error::format("PLY", path, msg);
    let end = b"end_header\n";
    let header_len = bytes
        .windows(end.len())
        .position(|w| w == end)
        .map(|p| p + end.len())
        .ok_or_else(|| bad("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_len]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic".into()));
    }
    let mut encoding = None;
    let mut count = None;
    let mut declared_degree = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", f, _] => {
                encoding = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Little,
                    "binary_big_endian" => Encoding::Big,
                    other => return Err(bad(format!("unknown format {other}"))),
                })
            }
            ["comment", "sh_degree", d] => declared_degree = d.parse::<usize>().ok(),
            ["comment", ..] | ["obj_info", ..] | ["end_header"] => {}
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count".into()))?),
            ["element", other, _] => return Err(bad(format!("unsupported element {other}"))),
            ["property", "list", ..] => return Err(bad("list properties are not supported".into())),
            ["property", ty, name] => {
                let s = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type {ty}")))?;
                props.push((name.to_string(), s));
            }
            [] => {}
            _ => return Err(bad(format!("unexpected header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| bad("missing format line".into()))?;
    let count = count.ok_or_else(|| bad("missing vertex element".into()))?;
    let rest = props.iter().filter(|(n, _)| n.starts_with("f_rest_")).count();
    let sh_degree = sh::degree_from_count(rest / 3 + 1)
        .filter(|_| rest % 3 == 0)
        .ok_or_else(|| bad(format!("{rest} f_rest properties do not form a SH basis")))?;
    if declared_degree.is_some_and(|d| d != sh_degree) {
        return Err(bad("sh_degree comment disagrees with the property list".into()));
    }
    let wanted = property_names(sh_degree);
    let slots: Vec<usize> = wanted
        .iter()
        .map(|w| {
            props
                .iter()
                .position(|(n, _)| n == w)
                .ok_or_else(|| bad(format!("missing property {w}")))
        })
        .collect::<Result<_>>()?;

    let body = &bytes[header_len..];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    match encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| bad("ASCII body is not UTF-8".into()))?;
            let mut tokens = text.split_whitespace();
            for _ in 0..count {
                let row = (0..props.len())
                    .map(|_| {
                        tokens
                            .next()
                            .ok_or_else(|| bad("truncated vertex data".into()))?
                            .parse::<f64>()
                            .map_err(|_| bad("non-numeric vertex value".into()))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
        }
        Encoding::Little | Encoding::Big => {
            let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
            if body.len() < stride * count {
                return Err(bad(format!("expected {} body bytes, found {}", stride * count, body.len())));
            }
            for v in 0..count {
                let mut off = v * stride;
                let row = props
                    .iter()
                    .map(|(_, s)| {
                        let x = s.decode(&body[off..], encoding);
                        off += s.size();
                        x
                    })
                    .collect();
                rows.push(row);
            }
        }
    }
    let primitives = rows
        .iter()
        .map(|row| {
            let values: Vec<f64> = slots.iter().map(|&s| row[s]).collect();
            primitive_from_values(&values, sh_degree)
        })
        .collect();
    GaussianCloud::new(primitives, sh_degree).map_err(|e| bad(e.to_string()))
}

pub fn read_ply(path: &Path) -> Result<GaussianCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, path)
}
