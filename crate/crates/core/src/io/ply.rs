//! Binary little-endian PLY in the common 3DGS layout.
//!
//! Stored scales are log-scales and stored opacities are logits; both are
//! activated on read and inverted on write. Spherical-harmonic fields are
//! skipped.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::UnitQuaternion;

use crate::error::{Error, Result};
use crate::model::{unit_quaternion, GaussianPrimitive, GaussianScene, Vec3};

const REQUIRED: [&str; 11] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, ScalarType)>,
}

fn parse_header(reader: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<()> {
        line.clear();
        let n = reader
            .read_line(line)
            .map_err(|e| Error::Format(format!("reading PLY header: {e}")))?;
        if n == 0 {
            return Err(Error::Format("PLY header ended before end_header".into()));
        }
        Ok(())
    };
    next_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Format("missing 'ply' magic".into()));
    }
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    let mut seen_vertex = false;
    loop {
        next_line(&mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Format(format!("unsupported PLY format '{fmt}'")));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                if seen_vertex && *name != "vertex" {
                    // trailing elements are never read
                    in_vertex = false;
                    continue;
                }
                if *name != "vertex" {
                    return Err(Error::Format(format!("unsupported element '{name}' before vertex")));
                }
                vertex_count = Some(
                    count
                        .parse()
                        .map_err(|_| Error::Format(format!("bad vertex count '{count}'")))?,
                );
                in_vertex = true;
                seen_vertex = true;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Format("list properties are not supported on vertex".into()));
            }
            ["property", ty, name] if in_vertex => {
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::Format(format!("unknown property type '{ty}'")))?;
                properties.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            _ => return Err(Error::Format(format!("unexpected header line '{}'", line.trim_end()))),
        }
    }
    let vertex_count = vertex_count.ok_or_else(|| Error::Format("no vertex element".into()))?;
    Ok(Header {
        vertex_count,
        properties,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn read_gaussian_ply(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = parse_header(&mut reader)?;

    let mut offsets = [0usize; REQUIRED.len()];
    let mut types = [ScalarType::F32; REQUIRED.len()];
    let mut stride = 0;
    let mut found = [false; REQUIRED.len()];
    for (name, ty) in &header.properties {
        if let Some(k) = REQUIRED.iter().position(|r| r == name) {
            offsets[k] = stride;
            types[k] = *ty;
            found[k] = true;
        }
        stride += ty.size();
    }
    if let Some(k) = found.iter().position(|f| !f) {
        return Err(Error::Format(format!("missing required property '{}'", REQUIRED[k])));
    }

    let mut body = vec![0u8; stride * header.vertex_count];
    reader
        .read_exact(&mut body)
        .map_err(|e| Error::Format(format!("truncated PLY body: {e}")))?;

    let mut gaussians = Vec::with_capacity(header.vertex_count);
    let mut v = [0.0f64; REQUIRED.len()];
    for (i, rec) in body.chunks_exact(stride).enumerate() {
        for k in 0..REQUIRED.len() {
            v[k] = types[k].read(&rec[offsets[k]..]);
            if v[k].is_nan() {
                return Err(Error::Data(format!("NaN in '{}' of element {i}", REQUIRED[k])));
            }
        }
        let rotation = unit_quaternion(v[6], v[7], v[8], v[9])
            .map_err(|e| Error::Data(format!("element {i}: {e}")))?;
        let g = GaussianPrimitive::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3].exp(), v[4].exp(), v[5].exp()),
            rotation,
            sigmoid(v[10]),
        )
        .map_err(|e| Error::Data(format!("element {i}: {e}")))?;
        gaussians.push(g);
    }
    Ok(GaussianScene::new(gaussians))
}

const WRITTEN: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

/// Opacities are clamped away from 0 and 1 so that their logits stay finite.
pub fn write_gaussian_ply(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(128 + scene.len() * WRITTEN.len() * 4);
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", scene.len()).as_bytes());
    for name in WRITTEN {
        out.extend_from_slice(format!("property float {name}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for g in &scene.gaussians {
        let q: &UnitQuaternion<f64> = &g.rotation;
        let opacity = g.opacity.clamp(1e-6, 1.0 - 1e-6);
        let values = [
            g.center.x,
            g.center.y,
            g.center.z,
            0.0,
            0.0,
            0.0,
            logit(opacity),
            g.scale.x.ln(),
            g.scale.y.ln(),
            g.scale.z.ln(),
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        for v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
