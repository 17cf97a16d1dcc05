//! File formats: PGM/PPM rasters, DPTH depth maps, `cameras.txt`, OBJ meshes
//! with flag channels, `.hstr` strand files and ORNT field dumps.
//!
//! Every writer is canonical: loading a file and writing it back produces
//! the same bytes as the writer produced the first time.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Matrix3;

use super::camera::{Camera, Intrinsics};
use super::raster::Raster;
use super::strand::{Strand, StrandSet};
use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use crate::Vec3;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::ingest(path, e.to_string()))
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| Error::ingest(path, "file is not valid UTF-8"))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- netpbm

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space(&mut self) {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&c) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&[u8]> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|c| !c.is_ascii_whitespace()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Option<usize> {
        std::str::from_utf8(self.token()?).ok()?.parse().ok()
    }
}

fn parse_netpbm<'a>(bytes: &'a [u8], magic: &[u8], channels: usize, path: &Path) -> Result<(usize, usize, &'a [u8])> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    if cur.token() != Some(magic) {
        return Err(Error::ingest(path, format!("expected {} header", String::from_utf8_lossy(magic))));
    }
    let (w, h, maxval) = match (cur.number(), cur.number(), cur.number()) {
        (Some(w), Some(h), Some(m)) => (w, h, m),
        _ => return Err(Error::ingest(path, "malformed header")),
    };
    if maxval != 255 {
        return Err(Error::ingest(path, format!("only 8-bit rasters are supported (maxval {maxval})")));
    }
    // exactly one whitespace byte separates the header from the data
    let data = &bytes[cur.pos + 1..];
    let need = w * h * channels;
    if data.len() != need {
        return Err(Error::ingest(path, format!("expected {need} data bytes for {w}x{h}, found {}", data.len())));
    }
    Ok((w, h, data))
}

pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Raster<u8>> {
    let (w, h, data) = parse_netpbm(bytes, b"P5", 1, path)?;
    Ok(Raster::from_vec(w, h, data.to_vec()))
}

pub fn encode_pgm(r: &Raster<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.data);
    out
}

pub fn parse_ppm(bytes: &[u8], path: &Path) -> Result<Raster<[u8; 3]>> {
    let (w, h, data) = parse_netpbm(bytes, b"P6", 3, path)?;
    Ok(Raster::from_vec(w, h, data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

pub fn encode_ppm(r: &Raster<[u8; 3]>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", r.width, r.height).into_bytes();
    for px in &r.data {
        out.extend_from_slice(px);
    }
    out
}

pub fn mask_to_pgm(mask: &Raster<bool>) -> Raster<u8> {
    mask.map(|&m| if m { 255 } else { 0 })
}

pub fn mask_from_pgm(r: &Raster<u8>) -> Raster<bool> {
    r.map(|&v| v > 127)
}

/// Quantizes a probability to `round(255 p)`.
pub fn prob_to_pgm(p: &Raster<f32>) -> Raster<u8> {
    p.map(|&v| (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8)
}

pub fn prob_from_pgm(r: &Raster<u8>) -> Raster<f32> {
    r.map(|&v| v as f32 / 255.0)
}

// ---------------------------------------------------------------- depth

const DEPTH_MAGIC: &[u8; 4] = b"DPTH";

pub fn encode_depth(d: &Raster<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * d.data.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(d.width as u32).to_le_bytes());
    out.extend_from_slice(&(d.height as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &d.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn parse_depth(bytes: &[u8], path: &Path) -> Result<Raster<f32>> {
    if bytes.len() < 16 || &bytes[0..4] != DEPTH_MAGIC {
        return Err(Error::ingest(path, "missing DPTH header"));
    }
    let w = le_u32(bytes, 4) as usize;
    let h = le_u32(bytes, 8) as usize;
    if le_u32(bytes, 12) != 0 {
        return Err(Error::ingest(path, "reserved header field must be 0"));
    }
    let body = &bytes[16..];
    if body.len() != 4 * w * h {
        return Err(Error::ingest(
            path,
            format!("expected {} depth bytes for {w}x{h}, found {}", 4 * w * h, body.len()),
        ));
    }
    Ok(Raster::from_vec(w, h, body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()))
}

// ---------------------------------------------------------------- cameras

/// Writes one `frame_id fx fy cx cy r11..r33 tx ty tz` line per camera.
pub fn encode_cameras(cams: &[(u32, Camera)]) -> String {
    let mut out = String::new();
    for (id, c) in cams {
        let k = &c.intrinsics;
        let r = &c.rotation;
        let t = &c.translation;
        let _ = write!(out, "{id} {} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        for i in 0..3 {
            for j in 0..3 {
                let _ = write!(out, " {}", r[(i, j)]);
            }
        }
        let _ = writeln!(out, " {} {} {}", t.x, t.y, t.z);
    }
    out
}

pub fn parse_cameras(text: &str, path: &Path) -> Result<Vec<(u32, Camera)>> {
    let mut cams = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 17 {
            return Err(Error::ingest(path, format!("line {}: expected 17 fields, found {}", ln + 1, fields.len())));
        }
        let id: u32 = fields[0].parse().map_err(|_| Error::ingest(path, format!("line {}: bad frame id", ln + 1)))?;
        let mut v = [0.0f64; 16];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| Error::ingest(path, format!("line {}: bad number `{f}`", ln + 1)))?;
        }
        let rotation = Matrix3::new(v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11], v[12]);
        cams.push((
            id,
            Camera::new(
                Intrinsics { fx: v[0], fy: v[1], cx: v[2], cy: v[3] },
                rotation,
                Vec3::new(v[13], v[14], v[15]),
            ),
        ));
    }
    Ok(cams)
}

// ---------------------------------------------------------------- OBJ

/// OBJ with `v`/`f` records and flag channels as
/// `# flag <name> <1-based vertex indices>` comment lines.
pub fn encode_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    for (name, channel) in &mesh.flags {
        out.push_str("# flag ");
        out.push_str(name);
        for (i, &set) in channel.iter().enumerate() {
            if set {
                let _ = write!(out, " {}", i + 1);
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut flag_lines: Vec<(String, Vec<usize>, usize)> = Vec::new();
    let bad = |ln: usize, what: &str| Error::ingest(path, format!("line {}: {what}", ln + 1));
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(ln, "bad vertex"))?;
                if c.len() != 3 {
                    return Err(bad(ln, "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| {
                        s.split('/')
                            .next()
                            .and_then(|i| i.parse::<i64>().ok())
                            .filter(|&i| i >= 1)
                            .map(|i| (i - 1) as u32)
                    })
                    .collect::<Option<_>>()
                    .ok_or_else(|| bad(ln, "bad face index"))?;
                if idx.len() < 3 {
                    return Err(bad(ln, "face needs 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            Some("#") if it.next() == Some("flag") => {
                let name = it.next().ok_or_else(|| bad(ln, "flag without a name"))?;
                let list: Vec<usize> = it
                    .map(|s| s.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| i - 1))
                    .collect::<Option<_>>()
                    .ok_or_else(|| bad(ln, "bad flag index"))?;
                flag_lines.push((name.to_string(), list, ln));
            }
            _ => {}
        }
    }
    let mut mesh = TriangleMesh { vertices, faces, flags: Default::default() };
    for (name, list, ln) in flag_lines {
        let mut channel = vec![false; mesh.vertices.len()];
        for i in list {
            if i >= channel.len() {
                return Err(bad(ln, "flag index out of range"));
            }
            channel[i] = true;
        }
        mesh.flags.insert(name, channel);
    }
    mesh.validate().map_err(|e| Error::ingest(path, e.to_string()))?;
    Ok(mesh)
}

// ---------------------------------------------------------------- strands

pub fn encode_hstr(set: &StrandSet) -> String {
    let mut out = String::new();
    for s in &set.strands {
        let _ = writeln!(out, "strand {}", s.len());
        for (i, v) in s.vertices().iter().enumerate() {
            let _ = write!(out, "{} {} {}", v.x, v.y, v.z);
            if let Some(c) = s.colors() {
                let _ = write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_hstr(text: &str, path: &Path, tag: &str) -> Result<StrandSet> {
    let mut strands = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    while let Some((ln, header)) = lines.next() {
        let bad = |ln: usize, what: &str| Error::ingest(path, format!("line {}: {what}", ln + 1));
        let mut it = header.split_whitespace();
        if it.next() != Some("strand") {
            return Err(bad(ln, "expected `strand <count>`"));
        }
        let count: usize = it.next().and_then(|c| c.parse().ok()).ok_or_else(|| bad(ln, "bad vertex count"))?;
        let mut verts = Vec::with_capacity(count);
        let mut colors = Vec::new();
        for _ in 0..count {
            let (vl, line) = lines.next().ok_or_else(|| bad(ln, "truncated strand"))?;
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(vl, "bad number"))?;
            match nums.len() {
                3 => {}
                6 => colors.push([nums[3], nums[4], nums[5]]),
                _ => return Err(bad(vl, "expected `x y z` or `x y z r g b`")),
            }
            verts.push(Vec3::new(nums[0], nums[1], nums[2]));
        }
        if !colors.is_empty() && colors.len() != verts.len() {
            return Err(bad(ln, "colors given for only some vertices"));
        }
        let mut s = Strand::new(verts).map_err(|e| bad(ln, &e.to_string()))?;
        if !colors.is_empty() {
            s = s.with_colors(colors)?;
        }
        strands.push(s);
    }
    Ok(StrandSet::new(strands, tag))
}

// ---------------------------------------------------------------- orientation field

const FIELD_MAGIC: &[u8; 4] = b"ORNT";

pub fn encode_field(dims: [usize; 3], values: &[Vec3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 12 * values.len());
    out.extend_from_slice(FIELD_MAGIC);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        for c in v.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    out
}

pub fn parse_field(bytes: &[u8], path: &Path) -> Result<([usize; 3], Vec<Vec3>)> {
    if bytes.len() < 16 || &bytes[0..4] != FIELD_MAGIC {
        return Err(Error::ingest(path, "missing ORNT header"));
    }
    let dims = [le_u32(bytes, 4) as usize, le_u32(bytes, 8) as usize, le_u32(bytes, 12) as usize];
    let n = dims[0] * dims[1] * dims[2];
    let body = &bytes[16..];
    if body.len() != 12 * n {
        return Err(Error::ingest(path, format!("expected {} field bytes, found {}", 12 * n, body.len())));
    }
    let f = |i: usize| f32::from_le_bytes([body[i], body[i + 1], body[i + 2], body[i + 3]]) as f64;
    Ok((dims, (0..n).map(|i| Vec3::new(f(12 * i), f(12 * i + 4), f(12 * i + 8))).collect()))
}
