//! OBJ and PLY (ASCII and binary) mesh readers, plus minimal writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use regiontrack_core::geometry::Vec3;
use regiontrack_core::TriangleMesh;

use crate::error::{Error, Result};

/// Loads an OBJ or PLY file, chosen by extension. The mesh is recentred on
/// its vertex centroid; degenerate triangles are dropped with a warning.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let (v, t) = match ext.as_str() {
        "obj" => parse_obj(path, &data)?,
        "ply" => parse_ply(path, &data)?,
        _ => return Err(Error::Invalid(format!("{}: unknown mesh format", path.display()))),
    };
    if v.is_empty() || t.is_empty() {
        return Err(Error::parse(path, 0, "mesh has no vertices or faces"));
    }
    Ok(TriangleMesh::new(v, t)?)
}

fn fan(path: &Path, line: usize, poly: &[u32], out: &mut Vec<[u32; 3]>) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::parse(path, line, "face with fewer than 3 vertices"));
    }
    for k in 1..poly.len() - 1 {
        out.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

pub fn parse_obj(path: &Path, data: &[u8]) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let text = std::str::from_utf8(data).map_err(|_| Error::parse(path, 0, "not UTF-8"))?;
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, ln, "bad vertex coordinate"))?;
                if c.len() != 3 {
                    return Err(Error::parse(path, ln, "vertex needs 3 coordinates"));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let idx: i64 = tok
                        .split('/')
                        .next()
                        .unwrap_or("")
                        .parse()
                        .map_err(|_| Error::parse(path, ln, "bad face index"))?;
                    let resolved = if idx < 0 { verts.len() as i64 + idx } else { idx - 1 };
                    if resolved < 0 || resolved >= verts.len() as i64 {
                        return Err(Error::parse(path, ln, "face index out of range"));
                    }
                    poly.push(resolved as u32);
                }
                fan(path, ln, &poly, &mut tris)?;
            }
            _ => {}
        }
    }
    Ok((verts, tris))
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn read(self, b: &[u8], big: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().unwrap();
                (if big { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Clone, Debug)]
enum Prop {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

#[derive(Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    Little,
    Big,
}

pub fn parse_ply(path: &Path, data: &[u8]) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= data.len() {
            return None;
        }
        let end = data[*pos..].iter().position(|&c| c == b'\n').map_or(data.len(), |e| *pos + e);
        let s = String::from_utf8_lossy(&data[*pos..end]).trim().to_string();
        *pos = (end + 1).min(data.len());
        line_no += 1;
        Some(s)
    };
    if next_line(&mut pos).as_deref() != Some("ply") {
        return Err(Error::parse(path, 1, "missing ply magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut ln = 1;
    loop {
        let Some(line) = next_line(&mut pos) else {
            return Err(Error::parse(path, ln, "header not terminated"));
        };
        ln += 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.first().copied() {
            Some("format") => {
                format = Some(match tok.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::Little,
                    Some("binary_big_endian") => PlyFormat::Big,
                    _ => return Err(Error::parse(path, ln, "unknown ply format")),
                })
            }
            Some("element") => {
                let (Some(name), Some(count)) = (tok.get(1), tok.get(2).and_then(|c| c.parse().ok())) else {
                    return Err(Error::parse(path, ln, "bad element line"));
                };
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, ln, "property before element"))?;
                let bad = || Error::parse(path, ln, "bad property line");
                if tok.get(1) == Some(&"list") {
                    let c = tok.get(2).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    let v = tok.get(3).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    el.props.push(Prop::List(tok.get(4).ok_or_else(bad)?.to_string(), c, v));
                } else {
                    let t = tok.get(1).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    el.props.push(Prop::Scalar(tok.get(2).ok_or_else(bad)?.to_string(), t));
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, ln, "missing format line"))?;
    let body = &data[pos..];

    let mut verts = Vec::new();
    let mut tris = Vec::new();
    let mut reader = BodyReader {
        path,
        body,
        pos: 0,
        format,
        words: None,
    };
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            let mut poly: Vec<u32> = Vec::new();
            for p in &el.props {
                match p {
                    Prop::Scalar(name, t) => {
                        let v = reader.value(*t)?;
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            _ => {}
                        }
                    }
                    Prop::List(name, ct, vt) => {
                        let n = reader.value(*ct)? as usize;
                        let keep = name == "vertex_indices" || name == "vertex_index";
                        for _ in 0..n {
                            let v = reader.value(*vt)?;
                            if keep {
                                poly.push(v as u32);
                            }
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => verts.push(Vec3::new(xyz[0], xyz[1], xyz[2])),
                "face" => {
                    if poly.iter().any(|&i| i as usize >= verts.len()) {
                        return Err(Error::parse(path, 0, "face index out of range"));
                    }
                    fan(path, 0, &poly, &mut tris)?;
                }
                _ => {}
            }
        }
    }
    Ok((verts, tris))
}

struct BodyReader<'a> {
    path: &'a Path,
    body: &'a [u8],
    pos: usize,
    format: PlyFormat,
    words: Option<std::vec::IntoIter<String>>,
}

impl BodyReader<'_> {
    fn value(&mut self, t: Scalar) -> Result<f64> {
        match self.format {
            PlyFormat::Ascii => {
                if self.words.is_none() {
                    let text = String::from_utf8_lossy(&self.body[self.pos..]).into_owned();
                    let w: Vec<String> = text.split_whitespace().map(str::to_string).collect();
                    self.words = Some(w.into_iter());
                }
                let w = self
                    .words
                    .as_mut()
                    .unwrap()
                    .next()
                    .ok_or_else(|| Error::parse(self.path, 0, "truncated ply body"))?;
                w.parse().map_err(|_| Error::parse(self.path, 0, format!("bad number {w:?}")))
            }
            f => {
                let n = t.size();
                if self.pos + n > self.body.len() {
                    return Err(Error::parse(self.path, 0, "truncated ply body"));
                }
                let v = t.read(&self.body[self.pos..], f == PlyFormat::Big);
                self.pos += n;
                Ok(v)
            }
        }
    }
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut s = String::new();
    for v in &mesh.vertices {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Binary little-endian PLY with float vertices and uchar/int face lists.
pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = Vec::new();
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )
    .unwrap();
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        out.push(3);
        for i in t {
            out.extend_from_slice(&(*i as i32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
