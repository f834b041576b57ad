//! Labeled point-cloud PLY reader/writer.
//!
//! Handles `ascii 1.0` and `binary_little_endian 1.0`. Vertex properties are
//! discovered by name (`x`,`y`,`z`, `red`,`green`,`blue`,
//! `label`|`semantic_label`, `instance`|`instance_label`); anything else,
//! including other elements, is skipped. Missing color or label properties
//! read as 0.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed PLY header at byte {offset}: {message}")]
    MalformedHeader { offset: usize, message: String },
    #[error("unsupported PLY encoding '{encoding}' at byte {offset}")]
    UnsupportedEncoding { offset: usize, encoding: String },
    #[error("truncated PLY body at byte {offset}: {message}")]
    TruncatedBody { offset: usize, message: String },
    #[error("invalid PLY value at byte {offset}: {message}")]
    InvalidValue { offset: usize, message: String },
    #[error("empty point cloud")]
    Empty,
    #[error("io error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Vec3,
    pub color: [u8; 3],
    pub semantic_label: i64,
    pub instance_label: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    points: Vec<LabeledPoint>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<LabeledPoint>) -> Result<Self, PlyError> {
        if points.is_empty() {
            return Err(PlyError::Empty);
        }
        if let Some(i) = points.iter().position(|p| !p.position.is_finite()) {
            return Err(PlyError::InvalidValue { offset: 0, message: format!("point {i} has a non-finite position") });
        }
        Ok(LabeledPointCloud { points })
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let first = self.points[0].position;
        self.points.iter().fold((first, first), |(lo, hi), p| (lo.min(p.position), hi.max(p.position)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Scalar> {
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

    fn width(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }

    /// Parses an ASCII token at this scalar's precision, widened to f64.
    fn parse_text(self, tok: &str) -> Option<f64> {
        match self {
            Scalar::F32 => tok.parse::<f32>().ok().map(f64::from),
            Scalar::F64 => tok.parse::<f64>().ok(),
            _ => tok.parse::<i64>().ok().map(|v| v as f64),
        }
    }
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut offset = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut line_no = 0usize;
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(PlyError::MalformedHeader { offset, message: "missing end_header".into() });
        };
        let raw = std::str::from_utf8(&rest[..nl])
            .map_err(|_| PlyError::MalformedHeader { offset, message: "header is not valid UTF-8".into() })?;
        let line = raw.trim_end_matches('\r').trim();
        let line_offset = offset;
        offset += nl + 1;
        line_no += 1;
        let mut toks = line.split_whitespace();
        let Some(kw) = toks.next() else { continue };
        let malformed = |message: String| PlyError::MalformedHeader { offset: line_offset, message };
        if line_no == 1 {
            if line != "ply" {
                return Err(malformed("file does not start with 'ply'".into()));
            }
            continue;
        }
        match kw {
            "format" => {
                let enc = toks.next().unwrap_or_default();
                encoding = Some(match enc {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    other => {
                        return Err(PlyError::UnsupportedEncoding { offset: line_offset, encoding: other.to_string() })
                    }
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = toks.next().ok_or_else(|| malformed("element without name".into()))?;
                let count = toks
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| malformed(format!("element '{name}' has no valid count")))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            "property" => {
                let el = elements.last_mut().ok_or_else(|| malformed("property before any element".into()))?;
                let t = toks.next().ok_or_else(|| malformed("property without type".into()))?;
                let kind = if t == "list" {
                    let c = toks.next().and_then(Scalar::parse);
                    let i = toks.next().and_then(Scalar::parse);
                    match (c, i) {
                        (Some(count), Some(item)) if count.is_integer() => PropKind::List { count, item },
                        _ => return Err(malformed("bad list property types".into())),
                    }
                } else {
                    PropKind::Scalar(Scalar::parse(t).ok_or_else(|| malformed(format!("unknown property type '{t}'")))?)
                };
                let name = toks.next().ok_or_else(|| malformed("property without name".into()))?;
                el.props.push(Property { name: name.to_string(), kind });
            }
            "end_header" => break,
            other => return Err(malformed(format!("unexpected header keyword '{other}'"))),
        }
    }
    let encoding = encoding.ok_or(PlyError::MalformedHeader { offset: 0, message: "missing format line".into() })?;
    Ok(Header { encoding, elements, body_offset: offset })
}

/// Column indices of the recognized vertex properties.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [Option<usize>; 3],
    semantic: Option<usize>,
    instance: Option<usize>,
}

impl VertexLayout {
    fn resolve(el: &Element, header_end: usize) -> Result<Self, PlyError> {
        let find = |names: &[&str]| el.props.iter().position(|p| names.contains(&p.name.as_str()));
        let scalar_at = |idx: Option<usize>| -> Result<Option<usize>, PlyError> {
            match idx {
                Some(i) if matches!(el.props[i].kind, PropKind::List { .. }) => Err(PlyError::MalformedHeader {
                    offset: header_end,
                    message: format!("vertex property '{}' must be scalar", el.props[i].name),
                }),
                other => Ok(other),
            }
        };
        let mut xyz = [0usize; 3];
        for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
            *slot = scalar_at(find(&[name]))?.ok_or_else(|| PlyError::MalformedHeader {
                offset: header_end,
                message: format!("vertex element lacks property '{name}'"),
            })?;
        }
        Ok(VertexLayout {
            xyz,
            rgb: [scalar_at(find(&["red"]))?, scalar_at(find(&["green"]))?, scalar_at(find(&["blue"]))?],
            semantic: scalar_at(find(&["label", "semantic_label"]))?,
            instance: scalar_at(find(&["instance", "instance_label"]))?,
        })
    }

    fn build(&self, row: &[f64], offset: usize) -> Result<LabeledPoint, PlyError> {
        let position = Vec3::new(row[self.xyz[0]], row[self.xyz[1]], row[self.xyz[2]]);
        if !position.is_finite() {
            return Err(PlyError::InvalidValue { offset, message: "non-finite vertex position".into() });
        }
        let color = self.rgb.map(|c| c.map_or(0, |i| row[i].clamp(0.0, 255.0) as u8));
        let semantic_label = self.semantic.map_or(0, |i| row[i] as i64);
        let instance = self.instance.map_or(0.0, |i| row[i]);
        if instance < 0.0 || instance > u32::MAX as f64 {
            return Err(PlyError::InvalidValue { offset, message: format!("instance label {instance} out of range") });
        }
        Ok(LabeledPoint { position, color, semantic_label, instance_label: instance as u32 })
    }
}

pub fn parse_ply_bytes(bytes: &[u8]) -> Result<LabeledPointCloud, PlyError> {
    let header = parse_header(bytes)?;
    let vidx = header.elements.iter().position(|e| e.name == "vertex").ok_or(PlyError::MalformedHeader {
        offset: header.body_offset,
        message: "no vertex element".into(),
    })?;
    let layout = VertexLayout::resolve(&header.elements[vidx], header.body_offset)?;
    let points = match header.encoding {
        Encoding::Ascii => read_ascii(bytes, &header, vidx, &layout)?,
        Encoding::BinaryLe => read_binary_le(bytes, &header, vidx, &layout)?,
    };
    LabeledPointCloud::new(points)
}

pub fn parse_ply(path: impl AsRef<Path>) -> Result<LabeledPointCloud, PlyError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| PlyError::Io { path: path.display().to_string(), source })?;
    parse_ply_bytes(&bytes)
}

struct AsciiTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> AsciiTokens<'a> {
    fn next_token(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| (start, std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("")))
    }

    fn value(&mut self, ty: Scalar, el: &str, idx: usize) -> Result<f64, PlyError> {
        let (off, tok) = self.next_token().ok_or_else(|| PlyError::TruncatedBody {
            offset: self.bytes.len(),
            message: format!("expected {el} #{idx}, found end of file"),
        })?;
        ty.parse_text(tok).ok_or_else(|| PlyError::InvalidValue { offset: off, message: format!("cannot parse '{tok}'") })
    }
}

fn read_ascii(bytes: &[u8], header: &Header, vidx: usize, layout: &VertexLayout) -> Result<Vec<LabeledPoint>, PlyError> {
    let mut toks = AsciiTokens { bytes, pos: header.body_offset };
    let mut points = Vec::new();
    for (ei, el) in header.elements.iter().enumerate() {
        if ei > vidx {
            break;
        }
        if ei == vidx {
            points.reserve(el.count);
        }
        let mut row = vec![0.0; el.props.len()];
        for n in 0..el.count {
            let row_offset = toks.pos;
            for (pi, p) in el.props.iter().enumerate() {
                match p.kind {
                    PropKind::Scalar(s) => row[pi] = toks.value(s, &el.name, n)?,
                    PropKind::List { count, item } => {
                        let len = toks.value(count, &el.name, n)?;
                        for _ in 0..len.max(0.0) as usize {
                            toks.value(item, &el.name, n)?;
                        }
                    }
                }
            }
            if ei == vidx {
                points.push(layout.build(&row, row_offset)?);
            }
        }
    }
    Ok(points)
}

fn read_binary_le(
    bytes: &[u8],
    header: &Header,
    vidx: usize,
    layout: &VertexLayout,
) -> Result<Vec<LabeledPoint>, PlyError> {
    let mut pos = header.body_offset;
    let take = |pos: &mut usize, width: usize, el: &str, idx: usize| -> Result<usize, PlyError> {
        if *pos + width > bytes.len() {
            return Err(PlyError::TruncatedBody {
                offset: bytes.len(),
                message: format!("{el} #{idx} needs {width} more bytes at offset {}", *pos),
            });
        }
        let at = *pos;
        *pos += width;
        Ok(at)
    };
    let mut points = Vec::new();
    for (ei, el) in header.elements.iter().enumerate() {
        if ei > vidx {
            break;
        }
        let mut row = vec![0.0; el.props.len()];
        for n in 0..el.count {
            let row_offset = pos;
            for (pi, p) in el.props.iter().enumerate() {
                match p.kind {
                    PropKind::Scalar(s) => {
                        let at = take(&mut pos, s.width(), &el.name, n)?;
                        row[pi] = s.read_le(&bytes[at..]);
                    }
                    PropKind::List { count, item } => {
                        let at = take(&mut pos, count.width(), &el.name, n)?;
                        let len = count.read_le(&bytes[at..]).max(0.0) as usize;
                        take(&mut pos, len * item.width(), &el.name, n)?;
                    }
                }
            }
            if ei == vidx {
                points.push(layout.build(&row, row_offset)?);
            }
        }
    }
    Ok(points)
}

/// Output encodings supported by [`write_ply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Writes a labeled cloud with float32 positions, uchar colors and int32 labels.
pub fn write_ply<W: Write>(mut out: W, points: &[LabeledPoint], format: PlyFormat) -> std::io::Result<()> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        out,
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nproperty int label\nproperty int instance\nend_header\n",
        points.len()
    )?;
    for p in points {
        let xyz = [p.position.x as f32, p.position.y as f32, p.position.z as f32];
        match format {
            PlyFormat::Ascii => writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                xyz[0], xyz[1], xyz[2], p.color[0], p.color[1], p.color[2], p.semantic_label, p.instance_label
            )?,
            PlyFormat::BinaryLittleEndian => {
                for v in xyz {
                    out.write_all(&v.to_le_bytes())?;
                }
                out.write_all(&p.color)?;
                out.write_all(&(p.semantic_label as i32).to_le_bytes())?;
                out.write_all(&(p.instance_label as i32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}
