//! PLY point clouds, ASCII and binary little-endian.
//!
//! Only the `vertex` element is kept; other elements (faces, lists) are
//! parsed and skipped. Recognized vertex properties: `x y z`, `gps_time`,
//! `classification` or `label`, `intensity`, `nx ny nz`.

use std::path::Path;

use mlsreg_core::geometry::Normal;
use mlsreg_core::{Point3, PointCloud, UnitVector3};
use nalgebra::Vector3;

use crate::error::{io_err, Error, PlyErrorKind, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
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

    fn name(self) -> &'static str {
        match self {
            Scalar::I8 => "char",
            Scalar::U8 => "uchar",
            Scalar::I16 => "short",
            Scalar::U16 => "ushort",
            Scalar::I32 => "int",
            Scalar::U32 => "uint",
            Scalar::F32 => "float",
            Scalar::F64 => "double",
        }
    }

    fn size(self) -> usize {
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

    fn decode(self, b: &[u8]) -> f64 {
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

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Scalar::I8 => out.push(v as i8 as u8),
            Scalar::U8 => out.push(v as u8),
            Scalar::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Scalar::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Scalar::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            Scalar::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            Scalar::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Scalar::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    /// Whether `v` is representable; integers must be whole and in range.
    fn accepts(self, v: f64) -> bool {
        let range = match self {
            Scalar::I8 => (i8::MIN as f64, i8::MAX as f64),
            Scalar::U8 => (0.0, u8::MAX as f64),
            Scalar::I16 => (i16::MIN as f64, i16::MAX as f64),
            Scalar::U16 => (0.0, u16::MAX as f64),
            Scalar::I32 => (i32::MIN as f64, i32::MAX as f64),
            Scalar::U32 => (0.0, u32::MAX as f64),
            Scalar::F32 | Scalar::F64 => return true,
        };
        v.fract() == 0.0 && v >= range.0 && v <= range.1
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Decoded `vertex` element, one column per scalar property.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyTable {
    pub format: PlyFormat,
    pub vertex_count: usize,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl PlyTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

struct Decoder<'a> {
    path: &'a Path,
}

impl Decoder<'_> {
    fn err(&self, kind: PlyErrorKind, line: Option<usize>, byte: Option<u64>, message: impl Into<String>) -> Error {
        Error::Ply {
            path: self.path.to_path_buf(),
            kind,
            line,
            byte,
            message: message.into(),
        }
    }

    fn header(&self, bytes: &[u8]) -> Result<(PlyFormat, Vec<Element>, usize, usize)> {
        let mut offset = 0usize;
        let mut line_no = 0usize;
        let mut format = None;
        let mut elements: Vec<Element> = Vec::new();
        loop {
            let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
                return Err(self.err(
                    PlyErrorKind::MalformedHeader,
                    Some(line_no + 1),
                    Some(offset as u64),
                    "header ends before end_header",
                ));
            };
            line_no += 1;
            let raw = &bytes[offset..offset + len];
            let start = offset;
            offset += len + 1;
            let malformed = |msg: String| self.err(PlyErrorKind::MalformedHeader, Some(line_no), Some(start as u64), msg);
            let text = std::str::from_utf8(raw)
                .map_err(|_| malformed("header line is not text".into()))?
                .trim_end_matches('\r');
            let words: Vec<&str> = text.split_whitespace().collect();
            if line_no == 1 {
                if text != "ply" {
                    return Err(malformed("file does not start with `ply`".into()));
                }
                continue;
            }
            match words.as_slice() {
                [] => {}
                ["comment", ..] | ["obj_info", ..] => {}
                ["format", f, "1.0"] => {
                    format = Some(match *f {
                        "ascii" => PlyFormat::Ascii,
                        "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                        other => return Err(malformed(format!("unsupported format `{other}`"))),
                    })
                }
                ["element", name, count] => {
                    let count = count
                        .parse::<usize>()
                        .map_err(|_| malformed(format!("bad element count `{count}`")))?;
                    elements.push(Element {
                        name: name.to_string(),
                        count,
                        properties: Vec::new(),
                    });
                }
                ["property", "list", count, item, _name] => {
                    let el = elements
                        .last_mut()
                        .ok_or_else(|| malformed("property before any element".into()))?;
                    let parse = |t: &str| {
                        Scalar::parse(t).ok_or_else(|| {
                            self.err(
                                PlyErrorKind::UnsupportedProperty,
                                Some(line_no),
                                Some(start as u64),
                                format!("unsupported list type `{t}`"),
                            )
                        })
                    };
                    let (count, item) = (parse(count)?, parse(item)?);
                    if !count.is_integer() {
                        return Err(malformed("list count type must be an integer".into()));
                    }
                    el.properties.push(Property::List { count, item });
                }
                ["property", ty, name] => {
                    let el = elements
                        .last_mut()
                        .ok_or_else(|| malformed("property before any element".into()))?;
                    let ty = Scalar::parse(ty).ok_or_else(|| {
                        self.err(
                            PlyErrorKind::UnsupportedProperty,
                            Some(line_no),
                            Some(start as u64),
                            format!("property `{name}` has unsupported type `{ty}`"),
                        )
                    })?;
                    el.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
                ["end_header"] => break,
                _ => return Err(malformed(format!("unrecognized header line `{text}`"))),
            }
        }
        let format = format.ok_or_else(|| {
            self.err(PlyErrorKind::MalformedHeader, Some(line_no), None, "missing format line")
        })?;
        Ok((format, elements, offset, line_no))
    }

    fn decode(&self, bytes: &[u8]) -> Result<PlyTable> {
        let (format, elements, body, header_lines) = self.header(bytes)?;
        let Some(vertex_at) = elements.iter().position(|e| e.name == "vertex") else {
            return Err(self.err(PlyErrorKind::MissingProperty, None, None, "no vertex element"));
        };
        let mut columns: Vec<(String, Vec<f64>)> = elements[vertex_at]
            .properties
            .iter()
            .filter_map(|p| match p {
                Property::Scalar { name, .. } => Some((name.clone(), Vec::with_capacity(elements[vertex_at].count.min(1 << 20)))),
                Property::List { .. } => None,
            })
            .collect();
        match format {
            PlyFormat::Ascii => self.ascii_body(bytes, body, header_lines, &elements, vertex_at, &mut columns)?,
            PlyFormat::BinaryLittleEndian => self.binary_body(bytes, body, &elements, vertex_at, &mut columns)?,
        }
        Ok(PlyTable {
            format,
            vertex_count: elements[vertex_at].count,
            columns,
        })
    }

    fn ascii_body(
        &self,
        bytes: &[u8],
        body: usize,
        header_lines: usize,
        elements: &[Element],
        vertex_at: usize,
        columns: &mut [(String, Vec<f64>)],
    ) -> Result<()> {
        let mut offset = body;
        let mut line_no = header_lines;
        let mut next_line = |offset: &mut usize| -> Option<(usize, usize, &[u8])> {
            while *offset < bytes.len() {
                let len = bytes[*offset..].iter().position(|&b| b == b'\n').unwrap_or(bytes.len() - *offset);
                let start = *offset;
                *offset += len + 1;
                line_no += 1;
                let raw = &bytes[start..start + len];
                if raw.iter().any(|b| !b.is_ascii_whitespace()) {
                    return Some((line_no, start, raw));
                }
            }
            None
        };
        for (ei, el) in elements.iter().enumerate() {
            for row in 0..el.count {
                let Some((line, start, raw)) = next_line(&mut offset) else {
                    return Err(self.err(
                        PlyErrorKind::Truncated,
                        None,
                        Some(bytes.len() as u64),
                        format!("element `{}` ends after {row} of {} rows", el.name, el.count),
                    ));
                };
                let bad = |msg: String| self.err(PlyErrorKind::MalformedValue, Some(line), Some(start as u64), msg);
                let text = std::str::from_utf8(raw).map_err(|_| bad("row is not text".into()))?;
                let mut tokens = text.split_whitespace();
                let mut take = |ty: Scalar| -> Result<f64> {
                    let tok = tokens.next().ok_or_else(|| bad("too few values".into()))?;
                    let v: f64 = tok.parse().map_err(|_| bad(format!("`{tok}` is not a number")))?;
                    if !ty.accepts(v) {
                        return Err(bad(format!("`{tok}` does not fit {}", ty.name())));
                    }
                    Ok(v)
                };
                let mut col = 0;
                for p in &el.properties {
                    match p {
                        Property::Scalar { ty, .. } => {
                            let v = take(*ty)?;
                            if ei == vertex_at {
                                columns[col].1.push(v);
                                col += 1;
                            }
                        }
                        Property::List { count, item } => {
                            let n = take(*count)?;
                            if n < 0.0 {
                                return Err(bad("negative list length".into()));
                            }
                            for _ in 0..n as usize {
                                take(*item)?;
                            }
                        }
                    }
                }
                if tokens.next().is_some() {
                    return Err(bad("too many values".into()));
                }
            }
        }
        Ok(())
    }

    fn binary_body(
        &self,
        bytes: &[u8],
        body: usize,
        elements: &[Element],
        vertex_at: usize,
        columns: &mut [(String, Vec<f64>)],
    ) -> Result<()> {
        let mut offset = body;
        let truncated = |offset: usize, el: &Element, row: usize| {
            self.err(
                PlyErrorKind::Truncated,
                None,
                Some(offset as u64),
                format!("element `{}` ends after {row} of {} rows", el.name, el.count),
            )
        };
        for (ei, el) in elements.iter().enumerate() {
            let fixed = el.properties.iter().all(|p| matches!(p, Property::Scalar { .. }));
            if fixed {
                let row: usize = el
                    .properties
                    .iter()
                    .map(|p| match p {
                        Property::Scalar { ty, .. } => ty.size(),
                        Property::List { .. } => 0,
                    })
                    .sum();
                let needed = row.checked_mul(el.count).and_then(|n| n.checked_add(offset));
                if needed.is_none_or(|n| n > bytes.len()) {
                    let complete = (bytes.len() - offset).checked_div(row).unwrap_or(0);
                    return Err(truncated(offset + complete * row, el, complete));
                }
            }
            for r in 0..el.count {
                let mut col = 0;
                for p in &el.properties {
                    match p {
                        Property::Scalar { ty, .. } => {
                            let end = offset + ty.size();
                            if end > bytes.len() {
                                return Err(truncated(offset, el, r));
                            }
                            if ei == vertex_at {
                                columns[col].1.push(ty.decode(&bytes[offset..end]));
                                col += 1;
                            }
                            offset = end;
                        }
                        Property::List { count, item } => {
                            let end = offset + count.size();
                            if end > bytes.len() {
                                return Err(truncated(offset, el, r));
                            }
                            let n = count.decode(&bytes[offset..end]);
                            if n < 0.0 {
                                return Err(self.err(
                                    PlyErrorKind::MalformedValue,
                                    None,
                                    Some(offset as u64),
                                    "negative list length",
                                ));
                            }
                            let skip = (n as usize).saturating_mul(item.size());
                            match end.checked_add(skip) {
                                Some(e) if e <= bytes.len() => offset = e,
                                _ => return Err(truncated(end, el, r)),
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses PLY bytes; `path` only labels diagnostics.
pub fn decode_ply(bytes: &[u8], path: &Path) -> Result<PlyTable> {
    Decoder { path }.decode(bytes)
}

pub fn read_ply_table(path: &Path) -> Result<PlyTable> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_ply(&bytes, path)
}

/// Maps recognized vertex properties onto a point cloud.
pub fn cloud_from_table(table: &PlyTable, name: &str, path: &Path) -> Result<PointCloud> {
    let missing = |what: &str| Error::Ply {
        path: path.to_path_buf(),
        kind: PlyErrorKind::MissingProperty,
        line: None,
        byte: None,
        message: format!("vertex element has no `{what}` property"),
    };
    let x = table.column("x").ok_or_else(|| missing("x"))?;
    let y = table.column("y").ok_or_else(|| missing("y"))?;
    let z = table.column("z").ok_or_else(|| missing("z"))?;
    let time = table.column("gps_time");
    let label = table.column("classification").or_else(|| table.column("label"));
    let intensity = table.column("intensity");
    let normals = match (table.column("nx"), table.column("ny"), table.column("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        (None, None, None) => None,
        _ => return Err(missing("nx/ny/nz (all three)")),
    };
    if let Some(l) = label {
        if let Some(bad) = l.iter().find(|v| !Scalar::U16.accepts(**v)) {
            return Err(Error::Ply {
                path: path.to_path_buf(),
                kind: PlyErrorKind::MalformedValue,
                line: None,
                byte: None,
                message: format!("class label {bad} is not a 16-bit unsigned integer"),
            });
        }
    }
    let points = (0..table.vertex_count)
        .map(|i| Point3 {
            position: Vector3::new(x[i], y[i], z[i]),
            gps_time: time.map(|t| t[i]),
            class_label: label.map(|l| l[i] as u16),
            intensity: intensity.map(|v| v[i]),
        })
        .collect();
    let mut cloud = PointCloud::new(name, points);
    if let Some((a, b, c)) = normals {
        let n: Vec<Normal> = (0..table.vertex_count)
            .map(|i| decode_normal(Vector3::new(a[i], b[i], c[i])))
            .collect();
        cloud = cloud.with_normals(n)?;
    }
    Ok(cloud)
}

fn decode_normal(v: Vector3<f64>) -> Normal {
    if v == Vector3::zeros() || !v.iter().all(|c| c.is_finite()) {
        None
    } else if (v.norm() - 1.0).abs() < 1e-6 {
        Some(UnitVector3::new_unchecked(v))
    } else {
        UnitVector3::new(v)
    }
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    cloud_from_table(&read_ply_table(path)?, &stem(path), path)
}

/// One vertex property to write.
pub(crate) struct Column<'a> {
    name: &'a str,
    ty: Scalar,
    values: Vec<f64>,
}

pub(crate) fn encode_ply(columns: &[Column<'_>], rows: usize, format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(match format {
        PlyFormat::Ascii => b"format ascii 1.0\n".as_slice(),
        PlyFormat::BinaryLittleEndian => b"format binary_little_endian 1.0\n".as_slice(),
    });
    out.extend_from_slice(format!("element vertex {rows}\n").as_bytes());
    for c in columns {
        out.extend_from_slice(format!("property {} {}\n", c.ty.name(), c.name).as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    match format {
        PlyFormat::Ascii => {
            use std::fmt::Write;
            let mut line = String::new();
            for i in 0..rows {
                line.clear();
                for (j, c) in columns.iter().enumerate() {
                    if j > 0 {
                        line.push(' ');
                    }
                    // `Display` for f64 is the shortest string that parses back exactly.
                    let _ = write!(line, "{}", c.values[i]);
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for i in 0..rows {
                for c in columns {
                    c.ty.encode(c.values[i], &mut out);
                }
            }
        }
    }
    out
}

fn cloud_columns(cloud: &PointCloud) -> Vec<Column<'static>> {
    let pts = &cloud.points;
    let col = |name, ty, f: &dyn Fn(&Point3) -> f64| Column {
        name,
        ty,
        values: pts.iter().map(f).collect(),
    };
    let mut cols = vec![
        col("x", Scalar::F64, &|p| p.position.x),
        col("y", Scalar::F64, &|p| p.position.y),
        col("z", Scalar::F64, &|p| p.position.z),
    ];
    if cloud.has_times() {
        cols.push(col("gps_time", Scalar::F64, &|p| p.gps_time.unwrap_or(0.0)));
    }
    if cloud.has_labels() {
        cols.push(col("classification", Scalar::U16, &|p| p.class_label.unwrap_or(0) as f64));
    }
    if !pts.is_empty() && pts.iter().all(|p| p.intensity.is_some()) {
        cols.push(col("intensity", Scalar::F64, &|p| p.intensity.unwrap_or(0.0)));
    }
    if let Some(normals) = &cloud.normals {
        for (k, name) in ["nx", "ny", "nz"].into_iter().enumerate() {
            cols.push(Column {
                name,
                ty: Scalar::F64,
                values: normals.iter().map(|n| n.map_or(0.0, |n| n[k])).collect(),
            });
        }
    }
    cols
}

/// Writes positions and every attribute present on all points, as doubles
/// (labels as `ushort`). Missing normals are written as zero vectors.
pub fn write_ply(cloud: &PointCloud, path: &Path, format: PlyFormat) -> Result<()> {
    let bytes = encode_ply(&cloud_columns(cloud), cloud.len(), format);
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Trajectory samples with `red green blue` vertex colors.
pub fn write_colored_points(points: &[(Vector3<f64>, [u8; 3])], path: &Path, format: PlyFormat) -> Result<()> {
    let mut cols: Vec<Column<'static>> = ["x", "y", "z"]
        .into_iter()
        .enumerate()
        .map(|(k, name)| Column {
            name,
            ty: Scalar::F64,
            values: points.iter().map(|(p, _)| p[k]).collect(),
        })
        .collect();
    for (k, name) in ["red", "green", "blue"].into_iter().enumerate() {
        cols.push(Column {
            name,
            ty: Scalar::U8,
            values: points.iter().map(|(_, c)| c[k] as f64).collect(),
        });
    }
    std::fs::write(path, encode_ply(&cols, points.len(), format)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.ply")
    }

    fn kind(r: Result<PlyTable>) -> (PlyErrorKind, Option<usize>, Option<u64>) {
        match r {
            Err(Error::Ply { kind, line, byte, .. }) => (kind, line, byte),
            other => panic!("expected a PLY error, got {other:?}"),
        }
    }

    #[test]
    fn three_point_ascii_has_no_attributes() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0.5\n";
        let t = decode_ply(text.as_bytes(), p()).unwrap();
        let c = cloud_from_table(&t, "c", p()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points[2].position, Vector3::new(0.0, 1.0, 0.5));
        assert!(c.normals.is_none() && !c.has_times() && !c.has_labels());
    }

    #[test]
    fn binary_normals_are_populated() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nproperty float nx\nproperty float ny\nproperty float nz\nend_header\n".to_vec();
        for row in [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]] {
            for v in row {
                bytes.extend_from_slice(&f64::to_le_bytes(v));
            }
            for v in [0.0f32, 0.0, 1.0] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let c = cloud_from_table(&decode_ply(&bytes, p()).unwrap(), "b", p()).unwrap();
        let n = c.normals.unwrap();
        assert_eq!(n.len(), 2);
        assert_eq!(n[1].unwrap().into_inner(), Vector3::z());
    }

    #[test]
    fn faces_and_comments_are_skipped() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nproperty uchar classification\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n1 2 3 6\n3 0 0 0\n";
        let c = cloud_from_table(&decode_ply(text.as_bytes(), p()).unwrap(), "f", p()).unwrap();
        assert_eq!(c.points[0].class_label, Some(6));
    }

    #[test]
    fn diagnostics_are_distinct_and_located() {
        let bad_magic = "plx\nformat ascii 1.0\n";
        assert_eq!(kind(decode_ply(bad_magic.as_bytes(), p())), (PlyErrorKind::MalformedHeader, Some(1), Some(0)));

        let bad_type = "ply\nformat ascii 1.0\nelement vertex 1\nproperty int64 x\nend_header\n";
        let (k, line, _) = kind(decode_ply(bad_type.as_bytes(), p()));
        assert_eq!((k, line), (PlyErrorKind::UnsupportedProperty, Some(4)));

        let short_ascii = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 3\n";
        assert_eq!(kind(decode_ply(short_ascii.as_bytes(), p())).0, PlyErrorKind::Truncated);

        let bad_value = "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 two 3\n";
        let (k, line, byte) = kind(decode_ply(bad_value.as_bytes(), p()));
        assert_eq!((k, line), (PlyErrorKind::MalformedValue, Some(8)));
        assert_eq!(byte, Some(bad_value.find("1 two").unwrap() as u64));

        let mut short_bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n".to_vec();
        let body = short_bin.len();
        short_bin.extend_from_slice(&[0u8; 30]);
        let (k, _, byte) = kind(decode_ply(&short_bin, p()));
        assert_eq!(k, PlyErrorKind::Truncated);
        assert_eq!(byte, Some(body as u64 + 24));

        let no_end = "ply\nformat ascii 1.0\nelement vertex 1\n";
        assert_eq!(kind(decode_ply(no_end.as_bytes(), p())).0, PlyErrorKind::MalformedHeader);
    }

    #[test]
    fn missing_coordinates_are_reported() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nend_header\n1 2\n";
        let t = decode_ply(text.as_bytes(), p()).unwrap();
        assert!(matches!(
            cloud_from_table(&t, "m", p()),
            Err(Error::Ply { kind: PlyErrorKind::MissingProperty, .. })
        ));
    }

    #[test]
    fn huge_declared_counts_fail_cleanly() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 18446744073709551615\nproperty double x\nend_header\n";
        assert_eq!(kind(decode_ply(text.as_bytes(), p())).0, PlyErrorKind::Truncated);
    }
}
