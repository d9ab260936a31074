//! Minimal binary little-endian PLY reader/writer for single-element
//! (`vertex`) files with scalar properties.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyType {
    Char,
    UChar,
    Short,
    UShort,
    Int,
    UInt,
    Float,
    Double,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => PlyType::Char,
            "uchar" | "uint8" => PlyType::UChar,
            "short" | "int16" => PlyType::Short,
            "ushort" | "uint16" => PlyType::UShort,
            "int" | "int32" => PlyType::Int,
            "uint" | "uint32" => PlyType::UInt,
            "float" | "float32" => PlyType::Float,
            "double" | "float64" => PlyType::Double,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            PlyType::Char => "char",
            PlyType::UChar => "uchar",
            PlyType::Short => "short",
            PlyType::UShort => "ushort",
            PlyType::Int => "int",
            PlyType::UInt => "uint",
            PlyType::Float => "float",
            PlyType::Double => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            PlyType::Char | PlyType::UChar => 1,
            PlyType::Short | PlyType::UShort => 2,
            PlyType::Int | PlyType::UInt | PlyType::Float => 4,
            PlyType::Double => 8,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, PlyType::Float | PlyType::Double)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyProperty {
    pub name: String,
    pub ty: PlyType,
}

/// Vertex table read from a PLY file. Values are widened to `f64`, which
/// is exact for every supported storage type.
#[derive(Debug, Clone)]
pub struct PlyTable {
    pub properties: Vec<PlyProperty>,
    pub comments: Vec<String>,
    pub rows: usize,
    data: Vec<f64>,
}

impl PlyTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    pub fn value(&self, row: usize, column: usize) -> f64 {
        self.data[row * self.properties.len() + column]
    }

    /// Index of a required float property; errors name the property.
    pub fn require_float(&self, name: &str) -> Result<usize> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::parse("header", format!("missing vertex property `{name}`")))?;
        let ty = self.properties[idx].ty;
        if !ty.is_float() {
            return Err(Error::parse(
                format!("property `{name}`"),
                format!("expected float, found {}", ty.name()),
            ));
        }
        Ok(idx)
    }

    /// Reads a float column and rejects NaN/infinite entries.
    pub fn finite(&self, row: usize, column: usize) -> Result<f64> {
        let v = self.value(row, column);
        if !v.is_finite() {
            return Err(Error::parse(
                format!("vertex {row}"),
                format!("non-finite value in `{}`", self.properties[column].name),
            ));
        }
        Ok(v)
    }
}

pub fn read_ply(path: &Path) -> Result<PlyTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();

    let next_line = |reader: &mut BufReader<File>, line: &mut String| -> Result<()> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::parse("header", "unexpected end of file"));
        }
        Ok(())
    };

    next_line(&mut reader, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::parse("header", "missing `ply` magic"));
    }

    let mut properties = Vec::new();
    let mut comments = Vec::new();
    let mut rows: Option<usize> = None;
    let mut in_vertex = false;
    let mut format_ok = false;
    loop {
        next_line(&mut reader, &mut line)?;
        let trimmed = line.trim();
        let mut parts = trimmed.split_whitespace();
        match parts.next() {
            Some("format") => {
                let fmt = parts.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(Error::parse("header", format!("unsupported format `{fmt}`")));
                }
                format_ok = true;
            }
            Some("comment") => comments.push(trimmed.strip_prefix("comment").unwrap_or("").trim().to_string()),
            Some("obj_info") => {}
            Some("element") => {
                let name = parts.next().unwrap_or("");
                let count = parts
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(format!("element {name}"), "bad element count"))?;
                if name == "vertex" {
                    if rows.is_some() {
                        return Err(Error::parse("header", "duplicate vertex element"));
                    }
                    rows = Some(count);
                    in_vertex = true;
                } else if count > 0 {
                    return Err(Error::parse(format!("element {name}"), "only vertex elements are supported"));
                } else {
                    in_vertex = false;
                }
            }
            Some("property") => {
                let ty = parts.next().unwrap_or("");
                if ty == "list" {
                    return Err(Error::parse("header", "list properties are not supported"));
                }
                let name = parts.next().ok_or_else(|| Error::parse("header", "property without name"))?;
                let ty = PlyType::parse(ty)
                    .ok_or_else(|| Error::parse(format!("property `{name}`"), format!("unknown type `{ty}`")))?;
                if in_vertex {
                    if properties.iter().any(|p: &PlyProperty| p.name == name) {
                        return Err(Error::parse(format!("property `{name}`"), "declared twice"));
                    }
                    properties.push(PlyProperty { name: name.to_string(), ty });
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::parse("header", format!("unexpected keyword `{other}`"))),
            None => {}
        }
    }
    if !format_ok {
        return Err(Error::parse("header", "missing format line"));
    }
    let rows = rows.ok_or_else(|| Error::parse("header", "no vertex element"))?;

    let stride: usize = properties.iter().map(|p| p.ty.size()).sum();
    let mut raw = vec![0u8; stride * rows];
    reader.read_exact(&mut raw).map_err(|_| {
        Error::parse("vertex data", format!("truncated body: expected {rows} records of {stride} bytes"))
    })?;
    let mut data = Vec::with_capacity(rows * properties.len());
    let mut off = 0;
    for _ in 0..rows {
        for p in &properties {
            let b = &raw[off..off + p.ty.size()];
            let v = match p.ty {
                PlyType::Char => b[0] as i8 as f64,
                PlyType::UChar => b[0] as f64,
                PlyType::Short => i16::from_le_bytes([b[0], b[1]]) as f64,
                PlyType::UShort => u16::from_le_bytes([b[0], b[1]]) as f64,
                PlyType::Int => i32::from_le_bytes(b.try_into().unwrap()) as f64,
                PlyType::UInt => u32::from_le_bytes(b.try_into().unwrap()) as f64,
                PlyType::Float => f32::from_le_bytes(b.try_into().unwrap()) as f64,
                PlyType::Double => f64::from_le_bytes(b.try_into().unwrap()),
            };
            data.push(v);
            off += p.ty.size();
        }
    }
    Ok(PlyTable { properties, comments, rows, data })
}

/// Column of output values.
#[derive(Debug, Clone)]
pub enum PlyColumn {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl PlyColumn {
    fn len(&self) -> usize {
        match self {
            PlyColumn::F32(v) => v.len(),
            PlyColumn::U32(v) => v.len(),
        }
    }
}

pub fn write_ply(path: &Path, comments: &[String], columns: &[(&str, PlyColumn)]) -> Result<()> {
    let rows = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
    if columns.iter().any(|(_, c)| c.len() != rows) {
        return Err(Error::Dimension("ply columns have different lengths".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    for c in comments {
        header.push_str(&format!("comment {c}\n"));
    }
    header.push_str(&format!("element vertex {rows}\n"));
    for (name, col) in columns {
        let ty = match col {
            PlyColumn::F32(_) => "float",
            PlyColumn::U32(_) => "uint",
        };
        header.push_str(&format!("property {ty} {name}\n"));
    }
    header.push_str("end_header\n");
    let io = |e| Error::io(path, e);
    w.write_all(header.as_bytes()).map_err(io)?;
    for r in 0..rows {
        for (_, col) in columns {
            match col {
                PlyColumn::F32(v) => w.write_all(&v[r].to_le_bytes()).map_err(io)?,
                PlyColumn::U32(v) => w.write_all(&v[r].to_le_bytes()).map_err(io)?,
            }
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}
