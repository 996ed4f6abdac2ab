//! Minimal PLY support: ASCII and binary little-endian reading of any
//! element layout (vertex columns are kept, other elements skipped), and
//! writing of a single vertex element with scalar properties.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scalar {
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

    pub fn name(self) -> &'static str {
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

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn encode_le(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Scalar::I8 => out.push(v as i8 as u8),
            Scalar::U8 => out.push(v as u8),
            Scalar::I16 => out.extend((v as i16).to_le_bytes()),
            Scalar::U16 => out.extend((v as u16).to_le_bytes()),
            Scalar::I32 => out.extend((v as i32).to_le_bytes()),
            Scalar::U32 => out.extend((v as u32).to_le_bytes()),
            Scalar::F32 => out.extend((v as f32).to_le_bytes()),
            Scalar::F64 => out.extend(v.to_le_bytes()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Debug, PartialEq)]
struct Property {
    name: String,
    ty: Scalar,
    /// Count type for list properties.
    list: Option<Scalar>,
}

#[derive(Clone, Debug, PartialEq)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// The `vertex` element of a PLY file, column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexTable {
    pub count: usize,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl VertexTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| Error::MissingField(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Malformed {
        what: "PLY",
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_vertices(path: &Path) -> Result<VertexTable> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut r = BufReader::new(file);
    let bad = |m: &str| malformed(path, m);

    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<std::fs::File>| -> Result<Option<String>> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(line.trim_end_matches(['\n', '\r']).to_string()))
    };

    if next_line(&mut r)?.as_deref() != Some("ply") {
        return Err(bad("missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(l) = next_line(&mut r)? else {
            return Err(bad("header not terminated by end_header"));
        };
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLittleEndian,
                    other => return Err(bad(&format!("unsupported format `{other}`"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(&format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", cty, ity, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let cty = Scalar::parse(cty).ok_or_else(|| bad(&format!("unknown type `{cty}`")))?;
                let ity = Scalar::parse(ity).ok_or_else(|| bad(&format!("unknown type `{ity}`")))?;
                el.props.push(Property {
                    name: name.to_string(),
                    ty: ity,
                    list: Some(cty),
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad(&format!("unknown type `{ty}`")))?;
                el.props.push(Property {
                    name: name.to_string(),
                    ty,
                    list: None,
                });
            }
            _ => return Err(bad(&format!("unexpected header line `{l}`"))),
        }
    }
    let format = format.ok_or_else(|| bad("missing format line"))?;
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(bad("no vertex element"));
    }

    let mut table = None;
    match format {
        Format::Ascii => {
            let mut rest = String::new();
            r.read_to_string(&mut rest)?;
            let mut toks = rest.split_whitespace();
            let mut next = || -> Result<f64> {
                let t = toks.next().ok_or_else(|| bad("unexpected end of data"))?;
                t.parse::<f64>().map_err(|_| bad(&format!("bad number `{t}`")))
            };
            for el in &elements {
                let keep = el.name == "vertex";
                let mut cols = vec![Vec::with_capacity(if keep { el.count } else { 0 }); el.props.len()];
                for _ in 0..el.count {
                    for (p, col) in el.props.iter().zip(cols.iter_mut()) {
                        if p.list.is_some() {
                            let n = next()? as usize;
                            for _ in 0..n {
                                next()?;
                            }
                            if keep {
                                col.push(n as f64);
                            }
                        } else {
                            let v = next()?;
                            if keep {
                                col.push(v);
                            }
                        }
                    }
                }
                if keep {
                    table = Some(build_table(el, cols));
                }
            }
        }
        Format::BinaryLittleEndian => {
            let mut buf = [0u8; 8];
            for el in &elements {
                let keep = el.name == "vertex";
                let mut cols = vec![Vec::with_capacity(if keep { el.count } else { 0 }); el.props.len()];
                for _ in 0..el.count {
                    for (p, col) in el.props.iter().zip(cols.iter_mut()) {
                        let mut read = |ty: Scalar| -> Result<f64> {
                            let b = &mut buf[..ty.size()];
                            r.read_exact(b).map_err(|_| bad("unexpected end of data"))?;
                            Ok(ty.decode_le(b))
                        };
                        if let Some(cty) = p.list {
                            let n = read(cty)? as usize;
                            for _ in 0..n {
                                read(p.ty)?;
                            }
                            if keep {
                                col.push(n as f64);
                            }
                        } else {
                            let v = read(p.ty)?;
                            if keep {
                                col.push(v);
                            }
                        }
                    }
                }
                if keep {
                    table = Some(build_table(el, cols));
                }
            }
        }
    }
    Ok(table.expect("vertex element present"))
}

fn build_table(el: &Element, cols: Vec<Vec<f64>>) -> VertexTable {
    VertexTable {
        count: el.count,
        columns: el.props.iter().map(|p| p.name.clone()).zip(cols).collect(),
    }
}

/// Writes one `vertex` element. `rows[i][j]` is property `j` of vertex `i`.
pub fn write_vertices<W: Write>(mut w: W, format: Format, props: &[(&str, Scalar)], rows: &[Vec<f64>]) -> Result<()> {
    let fmt = match format {
        Format::Ascii => "ascii",
        Format::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", rows.len());
    for (name, ty) in props {
        header.push_str(&format!("property {} {name}\n", ty.name()));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;
    match format {
        Format::Ascii => {
            for row in rows {
                let line: Vec<String> = row
                    .iter()
                    .zip(props)
                    .map(|(v, (_, ty))| match ty {
                        Scalar::F32 => (*v as f32).to_string(),
                        Scalar::F64 => v.to_string(),
                        _ => (*v as i64).to_string(),
                    })
                    .collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Format::BinaryLittleEndian => {
            let mut buf = Vec::with_capacity(rows.len() * props.len() * 4);
            for row in rows {
                debug_assert_eq!(row.len(), props.len());
                for (v, (_, ty)) in row.iter().zip(props) {
                    ty.encode_le(*v, &mut buf);
                }
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_vertices_file(path: &Path, format: Format, props: &[(&str, Scalar)], rows: &[Vec<f64>]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_vertices(std::io::BufWriter::new(f), format, props, rows)
}
