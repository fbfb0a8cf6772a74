//! File formats: dataset CSV, graph JSON, JSON with full-precision floats,
//! and content hashes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use graphmogp::{Graph, MultiDataset, NoiseModel};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Pretty JSON formatter that writes every float with 17 significant digits.
struct FullPrecision<'a> {
    pretty: PrettyFormatter<'a>,
}

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }
    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }
    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}

/// Compact variant for line-oriented output.
struct CompactFullPrecision;

impl Formatter for CompactFullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision { pretty: PrettyFormatter::new() });
    value.serialize(&mut ser).expect("serializing to memory");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CompactFullPrecision);
    value.serialize(&mut ser).expect("serializing to memory");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &to_json_string(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json(path: &Path) -> Result<serde_json::Value, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: malformed JSON: {e}", path.display())))
}

pub fn read_graph(path: &Path) -> Result<Graph, CliError> {
    Graph::from_json(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// One CSV row: vertex id, inputs and an optional output.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub vertex: usize,
    pub x: Vec<f64>,
    pub y: Option<f64>,
}

/// Reads `vertex,x0,...,x{D-1}[,y]`. Returns the rows and `D`.
pub fn read_rows(path: &Path, require_y: bool) -> Result<(Vec<Row>, usize), CliError> {
    let text = read_text(path)?;
    parse_rows(&text, require_y).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_rows(text: &str, require_y: bool) -> Result<(Vec<Row>, usize), String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("vertex") {
        return Err("header must start with `vertex`".into());
    }
    let has_y = header.last().map(String::as_str) == Some("y");
    if require_y && !has_y {
        return Err("header must end with `y`".into());
    }
    let dim = header.len() - 1 - usize::from(has_y);
    for (i, name) in header[1..1 + dim].iter().enumerate() {
        if *name != format!("x{i}") {
            return Err(format!("column {} must be `x{i}`, found `{name}`", i + 1));
        }
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {}: {e}", line + 1))?;
        let field = |i: usize| -> Result<f64, String> {
            let s = record.get(i).ok_or_else(|| format!("row {}: missing column {i}", line + 1))?;
            let v: f64 = s.parse().map_err(|_| format!("row {}: `{s}` is not a number", line + 1))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("row {}: non-finite value `{s}`", line + 1))
            }
        };
        let vs = record.get(0).unwrap_or_default();
        let vertex: usize = vs.parse().map_err(|_| format!("row {}: vertex `{vs}` is not a non-negative integer", line + 1))?;
        let x = (1..=dim).map(field).collect::<Result<Vec<_>, _>>()?;
        let y = if has_y { Some(field(dim + 1)?) } else { None };
        rows.push(Row { vertex, x, y });
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    Ok((rows, dim))
}

pub fn rows_to_dataset(rows: &[Row], num_vertices: usize, dim: usize) -> Result<MultiDataset, CliError> {
    let obs: Vec<(usize, Vec<f64>, f64)> = rows
        .iter()
        .map(|r| (r.vertex, r.x.clone(), r.y.expect("dataset rows carry y")))
        .collect();
    MultiDataset::from_observations(num_vertices, dim, &obs).map_err(CliError::from)
}

/// Rows in vertex-major order (stable within a vertex).
pub fn vertex_major(rows: &[Row]) -> Vec<Row> {
    let mut out = rows.to_vec();
    out.sort_by_key(|r| r.vertex);
    out
}

pub fn dataset_csv(data: &MultiDataset) -> String {
    let mut out = String::from("vertex");
    for i in 0..data.dim() {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",y\n");
    for (m, b) in data.blocks().iter().enumerate() {
        for (x, y) in b.inputs.iter().zip(&b.outputs) {
            out.push_str(&m.to_string());
            for v in x {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push(',');
            out.push_str(&fmt_f64(*y));
            out.push('\n');
        }
    }
    out
}

pub fn rows_csv(rows: &[Row], dim: usize) -> String {
    let mut out = String::from("vertex");
    for i in 0..dim {
        out.push_str(&format!(",x{i}"));
    }
    let has_y = rows.iter().all(|r| r.y.is_some());
    if has_y {
        out.push_str(",y");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.vertex.to_string());
        for v in &r.x {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        if let (true, Some(y)) = (has_y, r.y) {
            out.push(',');
            out.push_str(&fmt_f64(y));
        }
        out.push('\n');
    }
    out
}

pub fn noise_json(noise: &NoiseModel) -> serde_json::Value {
    if noise.is_shared() {
        serde_json::json!({"shared": true, "variance": noise.variance(0)})
    } else {
        serde_json::json!({"shared": false, "variances": noise.variances()})
    }
}

pub fn noise_from_json(v: &serde_json::Value, num_vertices: usize) -> Result<NoiseModel, CliError> {
    let bad = || CliError::Input(format!("malformed noise entry {v}"));
    let model = match v.get("shared").and_then(serde_json::Value::as_bool) {
        Some(true) => NoiseModel::shared(num_vertices, v.get("variance").and_then(serde_json::Value::as_f64).ok_or_else(bad)?)?,
        Some(false) => {
            let vars = v
                .get("variances")
                .and_then(serde_json::Value::as_array)
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_f64().ok_or_else(bad))
                .collect::<Result<Vec<_>, _>>()?;
            if vars.len() != num_vertices {
                return Err(CliError::Input(format!("{} noise variances for {num_vertices} vertices", vars.len())));
            }
            NoiseModel::per_vertex(vars)?
        }
        None => return Err(bad()),
    };
    Ok(model)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical graph form, independent of file formatting.
pub fn graph_hash(g: &Graph) -> String {
    sha256_hex(g.to_json().as_bytes())
}

/// Hash of the canonical dataset form (vertex-major, full precision).
pub fn data_hash(data: &MultiDataset) -> String {
    sha256_hex(dataset_csv(data).as_bytes())
}
