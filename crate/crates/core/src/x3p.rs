//! Reader and writer for the x3p surface container (ISO 25178-72).
//!
//! Only the regular-grid surface subset is supported. Archive layout:
//!
//! - `main.xml`: manifest with axis increments (meters), matrix size and the
//!   data link,
//! - `bindata/data.bin`: little-endian IEEE-754 heights in meters, x (column)
//!   varying fastest, then y (row); NaN marks a missing point,
//! - `md5checksum.hex`: MD5 of `main.xml`.
//!
//! Heights are converted to micrometers on read and back to meters on write.
//! Payload index `y * size_x + x` maps to row `y`, column `x` of the
//! [`SurfaceMatrix`]; [`ReadOptions::transpose`] swaps that mapping for files
//! written by tools with the opposite convention.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zip::write::SimpleFileOptions;

use crate::surface::{SurfaceError, SurfaceMatrix};

const NS: &str = "http://www.opengps.eu/2008/ISO5436_2";
const DEFAULT_PAYLOAD: &str = "bindata/data.bin";
const MICRONS_PER_METER: f64 = 1e6;

#[derive(Debug, Error)]
pub enum X3pError {
    #[error("not a zip archive: {0}")]
    NotZip(String),
    #[error("archive has no main.xml manifest")]
    MissingManifest,
    #[error("archive has no point payload at {0}")]
    MissingPayload(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("payload holds {actual} points but the manifest declares {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unsupported point data type {0:?} (only F and D are supported)")]
    UnsupportedDataType(String),
    #[error("surface is {rows}x{cols} but metadata declares size_y={size_y}, size_x={size_x}")]
    MetaMismatch {
        rows: usize,
        cols: usize,
        size_x: usize,
        size_y: usize,
    },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DataKind {
    Float32,
    #[default]
    Float64,
}

impl DataKind {
    fn code(self) -> &'static str {
        match self {
            DataKind::Float32 => "F",
            DataKind::Float64 => "D",
        }
    }

    fn width(self) -> usize {
        match self {
            DataKind::Float32 => 4,
            DataKind::Float64 => 8,
        }
    }
}

/// A manifest element this reader does not interpret, kept verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawElement {
    /// Slash-separated path of the enclosing element below the root,
    /// e.g. `Record2/Instrument`; empty for direct children of the root.
    pub parent: String,
    pub xml: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct X3pMeta {
    pub size_x: usize,
    pub size_y: usize,
    /// Meters per pixel.
    pub increment_x: f64,
    pub increment_y: f64,
    pub creator: String,
    pub instrument: String,
    pub comment: String,
    pub date: Option<String>,
    pub data_kind: DataKind,
    pub extras: Vec<RawElement>,
    /// Non-fatal problems found while reading (checksum mismatches).
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl X3pMeta {
    /// Metadata describing `surface` with empty free-text fields.
    pub fn for_surface(surface: &SurfaceMatrix) -> Self {
        Self {
            size_x: surface.cols(),
            size_y: surface.rows(),
            increment_x: microns_to_meters(surface.res_x()),
            increment_y: microns_to_meters(surface.res_y()),
            creator: String::new(),
            instrument: String::new(),
            comment: String::new(),
            date: None,
            data_kind: DataKind::Float64,
            extras: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Map payload index `y * size_x + x` to row `x`, column `y`.
    pub transpose: bool,
}

/// Meters for a micrometer value, preferring the neighbor that converts
/// back to exactly `um` under [`meters_to_microns`].
pub fn microns_to_meters(um: f64) -> f64 {
    let m = um / MICRONS_PER_METER;
    if !m.is_finite() || meters_to_microns(m) == um {
        return m;
    }
    let (mut up, mut down) = (m, m);
    for _ in 0..4 {
        up = up.next_up();
        if meters_to_microns(up) == um {
            return up;
        }
        down = down.next_down();
        if meters_to_microns(down) == um {
            return down;
        }
    }
    m
}

#[inline]
pub fn meters_to_microns(m: f64) -> f64 {
    m * MICRONS_PER_METER
}

pub fn read_x3p(path: impl AsRef<Path>) -> Result<(SurfaceMatrix, X3pMeta), X3pError> {
    read_x3p_with(path, ReadOptions::default())
}

pub fn read_x3p_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<(SurfaceMatrix, X3pMeta), X3pError> {
    let bytes = std::fs::read(path)?;
    read_x3p_bytes(&bytes, opts)
}

fn zip_entry(archive: &mut zip::ZipArchive<Cursor<&[u8]>>, name: &str) -> Result<Option<Vec<u8>>, X3pError> {
    let mut file = match archive.by_name(name) {
        Ok(f) => f,
        Err(zip::result::ZipError::FileNotFound) => return Ok(None),
        Err(e) => return Err(X3pError::NotZip(e.to_string())),
    };
    let mut buf = Vec::with_capacity(file.size() as usize);
    file.read_to_end(&mut buf)?;
    Ok(Some(buf))
}

fn md5_hex(bytes: &[u8]) -> String {
    hex::encode(Md5::digest(bytes))
}

pub fn read_x3p_bytes(bytes: &[u8], opts: ReadOptions) -> Result<(SurfaceMatrix, X3pMeta), X3pError> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| X3pError::NotZip(e.to_string()))?;
    let manifest = zip_entry(&mut archive, "main.xml")?.ok_or(X3pError::MissingManifest)?;
    let text = std::str::from_utf8(&manifest).map_err(|e| X3pError::Manifest(e.to_string()))?;
    let parsed = parse_manifest(text)?;
    let mut meta = parsed.meta;

    if let Some(sum) = zip_entry(&mut archive, "md5checksum.hex")? {
        let recorded = String::from_utf8_lossy(&sum);
        let recorded = recorded.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
        if recorded != md5_hex(&manifest) {
            meta.warnings.push("main.xml checksum mismatch".into());
        }
    }

    let payload = zip_entry(&mut archive, &parsed.payload_path)?
        .ok_or_else(|| X3pError::MissingPayload(parsed.payload_path.clone()))?;
    if let Some(expected) = &parsed.payload_md5 {
        if !expected.eq_ignore_ascii_case(&md5_hex(&payload)) {
            meta.warnings.push("point data checksum mismatch".into());
        }
    }
    for w in &meta.warnings {
        log::warn!("{w}");
    }

    let width = meta.data_kind.width();
    let expected = meta.size_x * meta.size_y;
    if payload.len() % width != 0 || payload.len() / width != expected {
        return Err(X3pError::DimensionMismatch {
            expected,
            actual: payload.len() / width,
        });
    }
    let values = payload.chunks_exact(width).map(|c| match meta.data_kind {
        DataKind::Float64 => f64::from_le_bytes(c.try_into().unwrap()),
        DataKind::Float32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
    });
    let (rows, cols) = if opts.transpose {
        (meta.size_x, meta.size_y)
    } else {
        (meta.size_y, meta.size_x)
    };
    let mut cells = vec![None; expected];
    for (p, m) in values.enumerate() {
        let (y, x) = (p / meta.size_x, p % meta.size_x);
        let k = if opts.transpose { x * cols + y } else { y * cols + x };
        cells[k] = m.is_finite().then(|| meters_to_microns(m));
    }
    let (res_x, res_y) = if opts.transpose {
        (meta.increment_y, meta.increment_x)
    } else {
        (meta.increment_x, meta.increment_y)
    };
    let surface = SurfaceMatrix::from_vec(
        rows,
        cols,
        cells,
        meters_to_microns(res_x),
        meters_to_microns(res_y),
    )?
    .with_origin(
        meters_to_microns(if opts.transpose { parsed.offset_y } else { parsed.offset_x }),
        meters_to_microns(if opts.transpose { parsed.offset_x } else { parsed.offset_y }),
    );
    Ok((surface, meta))
}

struct ParsedManifest {
    meta: X3pMeta,
    payload_path: String,
    payload_md5: Option<String>,
    offset_x: f64,
    offset_y: f64,
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == name)
}

fn text_of(node: Option<roxmltree::Node>) -> Option<String> {
    node.map(|n| n.text().unwrap_or("").trim().to_string())
}

fn parse_num<T: std::str::FromStr>(node: Option<roxmltree::Node>, what: &str) -> Result<T, X3pError> {
    let t = text_of(node).ok_or_else(|| X3pError::Manifest(format!("missing {what}")))?;
    t.parse()
        .map_err(|_| X3pError::Manifest(format!("cannot parse {what} from {t:?}")))
}

/// Children of each container that the reader interprets. Anything else is
/// kept as a [`RawElement`].
fn known_children(path: &str) -> &'static [&'static str] {
    match path {
        "" => &["Record1", "Record2", "Record3", "Record4"],
        "Record1" => &["Revision", "FeatureType", "Axes"],
        "Record1/Axes" => &["CX", "CY", "CZ"],
        "Record1/Axes/CX" | "Record1/Axes/CY" => &["AxisType", "DataType", "Increment", "Offset"],
        "Record1/Axes/CZ" => &["AxisType", "DataType"],
        "Record2" => &["Date", "Creator", "Instrument", "Comment"],
        "Record2/Instrument" => &["Model"],
        "Record3" => &["MatrixDimension", "DataLink"],
        "Record3/MatrixDimension" => &["SizeX", "SizeY", "SizeZ"],
        "Record3/DataLink" => &["PointDataLink", "MD5ChecksumPointData"],
        "Record4" => &["ChecksumFile"],
        _ => &[],
    }
}

fn collect_extras(node: roxmltree::Node, path: &str, src: &str, out: &mut Vec<RawElement>) {
    let known = known_children(path);
    for c in node.children().filter(|c| c.is_element()) {
        let name = c.tag_name().name();
        if known.contains(&name) {
            let sub = if path.is_empty() {
                name.to_string()
            } else {
                format!("{path}/{name}")
            };
            if !known_children(&sub).is_empty() {
                collect_extras(c, &sub, src, out);
            }
        } else {
            out.push(RawElement {
                parent: path.to_string(),
                xml: src[c.range()].to_string(),
            });
        }
    }
}

fn parse_manifest(text: &str) -> Result<ParsedManifest, X3pError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| X3pError::Manifest(e.to_string()))?;
    let root = doc.root_element();
    let rec1 = child(root, "Record1").ok_or_else(|| X3pError::Manifest("missing Record1".into()))?;
    let rec3 = child(root, "Record3").ok_or_else(|| X3pError::Manifest("missing Record3".into()))?;
    let rec2 = child(root, "Record2");

    let feature = text_of(child(rec1, "FeatureType")).unwrap_or_default();
    if feature != "SUR" {
        return Err(X3pError::Manifest(format!("feature type {feature:?} is not SUR")));
    }
    let axes = child(rec1, "Axes").ok_or_else(|| X3pError::Manifest("missing Axes".into()))?;
    let cx = child(axes, "CX").ok_or_else(|| X3pError::Manifest("missing CX".into()))?;
    let cy = child(axes, "CY").ok_or_else(|| X3pError::Manifest("missing CY".into()))?;
    let cz = child(axes, "CZ").ok_or_else(|| X3pError::Manifest("missing CZ".into()))?;
    let increment_x: f64 = parse_num(child(cx, "Increment"), "CX/Increment")?;
    let increment_y: f64 = parse_num(child(cy, "Increment"), "CY/Increment")?;
    if !(increment_x > 0.0 && increment_y > 0.0) {
        return Err(X3pError::Manifest("axis increments must be positive".into()));
    }
    let offset_x = child(cx, "Offset").map_or(Ok(0.0), |n| parse_num(Some(n), "CX/Offset"))?;
    let offset_y = child(cy, "Offset").map_or(Ok(0.0), |n| parse_num(Some(n), "CY/Offset"))?;
    let data_kind = match text_of(child(cz, "DataType")).as_deref() {
        Some("D") | None => DataKind::Float64,
        Some("F") => DataKind::Float32,
        Some(other) => return Err(X3pError::UnsupportedDataType(other.to_string())),
    };

    let dims = child(rec3, "MatrixDimension").ok_or_else(|| X3pError::Manifest("missing MatrixDimension".into()))?;
    let size_x: usize = parse_num(child(dims, "SizeX"), "SizeX")?;
    let size_y: usize = parse_num(child(dims, "SizeY"), "SizeY")?;
    let size_z: usize = child(dims, "SizeZ").map_or(Ok(1), |n| parse_num(Some(n), "SizeZ"))?;
    if size_z != 1 {
        return Err(X3pError::Manifest(format!("SizeZ {size_z} is not supported")));
    }
    let link = child(rec3, "DataLink");
    let payload_path = link
        .and_then(|l| text_of(child(l, "PointDataLink")))
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| DEFAULT_PAYLOAD.to_string());
    let payload_md5 = link.and_then(|l| text_of(child(l, "MD5ChecksumPointData")));

    let mut extras = Vec::new();
    collect_extras(root, "", text, &mut extras);

    let meta = X3pMeta {
        size_x,
        size_y,
        increment_x,
        increment_y,
        creator: rec2.and_then(|r| text_of(child(r, "Creator"))).unwrap_or_default(),
        instrument: rec2
            .and_then(|r| child(r, "Instrument"))
            .and_then(|i| text_of(child(i, "Model")))
            .unwrap_or_default(),
        comment: rec2.and_then(|r| text_of(child(r, "Comment"))).unwrap_or_default(),
        date: rec2.and_then(|r| text_of(child(r, "Date"))),
        data_kind,
        extras,
        warnings: Vec::new(),
    };
    Ok(ParsedManifest {
        meta,
        payload_path,
        payload_md5,
        offset_x,
        offset_y,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn extras_for<'a>(meta: &'a X3pMeta, parent: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    meta.extras
        .iter()
        .filter(move |e| e.parent == parent)
        .map(|e| e.xml.as_str())
}

fn render_manifest(meta: &X3pMeta, origin: (f64, f64), payload_md5: &str) -> String {
    use std::fmt::Write as _;
    let mut x = String::new();
    let ex = |x: &mut String, parent: &str| {
        for raw in extras_for(meta, parent) {
            x.push_str(raw);
            x.push('\n');
        }
    };
    x.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    let _ = writeln!(x, "<p:ISO5436_2 xmlns:p=\"{NS}\">");
    x.push_str("<Record1>\n<Revision>ISO5436 - 2000</Revision>\n<FeatureType>SUR</FeatureType>\n<Axes>\n");
    for (name, inc, offset) in [("CX", meta.increment_x, origin.0), ("CY", meta.increment_y, origin.1)] {
        let offset = microns_to_meters(offset);
        let _ = writeln!(
            x,
            "<{name}>\n<AxisType>I</AxisType>\n<DataType>D</DataType>\n<Increment>{inc:e}</Increment>\n<Offset>{offset:e}</Offset>"
        );
        ex(&mut x, &format!("Record1/Axes/{name}"));
        let _ = writeln!(x, "</{name}>");
    }
    let _ = writeln!(x, "<CZ>\n<AxisType>A</AxisType>\n<DataType>{}</DataType>", DataKind::Float64.code());
    ex(&mut x, "Record1/Axes/CZ");
    x.push_str("</CZ>\n");
    ex(&mut x, "Record1/Axes");
    x.push_str("</Axes>\n");
    ex(&mut x, "Record1");
    x.push_str("</Record1>\n<Record2>\n");
    if let Some(date) = &meta.date {
        let _ = writeln!(x, "<Date>{}</Date>", escape(date));
    }
    let _ = writeln!(x, "<Creator>{}</Creator>", escape(&meta.creator));
    let _ = writeln!(x, "<Instrument>\n<Model>{}</Model>", escape(&meta.instrument));
    ex(&mut x, "Record2/Instrument");
    x.push_str("</Instrument>\n");
    let _ = writeln!(x, "<Comment>{}</Comment>", escape(&meta.comment));
    ex(&mut x, "Record2");
    x.push_str("</Record2>\n<Record3>\n<MatrixDimension>\n");
    let _ = writeln!(
        x,
        "<SizeX>{}</SizeX>\n<SizeY>{}</SizeY>\n<SizeZ>1</SizeZ>",
        meta.size_x, meta.size_y
    );
    ex(&mut x, "Record3/MatrixDimension");
    x.push_str("</MatrixDimension>\n<DataLink>\n");
    let _ = writeln!(
        x,
        "<PointDataLink>{DEFAULT_PAYLOAD}</PointDataLink>\n<MD5ChecksumPointData>{payload_md5}</MD5ChecksumPointData>"
    );
    ex(&mut x, "Record3/DataLink");
    x.push_str("</DataLink>\n");
    ex(&mut x, "Record3");
    x.push_str("</Record3>\n<Record4>\n<ChecksumFile>md5checksum.hex</ChecksumFile>\n");
    ex(&mut x, "Record4");
    x.push_str("</Record4>\n");
    ex(&mut x, "");
    x.push_str("</p:ISO5436_2>\n");
    x
}

/// Raw little-endian float64 payload in meters, x fastest.
pub fn encode_payload(surface: &SurfaceMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(surface.len() * 8);
    for v in surface.cells() {
        let m = v.map_or(f64::NAN, microns_to_meters);
        out.extend_from_slice(&m.to_le_bytes());
    }
    out
}

pub fn write_x3p_bytes(surface: &SurfaceMatrix, meta: &X3pMeta) -> Result<Vec<u8>, X3pError> {
    if meta.size_x != surface.cols() || meta.size_y != surface.rows() {
        return Err(X3pError::MetaMismatch {
            rows: surface.rows(),
            cols: surface.cols(),
            size_x: meta.size_x,
            size_y: meta.size_y,
        });
    }
    let mut meta = meta.clone();
    meta.data_kind = DataKind::Float64;
    let payload = encode_payload(surface);
    let manifest = render_manifest(&meta, surface.origin(), &md5_hex(&payload));
    let checksum = format!("{} *main.xml\n", md5_hex(manifest.as_bytes()));

    let opts = SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let io = |e: zip::result::ZipError| X3pError::Io(std::io::Error::other(e));
    zip.start_file("main.xml", opts).map_err(io)?;
    zip.write_all(manifest.as_bytes())?;
    zip.add_directory("bindata/", opts).map_err(io)?;
    zip.start_file(DEFAULT_PAYLOAD, opts).map_err(io)?;
    zip.write_all(&payload)?;
    zip.start_file("md5checksum.hex", opts).map_err(io)?;
    zip.write_all(checksum.as_bytes())?;
    Ok(zip.finish().map_err(io)?.into_inner())
}

pub fn write_x3p(surface: &SurfaceMatrix, meta: &X3pMeta, path: impl AsRef<Path>) -> Result<(), X3pError> {
    let bytes = write_x3p_bytes(surface, meta)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archive(entries: &[(&str, &[u8])]) -> Vec<u8> {
        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        for (name, data) in entries {
            zip.start_file(*name, SimpleFileOptions::default()).unwrap();
            zip.write_all(data).unwrap();
        }
        zip.finish().unwrap().into_inner()
    }

    fn manifest(size_x: usize, size_y: usize, dtype: &str) -> String {
        format!(
            "<?xml version=\"1.0\"?><p:ISO5436_2 xmlns:p=\"{NS}\"><Record1><Revision>ISO5436 - 2000</Revision>\
             <FeatureType>SUR</FeatureType><Axes><CX><AxisType>I</AxisType><DataType>D</DataType>\
             <Increment>6.45e-7</Increment><Offset>0</Offset></CX><CY><AxisType>I</AxisType><DataType>D</DataType>\
             <Increment>6.45e-7</Increment><Offset>0</Offset></CY><CZ><AxisType>A</AxisType><DataType>{dtype}</DataType>\
             </CZ></Axes></Record1><Record3><MatrixDimension><SizeX>{size_x}</SizeX><SizeY>{size_y}</SizeY>\
             <SizeZ>1</SizeZ></MatrixDimension><DataLink><PointDataLink>bindata/data.bin</PointDataLink>\
             </DataLink></Record3></p:ISO5436_2>"
        )
    }

    fn f64_payload(values: &[f64]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn small_round_trip_with_missing() {
        let s = SurfaceMatrix::from_rows(vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), None]], 0.645, 0.645)
            .unwrap();
        let bytes = write_x3p_bytes(&s, &X3pMeta::for_surface(&s)).unwrap();
        let (back, meta) = read_x3p_bytes(&bytes, ReadOptions::default()).unwrap();
        assert_eq!(back, s);
        assert!(meta.warnings.is_empty(), "{:?}", meta.warnings);
        assert_eq!(back.res_x(), 0.645);
    }

    #[test]
    fn payload_is_meters_little_endian() {
        let s = SurfaceMatrix::from_rows(vec![vec![Some(42.0)]], 1.0, 1.0).unwrap();
        assert_eq!(encode_payload(&s), 42.0e-6f64.to_le_bytes().to_vec());
        let nan = SurfaceMatrix::missing(3, 3, 1.0, 1.0).unwrap();
        let payload = encode_payload(&nan);
        assert_eq!(payload.len(), 72);
        for chunk in payload.chunks(8) {
            assert!(f64::from_le_bytes(chunk.try_into().unwrap()).is_nan());
        }
    }

    #[test]
    fn golden_point_order_is_x_fastest() {
        // payload 0..6 on a 3-wide, 2-high grid
        let values: Vec<f64> = (0..6).map(|v| v as f64 * 1e-6).collect();
        let bytes = archive(&[
            ("main.xml", manifest(3, 2, "D").as_bytes()),
            ("bindata/data.bin", &f64_payload(&values)),
        ]);
        let (s, _) = read_x3p_bytes(&bytes, ReadOptions::default()).unwrap();
        assert_eq!((s.rows(), s.cols()), (2, 3));
        let got: Vec<f64> = s.cells().iter().map(|v| v.unwrap()).collect();
        assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);

        let (t, _) = read_x3p_bytes(&bytes, ReadOptions { transpose: true }).unwrap();
        assert_eq!((t.rows(), t.cols()), (3, 2));
        assert_eq!(t.get(0, 1), Some(3.0));
        assert_eq!(t.get(2, 0), Some(2.0));
    }

    #[test]
    fn float32_payload_is_accepted() {
        let values: Vec<u8> = [1.5e-6f32, f32::NAN].iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes = archive(&[("main.xml", manifest(2, 1, "F").as_bytes()), ("bindata/data.bin", &values)]);
        let (s, meta) = read_x3p_bytes(&bytes, ReadOptions::default()).unwrap();
        assert_eq!(meta.data_kind, DataKind::Float32);
        assert!((s.get(0, 0).unwrap() - 1.5).abs() < 1e-6);
        assert_eq!(s.get(0, 1), None);
    }

    #[test]
    fn error_mapping() {
        assert!(matches!(
            read_x3p_bytes(b"definitely not a zip", ReadOptions::default()),
            Err(X3pError::NotZip(_))
        ));
        let no_manifest = archive(&[("bindata/data.bin", &[0u8; 8])]);
        assert!(matches!(
            read_x3p_bytes(&no_manifest, ReadOptions::default()),
            Err(X3pError::MissingManifest)
        ));
        let short = archive(&[
            ("main.xml", manifest(2, 3, "D").as_bytes()),
            ("bindata/data.bin", &f64_payload(&[0.0; 5])),
        ]);
        assert!(matches!(
            read_x3p_bytes(&short, ReadOptions::default()),
            Err(X3pError::DimensionMismatch { expected: 6, actual: 5 })
        ));
        let ints = archive(&[
            ("main.xml", manifest(1, 1, "I").as_bytes()),
            ("bindata/data.bin", &[0u8; 2]),
        ]);
        assert!(matches!(
            read_x3p_bytes(&ints, ReadOptions::default()),
            Err(X3pError::UnsupportedDataType(t)) if t == "I"
        ));
        let no_payload = archive(&[("main.xml", manifest(1, 1, "D").as_bytes())]);
        assert!(matches!(
            read_x3p_bytes(&no_payload, ReadOptions::default()),
            Err(X3pError::MissingPayload(_))
        ));
    }

    #[test]
    fn checksum_mismatch_is_only_a_warning() {
        let s = SurfaceMatrix::from_rows(vec![vec![Some(1.0)]], 1.0, 1.0).unwrap();
        let good = write_x3p_bytes(&s, &X3pMeta::for_surface(&s)).unwrap();
        let mut zip = zip::ZipArchive::new(Cursor::new(&good[..])).unwrap();
        let mut xml = String::new();
        zip.by_name("main.xml").unwrap().read_to_string(&mut xml).unwrap();
        let tampered = archive(&[
            ("main.xml", xml.as_bytes()),
            ("bindata/data.bin", &f64_payload(&[2.0e-6])),
            ("md5checksum.hex", b"00000000000000000000000000000000 *main.xml"),
        ]);
        let (back, meta) = read_x3p_bytes(&tampered, ReadOptions::default()).unwrap();
        assert_eq!(back.get(0, 0), Some(2.0));
        assert_eq!(meta.warnings.len(), 2);
    }

    #[test]
    fn unknown_elements_survive_a_round_trip() {
        let xml = manifest(1, 1, "D").replace(
            "</Record3>",
            "</Record3><Record2><Creator>lab</Creator><Instrument><Manufacturer>Acme</Manufacturer>\
             <Model>CLM</Model></Instrument><CalibrationDate>2020-01-01</CalibrationDate>\
             <Comment>c</Comment></Record2><VendorSpecificID>v1</VendorSpecificID>",
        );
        let bytes = archive(&[("main.xml", xml.as_bytes()), ("bindata/data.bin", &f64_payload(&[1e-6]))]);
        let (s, meta) = read_x3p_bytes(&bytes, ReadOptions::default()).unwrap();
        assert_eq!(meta.creator, "lab");
        assert_eq!(meta.instrument, "CLM");
        let mut parents: Vec<_> = meta.extras.iter().map(|e| (e.parent.as_str(), e.xml.as_str())).collect();
        parents.sort();
        assert_eq!(
            parents,
            vec![
                ("", "<VendorSpecificID>v1</VendorSpecificID>"),
                ("Record2", "<CalibrationDate>2020-01-01</CalibrationDate>"),
                ("Record2/Instrument", "<Manufacturer>Acme</Manufacturer>"),
            ]
        );
        let again = write_x3p_bytes(&s, &meta).unwrap();
        let (_, meta2) = read_x3p_bytes(&again, ReadOptions::default()).unwrap();
        assert_eq!(meta2.extras.len(), 3);
        for e in &meta.extras {
            assert!(meta2.extras.contains(e), "{e:?}");
        }
        assert_eq!(meta2.comment, "c");
    }

    #[test]
    fn writer_rejects_mismatched_meta() {
        let s = SurfaceMatrix::missing(2, 3, 1.0, 1.0).unwrap();
        let mut meta = X3pMeta::for_surface(&s);
        meta.size_x = 2;
        assert!(matches!(write_x3p_bytes(&s, &meta), Err(X3pError::MetaMismatch { .. })));
    }

    #[test]
    fn writer_is_deterministic() {
        let s = SurfaceMatrix::from_fn(5, 7, 0.645, 0.645, |i, j| Some((i * 7 + j) as f64 * 0.1)).unwrap();
        let meta = X3pMeta::for_surface(&s);
        assert_eq!(write_x3p_bytes(&s, &meta).unwrap(), write_x3p_bytes(&s, &meta).unwrap());
    }

    #[test]
    fn micron_meter_conversion_inverts_on_file_values() {
        for m in [6.45e-7, 4.2e-5, -1.234567e-6, 0.0, 3.3e-9] {
            assert_eq!(microns_to_meters(meters_to_microns(m)), m);
        }
    }
}
