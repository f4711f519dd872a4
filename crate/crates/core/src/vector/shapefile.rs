//! ESRI shapefile subset: 2-D polygon shapes (type 5) with a dBASE III
//! attribute table of character fields.
//!
//! Shapefiles store exterior rings clockwise and holes counter-clockwise.
//! In memory rings follow GeoJSON winding, so the reader reverses every ring
//! and the writer orients rings before encoding.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::polygon::{signed_area2, Coord, Polygon, PolygonError};
use super::FieldParcel;
use crate::raster::BBox;

const FILE_CODE: i32 = 9994;
const VERSION: i32 = 1000;
const SHAPE_NULL: i32 = 0;
const SHAPE_POLYGON: i32 = 5;
const HEADER_LEN: usize = 100;
const DBF_MAX_FIELD: usize = 254;

#[derive(Debug, Error)]
pub enum ShapefileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("shape type {found} is not supported; polygon (5) is required")]
    ShapeType { found: i32 },
    #[error(".shp has {shp} records but .dbf has {dbf}")]
    CountMismatch { shp: usize, dbf: usize },
    #[error("attribute column {0:?} not found")]
    MissingColumn(String),
    #[error("record {record} has several exterior rings")]
    MultiPart { record: usize },
    #[error("record {record}: {source}")]
    InvalidGeometry {
        record: usize,
        #[source]
        source: PolygonError,
    },
    #[error("value for column {column:?} is {len} bytes; dBASE fields hold at most 254")]
    ValueTooLong { column: String, len: usize },
    #[error("malformed shapefile: {0}")]
    Malformed(String),
}

/// Attribute column names for parcel records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapefileColumns {
    pub parcel_id: String,
    pub crop_code: String,
    /// Optional applicant column; ignored on read when absent.
    #[serde(default)]
    pub applicant_id: Option<String>,
}

impl Default for ShapefileColumns {
    fn default() -> Self {
        Self {
            parcel_id: "parcel_id".into(),
            crop_code: "crop_code".into(),
            applicant_id: Some("applicant".into()),
        }
    }
}

/// The three sibling files of a shapefile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapefilePaths {
    pub shp: PathBuf,
    pub shx: PathBuf,
    pub dbf: PathBuf,
}

impl ShapefilePaths {
    /// `base` without extension, e.g. `out/parcels` → `out/parcels.shp` …
    pub fn from_base(base: impl AsRef<Path>) -> Self {
        let base = base.as_ref();
        Self {
            shp: base.with_extension("shp"),
            shx: base.with_extension("shx"),
            dbf: base.with_extension("dbf"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ShapefileError + '_ {
    move |source| ShapefileError::Io { path: path.display().to_string(), source }
}

// ---------------------------------------------------------------------------
// Reading

struct Cursor<'a> {
    data: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&self, at: usize, n: usize) -> Result<&'a [u8], ShapefileError> {
        self.data
            .get(at..at + n)
            .ok_or_else(|| ShapefileError::Malformed(format!("{} truncated at byte {at}", self.what)))
    }
    fn i32_be(&self, at: usize) -> Result<i32, ShapefileError> {
        Ok(i32::from_be_bytes(self.take(at, 4)?.try_into().unwrap()))
    }
    fn i32_le(&self, at: usize) -> Result<i32, ShapefileError> {
        Ok(i32::from_le_bytes(self.take(at, 4)?.try_into().unwrap()))
    }
    fn f64_le(&self, at: usize) -> Result<f64, ShapefileError> {
        Ok(f64::from_le_bytes(self.take(at, 8)?.try_into().unwrap()))
    }
    fn u16_le(&self, at: usize) -> Result<u16, ShapefileError> {
        Ok(u16::from_le_bytes(self.take(at, 2)?.try_into().unwrap()))
    }
    fn u32_le(&self, at: usize) -> Result<u32, ShapefileError> {
        Ok(u32::from_le_bytes(self.take(at, 4)?.try_into().unwrap()))
    }
}

fn read_shapes(data: &[u8]) -> Result<Vec<Polygon>, ShapefileError> {
    let c = Cursor { data, what: ".shp" };
    if c.i32_be(0)? != FILE_CODE {
        return Err(ShapefileError::Malformed("bad .shp file code".into()));
    }
    let shape_type = c.i32_le(32)?;
    if shape_type != SHAPE_POLYGON {
        return Err(ShapefileError::ShapeType { found: shape_type });
    }
    let file_len = (c.i32_be(24)? as usize) * 2;
    let end = file_len.min(data.len());
    let mut at = HEADER_LEN;
    let mut shapes = Vec::new();
    while at + 8 <= end {
        let record = shapes.len() + 1;
        let content_len = c.i32_be(at + 4)? as usize * 2;
        let body = at + 8;
        c.take(body, content_len)?;
        let st = c.i32_le(body)?;
        match st {
            SHAPE_POLYGON => {}
            SHAPE_NULL => return Err(ShapefileError::Malformed(format!("record {record} is a null shape"))),
            other => return Err(ShapefileError::ShapeType { found: other }),
        }
        let num_parts = c.i32_le(body + 36)? as usize;
        let num_points = c.i32_le(body + 40)? as usize;
        let parts_at = body + 44;
        let points_at = parts_at + 4 * num_parts;
        if 44 + 4 * num_parts + 16 * num_points > content_len {
            return Err(ShapefileError::Malformed(format!("record {record} overruns its length")));
        }
        let mut starts = Vec::with_capacity(num_parts);
        for p in 0..num_parts {
            starts.push(c.i32_le(parts_at + 4 * p)? as usize);
        }
        let mut rings: Vec<Vec<Coord>> = Vec::with_capacity(num_parts);
        for (p, &s) in starts.iter().enumerate() {
            let e = starts.get(p + 1).copied().unwrap_or(num_points);
            if s >= e || e > num_points {
                return Err(ShapefileError::Malformed(format!("record {record} has bad part index")));
            }
            let mut ring = Vec::with_capacity(e - s);
            for i in s..e {
                let off = points_at + 16 * i;
                ring.push((c.f64_le(off)?, c.f64_le(off + 8)?));
            }
            rings.push(ring);
        }
        shapes.push(assemble(rings, record)?);
        at = body + content_len;
    }
    Ok(shapes)
}

/// Split rings into one exterior (clockwise) plus holes and convert to
/// GeoJSON winding.
fn assemble(rings: Vec<Vec<Coord>>, record: usize) -> Result<Polygon, ShapefileError> {
    let mut exterior: Option<Vec<Coord>> = None;
    let mut holes = Vec::new();
    for mut ring in rings {
        let clockwise = signed_area2(&ring) < 0.0;
        ring.reverse();
        if clockwise {
            if exterior.is_some() {
                return Err(ShapefileError::MultiPart { record });
            }
            exterior = Some(ring);
        } else {
            holes.push(ring);
        }
    }
    let exterior = exterior
        .ok_or_else(|| ShapefileError::Malformed(format!("record {record} has no exterior ring")))?;
    Polygon::new(exterior, holes).map_err(|source| ShapefileError::InvalidGeometry { record, source })
}

struct DbfTable {
    names: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_dbf(data: &[u8]) -> Result<DbfTable, ShapefileError> {
    let c = Cursor { data, what: ".dbf" };
    let n_records = c.u32_le(4)? as usize;
    let header_len = c.u16_le(8)? as usize;
    let record_len = c.u16_le(10)? as usize;
    let mut fields: Vec<(String, usize)> = Vec::new();
    let mut at = 32;
    while at < header_len && c.take(at, 1)?[0] != 0x0D {
        let desc = c.take(at, 32)?;
        let name_raw = &desc[..11];
        let name_end = name_raw.iter().position(|&b| b == 0).unwrap_or(11);
        let name = String::from_utf8_lossy(&name_raw[..name_end]).trim().to_string();
        let kind = desc[11];
        if !matches!(kind, b'C' | b'N' | b'F' | b'D' | b'L') {
            return Err(ShapefileError::Malformed(format!("field {name:?} has unsupported type {}", kind as char)));
        }
        fields.push((name, desc[16] as usize));
        at += 32;
    }
    let total: usize = 1 + fields.iter().map(|f| f.1).sum::<usize>();
    if total != record_len {
        return Err(ShapefileError::Malformed(format!(
            "record length {record_len} disagrees with field widths {total}"
        )));
    }
    let mut rows = Vec::with_capacity(n_records);
    for r in 0..n_records {
        let rec = c.take(header_len + r * record_len, record_len)?;
        let mut off = 1;
        let mut row = Vec::with_capacity(fields.len());
        for (name, width) in &fields {
            let raw = &rec[off..off + width];
            let text = std::str::from_utf8(raw)
                .map_err(|_| ShapefileError::Malformed(format!("field {name:?} in record {} is not UTF-8", r + 1)))?;
            row.push(text.trim_end_matches([' ', '\0']).trim_start().to_string());
            off += width;
        }
        rows.push(row);
    }
    Ok(DbfTable { names: fields.into_iter().map(|f| f.0).collect(), rows })
}

fn column(names: &[String], wanted: &str) -> Option<usize> {
    names
        .iter()
        .position(|n| n == wanted)
        .or_else(|| names.iter().position(|n| n.eq_ignore_ascii_case(wanted)))
}

/// Read parcels from a polygon shapefile and its attribute table.
pub fn read_parcels_shapefile(
    shp: impl AsRef<Path>,
    dbf: impl AsRef<Path>,
    columns: &ShapefileColumns,
) -> Result<Vec<FieldParcel>, ShapefileError> {
    let (shp, dbf) = (shp.as_ref(), dbf.as_ref());
    let shapes = read_shapes(&fs::read(shp).map_err(io_err(shp))?)?;
    let table = read_dbf(&fs::read(dbf).map_err(io_err(dbf))?)?;
    if shapes.len() != table.rows.len() {
        return Err(ShapefileError::CountMismatch { shp: shapes.len(), dbf: table.rows.len() });
    }
    let id_col = column(&table.names, &columns.parcel_id)
        .ok_or_else(|| ShapefileError::MissingColumn(columns.parcel_id.clone()))?;
    let crop_col = column(&table.names, &columns.crop_code)
        .ok_or_else(|| ShapefileError::MissingColumn(columns.crop_code.clone()))?;
    let applicant_col = columns.applicant_id.as_deref().and_then(|n| column(&table.names, n));

    shapes
        .into_iter()
        .zip(table.rows)
        .enumerate()
        .map(|(i, (geometry, row))| {
            let parcel_id = row[id_col].clone();
            if parcel_id.is_empty() {
                return Err(ShapefileError::Malformed(format!("record {} has an empty parcel id", i + 1)));
            }
            Ok(FieldParcel {
                parcel_id,
                crop_code: row[crop_col].clone(),
                geometry,
                applicant_id: applicant_col.map(|c| row[c].clone()).filter(|s| !s.is_empty()),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Writing

fn shp_header(out: &mut Vec<u8>, file_len_bytes: usize, bbox: &BBox) {
    out.extend_from_slice(&FILE_CODE.to_be_bytes());
    out.extend_from_slice(&[0u8; 20]);
    out.extend_from_slice(&((file_len_bytes / 2) as i32).to_be_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&SHAPE_POLYGON.to_le_bytes());
    for v in [bbox.min_x, bbox.min_y, bbox.max_x, bbox.max_y, 0.0, 0.0, 0.0, 0.0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Rings in shapefile winding: exterior clockwise, holes counter-clockwise.
fn shapefile_rings(p: &Polygon) -> Vec<Vec<Coord>> {
    let orient = |ring: &Vec<Coord>, want_cw: bool| {
        let cw = signed_area2(ring) < 0.0;
        if cw == want_cw {
            ring.clone()
        } else {
            ring.iter().rev().copied().collect()
        }
    };
    std::iter::once(orient(&p.exterior, true))
        .chain(p.holes.iter().map(|h| orient(h, false)))
        .collect()
}

fn encode_record(p: &Polygon) -> Vec<u8> {
    let rings = shapefile_rings(p);
    let bbox = p.bbox();
    let n_points: usize = rings.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(44 + 4 * rings.len() + 16 * n_points);
    out.extend_from_slice(&SHAPE_POLYGON.to_le_bytes());
    for v in [bbox.min_x, bbox.min_y, bbox.max_x, bbox.max_y] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(rings.len() as i32).to_le_bytes());
    out.extend_from_slice(&(n_points as i32).to_le_bytes());
    let mut start = 0i32;
    for r in &rings {
        out.extend_from_slice(&start.to_le_bytes());
        start += r.len() as i32;
    }
    for r in &rings {
        for &(x, y) in r {
            out.extend_from_slice(&x.to_le_bytes());
            out.extend_from_slice(&y.to_le_bytes());
        }
    }
    out
}

fn encode_dbf(parcels: &[FieldParcel], columns: &ShapefileColumns) -> Result<Vec<u8>, ShapefileError> {
    let mut cols: Vec<(&str, Vec<&str>)> = vec![
        (&columns.parcel_id, parcels.iter().map(|p| p.parcel_id.as_str()).collect()),
        (&columns.crop_code, parcels.iter().map(|p| p.crop_code.as_str()).collect()),
    ];
    if let Some(name) = &columns.applicant_id {
        cols.push((name, parcels.iter().map(|p| p.applicant_id.as_deref().unwrap_or("")).collect()));
    }
    let mut widths = Vec::with_capacity(cols.len());
    for (name, values) in &cols {
        if name.is_empty() || name.len() > 10 {
            return Err(ShapefileError::Malformed(format!("column name {name:?} must be 1..=10 bytes")));
        }
        let w = values.iter().map(|v| v.len()).max().unwrap_or(0).max(1);
        if w > DBF_MAX_FIELD {
            return Err(ShapefileError::ValueTooLong { column: name.to_string(), len: w });
        }
        widths.push(w);
    }
    let header_len = 32 + 32 * cols.len() + 1;
    let record_len = 1 + widths.iter().sum::<usize>();

    let mut out = Vec::with_capacity(header_len + record_len * parcels.len() + 1);
    // Version, then a fixed last-update date (1970-01-01) for reproducible
    // output.
    out.extend_from_slice(&[0x03, 70, 1, 1]);
    out.extend_from_slice(&(parcels.len() as u32).to_le_bytes());
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(&(record_len as u16).to_le_bytes());
    out.extend_from_slice(&[0u8; 20]);
    for ((name, _), &w) in cols.iter().zip(&widths) {
        let mut desc = [0u8; 32];
        desc[..name.len()].copy_from_slice(name.as_bytes());
        desc[11] = b'C';
        desc[16] = w as u8;
        out.extend_from_slice(&desc);
    }
    out.push(0x0D);
    for i in 0..parcels.len() {
        out.push(b' ');
        for ((_, values), &w) in cols.iter().zip(&widths) {
            let v = values[i].as_bytes();
            out.extend_from_slice(v);
            out.extend(std::iter::repeat_n(b' ', w - v.len()));
        }
    }
    out.push(0x1A);
    Ok(out)
}

/// Write parcels as `.shp`, `.shx` and `.dbf`. Output is deterministic.
pub fn write_parcels_shapefile(
    parcels: &[FieldParcel],
    paths: &ShapefilePaths,
    columns: &ShapefileColumns,
) -> Result<(), ShapefileError> {
    for (i, p) in parcels.iter().enumerate() {
        p.geometry
            .validate()
            .map_err(|source| ShapefileError::InvalidGeometry { record: i + 1, source })?;
    }
    let dbf = encode_dbf(parcels, columns)?;
    let records: Vec<Vec<u8>> = parcels.iter().map(|p| encode_record(&p.geometry)).collect();
    let bbox = BBox::from_points(parcels.iter().flat_map(|p| p.geometry.exterior.iter().copied()))
        .unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0));

    let shp_len = HEADER_LEN + records.iter().map(|r| 8 + r.len()).sum::<usize>();
    let shx_len = HEADER_LEN + 8 * records.len();
    let mut shp = Vec::with_capacity(shp_len);
    let mut shx = Vec::with_capacity(shx_len);
    shp_header(&mut shp, shp_len, &bbox);
    shp_header(&mut shx, shx_len, &bbox);
    for (i, rec) in records.iter().enumerate() {
        let offset_words = (shp.len() / 2) as i32;
        let len_words = (rec.len() / 2) as i32;
        shx.extend_from_slice(&offset_words.to_be_bytes());
        shx.extend_from_slice(&len_words.to_be_bytes());
        shp.extend_from_slice(&((i + 1) as i32).to_be_bytes());
        shp.extend_from_slice(&len_words.to_be_bytes());
        shp.extend_from_slice(rec);
    }
    fs::write(&paths.shp, &shp).map_err(io_err(&paths.shp))?;
    fs::write(&paths.shx, &shx).map_err(io_err(&paths.shx))?;
    fs::write(&paths.dbf, &dbf).map_err(io_err(&paths.dbf))?;
    Ok(())
}
