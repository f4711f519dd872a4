//! Minimal GeoTIFF codec for stripped, uncompressed, little-endian files.
//!
//! Supported samples: 32-bit IEEE float (1 or 3 samples per pixel, chunky)
//! and 16-bit unsigned integers (1 sample). Georeferencing comes from
//! ModelPixelScale + ModelTiepoint anchored at raster point (0, 0) and an
//! EPSG code in the GeoKey directory. Anything else is rejected.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{GridGeometry, MultiBandRaster, Raster, RasterError, DEFAULT_NODATA};

const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_PLANAR_CONFIG: u16 = 284;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_EXTRA_SAMPLES: u16 = 338;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;
const TAG_MODEL_TRANSFORMATION: u16 = 34264;
const TAG_GEO_KEY_DIRECTORY: u16 = 34735;
const TAG_GDAL_NODATA: u16 = 42113;

const TYPE_ASCII: u16 = 2;
const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_DOUBLE: u16 = 12;

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_PROJECTED_CS_TYPE: u16 = 3072;

/// Target strip size for the writer.
const STRIP_BYTES: usize = 8192;

#[derive(Debug, Error)]
pub enum GeoTiffError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a TIFF file")]
    NotTiff,
    #[error("unsupported TIFF layout: {0}")]
    UnsupportedLayout(String),
    #[error("file has {0} samples per pixel; a single band is required")]
    MultiBand(u16),
    #[error("missing georeferencing: {0}")]
    MissingGeoreferencing(&'static str),
    #[error("unsupported sample format: {bits} bits, format code {format}")]
    UnsupportedSampleFormat { bits: u16, format: u16 },
    #[error("malformed TIFF: {0}")]
    Malformed(String),
    #[error("cannot encode raster: {0}")]
    Encode(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> GeoTiffError + '_ {
    move |source| GeoTiffError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleKind {
    F32,
    U16,
}

impl SampleKind {
    fn bytes(self) -> usize {
        match self {
            SampleKind::F32 => 4,
            SampleKind::U16 => 2,
        }
    }
}

// ---------------------------------------------------------------------------
// Writer

enum TagValue {
    Short(Vec<u16>),
    Long(Vec<u32>),
    Double(Vec<f64>),
    Ascii(String),
}

impl TagValue {
    fn type_code(&self) -> u16 {
        match self {
            TagValue::Short(_) => TYPE_SHORT,
            TagValue::Long(_) => TYPE_LONG,
            TagValue::Double(_) => TYPE_DOUBLE,
            TagValue::Ascii(_) => TYPE_ASCII,
        }
    }

    fn count(&self) -> u32 {
        match self {
            TagValue::Short(v) => v.len() as u32,
            TagValue::Long(v) => v.len() as u32,
            TagValue::Double(v) => v.len() as u32,
            TagValue::Ascii(s) => s.len() as u32 + 1,
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            TagValue::Short(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TagValue::Long(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TagValue::Double(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TagValue::Ascii(s) => {
                out.extend_from_slice(s.as_bytes());
                out.push(0);
            }
        }
        out
    }
}

fn is_geographic(epsg: u32) -> bool {
    (4000..5000).contains(&epsg)
}

fn format_nodata(nodata: f64) -> String {
    if nodata.is_nan() {
        "nan".to_string()
    } else {
        format!("{nodata}")
    }
}

fn encode(
    geometry: &GridGeometry,
    samples_per_pixel: u16,
    kind: SampleKind,
    nodata: Option<f64>,
    pixel_bytes: &[u8],
) -> Result<Vec<u8>, GeoTiffError> {
    geometry.validate()?;
    let width = u32::try_from(geometry.width).map_err(|_| GeoTiffError::Encode("width".into()))?;
    let height = u32::try_from(geometry.height).map_err(|_| GeoTiffError::Encode("height".into()))?;
    let row_bytes = geometry.width * samples_per_pixel as usize * kind.bytes();
    debug_assert_eq!(pixel_bytes.len(), row_bytes * geometry.height);
    let rows_per_strip = (STRIP_BYTES / row_bytes).clamp(1, geometry.height);
    let strip_count = geometry.height.div_ceil(rows_per_strip);
    if pixel_bytes.len() > u32::MAX as usize / 2 {
        return Err(GeoTiffError::Encode("raster too large for classic TIFF".into()));
    }

    let (bits, format) = match kind {
        SampleKind::F32 => (32u16, 3u16),
        SampleKind::U16 => (16u16, 1u16),
    };
    let spp = samples_per_pixel as usize;
    let (model_type, cs_key) = if is_geographic(geometry.crs) {
        (2u16, KEY_GEOGRAPHIC_TYPE)
    } else {
        (1u16, KEY_PROJECTED_CS_TYPE)
    };
    let crs = u16::try_from(geometry.crs)
        .map_err(|_| GeoTiffError::Encode(format!("EPSG code {} does not fit a GeoKey", geometry.crs)))?;

    let mut strip_counts = Vec::with_capacity(strip_count);
    for s in 0..strip_count {
        let rows = rows_per_strip.min(geometry.height - s * rows_per_strip);
        strip_counts.push((rows * row_bytes) as u32);
    }

    let mut tags: BTreeMap<u16, TagValue> = BTreeMap::new();
    tags.insert(TAG_IMAGE_WIDTH, TagValue::Long(vec![width]));
    tags.insert(TAG_IMAGE_LENGTH, TagValue::Long(vec![height]));
    tags.insert(TAG_BITS_PER_SAMPLE, TagValue::Short(vec![bits; spp]));
    tags.insert(TAG_COMPRESSION, TagValue::Short(vec![1]));
    tags.insert(TAG_PHOTOMETRIC, TagValue::Short(vec![1]));
    // Offsets are patched once the layout is known.
    tags.insert(TAG_STRIP_OFFSETS, TagValue::Long(vec![0; strip_count]));
    tags.insert(TAG_SAMPLES_PER_PIXEL, TagValue::Short(vec![samples_per_pixel]));
    tags.insert(TAG_ROWS_PER_STRIP, TagValue::Long(vec![rows_per_strip as u32]));
    tags.insert(TAG_STRIP_BYTE_COUNTS, TagValue::Long(strip_counts));
    tags.insert(TAG_PLANAR_CONFIG, TagValue::Short(vec![1]));
    if spp > 1 {
        tags.insert(TAG_EXTRA_SAMPLES, TagValue::Short(vec![0; spp - 1]));
    }
    tags.insert(TAG_SAMPLE_FORMAT, TagValue::Short(vec![format; spp]));
    tags.insert(
        TAG_MODEL_PIXEL_SCALE,
        TagValue::Double(vec![geometry.pixel_size_x, geometry.pixel_size_y, 0.0]),
    );
    tags.insert(
        TAG_MODEL_TIEPOINT,
        TagValue::Double(vec![0.0, 0.0, 0.0, geometry.origin_x, geometry.origin_y, 0.0]),
    );
    tags.insert(
        TAG_GEO_KEY_DIRECTORY,
        TagValue::Short(vec![
            1, 1, 0, 3, //
            KEY_MODEL_TYPE, 0, 1, model_type, //
            KEY_RASTER_TYPE, 0, 1, 1, //
            cs_key, 0, 1, crs,
        ]),
    );
    if let Some(nd) = nodata {
        tags.insert(TAG_GDAL_NODATA, TagValue::Ascii(format_nodata(nd)));
    }

    let ifd_offset = 8usize;
    let ifd_len = 2 + 12 * tags.len() + 4;
    let mut overflow_len = 0usize;
    for v in tags.values() {
        let n = v.encode().len();
        if n > 4 {
            overflow_len += n + (n & 1);
        }
    }
    let data_start = ifd_offset + ifd_len + overflow_len;
    let offsets: Vec<u32> = (0..strip_count)
        .map(|s| (data_start + s * rows_per_strip * row_bytes) as u32)
        .collect();
    tags.insert(TAG_STRIP_OFFSETS, TagValue::Long(offsets));

    let mut out = Vec::with_capacity(data_start + pixel_bytes.len());
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&(ifd_offset as u32).to_le_bytes());
    out.extend_from_slice(&(tags.len() as u16).to_le_bytes());
    let mut overflow = Vec::with_capacity(overflow_len);
    let overflow_base = ifd_offset + ifd_len;
    for (tag, value) in &tags {
        let bytes = value.encode();
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&value.type_code().to_le_bytes());
        out.extend_from_slice(&value.count().to_le_bytes());
        if bytes.len() <= 4 {
            let mut inline = [0u8; 4];
            inline[..bytes.len()].copy_from_slice(&bytes);
            out.extend_from_slice(&inline);
        } else {
            out.extend_from_slice(&((overflow_base + overflow.len()) as u32).to_le_bytes());
            overflow.extend_from_slice(&bytes);
            if bytes.len() & 1 == 1 {
                overflow.push(0);
            }
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&overflow);
    debug_assert_eq!(out.len(), data_start);
    out.extend_from_slice(pixel_bytes);
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), GeoTiffError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Write a single-band float raster.
pub fn write_geotiff(raster: &Raster, path: impl AsRef<Path>) -> Result<(), GeoTiffError> {
    let mut pixels = Vec::with_capacity(raster.values().len() * 4);
    for v in raster.values() {
        pixels.extend_from_slice(&v.to_le_bytes());
    }
    let bytes = encode(raster.geometry(), 1, SampleKind::F32, Some(raster.nodata() as f64), &pixels)?;
    write_file(path.as_ref(), &bytes)
}

/// Write a float raster with several pixel-interleaved bands.
pub fn write_geotiff_bands(raster: &MultiBandRaster, path: impl AsRef<Path>) -> Result<(), GeoTiffError> {
    let bands = raster.band_count();
    let spp = u16::try_from(bands).map_err(|_| GeoTiffError::Encode("too many bands".into()))?;
    let n = raster.geometry().len();
    let mut pixels = Vec::with_capacity(n * bands * 4);
    for i in 0..n {
        for b in 0..bands {
            pixels.extend_from_slice(&raster.band(b)[i].to_le_bytes());
        }
    }
    let bytes = encode(raster.geometry(), spp, SampleKind::F32, Some(raster.nodata() as f64), &pixels)?;
    write_file(path.as_ref(), &bytes)
}

/// Write 16-bit unsigned digital numbers (the raw-scene input format).
pub fn write_geotiff_u16(
    geometry: &GridGeometry,
    values: &[u16],
    nodata: Option<u16>,
    path: impl AsRef<Path>,
) -> Result<(), GeoTiffError> {
    if values.len() != geometry.len() {
        return Err(RasterError::LengthMismatch { expected: geometry.len(), actual: values.len() }.into());
    }
    let mut pixels = Vec::with_capacity(values.len() * 2);
    for v in values {
        pixels.extend_from_slice(&v.to_le_bytes());
    }
    let bytes = encode(geometry, 1, SampleKind::U16, nodata.map(f64::from), &pixels)?;
    write_file(path.as_ref(), &bytes)
}

// ---------------------------------------------------------------------------
// Reader

struct Entry {
    typ: u16,
    count: u32,
    /// Either the inline 4 value bytes or the offset they point at.
    value_or_offset: [u8; 4],
}

struct Ifd<'a> {
    data: &'a [u8],
    entries: BTreeMap<u16, Entry>,
}

fn u16_at(data: &[u8], at: usize) -> Result<u16, GeoTiffError> {
    data.get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| GeoTiffError::Malformed(format!("truncated at byte {at}")))
}

fn u32_at(data: &[u8], at: usize) -> Result<u32, GeoTiffError> {
    data.get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| GeoTiffError::Malformed(format!("truncated at byte {at}")))
}

impl<'a> Ifd<'a> {
    fn parse(data: &'a [u8]) -> Result<Self, GeoTiffError> {
        if data.len() < 8 {
            return Err(GeoTiffError::NotTiff);
        }
        match &data[0..4] {
            b"II*\0" => {}
            b"MM\0*" => return Err(GeoTiffError::UnsupportedLayout("big-endian byte order".into())),
            b"II+\0" | b"MM\0+" => return Err(GeoTiffError::UnsupportedLayout("BigTIFF".into())),
            _ => return Err(GeoTiffError::NotTiff),
        }
        let ifd = u32_at(data, 4)? as usize;
        let n = u16_at(data, ifd)? as usize;
        let mut entries = BTreeMap::new();
        for i in 0..n {
            let at = ifd + 2 + 12 * i;
            let tag = u16_at(data, at)?;
            let typ = u16_at(data, at + 2)?;
            let count = u32_at(data, at + 4)?;
            let raw = data
                .get(at + 8..at + 12)
                .ok_or_else(|| GeoTiffError::Malformed("truncated IFD".into()))?;
            entries.insert(tag, Entry { typ, count, value_or_offset: [raw[0], raw[1], raw[2], raw[3]] });
        }
        Ok(Self { data, entries })
    }

    fn has(&self, tag: u16) -> bool {
        self.entries.contains_key(&tag)
    }

    fn bytes(&self, tag: u16) -> Result<Option<(u16, usize, &[u8])>, GeoTiffError> {
        let Some(e) = self.entries.get(&tag) else {
            return Ok(None);
        };
        let size = match e.typ {
            1 | 2 | 6 | 7 => 1,
            3 | 8 => 2,
            4 | 9 | 11 => 4,
            5 | 10 | 12 => 8,
            t => return Err(GeoTiffError::Malformed(format!("tag {tag} has unknown type {t}"))),
        };
        let len = size * e.count as usize;
        let slice = if len <= 4 {
            &e.value_or_offset[..len]
        } else {
            let off = u32::from_le_bytes(e.value_or_offset) as usize;
            self.data
                .get(off..off + len)
                .ok_or_else(|| GeoTiffError::Malformed(format!("tag {tag} points past end of file")))?
        };
        Ok(Some((e.typ, e.count as usize, slice)))
    }

    fn uints(&self, tag: u16) -> Result<Option<Vec<u64>>, GeoTiffError> {
        let Some((typ, count, raw)) = self.bytes(tag)? else {
            return Ok(None);
        };
        let vals = match typ {
            TYPE_SHORT => (0..count).map(|i| u16::from_le_bytes([raw[2 * i], raw[2 * i + 1]]) as u64).collect(),
            TYPE_LONG => (0..count)
                .map(|i| u32::from_le_bytes(raw[4 * i..4 * i + 4].try_into().unwrap()) as u64)
                .collect(),
            1 => raw.iter().map(|&b| b as u64).collect(),
            t => return Err(GeoTiffError::Malformed(format!("tag {tag}: expected integer type, got {t}"))),
        };
        Ok(Some(vals))
    }

    fn uint(&self, tag: u16) -> Result<Option<u64>, GeoTiffError> {
        Ok(self.uints(tag)?.and_then(|v| v.first().copied()))
    }

    fn doubles(&self, tag: u16) -> Result<Option<Vec<f64>>, GeoTiffError> {
        let Some((typ, count, raw)) = self.bytes(tag)? else {
            return Ok(None);
        };
        if typ != TYPE_DOUBLE {
            return Err(GeoTiffError::Malformed(format!("tag {tag}: expected DOUBLE, got type {typ}")));
        }
        Ok(Some(
            (0..count).map(|i| f64::from_le_bytes(raw[8 * i..8 * i + 8].try_into().unwrap())).collect(),
        ))
    }

    fn ascii(&self, tag: u16) -> Result<Option<String>, GeoTiffError> {
        let Some((typ, _, raw)) = self.bytes(tag)? else {
            return Ok(None);
        };
        if typ != TYPE_ASCII {
            return Err(GeoTiffError::Malformed(format!("tag {tag}: expected ASCII")));
        }
        let s = raw.split(|&b| b == 0).next().unwrap_or_default();
        Ok(Some(String::from_utf8_lossy(s).trim().to_string()))
    }
}

struct Decoded {
    geometry: GridGeometry,
    samples_per_pixel: usize,
    nodata: f32,
    /// Pixel-interleaved samples widened to f32.
    samples: Vec<f32>,
}

fn decode(data: &[u8]) -> Result<Decoded, GeoTiffError> {
    let ifd = Ifd::parse(data)?;
    if ifd.has(TAG_TILE_WIDTH) {
        return Err(GeoTiffError::UnsupportedLayout("tiled TIFF".into()));
    }
    if ifd.has(TAG_MODEL_TRANSFORMATION) {
        return Err(GeoTiffError::UnsupportedLayout("rotated or sheared ModelTransformation".into()));
    }
    let width = ifd.uint(TAG_IMAGE_WIDTH)?.ok_or(GeoTiffError::Malformed("no ImageWidth".into()))? as usize;
    let height = ifd.uint(TAG_IMAGE_LENGTH)?.ok_or(GeoTiffError::Malformed("no ImageLength".into()))? as usize;
    let compression = ifd.uint(TAG_COMPRESSION)?.unwrap_or(1);
    if compression != 1 {
        return Err(GeoTiffError::UnsupportedLayout(format!("compression {compression}")));
    }
    let photometric = ifd.uint(TAG_PHOTOMETRIC)?.ok_or(GeoTiffError::Malformed("no PhotometricInterpretation".into()))?;
    if photometric != 1 {
        return Err(GeoTiffError::UnsupportedLayout(format!("photometric interpretation {photometric}")));
    }
    if ifd.uint(TAG_PLANAR_CONFIG)?.unwrap_or(1) != 1 {
        return Err(GeoTiffError::UnsupportedLayout("planar (band-sequential) configuration".into()));
    }
    let spp = ifd.uint(TAG_SAMPLES_PER_PIXEL)?.unwrap_or(1) as usize;
    if spp != 1 && spp != 3 {
        return Err(GeoTiffError::UnsupportedLayout(format!("{spp} samples per pixel")));
    }
    let bits = ifd.uints(TAG_BITS_PER_SAMPLE)?.ok_or(GeoTiffError::Malformed("no BitsPerSample".into()))?;
    let formats = ifd.uints(TAG_SAMPLE_FORMAT)?.unwrap_or_else(|| vec![1]);
    let bits0 = bits[0] as u16;
    let format0 = formats[0] as u16;
    if bits.iter().any(|&b| b as u16 != bits0) || formats.iter().any(|&f| f as u16 != format0) {
        return Err(GeoTiffError::UnsupportedSampleFormat { bits: bits0, format: format0 });
    }
    let kind = match (bits0, format0, spp) {
        (32, 3, _) => SampleKind::F32,
        (16, 1, 1) => SampleKind::U16,
        _ => return Err(GeoTiffError::UnsupportedSampleFormat { bits: bits0, format: format0 }),
    };

    let scale = ifd
        .doubles(TAG_MODEL_PIXEL_SCALE)?
        .ok_or(GeoTiffError::MissingGeoreferencing("ModelPixelScaleTag"))?;
    let tie = ifd
        .doubles(TAG_MODEL_TIEPOINT)?
        .ok_or(GeoTiffError::MissingGeoreferencing("ModelTiepointTag"))?;
    let keys = ifd
        .uints(TAG_GEO_KEY_DIRECTORY)?
        .ok_or(GeoTiffError::MissingGeoreferencing("GeoKeyDirectoryTag"))?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(GeoTiffError::Malformed("short georeferencing tags".into()));
    }
    if tie.len() != 6 || tie[0] != 0.0 || tie[1] != 0.0 {
        return Err(GeoTiffError::UnsupportedLayout("tiepoint not anchored at raster (0,0)".into()));
    }
    let crs = epsg_from_keys(&keys)?;
    let geometry = GridGeometry::new(width, height, tie[3], tie[4], scale[0], scale[1], crs)?;

    let nodata = match ifd.ascii(TAG_GDAL_NODATA)? {
        Some(s) => {
            let v: f64 = s
                .parse()
                .map_err(|_| GeoTiffError::Malformed(format!("GDAL_NODATA value {s:?}")))?;
            v as f32
        }
        None => DEFAULT_NODATA,
    };

    let offsets = ifd.uints(TAG_STRIP_OFFSETS)?.ok_or(GeoTiffError::Malformed("no StripOffsets".into()))?;
    let counts = ifd.uints(TAG_STRIP_BYTE_COUNTS)?.ok_or(GeoTiffError::Malformed("no StripByteCounts".into()))?;
    let rows_per_strip = ifd.uint(TAG_ROWS_PER_STRIP)?.unwrap_or(height as u64).max(1) as usize;
    let row_bytes = width * spp * kind.bytes();
    let expected_strips = height.div_ceil(rows_per_strip.min(height));
    if offsets.len() != counts.len() || offsets.len() != expected_strips {
        return Err(GeoTiffError::Malformed(format!(
            "{} strip offsets, {} byte counts, expected {expected_strips}",
            offsets.len(),
            counts.len()
        )));
    }
    let mut raw = Vec::with_capacity(row_bytes * height);
    for (s, (&off, &cnt)) in offsets.iter().zip(&counts).enumerate() {
        let rows = rows_per_strip.min(height - s * rows_per_strip);
        let need = rows * row_bytes;
        if (cnt as usize) < need {
            return Err(GeoTiffError::Malformed(format!("strip {s} holds {cnt} bytes, needs {need}")));
        }
        let strip = data
            .get(off as usize..off as usize + need)
            .ok_or_else(|| GeoTiffError::Malformed(format!("strip {s} past end of file")))?;
        raw.extend_from_slice(strip);
    }
    let samples: Vec<f32> = match kind {
        SampleKind::F32 => raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
        SampleKind::U16 => raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as f32).collect(),
    };
    Ok(Decoded { geometry, samples_per_pixel: spp, nodata, samples })
}

fn epsg_from_keys(keys: &[u64]) -> Result<u32, GeoTiffError> {
    if keys.len() < 4 {
        return Err(GeoTiffError::Malformed("short GeoKey directory".into()));
    }
    let n = keys[3] as usize;
    for i in 0..n {
        let base = 4 + 4 * i;
        let Some(k) = keys.get(base..base + 4) else {
            return Err(GeoTiffError::Malformed("truncated GeoKey directory".into()));
        };
        let (id, location, value) = (k[0] as u16, k[1], k[3]);
        if (id == KEY_PROJECTED_CS_TYPE || id == KEY_GEOGRAPHIC_TYPE) && location == 0 {
            if value == 0 || value == 32767 {
                return Err(GeoTiffError::MissingGeoreferencing("user-defined CRS has no EPSG code"));
            }
            return Ok(value as u32);
        }
    }
    Err(GeoTiffError::MissingGeoreferencing("no EPSG code in GeoKey directory"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, GeoTiffError> {
    fs::read(path).map_err(io_err(path))
}

/// Read a single-band GeoTIFF. 16-bit samples are widened to f32.
pub fn read_geotiff(path: impl AsRef<Path>) -> Result<Raster, GeoTiffError> {
    let d = decode(&read_bytes(path.as_ref())?)?;
    if d.samples_per_pixel != 1 {
        return Err(GeoTiffError::MultiBand(d.samples_per_pixel as u16));
    }
    Ok(Raster::new(d.geometry, d.samples, d.nodata)?)
}

/// Read a GeoTIFF with any supported number of bands.
pub fn read_geotiff_bands(path: impl AsRef<Path>) -> Result<MultiBandRaster, GeoTiffError> {
    let d = decode(&read_bytes(path.as_ref())?)?;
    let spp = d.samples_per_pixel;
    let bands = (0..spp)
        .map(|b| d.samples.iter().skip(b).step_by(spp).copied().collect())
        .collect();
    Ok(MultiBandRaster::new(d.geometry, bands, d.nodata)?)
}
