//! NIfTI-1 single-file reader/writer.
//!
//! Supports `.nii` and gzip-compressed `.nii.gz` (detected by content
//! sniffing, not extension), little- and big-endian files, datatypes
//! uint8/int16/float32, and the scl_slope/scl_inter intensity scaling.
//! Output is always little-endian float32 (scalars), uint8 (labels) or
//! 4-D float32 (region probabilities) with identity scaling, so a
//! write-then-read round trip reproduces the in-memory buffer bit for
//! bit. qform/sform orientation fields are carried through untouched.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::labels::RegionProbs;
use crate::volume::{GridShape, LabelVolume, Orientation, ScalarVolume};

const HEADER_LEN: usize = 348;
/// Header plus the 4-byte extension pad; data starts here.
const DATA_OFFSET: usize = 352;
const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

/// Byte offsets of the header fields this crate touches.
mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const REGULAR: usize = 38;
    pub const DIM: usize = 40; // i16[8]
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76; // f32[8]
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN: usize = 256; // f32[6]: quatern_b..qoffset_z
    pub const SROW: usize = 280; // f32[12]
    pub const MAGIC: usize = 344;
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn fmt_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// Reads multi-byte header fields in the file's byte order.
#[derive(Clone, Copy)]
struct Codec {
    be: bool,
}

impl Codec {
    fn i16(&self, b: &[u8], at: usize) -> i16 {
        let a = [b[at], b[at + 1]];
        if self.be {
            i16::from_be_bytes(a)
        } else {
            i16::from_le_bytes(a)
        }
    }

    fn i32(&self, b: &[u8], at: usize) -> i32 {
        let a = [b[at], b[at + 1], b[at + 2], b[at + 3]];
        if self.be {
            i32::from_be_bytes(a)
        } else {
            i32::from_le_bytes(a)
        }
    }

    fn f32(&self, b: &[u8], at: usize) -> f32 {
        f32::from_bits(self.i32(b, at) as u32)
    }
}

/// Decoded header subset.
struct Header {
    ndim: usize,
    dims: [usize; 7],
    shape: GridShape,
    spacing: [f32; 3],
    datatype: i16,
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    orient: Orientation,
}

impl Header {
    /// True when scl_slope/scl_inter denote a real transformation.
    fn scaling_active(&self) -> bool {
        self.scl_slope.is_finite()
            && self.scl_slope != 0.0
            && !(self.scl_slope == 1.0 && self.scl_inter == 0.0)
    }

    fn nvox(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Raw voxel payload before any scaling.
enum RawData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

/// Whole file contents, gunzipped when the gzip magic is present.
fn load_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| io_err(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| fmt_err(path, format_args!("gzip decode failed: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<(Header, Codec)> {
    if bytes.len() < HEADER_LEN {
        return Err(fmt_err(
            path,
            format_args!("file holds {} bytes, header needs {HEADER_LEN}", bytes.len()),
        ));
    }
    // sizeof_hdr doubles as the endianness probe.
    let le = Codec { be: false };
    let be = Codec { be: true };
    let codec = if le.i32(bytes, offset::SIZEOF_HDR) == HEADER_LEN as i32 {
        le
    } else if be.i32(bytes, offset::SIZEOF_HDR) == HEADER_LEN as i32 {
        be
    } else {
        return Err(fmt_err(path, "sizeof_hdr is not 348 in either byte order"));
    };
    let magic = &bytes[offset::MAGIC..offset::MAGIC + 4];
    if magic != MAGIC_SINGLE {
        return Err(fmt_err(
            path,
            format_args!("bad magic {magic:?}, expected \"n+1\\0\" single-file"),
        ));
    }

    let ndim = codec.i16(bytes, offset::DIM);
    if !(1..=7).contains(&ndim) {
        return Err(fmt_err(path, format_args!("dim[0] = {ndim}, expected 1..=7")));
    }
    let ndim = ndim as usize;
    let mut dims = [1usize; 7];
    for (k, d) in dims.iter_mut().enumerate().take(ndim) {
        let v = codec.i16(bytes, offset::DIM + 2 * (k + 1));
        if v <= 0 {
            return Err(fmt_err(path, format_args!("dim[{}] = {v}, must be positive", k + 1)));
        }
        *d = v as usize;
    }
    let shape = GridShape::new(dims[0], dims[1], dims[2])?;

    let mut spacing = [1.0f32; 3];
    for (k, s) in spacing.iter_mut().enumerate() {
        let v = codec.f32(bytes, offset::PIXDIM + 4 * (k + 1));
        // Absent or junk pixdim falls back to unit spacing.
        if v.is_finite() && v > 0.0 {
            *s = v;
        }
    }

    let datatype = codec.i16(bytes, offset::DATATYPE);
    let vox_offset = codec.f32(bytes, offset::VOX_OFFSET);
    if !vox_offset.is_finite() || vox_offset < HEADER_LEN as f32 {
        return Err(fmt_err(path, format_args!("vox_offset {vox_offset} is invalid")));
    }

    let mut quatern = [0.0f32; 6];
    for (k, q) in quatern.iter_mut().enumerate() {
        *q = codec.f32(bytes, offset::QUATERN + 4 * k);
    }
    let mut srow = [0.0f32; 12];
    for (k, s) in srow.iter_mut().enumerate() {
        *s = codec.f32(bytes, offset::SROW + 4 * k);
    }

    let header = Header {
        ndim,
        dims,
        shape,
        spacing,
        datatype,
        vox_offset: vox_offset as usize,
        scl_slope: codec.f32(bytes, offset::SCL_SLOPE),
        scl_inter: codec.f32(bytes, offset::SCL_INTER),
        orient: Orientation {
            qform_code: codec.i16(bytes, offset::QFORM_CODE),
            sform_code: codec.i16(bytes, offset::SFORM_CODE),
            quatern,
            srow,
        },
    };
    Ok((header, codec))
}

fn decode_raw(bytes: &[u8], header: &Header, codec: Codec, path: &Path) -> Result<RawData> {
    let n = header.nvox();
    let elem = match header.datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => {
            return Err(Error::UnsupportedDatatype(format!(
                "{}: datatype code {other} (supported: uint8=2, int16=4, float32=16)",
                path.display()
            )))
        }
    };
    let start = header.vox_offset;
    let need = n * elem;
    if bytes.len() < start + need {
        return Err(fmt_err(
            path,
            format_args!(
                "truncated data: {} bytes past offset {start}, need {need}",
                bytes.len().saturating_sub(start)
            ),
        ));
    }
    let data = &bytes[start..start + need];
    Ok(match header.datatype {
        DT_UINT8 => RawData::U8(data.to_vec()),
        DT_INT16 => RawData::I16((0..n).map(|i| codec.i16(data, 2 * i)).collect()),
        _ => RawData::F32((0..n).map(|i| codec.f32(data, 4 * i)).collect()),
    })
}

/// Rejects trailing dims > 1 so a 4-D file cannot pose as a 3-D volume.
fn require_3d(header: &Header, path: &Path) -> Result<()> {
    for k in 3..header.ndim {
        if header.dims[k] > 1 {
            return Err(fmt_err(
                path,
                format_args!("dim[{}] = {}, expected a 3-D volume", k + 1, header.dims[k]),
            ));
        }
    }
    Ok(())
}

fn scaled_f32(header: &Header, raw: f64) -> f32 {
    if header.scaling_active() {
        (raw * header.scl_slope as f64 + header.scl_inter as f64) as f32
    } else {
        raw as f32
    }
}

/// Read a 3-D file as real-valued intensities.
///
/// Integer voxels are widened to f32 with scl scaling applied; float32
/// voxels keep their bits when scaling is absent or the identity.
pub fn read_scalar_nifti(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let path = path.as_ref();
    let bytes = load_bytes(path)?;
    let (header, codec) = parse_header(&bytes, path)?;
    require_3d(&header, path)?;
    let raw = decode_raw(&bytes, &header, codec, path)?;
    let data: Vec<f32> = match raw {
        RawData::U8(v) => v.iter().map(|x| scaled_f32(&header, *x as f64)).collect(),
        RawData::I16(v) => v.iter().map(|x| scaled_f32(&header, *x as f64)).collect(),
        RawData::F32(v) => {
            if header.scaling_active() {
                v.iter().map(|x| scaled_f32(&header, *x as f64)).collect()
            } else {
                v
            }
        }
    };
    ScalarVolume::new(header.shape, header.spacing, header.orient, data)
}

/// Read a 3-D integer-typed file as segmentation labels.
///
/// Requires uint8 or int16 voxels with no intensity scaling; every value
/// must lie in {0, 1, 2, 3}.
pub fn read_label_nifti(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    let bytes = load_bytes(path)?;
    let (header, codec) = parse_header(&bytes, path)?;
    require_3d(&header, path)?;
    if header.datatype == DT_FLOAT32 {
        return Err(Error::UnsupportedDatatype(format!(
            "{}: float32 voxels cannot be read as labels",
            path.display()
        )));
    }
    if header.scaling_active() {
        return Err(fmt_err(
            path,
            format_args!(
                "label file carries intensity scaling (slope {}, inter {})",
                header.scl_slope, header.scl_inter
            ),
        ));
    }
    let raw = decode_raw(&bytes, &header, codec, path)?;
    let data: Vec<u8> = match raw {
        RawData::U8(v) => v,
        RawData::I16(v) => {
            let mut out = Vec::with_capacity(v.len());
            for x in v {
                if !(0..=255).contains(&x) {
                    return Err(Error::LabelDomain(format!(
                        "{}: value {x} cannot be a label",
                        path.display()
                    )));
                }
                out.push(x as u8);
            }
            out
        }
        RawData::F32(_) => unreachable!("float32 rejected above"),
    };
    LabelVolume::new(header.shape, header.spacing, header.orient, data).map_err(|e| match e {
        Error::LabelDomain(msg) => Error::LabelDomain(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Read a 4-D file with three channels as region probabilities in
/// (ET, TC, WT) channel order.
pub fn read_region_probs(path: impl AsRef<Path>) -> Result<RegionProbs> {
    let path = path.as_ref();
    let bytes = load_bytes(path)?;
    let (header, codec) = parse_header(&bytes, path)?;
    if header.ndim < 4 || header.dims[3] != 3 {
        return Err(fmt_err(
            path,
            format_args!(
                "expected a 4-D file with 3 channels, got dim[0]={} dim[4]={}",
                header.ndim, header.dims[3]
            ),
        ));
    }
    for k in 4..header.ndim {
        if header.dims[k] > 1 {
            return Err(fmt_err(
                path,
                format_args!("dim[{}] = {}, expected (x, y, z, 3)", k + 1, header.dims[k]),
            ));
        }
    }
    let raw = decode_raw(&bytes, &header, codec, path)?;
    let all: Vec<f32> = match raw {
        RawData::U8(v) => v.iter().map(|x| scaled_f32(&header, *x as f64)).collect(),
        RawData::I16(v) => v.iter().map(|x| scaled_f32(&header, *x as f64)).collect(),
        RawData::F32(v) => {
            if header.scaling_active() {
                v.iter().map(|x| scaled_f32(&header, *x as f64)).collect()
            } else {
                v
            }
        }
    };
    let n = header.shape.len();
    let mut channels = Vec::with_capacity(3);
    for c in 0..3 {
        channels.push(ScalarVolume::new(
            header.shape,
            header.spacing,
            header.orient,
            all[c * n..(c + 1) * n].to_vec(),
        )?);
    }
    let wt = channels.pop().unwrap();
    let tc = channels.pop().unwrap();
    let et = channels.pop().unwrap();
    RegionProbs::new(et, tc, wt)
}

struct HeaderSpec {
    dims: [usize; 7],
    ndim: usize,
    datatype: i16,
    bitpix: i16,
    spacing: [f32; 3],
    orient: Orientation,
}

fn build_header(spec: &HeaderSpec) -> [u8; DATA_OFFSET] {
    let mut h = [0u8; DATA_OFFSET];
    let put_i32 = |h: &mut [u8], at: usize, v: i32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());
    let put_i16 = |h: &mut [u8], at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());

    put_i32(&mut h, offset::SIZEOF_HDR, HEADER_LEN as i32);
    h[offset::REGULAR] = b'r';
    put_i16(&mut h, offset::DIM, spec.ndim as i16);
    for k in 0..spec.ndim {
        put_i16(&mut h, offset::DIM + 2 * (k + 1), spec.dims[k] as i16);
    }
    put_i16(&mut h, offset::DATATYPE, spec.datatype);
    put_i16(&mut h, offset::BITPIX, spec.bitpix);
    put_f32(&mut h, offset::PIXDIM, 1.0);
    for k in 0..3 {
        put_f32(&mut h, offset::PIXDIM + 4 * (k + 1), spec.spacing[k]);
    }
    for k in 3..spec.ndim {
        put_f32(&mut h, offset::PIXDIM + 4 * (k + 1), 1.0);
    }
    put_f32(&mut h, offset::VOX_OFFSET, DATA_OFFSET as f32);
    put_f32(&mut h, offset::SCL_SLOPE, 1.0);
    put_f32(&mut h, offset::SCL_INTER, 0.0);
    h[offset::XYZT_UNITS] = 2; // millimetres
    put_i16(&mut h, offset::QFORM_CODE, spec.orient.qform_code);
    put_i16(&mut h, offset::SFORM_CODE, spec.orient.sform_code);
    for (k, q) in spec.orient.quatern.iter().enumerate() {
        put_f32(&mut h, offset::QUATERN + 4 * k, *q);
    }
    for (k, s) in spec.orient.srow.iter().enumerate() {
        put_f32(&mut h, offset::SROW + 4 * k, *s);
    }
    h[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(&MAGIC_SINGLE);
    h
}

/// Writes `.gz` output when the path ends in "gz"; plain bytes otherwise.
/// Compression parameters are fixed so output bytes are reproducible.
fn write_bytes(path: &Path, header: &[u8], payload: &[u8]) -> Result<()> {
    let gz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out: Box<dyn Write> = if gz {
        Box::new(GzEncoder::new(file, Compression::new(6)))
    } else {
        Box::new(std::io::BufWriter::new(file))
    };
    out.write_all(header).map_err(|e| io_err(path, e))?;
    out.write_all(payload).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn dims3(shape: GridShape) -> [usize; 7] {
    [shape.dx, shape.dy, shape.dz, 1, 1, 1, 1]
}

/// Write intensities as little-endian float32.
pub fn write_scalar_nifti(vol: &ScalarVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = build_header(&HeaderSpec {
        dims: dims3(vol.shape()),
        ndim: 3,
        datatype: DT_FLOAT32,
        bitpix: 32,
        spacing: vol.spacing(),
        orient: *vol.orient(),
    });
    let mut payload = Vec::with_capacity(vol.data().len() * 4);
    for v in vol.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &header, &payload)
}

/// Write labels as uint8.
pub fn write_label_nifti(vol: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = build_header(&HeaderSpec {
        dims: dims3(vol.shape()),
        ndim: 3,
        datatype: DT_UINT8,
        bitpix: 8,
        spacing: vol.spacing(),
        orient: *vol.orient(),
    });
    write_bytes(path, &header, vol.data())
}

/// Write region probabilities as a 4-D float32 file, channels in
/// (ET, TC, WT) order along the fourth axis.
pub fn write_region_probs(probs: &RegionProbs, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let shape = probs.et().shape();
    let mut dims = dims3(shape);
    dims[3] = 3;
    let header = build_header(&HeaderSpec {
        dims,
        ndim: 4,
        datatype: DT_FLOAT32,
        bitpix: 32,
        spacing: probs.et().spacing(),
        orient: *probs.et().orient(),
    });
    let mut payload = Vec::with_capacity(shape.len() * 12);
    for chan in [probs.et(), probs.tc(), probs.wt()] {
        for v in chan.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path, &header, &payload)
}
