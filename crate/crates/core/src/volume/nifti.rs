//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reader and writer.

use super::{affine_is_axis_aligned, diagonal_affine, Affine, Dims, Mask, Spacing, Volume, VolumeError};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

/// Voxel storage types understood by the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
    Int8,
    Uint16,
    Uint32,
}

impl NiftiDatatype {
    pub fn from_code(code: i16) -> Option<Self> {
        Some(match code {
            2 => Self::Uint8,
            4 => Self::Int16,
            8 => Self::Int32,
            16 => Self::Float32,
            64 => Self::Float64,
            256 => Self::Int8,
            512 => Self::Uint16,
            768 => Self::Uint32,
            _ => return None,
        })
    }

    pub fn code(self) -> i16 {
        match self {
            Self::Uint8 => 2,
            Self::Int16 => 4,
            Self::Int32 => 8,
            Self::Float32 => 16,
            Self::Float64 => 64,
            Self::Int8 => 256,
            Self::Uint16 => 512,
            Self::Uint32 => 768,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Uint8 | Self::Int8 => 1,
            Self::Int16 | Self::Uint16 => 2,
            Self::Int32 | Self::Uint32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, Self::Float32 | Self::Float64)
    }
}

/// Decoded image: geometry plus voxel values after slope/intercept scaling.
#[derive(Debug, Clone)]
pub struct NiftiImage {
    pub dims: Dims,
    pub spacing: Spacing,
    pub datatype: NiftiDatatype,
    pub affine: Affine,
    /// True when `scl_slope`/`scl_inter` changed the stored values.
    pub scaled: bool,
    pub data: Vec<f64>,
}

impl NiftiImage {
    pub fn into_volume(self) -> Result<Volume, VolumeError> {
        let data = self.data.iter().map(|v| *v as f32).collect();
        Volume::with_affine(self.dims, self.spacing, data, self.affine)
    }

    /// Integer-coded images only; every non-zero voxel becomes foreground.
    pub fn into_mask(self, label: impl Into<String>) -> Result<Mask, VolumeError> {
        if !self.datatype.is_integer() {
            return Err(VolumeError::UnsupportedFormat(format!(
                "mask data must be integer-coded, found {:?}",
                self.datatype
            )));
        }
        let bits = self.data.iter().map(|v| *v != 0.0).collect();
        Mask::new(self.dims, self.spacing, bits, label)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, offset: usize) -> Result<[u8; N], VolumeError> {
        self.buf
            .get(offset..offset + N)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| parse_err(offset, "unexpected end of header"))
    }

    fn i16(&self, offset: usize) -> Result<i16, VolumeError> {
        let b = self.bytes::<2>(offset)?;
        Ok(if self.big_endian { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) })
    }

    fn f32(&self, offset: usize) -> Result<f32, VolumeError> {
        let b = self.bytes::<4>(offset)?;
        Ok(if self.big_endian { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) })
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> VolumeError {
    VolumeError::Parse {
        offset,
        message: message.into(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, VolumeError> {
    let io = |source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_nifti(path: impl AsRef<Path>) -> Result<NiftiImage, VolumeError> {
    let path = path.as_ref();
    let buf = read_file(path)?;
    parse_nifti(&buf)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    load_nifti(path)?.into_volume()
}

pub fn load_mask(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Mask, VolumeError> {
    load_nifti(path)?.into_mask(label)
}

/// Decodes an uncompressed single-file NIfTI-1 byte stream.
pub fn parse_nifti(buf: &[u8]) -> Result<NiftiImage, VolumeError> {
    if buf.len() < HEADER_SIZE {
        return Err(parse_err(buf.len(), format!("file has {} bytes, header needs {HEADER_SIZE}", buf.len())));
    }
    let le = i32::from_le_bytes(buf[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(buf[0..4].try_into().unwrap());
    let big_endian = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => return Err(parse_err(0, format!("sizeof_hdr is {le}, expected 348"))),
    };
    let r = Reader { buf, big_endian };

    let magic = r.bytes::<4>(344)?;
    if &magic != MAGIC_SINGLE && &magic != MAGIC_PAIR {
        return Err(parse_err(344, format!("bad magic {magic:?}")));
    }
    if &magic == MAGIC_PAIR {
        return Err(VolumeError::UnsupportedFormat("detached .hdr/.img pairs are not supported".into()));
    }

    let mut dim = [0i16; 8];
    for (k, d) in dim.iter_mut().enumerate() {
        *d = r.i16(40 + 2 * k)?;
    }
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(parse_err(40, format!("dim[0] = {ndim} out of range")));
    }
    let ndim = ndim as usize;
    // Trailing singleton axes (e.g. a 4D file with one frame) still describe a 3D grid.
    let effective = (1..=ndim).rev().find(|&k| dim[k] != 1).unwrap_or(0).max(3);
    if ndim < 3 || effective != 3 {
        return Err(VolumeError::Dimension(if ndim < 3 { ndim } else { effective }));
    }
    for k in 1..=3 {
        if dim[k] <= 0 {
            return Err(parse_err(40 + 2 * k, format!("dim[{k}] = {} must be positive", dim[k])));
        }
    }
    let dims = Dims::new(dim[1] as usize, dim[2] as usize, dim[3] as usize);

    let code = r.i16(70)?;
    let datatype = NiftiDatatype::from_code(code)
        .ok_or_else(|| VolumeError::UnsupportedFormat(format!("datatype code {code}")))?;

    let mut pixdim = [0f64; 3];
    for (k, p) in pixdim.iter_mut().enumerate() {
        *p = r.f32(80 + 4 * k)? as f64;
    }
    let spacing = Spacing::new(pixdim[0].abs(), pixdim[1].abs(), pixdim[2].abs())
        .map_err(|_| parse_err(80, format!("invalid pixdim {pixdim:?}")))?;

    let vox_offset = r.f32(108)?;
    if !(vox_offset >= 0.0) {
        return Err(parse_err(108, format!("invalid vox_offset {vox_offset}")));
    }
    let vox_offset = (vox_offset as usize).max(DATA_OFFSET);
    let slope = r.f32(112)? as f64;
    let inter = r.f32(116)? as f64;
    let scaled = slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope != 1.0 || inter != 0.0);

    let qform_code = r.i16(252)?;
    let sform_code = r.i16(254)?;
    let affine = if sform_code > 0 {
        let mut a = [[0.0; 4]; 4];
        for row in 0..3 {
            for col in 0..4 {
                a[row][col] = r.f32(280 + 16 * row + 4 * col)? as f64;
            }
        }
        a[3][3] = 1.0;
        a
    } else if qform_code > 0 {
        qform_affine(&r, &spacing)?
    } else {
        diagonal_affine(&spacing)
    };
    if !affine_is_axis_aligned(&affine) {
        log::warn!("non axis-aligned affine; voxel axes are treated as axis-aligned");
    }

    let n = dims.len();
    let size = datatype.size();
    let end = vox_offset + n * size;
    if buf.len() < end {
        return Err(parse_err(
            buf.len(),
            format!("voxel data truncated: need {end} bytes, have {}", buf.len()),
        ));
    }
    let raw = &buf[vox_offset..end];
    let mut data = decode(raw, datatype, big_endian);
    if scaled {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    Ok(NiftiImage {
        dims,
        spacing,
        datatype,
        affine,
        scaled,
        data,
    })
}

fn qform_affine(r: &Reader<'_>, spacing: &Spacing) -> Result<Affine, VolumeError> {
    let b = r.f32(256)? as f64;
    let c = r.f32(260)? as f64;
    let d = r.f32(264)? as f64;
    let qoff = [r.f32(268)? as f64, r.f32(272)? as f64, r.f32(276)? as f64];
    let qfac = if r.f32(76)? < 0.0 { -1.0 } else { 1.0 };
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let rot = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - b * b - c * c],
    ];
    let s = [spacing.dx, spacing.dy, spacing.dz * qfac];
    let mut out = [[0.0; 4]; 4];
    for row in 0..3 {
        for col in 0..3 {
            out[row][col] = rot[row][col] * s[col];
        }
        out[row][3] = qoff[row];
    }
    out[3][3] = 1.0;
    Ok(out)
}

fn decode(raw: &[u8], datatype: NiftiDatatype, big_endian: bool) -> Vec<f64> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            raw.chunks_exact($n)
                .map(|c| {
                    let b: [u8; $n] = c.try_into().unwrap();
                    (if big_endian { <$t>::from_be_bytes(b) } else { <$t>::from_le_bytes(b) }) as f64
                })
                .collect()
        };
    }
    match datatype {
        NiftiDatatype::Uint8 => raw.iter().map(|v| *v as f64).collect(),
        NiftiDatatype::Int8 => raw.iter().map(|v| *v as i8 as f64).collect(),
        NiftiDatatype::Int16 => conv!(i16, 2),
        NiftiDatatype::Uint16 => conv!(u16, 2),
        NiftiDatatype::Int32 => conv!(i32, 4),
        NiftiDatatype::Uint32 => conv!(u32, 4),
        NiftiDatatype::Float32 => conv!(f32, 4),
        NiftiDatatype::Float64 => conv!(f64, 8),
    }
}

fn header(dims: Dims, spacing: &Spacing, affine: &Affine, datatype: NiftiDatatype) -> Vec<u8> {
    let mut h = vec![0u8; DATA_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let dim = [3i16, dims.nx as i16, dims.ny as i16, dims.nz as i16, 1, 1, 1, 1];
    for (k, d) in dim.iter().enumerate() {
        put_i16(&mut h, 40 + 2 * k, *d);
    }
    put_i16(&mut h, 70, datatype.code());
    put_i16(&mut h, 72, (datatype.size() * 8) as i16);
    let pixdim = [1.0, spacing.dx, spacing.dy, spacing.dz, 0.0, 0.0, 0.0, 0.0];
    for (k, p) in pixdim.iter().enumerate() {
        put_f32(&mut h, 76 + 4 * k, *p as f32);
    }
    put_f32(&mut h, 108, DATA_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    // xyzt_units: millimeters
    h[123] = 2;
    let descrip = b"segreport";
    h[148..148 + descrip.len()].copy_from_slice(descrip);
    put_i16(&mut h, 252, 0);
    put_i16(&mut h, 254, 1);
    for row in 0..3 {
        for col in 0..4 {
            put_f32(&mut h, 280 + 16 * row + 4 * col, affine[row][col] as f32);
        }
    }
    h[344..348].copy_from_slice(MAGIC_SINGLE);
    h
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), VolumeError> {
    let io = |source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let gz = path.extension().is_some_and(|e| e == "gz");
    let file = File::create(path).map_err(io)?;
    if gz {
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(bytes).map_err(io)?;
        enc.finish().map_err(io)?;
    } else {
        let mut file = file;
        file.write_all(bytes).map_err(io)?;
    }
    Ok(())
}

/// Writes int16 when every value is an integer in range, float32 otherwise.
pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let integral = v
        .data()
        .iter()
        .all(|x| x.fract() == 0.0 && *x >= i16::MIN as f32 && *x <= i16::MAX as f32);
    let datatype = if integral { NiftiDatatype::Int16 } else { NiftiDatatype::Float32 };
    let mut bytes = header(v.dims(), &v.spacing(), v.affine(), datatype);
    bytes.reserve(v.data().len() * datatype.size());
    if integral {
        for x in v.data() {
            bytes.extend_from_slice(&(*x as i16).to_le_bytes());
        }
    } else {
        for x in v.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_file(path.as_ref(), &bytes)
}

/// Writes a uint8 image with 1 for foreground.
pub fn save_mask(m: &Mask, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let affine = diagonal_affine(&m.spacing());
    let mut bytes = header(m.dims(), &m.spacing(), &affine, NiftiDatatype::Uint8);
    bytes.extend(m.bits().iter().map(|b| *b as u8));
    write_file(path.as_ref(), &bytes)
}
