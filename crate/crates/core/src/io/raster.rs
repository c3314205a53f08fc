//! Versioned binary raster container.
//!
//! Layout, all integers little-endian:
//!
//! | field    | type                                   |
//! |----------|----------------------------------------|
//! | magic    | `b"PLIR"`                              |
//! | version  | `u16`                                  |
//! | height   | `u32`                                  |
//! | width    | `u32`                                  |
//! | channels | `u16`                                  |
//! | dtype    | `u8`: 1 = `f32`, 2 = `u8`              |
//! | names    | `channels` x (`u16` length, UTF-8)     |
//! | data     | row-major, channels interleaved        |

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const RASTER_MAGIC: &[u8; 4] = b"PLIR";
pub const RASTER_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    U8 = 2,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::U8),
            c => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RasterData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl RasterData {
    pub fn dtype(&self) -> DType {
        match self {
            RasterData::F32(_) => DType::F32,
            RasterData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RasterData::F32(v) => v.len(),
            RasterData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Multi-channel raster with named channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterContainer {
    pub height: usize,
    pub width: usize,
    pub names: Vec<String>,
    pub data: RasterData,
}

impl RasterContainer {
    pub fn new(height: usize, width: usize, names: Vec<String>, data: RasterData) -> Result<Self> {
        let r = Self {
            height,
            width,
            names,
            data,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn channels(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height > u32::MAX as usize || self.width > u32::MAX as usize || self.channels() > u16::MAX as usize {
            return Err(Error::Format("raster dimensions exceed the header range".into()));
        }
        if self.channels() == 0 {
            return Err(Error::Format("raster needs at least one channel".into()));
        }
        let expected = self.height * self.width * self.channels();
        if self.data.len() != expected {
            return Err(Error::shape(expected, self.data.len()));
        }
        if self.names.iter().any(|n| n.len() > u16::MAX as usize) {
            return Err(Error::Format("channel name too long".into()));
        }
        Ok(())
    }

    /// Single-channel `f32` raster from an `f64` grid.
    pub fn from_grid(name: &str, grid: &Grid<f64>) -> Self {
        Self::from_grids(&[(name, grid)]).expect("one grid always has consistent dims")
    }

    /// Interleaves several equally sized grids into one `f32` raster.
    pub fn from_grids(grids: &[(&str, &Grid<f64>)]) -> Result<Self> {
        let Some((_, first)) = grids.first() else {
            return Err(Error::invalid("no grids"));
        };
        let (h, w) = first.dims();
        if grids.iter().any(|(_, g)| g.dims() != (h, w)) {
            return Err(Error::invalid("grids differ in size"));
        }
        let mut data = Vec::with_capacity(h * w * grids.len());
        for i in 0..h * w {
            data.extend(grids.iter().map(|(_, g)| g.as_slice()[i] as f32));
        }
        Self::new(
            h,
            w,
            grids.iter().map(|(n, _)| n.to_string()).collect(),
            RasterData::F32(data),
        )
    }

    /// Single-channel `u8` raster.
    pub fn from_u8(name: &str, grid: &Grid<u8>) -> Self {
        Self {
            height: grid.height(),
            width: grid.width(),
            names: vec![name.to_string()],
            data: RasterData::U8(grid.as_slice().to_vec()),
        }
    }

    pub fn from_mask(name: &str, mask: &Grid<bool>) -> Self {
        Self::from_u8(name, &mask.map(|m| u8::from(*m)))
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Channel `c` widened to `f64`.
    pub fn channel(&self, c: usize) -> Result<Grid<f64>> {
        let n = self.channels();
        if c >= n {
            return Err(Error::invalid(format!("channel {c} of {n}")));
        }
        let values: Vec<f64> = match &self.data {
            RasterData::F32(v) => v.iter().skip(c).step_by(n).map(|x| *x as f64).collect(),
            RasterData::U8(v) => v.iter().skip(c).step_by(n).map(|x| *x as f64).collect(),
        };
        Grid::from_vec(self.height, self.width, values)
    }

    pub fn channel_by_name(&self, name: &str) -> Result<Grid<f64>> {
        let c = self
            .channel_index(name)
            .ok_or_else(|| Error::Format(format!("raster has no channel {name:?}")))?;
        self.channel(c)
    }

    /// First channel as a mask: non-zero is foreground.
    pub fn to_mask(&self) -> Result<Grid<bool>> {
        Ok(self.channel(0)?.map(|v| *v != 0.0))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        self.validate()?;
        w.write_all(RASTER_MAGIC)?;
        w.write_all(&RASTER_VERSION.to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.channels() as u16).to_le_bytes())?;
        w.write_all(&[self.data.dtype() as u8])?;
        for name in &self.names {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        match &self.data {
            RasterData::F32(v) => {
                let mut buf = Vec::with_capacity(v.len() * 4);
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
            RasterData::U8(v) => w.write_all(v)?,
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != RASTER_MAGIC {
            return Err(Error::Format("not a raster container".into()));
        }
        let version = read_u16(&mut r)?;
        if version != RASTER_VERSION {
            return Err(Error::Format(format!("unsupported raster version {version}")));
        }
        let height = read_u32(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        let channels = read_u16(&mut r)? as usize;
        let mut code = [0u8; 1];
        r.read_exact(&mut code).map_err(truncated)?;
        let dtype = DType::from_code(code[0])?;
        let mut names = Vec::with_capacity(channels);
        for _ in 0..channels {
            names.push(read_string(&mut r)?);
        }
        let count = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Format("raster size overflows".into()))?;
        let mut bytes = Vec::new();
        (&mut r).take((count * dtype.size()) as u64).read_to_end(&mut bytes)?;
        if bytes.len() != count * dtype.size() {
            return Err(Error::Format(format!(
                "raster data has {} bytes, header promises {}",
                bytes.len(),
                count * dtype.size()
            )));
        }
        let data = match dtype {
            DType::F32 => RasterData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            ),
            DType::U8 => RasterData::U8(bytes),
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after raster data".into()));
        }
        Self::new(height, width, names, data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file ends inside the header".into())
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u16(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(truncated)?;
    String::from_utf8(b).map_err(|_| Error::Format("channel name is not UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RasterContainer {
        let data = (0..24).map(|i| i as f32 * 0.37 - 2.0).collect();
        RasterContainer::new(2, 4, vec!["a".into(), "béta".into(), "c".into()], RasterData::F32(data)).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(&bytes[0..4], b"PLIR");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 4);
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), 3);
        assert_eq!(bytes[16], 1);
        assert_eq!(u16::from_le_bytes([bytes[17], bytes[18]]), 1);
        assert_eq!(bytes[19], b'a');
        let names_len = 3 + (2 + "béta".len()) + 3;
        assert_eq!(bytes.len(), 17 + names_len + 24 * 4);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut r = sample();
        if let RasterData::F32(v) = &mut r.data {
            v[3] = f32::NAN;
            v[4] = -0.0;
            v[5] = f32::MIN_POSITIVE / 2.0;
        }
        let bytes = r.to_bytes().unwrap();
        let back = RasterContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let u = RasterContainer::from_u8("m", &Grid::from_fn(3, 2, |x, y| (x * 7 + y) as u8));
        assert_eq!(RasterContainer::from_bytes(&u.to_bytes().unwrap()).unwrap(), u);
    }

    #[test]
    fn channels_are_interleaved() {
        let a = Grid::from_fn(2, 3, |x, y| (x + 10 * y) as f64);
        let b = a.map(|v| -v);
        let r = RasterContainer::from_grids(&[("a", &a), ("b", &b)]).unwrap();
        if let RasterData::F32(v) = &r.data {
            assert_eq!(&v[0..4], &[0.0, -0.0, 1.0, -1.0]);
        }
        assert_eq!(r.channel_by_name("b").unwrap(), b);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(
            RasterContainer::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            RasterContainer::from_bytes(&bytes[..10]),
            Err(Error::Format(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(RasterContainer::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(RasterContainer::from_bytes(&bad).is_err());
        let mut dtype = bytes;
        dtype[16] = 9;
        assert!(RasterContainer::from_bytes(&dtype).is_err());
    }
}
