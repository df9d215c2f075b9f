use std::fs;
use std::path::Path;

use crate::domain::{Grid, InstanceMap, Mask};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NUCT";
pub const VERSION: u8 = 0x01;

/// Element storage of a tensor file.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(Vec<u32>),
    F32(Vec<f32>),
}

impl TensorData {
    pub fn dtype(&self) -> u8 {
        match self {
            TensorData::U8(_) => 0x01,
            TensorData::U16(_) => 0x02,
            TensorData::U32(_) => 0x04,
            TensorData::F32(_) => 0x0A,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::U16(v) => v.len(),
            TensorData::U32(v) => v.len(),
            TensorData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype_name(&self) -> &'static str {
        match self {
            TensorData::U8(_) => "u8",
            TensorData::U16(_) => "u16",
            TensorData::U32(_) => "u32",
            TensorData::F32(_) => "f32",
        }
    }
}

fn element_size(dtype: u8) -> Option<usize> {
    match dtype {
        0x01 => Some(1),
        0x02 => Some(2),
        0x04 => Some(4),
        0x0A => Some(4),
        _ => None,
    }
}

/// Row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<u32>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::Format(format!(
                "{} dimensions exceed 255",
                dims.len()
            )));
        }
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let esize = element_size(self.data.dtype()).expect("known dtype");
        let mut out = Vec::with_capacity(7 + 4 * self.dims.len() + esize * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.data.dtype());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::U16(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 7 {
            return Err(Error::Format(format!(
                "truncated header ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        let dtype = bytes[5];
        let esize = element_size(dtype)
            .ok_or_else(|| Error::Format(format!("unknown dtype 0x{dtype:02X}")))?;
        let ndim = bytes[6] as usize;
        let header = 7 + 4 * ndim;
        if bytes.len() < header {
            return Err(Error::Format("truncated dimension list".into()));
        }
        let dims: Vec<u32> = bytes[7..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let n = element_count(&dims)?;
        let payload = n
            .checked_mul(esize)
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let body = &bytes[header..];
        if body.len() < payload {
            return Err(Error::Format(format!(
                "truncated payload: {} of {payload} bytes",
                body.len()
            )));
        }
        if body.len() > payload {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                body.len() - payload
            )));
        }
        let data = match dtype {
            0x01 => TensorData::U8(body.to_vec()),
            0x02 => TensorData::U16(
                body.chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            0x04 => TensorData::U32(
                body.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().expect("4")))
                    .collect(),
            ),
            _ => TensorData::F32(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
                    .collect(),
            ),
        };
        Ok(Tensor { dims, data })
    }

    pub fn from_grid_f32(g: &Grid<f32>) -> Self {
        Tensor {
            dims: vec![g.height() as u32, g.width() as u32],
            data: TensorData::F32(g.as_slice().to_vec()),
        }
    }

    /// Stack of equally shaped planes as a `[n, h, w]` tensor.
    pub fn from_planes_f32(planes: &[&Grid<f32>]) -> Result<Self> {
        let (h, w) = planes
            .first()
            .map(|g| g.shape())
            .ok_or_else(|| Error::invalid("no planes"))?;
        if planes.iter().any(|g| g.shape() != (h, w)) {
            return Err(Error::shape("planes differ in shape"));
        }
        let data = planes
            .iter()
            .flat_map(|g| g.as_slice().iter().copied())
            .collect();
        Tensor::new(
            vec![planes.len() as u32, h as u32, w as u32],
            TensorData::F32(data),
        )
    }

    /// Float planes of a `[h, w]` or `[n, h, w]` tensor.
    pub fn to_planes_f32(&self) -> Result<Vec<Grid<f32>>> {
        let TensorData::F32(v) = &self.data else {
            return Err(Error::Format(format!(
                "expected f32 data, found {}",
                self.data.dtype_name()
            )));
        };
        let (n, h, w) = match self.dims[..] {
            [h, w] => (1, h as usize, w as usize),
            [n, h, w] => (n as usize, h as usize, w as usize),
            _ => {
                return Err(Error::shape(format!(
                    "expected 2 or 3 dimensions, got {:?}",
                    self.dims
                )))
            }
        };
        (0..n)
            .map(|k| Grid::from_vec(h, w, v[k * h * w..(k + 1) * h * w].to_vec()))
            .collect()
    }

    pub fn from_instance_map(map: &InstanceMap) -> Self {
        Tensor {
            dims: vec![map.height() as u32, map.width() as u32],
            data: TensorData::U32(map.labels().as_slice().to_vec()),
        }
    }

    /// Accepts any unsigned dtype for a `[h, w]` label image.
    pub fn to_instance_map(&self) -> Result<InstanceMap> {
        let [h, w] = self.dims[..] else {
            return Err(Error::shape(format!(
                "instance map must be 2-D, got {:?}",
                self.dims
            )));
        };
        let labels: Vec<u32> = match &self.data {
            TensorData::U8(v) => v.iter().map(|&x| x.into()).collect(),
            TensorData::U16(v) => v.iter().map(|&x| x.into()).collect(),
            TensorData::U32(v) => v.clone(),
            TensorData::F32(_) => {
                return Err(Error::Format(
                    "instance map must hold unsigned integers".into(),
                ))
            }
        };
        InstanceMap::from_vec(h as usize, w as usize, labels)
    }

    /// `[k, h, w]` u8 stack, one binary plane per mask.
    pub fn from_masks(masks: &[Mask], height: usize, width: usize) -> Result<Self> {
        let mut data = vec![0u8; masks.len() * height * width];
        for (k, m) in masks.iter().enumerate() {
            if (m.height(), m.width()) != (height, width) {
                return Err(Error::shape(format!(
                    "mask {k} is {}x{}, expected {height}x{width}",
                    m.height(),
                    m.width()
                )));
            }
            for &p in m.indices() {
                data[k * height * width + p as usize] = 1;
            }
        }
        Tensor::new(
            vec![masks.len() as u32, height as u32, width as u32],
            TensorData::U8(data),
        )
    }

    /// Planes of a `[k, h, w]` unsigned stack; nonzero pixels are members.
    pub fn to_masks(&self) -> Result<Vec<Mask>> {
        let [k, h, w] = self.dims[..] else {
            return Err(Error::shape(format!(
                "mask stack must be 3-D, got {:?}",
                self.dims
            )));
        };
        let set: Vec<bool> = match &self.data {
            TensorData::U8(v) => v.iter().map(|&x| x != 0).collect(),
            TensorData::U16(v) => v.iter().map(|&x| x != 0).collect(),
            TensorData::U32(v) => v.iter().map(|&x| x != 0).collect(),
            TensorData::F32(_) => {
                return Err(Error::Format(
                    "mask stack must hold unsigned integers".into(),
                ))
            }
        };
        let (h, w) = (h as usize, w as usize);
        (0..k as usize)
            .map(|i| {
                let plane = &set[i * h * w..(i + 1) * h * w];
                let px = (0..h * w).filter(|&p| plane[p]).map(|p| p as u32).collect();
                Mask::from_indices(h, w, px)
            })
            .collect()
    }

    /// Rows of a `[n, d]` float tensor.
    pub fn to_rows_f64(&self) -> Result<Vec<Vec<f64>>> {
        let TensorData::F32(v) = &self.data else {
            return Err(Error::Format(format!(
                "expected f32 data, found {}",
                self.data.dtype_name()
            )));
        };
        let [n, d] = self.dims[..] else {
            return Err(Error::shape(format!(
                "expected a 2-D matrix, got {:?}",
                self.dims
            )));
        };
        let d = d as usize;
        Ok((0..n as usize)
            .map(|i| {
                v[i * d..(i + 1) * d]
                    .iter()
                    .map(|&x| f64::from(x))
                    .collect()
            })
            .collect())
    }
}

fn element_count(dims: &[u32]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d as usize)
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))
    })
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })
}

pub fn write_tensor(t: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_two_by_two_is_31_bytes() {
        let t = Tensor::new(vec![2, 2], TensorData::F32(vec![0.0; 4])).unwrap();
        let b = t.to_bytes();
        assert_eq!(b.len(), 31);
        assert_eq!(&b[..7], &[b'N', b'U', b'C', b'T', 1, 0x0A, 2]);
        assert_eq!(Tensor::from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        let good = Tensor::new(vec![3], TensorData::U16(vec![1, 2, 3]))
            .unwrap()
            .to_bytes();
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(Tensor::from_bytes(&bad).is_err());
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(Tensor::from_bytes(&bad).is_err());
        let mut bad = good.clone();
        bad[5] = 0x03;
        assert!(Tensor::from_bytes(&bad).is_err());
        assert!(Tensor::from_bytes(&good[..good.len() - 1]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(Tensor::from_bytes(&long).is_err());
        let mut huge = vec![b'N', b'U', b'C', b'T', 1, 0x04, 3];
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(Tensor::from_bytes(&huge).is_err());
    }

    #[test]
    fn instance_map_round_trip() {
        let m = InstanceMap::from_vec(2, 3, vec![0, 1, 1, 2, 0, 7]).unwrap();
        let t = Tensor::from_instance_map(&m);
        assert_eq!(
            Tensor::from_bytes(&t.to_bytes())
                .unwrap()
                .to_instance_map()
                .unwrap(),
            m
        );
        let small = Tensor::new(vec![2, 3], TensorData::U8(vec![0, 1, 1, 2, 0, 7])).unwrap();
        assert_eq!(small.to_instance_map().unwrap(), m);
    }
}
