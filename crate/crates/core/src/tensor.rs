//! Dense row-major tensor plus the `TNSR` on-disk format.
//!
//! Images are channel-major `[C, H, W]`, kernels `[Cout, Cin, kH, kW]`,
//! vectors rank-1 `[D]`. Tensors are immutable values once produced by an
//! operation and may be freely shared across threads for reading.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("{context}: shape {shape:?} implies {expected} elements, data has {got}")]
    DataLength {
        context: &'static str,
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad tensor file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, got: impl ToString) -> TensorError {
    TensorError::ShapeMismatch {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// Dense multi-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::DataLength {
                context: "Tensor::new",
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Single stored value of a scalar (1-element) tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Channel slice of a `[C, H, W]` tensor.
    pub fn channel(&self, c: usize) -> &[T] {
        assert_eq!(self.rank(), 3);
        let hw = self.shape[1] * self.shape[2];
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Reinterpret as a different shape with the same element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::DataLength {
                context: "Tensor::reshaped",
                shape,
                expected,
                got: self.data.len(),
            });
        }
        Ok(Tensor { shape, data: self.data.clone() })
    }

    /// Elementwise conversion between scalar precisions.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// Max |a - b| over elements; shapes must match.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Per-pixel semantic labels, values in `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(TensorError::DataLength {
                context: "LabelMap::new",
                shape: vec![height, width],
                expected: height * width,
                got: data.len(),
            });
        }
        Ok(LabelMap { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        LabelMap { height, width, data: vec![0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, label: u8) {
        self.data[y * self.width + x] = label;
    }

    /// Count of pixels carrying each label in `0..num_labels`.
    pub fn label_counts(&self, num_labels: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_labels];
        for &l in &self.data {
            counts[l as usize] += 1;
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// TNSR file format
//
// magic "TNSR", version 0x01, dtype byte (0x00 = f32 LE, 0x01 = u8),
// rank byte, rank x u32 LE dims, payload row-major LE.
// ---------------------------------------------------------------------------

const TNSR_MAGIC: &[u8; 4] = b"TNSR";
const TNSR_VERSION: u8 = 0x01;
const DTYPE_F32: u8 = 0x00;
const DTYPE_U8: u8 = 0x01;

/// Either payload a `TNSR` file can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum TnsrData {
    F32(Tensor<f32>),
    U8 { shape: Vec<usize>, data: Vec<u8> },
}

pub fn write_tnsr_f32<W: Write>(w: &mut W, t: &Tensor<f32>) -> Result<()> {
    write_tnsr_header(w, DTYPE_F32, t.shape())?;
    let mut buf = Vec::with_capacity(t.numel() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_tnsr_u8<W: Write>(w: &mut W, shape: &[usize], data: &[u8]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(TensorError::DataLength {
            context: "write_tnsr_u8",
            shape: shape.to_vec(),
            expected,
            got: data.len(),
        });
    }
    write_tnsr_header(w, DTYPE_U8, shape)?;
    w.write_all(data)?;
    Ok(())
}

fn write_tnsr_header<W: Write>(w: &mut W, dtype: u8, shape: &[usize]) -> Result<()> {
    if shape.len() > u8::MAX as usize {
        return Err(TensorError::Format(format!("rank {} exceeds format limit", shape.len())));
    }
    w.write_all(TNSR_MAGIC)?;
    w.write_all(&[TNSR_VERSION, dtype, shape.len() as u8])?;
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| TensorError::Format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tnsr<R: Read>(r: &mut R) -> Result<TnsrData> {
    let mut head = [0u8; 7];
    r.read_exact(&mut head)?;
    if &head[0..4] != TNSR_MAGIC {
        return Err(TensorError::Format("bad magic, expected TNSR".into()));
    }
    if head[4] != TNSR_VERSION {
        return Err(TensorError::Format(format!("unsupported version {}", head[4])));
    }
    let dtype = head[5];
    let rank = head[6] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut d = [0u8; 4];
        r.read_exact(&mut d)?;
        shape.push(u32::from_le_bytes(d) as usize);
    }
    let numel: usize = shape.iter().product();
    match dtype {
        DTYPE_F32 => {
            let mut buf = vec![0u8; numel * 4];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(TnsrData::F32(Tensor::new(shape, data)?))
        }
        DTYPE_U8 => {
            let mut data = vec![0u8; numel];
            r.read_exact(&mut data)?;
            Ok(TnsrData::U8 { shape, data })
        }
        other => Err(TensorError::Format(format!("unknown dtype byte {other:#04x}"))),
    }
}

pub fn save_tnsr_f32(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write_tnsr_f32(&mut f, t)?;
    f.flush()?;
    Ok(())
}

pub fn save_label_map(path: &Path, m: &LabelMap) -> Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write_tnsr_u8(&mut f, &[m.height(), m.width()], m.data())?;
    f.flush()?;
    Ok(())
}

pub fn load_tnsr(path: &Path) -> Result<TnsrData> {
    let mut f = io::BufReader::new(std::fs::File::open(path)?);
    read_tnsr(&mut f)
}

pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    match load_tnsr(path)? {
        TnsrData::F32(t) => Ok(t),
        TnsrData::U8 { .. } => Err(TensorError::Format(format!(
            "{} holds u8 data, expected f32 image",
            path.display()
        ))),
    }
}

pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    match load_tnsr(path)? {
        TnsrData::U8 { shape, data } => {
            if shape.len() != 2 {
                return Err(TensorError::Format(format!(
                    "{} label map has rank {}, expected 2",
                    path.display(),
                    shape.len()
                )));
            }
            LabelMap::new(shape[0], shape[1], data)
        }
        TnsrData::F32(_) => Err(TensorError::Format(format!(
            "{} holds f32 data, expected u8 label map",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn tnsr_golden_bytes() {
        // [2,2] f32 tensor with values 0,1,2,3
        let t = Tensor::<f32>::from_fn(&[2, 2], |i| i as f32);
        let mut buf = Vec::new();
        write_tnsr_f32(&mut buf, &t).unwrap();
        let mut expect = b"TNSR".to_vec();
        expect.extend_from_slice(&[0x01, 0x00, 0x02]);
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        for v in [0.0f32, 1.0, 2.0, 3.0] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(buf, expect);
    }

    #[test]
    fn tnsr_round_trip_is_byte_identical() {
        let t = Tensor::<f32>::from_fn(&[3, 4, 5], |i| (i as f32).sin());
        let mut first = Vec::new();
        write_tnsr_f32(&mut first, &t).unwrap();
        let back = match read_tnsr(&mut first.as_slice()).unwrap() {
            TnsrData::F32(t) => t,
            _ => panic!("dtype"),
        };
        let mut second = Vec::new();
        write_tnsr_f32(&mut second, &back).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn tnsr_u8_round_trip() {
        let data: Vec<u8> = (0..24).collect();
        let mut buf = Vec::new();
        write_tnsr_u8(&mut buf, &[4, 6], &data).unwrap();
        match read_tnsr(&mut buf.as_slice()).unwrap() {
            TnsrData::U8 { shape, data: back } => {
                assert_eq!(shape, vec![4, 6]);
                assert_eq!(back, data);
            }
            _ => panic!("dtype"),
        }
    }

    #[test]
    fn tnsr_rejects_bad_magic() {
        let buf = b"XXXX\x01\x00\x00".to_vec();
        assert!(read_tnsr(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn label_counts_counts_pixels() {
        let m = LabelMap::new(2, 2, vec![0, 0, 0, 0]).unwrap();
        assert_eq!(m.label_counts(2), vec![4, 0]);
    }
}
