//! `GRAW`: a little-endian container of named tensors (`.graw` files).
//!
//! ```text
//! "GRAW" | u32 version = 1 | u32 tensor_count
//! per tensor: u16 name_len | name (UTF-8) | u8 dtype (0 = f32, 1 = f64)
//!             | u8 ndim | ndim × u64 dims | row-major payload
//! ```

use std::io::{self, Read, Write};

use indexmap::IndexMap;
use thiserror::Error;

use crate::tensor::{DType, Element, Tensor};

pub const MAGIC: [u8; 4] = *b"GRAW";
pub const VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "graw";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:02x?}, expected \"GRAW\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0} (this reader handles version {VERSION})")]
    UnsupportedVersion(u32),
    #[error("stream truncated while reading {0}")]
    Truncated(String),
    #[error("tensor `{tensor}`: dims {dims:?} overflow the addressable size")]
    Overflow { tensor: String, dims: Vec<u64> },
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor names must be nonempty")]
    EmptyName,
    #[error("tensor name of {0} bytes exceeds the 65535-byte limit")]
    NameTooLong(usize),
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("tensor `{tensor}`: unknown dtype code {code}")]
    UnknownDType { tensor: String, code: u8 },
    #[error("tensor `{0}` has a zero-length axis")]
    ZeroExtent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A tensor of either supported element type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Self {
        match T::DTYPE {
            DType::F32 => AnyTensor::F32(t.cast()),
            DType::F64 => AnyTensor::F64(t.cast()),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to `T`, rounding when narrowing from f64.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        match self {
            AnyTensor::F32(t) => t.data().iter().for_each(|v| v.write_le(out)),
            AnyTensor::F64(t) => t.data().iter().for_each(|v| v.write_le(out)),
        }
    }
}

impl<T: Element> From<Tensor<T>> for AnyTensor {
    fn from(t: Tensor<T>) -> Self {
        AnyTensor::from_tensor(&t)
    }
}

/// Insertion-ordered map from name to tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorContainer {
    entries: IndexMap<String, AnyTensor>,
}

fn check_name(name: &str) -> Result<(), FormatError> {
    if name.is_empty() {
        Err(FormatError::EmptyName)
    } else if name.len() > u16::MAX as usize {
        Err(FormatError::NameTooLong(name.len()))
    } else {
        Ok(())
    }
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        tensor: impl Into<AnyTensor>,
    ) -> Result<(), FormatError> {
        let name = name.into();
        check_name(&name)?;
        if self.entries.contains_key(&name) {
            return Err(FormatError::DuplicateName(name));
        }
        self.entries.insert(name, tensor.into());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AnyTensor> {
        self.entries.get(name)
    }

    pub fn tensor<T: Element>(&self, name: &str) -> Option<Tensor<T>> {
        self.get(name).map(AnyTensor::to_tensor)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AnyTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut buf = Vec::new();
        write_container(self, &mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        read_container(bytes)
    }
}

/// Serialises `c` into `sink`, returning the number of bytes written.
pub fn write_container<W: Write>(c: &TensorContainer, mut sink: W) -> Result<u64, FormatError> {
    let mut buf = Vec::with_capacity(12);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(c.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "too many tensors"))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, t) in c.iter() {
        check_name(name)?;
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.dtype().code());
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        t.write_payload(&mut buf);
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len() as u64)
}

fn read_exact_or<R: Read>(
    src: &mut R,
    buf: &mut [u8],
    what: impl FnOnce() -> String,
) -> Result<(), FormatError> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::Truncated(what()),
        _ => FormatError::Io(e),
    })
}

fn read_payload<T: Element, R: Read>(
    src: &mut R,
    name: &str,
    shape: &[usize],
    bytes: u64,
) -> Result<Tensor<T>, FormatError> {
    let mut raw = Vec::new();
    src.take(bytes).read_to_end(&mut raw)?;
    if (raw.len() as u64) < bytes {
        return Err(FormatError::Truncated(format!(
            "payload of tensor `{name}`"
        )));
    }
    let size = T::DTYPE.size();
    let data = raw.chunks_exact(size).map(T::read_le).collect();
    Tensor::new(shape, data).map_err(|_| FormatError::ZeroExtent(name.to_owned()))
}

/// Parses a container, rejecting malformed streams with a specific diagnostic.
pub fn read_container<R: Read>(mut src: R) -> Result<TensorContainer, FormatError> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut src, &mut magic, || "magic".into())?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let mut word = [0u8; 4];
    read_exact_or(&mut src, &mut word, || "version".into())?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    read_exact_or(&mut src, &mut word, || "tensor count".into())?;
    let count = u32::from_le_bytes(word);

    let mut c = TensorContainer::new();
    for i in 0..count {
        let mut len = [0u8; 2];
        read_exact_or(&mut src, &mut len, || format!("name length of tensor #{i}"))?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut src, &mut name, || format!("name of tensor #{i}"))?;
        let name = String::from_utf8(name).map_err(|_| FormatError::InvalidName)?;
        check_name(&name)?;
        if c.entries.contains_key(&name) {
            return Err(FormatError::DuplicateName(name));
        }

        let mut tag = [0u8; 2];
        read_exact_or(&mut src, &mut tag, || format!("header of tensor `{name}`"))?;
        let dtype = DType::from_code(tag[0]).ok_or_else(|| FormatError::UnknownDType {
            tensor: name.clone(),
            code: tag[0],
        })?;
        let mut dims = Vec::with_capacity(tag[1] as usize);
        for _ in 0..tag[1] {
            let mut d = [0u8; 8];
            read_exact_or(&mut src, &mut d, || format!("dims of tensor `{name}`"))?;
            dims.push(u64::from_le_bytes(d));
        }
        if dims.contains(&0) {
            return Err(FormatError::ZeroExtent(name));
        }
        let overflow = || FormatError::Overflow {
            tensor: name.clone(),
            dims: dims.clone(),
        };
        let numel = dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .ok_or_else(overflow)?;
        let bytes = numel
            .checked_mul(dtype.size() as u64)
            .ok_or_else(overflow)?;
        if bytes > isize::MAX as u64 || usize::try_from(bytes).is_err() {
            return Err(overflow());
        }
        let shape: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
        let t = match dtype {
            DType::F32 => AnyTensor::F32(read_payload(&mut src, &name, &shape, bytes)?),
            DType::F64 => AnyTensor::F64(read_payload(&mut src, &name, &shape, bytes)?),
        };
        c.entries.insert(name, t);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_container_is_header_only() {
        let bytes = TensorContainer::new().to_bytes().unwrap();
        assert_eq!(bytes, b"GRAW\x01\x00\x00\x00\x00\x00\x00\x00");
    }

    #[test]
    fn scalar_one_layout() {
        let mut c = TensorContainer::new();
        c.insert("a", Tensor::scalar(1.0f32)).unwrap();
        let bytes = c.to_bytes().unwrap();
        let mut want = b"GRAW\x01\x00\x00\x00\x01\x00\x00\x00".to_vec();
        want.extend_from_slice(&[1, 0, b'a', 0, 0]);
        want.extend_from_slice(&[0x00, 0x00, 0x80, 0x3F]);
        assert_eq!(bytes, want);
        assert_eq!(TensorContainer::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn insert_validates_names() {
        let mut c = TensorContainer::new();
        c.insert("w", Tensor::<f64>::zeros(&[2])).unwrap();
        assert!(matches!(
            c.insert("w", Tensor::<f64>::zeros(&[2])),
            Err(FormatError::DuplicateName(_))
        ));
        assert!(matches!(
            c.insert("", Tensor::<f64>::zeros(&[2])),
            Err(FormatError::EmptyName)
        ));
        let long = "x".repeat(65536);
        assert!(matches!(
            c.insert(long, Tensor::<f64>::zeros(&[2])),
            Err(FormatError::NameTooLong(65536))
        ));
        c.insert("y".repeat(65535), Tensor::<f32>::zeros(&[1]))
            .unwrap();
    }

    #[test]
    fn insertion_order_is_preserved() {
        let mut c = TensorContainer::new();
        for name in ["zeta", "alpha", "mid"] {
            c.insert(name, Tensor::<f32>::zeros(&[1, 2])).unwrap();
        }
        let back = TensorContainer::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.names().collect::<Vec<_>>(), ["zeta", "alpha", "mid"]);
    }

    #[test]
    fn unknown_dtype_and_zero_extent() {
        let mut bytes = b"GRAW\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00t\x07\x00".to_vec();
        assert!(matches!(
            TensorContainer::from_bytes(&bytes),
            Err(FormatError::UnknownDType { code: 7, .. })
        ));
        bytes[15] = 0;
        bytes[16] = 1;
        bytes.extend_from_slice(&0u64.to_le_bytes());
        assert!(matches!(
            TensorContainer::from_bytes(&bytes),
            Err(FormatError::ZeroExtent(_))
        ));
    }
}
