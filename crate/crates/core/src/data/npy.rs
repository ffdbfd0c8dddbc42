//! Minimal reader and writer for NPY format version 1.0.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// Decoded NPY file: dtype descriptor, C-order shape and raw little-endian data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NpyArray {
    pub descr: String,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

fn item_size(descr: &str) -> Option<usize> {
    match descr {
        "<f4" | "<i4" => Some(4),
        "<f8" | "<i8" => Some(8),
        "|u1" | "|i1" | "|b1" => Some(1),
        _ => None,
    }
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [] => "()".into(),
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Preamble plus header dictionary, space padded and newline terminated so
/// the data starts on a 64-byte boundary.
pub fn encode_header(descr: &str, shape: &[usize]) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '{descr}', 'fortran_order': False, 'shape': {}, }}",
        shape_literal(shape)
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + pad + 1;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    out
}

pub fn to_npy_bytes(descr: &str, shape: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = encode_header(descr, shape);
    out.extend_from_slice(data);
    out
}

/// Writes an array; returns the number of bytes on disk.
pub fn write_npy(path: &Path, descr: &str, shape: &[usize], data: &[u8]) -> Result<u64> {
    let bytes = to_npy_bytes(descr, shape, data);
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn write_scalars<T: Scalar>(path: &Path, shape: &[usize], values: &[T]) -> Result<u64> {
    write_npy(path, T::NPY_DESCR, shape, &T::to_le_bytes_vec(values))
}

pub fn write_i32(path: &Path, shape: &[usize], values: &[i32]) -> Result<u64> {
    let data: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_npy(path, "<i4", shape, &data)
}

pub fn write_u8(path: &Path, shape: &[usize], values: &[u8]) -> Result<u64> {
    write_npy(path, "|u1", shape, values)
}

fn dict_value<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let needle = format!("'{key}':");
    let start = dict.find(&needle)? + needle.len();
    Some(dict[start..].trim_start())
}

fn parse_shape(rest: &str) -> Option<Vec<usize>> {
    let rest = rest.strip_prefix('(')?;
    let inner = &rest[..rest.find(')')?];
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect()
}

pub fn parse_npy(bytes: &[u8], path: &Path) -> Result<NpyArray> {
    let bad = |msg: &str| Error::format(path, msg.to_string());
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("missing NPY magic"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(bad(&format!("unsupported NPY version {major}.{minor}")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(bad("truncated NPY header"));
    }
    let dict = std::str::from_utf8(&bytes[10..data_start]).map_err(|_| bad("header is not ASCII"))?;
    let dict = dict.trim_end();
    if !(dict.starts_with('{') && dict.ends_with('}')) {
        return Err(bad("malformed header dictionary"));
    }
    let descr = dict_value(dict, "descr")
        .and_then(|v| v.strip_prefix('\''))
        .and_then(|v| v.split('\'').next())
        .ok_or_else(|| bad("header lacks descr"))?
        .to_string();
    let fortran = dict_value(dict, "fortran_order").ok_or_else(|| bad("header lacks fortran_order"))?;
    if !fortran.starts_with("False") {
        return Err(bad("fortran_order arrays are not supported"));
    }
    let shape = dict_value(dict, "shape")
        .and_then(parse_shape)
        .ok_or_else(|| bad("header lacks a valid shape"))?;
    let item = item_size(&descr).ok_or_else(|| bad(&format!("unsupported dtype {descr}")))?;
    let expected = shape.iter().product::<usize>() * item;
    let data = &bytes[data_start..];
    if data.len() != expected {
        return Err(bad(&format!(
            "data section has {} bytes, shape {:?} needs {expected}",
            data.len(),
            shape
        )));
    }
    Ok(NpyArray {
        descr,
        shape,
        data: data.to_vec(),
    })
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes, path)
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn expect_descr(&self, want: &str, path: &Path) -> Result<()> {
        if self.descr != want {
            return Err(Error::format(
                path,
                format!("dtype {} where {want} was expected", self.descr),
            ));
        }
        Ok(())
    }

    pub fn to_scalars<T: Scalar>(&self, path: &Path) -> Result<Vec<T>> {
        self.expect_descr(T::NPY_DESCR, path)?;
        let size = std::mem::size_of::<T>();
        Ok(self.data.chunks_exact(size).map(T::from_le_chunk).collect())
    }

    pub fn to_i32(&self, path: &Path) -> Result<Vec<i32>> {
        self.expect_descr("<i4", path)?;
        Ok(self
            .data
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn to_u8(&self, path: &Path) -> Result<Vec<u8>> {
        self.expect_descr("|u1", path)?;
        Ok(self.data.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_aligned() {
        for shape in [vec![], vec![7], vec![2, 3], vec![1024, 3072]] {
            let h = encode_header("<f4", &shape);
            assert_eq!(h.len() % 64, 0);
            assert_eq!(*h.last().unwrap(), b'\n');
        }
    }

    #[test]
    fn rejects_corruption() {
        let p = Path::new("t.npy");
        let good = to_npy_bytes("<f4", &[2], &[0; 8]);
        assert!(parse_npy(&good, p).is_ok());
        let mut bad_magic = good.clone();
        bad_magic[1] = b'X';
        assert!(matches!(parse_npy(&bad_magic, p), Err(Error::Format { .. })));
        assert!(parse_npy(&good[..good.len() - 1], p).is_err());
        let v2 = {
            let mut v = good.clone();
            v[6] = 2;
            v
        };
        assert!(parse_npy(&v2, p).is_err());
        let mut fortran = good.clone();
        let at = fortran.windows(5).position(|w| w == b"False").unwrap();
        fortran[at..at + 5].copy_from_slice(b"True ");
        assert!(parse_npy(&fortran, p).is_err());
    }

    #[test]
    fn scalar_shape_and_one_d() {
        let p = Path::new("t.npy");
        let a = parse_npy(&to_npy_bytes("<i4", &[3], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]), p).unwrap();
        assert_eq!(a.shape, vec![3]);
        assert_eq!(a.to_i32(p).unwrap(), vec![1, 2, 3]);
        assert!(a.to_scalars::<f32>(p).is_err());
    }
}
