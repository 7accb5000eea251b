use std::io::Read;
use std::path::Path;

use super::ProblemError;

/// Unsigned-byte tensor decoded from an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const UBYTE: u8 = 0x08;

/// Decodes an IDX buffer: two zero bytes, the element type (only `0x08`,
/// unsigned byte, is accepted), the rank, `rank` big-endian `u32` sizes and a
/// row-major payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, ProblemError> {
    if bytes.len() < 4 {
        return Err(ProblemError::Format {
            offset: bytes.len(),
            message: "file shorter than the 4-byte magic number".into(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(ProblemError::Format {
            offset: 0,
            message: format!("magic must start with 00 00, found {:02x} {:02x}", bytes[0], bytes[1]),
        });
    }
    if bytes[2] != UBYTE {
        return Err(ProblemError::Format {
            offset: 2,
            message: format!("unsupported element type 0x{:02x} (expected 0x08)", bytes[2]),
        });
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(ProblemError::Format { offset: 3, message: "rank must be positive".into() });
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(ProblemError::Format {
            offset: bytes.len(),
            message: format!("header needs {header} bytes for rank {rank}"),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| {
        ProblemError::Format { offset: 4, message: format!("dimensions {dims:?} overflow") }
    })?;
    let actual = bytes.len() - header;
    if actual < expected {
        return Err(ProblemError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(ProblemError::Format {
            offset: header + expected,
            message: format!("{} trailing bytes after payload", actual - expected),
        });
    }
    Ok(IdxTensor { dims, data: bytes[header..].to_vec() })
}

/// Reads an IDX file, transparently decompressing gzip input.
pub fn load_idx(path: &Path) -> Result<IdxTensor, ProblemError> {
    let io = |source| ProblemError::Io { path: path.to_path_buf(), source };
    let raw = std::fs::read(path).map_err(io)?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        parse_idx(&out)
    } else {
        parse_idx(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent reader: walks the header with explicit offsets.
    fn reference_shape(bytes: &[u8]) -> Vec<usize> {
        let rank = bytes[3] as usize;
        (0..rank)
            .map(|k| {
                let o = 4 + 4 * k;
                ((bytes[o] as usize) << 24)
                    | ((bytes[o + 1] as usize) << 16)
                    | ((bytes[o + 2] as usize) << 8)
                    | bytes[o + 3] as usize
            })
            .collect()
    }

    #[test]
    fn image_tensor_shape() {
        let mut b = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        b.extend(std::iter::repeat_n(7u8, 2 * 28 * 28));
        let t = parse_idx(&b).unwrap();
        assert_eq!(t.dims, vec![2, 28, 28]);
        assert_eq!(t.dims, reference_shape(&b));
        assert_eq!(t.data.len(), 1568);
    }

    #[test]
    fn label_vector() {
        let b = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, 5, 3, 1, 4, 1, 5];
        let t = parse_idx(&b).unwrap();
        assert_eq!(t.dims, reference_shape(&b));
        assert_eq!(t.data, vec![3, 1, 4, 1, 5]);
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let b = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, 5, 3, 1];
        match parse_idx(&b) {
            Err(ProblemError::Truncated { expected, actual }) => assert_eq!((expected, actual), (5, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_reports_offset() {
        let e = parse_idx(&[0x00, 0x00, 0x0d, 0x01, 0, 0, 0, 0]).unwrap_err();
        assert!(matches!(e, ProblemError::Format { offset: 2, .. }), "{e}");
        let e = parse_idx(&[0x01, 0x00, 0x08, 0x01]).unwrap_err();
        assert!(matches!(e, ProblemError::Format { offset: 0, .. }));
        let e = parse_idx(&[0x00, 0x00, 0x08, 0x02, 0, 0, 0, 1]).unwrap_err();
        assert!(matches!(e, ProblemError::Format { offset: 8, .. }));
    }
}
