//! Minimal NPY v1.0 reader/writer for 2D little-endian `float64` and
//! `complex128` arrays in C order.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexImage, FrequencyGrid, RealImage};

const MAGIC: &[u8] = b"\x93NUMPY";

#[derive(Clone, Debug, PartialEq)]
pub enum NpyData {
    F64(Vec<f64>),
    C128(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

fn header(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_str}, }}");
    // magic(6) + version(2) + len(2) + dict + '\n' padded to a multiple of 64
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    dict.push_str(&" ".repeat(pad));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn encode(array: &NpyArray) -> Result<Vec<u8>> {
    let count: usize = array.shape.iter().product();
    let (descr, len) = match &array.data {
        NpyData::F64(v) => ("<f8", v.len()),
        NpyData::C128(v) => ("<c16", v.len()),
    };
    if len != count {
        return Err(Error::Npy(format!("shape {:?} holds {count} values, got {len}", array.shape)));
    }
    let mut out = header(descr, &array.shape);
    match &array.data {
        NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::C128(v) => v.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Npy("missing magic string".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (hlen, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Npy("truncated header".into()));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        _ => return Err(Error::Npy(format!("unsupported version {major}.{minor}"))),
    };
    let end = start + hlen;
    if bytes.len() < end {
        return Err(Error::Npy("truncated header".into()));
    }
    let dict = std::str::from_utf8(&bytes[start..end]).map_err(|_| Error::Npy("header is not text".into()))?;
    let descr = dict_value(dict, "descr")?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    if dict_value(dict, "fortran_order")? != "False" {
        return Err(Error::Npy("fortran order not supported".into()));
    }
    let shape = parse_shape(&dict_value(dict, "shape")?)?;
    let count: usize = shape.iter().product();
    let body = &bytes[end..];
    let data = match descr {
        "<f8" => {
            check_body(body, count * 8)?;
            NpyData::F64(
                body.chunks_exact(8)
                    .take(count)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        "<c16" => {
            check_body(body, count * 16)?;
            NpyData::C128(
                body.chunks_exact(16)
                    .take(count)
                    .map(|c| {
                        Complex64::new(
                            f64::from_le_bytes(c[..8].try_into().unwrap()),
                            f64::from_le_bytes(c[8..].try_into().unwrap()),
                        )
                    })
                    .collect(),
            )
        }
        other => return Err(Error::Npy(format!("unsupported dtype {other}"))),
    };
    Ok(NpyArray { shape, data })
}

fn check_body(body: &[u8], need: usize) -> Result<()> {
    if body.len() < need {
        return Err(Error::Npy(format!("expected {need} data bytes, found {}", body.len())));
    }
    Ok(())
}

// Pulls the raw text of `key`'s value out of the header dict.
fn dict_value(dict: &str, key: &str) -> Result<String> {
    let pat = format!("'{key}'");
    let pos = dict
        .find(&pat)
        .ok_or_else(|| Error::Npy(format!("header lacks '{key}'")))?;
    let rest = dict[pos + pat.len()..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| Error::Npy(format!("malformed '{key}' entry")))?
        .trim_start();
    let value = if rest.starts_with('(') {
        let close = rest.find(')').ok_or_else(|| Error::Npy("unterminated shape".into()))?;
        &rest[..=close]
    } else {
        let stop = rest.find([',', '}']).unwrap_or(rest.len());
        &rest[..stop]
    };
    Ok(value.trim().to_string())
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Npy(format!("bad shape entry {t:?}"))))
        .collect()
}

pub fn write(path: &Path, array: &NpyArray) -> Result<()> {
    let bytes = encode(array)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<NpyArray> {
    decode(&fs::read(path)?)
}

pub fn save_real(path: &Path, img: &RealImage) -> Result<()> {
    let g = img.grid();
    write(
        path,
        &NpyArray {
            shape: vec![g.height(), g.width()],
            data: NpyData::F64(img.data().to_vec()),
        },
    )
}

pub fn save_complex(path: &Path, img: &ComplexImage) -> Result<()> {
    let g = img.grid();
    write(
        path,
        &NpyArray {
            shape: vec![g.height(), g.width()],
            data: NpyData::C128(img.data().to_vec()),
        },
    )
}

fn check_shape(arr: &NpyArray, grid: &FrequencyGrid) -> Result<()> {
    if arr.shape != [grid.height(), grid.width()] {
        return Err(Error::Npy(format!(
            "array shape {:?} does not match {}x{} grid",
            arr.shape,
            grid.height(),
            grid.width()
        )));
    }
    Ok(())
}

/// Loads a real 2D array onto `grid`. Shape and finiteness are validated.
pub fn load_real(path: &Path, grid: FrequencyGrid) -> Result<RealImage> {
    let arr = read(path)?;
    check_shape(&arr, &grid)?;
    match arr.data {
        NpyData::F64(v) => RealImage::new(grid, v),
        NpyData::C128(_) => Err(Error::Npy("expected float64, found complex128".into())),
    }
}

pub fn load_complex(path: &Path, grid: FrequencyGrid) -> Result<ComplexImage> {
    let arr = read(path)?;
    check_shape(&arr, &grid)?;
    match arr.data {
        NpyData::C128(v) => ComplexImage::new(grid, v),
        NpyData::F64(v) => ComplexImage::new(grid, v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode(&NpyArray {
            shape: vec![2, 3],
            data: NpyData::F64(vec![0.0; 6]),
        })
        .unwrap();
        assert_eq!(&bytes[..8], b"\x93NUMPY\x01\x00");
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        let text = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(text.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }"));
        assert!(text.ends_with('\n'));
        assert_eq!(bytes.len(), 10 + hlen + 48);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode(b"NOTNPY....").is_err());
        let mut bytes = encode(&NpyArray {
            shape: vec![2, 2],
            data: NpyData::F64(vec![1.0; 4]),
        })
        .unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn parses_numpy_style_header_variants() {
        // Header as written by older numpy (16-byte alignment, no space before '}').
        let dict = "{'descr': '<c16', 'fortran_order': False, 'shape': (1, 2)}        \n";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        bytes.extend_from_slice(dict.as_bytes());
        for v in [1.0f64, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let arr = decode(&bytes).unwrap();
        assert_eq!(arr.shape, vec![1, 2]);
        assert_eq!(
            arr.data,
            NpyData::C128(vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)])
        );
    }

    proptest! {
        #[test]
        fn real_and_complex_round_trip(
            h in 1usize..6, w in 1usize..6,
            seed in proptest::collection::vec(-1e6f64..1e6, 72),
        ) {
            let n = h * w;
            let real = NpyArray { shape: vec![h, w], data: NpyData::F64(seed[..n].to_vec()) };
            prop_assert_eq!(decode(&encode(&real).unwrap()).unwrap(), real);
            let cplx: Vec<Complex64> = (0..n).map(|k| Complex64::new(seed[2 * k], seed[2 * k + 1])).collect();
            let arr = NpyArray { shape: vec![h, w], data: NpyData::C128(cplx) };
            prop_assert_eq!(decode(&encode(&arr).unwrap()).unwrap(), arr);
        }
    }
}
