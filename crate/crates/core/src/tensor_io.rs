//! Tensor serialization.
//!
//! # Binary format
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | content |
//! |-------:|-----:|---------|
//! | 0 | 4 | magic `DTNS` |
//! | 4 | 4 | `u32` format version, currently 1 |
//! | 8 | 4 | `u32` order `N` |
//! | 12 | 8·N | `u64` dimensions `I₁ … I_N` |
//! | 12 + 8·N | 8·ΠI | `f64` entries, first index fastest |
//!
//! Trailing bytes are rejected.
//!
//! # CSV long format
//!
//! A header `i1,i2,…,iN,value` followed by one row per entry with zero-based
//! indices. Entries that never appear are zero and are reported as
//! unobserved in the returned mask.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"DTNS";
pub const VERSION: u32 = 1;
/// Largest element count either decoder will allocate.
pub const MAX_ELEMENTS: usize = 1 << 26;
const MAX_ORDER: usize = 64;

pub fn encode_tensor(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * t.order() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.order() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format(format!("truncated while reading {what}")));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn u32_at(bytes: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4, what)?.try_into().unwrap()))
}

pub fn decode_tensor(mut bytes: &[u8]) -> Result<DenseTensor> {
    let rest = &mut bytes;
    if take(rest, 4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32_at(rest, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let order = u32_at(rest, "order")? as usize;
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Format(format!("order {order} outside 1..={MAX_ORDER}")));
    }
    let mut shape = Vec::with_capacity(order);
    for _ in 0..order {
        let d = u64::from_le_bytes(take(rest, 8, "dimension")?.try_into().unwrap());
        shape.push(usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?);
    }
    let len = element_count(&shape)?;
    let need = len * 8;
    if rest.len() != need {
        return Err(Error::Format(format!(
            "expected {need} data bytes, found {}",
            rest.len()
        )));
    }
    let data = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(shape, data)
}

fn element_count(shape: &[usize]) -> Result<usize> {
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;
    if len > MAX_ELEMENTS {
        return Err(Error::Format(format!(
            "{len} elements exceeds the limit of {MAX_ELEMENTS}"
        )));
    }
    Ok(len)
}

pub fn write_tensor(w: &mut impl Write, t: &DenseTensor) -> Result<()> {
    w.write_all(&encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<DenseTensor> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_tensor(&buf)
}

/// Tensor read from the long CSV format plus the set of cells present.
#[derive(Clone, Debug)]
pub struct LongCsv {
    pub tensor: DenseTensor,
    pub observed: ObservationMask,
}

/// Writes every entry, or only the observed ones when `mask` is given.
pub fn write_csv_long(w: &mut impl Write, t: &DenseTensor, mask: Option<&ObservationMask>) -> Result<()> {
    let header: Vec<String> = (1..=t.order()).map(|k| format!("i{k}")).collect();
    writeln!(w, "{},value", header.join(","))?;
    for (lin, &x) in t.data().iter().enumerate() {
        if mask.is_some_and(|m| !m.is_observed(lin)) {
            continue;
        }
        let idx = t.multi_index(lin);
        for i in idx {
            write!(w, "{i},")?;
        }
        // `{:?}` prints the shortest representation that round-trips
        writeln!(w, "{x:?}")?;
    }
    Ok(())
}

/// Parses the long CSV format. Without `shape`, each dimension is one more
/// than the largest index seen.
pub fn read_csv_long(r: impl Read, shape: Option<&[usize]>) -> Result<LongCsv> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    let order = headers.len().checked_sub(1).filter(|&n| n > 0).ok_or(Error::Parse {
        line: 1,
        message: "header needs at least one index column and a value column".into(),
    })?;
    for (k, h) in headers.iter().take(order).enumerate() {
        if h != format!("i{}", k + 1) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header column `i{}`, found `{h}`", k + 1),
            });
        }
    }
    if &headers[order] != "value" {
        return Err(Error::Parse {
            line: 1,
            message: format!("last header column must be `value`, found `{}`", &headers[order]),
        });
    }
    if let Some(s) = shape {
        if s.len() != order {
            return Err(Error::param(
                "shape",
                format!("has {} dimensions, file has {order}", s.len()),
            ));
        }
    }

    let mut entries: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut extent = vec![0usize; order];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { line, message };
        if rec.len() != order + 1 {
            return Err(bad(format!("expected {} fields, found {}", order + 1, rec.len())));
        }
        let mut idx = Vec::with_capacity(order);
        for (k, field) in rec.iter().take(order).enumerate() {
            let i: usize = field.parse().map_err(|_| bad(format!("bad index `{field}`")))?;
            extent[k] = extent[k].max(i.checked_add(1).ok_or_else(|| bad("index overflow".into()))?);
            idx.push(i);
        }
        let v: f64 = rec[order]
            .parse()
            .map_err(|_| bad(format!("bad value `{}`", &rec[order])))?;
        if !v.is_finite() {
            return Err(bad(format!("non-finite value `{}`", &rec[order])));
        }
        entries.push((idx, v));
    }
    if entries.is_empty() && shape.is_none() {
        return Err(Error::EmptyInput("no data rows and no shape given".into()));
    }
    let shape = shape.map(<[usize]>::to_vec).unwrap_or(extent);
    let len = element_count(&shape)?;
    let mut tensor = DenseTensor::zeros(&shape)?;
    let mut observed = vec![false; len];
    for (row, (idx, v)) in entries.into_iter().enumerate() {
        let lin = tensor.linear_index(&idx).ok_or_else(|| Error::Parse {
            line: row as u64 + 2,
            message: format!("index {idx:?} outside shape {shape:?}"),
        })?;
        if observed[lin] {
            return Err(Error::Parse {
                line: row as u64 + 2,
                message: format!("duplicate entry {idx:?}"),
            });
        }
        observed[lin] = true;
        tensor.data_mut()[lin] = v;
    }
    Ok(LongCsv {
        tensor,
        observed: ObservationMask::new(shape, observed)?,
    })
}
