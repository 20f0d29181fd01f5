//! Spatio-temporal series container and its on-disk formats.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "STTC1\0" | N: u32 | T: u32 | C: u32 | flags: u32 (bit 0 = mask)
//! N·T·C f32 values, row-major [node][time][channel]
//! N·T·C mask bytes (0/1), only when flagged
//! ```
//!
//! CSV: the first row holds node identifiers, every following row is one
//! time step of the single channel. Empty cells and `NaN` are missing.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{s, Array2, Array3};

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 6] = b"STTC1\0";
const FLAG_MASK: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    /// Guesses the format from a file extension (`.csv` vs anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Binary,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "binary" | "bin" => Ok(DatasetFormat::Binary),
            other => Err(Error::config(format!("unknown dataset format '{other}'"))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Csv => "csv",
            DatasetFormat::Binary => "binary",
        })
    }
}

/// Observations of `N` nodes over `T` steps with `C` channels. Channel 0 is
/// the forecasting target. Unobserved entries hold the node's previous
/// observed value (0 before the first one) so that input windows stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTensor {
    data: Array3<f64>,
    mask: Option<Array3<bool>>,
    node_ids: Vec<String>,
    sampling_interval: Option<Duration>,
}

impl SeriesTensor {
    pub fn new(mut data: Array3<f64>, mask: Option<Array3<bool>>) -> Result<Self> {
        let (n, t, c) = data.dim();
        if n == 0 || t == 0 || c == 0 {
            return Err(Error::Format(format!("empty series tensor {n}x{t}x{c}")));
        }
        if let Some(m) = &mask {
            if m.dim() != data.dim() {
                return Err(Error::shape(format!(
                    "mask {:?} does not match data {:?}",
                    m.dim(),
                    data.dim()
                )));
            }
        }
        for ni in 0..n {
            for ci in 0..c {
                let mut last = 0.0;
                for ti in 0..t {
                    let observed = mask.as_ref().is_none_or(|m| m[[ni, ti, ci]]);
                    let v = data[[ni, ti, ci]];
                    if observed {
                        if !v.is_finite() {
                            return Err(Error::Format(format!(
                                "non-finite observed value at node {ni}, step {ti}, channel {ci}"
                            )));
                        }
                        last = v;
                    } else {
                        data[[ni, ti, ci]] = last;
                    }
                }
            }
        }
        Ok(Self {
            data,
            mask,
            node_ids: (0..n).map(|i| i.to_string()).collect(),
            sampling_interval: None,
        })
    }

    /// Single-channel series from an `N × T` matrix.
    pub fn from_rows(rows: Array2<f64>) -> Result<Self> {
        let (n, t) = rows.dim();
        let data = rows
            .into_shape_with_order((n, t, 1))
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::new(data, None)
    }

    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_nodes() {
            return Err(Error::shape(format!(
                "{} node ids for {} nodes",
                ids.len(),
                self.n_nodes()
            )));
        }
        self.node_ids = ids;
        Ok(self)
    }

    pub fn with_sampling_interval(mut self, interval: Duration) -> Self {
        self.sampling_interval = Some(interval);
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.data.dim().0
    }

    pub fn len(&self) -> usize {
        self.data.dim().1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn mask(&self) -> Option<&Array3<bool>> {
        self.mask.as_ref()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn sampling_interval(&self) -> Option<Duration> {
        self.sampling_interval
    }

    pub fn is_observed(&self, node: usize, t: usize, channel: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[[node, t, channel]])
    }

    pub fn observed(&self, node: usize, t: usize, channel: usize) -> Option<f64> {
        self.is_observed(node, t, channel)
            .then(|| self.data[[node, t, channel]])
    }

    /// Target channel over `range`, as `N × len`.
    pub fn target_rows(&self, range: std::ops::Range<usize>) -> Array2<f64> {
        self.data.slice(s![.., range, 0]).to_owned()
    }

    // ---- binary ----

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let (n, t, c) = self.data.dim();
        let dim = |v: usize| {
            u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
        };
        w.write_all(BINARY_MAGIC)?;
        w.write_u32::<LittleEndian>(dim(n)?)?;
        w.write_u32::<LittleEndian>(dim(t)?)?;
        w.write_u32::<LittleEndian>(dim(c)?)?;
        let flags = if self.mask.is_some() { FLAG_MASK } else { 0 };
        w.write_u32::<LittleEndian>(flags)?;
        for &v in self.data.iter() {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        if let Some(m) = &self.mask {
            let bytes: Vec<u8> = m.iter().map(|&b| u8::from(b)).collect();
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    /// Values are stored as `f32`; values not representable in `f32` are rounded.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        read_exact_or(&mut r, &mut magic, "magic bytes")?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format(format!("bad magic bytes {magic:02x?}")));
        }
        let mut header = [0u32; 4];
        for (slot, name) in header.iter_mut().zip(["N", "T", "C", "flags"]) {
            *slot = r
                .read_u32::<LittleEndian>()
                .map_err(|e| truncated(e, name))?;
        }
        let [n, t, c, flags] = header.map(|v| v as usize);
        if flags as u32 & !FLAG_MASK != 0 {
            return Err(Error::Format(format!("unknown flag bits {flags:#x}")));
        }
        let total = n
            .checked_mul(t)
            .and_then(|v| v.checked_mul(c))
            .filter(|&v| v.checked_mul(4).is_some())
            .ok_or_else(|| Error::Format(format!("dimensions {n}x{t}x{c} overflow")))?;
        if total == 0 {
            return Err(Error::Format(format!("empty tensor {n}x{t}x{c}")));
        }
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        let has_mask = flags as u32 & FLAG_MASK != 0;
        let expected = total * 4 + if has_mask { total } else { 0 };
        if raw.len() != expected {
            return Err(Error::Format(format!(
                "payload is {} bytes, header implies {expected}",
                raw.len()
            )));
        }
        let values: Vec<f64> = raw[..total * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let data = Array3::from_shape_vec((n, t, c), values).map_err(|e| Error::Format(e.to_string()))?;
        let mask = if has_mask {
            let mut flags = Vec::with_capacity(total);
            for &b in &raw[total * 4..] {
                match b {
                    0 => flags.push(false),
                    1 => flags.push(true),
                    other => return Err(Error::Format(format!("mask byte {other} is not 0/1"))),
                }
            }
            Some(Array3::from_shape_vec((n, t, c), flags).map_err(|e| Error::Format(e.to_string()))?)
        } else {
            None
        };
        Self::new(data, mask)
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        Self::read_binary(BufReader::new(File::open(path)?))
    }

    // ---- csv ----

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut records = reader.records();
        let parse_err = |row: usize, column: usize, message: String| Error::Parse {
            row,
            column,
            message,
        };
        let header = match records.next() {
            None => return Err(parse_err(1, 1, "empty file".into())),
            Some(rec) => rec.map_err(|e| parse_err(1, 1, e.to_string()))?,
        };
        let ids: Vec<String> = header.iter().map(str::to_string).collect();
        if let Some(col) = ids.iter().position(|s| s.is_empty()) {
            return Err(parse_err(1, col + 1, "empty node identifier".into()));
        }
        let n = ids.len();
        let mut values = Vec::new();
        let mut observed = Vec::new();
        for (i, rec) in records.enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| parse_err(row, 1, e.to_string()))?;
            if rec.len() != n {
                return Err(parse_err(
                    row,
                    rec.len().min(n) + 1,
                    format!("expected {n} fields, found {}", rec.len()),
                ));
            }
            for (col, field) in rec.iter().enumerate() {
                if field.is_empty() || field.eq_ignore_ascii_case("nan") {
                    values.push(0.0);
                    observed.push(false);
                    continue;
                }
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(row, col + 1, format!("'{field}' is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(row, col + 1, format!("non-finite value '{field}'")));
                }
                values.push(v);
                observed.push(true);
            }
        }
        let t = values.len() / n;
        if t == 0 {
            return Err(parse_err(2, 1, "no data rows".into()));
        }
        // rows are time-major; transpose to [node][time]
        let data = Array2::from_shape_vec((t, n), values)
            .map_err(|e| Error::Format(e.to_string()))?
            .reversed_axes()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, t, 1))
            .map_err(|e| Error::Format(e.to_string()))?;
        let mask = if observed.iter().all(|&b| b) {
            None
        } else {
            Some(
                Array2::from_shape_vec((t, n), observed)
                    .map_err(|e| Error::Format(e.to_string()))?
                    .reversed_axes()
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((n, t, 1))
                    .map_err(|e| Error::Format(e.to_string()))?,
            )
        };
        Self::new(data, mask)?.with_node_ids(ids)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }

    /// Writes the target channel as CSV; missing entries are left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        let io_err = |e: csv::Error| Error::Io(io::Error::other(e));
        writer.write_record(&self.node_ids).map_err(io_err)?;
        for t in 0..self.len() {
            let row: Vec<String> = (0..self.n_nodes())
                .map(|n| match self.observed(n, t, 0) {
                    Some(v) => format!("{v}"),
                    None => String::new(),
                })
                .collect();
            writer.write_record(&row).map_err(io_err)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| truncated(e, what))
}

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format(format!("file truncated while reading {what}"))
    } else {
        Error::Io(e)
    }
}

/// Loads a dataset in the given format.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<SeriesTensor> {
    match format {
        DatasetFormat::Csv => SeriesTensor::load_csv(path),
        DatasetFormat::Binary => SeriesTensor::load_binary(path),
    }
}
