//! Versioned binary snapshot of the calibrator and optimizer state.
//!
//! ```text
//! "STTCCAL\0" | version: u32
//! G: u32 | M: u32 | N: u32 | G × (start: u32, end: u32)
//! λα: G·N f64 | λφ: G·N f64                         (row-major [group][node])
//! kind: u8 (0 sgd, 1 adam) | lr, beta1, beta2, eps: f64 | step_count: u64
//! adam only: m_α, m_φ, v_α, v_φ: G·N f64 each
//! ```
//! All integers and floats little-endian.

use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::optim::{Moments, OptimizerKind, OptimizerState};
use crate::spectral::{CalibratorParams, GroupLayout};

const MAGIC: &[u8; 8] = b"STTCCAL\0";
const VERSION: u32 = 1;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::env::current_dir()?,
    };
    fs::create_dir_all(&dir)?;
    let mut tmp = NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorState {
    pub params: CalibratorParams,
    pub optimizer: OptimizerState,
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    for &v in m.iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, dim: (usize, usize)) -> Result<Array2<f64>> {
    let mut v = vec![0.0; dim.0 * dim.1];
    r.read_f64_into::<LittleEndian>(&mut v)?;
    Array2::from_shape_vec(dim, v).map_err(|e| Error::Format(e.to_string()))
}

impl CalibratorState {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let layout = self.params.layout();
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(layout.n_groups() as u32)?;
        w.write_u32::<LittleEndian>(layout.m_bins() as u32)?;
        w.write_u32::<LittleEndian>(self.params.n_nodes() as u32)?;
        for r in layout.ranges() {
            w.write_u32::<LittleEndian>(r.start as u32)?;
            w.write_u32::<LittleEndian>(r.end as u32)?;
        }
        write_matrix(w, &self.params.lambda_alpha)?;
        write_matrix(w, &self.params.lambda_phi)?;
        let opt = &self.optimizer;
        w.write_u8(match opt.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => 1,
        })?;
        for v in [opt.learning_rate, opt.beta1, opt.beta2, opt.eps] {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u64::<LittleEndian>(opt.step_count)?;
        if opt.kind == OptimizerKind::Adam {
            let zeros = Moments {
                m_alpha: Array2::zeros(self.params.lambda_alpha.dim()),
                m_phi: Array2::zeros(self.params.lambda_alpha.dim()),
                v_alpha: Array2::zeros(self.params.lambda_alpha.dim()),
                v_phi: Array2::zeros(self.params.lambda_alpha.dim()),
            };
            let m = opt.moments.as_ref().unwrap_or(&zeros);
            for a in [&m.m_alpha, &m.m_phi, &m.v_alpha, &m.v_phi] {
                write_matrix(w, a)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a calibrator snapshot".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let g = r.read_u32::<LittleEndian>()? as usize;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let n = r.read_u32::<LittleEndian>()? as usize;
        if g == 0 || g > m || n == 0 || g.checked_mul(n).is_none_or(|v| v > 1 << 28) {
            return Err(Error::Format(format!("implausible snapshot shape G={g} M={m} N={n}")));
        }
        let mut ranges = Vec::with_capacity(g);
        for _ in 0..g {
            let start = r.read_u32::<LittleEndian>()? as usize;
            let end = r.read_u32::<LittleEndian>()? as usize;
            ranges.push(start..end);
        }
        let layout =
            GroupLayout::from_ranges(m, ranges).map_err(|e| Error::Format(format!("bad layout: {e}")))?;
        let alpha = read_matrix(r, (g, n))?;
        let phi = read_matrix(r, (g, n))?;
        let params = CalibratorParams::from_parts(layout, alpha, phi)?;
        let kind = match r.read_u8()? {
            0 => OptimizerKind::Sgd,
            1 => OptimizerKind::Adam,
            k => return Err(Error::Format(format!("unknown optimizer tag {k}"))),
        };
        let learning_rate = r.read_f64::<LittleEndian>()?;
        let beta1 = r.read_f64::<LittleEndian>()?;
        let beta2 = r.read_f64::<LittleEndian>()?;
        let eps = r.read_f64::<LittleEndian>()?;
        let step_count = r.read_u64::<LittleEndian>()?;
        let moments = if kind == OptimizerKind::Adam {
            Some(Moments {
                m_alpha: read_matrix(r, (g, n))?,
                m_phi: read_matrix(r, (g, n))?,
                v_alpha: read_matrix(r, (g, n))?,
                v_phi: read_matrix(r, (g, n))?,
            })
        } else {
            None
        };
        Ok(Self {
            params,
            optimizer: OptimizerState {
                kind,
                learning_rate,
                beta1,
                beta2,
                eps,
                step_count,
                moments,
            },
        })
    }

    /// Atomic write (temporary file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        write_atomically(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::optimizer_step;
    use crate::spectral::ParamGrads;

    fn trained_state(kind: OptimizerKind) -> CalibratorState {
        let mut params = CalibratorParams::for_horizon(12, 4, 3).unwrap();
        let mut optimizer = OptimizerState::new(kind, 1e-2, &params);
        let grads = ParamGrads {
            d_lambda_alpha: Array2::from_shape_fn((4, 3), |(g, n)| g as f64 - n as f64 * 0.5),
            d_lambda_phi: Array2::from_shape_fn((4, 3), |(g, n)| (g * n) as f64 * 0.1 - 0.2),
        };
        for _ in 0..3 {
            optimizer_step(&mut params, &grads, &mut optimizer).unwrap();
        }
        CalibratorState { params, optimizer }
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let state = trained_state(kind);
            let path = dir.path().join(format!("{kind}.cal"));
            state.save(&path).unwrap();
            let back = CalibratorState::load(&path).unwrap();
            assert_eq!(back, state);
            // overwriting in place goes through rename as well
            state.save(&path).unwrap();
            assert_eq!(CalibratorState::load(&path).unwrap(), state);
        }
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 2);
    }

    #[test]
    fn header_layout() {
        let state = trained_state(OptimizerKind::Sgd);
        let mut buf = Vec::new();
        state.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"STTCCAL\0");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 3);
        let expected = 24 + 4 * 8 + 2 * 12 * 8 + 1 + 4 * 8 + 8;
        assert_eq!(buf.len(), expected);
    }

    #[test]
    fn truncated_or_foreign_files_fail() {
        let state = trained_state(OptimizerKind::Adam);
        let mut buf = Vec::new();
        state.write_to(&mut buf).unwrap();
        assert!(CalibratorState::read_from(&mut &buf[..buf.len() - 3]).is_err());
        assert!(CalibratorState::read_from(&mut &b"STTCBK\0\0...."[..]).is_err());
    }
}
