//! Versioned binary dump of a kernel family.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "PLRK" | u32 version | u64 n_per_axis | f64 spacing
//! u64 n_points | n_points x (f64 re, f64 im)
//! u64 rows | u64 cols | n_points x rows x cols x (f64 re, f64 im), row-major
//! ```
//!
//! A coupling stores one kernel per grid node with the node frequency as its
//! point; a Green sweep stores one kernel per evaluation point `z`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coupling::CouplingTensor;
use crate::error::{Error, Result};
use crate::green::GreenKernel;
use crate::lattice::{Lattice, TensorKernel};

pub const MAGIC: [u8; 4] = *b"PLRK";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDump {
    pub n_per_axis: usize,
    pub spacing: f64,
    pub points: Vec<Complex64>,
    pub kernels: Vec<TensorKernel>,
}

fn io(e: std::io::Error) -> Error {
    Error::Dump(e.to_string())
}

fn push_complex(buf: &mut Vec<u8>, z: Complex64) {
    buf.extend_from_slice(&z.re.to_le_bytes());
    buf.extend_from_slice(&z.im.to_le_bytes());
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    read_u64(r).map(f64::from_bits)
}

fn read_len(r: &mut impl Read, what: &str) -> Result<usize> {
    let n = read_u64(r)?;
    usize::try_from(n)
        .ok()
        .filter(|&n| n <= 1 << 32)
        .ok_or_else(|| Error::Dump(format!("{what} {n} out of range")))
}

impl KernelDump {
    pub fn from_coupling(t: &CouplingTensor) -> Self {
        let lat = t.lattice();
        KernelDump {
            n_per_axis: lat.n_per_axis(),
            spacing: lat.spacing(),
            points: t.grid().nodes().iter().map(|&w| Complex64::from(w)).collect(),
            kernels: t.kernels().to_vec(),
        }
    }

    pub fn from_greens(lattice: &Lattice, greens: &[GreenKernel]) -> Self {
        KernelDump {
            n_per_axis: lattice.n_per_axis(),
            spacing: lattice.spacing(),
            points: greens.iter().map(|g| g.z).collect(),
            kernels: greens.iter().map(|g| g.kernel.clone()).collect(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let dim = 3 * self.n_per_axis.pow(3);
        if self.points.len() != self.kernels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points for {} kernels",
                self.points.len(),
                self.kernels.len()
            )));
        }
        if let Some(k) = self.kernels.iter().find(|k| k.shape() != (dim, dim)) {
            return Err(Error::ShapeMismatch(format!("kernel {:?}, lattice needs {dim}", k.shape())));
        }
        let mut buf = Vec::with_capacity(48 + 16 * self.points.len() * (1 + dim * dim));
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.n_per_axis as u64).to_le_bytes());
        buf.extend_from_slice(&self.spacing.to_le_bytes());
        buf.extend_from_slice(&(self.points.len() as u64).to_le_bytes());
        for &z in &self.points {
            push_complex(&mut buf, z);
        }
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
        for k in &self.kernels {
            for i in 0..dim {
                for j in 0..dim {
                    push_complex(&mut buf, k[(i, j)]);
                }
            }
        }
        w.write_all(&buf).map_err(io)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head).map_err(io)?;
        if head[..4] != MAGIC {
            return Err(Error::Dump("bad magic".into()));
        }
        let version = u32::from_le_bytes([head[4], head[5], head[6], head[7]]);
        if version != DUMP_VERSION {
            return Err(Error::Dump(format!("unsupported version {version}")));
        }
        let n_per_axis = read_len(r, "lattice size")?;
        let spacing = read_f64(r)?;
        let n_points = read_len(r, "point count")?;
        let points = (0..n_points)
            .map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?)))
            .collect::<Result<Vec<_>>>()?;
        let rows = read_len(r, "rows")?;
        let cols = read_len(r, "cols")?;
        let dim = 3 * n_per_axis.pow(3);
        if rows != dim || cols != dim {
            return Err(Error::Dump(format!("kernel {rows}x{cols} on a lattice of dimension {dim}")));
        }
        let kernels = (0..n_points)
            .map(|_| {
                let mut k = DMatrix::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        k[(i, j)] = Complex64::new(read_f64(r)?, read_f64(r)?);
                    }
                }
                Ok(k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelDump {
            n_per_axis,
            spacing,
            points,
            kernels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::coupling::{build_model, ModelId, ModelParams};
    use crate::lattice::FrequencyGrid;

    #[test]
    fn coupling_round_trip() {
        let lat = Arc::new(Lattice::new(2, 0.8).unwrap());
        let grid = FrequencyGrid::midpoint(3, 3.0, 2.0).unwrap();
        let t = build_model(ModelId::GaussianNonlocal, lat, &grid, &ModelParams::default()).unwrap();
        let d = KernelDump::from_coupling(&t);
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"PLRK");
        assert_eq!(bytes.len(), 32 + 16 * 3 + 16 + 3 * 24 * 24 * 16);
        let back = KernelDump::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn corrupt_input_rejected() {
        let d = KernelDump {
            n_per_axis: 1,
            spacing: 1.0,
            points: vec![Complex64::new(0.5, 0.0)],
            kernels: vec![DMatrix::identity(3, 3)],
        };
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        assert!(matches!(KernelDump::read_from(&mut &bytes[..bytes.len() - 1]), Err(Error::Dump(_))));
        bytes[0] = b'X';
        assert!(matches!(KernelDump::read_from(&mut bytes.as_slice()), Err(Error::Dump(_))));
        let bad = KernelDump { kernels: vec![DMatrix::identity(2, 2)], ..d };
        assert!(matches!(bad.write_to(&mut Vec::new()), Err(Error::ShapeMismatch(_))));
    }
}
