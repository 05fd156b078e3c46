//! Versioned binary model file.
//!
//! Layout, all integers `u32` and all reals `f64`, little-endian:
//!
//! ```text
//! "DMHS" | version | variant (u8: 0 = CSI, 1 = GEO) | N_B | N_C | h | δ | N_R
//! leaky_slope | mu_sinr | sigma_sinr | mu_h | sigma_h | bias_db
//! block count, then per block in parameter-layout order:
//!   name length | name (UTF-8) | rank | extents... | values...
//! ```

use std::path::Path;

use dmhsa_core::autodiff::Tensor;
use dmhsa_core::beamforming::ReportMode;
use dmhsa_core::dmhsa::{DmhsaConfig, DmhsaParams, LabelStandardizer};

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 4] = b"DMHS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: DmhsaConfig,
    /// Array size the features were built for (0 for location features).
    pub n_elements: usize,
    pub standardizer: LabelStandardizer,
    pub params: DmhsaParams,
}

fn u32_of(x: usize) -> Result<u32> {
    u32::try_from(x).map_err(|_| LabError::ModelFile(format!("{x} does not fit in u32")))
}

impl TrainedModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match c.variant {
            ReportMode::Csi => 0,
            ReportMode::Geo => 1,
        });
        for v in [c.n_beams, c.n_channels, c.n_heads, c.feature_dim, self.n_elements] {
            out.extend_from_slice(&u32_of(v)?.to_le_bytes());
        }
        let s = &self.standardizer;
        for v in [c.leaky_slope, s.mu_sinr, s.sigma_sinr, s.mu_h, s.sigma_h, s.bias_db] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let layout = self.params.layout();
        out.extend_from_slice(&u32_of(layout.len())?.to_le_bytes());
        for (name, t) in layout.names.iter().zip(self.params.tensors()) {
            out.extend_from_slice(&u32_of(name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&u32_of(t.shape().len())?.to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&u32_of(*d)?.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(LabError::ModelFile("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(LabError::ModelFile(format!("unsupported version {version}")));
        }
        let variant = match r.take(1)?[0] {
            0 => ReportMode::Csi,
            1 => ReportMode::Geo,
            v => return Err(LabError::ModelFile(format!("unknown variant tag {v}"))),
        };
        let n_beams = r.u32()? as usize;
        let n_channels = r.u32()? as usize;
        let n_heads = r.u32()? as usize;
        let feature_dim = r.u32()? as usize;
        let n_elements = r.u32()? as usize;
        let leaky_slope = r.f64()?;
        let standardizer = LabelStandardizer {
            mu_sinr: r.f64()?,
            sigma_sinr: r.f64()?,
            mu_h: r.f64()?,
            sigma_h: r.f64()?,
            bias_db: r.f64()?,
        };
        let config = DmhsaConfig {
            variant,
            n_beams,
            n_channels,
            n_heads,
            feature_dim,
            leaky_slope,
        };
        config.validate()?;
        let expected = dmhsa_core::dmhsa::ParamLayout::new(&config);
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(LabError::ModelFile(format!("{count} blocks, expected {}", expected.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for name in &expected.names {
            let len = r.u32()? as usize;
            let got = std::str::from_utf8(r.take(len)?).map_err(|_| LabError::ModelFile("block name is not UTF-8".into()))?;
            if got != name {
                return Err(LabError::ModelFile(format!("block {got:?} where {name:?} was expected")));
            }
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push(Tensor::new(shape, data).map_err(|e| LabError::ModelFile(e.to_string()))?);
        }
        if r.pos != bytes.len() {
            return Err(LabError::ModelFile("trailing bytes".into()));
        }
        let params = DmhsaParams::from_tensors(&config, tensors)?;
        Ok(Self {
            config,
            n_elements,
            standardizer,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(LabError::io(format!("writing {}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(LabError::io(format!("reading {}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| LabError::ModelFile("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmhsa_core::seed::rng_for;

    fn model() -> TrainedModel {
        let config = DmhsaConfig::csi(16, 6);
        TrainedModel {
            config,
            n_elements: 16,
            standardizer: LabelStandardizer {
                mu_sinr: 1.5,
                sigma_sinr: 4.0,
                mu_h: 0.1,
                sigma_h: 0.02,
                bias_db: -0.25,
            },
            params: DmhsaParams::init(&config, &mut rng_for(1, "modelfile", 0)).unwrap(),
        }
    }

    #[test]
    fn round_trip() {
        let m = model();
        let bytes = m.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"DMHS");
        assert_eq!(TrainedModel::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = model().to_bytes().unwrap();
        assert!(TrainedModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TrainedModel::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(TrainedModel::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(TrainedModel::from_bytes(&long).is_err());
    }
}
