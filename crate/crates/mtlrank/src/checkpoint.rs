//! Checkpoint files.
//!
//! ```text
//! magic        16 bytes  "MTLRANK-CKPT-V1\0"
//! header_len   u64 LE
//! header       JSON: ranker config, data preparation, task ids, balancer
//!              state, optimizer state, step
//! n_params     u64 LE
//! params       n_params f64 LE in RankerParams flat order
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mtlrank_core::optim::Optimizer;
use mtlrank_core::{BalancerState, RankerConfig, RankerParams, TaskId};
use serde::{Deserialize, Serialize};

use crate::dataset::{DataPrep, Reader};

pub const CKPT_MAGIC: &[u8; 16] = b"MTLRANK-CKPT-V1\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: RankerConfig,
    pub prep: DataPrep,
    pub tasks: Vec<TaskId>,
    pub balancer: BalancerState,
    pub optimizer: Optimizer,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: RankerParams,
}

pub fn encode(header: &CheckpointHeader, params: &RankerParams) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let flat = params.to_flat();
    let mut out = Vec::with_capacity(40 + json.len() + 8 * flat.len());
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(16)? != CKPT_MAGIC {
        bail!("not an mtlrank checkpoint");
    }
    let n = r.u64()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(n)?).context("checkpoint header")?;
    let count = r.u64()? as usize;
    ensure!(count == header.model.param_count(), "checkpoint holds {count} parameters, config needs {}", header.model.param_count());
    let flat = r.f64s(count)?;
    ensure!(r.pos == bytes.len(), "trailing bytes after parameters");
    let mut params = RankerParams::init(&header.model, 0)?;
    params.set_flat(&flat)?;
    Ok(Checkpoint { header, params })
}

pub fn save(path: &Path, header: &CheckpointHeader, params: &RankerParams) -> Result<()> {
    fs::write(path, encode(header, params)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("loading {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtlrank_core::optim::OptimizerConfig;
    use mtlrank_core::{Balancer, BalancerKind, TaskDerivationSpec};

    fn header() -> (CheckpointHeader, RankerParams) {
        let model = RankerConfig { d_f: 3, d_fc: 4, n_blocks: 1, n_heads: 2, d_h: 5, ..Default::default() };
        let params = RankerParams::init(&model, 9).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3), params.n_params());
        let mut flat = params.to_flat();
        let dir = vec![0.1; flat.len()];
        opt.step(&mut flat, &dir);
        let header = CheckpointHeader {
            model,
            prep: DataPrep { spec: TaskDerivationSpec::default(), bin_edges: vec![None, Some(vec![0.1, 1.0 / 3.0])], norm: None },
            tasks: vec![TaskId::GRADE, TaskId(131)],
            balancer: Balancer::new(BalancerKind::Famo { lr: 0.025 }, 2).unwrap().state().clone(),
            optimizer: opt,
            step: 1,
        };
        (header, params)
    }

    #[test]
    fn round_trip_is_exact() {
        let (h, p) = header();
        let bytes = encode(&h, &p).unwrap();
        assert_eq!(&bytes[..16], CKPT_MAGIC);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.header, h);
        assert_eq!(back.params, p);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (h, p) = header();
        let bytes = encode(&h, &p).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode(&magic).is_err());
    }
}
