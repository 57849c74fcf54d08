//! Parallel degrees and per-boundary communication volumes.
//!
//! The tasklet grid has `d_dp` macro-batches (rows) by `d_pp` stages
//! (columns). `c_pp` is what one macro-batch ships across one stage
//! boundary; `c_dp` is the parameter/gradient volume of one stage that its
//! data-parallel group has to synchronize.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-layer parameter count of a transformer block in units of `hidden²`:
/// 4 for the attention projections, 8 for the MLP.
pub const PARAMS_PER_LAYER_PER_HIDDEN_SQ: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: u64,
    pub hidden: u64,
    pub seq_len: u64,
    pub dtype_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelSpec {
    pub d_pp: usize,
    pub d_dp: usize,
    pub global_batch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub d_pp: usize,
    pub d_dp: usize,
    /// Activation bytes per macro-batch per stage boundary.
    #[serde(rename = "c_pp_bytes")]
    pub c_pp: f64,
    /// Parameter/gradient bytes per stage.
    #[serde(rename = "c_dp_bytes")]
    pub c_dp: f64,
}

impl WorkloadSpec {
    pub fn new(d_pp: usize, d_dp: usize, c_pp: f64, c_dp: f64) -> Result<Self> {
        let w = WorkloadSpec {
            d_pp,
            d_dp,
            c_pp,
            c_dp,
        };
        w.check()?;
        Ok(w)
    }

    pub fn devices(&self) -> usize {
        self.d_pp * self.d_dp
    }

    fn check(&self) -> Result<()> {
        if self.d_pp == 0 || self.d_dp == 0 {
            return Err(Error::Workload("d_pp and d_dp must be >= 1".into()));
        }
        if !(self.c_pp.is_finite() && self.c_pp >= 0.0) {
            return Err(Error::Workload("c_pp must be finite and >= 0".into()));
        }
        if !(self.c_dp.is_finite() && self.c_dp >= 0.0) {
            return Err(Error::Workload("c_dp must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn derive_workload(m: &ModelSpec, p: &ParallelSpec) -> Result<WorkloadSpec> {
    if [m.layers, m.hidden, m.seq_len, m.dtype_bytes].contains(&0) {
        return Err(Error::Workload("model dimensions must be positive".into()));
    }
    if p.d_pp == 0 || p.d_dp == 0 || p.global_batch == 0 {
        return Err(Error::Workload(
            "d_pp, d_dp and global_batch must be positive".into(),
        ));
    }
    let (d_pp, d_dp) = (p.d_pp as u64, p.d_dp as u64);
    if !m.layers.is_multiple_of(d_pp) {
        return Err(Error::Workload(format!(
            "{} layers do not split into {} stages",
            m.layers, d_pp
        )));
    }
    if !p.global_batch.is_multiple_of(d_dp) {
        return Err(Error::Workload(format!(
            "global batch {} does not split into {} macro-batches",
            p.global_batch, d_dp
        )));
    }
    let macro_batch = p.global_batch / d_dp;
    let c_pp = macro_batch * m.seq_len * m.hidden * m.dtype_bytes;
    let c_dp =
        PARAMS_PER_LAYER_PER_HIDDEN_SQ * m.hidden * m.hidden * (m.layers / d_pp) * m.dtype_bytes;
    WorkloadSpec::new(p.d_pp, p.d_dp, c_pp as f64, c_dp as f64)
}

pub fn validate_workload(w: &WorkloadSpec, n: usize) -> Result<()> {
    w.check()?;
    let product = w.d_pp * w.d_dp;
    if product != n {
        return Err(Error::DegreeMismatch {
            d_pp: w.d_pp,
            d_dp: w.d_dp,
            product,
            devices: n,
        });
    }
    Ok(())
}

/// Workload file: explicit volumes or a model/parallelism pair to derive
/// them from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadFile {
    Explicit(WorkloadSpec),
    Derived {
        model: ModelSpec,
        parallel: ParallelSpec,
    },
}

impl WorkloadFile {
    pub fn resolve(&self) -> Result<WorkloadSpec> {
        match self {
            WorkloadFile::Explicit(w) => {
                w.check()?;
                Ok(*w)
            }
            WorkloadFile::Derived { model, parallel } => derive_workload(model, parallel),
        }
    }
}

pub fn load_workload(bytes: &[u8]) -> Result<WorkloadSpec> {
    serde_json::from_slice::<WorkloadFile>(bytes)?.resolve()
}
