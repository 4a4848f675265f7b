//! Self-describing checkpoints: network state, optimizer moments and a JSON
//! metadata record.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smis_tensor::checkpoint::{self, Record, RecordData};
use smis_tensor::optim::Adam;
use smis_tensor::{Float, ParamStore, Tensor};

use crate::error::{Result, SmisError};
use crate::harness::config::{Precision, RunConfig};
use crate::networks::{build_variant, ModelConfig, Networks, ParamCounts};

pub const META_RECORD: &str = "__meta__";
pub const FORMAT: &str = "smis-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub model: ModelConfig,
    pub precision: Precision,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub param_counts: ParamCounts,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub run: Option<RunConfig>,
}

/// Generator and discriminator optimizers.
pub struct Optimizers<T: Float> {
    pub gen: Adam<T>,
    pub disc: Adam<T>,
}

fn store_records<T: Float>(store: &ParamStore<T>, out: &mut Vec<Record>) {
    for (name, t) in store.state() {
        out.push(Record::from_tensor(name, &t));
    }
}

fn optim_records<T: Float>(tag: &str, adam: &Adam<T>, store: &ParamStore<T>, out: &mut Vec<Record>) {
    let (m, v) = adam.moments();
    for ((p, m), v) in store.params().iter().zip(m).zip(v) {
        out.push(Record::from_tensor(format!("{tag}.m.{}", p.name()), m));
        out.push(Record::from_tensor(format!("{tag}.v.{}", p.name()), v));
    }
    out.push(Record::from_tensor(
        format!("{tag}.step"),
        &Tensor::<f64>::scalar(adam.step_count() as f64),
    ));
}

pub fn save<T: Float>(
    path: &Path,
    nets: &Networks<T>,
    optim: Option<&Optimizers<T>>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let mut records = vec![Record::bytes(META_RECORD, serde_json::to_vec(meta)?)];
    store_records(&nets.gen_store, &mut records);
    store_records(&nets.disc_store, &mut records);
    if let Some(o) = optim {
        optim_records("adam_g", &o.gen, &nets.gen_store, &mut records);
        optim_records("adam_d", &o.disc, &nets.disc_store, &mut records);
    }
    let tmp = path.with_extension("ckpt.tmp");
    checkpoint::save(&tmp, &records).map_err(|e| with_path(e.into(), path))?;
    std::fs::rename(&tmp, path).map_err(|e| SmisError::io(path, e))
}

fn with_path(e: SmisError, path: &Path) -> SmisError {
    match e {
        SmisError::Tensor(t) => SmisError::data(path, t.to_string()),
        other => other,
    }
}

/// A checkpoint read into memory.
pub struct Loaded {
    pub meta: CheckpointMeta,
    pub records: Vec<Record>,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        let records = checkpoint::load(path).map_err(|e| with_path(e.into(), path))?;
        let meta = records
            .iter()
            .find(|r| r.name == META_RECORD)
            .ok_or_else(|| SmisError::data(path, "no metadata record"))?;
        let meta: CheckpointMeta = match &meta.data {
            RecordData::U8(bytes) => serde_json::from_slice(bytes)?,
            _ => return Err(SmisError::data(path, "metadata record is not bytes")),
        };
        if meta.format != FORMAT {
            return Err(SmisError::data(path, format!("unknown format {}", meta.format)));
        }
        Ok(Loaded { meta, records })
    }

    fn entries<T: Float>(&self) -> Result<Vec<(String, Tensor<T>)>> {
        self.records
            .iter()
            .filter(|r| !matches!(r.data, RecordData::U8(_)))
            .map(|r| Ok((r.name.clone(), r.to_tensor::<T>()?)))
            .collect()
    }

    /// Rebuild the networks and load every stored tensor.
    pub fn networks<T: Float>(&self) -> Result<Networks<T>> {
        let nets = build_variant::<T>(&self.meta.model, &mut ChaCha8Rng::seed_from_u64(0))?;
        let entries = self.entries::<T>()?;
        nets.gen_store.load_state(&entries)?;
        nets.disc_store.load_state(&entries)?;
        Ok(nets)
    }

    /// Restore optimizer moments saved alongside `nets`.
    pub fn optimizers<T: Float>(&self, nets: &Networks<T>, optim: &mut Optimizers<T>) -> Result<()> {
        let entries = self.entries::<T>()?;
        let find = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| SmisError::config(format!("checkpoint has no optimizer tensor {name}")))
        };
        for (tag, adam, store) in [("adam_g", &mut optim.gen, &nets.gen_store), ("adam_d", &mut optim.disc, &nets.disc_store)] {
            let params = store.params();
            let m = params.iter().map(|p| find(&format!("{tag}.m.{}", p.name()))).collect::<Result<Vec<_>>>()?;
            let v = params.iter().map(|p| find(&format!("{tag}.v.{}", p.name()))).collect::<Result<Vec<_>>>()?;
            let step = find(&format!("{tag}.step"))?.item().to_f64c() as u64;
            adam.restore(step, m, v)?;
        }
        Ok(())
    }
}
