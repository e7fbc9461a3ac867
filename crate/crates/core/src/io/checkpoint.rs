use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::deeponet::{DeepOnet, DeepOnetConfig, DeepOnetLoss, DeepOnetRecord, DeepOnetTrainer};
use crate::error::{Error, Result};
use crate::fol::{FolConfig, FolModel, FolNetwork, FolTrainer, LossBreakdown, NetworkRecord};
use crate::microstructure::FourierSpec;
use crate::neural::{AdamState, Params};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fol,
    Deeponet,
}

/// Everything needed to predict with, or keep training, a FOL model. The
/// shuffle order is a pure function of `(seed, epoch)`, so `epochs_done` is
/// the whole data-order state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FolCheckpoint {
    pub version: u32,
    pub model: ModelKind,
    pub config_hash: String,
    pub config: FolConfig,
    pub fourier: Option<FourierSpec>,
    pub network: NetworkRecord,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub history: Vec<LossBreakdown>,
}

impl FolCheckpoint {
    pub fn from_trainer(t: &FolTrainer, config_hash: &str) -> Self {
        FolCheckpoint {
            version: CHECKPOINT_VERSION,
            model: ModelKind::Fol,
            config_hash: config_hash.to_string(),
            config: t.model.config.clone(),
            fourier: t.model.fourier.clone(),
            network: (&t.model.network).into(),
            adam: t.adam.clone(),
            epochs_done: t.epochs_done,
            history: t.history.clone(),
        }
    }

    pub fn to_trainer(&self) -> Result<FolTrainer> {
        let network = FolNetwork::try_from(&self.network)?;
        check_adam(&self.adam, network.n_params())?;
        Ok(FolTrainer {
            model: FolModel { config: self.config.clone(), network, fourier: self.fourier.clone() },
            adam: self.adam.clone(),
            epochs_done: self.epochs_done,
            history: self.history.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepOnetCheckpoint {
    pub version: u32,
    pub model: ModelKind,
    pub config_hash: String,
    pub config: DeepOnetConfig,
    pub network: DeepOnetRecord,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub history: Vec<DeepOnetLoss>,
}

impl DeepOnetCheckpoint {
    pub fn from_trainer(t: &DeepOnetTrainer, config_hash: &str) -> Self {
        DeepOnetCheckpoint {
            version: CHECKPOINT_VERSION,
            model: ModelKind::Deeponet,
            config_hash: config_hash.to_string(),
            config: t.config.clone(),
            network: (&t.net).into(),
            adam: t.adam.clone(),
            epochs_done: t.epochs_done,
            history: t.history.clone(),
        }
    }

    pub fn to_trainer(&self) -> Result<DeepOnetTrainer> {
        let net = DeepOnet::try_from(&self.network)?;
        check_adam(&self.adam, net.n_params())?;
        Ok(DeepOnetTrainer {
            config: self.config.clone(),
            net,
            adam: self.adam.clone(),
            epochs_done: self.epochs_done,
            history: self.history.clone(),
        })
    }
}

fn check_adam(adam: &AdamState, n: usize) -> Result<()> {
    if adam.m.len() != n || adam.v.len() != n {
        return Err(Error::Checkpoint(format!("optimizer state has {} entries, network {n}", adam.m.len())));
    }
    Ok(())
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<u32>,
    model: Option<ModelKind>,
}

/// Which model a checkpoint file holds.
pub fn checkpoint_kind(path: &Path) -> Result<ModelKind> {
    let probe: VersionProbe = serde_json::from_slice(&fs::read(path)?)?;
    probe.model.ok_or_else(|| Error::Checkpoint("missing model field".into()))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec(value)?)?;
    Ok(())
}

/// Reads a versioned JSON document, rejecting missing or unknown versions.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    let probe: VersionProbe = serde_json::from_slice(&bytes)?;
    match probe.version {
        Some(CHECKPOINT_VERSION) => Ok(serde_json::from_slice(&bytes)?),
        Some(v) => Err(Error::Checkpoint(format!("unsupported version {v}"))),
        None => Err(Error::Checkpoint("missing version field".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::{Architecture, FolProblem};
    use crate::mesh::{DirichletBc, DofMap, Mesh};

    #[test]
    fn fol_checkpoint_round_trip() {
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let dofs = DofMap::new(&mesh, &[DirichletBc::new("left", 0, 0.0), DirichletBc::new("left", 1, 0.0)]).unwrap();
        let p = FolProblem::new(mesh, dofs, 0.3).unwrap();
        let cfg = FolConfig { architecture: Architecture::SingleNet, hidden: vec![3], ..Default::default() };
        let mut t = FolTrainer::new(FolModel::init(&cfg, &p, None).unwrap());
        t.adam.m[0] = 0.1 + 0.2;
        t.adam.step = 3;
        let dir = std::env::temp_dir().join(format!("fol-ckpt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        save_json(&path, &FolCheckpoint::from_trainer(&t, "abc")).unwrap();
        assert_eq!(checkpoint_kind(&path).unwrap(), ModelKind::Fol);
        let back: FolCheckpoint = load_json(&path).unwrap();
        assert_eq!(back.to_trainer().unwrap(), t);
        fs::write(&path, br#"{"model":"fol"}"#).unwrap();
        assert!(matches!(load_json::<FolCheckpoint>(&path), Err(Error::Checkpoint(_))));
        fs::remove_dir_all(&dir).unwrap();
    }
}
