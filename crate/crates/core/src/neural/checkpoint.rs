//! JSON checkpoints of actor and critic parameters.
//!
//! Values are written with shortest round-trip formatting, so reading a
//! checkpoint back reproduces every `f64` bit for bit.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::LayerSpec;
use super::network::Network;
use super::policy::{ActorNet, CriticNet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<Tensor>,
}

impl NetworkManifest {
    pub fn from_network(net: &Network) -> Self {
        Self {
            input_shape: net.input_shape().to_vec(),
            layers: net.specs().to_vec(),
            params: net.params().into_iter().cloned().collect(),
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        // the seed is irrelevant: every parameter is overwritten below
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::new(&self.input_shape, self.layers.clone(), &mut rng)?;
        for p in &self.params {
            Tensor::new(p.shape().to_vec(), p.data().to_vec())?;
        }
        net.set_params(self.params.clone())?;
        Ok(net)
    }
}

/// Everything needed to rebuild a trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub asset_ids: Vec<String>,
    pub window: usize,
    pub arbitrage_enabled: bool,
    pub actor: NetworkManifest,
    pub critic: NetworkManifest,
}

impl Checkpoint {
    pub fn new(asset_ids: Vec<String>, window: usize, arbitrage_enabled: bool, actor: &ActorNet, critic: &CriticNet) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            asset_ids,
            window,
            arbitrage_enabled,
            actor: NetworkManifest::from_network(&actor.net),
            critic: NetworkManifest::from_network(&critic.net),
        }
    }

    pub fn actor(&self) -> Result<ActorNet> {
        ActorNet::from_network(self.actor.to_network()?)
    }

    pub fn critic(&self) -> Result<CriticNet> {
        CriticNet::from_network(self.critic.to_network()?)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let actor = ActorNet::new(3, 8, &mut rng).unwrap();
        let critic = CriticNet::new(3, 8, &mut rng).unwrap();
        let ck = Checkpoint::new(vec!["A".into(), "B".into(), "IDX".into()], 8, true, &actor, &critic);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let a2 = back.actor().unwrap();
        for (p, q) in actor.net.params().iter().zip(a2.net.params()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(p), bits(q));
        }
    }

    #[test]
    fn rejects_bad_version_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = ActorNet::new(2, 6, &mut rng).unwrap();
        let critic = CriticNet::new(2, 6, &mut rng).unwrap();
        let mut ck = Checkpoint::new(vec!["A".into(), "B".into()], 6, true, &actor, &critic);
        ck.version = 99;
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());
        ck.version = CHECKPOINT_VERSION;
        ck.actor.params.pop();
        assert!(ck.actor().is_err());
    }
}
