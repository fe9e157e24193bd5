use std::path::{Path, PathBuf};

use super::{DgmModel, ModelMeta, PreparedData};
use crate::numerics::ParamStore;
use crate::{Error, Result};

/// `<checkpoint>.meta.json`, written next to the weights.
pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_checkpoint(path: &Path, meta: &ModelMeta, store: &ParamStore) -> Result<()> {
    store.save(path)?;
    let mp = meta_path(path);
    std::fs::write(&mp, meta.to_json()).map_err(|e| Error::io(&mp, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelMeta, ParamStore)> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)?;
    Ok((meta, ParamStore::load(path)?))
}

/// Rebuilds the model for `data` and checks the stored weights fit it.
pub fn restore(meta: &ModelMeta, store: &ParamStore, data: &PreparedData) -> Result<DgmModel> {
    if meta.dims != data.dims {
        return Err(Error::Checkpoint(format!(
            "input dims differ: checkpoint {:?}, data {:?}",
            meta.dims, data.dims
        )));
    }
    meta.config.validate()?;
    if meta.config.output_scale.is_none() {
        return Err(Error::Checkpoint("config has no output_scale; was it written by training?".into()));
    }
    let model = DgmModel::new(&meta.config, meta.dims);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    model.init(&mut rng).check_compatible(store)?;
    Ok(model)
}
