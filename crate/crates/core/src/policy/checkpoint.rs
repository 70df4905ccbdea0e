//! On-disk layout of one policy group: `manifest.json` plus one tensor file
//! per parameter in the numkit binary layout.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numkit::{Activation, DType, Layer, MlpParams, Tensor};

use super::{GeneratedLayer, PolicyConfig, PolicyError, PolicyGroup, TypePolicy};

pub const GROUP_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub weight: String,
    pub bias: String,
    pub shape: [usize; 2],
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupManifest {
    pub format: u32,
    pub version: u64,
    pub frozen: bool,
    pub omega: Option<f64>,
    /// Agent type names, in type-index order.
    pub types: Vec<String>,
    pub obs_dim: usize,
    pub num_actions: usize,
    pub config: PolicyConfig,
    pub dtype: DType,
    pub trunks: Vec<Vec<LayerEntry>>,
    pub hypers: Vec<Vec<LayerEntry>>,
    pub generated: Vec<GeneratedLayer>,
}

pub(crate) fn write_net(dir: &Path, prefix: &str, net: &MlpParams, dtype: DType) -> Result<Vec<LayerEntry>, PolicyError> {
    net.layers()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let weight = format!("{prefix}_l{k}_w.hltt");
            let bias = format!("{prefix}_l{k}_b.hltt");
            fs::write(dir.join(&weight), l.weight.to_bytes(dtype))?;
            fs::write(dir.join(&bias), l.bias.to_bytes(dtype))?;
            Ok(LayerEntry {
                weight,
                bias,
                shape: [l.out_dim(), l.in_dim()],
                activation: l.activation,
            })
        })
        .collect()
}

pub(crate) fn read_net(dir: &Path, entries: &[LayerEntry]) -> Result<MlpParams, PolicyError> {
    let read = |name: &str| -> Result<Tensor, PolicyError> {
        let bytes = fs::read(dir.join(name))?;
        Ok(Tensor::from_bytes(&bytes)
            .map_err(|e| PolicyError::Corrupt(format!("{name}: {e}")))?
            .0)
    };
    let layers = entries
        .iter()
        .map(|e| {
            let weight = read(&e.weight)?;
            let bias = read(&e.bias)?;
            if weight.shape() != e.shape || bias.shape() != [e.shape[0]] {
                return Err(PolicyError::Corrupt(format!(
                    "{}: shape {:?} disagrees with manifest {:?}",
                    e.weight,
                    weight.shape(),
                    e.shape
                )));
            }
            Ok(Layer {
                weight,
                bias,
                activation: e.activation,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    MlpParams::new(layers).map_err(|e| PolicyError::Corrupt(e.to_string()))
}

/// Writes `group` into `dir` (created if missing).
pub fn save_group(group: &PolicyGroup, type_names: &[String], dir: &Path, dtype: DType) -> Result<(), PolicyError> {
    fs::create_dir_all(dir)?;
    let trunks = group
        .trunks()
        .iter()
        .enumerate()
        .map(|(i, t)| write_net(dir, &format!("trunk{i}"), t, dtype))
        .collect::<Result<Vec<_>, _>>()?;
    let hypers = group
        .type_policies()
        .iter()
        .enumerate()
        .map(|(j, t)| write_net(dir, &format!("type{j}_hyper"), &t.hyper, dtype))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = GroupManifest {
        format: GROUP_FORMAT,
        version: group.version,
        frozen: group.is_frozen(),
        omega: group.omega,
        types: type_names.to_vec(),
        obs_dim: group.obs_dim(),
        num_actions: group.num_actions(),
        config: group.config().clone(),
        dtype,
        trunks,
        hypers,
        generated: group.type_policies()[0].layout.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

pub fn read_group_manifest(dir: &Path) -> Result<GroupManifest, PolicyError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let m: GroupManifest =
        serde_json::from_str(&text).map_err(|e| PolicyError::Corrupt(format!("manifest.json: {e}")))?;
    if m.format != GROUP_FORMAT {
        return Err(PolicyError::Version {
            found: m.format,
            expected: GROUP_FORMAT,
        });
    }
    Ok(m)
}

pub fn load_group(dir: &Path) -> Result<(PolicyGroup, Vec<String>), PolicyError> {
    let m = read_group_manifest(dir)?;
    let trunks = m
        .trunks
        .iter()
        .map(|e| read_net(dir, e))
        .collect::<Result<Vec<_>, _>>()?;
    let types = m
        .hypers
        .iter()
        .map(|e| {
            Ok(TypePolicy {
                hyper: read_net(dir, e)?,
                layout: m.generated.clone(),
            })
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let expected_trunks = if m.config.shared_trunk { 1 } else { types.len() };
    if trunks.len() != expected_trunks || types.len() != m.types.len() {
        return Err(PolicyError::Corrupt(format!(
            "{} trunks and {} hyper-networks for {} types",
            trunks.len(),
            types.len(),
            m.types.len()
        )));
    }
    Ok((
        PolicyGroup::from_parts(
            m.version,
            m.frozen,
            m.omega,
            m.config,
            m.obs_dim,
            m.num_actions,
            trunks,
            types,
        ),
        m.types,
    ))
}
