use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::backend::{Feature, FeatureHooks};
use super::ddim::VideoLatent;
use crate::error::{Error, Result};
use crate::inject::FeatureKind;
use crate::types::Frame;

type Slot = (String, FeatureKind);

/// Inverted latents `z_0 … z_T` of one clip with the conditioning used and,
/// optionally, the features seen at each timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    latents: Vec<VideoLatent>,
    cond_frame: Frame,
    text: String,
    features: BTreeMap<usize, BTreeMap<Slot, Feature>>,
}

impl LatentTrajectory {
    pub(crate) fn new(
        latents: Vec<VideoLatent>,
        cond_frame: Frame,
        text: String,
        features: BTreeMap<usize, BTreeMap<Slot, Feature>>,
    ) -> Self {
        Self {
            latents,
            cond_frame,
            text,
            features,
        }
    }

    /// Number of inversion steps `T`; the trajectory holds `T + 1` latents.
    pub fn steps(&self) -> usize {
        self.latents.len() - 1
    }

    pub fn latent(&self, t: usize) -> Option<&VideoLatent> {
        self.latents.get(t)
    }

    pub fn latents(&self) -> &[VideoLatent] {
        &self.latents
    }

    pub fn cond_frame(&self) -> &Frame {
        &self.cond_frame
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Feature recorded when the model was queried at timestep `t`.
    pub fn feature(&self, t: usize, layer: &str, kind: FeatureKind) -> Option<&Feature> {
        self.features.get(&t)?.get(&(layer.to_owned(), kind))
    }

    pub fn captured_timesteps(&self) -> impl Iterator<Item = usize> + '_ {
        self.features.keys().copied()
    }

    pub fn feature_count(&self) -> usize {
        self.features.values().map(|m| m.len()).sum()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut latent_files = Vec::new();
        for (t, z) in self.latents.iter().enumerate() {
            let name = format!("z_{t:04}.bin");
            write_tensor(&dir.join(&name), z.shape(), z.iter().copied())?;
            latent_files.push(name);
        }
        let cond = self.cond_frame.pixels();
        write_tensor(&dir.join("cond.bin"), cond.shape(), cond.iter().map(|v| *v as f64))?;

        let mut features = Vec::new();
        for (&timestep, slots) in &self.features {
            for ((layer, kind), feature) in slots {
                let stem = format!("f_{timestep:04}_{:03}", features.len());
                let tensors: Vec<&ArrayD<f64>> = match feature {
                    Feature::Conv(x) => vec![x],
                    Feature::QueryKey { query, key } => vec![query, key],
                };
                let mut files = Vec::new();
                for (i, x) in tensors.into_iter().enumerate() {
                    let name = format!("{stem}_{i}.bin");
                    write_tensor(&dir.join(&name), x.shape(), x.iter().copied())?;
                    files.push(name);
                }
                features.push(FeatureEntry {
                    timestep,
                    layer: layer.clone(),
                    kind: *kind,
                    files,
                });
            }
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            steps: self.steps(),
            frame_index: self.cond_frame.index(),
            text: self.text.clone(),
            latents: latent_files,
            features,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    /// Reads a trajectory written by [`save`](Self::save). Values pass
    /// through `f32` on disk.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let manifest: Manifest =
            serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        if manifest.format != FORMAT {
            return Err(Error::Codec(format!("unknown trajectory format `{}`", manifest.format)));
        }
        if manifest.latents.len() != manifest.steps + 1 {
            return Err(Error::Codec("latent count does not match step count".into()));
        }
        let latents = manifest
            .latents
            .iter()
            .map(|name| {
                read_tensor(&dir.join(name))?
                    .into_dimensionality()
                    .map_err(|e| Error::Codec(format!("{name}: {e}")))
            })
            .collect::<Result<Vec<VideoLatent>>>()?;
        let cond = read_tensor(&dir.join("cond.bin"))?
            .mapv(|v| v as f32)
            .into_dimensionality()
            .map_err(|e| Error::Codec(format!("cond.bin: {e}")))?;
        let cond_frame = Frame::new(cond, manifest.frame_index)?;

        let mut features: BTreeMap<usize, BTreeMap<Slot, Feature>> = BTreeMap::new();
        for entry in manifest.features {
            let mut tensors = entry
                .files
                .iter()
                .map(|f| read_tensor(&dir.join(f)))
                .collect::<Result<Vec<_>>>()?;
            let feature = match (entry.kind, tensors.len()) {
                (FeatureKind::Conv, 1) => Feature::Conv(tensors.remove(0)),
                (FeatureKind::SpatialQk | FeatureKind::TemporalQk, 2) => {
                    let key = tensors.remove(1);
                    Feature::QueryKey {
                        query: tensors.remove(0),
                        key,
                    }
                }
                _ => return Err(Error::Codec(format!("bad feature entry for `{}`", entry.layer))),
            };
            features
                .entry(entry.timestep)
                .or_default()
                .insert((entry.layer, entry.kind), feature);
        }
        Ok(Self {
            latents,
            cond_frame,
            text: manifest.text,
            features,
        })
    }
}

const FORMAT: &str = "latent-trajectory/1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    steps: usize,
    frame_index: usize,
    text: String,
    latents: Vec<String>,
    features: Vec<FeatureEntry>,
}

#[derive(Serialize, Deserialize)]
struct FeatureEntry {
    timestep: usize,
    layer: String,
    kind: FeatureKind,
    files: Vec<String>,
}

/// Little-endian `u32` rank, `u32` dimensions, then `f32` values in row-major
/// order.
pub fn write_tensor(path: &Path, shape: &[usize], values: impl Iterator<Item = f64>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_u32::<LittleEndian>(shape.len() as u32).map_err(io)?;
    for d in shape {
        w.write_u32::<LittleEndian>(*d as u32).map_err(io)?;
    }
    for v in values {
        w.write_f32::<LittleEndian>(v as f32).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_tensor(path: &Path) -> Result<ArrayD<f64>> {
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let rank = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    if rank > 8 {
        return Err(Error::Codec(format!("{}: implausible rank {rank}", path.display())));
    }
    let shape = (0..rank)
        .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    let n: usize = shape.iter().product();
    let mut bytes = Vec::with_capacity(n * 4);
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() != n * 4 {
        return Err(Error::Codec(format!(
            "{}: expected {} values, found {} bytes",
            path.display(),
            n,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| Error::Codec(e.to_string()))
}

/// Hooks that copy every visited feature, keyed by timestep.
#[derive(Default)]
pub(crate) struct CaptureHooks {
    pub features: BTreeMap<usize, BTreeMap<Slot, Feature>>,
}

impl FeatureHooks for CaptureHooks {
    fn visit(&mut self, timestep: usize, layer: &str, kind: FeatureKind, feature: &mut Feature) -> Result<()> {
        self.features
            .entry(timestep)
            .or_default()
            .entry((layer.to_owned(), kind))
            .or_insert_with(|| feature.clone());
        Ok(())
    }
}
