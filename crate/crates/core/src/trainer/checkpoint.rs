//! Binary checkpoint, all integers and floats little-endian:
//!
//! ```text
//! "VXCK" u32 version
//! u32 d_model  u32 n_heads  u32 n_layers  u32 text_vocab  u32 speech_vocab
//! u64 step
//! u64 rng_seed  u64 rng_stream  u128 rng_word_pos
//! u32 n_tensors, then per tensor in `Model::tensors` order:
//!     u32 name_len, name (UTF-8), u32 rows, u32 cols, rows·cols f32
//! u8 has_moments; if 1: first moments then second moments, data only,
//!     same order and shapes as the parameters
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::optim::AdamState;
use crate::error::{Error, Result};
use crate::lm::{LmConfig, Model};
use crate::numerics::{Matrix, RngState};
use crate::recurrent::BlockConfig;

const MAGIC: &[u8; 4] = b"VXCK";
const VERSION: u32 = 1;

/// Everything needed to resume training exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub moments: Option<AdamState>,
    /// Optimizer steps already taken.
    pub step: u64,
    pub rng: RngState,
}

fn write_data(w: &mut impl Write, m: &Matrix) -> std::io::Result<()> {
    for &v in m.as_slice() {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_data(r: &mut impl Read, m: &mut Matrix) -> std::io::Result<()> {
    r.read_f32_into::<LittleEndian>(m.as_mut_slice())
}

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let cfg = self.model.config;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        for v in [
            cfg.block.d_model,
            cfg.block.n_heads,
            cfg.block.n_layers,
            cfg.text_vocab(),
            cfg.speech_vocab,
        ] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_u64::<LittleEndian>(self.step)?;
        w.write_u64::<LittleEndian>(self.rng.seed)?;
        w.write_u64::<LittleEndian>(self.rng.stream)?;
        w.write_u128::<LittleEndian>(self.rng.word_pos)?;
        let tensors = self.model.tensors();
        w.write_u32::<LittleEndian>(tensors.len() as u32)?;
        for (name, m) in tensors {
            w.write_u32::<LittleEndian>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            w.write_u32::<LittleEndian>(m.rows() as u32)?;
            w.write_u32::<LittleEndian>(m.cols() as u32)?;
            write_data(&mut w, m)?;
        }
        match &self.moments {
            None => w.write_u8(0)?,
            Some(state) => {
                w.write_u8(1)?;
                for model in [&state.m, &state.v] {
                    for (_, m) in model.tensors() {
                        write_data(&mut w, m)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Data(format!("checkpoint: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Data("checkpoint: bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(bad)?;
        if version != VERSION {
            return Err(Error::Data(format!("checkpoint: unsupported version {version}")));
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        }
        let [d_model, n_heads, n_layers, text_vocab, speech_vocab] = dims;
        let config = LmConfig::new(BlockConfig::new(d_model, n_heads, n_layers)?, speech_vocab)?;
        if text_vocab != config.text_vocab() {
            return Err(Error::Config(format!(
                "checkpoint text vocabulary {text_vocab} != {}",
                config.text_vocab()
            )));
        }
        let step = r.read_u64::<LittleEndian>().map_err(bad)?;
        let rng = RngState {
            seed: r.read_u64::<LittleEndian>().map_err(bad)?,
            stream: r.read_u64::<LittleEndian>().map_err(bad)?,
            word_pos: r.read_u128::<LittleEndian>().map_err(bad)?,
        };
        let mut model = Model::zeros(config);
        let count = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let mut tensors = model.tensors_mut();
        if count != tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint has {count} tensors, model expects {}",
                tensors.len()
            )));
        }
        for (name, m) in tensors.iter_mut() {
            let len = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
            let mut got = vec![0u8; len];
            r.read_exact(&mut got).map_err(bad)?;
            let rows = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
            let cols = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
            if got != name.as_bytes() || (rows, cols) != m.shape() {
                return Err(Error::Data(format!(
                    "checkpoint tensor {:?} {rows}×{cols} where {name} {:?} expected",
                    String::from_utf8_lossy(&got),
                    m.shape()
                )));
            }
            read_data(&mut r, m).map_err(bad)?;
        }
        drop(tensors);
        let moments = match r.read_u8().map_err(bad)? {
            0 => None,
            1 => {
                let mut state = AdamState::new(config);
                for (_, m) in state.m.tensors_mut() {
                    read_data(&mut r, m).map_err(bad)?;
                }
                for (_, m) in state.v.tensors_mut() {
                    read_data(&mut r, m).map_err(bad)?;
                }
                Some(state)
            }
            flag => return Err(Error::Data(format!("checkpoint: bad moments flag {flag}"))),
        };
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(bad)?;
        if !rest.is_empty() {
            return Err(Error::Data("checkpoint: trailing bytes".into()));
        }
        if !model.is_finite() {
            return Err(Error::Data("checkpoint: non-finite parameters".into()));
        }
        Ok(Self {
            model,
            moments,
            step,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::read_from(&bytes[..])
    }
}
