//! Named parameter storage, seeded initialization, and checkpoints.

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, VarId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub type ParamId = usize;

#[derive(Debug, Clone, PartialEq)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// All learnable tensors of a model, addressed by insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in ±1/√fan_in, where fan_in = rows.
    UniformFanIn,
    Const(f64),
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let values = match init {
            Init::Zeros => vec![0.0; rows * cols],
            Init::Const(c) => vec![c; rows * cols],
            Init::UniformFanIn => {
                let limit = 1.0 / (rows as f64).sqrt();
                (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect()
            }
        };
        self.entries.push(ParamEntry { name: name.to_string(), rows, cols, values });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.entries[id].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id].values
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        (self.entries[id].rows, self.entries[id].cols)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id].name
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.rows, e.cols))
            .collect()
    }

    /// Replace values with another set's, requiring an identical layout
    /// (same names, shapes, order). Used to restore checkpoints.
    pub fn adopt_values(&mut self, other: &ParamSet) -> Result<()> {
        if self.layout() != other.layout() {
            return Err(Error::Checkpoint(
                "checkpoint layout does not match the model".into(),
            ));
        }
        for (mine, theirs) in self.entries.iter_mut().zip(&other.entries) {
            mine.values.clone_from(&theirs.values);
        }
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"TLPC0001";

    pub fn save(&self, path: &Path) -> Result<()> {
        let name = path.display().to_string();
        let file = std::fs::File::create(path).map_err(|e| Error::io(&name, e))?;
        let mut w = BufWriter::new(file);
        let mut go = || -> std::io::Result<()> {
            w.write_all(Self::MAGIC)?;
            w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
            for e in &self.entries {
                w.write_all(&(e.name.len() as u64).to_le_bytes())?;
                w.write_all(e.name.as_bytes())?;
                w.write_all(&(e.rows as u64).to_le_bytes())?;
                w.write_all(&(e.cols as u64).to_le_bytes())?;
                for &v in &e.values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()
        };
        go().map_err(|e| Error::io(&name, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(&name, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(&name, e))?;
        if &magic != Self::MAGIC {
            return Err(Error::Checkpoint(format!("{name}: not a parameter checkpoint")));
        }
        let go = |r: &mut BufReader<std::fs::File>| -> std::io::Result<ParamSet> {
            let mut u64buf = [0u8; 8];
            let mut read_u64 = |r: &mut BufReader<std::fs::File>| -> std::io::Result<u64> {
                r.read_exact(&mut u64buf)?;
                Ok(u64::from_le_bytes(u64buf))
            };
            let count = read_u64(r)? as usize;
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                let name_len = read_u64(r)? as usize;
                let mut name_buf = vec![0u8; name_len];
                r.read_exact(&mut name_buf)?;
                let rows = read_u64(r)? as usize;
                let cols = read_u64(r)? as usize;
                let mut values = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b)?;
                    values.push(f64::from_le_bytes(b));
                }
                entries.push(ParamEntry {
                    name: String::from_utf8_lossy(&name_buf).into_owned(),
                    rows,
                    cols,
                    values,
                });
            }
            Ok(ParamSet { entries })
        };
        go(&mut r).map_err(|e| Error::io(&name, e))
    }
}

/// One forward/backward pass: a tape plus the mapping from parameter ids to
/// the tape leaves they were loaded into. Parameters load lazily, so a
/// session only pays for the layers it actually runs.
pub struct TapeSession {
    pub tape: Tape,
    param_vars: Vec<Option<VarId>>,
}

impl TapeSession {
    pub fn new(params: &ParamSet) -> Self {
        Self { tape: Tape::new(), param_vars: vec![None; params.len()] }
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> VarId {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        let (rows, cols) = params.shape(id);
        let v = self.tape.leaf(rows, cols, params.values(id).to_vec());
        self.param_vars[id] = Some(v);
        v
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> VarId {
        self.tape.leaf(rows, cols, data)
    }

    /// Loss gradients per parameter, aligned with the ParamSet; parameters
    /// the graph never touched get zero gradients.
    pub fn grads(&self, loss: VarId, params: &ParamSet) -> Vec<Vec<f64>> {
        let node_grads = self.tape.backward(loss);
        (0..params.len())
            .map(|id| match self.param_vars[id] {
                Some(v) => node_grads[v].clone(),
                None => vec![0.0; params.values(id).len()],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn checkpoint_roundtrip_and_layout_guard() {
        let mut r = rng::stream(3, rng::domain::PARAM_INIT, 0, 0);
        let mut ps = ParamSet::new();
        let w = ps.add("enc.w", 4, 3, Init::UniformFanIn, &mut r);
        let b = ps.add("enc.b", 1, 3, Init::Zeros, &mut r);
        assert_eq!(ps.shape(w), (4, 3));
        assert!(ps.values(b).iter().all(|&v| v == 0.0));

        let path = std::env::temp_dir().join(format!("templink_ckpt_{}.bin", std::process::id()));
        ps.save(&path).unwrap();
        let loaded = ParamSet::load(&path).unwrap();
        assert_eq!(ps, loaded);

        let mut other = ParamSet::new();
        other.add("enc.w", 4, 3, Init::Zeros, &mut r);
        other.add("enc.b", 1, 3, Init::Zeros, &mut r);
        other.adopt_values(&loaded).unwrap();
        assert_eq!(other.values(w), ps.values(w));

        let mut wrong = ParamSet::new();
        wrong.add("enc.w", 3, 4, Init::Zeros, &mut r);
        assert!(wrong.adopt_values(&loaded).is_err());

        std::fs::write(&path, b"garbagegarbage").unwrap();
        assert!(ParamSet::load(&path).is_err());
        let _ = std::fs::remove_file(&path);
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let mk = || {
            let mut r = rng::stream(11, rng::domain::PARAM_INIT, 5, 0);
            let mut ps = ParamSet::new();
            ps.add("w", 16, 8, Init::UniformFanIn, &mut r);
            ps
        };
        let a = mk();
        let b = mk();
        assert_eq!(a, b);
        let limit = 1.0 / 4.0;
        assert!(a.values(0).iter().all(|v| v.abs() <= limit));
        // not degenerate
        assert!(a.values(0).iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn session_lazy_loading_and_grad_alignment() {
        let mut r = rng::stream(1, rng::domain::PARAM_INIT, 0, 0);
        let mut ps = ParamSet::new();
        let used = ps.add("used", 2, 2, Init::Const(1.0), &mut r);
        let unused = ps.add("unused", 3, 3, Init::Const(1.0), &mut r);

        let mut s = TapeSession::new(&ps);
        let x = s.input(1, 2, vec![1.0, 2.0]);
        let w = s.param(&ps, used);
        let y = s.tape.matmul(x, w);
        let loss = s.tape.sum_all(y);
        let grads = s.grads(loss, &ps);
        assert_eq!(grads.len(), 2);
        assert_eq!(grads[used], vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(grads[unused], vec![0.0; 9]);
    }
}
