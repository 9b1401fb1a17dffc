//! Model zoo: sequence scorers, enclosing-subgraph classifiers, and credit
//! scoring heads, plus the shared training plumbing.

mod credit;
mod encoder;
mod link_rnn;
mod seal;
mod trainer;

pub use credit::{build_credit_graph, gcn_credit_score, train_gcn_credit, CreditGraph, GcnCredit};
pub use encoder::{
    embed_nodes, pretrain_node_encoder, rnn_credit_scores, NodeEmbeddings, NodeEncoder,
};
pub use link_rnn::{
    score_edge, score_sample_set, train_link_rnn, weight_subgraph, EdgeScoreCache, LinkRnn,
};
pub use seal::{build_features, check_seal_forward, random_subgraph, SealModel, SealPass};
pub use trainer::{prepare_samples, score_samples, train_link_model, PreparedSample};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    RnnLink,
    Seal,
    SealRnn,
    TwoSeal,
    TwoSealRnn,
    WlSeal,
    GcnScore,
    GcnScoreLpatt,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::RnnLink => "rnn-link",
            Variant::Seal => "seal",
            Variant::SealRnn => "seal-rnn",
            Variant::TwoSeal => "2seal",
            Variant::TwoSealRnn => "2seal-rnn",
            Variant::WlSeal => "wl-seal",
            Variant::GcnScore => "gcn",
            Variant::GcnScoreLpatt => "gcn-lpatt",
        }
    }

    /// Subgraph classifiers that read RNN-estimated edge weights.
    pub fn needs_edge_weights(&self) -> bool {
        matches!(self, Variant::SealRnn | Variant::TwoSealRnn)
    }

    pub fn is_subgraph_model(&self) -> bool {
        matches!(
            self,
            Variant::Seal
                | Variant::SealRnn
                | Variant::TwoSeal
                | Variant::TwoSealRnn
                | Variant::WlSeal
        )
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rnn-link" | "rnn" => Ok(Variant::RnnLink),
            "seal" => Ok(Variant::Seal),
            "seal-rnn" => Ok(Variant::SealRnn),
            "2seal" | "two-seal" => Ok(Variant::TwoSeal),
            "2seal-rnn" | "two-seal-rnn" => Ok(Variant::TwoSealRnn),
            "wl-seal" | "wlseal" => Ok(Variant::WlSeal),
            "gcn" | "gcn-score" => Ok(Variant::GcnScore),
            "gcn-lpatt" | "gcn-score-lpatt" => Ok(Variant::GcnScoreLpatt),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// What each subgraph node's feature row contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureMode {
    /// Sequence-encoder embeddings only.
    Et,
    /// Embeddings concatenated with structural labels.
    EtSl,
    /// Structural labels only.
    Sl,
    /// Structural labels computed without hiding the target pair.
    ModifiedSl,
}

impl FeatureMode {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureMode::Et => "et",
            FeatureMode::EtSl => "et+sl",
            FeatureMode::Sl => "sl",
            FeatureMode::ModifiedSl => "modified-sl",
        }
    }

    pub fn uses_embeddings(&self) -> bool {
        matches!(self, FeatureMode::Et | FeatureMode::EtSl)
    }

    pub fn uses_labels(&self) -> bool {
        !matches!(self, FeatureMode::Et)
    }

    /// Structural labels normally treat the target pair as absent; the
    /// modified mode keeps it visible.
    pub fn hide_targets_for_labels(&self) -> bool {
        !matches!(self, FeatureMode::ModifiedSl)
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "et" => Ok(FeatureMode::Et),
            "et+sl" | "et-sl" | "etsl" => Ok(FeatureMode::EtSl),
            "sl" => Ok(FeatureMode::Sl),
            "modified-sl" | "msl" => Ok(FeatureMode::ModifiedSl),
            other => Err(Error::InvalidArgument(format!("unknown feature mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub variant: Variant,
    pub feature_mode: FeatureMode,
    /// Widths of the stacked graph convolutions; outputs concatenate.
    pub conv_dims: Vec<usize>,
    /// Hidden width of the sequence cells (link scorer and node encoder).
    pub rnn_hidden: usize,
    /// Kept rows for sort pooling / color-refinement ordering.
    pub k: usize,
    pub hop: u8,
    pub cap: usize,
    /// Structural labels clamp to this value; one-hot width is label_max+1.
    pub label_max: u32,
    /// Width of the encoder's penultimate layer = embedding dimension.
    pub embed_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant, feature_mode: FeatureMode, seed: u64) -> Self {
        Self {
            variant,
            feature_mode,
            conv_dims: vec![32, 32, 32],
            rnn_hidden: 64,
            k: 30,
            hop: 1,
            cap: 30,
            label_max: 10,
            embed_dim: 32,
            seed,
        }
    }

    /// Read `model.*` keys on top of the defaults for this variant/mode.
    pub fn from_config(
        cfg: &KvConfig,
        variant: Variant,
        feature_mode: FeatureMode,
        seed: u64,
    ) -> Result<Self> {
        let d = Self::new(variant, feature_mode, seed);
        let out = Self {
            conv_dims: cfg.get_usize_list("model.conv_dims", &d.conv_dims)?,
            rnn_hidden: cfg.get_usize("model.rnn_hidden", d.rnn_hidden)?,
            k: cfg.get_usize("model.k", d.k)?,
            hop: cfg.get_u64("model.hop", d.hop as u64)? as u8,
            cap: cfg.get_usize("model.cap", d.cap)?,
            label_max: cfg.get_u64("model.label_max", d.label_max as u64)? as u32,
            embed_dim: cfg.get_usize("model.embed_dim", d.embed_dim)?,
            ..d
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_dims.is_empty() || self.conv_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!(
                "model.conv_dims must be non-empty positive widths, got {:?}",
                self.conv_dims
            )));
        }
        for (key, v) in [
            ("model.rnn_hidden", self.rnn_hidden),
            ("model.embed_dim", self.embed_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{key} must be positive")));
            }
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("model.k must be at least 2, got {}", self.k)));
        }
        if self.cap < 2 {
            return Err(Error::InvalidConfig(format!(
                "model.cap must be at least 2, got {}",
                self.cap
            )));
        }
        if !(1..=2).contains(&self.hop) {
            return Err(Error::InvalidConfig(format!("model.hop must be 1 or 2, got {}", self.hop)));
        }
        Ok(())
    }

    /// Per-node input width for the configured feature mode.
    pub fn in_dim(&self) -> usize {
        let label_width = self.label_max as usize + 1;
        match self.feature_mode {
            FeatureMode::Et => self.embed_dim,
            FeatureMode::EtSl => self.embed_dim + label_width,
            FeatureMode::Sl | FeatureMode::ModifiedSl => label_width,
        }
    }

    /// Total node representation width after concatenating conv outputs.
    pub fn stacked_width(&self) -> usize {
        self.conv_dims.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied to the learning rate after `patience` epochs
    /// without validation improvement; training stops after twice that.
    pub lr_decay: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 8, batch_size: 64, lr: 1e-3, lr_decay: 0.5, patience: 2 }
    }
}

impl TrainConfig {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            epochs: cfg.get_usize("train.epochs", d.epochs)?,
            batch_size: cfg.get_usize("train.batch_size", d.batch_size)?,
            lr: cfg.get_f64("train.lr", d.lr)?,
            lr_decay: cfg.get_f64("train.lr_decay", d.lr_decay)?,
            patience: cfg.get_usize("train.patience", d.patience)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "train.batch_size and train.patience must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("train.lr must be positive, got {}", self.lr)));
        }
        if !(0.0 < self.lr_decay && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train.lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub lr: f64,
}

/// Per-epoch metric trace; one row per epoch actually run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<EpochStat>,
}

impl TrainLog {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let name = path.display().to_string();
        let mut text = String::from("epoch,train_loss,val_auc,lr\n");
        for r in &self.rows {
            text.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.epoch, r.train_loss, r.val_auc, r.lr
            ));
        }
        std::fs::write(path, text).map_err(|e| Error::io(&name, e))
    }
}

/// Shared minibatch loop: seeded shuffle per epoch, mean-gradient Adam
/// steps, validation AUC per epoch, plateau lr decay, early stop, best
/// checkpoint restore. `sample_loss` runs one sample and returns its loss
/// value and parameter gradients; `val_scores` scores the validation set.
pub(crate) fn fit(
    ps: &mut ParamSet,
    seed: u64,
    tc: &TrainConfig,
    n_train: usize,
    mut sample_loss: impl FnMut(&ParamSet, usize) -> Result<(f64, Vec<Vec<f64>>)>,
    val_scores: impl FnMut(&ParamSet) -> Result<Vec<f64>>,
    val_labels: &[u8],
) -> Result<TrainLog> {
    fit_batched(
        ps,
        seed,
        tc,
        n_train,
        |ps, chunk| {
            let mut sum = 0.0;
            let mut grads: Option<Vec<Vec<f64>>> = None;
            for &i in chunk {
                let (loss, g) = sample_loss(ps, i)?;
                sum += loss;
                accumulate(&mut grads, g);
            }
            let mut mean = grads.expect("chunks are non-empty");
            let scale = 1.0 / chunk.len() as f64;
            for g in &mut mean {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            Ok((sum, mean))
        },
        val_scores,
        val_labels,
    )
}

/// Batch-granular core of [`fit`]: `batch_loss` runs one minibatch and
/// returns the summed loss plus the mean gradient. Models whose forward
/// pass covers the whole graph use this directly so each minibatch costs a
/// single tape.
pub(crate) fn fit_batched(
    ps: &mut ParamSet,
    seed: u64,
    tc: &TrainConfig,
    n_train: usize,
    mut batch_loss: impl FnMut(&ParamSet, &[usize]) -> Result<(f64, Vec<Vec<f64>>)>,
    mut val_scores: impl FnMut(&ParamSet) -> Result<Vec<f64>>,
    val_labels: &[u8],
) -> Result<TrainLog> {
    let mut opt = Adam::new(tc.lr, ps);
    let mut schedule = Schedule::new(ps, tc);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 0..tc.epochs {
        crate::rng::shuffle(&mut order, seed, crate::rng::domain::SHUFFLE, epoch as u64);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let (sum, mean) = batch_loss(ps, chunk)?;
            epoch_loss += sum;
            opt.step(ps, &mean)?;
        }
        epoch_loss /= n_train as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "training loss became {epoch_loss} at epoch {epoch}"
            )));
        }
        // Single-class validation sets score at chance; training still runs.
        let scores = val_scores(ps)?;
        let val_auc = crate::eval::roc_auc(&scores, val_labels).unwrap_or(0.5);
        log.rows.push(EpochStat { epoch, train_loss: epoch_loss, val_auc, lr: opt.lr });
        if !schedule.observe(val_auc, ps, &mut opt) {
            break;
        }
    }
    log::debug!("fit: {} epochs run, best val auc {:.4}", log.rows.len(), schedule.best_auc());
    schedule.restore(ps);
    Ok(log)
}

pub(crate) fn accumulate(total: &mut Option<Vec<Vec<f64>>>, grads: Vec<Vec<f64>>) {
    match total {
        None => *total = Some(grads),
        Some(acc) => {
            for (a, g) in acc.iter_mut().zip(&grads) {
                for (x, y) in a.iter_mut().zip(g) {
                    *x += y;
                }
            }
        }
    }
}

/// Validation-driven early stopping: snapshots the best parameters, halves
/// the learning rate after `patience` stale epochs, stops after twice that.
pub(crate) struct Schedule {
    best_auc: f64,
    best: ParamSet,
    since_best: usize,
    patience: usize,
    decay: f64,
}

impl Schedule {
    pub fn new(ps: &ParamSet, tc: &TrainConfig) -> Self {
        Self {
            best_auc: f64::NEG_INFINITY,
            best: ps.clone(),
            since_best: 0,
            patience: tc.patience,
            decay: tc.lr_decay,
        }
    }

    /// Record this epoch's validation score; false means stop training.
    pub fn observe(&mut self, auc: f64, ps: &ParamSet, opt: &mut Adam) -> bool {
        if auc > self.best_auc {
            self.best_auc = auc;
            self.best = ps.clone();
            self.since_best = 0;
            return true;
        }
        self.since_best += 1;
        if self.since_best % self.patience == 0 {
            opt.lr *= self.decay;
        }
        self.since_best < 2 * self.patience
    }

    pub fn best_auc(&self) -> f64 {
        self.best_auc
    }

    /// Hand back the best checkpoint seen (initialization if never observed).
    pub fn restore(self, ps: &mut ParamSet) {
        *ps = self.best;
    }
}
