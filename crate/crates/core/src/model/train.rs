use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_classes, joint_loss, BatchPlan, DgmConfig, DgmModel, InputDims, ModelMeta, RoutingMode, Variant};
use crate::data::{labels, shot_labels, ShotSpec};
use crate::graphs::{AttributeGraphs, GraphTensors, Order, OrderIndex};
use crate::imbalance::{compute_weights, estimate_density, LabelDensity};
use crate::metrics::{self, EvalReport};
use crate::numerics::{AdamState, ParamStore, Tape};
use crate::{Error, Result};

pub const LOG_HEADER: &str = "epoch,train_loss,val_mae,val_mape,val_ew";

/// Rows per forward pass when predicting.
const PREDICT_CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_mape: f64,
    pub val_ew: f64,
}

impl EpochLog {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{}", self.epoch, self.train_loss, self.val_mae, self.val_mape, self.val_ew)
    }
}

/// Graphs built from the training split plus the indexed splits.
pub struct PreparedData {
    pub graphs: AttributeGraphs,
    pub tensors: GraphTensors,
    pub dims: InputDims,
    pub train: Vec<Order>,
    pub val: Vec<Order>,
    pub train_idx: OrderIndex,
    pub val_idx: OrderIndex,
}

impl PreparedData {
    pub fn new(config: &DgmConfig, train: &[Order], val: &[Order]) -> Result<Self> {
        let graphs = AttributeGraphs::build(train, &config.graph)?;
        let tensors = graphs.tensors(config.self_loops);
        Ok(PreparedData {
            dims: InputDims::of(&graphs),
            train_idx: graphs.index_orders(train),
            val_idx: graphs.index_orders(val),
            tensors,
            graphs,
            train: train.to_vec(),
            val: val.to_vec(),
        })
    }

    pub fn index(&self, orders: &[Order]) -> OrderIndex {
        self.graphs.index_orders(orders)
    }

    pub fn train_labels(&self) -> Vec<f64> {
        labels(&self.train)
    }
}

pub struct TrainOutcome {
    /// Model with the effective config (output scale filled in).
    pub model: DgmModel,
    /// Parameters of the best validation epoch (the initialization when no
    /// epoch ran).
    pub best: ParamStore,
    pub best_epoch: Option<usize>,
    pub log: Vec<EpochLog>,
    pub density: Option<LabelDensity>,
}

impl TrainOutcome {
    pub fn meta(&self) -> ModelMeta {
        ModelMeta { config: self.model.config.clone(), dims: self.model.dims }
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for e in &self.log {
            s.push_str(&e.csv_line());
            s.push('\n');
        }
        s
    }
}

/// Tail density for the variant, or `None` when re-weighting is off. An
/// empty tail disables re-weighting with a warning.
pub fn fit_density(config: &DgmConfig, train_labels: &[f64]) -> Result<Option<LabelDensity>> {
    if !config.reweight_on || !config.variant.has_tail() {
        return Ok(None);
    }
    let tail: Vec<f64> = if config.variant.density_on_all_labels() {
        train_labels.to_vec()
    } else {
        train_labels.iter().copied().filter(|&y| y > config.t_c).collect()
    };
    match estimate_density(&tail, config.bandwidth) {
        Ok(d) => Ok(Some(d)),
        Err(Error::EmptyTail) => {
            log::warn!("no training labels above t_c = {}; tail re-weighting skipped", config.t_c);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn tail_weights(config: &DgmConfig, density: Option<&LabelDensity>, y: &[f64], reweighted: &[bool]) -> Vec<f64> {
    let mut w = vec![1.0; y.len()];
    let Some(d) = density else {
        return w;
    };
    let rows: Vec<usize> = (0..y.len()).filter(|&i| reweighted[i]).collect();
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let tw = compute_weights(d, &ys, config.normalize_weights);
    for (&i, &v) in rows.iter().zip(&tw.weights) {
        w[i] = v;
    }
    w
}

/// Which rows of a training batch get a density weight.
fn reweighted_rows(variant: Variant, classes: &[u8], y_c: &[u8]) -> Vec<bool> {
    match variant {
        Variant::ReWeight => vec![true; classes.len()],
        Variant::ImReg => y_c.iter().map(|&c| c == 1).collect(),
        _ => classes.iter().map(|&c| c == 1).collect(),
    }
}

fn describe_batch(orders: &[&Order], y_hat: &[f64]) -> String {
    let shown: Vec<String> = orders
        .iter()
        .zip(y_hat)
        .filter(|(_, p)| !p.is_finite())
        .chain(orders.iter().zip(y_hat))
        .take(5)
        .map(|(o, p)| format!("{}(y={}, y_hat={p})", o.order_id, o.delivery_hours))
        .collect();
    format!("{} orders, e.g. {}", orders.len(), shown.join(" "))
}

/// Trains from a fresh seeded initialization.
pub fn train(config: &DgmConfig, data: &PreparedData) -> Result<TrainOutcome> {
    train_with_init(config, data, None)
}

/// Trains from `init` if given, otherwise from a seeded initialization.
/// Minibatches are reshuffled each epoch from a stream derived from the
/// seed; the parameters with the lowest validation MAE are retained.
pub fn train_with_init(config: &DgmConfig, data: &PreparedData, init: Option<ParamStore>) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if data.val.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let y_train = data.train_labels();
    let mut cfg = config.clone();
    if cfg.output_scale.is_none() {
        cfg.output_scale = Some(y_train.iter().sum::<f64>() / y_train.len() as f64);
    }
    let model = DgmModel::new(&cfg, data.dims);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = match init {
        Some(s) => {
            s.check_compatible(&model.init(&mut init_rng))?;
            s
        }
        None => model.init(&mut init_rng),
    };
    let density = fit_density(&cfg, &y_train)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = AdamState::new(cfg.lr);
    let y_c_all: Vec<u8> = y_train.iter().map(|&y| cfg.class_of(y)).collect();
    let y_val = labels(&data.val);

    let mut best = store.clone();
    let mut best_epoch = None;
    let mut best_mae = f64::INFINITY;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut perm: Vec<usize> = (0..y_train.len()).collect();
    for epoch in 1..=cfg.epochs {
        perm.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, rows) in perm.chunks(cfg.batch_size).enumerate() {
            let idx = data.train_idx.select(rows);
            let y: Vec<f64> = rows.iter().map(|&r| y_train[r]).collect();
            let y_c: Vec<u8> = rows.iter().map(|&r| y_c_all[r]).collect();
            let mut tape = Tape::new();
            let logits = model.classify(&mut tape, &store, &data.tensors, &idx);
            let classes = match (logits, cfg.routing_mode) {
                (Some(z), RoutingMode::Predicted) => argmax_classes(tape.value(z)),
                _ => y_c.clone(),
            };
            let rw = reweighted_rows(cfg.variant, &classes, &y_c);
            let plan = BatchPlan { tail_weights: tail_weights(&cfg, density.as_ref(), &y, &rw), classes };
            let e = model.embed(&mut tape, &store, &data.tensors, &idx, &plan);
            let y_hat = model.regress(&mut tape, &store, e);
            let loss = joint_loss(&mut tape, y_hat, &y, logits, &y_c, cfg.bce_weight);
            let value = tape.value(loss).item();
            if !value.is_finite() {
                let orders: Vec<&Order> = rows.iter().map(|&r| &data.train[r]).collect();
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: describe_batch(&orders, tape.value(y_hat).data()),
                });
            }
            let grads = tape.backward(loss);
            let names = store.absorb(&tape, &grads);
            adam.step(&mut store, &names)?;
            store.clear_grads();
            loss_sum += value * rows.len() as f64;
        }
        let pred = predict_orders(&model, &store, &data.tensors, &data.val_idx);
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / y_train.len() as f64,
            val_mae: metrics::mae(&y_val, &pred),
            val_mape: metrics::mape(&y_val, &pred),
            val_ew: metrics::ew(&y_val, &pred, metrics::DEFAULT_EW_P),
        };
        log::info!(
            "{} seed {} epoch {epoch}: train loss {:.4}, val MAE {:.4}",
            cfg.variant,
            cfg.seed,
            entry.train_loss,
            entry.val_mae
        );
        if entry.val_mae < best_mae {
            best_mae = entry.val_mae;
            best = store.clone();
            best_epoch = Some(epoch);
        }
        log.push(entry);
    }
    Ok(TrainOutcome { model, best, best_epoch, log, density })
}

/// Evaluation-mode predictions in hours, in the order of `idx`.
pub fn predict_orders(model: &DgmModel, store: &ParamStore, gt: &GraphTensors, idx: &OrderIndex) -> Vec<f64> {
    let rows: Vec<usize> = (0..idx.len()).collect();
    rows.chunks(PREDICT_CHUNK).flat_map(|c| model.predict(store, gt, &idx.select(c))).collect()
}

/// Predicts `orders` and reports metrics per shot region of the training
/// label distribution.
pub fn evaluate(
    model: &DgmModel,
    store: &ParamStore,
    data: &PreparedData,
    orders: &[Order],
    shots: &ShotSpec,
    tag: &str,
) -> Result<EvalReport> {
    if orders.is_empty() {
        return Err(Error::Data("nothing to evaluate: the evaluation split is empty".into()));
    }
    let pred = predict_orders(model, store, &data.tensors, &data.index(orders));
    let y = labels(orders);
    let shot = shot_labels(&data.train_labels(), &y, shots);
    Ok(metrics::report(&y, &pred, &shot, tag))
}
