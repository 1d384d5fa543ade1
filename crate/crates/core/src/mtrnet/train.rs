//! Training loop. One tape is recorded per step with total loss
//!
//! `L_out + λ‖W_h‖² + L_T(k_t(GRL_α Φ)) + L_R(k_r(GRL_β Φ))`
//!
//! so the representation receives `∇L_out − α∇L_T − β∇L_R` while each
//! discriminator descends on its own loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_weights, sample_batch, MTRNetConfig, MTRNetModel, TrainingBatch};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::harness::seeds::substream;
use crate::nn::ops::dropout_mask_with_rng;
use crate::nn::{adam_step, DenseLayer, Gradients, Tape, Var, ELU_ALPHA, NORM_EPS};
use crate::Matrix;

/// What balances the representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// Treatment and observedness discriminators behind gradient reversal.
    Adversarial,
    /// `alpha · MMD²` between arm-wise representations of each batch.
    Mmd,
    /// Outcome loss only.
    None,
}

/// Loss components on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Losses {
    pub outcome: f64,
    pub l2: f64,
    pub treatment: f64,
    pub observed: f64,
    pub mmd: f64,
}

impl Losses {
    /// Objective minimized by the representation and heads.
    pub fn objective(&self, config: &MTRNetConfig, reg: Regularizer) -> f64 {
        let base = self.outcome + self.l2;
        match reg {
            Regularizer::Adversarial => base - config.alpha * self.treatment - config.beta * self.observed,
            Regularizer::Mmd => base + config.alpha * self.mmd,
            Regularizer::None => base,
        }
    }

    fn is_finite(&self) -> bool {
        [self.outcome, self.l2, self.treatment, self.observed, self.mmd]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub losses: Losses,
    pub objective: f64,
}

struct LayerVars {
    w: Var,
    b: Var,
}

struct Graph {
    tape: Tape<f64>,
    main: Vec<LayerVars>,
    k_t: Option<LayerVars>,
    k_r: Option<LayerVars>,
    total: Var,
    losses: Losses,
}

fn push_layer(tape: &mut Tape<f64>, layer: &DenseLayer<f64>) -> LayerVars {
    LayerVars {
        w: tape.leaf(layer.weights.clone()),
        b: tape.leaf(Matrix::row_vector(layer.bias.clone())),
    }
}

fn push_stack(
    tape: &mut Tape<f64>,
    layers: &[DenseLayer<f64>],
    input: Var,
    activate_last: bool,
    dropout: &mut Option<(&mut ChaCha8Rng, f64)>,
    vars: &mut Vec<LayerVars>,
) -> Result<Var> {
    let mut h = input;
    for (k, layer) in layers.iter().enumerate() {
        let lv = push_layer(tape, layer);
        h = tape.dense(h, lv.w, lv.b)?;
        vars.push(lv);
        if activate_last || k + 1 < layers.len() {
            h = tape.elu(h, ELU_ALPHA);
            if let Some((rng, rate)) = dropout {
                if *rate > 0.0 {
                    let mask = dropout_mask_with_rng(tape.value(h).shape(), *rate, &mut **rng)?;
                    h = tape.mask(h, mask)?;
                }
            }
        }
    }
    Ok(h)
}

fn build_graph(
    model: &MTRNetModel,
    batch: &TrainingBatch,
    mut dropout: Option<(&mut ChaCha8Rng, f64)>,
    reg: Regularizer,
) -> Result<Graph> {
    if batch.x.cols() != model.input_dim {
        return Err(Error::invalid(format!(
            "batch has {} covariates, model expects {}",
            batch.x.cols(),
            model.input_dim
        )));
    }
    let b = batch.len();
    let ow = compute_weights(&batch.t, &batch.r)?;
    let cfg = &model.config;

    let mut tape = Tape::new();
    let mut main = Vec::new();
    let x = tape.leaf(batch.x.clone());
    let h = push_stack(&mut tape, &model.phi, x, true, &mut dropout, &mut main)?;
    let rep = tape.unit_normalize_rows(h, NORM_EPS);
    let n_phi = main.len();
    let out0 = push_stack(&mut tape, &model.h0, rep, false, &mut dropout, &mut main)?;
    let out1 = push_stack(&mut tape, &model.h1, rep, false, &mut dropout, &mut main)?;

    // per-row outcome weights routed to the head of the row's arm
    let (mut w0, mut w1) = (vec![0.0; b], vec![0.0; b]);
    let mut k = 0;
    for i in 0..b {
        if let (true, Some(t)) = (batch.r[i], batch.t[i]) {
            let w = ow.w[k] * batch.row_weights[i];
            k += 1;
            if t {
                w1[i] = w;
            } else {
                w0[i] = w;
            }
        }
    }
    let n_o = ow.n_o as f64;
    let l0 = tape.weighted_squared_loss(out0, batch.y.clone(), w0, n_o)?;
    let l1 = tape.weighted_squared_loss(out1, batch.y.clone(), w1, n_o)?;
    let l_out = tape.add(l0, l1)?;
    let mut losses = Losses {
        outcome: tape.scalar(l_out),
        ..Default::default()
    };
    let mut total = l_out;

    if cfg.l2_lambda > 0.0 {
        let mut acc: Option<Var> = None;
        for lv in &main[n_phi..] {
            let s = tape.sum_squares(lv.w);
            acc = Some(match acc {
                Some(a) => tape.add(a, s)?,
                None => s,
            });
        }
        if let Some(a) = acc {
            let l2 = tape.scale(a, cfg.l2_lambda);
            losses.l2 = tape.scalar(l2);
            total = tape.add(total, l2)?;
        }
    }

    let (mut k_t, mut k_r) = (None, None);
    match reg {
        Regularizer::Adversarial => {
            let observed: Vec<f64> = batch.r.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
            let t_labels: Vec<f64> = batch.t.iter().map(|t| if *t == Some(true) { 1.0 } else { 0.0 }).collect();

            let zt = tape.grad_reverse(rep, cfg.alpha);
            let kt = push_layer(&mut tape, &model.k_t);
            let logit_t = tape.dense(zt, kt.w, kt.b)?;
            let lt = tape.weighted_bce_loss(logit_t, t_labels, observed.clone(), n_o)?;

            let zr = tape.grad_reverse(rep, cfg.beta);
            let kr = push_layer(&mut tape, &model.k_r);
            let logit_r = tape.dense(zr, kr.w, kr.b)?;
            let lr = tape.weighted_bce_loss(logit_r, observed, vec![1.0; b], b as f64)?;

            losses.treatment = tape.scalar(lt);
            losses.observed = tape.scalar(lr);
            total = tape.add(total, lt)?;
            total = tape.add(total, lr)?;
            k_t = Some(kt);
            k_r = Some(kr);
        }
        Regularizer::Mmd if cfg.alpha > 0.0 => {
            let bw = model
                .mmd_bandwidth
                .ok_or_else(|| Error::invalid("mmd bandwidth not initialized"))?;
            let (mut a, mut c) = (Vec::new(), Vec::new());
            for i in 0..b {
                match (batch.r[i], batch.t[i]) {
                    (true, Some(false)) => a.push(i),
                    (true, Some(true)) => c.push(i),
                    _ => {}
                }
            }
            let mmd = tape.mmd_rbf(rep, a, c, bw)?;
            losses.mmd = tape.scalar(mmd);
            let pen = tape.scale(mmd, cfg.alpha);
            total = tape.add(total, pen)?;
        }
        Regularizer::Mmd | Regularizer::None => {}
    }

    Ok(Graph {
        tape,
        main,
        k_t,
        k_r,
        total,
        losses,
    })
}

fn layers_mut(model: &mut MTRNetModel) -> impl Iterator<Item = &mut DenseLayer<f64>> {
    model.phi.iter_mut().chain(model.h0.iter_mut()).chain(model.h1.iter_mut())
}

fn apply_adam(
    layers: Vec<&mut DenseLayer<f64>>,
    vars: &[LayerVars],
    grads: &Gradients<f64>,
    state: &mut crate::nn::AdamState<f64>,
    lr: f64,
) -> Result<()> {
    let g: Vec<Matrix> = vars.iter().flat_map(|lv| [grads.wrt(lv.w), grads.wrt(lv.b)]).collect();
    let g_refs: Vec<&[f64]> = g.iter().map(|m| m.as_slice()).collect();
    let mut params: Vec<&mut [f64]> = Vec::with_capacity(g.len());
    for layer in layers {
        let DenseLayer { weights, bias } = layer;
        params.push(weights.as_mut_slice());
        params.push(bias.as_mut_slice());
    }
    adam_step(&mut params, &g_refs, state, lr)
}

/// Median pairwise Euclidean distance between rows (1 when degenerate).
pub(crate) fn median_pairwise_distance(z: &Matrix) -> f64 {
    let mut d = Vec::new();
    for i in 0..z.rows() {
        for j in i + 1..z.rows() {
            let s: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

impl MTRNetModel {
    /// Loss components on a batch; `dropout_seed = None` evaluates without dropout.
    pub fn forward_losses(&self, batch: &TrainingBatch, dropout_seed: Option<u64>) -> Result<Losses> {
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let dropout = rng.as_mut().map(|r| (r, self.config.dropout_rate));
        let reg = if self.mmd_bandwidth.is_some() {
            Regularizer::Mmd
        } else {
            Regularizer::Adversarial
        };
        Ok(build_graph(self, batch, dropout, reg)?.losses)
    }
}

/// Owns a model and the random streams of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MTRNetModel,
    pub regularizer: Regularizer,
    batch_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(model: MTRNetModel, regularizer: Regularizer) -> Self {
        let seed = model.config.seed;
        Self {
            model,
            regularizer,
            batch_rng: ChaCha8Rng::seed_from_u64(substream(seed, "batches")),
            dropout_rng: ChaCha8Rng::seed_from_u64(substream(seed, "dropout")),
            iteration: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn sample_batch(&mut self, data: &Dataset, row_weights: Option<&[f64]>) -> Result<TrainingBatch> {
        sample_batch(data, row_weights, self.model.config.batch_size, &mut self.batch_rng)
    }

    /// One update of every parameter group on `batch`.
    pub fn step(&mut self, batch: &TrainingBatch) -> Result<LossRecord> {
        let reg = self.regularizer;
        if reg == Regularizer::Mmd && self.model.mmd_bandwidth.is_none() {
            let z = self.model.representation(&batch.x)?;
            self.model.mmd_bandwidth = Some(median_pairwise_distance(&z));
        }
        let rate = self.model.config.dropout_rate;
        let graph = build_graph(&self.model, batch, Some((&mut self.dropout_rng, rate)), reg)?;
        let iteration = self.iteration;
        if !graph.losses.is_finite() {
            return Err(Error::TrainingDiverged { iteration });
        }
        let grads = graph.tape.backward(graph.total)?;
        let lr = self.model.config.learning_rate;

        let model = &mut self.model;
        let mut adam = std::mem::replace(&mut model.adam, crate::nn::AdamState::new(&[]));
        let res = apply_adam(layers_mut(model).collect(), &graph.main, &grads, &mut adam, lr);
        model.adam = adam;
        res?;
        if let (Some(kt), Some(kr)) = (&graph.k_t, &graph.k_r) {
            apply_adam(vec![&mut model.k_t], std::slice::from_ref(kt), &grads, &mut model.adam_k_t, lr)?;
            apply_adam(vec![&mut model.k_r], std::slice::from_ref(kr), &grads, &mut model.adam_k_r, lr)?;
        }
        if !model.all_finite() {
            return Err(Error::TrainingDiverged { iteration });
        }
        self.iteration += 1;
        Ok(LossRecord {
            iteration,
            losses: graph.losses,
            objective: graph.losses.objective(&model.config, reg),
        })
    }

    /// `iterations` steps on freshly sampled batches.
    pub fn run(&mut self, data: &Dataset, row_weights: Option<&[f64]>, iterations: usize) -> Result<Vec<LossRecord>> {
        let mut history = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let batch = self.sample_batch(data, row_weights)?;
            history.push(self.step(&batch)?);
        }
        Ok(history)
    }
}

/// Trains with an explicit regularizer and optional per-row outcome weights.
pub fn train_with(
    data: &Dataset,
    row_weights: Option<&[f64]>,
    config: &MTRNetConfig,
    regularizer: Regularizer,
) -> Result<(MTRNetModel, Vec<LossRecord>)> {
    if let Some(w) = row_weights {
        if w.len() != data.n() {
            return Err(Error::invalid(format!(
                "{} row weights for {} rows",
                w.len(),
                data.n()
            )));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("row weights must be finite and nonnegative"));
        }
    }
    compute_weights(&data.t, &data.r)?;
    let model = MTRNetModel::init(config, data.d())?;
    let mut trainer = Trainer::new(model, regularizer);
    let history = trainer.run(data, row_weights, config.iterations)?;
    Ok((trainer.model, history))
}

/// MTRNet training with both adversaries.
pub fn train(data: &Dataset, config: &MTRNetConfig) -> Result<(MTRNetModel, Vec<LossRecord>)> {
    train_with(data, None, config, Regularizer::Adversarial)
}
