use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MTRNetConfig;
use crate::error::{Error, Result};
use crate::harness::seeds::substream;
use crate::nn::{dense_forward, elu, unit_normalize_rows, AdamState, DenseLayer, ELU_ALPHA, NORM_EPS};
use crate::Matrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTRNetModel {
    pub format_version: u32,
    pub config: MTRNetConfig,
    pub input_dim: usize,
    /// Representation layers; the output rows are unit-normalized.
    pub phi: Vec<DenseLayer<f64>>,
    /// Control head; last layer has one output.
    pub h0: Vec<DenseLayer<f64>>,
    pub h1: Vec<DenseLayer<f64>>,
    /// Treatment discriminator (single logit).
    pub k_t: DenseLayer<f64>,
    /// Observedness discriminator (single logit).
    pub k_r: DenseLayer<f64>,
    /// Optimizer state for `phi`, `h0`, `h1` in that order.
    pub adam: AdamState<f64>,
    pub adam_k_t: AdamState<f64>,
    pub adam_k_r: AdamState<f64>,
    /// RBF bandwidth fixed on the first batch when trained with an MMD penalty.
    #[serde(default)]
    pub mmd_bandwidth: Option<f64>,
}

fn param_lengths(layers: &[DenseLayer<f64>]) -> impl Iterator<Item = usize> + '_ {
    layers.iter().flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
}

fn stack(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<DenseLayer<f64>> {
    dims.windows(2).map(|w| DenseLayer::glorot(w[0], w[1], rng)).collect()
}

pub(crate) fn run_stack(layers: &[DenseLayer<f64>], x: &Matrix, activate_last: bool) -> Result<Matrix> {
    let mut h = x.clone();
    for (k, layer) in layers.iter().enumerate() {
        h = dense_forward(layer, &h)?;
        if activate_last || k + 1 < layers.len() {
            h = elu(&h, ELU_ALPHA);
        }
    }
    Ok(h)
}

impl MTRNetModel {
    /// `Φ: d → rep → … → rep`, heads `rep → hyp → … → hyp → 1`,
    /// discriminators `rep → 1`.
    pub fn init(config: &MTRNetConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(substream(config.seed, "init"));
        let rep = config.rep_layer_size;
        let mut phi_dims = vec![input_dim];
        phi_dims.extend(std::iter::repeat_n(rep, config.num_rep_layers));
        let mut h_dims = vec![rep];
        h_dims.extend(std::iter::repeat_n(config.hyp_layer_size, config.num_hyp_layers));
        h_dims.push(1);
        let phi = stack(&phi_dims, &mut rng);
        let h0 = stack(&h_dims, &mut rng);
        let h1 = stack(&h_dims, &mut rng);

        let mut disc_rng = ChaCha8Rng::seed_from_u64(substream(config.seed, "discriminators"));
        let k_t = DenseLayer::glorot(rep, 1, &mut disc_rng);
        let k_r = DenseLayer::glorot(rep, 1, &mut disc_rng);

        let main: Vec<usize> = param_lengths(&phi)
            .chain(param_lengths(&h0))
            .chain(param_lengths(&h1))
            .collect();
        let kt_len: Vec<usize> = param_lengths(std::slice::from_ref(&k_t)).collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            input_dim,
            adam: AdamState::new(&main),
            adam_k_t: AdamState::new(&kt_len),
            adam_k_r: AdamState::new(&kt_len),
            phi,
            h0,
            h1,
            k_t,
            k_r,
            mmd_bandwidth: None,
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::invalid(format!(
                "model expects {} covariates, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Unit-normalized representation in evaluation mode.
    pub fn representation(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let h = run_stack(&self.phi, x, true)?;
        Ok(unit_normalize_rows(&h, NORM_EPS))
    }

    /// `h_t(Φ(x))` in evaluation mode.
    pub fn predict_outcome(&self, x: &Matrix, t: bool) -> Result<Vec<f64>> {
        let z = self.representation(x)?;
        let head = if t { &self.h1 } else { &self.h0 };
        Ok(run_stack(head, &z, false)?.into_vec())
    }

    /// `h_1(Φ(x)) − h_0(Φ(x))`.
    pub fn predict_cate(&self, x: &Matrix) -> Result<Vec<f64>> {
        let z = self.representation(x)?;
        let y1 = run_stack(&self.h1, &z, false)?;
        let y0 = run_stack(&self.h0, &z, false)?;
        Ok(y1.as_slice().iter().zip(y0.as_slice()).map(|(a, b)| a - b).collect())
    }

    /// Logits of the two discriminators, evaluation mode.
    pub fn discriminator_logits(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.representation(x)?;
        Ok((
            dense_forward(&self.k_t, &z)?.into_vec(),
            dense_forward(&self.k_r, &z)?.into_vec(),
        ))
    }

    pub fn all_finite(&self) -> bool {
        let ok = |l: &DenseLayer<f64>| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite());
        self.phi.iter().chain(&self.h0).chain(&self.h1).all(ok) && ok(&self.k_t) && ok(&self.k_r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        model.config.validate()?;
        for layer in model.phi.iter().chain(&model.h0).chain(&model.h1) {
            layer.validate()?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(layers: &[DenseLayer<f64>]) -> Vec<(usize, usize)> {
        layers.iter().map(|l| (l.input_dim(), l.output_dim())).collect()
    }

    #[test]
    fn architecture_counts() {
        let cfg = MTRNetConfig::default();
        let m = MTRNetModel::init(&cfg, 25).unwrap();
        assert_eq!(dims(&m.phi), vec![(25, 50), (50, 50), (50, 50)]);
        assert_eq!(dims(&m.h0), vec![(50, 50), (50, 50), (50, 50), (50, 1)]);
        assert_eq!(dims(&m.h1), dims(&m.h0));
        assert_eq!((m.k_t.input_dim(), m.k_t.output_dim()), (50, 1));
        assert_eq!((m.k_r.input_dim(), m.k_r.output_dim()), (50, 1));
    }

    #[test]
    fn init_is_deterministic_and_allows_width_one() {
        let cfg = MTRNetConfig {
            rep_layer_size: 1,
            seed: 4,
            ..Default::default()
        };
        let a = MTRNetModel::init(&cfg, 3).unwrap();
        assert_eq!(a, MTRNetModel::init(&cfg, 3).unwrap());
        let x = Matrix::from_rows(&[[0.1, -0.2, 0.3]]).unwrap();
        let z = a.representation(&x).unwrap();
        assert!((z[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_heads_give_zero_cate() {
        let mut m = MTRNetModel::init(&MTRNetConfig::default(), 4).unwrap();
        m.h1 = m.h0.clone();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 0.5, 2.0]]).unwrap();
        assert_eq!(m.predict_cate(&x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn cate_is_difference_of_outcomes() {
        let m = MTRNetModel::init(&MTRNetConfig::default(), 2).unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.2], [2.0, 0.7]]).unwrap();
        let y1 = m.predict_outcome(&x, true).unwrap();
        let y0 = m.predict_outcome(&x, false).unwrap();
        let cate = m.predict_cate(&x).unwrap();
        for i in 0..2 {
            assert_eq!(cate[i], y1[i] - y0[i]);
        }
        assert_eq!(cate, m.predict_cate(&x).unwrap());
    }

    #[test]
    fn hand_built_single_unit_model() {
        let cfg = MTRNetConfig {
            rep_layer_size: 1,
            hyp_layer_size: 1,
            num_rep_layers: 1,
            num_hyp_layers: 1,
            ..Default::default()
        };
        let mut m = MTRNetModel::init(&cfg, 1).unwrap();
        let layer = |w: f64, b: f64| DenseLayer::new(Matrix::from_rows(&[[w]]).unwrap(), vec![b]).unwrap();
        m.phi = vec![layer(2.0, 0.0)];
        // Φ(x) = elu(2x)/|elu(2x)| = 1 for x > 0
        m.h0 = vec![layer(1.0, 0.0), layer(3.0, 0.5)];
        m.h1 = vec![layer(-1.0, 0.0), layer(2.0, 1.0)];
        let x = Matrix::from_rows(&[[0.7]]).unwrap();
        // h0: elu(1) = 1 → 3·1 + 0.5 = 3.5; h1: elu(−1) = e^{-1} − 1 → 2(e^{-1} − 1) + 1
        let h1 = 2.0 * ((-1.0f64).exp() - 1.0) + 1.0;
        assert!((m.predict_outcome(&x, false).unwrap()[0] - 3.5).abs() < 1e-15);
        assert!((m.predict_cate(&x).unwrap()[0] - (h1 - 3.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_heads_give_bias() {
        let mut m = MTRNetModel::init(&MTRNetConfig::default(), 3).unwrap();
        for l in m.h0.iter_mut() {
            *l = DenseLayer::zeros(l.input_dim(), l.output_dim());
        }
        m.h0.last_mut().unwrap().bias[0] = 1.25;
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, 0.0, -9.0]]).unwrap();
        assert_eq!(m.predict_outcome(&x, false).unwrap(), vec![1.25, 1.25]);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let m = MTRNetModel::init(&MTRNetConfig::default(), 5).unwrap();
        let back = MTRNetModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        bad["format_version"] = 99.into();
        assert!(MTRNetModel::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let m = MTRNetModel::init(&MTRNetConfig::default(), 5).unwrap();
        assert!(m.predict_cate(&Matrix::zeros(2, 4)).is_err());
    }
}
