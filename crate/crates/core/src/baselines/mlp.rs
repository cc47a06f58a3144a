use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    check_rate, dropout_mask, glorot_uniform, Matrix, ParamId, ParamSet, ParamTensor, Tape, Var,
};
use crate::train::TapeModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub l2_coeff: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            dropout_rate: 0.05,
            l2_coeff: 0.001,
        }
    }
}

/// One flattened feature row and its target.
#[derive(Clone, Debug)]
pub struct FlatInput {
    pub x: Matrix,
    pub target: f64,
}

impl FlatInput {
    pub fn new(x: &[f64], target: f64) -> Self {
        Self {
            x: Matrix::row_vector(x),
            target,
        }
    }
}

/// Feed-forward regressor: ReLU hidden layers, linear scalar output. With
/// no hidden layers it is exactly `w₀ + x·w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    pub input_dim: usize,
    params: ParamSet,
}

impl Mlp {
    pub fn new(config: MlpConfig, input_dim: usize, seed: u64) -> Result<Self> {
        check_rate(config.dropout_rate)?;
        if config.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut fan_in = input_dim;
        for (l, &width) in config.hidden.iter().chain(std::iter::once(&1)).enumerate() {
            params.push(ParamTensor::new(
                format!("layer.{l}.weight"),
                glorot_uniform(fan_in, width, &mut rng),
                true,
            ));
            params.push(ParamTensor::new(
                format!("layer.{l}.bias"),
                Matrix::zeros(1, width),
                false,
            ));
            fan_in = width;
        }
        Ok(Self {
            config,
            input_dim,
            params,
        })
    }

    /// Restores gradient buffers after loading from an artifact.
    pub fn reset_gradients(&mut self) {
        self.params.reset_gradients();
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.predict_value(&FlatInput::new(x, f64::NAN))
    }
}

impl TapeModel for Mlp {
    type Input = FlatInput;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn l2_coeff(&self) -> f64 {
        self.config.l2_coeff
    }

    fn record(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        input: &FlatInput,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if input.x.cols() != self.input_dim {
            return Err(Error::Dimension {
                op: "mlp input",
                left: input.x.shape(),
                right: (1, self.input_dim),
            });
        }
        let mut h = tape.constant(input.x.clone());
        let layers = self.config.hidden.len() + 1;
        for l in 0..layers {
            let lin = tape.matmul(h, bound[2 * l])?;
            h = tape.add(lin, bound[2 * l + 1])?;
            if l + 1 < layers {
                h = tape.relu(h);
                if let Some(rng) = rng.as_deref_mut() {
                    if self.config.dropout_rate > 0.0 {
                        let (r, c) = tape.value(h).shape();
                        let mask = tape.constant(dropout_mask(r, c, self.config.dropout_rate, rng)?);
                        h = tape.mul(h, mask)?;
                    }
                }
            }
        }
        Ok(h)
    }

    fn target(input: &FlatInput) -> f64 {
        input.target
    }

    fn output_bias(&self) -> Option<ParamId> {
        Some(ParamId(self.params.len() - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_hidden_layers_is_linear() {
        let mlp = Mlp::new(
            MlpConfig {
                hidden: vec![],
                dropout_rate: 0.0,
                l2_coeff: 0.0,
            },
            3,
            5,
        )
        .unwrap();
        let w = mlp.params.get(ParamId(0)).value.clone();
        let b = mlp.params.get(ParamId(1)).value.item();
        let x = [0.2, -0.4, 1.5];
        let linear = b + (0..3).map(|i| x[i] * w.get(i, 0)).sum::<f64>();
        let mut tape = Tape::new();
        let bound = crate::train::bind_all(&mut tape, &mlp.params);
        let out = mlp.record(&mut tape, &bound, &FlatInput::new(&x, 0.0), None).unwrap();
        assert!((tape.value(out).item() - linear).abs() < 1e-15);
    }

    #[test]
    fn wrong_width_rejected() {
        let mlp = Mlp::new(MlpConfig::default(), 4, 1).unwrap();
        assert!(mlp.predict(&[1.0, 2.0]).is_err());
    }
}
