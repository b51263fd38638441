use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, Experiment, RunConfig, TrainOnly};
use crate::dynamics::{antisymmetric_part, jacobian, relax, RelaxationConfig};
use crate::error::{Error, Result};
use crate::gradient::{Gradient, Parameterized};
use crate::learners::{aep_update_with, dyadic_nudged, ep_update, vf_update, NudgeConfig};
use crate::models::fixed_ratio::GAMMA;
use crate::models::hopfield::J_IN;
use crate::models::{
    predict, r_jac_metric, r_str_metric, FeedforwardParams, FixedRatioNet, FixedRatioParams,
    HopfieldParams, Mask, QuadraticCost,
};

pub const N_OUTPUTS: usize = 10;

/// Any of the trainable parameterizations, hidden units first, outputs last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    Hopfield(HopfieldParams),
    FixedRatio(FixedRatioNet),
}

/// Result of processing one training sample.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub grads: Gradient,
    /// Cost at the free equilibrium.
    pub cost: f64,
    pub r_jac: Option<f64>,
    pub correct: bool,
}

/// splitmix64 finalizer, used to derive independent per-sample seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for `(seed, stream, index)`.
pub fn sample_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ stream) ^ index))
}

/// Initial recurrent state, `U(-1, 1)` per unit.
pub fn initial_state(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let normal = Normal::new(0.0, std).expect("finite std");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

impl Model {
    /// Builds the initial model of an experiment. Parameters are drawn from
    /// `N(0, 1/N)` with `N` the number of dynamical (hidden plus output)
    /// neurons, so that `‖J_dyn‖_F ≈ √N` as for the fixed-ratio scale.
    pub fn init(cfg: &RunConfig, n_in: usize) -> Result<Self> {
        let h = cfg.hidden_size;
        let n = h + N_OUTPUTS;
        let std = (1.0 / n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed));
        let hidden_rows: Vec<bool> = (0..n).map(|i| i < h).collect();
        let embed_in = |rng: &mut ChaCha8Rng| {
            let mut j = DMatrix::zeros(n, n_in);
            j.rows_mut(0, h).copy_from(&gaussian(h, n_in, std, rng));
            j
        };
        Ok(match cfg.experiment {
            Experiment::SymmetricInit | Experiment::Custom => {
                let j_in = embed_in(&mut rng);
                let j_dyn = gaussian(n, n, std, &mut rng);
                let mut p = HopfieldParams::new(j_in, j_dyn, Mask::layered(h, N_OUTPUTS), hidden_rows)?;
                if cfg.experiment == Experiment::SymmetricInit {
                    p.symmetrize()?;
                }
                Model::Hopfield(p)
            }
            Experiment::Feedforward => {
                let j_in = gaussian(h, n_in, std, &mut rng);
                let w = gaussian(N_OUTPUTS, h, std, &mut rng);
                Model::Hopfield(FeedforwardParams::new(j_in, w)?.to_hopfield())
            }
            Experiment::FixedRatio => {
                let j_in = embed_in(&mut rng);
                let p = FixedRatioParams::init(n, std, cfg.r_str, rng.random())?;
                Model::FixedRatio(FixedRatioNet::new(j_in, p, Mask::layered(h, N_OUTPUTS), hidden_rows)?)
            }
        })
    }

    pub fn n_dyn(&self) -> usize {
        match self {
            Model::Hopfield(p) => p.n_dyn(),
            Model::FixedRatio(p) => p.n_dyn(),
        }
    }

    pub fn n_in(&self) -> usize {
        match self {
            Model::Hopfield(p) => p.n_in(),
            Model::FixedRatio(p) => p.n_in(),
        }
    }

    pub fn output_start(&self) -> usize {
        self.n_dyn() - N_OUTPUTS
    }

    pub fn j_dyn(&self) -> Result<DMatrix<f64>> {
        match self {
            Model::Hopfield(p) => Ok(p.j_dyn.clone()),
            Model::FixedRatio(p) => p.j_dyn(),
        }
    }

    pub fn r_str(&self) -> Result<f64> {
        r_str_metric(&self.j_dyn()?)
    }

    /// Free equilibrium for an input.
    pub fn free_state(
        &self,
        input: &DVector<f64>,
        x_init: &DVector<f64>,
        cfg: &RelaxationConfig,
    ) -> Result<DVector<f64>> {
        Ok(match self {
            Model::Hopfield(p) => relax(&p.bind(input)?, x_init, cfg, None)?.state,
            Model::FixedRatio(p) => relax(&p.bind(input)?, x_init, cfg, None)?.state,
        })
    }

    pub fn classify(
        &self,
        input: &DVector<f64>,
        x_init: &DVector<f64>,
        cfg: &RelaxationConfig,
    ) -> Result<usize> {
        let x = self.free_state(input, x_init, cfg)?;
        Ok(predict(&x, self.output_start(), N_OUTPUTS))
    }

    /// Free phase plus the gradient estimate of `method` for one sample.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_step(
        &self,
        method: Algorithm,
        input: &DVector<f64>,
        label: usize,
        x_init: &DVector<f64>,
        free_cfg: &RelaxationConfig,
        nudge: &NudgeConfig,
    ) -> Result<SampleOutcome> {
        let cost = QuadraticCost::signed_one_hot(label, N_OUTPUTS, self.output_start());
        match self {
            Model::Hopfield(p) => {
                let sys = p.bind(input)?;
                let x0 = relax(&sys, x_init, free_cfg, None)?.state;
                let grads = if method == Algorithm::Ep {
                    ep_update(&sys, &cost, nudge, &x0)?.grads
                } else {
                    estimate(&sys, method, &cost, nudge, &x0)?
                };
                outcome(&sys, grads, &cost, &x0)
            }
            Model::FixedRatio(p) => {
                let sys = p.bind(input)?;
                let x0 = relax(&sys, x_init, free_cfg, None)?.state;
                if method == Algorithm::Ep {
                    return Err(Error::Config("EP is not defined for fixed-ratio nets".into()));
                }
                let grads = estimate(&sys, method, &cost, nudge, &x0)?;
                outcome(&sys, grads, &cost, &x0)
            }
        }
    }

    /// Zero gradients laid out like this model's parameters.
    pub fn gradient_layout(&self) -> Gradient {
        match self {
            Model::Hopfield(p) => p.gradient_layout(),
            Model::FixedRatio(p) => p.gradient_layout(),
        }
    }

    /// `θ += rate * g`, with `lr_input_hidden` on `J_in` and
    /// `lr_hidden_output` on everything else.
    pub fn apply_update(&mut self, grads: &Gradient, cfg: &RunConfig) -> Result<()> {
        let grads = match cfg.train_only {
            TrainOnly::All => grads.clone(),
            TrainOnly::InputOnly => grads.select(&[J_IN, GAMMA]),
        };
        match self {
            Model::Hopfield(p) => p.apply_update(&grads, cfg.lr_input_hidden, cfg.lr_hidden_output),
            Model::FixedRatio(p) => {
                p.apply_update(&grads, cfg.lr_input_hidden, cfg.lr_hidden_output)?
            }
        }
        Ok(())
    }
}

fn estimate<P: Parameterized + ?Sized>(
    sys: &P,
    method: Algorithm,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<Gradient> {
    Ok(match method {
        Algorithm::Vf => vf_update(sys, cost, nudge, x0)?.grads,
        Algorithm::Aep => {
            let a = antisymmetric_part(&jacobian(sys, x0));
            aep_update_with(sys, cost, nudge, x0, &a)?.grads
        }
        Algorithm::DyadicEp => dyadic_nudged(sys, cost, nudge, x0)?.grads,
        Algorithm::Ep => unreachable!("EP dispatched by the caller"),
    })
}

fn outcome<P: Parameterized + ?Sized>(
    sys: &P,
    grads: Gradient,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
) -> Result<SampleOutcome> {
    Ok(SampleOutcome {
        grads,
        cost: cost.value(x0),
        r_jac: r_jac_metric(&jacobian(sys, x0)).ok(),
        correct: predict(x0, cost.output_start, cost.n_outputs())
            == predict(&cost.target, 0, cost.n_outputs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(experiment: Experiment) -> RunConfig {
        RunConfig {
            hidden_size: 6,
            ..RunConfig::defaults(experiment)
        }
    }

    #[test]
    fn initial_models_have_the_right_structure() {
        let sym = Model::init(&small(Experiment::SymmetricInit), 12).unwrap();
        assert_eq!(sym.r_str().unwrap(), 0.0);
        assert_eq!((sym.n_dyn(), sym.n_in(), sym.output_start()), (16, 12, 6));
        let ff = Model::init(&small(Experiment::Feedforward), 12).unwrap();
        assert!(ff.r_str().unwrap() > 0.7);
        let fr = Model::init(&small(Experiment::FixedRatio), 12).unwrap();
        assert!((fr.r_str().unwrap() - 0.875).abs() < 1e-10);
        assert_eq!(sym, Model::init(&small(Experiment::SymmetricInit), 12).unwrap());
    }

    #[test]
    fn input_only_leaves_recurrent_weights() {
        let cfg = RunConfig {
            train_only: TrainOnly::InputOnly,
            ..small(Experiment::FixedRatio)
        };
        let mut m = Model::init(&cfg, 5).unwrap();
        let before = m.clone();
        let mut g = m.gradient_layout();
        for name in g.names().iter().map(|s| s.to_string()).collect::<Vec<_>>() {
            g.get_mut(&name).unwrap().fill(1.0);
        }
        m.apply_update(&g, &cfg).unwrap();
        let (Model::FixedRatio(a), Model::FixedRatio(b)) = (&m, &before) else {
            unreachable!()
        };
        assert_eq!(a.dyn_params.theta_s, b.dyn_params.theta_s);
        assert_eq!(a.dyn_params.theta_a, b.dyn_params.theta_a);
        assert_ne!(a.dyn_params.gamma, b.dyn_params.gamma);
        assert_ne!(a.j_in, b.j_in);
    }

    #[test]
    fn per_sample_seeds_differ() {
        let a: f64 = sample_rng(1, 0, 0).random();
        let b: f64 = sample_rng(1, 0, 1).random();
        let c: f64 = sample_rng(1, 1, 0).random();
        assert!(a != b && a != c && b != c);
        let a2: f64 = sample_rng(1, 0, 0).random();
        assert_eq!(a, a2);
    }
}
