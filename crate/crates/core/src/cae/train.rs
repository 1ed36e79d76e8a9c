use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{init_weights, CaeArchitecture, CaeError, CaeWeights};
use crate::image::{GroundTruthImage, RawFrame};
use crate::nn::{adam_step, mse_loss, AdamConfig, AdamState};
use crate::rng::{stream_rng, stream_seed};
use crate::tensor::Tensor;

/// A (measurement, object) training example.
pub type TrainingPair = (RawFrame, GroundTruthImage);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Coefficient of the squared-magnitude penalty on convolution kernels.
    pub weight_decay: f64,
    /// Evaluate on the held-out set every this many epochs (and after the last one).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CaeError> {
        let bad = |m: &str| Err(CaeError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be nonnegative");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning rate must be nonnegative");
        }
        if self.eval_every < 1 {
            return bad("evaluation cadence must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn train_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.train_mse).collect()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// `epoch,train_mse,test_mse` rows. Wall time is kept out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,test_mse\n");
        for r in &self.epochs {
            let test = r.test_mse.map(|v| format!("{v:.9e}")).unwrap_or_default();
            s.push_str(&format!("{},{:.9e},{}\n", r.epoch, r.train_mse, test));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,seconds\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{:.6}\n", r.epoch, r.seconds));
        }
        s
    }
}

struct Prepared {
    input: Tensor<f32>,
    target: Tensor<f32>,
}

fn prepare(pairs: &[TrainingPair], size: usize) -> Result<Vec<Prepared>, CaeError> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, (frame, truth))| {
            let t = truth.image();
            if frame.height() != size || frame.width() != size || t.height() != size || t.width() != size {
                return Err(CaeError::PairShape {
                    index: i,
                    frame: (frame.height(), frame.width()),
                    truth: (t.height(), t.width()),
                });
            }
            Ok(Prepared {
                input: frame.to_tensor(),
                target: t.to_tensor(),
            })
        })
        .collect()
}

type LayerGrads = Vec<(Tensor<f32>, Tensor<f32>)>;

fn sample_grads(weights: &CaeWeights<f32>, sample: &Prepared) -> Result<(f64, LayerGrads), CaeError> {
    let trace = weights.forward_trace(&sample.input)?;
    let (loss, grad) = mse_loss(trace.output(), &sample.target)?;
    let grads = weights.backward(&trace, &grad)?;
    Ok((loss as f64, grads))
}

/// Mean per-image MSE of the network over `pairs`.
pub fn evaluate_mse(weights: &CaeWeights<f32>, pairs: &[TrainingPair]) -> Result<f64, CaeError> {
    let prepared = prepare(pairs, weights.architecture().input_size)?;
    let losses = prepared
        .par_iter()
        .map(|s| {
            let out = weights.forward(&s.input)?;
            Ok(mse_loss(&out, &s.target)?.0 as f64)
        })
        .collect::<Result<Vec<f64>, CaeError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Fits the network to `train` by mini-batch Adam on mean MSE plus
/// `weight_decay * sum(kernel^2)`. `eval` (may be empty) is scored every
/// `eval_every` epochs. Results depend only on the inputs, `cfg` and `seed`.
pub fn train(
    train: &[TrainingPair],
    eval: &[TrainingPair],
    arch: &CaeArchitecture,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(CaeWeights<f32>, TrainingHistory), CaeError> {
    train_with_progress(train, eval, arch, cfg, seed, |_| {})
}

pub fn train_with_progress(
    train: &[TrainingPair],
    eval: &[TrainingPair],
    arch: &CaeArchitecture,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(CaeWeights<f32>, TrainingHistory), CaeError> {
    cfg.validate()?;
    arch.validate()?;
    if train.is_empty() {
        return Err(CaeError::EmptyTrainingSet);
    }
    let samples = prepare(train, arch.input_size)?;
    let mut weights = init_weights::<f32>(arch, stream_seed(seed, 0));
    let mut adam = AdamState::<f32>::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &weights.param_layout(),
    );
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainingHistory::default();
    let wd = cfg.weight_decay as f32;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut rng = stream_rng(stream_seed(seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;

        for (batch_index, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample = batch
                .par_iter()
                .map(|&i| sample_grads(&weights, &samples[i]))
                .collect::<Result<Vec<_>, CaeError>>()?;
            // Summation in sample order keeps results independent of the worker count.
            let mut iter = per_sample.into_iter();
            let (first_loss, mut acc) = iter.next().expect("non-empty batch");
            let mut batch_loss = first_loss;
            for (loss, grads) in iter {
                batch_loss += loss;
                for ((ak, ab), (gk, gb)) in acc.iter_mut().zip(&grads) {
                    ak.add_assign(gk)?;
                    ab.add_assign(gb)?;
                }
            }
            if !batch_loss.is_finite() {
                return Err(CaeError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f32;
            for ((gk, gb), layer) in acc.iter_mut().zip(weights.layers()) {
                for (g, &w) in gk.data_mut().iter_mut().zip(layer.kernels.data()) {
                    *g = *g * scale + 2.0 * wd * w;
                }
                gb.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
            let grad_refs: Vec<&Tensor<f32>> = acc.iter().flat_map(|(k, b)| [k, b]).collect();
            let mut params = weights.params_mut();
            adam_step(&mut params, &grad_refs, &mut adam).map_err(|e| CaeError::Optimizer {
                epoch,
                batch: batch_index,
                source: e,
            })?;
        }

        let train_mse = loss_sum / samples.len() as f64;
        let test_mse = if !eval.is_empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            Some(evaluate_mse(&weights, eval)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            train_mse,
            test_mse,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok((weights, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cae::arch::{DecoderStage, EncoderStage};
    use crate::image::Image;

    fn tiny_arch() -> CaeArchitecture {
        CaeArchitecture::custom(
            8,
            vec![
                EncoderStage { channels: 4, pool: true },
                EncoderStage { channels: 4, pool: true },
            ],
            vec![
                DecoderStage { target_size: 4, channels: 4 },
                DecoderStage { target_size: 8, channels: 4 },
            ],
        )
        .unwrap()
    }

    fn pair(seed: usize) -> TrainingPair {
        let truth = Image::from_fn(8, 8, |r, c| if (r + c + seed).is_multiple_of(3) { 0.9 } else { 0.1 });
        let bits = truth.data().iter().map(|&v| (v > 0.5) as u8).collect();
        (
            RawFrame::new(8, 8, bits).unwrap(),
            GroundTruthImage::new(truth).unwrap(),
        )
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let arch = tiny_arch();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let (w, _) = train(&[pair(0), pair(1), pair(2)], &[], &arch, &cfg, 9).unwrap();
        assert_eq!(w, init_weights::<f32>(&arch, stream_seed(9, 0)));
    }

    #[test]
    fn identical_runs_identical_histories() {
        let arch = tiny_arch();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let data = [pair(0), pair(1), pair(2)];
        let (w1, h1) = train(&data, &data[..1], &arch, &cfg, 4).unwrap();
        let (w2, h2) = train(&data, &data[..1], &arch, &cfg, 4).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(h1.to_csv(), h2.to_csv());
        assert_eq!(h1.epochs.iter().map(|r| r.epoch).collect::<Vec<_>>(), [1, 2, 3]);
        assert!(h1.epochs.iter().all(|r| r.test_mse.is_some()));
    }

    #[test]
    fn rejects_bad_inputs() {
        let arch = tiny_arch();
        let cfg = TrainConfig::default();
        assert!(matches!(train(&[], &[], &arch, &cfg, 0), Err(CaeError::EmptyTrainingSet)));
        let bad = TrainConfig { epochs: 0, ..cfg.clone() };
        assert!(matches!(train(&[pair(0)], &[], &arch, &bad, 0), Err(CaeError::InvalidConfig(_))));
        let big = (
            RawFrame::new(9, 9, vec![0; 81]).unwrap(),
            GroundTruthImage::new(Image::zeros(9, 9)).unwrap(),
        );
        assert!(matches!(
            train(&[big], &[], &arch, &cfg, 0),
            Err(CaeError::PairShape { index: 0, .. })
        ));
    }

    #[test]
    fn eval_cadence() {
        let arch = tiny_arch();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            eval_every: 2,
            ..TrainConfig::default()
        };
        let (_, h) = train(&[pair(0)], &[pair(1)], &arch, &cfg, 1).unwrap();
        let evaluated: Vec<usize> = h.epochs.iter().filter(|r| r.test_mse.is_some()).map(|r| r.epoch).collect();
        assert_eq!(evaluated, [2, 4, 5]);
        let csv = h.to_csv();
        assert!(csv.starts_with("epoch,train_mse,test_mse\n1,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }
}
