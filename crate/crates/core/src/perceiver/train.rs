use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    augment_pair, forward_values, perceiver_backward, perceiver_forward, AugmentConfig,
    TinyPerceiver,
};
use crate::dataset::PairedSample;
use crate::error::{ensure_same_dims, Error, Result};
use crate::field::{upsample, CoarseField, DenseField, UpsamplePlan, WarpField};
use crate::image::ImageBuffer;
#[cfg(doc)]
use crate::losses::total_loss;
use crate::losses::{mean_l1, recon_loss, smooth_loss, LossReport, LossWeights};
use crate::optim::{AdamConfig, AdamState};
use crate::warp::{warp, warp_field_backward};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam settings; `decay` is applied once per epoch.
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            adam: AdamConfig {
                lr: 1e-3,
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
                decay: 0.95,
            },
            weights: LossWeights::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's samples, measured before each update.
    pub report: LossReport,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TinyPerceiver,
    pub history: Vec<EpochRecord>,
}

/// Loss of the full chain `image -> perceiver -> upsample -> warp -> loss`.
///
/// The whole chain runs in double precision, so the result can differ from
/// [`total_loss`] on the rounded `f32` field in the last few bits.
pub fn chain_loss(
    model: &TinyPerceiver,
    sample: &PairedSample,
    weights: &LossWeights,
) -> Result<LossReport> {
    Ok(chain_eval(model, sample, weights, false)?.0)
}

/// [`chain_loss`] together with its gradient on every model parameter.
pub fn chain_loss_and_grad(
    model: &TinyPerceiver,
    sample: &PairedSample,
    weights: &LossWeights,
) -> Result<(LossReport, Vec<f64>)> {
    let (report, grad) = chain_eval(model, sample, weights, true)?;
    Ok((report, grad.expect("gradient requested")))
}

fn chain_eval(
    model: &TinyPerceiver,
    sample: &PairedSample,
    weights: &LossWeights,
    want_grad: bool,
) -> Result<(LossReport, Option<Vec<f64>>)> {
    weights.validate()?;
    let target_field = ground_truth(sample)?;
    let (coarse, cache) = forward_values(model, &sample.x_in)?;
    let grid = (model.grid(), model.grid());
    ensure_same_dims("chain_loss fields", grid, target_field.dims())?;
    let plan = UpsamplePlan::new(grid, sample.dims())?;
    let dense = plan.apply_values(&coarse)?;
    let predicted = warp(&sample.x_in, &dense)?;

    let (recon, d_image) = recon_loss(&predicted, &sample.x_toon)?;
    let n = coarse.len();
    let (warp_l1, d_coarse) = mean_l1(
        coarse.iter().copied(),
        target_field.data().iter().map(|&v| v as f64),
        n,
    );
    let (reg, d_reg) = smooth_loss(&dense);
    let report = LossReport::weighted(recon, warp_l1, reg, weights);
    if !want_grad {
        return Ok((report, None));
    }

    let upstream = ImageBuffer::from_vec(
        d_image.height(),
        d_image.width(),
        d_image.data().iter().map(|g| g * weights.lambda1).collect(),
    )?;
    let mut d_dense = warp_field_backward(&sample.x_in, &dense, &upstream)?;
    for (a, b) in d_dense.data_mut().iter_mut().zip(d_reg.data()) {
        *a += weights.lambda3 * b;
    }
    let mut d_values = plan.backward(&d_dense)?;
    for (a, b) in d_values.iter_mut().zip(&d_coarse) {
        *a += weights.lambda2 * b;
    }
    let d_params = perceiver_backward(model, &cache, &d_values)?;
    Ok((report, Some(d_params)))
}

fn ground_truth(sample: &PairedSample) -> Result<&CoarseField> {
    sample.field.as_ref().ok_or_else(|| {
        Error::InvalidDataset(format!("sample `{}` has no ground-truth field", sample.id))
    })
}

/// Trains `model` with Adam on the weighted loss. Samples are shuffled each
/// epoch with the run seed; gradients are averaged over each batch and
/// accumulated in sample order, so a fixed seed reproduces the run exactly.
pub fn train(
    model: &TinyPerceiver,
    dataset: &[PairedSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    cfg.weights.validate()?;
    for s in dataset {
        let f = ground_truth(s)?;
        if f.dims() != (model.grid(), model.grid()) {
            return Err(Error::InvalidDataset(format!(
                "sample `{}` field is {:?}, model predicts {}x{}",
                s.id,
                f.dims(),
                model.grid(),
                model.grid()
            )));
        }
    }

    let mut model = model.clone();
    let mut adam = AdamState::new(model.num_params(), cfg.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut reports = Vec::with_capacity(dataset.len());
        for batch in order.chunks(cfg.batch_size) {
            let augmented: Vec<PairedSample> = batch
                .iter()
                .map(|&k| augment_pair(&dataset[k], &mut rng, &cfg.augment))
                .collect();
            let results: Vec<(LossReport, Vec<f64>)> = augmented
                .par_iter()
                .map(|s| chain_loss_and_grad(&model, s, &cfg.weights))
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; model.num_params()];
            for (report, g) in &results {
                reports.push(*report);
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            grad.iter_mut().for_each(|g| *g *= scale);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NumericFailure { iteration: epoch });
            }
            adam.step(model.params_mut(), &grad)?;
        }
        history.push(EpochRecord {
            epoch,
            report: LossReport::mean(&reports),
            lr: adam.lr,
        });
        adam.end_epoch();
    }
    Ok(TrainOutcome { model, history })
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub field: CoarseField,
    pub dense: DenseField,
    pub cartoon: ImageBuffer,
}

/// Predicts a field, scales it by `alpha`, upsamples to the image size and
/// warps the image.
pub fn infer(model: &TinyPerceiver, image: &ImageBuffer, alpha: f64) -> Result<Inference> {
    let (field, _) = perceiver_forward(model, image)?;
    let (h, w) = image.dims();
    let dense = upsample(&field.scaled(alpha)?, h, w)?;
    let cartoon = warp(image, &dense)?;
    Ok(Inference {
        field,
        dense,
        cartoon,
    })
}

/// Writes `epoch,recon,warp,reg,total,lr` rows.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,recon,warp,reg,total,lr\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.report.recon, r.report.warp, r.report.reg, r.report.total, r.lr
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
