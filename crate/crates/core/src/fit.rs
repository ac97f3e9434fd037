//! Recovering a coarse warp field that explains an (input, cartoon) pair:
//! minimize the mean L1 distance between the cartoon and the input warped by
//! the upsampled field, using Adam through the warping module.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{ensure_same_dims, Error, Result};
use crate::field::{CoarseField, UpsamplePlan, WarpField, DEFAULT_GRID};
use crate::image::ImageBuffer;
use crate::losses::{recon_loss, smooth_loss};
use crate::optim::{AdamConfig, AdamState};
use crate::warp::{warp, warp_field_backward};

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub iterations: usize,
    /// Adam step size, in pixels.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the cosine smoothness term on the dense field. Off by default.
    pub smooth_weight: f64,
    pub grid: (usize, usize),
    /// Starting field; zero when absent.
    pub init: Option<CoarseField>,
    /// Stop once the best residual improves by less than this over `window` iterations.
    pub tolerance: f64,
    pub window: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            smooth_weight: 0.0,
            grid: (DEFAULT_GRID, DEFAULT_GRID),
            init: None,
            tolerance: 1e-6,
            window: 20,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "iterations must be at least 1".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.smooth_weight.is_finite() && self.smooth_weight >= 0.0) {
            return Err(Error::InvalidArgument(
                "smoothness weight must be non-negative".into(),
            ));
        }
        if let Some(init) = &self.init {
            if init.dims() != self.grid {
                return Err(Error::InvalidArgument(
                    "initial field does not match the configured grid".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Best field seen during optimization.
    pub field: CoarseField,
    /// Mean-L1 residual at every evaluated iterate.
    pub history: Vec<f64>,
    pub best_residual: f64,
}

impl FitOutcome {
    pub fn initial_residual(&self) -> f64 {
        self.history[0]
    }
}

pub fn fit_field(x_in: &ImageBuffer, x_toon: &ImageBuffer, cfg: &FitConfig) -> Result<FitOutcome> {
    ensure_same_dims("fit_field", x_in.dims(), x_toon.dims())?;
    cfg.validate()?;
    let plan = UpsamplePlan::new(cfg.grid, x_in.dims())?;
    let mut field = match &cfg.init {
        Some(f) => f.clone(),
        None => CoarseField::zeros(cfg.grid.0, cfg.grid.1)?,
    };
    let mut adam = AdamState::new(
        field.data().len(),
        AdamConfig {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            ..Default::default()
        },
    )?;

    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best_history = Vec::with_capacity(cfg.iterations);
    let mut best = (f64::INFINITY, field.clone());

    for it in 0..cfg.iterations {
        let dense = plan.apply(&field)?;
        let predicted = warp(x_in, &dense)?;
        let (residual, d_pred) = recon_loss(&predicted, x_toon)?;
        if !residual.is_finite() {
            return Err(Error::NumericFailure { iteration: it });
        }
        history.push(residual);
        if residual < best.0 {
            best = (residual, field.clone());
        }
        best_history.push(best.0);
        if best.0 == 0.0 {
            break;
        }
        if it >= cfg.window && best_history[it - cfg.window] - best.0 < cfg.tolerance {
            break;
        }

        let mut d_dense = warp_field_backward(x_in, &dense, &d_pred)?;
        if cfg.smooth_weight > 0.0 {
            let (_, g) = smooth_loss(&dense);
            for (a, b) in d_dense.data_mut().iter_mut().zip(g.data()) {
                *a += cfg.smooth_weight * b;
            }
        }
        let grad = plan.backward(&d_dense)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFailure { iteration: it });
        }
        adam.step(field.data_mut(), &grad)?;
        if !field.is_finite() {
            return Err(Error::NumericFailure { iteration: it });
        }
    }

    Ok(FitOutcome {
        field: best.1,
        history,
        best_residual: best.0,
    })
}

/// Fits every pair independently. Results keep the input order.
pub fn fit_dataset(
    pairs: &[(ImageBuffer, ImageBuffer)],
    cfg: &FitConfig,
) -> Result<Vec<FitOutcome>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to fit".into()));
    }
    pairs
        .par_iter()
        .enumerate()
        .map(|(index, (x_in, x_toon))| {
            fit_field(x_in, x_toon, cfg).map_err(|e| Error::Pair {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Writes `iteration,residual` rows.
pub fn write_residual_csv(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("iteration,residual\n");
    for (i, r) in history.iter().enumerate() {
        out.push_str(&format!("{i},{r}\n"));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::upsample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn texture(seed: u64, n: usize) -> ImageBuffer {
        // smooth-ish texture: sum of a few random sinusoids per channel
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<[f64; 4]> = (0..12)
            .map(|_| {
                [
                    rng.gen_range(-0.4..0.4),
                    rng.gen_range(-0.4..0.4),
                    rng.gen_range(0.0..6.3),
                    rng.gen_range(0.02..0.06),
                ]
            })
            .collect();
        ImageBuffer::from_fn(n, n, |i, j| {
            let mut px = [0.5; 3];
            for (k, w) in waves.iter().enumerate() {
                px[k % 3] += w[3] * (w[0] * j as f64 + w[1] * i as f64 + w[2]).sin();
            }
            px
        })
        .unwrap()
    }

    #[test]
    fn identical_pair_stays_at_zero() {
        let x = texture(1, 48);
        let cfg = FitConfig {
            grid: (6, 6),
            iterations: 50,
            ..Default::default()
        };
        let out = fit_field(&x, &x, &cfg).unwrap();
        assert_eq!(out.initial_residual(), 0.0);
        assert!(out.field.max_abs() < 1e-6);
    }

    #[test]
    fn recovers_a_small_synthetic_warp() {
        let x = texture(2, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = CoarseField::from_fn(4, 4, |_, _| {
            (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))
        })
        .unwrap();
        let toon = warp(&x, &upsample(&truth, 48, 48).unwrap()).unwrap();
        let cfg = FitConfig {
            grid: (4, 4),
            iterations: 300,
            ..Default::default()
        };
        let out = fit_field(&x, &toon, &cfg).unwrap();
        assert!(out.best_residual <= 0.5 * out.initial_residual());
        assert!(out.best_residual < 0.01, "{}", out.best_residual);
        assert!(out.best_residual <= *out.history.last().unwrap());
    }

    #[test]
    fn deterministic() {
        let x = texture(4, 40);
        let toon = texture(5, 40);
        let cfg = FitConfig {
            grid: (5, 5),
            iterations: 40,
            ..Default::default()
        };
        let a = fit_field(&x, &toon, &cfg).unwrap();
        let b = fit_field(&x, &toon, &cfg).unwrap();
        assert_eq!(a.field, b.field);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn dataset_matches_single_fits() {
        let x = texture(6, 40);
        let toon = texture(7, 40);
        let cfg = FitConfig {
            grid: (4, 4),
            iterations: 30,
            ..Default::default()
        };
        let single = fit_field(&x, &toon, &cfg).unwrap();
        let many = fit_dataset(&[(x.clone(), toon.clone()), (x, toon)], &cfg).unwrap();
        assert_eq!(many.len(), 2);
        assert_eq!(many[0].field, single.field);
        assert_eq!(many[1].field, single.field);
    }

    #[test]
    fn errors() {
        let x = texture(8, 32);
        let y = texture(8, 33);
        assert_eq!(
            fit_field(&x, &y, &FitConfig::default()).unwrap_err().code(),
            "invalid-argument"
        );
        let bad = FitConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(fit_field(&x, &x, &bad).is_err());
        assert!(fit_dataset(&[], &FitConfig::default()).is_err());
        let err =
            fit_dataset(&[(x.clone(), x.clone()), (x, y)], &FitConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with("pair 1"), "{err}");
    }

    #[test]
    fn residual_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_residual_csv(&p, &[0.5, 0.25]).unwrap();
        assert_eq!(
            std::fs::read_to_string(p).unwrap(),
            "iteration,residual\n0,0.5\n1,0.25\n"
        );
    }
}
