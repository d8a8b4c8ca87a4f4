//! Mixing function, loss terms and the alternating critic / autoencoder
//! update.
//!
//! One step on a batch of `m` inputs:
//!
//! 1. encode the batch to `z`, pair item `i` with item `m - 1 - i`;
//! 2. draw one `alpha ~ U[0, 0.5]` per item and mix
//!    `z_alpha[i] = (1 - alpha) z[i] + alpha z[m - 1 - i]`;
//! 3. decode `z` and `z_alpha`;
//! 4. the critic regresses `alpha` on mixed reconstructions and `0` on the
//!    blend `gamma x + (1 - gamma) x_hat`;
//! 5. the autoencoder minimizes reconstruction error, `lambda` times the
//!    squared critic output on mixes, and (MCDC) the error between each
//!    decoded mix and its nearer input.
//!
//! All gradients are taken at the pre-step parameters; the critic update is
//! applied first, then the autoencoder update. Neither update touches the
//! other network's parameters.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{item_means, item_means_backward, ModelParams};
use crate::nn::{mse_loss, Gradients, NetworkAdam, Real, Tensor};
use crate::rng::SeededRng;

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Reconstruction only.
    Baseline,
    /// Reconstruction plus adversarial mixing regularizer.
    Acai,
    /// ACAI plus the mixing-consistency term.
    Mcdc,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Acai => "acai",
            Variant::Mcdc => "mcdc",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "acai" => Ok(Variant::Acai),
            "mcdc" => Ok(Variant::Mcdc),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaRule {
    /// One `alpha ~ U[0, 0.5]` per batch item.
    UniformHalf,
}

impl fmt::Display for AlphaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("uniform_half")
    }
}

impl FromStr for AlphaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_half" => Ok(AlphaRule::UniformHalf),
            other => Err(Error::invalid(format!("unknown alpha rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Weight of the adversarial term.
    pub lambda: f64,
    /// Input share of the critic's blend target.
    pub gamma: f64,
    pub alpha_rule: AlphaRule,
    pub batch_size: usize,
    pub epochs: usize,
    /// Updates applied to each sampled batch.
    pub inner_steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Weight of the mixing-consistency term (1 in the MCDC objective).
    /// Only read for `Variant::Mcdc`.
    pub mix_weight: f64,
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
            alpha_rule: AlphaRule::UniformHalf,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 1,
            inner_steps: 1,
            lr: DEFAULT_LR,
            seed: 0,
            mix_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.inner_steps == 0 {
            return Err(Error::invalid("batch_size and inner_steps must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(self.mix_weight >= 0.0 && self.mix_weight.is_finite()) {
            return Err(Error::invalid("mix_weight must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub recon: f64,
    pub adversarial: f64,
    pub mix_consistency: f64,
    pub total_autoencoder: f64,
    pub discriminator: f64,
}

impl LossBreakdown {
    fn add(&mut self, o: &Self) {
        self.recon += o.recon;
        self.adversarial += o.adversarial;
        self.mix_consistency += o.mix_consistency;
        self.total_autoencoder += o.total_autoencoder;
        self.discriminator += o.discriminator;
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            recon: self.recon * s,
            adversarial: self.adversarial * s,
            mix_consistency: self.mix_consistency * s,
            total_autoencoder: self.total_autoencoder * s,
            discriminator: self.discriminator * s,
        }
    }
}

/// Item `i` of a batch of `m` is paired with item `m - 1 - i`.
pub fn pair_by_reversal(m: usize) -> Vec<(usize, usize)> {
    (0..m).map(|i| (i, m - 1 - i)).collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// `(1 - alpha) z_i + alpha z_j`.
pub fn mix_latents<T: Real>(z_i: &Tensor<T>, z_j: &Tensor<T>, alpha: f64) -> Result<Tensor<T>> {
    check_alpha(alpha)?;
    let a = T::from_f64_lossy(alpha);
    let b = T::one() - a;
    z_i.zip_map(z_j, |u, v| b * u + a * v)
}

/// Row-wise mix of a latent batch with its reversed copy, one coefficient
/// per row.
pub fn mix_with_reversed<T: Real>(z: &Tensor<T>, alphas: &[f64]) -> Result<Tensor<T>> {
    let m = z.batch();
    if alphas.len() != m {
        return Err(Error::shape(format!("{} alphas for a batch of {m}", alphas.len())));
    }
    let mut out = z.clone();
    for ((i, j), &alpha) in pair_by_reversal(m).into_iter().zip(alphas) {
        check_alpha(alpha)?;
        let a = T::from_f64_lossy(alpha);
        let b = T::one() - a;
        let (zi, zj) = (z.item(i), z.item(j));
        for ((o, &u), &v) in out.item_mut(i).iter_mut().zip(zi).zip(zj) {
            *o = b * u + a * v;
        }
    }
    Ok(out)
}

/// Index of the input a decoded mix should reproduce: `i` for
/// `alpha <= 0.5`, otherwise `j`.
pub fn mixing_target(i: usize, j: usize, alpha: f64) -> usize {
    if alpha <= 0.5 {
        i
    } else {
        j
    }
}

/// MSE between the target input and the decoded mix, with its gradient
/// w.r.t. the decoded mix.
pub fn mixing_consistency_loss<T: Real>(
    x_target: &Tensor<T>,
    xhat_alpha: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    mse_loss(xhat_alpha, x_target)
}

fn check_lengths(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b || a != c {
        return Err(Error::shape(format!("batch lengths differ: {a}, {b}, {c}")));
    }
    Ok(())
}

/// Critic loss: `mean((ahat_mixed - alpha)^2) + mean(ahat_blend^2)`.
pub fn discriminator_loss(ahat_mixed: &[f64], alpha: &[f64], ahat_blend: &[f64]) -> Result<f64> {
    check_lengths(ahat_mixed.len(), alpha.len(), ahat_blend.len())?;
    let m = ahat_mixed.len().max(1) as f64;
    let fit: f64 = ahat_mixed.iter().zip(alpha).map(|(p, a)| (p - a).powi(2)).sum();
    let blend: f64 = ahat_blend.iter().map(|p| p * p).sum();
    Ok(fit / m + blend / m)
}

/// Gradients of [`discriminator_loss`] w.r.t. both prediction vectors.
pub fn discriminator_loss_grad(
    ahat_mixed: &[f64],
    alpha: &[f64],
    ahat_blend: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(ahat_mixed.len(), alpha.len(), ahat_blend.len())?;
    let m = ahat_mixed.len().max(1) as f64;
    let g_mix = ahat_mixed.iter().zip(alpha).map(|(p, a)| 2.0 * (p - a) / m).collect();
    let g_blend = ahat_blend.iter().map(|p| 2.0 * p / m).collect();
    Ok((g_mix, g_blend))
}

/// Inputs to the autoencoder objective. The mixing fields may be `None`
/// for the baseline variant.
#[derive(Debug, Clone, Copy)]
pub struct AutoencoderLossInputs<'a, T: Real> {
    pub x: &'a Tensor<T>,
    pub xhat: &'a Tensor<T>,
    pub xhat_alpha: Option<&'a Tensor<T>>,
    pub alpha_hat_mixed: Option<&'a [f64]>,
    pub mix_target: Option<&'a Tensor<T>>,
}

/// Per-term gradients of the autoencoder objective w.r.t. the decoder
/// outputs and the critic predictions, already weighted.
struct AutoencoderLossGrads<T: Real> {
    xhat: Tensor<T>,
    xhat_alpha_mix: Option<Tensor<T>>,
    alpha_hat: Option<Vec<f64>>,
}

fn autoencoder_loss_impl<T: Real>(
    inp: &AutoencoderLossInputs<'_, T>,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, AutoencoderLossGrads<T>)> {
    let (recon, g_recon) = mse_loss(inp.xhat, inp.x)?;
    let recon = recon.as_f64();
    let mut out = LossBreakdown {
        recon,
        total_autoencoder: recon,
        ..Default::default()
    };
    let mut grads = AutoencoderLossGrads {
        xhat: g_recon,
        xhat_alpha_mix: None,
        alpha_hat: None,
    };
    if cfg.variant == Variant::Baseline {
        return Ok((out, grads));
    }
    let ahat = inp
        .alpha_hat_mixed
        .ok_or_else(|| Error::invalid(format!("{} needs critic predictions on mixes", cfg.variant)))?;
    let m = ahat.len().max(1) as f64;
    out.adversarial = ahat.iter().map(|a| a * a).sum::<f64>() / m;
    grads.alpha_hat = Some(ahat.iter().map(|a| cfg.lambda * 2.0 * a / m).collect());
    out.total_autoencoder = recon + cfg.lambda * out.adversarial;
    if cfg.variant == Variant::Mcdc {
        let (xa, target) = match (inp.xhat_alpha, inp.mix_target) {
            (Some(xa), Some(t)) => (xa, t),
            _ => {
                return Err(Error::invalid(
                    "mcdc needs decoded mixes and their targets",
                ))
            }
        };
        let (mix, g_mix) = mixing_consistency_loss(target, xa)?;
        out.mix_consistency = mix.as_f64();
        out.total_autoencoder += cfg.mix_weight * out.mix_consistency;
        grads.xhat_alpha_mix = Some(g_mix.scale(T::from_f64_lossy(cfg.mix_weight)));
    }
    Ok((out, grads))
}

/// Autoencoder objective with variant masking: baseline keeps only the
/// reconstruction term, acai adds `lambda * mean(ahat^2)`, mcdc adds the
/// mixing-consistency term as well. The critic loss is left at zero.
pub fn autoencoder_loss<T: Real>(
    inputs: &AutoencoderLossInputs<'_, T>,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    autoencoder_loss_impl(inputs, cfg).map(|(l, _)| l)
}

/// Encoder, decoder and critic with their Adam states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<T: Real = f32> {
    pub model: ModelParams<T>,
    pub encoder_opt: NetworkAdam<T>,
    pub decoder_opt: NetworkAdam<T>,
    pub discriminator_opt: NetworkAdam<T>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: ModelParams<T>, lr: f64) -> Self {
        Self {
            encoder_opt: NetworkAdam::new(&model.encoder, lr),
            decoder_opt: NetworkAdam::new(&model.decoder, lr),
            discriminator_opt: NetworkAdam::new(&model.discriminator, lr),
            model,
        }
    }
}

/// Losses and parameter gradients of one step, all taken at the same
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGradients<T: Real = f32> {
    pub losses: LossBreakdown,
    pub alphas: Vec<f64>,
    pub encoder: Gradients<T>,
    pub decoder: Gradients<T>,
    /// `None` for the baseline variant.
    pub discriminator: Option<Gradients<T>>,
}

fn draw_alphas(m: usize, rule: AlphaRule, rng: &mut SeededRng) -> Vec<f64> {
    match rule {
        AlphaRule::UniformHalf => (0..m).map(|_| rng.random_range(0.0..=0.5)).collect(),
    }
}

fn to_f64<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

fn from_f64<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64_lossy(x)).collect()
}

/// Losses and gradients for one batch without applying any update.
pub fn compute_step_gradients<T: Real>(
    model: &ModelParams<T>,
    batch: &Tensor<T>,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<StepGradients<T>> {
    let x = model.as_input(batch)?;
    let m = x.batch();
    if m == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let alphas = draw_alphas(m, cfg.alpha_rule, rng);

    let (z, enc_tape) = model.encoder.forward(&x)?;
    // The decoder emits tensors in the model input layout, like `x`.
    let (xhat, rec_tape) = model.decoder.forward(&z)?;

    if cfg.variant == Variant::Baseline {
        let inputs = AutoencoderLossInputs {
            x: &x,
            xhat: &xhat,
            xhat_alpha: None,
            alpha_hat_mixed: None,
            mix_target: None,
        };
        let (losses, g) = autoencoder_loss_impl(&inputs, cfg)?;
        let (dz, decoder) = model.decoder.backward(&rec_tape, &g.xhat, true)?;
        let (_, encoder) = model.encoder.backward(&enc_tape, &dz, true)?;
        return Ok(StepGradients {
            losses,
            alphas,
            encoder,
            decoder,
            discriminator: None,
        });
    }

    let z_alpha = mix_with_reversed(&z, &alphas)?;
    let (xhat_alpha, mix_tape) = model.decoder.forward(&z_alpha)?;

    // Critic forward on mixes and on input/reconstruction blends.
    let (d_mix_out, d_mix_tape) = model.discriminator.forward(&xhat_alpha)?;
    let gamma = T::from_f64_lossy(cfg.gamma);
    let blend = x.zip_map(&xhat, |a, b| gamma * a + (T::one() - gamma) * b)?;
    let (d_blend_out, d_blend_tape) = model.discriminator.forward(&blend)?;
    let ahat_mix = to_f64(&item_means(&d_mix_out));
    let ahat_blend = to_f64(&item_means(&d_blend_out));

    let disc_loss = discriminator_loss(&ahat_mix, &alphas, &ahat_blend)?;
    let (g_mix, g_blend) = discriminator_loss_grad(&ahat_mix, &alphas, &ahat_blend)?;
    let up_mix = item_means_backward(&from_f64::<T>(&g_mix), d_mix_out.shape());
    let up_blend = item_means_backward(&from_f64::<T>(&g_blend), d_blend_out.shape());
    let (_, mut disc_grads) = model.discriminator.backward(&d_mix_tape, &up_mix, true)?;
    let (_, blend_grads) = model.discriminator.backward(&d_blend_tape, &up_blend, true)?;
    disc_grads.add_assign(&blend_grads)?;

    let pairs = pair_by_reversal(m);
    let target_idx: Vec<usize> = pairs
        .iter()
        .zip(&alphas)
        .map(|(&(i, j), &a)| mixing_target(i, j, a))
        .collect();
    let mix_target = x.select(&target_idx);
    let inputs = AutoencoderLossInputs {
        x: &x,
        xhat: &xhat,
        xhat_alpha: Some(&xhat_alpha),
        alpha_hat_mixed: Some(&ahat_mix),
        mix_target: Some(&mix_target),
    };
    let (mut losses, g) = autoencoder_loss_impl(&inputs, cfg)?;
    losses.discriminator = disc_loss;

    // Adversarial term flows back through the (frozen) critic to the mixes.
    let g_ahat = g.alpha_hat.expect("non-baseline variants produce critic gradients");
    let up_adv = item_means_backward(&from_f64::<T>(&g_ahat), d_mix_out.shape());
    let (mut g_xa, _) = model.discriminator.backward(&d_mix_tape, &up_adv, false)?;
    if let Some(g_mix_term) = &g.xhat_alpha_mix {
        g_xa.add_assign(g_mix_term)?;
    }

    let (dz, mut decoder) = model.decoder.backward(&rec_tape, &g.xhat, true)?;
    let (dz_alpha, dec_mix) = model.decoder.backward(&mix_tape, &g_xa, true)?;
    decoder.add_assign(&dec_mix)?;

    let mut dz_total = dz;
    for ((i, j), &alpha) in pairs.into_iter().zip(&alphas) {
        let a = T::from_f64_lossy(alpha);
        let b = T::one() - a;
        let g_row: Vec<T> = dz_alpha.item(i).to_vec();
        for (o, &gv) in dz_total.item_mut(i).iter_mut().zip(&g_row) {
            *o = *o + b * gv;
        }
        for (o, &gv) in dz_total.item_mut(j).iter_mut().zip(&g_row) {
            *o = *o + a * gv;
        }
    }
    let (_, encoder) = model.encoder.backward(&enc_tape, &dz_total, true)?;

    Ok(StepGradients {
        losses,
        alphas,
        encoder,
        decoder,
        discriminator: Some(disc_grads),
    })
}

/// One full step: gradients at the current parameters, then the critic
/// update, then the autoencoder update. Returns the pre-update losses.
pub fn train_step<T: Real>(
    trainer: &mut Trainer<T>,
    batch: &Tensor<T>,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<LossBreakdown> {
    let grads = compute_step_gradients(&trainer.model, batch, cfg, rng)?;
    if let Some(dg) = &grads.discriminator {
        trainer
            .discriminator_opt
            .step(&mut trainer.model.discriminator, dg)?;
    }
    trainer.encoder_opt.step(&mut trainer.model.encoder, &grads.encoder)?;
    trainer.decoder_opt.step(&mut trainer.model.decoder, &grads.decoder)?;
    Ok(grads.losses)
}

/// Run `cfg.epochs` epochs over `dataset`, reshuffling every epoch. The
/// final batch of an epoch may be short. `on_epoch` receives the epoch
/// index and its mean losses. Returns one mean breakdown per epoch.
pub fn train<T: Real>(
    trainer: &mut Trainer<T>,
    dataset: &LabeledDataset<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<Vec<LossBreakdown>> {
    cfg.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let root = SeededRng::new(cfg.seed);
    let mut order_rng = root.split("order");
    let mut step_rng = root.split("alpha");
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut sum = LossBreakdown::default();
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = dataset.images.select(chunk);
            for _ in 0..cfg.inner_steps {
                let l = train_step(trainer, &batch, cfg, &mut step_rng)?;
                sum.add(&l);
                steps += 1;
            }
        }
        let mean = sum.scaled(1.0 / steps as f64);
        on_epoch(epoch, &mean);
        history.push(mean);
    }
    Ok(history)
}
