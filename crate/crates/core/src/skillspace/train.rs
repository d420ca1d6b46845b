use rand::Rng;

#[cfg(test)]
use super::model::head_to_gaussian;
use super::{phase_one_hot, Result, SkillError, SkillModel, SkillModelConfig, SkillWindow, WindowSampler};
use crate::env::DemoDataset;
use crate::numgrad::{adam_step, Adam, GaussianVar, Graph, Tensor, TensorArchive};
use crate::rng::{normal_vec, stream, RngState, SimRng, Stream};

/// Reconstruction targets live in pre-squash space; clamping keeps `atanh`
/// finite for saturated demonstration actions.
const ACTION_CLAMP: f64 = 0.999;

fn presquash(a: f64) -> f64 {
    a.clamp(-ACTION_CLAMP, ACTION_CLAMP).atanh()
}

/// Batch-mean loss terms. `total = reconstruction + beta_vae·latent_kl + prior_kl`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VaeLossReport {
    /// `Σ_k ‖a_k − â_k‖²` in pre-squash space.
    pub reconstruction: f64,
    /// `KL(q(z|window) ‖ N(0, I))`.
    pub latent_kl: f64,
    /// `KL(q(z|window) ‖ p(z|s_0))` with the posterior held fixed.
    pub prior_kl: f64,
    pub total: f64,
}

impl VaeLossReport {
    fn accumulate(&mut self, o: &VaeLossReport, w: f64) {
        self.reconstruction += w * o.reconstruction;
        self.latent_kl += w * o.latent_kl;
        self.prior_kl += w * o.prior_kl;
        self.total += w * o.total;
    }
}

/// Loss and gradients on `batch` with reparameterization noise drawn from
/// `rng`. Gradients are left in the three parameter sets (previous
/// gradients are cleared first).
pub fn vae_loss<R: Rng + ?Sized>(model: &mut SkillModel, batch: &[SkillWindow], beta_vae: f64, rng: &mut R) -> Result<VaeLossReport> {
    let noise = normal_vec(rng, batch.len() * model.latent_dim());
    vae_loss_with(model, batch, beta_vae, &noise, true)
}

/// [`vae_loss`] with explicit noise (`batch × latent`, row-major).
/// `include_prior = false` drops the prior term from the differentiated
/// objective while still reporting it; encoder gradients must not change.
pub fn vae_loss_with(model: &mut SkillModel, batch: &[SkillWindow], beta_vae: f64, noise: &[f64], include_prior: bool) -> Result<VaeLossReport> {
    if batch.is_empty() {
        return Err(SkillError::EmptyBatch);
    }
    let c = model.config.clone();
    let (n, h, l, sd, ad) = (batch.len(), c.horizon, c.latent_dim, c.state_dim, c.action_dim);
    if noise.len() != n * l {
        return Err(SkillError::Shape { what: "noise", expected: n * l, got: noise.len() });
    }
    let mut enc_in = Vec::with_capacity(n * c.encoder_input_dim());
    let mut step_in = Vec::with_capacity(n * h * (sd + h));
    let mut targets = Vec::with_capacity(n * h * ad);
    let mut first = Vec::with_capacity(n * sd);
    for w in batch {
        enc_in.extend(model.encoder_input(w)?);
        first.extend_from_slice(&w.states[0]);
        for k in 0..h {
            step_in.extend_from_slice(&w.states[k]);
            step_in.extend(phase_one_hot(k, h)?);
            targets.extend(w.actions[k].iter().map(|&a| presquash(a)));
        }
    }

    let mut g = Graph::new();
    let be = model.encoder.bind(&mut g);
    let bd = model.decoder.bind(&mut g);
    let bp = model.prior.bind(&mut g);

    let x = g.constant(Tensor::from_raw(n, c.encoder_input_dim(), enc_in));
    let head = model.encoder.forward_train(&mut g, &be, x)?;
    let q = GaussianVar::from_head(&mut g, head, l);
    let eps = g.constant(Tensor::from_raw(n, l, noise.to_vec()));
    let z = q.rsample(&mut g, eps);
    let rows: Vec<usize> = (0..n).flat_map(|b| std::iter::repeat(b).take(h)).collect();
    let z_rep = g.gather_rows(z, &rows);
    let sk = g.constant(Tensor::from_raw(n * h, sd + h, step_in));
    let din = g.concat_cols(&[sk, z_rep]);
    let recon_out = model.decoder.forward_train(&mut g, &bd, din)?;
    let tgt = g.constant(Tensor::from_raw(n * h, ad, targets));
    let diff = g.sub(recon_out, tgt);
    let sq = g.square(diff);
    let sse = g.sum(sq);
    let recon = g.scale(sse, 1.0 / n as f64);

    let unit = GaussianVar { mean: g.constant(Tensor::zeros(n, l)), std: g.constant(Tensor::filled(n, l, 1.0)) };
    let lat = q.kl(&mut g, &unit);
    let lat = g.mean(lat);

    let s0 = g.constant(Tensor::from_raw(n, sd, first));
    let ph = model.prior.forward_train(&mut g, &bp, s0)?;
    let p = GaussianVar::from_head(&mut g, ph, l);
    let q_fixed = GaussianVar { mean: g.detach(q.mean), std: g.detach(q.std) };
    let pk = q_fixed.kl(&mut g, &p);
    let pk = g.mean(pk);

    let lat_w = g.scale(lat, beta_vae);
    let vae = g.add(recon, lat_w);
    let objective = if include_prior { g.add(vae, pk) } else { vae };

    let report = VaeLossReport {
        reconstruction: g.value(recon).item(),
        latent_kl: g.value(lat).item(),
        prior_kl: g.value(pk).item(),
        total: g.value(recon).item() + beta_vae * g.value(lat).item() + g.value(pk).item(),
    };
    let grads = g.backward(objective)?;
    for (net, bound) in [(&mut model.encoder, &be), (&mut model.decoder, &bd), (&mut model.prior, &bp)] {
        net.params.zero_grad();
        net.params.accumulate(&grads, bound);
    }
    Ok(report)
}

/// Per-action-dimension squared error between `tanh(decode(s_k, k, μ_z))`
/// and the demonstrated actions, with `μ_z` the posterior mean and every
/// network in inference mode.
pub fn reconstruction_mse(model: &SkillModel, windows: &[SkillWindow]) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Err(SkillError::EmptyBatch);
    }
    let ad = model.config.action_dim;
    let mut acc = vec![0.0; ad];
    let mut count = 0usize;
    for w in windows {
        let z = model.encode(w)?.mean;
        for k in 0..model.horizon() {
            let mu = model.decode(&w.states[k], k, &z)?;
            for (d, (m, a)) in mu.iter().zip(&w.actions[k]).enumerate() {
                acc[d] += (m.tanh() - a).powi(2);
            }
            count += 1;
        }
    }
    Ok(acc.into_iter().map(|s| s / count as f64).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub model: SkillModelConfig,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta_vae: f64,
}

impl PretrainConfig {
    pub fn new(model: SkillModelConfig) -> Self {
        Self { model, epochs: 40, steps_per_epoch: 100, batch_size: 64, learning_rate: 1e-3, beta_vae: 1e-2 }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(SkillError::Config("steps_per_epoch and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.beta_vae >= 0.0) {
            return Err(SkillError::Config("learning_rate must be positive and beta_vae non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean over the epoch's steps.
    pub mean: VaeLossReport,
    /// `total` at every step.
    pub step_totals: Vec<f64>,
}

/// Resumable Stage-1 training state.
#[derive(Clone, Debug)]
pub struct Pretrainer {
    pub config: PretrainConfig,
    pub model: SkillModel,
    pub history: Vec<EpochReport>,
    sampler: WindowSampler,
    rng: SimRng,
}

impl Pretrainer {
    /// Networks are initialized from the `Init` stream; window draws and
    /// reparameterization noise come from the `Stage1` stream.
    pub fn new(config: PretrainConfig, data: &DemoDataset, seed: u64) -> Result<Self> {
        config.validate()?;
        let model = SkillModel::new(config.model.clone(), &mut stream(seed, Stream::Init))?;
        let sampler = WindowSampler::new(data, config.model.horizon)?;
        Ok(Self { config, model, history: Vec::new(), sampler, rng: stream(seed, Stream::Stage1) })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn run_epoch(&mut self, data: &DemoDataset) -> Result<EpochReport> {
        let epoch = self.history.len();
        let adam = Adam::with_lr(self.config.learning_rate);
        let steps = self.config.steps_per_epoch;
        let mut mean = VaeLossReport::default();
        let mut totals = Vec::with_capacity(steps);
        for step in 0..steps {
            let batch = self.sampler.sample(data, self.config.batch_size, &mut self.rng);
            let r = vae_loss(&mut self.model, &batch, self.config.beta_vae, &mut self.rng)?;
            if !r.total.is_finite() {
                return Err(SkillError::Divergence { epoch, step, detail: format!("{r:?}") });
            }
            for net in [&mut self.model.encoder, &mut self.model.decoder, &mut self.model.prior] {
                adam_step(&mut net.params, &adam).map_err(|e| SkillError::Divergence { epoch, step, detail: e.to_string() })?;
            }
            mean.accumulate(&r, 1.0 / steps as f64);
            totals.push(r.total);
        }
        let report = EpochReport { epoch, mean, step_totals: totals };
        self.history.push(report.clone());
        Ok(report)
    }

    /// Trains until `config.epochs` epochs are done, reporting each.
    pub fn run(&mut self, data: &DemoDataset, mut on_epoch: impl FnMut(&EpochReport)) -> Result<()> {
        while self.history.len() < self.config.epochs {
            let r = self.run_epoch(data)?;
            on_epoch(&r);
        }
        Ok(())
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut ar = TensorArchive::new();
        self.model.write_archive(&mut ar);
        let c = &self.config;
        ar.set_meta("pretrain.epochs", c.epochs);
        ar.set_meta("pretrain.steps_per_epoch", c.steps_per_epoch);
        ar.set_meta("pretrain.batch_size", c.batch_size);
        ar.set_meta("pretrain.learning_rate", c.learning_rate);
        ar.set_meta("pretrain.beta_vae", c.beta_vae);
        ar.set_meta("pretrain.rng", RngState::capture(&self.rng).encode());
        let done = self.history.len();
        if done > 0 {
            let means: Vec<f64> = self
                .history
                .iter()
                .flat_map(|e| [e.mean.reconstruction, e.mean.latent_kl, e.mean.prior_kl, e.mean.total])
                .collect();
            let steps: Vec<f64> = self.history.iter().flat_map(|e| e.step_totals.iter().copied()).collect();
            ar.insert("pretrain.history", Tensor::from_raw(done, 4, means));
            ar.insert("pretrain.steps", Tensor::from_raw(done, c.steps_per_epoch, steps));
        }
        ar.set_meta("pretrain.epochs_done", done);
        ar
    }

    pub fn from_archive(ar: &TensorArchive, data: &DemoDataset) -> Result<Self> {
        let model = SkillModel::read_archive(ar)?;
        let config = PretrainConfig {
            model: model.config.clone(),
            epochs: ar.meta_parse("pretrain.epochs")?,
            steps_per_epoch: ar.meta_parse("pretrain.steps_per_epoch")?,
            batch_size: ar.meta_parse("pretrain.batch_size")?,
            learning_rate: ar.meta_parse("pretrain.learning_rate")?,
            beta_vae: ar.meta_parse("pretrain.beta_vae")?,
        };
        config.validate()?;
        let rng = RngState::decode(ar.meta("pretrain.rng")?)
            .ok_or_else(|| SkillError::Checkpoint("bad rng state".into()))?
            .restore();
        let done: usize = ar.meta_parse("pretrain.epochs_done")?;
        let mut history = Vec::with_capacity(done);
        if done > 0 {
            let (h, s) = match (ar.get("pretrain.history"), ar.get("pretrain.steps")) {
                (Some(h), Some(s)) if h.dims2() == (done, 4) && s.dims2() == (done, config.steps_per_epoch) => (h, s),
                _ => return Err(SkillError::Checkpoint("history tables missing or misshapen".into())),
            };
            for epoch in 0..done {
                let r = h.row_slice(epoch);
                history.push(EpochReport {
                    epoch,
                    mean: VaeLossReport { reconstruction: r[0], latent_kl: r[1], prior_kl: r[2], total: r[3] },
                    step_totals: s.row_slice(epoch).to_vec(),
                });
            }
        }
        let sampler = WindowSampler::new(data, config.model.horizon)?;
        Ok(Self { config, model, history, sampler, rng })
    }
}

/// Trains a fresh model for `config.epochs` epochs.
pub fn pretrain(data: &DemoDataset, config: PretrainConfig, seed: u64) -> Result<(SkillModel, Vec<EpochReport>)> {
    let mut t = Pretrainer::new(config, data, seed)?;
    t.run(data, |_| {})?;
    Ok((t.model, t.history))
}

#[cfg(test)]
/// Posterior mean standard deviation of a window, for diagnostics.
pub(crate) fn posterior_std(model: &SkillModel, w: &SkillWindow) -> Result<f64> {
    let x = model.encoder_input(w)?;
    let head = model.encoder.infer(&Tensor::row(&x))?;
    let g = head_to_gaussian(head.data(), model.latent_dim());
    Ok(g.std().iter().sum::<f64>() / g.dim() as f64)
}
