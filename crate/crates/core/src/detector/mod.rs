//! LSTM autoencoder with a source classifier and a domain discriminator.
//!
//! The encoder maps a window to the final hidden state of its top LSTM layer
//! (the latent). The decoder feeds the latent to every step of its own LSTM
//! stack and projects each hidden state back to the feature space. The
//! classifier and discriminator are sigmoid MLPs over the latent. When the
//! two domains have different feature dimensions, each gets its own
//! encoder/decoder pair while the classifier and discriminator stay shared.

pub mod losses;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use losses::{ClassWeights, Coefficients, LossBreakdown};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    Activation, Dense, GradientSet, LstmStack, LstmStackTrace, Mlp, Optimizer, ParameterSet,
};
use losses::{bce, bce_gradient};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// Architecture of a [`DetectorBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub source_dim: usize,
    pub target_dim: usize,
    /// LSTM sizes of the encoder; the last one is the latent dimension.
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Hidden sizes of the classifier and discriminator MLPs.
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    /// Build the domain discriminator. Disabled for alignment-only models.
    pub discriminator: bool,
}

impl DetectorConfig {
    /// Full-size architecture: encoder 256-128, decoder 128-256, heads 128-128, dropout 0.2.
    pub fn full(source_dim: usize, target_dim: usize) -> Self {
        DetectorConfig {
            source_dim,
            target_dim,
            encoder_hidden: vec![256, 128],
            decoder_hidden: vec![128, 256],
            head_hidden: vec![128, 128],
            dropout: 0.2,
            discriminator: true,
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder_hidden.last().expect("validated")
    }

    pub fn heterogeneous(&self) -> bool {
        self.source_dim != self.target_dim
    }

    pub fn validate(&self) -> Result<()> {
        let sizes_ok = |v: &[usize]| !v.is_empty() && v.iter().all(|&s| s > 0);
        if self.source_dim == 0 || self.target_dim == 0 {
            return Err(Error::InvalidArgument("feature dimensions must be positive".into()));
        }
        if !sizes_ok(&self.encoder_hidden) || !sizes_ok(&self.decoder_hidden) {
            return Err(Error::InvalidArgument("LSTM stacks need positive layer sizes".into()));
        }
        if !self.head_hidden.iter().all(|&s| s > 0) {
            return Err(Error::InvalidArgument("head layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Decoder {
    lstm: LstmStack,
    projection: Dense,
}

struct DecoderTrace {
    lstm: LstmStackTrace,
    hidden: Matrix,
    output: Matrix,
}

/// One source window (with its end-point label) paired with one target window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub source: Matrix,
    pub source_label: u8,
    pub target: Matrix,
}

/// Encoder, decoder, classifier and discriminator with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBundle {
    config: DetectorConfig,
    params: ParameterSet,
    encoders: Vec<LstmStack>,
    decoders: Vec<Decoder>,
    classifier: Mlp,
    discriminator: Option<Mlp>,
}

impl DetectorBundle {
    pub fn new(config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParameterSet::new();
        let latent = config.latent_dim();
        let dims: Vec<(&str, usize)> = if config.heterogeneous() {
            vec![("source", config.source_dim), ("target", config.target_dim)]
        } else {
            vec![("shared", config.source_dim)]
        };
        let mut encoders = Vec::new();
        let mut decoders = Vec::new();
        for &(tag, dim) in &dims {
            encoders.push(LstmStack::register(
                &mut ps,
                &format!("encoder.{tag}"),
                dim,
                &config.encoder_hidden,
                &mut rng,
            ));
            let lstm = LstmStack::register(
                &mut ps,
                &format!("decoder.{tag}"),
                latent,
                &config.decoder_hidden,
                &mut rng,
            );
            let projection = Dense::register(
                &mut ps,
                &format!("decoder.{tag}.projection"),
                lstm.output_size(),
                dim,
                Activation::Identity,
                &mut rng,
            );
            decoders.push(Decoder { lstm, projection });
        }
        let head_sizes: Vec<usize> = std::iter::once(latent)
            .chain(config.head_hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let classifier = Mlp::register(
            &mut ps,
            "classifier",
            &head_sizes,
            Activation::Sigmoid,
            config.dropout,
            &mut rng,
        );
        let discriminator = config.discriminator.then(|| {
            Mlp::register(
                &mut ps,
                "discriminator",
                &head_sizes,
                Activation::Sigmoid,
                config.dropout,
                &mut rng,
            )
        });
        Ok(DetectorBundle {
            config,
            params: ps,
            encoders,
            decoders,
            classifier,
            discriminator,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim()
    }

    pub fn dim(&self, domain: Domain) -> usize {
        match domain {
            Domain::Source => self.config.source_dim,
            Domain::Target => self.config.target_dim,
        }
    }

    fn slot(&self, domain: Domain) -> usize {
        match domain {
            Domain::Target if self.encoders.len() == 2 => 1,
            _ => 0,
        }
    }

    fn encode_trace(&self, window: &Matrix, domain: Domain) -> Result<LstmStackTrace> {
        if window.cols() != self.dim(domain) {
            return Err(Error::Shape(format!(
                "{domain:?} window has {} features, encoder expects {}",
                window.cols(),
                self.dim(domain)
            )));
        }
        self.encoders[self.slot(domain)].forward(&self.params, window)
    }

    /// Latent vector: final hidden state of the encoder over the window.
    pub fn encode(&self, window: &Matrix, domain: Domain) -> Result<Vec<f64>> {
        Ok(self.encode_trace(window, domain)?.final_hidden().to_vec())
    }

    fn decode_trace(&self, latent: &[f64], length: usize, domain: Domain) -> Result<DecoderTrace> {
        if length == 0 {
            return Err(Error::InvalidArgument("reconstruction length must be at least 1".into()));
        }
        if latent.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "latent has {} entries, expected {}",
                latent.len(),
                self.latent_dim()
            )));
        }
        let dec = &self.decoders[self.slot(domain)];
        let mut input = Matrix::zeros(length, latent.len());
        for t in 0..length {
            input.row_mut(t).copy_from_slice(latent);
        }
        let lstm = dec.lstm.forward(&self.params, &input)?;
        let hidden = lstm.top().hidden_states();
        let mut output = Matrix::zeros(length, dec.projection.outputs);
        for t in 0..length {
            dec.projection.forward_into(&self.params, hidden.row(t), output.row_mut(t));
        }
        Ok(DecoderTrace {
            lstm,
            hidden,
            output,
        })
    }

    /// Decoder unrolled `length` steps from the latent, in the domain's feature space.
    pub fn reconstruct(&self, latent: &[f64], length: usize, domain: Domain) -> Result<Matrix> {
        Ok(self.decode_trace(latent, length, domain)?.output)
    }

    /// Probability that the latent belongs to an anomaly (evaluation mode).
    pub fn classify(&self, latent: &[f64]) -> Result<f64> {
        Ok(self.classifier.forward(&self.params, latent)?[0])
    }

    /// Probability that the latent comes from the target domain (evaluation mode).
    pub fn discriminate(&self, latent: &[f64]) -> Result<Option<f64>> {
        self.discriminator
            .as_ref()
            .map(|k| k.forward(&self.params, latent).map(|o| o[0]))
            .transpose()
    }

    /// Squared reconstruction error of a window.
    pub fn reconstruction_error(&self, window: &Matrix, domain: Domain) -> Result<f64> {
        let latent = self.encode(window, domain)?;
        let recon = self.reconstruct(&latent, window.rows(), domain)?;
        window.squared_distance(&recon)
    }

    /// `classify(encode(x)) * ||x - reconstruct(encode(x))||^2` for a target window.
    pub fn anomaly_score(&self, window: &Matrix) -> Result<f64> {
        let latent = self.encode(window, Domain::Target)?;
        let recon = self.reconstruct(&latent, window.rows(), Domain::Target)?;
        let err = losses::loss_recon(&[(window, &recon)])?;
        Ok(self.classify(&latent)? * err)
    }

    /// Evaluation-mode loss terms for a batch, without touching parameters.
    pub fn evaluate_losses(&self, batch: &[WindowPair], weights: &ClassWeights) -> Result<LossBreakdown> {
        let mut none: Option<&mut ChaCha8Rng> = None;
        let pass = self.forward_backward(batch, &Coefficients::default(), weights, none.take(), None)?;
        Ok(pass.eval)
    }

    /// Training-mode objective and gradients. Dropout masks are drawn from `rng`
    /// when given; otherwise the heads run in evaluation mode.
    pub fn objective_gradients<R: Rng + ?Sized>(
        &self,
        batch: &[WindowPair],
        coeffs: &Coefficients,
        weights: &ClassWeights,
        rng: Option<&mut R>,
    ) -> Result<(f64, GradientSet)> {
        let mut grads = self.params.zero_gradients();
        let pass = self.forward_backward(batch, coeffs, weights, rng, Some(&mut grads))?;
        Ok((coeffs.objective(&pass.train), grads))
    }

    /// One optimizer step on `alpha*cls + beta*recon + gamma*align + lambda*disc`.
    /// Every network descends the objective. Returns the evaluation-mode losses
    /// of the batch measured before the step.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        optimizer: &mut Optimizer,
        batch: &[WindowPair],
        coeffs: &Coefficients,
        weights: &ClassWeights,
        rng: &mut R,
    ) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::Empty("detector batch".into()));
        }
        let mut grads = self.params.zero_gradients();
        let pass = self.forward_backward(batch, coeffs, weights, Some(rng), Some(&mut grads))?;
        if !pass.eval.is_finite() || !coeffs.objective(&pass.train).is_finite() {
            return Err(Error::NonFinite(format!("detector losses {:?}", pass.eval)));
        }
        optimizer.step(&mut self.params, &grads)?;
        Ok(pass.eval)
    }

    /// Reconstruction-only step on windows of one domain (single-domain autoencoder).
    /// Returns the pre-step reconstruction loss.
    pub fn update_reconstruction(
        &mut self,
        optimizer: &mut Optimizer,
        windows: &[Matrix],
        domain: Domain,
    ) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::Empty("reconstruction batch".into()));
        }
        let mut grads = self.params.zero_gradients();
        let mut total = 0.0;
        for w in windows {
            let enc = self.encode_trace(w, domain)?;
            let dec = self.decode_trace(enc.final_hidden(), w.rows(), domain)?;
            total += w.squared_distance(&dec.output)?;
            let d_recon = recon_gradient(&dec.output, w, 1.0);
            let d_latent = self.decoder_backward(&dec, &d_recon, domain, &mut grads)?;
            self.encoder_backward(&enc, &d_latent, domain, &mut grads)?;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("reconstruction loss {total}")));
        }
        optimizer.step(&mut self.params, &grads)?;
        Ok(total)
    }

    fn decoder_backward(
        &self,
        trace: &DecoderTrace,
        d_output: &Matrix,
        domain: Domain,
        grads: &mut GradientSet,
    ) -> Result<Vec<f64>> {
        let dec = &self.decoders[self.slot(domain)];
        let m = d_output.rows();
        let mut d_hidden = Matrix::zeros(m, dec.lstm.output_size());
        for t in 0..m {
            dec.projection.backward(
                &self.params,
                trace.hidden.row(t),
                trace.output.row(t),
                d_output.row(t),
                grads,
                Some(d_hidden.row_mut(t)),
            );
        }
        let d_input = dec.lstm.backward(&self.params, &trace.lstm, &d_hidden, grads)?;
        let mut d_latent = vec![0.0; self.latent_dim()];
        for row in d_input.iter_rows() {
            d_latent.iter_mut().zip(row).for_each(|(d, r)| *d += r);
        }
        Ok(d_latent)
    }

    fn encoder_backward(
        &self,
        trace: &LstmStackTrace,
        d_latent: &[f64],
        domain: Domain,
        grads: &mut GradientSet,
    ) -> Result<()> {
        let m = trace.top().len();
        let mut d_top = Matrix::zeros(m, d_latent.len());
        d_top.row_mut(m - 1).copy_from_slice(d_latent);
        self.encoders[self.slot(domain)].backward(&self.params, trace, &d_top, grads)?;
        Ok(())
    }

    fn forward_backward<R: Rng + ?Sized>(
        &self,
        batch: &[WindowPair],
        coeffs: &Coefficients,
        weights: &ClassWeights,
        mut rng: Option<&mut R>,
        mut grads: Option<&mut GradientSet>,
    ) -> Result<Pass> {
        let mut train = LossBreakdown::default();
        let mut eval = LossBreakdown::default();
        let training = rng.is_some();
        for pair in batch {
            let enc_s = self.encode_trace(&pair.source, Domain::Source)?;
            let enc_t = self.encode_trace(&pair.target, Domain::Target)?;
            let z_s = enc_s.final_hidden();
            let z_t = enc_t.final_hidden();

            let dec_s = self.decode_trace(z_s, pair.source.rows(), Domain::Source)?;
            let dec_t = self.decode_trace(z_t, pair.target.rows(), Domain::Target)?;
            let source_normal = pair.source_label == 0;
            let recon_s = if source_normal {
                pair.source.squared_distance(&dec_s.output)?
            } else {
                0.0
            };
            let recon_t = pair.target.squared_distance(&dec_t.output)?;
            let align = crate::matrix::squared_distance(z_s, z_t);
            train.recon += recon_s + recon_t;
            eval.recon += recon_s + recon_t;
            train.align += align;
            eval.align += align;

            let cls_w = weights.for_label(pair.source_label);
            let c_trace = self.classifier.forward_trace(&self.params, z_s, rng.as_deref_mut())?;
            let p_cls = c_trace.output()[0];
            train.cls += bce(p_cls, pair.source_label, cls_w);
            eval.cls += if training {
                bce(self.classify(z_s)?, pair.source_label, cls_w)
            } else {
                bce(p_cls, pair.source_label, cls_w)
            };

            let k_traces = match &self.discriminator {
                Some(k) => {
                    let ks = k.forward_trace(&self.params, z_s, rng.as_deref_mut())?;
                    let kt = k.forward_trace(&self.params, z_t, rng.as_deref_mut())?;
                    train.disc += bce(ks.output()[0], 0, 1.0) + bce(kt.output()[0], 1, 1.0);
                    eval.disc += if training {
                        bce(k.forward(&self.params, z_s)?[0], 0, 1.0)
                            + bce(k.forward(&self.params, z_t)?[0], 1, 1.0)
                    } else {
                        bce(ks.output()[0], 0, 1.0) + bce(kt.output()[0], 1, 1.0)
                    };
                    Some((k, ks, kt))
                }
                None => None,
            };

            let Some(grads) = grads.as_deref_mut() else {
                continue;
            };
            let mut d_zs = vec![0.0; z_s.len()];
            let mut d_zt = vec![0.0; z_t.len()];
            if coeffs.beta != 0.0 {
                if source_normal {
                    let d = recon_gradient(&dec_s.output, &pair.source, coeffs.beta);
                    add_into(&mut d_zs, &self.decoder_backward(&dec_s, &d, Domain::Source, grads)?);
                }
                let d = recon_gradient(&dec_t.output, &pair.target, coeffs.beta);
                add_into(&mut d_zt, &self.decoder_backward(&dec_t, &d, Domain::Target, grads)?);
            }
            if coeffs.gamma != 0.0 {
                for k in 0..z_s.len() {
                    let g = 2.0 * coeffs.gamma * (z_s[k] - z_t[k]);
                    d_zs[k] += g;
                    d_zt[k] -= g;
                }
            }
            if coeffs.alpha != 0.0 {
                let d_p = coeffs.alpha * bce_gradient(p_cls, pair.source_label, cls_w);
                let d = self.classifier.backward(&self.params, &c_trace, &[d_p], grads)?;
                add_into(&mut d_zs, &d);
            }
            if let (true, Some((k, ks, kt))) = (coeffs.lambda != 0.0, &k_traces) {
                let d_ps = coeffs.lambda * bce_gradient(ks.output()[0], 0, 1.0);
                add_into(&mut d_zs, &k.backward(&self.params, ks, &[d_ps], grads)?);
                let d_pt = coeffs.lambda * bce_gradient(kt.output()[0], 1, 1.0);
                add_into(&mut d_zt, &k.backward(&self.params, kt, &[d_pt], grads)?);
            }
            if d_zs.iter().any(|&v| v != 0.0) {
                self.encoder_backward(&enc_s, &d_zs, Domain::Source, grads)?;
            }
            if d_zt.iter().any(|&v| v != 0.0) {
                self.encoder_backward(&enc_t, &d_zt, Domain::Target, grads)?;
            }
        }
        Ok(Pass { train, eval })
    }
}

struct Pass {
    train: LossBreakdown,
    eval: LossBreakdown,
}

fn recon_gradient(output: &Matrix, window: &Matrix, scale: f64) -> Matrix {
    let data = output
        .as_slice()
        .iter()
        .zip(window.as_slice())
        .map(|(r, x)| 2.0 * scale * (r - x))
        .collect();
    Matrix::from_vec(output.rows(), output.cols(), data).expect("same shape")
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}
