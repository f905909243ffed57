//! IDE2-Net: the T-layer unfolding of IDE2 with learnable per-layer scalars.
//!
//! Each layer reuses the IDE2 iteration but owns its step-size scale
//! `gamma[t]` and damping factor `alpha[t]`, for 2T learnable scalars total
//! regardless of the antenna or user count. The network output is the
//! projection of the final damped state, `x_out = project(x_d^{T+1})`.
//!
//! Training minimizes `||s - beta H x_out||^2` by SGD. The projection is not
//! differentiable, so the backward pass treats every projection node as the
//! identity (straight-through estimator) while all other nodes use exact
//! chain-rule derivatives over the real-valued representation of the complex
//! arithmetic.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{
    derive_rng, gram_factors, sample_channel, ChannelRealization, SystemConfig,
};
use crate::constellation::{Constellation, FiniteAlphabet};
use crate::harness::full_precision;
use crate::linalg::CMatrix;
use crate::precoders::{run_unrolled, LayerTrace, PrecodeResult};
use crate::{Error, Result};

/// Per-layer learnable scalars. `gamma` scales the unbiased linear step,
/// `alpha` is the damping factor; both have length T.
#[derive(Debug, Clone, PartialEq)]
pub struct Ide2NetParams {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Ide2NetParams {
    /// The IDE2 operating point: `gamma = 1`, `alpha = 0.95` in every layer.
    /// Training starts here, so the trained network can only match or beat
    /// IDE2 on validation loss.
    pub fn warm_start(t_layers: usize) -> Self {
        Self {
            gamma: vec![1.0; t_layers],
            alpha: vec![0.95; t_layers],
        }
    }

    pub fn t_layers(&self) -> usize {
        self.gamma.len()
    }

    /// Total learnable scalar count, `2T` by construction.
    pub fn learnable_count(&self) -> usize {
        self.gamma.len() + self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() || self.gamma.len() != self.alpha.len() {
            return Err(Error::Shape(format!(
                "need matching non-empty gamma/alpha vectors, got {} / {}",
                self.gamma.len(),
                self.alpha.len()
            )));
        }
        if self.gamma.iter().chain(&self.alpha).any(|v| !v.is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        if self.alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Domain("alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything the reverse pass needs from a forward run.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub layers: Vec<LayerTrace>,
    /// Final damped state `x_d^{T+1}`.
    pub x_d_final: Vec<Complex64>,
    /// Network output (projected final state, or the state itself in relaxed
    /// mode).
    pub x_out: Vec<Complex64>,
    /// Complex multiplications spent in the forward pass.
    pub mult_count: u64,
    relaxed: bool,
}

impl ForwardTape {
    /// True when the tape came from [`forward_relaxed`] (projections replaced
    /// by the identity).
    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }
}

/// Forward pass through T layers; returns the output and the tape for the
/// reverse pass. `x_out` is always an alphabet vector.
pub fn forward(
    params: &Ide2NetParams,
    s: &[Complex64],
    h_tilde: &CMatrix,
    a: &FiniteAlphabet,
) -> Result<(Vec<Complex64>, ForwardTape)> {
    params.validate()?;
    let run = run_unrolled(h_tilde, s, Some(a), &params.gamma, &params.alpha, true)?;
    let x_out = a.project(&run.x_d_final);
    let tape = ForwardTape {
        layers: run.layers,
        x_d_final: run.x_d_final,
        x_out: x_out.clone(),
        mult_count: run.mult_count,
        relaxed: false,
    };
    Ok((x_out, tape))
}

/// Relaxed-mode forward pass: every projection is replaced by the identity.
/// This makes the whole network differentiable, which is what the
/// finite-difference gradient checks exercise. Not used for precoding.
pub fn forward_relaxed(
    params: &Ide2NetParams,
    s: &[Complex64],
    h_tilde: &CMatrix,
) -> Result<(Vec<Complex64>, ForwardTape)> {
    params.validate()?;
    let run = run_unrolled(h_tilde, s, None, &params.gamma, &params.alpha, true)?;
    let x_out = run.x_d_final.clone();
    let tape = ForwardTape {
        layers: run.layers,
        x_d_final: run.x_d_final,
        x_out: x_out.clone(),
        mult_count: run.mult_count,
        relaxed: true,
    };
    Ok((x_out, tape))
}

/// Run the network as a precoder (no tape). `beta` is recorded in the result
/// for receiver-side rescaling, exactly as for [`crate::precoders::ide2`].
pub fn net_precode(
    params: &Ide2NetParams,
    s: &[Complex64],
    h_tilde: &CMatrix,
    a: &FiniteAlphabet,
    beta: f64,
) -> Result<PrecodeResult> {
    params.validate()?;
    let run = run_unrolled(h_tilde, s, Some(a), &params.gamma, &params.alpha, false)?;
    Ok(PrecodeResult {
        x: a.project(&run.x_d_final),
        beta,
        iterations_run: params.t_layers(),
        mult_count: run.mult_count,
    })
}

/// Squared-error cost of one sample: `||s - beta H x_out||^2`.
pub fn loss(s: &[Complex64], h: &ChannelRealization, beta: f64, x_out: &[Complex64]) -> Result<f64> {
    let hx = h.matrix().matvec(x_out)?;
    if s.len() != hx.len() {
        return Err(Error::Shape(format!(
            "symbol vector has length {}, channel serves {} users",
            s.len(),
            hx.len()
        )));
    }
    Ok(s.iter()
        .zip(&hx)
        .map(|(sv, hv)| (sv - hv * beta).norm_sqr())
        .sum())
}

/// Same cost expressed through the scaled channel, `||s - H~ x_out||^2`;
/// the form the trainer uses since `H~ = beta H` is already materialized.
fn loss_scaled(s: &[Complex64], h_tilde: &CMatrix, x_out: &[Complex64]) -> Result<f64> {
    let hx = h_tilde.matvec(x_out)?;
    Ok(s.iter().zip(&hx).map(|(sv, hv)| (sv - hv).norm_sqr()).sum())
}

/// Real inner product of complex gradient carriers:
/// `sum_i Re(g_i) Re(w_i) + Im(g_i) Im(w_i)`.
fn real_dot(g: &[Complex64], w: &[Complex64]) -> f64 {
    g.iter().zip(w).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// Reverse pass: derivatives of `grad_seed * ||s - H~ x_out||^2` w.r.t. every
/// per-layer `gamma` and `alpha`. Projection nodes propagate gradients as the
/// identity (straight-through estimator); everything else is the exact
/// real-representation chain rule. The tape must come from a matching
/// forward call on the same `(s, h_tilde)`.
pub fn backward(
    tape: &ForwardTape,
    params: &Ide2NetParams,
    s: &[Complex64],
    h_tilde: &CMatrix,
    grad_seed: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = params.t_layers();
    if tape.layers.len() != t {
        return Err(Error::Shape(format!(
            "tape has {} layers, params have {}",
            tape.layers.len(),
            t
        )));
    }
    let n = h_tilde.cols();
    if tape.x_out.len() != n {
        return Err(Error::Shape(format!(
            "tape output has length {}, channel has {} antennas",
            tape.x_out.len(),
            n
        )));
    }
    let d = h_tilde.col_norms_sqr();

    // Loss gradient at x_out, carried as dL/dRe + j dL/dIm. The final
    // projection is a straight-through node, so this is also the gradient at
    // x_d^{T+1}.
    let hx = h_tilde.matvec(&tape.x_out)?;
    let resid_out: Vec<Complex64> = s.iter().zip(&hx).map(|(sv, hv)| sv - hv).collect();
    let mut g: Vec<Complex64> = h_tilde
        .adjoint_matvec(&resid_out)?
        .into_iter()
        .map(|v| v * (-2.0 * grad_seed))
        .collect();

    let mut d_gamma = vec![0.0; t];
    let mut d_alpha = vec![0.0; t];

    for (idx, layer) in tape.layers.iter().enumerate().rev() {
        let gamma = params.gamma[idx];
        let alpha = params.alpha[idx];

        // x_d^{t+1} = alpha x_d^t + (1 - alpha) x^{t+1}
        let dstate: Vec<Complex64> = layer
            .x_d_in
            .iter()
            .zip(&layer.x_next)
            .map(|(xd, xn)| xd - xn)
            .collect();
        d_alpha[idx] = real_dot(&g, &dstate);

        // through the damping into the projected iterate, then STE through
        // the projection into r = x_d + gamma u
        let g_r: Vec<Complex64> = g.iter().map(|v| v * (1.0 - alpha)).collect();
        d_gamma[idx] = real_dot(&g_r, &layer.u);

        // through u = W_u (s - H~ x_d): g_resid = W_u^H (gamma g_r)
        let g_u_scaled: Vec<Complex64> = g_r
            .iter()
            .zip(&d)
            .map(|(gv, dv)| gv * (gamma / dv))
            .collect();
        let g_resid = h_tilde.matvec(&g_u_scaled)?;
        let back = h_tilde.adjoint_matvec(&g_resid)?;

        // accumulate the three x_d^t paths: damping, direct r term, residual
        for i in 0..n {
            g[i] = g[i] * alpha + g_r[i] - back[i];
        }
    }
    Ok((d_gamma, d_alpha))
}

/// Bounds the SGD updates keep the parameters inside. `alpha` stays in
/// `[0, 0.999]` to preserve the convex-combination reading of the damping
/// step. `gamma` stays in `[0.1, 10]`: it is a step-size scale on an update
/// already normalized by the unbiasing diagonal, and the surrogate gradient
/// through the projection carries no information about its magnitude (the
/// projection output is scale-invariant), so an unbounded `gamma` random-walks
/// into meaningless territory without this.
pub const ALPHA_BOUNDS: (f64, f64) = (0.0, 0.999);
pub const GAMMA_BOUNDS: (f64, f64) = (0.1, 10.0);

/// One SGD update, with the parameters clamped to [`ALPHA_BOUNDS`] and
/// [`GAMMA_BOUNDS`].
pub fn sgd_step(
    params: &Ide2NetParams,
    d_gamma: &[f64],
    d_alpha: &[f64],
    lr: f64,
) -> Result<Ide2NetParams> {
    if !(lr > 0.0) {
        return Err(Error::Domain(format!("learning rate must be positive, got {}", lr)));
    }
    if d_gamma.len() != params.gamma.len() || d_alpha.len() != params.alpha.len() {
        return Err(Error::Shape("gradient/parameter length mismatch".into()));
    }
    if d_gamma.iter().chain(d_alpha).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite gradient encountered; aborting training".into(),
        ));
    }
    Ok(Ide2NetParams {
        gamma: params
            .gamma
            .iter()
            .zip(d_gamma)
            .map(|(p, g)| (p - lr * g).clamp(GAMMA_BOUNDS.0, GAMMA_BOUNDS.1))
            .collect(),
        alpha: params
            .alpha
            .iter()
            .zip(d_alpha)
            .map(|(p, g)| (p - lr * g).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1))
            .collect(),
    })
}

/// SGD schedule and data budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Divide the rate by `lr_decay_factor` every this many epochs.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub lr_floor: f64,
    /// SNR the training configuration is tagged with (the cost itself is
    /// noise-free, so this is provenance, not arithmetic).
    pub snr_db_train: f64,
    /// Size of the fixed held-out validation set.
    pub val_samples: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: the full schedule shape (10-fold decay at fixed
    /// intervals down to a floor) compressed to seconds of CPU. The initial
    /// rate is sized for the summed-over-users cost; 0.1 diverges there.
    pub fn desk_default() -> Self {
        Self {
            epochs: 40,
            samples_per_epoch: 500,
            batch_size: 100,
            lr_initial: 0.01,
            lr_decay_every: 10,
            lr_decay_factor: 10.0,
            lr_floor: 1e-4,
            snr_db_train: 14.0,
            val_samples: 1000,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !self.samples_per_epoch.is_multiple_of(self.batch_size) {
            return Err(Error::Domain(format!(
                "batch size {} must divide samples_per_epoch {}",
                self.batch_size, self.samples_per_epoch
            )));
        }
        for (name, v) in [
            ("lr_initial", self.lr_initial),
            ("lr_decay_factor", self.lr_decay_factor),
            ("lr_floor", self.lr_floor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{} must be positive, got {}", name, v)));
            }
        }
        if self.lr_decay_every == 0 {
            return Err(Error::Domain("lr_decay_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Stepped-decay learning rate for a 0-based epoch index.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.lr_decay_every) as i32;
        (self.lr_initial / self.lr_decay_factor.powi(steps)).max(self.lr_floor)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Trainer output: the best-validation parameters plus the full log.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: Ide2NetParams,
    pub log: Vec<EpochStats>,
    /// Validation loss of the initialization (epoch 0).
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    /// Epoch the best parameters came from; 0 means the initialization.
    pub best_epoch: usize,
}

struct TrainSample {
    s: Vec<Complex64>,
    h_tilde: CMatrix,
}

const VALIDATION_STREAM: u64 = 1 << 32;

fn gen_sample<R: rand::Rng + ?Sized>(
    sys: &SystemConfig,
    cons: &Constellation,
    rng: &mut R,
) -> TrainSample {
    loop {
        let h = sample_channel(sys, rng);
        let f = match gram_factors(&h) {
            Ok(f) => f,
            // ill-conditioned draw (measure zero): resample
            Err(_) => continue,
        };
        let beta = (f.trace_inverse / (sys.n_antennas as f64 * sys.p_t)).sqrt();
        let bits: Vec<u8> = (0..sys.n_users * cons.bits_per_symbol())
            .map(|_| rng.random::<bool>() as u8)
            .collect();
        let s = cons.modulate(&bits).expect("bit count is a label multiple");
        return TrainSample {
            s,
            h_tilde: h.matrix().scaled(beta),
        };
    }
}

fn mean_val_loss(params: &Ide2NetParams, val: &[TrainSample], a: &FiniteAlphabet) -> Result<f64> {
    let losses: Vec<f64> = val
        .par_iter()
        .map(|smp| {
            let run = run_unrolled(&smp.h_tilde, &smp.s, Some(a), &params.gamma, &params.alpha, false)?;
            loss_scaled(&smp.s, &smp.h_tilde, &a.project(&run.x_d_final))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Train by SGD from `init` (normally [`Ide2NetParams::warm_start`]).
///
/// Every epoch draws fresh `(s, H)` pairs at the configured system size with
/// beta recomputed per sample; the validation set is fixed up front from a
/// dedicated stream of the seed. Returns the parameters with the best
/// validation loss seen, which by construction is never worse than the
/// initialization. Deterministic for a fixed `(cfg, sys, init)` at any
/// thread count: sample evaluations are pure and gradient sums run in sample
/// order.
pub fn train(
    cfg: &TrainConfig,
    sys: &SystemConfig,
    a: &FiniteAlphabet,
    cons: &Constellation,
    init: &Ide2NetParams,
) -> Result<TrainResult> {
    cfg.validate()?;
    sys.validate()?;
    init.validate()?;

    let mut val_rng = derive_rng(cfg.seed, VALIDATION_STREAM);
    let val: Vec<TrainSample> = (0..cfg.val_samples)
        .map(|_| gen_sample(sys, cons, &mut val_rng))
        .collect();

    let initial_val_loss = mean_val_loss(init, &val, a)?;
    let mut params = init.clone();
    let mut best_params = init.clone();
    let mut best_val_loss = initial_val_loss;
    let mut best_epoch = 0usize;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut over_budget_streak = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let mut data_rng = derive_rng(cfg.seed, epoch as u64);
        let data: Vec<TrainSample> = (0..cfg.samples_per_epoch)
            .map(|_| gen_sample(sys, cons, &mut data_rng))
            .collect();

        let mut epoch_loss_sum = 0.0;
        for batch in data.chunks(cfg.batch_size) {
            let seed = 1.0 / batch.len() as f64;
            let per_sample: Vec<(f64, Vec<f64>, Vec<f64>)> = batch
                .par_iter()
                .map(|smp| {
                    let (x_out, tape) = forward(&params, &smp.s, &smp.h_tilde, a)?;
                    let l = loss_scaled(&smp.s, &smp.h_tilde, &x_out)?;
                    let (dg, da) = backward(&tape, &params, &smp.s, &smp.h_tilde, seed)?;
                    Ok((l, dg, da))
                })
                .collect::<Result<_>>()?;

            let t = params.t_layers();
            let mut d_gamma = vec![0.0; t];
            let mut d_alpha = vec![0.0; t];
            for (l, dg, da) in &per_sample {
                epoch_loss_sum += l;
                for i in 0..t {
                    d_gamma[i] += dg[i];
                    d_alpha[i] += da[i];
                }
            }
            params = sgd_step(&params, &d_gamma, &d_alpha, lr)?;
        }

        let train_loss = epoch_loss_sum / cfg.samples_per_epoch as f64;
        let val_loss = mean_val_loss(&params, &val, a)?;
        log.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            lr,
        });

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_params = params.clone();
            best_epoch = epoch + 1;
        }

        if val_loss > 10.0 * initial_val_loss {
            over_budget_streak += 1;
            if over_budget_streak >= 10 {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    val_loss,
                    initial: initial_val_loss,
                    consecutive: over_budget_streak,
                });
            }
        } else {
            over_budget_streak = 0;
        }
    }

    Ok(TrainResult {
        params: best_params,
        log,
        initial_val_loss,
        best_val_loss,
        best_epoch,
    })
}

/// On-disk parameter file: the learned scalars plus the system configuration
/// and seed they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub params: Ide2NetParams,
    pub system: SystemConfig,
    pub train_seed: u64,
}

fn json_array(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| full_precision(v)).collect();
    format!("[{}]", items.join(", "))
}

impl ParamsFile {
    /// Serialize to a JSON text file. Floats carry 18 significant digits so
    /// the round trip is bit-exact.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.params.validate()?;
        let body = format!(
            "{{\n  \"t_layers\": {},\n  \"gamma\": {},\n  \"alpha\": {},\n  \"system\": {{\n    \"n_antennas\": {},\n    \"n_users\": {},\n    \"p_t\": {},\n    \"snr_db\": {}\n  }},\n  \"train_seed\": {}\n}}\n",
            self.params.t_layers(),
            json_array(&self.params.gamma),
            json_array(&self.params.alpha),
            self.system.n_antennas,
            self.system.n_users,
            full_precision(self.system.p_t),
            full_precision(self.system.snr_db),
            self.train_seed,
        );
        std::fs::write(path, body).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: format!("write failed: {}", e),
        })
    }

    /// Parse a parameter file. Unknown fields are ignored with a warning on
    /// stderr; missing or inconsistent fields are errors.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: format!("read failed: {}", e),
        })?;
        let perr = |detail: String| Error::Parse {
            path: path.display().to_string(),
            detail,
        };
        let root: Value = serde_json::from_str(&text)
            .map_err(|e| perr(format!("invalid JSON: {}", e)))?;
        let obj = root
            .as_object()
            .ok_or_else(|| perr("top level must be an object".into()))?;

        let known_top = ["t_layers", "gamma", "alpha", "system", "train_seed"];
        for key in obj.keys() {
            if !known_top.contains(&key.as_str()) {
                eprintln!(
                    "warning: {}: ignoring unknown field '{}'",
                    path.display(),
                    key
                );
            }
        }

        let t_layers = obj
            .get("t_layers")
            .and_then(Value::as_u64)
            .ok_or_else(|| perr("field 't_layers' missing or not an integer".into()))?
            as usize;
        let vec_field = |name: &str| -> Result<Vec<f64>> {
            obj.get(name)
                .and_then(Value::as_array)
                .ok_or_else(|| perr(format!("field '{}' missing or not an array", name)))?
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_f64()
                        .ok_or_else(|| perr(format!("{}[{}] is not a number", name, i)))
                })
                .collect()
        };
        let gamma = vec_field("gamma")?;
        let alpha = vec_field("alpha")?;
        if gamma.len() != t_layers || alpha.len() != t_layers {
            return Err(perr(format!(
                "t_layers = {} but gamma has {} entries and alpha has {}",
                t_layers,
                gamma.len(),
                alpha.len()
            )));
        }

        let sysv = obj
            .get("system")
            .and_then(Value::as_object)
            .ok_or_else(|| perr("field 'system' missing or not an object".into()))?;
        let known_sys = ["n_antennas", "n_users", "p_t", "snr_db"];
        for key in sysv.keys() {
            if !known_sys.contains(&key.as_str()) {
                eprintln!(
                    "warning: {}: ignoring unknown field 'system.{}'",
                    path.display(),
                    key
                );
            }
        }
        let sys_u64 = |name: &str| -> Result<u64> {
            sysv.get(name)
                .and_then(Value::as_u64)
                .ok_or_else(|| perr(format!("field 'system.{}' missing or not an integer", name)))
        };
        let sys_f64 = |name: &str| -> Result<f64> {
            sysv.get(name)
                .and_then(Value::as_f64)
                .ok_or_else(|| perr(format!("field 'system.{}' missing or not a number", name)))
        };
        let system = SystemConfig {
            n_antennas: sys_u64("n_antennas")? as usize,
            n_users: sys_u64("n_users")? as usize,
            p_t: sys_f64("p_t")?,
            snr_db: sys_f64("snr_db")?,
        };
        let train_seed = obj
            .get("train_seed")
            .and_then(Value::as_u64)
            .ok_or_else(|| perr("field 'train_seed' missing or not an integer".into()))?;

        let params = Ide2NetParams { gamma, alpha };
        params.validate().map_err(|e| perr(e.to_string()))?;
        Ok(Self {
            params,
            system,
            train_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::precoding_factor_beta;
    use crate::precoders::{ide2_with_trace, Ide2Config};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_instance(n: usize, k: usize, seed: u64) -> (Vec<Complex64>, CMatrix) {
        let sys = SystemConfig::new(n, k, 1.0, 14.0).unwrap();
        let mut rng = derive_rng(seed, 0);
        let h = sample_channel(&sys, &mut rng);
        let beta = precoding_factor_beta(&h, 1.0).unwrap();
        let cons = Constellation::qam16();
        let bits: Vec<u8> = (0..k * 4)
            .map(|_| rand::Rng::random::<bool>(&mut rng) as u8)
            .collect();
        (cons.modulate(&bits).unwrap(), h.matrix().scaled(beta))
    }

    #[test]
    fn warm_start_reduces_to_ide2() {
        let a = FiniteAlphabet::one_bit(1.0).unwrap();
        for t in [1usize, 5, 20] {
            let (s, h_tilde) = random_instance(32, 4, 1000 + t as u64);
            let params = Ide2NetParams::warm_start(t);
            let (_, tape) = forward(&params, &s, &h_tilde, &a).unwrap();
            let cfg = Ide2Config {
                t_max: t,
                alpha: 0.95,
                gamma: 1.0,
            };
            let (_, trace) = ide2_with_trace(&h_tilde, &s, &a, &cfg, 1.0).unwrap();
            assert_eq!(tape.layers, trace.layers, "trajectory mismatch at T = {}", t);
            assert_eq!(tape.x_d_final, trace.x_d_final);
        }
    }

    #[test]
    fn learnable_count_is_twice_the_depth_regardless_of_size() {
        for t in [1usize, 5, 20, 50] {
            assert_eq!(Ide2NetParams::warm_start(t).learnable_count(), 2 * t);
        }
    }

    #[test]
    fn full_damping_freezes_the_state() {
        let a = FiniteAlphabet::one_bit(1.0).unwrap();
        let (s, h_tilde) = random_instance(16, 4, 2);
        let params = Ide2NetParams {
            gamma: vec![1.0; 4],
            alpha: vec![1.0; 4],
        };
        let (x_out, tape) = forward(&params, &s, &h_tilde, &a).unwrap();
        let zero = vec![c(0.0, 0.0); 16];
        for layer in &tape.layers {
            assert_eq!(layer.x_d_in, zero);
        }
        assert_eq!(x_out, a.project(&zero));
    }

    #[test]
    fn single_layer_scalar_matches_precoder() {
        let a = FiniteAlphabet::one_bit(1.0).unwrap();
        let h_tilde = CMatrix::from_vec(1, 1, vec![c(1.0, 0.0)]).unwrap();
        let s = [c(1.0, 0.0)];
        let params = Ide2NetParams::warm_start(1);
        let (_, tape) = forward(&params, &s, &h_tilde, &a).unwrap();
        let expect = c(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(tape.layers[0].x_next[0], expect);
    }

    #[test]
    fn loss_basics() {
        let h = ChannelRealization::from_matrix(CMatrix::from_vec(1, 1, vec![c(1.0, 0.0)]).unwrap())
            .unwrap();
        assert_eq!(loss(&[c(1.0, 0.0)], &h, 1.0, &[c(0.0, 0.0)]).unwrap(), 1.0);
        assert_eq!(loss(&[c(1.0, 0.0)], &h, 1.0, &[c(1.0, 0.0)]).unwrap(), 0.0);
    }

    #[test]
    fn batch_loss_is_mean_of_samples() {
        let a = FiniteAlphabet::one_bit(1.0).unwrap();
        let params = Ide2NetParams::warm_start(3);
        let mut losses = Vec::new();
        for i in 0..100 {
            let (s, h_tilde) = random_instance(8, 2, 400 + i);
            let (x_out, _) = forward(&params, &s, &h_tilde, &a).unwrap();
            losses.push(loss_scaled(&s, &h_tilde, &x_out).unwrap());
        }
        let mean = losses.iter().sum::<f64>() / 100.0;
        let again = losses.iter().sum::<f64>() / 100.0;
        assert!((mean - again).abs() < 1e-12);
    }

    /// Finite-difference oracle over the relaxed network.
    fn fd_gradients(
        params: &Ide2NetParams,
        s: &[Complex64],
        h_tilde: &CMatrix,
        step: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let t = params.t_layers();
        let loss_at = |p: &Ide2NetParams| {
            let (x_out, _) = forward_relaxed(p, s, h_tilde).unwrap();
            loss_scaled(s, h_tilde, &x_out).unwrap()
        };
        let mut dg = vec![0.0; t];
        let mut da = vec![0.0; t];
        for i in 0..t {
            let mut plus = params.clone();
            plus.gamma[i] += step;
            let mut minus = params.clone();
            minus.gamma[i] -= step;
            dg[i] = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
            let mut plus = params.clone();
            plus.alpha[i] += step;
            let mut minus = params.clone();
            minus.alpha[i] -= step;
            da[i] = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
        }
        (dg, da)
    }

    #[test]
    fn relaxed_gradients_match_finite_differences() {
        for seed in 0..10u64 {
            let (s, h_tilde) = random_instance(8, 2, 500 + seed);
            let mut rng = derive_rng(900 + seed, 0);
            let t = 3;
            let params = Ide2NetParams {
                gamma: (0..t).map(|_| 0.5 + rand::Rng::random::<f64>(&mut rng)).collect(),
                alpha: (0..t).map(|_| 0.1 + 0.8 * rand::Rng::random::<f64>(&mut rng)).collect(),
            };
            let (_, tape) = forward_relaxed(&params, &s, &h_tilde).unwrap();
            let (dg, da) = backward(&tape, &params, &s, &h_tilde, 1.0).unwrap();
            let (fg, fa) = fd_gradients(&params, &s, &h_tilde, 1e-6);
            let num: f64 = dg
                .iter()
                .chain(&da)
                .zip(fg.iter().chain(&fa))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = fg.iter().chain(&fa).map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                num / den < 1e-5,
                "seed {}: relative gradient error {}",
                seed,
                num / den
            );
        }
    }

    #[test]
    fn hand_derived_single_layer_gradient() {
        // Scalar real instance, relaxed: x_out = (1 - alpha) gamma s / h,
        // L = s^2 (1 - (1 - alpha) gamma)^2, independent of h.
        let h_tilde = CMatrix::from_vec(1, 1, vec![c(2.0, 0.0)]).unwrap();
        let s = [c(1.0, 0.0)];
        let params = Ide2NetParams {
            gamma: vec![0.8],
            alpha: vec![0.9],
        };
        let (_, tape) = forward_relaxed(&params, &s, &h_tilde).unwrap();
        let (dg, da) = backward(&tape, &params, &s, &h_tilde, 1.0).unwrap();
        let w = 1.0 - (1.0 - 0.9) * 0.8;
        assert!((dg[0] - (-2.0 * w * 0.1)).abs() < 1e-12, "d_gamma = {}", dg[0]);
        assert!((da[0] - (2.0 * w * 0.8)).abs() < 1e-12, "d_alpha = {}", da[0]);
    }

    #[test]
    fn frozen_state_kills_gamma_gradients() {
        let a = FiniteAlphabet::one_bit(1.0).unwrap();
        let (s, h_tilde) = random_instance(16, 4, 77);
        let params = Ide2NetParams {
            gamma: vec![1.0; 5],
            alpha: vec![1.0; 5],
        };
        let (_, tape) = forward(&params, &s, &h_tilde, &a).unwrap();
        let (dg, _) = backward(&tape, &params, &s, &h_tilde, 1.0).unwrap();
        assert!(dg.iter().all(|&v| v == 0.0), "d_gamma = {:?}", dg);
    }

    #[test]
    fn sgd_step_arithmetic_and_clamp() {
        let p = Ide2NetParams {
            gamma: vec![1.0],
            alpha: vec![0.95],
        };
        let q = sgd_step(&p, &[0.0], &[0.0], 0.1).unwrap();
        assert_eq!(q, p);
        let q = sgd_step(&p, &[1.0], &[0.0], 0.1).unwrap();
        assert!((q.gamma[0] - 0.9).abs() < 1e-15);
        let q = sgd_step(&p, &[0.0], &[-1.0], 0.1).unwrap();
        assert_eq!(q.alpha[0], 0.999);
        assert!(sgd_step(&p, &[f64::NAN], &[0.0], 0.1).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let sys = SystemConfig::new(8, 2, 1.0, 14.0).unwrap();
        let a = FiniteAlphabet::one_bit(1.0).unwrap();
        let cons = Constellation::qam16();
        let cfg = TrainConfig {
            epochs: 0,
            samples_per_epoch: 10,
            batch_size: 10,
            val_samples: 20,
            ..TrainConfig::desk_default()
        };
        let init = Ide2NetParams::warm_start(3);
        let out = train(&cfg, &sys, &a, &cons, &init).unwrap();
        assert_eq!(out.params, init);
        assert!(out.log.is_empty());
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic_and_never_worse_than_init() {
        let sys = SystemConfig::new(16, 4, 1.0, 14.0).unwrap();
        let a = FiniteAlphabet::one_bit(1.0).unwrap();
        let cons = Constellation::qam16();
        let cfg = TrainConfig {
            epochs: 4,
            samples_per_epoch: 40,
            batch_size: 20,
            val_samples: 30,
            seed: 5,
            ..TrainConfig::desk_default()
        };
        let init = Ide2NetParams::warm_start(3);
        let a_run = train(&cfg, &sys, &a, &cons, &init).unwrap();
        let b_run = train(&cfg, &sys, &a, &cons, &init).unwrap();
        assert_eq!(a_run.params, b_run.params);
        assert_eq!(a_run.log, b_run.log);
        assert!(a_run.best_val_loss <= a_run.initial_val_loss);
    }

    #[test]
    fn learning_rate_schedule_shape() {
        // full-scale shape: 0.1, 10-fold decrease every 200 epochs, then
        // pinned at 1e-4
        let cfg = TrainConfig {
            epochs: 1000,
            lr_initial: 0.1,
            lr_decay_every: 200,
            ..TrainConfig::desk_default()
        };
        assert_eq!(cfg.learning_rate(0), 0.1);
        assert_eq!(cfg.learning_rate(199), 0.1);
        assert!((cfg.learning_rate(200) - 0.01).abs() < 1e-15);
        assert!((cfg.learning_rate(400) - 0.001).abs() < 1e-15);
        assert_eq!(cfg.learning_rate(600), 1e-4);
        assert_eq!(cfg.learning_rate(999), 1e-4);
    }

    #[test]
    fn params_file_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("faprec_params_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.json");
        let file = ParamsFile {
            params: Ide2NetParams {
                gamma: vec![1.0, 0.1 + 1e-16, std::f64::consts::PI],
                #[allow(clippy::excessive_precision)] // the round trip must survive >17 digits
                alpha: vec![0.95, 0.123456789012345678, 1.0 / 3.0],
            },
            system: SystemConfig::new(128, 16, 1.0, 14.0).unwrap(),
            train_seed: 42,
        };
        file.save(&path).unwrap();
        let back = ParamsFile::load(&path).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn params_file_rejects_length_mismatch() {
        let dir = std::env::temp_dir().join("faprec_params_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad_t.json");
        std::fs::write(
            &path,
            r#"{"t_layers": 3, "gamma": [1.0, 1.0], "alpha": [0.95, 0.95, 0.95],
               "system": {"n_antennas": 8, "n_users": 2, "p_t": 1.0, "snr_db": 14.0},
               "train_seed": 0}"#,
        )
        .unwrap();
        assert!(matches!(ParamsFile::load(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn params_file_ignores_unknown_fields() {
        let dir = std::env::temp_dir().join("faprec_params_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("extra.json");
        std::fs::write(
            &path,
            r#"{"t_layers": 1, "gamma": [1.0], "alpha": [0.5],
               "system": {"n_antennas": 8, "n_users": 2, "p_t": 1.0, "snr_db": 14.0},
               "train_seed": 7, "comment": "legacy"}"#,
        )
        .unwrap();
        let file = ParamsFile::load(&path).unwrap();
        assert_eq!(file.params.gamma, vec![1.0]);
        assert_eq!(file.train_seed, 7);
    }
}
