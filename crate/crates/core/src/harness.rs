//! Seeded Monte-Carlo evaluation: BER/MSE/IUI versus SNR, layer count, or
//! CSI error, plus an exhaustive-search optimum for tiny instances.
//!
//! Each trial draws one channel and one symbol vector, precodes, pushes the
//! signal through the true channel with noise, rescales by beta, and
//! hard-demodulates. Trials run in parallel on deterministically derived
//! per-trial streams and are reduced in trial order, so a sweep's output is
//! byte-identical for a fixed seed at any thread count.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_channel, derive_rng, gram_factors, perturb_channel, sample_channel, ChannelRealization,
    SystemConfig,
};
use crate::constellation::{Constellation, FiniteAlphabet};
use crate::precoders::{ide2, pgd_reference, zf_precode, zf_quantized, Ide2Config, PrecodeResult};
use crate::unfolded::{net_precode, Ide2NetParams};
use crate::{Error, Result};

/// Full-precision decimal rendering (18 significant digits, so parsing the
/// text recovers the exact double).
pub fn full_precision(x: f64) -> String {
    format!("{:.17e}", x)
}

/// Hard cap on exhaustive-search candidates.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Which precoder a trial runs.
#[derive(Debug, Clone)]
pub enum PrecoderSpec {
    Zf,
    ZfQuantized,
    Ide2(Ide2Config),
    Pgd { lambda: f64, t_max: usize },
    Ide2Net(Ide2NetParams),
}

impl PrecoderSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PrecoderSpec::Zf => "zf",
            PrecoderSpec::ZfQuantized => "zf-quant",
            PrecoderSpec::Ide2(_) => "ide2",
            PrecoderSpec::Pgd { .. } => "pgd",
            PrecoderSpec::Ide2Net(_) => "ide2-net",
        }
    }
}

/// Sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Snr,
    Layers,
    Epsilon,
}

impl std::fmt::Display for SweepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepKind::Snr => write!(f, "snr"),
            SweepKind::Layers => write!(f, "layers"),
            SweepKind::Epsilon => write!(f, "epsilon"),
        }
    }
}

/// A full sweep description; one [`BerResult`] comes back per value.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub trials_per_point: usize,
    pub sys: SystemConfig,
    pub precoder: PrecoderSpec,
    pub constellation: Constellation,
    pub alphabet: FiniteAlphabet,
    pub seed: u64,
}

/// Accumulated statistics for one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerResult {
    /// The swept quantity (SNR dB, layer count, or epsilon).
    pub sweep_value: f64,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
    /// Binomial standard error `sqrt(ber (1 - ber) / bits_total)`.
    pub stderr: f64,
    /// Mean `||s - beta y||^2` over completed trials.
    pub mse_mean: f64,
    /// Mean `||s - beta H x||^2` over completed trials.
    pub iui_mean: f64,
    /// Mean `beta^2 K sigma^2`; the MSE and IUI means differ by this.
    pub noise_term_mean: f64,
    pub trials_discarded: u64,
}

/// Per-trial measurements.
#[derive(Debug, Clone, Copy)]
pub struct TrialStats {
    pub bit_errors: u64,
    pub bits: u64,
    pub mse: f64,
    pub iui: f64,
    pub noise_term: f64,
}

fn discard_on_numerical<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Numerical(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Run one Monte-Carlo trial. Returns `None` when the channel draw was
/// discarded for conditioning; such trials are counted, never silently
/// dropped into the denominators.
///
/// With `epsilon > 0` the BS precodes (and computes beta) from the perturbed
/// estimate while the true channel carries the signal.
pub fn run_trial<R: rand::Rng + ?Sized>(
    sys: &SystemConfig,
    precoder: &PrecoderSpec,
    a: &FiniteAlphabet,
    cons: &Constellation,
    epsilon: f64,
    rng: &mut R,
) -> Result<Option<TrialStats>> {
    let h_true = sample_channel(sys, rng);
    let h_bs = if epsilon > 0.0 {
        perturb_channel(&h_true, epsilon, rng)?
    } else {
        h_true.clone()
    };

    let bits: Vec<u8> = (0..sys.n_users * cons.bits_per_symbol())
        .map(|_| rng.random::<bool>() as u8)
        .collect();
    let s = cons.modulate(&bits)?;

    let precoded: Option<PrecodeResult> = match precoder {
        PrecoderSpec::Zf => discard_on_numerical(zf_precode(&h_bs, &s, sys.p_t))?,
        PrecoderSpec::ZfQuantized => discard_on_numerical(zf_quantized(&h_bs, &s, sys.p_t, a))?,
        PrecoderSpec::Ide2(cfg) => {
            match discard_on_numerical(gram_factors(&h_bs))? {
                None => None,
                Some(f) => {
                    let beta =
                        (f.trace_inverse / (sys.n_antennas as f64 * sys.p_t)).sqrt();
                    let h_tilde = h_bs.matrix().scaled(beta);
                    discard_on_numerical(ide2(&h_tilde, &s, a, cfg, beta))?
                }
            }
        }
        PrecoderSpec::Pgd { lambda, t_max } => {
            match discard_on_numerical(gram_factors(&h_bs))? {
                None => None,
                Some(f) => {
                    let beta =
                        (f.trace_inverse / (sys.n_antennas as f64 * sys.p_t)).sqrt();
                    let h_tilde = h_bs.matrix().scaled(beta);
                    discard_on_numerical(pgd_reference(&h_tilde, &s, a, *lambda, *t_max, beta))?
                }
            }
        }
        PrecoderSpec::Ide2Net(params) => {
            match discard_on_numerical(gram_factors(&h_bs))? {
                None => None,
                Some(f) => {
                    let beta =
                        (f.trace_inverse / (sys.n_antennas as f64 * sys.p_t)).sqrt();
                    let h_tilde = h_bs.matrix().scaled(beta);
                    discard_on_numerical(net_precode(params, &s, &h_tilde, a, beta))?
                }
            }
        }
    };
    let Some(res) = precoded else {
        return Ok(None);
    };

    let sigma2 = sys.sigma2();
    let y = apply_channel(&h_true, &res.x, sigma2, rng)?;
    let s_hat: Vec<Complex64> = y.iter().map(|v| v * res.beta).collect();
    let rx_bits = cons.demodulate(&s_hat);
    let bit_errors = bits
        .iter()
        .zip(&rx_bits)
        .filter(|(tx, rx)| tx != rx)
        .count() as u64;

    let hx_true = h_true.matrix().matvec(&res.x)?;
    let iui: f64 = s
        .iter()
        .zip(&hx_true)
        .map(|(sv, hv)| (sv - hv * res.beta).norm_sqr())
        .sum();
    let mse: f64 = s
        .iter()
        .zip(&s_hat)
        .map(|(sv, yv)| (sv - yv).norm_sqr())
        .sum();
    let noise_term = res.beta * res.beta * sys.n_users as f64 * sigma2;

    Ok(Some(TrialStats {
        bit_errors,
        bits: bits.len() as u64,
        mse,
        iui,
        noise_term,
    }))
}

/// Specialize the sweep's base configuration to one swept value.
fn point_config(spec: &SweepSpec, value: f64) -> Result<(SystemConfig, PrecoderSpec, f64)> {
    let mut sys = spec.sys;
    let mut precoder = spec.precoder.clone();
    let mut epsilon = 0.0;
    match spec.kind {
        SweepKind::Snr => {
            if !value.is_finite() {
                return Err(Error::Domain(format!("SNR sweep value {} is not finite", value)));
            }
            sys.snr_db = value;
        }
        SweepKind::Layers => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Domain(format!(
                    "layers sweep values must be positive integers, got {}",
                    value
                )));
            }
            let t = value as usize;
            match &mut precoder {
                PrecoderSpec::Ide2(cfg) => cfg.t_max = t,
                PrecoderSpec::Pgd { t_max, .. } => *t_max = t,
                other => {
                    return Err(Error::Domain(format!(
                        "layers sweep requires a precoder with a configurable iteration count (ide2 or pgd), got {}",
                        other.name()
                    )))
                }
            }
        }
        SweepKind::Epsilon => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Domain(format!(
                    "epsilon sweep values must lie in [0, 1], got {}",
                    value
                )));
            }
            epsilon = value;
        }
    }
    Ok((sys, precoder, epsilon))
}

/// Run the sweep: `trials_per_point` independent trials per value, in
/// parallel, reduced in trial order. Deterministic for a fixed seed.
pub fn ber_sweep(spec: &SweepSpec) -> Result<Vec<BerResult>> {
    if spec.values.is_empty() {
        return Err(Error::Domain("sweep needs at least one value".into()));
    }
    if spec.trials_per_point == 0 {
        return Err(Error::Domain("trials_per_point must be at least 1".into()));
    }
    spec.sys.validate()?;

    let mut out = Vec::with_capacity(spec.values.len());
    for (pi, &value) in spec.values.iter().enumerate() {
        let (sys, precoder, epsilon) = point_config(spec, value)?;
        let trials = spec.trials_per_point;
        let stats: Vec<Option<TrialStats>> = (0..trials)
            .into_par_iter()
            .map(|ti| {
                let stream = (pi * trials + ti) as u64;
                let mut rng = derive_rng(spec.seed, stream);
                run_trial(&sys, &precoder, &spec.alphabet, &spec.constellation, epsilon, &mut rng)
            })
            .collect::<Result<_>>()?;

        let mut bit_errors = 0u64;
        let mut bits_total = 0u64;
        let mut mse_sum = 0.0;
        let mut iui_sum = 0.0;
        let mut noise_sum = 0.0;
        let mut discarded = 0u64;
        let mut completed = 0u64;
        for s in &stats {
            match s {
                Some(t) => {
                    bit_errors += t.bit_errors;
                    bits_total += t.bits;
                    mse_sum += t.mse;
                    iui_sum += t.iui;
                    noise_sum += t.noise_term;
                    completed += 1;
                }
                None => discarded += 1,
            }
        }
        let ber = if bits_total > 0 {
            bit_errors as f64 / bits_total as f64
        } else {
            0.0
        };
        let stderr = if bits_total > 0 {
            (ber * (1.0 - ber) / bits_total as f64).sqrt()
        } else {
            0.0
        };
        let denom = completed.max(1) as f64;
        out.push(BerResult {
            sweep_value: value,
            bit_errors,
            bits_total,
            ber,
            stderr,
            mse_mean: mse_sum / denom,
            iui_mean: iui_sum / denom,
            noise_term_mean: noise_sum / denom,
            trials_discarded: discarded,
        });
    }
    Ok(out)
}

/// Render sweep results as CSV (header row, '.' decimal, full precision).
pub fn render_csv(results: &[BerResult]) -> String {
    let mut out =
        String::from("sweep_value,ber,stderr,mse_mean,iui_mean,bits_total,trials_discarded\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            full_precision(r.sweep_value),
            full_precision(r.ber),
            full_precision(r.stderr),
            full_precision(r.mse_mean),
            full_precision(r.iui_mean),
            r.bits_total,
            r.trials_discarded
        ));
    }
    out
}

/// Exhaustively minimize `||s - beta H x||^2` over `x` in the alphabet's
/// N-fold product, with beta fixed at the ZF value. Ties go to the earlier
/// candidate in lexicographic enumeration order (antenna 0 outermost,
/// alphabet points in canonical order).
///
/// Every candidate is evaluated through the same mat-vec route the rest of
/// the crate uses, so the returned residual is a true lower bound for any
/// precoder's residual on the same `(H, s, beta)`.
pub fn brute_force_precode(
    h: &ChannelRealization,
    s: &[Complex64],
    p_t: f64,
    a: &FiniteAlphabet,
) -> Result<(Vec<Complex64>, f64)> {
    let n = h.n_antennas();
    let m = a.len();
    let candidates = (m as f64).powi(n as i32);
    if candidates > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            candidates,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if s.len() != h.n_users() {
        return Err(Error::Shape(format!(
            "symbol vector has length {}, channel serves {} users",
            s.len(),
            h.n_users()
        )));
    }
    let f = gram_factors(h)?;
    let beta = (f.trace_inverse / (n as f64 * p_t)).sqrt();
    let h_tilde = h.matrix().scaled(beta);

    let mut digits = vec![0usize; n];
    let mut x: Vec<Complex64> = vec![a.points()[0]; n];
    let mut best_x = x.clone();
    let mut best_resid = f64::INFINITY;
    loop {
        let hx = h_tilde.matvec(&x)?;
        let resid: f64 = s
            .iter()
            .zip(&hx)
            .map(|(sv, hv)| (sv - hv).norm_sqr())
            .sum();
        if resid < best_resid {
            best_resid = resid;
            best_x.copy_from_slice(&x);
        }
        // odometer, antenna N-1 fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok((best_x, best_resid));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < m {
                x[pos] = a.points()[digits[pos]];
                break;
            }
            digits[pos] = 0;
            x[pos] = a.points()[0];
        }
    }
}

/// Exact scalar line search for the rescaling factor given a fixed `x`:
/// the least-squares beta restricted to positive reals,
/// `beta* = max(Re{(H x)^H s} / ||H x||^2, tiny)`.
pub fn optimal_beta(h: &ChannelRealization, x: &[Complex64], s: &[Complex64]) -> Result<f64> {
    let hx = h.matrix().matvec(x)?;
    let denom: f64 = hx.iter().map(|v| v.norm_sqr()).sum();
    if denom == 0.0 {
        return Err(Error::Numerical("H x is zero; beta is undefined".into()));
    }
    let num: f64 = hx
        .iter()
        .zip(s)
        .map(|(hv, sv)| (hv.conj() * sv).re)
        .sum();
    Ok((num / denom).max(f64::MIN_POSITIVE))
}
