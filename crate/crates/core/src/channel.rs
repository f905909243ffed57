//! Rayleigh channel realizations, noise, SNR bookkeeping, the ZF precoding
//! factor beta, and the CSI-error model.
//!
//! Every operation takes an explicit random source. Trial-level parallelism
//! derives one independent ChaCha stream per trial via [`derive_rng`], so
//! results do not depend on scheduling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMatrix, Cholesky};
use crate::{Error, Result};

/// Gram matrices with a 1-norm condition number above this are treated as
/// numerically untrustworthy; the harness discards (and counts) such trials.
pub const CONDITION_LIMIT: f64 = 1e12;

/// System-level dimensions and power/noise bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas `N`.
    pub n_antennas: usize,
    /// Single-antenna users `K`.
    pub n_users: usize,
    /// Per-antenna transmit power `P_t` (watts).
    pub p_t: f64,
    /// SNR in dB, defined as `N * P_t / sigma^2` (includes the array gain).
    pub snr_db: f64,
}

impl SystemConfig {
    pub fn new(n_antennas: usize, n_users: usize, p_t: f64, snr_db: f64) -> Result<Self> {
        let cfg = Self {
            n_antennas,
            n_users,
            p_t,
            snr_db,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users < 1 || self.n_antennas < self.n_users {
            return Err(Error::Domain(format!(
                "need N >= K >= 1, got N = {}, K = {}",
                self.n_antennas, self.n_users
            )));
        }
        if !(self.p_t > 0.0) || !self.p_t.is_finite() {
            return Err(Error::Domain(format!("p_t must be positive, got {}", self.p_t)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Domain(format!("snr_db must be finite, got {}", self.snr_db)));
        }
        Ok(())
    }

    /// Noise variance `sigma^2 = N * P_t / 10^(snr_db / 10)`.
    pub fn sigma2(&self) -> f64 {
        self.n_antennas as f64 * self.p_t / 10f64.powf(self.snr_db / 10.0)
    }

    /// Inverse of [`Self::sigma2`]: the SNR in dB that yields `sigma2`.
    pub fn snr_db_for_sigma2(&self, sigma2: f64) -> f64 {
        10.0 * (self.n_antennas as f64 * self.p_t / sigma2).log10()
    }
}

/// One draw of the downlink channel: a K x N matrix with i.i.d. unit-variance
/// circularly-symmetric complex Gaussian entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    matrix: CMatrix,
}

impl ChannelRealization {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if matrix.rows() > matrix.cols() || matrix.rows() == 0 {
            return Err(Error::Shape(format!(
                "channel must be K x N with 1 <= K <= N, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Users `K`.
    pub fn n_users(&self) -> usize {
        self.matrix.rows()
    }

    /// Antennas `N`.
    pub fn n_antennas(&self) -> usize {
        self.matrix.cols()
    }
}

/// A deterministically derived per-trial random stream. The base seed picks
/// the experiment; the stream index picks the trial. Distinct streams are
/// statistically independent, so trials can run on any thread in any order.
pub fn derive_rng(base_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(stream);
    rng
}

/// One `CN(0, 1)` draw: real and imaginary parts each `N(0, 1/2)`.
#[inline]
pub fn sample_cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Draw a fresh K x N Rayleigh channel.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let m = CMatrix::from_fn(cfg.n_users, cfg.n_antennas, |_, _| sample_cn01(rng));
    ChannelRealization { matrix: m }
}

/// CSI-error model: `H_hat = sqrt(1 - eps) * H + sqrt(eps) * E` with `E`
/// i.i.d. `CN(0, 1)`, so the per-entry variance stays 1. `eps = 0` returns
/// the input bit-for-bit; `eps = 1` is a channel-independent draw.
pub fn perturb_channel<R: Rng + ?Sized>(
    h: &ChannelRealization,
    epsilon: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!(
            "epsilon must be in [0, 1], got {}",
            epsilon
        )));
    }
    if epsilon == 0.0 {
        return Ok(h.clone());
    }
    let keep = (1.0 - epsilon).sqrt();
    let err = epsilon.sqrt();
    let m = CMatrix::from_fn(h.n_users(), h.n_antennas(), |r, c| {
        h.matrix().get(r, c) * keep + sample_cn01(rng) * err
    });
    Ok(ChannelRealization { matrix: m })
}

/// Cholesky factorization of the K x K Gram matrix `H H^H` plus the scalars
/// the precoders need from it. The 1-norm condition number is exact (the
/// inverse's columns are all solved anyway for its trace).
pub struct GramFactors {
    pub chol: Cholesky,
    pub trace_inverse: f64,
    pub condition_one: f64,
}

/// Factor `H H^H` and compute `tr((H H^H)^-1)` and the exact 1-norm condition
/// number, via one Cholesky factorization and K unit-vector solves. Fails on
/// singular or ill-conditioned Grams (condition above [`CONDITION_LIMIT`]).
pub fn gram_factors(h: &ChannelRealization) -> Result<GramFactors> {
    let k = h.n_users();
    let gram = h.matrix().gram();
    let norm_one = gram.norm_one();
    let chol = Cholesky::factor(&gram)?;
    let mut trace = 0.0;
    let mut inv_norm_one: f64 = 0.0;
    let mut e = vec![Complex64::new(0.0, 0.0); k];
    for j in 0..k {
        e[j] = Complex64::new(1.0, 0.0);
        let col = chol.solve(&e)?;
        e[j] = Complex64::new(0.0, 0.0);
        trace += col[j].re;
        inv_norm_one = inv_norm_one.max(col.iter().map(|z| z.norm()).sum());
    }
    let condition_one = norm_one * inv_norm_one;
    if !condition_one.is_finite() || condition_one > CONDITION_LIMIT {
        return Err(Error::Numerical(format!(
            "Gram condition number {:.3e} exceeds {:.1e}",
            condition_one, CONDITION_LIMIT
        )));
    }
    Ok(GramFactors {
        chol,
        trace_inverse: trace,
        condition_one,
    })
}

/// ZF precoding factor `beta = sqrt(tr((H H^H)^-1) / (N * P_t))`.
pub fn precoding_factor_beta(h: &ChannelRealization, p_t: f64) -> Result<f64> {
    let f = gram_factors(h)?;
    Ok((f.trace_inverse / (h.n_antennas() as f64 * p_t)).sqrt())
}

/// `y = H x + n` with `n` i.i.d. complex Gaussian of variance `sigma2`
/// (`sigma2 = 0` is the noiseless channel).
pub fn apply_channel<R: Rng + ?Sized>(
    h: &ChannelRealization,
    x: &[Complex64],
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let mut y = h.matrix().matvec(x)?;
    if sigma2 > 0.0 {
        let scale = sigma2.sqrt();
        for v in &mut y {
            *v += sample_cn01(rng) * scale;
        }
    }
    Ok(y)
}
