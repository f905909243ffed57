//! Baseline precoders and the IDE2 iterative discrete-estimation precoder.
//!
//! IDE2 alternates a diagonally-unbiased linear estimate with a projection
//! onto the DAC alphabet, damped to keep the discrete jumps from oscillating:
//!
//! ```text
//! W_u      = [diag(H~^H H~)]^-1 H~^H          (computed once, H~ = beta * H)
//! r^t      = x_d^t + gamma^t W_u (s - H~ x_d^t)
//! x^{t+1}  = project(r^t)
//! x_d^{t+1} = alpha^t x_d^t + (1 - alpha^t) x^{t+1}
//! ```
//!
//! `W_u` is applied as two matrix-vector products plus a diagonal scale and is
//! never materialized, so one iteration costs `2NK + O(N)` complex
//! multiplications. The same layer kernel runs both the fixed-parameter IDE2
//! and the trainable unfolded network; the two are bit-identical when the
//! per-layer scalars agree.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{gram_factors, ChannelRealization};
use crate::constellation::FiniteAlphabet;
use crate::linalg::CMatrix;
use crate::{Error, Result};

/// Output of a precode call.
#[derive(Debug, Clone)]
pub struct PrecodeResult {
    /// Precoded transmit vector, length N.
    pub x: Vec<Complex64>,
    /// ZF precoding factor used to form `h_tilde` / rescale at the receiver.
    pub beta: f64,
    /// Iterations executed (0 for the direct ZF precoders).
    pub iterations_run: usize,
    /// Complex multiplications performed (close analytic count for the
    /// direct ZF path, exact operation count for the iterative precoders;
    /// complex-by-real scalings count as one).
    pub mult_count: u64,
}

/// Fixed-parameter IDE2 configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ide2Config {
    /// Iteration count T.
    pub t_max: usize,
    /// Damping factor.
    pub alpha: f64,
    /// Step-size scale on the unbiased linear estimate.
    pub gamma: f64,
}

impl Default for Ide2Config {
    fn default() -> Self {
        Self {
            t_max: 20,
            alpha: 0.95,
            gamma: 1.0,
        }
    }
}

impl Ide2Config {
    pub fn validate(&self) -> Result<()> {
        if self.t_max < 1 {
            return Err(Error::Domain("t_max must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!(
                "alpha must be in [0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Domain(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Everything one layer of the unrolled iteration produced. `x_d_in` is the
/// damped state entering the layer, `u` the diagonally-scaled linear estimate
/// `W_u (s - H~ x_d)` before the step-size scale, `r` the linear output, and
/// `x_next` the projected iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub x_d_in: Vec<Complex64>,
    pub u: Vec<Complex64>,
    pub r: Vec<Complex64>,
    pub x_next: Vec<Complex64>,
}

/// Full per-layer trajectory of an IDE2 / unfolded-network run.
#[derive(Debug, Clone, PartialEq)]
pub struct Ide2Trace {
    pub layers: Vec<LayerTrace>,
    /// Damped state after the last layer, `x_d^{T+1}`.
    pub x_d_final: Vec<Complex64>,
    /// Last projected iterate, `x^{T+1}`.
    pub last_projected: Vec<Complex64>,
}

pub(crate) struct KernelOutput {
    pub x_d_final: Vec<Complex64>,
    pub last_projected: Vec<Complex64>,
    pub layers: Vec<LayerTrace>,
    pub mult_count: u64,
}

/// Run T layers of the damped, projected iteration. `projection = None` runs
/// the relaxed network (projections replaced by the identity), which only the
/// gradient checks use. `record` keeps the per-layer intermediates.
///
/// The arithmetic sequence is identical whether or not recording is on and
/// whether the scalars come in as per-layer vectors or splatted constants.
pub(crate) fn run_unrolled(
    h_tilde: &CMatrix,
    s: &[Complex64],
    projection: Option<&FiniteAlphabet>,
    gammas: &[f64],
    alphas: &[f64],
    record: bool,
) -> Result<KernelOutput> {
    let k = h_tilde.rows();
    let n = h_tilde.cols();
    if s.len() != k {
        return Err(Error::Shape(format!(
            "symbol vector has length {}, channel serves {} users",
            s.len(),
            k
        )));
    }
    if gammas.len() != alphas.len() || gammas.is_empty() {
        return Err(Error::Shape(format!(
            "need matching non-empty per-layer scalars, got {} gammas / {} alphas",
            gammas.len(),
            alphas.len()
        )));
    }

    let d = h_tilde.col_norms_sqr();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "column {} of h_tilde has squared norm {:.3e}; the unbiasing diagonal is singular",
            i, d[i]
        )));
    }

    let mut mults: u64 = 0;
    let mut x_d = vec![Complex64::new(0.0, 0.0); n];
    let mut last_projected = vec![Complex64::new(0.0, 0.0); n];
    let mut layers = Vec::with_capacity(if record { gammas.len() } else { 0 });

    for (&gamma, &alpha) in gammas.iter().zip(alphas) {
        // s - H~ x_d
        let hx = h_tilde.matvec(&x_d)?;
        mults += (n * k) as u64;
        let resid: Vec<Complex64> = s.iter().zip(&hx).map(|(sv, hv)| sv - hv).collect();

        // W_u resid = diag(d)^-1 H~^H resid
        let mut u = h_tilde.adjoint_matvec(&resid)?;
        mults += (n * k) as u64;
        for (uv, dv) in u.iter_mut().zip(&d) {
            *uv /= *dv;
        }
        mults += n as u64;

        let r: Vec<Complex64> = x_d.iter().zip(&u).map(|(xd, uv)| xd + uv * gamma).collect();
        mults += n as u64;

        let x_next = match projection {
            Some(a) => a.project(&r),
            None => r.clone(),
        };

        let x_d_next: Vec<Complex64> = x_d
            .iter()
            .zip(&x_next)
            .map(|(xd, xn)| xd * alpha + xn * (1.0 - alpha))
            .collect();
        mults += 2 * n as u64;

        if record {
            layers.push(LayerTrace {
                x_d_in: x_d.clone(),
                u: u.clone(),
                r: r.clone(),
                x_next: x_next.clone(),
            });
        }
        last_projected = x_next;
        x_d = x_d_next;
    }

    Ok(KernelOutput {
        x_d_final: x_d,
        last_projected,
        layers,
        mult_count: mults,
    })
}

/// Analytic complex-multiplication count for the ZF path (Gram build,
/// Cholesky, K + 1 triangular solves, adjoint mat-vec, final scale).
fn zf_mult_estimate(n: usize, k: usize) -> u64 {
    (n * k * (k + 1) / 2 + k * k * k / 6 + (k + 1) * k * k + n * k + n) as u64
}

/// Unquantized zero-forcing: `x = H^H (H H^H)^-1 s / beta`, which nulls the
/// interuser interference exactly (`beta H x = s`).
pub fn zf_precode(h: &ChannelRealization, s: &[Complex64], p_t: f64) -> Result<PrecodeResult> {
    if s.len() != h.n_users() {
        return Err(Error::Shape(format!(
            "symbol vector has length {}, channel serves {} users",
            s.len(),
            h.n_users()
        )));
    }
    let f = gram_factors(h)?;
    let beta = (f.trace_inverse / (h.n_antennas() as f64 * p_t)).sqrt();
    let z = f.chol.solve(s)?;
    let mut x = h.matrix().adjoint_matvec(&z)?;
    let inv_beta = 1.0 / beta;
    for v in &mut x {
        *v *= inv_beta;
    }
    Ok(PrecodeResult {
        x,
        beta,
        iterations_run: 0,
        mult_count: zf_mult_estimate(h.n_antennas(), h.n_users()),
    })
}

/// Zero-forcing directly followed by quantization: `x = project(x_zf)`,
/// keeping the ZF beta.
pub fn zf_quantized(
    h: &ChannelRealization,
    s: &[Complex64],
    p_t: f64,
    a: &FiniteAlphabet,
) -> Result<PrecodeResult> {
    let mut res = zf_precode(h, s, p_t)?;
    res.x = a.project(&res.x);
    Ok(res)
}

/// The IDE2 precoder: T damped projected iterations with fixed scalars.
/// `h_tilde` must be the scaled channel `beta * H`; `beta` is carried into
/// the result for receiver-side rescaling.
///
/// Output is the last projected iterate `x^{T+1}`.
pub fn ide2(
    h_tilde: &CMatrix,
    s: &[Complex64],
    a: &FiniteAlphabet,
    cfg: &Ide2Config,
    beta: f64,
) -> Result<PrecodeResult> {
    cfg.validate()?;
    let gammas = vec![cfg.gamma; cfg.t_max];
    let alphas = vec![cfg.alpha; cfg.t_max];
    let run = run_unrolled(h_tilde, s, Some(a), &gammas, &alphas, false)?;
    Ok(PrecodeResult {
        x: run.last_projected,
        beta,
        iterations_run: cfg.t_max,
        mult_count: run.mult_count,
    })
}

/// IDE2 with the full per-layer trajectory, for trajectory-equality checks
/// against the unfolded network.
pub fn ide2_with_trace(
    h_tilde: &CMatrix,
    s: &[Complex64],
    a: &FiniteAlphabet,
    cfg: &Ide2Config,
    beta: f64,
) -> Result<(PrecodeResult, Ide2Trace)> {
    cfg.validate()?;
    let gammas = vec![cfg.gamma; cfg.t_max];
    let alphas = vec![cfg.alpha; cfg.t_max];
    let run = run_unrolled(h_tilde, s, Some(a), &gammas, &alphas, true)?;
    Ok((
        PrecodeResult {
            x: run.last_projected.clone(),
            beta,
            iterations_run: cfg.t_max,
            mult_count: run.mult_count,
        },
        Ide2Trace {
            layers: run.layers,
            x_d_final: run.x_d_final,
            last_projected: run.last_projected,
        },
    ))
}

/// Diagnostic for the unbiasing construction: returns `diag(W_u H~)`, whose
/// entries are 1 by construction of `W_u = [diag(H~^H H~)]^-1 H~^H`.
pub fn unbiasing_check(h_tilde: &CMatrix) -> Result<Vec<Complex64>> {
    let d = h_tilde.col_norms_sqr();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Numerical(format!(
            "column {} of h_tilde has zero norm",
            i
        )));
    }
    let k = h_tilde.rows();
    let n = h_tilde.cols();
    let mut diag = Vec::with_capacity(n);
    for c in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..k {
            let h = h_tilde.get(r, c);
            acc += h.conj() * h;
        }
        diag.push(acc / d[c]);
    }
    Ok(diag)
}

/// Classical projected gradient descent on `||s - H~ x||^2` with a constant
/// scalar step `lambda`, as the biased-update reference IDE2 improves on.
/// The gradient step uses `H~^H` (the dimensionally valid adjoint).
pub fn pgd_reference(
    h_tilde: &CMatrix,
    s: &[Complex64],
    a: &FiniteAlphabet,
    lambda: f64,
    t_max: usize,
    beta: f64,
) -> Result<PrecodeResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be >= 0, got {}", lambda)));
    }
    if t_max < 1 {
        return Err(Error::Domain("t_max must be at least 1".into()));
    }
    let k = h_tilde.rows();
    let n = h_tilde.cols();
    if s.len() != k {
        return Err(Error::Shape(format!(
            "symbol vector has length {}, channel serves {} users",
            s.len(),
            k
        )));
    }
    let mut mults: u64 = 0;
    let mut x_d = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..t_max {
        let hx = h_tilde.matvec(&x_d)?;
        mults += (n * k) as u64;
        let resid: Vec<Complex64> = s.iter().zip(&hx).map(|(sv, hv)| sv - hv).collect();
        let g = h_tilde.adjoint_matvec(&resid)?;
        mults += (n * k) as u64;
        let r: Vec<Complex64> = x_d.iter().zip(&g).map(|(xd, gv)| xd + gv * lambda).collect();
        mults += n as u64;
        x_d = a.project(&r);
    }
    Ok(PrecodeResult {
        x: x_d,
        beta,
        iterations_run: t_max,
        mult_count: mults,
    })
}
