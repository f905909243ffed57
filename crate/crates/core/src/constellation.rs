//! User-data constellations and the DAC output alphabet.
//!
//! [`Constellation`] carries the points a user's data symbols are drawn from
//! (unit average power, Gray bit labels); [`FiniteAlphabet`] is the discrete
//! set the per-antenna DAC can emit, together with the nearest-point
//! projection used by every finite-alphabet precoder.

use num_complex::Complex64;

use crate::{Error, Result};

/// Reflected Gray code of `k`.
fn gray(k: usize) -> usize {
    k ^ (k >> 1)
}

/// A square QAM constellation with Gray-coded bit labels and unit average
/// power.
///
/// Point `i` carries `bit_labels[i]`; the point ordering is the canonical one
/// used for demodulation tie-breaks (index 0 is the all-zeros label in the
/// first quadrant).
#[derive(Debug, Clone)]
pub struct Constellation {
    name: String,
    points: Vec<Complex64>,
    bit_labels: Vec<Vec<u8>>,
    label_to_index: Vec<usize>,
    bits_per_symbol: usize,
}

impl Constellation {
    /// Square QAM of order `m` (a power of 4: 4, 16, 64, ...).
    ///
    /// Per-axis amplitudes are the usual odd-integer grid scaled to unit
    /// average power, Gray-labelled independently per I/Q axis. Label bits are
    /// the I-axis Gray code followed by the Q-axis Gray code.
    pub fn square_qam(m: usize) -> Result<Self> {
        if m < 4 || !m.is_power_of_two() || !(m.trailing_zeros() as usize).is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "square QAM order must be a power of 4, got {}",
                m
            )));
        }
        let bits_per_symbol = m.trailing_zeros() as usize;
        let side = 1usize << (bits_per_symbol / 2);
        // E{|c|^2} = 2 * (side^2 - 1) / 3 * unit^2 = 1
        let unit = (3.0 / (2.0 * (side * side - 1) as f64)).sqrt();
        let amp = |k: usize| ((side - 1) as f64 - 2.0 * k as f64) * unit;

        let half_bits = bits_per_symbol / 2;
        let mut points = Vec::with_capacity(m);
        let mut bit_labels = Vec::with_capacity(m);
        let mut label_to_index = vec![usize::MAX; m];
        for ki in 0..side {
            for kq in 0..side {
                let idx = points.len();
                points.push(Complex64::new(amp(ki), amp(kq)));
                let label = (gray(ki) << half_bits) | gray(kq);
                let mut bits = Vec::with_capacity(bits_per_symbol);
                for b in (0..bits_per_symbol).rev() {
                    bits.push(((label >> b) & 1) as u8);
                }
                bit_labels.push(bits);
                label_to_index[label] = idx;
            }
        }
        Ok(Self {
            name: match m {
                4 => "qpsk".to_string(),
                _ => format!("{}qam", m),
            },
            points,
            bit_labels,
            label_to_index,
            bits_per_symbol,
        })
    }

    /// QPSK, `{(+-1 +- j)/sqrt(2)}`.
    pub fn qpsk() -> Self {
        Self::square_qam(4).expect("qpsk is a valid order")
    }

    /// 16-QAM, the default user constellation.
    pub fn qam16() -> Self {
        Self::square_qam(16).expect("16-qam is a valid order")
    }

    /// Look a constellation up by its CLI name (`"qpsk"`, `"16qam"`, ...).
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qpsk" | "4qam" => Ok(Self::qpsk()),
            "16qam" => Ok(Self::qam16()),
            "64qam" => Self::square_qam(64),
            other => Err(Error::Domain(format!(
                "unknown constellation '{}'; expected qpsk or 16qam",
                other
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of constellation points `M`.
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Bit label of point `index`.
    pub fn label(&self, index: usize) -> &[u8] {
        &self.bit_labels[index]
    }

    /// Map a bit string (values 0/1, length a multiple of `bits_per_symbol`)
    /// to constellation symbols.
    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::Shape(format!(
                "bit string length {} is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        let mut symbols = Vec::with_capacity(bits.len() / self.bits_per_symbol);
        for chunk in bits.chunks(self.bits_per_symbol) {
            let mut label = 0usize;
            for &b in chunk {
                if b > 1 {
                    return Err(Error::Domain(format!("bit value {} is not 0 or 1", b)));
                }
                label = (label << 1) | b as usize;
            }
            symbols.push(self.points[self.label_to_index[label]]);
        }
        Ok(symbols)
    }

    /// Index of the Euclidean-nearest point; ties go to the smaller index.
    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Hard-decision demodulation of one received symbol.
    pub fn demodulate_symbol(&self, y: Complex64) -> &[u8] {
        &self.bit_labels[self.nearest(y)]
    }

    /// Hard-decision demodulation of a symbol vector into a bit string.
    pub fn demodulate(&self, ys: &[Complex64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(ys.len() * self.bits_per_symbol);
        for &y in ys {
            bits.extend_from_slice(self.demodulate_symbol(y));
        }
        bits
    }
}

/// The discrete set the DAC on each antenna can emit, with the per-antenna
/// transmit power the set satisfies.
#[derive(Debug, Clone)]
pub struct FiniteAlphabet {
    points: Vec<Complex64>,
    per_antenna_power: f64,
    one_bit: bool,
}

impl FiniteAlphabet {
    /// One-bit DACs: `sqrt(p_t/2) * {+1+j, +1-j, -1+j, -1-j}`, so every point
    /// has `|x|^2 = p_t` exactly. The ordering puts the positive half first,
    /// which makes the projection tie-break map boundary values to `+`.
    pub fn one_bit(p_t: f64) -> Result<Self> {
        if !(p_t > 0.0) || !p_t.is_finite() {
            return Err(Error::Domain(format!(
                "per-antenna power must be positive and finite, got {}",
                p_t
            )));
        }
        let a = (p_t / 2.0).sqrt();
        Ok(Self {
            points: vec![
                Complex64::new(a, a),
                Complex64::new(a, -a),
                Complex64::new(-a, a),
                Complex64::new(-a, -a),
            ],
            per_antenna_power: p_t,
            one_bit: true,
        })
    }

    /// An arbitrary finite alphabet. The point order is the canonical order
    /// used for projection tie-breaks.
    pub fn new(points: Vec<Complex64>, per_antenna_power: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("alphabet must not be empty".into()));
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::Domain("alphabet points must be finite".into()));
        }
        Ok(Self {
            points,
            per_antenna_power,
            one_bit: false,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn per_antenna_power(&self) -> f64 {
        self.per_antenna_power
    }

    /// Largest point magnitude, the bound every damped iterate stays inside.
    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Exact set membership (projection outputs are table entries, so
    /// bit-level comparison is the right test).
    pub fn contains(&self, v: Complex64) -> bool {
        self.points.contains(&v)
    }

    /// Euclidean-nearest alphabet point; ties go to the earliest point in the
    /// canonical order, which maps Re = 0 / Im = 0 to the positive half.
    #[inline]
    pub fn project_symbol(&self, v: Complex64) -> Complex64 {
        if self.one_bit {
            // Nearest one-bit point is the quadrant by sign; -0.0 >= 0.0 holds,
            // so zeros land on the positive half exactly like the scan below.
            let idx = if v.re >= 0.0 {
                if v.im >= 0.0 {
                    0
                } else {
                    1
                }
            } else if v.im >= 0.0 {
                2
            } else {
                3
            };
            return self.points[idx];
        }
        let mut best = self.points[0];
        let mut best_d = f64::INFINITY;
        for &p in &self.points {
            let d = (v - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
        best
    }

    /// Element-wise projection of a vector onto the alphabet.
    pub fn project(&self, v: &[Complex64]) -> Vec<Complex64> {
        v.iter().map(|&z| self.project_symbol(z)).collect()
    }
}
