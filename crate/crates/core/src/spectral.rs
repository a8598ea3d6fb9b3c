//! Two-dimensional Fourier machinery.
//!
//! Every map this crate stores (amplitude, phase, distance, sensitivity) uses
//! the centered layout: the DC term lives at row `h / 2`, column `w / 2`, and
//! centered position `(r, c)` holds the frequency `(r - h / 2, c - w / 2)`.
//! Conversion to the natural FFT order happens only inside this module.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::{check_finite, Image};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place unnormalized 2-D transform of a row-major `h x w` buffer.
fn transform_2d(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let row_fft = plan(w, inverse);
    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(w) {
        row_fft.process_with_scratch(row, &mut scratch);
    }
    let col_fft = plan(h, inverse);
    let mut scratch = vec![Complex64::default(); col_fft.get_inplace_scratch_len()];
    let mut column = vec![Complex64::default(); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = buf[r * w + c];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for r in 0..h {
            buf[r * w + c] = column[r];
        }
    }
}

/// Natural-order forward DFT of a real channel (DC at index 0, unnormalized).
pub fn fft2_natural(channel: &[f64], h: usize, w: usize) -> Result<Vec<Complex64>> {
    check_dims(channel.len(), h, w)?;
    check_finite(channel)?;
    let mut buf: Vec<Complex64> = channel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(&mut buf, h, w, false);
    Ok(buf)
}

/// Natural-order inverse DFT, normalized by `1 / (h w)`.
pub fn ifft2_natural(mut coeffs: Vec<Complex64>, h: usize, w: usize) -> Result<Vec<Complex64>> {
    check_dims(coeffs.len(), h, w)?;
    transform_2d(&mut coeffs, h, w, true);
    let scale = 1.0 / (h * w) as f64;
    for v in &mut coeffs {
        *v *= scale;
    }
    Ok(coeffs)
}

fn check_dims(len: usize, h: usize, w: usize) -> Result<()> {
    if h < 2 || w < 2 {
        return Err(Error::shape(format!("channel must be at least 2x2, got {h}x{w}")));
    }
    if len != h * w {
        return Err(Error::shape(format!(
            "expected {} values for {h}x{w}, got {len}",
            h * w
        )));
    }
    Ok(())
}

/// Natural index of centered position `r` along an axis of length `n`.
#[inline]
fn centered_to_natural(r: usize, n: usize) -> usize {
    (r + n - n / 2) % n
}

#[inline]
fn natural_to_centered(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

/// Reorders a natural-order map into the centered layout.
pub fn to_centered<T: Copy>(natural: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let k = centered_to_natural(r, h);
        for c in 0..w {
            out.push(natural[k * w + centered_to_natural(c, w)]);
        }
    }
    out
}

/// Reorders a centered map back into natural FFT order.
pub fn to_natural<T: Copy>(centered: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(h * w);
    for k in 0..h {
        let r = natural_to_centered(k, h);
        for l in 0..w {
            out.push(centered[r * w + natural_to_centered(l, w)]);
        }
    }
    out
}

/// Signed frequency offset from DC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrequencyIndex {
    pub i: i64,
    pub j: i64,
}

impl FrequencyIndex {
    pub const DC: FrequencyIndex = FrequencyIndex { i: 0, j: 0 };

    pub fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }

    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        let in_range = |v: i64, n: usize| {
            let lo = -((n / 2) as i64);
            let hi = n.div_ceil(2) as i64 - 1;
            (lo..=hi).contains(&v)
        };
        if in_range(self.i, h) && in_range(self.j, w) {
            Ok(())
        } else {
            Err(Error::FrequencyOutOfBounds {
                i: self.i,
                j: self.j,
                h,
                w,
            })
        }
    }

    /// Frequency at centered position `(row, col)`.
    pub fn from_centered(row: usize, col: usize, h: usize, w: usize) -> Self {
        Self {
            i: row as i64 - (h / 2) as i64,
            j: col as i64 - (w / 2) as i64,
        }
    }

    /// Centered position `(row, col)`; assumes the index is in bounds.
    pub fn centered_position(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (self.i + (h / 2) as i64) as usize,
            (self.j + (w / 2) as i64) as usize,
        )
    }

    pub fn centered_offset(&self, h: usize, w: usize) -> usize {
        let (r, c) = self.centered_position(h, w);
        r * w + c
    }

    /// Natural FFT position `(k, l)`.
    pub fn natural_position(&self, h: usize, w: usize) -> (usize, usize) {
        (
            self.i.rem_euclid(h as i64) as usize,
            self.j.rem_euclid(w as i64) as usize,
        )
    }

    /// The conjugate partner `(-i, -j)`, wrapped back into bounds.
    pub fn conjugate(&self, h: usize, w: usize) -> Self {
        let (k, l) = self.natural_position(h, w);
        let (ck, cl) = ((h - k) % h, (w - l) % w);
        Self::from_centered(natural_to_centered(ck, h), natural_to_centered(cl, w), h, w)
    }

    /// True when the frequency is its own conjugate (DC and Nyquist points).
    pub fn is_self_conjugate(&self, h: usize, w: usize) -> bool {
        self.conjugate(h, w) == *self
    }

    pub fn radius(&self) -> f64 {
        ((self.i * self.i + self.j * self.j) as f64).sqrt()
    }
}

/// One representative per conjugate pair, in centered row-major order.
///
/// A frequency is kept when its centered offset is not larger than its
/// conjugate's, so self-conjugate frequencies are always included.
pub fn half_plane(h: usize, w: usize) -> Vec<FrequencyIndex> {
    let mut out = Vec::with_capacity(h * w / 2 + 2);
    for r in 0..h {
        for c in 0..w {
            let f = FrequencyIndex::from_centered(r, c, h, w);
            if f.centered_offset(h, w) <= f.conjugate(h, w).centered_offset(h, w) {
                out.push(f);
            }
        }
    }
    out
}

/// Centered amplitude and phase of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
}

impl Spectrum {
    pub fn new(height: usize, width: usize, amplitude: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        check_dims(amplitude.len(), height, width)?;
        if phase.len() != amplitude.len() {
            return Err(Error::shape(format!(
                "amplitude has {} entries but phase has {}",
                amplitude.len(),
                phase.len()
            )));
        }
        check_finite(&amplitude)?;
        check_finite(&phase)?;
        if let Some(k) = amplitude.iter().position(|&a| a < 0.0) {
            return Err(Error::invalid(format!(
                "negative amplitude {} at index {k}",
                amplitude[k]
            )));
        }
        Ok(Self {
            height,
            width,
            amplitude,
            phase,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.amplitude, self.phase)
    }

    pub fn amplitude_at(&self, idx: FrequencyIndex) -> f64 {
        self.amplitude[idx.centered_offset(self.height, self.width)]
    }

    pub fn phase_at(&self, idx: FrequencyIndex) -> f64 {
        self.phase[idx.centered_offset(self.height, self.width)]
    }
}

/// Phase in `(-pi, pi]`.
fn principal_arg(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Forward transform of one real channel into a centered spectrum.
pub fn fft2(channel: &[f64], h: usize, w: usize) -> Result<Spectrum> {
    let coeffs = to_centered(&fft2_natural(channel, h, w)?, h, w);
    let amplitude = coeffs.iter().map(|z| z.norm()).collect();
    let phase = coeffs.iter().map(|&z| principal_arg(z)).collect();
    Ok(Spectrum {
        height: h,
        width: w,
        amplitude,
        phase,
    })
}

/// Real part of an inverse transform, with the discarded imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct Inverse {
    pub values: Vec<f64>,
    /// Largest absolute imaginary component that was dropped.
    pub imag_residual: f64,
}

/// Inverse transform of a centered amplitude/phase pair.
pub fn ifft2(spectrum: &Spectrum) -> Result<Inverse> {
    ifft2_parts(
        spectrum.amplitude(),
        spectrum.phase(),
        spectrum.height(),
        spectrum.width(),
    )
}

/// Same as [`ifft2`] on raw centered slices; rejects shape mismatches.
pub fn ifft2_parts(amplitude: &[f64], phase: &[f64], h: usize, w: usize) -> Result<Inverse> {
    check_dims(amplitude.len(), h, w)?;
    if phase.len() != amplitude.len() {
        return Err(Error::shape(format!(
            "amplitude has {} entries but phase has {}",
            amplitude.len(),
            phase.len()
        )));
    }
    let centered: Vec<Complex64> = amplitude
        .iter()
        .zip(phase)
        .map(|(&a, &p)| Complex64::from_polar(a, p))
        .collect();
    let out = ifft2_natural(to_natural(&centered, h, w), h, w)?;
    let imag_residual = out.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    Ok(Inverse {
        values: out.into_iter().map(|z| z.re).collect(),
        imag_residual,
    })
}

/// Unit-norm real sinusoid carrying the frequency pair `(i, j)`, `(-i, -j)`.
///
/// Self-conjugate indices (DC, Nyquist lines) use their single real element;
/// the result is normalized the same way.
pub fn fourier_basis_image(idx: FrequencyIndex, h: usize, w: usize) -> Result<Image> {
    Image::new(h, w, 1, fourier_basis(idx, h, w)?)
}

/// Plane of [`fourier_basis_image`] without the image wrapper.
pub fn fourier_basis(idx: FrequencyIndex, h: usize, w: usize) -> Result<Vec<f64>> {
    check_dims(h * w, h, w)?;
    idx.validate(h, w)?;
    let mut hermitian = vec![Complex64::default(); h * w];
    let (k, l) = idx.natural_position(h, w);
    let (ck, cl) = idx.conjugate(h, w).natural_position(h, w);
    hermitian[k * w + l] = Complex64::new(1.0, 0.0);
    hermitian[ck * w + cl] = Complex64::new(1.0, 0.0);
    let spatial = ifft2_natural(hermitian, h, w)?;
    let norm = spatial.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
    Ok(spatial.into_iter().map(|z| z.re / norm).collect())
}

/// The random sign `r` of a basis perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// `image + sign * magnitude * U_ij`, the same sign on every channel.
pub fn perturb(image: &Image, idx: FrequencyIndex, magnitude: f64, sign: Sign) -> Result<Image> {
    let signs = vec![sign; image.channels()];
    perturb_per_channel(image, idx, magnitude, &signs)
}

/// Basis perturbation with an independent random sign per channel.
pub fn perturb_random<R: Rng + ?Sized>(
    image: &Image,
    idx: FrequencyIndex,
    magnitude: f64,
    rng: &mut R,
) -> Result<Image> {
    let signs: Vec<Sign> = (0..image.channels()).map(|_| Sign::random(rng)).collect();
    perturb_per_channel(image, idx, magnitude, &signs)
}

/// Basis perturbation with one explicit sign per channel. Output is not clamped.
pub fn perturb_per_channel(
    image: &Image,
    idx: FrequencyIndex,
    magnitude: f64,
    signs: &[Sign],
) -> Result<Image> {
    let basis = fourier_basis(idx, image.height(), image.width())?;
    add_basis(image, &basis, magnitude, signs)
}

/// Adds `sign_c * magnitude * basis` to each channel `c`.
pub fn add_basis(image: &Image, basis: &[f64], magnitude: f64, signs: &[Sign]) -> Result<Image> {
    if !magnitude.is_finite() || magnitude < 0.0 {
        return Err(Error::invalid(format!(
            "perturbation magnitude must be finite and >= 0, got {magnitude}"
        )));
    }
    if basis.len() != image.plane_len() {
        return Err(Error::shape("basis does not match image plane"));
    }
    if signs.len() != image.channels() {
        return Err(Error::shape(format!(
            "{} signs for {} channels",
            signs.len(),
            image.channels()
        )));
    }
    let mut out = image.clone();
    for (c, sign) in signs.iter().enumerate() {
        let scale = sign.value() * magnitude;
        for (v, b) in out.channel_mut(c).iter_mut().zip(basis) {
            *v += scale * b;
        }
    }
    Ok(out)
}
