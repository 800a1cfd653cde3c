//! Antenna-array, codebook, and channel physics.
//!
//! Builds uniform-sine-space DFT beam codebooks for a ULA, synthesizes
//! single-path line-of-sight channels from geometry, and computes per-beam
//! received powers and the ground-truth optimal beam. The beam power uses
//! the unconjugated transpose product `|h^T f|^2`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform linear array description. Spacing is in wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry<F = f64> {
    pub num_elements: usize,
    pub element_spacing: F,
    pub boresight_azimuth: F,
}

impl<F: Real> ArrayGeometry<F> {
    pub fn new(num_elements: usize, element_spacing: F, boresight_azimuth: F) -> Result<Self> {
        if num_elements < 1 {
            return Err(Error::Config("num_elements must be >= 1".into()));
        }
        if element_spacing <= F::zero() {
            return Err(Error::Config("element_spacing must be > 0".into()));
        }
        Ok(Self {
            num_elements,
            element_spacing,
            boresight_azimuth,
        })
    }

    /// The 16-element half-wavelength array used as the default testbed.
    pub fn ula16() -> Self {
        Self {
            num_elements: 16,
            element_spacing: F::of(0.5),
            boresight_azimuth: F::zero(),
        }
    }
}

/// A set of unit-norm beamforming vectors, each aimed at a sine-space
/// direction. Sines are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<F = f64> {
    pub num_elements: usize,
    pub num_beams: usize,
    pub weights: Vec<Vec<Complex<F>>>,
    pub steering_sines: Vec<F>,
}

/// Single-path channel between the array and a user.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel<F = f64> {
    pub coefficients: Vec<Complex<F>>,
    pub path_gain: F,
    pub aoa_azimuth: F,
}

/// Transmit power and receiver noise variance, linear scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig<F = f64> {
    pub tx_power: F,
    pub noise_variance: F,
}

/// Array response toward `theta` (radians off broadside): element `n` is
/// `(1/sqrt(N)) * exp(j*2*pi*spacing*n*sin(theta))`.
pub fn steering_vector<F: Real>(theta: F, geometry: &ArrayGeometry<F>) -> Vec<Complex<F>> {
    steering_vector_for_sine(theta.sin(), geometry)
}

/// Same as [`steering_vector`] but parameterized directly by `sin(theta)`.
pub fn steering_vector_for_sine<F: Real>(sine: F, geometry: &ArrayGeometry<F>) -> Vec<Complex<F>> {
    let n = geometry.num_elements;
    let scale = F::one() / F::of(n as f64).sqrt();
    let two_pi = F::of(2.0 * PI);
    (0..n)
        .map(|k| {
            let phase = two_pi * geometry.element_spacing * F::of(k as f64) * sine;
            Complex::new(phase.cos() * scale, phase.sin() * scale)
        })
        .collect()
}

/// Builds a codebook of `num_beams` beams uniform in sine space,
/// cell-centered: beam `m` targets `s_m = -1 + (2m+1)/M`. Weights are the
/// conjugated steering vectors so the unconjugated product `h^T f` peaks
/// on-axis.
pub fn dft_codebook<F: Real>(geometry: &ArrayGeometry<F>, num_beams: usize) -> Codebook<F> {
    assert!(num_beams >= 1, "num_beams must be >= 1");
    let mut weights = Vec::with_capacity(num_beams);
    let mut sines = Vec::with_capacity(num_beams);
    for m in 0..num_beams {
        let s = F::of(-1.0 + (2.0 * m as f64 + 1.0) / num_beams as f64);
        let w: Vec<Complex<F>> = steering_vector_for_sine(s, geometry)
            .into_iter()
            .map(|c| c.conj())
            .collect();
        weights.push(w);
        sines.push(s);
    }
    Codebook {
        num_elements: geometry.num_elements,
        num_beams,
        weights,
        steering_sines: sines,
    }
}

/// Received power `|sum_n h_n * f_n|^2` for one beam (unconjugated
/// transpose product).
pub fn beam_gain<F: Real>(channel: &Channel<F>, weight: &[Complex<F>]) -> Result<F> {
    if channel.coefficients.len() != weight.len() {
        return Err(Error::Dimension(format!(
            "channel has {} coefficients, weight has {} elements",
            channel.coefficients.len(),
            weight.len()
        )));
    }
    let mut acc = Complex::new(F::zero(), F::zero());
    for (h, f) in channel.coefficients.iter().zip(weight) {
        acc = acc + h * f;
    }
    Ok(acc.norm_sqr())
}

/// Scans the codebook and returns the argmax beam index (ties to the lowest
/// index) together with the full per-beam power vector.
pub fn optimal_beam<F: Real>(channel: &Channel<F>, codebook: &Codebook<F>) -> Result<(usize, Vec<F>)> {
    let mut powers = Vec::with_capacity(codebook.num_beams);
    for w in &codebook.weights {
        powers.push(beam_gain(channel, w)?);
    }
    let best = argmax(&powers);
    Ok((best, powers))
}

/// Argmax with ties broken by the lowest index.
pub fn argmax<F: Real>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Downlink received symbol `y = h^T f * sqrt(P_T) + sigma * n`, where `n`
/// is a caller-supplied standard complex-normal draw.
pub fn received_signal<F: Real>(
    channel: &Channel<F>,
    weight: &[Complex<F>],
    link: &LinkConfig<F>,
    noise_draw: Complex<F>,
) -> Result<Complex<F>> {
    if channel.coefficients.len() != weight.len() {
        return Err(Error::Dimension("channel/weight length mismatch".into()));
    }
    let mut acc = Complex::new(F::zero(), F::zero());
    for (h, f) in channel.coefficients.iter().zip(weight) {
        acc = acc + h * f;
    }
    let amp = link.tx_power.sqrt();
    let sigma = link.noise_variance.sqrt();
    Ok(acc * Complex::new(amp, F::zero()) + noise_draw * Complex::new(sigma, F::zero()))
}

/// Synthesizes a single LOS path from geometry: angle of arrival relative to
/// the array boresight, `1/d` amplitude law anchored at `ref_gain_at_1m`,
/// and a carrier phase `-2*pi*d/lambda`.
pub fn channel_from_geometry<F: Real>(
    user_xyz: [F; 3],
    bs_xyz: [F; 3],
    geometry: &ArrayGeometry<F>,
    ref_gain_at_1m: F,
    wavelength_m: F,
) -> Result<Channel<F>> {
    let dx = user_xyz[0] - bs_xyz[0];
    let dy = user_xyz[1] - bs_xyz[1];
    let dz = user_xyz[2] - bs_xyz[2];
    let dist = (dx * dx + dy * dy + dz * dz).sqrt();
    if dist == F::zero() {
        return Err(Error::DegenerateGeometry(
            "user and base station positions coincide".into(),
        ));
    }
    let aoa = wrap_angle(dy.atan2(dx) - geometry.boresight_azimuth);
    let path_gain = ref_gain_at_1m / dist;
    let two_pi = F::of(2.0 * PI);
    let phase = -(two_pi * dist / wavelength_m) % two_pi;
    let rot = Complex::new(phase.cos(), phase.sin());
    let scale = path_gain * F::of(geometry.num_elements as f64).sqrt();
    let coefficients = steering_vector(aoa, geometry)
        .into_iter()
        .map(|c| c * rot * Complex::new(scale, F::zero()))
        .collect();
    Ok(Channel {
        coefficients,
        path_gain,
        aoa_azimuth: aoa,
    })
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<F: Real>(a: F) -> F {
    let two_pi = F::of(2.0 * PI);
    let pi = F::of(PI);
    let mut x = a % two_pi;
    if x > pi {
        x -= two_pi;
    } else if x <= -pi {
        x += two_pi;
    }
    x
}

/// On-disk codebook form: complex weights as `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct CodebookFile<F> {
    num_elements: usize,
    num_beams: usize,
    weights: Vec<Vec<[F; 2]>>,
    steering_sines: Vec<F>,
}

impl<F: Real> Codebook<F> {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = CodebookFile {
            num_elements: self.num_elements,
            num_beams: self.num_beams,
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|c| [c.re, c.im]).collect())
                .collect(),
            steering_sines: self.steering_sines.clone(),
        };
        let out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(out, &file)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let input = BufReader::new(File::open(path)?);
        let file: CodebookFile<F> = serde_json::from_reader(input)?;
        if file.weights.len() != file.num_beams || file.steering_sines.len() != file.num_beams {
            return Err(Error::Dimension("codebook beam count mismatch".into()));
        }
        if file.weights.iter().any(|w| w.len() != file.num_elements) {
            return Err(Error::Dimension("codebook weight length mismatch".into()));
        }
        Ok(Codebook {
            num_elements: file.num_elements,
            num_beams: file.num_beams,
            weights: file
                .weights
                .into_iter()
                .map(|w| w.into_iter().map(|[re, im]| Complex::new(re, im)).collect())
                .collect(),
            steering_sines: file.steering_sines,
        })
    }
}
