//! Direct parameter generation: sample the eigenvalues `Λ` and an
//! eigenvector basis directly, so the recurrent matrix is never formed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};

use crate::config::EsnConfig;
use crate::error::{EsnError, Result};
use crate::linalg::{self, COND_LIMIT};
use crate::rng::{stream, Stream};
use crate::spectral::{QBasis, SpectralReservoir};
use crate::standard::{generate_dense, masked_uniform};

/// Noise level of the noisy golden spiral when none is given.
pub const DEFAULT_SIGMA: f64 = 0.2;

/// Eigenvector draws attempted before giving up on a well-conditioned basis.
pub const MAX_BASIS_ATTEMPTS: u64 = 8;

/// Number of real eigenvalues for an `n × n` real matrix: `⌊√(2n/π)⌋`,
/// bumped by one so that `n − n_r` is even.
pub fn real_count(n: usize) -> usize {
    assert!(n >= 1, "real_count needs n >= 1");
    let mut n_r = (2.0 * n as f64 / PI).sqrt().floor() as usize;
    if n_r % 2 != n % 2 {
        n_r += 1;
    }
    n_r.min(n)
}

/// Generated eigenvalues; each complex entry stands for a conjugate pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub real: Vec<f64>,
    pub cpx: Vec<Complex64>,
}

impl Spectrum {
    pub fn units(&self) -> usize {
        self.real.len() + 2 * self.cpx.len()
    }

    pub fn max_modulus(&self) -> f64 {
        self.real
            .iter()
            .map(|v| v.abs())
            .chain(self.cpx.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }
}

/// Reals uniform on `(−sr, sr)`; complex values `sr·√U·e^{iΘ}` with `Θ` uniform
/// on `(0, π)`, i.e. uniform on the upper half disk.
pub fn uniform_eigenvalues(n: usize, sr: f64, seed: u64) -> Spectrum {
    let n_r = real_count(n);
    let mut rng = stream(seed, Stream::Eigenvalues);
    let real = (0..n_r).map(|_| rng.random_range(-sr..sr)).collect();
    let cpx = (0..(n - n_r) / 2)
        .map(|_| {
            let u: f64 = rng.random();
            let theta = rng.random_range(0.0..PI);
            Complex64::from_polar(sr * u.sqrt(), theta)
        })
        .collect();
    Spectrum { real, cpx }
}

/// Golden spiral: complex values `√(k/(2n_cpx))·e^{iπv}` where `v` advances by
/// `3 − √5 (mod 2)` and only steps with `v < 1` are kept. Everything is
/// rescaled to spectral radius `sr`, then complex values get `N(0, σ)` noise
/// on both parts.
pub fn golden_eigenvalues(n: usize, sr: f64, sigma: f64, seed: u64) -> Spectrum {
    let n_r = real_count(n);
    let n_cpx = (n - n_r) / 2;
    let mut rng = stream(seed, Stream::Eigenvalues);
    let real: Vec<f64> = (0..n_r).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut v: f64 = rng.random_range(0.0..2.0);
    let step = 3.0 - 5f64.sqrt();
    let mut cpx = Vec::with_capacity(n_cpx);
    let mut k = 0usize;
    while cpx.len() < n_cpx {
        k += 1;
        v = (v + step) % 2.0;
        if v < 1.0 {
            let radius = (k as f64 / (2 * n_cpx) as f64).sqrt();
            cpx.push(Complex64::from_polar(radius, PI * v));
        }
    }
    let mut spectrum = Spectrum { real, cpx };
    let m = spectrum.max_modulus();
    if m > 0.0 {
        let f = sr / m;
        spectrum.real.iter_mut().for_each(|x| *x *= f);
        spectrum.cpx.iter_mut().for_each(|z| *z *= f);
    }
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for z in &mut spectrum.cpx {
            let re: f64 = rng.sample(noise);
            let im: f64 = rng.sample(noise);
            *z += Complex64::new(re, im);
        }
    }
    spectrum
}

/// Eigenvalues of the dense reservoir the config would generate.
pub fn sim_eigenvalues(config: &EsnConfig) -> Result<Spectrum> {
    let res = generate_dense(config)?;
    let values = linalg::eigenvalues(res.w.to_dense().as_ref())?;
    let mut spectrum = Spectrum {
        real: Vec::new(),
        cpx: Vec::new(),
    };
    for z in values {
        if z.im == 0.0 {
            spectrum.real.push(z.re);
        } else if z.im > 0.0 {
            spectrum.cpx.push(z);
        }
    }
    Ok(spectrum)
}

/// A random eigenvector basis in the `Q` layout.
pub struct EigenvectorDraw {
    pub q: Mat<f64>,
    pub cond: f64,
    /// Draws rejected for exceeding the condition limit.
    pub resamples: u64,
}

fn draw_basis(n: usize, n_r: usize, seed: u64, attempt: u64) -> Mat<f64> {
    let mut rng = stream(seed, Stream::Eigenvectors { attempt });
    let mut q = Mat::<f64>::zeros(n, n);
    for j in 0..n_r {
        let col: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (i, x) in col.iter().enumerate() {
            q[(i, j)] = x / norm;
        }
    }
    for k in 0..(n - n_r) / 2 {
        let re: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let im: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = re.iter().chain(&im).map(|x| x * x).sum::<f64>().sqrt();
        let j = n_r + 2 * k;
        for i in 0..n {
            q[(i, j)] = re[i] / norm;
            q[(i, j + 1)] = im[i] / norm;
        }
    }
    q
}

/// Gaussian eigenvectors with unit-norm columns: real ones for the first
/// `n_r` eigenvalues and `v = (Re v, Im v)` column pairs after them.
/// Ill-conditioned draws are replaced by a draw from the next substream.
pub fn random_eigenvectors(n: usize, n_r: usize, seed: u64) -> Result<EigenvectorDraw> {
    if n_r > n || !(n - n_r).is_multiple_of(2) {
        return Err(EsnError::InvalidConfig(format!(
            "{n_r} real eigenvalues cannot complete a spectrum of size {n} with conjugate pairs"
        )));
    }
    let mut worst = 0.0f64;
    for attempt in 0..MAX_BASIS_ATTEMPTS {
        let q = draw_basis(n, n_r, seed, attempt);
        let cond = linalg::condition_estimate(q.as_ref());
        if cond <= COND_LIMIT {
            return Ok(EigenvectorDraw {
                q,
                cond,
                resamples: attempt,
            });
        }
        worst = worst.max(cond);
    }
    Err(EsnError::NearDefective {
        cond: worst,
        limit: COND_LIMIT,
        cluster: format!("{MAX_BASIS_ATTEMPTS} random eigenvector draws"),
    })
}

/// Complex eigenvector matrix with all pair members first and their
/// conjugates in a second block: `[u…, v_1 … v_m, v̄_1 … v̄_m]`.
pub fn split_layout_p(q: &Mat<f64>, n_r: usize) -> Mat<Complex64> {
    let n = q.nrows();
    let m = (n - n_r) / 2;
    Mat::from_fn(n, n, |i, j| {
        if j < n_r {
            Complex64::new(q[(i, j)], 0.0)
        } else {
            let (k, conj) = if j < n_r + m {
                (j - n_r, false)
            } else {
                (j - n_r - m, true)
            };
            let z = Complex64::new(q[(i, n_r + 2 * k)], q[(i, n_r + 2 * k + 1)]);
            if conj {
                z.conj()
            } else {
                z
            }
        }
    })
}

/// Eigenvalue distribution used by [`build_dpg`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Uniform,
    Golden,
    NoisyGolden { sigma: f64 },
    Sim,
}

impl Distribution {
    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Golden => "golden",
            Distribution::NoisyGolden { .. } => "noisy-golden",
            Distribution::Sim => "sim",
        }
    }

    pub fn spectrum(&self, config: &EsnConfig) -> Result<Spectrum> {
        let (n, sr, seed) = (config.units, config.spectral_radius, config.seed);
        Ok(match *self {
            Distribution::Uniform => uniform_eigenvalues(n, sr, seed),
            Distribution::Golden => golden_eigenvalues(n, sr, 0.0, seed),
            Distribution::NoisyGolden { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(EsnError::InvalidConfig(format!(
                        "sigma must be nonnegative, got {sigma}"
                    )));
                }
                golden_eigenvalues(n, sr, sigma, seed)
            }
            Distribution::Sim => sim_eigenvalues(config)?,
        })
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = EsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "golden" => Ok(Distribution::Golden),
            "noisy-golden" | "noisy_golden" => Ok(Distribution::NoisyGolden {
                sigma: DEFAULT_SIGMA,
            }),
            "sim" => Ok(Distribution::Sim),
            other => Err(EsnError::InvalidConfig(format!(
                "unknown distribution {other:?}; expected uniform, golden, noisy-golden or sim"
            ))),
        }
    }
}

/// Builds a spectral reservoir from a generated spectrum and a random basis.
///
/// `W_in` (and `W_fb` when feedback is on) are drawn in neuron coordinates
/// exactly as for the dense reservoir, then mapped through `Q`. Pairs whose
/// noise pushed the eigenvalue below the real axis are stored as their
/// conjugate with the imaginary basis column negated, which describes the
/// same real matrix.
pub fn build_dpg(config: &EsnConfig, distribution: Distribution) -> Result<SpectralReservoir> {
    config.validate()?;
    let mut spectrum = distribution.spectrum(config)?;
    let n = config.units;
    let n_r = spectrum.real.len();
    let draw = random_eigenvectors(n, n_r, config.seed)?;
    let mut q = draw.q;
    for (k, z) in spectrum.cpx.iter_mut().enumerate() {
        if z.im < 0.0 {
            *z = z.conj();
            let col = n_r + 2 * k + 1;
            for i in 0..n {
                q[(i, col)] = -q[(i, col)];
            }
        }
    }
    let w_in = masked_uniform(
        config.d_in,
        n,
        config.connectivity_in,
        config.input_scaling,
        config.seed,
        Stream::Input,
    );
    let w_fb = config.use_feedback.then(|| {
        masked_uniform(
            config.d_out,
            n,
            config.connectivity_fb,
            1.0,
            config.seed,
            Stream::Feedback,
        )
    });
    let w_in_q = &w_in * &q;
    let w_fb_q = w_fb.map(|fb| &fb * &q);
    let basis = QBasis::with_cond(q, draw.cond);
    SpectralReservoir::from_parts(
        spectrum.real,
        spectrum.cpx,
        w_in_q.as_ref(),
        w_fb_q.as_ref().map(|m| m.as_ref()),
        Some(Arc::new(basis)),
    )
}
