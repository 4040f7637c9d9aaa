//! Spectral constants of an incidence system.
//!
//! Everything here is dense: the symmetric eigenproblems are solved with
//! `nalgebra::SymmetricEigen`, which is plenty for graphs of a few hundred
//! nodes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::topology::IncidenceSystem;

/// Largest matrix dimension accepted by the dense routines.
pub const DENSE_CAP: usize = 2000;

/// Eigenvalues at or below `RELATIVE_RANK_TOLERANCE * λ_max` count as zero.
pub const RELATIVE_RANK_TOLERANCE: f64 = 1e-9;

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigendecomposition of a symmetric positive semidefinite matrix with a
/// rank cut-off.
#[derive(Debug, Clone)]
pub struct PsdSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    rank_tolerance: f64,
}

impl PsdSpectrum {
    /// Decomposes `matrix`; `rank_tolerance = None` uses the relative default.
    pub fn new(matrix: &DMatrix<f64>, rank_tolerance: Option<f64>) -> Result<Self> {
        check_symmetric(matrix)?;
        let eig = SymmetricEigen::new(matrix.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let rank_tolerance = match rank_tolerance {
            Some(t) if t < 0.0 || !t.is_finite() => {
                return Err(Error::invalid(format!("rank tolerance {t} must be >= 0")))
            }
            Some(t) => t,
            None => RELATIVE_RANK_TOLERANCE * max,
        };
        if !(max > rank_tolerance) {
            return Err(Error::ZeroMatrix);
        }
        Ok(PsdSpectrum {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
            rank_tolerance,
        })
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    /// Eigenvalues in ascending order.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_plus(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|&v| v > self.rank_tolerance)
            .fold(f64::INFINITY, f64::min)
    }

    /// `Σ f(λ) q qᵀ` over the eigenpairs above the rank tolerance.
    pub fn spectral_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            if lambda > self.rank_tolerance {
                let q = self.vectors.column(k);
                out += f(lambda) * q * q.transpose();
            }
        }
        out
    }

    /// Moore–Penrose pseudoinverse.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        self.spectral_function(|l| 1.0 / l)
    }

    /// Square root of the pseudoinverse.
    pub fn pseudo_inverse_sqrt(&self) -> DMatrix<f64> {
        self.spectral_function(|l| 1.0 / l.sqrt())
    }
}

fn check_symmetric(matrix: &DMatrix<f64>) -> Result<()> {
    let (r, c) = matrix.shape();
    if r != c {
        return Err(Error::invalid(format!("matrix is {r}x{c}, not square")));
    }
    if r == 0 {
        return Err(Error::ZeroMatrix);
    }
    if r > DENSE_CAP {
        return Err(Error::invalid(format!(
            "dimension {r} exceeds the dense cap {DENSE_CAP}"
        )));
    }
    let scale = matrix.amax().max(1.0);
    for i in 0..r {
        for j in (i + 1)..r {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue strictly above `rank_tolerance`.
pub fn eig_min_plus(matrix: &DMatrix<f64>, rank_tolerance: f64) -> Result<f64> {
    Ok(PsdSpectrum::new(matrix, Some(rank_tolerance))?.min_plus())
}

/// [`eig_min_plus`] with the tolerance `1e-9 · λ_max`.
pub fn eig_min_plus_relative(matrix: &DMatrix<f64>) -> Result<f64> {
    Ok(PsdSpectrum::new(matrix, None)?.min_plus())
}

/// `ν = max_{u ∈ Range(Aᵀ)} uᵀ M u / uᵀ W u` with
/// `M = Σ_i A_iᵀ A_i (AᵀA)† A_iᵀ A_i` and `W = AᵀA / m`.
///
/// Each summand of `M` is rank one: `(a_iᵀ (AᵀA)† a_i) a_i a_iᵀ`. The
/// quotient is maximized as the top eigenvalue of `W^{†/2} M W^{†/2}`, which
/// already vanishes off `Range(Aᵀ)`.
pub fn compute_nu(system: &IncidenceSystem) -> Result<f64> {
    let gram = system.gram();
    let spectrum = PsdSpectrum::new(&gram, None)?;
    nu_from_spectrum(system, &spectrum)
}

fn nu_from_spectrum(system: &IncidenceSystem, gram: &PsdSpectrum) -> Result<f64> {
    let a = system.a();
    let m = a.nrows() as f64;
    let gram_pinv = gram.pseudo_inverse();

    let weights = DVector::from_iterator(
        a.nrows(),
        a.row_iter().map(|row| {
            let r = row.transpose();
            (row * &gram_pinv * r)[(0, 0)]
        }),
    );
    // M = Aᵀ diag(weights) A
    let mut scaled = a.clone();
    for (mut row, w) in scaled.row_iter_mut().zip(weights.iter()) {
        row *= *w;
    }
    let big_m = a.tr_mul(&scaled);

    // W = gram / m, so W^{†/2} = sqrt(m) · gram^{†/2}
    let w_pinv_sqrt = gram.pseudo_inverse_sqrt() * m.sqrt();
    let k = &w_pinv_sqrt * big_m * &w_pinv_sqrt;
    let k = (&k + k.transpose()) * 0.5;
    let top = SymmetricEigen::new(k)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    Ok(top)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub lambda_min_plus_ata: f64,
    pub lambda_min_plus_w: f64,
    pub lambda_min_plus_l: f64,
    pub nu: f64,
    pub m: usize,
    pub n: usize,
}

impl SpectralSummary {
    /// Flat `key=value` lines, as printed by the `spectral` subcommand.
    pub fn to_key_values(&self) -> String {
        format!(
            "n={}\nm={}\nlambda_min_plus_ata={}\nlambda_min_plus_w={}\nlambda_min_plus_l={}\nnu={}\n",
            self.n,
            self.m,
            fmt_num(self.lambda_min_plus_ata),
            fmt_num(self.lambda_min_plus_w),
            fmt_num(self.lambda_min_plus_l),
            fmt_num(self.nu),
        )
    }
}

/// Shortest representation that survives rounding to 12 significant digits,
/// so values like `2.0000000000000004` print as `2`.
pub fn fmt_num(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// Computes λ⁺min of `AᵀA`, `W` and `L` (each from its own
/// eigendecomposition) together with `ν`.
pub fn summarize(system: &IncidenceSystem) -> Result<SpectralSummary> {
    let m = system.rows();
    let n = system.cols();
    if m == 0 {
        return Err(Error::ZeroMatrix);
    }
    let gram = system.gram();
    let gram_spectrum = PsdSpectrum::new(&gram, None)?;
    let w = &gram / m as f64;
    Ok(SpectralSummary {
        lambda_min_plus_ata: gram_spectrum.min_plus(),
        lambda_min_plus_w: eig_min_plus_relative(&w)?,
        lambda_min_plus_l: eig_min_plus_relative(system.laplacian())?,
        nu: nu_from_spectrum(system, &gram_spectrum)?,
        m,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalRates {
    /// Expected per-iteration contraction of plain randomized Kaczmarz.
    pub rho: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Per-iteration Lyapunov contraction of the fixed-constant schedule.
    pub option2_rate: f64,
    pub lambda: f64,
}

impl TheoreticalRates {
    /// Asymptotic per-iteration decrease factor `σ₁⁻²` of the recurrence
    /// schedule.
    pub fn option1_asymptotic_factor(&self) -> f64 {
        self.sigma1.powi(-2)
    }

    /// `4λ / (σ₁^k − σ₂^k)²`, the multiplier of `‖x⁰ − x*‖²_{(AᵀA)⁺}` in the
    /// recurrence-schedule bound on `E‖x^k − x*‖²` (valid for `k ≥ 1`).
    pub fn option1_transient_factor(&self, k: usize) -> f64 {
        let d = self.sigma1.powi(k as i32) - self.sigma2.powi(k as i32);
        4.0 * self.lambda / (d * d)
    }
}

pub fn rates(summary: &SpectralSummary, lambda: f64) -> Result<TheoreticalRates> {
    let upper = summary.lambda_min_plus_ata * (1.0 + 1e-12);
    if !(0.0..=upper).contains(&lambda) {
        return Err(Error::invalid(format!(
            "lambda {lambda} outside [0, {}]",
            summary.lambda_min_plus_ata
        )));
    }
    let m = summary.m as f64;
    // ‖A‖²_F = m for the normalized incidence matrix.
    let rho = (1.0 - summary.lambda_min_plus_ata / m).max(0.0);
    let half = lambda.sqrt() / (2.0 * m);
    Ok(TheoreticalRates {
        rho,
        sigma1: 1.0 + half,
        sigma2: 1.0 - half,
        option2_rate: (1.0 - (summary.lambda_min_plus_w / summary.nu).sqrt()).max(0.0),
        lambda,
    })
}
