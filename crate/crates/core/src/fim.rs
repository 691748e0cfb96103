//! Position Fisher information as an explicit function of the RIS phases.
//!
//! The phase-independent part of the 2×2 position FIM is collected once in a
//! [`KappaTensor`]; afterwards every evaluation is a double sum over path
//! pairs weighted by `e^{j(ϱ_n − ϱ_m)}`.

use ndarray::{Array2, Array3};
use num_complex::Complex;

use crate::channel::{check_len, ArrayConfig, PathGains, PathTrig, PhaseVector, PilotMatrix};
use crate::error::{Error, Result};
use crate::geometry::{transform_matrix, AoaPair, AodPair, ScenarioGeometry, TransformMatrix};
use crate::scalar::{cis, Real};

/// `det(J) ≤ SINGULARITY_RATIO·‖J‖_F²` is treated as singular.
pub const SINGULARITY_RATIO: f64 = 1e-12;

/// Channel parameters `η`: AoA elevations, AoA azimuths and path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    pub elevations: Vec<T>,
    pub azimuths: Vec<T>,
    pub gains: Vec<Complex<T>>,
}

impl<T: Real> ParamVector<T> {
    pub fn new(elevations: Vec<T>, azimuths: Vec<T>, gains: Vec<Complex<T>>) -> Result<Self> {
        check_len("parameter azimuths", elevations.len(), azimuths.len())?;
        check_len("parameter gains", elevations.len(), gains.len())?;
        Ok(ParamVector {
            elevations,
            azimuths,
            gains,
        })
    }

    pub fn from_truth(geometry: &ScenarioGeometry<T>, gains: &PathGains<T>) -> Result<Self> {
        let aoa = geometry.aoa()?;
        Self::new(
            aoa.iter().map(|a| a.elevation).collect(),
            aoa.iter().map(|a| a.azimuth).collect(),
            gains.as_slice().to_vec(),
        )
    }

    pub fn paths(&self) -> usize {
        self.elevations.len()
    }

    pub fn aoa(&self) -> Vec<AoaPair<T>> {
        self.elevations
            .iter()
            .zip(&self.azimuths)
            .map(|(&elevation, &azimuth)| AoaPair { elevation, azimuth })
            .collect()
    }

    pub fn path_gains(&self) -> PathGains<T> {
        PathGains::new(self.gains.clone()).expect("finite gains")
    }

    /// Euclidean distance over all `4N` real coordinates.
    pub fn distance(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for (a, b) in self.elevations.iter().zip(&other.elevations) {
            acc += (*a - *b).powi(2);
        }
        for (a, b) in self.azimuths.iter().zip(&other.azimuths) {
            acc += (*a - *b).powi(2);
        }
        for (a, b) in self.gains.iter().zip(&other.gains) {
            acc += (a - b).norm_sqr();
        }
        acc.sqrt()
    }
}

/// `ϖ̇_i(l) = Ξ̇_i x(l)` and `ϖ̈_i(l) = Ξ̈_i x(l)`, indexed `[i, l, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarpiSet<T> {
    pub dot: Array3<Complex<T>>,
    pub ddot: Array3<Complex<T>>,
}

impl<T: Real> VarpiSet<T> {
    pub fn paths(&self) -> usize {
        self.dot.dim().0
    }

    pub fn slots(&self) -> usize {
        self.dot.dim().1
    }

    pub fn n_rx(&self) -> usize {
        self.dot.dim().2
    }
}

/// Derivative vectors from path angles. `Ξ̇_i` and `Ξ̈_i` are rank one
/// (`a`-weighted ramp times `a_tᴴ`), so `Ξ x(l)` reduces to the receive ramp
/// scaled by `a_tᴴ(ζ_i) x(l)`.
pub fn varpi_from_angles<T: Real>(
    aoa: &[AoaPair<T>],
    aod: &[AodPair<T>],
    gains: &PathGains<T>,
    pilot: &PilotMatrix<T>,
    cfg: &ArrayConfig<T>,
) -> Result<VarpiSet<T>> {
    let n = aoa.len();
    check_len("varpi gains", n, gains.len())?;
    check_len("pilot rows", cfg.n_tx, pilot.n_tx())?;
    let trig = PathTrig::new(aoa, aod, cfg)?;
    let k = cfg.k();
    let slots = pilot.slots();
    let x = pilot.matrix();
    let zero = Complex::new(T::zero(), T::zero());
    let mut dot = Array3::from_elem((n, slots, cfg.n_rx), zero);
    let mut ddot = Array3::from_elem((n, slots, cfg.n_rx), zero);
    for i in 0..n {
        let AoaPair { elevation, azimuth } = aoa[i];
        let c_dot = k * azimuth.sin() * elevation.cos();
        let c_ddot = k * elevation.sin() * azimuth.cos();
        let h = gains.as_slice()[i];
        for l in 0..slots {
            let mut beam = zero;
            for nn in 0..cfg.n_tx {
                beam += cis(-T::lit(nn as f64) * trig.zeta[i]) * x[[nn, l]];
            }
            for m in 1..cfg.n_rx {
                let mf = T::lit(m as f64);
                let v = h * beam * Complex::new(T::zero(), mf) * cis(mf * trig.xi[i]);
                dot[[i, l, m]] = v * c_dot;
                ddot[[i, l, m]] = v * c_ddot;
            }
        }
    }
    Ok(VarpiSet { dot, ddot })
}

pub fn varpi<T: Real>(
    geometry: &ScenarioGeometry<T>,
    gains: &PathGains<T>,
    pilot: &PilotMatrix<T>,
    cfg: &ArrayConfig<T>,
) -> Result<VarpiSet<T>> {
    varpi_from_angles(&geometry.aoa()?, &geometry.aod()?, gains, pilot, cfg)
}

/// The four families `κ^{a,b}_{m,n}(l)`, `a, b ∈ {x, y}`, plus their sums
/// over slots which is all the phase-dependent evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaTensor<T> {
    /// `[a][b]` with shape `(N, N, L)`.
    per_slot: [[Array3<Complex<T>>; 2]; 2],
    /// `Σ_l κ^{a,b}_{m,n}(l)`, shape `(N, N)`.
    summed: [[Array2<Complex<T>>; 2]; 2],
    alpha: Vec<[T; 2]>,
    beta: Vec<[T; 2]>,
}

impl<T: Real> KappaTensor<T> {
    pub fn paths(&self) -> usize {
        self.alpha.len()
    }

    pub fn slots(&self) -> usize {
        self.per_slot[0][0].dim().2
    }

    /// `κ^{a,b}_{m,n}(l)` with `a, b ∈ {0, 1}` standing for `x, y`.
    pub fn get(&self, a: usize, b: usize, m: usize, n: usize, l: usize) -> Complex<T> {
        self.per_slot[a][b][[m, n, l]]
    }

    pub fn slot_sum(&self, a: usize, b: usize) -> &Array2<Complex<T>> {
        &self.summed[a][b]
    }

    pub fn alpha(&self, i: usize) -> [T; 2] {
        self.alpha[i]
    }

    pub fn beta(&self, i: usize) -> [T; 2] {
        self.beta[i]
    }
}

fn inner<T: Real>(
    a: ndarray::ArrayView1<Complex<T>>,
    b: ndarray::ArrayView1<Complex<T>>,
) -> Complex<T> {
    a.iter()
        .zip(b.iter())
        .fold(Complex::new(T::zero(), T::zero()), |acc, (u, v)| {
            acc + u.conj() * v
        })
}

/// Precomputes the κ tensor:
///
/// `κ^{a,b}_{m,n}(l) = αᵃ_m αᵇ_n ϖ̇_mᴴϖ̇_n + βᵃ_m αᵇ_n ϖ̈_mᴴϖ̇_n
///                   + αᵃ_m βᵇ_n ϖ̇_mᴴϖ̈_n + βᵃ_m βᵇ_n ϖ̈_mᴴϖ̈_n`.
pub fn kappa_tensor<T: Real>(
    varpi: &VarpiSet<T>,
    transform: &TransformMatrix<T>,
) -> Result<KappaTensor<T>> {
    let n = varpi.paths();
    check_len("kappa paths", n, transform.paths())?;
    check_len("varpi ddot shape", varpi.dot.len(), varpi.ddot.len())?;
    let slots = varpi.slots();
    let zero = Complex::new(T::zero(), T::zero());
    let mut per_slot: [[Array3<Complex<T>>; 2]; 2] = Default::default();
    for row in per_slot.iter_mut() {
        for t in row.iter_mut() {
            *t = Array3::from_elem((n, n, slots), zero);
        }
    }
    let alpha: Vec<[T; 2]> = (0..n).map(|i| transform.alpha(i)).collect();
    let beta: Vec<[T; 2]> = (0..n).map(|i| transform.beta(i)).collect();
    for l in 0..slots {
        for m in 0..n {
            let dm = varpi.dot.slice(ndarray::s![m, l, ..]);
            let ddm = varpi.ddot.slice(ndarray::s![m, l, ..]);
            for nn in 0..n {
                let dn = varpi.dot.slice(ndarray::s![nn, l, ..]);
                let ddn = varpi.ddot.slice(ndarray::s![nn, l, ..]);
                let g_dd = inner(dm, dn);
                let g_pd = inner(ddm, dn);
                let g_dp = inner(dm, ddn);
                let g_pp = inner(ddm, ddn);
                for a in 0..2 {
                    for b in 0..2 {
                        per_slot[a][b][[m, nn, l]] = g_dd * (alpha[m][a] * alpha[nn][b])
                            + g_pd * (beta[m][a] * alpha[nn][b])
                            + g_dp * (alpha[m][a] * beta[nn][b])
                            + g_pp * (beta[m][a] * beta[nn][b]);
                    }
                }
            }
        }
    }
    let summed = [0, 1].map(|a| [0, 1].map(|b| per_slot[a][b].sum_axis(ndarray::Axis(2))));
    Ok(KappaTensor {
        per_slot,
        summed,
        alpha,
        beta,
    })
}

/// κ tensor straight from the scenario.
pub fn kappa_for_scenario<T: Real>(
    geometry: &ScenarioGeometry<T>,
    gains: &PathGains<T>,
    pilot: &PilotMatrix<T>,
    cfg: &ArrayConfig<T>,
) -> Result<KappaTensor<T>> {
    let v = varpi(geometry, gains, pilot, cfg)?;
    kappa_tensor(&v, &transform_matrix(geometry)?)
}

/// The 2×2 position FIM `J_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionFim<T> {
    pub matrix: [[T; 2]; 2],
    pub noise_variance: T,
    pub slots: usize,
}

impl<T: Real> PositionFim<T> {
    pub fn determinant(&self) -> T {
        let j = &self.matrix;
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    pub fn trace(&self) -> T {
        self.matrix[0][0] + self.matrix[1][1]
    }

    pub fn frobenius_norm(&self) -> T {
        self.matrix
            .iter()
            .flatten()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [T; 2] {
        let j = &self.matrix;
        let half = T::lit(0.5);
        let off = (j[0][1] + j[1][0]) * half;
        let mean = (j[0][0] + j[1][1]) * half;
        let r = ((j[0][0] - j[1][1]) * half).hypot(off);
        [mean - r, mean + r]
    }
}

/// `J_q` for phase vector `ϱ`:
/// `[J_q]_{a,b} = (2/σ²) Σ_l Σ_m Σ_n Re[e^{j(ϱ_n − ϱ_m)} κ^{a,b}_{m,n}(l)]`.
pub fn position_fim<T: Real>(
    kappa: &KappaTensor<T>,
    phases: &PhaseVector<T>,
    noise_variance: T,
) -> Result<PositionFim<T>> {
    let n = kappa.paths();
    check_len("phase vector", n, phases.len())?;
    if !(noise_variance > T::zero()) {
        return Err(Error::param("noise_variance", "must be positive"));
    }
    let v = phases.phasors();
    let scale = T::lit(2.0) / noise_variance;
    let mut matrix = [[T::zero(); 2]; 2];
    for (a, row) in matrix.iter_mut().enumerate() {
        for (b, entry) in row.iter_mut().enumerate() {
            *entry = scale * phase_quadratic_form(kappa.slot_sum(a, b), &v);
        }
    }
    Ok(PositionFim {
        matrix,
        noise_variance,
        slots: kappa.slots(),
    })
}

/// `Re Σ_m Σ_n conj(v_m) K_{m,n} v_n`.
pub(crate) fn phase_quadratic_form<T: Real>(k: &Array2<Complex<T>>, v: &[Complex<T>]) -> T {
    let mut acc = T::zero();
    for (m, vm) in v.iter().enumerate() {
        let mut row = Complex::new(T::zero(), T::zero());
        for (nn, vn) in v.iter().enumerate() {
            row += k[[m, nn]] * vn;
        }
        acc += (vm.conj() * row).re;
    }
    acc
}

/// Position CRLB `Tr(J_q⁻¹)`.
pub fn crlb<T: Real>(fim: &PositionFim<T>) -> Result<T> {
    let det = fim.determinant();
    let norm = fim.frobenius_norm();
    let threshold = T::lit(SINGULARITY_RATIO) * norm * norm;
    if !(det > threshold) || !det.is_finite() {
        return Err(Error::SingularFim {
            det: det.as_f64(),
            threshold: threshold.as_f64(),
        });
    }
    Ok(fim.trace() / det)
}

/// AoA block `𝓐` of the per-parameter FIM (including the `2/σ²` factor),
/// ordered `[ϑ_1..ϑ_N, φ_1..φ_N]` and summed over slots.
pub fn fim_eta_aoa_block_from_varpi<T: Real>(
    varpi: &VarpiSet<T>,
    phases: &PhaseVector<T>,
    noise_variance: T,
) -> Result<Array2<T>> {
    let n = varpi.paths();
    check_len("phase vector", n, phases.len())?;
    let v = phases.phasors();
    let scale = T::lit(2.0) / noise_variance;
    let mut block = Array2::zeros((2 * n, 2 * n));
    let column = |idx: usize, l: usize| {
        if idx < n {
            varpi.dot.slice(ndarray::s![idx, l, ..])
        } else {
            varpi.ddot.slice(ndarray::s![idx - n, l, ..])
        }
    };
    for a in 0..2 * n {
        for b in a..2 * n {
            let mut acc = T::zero();
            for l in 0..varpi.slots() {
                let w = v[a % n].conj() * v[b % n];
                acc += (w * inner(column(a, l), column(b, l))).re;
            }
            block[[a, b]] = scale * acc;
            block[[b, a]] = scale * acc;
        }
    }
    Ok(block)
}

pub fn fim_eta_aoa_block<T: Real>(
    geometry: &ScenarioGeometry<T>,
    gains: &PathGains<T>,
    pilot: &PilotMatrix<T>,
    phases: &PhaseVector<T>,
    cfg: &ArrayConfig<T>,
    noise_variance: T,
) -> Result<Array2<T>> {
    fim_eta_aoa_block_from_varpi(&varpi(geometry, gains, pilot, cfg)?, phases, noise_variance)
}

/// `T̃ 𝓐 T̃ᵀ` for a block that already carries the `2/σ²` factor.
pub fn transform_aoa_block<T: Real>(
    block: &Array2<T>,
    transform: &TransformMatrix<T>,
) -> Result<[[T; 2]; 2]> {
    let t = transform.dense();
    check_len("AoA block size", t.ncols(), block.nrows())?;
    let mut out = [[T::zero(); 2]; 2];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, entry) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for i in 0..t.ncols() {
                for j in 0..t.ncols() {
                    acc += t[[a, i]] * block[[i, j]] * t[[b, j]];
                }
            }
            *entry = acc;
        }
    }
    Ok(out)
}
