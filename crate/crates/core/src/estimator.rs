//! Channel-parameter estimators used by the alternating loop: the exact
//! oracle, an oracle with decaying Gaussian perturbations, and a grid
//! maximum-likelihood search for small path counts.

use ndarray::{Array1, Array2};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{
    assemble_channel_from_angles, check_len, complex_gaussian, synthesize_rx, ArrayConfig,
    PathTrig, PhaseVector, PilotMatrix,
};
use crate::error::{Error, Result};
use crate::fim::ParamVector;
use crate::geometry::{AoaPair, AodPair};
use crate::scalar::{cis, Real};

/// Largest path count the grid search accepts.
pub const GRID_ML_MAX_PATHS: usize = 4;

const GRID_ML_SWEEPS: usize = 4;

/// What an estimator sees at one outer iteration.
#[derive(Debug, Clone, Copy)]
pub struct EstimationInput<'a, T> {
    /// 1-based outer iteration.
    pub outer_iteration: usize,
    pub observation: &'a Array1<Complex<T>>,
    pub phases: &'a PhaseVector<T>,
    pub pilot: &'a PilotMatrix<T>,
    pub noise_variance: T,
    pub array: &'a ArrayConfig<T>,
    /// AoDs are fixed by the BS and RIS placement and treated as known.
    pub aod: &'a [AodPair<T>],
    pub previous: Option<&'a ParamVector<T>>,
}

pub trait ParameterEstimator<T> {
    fn estimate(&self, input: &EstimationInput<'_, T>) -> Result<ParamVector<T>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Oracle,
    PerturbedOracle,
    GridMl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Standard deviation of the perturbation at the first outer iteration.
    #[serde(default)]
    pub perturbation_scale: f64,
    /// Per-iteration multiplier applied to the perturbation scale.
    #[serde(default = "default_decay")]
    pub perturbation_decay: f64,
    /// Angle grid step (radians) for `grid_ml`.
    #[serde(default = "default_resolution")]
    pub grid_resolution: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_decay() -> f64 {
    0.5
}

fn default_resolution() -> f64 {
    0.01
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            kind: EstimatorKind::Oracle,
            perturbation_scale: 0.0,
            perturbation_decay: default_decay(),
            grid_resolution: default_resolution(),
            seed: 0,
        }
    }
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.perturbation_scale >= 0.0) || !self.perturbation_scale.is_finite() {
            return Err(Error::param(
                "estimator.perturbation_scale",
                "must be finite and non-negative",
            ));
        }
        if !(self.perturbation_decay >= 0.0 && self.perturbation_decay <= 1.0) {
            return Err(Error::param(
                "estimator.perturbation_decay",
                "must lie in [0, 1]",
            ));
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution < 0.5) {
            return Err(Error::param(
                "estimator.grid_resolution",
                "must lie in (0, 0.5) radians",
            ));
        }
        Ok(())
    }

    /// Perturbation standard deviation at 1-based outer iteration `k`.
    pub fn perturbation_at(&self, k: usize) -> f64 {
        let exp = i32::try_from(k.saturating_sub(1)).unwrap_or(i32::MAX);
        self.perturbation_scale * self.perturbation_decay.powi(exp)
    }
}

/// An [`EstimatorSpec`] bound to the ground truth the oracle variants read.
#[derive(Debug, Clone)]
pub struct Estimator<T> {
    spec: EstimatorSpec,
    truth: Option<ParamVector<T>>,
}

impl<T: Real> Estimator<T> {
    pub fn new(spec: EstimatorSpec, truth: Option<ParamVector<T>>) -> Result<Self> {
        spec.validate()?;
        if spec.kind != EstimatorKind::GridMl && truth.is_none() {
            return Err(Error::param(
                "estimator.kind",
                "oracle estimators need the true parameters",
            ));
        }
        Ok(Estimator { spec, truth })
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }
}

impl<T: Real> ParameterEstimator<T> for Estimator<T> {
    fn estimate(&self, input: &EstimationInput<'_, T>) -> Result<ParamVector<T>> {
        match self.spec.kind {
            EstimatorKind::Oracle => Ok(self.truth.clone().expect("checked in new")),
            EstimatorKind::PerturbedOracle => {
                let truth = self.truth.as_ref().expect("checked in new");
                Ok(perturb(
                    truth,
                    self.spec.perturbation_at(input.outer_iteration),
                    self.spec.seed,
                    input.outer_iteration,
                ))
            }
            EstimatorKind::GridMl => grid_ml(input, self.spec.grid_resolution),
        }
    }
}

/// Adds `N(0, s²)` to every angle and `CN(0, s²)` to every gain. Outer
/// iteration `k` reads its own stream of the seeded generator.
pub fn perturb<T: Real>(truth: &ParamVector<T>, scale: f64, seed: u64, k: usize) -> ParamVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let mut jitter = |x: T| {
        let z: f64 = rng.sample(StandardNormal);
        x + T::lit(scale * z)
    };
    let elevations = truth.elevations.iter().map(|&x| jitter(x)).collect();
    let azimuths = truth.azimuths.iter().map(|&x| jitter(x)).collect();
    let gains = truth
        .gains
        .iter()
        .map(|&g| g + complex_gaussian(&mut rng, T::lit(scale * scale)))
        .collect();
    ParamVector {
        elevations,
        azimuths,
        gains,
    }
}

/// Noise-free observation `μ(η)` for the given phases and pilots.
pub fn mean_observation<T: Real>(
    params: &ParamVector<T>,
    aod: &[AodPair<T>],
    phases: &PhaseVector<T>,
    pilot: &PilotMatrix<T>,
    cfg: &ArrayConfig<T>,
) -> Result<Array1<Complex<T>>> {
    let h = assemble_channel_from_angles(&params.aoa(), aod, &params.path_gains(), phases, cfg)?;
    synthesize_rx(pilot, &h, None)
}

/// Complex Gaussian log-likelihood `−LN_r ln(πσ²) − ‖y − μ‖²/σ²`.
pub fn log_likelihood<T: Real>(
    y: &Array1<Complex<T>>,
    mean: &Array1<Complex<T>>,
    noise_variance: T,
) -> Result<T> {
    check_len("likelihood mean", y.len(), mean.len())?;
    let resid = y
        .iter()
        .zip(mean)
        .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_sqr());
    let n = T::lit(y.len() as f64);
    Ok(-n * (T::PI() * noise_variance).ln() - resid / noise_variance)
}

/// [`log_likelihood`] of `y` under parameters `η` for the given phases and
/// pilots.
pub fn log_likelihood_at<T: Real>(
    y: &Array1<Complex<T>>,
    params: &ParamVector<T>,
    aod: &[AodPair<T>],
    phases: &PhaseVector<T>,
    pilot: &PilotMatrix<T>,
    noise_variance: T,
    cfg: &ArrayConfig<T>,
) -> Result<T> {
    log_likelihood(
        y,
        &mean_observation(params, aod, phases, pilot, cfg)?,
        noise_variance,
    )
}

struct GridPoint<T> {
    elevation: T,
    azimuth: T,
    xi: T,
}

/// Cell centres of the elevation `(0, π/2)` × azimuth `(0, π)` grid.
fn angle_grid<T: Real>(resolution: f64, k: T) -> Vec<GridPoint<T>> {
    let centres = |upper: f64| {
        let count = (upper / resolution).floor() as usize;
        (0..count).map(move |i| (i as f64 + 0.5) * resolution)
    };
    let mut grid = Vec::new();
    for el in centres(std::f64::consts::FRAC_PI_2) {
        for az in centres(std::f64::consts::PI) {
            let (elevation, azimuth) = (T::lit(el), T::lit(az));
            grid.push(GridPoint {
                elevation,
                azimuth,
                xi: k * elevation.sin() * azimuth.sin(),
            });
        }
    }
    grid
}

/// Solves the small dense complex system `A z = b` by Gaussian elimination
/// with partial pivoting.
fn solve_complex<T: Real>(
    mut a: Array2<Complex<T>>,
    mut b: Vec<Complex<T>>,
) -> Option<Vec<Complex<T>>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[[r, col]].norm().partial_cmp(&a[[s, col]].norm()).unwrap())?;
        if !(a[[pivot, col]].norm() > T::zero()) {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                a.swap([pivot, c], [col, c]);
            }
            b.swap(pivot, col);
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for c in col..n {
                let v = a[[col, c]];
                a[[r, c]] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut z = vec![Complex::new(T::zero(), T::zero()); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[[r, c]] * z[c];
        }
        z[r] = acc / a[[r, r]];
    }
    Some(z)
}

/// Grid maximum likelihood over per-path AoAs with least-squares gains.
///
/// The observation depends on `(ϑ_i, φ_i)` only through `ξ_i = k sinϑ_i sinφ_i`,
/// so the search is really over `ξ_i`; among grid cells with equal
/// likelihood the first in (elevation, azimuth) order is reported. Paths are
/// placed greedily, then refined by coordinate sweeps, refitting all gains
/// jointly after every move.
pub fn grid_ml<T: Real>(input: &EstimationInput<'_, T>, resolution: f64) -> Result<ParamVector<T>> {
    let n = input.aod.len();
    if n > GRID_ML_MAX_PATHS {
        return Err(Error::GridTooLarge {
            paths: n,
            limit: GRID_ML_MAX_PATHS,
        });
    }
    if n == 0 {
        return Err(Error::param("paths", "need at least one path"));
    }
    check_len("grid ML phases", n, input.phases.len())?;
    let cfg = input.array;
    let (n_rx, slots) = (cfg.n_rx, input.pilot.slots());
    check_len("grid ML observation", slots * n_rx, input.observation.len())?;
    let x = input.pilot.matrix();
    let k = cfg.k();

    // zeta only: the AoA placeholder is irrelevant here
    let dummy = vec![
        AoaPair {
            elevation: T::zero(),
            azimuth: T::zero()
        };
        n
    ];
    let zeta = PathTrig::new(&dummy, input.aod, cfg)?.zeta;
    let phasors = input.phases.phasors();
    // b[i][l] = e^{jϱ_i} a_tᴴ(ζ_i) x(l)
    let b: Vec<Vec<Complex<T>>> = (0..n)
        .map(|i| {
            (0..slots)
                .map(|l| {
                    let beam = (0..cfg.n_tx).fold(Complex::new(T::zero(), T::zero()), |acc, nn| {
                        acc + cis(-T::lit(nn as f64) * zeta[i]) * x[[nn, l]]
                    });
                    phasors[i] * beam
                })
                .collect()
        })
        .collect();
    let energy: Vec<T> = b
        .iter()
        .map(|bi| T::lit(n_rx as f64) * bi.iter().fold(T::zero(), |a, v| a + v.norm_sqr()))
        .collect();
    let y = input.observation;
    let ramp = |xi: T, m: usize| cis(T::lit(m as f64) * xi);

    let fit_gains = |xis: &[Option<T>]| -> Vec<Complex<T>> {
        let active: Vec<usize> = (0..n).filter(|&i| xis[i].is_some()).collect();
        let mut gains = vec![Complex::new(T::zero(), T::zero()); n];
        if active.is_empty() {
            return gains;
        }
        let p = active.len();
        let mut gram = Array2::from_elem((p, p), Complex::new(T::zero(), T::zero()));
        let mut rhs = vec![Complex::new(T::zero(), T::zero()); p];
        for (a, &i) in active.iter().enumerate() {
            let xi_i = xis[i].expect("active");
            for (c, &j) in active.iter().enumerate() {
                let xi_j = xis[j].expect("active");
                let slot: Complex<T> = (0..slots).map(|l| b[i][l].conj() * b[j][l]).sum();
                let rx: Complex<T> = (0..n_rx).map(|m| ramp(xi_j - xi_i, m)).sum();
                gram[[a, c]] = slot * rx;
            }
            rhs[a] = (0..slots)
                .flat_map(|l| (0..n_rx).map(move |m| (l, m)))
                .map(|(l, m)| (b[i][l] * ramp(xi_i, m)).conj() * y[l * n_rx + m])
                .sum();
        }
        // tiny ridge keeps coincident columns solvable
        let ridge = T::lit(1e-12) * (0..p).fold(T::zero(), |acc, a| acc + gram[[a, a]].re)
            / T::lit(p as f64);
        for a in 0..p {
            gram[[a, a]] += Complex::new(ridge.max(T::min_positive_value()), T::zero());
        }
        if let Some(z) = solve_complex(gram, rhs) {
            for (a, &i) in active.iter().enumerate() {
                gains[i] = z[a];
            }
        }
        gains
    };

    let residual_without =
        |skip: usize, xis: &[Option<T>], gains: &[Complex<T>]| -> Vec<Complex<T>> {
            let mut r: Vec<Complex<T>> = y.to_vec();
            for j in (0..n).filter(|&j| j != skip) {
                if let Some(xi) = xis[j] {
                    for l in 0..slots {
                        for m in 0..n_rx {
                            r[l * n_rx + m] -= gains[j] * b[j][l] * ramp(xi, m);
                        }
                    }
                }
            }
            r
        };

    let grid = angle_grid(resolution, k);
    let best_cell = |i: usize, r: &[Complex<T>]| -> usize {
        // R_m = Σ_l conj(b_il) r[l, m]
        let proj: Vec<Complex<T>> = (0..n_rx)
            .map(|m| (0..slots).map(|l| b[i][l].conj() * r[l * n_rx + m]).sum())
            .collect();
        let mut best = (0, T::neg_infinity());
        for (idx, g) in grid.iter().enumerate() {
            let inner: Complex<T> = proj
                .iter()
                .enumerate()
                .map(|(m, &p)| ramp(-g.xi, m) * p)
                .sum();
            let score = inner.norm_sqr() / energy[i];
            if score > best.1 {
                best = (idx, score);
            }
        }
        best.0
    };

    let mut cells: Vec<Option<usize>> = vec![None; n];
    let xis_of = |cells: &[Option<usize>]| -> Vec<Option<T>> {
        cells.iter().map(|c| c.map(|c| grid[c].xi)).collect()
    };
    let mut gains = vec![Complex::new(T::zero(), T::zero()); n];
    for i in 0..n {
        let r = residual_without(i, &xis_of(&cells), &gains);
        cells[i] = Some(best_cell(i, &r));
        gains = fit_gains(&xis_of(&cells));
    }
    for _ in 0..GRID_ML_SWEEPS {
        let mut moved = false;
        for i in 0..n {
            let r = residual_without(i, &xis_of(&cells), &gains);
            let c = best_cell(i, &r);
            if Some(c) != cells[i] {
                moved = true;
                cells[i] = Some(c);
                gains = fit_gains(&xis_of(&cells));
            }
        }
        if !moved {
            break;
        }
    }
    let chosen: Vec<&GridPoint<T>> = cells
        .iter()
        .map(|c| &grid[c.expect("all placed")])
        .collect();
    ParamVector::new(
        chosen.iter().map(|g| g.elevation).collect(),
        chosen.iter().map(|g| g.azimuth).collect(),
        gains,
    )
}
