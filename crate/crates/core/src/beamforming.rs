//! RIS reflect beamforming: closed-form CRLB gradient w.r.t. the phase
//! vector, gradient descent with backtracking line search, and the
//! alternating estimate/optimize loop.

use ndarray::Array2;
use num_complex::Complex;

use crate::channel::{
    assemble_channel, check_len, synthesize_rx, ArrayConfig, NoiseModel, PathGains, PhaseVector,
    PilotMatrix,
};
use crate::error::{Error, Result};
use crate::estimator::{EstimationInput, ParameterEstimator};
use crate::fim::{
    crlb, kappa_tensor, position_fim, varpi_from_angles, KappaTensor, ParamVector, PositionFim,
};
use crate::geometry::{ScenarioGeometry, TransformMatrix};
use crate::scalar::{angle_diff, Real};

/// Line search gives up once the step falls below this.
pub const MIN_STEP: f64 = 1e-16;

/// `∂[J_q]_{a,b}/∂ϱ_i` for the four entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimEntryGradients<T> {
    pub d11: T,
    pub d12: T,
    pub d21: T,
    pub d22: T,
}

/// `Σ_{n≠i} e^{-jϱ_n} (K_{n,i} + conj(K_{i,n}))` for every `i`.
fn cross_sums<T: Real>(k: &Array2<Complex<T>>, v: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for nn in 0..n {
                if nn != i {
                    acc += v[nn].conj() * (k[[nn, i]] + k[[i, nn]].conj());
                }
            }
            acc
        })
        .collect()
}

fn entry_derivative<T: Real>(scale: T, v_i: Complex<T>, sum: Complex<T>) -> T {
    // Re[j e^{jϱ_i} S_i]
    let jv = Complex::new(-v_i.im, v_i.re);
    scale * (jv * sum).re
}

/// Derivatives of the four position-FIM entries w.r.t. `ϱ_i`:
///
/// `∂[J_q]_{a,b}/∂ϱ_i = (2/σ²) Σ_l Σ_{n≠i} Re[j e^{j(ϱ_i − ϱ_n)} (κ^{a,b}_{n,i}(l) + κ^{a,b}_{i,n}(l)*)]`.
///
/// For the diagonal entries `κ^{a,a}` is Hermitian in `(m, n)` and this is
/// `(4/σ²) Σ Re[j e^{j(ϱ_i − ϱ_n)} κ^{a,a}_{n,i}(l)]`. The off-diagonal
/// families are only conjugate to each other (`κ^{1,2}_{i,n} = κ^{2,1}_{n,i}*`),
/// so `∂[J_q]_{1,2} = ∂[J_q]_{2,1}` both average the `κ^{1,2}` and `κ^{2,1}`
/// contributions; using `4/σ²` with `κ^{1,2}` alone does not match finite
/// differences, although the sum `∂[J_q]_{1,2} + ∂[J_q]_{2,1}` (all the CRLB
/// gradient needs) agrees either way.
pub fn fim_entry_gradients<T: Real>(
    kappa: &KappaTensor<T>,
    phases: &PhaseVector<T>,
    noise_variance: T,
    i: usize,
) -> Result<FimEntryGradients<T>> {
    let n = kappa.paths();
    check_len("phase vector", n, phases.len())?;
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let v = phases.phasors();
    let scale = T::lit(2.0) / noise_variance;
    let d = |a: usize, b: usize| {
        let k = kappa.slot_sum(a, b);
        let mut acc = Complex::new(T::zero(), T::zero());
        for nn in (0..n).filter(|&nn| nn != i) {
            acc += v[nn].conj() * (k[[nn, i]] + k[[i, nn]].conj());
        }
        entry_derivative(scale, v[i], acc)
    };
    Ok(FimEntryGradients {
        d11: d(0, 0),
        d12: d(0, 1),
        d21: d(1, 0),
        d22: d(1, 1),
    })
}

fn all_entry_gradients<T: Real>(
    kappa: &KappaTensor<T>,
    v: &[Complex<T>],
    scale: T,
) -> [[Vec<T>; 2]; 2] {
    [0, 1].map(|a| {
        [0, 1].map(|b| {
            cross_sums(kappa.slot_sum(a, b), v)
                .into_iter()
                .zip(v)
                .map(|(s, &vi)| entry_derivative(scale, vi, s))
                .collect()
        })
    })
}

fn quotient_rule<T: Real>(fim: &PositionFim<T>, d: &[[Vec<T>; 2]; 2]) -> Vec<T> {
    let j = &fim.matrix;
    let nu = fim.trace();
    let de = fim.determinant();
    let de2 = de * de;
    (0..d[0][0].len())
        .map(|i| {
            let (d11, d12, d21, d22) = (d[0][0][i], d[0][1][i], d[1][0][i], d[1][1][i]);
            let d_nu = d11 + d22;
            let d_de = d11 * j[1][1] + j[0][0] * d22 - d12 * j[1][0] - j[0][1] * d21;
            (d_nu * de - nu * d_de) / de2
        })
        .collect()
}

/// Gradient of `f(ϱ) = Tr(J_q⁻¹)` via the quotient rule on
/// `(J₁₁ + J₂₂) / (J₁₁J₂₂ − J₁₂J₂₁)`.
///
/// With a single path the FIM does not depend on `ϱ` at all (it is also
/// rank one, so `f` itself is undefined); the gradient is then the zero
/// vector rather than a singularity error.
pub fn crlb_gradient<T: Real>(
    kappa: &KappaTensor<T>,
    phases: &PhaseVector<T>,
    noise_variance: T,
) -> Result<Vec<T>> {
    if kappa.paths() == 1 {
        check_len("phase vector", 1, phases.len())?;
        return Ok(vec![T::zero()]);
    }
    CrlbObjective::new(kappa, noise_variance)?
        .value_and_gradient(phases)
        .map(|(_, g)| g)
}

/// `ϱ ↦ Tr(J_q(ϱ)⁻¹)` for a fixed κ tensor and noise level.
#[derive(Debug, Clone, Copy)]
pub struct CrlbObjective<'a, T> {
    kappa: &'a KappaTensor<T>,
    noise_variance: T,
}

impl<'a, T: Real> CrlbObjective<'a, T> {
    pub fn new(kappa: &'a KappaTensor<T>, noise_variance: T) -> Result<Self> {
        if !(noise_variance > T::zero()) || !noise_variance.is_finite() {
            return Err(Error::param("noise_variance", "must be positive"));
        }
        Ok(CrlbObjective {
            kappa,
            noise_variance,
        })
    }

    pub fn paths(&self) -> usize {
        self.kappa.paths()
    }

    pub fn fim(&self, phases: &PhaseVector<T>) -> Result<PositionFim<T>> {
        position_fim(self.kappa, phases, self.noise_variance)
    }

    pub fn value(&self, phases: &PhaseVector<T>) -> Result<T> {
        crlb(&self.fim(phases)?)
    }

    pub fn value_and_gradient(&self, phases: &PhaseVector<T>) -> Result<(T, Vec<T>)> {
        let fim = self.fim(phases)?;
        let value = crlb(&fim)?;
        let v = phases.phasors();
        let d = all_entry_gradients(self.kappa, &v, T::lit(2.0) / self.noise_variance);
        Ok((value, quotient_rule(&fim, &d)))
    }
}

/// When gradient descent stops on objective progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopTolerance<T> {
    /// Stop once a step decreases `f` by at most this amount.
    Absolute(T),
    /// Same, as a fraction of the initial objective.
    Relative(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdmConfig<T> {
    pub tolerance: StopTolerance<T>,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease fraction, in `(0, 0.5)`.
    pub armijo: T,
    /// Step shrink factor, in `(0, 1)`.
    pub backtrack: T,
    pub initial_step: T,
}

impl<T: Real> Default for GdmConfig<T> {
    fn default() -> Self {
        GdmConfig {
            tolerance: StopTolerance::Relative(T::lit(1e-8)),
            max_iterations: 1000,
            armijo: T::lit(0.25),
            backtrack: T::lit(0.5),
            initial_step: T::one(),
        }
    }
}

impl<T: Real> GdmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let tol = match self.tolerance {
            StopTolerance::Absolute(t) | StopTolerance::Relative(t) => t,
        };
        if !(tol > T::zero()) {
            return Err(Error::param("gdm.tolerance", "must be positive"));
        }
        if !(self.armijo > T::zero() && self.armijo < T::lit(0.5)) {
            return Err(Error::param("gdm.armijo", "must lie in (0, 0.5)"));
        }
        if !(self.backtrack > T::zero() && self.backtrack < T::one()) {
            return Err(Error::param("gdm.backtrack", "must lie in (0, 1)"));
        }
        if !(self.initial_step > T::zero()) || !self.initial_step.is_finite() {
            return Err(Error::param("gdm.initial_step", "must be positive"));
        }
        Ok(())
    }

    fn epsilon(&self, initial: T) -> T {
        match self.tolerance {
            StopTolerance::Absolute(t) => t,
            StopTolerance::Relative(t) => t * initial.abs(),
        }
    }
}

/// One row of a descent trace. Row 0 is the starting point (`step = 0`);
/// row `j` holds the objective after step `j`, the accepted step size and
/// the norm of the gradient the step was taken along.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub objective: T,
    pub step: T,
    pub gradient_norm: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdmStatus {
    /// Objective decrease fell below the tolerance.
    Converged,
    /// Gradient vanished (to rounding) before any further progress.
    Stationary,
    MaxIterations,
    /// FIM became singular mid-run; the trace holds the last good iterate.
    SingularFim,
    /// Backtracking shrank the step below [`MIN_STEP`].
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace<T> {
    pub records: Vec<IterationRecord<T>>,
    pub phases: PhaseVector<T>,
    pub status: GdmStatus,
}

impl<T: Real> OptimizationTrace<T> {
    pub fn initial_objective(&self) -> T {
        self.records[0].objective
    }

    pub fn final_objective(&self) -> T {
        self.records
            .last()
            .expect("trace has an initial record")
            .objective
    }

    /// Accepted steps.
    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }

    /// Maps abnormal terminations onto errors.
    pub fn check(&self) -> Result<()> {
        match self.status {
            GdmStatus::SingularFim => Err(Error::SingularFim {
                det: f64::NAN,
                threshold: f64::NAN,
            }),
            GdmStatus::LineSearchFailed => Err(Error::LineSearchFailed {
                iteration: self.records.len(),
                min_step: MIN_STEP,
            }),
            _ => Ok(()),
        }
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Gradient descent on `Tr(J_q⁻¹)` with Armijo backtracking. Phases are
/// re-wrapped into `[0, 2π)` after every step; the objective is 2π-periodic
/// in each coordinate so wrapping does not change it.
pub fn gdm_optimize<T: Real>(
    kappa: &KappaTensor<T>,
    initial: &PhaseVector<T>,
    noise_variance: T,
    cfg: &GdmConfig<T>,
) -> Result<OptimizationTrace<T>> {
    cfg.validate()?;
    let objective = CrlbObjective::new(kappa, noise_variance)?;
    check_len("initial phases", kappa.paths(), initial.len())?;

    let mut phases = initial.clone();
    let (mut f, mut grad) = objective.value_and_gradient(&phases)?;
    let mut grad_norm = norm(&grad);
    let epsilon = cfg.epsilon(f);
    let mut records = vec![IterationRecord {
        iteration: 0,
        objective: f,
        step: T::zero(),
        gradient_norm: grad_norm,
    }];
    let stationary = |g: T, f: T| g <= T::epsilon() * (T::one() + f.abs());

    let mut status = GdmStatus::MaxIterations;
    for iteration in 1..=cfg.max_iterations {
        if stationary(grad_norm, f) {
            status = GdmStatus::Stationary;
            break;
        }
        let g2 = grad_norm * grad_norm;
        let mut t = cfg.initial_step;
        let accepted = loop {
            let candidate = phases.stepped(t, &grad);
            match objective.value(&candidate) {
                Ok(fc) if fc <= f - cfg.armijo * t * g2 => break Some((candidate, fc)),
                // singular or insufficient decrease: shrink
                _ => {}
            }
            t *= cfg.backtrack;
            if t < T::lit(MIN_STEP) {
                break None;
            }
        };
        let Some((candidate, fc)) = accepted else {
            status = GdmStatus::LineSearchFailed;
            break;
        };
        records.push(IterationRecord {
            iteration,
            objective: fc,
            step: t,
            gradient_norm: grad_norm,
        });
        let decrease = f - fc;
        phases = candidate;
        f = fc;
        if decrease <= epsilon {
            status = GdmStatus::Converged;
            break;
        }
        match objective.value_and_gradient(&phases) {
            Ok((_, g)) => {
                grad = g;
                grad_norm = norm(&grad);
            }
            Err(_) => {
                status = GdmStatus::SingularFim;
                break;
            }
        }
    }
    Ok(OptimizationTrace {
        records,
        phases,
        status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltOptConfig<T> {
    pub max_outer_iterations: usize,
    /// Bound on `‖η̂[i] − η̂[i−1]‖₂` (radians and unit gain mixed).
    pub param_tolerance: T,
    /// Bound on the largest wrapped per-element phase change (radians).
    pub phase_tolerance: T,
}

impl<T: Real> Default for AltOptConfig<T> {
    fn default() -> Self {
        AltOptConfig {
            max_outer_iterations: 20,
            param_tolerance: T::lit(1e-4),
            phase_tolerance: T::lit(1e-2),
        }
    }
}

impl<T: Real> AltOptConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 {
            return Err(Error::param(
                "alt_opt.max_outer_iterations",
                "must be positive",
            ));
        }
        if !(self.param_tolerance > T::zero()) || !(self.phase_tolerance > T::zero()) {
            return Err(Error::param("alt_opt tolerances", "must be positive"));
        }
        Ok(())
    }
}

/// True state of the world the alternating loop observes through pilots.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub geometry: ScenarioGeometry<T>,
    pub gains: PathGains<T>,
    pub array: ArrayConfig<T>,
}

impl<T: Real> Scenario<T> {
    pub fn truth(&self) -> Result<ParamVector<T>> {
        ParamVector::from_truth(&self.geometry, &self.gains)
    }

    /// `sign(q_y − s_y)` per element: which side of the RIS the MS is on.
    /// A deployment fact, treated as known together with the RIS layout.
    pub fn ms_side(&self) -> Vec<T> {
        let qy = self.geometry.ms().y;
        self.geometry
            .ris()
            .iter()
            .map(|s| if qy < s.y { -T::one() } else { T::one() })
            .collect()
    }

    /// κ tensor evaluated at a parameter estimate; AoDs and the RIS layout
    /// are known exactly.
    pub fn kappa_at(
        &self,
        estimate: &ParamVector<T>,
        pilot: &PilotMatrix<T>,
    ) -> Result<KappaTensor<T>> {
        let aoa = estimate.aoa();
        let aod = self.geometry.aod()?;
        let v = varpi_from_angles(&aoa, &aod, &estimate.path_gains(), pilot, &self.array)?;
        let t = TransformMatrix::from_angles(&aoa, self.geometry.ris(), &self.ms_side())?;
        kappa_tensor(&v, &t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltOptStatus {
    Converged,
    NonConvergence,
}

#[derive(Debug, Clone)]
pub struct AltOptResult<T> {
    pub estimate: ParamVector<T>,
    pub phases: PhaseVector<T>,
    /// One descent trace per outer iteration.
    pub traces: Vec<OptimizationTrace<T>>,
    pub outer_iterations: usize,
    pub status: AltOptStatus,
}

/// Alternates parameter estimation from fresh pilots with phase optimization
/// on the κ tensor built from the estimate. Each descent is warm-started from
/// the previous phases. Outer iteration `i` draws its noise with seed
/// `noise.seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn alternating_optimize<T: Real, E: ParameterEstimator<T> + ?Sized>(
    scenario: &Scenario<T>,
    estimator: &E,
    initial: &PhaseVector<T>,
    pilot: &PilotMatrix<T>,
    noise_variance: T,
    noise: Option<&NoiseModel<T>>,
    alt_cfg: &AltOptConfig<T>,
    gdm_cfg: &GdmConfig<T>,
) -> Result<AltOptResult<T>> {
    alt_cfg.validate()?;
    gdm_cfg.validate()?;
    let aod = scenario.geometry.aod()?;
    let mut phases = initial.clone();
    let mut previous: Option<ParamVector<T>> = None;
    let mut traces = Vec::new();
    for outer in 1..=alt_cfg.max_outer_iterations {
        let channel = assemble_channel(
            &scenario.geometry,
            &scenario.gains,
            &phases,
            &scenario.array,
        )?;
        let slot_noise = noise.map(|nm| NoiseModel {
            variance: nm.variance,
            seed: nm.seed.wrapping_add(outer as u64),
        });
        let y = synthesize_rx(pilot, &channel, slot_noise.as_ref())?;
        let estimate = estimator.estimate(&EstimationInput {
            outer_iteration: outer,
            observation: &y,
            phases: &phases,
            pilot,
            noise_variance,
            array: &scenario.array,
            aod: &aod,
            previous: previous.as_ref(),
        })?;
        let kappa = scenario.kappa_at(&estimate, pilot)?;
        let trace = gdm_optimize(&kappa, &phases, noise_variance, gdm_cfg)?;
        trace.check()?;
        let phase_change = phases
            .as_slice()
            .iter()
            .zip(trace.phases.as_slice())
            .fold(T::zero(), |acc, (&a, &b)| acc.max(angle_diff(b, a).abs()));
        let param_change = previous.as_ref().map(|p| p.distance(&estimate));
        phases = trace.phases.clone();
        traces.push(trace);
        let done = matches!(param_change, Some(d) if d <= alt_cfg.param_tolerance)
            && phase_change <= alt_cfg.phase_tolerance;
        previous = Some(estimate);
        if done {
            return Ok(AltOptResult {
                estimate: previous.expect("set above"),
                phases,
                traces,
                outer_iterations: outer,
                status: AltOptStatus::Converged,
            });
        }
    }
    Ok(AltOptResult {
        estimate: previous.expect("at least one outer iteration"),
        phases,
        traces,
        outer_iterations: alt_cfg.max_outer_iterations,
        status: AltOptStatus::NonConvergence,
    })
}
