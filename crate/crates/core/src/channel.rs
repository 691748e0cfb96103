//! Narrowband RIS channel: ULA responses at BS and MS, the cascaded
//! `N_r × N_t` channel, its angle derivatives and noisy pilot observations.

use ndarray::{Array1, Array2};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AoaPair, AodPair, ScenarioGeometry};
use crate::scalar::{cis, wrap_phase, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig<T> {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Inter-antenna spacing `d` (m).
    pub antenna_spacing: T,
    /// Carrier wavelength `λ` (m).
    pub wavelength: T,
}

impl<T: Real> ArrayConfig<T> {
    pub fn new(n_tx: usize, n_rx: usize, antenna_spacing: T, wavelength: T) -> Result<Self> {
        let cfg = ArrayConfig {
            n_tx,
            n_rx,
            antenna_spacing,
            wavelength,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::param("n_tx/n_rx", "antenna counts must be positive"));
        }
        if !(self.antenna_spacing > T::zero()) || !self.antenna_spacing.is_finite() {
            return Err(Error::param("antenna_spacing", "must be positive"));
        }
        if !(self.wavelength > T::zero()) || !self.wavelength.is_finite() {
            return Err(Error::param("wavelength", "must be positive"));
        }
        Ok(())
    }

    /// Wavenumber-spacing product `k = 2πd/λ`.
    pub fn k(&self) -> T {
        T::TAU() * self.antenna_spacing / self.wavelength
    }
}

/// Complex propagation gains `h_i`, one per RIS path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGains<T>(Vec<Complex<T>>);

impl<T: Real> PathGains<T> {
    pub fn new(gains: Vec<Complex<T>>) -> Result<Self> {
        if gains.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(Error::param("gains", "all gains must be finite"));
        }
        Ok(PathGains(gains))
    }

    /// i.i.d. `CN(0, 1)` gains.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        PathGains((0..n).map(|_| complex_gaussian(rng, T::one())).collect())
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: T) -> Self {
        PathGains(self.0.iter().map(|h| h * c).collect())
    }
}

/// RIS phase shifts, stored wrapped into `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector<T>(Vec<T>);

impl<T: Real> PhaseVector<T> {
    pub fn new(phases: Vec<T>) -> Self {
        PhaseVector(phases.into_iter().map(wrap_phase).collect())
    }

    pub fn zeros(n: usize) -> Self {
        PhaseVector(vec![T::zero(); n])
    }

    /// Independent phases uniform on `[0, 2π)`.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        PhaseVector::new(
            (0..n)
                .map(|_| T::lit(rng.random::<f64>() * std::f64::consts::TAU))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `e^{jϱ_i}` for every element.
    pub fn phasors(&self) -> Vec<Complex<T>> {
        self.0.iter().map(|&p| cis(p)).collect()
    }

    /// `ϱ + c·1`, re-wrapped.
    pub fn shifted(&self, c: T) -> Self {
        PhaseVector::new(self.0.iter().map(|&p| p + c).collect())
    }

    /// `ϱ − t·g`, re-wrapped.
    pub fn stepped(&self, t: T, direction: &[T]) -> Self {
        PhaseVector::new(
            self.0
                .iter()
                .zip(direction)
                .map(|(&p, &g)| p - t * g)
                .collect(),
        )
    }
}

/// Per-path spatial frequencies at the MS (`ξ_i`) and BS (`ζ_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrig<T> {
    pub xi: Vec<T>,
    pub zeta: Vec<T>,
}

impl<T: Real> PathTrig<T> {
    pub fn new(aoa: &[AoaPair<T>], aod: &[AodPair<T>], cfg: &ArrayConfig<T>) -> Result<Self> {
        check_len("path angles", aoa.len(), aod.len())?;
        let k = cfg.k();
        Ok(PathTrig {
            xi: aoa
                .iter()
                .map(|a| k * a.elevation.sin() * a.azimuth.sin())
                .collect(),
            zeta: aod
                .iter()
                .map(|a| k * a.elevation.sin() * a.azimuth.sin())
                .collect(),
        })
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

fn ula_response<T: Real>(len: usize, spatial_frequency: T) -> Array1<Complex<T>> {
    Array1::from_iter((0..len).map(|m| cis(T::lit(m as f64) * spatial_frequency)))
}

/// BS steering vector `a_t(θ, φ)`: entry `m` is `e^{j·m·k·sinθ·sinφ}` (zero based).
pub fn array_response_tx<T: Real>(
    elevation: T,
    azimuth: T,
    cfg: &ArrayConfig<T>,
) -> Array1<Complex<T>> {
    ula_response(cfg.n_tx, cfg.k() * elevation.sin() * azimuth.sin())
}

/// MS steering vector `a_r(ϑ, φ)`.
pub fn array_response_rx<T: Real>(
    elevation: T,
    azimuth: T,
    cfg: &ArrayConfig<T>,
) -> Array1<Complex<T>> {
    ula_response(cfg.n_rx, cfg.k() * elevation.sin() * azimuth.sin())
}

/// Cascaded channel `H̃` with entries `Σ_i h_i e^{j[ϱ_i + m ξ_i − n ζ_i]}`,
/// built directly from path angles.
pub fn assemble_channel_from_angles<T: Real>(
    aoa: &[AoaPair<T>],
    aod: &[AodPair<T>],
    gains: &PathGains<T>,
    phases: &PhaseVector<T>,
    cfg: &ArrayConfig<T>,
) -> Result<Array2<Complex<T>>> {
    let n = aoa.len();
    check_len("channel gains", n, gains.len())?;
    check_len("channel phases", n, phases.len())?;
    let trig = PathTrig::new(aoa, aod, cfg)?;
    let mut h = Array2::from_elem((cfg.n_rx, cfg.n_tx), Complex::new(T::zero(), T::zero()));
    for i in 0..n {
        let weight = gains.as_slice()[i] * cis(phases.as_slice()[i]);
        for m in 0..cfg.n_rx {
            let row = weight * cis(T::lit(m as f64) * trig.xi[i]);
            for nn in 0..cfg.n_tx {
                h[[m, nn]] += row * cis(-T::lit(nn as f64) * trig.zeta[i]);
            }
        }
    }
    Ok(h)
}

pub fn assemble_channel<T: Real>(
    geometry: &ScenarioGeometry<T>,
    gains: &PathGains<T>,
    phases: &PhaseVector<T>,
    cfg: &ArrayConfig<T>,
) -> Result<Array2<Complex<T>>> {
    assemble_channel_from_angles(&geometry.aoa()?, &geometry.aod()?, gains, phases, cfg)
}

/// Derivatives of `H̃` w.r.t. `ϑ_i` and `φ_i`.
pub type XiPair<T> = (Array2<Complex<T>>, Array2<Complex<T>>);

/// Derivatives of the RIS-free cascaded channel for path `i`, `(Ξ̇_i, Ξ̈_i)`,
/// w.r.t. the path's AoA elevation and azimuth. Multiplying by `e^{jϱ_i}`
/// gives the derivative of `H̃`.
pub fn xi_matrices_from_angles<T: Real>(
    i: usize,
    aoa: &[AoaPair<T>],
    aod: &[AodPair<T>],
    gains: &PathGains<T>,
    cfg: &ArrayConfig<T>,
) -> Result<XiPair<T>> {
    let n = aoa.len();
    check_len("xi gains", n, gains.len())?;
    check_len("xi angles", n, aod.len())?;
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let k = cfg.k();
    let AoaPair { elevation, azimuth } = aoa[i];
    let xi = k * elevation.sin() * azimuth.sin();
    let zeta = k * aod[i].elevation.sin() * aod[i].azimuth.sin();
    let h = gains.as_slice()[i];
    let c_dot = k * azimuth.sin() * elevation.cos();
    let c_ddot = k * elevation.sin() * azimuth.cos();
    let zero = Complex::new(T::zero(), T::zero());
    let mut dot = Array2::from_elem((cfg.n_rx, cfg.n_tx), zero);
    let mut ddot = Array2::from_elem((cfg.n_rx, cfg.n_tx), zero);
    for m in 1..cfg.n_rx {
        let mf = T::lit(m as f64);
        // h·j·m·e^{j m ξ}
        let base = h * Complex::new(T::zero(), mf) * cis(mf * xi);
        for nn in 0..cfg.n_tx {
            let e = base * cis(-T::lit(nn as f64) * zeta);
            dot[[m, nn]] = e * c_dot;
            ddot[[m, nn]] = e * c_ddot;
        }
    }
    Ok((dot, ddot))
}

pub fn xi_matrices<T: Real>(
    i: usize,
    geometry: &ScenarioGeometry<T>,
    gains: &PathGains<T>,
    cfg: &ArrayConfig<T>,
) -> Result<XiPair<T>> {
    xi_matrices_from_angles(i, &geometry.aoa()?, &geometry.aod()?, gains, cfg)
}

/// How pilot columns are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotMode {
    /// Unit-modulus entries with seeded uniform phases.
    Random,
    /// All-ones columns.
    Constant,
    /// Linear phase ramp matched to the BS→RIS-centroid direction.
    Steered,
}

/// Transmitted pilot block `X` (`N_t × L`), each column carrying power `p_BS`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix<T> {
    x: Array2<Complex<T>>,
    power: T,
}

impl<T: Real> PilotMatrix<T> {
    /// Wraps an explicit pilot block; every column must carry `power`.
    pub fn new(x: Array2<Complex<T>>, power: T) -> Result<Self> {
        if !(power > T::zero()) {
            return Err(Error::param("p_bs", "transmit power must be positive"));
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        for col in x.columns() {
            let p: T = col
                .iter()
                .map(|v| v.norm_sqr())
                .fold(T::zero(), |a, b| a + b);
            if ((p - power) / power).abs() > tol {
                return Err(Error::param("pilot", "column power differs from p_BS"));
            }
        }
        Ok(PilotMatrix { x, power })
    }

    #[cfg(test)]
    pub(crate) fn unchecked(x: Array2<Complex<T>>, power: T) -> Self {
        PilotMatrix { x, power }
    }

    pub fn matrix(&self) -> &Array2<Complex<T>> {
        &self.x
    }

    pub fn power(&self) -> T {
        self.power
    }

    pub fn slots(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_tx(&self) -> usize {
        self.x.nrows()
    }

    /// First `slots` columns.
    pub fn truncated(&self, slots: usize) -> Self {
        PilotMatrix {
            x: self
                .x
                .slice(ndarray::s![.., ..slots.min(self.slots())])
                .to_owned(),
            power: self.power,
        }
    }

    /// The same column repeated `slots` times.
    pub fn repeated(&self, column: usize, slots: usize) -> Self {
        let col = self.x.column(column).to_owned();
        let mut x = Array2::from_elem((self.n_tx(), slots), Complex::new(T::zero(), T::zero()));
        for mut c in x.columns_mut() {
            c.assign(&col);
        }
        PilotMatrix {
            x,
            power: self.power,
        }
    }
}

fn check_pilot_args<T: Real>(slots: usize, power: T) -> Result<()> {
    if slots == 0 {
        return Err(Error::param("slots", "at least one slot is required"));
    }
    if !(power > T::zero()) || !power.is_finite() {
        return Err(Error::param("p_bs", "transmit power must be positive"));
    }
    Ok(())
}

/// Seeded random-phase pilot: unit-modulus entries scaled so every column
/// carries `power`.
pub fn make_pilot<T: Real>(
    cfg: &ArrayConfig<T>,
    slots: usize,
    power: T,
    seed: u64,
) -> Result<PilotMatrix<T>> {
    check_pilot_args(slots, power)?;
    let amp = (power / T::lit(cfg.n_tx as f64)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::from_elem((cfg.n_tx, slots), Complex::new(T::zero(), T::zero()));
    for l in 0..slots {
        for m in 0..cfg.n_tx {
            x[[m, l]] = cis(T::lit(rng.random::<f64>() * std::f64::consts::TAU)) * amp;
        }
    }
    Ok(PilotMatrix { x, power })
}

/// `x(l) = √(p_BS/N_t)·1` in every slot.
pub fn make_constant_pilot<T: Real>(
    cfg: &ArrayConfig<T>,
    slots: usize,
    power: T,
) -> Result<PilotMatrix<T>> {
    check_pilot_args(slots, power)?;
    let amp = (power / T::lit(cfg.n_tx as f64)).sqrt();
    Ok(PilotMatrix {
        x: Array2::from_elem((cfg.n_tx, slots), Complex::new(amp, T::zero())),
        power,
    })
}

/// Pilot whose phase ramp `e^{j n ζ}` coherently combines along the BS
/// spatial frequency `zeta`, repeated in every slot.
pub fn make_steered_pilot<T: Real>(
    cfg: &ArrayConfig<T>,
    slots: usize,
    power: T,
    zeta: T,
) -> Result<PilotMatrix<T>> {
    check_pilot_args(slots, power)?;
    let amp = (power / T::lit(cfg.n_tx as f64)).sqrt();
    let col = ula_response(cfg.n_tx, zeta).mapv(|v| v * amp);
    let mut x = Array2::from_elem((cfg.n_tx, slots), Complex::new(T::zero(), T::zero()));
    for mut c in x.columns_mut() {
        c.assign(&col);
    }
    Ok(PilotMatrix { x, power })
}

/// Transmit power and noise variance for an SNR defined as `p_BS/(N_r σ²)`,
/// with `σ² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T> {
    pub power: T,
    pub noise_variance: T,
}

impl<T: Real> LinkBudget<T> {
    pub fn from_snr_db(snr_db: T, n_rx: usize) -> Self {
        LinkBudget {
            power: T::lit(n_rx as f64) * T::lit(10.0).powf(snr_db / T::lit(10.0)),
            noise_variance: T::one(),
        }
    }
}

/// AWGN with per-antenna variance `σ²` (`CN(0, σ²)`: real and imaginary
/// parts each `N(0, σ²/2)`), drawn from a generator seeded with `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T> {
    pub variance: T,
    pub seed: u64,
}

impl<T: Real> NoiseModel<T> {
    pub fn new(variance: T, seed: u64) -> Result<Self> {
        if !(variance > T::zero()) || !variance.is_finite() {
            return Err(Error::param("noise_variance", "must be positive"));
        }
        Ok(NoiseModel { variance, seed })
    }
}

pub(crate) fn complex_gaussian<T: Real, R: Rng>(rng: &mut R, variance: T) -> Complex<T> {
    let s = (variance.as_f64() / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re * s), T::lit(im * s))
}

/// Stacked received pilots `y = [H̃x(1) + n(1); …; H̃x(L) + n(L)]`, noise
/// independent across slots and antennas. `noise = None` is noiseless.
pub fn synthesize_rx<T: Real>(
    pilot: &PilotMatrix<T>,
    channel: &Array2<Complex<T>>,
    noise: Option<&NoiseModel<T>>,
) -> Result<Array1<Complex<T>>> {
    let (n_rx, n_tx) = channel.dim();
    check_len("pilot rows vs channel columns", n_tx, pilot.n_tx())?;
    let slots = pilot.slots();
    let mut y = Array1::from_elem(slots * n_rx, Complex::new(T::zero(), T::zero()));
    let mut rng = noise.map(|nm| (ChaCha8Rng::seed_from_u64(nm.seed), nm.variance));
    for l in 0..slots {
        let x = pilot.x.column(l);
        for m in 0..n_rx {
            let mut acc = Complex::new(T::zero(), T::zero());
            for n in 0..n_tx {
                acc += channel[[m, n]] * x[n];
            }
            if let Some((rng, var)) = rng.as_mut() {
                acc += complex_gaussian(rng, *var);
            }
            y[l * n_rx + m] = acc;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Position3D, RisLayout};
    use approx::assert_relative_eq;

    type C = Complex<f64>;

    fn cfg(n_tx: usize, n_rx: usize) -> ArrayConfig<f64> {
        ArrayConfig::new(n_tx, n_rx, 0.003, 0.006).unwrap()
    }

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn k_is_pi_at_half_wavelength() {
        assert_relative_eq!(cfg(1, 1).k(), std::f64::consts::PI, epsilon = 1e-15);
    }

    #[test]
    fn responses_basic_values() {
        let c = cfg(3, 3);
        let a = array_response_tx(0.7, 1.9, &c);
        assert_eq!(a[0], C::new(1.0, 0.0));
        assert!(array_response_tx(0.0, 1.0, &c)
            .iter()
            .all(|v| close(*v, C::new(1.0, 0.0), 1e-15)));
        assert!(array_response_rx(0.0, 1.0, &c)
            .iter()
            .all(|v| close(*v, C::new(1.0, 0.0), 1e-15)));
        // sinθ·sinφ = 0.5 with k = π
        let t = array_response_tx(std::f64::consts::FRAC_PI_2, std::f64::consts::PI / 6.0, &c);
        let r = array_response_rx(std::f64::consts::FRAC_PI_2, std::f64::consts::PI / 6.0, &c);
        for v in [t, r] {
            assert!(close(v[1], C::new(0.0, 1.0), 1e-12));
            assert!(close(v[2], C::new(-1.0, 0.0), 1e-12));
        }
    }

    fn reference_geometry(side: usize) -> ScenarioGeometry<f64> {
        ScenarioGeometry::from_layout(
            Position3D::new(0.0, 0.0, 0.0),
            Position3D::new(50.0, 100.0, 0.0),
            &RisLayout::square(side, 0.1, Position3D::new(-20.0, 50.0, 20.0)),
        )
        .unwrap()
    }

    #[test]
    fn zero_gains_give_zero_channel() {
        let g = reference_geometry(2);
        let h = assemble_channel(
            &g,
            &PathGains::new(vec![C::new(0.0, 0.0); 4]).unwrap(),
            &PhaseVector::zeros(4),
            &cfg(4, 3),
        )
        .unwrap();
        assert!(h.iter().all(|v| *v == C::new(0.0, 0.0)));
    }

    #[test]
    fn single_path_is_outer_product() {
        let g = reference_geometry(1);
        let c = cfg(4, 3);
        let h = assemble_channel(
            &g,
            &PathGains::new(vec![C::new(1.0, 0.0)]).unwrap(),
            &PhaseVector::zeros(1),
            &c,
        )
        .unwrap();
        let aoa = g.aoa().unwrap()[0];
        let aod = g.aod().unwrap()[0];
        let ar = array_response_rx(aoa.elevation, aoa.azimuth, &c);
        let at = array_response_tx(aod.elevation, aod.azimuth, &c);
        for m in 0..3 {
            for n in 0..4 {
                assert!(close(h[[m, n]], ar[m] * at[n].conj(), 1e-13));
            }
        }
    }

    #[test]
    fn dimension_mismatch_reported() {
        let g = reference_geometry(2);
        let err = assemble_channel(
            &g,
            &PathGains::new(vec![C::new(1.0, 0.0); 3]).unwrap(),
            &PhaseVector::zeros(4),
            &cfg(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn xi_first_row_zero_and_vanishing_at_horizon() {
        let g = reference_geometry(2);
        let gains = PathGains::new(vec![C::new(0.3, -1.2); 4]).unwrap();
        let c = cfg(3, 4);
        let (d, dd) = xi_matrices(1, &g, &gains, &c).unwrap();
        for n in 0..3 {
            assert_eq!(d[[0, n]], C::new(0.0, 0.0));
            assert_eq!(dd[[0, n]], C::new(0.0, 0.0));
        }
        assert!(d[[1, 0]].norm() > 0.0);
        let aoa = vec![AoaPair {
            elevation: std::f64::consts::FRAC_PI_2,
            azimuth: 1.0,
        }];
        let aod = vec![AodPair {
            elevation: 0.4,
            azimuth: 0.9,
        }];
        let (d, _) = xi_matrices_from_angles(
            0,
            &aoa,
            &aod,
            &PathGains::new(vec![C::new(1.0, 0.0)]).unwrap(),
            &c,
        )
        .unwrap();
        assert!(d.iter().all(|v| v.norm() < 1e-15));
        assert!(matches!(
            xi_matrices(4, &g, &gains, &c),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn pilot_modes() {
        let c = cfg(4, 2);
        let p = make_constant_pilot(&c, 3, 4.0).unwrap();
        assert!(p
            .matrix()
            .iter()
            .all(|v| close(*v, C::new(1.0, 0.0), 1e-15)));
        let r = make_pilot(&c, 5, 7.5, 11).unwrap();
        for col in r.matrix().columns() {
            let pw: f64 = col.iter().map(|v| v.norm_sqr()).sum();
            assert_relative_eq!(pw, 7.5, max_relative = 1e-12);
        }
        assert_eq!(r, make_pilot(&c, 5, 7.5, 11).unwrap());
        assert_ne!(r, make_pilot(&c, 5, 7.5, 12).unwrap());
        let s = make_steered_pilot(&c, 2, 3.0, 0.8).unwrap();
        assert!(PilotMatrix::new(s.matrix().clone(), 3.0).is_ok());
        assert!(PilotMatrix::new(s.matrix().clone(), 3.5).is_err());
        assert!(make_pilot(&c, 0, 1.0, 0).is_err());
        assert!(make_pilot(&c, 1, 0.0, 0).is_err());
    }

    #[test]
    fn steered_pilot_is_matched_to_its_direction() {
        let c = cfg(8, 1);
        let zeta = 2.3;
        let pilot = make_steered_pilot(&c, 1, 8.0, zeta).unwrap();
        // a_tᴴ(ζ) x = Σ_n e^{-jnζ} e^{jnζ} √(p/N_t)
        let gain: C = (0..8)
            .map(|n| C::from_polar(1.0, -(n as f64) * zeta) * pilot.matrix()[[n, 0]])
            .sum();
        assert_relative_eq!(gain.norm(), 8.0, max_relative = 1e-12);
    }

    #[test]
    fn noiseless_and_seeded_observations() {
        let g = reference_geometry(2);
        let c = cfg(4, 3);
        let gains = PathGains::new(vec![
            C::new(0.5, 0.1),
            C::new(-0.2, 0.9),
            C::new(0.0, -1.0),
            C::new(1.0, 1.0),
        ])
        .unwrap();
        let h =
            assemble_channel(&g, &gains, &PhaseVector::new(vec![0.1, 0.2, 0.3, 0.4]), &c).unwrap();
        let pilot = make_pilot(&c, 2, 4.0, 3).unwrap();
        let y = synthesize_rx(&pilot, &h, None).unwrap();
        for l in 0..2 {
            let expected = h.dot(&pilot.matrix().column(l));
            for m in 0..3 {
                assert!(close(y[l * 3 + m], expected[m], 1e-14));
            }
        }
        let zero = Array2::from_elem((3, 4), C::new(0.0, 0.0));
        assert!(synthesize_rx(&pilot, &zero, None)
            .unwrap()
            .iter()
            .all(|v| v.norm() == 0.0));
        let noise = NoiseModel::new(0.5, 99).unwrap();
        let a = synthesize_rx(&pilot, &h, Some(&noise)).unwrap();
        let b = synthesize_rx(&pilot, &h, Some(&noise)).unwrap();
        assert_eq!(a, b);
        // slots receive different noise realizations
        let na: Vec<C> = (0..3).map(|m| a[m] - y[m]).collect();
        let nb: Vec<C> = (0..3).map(|m| a[3 + m] - y[3 + m]).collect();
        assert_ne!(na, nb);
        assert!(synthesize_rx(&pilot, &Array2::from_elem((3, 5), C::new(0.0, 0.0)), None).is_err());
    }

    #[test]
    fn noise_has_requested_variance() {
        let c = cfg(1, 1);
        let pilot = make_constant_pilot(&c, 20_000, 1.0).unwrap();
        let zero = Array2::from_elem((1, 1), C::new(0.0, 0.0));
        let y = synthesize_rx(&pilot, &zero, Some(&NoiseModel::new(2.0, 5).unwrap())).unwrap();
        let n = y.len() as f64;
        let re_var: f64 = y.iter().map(|v| v.re * v.re).sum::<f64>() / n;
        let im_var: f64 = y.iter().map(|v| v.im * v.im).sum::<f64>() / n;
        assert!((re_var - 1.0).abs() < 0.05, "{re_var}");
        assert!((im_var - 1.0).abs() < 0.05, "{im_var}");
    }

    #[test]
    fn snr_budget() {
        let b = LinkBudget::from_snr_db(30.0, 10);
        assert_relative_eq!(b.power, 10_000.0, max_relative = 1e-12);
        assert_eq!(b.noise_variance, 1.0);
    }

    #[test]
    fn phase_vector_wraps() {
        let p = PhaseVector::new(vec![-0.5, 7.0, std::f64::consts::TAU]);
        for &v in p.as_slice() {
            assert!((0.0..std::f64::consts::TAU).contains(&v));
        }
    }
}
