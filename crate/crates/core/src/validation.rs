//! Finite-difference oracles for the closed-form FIM and gradient
//! expressions, plus the random instance family they are checked on.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::beamforming::{crlb_gradient, fim_entry_gradients};
use crate::channel::{make_pilot, ArrayConfig, PathGains, PhaseVector, PilotMatrix};
use crate::error::Result;
use crate::estimator::mean_observation;
use crate::fim::{
    kappa_tensor, position_fim, transform_aoa_block, varpi, KappaTensor, ParamVector, VarpiSet,
};
use crate::geometry::{transform_matrix, Position3D, RisLayout, ScenarioGeometry, TransformMatrix};

/// Central-difference step used by the oracles (radians).
pub const FD_STEP: f64 = 1e-6;

/// A random but well-conditioned scenario: the MS sits in front of the RIS
/// and elements are metres apart so no two paths are nearly collinear.
#[derive(Debug, Clone)]
pub struct Instance {
    pub geometry: ScenarioGeometry<f64>,
    pub gains: PathGains<f64>,
    pub array: ArrayConfig<f64>,
    pub pilot: PilotMatrix<f64>,
    pub phases: PhaseVector<f64>,
    pub noise_variance: f64,
    pub varpi: VarpiSet<f64>,
    pub transform: TransformMatrix<f64>,
    pub kappa: KappaTensor<f64>,
}

/// Draws an instance with `n` paths (a square RIS when `n` is a perfect
/// square, a single row otherwise), `N_t = N_r = 4` and `slots` pilots.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, slots: usize) -> Result<Instance> {
    let side = (n as f64).sqrt().round() as usize;
    let (rows, cols) = if side * side == n {
        (side, side)
    } else {
        (1, n)
    };
    let reference = Position3D::new(
        rng.random_range(-30.0..30.0),
        rng.random_range(40.0..60.0),
        rng.random_range(10.0..30.0),
    );
    let layout = RisLayout {
        rows,
        cols,
        spacing: rng.random_range(1.0..4.0),
        reference,
    };
    let bs = Position3D::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        0.0,
    );
    let ms = Position3D::new(
        reference.x + rng.random_range(-40.0..40.0),
        reference.y + rng.random_range(20.0..80.0),
        0.0,
    );
    let geometry = ScenarioGeometry::from_layout(bs, ms, &layout)?;
    let gains = PathGains::random(n, rng);
    let array = ArrayConfig::new(4, 4, 0.003, 0.006)?;
    let power = rng.random_range(10.0..100.0);
    let pilot = make_pilot(&array, slots, power, rng.random())?;
    let phases = PhaseVector::random(n, rng);
    let noise_variance = rng.random_range(0.5..2.0);
    let varpi = varpi(&geometry, &gains, &pilot, &array)?;
    let transform = transform_matrix(&geometry)?;
    let kappa = kappa_tensor(&varpi, &transform)?;
    Ok(Instance {
        geometry,
        gains,
        array,
        pilot,
        phases,
        noise_variance,
        varpi,
        transform,
        kappa,
    })
}

fn unit(n: usize, i: usize, h: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = h;
    e
}

/// CRLB evaluated without the κ tensor. The position FIM is the Gram matrix
/// `(2/σ²) Re⟨g_a, g_b⟩` of the two derivative columns
/// `g_a = Σ_i e^{jϱ_i} (αᵃ_i ϖ̇_i + βᵃ_i ϖ̈_i)`; its determinant comes from a
/// re-orthogonalized two-column QR, which loses only `√cond(J_q)` digits
/// instead of `cond(J_q)` for the entrywise `J₁₁J₂₂ − J₁₂²`.
pub fn gram_crlb(
    varpi: &VarpiSet<f64>,
    transform: &TransformMatrix<f64>,
    phases: &PhaseVector<f64>,
    noise_variance: f64,
) -> f64 {
    let (n, slots, n_rx) = varpi.dot.dim();
    let v = phases.phasors();
    // real-stacked columns [Re g; Im g]
    let mut cols = [vec![0.0; 2 * slots * n_rx], vec![0.0; 2 * slots * n_rx]];
    for (a, col) in cols.iter_mut().enumerate() {
        for l in 0..slots {
            for m in 0..n_rx {
                let g: num_complex::Complex<f64> = (0..n)
                    .map(|i| {
                        v[i] * (varpi.dot[[i, l, m]] * transform.alpha(i)[a]
                            + varpi.ddot[[i, l, m]] * transform.beta(i)[a])
                    })
                    .sum();
                let r = l * n_rx + m;
                col[2 * r] = g.re;
                col[2 * r + 1] = g.im;
            }
        }
    }
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let [c1, mut c2] = cols;
    let (n1, n2) = (dot(&c1, &c1), dot(&c2, &c2));
    let r11 = n1.sqrt();
    for _ in 0..2 {
        let proj = dot(&c1, &c2) / n1;
        c2.iter_mut().zip(&c1).for_each(|(y, x)| *y -= proj * x);
    }
    let r22 = dot(&c2, &c2).sqrt();
    let scale = 2.0 / noise_variance;
    (n1 + n2) / (scale * (r11 * r22).powi(2))
}

/// Central differences of [`gram_crlb`] w.r.t. each phase.
pub fn fd_crlb_gradient(instance: &Instance, h: f64) -> Vec<f64> {
    let Instance {
        varpi,
        transform,
        phases,
        noise_variance,
        ..
    } = instance;
    let n = phases.len();
    let f = |p: &PhaseVector<f64>| gram_crlb(varpi, transform, p, *noise_variance);
    (0..n)
        .map(|i| {
            // stepped() subtracts, so a negative step moves forward
            let plus = f(&phases.stepped(-1.0, &unit(n, i, h)));
            let minus = f(&phases.stepped(1.0, &unit(n, i, h)));
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Central differences of the four `J_q` entries w.r.t. `ϱ_i`.
pub fn fd_fim_entry_gradients(
    kappa: &KappaTensor<f64>,
    phases: &PhaseVector<f64>,
    noise_variance: f64,
    i: usize,
    h: f64,
) -> Result<[[f64; 2]; 2]> {
    let n = phases.len();
    let plus = position_fim(kappa, &phases.stepped(-1.0, &unit(n, i, h)), noise_variance)?;
    let minus = position_fim(kappa, &phases.stepped(1.0, &unit(n, i, h)), noise_variance)?;
    Ok([0, 1].map(|a| [0, 1].map(|b| (plus.matrix[a][b] - minus.matrix[a][b]) / (2.0 * h))))
}

/// Position FIM computed the long way: numerical derivatives of the mean
/// observation w.r.t. every AoA, the `2N × 2N` angle information
/// `(2/σ²) Re(DᴴD)`, then the geometric transformation to `(q_x, q_y)`.
pub fn numerical_position_fim(instance: &Instance, h: f64) -> Result<[[f64; 2]; 2]> {
    let Instance {
        geometry,
        gains,
        array,
        pilot,
        phases,
        noise_variance,
        ..
    } = instance;
    let truth = ParamVector::from_truth(geometry, gains)?;
    let aod = geometry.aod()?;
    let n = truth.paths();
    let rows = pilot.slots() * array.n_rx;
    let mut d = Array2::from_elem((rows, 2 * n), num_complex::Complex::new(0.0, 0.0));
    for i in 0..n {
        for (col, angle) in [(i, 0), (n + i, 1)] {
            let shift = |delta: f64| {
                let mut p = truth.clone();
                if angle == 0 {
                    p.elevations[i] += delta;
                } else {
                    p.azimuths[i] += delta;
                }
                mean_observation(&p, &aod, phases, pilot, array)
            };
            let (plus, minus) = (shift(h)?, shift(-h)?);
            for r in 0..rows {
                d[[r, col]] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
    }
    let mut block = Array2::zeros((2 * n, 2 * n));
    for a in 0..2 * n {
        for b in 0..2 * n {
            let s: num_complex::Complex<f64> =
                (0..rows).map(|r| d[[r, a]].conj() * d[[r, b]]).sum();
            block[[a, b]] = 2.0 / noise_variance * s.re;
        }
    }
    transform_aoa_block(&block, &transform_matrix(geometry)?)
}

/// Worst-case agreement between closed-form and finite-difference phase
/// gradients over a batch of random instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub instances: usize,
    pub max_relative_error: f64,
}

/// Gradient error on one instance: `‖g − g_fd‖∞ / ‖g_fd‖∞`. With one path the
/// CRLB is undefined, so the FIM-entry derivatives (which must vanish) are
/// compared instead, relative to `‖J_q‖_F`.
pub fn gradient_error(instance: &Instance, h: f64) -> Result<f64> {
    let Instance {
        kappa,
        phases,
        noise_variance,
        ..
    } = instance;
    let n = phases.len();
    if n == 1 {
        let scale = position_fim(kappa, phases, *noise_variance)?.frobenius_norm();
        let d = fim_entry_gradients(kappa, phases, *noise_variance, 0)?;
        let fd = fd_fim_entry_gradients(kappa, phases, *noise_variance, 0, h)?;
        let err = [
            (d.d11, fd[0][0]),
            (d.d12, fd[0][1]),
            (d.d21, fd[1][0]),
            (d.d22, fd[1][1]),
        ]
        .iter()
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        return Ok(err / scale);
    }
    let g = crlb_gradient(kappa, phases, *noise_variance)?;
    let fd = fd_crlb_gradient(instance, h);
    let inf = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0_f64, |acc, x| acc.max(x.abs()));
    Ok(inf(&mut g.iter().zip(&fd).map(|(a, b)| a - b)) / inf(&mut fd.iter().copied()))
}

/// Runs [`gradient_error`] over `instances` draws cycling through
/// `N ∈ {1, 4, 9}` and `L ∈ {1, 2}`.
pub fn gradient_check(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let n = [1, 4, 9][k % 3];
        let slots = 1 + (k / 3) % 2;
        let inst = random_instance(&mut rng, n, slots)?;
        worst = worst.max(gradient_error(&inst, FD_STEP)?);
    }
    Ok(GradCheckReport {
        instances,
        max_relative_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_gradient_check_passes() {
        let report = gradient_check(12, 1).unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn gram_and_kappa_objectives_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [4, 9] {
            let inst = random_instance(&mut rng, n, 2).unwrap();
            let fim = position_fim(&inst.kappa, &inst.phases, inst.noise_variance).unwrap();
            let direct = crate::fim::crlb(&fim).unwrap();
            let gram = gram_crlb(
                &inst.varpi,
                &inst.transform,
                &inst.phases,
                inst.noise_variance,
            );
            assert!((direct - gram).abs() <= 1e-8 * direct, "{direct} vs {gram}");
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn numerical_fim_matches_kappa_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = random_instance(&mut rng, 4, 2).unwrap();
        let num = numerical_position_fim(&inst, 1e-6).unwrap();
        let fim = position_fim(&inst.kappa, &inst.phases, inst.noise_variance).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let rel = (num[a][b] - fim.matrix[a][b]).abs() / fim.frobenius_norm();
                assert!(
                    rel < 1e-6,
                    "({a},{b}) {} vs {}",
                    num[a][b],
                    fim.matrix[a][b]
                );
            }
        }
    }
}
