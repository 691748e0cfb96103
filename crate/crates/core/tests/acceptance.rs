//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints its `criterion N (...): PASS|FAIL (...)` line even when it passes;
//! the process fails if any criterion does.

// NaN must count as a violation, hence `!(a <= b)`
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ris_crlb::beamforming::gdm_optimize;
use ris_crlb::channel::{ArrayConfig, LinkBudget, PathGains, PhaseVector, PilotMatrix};
use ris_crlb::experiments::{
    build_pilot, realization, run_convergence, run_position_sweep, run_sweep, write_csv, ResultRow,
    RunOptions, ScenarioConfig,
};
use ris_crlb::fim::{crlb, kappa_for_scenario, position_fim, varpi, KappaTensor};
use ris_crlb::geometry::{compute_aoa, transform_matrix, Position3D, ScenarioGeometry};
use ris_crlb::validation::{
    gradient_check, gram_crlb, numerical_position_fim, random_instance, Instance,
};

struct Verdict {
    name: &'static str,
    pass: bool,
    details: String,
}

fn verdict(name: &'static str, pass: bool, details: String) -> Verdict {
    Verdict {
        name,
        pass,
        details,
    }
}

fn instance_family(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| random_instance(&mut rng, [1, 4, 9][k % 3], 1 + (k / 3) % 2).unwrap())
        .collect()
}

fn criterion_1_gradient_oracle() -> Verdict {
    let report = gradient_check(150, 2024).unwrap();
    verdict(
        "gradient oracle",
        report.instances >= 100 && report.max_relative_error < 1e-6,
        format!(
            "{} instances, max relative error {:.3e}",
            report.instances, report.max_relative_error
        ),
    )
}

fn criterion_2_fim_path_equivalence() -> Verdict {
    let mut worst = 0.0_f64;
    let family = instance_family(120, 77);
    for inst in &family {
        let direct = position_fim(&inst.kappa, &inst.phases, inst.noise_variance).unwrap();
        let numeric = numerical_position_fim(inst, 1e-6).unwrap();
        let scale = direct.frobenius_norm();
        for a in 0..2 {
            for b in 0..2 {
                worst = worst.max((direct.matrix[a][b] - numeric[a][b]).abs() / scale);
            }
        }
    }
    verdict(
        "FIM path equivalence",
        worst < 1e-6,
        format!(
            "{} instances, max entrywise relative error {worst:.3e}",
            family.len()
        ),
    )
}

fn eigenvalues(m: &[[f64; 2]; 2]) -> (f64, f64) {
    let (tr, det) = (m[0][0] + m[1][1], m[0][0] * m[1][1] - m[0][1] * m[1][0]);
    let d = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - d, tr / 2.0 + d)
}

fn condition(m: &[[f64; 2]; 2]) -> f64 {
    let (lo, hi) = eigenvalues(m);
    hi / lo
}

/// CRLB through the κ tensor, with the rounding floor of its `tr/det`
/// evaluation, `eps·cond(J)`.
fn kappa_crlb(
    kappa: &KappaTensor<f64>,
    phases: &PhaseVector<f64>,
    noise_variance: f64,
) -> (f64, f64) {
    let j = position_fim(kappa, phases, noise_variance).unwrap();
    (crlb(&j).unwrap(), f64::EPSILON * condition(&j.matrix))
}

/// CRLB through the QR of the two derivative columns.
fn stable_crlb(
    geometry: &ScenarioGeometry<f64>,
    gains: &PathGains<f64>,
    pilot: &PilotMatrix<f64>,
    array: &ArrayConfig<f64>,
    phases: &PhaseVector<f64>,
    noise_variance: f64,
) -> f64 {
    let v = varpi(geometry, gains, pilot, array).unwrap();
    gram_crlb(
        &v,
        &transform_matrix(geometry).unwrap(),
        phases,
        noise_variance,
    )
}

/// Tracks the worst relative error of an identity, both as measured by the
/// stable evaluator and as a multiple of the κ path's rounding floor.
#[derive(Default)]
struct Identity {
    stable: f64,
    kappa_floors: f64,
}

impl Identity {
    fn record(&mut self, stable: (f64, f64), kappa: (f64, f64), floor: f64) {
        let rel = |(got, want): (f64, f64)| (got - want).abs() / want.abs();
        self.stable = self.stable.max(rel(stable));
        self.kappa_floors = self.kappa_floors.max(rel(kappa) / floor);
    }

    fn holds(&self, tol: f64) -> bool {
        self.stable < tol && self.kappa_floors < 64.0
    }

    fn describe(&self, name: &str) -> String {
        format!(
            "{name} {:.2e} (κ path {:.1} rounding floors)",
            self.stable, self.kappa_floors
        )
    }
}

fn criterion_3_exact_invariances() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let family = instance_family(90, 31);
    let (mut phase, mut sigma, mut slots) = (
        Identity::default(),
        Identity::default(),
        Identity::default(),
    );
    let (mut sym, mut psd, mut checked) = (0.0_f64, 0.0_f64, 0);
    for inst in &family {
        let j = position_fim(&inst.kappa, &inst.phases, inst.noise_variance).unwrap();
        let norm = j.frobenius_norm();
        sym = sym.max((j.matrix[0][1] - j.matrix[1][0]).abs() / norm);
        psd = psd.max(-eigenvalues(&j.matrix).0 / norm);
        if inst.geometry.paths() == 1 {
            // rank one: there is no CRLB to compare
            continue;
        }
        checked += 1;
        let s2 = inst.noise_variance;
        let stable = |pilot: &PilotMatrix<f64>, phases: &PhaseVector<f64>, s2: f64| {
            stable_crlb(&inst.geometry, &inst.gains, pilot, &inst.array, phases, s2)
        };
        let (base, floor) = kappa_crlb(&inst.kappa, &inst.phases, s2);
        let base_stable = stable(&inst.pilot, &inst.phases, s2);

        let shifted = inst
            .phases
            .shifted(rng.random_range(0.0..std::f64::consts::TAU));
        phase.record(
            (stable(&inst.pilot, &shifted, s2), base_stable),
            (kappa_crlb(&inst.kappa, &shifted, s2).0, base),
            floor,
        );

        let c = rng.random_range(0.1..10.0);
        sigma.record(
            (stable(&inst.pilot, &inst.phases, c * s2), c * base_stable),
            (kappa_crlb(&inst.kappa, &inst.phases, c * s2).0, c * base),
            floor,
        );

        let single = inst.pilot.truncated(1);
        let k1 = kappa_for_scenario(&inst.geometry, &inst.gains, &single, &inst.array).unwrap();
        let (one, floor1) = kappa_crlb(&k1, &inst.phases, s2);
        let one_stable = stable(&single, &inst.phases, s2);
        for l in [2, 3, 5, 8] {
            let repeated = single.repeated(0, l);
            let kl =
                kappa_for_scenario(&inst.geometry, &inst.gains, &repeated, &inst.array).unwrap();
            let lf = l as f64;
            slots.record(
                (stable(&repeated, &inst.phases, s2), one_stable / lf),
                (kappa_crlb(&kl, &inst.phases, s2).0, one / lf),
                floor1,
            );
        }
    }
    let pass = phase.holds(1e-10)
        && sigma.holds(1e-12)
        && slots.holds(1e-12)
        && sym < 1e-12
        && psd < 1e-12;
    verdict(
        "exact invariances",
        pass,
        format!(
            "{} instances ({checked} with a CRLB): {}, {}, {}, asymmetry {sym:.2e}, negative eigenvalue {psd:.2e}",
            family.len(),
            phase.describe("global phase"),
            sigma.describe("noise scaling"),
            slots.describe("repeated pilot"),
        ),
    )
}

fn criterion_4_transform_matrix_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-6;
    let mut worst = 0.0_f64;
    let count = 300;
    for _ in 0..count {
        let bs = Position3D::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            0.0,
        );
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let ms = Position3D::new(
            rng.random_range(-80.0..80.0),
            50.0 + side * rng.random_range(3.0..100.0),
            0.0,
        );
        let ris = (0..4)
            .map(|_| {
                Position3D::new(
                    rng.random_range(-30.0..30.0),
                    50.0,
                    rng.random_range(5.0..30.0),
                )
            })
            .collect();
        let g = ScenarioGeometry::new(bs, ms, ris).unwrap();
        let t = transform_matrix(&g).unwrap();
        for (i, s) in g.ris().iter().enumerate() {
            let fd = |dx: f64, dy: f64| {
                let p = compute_aoa(&ms.translated(dx, dy, 0.0), s).unwrap();
                let m = compute_aoa(&ms.translated(-dx, -dy, 0.0), s).unwrap();
                [
                    (p.elevation - m.elevation) / (2.0 * h),
                    (p.azimuth - m.azimuth) / (2.0 * h),
                ]
            };
            let (ex, ey) = (fd(h, 0.0), fd(0.0, h));
            let analytic = [t.alpha(i)[0], t.alpha(i)[1], t.beta(i)[0], t.beta(i)[1]];
            let numeric = [ex[0], ey[0], ex[1], ey[1]];
            let scale = numeric.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            for (a, b) in analytic.iter().zip(&numeric) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    verdict(
        "transform matrix oracle",
        worst < 1e-6,
        format!("{count} geometries, max relative error {worst:.3e}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn criterion_5_convergence_reproduction() -> Verdict {
    let cfg = ScenarioConfig::default_convergence();
    let rows = run_convergence(&cfg, RunOptions::default()).unwrap();
    let mut traces: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    let mut errors = 0;
    for r in &rows {
        errors += usize::from(r.error.is_some());
        if let Some(c) = r.crlb {
            traces
                .entry((r.seed, r.snr_db.to_bits()))
                .or_default()
                .push(c);
        }
    }
    let monotone = traces.values().all(|t| t.windows(2).all(|w| w[1] <= w[0]));
    let finals = |snr: f64| {
        median(
            traces
                .iter()
                .filter(|((_, s), _)| f64::from_bits(*s) == snr)
                .map(|(_, t)| *t.last().unwrap())
                .collect(),
        )
    };
    let (m30, m40) = (finals(30.0), finals(40.0));
    let within = |m: f64, target: f64| m >= target / 3.0 && m <= target * 3.0;

    // fixed gains and phases: the SNR enters only through the pilot power
    let geometry = cfg.geometry(None, cfg.ms_pos).unwrap();
    let array = cfg.array().unwrap();
    let mut ratio = Identity::default();
    for s in 0..cfg.seeds {
        let real = realization(cfg.seed, s, geometry.paths());
        let at = |snr: f64| {
            let budget = LinkBudget::from_snr_db(snr, cfg.n_rx);
            let pilot = build_pilot(
                cfg.pilot_mode,
                &array,
                &geometry,
                &cfg.ris,
                1,
                budget.power,
                real.pilot_seed,
            )
            .unwrap();
            let kappa = kappa_for_scenario(&geometry, &real.gains, &pilot, &array).unwrap();
            (pilot, kappa, budget.noise_variance)
        };
        let ((p30, k30, s30), (p40, k40, s40)) = (at(30.0), at(40.0));
        let optimized = gdm_optimize(&k30, &real.initial, s30, &cfg.gdm.to_config())
            .unwrap()
            .phases;
        for phases in [&real.initial, &optimized] {
            let (c30, floor) = kappa_crlb(&k30, phases, s30);
            let c40 = kappa_crlb(&k40, phases, s40).0;
            let g30 = stable_crlb(&geometry, &real.gains, &p30, &array, phases, s30);
            let g40 = stable_crlb(&geometry, &real.gains, &p40, &array, phases, s40);
            ratio.record((g30 / g40, 10.0), (c30 / c40, 10.0), floor);
        }
    }

    let pass = traces.len() >= 40
        && errors == 0
        && monotone
        && within(m30, 0.1)
        && within(m40, 0.01)
        && ratio.holds(1e-9);
    verdict(
        "convergence reproduction",
        pass,
        format!(
            "{} traces, non-increasing {monotone}, errors {errors}, median 30 dB {m30:.4}, \
             median 40 dB {m40:.5}, {}",
            traces.len(),
            ratio.describe("30/40 dB ratio error")
        ),
    )
}

fn criterion_6_sweep_trends() -> Verdict {
    let cfg = ScenarioConfig::default_sweep();
    let rows = run_sweep(&cfg, RunOptions::default()).unwrap();
    let mut grid: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
    let mut missing = 0;
    for r in &rows {
        match r.crlb {
            Some(c) => {
                grid.insert((r.n, r.l, r.snr_db.to_bits()), c);
            }
            None => missing += 1,
        }
    }
    let get = |n: usize, l: usize, snr: f64| {
        grid.get(&(n, l, snr.to_bits()))
            .copied()
            .unwrap_or(f64::NAN)
    };
    let ns: Vec<usize> = cfg.ris_sides.iter().map(|s| s * s).collect();
    let (mut l_bad, mut snr_bad, mut n_ok, mut n_cells) = (0, 0, 0, 0);
    for &n in &ns {
        for &snr in &cfg.snr_db {
            l_bad += cfg
                .slots
                .windows(2)
                .filter(|w| !(get(n, w[1], snr) <= get(n, w[0], snr)))
                .count();
        }
        for &l in &cfg.slots {
            snr_bad += cfg
                .snr_db
                .windows(2)
                .filter(|w| !(get(n, l, w[1]) <= get(n, l, w[0])))
                .count();
        }
    }
    for &l in &cfg.slots {
        for &snr in &cfg.snr_db {
            n_cells += 1;
            n_ok += usize::from(
                ns.windows(2)
                    .all(|w| get(w[1], l, snr) <= get(w[0], l, snr)),
            );
        }
    }
    let frac = n_ok as f64 / n_cells as f64;
    verdict(
        "sweep trends",
        missing == 0 && l_bad == 0 && snr_bad == 0 && frac >= 0.9,
        format!(
            "{} cells, {missing} without value, L violations {l_bad}, SNR violations {snr_bad}, \
             N-monotone fraction {frac:.3}",
            rows.len()
        ),
    )
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn criterion_7_position_trends() -> Verdict {
    let cfg = ScenarioConfig::default_position();
    let rows = run_position_sweep(&cfg, RunOptions::default()).unwrap();
    let mut curves: BTreeMap<(&str, usize), Vec<(f64, f64)>> = BTreeMap::new();
    let mut skipped = 0;
    for r in &rows {
        let coord = if r.experiment == "position_x" {
            r.ms_x
        } else {
            r.ms_y
        };
        match r.crlb {
            Some(c) if r.samples == cfg.seeds => curves
                .entry((r.experiment, r.n))
                .or_default()
                .push((coord, c)),
            _ => skipped += 1,
        }
    }
    let mut pass = curves.len() == 2 * cfg.ris_sides.len();
    let mut parts = Vec::new();
    for ((axis, n), pts) in &mut curves {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let rho = spearman(&x, &y);
        let rising = y.last() > y.first();
        pass &= rising && rho > 0.8;
        parts.push(format!(
            "{axis} N={n}: {:.3}@{} -> {:.3}@{} rho {rho:.2}",
            y[0],
            x[0],
            y[y.len() - 1],
            x[x.len() - 1]
        ));
    }
    verdict(
        "position trends",
        pass,
        format!(
            "{skipped} positions without a full seed average; {}",
            parts.join("; ")
        ),
    )
}

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(rows, &mut out).unwrap();
    out
}

fn all_experiments() -> Vec<Vec<u8>> {
    let mut conv = ScenarioConfig::default_convergence();
    conv.seeds = 3;
    let mut sweep = ScenarioConfig::default_sweep();
    sweep.seeds = 2;
    sweep.slots = vec![1, 2, 3];
    let mut position = ScenarioConfig::default_position();
    position.seeds = 2;
    position.position_step = 25.0;
    let crlb = ris_crlb::experiments::evaluate_crlb(&conv).unwrap();
    let mut alt = conv.clone();
    alt.estimator.kind = ris_crlb::estimator::EstimatorKind::PerturbedOracle;
    alt.estimator.perturbation_scale = 0.01;
    let alt = ris_crlb::experiments::evaluate_alt_opt(&alt, true).unwrap();
    vec![
        csv_bytes(&run_convergence(&conv, RunOptions::default()).unwrap()),
        csv_bytes(&run_sweep(&sweep, RunOptions::default()).unwrap()),
        csv_bytes(&run_position_sweep(&position, RunOptions::default()).unwrap()),
        format!("{:?}", crlb.trace).into_bytes(),
        format!("{alt:?}").into_bytes(),
    ]
}

fn criterion_8_determinism() -> Verdict {
    let pool = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
    };
    let serial = pool(1).install(all_experiments);
    let again = pool(1).install(all_experiments);
    let parallel = pool(4).install(all_experiments);
    let same = serial == again && serial == parallel;
    verdict(
        "determinism",
        same,
        format!(
            "{} outputs ({} bytes) compared across two serial runs and a 4-thread run",
            serial.len(),
            serial.iter().map(Vec::len).sum::<usize>()
        ),
    )
}

fn main() {
    let criteria: [fn() -> Verdict; 8] = [
        criterion_1_gradient_oracle,
        criterion_2_fim_path_equivalence,
        criterion_3_exact_invariances,
        criterion_4_transform_matrix_oracle,
        criterion_5_convergence_reproduction,
        criterion_6_sweep_trends,
        criterion_7_position_trends,
        criterion_8_determinism,
    ];
    let mut failed = 0;
    for (i, run) in criteria.iter().enumerate() {
        let v = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict("panicked", false, msg)
        });
        failed += usize::from(!v.pass);
        println!(
            "criterion {} ({}): {} ({})",
            i + 1,
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            v.details
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
