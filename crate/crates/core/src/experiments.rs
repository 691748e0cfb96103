//! Scenario configuration and the three Monte-Carlo experiments: GDM
//! convergence traces, the (L, N, SNR) sweep and the MS position sweep.
//!
//! Every experiment is a pure function of its config. Channel gains,
//! initial phases and random pilots for realization `s` are drawn from a
//! generator keyed on `(seed + s, N)` only, so the same realization is shared
//! by every slot count, SNR and MS position (paired comparisons), and cells
//! can be evaluated in any order.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    alternating_optimize, gdm_optimize, AltOptConfig, AltOptStatus, GdmConfig, GdmStatus,
    OptimizationTrace, Scenario, StopTolerance,
};
use crate::channel::{
    make_constant_pilot, make_pilot, make_steered_pilot, ArrayConfig, LinkBudget, NoiseModel,
    PathGains, PhaseVector, PilotMatrix, PilotMode,
};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorSpec};
use crate::fim::{crlb, kappa_for_scenario, position_fim};
use crate::geometry::{compute_aod, Position3D, RisLayout, ScenarioGeometry};

/// CSV header shared by all experiments.
pub const CSV_HEADER: [&str; 12] = [
    "experiment",
    "seed",
    "n",
    "l",
    "snr_db",
    "ms_x",
    "ms_y",
    "iteration",
    "crlb",
    "samples",
    "wall_ms",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdmSettings {
    /// Stop once one step improves the CRLB by at most this fraction of the
    /// starting value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub initial_step: f64,
}

impl Default for GdmSettings {
    fn default() -> Self {
        let d = GdmConfig::<f64>::default();
        GdmSettings {
            tolerance: 1e-8,
            max_iterations: d.max_iterations,
            armijo: d.armijo,
            backtrack: d.backtrack,
            initial_step: d.initial_step,
        }
    }
}

impl GdmSettings {
    pub fn to_config(&self) -> GdmConfig<f64> {
        GdmConfig {
            tolerance: StopTolerance::Relative(self.tolerance),
            max_iterations: self.max_iterations,
            armijo: self.armijo,
            backtrack: self.backtrack,
            initial_step: self.initial_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AltOptSettings {
    pub max_outer_iterations: usize,
    pub param_tolerance: f64,
    pub phase_tolerance: f64,
}

impl Default for AltOptSettings {
    fn default() -> Self {
        let d = AltOptConfig::<f64>::default();
        AltOptSettings {
            max_outer_iterations: d.max_outer_iterations,
            param_tolerance: d.param_tolerance,
            phase_tolerance: d.phase_tolerance,
        }
    }
}

impl AltOptSettings {
    pub fn to_config(&self) -> AltOptConfig<f64> {
        AltOptConfig {
            max_outer_iterations: self.max_outer_iterations,
            param_tolerance: self.param_tolerance,
            phase_tolerance: self.phase_tolerance,
        }
    }
}

/// A complete experiment description. The JSON form uses exactly these
/// field names; unknown keys are rejected. Fields after `pilot_mode` are
/// optional and default to the reference scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Meters.
    pub wavelength: f64,
    /// Meters, same at BS and MS.
    pub antenna_spacing: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub bs_pos: Position3D<f64>,
    pub ms_pos: Position3D<f64>,
    pub ris: RisLayout<f64>,
    pub snr_db: Vec<f64>,
    pub slots: Vec<usize>,
    pub seed: u64,
    pub pilot_mode: PilotMode,
    /// Channel realizations per cell.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Square RIS side lengths for the sweeps (`N = side²`).
    #[serde(default = "default_ris_sides")]
    pub ris_sides: Vec<usize>,
    #[serde(default = "default_x_range")]
    pub x_range: [f64; 2],
    #[serde(default = "default_y_range")]
    pub y_range: [f64; 2],
    /// Meters between MS positions in the position sweep.
    #[serde(default = "default_position_step")]
    pub position_step: f64,
    #[serde(default)]
    pub gdm: GdmSettings,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub alt_opt: AltOptSettings,
}

fn default_seeds() -> usize {
    20
}

fn default_ris_sides() -> Vec<usize> {
    vec![4, 5, 6]
}

fn default_x_range() -> [f64; 2] {
    [0.0, 100.0]
}

fn default_y_range() -> [f64; 2] {
    [50.0, 150.0]
}

fn default_position_step() -> f64 {
    10.0
}

fn config_err(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {message}"))
}

impl ScenarioConfig {
    /// The convergence setup: `N_t = N_r = 10`, a 5×5 RIS, one slot and
    /// SNR ∈ {30, 40} dB.
    pub fn default_convergence() -> Self {
        ScenarioConfig {
            wavelength: 0.006,
            antenna_spacing: 0.003,
            n_tx: 10,
            n_rx: 10,
            bs_pos: Position3D::new(0.0, 0.0, 0.0),
            ms_pos: Position3D::new(50.0, 100.0, 0.0),
            ris: RisLayout::square(5, 0.1, Position3D::new(-20.0, 50.0, 20.0)),
            snr_db: vec![30.0, 40.0],
            slots: vec![1],
            seed: 1,
            pilot_mode: PilotMode::Steered,
            seeds: default_seeds(),
            ris_sides: default_ris_sides(),
            x_range: default_x_range(),
            y_range: default_y_range(),
            position_step: default_position_step(),
            gdm: GdmSettings::default(),
            estimator: EstimatorSpec::default(),
            alt_opt: AltOptSettings::default(),
        }
    }

    /// The sweep grid: `L ∈ 1..=10`, `N ∈ {16, 25, 36}`, SNR ∈ {20, 30, 40} dB.
    pub fn default_sweep() -> Self {
        ScenarioConfig {
            snr_db: vec![20.0, 30.0, 40.0],
            slots: (1..=10).collect(),
            ..Self::default_convergence()
        }
    }

    /// MS x over [0, 100] and y over [50, 150] at 30 dB with one slot.
    pub fn default_position() -> Self {
        ScenarioConfig {
            snr_db: vec![30.0],
            slots: vec![1],
            ..Self::default_convergence()
        }
    }

    /// Parses and validates a JSON config. Syntax errors carry serde's line
    /// and column; semantic errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(field, format!("must be positive, got {v}")))
            }
        };
        positive("wavelength", self.wavelength)?;
        positive("antenna_spacing", self.antenna_spacing)?;
        if self.n_tx == 0 {
            return Err(config_err("n_tx", "must be at least 1"));
        }
        if self.n_rx == 0 {
            return Err(config_err("n_rx", "must be at least 1"));
        }
        self.ris.validate().map_err(|e| config_err("ris", e))?;
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(config_err(
                "snr_db",
                "must be a non-empty list of finite values",
            ));
        }
        if self.slots.is_empty() || self.slots.contains(&0) {
            return Err(config_err(
                "slots",
                "must be a non-empty list of positive counts",
            ));
        }
        if self.seeds == 0 {
            return Err(config_err("seeds", "must be at least 1"));
        }
        if self.ris_sides.is_empty() || self.ris_sides.contains(&0) {
            return Err(config_err(
                "ris_sides",
                "must be a non-empty list of positive sides",
            ));
        }
        for (field, [lo, hi]) in [("x_range", self.x_range), ("y_range", self.y_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(config_err(field, "must be [low, high] with low <= high"));
            }
        }
        positive("position_step", self.position_step)?;
        self.gdm
            .to_config()
            .validate()
            .map_err(|e| config_err("gdm", e))?;
        self.estimator
            .validate()
            .map_err(|e| config_err("estimator", e))?;
        self.alt_opt
            .to_config()
            .validate()
            .map_err(|e| config_err("alt_opt", e))?;
        self.geometry(None, self.ms_pos)
            .map_err(|e| config_err("ms_pos/bs_pos/ris", e))?;
        Ok(())
    }

    pub fn array(&self) -> Result<ArrayConfig<f64>> {
        ArrayConfig::new(self.n_tx, self.n_rx, self.antenna_spacing, self.wavelength)
    }

    /// The configured RIS, or a `side × side` RIS at the same reference and
    /// spacing.
    pub fn layout(&self, side: Option<usize>) -> RisLayout<f64> {
        match side {
            Some(s) => RisLayout::square(s, self.ris.spacing, self.ris.reference),
            None => self.ris,
        }
    }

    pub fn geometry(
        &self,
        side: Option<usize>,
        ms: Position3D<f64>,
    ) -> Result<ScenarioGeometry<f64>> {
        ScenarioGeometry::from_layout(self.bs_pos, ms, &self.layout(side))
    }

    /// Positions visited by the position sweep along one axis.
    pub fn sweep_points(&self, range: [f64; 2]) -> Vec<f64> {
        let count = ((range[1] - range[0]) / self.position_step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| range[0] + k as f64 * self.position_step)
            .collect()
    }
}

/// Random quantities of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub seed: u64,
    pub gains: PathGains<f64>,
    pub initial: PhaseVector<f64>,
    pub pilot_seed: u64,
}

/// Draws realization `index` for `n` paths from stream `n` of the generator
/// seeded with `master + index`.
pub fn realization(master: u64, index: usize, n: usize) -> Realization {
    let seed = master.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let gains = PathGains::random(n, &mut rng);
    let initial = PhaseVector::random(n, &mut rng);
    Realization {
        seed,
        gains,
        initial,
        pilot_seed: rng.random(),
    }
}

/// Pilot block for `slots` slots at transmit power `power`. Random pilots
/// are nested: the `L`-slot block is the first `L` columns of any longer one.
pub fn build_pilot(
    mode: PilotMode,
    array: &ArrayConfig<f64>,
    geometry: &ScenarioGeometry<f64>,
    ris: &RisLayout<f64>,
    slots: usize,
    power: f64,
    seed: u64,
) -> Result<PilotMatrix<f64>> {
    match mode {
        PilotMode::Random => make_pilot(array, slots, power, seed),
        PilotMode::Constant => make_constant_pilot(array, slots, power),
        PilotMode::Steered => {
            let aod = compute_aod(geometry.bs(), &ris.centroid())?;
            let zeta = array.k() * aod.elevation.sin() * aod.azimuth.sin();
            make_steered_pilot(array, slots, power, zeta)
        }
    }
}

/// Runs GDM from the realization's initial phases for one (geometry, SNR,
/// L) cell.
pub fn optimize_cell(
    cfg: &ScenarioConfig,
    geometry: &ScenarioGeometry<f64>,
    layout: &RisLayout<f64>,
    real: &Realization,
    snr_db: f64,
    slots: usize,
) -> Result<OptimizationTrace<f64>> {
    let array = cfg.array()?;
    let budget = LinkBudget::from_snr_db(snr_db, cfg.n_rx);
    let pilot = build_pilot(
        cfg.pilot_mode,
        &array,
        geometry,
        layout,
        slots,
        budget.power,
        real.pilot_seed,
    )?;
    let kappa = kappa_for_scenario(geometry, &real.gains, &pilot, &array)?;
    gdm_optimize(
        &kappa,
        &real.initial,
        budget.noise_variance,
        &cfg.gdm.to_config(),
    )
}

/// Short machine-readable tag for the CSV `error` column.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::SingularFim { .. } => "singular_fim",
        Error::LineSearchFailed { .. } => "line_search_failed",
        Error::DegenerateGeometry { .. } => "degenerate_geometry",
        _ => "invalid_input",
    }
}

fn status_code(status: GdmStatus) -> Option<&'static str> {
    match status {
        GdmStatus::SingularFim => Some("singular_fim"),
        GdmStatus::LineSearchFailed => Some("line_search_failed"),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub seed: u64,
    pub n: usize,
    pub l: usize,
    pub snr_db: f64,
    pub ms_x: f64,
    pub ms_y: f64,
    /// `-1` for aggregated rows.
    pub iteration: i64,
    pub crlb: Option<f64>,
    pub samples: usize,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    fn record(&self) -> [String; 12] {
        let float = |v: f64| format!("{v:.16e}");
        [
            self.experiment.to_string(),
            self.seed.to_string(),
            self.n.to_string(),
            self.l.to_string(),
            self.snr_db.to_string(),
            self.ms_x.to_string(),
            self.ms_y.to_string(),
            self.iteration.to_string(),
            self.crlb.map(float).unwrap_or_default(),
            self.samples.to_string(),
            self.wall_ms.map(float).unwrap_or_default(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()
}

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Fill the `wall_ms` column. Timings differ between runs, so this
    /// breaks byte-identical output.
    pub timing: bool,
}

fn timed<R>(timing: bool, f: impl FnOnce() -> R) -> (R, Option<f64>) {
    let start = Instant::now();
    let r = f();
    (r, timing.then(|| start.elapsed().as_secs_f64() * 1e3))
}

/// One row per GDM iteration for every (realization, SNR, L).
pub fn run_convergence(cfg: &ScenarioConfig, opts: RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let geometry = cfg.geometry(None, cfg.ms_pos)?;
    let n = geometry.paths();
    let jobs: Vec<(usize, f64, usize)> = (0..cfg.seeds)
        .flat_map(|s| {
            cfg.snr_db
                .iter()
                .flat_map(move |&snr| cfg.slots.iter().map(move |&l| (s, snr, l)))
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(s, snr, l)| {
            let real = realization(cfg.seed, s, n);
            let (trace, wall) = timed(opts.timing, || {
                optimize_cell(cfg, &geometry, &cfg.ris, &real, snr, l)
            });
            let base = ResultRow {
                experiment: "convergence",
                seed: real.seed,
                n,
                l,
                snr_db: snr,
                ms_x: cfg.ms_pos.x,
                ms_y: cfg.ms_pos.y,
                iteration: 0,
                crlb: None,
                samples: 1,
                wall_ms: wall,
                error: None,
            };
            match trace {
                Ok(trace) => {
                    let last = trace.records.len() - 1;
                    trace
                        .records
                        .iter()
                        .map(|r| ResultRow {
                            iteration: r.iteration as i64,
                            crlb: Some(r.objective),
                            error: (r.iteration == last)
                                .then(|| status_code(trace.status))
                                .flatten()
                                .map(String::from),
                            ..base.clone()
                        })
                        .collect()
                }
                Err(e) => vec![ResultRow {
                    error: Some(error_code(&e).into()),
                    ..base
                }],
            }
        })
        .collect::<Vec<Vec<ResultRow>>>();
    Ok(rows.into_iter().flatten().collect())
}

/// Averages the optimized CRLB of one cell over realizations; failed runs
/// are excluded from the mean and counted in the `error` column.
fn aggregate(results: &[Result<OptimizationTrace<f64>>]) -> (Option<f64>, usize, Option<String>) {
    let mut sum = 0.0;
    let mut ok = 0;
    let mut failures: Vec<&'static str> = Vec::new();
    for r in results {
        match r {
            Ok(trace) => {
                sum += trace.final_objective();
                ok += 1;
                if let Some(code) = status_code(trace.status) {
                    failures.push(code);
                }
            }
            Err(e) => failures.push(error_code(e)),
        }
    }
    let error = (!failures.is_empty()).then(|| {
        failures.sort_unstable();
        failures.dedup();
        format!(
            "{}/{} runs: {}",
            results.len() - ok,
            results.len(),
            failures.join("+")
        )
    });
    ((ok > 0).then(|| sum / ok as f64), ok, error)
}

/// Seed-averaged optimized CRLB over the (N, L, SNR) grid.
pub fn run_sweep(cfg: &ScenarioConfig, opts: RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize, f64)> = cfg
        .ris_sides
        .iter()
        .flat_map(|&side| {
            cfg.slots
                .iter()
                .flat_map(move |&l| cfg.snr_db.iter().map(move |&snr| (side, l, snr)))
        })
        .collect();
    let geometries = cfg
        .ris_sides
        .iter()
        .map(|&side| Ok((side, cfg.geometry(Some(side), cfg.ms_pos)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = cells
        .par_iter()
        .map(|&(side, l, snr)| {
            let geometry = &geometries
                .iter()
                .find(|(s, _)| *s == side)
                .expect("built above")
                .1;
            let layout = cfg.layout(Some(side));
            let n = side * side;
            let (results, wall) = timed(opts.timing, || {
                (0..cfg.seeds)
                    .map(|s| {
                        optimize_cell(cfg, geometry, &layout, &realization(cfg.seed, s, n), snr, l)
                    })
                    .collect::<Vec<_>>()
            });
            let (crlb, samples, error) = aggregate(&results);
            ResultRow {
                experiment: "sweep",
                seed: cfg.seed,
                n,
                l,
                snr_db: snr,
                ms_x: cfg.ms_pos.x,
                ms_y: cfg.ms_pos.y,
                iteration: -1,
                crlb,
                samples,
                wall_ms: wall,
                error,
            }
        })
        .collect();
    Ok(rows)
}

/// Seed-averaged optimized CRLB along the x sweep (y fixed at `ms_pos.y`)
/// and the y sweep (x fixed at `ms_pos.x`). Degenerate or singular
/// positions produce marked rows instead of aborting.
pub fn run_position_sweep(cfg: &ScenarioConfig, opts: RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut cells: Vec<(&'static str, usize, Position3D<f64>, f64, usize)> = Vec::new();
    for &side in &cfg.ris_sides {
        for (experiment, points) in [
            ("position_x", cfg.sweep_points(cfg.x_range)),
            ("position_y", cfg.sweep_points(cfg.y_range)),
        ] {
            for p in points {
                let ms = if experiment == "position_x" {
                    Position3D::new(p, cfg.ms_pos.y, 0.0)
                } else {
                    Position3D::new(cfg.ms_pos.x, p, 0.0)
                };
                for &snr in &cfg.snr_db {
                    for &l in &cfg.slots {
                        cells.push((experiment, side, ms, snr, l));
                    }
                }
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(experiment, side, ms, snr, l)| {
            let n = side * side;
            let layout = cfg.layout(Some(side));
            let (results, wall) = timed(opts.timing, || match cfg.geometry(Some(side), ms) {
                Ok(geometry) => (0..cfg.seeds)
                    .map(|s| {
                        optimize_cell(
                            cfg,
                            &geometry,
                            &layout,
                            &realization(cfg.seed, s, n),
                            snr,
                            l,
                        )
                    })
                    .collect::<Vec<_>>(),
                Err(e) => vec![Err(e)],
            });
            let (crlb, samples, error) = aggregate(&results);
            ResultRow {
                experiment,
                seed: cfg.seed,
                n,
                l,
                snr_db: snr,
                ms_x: ms.x,
                ms_y: ms.y,
                iteration: -1,
                crlb,
                samples,
                wall_ms: wall,
                error,
            }
        })
        .collect();
    Ok(rows)
}

/// Single-cell CRLB before and after phase optimization.
#[derive(Debug, Clone)]
pub struct CrlbReport {
    pub n: usize,
    pub slots: usize,
    pub snr_db: f64,
    pub trace: OptimizationTrace<f64>,
}

/// Realization 0 at the first configured SNR and slot count.
pub fn evaluate_crlb(cfg: &ScenarioConfig) -> Result<CrlbReport> {
    cfg.validate()?;
    let geometry = cfg.geometry(None, cfg.ms_pos)?;
    let real = realization(cfg.seed, 0, geometry.paths());
    let (snr_db, slots) = (cfg.snr_db[0], cfg.slots[0]);
    let trace = optimize_cell(cfg, &geometry, &cfg.ris, &real, snr_db, slots)?;
    Ok(CrlbReport {
        n: geometry.paths(),
        slots,
        snr_db,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct AltOptReport {
    pub initial_crlb: f64,
    /// True-parameter CRLB at the phases the loop settled on.
    pub final_crlb: f64,
    pub outer_iterations: usize,
    pub status: AltOptStatus,
    /// Distance between the last estimate and the true parameters.
    pub estimate_error: f64,
}

/// Alternating estimation/optimization on realization 0 with the configured
/// estimator. `noisy = false` feeds the estimator noiseless pilots.
pub fn evaluate_alt_opt(cfg: &ScenarioConfig, noisy: bool) -> Result<AltOptReport> {
    cfg.validate()?;
    let geometry = cfg.geometry(None, cfg.ms_pos)?;
    let real = realization(cfg.seed, 0, geometry.paths());
    let array = cfg.array()?;
    let budget = LinkBudget::from_snr_db(cfg.snr_db[0], cfg.n_rx);
    let pilot = build_pilot(
        cfg.pilot_mode,
        &array,
        &geometry,
        &cfg.ris,
        cfg.slots[0],
        budget.power,
        real.pilot_seed,
    )?;
    let scenario = Scenario {
        geometry,
        gains: real.gains.clone(),
        array,
    };
    let truth = scenario.truth()?;
    let estimator = Estimator::new(cfg.estimator, Some(truth.clone()))?;
    let noise = noisy
        .then(|| NoiseModel::new(budget.noise_variance, real.seed))
        .transpose()?;
    let result = alternating_optimize(
        &scenario,
        &estimator,
        &real.initial,
        &pilot,
        budget.noise_variance,
        noise.as_ref(),
        &cfg.alt_opt.to_config(),
        &cfg.gdm.to_config(),
    )?;
    let kappa = scenario.kappa_at(&truth, &pilot)?;
    let at = |p: &PhaseVector<f64>| crlb(&position_fim(&kappa, p, budget.noise_variance)?);
    Ok(AltOptReport {
        initial_crlb: at(&real.initial)?,
        final_crlb: at(&result.phases)?,
        outer_iterations: result.outer_iterations,
        status: result.status,
        estimate_error: result.estimate.distance(&truth),
    })
}

/// A matplotlib script that renders a CSV written by one of the experiments
/// into the matching figure layout.
pub fn plot_script(csv_path: &str) -> String {
    let path = csv_path.replace('\\', "\\\\").replace('\'', "\\'");
    PLOT_TEMPLATE.replace("@CSV@", &path)
}

const PLOT_TEMPLATE: &str = r#"#!/usr/bin/env python3
"""Plot experiment output. Usage: python3 <this script> [out.png]"""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV = '@CSV@'

rows = [r for r in csv.DictReader(open(CSV)) if r["crlb"]]
kinds = sorted({r["experiment"] for r in rows})
fig, axes = plt.subplots(1, len(kinds), figsize=(6 * len(kinds), 4.5), squeeze=False)

for ax, kind in zip(axes[0], kinds):
    sel = [r for r in rows if r["experiment"] == kind]
    curves = defaultdict(list)
    if kind == "convergence":
        for r in sel:
            curves[(r["seed"], r["snr_db"])].append((int(r["iteration"]), float(r["crlb"])))
        label = lambda k: f"seed {k[0]}, SNR {k[1]} dB"
        ax.set_xlabel("iteration")
    elif kind == "sweep":
        for r in sel:
            curves[(r["n"], r["snr_db"])].append((int(r["l"]), float(r["crlb"])))
        label = lambda k: f"N={k[0]}, SNR={k[1]} dB"
        ax.set_xlabel("time slots L")
    else:
        axis = "ms_x" if kind == "position_x" else "ms_y"
        for r in sel:
            curves[(r["n"], r["snr_db"], r["l"])].append((float(r[axis]), float(r["crlb"])))
        label = lambda k: f"N={k[0]}"
        ax.set_xlabel(f"MS {axis[-1]}-coordinate [m]")
    for key in sorted(curves, key=lambda k: tuple(float(v) for v in k)):
        pts = sorted(curves[key])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="." if kind != "convergence" else None, label=label(key))
    ax.set_yscale("log")
    ax.set_ylabel("CRLB [m^2]")
    ax.set_title(kind)
    ax.grid(True, which="both", alpha=0.3)
    if len(curves) <= 12:
        ax.legend(fontsize=7)

fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else CSV.rsplit(".", 1)[0] + ".png", dpi=150)
"#;
