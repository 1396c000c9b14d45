//! Square-trajectory comparison of the four control configurations.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::metrics::{compute_metrics, Metrics};
use crate::sim::{run_scenario, ControlMode, HandConfig, HandSource, ScenarioConfig, SimError, StartLayout, Trace};
use crate::topology::TopologyKind;
use crate::trajectory::ReferenceTrajectory;

pub const DEFAULT_REPEATS: u32 = 3;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    ImpedanceRing,
    ImpedanceTree,
    ImpedanceStar,
    PotentialField,
}

impl Configuration {
    /// Report order.
    pub const ALL: [Configuration; 4] = [
        Configuration::ImpedanceRing,
        Configuration::ImpedanceTree,
        Configuration::ImpedanceStar,
        Configuration::PotentialField,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Configuration::ImpedanceRing => "impedance_ring",
            Configuration::ImpedanceTree => "impedance_tree",
            Configuration::ImpedanceStar => "impedance_star",
            Configuration::PotentialField => "potential_field",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Configuration::ImpedanceRing => "Impedance, Ring",
            Configuration::ImpedanceTree => "Impedance, Tree",
            Configuration::ImpedanceStar => "Impedance, Star",
            Configuration::PotentialField => "Potential field",
        }
    }

    /// Scenario for this configuration, derived from `base`.
    pub fn scenario(self, base: &ScenarioConfig, seed: u64) -> ScenarioConfig {
        let mut cfg = base.clone();
        cfg.seed = seed;
        match self {
            Configuration::ImpedanceRing => cfg.topology.kind = TopologyKind::Ring,
            Configuration::ImpedanceTree => cfg.topology.kind = TopologyKind::Tree,
            Configuration::ImpedanceStar => cfg.topology.kind = TopologyKind::Star,
            Configuration::PotentialField => {
                cfg.topology.kind = TopologyKind::Star;
                cfg.controller.mode = ControlMode::PotentialField;
            }
        }
        if cfg.topology.kind != base.topology.kind {
            cfg.topology.overrides.clear();
        }
        cfg
    }

    /// Flight results from the physical experiment, printed beside ours.
    pub fn published(self) -> PublishedRow {
        let (mean, max, speed) = match self {
            Configuration::ImpedanceRing => ([0.13, 0.14], [0.35, 0.36], [0.69, 0.24]),
            Configuration::ImpedanceTree => ([0.14, 0.16], [0.35, 0.37], [0.70, 0.24]),
            Configuration::ImpedanceStar => ([0.10, 0.11], [0.27, 0.29], [0.69, 0.22]),
            Configuration::PotentialField => ([0.22, 0.22], [0.49, 0.45], [0.47, 0.20]),
        };
        PublishedRow { mean_error: mean, max_error: max, max_speed: speed[0], mean_speed: speed[1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub mean_error: [f64; 2],
    pub max_error: [f64; 2],
    pub max_speed: f64,
    pub mean_speed: f64,
}

/// Published RMSE reductions of Star against the other impedance
/// topologies and against the potential field.
pub const PUBLISHED_REDUCTION: [f64; 2] = [0.206, 0.409];
/// Published ground-truth speeds (max, mean).
pub const PUBLISHED_GROUND_TRUTH: [f64; 2] = [0.65, 0.18];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub base: ScenarioConfig,
    pub repeats: u32,
    pub seed: u64,
}

impl BenchConfig {
    /// Default benchmark: square hand trajectory, drones starting in their slots.
    pub fn new(base: ScenarioConfig) -> Self {
        Self { base, repeats: DEFAULT_REPEATS, seed: DEFAULT_SEED }
    }

    /// Seeds `seed, seed + 1, ...`, one per repeat.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn reference(&self) -> Result<ReferenceTrajectory, SimError> {
        match &self.base.hand {
            HandConfig::Square(p) => Ok(p.generate(self.base.dt)?),
            _ => Err(SimError::Config("benchmark needs a square hand trajectory".into())),
        }
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self::new(ScenarioConfig { start: StartLayout::Slots, ..ScenarioConfig::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationResult {
    pub configuration: Configuration,
    pub runs: Vec<RunResult>,
    pub average: Metrics,
    pub published: PublishedRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseReduction {
    /// `1 − rmse_star / rmse_other`, against the other configurations in order.
    pub vs_ring: f64,
    pub vs_tree: f64,
    pub vs_impedance_mean: f64,
    pub vs_potential_field: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub repeats: u32,
    pub seeds: Vec<u64>,
    pub reference_max_speed: f64,
    pub reference_mean_speed: f64,
    pub configurations: Vec<ConfigurationResult>,
    pub rmse_reduction: RmseReduction,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub configuration: Configuration,
    pub seed: u64,
    pub trace: Trace,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub reference: ReferenceTrajectory,
    pub runs: Vec<RunOutput>,
}

fn run_one(
    bench: &BenchConfig,
    reference: &ReferenceTrajectory,
    configuration: Configuration,
    seed: u64,
) -> Result<(Metrics, RunOutput), SimError> {
    let cfg = configuration.scenario(&bench.base, seed);
    let graph = cfg.topology.build(cfg.impedance.params()?)?;
    let ticks = cfg.duration_s.map_or(reference.len() as u64 - 1, |_| cfg.tick_count());
    let trace = run_scenario(&cfg, HandSource::Trajectory(reference.clone()), ticks)
        .map_err(|e| SimError::Config(format!("{} seed {seed}: {e}", configuration.name())))?;
    let metrics = compute_metrics(&trace.rows, &reference.samples, &graph.offsets)
        .map_err(|e| SimError::Config(format!("{} seed {seed}: {e}", configuration.name())))?;
    Ok((metrics, RunOutput { configuration, seed, trace }))
}

fn jobs(bench: &BenchConfig) -> Vec<(Configuration, u64)> {
    Configuration::ALL.iter().flat_map(|c| bench.seeds().into_iter().map(move |s| (*c, s))).collect()
}

/// Runs every configuration and seed one after another.
pub fn run_comparison_sequential(bench: &BenchConfig) -> Result<Comparison, SimError> {
    let reference = bench.reference()?;
    let results =
        jobs(bench).into_iter().map(|(c, s)| run_one(bench, &reference, c, s)).collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(bench, reference, results))
}

/// Runs configurations and seeds on the rayon pool. Results are merged in
/// job order so the report matches the sequential one exactly.
#[cfg(feature = "parallel")]
pub fn run_comparison_parallel(bench: &BenchConfig) -> Result<Comparison, SimError> {
    use rayon::prelude::*;
    let reference = bench.reference()?;
    let results =
        jobs(bench).into_par_iter().map(|(c, s)| run_one(bench, &reference, c, s)).collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(bench, reference, results))
}

pub fn run_comparison(bench: &BenchConfig) -> Result<Comparison, SimError> {
    #[cfg(feature = "parallel")]
    return run_comparison_parallel(bench);
    #[cfg(not(feature = "parallel"))]
    return run_comparison_sequential(bench);
}

fn assemble(bench: &BenchConfig, reference: ReferenceTrajectory, results: Vec<(Metrics, RunOutput)>) -> Comparison {
    let mut configurations = Vec::new();
    for c in Configuration::ALL {
        let runs: Vec<RunResult> = results
            .iter()
            .filter(|(_, r)| r.configuration == c)
            .map(|(m, r)| RunResult { seed: r.seed, metrics: *m })
            .collect();
        let all: Vec<Metrics> = runs.iter().map(|r| r.metrics).collect();
        configurations.push(ConfigurationResult {
            configuration: c,
            average: Metrics::average(&all),
            runs,
            published: c.published(),
        });
    }
    let rmse = |c: Configuration| configurations.iter().find(|r| r.configuration == c).map_or(0.0, |r| r.average.rmse);
    let star = rmse(Configuration::ImpedanceStar);
    let reduction = |other: f64| if other > 0.0 { 1.0 - star / other } else { 0.0 };
    let (ring, tree) = (rmse(Configuration::ImpedanceRing), rmse(Configuration::ImpedanceTree));
    let report = ComparisonReport {
        repeats: bench.repeats,
        seeds: bench.seeds(),
        reference_max_speed: reference.max_speed(),
        reference_mean_speed: reference.mean_speed(),
        rmse_reduction: RmseReduction {
            vs_ring: reduction(ring),
            vs_tree: reduction(tree),
            vs_impedance_mean: reduction(0.5 * (ring + tree)),
            vs_potential_field: reduction(rmse(Configuration::PotentialField)),
        },
        configurations,
    };
    Comparison { report, reference, runs: results.into_iter().map(|(_, r)| r).collect() }
}

impl ComparisonReport {
    pub fn get(&self, c: Configuration) -> &ConfigurationResult {
        self.configurations.iter().find(|r| r.configuration == c).expect("all configurations are reported")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "configuration,mean_error_x,mean_error_y,max_error_x,max_error_y,rmse,max_speed,mean_speed,lag_s,reported_mean_error_x,reported_mean_error_y,reported_max_error_x,reported_max_error_y,reported_max_speed,reported_mean_speed";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.configurations {
            let (m, p) = (&r.average, &r.published);
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.configuration.name(),
                m.mean_error_x,
                m.mean_error_y,
                m.max_error_x,
                m.max_error_y,
                m.rmse,
                m.max_speed,
                m.mean_speed,
                m.lag_s,
                p.mean_error[0],
                p.mean_error[1],
                p.max_error[0],
                p.max_error[1],
                p.max_speed,
                p.mean_speed
            )
            .unwrap();
        }
        s
    }

    /// Table for humans; published flight values in brackets.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "square trajectory, {} repeats, seeds {:?}", self.repeats, self.seeds).unwrap();
        writeln!(
            s,
            "reference speed: max {:.3} m/s [{:.2}], mean {:.3} m/s [{:.2}]",
            self.reference_max_speed, PUBLISHED_GROUND_TRUTH[0], self.reference_mean_speed, PUBLISHED_GROUND_TRUTH[1]
        )
        .unwrap();
        writeln!(
            s,
            "{:<16} {:>15} {:>15} {:>15} {:>15} {:>7} {:>13} {:>13} {:>6}",
            "configuration", "mean err x", "mean err y", "max err x", "max err y", "rmse", "max v", "mean v", "lag s"
        )
        .unwrap();
        for r in &self.configurations {
            let (m, p) = (&r.average, &r.published);
            writeln!(
                s,
                "{:<16} {:>7.3} [{:.2}] {:>7.3} [{:.2}] {:>7.3} [{:.2}] {:>7.3} [{:.2}] {:>7.3} {:>5.3} [{:.2}] {:>5.3} [{:.2}] {:>6.2}",
                r.configuration.title(),
                m.mean_error_x,
                p.mean_error[0],
                m.mean_error_y,
                p.mean_error[1],
                m.max_error_x,
                p.max_error[0],
                m.max_error_y,
                p.max_error[1],
                m.rmse,
                m.max_speed,
                p.max_speed,
                m.mean_speed,
                p.mean_speed,
                m.lag_s
            )
            .unwrap();
        }
        let red = &self.rmse_reduction;
        writeln!(
            s,
            "star rmse reduction: vs ring {:.1}%, vs tree {:.1}%, vs impedance mean {:.1}% [{:.1}%], vs potential field {:.1}% [{:.1}%]",
            100.0 * red.vs_ring,
            100.0 * red.vs_tree,
            100.0 * red.vs_impedance_mean,
            100.0 * PUBLISHED_REDUCTION[0],
            100.0 * red.vs_potential_field,
            100.0 * PUBLISHED_REDUCTION[1]
        )
        .unwrap();
        s
    }
}

impl Comparison {
    /// Writes `report.json`, `report.csv`, `report.txt`, `reference.csv`
    /// and one trace CSV per run into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        let io = |p: &Path, e: std::io::Error| SimError::Io(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut files = vec![
            ("report.json".to_string(), self.report.to_json()),
            ("report.csv".to_string(), self.report.to_csv()),
            ("report.txt".to_string(), self.report.to_text()),
            ("reference.csv".to_string(), self.reference.to_csv()),
        ];
        for r in &self.runs {
            files.push((format!("{}_seed{}.csv", r.configuration.name(), r.seed), r.trace.to_csv()));
        }
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}
