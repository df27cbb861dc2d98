//! Scenario-grid generation and benchmark execution over the embedded
//! dataset: the cross product of conjunction cases, back-propagation
//! spans, dispersion distributions, and scale factors, each evaluated by
//! the configured estimators against the Monte Carlo ground truth.
//!
//! Scenarios run in parallel, but the report is assembled single-threaded
//! in scenario-key order, and each scenario derives its sampling seed from
//! the base seed and its position in the sorted grid, so a fixed seed and
//! grid give an identical report (modulo wall-clock fields; see
//! [`BenchmarkReport::zero_timings`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScaleAppliesTo;
use crate::dataset::ConjunctionCase;
use crate::error::{Error, Result};
use crate::moments::{UncertaintyKind, UncertaintySpec};
use crate::pipeline::{
    pc_moments_prepared, pc_monte_carlo_prepared, pc_taylor_mc_prepared, prepare_maps,
    prepare_nominal, ConjunctionScenario, PcResult, DEFAULT_MOMENT_COUNT, DEFAULT_ORDER,
    DEFAULT_RADIUS_M, MIN_MC_SAMPLES,
};

/// Benchmark back-propagation spans, seconds.
pub const BACK_PROP_HOUR: f64 = 3600.0;
pub const BACK_PROP_DAY: f64 = 86_400.0;
pub const BACK_PROP_WEEK: f64 = 604_800.0;

/// Short stable name of a dispersion kind, used in keys and CSV columns.
pub fn kind_label(kind: UncertaintyKind) -> &'static str {
    match kind {
        UncertaintyKind::DiagonalNormalRtn => "normal",
        UncertaintyKind::UniformBoxRtn => "uniform",
    }
}

/// Parses a dispersion kind from its short name.
pub fn parse_kind(text: &str) -> Result<UncertaintyKind> {
    match text {
        "normal" => Ok(UncertaintyKind::DiagonalNormalRtn),
        "uniform" => Ok(UncertaintyKind::UniformBoxRtn),
        other => Err(Error::InvalidArgument(format!(
            "unknown distribution kind {other:?}, expected \"normal\" or \"uniform\""
        ))),
    }
}

/// Scenario identity within the benchmark grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub case_id: u32,
    pub back_prop_s: f64,
    pub kind: UncertaintyKind,
    /// Scale factor as requested, before the `scale_applies_to` convention
    /// converts it to a linear-size multiplier.
    pub scale: f64,
}

impl ScenarioKey {
    /// Total order used for report ordering and seed derivation.
    pub fn ordering(&self, other: &ScenarioKey) -> std::cmp::Ordering {
        self.case_id
            .cmp(&other.case_id)
            .then(self.back_prop_s.total_cmp(&other.back_prop_s))
            .then(kind_label(self.kind).cmp(kind_label(other.kind)))
            .then(self.scale.total_cmp(&other.scale))
    }

    /// Compact human-readable label, e.g. `case06-bp3600-normal-x0.1`.
    pub fn label(&self) -> String {
        format!(
            "case{:02}-bp{}-{}-x{}",
            self.case_id,
            self.back_prop_s,
            kind_label(self.kind),
            self.scale
        )
    }
}

/// The grid axes and estimator configuration for scenario generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub case_ids: Vec<u32>,
    pub back_props_s: Vec<f64>,
    pub kinds: Vec<UncertaintyKind>,
    pub scales: Vec<f64>,
    pub radius_m: f64,
    pub order: u32,
    pub moment_count: usize,
    pub scale_applies_to: ScaleAppliesTo,
}

impl Default for GridSpec {
    /// The full benchmark grid: 22 cases, three back-propagation spans,
    /// both dispersion kinds, scale factors 0.1 / 1 / 10, for 396
    /// scenarios.
    fn default() -> Self {
        GridSpec {
            case_ids: (1..=22).collect(),
            back_props_s: vec![BACK_PROP_HOUR, BACK_PROP_DAY, BACK_PROP_WEEK],
            kinds: vec![
                UncertaintyKind::DiagonalNormalRtn,
                UncertaintyKind::UniformBoxRtn,
            ],
            scales: vec![0.1, 1.0, 10.0],
            radius_m: DEFAULT_RADIUS_M,
            order: DEFAULT_ORDER,
            moment_count: DEFAULT_MOMENT_COUNT,
            scale_applies_to: ScaleAppliesTo::Std,
        }
    }
}

/// A keyed scenario ready to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScenario {
    pub key: ScenarioKey,
    pub scenario: ConjunctionScenario,
}

/// The dispersion specification a grid cell asks for.
pub fn grid_uncertainty(
    kind: UncertaintyKind,
    scale: f64,
    convention: ScaleAppliesTo,
) -> Result<UncertaintySpec> {
    let linear = convention.linear_multiplier(scale)?;
    match kind {
        UncertaintyKind::DiagonalNormalRtn => UncertaintySpec::benchmark_normal(linear),
        UncertaintyKind::UniformBoxRtn => UncertaintySpec::benchmark_uniform(linear),
    }
}

/// Expands the grid cross product into keyed scenarios, sorted by key.
/// Duplicate grid entries are rejected rather than silently collapsed.
pub fn make_scenarios(
    cases: &[ConjunctionCase],
    grid: &GridSpec,
) -> Result<Vec<BenchmarkScenario>> {
    let mut out = Vec::with_capacity(
        grid.case_ids.len() * grid.back_props_s.len() * grid.kinds.len() * grid.scales.len(),
    );
    for &case_id in &grid.case_ids {
        let case = cases
            .iter()
            .find(|c| c.id == case_id)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("case id {case_id} is not in the dataset"))
            })?;
        for &back_prop_s in &grid.back_props_s {
            for &kind in &grid.kinds {
                for &scale in &grid.scales {
                    let key = ScenarioKey {
                        case_id,
                        back_prop_s,
                        kind,
                        scale,
                    };
                    let scenario = ConjunctionScenario {
                        elements_a: case.object_a,
                        elements_b: case.object_b,
                        mu: crate::MU_EARTH,
                        back_prop_s,
                        uncertainty: grid_uncertainty(kind, scale, grid.scale_applies_to)?,
                        radius_m: grid.radius_m,
                        order: grid.order,
                        moment_count: grid.moment_count,
                    };
                    scenario.validate()?;
                    out.push(BenchmarkScenario { key, scenario });
                }
            }
        }
    }
    out.sort_by(|a, b| a.key.ordering(&b.key));
    for pair in out.windows(2) {
        if pair[0].key.ordering(&pair[1].key) == std::cmp::Ordering::Equal {
            return Err(Error::InvalidArgument(format!(
                "duplicate scenario key {}",
                pair[0].key.label()
            )));
        }
    }
    Ok(out)
}

/// Estimators the benchmark can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Moments,
    Mc,
    Tmc,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Moments => "moments",
            Method::Mc => "mc",
            Method::Tmc => "tmc",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moments" => Ok(Method::Moments),
            "mc" => Ok(Method::Mc),
            "tmc" => Ok(Method::Tmc),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?}, expected \"moments\", \"mc\", or \"tmc\""
            ))),
        }
    }
}

/// Benchmark execution settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub methods: Vec<Method>,
    /// Samples per scenario for both sampling estimators.
    pub n_mc: u64,
    /// Base seed; scenario `i` in key order samples with seed + i.
    pub seed: u64,
}

/// An estimator that failed on one scenario; the run continues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: String,
    pub error: String,
}

/// All results and failures for one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub key: ScenarioKey,
    pub scenario: ConjunctionScenario,
    pub results: Vec<PcResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<MethodFailure>,
}

impl ScenarioRecord {
    /// The clamped probability this record holds for a method, if any.
    pub fn probability(&self, method: &str) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.p_clamped)
    }
}

/// Mean squared error of one method against the Monte Carlo ground truth
/// within one (back-propagation, distribution) group, following the two
/// aggregation conventions: over scenarios whose MC probability is nonzero,
/// and over every scenario with both estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseEntry {
    pub method: String,
    pub back_prop_s: f64,
    pub kind: UncertaintyKind,
    pub n_nonzero: usize,
    pub mse_nonzero: Option<f64>,
    pub n_all: usize,
    pub mse_all: Option<f64>,
}

/// Wall-clock distribution of one method over all scenarios it completed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub method: String,
    pub count: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

/// Per-scenario results plus the aggregates derived from them. The
/// aggregates are recomputable from the records via [`mse_entries`] and
/// [`runtime_stats`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n_mc: u64,
    pub seed: u64,
    pub records: Vec<ScenarioRecord>,
    pub mse: Vec<MseEntry>,
    pub runtimes: Vec<RuntimeStats>,
}

impl BenchmarkReport {
    /// True when any scenario recorded a method failure.
    pub fn has_failures(&self) -> bool {
        self.records.iter().any(|r| !r.failures.is_empty())
    }

    /// Zeroes every wall-clock field and re-derives the runtime aggregate.
    /// Timing is a measurement, not a function of the seed; stripping it
    /// makes reports from identical seeds and configs byte-identical.
    pub fn zero_timings(&mut self) {
        for record in &mut self.records {
            for result in &mut record.results {
                result.wall_ms = 0.0;
            }
        }
        self.runtimes = runtime_stats(&self.records);
    }
}

/// Recomputes the MSE table from per-scenario records, grouped by
/// (method, back-propagation, kind) in that sort order. Scenarios missing
/// either the method's estimate or the MC ground truth are excluded.
pub fn mse_entries(records: &[ScenarioRecord]) -> Vec<MseEntry> {
    let mut methods: Vec<String> = Vec::new();
    for record in records {
        for result in &record.results {
            if result.method != "mc" && !methods.contains(&result.method) {
                methods.push(result.method.clone());
            }
        }
    }
    methods.sort();

    let mut groups: Vec<(f64, UncertaintyKind)> = Vec::new();
    for record in records {
        let g = (record.key.back_prop_s, record.key.kind);
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    groups.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(kind_label(a.1).cmp(kind_label(b.1)))
    });

    let mut entries = Vec::new();
    for method in &methods {
        for &(back_prop_s, kind) in &groups {
            let mut sq_all = 0.0;
            let mut n_all = 0usize;
            let mut sq_nonzero = 0.0;
            let mut n_nonzero = 0usize;
            for record in records {
                if record.key.back_prop_s != back_prop_s || record.key.kind != kind {
                    continue;
                }
                let (Some(p_mc), Some(p)) = (record.probability("mc"), record.probability(method))
                else {
                    continue;
                };
                let sq = (p - p_mc) * (p - p_mc);
                sq_all += sq;
                n_all += 1;
                if p_mc > 0.0 {
                    sq_nonzero += sq;
                    n_nonzero += 1;
                }
            }
            entries.push(MseEntry {
                method: method.clone(),
                back_prop_s,
                kind,
                n_nonzero,
                mse_nonzero: (n_nonzero > 0).then(|| sq_nonzero / n_nonzero as f64),
                n_all,
                mse_all: (n_all > 0).then(|| sq_all / n_all as f64),
            });
        }
    }
    entries
}

/// Recomputes the per-method runtime distribution from the records.
pub fn runtime_stats(records: &[ScenarioRecord]) -> Vec<RuntimeStats> {
    let mut by_method: Vec<(String, Vec<f64>)> = Vec::new();
    for record in records {
        for result in &record.results {
            match by_method.iter_mut().find(|(m, _)| *m == result.method) {
                Some((_, samples)) => samples.push(result.wall_ms),
                None => by_method.push((result.method.clone(), vec![result.wall_ms])),
            }
        }
    }
    by_method.sort_by(|a, b| a.0.cmp(&b.0));
    by_method
        .into_iter()
        .map(|(method, mut samples)| {
            samples.sort_by(f64::total_cmp);
            let count = samples.len();
            let median = if count % 2 == 1 {
                samples[count / 2]
            } else {
                0.5 * (samples[count / 2 - 1] + samples[count / 2])
            };
            RuntimeStats {
                method,
                count,
                min_ms: samples[0],
                median_ms: median,
                mean_ms: samples.iter().sum::<f64>() / count as f64,
                max_ms: samples[count - 1],
            }
        })
        .collect()
}

fn run_scenario(bench: &BenchmarkScenario, opts: &BenchmarkOptions, seed: u64) -> ScenarioRecord {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let fail = |method: Method, error: &Error| MethodFailure {
        method: method.tag().to_string(),
        error: error.to_string(),
    };

    let needs_maps = opts
        .methods
        .iter()
        .any(|m| matches!(m, Method::Moments | Method::Tmc));

    // shared preparation: the maps (and the nominal geometry inside them)
    // do not depend on the method, so build once and attribute the cost to
    // each map-based method as if it ran standalone
    let prep_start = std::time::Instant::now();
    let prepared = if needs_maps {
        Some(prepare_maps(&bench.scenario))
    } else {
        None
    };
    let prep_ms = prep_start.elapsed().as_secs_f64() * 1e3;

    let nominal = match &prepared {
        Some(Ok(p)) => Ok(p.nominal),
        _ => prepare_nominal(&bench.scenario),
    };

    for &method in &opts.methods {
        match method {
            Method::Moments | Method::Tmc => match prepared.as_ref().unwrap() {
                Ok(maps) => {
                    let run = if method == Method::Moments {
                        pc_moments_prepared(&bench.scenario, maps)
                    } else {
                        pc_taylor_mc_prepared(&bench.scenario, maps, opts.n_mc, seed)
                    };
                    match run {
                        Ok(mut result) => {
                            result.wall_ms += prep_ms;
                            results.push(result);
                        }
                        Err(e) => failures.push(fail(method, &e)),
                    }
                }
                Err(e) => failures.push(fail(method, e)),
            },
            Method::Mc => match &nominal {
                Ok(nominal) => {
                    match pc_monte_carlo_prepared(&bench.scenario, nominal, opts.n_mc, seed) {
                        Ok(result) => results.push(result),
                        Err(e) => failures.push(fail(method, &e)),
                    }
                }
                Err(e) => failures.push(fail(method, e)),
            },
        }
    }

    ScenarioRecord {
        key: bench.key,
        scenario: bench.scenario.clone(),
        results,
        failures,
    }
}

/// Runs the configured estimators over every scenario. Scenario failures
/// are recorded in their records, never fatal; scenarios run in parallel
/// and the report is assembled in key order.
pub fn run_benchmark(
    scenarios: &[BenchmarkScenario],
    opts: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    if opts.methods.is_empty() {
        return Err(Error::InvalidArgument(
            "benchmark needs at least one method".into(),
        ));
    }
    if opts.methods.contains(&Method::Mc) && opts.n_mc < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo ground truth needs at least {MIN_MC_SAMPLES} samples, got {}",
            opts.n_mc
        )));
    }

    let mut records: Vec<ScenarioRecord> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, bench)| run_scenario(bench, opts, opts.seed.wrapping_add(i as u64)))
        .collect();
    records.sort_by(|a, b| a.key.ordering(&b.key));

    let mse = mse_entries(&records);
    let runtimes = runtime_stats(&records);
    Ok(BenchmarkReport {
        n_mc: opts.n_mc,
        seed: opts.seed,
        records,
        mse,
        runtimes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset;

    fn small_grid() -> GridSpec {
        GridSpec {
            case_ids: vec![1],
            back_props_s: vec![BACK_PROP_HOUR],
            kinds: vec![
                UncertaintyKind::DiagonalNormalRtn,
                UncertaintyKind::UniformBoxRtn,
            ],
            scales: vec![1.0],
            order: 3,
            moment_count: 6,
            ..GridSpec::default()
        }
    }

    #[test]
    fn default_grid_has_396_unique_sorted_scenarios() {
        let scenarios = make_scenarios(dataset::builtin_cases(), &GridSpec::default()).unwrap();
        assert_eq!(scenarios.len(), 396);
        for pair in scenarios.windows(2) {
            assert_eq!(
                pair[0].key.ordering(&pair[1].key),
                std::cmp::Ordering::Less,
                "keys {} and {} out of order",
                pair[0].key.label(),
                pair[1].key.label()
            );
        }
    }

    #[test]
    fn single_cell_grid_gives_one_scenario() {
        let grid = GridSpec {
            case_ids: vec![6],
            back_props_s: vec![BACK_PROP_DAY],
            kinds: vec![UncertaintyKind::UniformBoxRtn],
            scales: vec![10.0],
            ..GridSpec::default()
        };
        let scenarios = make_scenarios(dataset::builtin_cases(), &grid).unwrap();
        assert_eq!(scenarios.len(), 1);
        assert_eq!(scenarios[0].key.label(), "case06-bp86400-uniform-x10");

        let missing = GridSpec {
            case_ids: vec![23],
            ..GridSpec::default()
        };
        assert!(make_scenarios(dataset::builtin_cases(), &missing).is_err());
        let duplicate = GridSpec {
            case_ids: vec![6, 6],
            ..grid
        };
        assert!(make_scenarios(dataset::builtin_cases(), &duplicate).is_err());
    }

    #[test]
    fn scale_conventions_rescale_dispersions_as_documented() {
        // scale 0.1 under the std convention: every variance gains 0.01
        let base = grid_uncertainty(
            UncertaintyKind::DiagonalNormalRtn,
            1.0,
            ScaleAppliesTo::Std,
        )
        .unwrap();
        let tenth = grid_uncertainty(
            UncertaintyKind::DiagonalNormalRtn,
            0.1,
            ScaleAppliesTo::Std,
        )
        .unwrap();
        for axis in 0..6 {
            let ratio = tenth.dispersion_km(axis) / base.dispersion_km(axis);
            assert!((ratio - 0.1).abs() < 1e-15);
        }
        // the same request under the var convention scales sigma by sqrt
        let var_tenth = grid_uncertainty(
            UncertaintyKind::DiagonalNormalRtn,
            0.1,
            ScaleAppliesTo::Var,
        )
        .unwrap();
        for axis in 0..6 {
            let ratio = var_tenth.dispersion_km(axis) / base.dispersion_km(axis);
            assert!((ratio - 0.1f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn mc_only_benchmark_has_ground_truth_and_empty_comparisons() {
        let scenarios = make_scenarios(dataset::builtin_cases(), &small_grid()).unwrap();
        let opts = BenchmarkOptions {
            methods: vec![Method::Mc],
            n_mc: 1000,
            seed: 4,
        };
        let report = run_benchmark(&scenarios, &opts).unwrap();
        assert_eq!(report.records.len(), 2);
        assert!(report.mse.is_empty());
        assert_eq!(report.runtimes.len(), 1);
        assert_eq!(report.runtimes[0].method, "mc");
        assert!(!report.has_failures());
        for record in &report.records {
            assert_eq!(record.results.len(), 1);
            assert!(record.probability("mc").is_some());
        }
    }

    #[test]
    fn benchmark_is_deterministic_and_aggregates_recompute() {
        let scenarios = make_scenarios(dataset::builtin_cases(), &small_grid()).unwrap();
        let opts = BenchmarkOptions {
            methods: vec![Method::Moments, Method::Mc, Method::Tmc],
            n_mc: 1000,
            seed: 11,
        };
        let mut a = run_benchmark(&scenarios, &opts).unwrap();
        let mut b = run_benchmark(&scenarios, &opts).unwrap();

        assert_eq!(mse_entries(&a.records), a.mse);
        assert_eq!(runtime_stats(&a.records), a.runtimes);
        // two methods compared over (1 back-prop x 2 kinds)
        assert_eq!(a.mse.len(), 4);

        a.zero_timings();
        b.zero_timings();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn method_failures_are_recorded_not_fatal() {
        let case = dataset::case(1).unwrap();
        let mut scenario = ConjunctionScenario::from_case(
            case,
            BACK_PROP_HOUR,
            UncertaintySpec::new(
                UncertaintyKind::DiagonalNormalRtn,
                [0.0; 3],
                [0.0; 3],
                1.0,
            )
            .unwrap(),
        )
        .unwrap();
        scenario.order = 3;
        scenario.moment_count = 6;
        let scenarios = vec![BenchmarkScenario {
            key: ScenarioKey {
                case_id: 1,
                back_prop_s: BACK_PROP_HOUR,
                kind: UncertaintyKind::DiagonalNormalRtn,
                scale: 0.0,
            },
            scenario,
        }];
        let opts = BenchmarkOptions {
            methods: vec![Method::Moments, Method::Mc, Method::Tmc],
            n_mc: 1000,
            seed: 0,
        };
        let report = run_benchmark(&scenarios, &opts).unwrap();
        let record = &report.records[0];
        // zero dispersion: the moment method degenerates, the samplers run
        assert_eq!(record.failures.len(), 1);
        assert_eq!(record.failures[0].method, "moments");
        assert!(record.failures[0].error.contains("degenerate"));
        assert_eq!(record.results.len(), 2);
        assert!(report.has_failures());

        let none = run_benchmark(
            &scenarios,
            &BenchmarkOptions {
                methods: vec![],
                n_mc: 1000,
                seed: 0,
            },
        );
        assert!(none.is_err());
        let too_few = run_benchmark(
            &scenarios,
            &BenchmarkOptions {
                methods: vec![Method::Mc],
                n_mc: 10,
                seed: 0,
            },
        );
        assert!(too_few.is_err());
    }
}
