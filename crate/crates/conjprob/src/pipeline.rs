//! End-to-end collision probability: scenario definition, nominal
//! conjunction detection, the moment-based semi-analytical estimator, and
//! the two sampling baselines (Monte Carlo with per-sample re-detection of
//! the closest approach, and Taylor Monte Carlo on the distance map).
//!
//! All estimators share the same nominal geometry and, where maps are
//! involved, the same RTN perturbation coordinates, so their outputs are
//! directly comparable. Sampling is deterministic: sample `i` always draws
//! from substream `i` of the seeded generator, which makes hit counts
//! reproducible, invariant under the number of worker threads, and common
//! between the Monte Carlo and Taylor Monte Carlo estimators (paired
//! comparisons see identical perturbations).

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ConjunctionCase;
use crate::dynamics::{
    approach_minima, elements_to_state, propagate_pair, rtn_frame, CaEvent, CartesianState,
    IntegratorOptions, KeplerElements,
};
use crate::error::{Error, Result};
use crate::eventmap::{build_ca_maps, CaTaylorMaps, EventSystem, UncertainVars};
use crate::moments::{distance_moments, rtn_substitution, MomentSet, UncertaintySpec};
use crate::pdf::{
    build_basis, expansion_coeffs, fit_reference, DomainHint, PdfEstimate, MAX_BASIS_DEGREE,
};

/// Default Taylor expansion order of the closest-approach maps.
pub const DEFAULT_ORDER: u32 = 4;
/// Default number of raw moments propagated (also the expansion degree).
pub const DEFAULT_MOMENT_COUNT: usize = 8;
/// Default combined hard-body radius, meters.
pub const DEFAULT_RADIUS_M: f64 = 5.0;

/// Smallest trusted event-rate slope (the dT coefficient of the event
/// function at the nominal, km^2/s^2). Real conjunctions have slopes near
/// |v_rel|^2, hundreds of km^2/s^2 in low orbit; values near zero mean the
/// objects graze and the event-time inversion divides by noise.
pub const TRANSVERSALITY_FLOOR: f64 = 1e-8;

/// Fewest samples accepted by the Monte Carlo estimator.
pub const MIN_MC_SAMPLES: u64 = 1000;

/// Integration tolerance for the per-sample Monte Carlo re-detection.
/// Looser than the nominal 1e-12: the global position error it admits is
/// millimeters over an orbit, far below both the collision radii and the
/// dispersion magnitudes that decide a hit, and each sample costs a full
/// propagation so the factor matters. Constant, so counts stay exactly
/// reproducible.
pub const MC_SAMPLE_RTOL: f64 = 1e-9;

/// One conjunction to analyze: the encounter geometry, where the
/// uncertainty is injected, and the estimator configuration.
///
/// The elements describe each object at the nominal closest-approach epoch.
/// Uncertainty is applied `back_prop_s` seconds earlier, at the "initial"
/// epoch, in each object's RTN frame evaluated there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjunctionScenario {
    pub elements_a: KeplerElements,
    pub elements_b: KeplerElements,
    /// Gravitational parameter, km^3/s^2.
    pub mu: f64,
    /// Seconds between the initial (uncertain) epoch and the nominal
    /// closest approach. Must be positive.
    pub back_prop_s: f64,
    /// Position dispersion of both objects at the initial epoch.
    pub uncertainty: UncertaintySpec,
    /// Combined hard-body radius R = R_A + R_B, meters. Zero is allowed
    /// for the sampling estimators (the probability is trivially zero);
    /// the moment estimator needs a positive radius to integrate over.
    pub radius_m: f64,
    /// Taylor expansion order of the closest-approach maps.
    pub order: u32,
    /// Number of raw moments of D^2 to propagate; equals the polynomial
    /// degree of the PDF expansion.
    pub moment_count: usize,
}

impl ConjunctionScenario {
    /// Builds a scenario from a dataset row with default estimator
    /// settings. Adjust the public fields afterwards as needed.
    pub fn from_case(
        case: &ConjunctionCase,
        back_prop_s: f64,
        uncertainty: UncertaintySpec,
    ) -> Result<Self> {
        let scenario = ConjunctionScenario {
            elements_a: case.object_a,
            elements_b: case.object_b,
            mu: crate::MU_EARTH,
            back_prop_s,
            uncertainty,
            radius_m: DEFAULT_RADIUS_M,
            order: DEFAULT_ORDER,
            moment_count: DEFAULT_MOMENT_COUNT,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks the scenario invariants. Every pipeline entry point calls
    /// this, so field edits after construction cannot slip through.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gravitational parameter must be positive, got {}",
                self.mu
            )));
        }
        if !(self.back_prop_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "back-propagation span must be positive, got {} s",
                self.back_prop_s
            )));
        }
        if !(self.radius_m >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "collision radius must be non-negative, got {} m",
                self.radius_m
            )));
        }
        if self.order == 0 {
            return Err(Error::InvalidArgument(
                "map order must be at least 1".into(),
            ));
        }
        if self.moment_count < 2 || self.moment_count > MAX_BASIS_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "moment count must lie in [2, {MAX_BASIS_DEGREE}], got {}",
                self.moment_count
            )));
        }
        Ok(())
    }

    /// Combined hard-body radius in km.
    pub fn radius_km(&self) -> f64 {
        self.radius_m * 1e-3
    }
}

/// Nominal conjunction geometry shared by every estimator.
#[derive(Clone, Copy, Debug)]
pub struct NominalConjunction {
    /// Object A at the initial epoch, `back_prop_s` before the nominal CA.
    pub initial_a: CartesianState,
    /// Object B at the initial epoch.
    pub initial_b: CartesianState,
    /// Re-detected closest approach; `event.t` is seconds past the initial
    /// epoch, so it lands near `back_prop_s`.
    pub event: CaEvent,
    /// Search window in seconds past the initial epoch: half the shorter
    /// orbital period on each side of the expected approach, clipped to
    /// start no earlier than the initial epoch. Perturbed samples re-detect
    /// within this same window.
    pub window: (f64, f64),
}

/// Back-propagates the encounter to the initial epoch and re-detects the
/// nominal closest approach from there (the detection the estimators rely
/// on must come from the same propagation path the maps will use).
pub fn prepare_nominal(scenario: &ConjunctionScenario) -> Result<NominalConjunction> {
    scenario.validate()?;
    detect_nominal(scenario).map_err(|e| e.in_stage("nominal-detection"))
}

fn detect_nominal(scenario: &ConjunctionScenario) -> Result<NominalConjunction> {
    let opts = IntegratorOptions::default();
    let ca_a = elements_to_state(&scenario.elements_a, scenario.mu)?;
    let ca_b = elements_to_state(&scenario.elements_b, scenario.mu)?;
    let (initial_a, initial_b) =
        propagate_pair(&ca_a, &ca_b, -scenario.back_prop_s, scenario.mu, &opts)?;
    let t_min = scenario
        .elements_a
        .period(scenario.mu)
        .min(scenario.elements_b.period(scenario.mu));
    let lo = (scenario.back_prop_s - 0.5 * t_min).max(0.0);
    let hi = scenario.back_prop_s + 0.5 * t_min;
    let events = approach_minima(&initial_a, &initial_b, lo, hi, scenario.mu, &opts)?;
    let event = events
        .iter()
        .min_by(|x, y| {
            let dx = (x.t - scenario.back_prop_s).abs();
            let dy = (y.t - scenario.back_prop_s).abs();
            dx.total_cmp(&dy)
        })
        .copied()
        .ok_or(Error::NoClosestApproach(lo, hi))?;
    Ok(NominalConjunction {
        initial_a,
        initial_b,
        event,
        window: (lo, hi),
    })
}

/// Nominal geometry plus the closest-approach Taylor maps, expressed in
/// the six RTN perturbation coordinates (three per object) at the initial
/// epoch. Built once and shared by the moment and Taylor Monte Carlo
/// estimators; the map does not depend on the uncertainty magnitudes or
/// the collision radius, so one build serves sweeps over both.
#[derive(Clone, Debug)]
pub struct PreparedMaps {
    pub nominal: NominalConjunction,
    pub maps: CaTaylorMaps,
}

/// Builds the event-manifold Taylor maps for a scenario: fixed-time map,
/// event-time inversion, distance map, and RTN substitution.
pub fn prepare_maps(scenario: &ConjunctionScenario) -> Result<PreparedMaps> {
    let nominal = prepare_nominal(scenario)?;
    let opts = IntegratorOptions::default();
    let build = || -> Result<CaTaylorMaps> {
        let sys = EventSystem::new(
            scenario.mu,
            nominal.initial_a,
            nominal.initial_b,
            nominal.event.t,
            &opts,
        )?;
        let maps = build_ca_maps(&sys, scenario.order, UncertainVars::Positions, &opts)?;
        let frame_a = rtn_frame(&nominal.initial_a)?;
        let frame_b = rtn_frame(&nominal.initial_b)?;
        rtn_substitution(&maps, &frame_a, &frame_b)
    };
    let maps = build().map_err(|e| e.in_stage("map-construction"))?;
    if !(maps.transversality > TRANSVERSALITY_FLOOR) {
        return Err(Error::Transversality(maps.transversality));
    }
    Ok(PreparedMaps { nominal, maps })
}

/// Reconstructed density of the squared closest-approach distance, with
/// enough context to integrate collision probabilities at any radius.
#[derive(Clone, Debug)]
pub struct DistanceDensity {
    /// First raw moment E[D^2], km^2. The density is expressed in the
    /// rescaled variable s = D^2 / m1 to keep high moments representable.
    pub m1_km2: f64,
    /// Raw moments of D^2 in km^2 powers.
    pub moments: MomentSet,
    /// Density estimate of s = D^2 / m1.
    pub estimate: PdfEstimate,
}

/// Propagates the scenario's moments through the distance map and
/// reconstructs the density of D^2 (steps 5 through 7 of the moment
/// estimator, without the final integral).
pub fn distance_density(
    scenario: &ConjunctionScenario,
    prepared: &PreparedMaps,
) -> Result<DistanceDensity> {
    scenario.validate()?;
    if !(prepared.maps.transversality > TRANSVERSALITY_FLOOR) {
        return Err(Error::Transversality(prepared.maps.transversality));
    }
    let moments = distance_moments(&prepared.maps, &scenario.uncertainty, scenario.moment_count)
        .map_err(|e| e.in_stage("moment-propagation"))?;
    let (m1_km2, mu) = moments.normalized();
    if !(m1_km2 > 0.0) {
        return Err(Error::DegenerateMoments(format!(
            "E[D^2] = {m1_km2} km^2 is not positive"
        ))
        .in_stage("moment-propagation"));
    }
    let rescaled = MomentSet {
        values: mu[1..].to_vec(),
    };
    let reference = fit_reference(&rescaled, DomainHint::HalfLine)
        .map_err(|e| e.in_stage("reference-fit"))?;
    let basis =
        build_basis(&reference, scenario.moment_count).map_err(|e| e.in_stage("pdf-expansion"))?;
    let estimate =
        expansion_coeffs(basis, &rescaled).map_err(|e| e.in_stage("pdf-expansion"))?;
    Ok(DistanceDensity {
        m1_km2,
        moments,
        estimate,
    })
}

impl DistanceDensity {
    /// Raw (unclamped) collision probability for a combined radius in
    /// meters: the closed-form integral of the density over [0, R^2].
    /// Truncation can push the value slightly outside [0, 1].
    pub fn probability_raw(&self, radius_m: f64) -> Result<f64> {
        if !(radius_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "the moment estimator needs a positive collision radius, got {radius_m} m"
            )));
        }
        let r_km2 = (radius_m * 1e-3).powi(2);
        self.estimate
            .integrate(0.0, r_km2 / self.m1_km2)
            .map_err(|e| e.in_stage("probability-integral"))
    }
}

/// Method-specific detail accompanying a probability estimate. Fields
/// that do not apply to the reporting method stay `None` and are skipped
/// during serialization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Diagnostics {
    /// Nominal closest-approach time, seconds past the initial epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_ca_s: Option<f64>,
    /// Nominal closest-approach distance, km.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_ca_km: Option<f64>,
    /// Nominal relative speed at closest approach, km/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_speed_km_s: Option<f64>,
    /// Event-rate slope of the map inversion, km^2/s^2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transversality: Option<f64>,
    /// Moments propagated by the moment estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_count: Option<usize>,
    /// Reference distribution family chosen by the moment estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// First raw moment E[D^2], km^2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m1_km2: Option<f64>,
    /// Smallest relative Hankel eigenvalue of the propagated moments;
    /// negative values beyond roundoff flag an inconsistent sequence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hankel_ratio: Option<f64>,
    /// Sample count of a sampling estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    /// Samples whose closest-approach distance fell below the radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hits: Option<u64>,
    /// Monte Carlo samples with no closest approach inside the window;
    /// counted separately from misses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_not_found: Option<u64>,
    /// Taylor Monte Carlo samples with any RTN component beyond five
    /// dispersions (sigma or half-width): a proxy for samples leaving the
    /// map's trust region.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outside_5sigma: Option<u64>,
}

/// A probability estimate with its method tag and runtime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcResult {
    /// Estimator tag: "moments", "mc", or "tmc".
    pub method: String,
    /// Probability as computed. The moment estimator can report values
    /// slightly outside [0, 1] from the truncated expansion.
    pub p_raw: f64,
    /// `p_raw` clamped to [0, 1]; comparisons use this value.
    pub p_clamped: f64,
    /// Binomial standard error sqrt(p(1-p)/n) for sampling estimators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    pub diagnostics: Diagnostics,
    /// Wall-clock time of the estimator call, milliseconds.
    pub wall_ms: f64,
}

fn nominal_diagnostics(event: &CaEvent) -> Diagnostics {
    Diagnostics {
        t_ca_s: Some(event.t),
        d_ca_km: Some(event.distance),
        rel_speed_km_s: Some(event.rel_speed),
        ..Diagnostics::default()
    }
}

/// Moment-based probability of collision: nominal detection, fixed-time
/// map, event-time inversion, distance map, RTN substitution, moment
/// propagation, reference fit and expansion, closed-form integral over
/// [0, R^2]. Deterministic for a fixed scenario.
pub fn pc_moments(scenario: &ConjunctionScenario) -> Result<PcResult> {
    let start = Instant::now();
    let prepared = prepare_maps(scenario)?;
    let mut result = pc_moments_prepared(scenario, &prepared)?;
    result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// [`pc_moments`] on maps that were built once and are being reused, e.g.
/// across a radius or uncertainty-scale sweep.
pub fn pc_moments_prepared(
    scenario: &ConjunctionScenario,
    prepared: &PreparedMaps,
) -> Result<PcResult> {
    let start = Instant::now();
    let density = distance_density(scenario, prepared)?;
    let p_raw = density.probability_raw(scenario.radius_m)?;
    let mut diagnostics = nominal_diagnostics(&prepared.nominal.event);
    diagnostics.transversality = Some(prepared.maps.transversality);
    diagnostics.moment_count = Some(scenario.moment_count);
    diagnostics.reference = Some(density.estimate.reference().family().to_string());
    diagnostics.m1_km2 = Some(density.m1_km2);
    diagnostics.hankel_ratio = Some(density.moments.hankel_min_eigenvalue_ratio());
    Ok(PcResult {
        method: "moments".to_string(),
        p_raw,
        p_clamped: p_raw.clamp(0.0, 1.0),
        se: None,
        diagnostics,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Deterministic per-sample draw: sample `i` reads substream `i` of the
/// generator keyed by `seed`, so draws do not depend on iteration order or
/// thread count, and estimators sharing a seed see identical samples.
fn draw_sample(spec: &UncertaintySpec, seed: u64, i: u64) -> [f64; 6] {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(i);
    spec.sample_km(&mut rng)
}

fn binomial_result(method: &str, n: u64, hits: u64, diagnostics: Diagnostics) -> PcResult {
    let p = hits as f64 / n as f64;
    PcResult {
        method: method.to_string(),
        p_raw: p,
        p_clamped: p,
        se: Some((p * (1.0 - p) / n as f64).sqrt()),
        diagnostics,
        wall_ms: 0.0,
    }
}

/// Monte Carlo probability of collision: perturbs the initial states,
/// re-detects the closest approach of every sample inside the nominal
/// search window, and counts distances below the radius. Ground truth up
/// to sampling noise, and the reference the other estimators are judged
/// against.
pub fn pc_monte_carlo(scenario: &ConjunctionScenario, n: u64, seed: u64) -> Result<PcResult> {
    let start = Instant::now();
    let nominal = prepare_nominal(scenario)?;
    let mut result = pc_monte_carlo_prepared(scenario, &nominal, n, seed)?;
    result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// [`pc_monte_carlo`] on an already-detected nominal conjunction.
pub fn pc_monte_carlo_prepared(
    scenario: &ConjunctionScenario,
    nominal: &NominalConjunction,
    n: u64,
    seed: u64,
) -> Result<PcResult> {
    let start = Instant::now();
    scenario.validate()?;
    if n < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    let opts = IntegratorOptions {
        rtol: MC_SAMPLE_RTOL,
        atol: MC_SAMPLE_RTOL,
        ..IntegratorOptions::default()
    };
    let frame_a = rtn_frame(&nominal.initial_a).map_err(|e| e.in_stage("sampling"))?;
    let frame_b = rtn_frame(&nominal.initial_b).map_err(|e| e.in_stage("sampling"))?;
    let radius_km = scenario.radius_km();
    let (lo, hi) = nominal.window;
    let t_nominal = nominal.event.t;

    let (hits, not_found) = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(u64, u64)> {
            let delta = draw_sample(&scenario.uncertainty, seed, i);
            let mut sample_a = nominal.initial_a;
            let mut sample_b = nominal.initial_b;
            for j in 0..3 {
                sample_a.r += frame_a.column(j) * delta[j];
                sample_b.r += frame_b.column(j) * delta[3 + j];
            }
            let events = approach_minima(&sample_a, &sample_b, lo, hi, scenario.mu, &opts)
                .map_err(|e| e.in_stage("sampling"))?;
            // the sample's own encounter is the minimum nearest the nominal
            // approach time; position dispersions shift it by milliseconds
            let best = events
                .iter()
                .min_by(|x, y| (x.t - t_nominal).abs().total_cmp(&(y.t - t_nominal).abs()));
            Ok(match best {
                Some(event) => (u64::from(event.distance < radius_km), 0),
                None => (0, 1),
            })
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;

    let mut diagnostics = nominal_diagnostics(&nominal.event);
    diagnostics.samples = Some(n);
    diagnostics.hits = Some(hits);
    diagnostics.event_not_found = Some(not_found);
    let mut result = binomial_result("mc", n, hits, diagnostics);
    result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// Taylor Monte Carlo probability of collision: evaluates the squared
/// closest-approach distance map at each sample instead of re-running
/// event detection, isolating map error from sampling error. Shares its
/// sampling streams with [`pc_monte_carlo`] for paired comparison.
pub fn pc_taylor_mc(scenario: &ConjunctionScenario, n: u64, seed: u64) -> Result<PcResult> {
    let start = Instant::now();
    let prepared = prepare_maps(scenario)?;
    let mut result = pc_taylor_mc_prepared(scenario, &prepared, n, seed)?;
    result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// [`pc_taylor_mc`] on maps that were built once and are being reused.
pub fn pc_taylor_mc_prepared(
    scenario: &ConjunctionScenario,
    prepared: &PreparedMaps,
    n: u64,
    seed: u64,
) -> Result<PcResult> {
    let start = Instant::now();
    scenario.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Taylor Monte Carlo needs at least one sample".into(),
        ));
    }
    let r2_km2 = scenario.radius_km().powi(2);
    let dist_sq = &prepared.maps.dist_sq;
    let trust_km: [f64; 6] =
        std::array::from_fn(|axis| 5.0 * scenario.uncertainty.dispersion_km(axis));

    let (hits, outside) = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(u64, u64)> {
            let delta = draw_sample(&scenario.uncertainty, seed, i);
            let value = dist_sq.eval(&delta).map_err(|e| e.in_stage("sampling"))?;
            let out = delta
                .iter()
                .zip(&trust_km)
                .any(|(d, limit)| d.abs() > *limit);
            Ok((u64::from(value < r2_km2), u64::from(out)))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;

    let mut diagnostics = nominal_diagnostics(&prepared.nominal.event);
    diagnostics.transversality = Some(prepared.maps.transversality);
    diagnostics.samples = Some(n);
    diagnostics.hits = Some(hits);
    diagnostics.outside_5sigma = Some(outside);
    let mut result = binomial_result("tmc", n, hits, diagnostics);
    result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::UncertaintyKind;
    use crate::dataset;
    use std::sync::LazyLock;

    fn scenario() -> ConjunctionScenario {
        let case = dataset::case(1).unwrap();
        ConjunctionScenario::from_case(case, 3600.0, UncertaintySpec::benchmark_normal(1.0).unwrap())
            .unwrap()
    }

    static FIXTURE: LazyLock<(ConjunctionScenario, PreparedMaps)> = LazyLock::new(|| {
        let s = scenario();
        let prepared = prepare_maps(&s).unwrap();
        (s, prepared)
    });

    fn zero_variance_spec() -> UncertaintySpec {
        UncertaintySpec::new(UncertaintyKind::DiagonalNormalRtn, [0.0; 3], [0.0; 3], 1.0).unwrap()
    }

    /// Radius (meters) near the RMS miss distance, where the collision
    /// probability is a sampling-friendly O(0.5).
    fn rms_radius_m(density: &DistanceDensity) -> f64 {
        density.m1_km2.sqrt() * 1e3
    }

    #[test]
    fn nominal_detection_reproduces_dataset_row() {
        let case = dataset::case(1).unwrap();
        let (s, prepared) = &*FIXTURE;
        let event = prepared.nominal.event;
        assert!(
            (event.t - s.back_prop_s).abs() < 1.0,
            "closest approach at {} s, expected near {} s",
            event.t,
            s.back_prop_s
        );
        assert!((event.distance * 1e3 - case.miss_distance_m).abs() < 1.0);
        assert!((event.rel_speed * 1e3 - case.rel_speed_mps).abs() < 0.1);
        assert!(prepared.maps.transversality > TRANSVERSALITY_FLOOR);
    }

    #[test]
    fn scenario_validation_rejects_bad_inputs() {
        let good = scenario();
        let mut s = good.clone();
        s.radius_m = -1.0;
        assert!(matches!(s.validate(), Err(Error::InvalidArgument(_))));
        s = good.clone();
        s.radius_m = f64::NAN;
        assert!(s.validate().is_err());
        s = good.clone();
        s.back_prop_s = 0.0;
        assert!(s.validate().is_err());
        s = good.clone();
        s.mu = -1.0;
        assert!(s.validate().is_err());
        s = good.clone();
        s.order = 0;
        assert!(s.validate().is_err());
        s = good.clone();
        s.moment_count = 1;
        assert!(s.validate().is_err());
        s = good.clone();
        s.moment_count = MAX_BASIS_DEGREE + 1;
        assert!(s.validate().is_err());

        // zero radius is valid for sampling but not for the moment method
        s = good.clone();
        s.radius_m = 0.0;
        assert!(s.validate().is_ok());
        let (_, prepared) = &*FIXTURE;
        let err = pc_moments_prepared(&s, prepared).unwrap_err();
        assert!(matches!(err.root(), Error::InvalidArgument(_)), "got {err}");
    }

    #[test]
    fn mc_trivial_radii_and_seed_determinism() {
        let (s, prepared) = &*FIXTURE;
        let nominal = &prepared.nominal;

        let mut zero = s.clone();
        zero.radius_m = 0.0;
        let r0 = pc_monte_carlo_prepared(&zero, nominal, 1000, 7).unwrap();
        assert_eq!(r0.p_clamped, 0.0);
        assert_eq!(r0.diagnostics.hits, Some(0));
        assert_eq!(r0.diagnostics.event_not_found, Some(0));

        let mut huge = s.clone();
        huge.radius_m = 10_000.0;
        let r1 = pc_monte_carlo_prepared(&huge, nominal, 1000, 7).unwrap();
        assert_eq!(r1.p_clamped, 1.0);
        assert_eq!(r1.diagnostics.hits, Some(1000));

        let a = pc_monte_carlo_prepared(s, nominal, 1000, 42).unwrap();
        let b = pc_monte_carlo_prepared(s, nominal, 1000, 42).unwrap();
        assert_eq!(a.diagnostics.hits, b.diagnostics.hits);
        let p = a.p_raw;
        let se = (p * (1.0 - p) / 1000.0).sqrt();
        assert!((a.se.unwrap() - se).abs() < 1e-15);

        let err = pc_monte_carlo_prepared(s, nominal, MIN_MC_SAMPLES - 1, 7).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn tmc_trivial_radii_and_zero_variance_limit() {
        let (s, prepared) = &*FIXTURE;

        let mut zero = s.clone();
        zero.radius_m = 0.0;
        let r0 = pc_taylor_mc_prepared(&zero, prepared, 1000, 3).unwrap();
        assert_eq!(r0.p_clamped, 0.0);

        // zero dispersion evaluates only the map's constant term d_ca^2,
        // so the estimate is a step function of the radius
        let mut frozen = s.clone();
        frozen.uncertainty = zero_variance_spec();
        let d_ca_m = prepared.nominal.event.distance * 1e3;
        frozen.radius_m = 0.5 * d_ca_m;
        let below = pc_taylor_mc_prepared(&frozen, prepared, 1000, 3).unwrap();
        assert_eq!(below.p_clamped, 0.0);
        frozen.radius_m = 2.0 * d_ca_m;
        let above = pc_taylor_mc_prepared(&frozen, prepared, 1000, 3).unwrap();
        assert_eq!(above.p_clamped, 1.0);
        assert_eq!(above.diagnostics.outside_5sigma, Some(0));

        let err = pc_taylor_mc_prepared(s, prepared, 0, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn sampling_is_thread_count_invariant() {
        let (s, prepared) = &*FIXTURE;
        let mut mid = s.clone();
        mid.radius_m = rms_radius_m(&distance_density(s, prepared).unwrap());
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mc = pc_monte_carlo_prepared(&mid, &prepared.nominal, 1000, 11).unwrap();
                let tmc = pc_taylor_mc_prepared(&mid, prepared, 1000, 11).unwrap();
                (mc.diagnostics.hits, tmc.diagnostics.hits)
            })
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn tmc_tracks_mc_under_common_random_numbers() {
        let (s, prepared) = &*FIXTURE;
        let mut mid = s.clone();
        mid.radius_m = rms_radius_m(&distance_density(s, prepared).unwrap());
        let mc = pc_monte_carlo_prepared(&mid, &prepared.nominal, 4000, 2024).unwrap();
        let tmc = pc_taylor_mc_prepared(&mid, prepared, 4000, 2024).unwrap();
        assert!(
            mc.p_clamped > 0.2 && mc.p_clamped < 0.9,
            "radius choice should give a mid-range probability, got {}",
            mc.p_clamped
        );
        // paired samples: the counts may differ only where the map misranks
        // a distance against the radius, well inside binomial noise
        let tol = 3.0 * mc.se.unwrap();
        assert!(
            (mc.p_clamped - tmc.p_clamped).abs() <= tol,
            "mc {} vs tmc {} exceeds {tol}",
            mc.p_clamped,
            tmc.p_clamped
        );
        assert_eq!(mc.diagnostics.event_not_found, Some(0));
    }

    #[test]
    fn moment_estimate_agrees_with_sampling_baselines() {
        let (s, prepared) = &*FIXTURE;
        let mut mid = s.clone();
        mid.radius_m = rms_radius_m(&distance_density(s, prepared).unwrap());

        let moments = pc_moments_prepared(&mid, prepared).unwrap();
        let tmc = pc_taylor_mc_prepared(&mid, prepared, 100_000, 5).unwrap();
        assert!(moments.p_clamped > 1e-3 && tmc.p_clamped > 1e-3);
        let tol = (3.0 * tmc.se.unwrap()).max(1e-2);
        assert!(
            (moments.p_clamped - tmc.p_clamped).abs() <= tol,
            "moments {} vs tmc {} exceeds {tol}",
            moments.p_clamped,
            tmc.p_clamped
        );

        let mc = pc_monte_carlo_prepared(&mid, &prepared.nominal, 10_000, 5).unwrap();
        let ratio = moments.p_clamped / mc.p_clamped;
        assert!(
            ratio > 0.1 && ratio < 10.0,
            "moments {} vs mc {} disagree beyond an order of magnitude",
            moments.p_clamped,
            mc.p_clamped
        );

        assert_eq!(moments.diagnostics.moment_count, Some(mid.moment_count));
        assert!(moments.diagnostics.reference.is_some());
        assert!(moments.se.is_none());
    }

    #[test]
    fn moment_probability_is_monotone_in_radius() {
        let (s, prepared) = &*FIXTURE;
        let density = distance_density(s, prepared).unwrap();
        let r_mid = rms_radius_m(&density);
        let mut previous = f64::NEG_INFINITY;
        for k in 1..=12 {
            let radius = r_mid * k as f64 / 6.0;
            let p = density.probability_raw(radius).unwrap();
            assert!(
                p >= previous - 1e-12,
                "p({radius} m) = {p} dropped below {previous}"
            );
            previous = p;
        }
    }

    #[test]
    fn huge_radius_saturates_probability() {
        let (s, prepared) = &*FIXTURE;
        let mut sat = s.clone();
        sat.radius_m = 10_000.0;
        let result = pc_moments_prepared(&sat, prepared).unwrap();
        assert!(result.p_raw >= 0.999);
        assert!(result.p_clamped >= 0.999 && result.p_clamped <= 1.0);
    }

    #[test]
    fn zero_variance_moments_is_a_degenerate_error() {
        let (s, prepared) = &*FIXTURE;
        let mut degenerate = s.clone();
        degenerate.uncertainty = zero_variance_spec();
        let err = pc_moments_prepared(&degenerate, prepared).unwrap_err();
        assert!(
            matches!(err.root(), Error::DegenerateMoments(_)),
            "got {err}"
        );
        assert!(err.to_string().contains("reference-fit"), "got {err}");
    }

    #[test]
    fn grazing_transversality_is_reported_distinctly() {
        let (s, prepared) = &*FIXTURE;
        let mut grazing = prepared.clone();
        grazing.maps.transversality = 0.0;
        let err = pc_moments_prepared(s, &grazing).unwrap_err();
        assert!(matches!(err, Error::Transversality(_)), "got {err}");
        let err = distance_density(s, &grazing).unwrap_err();
        assert!(matches!(err, Error::Transversality(_)), "got {err}");
    }

    #[test]
    fn result_json_round_trips_and_skips_unused_fields() {
        let (s, prepared) = &*FIXTURE;
        let result = pc_moments_prepared(s, prepared).unwrap();
        let json = serde_json::to_string(&result).unwrap();
        assert!(!json.contains("samples"), "unexpected field in {json}");
        assert!(!json.contains("\"se\""), "unexpected field in {json}");
        assert!(json.contains("\"reference\""));
        let back: PcResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, result);
    }
}
