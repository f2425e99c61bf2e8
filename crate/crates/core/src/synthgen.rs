//! Seeded synthetic passenger populations.
//!
//! Each passenger arrives `earliness` minutes before departure, checks in,
//! then moves between discretionary activities (a semi-Markov chain with
//! geometric dwells in whole units) until a security deadline, clears
//! security and waits at the gate. The timeline is built as stays in whole
//! seconds and labelled with the same reconstruction used for real traces,
//! so emitting the stays and ingesting them gives back the same dataset.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{
    ActivitySequence, ActivityType, PassengerFeatures, TimeAxis, N_ACTIVITIES, N_UNITS,
};
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::ingestion::{
    passenger_features, reconstruct_sequence, AreaInfo, AreaMap, FlightRecord, StayRecord,
};
use crate::seed::rng_for;

/// Activities of the discretionary phase, in the column order of
/// [`GeneratorParams::transition_weights`].
pub const CHOICES: [ActivityType; 4] = [
    ActivityType::Mandatory,
    ActivityType::Eating,
    ActivityType::Shopping,
    ActivityType::Other,
];
pub const N_BANDS: usize = 3;

/// Midnight UTC, 1 January 2019.
const EPOCH_DAY0: i64 = 1_546_300_800;
const HORIZON_SECS: i64 = 180 * 60;
const UNIT_SECS: i64 = 5 * 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorParams {
    pub n_passengers: usize,
    pub seed: u64,
    /// Minutes before departure; samples are clipped to [15, 180].
    pub earliness_mean: f64,
    pub earliness_std: f64,
    /// Hour of day of arrival, drawn uniformly.
    pub arrival_hour_range: [f64; 2],
    pub p_short_range: f64,
    pub p_traditional: f64,
    pub p_brand: f64,
    /// Check-in duration in minutes, at most half the time left on arrival.
    pub checkin_mean: f64,
    pub checkin_std: f64,
    /// Minutes before departure at which the passenger heads to security.
    pub security_trigger_mean: f64,
    pub security_trigger_std: f64,
    /// Security duration in minutes, at most half the time left.
    pub security_mean: f64,
    pub security_std: f64,
    /// Upper edges, in minutes left before the security deadline, of the
    /// first two time bands; the last band is everything beyond.
    pub band_edges: [f64; N_BANDS - 1],
    /// Choice weights per band (nearest deadline first) over [`CHOICES`].
    pub transition_weights: [[f64; 4]; N_BANDS],
    /// Per-unit probability of staying in the current activity, per choice.
    pub dwell_continue: [f64; 4],
    /// Weight multiplier for activities already done in this visit.
    pub repeat_penalty: f64,
    /// Log-odds offsets over [`CHOICES`] for short-range destination,
    /// traditional carrier and brand-A device.
    pub destination_effect: [f64; 4],
    pub carrier_effect: [f64; 4],
    pub brand_effect: [f64; 4],
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n_passengers: 5805,
            seed: 42,
            earliness_mean: 105.0,
            earliness_std: 40.0,
            arrival_hour_range: [5.0, 21.0],
            p_short_range: 0.6,
            p_traditional: 0.45,
            p_brand: 0.4,
            checkin_mean: 12.0,
            checkin_std: 5.0,
            security_trigger_mean: 45.0,
            security_trigger_std: 12.0,
            security_mean: 8.0,
            security_std: 3.0,
            band_edges: [30.0, 60.0],
            transition_weights: [
                [0.05, 0.35, 0.40, 0.20],
                [0.10, 0.40, 0.30, 0.20],
                [0.10, 0.45, 0.20, 0.25],
            ],
            dwell_continue: [0.5, 0.75, 0.65, 0.6],
            repeat_penalty: 0.3,
            destination_effect: [0.0, 0.0, -0.2, 0.2],
            carrier_effect: [0.0, 0.3, 0.0, -0.1],
            brand_effect: [0.0, -0.1, 0.3, 0.0],
        }
    }
}

impl GeneratorParams {
    /// Long discretionary phases with no repeats and a late deadline, so the
    /// next activity depends on everything done since arrival.
    pub fn long_dependency() -> Self {
        Self {
            earliness_mean: 150.0,
            earliness_std: 20.0,
            security_trigger_mean: 25.0,
            security_trigger_std: 5.0,
            transition_weights: [[0.05, 0.45, 0.35, 0.15]; N_BANDS],
            dwell_continue: [0.7, 0.8, 0.8, 0.75],
            repeat_penalty: 0.0,
            destination_effect: [0.0; 4],
            carrier_effect: [0.0; 4],
            brand_effect: [0.0; 4],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        for (name, p) in [
            ("p_short_range", self.p_short_range),
            ("p_traditional", self.p_traditional),
            ("p_brand", self.p_brand),
            ("repeat_penalty", self.repeat_penalty),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if let Some(p) = self.dwell_continue.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return fail(format!("dwell_continue {p} outside [0, 1)"));
        }
        if !(15.0..=180.0).contains(&self.earliness_mean) {
            return fail(format!("earliness_mean {} outside [15, 180]", self.earliness_mean));
        }
        for (name, mean, std) in [
            ("earliness", self.earliness_mean, self.earliness_std),
            ("checkin", self.checkin_mean, self.checkin_std),
            ("security_trigger", self.security_trigger_mean, self.security_trigger_std),
            ("security", self.security_mean, self.security_std),
        ] {
            if !(mean.is_finite() && mean > 0.0 && std.is_finite() && std >= 0.0) {
                return fail(format!("{name} mean {mean} / std {std} unusable"));
            }
        }
        let [lo, hi] = self.arrival_hour_range;
        if !(0.0 <= lo && lo <= hi && hi < 24.0) {
            return fail(format!("arrival_hour_range [{lo}, {hi}] not within [0, 24)"));
        }
        if !(self.band_edges[0] > 0.0 && self.band_edges[0] < self.band_edges[1]) {
            return fail(format!("band_edges {:?} not increasing and positive", self.band_edges));
        }
        for row in &self.transition_weights {
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || row.iter().sum::<f64>() <= 0.0 {
                return fail(format!("transition weights {row:?} must be non-negative with a positive sum"));
            }
        }
        let effects = [self.destination_effect, self.carrier_effect, self.brand_effect];
        if effects.iter().flatten().any(|e| !e.is_finite()) {
            return fail("feature effects must be finite".into());
        }
        Ok(())
    }

    fn band(&self, minutes_to_deadline: f64) -> usize {
        self.band_edges
            .iter()
            .position(|&e| minutes_to_deadline <= e)
            .unwrap_or(N_BANDS - 1)
    }
}

/// Area layout of the synthetic terminal: 32 areas.
pub fn synthetic_area_map() -> AreaMap {
    use ActivityType::*;
    let mut areas = BTreeMap::new();
    let groups: [(&str, usize, ActivityType, bool, bool); 10] = [
        ("checkin", 4, Mandatory, false, true),
        ("security", 2, Mandatory, false, true),
        ("land-food", 2, Eating, false, true),
        ("land-shop", 2, Shopping, false, true),
        ("land-hall", 2, Other, false, true),
        ("air-food", 4, Eating, false, false),
        ("air-shop", 6, Shopping, false, false),
        ("air-other", 2, Other, false, false),
        ("customs", 1, Mandatory, false, false),
        ("gate", 7, Waiting, true, false),
    ];
    for (prefix, n, activity, gate, pre) in groups {
        for i in 1..=n {
            areas.insert(
                format!("{prefix}-{i}"),
                AreaInfo {
                    activity,
                    is_boarding_gate: gate,
                    is_pre_security: pre,
                },
            );
        }
    }
    AreaMap {
        areas,
        allow_unmapped: false,
    }
}

fn pick_area(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> String {
    format!("{prefix}-{}", rng.random_range(1..=n))
}

fn discretionary_area(rng: &mut ChaCha8Rng, a: ActivityType) -> String {
    let (prefix, n) = match a {
        ActivityType::Mandatory => ("customs", 1),
        ActivityType::Eating => ("air-food", 4),
        ActivityType::Shopping => ("air-shop", 6),
        _ => ("air-other", 2),
    };
    pick_area(rng, prefix, n)
}

fn clipped_normal(rng: &mut ChaCha8Rng, mean: f64, std: f64, lo: f64, hi: f64) -> f64 {
    let v = if std > 0.0 {
        Normal::new(mean, std).expect("validated").sample(rng)
    } else {
        mean
    };
    v.clamp(lo, hi)
}

/// One synthetic passenger: raw trip facts and stays.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub flight: FlightRecord,
    pub stays: Vec<StayRecord>,
}

fn choose(rng: &mut ChaCha8Rng, weights: &[f64; 4]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Some(i);
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0)
}

/// The trace of passenger `index`. Uses only its own random stream.
pub fn passenger_trace(params: &GeneratorParams, index: usize) -> SyntheticTrace {
    let mut rng = rng_for(params.seed, &format!("passenger:{index}"));
    let id = format!("p{index:05}");
    let p = params;

    let earliness = clipped_normal(&mut rng, p.earliness_mean, p.earliness_std, 15.0, 180.0);
    let [h_lo, h_hi] = p.arrival_hour_range;
    let hour = if h_hi > h_lo { rng.random_range(h_lo..h_hi) } else { h_lo };
    let short_range = rng.random_bool(p.p_short_range);
    let traditional = rng.random_bool(p.p_traditional);
    let brand = rng.random_bool(p.p_brand);
    let checkin = clipped_normal(&mut rng, p.checkin_mean, p.checkin_std, 1.0, 60.0);
    let trigger = clipped_normal(&mut rng, p.security_trigger_mean, p.security_trigger_std, 15.0, 120.0);
    let security = clipped_normal(&mut rng, p.security_mean, p.security_std, 1.0, 30.0);

    // Seconds since the start of the horizon; departure at HORIZON_SECS.
    let secs = |minutes: f64| (minutes * 60.0).round() as i64;
    let arrival = HORIZON_SECS - secs(earliness);
    let day = (index % 60) as i64;
    let arrival_abs = EPOCH_DAY0 + day * 86_400 + secs(hour * 60.0);
    let departure = arrival_abs - arrival + HORIZON_SECS;
    let mut stays = Vec::new();
    let mut push = |area: String, from: i64, to: i64| {
        if to > from {
            stays.push(StayRecord {
                device_id: id.clone(),
                area_id: area,
                enter_ts: departure - HORIZON_SECS + from,
                exit_ts: departure - HORIZON_SECS + to,
            });
        }
    };

    let checkin_end = arrival + secs(checkin).min((HORIZON_SECS - arrival) / 2);
    push(pick_area(&mut rng, "checkin", 4), arrival, checkin_end);

    let deadline = HORIZON_SECS - secs(trigger);
    let mut logit = [0.0; 4];
    for (on, effect) in [
        (short_range, &p.destination_effect),
        (traditional, &p.carrier_effect),
        (brand, &p.brand_effect),
    ] {
        if on {
            for (l, e) in logit.iter_mut().zip(effect) {
                *l += e;
            }
        }
    }
    let mut t = checkin_end;
    let mut done = [false; 4];
    let mut current: Option<usize> = None;
    while t < deadline {
        let band = p.band((deadline - t) as f64 / 60.0);
        let mut weights = [0.0; 4];
        for c in 0..4 {
            let mut w = p.transition_weights[band][c] * logit[c].exp();
            if done[c] {
                w *= p.repeat_penalty;
            }
            if current == Some(c) {
                w = 0.0;
            }
            weights[c] = w;
        }
        let Some(c) = choose(&mut rng, &weights) else {
            break;
        };
        let mut units = 1;
        while rng.random_bool(p.dwell_continue[c]) {
            units += 1;
        }
        let end = (t + units * UNIT_SECS).min(deadline);
        push(discretionary_area(&mut rng, CHOICES[c]), t, end);
        done[c] = true;
        current = Some(c);
        t = end;
    }

    let security_end = t + secs(security).min((HORIZON_SECS - t) / 2);
    push(pick_area(&mut rng, "security", 2), t, security_end);
    push(pick_area(&mut rng, "gate", 7), security_end, HORIZON_SECS);

    SyntheticTrace {
        flight: FlightRecord {
            device_id: id,
            flight_id: format!("FL{:03}", rng.random_range(0..400)),
            scheduled_departure: departure,
            destination_range: short_range,
            carrier_type: traditional,
            device_brand: brand,
        },
        stays,
    }
}

/// Traces of the whole population, in passenger order.
pub fn generate_traces(params: &GeneratorParams) -> Result<Vec<SyntheticTrace>> {
    params.validate()?;
    Ok((0..params.n_passengers)
        .into_par_iter()
        .map(|i| passenger_trace(params, i))
        .collect())
}

pub fn label_trace(trace: &SyntheticTrace, areas: &AreaMap) -> Result<Sample> {
    Ok(Sample {
        features: passenger_features(&trace.stays, &trace.flight)?,
        sequence: reconstruct_sequence(&trace.stays, &trace.flight, areas, &TimeAxis::STANDARD)?,
    })
}

pub fn generate_population(params: &GeneratorParams) -> Result<Dataset> {
    let areas = synthetic_area_map();
    let samples = generate_traces(params)?
        .par_iter()
        .map(|t| label_trace(t, &areas))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, format!("synthgen:seed={}", params.seed))
}

/// Share of each activity at each unit; rows sum to one.
pub fn population_summary(ds: &Dataset) -> Result<[[f64; N_ACTIVITIES]; N_UNITS]> {
    if ds.is_empty() {
        return Err(Error::Validation("empty dataset".into()));
    }
    let counts = crate::models::baseline::unit_counts(ds);
    let n = ds.len() as f64;
    Ok(counts.map(|row| row.map(|c| c as f64 / n)))
}

/// Deterministic next activity of the rule populations: a cycle through
/// Mandatory, Shopping, Eating, Other and Waiting.
pub fn rule_successor(a: ActivityType) -> ActivityType {
    use ActivityType::*;
    match a {
        Mandatory => Shopping,
        Shopping => Eating,
        Eating => Other,
        Other => Waiting,
        Waiting => Mandatory,
        NotAtAirport => NotAtAirport,
    }
}

/// `n` sequences that start from a random airport activity and then follow
/// [`rule_successor`]; every future unit is a function of the last one.
pub fn rule_population(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng_for(seed, "rule");
    let samples = (0..n)
        .map(|i| {
            let mut units = [ActivityType::ALL[rng.random_range(1..N_ACTIVITIES)]; N_UNITS];
            for t in 1..N_UNITS {
                units[t] = rule_successor(units[t - 1]);
            }
            Ok(Sample {
                features: PassengerFeatures::new(0.5, 1.0, false, false, false)?,
                sequence: ActivitySequence::new(format!("r{i:05}"), None, units)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, format!("rule population n={n} seed={seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::unit_index;
    use crate::ingestion::{filter_traces, group_by_device, ingest};
    use proptest::prelude::*;

    fn small(n: usize) -> GeneratorParams {
        GeneratorParams {
            n_passengers: n,
            ..GeneratorParams::default()
        }
    }

    #[test]
    fn empty_population() {
        assert!(generate_population(&small(0)).unwrap().is_empty());
        assert!(population_summary(&generate_population(&small(0)).unwrap()).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_population(&small(300)).unwrap();
        let b = generate_population(&small(300)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = generate_population(&GeneratorParams { seed: 7, ..small(300) }).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn fixed_earliness_fixes_the_arrival_unit() {
        let p = GeneratorParams {
            earliness_mean: 90.0,
            earliness_std: 0.0,
            ..small(200)
        };
        let ds = generate_population(&p).unwrap();
        let expected = unit_index(90.0).unwrap();
        assert_eq!(expected, 18);
        for s in ds.samples() {
            assert_eq!(s.sequence.arrival_unit(), Some(expected));
        }
    }

    #[test]
    fn default_population_shape() {
        let ds = generate_population(&small(2000)).unwrap();
        let freq = population_summary(&ds).unwrap();
        for row in &freq {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(freq[0][ActivityType::NotAtAirport.index()] >= 0.8);
        assert!(freq[N_UNITS - 1][ActivityType::Waiting.index()] >= 0.95);
    }

    #[test]
    fn identical_sequences_give_one_hot_rows() {
        let p = GeneratorParams {
            earliness_std: 0.0,
            ..small(1)
        };
        let one = generate_population(&p).unwrap();
        let s = one.samples()[0].clone();
        let copies = (0..4)
            .map(|i| {
                let mut c = s.clone();
                c.sequence.passenger_id = format!("c{i}");
                c
            })
            .collect();
        let freq = population_summary(&Dataset::new(copies, "t").unwrap()).unwrap();
        for (k, row) in freq.iter().enumerate() {
            assert_eq!(row[s.sequence.get(k).index()], 1.0);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn emitted_traces_survive_ingestion_unchanged() {
        let p = small(400);
        let traces = generate_traces(&p).unwrap();
        let areas = synthetic_area_map();
        assert_eq!(areas.areas.len(), 32);
        let stays: Vec<_> = traces.iter().flat_map(|t| t.stays.clone()).collect();
        let flights: Vec<_> = traces.iter().map(|t| t.flight.clone()).collect();
        let grouped = group_by_device(stays.clone());
        let by_id = flights.iter().map(|f| (f.device_id.clone(), f.clone())).collect();
        let (_, log) = filter_traces(&grouped, &by_id, &areas, 0).unwrap();
        assert!(log.entries.is_empty());
        let out = ingest(stays, flights, &areas, 2, "t").unwrap();
        assert_eq!(out.dataset.samples(), generate_population(&p).unwrap().samples());
    }

    #[test]
    fn rejects_infeasible_params() {
        assert!(GeneratorParams { earliness_mean: 200.0, ..small(1) }.validate().is_err());
        assert!(GeneratorParams { p_brand: 1.5, ..small(1) }.validate().is_err());
        let mut p = small(1);
        p.transition_weights[1][2] = -0.1;
        assert!(p.validate().is_err());
        assert!(generate_population(&GeneratorParams { earliness_std: -1.0, ..small(1) }).is_err());
        GeneratorParams::long_dependency().validate().unwrap();
    }

    #[test]
    fn long_dependency_never_repeats_a_discretionary_activity() {
        let p = GeneratorParams {
            n_passengers: 300,
            ..GeneratorParams::long_dependency()
        };
        for t in generate_traces(&p).unwrap() {
            let areas = synthetic_area_map();
            let acts: Vec<ActivityType> = t
                .stays
                .iter()
                .filter(|s| !s.area_id.starts_with("checkin") && !s.area_id.starts_with("security"))
                .map(|s| areas.get(&s.area_id).unwrap().activity)
                .filter(|a| *a != ActivityType::Waiting)
                .collect();
            let mut seen = std::collections::BTreeSet::new();
            assert!(acts.iter().all(|a| seen.insert(*a)), "{acts:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn passengers_are_independent_of_population_size(seed in any::<u64>(), n in 1usize..40) {
            let p = GeneratorParams { seed, ..small(n) };
            let whole = generate_population(&p).unwrap();
            let last = label_trace(&passenger_trace(&p, n - 1), &synthetic_area_map()).unwrap();
            prop_assert_eq!(&whole.samples()[n - 1], &last);
            for s in whole.samples() {
                let units = s.sequence.units();
                let arrival = s.sequence.arrival_unit().unwrap();
                prop_assert!(units[arrival..].iter().all(|a| *a != ActivityType::NotAtAirport));
                prop_assert_eq!(units[N_UNITS - 1], ActivityType::Waiting);
            }
        }
    }
}
