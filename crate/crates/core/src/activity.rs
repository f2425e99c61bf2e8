//! Activity taxonomy, the discretized pre-departure time axis, and the
//! passenger feature encoding shared by every other module.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const HORIZON_MINUTES: u32 = 180;
pub const UNIT_MINUTES: u32 = 5;
pub const N_UNITS: usize = (HORIZON_MINUTES / UNIT_MINUTES) as usize;
pub const N_ACTIVITIES: usize = 6;
pub const N_FEATURES: usize = 5;

/// Names of the static inputs, in feature-vector order.
pub const FEATURE_NAMES: [&str; N_FEATURES] =
    ["arrival_time", "earliness", "destination", "carrier", "brand"];

/// What a passenger is doing during one time unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ActivityType {
    NotAtAirport = 0,
    Mandatory = 1,
    Eating = 2,
    Shopping = 3,
    Waiting = 4,
    Other = 5,
}

impl ActivityType {
    pub const ALL: [ActivityType; N_ACTIVITIES] = [
        ActivityType::NotAtAirport,
        ActivityType::Mandatory,
        ActivityType::Eating,
        ActivityType::Shopping,
        ActivityType::Waiting,
        ActivityType::Other,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Domain(format!("activity code {code} outside 0..=5")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityType::NotAtAirport => "NotAtAirport",
            ActivityType::Mandatory => "Mandatory",
            ActivityType::Eating => "Eating",
            ActivityType::Shopping => "Shopping",
            ActivityType::Waiting => "Waiting",
            ActivityType::Other => "Other",
        }
    }

    pub fn is_discretionary(self) -> bool {
        matches!(
            self,
            ActivityType::Eating | ActivityType::Shopping | ActivityType::Other
        )
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(code) = s.parse::<u8>() {
            return Self::from_code(code);
        }
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown activity `{s}`")))
    }
}

/// `code,name` lines for the activity table, header included.
pub fn activity_table_csv() -> Vec<String> {
    std::iter::once("code,name".to_string())
        .chain(
            ActivityType::ALL
                .iter()
                .map(|a| format!("{},{}", a.code(), a.name())),
        )
        .collect()
}

/// The flight-relative time grid. Unit `k` covers the minutes-before-departure
/// interval `(180 - 5(k+1), 180 - 5k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeAxis {
    pub horizon_minutes: u32,
    pub unit_minutes: u32,
    pub n_units: usize,
}

impl TimeAxis {
    pub const STANDARD: TimeAxis = TimeAxis {
        horizon_minutes: HORIZON_MINUTES,
        unit_minutes: UNIT_MINUTES,
        n_units: N_UNITS,
    };

    /// Upper (earliest) minutes-before bound of unit `k`, inclusive.
    pub fn minutes_before_hi(&self, k: usize) -> u32 {
        self.horizon_minutes - self.unit_minutes * k as u32
    }

    /// Lower (latest) minutes-before bound of unit `k`, exclusive.
    pub fn minutes_before_lo(&self, k: usize) -> u32 {
        self.horizon_minutes - self.unit_minutes * (k as u32 + 1)
    }

    /// Absolute `[start, end)` window of unit `k` in epoch seconds for a
    /// flight departing at `departure`.
    pub fn unit_window(&self, departure: i64, k: usize) -> (i64, i64) {
        let start = departure - 60 * i64::from(self.minutes_before_hi(k));
        (start, start + 60 * i64::from(self.unit_minutes))
    }

    pub fn horizon_start(&self, departure: i64) -> i64 {
        departure - 60 * i64::from(self.horizon_minutes)
    }
}

impl Default for TimeAxis {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Maps minutes-before-departure in `(0, 180]` to its unit index.
pub fn unit_index(minutes_before_departure: f64) -> Result<usize> {
    let m = minutes_before_departure;
    let horizon = f64::from(HORIZON_MINUTES);
    if !(m > 0.0 && m <= horizon) {
        return Err(Error::Domain(format!(
            "minutes before departure {m} outside (0, {horizon}]"
        )));
    }
    let k = ((horizon - m) / f64::from(UNIT_MINUTES)).floor() as usize;
    Ok(k.min(N_UNITS - 1))
}

/// Inclusive span of units over which the summary misclassification rate is
/// averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticalPeriod {
    pub first: usize,
    pub last: usize,
}

impl CriticalPeriod {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if first > last || last >= N_UNITS {
            return Err(Error::Validation(format!(
                "critical period units {first}..={last} invalid for {N_UNITS} units"
            )));
        }
        Ok(Self { first, last })
    }

    /// Units whose upper minutes-before bound lies in `[lo_minutes, hi_minutes]`.
    pub fn from_minutes(lo_minutes: u32, hi_minutes: u32) -> Result<Self> {
        let axis = TimeAxis::STANDARD;
        let units: Vec<usize> = (0..N_UNITS)
            .filter(|&k| (lo_minutes..=hi_minutes).contains(&axis.minutes_before_hi(k)))
            .collect();
        match (units.first(), units.last()) {
            (Some(&first), Some(&last)) => Self::new(first, last),
            _ => Err(Error::Validation(format!(
                "no unit starts within {lo_minutes}..={hi_minutes} minutes before departure"
            ))),
        }
    }

    pub fn units(&self) -> RangeInclusive<usize> {
        self.first..=self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for CriticalPeriod {
    fn default() -> Self {
        Self::from_minutes(30, 100).expect("standard critical period")
    }
}

/// The standard critical period: units 16 through 30.
pub fn critical_period_units() -> RangeInclusive<usize> {
    CriticalPeriod::default().units()
}

pub fn one_hot(a: ActivityType) -> [f64; N_ACTIVITIES] {
    let mut v = [0.0; N_ACTIVITIES];
    v[a.index()] = 1.0;
    v
}

pub fn one_hot_code(code: u8) -> Result<[f64; N_ACTIVITIES]> {
    ActivityType::from_code(code).map(one_hot)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class decision for a probability (or score) vector over activities.
pub fn decide(probabilities: &[f64]) -> ActivityType {
    ActivityType::ALL[argmax(probabilities)]
}

/// One passenger's activity per time unit, earliest unit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivitySequence {
    pub passenger_id: String,
    pub flight_departure: Option<i64>,
    units: [ActivityType; N_UNITS],
}

impl ActivitySequence {
    pub fn new(
        passenger_id: impl Into<String>,
        flight_departure: Option<i64>,
        units: [ActivityType; N_UNITS],
    ) -> Result<Self> {
        let passenger_id = passenger_id.into();
        if let Some(k) = first_return_to_not_at_airport(&units) {
            return Err(Error::Validation(format!(
                "passenger {passenger_id}: NotAtAirport at unit {k} after arrival"
            )));
        }
        Ok(Self {
            passenger_id,
            flight_departure,
            units,
        })
    }

    /// Builds a sequence from a slice, checking its length.
    pub fn from_slice(
        passenger_id: impl Into<String>,
        flight_departure: Option<i64>,
        units: &[ActivityType],
    ) -> Result<Self> {
        let units: [ActivityType; N_UNITS] = units.try_into().map_err(|_| {
            Error::Validation(format!(
                "sequence has {} units, expected {N_UNITS}",
                units.len()
            ))
        })?;
        Self::new(passenger_id, flight_departure, units)
    }

    pub fn units(&self) -> &[ActivityType; N_UNITS] {
        &self.units
    }

    pub fn get(&self, k: usize) -> ActivityType {
        self.units[k]
    }

    /// First unit at which the passenger is detected at the airport.
    pub fn arrival_unit(&self) -> Option<usize> {
        self.units
            .iter()
            .position(|&a| a != ActivityType::NotAtAirport)
    }
}

fn first_return_to_not_at_airport(units: &[ActivityType]) -> Option<usize> {
    let arrival = units.iter().position(|&a| a != ActivityType::NotAtAirport)?;
    units[arrival..]
        .iter()
        .position(|&a| a == ActivityType::NotAtAirport)
        .map(|k| k + arrival)
}

/// Static inputs of the per-unit classifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassengerFeatures {
    /// Hour of day of arrival divided by 24.
    pub arrival_time: f64,
    /// Minutes between arrival and scheduled departure over 180, clipped to 1.
    pub earliness: f64,
    /// Short-range destination.
    pub destination: bool,
    /// Traditional (not low-cost) carrier.
    pub carrier: bool,
    /// Brand-A device.
    pub brand: bool,
}

impl PassengerFeatures {
    pub fn new(
        arrival_time: f64,
        earliness: f64,
        destination: bool,
        carrier: bool,
        brand: bool,
    ) -> Result<Self> {
        for (name, v) in [("arrival_time", arrival_time), ("earliness", earliness)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            arrival_time,
            earliness,
            destination,
            carrier,
            brand,
        })
    }

    /// Parses the five encoded values, dummies as `0`/`1`.
    pub fn from_values(values: [f64; N_FEATURES]) -> Result<Self> {
        let dummy = |name: &str, v: f64| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::Validation(format!("{name} = {v} is not a 0/1 dummy")))
            }
        };
        Self::new(
            values[0],
            values[1],
            dummy("destination", values[2])?,
            dummy("carrier", values[3])?,
            dummy("brand", values[4])?,
        )
    }

    pub fn to_vec(&self) -> [f64; N_FEATURES] {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        [
            self.arrival_time,
            self.earliness,
            b(self.destination),
            b(self.carrier),
            b(self.brand),
        ]
    }
}

/// Unnormalized passenger and trip facts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPassengerInfo {
    /// Arrival at the airport, epoch seconds (UTC).
    pub arrival_ts: i64,
    /// Scheduled departure, epoch seconds (UTC).
    pub departure_ts: i64,
    pub short_range: bool,
    pub traditional_carrier: bool,
    pub brand_a: bool,
}

pub fn normalize_features(raw: &RawPassengerInfo) -> Result<PassengerFeatures> {
    if raw.arrival_ts > raw.departure_ts {
        return Err(Error::Validation(format!(
            "arrival {} after scheduled departure {}",
            raw.arrival_ts, raw.departure_ts
        )));
    }
    let hour = raw.arrival_ts.rem_euclid(86_400) as f64 / 3600.0;
    let minutes_before = (raw.departure_ts - raw.arrival_ts) as f64 / 60.0;
    let horizon = f64::from(HORIZON_MINUTES);
    PassengerFeatures::new(
        hour / 24.0,
        minutes_before.min(horizon) / horizon,
        raw.short_range,
        raw.traditional_carrier,
        raw.brand_a,
    )
}
