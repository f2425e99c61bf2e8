//! Stay, flight and area-map files to labelled activity sequences.
//!
//! File layouts (epoch seconds, UTC):
//!
//! ```text
//! stays:    device_id,area_id,enter_ts,exit_ts
//! flights:  device_id,flight_id,scheduled_departure,destination_range,carrier_type,device_brand
//! areas:    area_id,activity_code,is_boarding_gate,is_pre_security
//! discards: device_id,rule
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::activity::{
    normalize_features, ActivitySequence, ActivityType, RawPassengerInfo, TimeAxis, N_ACTIVITIES,
};
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, LineError, Result};
use crate::io::{read_data_lines, write_file};

pub const STAYS_HEADER: &str = "device_id,area_id,enter_ts,exit_ts";
pub const FLIGHTS_HEADER: &str =
    "device_id,flight_id,scheduled_departure,destination_range,carrier_type,device_brand";
pub const AREAS_HEADER: &str = "area_id,activity_code,is_boarding_gate,is_pre_security";
pub const DISCARDS_HEADER: &str = "device_id,rule";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StayRecord {
    pub device_id: String,
    pub area_id: String,
    pub enter_ts: i64,
    pub exit_ts: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlightRecord {
    pub device_id: String,
    pub flight_id: String,
    pub scheduled_departure: i64,
    pub destination_range: bool,
    pub carrier_type: bool,
    pub device_brand: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AreaInfo {
    pub activity: ActivityType,
    pub is_boarding_gate: bool,
    pub is_pre_security: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AreaMap {
    pub areas: BTreeMap<String, AreaInfo>,
    /// Unknown areas read as `Other` instead of failing.
    pub allow_unmapped: bool,
}

impl AreaMap {
    pub fn get(&self, area_id: &str) -> Result<AreaInfo> {
        match self.areas.get(area_id) {
            Some(info) => Ok(*info),
            None if self.allow_unmapped => Ok(AreaInfo {
                activity: ActivityType::Other,
                is_boarding_gate: false,
                is_pre_security: false,
            }),
            None => Err(Error::Validation(format!("area `{area_id}` is not mapped"))),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{AREAS_HEADER}\n");
        for (id, a) in &self.areas {
            out.push_str(&format!(
                "{id},{},{},{}\n",
                a.activity.code(),
                u8::from(a.is_boarding_gate),
                u8::from(a.is_pre_security)
            ));
        }
        out
    }
}

/// Why a device was dropped. Checked in the order i, iii, ii.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiscardRule {
    /// No flight, or never seen at a boarding gate.
    NotTrackedToGate,
    /// A hole between stays longer than the gap threshold.
    NotContinuous,
    /// First seen past security.
    StartedAfterSecurity,
}

impl fmt::Display for DiscardRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardRule::NotTrackedToGate => "i",
            DiscardRule::NotContinuous => "ii",
            DiscardRule::StartedAfterSecurity => "iii",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiscardLog {
    /// One entry per discarded device, sorted by id.
    pub entries: Vec<(String, DiscardRule)>,
}

impl DiscardLog {
    pub fn count(&self, rule: DiscardRule) -> usize {
        self.entries.iter().filter(|(_, r)| *r == rule).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{DISCARDS_HEADER}\n");
        for (id, rule) in &self.entries {
            out.push_str(&format!("{id},{rule}\n"));
        }
        out
    }
}

fn csv_rows<T>(
    path: &Path,
    header: &str,
    parse: impl Fn(&[&str]) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let lines = read_data_lines(path)?;
    let mut errors = Vec::new();
    let mut rows = Vec::new();
    let mut iter = lines.into_iter();
    match iter.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((n, h)) => errors.push(LineError {
            line: n,
            message: format!("expected header `{header}`, found `{h}`"),
        }),
        None => errors.push(LineError {
            line: 1,
            message: format!("missing header `{header}`"),
        }),
    }
    let width = header.split(',').count();
    for (n, line) in iter {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = if fields.len() == width {
            parse(&fields)
        } else {
            Err(format!("expected {width} fields, found {}", fields.len()))
        };
        match parsed {
            Ok(row) => rows.push(row),
            Err(message) => errors.push(LineError { line: n, message }),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            lines: errors,
        })
    }
}

fn int(raw: &str, what: &str) -> std::result::Result<i64, String> {
    raw.parse().map_err(|_| format!("{what} `{raw}` is not an integer"))
}

fn flag(raw: &str, what: &str) -> std::result::Result<bool, String> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("{what} `{raw}` is not 0 or 1")),
    }
}

fn non_empty<'a>(raw: &'a str, what: &str) -> std::result::Result<&'a str, String> {
    if raw.is_empty() {
        Err(format!("empty {what}"))
    } else {
        Ok(raw)
    }
}

pub fn load_stays(path: &Path) -> Result<Vec<StayRecord>> {
    csv_rows(path, STAYS_HEADER, |f| {
        let stay = StayRecord {
            device_id: non_empty(f[0], "device_id")?.to_string(),
            area_id: non_empty(f[1], "area_id")?.to_string(),
            enter_ts: int(f[2], "enter_ts")?,
            exit_ts: int(f[3], "exit_ts")?,
        };
        if stay.enter_ts >= stay.exit_ts {
            return Err(format!(
                "enter_ts {} is not before exit_ts {}",
                stay.enter_ts, stay.exit_ts
            ));
        }
        Ok(stay)
    })
}

pub fn load_flights(path: &Path) -> Result<Vec<FlightRecord>> {
    let flights = csv_rows(path, FLIGHTS_HEADER, |f| {
        Ok(FlightRecord {
            device_id: non_empty(f[0], "device_id")?.to_string(),
            flight_id: non_empty(f[1], "flight_id")?.to_string(),
            scheduled_departure: int(f[2], "scheduled_departure")?,
            destination_range: flag(f[3], "destination_range")?,
            carrier_type: flag(f[4], "carrier_type")?,
            device_brand: flag(f[5], "device_brand")?,
        })
    })?;
    let mut seen = BTreeSet::new();
    for fl in &flights {
        if !seen.insert(fl.device_id.as_str()) {
            return Err(Error::Validation(format!(
                "{}: device `{}` has more than one flight",
                path.display(),
                fl.device_id
            )));
        }
    }
    Ok(flights)
}

pub fn load_area_map(path: &Path, allow_unmapped: bool) -> Result<AreaMap> {
    let rows = csv_rows(path, AREAS_HEADER, |f| {
        let code = f[1]
            .parse::<u8>()
            .map_err(|_| format!("activity code `{}` is not an integer", f[1]))?;
        let activity = ActivityType::from_code(code).map_err(|e| e.to_string())?;
        if activity == ActivityType::NotAtAirport {
            return Err("an area cannot map to NotAtAirport".into());
        }
        Ok((
            non_empty(f[0], "area_id")?.to_string(),
            AreaInfo {
                activity,
                is_boarding_gate: flag(f[2], "is_boarding_gate")?,
                is_pre_security: flag(f[3], "is_pre_security")?,
            },
        ))
    })?;
    let mut areas = BTreeMap::new();
    for (id, info) in rows {
        if areas.insert(id.clone(), info).is_some() {
            return Err(Error::Validation(format!(
                "{}: area `{id}` listed twice",
                path.display()
            )));
        }
    }
    Ok(AreaMap {
        areas,
        allow_unmapped,
    })
}

/// Stays per device, each list sorted by `(enter_ts, exit_ts, area_id)`.
pub fn group_by_device(stays: Vec<StayRecord>) -> BTreeMap<String, Vec<StayRecord>> {
    let mut groups: BTreeMap<String, Vec<StayRecord>> = BTreeMap::new();
    for s in stays {
        groups.entry(s.device_id.clone()).or_default().push(s);
    }
    for list in groups.values_mut() {
        list.sort_by(|a, b| {
            (a.enter_ts, a.exit_ts, &a.area_id).cmp(&(b.enter_ts, b.exit_ts, &b.area_id))
        });
    }
    groups
}

/// First failing rule for one device, `None` if it is kept. `stays` must be
/// sorted by entry time.
pub fn check_device(
    stays: &[StayRecord],
    flight: Option<&FlightRecord>,
    areas: &AreaMap,
    gap_threshold_units: u32,
) -> Result<Option<DiscardRule>> {
    let mut info = Vec::with_capacity(stays.len());
    for s in stays {
        info.push(areas.get(&s.area_id)?);
    }
    if flight.is_none() || !info.iter().any(|a| a.is_boarding_gate) {
        return Ok(Some(DiscardRule::NotTrackedToGate));
    }
    if !info[0].is_pre_security {
        return Ok(Some(DiscardRule::StartedAfterSecurity));
    }
    let max_gap = i64::from(gap_threshold_units) * 60 * i64::from(TimeAxis::STANDARD.unit_minutes);
    let mut covered_to = stays[0].exit_ts;
    for s in &stays[1..] {
        if s.enter_ts - covered_to > max_gap {
            return Ok(Some(DiscardRule::NotContinuous));
        }
        covered_to = covered_to.max(s.exit_ts);
    }
    Ok(None)
}

/// Splits devices into kept ids and a discard log. Devices are the union of
/// those with stays and those with flights.
pub fn filter_traces(
    stays: &BTreeMap<String, Vec<StayRecord>>,
    flights: &BTreeMap<String, FlightRecord>,
    areas: &AreaMap,
    gap_threshold_units: u32,
) -> Result<(Vec<String>, DiscardLog)> {
    let devices: BTreeSet<&String> = stays.keys().chain(flights.keys()).collect();
    let verdicts = devices
        .into_par_iter()
        .map(|id| {
            let list = stays.get(id).map_or(&[][..], Vec::as_slice);
            Ok((id.clone(), check_device(list, flights.get(id), areas, gap_threshold_units)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut kept = Vec::new();
    let mut log = DiscardLog::default();
    for (id, verdict) in verdicts {
        match verdict {
            None => kept.push(id),
            Some(rule) => log.entries.push((id, rule)),
        }
    }
    Ok((kept, log))
}

/// Seconds each activity occupies within `[start, end)`.
fn occupancy(stays: &[(i64, i64, ActivityType)], start: i64, end: i64) -> [i64; N_ACTIVITIES] {
    let mut secs = [0; N_ACTIVITIES];
    for &(a, b, act) in stays {
        let overlap = b.min(end) - a.max(start);
        if overlap > 0 {
            secs[act.index()] += overlap;
        }
    }
    secs
}

/// Labels from per-unit occupancies: the longest-occupied activity, lower
/// code on ties. Units before the first occupied one are NotAtAirport, units
/// after the last are Waiting, and empty units in between repeat the unit
/// before.
pub fn label_units<const N: usize>(occupied: &[[i64; N_ACTIVITIES]; N]) -> [ActivityType; N] {
    let best = |row: &[i64; N_ACTIVITIES]| {
        let c = (0..N_ACTIVITIES).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        (row[c] > 0).then_some(ActivityType::ALL[c])
    };
    let labels: Vec<Option<ActivityType>> = occupied.iter().map(best).collect();
    let first = labels.iter().position(Option::is_some);
    let last = labels.iter().rposition(Option::is_some);
    let mut out = [ActivityType::NotAtAirport; N];
    let (Some(first), Some(last)) = (first, last) else {
        return out;
    };
    for k in first..N {
        out[k] = match labels[k] {
            Some(a) => a,
            None if k > last => ActivityType::Waiting,
            None => out[k - 1],
        };
    }
    out
}

/// Stays clipped to `(-inf, departure]`, with their activities. The second
/// value counts stays that had to be cut or dropped.
fn clipped(stays: &[StayRecord], departure: i64, areas: &AreaMap) -> Result<(Vec<(i64, i64, ActivityType)>, usize)> {
    let mut out = Vec::with_capacity(stays.len());
    let mut truncated = 0;
    for s in stays {
        let activity = areas.get(&s.area_id)?.activity;
        if s.exit_ts > departure {
            truncated += 1;
        }
        let end = s.exit_ts.min(departure);
        if s.enter_ts < end {
            out.push((s.enter_ts, end, activity));
        }
    }
    Ok((out, truncated))
}

pub fn reconstruct_sequence(
    stays: &[StayRecord],
    flight: &FlightRecord,
    areas: &AreaMap,
    axis: &TimeAxis,
) -> Result<ActivitySequence> {
    if axis.n_units != TimeAxis::STANDARD.n_units {
        return Err(Error::Domain(format!("unsupported axis of {} units", axis.n_units)));
    }
    let departure = flight.scheduled_departure;
    let (clipped, truncated) = clipped(stays, departure, areas)?;
    if truncated > 0 {
        log::warn!(
            "device {}: {truncated} stay(s) truncated at departure",
            flight.device_id
        );
    }
    let occupied: [[i64; N_ACTIVITIES]; crate::activity::N_UNITS] = std::array::from_fn(|k| {
        let (start, end) = axis.unit_window(departure, k);
        occupancy(&clipped, start, end)
    });
    ActivitySequence::new(flight.device_id.clone(), Some(departure), label_units(&occupied))
}

/// Features from the flight record and the first stay.
pub fn passenger_features(
    stays: &[StayRecord],
    flight: &FlightRecord,
) -> Result<crate::activity::PassengerFeatures> {
    let arrival = stays
        .iter()
        .map(|s| s.enter_ts)
        .min()
        .ok_or_else(|| Error::Validation(format!("device {} has no stays", flight.device_id)))?;
    normalize_features(&RawPassengerInfo {
        arrival_ts: arrival.min(flight.scheduled_departure),
        departure_ts: flight.scheduled_departure,
        short_range: flight.destination_range,
        traditional_carrier: flight.carrier_type,
        brand_a: flight.device_brand,
    })
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub discards: DiscardLog,
}

/// Filters and reconstructs every device; samples come out sorted by id.
pub fn ingest(
    stays: Vec<StayRecord>,
    flights: Vec<FlightRecord>,
    areas: &AreaMap,
    gap_threshold_units: u32,
    provenance: impl Into<String>,
) -> Result<IngestOutcome> {
    let grouped = group_by_device(stays);
    let flights: BTreeMap<String, FlightRecord> = flights
        .into_iter()
        .map(|f| (f.device_id.clone(), f))
        .collect();
    let (kept, discards) = filter_traces(&grouped, &flights, areas, gap_threshold_units)?;
    let samples = kept
        .par_iter()
        .map(|id| {
            let (list, flight) = (&grouped[id], &flights[id]);
            Ok(Sample {
                features: passenger_features(list, flight)?,
                sequence: reconstruct_sequence(list, flight, areas, &TimeAxis::STANDARD)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IngestOutcome {
        dataset: Dataset::new(samples, provenance)?,
        discards,
    })
}

pub fn ingest_files(
    stays: &Path,
    flights: &Path,
    areas: &Path,
    gap_threshold_units: u32,
    allow_unmapped: bool,
) -> Result<IngestOutcome> {
    let map = load_area_map(areas, allow_unmapped)?;
    ingest(
        load_stays(stays)?,
        load_flights(flights)?,
        &map,
        gap_threshold_units,
        format!("files:{},{},{}", stays.display(), flights.display(), areas.display()),
    )
}

pub fn stays_csv(stays: &[StayRecord]) -> String {
    let mut out = format!("{STAYS_HEADER}\n");
    for s in stays {
        out.push_str(&format!("{},{},{},{}\n", s.device_id, s.area_id, s.enter_ts, s.exit_ts));
    }
    out
}

pub fn flights_csv(flights: &[FlightRecord]) -> String {
    let mut out = format!("{FLIGHTS_HEADER}\n");
    for f in flights {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f.device_id,
            f.flight_id,
            f.scheduled_departure,
            u8::from(f.destination_range),
            u8::from(f.carrier_type),
            u8::from(f.device_brand)
        ));
    }
    out
}

pub fn write_discards(path: &Path, log: &DiscardLog) -> Result<()> {
    write_file(path, &log.to_csv())
}
