use std::path::{Path, PathBuf};

use crate::activity::{activity_table_csv, CriticalPeriod, TimeAxis, N_UNITS, UNIT_MINUTES};
use crate::error::{Error, LineError, Result};
use crate::io::write_file;

use super::critical_period_mean;

pub const CURVE_HEADER: &str = "unit,minutes_before_hi,minutes_before_lo,rate";
const RESERVED: [&str; 4] = ["model", "horizon_min", "critical_units", "test_size"];

/// A misclassification curve with its summary and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub model: String,
    /// Lead in units; 0 for predictors without activity history.
    pub horizon_units: usize,
    pub critical: CriticalPeriod,
    /// Rate per unit; `None` where no prediction is possible.
    pub curve: Vec<Option<f64>>,
    pub critical_mean: f64,
    pub test_size: usize,
    /// Extra `key=value` provenance in insertion order.
    pub metadata: Vec<(String, String)>,
}

impl EvaluationReport {
    pub fn new(
        model: impl Into<String>,
        horizon_units: usize,
        curve: Vec<Option<f64>>,
        critical: CriticalPeriod,
        test_size: usize,
    ) -> Result<Self> {
        if curve.len() != N_UNITS {
            return Err(Error::Shape(format!(
                "curve has {} units, expected {N_UNITS}",
                curve.len()
            )));
        }
        if let Some(bad) = curve.iter().flatten().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Validation(format!("rate {bad} outside [0, 1]")));
        }
        let critical_mean = critical_period_mean(&curve, critical)?;
        Ok(Self {
            model: model.into(),
            horizon_units,
            critical,
            curve,
            critical_mean,
            test_size,
            metadata: Vec::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Result<Self> {
        let (key, value) = (key.into(), value.into());
        if key.is_empty()
            || key.contains(['=', '\n'])
            || value.contains('\n')
            || RESERVED.contains(&key.as_str())
        {
            return Err(Error::Validation(format!("unusable metadata key `{key}`")));
        }
        self.metadata.push((key, value));
        Ok(self)
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn horizon_minutes(&self) -> usize {
        self.horizon_units * UNIT_MINUTES as usize
    }

    pub fn to_csv(&self) -> String {
        let axis = TimeAxis::STANDARD;
        let mut out = String::new();
        for line in activity_table_csv() {
            out.push_str(&format!("# {line}\n"));
        }
        out.push_str(CURVE_HEADER);
        out.push('\n');
        for (k, rate) in self.curve.iter().enumerate() {
            let rate = rate.map_or_else(|| "NA".to_string(), |r| r.to_string());
            out.push_str(&format!(
                "{k},{},{},{rate}\n",
                axis.minutes_before_hi(k),
                axis.minutes_before_lo(k)
            ));
        }
        out.push_str(&format!("critical_mean,{}\n", self.critical_mean));
        out.push_str(&format!("# model={}\n", self.model));
        out.push_str(&format!("# horizon_min={}\n", self.horizon_minutes()));
        out.push_str(&format!(
            "# critical_units={}-{}\n",
            self.critical.first, self.critical.last
        ));
        out.push_str(&format!("# test_size={}\n", self.test_size));
        out.push_str(&metadata_lines(&self.metadata));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_at(&text, path.to_path_buf())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_at(text, PathBuf::from("<report>"))
    }

    fn parse_at(text: &str, path: PathBuf) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Parse {
            path: path.clone(),
            lines: vec![LineError { line, message }],
        };
        let mut data = Vec::new();
        let mut meta = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                // Activity table lines carry no `=`.
                if let Some((k, v)) = comment.trim_start().split_once('=') {
                    meta.push((i + 1, k.to_string(), v.to_string()));
                }
            } else {
                data.push((i + 1, line));
            }
        }
        let mut rows = data.into_iter();
        match rows.next() {
            Some((_, CURVE_HEADER)) => {}
            Some((n, other)) => return Err(fail(n, format!("expected `{CURVE_HEADER}`, found `{other}`"))),
            None => return Err(fail(1, "missing curve header".into())),
        }
        let mut curve = Vec::with_capacity(N_UNITS);
        for k in 0..N_UNITS {
            let (n, line) = rows
                .next()
                .ok_or_else(|| fail(0, format!("curve ends before unit {k}")))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 || fields[0] != k.to_string() {
                return Err(fail(n, format!("expected the row for unit {k}")));
            }
            curve.push(match fields[3] {
                "NA" => None,
                r => Some(r.parse::<f64>().map_err(|_| fail(n, format!("bad rate `{r}`")))?),
            });
        }
        let (n, line) = rows
            .next()
            .ok_or_else(|| fail(0, "missing critical_mean row".into()))?;
        let stated: f64 = line
            .strip_prefix("critical_mean,")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| fail(n, format!("expected `critical_mean,<value>`, found `{line}`")))?;
        if let Some((n, line)) = rows.next() {
            return Err(fail(n, format!("unexpected row `{line}`")));
        }

        let mut model = None;
        let mut horizon_min = None;
        let mut critical = None;
        let mut test_size = None;
        let mut metadata = Vec::new();
        for (n, k, v) in meta {
            match k.as_str() {
                "model" => model = Some(v),
                "horizon_min" => {
                    horizon_min = Some(v.parse::<usize>().map_err(|_| fail(n, format!("bad horizon `{v}`")))?)
                }
                "critical_units" => {
                    let parsed = v
                        .split_once('-')
                        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                        .ok_or_else(|| fail(n, format!("bad critical units `{v}`")))?;
                    critical = Some(CriticalPeriod::new(parsed.0, parsed.1)?);
                }
                "test_size" => {
                    test_size = Some(v.parse::<usize>().map_err(|_| fail(n, format!("bad test size `{v}`")))?)
                }
                _ => metadata.push((k, v)),
            }
        }
        let missing = |what: &str| fail(0, format!("missing `# {what}=` line"));
        let horizon_min = horizon_min.ok_or_else(|| missing("horizon_min"))?;
        let mut report = Self::new(
            model.ok_or_else(|| missing("model"))?,
            horizon_min / UNIT_MINUTES as usize,
            curve,
            critical.ok_or_else(|| missing("critical_units"))?,
            test_size.ok_or_else(|| missing("test_size"))?,
        )?;
        if report.critical_mean.to_bits() != stated.to_bits() {
            return Err(fail(
                n,
                format!(
                    "critical_mean {stated} disagrees with the curve ({})",
                    report.critical_mean
                ),
            ));
        }
        report.metadata = metadata;
        Ok(report)
    }
}

/// `# key=value` comment lines.
pub(crate) fn metadata_lines(metadata: &[(String, String)]) -> String {
    metadata.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_report() -> EvaluationReport {
        let curve = (0..N_UNITS)
            .map(|k| (k >= 2).then(|| (k as f64 * 0.037).fract()))
            .collect();
        EvaluationReport::new("lstm h=2", 2, curve, CriticalPeriod::default(), 17)
            .unwrap()
            .with_metadata("seed", "42")
            .unwrap()
            .with_metadata("config.train.learning_rate", "0.01")
            .unwrap()
    }

    #[test]
    fn layout() {
        let text = sample_report().to_csv();
        assert!(text.starts_with("# code,name\n# 0,NotAtAirport\n"));
        assert!(text.contains("\nunit,minutes_before_hi,minutes_before_lo,rate\n0,180,175,NA\n1,175,170,NA\n2,170,165,"));
        assert!(text.contains("\n35,5,0,"));
        assert!(text.contains("\n# horizon_min=10\n"));
    }

    #[test]
    fn round_trip() {
        let r = sample_report();
        assert_eq!(EvaluationReport::parse(&r.to_csv()).unwrap(), r);
    }

    #[test]
    fn tampered_summary_is_rejected() {
        let text = sample_report().to_csv();
        let line = text.lines().find(|l| l.starts_with("critical_mean,")).unwrap();
        let tampered = text.replace(line, "critical_mean,0.5");
        assert!(EvaluationReport::parse(&tampered).is_err());
    }

    #[test]
    fn reserved_metadata_keys_are_refused() {
        assert!(sample_report().with_metadata("model", "x").is_err());
        assert!(sample_report().with_metadata("a=b", "x").is_err());
    }

    proptest! {
        #[test]
        fn any_report_round_trips(
            rates in prop::collection::vec(prop::option::weighted(0.9, 0.0f64..=1.0), N_UNITS),
            lead in 0usize..7,
            n in 1usize..5000,
        ) {
            let mut curve = rates;
            for r in curve.iter_mut().take(lead) {
                *r = None;
            }
            for k in 16..=30 {
                curve[k].get_or_insert(0.25);
            }
            let r = EvaluationReport::new("m", lead, curve, CriticalPeriod::default(), n).unwrap();
            prop_assert_eq!(EvaluationReport::parse(&r.to_csv()).unwrap(), r);
        }
    }
}
