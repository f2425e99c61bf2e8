//! Labelled passenger populations and the sequences CSV format
//! `passenger_id,f1..f5,u0..u35`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;

use crate::activity::{ActivitySequence, ActivityType, PassengerFeatures, N_FEATURES, N_UNITS};
use crate::error::{Error, LineError, Result};
use crate::io::{read_data_lines, write_file};
use crate::seed::{rng_for, unordered_hash};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: PassengerFeatures,
    pub sequence: ActivitySequence,
}

impl Sample {
    pub fn id(&self) -> &str {
        &self.sequence.passenger_id
    }

    fn csv_row(&self) -> String {
        let mut row = self.id().to_string();
        for v in self.features.to_vec() {
            row.push(',');
            row.push_str(&v.to_string());
        }
        for a in self.sequence.units() {
            row.push(',');
            row.push_str(&a.code().to_string());
        }
        row
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Full,
    Train,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Full => "full",
            SplitTag::Train => "train",
            SplitTag::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    pub provenance: String,
    pub split: SplitTag,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id()) {
                return Err(Error::Validation(format!(
                    "duplicate passenger id `{}`",
                    s.id()
                )));
            }
        }
        Ok(Self {
            samples,
            provenance: provenance.into(),
            split: SplitTag::Full,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features(&self) -> Vec<PassengerFeatures> {
        self.samples.iter().map(|s| s.features).collect()
    }

    pub fn sequences(&self) -> impl Iterator<Item = &ActivitySequence> {
        self.samples.iter().map(|s| &s.sequence)
    }

    /// `[n, 5]` feature rows in sample order.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.len(), N_FEATURES));
        for (mut row, s) in x.rows_mut().into_iter().zip(&self.samples) {
            row.assign(&ArrayView1::from(&s.features.to_vec()));
        }
        x
    }

    pub fn unit_arrays(&self) -> Vec<[ActivityType; N_UNITS]> {
        self.samples.iter().map(|s| *s.sequence.units()).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id().to_string()).collect()
    }

    /// Order-independent hash of the samples' content.
    pub fn content_hash(&self) -> String {
        unordered_hash(self.samples.iter().map(Sample::csv_row))
    }

    /// Replaces every feature vector, keeping the sequences.
    pub fn with_features(&self, features: Vec<PassengerFeatures>) -> Result<Self> {
        if features.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} feature vectors for {} samples",
                features.len(),
                self.len()
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(features)
            .map(|(s, features)| Sample {
                features,
                sequence: s.sequence.clone(),
            })
            .collect();
        Ok(Self {
            samples,
            provenance: self.provenance.clone(),
            split: self.split,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = sequences_header();
        out.push('\n');
        for s in &self.samples {
            out.push_str(&s.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut text = self.to_csv();
        for c in comments {
            text.push_str("# ");
            text.push_str(c);
            text.push('\n');
        }
        write_file(path, &text)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let lines = read_data_lines(path)?;
        let mut errors = Vec::new();
        let mut samples = Vec::new();
        let mut iter = lines.into_iter();
        match iter.next() {
            Some((_, header)) if header == sequences_header() => {}
            Some((n, header)) => errors.push(LineError {
                line: n,
                message: format!("unexpected header `{header}`"),
            }),
            None => errors.push(LineError {
                line: 1,
                message: "missing header".into(),
            }),
        }
        for (n, line) in iter {
            match parse_sample(&line) {
                Ok(s) => samples.push(s),
                Err(message) => errors.push(LineError { line: n, message }),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                lines: errors,
            });
        }
        Dataset::new(samples, format!("file:{}", path.display()))
    }
}

pub fn sequences_header() -> String {
    let mut cols = vec!["passenger_id".to_string()];
    cols.extend((1..=N_FEATURES).map(|i| format!("f{i}")));
    cols.extend((0..N_UNITS).map(|k| format!("u{k}")));
    cols.join(",")
}

fn parse_sample(line: &str) -> Result<Sample, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 1 + N_FEATURES + N_UNITS {
        return Err(format!(
            "expected {} fields, found {}",
            1 + N_FEATURES + N_UNITS,
            fields.len()
        ));
    }
    let mut values = [0.0; N_FEATURES];
    for (slot, raw) in values.iter_mut().zip(&fields[1..=N_FEATURES]) {
        *slot = raw
            .parse()
            .map_err(|_| format!("feature `{raw}` is not a number"))?;
    }
    let features = PassengerFeatures::from_values(values).map_err(|e| e.to_string())?;
    let units = fields[1 + N_FEATURES..]
        .iter()
        .map(|raw| {
            raw.parse::<u8>()
                .map_err(|_| format!("activity code `{raw}` is not an integer"))
                .and_then(|c| ActivityType::from_code(c).map_err(|e| e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sequence =
        ActivitySequence::from_slice(fields[0], None, &units).map_err(|e| e.to_string())?;
    Ok(Sample { features, sequence })
}

/// Seeded random partition into train and test parts. The train part holds
/// `round(train_fraction * N)` samples, kept within `1..N`.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "cannot split a dataset of {n} sample(s)"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut order: Vec<&Sample> = ds.samples.iter().collect();
    order.sort_by(|a, b| a.id().cmp(b.id()));
    let mut rng = rng_for(seed, &format!("split:{}", ds.content_hash()));
    order.shuffle(&mut rng);

    let part = |items: &[&Sample], split| Dataset {
        samples: items.iter().map(|&s| s.clone()).collect(),
        provenance: ds.provenance.clone(),
        split,
    };
    Ok((
        part(&order[..n_train], SplitTag::Train),
        part(&order[n_train..], SplitTag::Test),
    ))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn ids(ds: &Dataset) -> Vec<String> {
        ds.samples().iter().map(|s| s.id().to_string()).collect()
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = small(10);
        let (train, test) = split_dataset(&ds, 0.7, 1).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
        assert_eq!(train.split, SplitTag::Train);
        let mut all = ids(&train);
        all.extend(ids(&test));
        all.sort();
        assert_eq!(all, ids(&ds));
    }

    #[test]
    fn split_is_deterministic_and_order_independent() {
        let ds = small(40);
        let (a, _) = split_dataset(&ds, 0.7, 9).unwrap();
        let (b, _) = split_dataset(&ds, 0.7, 9).unwrap();
        assert_eq!(ids(&a), ids(&b));

        let mut reversed = ds.samples().to_vec();
        reversed.reverse();
        let rev = Dataset::new(reversed, "rev").unwrap();
        assert_eq!(rev.content_hash(), ds.content_hash());
        let (c, _) = split_dataset(&rev, 0.7, 9).unwrap();
        assert_eq!(ids(&a), ids(&c));

        let (d, _) = split_dataset(&ds, 0.7, 10).unwrap();
        assert_ne!(ids(&a), ids(&d));
    }

    #[test]
    fn split_errors() {
        assert!(split_dataset(&small(1), 0.7, 1).is_err());
        assert!(split_dataset(&small(10), 1.0, 1).is_err());
        assert!(split_dataset(&small(10), 0.0, 1).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = sample("x", 0.5, 3);
        assert!(Dataset::new(vec![s.clone(), s], "dup").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.csv");
        let ds = small(12);
        ds.write_csv(&path, &["origin=test".into()]).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back.samples(), ds.samples());
    }

    #[test]
    fn csv_errors_cite_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let good = small(1).to_csv();
        let mut text = good.clone();
        text.push_str("broken,row\n");
        std::fs::write(&path, text).unwrap();
        match Dataset::read_csv(&path) {
            Err(Error::Parse { lines, .. }) => assert_eq!(lines[0].line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
