use paxnn::activity::{ActivitySequence, ActivityType, CriticalPeriod, PassengerFeatures, N_UNITS};
use paxnn::dataset::{split_dataset, Dataset, Sample};
use paxnn::evaluation::{misclassification_curve, ConstantPerUnit};
use paxnn::models::{majority_baseline, random_input_benchmark, train_combined, train_lstm, TrainConfig};
use paxnn::synthgen::{generate_population, GeneratorParams};
use proptest::prelude::*;

/// Checks in until unit 17, then shops or eats depending on the device brand.
fn brand_coupled(n: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| {
            let brand = i % 2 == 0;
            let mut units = [ActivityType::Mandatory; N_UNITS];
            for u in &mut units[18..] {
                *u = if brand { ActivityType::Shopping } else { ActivityType::Eating };
            }
            Sample {
                features: PassengerFeatures::new(0.5, 0.5, false, false, brand).unwrap(),
                sequence: ActivitySequence::new(format!("b{i:03}"), None, units).unwrap(),
            }
        })
        .collect();
    Dataset::new(samples, "brand coupled").unwrap()
}

#[test]
fn combined_uses_features_the_history_cannot_reveal() {
    let train = brand_coupled(160);
    let test = brand_coupled(40);
    let config = TrainConfig {
        lstm_hidden: 8,
        fnn_hidden: 4,
        lstm_epochs: 60,
        batch_size: 16,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let critical = CriticalPeriod::default();
    let lstm = misclassification_curve(&train_lstm(&train, 1, &config).unwrap(), &test, critical).unwrap();
    let combined = misclassification_curve(&train_combined(&train, &config).unwrap(), &test, critical).unwrap();
    assert!((lstm.curve[18].unwrap() - 0.5).abs() < 1e-12, "{:?}", lstm.curve);
    assert_eq!(combined.curve[18], Some(0.0), "{:?}", combined.curve);
    assert!(combined.critical_mean < lstm.critical_mean);
}

#[test]
fn noise_inputs_do_no_better_than_the_majority() {
    let ds = generate_population(&GeneratorParams {
        n_passengers: 600,
        ..GeneratorParams::default()
    })
    .unwrap();
    let (train, test) = split_dataset(&ds, 0.7, 1).unwrap();
    let critical = CriticalPeriod::default();
    let config = TrainConfig {
        fnn_epochs: 40,
        ..TrainConfig::default()
    };
    let random = random_input_benchmark(&train, &test, &config, critical).unwrap();
    let majority = misclassification_curve(&majority_baseline(&train).unwrap(), &test, critical).unwrap();
    assert!(
        random.critical_mean >= majority.critical_mean - 0.03,
        "random {} majority {}",
        random.critical_mean,
        majority.critical_mean
    );
}

fn population() -> impl Strategy<Value = Dataset> {
    let row = (0..=N_UNITS, prop::collection::vec(1u8..6, N_UNITS));
    prop::collection::vec(row, 1..25).prop_map(|rows| {
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (arrival, codes))| {
                let units: [ActivityType; N_UNITS] = std::array::from_fn(|k| {
                    ActivityType::from_code(if k < arrival { 0 } else { codes[k] }).unwrap()
                });
                Sample {
                    features: PassengerFeatures::new(0.5, 0.5, false, false, false).unwrap(),
                    sequence: ActivitySequence::new(format!("q{i}"), None, units).unwrap(),
                }
            })
            .collect();
        Dataset::new(samples, "random").unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn majority_is_no_worse_than_any_constant(ds in population(), unit in 0..N_UNITS, code in 0u8..6) {
        let critical = CriticalPeriod::default();
        let majority = majority_baseline(&ds).unwrap();
        let mut other = ConstantPerUnit { name: "other".into(), units: majority.units };
        other.units[unit] = ActivityType::from_code(code).unwrap();
        let m = misclassification_curve(&majority, &ds, critical).unwrap();
        let o = misclassification_curve(&other, &ds, critical).unwrap();
        prop_assert!(m.curve[unit].unwrap() <= o.curve[unit].unwrap());
    }
}
