//! Seeded synthetic datasets for the congestion and fire scenarios.
//!
//! Both generators drive every feature from a single latent intensity, so
//! the learned model has a recoverable ground truth and so determinism is
//! exact: one ChaCha stream per dataset, a fixed number of draws per row.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{ColumnSchema, Dataset, TargetKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Congestion-level boundary between levels 1 and 2, in meters.
pub const JAM_LEVEL_ONE_MAX_M: f64 = 82.5;
/// Congestion-level boundary between levels 2 and 3, in meters.
pub const JAM_LEVEL_TWO_MAX_M: f64 = 165.0;
/// Largest representable jam length, in meters.
pub const JAM_MAX_M: f64 = 250.0;

/// Which target column the traffic generator emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficTask {
    Binary,
    Multilevel,
    Regression,
}

fn traffic_schema(task: TrafficTask) -> ColumnSchema {
    let features = vec![
        "avg_speed_mps".to_string(),
        "flow_counts".to_string(),
        "avg_occupancy_pct".to_string(),
        "halting_duration_s".to_string(),
    ];
    let (target, kind) = match task {
        TrafficTask::Binary => ("congestion", TargetKind::Binary),
        TrafficTask::Multilevel => ("congestion_level", TargetKind::Multiclass { n_classes: 4 }),
        TrafficTask::Regression => ("jam_length_m", TargetKind::Regression),
    };
    ColumnSchema::new(features, target, kind).expect("static schema is valid")
}

/// Congestion level from a realized jam length.
fn jam_level(jam_m: f64) -> f64 {
    if jam_m <= 0.0 {
        0.0
    } else if jam_m <= JAM_LEVEL_ONE_MAX_M {
        1.0
    } else if jam_m <= JAM_LEVEL_TWO_MAX_M {
        2.0
    } else {
        3.0
    }
}

/// Synthetic lane-detector readings with a congestion target.
///
/// A latent congestion intensity `c ~ U[0,1]` drives four sensor features
/// (speed falls, flow rises then saturates, occupancy and halting grow)
/// plus the jam length. Jams start once `c` passes 0.3 and stretch up to
/// 250 m; measurement noise applies only to a jam that exists, so a free
/// road reports exactly 0 m. Targets: `binary` = jam present,
/// `multilevel` = level 0-3 by the 82.5 m / 165 m boundaries,
/// `regression` = jam length in meters.
pub fn generate_synthetic_traffic(n: usize, seed: u64, task: TrafficTask) -> Result<Dataset> {
    if n < 100 {
        return Err(Error::InvalidParam(format!(
            "synthetic dataset needs n >= 100, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let c: f64 = rng.random();
        // Fixed draw order per row keeps the stream layout stable.
        let z: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));

        let speed = (14.0 * (1.0 - c) + 0.7 * z[0]).max(0.0);
        let flow = (20.0 * (1.0 - (-c / 0.25).exp()) + 0.5 * z[1]).max(0.0);
        let occupancy = (90.0 * c + 4.0 * z[2]).clamp(0.0, 100.0);
        let halting = (60.0 * c * c + 3.0 * z[3]).max(0.0);

        let jam_base = JAM_MAX_M * (c - 0.3).max(0.0) / 0.7;
        let jam = if jam_base > 0.0 {
            (jam_base + 3.0 * z[4]).clamp(0.0, JAM_MAX_M)
        } else {
            0.0
        };

        rows.push(vec![speed, flow, occupancy, halting]);
        targets.push(match task {
            TrafficTask::Binary => f64::from(jam > 0.0),
            TrafficTask::Multilevel => jam_level(jam),
            TrafficTask::Regression => jam,
        });
    }
    Dataset::new(traffic_schema(task), Matrix::from_rows(&rows)?, targets)
}

/// Temperature above which the alarm condition can hold, in Celsius.
const FIRE_TEMP_THRESHOLD_C: f64 = 42.0;
/// Smoke reading above which the alarm condition can hold.
const FIRE_SMOKE_THRESHOLD: f64 = 370.0;

/// The event rule behind the fire generator's labels: fire is flagged
/// when temperature and smoke both exceed their alarm thresholds. The
/// flame channel plays no part.
pub fn fire_event_rule(temperature_c: f64, smoke: f64) -> bool {
    temperature_c > FIRE_TEMP_THRESHOLD_C && smoke > FIRE_SMOKE_THRESHOLD
}

/// Synthetic fire-detection readings (temperature, smoke, flame) with a
/// binary fire target.
///
/// A latent fire intensity drives temperature and smoke; the flame
/// channel is sensor noise unrelated to the label, so sensitivity
/// screening should discard it. Labels follow [`fire_event_rule`] applied
/// to the realized readings.
pub fn generate_synthetic_fire(n: usize, seed: u64) -> Result<Dataset> {
    if n < 100 {
        return Err(Error::InvalidParam(format!(
            "synthetic dataset needs n >= 100, got {n}"
        )));
    }
    let schema = ColumnSchema::new(
        vec![
            "temperature_c".to_string(),
            "smoke_level".to_string(),
            "flame_level".to_string(),
        ],
        "fire",
        TargetKind::Binary,
    )
    .expect("static schema is valid");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));

        let temperature = 22.0 + 40.0 * u + 2.0 * z[0];
        let smoke = (120.0 + 500.0 * u + 30.0 * z[1]).max(0.0);
        let flame = 500.0 + 80.0 * z[2];

        rows.push(vec![temperature, smoke, flame]);
        targets.push(f64::from(fire_event_rule(temperature, smoke)));
    }
    Dataset::new(schema, Matrix::from_rows(&rows)?, targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traffic_jam_level_boundaries() {
        // 100 m sits strictly between the two boundaries.
        assert_eq!(jam_level(100.0), 2.0);
        assert_eq!(jam_level(82.5), 1.0);
        assert_eq!(jam_level(165.0), 2.0);
        assert_eq!(jam_level(165.1), 3.0);
        assert_eq!(jam_level(0.0), 0.0);
    }

    #[test]
    fn traffic_binary_zero_jam_is_label_zero() {
        let d = generate_synthetic_traffic(1000, 4, TrafficTask::Regression).unwrap();
        let b = generate_synthetic_traffic(1000, 4, TrafficTask::Binary).unwrap();
        for i in 0..d.n_rows() {
            assert_eq!(b.y[i], f64::from(d.y[i] > 0.0));
        }
    }

    #[test]
    fn traffic_targets_stay_in_declared_sets() {
        let d = generate_synthetic_traffic(2000, 8, TrafficTask::Regression).unwrap();
        assert!(d.y.iter().all(|&v| (0.0..=JAM_MAX_M).contains(&v)));
        let m = generate_synthetic_traffic(2000, 8, TrafficTask::Multilevel).unwrap();
        assert!(m
            .y
            .iter()
            .all(|&v| v == 0.0 || v == 1.0 || v == 2.0 || v == 3.0));
    }

    #[test]
    fn traffic_generation_is_byte_deterministic() {
        let a = generate_synthetic_traffic(5000, 7, TrafficTask::Multilevel).unwrap();
        let b = generate_synthetic_traffic(5000, 7, TrafficTask::Multilevel).unwrap();
        assert_eq!(a.to_csv_bytes(), b.to_csv_bytes());
    }

    #[test]
    fn traffic_too_small_rejected() {
        assert!(generate_synthetic_traffic(99, 0, TrafficTask::Binary).is_err());
    }

    #[test]
    fn fire_rule_no_fire_means_label_zero() {
        let d = generate_synthetic_fire(5000, 3).unwrap();
        // Mean temperature and smoke among no-fire rows.
        let (mut t_sum, mut s_sum, mut n0) = (0.0, 0.0, 0u32);
        for i in 0..d.n_rows() {
            if d.y[i] == 0.0 {
                t_sum += d.x.get(i, 0);
                s_sum += d.x.get(i, 1);
                n0 += 1;
            }
        }
        assert!(n0 > 0);
        assert!(!fire_event_rule(t_sum / n0 as f64, s_sum / n0 as f64));
    }

    #[test]
    fn fire_generation_is_deterministic() {
        let a = generate_synthetic_fire(500, 21).unwrap();
        let b = generate_synthetic_fire(500, 21).unwrap();
        assert_eq!(a.to_csv_bytes(), b.to_csv_bytes());
    }

    #[test]
    fn fire_has_both_classes() {
        let d = generate_synthetic_fire(1000, 0).unwrap();
        assert!(d.y.iter().any(|&v| v == 0.0));
        assert!(d.y.iter().any(|&v| v == 1.0));
    }
}
