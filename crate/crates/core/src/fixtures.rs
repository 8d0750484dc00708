//! The three-source bottleneck used throughout the tests and the shipped
//! scenarios: 20 long-lived connections per source, a 400-packet buffer
//! regulated to 100 packets, and three 750 pkt/s constant-rate bursts.

use nalgebra::DVector;

use crate::linearizer::{augment, AugmentedModel, LinearModel, SourceCoefficients};
use crate::topology::{AnomalyInterval, AnomalySchedule, Closure, NetworkConfig, SourceSpec};

pub const SESSIONS: u32 = 20;
pub const QUEUE_TARGET: f64 = 100.0;
pub const BUFFER_MAX: f64 = 400.0;
/// 10 Mbit/s in 500-byte packets, with Mbit = 2^20 bit.
pub const CAPACITY: f64 = 2621.0;
pub const FWD_DELAYS: [f64; 3] = [0.025, 0.05, 0.075];
/// Return-path propagation chosen so the round trips come out at
/// 0.2488, 0.45216 and 0.65991 s.
pub const BWD_DELAYS: [f64; 3] = [0.18565, 0.36401, 0.54676];
pub const BURSTS: [(f64, f64); 3] = [(150.0, 170.0), (250.0, 270.0), (300.0, 320.0)];
/// Three 1 Mbit/s UDP flows of 500-byte packets.
pub const BURST_RATE: f64 = 750.0;

/// Published coefficient tables, rounded as printed.
pub const PRINTED_A: [f64; 3] = [-0.73, -0.22, -0.10];
pub const PRINTED_H: [f64; 3] = [-0.049, -0.008, -0.002];
/// `f_i · η_j`
pub const PRINTED_F_ETA: [f64; 3] = [-1.34, -0.74, -0.51];
pub const PRINTED_E: [f64; 3] = [-970.0, -959.0, -956.0];
pub const PRINTED_GAIN: [f64; 5] = [0.28, 0.46, 0.45, 1.76, 0.54];

pub fn bursts() -> AnomalySchedule {
    AnomalySchedule::new(
        BURSTS
            .iter()
            .map(|&(start, end)| AnomalyInterval {
                start,
                end,
                rate: BURST_RATE,
            })
            .collect(),
    )
}

/// The bottleneck with equal per-connection rates, which is the closure the
/// published coefficient tables are consistent with.
pub fn bottleneck(anomaly: AnomalySchedule) -> NetworkConfig {
    NetworkConfig {
        capacity: CAPACITY,
        buffer_max: BUFFER_MAX,
        queue_target: QUEUE_TARGET,
        sources: FWD_DELAYS
            .iter()
            .zip(BWD_DELAYS)
            .map(|(&f, b)| SourceSpec::new(SESSIONS, f, b))
            .collect(),
        anomaly,
        closure: Closure::EqualRate,
    }
}

/// Augmented model built directly from the printed tables.
pub fn printed_model() -> AugmentedModel {
    let eta = f64::from(SESSIONS);
    let coefficients = (0..3)
        .map(|i| SourceCoefficients {
            a: PRINTED_A[i],
            h: PRINTED_H[i],
            f: PRINTED_F_ETA[i] / eta,
            e: PRINTED_E[i],
        })
        .collect();
    let lin = LinearModel::from_coefficients(
        coefficients,
        vec![eta; 3],
        FWD_DELAYS.to_vec(),
        BWD_DELAYS.to_vec(),
    );
    augment(&lin).expect("printed model is observable")
}

pub fn printed_gain() -> DVector<f64> {
    DVector::from_row_slice(&PRINTED_GAIN)
}
