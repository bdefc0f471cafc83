#![allow(dead_code)]

use std::path::Path;

use romkit::fom::{FomConfig, Geometry};
use romkit::fv::TeeSpec;
use romkit::pipeline::{FieldTruncation, OnlineConfig, PodConfig, RunConfig};

/// A coarse tee with two training points and a handful of snapshots; the
/// whole offline chain runs in well under a second.
pub fn tiny(root: &Path) -> RunConfig {
    RunConfig {
        output: root.to_path_buf(),
        fom: FomConfig {
            geometry: Geometry::Tee {
                spec: TeeSpec { main_nx: 12, main_ny: 4, branch_x0: 4, branch_nx: 3, branch_ny: 3 },
                h: 1.0 / 4.0,
            },
            alpha: 0.12,
            dt: 0.01,
            t_final: 0.2,
            snapshot_every: 4,
            ..FomConfig::default()
        },
        training_mu: vec![vec![0.5, 0.6], vec![0.6, 0.7]],
        pod: PodConfig {
            velocity: FieldTruncation::rank(3),
            pressure: FieldTruncation::rank(2),
            temperature: FieldTruncation::rank(3),
            nut: FieldTruncation::rank(2),
            ..PodConfig::default()
        },
        online: OnlineConfig {
            test_mu: vec![vec![0.55, 0.65]],
            labels: vec!["mid".into()],
            field_every: 10,
            ..OnlineConfig::default()
        },
        ..RunConfig::default()
    }
}
