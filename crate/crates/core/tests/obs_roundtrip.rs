mod common;

use common::*;
use metric_vo::obs_io::{frame_file_name, ingest_observations, write_observations, POSES_FILE};
use metric_vo::sim::generate_sequence;
use metric_vo::{Error, FrameObservation};

fn small_frames(n: usize) -> Vec<FrameObservation> {
    let mut cfg = scene();
    cfg.num_frames = n;
    cfg.camera.width = 64;
    cfg.camera.height = 48;
    cfg.camera.cx = 32.0;
    cfg.camera.cy = 24.0;
    cfg.anomaly_regions.clear();
    generate_sequence(&cfg).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(1.0)
}

#[test]
fn roundtrip_within_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let frames = small_frames(3);
    write_observations(dir.path(), &frames).unwrap();
    let back = ingest_observations(dir.path()).unwrap();
    assert_eq!(back.len(), frames.len());
    for (a, b) in frames.iter().zip(&back) {
        assert_eq!(a.mask, b.mask);
        for (x, y) in [
            (&a.flow, &b.flow),
            (&a.flow_var, &b.flow_var),
            (&a.depth, &b.depth),
            (&a.depth_var, &b.depth_var),
        ] {
            assert_eq!((x.width, x.height, x.channels), (y.width, y.height, y.channels));
            assert!(x
                .data
                .iter()
                .zip(&y.data)
                .all(|(p, q)| close(*p, *q) || (p.is_infinite() && q.is_infinite())));
        }
        let (angle, dist) = a.gt_pose.distance(&b.gt_pose);
        assert!(angle < 1e-9 && dist < 1e-9);
    }
}

#[test]
fn truncated_frame_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    write_observations(dir.path(), &small_frames(2)).unwrap();
    let path = dir.path().join(frame_file_name(1));
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = ingest_observations(dir.path()).unwrap_err();
    assert!(err.to_string().contains(&frame_file_name(1)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn bad_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_observations(dir.path(), &small_frames(2)).unwrap();
    let path = dir.path().join(frame_file_name(0));
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(ingest_observations(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn frame_and_pose_counts_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    write_observations(dir.path(), &small_frames(3)).unwrap();
    std::fs::remove_file(dir.path().join(frame_file_name(2))).unwrap();
    let err = ingest_observations(dir.path()).unwrap_err();
    assert!(err.to_string().contains("frame/pose count mismatch"), "{err}");
}

#[test]
fn missing_pose_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    write_observations(dir.path(), &small_frames(2)).unwrap();
    std::fs::remove_file(dir.path().join(POSES_FILE)).unwrap();
    let err = ingest_observations(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut frames = small_frames(2);
    let mut cfg = scene();
    cfg.num_frames = 2;
    cfg.anomaly_regions.clear();
    let mut other = generate_sequence(&cfg).unwrap().remove(1);
    other.gt_pose = frames[1].gt_pose;
    other.timestamp = frames[1].timestamp;
    frames[1] = other;
    write_observations(dir.path(), &frames).unwrap();
    let err = ingest_observations(dir.path()).unwrap_err();
    assert!(err.to_string().contains("dimension mismatch"), "{err}");
}
