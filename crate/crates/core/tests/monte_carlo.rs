use metric_vo::mc::{mc_depth_distribution, mc_projection_covariance};
use metric_vo::{DisparityEstimate, PixelObservation, StereoCamera};

fn cam() -> StereoCamera {
    StereoCamera::new(320.0, 320.0, 320.0, 240.0, 0.25, 640, 480).unwrap()
}

#[test]
fn tiny_gamma_matches_closed_form() {
    let r = mc_depth_distribution(&cam(), &DisparityEstimate { mu: 80.0, gamma: 1e-4 }, 100_000, 1).unwrap();
    assert_eq!(r.rejected, 0);
    // the model is exact to first order, so only sampling noise remains
    let mean = r.entry("mean").unwrap();
    assert!((mean.empirical / mean.closed_form - 1.0).abs() < 1e-6);
    assert!(r.entry("variance").unwrap().z.abs() < 4.0);
    assert!(r.sigma_rel_err.unwrap() < 1e-2);
}

#[test]
fn depth_error_grows_from_small_to_large_gamma() {
    let at = |gamma| {
        mc_depth_distribution(&cam(), &DisparityEstimate { mu: 80.0, gamma }, 200_000, 2)
            .unwrap()
            .sigma_rel_err
            .unwrap()
    };
    assert!(at(0.05) < 0.02);
    assert!(at(0.25) > at(0.05));
}

#[test]
fn optical_center_has_no_correlations() {
    let obs = PixelObservation::new(320.0, 240.0, 2.0, 2.0, 5.0, 0.04).unwrap();
    let r = mc_projection_covariance(&cam(), &obs, 400_000, 3).unwrap();
    for name in ["xy", "xz", "yz"] {
        let e = r.entry(name).unwrap();
        assert_eq!(e.closed_form, 0.0);
        assert!(e.z.abs() < 3.0, "{name}: z = {}", e.z);
    }
}

#[test]
fn full_model_covers_and_diagonal_does_not() {
    let obs = PixelObservation::new(620.0, 20.0, 1.0, 1.0, 8.0, 1.0).unwrap();
    let r = mc_projection_covariance(&cam(), &obs, 400_000, 4).unwrap();
    let c = r.coverage.unwrap();
    assert!((c.full - 0.9).abs() < 0.01, "full coverage {}", c.full);
    assert!(
        (c.diagonal - 0.9).abs() > (c.full - 0.9).abs(),
        "diagonal {} vs full {}",
        c.diagonal,
        c.full
    );
}

#[test]
fn reports_are_reproducible() {
    let obs = PixelObservation::new(100.0, 400.0, 1.0, 3.0, 2.0, 0.01).unwrap();
    let a = mc_projection_covariance(&cam(), &obs, 150_000, 5).unwrap();
    let b = mc_projection_covariance(&cam(), &obs, 150_000, 5).unwrap();
    assert_eq!(a, b);
}
