//! Training-free behavioral checks of the spatial module: the strain
//! channel really is the x-derivative of the displacement channel, the
//! collocation cloud is nested and in-domain, and the reported loss
//! components track the data actually wired into the problem.

use pinnbeam::datagen::{synth_fiber_scans, FiberDataSpec};
use pinnbeam::optim::Objective;
use pinnbeam::oracle::{BeamGeometry, FourPointLoad, Material};
use pinnbeam::spatial::{interior_cloud, predict_field, Scenario, SpatialProblem};

fn lab() -> (BeamGeometry, Material, FourPointLoad) {
    (
        BeamGeometry::default_lab_beam(),
        Material::concrete(),
        FourPointLoad::default_lab_load(),
    )
}

/// The ε_xx channel of the field prediction must equal ∂u_x/∂x of the
/// displacement channel — checked with centered finite differences on an
/// untrained (random, smooth) network, where both are nontrivial.
#[test]
fn strain_channel_matches_displacement_derivative() {
    let (geom, mat, load) = lab();
    let data = synth_fiber_scans(&FiberDataSpec::default()).unwrap();
    let p = SpatialProblem::four_point(
        &geom,
        &mat,
        &load,
        &data.compression,
        &data.tension,
        Scenario::FullTension,
        7,
    )
    .unwrap();
    let store = p.init_store().unwrap();
    let h = 1e-5; // metres
    let mut worst = 0.0f64;
    for k in 0..20 {
        let x = -1.4 + 2.8 * k as f64 / 19.0;
        let y = -0.12 + 0.24 * ((k * 7) % 20) as f64 / 19.0;
        let pts = [(x, y), (x + h, y), (x - h, y)];
        let f = predict_field(&p.net, &p.transform, &p.scaling, &store, &pts);
        let fd_microstrain = (f[1].ux_m - f[2].ux_m) / (2.0 * h) * 1e6;
        let err = (f[0].exx_microstrain - fd_microstrain).abs()
            / fd_microstrain.abs().max(1e-3);
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "worst strain/derivative mismatch {worst:.2e}");
}

/// Truncating the collocation cloud must give a prefix of the larger
/// cloud (so configured sizes are nested draws), and every point must lie
/// strictly inside the scaled domain.
#[test]
fn interior_cloud_nests_and_stays_in_domain() {
    let big = interior_cloud(2000);
    let small = interior_cloud(500);
    assert_eq!(&big[..500], &small[..]);
    assert!(big
        .iter()
        .all(|&(x, y)| x.abs() < 1.0 && y.abs() < 1.0));
    // No duplicate points (probability ~0 for a correct generator).
    let mut seen: Vec<(u64, u64)> = big
        .iter()
        .map(|&(x, y)| (x.to_bits(), y.to_bits()))
        .collect();
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen.len(), big.len());
}

/// Loss components carry stable names keyed to the data present: the
/// compression-only scenario reports no tension component, the full
/// scenario reports one, and the verification problem reports neither
/// fiber term.
#[test]
fn loss_component_names_follow_the_data() {
    let (geom, mat, load) = lab();
    let data = synth_fiber_scans(&FiberDataSpec::default()).unwrap();
    let mk = |s| {
        SpatialProblem::four_point(
            &geom,
            &mat,
            &load,
            &data.compression,
            &data.tension,
            s,
            0,
        )
        .unwrap()
    };
    let s1 = mk(Scenario::CompressionOnly);
    let s2 = mk(Scenario::FullTension);
    let store = s1.init_store().unwrap();
    assert_eq!(
        s1.objective(&store).unwrap().component_names(),
        ["pde", "bc", "exp_c", "rot"]
    );
    assert_eq!(
        s2.objective(&store).unwrap().component_names(),
        ["pde", "bc", "exp_c", "exp_t", "rot"]
    );
    let (ms_problem, _) = SpatialProblem::manufactured(&geom, &mat, 0).unwrap();
    let ms_store = ms_problem.init_store().unwrap();
    assert_eq!(
        ms_problem.objective(&ms_store).unwrap().component_names(),
        ["pde", "bc", "rot"]
    );
}
