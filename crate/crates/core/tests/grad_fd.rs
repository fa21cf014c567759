//! Finite-difference validation of the renderer VJPs on the generated rig.

use rigdiff_core::grad::fdcheck::{gradcheck_render, CoordStatus};
use rigdiff_core::grad::{vjp_landmarks, vjp_render_seeded, RenderSeeds};
use rigdiff_core::raster::{render, Camera, ShadingParams};
use rigdiff_core::rig::generator::generate_default_rig;
use rigdiff_core::rig::{FacialParams, LANDMARK_COUNT};

#[test]
fn landmark_path_matches_finite_differences_everywhere() {
    let rig = generate_default_rig(7);
    let camera = Camera::default_for(64, 64);
    let shading = ShadingParams::default();
    let outcome = gradcheck_render(&rig, &camera, &shading, 11).unwrap();
    assert_eq!(
        outcome.landmark.count(CoordStatus::Fail),
        0,
        "{}",
        outcome.landmark.text_table()
    );
    assert!(outcome.landmark.max_rel_err() <= 1e-5);
}

#[test]
fn pixel_path_matches_finite_differences_on_stable_coords() {
    let rig = generate_default_rig(7);
    let camera = Camera::default_for(64, 64);
    let shading = ShadingParams::default();
    let outcome = gradcheck_render(&rig, &camera, &shading, 11).unwrap();
    let checked = outcome.pixel.count(CoordStatus::Ok) + outcome.pixel.count(CoordStatus::Fail);
    assert!(checked > 100, "too few checked coordinates: {checked}");
    assert!(
        outcome.pixel.pass_rate() >= 0.95,
        "pass rate {}\n{}",
        outcome.pixel.pass_rate(),
        outcome.pixel.text_table()
    );
}

#[test]
fn mask_seed_gradients_match_finite_differences() {
    let rig = generate_default_rig(7);
    let camera = Camera::default_for(48, 48);
    let shading = ShadingParams::default();
    let mut params = FacialParams::neutral();
    params.idt[40] = 0.62;
    params.exp[7] = 0.35;
    params.pose = [0.03, -0.04, 0.0, 0.05, -0.06, 0.04];

    // Fixed pseudo-random mask seed.
    let mut v = 0.137f64;
    let mut masks = rigdiff_core::raster::MaskStack::zeros();
    for ch in &mut masks.channels {
        for m in ch.iter_mut() {
            v = (v * 7.31 + 0.177).fract();
            *m = v - 0.5;
        }
    }
    let loss = |p: &FacialParams| -> f64 {
        let out = render(&rig, p, &camera, &shading).unwrap();
        out.masks
            .channels
            .iter()
            .zip(&masks.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    };
    let forward = render(&rig, &params, &camera, &shading).unwrap();
    let analytic = vjp_render_seeded(
        &rig,
        &params,
        &camera,
        &shading,
        &forward,
        &RenderSeeds { rgb: None, masks: Some(&masks), landmarks: None },
    )
    .unwrap();

    let h = 1e-3;
    let flat = params.concat();
    let grad = analytic.concat();
    let mut checked = 0;
    let mut ok = 0;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        let pp = FacialParams::from_concat(&plus).unwrap();
        let pm = FacialParams::from_concat(&minus).unwrap();
        let op = render(&rig, &pp, &camera, &shading).unwrap();
        let om = render(&rig, &pm, &camera, &shading).unwrap();
        if !op.fragments.same_assignment(&om.fragments) {
            continue;
        }
        let numeric = (loss(&pp) - loss(&pm)) / (2.0 * h);
        let a = grad[i];
        if a.abs() < 1e-6 && numeric.abs() < 1e-6 {
            continue;
        }
        checked += 1;
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
        if rel <= 1e-2 {
            ok += 1;
        }
    }
    assert!(checked > 30, "too few checked coords: {checked}");
    assert!(
        ok as f64 / checked as f64 >= 0.95,
        "mask path pass rate {}/{checked}",
        ok
    );
}

#[test]
fn landmark_jacobian_spot_check_against_fd() {
    // Unit seeds recover rows of the landmark Jacobian; compare a few.
    let rig = generate_default_rig(3);
    let camera = Camera::default_for(64, 64);
    let mut params = FacialParams::neutral();
    params.exp[7] = 0.4;
    params.pose = [0.1, 0.05, -0.1, 0.1, -0.08, 0.06];
    for lm in [0usize, 30, 48] {
        for axis in 0..2 {
            let mut seed = vec![[0.0; 2]; LANDMARK_COUNT];
            seed[lm][axis] = 1.0;
            let g = vjp_landmarks(&rig, &params, &camera, &seed).unwrap().concat();
            let flat = params.concat();
            let h = 1e-5;
            for i in [5usize, 100, 262, 270, 283, 285, 288] {
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[i] += h;
                minus[i] -= h;
                let f = |p: &FacialParams| {
                    rigdiff_core::raster::landmark_forward(&rig, p, &camera).unwrap().landmarks2d
                        [lm][axis]
                };
                let numeric = (f(&FacialParams::from_concat(&plus).unwrap())
                    - f(&FacialParams::from_concat(&minus).unwrap()))
                    / (2.0 * h);
                let mag = g[i].abs().max(numeric.abs());
                if mag > 1e-5 {
                    let rel = (g[i] - numeric).abs() / mag;
                    assert!(rel <= 1e-5, "lm {lm} axis {axis} coord {i}: {} vs {numeric}", g[i]);
                } else {
                    // Below the FD noise floor for single-landmark losses;
                    // check absolute agreement instead.
                    assert!(
                        (g[i] - numeric).abs() <= 1e-9,
                        "lm {lm} axis {axis} coord {i}: {} vs {numeric}",
                        g[i]
                    );
                }
            }
        }
    }
}
