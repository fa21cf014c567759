//! Central finite-difference validation of analytic gradients.
//!
//! A check compares one analytic gradient against `(f(x+h e_i) − f(x−h e_i)) / 2h`
//! per coordinate and reports a row for each. Coordinates whose perturbation
//! changes a pixel's triangle assignment are excluded by the coverage filter;
//! coordinates where both gradients sit below the floor are reported skipped.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::fmt::Write as _;

use super::{vjp_landmarks, vjp_render, AdjointSeed, ParamGradient};
use crate::error::CoreResult;
use crate::raster::{landmark_forward, render, Camera, ShadingParams};
use crate::rig::{FaceRig, FacialParams, EXP_DIM, IDT_DIM, LANDMARK_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordStatus {
    Ok,
    Fail,
    Skipped,
    Unstable,
}

impl CoordStatus {
    pub fn name(self) -> &'static str {
        match self {
            CoordStatus::Ok => "ok",
            CoordStatus::Fail => "fail",
            CoordStatus::Skipped => "skipped",
            CoordStatus::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdRow {
    pub index: usize,
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    pub status: CoordStatus,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub h: f64,
    pub tolerance: f64,
    pub grad_floor: f64,
    pub rows: Vec<FdRow>,
}

impl FdReport {
    pub fn count(&self, status: CoordStatus) -> usize {
        self.rows.iter().filter(|r| r.status == status).count()
    }

    /// Fraction of checked (not skipped, not unstable) coordinates that pass.
    pub fn pass_rate(&self) -> f64 {
        let ok = self.count(CoordStatus::Ok);
        let fail = self.count(CoordStatus::Fail);
        if ok + fail == 0 {
            1.0
        } else {
            ok as f64 / (ok + fail) as f64
        }
    }

    pub fn max_rel_err(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| matches!(r.status, CoordStatus::Ok | CoordStatus::Fail))
            .map(|r| r.rel_err)
            .fold(0.0, f64::max)
    }

    pub fn text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>16} {:>16} {:>12}  {}",
            "coord", "analytic", "numeric", "rel_err", "status"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>16.8e} {:>16.8e} {:>12.4e}  {}",
                r.label,
                r.analytic,
                r.numeric,
                r.rel_err,
                r.status.name()
            );
        }
        let _ = writeln!(
            s,
            "pass rate {:.4} ({} ok, {} fail, {} skipped, {} unstable; h={:.1e}, tol={:.1e})",
            self.pass_rate(),
            self.count(CoordStatus::Ok),
            self.count(CoordStatus::Fail),
            self.count(CoordStatus::Skipped),
            self.count(CoordStatus::Unstable),
            self.h,
            self.tolerance,
        );
        s
    }

    /// One `key=value` record per coordinate.
    pub fn structured(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "fdcheck h={} tol={} floor={}",
            self.h, self.tolerance, self.grad_floor
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "coord={} analytic={} numeric={} rel_err={} status={}",
                r.label,
                r.analytic,
                r.numeric,
                r.rel_err,
                r.status.name()
            );
        }
        let _ = writeln!(s, "pass_rate={}", self.pass_rate());
        s
    }
}

fn coord_label(i: usize) -> String {
    if i < IDT_DIM {
        format!("idt[{i}]")
    } else if i < IDT_DIM + EXP_DIM {
        format!("exp[{}]", i - IDT_DIM)
    } else {
        format!("pose[{}]", i - IDT_DIM - EXP_DIM)
    }
}

/// Compares `analytic` against central differences of `f` at `point`.
///
/// `stable` receives the two perturbed points and may veto a coordinate
/// (coverage instability); vetoed rows are reported `unstable` and excluded
/// from the pass rate.
pub fn finite_diff_check(
    f: &mut dyn FnMut(&FacialParams) -> f64,
    analytic: &ParamGradient,
    point: &FacialParams,
    h: f64,
    tolerance: f64,
    grad_floor: f64,
    stable: &mut dyn FnMut(&FacialParams, &FacialParams) -> bool,
) -> FdReport {
    assert!(h > 0.0, "step must be positive");
    let flat = point.concat();
    let grad = analytic.concat();
    let mut rows = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        let p_plus = FacialParams::from_concat(&plus).expect("shape");
        let p_minus = FacialParams::from_concat(&minus).expect("shape");
        let label = coord_label(i);
        if !stable(&p_plus, &p_minus) {
            rows.push(FdRow {
                index: i,
                label,
                analytic: grad[i],
                numeric: f64::NAN,
                rel_err: f64::NAN,
                status: CoordStatus::Unstable,
            });
            continue;
        }
        let numeric = (f(&p_plus) - f(&p_minus)) / (2.0 * h);
        let a = grad[i];
        if a.abs() < grad_floor && numeric.abs() < grad_floor {
            rows.push(FdRow {
                index: i,
                label,
                analytic: a,
                numeric,
                rel_err: 0.0,
                status: CoordStatus::Skipped,
            });
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-300);
        rows.push(FdRow {
            index: i,
            label,
            analytic: a,
            numeric,
            rel_err: rel,
            status: if rel <= tolerance { CoordStatus::Ok } else { CoordStatus::Fail },
        });
    }
    FdReport { h, tolerance, grad_floor, rows }
}

/// Outcome of the renderer gradient check: the approximate pixel path and the
/// exact landmark path.
pub struct GradCheckOutcome {
    pub pixel: FdReport,
    pub landmark: FdReport,
}

pub const PIXEL_H: f64 = 1e-3;
pub const PIXEL_TOL: f64 = 1e-2;
pub const PIXEL_FLOOR: f64 = 1e-6;
pub const LANDMARK_H: f64 = 1e-5;
pub const LANDMARK_TOL: f64 = 1e-5;
pub const LANDMARK_FLOOR: f64 = 1e-8;
pub const PASS_RATE_THRESHOLD: f64 = 0.95;

/// Runs the full renderer gradient check: a random-seeded pixel loss checked
/// on coverage-stable coordinates, and a random-seeded landmark loss checked
/// on every coordinate.
pub fn gradcheck_render(
    rig: &FaceRig,
    camera: &Camera,
    shading: &ShadingParams,
    seed: u64,
) -> CoreResult<GradCheckOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = FacialParams::neutral();
    // Interior points: endpoint coordinates would clamp one FD side.
    for v in &mut params.idt {
        *v = rng.gen_range(0.15..0.85);
    }
    for v in &mut params.exp {
        *v = rng.gen_range(0.05..0.6);
    }
    for i in 0..3 {
        params.pose[i] = rng.gen_range(-0.25..0.25);
        params.pose[3 + i] = rng.gen_range(-0.2..0.2);
    }

    let forward = render(rig, &params, camera, shading)?;
    let mut pixel_seed = AdjointSeed::zeros(camera.width, camera.height);
    for v in &mut pixel_seed.rgb {
        *v = rng.gen_range(-1.0..1.0);
    }
    let analytic = vjp_render(rig, &params, camera, shading, &forward, &pixel_seed)?;

    // Centering the loss at the base image keeps the finite difference far
    // from catastrophic cancellation without changing the gradient.
    let base_image = forward.image.data.clone();
    let seed_ref = &pixel_seed;
    let mut pixel_loss = |p: &FacialParams| -> f64 {
        let out = render(rig, p, camera, shading).expect("render");
        out.image
            .data
            .iter()
            .zip(&base_image)
            .zip(&seed_ref.rgb)
            .map(|((a, b), s)| (a - b) * s)
            .sum()
    };
    let mut stable = |plus: &FacialParams, minus: &FacialParams| -> bool {
        let fp = render(rig, plus, camera, shading).expect("render");
        let fm = render(rig, minus, camera, shading).expect("render");
        fp.fragments.same_assignment(&fm.fragments)
    };
    let pixel = finite_diff_check(
        &mut pixel_loss,
        &analytic,
        &params,
        PIXEL_H,
        PIXEL_TOL,
        PIXEL_FLOOR,
        &mut stable,
    );

    let mut lm_seed = vec![[0.0f64; 2]; LANDMARK_COUNT];
    for s in &mut lm_seed {
        s[0] = rng.gen_range(-1.0..1.0);
        s[1] = rng.gen_range(-1.0..1.0);
    }
    let lm_analytic = vjp_landmarks(rig, &params, camera, &lm_seed)?;
    let landmark = landmark_fd_report(rig, camera, &params, &lm_seed, &lm_analytic);

    Ok(GradCheckOutcome { pixel, landmark })
}

/// Central differences of the seeded landmark loss, evaluated
/// difference-first per landmark with compensated summation: identical to
/// `(f(x+h) − f(x−h))/2h` algebraically but far from cancellation, which
/// matters for coordinates with tiny gradients.
fn landmark_fd_report(
    rig: &FaceRig,
    camera: &Camera,
    point: &FacialParams,
    seed: &[[f64; 2]],
    analytic: &ParamGradient,
) -> FdReport {
    let flat = point.concat();
    let grad = analytic.concat();
    let mut rows = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += LANDMARK_H;
        minus[i] -= LANDMARK_H;
        let lp = landmark_forward(rig, &FacialParams::from_concat(&plus).unwrap(), camera)
            .expect("forward")
            .landmarks2d;
        let lm = landmark_forward(rig, &FacialParams::from_concat(&minus).unwrap(), camera)
            .expect("forward")
            .landmarks2d;
        // Neumaier-compensated sum of the per-landmark differences.
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        let mut add = |x: f64| {
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        };
        for j in 0..lp.len() {
            add((lp[j][0] - lm[j][0]) * seed[j][0]);
            add((lp[j][1] - lm[j][1]) * seed[j][1]);
        }
        let numeric = (sum + comp) / (2.0 * LANDMARK_H);
        let a = grad[i];
        let label = coord_label(i);
        if a.abs() < LANDMARK_FLOOR && numeric.abs() < LANDMARK_FLOOR {
            rows.push(FdRow {
                index: i,
                label,
                analytic: a,
                numeric,
                rel_err: 0.0,
                status: CoordStatus::Skipped,
            });
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-300);
        rows.push(FdRow {
            index: i,
            label,
            analytic: a,
            numeric,
            rel_err: rel,
            status: if rel <= LANDMARK_TOL { CoordStatus::Ok } else { CoordStatus::Fail },
        });
    }
    FdReport { h: LANDMARK_H, tolerance: LANDMARK_TOL, grad_floor: LANDMARK_FLOOR, rows }
}
