//! Deterministic default-rig generator.
//!
//! Builds a low-poly head (~1.7k vertices) whose skeleton follows the 29
//! facial part groups, with bilateral eye-region parts instantiated per side
//! so the schema carries exactly 261 active controllers. Channel ranges use
//! the documented defaults: translation ±0.2 model units, rotation ±0.3 rad,
//! scale [0.7, 1.3], all symmetric about the neutral channel value so the
//! all-midpoint identity reproduces the bind pose.
//!
//! The head faces +z; +x is the viewer-left side under the default camera.
//! Landmark indexing follows the standard 68-point annotation in image space
//! (index 0 at the viewer-left end of the jawline).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{
    Blendshape, Bone, Channel, Controller, ControllerSchema, FaceRig, SkinBinding, Skeleton,
    VertexInfluence, ALL_CHANNELS, EXP_DIM, LANDMARK_COUNT, PART_COUNT, SKIN_INFLUENCES,
};
use crate::{Mat4, TransformTrs, Vec3};

const STACKS: usize = 36;
const SLICES: usize = 48;
/// Ellipsoid radii of the undeformed head (x, y, z).
const HEAD_RADII: [f64; 3] = [0.72, 0.95, 0.80];
/// Baseline skin influence of the root bone.
const ROOT_WEIGHT: f64 = 0.16;

#[derive(Clone, Copy)]
enum Pair {
    /// Two bones, one per side, each with its own controllers.
    Doubled,
    /// One bone at the interior midpoint of the mirrored anchor pair.
    Merged,
    /// One midline bone.
    Central,
}

#[derive(Clone, Copy)]
enum Region {
    Upper,
    Mid,
    Lower,
}

struct RowSpec {
    name: &'static str,
    banned: &'static [Channel],
    pair: Pair,
    anchor: (f64, f64),
    sigma: f64,
    region: Region,
}

use Channel::{Rx, Ry, Rz, Sx, Sy, Sz, Tx, Ty, Tz};

/// The 29 facial part groups with their banned channels. Six eye-region rows
/// are instantiated per side; the remaining bilateral rows are driven by one
/// bone so a single controller moves both sides together.
const ROWS: [RowSpec; 29] = [
    RowSpec { name: "eyebrow_head", banned: &[Ry], pair: Pair::Doubled, anchor: (0.22, 0.33), sigma: 0.115, region: Region::Upper },
    RowSpec { name: "eyebrow_body", banned: &[Ry], pair: Pair::Merged, anchor: (0.34, 0.36), sigma: 0.15, region: Region::Upper },
    RowSpec { name: "eyebrow_tail", banned: &[Ry], pair: Pair::Merged, anchor: (0.47, 0.32), sigma: 0.14, region: Region::Upper },
    RowSpec { name: "eye", banned: &[Sx, Sy, Sz], pair: Pair::Merged, anchor: (0.33, 0.16), sigma: 0.105, region: Region::Mid },
    RowSpec { name: "eyelid_outside", banned: &[], pair: Pair::Doubled, anchor: (0.37, 0.22), sigma: 0.085, region: Region::Mid },
    RowSpec { name: "eyelid_inside", banned: &[], pair: Pair::Doubled, anchor: (0.25, 0.21), sigma: 0.08, region: Region::Mid },
    RowSpec { name: "eyelid_lower", banned: &[], pair: Pair::Doubled, anchor: (0.32, 0.095), sigma: 0.08, region: Region::Mid },
    RowSpec { name: "eye_corner_inner", banned: &[], pair: Pair::Doubled, anchor: (0.19, 0.155), sigma: 0.07, region: Region::Mid },
    RowSpec { name: "eye_corner_outer", banned: &[], pair: Pair::Doubled, anchor: (0.45, 0.16), sigma: 0.07, region: Region::Mid },
    RowSpec { name: "nose_body", banned: &[Tx, Ry, Rz, Sx, Sy, Sz], pair: Pair::Central, anchor: (0.0, 0.10), sigma: 0.12, region: Region::Mid },
    RowSpec { name: "nose_bridge", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, 0.22), sigma: 0.10, region: Region::Mid },
    RowSpec { name: "nose_wing", banned: &[], pair: Pair::Merged, anchor: (0.11, -0.05), sigma: 0.075, region: Region::Mid },
    RowSpec { name: "nose_tip", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, -0.02), sigma: 0.08, region: Region::Mid },
    RowSpec { name: "nose_bottom", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, -0.10), sigma: 0.075, region: Region::Mid },
    RowSpec { name: "mouth", banned: &[Tx, Ry, Rz, Sx, Sy, Sz], pair: Pair::Central, anchor: (0.0, -0.38), sigma: 0.16, region: Region::Lower },
    RowSpec { name: "lip_upper_mid", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, -0.31), sigma: 0.08, region: Region::Lower },
    RowSpec { name: "lip_upper_outer", banned: &[], pair: Pair::Merged, anchor: (0.12, -0.33), sigma: 0.08, region: Region::Lower },
    RowSpec { name: "lip_lower_mid", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, -0.455), sigma: 0.08, region: Region::Lower },
    RowSpec { name: "lip_lower_outer", banned: &[], pair: Pair::Merged, anchor: (0.12, -0.44), sigma: 0.08, region: Region::Lower },
    RowSpec { name: "mouth_corner", banned: &[], pair: Pair::Merged, anchor: (0.21, -0.38), sigma: 0.075, region: Region::Lower },
    RowSpec { name: "forehead", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, 0.55), sigma: 0.24, region: Region::Upper },
    RowSpec { name: "glabellum", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, 0.30), sigma: 0.12, region: Region::Upper },
    RowSpec { name: "cheekbone", banned: &[Rz, Sx, Sy, Sz], pair: Pair::Merged, anchor: (0.42, -0.05), sigma: 0.15, region: Region::Mid },
    RowSpec { name: "risorius", banned: &[Rz, Sx, Sy, Sz], pair: Pair::Merged, anchor: (0.32, -0.30), sigma: 0.13, region: Region::Lower },
    RowSpec { name: "cheek", banned: &[Sx, Sy, Sz], pair: Pair::Merged, anchor: (0.38, -0.18), sigma: 0.16, region: Region::Mid },
    RowSpec { name: "jaw", banned: &[Tx, Ry, Rz], pair: Pair::Central, anchor: (0.0, -0.58), sigma: 0.18, region: Region::Lower },
    RowSpec { name: "jaw_lower", banned: &[], pair: Pair::Central, anchor: (0.0, -0.68), sigma: 0.15, region: Region::Lower },
    RowSpec { name: "mandibular", banned: &[], pair: Pair::Merged, anchor: (0.45, -0.38), sigma: 0.16, region: Region::Lower },
    RowSpec { name: "jaw_outer", banned: &[], pair: Pair::Merged, anchor: (0.55, -0.15), sigma: 0.17, region: Region::Lower },
];

struct ShapeSpec {
    label: &'static str,
    anchor: (f64, f64),
    mirrored: bool,
    /// Direction of motion; x flips on the mirrored side when `mirror_x`.
    dir: [f64; 3],
    mirror_x: bool,
    sigma: f64,
    amp: f64,
}

const SHAPES: [ShapeSpec; EXP_DIM] = [
    ShapeSpec { label: "Eye-close", anchor: (0.32, 0.225), mirrored: true, dir: [0.0, -1.0, 0.0], mirror_x: false, sigma: 0.085, amp: 0.055 },
    ShapeSpec { label: "Upper-lid-raise", anchor: (0.32, 0.225), mirrored: true, dir: [0.0, 1.0, 0.0], mirror_x: false, sigma: 0.08, amp: 0.045 },
    ShapeSpec { label: "Lid-tighten", anchor: (0.32, 0.10), mirrored: true, dir: [0.0, 1.0, 0.0], mirror_x: false, sigma: 0.075, amp: 0.03 },
    ShapeSpec { label: "Inner-brow-raise", anchor: (0.21, 0.33), mirrored: true, dir: [0.0, 1.0, 0.15], mirror_x: false, sigma: 0.09, amp: 0.05 },
    ShapeSpec { label: "Left-outer-brow-raise", anchor: (0.44, 0.33), mirrored: false, dir: [0.0, 1.0, 0.1], mirror_x: false, sigma: 0.10, amp: 0.06 },
    ShapeSpec { label: "Right-outer-brow-raise", anchor: (-0.44, 0.33), mirrored: false, dir: [0.0, 1.0, 0.1], mirror_x: false, sigma: 0.10, amp: 0.06 },
    ShapeSpec { label: "Brow-Lower", anchor: (0.33, 0.34), mirrored: true, dir: [0.0, -1.0, 0.0], mirror_x: false, sigma: 0.12, amp: 0.05 },
    ShapeSpec { label: "Jaw-open", anchor: (0.0, -0.52), mirrored: false, dir: [0.0, -1.0, -0.15], mirror_x: false, sigma: 0.26, amp: 0.14 },
    ShapeSpec { label: "Nose-wrinkle", anchor: (0.0, 0.06), mirrored: false, dir: [0.0, 1.0, 0.3], mirror_x: false, sigma: 0.10, amp: 0.035 },
    ShapeSpec { label: "Upper-lip-raise", anchor: (0.0, -0.30), mirrored: false, dir: [0.0, 1.0, 0.1], mirror_x: false, sigma: 0.09, amp: 0.05 },
    ShapeSpec { label: "Down-lip-down", anchor: (0.0, -0.46), mirrored: false, dir: [0.0, -1.0, 0.0], mirror_x: false, sigma: 0.09, amp: 0.05 },
    ShapeSpec { label: "Lip-corner-pull", anchor: (0.21, -0.375), mirrored: true, dir: [0.8, 0.6, 0.0], mirror_x: true, sigma: 0.08, amp: 0.06 },
    ShapeSpec { label: "Left-mouth-press", anchor: (0.20, -0.38), mirrored: false, dir: [-0.7, 0.3, 0.1], mirror_x: false, sigma: 0.075, amp: 0.04 },
    ShapeSpec { label: "Right-mouth-press", anchor: (-0.20, -0.38), mirrored: false, dir: [0.7, 0.3, 0.1], mirror_x: false, sigma: 0.075, amp: 0.04 },
    ShapeSpec { label: "Lip-pucker", anchor: (0.0, -0.385), mirrored: false, dir: [0.0, 0.0, 1.0], mirror_x: false, sigma: 0.10, amp: 0.06 },
    ShapeSpec { label: "Lip-stretch", anchor: (0.21, -0.38), mirrored: true, dir: [1.0, 0.0, 0.0], mirror_x: true, sigma: 0.085, amp: 0.05 },
    ShapeSpec { label: "Lip-upper-close", anchor: (0.0, -0.325), mirrored: false, dir: [0.0, -1.0, 0.0], mirror_x: false, sigma: 0.07, amp: 0.035 },
    ShapeSpec { label: "Lip-lower-close", anchor: (0.0, -0.44), mirrored: false, dir: [0.0, 1.0, 0.0], mirror_x: false, sigma: 0.07, amp: 0.035 },
    ShapeSpec { label: "Puff", anchor: (0.33, -0.28), mirrored: true, dir: [0.7, -0.1, 0.7], mirror_x: true, sigma: 0.13, amp: 0.05 },
    ShapeSpec { label: "Lip-corner-depress", anchor: (0.21, -0.385), mirrored: true, dir: [0.2, -1.0, 0.0], mirror_x: true, sigma: 0.08, amp: 0.05 },
    ShapeSpec { label: "Jaw-left", anchor: (0.0, -0.58), mirrored: false, dir: [1.0, 0.0, 0.0], mirror_x: false, sigma: 0.20, amp: 0.07 },
    ShapeSpec { label: "Jaw-right", anchor: (0.0, -0.58), mirrored: false, dir: [-1.0, 0.0, 0.0], mirror_x: false, sigma: 0.20, amp: 0.07 },
];

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn gauss2(du: f64, dw: f64, su: f64, sw: f64) -> f64 {
    (-(du / su).powi(2) - (dw / sw).powi(2)).exp()
}

/// Per-seed jitter of the head proportions and feature layout.
struct Jitter {
    bump_scale: f64,
    anchor_du: f64,
    anchor_dw: f64,
    tint: [f64; 3],
}

struct HeadShape {
    jit: Jitter,
}

impl HeadShape {
    /// Surface point for a unit direction, before jawline tapering.
    fn surface(&self, d: Vec3) -> Vec3 {
        let front = smoothstep(d.z / 0.2);
        let u = d.x + self.jit.anchor_du;
        let w = d.y + self.jit.anchor_dw;
        let mut bump = 0.0;
        // Nose ridge and tip.
        bump += 0.085
            * (-(u / 0.085).powi(2)).exp()
            * smoothstep((w + 0.08) / 0.06)
            * smoothstep((0.24 - w) / 0.06);
        bump += 0.06 * gauss2(u, w + 0.03, 0.075, 0.075);
        // Brow ridges.
        bump += 0.03 * (gauss2(u - 0.33, w - 0.345, 0.13, 0.05) + gauss2(u + 0.33, w - 0.345, 0.13, 0.05));
        // Lips and chin.
        bump += 0.035 * gauss2(u, w + 0.38, 0.16, 0.065);
        bump += 0.04 * gauss2(u, w + 0.60, 0.11, 0.11);
        // Eye sockets sink in, cheeks puff out.
        bump -= 0.035 * (gauss2(u - 0.32, w - 0.165, 0.095, 0.095) + gauss2(u + 0.32, w - 0.165, 0.095, 0.095));
        bump += 0.02 * (gauss2(u - 0.40, w + 0.16, 0.15, 0.15) + gauss2(u + 0.40, w + 0.16, 0.15, 0.15));
        bump *= front * self.jit.bump_scale;

        let scale = 1.0 + bump;
        let mut p = Vec3::new(
            HEAD_RADII[0] * d.x * scale,
            HEAD_RADII[1] * d.y * scale,
            HEAD_RADII[2] * d.z * scale,
        );
        if p.y < -0.12 {
            let t = ((-p.y - 0.12) / 0.70).min(1.0);
            p.x *= 1.0 - 0.32 * t * t;
            p.z *= 1.0 - 0.10 * t * t;
        }
        p
    }

    fn surface_uw(&self, u: f64, w: f64) -> Vec3 {
        let z2 = (1.0 - u * u - w * w).max(1e-6);
        self.surface(Vec3::new(u, w, z2.sqrt()).normalized())
    }
}

/// Warps a uniform grid so sample density follows `density`.
fn warped_grid(count: usize, lo: f64, hi: f64, density: impl Fn(f64) -> f64) -> Vec<f64> {
    const FINE: usize = 4096;
    let mut cdf = Vec::with_capacity(FINE + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    for i in 0..FINE {
        let t = (i as f64 + 0.5) / FINE as f64;
        acc += density(t).max(1e-6);
        cdf.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(count);
    let mut j = 0usize;
    for k in 0..count {
        let target = total * (k as f64 + 0.5) / count as f64;
        while j + 1 < cdf.len() && cdf[j + 1] < target {
            j += 1;
        }
        let seg = cdf[j + 1] - cdf[j];
        let frac = if seg > 0.0 { (target - cdf[j]) / seg } else { 0.0 };
        let t = (j as f64 + frac) / FINE as f64;
        out.push(lo + (hi - lo) * t);
    }
    out
}

/// Target landmark layout in face-plane coordinates (u = x of the unit
/// direction, w = y). Index 0 is the viewer-left end of the jawline.
fn landmark_targets() -> Vec<(f64, f64)> {
    let mut t = Vec::with_capacity(LANDMARK_COUNT);
    // 0-16: jawline.
    for i in 0..17 {
        let a = std::f64::consts::PI * i as f64 / 16.0;
        t.push((0.80 * a.cos(), 0.12 - 0.72 * a.sin()));
    }
    // 17-26: brows, arc peak in the middle of each.
    for k in 0..5 {
        let u = 0.47 - 0.085 * k as f64;
        t.push((u, 0.32 + 0.045 * (std::f64::consts::PI * k as f64 / 4.0).sin()));
    }
    for k in 0..5 {
        let u = -(0.13 + 0.085 * k as f64);
        t.push((u, 0.32 + 0.045 * (std::f64::consts::PI * k as f64 / 4.0).sin()));
    }
    // 27-30: nose bridge down to the tip; 31-35: nostril row.
    t.extend([(0.0, 0.24), (0.0, 0.155), (0.0, 0.07), (0.0, -0.015)]);
    t.extend([(0.10, -0.095), (0.05, -0.105), (0.0, -0.11), (-0.05, -0.105), (-0.10, -0.095)]);
    // 36-47: eyes (outer, upper x2, inner, lower x2 per eye).
    t.extend([
        (0.44, 0.155), (0.385, 0.195), (0.315, 0.20), (0.235, 0.16), (0.30, 0.115), (0.375, 0.11),
        (-0.235, 0.16), (-0.315, 0.20), (-0.385, 0.195), (-0.44, 0.155), (-0.375, 0.11), (-0.30, 0.115),
    ]);
    // 48-59: outer lip loop; 60-67: inner lip loop.
    t.extend([
        (0.215, -0.38), (0.14, -0.325), (0.06, -0.30), (0.0, -0.315), (-0.06, -0.30), (-0.14, -0.325),
        (-0.215, -0.38), (-0.135, -0.445), (-0.06, -0.47), (0.0, -0.475), (0.06, -0.47), (0.135, -0.445),
    ]);
    t.extend([
        (0.145, -0.38), (0.06, -0.35), (0.0, -0.355), (-0.06, -0.35), (-0.145, -0.38),
        (-0.06, -0.415), (0.0, -0.42), (0.06, -0.415),
    ]);
    assert_eq!(t.len(), LANDMARK_COUNT);
    // Annotations are never perfectly centered; the small uniform bias keeps
    // nominally-midline points off every bone's scaling plane.
    for p in &mut t {
        p.0 += 0.012;
    }
    t
}

fn brow_arc_distance(u: f64, w: f64) -> f64 {
    let au = u.abs();
    if !(0.10..=0.50).contains(&au) {
        return f64::INFINITY;
    }
    let k = ((au - 0.13) / 0.34).clamp(0.0, 1.0);
    let arc_w = 0.32 + 0.045 * (std::f64::consts::PI * k).sin();
    (w - arc_w).abs()
}

/// Generates the default face rig. Identical seeds produce identical rigs.
pub fn generate_default_rig(seed: u64) -> FaceRig {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let jit = Jitter {
        bump_scale: 1.0 + 0.05 * rng.gen_range(-1.0..=1.0),
        anchor_du: 0.008 * rng.gen_range(-1.0..=1.0),
        anchor_dw: 0.008 * rng.gen_range(-1.0..=1.0),
        tint: [
            1.0 + 0.03 * rng.gen_range(-1.0..=1.0),
            1.0 + 0.03 * rng.gen_range(-1.0..=1.0),
            1.0 + 0.03 * rng.gen_range(-1.0..=1.0),
        ],
    };
    let shape = HeadShape { jit };

    // Denser stacks around the eye and mouth bands, denser slices up front.
    let thetas = warped_grid(STACKS - 1, 0.0, std::f64::consts::PI, |t| {
        1.0 + 1.6 * (-((t - 0.449) / 0.055).powi(2)).exp() + 2.2 * (-((t - 0.624) / 0.06).powi(2)).exp()
    });
    let phis = warped_grid(SLICES, -std::f64::consts::PI, std::f64::consts::PI, |t| {
        let p = (t - 0.5) * 2.0;
        1.0 + 1.3 * (-(p / 0.35).powi(2)).exp()
    });

    // Vertices: top pole, stack rows, bottom pole.
    let mut dirs: Vec<Vec3> = Vec::new();
    dirs.push(Vec3::new(0.0, 1.0, 0.0));
    for &theta in &thetas {
        for &phi in &phis {
            dirs.push(Vec3::new(
                theta.sin() * phi.sin(),
                theta.cos(),
                theta.sin() * phi.cos(),
            ));
        }
    }
    dirs.push(Vec3::new(0.0, -1.0, 0.0));
    let mut vertices: Vec<Vec3> = dirs.iter().map(|d| shape.surface(*d)).collect();

    // Triangles with outward winding.
    let row = |st: usize, sl: usize| 1 + (st - 1) * SLICES + (sl % SLICES);
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for sl in 0..SLICES {
        triangles.push([0, row(1, sl) as u32, row(1, sl + 1) as u32]);
    }
    for st in 1..STACKS - 1 {
        for sl in 0..SLICES {
            let v00 = row(st, sl) as u32;
            let v01 = row(st, sl + 1) as u32;
            let v10 = row(st + 1, sl) as u32;
            let v11 = row(st + 1, sl + 1) as u32;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let bottom = (vertices.len() - 1) as u32;
    for sl in 0..SLICES {
        triangles.push([row(STACKS - 1, sl) as u32, bottom, row(STACKS - 1, sl + 1) as u32]);
    }

    // Snap the nearest front vertex onto each landmark target.
    let targets = landmark_targets();
    let mut landmarks: Vec<u32> = Vec::with_capacity(LANDMARK_COUNT);
    let mut used = vec![false; vertices.len()];
    for &(u, w) in &targets {
        let target = shape.surface_uw(u, w);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (q, v) in vertices.iter().enumerate() {
            if used[q] || dirs[q].z <= 0.05 {
                continue;
            }
            let d = (*v - target).norm();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        vertices[best] = target;
        let z2 = (1.0 - u * u - w * w).max(1e-6);
        dirs[best] = Vec3::new(u, w, z2.sqrt()).normalized();
        used[best] = true;
        landmarks.push(best as u32);
    }

    // Albedo and disjoint part groups from the final directions.
    let skin_base = [0.80 * shape.jit.tint[0], 0.62 * shape.jit.tint[1], 0.52 * shape.jit.tint[2]];
    let mut albedo = Vec::with_capacity(vertices.len());
    let mut parts: [Vec<u32>; PART_COUNT] = Default::default();
    for (q, d) in dirs.iter().enumerate() {
        let (u, w) = (d.x, d.y);
        let front = d.z > 0.05;
        let mut color = skin_base;
        let mut part = 4usize; // skin

        if front {
            let eye_l = ((u - 0.335) / 0.105).powi(2) + ((w - 0.155) / 0.105).powi(2);
            let eye_r = ((u + 0.335) / 0.105).powi(2) + ((w - 0.155) / 0.105).powi(2);
            let eye = eye_l.min(eye_r);
            let lips = (u / 0.215).powi(2) + ((w + 0.388) / 0.09).powi(2);
            let brow_d = brow_arc_distance(u, w);

            if brow_d < 0.055 {
                part = 0;
            } else if eye < 1.2 {
                part = 1;
            } else if u.abs() < 0.15 && (-0.13..0.27).contains(&w) {
                part = 2;
            } else if (u / 0.25).powi(2) + ((w + 0.385) / 0.115).powi(2) <= 1.0 {
                part = 3;
            }

            if brow_d < 0.035 {
                color = [0.28, 0.20, 0.15];
            } else if eye < 1.0 {
                let iris = ((u.abs() - 0.335) / 0.048).powi(2) + ((w - 0.155) / 0.048).powi(2);
                let pupil = ((u.abs() - 0.335) / 0.020).powi(2) + ((w - 0.155) / 0.020).powi(2);
                color = if pupil <= 1.0 {
                    [0.05, 0.05, 0.08]
                } else if iris <= 1.0 {
                    [0.25, 0.20, 0.35]
                } else {
                    [0.93, 0.93, 0.90]
                };
            } else if lips <= 1.0 {
                color = [0.72, 0.34, 0.32];
            } else {
                let nostril_l = gauss2(u - 0.055, w + 0.10, 0.028, 0.028);
                let nostril_r = gauss2(u + 0.055, w + 0.10, 0.028, 0.028);
                let dark = 0.45 * nostril_l.max(nostril_r);
                for c in &mut color {
                    *c *= 1.0 - dark;
                }
            }
        }
        albedo.push(color);
        parts[part].push(q as u32);
    }

    // Skeleton: root, face, three region bones, then the part bones.
    let mut bone_names: Vec<String> = vec![
        "head_root".into(),
        "face".into(),
        "upper_face".into(),
        "mid_face".into(),
        "lower_face".into(),
    ];
    let mut bone_parents: Vec<Option<usize>> = vec![None, Some(0), Some(1), Some(1), Some(1)];
    let mut bone_world: Vec<Vec3> = vec![
        Vec3::zero(),
        Vec3::new(0.0, 0.0, 0.10),
        Vec3::new(0.0, 0.28, 0.40),
        Vec3::new(0.0, 0.02, 0.48),
        Vec3::new(0.0, -0.40, 0.32),
    ];
    // (bone index, sigma, influence anchors) per part bone. A merged
    // bilateral bone pivots on the midline but its skin influence falls off
    // from the nearest of the two mirrored feature anchors.
    let mut part_bones: Vec<(usize, f64, Vec<Vec3>)> = Vec::new();
    // Per row: the bone instances carrying its controllers.
    let mut row_instances: Vec<Vec<usize>> = Vec::new();

    for spec in &ROWS {
        let parent = match spec.region {
            Region::Upper => 2,
            Region::Mid => 3,
            Region::Lower => 4,
        };
        let (u, w) = spec.anchor;
        let left = shape.surface_uw(u, w);
        let right = shape.surface_uw(-u, w);
        let mut instances = Vec::new();
        match spec.pair {
            Pair::Doubled => {
                for (suffix, pos) in [("_l", left.scaled(0.94)), ("_r", right.scaled(0.94))] {
                    let id = bone_names.len();
                    bone_names.push(format!("{}{}", spec.name, suffix));
                    bone_parents.push(Some(parent));
                    bone_world.push(pos);
                    part_bones.push((id, spec.sigma, vec![pos]));
                    instances.push(id);
                }
            }
            Pair::Merged => {
                let pos = (left + right).scaled(0.5);
                let id = bone_names.len();
                bone_names.push(spec.name.to_string());
                bone_parents.push(Some(parent));
                bone_world.push(pos);
                part_bones.push((id, spec.sigma, vec![left, right]));
                instances.push(id);
            }
            Pair::Central => {
                let pos = left.scaled(0.92);
                let id = bone_names.len();
                bone_names.push(spec.name.to_string());
                bone_parents.push(Some(parent));
                bone_world.push(pos);
                part_bones.push((id, spec.sigma, vec![pos]));
                instances.push(id);
            }
        }
        row_instances.push(instances);
    }

    let bone_count = bone_names.len();
    let mut bones = Vec::with_capacity(bone_count);
    // Pure-translation rests keep the neutral world chain an exact
    // translation; the bind inverse negates the chain-accumulated position
    // (not the nominal one) so neutral skinning cancels bitwise.
    let mut acc_world: Vec<Vec3> = Vec::with_capacity(bone_count);
    for i in 0..bone_count {
        let parent_pos = bone_parents[i].map(|p| bone_world[p]).unwrap_or(Vec3::zero());
        let rest_t = bone_world[i] - parent_pos;
        let acc = match bone_parents[i] {
            None => rest_t,
            Some(p) => acc_world[p] + rest_t,
        };
        acc_world.push(acc);
        bones.push(Bone {
            name: bone_names[i].clone(),
            parent: bone_parents[i],
            rest: TransformTrs::from_translation([rest_t.x, rest_t.y, rest_t.z]),
            bind_pose_inv: Mat4::from_translation(-acc),
        });
    }
    let skeleton = Skeleton { bones };

    // Skin weights: Gaussian falloff to the part bones plus a constant root
    // baseline, top four influences per vertex.
    let mut influences = Vec::with_capacity(vertices.len());
    for v in &vertices {
        let mut cand: Vec<(usize, f64)> = vec![(0, ROOT_WEIGHT)];
        for (id, sigma, anchors) in &part_bones {
            let d = anchors.iter().map(|a| (*v - *a).norm()).fold(f64::INFINITY, f64::min);
            let wgt = (-(d / sigma).powi(2)).exp();
            if wgt > 1e-4 {
                cand.push((*id, wgt));
            }
        }
        cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        cand.truncate(SKIN_INFLUENCES);
        let sum: f64 = cand.iter().map(|c| c.1).sum();
        let mut bones_idx = [0u16; SKIN_INFLUENCES];
        let mut weights = [0.0; SKIN_INFLUENCES];
        for (k, (id, wgt)) in cand.iter().enumerate() {
            bones_idx[k] = *id as u16;
            weights[k] = wgt / sum;
        }
        // Absorb rounding into the largest weight so the sum is exactly one.
        let tail: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - tail;
        influences.push(VertexInfluence { bones: bones_idx, weights });
    }

    // Blendshapes.
    let mut blendshapes = Vec::with_capacity(EXP_DIM);
    for spec in &SHAPES {
        let mut anchors = vec![(shape.surface_uw(spec.anchor.0, spec.anchor.1), 1.0)];
        if spec.mirrored {
            anchors.push((shape.surface_uw(-spec.anchor.0, spec.anchor.1), -1.0));
        }
        let dir_norm = (spec.dir[0].powi(2) + spec.dir[1].powi(2) + spec.dir[2].powi(2)).sqrt();
        let mut offsets = vec![Vec3::zero(); vertices.len()];
        for (q, v) in vertices.iter().enumerate() {
            let mut total = Vec3::zero();
            for &(anchor, side) in &anchors {
                let d = (*v - anchor).norm();
                let g = (-(d / spec.sigma).powi(2)).exp();
                if g > 1e-4 {
                    let sx = if spec.mirror_x && side < 0.0 { -1.0 } else { 1.0 };
                    let dir = Vec3::new(sx * spec.dir[0], spec.dir[1], spec.dir[2]).scaled(1.0 / dir_norm);
                    total = total + dir.scaled(spec.amp * g);
                }
            }
            offsets[q] = total;
        }
        blendshapes.push(Blendshape { label: spec.label.to_string(), offsets });
    }

    // Controller table: table order defines the identity-parameter layout.
    let mut controllers = Vec::new();
    for (row, spec) in ROWS.iter().enumerate() {
        for &bone in &row_instances[row] {
            for ch in ALL_CHANNELS {
                let banned = spec.banned.contains(&ch);
                let (lo, hi) = if banned {
                    (ch.neutral_value(), ch.neutral_value())
                } else {
                    match ch {
                        Tx | Ty | Tz => (-0.2, 0.2),
                        Rx | Ry | Rz => (-0.3, 0.3),
                        Sx | Sy | Sz => (0.7, 1.3),
                    }
                };
                controllers.push(Controller {
                    name: format!("{}.{}", bone_names[bone], ch.name()),
                    bone,
                    channel: ch,
                    lo,
                    hi,
                    banned,
                });
            }
        }
    }
    let schema = ControllerSchema { controllers };

    let n = vertices.len() as f64;
    let mut centroid = Vec3::zero();
    for v in &vertices {
        centroid = centroid + *v;
    }
    centroid = centroid.scaled(1.0 / n);

    let rig = FaceRig {
        skeleton,
        vertices,
        triangles,
        albedo,
        binding: SkinBinding { influences },
        blendshapes,
        schema,
        landmarks,
        parts,
        neutral_centroid: centroid,
    };
    rig.validate().expect("generated rig must satisfy its invariants");
    rig
}
