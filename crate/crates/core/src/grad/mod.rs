//! Reverse-mode differentiation of the parameter-to-image pipeline.
//!
//! `vjp_render` pulls a per-pixel adjoint back to the 289 facial parameters.
//! Pixel derivatives flow through shading, barycentric interpolation (with
//! the triangle assignment held fixed), projection, pose, skinning, and the
//! controller mapping; changes of triangle assignment contribute zero, so
//! silhouette motion is invisible to the pixel path. The landmark path has no
//! rasterization step and is exact.
//!
//! All adjoints accumulate in double precision.

pub mod fdcheck;

use crate::error::{CoreError, CoreResult};
use crate::raster::{
    landmark_forward, mask_cell_counts, render_fingerprint, Camera, LandmarkForward, MaskStack,
    RenderOutput, ShadingParams, MASK_SIDE,
};
use crate::rig::{FaceRig, FacialParams, PoseCache, SkinCache, POSE_DIM, SKIN_INFLUENCES};
use crate::{Mat4, TransformTrs, Vec3};

/// Per-pixel RGB adjoint (dL/dpixel), same shape as the rendered image.
#[derive(Debug, Clone)]
pub struct AdjointSeed {
    pub rgb: Vec<f64>,
}

impl AdjointSeed {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { rgb: vec![0.0; (width * height * 3) as usize] }
    }
}

/// dL/dφ for the three parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub d_idt: Vec<f64>,
    pub d_exp: Vec<f64>,
    pub d_pose: [f64; POSE_DIM],
}

impl ParamGradient {
    pub fn zeros(idt_dim: usize, exp_dim: usize) -> Self {
        Self { d_idt: vec![0.0; idt_dim], d_exp: vec![0.0; exp_dim], d_pose: [0.0; POSE_DIM] }
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.d_idt.len() + self.d_exp.len() + POSE_DIM);
        v.extend_from_slice(&self.d_idt);
        v.extend_from_slice(&self.d_exp);
        v.extend_from_slice(&self.d_pose);
        v
    }

    pub fn add_scaled(&mut self, other: &ParamGradient, scale: f64) {
        for (a, b) in self.d_idt.iter_mut().zip(&other.d_idt) {
            *a += scale * b;
        }
        for (a, b) in self.d_exp.iter_mut().zip(&other.d_exp) {
            *a += scale * b;
        }
        for (a, b) in self.d_pose.iter_mut().zip(&other.d_pose) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_idt.iter().chain(&self.d_exp).chain(&self.d_pose).all(|v| v.is_finite())
    }
}

/// Optional adjoints for every differentiable render output.
#[derive(Debug, Clone, Default)]
pub struct RenderSeeds<'a> {
    pub rgb: Option<&'a [f64]>,
    pub masks: Option<&'a MaskStack>,
    pub landmarks: Option<&'a [[f64; 2]]>,
}

/// Pulls a pixel-space adjoint back to the facial parameters. Requires the
/// forward render of the same inputs.
pub fn vjp_render(
    rig: &FaceRig,
    params: &FacialParams,
    camera: &Camera,
    shading: &ShadingParams,
    forward: &RenderOutput,
    seed: &AdjointSeed,
) -> CoreResult<ParamGradient> {
    if seed.rgb.len() != forward.image.data.len() {
        return Err(CoreError::CacheMismatch(format!(
            "seed has {} values, image has {}",
            seed.rgb.len(),
            forward.image.data.len()
        )));
    }
    vjp_render_seeded(
        rig,
        params,
        camera,
        shading,
        forward,
        &RenderSeeds { rgb: Some(&seed.rgb), masks: None, landmarks: None },
    )
}

/// Like [`vjp_render`] but accepts adjoints on pixels, pooled part masks, and
/// the projected landmarks, all in one reverse pass.
pub fn vjp_render_seeded(
    rig: &FaceRig,
    params: &FacialParams,
    camera: &Camera,
    shading: &ShadingParams,
    forward: &RenderOutput,
    seeds: &RenderSeeds,
) -> CoreResult<ParamGradient> {
    if forward.cache.fingerprint != render_fingerprint(params, camera) {
        return Err(CoreError::CacheMismatch(
            "forward cache was computed for different parameters".into(),
        ));
    }
    let cache = &forward.cache;
    let nv = rig.vertices.len();
    let w = camera.width as usize;
    let h = camera.height as usize;

    // Per-vertex adjoints on screen coordinates (sx, sy, z) and unit normals.
    let mut d_screen = vec![[0.0f64; 3]; nv];
    let mut d_units = vec![Vec3::zero(); nv];
    let mut touched = vec![false; nv];

    let cell_counts = if seeds.masks.is_some() { mask_cell_counts(w, h) } else { Vec::new() };
    let light = shading.light_dir;

    for py in 0..h {
        for px in 0..w {
            let frag = &forward.fragments.frags[py * w + px];
            if frag.tri < 0 {
                continue;
            }
            let tri = rig.triangles[frag.tri as usize];
            let b = frag.bary;
            let mut d_b = [0.0f64; 3];

            if let Some(rgb) = seeds.rgb {
                let at = 3 * (py * w + px);
                let g = [rgb[at], rgb[at + 1], rgb[at + 2]];
                if g != [0.0; 3] {
                    // Recompute the shading intermediates for this pixel.
                    let mut alb = [0.0f64; 3];
                    let mut n = Vec3::zero();
                    for k in 0..3 {
                        let v = tri[k] as usize;
                        for ch in 0..3 {
                            alb[ch] += b[k] * rig.albedo[v][ch];
                        }
                        n = n + cache.normals.units[v].scaled(b[k]);
                    }
                    let nn = n.norm().max(1e-30);
                    let n_hat = n.scaled(1.0 / nn);
                    let lam = n_hat.dot(&light).max(0.0);
                    let shade_term = shading.ambient + shading.light_intensity * lam;

                    // Clamp subgradient: saturated channels pass nothing.
                    let mut g_eff = [0.0f64; 3];
                    for ch in 0..3 {
                        let pre = alb[ch] * shade_term;
                        if (0.0..=1.0).contains(&pre) {
                            g_eff[ch] = g[ch];
                        }
                    }

                    let mut d_alb = [0.0f64; 3];
                    let mut d_lam = 0.0;
                    for ch in 0..3 {
                        d_alb[ch] = g_eff[ch] * shade_term;
                        d_lam += g_eff[ch] * alb[ch] * shading.light_intensity;
                    }
                    let d_nhat = if n_hat.dot(&light) > 0.0 {
                        light.scaled(d_lam)
                    } else {
                        Vec3::zero()
                    };
                    let d_n = (d_nhat - n_hat.scaled(n_hat.dot(&d_nhat))).scaled(1.0 / nn);

                    for k in 0..3 {
                        let v = tri[k] as usize;
                        d_units[v] = d_units[v] + d_n.scaled(b[k]);
                        let mut db = d_n.dot(&cache.normals.units[v]);
                        for ch in 0..3 {
                            db += d_alb[ch] * rig.albedo[v][ch];
                        }
                        d_b[k] += db;
                        touched[v] = true;
                    }
                }
            }

            if let Some(masks) = seeds.masks {
                let (cx, cy) = crate::raster::mask_cell(px, py, w, h);
                let cell = cy * MASK_SIDE + cx;
                let count = cell_counts[cell];
                if count > 0.0 {
                    for (p, ch) in masks.channels.iter().enumerate() {
                        let g = ch[cell] / count;
                        if g != 0.0 {
                            for k in 0..3 {
                                if cache.vertex_part[tri[k] as usize] as usize == p {
                                    d_b[k] += g;
                                    touched[tri[k] as usize] = true;
                                }
                            }
                        }
                    }
                }
            }

            if d_b != [0.0; 3] {
                bary_backward(cache, &tri, frag.bary, px, py, &d_b, &mut d_screen);
                for k in 0..3 {
                    touched[tri[k] as usize] = true;
                }
            }
        }
    }

    if let Some(lm) = seeds.landmarks {
        for (j, g) in lm.iter().enumerate() {
            let v = rig.landmarks[j] as usize;
            d_screen[v][0] += g[0];
            d_screen[v][1] += g[1];
            touched[v] = true;
        }
    }

    // Screen and normal adjoints meet on the posed vertices.
    let mut d_posed = vec![Vec3::zero(); nv];
    screen_backward(camera, &cache.pose.posed, &d_screen, &touched, &mut d_posed);
    normals_backward(rig, cache, &d_units, &mut d_posed, &mut touched);

    Ok(lower_backward(rig, params, &cache.skin, &cache.pose, &d_posed, &touched))
}

/// Exact gradients through the landmark projection path only.
pub fn vjp_landmarks(
    rig: &FaceRig,
    params: &FacialParams,
    camera: &Camera,
    seed: &[[f64; 2]],
) -> CoreResult<ParamGradient> {
    if seed.len() != rig.landmarks.len() {
        return Err(CoreError::InvalidParams(format!(
            "{} landmark adjoints for {} landmarks",
            seed.len(),
            rig.landmarks.len()
        )));
    }
    let fwd: LandmarkForward = landmark_forward(rig, params, camera)?;
    let nv = rig.vertices.len();
    let mut d_screen = vec![[0.0f64; 3]; nv];
    let mut touched = vec![false; nv];
    for (j, g) in seed.iter().enumerate() {
        let v = rig.landmarks[j] as usize;
        d_screen[v][0] += g[0];
        d_screen[v][1] += g[1];
        touched[v] = true;
    }
    let mut d_posed = vec![Vec3::zero(); nv];
    screen_backward(camera, &fwd.pose.posed, &d_screen, &touched, &mut d_posed);
    Ok(lower_backward(rig, params, &fwd.skin, &fwd.pose, &d_posed, &touched))
}

/// Perspective-correct barycentric backward: `b_i = (e_i/z_i) / Σ_j e_j/z_j`
/// with the edge functions evaluated at the pixel center.
fn bary_backward(
    cache: &crate::raster::RenderCache,
    tri: &[u32; 3],
    bary: [f64; 3],
    px: usize,
    py: usize,
    d_b: &[f64; 3],
    d_screen: &mut [[f64; 3]],
) {
    let s: Vec<&crate::raster::ScreenVertex> =
        tri.iter().map(|&v| &cache.screen[v as usize]).collect();
    let pxc = px as f64 + 0.5;
    let pyc = py as f64 + 0.5;
    let edge = |a: &crate::raster::ScreenVertex, b: &crate::raster::ScreenVertex| {
        (b.sx - a.sx) * (pyc - a.sy) - (b.sy - a.sy) * (pxc - a.sx)
    };
    let e = [edge(s[1], s[2]), edge(s[2], s[0]), edge(s[0], s[1])];
    let g = [e[0] / s[0].z, e[1] / s[1].z, e[2] / s[2].z];
    let gsum = g[0] + g[1] + g[2];
    debug_assert!((g[0] / gsum - bary[0]).abs() < 1e-9);
    let _ = bary;

    let dot: f64 = (0..3).map(|i| d_b[i] * g[i] / gsum).sum();
    let d_g: Vec<f64> = (0..3).map(|k| (d_b[k] - dot) / gsum).collect();
    let d_e: Vec<f64> = (0..3).map(|k| d_g[k] / s[k].z).collect();
    for k in 0..3 {
        d_screen[tri[k] as usize][2] += -d_g[k] * e[k] / (s[k].z * s[k].z);
    }

    // e0 = edge(s1, s2), e1 = edge(s2, s0), e2 = edge(s0, s1);
    // ∂edge(a,b)/∂a = (b.y − p.y, p.x − b.x), ∂/∂b = (p.y − a.y, a.x − p.x).
    let pairs = [(1usize, 2usize), (2, 0), (0, 1)];
    for (k, (ia, ib)) in pairs.iter().enumerate() {
        let (a, b) = (s[*ia], s[*ib]);
        let de = d_e[k];
        d_screen[tri[*ia] as usize][0] += de * (b.sy - pyc);
        d_screen[tri[*ia] as usize][1] += de * (pxc - b.sx);
        d_screen[tri[*ib] as usize][0] += de * (pyc - a.sy);
        d_screen[tri[*ib] as usize][1] += de * (a.sx - pxc);
    }
}

/// Projection backward: pixel-coordinate and depth adjoints onto world
/// vertices through the rigid camera.
fn screen_backward(
    camera: &Camera,
    posed: &[Vec3],
    d_screen: &[[f64; 3]],
    touched: &[bool],
    d_posed: &mut [Vec3],
) {
    let [r, u, f] = camera.basis();
    for (q, ds) in d_screen.iter().enumerate() {
        if !touched[q] || *ds == [0.0; 3] {
            continue;
        }
        let d = posed[q] - camera.position;
        let pc = Vec3::new(r.dot(&d), u.dot(&d), f.dot(&d));
        let z = pc.z.max(1e-9);
        let d_pcx = camera.focal / z * ds[0];
        let d_pcy = -camera.focal / z * ds[1];
        let d_pcz = -camera.focal * pc.x / (z * z) * ds[0]
            + camera.focal * pc.y / (z * z) * ds[1]
            + ds[2];
        d_posed[q] = d_posed[q] + r.scaled(d_pcx) + u.scaled(d_pcy) + f.scaled(d_pcz);
    }
}

/// Area-weighted normal backward: unit-normal adjoints onto the posed
/// vertices through the cross products.
fn normals_backward(
    rig: &FaceRig,
    cache: &crate::raster::RenderCache,
    d_units: &[Vec3],
    d_posed: &mut [Vec3],
    touched: &mut [bool],
) {
    let nv = rig.vertices.len();
    let mut d_sums = vec![Vec3::zero(); nv];
    let mut any = false;
    for q in 0..nv {
        let du = d_units[q];
        if du.x == 0.0 && du.y == 0.0 && du.z == 0.0 {
            continue;
        }
        any = true;
        let m = cache.normals.sums[q];
        let n = m.norm().max(1e-30);
        let u = cache.normals.units[q];
        d_sums[q] = (du - u.scaled(u.dot(&du))).scaled(1.0 / n);
    }
    if !any {
        return;
    }
    for (fi, tri) in rig.triangles.iter().enumerate() {
        let dn = d_sums[tri[0] as usize] + d_sums[tri[1] as usize] + d_sums[tri[2] as usize];
        if dn.x == 0.0 && dn.y == 0.0 && dn.z == 0.0 {
            continue;
        }
        let a = cache.pose.posed[tri[0] as usize];
        let b = cache.pose.posed[tri[1] as usize];
        let c = cache.pose.posed[tri[2] as usize];
        let e1 = b - a;
        let e2 = c - a;
        let d_e1 = e2.cross(&dn);
        let d_e2 = dn.cross(&e1);
        d_posed[tri[0] as usize] = d_posed[tri[0] as usize] - d_e1 - d_e2;
        d_posed[tri[1] as usize] = d_posed[tri[1] as usize] + d_e1;
        d_posed[tri[2] as usize] = d_posed[tri[2] as usize] + d_e2;
        for &v in tri {
            touched[v as usize] = true;
        }
        let _ = fi;
    }
}

/// Backward from posed-vertex adjoints down to the parameter groups:
/// pose → skinning → bone chain → controller mapping.
fn lower_backward(
    rig: &FaceRig,
    params: &FacialParams,
    skin: &SkinCache,
    pose: &PoseCache,
    d_posed: &[Vec3],
    touched: &[bool],
) -> ParamGradient {
    let nv = rig.vertices.len();
    let nb = rig.skeleton.len();
    let mut grad = ParamGradient::zeros(params.idt.len(), params.exp.len());

    // Pose: y = t + c + R(x − c); dy/dx = R, dy/dR = outer(d_y, x − c).
    let pivot = rig.neutral_centroid;
    let rot = &pose.rotation;
    let mut d_rot = Mat4::zero();
    let mut d_skinned = vec![Vec3::zero(); nv];
    for q in 0..nv {
        if !touched[q] {
            continue;
        }
        let dy = d_posed[q];
        if dy.x == 0.0 && dy.y == 0.0 && dy.z == 0.0 {
            continue;
        }
        grad.d_pose[0] += dy.x;
        grad.d_pose[1] += dy.y;
        grad.d_pose[2] += dy.z;
        let x = skin.skinned[q] - pivot;
        for (row, dyr) in [dy.x, dy.y, dy.z].iter().enumerate() {
            d_rot.m[row][0] += dyr * x.x;
            d_rot.m[row][1] += dyr * x.y;
            d_rot.m[row][2] += dyr * x.z;
        }
        // dy/dx = R, so pull back with R^T.
        d_skinned[q] = Vec3::new(
            rot.m[0][0] * dy.x + rot.m[1][0] * dy.y + rot.m[2][0] * dy.z,
            rot.m[0][1] * dy.x + rot.m[1][1] * dy.y + rot.m[2][1] * dy.z,
            rot.m[0][2] * dy.x + rot.m[1][2] * dy.y + rot.m[2][2] * dy.z,
        );
    }
    let rot_trs = TransformTrs {
        translation: [0.0; 3],
        rotation: [params.pose[3], params.pose[4], params.pose[5]],
        scale: [1.0; 3],
    };
    let rot_adj = rot_trs.to_matrix_vjp(&d_rot);
    grad.d_pose[3] += rot_adj.rotation[0];
    grad.d_pose[4] += rot_adj.rotation[1];
    grad.d_pose[5] += rot_adj.rotation[2];

    // Skinning: x = p + Σ w (S p − p).
    let mut d_skin_mats = vec![Mat4::zero(); nb];
    let mut d_blended = vec![Vec3::zero(); nv];
    for q in 0..nv {
        if !touched[q] {
            continue;
        }
        let dx = d_skinned[q];
        if dx.x == 0.0 && dx.y == 0.0 && dx.z == 0.0 {
            continue;
        }
        let p = skin.blended[q];
        let inf = &rig.binding.influences[q];
        let mut dp = dx;
        for k in 0..SKIN_INFLUENCES {
            let wgt = inf.weights[k];
            if wgt == 0.0 {
                continue;
            }
            let s = &skin.skin_mats[inf.bones[k] as usize];
            // d/dp of w(Sp − p) = w(M − I).
            let mt_dx = Vec3::new(
                s.m[0][0] * dx.x + s.m[1][0] * dx.y + s.m[2][0] * dx.z,
                s.m[0][1] * dx.x + s.m[1][1] * dx.y + s.m[2][1] * dx.z,
                s.m[0][2] * dx.x + s.m[1][2] * dx.y + s.m[2][2] * dx.z,
            );
            dp = dp + (mt_dx - dx).scaled(wgt);
            let ds = &mut d_skin_mats[inf.bones[k] as usize];
            let ph = [p.x, p.y, p.z, 1.0];
            for (row, dxr) in [dx.x, dx.y, dx.z].iter().enumerate() {
                for col in 0..4 {
                    ds.m[row][col] += wgt * dxr * ph[col];
                }
            }
        }
        d_blended[q] = dp;
    }

    for (j, bs) in rig.blendshapes.iter().enumerate() {
        let mut acc = 0.0;
        for q in 0..nv {
            if touched[q] {
                acc += bs.offsets[q].dot(&d_blended[q]);
            }
        }
        grad.d_exp[j] = acc;
    }

    // Skin matrices: S = W · B with constant B, so dW = dS · B^T.
    let mut d_world = vec![Mat4::zero(); nb];
    for i in 0..nb {
        let ds = &d_skin_mats[i];
        if ds.m.iter().flatten().all(|v| *v == 0.0) {
            continue;
        }
        d_world[i] = ds.matmul(&rig.skeleton.bones[i].bind_pose_inv.transpose());
    }

    // Chain: W_j = W_parent · L_j, reverse topological order.
    let mut d_local = vec![Mat4::zero(); nb];
    for j in (0..nb).rev() {
        let dw = d_world[j];
        if dw.m.iter().flatten().all(|v| *v == 0.0) {
            continue;
        }
        match rig.skeleton.bones[j].parent {
            None => d_local[j] = dw,
            Some(p) => {
                d_local[j] = skin.chain.worlds[p].transpose().matmul(&dw);
                let add = dw.matmul(&skin.chain.locals[j].transpose());
                for r in 0..4 {
                    for c in 0..4 {
                        d_world[p].m[r][c] += add.m[r][c];
                    }
                }
            }
        }
    }

    // Locals: L = rest · D with constant rest, then TRS channel adjoints.
    let mut trs_adjoints = Vec::with_capacity(nb);
    for j in 0..nb {
        let dl = &d_local[j];
        if dl.m.iter().flatten().all(|v| *v == 0.0) {
            trs_adjoints.push(crate::geom::TrsAdjoint::default());
            continue;
        }
        let dd = rig.skeleton.bones[j].rest.to_matrix().transpose().matmul(dl);
        trs_adjoints.push(skin.deltas.trs[j].to_matrix_vjp(&dd));
    }

    // Controllers: value = lo + φ(hi − lo); clamped coordinates pass nothing.
    for (slot, ctrl) in rig.schema.active().enumerate() {
        let phi = params.idt[slot];
        if (0.0..=1.0).contains(&phi) {
            grad.d_idt[slot] =
                ctrl.channel.read_adjoint(&trs_adjoints[ctrl.bone]) * (ctrl.hi - ctrl.lo);
        }
    }

    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::render;
    use crate::rig::generator::generate_default_rig;

    fn setup() -> (FaceRig, Camera, ShadingParams, FacialParams) {
        let rig = generate_default_rig(7);
        let camera = Camera::default_for(64, 64);
        let shading = ShadingParams::default();
        let mut params = FacialParams::neutral();
        params.idt[10] = 0.7;
        params.exp[7] = 0.3;
        params.pose = [0.05, -0.02, 0.0, 0.02, -0.03, 0.01];
        (rig, camera, shading, params)
    }

    #[test]
    fn zero_seed_gives_zero_gradient() {
        let (rig, camera, shading, params) = setup();
        let out = render(&rig, &params, &camera, &shading).unwrap();
        let seed = AdjointSeed::zeros(64, 64);
        let g = vjp_render(&rig, &params, &camera, &shading, &out, &seed).unwrap();
        assert!(g.d_idt.iter().all(|v| *v == 0.0));
        assert!(g.d_exp.iter().all(|v| *v == 0.0));
        assert!(g.d_pose.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn background_only_seed_gives_zero_gradient() {
        let (rig, camera, shading, params) = setup();
        let out = render(&rig, &params, &camera, &shading).unwrap();
        let mut seed = AdjointSeed::zeros(64, 64);
        for (i, frag) in out.fragments.frags.iter().enumerate() {
            if frag.tri < 0 {
                seed.rgb[3 * i] = 1.0;
                seed.rgb[3 * i + 1] = -0.5;
                seed.rgb[3 * i + 2] = 0.25;
            }
        }
        let g = vjp_render(&rig, &params, &camera, &shading, &out, &seed).unwrap();
        assert!(g.d_idt.iter().all(|v| *v == 0.0));
        assert!(g.d_exp.iter().all(|v| *v == 0.0));
        assert!(g.d_pose.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let (rig, camera, shading, params) = setup();
        let out = render(&rig, &params, &camera, &shading).unwrap();
        let mut other = params.clone();
        other.idt[0] = 0.9;
        let seed = AdjointSeed::zeros(64, 64);
        let err = vjp_render(&rig, &other, &camera, &shading, &out, &seed);
        assert!(matches!(err, Err(CoreError::CacheMismatch(_))));
    }

    #[test]
    fn vjp_is_linear_in_the_seed() {
        let (rig, camera, shading, params) = setup();
        let out = render(&rig, &params, &camera, &shading).unwrap();
        let n = out.image.data.len();
        let mut s1 = AdjointSeed::zeros(64, 64);
        let mut s2 = AdjointSeed::zeros(64, 64);
        let mut v = 0.123f64;
        for i in 0..n {
            v = (v * 5.7 + 0.31).fract();
            s1.rgb[i] = v - 0.5;
            v = (v * 3.3 + 0.17).fract();
            s2.rgb[i] = v - 0.5;
        }
        let (a, b) = (0.7, -1.3);
        let mut combo = AdjointSeed::zeros(64, 64);
        for i in 0..n {
            combo.rgb[i] = a * s1.rgb[i] + b * s2.rgb[i];
        }
        let g1 = vjp_render(&rig, &params, &camera, &shading, &out, &s1).unwrap();
        let g2 = vjp_render(&rig, &params, &camera, &shading, &out, &s2).unwrap();
        let gc = vjp_render(&rig, &params, &camera, &shading, &out, &combo).unwrap();
        let lin = {
            let mut g = ParamGradient::zeros(g1.d_idt.len(), g1.d_exp.len());
            g.add_scaled(&g1, a);
            g.add_scaled(&g2, b);
            g
        };
        for (x, y) in gc.concat().iter().zip(lin.concat()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn landmark_seed_zero_gives_zero() {
        let (rig, camera, _shading, params) = setup();
        let seed = vec![[0.0; 2]; 68];
        let g = vjp_landmarks(&rig, &params, &camera, &seed).unwrap();
        assert!(g.concat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mean_landmark_x_increases_with_tx() {
        // Pixel u grows opposite world +x under the default camera, so the
        // gradient of mean landmark x w.r.t. pose tx is negative here; what
        // matters is a consistent, nonzero monotone response.
        let (rig, camera, _shading, params) = setup();
        let seed = vec![[1.0 / 68.0, 0.0]; 68];
        let g = vjp_landmarks(&rig, &params, &camera, &seed).unwrap();
        assert!(g.d_pose[0].abs() > 1e-6);
        // Finite-difference sign check.
        let f = |tx: f64| {
            let mut p = params.clone();
            p.pose[0] = tx;
            let fwd = landmark_forward(&rig, &p, &camera).unwrap();
            fwd.landmarks2d.iter().map(|l| l[0]).sum::<f64>() / 68.0
        };
        let h = 1e-4;
        let numeric = (f(params.pose[0] + h) - f(params.pose[0] - h)) / (2.0 * h);
        assert!((g.d_pose[0] - numeric).abs() / numeric.abs().max(1e-9) < 1e-6);
    }
}
