//! Forward rendering: pinhole projection, z-buffered triangle rasterization
//! with perspective-correct barycentric weights, and Lambertian shading.
//!
//! Rendering is a pure function of its inputs. Rasterization parallelizes
//! over pixel rows; every pixel is owned by exactly one worker, so thread
//! count never changes the output.

pub mod io;

use rayon::prelude::*;

use crate::error::{CoreError, CoreResult};
use crate::rig::{
    apply_pose, landmark_positions, skin_mesh, FaceRig, FacialParams, PoseCache, SkinCache,
    LANDMARK_COUNT, PART_COUNT,
};
use crate::Vec3;

/// Side length of the pooled per-part coverage masks.
pub const MASK_SIDE: usize = 32;

/// Pinhole camera with a rigid pose. `position`/`target`/`up` build a view
/// basis with +z forward; pixel rows grow downward, so world-up maps to
/// smaller row indices.
#[derive(Debug, Clone)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
}

impl Camera {
    /// Frames the default generated head with ~60% vertical coverage.
    pub fn default_for(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            focal: 1.855 * height as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            near: 0.5,
            far: 20.0,
            position: Vec3::new(0.0, 0.05, 6.0),
            target: Vec3::new(0.0, 0.0, 0.0),
            up: Vec3::new(0.0, 1.0, 0.0),
        }
    }

    pub fn validate(&self) -> CoreResult<()> {
        if !(self.focal > 0.0) {
            return Err(CoreError::InvalidCamera("focal must be positive".into()));
        }
        if !(self.near < self.far) {
            return Err(CoreError::InvalidCamera("near must be below far".into()));
        }
        if self.width < 8 || self.height < 8 {
            return Err(CoreError::InvalidCamera("image must be at least 8x8".into()));
        }
        if !(self.position.is_finite() && self.target.is_finite() && self.up.is_finite()) {
            return Err(CoreError::InvalidCamera("non-finite pose".into()));
        }
        Ok(())
    }

    /// Rows of the world-to-camera rotation: right, up, forward.
    pub fn basis(&self) -> [Vec3; 3] {
        let fwd = (self.target - self.position).normalized();
        let right = self.up.cross(&fwd).normalized();
        let cam_up = fwd.cross(&right);
        [right, cam_up, fwd]
    }

    pub fn world_to_cam(&self, p: &Vec3) -> Vec3 {
        let [r, u, f] = self.basis();
        let d = *p - self.position;
        Vec3::new(r.dot(&d), u.dot(&d), f.dot(&d))
    }
}

impl Default for Camera {
    fn default() -> Self {
        Self::default_for(256, 256)
    }
}

/// One directional light plus a constant ambient term.
#[derive(Debug, Clone)]
pub struct ShadingParams {
    /// Unit direction from the surface toward the light.
    pub light_dir: Vec3,
    pub light_intensity: f64,
    pub ambient: f64,
    pub background: f64,
}

impl Default for ShadingParams {
    fn default() -> Self {
        Self {
            light_dir: Vec3::new(-0.35, 0.45, 0.80).normalized(),
            light_intensity: 0.7,
            ambient: 0.35,
            background: 0.5,
        }
    }
}

impl ShadingParams {
    pub fn validate(&self) -> CoreResult<()> {
        if self.light_intensity < 0.0 || self.ambient < 0.0 {
            return Err(CoreError::InvalidShading("intensities must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(CoreError::InvalidShading("background must lie in [0,1]".into()));
        }
        let n = self.light_dir.norm();
        if !((n - 1.0).abs() < 1e-6) {
            return Err(CoreError::InvalidShading("light direction must be unit length".into()));
        }
        Ok(())
    }
}

/// H×W×3 image with values in [0,1], row-major, RGB interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ImageBuf {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; (width * height * 3) as usize] }
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self { width, height, data: vec![value; (width * height * 3) as usize] }
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = 3 * (y * self.width + x) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, c: [f64; 3]) {
        let i = 3 * (y * self.width + x) as usize;
        self.data[i] = c[0];
        self.data[i + 1] = c[1];
        self.data[i + 2] = c[2];
    }
}

/// Per-pixel triangle assignment with perspective-correct weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    /// Covering triangle index, or -1 for background.
    pub tri: i32,
    pub bary: [f64; 3],
    pub depth: f64,
}

impl Fragment {
    pub fn empty() -> Self {
        Self { tri: -1, bary: [0.0; 3], depth: f64::INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    pub width: u32,
    pub height: u32,
    pub frags: Vec<Fragment>,
}

impl FragmentBuffer {
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> &Fragment {
        &self.frags[(y * self.width + x) as usize]
    }

    /// True when both buffers assign every pixel to the same triangle.
    pub fn same_assignment(&self, other: &FragmentBuffer) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.frags.iter().zip(&other.frags).all(|(a, b)| a.tri == b.tri)
    }
}

/// Pooled per-part soft coverage, channel order brows/eyes/nose/mouth/skin.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    pub channels: [Vec<f64>; PART_COUNT],
}

impl MaskStack {
    pub fn zeros() -> Self {
        Self { channels: std::array::from_fn(|_| vec![0.0; MASK_SIDE * MASK_SIDE]) }
    }
}

/// Projected vertex: pixel coordinates plus camera-space depth.
#[derive(Debug, Clone, Copy)]
pub struct ScreenVertex {
    pub sx: f64,
    pub sy: f64,
    pub z: f64,
    pub visible: bool,
}

/// Projects world points through the camera; points at or behind the near
/// plane are flagged so their triangles get culled.
pub fn project(camera: &Camera, vertices: &[Vec3]) -> Vec<ScreenVertex> {
    let [r, u, f] = camera.basis();
    vertices
        .iter()
        .map(|p| {
            let d = *p - camera.position;
            let pc = Vec3::new(r.dot(&d), u.dot(&d), f.dot(&d));
            let visible = pc.z > camera.near;
            let z = pc.z.max(1e-9);
            ScreenVertex {
                sx: camera.cx + camera.focal * pc.x / z,
                sy: camera.cy - camera.focal * pc.y / z,
                z,
                visible,
            }
        })
        .collect()
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Z-buffered rasterization at pixel centers. Nearest triangle wins; depth
/// ties break toward the lower triangle index. Degenerate screen-space
/// triangles are skipped.
pub fn rasterize(
    width: u32,
    height: u32,
    triangles: &[[u32; 3]],
    screen: &[ScreenVertex],
) -> FragmentBuffer {
    struct TriSetup {
        id: i32,
        s: [[f64; 2]; 3],
        z: [f64; 3],
        area: f64,
        x0: u32,
        x1: u32,
        y0: u32,
        y1: u32,
    }

    let w = width as f64;
    let h = height as f64;
    let mut setups: Vec<TriSetup> = Vec::new();
    for (id, tri) in triangles.iter().enumerate() {
        let [a, b, c] = [&screen[tri[0] as usize], &screen[tri[1] as usize], &screen[tri[2] as usize]];
        if !(a.visible && b.visible && c.visible) {
            continue;
        }
        let area = edge(a.sx, a.sy, b.sx, b.sy, c.sx, c.sy);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = a.sx.min(b.sx).min(c.sx);
        let max_x = a.sx.max(b.sx).max(c.sx);
        let min_y = a.sy.min(b.sy).min(c.sy);
        let max_y = a.sy.max(b.sy).max(c.sy);
        if max_x < 0.0 || min_x >= w || max_y < 0.0 || min_y >= h {
            continue;
        }
        setups.push(TriSetup {
            id: id as i32,
            s: [[a.sx, a.sy], [b.sx, b.sy], [c.sx, c.sy]],
            z: [a.z, b.z, c.z],
            area,
            x0: min_x.floor().max(0.0) as u32,
            x1: max_x.ceil().min(w - 1.0) as u32,
            y0: min_y.floor().max(0.0) as u32,
            y1: max_y.ceil().min(h - 1.0) as u32,
        });
    }

    let mut row_buckets: Vec<Vec<u32>> = vec![Vec::new(); height as usize];
    for (i, t) in setups.iter().enumerate() {
        for y in t.y0..=t.y1 {
            row_buckets[y as usize].push(i as u32);
        }
    }

    let mut frags = vec![Fragment::empty(); (width * height) as usize];
    frags
        .par_chunks_mut(width as usize)
        .enumerate()
        .for_each(|(y, row)| {
            let py = y as f64 + 0.5;
            for &si in &row_buckets[y] {
                let t = &setups[si as usize];
                for x in t.x0..=t.x1 {
                    let px = x as f64 + 0.5;
                    let e0 = edge(t.s[1][0], t.s[1][1], t.s[2][0], t.s[2][1], px, py);
                    let e1 = edge(t.s[2][0], t.s[2][1], t.s[0][0], t.s[0][1], px, py);
                    let e2 = edge(t.s[0][0], t.s[0][1], t.s[1][0], t.s[1][1], px, py);
                    let inside = if t.area > 0.0 {
                        e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
                    } else {
                        e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
                    };
                    if !inside {
                        continue;
                    }
                    let l0 = e0 / t.area;
                    let l1 = e1 / t.area;
                    let l2 = e2 / t.area;
                    let g0 = l0 / t.z[0];
                    let g1 = l1 / t.z[1];
                    let g2 = l2 / t.z[2];
                    let gsum = g0 + g1 + g2;
                    let depth = 1.0 / gsum;
                    let cur = &mut row[x as usize];
                    if depth < cur.depth || (depth == cur.depth && t.id < cur.tri) {
                        *cur = Fragment {
                            tri: t.id,
                            bary: [g0 / gsum, g1 / gsum, g2 / gsum],
                            depth,
                        };
                    }
                }
            }
        });

    FragmentBuffer { width, height, frags }
}

/// Area-weighted face-normal accumulation per vertex.
#[derive(Debug, Clone)]
pub struct NormalCache {
    /// Unnormalized face normals (cross products).
    pub face_normals: Vec<Vec3>,
    /// Per-vertex normal sums before normalization.
    pub sums: Vec<Vec3>,
    /// Unit vertex normals.
    pub units: Vec<Vec3>,
}

pub fn vertex_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> NormalCache {
    let mut face_normals = Vec::with_capacity(triangles.len());
    let mut sums = vec![Vec3::zero(); vertices.len()];
    for tri in triangles {
        let a = vertices[tri[0] as usize];
        let b = vertices[tri[1] as usize];
        let c = vertices[tri[2] as usize];
        let n = (b - a).cross(&(c - a));
        face_normals.push(n);
        for &v in tri {
            sums[v as usize] = sums[v as usize] + n;
        }
    }
    let units = sums
        .iter()
        .map(|m| {
            let n = m.norm().max(1e-30);
            m.scaled(1.0 / n)
        })
        .collect();
    NormalCache { face_normals, sums, units }
}

/// Lambertian shading of a fragment buffer.
pub fn shade(
    frags: &FragmentBuffer,
    triangles: &[[u32; 3]],
    albedo: &[[f64; 3]],
    unit_normals: &[Vec3],
    shading: &ShadingParams,
) -> ImageBuf {
    let mut img = ImageBuf::new(frags.width, frags.height);
    let l = shading.light_dir;
    img.data
        .par_chunks_mut(3 * frags.width as usize)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..frags.width as usize {
                let frag = &frags.frags[y * frags.width as usize + x];
                let c = if frag.tri < 0 {
                    [shading.background; 3]
                } else {
                    let tri = &triangles[frag.tri as usize];
                    let mut alb = [0.0; 3];
                    let mut n = Vec3::zero();
                    for k in 0..3 {
                        let v = tri[k] as usize;
                        let b = frag.bary[k];
                        for ch in 0..3 {
                            alb[ch] += b * albedo[v][ch];
                        }
                        n = n + unit_normals[v].scaled(b);
                    }
                    let nn = n.norm().max(1e-30);
                    let lam = (n.dot(&l) / nn).max(0.0);
                    let shade = shading.ambient + shading.light_intensity * lam;
                    [
                        (alb[0] * shade).clamp(0.0, 1.0),
                        (alb[1] * shade).clamp(0.0, 1.0),
                        (alb[2] * shade).clamp(0.0, 1.0),
                    ]
                };
                row[3 * x] = c[0];
                row[3 * x + 1] = c[1];
                row[3 * x + 2] = c[2];
            }
        });
    img
}

/// Maps a pixel column/row to its pooled mask cell.
#[inline]
pub fn mask_cell(px: usize, py: usize, width: usize, height: usize) -> (usize, usize) {
    (px * MASK_SIDE / width, py * MASK_SIDE / height)
}

/// Pixel counts per pooled mask cell for the given resolution.
pub fn mask_cell_counts(width: usize, height: usize) -> Vec<f64> {
    let mut counts = vec![0.0; MASK_SIDE * MASK_SIDE];
    for py in 0..height {
        for px in 0..width {
            let (cx, cy) = mask_cell(px, py, width, height);
            counts[cy * MASK_SIDE + cx] += 1.0;
        }
    }
    counts
}

fn part_masks(frags: &FragmentBuffer, triangles: &[[u32; 3]], vertex_part: &[u8]) -> MaskStack {
    let w = frags.width as usize;
    let h = frags.height as usize;
    let counts = mask_cell_counts(w, h);
    let mut masks = MaskStack::zeros();
    for py in 0..h {
        for px in 0..w {
            let frag = &frags.frags[py * w + px];
            if frag.tri < 0 {
                continue;
            }
            let (cx, cy) = mask_cell(px, py, w, h);
            let cell = cy * MASK_SIDE + cx;
            let tri = &triangles[frag.tri as usize];
            for k in 0..3 {
                let part = vertex_part[tri[k] as usize] as usize;
                masks.channels[part][cell] += frag.bary[k];
            }
        }
    }
    for ch in &mut masks.channels {
        for (m, c) in ch.iter_mut().zip(&counts) {
            if *c > 0.0 {
                *m /= *c;
            }
        }
    }
    masks
}

/// Everything the reverse pass needs from one forward render.
#[derive(Debug, Clone)]
pub struct RenderCache {
    pub skin: SkinCache,
    pub pose: PoseCache,
    pub normals: NormalCache,
    pub screen: Vec<ScreenVertex>,
    pub vertex_part: Vec<u8>,
    pub fingerprint: u64,
}

/// Output of the full parameter-to-image chain.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: ImageBuf,
    pub fragments: FragmentBuffer,
    pub landmarks2d: Vec<[f64; 2]>,
    pub masks: MaskStack,
    pub cache: RenderCache,
}

/// Fingerprint tying a cache to the inputs it was computed from.
pub fn render_fingerprint(params: &FacialParams, camera: &Camera) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        hash ^= bits;
        hash = hash.wrapping_mul(0x100000001b3);
    };
    for v in params.idt.iter().chain(&params.exp).chain(&params.pose) {
        eat(v.to_bits());
    }
    eat(camera.width as u64);
    eat(camera.height as u64);
    eat(camera.focal.to_bits());
    hash
}

/// Full chain: identity → bones → skin → pose → project → rasterize → shade,
/// plus projected landmarks and pooled per-part coverage masks.
pub fn render(
    rig: &FaceRig,
    params: &FacialParams,
    camera: &Camera,
    shading: &ShadingParams,
) -> CoreResult<RenderOutput> {
    camera.validate()?;
    shading.validate()?;
    if params.idt.len() != rig.schema.active_count() || params.exp.len() != rig.blendshapes.len() {
        return Err(CoreError::InvalidParams("parameter dims do not match rig".into()));
    }

    let skin = skin_mesh(rig, &params.idt, &params.exp)?;
    let pose = apply_pose(&skin.skinned, &params.pose, rig.neutral_centroid);
    let normals = vertex_normals(&pose.posed, &rig.triangles);
    let screen = project(camera, &pose.posed);
    let fragments = rasterize(camera.width, camera.height, &rig.triangles, &screen);
    let image = shade(&fragments, &rig.triangles, &rig.albedo, &normals.units, shading);
    let vertex_part = rig.vertex_part_table();
    let masks = part_masks(&fragments, &rig.triangles, &vertex_part);
    let landmarks2d = rig
        .landmarks
        .iter()
        .map(|&i| {
            let s = &screen[i as usize];
            [s.sx, s.sy]
        })
        .collect();

    let fingerprint = render_fingerprint(params, camera);
    Ok(RenderOutput {
        image,
        fragments,
        landmarks2d,
        masks,
        cache: RenderCache { skin, pose, normals, screen, vertex_part, fingerprint },
    })
}

/// Projected landmark positions without rasterization, with the caches the
/// exact landmark gradient path needs.
pub struct LandmarkForward {
    pub landmarks2d: Vec<[f64; 2]>,
    pub skin: SkinCache,
    pub pose: PoseCache,
    pub screen_lm: Vec<ScreenVertex>,
}

pub fn landmark_forward(
    rig: &FaceRig,
    params: &FacialParams,
    camera: &Camera,
) -> CoreResult<LandmarkForward> {
    camera.validate()?;
    let skin = skin_mesh(rig, &params.idt, &params.exp)?;
    let pose = apply_pose(&skin.skinned, &params.pose, rig.neutral_centroid);
    let lm_world = landmark_positions(&pose.posed, rig);
    let screen_lm = project(camera, &lm_world);
    let landmarks2d = screen_lm.iter().map(|s| [s.sx, s.sy]).collect();
    assert_eq!(lm_world.len(), LANDMARK_COUNT);
    Ok(LandmarkForward { landmarks2d, skin, pose, screen_lm })
}
