//! Bone-driven face model: controller schema, skeleton, 4-bone linear blend
//! skinning with additive expression bases, rigid pose, and landmark gather.
//!
//! Dataflow for one evaluation:
//!
//! ```text
//! idt (261) --schema--> per-bone TRS deltas --chain--> world matrices
//! exp (22)  --bases---> blended rest mesh  --skin----> world vertices
//! pose (6)  --rigid transform about the neutral centroid--> posed vertices
//! ```
//!
//! Bone local matrices are `rest · delta`; controller midpoints therefore map
//! to the bind pose. Skinning and pose use the delta form
//! `v' = p + Σ w_i (S_i p − p)` which is algebraically the weighted transform
//! sum but reproduces inputs bit-exactly when every transform is identity.

pub mod generator;
pub mod io;

use crate::error::{CoreError, CoreResult};
use crate::geom::TrsAdjoint;
use crate::{Mat4, TransformTrs, Vec3};

pub const IDT_DIM: usize = 261;
pub const EXP_DIM: usize = 22;
pub const POSE_DIM: usize = 6;
pub const SKIN_INFLUENCES: usize = 4;
pub const LANDMARK_COUNT: usize = 68;
pub const POSE_TRANSLATION_BOUND: f64 = 3.0;
pub const POSE_ROTATION_BOUND: f64 = std::f64::consts::FRAC_PI_2;

/// One of the nine TRS channels a controller can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Tx,
    Ty,
    Tz,
    Rx,
    Ry,
    Rz,
    Sx,
    Sy,
    Sz,
}

pub const ALL_CHANNELS: [Channel; 9] = [
    Channel::Tx,
    Channel::Ty,
    Channel::Tz,
    Channel::Rx,
    Channel::Ry,
    Channel::Rz,
    Channel::Sx,
    Channel::Sy,
    Channel::Sz,
];

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Tx => "tx",
            Channel::Ty => "ty",
            Channel::Tz => "tz",
            Channel::Rx => "rx",
            Channel::Ry => "ry",
            Channel::Rz => "rz",
            Channel::Sx => "sx",
            Channel::Sy => "sy",
            Channel::Sz => "sz",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL_CHANNELS.iter().copied().find(|c| c.name() == s)
    }

    /// The channel value when no controller drives it.
    pub fn neutral_value(self) -> f64 {
        match self {
            Channel::Sx | Channel::Sy | Channel::Sz => 1.0,
            _ => 0.0,
        }
    }

    fn write(self, trs: &mut TransformTrs, v: f64) {
        match self {
            Channel::Tx => trs.translation[0] = v,
            Channel::Ty => trs.translation[1] = v,
            Channel::Tz => trs.translation[2] = v,
            Channel::Rx => trs.rotation[0] = v,
            Channel::Ry => trs.rotation[1] = v,
            Channel::Rz => trs.rotation[2] = v,
            Channel::Sx => trs.scale[0] = v,
            Channel::Sy => trs.scale[1] = v,
            Channel::Sz => trs.scale[2] = v,
        }
    }

    pub fn read_adjoint(self, adj: &TrsAdjoint<f64>) -> f64 {
        match self {
            Channel::Tx => adj.translation[0],
            Channel::Ty => adj.translation[1],
            Channel::Tz => adj.translation[2],
            Channel::Rx => adj.rotation[0],
            Channel::Ry => adj.rotation[1],
            Channel::Rz => adj.rotation[2],
            Channel::Sx => adj.scale[0],
            Channel::Sy => adj.scale[1],
            Channel::Sz => adj.scale[2],
        }
    }
}

/// One bone of the skeleton. `bind_pose_inv` maps bind-pose world space into
/// the bone's local space at bind time.
#[derive(Debug, Clone)]
pub struct Bone {
    pub name: String,
    pub parent: Option<usize>,
    pub rest: TransformTrs,
    pub bind_pose_inv: Mat4,
}

/// Topologically sorted bone tree with a single root at index 0.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub bones: Vec<Bone>,
}

impl Skeleton {
    pub fn validate(&self) -> CoreResult<()> {
        if self.bones.is_empty() {
            return Err(CoreError::InvalidRig("skeleton has no bones".into()));
        }
        for (i, b) in self.bones.iter().enumerate() {
            match b.parent {
                None => {
                    if i != 0 {
                        return Err(CoreError::InvalidRig(format!(
                            "bone {i} ({}) is a second root",
                            b.name
                        )));
                    }
                }
                Some(p) => {
                    if p >= i {
                        return Err(CoreError::InvalidRig(format!(
                            "bone {i} ({}) has parent {p} >= own id",
                            b.name
                        )));
                    }
                }
            }
            b.rest.validate().map_err(|e| {
                CoreError::InvalidRig(format!("bone {i} ({}) rest: {e}", b.name))
            })?;
            if !b.bind_pose_inv.is_finite() {
                return Err(CoreError::InvalidRig(format!(
                    "bone {i} ({}) bind inverse not finite",
                    b.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bones.is_empty()
    }
}

/// Four bone influences per vertex; weights sum to one.
#[derive(Debug, Clone, Copy)]
pub struct VertexInfluence {
    pub bones: [u16; SKIN_INFLUENCES],
    pub weights: [f64; SKIN_INFLUENCES],
}

#[derive(Debug, Clone)]
pub struct SkinBinding {
    pub influences: Vec<VertexInfluence>,
}

impl SkinBinding {
    pub fn validate(&self, vertex_count: usize, bone_count: usize) -> CoreResult<()> {
        if self.influences.len() != vertex_count {
            return Err(CoreError::InvalidRig(format!(
                "binding covers {} vertices, mesh has {vertex_count}",
                self.influences.len()
            )));
        }
        for (q, inf) in self.influences.iter().enumerate() {
            let mut sum = 0.0;
            for k in 0..SKIN_INFLUENCES {
                if inf.bones[k] as usize >= bone_count {
                    return Err(CoreError::InvalidRig(format!(
                        "vertex {q} references bone {}",
                        inf.bones[k]
                    )));
                }
                if inf.weights[k] < -1e-12 {
                    return Err(CoreError::InvalidRig(format!(
                        "vertex {q} has negative skin weight {}",
                        inf.weights[k]
                    )));
                }
                sum += inf.weights[k];
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(CoreError::InvalidRig(format!(
                    "vertex {q} skin weights sum to {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// Additive per-vertex offset basis, scaled by one expression coefficient.
#[derive(Debug, Clone)]
pub struct Blendshape {
    pub label: String,
    pub offsets: Vec<Vec3>,
}

/// One affine controller driving a single bone channel.
#[derive(Debug, Clone)]
pub struct Controller {
    pub name: String,
    pub bone: usize,
    pub channel: Channel,
    pub lo: f64,
    pub hi: f64,
    pub banned: bool,
}

/// The full controller table. Active controllers, in table order, define the
/// identity-parameter layout; banned ones stay at their neutral channel value.
#[derive(Debug, Clone)]
pub struct ControllerSchema {
    pub controllers: Vec<Controller>,
}

impl ControllerSchema {
    pub fn active(&self) -> impl Iterator<Item = &Controller> {
        self.controllers.iter().filter(|c| !c.banned)
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }

    pub fn validate(&self, bone_count: usize) -> CoreResult<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, c) in self.controllers.iter().enumerate() {
            if c.bone >= bone_count {
                return Err(CoreError::InvalidRig(format!(
                    "controller {i} ({}) references bone {}",
                    c.name, c.bone
                )));
            }
            if !c.banned {
                if !(c.lo < c.hi) {
                    return Err(CoreError::InvalidRig(format!(
                        "controller {i} ({}) has lo {} >= hi {}",
                        c.name, c.lo, c.hi
                    )));
                }
                if !c.lo.is_finite() || !c.hi.is_finite() {
                    return Err(CoreError::InvalidRig(format!(
                        "controller {i} ({}) has non-finite range",
                        c.name
                    )));
                }
            }
            if !seen.insert((c.bone, c.channel.name())) {
                return Err(CoreError::InvalidRig(format!(
                    "duplicate controller for bone {} channel {}",
                    c.bone,
                    c.channel.name()
                )));
            }
        }
        Ok(())
    }
}

/// Named vertex groups used for part masks and the content-loss stand-in.
/// Channel order is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartId {
    Brows = 0,
    Eyes = 1,
    Nose = 2,
    Mouth = 3,
    Skin = 4,
}

pub const PART_COUNT: usize = 5;
pub const PART_NAMES: [&str; PART_COUNT] = ["brows", "eyes", "nose", "mouth", "skin"];

/// The static face asset everything renders from.
#[derive(Debug, Clone)]
pub struct FaceRig {
    pub skeleton: Skeleton,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub albedo: Vec<[f64; 3]>,
    pub binding: SkinBinding,
    pub blendshapes: Vec<Blendshape>,
    pub schema: ControllerSchema,
    pub landmarks: Vec<u32>,
    pub parts: [Vec<u32>; PART_COUNT],
    pub neutral_centroid: Vec3,
}

impl FaceRig {
    pub fn validate(&self) -> CoreResult<()> {
        self.skeleton.validate()?;
        let nv = self.vertices.len();
        if nv == 0 {
            return Err(CoreError::InvalidRig("empty mesh".into()));
        }
        if self.vertices.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidRig("non-finite vertex".into()));
        }
        if self.albedo.len() != nv {
            return Err(CoreError::InvalidRig("albedo length mismatch".into()));
        }
        for t in &self.triangles {
            if t.iter().any(|&i| i as usize >= nv) {
                return Err(CoreError::InvalidRig(format!(
                    "triangle references vertex {:?}",
                    t
                )));
            }
        }
        self.binding.validate(nv, self.skeleton.len())?;
        if self.blendshapes.len() != EXP_DIM {
            return Err(CoreError::InvalidRig(format!(
                "{} blendshapes, expected {EXP_DIM}",
                self.blendshapes.len()
            )));
        }
        for (j, bs) in self.blendshapes.iter().enumerate() {
            if bs.offsets.len() != nv {
                return Err(CoreError::InvalidRig(format!(
                    "blendshape {j} ({}) offset length mismatch",
                    bs.label
                )));
            }
            if bs.offsets.iter().any(|o| !o.is_finite()) {
                return Err(CoreError::InvalidRig(format!(
                    "blendshape {j} ({}) has non-finite offsets",
                    bs.label
                )));
            }
        }
        self.schema.validate(self.skeleton.len())?;
        if self.schema.active_count() != IDT_DIM {
            return Err(CoreError::InvalidRig(format!(
                "{} active controllers, expected {IDT_DIM}",
                self.schema.active_count()
            )));
        }
        if self.landmarks.len() != LANDMARK_COUNT {
            return Err(CoreError::InvalidRig(format!(
                "{} landmark vertices, expected {LANDMARK_COUNT}",
                self.landmarks.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &l in &self.landmarks {
            if l as usize >= nv {
                return Err(CoreError::InvalidRig(format!("landmark vertex {l} invalid")));
            }
            if !seen.insert(l) {
                return Err(CoreError::InvalidRig(format!("landmark vertex {l} repeated")));
            }
        }
        for (p, ids) in self.parts.iter().enumerate() {
            for &i in ids {
                if i as usize >= nv {
                    return Err(CoreError::InvalidRig(format!(
                        "part {} references vertex {i}",
                        PART_NAMES[p]
                    )));
                }
            }
        }
        if !self.neutral_centroid.is_finite() {
            return Err(CoreError::InvalidRig("non-finite centroid".into()));
        }
        Ok(())
    }

    /// Per-vertex one-hot part membership, skin as fallback.
    pub fn vertex_part_table(&self) -> Vec<u8> {
        let mut table = vec![PartId::Skin as u8; self.vertices.len()];
        // Later groups do not override earlier feature groups.
        for p in (0..PART_COUNT).rev() {
            for &v in &self.parts[p] {
                table[v as usize] = p as u8;
            }
        }
        table
    }
}

/// The three parameter groups driving the renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct FacialParams {
    pub idt: Vec<f64>,
    pub exp: Vec<f64>,
    pub pose: [f64; POSE_DIM],
}

impl FacialParams {
    /// Midpoint identity, zero expression, zero pose.
    pub fn neutral() -> Self {
        Self {
            idt: vec![0.5; IDT_DIM],
            exp: vec![0.0; EXP_DIM],
            pose: [0.0; POSE_DIM],
        }
    }

    pub fn validate(&self) -> CoreResult<()> {
        if self.idt.len() != IDT_DIM || self.exp.len() != EXP_DIM {
            return Err(CoreError::InvalidParams(format!(
                "dims {}/{}/{}, expected {IDT_DIM}/{EXP_DIM}/{POSE_DIM}",
                self.idt.len(),
                self.exp.len(),
                POSE_DIM
            )));
        }
        for (i, v) in self.idt.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(CoreError::InvalidParams(format!("idt[{i}] = {v} out of [0,1]")));
            }
        }
        for (i, v) in self.exp.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(CoreError::InvalidParams(format!("exp[{i}] = {v} out of [0,1]")));
            }
        }
        for i in 0..3 {
            if self.pose[i].abs() > POSE_TRANSLATION_BOUND {
                return Err(CoreError::InvalidParams(format!(
                    "pose translation [{i}] = {} out of bounds",
                    self.pose[i]
                )));
            }
            if self.pose[3 + i].abs() > POSE_ROTATION_BOUND {
                return Err(CoreError::InvalidParams(format!(
                    "pose rotation [{i}] = {} out of bounds",
                    self.pose[3 + i]
                )));
            }
        }
        Ok(())
    }

    pub const CONCAT_DIM: usize = IDT_DIM + EXP_DIM + POSE_DIM;

    /// Flattens as [idt, exp, pose].
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::CONCAT_DIM);
        v.extend_from_slice(&self.idt);
        v.extend_from_slice(&self.exp);
        v.extend_from_slice(&self.pose);
        v
    }

    pub fn from_concat(v: &[f64]) -> CoreResult<Self> {
        if v.len() != Self::CONCAT_DIM {
            return Err(CoreError::InvalidParams(format!(
                "concat length {} != {}",
                v.len(),
                Self::CONCAT_DIM
            )));
        }
        let mut pose = [0.0; POSE_DIM];
        pose.copy_from_slice(&v[IDT_DIM + EXP_DIM..]);
        Ok(Self {
            idt: v[..IDT_DIM].to_vec(),
            exp: v[IDT_DIM..IDT_DIM + EXP_DIM].to_vec(),
            pose,
        })
    }

    /// Clamps every coordinate into its legal range, in place.
    pub fn clamp_in_place(&mut self) {
        for v in &mut self.idt {
            *v = v.clamp(0.0, 1.0);
        }
        for v in &mut self.exp {
            *v = v.clamp(0.0, 1.0);
        }
        for i in 0..3 {
            self.pose[i] = self.pose[i].clamp(-POSE_TRANSLATION_BOUND, POSE_TRANSLATION_BOUND);
            self.pose[3 + i] = self.pose[3 + i].clamp(-POSE_ROTATION_BOUND, POSE_ROTATION_BOUND);
        }
    }
}

/// Controller-derived per-bone TRS deltas.
#[derive(Debug, Clone)]
pub struct BoneDeltas {
    pub trs: Vec<TransformTrs>,
    /// Set when any input coordinate had to be clamped into [0,1].
    pub clamped: bool,
}

/// Maps identity parameters onto bone channels: `value = lo + φ·(hi − lo)`
/// for each active controller, neutral for banned and unmapped channels.
pub fn identity_to_bone_params(
    idt: &[f64],
    schema: &ControllerSchema,
    bone_count: usize,
) -> CoreResult<BoneDeltas> {
    if idt.len() != schema.active_count() {
        return Err(CoreError::InvalidParams(format!(
            "{} identity values for {} active controllers",
            idt.len(),
            schema.active_count()
        )));
    }
    let mut trs = vec![TransformTrs::neutral(); bone_count];
    let mut clamped = false;
    for (slot, ctrl) in schema.active().enumerate() {
        let raw = idt[slot];
        if !raw.is_finite() {
            return Err(CoreError::NonFinite("identity parameter"));
        }
        let phi = if (0.0..=1.0).contains(&raw) {
            raw
        } else {
            clamped = true;
            raw.clamp(0.0, 1.0)
        };
        let value = ctrl.lo + phi * (ctrl.hi - ctrl.lo);
        ctrl.channel.write(&mut trs[ctrl.bone], value);
    }
    Ok(BoneDeltas { trs, clamped })
}

/// Local and accumulated matrices of one skeleton evaluation.
#[derive(Debug, Clone)]
pub struct ChainMatrices {
    pub locals: Vec<Mat4>,
    pub worlds: Vec<Mat4>,
}

/// Accumulates `rest · delta` local matrices down the bone tree.
pub fn chain_matrices(skeleton: &Skeleton, deltas: &[TransformTrs]) -> ChainMatrices {
    let n = skeleton.len();
    assert_eq!(deltas.len(), n, "one TRS delta per bone");
    let mut locals = Vec::with_capacity(n);
    let mut worlds: Vec<Mat4> = Vec::with_capacity(n);
    for (i, bone) in skeleton.bones.iter().enumerate() {
        let local = bone.rest.to_matrix().matmul(&deltas[i].to_matrix());
        let world = match bone.parent {
            None => local,
            Some(p) => worlds[p].matmul(&local),
        };
        locals.push(local);
        worlds.push(world);
    }
    ChainMatrices { locals, worlds }
}

/// Per-bone local-to-world matrices for the given deltas.
pub fn local_to_world(skeleton: &Skeleton, deltas: &[TransformTrs]) -> Vec<Mat4> {
    chain_matrices(skeleton, deltas).worlds
}

/// Everything computed by one skinning pass, kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct SkinCache {
    pub deltas: BoneDeltas,
    pub chain: ChainMatrices,
    /// `world · bind_pose_inv` per bone.
    pub skin_mats: Vec<Mat4>,
    /// Rest mesh plus expression offsets.
    pub blended: Vec<Vec3>,
    /// Skinned world vertices.
    pub skinned: Vec<Vec3>,
}

/// Evaluates blendshapes and 4-bone skinning for every vertex.
pub fn skin_mesh(rig: &FaceRig, idt: &[f64], exp: &[f64]) -> CoreResult<SkinCache> {
    if exp.len() != rig.blendshapes.len() {
        return Err(CoreError::InvalidParams(format!(
            "{} expression values for {} bases",
            exp.len(),
            rig.blendshapes.len()
        )));
    }
    let deltas = identity_to_bone_params(idt, &rig.schema, rig.skeleton.len())?;
    let chain = chain_matrices(&rig.skeleton, &deltas.trs);
    let skin_mats: Vec<Mat4> = rig
        .skeleton
        .bones
        .iter()
        .zip(&chain.worlds)
        .map(|(bone, world)| world.matmul(&bone.bind_pose_inv))
        .collect();

    let mut blended = rig.vertices.clone();
    for (j, coeff) in exp.iter().enumerate() {
        if *coeff != 0.0 {
            let offsets = &rig.blendshapes[j].offsets;
            for (q, out) in blended.iter_mut().enumerate() {
                *out = *out + offsets[q].scaled(*coeff);
            }
        }
    }

    let mut skinned = Vec::with_capacity(blended.len());
    for (q, p) in blended.iter().enumerate() {
        let inf = &rig.binding.influences[q];
        let mut out = *p;
        for k in 0..SKIN_INFLUENCES {
            let w = inf.weights[k];
            if w != 0.0 {
                let moved = skin_mats[inf.bones[k] as usize].transform_point_affine(p);
                out = out + (moved - *p).scaled(w);
            }
        }
        skinned.push(out);
    }

    Ok(SkinCache {
        deltas,
        chain,
        skin_mats,
        blended,
        skinned,
    })
}

/// Rigid pose evaluation artifacts kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct PoseCache {
    /// `Rz·Ry·Rx` as a homogeneous matrix.
    pub rotation: Mat4,
    pub posed: Vec<Vec3>,
}

/// Applies `T(t)·Rz·Ry·Rx` about the given pivot.
pub fn apply_pose(vertices: &[Vec3], pose: &[f64; POSE_DIM], pivot: Vec3) -> PoseCache {
    let rot_trs = TransformTrs {
        translation: [0.0; 3],
        rotation: [pose[3], pose[4], pose[5]],
        scale: [1.0; 3],
    };
    let rotation = rot_trs.to_matrix();
    let t = Vec3::new(pose[0], pose[1], pose[2]);
    let posed = vertices
        .iter()
        .map(|v| {
            let d = *v - pivot;
            let rd = rotation.transform_vector(&d);
            *v + t + (rd - d)
        })
        .collect();
    PoseCache { rotation, posed }
}

/// Gathers the 68 designated landmark vertices.
pub fn landmark_positions(vertices: &[Vec3], rig: &FaceRig) -> Vec<Vec3> {
    rig.landmarks
        .iter()
        .map(|&i| vertices[i as usize])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bone_skeleton(child_offset: [f64; 3], parent_rot: [f64; 3]) -> Skeleton {
        Skeleton {
            bones: vec![
                Bone {
                    name: "root".into(),
                    parent: None,
                    rest: TransformTrs {
                        rotation: parent_rot,
                        ..TransformTrs::neutral()
                    },
                    bind_pose_inv: Mat4::identity(),
                },
                Bone {
                    name: "child".into(),
                    parent: Some(0),
                    rest: TransformTrs::from_translation(child_offset),
                    bind_pose_inv: Mat4::identity(),
                },
            ],
        }
    }

    fn schema(controllers: Vec<Controller>) -> ControllerSchema {
        ControllerSchema { controllers }
    }

    fn ctrl(bone: usize, channel: Channel, lo: f64, hi: f64) -> Controller {
        Controller {
            name: format!("{}:{}", bone, channel.name()),
            bone,
            channel,
            lo,
            hi,
            banned: false,
        }
    }

    #[test]
    fn midpoint_of_symmetric_ranges_is_neutral() {
        let s = schema(vec![
            ctrl(0, Channel::Tx, -0.2, 0.2),
            ctrl(0, Channel::Ry, -0.3, 0.3),
            ctrl(1, Channel::Sz, 0.7, 1.3),
        ]);
        let out = identity_to_bone_params(&[0.5, 0.5, 0.5], &s, 2).unwrap();
        assert!(!out.clamped);
        assert_eq!(out.trs[0].translation[0], 0.0);
        assert_eq!(out.trs[0].rotation[1], 0.0);
        assert_eq!(out.trs[1].scale[2], 1.0);
        // Unmapped channels stay neutral.
        assert_eq!(out.trs[1], TransformTrs {
            scale: [1.0, 1.0, 1.0],
            ..TransformTrs::neutral()
        });
    }

    #[test]
    fn endpoint_maps_to_hi() {
        let s = schema(vec![ctrl(3, Channel::Ty, -0.2, 0.2)]);
        let out = identity_to_bone_params(&[1.0], &s, 4).unwrap();
        assert_eq!(out.trs[3].translation[1], 0.2);
    }

    #[test]
    fn random_idt_matches_scalar_affine_oracle() {
        let s = schema(vec![
            ctrl(0, Channel::Tx, -0.15, 0.25),
            ctrl(0, Channel::Rz, -0.4, 0.1),
            ctrl(1, Channel::Sy, 0.8, 1.1),
            ctrl(1, Channel::Tz, -0.3, 0.3),
        ]);
        let idt = [0.12, 0.77, 0.5, 0.91];
        let out = identity_to_bone_params(&idt, &s, 2).unwrap();
        let expect = |lo: f64, hi: f64, phi: f64| lo + phi * (hi - lo);
        assert_eq!(out.trs[0].translation[0], expect(-0.15, 0.25, 0.12));
        assert_eq!(out.trs[0].rotation[2], expect(-0.4, 0.1, 0.77));
        assert_eq!(out.trs[1].scale[1], expect(0.8, 1.1, 0.5));
        assert_eq!(out.trs[1].translation[2], expect(-0.3, 0.3, 0.91));
    }

    #[test]
    fn out_of_range_phi_clamps_and_flags() {
        let s = schema(vec![ctrl(0, Channel::Tx, -0.2, 0.2)]);
        let out = identity_to_bone_params(&[1.4], &s, 1).unwrap();
        assert!(out.clamped);
        assert_eq!(out.trs[0].translation[0], 0.2);
    }

    #[test]
    fn neutral_chain_accumulates_rests() {
        let sk = two_bone_skeleton([0.0, 1.0, 0.0], [0.0; 3]);
        let worlds = local_to_world(&sk, &vec![TransformTrs::neutral(); 2]);
        assert_eq!(worlds[0], Mat4::identity());
        assert_eq!(
            worlds[1],
            Mat4::from_translation(Vec3::new(0.0, 1.0, 0.0))
        );
    }

    #[test]
    fn rotated_parent_moves_child_origin() {
        // Parent rotated rx = π/2, child offset (0,1,0): child origin lands at (0,0,1).
        let sk = two_bone_skeleton([0.0, 1.0, 0.0], [std::f64::consts::FRAC_PI_2, 0.0, 0.0]);
        let worlds = local_to_world(&sk, &vec![TransformTrs::neutral(); 2]);
        let origin = worlds[1].transform_point(&Vec3::zero()).unwrap();
        assert!((origin.x - 0.0).abs() < 1e-15);
        assert!((origin.y - 0.0).abs() < 1e-15);
        assert!((origin.z - 1.0).abs() < 1e-15);
    }

    #[test]
    fn five_bone_chain_matches_recursive_oracle() {
        let mut bones = Vec::new();
        let mut v = 0.17f64;
        let mut next = move || {
            v = (v * 9.87 + 0.31).fract();
            v - 0.5
        };
        for i in 0..5 {
            bones.push(Bone {
                name: format!("b{i}"),
                parent: if i == 0 { None } else { Some(i - 1) },
                rest: TransformTrs {
                    translation: [next(), next(), next()],
                    rotation: [next(), next(), next()],
                    scale: [1.0 + 0.2 * next(), 1.0 + 0.2 * next(), 1.0 + 0.2 * next()],
                },
                bind_pose_inv: Mat4::identity(),
            });
        }
        let sk = Skeleton { bones };
        let deltas: Vec<TransformTrs> = (0..5)
            .map(|_| TransformTrs {
                translation: [next(), next(), next()],
                rotation: [next(), next(), next()],
                scale: [1.0 + 0.1 * next(), 1.0 + 0.1 * next(), 1.0 + 0.1 * next()],
            })
            .collect();
        let worlds = local_to_world(&sk, &deltas);

        fn world_of(sk: &Skeleton, deltas: &[TransformTrs], k: usize) -> Mat4 {
            let local = sk.bones[k].rest.to_matrix().matmul(&deltas[k].to_matrix());
            match sk.bones[k].parent {
                None => local,
                Some(p) => world_of(sk, deltas, p).matmul(&local),
            }
        }
        for k in 0..5 {
            let oracle = world_of(&sk, &deltas, k);
            for i in 0..4 {
                for j in 0..4 {
                    assert!((worlds[k].m[i][j] - oracle.m[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pose_zero_is_bit_identity() {
        let verts = vec![
            Vec3::new(0.3, -0.4, 0.9),
            Vec3::new(-1.7, 2.2, 0.1),
            Vec3::new(0.0, 0.0, 0.0),
        ];
        let out = apply_pose(&verts, &[0.0; 6], Vec3::new(0.11, 0.22, 0.33));
        assert_eq!(out.posed, verts);
    }

    #[test]
    fn pose_pure_translation_shifts_exactly() {
        let verts = vec![Vec3::new(0.25, -0.5, 1.5), Vec3::new(-2.0, 0.75, -0.25)];
        let out = apply_pose(&verts, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0], Vec3::zero());
        for (a, b) in verts.iter().zip(&out.posed) {
            assert_eq!(b.z, a.z + 1.0);
            assert_eq!(b.x, a.x);
            assert_eq!(b.y, a.y);
        }
    }

    #[test]
    fn pose_rotation_preserves_pairwise_distances() {
        let verts = vec![
            Vec3::new(0.4, 0.1, 0.9),
            Vec3::new(-0.6, 0.8, -0.3),
            Vec3::new(1.2, -0.7, 0.2),
            Vec3::new(0.05, 0.55, -1.1),
        ];
        let out = apply_pose(
            &verts,
            &[0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_4, 0.0],
            Vec3::new(0.2, -0.1, 0.3),
        );
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                let before = (verts[i] - verts[j]).norm();
                let after = (out.posed[i] - out.posed[j]).norm();
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn params_concat_roundtrip() {
        let mut p = FacialParams::neutral();
        p.idt[7] = 0.9;
        p.exp[3] = 0.25;
        p.pose = [0.1, -0.2, 0.3, 0.01, -0.02, 0.03];
        let q = FacialParams::from_concat(&p.concat()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn params_validation_rejects_out_of_range() {
        let mut p = FacialParams::neutral();
        p.idt[0] = 1.2;
        assert!(p.validate().is_err());
        let mut p = FacialParams::neutral();
        p.pose[0] = 4.0;
        assert!(p.validate().is_err());
    }
}
