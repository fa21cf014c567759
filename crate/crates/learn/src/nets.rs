//! Dense networks: the attention-gated parameter translators, the four-layer
//! discriminator, initialization, and the checkpoint format.
//!
//! Both translators share one trunk and attention gate; they differ only in
//! their prediction heads. The reference head emits identity and pose alone,
//! so its output carries no expression group by construction. Head ranges
//! hold for any finite input: sigmoid for identity/expression, a scaled tanh
//! for pose.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{LearnError, LearnResult};
use rigdiff_core::rig::{FacialParams, EXP_DIM, IDT_DIM, POSE_DIM};

pub const FEATURE_DIM: usize = 512;
pub const TRUNK_DIM: usize = 512;
pub const GATE_GROUPS: usize = 8;
const SEGMENT: usize = TRUNK_DIM / GATE_GROUPS;

/// Pose head scale: tanh output stretched to the legal pose ranges.
pub const POSE_SCALE: [f64; POSE_DIM] = [
    3.0,
    3.0,
    3.0,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
];

/// One named parameter block with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub g: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
            w: vec![0.0; rows * cols],
            g: vec![0.0; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.g {
            *g = 0.0;
        }
    }
}

/// `y = W·x + b` with relu/sigmoid/tanh applied by the caller.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn zeros(name: &str, input: usize, output: usize) -> Self {
        Self {
            w: Tensor::zeros(&format!("{name}.w"), output, input),
            b: Tensor::zeros(&format!("{name}.b"), output, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut z = self.b.w.clone();
        for r in 0..self.w.rows {
            let row = &self.w.w[r * self.w.cols..(r + 1) * self.w.cols];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            z[r] += acc;
        }
        z
    }

    /// Pulls `dz` back to the input; optionally accumulates parameter grads.
    pub fn backward(&mut self, x: &[f64], dz: &[f64], accumulate: bool) -> Vec<f64> {
        let mut dx = vec![0.0; self.input_dim()];
        for r in 0..self.w.rows {
            let row = &self.w.w[r * self.w.cols..(r + 1) * self.w.cols];
            let d = dz[r];
            if d != 0.0 {
                for (c, wi) in row.iter().enumerate() {
                    dx[c] += wi * d;
                }
            }
        }
        if accumulate {
            for r in 0..self.w.rows {
                let d = dz[r];
                if d != 0.0 {
                    let grow = &mut self.w.g[r * self.w.cols..(r + 1) * self.w.cols];
                    for (c, xi) in x.iter().enumerate() {
                        grow[c] += d * xi;
                    }
                }
                self.b.g[r] += d;
            }
        }
        dx
    }

    pub fn backward_input_only(&self, dz: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input_dim()];
        for r in 0..self.w.rows {
            let row = &self.w.w[r * self.w.cols..(r + 1) * self.w.cols];
            let d = dz[r];
            if d != 0.0 {
                for (c, wi) in row.iter().enumerate() {
                    dx[c] += wi * d;
                }
            }
        }
        dx
    }
}

pub fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.max(0.0)).collect()
}

pub fn relu_backward(z: &[f64], da: &[f64]) -> Vec<f64> {
    z.iter().zip(da).map(|(zi, d)| if *zi > 0.0 { *d } else { 0.0 }).collect()
}

pub fn sigmoid(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
}

pub fn sigmoid_backward(a: &[f64], da: &[f64]) -> Vec<f64> {
    a.iter().zip(da).map(|(ai, d)| d * ai * (1.0 - ai)).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn softmax_backward(s: &[f64], ds: &[f64]) -> Vec<f64> {
    let dot: f64 = s.iter().zip(ds).map(|(a, b)| a * b).sum();
    s.iter().zip(ds).map(|(si, di)| si * (di - dot)).collect()
}

/// Which prediction heads to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Translator {
    Pred,
    Ref,
}

/// Both parameter translators: shared trunk and attention gate, separate
/// heads.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub trunk1: Dense,
    pub trunk2: Dense,
    pub gate: Dense,
    pub pred_idt: Dense,
    pub pred_exp: Dense,
    pub pred_pose: Dense,
    pub ref_idt: Dense,
    pub ref_pose: Dense,
}

/// Forward activations of one translator pass, kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct TranslatorCache {
    pub which: Translator,
    pub x: Vec<f64>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub gate_scores: Vec<f64>,
    pub gated: Vec<f64>,
    pub idt: Vec<f64>,
    pub exp: Vec<f64>,
    pub pose_tanh: [f64; POSE_DIM],
}

impl Predictor {
    pub fn zeros() -> Self {
        Self {
            trunk1: Dense::zeros("trunk1", FEATURE_DIM, TRUNK_DIM),
            trunk2: Dense::zeros("trunk2", TRUNK_DIM, TRUNK_DIM),
            gate: Dense::zeros("gate", TRUNK_DIM, GATE_GROUPS),
            pred_idt: Dense::zeros("pred_idt", TRUNK_DIM, IDT_DIM),
            pred_exp: Dense::zeros("pred_exp", TRUNK_DIM, EXP_DIM),
            pred_pose: Dense::zeros("pred_pose", TRUNK_DIM, POSE_DIM),
            ref_idt: Dense::zeros("ref_idt", TRUNK_DIM, IDT_DIM),
            ref_pose: Dense::zeros("ref_pose", TRUNK_DIM, POSE_DIM),
        }
    }

    /// Deterministic fan-in-scaled uniform initialization.
    pub fn init(seed: u64) -> Self {
        let mut net = Self::zeros();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for t in net.dense_layers_mut() {
            let scale = (3.0 / t.w.cols as f64).sqrt();
            for v in &mut t.w.w {
                *v = rng.gen_range(-scale..scale);
            }
            // Biases start at zero.
        }
        net
    }

    fn dense_layers_mut(&mut self) -> Vec<&mut Dense> {
        vec![
            &mut self.trunk1,
            &mut self.trunk2,
            &mut self.gate,
            &mut self.pred_idt,
            &mut self.pred_exp,
            &mut self.pred_pose,
            &mut self.ref_idt,
            &mut self.ref_pose,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for d in self.dense_layers_mut() {
            let (w, b) = (&mut d.w, &mut d.b);
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.trunk1.w, &self.trunk1.b,
            &self.trunk2.w, &self.trunk2.b,
            &self.gate.w, &self.gate.b,
            &self.pred_idt.w, &self.pred_idt.b,
            &self.pred_exp.w, &self.pred_exp.b,
            &self.pred_pose.w, &self.pred_pose.b,
            &self.ref_idt.w, &self.ref_idt.b,
            &self.ref_pose.w, &self.ref_pose.b,
        ]
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    /// Runs the shared trunk and the chosen head set. The reference
    /// translator's expression group is identically zero.
    pub fn forward(&self, which: Translator, features: &[f64]) -> LearnResult<(FacialParams, TranslatorCache)> {
        if features.len() != FEATURE_DIM {
            return Err(LearnError::ShapeMismatch(format!(
                "feature length {} != {FEATURE_DIM}",
                features.len()
            )));
        }
        let z1 = self.trunk1.forward(features);
        let a1 = relu(&z1);
        let z2 = self.trunk2.forward(&a1);
        let a2 = relu(&z2);
        let gate_logits = self.gate.forward(&a2);
        let gate_scores = softmax(&gate_logits);
        let mut gated = vec![0.0; TRUNK_DIM];
        for k in 0..GATE_GROUPS {
            let s = gate_scores[k];
            for i in 0..SEGMENT {
                gated[k * SEGMENT + i] = s * a2[k * SEGMENT + i];
            }
        }

        let (idt_layer, pose_layer) = match which {
            Translator::Pred => (&self.pred_idt, &self.pred_pose),
            Translator::Ref => (&self.ref_idt, &self.ref_pose),
        };
        let idt = sigmoid(&idt_layer.forward(&gated));
        let exp = match which {
            Translator::Pred => sigmoid(&self.pred_exp.forward(&gated)),
            Translator::Ref => vec![0.0; EXP_DIM],
        };
        let pose_z = pose_layer.forward(&gated);
        let mut pose_tanh = [0.0; POSE_DIM];
        let mut pose = [0.0; POSE_DIM];
        for i in 0..POSE_DIM {
            pose_tanh[i] = pose_z[i].tanh();
            pose[i] = POSE_SCALE[i] * pose_tanh[i];
        }

        let params = FacialParams { idt: idt.clone(), exp: exp.clone(), pose };
        let cache = TranslatorCache {
            which,
            x: features.to_vec(),
            z1,
            a1,
            z2,
            a2,
            gate_scores,
            gated,
            idt,
            exp,
            pose_tanh,
        };
        Ok((params, cache))
    }

    /// Reverse pass from parameter-space adjoints. Accumulates parameter
    /// gradients when `accumulate` is set and returns the feature adjoint.
    /// The reference translator ignores `d_exp`.
    pub fn backward(
        &mut self,
        cache: &TranslatorCache,
        d_idt: &[f64],
        d_exp: &[f64],
        d_pose: &[f64; POSE_DIM],
        accumulate: bool,
    ) -> Vec<f64> {
        let mut d_gated = vec![0.0; TRUNK_DIM];

        // Heads.
        let dz_idt = sigmoid_backward(&cache.idt, d_idt);
        let idt_layer = match cache.which {
            Translator::Pred => &mut self.pred_idt,
            Translator::Ref => &mut self.ref_idt,
        };
        for (a, b) in d_gated.iter_mut().zip(idt_layer.backward(&cache.gated, &dz_idt, accumulate)) {
            *a += b;
        }
        if cache.which == Translator::Pred {
            let dz_exp = sigmoid_backward(&cache.exp, d_exp);
            for (a, b) in d_gated
                .iter_mut()
                .zip(self.pred_exp.backward(&cache.gated, &dz_exp, accumulate))
            {
                *a += b;
            }
        }
        let mut dz_pose = vec![0.0; POSE_DIM];
        for i in 0..POSE_DIM {
            let t = cache.pose_tanh[i];
            dz_pose[i] = d_pose[i] * POSE_SCALE[i] * (1.0 - t * t);
        }
        let pose_layer = match cache.which {
            Translator::Pred => &mut self.pred_pose,
            Translator::Ref => &mut self.ref_pose,
        };
        for (a, b) in d_gated.iter_mut().zip(pose_layer.backward(&cache.gated, &dz_pose, accumulate)) {
            *a += b;
        }

        // Gating: gated = score[k] · a2, plus the gate network itself.
        let mut d_a2 = vec![0.0; TRUNK_DIM];
        let mut d_scores = vec![0.0; GATE_GROUPS];
        for k in 0..GATE_GROUPS {
            let s = cache.gate_scores[k];
            for i in 0..SEGMENT {
                let at = k * SEGMENT + i;
                d_a2[at] += s * d_gated[at];
                d_scores[k] += cache.a2[at] * d_gated[at];
            }
        }
        let d_gate_logits = softmax_backward(&cache.gate_scores, &d_scores);
        for (a, b) in d_a2.iter_mut().zip(self.gate.backward(&cache.a2, &d_gate_logits, accumulate)) {
            *a += b;
        }

        // Trunk.
        let dz2 = relu_backward(&cache.z2, &d_a2);
        let d_a1 = self.trunk2.backward(&cache.a1, &dz2, accumulate);
        let dz1 = relu_backward(&cache.z1, &d_a1);
        self.trunk1.backward(&cache.x, &dz1, accumulate)
    }
}

/// Four-layer discriminator over identity parameters.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub l1: Dense,
    pub l2: Dense,
    pub l3: Dense,
    pub l4: Dense,
}

#[derive(Debug, Clone)]
pub struct DiscCache {
    pub x: Vec<f64>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub z3: Vec<f64>,
    pub a3: Vec<f64>,
    pub prob: f64,
}

impl Discriminator {
    pub fn zeros() -> Self {
        Self {
            l1: Dense::zeros("disc1", IDT_DIM, 256),
            l2: Dense::zeros("disc2", 256, 128),
            l3: Dense::zeros("disc3", 128, 64),
            l4: Dense::zeros("disc4", 64, 1),
        }
    }

    pub fn init(seed: u64) -> Self {
        let mut net = Self::zeros();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for d in [&mut net.l1, &mut net.l2, &mut net.l3, &mut net.l4] {
            let scale = (3.0 / d.w.cols as f64).sqrt();
            for v in &mut d.w.w {
                *v = rng.gen_range(-scale..scale);
            }
        }
        net
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for d in [&mut self.l1, &mut self.l2, &mut self.l3, &mut self.l4] {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.l1.w, &self.l1.b,
            &self.l2.w, &self.l2.b,
            &self.l3.w, &self.l3.b,
            &self.l4.w, &self.l4.b,
        ]
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    pub fn forward(&self, idt: &[f64]) -> LearnResult<(f64, DiscCache)> {
        if idt.len() != IDT_DIM {
            return Err(LearnError::ShapeMismatch(format!(
                "discriminator input {} != {IDT_DIM}",
                idt.len()
            )));
        }
        let z1 = self.l1.forward(idt);
        let a1 = relu(&z1);
        let z2 = self.l2.forward(&a1);
        let a2 = relu(&z2);
        let z3 = self.l3.forward(&a2);
        let a3 = relu(&z3);
        let z4 = self.l4.forward(&a3);
        let prob = 1.0 / (1.0 + (-z4[0]).exp());
        Ok((
            prob,
            DiscCache { x: idt.to_vec(), z1, a1, z2, a2, z3, a3, prob },
        ))
    }

    /// Reverse pass from the probability adjoint down to the input.
    pub fn backward(&mut self, cache: &DiscCache, d_prob: f64, accumulate: bool) -> Vec<f64> {
        let dz4 = vec![d_prob * cache.prob * (1.0 - cache.prob)];
        let d_a3 = self.l4.backward(&cache.a3, &dz4, accumulate);
        let dz3 = relu_backward(&cache.z3, &d_a3);
        let d_a2 = self.l3.backward(&cache.a2, &dz3, accumulate);
        let dz2 = relu_backward(&cache.z2, &d_a2);
        let d_a1 = self.l2.backward(&cache.a1, &dz2, accumulate);
        let dz1 = relu_backward(&cache.z1, &d_a1);
        self.l1.backward(&cache.x, &dz1, accumulate)
    }
}

pub const CKPT_HEADER: &[u8] = b"rigdiff-ckpt/1\n";

/// Writes predictor and discriminator tensors as versioned binary.
pub fn save_checkpoint(path: &Path, predictor: &Predictor, disc: &Discriminator) -> LearnResult<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(CKPT_HEADER);
    let tensors: Vec<&Tensor> = predictor.tensors().into_iter().chain(disc.tensors()).collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for v in &t.w {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> LearnResult<(Predictor, Discriminator)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < CKPT_HEADER.len() || &bytes[..CKPT_HEADER.len()] != CKPT_HEADER {
        return Err(LearnError::Checkpoint("bad header".into()));
    }
    let mut at = CKPT_HEADER.len();
    let read_u32 = |bytes: &[u8], at: &mut usize| -> LearnResult<u32> {
        if *at + 4 > bytes.len() {
            return Err(LearnError::Checkpoint("truncated".into()));
        }
        let v = u32::from_le_bytes(bytes[*at..*at + 4].try_into().unwrap());
        *at += 4;
        Ok(v)
    };
    let count = read_u32(&bytes, &mut at)? as usize;
    let mut predictor = Predictor::zeros();
    let mut disc = Discriminator::zeros();
    {
        let mut slots: Vec<&mut Tensor> =
            predictor.tensors_mut().into_iter().collect();
        slots.extend(disc.tensors_mut());
        if count != slots.len() {
            return Err(LearnError::Checkpoint(format!(
                "{count} tensors, expected {}",
                slots.len()
            )));
        }
        for slot in slots {
            let name_len = read_u32(&bytes, &mut at)? as usize;
            if at + name_len > bytes.len() {
                return Err(LearnError::Checkpoint("truncated name".into()));
            }
            let name = String::from_utf8_lossy(&bytes[at..at + name_len]).to_string();
            at += name_len;
            let rows = read_u32(&bytes, &mut at)? as usize;
            let cols = read_u32(&bytes, &mut at)? as usize;
            if name != slot.name || rows != slot.rows || cols != slot.cols {
                return Err(LearnError::Checkpoint(format!(
                    "tensor {name} {rows}x{cols} does not match expected {} {}x{}",
                    slot.name, slot.rows, slot.cols
                )));
            }
            if at + 8 * rows * cols > bytes.len() {
                return Err(LearnError::Checkpoint("truncated payload".into()));
            }
            for v in &mut slot.w {
                *v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
                at += 8;
            }
        }
    }
    if at != bytes.len() {
        return Err(LearnError::Checkpoint("trailing bytes".into()));
    }
    Ok((predictor, disc))
}

/// Checksum over parameter bits; used to assert alternation purity.
pub fn param_checksum(tensors: &[&Tensor]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for t in tensors {
        for v in &t.w {
            hash ^= v.to_bits();
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_are_neutral() {
        let net = Predictor::zeros();
        let features = vec![0.3; FEATURE_DIM];
        let (params, _) = net.forward(Translator::Pred, &features).unwrap();
        assert!(params.idt.iter().all(|v| *v == 0.5));
        assert!(params.exp.iter().all(|v| *v == 0.5));
        assert!(params.pose.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uniform_gate_for_equal_logits() {
        // Zero gate weights give equal logits, hence a uniform softmax.
        let net = Predictor::init(9);
        let features = vec![0.1; FEATURE_DIM];
        let mut test_net = net.clone();
        for v in &mut test_net.gate.w.w {
            *v = 0.0;
        }
        for v in &mut test_net.gate.b.w {
            *v = 0.0;
        }
        let (_, cache) = test_net.forward(Translator::Pred, &features).unwrap();
        for s in &cache.gate_scores {
            assert!((s - 1.0 / GATE_GROUPS as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let net = Predictor::init(17);
        let mut features = vec![0.0; FEATURE_DIM];
        let mut v = 0.456f64;
        for f in &mut features {
            v = (v * 3.91 + 0.123).fract();
            *f = v - 0.5;
        }
        let (params, cache) = net.forward(Translator::Pred, &features).unwrap();

        // Independent naive forward.
        let dense = |d: &Dense, x: &[f64]| -> Vec<f64> {
            (0..d.w.rows)
                .map(|r| {
                    let mut acc = d.b.w[r];
                    for c in 0..d.w.cols {
                        acc += d.w.w[r * d.w.cols + c] * x[c];
                    }
                    acc
                })
                .collect()
        };
        let a1: Vec<f64> = dense(&net.trunk1, &features).iter().map(|z| z.max(0.0)).collect();
        let a2: Vec<f64> = dense(&net.trunk2, &a1).iter().map(|z| z.max(0.0)).collect();
        let logits = dense(&net.gate, &a2);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let es: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let se: f64 = es.iter().sum();
        let mut gated = vec![0.0; TRUNK_DIM];
        for k in 0..GATE_GROUPS {
            for i in 0..SEGMENT {
                gated[k * SEGMENT + i] = es[k] / se * a2[k * SEGMENT + i];
            }
        }
        let idt: Vec<f64> = dense(&net.pred_idt, &gated)
            .iter()
            .map(|z| 1.0 / (1.0 + (-z).exp()))
            .collect();
        for (a, b) in idt.iter().zip(&params.idt) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in gated.iter().zip(&cache.gated) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn head_ranges_hold_for_wild_inputs() {
        let net = Predictor::init(5);
        let features = vec![250.0; FEATURE_DIM];
        for which in [Translator::Pred, Translator::Ref] {
            let (params, _) = net.forward(which, &features).unwrap();
            assert!(params.validate().is_ok());
        }
    }

    #[test]
    fn ref_head_emits_no_expression() {
        let net = Predictor::init(5);
        let features = vec![0.7; FEATURE_DIM];
        let (params, _) = net.forward(Translator::Ref, &features).unwrap();
        assert!(params.exp.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_final_layer_discriminator_says_half() {
        let mut d = Discriminator::init(3);
        for v in &mut d.l4.w.w {
            *v = 0.0;
        }
        d.l4.b.w[0] = 0.0;
        let (p, _) = d.forward(&vec![0.37; IDT_DIM]).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn discriminator_is_monotone_in_its_logit() {
        let d = Discriminator::init(3);
        let (p, cache) = d.forward(&vec![0.4; IDT_DIM]).unwrap();
        assert!(p > 0.0 && p < 1.0);
        // Raising the final bias raises the probability.
        let mut d2 = d.clone();
        d2.l4.b.w[0] += 1.0;
        let (p2, _) = d2.forward(&cache.x).unwrap();
        assert!(p2 > p);
    }

    #[test]
    fn discriminator_matches_oracle_forward() {
        let d = Discriminator::init(21);
        let mut x = vec![0.0; IDT_DIM];
        let mut v = 0.71f64;
        for xi in &mut x {
            v = (v * 5.13 + 0.217).fract();
            *xi = v;
        }
        let (p, _) = d.forward(&x).unwrap();
        let dense = |l: &Dense, x: &[f64]| -> Vec<f64> {
            (0..l.w.rows)
                .map(|r| {
                    let mut acc = l.b.w[r];
                    for c in 0..l.w.cols {
                        acc += l.w.w[r * l.w.cols + c] * x[c];
                    }
                    acc
                })
                .collect()
        };
        let a1: Vec<f64> = dense(&d.l1, &x).iter().map(|z| z.max(0.0)).collect();
        let a2: Vec<f64> = dense(&d.l2, &a1).iter().map(|z| z.max(0.0)).collect();
        let a3: Vec<f64> = dense(&d.l3, &a2).iter().map(|z| z.max(0.0)).collect();
        let z4 = dense(&d.l4, &a3)[0];
        let oracle = 1.0 / (1.0 + (-z4).exp());
        assert!((p - oracle).abs() < 1e-14);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = Predictor::init(7);
        let b = Predictor::init(7);
        let c = Predictor::init(8);
        assert_eq!(param_checksum(&a.tensors()), param_checksum(&b.tensors()));
        assert_ne!(param_checksum(&a.tensors()), param_checksum(&c.tensors()));
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let net = Predictor::init(123);
        for d in [&net.trunk1, &net.trunk2, &net.pred_idt] {
            let fan_in = d.w.cols as f64;
            let mean: f64 = d.w.w.iter().sum::<f64>() / d.w.w.len() as f64;
            let var: f64 =
                d.w.w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d.w.w.len() as f64;
            let expected = 1.0 / fan_in;
            assert!(
                (var - expected).abs() / expected < 0.2,
                "{}: var {var} vs {expected}",
                d.w.name
            );
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_bits() {
        let dir = std::env::temp_dir().join("rigdiff-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.ckpt");
        let p = Predictor::init(31);
        let d = Discriminator::init(32);
        save_checkpoint(&path, &p, &d).unwrap();
        let (p2, d2) = load_checkpoint(&path).unwrap();
        assert_eq!(param_checksum(&p.tensors()), param_checksum(&p2.tensors()));
        assert_eq!(param_checksum(&d.tensors()), param_checksum(&d2.tensors()));
        let bytes1 = std::fs::read(&path).unwrap();
        save_checkpoint(&path, &p2, &d2).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }
}
