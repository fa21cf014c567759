//! Rig schema and parameter files.
//!
//! Both formats are line-oriented text with a versioned header. Floats are
//! written with Rust's shortest round-trip formatting, so write → read →
//! write is byte-identical.
//!
//! `rigdiff/1` sections, in order: `euler`, `bones`, `vertices`, `triangles`,
//! `skin`, `blendshapes` (sparse per-vertex offsets), `controllers` (table
//! order defines the identity-parameter layout), `landmarks`, five `part`
//! lines, `centroid`, `end`. `rigdiff-params/1` carries the three arrays
//! `idt`, `exp`, `pose`.

use std::fmt::Write as _;
use std::path::Path;

use super::{
    Blendshape, Bone, Channel, Controller, ControllerSchema, FaceRig, FacialParams, SkinBinding,
    Skeleton, VertexInfluence, EXP_DIM, IDT_DIM, LANDMARK_COUNT, PART_COUNT, PART_NAMES, POSE_DIM,
    SKIN_INFLUENCES,
};
use crate::error::{CoreError, CoreResult};
use crate::{Mat4, TransformTrs, Vec3};

pub const RIG_HEADER: &str = "rigdiff/1";
pub const PARAMS_HEADER: &str = "rigdiff-params/1";

pub fn rig_to_string(rig: &FaceRig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{RIG_HEADER}");
    let _ = writeln!(s, "euler zyx-intrinsic column-vector");
    let _ = writeln!(s, "bones {}", rig.skeleton.len());
    for (i, b) in rig.skeleton.bones.iter().enumerate() {
        let parent = b.parent.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
        let _ = write!(s, "b {i} {parent} {}", b.name);
        for v in b.rest.translation.iter().chain(&b.rest.rotation).chain(&b.rest.scale) {
            let _ = write!(s, " {v}");
        }
        for r in 0..4 {
            for c in 0..4 {
                let _ = write!(s, " {}", b.bind_pose_inv.m[r][c]);
            }
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "vertices {}", rig.vertices.len());
    for (v, a) in rig.vertices.iter().zip(&rig.albedo) {
        let _ = writeln!(s, "v {} {} {} {} {} {}", v.x, v.y, v.z, a[0], a[1], a[2]);
    }
    let _ = writeln!(s, "triangles {}", rig.triangles.len());
    for t in &rig.triangles {
        let _ = writeln!(s, "t {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "skin {}", rig.binding.influences.len());
    for inf in &rig.binding.influences {
        let _ = write!(s, "s");
        for k in 0..SKIN_INFLUENCES {
            let _ = write!(s, " {} {}", inf.bones[k], inf.weights[k]);
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "blendshapes {}", rig.blendshapes.len());
    for bs in &rig.blendshapes {
        let nnz = bs.offsets.iter().filter(|o| o.x != 0.0 || o.y != 0.0 || o.z != 0.0).count();
        let _ = writeln!(s, "bs {} {nnz}", bs.label);
        for (q, o) in bs.offsets.iter().enumerate() {
            if o.x != 0.0 || o.y != 0.0 || o.z != 0.0 {
                let _ = writeln!(s, "o {q} {} {} {}", o.x, o.y, o.z);
            }
        }
    }
    let _ = writeln!(s, "controllers {}", rig.schema.controllers.len());
    for c in &rig.schema.controllers {
        let state = if c.banned { "banned" } else { "active" };
        let _ = writeln!(
            s,
            "c {} {} {} {} {state} {}",
            c.bone,
            c.channel.name(),
            c.lo,
            c.hi,
            c.name
        );
    }
    let _ = write!(s, "landmarks");
    for l in &rig.landmarks {
        let _ = write!(s, " {l}");
    }
    let _ = writeln!(s);
    for (p, ids) in rig.parts.iter().enumerate() {
        let _ = write!(s, "part {} {}", PART_NAMES[p], ids.len());
        for id in ids {
            let _ = write!(s, " {id}");
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(
        s,
        "centroid {} {} {}",
        rig.neutral_centroid.x, rig.neutral_centroid.y, rig.neutral_centroid.z
    );
    let _ = writeln!(s, "end");
    s
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { iter: text.lines(), line_no: 0 }
    }

    fn next_tokens(&mut self) -> CoreResult<Vec<&'a str>> {
        loop {
            let line = self.iter.next().ok_or_else(|| CoreError::Parse {
                line: self.line_no,
                msg: "unexpected end of file".into(),
            })?;
            self.line_no += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(trimmed.split_whitespace().collect());
        }
    }

    fn err(&self, msg: impl Into<String>) -> CoreError {
        CoreError::Parse { line: self.line_no, msg: msg.into() }
    }
}

fn parse_f64(lines: &Lines, tok: &str, what: &str) -> CoreResult<f64> {
    tok.parse::<f64>().map_err(|_| lines.err(format!("bad {what}: {tok:?}")))
}

fn parse_usize(lines: &Lines, tok: &str, what: &str) -> CoreResult<usize> {
    tok.parse::<usize>().map_err(|_| lines.err(format!("bad {what}: {tok:?}")))
}

fn expect_section<'a>(lines: &mut Lines<'a>, name: &str) -> CoreResult<Vec<&'a str>> {
    let toks = lines.next_tokens()?;
    if toks.first() != Some(&name) {
        return Err(lines.err(format!("expected section {name:?}, got {:?}", toks.first())));
    }
    Ok(toks)
}

pub fn rig_from_str(text: &str) -> CoreResult<FaceRig> {
    let mut lines = Lines::new(text);
    let header = lines.next_tokens()?;
    if header != [RIG_HEADER] {
        return Err(lines.err(format!("expected {RIG_HEADER} header")));
    }
    let euler = expect_section(&mut lines, "euler")?;
    if euler.get(1) != Some(&"zyx-intrinsic") {
        return Err(lines.err("unsupported euler convention"));
    }

    let toks = expect_section(&mut lines, "bones")?;
    let nbones = parse_usize(&lines, toks.get(1).ok_or_else(|| lines.err("missing bone count"))?, "bone count")?;
    let mut bones = Vec::with_capacity(nbones);
    for i in 0..nbones {
        let t = lines.next_tokens()?;
        if t.len() != 3 + 1 + 9 + 16 || t[0] != "b" {
            return Err(lines.err(format!("bad bone line (expected 29 tokens, got {})", t.len())));
        }
        let id = parse_usize(&lines, t[1], "bone id")?;
        if id != i {
            return Err(lines.err(format!("bone id {id} out of order")));
        }
        let parent = if t[2] == "-" { None } else { Some(parse_usize(&lines, t[2], "parent id")?) };
        let name = t[3].to_string();
        let mut vals = [0.0; 9];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = parse_f64(&lines, t[4 + k], "rest channel")?;
        }
        let mut bpi = Mat4::identity();
        for r in 0..4 {
            for c in 0..4 {
                bpi.m[r][c] = parse_f64(&lines, t[13 + r * 4 + c], "bind inverse entry")?;
            }
        }
        bones.push(Bone {
            name,
            parent,
            rest: TransformTrs {
                translation: [vals[0], vals[1], vals[2]],
                rotation: [vals[3], vals[4], vals[5]],
                scale: [vals[6], vals[7], vals[8]],
            },
            bind_pose_inv: bpi,
        });
    }

    let toks = expect_section(&mut lines, "vertices")?;
    let nverts = parse_usize(&lines, toks[1], "vertex count")?;
    let mut vertices = Vec::with_capacity(nverts);
    let mut albedo = Vec::with_capacity(nverts);
    for _ in 0..nverts {
        let t = lines.next_tokens()?;
        if t.len() != 7 || t[0] != "v" {
            return Err(lines.err("bad vertex line"));
        }
        vertices.push(Vec3::new(
            parse_f64(&lines, t[1], "x")?,
            parse_f64(&lines, t[2], "y")?,
            parse_f64(&lines, t[3], "z")?,
        ));
        albedo.push([
            parse_f64(&lines, t[4], "r")?,
            parse_f64(&lines, t[5], "g")?,
            parse_f64(&lines, t[6], "b")?,
        ]);
    }

    let toks = expect_section(&mut lines, "triangles")?;
    let ntris = parse_usize(&lines, toks[1], "triangle count")?;
    let mut triangles = Vec::with_capacity(ntris);
    for _ in 0..ntris {
        let t = lines.next_tokens()?;
        if t.len() != 4 || t[0] != "t" {
            return Err(lines.err("bad triangle line"));
        }
        triangles.push([
            parse_usize(&lines, t[1], "index")? as u32,
            parse_usize(&lines, t[2], "index")? as u32,
            parse_usize(&lines, t[3], "index")? as u32,
        ]);
    }

    let toks = expect_section(&mut lines, "skin")?;
    let nskin = parse_usize(&lines, toks[1], "skin count")?;
    let mut influences = Vec::with_capacity(nskin);
    for _ in 0..nskin {
        let t = lines.next_tokens()?;
        if t.len() != 1 + 2 * SKIN_INFLUENCES || t[0] != "s" {
            return Err(lines.err("bad skin line"));
        }
        let mut bones_idx = [0u16; SKIN_INFLUENCES];
        let mut weights = [0.0; SKIN_INFLUENCES];
        for k in 0..SKIN_INFLUENCES {
            bones_idx[k] = parse_usize(&lines, t[1 + 2 * k], "bone index")? as u16;
            weights[k] = parse_f64(&lines, t[2 + 2 * k], "weight")?;
        }
        influences.push(VertexInfluence { bones: bones_idx, weights });
    }

    let toks = expect_section(&mut lines, "blendshapes")?;
    let nbs = parse_usize(&lines, toks[1], "blendshape count")?;
    let mut blendshapes = Vec::with_capacity(nbs);
    for _ in 0..nbs {
        let t = lines.next_tokens()?;
        if t.len() != 3 || t[0] != "bs" {
            return Err(lines.err("bad blendshape line"));
        }
        let label = t[1].to_string();
        let nnz = parse_usize(&lines, t[2], "offset count")?;
        let mut offsets = vec![Vec3::zero(); nverts];
        for _ in 0..nnz {
            let o = lines.next_tokens()?;
            if o.len() != 5 || o[0] != "o" {
                return Err(lines.err("bad offset line"));
            }
            let q = parse_usize(&lines, o[1], "vertex id")?;
            if q >= nverts {
                return Err(lines.err(format!("offset vertex {q} out of range")));
            }
            offsets[q] = Vec3::new(
                parse_f64(&lines, o[2], "dx")?,
                parse_f64(&lines, o[3], "dy")?,
                parse_f64(&lines, o[4], "dz")?,
            );
        }
        blendshapes.push(Blendshape { label, offsets });
    }

    let toks = expect_section(&mut lines, "controllers")?;
    let nctrl = parse_usize(&lines, toks[1], "controller count")?;
    let mut controllers = Vec::with_capacity(nctrl);
    for _ in 0..nctrl {
        let t = lines.next_tokens()?;
        if t.len() != 7 || t[0] != "c" {
            return Err(lines.err("bad controller line"));
        }
        let channel = Channel::parse(t[2]).ok_or_else(|| lines.err(format!("bad channel {:?}", t[2])))?;
        let banned = match t[5] {
            "active" => false,
            "banned" => true,
            other => return Err(lines.err(format!("bad controller state {other:?}"))),
        };
        controllers.push(Controller {
            name: t[6].to_string(),
            bone: parse_usize(&lines, t[1], "bone id")?,
            channel,
            lo: parse_f64(&lines, t[3], "lo")?,
            hi: parse_f64(&lines, t[4], "hi")?,
            banned,
        });
    }

    let t = expect_section(&mut lines, "landmarks")?;
    if t.len() != 1 + LANDMARK_COUNT {
        return Err(lines.err(format!("expected {LANDMARK_COUNT} landmark ids")));
    }
    let mut landmarks = Vec::with_capacity(LANDMARK_COUNT);
    for tok in &t[1..] {
        landmarks.push(parse_usize(&lines, tok, "landmark id")? as u32);
    }

    let mut parts: [Vec<u32>; PART_COUNT] = Default::default();
    for p in 0..PART_COUNT {
        let t = expect_section(&mut lines, "part")?;
        if t.get(1) != Some(&PART_NAMES[p]) {
            return Err(lines.err(format!("expected part {:?}", PART_NAMES[p])));
        }
        let count = parse_usize(&lines, t[2], "part count")?;
        if t.len() != 3 + count {
            return Err(lines.err("part id count mismatch"));
        }
        parts[p] = t[3..].iter().map(|s| s.parse::<u32>().unwrap_or(u32::MAX)).collect();
    }

    let t = expect_section(&mut lines, "centroid")?;
    if t.len() != 4 {
        return Err(lines.err("bad centroid line"));
    }
    let neutral_centroid = Vec3::new(
        parse_f64(&lines, t[1], "cx")?,
        parse_f64(&lines, t[2], "cy")?,
        parse_f64(&lines, t[3], "cz")?,
    );
    expect_section(&mut lines, "end")?;

    let rig = FaceRig {
        skeleton: Skeleton { bones },
        vertices,
        triangles,
        albedo,
        binding: SkinBinding { influences },
        blendshapes,
        schema: ControllerSchema { controllers },
        landmarks,
        parts,
        neutral_centroid,
    };
    rig.validate()?;
    Ok(rig)
}

pub fn save_rig(rig: &FaceRig, path: &Path) -> CoreResult<()> {
    std::fs::write(path, rig_to_string(rig))?;
    Ok(())
}

pub fn load_rig(path: &Path) -> CoreResult<FaceRig> {
    let text = std::fs::read_to_string(path)?;
    rig_from_str(&text)
}

pub fn params_to_string(params: &FacialParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{PARAMS_HEADER}");
    let dump = |s: &mut String, name: &str, vals: &[f64]| {
        let _ = writeln!(s, "{name} {}", vals.len());
        for chunk in vals.chunks(8) {
            let joined: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", joined.join(" "));
        }
    };
    dump(&mut s, "idt", &params.idt);
    dump(&mut s, "exp", &params.exp);
    dump(&mut s, "pose", &params.pose);
    let _ = writeln!(s, "end");
    s
}

pub fn params_from_str(text: &str) -> CoreResult<FacialParams> {
    let mut lines = Lines::new(text);
    let header = lines.next_tokens()?;
    if header != [PARAMS_HEADER] {
        return Err(lines.err(format!("expected {PARAMS_HEADER} header")));
    }
    let mut read_group = |name: &str, expected: usize| -> CoreResult<Vec<f64>> {
        let t = expect_section(&mut lines, name)?;
        let n = parse_usize(&lines, t.get(1).ok_or_else(|| lines.err("missing count"))?, "count")?;
        if n != expected {
            return Err(lines.err(format!("{name} has {n} values, expected {expected}")));
        }
        let mut vals = Vec::with_capacity(n);
        while vals.len() < n {
            let toks = lines.next_tokens()?;
            for tok in toks {
                vals.push(parse_f64(&lines, tok, name)?);
            }
        }
        if vals.len() != n {
            return Err(lines.err(format!("{name} has too many values")));
        }
        Ok(vals)
    };
    let idt = read_group("idt", IDT_DIM)?;
    let exp = read_group("exp", EXP_DIM)?;
    let pose_v = read_group("pose", POSE_DIM)?;
    expect_section(&mut lines, "end")?;
    let mut pose = [0.0; POSE_DIM];
    pose.copy_from_slice(&pose_v);
    let params = FacialParams { idt, exp, pose };
    params.validate()?;
    Ok(params)
}

pub fn save_params(params: &FacialParams, path: &Path) -> CoreResult<()> {
    std::fs::write(path, params_to_string(params))?;
    Ok(())
}

pub fn load_params(path: &Path) -> CoreResult<FacialParams> {
    let text = std::fs::read_to_string(path)?;
    params_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::generator::generate_default_rig;

    #[test]
    fn rig_roundtrip_is_byte_identical() {
        let rig = generate_default_rig(3);
        let text = rig_to_string(&rig);
        let parsed = rig_from_str(&text).unwrap();
        let text2 = rig_to_string(&parsed);
        assert_eq!(text, text2);
    }

    #[test]
    fn params_roundtrip_is_byte_identical() {
        let mut p = FacialParams::neutral();
        p.idt[13] = 0.123456789012345;
        p.exp[7] = 1.0;
        p.pose = [0.25, -0.5, 1.5, 0.1, -0.2, 0.3];
        let text = params_to_string(&p);
        let parsed = params_from_str(&text).unwrap();
        assert_eq!(parsed, p);
        assert_eq!(params_to_string(&parsed), text);
    }

    #[test]
    fn params_reject_out_of_range_with_line_info() {
        let mut p = FacialParams::neutral();
        p.idt[0] = 0.5;
        let mut text = params_to_string(&p);
        text = text.replace("idt 261", "idt 260");
        assert!(params_from_str(&text).is_err());
    }
}
