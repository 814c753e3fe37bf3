//! Skeleton topology, quaternion algebra, forward kinematics, and the pose
//! representations shared by every other module.

use crate::error::{CoreError, Result};

/// Joint count of the canonical skeleton.
pub const CANONICAL_JOINTS: usize = 24;

/// Scalar channels per pose on the canonical skeleton: root position (3)
/// plus one quaternion (4) per joint.
pub const CANONICAL_CHANNELS: usize = 3 + 4 * CANONICAL_JOINTS;

/// Flat key-pose width on the canonical skeleton: (3 + 4) scalars per joint.
pub const KEYPOSE_DIM: usize = 7 * CANONICAL_JOINTS;

pub type Vec3 = [f64; 3];

pub fn v3_add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn v3_sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn v3_norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Unit rotation quaternion. Stored sign-canonicalized with `w >= 0` so that
/// scalar motion channels are well-posed for curve fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from raw components, normalizing to unit length
    /// and canonicalizing the sign.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Quaternion> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(CoreError::InvalidArgument("non-finite quaternion components".into()));
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(CoreError::InvalidArgument("zero-magnitude quaternion".into()));
        }
        Ok(Quaternion { w: w / n, x: x / n, y: y / n, z: z / n }.canonicalized())
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Result<Quaternion> {
        let n = v3_norm(axis);
        if n < 1e-12 {
            return Err(CoreError::InvalidArgument("zero-length rotation axis".into()));
        }
        let half = 0.5 * angle_rad;
        let s = half.sin() / n;
        Quaternion::new(half.cos(), axis[0] * s, axis[1] * s, axis[2] * s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Flips the sign so that `w >= 0`; (w,x,y,z) and (-w,-x,-y,-z) denote
    /// the same rotation.
    pub fn canonicalized(self) -> Quaternion {
        if self.w < 0.0 {
            Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    pub fn normalized(self) -> Result<Quaternion> {
        Quaternion::new(self.w, self.x, self.y, self.z)
    }

    /// Hamilton product `self ⊗ other`, renormalized.
    pub fn compose(&self, other: &Quaternion) -> Result<Quaternion> {
        let (aw, ax, ay, az) = (self.w, self.x, self.y, self.z);
        let (bw, bx, by, bz) = (other.w, other.x, other.y, other.z);
        Quaternion::new(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )
    }

    /// Rotates `v` by this quaternion (`q v q^-1`).
    pub fn rotate(&self, v: Vec3) -> Result<Vec3> {
        if (self.norm() - 1.0).abs() > 1e-3 {
            return Err(CoreError::InvalidArgument(format!(
                "quaternion norm {} too far from unit",
                self.norm()
            )));
        }
        // q v q* expanded via the cross-product form: v + 2 w (u × v) + 2 u × (u × v)
        let u = [self.x, self.y, self.z];
        let c1 = cross(u, v);
        let c2 = cross(u, c1);
        Ok([
            v[0] + 2.0 * (self.w * c1[0] + c2[0]),
            v[1] + 2.0 * (self.w * c1[1] + c2[1]),
            v[2] + 2.0 * (self.w * c1[2] + c2[2]),
        ])
    }

    /// 3x3 rotation matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Joint tree with rest-pose bone offsets. Joints are stored in topological
/// order: every joint's parent index is smaller than its own.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    pub parent: Vec<Option<usize>>,
    pub offset: Vec<Vec3>,
    pub names: Vec<String>,
}

impl SkeletonTopology {
    pub fn new(parent: Vec<Option<usize>>, offset: Vec<Vec3>, names: Vec<String>) -> Result<Self> {
        let n = parent.len();
        if n == 0 || offset.len() != n || names.len() != n {
            return Err(CoreError::Schema("skeleton field lengths disagree".into()));
        }
        let mut roots = 0;
        for (i, p) in parent.iter().enumerate() {
            match p {
                None => roots += 1,
                Some(p) => {
                    if *p >= i {
                        return Err(CoreError::Schema(format!(
                            "joint {i} has parent {p}, breaking topological order"
                        )));
                    }
                }
            }
        }
        if roots != 1 {
            return Err(CoreError::Schema(format!("expected exactly one root, found {roots}")));
        }
        if offset.iter().any(|o| o.iter().any(|c| !c.is_finite())) {
            return Err(CoreError::Schema("non-finite joint offset".into()));
        }
        Ok(SkeletonTopology { parent, offset, names })
    }

    pub fn joint_count(&self) -> usize {
        self.parent.len()
    }

    pub fn children(&self, joint: usize) -> Vec<usize> {
        (0..self.joint_count()).filter(|&j| self.parent[j] == Some(joint)).collect()
    }

    /// Parses the skeleton definition text format: one `name parent ox oy oz`
    /// line per joint (parent `-1` marks the root), `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parent = Vec::new();
        let mut offset = Vec::new();
        let mut names = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(CoreError::Schema(format!(
                    "skeleton line {}: expected 5 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let p: i64 = fields[1]
                .parse()
                .map_err(|_| CoreError::Schema(format!("skeleton line {}: bad parent", lineno + 1)))?;
            let mut o = [0.0; 3];
            for (k, slot) in o.iter_mut().enumerate() {
                *slot = fields[2 + k].parse().map_err(|_| {
                    CoreError::Schema(format!("skeleton line {}: bad offset", lineno + 1))
                })?;
            }
            names.push(fields[0].to_string());
            parent.push(if p < 0 { None } else { Some(p as usize) });
            offset.push(o);
        }
        SkeletonTopology::new(parent, offset, names)
    }

    /// The canonical 24-joint rest skeleton shipped with the repository.
    pub fn default_canonical() -> SkeletonTopology {
        SkeletonTopology::parse(DEFAULT_SKELETON_TEXT)
            .expect("bundled skeleton file is valid")
    }
}

/// Bundled rest skeleton definition (see `data/default_skeleton.txt`).
pub const DEFAULT_SKELETON_TEXT: &str = include_str!("../data/default_skeleton.txt");

/// Per-frame skeletal state: root position plus parent-local joint rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub root_position: Vec3,
    pub joint_rotations: Vec<Quaternion>,
}

impl Pose {
    pub fn identity(joints: usize) -> Pose {
        Pose { root_position: [0.0; 3], joint_rotations: vec![Quaternion::IDENTITY; joints] }
    }

    pub fn validate(&self, topology: &SkeletonTopology) -> Result<()> {
        if self.joint_rotations.len() != topology.joint_count() {
            return Err(CoreError::Schema(format!(
                "pose has {} rotations, topology has {} joints",
                self.joint_rotations.len(),
                topology.joint_count()
            )));
        }
        if self.root_position.iter().any(|c| !c.is_finite()) {
            return Err(CoreError::InvalidArgument("non-finite root position".into()));
        }
        for (i, q) in self.joint_rotations.iter().enumerate() {
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(CoreError::InvalidArgument(format!(
                    "joint {i} rotation is not unit (norm {})",
                    q.norm()
                )));
            }
        }
        Ok(())
    }

    /// Flattens to the canonical channel order: root x,y,z then per joint
    /// w,x,y,z.
    pub fn to_channels(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 + 4 * self.joint_rotations.len());
        out.extend_from_slice(&self.root_position);
        for q in &self.joint_rotations {
            out.extend_from_slice(&[q.w, q.x, q.y, q.z]);
        }
        out
    }

    pub fn from_channels(channels: &[f64]) -> Result<Pose> {
        if channels.len() < 7 || (channels.len() - 3) % 4 != 0 {
            return Err(CoreError::Schema(format!(
                "channel vector length {} is not 3 + 4k",
                channels.len()
            )));
        }
        let root_position = [channels[0], channels[1], channels[2]];
        let joint_rotations = channels[3..]
            .chunks(4)
            .map(|c| Quaternion::new(c[0], c[1], c[2], c[3]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Pose { root_position, joint_rotations })
    }
}

/// Per-joint global positions and rotations for one beat frame; flattens to
/// `(3 + 4) * joints` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyPose {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Quaternion>,
}

impl KeyPose {
    pub fn dim(&self) -> usize {
        7 * self.positions.len()
    }

    /// Flat layout: all joint positions (x,y,z) first, then all rotations
    /// (w,x,y,z).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for p in &self.positions {
            out.extend_from_slice(p);
        }
        for q in &self.rotations {
            out.extend_from_slice(&[q.w, q.x, q.y, q.z]);
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<KeyPose> {
        if flat.len() % 7 != 0 || flat.is_empty() {
            return Err(CoreError::Schema(format!("key pose length {} is not 7k", flat.len())));
        }
        let joints = flat.len() / 7;
        let positions = flat[..3 * joints].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let rotations = flat[3 * joints..]
            .chunks(4)
            .map(|c| Quaternion::new(c[0], c[1], c[2], c[3]))
            .collect::<Result<Vec<_>>>()?;
        Ok(KeyPose { positions, rotations })
    }
}

/// Uniformly sampled sequence of poses.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub fps: f64,
    pub start_time: f64,
    pub frames: Vec<Pose>,
}

impl PoseSequence {
    pub fn new(fps: f64, start_time: f64, frames: Vec<Pose>) -> Result<PoseSequence> {
        if fps <= 0.0 {
            return Err(CoreError::InvalidArgument("fps must be positive".into()));
        }
        if frames.is_empty() {
            return Err(CoreError::EmptyInput("pose sequence has no frames".into()));
        }
        Ok(PoseSequence { fps, start_time, frames })
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.fps
    }

    pub fn duration(&self) -> f64 {
        (self.frames.len() - 1) as f64 / self.fps
    }

    /// Index of the frame nearest to `time`.
    pub fn nearest_frame(&self, time: f64) -> usize {
        let idx = ((time - self.start_time) * self.fps).round();
        (idx.max(0.0) as usize).min(self.frames.len() - 1)
    }
}

/// Global joint positions and rotations from local pose state.
///
/// The root's global state is the pose root position plus the root joint's
/// rotation; each child composes its parent's global rotation with its local
/// one and offsets its position by the rotated rest bone.
pub fn forward_kinematics(
    topology: &SkeletonTopology,
    pose: &Pose,
) -> Result<(Vec<Vec3>, Vec<Quaternion>)> {
    pose.validate(topology)?;
    let n = topology.joint_count();
    let mut positions = vec![[0.0; 3]; n];
    let mut rotations = vec![Quaternion::IDENTITY; n];
    for j in 0..n {
        match topology.parent[j] {
            None => {
                positions[j] = pose.root_position;
                rotations[j] = pose.joint_rotations[j];
            }
            Some(p) => {
                rotations[j] = rotations[p].compose(&pose.joint_rotations[j])?;
                let bone = rotations[p].rotate(topology.offset[j])?;
                positions[j] = v3_add(positions[p], bone);
            }
        }
    }
    Ok((positions, rotations))
}

/// Flip quaternion channel blocks of `next` onto the hemisphere of `prev`
/// so spline interpolation never crosses the antipode.
pub fn align_channels(prev: &[f64], next: &mut [f64]) {
    for j in 0..CANONICAL_JOINTS {
        let o = 3 + 4 * j;
        let dot: f64 = (0..4).map(|c| prev[o + c] * next[o + c]).sum();
        if dot < 0.0 {
            for c in 0..4 {
                next[o + c] = -next[o + c];
            }
        }
    }
}

/// Expands a local pose into the 168-d global key-pose representation.
pub fn pose_to_keypose(topology: &SkeletonTopology, pose: &Pose) -> Result<KeyPose> {
    let (positions, rotations) = forward_kinematics(topology, pose)?;
    Ok(KeyPose { positions, rotations })
}

/// Recovers the local pose underlying a key pose: root position is the root
/// joint's global position and local rotations invert the parent chain.
pub fn keypose_to_pose(topology: &SkeletonTopology, keypose: &KeyPose) -> Result<Pose> {
    let n = topology.joint_count();
    if keypose.positions.len() != n || keypose.rotations.len() != n {
        return Err(CoreError::Schema(format!(
            "key pose has {} joints, topology has {n}",
            keypose.positions.len()
        )));
    }
    let mut root_position = [0.0; 3];
    let mut joint_rotations = vec![Quaternion::IDENTITY; n];
    for j in 0..n {
        match topology.parent[j] {
            None => {
                root_position = keypose.positions[j];
                joint_rotations[j] = keypose.rotations[j];
            }
            Some(p) => {
                joint_rotations[j] =
                    keypose.rotations[p].conjugate().compose(&keypose.rotations[j])?;
            }
        }
    }
    Ok(Pose { root_position, joint_rotations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut impl Rng) -> Quaternion {
        Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .unwrap()
    }

    fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn mat_apply(m: [[f64; 3]; 3], v: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for i in 0..3 {
            for k in 0..3 {
                out[i] += m[i][k] * v[k];
            }
        }
        out
    }

    #[test]
    fn compose_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_quat(&mut rng);
        let r = Quaternion::IDENTITY.compose(&q).unwrap();
        assert!((r.dot(&q).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compose_same_axis_adds_angles() {
        let z90 = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2).unwrap();
        let z180 = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::PI).unwrap();
        let r = z90.compose(&z90).unwrap();
        assert!((r.dot(&z180).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_quat(&mut rng);
            let b = random_quat(&mut rng);
            let c = a.compose(&b).unwrap();
            let m = mat_mul(a.to_matrix(), b.to_matrix());
            let cm = c.to_matrix();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((m[i][j] - cm[i][j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rotate_axis_geometry() {
        let q = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2).unwrap();
        let v = q.rotate([1.0, 0.0, 0.0]).unwrap();
        assert!((v[0]).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12 && v[2].abs() < 1e-12);
        let id = Quaternion::IDENTITY.rotate([1.0, 2.0, 3.0]).unwrap();
        assert_eq!(id, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn rotate_matches_matrix_and_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_quat(&mut rng);
            let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let r = q.rotate(v).unwrap();
            let m = mat_apply(q.to_matrix(), v);
            for i in 0..3 {
                assert!((r[i] - m[i]).abs() < 1e-9);
            }
            assert!((v3_norm(r) - v3_norm(v)).abs() < 1e-6);
        }
    }

    #[test]
    fn rotate_rejects_non_unit() {
        let q = Quaternion { w: 1.1, x: 0.0, y: 0.0, z: 0.0 };
        assert!(q.rotate([1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn default_skeleton_is_valid_24_joint_tree() {
        let topo = SkeletonTopology::default_canonical();
        assert_eq!(topo.joint_count(), CANONICAL_JOINTS);
        assert_eq!(topo.parent[0], None);
        // Every non-root joint reaches the root by walking parents.
        for j in 1..topo.joint_count() {
            let mut cur = j;
            let mut hops = 0;
            while let Some(p) = topo.parent[cur] {
                cur = p;
                hops += 1;
                assert!(hops <= CANONICAL_JOINTS);
            }
            assert_eq!(cur, 0);
        }
    }

    #[test]
    fn fk_identity_pose_accumulates_offsets() {
        let topo = SkeletonTopology::default_canonical();
        let pose = Pose::identity(topo.joint_count());
        let (pos, rot) = forward_kinematics(&topo, &pose).unwrap();
        for j in 0..topo.joint_count() {
            assert!((rot[j].dot(&Quaternion::IDENTITY).abs() - 1.0).abs() < 1e-12);
            let mut expect = [0.0; 3];
            let mut cur = j;
            loop {
                expect = v3_add(expect, topo.offset[cur]);
                match topo.parent[cur] {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            for a in 0..3 {
                assert!((pos[j][a] - expect[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fk_translation_equivariance() {
        let topo = SkeletonTopology::default_canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pose = Pose::identity(topo.joint_count());
        for q in pose.joint_rotations.iter_mut() {
            *q = random_quat(&mut rng);
        }
        let (base, base_rot) = forward_kinematics(&topo, &pose).unwrap();
        let mut shifted = pose.clone();
        shifted.root_position = [0.0, 1.0, 0.0];
        let (moved, moved_rot) = forward_kinematics(&topo, &shifted).unwrap();
        for j in 0..topo.joint_count() {
            assert!((moved[j][1] - base[j][1] - 1.0).abs() < 1e-12);
            assert!((moved[j][0] - base[j][0]).abs() < 1e-12);
            assert!((moved[j][2] - base[j][2]).abs() < 1e-12);
            assert!((moved_rot[j].dot(&base_rot[j]).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_root_rotation_rotates_rigidly() {
        let topo = SkeletonTopology::default_canonical();
        let mut pose = Pose::identity(topo.joint_count());
        let rz = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2).unwrap();
        pose.joint_rotations[0] = rz;
        let (pos, _) = forward_kinematics(&topo, &pose).unwrap();
        let rest = Pose::identity(topo.joint_count());
        let (rest_pos, _) = forward_kinematics(&topo, &rest).unwrap();
        for j in 0..topo.joint_count() {
            let rotated = rz.rotate(rest_pos[j]).unwrap();
            for a in 0..3 {
                assert!((pos[j][a] - rotated[a]).abs() < 1e-9);
            }
        }
    }

    // Matrix-chain oracle: global rotation of joint j is the product of the
    // local rotation matrices along the chain.
    #[test]
    fn fk_matches_matrix_chain_oracle() {
        let topo = SkeletonTopology::default_canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut pose = Pose::identity(topo.joint_count());
            pose.root_position =
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            for q in pose.joint_rotations.iter_mut() {
                *q = random_quat(&mut rng);
            }
            let (pos, rot) = forward_kinematics(&topo, &pose).unwrap();
            let mut gm: Vec<[[f64; 3]; 3]> = Vec::new();
            let mut gp: Vec<Vec3> = Vec::new();
            for j in 0..topo.joint_count() {
                match topo.parent[j] {
                    None => {
                        gm.push(pose.joint_rotations[j].to_matrix());
                        gp.push(pose.root_position);
                    }
                    Some(p) => {
                        gm.push(mat_mul(gm[p], pose.joint_rotations[j].to_matrix()));
                        gp.push(v3_add(gp[p], mat_apply(gm[p], topo.offset[j])));
                    }
                }
                let rm = rot[j].to_matrix();
                for r in 0..3 {
                    for c in 0..3 {
                        assert!((rm[r][c] - gm[j][r][c]).abs() < 1e-6);
                    }
                    assert!((pos[j][r] - gp[j][r]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn keypose_roundtrip_and_dim() {
        let topo = SkeletonTopology::default_canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pose = Pose::identity(topo.joint_count());
        pose.root_position = [0.3, 1.0, -0.2];
        for q in pose.joint_rotations.iter_mut() {
            *q = random_quat(&mut rng);
        }
        let kp = pose_to_keypose(&topo, &pose).unwrap();
        let flat = kp.to_flat();
        assert_eq!(flat.len(), KEYPOSE_DIM);
        for c in kp.rotations.iter() {
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
        let back = keypose_to_pose(&topo, &kp).unwrap();
        for (a, b) in back.joint_rotations.iter().zip(pose.joint_rotations.iter()) {
            assert!((a.dot(b).abs() - 1.0).abs() < 1e-9);
        }
        // FK of the recovered pose reproduces the key-pose positions.
        let kp2 = pose_to_keypose(&topo, &back).unwrap();
        for (p, q) in kp2.positions.iter().zip(kp.positions.iter()) {
            for a in 0..3 {
                assert!((p[a] - q[a]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pose_channel_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pose = Pose::identity(CANONICAL_JOINTS);
        for q in pose.joint_rotations.iter_mut() {
            *q = random_quat(&mut rng);
        }
        let ch = pose.to_channels();
        assert_eq!(ch.len(), CANONICAL_CHANNELS);
        let back = Pose::from_channels(&ch).unwrap();
        for (a, b) in back.joint_rotations.iter().zip(pose.joint_rotations.iter()) {
            assert!((a.dot(b) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn topology_rejects_bad_trees() {
        assert!(SkeletonTopology::new(vec![None, None], vec![[0.0; 3]; 2], vec!["a".into(), "b".into()]).is_err());
        assert!(SkeletonTopology::new(vec![Some(0)], vec![[0.0; 3]], vec!["a".into()]).is_err());
        assert!(SkeletonTopology::new(
            vec![None, Some(2), Some(1)],
            vec![[0.0; 3]; 3],
            vec!["a".into(), "b".into(), "c".into()]
        )
        .is_err());
    }
}
