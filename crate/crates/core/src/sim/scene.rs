use std::sync::Arc;

use rand::Rng;

use super::{build_object_set, ray_cast, CollectedPoint, Mat3, ProbeRequest, SimError, TriangleMesh, Vec3};

const MAX_POSE_ATTEMPTS: usize = 1000;

/// Workspace geometry, sensor reach and pose ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Fixed x of every probe entry point.
    pub px: f64,
    /// Maximum sensor travel along the probe direction.
    pub ulen_max: f64,
    /// Transformed meshes must satisfy `|x|, |y| <= workspace_half`.
    pub workspace_half: f64,
    pub x_init: (f64, f64),
    pub y_init: (f64, f64),
    pub z_init: (f64, f64),
    pub rx_max: f64,
    pub ry_max: f64,
    pub rz_max: f64,
    /// Held-out band of `R_z` (degrees).
    pub test_rz: (f64, f64),
    /// Held-out band of `X_init`.
    pub test_x: (f64, f64),
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            px: 0.0,
            ulen_max: 3.0,
            workspace_half: 1.0,
            x_init: (-0.3, 0.3),
            y_init: (-0.3, 0.3),
            z_init: (-1.0, -0.6),
            rx_max: 10.0,
            ry_max: 10.0,
            rz_max: 180.0,
            test_rz: (30.0, 60.0),
            test_x: (0.2, 0.3),
        }
    }
}

impl SimConfig {
    /// A pose is held out when its `R_z` or its `X_init` falls in a test band.
    pub fn is_held_out(&self, position: Vec3, rotation: [f64; 3]) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(rotation[2], self.test_rz) || within(position.x, self.test_x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train|test)")),
        }
    }
}

/// A posed object. The transformed mesh is shared and immutable.
#[derive(Clone, Debug)]
pub struct Scene {
    pub object_id: usize,
    pub position: Vec3,
    /// `(R_x, R_y, R_z)` in degrees.
    pub rotation: [f64; 3],
    mesh: Arc<TriangleMesh>,
    bounds: (Vec3, Vec3),
}

impl Scene {
    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.bounds
    }

    /// `object_id x y z rx ry rz`.
    pub fn record(&self) -> String {
        let p = self.position;
        let r = self.rotation;
        format!("{} {} {} {} {} {} {}", self.object_id, p.x, p.y, p.z, r[0], r[1], r[2])
    }
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.object_id == other.object_id
            && self.position == other.position
            && self.rotation == other.rotation
    }
}

/// Object set plus workspace configuration.
#[derive(Clone, Debug)]
pub struct Simulator {
    objects: Vec<TriangleMesh>,
    config: SimConfig,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Self {
        Self::with_objects(build_object_set(), config)
    }

    pub fn with_objects(objects: Vec<TriangleMesh>, config: SimConfig) -> Self {
        Self { objects, config }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn objects(&self) -> &[TriangleMesh] {
        &self.objects
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn place_scene(&self, object_id: usize, position: Vec3, rotation: [f64; 3]) -> Result<Scene, SimError> {
        let base = self.objects.get(object_id).ok_or(SimError::UnknownObject(object_id))?;
        let c = &self.config;
        for (axis, value, limit) in [
            ('x', rotation[0], c.rx_max),
            ('y', rotation[1], c.ry_max),
            ('z', rotation[2], c.rz_max),
        ] {
            if !(value.abs() <= limit) {
                return Err(SimError::RotationOutOfRange { axis, value, limit });
            }
        }
        let mesh = base.transformed(&Mat3::from_xyz_degrees(rotation), position);
        for v in mesh.vertices() {
            if !(v.z < 0.0) {
                return Err(SimError::PoseOutOfWorkspace(format!("vertex at z = {}", v.z)));
            }
            if v.x.abs() > c.workspace_half || v.y.abs() > c.workspace_half {
                return Err(SimError::PoseOutOfWorkspace(format!("vertex at ({}, {})", v.x, v.y)));
            }
        }
        let bounds = mesh.bounding_box();
        Ok(Scene { object_id, position, rotation, mesh: Arc::new(mesh), bounds })
    }

    /// Uniform object and a uniform pose inside the split's region.
    pub fn sample_scene<R: Rng + ?Sized>(&self, rng: &mut R, split: Split) -> Result<Scene, SimError> {
        let c = &self.config;
        let object_id = rng.gen_range(0..self.objects.len());
        for _ in 0..MAX_POSE_ATTEMPTS {
            let position = Vec3::new(
                rng.gen_range(c.x_init.0..=c.x_init.1),
                rng.gen_range(c.y_init.0..=c.y_init.1),
                rng.gen_range(c.z_init.0..=c.z_init.1),
            );
            let rotation = [
                rng.gen_range(-c.rx_max..=c.rx_max),
                rng.gen_range(-c.ry_max..=c.ry_max),
                rng.gen_range(-c.rz_max..=c.rz_max),
            ];
            if c.is_held_out(position, rotation) != (split == Split::Test) {
                continue;
            }
            match self.place_scene(object_id, position, rotation) {
                Ok(scene) => return Ok(scene),
                Err(SimError::PoseOutOfWorkspace(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(SimError::SamplingExhausted(MAX_POSE_ATTEMPTS))
    }

    pub fn ray_cast(&self, scene: &Scene, probe: &ProbeRequest) -> CollectedPoint {
        ray_cast(scene, probe, self.config.px, self.config.ulen_max)
    }

    /// Inverse of [`Scene::record`].
    pub fn scene_from_record(&self, line: &str) -> Result<Scene, SimError> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(SimError::SceneParse(format!("expected 7 fields, got {}", f.len())));
        }
        let id: usize = f[0].parse().map_err(|_| SimError::SceneParse(format!("bad object id `{}`", f[0])))?;
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| SimError::SceneParse(format!("bad number `{s}`"))))
            .collect::<Result<_, _>>()?;
        self.place_scene(id, Vec3::new(v[0], v[1], v[2]), [v[3], v[4], v[5]])
    }
}
