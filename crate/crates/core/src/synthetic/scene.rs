use std::f64::consts::TAU;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraFrame, RigidTransform};

use super::SyntheticError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColoredPoint {
    pub position: [f64; 3],
    pub color: [f64; 3],
}

/// Camera centre moves linearly from `start` to `end`; the camera yaws
/// about the world y axis by `yaw · τ` radians. It looks along +z at τ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPath {
    pub start: [f64; 3],
    pub end: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    /// Checkered fronto-parallel grid of points at constant `z`.
    Wall {
        depth: f64,
        half_extent: f64,
        spacing: f64,
    },
    Points {
        points: Vec<ColoredPoint>,
    },
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Fibonacci-lattice sphere surface with latitude stripes.
    Sphere {
        center: [f64; 3],
        radius: f64,
        points: usize,
        color: [f64; 3],
    },
    Points {
        points: Vec<ColoredPoint>,
    },
}

/// Rigid motion `p ↦ R(θ(τ))·(p − pivot) + pivot + d(τ)` with
/// `θ(τ) = 2π·turns·τ` about `axis` and
/// `d(τ) = velocity·τ + amplitude·sin(2π·harmonic·τ)`.
/// Before frame `hold_until` the object rests in its canonical pose and the
/// script runs on the remaining frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionScript {
    pub axis: [f64; 3],
    pub pivot: [f64; 3],
    pub turns: i32,
    pub velocity: [f64; 3],
    pub amplitude: [f64; 3],
    pub harmonic: u32,
    #[serde(default)]
    pub hold_until: usize,
}

impl MotionScript {
    pub fn still() -> Self {
        Self {
            axis: [0.0, 0.0, 1.0],
            pivot: [0.0; 3],
            turns: 0,
            velocity: [0.0; 3],
            amplitude: [0.0; 3],
            harmonic: 0,
            hold_until: 0,
        }
    }

    pub fn pose(&self, frame: usize, frame_count: usize) -> RigidTransform {
        let tau = if frame < self.hold_until || frame_count <= 1 {
            0.0
        } else {
            (frame - self.hold_until) as f64 / (frame_count - 1) as f64
        };
        let axis = Unit::new_normalize(Vector3::from(self.axis));
        let r = *Rotation3::from_axis_angle(&axis, TAU * self.turns as f64 * tau).matrix();
        let pivot = Vector3::from(self.pivot);
        let d = Vector3::from(self.velocity) * tau
            + Vector3::from(self.amplitude) * (TAU * self.harmonic as f64 * tau).sin();
        RigidTransform {
            rotation: r,
            translation: pivot - r * pivot + d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub instance_id: u16,
    pub shape: Shape,
    pub motion: MotionScript,
}

/// Replayable scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub camera: CameraPath,
    pub background: Background,
    pub objects: Vec<ObjectSpec>,
    pub seed: u64,
}

/// Who a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Owner {
    Background,
    /// Index into `SceneSpec::objects`.
    Object(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint {
    /// Position at frame 0 (canonical pose).
    pub position: Vector3<f64>,
    pub color: [f32; 3],
    pub owner: Owner,
}

/// A spec expanded into cameras, points and per-frame object poses.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub cameras: Vec<CameraFrame>,
    pub points: Vec<ScenePoint>,
    /// `poses[object][frame]`, canonical to frame.
    pub poses: Vec<Vec<RigidTransform>>,
}

fn to_f32(c: [f64; 3]) -> [f32; 3] {
    [c[0] as f32, c[1] as f32, c[2] as f32]
}

fn fibonacci_sphere(center: [f64; 3], radius: f64, n: usize, color: [f64; 3], rng: &mut ChaCha8Rng) -> Vec<(Vector3<f64>, [f32; 3])> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let c = Vector3::from(center);
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            let local = Vector3::new(r * phi.cos(), y, r * phi.sin());
            let band = ((y + 1.0) * 4.0).floor() as i64 % 2;
            let shade = if band == 0 { 1.0 } else { 0.45 } * rng.random_range(0.9..1.0);
            let col = [color[0] * shade, color[1] * shade, color[2] * shade];
            (c + local * radius, to_f32(col))
        })
        .collect()
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidScene(m.into()));
        if self.frame_count == 0 || self.width == 0 || self.height == 0 {
            return bad("frame count and image size must be positive");
        }
        if !(self.focal > 0.0) {
            return bad("focal length must be positive");
        }
        let mut ids: Vec<u16> = self.objects.iter().map(|o| o.instance_id).collect();
        ids.sort_unstable();
        if ids.contains(&0) || ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("object instance IDs must be nonzero and unique");
        }
        for o in &self.objects {
            if Vector3::from(o.motion.axis).norm() == 0.0 {
                return bad("motion axis must be nonzero");
            }
        }
        Ok(())
    }

    pub fn camera(&self, frame: usize) -> Result<CameraFrame, SyntheticError> {
        let tau = if self.frame_count <= 1 { 0.0 } else { frame as f64 / (self.frame_count - 1) as f64 };
        let (a, b) = (Vector3::from(self.camera.start), Vector3::from(self.camera.end));
        let centre = a + (b - a) * tau;
        let cam_to_world = *Rotation3::from_axis_angle(&Vector3::y_axis(), self.camera.yaw * tau).matrix();
        let r: Matrix3<f64> = cam_to_world.transpose();
        let k = CameraFrame::intrinsics(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        );
        Ok(CameraFrame::new(frame, k, r, -(r * centre), self.width, self.height)?)
    }

    pub fn build(&self) -> Result<Scene, SyntheticError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut points = Vec::new();
        match &self.background {
            Background::Wall { depth, half_extent, spacing } => {
                if !(*spacing > 0.0) {
                    return Err(SyntheticError::InvalidScene("wall spacing must be positive".into()));
                }
                let n = (2.0 * half_extent / spacing).floor() as i64;
                for j in 0..=n {
                    for i in 0..=n {
                        let (x, y) = (-half_extent + i as f64 * spacing, -half_extent + j as f64 * spacing);
                        let check = ((x / 0.5).floor() as i64 + (y / 0.5).floor() as i64).rem_euclid(2);
                        let base = if check == 0 { [0.85, 0.8, 0.7] } else { [0.25, 0.3, 0.35] };
                        let s = rng.random_range(0.95..1.0);
                        points.push(ScenePoint {
                            position: Vector3::new(x, y, *depth),
                            color: to_f32([base[0] * s, base[1] * s, base[2] * s]),
                            owner: Owner::Background,
                        });
                    }
                }
            }
            Background::Points { points: pts } => points.extend(pts.iter().map(|p| ScenePoint {
                position: Vector3::from(p.position),
                color: to_f32(p.color),
                owner: Owner::Background,
            })),
            Background::Empty => {}
        }
        for (k, obj) in self.objects.iter().enumerate() {
            let pts: Vec<(Vector3<f64>, [f32; 3])> = match &obj.shape {
                Shape::Sphere { center, radius, points, color } => fibonacci_sphere(*center, *radius, *points, *color, &mut rng),
                Shape::Points { points } => points.iter().map(|p| (Vector3::from(p.position), to_f32(p.color))).collect(),
            };
            points.extend(pts.into_iter().map(|(position, color)| ScenePoint {
                position,
                color,
                owner: Owner::Object(k),
            }));
        }
        let cameras = (0..self.frame_count).map(|f| self.camera(f)).collect::<Result<_, _>>()?;
        let poses = self
            .objects
            .iter()
            .map(|o| (0..self.frame_count).map(|f| o.motion.pose(f, self.frame_count)).collect())
            .collect();
        Ok(Scene {
            spec: self.clone(),
            cameras,
            points,
            poses,
        })
    }
}

impl Scene {
    pub fn frame_count(&self) -> usize {
        self.spec.frame_count
    }

    /// World position of point `i` at `frame`.
    pub fn position(&self, i: usize, frame: usize) -> Vector3<f64> {
        let p = &self.points[i];
        match p.owner {
            Owner::Background => p.position,
            Owner::Object(k) => self.poses[k][frame].apply(&p.position),
        }
    }

    pub fn instance_of(&self, owner: Owner) -> u16 {
        match owner {
            Owner::Background => 0,
            Owner::Object(k) => self.spec.objects[k].instance_id,
        }
    }

    /// Motion of `owner` from `frame` to `frame + 1`.
    pub fn step(&self, owner: Owner, frame: usize) -> RigidTransform {
        match owner {
            Owner::Background => RigidTransform::identity(),
            Owner::Object(k) => self.poses[k][frame + 1].compose(&self.poses[k][frame].inverse()),
        }
    }
}

/// Two textured spheres circling the optical axis in front of a checkered
/// wall while the camera dollies forward. Object motion is tangential to the
/// radial epipolar lines, and every trajectory lies in a Poly-Fourier span
/// with `d_pol >= 1` and `d_fourier >= 3`.
pub fn demo_scene(frame_count: usize, seed: u64) -> SceneSpec {
    let spin = |pivot_z: f64, velocity_z: f64, amplitude_z: f64, harmonic: u32| MotionScript {
        axis: [0.0, 0.0, 1.0],
        pivot: [0.0, 0.0, pivot_z],
        turns: 3,
        velocity: [0.0, 0.0, velocity_z],
        amplitude: [0.0, 0.0, amplitude_z],
        harmonic,
        hold_until: 0,
    };
    SceneSpec {
        frame_count,
        width: 128,
        height: 128,
        focal: 100.0,
        camera: CameraPath {
            start: [0.0, 0.0, 0.0],
            end: [0.0, 0.0, 1.5],
            yaw: 0.0,
        },
        background: Background::Wall {
            depth: 12.0,
            half_extent: 9.0,
            spacing: 0.08,
        },
        objects: vec![
            ObjectSpec {
                instance_id: 1,
                shape: Shape::Sphere {
                    center: [1.4, 0.0, 6.0],
                    radius: 0.6,
                    points: 5000,
                    color: [0.9, 0.2, 0.15],
                },
                motion: spin(6.0, -0.5, 0.15, 3),
            },
            ObjectSpec {
                instance_id: 2,
                shape: Shape::Sphere {
                    center: [-1.3, 1.1, 7.0],
                    radius: 0.7,
                    points: 5000,
                    color: [0.15, 0.5, 0.9],
                },
                motion: spin(7.0, 0.4, 0.2, 2),
            },
        ],
        seed,
    }
}
