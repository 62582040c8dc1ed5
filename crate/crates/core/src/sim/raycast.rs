use super::{CollectedPoint, ProbeRequest, Scene, Vec3};

const DET_EPS: f64 = 1e-9;

/// Ray parameter of the hit between `origin + t dir` and triangle `[a, b, c]`,
/// by the edge-vector (barycentric) method. Near-parallel rays miss.
pub fn intersect_triangle(origin: Vec3, dir: Vec3, [a, b, c]: [Vec3; 3]) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < DET_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(q) * inv)
}

/// Slab test: does the segment `t in [0, t_max]` touch the box?
fn segment_hits_box(origin: Vec3, dir: Vec3, t_max: f64, (lo, hi): (Vec3, Vec3)) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for (o, d, l, h) in [
        (origin.x, dir.x, lo.x, hi.x),
        (origin.y, dir.y, lo.y, hi.y),
        (origin.z, dir.z, lo.z, hi.z),
    ] {
        if d.abs() < 1e-300 {
            if o < l || o > h {
                return false;
            }
            continue;
        }
        let (mut a, mut b) = ((l - o) / d, (h - o) / d);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Casts the probe from `(px, Py, 0)` along `u` and returns the nearest hit within
/// `(0, ulen_max]`, or the endpoint at `ulen_max` with the touch flag cleared.
pub fn ray_cast(scene: &Scene, probe: &ProbeRequest, px: f64, ulen_max: f64) -> CollectedPoint {
    let origin = Vec3::new(px, probe.py, 0.0);
    let dir = probe.u;
    let mut best: Option<f64> = None;
    // Loose box so hits on the boundary faces are never culled.
    let (lo, hi) = scene.bounds();
    let pad = Vec3::new(1e-9, 1e-9, 1e-9);
    if segment_hits_box(origin, dir, ulen_max, (lo - pad, hi + pad)) {
        let mesh = scene.mesh();
        for i in 0..mesh.triangles().len() {
            if let Some(t) = intersect_triangle(origin, dir, mesh.triangle(i)) {
                // strict `<` keeps the lowest triangle index on ties
                if t > 0.0 && t <= ulen_max && best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            }
        }
    }
    match best {
        Some(t) => CollectedPoint { point: origin + dir * t, touched: true },
        None => CollectedPoint { point: origin + dir * ulen_max, touched: false },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{action_to_probe, SimConfig, Simulator};

    #[test]
    fn straight_down_onto_cuboid_top() {
        let sim = Simulator::new(SimConfig::default());
        // cuboid of height 0.3 resting at z = -0.8 puts its top face at z = -0.5
        let scene = sim.place_scene(0, Vec3::new(0.0, 0.0, -0.8), [0.0; 3]).unwrap();
        let probe = action_to_probe([0.0, 0.0, 0.0, 1.0]).unwrap();
        let hit = sim.ray_cast(&scene, &probe);
        assert!(hit.touched);
        assert!((hit.point - Vec3::new(0.0, 0.0, -0.5)).norm() < 1e-12);
        assert_eq!(hit.to_row()[3], 1.0);
    }

    #[test]
    fn miss_returns_endpoint() {
        let sim = Simulator::new(SimConfig::default());
        let scene = sim.place_scene(0, Vec3::new(0.0, 0.0, -0.8), [0.0; 3]).unwrap();
        let probe = action_to_probe([0.99, 0.0, 0.0, 1.0]).unwrap();
        let hit = sim.ray_cast(&scene, &probe);
        assert!(!hit.touched);
        assert_eq!(hit.to_row(), [0.0, 0.99, -3.0, 0.0]);
    }

    #[test]
    fn ray_cast_is_deterministic() {
        let sim = Simulator::new(SimConfig::default());
        let scene = sim.place_scene(1, Vec3::new(0.1, -0.05, -0.7), [3.0, -4.0, 77.0]).unwrap();
        let probe = action_to_probe([0.1, 0.3, -0.2, 0.5]).unwrap();
        let a = sim.ray_cast(&scene, &probe).to_row().map(f64::to_bits);
        let b = sim.ray_cast(&scene, &probe).to_row().map(f64::to_bits);
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_ray_misses_triangle() {
        let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert!(intersect_triangle(Vec3::new(0.2, 0.2, 1.0), Vec3::new(1.0, 0.0, 0.0), tri).is_none());
        let t = intersect_triangle(Vec3::new(0.2, 0.2, 1.0), Vec3::new(0.0, 0.0, -1.0), tri).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
    }
}
