//! Voxel distance transform around a mesh.
//!
//! Voxel `(i, j, k)` is centred at `origin + voxel_size * (i, j, k)`. Within
//! [`EXACT_BAND`] voxels of a triangle the stored value is the exact distance
//! to the nearest triangle; farther out it comes from nearest-point
//! propagation and can overestimate slightly.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geometry::{RigidPose, TriangleMesh, Vec3};

/// Largest accepted extent along any axis.
pub const MAX_DIM: usize = 512;
/// Width, in voxels, of the exactly computed band around each triangle.
pub const EXACT_BAND: usize = 8;
/// Default voxel size as a fraction of the model diameter.
pub const DEFAULT_RESOLUTION: f64 = 128.0;

const MAGIC: &[u8; 4] = b"RTDV";
const VERSION: u32 = 1;

/// Kernel turning a model distance into a cloud weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightKernel {
    /// `exp(-d^2 / (2 sigma^2))`.
    #[default]
    Gaussian,
    /// `exp(-d / sigma^2)`, with `d` in meters.
    Exponential,
}

impl WeightKernel {
    pub fn eval(self, d: f64, sigma: f64) -> f64 {
        match self {
            WeightKernel::Gaussian => (-d * d / (2.0 * sigma * sigma)).exp(),
            WeightKernel::Exponential => (-d / (sigma * sigma)).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceVolume {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub dist: Vec<f32>,
}

/// Closest point to `p` on triangle `(a, b, c)`, by Voronoi region.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

impl DistanceVolume {
    /// Builds the volume over the mesh bounding box grown by `padding`.
    pub fn build(mesh: &TriangleMesh, voxel_size: f64, padding: f64) -> Result<Self> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::InvalidParameter("voxel size must be positive".into()));
        }
        if !(padding >= 0.0) {
            return Err(Error::InvalidParameter("padding must be non-negative".into()));
        }
        if mesh.triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let (lo, hi) = mesh.bounding_box();
        let origin = lo - Vec3::repeat(padding);
        let extent = hi - lo + Vec3::repeat(2.0 * padding);
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let n = (extent[a] / voxel_size).ceil() + 1.0;
            if n > MAX_DIM as f64 {
                return Err(Error::VolumeTooLarge([
                    (extent[0] / voxel_size).ceil() as usize + 1,
                    (extent[1] / voxel_size).ceil() as usize + 1,
                    (extent[2] / voxel_size).ceil() as usize + 1,
                ]));
            }
            dims[a] = n as usize;
        }
        let total = dims[0] * dims[1] * dims[2];
        let mut dist = vec![f32::INFINITY; total];
        // nearest surface point per voxel, NaN when unknown
        let mut near = vec![[f32::NAN; 3]; total];
        let band = EXACT_BAND as f64 * voxel_size;
        let center = |i: usize, j: usize, k: usize| {
            origin + Vec3::new(i as f64, j as f64, k as f64) * voxel_size
        };

        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle(t);
            let tmin = a.inf(&b).inf(&c) - Vec3::repeat(band);
            let tmax = a.sup(&b).sup(&c) + Vec3::repeat(band);
            let mut r0 = [0isize; 3];
            let mut r1 = [0isize; 3];
            for ax in 0..3 {
                r0[ax] = (((tmin[ax] - origin[ax]) / voxel_size).ceil() as isize).max(0);
                r1[ax] = (((tmax[ax] - origin[ax]) / voxel_size).floor() as isize)
                    .min(dims[ax] as isize - 1);
            }
            for k in r0[2]..=r1[2] {
                for j in r0[1]..=r1[1] {
                    for i in r0[0]..=r1[0] {
                        let (i, j, k) = (i as usize, j as usize, k as usize);
                        let p = center(i, j, k);
                        let q = closest_point_on_triangle(&p, &a, &b, &c);
                        let d = (p - q).norm() as f32;
                        let idx = i + dims[0] * (j + dims[1] * k);
                        if d < dist[idx] {
                            dist[idx] = d;
                            near[idx] = [q.x as f32, q.y as f32, q.z as f32];
                        }
                    }
                }
            }
        }

        // causal half of the 26-neighbourhood in raster order
        let mut offsets: Vec<(isize, isize, isize)> = Vec::with_capacity(13);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if (dz, dy, dx) < (0, 0, 0) {
                        offsets.push((dx, dy, dz));
                    }
                }
            }
        }
        let backward: Vec<(isize, isize, isize)> =
            offsets.iter().map(|&(x, y, z)| (-x, -y, -z)).collect();

        for _ in 0..2 {
            for pass in 0..2 {
                let offs = if pass == 0 { &offsets } else { &backward };
                for step in 0..total {
                    let idx = if pass == 0 { step } else { total - 1 - step };
                    let i = idx % dims[0];
                    let j = (idx / dims[0]) % dims[1];
                    let k = idx / (dims[0] * dims[1]);
                    let p = center(i, j, k);
                    let mut best = dist[idx];
                    let mut best_q = near[idx];
                    for &(dx, dy, dz) in offs {
                        let (ni, nj, nk) = (i as isize + dx, j as isize + dy, k as isize + dz);
                        if ni < 0
                            || nj < 0
                            || nk < 0
                            || ni >= dims[0] as isize
                            || nj >= dims[1] as isize
                            || nk >= dims[2] as isize
                        {
                            continue;
                        }
                        let n = ni as usize + dims[0] * (nj as usize + dims[1] * nk as usize);
                        let q = near[n];
                        if q[0].is_nan() {
                            continue;
                        }
                        let d = (p - Vec3::new(q[0] as f64, q[1] as f64, q[2] as f64)).norm() as f32;
                        if d < best {
                            best = d;
                            best_q = q;
                        }
                    }
                    dist[idx] = best;
                    near[idx] = best_q;
                }
            }
        }
        Ok(Self {
            origin,
            voxel_size,
            dims,
            dist,
        })
    }

    /// Builds with a voxel size of `diameter / 128`.
    pub fn build_default(mesh: &TriangleMesh, padding: f64) -> Result<Self> {
        let d = mesh.diameter()?;
        Self::build(mesh, d / DEFAULT_RESOLUTION, padding)
    }

    #[inline]
    pub fn voxel(&self, i: usize, j: usize, k: usize) -> f32 {
        self.dist[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.voxel_size
    }

    /// Far corner of the volume (centre of the last voxel).
    pub fn extent_max(&self) -> Vec3 {
        self.voxel_center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Distance to the model surface at an object-frame point.
    ///
    /// Trilinear inside the volume. Outside, the distance to the volume box
    /// is added to the value at the nearest boundary point.
    pub fn query(&self, p: &Vec3) -> f64 {
        let hi = self.extent_max();
        let clamped = p.sup(&self.origin).inf(&hi);
        let outside = (p - clamped).norm();
        let g = (clamped - self.origin) / self.voxel_size;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            if n == 1 {
                continue;
            }
            // snap round-off so voxel centres read back their stored value
            let ga = if (g[a] - g[a].round()).abs() < 1e-9 { g[a].round() } else { g[a] };
            let f = ga.floor().clamp(0.0, (n - 2) as f64);
            base[a] = f as usize;
            frac[a] = (ga - f).clamp(0.0, 1.0);
        }
        let step = |a: usize, s: usize| if self.dims[a] > 1 { base[a] + s } else { 0 };
        let mut acc = 0.0;
        for c in 0..8 {
            let (sx, sy, sz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let w = (if sx == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if sy == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if sz == 1 { frac[2] } else { 1.0 - frac[2] });
            if w == 0.0 {
                continue;
            }
            acc += w * self.voxel(step(0, sx), step(1, sy), step(2, sz)) as f64;
        }
        acc + outside
    }

    /// Likelihood that camera-frame point `c` lies on the model at `pose`.
    pub fn cloud_weight(&self, c: &Vec3, pose: &RigidPose, sigma: f64, kernel: WeightKernel) -> f64 {
        let local = pose.rotation.transpose() * (c - pose.translation);
        kernel.eval(self.query(&local), sigma)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        for a in 0..3 {
            w.f64(self.origin[a]);
        }
        w.f64(self.voxel_size);
        for a in 0..3 {
            w.u32(self.dims[a] as u32);
        }
        for &d in &self.dist {
            w.f32(d);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, MAGIC, VERSION)?;
        let origin = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let voxel_size = r.f64()?;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = r.u32()? as usize;
            if *d == 0 || *d > MAX_DIM {
                return Err(Error::VolumeTooLarge(dims));
            }
        }
        let total = dims[0] * dims[1] * dims[2];
        let mut dist = Vec::with_capacity(total);
        for _ in 0..total {
            dist.push(r.f32()?);
        }
        r.finish()?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            dist,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle, TriangleMesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        let ab = b - a;
        let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (p - (a + ab * t)).norm()
    }

    /// Plane projection plus barycentric inside test, else nearest edge.
    fn oracle_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
        let n = (b - a).cross(&(c - a));
        let area2 = n.norm_squared();
        let h = (p - a).dot(&n) / area2;
        let q = p - n * h;
        let u = (b - q).cross(&(c - q)).dot(&n) / area2;
        let v = (c - q).cross(&(a - q)).dot(&n) / area2;
        let w = 1.0 - u - v;
        if u >= 0.0 && v >= 0.0 && w >= 0.0 {
            (p - q).norm()
        } else {
            segment_distance(p, a, b)
                .min(segment_distance(p, b, c))
                .min(segment_distance(p, c, a))
        }
    }

    fn oracle_mesh_distance(mesh: &TriangleMesh, p: &Vec3) -> f64 {
        (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.triangle(t);
                oracle_triangle_distance(p, &a, &b, &c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn rand_in(r: &mut ChaCha8Rng, lo: &Vec3, hi: &Vec3) -> Vec3 {
        Vec3::new(
            r.random_range(lo.x..hi.x),
            r.random_range(lo.y..hi.y),
            r.random_range(lo.z..hi.z),
        )
    }

    #[test]
    fn closest_point_matches_oracle() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let lo = Vec3::repeat(-1.0);
        let hi = Vec3::repeat(1.0);
        for _ in 0..5000 {
            let (a, b, c, p) = (
                rand_in(&mut r, &lo, &hi),
                rand_in(&mut r, &lo, &hi),
                rand_in(&mut r, &lo, &hi),
                rand_in(&mut r, &lo, &hi),
            );
            let q = closest_point_on_triangle(&p, &a, &b, &c);
            let want = oracle_triangle_distance(&p, &a, &b, &c);
            assert!(((p - q).norm() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_sphere_center_is_one_radius_away() {
        let mesh = TriangleMesh::icosphere(1.0, 3);
        let vs = 1.0 / 32.0;
        let vol = DistanceVolume::build(&mesh, vs, 0.1).unwrap();
        let d = vol.query(&Vec3::zeros());
        assert!((d - 1.0).abs() < vs, "{d}");
    }

    #[test]
    fn voxels_on_vertices_are_near_zero() {
        let mesh = TriangleMesh::cuboid(0.1, 0.06, 0.04);
        let vs = 0.002;
        let vol = DistanceVolume::build(&mesh, vs, 0.01).unwrap();
        for v in &mesh.vertices {
            let g = (v - vol.origin) / vs;
            let (i, j, k) = (g.x.round() as usize, g.y.round() as usize, g.z.round() as usize);
            let c = vol.voxel_center(i, j, k);
            // the voxel nearest the vertex: its distance is below one voxel
            assert!((vol.voxel(i, j, k) as f64) <= (c - v).norm() + 1e-6);
            assert!((vol.voxel(i, j, k) as f64) < vs);
        }
    }

    #[test]
    fn random_queries_match_brute_force() {
        let mesh = TriangleMesh::merged(&[
            TriangleMesh::icosphere(0.03, 2).transformed(&RigidPose::from_translation(Vec3::new(0.02, 0.0, 0.0))),
            TriangleMesh::cuboid(0.05, 0.02, 0.03),
        ])
        .unwrap();
        let vs = 0.002;
        let vol = DistanceVolume::build(&mesh, vs, 0.04).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let hi = vol.extent_max();
        let band = EXACT_BAND as f64 * vs;
        let mut in_band = 0;
        for _ in 0..10_000 {
            let p = rand_in(&mut r, &vol.origin, &hi);
            let want = oracle_mesh_distance(&mesh, &p);
            let got = vol.query(&p);
            let err = (got - want).abs();
            if want + vs * 3f64.sqrt() < band {
                in_band += 1;
                assert!(err < vs * 3f64.sqrt() / 2.0 + 1e-6, "band err {err} at {want}");
            } else {
                assert!(err < 2.0 * vs, "far err {err} at {want}");
            }
        }
        assert!(in_band > 500);
    }

    #[test]
    fn query_at_voxel_center_is_exact() {
        let mesh = TriangleMesh::cuboid(0.04, 0.04, 0.04);
        let vol = DistanceVolume::build(&mesh, 0.003, 0.01).unwrap();
        for (i, j, k) in [(0, 0, 0), (3, 5, 7), (vol.dims[0] - 1, 2, vol.dims[2] - 1)] {
            assert_eq!(vol.query(&vol.voxel_center(i, j, k)), vol.voxel(i, j, k) as f64);
        }
    }

    #[test]
    fn query_is_lipschitz() {
        let mesh = TriangleMesh::cylinder(0.02, 0.05, 12);
        let vs = 0.002;
        let vol = DistanceVolume::build(&mesh, vs, 0.02).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let lo = vol.origin - Vec3::repeat(0.01);
        let hi = vol.extent_max() + Vec3::repeat(0.01);
        for _ in 0..5000 {
            let p = rand_in(&mut r, &lo, &hi);
            let dir = rand_in(&mut r, &Vec3::repeat(-1.0), &Vec3::repeat(1.0)).normalize();
            let delta = dir * r.random_range(0.0..vs);
            let diff = (vol.query(&p) - vol.query(&(p + delta))).abs();
            // trilinear of a 1-Lipschitz field is Lipschitz in the l1 norm
            assert!(diff <= delta.abs().sum() + 1e-6, "{diff} {}", delta.norm());
        }
    }

    #[test]
    fn far_points_exceed_padding() {
        let mesh = TriangleMesh::cuboid(0.04, 0.04, 0.04);
        let pad = 0.01;
        let vol = DistanceVolume::build(&mesh, 0.002, pad).unwrap();
        assert!(vol.query(&Vec3::new(1.0, 0.0, 0.0)) > pad);
        assert!(vol.query(&Vec3::new(-0.5, 0.7, 2.0)) > pad);
    }

    #[test]
    fn bounds_cover_padded_box() {
        let mesh = TriangleMesh::cuboid(0.04, 0.02, 0.06);
        let pad = 0.1;
        let vol = DistanceVolume::build(&mesh, 0.004, pad).unwrap();
        let (lo, hi) = mesh.bounding_box();
        let top = vol.extent_max();
        for a in 0..3 {
            assert!(vol.origin[a] <= lo[a] - pad + 1e-12);
            assert!(top[a] >= hi[a] + pad - 1e-12);
        }
        assert!(vol.dist.iter().all(|&d| d >= 0.0 && d.is_finite()));
    }

    #[test]
    fn oversized_volume_is_rejected() {
        let mesh = TriangleMesh::cuboid(1.0, 1.0, 1.0);
        assert!(matches!(
            DistanceVolume::build(&mesh, 0.001, 0.0),
            Err(Error::VolumeTooLarge(_))
        ));
        assert!(DistanceVolume::build(&mesh, 0.0, 0.0).is_err());
    }

    #[test]
    fn kernel_values() {
        let s = 0.025;
        let g = WeightKernel::Gaussian;
        assert_eq!(g.eval(0.0, s), 1.0);
        assert!((g.eval(s, s) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((g.eval(3.0 * s, s) - 0.011109).abs() < 1e-5);
        let mut last = 1.0;
        for i in 1..100 {
            let w = g.eval(i as f64 * 0.001, s);
            assert!(w <= last && w < 1.0);
            last = w;
        }
        assert!((WeightKernel::Exponential.eval(s, s) - (-1.0 / s).exp()).abs() < 1e-15);
    }

    #[test]
    fn weight_is_invariant_under_rigid_motion() {
        let mesh = TriangleMesh::cuboid(0.06, 0.04, 0.03);
        let vol = DistanceVolume::build(&mesh, 0.002, 0.03).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let axis = rand_in(&mut r, &Vec3::repeat(-1.0), &Vec3::repeat(1.0)).normalize();
            let pose = RigidPose::new(
                axis_angle(&axis, r.random_range(-3.0..3.0)),
                Vec3::new(0.0, 0.0, 0.6) + rand_in(&mut r, &Vec3::repeat(-0.1), &Vec3::repeat(0.1)),
            );
            let axis2 = rand_in(&mut r, &Vec3::repeat(-1.0), &Vec3::repeat(1.0)).normalize();
            let t = RigidPose::new(
                axis_angle(&axis2, r.random_range(-3.0..3.0)),
                rand_in(&mut r, &Vec3::repeat(-1.0), &Vec3::repeat(1.0)),
            );
            let c = pose.transform_point(&rand_in(&mut r, &Vec3::repeat(-0.05), &Vec3::repeat(0.05)));
            let w1 = vol.cloud_weight(&c, &pose, 0.025, WeightKernel::Gaussian);
            let w2 = vol.cloud_weight(&t.transform_point(&c), &t.compose(&pose), 0.025, WeightKernel::Gaussian);
            assert!((w1 - w2).abs() < 1e-9);
        }
    }

    #[test]
    fn codec_round_trip_and_corruption() {
        let mesh = TriangleMesh::cuboid(0.04, 0.04, 0.04);
        let vol = DistanceVolume::build(&mesh, 0.004, 0.01).unwrap();
        let bytes = vol.to_bytes();
        assert_eq!(DistanceVolume::from_bytes(&bytes).unwrap(), vol);
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert_eq!(DistanceVolume::from_bytes(&bad), Err(Error::Checksum));
        assert_eq!(DistanceVolume::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Truncated));
        let mut magic = bytes;
        magic[0] = b'X';
        assert_eq!(DistanceVolume::from_bytes(&magic), Err(Error::BadMagic));
    }
}
