//! Occupancy grids, marching-cubes iso-surfaces, and Taubin smoothing.

use std::collections::HashMap;

use super::tables::TRI_TABLE;
use crate::error::{HairError, Result};
use crate::maps::OrientVolume;
use crate::mspace::{decode_component, ModelSpace, Vec3};

/// Scalar field on voxel centres, x fastest (same order as [`OrientVolume`]).
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl OccupancyGrid {
    pub fn from_fn(dims: [usize; 3], f: impl Fn([usize; 3]) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    data.push(f([ix, iy, iz]));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn index(&self, [ix, iy, iz]: [usize; 3]) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn get(&self, idx: [usize; 3]) -> f64 {
        self.data[self.index(idx)]
    }

    /// Value at signed coordinates, zero outside the grid.
    fn at(&self, i: [isize; 3]) -> f64 {
        if (0..3).all(|a| i[a] >= 0 && (i[a] as usize) < self.dims[a]) {
            self.get(i.map(|v| v as usize))
        } else {
            0.0
        }
    }

    /// Trilinear interpolation at continuous grid coordinates (voxel centres
    /// on integers), zero outside.
    pub fn trilinear(&self, g: &Vec3) -> f64 {
        let base = [g.x.floor(), g.y.floor(), g.z.floor()];
        let f = [g.x - base[0], g.y - base[1], g.z - base[2]];
        let b = base.map(|v| v as isize);
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if o[a] == 1 { f[a] } else { 1.0 - f[a] };
            }
            if w != 0.0 {
                acc += w * self.at([b[0] + o[0] as isize, b[1] + o[1] as isize, b[2] + o[2] as isize]);
            }
        }
        acc
    }
}

/// `occ = clamp(|2c − 1|, 0, 1)` per voxel.
pub fn occupancy_field(v: &OrientVolume) -> OccupancyGrid {
    OccupancyGrid {
        dims: v.dims(),
        data: v
            .raw()
            .iter()
            .map(|c| {
                let d = Vec3::new(
                    decode_component(c[0]),
                    decode_component(c[1]),
                    decode_component(c[2]),
                );
                d.norm().clamp(0.0, 1.0)
            })
            .collect(),
    }
}

/// Triangle mesh bounding the hair volume, with the occupancy it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct RoughShape {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub occ: OccupancyGrid,
    pub iso: f64,
    pub ms: ModelSpace,
}

impl RoughShape {
    /// Inside test: the containing voxel's occupancy when it is binary,
    /// trilinear occupancy otherwise.
    pub fn contains(&self, p: &Vec3) -> bool {
        let Some(idx) = self.ms.world_to_voxel(p) else {
            return false;
        };
        let o = self.occ.get(idx);
        if o == 0.0 || o == 1.0 {
            return o >= self.iso;
        }
        self.occ.trilinear(&self.ms.world_to_grid(p)) >= self.iso
    }

    pub fn area(&self) -> f64 {
        self.faces.iter().map(|f| tri_area(&self.vertices, f)).sum()
    }

    /// Signed enclosed volume; positive for outward-facing triangles.
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0)
            .sum()
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edges.insert((u.min(v), u.max(v)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// Area-weighted vertex normals, unit length (zero for isolated vertices).
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![Vec3::zeros(); self.vertices.len()];
        for &[a, b, c] in &self.faces {
            let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let fn_ = (pb - pa).cross(&(pc - pa));
            for i in [a, b, c] {
                n[i] += fn_;
            }
        }
        n.into_iter()
            .map(|v| {
                let l = v.norm();
                if l > 0.0 {
                    v / l
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }
}

fn tri_area(v: &[Vec3], &[a, b, c]: &[usize; 3]) -> f64 {
    0.5 * (v[b] - v[a]).cross(&(v[c] - v[a])).norm()
}

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Marching cubes over the occupancy field padded by one empty voxel on every
/// side, so the surface is closed. Vertices are shared along grid edges.
/// Components under 1% of the total area are dropped.
pub fn extract_surface(occ: &OccupancyGrid, iso: f64, ms: &ModelSpace) -> Result<RoughShape> {
    if !(iso > 0.0 && iso < 1.0) {
        return Err(HairError::InvalidArgument(format!("iso level must be in (0, 1), got {iso}")));
    }
    if occ.dims != ms.vol_res {
        return Err(HairError::Shape(format!(
            "occupancy grid {:?} does not match the model space {:?}",
            occ.dims, ms.vol_res
        )));
    }
    let [nx, ny, nz] = occ.dims;
    // padded coordinate q maps to voxel q − 1
    let val = |q: [usize; 3]| occ.at([q[0] as isize - 1, q[1] as isize - 1, q[2] as isize - 1]);
    let pos = |q: [usize; 3]| {
        let lo = ms.box_min();
        let e = ms.voxel_edge();
        Vec3::new(
            lo.x + (q[0] as f64 - 0.5) * e,
            lo.y + (q[1] as f64 - 0.5) * e,
            lo.z + (q[2] as f64 - 0.5) * e,
        )
    };
    let (px, py) = (nx + 2, ny + 2);
    let key = |q: [usize; 3], axis: usize| ((q[2] * py + q[1]) * px + q[0]) * 3 + axis;

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut shared: HashMap<usize, usize> = HashMap::new();
    for cz in 0..nz + 1 {
        for cy in 0..ny + 1 {
            for cx in 0..nx + 1 {
                let q: Vec<[usize; 3]> = CORNERS
                    .iter()
                    .map(|c| [cx + c[0], cy + c[1], cz + c[2]])
                    .collect();
                let v: Vec<f64> = q.iter().map(|&c| val(c)).collect();
                let mut case = 0usize;
                for (i, &x) in v.iter().enumerate() {
                    if x < iso {
                        case |= 1 << i;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                let row = &TRI_TABLE[case];
                for &e in row.iter().take_while(|&&e| e >= 0) {
                    let e = e as usize;
                    if edge_vertex[e] != usize::MAX {
                        continue;
                    }
                    let [a, b] = EDGES[e];
                    let (a, b) = if q[a] <= q[b] { (a, b) } else { (b, a) };
                    let axis = (0..3).find(|&ax| q[a][ax] != q[b][ax]).expect("edge axis");
                    let k = key(q[a], axis);
                    edge_vertex[e] = *shared.entry(k).or_insert_with(|| {
                        let t = (iso - v[a]) / (v[b] - v[a]);
                        vertices.push(pos(q[a]) + (pos(q[b]) - pos(q[a])) * t);
                        vertices.len() - 1
                    });
                }
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    let f = [
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[1] as usize],
                        edge_vertex[tri[2] as usize],
                    ];
                    faces.push(f);
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(HairError::EmptyShape(iso));
    }
    let (vertices, faces) = drop_small_components(vertices, faces, 0.01);
    Ok(RoughShape {
        vertices,
        faces,
        occ: occ.clone(),
        iso,
        ms: *ms,
    })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Removes connected components whose area is below `frac` of the total and
/// compacts the vertex list.
fn drop_small_components(
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    frac: f64,
) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut parent: Vec<usize> = (0..vertices.len()).collect();
    for &[a, b, c] in &faces {
        for (u, v) in [(a, b), (b, c)] {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru.max(rv)] = ru.min(rv);
            }
        }
    }
    let mut area: HashMap<usize, f64> = HashMap::new();
    let mut total = 0.0;
    for f in &faces {
        let a = tri_area(&vertices, f);
        *area.entry(find(&mut parent, f[0])).or_default() += a;
        total += a;
    }
    let keep_face: Vec<bool> = faces
        .iter()
        .map(|f| area[&find(&mut parent, f[0])] >= frac * total)
        .collect();
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut out_v = Vec::new();
    let mut out_f = Vec::new();
    for (f, keep) in faces.iter().zip(keep_face) {
        if !keep {
            continue;
        }
        out_f.push(f.map(|i| {
            if remap[i] == usize::MAX {
                remap[i] = out_v.len();
                out_v.push(vertices[i]);
            }
            remap[i]
        }));
    }
    (out_v, out_f)
}

/// Taubin λ|μ smoothing with uniform umbrella weights.
pub fn smooth_mesh(shape: &RoughShape, iters: usize, lambda: f64, mu: f64) -> RoughShape {
    let mut out = shape.clone();
    if iters == 0 {
        return out;
    }
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); shape.vertices.len()];
    for &[a, b, c] in &shape.faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            nbrs[u].push(v);
            nbrs[v].push(u);
        }
    }
    for n in &mut nbrs {
        n.sort_unstable();
        n.dedup();
    }
    let step = |v: &[Vec3], f: f64| -> Vec<Vec3> {
        v.iter()
            .zip(&nbrs)
            .map(|(p, n)| {
                if n.is_empty() {
                    return *p;
                }
                let mean = n.iter().fold(Vec3::zeros(), |acc, &j| acc + v[j]) / n.len() as f64;
                p + (mean - p) * f
            })
            .collect()
    };
    for _ in 0..iters {
        out.vertices = step(&out.vertices, lambda);
        out.vertices = step(&out.vertices, mu);
    }
    out
}

pub const TAUBIN_LAMBDA: f64 = 0.5;
pub const TAUBIN_MU: f64 = -0.53;

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_grid(ms: &ModelSpace, c: [f64; 3], r: f64) -> OccupancyGrid {
        OccupancyGrid::from_fn(ms.vol_res, |[x, y, z]| {
            let d = ((x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2)).sqrt();
            (0.5 + (r - d) / 2.0).clamp(0.0, 1.0)
        })
    }

    fn grid_space() -> ModelSpace {
        ModelSpace::new(1.0, 1.0, [64, 64, 64], 512).unwrap()
    }

    #[test]
    fn occupancy_examples() {
        let ms = ModelSpace::scaled(8).unwrap();
        let mut v = OrientVolume::empty(ms);
        assert!(occupancy_field(&v).data.iter().all(|&o| o == 0.0));
        v.set_dir([1, 2, 3], &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        v.set([0, 0, 0], crate::mspace::Rgb01([0.75, 0.5, 0.5]));
        let occ = occupancy_field(&v);
        assert_eq!(occ.get([1, 2, 3]), 1.0);
        assert_eq!(occ.get([0, 0, 0]), 0.5);
        assert_eq!(occ.data.iter().filter(|&&o| o != 0.0).count(), 2);
    }

    #[test]
    fn ball_is_closed_sphere_with_correct_area() {
        let ms = grid_space();
        let e = ms.voxel_edge();
        let r = 20.0;
        let s = extract_surface(&ball_grid(&ms, [31.3, 32.2, 31.7], r), 0.5, &ms).unwrap();
        assert_eq!(s.euler_characteristic(), 2);
        let exact = 4.0 * std::f64::consts::PI * (r * e).powi(2);
        assert!((s.area() / exact - 1.0).abs() < 0.05, "area ratio {}", s.area() / exact);
        assert!(s.volume() > 0.0, "triangles face outward");
    }

    #[test]
    fn full_grid_hugs_the_box() {
        let ms = ModelSpace::scaled(8).unwrap();
        let occ = OccupancyGrid::from_fn(ms.vol_res, |_| 1.0);
        let s = extract_surface(&occ, 0.5, &ms).unwrap();
        let (lo, hi) = (ms.box_min(), ms.box_max());
        let tol = 1e-12;
        for p in &s.vertices {
            let on_face = (0..3).any(|a| (p[a] - lo[a]).abs() < tol || (p[a] - hi[a]).abs() < tol);
            assert!(on_face && ms.contains(&(p * (1.0 - 1e-9))));
        }
        assert_eq!(s.euler_characteristic(), 2);
    }

    #[test]
    fn empty_field_is_an_error() {
        let ms = ModelSpace::scaled(8).unwrap();
        let occ = OccupancyGrid::from_fn(ms.vol_res, |_| 0.0);
        assert!(matches!(extract_surface(&occ, 0.5, &ms), Err(HairError::EmptyShape(_))));
        assert!(extract_surface(&occ, 1.0, &ms).is_err());
    }

    #[test]
    fn small_components_are_dropped() {
        let ms = grid_space();
        let big = ball_grid(&ms, [30.0, 30.0, 30.0], 16.0);
        let tiny = ball_grid(&ms, [58.0, 58.0, 58.0], 1.2);
        let occ = OccupancyGrid {
            dims: big.dims,
            data: big.data.iter().zip(&tiny.data).map(|(a, b)| a.max(*b)).collect(),
        };
        let s = extract_surface(&occ, 0.5, &ms).unwrap();
        let far = s.vertices.iter().filter(|p| ms.world_to_grid(p).x > 50.0).count();
        assert_eq!(far, 0);
        assert_eq!(s.euler_characteristic(), 2);
    }

    #[test]
    fn taubin_keeps_count_and_sphere_radius() {
        let ms = grid_space();
        let e = ms.voxel_edge();
        let c = [32.4, 31.6, 32.1];
        let s = extract_surface(&ball_grid(&ms, c, 20.0), 0.5, &ms).unwrap();
        assert_eq!(smooth_mesh(&s, 0, TAUBIN_LAMBDA, TAUBIN_MU), s);
        let t = smooth_mesh(&s, 20, TAUBIN_LAMBDA, TAUBIN_MU);
        assert_eq!(t.vertices.len(), s.vertices.len());
        let center = ms.voxel_center([0, 0, 0]) + Vec3::new(c[0], c[1], c[2]) * e;
        let radii: Vec<f64> = t.vertices.iter().map(|p| (p - center).norm() / e).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        assert!((mean / 20.0 - 1.0).abs() < 0.02, "mean radius {mean}");
        assert!(radii.iter().all(|r| (r / mean - 1.0).abs() < 0.02));
        assert!((t.volume() / s.volume() - 1.0).abs() < 0.1);
    }

    #[test]
    fn inside_test_uses_voxels_then_trilinear() {
        let ms = ModelSpace::scaled(8).unwrap();
        let occ = OccupancyGrid::from_fn(ms.vol_res, |[x, _, _]| if x < 8 { 1.0 } else { 0.0 });
        let s = extract_surface(&occ, 0.5, &ms).unwrap();
        assert!(s.contains(&ms.voxel_center([7, 3, 3])));
        assert!(!s.contains(&ms.voxel_center([8, 3, 3])));
        assert!(!s.contains(&Vec3::new(2.0, 0.0, 0.0)));
    }
}
