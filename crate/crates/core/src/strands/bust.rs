//! The shared head-and-shoulders mesh.
//!
//! Meshes are stored as ASCII OFF. Scalp faces carry the colour `1 0 0`;
//! collision ellipsoids used by the hairstyle generator are kept in
//! `# ellipsoid cx cy cz rx ry rz` comment lines (the first one is the head).

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{HairError, Result};
use crate::mspace::{ModelSpace, Vec3};

/// Axis-aligned ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadShape {
    pub center: Vec3,
    pub radii: Vec3,
}

impl HeadShape {
    /// Normalised coordinates: the surface is the unit sphere.
    pub fn local(&self, p: &Vec3) -> Vec3 {
        (p - self.center).component_div(&self.radii)
    }

    pub fn contains(&self, p: &Vec3, inflate: f64) -> bool {
        self.local(p).norm() < inflate
    }

    /// Radial projection onto the surface scaled by `inflate`.
    pub fn push_out(&self, p: &Vec3, inflate: f64) -> Vec3 {
        let u = self.local(p);
        let n = u.norm();
        if n >= inflate || n == 0.0 {
            return *p;
        }
        self.center + (u * (inflate / n)).component_mul(&self.radii)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BustModel {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Indices into `faces`.
    pub scalp: Vec<usize>,
    pub collision: Vec<HeadShape>,
}

struct MeshBuilder {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl MeshBuilder {
    /// Latitude/longitude ellipsoid with poles on `±y`, exactly mirror
    /// symmetric in `x`; longitude 0 points at `+z`.
    fn ellipsoid(&mut self, shape: HeadShape, n_lat: usize, n_lon: usize) -> std::ops::Range<usize> {
        let base = self.vertices.len();
        let first_face = self.faces.len();
        let HeadShape { center: c, radii: r } = shape;
        let unit_lon = |j: usize| -> (f64, f64) {
            let phi = |j: usize| 2.0 * std::f64::consts::PI * j as f64 / n_lon as f64;
            if 2 * j == n_lon {
                (0.0, -1.0)
            } else if 2 * j < n_lon {
                (phi(j).sin(), phi(j).cos())
            } else {
                let m = n_lon - j;
                (-phi(m).sin(), phi(m).cos())
            }
        };
        self.vertices.push(c + Vec3::new(0.0, r.y, 0.0));
        for i in 1..n_lat {
            let theta = std::f64::consts::PI * i as f64 / n_lat as f64;
            let (st, ct) = (theta.sin(), theta.cos());
            let (st, ct) = if 2 * i == n_lat { (1.0, 0.0) } else { (st, ct) };
            for j in 0..n_lon {
                let (sx, cz) = unit_lon(j);
                self.vertices
                    .push(c + Vec3::new(r.x * st * sx, r.y * ct, r.z * st * cz));
            }
        }
        self.vertices.push(c - Vec3::new(0.0, r.y, 0.0));
        let top = base;
        let bottom = self.vertices.len() - 1;
        let ring = |i: usize, j: usize| base + 1 + (i - 1) * n_lon + (j % n_lon);
        for j in 0..n_lon {
            self.add_outward(top, ring(1, j), ring(1, j + 1), c);
        }
        for i in 1..n_lat - 1 {
            for j in 0..n_lon {
                let (a, b, cc, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                self.add_outward(a, cc, d, c);
                self.add_outward(a, d, b, c);
            }
        }
        for j in 0..n_lon {
            self.add_outward(bottom, ring(n_lat - 1, j + 1), ring(n_lat - 1, j), c);
        }
        first_face..self.faces.len()
    }

    fn add_outward(&mut self, a: usize, b: usize, c: usize, center: Vec3) {
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let n = (pb - pa).cross(&(pc - pa));
        let centroid = (pa + pb + pc) / 3.0;
        if n.dot(&(centroid - center)) >= 0.0 {
            self.faces.push([a, b, c]);
        } else {
            self.faces.push([a, c, b]);
        }
    }
}

impl BustModel {
    /// The low-poly head, neck and shoulders shipped as `assets/bust.off`.
    pub fn procedural() -> Self {
        let head = HeadShape {
            center: Vec3::new(0.0, 0.16, -0.02),
            radii: Vec3::new(0.12, 0.15, 0.14),
        };
        let neck = HeadShape {
            center: Vec3::new(0.0, -0.08, -0.03),
            radii: Vec3::new(0.06, 0.14, 0.06),
        };
        let shoulders = HeadShape {
            center: Vec3::new(0.0, -0.38, -0.03),
            radii: Vec3::new(0.34, 0.11, 0.13),
        };
        let mut mb = MeshBuilder {
            vertices: Vec::new(),
            faces: Vec::new(),
        };
        let head_faces = mb.ellipsoid(head, 12, 20);
        mb.ellipsoid(neck, 6, 12);
        mb.ellipsoid(shoulders, 8, 20);
        let mut bust = BustModel {
            vertices: mb.vertices,
            faces: mb.faces,
            scalp: Vec::new(),
            collision: vec![head, neck, shoulders],
        };
        bust.scalp = head_faces
            .filter(|&f| {
                let u = head.local(&bust.face_centroid(f)).normalize();
                let crown = u.y > 0.15 && !(u.z > 0.45 && u.y < 0.8);
                let back = u.y > -0.35 && u.z < -0.2;
                crown || back
            })
            .collect();
        bust
    }

    /// A single closed ellipsoid with no scalp; handy for depth tests.
    pub fn ellipsoid(center: Vec3, radii: Vec3, n_lat: usize, n_lon: usize) -> Self {
        let shape = HeadShape { center, radii };
        let mut mb = MeshBuilder {
            vertices: Vec::new(),
            faces: Vec::new(),
        };
        mb.ellipsoid(shape, n_lat, n_lon);
        BustModel {
            vertices: mb.vertices,
            faces: mb.faces,
            scalp: Vec::new(),
            collision: vec![shape],
        }
    }

    pub fn validate(&self, ms: &ModelSpace) -> Result<()> {
        if self.faces.is_empty() {
            return Err(HairError::InvalidBust("mesh has no faces".into()));
        }
        let nv = self.vertices.len();
        if self.faces.iter().flatten().any(|&i| i >= nv) {
            return Err(HairError::InvalidBust("face index out of range".into()));
        }
        if self.scalp.iter().any(|&f| f >= self.faces.len()) {
            return Err(HairError::InvalidBust("scalp face index out of range".into()));
        }
        let slack = 1e-9;
        let lo = ms.box_min() - Vec3::repeat(slack);
        let hi = ms.box_max() + Vec3::repeat(slack);
        if let Some(v) = self
            .vertices
            .iter()
            .find(|v| (0..3).any(|a| v[a] < lo[a] || v[a] > hi[a]))
        {
            return Err(HairError::InvalidBust(format!(
                "vertex {v:?} outside the bounding box"
            )));
        }
        Ok(())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (a + b + c) / 3.0
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn head(&self) -> Option<&HeadShape> {
        self.collision.first()
    }

    /// Area-weighted sampler over the scalp faces.
    pub fn scalp_sampler(&self) -> Result<ScalpSampler<'_>> {
        if self.scalp.is_empty() {
            return Err(HairError::InvalidBust("bust has no scalp faces".into()));
        }
        let mut cumulative = Vec::with_capacity(self.scalp.len());
        let mut total = 0.0;
        for &f in &self.scalp {
            total += self.face_area(f);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(HairError::InvalidBust("scalp has zero area".into()));
        }
        Ok(ScalpSampler {
            bust: self,
            cumulative,
            total,
        })
    }

    pub fn to_off(&self) -> String {
        let mut s = String::from("OFF\n");
        for e in &self.collision {
            let _ = writeln!(
                s,
                "# ellipsoid {} {} {} {} {} {}",
                e.center.x, e.center.y, e.center.z, e.radii.x, e.radii.y, e.radii.z
            );
        }
        let _ = writeln!(s, "{} {} 0", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
        }
        let mut is_scalp = vec![false; self.faces.len()];
        for &f in &self.scalp {
            is_scalp[f] = true;
        }
        for (f, [a, b, c]) in self.faces.iter().enumerate() {
            if is_scalp[f] {
                let _ = writeln!(s, "3 {a} {b} {c} 1 0 0");
            } else {
                let _ = writeln!(s, "3 {a} {b} {c}");
            }
        }
        s
    }

    pub fn from_off(text: &str) -> Result<Self> {
        let bad = |m: &str| HairError::InvalidBust(format!("OFF: {m}"));
        let mut collision = Vec::new();
        let mut tokens: Vec<Vec<&str>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.first() == Some(&"ellipsoid") && parts.len() == 7 {
                    let v: Vec<f64> = parts[1..]
                        .iter()
                        .map(|t| t.parse::<f64>().map_err(|_| bad("bad ellipsoid comment")))
                        .collect::<Result<_>>()?;
                    collision.push(HeadShape {
                        center: Vec3::new(v[0], v[1], v[2]),
                        radii: Vec3::new(v[3], v[4], v[5]),
                    });
                }
                continue;
            }
            if !line.is_empty() {
                tokens.push(line.split_whitespace().collect());
            }
        }
        let mut lines = tokens.into_iter();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        if header != ["OFF"] {
            return Err(bad("missing OFF header"));
        }
        let counts = lines.next().ok_or_else(|| bad("missing counts"))?;
        let parse_usize = |t: &str| t.parse::<usize>().map_err(|_| bad("bad integer"));
        if counts.len() < 2 {
            return Err(bad("bad counts line"));
        }
        let (nv, nf) = (parse_usize(counts[0])?, parse_usize(counts[1])?);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let t = lines.next().ok_or_else(|| bad("truncated vertices"))?;
            if t.len() < 3 {
                return Err(bad("vertex needs 3 coordinates"));
            }
            let c: Vec<f64> = t[..3]
                .iter()
                .map(|x| x.parse::<f64>().map_err(|_| bad("bad coordinate")))
                .collect::<Result<_>>()?;
            vertices.push(Vec3::new(c[0], c[1], c[2]));
        }
        let mut faces = Vec::with_capacity(nf);
        let mut scalp = Vec::new();
        for _ in 0..nf {
            let t = lines.next().ok_or_else(|| bad("truncated faces"))?;
            let n = parse_usize(t.first().ok_or_else(|| bad("empty face"))?)?;
            if t.len() < 1 + n || n < 3 {
                return Err(bad("face vertex count"));
            }
            let idx: Vec<usize> = t[1..1 + n].iter().map(|x| parse_usize(x)).collect::<Result<_>>()?;
            let colour = &t[1 + n..];
            let tagged = colour.len() >= 3
                && colour[..3]
                    .iter()
                    .map(|x| x.parse::<f64>().unwrap_or(-1.0))
                    .eq([1.0, 0.0, 0.0]);
            // fan-triangulate polygons
            for k in 1..n - 1 {
                if tagged {
                    scalp.push(faces.len());
                }
                faces.push([idx[0], idx[k], idx[k + 1]]);
            }
        }
        if faces.iter().flatten().any(|&i| i >= vertices.len()) {
            return Err(bad("face index out of range"));
        }
        Ok(BustModel {
            vertices,
            faces,
            scalp,
            collision,
        })
    }
}

pub struct ScalpSampler<'a> {
    bust: &'a BustModel,
    cumulative: Vec<f64>,
    total: f64,
}

impl ScalpSampler<'_> {
    /// Uniform point on the scalp and the outward normal of its face.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec3, Vec3) {
        let t = rng.random::<f64>() * self.total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= t)
            .min(self.cumulative.len() - 1);
        let f = self.bust.scalp[k];
        let [a, b, c] = self.bust.triangle(f);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let p = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        (p, self.bust.face_normal(f))
    }
}
