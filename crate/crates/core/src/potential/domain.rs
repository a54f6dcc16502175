use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::solver::NONE;
use crate::error::{invalid, Result};
use crate::lattice::{CylinderPoint, LatticePoint, TorusParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Subset of `Z^dim`.
    Lattice { dim: usize },
    /// Subset of the cylinder; coordinates are `(y_0, ..., y_{d-1}, z)`.
    Cylinder { params: TorusParams },
}

/// A finite ambient set with its nearest-neighbour structure. Slot `s` of a
/// site is the move `-e_{s/2}` for even `s` and `+e_{s/2}` for odd `s`;
/// moves leaving the set point to [`NONE`].
#[derive(Debug, Clone)]
pub struct FiniteDomain {
    geometry: Geometry,
    points: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, u32>,
    nbr: Vec<u32>,
}

impl FiniteDomain {
    fn assemble(geometry: Geometry, points: Vec<Vec<i64>>) -> Result<Self> {
        if points.len() >= NONE as usize {
            return Err(invalid("domain too large"));
        }
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            index.insert(p.clone(), i as u32);
        }
        let mut dom = Self {
            geometry,
            points,
            index,
            nbr: Vec::new(),
        };
        let deg = dom.degree();
        let mut nbr = vec![NONE; dom.points.len() * deg];
        for (i, p) in dom.points.iter().enumerate() {
            for s in 0..deg {
                let q = dom.shift(p, s);
                if let Some(&j) = dom.index.get(&q) {
                    nbr[i * deg + s] = j;
                }
            }
        }
        dom.nbr = nbr;
        Ok(dom)
    }

    /// Any finite set of lattice points; it must be connected.
    pub fn lattice_set(points: &[LatticePoint]) -> Result<Self> {
        let dim = points
            .first()
            .map(LatticePoint::dim)
            .ok_or_else(|| invalid("ambient set is empty"))?;
        if points.iter().any(|p| p.dim() != dim) {
            return Err(invalid("ambient points have different dimensions"));
        }
        let mut pts: Vec<Vec<i64>> = points.iter().map(|p| p.coords.clone()).collect();
        pts.sort();
        pts.dedup();
        let dom = Self::assemble(Geometry::Lattice { dim }, pts)?;
        if !dom.is_connected() {
            return Err(invalid("ambient set is not connected"));
        }
        Ok(dom)
    }

    /// The box `center + [-radius, radius]^dim`.
    pub fn lattice_box(center: &LatticePoint, radius: u64) -> Result<Self> {
        let dim = center.dim();
        let r = radius as i64;
        let side = (2 * r + 1) as usize;
        let total = side
            .checked_pow(dim as u32)
            .ok_or_else(|| invalid("box too large"))?;
        let mut pts = Vec::with_capacity(total);
        for mut k in 0..total {
            let mut c = Vec::with_capacity(dim);
            for axis in 0..dim {
                c.push(center.coords[axis] - r + (k % side) as i64);
                k /= side;
            }
            pts.push(c);
        }
        Self::assemble(Geometry::Lattice { dim }, pts)
    }

    /// The slab `T x [z_lo, z_hi]` of the cylinder.
    pub fn cylinder_slab(params: TorusParams, z_lo: i64, z_hi: i64) -> Result<Self> {
        if z_lo > z_hi {
            return Err(invalid("empty slab"));
        }
        let vol = params.volume();
        let mut pts = Vec::with_capacity((vol * (z_hi - z_lo + 1) as u64) as usize);
        for z in z_lo..=z_hi {
            for y in 0..vol as u32 {
                let mut c: Vec<i64> = params.decode(y).into_iter().map(i64::from).collect();
                c.push(z);
                pts.push(c);
            }
        }
        Self::assemble(Geometry::Cylinder { params }, pts)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Number of coordinates of a point.
    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Lattice { dim } => dim,
            Geometry::Cylinder { params } => params.d() + 1,
        }
    }

    /// Neighbours per site, `2 dim`.
    pub fn degree(&self) -> usize {
        2 * self.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: u32) -> &[i64] {
        &self.points[i as usize]
    }

    pub fn points(&self) -> &[Vec<i64>] {
        &self.points
    }

    pub fn index_of(&self, coords: &[i64]) -> Option<u32> {
        self.index.get(coords).copied()
    }

    pub fn neighbor(&self, i: u32, slot: usize) -> u32 {
        self.nbr[i as usize * self.degree() + slot]
    }

    pub fn neighbors(&self, i: u32) -> &[u32] {
        let deg = self.degree();
        &self.nbr[i as usize * deg..(i as usize + 1) * deg]
    }

    fn shift(&self, p: &[i64], slot: usize) -> Vec<i64> {
        let axis = slot / 2;
        let delta = if slot % 2 == 0 { -1 } else { 1 };
        let mut q = p.to_vec();
        q[axis] += delta;
        if let Geometry::Cylinder { params } = self.geometry {
            if axis < params.d() {
                q[axis] = q[axis].rem_euclid(params.n() as i64);
            }
        }
        q
    }

    /// Coordinates of a cylinder point in this domain's convention.
    pub fn cylinder_coords(p: &CylinderPoint) -> Vec<i64> {
        let mut c: Vec<i64> = p.y.iter().map(|&v| v as i64).collect();
        c.push(p.z);
        c
    }

    fn is_connected(&self) -> bool {
        if self.points.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in self.neighbors(i) {
                if j != NONE && !seen[j as usize] {
                    seen[j as usize] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.len()
    }

    /// Domain indices of `targets`, failing if any lies outside.
    pub fn indices_of(&self, targets: &[Vec<i64>]) -> Result<Vec<u32>> {
        targets
            .iter()
            .map(|c| self.index_of(c).ok_or(crate::error::Error::NotContained))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_and_slab_sizes() {
        let b = FiniteDomain::lattice_box(&LatticePoint::origin(3), 2).unwrap();
        assert_eq!(b.len(), 125);
        let centre = b.index_of(&[0, 0, 0]).unwrap();
        assert!(b.neighbors(centre).iter().all(|&j| j != NONE));
        let corner = b.index_of(&[2, 2, 2]).unwrap();
        assert_eq!(b.neighbors(corner).iter().filter(|&&j| j == NONE).count(), 3);

        let params = TorusParams::new(4, 2).unwrap();
        let s = FiniteDomain::cylinder_slab(params, -1, 1).unwrap();
        assert_eq!(s.len(), 48);
        let i = s.index_of(&[0, 0, 1]).unwrap();
        // torus moves wrap, the upward move leaves the slab
        assert_eq!(s.neighbors(i).iter().filter(|&&j| j == NONE).count(), 1);
        assert_eq!(s.point(s.neighbor(i, 0)), &[3, 0, 1]);
    }

    #[test]
    fn disconnected_sets_are_rejected() {
        let pts = vec![LatticePoint::new(vec![0, 0, 0]), LatticePoint::new(vec![2, 0, 0])];
        assert!(FiniteDomain::lattice_set(&pts).is_err());
    }
}
