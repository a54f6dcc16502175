//! Geometry of the discrete cylinder `E = (Z/NZ)^d x Z` and of the full
//! lattice `Z^{d+1}`.
//!
//! Torus residues are normalized into `[0, N)` when a point is built and
//! never anywhere else. Hot loops work with [`Site`], which packs the torus
//! coordinate into a single index `y_0 + y_1 N + ... + y_{d-1} N^{d-1}`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusParams {
    n: u32,
    d: usize,
}

impl TorusParams {
    pub fn new(n: u32, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("torus side N must be >= 2, got {n}")));
        }
        if d < 2 {
            return Err(invalid(format!("torus dimension d must be >= 2, got {d}")));
        }
        let volume = (n as u64).checked_pow(d as u32);
        match volume {
            Some(v) if v <= u32::MAX as u64 => Ok(Self { n, d }),
            _ => Err(invalid(format!("torus volume {n}^{d} does not fit a u32 index"))),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of sites `N^d` of the torus.
    pub fn volume(&self) -> u64 {
        (self.n as u64).pow(self.d as u32)
    }

    /// `N^d`, the natural vertical scale `a_N`.
    pub fn vertical_scale(&self) -> f64 {
        self.volume() as f64
    }

    pub fn encode(&self, y: &[u32]) -> u32 {
        debug_assert_eq!(y.len(), self.d);
        y.iter().rev().fold(0u32, |acc, &c| acc * self.n + c)
    }

    pub fn decode(&self, mut index: u32) -> Vec<u32> {
        let mut y = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            y.push(index % self.n);
            index /= self.n;
        }
        y
    }

    pub(crate) fn wrap(&self, c: i64) -> u32 {
        c.rem_euclid(self.n as i64) as u32
    }

    /// Minimal wrapped distance between two residues.
    pub fn torus_gap(&self, a: u32, b: u32) -> u64 {
        let diff = a.abs_diff(b);
        diff.min(self.n - diff) as u64
    }
}

/// A point `x = (y, z)` of the cylinder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CylinderPoint {
    pub y: Vec<u32>,
    pub z: i64,
}

impl CylinderPoint {
    /// Builds a point, reducing the torus coordinates mod N.
    pub fn new(y: &[i64], z: i64, params: &TorusParams) -> Result<Self> {
        if y.len() != params.d() {
            return Err(invalid(format!(
                "torus coordinate has {} components, expected d = {}",
                y.len(),
                params.d()
            )));
        }
        Ok(Self {
            y: y.iter().map(|&c| params.wrap(c)).collect(),
            z,
        })
    }

    pub fn origin(params: &TorusParams) -> Self {
        Self {
            y: vec![0; params.d()],
            z: 0,
        }
    }

    pub fn site(&self, params: &TorusParams) -> Site {
        Site {
            y: params.encode(&self.y),
            z: self.z,
        }
    }
}

impl fmt::Display for CylinderPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(y=(")?;
        for (i, c) in self.y.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "), z={})", self.z)
    }
}

/// Packed cylinder site used by the simulation loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub y: u32,
    pub z: i64,
}

impl Site {
    pub fn point(&self, params: &TorusParams) -> CylinderPoint {
        CylinderPoint {
            y: params.decode(self.y),
            z: self.z,
        }
    }
}

/// A point of `Z^{d+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub coords: Vec<i64>,
}

impl LatticePoint {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Self {
            coords: coords.into(),
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![0; dim],
        }
    }

    /// Unit vector `e_i` (zero-based axis).
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut coords = vec![0; dim];
        coords[axis] = 1;
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn add(&self, other: &LatticePoint) -> LatticePoint {
        LatticePoint {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn linf_norm(&self) -> u64 {
        self.coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn linf_distance(&self, other: &LatticePoint) -> u64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Canonical projection `pi_E : Z^{d+1} -> E`.
pub fn project_to_cylinder(p: &LatticePoint, params: &TorusParams) -> Result<CylinderPoint> {
    if p.dim() != params.d() + 1 {
        return Err(invalid(format!(
            "lattice point has dimension {}, expected d + 1 = {}",
            p.dim(),
            params.d() + 1
        )));
    }
    let d = params.d();
    CylinderPoint::new(&p.coords[..d], p.coords[d], params)
}

/// The `2(d+1)` nearest neighbours of `x`: axis ascending, minus before
/// plus, the vertical axis last.
pub fn neighbors(x: &CylinderPoint, params: &TorusParams) -> Vec<CylinderPoint> {
    let n = params.n();
    let mut out = Vec::with_capacity(2 * (params.d() + 1));
    for axis in 0..params.d() {
        for delta in [n - 1, 1] {
            let mut y = x.y.clone();
            y[axis] = (y[axis] + delta) % n;
            out.push(CylinderPoint { y, z: x.z });
        }
    }
    for dz in [-1, 1] {
        out.push(CylinderPoint {
            y: x.y.clone(),
            z: x.z + dz,
        });
    }
    out
}

/// l-infinity distance induced on the cylinder.
pub fn linf_distance(a: &CylinderPoint, b: &CylinderPoint, params: &TorusParams) -> u64 {
    let torus = a
        .y
        .iter()
        .zip(&b.y)
        .map(|(&p, &q)| params.torus_gap(p, q))
        .max()
        .unwrap_or(0);
    torus.max(a.z.abs_diff(b.z))
}

/// Finite set of offsets in `Z^{d+1}`, deduplicated and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Pattern {
    offsets: Vec<LatticePoint>,
}

impl Pattern {
    pub fn new(points: impl IntoIterator<Item = LatticePoint>) -> Result<Self> {
        let set: BTreeSet<LatticePoint> = points.into_iter().collect();
        let offsets: Vec<LatticePoint> = set.into_iter().collect();
        if let Some(first) = offsets.first() {
            let dim = first.dim();
            if dim == 0 || offsets.iter().any(|p| p.dim() != dim) {
                return Err(invalid("pattern offsets must share one positive dimension"));
            }
        }
        Ok(Self { offsets })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// The single-site pattern `{0}`.
    pub fn origin(dim: usize) -> Self {
        Self {
            offsets: vec![LatticePoint::origin(dim)],
        }
    }

    /// Axis-aligned block `[0, sides_0) x ... x [0, sides_{D-1})`.
    pub fn block(sides: &[u32]) -> Self {
        let mut points = vec![LatticePoint::new(Vec::new())];
        for &side in sides {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (0..side as i64).map(move |c| {
                        let mut coords = p.coords.clone();
                        coords.push(c);
                        LatticePoint::new(coords)
                    })
                })
                .collect();
        }
        Self::new(points).expect("block offsets share a dimension")
    }

    pub fn offsets(&self) -> &[LatticePoint] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.offsets.first().map(LatticePoint::dim)
    }

    /// l-infinity diameter (0 for empty and single-site patterns).
    pub fn diameter(&self) -> u64 {
        let mut best = 0;
        for (i, a) in self.offsets.iter().enumerate() {
            for b in &self.offsets[i + 1..] {
                best = best.max(a.linf_distance(b));
            }
        }
        best
    }

    pub fn translate(&self, by: &LatticePoint) -> Pattern {
        Pattern {
            offsets: self.offsets.iter().map(|p| p.add(by)).collect(),
        }
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.offsets.binary_search(p).is_ok()
    }

    pub fn union(&self, other: &Pattern) -> Result<Pattern> {
        Pattern::new(self.offsets.iter().chain(&other.offsets).cloned())
    }

    /// Renders the literal accepted by [`FromStr`].
    pub fn literal(&self) -> String {
        let parts: Vec<String> = self.offsets.iter().map(|p| p.to_string()).collect();
        format!("[{}]", parts.join(","))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

/// Grammar (whitespace anywhere between tokens):
///
/// ```text
/// pattern := '[' ( tuple ( ',' tuple )* )? ']'
/// tuple   := '(' int ( ',' int )* ')'
/// int     := ('+' | '-')? digit+
/// ```
impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PatternParser::new(s).parse()
    }
}

struct PatternParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PatternParser<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            bytes: s.as_bytes(),
            pos: 0,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::PatternSyntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        match self.peek() {
            Some(b) if b == c => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => self.err(format!("expected '{}', found '{}'", c as char, b as char)),
            None => self.err(format!("expected '{}', found end of input", c as char)),
        }
    }

    fn int(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            return self.err("expected an integer");
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii");
        text.parse::<i64>().or_else(|e| self.err(e.to_string()))
    }

    fn tuple(&mut self) -> Result<LatticePoint> {
        self.expect(b'(')?;
        let mut coords = vec![self.int()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            coords.push(self.int()?);
        }
        self.expect(b')')?;
        Ok(LatticePoint::new(coords))
    }

    fn parse(mut self) -> Result<Pattern> {
        self.expect(b'[')?;
        let mut points = Vec::new();
        if self.peek() != Some(b']') {
            points.push(self.tuple()?);
            while self.peek() == Some(b',') {
                self.pos += 1;
                points.push(self.tuple()?);
            }
        }
        self.expect(b']')?;
        if self.peek().is_some() {
            return self.err("trailing input after ']'");
        }
        let dim = points.first().map(LatticePoint::dim);
        if points.iter().any(|p| Some(p.dim()) != dim) {
            self.pos = 0;
            return self.err("tuples have different lengths");
        }
        Pattern::new(points)
    }
}

/// The local picture `{ pi_E(k) + base : k in pattern }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub base: CylinderPoint,
    pub pattern: Pattern,
    /// Realized site of each pattern offset, aligned with `pattern.offsets()`.
    sites: Vec<Site>,
    /// Two offsets landed on the same cylinder site.
    pub wrapped: bool,
    n: u32,
}

impl Window {
    pub fn new(base: CylinderPoint, pattern: Pattern, params: &TorusParams) -> Result<Self> {
        if let Some(dim) = pattern.dim() {
            if dim != params.d() + 1 {
                return Err(invalid(format!(
                    "pattern dimension {dim} does not match d + 1 = {}",
                    params.d() + 1
                )));
            }
        }
        let base_coords: Vec<i64> = base.y.iter().map(|&c| c as i64).collect();
        let mut sites = Vec::with_capacity(pattern.len());
        for k in pattern.offsets() {
            let y: Vec<i64> = k.coords[..params.d()]
                .iter()
                .zip(&base_coords)
                .map(|(a, b)| a + b)
                .collect();
            let p = CylinderPoint::new(&y, base.z + k.coords[params.d()], params)?;
            sites.push(p.site(params));
        }
        let distinct: BTreeSet<Site> = sites.iter().copied().collect();
        let wrapped = distinct.len() < sites.len();
        Ok(Self {
            base,
            pattern,
            sites,
            wrapped,
            n: params.n(),
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn distinct_sites(&self) -> BTreeSet<Site> {
        self.sites.iter().copied().collect()
    }

    /// Inclusive vertical extent of the realized sites.
    pub fn z_range(&self) -> Option<(i64, i64)> {
        let lo = self.sites.iter().map(|s| s.z).min()?;
        let hi = self.sites.iter().map(|s| s.z).max()?;
        Some((lo, hi))
    }

    pub fn ensure_unwrapped(&self) -> Result<()> {
        if self.wrapped {
            return Err(Error::WrappedWindow {
                base: self.base.to_string(),
                diameter: self.pattern.diameter(),
                n: self.n,
            });
        }
        Ok(())
    }
}

/// Neighbour table of the torus, `2d` entries per site in the order of
/// [`neighbors`].
#[derive(Debug, Clone)]
pub struct TorusTable {
    params: TorusParams,
    nbr: Vec<u32>,
}

impl TorusTable {
    pub fn new(params: TorusParams) -> Self {
        let d = params.d();
        let n = params.n();
        let vol = params.volume() as usize;
        let mut nbr = vec![0u32; vol * 2 * d];
        let mut stride = 1u32;
        for axis in 0..d {
            for idx in 0..vol as u32 {
                let c = (idx / stride) % n;
                let base = idx - c * stride;
                let minus = base + ((c + n - 1) % n) * stride;
                let plus = base + ((c + 1) % n) * stride;
                nbr[idx as usize * 2 * d + 2 * axis] = minus;
                nbr[idx as usize * 2 * d + 2 * axis + 1] = plus;
            }
            stride *= n;
        }
        Self { params, nbr }
    }

    pub fn params(&self) -> &TorusParams {
        &self.params
    }

    /// Neighbour of torus index `y` in slot `slot < 2d`.
    #[inline(always)]
    pub fn step(&self, y: u32, slot: u32) -> u32 {
        self.nbr[y as usize * 2 * self.params.d() + slot as usize]
    }
}
