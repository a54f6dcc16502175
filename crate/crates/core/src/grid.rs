//! Inhomogeneous grids on Z and the return/departure excursion schedule.
//!
//! The grid is `G = G* u G0` where `G*` are the special points and `G0` are
//! the multiples of `2h` at distance at least `2h` from every special
//! point. Around each grid point sit `I_z = z + [-d, d]` and the larger
//! `Itilde_z = z + (-h, h)`; `C` and `O` are their unions.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which inequalities a grid has to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraints {
    /// `20(d+1) < h`, `100 h < a` and special points `100 h` apart.
    #[default]
    Strict,
    /// Only what the grid geometry needs: `d < h` and special points `6h`
    /// apart. Used for desk-scale ladders.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a_n: u64,
    pub h: u64,
    pub d: u64,
    pub specials: Vec<i64>,
    #[serde(default)]
    pub constraints: Constraints,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::GridConstraint(msg));
        if self.specials.is_empty() {
            return fail("at least one special point is required".into());
        }
        if self.h == 0 {
            return fail("h_N must be positive".into());
        }
        if self.d >= self.h {
            return fail(format!("d_N = {} must be smaller than h_N = {}", self.d, self.h));
        }
        let mut sorted = self.specials.clone();
        sorted.sort_unstable();
        let min_gap = sorted.windows(2).map(|w| w[1].abs_diff(w[0])).min();
        let mut violated = Vec::new();
        match self.constraints {
            Constraints::Strict => {
                if 100 * self.h >= self.a_n {
                    violated.push(format!(
                        "100 h_N < a_N fails: 100 * {} = {} >= {}",
                        self.h,
                        100 * self.h,
                        self.a_n
                    ));
                }
                if 20 * (self.d + 1) >= self.h {
                    violated.push(format!(
                        "20(d_N + 1) < h_N fails: 20 * {} = {} >= {}",
                        self.d + 1,
                        20 * (self.d + 1),
                        self.h
                    ));
                }
                if let Some(g) = min_gap {
                    if g < 100 * self.h {
                        violated.push(format!(
                            "special points must be 100 h_N = {} apart, found distance {g}",
                            100 * self.h
                        ));
                    }
                }
            }
            Constraints::Structural => {
                if let Some(g) = min_gap {
                    if g < 6 * self.h {
                        violated.push(format!(
                            "special points must be 6 h_N = {} apart, found distance {g}",
                            6 * self.h
                        ));
                    }
                }
            }
        }
        if !violated.is_empty() {
            return fail(violated.join("; "));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    spec: GridSpec,
    specials: Vec<i64>,
}

pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    spec.validate()?;
    let mut specials = spec.specials.clone();
    specials.sort_unstable();
    specials.dedup();
    Ok(Grid { spec, specials })
}

impl Grid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn h(&self) -> i64 {
        self.spec.h as i64
    }

    pub fn d(&self) -> i64 {
        self.spec.d as i64
    }

    pub fn specials(&self) -> &[i64] {
        &self.specials
    }

    fn spacing(&self) -> i64 {
        2 * self.h()
    }

    fn in_g0(&self, m: i64) -> bool {
        m.rem_euclid(self.spacing()) == 0
            && self.specials.iter().all(|&s| m.abs_diff(s) >= self.spacing() as u64)
    }

    pub fn is_grid_point(&self, z: i64) -> bool {
        self.specials.binary_search(&z).is_ok() || self.in_g0(z)
    }

    /// The grid point within distance `r < h` of `z`, if any.
    fn center_within(&self, z: i64, r: i64) -> Option<i64> {
        let s = self.spacing();
        let m = (z + s / 2).div_euclid(s) * s;
        if z.abs_diff(m) <= r as u64 && self.in_g0(m) {
            return Some(m);
        }
        self.specials
            .iter()
            .copied()
            .find(|&c| z.abs_diff(c) <= r as u64)
    }

    /// Center of the component of `C` containing `z`.
    pub fn c_component(&self, z: i64) -> Option<i64> {
        self.center_within(z, self.d())
    }

    /// Center of the component of `O` containing `z`.
    pub fn o_component(&self, z: i64) -> Option<i64> {
        self.center_within(z, self.h() - 1)
    }

    pub fn in_c(&self, z: i64) -> bool {
        self.c_component(z).is_some()
    }

    pub fn in_o(&self, z: i64) -> bool {
        self.o_component(z).is_some()
    }

    /// Largest grid point `<= z`.
    pub fn point_below(&self, z: i64) -> i64 {
        let s = self.spacing();
        let mut m = z.div_euclid(s) * s;
        while !self.in_g0(m) {
            m -= s;
        }
        let special = self.specials.iter().copied().filter(|&c| c <= z).max();
        special.map_or(m, |c| c.max(m))
    }

    /// Smallest grid point `>= z`.
    pub fn point_above(&self, z: i64) -> i64 {
        let s = self.spacing();
        let mut m = -((-z).div_euclid(s) * s);
        while !self.in_g0(m) {
            m += s;
        }
        let special = self.specials.iter().copied().filter(|&c| c >= z).min();
        special.map_or(m, |c| c.min(m))
    }

    /// Grid points in `[lo, hi]`, ascending.
    pub fn points_in(&self, lo: i64, hi: i64) -> Vec<i64> {
        let mut out = Vec::new();
        if lo > hi {
            return out;
        }
        let mut g = self.point_above(lo);
        while g <= hi {
            out.push(g);
            g = self.point_above(g + 1);
        }
        out
    }
}

/// One excursion: the return `R_k` to `C` and departure `D_k` from `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub r: u64,
    pub z_r: i64,
    /// Grid point of the component entered at `R_k`.
    pub center: i64,
    pub d: Option<u64>,
    pub z_d: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcursionEvent {
    Return { k: usize, step: u64, z: i64, center: i64 },
    Departure { k: usize, step: u64, z: i64, center: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DetectorState {
    Fresh,
    Seeking { lo: i64, hi: i64 },
    Inside { center: i64 },
}

/// Online detector of the schedule `R_1 <= D_1 < R_2 < D_2 < ...`.
///
/// Outside `C` it only compares the height with the nearest `C` boundary
/// points below and above; inside it compares with the two ends of the
/// enclosing `Itilde`.
#[derive(Debug, Clone)]
pub struct ExcursionDetector<'g> {
    grid: &'g Grid,
    state: DetectorState,
    returns: usize,
    departures: usize,
}

impl<'g> ExcursionDetector<'g> {
    pub fn new(grid: &'g Grid) -> Self {
        Self {
            grid,
            state: DetectorState::Fresh,
            returns: 0,
            departures: 0,
        }
    }

    pub fn returns(&self) -> usize {
        self.returns
    }

    pub fn departures(&self) -> usize {
        self.departures
    }

    fn seek_from(&self, z: i64) -> DetectorState {
        let d = self.grid.d();
        DetectorState::Seeking {
            lo: self.grid.point_below(z) + d,
            hi: self.grid.point_above(z) - d,
        }
    }

    fn enter(&mut self, step: u64, z: i64, center: i64) -> ExcursionEvent {
        self.returns += 1;
        self.state = DetectorState::Inside { center };
        ExcursionEvent::Return {
            k: self.returns,
            step,
            z,
            center,
        }
    }

    /// Feeds the height at time `step`; heights must be fed for
    /// consecutive times starting at 0, with nearest-neighbour moves.
    #[inline]
    pub fn feed(&mut self, step: u64, z: i64) -> Option<ExcursionEvent> {
        match self.state {
            DetectorState::Inside { center } => {
                let h = self.grid.h();
                if z <= center - h || z >= center + h {
                    self.departures += 1;
                    self.state = self.seek_from(z);
                    Some(ExcursionEvent::Departure {
                        k: self.departures,
                        step,
                        z,
                        center,
                    })
                } else {
                    None
                }
            }
            DetectorState::Seeking { lo, hi } => {
                if z <= lo {
                    let center = lo - self.grid.d();
                    Some(self.enter(step, z, center))
                } else if z >= hi {
                    let center = hi + self.grid.d();
                    Some(self.enter(step, z, center))
                } else {
                    None
                }
            }
            DetectorState::Fresh => match self.grid.c_component(z) {
                Some(center) => Some(self.enter(step, z, center)),
                None => {
                    self.state = self.seek_from(z);
                    None
                }
            },
        }
    }
}

/// Ordered excursion records plus the return counts per component of `C`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionLog {
    pub records: Vec<ExcursionRecord>,
}

impl ExcursionLog {
    pub fn push(&mut self, event: ExcursionEvent) {
        match event {
            ExcursionEvent::Return { step, z, center, .. } => self.records.push(ExcursionRecord {
                r: step,
                z_r: z,
                center,
                d: None,
                z_d: None,
            }),
            ExcursionEvent::Departure { step, z, .. } => {
                let last = self.records.last_mut().expect("departure follows a return");
                last.d = Some(step);
                last.z_d = Some(z);
            }
        }
    }

    /// `D_k` (1-based), if reached.
    pub fn departure(&self, k: usize) -> Option<u64> {
        self.records.get(k.checked_sub(1)?)?.d
    }

    pub fn completed(&self) -> usize {
        self.records.iter().filter(|r| r.d.is_some()).count()
    }

    /// `#{k <= k_limit : Z_{R_k} in I}` for the component centered at `center`.
    pub fn returns_to(&self, center: i64, k_limit: usize) -> u64 {
        self.records
            .iter()
            .take(k_limit)
            .filter(|r| r.center == center)
            .count() as u64
    }

    pub fn counts_per_component(&self, k_limit: usize) -> BTreeMap<i64, u64> {
        let mut m = BTreeMap::new();
        for r in self.records.iter().take(k_limit) {
            *m.entry(r.center).or_insert(0) += 1;
        }
        m
    }
}

/// Runs the detector over a stored height path.
pub fn detect_excursions(z_path: &[i64], grid: &Grid) -> ExcursionLog {
    let mut det = ExcursionDetector::new(grid);
    let mut log = ExcursionLog::default();
    for (t, &z) in z_path.iter().enumerate() {
        if let Some(e) = det.feed(t as u64, z) {
            log.push(e);
        }
    }
    log
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub gamma: Ratio<u64>,
    pub rho: Ratio<u64>,
    /// Mean excursion duration `gamma^{-1}[(h-d)^2 + h^2 - d^2]`.
    pub t_n: Ratio<u64>,
    pub t: u64,
    pub sigma: u64,
    pub k_star: u64,
    pub k_upper_star: u64,
}

/// `floor(s^{3/4})` as the largest `k` with `k^4 <= s^3`.
pub fn floor_three_quarters(s: u64) -> u64 {
    let target = (s as u128).pow(3);
    let (mut lo, mut hi) = (0u128, (s as u128).max(1) + 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if mid.pow(4) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo as u64
}

pub fn compute_schedule(spec: &GridSpec, gamma: Ratio<u64>, rho: Ratio<u64>) -> Result<ScheduleParams> {
    if *gamma.numer() == 0 || gamma > Ratio::from_integer(1) {
        return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if *rho.numer() == 0 {
        return Err(invalid("rho must be positive"));
    }
    let (h, d, a) = (spec.h as u128, spec.d as u128, spec.a_n as u128);
    if d >= h {
        return Err(Error::GridConstraint(format!("d_N = {d} must be smaller than h_N = {h}")));
    }
    let s = (h - d).pow(2) + h * h - d * d;
    let (gn, gd) = (*gamma.numer() as u128, *gamma.denom() as u128);
    let (rn, rd) = (*rho.numer() as u128, *rho.denom() as u128);
    let t_n = Ratio::new(u64::try_from(gd * s).map_err(|_| invalid("t_N overflows"))?, gn as u64);
    let a2 = a * a;
    let t = u64::try_from(rn * a2 / rd).map_err(|_| invalid("T overflows"))?;
    let sigma = u64::try_from(rn * a2 * gn / (rd * gd * s)).map_err(|_| invalid("sigma overflows"))?;
    let q = floor_three_quarters(sigma);
    Ok(ScheduleParams {
        gamma,
        rho,
        t_n,
        t,
        sigma,
        k_star: sigma - q,
        k_upper_star: sigma + q,
    })
}

/// Parses `"0.25"`, `"3"` or `"1/4"` into an exact rational.
pub fn parse_ratio(text: &str) -> Result<Ratio<u64>> {
    let t = text.trim();
    let bad = || invalid(format!("`{text}` is not a nonnegative rational"));
    if let Some((n, d)) = t.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let den = 10u64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
    let digits = format!("{int}{frac}");
    let num: u64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    Ok(Ratio::new(num, den))
}

/// `(h/gamma) * count`, the local time proxy built from return counts.
pub fn local_time_proxy(log: &ExcursionLog, center: i64, h: u64, gamma: Ratio<u64>, k_limit: usize) -> Ratio<u64> {
    proxy_from_count(log.returns_to(center, k_limit), h, gamma)
}

pub fn proxy_from_count(count: u64, h: u64, gamma: Ratio<u64>) -> Ratio<u64> {
    Ratio::from_integer(h * count) / gamma
}

/// `E_z[L^z_{T_Itilde}] = (h^2 - u^2) / (gamma h)` with `u = z - z0`.
pub fn expected_exit_local_time(z: i64, z0: i64, h: u64, gamma: Ratio<u64>) -> Result<Ratio<u64>> {
    let u = z.abs_diff(z0);
    if u >= h {
        return Err(Error::OutOfInterval(format!("{z} not in ({z0} - {h}, {z0} + {h})")));
    }
    Ok(Ratio::new(h * h - u * u, h) / gamma)
}

/// `Q_{from}[H_z < T_Itilde]` for `Itilde = (z0 - h, z0 + h)`, from the
/// gambler's ruin formula. Does not depend on the laziness.
pub fn hitting_factor(from: i64, z: i64, z0: i64, h: u64) -> Result<Ratio<u64>> {
    let (lo, hi) = (z0 - h as i64, z0 + h as i64);
    for p in [from, z] {
        if p <= lo || p >= hi {
            return Err(Error::OutOfInterval(format!("{p} not in ({lo}, {hi})")));
        }
    }
    Ok(if from >= z {
        Ratio::new((hi - from) as u64, (hi - z) as u64)
    } else {
        Ratio::new((from - lo) as u64, (z - lo) as u64)
    })
}

/// Overrides for [`adapt_grid_to_points`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptOptions {
    pub h: Option<u64>,
    pub d: Option<u64>,
    pub constraints: Constraints,
}

/// Default interval half-width `ceil(N (ln N)^2)`.
pub fn default_h(n: u32) -> u64 {
    let l = (n as f64).ln();
    (n as f64 * l * l).ceil() as u64
}

/// Default small half-width `ceil(h^{2/3})`.
pub fn default_d(h: u64) -> u64 {
    let c = (h as f64).powf(2.0 / 3.0).ceil() as u64;
    // guard against powf rounding just above an exact cube
    if c > 0 && (c - 1).pow(3) >= h * h {
        c - 1
    } else {
        c
    }
}

/// Small half-width used when adapting a grid to points:
/// `ceil(max(h^{1/2}, 2(1 + spread)))`. The square root keeps
/// `20(d + 1) < h` reachable, which `h^{2/3}` only allows for `h > 8000`.
pub fn adapted_d(h: u64, spread: u64) -> u64 {
    let r = (h as f64).sqrt().ceil() as u64;
    let r = if r > 0 && (r - 1) * (r - 1) >= h { r - 1 } else { r };
    r.max(2 * (1 + spread))
}

/// Builds the grid attached to points at heights `z_i` whose rescaled
/// heights converge to `limits[i]`. Points sharing a limit share a special
/// point, the highest of their heights.
pub fn adapt_grid_to_points(heights: &[i64], limits: &[f64], n: u32, d: usize, opts: AdaptOptions) -> Result<GridSpec> {
    if heights.is_empty() || heights.len() != limits.len() {
        return Err(invalid("need one limit per height and at least one point"));
    }
    let a_n = (n as u64)
        .checked_pow(d as u32)
        .ok_or_else(|| invalid("N^d overflows"))?;
    let mut groups: BTreeMap<u64, Vec<i64>> = BTreeMap::new();
    for (&z, &v) in heights.iter().zip(limits) {
        groups.entry(v.to_bits()).or_default().push(z);
    }
    let mut specials = Vec::new();
    let mut spread = 0u64;
    for zs in groups.values() {
        let top = *zs.iter().max().expect("nonempty group");
        specials.push(top);
        spread = spread.max(zs.iter().map(|z| z.abs_diff(top)).max().unwrap_or(0));
    }
    let h = opts.h.unwrap_or_else(|| default_h(n));
    let dn = opts.d.unwrap_or_else(|| adapted_d(h, spread));
    if 2 * spread > dn {
        return Err(Error::GridConstraint(format!(
            "2 max|z_i - z*| = {} exceeds d_N = {dn}",
            2 * spread
        )));
    }
    let spec = GridSpec {
        a_n,
        h,
        d: dn,
        specials,
        constraints: opts.constraints,
    };
    match spec.validate() {
        Ok(()) => Ok(spec),
        Err(Error::GridConstraint(msg)) if opts.h.is_none() && opts.d.is_none() => {
            let hint = match minimal_admissible_n(&spec.specials, d, spread, opts.constraints) {
                Some(m) => format!("; smallest admissible N with these heights is {m}"),
                None => "; no admissible N below 10^7".into(),
            };
            Err(Error::GridConstraint(format!("{msg} at N = {n}{hint}")))
        }
        Err(e) => Err(e),
    }
}

fn minimal_admissible_n(specials: &[i64], d: usize, spread: u64, constraints: Constraints) -> Option<u32> {
    let ok = |n: u32| -> bool {
        let Some(a_n) = (n as u64).checked_pow(d as u32) else {
            return false;
        };
        let h = default_h(n);
        GridSpec {
            a_n,
            h,
            d: adapted_d(h, spread),
            specials: specials.to_vec(),
            constraints,
        }
        .validate()
        .is_ok()
    };
    // admissibility is monotone in N once the scale constraint kicks in,
    // so an exponential search followed by bisection is enough
    let mut hi = 2u32;
    while !ok(hi) {
        if hi >= 10_000_000 {
            return None;
        }
        hi = hi.saturating_mul(2).min(10_000_000);
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn structural(h: u64, d: u64, specials: Vec<i64>) -> Grid {
        build_grid(GridSpec {
            a_n: 1_000_000,
            h,
            d,
            specials,
            constraints: Constraints::Structural,
        })
        .unwrap()
    }

    #[test]
    fn grid_membership_example() {
        let g = structural(10, 2, vec![0]);
        assert_eq!(g.points_in(-45, 45), vec![-40, -20, 0, 20, 40]);
        assert_eq!(g.c_component(-2), Some(0));
        assert_eq!(g.c_component(2), Some(0));
        assert_eq!(g.c_component(3), None);
        assert_eq!(g.o_component(9), Some(0));
        assert_eq!(g.o_component(-9), Some(0));
        assert_eq!(g.o_component(10), None);
    }

    #[test]
    fn special_point_off_lattice() {
        let g = structural(10, 2, vec![7]);
        // 0 and 20 are closer than 2h to 7; the neighbours are -20 and 40
        assert_eq!(g.points_in(-25, 45), vec![-20, 7, 40]);
    }

    #[test]
    fn strict_rejections() {
        let spec = GridSpec {
            a_n: 1_000_000,
            h: 10,
            d: 0,
            specials: vec![0, 50],
            constraints: Constraints::Strict,
        };
        let err = build_grid(spec).unwrap_err().to_string();
        assert!(err.contains("100 h_N"), "{err}");
        let spec = GridSpec {
            a_n: 1_000_000,
            h: 10,
            d: 2,
            specials: vec![0],
            constraints: Constraints::Strict,
        };
        assert!(build_grid(spec).unwrap_err().to_string().contains("20(d_N + 1)"));
    }

    #[test]
    fn schedule_examples() {
        let spec = GridSpec {
            a_n: 100,
            h: 10,
            d: 2,
            specials: vec![0],
            constraints: Constraints::Structural,
        };
        let one = Ratio::from_integer(1);
        let s = compute_schedule(&spec, one, one).unwrap();
        assert_eq!(s.t_n, Ratio::from_integer(160));
        let s = compute_schedule(&spec, Ratio::new(1, 3), one).unwrap();
        assert_eq!(s.t_n, Ratio::from_integer(480));
        assert_eq!((s.t, s.sigma, s.k_star, s.k_upper_star), (10_000, 20, 11, 29));
    }

    #[test]
    fn three_quarters_power() {
        assert_eq!(floor_three_quarters(20), 9);
        assert_eq!(floor_three_quarters(16), 8);
        assert_eq!(floor_three_quarters(81), 27);
        assert_eq!(floor_three_quarters(0), 0);
        for s in 1..2000u64 {
            let k = floor_three_quarters(s) as u128;
            assert!(k.pow(4) <= (s as u128).pow(3));
            assert!((k + 1).pow(4) > (s as u128).pow(3));
        }
    }

    #[test]
    fn ratios_parse() {
        assert_eq!(parse_ratio("0.25").unwrap(), Ratio::new(1, 4));
        assert_eq!(parse_ratio("1/3").unwrap(), Ratio::new(1, 3));
        assert_eq!(parse_ratio("2").unwrap(), Ratio::from_integer(2));
        assert!(parse_ratio("-1").is_err());
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio(".").is_err());
    }

    #[test]
    fn proxy_and_exit_local_time() {
        let mut log = ExcursionLog::default();
        for step in [0, 10, 20] {
            log.records.push(ExcursionRecord { r: step, z_r: 0, center: 0, d: None, z_d: None });
        }
        assert_eq!(local_time_proxy(&log, 0, 10, Ratio::new(1, 3), 3), Ratio::from_integer(90));
        assert_eq!(local_time_proxy(&log, 40, 10, Ratio::new(1, 3), 3), Ratio::from_integer(0));
        let one = Ratio::from_integer(1);
        assert_eq!(expected_exit_local_time(0, 0, 10, one).unwrap(), Ratio::from_integer(10));
        assert_eq!(expected_exit_local_time(0, 0, 10, Ratio::new(1, 3)).unwrap(), Ratio::from_integer(30));
        // 2 / [(h - u)^{-1} + (h + u)^{-1}] with u = 3
        assert_eq!(expected_exit_local_time(3, 0, 10, one).unwrap(), Ratio::new(91, 10));
        assert!(expected_exit_local_time(10, 0, 10, one).is_err());
        assert_eq!(hitting_factor(2, 2, 0, 10).unwrap(), one);
        assert_eq!(hitting_factor(4, 2, 0, 10).unwrap(), Ratio::new(6, 8));
        assert_eq!(hitting_factor(-2, 2, 0, 10).unwrap(), Ratio::new(8, 12));
    }

    #[test]
    fn detector_examples() {
        let g = structural(10, 2, vec![0]);
        // start inside C
        let path: Vec<i64> = (0..=10).collect();
        let log = detect_excursions(&path, &g);
        assert_eq!(log.records[0].r, 0);
        assert_eq!(log.records[0].d, Some(10));
        assert_eq!(log.records[0].z_d, Some(10));
        // leave O, come back to C
        let mut path: Vec<i64> = (0..=10).collect();
        path.extend((2..10).rev());
        let log = detect_excursions(&path, &g);
        assert_eq!(log.records.len(), 2);
        assert!(log.records[1].r > log.records[0].d.unwrap());
        assert_eq!(log.records[1].z_r, 2);
        // approach the next grid point from below
        let path: Vec<i64> = (5..=18).collect();
        let log = detect_excursions(&path, &g);
        assert_eq!(log.records[0].center, 20);
        assert_eq!(log.records[0].z_r, 18);
    }

    #[test]
    fn adapt_examples() {
        let err = adapt_grid_to_points(&[0], &[0.0], 50, 2, AdaptOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("100 h_N < a_N"), "{msg}");
        assert!(msg.contains("766"), "{msg}");
        assert!(msg.contains("smallest admissible N"), "{msg}");
        assert_eq!(default_h(50), 766);

        let spec = adapt_grid_to_points(
            &[5, 9],
            &[0.0, 0.0],
            50,
            2,
            AdaptOptions { constraints: Constraints::Structural, ..Default::default() },
        )
        .unwrap();
        assert_eq!(spec.specials, vec![9]);
        assert!(spec.d >= 8);
        let tight = AdaptOptions { h: Some(100), d: Some(7), constraints: Constraints::Structural };
        assert!(adapt_grid_to_points(&[5, 9], &[0.0, 0.0], 50, 2, tight).is_err());

        let far = AdaptOptions { constraints: Constraints::Strict, ..Default::default() };
        assert!(adapt_grid_to_points(&[0, 0], &[0.0, 1.0], 50, 2, far).is_err());
    }

    #[test]
    fn default_d_is_exact_on_cubes() {
        assert_eq!(default_d(27), 9);
        assert_eq!(default_d(1000), 100);
        assert_eq!(default_d(20), 8);
        assert_eq!(default_d(54), 15);
        assert_eq!(default_d(98), 22);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn grid_geometry(h in 3u64..40, frac in 0u64..100, offs in proptest::collection::vec(-500i64..500, 1..4)) {
                let d = (h - 1) * frac / 100;
                let mut specials: Vec<i64> = Vec::new();
                for (i, o) in offs.iter().enumerate() {
                    specials.push(o + (i as i64) * 7 * h as i64 * 3);
                }
                let spec = GridSpec { a_n: 1 << 40, h, d, specials, constraints: Constraints::Structural };
                prop_assume!(spec.validate().is_ok());
                let g = build_grid(spec).unwrap();
                let pts = g.points_in(-3000, 3000);
                for w in pts.windows(2) {
                    let gap = w[1] - w[0];
                    prop_assert!(gap >= 2 * h as i64 && gap < 4 * h as i64, "gap {gap}");
                }
                for z in -2000i64..2000 {
                    let expect_c = pts.iter().any(|&p| (z - p).abs() <= d as i64);
                    let expect_o = pts.iter().filter(|&&p| (z - p).abs() < h as i64).count();
                    prop_assert!(expect_o <= 1);
                    prop_assert_eq!(g.in_c(z), expect_c);
                    prop_assert_eq!(g.in_o(z), expect_o == 1);
                }
            }
        }
    }
}
