use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Observer;
use crate::error::{invalid, Result};
use crate::lattice::{Site, TorusParams, Window};

/// Vertical local times `L^z_n = #{0 <= m < n : Z_m = z}` at a fixed set of
/// heights. Visits at time `horizon` or later are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalTimeTable {
    lo: i64,
    heights: Vec<i64>,
    slot: Vec<u32>,
    counts: Vec<u64>,
    horizon: u64,
}

const NO_SLOT: u32 = u32::MAX;

impl LocalTimeTable {
    pub fn new(heights: &[i64], horizon: u64) -> Self {
        let mut hs = heights.to_vec();
        hs.sort_unstable();
        hs.dedup();
        let lo = hs.first().copied().unwrap_or(0);
        let hi = hs.last().copied().unwrap_or(-1);
        let width = if hs.is_empty() { 0 } else { (hi - lo + 1) as usize };
        let mut slot = vec![NO_SLOT; width];
        for (i, &h) in hs.iter().enumerate() {
            slot[(h - lo) as usize] = i as u32;
        }
        Self {
            lo,
            counts: vec![0; hs.len()],
            heights: hs,
            slot,
            horizon,
        }
    }

    /// Every height in `lo..=hi`.
    pub fn range(lo: i64, hi: i64, horizon: u64) -> Self {
        let hs: Vec<i64> = (lo..=hi).collect();
        Self::new(&hs, horizon)
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, z: i64) -> Option<u64> {
        self.index(z).map(|i| self.counts[i])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    #[inline]
    fn index(&self, z: i64) -> Option<usize> {
        let off = z.checked_sub(self.lo)?;
        if off < 0 || off as usize >= self.slot.len() {
            return None;
        }
        match self.slot[off as usize] {
            NO_SLOT => None,
            s => Some(s as usize),
        }
    }

    /// Adds another table over the same heights (replica pooling).
    pub fn merge(&mut self, other: &LocalTimeTable) -> Result<()> {
        if self.heights != other.heights {
            return Err(invalid("local time tables track different heights"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

impl Observer for LocalTimeTable {
    fn band(&self) -> Option<(i64, i64)> {
        match (self.heights.first(), self.heights.last()) {
            (Some(&lo), Some(&hi)) => Some((lo, hi)),
            _ => Some((i64::MAX, i64::MIN)),
        }
    }

    #[inline]
    fn observe(&mut self, step: u64, site: Site) {
        if step < self.horizon {
            if let Some(i) = self.index(site.z) {
                self.counts[i] += 1;
            }
        }
    }
}

/// Vacant configuration of a window at horizon `n` (closed: times `0..=n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacantWindow {
    pub window: Window,
    /// One bit per pattern offset; `true` means never visited.
    pub bits: Vec<bool>,
    pub horizon: u64,
}

impl VacantWindow {
    pub fn all_vacant(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }
}

/// Records the first visit time of every site of a window.
#[derive(Debug, Clone)]
pub struct VacantTracker {
    window: Window,
    first_visit: Vec<Option<u64>>,
    band: (i64, i64),
    elapsed: Option<u64>,
}

impl VacantTracker {
    pub fn new(window: Window) -> Result<Self> {
        window.ensure_unwrapped()?;
        let band = window.z_range().unwrap_or((i64::MAX, i64::MIN));
        Ok(Self {
            first_visit: vec![None; window.sites().len()],
            window,
            band,
            elapsed: None,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn first_visits(&self) -> &[Option<u64>] {
        &self.first_visit
    }

    /// Entrance time of the walk in the window, if it happened.
    pub fn hitting_time(&self) -> Option<u64> {
        self.first_visit.iter().flatten().min().copied()
    }

    /// Vacancy bits at horizon `n`; `n` may not exceed the finished run length.
    pub fn snapshot(&self, n: u64) -> Result<VacantWindow> {
        if let Some(e) = self.elapsed {
            if n > e {
                return Err(invalid(format!("horizon {n} lies beyond the run length {e}")));
            }
        }
        Ok(VacantWindow {
            window: self.window.clone(),
            bits: self
                .first_visit
                .iter()
                .map(|t| t.is_none_or(|t| t > n))
                .collect(),
            horizon: n,
        })
    }
}

impl Observer for VacantTracker {
    fn band(&self) -> Option<(i64, i64)> {
        Some(self.band)
    }

    #[inline]
    fn observe(&mut self, step: u64, site: Site) {
        for (s, t) in self.window.sites().iter().zip(self.first_visit.iter_mut()) {
            if *s == site && t.is_none() {
                *t = Some(step);
            }
        }
    }

    fn finish(&mut self, final_step: u64) {
        self.elapsed = Some(final_step);
    }
}

/// Jump times `tau_k` of the vertical component and the skeleton
/// `Zhat_k = Z_{tau_k}`, with `tau_0 = 0`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonState {
    pub tau: Vec<u64>,
    pub zhat: Vec<i64>,
}

pub fn vertical_skeleton(z_path: &[i64]) -> SkeletonState {
    let mut s = SkeletonState::default();
    for (t, &z) in z_path.iter().enumerate() {
        if s.zhat.last() != Some(&z) {
            s.tau.push(t as u64);
            s.zhat.push(z);
        }
    }
    s
}

/// Online version of [`vertical_skeleton`] that keeps only increment counts
/// and, optionally, the first `keep` skeleton points.
#[derive(Debug, Clone, Default)]
pub struct SkeletonObserver {
    pub keep: usize,
    pub state: SkeletonState,
    last: Option<i64>,
    pub ups: u64,
    pub downs: u64,
    /// Jumps of size other than one; always zero for a nearest-neighbour walk.
    pub irregular: u64,
}

impl SkeletonObserver {
    pub fn new(keep: usize) -> Self {
        Self {
            keep,
            ..Default::default()
        }
    }
}

impl Observer for SkeletonObserver {
    fn observe(&mut self, step: u64, site: Site) {
        let z = site.z;
        if self.last != Some(z) {
            match self.last.map(|l| z - l) {
                Some(1) => self.ups += 1,
                Some(-1) => self.downs += 1,
                Some(_) => self.irregular += 1,
                None => {}
            }
            if self.state.tau.len() < self.keep {
                self.state.tau.push(step);
                self.state.zhat.push(z);
            }
            self.last = Some(z);
        }
    }
}

/// Debug trace, `step,y0,...,y{d-1},z`, truncated after `cap` rows.
pub struct TraceDump<W: Write> {
    writer: csv::Writer<W>,
    params: TorusParams,
    cap: u64,
    rows: u64,
    error: Option<csv::Error>,
}

impl<W: Write> TraceDump<W> {
    pub fn new(out: W, params: TorusParams, cap: u64) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend((0..params.d()).map(|i| format!("y{i}")));
        header.push("z".into());
        writer.write_record(&header)?;
        Ok(Self {
            writer,
            params,
            cap,
            rows: 0,
            error: None,
        })
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn into_inner(mut self) -> Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.writer
            .into_inner()
            .map_err(|e| crate::error::Error::Io(e.into_error()))
    }
}

impl<W: Write> Observer for TraceDump<W> {
    fn observe(&mut self, step: u64, site: Site) {
        if self.rows >= self.cap || self.error.is_some() {
            return;
        }
        let mut rec = vec![step.to_string()];
        rec.extend(self.params.decode(site.y).iter().map(|c| c.to_string()));
        rec.push(site.z.to_string());
        if let Err(e) = self.writer.write_record(&rec) {
            self.error = Some(e);
        }
        self.rows += 1;
    }
}
