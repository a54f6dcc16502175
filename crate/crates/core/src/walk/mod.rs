//! Streaming simple random walk on the cylinder.
//!
//! A run never stores its trajectory. Observers see `(step, site)` for the
//! times they care about and keep their own summaries.

mod lazy;
mod observers;

pub use lazy::{
    run_lazy_walk, ExitInterval, Horizon, LazySummary, LazyWalk, LazyWalkParams, Stopper,
};
pub use observers::{
    vertical_skeleton, LocalTimeTable, SkeletonObserver, SkeletonState, TraceDump, VacantTracker,
    VacantWindow,
};

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{CylinderPoint, Site, TorusParams, TorusTable};

/// Initial law of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartLaw {
    Point { point: CylinderPoint },
    /// `nu_z`, uniform on the level `T x {z}`. Level 0 is the law `P`.
    UniformLevel { z: i64 },
}

impl StartLaw {
    pub fn sample<R: Rng + ?Sized>(&self, params: &TorusParams, rng: &mut R) -> Site {
        match self {
            StartLaw::Point { point } => point.site(params),
            StartLaw::UniformLevel { z } => Site {
                y: rng.random_range(0..params.volume() as u32),
                z: *z,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub params: TorusParams,
    pub start: StartLaw,
    pub seed: u64,
    pub max_steps: u64,
}

/// Receives the positions of a run.
///
/// `band` is an inclusive range of heights outside of which the observer
/// has nothing to do; the engine may then skip calling it.
pub trait Observer {
    fn band(&self) -> Option<(i64, i64)> {
        None
    }

    fn observe(&mut self, step: u64, site: Site);

    /// Called once with the final time of the run.
    fn finish(&mut self, _final_step: u64) {}
}

impl Observer for () {
    fn band(&self) -> Option<(i64, i64)> {
        Some((i64::MAX, i64::MIN))
    }

    fn observe(&mut self, _step: u64, _site: Site) {}
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn band(&self) -> Option<(i64, i64)> {
        (**self).band()
    }

    fn observe(&mut self, step: u64, site: Site) {
        (**self).observe(step, site)
    }

    fn finish(&mut self, final_step: u64) {
        (**self).finish(final_step)
    }
}

impl<O: Observer> Observer for Vec<O> {
    fn band(&self) -> Option<(i64, i64)> {
        self.iter()
            .map(Observer::band)
            .try_fold((i64::MAX, i64::MIN), |acc, b| b.map(|b| hull(acc, b)))
    }

    fn observe(&mut self, step: u64, site: Site) {
        for o in self.iter_mut() {
            o.observe(step, site);
        }
    }

    fn finish(&mut self, final_step: u64) {
        for o in self.iter_mut() {
            o.finish(final_step);
        }
    }
}

fn hull(a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
    (a.0.min(b.0), a.1.max(b.1))
}

macro_rules! tuple_observer {
    ($($name:ident . $idx:tt),+) => {
        impl<$($name: Observer),+> Observer for ($($name,)+) {
            fn band(&self) -> Option<(i64, i64)> {
                let mut acc = (i64::MAX, i64::MIN);
                $( acc = hull(acc, self.$idx.band()?); )+
                Some(acc)
            }

            fn observe(&mut self, step: u64, site: Site) {
                $( self.$idx.observe(step, site); )+
            }

            fn finish(&mut self, final_step: u64) {
                $( self.$idx.finish(final_step); )+
            }
        }
    };
}

tuple_observer!(A.0, B.1);
tuple_observer!(A.0, B.1, C.2);
tuple_observer!(A.0, B.1, C.2, D.3);

/// The walk itself: a position plus the neighbour table it moves on.
#[derive(Debug, Clone)]
pub struct CylinderWalk<'t> {
    table: &'t TorusTable,
    choice: Uniform<u32>,
    torus_slots: u32,
    pub pos: Site,
}

impl<'t> CylinderWalk<'t> {
    pub fn new(table: &'t TorusTable, start: Site) -> Self {
        let torus_slots = 2 * table.params().d() as u32;
        Self {
            table,
            choice: Uniform::new(0, torus_slots + 2).expect("nonempty range"),
            torus_slots,
            pos: start,
        }
    }

    pub fn table(&self) -> &'t TorusTable {
        self.table
    }

    /// One uniform nearest-neighbour move.
    #[inline(always)]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let r = self.choice.sample(rng);
        if r < self.torus_slots {
            self.pos.y = self.table.step(self.pos.y, r);
        } else if r == self.torus_slots {
            self.pos.z -= 1;
        } else {
            self.pos.z += 1;
        }
    }
}

/// Runs `steps` transitions from the current position, reporting the times
/// `first_step + 1 ..= first_step + steps` to the observer. Positions whose
/// height is outside `observer.band()` are not reported.
pub fn advance<R: Rng + ?Sized, O: Observer + ?Sized>(
    walk: &mut CylinderWalk<'_>,
    rng: &mut R,
    first_step: u64,
    steps: u64,
    observer: &mut O,
) {
    let end = first_step + steps;
    let mut t = first_step;
    match observer.band() {
        None => {
            while t < end {
                walk.step(rng);
                t += 1;
                observer.observe(t, walk.pos);
            }
        }
        Some((lo, hi)) => {
            while t < end {
                let z = walk.pos.z;
                let gap = if z < lo {
                    lo - z
                } else if z > hi {
                    z - hi
                } else {
                    0
                };
                if gap > 1 {
                    // the next gap - 1 positions cannot reach the band
                    let blind = ((gap - 1) as u64).min(end - t);
                    for _ in 0..blind {
                        walk.step(rng);
                    }
                    t += blind;
                    continue;
                }
                walk.step(rng);
                t += 1;
                let z = walk.pos.z;
                if z >= lo && z <= hi {
                    observer.observe(t, walk.pos);
                }
            }
        }
    }
}

/// Runs `cfg.max_steps` transitions of the walk, reporting times
/// `0..=max_steps`, and returns the final site.
pub fn run_walk<R: Rng + ?Sized, O: Observer + ?Sized>(
    cfg: &WalkConfig,
    table: &TorusTable,
    rng: &mut R,
    observer: &mut O,
) -> Result<Site> {
    if table.params() != &cfg.params {
        return Err(invalid("neighbour table was built for different torus parameters"));
    }
    let start = cfg.start.sample(&cfg.params, rng);
    let mut walk = CylinderWalk::new(table, start);
    let in_band = observer
        .band()
        .is_none_or(|(lo, hi)| start.z >= lo && start.z <= hi);
    if in_band {
        observer.observe(0, start);
    }
    advance(&mut walk, rng, 0, cfg.max_steps, observer);
    observer.finish(cfg.max_steps);
    Ok(walk.pos)
}
