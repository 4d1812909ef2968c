//! Particle deletion and the finite set of single-particle states reached by
//! interleaving backward flows with deletions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{all_events, flow, Direction, FlowOptions, Particle, PhaseState};
use crate::error::{Error, Result};

pub const DEFAULT_DEDUP_TOL: f64 = 1e-7;
pub const DEFAULT_POINT_CAP: usize = 10_000;

/// Removes the entry at position `k`; later entries shift down.
pub fn delete(state: &PhaseState, k: usize) -> Result<PhaseState> {
    if k >= state.len() {
        return Err(Error::IndexOutOfRange { index: k, len: state.len() });
    }
    let mut out = state.clone();
    out.particles_mut().remove(k);
    Ok(out)
}

/// Which time represents each constancy segment of the backward flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representative {
    /// The event time opening the segment (0 for the first one).
    LeftEndpoint,
    /// A uniformly drawn interior time; the unbounded last segment is
    /// sampled on `(tau_M, tau_M + 1 + tau_M)`.
    Interior { seed: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct JsetOptions {
    pub dedup_tol: f64,
    pub cap: usize,
    pub representative: Representative,
}

impl Default for JsetOptions {
    fn default() -> Self {
        JsetOptions { dedup_tol: DEFAULT_DEDUP_TOL, cap: DEFAULT_POINT_CAP, representative: Representative::LeftEndpoint }
    }
}

/// Deduplicated single-particle states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JSet {
    points: Vec<Particle>,
    dedup_tol: f64,
}

impl JSet {
    pub fn points(&self) -> &[Particle] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dedup_tol(&self) -> f64 {
        self.dedup_tol
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Particle> {
        self.points.iter()
    }

    /// Whether some point lies within `dedup_tol` of `p`.
    pub fn contains(&self, p: &Particle) -> bool {
        self.points.iter().any(|q| q.phase_distance(p) <= self.dedup_tol)
    }

    /// Same point sets up to `dedup_tol`.
    pub fn same_points(&self, other: &JSet) -> bool {
        self.len() == other.len() && self.points.iter().all(|p| other.contains(p))
    }
}

/// Enumerates the set with default options.
pub fn jset(state: &PhaseState) -> Result<JSet> {
    jset_with(state, &JsetOptions::default())
}

pub fn jset_with(state: &PhaseState, opts: &JsetOptions) -> Result<JSet> {
    if state.is_empty() {
        return Err(Error::Precondition("jset needs at least one particle".into()));
    }
    let mut raw = Vec::new();
    let mut rng = match opts.representative {
        Representative::Interior { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Representative::LeftEndpoint => None,
    };
    visit(state, 0.0, opts, &mut rng, &mut raw)?;
    let mut points: Vec<Particle> = Vec::new();
    for p in raw {
        if !points.iter().any(|q| q.phase_distance(&p) <= opts.dedup_tol) {
            points.push(p);
        }
    }
    Ok(JSet { points, dedup_tol: opts.dedup_tol })
}

fn visit(
    state: &PhaseState,
    t_acc: f64,
    opts: &JsetOptions,
    rng: &mut Option<ChaCha8Rng>,
    out: &mut Vec<Particle>,
) -> Result<()> {
    if state.len() == 1 {
        if out.len() >= opts.cap {
            return Err(Error::JsetCap(opts.cap));
        }
        let p = state.particle(0);
        out.push(Particle::new(p.x + p.v * t_acc, p.v));
        return Ok(());
    }
    let log = all_events(state, Direction::Backward, &FlowOptions::default())?;
    let mut bounds = vec![0.0];
    bounds.extend(log.events.iter().map(|e| e.time));
    for r in 0..bounds.len() {
        let tau = match rng {
            None => bounds[r],
            Some(g) => {
                let lo = bounds[r];
                let hi = bounds.get(r + 1).copied().unwrap_or(lo + 1.0 + lo);
                lo + (hi - lo) * g.random_range(0.05..0.95)
            }
        };
        let (flowed, _) = flow(state, tau, Direction::Backward)?;
        for k in 0..flowed.len() {
            visit(&delete(&flowed, k)?, t_acc + tau, opts, rng, out)?;
        }
    }
    Ok(())
}
