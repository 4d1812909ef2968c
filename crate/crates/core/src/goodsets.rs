//! Membership predicates for the good sets on which chaoticity is measured.

use serde::{Deserialize, Serialize};

use crate::dynamics::{is_free_backward, PhaseState, CONTACT_TOL};
use crate::error::{Error, Result};
use crate::geometry::ray_min_distance;
use crate::jset::{jset, JSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodSetParams {
    pub m: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub r: f64,
    pub kappa: f64,
}

impl GoodSetParams {
    /// `eta = epsilon^kappa`.
    pub fn from_scaling(m: usize, epsilon: f64, kappa: f64, r: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParam(format!("m must be >= 2, got {m}")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidParam(format!("kappa must lie in (0,1), got {kappa}")));
        }
        if !(epsilon > 0.0) || !(r > 0.0) {
            return Err(Error::InvalidParam("epsilon and R must be positive".into()));
        }
        let eta = epsilon.powf(kappa);
        if eta >= r {
            return Err(Error::InvalidParam(format!("eta = {eta} must be below R = {r}")));
        }
        Ok(GoodSetParams { m, eta, epsilon, r, kappa })
    }
}

/// Tail particles `m-1..s` (0-based) are free backward relative to every
/// point of the head's jset and to each other.
pub fn in_g(state: &PhaseState, m: usize) -> Result<bool> {
    check_m(state, m)?;
    if state.len() == m - 1 {
        return Ok(true);
    }
    let head = if m >= 2 { Some(jset(&state.prefix(m - 1))?) } else { None };
    Ok(in_g_given(state, m, head.as_ref()))
}

/// As [`in_g`] with a precomputed head jset (`None` when the head is empty).
pub fn in_g_given(state: &PhaseState, m: usize, head: Option<&JSet>) -> bool {
    let lim = state.epsilon() - CONTACT_TOL;
    let ps = state.particles();
    let tail = &ps[(m - 1).min(ps.len())..];
    if let Some(head) = head {
        for p in tail {
            for q in head.iter() {
                if ray_min_distance(p.x - q.x, p.v - q.v) < lim {
                    return false;
                }
            }
        }
    }
    for (a, p) in tail.iter().enumerate() {
        for q in &tail[a + 1..] {
            if ray_min_distance(p.x - q.x, p.v - q.v) < lim {
                return false;
            }
        }
    }
    true
}

fn check_m(state: &PhaseState, m: usize) -> Result<()> {
    if m < 1 {
        return Err(Error::InvalidParam("m must be >= 1".into()));
    }
    if state.len() + 1 < m {
        return Err(Error::Precondition(format!("need s >= m - 1, got s = {}, m = {m}", state.len())));
    }
    Ok(())
}

/// Every pair of distinct jset points has velocity gap `> eta`.
pub fn in_uhat(state: &PhaseState, eta: f64) -> Result<bool> {
    Ok(jset_velocity_gap(&jset(state)?) > eta)
}

/// Smallest velocity gap between distinct points (infinite for one point).
pub fn jset_velocity_gap(j: &JSet) -> f64 {
    let pts = j.points();
    let mut best = f64::INFINITY;
    for a in 0..pts.len() {
        for b in (a + 1)..pts.len() {
            best = best.min((pts[a].v - pts[b].v).norm());
        }
    }
    best
}

/// Free backward flow forever.
pub fn in_k(state: &PhaseState) -> bool {
    is_free_backward(state)
}

/// Pairwise velocity gaps `> eta`.
pub fn in_u(state: &PhaseState, eta: f64) -> bool {
    let ps = state.particles();
    for i in 0..ps.len() {
        for j in (i + 1)..ps.len() {
            if (ps[i].v - ps[j].v).norm() <= eta {
                return false;
            }
        }
    }
    true
}

/// Energy cutoff `E_s <= R^2`.
pub fn within_energy(state: &PhaseState, r: f64) -> bool {
    state.energy() <= r * r
}
