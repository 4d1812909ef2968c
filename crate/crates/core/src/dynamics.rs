//! Exact event-driven hard-sphere flow in whole space.
//!
//! Backward flow is computed as forward flow of the velocity-reversed state:
//! `psi^{-t} = R psi^t R` with `R(x, v) = (x, -v)`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, ray_min_distance, scatter, UnitVec, Vector};

/// Absolute tolerance on contact distances for unit-scale configurations.
pub const CONTACT_TOL: f64 = 1e-9;

/// Default cap on collisions per flow call.
pub const DEFAULT_COLLISION_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: Vector,
    pub v: Vector,
}

impl Particle {
    pub fn new(x: Vector, v: Vector) -> Self {
        Particle { x, v }
    }

    /// Joint Euclidean distance in (x, v).
    pub fn phase_distance(&self, o: &Particle) -> f64 {
        ((self.x - o.x).norm2() + (self.v - o.v).norm2()).sqrt()
    }
}

#[derive(Serialize, Deserialize)]
struct RawState {
    dim: usize,
    epsilon: f64,
    particles: Vec<Particle>,
}

/// Ordered list of particles with the sphere diameter as context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState", into = "RawState")]
pub struct PhaseState {
    dim: usize,
    epsilon: f64,
    particles: Vec<Particle>,
}

impl TryFrom<RawState> for PhaseState {
    type Error = Error;
    fn try_from(r: RawState) -> Result<Self> {
        PhaseState::new(r.dim, r.epsilon, r.particles)
    }
}

impl From<PhaseState> for RawState {
    fn from(s: PhaseState) -> Self {
        RawState { dim: s.dim, epsilon: s.epsilon, particles: s.particles }
    }
}

impl PhaseState {
    /// Builds a state in the closed domain: every pair at least `epsilon`
    /// apart up to [`CONTACT_TOL`].
    pub fn new(dim: usize, epsilon: f64, particles: Vec<Particle>) -> Result<Self> {
        let s = Self::new_unchecked(dim, epsilon, particles)?;
        if let Some((i, j)) = s.first_overlap(&Interaction::All) {
            return Err(Error::Overlap(i, j));
        }
        Ok(s)
    }

    /// Like [`new`](Self::new) but without the separation check. Used for
    /// states of hierarchies where some pairs are transparent.
    pub fn new_unchecked(dim: usize, epsilon: f64, particles: Vec<Particle>) -> Result<Self> {
        check_dim(dim)?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParam(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        for p in &particles {
            if p.x.dim() != dim || p.v.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.x.dim().max(p.v.dim()) });
            }
            if !p.x.is_finite() || !p.v.is_finite() {
                return Err(Error::NonFinite("particle"));
            }
        }
        Ok(PhaseState { dim, epsilon, particles })
    }

    pub fn empty(dim: usize, epsilon: f64) -> Result<Self> {
        Self::new_unchecked(dim, epsilon, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particle(&self, i: usize) -> &Particle {
        &self.particles[i]
    }

    pub(crate) fn particles_mut(&mut self) -> &mut Vec<Particle> {
        &mut self.particles
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// First `n` particles as a new state.
    pub fn prefix(&self, n: usize) -> PhaseState {
        PhaseState { dim: self.dim, epsilon: self.epsilon, particles: self.particles[..n].to_vec() }
    }

    /// `E_s = 1/2 sum |v_i|^2`.
    pub fn energy(&self) -> f64 {
        0.5 * self.particles.iter().map(|p| p.v.norm2()).sum::<f64>()
    }

    pub fn momentum(&self) -> Vector {
        self.particles.iter().fold(Vector::zeros(self.dim), |acc, p| acc + p.v)
    }

    /// Free streaming of every particle by `t` (negative for backward).
    pub fn free_stream(&self, t: f64) -> PhaseState {
        let particles = self.particles.iter().map(|p| Particle::new(p.x + p.v * t, p.v)).collect();
        PhaseState { dim: self.dim, epsilon: self.epsilon, particles }
    }

    /// First pair closer than `epsilon - CONTACT_TOL` among interacting pairs.
    pub fn first_overlap(&self, rule: &Interaction) -> Option<(usize, usize)> {
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if rule.collides(i, j)
                    && self.particles[i].x.dist(&self.particles[j].x) < self.epsilon - CONTACT_TOL
                {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Smallest pairwise distance (infinite for fewer than two particles).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                best = best.min(self.particles[i].x.dist(&self.particles[j].x));
            }
        }
        best
    }
}

/// Which pairs interact during the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interaction {
    /// Every pair collides.
    All,
    /// Only pairs with both indices below the bound collide; the rest pass through.
    Cluster(usize),
    /// No pair collides.
    None,
}

impl Interaction {
    #[inline]
    pub fn collides(&self, i: usize, j: usize) -> bool {
        match *self {
            Interaction::All => true,
            Interaction::Cluster(n) => i < n && j < n,
            Interaction::None => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// Elapsed time since the start of the flow, in the flow's direction.
    pub time: f64,
    pub pair: (usize, usize),
    /// Unit vector from the first to the second particle at contact.
    pub omega: UnitVec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowLog {
    pub events: Vec<CollisionEvent>,
}

impl FlowLog {
    pub fn collision_count(&self) -> usize {
        self.events.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    pub interaction: Interaction,
    pub cap: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { interaction: Interaction::All, cap: DEFAULT_COLLISION_CAP }
    }
}

impl FlowOptions {
    pub fn with_interaction(interaction: Interaction) -> Self {
        FlowOptions { interaction, ..Default::default() }
    }
}

/// Time until `|dx + dv t| = eps` for an approaching pair, where
/// `dx = x_j - x_i`, `dv = v_j - v_i`. Grazing and receding pairs give `None`.
#[inline]
pub fn contact_time(dx: Vector, dv: Vector, eps: f64) -> Option<f64> {
    let b = dx.dot(&dv);
    if b >= 0.0 {
        return None;
    }
    let a = dv.norm2();
    let c = dx.norm2() - eps * eps;
    let disc = b * b - a * c;
    if disc <= 1e-12 * b * b {
        return None;
    }
    // c / (-b + sqrt(disc)) is the smaller root without cancellation
    let t = c / (-b + disc.sqrt());
    Some(t.max(0.0))
}

/// The next contact of `state` in the given direction, scanning all pairs.
///
/// Returns the elapsed time, the pair `(i, j)` with `i < j` and the contact
/// normal. Ties are broken by lexicographic pair order.
pub fn next_event(state: &PhaseState, direction: Direction) -> Option<(f64, (usize, usize), UnitVec)> {
    next_event_with(state, direction, &Interaction::All)
}

pub fn next_event_with(
    state: &PhaseState,
    direction: Direction,
    rule: &Interaction,
) -> Option<(f64, (usize, usize), UnitVec)> {
    let sgn = direction.sign();
    let ps = state.particles();
    let mut best: Option<(f64, (usize, usize))> = None;
    for i in 0..ps.len() {
        for j in (i + 1)..ps.len() {
            if !rule.collides(i, j) {
                continue;
            }
            let dx = ps[j].x - ps[i].x;
            let dv = (ps[j].v - ps[i].v) * sgn;
            if let Some(t) = contact_time(dx, dv, state.epsilon()) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, (i, j)));
                }
            }
        }
    }
    best.map(|(t, (i, j))| {
        let dx = ps[j].x - ps[i].x;
        let dv = (ps[j].v - ps[i].v) * sgn;
        let omega = UnitVec::new(dx + dv * t).expect("contact normal is nonzero");
        (t, (i, j), omega)
    })
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    time: f64,
    i: usize,
    j: usize,
    ci: u64,
    cj: u64,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    fn cmp(&self, o: &Self) -> Ordering {
        self.time.total_cmp(&o.time).then(self.i.cmp(&o.i)).then(self.j.cmp(&o.j))
    }
}

struct Engine {
    eps: f64,
    rule: Interaction,
    x: Vec<Vector>,
    v: Vec<Vector>,
    stamp: Vec<f64>,
    count: Vec<u64>,
    heap: BinaryHeap<Reverse<Pending>>,
}

impl Engine {
    fn new(state: &PhaseState, sgn: f64, rule: Interaction) -> Self {
        let n = state.len();
        let mut e = Engine {
            eps: state.epsilon(),
            rule,
            x: state.particles().iter().map(|p| p.x).collect(),
            v: state.particles().iter().map(|p| p.v * sgn).collect(),
            stamp: vec![0.0; n],
            count: vec![0; n],
            heap: BinaryHeap::new(),
        };
        if !matches!(rule, Interaction::None) && e.eps > 0.0 {
            for i in 0..n {
                for j in (i + 1)..n {
                    e.schedule(i, j, 0.0);
                }
            }
        }
        e
    }

    #[inline]
    fn pos(&self, i: usize, t: f64) -> Vector {
        self.x[i] + self.v[i] * (t - self.stamp[i])
    }

    fn schedule(&mut self, a: usize, b: usize, now: f64) {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if !self.rule.collides(i, j) {
            return;
        }
        let dx = self.pos(j, now) - self.pos(i, now);
        let dv = self.v[j] - self.v[i];
        if let Some(dt) = contact_time(dx, dv, self.eps) {
            self.heap.push(Reverse(Pending {
                time: now + dt,
                i,
                j,
                ci: self.count[i],
                cj: self.count[j],
            }));
        }
    }

    fn run(&mut self, t_end: f64, cap: usize, log: &mut FlowLog) -> Result<()> {
        let n = self.x.len();
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.time > t_end {
                break;
            }
            if ev.ci != self.count[ev.i] || ev.cj != self.count[ev.j] {
                continue;
            }
            let (i, j, te) = (ev.i, ev.j, ev.time);
            let xi = self.pos(i, te);
            let xj = self.pos(j, te);
            let omega = UnitVec::new(xj - xi).map_err(|_| Error::Numeric("coincident centers at contact".into()))?;
            let mid = (xi + xj) * 0.5;
            let half = omega.vector() * (0.5 * self.eps);
            self.x[i] = mid - half;
            self.x[j] = mid + half;
            self.stamp[i] = te;
            self.stamp[j] = te;
            let (vi, vj) = scatter(self.v[i], self.v[j], &omega);
            self.v[i] = vi;
            self.v[j] = vj;
            self.count[i] += 1;
            self.count[j] += 1;
            log.events.push(CollisionEvent { time: te, pair: (i, j), omega });
            if log.events.len() > cap {
                return Err(Error::CollisionCap(cap));
            }
            for k in 0..n {
                if k != i && k != j {
                    self.schedule(i, k, te);
                    self.schedule(j, k, te);
                }
            }
        }
        Ok(())
    }

    fn finish(&self, template: &PhaseState, t_end: f64, sgn: f64) -> PhaseState {
        let particles = (0..self.x.len())
            .map(|i| Particle::new(self.pos(i, t_end), self.v[i] * sgn))
            .collect();
        PhaseState { dim: template.dim, epsilon: template.epsilon, particles }
    }
}

/// Hard-sphere flow for time `t` with every pair interacting.
pub fn flow(state: &PhaseState, t: f64, direction: Direction) -> Result<(PhaseState, FlowLog)> {
    flow_with(state, t, direction, &FlowOptions::default())
}

/// Flow with a custom interaction rule and collision cap.
///
/// Events at exactly elapsed time `t` are applied, so the returned state at
/// an event time is the post-event state.
pub fn flow_with(
    state: &PhaseState,
    t: f64,
    direction: Direction,
    opts: &FlowOptions,
) -> Result<(PhaseState, FlowLog)> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParam(format!("flow time must be finite and >= 0, got {t}")));
    }
    let sgn = direction.sign();
    let mut engine = Engine::new(state, sgn, opts.interaction);
    let mut log = FlowLog::default();
    engine.run(t, opts.cap, &mut log)?;
    Ok((engine.finish(state, t, sgn), log))
}

/// Every collision of the flow until the configuration is free forever.
pub fn all_events(state: &PhaseState, direction: Direction, opts: &FlowOptions) -> Result<FlowLog> {
    let mut engine = Engine::new(state, direction.sign(), opts.interaction);
    let mut log = FlowLog::default();
    engine.run(f64::INFINITY, opts.cap, &mut log)?;
    Ok(log)
}

/// Replaces the velocities of a contact pair by their scattered values,
/// with `omega = (x_j - x_i)/|x_j - x_i|`.
pub fn boundary_involution(state: &PhaseState, pair: (usize, usize)) -> Result<PhaseState> {
    let (i, j) = pair;
    let n = state.len();
    for k in [i, j] {
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, len: n });
        }
    }
    if i == j {
        return Err(Error::InvalidParam("pair indices must differ".into()));
    }
    let (pi, pj) = (state.particle(i), state.particle(j));
    let r = pj.x - pi.x;
    if (r.norm() - state.epsilon()).abs() > CONTACT_TOL {
        return Err(Error::NotAtContact(i, j));
    }
    let omega = UnitVec::new(r)?;
    let (vi, vj) = scatter(pi.v, pj.v, &omega);
    let mut out = state.clone();
    out.particles[i].v = vi;
    out.particles[j].v = vj;
    Ok(out)
}

/// True iff no pair ever comes within `epsilon` under free backward motion.
pub fn is_free_backward(state: &PhaseState) -> bool {
    let ps = state.particles();
    let lim = state.epsilon() - CONTACT_TOL;
    for i in 0..ps.len() {
        for j in (i + 1)..ps.len() {
            if ray_min_distance(ps[i].x - ps[j].x, ps[i].v - ps[j].v) < lim {
                return false;
            }
        }
    }
    true
}
