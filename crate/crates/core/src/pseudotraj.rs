//! Backward pseudo-trajectories with particle creations, for the BBGKY,
//! unsymmetric Boltzmann-Enskog and Boltzmann hierarchies.

use serde::{Deserialize, Serialize};

use crate::dynamics::{flow_with, Direction, FlowLog, FlowOptions, Interaction, Particle, PhaseState, CONTACT_TOL};
use crate::error::{Error, Result};
use crate::geometry::{scatter, UnitVec, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    Bbgky { n: usize, epsilon: f64 },
    EnskogUnsym { epsilon: f64, m: usize },
    Boltzmann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyKind {
    pub variant: Variant,
    /// Mean free path.
    pub ell: f64,
}

impl HierarchyKind {
    /// BBGKY with the diameter fixed by `N eps^(d-1) = 1/ell`.
    pub fn bbgky(n: usize, d: usize, ell: f64) -> Result<Self> {
        crate::geometry::check_dim(d)?;
        check_ell(ell)?;
        if n == 0 {
            return Err(Error::InvalidParam("N must be positive".into()));
        }
        let epsilon = (n as f64 * ell).powf(-1.0 / (d as f64 - 1.0));
        Ok(HierarchyKind { variant: Variant::Bbgky { n, epsilon }, ell })
    }

    /// BBGKY with explicit diameter; the scaling must hold to 1e-12.
    pub fn bbgky_explicit(n: usize, epsilon: f64, d: usize, ell: f64) -> Result<Self> {
        crate::geometry::check_dim(d)?;
        check_ell(ell)?;
        let lhs = n as f64 * epsilon.powi(d as i32 - 1) * ell;
        if (lhs - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!("N eps^(d-1) ell = {lhs}, expected 1")));
        }
        Ok(HierarchyKind { variant: Variant::Bbgky { n, epsilon }, ell })
    }

    pub fn enskog(epsilon: f64, m: usize, ell: f64) -> Result<Self> {
        check_ell(ell)?;
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParam(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if m < 1 {
            return Err(Error::InvalidParam("m must be >= 1".into()));
        }
        Ok(HierarchyKind { variant: Variant::EnskogUnsym { epsilon, m }, ell })
    }

    pub fn boltzmann(ell: f64) -> Result<Self> {
        check_ell(ell)?;
        Ok(HierarchyKind { variant: Variant::Boltzmann, ell })
    }

    pub fn epsilon(&self) -> f64 {
        match self.variant {
            Variant::Bbgky { epsilon, .. } | Variant::EnskogUnsym { epsilon, .. } => epsilon,
            Variant::Boltzmann => 0.0,
        }
    }

    /// Which pairs collide during the backward flow between creations.
    pub fn interaction(&self) -> Interaction {
        match self.variant {
            Variant::Bbgky { .. } => Interaction::All,
            Variant::EnskogUnsym { m, .. } => Interaction::Cluster(m - 1),
            Variant::Boltzmann => Interaction::None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::Bbgky { .. } => "bbgky",
            Variant::EnskogUnsym { .. } => "enskog",
            Variant::Boltzmann => "boltzmann",
        }
    }
}

fn check_ell(ell: f64) -> Result<()> {
    if ell > 0.0 && ell.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("ell must be positive, got {ell}")))
    }
}

/// Creation times, velocities, impact directions and parent indices.
/// Parent `indices[j]` refers to the `s + j` particles present at creation `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreationSpec {
    pub t: f64,
    pub times: Vec<f64>,
    pub velocities: Vec<Vector>,
    pub omegas: Vec<UnitVec>,
    pub indices: Vec<usize>,
}

impl CreationSpec {
    pub fn empty(t: f64) -> Self {
        CreationSpec { t, times: vec![], velocities: vec![], omegas: vec![], indices: vec![] }
    }

    pub fn k(&self) -> usize {
        self.times.len()
    }

    pub fn push(&mut self, time: f64, v: Vector, omega: UnitVec, parent: usize) {
        self.times.push(time);
        self.velocities.push(v);
        self.omegas.push(omega);
        self.indices.push(parent);
    }

    /// Final time and all creation times shifted by `tau`.
    pub fn shifted(&self, tau: f64) -> Self {
        let mut out = self.clone();
        out.t += tau;
        for t in &mut out.times {
            *t += tau;
        }
        out
    }

    pub fn validate(&self, s: usize, d: usize) -> Result<()> {
        let k = self.times.len();
        if self.velocities.len() != k || self.omegas.len() != k || self.indices.len() != k {
            return Err(Error::InvalidParam("creation lists must have equal length".into()));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidParam(format!("final time must be finite and >= 0, got {}", self.t)));
        }
        let mut prev = self.t;
        for (j, &tj) in self.times.iter().enumerate() {
            let ok = if j == 0 { tj <= prev } else { tj < prev };
            if !ok || tj < 0.0 || !tj.is_finite() {
                return Err(Error::InvalidParam(format!("creation times must decrease within [0, t]; time {j} = {tj}")));
            }
            prev = tj;
        }
        for j in 0..k {
            if self.velocities[j].dim() != d || self.omegas[j].dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: self.velocities[j].dim() });
            }
            if !self.velocities[j].is_finite() {
                return Err(Error::NonFinite("creation velocity"));
            }
            if self.indices[j] >= s + j {
                return Err(Error::IndexOutOfRange { index: self.indices[j], len: s + j });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrajectory {
    /// Configuration at time 0 with `s + k` particles.
    pub final_state: PhaseState,
    /// Signed product of impact factors `omega_j . (v_new - v_parent)`.
    pub kernel: f64,
    /// One log per backward interval, `k + 1` in total.
    pub logs: Vec<FlowLog>,
}

/// Builds the pseudo-trajectory of `z_s` for the given creations.
///
/// The state's diameter is replaced by the hierarchy's (0 for Boltzmann).
pub fn build(z_s: &PhaseState, spec: &CreationSpec, kind: &HierarchyKind) -> Result<PseudoTrajectory> {
    let s = z_s.len();
    let d = z_s.dim();
    spec.validate(s, d)?;
    let eps = kind.epsilon();
    let rule = kind.interaction();
    if let Variant::EnskogUnsym { m, .. } = kind.variant {
        if s + 1 < m {
            return Err(Error::Precondition(format!("enskog series needs s >= m - 1, got s = {s}, m = {m}")));
        }
    }
    let mut state = z_s.clone().with_epsilon(eps);
    if let Some((i, j)) = state.first_overlap(&rule) {
        return Err(Error::Overlap(i, j));
    }
    let opts = FlowOptions::with_interaction(rule);
    let mut kernel = 1.0;
    let mut logs = Vec::with_capacity(spec.k() + 1);
    let mut cursor = spec.t;
    for j in 0..spec.k() {
        let (next, log) = flow_with(&state, cursor - spec.times[j], Direction::Backward, &opts)?;
        state = next;
        logs.push(log);
        let parent = spec.indices[j];
        let omega = spec.omegas[j];
        let newcomer = state.len();
        let x_new = state.particle(parent).x + omega.vector() * eps;
        for (q, p) in state.particles().iter().enumerate() {
            if q != parent && rule.collides(q, newcomer) && p.x.dist(&x_new) < eps + CONTACT_TOL {
                return Err(Error::InvalidCreation(format!(
                    "creation {j} at parent {parent} touches particle {q}"
                )));
            }
        }
        let v_parent = state.particle(parent).v;
        let mut v_new = spec.velocities[j];
        let c = omega.dot(&(v_new - v_parent));
        if c > 0.0 {
            let (vp, vn) = scatter(v_parent, v_new, &omega);
            state.particles_mut()[parent].v = vp;
            v_new = vn;
        }
        kernel *= c;
        state.particles_mut().push(Particle::new(x_new, v_new));
        cursor = spec.times[j];
    }
    let (last, log) = flow_with(&state, cursor, Direction::Backward, &opts)?;
    logs.push(log);
    Ok(PseudoTrajectory { final_state: last, kernel, logs })
}

/// Series prefactor of order `k`: `(N-s)!/(N-s-k)! eps^(k(d-1))` for BBGKY,
/// `ell^-k` otherwise.
pub fn coefficient(kind: &HierarchyKind, s: usize, k: usize) -> Result<f64> {
    match kind.variant {
        Variant::Bbgky { n, .. } => {
            if s > n || k > n - s {
                return Err(Error::InvalidParam(format!("order k = {k} exceeds N - s = {}", n.saturating_sub(s))));
            }
            // eps^(d-1) = 1/(N ell)
            let unit = 1.0 / (n as f64 * kind.ell);
            Ok((0..k).map(|j| (n - s - j) as f64 * unit).product())
        }
        _ => Ok(kind.ell.powi(-(k as i32))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::flow;
    use crate::geometry::{gaussian_vector, sample_sphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(x: [f64; 2], v: [f64; 2], eps: f64) -> PhaseState {
        PhaseState::new(2, eps, vec![Particle::new(Vector::new2(x[0], x[1]), Vector::new2(v[0], v[1]))]).unwrap()
    }

    fn single_creation(v2: [f64; 2]) -> CreationSpec {
        let mut spec = CreationSpec::empty(1.0);
        spec.push(0.5, Vector::new2(v2[0], v2[1]), UnitVec::new(Vector::new2(0.0, 1.0)).unwrap(), 0);
        spec
    }

    #[test]
    fn no_creation_is_backward_flow() {
        let eps = 0.01;
        let kind = HierarchyKind::bbgky_explicit(100, eps, 2, 1.0 / (100.0 * eps)).unwrap();
        let z = one([0.0, 0.0], [1.0, 0.0], eps);
        let pt = build(&z, &CreationSpec::empty(2.0), &kind).unwrap();
        assert_eq!(pt.kernel, 1.0);
        assert!((pt.final_state.particle(0).x - Vector::new2(-2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pre_collisional_creation() {
        let eps = 0.01;
        let kind = HierarchyKind::bbgky_explicit(100, eps, 2, 1.0 / (100.0 * eps)).unwrap();
        let pt = build(&one([0.0, 0.0], [1.0, 0.0], eps), &single_creation([0.0, -1.0]), &kind).unwrap();
        assert_eq!(pt.kernel, -1.0);
        let f = &pt.final_state;
        assert!((f.particle(0).x - Vector::new2(-1.0, 0.0)).norm() < 1e-14);
        assert!((f.particle(1).x - Vector::new2(-0.5, eps + 0.5)).norm() < 1e-14);
        assert_eq!(f.particle(1).v, Vector::new2(0.0, -1.0));
        assert_eq!(pt.logs.iter().map(|l| l.collision_count()).sum::<usize>(), 0);
    }

    #[test]
    fn post_collisional_creation_scatters() {
        let eps = 0.01;
        let kind = HierarchyKind::bbgky_explicit(100, eps, 2, 1.0 / (100.0 * eps)).unwrap();
        let pt = build(&one([0.0, 0.0], [1.0, 0.0], eps), &single_creation([0.0, 1.0]), &kind).unwrap();
        assert_eq!(pt.kernel, 1.0);
        let f = &pt.final_state;
        assert!((f.particle(0).v - Vector::new2(1.0, 1.0)).norm() < 1e-15);
        assert!(f.particle(1).v.norm() < 1e-15);
        assert!((f.particle(0).x - Vector::new2(-1.0, -0.5)).norm() < 1e-14);
        assert!((f.particle(1).x - Vector::new2(-0.5, eps)).norm() < 1e-14);
    }

    #[test]
    fn coefficient_values() {
        let eps = 0.1;
        let kind = HierarchyKind::bbgky_explicit(5, (1.0f64 / 5.0).powf(1.0), 2, 1.0).unwrap();
        let e = kind.epsilon();
        assert!((coefficient(&kind, 2, 1).unwrap() - 3.0 * e).abs() < 1e-15);
        assert_eq!(coefficient(&kind, 2, 0).unwrap(), 1.0);
        assert!(coefficient(&kind, 2, 4).is_err());
        let ens = HierarchyKind::enskog(eps, 3, 2.0).unwrap();
        assert_eq!(coefficient(&ens, 4, 3).unwrap(), 0.125);
        assert_eq!(coefficient(&HierarchyKind::boltzmann(2.0).unwrap(), 1, 0).unwrap(), 1.0);
    }

    #[test]
    fn coefficient_approaches_power() {
        for &n in &[100usize, 1000, 10000] {
            let kind = HierarchyKind::bbgky(n, 3, 1.0).unwrap();
            let (s, k) = (2usize, 3usize);
            let a = coefficient(&kind, s, k).unwrap();
            let ratio = a / (n as f64 * kind.epsilon().powi(2)).powi(k as i32);
            assert!((1.0 - ratio).abs() <= 2.0 * ((s + k) * (s + k)) as f64 / n as f64);
        }
    }

    #[test]
    fn scaling_is_enforced() {
        assert!(HierarchyKind::bbgky_explicit(100, 0.02, 2, 1.0).is_err());
        let k = HierarchyKind::bbgky(1000, 3, 2.0).unwrap();
        assert!((1000.0 * k.epsilon().powi(2) * 2.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_rejected() {
        let kind = HierarchyKind::boltzmann(1.0).unwrap();
        let z = one([0.0, 0.0], [1.0, 0.0], 0.0);
        let mut spec = single_creation([0.0, 1.0]);
        spec.indices[0] = 1;
        assert!(matches!(build(&z, &spec, &kind), Err(Error::IndexOutOfRange { .. })));
        let mut spec = single_creation([0.0, 1.0]);
        spec.times[0] = 1.5;
        assert!(build(&z, &spec, &kind).is_err());
    }

    #[test]
    fn creation_touching_third_particle_rejected() {
        let eps = 0.1;
        let kind = HierarchyKind::bbgky_explicit(100, eps, 2, 1.0 / (100.0 * eps)).unwrap();
        let z = PhaseState::new(
            2,
            eps,
            vec![
                Particle::new(Vector::new2(0.0, 0.0), Vector::zeros(2)),
                Particle::new(Vector::new2(0.15, 0.0), Vector::zeros(2)),
            ],
        )
        .unwrap();
        let mut spec = CreationSpec::empty(0.0);
        spec.push(0.0, Vector::zeros(2), UnitVec::new(Vector::new2(1.0, 0.0)).unwrap(), 0);
        assert!(matches!(build(&z, &spec, &kind), Err(Error::InvalidCreation(_))));
    }

    fn random_spec<R: Rng>(rng: &mut R, s: usize, k: usize, t: f64) -> CreationSpec {
        let mut times: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * t).collect();
        times.sort_by(|a, b| b.total_cmp(a));
        let mut spec = CreationSpec::empty(t);
        for (j, tj) in times.into_iter().enumerate() {
            let parent = rng.random_range(0..s + j);
            spec.push(tj, gaussian_vector(2, rng), sample_sphere(2, rng), parent);
        }
        spec
    }

    #[test]
    fn kernel_is_product_of_impacts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kind = HierarchyKind::boltzmann(1.0).unwrap();
        for _ in 0..200 {
            let z = one([0.0, 0.0], [0.3, -0.2], 0.0);
            let spec = random_spec(&mut rng, 1, 3, 1.0);
            let pt = build(&z, &spec, &kind).unwrap();
            assert!(pt.kernel.is_finite());
            assert_eq!(pt.final_state.len(), 4);
        }
    }

    #[test]
    fn enskog_m1_is_free_streaming() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ens = HierarchyKind::enskog(0.05, 1, 1.0).unwrap();
        for _ in 0..50 {
            let z = PhaseState::new(
                2,
                0.05,
                vec![
                    Particle::new(Vector::new2(0.0, 0.0), gaussian_vector(2, &mut rng)),
                    Particle::new(Vector::new2(0.3, 0.1), gaussian_vector(2, &mut rng)),
                ],
            )
            .unwrap();
            let spec = random_spec(&mut rng, 2, 2, 1.0);
            let pt = build(&z, &spec, &ens).unwrap();
            assert!(pt.logs.iter().all(|l| l.collision_count() == 0));
        }
    }

    #[test]
    fn bbgky_round_trip_without_creations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let eps = 0.2;
        let kind = HierarchyKind::bbgky_explicit(25, eps, 2, 1.0 / (25.0 * eps)).unwrap();
        for _ in 0..20 {
            let ps = (0..3)
                .map(|i| Particle::new(Vector::new2(i as f64 * 0.5, rng.random::<f64>()), gaussian_vector(2, &mut rng)))
                .collect();
            let Ok(z) = PhaseState::new(2, eps, ps) else { continue };
            let pt = build(&z, &CreationSpec::empty(1.5), &kind).unwrap();
            let (back, _) = flow(&pt.final_state, 1.5, Direction::Forward).unwrap();
            for (a, b) in back.particles().iter().zip(z.particles()) {
                assert!(a.phase_distance(b) < 1e-8);
            }
        }
    }

    #[test]
    fn small_eps_bbgky_matches_boltzmann_without_recollisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let boltz = HierarchyKind::boltzmann(1.0).unwrap();
        let mut checked = 0;
        for _ in 0..200 {
            let eps = 1e-4;
            let kind = HierarchyKind::bbgky_explicit(1000, eps, 2, 1.0 / (1000.0 * eps)).unwrap();
            let z = one([0.0, 0.0], [0.5, 0.5], eps);
            let spec = random_spec(&mut rng, 1, 2, 1.0);
            let Ok(a) = build(&z, &spec, &kind) else { continue };
            if a.logs.iter().any(|l| l.collision_count() > 0) {
                continue;
            }
            let b = build(&z, &spec, &boltz).unwrap();
            assert!((a.kernel - b.kernel).abs() < 1e-12 * (1.0 + b.kernel.abs()));
            for (p, q) in a.final_state.particles().iter().zip(b.final_state.particles()) {
                assert!((p.v - q.v).norm() < 1e-12);
                assert!((p.x - q.x).norm() < 10.0 * eps);
            }
            checked += 1;
        }
        assert!(checked > 150);
    }
}
