//! The segment-representative enumeration against the defining union over
//! backward times, sampled on a dense grid.

use hardsphere::jset::delete;
use hardsphere::{flow, jset, Direction, Particle, PhaseState, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 0.02;
const HORIZON: f64 = 6.0;

fn grid_points(state: &PhaseState, t_acc: f64, out: &mut Vec<Particle>) {
    if state.len() == 1 {
        let p = state.particle(0);
        out.push(Particle::new(p.x + p.v * t_acc, p.v));
        return;
    }
    let steps = (HORIZON / STEP) as usize;
    for i in 0..=steps {
        // offset off the lattice so no sample sits exactly on an event time
        let tau = i as f64 * STEP + STEP * 0.37;
        let (flowed, _) = flow(state, tau, Direction::Backward).unwrap();
        for k in 0..flowed.len() {
            grid_points(&delete(&flowed, k).unwrap(), t_acc + tau, out);
        }
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> PhaseState {
    loop {
        let ps: Vec<Particle> = (0..3)
            .map(|_| {
                // outward drift forward is convergence backward
                let x = Vector::new2(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
                let jitter = Vector::new2(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                Particle::new(x, x * 0.6 + jitter)
            })
            .collect();
        if let Ok(z) = PhaseState::new(2, 0.5, ps) {
            return z;
        }
    }
}

#[test]
fn grid_union_is_contained_in_segment_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut hit_all, mut nontrivial) = (0, 0);
    for _ in 0..12 {
        let z = random_state(&mut rng);
        let j = jset(&z).unwrap();
        if j.len() > z.len() {
            nontrivial += 1;
        }
        let mut pts = Vec::new();
        grid_points(&z, 0.0, &mut pts);
        for p in &pts {
            assert!(j.contains(p), "grid point {p:?} missing from {:?}", j.points());
        }
        // segments shorter than the grid step may be skipped; generic ones are not
        if j.iter().all(|q| pts.iter().any(|p| p.phase_distance(q) <= j.dedup_tol())) {
            hit_all += 1;
        }
    }
    assert!(nontrivial >= 4, "only {nontrivial}/12 states collide backward");
    assert!(hit_all >= 9, "grid reached every enumerated point in only {hit_all}/12 states");
}
