//! Direct `N`-particle experiments: admissible initial data, evolution,
//! kernel-density marginals and the chaoticity metric on good sets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, Direction, Interaction, Particle, PhaseState};
use crate::error::{Error, Result};
use crate::geometry::gaussian_vector;
use crate::goodsets::{in_g, in_k, in_u, in_uhat, within_energy, GoodSetParams};
use crate::hierarchy::{eval_series, DensitySpec, SeriesQuery};
use crate::mc::{chunk_rng, derive_seed, Accumulator};
use crate::pseudotraj::HierarchyKind;

/// Whole configurations are redrawn at most this many times per accepted
/// one before the regime is declared too dense.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

/// `epsilon(N) = (N ell)^{-1/(d-1)}`.
pub fn epsilon_for(n: usize, d: usize, ell: f64) -> Result<f64> {
    if n == 0 || !(ell > 0.0) || !(2..=3).contains(&d) {
        return Err(Error::InvalidParam(format!("bad scaling inputs N = {n}, d = {d}, ell = {ell}")));
    }
    Ok((n as f64 * ell).powf(-1.0 / (d as f64 - 1.0)))
}

/// `h0 * N^{-1/(2d+4)}`.
pub fn default_bandwidth(n: usize, d: usize, h0: f64) -> f64 {
    h0 * (n as f64).powf(-1.0 / (2.0 * d as f64 + 4.0))
}

/// One draw from the single-particle law of tensorized data.
pub fn sample_single<R: Rng + ?Sized>(data: &DensitySpec, rng: &mut R) -> Result<Particle> {
    match data {
        DensitySpec::GaussianProduct { beta, center, spatial_sigma, drift } => {
            let d = center.dim();
            Ok(Particle::new(
                *center + gaussian_vector(d, rng) * *spatial_sigma,
                *drift + gaussian_vector(d, rng) / beta.sqrt(),
            ))
        }
        DensitySpec::TensorPower { base, .. } => sample_single(base, rng),
        DensitySpec::Mixture { components } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (w, c) in components {
                acc += w;
                if u < acc {
                    return sample_single(c, rng);
                }
            }
            sample_single(&components.last().expect("validated mixture").1, rng)
        }
        DensitySpec::PartialTensor { .. } => {
            Err(Error::InvalidParam("initial data must be tensorized; partial_tensor has no single-particle law".into()))
        }
    }
}

fn has_overlap(ps: &[Particle], eps: f64) -> bool {
    if eps == 0.0 || ps.len() < 2 {
        return false;
    }
    // sweep along the first axis
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| ps[a].x[0].total_cmp(&ps[b].x[0]));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if ps[j].x[0] - ps[i].x[0] > eps {
                break;
            }
            if ps[i].x.dist(&ps[j].x) <= eps {
                return true;
            }
        }
    }
    false
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSample {
    pub state: PhaseState,
    pub attempts: u64,
}

impl InitialSample {
    pub fn acceptance_rate(&self) -> f64 {
        1.0 / self.attempts as f64
    }
}

/// `N` i.i.d. particles from the data's single-particle law, conditioned on
/// pairwise separation `> epsilon` by whole-configuration rejection.
pub fn sample_initial(n: usize, epsilon: f64, data: &DensitySpec, seed: u64) -> Result<InitialSample> {
    data.validate()?;
    let d = data.dim().ok_or_else(|| Error::InvalidParam("data has no dimension".into()))?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParam(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut rng = chunk_rng(seed, 0);
    let max_attempts = (1.0 / MIN_ACCEPTANCE).ceil() as u64;
    for attempt in 1..=max_attempts {
        let ps = (0..n).map(|_| sample_single(data, &mut rng)).collect::<Result<Vec<_>>>()?;
        if !has_overlap(&ps, epsilon) {
            return Ok(InitialSample { state: PhaseState::new_unchecked(d, epsilon, ps)?, attempts: attempt });
        }
    }
    Err(Error::TooDense { rate: 0.0, attempts: max_attempts as usize })
}

/// Independent replicas sampled and evolved forward to `t`.
pub fn evolve_replicas(
    n: usize,
    epsilon: f64,
    data: &DensitySpec,
    replicas: usize,
    t: f64,
    seed: u64,
) -> Result<Vec<PhaseState>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let init = sample_initial(n, epsilon, data, derive_seed(seed, r as u64))?;
            if t == 0.0 {
                return Ok(init.state);
            }
            Ok(flow(&init.state, t, Direction::Forward)?.0)
        })
        .collect()
}

fn kernel(p: &Particle, q: &Particle, h: f64) -> f64 {
    let d = p.x.dim() as f64;
    let r2 = (p.x - q.x).norm2() + (p.v - q.v).norm2();
    (-r2 / (2.0 * h * h)).exp() / (2.0 * std::f64::consts::PI * h * h).powf(d)
}

/// Set partitions of `{0..s}` as lists of bitmasks.
fn set_partitions(s: usize) -> Vec<Vec<u32>> {
    fn rec(k: usize, s: usize, blocks: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == s {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] |= 1 << k;
            rec(k + 1, s, blocks, out);
            blocks[b] &= !(1 << k);
        }
        blocks.push(1 << k);
        rec(k + 1, s, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, s, &mut Vec::new(), &mut out);
    out
}

/// Exact symmetrized KDE for one configuration: the average over ordered
/// distinct `s`-tuples of product kernels, via Moebius inversion on the
/// partition lattice (`O(N 2^s)` instead of `O(N^s)`).
pub fn replica_marginal(state: &PhaseState, probe: &[Particle], bandwidth: f64) -> f64 {
    let s = probe.len();
    let n = state.len();
    if s == 0 {
        return 1.0;
    }
    if n < s {
        return 0.0;
    }
    let mut block_sums = vec![0.0; 1 << s];
    let mut vals = vec![0.0; s];
    for p in state.particles() {
        for (j, q) in probe.iter().enumerate() {
            vals[j] = kernel(p, q, bandwidth);
        }
        for mask in 1..(1usize << s) {
            let mut prod = 1.0;
            for (j, v) in vals.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    prod *= v;
                }
            }
            block_sums[mask] += prod;
        }
    }
    let mut total = 0.0;
    for part in set_partitions(s) {
        let mut term = 1.0;
        for &b in &part {
            let size = b.count_ones() as i32;
            let fact: f64 = (1..size).map(|k| k as f64).product();
            term *= if size % 2 == 0 { -fact } else { fact } * block_sums[b as usize];
        }
        total += term;
    }
    let falling: f64 = (0..s).map(|j| (n - j) as f64).product();
    total / falling
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParam(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

/// Replica average of [`replica_marginal`] with its standard error.
pub fn estimate_marginal(states: &[PhaseState], probe: &PhaseState, bandwidth: f64) -> Result<(f64, f64)> {
    check_bandwidth(bandwidth)?;
    if states.is_empty() {
        return Err(Error::InvalidParam("no replicas".into()));
    }
    let mut acc = Accumulator::default();
    for st in states {
        acc.push(replica_marginal(st, probe.particles(), bandwidth));
    }
    Ok((acc.mean(), acc.stderr()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ChaosVariant {
    /// Full factorization on `K_s` with pairwise velocity gaps.
    K,
    /// Factorization of the tail beyond the first `m_prime - 1` particles on
    /// the good set `G_{s|m'}` with separated jset velocities.
    G { m_prime: usize },
}

impl ChaosVariant {
    /// Probe admissibility at the given scale.
    pub fn admits(&self, probe: &PhaseState, params: &GoodSetParams) -> Result<bool> {
        let z = probe.clone().with_epsilon(params.epsilon);
        if z.first_overlap(&Interaction::All).is_some() || !within_energy(&z, params.r) {
            return Ok(false);
        }
        Ok(match self {
            ChaosVariant::K => in_k(&z) && in_u(&z, params.eta),
            ChaosVariant::G { m_prime } => {
                if *m_prime < 2 || z.len() < *m_prime - 1 {
                    return Err(Error::InvalidParam(format!("m' = {m_prime} incompatible with s = {}", z.len())));
                }
                in_g(&z, *m_prime)? && in_uhat(&z, params.eta)?
            }
        })
    }

    fn head_len(&self) -> usize {
        match self {
            ChaosVariant::K => 0,
            ChaosVariant::G { m_prime } => m_prime - 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosResult {
    pub metric: f64,
    pub stderr: f64,
    pub argmax: usize,
    pub probe_count: usize,
}

/// `max_probes |f^(s) - f^(m'-1) prod reference|` (the `K` variant has an
/// empty head). The stderr is the one of the maximizing probe, combining
/// replica spread and the reference's own error.
pub fn chaos_metric<F>(
    states: &[PhaseState],
    variant: ChaosVariant,
    probes: &[PhaseState],
    params: &GoodSetParams,
    reference: F,
    bandwidth: f64,
) -> Result<ChaosResult>
where
    F: Fn(&Particle) -> Result<(f64, f64)> + Sync,
{
    check_bandwidth(bandwidth)?;
    if states.is_empty() {
        return Err(Error::InvalidParam("no replicas".into()));
    }
    let mut admitted = Vec::new();
    for p in probes {
        if variant.admits(p, params)? {
            admitted.push(p);
        }
    }
    if admitted.is_empty() {
        return Err(Error::EmptyProbes);
    }
    let h = variant.head_len();
    let rows = admitted
        .par_iter()
        .map(|probe| -> Result<(f64, f64)> {
            let ps = probe.particles();
            let refs = ps[h..].iter().map(&reference).collect::<Result<Vec<_>>>()?;
            let ref_prod: f64 = refs.iter().map(|r| r.0).product();
            let mut diff = Accumulator::default();
            let mut head = Accumulator::default();
            for st in states {
                let full = replica_marginal(st, ps, bandwidth);
                let hv = replica_marginal(st, &ps[..h], bandwidth);
                head.push(hv);
                diff.push(full - hv * ref_prod);
            }
            let mut var = diff.stderr().powi(2);
            for (i, r) in refs.iter().enumerate() {
                let others: f64 = refs.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, r)| r.0).product();
                var += (head.mean() * others * r.1).powi(2);
            }
            Ok((diff.mean().abs(), var.sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (argmax, best) = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("non-empty");
    Ok(ChaosResult { metric: best.0, stderr: best.1, argmax, probe_count: admitted.len() })
}

/// Single-particle Boltzmann solution by the truncated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannReference {
    pub data: DensitySpec,
    pub ell: f64,
    pub t: f64,
    pub k_max: usize,
    pub n_mc: u64,
    pub seed: u64,
}

impl BoltzmannReference {
    pub fn eval(&self, p: &Particle) -> Result<(f64, f64)> {
        let z = PhaseState::new_unchecked(p.x.dim(), 0.0, vec![*p])?;
        let q = SeriesQuery {
            kind: HierarchyKind::boltzmann(self.ell)?,
            z_s: z,
            t: self.t,
            k_max: self.k_max,
            n_mc: self.n_mc,
            seed: self.seed,
            proposal_beta: None,
        };
        let e = eval_series(&q, &self.data)?;
        Ok((e.total, e.total_stderr))
    }
}

/// Draws probes of `s` particles from the data law until `count` of them are
/// admissible for `variant` at `params`.
pub fn generate_probes(
    data: &DensitySpec,
    s: usize,
    count: usize,
    variant: ChaosVariant,
    params: &GoodSetParams,
    seed: u64,
    max_tries: u64,
) -> Result<Vec<PhaseState>> {
    let d = data.dim().ok_or_else(|| Error::InvalidParam("data has no dimension".into()))?;
    let mut rng = chunk_rng(seed, 0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..max_tries {
        if out.len() == count {
            break;
        }
        let ps = (0..s).map(|_| sample_single(data, &mut rng)).collect::<Result<Vec<_>>>()?;
        let Ok(z) = PhaseState::new(d, params.epsilon, ps) else { continue };
        if variant.admits(&z, params)? {
            out.push(z);
        }
    }
    if out.len() < count {
        return Err(Error::Precondition(format!("only {} of {count} admissible probes found", out.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector;

    fn blob() -> DensitySpec {
        DensitySpec::maxwellian(2, 1.0, 1.0)
    }

    /// Brute force over ordered distinct tuples.
    fn brute(state: &PhaseState, probe: &[Particle], h: f64) -> f64 {
        let n = state.len();
        let ps = state.particles();
        let mut sum = 0.0;
        let mut count = 0.0;
        let mut idx = vec![0usize; probe.len()];
        fn rec(k: usize, idx: &mut Vec<usize>, n: usize, f: &mut dyn FnMut(&[usize])) {
            if k == idx.len() {
                f(idx);
                return;
            }
            for i in 0..n {
                if idx[..k].contains(&i) {
                    continue;
                }
                idx[k] = i;
                rec(k + 1, idx, n, f);
            }
        }
        rec(0, &mut idx, n, &mut |ix| {
            sum += ix.iter().zip(probe).map(|(&i, q)| kernel(&ps[i], q, h)).product::<f64>();
            count += 1.0;
        });
        sum / count
    }

    #[test]
    fn moebius_matches_brute_force() {
        let st = sample_initial(7, 0.01, &blob(), 3).unwrap().state;
        let probe: Vec<Particle> = sample_initial(3, 0.0, &blob(), 4).unwrap().state.particles().to_vec();
        for s in 1..=3 {
            let a = replica_marginal(&st, &probe[..s], 0.7);
            let b = brute(&st, &probe[..s], 0.7);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "s={s} {a} {b}");
        }
        assert_eq!(set_partitions(4).len(), 15);
    }

    #[test]
    fn marginal_is_exchangeable() {
        let st = sample_initial(50, 0.01, &blob(), 5).unwrap().state;
        let mut probe: Vec<Particle> = sample_initial(3, 0.0, &blob(), 6).unwrap().state.particles().to_vec();
        let a = replica_marginal(&st, &probe, 0.5);
        probe.rotate_left(1);
        let b = replica_marginal(&st, &probe, 0.5);
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn sampling_trivial_cases_and_separation() {
        let one = sample_initial(1, 10.0, &blob(), 1).unwrap();
        assert_eq!(one.attempts, 1);
        let free = sample_initial(100, 0.0, &blob(), 1).unwrap();
        assert_eq!(free.acceptance_rate(), 1.0);
        let eps = epsilon_for(256, 2, 1.0).unwrap();
        let s = sample_initial(256, eps, &blob(), 2).unwrap();
        assert!(s.state.min_separation() > eps);
        assert!(matches!(sample_initial(400, 0.5, &blob(), 2), Err(Error::TooDense { .. })));
    }

    #[test]
    fn single_particle_kde_matches_smoothed_gaussian() {
        // E[KDE] of N(0, I) data with an h-kernel is N(0, (1 + h^2) I) in
        // each of the four coordinates, up to exclusion effects
        let h = 0.3;
        let states = evolve_replicas(2000, 0.0, &blob(), 40, 0.0, 11).unwrap();
        for k in 0..5 {
            let x = 0.3 * k as f64;
            let probe = PhaseState::new(2, 0.0, vec![Particle::new(Vector::new2(x, 0.0), Vector::new2(0.0, -x))]).unwrap();
            let (m, se) = estimate_marginal(&states, &probe, h).unwrap();
            let var = 1.0 + h * h;
            let want = (-(2.0 * x * x) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).powi(2);
            assert!((m - want).abs() <= 3.0 * se, "{m} {want} {se}");
        }
        let far = PhaseState::new(2, 0.0, vec![Particle::new(Vector::new2(40.0, 0.0), Vector::zeros(2))]).unwrap();
        assert!(estimate_marginal(&states, &far, h).unwrap().0 < 1e-6);
        assert!(estimate_marginal(&states, &far, 0.0).is_err());
    }

    #[test]
    fn self_reference_gives_zero_metric() {
        let states = evolve_replicas(100, 0.01, &blob(), 30, 0.0, 12).unwrap();
        let params = GoodSetParams::from_scaling(2, 0.01, 0.5, 10.0).unwrap();
        let probes = generate_probes(&blob(), 1, 4, ChaosVariant::K, &params, 1, 1000).unwrap();
        let h = 0.5;
        let r = chaos_metric(
            &states,
            ChaosVariant::K,
            &probes,
            &params,
            |p| estimate_marginal(&states, &PhaseState::new_unchecked(2, 0.0, vec![*p])?, h),
            h,
        )
        .unwrap();
        assert!(r.metric < 1e-15, "{r:?}");
        let none: Vec<PhaseState> = Vec::new();
        assert!(matches!(
            chaos_metric(&states, ChaosVariant::K, &none, &params, |_| Ok((1.0, 0.0)), h),
            Err(Error::EmptyProbes)
        ));
    }

    #[test]
    fn evolution_conserves_energy() {
        let eps = epsilon_for(64, 2, 1.0).unwrap();
        let init = evolve_replicas(64, eps, &blob(), 2, 0.0, 3).unwrap();
        let fin = evolve_replicas(64, eps, &blob(), 2, 0.5, 3).unwrap();
        for (a, b) in init.iter().zip(&fin) {
            assert!((a.energy() - b.energy()).abs() <= 1e-8 * a.energy());
        }
    }
}
