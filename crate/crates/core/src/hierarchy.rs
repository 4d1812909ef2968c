//! Collision-operator quadratures and Monte Carlo evaluation of truncated
//! iterated Duhamel series.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow_with, Direction, FlowOptions, Particle, PhaseState};
use crate::error::{Error, Result};
use crate::geometry::{gaussian_vector, sample_sphere, scatter, sphere_area, unit_ball_volume_codim1, Vector};
use crate::mc::{derive_seed, run_chunked, run_chunked_with, Accumulator, McEstimate};
use crate::pseudotraj::{build, coefficient, CreationSpec, HierarchyKind, Variant};

/// Initial data for the hierarchies: a family of `n`-particle densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    /// `prod_i N(x_i; center, sigma^2) N(v_i; drift, 1/beta)` for any `n`.
    GaussianProduct { beta: f64, center: Vector, spatial_sigma: f64, drift: Vector },
    /// `base^{(x) count}`; `base` is evaluated on single particles. Without
    /// a count the power matches the number of particles evaluated.
    TensorPower {
        base: Box<DensitySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    },
    /// `head` on the first `head_count` particles times `tail_base` on each
    /// remaining one.
    PartialTensor { head: Box<DensitySpec>, head_count: usize, tail_base: Box<DensitySpec> },
    /// Convex combination of the component families at each particle count;
    /// a mixture of products is therefore correlated.
    Mixture { components: Vec<(f64, DensitySpec)> },
}

impl DensitySpec {
    pub fn maxwellian(d: usize, beta: f64, spatial_sigma: f64) -> Self {
        DensitySpec::GaussianProduct { beta, center: Vector::zeros(d), spatial_sigma, drift: Vector::zeros(d) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::GaussianProduct { beta, center, spatial_sigma, drift } => {
                if !(*beta > 0.0 && *spatial_sigma > 0.0) || !beta.is_finite() || !spatial_sigma.is_finite() {
                    return Err(Error::InvalidParam("gaussian beta and sigma must be positive".into()));
                }
                if center.dim() != drift.dim() {
                    return Err(Error::DimensionMismatch { expected: center.dim(), found: drift.dim() });
                }
                Ok(())
            }
            DensitySpec::TensorPower { base, .. } => base.validate(),
            DensitySpec::PartialTensor { head, tail_base, .. } => {
                head.validate()?;
                tail_base.validate()
            }
            DensitySpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParam("empty mixture".into()));
                }
                let total: f64 = components.iter().map(|c| c.0).sum();
                if components.iter().any(|c| c.0 < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParam(format!("mixture weights must be >= 0 and sum to 1, got {total}")));
                }
                components.iter().try_for_each(|c| c.1.validate())
            }
        }
    }

    /// Density at an ordered list of particles.
    pub fn eval(&self, ps: &[Particle]) -> Result<f64> {
        match self {
            DensitySpec::GaussianProduct { .. } => Ok(ps.iter().map(|p| self.single(p)).product()),
            DensitySpec::TensorPower { base, count } => {
                if count.is_some_and(|c| c != ps.len()) {
                    let count = count.unwrap_or_default();
                    return Err(Error::InvalidParam(format!("tensor power of {count} evaluated on {}", ps.len())));
                }
                ps.iter().try_fold(1.0, |acc, p| Ok(acc * base.eval(std::slice::from_ref(p))?))
            }
            DensitySpec::PartialTensor { head, head_count, tail_base } => {
                if ps.len() < *head_count {
                    return Err(Error::InvalidParam(format!("partial tensor needs >= {head_count} particles")));
                }
                let mut acc = head.eval(&ps[..*head_count])?;
                for p in &ps[*head_count..] {
                    acc *= tail_base.eval(std::slice::from_ref(p))?;
                }
                Ok(acc)
            }
            DensitySpec::Mixture { components } => {
                components.iter().try_fold(0.0, |acc, (w, c)| Ok(acc + w * c.eval(ps)?))
            }
        }
    }

    fn single(&self, p: &Particle) -> f64 {
        match self {
            DensitySpec::GaussianProduct { beta, center, spatial_sigma, drift } => {
                let d = p.x.dim() as f64;
                let s2 = spatial_sigma * spatial_sigma;
                let nx = (-(p.x - *center).norm2() / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).powf(d / 2.0);
                let nv = (-(p.v - *drift).norm2() * beta / 2.0).exp() * (beta / (2.0 * std::f64::consts::PI)).powf(d / 2.0);
                nx * nv
            }
            _ => self.eval(std::slice::from_ref(p)).unwrap_or(0.0),
        }
    }

    /// Spatial dimension of the underlying Gaussians.
    pub fn dim(&self) -> Option<usize> {
        match self {
            DensitySpec::GaussianProduct { center, .. } => Some(center.dim()),
            DensitySpec::TensorPower { base, .. } => base.dim(),
            DensitySpec::PartialTensor { tail_base, .. } => tail_base.dim(),
            DensitySpec::Mixture { components } => components.first().and_then(|c| c.1.dim()),
        }
    }

    /// Inverse temperature of the first Gaussian factor.
    pub fn beta(&self) -> Option<f64> {
        match self {
            DensitySpec::GaussianProduct { beta, .. } => Some(*beta),
            DensitySpec::TensorPower { base, .. } => base.beta(),
            DensitySpec::PartialTensor { head, tail_base, .. } => tail_base.beta().or_else(|| head.beta()),
            DensitySpec::Mixture { components } => {
                components.iter().filter_map(|c| c.1.beta()).reduce(f64::min)
            }
        }
    }

    /// `sup_{x,v} f(x,v) e^{beta0 |v|^2/2}` of the single-particle law with
    /// `beta0 = beta/2` (for mixtures, the sum of component suprema).
    pub fn weighted_amplitude(&self, d: usize) -> Option<f64> {
        self.amplitude_at(d, self.beta()? / 2.0)
    }

    fn amplitude_at(&self, d: usize, beta0: f64) -> Option<f64> {
        match self {
            DensitySpec::GaussianProduct { beta, spatial_sigma, drift, .. } => {
                // max_v of -beta/2 |v-u|^2 + beta0/2 |v|^2 is a b |u|^2 / (a - b)
                let (a, b) = (beta / 2.0, beta0 / 2.0);
                if a <= b {
                    return None;
                }
                let tau = 2.0 * std::f64::consts::PI;
                let peak = (tau * spatial_sigma * spatial_sigma).powf(-(d as f64) / 2.0) * (beta / tau).powf(d as f64 / 2.0);
                Some(peak * (a * b * drift.norm2() / (a - b)).exp())
            }
            DensitySpec::TensorPower { base, .. } => base.amplitude_at(d, beta0),
            DensitySpec::PartialTensor { tail_base, .. } => tail_base.amplitude_at(d, beta0),
            DensitySpec::Mixture { components } => {
                components.iter().try_fold(0.0, |acc, (w, c)| Some(acc + w * c.amplitude_at(d, beta0)?))
            }
        }
    }
}

/// Lanford-time proxy `C_d ell e^{mu0} beta0^{(d+1)/2}` with `beta0 = beta/2`,
/// `e^{mu0}` the inverse weighted amplitude and
/// `C_d = 1 / (2 |B^{d-1}| (2 pi)^{d/2})`.
pub fn lanford_time_proxy(d: usize, ell: f64, data: &DensitySpec) -> Result<f64> {
    let beta = data.beta().ok_or_else(|| Error::InvalidParam("data has no Gaussian factor".into()))?;
    let amp = data
        .weighted_amplitude(d)
        .ok_or_else(|| Error::InvalidParam("data has no finite weighted amplitude".into()))?;
    let c_d = 1.0 / (2.0 * unit_ball_volume_codim1(d) * (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0));
    Ok(c_d * ell * (1.0 / amp) * (beta / 2.0).powf((d as f64 + 1.0) / 2.0))
}

/// Isotropic Gaussian proposal `N(0, 1/beta)`.
#[derive(Clone, Copy, Debug)]
pub struct VelocityProposal {
    pub beta: f64,
    pub d: usize,
}

impl VelocityProposal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        gaussian_vector(self.d, rng) / self.beta.sqrt()
    }

    pub fn density(&self, v: &Vector) -> f64 {
        (self.beta / (2.0 * std::f64::consts::PI)).powf(self.d as f64 / 2.0) * (-self.beta * v.norm2() / 2.0).exp()
    }
}

/// Gain-minus-loss Boltzmann operator `Q(f,f)(x,v)` with kernel
/// `[omega . (v1 - v)]_+`.
pub fn eval_q<F>(f: F, x: Vector, v: Vector, proposal_beta: f64, n_quad: u64, seed: u64) -> Result<McEstimate>
where
    F: Fn(&Vector, &Vector) -> f64 + Sync,
{
    let d = x.dim();
    if n_quad == 0 {
        return Err(Error::InvalidParam("n_quad must be positive".into()));
    }
    let prop = VelocityProposal { beta: proposal_beta, d };
    let area = sphere_area(d);
    let acc = run_chunked(n_quad, seed, |rng, count, acc| {
        for _ in 0..count {
            let v1 = prop.sample(rng);
            let w = sample_sphere(d, rng);
            let c = w.dot(&(v1 - v));
            if c <= 0.0 {
                acc.push(0.0);
                continue;
            }
            let (vs, v1s) = scatter(v, v1, &w);
            let val = c * (f(&x, &vs) * f(&x, &v1s) - f(&x, &v) * f(&x, &v1));
            acc.push(val * area / prop.density(&v1));
        }
    });
    Ok(acc.estimate(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionOp {
    CPlus,
    CMinus,
    CtildePlus,
    CtildeMinus,
}

/// One collision term `C^{+-}_{i,s+1}` or its transparent analogue applied to
/// `g` at `Z_s`. The BBGKY operators see `g` on the hard-sphere domain and
/// vanish where the created particle overlaps a third one.
#[allow(clippy::too_many_arguments)]
pub fn eval_collision_op<G>(
    op: CollisionOp,
    i: usize,
    g: G,
    z_s: &PhaseState,
    epsilon: f64,
    proposal_beta: f64,
    n_quad: u64,
    seed: u64,
) -> Result<McEstimate>
where
    G: Fn(&[Particle]) -> f64 + Sync,
{
    let s = z_s.len();
    if i >= s {
        return Err(Error::IndexOutOfRange { index: i, len: s });
    }
    if n_quad == 0 {
        return Err(Error::InvalidParam("n_quad must be positive".into()));
    }
    let d = z_s.dim();
    let prop = VelocityProposal { beta: proposal_beta, d };
    let area = sphere_area(d);
    let gain = matches!(op, CollisionOp::CPlus | CollisionOp::CtildePlus);
    let excluded = matches!(op, CollisionOp::CPlus | CollisionOp::CMinus);
    let acc = run_chunked(n_quad, seed, |rng, count, acc| {
        let mut buf: Vec<Particle> = Vec::with_capacity(s + 1);
        for _ in 0..count {
            let vn = prop.sample(rng);
            let w = sample_sphere(d, rng);
            let pi = z_s.particle(i);
            let c = w.dot(&(vn - pi.v));
            if (gain && c <= 0.0) || (!gain && c >= 0.0) {
                acc.push(0.0);
                continue;
            }
            let xn = pi.x + w.vector() * epsilon;
            if excluded
                && z_s.particles().iter().enumerate().any(|(k, p)| k != i && p.x.dist(&xn) < epsilon)
            {
                acc.push(0.0);
                continue;
            }
            buf.clear();
            buf.extend_from_slice(z_s.particles());
            let vn_eval = if gain {
                let (vi_s, vn_s) = scatter(pi.v, vn, &w);
                buf[i].v = vi_s;
                vn_s
            } else {
                vn
            };
            buf.push(Particle::new(xn, vn_eval));
            acc.push(c.abs() * g(&buf) * area / prop.density(&vn));
        }
    });
    Ok(acc.estimate(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesQuery {
    pub kind: HierarchyKind,
    pub z_s: PhaseState,
    pub t: f64,
    pub k_max: usize,
    pub n_mc: u64,
    pub seed: u64,
    /// Proposal inverse temperature; defaults to the data's.
    pub proposal_beta: Option<f64>,
}

pub const MAX_ORDER: usize = 4;
pub const MAX_PARTICLES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesEstimate {
    /// Signed term of each order.
    pub per_order: Vec<McEstimate>,
    /// Mean absolute integrand of each order (magnitude diagnostic).
    pub abs_per_order: Vec<McEstimate>,
    pub total: f64,
    pub total_stderr: f64,
}

impl SeriesEstimate {
    fn from_orders(per_order: Vec<McEstimate>, abs_per_order: Vec<McEstimate>) -> Self {
        let total = per_order.iter().map(|e| e.mean).sum();
        let total_stderr = per_order.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
        SeriesEstimate { per_order, abs_per_order, total, total_stderr }
    }
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|j| (j as f64).ln()).sum()
}

/// Truncated Duhamel series for `f^{(s)}(t, Z_s)`, one Monte Carlo estimate
/// per order `k = 0..=k_max`.
pub fn eval_series(q: &SeriesQuery, data: &DensitySpec) -> Result<SeriesEstimate> {
    data.validate()?;
    let s = q.z_s.len();
    let d = q.z_s.dim();
    if s == 0 {
        return Err(Error::InvalidParam("series needs s >= 1".into()));
    }
    if !(q.t >= 0.0 && q.t.is_finite()) {
        return Err(Error::InvalidParam(format!("t must be finite and >= 0, got {}", q.t)));
    }
    if q.k_max > MAX_ORDER || s + q.k_max > MAX_PARTICLES {
        return Err(Error::InvalidParam(format!(
            "truncation k_max = {} with s = {s} exceeds k_max <= {MAX_ORDER}, s + k <= {MAX_PARTICLES}",
            q.k_max
        )));
    }
    if let Variant::Bbgky { n, .. } = q.kind.variant {
        if s + q.k_max > n {
            return Err(Error::InvalidParam(format!("k_max = {} exceeds N - s = {}", q.k_max, n.saturating_sub(s))));
        }
    }
    let beta = q
        .proposal_beta
        .or_else(|| data.beta())
        .ok_or_else(|| Error::InvalidParam("no proposal temperature available".into()))?;
    let prop = VelocityProposal { beta, d };

    // order 0: pure transport
    let pt0 = build(&q.z_s, &CreationSpec::empty(q.t), &q.kind)?;
    let v0 = data.eval(pt0.final_state.particles())?;
    let mut per_order = vec![McEstimate::exact(v0)];
    let mut abs_per_order = vec![McEstimate::exact(v0.abs())];

    let area = sphere_area(d);
    for k in 1..=q.k_max {
        if q.t == 0.0 || q.n_mc == 0 {
            per_order.push(McEstimate::exact(0.0));
            abs_per_order.push(McEstimate::exact(0.0));
            continue;
        }
        let coef = coefficient(&q.kind, s, k)?;
        let simplex = (k as f64 * q.t.ln() - ln_factorial(k)).exp();
        let index_weight: f64 = (0..k).map(|j| (s + j) as f64).product();
        let fixed = coef * simplex * index_weight * area.powi(k as i32);
        #[derive(Default)]
        struct Acc {
            signed: Accumulator,
            abs: Accumulator,
            errors: u64,
            first_error: Option<String>,
        }
        let acc = run_chunked_with(
            q.n_mc,
            derive_seed(q.seed, k as u64),
            Acc::default,
            |a, b| {
                a.signed.merge(&b.signed);
                a.abs.merge(&b.abs);
                a.errors += b.errors;
                if a.first_error.is_none() {
                    a.first_error.clone_from(&b.first_error);
                }
            },
            |rng, count, acc| {
                for _ in 0..count {
                    let mut times: Vec<f64> = (0..k).map(|_| q.t * rng.random::<f64>()).collect();
                    times.sort_by(|a, b| b.total_cmp(a));
                    let mut spec = CreationSpec::empty(q.t);
                    let mut w = fixed;
                    for (j, tj) in times.into_iter().enumerate() {
                        let parent = rng.random_range(0..s + j);
                        let v = prop.sample(rng);
                        w /= prop.density(&v);
                        spec.push(tj, v, sample_sphere(d, rng), parent);
                    }
                    let val = match build(&q.z_s, &spec, &q.kind) {
                        Ok(pt) => match data.eval(pt.final_state.particles()) {
                            Ok(f) => w * pt.kernel * f,
                            Err(e) => {
                                acc.errors += 1;
                                acc.first_error.get_or_insert_with(|| e.to_string());
                                0.0
                            }
                        },
                        Err(Error::InvalidCreation(_)) => 0.0,
                        Err(e) => {
                            acc.errors += 1;
                            acc.first_error.get_or_insert_with(|| e.to_string());
                            0.0
                        }
                    };
                    acc.signed.push(val);
                    acc.abs.push(val.abs());
                }
            },
        );
        if acc.errors > 0 {
            return Err(Error::Numeric(format!(
                "{} series samples failed at order {k}: {}",
                acc.errors,
                acc.first_error.unwrap_or_default()
            )));
        }
        per_order.push(acc.signed.estimate(1.0));
        abs_per_order.push(acc.abs.estimate(1.0));
    }
    Ok(SeriesEstimate::from_orders(per_order, abs_per_order))
}

/// Shared settings of a factorization check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationSettings {
    pub epsilon: f64,
    pub ell: f64,
    pub k_max: usize,
    pub n_mc: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationRow {
    pub probe: PhaseState,
    pub full: f64,
    pub full_stderr: f64,
    pub product: f64,
    pub product_stderr: f64,
    pub difference: f64,
    pub combined_stderr: f64,
}

impl FactorizationRow {
    /// `|difference| <= z * combined_stderr` (exact zero when both vanish).
    pub fn within(&self, z: f64) -> bool {
        self.difference.abs() <= z * self.combined_stderr
    }
}

/// Truncated Cauchy product of per-order series with delta-method error.
fn cauchy_product(factors: &[SeriesEstimate], k_max: usize) -> (f64, f64) {
    let conv = |fs: &[&SeriesEstimate]| -> Vec<f64> {
        let mut c = vec![0.0; k_max + 1];
        c[0] = 1.0;
        for f in fs {
            let mut next = vec![0.0; k_max + 1];
            for (a, ca) in c.iter().enumerate() {
                for (b, e) in f.per_order.iter().enumerate() {
                    if a + b <= k_max {
                        next[a + b] += ca * e.mean;
                    }
                }
            }
            c = next;
        }
        c
    };
    let all: Vec<&SeriesEstimate> = factors.iter().collect();
    let value: f64 = conv(&all).iter().sum();
    let mut var = 0.0;
    for (fi, f) in factors.iter().enumerate() {
        let others: Vec<&SeriesEstimate> =
            factors.iter().enumerate().filter(|(j, _)| *j != fi).map(|(_, e)| e).collect();
        let oc = conv(&others);
        for (k, e) in f.per_order.iter().enumerate() {
            let deriv: f64 = oc.iter().take(k_max + 1 - k.min(k_max + 1)).sum();
            var += (deriv * e.stderr).powi(2);
        }
    }
    (value, var.sqrt())
}

/// Compares the `s`-particle Enskog series with the product of the
/// `(m-1)`-particle series and single-particle (`m = 1`) series at each tail
/// particle, truncated consistently at total order `k_max`.
pub fn check_partial_factorization(
    m: usize,
    s: usize,
    t: f64,
    probes: &[PhaseState],
    data: &DensitySpec,
    settings: &FactorizationSettings,
) -> Result<Vec<FactorizationRow>> {
    let DensitySpec::PartialTensor { head_count, tail_base, .. } = data else {
        return Err(Error::Precondition("factorization check needs partial_tensor data".into()));
    };
    if m < 2 || *head_count != m - 1 || s + 1 < m {
        return Err(Error::Precondition(format!("need head of m - 1 = {} particles and s >= m - 1", m.max(1) - 1)));
    }
    let full_kind = HierarchyKind::enskog(settings.epsilon, m, settings.ell)?;
    let tail_kind = HierarchyKind::enskog(settings.epsilon, 1, settings.ell)?;
    let tail_data = DensitySpec::TensorPower { base: tail_base.clone(), count: None };
    let query = |kind: HierarchyKind, z: PhaseState, seed: u64| SeriesQuery {
        kind,
        z_s: z,
        t,
        k_max: settings.k_max,
        n_mc: settings.n_mc,
        seed,
        proposal_beta: None,
    };
    let mut rows = Vec::with_capacity(probes.len());
    for (pi, probe) in probes.iter().enumerate() {
        if probe.len() != s {
            return Err(Error::InvalidParam(format!("probe {pi} has {} particles, expected {s}", probe.len())));
        }
        let base_seed = derive_seed(settings.seed, pi as u64);
        let full_seed = if s > m - 1 { derive_seed(base_seed, 1) } else { base_seed };
        let full = eval_series(&query(full_kind, probe.clone(), full_seed), data)?;
        let mut factors = vec![eval_series(&query(full_kind, probe.prefix(m - 1), base_seed), data)?];
        for (j, p) in probe.particles()[m - 1..].iter().enumerate() {
            let single = PhaseState::new_unchecked(probe.dim(), settings.epsilon, vec![*p])?;
            factors.push(eval_series(&query(tail_kind, single, derive_seed(base_seed, 2 + j as u64)), &tail_data)?);
        }
        let (product, product_stderr) = cauchy_product(&factors, settings.k_max);
        rows.push(FactorizationRow {
            probe: probe.clone(),
            full: full.total,
            full_stderr: full.total_stderr,
            product,
            product_stderr,
            difference: full.total - product,
            combined_stderr: (full.total_stderr.powi(2) + product_stderr.powi(2)).sqrt(),
        });
    }
    Ok(rows)
}

/// Backward transport of a single particle under free flight, for callers
/// that want `T(t) f` without building a series.
pub fn free_transport(data: &DensitySpec, z: &PhaseState, t: f64) -> Result<f64> {
    let (back, _) = flow_with(z, t, Direction::Backward, &FlowOptions::with_interaction(crate::dynamics::Interaction::None))?;
    data.eval(back.particles())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maxw(d: usize) -> DensitySpec {
        DensitySpec::maxwellian(d, 1.0, 1.0)
    }

    fn z1(x: [f64; 2], v: [f64; 2]) -> PhaseState {
        PhaseState::new(2, 0.0, vec![Particle::new(Vector::new2(x[0], x[1]), Vector::new2(v[0], v[1]))]).unwrap()
    }

    #[test]
    fn gaussian_is_normalized_in_velocity_and_space() {
        // 2-d: crude tensor quadrature over x and v separately
        let f = maxw(2);
        let h = 0.1;
        let mut sum = 0.0;
        for a in -60..60 {
            for b in -60..60 {
                let p = Particle::new(Vector::new2(a as f64 * h, b as f64 * h), Vector::zeros(2));
                sum += f.eval(&[p]).unwrap();
            }
        }
        // integrate x at v = 0, then multiply by the v-normalizer
        let nv0 = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((sum * h * h / nv0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn q_vanishes_on_maxwellian_and_zero() {
        let f = maxw(2);
        let fx = |x: &Vector, v: &Vector| f.eval(&[Particle::new(*x, *v)]).unwrap();
        let e = eval_q(fx, Vector::new2(0.1, 0.2), Vector::new2(0.5, -0.3), 1.0, 20_000, 1).unwrap();
        assert!(e.mean.abs() <= 3.0 * e.stderr + 1e-14, "{e:?}");
        let zero = eval_q(|_: &Vector, _: &Vector| 0.0, Vector::zeros(2), Vector::new2(1.0, 0.0), 1.0, 1000, 1).unwrap();
        assert_eq!(zero.mean, 0.0);
    }

    #[test]
    fn collision_ops_basic_identities() {
        let z = PhaseState::new(
            2,
            0.0,
            vec![
                Particle::new(Vector::new2(0.0, 0.0), Vector::new2(0.3, 0.0)),
                Particle::new(Vector::new2(1.0, 0.5), Vector::new2(-0.2, 0.4)),
            ],
        )
        .unwrap();
        let zero = eval_collision_op(CollisionOp::CPlus, 0, |_: &[Particle]| 0.0, &z, 0.0, 1.0, 1000, 3).unwrap();
        assert_eq!(zero.mean, 0.0);
        let m = maxw(2);
        let g = |ps: &[Particle]| m.eval(ps).unwrap();
        let a = eval_collision_op(CollisionOp::CMinus, 1, g, &z, 0.0, 1.0, 5000, 4).unwrap();
        let b = eval_collision_op(CollisionOp::CtildeMinus, 1, g, &z, 0.0, 1.0, 5000, 4).unwrap();
        assert_eq!(a, b);
        let gp = eval_collision_op(CollisionOp::CPlus, 0, g, &z, 0.0, 1.0, 100_000, 5).unwrap();
        let gm = eval_collision_op(CollisionOp::CMinus, 0, g, &z, 0.0, 1.0, 100_000, 6).unwrap();
        let se = (gp.stderr.powi(2) + gm.stderr.powi(2)).sqrt();
        assert!((gp.mean - gm.mean).abs() <= 3.0 * se, "{gp:?} {gm:?}");
    }

    #[test]
    fn order_zero_is_transport_and_t0_is_data() {
        let data = maxw(2);
        let z = z1([0.5, 0.0], [1.0, 0.2]);
        let kind = HierarchyKind::boltzmann(1.0).unwrap();
        let q = SeriesQuery { kind, z_s: z.clone(), t: 0.3, k_max: 0, n_mc: 100, seed: 1, proposal_beta: None };
        let e = eval_series(&q, &data).unwrap();
        assert_eq!(e.per_order.len(), 1);
        assert_eq!(e.total_stderr, 0.0);
        assert_eq!(e.total, free_transport(&data, &z, 0.3).unwrap());
        for kind in [
            HierarchyKind::boltzmann(1.0).unwrap(),
            HierarchyKind::enskog(0.01, 2, 1.0).unwrap(),
            HierarchyKind::bbgky(100, 2, 1.0).unwrap(),
        ] {
            let z = PhaseState::new(2, kind.epsilon(), z.particles().to_vec()).unwrap();
            let q = SeriesQuery { kind, z_s: z.clone(), t: 0.0, k_max: 2, n_mc: 100, seed: 1, proposal_beta: None };
            let e = eval_series(&q, &data).unwrap();
            assert_eq!(e.total, data.eval(z.particles()).unwrap());
        }
    }

    #[test]
    fn bbgky_order_cap() {
        let data = maxw(2);
        let kind = HierarchyKind::bbgky(2, 2, 1.0).unwrap();
        let z = PhaseState::new(2, kind.epsilon(), vec![Particle::new(Vector::zeros(2), Vector::zeros(2))]).unwrap();
        let q = SeriesQuery { kind, z_s: z, t: 0.1, k_max: 2, n_mc: 10, seed: 1, proposal_beta: None };
        assert!(eval_series(&q, &data).is_err());
    }

    #[test]
    fn lanford_proxy_value() {
        let p = lanford_time_proxy(2, 1.0, &maxw(2)).unwrap();
        // d = 2, beta = sigma = 1: (1 / 8 pi) * 4 pi^2 * 2^{-3/2}
        let want = std::f64::consts::PI / 2.0 * 0.5f64.powf(1.5);
        assert!((p - want).abs() < 1e-12, "{p}");
    }

    #[test]
    fn cauchy_product_of_exact_series() {
        let ex = |v: &[f64]| SeriesEstimate::from_orders(
            v.iter().map(|x| McEstimate::exact(*x)).collect(),
            v.iter().map(|x| McEstimate::exact(x.abs())).collect(),
        );
        let (p, se) = cauchy_product(&[ex(&[1.0, 2.0, 3.0]), ex(&[4.0, 5.0, 6.0])], 2);
        // orders <= 2 of (1 + 2x + 3x^2)(4 + 5x + 6x^2)
        assert_eq!(p, 4.0 + (5.0 + 8.0) + (6.0 + 10.0 + 12.0));
        assert_eq!(se, 0.0);
    }

    #[test]
    fn factorization_exact_cases() {
        let d = 2;
        let head = DensitySpec::Mixture {
            components: vec![
                (0.5, DensitySpec::maxwellian(d, 1.0, 1.0)),
                (
                    0.5,
                    DensitySpec::GaussianProduct {
                        beta: 1.0,
                        center: Vector::new2(0.5, 0.0),
                        spatial_sigma: 1.0,
                        drift: Vector::new2(0.3, 0.0),
                    },
                ),
            ],
        };
        let data = DensitySpec::PartialTensor {
            head: Box::new(head),
            head_count: 2,
            tail_base: Box::new(DensitySpec::maxwellian(d, 1.0, 1.0)),
        };
        let eps = 0.01;
        let ps: Vec<Particle> = (0..4)
            .map(|i| Particle::new(Vector::new2(i as f64 * 0.4, 0.1 * i as f64), Vector::new2(0.2, -0.1 * i as f64)))
            .collect();
        let probe = PhaseState::new(d, eps, ps).unwrap();
        let settings = FactorizationSettings { epsilon: eps, ell: 1.0, k_max: 2, n_mc: 2000, seed: 9 };
        let rows = check_partial_factorization(3, 4, 0.0, &[probe.clone()], &data, &settings).unwrap();
        assert!(rows[0].difference.abs() <= 1e-15 * rows[0].full.abs());
        let rows = check_partial_factorization(3, 2, 0.05, &[probe.prefix(2)], &data, &settings).unwrap();
        assert_eq!(rows[0].difference, 0.0);
    }
}
