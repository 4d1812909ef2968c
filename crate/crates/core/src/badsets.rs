//! Exceptional extension sets for pseudo-trajectory stability: membership,
//! Monte Carlo measure, the analytic bound, and the two stability claims.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{all_events, flow, Direction, FlowOptions, Particle, PhaseState};
use crate::error::{Error, Result};
use crate::geometry::{ball_volume, sample_ball, sample_sphere, sphere_area, UnitVec, Vector};
use crate::goodsets::{in_g, in_uhat, jset_velocity_gap};
use crate::jset::{jset, DEFAULT_DEDUP_TOL};
use crate::mc::{run_chunked_with, wilson_interval, McEstimate};
use crate::pseudotraj::{build, CreationSpec, HierarchyKind, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
    #[serde(rename = "III-")]
    IIIMinus,
    #[serde(rename = "IV-")]
    IVMinus,
    #[serde(rename = "III+")]
    IIIPlus,
    #[serde(rename = "IV+")]
    IVPlus,
    #[serde(rename = "V+")]
    VPlus,
    #[serde(rename = "VI+")]
    VIPlus,
    #[serde(rename = "VII+")]
    VIIPlus,
}

impl Label {
    pub const ALL: [Label; 9] = [
        Label::I,
        Label::II,
        Label::IIIMinus,
        Label::IVMinus,
        Label::IIIPlus,
        Label::IVPlus,
        Label::VPlus,
        Label::VIPlus,
        Label::VIIPlus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::I => "I",
            Label::II => "II",
            Label::IIIMinus => "III-",
            Label::IVMinus => "IV-",
            Label::IIIPlus => "III+",
            Label::IVPlus => "IV+",
            Label::VPlus => "V+",
            Label::VIPlus => "VI+",
            Label::VIIPlus => "VII+",
        }
    }

    pub fn bit(self) -> u16 {
        1 << (self as u16)
    }

    pub fn mask(labels: &[Label]) -> u16 {
        labels.iter().fold(0, |m, l| m | l.bit())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown bad-set label {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pre,
    Post,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub epsilon: f64,
    pub kappa: f64,
    pub eta: f64,
    pub y: f64,
    pub theta: f64,
    pub alpha: f64,
    pub r: f64,
    pub t: f64,
    pub ell: f64,
    pub c_d: f64,
}

pub const DEFAULT_C_D: f64 = 1.0;

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("eta", self.eta),
            ("y", self.y),
            ("R", self.r),
            ("T", self.t),
            ("ell", self.ell),
            ("c_d", self.c_d),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.alpha > 0.0 && self.alpha < half_pi) {
            return Err(Error::InvalidParam(format!("alpha must lie in (0, pi/2), got {}", self.alpha)));
        }
        if !(self.theta > 0.0 && self.theta < half_pi) {
            return Err(Error::InvalidParam(format!("theta must lie in (0, pi/2), got {}", self.theta)));
        }
        if self.eta >= self.r {
            return Err(Error::InvalidParam(format!("eta = {} must be below R = {}", self.eta, self.r)));
        }
        if self.theta.sin() <= self.c_d * self.epsilon / self.y {
            return Err(Error::InvalidParam("sin(theta) must exceed c_d eps / y".into()));
        }
        Ok(())
    }
}

/// Scaling choices `eta = eps^kappa`, `y = eps^((1+kappa)/2)`,
/// `sin(theta) = 2 c_d eps^p` with `p = theta_exponent` (defaulting to the
/// tight `(1-kappa)/2`, for which `sin(theta) = 2 c_d eps / y`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub c_d: f64,
    pub theta_exponent: Option<f64>,
}

impl Default for Scaling {
    fn default() -> Self {
        Scaling { c_d: DEFAULT_C_D, theta_exponent: None }
    }
}

pub fn default_scalings(epsilon: f64, kappa: f64, alpha: f64, r: f64, t: f64, ell: f64) -> Result<StabilityParams> {
    scalings_with(epsilon, kappa, alpha, r, t, ell, &Scaling::default())
}

pub fn scalings_with(
    epsilon: f64,
    kappa: f64,
    alpha: f64,
    r: f64,
    t: f64,
    ell: f64,
    sc: &Scaling,
) -> Result<StabilityParams> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParam(format!("kappa must lie in (0,1), got {kappa}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParam(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let lo = (1.0 - kappa) / 4.0;
    let hi = (1.0 - kappa) / 2.0;
    let p = sc.theta_exponent.unwrap_or(hi);
    if !(p >= lo - 1e-12 && p <= hi + 1e-12) {
        return Err(Error::InvalidParam(format!("theta exponent {p} outside [{lo}, {hi}]")));
    }
    let eta = epsilon.powf(kappa);
    let y = epsilon.powf((1.0 + kappa) / 2.0);
    let sin_theta = 2.0 * sc.c_d * epsilon.powf(p);
    if !(sin_theta < 1.0) {
        return Err(Error::InvalidParam(format!("sin(theta) = {sin_theta} >= 1: epsilon too large for kappa and c_d")));
    }
    let params = StabilityParams { epsilon, kappa, eta, y, theta: sin_theta.asin(), alpha, r, t, ell, c_d: sc.c_d };
    params.validate()?;
    Ok(params)
}

/// Analytic union bound. `c` multiplies everything; `c_alpha` the
/// velocity and angle terms on the post-collisional side.
pub fn analytic_bound(params: &StabilityParams, d: usize, side: Side, c: f64, c_alpha: f64) -> f64 {
    let p = params;
    let df = d as f64;
    let common = p.alpha + p.y / (p.eta * p.t);
    let bracket = match side {
        Side::Post => common + c_alpha * (p.eta / p.r).powf(df - 1.0) + c_alpha * p.theta.powf((df - 1.0) / 2.0),
        Side::Pre => common + (p.eta / p.r).powf(df) + p.theta.powf(df - 1.0),
    };
    c * p.t * p.r.powf(df) * bracket
}

/// Parameter dependence of the per-set estimates, without constants.
pub fn per_label_display(label: Label, params: &StabilityParams, d: usize) -> f64 {
    let p = params;
    let df = d as f64;
    let rd = p.r.powf(df);
    match label {
        Label::I => rd * p.y / p.eta,
        Label::II => p.t * rd * p.alpha,
        Label::IIIMinus | Label::VPlus => p.t * p.eta.powf(df),
        Label::IVMinus => p.t * rd * p.theta.powf(df - 1.0),
        Label::IIIPlus | Label::IVPlus => p.t * p.r * p.eta.powf(df - 1.0),
        Label::VIPlus | Label::VIIPlus => p.t * rd * p.theta.powf((df - 1.0) / 2.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionSample {
    pub tau: f64,
    pub v_new: Vector,
    pub omega_new: UnitVec,
    pub i_new: usize,
}

/// Precomputed backward history of a base point.
///
/// `J(psi^{-tau} Z')` equals the free backward shift by `tau` of the jset
/// points whose first backward segment starts at or after the segment
/// containing `tau`; the tables store those unions per segment.
#[derive(Clone, Debug)]
pub struct BadSetContext {
    base: PhaseState,
    params: StabilityParams,
    bounds: Vec<f64>,
    states: Vec<PhaseState>,
    tails: Vec<Vec<Particle>>,
    pairs_i: Vec<(Vector, Vector)>,
    cos_theta: f64,
    sin_alpha: f64,
}

impl BadSetContext {
    pub fn new(base: &PhaseState, params: &StabilityParams) -> Result<Self> {
        params.validate()?;
        if base.is_empty() {
            return Err(Error::Precondition("base configuration is empty".into()));
        }
        let log = all_events(base, Direction::Backward, &FlowOptions::default())?;
        let mut bounds = vec![0.0];
        bounds.extend(log.events.iter().map(|e| e.time));
        let mut states = Vec::with_capacity(bounds.len());
        let mut per_segment = Vec::with_capacity(bounds.len());
        for &tau in &bounds {
            let (st, _) = flow(base, tau, Direction::Backward)?;
            let mut pts = Vec::new();
            if st.len() == 1 {
                pts.push(*st.particle(0));
            } else {
                for k in 0..st.len() {
                    let sub = crate::jset::delete(&st, k)?;
                    for p in jset(&sub)?.iter() {
                        pts.push(Particle::new(p.x + p.v * tau, p.v));
                    }
                }
            }
            states.push(st);
            per_segment.push(pts);
        }
        let mut tails: Vec<Vec<Particle>> = vec![Vec::new(); bounds.len()];
        let mut acc: Vec<Particle> = Vec::new();
        for r in (0..bounds.len()).rev() {
            for p in &per_segment[r] {
                if !acc.iter().any(|q| q.phase_distance(p) <= DEFAULT_DEDUP_TOL) {
                    acc.push(*p);
                }
            }
            tails[r] = acc.clone();
        }
        let j0 = &tails[0];
        let mut pairs_i = Vec::new();
        for a in 0..j0.len() {
            for b in (a + 1)..j0.len() {
                pairs_i.push((j0[a].x - j0[b].x, j0[a].v - j0[b].v));
            }
        }
        Ok(BadSetContext {
            base: base.clone(),
            params: *params,
            bounds,
            states,
            tails,
            pairs_i,
            cos_theta: params.theta.cos(),
            sin_alpha: params.alpha.sin(),
        })
    }

    pub fn base(&self) -> &PhaseState {
        &self.base
    }

    pub fn params(&self) -> &StabilityParams {
        &self.params
    }

    /// The jset of the base point itself.
    pub fn base_jset_points(&self) -> &[Particle] {
        &self.tails[0]
    }

    fn segment(&self, tau: f64) -> usize {
        self.bounds.partition_point(|&b| b <= tau).saturating_sub(1)
    }

    /// `psi^{-tau}` of the base point.
    pub fn state_at(&self, tau: f64) -> PhaseState {
        let r = self.segment(tau);
        self.states[r].free_stream(-(tau - self.bounds[r]))
    }

    /// Jset points of `psi^{-tau}` of the base point.
    pub fn jset_at(&self, tau: f64) -> Vec<Particle> {
        self.tails[self.segment(tau)].iter().map(|p| Particle::new(p.x - p.v * tau, p.v)).collect()
    }

    /// Bitmask over [`Label`] of the sets containing the sample.
    pub fn classify(&self, s: &ExtensionSample) -> Result<u16> {
        let n = self.base.len();
        if s.i_new >= n {
            return Err(Error::IndexOutOfRange { index: s.i_new, len: n });
        }
        let p = &self.params;
        let tau = s.tau;
        let mut mask = 0u16;
        if self.pairs_i.iter().any(|(dx, dv)| (*dx - *dv * tau).norm() <= p.y) {
            mask |= Label::I.bit();
        }
        let r = self.segment(tau);
        let back = tau - self.bounds[r];
        let par = self.states[r].particle(s.i_new);
        let xi = par.x - par.v * back;
        let vi = par.v;
        let w = s.omega_new.vector();
        let dv = s.v_new - vi;
        let c = w.dot(&dv);
        if c.abs() <= self.sin_alpha * dv.norm() {
            mask |= Label::II.bit();
        }
        if mask != 0 {
            return Ok(mask);
        }
        let pts = &self.tails[r];
        let x_new = xi + w * p.epsilon;
        let cone = |apex: Vector, x0: Vector, vel: Vector| -> bool {
            let a = apex - x0;
            let na = a.norm();
            let nb = vel.norm();
            na > 0.0 && nb > 0.0 && a.dot(&vel) >= self.cos_theta * na * nb
        };
        if c <= 0.0 {
            for q in pts {
                let x0 = q.x - q.v * tau;
                if (q.v - s.v_new).norm() <= p.eta {
                    mask |= Label::IIIMinus.bit();
                }
                if cone(x_new, x0, s.v_new - q.v) {
                    mask |= Label::IVMinus.bit();
                }
            }
        } else {
            let v_star = s.v_new - w * c;
            let vi_star = vi + w * c;
            if dv.norm() <= p.eta {
                mask |= Label::VPlus.bit();
            }
            let me = Particle::new(xi, vi);
            for q in pts {
                let q0 = Particle::new(q.x - q.v * tau, q.v);
                if (q0.v - v_star).norm() <= p.eta {
                    mask |= Label::IIIPlus.bit();
                }
                if (q0.v - vi_star).norm() <= p.eta {
                    mask |= Label::IVPlus.bit();
                }
                if q0.phase_distance(&me) <= DEFAULT_DEDUP_TOL {
                    continue;
                }
                if cone(x_new, q0.x, v_star - q0.v) {
                    mask |= Label::VIPlus.bit();
                }
                if cone(xi, q0.x, vi_star - q0.v) {
                    mask |= Label::VIIPlus.bit();
                }
            }
        }
        Ok(mask)
    }

    pub fn in_bad(&self, label: Label, s: &ExtensionSample) -> Result<bool> {
        Ok(self.classify(s)? & label.bit() != 0)
    }

    /// Measure of the sampling box `[0,T] x B_{2R} x S^{d-1}`.
    pub fn box_volume(&self) -> f64 {
        let d = self.base.dim();
        self.params.t * ball_volume(d, 2.0 * self.params.r) * sphere_area(d)
    }

    pub fn sample<R: Rng + ?Sized>(&self, i_new: usize, rng: &mut R) -> ExtensionSample {
        let d = self.base.dim();
        ExtensionSample {
            tau: self.params.t * rng.random::<f64>(),
            v_new: sample_ball(d, 2.0 * self.params.r, rng),
            omega_new: sample_sphere(d, rng),
            i_new,
        }
    }
}

/// In-bad membership for a single sample; see [`BadSetContext::classify`].
pub fn in_bad(label: Label, base: &PhaseState, sample: &ExtensionSample, params: &StabilityParams) -> Result<bool> {
    BadSetContext::new(base, params)?.in_bad(label, sample)
}

/// Per-label and union measures from one shared sample stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMeasures {
    pub per_label: Vec<(Label, McEstimate)>,
    pub union: McEstimate,
}

impl LabelMeasures {
    pub fn get(&self, label: Label) -> &McEstimate {
        &self.per_label.iter().find(|(l, _)| *l == label).expect("all labels present").1
    }
}

fn binomial(count: u64, n: u64, volume: f64) -> McEstimate {
    let p = count as f64 / n as f64;
    let stderr = if n > 1 { (p * (1.0 - p) / (n - 1) as f64).sqrt() } else { 0.0 };
    McEstimate { mean: p, stderr, n, volume }
}

/// Measures of every label and of the union of `union_of`.
pub fn estimate_labels(
    ctx: &BadSetContext,
    union_of: &[Label],
    i_new: usize,
    n_samples: u64,
    seed: u64,
) -> Result<LabelMeasures> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("n_samples must be positive".into()));
    }
    if i_new >= ctx.base.len() {
        return Err(Error::IndexOutOfRange { index: i_new, len: ctx.base.len() });
    }
    let want = Label::mask(union_of);
    let counts = run_chunked_with(
        n_samples,
        seed,
        || [0u64; 10],
        |a, b| {
            for i in 0..10 {
                a[i] += b[i];
            }
        },
        |rng, count, acc| {
            for _ in 0..count {
                let s = ctx.sample(i_new, rng);
                let m = ctx.classify(&s).expect("index checked");
                for (k, l) in Label::ALL.iter().enumerate() {
                    if m & l.bit() != 0 {
                        acc[k] += 1;
                    }
                }
                if m & want != 0 {
                    acc[9] += 1;
                }
            }
        },
    );
    let vol = ctx.box_volume();
    Ok(LabelMeasures {
        per_label: Label::ALL.iter().enumerate().map(|(k, l)| (*l, binomial(counts[k], n_samples, vol))).collect(),
        union: binomial(counts[9], n_samples, vol),
    })
}

/// Measure of the union of `labels`; the empty set gives exactly 0.
pub fn estimate_measure(
    labels: &[Label],
    base: &PhaseState,
    params: &StabilityParams,
    i_new: usize,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    let ctx = BadSetContext::new(base, params)?;
    if labels.is_empty() {
        return Ok(McEstimate::zero(ctx.box_volume()));
    }
    Ok(estimate_labels(&ctx, labels, i_new, n_samples, seed)?.union)
}

fn require_bbgky(kind: &HierarchyKind) -> Result<()> {
    match kind.variant {
        Variant::Bbgky { .. } => Ok(()),
        _ => Err(Error::InvalidParam("stability claims concern the hard-sphere (BBGKY) flow".into())),
    }
}

/// `G_{n|m}` and `U-hat^eta` membership of a configuration.
pub fn in_good(state: &PhaseState, m: usize, eta: f64) -> Result<bool> {
    Ok(in_g(state, m)? && in_uhat(state, eta)?)
}

/// Claim (i): shifting the final and creation times by `tau` keeps the
/// endpoint in the good sets. Returns the membership of the shifted endpoint.
pub fn verify_claim_i(
    z_s: &PhaseState,
    spec: &CreationSpec,
    kind: &HierarchyKind,
    m: usize,
    eta: f64,
    tau: f64,
) -> Result<bool> {
    require_bbgky(kind)?;
    let base = build(z_s, spec, kind)?.final_state;
    if !in_good(&base, m, eta)? {
        return Err(Error::Precondition("base endpoint is not in G and U-hat".into()));
    }
    let shifted = build(z_s, &spec.shifted(tau), kind)?.final_state;
    in_good(&shifted, m, eta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimIIReport {
    pub fraction_good: f64,
    pub n_outside_b: u64,
    pub n_good: u64,
    pub n_samples: u64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Extended creation specs whose endpoint left the good sets.
    pub failures: Vec<CreationSpec>,
}

pub const MAX_DUMPED_FAILURES: usize = 100;

/// Claim (ii): samples outside the bad-set union extend to good endpoints.
#[allow(clippy::too_many_arguments)]
pub fn verify_claim_ii(
    z_s: &PhaseState,
    spec: &CreationSpec,
    kind: &HierarchyKind,
    m: usize,
    params: &StabilityParams,
    i_new: usize,
    n_samples: u64,
    seed: u64,
) -> Result<ClaimIIReport> {
    require_bbgky(kind)?;
    let base = build(z_s, spec, kind)?.final_state;
    if i_new >= base.len() {
        return Err(Error::IndexOutOfRange { index: i_new, len: base.len() });
    }
    if !(params.eta < params.r) || base.energy() > 2.0 * params.r * params.r {
        return Err(Error::Precondition("need eta < R and E <= 2R^2".into()));
    }
    if !in_good(&base, m, params.eta)? {
        return Err(Error::Precondition("base endpoint is not in G and U-hat".into()));
    }
    let ctx = BadSetContext::new(&base, params)?;
    let all = Label::mask(&Label::ALL);
    #[derive(Default)]
    struct Acc {
        outside: u64,
        good: u64,
        failures: Vec<CreationSpec>,
    }
    let acc = run_chunked_with(
        n_samples,
        seed,
        Acc::default,
        |a, b| {
            a.outside += b.outside;
            a.good += b.good;
            for f in b.failures.iter().cloned() {
                if a.failures.len() < MAX_DUMPED_FAILURES {
                    a.failures.push(f);
                }
            }
        },
        |rng, count, acc| {
            for _ in 0..count {
                let smp = ctx.sample(i_new, rng);
                if ctx.classify(&smp).expect("index checked") & all != 0 {
                    continue;
                }
                acc.outside += 1;
                let mut ext = spec.shifted(smp.tau);
                ext.push(0.0, smp.v_new, smp.omega_new, i_new);
                let ok = match build(z_s, &ext, kind) {
                    Ok(pt) => in_good(&pt.final_state, m, params.eta).unwrap_or(false),
                    Err(_) => false,
                };
                if ok {
                    acc.good += 1;
                } else if acc.failures.len() < MAX_DUMPED_FAILURES {
                    acc.failures.push(ext);
                }
            }
        },
    );
    if acc.outside == 0 {
        return Err(Error::AllSamplesBad);
    }
    let (lo, hi) = wilson_interval(acc.good, acc.outside, 1.96);
    Ok(ClaimIIReport {
        fraction_good: acc.good as f64 / acc.outside as f64,
        n_outside_b: acc.outside,
        n_good: acc.good,
        n_samples,
        wilson_lo: lo,
        wilson_hi: hi,
        failures: acc.failures,
    })
}

/// A random pseudo-trajectory endpoint in the good sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodBase {
    pub z_s: PhaseState,
    pub spec: CreationSpec,
    pub endpoint: PhaseState,
}

/// Draws `s`-particle states and `k` creations until the BBGKY endpoint lies
/// in `G_{(s+k)|m}` and `U-hat^eta` with energy at most `2 R^2`.
#[allow(clippy::too_many_arguments)]
pub fn random_good_base<R: Rng + ?Sized>(
    rng: &mut R,
    kind: &HierarchyKind,
    d: usize,
    s: usize,
    k: usize,
    m: usize,
    eta: f64,
    r: f64,
    t: f64,
    max_tries: usize,
) -> Result<GoodBase> {
    require_bbgky(kind)?;
    let eps = kind.epsilon();
    let vscale = r / ((s + k) as f64).sqrt();
    for _ in 0..max_tries {
        let particles: Vec<Particle> = (0..s)
            .map(|_| {
                Particle::new(
                    sample_ball(d, 1.0, rng) * 2.0,
                    crate::geometry::gaussian_vector(d, rng) * (0.7 * vscale),
                )
            })
            .collect();
        let Ok(z_s) = PhaseState::new(d, eps, particles) else { continue };
        let mut times: Vec<f64> = (0..k).map(|_| t * rng.random::<f64>()).collect();
        times.sort_by(|a, b| b.total_cmp(a));
        let mut spec = CreationSpec::empty(t);
        for (j, tj) in times.into_iter().enumerate() {
            let parent = rng.random_range(0..s + j);
            spec.push(tj, crate::geometry::gaussian_vector(d, rng) * (0.7 * vscale), sample_sphere(d, rng), parent);
        }
        let Ok(pt) = build(&z_s, &spec, kind) else { continue };
        let end = pt.final_state;
        if end.energy() > 2.0 * r * r {
            continue;
        }
        if matches!(in_good(&end, m, eta), Ok(true)) {
            return Ok(GoodBase { z_s, spec, endpoint: end });
        }
    }
    Err(Error::Precondition(format!("no good base found in {max_tries} tries")))
}

/// Minimum jset velocity gap of a configuration (diagnostic).
pub fn velocity_gap(state: &PhaseState) -> Result<f64> {
    Ok(jset_velocity_gap(&jset(state)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p2(x: [f64; 2], v: [f64; 2]) -> Particle {
        Particle::new(Vector::new2(x[0], x[1]), Vector::new2(v[0], v[1]))
    }

    fn params(eps: f64) -> StabilityParams {
        default_scalings(eps, 0.5, 0.1, 2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn scaling_examples() {
        let p = default_scalings(1e-4, 0.5, 0.1, 2.0, 1.0, 1.0).unwrap();
        assert!((p.eta - 0.01).abs() < 1e-15);
        assert!((p.y - 1e-3).abs() < 1e-15);
        let sc = Scaling { c_d: 10.0, theta_exponent: None };
        assert!(scalings_with(0.3, 0.9, 0.1, 2.0, 1.0, 1.0, &sc).is_err());
        let mut prev = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
            let p = params(eps);
            assert!(p.eta < prev.0 && p.y < prev.1 && p.theta < prev.2);
            prev = (p.eta, p.y, p.theta);
        }
        let loose = Scaling { c_d: 1.0, theta_exponent: Some(0.125) };
        let p = scalings_with(1e-4, 0.5, 0.1, 2.0, 1.0, 1.0, &loose).unwrap();
        assert!((p.theta.sin() - 2.0 * 1e-4f64.powf(0.125)).abs() < 1e-12);
        let bad = Scaling { c_d: 1.0, theta_exponent: Some(0.5) };
        assert!(scalings_with(1e-4, 0.5, 0.1, 2.0, 1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn label_names_round_trip() {
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{}\"", l.as_str()));
        }
        assert!("VIII+".parse::<Label>().is_err());
    }

    #[test]
    fn grazing_sample_is_in_ii() {
        let base = PhaseState::new(2, 1e-3, vec![p2([0.0, 0.0], [0.0, 0.0])]).unwrap();
        let ctx = BadSetContext::new(&base, &params(1e-3)).unwrap();
        let s = ExtensionSample {
            tau: 0.3,
            v_new: Vector::new2(1.0, 0.0),
            omega_new: UnitVec::new(Vector::new2(0.0, 1.0)).unwrap(),
            i_new: 0,
        };
        assert!(ctx.in_bad(Label::II, &s).unwrap());
    }

    #[test]
    fn slow_post_collision_is_in_v() {
        let p = params(1e-3);
        let base = PhaseState::new(2, 1e-3, vec![p2([0.0, 0.0], [0.0, 0.0])]).unwrap();
        let ctx = BadSetContext::new(&base, &p).unwrap();
        let s = ExtensionSample {
            tau: 0.3,
            v_new: Vector::new2(p.eta / 2.0, 0.0),
            omega_new: UnitVec::new(Vector::new2(1.0, 0.0)).unwrap(),
            i_new: 0,
        };
        let m = ctx.classify(&s).unwrap();
        assert!(m & Label::VPlus.bit() != 0);
        assert!(m & Label::II.bit() == 0);
    }

    #[test]
    fn aimed_pre_collision_is_in_iv_minus() {
        let eps = 1e-3;
        let p = params(eps);
        // receding pair in backward time
        let base = PhaseState::new(2, eps, vec![p2([0.0, 0.0], [1.0, 0.0]), p2([0.0, 3.0], [-1.0, 0.0])]).unwrap();
        let ctx = BadSetContext::new(&base, &p).unwrap();
        let tau = 0.5;
        let z = ctx.state_at(tau);
        let x1 = z.particle(1).x;
        let v1 = z.particle(1).v;
        let w = UnitVec::new(Vector::new2(1.0, 0.0)).unwrap();
        let apex = z.particle(0).x + w.vector() * eps;
        // v_new - v1 parallel to apex - x1
        let dir = (apex - x1) / (apex - x1).norm();
        let v_new = v1 + dir * 1.0;
        let s = ExtensionSample { tau, v_new, omega_new: w, i_new: 0 };
        let c = w.dot(&(v_new - z.particle(0).v));
        assert!(c <= 0.0, "pre-collisional by construction, c = {c}");
        let cosv = (apex - x1).cos_angle(&(v_new - v1)).unwrap();
        assert!(cosv >= p.theta.cos());
        assert!(ctx.in_bad(Label::IVMinus, &s).unwrap());
    }

    #[test]
    fn context_jset_matches_direct_enumeration() {
        let eps = 0.3;
        let p = StabilityParams { epsilon: eps, c_d: 1e-4, ..params(1e-3) };
        // head-on pair in backward time plus a bystander
        let base = PhaseState::new(
            2,
            eps,
            vec![p2([-1.0, 0.0], [-1.0, 0.0]), p2([2.0, 0.1], [1.0, 0.0]), p2([0.0, 3.0], [0.2, 0.5])],
        )
        .unwrap();
        let ctx = BadSetContext::new(&base, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let tau = 4.0 * rng.random::<f64>();
            let direct = jset(&flow(&base, tau, Direction::Backward).unwrap().0).unwrap();
            let fast = ctx.jset_at(tau);
            assert_eq!(direct.len(), fast.len(), "tau = {tau}");
            for q in &fast {
                assert!(direct.contains(q));
            }
            let st = ctx.state_at(tau);
            let (ref_state, _) = flow(&base, tau, Direction::Backward).unwrap();
            for (a, b) in st.particles().iter().zip(ref_state.particles()) {
                assert!(a.phase_distance(b) < 1e-9);
            }
        }
    }

    #[test]
    fn empty_label_set_is_zero() {
        let base = PhaseState::new(2, 1e-3, vec![p2([0.0, 0.0], [0.0, 0.0])]).unwrap();
        let e = estimate_measure(&[], &base, &params(1e-3), 0, 1000, 1).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn grazing_band_measure_matches_quadrature() {
        // static single particle: omega-marginal of B_II is the band |cos| <= sin(alpha)
        let p = params(1e-3);
        let base = PhaseState::new(2, 1e-3, vec![p2([0.0, 0.0], [0.0, 0.0])]).unwrap();
        let e = estimate_measure(&[Label::II], &base, &p, 0, 200_000, 7).unwrap();
        let expected = 4.0 * p.alpha / (2.0 * std::f64::consts::PI);
        assert!((e.mean - expected).abs() < 3.0 * e.stderr + 1e-12, "{} vs {}", e.mean, expected);
    }

    #[test]
    fn bound_properties() {
        let mut p = params(1e-3);
        assert!(analytic_bound(&p, 2, Side::Post, 1.0, 1.0) > 0.0);
        let tiny = StabilityParams { alpha: 1e-12, y: 1e-40, eta: 1e-20, theta: 1e-30, ..p };
        assert!(analytic_bound(&tiny, 2, Side::Post, 1.0, 1.0) < 1e-10);
        // y-term: T * y/(eta T) is T-independent
        let y_only = |t: f64| {
            let q = StabilityParams { t, ..p };
            q.t * q.r.powi(2) * (q.y / (q.eta * q.t))
        };
        assert!((y_only(1.0) - y_only(2.0)).abs() < 1e-15);
        p.t = 2.0;
        assert!(analytic_bound(&p, 2, Side::Pre, 1.0, 1.0).is_finite());
    }

    #[test]
    fn claim_i_on_free_base() {
        let eps = 1e-3;
        let kind = HierarchyKind::bbgky(1000, 2, 1.0).unwrap();
        let z_s = PhaseState::new(2, eps, vec![p2([0.0, 0.0], [1.0, 0.0]), p2([0.0, 3.0], [-1.0, 0.0])]).unwrap();
        let spec = CreationSpec::empty(0.5);
        for tau in [0.0, 1.0, 10.0] {
            assert!(verify_claim_i(&z_s, &spec, &kind, 2, 0.03, tau).unwrap());
        }
    }

    #[test]
    fn claim_ii_refuses_bad_base() {
        let eps = 1e-3;
        let kind = HierarchyKind::bbgky(1000, 2, 1.0).unwrap();
        let z_s = PhaseState::new(2, eps, vec![p2([0.0, 0.0], [1.0, 0.0]), p2([0.0, 3.0], [0.9, 0.0])]).unwrap();
        let p = StabilityParams { eta: 0.5, ..params(eps) };
        let r = verify_claim_ii(&z_s, &CreationSpec::empty(0.1), &kind, 2, &p, 0, 1000, 1);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn random_bases_are_good() {
        let kind = HierarchyKind::bbgky(1000, 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = params(1e-3);
        for _ in 0..5 {
            let b = random_good_base(&mut rng, &kind, 2, 2, 1, 3, p.eta, p.r, 1.0, 1000).unwrap();
            assert!(in_good(&b.endpoint, 3, p.eta).unwrap());
            assert_eq!(b.endpoint.len(), 3);
        }
    }
}
