use hardsphere::hierarchy::{
    check_partial_factorization, eval_series, lanford_time_proxy, FactorizationSettings, MAX_ORDER,
};
use hardsphere::mc::chunk_rng;
use hardsphere::{DensitySpec, HierarchyKind, Particle, PhaseState, SeriesQuery, Vector};
use serde_json::json;

use super::{state_from, with_keys};
use crate::config::{Params, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, Table};

fn data_from(p: &Params, d: usize) -> CliResult<DensitySpec> {
    let data: DensitySpec = p.value("data", DensitySpec::maxwellian(d, 1.0, 1.0))?;
    data.validate()?;
    if data.dim() != Some(d) {
        return Err(CliError::Config(format!("data dimension does not match d = {d}")));
    }
    Ok(data)
}

/// Either `t` directly or `t_fraction` of the Lanford-time proxy; times past
/// the proxy are refused unless explicitly allowed.
fn time_from(p: &Params, proxy: f64, default_fraction: f64, out: &mut Artifacts) -> CliResult<f64> {
    let t = match p.optional::<f64>("t")? {
        Some(t) => t,
        None => p.value("t_fraction", default_fraction)? * proxy,
    };
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CliError::Config(format!("t must be finite and >= 0, got {t}")));
    }
    let allow: bool = p.value("allow_beyond_proxy", false)?;
    out.precondition(format!("t = {t} below the Lanford-time proxy {proxy}"));
    if t >= proxy && !allow {
        return Err(CliError::Precondition(format!("t = {t} is not below the Lanford-time proxy {proxy}")));
    }
    Ok(t)
}

pub fn series(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(
        &cfg.params,
        &with_keys(&["kind", "ell", "m", "n_total", "data", "t", "t_fraction", "allow_beyond_proxy", "k_max", "n_mc", "proposal_beta"]),
    )?;
    let d = p.dim()?;
    let ell = p.positive("ell", 1.0)?;
    let kind_name: String = p.value("kind", "boltzmann".to_string())?;
    let kind = match kind_name.as_str() {
        "boltzmann" => HierarchyKind::boltzmann(ell)?,
        "enskog" => HierarchyKind::enskog(p.value("epsilon", 0.01)?, p.value("m", 2)?, ell)?,
        "bbgky" => HierarchyKind::bbgky(p.value("n_total", 1000)?, d, ell)?,
        other => return Err(CliError::Config(format!("unknown hierarchy kind {other:?}"))),
    };
    let data = data_from(&p, d)?;
    let z = if p.optional::<serde_json::Value>("particles")?.is_some() {
        state_from(&p, cfg.seed, kind.epsilon())?
    } else {
        PhaseState::new(d, kind.epsilon(), vec![Particle::new(Vector::zeros(d), Vector::axis(d, 0) * 0.5)])?
    };
    let z = z.with_epsilon(kind.epsilon());
    let proxy = lanford_time_proxy(d, ell, &data)?;
    let t = time_from(&p, proxy, 0.5, out)?;
    let k_max: usize = p.value("k_max", 2)?;
    if k_max > MAX_ORDER {
        return Err(CliError::Config(format!("k_max must be <= {MAX_ORDER}")));
    }
    let q = SeriesQuery {
        kind,
        z_s: z,
        t,
        k_max,
        n_mc: p.value("n_mc", 100_000)?,
        seed: cfg.seed,
        proposal_beta: p.optional("proposal_beta")?,
    };
    let e = eval_series(&q, &data)?;
    let mut table = Table::new(&["k", "mean", "stderr", "abs_mean"]);
    for (k, (s, a)) in e.per_order.iter().zip(&e.abs_per_order).enumerate() {
        out.record("orders", &json!({ "k": k, "estimate": s, "abs": a }));
        table.push([k.to_string(), s.mean.to_string(), s.stderr.to_string(), a.mean.to_string()]);
    }
    out.table("orders", table);
    out.summary("total", e.total);
    out.summary("total_stderr", e.total_stderr);
    out.summary("lanford_proxy", proxy);
    Ok(p)
}

fn default_partial_data(d: usize) -> DensitySpec {
    let center = Vector::axis(d, 0) * 0.4;
    let drift = Vector::axis(d, 0) * 0.5;
    let head = DensitySpec::Mixture {
        components: vec![
            (0.6, DensitySpec::maxwellian(d, 1.0, 1.0)),
            (0.4, DensitySpec::GaussianProduct { beta: 1.5, center, spatial_sigma: 0.8, drift }),
        ],
    };
    DensitySpec::PartialTensor { head: Box::new(head), head_count: 2, tail_base: Box::new(DensitySpec::maxwellian(d, 1.0, 1.0)) }
}

pub fn factorization(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(
        &cfg.params,
        &["d", "m", "s", "epsilon", "ell", "k_max", "n_mc", "t", "t_fraction", "allow_beyond_proxy", "probes", "data"],
    )?;
    let d = p.dim()?;
    let m: usize = p.value("m", 3)?;
    let s: usize = p.value("s", 4)?;
    let data: DensitySpec = p.value("data", default_partial_data(d))?;
    data.validate()?;
    let settings = FactorizationSettings {
        epsilon: p.positive("epsilon", 0.01)?,
        ell: p.positive("ell", 1.0)?,
        k_max: p.value("k_max", 2)?,
        n_mc: p.value("n_mc", 100_000)?,
        seed: cfg.seed,
    };
    let proxy = lanford_time_proxy(d, settings.ell, &data)?;
    let t = time_from(&p, proxy, 0.25, out)?;
    let n_probes: usize = p.value("probes", 8)?;
    let mut rng = chunk_rng(cfg.seed, u64::MAX);
    let mut probes = Vec::with_capacity(n_probes);
    let mut tries = 0;
    while probes.len() < n_probes {
        tries += 1;
        if tries > 100_000 {
            return Err(CliError::Precondition("could not draw overlap-free probes".into()));
        }
        let ps: Vec<Particle> = (0..s)
            .map(|_| {
                Particle::new(
                    hardsphere::geometry::gaussian_vector(d, &mut rng),
                    hardsphere::geometry::gaussian_vector(d, &mut rng),
                )
            })
            .collect();
        if let Ok(z) = PhaseState::new(d, settings.epsilon, ps) {
            probes.push(z);
        }
    }
    let rows = check_partial_factorization(m, s, t, &probes, &data, &settings)?;
    let mut table = Table::new(&["probe", "full", "full_stderr", "product", "product_stderr", "difference", "combined_stderr"]);
    for (i, r) in rows.iter().enumerate() {
        out.record("probes", r);
        table.push([i as f64, r.full, r.full_stderr, r.product, r.product_stderr, r.difference, r.combined_stderr]);
    }
    out.table("factorization", table);
    let worst = rows.iter().map(|r| if r.combined_stderr > 0.0 { r.difference.abs() / r.combined_stderr } else { 0.0 }).fold(0.0, f64::max);
    out.summary("max_sigma", worst);
    out.summary("t", t);
    Ok(p)
}
