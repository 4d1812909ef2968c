use hardsphere::badsets::{
    default_scalings, estimate_labels, per_label_display, random_good_base, scalings_with, verify_claim_i,
    verify_claim_ii, BadSetContext, Scaling, DEFAULT_C_D,
};
use hardsphere::geometry::{cylinder_cap_measure, gaussian_vector, reflect_direction_inverse, sample_sphere};
use hardsphere::mc::{chunk_rng, derive_seed, log_log_slope};
use hardsphere::{reflect_direction, HierarchyKind, Label, StabilityParams, UnitVec, Vector};
use serde_json::json;

use super::{state_from, with_keys};
use crate::config::{Params, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, Table};

pub fn lemmas(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(&cfg.params, &["d", "rho", "offset", "n_samples", "n_reflect"])?;
    let d = p.dim()?;
    let rhos: Vec<f64> = p.value("rho", (1..=8).map(|k| 0.5f64.powi(k)).collect())?;
    if rhos.len() < 2 || rhos.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::Config("rho needs at least two positive values".into()));
    }
    // line along e_0 at distance `offset` from the centre; 1 is tangent
    let offset: f64 = p.value("offset", 1.0)?;
    let n: u64 = p.value("n_samples", 200_000)?;
    let n_reflect: u64 = p.value("n_reflect", 10_000)?;
    if n == 0 {
        return Err(CliError::Config("n_samples must be positive".into()));
    }
    let dir = UnitVec::new(Vector::axis(d, 0))?;
    let point = Vector::axis(d, 1) * offset;
    let mut measures = Vec::with_capacity(rhos.len());
    for (k, &rho) in rhos.iter().enumerate() {
        measures.push(cylinder_cap_measure(point, &dir, rho, n, derive_seed(cfg.seed, k as u64))?);
    }
    let means: Vec<f64> = measures.iter().map(|m| m.measure()).collect();
    let slope = log_log_slope(&rhos, &means);
    let c_fit = means.iter().zip(&rhos).map(|(m, r)| m / r.powf((d as f64 - 1.0) / 2.0)).fold(0.0, f64::max);
    let mut table = Table::new(&["rho", "measure", "stderr", "fitted_slope", "fitted_c"]);
    for ((rho, m), mean) in rhos.iter().zip(&measures).zip(&means) {
        out.record("cylinder", &json!({ "rho": rho, "measure": mean, "stderr": m.measure_stderr() }));
        table.push([*rho, *mean, m.measure_stderr(), slope, c_fit]);
    }
    out.table("cylinder", table);

    let mut rng = chunk_rng(cfg.seed, u64::MAX);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n_reflect {
        let v = gaussian_vector(d, &mut rng);
        let w = sample_sphere(d, &mut rng);
        if w.dot(&v) <= 0.0 {
            continue;
        }
        done += 1;
        let u = reflect_direction(v, &w)?;
        worst = worst.max((reflect_direction_inverse(v, &u)?.vector() - w.vector()).norm());
    }
    out.summary("cylinder_slope", slope);
    out.summary("cylinder_fitted_c", c_fit);
    out.summary("reflect_round_trip_max_error", worst);
    Ok(p)
}

fn stability_params(p: &Params) -> CliResult<StabilityParams> {
    let eps: f64 = p.value("epsilon", 1e-3)?;
    let kappa: f64 = p.value("kappa", 0.5)?;
    let alpha: f64 = p.value("alpha", 0.2)?;
    let r = p.positive("r", 3.0)?;
    let t = p.positive("t", 1.0)?;
    let ell = p.positive("ell", 1.0)?;
    let c_d: f64 = p.value("c_d", DEFAULT_C_D)?;
    let theta_exponent: Option<f64> = p.optional("theta_exponent")?;
    let params = if c_d == DEFAULT_C_D && theta_exponent.is_none() {
        default_scalings(eps, kappa, alpha, r, t, ell)?
    } else {
        scalings_with(eps, kappa, alpha, r, t, ell, &Scaling { c_d, theta_exponent })?
    };
    Ok(params)
}

pub fn badset(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(
        &cfg.params,
        &with_keys(&[
            "mode", "kappa", "alpha", "r", "t", "ell", "c_d", "theta_exponent", "labels", "i_new", "n_samples",
            "n_total", "s", "k", "m", "bases", "taus",
        ]),
    )?;
    let mode: String = p.value("mode", "measure".to_string())?;
    let params = stability_params(&p)?;
    out.record("params", &params);
    match mode.as_str() {
        "measure" => {
            let z = state_from(&p, cfg.seed, params.epsilon)?;
            if z.epsilon() != params.epsilon {
                return Err(CliError::Config("state epsilon must match the scaling epsilon".into()));
            }
            let labels: Vec<Label> = p.value("labels", Label::ALL.to_vec())?;
            let i_new: usize = p.value("i_new", 0)?;
            let n: u64 = p.value("n_samples", 100_000)?;
            let ctx = BadSetContext::new(&z, &params)?;
            let lm = estimate_labels(&ctx, &labels, i_new, n, cfg.seed)?;
            let mut table = Table::new(&["label", "fraction", "stderr", "measure", "measure_stderr", "display"]);
            for (l, e) in &lm.per_label {
                let display = per_label_display(*l, &params, z.dim());
                out.record("labels", &json!({ "label": l, "estimate": e, "display": display }));
                table.push([l.to_string(), e.mean.to_string(), e.stderr.to_string(), e.measure().to_string(),
                    e.measure_stderr().to_string(), display.to_string()]);
            }
            out.table("labels", table);
            out.record("union", &json!({ "labels": labels, "estimate": lm.union }));
            out.summary("union_measure", lm.union.measure());
        }
        "claim_i" | "claim_ii" => {
            let d = p.dim()?;
            let n_total: usize = p.value("n_total", 1_000_000)?;
            let kind = HierarchyKind::bbgky_explicit(
                n_total,
                params.epsilon,
                d,
                1.0 / (n_total as f64 * params.epsilon.powi(d as i32 - 1)),
            )?;
            let s: usize = p.value("s", 2)?;
            let k: usize = p.value("k", 1)?;
            let m: usize = p.value("m", 3)?;
            let bases: usize = p.value("bases", 20)?;
            out.precondition("bases are BBGKY pseudo-trajectory endpoints in G and U-hat with energy <= 2 R^2");
            let mut rng = chunk_rng(cfg.seed, 0);
            if mode == "claim_i" {
                let taus: Vec<f64> = p.value("taus", vec![0.1, 1.0, 10.0])?;
                let mut good = 0;
                for b in 0..bases {
                    let base = random_good_base(&mut rng, &kind, d, s, k, m, params.eta, params.r, params.t, 100_000)?;
                    for &tau in &taus {
                        let ok = verify_claim_i(&base.z_s, &base.spec, &kind, m, params.eta, tau)?;
                        good += ok as usize;
                        out.record("claim_i", &json!({ "base": b, "tau": tau, "good": ok }));
                    }
                }
                out.summary("pass_rate", good as f64 / (bases * taus.len()).max(1) as f64);
            } else {
                let n: u64 = p.value("n_samples", 10_000)?;
                let i_new: usize = p.value("i_new", 0)?;
                let (mut outside, mut good) = (0, 0);
                for b in 0..bases {
                    let base = random_good_base(&mut rng, &kind, d, s, k, m, params.eta, params.r, params.t, 100_000)?;
                    let rep = verify_claim_ii(&base.z_s, &base.spec, &kind, m, &params, i_new, n, derive_seed(cfg.seed, b as u64))?;
                    outside += rep.n_outside_b;
                    good += rep.n_good;
                    for f in &rep.failures {
                        out.record("failures", &json!({ "base": b, "z_s": base.z_s, "spec": f }));
                    }
                    out.record("claim_ii", &json!({ "base": b, "report": rep }));
                }
                out.summary("fraction_good", good as f64 / outside.max(1) as f64);
                out.summary("n_outside_b", outside);
            }
        }
        other => return Err(CliError::Config(format!("unknown badset mode {other:?}"))),
    }
    Ok(p)
}
