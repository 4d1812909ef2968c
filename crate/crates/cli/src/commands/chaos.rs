use std::path::PathBuf;

use hardsphere::ensemble::{
    chaos_metric, default_bandwidth, epsilon_for, evolve_replicas, generate_probes, BoltzmannReference,
};
use hardsphere::{ChaosVariant, DensitySpec, GoodSetParams, PhaseState};
use serde::Deserialize;
use serde_json::json;

use crate::config::{Params, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, Table};

#[derive(Deserialize)]
struct ProbeSet {
    variant: ChaosVariant,
    probes: Vec<PhaseState>,
}

#[derive(Deserialize)]
struct ProbeFile {
    sets: Vec<ProbeSet>,
}

pub fn chaos(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(
        &cfg.params,
        &[
            "d", "n_list", "replicas", "t", "ell", "kappa", "r", "h0", "variant", "m_prime", "s", "probes_file",
            "probe_count", "reference_k_max", "reference_n_mc", "data",
        ],
    )?;
    let d = p.dim()?;
    let n_list: Vec<usize> = p.value("n_list", vec![64, 256, 1024])?;
    let replicas: usize = p.value("replicas", 30)?;
    let t: f64 = p.value("t", 0.5)?;
    let ell = p.positive("ell", 1.0)?;
    let kappa: f64 = p.value("kappa", 0.5)?;
    let r = p.positive("r", 3.0)?;
    let h0 = p.positive("h0", 1.0)?;
    let data: DensitySpec = p.value("data", DensitySpec::maxwellian(d, 1.0, 1.0))?;
    data.validate()?;
    let variant = match p.value("variant", "k".to_string())?.as_str() {
        "k" => ChaosVariant::K,
        "g" => ChaosVariant::G { m_prime: p.value("m_prime", 3)? },
        other => return Err(CliError::Config(format!("variant must be k or g, got {other:?}"))),
    };
    // the K variant is the m' = 2 analogue; by default one particle beyond the head
    let m = match variant {
        ChaosVariant::K => 2,
        ChaosVariant::G { m_prime } => m_prime,
    };
    let s: usize = p.value("s", m.max(2))?;
    if n_list.is_empty() || replicas < 2 {
        return Err(CliError::Config("need a non-empty n_list and at least 2 replicas".into()));
    }
    if replicas < 30 {
        out.precondition(format!("only {replicas} replicas; stderr reporting assumes >= 30"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CliError::Config(format!("t must be finite and >= 0, got {t}")));
    }
    let n_min = *n_list.iter().min().expect("non-empty");
    let probes = match p.optional::<PathBuf>("probes_file")? {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("probes_file {}: {e}", path.display())))?;
            let file: ProbeFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("probes_file {}: {e}", path.display())))?;
            file.sets
                .into_iter()
                .find(|set| set.variant == variant && set.probes.first().is_some_and(|z| z.len() == s))
                .map(|set| set.probes)
                .ok_or_else(|| CliError::Config(format!("probes_file has no {variant:?} set with s = {s}")))?
        }
        None => {
            let eps = epsilon_for(n_min, d, ell)?;
            let params = GoodSetParams::from_scaling(m.max(2), eps, kappa, r)?;
            generate_probes(&data, s, p.value("probe_count", 8)?, variant, &params, cfg.seed, 100_000)?
        }
    };
    out.precondition("probes filtered to the good sets at each N");
    let reference = BoltzmannReference {
        data: data.clone(),
        ell,
        t,
        k_max: p.value("reference_k_max", 2)?,
        n_mc: p.value("reference_n_mc", 100_000)?,
        seed: cfg.seed,
    };
    let mut table = Table::new(&["N", "epsilon", "m_prime", "s", "t", "metric", "stderr", "probe_count"]);
    for (i, &n) in n_list.iter().enumerate() {
        let eps = epsilon_for(n, d, ell)?;
        let params = GoodSetParams::from_scaling(m.max(2), eps, kappa, r)?;
        let states = evolve_replicas(n, eps, &data, replicas, t, hardsphere::mc::derive_seed(cfg.seed, i as u64))?;
        let res = chaos_metric(&states, variant, &probes, &params, |q| reference.eval(q), default_bandwidth(n, d, h0))?;
        out.record("chaos", &json!({ "n": n, "epsilon": eps, "variant": variant, "s": s, "t": t, "result": res }));
        table.push([n.to_string(), eps.to_string(), m.to_string(), s.to_string(), t.to_string(),
            res.metric.to_string(), res.stderr.to_string(), res.probe_count.to_string()]);
    }
    out.table("chaos", table);
    Ok(p)
}
