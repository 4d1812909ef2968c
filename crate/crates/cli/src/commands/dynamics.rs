use hardsphere::dynamics::DEFAULT_COLLISION_CAP;
use hardsphere::goodsets::{in_g, in_k, in_u, in_uhat, within_energy};
use hardsphere::jset::{jset_with, JsetOptions};
use hardsphere::{flow_with, Direction, FlowOptions, Interaction};
use serde_json::json;

use super::{state_from, with_keys};
use crate::config::{Params, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, Table};

const CONSERVATION_TOL: f64 = 1e-8;

pub fn flow(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(&cfg.params, &with_keys(&["t", "direction", "cap"]))?;
    let z = state_from(&p, cfg.seed, 0.1)?;
    let t: f64 = p.value("t", 2.0)?;
    let dir: Direction = p.value("direction", Direction::Forward)?;
    let cap: usize = p.value("cap", DEFAULT_COLLISION_CAP)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CliError::Config(format!("t must be finite and >= 0, got {t}")));
    }
    out.precondition("initial state has pairwise separation > epsilon");
    let opts = FlowOptions { interaction: Interaction::All, cap };
    let (end, log) = flow_with(&z, t, dir, &opts)?;
    let d = z.dim();
    let mut header = vec!["time".to_string(), "i".into(), "j".into()];
    header.extend((0..d).map(|k| format!("omega_{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    for e in &log.events {
        out.record("events", e);
        let mut row = vec![e.time.to_string(), e.pair.0.to_string(), e.pair.1.to_string()];
        row.extend(e.omega.as_slice().iter().map(|c| c.to_string()));
        table.push(row);
    }
    out.table("events", table);
    out.record("final", &json!({ "state": end }));
    let e0 = z.energy();
    let drift = if e0 > 0.0 { (end.energy() - e0).abs() / e0 } else { (end.energy() - e0).abs() };
    let p0 = z.momentum();
    let mom = (end.momentum() - p0).norm() / z.particles().iter().map(|q| q.v.norm()).sum::<f64>().max(1.0);
    out.summary("collisions", log.collision_count());
    out.summary("energy_drift", drift);
    out.summary("momentum_drift", mom);
    if drift > CONSERVATION_TOL || mom > CONSERVATION_TOL {
        return Err(CliError::Numeric(format!("conservation breached: energy {drift:.3e}, momentum {mom:.3e}")));
    }
    Ok(p)
}

pub fn jset(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(&cfg.params, &with_keys(&["dedup_tol", "cap"]))?;
    let z = state_from(&p, cfg.seed, 0.1)?;
    let defaults = JsetOptions::default();
    let opts = JsetOptions {
        dedup_tol: p.value("dedup_tol", defaults.dedup_tol)?,
        cap: p.value("cap", defaults.cap)?,
        ..defaults
    };
    let j = jset_with(&z, &opts)?;
    let d = z.dim();
    let mut header: Vec<String> = (0..d).map(|k| format!("x_{k}")).collect();
    header.extend((0..d).map(|k| format!("v_{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    for q in j.iter() {
        out.record("points", q);
        table.push(q.x.as_slice().iter().chain(q.v.as_slice()).map(|c| c.to_string()));
    }
    out.table("points", table);
    out.summary("points", j.len());
    Ok(p)
}

pub fn goodset(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    let p = Params::new(&cfg.params, &with_keys(&["m", "kappa", "eta", "r"]))?;
    let z = state_from(&p, cfg.seed, 0.1)?;
    let m: usize = p.value("m", 2)?;
    if m < 1 || m > z.len() + 1 {
        return Err(CliError::Config(format!("m must lie in 1..={}, got {m}", z.len() + 1)));
    }
    let eta: f64 = match p.optional::<f64>("eta")? {
        Some(e) => e,
        None => z.epsilon().powf(p.value("kappa", 0.5)?),
    };
    let r = p.positive("r", 3.0)?;
    let rec = json!({
        "s": z.len(),
        "m": m,
        "eta": eta,
        "in_g": in_g(&z, m)?,
        "in_uhat": in_uhat(&z, eta)?,
        "in_k": in_k(&z),
        "in_u": in_u(&z, eta),
        "within_energy": within_energy(&z, r),
    });
    out.record("membership", &rec);
    out.summary("membership", rec);
    Ok(p)
}
