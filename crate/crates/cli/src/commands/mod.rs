mod chaos;
mod dynamics;
mod geometry;
mod series;

use hardsphere::mc::chunk_rng;
use hardsphere::{Particle, PhaseState, Vector};
use rand::Rng;

use crate::config::{Command, Params, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::Artifacts;

/// Runs a command into `out`; returns the schema-checked parameters.
pub fn run(cfg: &RunConfig, out: &mut Artifacts) -> CliResult<Params> {
    match cfg.command {
        Command::Flow => dynamics::flow(cfg, out),
        Command::Jset => dynamics::jset(cfg, out),
        Command::Goodset => dynamics::goodset(cfg, out),
        Command::Lemmas => geometry::lemmas(cfg, out),
        Command::Badset => geometry::badset(cfg, out),
        Command::Series => series::series(cfg, out),
        Command::Factorization => series::factorization(cfg, out),
        Command::Chaos => chaos::chaos(cfg, out),
    }
}

/// Keys understood by [`state_from`].
const STATE_KEYS: [&str; 5] = ["d", "epsilon", "fixture", "particles", "n"];

/// The configuration a state-based command acts on: explicit `particles`,
/// or a named `fixture` (`head_on`, `near_collision`, `random`).
fn state_from(p: &Params, seed: u64, default_eps: f64) -> CliResult<PhaseState> {
    let d = p.dim()?;
    let eps: f64 = p.value("epsilon", default_eps)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(CliError::Config(format!("epsilon must be >= 0, got {eps}")));
    }
    let particles: Option<Vec<Particle>> = p.optional("particles")?;
    let ps = match particles {
        Some(ps) => {
            if ps.iter().any(|q| q.x.dim() != d || q.v.dim() != d) {
                return Err(CliError::Config(format!("particles must be {d}-dimensional")));
            }
            ps
        }
        None => {
            let fixture: String = p.value("fixture", "head_on".to_string())?;
            fixture_particles(&fixture, d, eps, p, seed)?
        }
    };
    Ok(PhaseState::new(d, eps, ps)?)
}

fn pad(d: usize, a: f64, b: f64) -> Vector {
    if d == 2 {
        Vector::new2(a, b)
    } else {
        Vector::new3(a, b, 0.0)
    }
}

fn fixture_particles(name: &str, d: usize, eps: f64, p: &Params, seed: u64) -> CliResult<Vec<Particle>> {
    Ok(match name {
        // unit-speed approach with gap 2, first contact at t = 1
        "head_on" => vec![
            Particle::new(pad(d, -1.0 - eps / 2.0, 0.0), pad(d, 1.0, 0.0)),
            Particle::new(pad(d, 1.0 + eps / 2.0, 0.0), pad(d, -1.0, 0.0)),
        ],
        // backward paths cross almost head-on at time 1/2
        "near_collision" => vec![
            Particle::new(pad(d, 0.0, 0.0), pad(d, 1.0, 0.0)),
            Particle::new(pad(d, -1.0, 0.5 * eps), pad(d, -1.0, 0.0)),
            Particle::new(pad(d, 0.0, 3.0), pad(d, 0.2, -1.0)),
        ],
        "random" => {
            let n: usize = p.value("n", 5)?;
            let mut rng = chunk_rng(seed, 0);
            let mut tries = 0;
            loop {
                tries += 1;
                if tries > 10_000 {
                    return Err(CliError::Precondition(format!("no overlap-free random state of {n} particles")));
                }
                let ps: Vec<Particle> = (0..n)
                    .map(|_| {
                        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let x = Vector::from_slice(&x).expect("dimension checked");
                        Particle::new(x, hardsphere::geometry::gaussian_vector(d, &mut rng) * 0.5 - x * 1.5)
                    })
                    .collect();
                if PhaseState::new(d, eps, ps.clone()).is_ok() {
                    break ps;
                }
            }
        }
        other => return Err(CliError::Config(format!("unknown fixture {other:?}"))),
    })
}

fn with_keys<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    STATE_KEYS.iter().copied().chain(extra.iter().copied()).collect()
}
