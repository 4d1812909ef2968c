//! Regenerates the frozen chaos probe sets:
//! `cargo run --example chaos_probes > crates/core/tests/data/chaos_probes.json`.
//! Probes are admissible at the smallest ensemble (N = 64), hence at every
//! larger N of the sweep.

use hardsphere::ensemble::{epsilon_for, generate_probes};
use hardsphere::{ChaosVariant, DensitySpec, GoodSetParams};
use serde_json::json;

fn main() -> hardsphere::Result<()> {
    let (d, ell, kappa, r, n_ref) = (2, 1.0, 0.5, 3.0, 64);
    let data = DensitySpec::maxwellian(d, 1.0, 1.0);
    let eps = epsilon_for(n_ref, d, ell)?;
    let params = GoodSetParams::from_scaling(2, eps, kappa, r)?;
    let k = generate_probes(&data, 2, 8, ChaosVariant::K, &params, 7001, 100_000)?;
    let g = generate_probes(&data, 3, 8, ChaosVariant::G { m_prime: 3 }, &params, 7002, 100_000)?;
    let doc = json!({
        "schema_version": 1,
        "d": d,
        "ell": ell,
        "kappa": kappa,
        "r": r,
        "reference_n": n_ref,
        "data": data,
        "sets": [
            { "variant": ChaosVariant::K, "s": 2, "probes": k },
            { "variant": ChaosVariant::G { m_prime: 3 }, "s": 3, "probes": g },
        ],
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(())
}
