//! WebAssembly bindings for a few mixcop operations, used by `www/index.html`.
//!
//! Each binding wraps a plain Rust function of the same name with a
//! `_impl` suffix so the logic can be tested natively.

use mixcop::copulas::{Copula, GaussianCopula};
use mixcop::likelihood::rectangle_mass;
use mixcop::marginals::{Atom, ContinuousPart, MixedMarginal};
use mixcop::measures::zero_transition_probs;
use mixcop::simulate::simulate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Bivariate copula by family name; `param` is θ, or ρ for `gaussian`.
pub fn bivariate(family: &str, param: f64) -> Result<Copula, String> {
    let cop = match family {
        "clayton" => Copula::clayton(param),
        "gumbel" => Copula::gumbel(param),
        "gaussian" => GaussianCopula::equicorrelated(2, param).map(Copula::Gaussian),
        "independence" => Ok(Copula::Independence),
        other => return Err(format!("unknown family {other:?}; expected clayton, gumbel, gaussian or independence")),
    };
    cop.map_err(|e| e.to_string())
}

fn income_margin(zero_mass: f64) -> Result<MixedMarginal, String> {
    MixedMarginal::parametric(
        vec![Atom {
            location: 0.0,
            mass: zero_mass,
        }],
        ContinuousPart::LogNormal { meanlog: 0.0, sdlog: 1.0 },
    )
    .map_err(|e| e.to_string())
}

pub fn rectangle_probability_impl(family: &str, param: f64, lower: &[f64], upper: &[f64]) -> Result<f64, String> {
    if lower.len() != 2 || upper.len() != 2 {
        return Err("lower and upper need two coordinates each".into());
    }
    let cop = bivariate(family, param)?;
    rectangle_mass(&cop, &[0, 1], lower, upper, &[], &[]).map_err(|e| e.to_string())
}

/// Probability that `(U1, U2)` falls in `(lower, upper]`.
#[wasm_bindgen]
pub fn rectangle_probability(family: &str, param: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<f64, JsValue> {
    rectangle_probability_impl(family, param, &lower, &upper).map_err(|e| JsValue::from_str(&e))
}

pub fn zero_transitions_impl(family: &str, param: f64, zero_from: f64, zero_to: f64) -> Result<String, String> {
    let cop = bivariate(family, param)?;
    let margs = [income_margin(zero_from)?, income_margin(zero_to)?];
    let t = zero_transition_probs(&cop, &margs, (0, 1)).map_err(|e| e.to_string())?;
    serde_json::to_string(&t).map_err(|e| e.to_string())
}

/// Zero/positive transition probabilities between two periods whose
/// margins put the given masses at zero, as a JSON object.
#[wasm_bindgen]
pub fn zero_transitions(family: &str, param: f64, zero_from: f64, zero_to: f64) -> Result<String, JsValue> {
    zero_transitions_impl(family, param, zero_from, zero_to).map_err(|e| JsValue::from_str(&e))
}

pub fn simulate_csv_impl(family: &str, param: f64, zero_mass: f64, n: usize, seed: u64) -> Result<String, String> {
    let cop = bivariate(family, param)?;
    let m = income_margin(zero_mass)?;
    let rows = simulate(&cop, &[m.clone(), m], n, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
    let mut out = String::from("y1,y2\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    Ok(out)
}

/// Two-period panel with lognormal incomes and a point mass at zero, as CSV.
#[wasm_bindgen]
pub fn simulate_csv(family: &str, param: f64, zero_mass: f64, n: usize, seed: u64) -> Result<String, JsValue> {
    simulate_csv_impl(family, param, zero_mass, n, seed).map_err(|e| JsValue::from_str(&e))
}
