//! WebAssembly bindings for a small interactive demo page (`www/index.html`).
//!
//! Every function returns plain numbers or `Float64Array`s so the page needs no
//! glue beyond the generated bindings.

use bonefrac::bench::plate_reference_k;
use bonefrac::fe::TractionBc;
use bonefrac::fracture::{assess, griffith_assess, stress_intensity, FractureProblem};
use bonefrac::material::MaterialParams;
use bonefrac::mesh::generate::{plate, PlateSpec};
use bonefrac::mesh::Point;
use bonefrac::mwls::{DensityField, DensitySamples};
use wasm_bindgen::prelude::*;

fn js_err(e: bonefrac::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// K_I of the coarse centre-cracked plate (a = 1, b = 2.5, σ = 1, E = 1000,
/// ν = 0.3) from configurational forces.
///
/// Returns `[K_I, K_ref, error %, dofs]`.
#[wasm_bindgen]
pub fn plate_k_i(pg: usize, pl: usize, singular: bool) -> Result<Vec<f64>, JsError> {
    let spec = PlateSpec::coarse();
    let mesh = plate(&spec).map_err(js_err)?;
    let material = MaterialParams {
        young: 1000.0,
        poisson: 0.3,
        ..MaterialParams::default()
    };
    let mut problem = FractureProblem::new(&mesh, material).map_err(js_err)?;
    problem.tractions = vec![
        TractionBc {
            group: "TRACTION_TOP".into(),
            traction: [0.0, 1.0, 0.0],
        },
        TractionBc {
            group: "TRACTION_BOTTOM".into(),
            traction: [0.0, -1.0, 0.0],
        },
    ];
    problem.pg = pg;
    problem.pl = pl;
    problem.singular = singular;
    let (_, report) = assess(&problem).map_err(js_err)?;
    let k = report
        .mean_k_i()
        .ok_or_else(|| JsError::new("negative energy release rate"))?;
    let reference = plate_reference_k(spec.half_crack, spec.half_width, 1.0);
    Ok(vec![
        k,
        reference,
        100.0 * (k - reference).abs() / reference,
        report.dofs as f64,
    ])
}

/// MWLS reconstruction of `ρ = slope·y + 1 + amplitude·sin(2πy)` from samples
/// on a grid of the given spacing, evaluated at `n` points along `y ∈ [-1, 1]`
/// on the line `x = z = 0.5·spacing`.
///
/// Returns `[y₀.., value₀.., exact₀.., dρ/dy₀..]` (four blocks of length `n`).
#[wasm_bindgen]
pub fn mwls_profile(
    slope: f64,
    amplitude: f64,
    spacing: f64,
    radius_factor: f64,
    order: usize,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    if !(spacing > 0.0) || n < 2 {
        return Err(JsError::new("spacing must be positive and n at least 2"));
    }
    let exact = |y: f64| slope * y + 1.0 + amplitude * (2.0 * std::f64::consts::PI * y).sin();
    let cells = (2.0 / spacing).round().max(1.0) as usize;
    let lo = Point::new(-spacing, -1.0 - spacing, -spacing);
    let hi = Point::new(2.0 * spacing, 1.0 + spacing, 2.0 * spacing);
    let samples = DensitySamples::grid(lo, hi, [4, cells + 3, 4], |p| exact(p.y));
    let field = DensityField::build(samples, radius_factor * spacing, order).map_err(js_err)?;
    let mut out = vec![0.0; 4 * n];
    for i in 0..n {
        let y = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        let (v, g) = field
            .eval_grad(&Point::new(0.5 * spacing, y, 0.5 * spacing))
            .map_err(js_err)?;
        out[i] = y;
        out[n + i] = v;
        out[2 * n + i] = exact(y);
        out[3 * n + i] = g.y;
    }
    Ok(out)
}

/// Griffith assessment of an energy release rate against the toughness `gc`.
///
/// Returns `[φ, g_c/G, √(g_c/G), K_I = √(G E)]`.
#[wasm_bindgen]
pub fn griffith(g: f64, gc: f64, young: f64) -> Result<Vec<f64>, JsError> {
    let a = griffith_assess(g, gc);
    let k = stress_intensity(g, young).map_err(js_err)?;
    Ok(vec![a.phi, a.margin_linear, a.margin_sqrt, k])
}
