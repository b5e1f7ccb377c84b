//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use scope_core::sim::ToyDiffusionModel;

pub fn matvec(w: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    w.iter().map(|row| row.iter().zip(c).map(|(a, b)| a * b).sum()).collect()
}

/// log N(x; √ᾱ·W·c, (1 − ᾱ + ᾱ·s²)·I), written out directly.
pub fn log_density(model: &ToyDiffusionModel, x: &[f64], level: usize, c: &[f64]) -> f64 {
    let abar = model.abar()[level];
    let var = 1.0 - abar + abar * model.s2();
    let mu = matvec(model.w(), c);
    let sq: f64 = x
        .iter()
        .zip(&mu)
        .map(|(xi, mi)| (xi - abar.sqrt() * mi).powi(2))
        .sum();
    -sq / (2.0 * var) - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Central-difference gradient of [`log_density`] in x.
pub fn fd_score(model: &ToyDiffusionModel, x: &[f64], level: usize, c: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (log_density(model, &up, level, c) - log_density(model, &down, level, c)) / (2.0 * h)
        })
        .collect()
}

/// Integrates the probability-flow ODE that DDIM discretizes, with RK4 and
/// `substeps` substeps per sampler interval.
///
/// In the variables x̄ = x/√ᾱ and σ = √((1 − ᾱ)/ᾱ) the ODE reads
/// dx̄/dσ = σ·(x̄ − W·c)/(σ² + s²). Conditioning is held constant over each
/// interval, as in the sampler.
pub fn reference_final(
    model: &ToyDiffusionModel,
    conditioning: &[Vec<f64>],
    x_init: &[f64],
    substeps: usize,
) -> Vec<f64> {
    let abar = model.abar();
    let steps = abar.len();
    let s2 = model.s2();
    let sigma_of = |a: f64| ((1.0 - a) / a).sqrt();
    let top = abar[steps - 1];
    let mut xbar: Vec<f64> = x_init.iter().map(|v| v / top.sqrt()).collect();
    for (t, c) in conditioning.iter().enumerate() {
        let level = steps - 1 - t;
        let from = sigma_of(abar[level]);
        let to = if level == 0 { 0.0 } else { sigma_of(abar[level - 1]) };
        let mu = matvec(model.w(), c);
        let f = |sigma: f64, x: &[f64]| -> Vec<f64> {
            x.iter().zip(&mu).map(|(xi, mi)| sigma * (xi - mi) / (sigma * sigma + s2)).collect()
        };
        let h = (to - from) / substeps as f64;
        for j in 0..substeps {
            let s = from + h * j as f64;
            let k1 = f(s, &xbar);
            let y2: Vec<f64> = xbar.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
            let k2 = f(s + 0.5 * h, &y2);
            let y3: Vec<f64> = xbar.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
            let k3 = f(s + 0.5 * h, &y3);
            let y4: Vec<f64> = xbar.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
            let k4 = f(s + h, &y4);
            for i in 0..xbar.len() {
                xbar[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    // σ = 0 at the end, where ᾱ = 1 and x = x̄
    xbar
}

pub fn relative_error(a: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = reference.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm
}
