//! Monte Carlo sphere-projection oracles for the closed-form kernel matrix
//! and statistic, plus small shared helpers.

#![allow(dead_code)]

use std::f64::consts::PI;

use marflm::rng::rng_from;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;

pub fn sphere_area(n_k: usize) -> f64 {
    let h = n_k as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

fn random_direction(rng: &mut impl Rng, n_k: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n_k).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn project(scores: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    (0..scores.nrows())
        .map(|i| (0..g.len()).map(|k| scores[(i, k)] * g[k]).sum())
        .collect()
}

/// `∫ Σ_r 1{⟨s_l − s_r, γ⟩ ≤ 0} 1{⟨s_m − s_r, γ⟩ ≤ 0} dγ` over the unit
/// sphere, estimated from uniformly drawn directions.
pub fn mc_a_matrix(scores: &DMatrix<f64>, directions: usize, seed: u64) -> DMatrix<f64> {
    let (n, n_k) = scores.shape();
    let mut rng = rng_from(seed, &[0xa]);
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut count_ge = vec![0usize; n];
    for _ in 0..directions {
        let p = project(scores, &random_direction(&mut rng, n_k));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        // count_ge[i] = #{r : p_r ≥ p_i}, with ties sharing the larger count.
        let mut pos = 0;
        while pos < n {
            let mut end = pos;
            while end + 1 < n && p[order[end + 1]] == p[order[pos]] {
                end += 1;
            }
            for &i in &order[pos..=end] {
                count_ge[i] = n - pos;
            }
            pos = end + 1;
        }
        for l in 0..n {
            for m in l..n {
                acc[(l, m)] += count_ge[l].min(count_ge[m]) as f64;
            }
        }
    }
    let scale = sphere_area(n_k) / directions as f64;
    DMatrix::from_fn(n, n, |l, m| scale * if l <= m { acc[(l, m)] } else { acc[(m, l)] })
}

/// `∫∫ R(u, γ)² F_γ(du) dγ` with `R(u, γ) = n^{-1/2} Σᵢ εᵢ 1{⟨sᵢ, γ⟩ ≤ u}` and
/// `F_γ` the ECDF of the projections, evaluated directly per direction.
pub fn mc_statistic(scores: &DMatrix<f64>, residuals: &[f64], directions: usize, seed: u64) -> f64 {
    let (n, n_k) = scores.shape();
    let mut rng = rng_from(seed, &[0xb]);
    let nf = n as f64;
    let mut total = 0.0;
    for _ in 0..directions {
        let p = project(scores, &random_direction(&mut rng, n_k));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        let mut integral = 0.0;
        let mut cum = 0.0;
        let mut pos = 0;
        while pos < n {
            let mut end = pos;
            while end + 1 < n && p[order[end + 1]] == p[order[pos]] {
                end += 1;
            }
            for &i in &order[pos..=end] {
                cum += residuals[i];
            }
            // Each projected point carries ECDF mass 1/n.
            let r = cum / nf.sqrt();
            integral += (end - pos + 1) as f64 * r * r / nf;
            pos = end + 1;
        }
        total += integral;
    }
    total * sphere_area(n_k) / directions as f64
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Random score matrix and residual vector for oracle comparisons.
pub fn random_instance(seed: u64, max_n: usize, max_k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = rng_from(seed, &[0xc]);
    let n = rng.random_range(4..=max_n);
    let n_k = rng.random_range(1..=max_k);
    let scale: Vec<f64> = (0..n_k).map(|k| 2.0 / (k + 1) as f64).collect();
    let scores = DMatrix::from_fn(n, n_k, |_, k| scale[k] * rng.sample::<f64, _>(StandardNormal));
    let residuals = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    (scores, residuals)
}

/// One-sided sign test p-value for "first < second" over paired values.
pub fn sign_test_p(pairs: &[(f64, f64)]) -> (usize, usize, f64) {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let wins = pairs.iter().filter(|(a, b)| a < b).count();
    let losses = pairs.iter().filter(|(a, b)| a > b).count();
    let m = wins + losses;
    if m == 0 {
        return (0, 0, 1.0);
    }
    let dist = Binomial::new(0.5, m as u64).unwrap();
    let p = if wins == 0 { 1.0 } else { dist.sf(wins as u64 - 1) };
    (wins, m, p)
}
