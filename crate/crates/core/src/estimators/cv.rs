use serde::{Deserialize, Serialize};

use super::ols::Moments;
use super::MarSample;
use crate::error::{Error, Result};
use crate::functional::FpcBasis;

/// LOOCV choice of a single cutoff `K` (a count, so components `0..K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSelection {
    pub k: usize,
    /// Mean squared LOO prediction error for `K = 1..=k_max`.
    pub cv: Vec<f64>,
}

/// Joint LOOCV choice of the first-stage and second-stage cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCutoffSelection {
    pub first: usize,
    pub second: usize,
    /// `cv[a][b]` is the error at first-stage cutoff `a + 1`, second `b + 1`.
    pub cv: Vec<Vec<f64>>,
}

fn check_k_max(sample: &MarSample, basis: &FpcBasis, k_max: usize) -> Result<()> {
    if basis.n() != sample.n() {
        return Err(Error::Dimension(format!(
            "basis has {} curves, sample {}",
            basis.n(),
            sample.n()
        )));
    }
    if k_max == 0 || k_max > basis.k_max() {
        return Err(Error::InvalidConfig(format!(
            "cutoff bound {k_max} outside 1..={}",
            basis.k_max()
        )));
    }
    if sample.n_obs() < k_max + 2 {
        return Err(Error::Degenerate(format!(
            "{} observed responses for cutoff bound {k_max}",
            sample.n_obs()
        )));
    }
    Ok(())
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn scores(basis: &FpcBasis, i: usize, k: usize) -> Vec<f64> {
    (0..k).map(|c| basis.score(i, c)).collect()
}

/// `ȳ + Σ_{c<K} b_c (s_c − s̄_c)` for each prefix solution `b`.
fn prefix_predictions(solutions: &[Vec<f64>], ybar: f64, mean: &[f64], s: &[f64]) -> Vec<f64> {
    solutions
        .iter()
        .map(|b| ybar + b.iter().enumerate().map(|(c, v)| v * (s[c] - mean[c])).sum::<f64>())
        .collect()
}

/// Cutoff `K_S` of the simplified estimator by leave-one-out CV over the
/// observed pairs: each left-out fit is the least-squares fit with intercept
/// on the other observed pairs. Ties go to the smaller cutoff.
pub fn loocv_cutoff_simplified(
    sample: &MarSample,
    basis: &FpcBasis,
    k_max: usize,
) -> Result<CutoffSelection> {
    check_k_max(sample, basis, k_max)?;
    let rows = sample.observed_index();
    let y = sample.y();
    let full = Moments::over(basis, rows, k_max);
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let mut cross = vec![0.0; k_max];
    for &i in rows {
        for (c, v) in cross.iter_mut().enumerate() {
            *v += y[i] * basis.score(i, c);
        }
    }
    let mut sse = vec![0.0; k_max];
    for &i in rows {
        let s = scores(basis, i, k_max);
        let mut m = full.clone();
        m.remove(&s);
        let sy = total - y[i];
        let ssy: Vec<f64> = cross.iter().zip(&s).map(|(v, s)| v - s * y[i]).collect();
        let f = m.factor()?;
        let sol = f.prefix_solutions(&m.centered_rhs(sy, &ssy));
        for (e, p) in sse.iter_mut().zip(prefix_predictions(&sol, sy / m.count, &f.mean, &s)) {
            *e += (y[i] - p).powi(2);
        }
    }
    let cv: Vec<f64> = sse.iter().map(|s| s / rows.len() as f64).collect();
    Ok(CutoffSelection {
        k: argmin_first(&cv) + 1,
        cv,
    })
}

/// Joint cutoffs `(K_S, K_2)` for the imputed (`weights = None`) or IPW
/// (`weights = Some(p̂)`) estimator.
///
/// For every observed `i` the whole pipeline is refit without `yᵢ`: the
/// simplified fit at `K_S` on the remaining observed pairs, completion of
/// every other response, and the second-stage fit over `j ≠ i`. The
/// criterion is the mean squared error predicting `yᵢ`. The grid is scanned
/// with `K_S` outer and ties keep the earlier pair.
pub fn joint_loocv_cutoffs(
    sample: &MarSample,
    basis: &FpcBasis,
    k_max: usize,
    weights: Option<&[f64]>,
) -> Result<JointCutoffSelection> {
    check_k_max(sample, basis, k_max)?;
    if let Some(p) = weights {
        if p.len() != sample.n() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} curves",
                p.len(),
                sample.n()
            )));
        }
    }
    let n = sample.n();
    let rows = sample.observed_index();
    let observed = sample.observed();
    let y = sample.y();
    let all: Vec<usize> = (0..n).collect();
    let observed_moments = Moments::over(basis, rows, k_max);
    let all_moments = Moments::over(basis, &all, k_max);
    let s_all: Vec<Vec<f64>> = (0..n).map(|j| scores(basis, j, k_max)).collect();
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let mut cross = vec![0.0; k_max];
    for &i in rows {
        for (c, v) in cross.iter_mut().enumerate() {
            *v += y[i] * s_all[i][c];
        }
    }

    let mut sse = vec![vec![0.0; k_max]; k_max];
    let mut completed = vec![0.0; n];
    for &i in rows {
        let s = &s_all[i];
        let mut m1 = observed_moments.clone();
        m1.remove(s);
        let sy = total - y[i];
        let ssy: Vec<f64> = cross.iter().zip(s).map(|(v, s)| v - s * y[i]).collect();
        let f1 = m1.factor()?;
        let first = f1.prefix_solutions(&m1.centered_rhs(sy, &ssy));
        let ybar1 = sy / m1.count;

        let mut m2 = all_moments.clone();
        m2.remove(s);
        let f2 = m2.factor()?;

        for (b1, row) in first.iter().zip(sse.iter_mut()) {
            let mut sum = 0.0;
            let mut sum_s = vec![0.0; k_max];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let sj = &s_all[j];
                let pred = ybar1 + b1.iter().enumerate().map(|(c, v)| v * (sj[c] - f1.mean[c])).sum::<f64>();
                completed[j] = if observed[j] {
                    match weights {
                        None => y[j],
                        Some(p) => {
                            let w = 1.0 / p[j];
                            w * y[j] + (1.0 - w) * pred
                        }
                    }
                } else {
                    pred
                };
                sum += completed[j];
                for (c, v) in sum_s.iter_mut().enumerate() {
                    *v += completed[j] * sj[c];
                }
            }
            let second = f2.prefix_solutions(&m2.centered_rhs(sum, &sum_s));
            let preds = prefix_predictions(&second, sum / m2.count, &f2.mean, s);
            for (cell, p) in row.iter_mut().zip(preds) {
                *cell += (y[i] - p).powi(2);
            }
        }
    }
    let m = rows.len() as f64;
    let cv: Vec<Vec<f64>> = sse
        .into_iter()
        .map(|r| r.into_iter().map(|v| v / m).collect())
        .collect();
    let (mut first, mut second) = (0, 0);
    for (ks, row) in cv.iter().enumerate() {
        for (k2, &v) in row.iter().enumerate() {
            if v < cv[first][second] {
                first = ks;
                second = k2;
            }
        }
    }
    Ok(JointCutoffSelection {
        first: first + 1,
        second: second + 1,
        cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{complete_imputed, complete_weighted, least_squares_fpc, score_prediction};
    use crate::functional::{fpc_decompose_k, FunctionalSample, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, seed: u64, missing: f64) -> (MarSample, FpcBasis) {
        let grid = Grid::uniform(0.0, 1.0, 31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let c: Vec<f64> = (0..5)
                    .map(|j| rng.random_range(-1.0..1.0) / (j + 1) as f64)
                    .collect();
                grid.evaluate(|t| {
                    c.iter()
                        .enumerate()
                        .map(|(j, cj)| cj * ((j + 1) as f64 * std::f64::consts::PI * t).sin())
                        .sum()
                })
            })
            .collect();
        let x = FunctionalSample::from_rows(grid, &rows).unwrap();
        let basis = fpc_decompose_k(&x, 5).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.5 + basis.score(i, 0) - 0.7 * basis.score(i, 1) + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        let mut observed: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= missing).collect();
        observed[0] = true;
        observed[1] = true;
        observed[2] = true;
        (MarSample::new(x, y, observed).unwrap(), basis)
    }

    /// Refit on each leave-one-out subsample directly.
    fn brute_simplified(s: &MarSample, b: &FpcBasis, k_max: usize) -> Vec<f64> {
        let rows = s.observed_index();
        let mut cv = vec![0.0; k_max];
        for &i in rows {
            let keep: Vec<usize> = rows.iter().copied().filter(|&j| j != i).collect();
            for k in 1..=k_max {
                let idx: Vec<usize> = (0..k).collect();
                let (a, coef) = least_squares_fpc(b, s.y(), &idx, &keep).unwrap();
                let pred = a + score_prediction(b, i, &idx, &coef);
                cv[k - 1] += (s.y()[i] - pred).powi(2) / rows.len() as f64;
            }
        }
        cv
    }

    fn brute_joint(s: &MarSample, b: &FpcBasis, k_max: usize, p: Option<&[f64]>) -> Vec<Vec<f64>> {
        let n = s.n();
        let rows = s.observed_index();
        let mut cv = vec![vec![0.0; k_max]; k_max];
        for &i in rows {
            let keep: Vec<usize> = rows.iter().copied().filter(|&j| j != i).collect();
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            for ks in 1..=k_max {
                let first: Vec<usize> = (0..ks).collect();
                let (a1, b1) = least_squares_fpc(b, s.y(), &first, &keep).unwrap();
                let mut obs = s.observed().to_vec();
                obs[i] = false;
                let completed = match p {
                    None => complete_imputed(b, s.y(), &obs, &first, a1, &b1),
                    Some(p) => complete_weighted(b, s.y(), &obs, &first, a1, &b1, p),
                };
                for k2 in 1..=k_max {
                    let second: Vec<usize> = (0..k2).collect();
                    let (a2, b2) = least_squares_fpc(b, &completed, &second, &others).unwrap();
                    let pred = a2 + score_prediction(b, i, &second, &b2);
                    cv[ks - 1][k2 - 1] += (s.y()[i] - pred).powi(2) / rows.len() as f64;
                }
            }
        }
        cv
    }

    #[test]
    fn simplified_matches_brute_force() {
        for seed in 0..5 {
            let (s, b) = sample(40, seed, 0.3);
            let sel = loocv_cutoff_simplified(&s, &b, 5).unwrap();
            let brute = brute_simplified(&s, &b, 5);
            for (x, y) in sel.cv.iter().zip(&brute) {
                assert!((x - y).abs() < 1e-10 * (1.0 + y), "{x} {y}");
            }
        }
    }

    #[test]
    fn joint_matches_brute_force() {
        for seed in 0..3 {
            let (s, b) = sample(30, seed + 10, 0.3);
            let sel = joint_loocv_cutoffs(&s, &b, 4, None).unwrap();
            let brute = brute_joint(&s, &b, 4, None);
            let p: Vec<f64> = (0..30).map(|i| 0.4 + 0.02 * i as f64).collect();
            let selw = joint_loocv_cutoffs(&s, &b, 4, Some(&p)).unwrap();
            let brutew = brute_joint(&s, &b, 4, Some(&p));
            for a in 0..4 {
                for c in 0..4 {
                    assert!((sel.cv[a][c] - brute[a][c]).abs() < 1e-10 * (1.0 + brute[a][c]));
                    assert!((selw.cv[a][c] - brutew[a][c]).abs() < 1e-10 * (1.0 + brutew[a][c]));
                }
            }
        }
    }

    #[test]
    fn noiseless_single_component_selects_one() {
        let (s, b) = sample(50, 3, 0.0);
        let y: Vec<f64> = (0..50).map(|i| 2.0 + b.score(i, 0)).collect();
        let s = s.with_responses(y).unwrap();
        let sel = loocv_cutoff_simplified(&s, &b, 5).unwrap();
        assert_eq!(sel.k, 1, "{:?}", sel.cv);
    }

    #[test]
    fn two_component_truth_is_found() {
        let (s, b) = sample(80, 4, 0.2);
        let sel = loocv_cutoff_simplified(&s, &b, 5).unwrap();
        assert!(sel.k >= 2, "{:?}", sel.cv);
        let joint = joint_loocv_cutoffs(&s, &b, 5, None).unwrap();
        assert!(joint.second >= 2, "{:?}", joint.cv);
    }

    #[test]
    fn pure_noise_mostly_selects_one() {
        let mut ones = 0;
        for seed in 0..100u64 {
            let (s, b) = sample(50, 1000 + seed, 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = s.with_responses(y).unwrap();
            if loocv_cutoff_simplified(&s, &b, 5).unwrap().k == 1 {
                ones += 1;
            }
        }
        assert!(ones > 50, "{ones}");
    }

    #[test]
    fn rejects_too_few_observations() {
        let (s, b) = sample(6, 5, 0.0);
        assert!(loocv_cutoff_simplified(&s, &b, 4).is_ok());
        assert!(loocv_cutoff_simplified(&s, &b, 5).is_err());
        let obs = vec![true, true, true, true, false, false];
        let s2 = MarSample::new(s.x().clone(), s.y().to_vec(), obs).unwrap();
        assert!(loocv_cutoff_simplified(&s2, &b, 3).is_err());
        assert!(loocv_cutoff_simplified(&s2, &b, 2).is_ok());
    }
}
