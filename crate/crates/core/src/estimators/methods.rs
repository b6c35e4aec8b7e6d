use nalgebra::DMatrix;

use super::{
    complete_imputed, complete_weighted, fit_observance, joint_loocv_cutoffs, lasso_select,
    least_squares_fpc, loocv_cutoff_simplified, Estimate, FitOptions, FitPlan,
    MarSample, Method, ObservanceModel, Selection,
};
use crate::error::{Error, Result};
use crate::functional::FpcBasis;

/// Largest usable cutoff: `K_max`, but a leave-one-out fit with an intercept
/// needs `n_S − 1 > K`.
fn cutoff_bound(sample: &MarSample, basis: &FpcBasis) -> Result<usize> {
    if basis.n() != sample.n() {
        return Err(Error::Dimension(format!(
            "basis has {} curves, sample {}",
            basis.n(),
            sample.n()
        )));
    }
    if sample.n_obs() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 observed responses, got {}",
            sample.n_obs()
        )));
    }
    Ok(basis.k_max().min(sample.n_obs() - 2))
}

fn prefix(k: usize) -> Vec<usize> {
    (0..k).collect()
}

/// Scores of `rows` on the first `k` components and `y[rows]`, both centered
/// over `rows`, so the intercept drops out of the LASSO.
fn centered_design(basis: &FpcBasis, rows: &[usize], y: &[f64], k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let m = rows.len() as f64;
    let mut x = DMatrix::from_fn(rows.len(), k, |i, c| basis.score(rows[i], c));
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
    }
    let ybar = rows.iter().map(|&i| y[i]).sum::<f64>() / m;
    (x, rows.iter().map(|&i| y[i] - ybar).collect())
}

fn finish(plan: FitPlan, sample: &MarSample, basis: &FpcBasis, selection: Selection, bandwidth: Option<f64>) -> Result<Estimate> {
    let slope = plan.refit(basis, sample.y(), sample.observed())?;
    Ok(Estimate {
        slope,
        plan,
        selection,
        bandwidth,
    })
}

fn require_complete(sample: &MarSample, method: Method) -> Result<()> {
    if !sample.is_fully_observed() {
        return Err(Error::InvalidConfig(format!(
            "method {method} needs every response observed ({} of {} are)",
            sample.n_obs(),
            sample.n()
        )));
    }
    Ok(())
}

fn cutoff_estimate(sample: &MarSample, basis: &FpcBasis, method: Method) -> Result<Estimate> {
    let sel = loocv_cutoff_simplified(sample, basis, cutoff_bound(sample, basis)?)?;
    let plan = FitPlan {
        method,
        first_stage: None,
        indices: prefix(sel.k),
        probabilities: None,
    };
    finish(plan, sample, basis, Selection::Cutoff(sel), None)
}

/// `β̂_S`: observed pairs only, cutoff by LOOCV.
pub fn estimate_simplified(sample: &MarSample, basis: &FpcBasis) -> Result<Estimate> {
    cutoff_estimate(sample, basis, Method::S)
}

/// `β̂_C`: the FPC estimator on a fully observed sample.
pub fn estimate_complete(sample: &MarSample, basis: &FpcBasis) -> Result<Estimate> {
    require_complete(sample, Method::C)?;
    cutoff_estimate(sample, basis, Method::C)
}

fn two_stage_cutoffs(
    sample: &MarSample,
    basis: &FpcBasis,
    method: Method,
    observance: Option<&ObservanceModel>,
) -> Result<Estimate> {
    let probabilities = observance.map(|o| o.probabilities.clone());
    let sel = joint_loocv_cutoffs(
        sample,
        basis,
        cutoff_bound(sample, basis)?,
        probabilities.as_deref(),
    )?;
    let plan = FitPlan {
        method,
        first_stage: Some(prefix(sel.first)),
        indices: prefix(sel.second),
        probabilities,
    };
    finish(plan, sample, basis, Selection::JointCutoff(sel), observance.map(|o| o.bandwidth))
}

/// `β̂_I`: refit on responses completed by the simplified estimator, joint
/// cutoffs by LOOCV.
pub fn estimate_imputed(sample: &MarSample, basis: &FpcBasis) -> Result<Estimate> {
    two_stage_cutoffs(sample, basis, Method::I, None)
}

/// `β̂_W`: refit on inverse-probability-weighted completed responses.
pub fn estimate_ipw(sample: &MarSample, basis: &FpcBasis, observance: &ObservanceModel) -> Result<Estimate> {
    check_observance(sample, observance)?;
    two_stage_cutoffs(sample, basis, Method::W, Some(observance))
}

fn check_observance(sample: &MarSample, observance: &ObservanceModel) -> Result<()> {
    if observance.probabilities.len() != sample.n() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} curves",
            observance.probabilities.len(),
            sample.n()
        )));
    }
    Ok(())
}

fn simplified_selection(sample: &MarSample, basis: &FpcBasis, options: &FitOptions) -> Result<super::LassoSelection> {
    let k = cutoff_bound(sample, basis)?;
    let (x, y) = centered_design(basis, sample.observed_index(), sample.y(), k);
    lasso_select(&x, &y, options)
}

fn single_lasso(sample: &MarSample, basis: &FpcBasis, options: &FitOptions, method: Method) -> Result<Estimate> {
    let sel = simplified_selection(sample, basis, options)?;
    let plan = FitPlan {
        method,
        first_stage: None,
        indices: sel.indices.clone(),
        probabilities: None,
    };
    finish(
        plan,
        sample,
        basis,
        Selection::Lasso {
            first: None,
            second: sel,
        },
        None,
    )
}

/// `β̂_SL`: LASSO selection on the observed pairs, then the least-squares refit.
pub fn estimate_simplified_lasso(sample: &MarSample, basis: &FpcBasis, options: &FitOptions) -> Result<Estimate> {
    single_lasso(sample, basis, options, Method::SL)
}

/// `β̂_CL`: LASSO-selected estimator on a fully observed sample.
pub fn estimate_complete_lasso(sample: &MarSample, basis: &FpcBasis, options: &FitOptions) -> Result<Estimate> {
    require_complete(sample, Method::CL)?;
    single_lasso(sample, basis, options, Method::CL)
}

fn two_stage_lasso(
    sample: &MarSample,
    basis: &FpcBasis,
    options: &FitOptions,
    method: Method,
    observance: Option<&ObservanceModel>,
) -> Result<Estimate> {
    let first = simplified_selection(sample, basis, options)?;
    let rows = sample.observed_index();
    let (a1, b1) = least_squares_fpc(basis, sample.y(), &first.indices, rows)?;
    let completed = match observance {
        None => complete_imputed(basis, sample.y(), sample.observed(), &first.indices, a1, &b1),
        Some(o) => complete_weighted(
            basis,
            sample.y(),
            sample.observed(),
            &first.indices,
            a1,
            &b1,
            &o.probabilities,
        ),
    };
    let all: Vec<usize> = (0..sample.n()).collect();
    let (x, y) = centered_design(basis, &all, &completed, basis.k_max());
    let second = lasso_select(&x, &y, options)?;
    let plan = FitPlan {
        method,
        first_stage: Some(first.indices.clone()),
        indices: second.indices.clone(),
        probabilities: observance.map(|o| o.probabilities.clone()),
    };
    finish(
        plan,
        sample,
        basis,
        Selection::Lasso {
            first: Some(first),
            second,
        },
        observance.map(|o| o.bandwidth),
    )
}

/// `β̂_IL`: imputation from `β̂_SL`, then a second LASSO selection.
pub fn estimate_imputed_lasso(sample: &MarSample, basis: &FpcBasis, options: &FitOptions) -> Result<Estimate> {
    two_stage_lasso(sample, basis, options, Method::IL, None)
}

/// `β̂_WL`: IPW completion from `β̂_SL`, then a second LASSO selection.
pub fn estimate_ipw_lasso(
    sample: &MarSample,
    basis: &FpcBasis,
    observance: &ObservanceModel,
    options: &FitOptions,
) -> Result<Estimate> {
    check_observance(sample, observance)?;
    two_stage_lasso(sample, basis, options, Method::WL, Some(observance))
}

/// Dispatches on `method`. The IPW methods fit the observance model when
/// none is supplied.
pub fn estimate(
    method: Method,
    sample: &MarSample,
    basis: &FpcBasis,
    options: &FitOptions,
    observance: Option<&ObservanceModel>,
) -> Result<Estimate> {
    let fitted;
    let observance = match (method.needs_observance(), observance) {
        (true, None) => {
            fitted = fit_observance(sample)?;
            Some(&fitted)
        }
        (_, o) => o,
    };
    match method {
        Method::C => estimate_complete(sample, basis),
        Method::CL => estimate_complete_lasso(sample, basis, options),
        Method::S => estimate_simplified(sample, basis),
        Method::SL => estimate_simplified_lasso(sample, basis, options),
        Method::I => estimate_imputed(sample, basis),
        Method::IL => estimate_imputed_lasso(sample, basis, options),
        Method::W => estimate_ipw(sample, basis, observance.unwrap()),
        Method::WL => estimate_ipw_lasso(sample, basis, observance.unwrap(), options),
    }
}
