//! Recovery metrics and empirical verification of the concentration
//! statements behind the recovery theorems.
//!
//! The guarantees of epoch-based refitting are conditional: they bound the
//! error only over the modified set D_τ, and they rest on two empirical
//! pillars —
//!
//! - a martingale bound |Σ_t W_t| ≤ W_max√(2τ ln(2/δ)) for bounded
//!   conditionally-centered sequences (the noise-correlation sums
//!   Σ_t x̄_t(k)ε_t are such sequences with W_max = K′);
//! - a restricted eigenvalue lower bound λn/2 − κ′d²√(τ ln(6d/δ)) for
//!   X̄ᵀX̄ on the subspace 𝒱 = 𝒟 + Σ.
//!
//! This module computes both empirical sides from run logs and reports
//! pass/fail against the theoretical values.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Observation;
use crate::error::{Error, Result};
use crate::learner::{stack_observations, RunRecord};
use crate::numerics::{self, dot, Matrix};
use crate::scenarios::{InstanceConstants, Scenario};

// ----------------------------------------------------------------------
// recovery metrics
// ----------------------------------------------------------------------

/// The set of features modified by at least one agent: indices whose Δ
/// coordinate is nonzero in some observation. Sorted, 0-based, deduplicated.
pub fn modified_set(observations: &[Observation]) -> Vec<usize> {
    let mut set = std::collections::BTreeSet::new();
    for o in observations {
        if let Some(k) = o.delta.index {
            if o.delta.amount != 0.0 {
                set.insert(k);
            }
        }
    }
    set.into_iter().collect()
}

/// Recovery error over an index set: √(Σ_{k∈D} (β̂(k) − β*(k))²). With
/// D = [d] this is the full ℓ2 error; with D = ∅ it is zero.
pub fn recovery_error(beta_hat: &[f64], beta_star: &[f64], d_set: &[usize]) -> Result<f64> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::DimensionMismatch {
            what: "recovery_error beta_hat vs beta_star",
            expected: beta_star.len(),
            got: beta_hat.len(),
        });
    }
    let mut sum = 0.0;
    for &k in d_set {
        if k >= beta_hat.len() {
            return Err(Error::InvalidParameter {
                what: format!(
                    "feature index {k} out of range for dimension {}",
                    beta_hat.len()
                ),
            });
        }
        let diff = beta_hat[k] - beta_star[k];
        sum += diff * diff;
    }
    Ok(sum.sqrt())
}

/// Absolute gap between the posted prediction and the true expected label
/// on a (possibly modified) feature vector: |β̂ᵀx̄ − β*ᵀx̄|.
pub fn prediction_gap(beta_hat: &[f64], beta_star: &[f64], x_bar: &[f64]) -> Result<f64> {
    if beta_hat.len() != x_bar.len() || beta_star.len() != x_bar.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction_gap vector lengths",
            expected: x_bar.len(),
            got: beta_hat.len().max(beta_star.len()),
        });
    }
    Ok((dot(beta_hat, x_bar) - dot(beta_star, x_bar)).abs())
}

/// First-order-condition residual ‖X̄ᵀ(X̄β̂ − Ȳ)‖∞; near zero exactly when
/// β̂ is a least-squares minimizer of the stacked system.
pub fn foc_residual(observations: &[Observation], beta_hat: &[f64]) -> Result<f64> {
    let (x, y) = stack_observations(observations)?;
    if beta_hat.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            what: "foc_residual beta_hat length",
            expected: x.cols(),
            got: beta_hat.len(),
        });
    }
    let pred = x.matvec(beta_hat)?;
    let resid: Vec<f64> = pred.iter().zip(&y).map(|(p, yi)| p - yi).collect();
    let grad = x.transpose().matvec(&resid)?;
    Ok(grad.iter().fold(0.0, |m, g| m.max(g.abs())))
}

// ----------------------------------------------------------------------
// martingale bound check
// ----------------------------------------------------------------------

/// Outcome of an empirical probability-bound check: `trials` simulated
/// statistics compared against a theoretical bound that may fail with
/// probability at most `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub trials: usize,
    pub violations: usize,
    /// nominal failure probability of the bound
    pub delta: f64,
    /// the theoretical bound value
    pub bound: f64,
    /// largest statistic observed across trials
    pub max_statistic: f64,
    pub mean_statistic: f64,
    /// statistical slack: two binomial standard errors, 2√(δ(1−δ)/trials)
    pub slack: f64,
    /// violations/trials ≤ δ + slack
    pub pass: bool,
}

/// Simulates `trials` bounded conditionally-centered sequences from the
/// generator and counts how often |Σ_{t≤τ} W_t| exceeds the bound
/// W_max·√(2τ ln(2/δ)).
///
/// The generator receives the shared stream and the trial index and must
/// return a length-τ sequence with every |W_t| ≤ W_max (checked; a
/// violation is an input error, not a bound violation).
pub fn martingale_bound_check<F>(
    mut generator: F,
    w_max: f64,
    tau: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundCheckReport>
where
    F: FnMut(&mut ChaCha12Rng, usize) -> Vec<f64>,
{
    if trials == 0 || tau == 0 {
        return Err(Error::InvalidParameter {
            what: "martingale_bound_check needs trials >= 1 and tau >= 1".into(),
        });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter {
            what: format!("delta must lie in (0, 1], got {delta}"),
        });
    }
    if !w_max.is_finite() || w_max < 0.0 {
        return Err(Error::InvalidParameter {
            what: format!("w_max must be finite and >= 0, got {w_max}"),
        });
    }

    let bound = w_max * (2.0 * tau as f64 * (2.0 / delta).ln()).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut max_statistic = 0.0f64;
    let mut sum_statistic = 0.0f64;
    for trial in 0..trials {
        let w = generator(&mut rng, trial);
        if w.len() != tau {
            return Err(Error::DimensionMismatch {
                what: "generated sequence length",
                expected: tau,
                got: w.len(),
            });
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite() || v.abs() > w_max + 1e-12) {
            return Err(Error::InvalidParameter {
                what: format!("generated increment {bad} exceeds w_max = {w_max}"),
            });
        }
        let statistic = w.iter().sum::<f64>().abs();
        if statistic > bound {
            violations += 1;
        }
        max_statistic = max_statistic.max(statistic);
        sum_statistic += statistic;
    }
    let rate = violations as f64 / trials as f64;
    let slack = 2.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
    Ok(BoundCheckReport {
        trials,
        violations,
        delta,
        bound,
        max_statistic,
        mean_statistic: sum_statistic / trials as f64,
        slack,
        pass: rate <= delta + slack,
    })
}

// ----------------------------------------------------------------------
// concentration report
// ----------------------------------------------------------------------

/// One empirical-vs-theoretical comparison. `pass` already accounts for
/// the direction of the inequality (upper bounds for noise correlations,
/// lower bound for the restricted eigenvalue).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCheck {
    pub check: String,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Per-run empirical verification of the two concentration ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub delta: f64,
    /// total rounds covered by the log
    pub tau: usize,
    pub checks: Vec<ConcentrationCheck>,
}

impl ConcentrationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Rows of the per-feature noise-correlation checks only.
    pub fn noise_correlation_checks(&self) -> impl Iterator<Item = &ConcentrationCheck> {
        self.checks
            .iter()
            .filter(|c| c.check.starts_with("noise_correlation"))
    }

    /// CSV rendering with header `check,statistic,bound,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,statistic,bound,pass\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.check, c.statistic, c.bound, c.pass
            ));
        }
        out
    }
}

/// Computes the empirical sides of the concentration statements from a run
/// that retained its observation log:
///
/// - per feature k, |Σ_{t≤τ} x̄_t(k)ε_t| against K′√(2τ ln(2d/δ))
///   (pass = statistic ≤ bound);
/// - the smallest eigenvalue of X̄ᵀX̄ restricted to 𝒱 = 𝒟+Σ against
///   λn/2 − κ′d²√(τ ln(6d/δ)) (pass = statistic ≥ bound). Skipped when 𝒱
///   is trivial.
pub fn concentration_report(
    run: &RunRecord,
    scenario: &Scenario,
    consts: &InstanceConstants,
    delta: f64,
) -> Result<ConcentrationReport> {
    let observations = run.observations.as_ref().ok_or(Error::EmptyHistory)?;
    if observations.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter {
            what: format!("delta must lie in (0,1), got {delta}"),
        });
    }
    let d = scenario.dim();
    let tau = observations.len();
    let tau_f = tau as f64;
    let (x, _) = stack_observations(observations)?;
    if x.cols() != d {
        return Err(Error::DimensionMismatch {
            what: "observation dimension vs scenario",
            expected: d,
            got: x.cols(),
        });
    }

    let mut checks = Vec::with_capacity(d + 1);

    // noise-correlation sums, one per feature
    let noise_bound = consts.k_prime * (2.0 * tau_f * (2.0 * d as f64 / delta).ln()).sqrt();
    for k in 0..d {
        let statistic: f64 = observations
            .iter()
            .map(|o| o.x_bar[k] * o.eps)
            .sum::<f64>()
            .abs();
        checks.push(ConcentrationCheck {
            check: format!("noise_correlation_feature_{k}"),
            statistic,
            bound: noise_bound,
            pass: statistic <= noise_bound + 1e-12,
        });
    }

    // restricted eigenvalue on V = D + Sigma
    let d_set = modified_set(observations);
    let sigma_span = scenario.features.sigma_span()?;
    let mut rows: Vec<Vec<f64>> = sigma_span.vectors().to_vec();
    for &k in &d_set {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        rows.push(e);
    }
    if !rows.is_empty() {
        let v = numerics::row_space_basis(&Matrix::from_rows(&rows)?)?;
        if !v.is_empty() {
            let statistic = numerics::min_eigenvalue_restricted(&x.gram(), &v)?;
            let n = run.config.epoch_size as f64;
            let kappa_prime = consts.kappa / 4.0;
            let bound = consts.lambda * n / 2.0
                - kappa_prime * (d as f64).powi(2) * (tau_f * (6.0 * d as f64 / delta).ln()).sqrt();
            checks.push(ConcentrationCheck {
                check: "restricted_min_eigenvalue".into(),
                statistic,
                bound,
                pass: statistic >= bound - 1e-12,
            });
        }
    }

    Ok(ConcentrationReport { delta, tau, checks })
}

// ----------------------------------------------------------------------
// tests
// ----------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentTieRule, Modification};
    use crate::learner::{run_dynamics, LearnerConfig, LseTieRule};
    use crate::scenarios::{build_example, instance_constants};
    use rand::Rng;

    fn obs(x_bar: Vec<f64>, y_bar: f64, delta: Modification) -> Observation {
        Observation {
            x: vec![0.0; x_bar.len()],
            delta,
            x_bar,
            y_bar,
            eps: 0.0,
            epoch: 1,
            t: 0,
        }
    }

    // -- modified_set ----------------------------------------------------

    #[test]
    fn modified_set_collects_nonzero_deltas() {
        assert_eq!(modified_set(&[]), Vec::<usize>::new());
        let log = vec![
            obs(vec![1.0, 0.0], 1.0, Modification::at(0, 1.0)),
            obs(vec![1.0, 0.0], 1.0, Modification::at(0, 1.0)),
        ];
        assert_eq!(modified_set(&log), vec![0]);
        let log = vec![
            obs(vec![0.0, 1.0, 0.0], 0.0, Modification::at(1, 0.5)),
            obs(vec![0.0, 0.0, -1.0], 0.0, Modification::at(2, -1.0)),
            obs(vec![0.0, 0.0, 0.0], 0.0, Modification::none()),
            obs(vec![0.0, 2.0, 0.0], 0.0, Modification::at(1, 2.0)),
        ];
        assert_eq!(modified_set(&log), vec![1, 2]);
    }

    // -- recovery_error & prediction_gap -----------------------------------

    #[test]
    fn recovery_error_formula_cases() {
        let bh = [1.0, 0.0, 3.0];
        let bs = [1.0, 2.0, 0.0];
        assert_eq!(recovery_error(&bh, &bh, &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(recovery_error(&bh, &bs, &[]).unwrap(), 0.0);
        let err = recovery_error(&bh, &bs, &[1, 2]).unwrap();
        assert!((err - 13.0f64.sqrt()).abs() <= 1e-12, "err = {err}");
        // full-set call equals the plain l2 distance
        let full = recovery_error(&bh, &bs, &[0, 1, 2]).unwrap();
        assert!((full - 13.0f64.sqrt()).abs() <= 1e-12);
        assert!(recovery_error(&bh, &bs, &[7]).is_err());
        assert!(recovery_error(&bh, &bs[..2], &[0]).is_err());
    }

    #[test]
    fn recovery_error_is_monotone_in_the_index_set() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = rng.gen_range(2..6);
            let bh: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let bs: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let small: Vec<usize> = (0..d).filter(|_| rng.gen_bool(0.4)).collect();
            let mut large = small.clone();
            for k in 0..d {
                if !large.contains(&k) && rng.gen_bool(0.5) {
                    large.push(k);
                }
            }
            large.sort_unstable();
            let e_small = recovery_error(&bh, &bs, &small).unwrap();
            let e_large = recovery_error(&bh, &bs, &large).unwrap();
            assert!(e_small <= e_large + 1e-12);
        }
    }

    #[test]
    fn prediction_gap_cases() {
        assert_eq!(
            prediction_gap(&[1.0, 0.0], &[1.0, 0.0], &[0.3, 0.9]).unwrap(),
            0.0
        );
        assert_eq!(
            prediction_gap(&[0.5, 0.5], &[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            0.5
        );
        // duplicated-feature scenario: posted (a, 1−a), x̄ = (x₁, x₁+Δ₂)
        let (a, x1, d2) = (0.25, 0.7, 2.0);
        let gap = prediction_gap(&[a, 1.0 - a], &[1.0, 0.0], &[x1, x1 + d2]).unwrap();
        assert!((gap - (1.0 - a) * d2).abs() <= 1e-12, "gap = {gap}");
        assert!(prediction_gap(&[1.0], &[1.0, 0.0], &[0.0, 0.0]).is_err());
    }

    // -- foc_residual ---------------------------------------------------------

    #[test]
    fn foc_residual_vanishes_at_least_squares_solutions() {
        let log = vec![
            obs(vec![2.0, 1.0, 1.0], 2.0, Modification::none()),
            obs(vec![3.0, 2.0, 2.0], 3.0, Modification::none()),
        ];
        let fit = crate::learner::lse_update(&log).unwrap();
        let r = foc_residual(&log, &fit).unwrap();
        assert!(r <= 1e-8 * (1.0 + 3.0), "residual {r}");
        // beta* itself fits the noiseless consistent system exactly
        assert_eq!(foc_residual(&log, &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        // a row-space perturbation must show up in the gradient
        let bumped: Vec<f64> = fit
            .iter()
            .zip(&[2.0, 1.0, 1.0])
            .map(|(f, r)| f + 0.1 * r / 6.0f64.sqrt())
            .collect();
        assert!(foc_residual(&log, &bumped).unwrap() > 1e-6);
        assert!(foc_residual(&[], &[1.0]).is_err());
        assert!(foc_residual(&log, &[1.0]).is_err());
    }

    // -- martingale_bound_check --------------------------------------------------

    #[test]
    fn zero_sequences_never_violate() {
        let report = martingale_bound_check(|_, _| vec![0.0; 50], 1.0, 50, 0.05, 100, 1).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.max_statistic, 0.0);
        assert!(report.pass);
        assert!(report.bound > 0.0);
    }

    #[test]
    fn rademacher_sequences_respect_azuma() {
        let report = martingale_bound_check(
            |rng, _| {
                (0..100)
                    .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                    .collect()
            },
            1.0,
            100,
            0.05,
            2000,
            42,
        )
        .unwrap();
        assert!(report.pass, "rate {} > {}", report.violations, report.delta);
        assert!(report.violations <= report.trials);
        assert_eq!(
            report.pass,
            (report.violations as f64 / report.trials as f64) <= report.delta + report.slack
        );
        // the bound should not be wildly loose either: statistics reach a
        // decent fraction of it
        assert!(report.max_statistic > 0.3 * report.bound);
    }

    #[test]
    fn vacuous_delta_passes_trivially() {
        let report = martingale_bound_check(
            |rng, _| {
                (0..10)
                    .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                    .collect()
            },
            1.0,
            10,
            1.0,
            50,
            3,
        )
        .unwrap();
        assert!(report.pass, "rate can never exceed 1 + slack");
    }

    #[test]
    fn martingale_check_rejects_nonconforming_generators() {
        // increments exceeding w_max are an input error
        assert!(martingale_bound_check(|_, _| vec![2.0; 10], 1.0, 10, 0.05, 10, 0).is_err());
        // wrong length
        assert!(martingale_bound_check(|_, _| vec![0.0; 9], 1.0, 10, 0.05, 10, 0).is_err());
        // bad arguments
        assert!(martingale_bound_check(|_, _| vec![0.0; 10], 1.0, 10, 0.0, 10, 0).is_err());
        assert!(martingale_bound_check(|_, _| vec![0.0; 10], 1.0, 10, 0.05, 0, 0).is_err());
    }

    #[test]
    fn martingale_check_is_deterministic_in_the_seed() {
        let gen = |rng: &mut ChaCha12Rng, _: usize| -> Vec<f64> {
            (0..20).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        };
        let a = martingale_bound_check(gen, 1.0, 20, 0.1, 200, 9).unwrap();
        let b = martingale_bound_check(gen, 1.0, 20, 0.1, 200, 9).unwrap();
        assert_eq!(a, b);
    }

    // -- concentration_report ----------------------------------------------------

    fn run_with_log(lse: LseTieRule, alpha: f64, seed: u64) -> (RunRecord, Scenario) {
        let ex = build_example(4).unwrap();
        let cfg = LearnerConfig {
            epoch_size: 5,
            num_epochs: 2,
            alpha,
            beta0: Some(ex.beta0.clone()),
            lse_tie_rule: lse,
            agent_tie_rule: AgentTieRule::LowestIndex,
            seed,
            keep_observations: true,
        };
        let run = run_dynamics(&ex.scenario, &cfg).unwrap();
        (run, ex.scenario)
    }

    #[test]
    fn noiseless_runs_have_zero_noise_correlations() {
        let (run, scenario) = run_with_log(LseTieRule::Algorithm2, 3.0, 1);
        let consts = instance_constants(&scenario).unwrap();
        let report = concentration_report(&run, &scenario, &consts, 0.1).unwrap();
        assert_eq!(report.tau, 10);
        for c in report.noise_correlation_checks() {
            assert_eq!(c.statistic, 0.0);
            assert!(c.pass);
        }
        assert!(report.all_pass());
    }

    #[test]
    fn restricted_eigenvalue_on_orthogonal_rows_equals_the_epoch_size() {
        // after two epochs the log holds 5 copies each of (1,0) and (0,1):
        // X̄ᵀX̄ = diag(5,5), V = R², min eig = n = 5
        let (run, scenario) = run_with_log(LseTieRule::Algorithm2, 3.0, 1);
        let consts = instance_constants(&scenario).unwrap();
        let report = concentration_report(&run, &scenario, &consts, 0.1).unwrap();
        let eig = report
            .checks
            .iter()
            .find(|c| c.check == "restricted_min_eigenvalue")
            .expect("V is nontrivial after modifications");
        assert!(
            (eig.statistic - 5.0).abs() <= 1e-9,
            "stat {}",
            eig.statistic
        );
        assert!(eig.statistic >= run.config.epoch_size as f64 - 1e-9);
        assert!(eig.pass, "desk-scale bound is far below the statistic");
    }

    #[test]
    fn report_requires_the_observation_log() {
        let ex = build_example(4).unwrap();
        let cfg = LearnerConfig {
            epoch_size: 5,
            num_epochs: 1,
            alpha: 0.0,
            beta0: Some(ex.beta0.clone()),
            lse_tie_rule: LseTieRule::MinNorm,
            agent_tie_rule: AgentTieRule::LowestIndex,
            seed: 1,
            keep_observations: false,
        };
        let run = run_dynamics(&ex.scenario, &cfg).unwrap();
        let consts = instance_constants(&ex.scenario).unwrap();
        assert!(matches!(
            concentration_report(&run, &ex.scenario, &consts, 0.1),
            Err(Error::EmptyHistory)
        ));
    }

    #[test]
    fn stored_d_set_matches_recomputation_from_the_log() {
        let s = crate::scenarios::random_scenario(3, 2, 2, 0.25, 8).unwrap();
        let cfg = LearnerConfig {
            epoch_size: 4,
            num_epochs: 6,
            alpha: 2.0,
            beta0: None,
            lse_tie_rule: LseTieRule::Algorithm2,
            agent_tie_rule: AgentTieRule::UniformRandom,
            seed: 31,
            keep_observations: true,
        };
        let run = run_dynamics(&s, &cfg).unwrap();
        let log = run.observations.as_ref().unwrap();
        for ep in &run.epochs {
            let upto: Vec<Observation> = log.iter().filter(|o| o.epoch <= ep.e).cloned().collect();
            assert_eq!(modified_set(&upto), ep.d_set, "epoch {}", ep.e);
        }
    }

    #[test]
    fn csv_rendering_has_one_row_per_check() {
        let (run, scenario) = run_with_log(LseTieRule::MinNorm, 0.0, 2);
        let consts = instance_constants(&scenario).unwrap();
        let report = concentration_report(&run, &scenario, &consts, 0.2).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "check,statistic,bound,pass");
        assert_eq!(lines.len(), 1 + report.checks.len());
        for (line, check) in lines[1..].iter().zip(&report.checks) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 4);
            assert_eq!(fields[0], check.check);
            assert_eq!(fields[1].parse::<f64>().unwrap(), check.statistic);
            assert_eq!(fields[3].parse::<bool>().unwrap(), check.pass);
        }
    }

    #[test]
    fn foc_residual_small_for_posted_models_in_noiseless_runs() {
        // both refit modes must post least-squares minimizers
        for (mode, alpha) in [(LseTieRule::MinNorm, 0.0), (LseTieRule::Algorithm2, 3.0)] {
            let (run, _) = run_with_log(mode, alpha, 4);
            let log = run.observations.as_ref().unwrap();
            for ep in &run.epochs {
                let upto: Vec<Observation> =
                    log.iter().filter(|o| o.epoch <= ep.e).cloned().collect();
                let r = foc_residual(&upto, &ep.beta_hat).unwrap();
                assert!(r <= 1e-8, "mode {mode:?} epoch {} residual {r}", ep.e);
            }
        }
    }
}
