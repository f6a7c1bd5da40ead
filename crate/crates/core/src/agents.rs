//! Agent-side behavior.
//!
//! Each round an agent draws a cost/budget pair (c_t, B_t) from the
//! scenario's menu, sees the posted model β̂, and plays the budgeted best
//! response
//!
//! Δ_t = sgn(β̂(k*)) · (B_t / c_t(k*)) · e_{k*},   k* ∈ argmax_j |β̂(j)| / c_t(j),
//!
//! i.e. it spends its entire budget on the single feature with the best
//! influence-per-cost, in the direction that raises its predicted score.
//! The modification is a real intervention: the label responds through β*,
//! ȳ_t = β*ᵀ(x_t + Δ_t) + ε_t.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenarios::{CostModel, NoiseKind, TrueModel};

// ----------------------------------------------------------------------
// domain types
// ----------------------------------------------------------------------

/// A single-feature modification: at most one coordinate of the expanded
/// d-vector is nonzero, and its magnitude exhausts the budget (B/c(k)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    /// modified feature, or `None` for the empty modification
    pub index: Option<usize>,
    /// signed amount added to that feature (0 when `index` is `None`)
    pub amount: f64,
}

impl Modification {
    /// The empty modification (played when β̂ = 0).
    pub fn none() -> Self {
        Modification {
            index: None,
            amount: 0.0,
        }
    }

    pub fn at(index: usize, amount: f64) -> Self {
        Modification {
            index: Some(index),
            amount,
        }
    }

    pub fn is_none(&self) -> bool {
        self.index.is_none()
    }

    /// Dense d-vector form of Δ.
    pub fn expand(&self, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        if let Some(k) = self.index {
            v[k] = self.amount;
        }
        v
    }
}

/// One observed round: latent features, the agent's move, and the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// unmodified features x_t
    pub x: Vec<f64>,
    /// the agent's modification Δ_t
    pub delta: Modification,
    /// modified features x̄_t = x_t + Δ_t
    pub x_bar: Vec<f64>,
    /// realized label ȳ_t = β*ᵀx̄_t + ε_t
    pub y_bar: f64,
    /// realized noise ε_t
    pub eps: f64,
    /// epoch index E (1-based: rounds (E−1)n+1 … En)
    pub epoch: usize,
    /// round index t (0-based within the run)
    pub t: usize,
}

/// How an agent resolves ties among features that share the maximal
/// influence-per-cost ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentTieRule {
    /// always the smallest tied index (reproducible golden runs)
    LowestIndex,
    /// uniform over the tied indices, drawn from the run's stream
    #[default]
    UniformRandom,
}

// ----------------------------------------------------------------------
// operations
// ----------------------------------------------------------------------

/// Draws one cost type: type i with probability πⁱ, by inverting the
/// cumulative distribution at a single uniform draw.
pub fn sample_cost_budget<'a, R: Rng>(
    costs: &'a CostModel,
    rng: &mut R,
) -> (&'a [f64], f64, usize) {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, t) in costs.types.iter().enumerate() {
        cum += t.pi;
        if u < cum {
            return (&t.c, t.b, i);
        }
    }
    // guard against cumulative rounding ever so slightly below 1
    let last = costs.types.len() - 1;
    (&costs.types[last].c, costs.types[last].b, last)
}

/// The budgeted best response to a posted model.
///
/// Maximizes β̂ᵀΔ subject to Σ_k c(k)|Δ(k)| ≤ B: all budget goes to one
/// feature k* ∈ argmax_j |β̂(j)|/c(j) with sign sgn(β̂(k*)). β̂ = 0 makes
/// every feasible move score zero and returns the empty modification.
pub fn best_response<R: Rng>(
    beta_hat: &[f64],
    c: &[f64],
    b: f64,
    tie_rule: AgentTieRule,
    rng: &mut R,
) -> Result<Modification> {
    if beta_hat.len() != c.len() {
        return Err(Error::DimensionMismatch {
            what: "best_response beta_hat vs cost vector",
            expected: c.len(),
            got: beta_hat.len(),
        });
    }
    if !c.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::InvalidParameter {
            what: "best_response requires all costs > 0".into(),
        });
    }
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::InvalidParameter {
            what: format!("best_response requires budget > 0, got {b}"),
        });
    }
    if !beta_hat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "beta_hat" });
    }

    let ratios: Vec<f64> = beta_hat
        .iter()
        .zip(c)
        .map(|(bh, ck)| bh.abs() / ck)
        .collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    if max_ratio == 0.0 {
        // β̂ = 0: every feasible modification is score-equivalent
        return Ok(Modification::none());
    }
    let tied: Vec<usize> = (0..ratios.len())
        .filter(|&j| ratios[j] == max_ratio)
        .collect();
    let k = match tie_rule {
        AgentTieRule::LowestIndex => tied[0],
        AgentTieRule::UniformRandom => {
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.gen_range(0..tied.len())]
            }
        }
    };
    let amount = beta_hat[k].signum() * b / c[k];
    Ok(Modification::at(k, amount))
}

/// x̄ = x + Δ; every other coordinate is untouched.
pub fn apply_modification(x: &[f64], m: &Modification) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    if let Some(k) = m.index {
        if k >= x.len() {
            return Err(Error::InvalidParameter {
                what: format!(
                    "modification index {k} out of range for dimension {}",
                    x.len()
                ),
            });
        }
        out[k] += m.amount;
    }
    Ok(out)
}

/// Realizes the label ȳ = β*ᵀx̄ + ε with ε drawn from the model's noise
/// family (independent of x̄, supported on [−σ, σ], mean zero).
pub fn realize_label<R: Rng>(model: &TrueModel, x_bar: &[f64], rng: &mut R) -> Result<(f64, f64)> {
    if x_bar.len() != model.beta_star.len() {
        return Err(Error::DimensionMismatch {
            what: "realize_label features vs beta_star",
            expected: model.beta_star.len(),
            got: x_bar.len(),
        });
    }
    let eps = sample_noise(model.sigma, model.noise_kind, rng);
    let y = crate::numerics::dot(&model.beta_star, x_bar) + eps;
    Ok((y, eps))
}

/// One noise draw: uniform on [−σ,σ], or N(0,(σ/2)²) conditioned on
/// [−σ,σ], or exactly zero.
fn sample_noise<R: Rng>(sigma: f64, kind: NoiseKind, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    match kind {
        NoiseKind::Zero => 0.0,
        NoiseKind::Uniform => rng.gen_range(-sigma..=sigma),
        NoiseKind::TruncatedGaussian => loop {
            let eps = standard_normal(rng) * sigma / 2.0;
            if eps.abs() <= sigma {
                return eps;
            }
        },
    }
}

/// One N(0,1) draw via the Box–Muller transform.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let mut u1: f64 = rng.gen();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ----------------------------------------------------------------------
// tests
// ----------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{build_example, CostType};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    // -- sample_cost_budget -------------------------------------------------

    #[test]
    fn single_type_is_always_drawn() {
        let costs = CostModel::new(vec![CostType {
            c: vec![1.0, 2.0],
            b: 3.0,
            pi: 1.0,
        }])
        .unwrap();
        let mut r = rng(0);
        for _ in 0..100 {
            let (c, b, i) = sample_cost_budget(&costs, &mut r);
            assert_eq!(i, 0);
            assert_eq!(c, &[1.0, 2.0]);
            assert_eq!(b, 3.0);
        }
    }

    #[test]
    fn two_types_draw_with_stated_frequencies() {
        let costs = CostModel::new(vec![
            CostType {
                c: vec![1.0],
                b: 1.0,
                pi: 0.5,
            },
            CostType {
                c: vec![2.0],
                b: 1.0,
                pi: 0.5,
            },
        ])
        .unwrap();
        let mut r = rng(42);
        let n = 10_000;
        let mut count0 = 0usize;
        for _ in 0..n {
            let (_, _, i) = sample_cost_budget(&costs, &mut r);
            if i == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.03, "frequency {freq}");
    }

    #[test]
    fn cost_draws_are_deterministic_in_the_seed() {
        let costs = CostModel::new(vec![
            CostType {
                c: vec![1.0],
                b: 1.0,
                pi: 0.25,
            },
            CostType {
                c: vec![2.0],
                b: 1.0,
                pi: 0.75,
            },
        ])
        .unwrap();
        let seq = |seed| -> Vec<usize> {
            let mut r = rng(seed);
            (0..50)
                .map(|_| sample_cost_budget(&costs, &mut r).2)
                .collect()
        };
        assert_eq!(seq(7), seq(7));
        assert_ne!(seq(7), seq(8), "different seeds should differ somewhere");
    }

    // -- best_response ------------------------------------------------------

    #[test]
    fn best_response_spends_the_budget_on_the_top_ratio() {
        let mut r = rng(0);
        // ratios (0.9, 0.4): feature 1 wins, pushed up by B/c = 1
        let m = best_response(
            &[0.9, 0.4],
            &[1.0, 1.0],
            1.0,
            AgentTieRule::LowestIndex,
            &mut r,
        )
        .unwrap();
        assert_eq!(m, Modification::at(0, 1.0));
        // ratios (0.5, 1, 0): feature 2 wins, pushed down by B/c = 2
        let m = best_response(
            &[0.5, -2.0, 0.0],
            &[1.0, 2.0, 1.0],
            4.0,
            AgentTieRule::LowestIndex,
            &mut r,
        )
        .unwrap();
        assert_eq!(m, Modification::at(1, -2.0));
    }

    #[test]
    fn best_response_on_cheap_irrelevant_feature() {
        // posted model with tiny weight on the causal feature and a cheap
        // non-causal one: agents move the non-causal feature
        let mut r = rng(0);
        let m = best_response(
            &[0.0, 1.0],
            &[1.0, 1.0],
            1.0,
            AgentTieRule::LowestIndex,
            &mut r,
        )
        .unwrap();
        assert_eq!(m, Modification::at(1, 1.0));
        let m = best_response(
            &[0.05, 0.95],
            &[10.0, 1.0],
            1.0,
            AgentTieRule::LowestIndex,
            &mut r,
        )
        .unwrap();
        assert_eq!(m, Modification::at(1, 1.0));
    }

    #[test]
    fn zero_model_yields_no_modification() {
        let mut r = rng(0);
        let m = best_response(
            &[0.0, 0.0],
            &[1.0, 1.0],
            1.0,
            AgentTieRule::UniformRandom,
            &mut r,
        )
        .unwrap();
        assert!(m.is_none());
        assert_eq!(m.amount, 0.0);
        assert_eq!(m.expand(2), vec![0.0, 0.0]);
    }

    #[test]
    fn ties_resolve_by_rule() {
        // |β̂|/c identical on both features
        let mut r = rng(0);
        let m = best_response(
            &[1.0, -1.0],
            &[1.0, 1.0],
            1.0,
            AgentTieRule::LowestIndex,
            &mut r,
        )
        .unwrap();
        assert_eq!(m, Modification::at(0, 1.0));

        let mut seen = [false, false];
        for seed in 0..64 {
            let mut r = rng(seed);
            let m = best_response(
                &[1.0, -1.0],
                &[1.0, 1.0],
                1.0,
                AgentTieRule::UniformRandom,
                &mut r,
            )
            .unwrap();
            let k = m.index.unwrap();
            seen[k] = true;
            // sign follows the chosen coordinate
            assert_eq!(m.amount, if k == 0 { 1.0 } else { -1.0 });
        }
        assert!(
            seen[0] && seen[1],
            "uniform tie rule should hit both features"
        );
    }

    #[test]
    fn best_response_rejects_bad_inputs() {
        let mut r = rng(0);
        assert!(best_response(&[1.0], &[0.0], 1.0, AgentTieRule::LowestIndex, &mut r).is_err());
        assert!(best_response(&[1.0], &[-1.0], 1.0, AgentTieRule::LowestIndex, &mut r).is_err());
        assert!(best_response(&[1.0], &[1.0], 0.0, AgentTieRule::LowestIndex, &mut r).is_err());
        assert!(
            best_response(&[1.0, 2.0], &[1.0], 1.0, AgentTieRule::LowestIndex, &mut r).is_err()
        );
        assert!(
            best_response(&[f64::NAN], &[1.0], 1.0, AgentTieRule::LowestIndex, &mut r).is_err()
        );
    }

    // -- apply_modification ---------------------------------------------------

    #[test]
    fn apply_adds_exactly_one_coordinate() {
        assert_eq!(
            apply_modification(&[0.0, 0.0], &Modification::at(0, 1.0)).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(
            apply_modification(&[0.2, -0.1], &Modification::at(1, -0.5)).unwrap(),
            vec![0.2, -0.6]
        );
        assert_eq!(
            apply_modification(&[0.3, 0.7], &Modification::none()).unwrap(),
            vec![0.3, 0.7]
        );
        assert!(apply_modification(&[0.0], &Modification::at(3, 1.0)).is_err());
    }

    // -- realize_label ---------------------------------------------------------

    #[test]
    fn noiseless_labels_are_exact_inner_products() {
        let model = TrueModel::new(vec![1.0, 2.0], 0.0, NoiseKind::Zero).unwrap();
        let mut r = rng(0);
        assert_eq!(
            realize_label(&model, &[1.0, 0.0], &mut r).unwrap(),
            (1.0, 0.0)
        );
        assert_eq!(
            realize_label(&model, &[0.0, 1.0], &mut r).unwrap(),
            (2.0, 0.0)
        );
        assert!(realize_label(&model, &[1.0], &mut r).is_err());
    }

    #[test]
    fn uniform_noise_is_bounded_and_centered() {
        let model = TrueModel::new(vec![0.0, 0.0], 0.3, NoiseKind::Uniform).unwrap();
        let mut r = rng(17);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (y, eps) = realize_label(&model, &[0.5, 0.5], &mut r).unwrap();
            assert!(eps.abs() <= 0.3, "eps = {eps}");
            assert_eq!(y, eps, "beta* = 0 makes the label pure noise");
            sum += eps;
        }
        assert!((sum / n as f64).abs() <= 0.01, "mean {}", sum / n as f64);
    }

    #[test]
    fn truncated_gaussian_noise_matches_its_moments() {
        let model = TrueModel::new(vec![0.0], 1.0, NoiseKind::TruncatedGaussian).unwrap();
        let mut r = rng(5);
        let n = 50_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let (_, eps) = realize_label(&model, &[0.0], &mut r).unwrap();
            assert!(eps.abs() <= 1.0, "eps = {eps}");
            sum += eps;
            sum_sq += eps * eps;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() <= 0.01, "mean {mean}");
        // N(0, 0.25) truncated at ±2 standard deviations has sd ≈ 0.4398
        assert!((std - 0.4398).abs() <= 0.02, "std {std}");
    }

    #[test]
    fn label_realization_consumes_no_randomness_when_noiseless() {
        let model = TrueModel::new(vec![1.0], 0.0, NoiseKind::Uniform).unwrap();
        let mut r1 = rng(9);
        let mut r2 = rng(9);
        let _ = realize_label(&model, &[0.4], &mut r1).unwrap();
        let a: f64 = r1.gen();
        let b: f64 = r2.gen();
        assert_eq!(a, b, "sigma = 0 must not advance the stream");
    }

    // -- end-to-end round (example texture) ----------------------------

    #[test]
    fn example1_round_under_misweighted_model() {
        // Example-1 features with posted β̂ = (0,1): every agent adds +1 to
        // feature 2, so x̄ = (x₁, x₁ + 1)
        let ex = build_example(1).unwrap();
        let mut r = rng(2);
        for _ in 0..20 {
            let x = crate::scenarios::sample_features(&ex.scenario.features, &mut r);
            let (c, b, _) = sample_cost_budget(&ex.scenario.costs, &mut r);
            let m = best_response(&[0.0, 1.0], c, b, AgentTieRule::LowestIndex, &mut r).unwrap();
            let x_bar = apply_modification(&x, &m).unwrap();
            assert_eq!(x_bar[0], x[0]);
            assert_eq!(x_bar[1], x[0] + 1.0);
            let (y, eps) = realize_label(&ex.scenario.model, &x_bar, &mut r).unwrap();
            assert_eq!(eps, 0.0);
            assert_eq!(y, x_bar[0], "beta* = (1,0) reads the first coordinate");
        }
    }
}
