//! Problem-instance construction.
//!
//! A [`Scenario`] bundles the three primitives of the strategic-regression
//! setting:
//!
//! - a [`TrueModel`]: labels are ȳ = β*ᵀx̄ + ε with |ε| ≤ σ and E[ε|x] = 0;
//! - a [`FeatureDistribution`]: unmodified features x = Lz with latent
//!   z i.i.d. uniform on [−1,1]^r, so Σ = (1/3)LLᵀ (possibly rank-deficient,
//!   which is the interesting case — non-causal features that are linear
//!   images of causal ones);
//! - a [`CostModel`]: each agent draws a cost vector and budget (cⁱ, Bⁱ)
//!   with probability πⁱ from a finite menu.
//!
//! The module also builds the four worked examples, random instances, the
//! subspace constant λ(Σ), the instance constants K′, K, λ, γ, κ, and the
//! two thresholds (on α and on the epoch size) that govern full recovery
//! under the tie-breaking scheme.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, dot, Basis, Matrix};

/// Tolerance for Σπⁱ = 1 and other constructed-value checks.
const PROB_TOL: f64 = 1e-9;

/// Rows of a loading matrix may exceed unit ℓ1 norm by at most this much
/// (absorbs rounding when loading files).
const ROW_L1_TOL: f64 = 1e-9;

// ----------------------------------------------------------------------
// domain types
// ----------------------------------------------------------------------

/// Distribution family of the label noise ε. Every family is supported on
/// [−σ, σ] with mean zero, independent of the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// uniform on [−σ, σ]
    Uniform,
    /// N(0, (σ/2)²) conditioned on [−σ, σ]
    TruncatedGaussian,
    /// ε ≡ 0 (noiseless)
    Zero,
}

/// True latent regression model: ȳ = β*ᵀx̄ + ε.
///
/// The model assumption is β* ∈ [−1,1]^d; the box is not hard-enforced
/// because the worked counterexample (Example 4) deliberately steps outside
/// it with β* = (1, 2). `random_scenario` always draws inside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub beta_star: Vec<f64>,
    pub sigma: f64,
    pub noise_kind: NoiseKind,
}

impl TrueModel {
    pub fn new(beta_star: Vec<f64>, sigma: f64, noise_kind: NoiseKind) -> Result<Self> {
        let m = TrueModel {
            beta_star,
            sigma,
            noise_kind,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_star.is_empty() {
            return Err(Error::InvalidParameter {
                what: "beta_star must be nonempty".into(),
            });
        }
        if !self.beta_star.iter().all(|b| b.is_finite()) {
            return Err(Error::NonFinite { what: "beta_star" });
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidParameter {
                what: format!("sigma must be finite and >= 0, got {}", self.sigma),
            });
        }
        Ok(())
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.beta_star.len()
    }
}

/// Latent-variable family for the unmodified features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    /// z with i.i.d. coordinates uniform on [−1, 1]
    UniformIid,
}

/// Unmodified features x = Lz with z i.i.d. uniform on [−1,1]^r.
///
/// Mean zero by construction; covariance Σ = (1/3)LLᵀ of rank at most r
/// (equal to r for generic loadings; Example 4's zero loading is the
/// degenerate exception). Each row of L has ℓ1 norm at most 1, so every
/// sample lies in [−1,1]^d.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistribution {
    pub d: usize,
    pub r: usize,
    pub loading: Matrix,
    pub latent_kind: LatentKind,
}

impl FeatureDistribution {
    pub fn new(d: usize, r: usize, loading: Matrix, latent_kind: LatentKind) -> Result<Self> {
        let f = FeatureDistribution {
            d,
            r,
            loading,
            latent_kind,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.r == 0 || self.r > self.d {
            return Err(Error::InvalidParameter {
                what: format!("need 1 <= r <= d, got d = {}, r = {}", self.d, self.r),
            });
        }
        if self.loading.rows() != self.d || self.loading.cols() != self.r {
            return Err(Error::DimensionMismatch {
                what: "loading matrix rows x cols",
                expected: self.d,
                got: self.loading.rows(),
            });
        }
        for i in 0..self.d {
            let l1: f64 = self.loading.row(i).iter().map(|v| v.abs()).sum();
            if l1 > 1.0 + ROW_L1_TOL {
                return Err(Error::InvalidParameter {
                    what: format!("loading row {i} has l1 norm {l1} > 1"),
                });
            }
        }
        Ok(())
    }

    /// Feature covariance Σ = (1/3)LLᵀ.
    pub fn covariance(&self) -> Matrix {
        let lt = self.loading.transpose();
        let mut s = self
            .loading
            .matmul(&lt)
            .expect("dims agree by construction");
        for i in 0..self.d {
            for j in 0..self.d {
                s.set(i, j, s.get(i, j) / 3.0);
            }
        }
        s
    }

    /// Orthonormal basis of the Σ-span (the column space of L).
    pub fn sigma_span(&self) -> Result<Basis> {
        numerics::row_space_basis(&self.loading.transpose())
    }
}

/// One admissible cost/budget pair with its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostType {
    /// per-feature modification costs, all > 0
    pub c: Vec<f64>,
    /// budget, > 0
    #[serde(rename = "B")]
    pub b: f64,
    /// probability of drawing this type
    pub pi: f64,
}

/// Discrete cost/budget distribution 𝒞 = {(cⁱ, Bⁱ, πⁱ)}.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub types: Vec<CostType>,
}

impl CostModel {
    pub fn new(types: Vec<CostType>) -> Result<Self> {
        let m = CostModel { types };
        m.validate_dim(None)?;
        Ok(m)
    }

    /// Validates the cost model, optionally also requiring each cost vector
    /// to have exactly `d` entries.
    pub fn validate_dim(&self, d: Option<usize>) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::InvalidParameter {
                what: "cost model needs at least one type".into(),
            });
        }
        let mut total = 0.0;
        for (i, t) in self.types.iter().enumerate() {
            if let Some(d) = d {
                if t.c.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "cost vector length",
                        expected: d,
                        got: t.c.len(),
                    });
                }
            }
            if t.c.is_empty() || !t.c.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(Error::InvalidParameter {
                    what: format!("cost type {i}: all costs must be finite and > 0"),
                });
            }
            if !t.b.is_finite() || t.b <= 0.0 {
                return Err(Error::InvalidParameter {
                    what: format!("cost type {i}: budget must be finite and > 0"),
                });
            }
            if !t.pi.is_finite() || t.pi <= 0.0 {
                return Err(Error::InvalidParameter {
                    what: format!("cost type {i}: probability must be > 0"),
                });
            }
            total += t.pi;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidParameter {
                what: format!("type probabilities sum to {total}, expected 1"),
            });
        }
        Ok(())
    }

    /// Largest budget-to-cost ratio max_{i,k} Bⁱ/cⁱ(k).
    pub fn max_ratio(&self) -> f64 {
        self.types
            .iter()
            .flat_map(|t| t.c.iter().map(move |c| t.b / c))
            .fold(0.0, f64::max)
    }
}

/// A full problem instance: true model + feature distribution + costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: TrueModel,
    pub features: FeatureDistribution,
    pub costs: CostModel,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        model: TrueModel,
        features: FeatureDistribution,
        costs: CostModel,
    ) -> Result<Self> {
        let s = Scenario {
            name: name.into(),
            model,
            features,
            costs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.features.validate()?;
        self.costs.validate_dim(Some(self.features.d))?;
        if self.model.dim() != self.features.d {
            return Err(Error::DimensionMismatch {
                what: "beta_star length vs feature dimension",
                expected: self.features.d,
                got: self.model.dim(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.features.d
    }

    // -- JSON file format ------------------------------------------------

    /// Serializes to the flat scenario file format
    /// `{name, d, r, beta_star, sigma, noise_kind, loading, cost_types}`.
    pub fn to_json(&self) -> Result<String> {
        let file = ScenarioFile::from(self);
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses and validates the flat scenario file format.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.into_scenario()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }
}

/// Flat on-disk form of a scenario; loading rows are plain vectors so the
/// round trip is lossless at full floating-point precision.
#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    name: String,
    d: usize,
    r: usize,
    beta_star: Vec<f64>,
    sigma: f64,
    noise_kind: NoiseKind,
    loading: Vec<Vec<f64>>,
    cost_types: Vec<CostType>,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            name: s.name.clone(),
            d: s.features.d,
            r: s.features.r,
            beta_star: s.model.beta_star.clone(),
            sigma: s.model.sigma,
            noise_kind: s.model.noise_kind,
            loading: (0..s.features.d)
                .map(|i| s.features.loading.row(i).to_vec())
                .collect(),
            cost_types: s.costs.types.clone(),
        }
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let loading = Matrix::from_rows(&self.loading)?;
        Scenario::new(
            self.name,
            TrueModel::new(self.beta_star, self.sigma, self.noise_kind)?,
            FeatureDistribution::new(self.d, self.r, loading, LatentKind::UniformIid)?,
            CostModel::new(self.cost_types)?,
        )
    }
}

/// Instance-specific constants of the recovery theorems, computed
/// conservatively from scenario parameters:
///
/// - K′ = (1 + max_{i,k} Bⁱ/cⁱ(k))·σ and K = 4K′;
/// - λ(Σ) = min over nonempty D ⊆ [d] of λ(𝒟, Σ) (lower-bound mode);
/// - λ = (λ(Σ)/2)·min(λ_r, min_{i,k} πⁱ(Bⁱ/cⁱ(k))²), where λ_r is the
///   smallest nonzero eigenvalue of Σ (skipped when Σ = 0);
/// - γ = 1 + max_i max_{k,j} cⁱ(k)/cⁱ(j);
/// - κ = 4κ′ with κ′ = λ(Σ) + max(C₁, (λ(Σ)/2)·C₂/d + C₃), using the
///   conservative stand-ins C₁ = C₃ = 4·max_ratio and C₂ = √2·max_ratio².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConstants {
    pub k_prime: f64,
    pub k_big: f64,
    pub lambda_sigma: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub max_ratio: f64,
    pub lambda_r: f64,
}

// ----------------------------------------------------------------------
// sampling
// ----------------------------------------------------------------------

/// Draws one unmodified feature vector x = Lz with fresh latent
/// z ~ U[−1,1]^r from the stream. Always lands in [−1,1]^d because every
/// loading row has ℓ1 norm at most 1.
pub fn sample_features<R: Rng>(features: &FeatureDistribution, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..features.r).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    features
        .loading
        .matvec(&z)
        .expect("latent dimension fixed at construction")
}

// ----------------------------------------------------------------------
// worked examples
// ----------------------------------------------------------------------

/// A worked example: the scenario plus the starting model the write-up
/// assumes and notes recording every parameter the source left open.
#[derive(Debug, Clone)]
pub struct ExampleScenario {
    pub scenario: Scenario,
    /// initial posted model β̂₀ under which the example's dynamics unfold
    pub beta0: Vec<f64>,
    pub notes: Vec<String>,
}

/// Builds worked examples 1–4.
///
/// 1. d=2, β* = (1,0), feature 2 identical to feature 1, noiseless —
///    unmodified observations are rank-deficient and β* is unidentifiable.
/// 2. Same features, but feature 2 is much cheaper to modify (c = (10, 1)) —
///    consistent-looking models mispredict after modification.
/// 3. d=3, β* = (1,0,0), features 2 and 3 identical to feature 1,
///    noiseless — only the modified feature becomes identifiable.
/// 4. d=2, β* = (1,2), x ≡ (0,0), c = (1,1), B = 1 — min-norm refitting
///    loops forever on feature 1 and never explores feature 2.
pub fn build_example(id: u32) -> Result<ExampleScenario> {
    let ones_cost = |d: usize| CostType {
        c: vec![1.0; d],
        b: 1.0,
        pi: 1.0,
    };
    match id {
        1 => {
            let scenario = Scenario::new(
                "example1",
                TrueModel::new(vec![1.0, 0.0], 0.0, NoiseKind::Zero)?,
                FeatureDistribution::new(
                    2,
                    1,
                    Matrix::from_rows(&[vec![1.0], vec![1.0]])?,
                    LatentKind::UniformIid,
                )?,
                CostModel::new(vec![ones_cost(2)])?,
            )?;
            Ok(ExampleScenario {
                scenario,
                beta0: unit_ones(2),
                notes: vec![
                    "costs left open by the source; using a single type c = (1,1), B = 1".into(),
                    "initial model left open; using the all-ones direction (1,1)/sqrt(2)".into(),
                ],
            })
        }
        2 => {
            let scenario = Scenario::new(
                "example2",
                TrueModel::new(vec![1.0, 0.0], 0.0, NoiseKind::Zero)?,
                FeatureDistribution::new(
                    2,
                    1,
                    Matrix::from_rows(&[vec![1.0], vec![1.0]])?,
                    LatentKind::UniformIid,
                )?,
                CostModel::new(vec![CostType {
                    c: vec![10.0, 1.0],
                    b: 1.0,
                    pi: 1.0,
                }])?,
            )?;
            Ok(ExampleScenario {
                scenario,
                beta0: unit_ones(2),
                notes: vec![
                    "'much lower cost for feature 2' instantiated as c = (10, 1), B = 1".into(),
                    "initial model left open; using the all-ones direction (1,1)/sqrt(2)".into(),
                ],
            })
        }
        3 => {
            let scenario = Scenario::new(
                "example3",
                TrueModel::new(vec![1.0, 0.0, 0.0], 0.0, NoiseKind::Zero)?,
                FeatureDistribution::new(
                    3,
                    1,
                    Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]])?,
                    LatentKind::UniformIid,
                )?,
                CostModel::new(vec![ones_cost(3)])?,
            )?;
            Ok(ExampleScenario {
                scenario,
                beta0: unit_ones(3),
                notes: vec![
                    "costs left open by the source; using a single type c = (1,1,1), B = 1".into(),
                    "initial model left open; using the all-ones direction scaled to unit norm"
                        .into(),
                ],
            })
        }
        4 => {
            let scenario = Scenario::new(
                "example4",
                TrueModel::new(vec![1.0, 2.0], 0.0, NoiseKind::Zero)?,
                FeatureDistribution::new(
                    2,
                    1,
                    Matrix::from_rows(&[vec![0.0], vec![0.0]])?,
                    LatentKind::UniformIid,
                )?,
                CostModel::new(vec![ones_cost(2)])?,
            )?;
            Ok(ExampleScenario {
                scenario,
                beta0: vec![0.9, 0.4],
                notes: vec![
                    "beta* = (1,2) steps outside the [-1,1] box on purpose (counterexample)".into(),
                    "x = (0,0) realized with a zero loading matrix (Sigma has rank 0)".into(),
                    "initial model requires beta0(1) > beta0(2); using (0.9, 0.4)".into(),
                ],
            })
        }
        other => Err(Error::InvalidParameter {
            what: format!("example id must be 1..=4, got {other}"),
        }),
    }
}

fn unit_ones(d: usize) -> Vec<f64> {
    vec![1.0 / (d as f64).sqrt(); d]
}

// ----------------------------------------------------------------------
// random scenarios
// ----------------------------------------------------------------------

/// Random valid scenario, deterministic in `seed`: β* uniform in the box,
/// loading rows scaled to ℓ1 norm at most 1, and `l` cost types with every
/// budget-to-cost ratio in [0.1, 2].
pub fn random_scenario(d: usize, r: usize, l: usize, sigma: f64, seed: u64) -> Result<Scenario> {
    if d == 0 || r == 0 || r > d {
        return Err(Error::InvalidParameter {
            what: format!("need 1 <= r <= d, got d = {d}, r = {r}"),
        });
    }
    if l == 0 {
        return Err(Error::InvalidParameter {
            what: "need at least one cost type".into(),
        });
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter {
            what: format!("sigma must be finite and >= 0, got {sigma}"),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let beta_star: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();

    let mut rows = Vec::with_capacity(d);
    for _ in 0..d {
        let mut row: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let l1: f64 = row.iter().map(|v| v.abs()).sum();
        if l1 > 1.0 {
            for v in &mut row {
                *v /= l1;
            }
        }
        rows.push(row);
    }
    let loading = Matrix::from_rows(&rows)?;

    let mut types = Vec::with_capacity(l);
    let weights: Vec<f64> = (0..l).map(|_| rng.gen_range(0.1..=1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in &weights {
        // budget fixed at 1; cost 1/ratio keeps every ratio B/c in [0.1, 2]
        let c: Vec<f64> = (0..d).map(|_| 1.0 / rng.gen_range(0.1..=2.0)).collect();
        types.push(CostType {
            c,
            b: 1.0,
            pi: w / total,
        });
    }

    let noise_kind = if sigma > 0.0 {
        NoiseKind::Uniform
    } else {
        NoiseKind::Zero
    };
    Scenario::new(
        format!("random-d{d}-r{r}-l{l}-seed{seed}"),
        TrueModel::new(beta_star, sigma, noise_kind)?,
        FeatureDistribution::new(d, r, loading, LatentKind::UniformIid)?,
        CostModel::new(types)?,
    )
}

// ----------------------------------------------------------------------
// lambda(Sigma)
// ----------------------------------------------------------------------

/// How to evaluate λ(Σ) = min over nonempty D ⊆ [d] of λ(𝒟, Σ), where
/// λ(𝒟, Σ) = min over unit z ∈ 𝒟+Σ of ‖z(𝒟)‖₂ + ‖z(Σ)‖₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSigmaMode {
    /// √(smallest eigenvalue of (P_𝒟 + P_Σ) restricted to 𝒟+Σ), minimized
    /// over D. Lower-bounds λ(𝒟,Σ) because ‖a‖+‖b‖ ≥ √(‖a‖²+‖b‖²).
    LowerBound,
    /// direct minimization of ‖z(𝒟)‖+‖z(Σ)‖ over a refined unit-sphere
    /// grid, accurate to 1e-3; only for d ≤ 3
    GridExact,
}

/// Practical ceiling for the subset enumeration in λ(Σ) (2^d subsets).
const LAMBDA_SIGMA_MAX_DIM: usize = 20;

/// Evaluates λ(Σ) for a feature distribution. Strictly positive for every
/// valid distribution: a unit z ∈ 𝒟+Σ orthogonal to both 𝒟 and Σ would be
/// zero.
pub fn lambda_sigma(features: &FeatureDistribution, mode: LambdaSigmaMode) -> Result<f64> {
    features.validate()?;
    let d = features.d;
    match mode {
        LambdaSigmaMode::LowerBound => {
            if d > LAMBDA_SIGMA_MAX_DIM {
                return Err(Error::InvalidParameter {
                    what: format!(
                        "lambda_sigma enumerates all 2^d subsets; d = {d} exceeds the ceiling {LAMBDA_SIGMA_MAX_DIM}"
                    ),
                });
            }
        }
        LambdaSigmaMode::GridExact => {
            if d > 3 {
                return Err(Error::InvalidParameter {
                    what: format!("grid_exact mode requires d <= 3, got {d}"),
                });
            }
        }
    }

    let sigma_span = features.sigma_span()?;
    let mut best = f64::INFINITY;
    // nonempty subsets D of [d] as bit masks
    for mask in 1u64..(1u64 << d) {
        let subset: Vec<usize> = (0..d).filter(|k| mask >> k & 1 == 1).collect();
        let value = match mode {
            LambdaSigmaMode::LowerBound => lambda_d_sigma_lower(&subset, &sigma_span, d)?,
            LambdaSigmaMode::GridExact => lambda_d_sigma_grid(&subset, &sigma_span, d)?,
        };
        best = best.min(value);
    }
    Ok(best)
}

/// Orthonormal basis of 𝒟 + Σ (the span of the coordinate directions in D
/// together with the Σ-span).
fn span_d_plus_sigma(subset: &[usize], sigma_span: &Basis, d: usize) -> Result<Basis> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(subset.len() + sigma_span.len());
    for &k in subset {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        rows.push(e);
    }
    rows.extend(sigma_span.iter().cloned());
    numerics::row_space_basis(&Matrix::from_rows(&rows)?)
}

/// √(min eigenvalue of (P_𝒟 + P_Σ) restricted to 𝒟+Σ).
fn lambda_d_sigma_lower(subset: &[usize], sigma_span: &Basis, d: usize) -> Result<f64> {
    let w = span_d_plus_sigma(subset, sigma_span, d)?;
    // M = P_D + P_Sigma
    let mut m = Matrix::zeros(d, d)?;
    for &k in subset {
        m.set(k, k, 1.0);
    }
    for f in sigma_span.iter() {
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, m.get(i, j) + f[i] * f[j]);
            }
        }
    }
    let min_eig = numerics::min_eigenvalue_restricted(&m, &w)?;
    Ok(min_eig.max(0.0).sqrt())
}

/// ‖z(𝒟)‖ + ‖z(Σ)‖ for a concrete z.
fn objective(z: &[f64], subset: &[usize], sigma_span: &Basis) -> f64 {
    let zd: f64 = subset.iter().map(|&k| z[k] * z[k]).sum::<f64>().sqrt();
    let zs = sigma_span
        .iter()
        .map(|f| {
            let c = dot(z, f);
            c * c
        })
        .sum::<f64>()
        .sqrt();
    zd + zs
}

/// Direct grid minimization of the objective over the unit sphere of 𝒟+Σ
/// (dimension at most 3). The objective is 2-Lipschitz on the sphere, so a
/// refined grid pins the minimum to well within 1e-3.
fn lambda_d_sigma_grid(subset: &[usize], sigma_span: &Basis, d: usize) -> Result<f64> {
    let w = span_d_plus_sigma(subset, sigma_span, d)?;
    let m = w.len();
    let combine = |coeffs: &[f64]| -> Vec<f64> {
        let mut z = vec![0.0; d];
        for (c, b) in coeffs.iter().zip(w.iter()) {
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += c * bi;
            }
        }
        z
    };
    match m {
        0 => unreachable!("D is nonempty so D+Sigma has dimension >= 1"),
        1 => Ok(objective(&combine(&[1.0]), subset, sigma_span)),
        2 => {
            // z(θ) = cosθ·w₁ + sinθ·w₂; antipodal symmetry halves the circle
            let n = 16_384;
            let mut best = f64::INFINITY;
            for i in 0..n {
                let th = std::f64::consts::PI * (i as f64) / (n as f64);
                let z = combine(&[th.cos(), th.sin()]);
                best = best.min(objective(&z, subset, sigma_span));
            }
            Ok(best)
        }
        3 => {
            // spherical grid with local refinement around the best cells
            let eval = |th: f64, ph: f64| -> f64 {
                let z = combine(&[th.cos(), th.sin() * ph.cos(), th.sin() * ph.sin()]);
                objective(&z, subset, sigma_span)
            };
            let pi = std::f64::consts::PI;
            let (n_th, n_ph) = (96usize, 192usize);
            let h_th = pi / n_th as f64;
            let h_ph = 2.0 * pi / n_ph as f64;
            let mut cells: Vec<(f64, f64, f64)> = Vec::with_capacity(n_th * n_ph);
            for i in 0..=n_th {
                let th = i as f64 * h_th;
                for j in 0..n_ph {
                    let ph = j as f64 * h_ph;
                    cells.push((eval(th, ph), th, ph));
                }
            }
            cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut best = cells[0].0;
            // refine the 8 most promising cells through 3 shrinking grids
            for &(_, th0, ph0) in cells.iter().take(8) {
                let (mut th_c, mut ph_c) = (th0, ph0);
                let (mut h_t, mut h_p) = (h_th, h_ph);
                for _ in 0..3 {
                    let mut local_best = (f64::INFINITY, th_c, ph_c);
                    let steps = 16;
                    for a in -steps..=steps {
                        for b in -steps..=steps {
                            let th = th_c + (a as f64) * h_t / steps as f64 * 2.0;
                            let ph = ph_c + (b as f64) * h_p / steps as f64 * 2.0;
                            let v = eval(th, ph);
                            if v < local_best.0 {
                                local_best = (v, th, ph);
                            }
                        }
                    }
                    best = best.min(local_best.0);
                    th_c = local_best.1;
                    ph_c = local_best.2;
                    h_t /= steps as f64;
                    h_p /= steps as f64;
                }
            }
            Ok(best)
        }
        _ => unreachable!("grid mode is guarded to d <= 3"),
    }
}

// ----------------------------------------------------------------------
// instance constants and thresholds
// ----------------------------------------------------------------------

/// Computes the conservative instance constants for a scenario. σ = 0 is
/// allowed (K′ = K = 0; the α threshold then degenerates to γ√d).
pub fn instance_constants(s: &Scenario) -> Result<InstanceConstants> {
    s.validate()?;
    let d = s.dim();
    let max_ratio = s.costs.max_ratio();
    let k_prime = (1.0 + max_ratio) * s.model.sigma;
    let k_big = 4.0 * k_prime;

    let ls = lambda_sigma(&s.features, LambdaSigmaMode::LowerBound)?;

    // smallest nonzero eigenvalue of Σ (0.0 when Σ has rank 0)
    let sigma_mat = s.features.covariance();
    let eig = crate::numerics::sym_eigen(&sigma_mat);
    let max_eig = eig.values.last().copied().unwrap_or(0.0);
    let lambda_r = if max_eig <= 0.0 {
        0.0
    } else {
        eig.values
            .iter()
            .copied()
            .filter(|v| *v >= 1e-10 * max_eig)
            .fold(f64::INFINITY, f64::min)
    };

    let min_pi_rho_sq = s
        .costs
        .types
        .iter()
        .flat_map(|t| {
            t.c.iter().map(move |c| {
                let rho = t.b / c;
                t.pi * rho * rho
            })
        })
        .fold(f64::INFINITY, f64::min);
    // λ_r enters only through directions inside the Σ-span; with Σ = 0
    // that span is empty and only the modification term remains
    let inner_min = if lambda_r > 0.0 {
        lambda_r.min(min_pi_rho_sq)
    } else {
        min_pi_rho_sq
    };
    let lambda = ls / 2.0 * inner_min;

    let gamma = 1.0
        + s.costs
            .types
            .iter()
            .map(|t| {
                let max_c = t.c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min_c = t.c.iter().cloned().fold(f64::INFINITY, f64::min);
                max_c / min_c
            })
            .fold(f64::NEG_INFINITY, f64::max);

    let c1 = 4.0 * max_ratio;
    let c2 = std::f64::consts::SQRT_2 * max_ratio * max_ratio;
    let c3 = c1;
    let kappa_prime = ls + f64::max(c1, ls / 2.0 * c2 / d as f64 + c3);
    let kappa = 4.0 * kappa_prime;

    Ok(InstanceConstants {
        k_prime,
        k_big,
        lambda_sigma: ls,
        lambda,
        gamma,
        kappa,
        max_ratio,
        lambda_r,
    })
}

fn check_threshold_args(consts: &InstanceConstants, d: usize, t: usize, delta: f64) -> Result<()> {
    if d == 0 || t == 0 {
        return Err(Error::InvalidParameter {
            what: "thresholds need d >= 1 and T >= 1".into(),
        });
    }
    if !(0.0..1.0).contains(&delta) || delta <= 0.0 {
        return Err(Error::InvalidParameter {
            what: format!("delta must lie in (0,1), got {delta}"),
        });
    }
    // the negated form also rejects a NaN lambda
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(consts.lambda > 0.0) {
        return Err(Error::InvalidParameter {
            what: format!("lambda must be > 0, got {}", consts.lambda),
        });
    }
    Ok(())
}

/// The α threshold of the tie-breaking recovery guarantee:
/// γ(√d + K·d·√(2T·ln(8d/δ)) / (λn)). Natural logarithm.
pub fn alpha_threshold(
    consts: &InstanceConstants,
    d: usize,
    t: usize,
    n: usize,
    delta: f64,
) -> Result<f64> {
    check_threshold_args(consts, d, t, delta)?;
    if n == 0 {
        return Err(Error::InvalidParameter {
            what: "alpha_threshold needs n >= 1".into(),
        });
    }
    let df = d as f64;
    let tf = t as f64;
    let log_term = (8.0 * df / delta).ln();
    Ok(consts.gamma
        * (df.sqrt()
            + consts.k_big * df * (2.0 * tf * log_term).sqrt() / (consts.lambda * n as f64)))
}

/// The epoch-size threshold of the tie-breaking recovery guarantee:
/// (κd²/λ)·√(2T·ln(24d/δ)). Natural logarithm.
pub fn epoch_size_threshold(
    consts: &InstanceConstants,
    d: usize,
    t: usize,
    delta: f64,
) -> Result<f64> {
    check_threshold_args(consts, d, t, delta)?;
    let df = d as f64;
    let tf = t as f64;
    let log_term = (24.0 * df / delta).ln();
    Ok(consts.kappa * df * df / consts.lambda * (2.0 * tf * log_term).sqrt())
}

// ----------------------------------------------------------------------
// tests
// ----------------------------------------------------------------------
