//! Privacy accounting: composition arithmetic, noise calibration for both
//! mechanisms, and the theoretical error yardsticks.
//!
//! Calibration never trusts its leading constants for privacy. Every set of
//! parameters is audited by recomputing its cost from the noise scales that
//! will actually be used, and the audit result travels with each release.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `√2 − 1`, the approx-DP error exponent of the bounded-weight mechanism.
pub const ALPHA_APPROX: f64 = std::f64::consts::SQRT_2 - 1.0;

/// `(√17 − 3) / 2`, the pure-DP error exponent of the bounded-weight mechanism.
pub fn alpha_pure() -> f64 {
    (17f64.sqrt() - 3.0) / 2.0
}

/// Relative slack allowed when comparing a recomputed cost to its budget.
/// Covers floating-point rounding in sums such as `3 · (ε / 3K)`.
pub const AUDIT_RELATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pure,
    Approx,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Pure => "pure",
            Mode::Approx => "approx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Unbounded,
    Bounded,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Unbounded => "unbounded",
            Algorithm::Bounded => "bounded",
        })
    }
}

/// An (ε, δ) pair with ε ∈ (0, 1] and δ ∈ [0, 1/10]; δ = 0 is pure DP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidBudget(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        if !(0.0..=0.1).contains(&delta) {
            return Err(Error::InvalidBudget(format!("delta must lie in [0, 0.1], got {delta}")));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        PrivacyBudget::new(epsilon, 0.0)
    }

    pub fn check_mode(&self, mode: Mode) -> Result<()> {
        match mode {
            Mode::Pure if self.delta != 0.0 => {
                Err(Error::InvalidBudget(format!("pure mode requires delta = 0, got {}", self.delta)))
            }
            Mode::Approx if self.delta <= 0.0 => {
                Err(Error::InvalidBudget("approx mode requires delta > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Privacy cost of one mechanism or of a composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub epsilon: f64,
    pub delta: f64,
}

impl Cost {
    pub const ZERO: Cost = Cost { epsilon: 0.0, delta: 0.0 };

    pub fn new(epsilon: f64, delta: f64) -> Self {
        Cost { epsilon, delta }
    }

    pub fn fits(&self, epsilon: f64, delta: f64) -> bool {
        fits(self.epsilon, epsilon) && fits(self.delta, delta)
    }
}

fn fits(spent: f64, allowed: f64) -> bool {
    spent <= allowed * (1.0 + AUDIT_RELATIVE_SLACK)
}

/// Basic composition: component-wise sums.
pub fn basic_compose(costs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if costs.is_empty() {
        return Err(Error::InvalidParameter("basic composition of an empty list".into()));
    }
    Ok(costs.iter().fold((0.0, 0.0), |(e, d), &(ei, di)| (e + ei, d + di)))
}

/// Strong composition of `k` copies of an (ε, δ) mechanism:
/// `(√(2k ln(1/δ′)) ε + k ε (e^ε − 1), k δ + δ′)`.
pub fn strong_compose(k: u64, epsilon: f64, delta: f64, delta_prime: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::InvalidParameter("strong composition needs k >= 1".into()));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::InvalidParameter(format!("delta' must lie in (0, 1), got {delta_prime}")));
    }
    if epsilon < 0.0 || delta < 0.0 {
        return Err(Error::InvalidParameter("epsilon and delta must be nonnegative".into()));
    }
    let kf = k as f64;
    let eps = (2.0 * kf * (1.0 / delta_prime).ln()).sqrt() * epsilon + kf * epsilon * epsilon.exp_m1();
    Ok((eps, kf * delta + delta_prime))
}

/// Cheapest valid cost of `k` Laplace releases, each of sensitivity 1 at
/// `scale`. Pure mode uses basic composition; approx mode takes the better
/// of basic and strong composition with slack `delta_prime`.
pub fn laplace_batch_cost(k: u64, scale: f64, mode: Mode, delta_prime: f64) -> Cost {
    if k == 0 {
        return Cost::ZERO;
    }
    if scale <= 0.0 {
        return Cost::new(f64::INFINITY, 0.0);
    }
    let per = 1.0 / scale;
    let basic = Cost::new(k as f64 * per, 0.0);
    match mode {
        Mode::Pure => basic,
        Mode::Approx => match strong_compose(k, per, 0.0, delta_prime) {
            Ok((e, d)) if e < basic.epsilon => Cost::new(e, d),
            _ => basic,
        },
    }
}

/// Rescaled δ to feed the bounded-weight mechanism so that its end-to-end
/// guarantee under ℓ1 adjacency is (ε, target_delta).
pub fn rescale_delta_for_bounded(target_delta: f64, n: usize) -> f64 {
    target_delta / (3.0 * (n as f64) * (n as f64))
}

fn ln_n(n: usize) -> f64 {
    (n.max(1) as f64).ln()
}

fn ceil_usize(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        x.ceil() as usize
    }
}

// ---------------------------------------------------------------------------
// Unbounded-weight mechanism
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnboundedParams {
    /// Size L of the hitting set S.
    pub hitting_set_size: usize,
    /// Laplace scale on each released S × S distance.
    pub noise_scale_s: f64,
    /// Laplace scale on each released edge weight.
    pub edge_noise_scale: f64,
    /// Hop radius R used by the reconstruction estimators.
    pub hop_radius: usize,
}

/// Audit record for one unbounded-weight release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedAccounting {
    pub mode: Mode,
    pub requested: PrivacyBudget,
    /// Number of released unordered S × S pairs, L(L − 1)/2.
    pub s_pair_releases: u64,
    pub edge_releases: u64,
    pub s_distance_cost: Cost,
    pub edge_cost: Cost,
    pub total: Cost,
    pub within_budget: bool,
}

pub fn audit_unbounded(
    params: &UnboundedParams,
    edge_count: usize,
    budget: &PrivacyBudget,
    mode: Mode,
) -> UnboundedAccounting {
    let l = params.hitting_set_size as u64;
    let pairs = l * l.saturating_sub(1) / 2;
    let s_distance_cost = laplace_batch_cost(pairs, params.noise_scale_s, mode, budget.delta.max(f64::MIN_POSITIVE));
    // the edge vector has ℓ1 sensitivity 1
    let edge_cost = if edge_count == 0 {
        Cost::ZERO
    } else if params.edge_noise_scale > 0.0 {
        Cost::new(1.0 / params.edge_noise_scale, 0.0)
    } else {
        Cost::new(f64::INFINITY, 0.0)
    };
    let (e, d) = basic_compose(&[
        (s_distance_cost.epsilon, s_distance_cost.delta),
        (edge_cost.epsilon, edge_cost.delta),
    ])
    .expect("nonempty");
    let total = Cost::new(e, d);
    UnboundedAccounting {
        mode,
        requested: *budget,
        s_pair_releases: pairs,
        edge_releases: edge_count as u64,
        s_distance_cost,
        edge_cost,
        total,
        within_budget: total.fits(budget.epsilon, budget.delta),
    }
}

/// Parameters of the unbounded-weight mechanism for `n` vertices.
///
/// Pure: `L = ⌈c_L n^{1/3} ln n⌉`, S × S scale `2L²/ε`. Approx:
/// `L = ⌈c_L n^{1/2} ln n⌉`, scale `c_T · L · √(2 ln(1/δ)) · 2/ε`. Edge
/// scale is `2/ε` and `R = ⌈10 n ln n / L⌉` clamped to `[1, n − 1]`. If the
/// knobs would overspend the S × S half of the budget, the scale is raised
/// to the smallest value that fits.
pub fn calibrate_unbounded(
    n: usize,
    budget: &PrivacyBudget,
    mode: Mode,
    c_l: f64,
    c_t: f64,
) -> Result<UnboundedParams> {
    budget.check_mode(mode)?;
    if n == 0 {
        return Err(Error::InvalidParameter("graph has no vertices".into()));
    }
    if !(c_l > 0.0 && c_t > 0.0) {
        return Err(Error::InvalidParameter("c_L and c_T must be positive".into()));
    }
    let nf = n as f64;
    let eps = budget.epsilon;
    let exponent = match mode {
        Mode::Pure => 1.0 / 3.0,
        Mode::Approx => 0.5,
    };
    let l = ceil_usize(c_l * nf.powf(exponent) * ln_n(n)).clamp(1, n);
    let lf = l as f64;
    let formula_scale = match mode {
        Mode::Pure => 2.0 * lf * lf / eps,
        Mode::Approx => c_t * lf * (2.0 * (1.0 / budget.delta).ln()).sqrt() * (2.0 / eps),
    };
    let hop_radius = ceil_usize(10.0 * nf * ln_n(n) / lf).clamp(1, (n - 1).max(1));
    let mut params = UnboundedParams {
        hitting_set_size: l,
        noise_scale_s: formula_scale,
        edge_noise_scale: 2.0 / eps,
        hop_radius,
    };
    let pairs = (l as u64) * (l as u64).saturating_sub(1) / 2;
    let half = PrivacyBudget { epsilon: eps / 2.0, delta: budget.delta };
    if !laplace_batch_cost(pairs, params.noise_scale_s, mode, budget.delta.max(f64::MIN_POSITIVE))
        .fits(half.epsilon, half.delta)
    {
        params.noise_scale_s = minimal_batch_scale(pairs, &half, mode);
    }
    Ok(params)
}

/// Smallest Laplace scale (to bisection precision) at which `k` releases
/// cost at most `budget`.
fn minimal_batch_scale(k: u64, budget: &PrivacyBudget, mode: Mode) -> f64 {
    let delta_prime = budget.delta.max(f64::MIN_POSITIVE);
    let ok = |s: f64| laplace_batch_cost(k, s, mode, delta_prime).fits(budget.epsilon, budget.delta);
    let mut hi = k as f64 / budget.epsilon;
    while !ok(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// ---------------------------------------------------------------------------
// Bounded-weight mechanism
// ---------------------------------------------------------------------------

/// Tuning of the bounded-weight mechanism. None of these affect privacy:
/// the noise scales always follow from the repetition count and hitting-set
/// size actually used, and the audit recomputes the cost from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedConfig {
    /// Explicit repetition count K; overrides `paper_constants`.
    pub repetitions: Option<usize>,
    /// Use K = ⌈100 ln n⌉ instead of the desk-scale default.
    pub paper_constants: bool,
    /// Multiplier c in the peel probe radius `c · R · ln n`.
    pub probe_multiplier: f64,
    /// Multiplier c in the hitting-set size `c · ln n · n / T`.
    pub hitting_multiplier: f64,
    /// Multiplier c in the red budget term `c · R · ln n`.
    pub red_hop_multiplier: f64,
    /// Multiplier c in the `c · T / R` terms of the red and green budgets.
    pub green_hop_multiplier: f64,
    /// Graphs with at most this many vertices go to the base mechanism.
    pub recursion_floor: usize,
    /// Debug only: every noise scale forced to zero. Not private.
    pub zero_noise: bool,
    /// Knobs for the base-case unbounded mechanism.
    pub base_c_l: f64,
    pub base_c_t: f64,
}

impl Default for BoundedConfig {
    fn default() -> Self {
        BoundedConfig {
            repetitions: None,
            paper_constants: false,
            probe_multiplier: 100.0,
            hitting_multiplier: 100.0,
            red_hop_multiplier: 100.0,
            green_hop_multiplier: 100.0,
            recursion_floor: 2,
            zero_noise: false,
            base_c_l: 1.0,
            base_c_t: 1.0,
        }
    }
}

impl BoundedConfig {
    /// Repetition count K for a graph on `n` vertices.
    pub fn repetitions_for(&self, n: usize) -> usize {
        if let Some(k) = self.repetitions {
            return k.max(1);
        }
        if self.paper_constants {
            return ceil_usize(100.0 * ln_n(n)).max(1);
        }
        let k = ceil_usize(ln_n(n)).max(3);
        if k % 2 == 0 {
            k + 1
        } else {
            k
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedParams {
    pub n: usize,
    /// Repetition count K (outer iterations and per-ball recursive copies).
    pub repetitions: usize,
    /// Size cap T on peeled balls.
    pub ball_size_cap: usize,
    /// Mean R of the exponential peel radii.
    pub peel_radius_mean: f64,
    /// Hop radius of the size probe, `c · R · ln n`.
    pub probe_radius: f64,
    /// Size L of the hitting set.
    pub hitting_set_size: usize,
    pub red_scale: f64,
    pub blue_scale: f64,
    pub recursion_floor: usize,
    pub max_red: usize,
    pub max_blue: usize,
    pub max_green: usize,
    /// False when T ≥ n or n ≤ recursion floor; the base mechanism runs instead.
    pub recursion_possible: bool,
}

/// Parameters of the bounded-weight mechanism for `n` vertices, weight
/// bound `a` and the (modified-adjacency) budget of this call.
pub fn calibrate_bounded(
    n: usize,
    a: f64,
    budget: &PrivacyBudget,
    mode: Mode,
    config: &BoundedConfig,
) -> Result<BoundedParams> {
    budget.check_mode(mode)?;
    if n == 0 {
        return Err(Error::InvalidParameter("graph has no vertices".into()));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("weight bound must be positive, got {a}")));
    }
    let nf = n as f64;
    let eps = budget.epsilon;
    let a_eff = a.max(1.0 / eps);
    let scale = a_eff * eps * nf;
    let (cap_exp, radius_exp) = match mode {
        Mode::Approx => (ALPHA_APPROX, 2.0 - std::f64::consts::SQRT_2),
        Mode::Pure => (alpha_pure() / 2.0, (5.0 - 17f64.sqrt()) / 2.0),
    };
    let (cap, radius) = if scale <= 1.0 {
        (n, nf.max(1.0))
    } else {
        (ceil_usize(nf / scale.powf(cap_exp)).clamp(1, n), (nf / scale.powf(radius_exp)).max(1.0))
    };
    let k = config.repetitions_for(n);
    let kf = k as f64;
    let ln = ln_n(n);
    let l = ceil_usize(config.hitting_multiplier * ln * nf / cap as f64).clamp(1, n);
    let lf = l as f64;
    let (red_scale, blue_scale) = if config.zero_noise {
        (0.0, 0.0)
    } else {
        let blue = match mode {
            Mode::Approx => 10.0 * kf * lf * (3.0 * kf / budget.delta).ln().sqrt() / eps,
            Mode::Pure => 10.0 * kf * lf * lf / eps,
        };
        (3.0 * kf / eps, blue)
    };
    let green_term = ceil_usize(config.green_hop_multiplier * cap as f64 / radius);
    let max_red = ceil_usize(config.red_hop_multiplier * radius * ln) + green_term;
    let floor = config.recursion_floor.max(2);
    Ok(BoundedParams {
        n,
        repetitions: k,
        ball_size_cap: cap,
        peel_radius_mean: radius,
        probe_radius: config.probe_multiplier * radius * ln,
        hitting_set_size: l,
        red_scale,
        blue_scale,
        recursion_floor: floor,
        max_red,
        max_blue: 1,
        max_green: green_term,
        recursion_possible: cap < n && n > floor,
    })
}

/// Per-iteration cost breakdown of one bounded-weight call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedIterationCost {
    pub red: Cost,
    pub blue: Cost,
    pub green: Cost,
    pub total: Cost,
}

/// Audit record of one bounded-weight call under single-edge (modified)
/// adjacency. Recursive calls are charged at the budget they were handed;
/// each of them audits itself the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedAccounting {
    pub mode: Mode,
    pub budget: PrivacyBudget,
    pub n: usize,
    /// "recursive", "base" (unbounded mechanism) or "trivial" (n = 1).
    pub kind: String,
    pub repetitions: usize,
    pub per_iteration: Option<BoundedIterationCost>,
    pub base: Option<UnboundedAccounting>,
    /// Parameters of the base-case release, so its cost can be recomputed.
    pub base_params: Option<UnboundedParams>,
    pub child_budget: Option<PrivacyBudget>,
    pub total: Cost,
    pub within_budget: bool,
}

/// Budget handed to each recursive call: `(ε / 3K², δ / 3K²)`, δ = 0 in pure mode.
pub fn child_budget(budget: &PrivacyBudget, repetitions: usize, mode: Mode) -> PrivacyBudget {
    let k2 = 3.0 * (repetitions as f64).powi(2);
    PrivacyBudget {
        epsilon: budget.epsilon / k2,
        delta: match mode {
            Mode::Pure => 0.0,
            Mode::Approx => budget.delta / k2,
        },
    }
}

pub fn audit_bounded_recursive(
    params: &BoundedParams,
    edge_count: usize,
    budget: &PrivacyBudget,
    mode: Mode,
) -> BoundedAccounting {
    let k = params.repetitions;
    let kf = k as f64;
    let red = if edge_count == 0 {
        Cost::ZERO
    } else if params.red_scale > 0.0 {
        Cost::new(1.0 / params.red_scale, 0.0)
    } else {
        Cost::new(f64::INFINITY, 0.0)
    };
    let l = params.hitting_set_size as u64;
    let pairs = l * l.saturating_sub(1) / 2;
    let blue_slack = (budget.delta / (3.0 * kf)).max(f64::MIN_POSITIVE);
    let blue = laplace_batch_cost(pairs, params.blue_scale, mode, blue_slack);
    let child = child_budget(budget, k, mode);
    // balls are disjoint, so one iteration's recursive outputs cost one
    // child budget per copy ℓ = 1..K
    let green = Cost::new(kf * child.epsilon, kf * child.delta);
    let per = Cost::new(red.epsilon + blue.epsilon + green.epsilon, red.delta + blue.delta + green.delta);
    let total = Cost::new(kf * per.epsilon, kf * per.delta);
    BoundedAccounting {
        mode,
        budget: *budget,
        n: params.n,
        kind: "recursive".into(),
        repetitions: k,
        per_iteration: Some(BoundedIterationCost { red, blue, green, total: per }),
        base: None,
        base_params: None,
        child_budget: Some(child),
        total,
        within_budget: total.fits(budget.epsilon, budget.delta),
    }
}

/// Top-level accounting of a bounded-weight release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedReleaseAccounting {
    pub requested: PrivacyBudget,
    pub mode: Mode,
    pub n: usize,
    /// δ actually fed to the mechanism, `δ / (3n²)` in approx mode.
    pub internal_delta: f64,
    pub root: BoundedAccounting,
    /// Guarantee under ℓ1 adjacency: `(ε_root, 3n² δ_root)`.
    pub l1_cost: Cost,
    pub within_budget: bool,
    /// Number of recursive calls whose own audit passed / ran.
    pub calls_audited: usize,
    pub calls_within_budget: usize,
}

impl BoundedReleaseAccounting {
    pub fn new(requested: PrivacyBudget, mode: Mode, n: usize, root: BoundedAccounting) -> Self {
        let nf = n as f64;
        let l1_cost = Cost::new(root.total.epsilon, 3.0 * nf * nf * root.total.delta);
        let within_budget =
            root.within_budget && l1_cost.fits(requested.epsilon, requested.delta);
        BoundedReleaseAccounting {
            requested,
            mode,
            n,
            internal_delta: match mode {
                Mode::Pure => 0.0,
                Mode::Approx => rescale_delta_for_bounded(requested.delta, n),
            },
            root,
            l1_cost,
            within_budget,
            calls_audited: 0,
            calls_within_budget: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Error yardsticks
// ---------------------------------------------------------------------------

/// Theoretical error bound with unit leading constant and `n^{o(1)}`
/// replaced by 1. A comparison yardstick, not a guarantee.
pub fn predict_error_bound(
    n: usize,
    a: f64,
    budget: &PrivacyBudget,
    algorithm: Algorithm,
    mode: Mode,
) -> f64 {
    let nf = n as f64;
    let eps = budget.epsilon;
    let ln = ln_n(n);
    let log_inv_delta = if budget.delta > 0.0 { (1.0 / budget.delta).ln() } else { 0.0 };
    match (algorithm, mode) {
        (Algorithm::Unbounded, Mode::Pure) => nf.powf(2.0 / 3.0) * ln.powi(3) / eps,
        (Algorithm::Unbounded, Mode::Approx) => nf.sqrt() * ln * ln * log_inv_delta.sqrt() / eps,
        (Algorithm::Bounded, Mode::Approx) => {
            let alpha = ALPHA_APPROX;
            let a_eff = a.max(1.0 / eps);
            log_inv_delta.sqrt() * a_eff.powf(alpha) * nf.powf(alpha) / eps.powf(1.0 - alpha)
        }
        (Algorithm::Bounded, Mode::Pure) => {
            let alpha = alpha_pure();
            let a_eff = a.max(1.0 / eps);
            a_eff.powf(alpha) * nf.powf(alpha) / eps.powf(1.0 - alpha)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.5, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 0.2).is_err());
        let b = PrivacyBudget::new(1.0, 0.0).unwrap();
        assert!(b.check_mode(Mode::Pure).is_ok());
        assert!(b.check_mode(Mode::Approx).is_err());
        assert!(PrivacyBudget::new(1.0, 1e-6).unwrap().check_mode(Mode::Pure).is_err());
    }

    #[test]
    fn basic_composition_examples() {
        let (e, d) = basic_compose(&[(0.1, 0.0), (0.2, 1e-6)]).unwrap();
        assert!(approx_eq(e, 0.3, 1e-15) && d == 1e-6);
        assert_eq!(basic_compose(&[(0.0, 0.0)]).unwrap(), (0.0, 0.0));
        let (e, d) = basic_compose(&vec![(0.25, 1e-7); 4]).unwrap();
        assert_eq!((e, d), (1.0, 4e-7));
        assert!(basic_compose(&[]).is_err());
    }

    #[test]
    fn strong_composition_examples() {
        // values computed by hand from the closed form
        let (e, d) = strong_compose(1, 0.1, 0.0, 1e-6).unwrap();
        let expected = (2.0 * 1e6f64.ln()).sqrt() * 0.1 + 0.1 * 0.1f64.exp_m1();
        assert!(approx_eq(e, expected, 1e-15));
        assert!(approx_eq(e, 0.536_170, 1e-5));
        assert_eq!(d, 1e-6);

        let (e, _) = strong_compose(100, 0.01, 0.0, 1e-6).unwrap();
        assert!(approx_eq(e, 0.535_702, 1e-5));

        let (e, d) = strong_compose(5, 0.0, 1e-7, 1e-6).unwrap();
        assert_eq!(e, 0.0);
        assert!(approx_eq(d, 5e-7 + 1e-6, 1e-15));

        assert!(strong_compose(3, 0.1, 0.0, 0.0).is_err());
        assert!(strong_compose(0, 0.1, 0.0, 1e-6).is_err());
    }

    #[test]
    fn unbounded_calibration_examples() {
        let pure = PrivacyBudget::new(1.0, 0.0).unwrap();
        let p = calibrate_unbounded(1000, &pure, Mode::Pure, 1.0, 1.0).unwrap();
        assert_eq!(p.hitting_set_size, 70);
        assert_eq!(p.noise_scale_s, 9800.0);
        assert_eq!(p.edge_noise_scale, 2.0);
        let releases = 70 * 69 / 2;
        let (e, _) = basic_compose(&vec![(1.0 / 9800.0, 0.0); releases]).unwrap();
        assert!(e <= 0.5);

        let approx = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let p = calibrate_unbounded(1000, &approx, Mode::Approx, 1.0, 1.0).unwrap();
        assert_eq!(p.hitting_set_size, 219);

        let p = calibrate_unbounded(2, &approx, Mode::Approx, 1.0, 1.0).unwrap();
        assert!(p.hitting_set_size <= 2);
        assert_eq!(p.hop_radius, 1);

        assert!(calibrate_unbounded(10, &pure, Mode::Approx, 1.0, 1.0).is_err());
    }

    #[test]
    fn undersized_knob_is_corrected_by_audit() {
        let approx = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let p = calibrate_unbounded(500, &approx, Mode::Approx, 1.0, 0.05).unwrap();
        let audit = audit_unbounded(&p, 10, &approx, Mode::Approx);
        assert!(audit.within_budget, "{audit:?}");
        assert!(approx_eq(audit.s_distance_cost.epsilon, 0.5, 1e-9));
    }

    #[test]
    fn bounded_calibration_examples() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let cfg = BoundedConfig::default();
        let p = calibrate_bounded(10_000, 1.0, &b, Mode::Approx, &cfg).unwrap();
        let expected_cap = 10f64.powf(4.0 * (2.0 - std::f64::consts::SQRT_2));
        assert_eq!(p.ball_size_cap, expected_cap.ceil() as usize);
        assert_eq!(p.ball_size_cap, 221);
        assert!(approx_eq(p.peel_radius_mean, 10f64.powf(4.0 * ALPHA_APPROX), 1e-12));
        assert!((p.peel_radius_mean - 45.3).abs() < 0.1);
        assert_eq!(p.repetitions, 11);
        assert!(p.recursion_possible);

        // weights below 1/ε are treated as 1/ε
        let small = calibrate_bounded(4, 0.25, &b, Mode::Approx, &cfg).unwrap();
        let unit = calibrate_bounded(4, 1.0, &b, Mode::Approx, &cfg).unwrap();
        assert_eq!(small, unit);
        assert_eq!(small.ball_size_cap, 3);
        let p = calibrate_bounded(1, 1.0, &b, Mode::Approx, &cfg).unwrap();
        assert_eq!(p.ball_size_cap, 1);
        assert!(!p.recursion_possible);

        let pure = PrivacyBudget::pure(1.0).unwrap();
        let p = calibrate_bounded(10_000, 1.0, &pure, Mode::Pure, &cfg).unwrap();
        let exp = alpha_pure() / 2.0;
        assert!((exp - 0.28078).abs() < 1e-5);
        assert_eq!(p.ball_size_cap, (1e4 / 1e4f64.powf(exp)).ceil() as usize);
        assert_eq!(p.blue_scale, 10.0 * 11.0 * (p.hitting_set_size as f64).powi(2));
    }

    #[test]
    fn repetition_defaults() {
        let cfg = BoundedConfig::default();
        assert_eq!(cfg.repetitions_for(2), 3);
        assert_eq!(cfg.repetitions_for(1024), 7);
        assert_eq!(cfg.repetitions_for(100), 5);
        let full = BoundedConfig { paper_constants: true, ..cfg };
        assert_eq!(full.repetitions_for(1024), 694);
        let fixed = BoundedConfig { repetitions: Some(4), ..full };
        assert_eq!(fixed.repetitions_for(1024), 4);
    }

    #[test]
    fn bounded_recursive_audit_fits() {
        for mode in [Mode::Approx, Mode::Pure] {
            let b = match mode {
                Mode::Approx => PrivacyBudget::new(1.0, 1e-9).unwrap(),
                Mode::Pure => PrivacyBudget::pure(1.0).unwrap(),
            };
            let p = calibrate_bounded(5000, 1.0, &b, mode, &BoundedConfig::default()).unwrap();
            let audit = audit_bounded_recursive(&p, 20_000, &b, mode);
            assert!(audit.within_budget, "{audit:?}");
        }
    }

    #[test]
    fn error_bound_examples() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let u = predict_error_bound(10_000, 1.0, &b, Algorithm::Unbounded, Mode::Approx);
        assert!((u - 3.15e4).abs() / 3.15e4 < 0.01, "{u}");
        let bd = predict_error_bound(10_000, 1.0, &b, Algorithm::Bounded, Mode::Approx);
        assert!(approx_eq(bd, 10f64.powf(4.0 * ALPHA_APPROX) * 1e6f64.ln().sqrt(), 1e-12));

        let full = PrivacyBudget::pure(1.0).unwrap();
        let half = PrivacyBudget::pure(0.5).unwrap();
        let a = predict_error_bound(500, 1.0, &full, Algorithm::Unbounded, Mode::Pure);
        let h = predict_error_bound(500, 1.0, &half, Algorithm::Unbounded, Mode::Pure);
        assert!(h >= 2.0 * a * (1.0 - 1e-12));
    }

    #[test]
    fn delta_rescaling_examples() {
        assert!(approx_eq(rescale_delta_for_bounded(3e-4, 10), 1e-6, 1e-15));
        assert!(approx_eq(rescale_delta_for_bounded(0.09, 1), 0.03, 1e-15));
        assert!(approx_eq(rescale_delta_for_bounded(0.03, 100), 1e-6, 1e-15));
    }

    proptest! {
        #[test]
        fn strong_exceeds_single_shot(eps in 1e-6f64..=1.0, dp in 1e-12f64..0.1) {
            let (e, _) = strong_compose(1, eps, 0.0, dp).unwrap();
            prop_assert!(e >= eps);
        }

        #[test]
        fn basic_is_permutation_invariant_and_associative(
            costs in prop::collection::vec((0.0f64..1.0, 0.0f64..1e-3), 1..20),
            split in 0usize..20,
        ) {
            let (e, d) = basic_compose(&costs).unwrap();
            let mut rev = costs.clone();
            rev.reverse();
            let (er, dr) = basic_compose(&rev).unwrap();
            prop_assert!(approx_eq(e, er, 1e-12) && approx_eq(d, dr, 1e-12));
            let cut = split % costs.len();
            if cut > 0 {
                let left = basic_compose(&costs[..cut]).unwrap();
                let right = basic_compose(&costs[cut..]).unwrap();
                let (eb, db) = basic_compose(&[left, right]).unwrap();
                prop_assert!(approx_eq(e, eb, 1e-12) && approx_eq(d, db, 1e-12));
            }
        }

        #[test]
        fn unbounded_calibration_passes_audit(
            n in 2usize..5000,
            eps in 0.01f64..=1.0,
            log_delta in -12.0f64..-2.0,
            c_l in 0.1f64..3.0,
            c_t in 0.01f64..3.0,
            pure in any::<bool>(),
        ) {
            let (mode, budget) = if pure {
                (Mode::Pure, PrivacyBudget::pure(eps).unwrap())
            } else {
                (Mode::Approx, PrivacyBudget::new(eps, 10f64.powf(log_delta)).unwrap())
            };
            let p = calibrate_unbounded(n, &budget, mode, c_l, c_t).unwrap();
            prop_assert!(p.hitting_set_size >= 1 && p.hitting_set_size <= n);
            prop_assert!(p.hop_radius >= 1 && p.hop_radius <= (n - 1).max(1));
            let audit = audit_unbounded(&p, 3 * n, &budget, mode);
            prop_assert!(audit.within_budget);
        }

        #[test]
        fn error_bound_monotone(
            n in 2usize..100_000,
            a in 0.01f64..100.0,
            eps in 0.01f64..=0.5,
            alg in prop::sample::select(vec![Algorithm::Unbounded, Algorithm::Bounded]),
            mode in prop::sample::select(vec![Mode::Pure, Mode::Approx]),
        ) {
            let b = PrivacyBudget::new(eps, if mode == Mode::Pure { 0.0 } else { 1e-6 }).unwrap();
            let b2 = PrivacyBudget::new(eps * 2.0, b.delta).unwrap();
            let base = predict_error_bound(n, a, &b, alg, mode);
            prop_assert!(predict_error_bound(n + 1, a, &b, alg, mode) >= base);
            prop_assert!(predict_error_bound(n, a * 1.5, &b, alg, mode) >= base);
            prop_assert!(predict_error_bound(n, a, &b2, alg, mode) <= base);
        }

        #[test]
        fn delta_rescaling_inverts(delta in 1e-12f64..0.1, n in 1usize..100_000) {
            let nf = n as f64;
            let back = rescale_delta_for_bounded(delta, n) * (3.0 * nf * nf);
            prop_assert!((back - delta).abs() <= delta * f64::EPSILON);
        }
    }
}
