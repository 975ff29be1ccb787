//! Data-dependent RDP for the thresholded vote aggregation.
//!
//! [`outcome_probability`] bounds the chance that the noisy thresholded
//! output differs from a candidate outcome. [`data_dependent_rdp`] turns that
//! bound `q̃` into an RDP guarantee at order λ by optimizing two auxiliary
//! orders `(μ₁, μ₂)` of the underlying Gaussian mechanism.

use crate::aggregate::{sum_sensitivity, TernaryGradient};
use crate::error::{param, Error, Result};

use super::normal::{ln_one_minus, log_add_exp, std_normal_cdf};
use super::rdp::gaussian_rdp;

/// Per-coordinate probabilities of the three threshold outcomes for a noisy
/// sum `f + n`, `n ~ N(0, σ²)`: (`≥ βN`, `≤ -βN`, strictly between).
fn outcome_probs(f: f64, beta_n: f64, sigma: f64) -> [f64; 3] {
    let upper = (beta_n - f) / sigma;
    let lower = (-beta_n - f) / sigma;
    let plus = std_normal_cdf(-upper);
    let minus = std_normal_cdf(lower);
    let mid = (1.0 - plus - minus).max(0.0);
    [plus, minus, mid]
}

/// ln of the probability that coordinate `j` lands on `target`, computed from
/// whichever of success/failure is small.
fn ln_success(f: f64, beta_n: f64, sigma: f64, target: i8) -> f64 {
    let upper = (beta_n - f) / sigma;
    let lower = (-beta_n - f) / sigma;
    let (success, failure) = match target {
        1 => (std_normal_cdf(-upper), std_normal_cdf(upper)),
        -1 => (std_normal_cdf(lower), std_normal_cdf(-lower)),
        _ => {
            let fail = std_normal_cdf(lower) + std_normal_cdf(-upper);
            (std_normal_cdf(upper) - std_normal_cdf(lower), fail)
        }
    };
    if failure < 0.5 {
        ln_one_minus(failure)
    } else {
        success.max(f64::MIN_POSITIVE).ln()
    }
}

/// `q̃ = 1 − Π_j Pr[threshold(f_j + n_j) = ḡ*_j]` with independent
/// `n_j ~ N(0, σ²)`, evaluated exactly per branch.
///
/// The result is clamped to `[f64::MIN_POSITIVE, 1]`.
pub fn outcome_probability(
    sums: &[f64],
    teachers: usize,
    beta: f64,
    sigma: f64,
    target: &TernaryGradient,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(param("sigma", "outcome probability needs sigma > 0"));
    }
    if sums.len() != target.dim() {
        return Err(Error::DimensionMismatch { expected: sums.len(), actual: target.dim() });
    }
    let beta_n = beta * teachers as f64;
    let ln_p: f64 = sums
        .iter()
        .zip(target.values())
        .map(|(&f, &t)| ln_success(f, beta_n, sigma, t))
        .sum();
    Ok((-ln_p.exp_m1()).clamp(f64::MIN_POSITIVE, 1.0))
}

/// The most probable thresholded output: per coordinate, the outcome with
/// the largest probability (ties prefer 0, then +1).
pub fn likely_outcome(sums: &[f64], teachers: usize, beta: f64, sigma: f64) -> TernaryGradient {
    let beta_n = beta * teachers as f64;
    let values = sums
        .iter()
        .map(|&f| {
            if sigma == 0.0 {
                return crate::aggregate::threshold(&[f], beta_n).values()[0];
            }
            let [plus, minus, mid] = outcome_probs(f, beta_n, sigma);
            if mid >= plus && mid >= minus {
                0
            } else if plus >= minus {
                1
            } else {
                -1
            }
        })
        .collect();
    TernaryGradient::new(values).expect("alphabet is ternary")
}

/// Grid used to optimize the auxiliary orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSearch {
    /// Points per axis of the logarithmic grid.
    pub points: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Rounds of local pattern search around the grid optimum; 0 disables it.
    pub refine_rounds: usize,
}

impl Default for MuSearch {
    fn default() -> Self {
        Self { points: 200, mu_min: 1.01, mu_max: 1e6, refine_rounds: 6 }
    }
}

impl MuSearch {
    fn grid(&self) -> Vec<f64> {
        log_space(self.mu_min, self.mu_max, self.points)
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Data-dependent RDP at one order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataDependentRdp {
    /// `min(uncapped, data-independent)`.
    pub capped: f64,
    /// Best bound over feasible `(μ₁, μ₂)`; the data-independent value when none is feasible.
    pub uncapped: f64,
    pub feasible: bool,
    pub mu1: f64,
    pub mu2: f64,
}

/// Terms of the bound that depend on `q̃` and the Gaussian slope `a`
/// (`α(μ) = a·μ`).
struct BoundTerms {
    ln_q: f64,
    ln_1mq: f64,
    slope: f64,
}

impl BoundTerms {
    fn new(q: f64, slope: f64) -> Option<Self> {
        if !(q > 0.0 && q < 1.0) {
            return None;
        }
        Some(Self { ln_q: q.ln(), ln_1mq: ln_one_minus(q), slope })
    }

    /// `ln A(q̃, μ₂, α₂)`, or `None` when `q̃·e^{α₂} ≥ 1`.
    fn ln_a(&self, mu2: f64) -> Option<f64> {
        let x = self.ln_q + self.slope * mu2;
        if !(x < 0.0) {
            return None;
        }
        let inner = (x * (mu2 - 1.0) / mu2).exp_m1();
        Some(self.ln_1mq - (-inner).ln())
    }

    /// `ln B(q̃, μ₁, α₁)`.
    fn ln_b(&self, mu1: f64) -> f64 {
        self.slope * mu1 - self.ln_q / (mu1 - 1.0)
    }

    /// `q̃ ≤ e^{(μ₂-1)α₂} / (μ₁/(μ₁-1) · μ₂/(μ₂-1))^{μ₂}`, in log form.
    fn feasible(&self, mu1: f64, mu2: f64) -> bool {
        let rhs = (mu2 - 1.0) * self.slope * mu2
            - mu2 * ((mu1 / (mu1 - 1.0)).ln() + (mu2 / (mu2 - 1.0)).ln());
        self.ln_q <= rhs
    }

    fn value(&self, order: f64, ln_a: f64, ln_b: f64) -> f64 {
        let e = order - 1.0;
        log_add_exp(self.ln_1mq + e * ln_a, self.ln_q + e * ln_b) / e
    }

    fn evaluate(&self, order: f64, mu1: f64, mu2: f64) -> Option<f64> {
        if mu1 < order || mu1 <= 1.0 || mu2 <= 1.0 || !self.feasible(mu1, mu2) {
            return None;
        }
        let ln_a = self.ln_a(mu2)?;
        Some(self.value(order, ln_a, self.ln_b(mu1)))
    }
}

/// Data-dependent RDP of the vote-sum Gaussian mechanism (sensitivity `2√k`)
/// at order `lambda`, capped by the data-independent `2kλ/σ²`.
pub fn data_dependent_rdp(q_tilde: f64, lambda: f64, k: usize, sigma: f64) -> Result<f64> {
    Ok(data_dependent_rdp_orders(q_tilde, &[lambda], k, sigma, &MuSearch::default())?[0].capped)
}

/// [`data_dependent_rdp`] for many orders at once, sharing the grid work.
pub fn data_dependent_rdp_orders(
    q_tilde: f64,
    orders: &[f64],
    k: usize,
    sigma: f64,
    search: &MuSearch,
) -> Result<Vec<DataDependentRdp>> {
    if !(q_tilde > 0.0 && q_tilde <= 1.0) {
        return Err(param("q_tilde", format!("must lie in (0, 1], got {q_tilde}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InfiniteBudget);
    }
    if let Some(bad) = orders.iter().find(|&&o| !(o > 1.0)) {
        return Err(param("order", format!("must exceed 1, got {bad}")));
    }
    let slope = 2.0 * k as f64 / (sigma * sigma);
    let sensitivity = sum_sensitivity(k);
    let independent = |order: f64| gaussian_rdp(sensitivity, sigma, order).expect("validated");
    let fallback = |order: f64| DataDependentRdp {
        capped: independent(order),
        uncapped: independent(order),
        feasible: false,
        mu1: f64::NAN,
        mu2: f64::NAN,
    };
    let Some(terms) = BoundTerms::new(q_tilde, slope) else {
        return Ok(orders.iter().map(|&o| fallback(o)).collect());
    };

    let grid = search.grid();
    let ln_a: Vec<Option<f64>> = grid.iter().map(|&m| terms.ln_a(m)).collect();
    // Feasibility splits as ln q ≤ c(μ₂) − μ₂·ln(μ₁/(μ₁−1)).
    let c2: Vec<f64> = grid
        .iter()
        .map(|&m| (m - 1.0) * slope * m - m * (m / (m - 1.0)).ln())
        .collect();
    // For each μ₁: the feasible μ₂ minimizing ln A. The bound is increasing in
    // ln A for every order, so this choice does not depend on λ.
    let best_a_for = |mu1: f64| -> Option<(f64, usize)> {
        let l1 = (mu1 / (mu1 - 1.0)).ln();
        let mut best: Option<(f64, usize)> = None;
        for (j, &mu2) in grid.iter().enumerate() {
            if let Some(a) = ln_a[j] {
                if terms.ln_q <= c2[j] - mu2 * l1 && best.is_none_or(|(b, _)| a < b) {
                    best = Some((a, j));
                }
            }
        }
        best
    };
    let per_mu1: Vec<Option<(f64, usize)>> = grid.iter().map(|&m| best_a_for(m)).collect();
    let ln_b: Vec<f64> = grid.iter().map(|&m| terms.ln_b(m)).collect();
    let step = if grid.len() > 1 { (grid[1] / grid[0]).ln() } else { 0.0 };

    let mut out = Vec::with_capacity(orders.len());
    for &order in orders {
        // Candidates: the order itself, then every grid point above it.
        let mut best: Option<(f64, f64, f64)> = None; // (value, μ₁, μ₂)
        if let Some((a, j)) = best_a_for(order) {
            best = Some((terms.value(order, a, terms.ln_b(order)), order, grid[j]));
        }
        for (i, &mu1) in grid.iter().enumerate() {
            if mu1 < order {
                continue;
            }
            if let Some((a, j)) = per_mu1[i] {
                let v = terms.value(order, a, ln_b[i]);
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, mu1, grid[j]));
                }
            }
        }
        let Some((mut value, mut mu1, mut mu2)) = best else {
            out.push(fallback(order));
            continue;
        };

        // Shrinking 5×5 pattern search in log-μ around the grid optimum.
        let mut h = step;
        for _ in 0..search.refine_rounds {
            let (c1, c2) = (mu1.ln(), mu2.ln());
            for s1 in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                for s2 in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                    let m1 = (c1 + s1 * h).exp().max(order);
                    let m2 = (c2 + s2 * h).exp();
                    if let Some(v) = terms.evaluate(order, m1, m2) {
                        if v < value {
                            value = v;
                            mu1 = m1;
                            mu2 = m2;
                        }
                    }
                }
            }
            h *= 0.5;
        }
        let indep = independent(order);
        out.push(DataDependentRdp {
            capped: value.min(indep),
            uncapped: value,
            feasible: true,
            mu1,
            mu2,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::threshold;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn tern(v: &[i8]) -> TernaryGradient {
        TernaryGradient::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_coordinate_plus_branch() {
        let q = outcome_probability(&[10.0], 10, 0.5, 5.0, &tern(&[1])).unwrap();
        assert!((q - std_normal_cdf(-1.0)).abs() < 1e-15);
        assert!((q - 0.15866).abs() < 1e-5);

        // Monte Carlo oracle, 10⁶ draws.
        let n = 1_000_000;
        let mut r = stream(1);
        let mut miss = 0usize;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut r);
            if threshold(&[10.0 + 5.0 * z], 5.0).values()[0] != 1 {
                miss += 1;
            }
        }
        let freq = miss as f64 / n as f64;
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((freq - q).abs() <= 3.0 * se);
    }

    #[test]
    fn band_far_inside_threshold() {
        // βN/σ = 8.
        let q = outcome_probability(&[0.0], 8, 1.0, 1.0, &tern(&[0])).unwrap();
        assert!(q < 1e-14);
    }

    #[test]
    fn grows_with_dimension() {
        let mut sums = vec![];
        let mut target = vec![];
        let mut prev = 0.0;
        for j in 0..20 {
            sums.push([3.0, -2.0, 0.5][j % 3]);
            target.push([1i8, -1, 0][j % 3]);
            let q = outcome_probability(&sums, 4, 0.5, 1.5, &tern(&target)).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn infeasible_at_q_one() {
        for lambda in [2.0, 10.0, 100.0] {
            let a = data_dependent_rdp(1.0, lambda, 3, 7.0).unwrap();
            assert_eq!(a, gaussian_rdp(sum_sensitivity(3), 7.0, lambda).unwrap());
        }
    }

    #[test]
    fn sigma_and_range_errors() {
        assert!(outcome_probability(&[1.0], 1, 0.5, 0.0, &tern(&[1])).is_err());
        assert!(outcome_probability(&[1.0, 2.0], 1, 0.5, 1.0, &tern(&[1])).is_err());
        assert!(data_dependent_rdp(0.0, 2.0, 1, 1.0).is_err());
    }

    #[test]
    fn likely_outcome_is_per_coordinate_mode() {
        let t = likely_outcome(&[10.0, -10.0, 0.0], 10, 0.5, 1.0);
        assert_eq!(t.values(), &[1, -1, 0]);
    }

    #[test]
    fn capped_never_exceeds_independent() {
        for q in [1e-12, 1e-6, 0.01, 0.3, 0.9] {
            for lambda in [1.5, 2.0, 8.0, 64.0] {
                let a = data_dependent_rdp(q, lambda, 1, 3.0).unwrap();
                assert!(a <= 2.0 * lambda / 9.0 + 1e-15);
                assert!(a >= 0.0);
            }
        }
    }

    #[test]
    fn strong_consensus_beats_independent() {
        let r = data_dependent_rdp_orders(1e-10, &[2.0, 8.0], 1, 3.0, &MuSearch::default()).unwrap();
        for v in r {
            assert!(v.feasible);
            assert!(v.uncapped < v.capped + 1e-15 || v.capped < v.uncapped);
        }
    }

    /// Direct evaluation of the bound at one `(μ₁, μ₂)`, written out without
    /// the shared helpers.
    fn brute_value(q: f64, lambda: f64, k: f64, sigma: f64, mu1: f64, mu2: f64) -> Option<f64> {
        let a1 = 2.0 * k * mu1 / (sigma * sigma);
        let a2 = 2.0 * k * mu2 / (sigma * sigma);
        let cond = ((mu2 - 1.0) * a2).exp() / ((mu1 / (mu1 - 1.0)) * (mu2 / (mu2 - 1.0))).powf(mu2);
        if mu1 < lambda || q > cond || q * a2.exp() >= 1.0 {
            return None;
        }
        let a = (1.0 - q) / (1.0 - (q * a2.exp()).powf((mu2 - 1.0) / mu2));
        let b = a1.exp() / q.powf(1.0 / (mu1 - 1.0));
        let e = lambda - 1.0;
        let inner = (1.0 - q) * a.powf(e) + q * b.powf(e);
        Some(inner.ln() / e)
    }

    #[test]
    fn search_matches_dense_brute_force() {
        let (teachers, beta, sigma) = (10, 0.5, 3.0);
        let sums = [10.0, 0.0];
        let target = likely_outcome(&sums, teachers, beta, sigma);
        assert_eq!(target.values(), &[1, 0]);
        let q = outcome_probability(&sums, teachers, beta, sigma, &target).unwrap();
        let orders = [1.5, 2.0, 4.0, 8.0, 16.0];
        let fast = data_dependent_rdp_orders(q, &orders, 1, sigma, &MuSearch::default()).unwrap();
        let dense = log_space(1.001, 1e6, 2000);
        for (&lambda, got) in orders.iter().zip(&fast) {
            let mut best = f64::INFINITY;
            for &mu1 in dense.iter().chain(std::iter::once(&lambda)) {
                for &mu2 in &dense {
                    if let Some(v) = brute_value(q, lambda, 1.0, sigma, mu1, mu2) {
                        best = best.min(v);
                    }
                }
            }
            assert!(best.is_finite() && got.feasible, "order {lambda}");
            assert!(
                ((got.uncapped - best) / best).abs() <= 0.02,
                "order {lambda}: search {} vs brute {best}",
                got.uncapped
            );
        }
    }
}
