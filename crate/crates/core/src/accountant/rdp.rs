use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

use super::data_dependent::{data_dependent_rdp_orders, MuSearch};
use super::sampled::sampled_gaussian_rdp;

/// RDP of the Gaussian mechanism: `s²λ / (2σ²)`.
pub fn gaussian_rdp(sensitivity: f64, sigma: f64, order: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Err(Error::InfiniteBudget);
    }
    if !(sigma > 0.0) || !(sensitivity >= 0.0) {
        return Err(param("sigma", "sensitivity must be >= 0 and sigma > 0"));
    }
    if !(order > 1.0) {
        return Err(param("order", format!("RDP order must exceed 1, got {order}")));
    }
    Ok(sensitivity * sensitivity * order / (2.0 * sigma * sigma))
}

/// Finite set of RDP orders λ > 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderGrid(Vec<f64>);

impl OrderGrid {
    pub fn new(mut orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::Empty("order grid"));
        }
        if let Some(bad) = orders.iter().find(|&&o| !(o > 1.0 && o.is_finite())) {
            return Err(param("orders", format!("every order must be finite and > 1, got {bad}")));
        }
        orders.sort_by(f64::total_cmp);
        orders.dedup();
        Ok(Self(orders))
    }

    /// Integers 2..=256 plus {1.5, 1.75, 384, 512, 768, 1024}.
    pub fn standard() -> Self {
        let mut o = vec![1.5, 1.75];
        o.extend((2..=256).map(f64::from));
        o.extend([384.0, 512.0, 768.0, 1024.0]);
        Self(o)
    }

    /// [`OrderGrid::standard`] without the fractional orders, for mechanisms
    /// whose RDP is only available at integer orders.
    pub fn integer() -> Self {
        Self(Self::standard().0.into_iter().filter(|o| o.fract() == 0.0).collect())
    }

    pub fn orders(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for OrderGrid {
    fn default() -> Self {
        Self::standard()
    }
}

/// One composed mechanism invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Gaussian { sensitivity: f64, sigma: f64 },
    SampledGaussian { q: f64, noise_multiplier: f64, steps: u64 },
}

impl Mechanism {
    /// The vote-sum Gaussian mechanism with top-k votes (`s = 2√k`).
    pub fn vote_sum(k: usize, sigma: f64) -> Self {
        Mechanism::Gaussian { sensitivity: crate::aggregate::sum_sensitivity(k), sigma }
    }

    /// RDP of one invocation at `order`.
    pub fn rdp(&self, order: f64) -> Result<f64> {
        match *self {
            Mechanism::Gaussian { sensitivity, sigma } => gaussian_rdp(sensitivity, sigma, order),
            Mechanism::SampledGaussian { q, noise_multiplier, steps } => {
                Ok(steps as f64 * sampled_gaussian_rdp(q, noise_multiplier, order)?)
            }
        }
    }
}

/// An event in the ledger's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub round: u64,
    pub mechanism: Mechanism,
    /// Bound on the probability of leaving the likely outcome, when a
    /// data-dependent analysis was run for this event.
    pub q_tilde: Option<f64>,
}

/// Which accumulated RDP curve to convert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Track {
    /// Data-independent composition.
    Independent,
    /// Data-dependent composition, capped per event by the data-independent value.
    Dependent,
    /// Data-dependent composition without the cap.
    DependentUncapped,
}

/// One line of the ledger export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub round: u64,
    pub epsilon_indep: f64,
    pub epsilon_dep_uncapped: f64,
    pub argmin_lambda: f64,
    pub q_tilde: Option<f64>,
}

/// Additive RDP bookkeeping over a fixed order grid.
///
/// Single writer; clone it to take a consistent snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLedger {
    grid: OrderGrid,
    delta: f64,
    indep: Vec<f64>,
    dep: Vec<f64>,
    dep_uncapped: Vec<f64>,
    events: Vec<LedgerEvent>,
    records: Vec<LedgerRecord>,
    mu_search: MuSearch,
}

impl PrivacyLedger {
    pub fn new(grid: OrderGrid, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let n = grid.len();
        Ok(Self {
            grid,
            delta,
            indep: vec![0.0; n],
            dep: vec![0.0; n],
            dep_uncapped: vec![0.0; n],
            events: Vec::new(),
            records: Vec::new(),
            mu_search: MuSearch::default(),
        })
    }

    pub fn with_mu_search(mut self, search: MuSearch) -> Self {
        self.mu_search = search;
        self
    }

    pub fn grid(&self) -> &OrderGrid {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn rounds(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn alpha(&self, track: Track) -> &[f64] {
        match track {
            Track::Independent => &self.indep,
            Track::Dependent => &self.dep,
            Track::DependentUncapped => &self.dep_uncapped,
        }
    }

    fn rdp_curve(&self, mechanism: &Mechanism) -> Result<Vec<f64>> {
        self.grid.orders().iter().map(|&o| mechanism.rdp(o)).collect()
    }

    /// Data-independent ε if `mechanism` were composed next; the ledger is unchanged.
    pub fn epsilon_with(&self, mechanism: &Mechanism) -> Result<f64> {
        let curve = self.rdp_curve(mechanism)?;
        let alpha: Vec<f64> = self.indep.iter().zip(&curve).map(|(a, b)| a + b).collect();
        Ok(convert(self.grid.orders(), &alpha, self.delta).0)
    }

    /// Adds a data-independent event to every track.
    pub fn compose(&mut self, mechanism: Mechanism) -> Result<()> {
        let curve = self.rdp_curve(&mechanism)?;
        for (i, a) in curve.iter().enumerate() {
            self.indep[i] += a;
            self.dep[i] += a;
            self.dep_uncapped[i] += a;
        }
        self.push_event(mechanism, None);
        Ok(())
    }

    /// Adds one vote-sum aggregation (`s = 2√k`) and its data-dependent
    /// bound given `q_tilde`.
    pub fn compose_data_dependent(&mut self, k: usize, sigma: f64, q_tilde: f64) -> Result<()> {
        let mechanism = Mechanism::vote_sum(k, sigma);
        let indep = self.rdp_curve(&mechanism)?;
        let dep = data_dependent_rdp_orders(q_tilde, self.grid.orders(), k, sigma, &self.mu_search)?;
        for (i, a) in indep.iter().enumerate() {
            self.indep[i] += a;
            self.dep[i] += dep[i].capped;
            self.dep_uncapped[i] += dep[i].uncapped;
        }
        self.push_event(mechanism, Some(q_tilde));
        Ok(())
    }

    fn push_event(&mut self, mechanism: Mechanism, q_tilde: Option<f64>) {
        let round = self.events.len() as u64 + 1;
        self.events.push(LedgerEvent { round, mechanism, q_tilde });
        let (epsilon_indep, argmin_lambda) = self.epsilon(Track::Independent);
        let (epsilon_dep_uncapped, _) = self.epsilon(Track::DependentUncapped);
        self.records.push(LedgerRecord {
            round,
            epsilon_indep,
            epsilon_dep_uncapped,
            argmin_lambda,
            q_tilde,
        });
    }

    /// `(ε, argmin λ)` at the ledger's δ.
    pub fn epsilon(&self, track: Track) -> (f64, f64) {
        convert(self.grid.orders(), self.alpha(track), self.delta)
    }

    /// Line-delimited JSON export of every record.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(param("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

fn convert(orders: &[f64], alpha: &[f64], delta: f64) -> (f64, f64) {
    let log_inv_delta = (1.0 / delta).ln();
    orders
        .iter()
        .zip(alpha)
        .map(|(&o, &a)| (a + log_inv_delta / (o - 1.0), o))
        .fold((f64::INFINITY, f64::NAN), |best, cur| if cur.0 < best.0 { cur } else { best })
}

/// `ε = min_λ α(λ) + ln(1/δ)/(λ-1)` over the ledger's data-independent track.
pub fn rdp_to_dp(ledger: &PrivacyLedger, delta: f64) -> Result<(f64, f64)> {
    check_delta(delta)?;
    if ledger.grid.is_empty() {
        return Err(Error::Empty("order grid"));
    }
    Ok(convert(ledger.grid.orders(), &ledger.indep, delta))
}

/// ε after `rounds` vote-sum aggregations with top-k votes at noise `σ`.
pub fn epsilon_after(k: usize, sigma: f64, delta: f64, rounds: u64, grid: &OrderGrid) -> Result<f64> {
    check_delta(delta)?;
    let alpha: Vec<f64> = grid
        .orders()
        .iter()
        .map(|&o| Ok(rounds as f64 * Mechanism::vote_sum(k, sigma).rdp(o)?))
        .collect::<Result<_>>()?;
    Ok(convert(grid.orders(), &alpha, delta).0)
}

/// Largest number of vote-sum aggregations whose composed ε stays within
/// `epsilon_target`.
pub fn budget_schedule(
    k: usize,
    sigma: f64,
    delta: f64,
    epsilon_target: f64,
    grid: &OrderGrid,
) -> Result<u64> {
    if !(epsilon_target > 0.0) {
        return Err(param("epsilon_target", "must be > 0"));
    }
    let fits = |t: u64| epsilon_after(k, sigma, delta, t, grid).map(|e| e <= epsilon_target);
    if !fits(1)? {
        return Ok(0);
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    while fits(hi)? {
        lo = hi;
        match hi.checked_mul(2) {
            Some(h) if h < (1 << 62) => hi = h,
            _ => return Ok(lo),
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_rdp_examples() {
        let s = 2.0 * 200f64.sqrt();
        assert!((gaussian_rdp(s, 5000.0, 100.0).unwrap() - 0.0016).abs() < 1e-15);
        assert_eq!(gaussian_rdp(0.0, 3.0, 7.0).unwrap(), 0.0);
        assert_eq!(gaussian_rdp(2.0, 1.0, 2.0).unwrap(), 4.0);
        assert_eq!(gaussian_rdp(1.0, 0.0, 2.0), Err(Error::InfiniteBudget));
        assert!(gaussian_rdp(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn composition_is_additive() {
        let mut a = PrivacyLedger::new(OrderGrid::standard(), 1e-5).unwrap();
        let e = Mechanism::Gaussian { sensitivity: 3.0, sigma: 7.0 };
        for _ in 0..10 {
            a.compose(e.clone()).unwrap();
        }
        for (&o, &alpha) in a.grid().orders().iter().zip(a.alpha(Track::Independent)) {
            let want = 10.0 * 9.0 * o / (2.0 * 49.0);
            assert!((alpha - want).abs() <= 1e-12 * want);
        }
        let before = a.alpha(Track::Independent).to_vec();
        a.compose(Mechanism::Gaussian { sensitivity: 0.0, sigma: 1.0 }).unwrap();
        assert_eq!(a.alpha(Track::Independent), before.as_slice());
    }

    #[test]
    fn composition_commutes() {
        let e1 = Mechanism::Gaussian { sensitivity: 1.0, sigma: 2.0 };
        let e2 = Mechanism::Gaussian { sensitivity: 2.0, sigma: 9.0 };
        let mut a = PrivacyLedger::new(OrderGrid::standard(), 1e-5).unwrap();
        let mut b = a.clone();
        a.compose(e1.clone()).unwrap();
        a.compose(e2.clone()).unwrap();
        b.compose(e2).unwrap();
        b.compose(e1).unwrap();
        for (x, y) in a.alpha(Track::Independent).iter().zip(b.alpha(Track::Independent)) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn one_round_epsilon_near_closed_form() {
        let mut l = PrivacyLedger::new(OrderGrid::standard(), 1e-5).unwrap();
        l.compose(Mechanism::vote_sum(200, 5000.0)).unwrap();
        let (eps, _) = rdp_to_dp(&l, 1e-5).unwrap();
        let a = 2.0 * 200.0 / 5000f64.powi(2);
        let closed = a + 2.0 * (a * (1e5f64).ln()).sqrt();
        assert!((eps - closed).abs() / closed < 0.01, "{eps} vs {closed}");
        assert!((closed - 0.02716).abs() < 1e-5);
    }

    #[test]
    fn empty_ledger_uses_largest_order() {
        let l = PrivacyLedger::new(OrderGrid::standard(), 1e-5).unwrap();
        let (eps, order) = rdp_to_dp(&l, 1e-5).unwrap();
        assert_eq!(order, 1024.0);
        assert!((eps - (1e5f64).ln() / 1023.0).abs() < 1e-15);
        assert!((eps - 0.011255).abs() < 1e-6);
    }

    #[test]
    fn epsilon_monotone_in_delta() {
        let mut l = PrivacyLedger::new(OrderGrid::standard(), 1e-5).unwrap();
        l.compose(Mechanism::vote_sum(10, 50.0)).unwrap();
        assert!(rdp_to_dp(&l, 1e-3).unwrap().0 <= rdp_to_dp(&l, 1e-5).unwrap().0);
        assert!(rdp_to_dp(&l, 0.0).is_err());
        assert!(OrderGrid::new(vec![]).is_err());
        assert!(OrderGrid::new(vec![1.0]).is_err());
    }

    #[test]
    fn budget_schedule_examples() {
        let grid = OrderGrid::standard();
        let t = budget_schedule(200, 5000.0, 1e-5, 1.0, &grid).unwrap();
        // Continuous-order solve: √(a·T) = √(ln 1e5 + 1) − √(ln 1e5), a = 2k/σ².
        let l = (1e5f64).ln();
        let a = 2.0 * 200.0 / 5000f64.powi(2);
        let t_cont = ((l + 1.0).sqrt() - l.sqrt()).powi(2) / a;
        assert_eq!(t_cont.floor() as u64, 1301);
        assert!((t as i64 - 1301).abs() <= 1, "got {t}");
        assert!(epsilon_after(200, 5000.0, 1e-5, t, &grid).unwrap() <= 1.0);
        assert!(epsilon_after(200, 5000.0, 1e-5, t + 1, &grid).unwrap() > 1.0);

        let one_round = epsilon_after(200, 5000.0, 1e-5, 1, &grid).unwrap();
        assert_eq!(budget_schedule(200, 5000.0, 1e-5, one_round * 0.99, &grid).unwrap(), 0);

        let base = budget_schedule(50, 2000.0, 1e-5, 2.0, &grid).unwrap();
        assert!(budget_schedule(50, 3000.0, 1e-5, 2.0, &grid).unwrap() >= base);
        assert!(budget_schedule(80, 2000.0, 1e-5, 2.0, &grid).unwrap() <= base);
    }

    #[test]
    fn ledger_export_lines() {
        let mut l = PrivacyLedger::new(OrderGrid::standard(), 1e-5).unwrap();
        l.compose(Mechanism::vote_sum(4, 30.0)).unwrap();
        l.compose_data_dependent(4, 30.0, 1.0).unwrap();
        let text = l.export_jsonl();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        for key in ["round", "epsilon_indep", "epsilon_dep_uncapped", "argmin_lambda", "q_tilde"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["round"], 2);
        // q̃ = 1 is infeasible, so both tracks agree.
        assert_eq!(l.alpha(Track::Independent), l.alpha(Track::DependentUncapped));
    }
}
