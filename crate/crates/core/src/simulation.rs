//! The lower-layer evaluator: run every agent against a price schedule,
//! aggregate the demand curve, and settle the aggregator's books.
//!
//! Profit convention: the aggregator buys every kWh served (EV demand plus
//! the fixed baseline load) at the wholesale price and sells it at retail,
//! so `profit = revenue - wholesale_cost` with both sides including the
//! fixed load.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::agents::{DecisionPolicy, FALLBACK_RATIONALE};
use crate::domain::{
    ChargingDecision, DemandCurve, FixedLoadProfile, PriceSchedule, ScenarioConfig, TimeGrid,
    WholesaleSchedule,
};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("vector lengths disagree: schedule {schedule}, wholesale {wholesale}, fixed load {fixed_load}, demand {demand}, grid {grid}")]
    LengthMismatch { schedule: usize, wholesale: usize, fixed_load: usize, demand: usize, grid: usize },
}

/// Everything one lower-layer evaluation produces.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    /// One decision per user, in user order.
    pub decisions: Vec<ChargingDecision>,
    pub demand: DemandCurve,
    pub profit: f64,
    pub revenue: f64,
    pub wholesale_cost: f64,
    /// How many decisions came from the rule fallback of the LLM policy.
    pub fallback_count: usize,
}

/// Runs the policy once per user (concurrently, results in user order) and
/// aggregates per-slot demand as the exact ordered sum of the power vectors.
///
/// Expects a validated scenario and a schedule of matching length; those are
/// caller contracts, not runtime errors.
pub fn simulate_demand(
    schedule: &PriceSchedule,
    scenario: &ScenarioConfig,
    policy: &dyn DecisionPolicy,
) -> SimulationResult {
    assert_eq!(
        schedule.len(),
        scenario.grid.slot_count,
        "schedule length must match the scenario grid"
    );
    let environment = scenario.environment();
    let decisions: Vec<ChargingDecision> = scenario
        .users
        .par_iter()
        .map(|user| policy.decide(&user.profile, &user.vehicle, &environment, schedule))
        .collect();
    let demand = DemandCurve::from_decisions(&decisions, scenario.grid.slot_count);
    let fallback_count =
        decisions.iter().filter(|d| d.rationale() == FALLBACK_RATIONALE).count();
    let books = settle(
        schedule,
        &demand,
        &scenario.fixed_load,
        &scenario.wholesale,
        &scenario.grid,
    )
    .expect("validated scenario vectors all share the grid length");
    SimulationResult {
        decisions,
        demand,
        profit: books.profit,
        revenue: books.revenue,
        wholesale_cost: books.wholesale_cost,
        fallback_count,
    }
}

#[derive(Debug, Clone, Copy)]
struct Books {
    revenue: f64,
    wholesale_cost: f64,
    profit: f64,
}

fn settle(
    schedule: &PriceSchedule,
    demand: &DemandCurve,
    fixed_load: &FixedLoadProfile,
    wholesale: &WholesaleSchedule,
    grid: &TimeGrid,
) -> Result<Books, SimulationError> {
    let h = grid.slot_count;
    if schedule.len() != h
        || wholesale.prices.len() != h
        || fixed_load.load.len() != h
        || demand.total.len() != h
    {
        return Err(SimulationError::LengthMismatch {
            schedule: schedule.len(),
            wholesale: wholesale.prices.len(),
            fixed_load: fixed_load.load.len(),
            demand: demand.total.len(),
            grid: h,
        });
    }
    let dt = grid.slot_hours;
    let mut revenue = 0.0;
    let mut wholesale_cost = 0.0;
    for t in 0..h {
        let served_kw = demand.total[t] + fixed_load.load[t];
        revenue += served_kw * schedule.prices[t] * dt;
        wholesale_cost += served_kw * wholesale.prices[t] * dt;
    }
    Ok(Books { revenue, wholesale_cost, profit: revenue - wholesale_cost })
}

/// Signed aggregator profit for a demand curve already in hand: the served
/// energy (EV plus fixed load) earns the retail-minus-wholesale margin in
/// every slot.
pub fn aggregator_profit(
    schedule: &PriceSchedule,
    demand: &DemandCurve,
    fixed_load: &FixedLoadProfile,
    wholesale: &WholesaleSchedule,
    grid: &TimeGrid,
) -> Result<f64, SimulationError> {
    settle(schedule, demand, fixed_load, wholesale, grid).map(|b| b.profit)
}

/// A reusable objective for the upper layer: evaluating a schedule runs the
/// whole lower layer and returns the *negated* profit (the optimizer
/// minimizes). Safe for concurrent evaluation; evaluations are counted.
pub struct Objective {
    scenario: ScenarioConfig,
    policy: Arc<dyn DecisionPolicy>,
    evaluations: AtomicUsize,
}

/// Builds the objective the optimizer minimizes over the price box.
pub fn make_objective(scenario: ScenarioConfig, policy: Arc<dyn DecisionPolicy>) -> Objective {
    Objective { scenario, policy, evaluations: AtomicUsize::new(0) }
}

impl Objective {
    /// Negated profit at this schedule.
    pub fn value(&self, schedule: &PriceSchedule) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        -simulate_demand(schedule, &self.scenario, self.policy.as_ref()).profit
    }

    /// Full lower-layer result at this schedule (not counted as an
    /// optimization evaluation).
    pub fn simulate(&self, schedule: &PriceSchedule) -> SimulationResult {
        simulate_demand(schedule, &self.scenario, self.policy.as_ref())
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }
}

/// Renders the per-slot result table:
/// `slot,hour,price,wholesale,fixed_load_kw,ev_demand_kw,total_kw`.
pub fn write_demand_csv(
    out: &mut impl Write,
    schedule: &PriceSchedule,
    scenario: &ScenarioConfig,
    demand: &DemandCurve,
) -> std::io::Result<()> {
    writeln!(out, "slot,hour,price,wholesale,fixed_load_kw,ev_demand_kw,total_kw")?;
    for t in 0..scenario.grid.slot_count {
        let fixed = scenario.fixed_load.load[t];
        let ev = demand.total[t];
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t,
            scenario.grid.slot_start_hour(t),
            schedule.prices[t],
            scenario.wholesale.prices[t],
            fixed,
            ev,
            ev + fixed,
        )?;
    }
    Ok(())
}

/// The JSON result document embedding every decision.
pub fn result_document(
    schedule: &PriceSchedule,
    scenario: &ScenarioConfig,
    result: &SimulationResult,
) -> serde_json::Value {
    let decisions: Vec<serde_json::Value> = scenario
        .users
        .iter()
        .zip(&result.decisions)
        .map(|(user, decision)| {
            serde_json::json!({
                "user_id": user.profile.user_id,
                "power_kw": decision.power_kw(),
                "energy_total_kwh": decision.energy_total_kwh(),
                "cost_total": decision.cost_total(),
                "rationale": decision.rationale(),
            })
        })
        .collect();
    serde_json::json!({
        "prices": schedule.prices,
        "demand_kw": result.demand.total,
        "profit": result.profit,
        "revenue": result.revenue,
        "wholesale_cost": result.wholesale_cost,
        "fallback_count": result.fallback_count,
        "decisions": decisions,
    })
}
