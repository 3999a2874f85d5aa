//! Test-only oracles and instance generators, kept independent of the
//! implementation paths they check. Compiled only with the `test-support`
//! feature; never part of the production API.

use rand::Rng;

use crate::domain::{
    ChargingDecision, IncomeLevel, PriceBounds, PriceSchedule, TimeGrid, UserProfile,
    VehicleState, EPS,
};

/// A randomized greedy-fill instance on a 1 kW discretization grid.
///
/// Prices and the reservation threshold are integer tenths of a cent
/// (`90..=220` maps to $0.090..$0.220), powers are integers, and the vehicle
/// is sized (256 kWh, soc 0, efficiency 1) so every quantity stays exactly
/// representable through the state-of-charge arithmetic.
#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    pub slot_count: usize,
    pub window: Vec<usize>,
    pub max_power_kw: u64,
    pub price_tenths: Vec<u64>,
    pub reservation_tenths: u64,
    pub mandatory_kwh: u64,
    pub comfort_kwh: u64,
}

impl DiscreteInstance {
    pub fn random(rng: &mut impl Rng) -> Self {
        let slot_count = rng.gen_range(1..=4usize);
        let mut window: Vec<usize> = (0..slot_count).filter(|_| rng.gen_bool(0.8)).collect();
        if window.is_empty() {
            window.push(rng.gen_range(0..slot_count));
        }
        let max_power_kw = rng.gen_range(1..=6u64);
        let price_tenths: Vec<u64> = (0..slot_count).map(|_| rng.gen_range(90..=220)).collect();
        let reservation_tenths = rng.gen_range(90..=220);
        let window_capacity = window.len() as u64 * max_power_kw;
        let mandatory_kwh = rng.gen_range(0..=window_capacity);
        let comfort_kwh = rng.gen_range(0..=window_capacity);
        Self {
            slot_count,
            window,
            max_power_kw,
            price_tenths,
            reservation_tenths,
            mandatory_kwh,
            comfort_kwh,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(6, self.slot_count, 1.0)
    }

    pub fn schedule(&self) -> PriceSchedule {
        PriceSchedule::new(
            self.price_tenths.iter().map(|&t| t as f64 / 1000.0).collect(),
            PriceBounds::new(0.09, 0.22),
        )
    }

    /// Vehicle whose soc arithmetic is exact for integer kWh amounts: the
    /// capacity is a power of two and efficiency is 1.
    pub fn vehicle(&self) -> VehicleState {
        VehicleState {
            battery_capacity_kwh: 256.0,
            soc: 0.0,
            max_charge_power_kw: self.max_power_kw as f64,
            charge_efficiency: 1.0,
        }
    }

    /// Profile whose assessed need is exactly (mandatory, comfort) kWh.
    pub fn profile(&self) -> UserProfile {
        UserProfile {
            user_id: "oracle".into(),
            age: 40,
            occupation: "test".into(),
            income_level: IncomeLevel::Medium,
            residence: "test".into(),
            environmental_awareness: 0.5,
            tech_acceptance: 0.5,
            risk_preference: 0.5,
            reservation_price: self.reservation_tenths as f64 / 1000.0,
            preferred_window: self.window.iter().copied().collect(),
            target_soc: (self.mandatory_kwh + self.comfort_kwh) as f64 / 256.0,
            required_soc_for_trip: self.mandatory_kwh as f64 / 256.0,
        }
    }

    /// Window slots a comfort kWh may occupy.
    pub fn eligible(&self) -> Vec<usize> {
        self.window
            .iter()
            .copied()
            .filter(|&s| self.price_tenths[s] <= self.reservation_tenths)
            .collect()
    }

    /// Integer cost (kWh × tenths of a cent) of a power vector.
    pub fn cost_tenths(&self, power_kw: &[f64]) -> u64 {
        power_kw
            .iter()
            .zip(&self.price_tenths)
            .map(|(&p, &t)| p.round() as u64 * t)
            .sum()
    }
}

/// Exhaustively enumerates every integer allocation of `energy_kwh` over the
/// window (each slot at most `max_power_kw`, energy in slots outside
/// `eligible` at most `mandatory_kwh`) and returns the minimum integer cost.
/// Returns `None` when no allocation meets the constraints.
pub fn exhaustive_min_cost_tenths(instance: &DiscreteInstance, energy_kwh: u64) -> Option<u64> {
    let eligible = instance.eligible();
    let is_eligible = |slot: usize| eligible.contains(&slot);
    let mut best: Option<u64> = None;
    let window = &instance.window;
    let mut allocation = vec![0u64; window.len()];
    loop {
        let total: u64 = allocation.iter().sum();
        if total == energy_kwh {
            let ineligible_energy: u64 = allocation
                .iter()
                .zip(window)
                .filter(|(_, &slot)| !is_eligible(slot))
                .map(|(&q, _)| q)
                .sum();
            if ineligible_energy <= instance.mandatory_kwh {
                let cost: u64 = allocation
                    .iter()
                    .zip(window)
                    .map(|(&q, &slot)| q * instance.price_tenths[slot])
                    .sum();
                best = Some(best.map_or(cost, |b| b.min(cost)));
            }
        }
        let mut dim = window.len();
        loop {
            if dim == 0 {
                return best;
            }
            dim -= 1;
            allocation[dim] += 1;
            if allocation[dim] <= instance.max_power_kw {
                break;
            }
            allocation[dim] = 0;
        }
    }
}

/// Checks every published invariant of a decision against its inputs:
/// power within the charger rating, totals that match the power vector, and
/// a resulting state of charge that stays at or below 1.
pub fn decision_invariants_hold(
    decision: &ChargingDecision,
    vehicle: &VehicleState,
    schedule: &PriceSchedule,
    grid: &TimeGrid,
) -> Result<(), String> {
    let power = decision.power_kw();
    if power.len() != grid.slot_count {
        return Err(format!("power vector has {} slots, grid has {}", power.len(), grid.slot_count));
    }
    for (t, &p) in power.iter().enumerate() {
        if !p.is_finite() || p < -EPS || p > vehicle.max_charge_power_kw + EPS {
            return Err(format!("power {p} kW at slot {t} outside [0, {}]", vehicle.max_charge_power_kw));
        }
    }
    let dt = grid.slot_hours;
    let energy: f64 = power.iter().map(|p| p * dt).sum();
    if (energy - decision.energy_total_kwh()).abs() > EPS {
        return Err(format!(
            "energy_total {} does not match recomputed {}",
            decision.energy_total_kwh(),
            energy
        ));
    }
    let cost: f64 = power.iter().zip(&schedule.prices).map(|(p, l)| p * dt * l).sum();
    if (cost - decision.cost_total()).abs() > EPS {
        return Err(format!("cost_total {} does not match recomputed {}", decision.cost_total(), cost));
    }
    let soc_after =
        vehicle.soc + energy * vehicle.charge_efficiency / vehicle.battery_capacity_kwh;
    if soc_after > 1.0 + EPS {
        return Err(format!("resulting soc {soc_after} exceeds 1"));
    }
    Ok(())
}
