//! Core value types shared by every other module.
//!
//! Everything here is immutable plain data. Invariants are checked in one
//! place, [`validate_scenario`], which reports *all* violations instead of
//! stopping at the first. The only exception is [`ChargingDecision`], whose
//! invariants are enforced at construction so that no invalid decision can
//! exist anywhere in the system.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Numeric slack used for float comparisons throughout the crate.
pub const EPS: f64 = 1e-9;

/// A single-day window of equally sized time slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Hour of day at which the window opens, in `[0, 24)`.
    pub start_hour: u32,
    /// Number of slots `H`.
    pub slot_count: usize,
    /// Slot width in hours.
    pub slot_hours: f64,
}

impl TimeGrid {
    pub fn new(start_hour: u32, slot_count: usize, slot_hours: f64) -> Self {
        Self { start_hour, slot_count, slot_hours }
    }

    /// The default demand-response window: 06:00-11:00 as five one-hour slots.
    pub fn default_dr_window() -> Self {
        Self::new(6, 5, 1.0)
    }

    /// Hour of day at which slot `t` starts.
    pub fn slot_start_hour(&self, slot: usize) -> f64 {
        self.start_hour as f64 + slot as f64 * self.slot_hours
    }

    /// Human-readable label such as `06:00-07:00`.
    pub fn slot_label(&self, slot: usize) -> String {
        let fmt_hhmm = |h: f64| {
            let minutes = (h * 60.0).round() as u32;
            format!("{:02}:{:02}", minutes / 60, minutes % 60)
        };
        format!(
            "{}-{}",
            fmt_hhmm(self.slot_start_hour(slot)),
            fmt_hhmm(self.slot_start_hour(slot) + self.slot_hours)
        )
    }

    fn collect_issues(&self, issues: &mut Vec<ValidationIssue>) {
        if self.slot_count < 1 {
            issues.push(ValidationIssue::new("grid.slot_count", "must be >= 1"));
        }
        if !(self.slot_hours > 0.0) {
            issues.push(ValidationIssue::new("grid.slot_hours", "must be > 0"));
        }
        if self.start_hour >= 24 {
            issues.push(ValidationIssue::new("grid.start_hour", "must be in [0, 24)"));
        }
        let end = self.start_hour as f64 + self.slot_count as f64 * self.slot_hours;
        if end > 24.0 + EPS {
            issues.push(ValidationIssue::new(
                "grid",
                format!("window ends at hour {end:.2}, past the single-day limit of 24"),
            ));
        }
    }
}

/// Box bounds for retail prices, in $/kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBounds {
    pub min: f64,
    pub max: f64,
}

impl PriceBounds {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, price: f64) -> bool {
        price >= self.min - EPS && price <= self.max + EPS
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    fn collect_issues(&self, issues: &mut Vec<ValidationIssue>) {
        if !(self.min > 0.0) {
            issues.push(ValidationIssue::new("price_bounds.min", "λ_min must be > 0"));
        }
        if self.min > self.max {
            issues.push(ValidationIssue::new(
                "price_bounds",
                format!("λ_min {} must not exceed λ_max {}", self.min, self.max),
            ));
        }
    }
}

/// The upper layer's decision variable: one retail price per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    /// Retail price per slot, $/kWh.
    pub prices: Vec<f64>,
    pub bounds: PriceBounds,
}

impl PriceSchedule {
    pub fn new(prices: Vec<f64>, bounds: PriceBounds) -> Self {
        Self { prices, bounds }
    }

    /// A schedule with the same price in every slot.
    pub fn flat(price: f64, slot_count: usize, bounds: PriceBounds) -> Self {
        Self::new(vec![price; slot_count], bounds)
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Checks length against `grid` and every price against the bounds.
    pub fn check_against(&self, grid: &TimeGrid) -> Result<(), ValidationErrors> {
        let mut issues = Vec::new();
        self.bounds.collect_issues(&mut issues);
        if self.prices.len() != grid.slot_count {
            issues.push(ValidationIssue::new(
                "prices",
                format!("expected {} entries, got {}", grid.slot_count, self.prices.len()),
            ));
        }
        for (t, &p) in self.prices.iter().enumerate() {
            if !self.bounds.contains(p) {
                issues.push(ValidationIssue::new(
                    format!("prices[{t}]"),
                    format!("{p} outside bounds [{}, {}]", self.bounds.min, self.bounds.max),
                ));
            }
        }
        ValidationErrors::from_issues(issues)
    }
}

/// Wholesale market prices λ_g(t), $/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholesaleSchedule {
    pub prices: Vec<f64>,
}

impl WholesaleSchedule {
    pub fn flat(price: f64, slot_count: usize) -> Self {
        Self { prices: vec![price; slot_count] }
    }
}

/// Baseline non-EV consumption the aggregator also serves, kW per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedLoadProfile {
    pub load: Vec<f64>,
}

impl FixedLoadProfile {
    pub fn flat(load_kw: f64, slot_count: usize) -> Self {
        Self { load: vec![load_kw; slot_count] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncomeLevel {
    Low,
    Medium,
    High,
}

impl fmt::Display for IncomeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncomeLevel::Low => write!(f, "low"),
            IncomeLevel::Medium => write!(f, "medium"),
            IncomeLevel::High => write!(f, "high"),
        }
    }
}

/// Demographic, psychological, and charging-preference attributes of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub age: u32,
    pub occupation: String,
    pub income_level: IncomeLevel,
    pub residence: String,
    /// Psychological traits, each in `[0, 1]`.
    pub environmental_awareness: f64,
    pub tech_acceptance: f64,
    pub risk_preference: f64,
    /// Maximum $/kWh the user accepts for non-mandatory (comfort) charging.
    pub reservation_price: f64,
    /// Slot indices the user is willing to charge in.
    pub preferred_window: BTreeSet<usize>,
    /// State of charge the user would like to end up at, `[0, 1]`.
    pub target_soc: f64,
    /// State of charge required for the next trip; charging up to this level
    /// is price-insensitive.
    pub required_soc_for_trip: f64,
}

impl UserProfile {
    fn collect_issues(&self, path: &str, slot_count: usize, issues: &mut Vec<ValidationIssue>) {
        let unit = |name: &str, v: f64, issues: &mut Vec<ValidationIssue>| {
            if !(0.0..=1.0).contains(&v) {
                issues.push(ValidationIssue::new(
                    format!("{path}.{name}"),
                    format!("{v} outside [0, 1]"),
                ));
            }
        };
        unit("environmental_awareness", self.environmental_awareness, issues);
        unit("tech_acceptance", self.tech_acceptance, issues);
        unit("risk_preference", self.risk_preference, issues);
        unit("target_soc", self.target_soc, issues);
        unit("required_soc_for_trip", self.required_soc_for_trip, issues);
        if self.required_soc_for_trip > self.target_soc + EPS {
            issues.push(ValidationIssue::new(
                format!("{path}.required_soc_for_trip"),
                format!(
                    "{} exceeds target_soc {}",
                    self.required_soc_for_trip, self.target_soc
                ),
            ));
        }
        if !(self.reservation_price > 0.0) {
            issues.push(ValidationIssue::new(
                format!("{path}.reservation_price"),
                "must be > 0",
            ));
        }
        for &slot in &self.preferred_window {
            if slot >= slot_count {
                issues.push(ValidationIssue::new(
                    format!("{path}.preferred_window"),
                    format!("slot {slot} outside 0..{slot_count}"),
                ));
            }
        }
        if self.user_id.is_empty() {
            issues.push(ValidationIssue::new(format!("{path}.user_id"), "must be non-empty"));
        }
    }
}

/// Battery and charger parameters of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub battery_capacity_kwh: f64,
    /// State of charge in `[0, 1]`.
    pub soc: f64,
    pub max_charge_power_kw: f64,
    /// Wall-to-battery efficiency in `(0, 1]`.
    pub charge_efficiency: f64,
}

impl VehicleState {
    fn collect_issues(&self, path: &str, issues: &mut Vec<ValidationIssue>) {
        if !(self.battery_capacity_kwh > 0.0) {
            issues.push(ValidationIssue::new(
                format!("{path}.battery_capacity_kwh"),
                "must be > 0",
            ));
        }
        if !(0.0..=1.0).contains(&self.soc) {
            issues.push(ValidationIssue::new(
                format!("{path}.soc"),
                format!("{} outside [0, 1]", self.soc),
            ));
        }
        if !(self.max_charge_power_kw > 0.0) {
            issues.push(ValidationIssue::new(
                format!("{path}.max_charge_power_kw"),
                "must be > 0",
            ));
        }
        if !(self.charge_efficiency > 0.0 && self.charge_efficiency <= 1.0) {
            issues.push(ValidationIssue::new(
                format!("{path}.charge_efficiency"),
                format!("{} outside (0, 1]", self.charge_efficiency),
            ));
        }
    }
}

/// Conditions shared by all agents at decision time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentState {
    pub grid: TimeGrid,
    pub temperature_c: f64,
    pub current_slot: usize,
}

impl EnvironmentState {
    pub fn new(grid: TimeGrid, temperature_c: f64) -> Self {
        Self { grid, temperature_c, current_slot: 0 }
    }
}

/// One agent's charging plan for the whole window.
///
/// Constructed only through [`ChargingDecision::from_power`], which computes
/// the energy and cost totals from the power vector and rejects any plan that
/// exceeds the charger rating or would overfill the battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargingDecision {
    power_kw: Vec<f64>,
    energy_total_kwh: f64,
    cost_total: f64,
    rationale: String,
}

impl ChargingDecision {
    /// Builds a decision from a per-slot wall power vector.
    ///
    /// `energy_total` and `cost_total` are derived here, never supplied, so
    /// the additivity invariants hold by construction.
    pub fn from_power(
        power_kw: Vec<f64>,
        schedule: &PriceSchedule,
        grid: &TimeGrid,
        vehicle: &VehicleState,
        rationale: String,
    ) -> Result<Self, DecisionError> {
        if power_kw.len() != grid.slot_count || schedule.len() != grid.slot_count {
            return Err(DecisionError::LengthMismatch {
                expected: grid.slot_count,
                power: power_kw.len(),
                prices: schedule.len(),
            });
        }
        for (t, &p) in power_kw.iter().enumerate() {
            if !p.is_finite() || p < -EPS || p > vehicle.max_charge_power_kw + EPS {
                return Err(DecisionError::PowerOutOfRange {
                    slot: t,
                    power_kw: p,
                    max_kw: vehicle.max_charge_power_kw,
                });
            }
        }
        let dt = grid.slot_hours;
        let energy_total_kwh: f64 = power_kw.iter().map(|p| p * dt).sum();
        let cost_total: f64 = power_kw
            .iter()
            .zip(&schedule.prices)
            .map(|(p, lambda)| p * dt * lambda)
            .sum();
        let soc_after = vehicle.soc
            + energy_total_kwh * vehicle.charge_efficiency / vehicle.battery_capacity_kwh;
        if soc_after > 1.0 + EPS {
            return Err(DecisionError::Overfill { soc_after });
        }
        Ok(Self { power_kw, energy_total_kwh, cost_total, rationale })
    }

    /// An all-zero plan (the agent chooses not to charge).
    pub fn idle(schedule: &PriceSchedule, grid: &TimeGrid, rationale: String) -> Self {
        debug_assert_eq!(schedule.len(), grid.slot_count);
        Self {
            power_kw: vec![0.0; grid.slot_count],
            energy_total_kwh: 0.0,
            cost_total: 0.0,
            rationale,
        }
    }

    pub fn power_kw(&self) -> &[f64] {
        &self.power_kw
    }

    pub fn energy_total_kwh(&self) -> f64 {
        self.energy_total_kwh
    }

    pub fn cost_total(&self) -> f64 {
        self.cost_total
    }

    pub fn rationale(&self) -> &str {
        &self.rationale
    }
}

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("expected {expected} slots, got power vector of {power} and price vector of {prices}")]
    LengthMismatch { expected: usize, power: usize, prices: usize },
    #[error("power {power_kw} kW at slot {slot} outside [0, {max_kw}]")]
    PowerOutOfRange { slot: usize, power_kw: f64, max_kw: f64 },
    #[error("plan would raise state of charge to {soc_after}")]
    Overfill { soc_after: f64 },
}

/// Aggregate P_total(t) over a population, kW per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandCurve {
    pub total: Vec<f64>,
}

impl DemandCurve {
    /// Per-slot sum of the agents' power vectors, in agent order.
    pub fn from_decisions(decisions: &[ChargingDecision], slot_count: usize) -> Self {
        let mut total = vec![0.0; slot_count];
        for d in decisions {
            for (t, &p) in d.power_kw().iter().enumerate() {
                total[t] += p;
            }
        }
        Self { total }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Rule,
    Llm,
}

/// A user profile paired with their vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub profile: UserProfile,
    pub vehicle: VehicleState,
}

/// Everything needed to run the lower layer once: window, tariff bounds,
/// exogenous prices and load, the population, and the decision policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub grid: TimeGrid,
    pub price_bounds: PriceBounds,
    pub wholesale: WholesaleSchedule,
    pub fixed_load: FixedLoadProfile,
    pub users: Vec<UserRecord>,
    pub temperature_c: f64,
    pub seed: u64,
    pub policy_kind: PolicyKind,
}

impl ScenarioConfig {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn environment(&self) -> EnvironmentState {
        EnvironmentState::new(self.grid, self.temperature_c)
    }
}

/// One violated invariant: which field, and what bound it broke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub field: String,
    pub message: String,
}

impl ValidationIssue {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// All invariant violations found in one validation pass.
#[derive(Debug, Error)]
pub struct ValidationErrors {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationErrors {
    fn from_issues(issues: Vec<ValidationIssue>) -> Result<(), Self> {
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Self { issues })
        }
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} invariant violation(s):", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

/// Checks every invariant of every nested type and returns the config only
/// if all of them hold. On failure the error lists *all* violations.
pub fn validate_scenario(cfg: ScenarioConfig) -> Result<ScenarioConfig, ValidationErrors> {
    let mut issues = Vec::new();
    cfg.grid.collect_issues(&mut issues);
    cfg.price_bounds.collect_issues(&mut issues);
    if cfg.wholesale.prices.len() != cfg.grid.slot_count {
        issues.push(ValidationIssue::new(
            "wholesale.prices",
            format!("expected {} entries, got {}", cfg.grid.slot_count, cfg.wholesale.prices.len()),
        ));
    }
    for (t, &p) in cfg.wholesale.prices.iter().enumerate() {
        if !(p >= 0.0) {
            issues.push(ValidationIssue::new(
                format!("wholesale.prices[{t}]"),
                format!("{p} must be >= 0"),
            ));
        }
    }
    if cfg.fixed_load.load.len() != cfg.grid.slot_count {
        issues.push(ValidationIssue::new(
            "fixed_load.load",
            format!("expected {} entries, got {}", cfg.grid.slot_count, cfg.fixed_load.load.len()),
        ));
    }
    for (t, &p) in cfg.fixed_load.load.iter().enumerate() {
        if !(p >= 0.0) {
            issues.push(ValidationIssue::new(
                format!("fixed_load.load[{t}]"),
                format!("{p} must be >= 0"),
            ));
        }
    }
    for (i, user) in cfg.users.iter().enumerate() {
        user.profile.collect_issues(&format!("users[{i}].profile"), cfg.grid.slot_count, &mut issues);
        user.vehicle.collect_issues(&format!("users[{i}].vehicle"), &mut issues);
    }
    ValidationErrors::from_issues(issues).map(|()| cfg)
}

#[derive(Debug, Error)]
pub enum ScenarioIoError {
    #[error("failed to read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("failed to write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("failed to parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

/// Reads, parses, and validates a scenario JSON file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: ScenarioConfig =
        serde_json::from_str(&text).map_err(|source| ScenarioIoError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    Ok(validate_scenario(cfg)?)
}

/// Writes a scenario as pretty-printed JSON with a trailing newline.
pub fn save_scenario(path: &Path, cfg: &ScenarioConfig) -> Result<(), ScenarioIoError> {
    let mut text = serde_json::to_string_pretty(cfg).expect("scenario serialization is total");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ScenarioIoError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Derives an independent 64-bit seed for a named randomness stream, so the
/// population and the swarm can be varied independently from one master seed.
pub fn subseed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is at least 8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_vehicle() -> VehicleState {
        VehicleState {
            battery_capacity_kwh: 50.0,
            soc: 0.3,
            max_charge_power_kw: 11.0,
            charge_efficiency: 0.95,
        }
    }

    fn sample_profile(slot_count: usize) -> UserProfile {
        UserProfile {
            user_id: "user-001".into(),
            age: 34,
            occupation: "engineer".into(),
            income_level: IncomeLevel::Medium,
            residence: "suburban".into(),
            environmental_awareness: 0.6,
            tech_acceptance: 0.7,
            risk_preference: 0.4,
            reservation_price: 0.15,
            preferred_window: (0..slot_count).collect(),
            target_soc: 0.8,
            required_soc_for_trip: 0.5,
        }
    }

    fn table1_scenario(n: usize) -> ScenarioConfig {
        let grid = TimeGrid::default_dr_window();
        ScenarioConfig {
            grid,
            price_bounds: PriceBounds::new(0.09, 0.22),
            wholesale: WholesaleSchedule::flat(0.07, grid.slot_count),
            fixed_load: FixedLoadProfile::flat(120.0, grid.slot_count),
            users: (0..n)
                .map(|i| {
                    let mut profile = sample_profile(grid.slot_count);
                    profile.user_id = format!("user-{i:03}");
                    UserRecord { profile, vehicle: sample_vehicle() }
                })
                .collect(),
            temperature_c: 18.0,
            seed: 42,
            policy_kind: PolicyKind::Rule,
        }
    }

    #[test]
    fn table1_shaped_config_is_valid() {
        let cfg = table1_scenario(100);
        assert_eq!(cfg.grid.slot_count, 5);
        assert_eq!(cfg.user_count(), 100);
        let validated = validate_scenario(cfg).expect("Table-1-shaped config must validate");
        assert_eq!(validated.price_bounds, PriceBounds::new(0.09, 0.22));
    }

    #[test]
    fn zero_lower_bound_is_rejected_with_named_field() {
        let mut cfg = table1_scenario(1);
        cfg.price_bounds.min = 0.0;
        let err = validate_scenario(cfg).unwrap_err();
        assert!(err.issues.iter().any(|i| i.field == "price_bounds.min"
            && i.message.contains("must be > 0")));
    }

    #[test]
    fn soc_out_of_range_is_rejected_naming_field() {
        let mut cfg = table1_scenario(1);
        cfg.users[0].vehicle.soc = 1.2;
        let err = validate_scenario(cfg).unwrap_err();
        assert!(err.issues.iter().any(|i| i.field.ends_with("vehicle.soc")));
    }

    #[test]
    fn validation_reports_all_violations_not_just_first() {
        let mut cfg = table1_scenario(2);
        cfg.price_bounds.min = 0.0;
        cfg.users[0].vehicle.soc = 1.2;
        cfg.users[1].profile.target_soc = 1.5;
        let err = validate_scenario(cfg).unwrap_err();
        assert!(err.issues.len() >= 3, "expected every violation listed, got {err}");
    }

    #[test]
    fn decision_totals_are_derived_from_power() {
        let grid = TimeGrid::default_dr_window();
        let schedule = PriceSchedule::new(
            vec![0.10, 0.09, 0.22, 0.15, 0.12],
            PriceBounds::new(0.09, 0.22),
        );
        let vehicle = sample_vehicle();
        let d = ChargingDecision::from_power(
            vec![10.0, 10.0, 0.0, 0.0, 5.0],
            &schedule,
            &grid,
            &vehicle,
            String::new(),
        )
        .unwrap();
        assert!((d.energy_total_kwh() - 25.0).abs() < EPS);
        assert!((d.cost_total() - 2.50).abs() < EPS);
    }

    #[test]
    fn decision_rejects_power_above_charger_rating() {
        let grid = TimeGrid::default_dr_window();
        let schedule = PriceSchedule::flat(0.10, 5, PriceBounds::new(0.09, 0.22));
        let err = ChargingDecision::from_power(
            vec![0.0, 0.0, 12.0, 0.0, 0.0],
            &schedule,
            &grid,
            &sample_vehicle(),
            String::new(),
        )
        .unwrap_err();
        assert!(matches!(err, DecisionError::PowerOutOfRange { slot: 2, .. }));
    }

    #[test]
    fn decision_rejects_battery_overfill() {
        let grid = TimeGrid::new(6, 2, 1.0);
        let schedule = PriceSchedule::flat(0.10, 2, PriceBounds::new(0.09, 0.22));
        let vehicle = VehicleState {
            battery_capacity_kwh: 10.0,
            soc: 0.9,
            max_charge_power_kw: 11.0,
            charge_efficiency: 1.0,
        };
        let err = ChargingDecision::from_power(
            vec![11.0, 11.0],
            &schedule,
            &grid,
            &vehicle,
            String::new(),
        )
        .unwrap_err();
        assert!(matches!(err, DecisionError::Overfill { .. }));
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let cfg = table1_scenario(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        save_scenario(&path, &cfg).unwrap();
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(loaded, cfg);
    }

    #[test]
    fn slot_labels_follow_the_grid() {
        let grid = TimeGrid::default_dr_window();
        assert_eq!(grid.slot_label(0), "06:00-07:00");
        assert_eq!(grid.slot_label(4), "10:00-11:00");
        let half = TimeGrid::new(6, 2, 0.5);
        assert_eq!(half.slot_label(1), "06:30-07:00");
    }

    #[test]
    fn subseed_streams_are_independent_and_stable() {
        let a = subseed(42, "population");
        let b = subseed(42, "swarm");
        assert_ne!(a, b);
        assert_eq!(a, subseed(42, "population"));
        assert_ne!(a, subseed(43, "population"));
    }
}
