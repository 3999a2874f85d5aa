//! The lower layer: maps (profile, vehicle, environment, prices) to a
//! [`ChargingDecision`] through a pluggable policy.
//!
//! Two policies exist. The rule policy is a deterministic three-step
//! pipeline: assess how much energy is needed, rank the usable slots, then
//! greedily fill the cheapest slots first. The LLM policy builds a prompt,
//! asks a chat-completion gateway, parses the structured reply, and falls
//! back to the rule policy whenever anything goes wrong, so every policy is
//! total.
//!
//! Energy bookkeeping convention: all kWh amounts are wall-side (purchased)
//! energy. A slot can absorb at most `max_charge_power * slot_hours * eta`
//! kWh, and the battery gains `energy * eta / capacity` state of charge.

use std::sync::Arc;

use thiserror::Error;

use crate::domain::{
    ChargingDecision, EnvironmentState, PriceSchedule, TimeGrid, UserProfile, VehicleState, EPS,
};
use crate::gateway::{CompletionRequest, LlmGateway};

/// Rationale marker set when the LLM policy degraded to the rule policy.
pub const FALLBACK_RATIONALE: &str = "fallback:rule";

/// A decision-maker: one call per user per schedule evaluation.
///
/// Implementations must be deterministic given identical inputs and internal
/// fixtures, must return a decision satisfying every [`ChargingDecision`]
/// invariant, and must be safe to invoke from many threads at once.
pub trait DecisionPolicy: Send + Sync {
    fn decide(
        &self,
        profile: &UserProfile,
        vehicle: &VehicleState,
        environment: &EnvironmentState,
        schedule: &PriceSchedule,
    ) -> ChargingDecision;

    fn policy_name(&self) -> &str;
}

/// How much energy (wall-side kWh) the user wants, split by urgency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyNeed {
    /// Needed to reach `required_soc_for_trip`; bought at any in-window price.
    pub mandatory_kwh: f64,
    /// Additional energy toward `target_soc`; bought only at or below the
    /// user's reservation price.
    pub comfort_kwh: f64,
}

impl EnergyNeed {
    pub fn none() -> Self {
        Self { mandatory_kwh: 0.0, comfort_kwh: 0.0 }
    }

    pub fn total_kwh(&self) -> f64 {
        self.mandatory_kwh + self.comfort_kwh
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(
        "preferred window can deliver at most {capacity_kwh} kWh, below the mandatory {needed_kwh} kWh"
    )]
    WindowTooSmall { needed_kwh: f64, capacity_kwh: f64 },
}

/// Step 1: charging intention. Converts the state-of-charge gap into
/// wall-side energy amounts.
pub fn assess_charging_intention(profile: &UserProfile, vehicle: &VehicleState) -> EnergyNeed {
    let per_soc = vehicle.battery_capacity_kwh / vehicle.charge_efficiency;
    let mandatory_kwh = (profile.required_soc_for_trip - vehicle.soc).max(0.0) * per_soc;
    let comfort_kwh =
        (profile.target_soc - vehicle.soc.max(profile.required_soc_for_trip)).max(0.0) * per_soc;
    EnergyNeed { mandatory_kwh, comfort_kwh }
}

/// A usable slot, cheapest first, tagged with whether comfort energy may be
/// placed in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedSlot {
    pub slot: usize,
    pub comfort_eligible: bool,
}

/// Wall-side energy one slot can absorb.
fn slot_capacity_kwh(vehicle: &VehicleState, grid: &TimeGrid) -> f64 {
    vehicle.max_charge_power_kw * grid.slot_hours * vehicle.charge_efficiency
}

/// Step 2: charging-time selection. Ranks the preferred window by (price
/// ascending, slot index ascending). Mandatory energy may use any window
/// slot; comfort energy only slots priced at or below the reservation price.
/// When the need is comfort-only, ineligible slots are dropped entirely.
pub fn select_charging_slots(
    need: &EnergyNeed,
    profile: &UserProfile,
    vehicle: &VehicleState,
    schedule: &PriceSchedule,
    grid: &TimeGrid,
) -> Result<Vec<RankedSlot>, AgentError> {
    let window: Vec<usize> =
        profile.preferred_window.iter().copied().filter(|&s| s < grid.slot_count).collect();
    let capacity_kwh = window.len() as f64 * slot_capacity_kwh(vehicle, grid);
    if capacity_kwh < need.mandatory_kwh - EPS {
        return Err(AgentError::WindowTooSmall {
            needed_kwh: need.mandatory_kwh,
            capacity_kwh,
        });
    }

    let mut ranked: Vec<RankedSlot> = window
        .into_iter()
        .map(|slot| RankedSlot {
            slot,
            comfort_eligible: schedule.prices[slot] <= profile.reservation_price + EPS,
        })
        .filter(|rs| rs.comfort_eligible || need.mandatory_kwh > EPS)
        .collect();
    ranked.sort_by(|a, b| {
        schedule.prices[a.slot]
            .partial_cmp(&schedule.prices[b.slot])
            .expect("prices are finite")
            .then(a.slot.cmp(&b.slot))
    });
    Ok(ranked)
}

/// Step 3: charging-amount decision. Greedy fill of the ranked slots,
/// cheapest first: mandatory energy goes anywhere, comfort energy only into
/// eligible slots, each slot bounded by what the charger can deliver.
pub fn decide_charging_amount(
    need: &EnergyNeed,
    ranked: &[RankedSlot],
    vehicle: &VehicleState,
    schedule: &PriceSchedule,
    grid: &TimeGrid,
) -> ChargingDecision {
    let per_slot_kwh = slot_capacity_kwh(vehicle, grid);
    let mut remaining_mandatory = need.mandatory_kwh;
    let mut remaining_comfort = need.comfort_kwh;
    let mut power = vec![0.0; grid.slot_count];
    for rs in ranked {
        let mut take = remaining_mandatory.min(per_slot_kwh);
        remaining_mandatory -= take;
        if rs.comfort_eligible {
            let extra = remaining_comfort.min(per_slot_kwh - take);
            remaining_comfort -= extra;
            take += extra;
        }
        if take > EPS {
            power[rs.slot] = take / grid.slot_hours;
        }
        if remaining_mandatory <= EPS && remaining_comfort <= EPS {
            break;
        }
    }
    ChargingDecision::from_power(power, schedule, grid, vehicle, String::new())
        .expect("greedy fill stays within charger and battery limits")
}

/// Cold-weather adjustment applied by the rule policy: below the threshold,
/// mandatory energy is inflated by `factor`, capped so the battery headroom
/// is never exceeded.
#[derive(Debug, Clone, Copy)]
pub struct ColdWeatherRule {
    pub threshold_c: f64,
    pub factor: f64,
}

impl Default for ColdWeatherRule {
    fn default() -> Self {
        Self { threshold_c: 0.0, factor: 1.15 }
    }
}

impl ColdWeatherRule {
    /// Applies the inflation when `temperature_c` is below the threshold.
    pub fn adjust(&self, need: EnergyNeed, vehicle: &VehicleState, temperature_c: f64) -> EnergyNeed {
        if temperature_c >= self.threshold_c {
            return need;
        }
        let headroom_kwh =
            (1.0 - vehicle.soc) * vehicle.battery_capacity_kwh / vehicle.charge_efficiency;
        let mandatory_kwh = (need.mandatory_kwh * self.factor).min(headroom_kwh);
        let comfort_kwh = need.comfort_kwh.min(headroom_kwh - mandatory_kwh).max(0.0);
        EnergyNeed { mandatory_kwh, comfort_kwh }
    }
}

/// The deterministic agent response: intention, slot selection, and greedy
/// fill composed, with the cold-weather adjustment in between.
pub fn rule_policy_decide(
    profile: &UserProfile,
    vehicle: &VehicleState,
    environment: &EnvironmentState,
    schedule: &PriceSchedule,
    cold: &ColdWeatherRule,
) -> Result<ChargingDecision, AgentError> {
    let need = assess_charging_intention(profile, vehicle);
    let need = cold.adjust(need, vehicle, environment.temperature_c);
    let ranked = select_charging_slots(&need, profile, vehicle, schedule, &environment.grid)?;
    Ok(decide_charging_amount(&need, &ranked, vehicle, schedule, &environment.grid))
}

/// Rule policy as a total [`DecisionPolicy`]. If the preferred window cannot
/// deliver the mandatory energy, the need is capped to what the window can
/// deliver and the fill proceeds best-effort, keeping the simulation total.
#[derive(Debug, Clone, Copy, Default)]
pub struct RulePolicy {
    pub cold: ColdWeatherRule,
}

impl DecisionPolicy for RulePolicy {
    fn decide(
        &self,
        profile: &UserProfile,
        vehicle: &VehicleState,
        environment: &EnvironmentState,
        schedule: &PriceSchedule,
    ) -> ChargingDecision {
        match rule_policy_decide(profile, vehicle, environment, schedule, &self.cold) {
            Ok(decision) => decision,
            Err(AgentError::WindowTooSmall { capacity_kwh, .. }) => {
                let need = assess_charging_intention(profile, vehicle);
                let need = self.cold.adjust(need, vehicle, environment.temperature_c);
                let capped = EnergyNeed {
                    mandatory_kwh: need.mandatory_kwh.min(capacity_kwh),
                    comfort_kwh: need.comfort_kwh,
                };
                let ranked =
                    select_charging_slots(&capped, profile, vehicle, schedule, &environment.grid)
                        .expect("capped mandatory need always fits the window");
                decide_charging_amount(&capped, &ranked, vehicle, schedule, &environment.grid)
            }
        }
    }

    fn policy_name(&self) -> &str {
        "rule"
    }
}

fn fmt_percent(fraction: f64) -> String {
    let v = fraction * 100.0;
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

/// Builds the decision prompt sent to the model. Deterministic; the exact
/// template is pinned by a golden-file test and documented in
/// `docs/prompt_format.md`.
pub fn build_decision_prompt(
    profile: &UserProfile,
    vehicle: &VehicleState,
    environment: &EnvironmentState,
    schedule: &PriceSchedule,
) -> String {
    let grid = &environment.grid;
    let window = profile
        .preferred_window
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let mut prompt = String::new();
    prompt.push_str(
        "You are simulating the charging decision of one electric-vehicle owner \
         during a demand-response window.\n\n",
    );
    prompt.push_str("User:\n");
    prompt.push_str(&format!("- id: {}\n", profile.user_id));
    prompt.push_str(&format!(
        "- age {}, {}, {} income, lives in {}\n",
        profile.age, profile.occupation, profile.income_level, profile.residence
    ));
    prompt.push_str(&format!(
        "- environmental awareness {:.2}, tech acceptance {:.2}, risk preference {:.2}\n",
        profile.environmental_awareness, profile.tech_acceptance, profile.risk_preference
    ));
    prompt.push_str(&format!(
        "- reservation price ${:.4}/kWh: the highest price this user accepts for optional charging\n",
        profile.reservation_price
    ));
    prompt.push_str(&format!("- preferred slots: {window}\n\n"));
    prompt.push_str("Vehicle:\n");
    prompt.push_str(&format!("- battery capacity {:.1} kWh\n", vehicle.battery_capacity_kwh));
    prompt.push_str(&format!("- state of charge {}%\n", fmt_percent(vehicle.soc)));
    prompt.push_str(&format!("- target state of charge {}%\n", fmt_percent(profile.target_soc)));
    prompt.push_str(&format!(
        "- minimum state of charge for the next trip {}%\n",
        fmt_percent(profile.required_soc_for_trip)
    ));
    prompt.push_str(&format!("- maximum charging power {:.1} kW\n", vehicle.max_charge_power_kw));
    prompt.push_str(&format!("- charger efficiency {:.2}\n\n", vehicle.charge_efficiency));
    prompt.push_str("Environment:\n");
    prompt.push_str(&format!("- outdoor temperature {:.1} C\n", environment.temperature_c));
    prompt.push_str(&format!(
        "- window of {} slots, each {:.2} h\n\n",
        grid.slot_count, grid.slot_hours
    ));
    prompt.push_str("Retail prices:\n");
    for (t, price) in schedule.prices.iter().enumerate() {
        prompt.push_str(&format!("- slot {t} ({}): ${price:.4}/kWh\n", grid.slot_label(t)));
    }
    prompt.push_str(&format!(
        "\nTask: decide whether to charge, in which slots, and at what power. \
         Keep every power at or below the charger maximum and never overfill the battery. \
         Reply with exactly one fenced JSON block:\n\n\
         ```json\n\
         {{\"charge\": \"yes\", \"per_slot_power_kw\": [<{} numbers, one per slot>], \"estimated_cost\": <number>}}\n\
         ```\n\n\
         Use \"no\" and an all-zero list when not charging.\n",
        grid.slot_count
    ));
    prompt
}

/// Why a model reply could not be turned into a decision.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparseable model response: {reason}")]
pub struct ParseFailure {
    pub reason: String,
}

impl ParseFailure {
    fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

/// Extracts the candidate JSON text from a model reply: the first fenced
/// ```json block if present, otherwise the first balanced `{...}` span.
fn extract_structured_block(text: &str) -> Option<&str> {
    if let Some(start) = text.find("```json") {
        let body = &text[start + "```json".len()..];
        if let Some(end) = body.find("```") {
            return Some(body[..end].trim());
        }
    }
    let open = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[open..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[open..open + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses a model reply into a decision. Total over arbitrary text: either a
/// [`ParseFailure`] (signalling the caller to fall back) or a decision that
/// satisfies every invariant. Per-slot powers are clamped into
/// `[0, max_charge_power]` and truncated once the battery headroom is
/// reached; energy and cost totals are recomputed locally, never taken from
/// the model. The raw reply is retained as the rationale.
pub fn parse_decision_response(
    text: &str,
    vehicle: &VehicleState,
    schedule: &PriceSchedule,
    grid: &TimeGrid,
) -> Result<ChargingDecision, ParseFailure> {
    let block = extract_structured_block(text)
        .ok_or_else(|| ParseFailure::new("no structured block found"))?;
    let value: serde_json::Value = serde_json::from_str(block)
        .map_err(|e| ParseFailure::new(format!("invalid JSON in structured block: {e}")))?;
    let obj = value.as_object().ok_or_else(|| ParseFailure::new("block is not a JSON object"))?;
    let charge = obj
        .get("charge")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ParseFailure::new("missing string field 'charge'"))?;
    match charge.to_ascii_lowercase().as_str() {
        "no" => return Ok(ChargingDecision::idle(schedule, grid, text.to_string())),
        "yes" => {}
        other => return Err(ParseFailure::new(format!("charge must be yes/no, got '{other}'"))),
    }
    let slots = obj
        .get("per_slot_power_kw")
        .and_then(|v| v.as_array())
        .ok_or_else(|| ParseFailure::new("missing array field 'per_slot_power_kw'"))?;
    if slots.len() != grid.slot_count {
        return Err(ParseFailure::new(format!(
            "per_slot_power_kw has {} entries, expected {}",
            slots.len(),
            grid.slot_count
        )));
    }
    let mut headroom_kwh =
        (1.0 - vehicle.soc) * vehicle.battery_capacity_kwh / vehicle.charge_efficiency;
    let mut power = Vec::with_capacity(grid.slot_count);
    for v in slots {
        let raw = v.as_f64().unwrap_or(0.0);
        let clamped = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, vehicle.max_charge_power_kw) };
        let energy = (clamped * grid.slot_hours).min(headroom_kwh.max(0.0));
        headroom_kwh -= energy;
        power.push(energy / grid.slot_hours);
    }
    ChargingDecision::from_power(power, schedule, grid, vehicle, text.to_string())
        .map_err(|e| ParseFailure::new(format!("clamped plan still invalid: {e}")))
}

/// Prompting parameters for the LLM policy.
#[derive(Debug, Clone)]
pub struct LlmPolicyConfig {
    pub model: String,
    pub max_tokens: u32,
    /// 0 by default: decision prompts want determinism, not diversity.
    pub temperature: f64,
}

impl Default for LlmPolicyConfig {
    fn default() -> Self {
        Self { model: "gpt-4o-mini".into(), max_tokens: 512, temperature: 0.0 }
    }
}

pub const DECISION_SYSTEM_TEXT: &str = "You role-play a single electric-vehicle owner deciding \
how to charge. Follow the output format exactly.";

/// One LLM-backed decision: prompt, complete, parse, and fall back to the
/// rule policy on any gateway or parse failure.
pub fn llm_policy_decide(
    profile: &UserProfile,
    vehicle: &VehicleState,
    environment: &EnvironmentState,
    schedule: &PriceSchedule,
    gateway: &LlmGateway,
    cfg: &LlmPolicyConfig,
    cold: &ColdWeatherRule,
) -> ChargingDecision {
    let request = CompletionRequest {
        model: cfg.model.clone(),
        system_text: DECISION_SYSTEM_TEXT.to_string(),
        user_text: build_decision_prompt(profile, vehicle, environment, schedule),
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
    };
    let parsed = gateway
        .complete(&request)
        .ok()
        .and_then(|r| parse_decision_response(&r.text, vehicle, schedule, &environment.grid).ok());
    match parsed {
        Some(decision) => decision,
        None => {
            let fallback = RulePolicy { cold: *cold };
            let decision = fallback.decide(profile, vehicle, environment, schedule);
            ChargingDecision::from_power(
                decision.power_kw().to_vec(),
                schedule,
                &environment.grid,
                vehicle,
                FALLBACK_RATIONALE.to_string(),
            )
            .expect("rule decision is always valid")
        }
    }
}

/// LLM-backed [`DecisionPolicy`].
pub struct LlmPolicy {
    gateway: Arc<LlmGateway>,
    cfg: LlmPolicyConfig,
    cold: ColdWeatherRule,
}

impl LlmPolicy {
    pub fn new(gateway: Arc<LlmGateway>, cfg: LlmPolicyConfig) -> Self {
        Self { gateway, cfg, cold: ColdWeatherRule::default() }
    }
}

impl DecisionPolicy for LlmPolicy {
    fn decide(
        &self,
        profile: &UserProfile,
        vehicle: &VehicleState,
        environment: &EnvironmentState,
        schedule: &PriceSchedule,
    ) -> ChargingDecision {
        llm_policy_decide(profile, vehicle, environment, schedule, &self.gateway, &self.cfg, &self.cold)
    }

    fn policy_name(&self) -> &str {
        "llm"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{IncomeLevel, PriceBounds};

    fn profile(slot_count: usize) -> UserProfile {
        UserProfile {
            user_id: "user-001".into(),
            age: 34,
            occupation: "engineer".into(),
            income_level: IncomeLevel::Medium,
            residence: "suburbia".into(),
            environmental_awareness: 0.6,
            tech_acceptance: 0.7,
            risk_preference: 0.4,
            reservation_price: 0.15,
            preferred_window: (0..slot_count).collect(),
            target_soc: 0.8,
            required_soc_for_trip: 0.5,
        }
    }

    fn vehicle() -> VehicleState {
        VehicleState {
            battery_capacity_kwh: 50.0,
            soc: 0.3,
            max_charge_power_kw: 10.0,
            charge_efficiency: 1.0,
        }
    }

    fn grid() -> TimeGrid {
        TimeGrid::default_dr_window()
    }

    fn schedule() -> PriceSchedule {
        PriceSchedule::new(vec![0.10, 0.09, 0.22, 0.15, 0.12], PriceBounds::new(0.09, 0.22))
    }

    fn env() -> EnvironmentState {
        EnvironmentState::new(grid(), 18.0)
    }

    #[test]
    fn intention_splits_mandatory_and_comfort() {
        // 30% -> 80% with nothing mandatory: all comfort.
        let mut p = profile(5);
        p.required_soc_for_trip = 0.3;
        let mut v = vehicle();
        v.charge_efficiency = 1.0;
        let need = assess_charging_intention(&p, &v);
        assert!((need.mandatory_kwh - 0.0).abs() < EPS);
        assert!((need.comfort_kwh - 25.0).abs() < EPS);
    }

    #[test]
    fn intention_is_zero_when_already_charged() {
        let p = profile(5);
        let mut v = vehicle();
        v.soc = 0.9;
        let need = assess_charging_intention(&p, &v);
        assert_eq!(need, EnergyNeed::none());
    }

    #[test]
    fn intention_accounts_for_charger_losses() {
        let mut p = profile(5);
        p.required_soc_for_trip = 0.5;
        p.target_soc = 0.5;
        let v = VehicleState {
            battery_capacity_kwh: 40.0,
            soc: 0.1,
            max_charge_power_kw: 10.0,
            charge_efficiency: 0.8,
        };
        let need = assess_charging_intention(&p, &v);
        assert!((need.mandatory_kwh - 20.0).abs() < EPS);
        assert!((need.comfort_kwh - 0.0).abs() < EPS);
    }

    #[test]
    fn slots_sort_by_price_then_index() {
        let need = EnergyNeed { mandatory_kwh: 5.0, comfort_kwh: 0.0 };
        let ranked =
            select_charging_slots(&need, &profile(5), &vehicle(), &schedule(), &grid()).unwrap();
        let order: Vec<usize> = ranked.iter().map(|r| r.slot).collect();
        assert_eq!(order, vec![1, 0, 4, 3, 2]);
    }

    #[test]
    fn equal_prices_break_ties_by_earliest_slot() {
        let need = EnergyNeed { mandatory_kwh: 5.0, comfort_kwh: 0.0 };
        let flat = PriceSchedule::flat(0.10, 5, PriceBounds::new(0.09, 0.22));
        let ranked = select_charging_slots(&need, &profile(5), &vehicle(), &flat, &grid()).unwrap();
        let order: Vec<usize> = ranked.iter().map(|r| r.slot).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn comfort_only_need_keeps_only_slots_under_reservation() {
        let mut p = profile(5);
        p.reservation_price = 0.11;
        let need = EnergyNeed { mandatory_kwh: 0.0, comfort_kwh: 10.0 };
        let ranked = select_charging_slots(&need, &p, &vehicle(), &schedule(), &grid()).unwrap();
        let order: Vec<usize> = ranked.iter().map(|r| r.slot).collect();
        assert_eq!(order, vec![1, 0]);
        assert!(ranked.iter().all(|r| r.comfort_eligible));
    }

    #[test]
    fn window_too_small_for_mandatory_energy() {
        let mut p = profile(5);
        p.preferred_window = [2].into_iter().collect();
        let need = EnergyNeed { mandatory_kwh: 15.0, comfort_kwh: 0.0 };
        let err = select_charging_slots(&need, &p, &vehicle(), &schedule(), &grid()).unwrap_err();
        assert!(matches!(err, AgentError::WindowTooSmall { .. }));
    }

    #[test]
    fn greedy_fill_takes_cheapest_slots_first() {
        let need = EnergyNeed { mandatory_kwh: 25.0, comfort_kwh: 0.0 };
        let mut p = profile(5);
        p.reservation_price = 1.0;
        let ranked = select_charging_slots(&need, &p, &vehicle(), &schedule(), &grid()).unwrap();
        let d = decide_charging_amount(&need, &ranked, &vehicle(), &schedule(), &grid());
        assert_eq!(d.power_kw(), &[10.0, 10.0, 0.0, 0.0, 5.0]);
        assert!((d.cost_total() - 2.50).abs() < EPS);
        assert!((d.energy_total_kwh() - 25.0).abs() < EPS);
    }

    #[test]
    fn zero_need_yields_zero_plan() {
        let need = EnergyNeed::none();
        let ranked =
            select_charging_slots(&need, &profile(5), &vehicle(), &schedule(), &grid()).unwrap();
        let d = decide_charging_amount(&need, &ranked, &vehicle(), &schedule(), &grid());
        assert!(d.power_kw().iter().all(|&p| p == 0.0));
        assert_eq!(d.cost_total(), 0.0);
    }

    #[test]
    fn mandatory_energy_ignores_reservation_price() {
        let mut p = profile(5);
        p.reservation_price = 0.10;
        p.preferred_window = [2].into_iter().collect(); // price 0.22 > reservation
        let need = EnergyNeed { mandatory_kwh: 5.0, comfort_kwh: 0.0 };
        let ranked = select_charging_slots(&need, &p, &vehicle(), &schedule(), &grid()).unwrap();
        let d = decide_charging_amount(&need, &ranked, &vehicle(), &schedule(), &grid());
        assert!((d.power_kw()[2] - 5.0).abs() < EPS);
    }

    #[test]
    fn rule_policy_end_to_end_matches_greedy_example() {
        // 30% -> 80% on a 50 kWh pack is 25 kWh, all of it reservation-free
        // mandatory here so the full window stays usable.
        let mut p = profile(5);
        p.required_soc_for_trip = 0.8;
        p.target_soc = 0.8;
        let d = rule_policy_decide(&p, &vehicle(), &env(), &schedule(), &ColdWeatherRule::default())
            .unwrap();
        assert_eq!(d.power_kw(), &[10.0, 10.0, 0.0, 0.0, 5.0]);
        assert!(d.rationale().is_empty());
    }

    #[test]
    fn cold_weather_inflates_mandatory_need() {
        let mut p = profile(5);
        p.required_soc_for_trip = 0.5; // 10 kWh mandatory at soc 0.3
        p.target_soc = 0.5;
        let need = assess_charging_intention(&p, &vehicle());
        assert!((need.mandatory_kwh - 10.0).abs() < EPS);
        let adjusted = ColdWeatherRule::default().adjust(need, &vehicle(), -5.0);
        assert!((adjusted.mandatory_kwh - 11.5).abs() < EPS);
        let unchanged = ColdWeatherRule::default().adjust(need, &vehicle(), 5.0);
        assert!((unchanged.mandatory_kwh - 10.0).abs() < EPS);
    }

    #[test]
    fn cold_inflation_respects_battery_headroom() {
        let mut v = vehicle();
        v.soc = 0.8; // headroom 10 kWh
        let need = EnergyNeed { mandatory_kwh: 9.5, comfort_kwh: 0.5 };
        let adjusted = ColdWeatherRule::default().adjust(need, &v, -10.0);
        assert!(adjusted.mandatory_kwh <= 10.0 + EPS);
        assert!(adjusted.total_kwh() <= 10.0 + EPS);
    }

    #[test]
    fn uniform_price_rise_past_reservation_kills_comfort_demand() {
        // Comfort-only user whose reservation sits between the old and new
        // price levels: the +0.05 rise excludes every slot.
        let mut p = profile(5);
        p.required_soc_for_trip = 0.3;
        p.reservation_price = 0.12;
        let base = PriceSchedule::flat(0.10, 5, PriceBounds::new(0.09, 0.22));
        let raised = PriceSchedule::new(
            base.prices.iter().map(|x| x + 0.05).collect(),
            base.bounds,
        );
        let cold = ColdWeatherRule::default();
        let before = rule_policy_decide(&p, &vehicle(), &env(), &base, &cold).unwrap();
        let after = rule_policy_decide(&p, &vehicle(), &env(), &raised, &cold).unwrap();
        assert!((before.energy_total_kwh() - 25.0).abs() < EPS);
        assert_eq!(after.energy_total_kwh(), 0.0);
    }

    #[test]
    fn rule_policy_degrades_instead_of_failing_on_tiny_window() {
        let mut p = profile(5);
        p.required_soc_for_trip = 0.8; // 25 kWh mandatory
        p.preferred_window = [3].into_iter().collect(); // max 10 kWh deliverable
        let policy = RulePolicy::default();
        let d = policy.decide(&p, &vehicle(), &env(), &schedule());
        assert!((d.power_kw()[3] - 10.0).abs() < EPS);
        assert!((d.energy_total_kwh() - 10.0).abs() < EPS);
    }

    #[test]
    fn prompt_contains_the_decision_inputs() {
        let p = profile(5);
        let prompt = build_decision_prompt(&p, &vehicle(), &env(), &schedule());
        assert!(prompt.contains("user-001"));
        assert!(prompt.contains("30%"));
        assert!(prompt.contains("80%"));
        assert!(prompt.contains("$0.1500/kWh"));
        assert_eq!(prompt.matches("/kWh").count(), 6); // 5 price lines + reservation
        assert!(prompt.contains("18.0 C"));
        assert!(prompt.contains("per_slot_power_kw"));
    }

    #[test]
    fn prompt_has_one_price_line_per_slot() {
        let g = TimeGrid::new(6, 1, 1.0);
        let s = PriceSchedule::flat(0.10, 1, PriceBounds::new(0.09, 0.22));
        let mut p = profile(1);
        p.preferred_window = [0].into_iter().collect();
        let prompt =
            build_decision_prompt(&p, &vehicle(), &EnvironmentState::new(g, 18.0), &s);
        assert_eq!(prompt.matches("- slot ").count(), 1);
    }

    #[test]
    fn prompt_is_deterministic() {
        let a = build_decision_prompt(&profile(5), &vehicle(), &env(), &schedule());
        let b = build_decision_prompt(&profile(5), &vehicle(), &env(), &schedule());
        assert_eq!(a, b);
    }

    #[test]
    fn parse_retains_raw_text_and_recomputes_cost() {
        let text = "Charging is required. The charging duration is set to 1.5 hours, \
                    with a cost of 18.72.\n\
                    ```json\n\
                    {\"charge\": \"yes\", \"per_slot_power_kw\": [10, 5, 0, 0, 0], \"estimated_cost\": 18.72}\n\
                    ```";
        let d = parse_decision_response(text, &vehicle(), &schedule(), &grid()).unwrap();
        assert!(d.rationale().contains("1.5 hours"));
        assert!(d.rationale().contains("18.72"));
        // 10 kWh at 0.10 plus 5 kWh at 0.09, not the model's 18.72.
        assert!((d.cost_total() - 1.45).abs() < EPS);
    }

    #[test]
    fn parse_rejects_empty_text() {
        assert!(parse_decision_response("", &vehicle(), &schedule(), &grid()).is_err());
    }

    #[test]
    fn parse_clamps_power_to_charger_rating() {
        let mut v = vehicle();
        v.max_charge_power_kw = 11.0;
        let text = r#"{"charge": "yes", "per_slot_power_kw": [999, 0, 0, 0, 0], "estimated_cost": 1}"#;
        let d = parse_decision_response(text, &v, &schedule(), &grid()).unwrap();
        assert!((d.power_kw()[0] - 11.0).abs() < EPS);
    }

    #[test]
    fn parse_rejects_wrong_slot_count() {
        let text = r#"{"charge": "yes", "per_slot_power_kw": [1, 2], "estimated_cost": 1}"#;
        assert!(parse_decision_response(text, &vehicle(), &schedule(), &grid()).is_err());
    }

    #[test]
    fn parse_truncates_once_battery_is_full() {
        let v = VehicleState {
            battery_capacity_kwh: 10.0,
            soc: 0.5,
            max_charge_power_kw: 10.0,
            charge_efficiency: 1.0,
        };
        let text = r#"{"charge": "yes", "per_slot_power_kw": [10, 10, 10, 10, 10]}"#;
        let d = parse_decision_response(text, &v, &schedule(), &grid()).unwrap();
        assert!((d.energy_total_kwh() - 5.0).abs() < EPS);
        assert_eq!(d.power_kw(), &[5.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn parse_accepts_charge_no_without_power_list() {
        let d = parse_decision_response(r#"{"charge": "no"}"#, &vehicle(), &schedule(), &grid())
            .unwrap();
        assert_eq!(d.energy_total_kwh(), 0.0);
    }
}
