//! User population generation: a seeded synthetic path for deterministic
//! runs, and an LLM-backed path that parses persona records from a model
//! reply, repairs them, and tops the population up synthetically so the
//! requested count always comes back.
//!
//! Synthetic distributions (also the clamp ranges used to repair model
//! output):
//!
//! | field                  | distribution                                |
//! |------------------------|---------------------------------------------|
//! | age                    | uniform integer 20..=70                     |
//! | income_level           | low 0.3, medium 0.5, high 0.2               |
//! | psychological traits   | uniform [0, 1] each                         |
//! | occupation, residence  | uniform over fixed lists below              |
//! | battery_capacity_kwh   | uniform over {40, 50, 60, 75}               |
//! | soc                    | uniform [0.1, 0.6]                          |
//! | max_charge_power_kw    | uniform over {7.4, 11, 22}                  |
//! | charge_efficiency      | fixed 0.95                                  |
//! | reservation_price      | uniform [λ_min, λ_max]                      |
//! | target_soc             | uniform [0.7, 0.95]                         |
//! | required_soc_for_trip  | uniform [0.1, target_soc]                   |
//! | preferred_window       | full window w.p. 0.7, else a contiguous     |
//! |                        | sub-window of at least ceil(H/2) slots      |

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    IncomeLevel, PriceBounds, TimeGrid, UserProfile, UserRecord, VehicleState,
};
use crate::gateway::{CompletionRequest, GatewayError, LlmGateway};

const OCCUPATIONS: &[&str] = &[
    "teacher",
    "software engineer",
    "nurse",
    "retail manager",
    "electrician",
    "accountant",
    "graduate student",
    "civil servant",
    "delivery driver",
    "retired",
];

const RESIDENCES: &[&str] = &[
    "downtown apartment",
    "suburban house",
    "townhouse",
    "rural home",
    "university housing",
];

const BATTERY_CAPACITIES_KWH: &[f64] = &[40.0, 50.0, 60.0, 75.0];
const CHARGE_POWERS_KW: &[f64] = &[7.4, 11.0, 22.0];
const DEFAULT_CHARGE_EFFICIENCY: f64 = 0.95;

const AGE_RANGE: (u32, u32) = (20, 70);
const SOC_RANGE: (f64, f64) = (0.1, 0.6);
const TARGET_SOC_RANGE: (f64, f64) = (0.7, 0.95);
const REQUIRED_SOC_FLOOR: f64 = 0.1;

/// Draws `n` users from the documented distributions. A pure function of its
/// arguments: the same seed always produces field-identical lists.
pub fn generate_synthetic_users(
    n: usize,
    grid: &TimeGrid,
    bounds: &PriceBounds,
    seed: u64,
) -> Vec<UserRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| synth_user(i, grid, bounds, &mut rng)).collect()
}

fn synth_user(index: usize, grid: &TimeGrid, bounds: &PriceBounds, rng: &mut ChaCha8Rng) -> UserRecord {
    let age = rng.gen_range(AGE_RANGE.0..=AGE_RANGE.1);
    let income_roll: f64 = rng.gen();
    let income_level = if income_roll < 0.3 {
        IncomeLevel::Low
    } else if income_roll < 0.8 {
        IncomeLevel::Medium
    } else {
        IncomeLevel::High
    };
    let occupation = OCCUPATIONS[rng.gen_range(0..OCCUPATIONS.len())].to_string();
    let residence = RESIDENCES[rng.gen_range(0..RESIDENCES.len())].to_string();
    let environmental_awareness = rng.gen_range(0.0..=1.0);
    let tech_acceptance = rng.gen_range(0.0..=1.0);
    let risk_preference = rng.gen_range(0.0..=1.0);
    let battery_capacity_kwh = BATTERY_CAPACITIES_KWH[rng.gen_range(0..BATTERY_CAPACITIES_KWH.len())];
    let soc = rng.gen_range(SOC_RANGE.0..=SOC_RANGE.1);
    let max_charge_power_kw = CHARGE_POWERS_KW[rng.gen_range(0..CHARGE_POWERS_KW.len())];
    let reservation_price = rng.gen_range(bounds.min..=bounds.max);
    let target_soc = rng.gen_range(TARGET_SOC_RANGE.0..=TARGET_SOC_RANGE.1);
    let required_soc_for_trip = rng.gen_range(REQUIRED_SOC_FLOOR..=target_soc);
    let preferred_window = draw_window(grid.slot_count, rng);

    UserRecord {
        profile: UserProfile {
            user_id: format!("user-{:04}", index + 1),
            age,
            occupation,
            income_level,
            residence,
            environmental_awareness,
            tech_acceptance,
            risk_preference,
            reservation_price,
            preferred_window,
            target_soc,
            required_soc_for_trip,
        },
        vehicle: VehicleState {
            battery_capacity_kwh,
            soc,
            max_charge_power_kw,
            charge_efficiency: DEFAULT_CHARGE_EFFICIENCY,
        },
    }
}

fn draw_window(slot_count: usize, rng: &mut ChaCha8Rng) -> BTreeSet<usize> {
    let full: BTreeSet<usize> = (0..slot_count).collect();
    if rng.gen::<f64>() < 0.7 || slot_count <= 1 {
        return full;
    }
    let min_len = slot_count.div_ceil(2);
    let len = rng.gen_range(min_len..=slot_count);
    let start = rng.gen_range(0..=slot_count - len);
    (start..start + len).collect()
}

/// What happened while building an LLM-backed population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonaGenReport {
    /// Records accepted from the model reply (after any repairs).
    pub accepted: usize,
    /// Accepted records that needed at least one field clamped into range.
    pub repaired: usize,
    /// Records discarded as unrepairable.
    pub dropped: usize,
    /// Users generated synthetically to reach the requested count.
    pub synthetic_fill: usize,
    /// Present when the gateway call failed and the population fell back to
    /// fully synthetic generation.
    pub gateway_error: Option<String>,
}

/// Prompting parameters for persona generation. Temperature defaults to 0.8:
/// unlike decisions, population diversity is wanted here.
#[derive(Debug, Clone)]
pub struct PersonaPromptConfig {
    pub model: String,
    pub temperature: f64,
}

impl Default for PersonaPromptConfig {
    fn default() -> Self {
        Self { model: "gpt-4o-mini".into(), temperature: 0.8 }
    }
}

pub const PERSONA_SYSTEM_TEXT: &str =
    "You invent plausible electric-vehicle owner personas for a charging study. \
     Reply with the requested JSON only.";

/// Deterministic persona request: the expected reply is a fenced JSON array
/// of records with the exact fields listed in the prompt.
pub fn build_persona_prompt(n: usize, grid: &TimeGrid, bounds: &PriceBounds) -> String {
    format!(
        "Invent {n} distinct electric-vehicle owner personas for a demand-response \
         study. The charging window has {h} slots numbered 0..{h_minus}. Retail prices \
         range from {min} to {max} $/kWh.\n\n\
         Reply with exactly one fenced JSON block containing an array of {n} objects, \
         each with these fields:\n\n\
         ```json\n\
         [{{\"age\": 34, \"occupation\": \"teacher\", \"income_level\": \"medium\", \
         \"residence\": \"suburban house\", \"environmental_awareness\": 0.6, \
         \"tech_acceptance\": 0.7, \"risk_preference\": 0.4, \"reservation_price\": 0.15, \
         \"target_soc\": 0.8, \"required_soc_for_trip\": 0.4, \"battery_capacity_kwh\": 50, \
         \"soc\": 0.3, \"max_charge_power_kw\": 11, \"preferred_slots\": [0, 1, 2]}}]\n\
         ```\n\n\
         income_level must be one of low/medium/high; soc values are fractions in [0, 1]; \
         reservation_price must lie within the retail range; preferred_slots lists the \
         window slots the persona will charge in.\n",
        n = n,
        h = grid.slot_count,
        h_minus = grid.slot_count.saturating_sub(1),
        min = bounds.min,
        max = bounds.max,
    )
}

/// Generates `n` users via the gateway, validating every record through the
/// domain invariants. Out-of-range numerics are clamped (counted as repairs),
/// unusable records are dropped, and the population is topped up
/// synthetically so exactly `n` users come back. Never fails: a gateway error
/// degrades to fully synthetic output, reported in the return value.
pub fn generate_llm_users(
    n: usize,
    grid: &TimeGrid,
    bounds: &PriceBounds,
    seed: u64,
    gateway: &LlmGateway,
    cfg: &PersonaPromptConfig,
) -> (Vec<UserRecord>, PersonaGenReport) {
    let mut report = PersonaGenReport::default();
    if n == 0 {
        return (Vec::new(), report);
    }
    let request = CompletionRequest {
        model: cfg.model.clone(),
        system_text: PERSONA_SYSTEM_TEXT.to_string(),
        user_text: build_persona_prompt(n, grid, bounds),
        max_tokens: (256 + 160 * n as u32).min(8192),
        temperature: cfg.temperature,
    };
    let mut users: Vec<UserRecord> = Vec::with_capacity(n);
    match gateway.complete(&request) {
        Ok(result) => {
            for item in extract_persona_items(&result.text) {
                if users.len() == n {
                    break;
                }
                match persona_from_value(&item, users.len(), grid, bounds) {
                    Some((record, was_repaired)) => {
                        users.push(record);
                        report.accepted += 1;
                        if was_repaired {
                            report.repaired += 1;
                        }
                    }
                    None => report.dropped += 1,
                }
            }
        }
        Err(err) => report.gateway_error = Some(describe_gateway_error(&err)),
    }
    if users.len() < n {
        report.synthetic_fill = n - users.len();
        let fill = generate_synthetic_users(report.synthetic_fill, grid, bounds, seed);
        for (offset, mut record) in fill.into_iter().enumerate() {
            record.profile.user_id = format!("user-{:04}", users.len() + offset + 1);
            users.push(record);
        }
    }
    (users, report)
}

fn describe_gateway_error(err: &GatewayError) -> String {
    err.to_string()
}

/// Pulls the JSON array out of the reply: fenced block first, then the first
/// balanced `[...]` span.
fn extract_persona_items(text: &str) -> Vec<serde_json::Value> {
    let candidate = if let Some(start) = text.find("```json") {
        let body = &text[start + "```json".len()..];
        body.find("```").map(|end| body[..end].trim().to_string())
    } else {
        None
    };
    let candidate = candidate.or_else(|| {
        let open = text.find('[')?;
        let close = text.rfind(']')?;
        (close > open).then(|| text[open..=close].to_string())
    });
    candidate
        .and_then(|c| serde_json::from_str::<serde_json::Value>(&c).ok())
        .and_then(|v| v.as_array().cloned())
        .unwrap_or_default()
}

/// Clamp that flags whether it changed anything.
fn clamp_tracked(value: f64, lo: f64, hi: f64, repaired: &mut bool) -> f64 {
    let clamped = value.clamp(lo, hi);
    if clamped != value {
        *repaired = true;
    }
    clamped
}

fn persona_from_value(
    item: &serde_json::Value,
    index: usize,
    grid: &TimeGrid,
    bounds: &PriceBounds,
) -> Option<(UserRecord, bool)> {
    let obj = item.as_object()?;
    let num = |key: &str| obj.get(key).and_then(|v| v.as_f64()).filter(|v| v.is_finite());
    let mut repaired = false;

    let age_raw = num("age")?;
    let age = clamp_tracked(age_raw, AGE_RANGE.0 as f64, AGE_RANGE.1 as f64, &mut repaired) as u32;
    let environmental_awareness =
        clamp_tracked(num("environmental_awareness")?, 0.0, 1.0, &mut repaired);
    let tech_acceptance = clamp_tracked(num("tech_acceptance")?, 0.0, 1.0, &mut repaired);
    let risk_preference = clamp_tracked(num("risk_preference")?, 0.0, 1.0, &mut repaired);
    let reservation_price =
        clamp_tracked(num("reservation_price")?, bounds.min, bounds.max, &mut repaired);
    let target_soc =
        clamp_tracked(num("target_soc")?, TARGET_SOC_RANGE.0, TARGET_SOC_RANGE.1, &mut repaired);
    let required_soc_for_trip =
        clamp_tracked(num("required_soc_for_trip")?, REQUIRED_SOC_FLOOR, target_soc, &mut repaired);
    let battery_capacity_kwh = clamp_tracked(
        num("battery_capacity_kwh")?,
        BATTERY_CAPACITIES_KWH[0],
        *BATTERY_CAPACITIES_KWH.last().expect("capacity list non-empty"),
        &mut repaired,
    );
    let soc = clamp_tracked(num("soc")?, SOC_RANGE.0, SOC_RANGE.1, &mut repaired);
    let max_charge_power_kw = clamp_tracked(
        num("max_charge_power_kw")?,
        CHARGE_POWERS_KW[0],
        *CHARGE_POWERS_KW.last().expect("power list non-empty"),
        &mut repaired,
    );

    let income_level = match obj.get("income_level").and_then(|v| v.as_str()) {
        Some(s) => match s.to_ascii_lowercase().as_str() {
            "low" => IncomeLevel::Low,
            "medium" => IncomeLevel::Medium,
            "high" => IncomeLevel::High,
            _ => {
                repaired = true;
                IncomeLevel::Medium
            }
        },
        None => {
            repaired = true;
            IncomeLevel::Medium
        }
    };
    let occupation = obj
        .get("occupation")
        .and_then(|v| v.as_str())
        .unwrap_or("unspecified")
        .to_string();
    let residence = obj
        .get("residence")
        .and_then(|v| v.as_str())
        .unwrap_or("unspecified")
        .to_string();

    let mut preferred_window: BTreeSet<usize> = obj
        .get("preferred_slots")
        .and_then(|v| v.as_array())
        .map(|arr| {
            arr.iter()
                .filter_map(|v| v.as_u64())
                .map(|s| s as usize)
                .filter(|&s| s < grid.slot_count)
                .collect()
        })
        .unwrap_or_default();
    if preferred_window.is_empty() {
        preferred_window = (0..grid.slot_count).collect();
    }

    let record = UserRecord {
        profile: UserProfile {
            user_id: format!("user-{:04}", index + 1),
            age,
            occupation,
            income_level,
            residence,
            environmental_awareness,
            tech_acceptance,
            risk_preference,
            reservation_price,
            preferred_window,
            target_soc,
            required_soc_for_trip,
        },
        vehicle: VehicleState {
            battery_capacity_kwh,
            soc,
            max_charge_power_kw,
            charge_efficiency: DEFAULT_CHARGE_EFFICIENCY,
        },
    };
    Some((record, repaired))
}
