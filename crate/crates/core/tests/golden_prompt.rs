//! Pins the decision prompt template byte-for-byte. The wire format is part
//! of the fixture contract: any template change invalidates every recorded
//! fixture, so it must be deliberate (regenerate the golden file and re-record).

use evdr_core::agents::build_decision_prompt;
use evdr_core::domain::{
    EnvironmentState, IncomeLevel, PriceBounds, PriceSchedule, TimeGrid, UserProfile,
    VehicleState,
};

#[test]
fn decision_prompt_matches_golden_file() {
    let profile = UserProfile {
        user_id: "alice".into(),
        age: 31,
        occupation: "architect".into(),
        income_level: IncomeLevel::Medium,
        residence: "downtown apartment".into(),
        environmental_awareness: 0.8,
        tech_acceptance: 0.9,
        risk_preference: 0.3,
        reservation_price: 0.18,
        preferred_window: (0..5).collect(),
        target_soc: 0.8,
        required_soc_for_trip: 0.4,
    };
    let vehicle = VehicleState {
        battery_capacity_kwh: 50.0,
        soc: 0.3,
        max_charge_power_kw: 11.0,
        charge_efficiency: 0.95,
    };
    let environment = EnvironmentState::new(TimeGrid::default_dr_window(), 18.0);
    let schedule = PriceSchedule::new(
        vec![0.10, 0.09, 0.22, 0.15, 0.12],
        PriceBounds::new(0.09, 0.22),
    );
    let prompt = build_decision_prompt(&profile, &vehicle, &environment, &schedule);
    let golden = include_str!("golden/decision_prompt_alice.txt");
    assert_eq!(prompt, golden, "prompt template drifted from the golden file");
}
