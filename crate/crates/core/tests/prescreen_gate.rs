use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use taiscan_core::prescreen::{
    evaluate, validate_answers, Catalog, Classification, GroupId, PrescreenAnswers, PrescreenRisk,
};

fn ids(c: &Catalog, g: GroupId) -> Vec<String> {
    c.group(g).options.iter().map(|o| o.id.clone()).collect()
}

/// Independent statement of the gate: proceed iff complete criteria, nothing
/// prohibited, no unexemptible trigger, and any exemptible trigger is covered
/// by an exemption.
fn expected_gate(c: &Catalog, a: &PrescreenAnswers) -> bool {
    let complete = ids(c, GroupId::AiCriteria)
        .iter()
        .all(|id| a.ai_criteria_checked.contains(id));
    let harmonisation_hit = !a.harmonisation_checked.is_empty();
    let profiling_hit = a.highrisk_app_checked.contains("highrisk.profiling");
    let app_hit = !a.highrisk_app_checked.is_empty();
    let exempt = !a.exemption_checked.is_empty();
    complete
        && a.prohibited_checked.is_empty()
        && !harmonisation_hit
        && !profiling_hit
        && (!app_hit || exempt)
}

#[test]
fn exhaustive_boolean_abstraction() {
    let c = Catalog::bundled();
    for mask in 0u32..64 {
        let bit = |i: u32| mask & (1 << i) != 0;
        let mut a = PrescreenAnswers::default();
        let criteria = ids(&c, GroupId::AiCriteria);
        a.ai_criteria_checked = if bit(0) {
            criteria.iter().cloned().collect()
        } else {
            criteria[..criteria.len() - 1].iter().cloned().collect()
        };
        if bit(1) {
            a.prohibited_checked.insert("prohibited.social_scoring".into());
        }
        if bit(2) {
            a.harmonisation_checked.insert("harmonisation.machinery".into());
        }
        if bit(3) {
            a.highrisk_app_checked.insert("highrisk.employment".into());
        }
        if bit(4) {
            a.exemption_checked.insert("exemption.preparatory_task".into());
        }
        a.gpai_checked = bit(5);

        let out = evaluate(&c, &a);
        assert_eq!(out.may_proceed, expected_gate(&c, &a), "mask {mask:06b}");
        assert_eq!(
            out.may_proceed,
            out.classification == Classification::AiSystemUnderAiAct
                && out.risk == PrescreenRisk::NotHighRisk
        );
        if bit(1) {
            assert_eq!(out.risk, PrescreenRisk::Prohibited);
            assert!(!out.may_proceed);
        }
        // Without a harmonisation match the abstraction reduces to the
        // questionnaire's plain reading.
        if !bit(2) {
            let plain = bit(0) && !bit(1) && (!bit(3) || bit(4));
            assert_eq!(out.may_proceed, plain, "mask {mask:06b}");
        }
    }
}

fn random_answers(c: &Catalog, rng: &mut ChaCha8Rng) -> PrescreenAnswers {
    let mut a = PrescreenAnswers::default();
    for g in GroupId::ALL {
        let pool = ids(c, g);
        // Bias towards small selections so every region is exercised.
        let n = match rng.random_range(0..4) {
            0 => 0,
            1 => 1,
            2 => rng.random_range(0..=pool.len()),
            _ => pool.len(),
        };
        for id in pool.choose_multiple(rng, n) {
            a.checked_mut(g).insert(id.clone());
        }
    }
    a.gpai_checked = rng.random_bool(0.5);
    a
}

fn to_payload(a: &PrescreenAnswers) -> serde_json::Value {
    json!({
        "ai_criteria_checked": a.ai_criteria_checked,
        "prohibited_checked": a.prohibited_checked,
        "harmonisation_checked": a.harmonisation_checked,
        "highrisk_app_checked": a.highrisk_app_checked,
        "exemption_checked": a.exemption_checked,
        "gpai_checked": a.gpai_checked,
    })
}

#[test]
fn randomized_concrete_payloads() {
    let c = Catalog::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(2024_1689);
    for _ in 0..1000 {
        let drawn = random_answers(&c, &mut rng);
        let a = validate_answers(&c, &to_payload(&drawn)).unwrap();
        assert_eq!(a, drawn);
        let out = evaluate(&c, &a);
        assert_eq!(out.may_proceed, expected_gate(&c, &a), "{a:?}");
        if !a.prohibited_checked.is_empty() {
            assert_eq!(out.risk, PrescreenRisk::Prohibited);
            assert!(!out.may_proceed);
        } else {
            assert_ne!(out.risk, PrescreenRisk::Prohibited);
        }
        assert_eq!(evaluate(&c, &a), out, "evaluation is pure");
        // Every departure from the default outcome is explained.
        if out.risk != PrescreenRisk::NotHighRisk || !out.may_proceed || a.gpai_checked {
            assert!(!out.triggered_rules.is_empty());
        }
    }
}

proptest! {
    #[test]
    fn adding_a_prohibited_option_is_monotone(seed in any::<u64>(), pick in 0usize..8) {
        let c = Catalog::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let before = random_answers(&c, &mut rng);
        let prohibited = ids(&c, GroupId::Prohibited);
        let mut after = before.clone();
        after.prohibited_checked.insert(prohibited[pick % prohibited.len()].clone());
        let (b, a) = (evaluate(&c, &before), evaluate(&c, &after));
        prop_assert_eq!(a.risk, PrescreenRisk::Prohibited);
        prop_assert!(!a.may_proceed);
        prop_assert!(b.may_proceed || !a.may_proceed);
    }
}
