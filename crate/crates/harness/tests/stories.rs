use gatekeep_harness::adversarial::run_adversarial;
use gatekeep_harness::run_scenario;
use gatekeep_harness::stories::STORIES;

#[test]
fn every_story_passes_with_audit_parity() {
    for (n, _) in STORIES {
        let t = run_scenario(n).unwrap();
        assert!(t.passed(), "story {n}: {:?}", t.first_failure());
        assert_eq!(t.operation_count(), t.event_count(), "story {n}");
        assert!(t.steps.iter().filter(|s| !s.expected_events.is_empty()).all(|s| !s.events.is_empty()));
    }
}

#[test]
fn researcher_invite_is_scripted_as_forbidden() {
    let t = run_scenario(3).unwrap();
    let step = t.steps.iter().find(|s| s.actor == "researcher" && s.op.starts_with("invite")).unwrap();
    assert_eq!((step.expected.as_str(), step.actual.as_str()), ("deny:Forbidden", "deny:Forbidden"));
    assert_eq!(step.events[0].outcome, "deny");
}

#[test]
fn notebook_story_records_a_spawn() {
    let t = run_scenario(6).unwrap();
    assert!(t.steps.iter().any(|s| s.op.contains("notebook spawned") && s.pass));
    let routed = t.steps.iter().filter(|s| s.op.starts_with("GET") && s.actual == "allow").count();
    assert_eq!(routed, 2);
}

#[test]
fn transcripts_are_json_lines() {
    let t = run_scenario(4).unwrap();
    for line in t.to_jsonl().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["story"], 4);
        assert!(v["events"].is_array());
    }
}

#[test]
fn unknown_story() {
    assert!(run_scenario(7).is_none());
}

#[test]
fn adversarial_scripts_agree_with_the_oracle() {
    let r = run_adversarial(10, 30);
    assert!(r.passed(), "{:?}", r.mismatches);
    assert!(r.allowed > 0);
}
