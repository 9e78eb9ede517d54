use relicdig_core::{EventKind, Session};

/// Checks the log-level session invariants and returns the number of
/// TRIGGER_REVEALED and COMPLETED events.
pub fn check_log(session: &Session) -> (usize, usize) {
    let params = session.params();
    let mut hits = 0u32;
    let mut last_t = 0.0;
    let mut last_decile = 0;
    let mut revealed = Vec::new();
    let mut completed = 0;
    let mut terminal_at = None;
    for (i, e) in session.events().iter().enumerate() {
        assert!(e.timestamp >= last_t, "timestamps go backwards at {i}");
        last_t = e.timestamp;
        assert!(terminal_at.is_none(), "event after terminal status: {e:?}");
        match &e.event {
            EventKind::Hit { health_after, .. } => {
                hits += 1;
                let expected = params.max_health.saturating_sub(params.hit_penalty * hits);
                assert_eq!(*health_after, expected);
            }
            EventKind::TriggerRevealed { trigger_id, dialog } => {
                assert!(!revealed.contains(trigger_id), "{trigger_id} fired twice");
                let spec_dialog = &session
                    .spec()
                    .triggers
                    .iter()
                    .find(|t| &t.id == trigger_id)
                    .unwrap()
                    .dialog;
                assert_eq!(dialog, spec_dialog);
                revealed.push(trigger_id.clone());
            }
            EventKind::ExposureMilestone { decile } => {
                assert!(*decile > last_decile);
                last_decile = *decile;
            }
            EventKind::Completed { dialog, stats } => {
                assert_eq!(dialog, &session.spec().completion_dialog);
                assert_eq!(stats.hits_taken, hits);
                completed += 1;
                terminal_at = Some(i);
            }
            EventKind::TimeUp { stats } => {
                assert_eq!(stats.hits_taken, hits);
                terminal_at = Some(i);
            }
            EventKind::StrokeApplied { .. } => {}
        }
    }
    let hit_times: Vec<f64> = session
        .events()
        .iter()
        .filter(|e| matches!(e.event, EventKind::Hit { .. }))
        .map(|e| e.timestamp)
        .collect();
    for w in hit_times.windows(2) {
        assert!(w[1] - w[0] >= params.hit_cooldown_s);
    }
    assert_eq!(session.state().hits, hits);
    (revealed.len(), completed)
}
