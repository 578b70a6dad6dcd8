use std::time::Duration;

use lfmc_cli::{ExternalError, ExternalModel, ExternalModelSpec};
use lfmc_core::Model;

fn echo(args: &[&str]) -> ExternalModelSpec {
    let mut command = vec![env!("CARGO_BIN_EXE_lfmc-echo-model").to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    ExternalModelSpec::new(command)
}

fn spawn(args: &[&str], timeout_ms: u64) -> ExternalModel {
    ExternalModel::spawn("double", &echo(args), Duration::from_millis(timeout_ms)).unwrap()
}

#[test]
fn sum_of_inputs() {
    let m = spawn(&["sum"], 5_000);
    assert_eq!(m.call(&[1.0, 2.0, 3.0]).unwrap(), 6.0);
    assert_eq!(m.call(&[-0.5]).unwrap(), -0.5);
    assert_eq!(m.evaluate(&[0.25, 0.25]).unwrap(), 0.5);
}

#[test]
fn values_survive_the_round_trip_exactly() {
    let m = spawn(&["sum"], 5_000);
    for x in [0.1, 1.0 / 3.0, -2.718_281_828_459_1, 1e-300, 6.02e23] {
        assert_eq!(m.call(&[x]).unwrap(), x);
    }
}

#[test]
fn immediate_exit_reports_the_exit_code() {
    let m = spawn(&["exit", "7"], 5_000);
    match m.call(&[1.0]) {
        Err(ExternalError::Exited { status, stderr, .. }) => {
            assert!(status.contains('7'), "{status}");
            assert!(stderr.contains("exiting on request"), "{stderr}");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(m.call(&[1.0]), Err(ExternalError::Closed { .. })));
}

#[test]
fn id_mismatch_is_a_protocol_error() {
    let m = spawn(&["wrong-id"], 5_000);
    match m.call(&[1.0]) {
        Err(ExternalError::IdMismatch { expected, got, .. }) => assert_eq!((expected, got), (0, 1)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_reply_is_rejected() {
    let m = spawn(&["garbage"], 5_000);
    assert!(matches!(m.call(&[1.0]), Err(ExternalError::Malformed { .. })));
}

#[test]
fn slow_reply_times_out() {
    let m = spawn(&["sleep", "2000"], 100);
    assert!(matches!(m.call(&[1.0]), Err(ExternalError::Timeout { .. })));
}

#[test]
fn child_dying_mid_run_is_reported() {
    let m = spawn(&["die-after", "2"], 5_000);
    assert_eq!(m.call(&[1.0]).unwrap(), 1.0);
    assert_eq!(m.call(&[2.0]).unwrap(), 2.0);
    match m.call(&[3.0]) {
        Err(ExternalError::Exited { status, .. }) => assert!(status.contains('3'), "{status}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_executable_fails_to_spawn() {
    let spec = ExternalModelSpec::new(vec!["/nonexistent/model".into()]);
    assert!(matches!(
        ExternalModel::spawn("x", &spec, Duration::from_secs(1)),
        Err(ExternalError::Spawn { .. })
    ));
}

#[test]
fn spec_validation() {
    let ok = echo(&["sum"]);
    assert!(ok.validate(2).is_ok());
    assert!(ExternalModelSpec { timeout: 0.0, ..ok.clone() }.validate(2).is_err());
    assert!(ExternalModelSpec { tau: -1.0, ..ok.clone() }.validate(2).is_err());
    assert!(ExternalModelSpec { input_indices: Some(vec![2]), ..ok.clone() }.validate(2).is_err());
    assert!(ExternalModelSpec::new(vec![]).validate(2).is_err());
}
