//! Analytic gradients against central finite differences.

mod support;

use support::fd_suite;

#[test]
fn masked_cross_entropy_scores() {
    let (what, report) = fd_suite::masked_cross_entropy_scores();
    report.assert_ok(what);
}

#[test]
fn two_layer_mlp() {
    let (what, report) = fd_suite::two_layer_mlp();
    report.assert_ok(what);
}

#[test]
fn half_convolution() {
    let (what, report) = fd_suite::half_convolution();
    report.assert_ok(what);
}

#[test]
fn policy_network_with_cross_entropy() {
    let (what, report) = fd_suite::policy_network_with_cross_entropy();
    report.assert_ok(what);
}

#[test]
fn prenorm_and_embedding_inputs() {
    let (what, report) = fd_suite::prenorm_and_embedding_inputs();
    report.assert_ok(what);
}

#[test]
fn reinforce_log_probability() {
    let (what, report) = fd_suite::reinforce_log_probability();
    report.assert_ok(what);
}

#[test]
fn ppo_clipped_objective() {
    let (what, report) = fd_suite::ppo_clipped_objective();
    report.assert_ok(what);
}

#[test]
fn value_loss() {
    let (what, report) = fd_suite::value_loss();
    report.assert_ok(what);
}

#[test]
fn discriminator_loss() {
    let (what, report) = fd_suite::discriminator_loss();
    report.assert_ok(what);
}
