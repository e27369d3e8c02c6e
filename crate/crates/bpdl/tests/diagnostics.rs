//! Statistical diagnostics pinned to independent oracles: linear chains
//! with closed forms, estimator consistency ladders, and qualitative
//! regime checks.

use std::sync::Arc;

use bpdl::experiments::{eval_generator, BoundedMap};
use bpdl::params::{make_params, presets};
use bpdl::population::{multiplicity_check, Population};
use bpdl::sim::{EngineKind, Horizon, InitialCondition, ReplicateSpec};
use bpdl::stats::{self, dist::mean_var_se};
use bpdl::trace::SnapshotPlan;
use bpdl::{Kernel, RateField, SpatialDomain, TestFn};

fn linear_params(gamma: f64, mu: f64, side: f64) -> Arc<bpdl::ModelParams> {
    Arc::new(
        make_params(
            SpatialDomain::Torus { side, dim: 1 },
            RateField::constant(gamma),
            RateField::constant(mu),
            RateField::constant(0.0),
            Kernel::tophat(1, 1.0, 1.0),
            Kernel::tophat(1, 0.5, 1.0),
        )
        .unwrap(),
    )
}

#[test]
fn pure_death_mean_count_follows_exponential() {
    // N0 = 3, mu = 1: E[N(t)] = 3 e^{-t}
    let spec = ReplicateSpec::new(
        linear_params(0.0, 1.0, 10.0),
        EngineKind::Faithful,
        InitialCondition::UniformIid { count: 3, window: None },
        Horizon::UntilTime(1.0),
        SnapshotPlan::at_times(vec![0.0, 0.5, 1.0]),
    )
    .seeded(2024, 10_000);
    let traces = spec.run_all().unwrap();
    for t in [0.5, 1.0] {
        let stat = stats::estimate_count(&traces, t).unwrap();
        let expect = 3.0 * (-t).exp();
        assert!(
            (stat.mean - expect).abs() <= 3.0 * stat.stderr,
            "t = {t}: mean {} vs {expect} (se {})",
            stat.mean,
            stat.stderr
        );
    }
}

#[test]
fn linear_birth_death_moment_residual_and_growth() {
    // alpha = 0: dn/dt = (gamma - mu) n, count grows like 30 e^t
    let params = Arc::new(
        make_params(
            SpatialDomain::Torus { side: 10.0, dim: 1 },
            RateField::constant(2.0),
            RateField::constant(1.0),
            RateField::constant(0.0),
            Kernel::tophat(1, 1.0, 1.0),
            Kernel::tophat(1, 0.5, 1.0),
        )
        .unwrap(),
    );
    let mut plan = SnapshotPlan::at_times(vec![0.0, 0.95, 1.0, 1.05]);
    plan.record_pair_u = true;
    let spec = ReplicateSpec::new(
        params.clone(),
        EngineKind::Faithful,
        InitialCondition::UniformIid { count: 30, window: None },
        Horizon::UntilTime(1.05),
        plan,
    )
    .seeded(2025, 4000);
    let traces = spec.run_all().unwrap();

    let stat = stats::estimate_count(&traces, 1.0).unwrap();
    let expect = 30.0 * 1.0f64.exp();
    assert!(
        (stat.mean - expect).abs() <= 3.0 * stat.stderr,
        "mean {} vs {expect} (se {})",
        stat.mean,
        stat.stderr
    );

    let r = stats::moment_residual(&traces, 1.0, 0.05, &params, 0.99, 11).unwrap();
    assert!(r.contains_zero, "{r:?}");

    // estimators are pure: identical inputs give identical bits
    let r2 = stats::moment_residual(&traces, 1.0, 0.05, &params, 0.99, 11).unwrap();
    assert_eq!(r.residual.to_bits(), r2.residual.to_bits());
    assert_eq!(r.ci_low.to_bits(), r2.ci_low.to_bits());
    assert_eq!(r.ci_high.to_bits(), r2.ci_high.to_bits());

    // CI width shrinks like 1/sqrt(replicates): quarter sample vs full
    let quarter = &traces[..1000];
    let rq = stats::moment_residual(quarter, 1.0, 0.05, &params, 0.99, 11).unwrap();
    let ratio = (r.ci_high - r.ci_low) / (rq.ci_high - rq.ci_low);
    assert!(
        (0.25..=0.75).contains(&ratio),
        "width ratio {ratio} (expected about 0.5)"
    );
}

#[test]
fn yule_process_martingale_bracket() {
    // mu = alpha = 0, gamma = 1 from 5 founders:
    // <M^1>_t = gamma int N_s ds with mean 5(e^t - 1) at t = 1
    let spec = ReplicateSpec::new(
        linear_params(1.0, 0.0, 10.0),
        EngineKind::Faithful,
        InitialCondition::UniformIid { count: 5, window: None },
        Horizon::UntilTime(1.0),
        SnapshotPlan::at_times(vec![0.0, 1.0]),
    )
    .with_observers(vec![TestFn::One])
    .seeded(2026, 10_000);
    let traces = spec.run_all().unwrap();
    let check = stats::martingale_residual(&traces, 0, 1.0).unwrap();
    let expect = 5.0 * (1.0f64.exp() - 1.0);
    let brackets: Vec<f64> = traces
        .iter()
        .map(|t| t.snapshot_at(1.0).unwrap().observables[0].bracket_int)
        .collect();
    let (mean_b, _, se_b) = mean_var_se(&brackets);
    assert!(
        (mean_b - expect).abs() <= 3.0 * se_b,
        "bracket mean {mean_b} vs {expect} (se {se_b})"
    );
    // variance matches the bracket tightly at this replicate count
    let ratio = check.bracket_ratio.unwrap();
    assert!((0.9..=1.1).contains(&ratio), "bracket ratio {ratio}");
    assert!(check.mean.abs() <= 3.0 * check.stderr);

    // a two-point replicate ladder moves the ratio toward 1 (or stays
    // inside [0.9, 1.1] at the larger size)
    let small = stats::martingale_residual(&traces[..2500], 0, 1.0).unwrap();
    let small_ratio = small.bracket_ratio.unwrap();
    assert!(
        (ratio - 1.0).abs() <= (small_ratio - 1.0).abs() || (0.9..=1.1).contains(&ratio),
        "ladder did not move toward 1: {small_ratio} -> {ratio}"
    );
}

#[test]
fn degenerate_observable_reports_no_ratio() {
    // an indicator of radius 0 vanishes almost surely: M = 0, bracket 0
    let spec = ReplicateSpec::new(
        linear_params(1.0, 1.0, 10.0),
        EngineKind::Faithful,
        InitialCondition::UniformIid { count: 3, window: None },
        Horizon::UntilTime(0.5),
        SnapshotPlan::at_times(vec![0.0, 0.5]),
    )
    .with_observers(vec![TestFn::Indicator { radius: 0.0 }])
    .seeded(2027, 100);
    let traces = spec.run_all().unwrap();
    let check = stats::martingale_residual(&traces, 0, 0.5).unwrap();
    assert_eq!(check.mean, 0.0);
    assert!(check.bracket_ratio.is_none(), "ratio must be reported as NA");
}

#[test]
fn sup_count_diagnostic_is_stable_across_batches() {
    // finite p-th moment diagnostic: the replicate mean of sup_t N(t)
    // stays stable when the batch doubles (no heavy-tail blowup)
    let params = Arc::new(presets::fig_params(10.0));
    let spec = ReplicateSpec::new(
        params,
        EngineKind::Indexed,
        InitialCondition::UniformIid { count: 33, window: None },
        Horizon::UntilTime(10.0),
        SnapshotPlan::regular(10.0, 0.25),
    )
    .seeded(2028, 400);
    let traces = spec.run_all().unwrap();
    let sups: Vec<f64> = traces
        .iter()
        .map(|t| t.snapshots.iter().map(|s| s.count).max().unwrap() as f64)
        .collect();
    let (m_all, _, se_all) = mean_var_se(&sups);
    let (m_half, _, se_half) = mean_var_se(&sups[..200]);
    assert!(m_all.is_finite() && m_all > 0.0);
    assert!(
        (m_all - m_half).abs() <= 3.0 * (se_all * se_all + se_half * se_half).sqrt(),
        "sup-count mean unstable: {m_half} vs {m_all}"
    );
}

#[test]
fn stationary_pair_correlation_is_negative_at_short_range() {
    // competition-induced regularity: c(r) < 0 for r < 1/2
    let params = Arc::new(presets::fig_params(10.0));
    let mut plan = SnapshotPlan::at_times(vec![0.0, 30.0]);
    plan.record_positions = true;
    let spec = ReplicateSpec::new(
        params.clone(),
        EngineKind::Indexed,
        InitialCondition::UniformIid { count: 33, window: None },
        Horizon::UntilTime(30.0),
        plan,
    )
    .seeded(2029, 400);
    let mut traces = spec.run_all().unwrap();
    traces.retain(|t| t.extinct_at.is_none());
    let est = stats::covariance_measure(&traces, 30.0, &[(0.0, 0.5)], &params).unwrap();
    let bin = &est.bins[0];
    assert!(
        bin.value < 0.0 && bin.value.abs() > 3.0 * bin.stderr,
        "short-range covariance {} (se {})",
        bin.value,
        bin.stderr
    );
}

#[test]
fn early_profile_is_localized() {
    // at t = 3 the colonization front has not equilibrated: the profile
    // still humps near the founding origin and thins toward the antipode
    let cfg = bpdl::config::preset("fig1").unwrap();
    let mut spec = cfg.replicate_spec(Some(4242)).unwrap();
    spec.replicates = 60;
    let mut traces = spec.run_all().unwrap();
    traces.retain(|t| t.extinct_at.is_none());
    let near = stats::density_histogram(&traces, 3.0, &[-1.0, 1.0]).unwrap();
    let far = stats::density_histogram(&traces, 3.0, &[15.0, 20.0]).unwrap();
    assert!(near[0].intensity > 1.0, "near-origin intensity {}", near[0].intensity);
    assert!(
        far[0].intensity < 0.5 * near[0].intensity,
        "far field {} not below half the origin hump {}",
        far[0].intensity,
        near[0].intensity
    );
    // by t = 25 the same far bins have relaxed to the common level
    let far_late = stats::density_histogram(&traces, 25.0, &[15.0, 20.0]).unwrap();
    assert!(far_late[0].intensity > 2.0, "late far field {}", far_late[0].intensity);
}

#[test]
fn continuous_dispersal_keeps_multiplicity_one() {
    let params = Arc::new(presets::fig_params(10.0));
    let mut plan = SnapshotPlan::regular(5.0, 1.0);
    plan.record_positions = true;
    let spec = ReplicateSpec::new(
        params,
        EngineKind::Faithful,
        InitialCondition::UniformIid { count: 20, window: None },
        Horizon::UntilTime(5.0),
        plan,
    )
    .seeded(2030, 20);
    let traces = spec.run_all().unwrap();
    for tr in &traces {
        for snap in &tr.snapshots {
            let pos = snap.positions.as_ref().unwrap();
            let pop = Population::from_positions(
                1,
                &pos.chunks_exact(1).map(|c| c.to_vec()).collect::<Vec<_>>(),
            );
            if !pop.is_empty() {
                assert_eq!(multiplicity_check(&pop), 1, "collision at t = {}", snap.t);
            }
        }
    }
}

#[test]
fn neutral_growth_superprocess_drift_is_nonpositive() {
    // beta = 0 at n = 30 (accelerated rates gamma_n = mu_n = 30): the
    // compensated mass drift is pure competition, so mean mass cannot grow
    let params = Arc::new(
        make_params(
            SpatialDomain::Unbounded { dim: 1 },
            RateField::constant(30.0),
            RateField::constant(30.0),
            RateField::constant(0.01),
            Kernel::gaussian(1, 0.5 / 30.0, 1.0),
            Kernel::tophat(1, 0.5, 1.0),
        )
        .unwrap(),
    );
    let spec = ReplicateSpec::new(
        params,
        EngineKind::Indexed,
        InitialCondition::UniformIid { count: 30, window: Some(vec![(-1.0, 1.0)]) },
        Horizon::UntilTime(1.0),
        SnapshotPlan::at_times(vec![0.0, 1.0]),
    )
    .seeded(2031, 300);
    let traces = spec.run_all().unwrap();
    let finals: Vec<f64> = traces.iter().map(|t| t.final_count as f64 / 30.0).collect();
    let (mean, _, se) = mean_var_se(&finals);
    assert!(mean <= 1.0 + 3.0 * se, "mean mass grew: {mean} (se {se})");
}

#[test]
fn generator_closed_form_with_annulus_dispersal() {
    // nu = delta_{0.3}, DBC kernels: L phi = gamma (D*f)(0.3), where the
    // overlap of +/-[0.25, 0.75] shifted by 0.3 with [-1, 1] has length
    // 0.95 at unit density
    let params = presets::dbc_params(None);
    let pop = Population::from_positions(1, &[vec![0.3]]);
    let f = TestFn::Indicator { radius: 1.0 };
    let got =
        eval_generator(BoundedMap::ClampedLinear { cap: 1e9 }, f, &pop, &params).unwrap();
    let expect = 2.0 * 0.95;
    assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
}

#[test]
fn estimators_work_on_written_and_reread_traces() {
    let params = Arc::new(presets::fig_params(10.0));
    let mut plan = SnapshotPlan::regular(2.0, 1.0);
    plan.record_positions = true;
    let spec = ReplicateSpec::new(
        params,
        EngineKind::Faithful,
        InitialCondition::UniformIid { count: 20, window: None },
        Horizon::UntilTime(2.0),
        plan,
    )
    .seeded(2032, 50);
    let traces = spec.run_all().unwrap();

    let mut tcsv = Vec::new();
    bpdl::trace::write_trace_csv(&traces, &mut tcsv).unwrap();
    let mut pcsv = Vec::new();
    bpdl::trace::write_positions_csv(&traces, &mut pcsv).unwrap();
    let back = bpdl::trace::read_trace_csv(
        std::str::from_utf8(&tcsv).unwrap(),
        Some(std::str::from_utf8(&pcsv).unwrap()),
    )
    .unwrap();

    let direct = stats::estimate_count(&traces, 2.0).unwrap();
    let reread = stats::estimate_count(&back, 2.0).unwrap();
    assert_eq!(direct.mean.to_bits(), reread.mean.to_bits());
    let edges = [-5.0, 0.0, 5.0];
    let ha = stats::density_histogram(&traces, 1.0, &edges).unwrap();
    let hb = stats::density_histogram(&back, 1.0, &edges).unwrap();
    for (a, b) in ha.iter().zip(&hb) {
        assert_eq!(a.intensity.to_bits(), b.intensity.to_bits());
    }
}
