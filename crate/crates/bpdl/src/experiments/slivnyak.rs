//! Monte Carlo check of the Poisson Palm identity
//! `E[sum_i h(x_i, nu)] = int m(dx) E[h(x, nu + delta_x)]`.

use serde::Serialize;

use crate::population::poisson_configuration;
use crate::rng::replicate_rng;
use crate::stats::dist::mean_var_se;

/// Small catalog of Palm statistics `h(x, nu)` with `B = [-b_radius, b_radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PalmStatistic {
    /// `h(x, nu) = 1_B(x)`; both sides equal `m(B)`.
    IndicatorCount,
    /// `h(x, nu) = 1_B(x) nu(B)`; LHS is `E[N_B^2] = lambda^2 + lambda`.
    CountWeighted,
    /// `h = 0`; both sides vanish.
    Zero,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlivnyakPlan {
    /// Sampling window half-width (window is `[-w, w]`).
    pub window_halfwidth: f64,
    pub intensity: f64,
    /// Half-width of the set `B`.
    pub b_radius: f64,
    pub statistics: Vec<PalmStatistic>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlivnyakResult {
    pub statistic: PalmStatistic,
    pub lhs_mean: f64,
    pub lhs_stderr: f64,
    pub rhs_mean: f64,
    pub rhs_stderr: f64,
    /// Analytic value where one exists.
    pub analytic: Option<f64>,
    /// 3-sigma intervals of both sides overlap.
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlivnyakSummary {
    pub lambda_b: f64,
    pub results: Vec<SlivnyakResult>,
    pub all_pass: bool,
}

pub fn slivnyak_check(plan: &SlivnyakPlan) -> SlivnyakSummary {
    assert!(plan.b_radius <= plan.window_halfwidth, "B must sit inside the window");
    let lambda_b = plan.intensity * 2.0 * plan.b_radius;
    let mut lhs: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.replicates); plan.statistics.len()];
    let mut rhs: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.replicates); plan.statistics.len()];
    let mut rng = replicate_rng(plan.seed, 0);
    let w = plan.window_halfwidth;
    for _ in 0..plan.replicates {
        let pop = poisson_configuration(&[(-w, w)], plan.intensity, &mut rng);
        let n_b = pop.iter().filter(|x| x[0].abs() <= plan.b_radius).count() as f64;
        for (k, stat) in plan.statistics.iter().enumerate() {
            let (l, r) = match stat {
                // sum over points of B of 1 = N_B; RHS integrand is 1
                PalmStatistic::IndicatorCount => (n_b, lambda_b),
                // sum over points of B of nu(B) = N_B^2; adding the Palm
                // point makes the RHS integrand nu(B) + 1
                PalmStatistic::CountWeighted => (n_b * n_b, lambda_b * (n_b + 1.0)),
                PalmStatistic::Zero => (0.0, 0.0),
            };
            lhs[k].push(l);
            rhs[k].push(r);
        }
    }
    let mut results = Vec::with_capacity(plan.statistics.len());
    for (k, stat) in plan.statistics.iter().enumerate() {
        let (lm, _, lse) = mean_var_se(&lhs[k]);
        let (rm, _, rse) = mean_var_se(&rhs[k]);
        let analytic = match stat {
            PalmStatistic::IndicatorCount => Some(lambda_b),
            PalmStatistic::CountWeighted => Some(lambda_b * lambda_b + lambda_b),
            PalmStatistic::Zero => Some(0.0),
        };
        let pass = (lm - rm).abs() <= 3.0 * (lse + rse);
        results.push(SlivnyakResult {
            statistic: *stat,
            lhs_mean: lm,
            lhs_stderr: lse,
            rhs_mean: rm,
            rhs_stderr: rse,
            analytic,
            pass,
        });
    }
    let all_pass = results.iter().all(|r| r.pass);
    SlivnyakSummary { lambda_b, results, all_pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_catalog_agrees() {
        let plan = SlivnyakPlan {
            window_halfwidth: 2.0,
            intensity: 3.0,
            b_radius: 1.0,
            statistics: vec![
                PalmStatistic::IndicatorCount,
                PalmStatistic::CountWeighted,
                PalmStatistic::Zero,
            ],
            replicates: 20_000,
            seed: 99,
        };
        let summary = slivnyak_check(&plan);
        assert!(summary.all_pass, "{summary:?}");
        // count-weighted LHS matches lambda^2 + lambda
        let cw = &summary.results[1];
        let expect = cw.analytic.unwrap();
        assert!(
            (cw.lhs_mean - expect).abs() <= 3.0 * cw.lhs_stderr,
            "lhs {} vs analytic {expect}",
            cw.lhs_mean
        );
        // zero statistic is exactly zero on both sides
        let z = &summary.results[2];
        assert_eq!(z.lhs_mean, 0.0);
        assert_eq!(z.rhs_mean, 0.0);
    }
}
