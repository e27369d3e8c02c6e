//! Classical test statistics and the special functions behind them.

/// Natural log of the gamma function (Lanczos, g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn reg_inc_gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series expansion
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..500 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        1.0 - reg_inc_gamma_q_cf(a, x)
    }
}

// continued fraction for Q(a, x), modified Lentz
fn reg_inc_gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Chi-square upper tail probability with `df` degrees of freedom.
pub fn chi_square_sf(chi2: f64, df: f64) -> f64 {
    (1.0 - reg_inc_gamma_p(df / 2.0, chi2 / 2.0)).clamp(0.0, 1.0)
}

/// Error function via the regularized incomplete gamma (near machine precision).
pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x.signum() * reg_inc_gamma_p(0.5, x * x)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 + 0.5 * erf(z / std::f64::consts::SQRT_2)
}

/// Kolmogorov distribution tail `Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sort_in_place(xs: &mut [f64]) {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
}

/// One-sample Kolmogorov-Smirnov p-value against a given CDF.
///
/// Sorts the sample in place; asymptotic p-value with the usual
/// small-sample correction.
pub fn ks_one_sample_pvalue(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sort_in_place(sample);
    let n = sample.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    let sqrt_n = n.sqrt();
    kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic, handles ties).
pub fn ks_two_sample_pvalue(a: &mut [f64], b: &mut [f64]) -> f64 {
    sort_in_place(a);
    sort_in_place(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)
}

/// Chi-square goodness-of-fit p-value of integer counts against a
/// Poisson(lambda) law with known lambda. Bins with expectation below 5
/// are pooled into their neighbors.
pub fn chi_square_poisson_pvalue(counts: &[usize], lambda: f64) -> f64 {
    let n = counts.len() as f64;
    let kmax = counts.iter().copied().max().unwrap_or(0);
    // Poisson pmf by upward recursion
    let mut pmf = Vec::with_capacity(kmax + 2);
    let mut p = (-lambda).exp();
    pmf.push(p);
    for k in 1..=kmax {
        p *= lambda / k as f64;
        pmf.push(p);
    }
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    let mut observed = vec![0.0f64; kmax + 2];
    for &c in counts {
        observed[c] += 1.0;
    }
    let mut expected: Vec<f64> = pmf.iter().map(|p| p * n).collect();
    expected.push(tail * n);

    // pool sparse bins left to right
    let mut obs_pooled = Vec::new();
    let mut exp_pooled = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(&expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            obs_pooled.push(o_acc);
            exp_pooled.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        if let (Some(o), Some(e)) = (obs_pooled.last_mut(), exp_pooled.last_mut()) {
            *o += o_acc;
            *e += e_acc;
        }
    }
    if obs_pooled.len() < 2 {
        return 1.0;
    }
    let chi2: f64 = obs_pooled
        .iter()
        .zip(&exp_pooled)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    chi_square_sf(chi2, (obs_pooled.len() - 1) as f64)
}

/// Sample mean, variance (unbiased) and standard error.
pub fn mean_var_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    assert!(n >= 2.0, "need at least two samples");
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var, (var / n).sqrt())
}

/// Percentile bootstrap confidence interval of a statistic over replicates.
///
/// `stat` maps a resampled index set to the statistic value.
pub fn bootstrap_ci(
    n_replicates: usize,
    resamples: usize,
    level: f64,
    rng: &mut impl rand::Rng,
    mut stat: impl FnMut(&[usize]) -> f64,
) -> (f64, f64) {
    let mut values = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n_replicates];
    for _ in 0..resamples {
        for v in idx.iter_mut() {
            *v = rng.random_range(0..n_replicates);
        }
        values.push(stat(&idx));
    }
    sort_in_place(&mut values);
    let alpha = (1.0 - level) / 2.0;
    let lo = ((resamples as f64 * alpha) as usize).min(resamples - 1);
    let hi = ((resamples as f64 * (1.0 - alpha)) as usize).min(resamples - 1);
    (values[lo], values[hi])
}

/// Ordinary least squares of y on x; returns (slope, intercept, r_squared).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}
