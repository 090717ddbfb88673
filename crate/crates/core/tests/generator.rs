use hetsurv::synthgen::{generate_cohort, preset, BaseRate, ClassHazard, SynthSpec};

/// Kolmogorov-Smirnov statistic of `sample` against the CDF `cdf`.
fn ks_statistic(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the one-sample KS statistic at alpha = 0.01.
fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let var: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    cov / var
}

#[test]
fn class_three_of_cohort_a_is_exponential() {
    let mut spec = preset("A").unwrap();
    spec.n = 20_000;
    spec.seed = 2024;
    let out = generate_cohort(&spec).unwrap();
    // Rescale each latent time to covariate value zero: t * exp(beta . z).
    let sample: Vec<f64> = out
        .truth
        .iter()
        .zip(out.cohort.individuals())
        .filter(|(t, _)| t.class == 2)
        .map(|(t, ind)| t.latent_times[0] * (-2.0 * ind.covariates[0].unwrap()).exp())
        .collect();
    let d = ks_statistic(sample.clone(), |t| 1.0 - (-0.1 * t).exp());
    assert!(d < ks_critical_01(sample.len()), "KS D = {d}");
}

#[test]
fn class_two_of_cohort_a_follows_exponential_growth() {
    let mut spec = preset("A").unwrap();
    spec.n = 20_000;
    spec.seed = 99;
    let out = generate_cohort(&spec).unwrap();
    let sample: Vec<f64> = out
        .truth
        .iter()
        .zip(out.cohort.individuals())
        .filter(|(t, _)| t.class == 1)
        .map(|(t, ind)| {
            // exp(beta.z) * Lambda(t) ~ Exp(1)
            let lambda = 0.04 * ((t.latent_times[0] / 4.0).exp() - 1.0);
            lambda * (2.0 * ind.covariates[0].unwrap()).exp()
        })
        .collect();
    let d = ks_statistic(sample.clone(), |x| 1.0 - (-x).exp());
    assert!(d < ks_critical_01(sample.len()), "KS D = {d}");
}

#[test]
fn cohort_b_secondary_risk_dominates_for_high_z1() {
    let mut spec = preset("B").unwrap();
    spec.n = 1500;
    spec.seed = 1;
    let out = generate_cohort(&spec).unwrap();
    let (mut r1, mut r2) = (0, 0);
    for (t, ind) in out.truth.iter().zip(out.cohort.individuals()) {
        if t.class == 0 && ind.covariates[0].unwrap() > 1.0 {
            match ind.event {
                1 => r1 += 1,
                2 => r2 += 1,
                _ => {}
            }
        }
    }
    assert!(r2 > r1, "r1 = {r1}, r2 = {r2}");
}

#[test]
fn latent_times_are_independent_within_class() {
    let mut spec = preset("B").unwrap();
    spec.n = 20_000;
    spec.seed = 5;
    let out = generate_cohort(&spec).unwrap();
    // Probability-integral transforms remove the shared covariate effect.
    let mut u1 = Vec::new();
    let mut u2 = Vec::new();
    for (t, ind) in out.truth.iter().zip(out.cohort.individuals()) {
        if t.class == 0 {
            let z: Vec<f64> = ind.covariates.iter().map(|v| v.unwrap()).collect();
            let h1 = &spec.hazards[0][0];
            let h2 = &spec.hazards[1][0];
            u1.push((-h1.base.cumulative(t.latent_times[0]) * h1.linear_predictor(&z).exp()).exp());
            u2.push((-h2.base.cumulative(t.latent_times[1]) * h2.linear_predictor(&z).exp()).exp());
        }
    }
    let rho = spearman(&u1, &u2);
    assert!(rho.abs() < 3.0 / (u1.len() as f64).sqrt(), "rho = {rho}");
}

#[test]
fn censoring_marks_trial_end() {
    let mut spec = preset("B").unwrap();
    spec.n = 2000;
    spec.seed = 3;
    let out = generate_cohort(&spec).unwrap();
    for (t, ind) in out.truth.iter().zip(out.cohort.individuals()) {
        let first = t.latent_times.iter().copied().fold(f64::INFINITY, f64::min);
        if first > spec.trial_end {
            assert_eq!((ind.time, ind.event), (spec.trial_end, 0));
        } else {
            assert_eq!(ind.time, first);
            assert_eq!(t.latent_times[ind.event - 1], first);
        }
    }
    assert!(out.cohort.individuals().iter().any(|i| i.event == 0));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let mut spec = preset("A").unwrap();
    spec.n = 3000;
    spec.seed = 17;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_cohort(&spec).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.cohort, b.cohort);
    assert_eq!(a.truth, b.truth);
}

#[test]
fn invalid_specs_are_rejected() {
    let base = SynthSpec {
        weights: vec![0.6, 0.6],
        covariates: 1,
        hazards: vec![vec![
            ClassHazard {
                frailty: 0.0,
                associations: vec![0.0],
                base: BaseRate::Constant { rate: 0.1 },
            };
            2
        ]],
        trial_end: 5.0,
        n: 10,
        seed: 0,
    };
    assert!(generate_cohort(&base).is_err());
    let mut bad_rate = base.clone();
    bad_rate.weights = vec![0.5, 0.5];
    bad_rate.hazards[0][1].base = BaseRate::Constant { rate: -1.0 };
    assert!(generate_cohort(&bad_rate).is_err());
}
