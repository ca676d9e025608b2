use approx::assert_relative_eq;
use aqp_core::stats::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// Reference quantiles from scipy.stats (norm/t/chi2.ppf).
const NORMAL: &[(f64, f64)] = &[
    (0.001, -3.090232306167813),
    (0.01, -2.3263478740408408),
    (0.05, -1.6448536269514729),
    (0.25, -0.6744897501960817),
    (0.6, 0.2533471031357997),
    (0.9, 1.2815515655446004),
    (0.95, 1.6448536269514722),
    (0.975, 1.959963984540054),
    (0.999, 3.090232306167813),
    (0.9999, 3.719016485455709),
];

const STUDENT_T: &[(u64, f64, f64)] = &[
    (1, 0.01, -31.820515953757607),
    (1, 0.3, -0.7265425280172028),
    (1, 0.9, 3.0776835372078066),
    (1, 0.95, 6.313751514800932),
    (1, 0.995, 63.65674116287399),
    (3, 0.01, -4.540702858471386),
    (3, 0.3, -0.5843897274398188),
    (3, 0.9, 1.6377443536962095),
    (3, 0.995, 5.840909309733352),
    (4, 0.975, 2.7764451051977987),
    (7, 0.01, -2.9979515668685286),
    (7, 0.3, -0.5491096579472403),
    (7, 0.9, 1.4149239276488585),
    (7, 0.995, 3.4994832973505026),
    (29, 0.975, 2.045229642132703),
    (30, 0.01, -2.4572615424005706),
    (30, 0.3, -0.5300190039065045),
    (30, 0.9, 1.310415025391396),
    (30, 0.995, 2.7499956535670305),
    (120, 0.01, -2.357824612648755),
    (120, 0.3, -0.5257963906060935),
    (120, 0.9, 1.2886462336537166),
    (120, 0.995, 2.617421145106866),
];

const CHI2: &[(u64, f64, f64)] = &[
    (1, 0.005, 3.9270422220515944e-05),
    (1, 0.3, 0.14847186183254538),
    (1, 0.9, 2.705543454095404),
    (1, 0.95, 3.841458820694124),
    (1, 0.995, 7.879438576622417),
    (2, 0.005, 0.010025083647088564),
    (2, 0.3, 0.7133498878774648),
    (2, 0.9, 4.605170185988092),
    (2, 0.995, 10.596634733096073),
    (5, 0.005, 0.41174190383249887),
    (5, 0.3, 2.9999081327599066),
    (5, 0.9, 9.236356899781123),
    (5, 0.995, 16.74960234363904),
    (9, 0.05, 3.325112843066815),
    (9, 0.5, 8.342832692252955),
    (9, 0.95, 16.918977604620448),
    (49, 0.005, 27.24934906956969),
    (49, 0.3, 43.36644075175548),
    (49, 0.9, 62.03753678530966),
    (49, 0.995, 78.23070808668994),
    (49, 1.0 - 0.05 / 3.0, 72.35287060298435),
    (200, 0.005, 152.24099168737837),
    (200, 0.3, 189.04859871776142),
    (200, 0.9, 226.02104771968897),
    (200, 0.995, 255.26415545152312),
];

#[test]
fn normal_matches_reference_to_1e9() {
    assert_eq!(quantile_normal(0.5).unwrap(), 0.0);
    for &(q, z) in NORMAL {
        let got = quantile_normal(q).unwrap();
        assert!((got - z).abs() < 1e-9, "z_{q}: {got} vs {z}");
    }
}

#[test]
fn student_t_matches_reference_to_1e9() {
    assert_relative_eq!(quantile_student_t(1, 0.75).unwrap(), 1.0, max_relative = 1e-12);
    for &(df, q, t) in STUDENT_T {
        let got = quantile_student_t(df, q).unwrap();
        assert!((got - t).abs() < 1e-9 * t.abs().max(1.0), "t_({df},{q}): {got} vs {t}");
    }
}

#[test]
fn chi2_matches_reference_to_1e9() {
    for &(df, q, x) in CHI2 {
        let got = quantile_chi2(df, q).unwrap();
        assert!((got - x).abs() < 1e-9 * x.max(1.0), "chi2_({df},{q}): {got} vs {x}");
    }
    let z = quantile_normal(0.975).unwrap();
    assert_relative_eq!(quantile_chi2(1, 0.95).unwrap(), z * z, max_relative = 1e-10);
}

#[test]
fn cdf_quantile_round_trip() {
    for i in 1..100 {
        let q = i as f64 / 100.0;
        assert!((normal_cdf(quantile_normal(q).unwrap()) - q).abs() < 1e-8);
        for df in [1, 2, 3, 5, 10, 29, 100, 1000] {
            let t = quantile_student_t(df, q).unwrap();
            assert!((student_t_cdf(df, t).unwrap() - q).abs() < 1e-8, "t df={df} q={q}");
            let x = quantile_chi2(df, q).unwrap();
            assert!((chi2_cdf(df, x).unwrap() - q).abs() < 1e-8, "chi2 df={df} q={q}");
        }
    }
}

#[test]
fn t_approaches_normal() {
    for q in [0.6, 0.9, 0.975, 0.999] {
        let z = quantile_normal(q).unwrap();
        let mut prev = f64::INFINITY;
        for df in [1, 2, 5, 10, 50, 200, 10_000, 1_000_000] {
            let t = quantile_student_t(df, q).unwrap();
            assert!(t < prev && t > z, "df={df} q={q}");
            prev = t;
        }
        assert!((prev - z).abs() < 1e-5);
    }
}

#[test]
fn mean_t_interval() {
    let s = SampleSummary::new(5, 3.0, 2.5).unwrap();
    let (lo, hi) = ci_mean_t(&s, 0.025).unwrap();
    assert_relative_eq!(lo, 1.0367568385224393, max_relative = 1e-9);
    assert_relative_eq!(hi, 6.0 - 1.0367568385224393, max_relative = 1e-9);
    assert_eq!(ci_mean_t(&SampleSummary::new(5, 3.0, 0.0).unwrap(), 0.025).unwrap(), (3.0, 3.0));
    assert_eq!(ci_mean_t(&s, 0.5).unwrap(), (3.0, 3.0));
    assert!(ci_mean_t(&s, 0.0).is_err());
    assert!(ci_mean_t(&s, 1.0).is_err());
}

#[test]
fn mean_z_interval() {
    let s = SampleSummary::new(1, 0.0, 1.0).unwrap();
    let (lo, hi) = ci_mean_z(&s, 0.025).unwrap();
    assert!((lo + 1.959963984540054).abs() < 1e-9 && (hi - 1.959963984540054).abs() < 1e-9);
    assert_eq!(ci_mean_z(&SampleSummary::new(4, 2.0, 0.0).unwrap(), 0.025).unwrap(), (2.0, 2.0));
    assert_eq!(ci_mean_z(&s, 0.5).unwrap(), (0.0, 0.0));
}

#[test]
fn stddev_chi2_interval() {
    let s = SampleSummary::new(10, 0.0, 1.0).unwrap();
    let (lo, hi) = ci_stddev_chi2(&s, 0.05).unwrap();
    assert_relative_eq!(lo, 0.7293469933127851, max_relative = 1e-9);
    assert_relative_eq!(hi, 1.6451975743942215, max_relative = 1e-9);
    assert_eq!(ci_stddev_chi2(&SampleSummary::new(10, 0.0, 0.0).unwrap(), 0.05).unwrap(), (0.0, 0.0));
    let mid = (9.0 / 8.342832692252955f64).sqrt();
    let (lo, hi) = ci_stddev_chi2(&s, 0.4999999).unwrap();
    assert!((lo - mid).abs() < 1e-5 && (hi - mid).abs() < 1e-5);
    assert!(ci_stddev_chi2(&SampleSummary::new(1, 0.0, 1.0).unwrap(), 0.05).is_err());
}

#[test]
fn binomial_count_bounds() {
    let (lo, hi) = bounds_binomial_count(100, 0.5, 0.025).unwrap();
    assert!((lo - 40.20018007729973).abs() < 1e-8);
    assert!((hi - 59.79981992270027).abs() < 1e-8);
    assert_eq!(bounds_binomial_count(100, 1.0, 0.025).unwrap(), (100.0, 100.0));
    assert_eq!(bounds_binomial_count(100, 0.0, 0.025).unwrap(), (0.0, 0.0));
    assert_eq!(bounds_binomial_count(100, 0.3, 0.5).unwrap(), (30.0, 30.0));
}

#[test]
fn t_interval_coverage_on_gaussian_data() {
    let delta = 0.025;
    let trials = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dist = Normal::new(5.0, 2.0).unwrap();
    let mut hits = 0;
    for _ in 0..trials {
        let xs: Vec<f64> = (0..12).map(|_| dist.sample(&mut rng)).collect();
        let (lo, hi) = ci_mean_t(&SampleSummary::from_slice(&xs).unwrap(), delta).unwrap();
        if lo <= 5.0 && 5.0 <= hi {
            hits += 1;
        }
    }
    let nominal = 1.0 - 2.0 * delta;
    let se = (nominal * (1.0 - nominal) / trials as f64).sqrt();
    let cov = hits as f64 / trials as f64;
    assert!(cov >= nominal - 3.0 * se, "coverage {cov}");
}

proptest! {
    #[test]
    fn quantiles_strictly_increasing(a in 0.001f64..0.999, b in 0.001f64..0.999, df in 1u64..500) {
        prop_assume!((a - b).abs() > 1e-6);
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(quantile_normal(a).unwrap() < quantile_normal(b).unwrap());
        prop_assert!(quantile_student_t(df, a).unwrap() < quantile_student_t(df, b).unwrap());
        prop_assert!(quantile_chi2(df, a).unwrap() < quantile_chi2(df, b).unwrap());
    }

    #[test]
    fn intervals_nest(d1 in 0.001f64..0.49, d2 in 0.001f64..0.49, n in 2u64..200,
                      mean in -100f64..100.0, var in 0.01f64..50.0) {
        prop_assume!((d1 - d2).abs() > 1e-6);
        let (small, big) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let s = SampleSummary::new(n, mean, var).unwrap();
        for f in [ci_mean_t, ci_mean_z, ci_stddev_chi2] {
            let wide = f(&s, small).unwrap();
            let narrow = f(&s, big).unwrap();
            prop_assert!(wide.0 <= narrow.0 && wide.1 >= narrow.1);
        }
        let wide = bounds_binomial_count(n, 0.3, small).unwrap();
        let narrow = bounds_binomial_count(n, 0.3, big).unwrap();
        prop_assert!(wide.0 <= narrow.0 && wide.1 >= narrow.1);
    }
}
