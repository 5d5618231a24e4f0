use divtest_core::hypothesis::{
    exact_calibrate, np_exact_calibrate, type1_exact, type1_mc, type2_exact, type2_mc, TestConfig,
};
use divtest_core::sampling::sample_type;
use divtest_core::simplex::make_distribution;
use divtest_core::{DivergenceSpec, Exec, SeededSource};

#[test]
fn wilson_intervals_cover_exact_errors() {
    let p0 = make_distribution(&[0.7, 0.3]).unwrap();
    let q = make_distribution(&[0.5, 0.5]).unwrap();
    let n = 50;
    let cal = exact_calibrate(&DivergenceSpec::Kl, &p0, n, 0.05).unwrap();
    let cfg = TestConfig::new(DivergenceSpec::Kl, cal.r_star, p0).unwrap();
    let a = type1_exact(&cfg, n).unwrap().value;
    let b = type2_exact(&cfg, &q, n).unwrap().value;
    let mut cover1 = 0;
    let mut cover2 = 0;
    for rep in 0..100 {
        let src = SeededSource::new(2024, rep);
        if type1_mc(&cfg, n, 2000, src, Exec::default())
            .unwrap()
            .contains(a)
        {
            cover1 += 1;
        }
        if type2_mc(&cfg, &q, n, 2000, src, Exec::default())
            .unwrap()
            .contains(b)
        {
            cover2 += 1;
        }
    }
    assert!(cover1 >= 93, "type-I coverage {cover1}/100");
    assert!(cover2 >= 93, "type-II coverage {cover2}/100");
}

#[test]
fn monte_carlo_is_reproducible() {
    let p0 = make_distribution(&[0.5, 0.3, 0.2]).unwrap();
    let cfg = TestConfig::new(DivergenceSpec::ChiSq, 0.05, p0).unwrap();
    let src = SeededSource::new(7, 1);
    let a = type1_mc(&cfg, 40, 9000, src, Exec::Parallel).unwrap();
    let b = type1_mc(&cfg, 40, 9000, src, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    let c = type1_mc(&cfg, 40, 9000, SeededSource::new(7, 2), Exec::Parallel).unwrap();
    assert_ne!(a.hits, c.hits);
}

#[test]
fn np_calibration_respects_eps() {
    let p0 = make_distribution(&[0.5, 0.3, 0.2]).unwrap();
    let q = make_distribution(&[0.3, 0.3, 0.4]).unwrap();
    for n in [1u64, 5, 30, 120] {
        for eps in [0.01, 0.05, 0.3] {
            let c = np_exact_calibrate(&p0, &q, n, eps).unwrap();
            assert!(c.achieved_type1 <= eps);
        }
    }
}

#[test]
fn sampled_types_follow_the_source() {
    let p = make_distribution(&[0.7, 0.3]).unwrap();
    let t1 = sample_type(&p, 10, SeededSource::new(7, 0)).unwrap();
    let t2 = sample_type(&p, 10, SeededSource::new(7, 0)).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(t1.n(), 10);
}
