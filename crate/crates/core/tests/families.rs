use athres::rng::seeded;
use athres::stats::{ks_critical, ks_statistic};
use athres::{gen_priority, PriorityFamily, WeightedItem};
use proptest::prelude::*;

/// Priority laws written out independently of the library.
fn law(family: &str, w: f64, r: f64) -> f64 {
    match family {
        "uniform" => (w * r).min(1.0),
        "exponential" => 1.0 - (-w * r).exp(),
        "lomax:1.5" => 1.0 - (1.0 + w * r).powf(-1.5),
        "lomax:4" => 1.0 - (1.0 + w * r).powf(-4.0),
        _ => unreachable!(),
    }
}

#[test]
fn generated_priorities_follow_their_laws() {
    const DRAWS: usize = 20_000;
    for name in ["uniform", "exponential", "lomax:1.5", "lomax:4"] {
        let family: PriorityFamily = name.parse().unwrap();
        for (j, w) in [0.3, 1.0, 7.5].into_iter().enumerate() {
            let item = WeightedItem::scalar(0u64, w, 0.0).unwrap();
            let mut rng = seeded(100 + j as u64);
            let mut r: Vec<f64> = (0..DRAWS)
                .map(|_| gen_priority(&item, &family, &mut rng).unwrap().value)
                .collect();
            let d = ks_statistic(&mut r, |x| law(name, w, x));
            assert!(d <= ks_critical(DRAWS, 0.001), "{name} w={w}: KS {d}");
        }
    }
}

#[test]
fn library_cdf_matches_reference() {
    for name in ["uniform", "exponential", "lomax:1.5", "lomax:4"] {
        let family: PriorityFamily = name.parse().unwrap();
        for w in [0.01, 0.5, 2.0, 300.0] {
            for tau in [0.0, 1e-4, 0.1, 0.9, 3.0, 50.0] {
                let got = family.cdf_at(w, tau).unwrap();
                assert!((got - law(name, w, tau)).abs() < 1e-12, "{name} w={w} tau={tau}");
            }
            assert_eq!(family.cdf_at(w, f64::INFINITY).unwrap(), 1.0);
        }
        assert!(family.cdf_at(0.0, 1.0).is_err());
        assert!(family.cdf_at(1.0, -1.0).is_err());
        assert!(family.cdf_at(1.0, f64::NAN).is_err());
    }
}

proptest! {
    #[test]
    fn inverse_cdf_inverts_cdf(u in 1e-9..0.999_999f64, w in 1e-3..1e3f64, a in 0.5..8.0f64) {
        for family in [PriorityFamily::UniformScaled, PriorityFamily::ExponentialRate, PriorityFamily::lomax(a).unwrap()] {
            let r = family.priority_from_uniform(w, u).value;
            prop_assert!(r >= 0.0);
            prop_assert!((family.cdf(w, r) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn heavier_items_get_smaller_priorities(u in 1e-9..1.0f64, w in 1e-3..1e3f64, f in 1.0..10.0f64) {
        for family in [PriorityFamily::UniformScaled, PriorityFamily::ExponentialRate, PriorityFamily::lomax(2.0).unwrap()] {
            prop_assert!(family.priority_from_uniform(w * f, u).value <= family.priority_from_uniform(w, u).value);
        }
    }
}
