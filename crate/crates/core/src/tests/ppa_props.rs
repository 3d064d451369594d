use crate::ppa::{area_at_period, calibrate, point_at, power_at, sweep, Calibration};
use crate::{CalibrationTable, PpaConfig};
use proptest::prelude::*;

fn calibration() -> Calibration {
    calibrate(&CalibrationTable::default()).unwrap()
}

fn configs() -> impl Strategy<Value = PpaConfig> {
    prop_oneof![Just(calibration().compact), Just(calibration().full)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn feasible_exactly_from_the_timing_wall(cfg in configs(), period in 0.5f64..60.0) {
        let p = point_at(cfg.base_gate_count, period, &cfg).unwrap();
        prop_assert_eq!(p.feasible, period >= cfg.min_feasible_period);
        prop_assert_eq!(p.gate_count.is_some(), p.feasible);
        prop_assert_eq!(p.energy_per_inference.is_some(), p.feasible);
    }

    #[test]
    fn area_never_drops_below_base_and_falls_with_period(
        cfg in configs(),
        a in 0.0f64..50.0,
        b in 0.0f64..50.0,
    ) {
        let lo = cfg.min_feasible_period + a.min(b);
        let hi = cfg.min_feasible_period + a.max(b);
        let base = cfg.base_gate_count;
        let g_lo = area_at_period(base, lo, &cfg).unwrap().unwrap();
        let g_hi = area_at_period(base, hi, &cfg).unwrap().unwrap();
        prop_assert!(g_hi <= g_lo + 1e-9);
        prop_assert!(g_hi >= base - 1e-9);
        if hi >= cfg.relaxed_period {
            prop_assert!((g_hi - base).abs() < 1e-9);
        }
    }

    #[test]
    fn power_is_static_dominated_and_monotone(
        cfg in configs(),
        gates in 1.0f64..20_000.0,
        extra in 0.0f64..30.0,
        more_gates in 0.0f64..5_000.0,
    ) {
        let p = cfg.min_feasible_period + extra;
        let (s, d) = power_at(gates, p, &cfg).unwrap();
        prop_assert!(s >= d);
        prop_assert!(s > 0.0 && d >= 0.0);
        let (s2, d2) = power_at(gates + more_gates, p, &cfg).unwrap();
        prop_assert!(s2 + d2 >= s + d);
        let (s3, d3) = power_at(gates, p + 1.0, &cfg).unwrap();
        prop_assert!(s3 + d3 <= s + d);
    }

    #[test]
    fn energy_columns_are_consistent(cfg in configs(), extra in 0.0f64..30.0) {
        let point = point_at(cfg.base_gate_count, cfg.min_feasible_period + extra, &cfg).unwrap();
        let total = point.power_total.unwrap();
        prop_assert!((total - point.power_static.unwrap() - point.power_dynamic.unwrap()).abs() < 1e-12);
        prop_assert!((point.energy_per_inference.unwrap() - total * point.period).abs() < 1e-9);
        prop_assert!((point.energy_latency.unwrap() - 3.0 * total * point.period).abs() < 1e-9);
    }
}

#[test]
fn non_positive_periods_are_errors() {
    let cfg = calibration().compact;
    for p in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(point_at(cfg.base_gate_count, p, &cfg).is_err(), "period {p}");
    }
    assert!(sweep(cfg.base_gate_count, &cfg.clone().with_periods(vec![5.0, 4.0])).is_err());
}
