use std::collections::BTreeMap;

use iotfp::synthgen::*;
use iotfp::flowcore::FEATURE_NAMES;

fn col(name: &str) -> usize {
    FEATURE_NAMES.iter().position(|n| *n == name).unwrap()
}

fn spec(opts: &FleetOptions, pattern: ActivityPattern, n_days: u32, seed: u64) -> EnvironmentSpec {
    EnvironmentSpec { name: "t".into(), devices: default_fleet(seed, opts), pattern, n_days, seed }
}

#[test]
fn zero_rate_drift_equals_no_drift() {
    let opts = FleetOptions { drift_rate: 0.0, ..FleetOptions::default() };
    let a = spec(&opts, ActivityPattern::Medium, 6, 4);
    let mut b = a.clone();
    for (i, d) in b.devices.iter_mut().enumerate() {
        d.drift = DriftParams { directions: [-1.0, 1.0, -1.0, 1.0], rotate_phase: i as u32, ..DriftParams::none() };
    }
    assert_eq!(gen_flows(&a), gen_flows(&b));
}

fn mean_log(rows: &[&iotfp::FeatureVector], device: u32, feature: &str) -> (f64, f64, usize) {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.device_id == device)
        .map(|r| (r.features[col(feature)] + 1e-3).ln())
        .collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var, v.len())
}

#[test]
fn drift_shifts_sizes_only_when_enabled() {
    let still = gen_environment(&spec(&FleetOptions::default(), ActivityPattern::Idle, 21, 9));
    let moving = gen_environment(&spec(&FleetOptions { drift_rate: 0.03, ..FleetOptions::default() }, ActivityPattern::Idle, 21, 9));
    let mut moved = 0;
    for device in still.devices() {
        let z = |data: &iotfp::harness::LabeledDataset| {
            ["bytes_out", "bytes_in", "ipt_mean", "b_mean"]
                .iter()
                .map(|f| {
                    let (m1, v1, n1) = mean_log(&data.days(1..=3), device, f);
                    let (m2, v2, n2) = mean_log(&data.days(19..=21), device, f);
                    (m2 - m1) / (v1 / n1 as f64 + v2 / n2 as f64).sqrt()
                })
                .fold(0.0f64, |a, z| if z.abs() > a.abs() { z } else { a })
        };
        assert!(z(&still).abs() < 4.0, "device {device} shifted without drift: z = {}", z(&still));
        if z(&moving).abs() > 4.0 {
            moved += 1;
        }
    }
    assert!(moved >= 8, "only {moved} devices drifted");
}

#[test]
fn generation_is_deterministic() {
    let s = spec(&FleetOptions { drift_rate: 0.02, rotate_every: 3, ..FleetOptions::default() }, ActivityPattern::Heavy, 4, 17);
    assert_eq!(gen_environment(&s), gen_environment(&s));
    assert_eq!(gen_packets(&s), gen_packets(&s));
    let other = EnvironmentSpec { seed: 18, ..s.clone() };
    assert_ne!(gen_flows(&s), gen_flows(&other));
}

#[test]
fn daily_counts_follow_poisson_rates() {
    for pattern in [ActivityPattern::Idle, ActivityPattern::Heavy] {
        let s = spec(&FleetOptions::default(), pattern, 21, 31);
        let lambda: f64 = s.devices.iter().map(|d| s.expected_flows(d)).sum();
        let mut per_day: BTreeMap<u32, f64> = BTreeMap::new();
        for f in gen_flows(&s) {
            *per_day.entry(f.day_index).or_default() += 1.0;
        }
        assert_eq!(per_day.len(), 21);
        for (day, n) in per_day {
            assert!((n - lambda).abs() <= 3.0 * lambda.sqrt(), "{pattern:?} day {day}: {n} vs {lambda}");
        }
    }
}

#[test]
fn activity_scales_interactive_volume() {
    let counts: Vec<usize> = [ActivityPattern::Idle, ActivityPattern::Light, ActivityPattern::Medium, ActivityPattern::Heavy]
        .into_iter()
        .map(|p| gen_flows(&spec(&FleetOptions::default(), p, 3, 2)).len())
        .collect();
    assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
}

#[test]
fn labels_are_consistent_with_profiles() {
    let s = EnvironmentSpec {
        name: "big".into(),
        devices: full_scale_fleet(5, &FleetOptions::default()),
        pattern: ActivityPattern::Light,
        n_days: 2,
        seed: 5,
    };
    let data = gen_environment(&s);
    let want: BTreeMap<u32, u32> = s.devices.iter().map(|d| (d.device_id, d.category_id)).collect();
    assert_eq!(data.device_categories(), &want);
    assert_eq!(data.categories().len(), CATEGORY_NAMES.len());
}

#[test]
fn generated_records_and_rows_are_well_formed() {
    let s = spec(&FleetOptions { drift_rate: 0.02, rotate_every: 2, ..FleetOptions::default() }, ActivityPattern::Heavy, 5, 6);
    for f in gen_flows(&s) {
        f.validate(50, 30.0).unwrap();
        assert!(f.duration() >= 0.0);
    }
    let data = gen_environment(&s);
    for r in data.rows() {
        assert!(r.is_finite());
        assert!(r.features[col("duration")] >= 0.0);
        for (std, var) in [("ipt_std", "ipt_var"), ("b_std", "b_var")] {
            let (s, v) = (r.features[col(std)], r.features[col(var)]);
            assert!((s * s - v).abs() <= 1e-9 * v.abs().max(1.0), "{std}^2 = {} vs {var} = {v}", s * s);
        }
    }
}

#[test]
fn packet_level_mode_reproduces_flow_rows() {
    let s = spec(&FleetOptions::default(), ActivityPattern::Light, 2, 8);
    let direct = gen_environment(&s);
    let via_packets = gen_environment_packets(&s).unwrap();
    assert_eq!(via_packets.device_categories(), direct.device_categories());
    // Each flow is preceded by a DNS answer, which forms a flow of its own.
    let is_dns = |r: &&iotfp::FeatureVector| r.features[col("dest_port")] == 53.0 || r.features[col("src_port")] == 53.0;
    let dns = via_packets.rows().iter().filter(is_dns).count();
    assert!(dns > 0);
    for day in 1..=2 {
        let da = direct.days(day..=day).len() as f64;
        let db = via_packets.days(day..=day).iter().filter(|r| !is_dns(r)).count() as f64;
        assert!((da - db).abs() <= 0.02 * da, "day {day}: {da} rows direct, {db} via packets");
    }
}

#[test]
fn config_round_trip_builds_the_same_environment() {
    let text = "version = 1\nname = \"x\"\nfleet = \"leave-one-out\"\npattern = \"idle\"\nn_days = 2\nseed = 3\n";
    let cfg = EnvConfig::parse(text).unwrap();
    let again = EnvConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(cfg, again);
    let fleet = leave_one_out_fleet(3, &FleetOptions::default());
    assert_eq!(cfg.to_spec().devices, fleet.devices);
}
