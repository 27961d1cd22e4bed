use super::*;
use proptest::prelude::*;

fn schema(types: &[(&str, Transform)]) -> DatasetSchema {
    DatasetSchema {
        coordinates: vec!["x".into(), "y".into()],
        types: types
            .iter()
            .map(|(n, t)| TypeColumn {
                name: n.to_string(),
                column: None,
                transform: *t,
            })
            .collect(),
    }
}

fn parse(text: &str, s: &DatasetSchema) -> Result<Dataset> {
    parse_dataset(text.as_bytes(), s, "test.csv")
}

fn line_of(e: Error) -> usize {
    match e {
        Error::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn two_rows_one_type() {
    let ds = parse("x,y,a\n0,0,1.5\n1,2,-3\n", &schema(&[("a", Transform::Identity)])).unwrap();
    assert_eq!(ds.locations.len(), 2);
    assert_eq!(ds.num_types(), 1);
    assert_eq!(ds.measurements[&(1, 0)], -3.0);
}

#[test]
fn missing_cells_are_absent() {
    let s = schema(&[("a", Transform::Identity), ("b", Transform::Identity)]);
    let ds = parse("x,y,a,b\n0,0,1,\n1,0,,2\n2,0,3,4\n", &s).unwrap();
    assert_eq!(ds.count_of_type(0), 2);
    assert_eq!(ds.count_of_type(1), 2);
    assert!(!ds.measurements.contains_key(&(0, 1)));
    let b: Vec<f64> = ds.of_type(1).iter().map(|m| m.1).collect();
    assert_eq!(b, vec![2.0, 4.0]);
}

#[test]
fn columns_are_found_by_name() {
    let mut s = schema(&[("cd", Transform::Log10)]);
    s.types[0].column = Some("Cd".into());
    let ds = parse("note,y,Cd,x\nfoo,1,100,0\nbar,2,0.1,1\n", &s).unwrap();
    assert_eq!(ds.locations[0].coords(), &[0.0, 1.0]);
    assert!((ds.measurements[&(0, 0)] - 2.0).abs() < 1e-15);
    assert!((ds.measurements[&(1, 0)] + 1.0).abs() < 1e-15);
    assert_eq!(ds.type_names, vec!["cd".to_string()]);
}

#[test]
fn errors_carry_line_numbers() {
    let s = schema(&[("a", Transform::Log10)]);
    assert_eq!(line_of(parse("x,y,a\n0,0,1\n1,zz,2\n", &s).unwrap_err()), 3);
    assert_eq!(line_of(parse("x,y,a\n0,0,1\n1,1,2\n2,2,0\n", &s).unwrap_err()), 4);
    assert_eq!(line_of(parse("x,y,a\n0,0,1\n0,0,2\n", &s).unwrap_err()), 3);
    assert_eq!(line_of(parse("x,y,a\n0,0,1\n1,1,abc\n", &s).unwrap_err()), 3);
    assert_eq!(line_of(parse("x,a\n0,1\n", &s).unwrap_err()), 1);
    assert_eq!(line_of(parse("x,y,a\n0,0,1\n1,1\n", &s).unwrap_err()), 3);
}

#[test]
fn type_without_measurements_is_rejected() {
    let s = schema(&[("a", Transform::Identity), ("b", Transform::Identity)]);
    assert!(parse("x,y,a,b\n0,0,1,\n", &s).is_err());
}

#[test]
fn schema_toml_and_validation() {
    let s = DatasetSchema::from_toml_str(
        "coordinates = [\"x\", \"y\"]\n[[types]]\nname = \"cd\"\ncolumn = \"Cd\"\ntransform = \"log10\"\n[[types]]\nname = \"ni\"\n",
    )
    .unwrap();
    assert_eq!(s.types[0].transform, Transform::Log10);
    assert_eq!(s.types[1].transform, Transform::Identity);
    assert_eq!(DatasetSchema::from_toml_str(&s.to_toml_string()).unwrap(), s);
    assert!(DatasetSchema::from_toml_str("coordinates = []\ntypes = []\n").is_err());
    assert!(DatasetSchema::from_toml_str("coordinates = [\"x\"]\n[[types]]\nname = \"x\"\n").is_err());
    assert!(DatasetSchema::from_toml_str("coordinates = [\"x\"]\n[[types]]\nname = \"a\"\ntransform = \"sqrt\"\n").is_err());
}

#[test]
fn canonical_write_round_trips() {
    let s = schema(&[("a", Transform::Identity), ("b", Transform::Identity)]);
    let text = "x,y,a,b\n0.5,0,1,\n1,0,,2.25\n2,-1e-3,3,4\n";
    let ds = parse(text, &s).unwrap();
    let mut out = Vec::new();
    write_dataset(&mut out, &ds).unwrap();
    let written = String::from_utf8(out).unwrap();
    assert_eq!(written, "x,y,a,b\n0.5,0,1,\n1,0,,2.25\n2,-0.001,3,4\n");
    let again = parse(&written, &ds.schema()).unwrap();
    assert_eq!(again, ds);
}

#[test]
fn log_transform_round_trips_closely() {
    let s = schema(&[("a", Transform::Log10)]);
    let ds = parse("x,y,a\n0,0,3.7\n1,0,0.02\n", &s).unwrap();
    let mut out = Vec::new();
    write_dataset(&mut out, &ds).unwrap();
    let again = parse(std::str::from_utf8(&out).unwrap(), &ds.schema()).unwrap();
    for (k, v) in &ds.measurements {
        assert!((again.measurements[k] - v).abs() < 1e-12);
    }
}

fn three_type() -> Dataset {
    let s = schema(&[("a", Transform::Identity), ("b", Transform::Identity), ("c", Transform::Identity)]);
    let mut text = String::from("x,y,a,b,c\n");
    for k in 0..30 {
        let a = if k % 4 == 3 { String::new() } else { format!("{}", (k as f64 * 0.7).sin() * 3.0 + 1.0) };
        text.push_str(&format!("{},{},{a},{},{}\n", k % 6, k / 6, k as f64 * 0.5, (k * k) % 7));
    }
    parse(&text, &s).unwrap()
}

#[test]
fn normalization_statistics() {
    let ds = three_type();
    let (nd, stats) = normalize(&ds).unwrap();
    for t in 0..3 {
        let vals: Vec<f64> = nd.of_type(t).iter().map(|m| m.1).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((std - 1.0).abs() < 1e-12);
    }
    let back = denormalize(&nd, &stats);
    for (k, v) in &ds.measurements {
        assert!((back.measurements[k] - v).abs() < 1e-12);
    }
}

#[test]
fn constant_column_cannot_be_normalized() {
    let s = schema(&[("a", Transform::Identity)]);
    let ds = parse("x,y,a\n0,0,2\n1,0,2\n", &s).unwrap();
    assert!(normalize(&ds).is_err());
}

#[test]
fn split_properties() {
    let ds = three_type();
    let spec = SplitSpec {
        target_types: vec![0],
        test_count: 5,
        seed: 7,
    };
    let split = split_test(&ds, &spec).unwrap();
    assert_eq!(split.train[0].len(), ds.count_of_type(0) - 5);
    assert_eq!(split.train[1].len(), ds.count_of_type(1));
    assert_eq!(split.test.len(), 5);
    assert!(split.test.iter().all(|m| m.tuple.type_index == 0));
    for m in &split.test {
        assert!(!split.train[0].iter().any(|c| c.tuple == m.tuple));
    }
    assert_eq!(split_test(&ds, &spec).unwrap(), split);
    let other = split_test(&ds, &SplitSpec { seed: 8, ..spec.clone() }).unwrap();
    assert_ne!(other.test, split.test);
    let tuples: Vec<TypedLocation> = split.train[1].iter().take(3).map(|m| m.tuple.clone()).collect();
    let vals = split.values_at(&tuples).unwrap();
    assert_eq!(vals[2], split.train[1][2].value);
    assert!(split.values_at(&[split.test[0].tuple.clone()]).is_err());
}

#[test]
fn multi_target_split() {
    let ds = three_type();
    let split = split_test(
        &ds,
        &SplitSpec {
            target_types: vec![0, 2],
            test_count: 4,
            seed: 1,
        },
    )
    .unwrap();
    assert_eq!(split.test.len(), 8);
    assert_eq!(split.test.iter().filter(|m| m.tuple.type_index == 2).count(), 4);
    assert_eq!(split.train[2].len(), 26);
}

#[test]
fn split_guards() {
    let ds = three_type();
    let n0 = ds.count_of_type(0);
    let bad = |target_types: Vec<usize>, test_count| split_test(&ds, &SplitSpec { target_types, test_count, seed: 0 }).is_err();
    assert!(bad(vec![0], n0));
    assert!(!bad(vec![0], n0 - 1));
    assert!(bad(vec![5], 1));
    assert!(bad(vec![], 1));
    assert!(bad(vec![1, 1], 1));
}

#[test]
fn rmse_examples() {
    assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(rmse(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]).unwrap(), 1.0);
    assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
    assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    assert!(rmse(&[], &[]).is_err());
}

proptest! {
    #[test]
    fn rmse_is_permutation_invariant(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40), seed in any::<u64>()) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let p2: Vec<f64> = order.iter().map(|&k| p[k]).collect();
        let y2: Vec<f64> = order.iter().map(|&k| y[k]).collect();
        let a = rmse(&p, &y).unwrap();
        let b = rmse(&p2, &y2).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn normalize_round_trips(vals in prop::collection::vec(-1e4f64..1e4, 2..30)) {
        let s = schema(&[("a", Transform::Identity)]);
        let mut text = String::from("x,y,a\n");
        for (k, v) in vals.iter().enumerate() {
            text.push_str(&format!("{k},0,{v}\n"));
        }
        let ds = parse(&text, &s).unwrap();
        if let Ok((nd, stats)) = normalize(&ds) {
            let back = denormalize(&nd, &stats);
            for (k, v) in &ds.measurements {
                prop_assert!((back.measurements[k] - v).abs() <= 1e-12 * v.abs().max(1.0) * 1e3);
            }
        }
    }
}
