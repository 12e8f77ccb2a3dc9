use std::path::Path;

use flipfx::panel::{load_long_csv, read_long_csv, write_long_csv, write_wide_csv, Schema};
use flipfx::{PanelDataset, Trajectory};
use proptest::prelude::*;

fn panel(n: usize, t: usize, dims: &[usize], seed: u64) -> PanelDataset {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let trs = (0..n)
        .map(|_| Trajectory {
            covariates: (0..t).map(|s| (0..dims[s]).map(|_| next() * 200.0 - 100.0).collect()).collect(),
            treatments: (0..t).map(|_| u8::from(next() < 0.5)).collect(),
            outcome: next() * 1e6 - 5e5,
        })
        .collect();
    PanelDataset::new(trs).unwrap()
}

fn roundtrip(data: &PanelDataset) -> PanelDataset {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = (dir.path().join("p.csv"), dir.path().join("s.toml"));
    write_long_csv(data, &csv, &schema).unwrap();
    load_long_csv(&csv, &Schema::from_file(&schema).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn write_then_load_is_identity(
        n in 2usize..40,
        dims in prop::collection::vec(1usize..4, 1..5),
        seed in any::<u64>(),
    ) {
        let data = panel(n, dims.len(), &dims, seed);
        let back = roundtrip(&data);
        prop_assert_eq!(back.n(), data.n());
        prop_assert_eq!(back.horizon(), data.horizon());
        prop_assert_eq!(back.covariate_dims(), data.covariate_dims());
        for i in 0..data.n() {
            let (a, b) = (data.trajectory(i), back.trajectory(i));
            prop_assert_eq!(&a.treatments, &b.treatments);
            prop_assert!((a.outcome - b.outcome).abs() <= 1e-12 * (1.0 + a.outcome.abs()));
            for (xa, xb) in a.covariates.iter().flatten().zip(b.covariates.iter().flatten()) {
                prop_assert!((xa - xb).abs() <= 1e-12 * (1.0 + xa.abs()));
            }
        }
    }
}

#[test]
fn missing_outcome_column_is_named() {
    let text = "id,t,a,x\n1,1,0,0.5\n";
    let err = read_long_csv(text.as_bytes(), &Schema::uniform(&["x"])).unwrap_err();
    assert!(err.to_string().contains("'y'") || err.to_string().contains("y"), "{err}");
    let mut schema = Schema::uniform(&["x"]);
    schema.outcome = "lwage".into();
    let err = read_long_csv(text.as_bytes(), &schema).unwrap_err();
    assert!(err.to_string().contains("lwage"), "{err}");
}

#[test]
fn unsorted_rows_and_string_ids() {
    let text = "id,t,a,y,x\nb,2,1,3.5,1\na,2,0,1.0,4\nb,1,0,,2\na,1,1,,3\n";
    let data = read_long_csv(text.as_bytes(), &Schema::uniform(&["x"])).unwrap();
    assert_eq!(data.ids(), ["a", "b"]);
    assert_eq!(data.trajectory(0).treatments, vec![1, 0]);
    assert_eq!(data.trajectory(1).covariates, vec![vec![2.0], vec![1.0]]);
    assert_eq!(data.outcome(1), 3.5);
}

#[test]
fn per_time_columns() {
    let text = "id,t,a,y,base,x\n1,1,0,,7,0.5\n1,2,1,2.0,,0.25\n2,1,1,,8,1\n2,2,0,-1,,2\n";
    let schema = Schema::parse("[covariates]\ndefault = [\"x\"]\nt1 = [\"base\", \"x\"]\n").unwrap();
    let data = read_long_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(data.covariate_dims(), &[2, 1]);
    assert_eq!(data.trajectory(0).covariates[0], vec![7.0, 0.5]);
    let back = roundtrip(&data);
    assert_eq!(back.covariate_names(), data.covariate_names());
}

#[test]
fn wide_export_has_one_row_per_subject() {
    let data = panel(5, 3, &[2, 1, 1], 7);
    let mut out = Vec::new();
    write_wide_csv(&data, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0].split(',').count(), 1 + 2 + 1 + 1 + 1 + 1 + 1 + 1);
    assert!(lines[0].ends_with(",a3,y"));
}

#[test]
fn bundled_wagepan_file_loads() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let (csv, schema) = (root.join("wagepan_long.csv"), root.join("wagepan_schema.toml"));
    if !csv.exists() {
        return;
    }
    let data = load_long_csv(&csv, &Schema::from_file(&schema).unwrap()).unwrap();
    assert_eq!(data.n(), 545);
    assert_eq!(data.horizon(), 4);
    for t in 1..=4 {
        let share = (0..data.n()).filter(|&i| data.treatment(i, t) == 1).count() as f64 / 545.0;
        assert!((0.15..0.35).contains(&share), "t={t}: {share}");
    }
    assert!(data.covariate_dims()[0] > data.covariate_dims()[1]);
}
