mod common;

use common::{six_point_pair, SIX_POINT_BANDS, SIX_POINT_MSE, SIX_POINT_RANGE};
use cryoinr::metrics::{banded_report, evaluation_set, psnr, Psnr, DEFAULT_BAND_EDGES};
use cryoinr::mrc::VoxelGrid;
use proptest::prelude::*;

#[test]
fn six_point_oracle() {
    let (o, r) = six_point_pair();
    let report = banded_report(&o, &r, 0.0, &DEFAULT_BAND_EDGES).unwrap();
    assert_eq!(report.count, 6);
    for (b, &(count, mean, median, within)) in report.bands.iter().zip(&SIX_POINT_BANDS) {
        assert_eq!(b.count, count, "{}", b.name);
        assert_eq!(b.mean_pct, Some(mean), "{}", b.name);
        assert_eq!(b.median_pct, Some(median), "{}", b.name);
        assert_eq!(b.within20, Some(within), "{}", b.name);
    }
    assert!((report.mse - SIX_POINT_MSE).abs() < 1e-15);
    let want_psnr = 10.0 * (SIX_POINT_RANGE * SIX_POINT_RANGE / SIX_POINT_MSE).log10();
    match report.psnr {
        Psnr::Finite(p) => assert!((p - want_psnr).abs() < 1e-12),
        Psnr::Infinite => panic!("finite PSNR expected"),
    }
    let set = evaluation_set(&o, 0.0);
    assert!((psnr(&o, &r, &set).unwrap() - want_psnr).abs() < 1e-12);
}

#[test]
fn report_lists_table_columns() {
    let (o, r) = six_point_pair();
    let report = banded_report(&o, &r, 0.0, &DEFAULT_BAND_EDGES).unwrap();
    let text = report.to_text("six.mrc");
    for col in
        ["band", "mean %", "median %", "within 20 %", "count", "low (<0.07)", "medium (0.07-0.15)", "high (>=0.15)"]
    {
        assert!(text.contains(col), "missing {col}");
    }
    let mut csv = Vec::new();
    report.write_csv("six.mrc", &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("file,band,mean_pct,median_pct,within20_pct,count,value\n"));
    assert!(csv.contains("six.mrc,high (>=0.15),35,20,50,2,\n"), "{csv}");
}

#[test]
fn uniform_error_gives_twenty_db() {
    // range 1.0, every evaluated point off by 0.1
    let o = VoxelGrid::new([4, 1, 1], vec![0.0, 0.5, 0.75, 1.0]).unwrap();
    let r = VoxelGrid::new([4, 1, 1], vec![0.0, 0.6, 0.85, 1.1]).unwrap();
    let p = psnr(&o, &r, &evaluation_set(&o, 0.0)).unwrap();
    assert!((p - 20.0).abs() < 1e-5, "{p}");
}

proptest! {
    #[test]
    fn bands_partition_the_evaluated_points(
        pairs in prop::collection::vec((-0.2f32..1.0, -0.5f32..1.5), 2..200),
        t in prop_oneof![Just(0.0f32), Just(0.05)],
        e1 in 0.01f64..0.3, gap in 0.01f64..0.5,
    ) {
        let (a, b): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        let n = a.len();
        let o = VoxelGrid::new([n, 1, 1], a.clone()).unwrap();
        let r = VoxelGrid::new([n, 1, 1], b).unwrap();
        match banded_report(&o, &r, t, &[e1, e1 + gap]) {
            Ok(rep) => {
                prop_assert_eq!(rep.bands.iter().map(|b| b.count).sum::<usize>(), a.iter().filter(|&&v| v > t).count());
                for b in &rep.bands {
                    if let Some(f) = b.within20 {
                        prop_assert!((0.0..=1.0).contains(&f));
                    }
                }
                let same = banded_report(&o, &o, t, &[e1, e1 + gap]);
                if let Ok(same) = same {
                    prop_assert!(same.bands.iter().all(|b| b.count == 0 || (b.mean_pct == Some(0.0) && b.within20 == Some(1.0))));
                }
            }
            Err(e) => prop_assert!(a.iter().all(|&v| v <= t) || a.iter().all(|&v| v == a[0]), "{e}"),
        }
    }
}
