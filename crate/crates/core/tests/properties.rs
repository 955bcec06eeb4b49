use nalgebra::DMatrix;
use overparam::harness::metrics;
use overparam::imaging::{encode_p5, parse_pgm, Image};
use overparam::operators::{
    build_poly_parameterization, dif_operator, gaussian_measurement, Geometry, HeavisideDictionary, Scaling,
};
use overparam::projection::{continuous_refit, optimal_projection, PiecewisePolyFit};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn signal(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2..max)
}

fn geometry() -> impl Strategy<Value = Geometry> {
    prop_oneof![
        (2usize..40).prop_map(|d| Geometry::OneD { d }),
        (2usize..8, 2usize..8).prop_map(|(h, w)| Geometry::Hv { h, w }),
        (2usize..8, 2usize..8).prop_map(|(h, w)| Geometry::HvDiag { h, w }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analysis_adjoint_matches_transpose(geom in geometry(), seed in any::<u64>()) {
        let omega = dif_operator(geom).unwrap();
        let v: Vec<f64> = (0..omega.cols()).map(|i| ((i as u64 ^ seed) % 17) as f64 - 8.0).collect();
        let u: Vec<f64> = (0..omega.rows()).map(|i| ((i as u64).wrapping_mul(seed | 1) % 13) as f64 - 6.0).collect();
        let lhs = dot(&omega.apply(&v), &u);
        let rhs = dot(&v, &omega.apply_transpose(&u));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        let dense = omega.to_dense();
        let direct = &dense * nalgebra::DVector::from_vec(v.clone());
        let applied = omega.apply(&v);
        prop_assert_eq!(direct.as_slice(), applied.as_slice());
    }

    #[test]
    fn difference_operator_annihilates_constants(geom in geometry(), c in -100.0f64..100.0) {
        let omega = dif_operator(geom).unwrap();
        let out = omega.apply(&vec![c; omega.cols()]);
        prop_assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn k_steps_give_k_nonzero_differences(d in 3usize..60, picks in prop::collection::btree_set(0usize..59, 0..6)) {
        let jumps: Vec<usize> = picks.into_iter().filter(|&j| j < d - 1).collect();
        let mut alpha = vec![0.0; d];
        for (i, &j) in jumps.iter().enumerate() {
            alpha[j] = 1.0 + i as f64;
        }
        let f = HeavisideDictionary::new(d).synthesize(&alpha);
        let diff = dif_operator(Geometry::OneD { d }).unwrap().apply(&f);
        let nonzero: Vec<usize> = (0..d - 1).filter(|&r| diff[r] != 0.0).collect();
        prop_assert_eq!(nonzero, jumps);
    }

    #[test]
    fn measurement_adjoint(m in 1usize..12, d in 1usize..12, seed in any::<u64>()) {
        let op = gaussian_measurement(m, d, seed).unwrap();
        let v: Vec<f64> = (0..d).map(|i| (i as f64 * 0.7).sin()).collect();
        let u: Vec<f64> = (0..m).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs = dot(&op.apply(&v), &u);
        let rhs = dot(&v, &op.apply_adjoint(&u));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn parameterization_synthesizes_linear_combination(d in 2usize..30, n in 0usize..3, index in any::<bool>()) {
        let scaling = if index { Scaling::Index } else { Scaling::Normalized };
        let param = build_poly_parameterization(d, n, scaling).unwrap();
        let coeffs: Vec<Vec<f64>> = (0..=n).map(|j| (0..d).map(|i| ((i + 3 * j) % 5) as f64 - 2.0).collect()).collect();
        let f = param.synthesize(&coeffs);
        for i in 0..d {
            let expect: f64 = (0..=n).map(|j| param.weight(j)[i] * coeffs[j][i]).sum();
            prop_assert!((f[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn dp_beats_any_fixed_breakpoints(g in signal(30), k in 0usize..4, n in 0usize..3, seed in any::<u64>()) {
        let d = g.len();
        let k = k.min(d - 1);
        let best = optimal_projection(&g, k, n).unwrap();
        let mut cuts: Vec<usize> = (0..k).map(|i| 1 + ((seed >> (8 * i)) as usize % (d - 1))).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let other = PiecewisePolyFit::from_breakpoints(&g, &cuts, n).unwrap();
        prop_assert!(best.sse <= other.sse * (1.0 + 1e-9) + 1e-12);
        let direct: f64 = best.fitted.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!((direct - best.sse).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn sse_nonincreasing_in_k(g in signal(25), n in 0usize..3) {
        let d = g.len();
        let mut prev = f64::INFINITY;
        for k in 0..d.min(5) {
            let sse = optimal_projection(&g, k, n).unwrap().sse;
            prop_assert!(sse <= prev * (1.0 + 1e-9) + 1e-12);
            prev = sse;
        }
    }

    #[test]
    fn continuous_refit_joins_pieces(g in signal(40), n in 0usize..3, seed in any::<u64>()) {
        let d = g.len();
        let mut cuts: Vec<usize> = (0..3).map(|i| 1 + ((seed >> (16 * i)) as usize % (d - 1))).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let free = PiecewisePolyFit::from_breakpoints(&g, &cuts, n).unwrap();
        let fit = continuous_refit(&g, &cuts, n).unwrap();
        prop_assert!(fit.sse >= free.sse * (1.0 - 1e-9) - 1e-9);
        let scale = 1.0 + g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for (i, &t) in cuts.iter().enumerate() {
            let x = t as f64 - 0.5;
            let gap = (fit.segments[i].eval(x) - fit.segments[i + 1].eval(x)).abs();
            prop_assert!(gap <= 1e-8 * scale, "gap {} at {}", gap, t);
        }
    }

    #[test]
    fn metrics_invariants(r in signal(50), shift in -1.0f64..1.0) {
        let same = metrics(&r, &r, 1.0).unwrap();
        prop_assert_eq!(same.mse, 0.0);
        let e: Vec<f64> = r.iter().map(|x| x + shift).collect();
        let m = metrics(&r, &e, 1.0).unwrap();
        prop_assert!((m.mse - shift * shift).abs() <= 1e-9);
        let swapped = metrics(&e, &r, 1.0).unwrap();
        prop_assert_eq!(m.mse, swapped.mse);
        if shift.abs() > 1e-3 {
            prop_assert!((m.psnr + 10.0 * (shift * shift).log10()).abs() <= 1e-6);
        }
    }

    #[test]
    fn pgm_round_trip(h in 1usize..10, w in 1usize..10, seed in any::<u64>()) {
        let img = Image::from_fn(h, w, |r, c| ((seed >> ((r * w + c) % 56)) & 0xff) as f64);
        let back = parse_pgm(&encode_p5(&img)).unwrap();
        prop_assert_eq!(back, img);
    }
}

#[test]
fn heaviside_truncation_is_right_inverse() {
    for d in [2usize, 5, 33] {
        let prod = dif_operator(Geometry::OneD { d }).unwrap().to_dense() * HeavisideDictionary::new(d).truncated();
        assert_eq!(prod, DMatrix::identity(d - 1, d - 1));
    }
}
