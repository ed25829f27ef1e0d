use proptest::prelude::*;
use rbm_core::model::{
    build_asymmetric_atlas, build_symmetric_atlas, check_assumptions, closed_form_rinv_asym, closed_form_rinv_sym,
    derived_params, r_inverse, reflection_matrix, AssumptionConstants, AssumptionMode, Matrix, RbmSpec,
};

/// Random nonnegative matrix with row sums at most `cap`.
fn substochastic(max_d: usize, cap: f64) -> impl Strategy<Value = Matrix> {
    (1..=max_d).prop_flat_map(move |d| {
        (prop::collection::vec(0.0..1.0f64, d * d), prop::collection::vec(0.0..cap, d)).prop_map(move |(raw, rows)| {
            let mut p = Matrix::from_row_slice(d, d, &raw);
            for i in 0..d {
                let s: f64 = p.row(i).sum();
                if s > 0.0 {
                    let scale = rows[i] / s;
                    p.row_mut(i).scale_mut(scale);
                }
            }
            p
        })
    })
}

/// `Σₙ (Pᵀ)ⁿ` summed until the terms vanish.
fn neumann_series(p: &Matrix) -> Matrix {
    let d = p.nrows();
    let pt = p.transpose();
    let mut sum = Matrix::identity(d, d);
    let mut term = Matrix::identity(d, d);
    for _ in 0..10_000 {
        term = &pt * &term;
        sum += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_is_nonnegative_and_exact(p in substochastic(8, 0.95)) {
        let rinv = r_inverse(&p).unwrap();
        prop_assert!(rinv.iter().all(|&v| v >= 0.0));
        let d = p.nrows();
        let err = (&rinv * reflection_matrix(&p) - Matrix::identity(d, d)).amax();
        prop_assert!(err <= 1e-10, "R⁻¹R − I = {err}");
        let series = neumann_series(&p);
        prop_assert!((&rinv - &series).amax() <= 1e-9 * series.amax().max(1.0));
    }

    #[test]
    fn restriction_never_increases_inverse(p in substochastic(7, 0.9), k_frac in 0.0..1.0f64) {
        let d = p.nrows();
        let k = 1 + ((d - 1) as f64 * k_frac) as usize;
        let spec = RbmSpec::new("random", vec![-1.0; d], p, Matrix::identity(d, d), None).unwrap();
        let full = spec.r_inverse();
        let sub = spec.restrict(k).unwrap().r_inverse();
        for i in 0..k {
            for j in 0..k {
                prop_assert!(sub[(i, j)] <= full[(i, j)] + 1e-12);
            }
        }
    }

    #[test]
    fn lambda_is_between_half_and_one(p in 0.55..0.95f64, d in 2usize..15) {
        let spec = build_asymmetric_atlas(d, p).unwrap();
        let report = check_assumptions(&spec, &AssumptionConstants::asymmetric_atlas(p), AssumptionMode::Main, None).unwrap();
        prop_assert!(report.lambda > 0.5 && report.lambda < 1.0);
    }
}

#[test]
fn closed_forms_match_inversion() {
    for d in 1..=20 {
        let rinv = build_symmetric_atlas(d).unwrap().r_inverse();
        for i in 1..=d {
            for j in 1..=d {
                assert!((closed_form_rinv_sym(d, i, j).unwrap() - rinv[(i - 1, j - 1)]).abs() <= 1e-10);
            }
        }
        for p in [0.6, 0.75, 0.9] {
            let rinv = build_asymmetric_atlas(d, p).unwrap().r_inverse();
            for i in 1..=d {
                for j in 1..=d {
                    assert!((closed_form_rinv_asym(d, p, i, j).unwrap() - rinv[(i - 1, j - 1)]).abs() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn symmetric_atlas_a_identity() {
    let spec = build_symmetric_atlas(50).unwrap();
    for k in 1..=50 {
        let want = (k * (k + 1)) as f64 / std::f64::consts::SQRT_2;
        let got = derived_params(&spec, k).unwrap().a_k;
        assert!((got - want).abs() <= 1e-12 * want, "k = {k}: {got} vs {want}");
    }
}

#[test]
fn asymmetric_atlas_b_range() {
    for p in [0.6, 0.75, 0.9] {
        let q = 1.0 - p;
        let (lo, hi) = ((p - q) / (p * p), p / (p - q));
        let spec = build_asymmetric_atlas(20, p).unwrap();
        for k in 1..=20 {
            for &b in &derived_params(&spec, k).unwrap().b_k {
                // The lower end is approached to within round-off for large k.
                assert!(b >= lo * (1.0 - 4.0 * f64::EPSILON) && b <= hi, "p = {p}, k = {k}: b = {b}");
            }
        }
    }
}
