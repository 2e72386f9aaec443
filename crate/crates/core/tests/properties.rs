use std::f64::consts::PI;

use paulispec::basis::build_zero_modes;
use paulispec::detindex::{det_regularized, index_along_contour, Contour, FnFamily};
use paulispec::spec2d::{arg_over, in_sector};
use paulispec::spec3d::{Branch, KPlaneGeometry};
use paulispec::toeplitz::{self, Symbol};
use paulispec::{make_constant_field, make_radial_field, CMatrix, Complex64, Profile};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn matrix(n: usize, scale: f64) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n)
        .prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(a, b)| c(a, b) * scale)))
}

fn rel_gap(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regularized_det_is_cyclic(a in matrix(5, 0.4), b in matrix(5, 0.4), p in 1usize..5) {
        let ab = det_regularized(&(&a * &b), p).unwrap();
        let ba = det_regularized(&(&b * &a), p).unwrap();
        prop_assert!(rel_gap(ab, ba) < 1e-10, "p = {p}: {ab} vs {ba}");
    }

    #[test]
    fn regularized_det_of_zero_is_one(p in 1usize..6, n in 1usize..7) {
        prop_assert_eq!(det_regularized(&CMatrix::zeros(n, n), p).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn regularized_orders_differ_by_a_trace_exponential(t in matrix(4, 0.5), p in 1usize..4) {
        // det_{p+1}(I - T) = det_p(I - T) exp(tr T^p / p)
        let lo = det_regularized(&t, p).unwrap();
        let hi = det_regularized(&t, p + 1).unwrap();
        let tr = t.pow(p as u32).trace() / p as f64;
        prop_assert!(rel_gap(hi, lo * tr.exp()) < 1e-9);
    }

    #[test]
    fn index_counts_placed_zeros(
        zeros in prop::collection::vec((0.0..0.8f64, 0.0..2.0 * PI, 1usize..4), 1..4),
        outside in prop::collection::vec((1.3..3.0f64, 0.0..2.0 * PI), 0..3),
    ) {
        let inside: Vec<(Complex64, usize)> = zeros.iter().map(|&(r, a, m)| (Complex64::from_polar(r, a), m)).collect();
        let far: Vec<Complex64> = outside.iter().map(|&(r, a)| Complex64::from_polar(r, a)).collect();
        let dim = inside.len() + far.len();
        let (inside_f, far_f) = (inside.clone(), far.clone());
        let fam = FnFamily {
            dim,
            f: move |z: Complex64| {
                let mut d: Vec<Complex64> = inside_f.iter().map(|&(a, m)| (z - a).powi(m as i32)).collect();
                d.extend(far_f.iter().map(|&a| z - a));
                CMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))
            },
        };
        let expected: i64 = inside.iter().map(|&(_, m)| m as i64).sum();
        let contour = Contour::circle(c(0.0, 0.0), 1.0).with_samples(64);
        prop_assert_eq!(index_along_contour(&fam, &contour).unwrap(), expected);
    }

    #[test]
    fn winding_is_additive_over_a_split(
        pts in prop::collection::vec((-0.9..0.9f64, -0.9..0.9f64), 1..5),
        cut in -0.5..0.5f64,
    ) {
        prop_assume!(pts.iter().all(|p| (p.0 - cut).abs() > 0.05));
        let zs: Vec<Complex64> = pts.iter().map(|&(x, y)| c(x, y)).collect();
        let zs_f = zs.clone();
        let fam = FnFamily { dim: 1, f: move |z: Complex64| CMatrix::from_element(1, 1, zs_f.iter().map(|&a| z - a).product()) };
        let whole = Contour::rectangle(c(-1.0, -1.0), c(1.0, 1.0)).unwrap();
        let left = Contour::rectangle(c(-1.0, -1.0), c(cut, 1.0)).unwrap();
        let right = Contour::rectangle(c(cut, -1.0), c(1.0, 1.0)).unwrap();
        let w = index_along_contour(&fam, &whole).unwrap();
        prop_assert_eq!(w, zs.len() as i64);
        prop_assert_eq!(index_along_contour(&fam, &left).unwrap() + index_along_contour(&fam, &right).unwrap(), w);
    }

    #[test]
    fn gap_shrinks_with_the_oscillation(a in 0.0..1.0f64, da in 0.01..0.5f64, b0 in 0.5..2.0f64) {
        let small = make_radial_field(b0, Profile::gaussian(a, 1.0)).unwrap();
        let large = make_radial_field(b0, Profile::gaussian(a + da, 1.0)).unwrap();
        prop_assert!(large.osc > small.osc);
        prop_assert!(large.zeta < small.zeta);
        prop_assert!((small.zeta - 2.0 * b0 * (-2.0 * small.osc).exp()).abs() <= 1e-14 * small.zeta);
    }

    #[test]
    fn sector_membership_is_scale_invariant(re in -1.0..1.0f64, im in -1.0..1.0f64, s in 1e-6..1e6f64, delta in 0.01..2.0f64) {
        let w = c(re, im);
        prop_assert_eq!(in_sector(w, delta, 0.0), in_sector(w * s, delta, 0.0));
    }

    #[test]
    fn relative_argument_is_principal(re in -1.0..1.0f64, im in -1.0..1.0f64, arg in -PI..PI) {
        prop_assume!(re.abs() + im.abs() > 1e-9);
        let a = arg_over(c(re, im), Complex64::from_polar(2.0, arg));
        prop_assert!(a > -PI && a <= PI);
    }

    #[test]
    fn square_map_inverts_on_the_quarter_disks(r in 1e-6..0.7f64, t in 0.001..(PI / 2.0 - 0.001)) {
        for branch in [Branch::Plus, Branch::Minus] {
            let k = Complex64::from_polar(r, branch.sign() * t);
            let z = KPlaneGeometry::z_of(k);
            prop_assert!((KPlaneGeometry::k_of(z, branch) - k).norm() <= 1e-12 * r);
        }
    }

    #[test]
    fn profiles_round_trip_through_text(amp in 0.0..10.0f64, w in 0.01..10.0f64, pick in 0usize..4) {
        let p = match pick {
            0 => Profile::gaussian(amp, w),
            1 => Profile::disk(amp, w),
            2 => Profile::bracket(amp, w + 1.0),
            _ => Profile::Constant(amp),
        };
        let back: Profile = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn counting_function_is_monotone(width in 0.3..3.0f64, r1 in 1e-9..1e-1f64, r2 in 1e-9..1e-1f64) {
        let basis = build_zero_modes(&make_constant_field(1.0).unwrap(), 48, 128).unwrap();
        let t = toeplitz::assemble(&basis, &Symbol::Radial(Profile::gaussian(1.0, width))).unwrap();
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assume!(lo > t.floor());
        prop_assert!(t.counting(lo).unwrap() >= t.counting(hi).unwrap());
        prop_assert!(t.eigs.windows(2).all(|w| w[0] >= w[1]));
    }
}
