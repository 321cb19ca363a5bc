use super::*;
use crate::numerics::{finite_diff_gradient, Tape, Tensor};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

fn c1() -> Curvature {
    Curvature::new(1.0).unwrap()
}

fn point(coords: &[f64], c: f64) -> PoincarePoint {
    PoincarePoint::new(coords.to_vec(), Curvature::new(c).unwrap())
}

/// Uniform-ish point inside the ball: direction from a normal-ish cube
/// sample, radius up to `frac` of the ball radius.
fn random_point(rng: &mut ChaCha12Rng, dim: usize, c: f64, frac: f64) -> PoincarePoint {
    let curvature = Curvature::new(c).unwrap();
    let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    let r = rng.gen_range(0.0..frac) * curvature.radius();
    PoincarePoint::new(dir.iter().map(|v| v * r / n).collect(), curvature)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

#[test]
fn mobius_add_right_identity() {
    let x = point(&[0.2, -0.4, 0.1], 1.0);
    let zero = PoincarePoint::origin(3, c1());
    let out = mobius_add(&x, &zero).unwrap();
    assert!(rel_err(out.coords(), x.coords()) < 1e-12);
}

#[test]
fn mobius_add_left_inverse() {
    let x = point(&[0.3, 0.1], 1.0);
    let out = mobius_add(&x, &x.neg()).unwrap();
    assert!(out.coords().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn mobius_add_collinear_matches_scalar_oracle() {
    // collinear points reduce to scalar Mobius addition (u+v)/(1+c*u*v)
    let scalar_oracle = |u: f64, v: f64, c: f64| (u + v) / (1.0 + c * u * v);
    let x = point(&[0.3, 0.0], 1.0);
    let y = point(&[0.4, 0.0], 1.0);
    let out = mobius_add(&x, &y).unwrap();
    let expected = scalar_oracle(0.3, 0.4, 1.0);
    assert!((out.coords()[0] - expected).abs() < 1e-12);
    assert!((out.coords()[0] - 0.625).abs() < 1e-12);
    assert!(out.coords()[1].abs() < 1e-15);
}

#[test]
fn mobius_add_rejects_curvature_mismatch() {
    let x = point(&[0.1, 0.0], 1.0);
    let y = point(&[0.1, 0.0], 2.0);
    assert!(matches!(
        mobius_add(&x, &y),
        Err(HyperbolicError::CurvatureMismatch(_, _))
    ));
}

#[test]
fn exp_map_at_origin_of_zero_is_origin() {
    let v = TangentVector::at_origin(vec![0.0, 0.0], c1());
    let out = exp_map(&v).unwrap();
    assert!(out.coords().iter().all(|&x| x == 0.0));
}

#[test]
fn exp_map_closed_form() {
    // exp_0((0.5, 0)) = (tanh(0.5), 0) at c = 1
    let v = TangentVector::at_origin(vec![0.5, 0.0], c1());
    let out = exp_map(&v).unwrap();
    assert!((out.coords()[0] - 0.5f64.tanh()).abs() < 1e-15);
    assert!((out.coords()[0] - 0.462117).abs() < 1e-6);
}

#[test]
fn exp_log_roundtrip_at_origin() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    for _ in 0..200 {
        let coords: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = TangentVector::at_origin(coords.clone(), c1());
        let back = log_map(&exp_map(&v).unwrap(), &v.basepoint).unwrap();
        assert!(rel_err(&back.coords, &coords) < 1e-9);
    }
}

#[test]
fn exp_log_roundtrip_general_basepoint() {
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    for c in [0.5, 1.0, 2.0] {
        for _ in 0..200 {
            let base = random_point(&mut rng, 3, c, 0.7);
            let tangent: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let v = TangentVector {
                coords: tangent.clone(),
                basepoint: base.clone(),
            };
            let y = exp_map(&v).unwrap();
            let back = log_map(&y, &base).unwrap();
            assert!(
                rel_err(&back.coords, &tangent) < 1e-8,
                "c={c} base={:?} v={tangent:?} got={:?}",
                base.coords(),
                back.coords
            );
        }
    }
}

#[test]
fn distance_of_point_to_itself_is_zero() {
    let x = point(&[0.2, 0.5], 1.0);
    assert!(geodesic_distance(&x, &x).unwrap() < 1e-12);
}

#[test]
fn distance_symmetry() {
    let mut rng = ChaCha12Rng::seed_from_u64(13);
    for _ in 0..100 {
        let x = random_point(&mut rng, 3, 1.0, 0.9);
        let y = random_point(&mut rng, 3, 1.0, 0.9);
        let dxy = geodesic_distance(&x, &y).unwrap();
        let dyx = geodesic_distance(&y, &x).unwrap();
        assert!((dxy - dyx).abs() < 1e-12);
    }
}

#[test]
fn distance_from_origin_scalar_oracle() {
    // d(0, (0.5,0)) = 2 * artanh(0.5) at c = 1
    let origin = PoincarePoint::origin(2, c1());
    let x = point(&[0.5, 0.0], 1.0);
    let d = geodesic_distance(&origin, &x).unwrap();
    assert!((d - 2.0 * 0.5f64.atanh()).abs() < 1e-12);
    assert!((d - 1.098612).abs() < 1e-6);
}

#[test]
fn matvec_identity_matrix() {
    let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let x = point(&[0.3, -0.2], 1.0);
    let out = mobius_matvec(&eye, &x).unwrap();
    assert!(rel_err(out.coords(), x.coords()) < 1e-9);
}

#[test]
fn matvec_of_origin_is_origin() {
    let m = Tensor::new(vec![2, 2], vec![3.0, 1.0, -2.0, 0.5]).unwrap();
    let x = PoincarePoint::origin(2, c1());
    let out = mobius_matvec(&m, &x).unwrap();
    assert!(out.coords().iter().all(|&v| v == 0.0));
}

#[test]
fn matvec_scaling_matches_scalar_oracle() {
    // M = 2I on x = (0.3, 0): direction (1,0), magnitude tanh(2*artanh(0.3)).
    // The scalar oracle via the double-angle identity: tanh(2a) = 2t/(1+t^2).
    let m = Tensor::new(vec![2, 2], vec![2.0, 0.0, 0.0, 2.0]).unwrap();
    let x = point(&[0.3, 0.0], 1.0);
    let out = mobius_matvec(&m, &x).unwrap();
    let oracle = (2.0 * 0.3f64.atanh()).tanh();
    let double_angle = 2.0 * 0.3 / (1.0 + 0.09);
    assert!((oracle - double_angle).abs() < 1e-15);
    assert!((out.coords()[0] - oracle).abs() < 1e-12, "{}", out.coords()[0]);
    assert!(out.coords()[1].abs() < 1e-15);
}

#[test]
fn matvec_scalar_associativity() {
    // diagonal scalar matrices commute through the magnitude formula
    let mut rng = ChaCha12Rng::seed_from_u64(14);
    for _ in 0..100 {
        let a = rng.gen_range(0.2..1.5);
        let b = rng.gen_range(0.2..1.5);
        let ma = Tensor::new(vec![2, 2], vec![a, 0.0, 0.0, a]).unwrap();
        let mb = Tensor::new(vec![2, 2], vec![b, 0.0, 0.0, b]).unwrap();
        let mab = Tensor::new(vec![2, 2], vec![a * b, 0.0, 0.0, a * b]).unwrap();
        let x = random_point(&mut rng, 2, 1.0, 0.8);
        let lhs = mobius_matvec(&ma, &mobius_matvec(&mb, &x).unwrap()).unwrap();
        let rhs = mobius_matvec(&mab, &x).unwrap();
        assert!(rel_err(lhs.coords(), rhs.coords()) < 1e-9);
    }
}

#[test]
fn activation_identity_is_identity() {
    let x = point(&[0.4, 0.2], 1.0);
    let out = hyperbolic_activation(&x, Activation::Identity).unwrap();
    assert!(rel_err(out.coords(), x.coords()) < 1e-9);
}

#[test]
fn activation_of_origin_is_origin() {
    let x = PoincarePoint::origin(3, c1());
    let out = hyperbolic_activation(&x, Activation::Tanh).unwrap();
    assert!(out.coords().iter().all(|&v| v == 0.0));
}

#[test]
fn activation_tanh_composes_closed_forms() {
    // x = exp_0((0.5,0)); sigma_H(x) = exp_0(tanh(0.5), 0)
    let x = point(&[0.5f64.tanh(), 0.0], 1.0);
    let out = hyperbolic_activation(&x, Activation::Tanh).unwrap();
    let expected = exp0_slice(&[0.5f64.tanh(), 0.0], 1.0);
    assert!(rel_err(out.coords(), &expected) < 1e-12);
}

#[test]
fn aggregate_single_point_is_that_point() {
    let x = point(&[0.3, -0.1], 1.0);
    let out = hyperbolic_aggregate(std::slice::from_ref(&x), &[1.0]).unwrap();
    assert!(rel_err(out.coords(), x.coords()) < 1e-12);
}

#[test]
fn aggregate_two_copies_is_fixed_point() {
    let x = point(&[0.25, 0.4], 1.0);
    let out = hyperbolic_aggregate(&[x.clone(), x.clone()], &[1.0, 1.0]).unwrap();
    assert!(rel_err(out.coords(), x.coords()) < 1e-12);
}

#[test]
fn aggregate_symmetric_pair_is_origin() {
    let a = point(&[0.3, 0.0], 1.0);
    let b = point(&[-0.3, 0.0], 1.0);
    let out = hyperbolic_aggregate(&[a, b], &[1.0, 1.0]).unwrap();
    assert!(out.coords().iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn aggregate_rejects_empty() {
    assert!(matches!(
        hyperbolic_aggregate(&[], &[]),
        Err(HyperbolicError::EmptyAggregate)
    ));
}

#[test]
fn projection_is_observable() {
    reset_projection_count();
    let before = projection_count();
    // far outside the ball: must project
    let p = point(&[5.0, 5.0], 1.0);
    let nsq: f64 = p.coords().iter().map(|v| v * v).sum();
    assert!(nsq < 1.0);
    assert!(projection_count() > before);
}

#[test]
fn left_cancellation_sample() {
    let mut rng = ChaCha12Rng::seed_from_u64(15);
    for c in [0.5, 1.0, 2.0] {
        for _ in 0..100 {
            let x = random_point(&mut rng, 3, c, 0.9);
            let y = random_point(&mut rng, 3, c, 0.9);
            let xy = mobius_add(&x, &y).unwrap();
            let back = mobius_add(&x.neg(), &xy).unwrap();
            assert!(rel_err(back.coords(), y.coords()) < 1e-8);
        }
    }
}

// ---- differentiable route ----

#[test]
fn diff_exp0_matches_plain() {
    let tape = Tape::new();
    let rows = Tensor::from_rows(&[vec![0.5, 0.0, -0.3], vec![0.0, 0.0, 0.0]]).unwrap();
    let v = tape.constant(rows.clone());
    let out = diff::exp0_rows(v, c1()).unwrap().value();
    for i in 0..2 {
        let plain = exp0_slice(&rows.row(i), 1.0);
        assert!(rel_err(&out.row(i), &plain) < 1e-10, "row {i}");
    }
}

#[test]
fn diff_mobius_add_matches_plain() {
    let mut rng = ChaCha12Rng::seed_from_u64(16);
    let tape = Tape::new();
    for c in [0.5, 1.0, 2.0] {
        let curvature = Curvature::new(c).unwrap();
        let a = random_point(&mut rng, 4, c, 0.9);
        let b = random_point(&mut rng, 4, c, 0.9);
        let av = tape.constant(Tensor::from_rows(&[a.coords().to_vec()]).unwrap());
        let bv = tape.constant(Tensor::from_rows(&[b.coords().to_vec()]).unwrap());
        let out = diff::mobius_add_rows(av, bv, curvature).unwrap().value();
        let plain = mobius_add_slice(a.coords(), b.coords(), c);
        assert!(rel_err(&out.row(0), &plain) < 1e-10);
    }
}

#[test]
fn diff_matvec_matches_plain() {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    let tape = Tape::new();
    let m = Tensor::new(vec![3, 3], (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let x = random_point(&mut rng, 3, 1.0, 0.8);
    let xv = tape.constant(Tensor::from_rows(&[x.coords().to_vec()]).unwrap());
    let mv = tape.constant(m.clone());
    let out = diff::mobius_matvec_rows(xv, mv, c1()).unwrap().value();
    let plain = mobius_matvec(&m, &x).unwrap();
    assert!(rel_err(&out.row(0), plain.coords()) < 1e-9);
}

#[test]
fn diff_distance_chain_gradcheck() {
    // loss = d(exp0(a), exp0(b)) as a function of a; backward vs
    // central differences at h = 1e-5
    let a0 = Tensor::from_rows(&[vec![0.3, -0.2, 0.1]]).unwrap();
    let b0 = Tensor::from_rows(&[vec![-0.1, 0.4, 0.2]]).unwrap();
    let curvature = c1();

    let eval = |a: &Tensor| -> crate::numerics::Result<f64> {
        let tape = Tape::new();
        let av = tape.leaf(a.clone());
        let bv = tape.constant(b0.clone());
        let pa = diff::exp0_rows(av, curvature)?;
        let pb = diff::exp0_rows(bv, curvature)?;
        let d = diff::distance_rows(pa, pb, curvature)?;
        d.sum()?.value().item()
    };
    let mut f = eval;
    let numeric = finite_diff_gradient(&mut f, &a0, 1e-5).unwrap();

    let tape = Tape::new();
    let av = tape.leaf(a0.clone());
    let bv = tape.constant(b0.clone());
    let pa = diff::exp0_rows(av, curvature).unwrap();
    let pb = diff::exp0_rows(bv, curvature).unwrap();
    let loss = diff::distance_rows(pa, pb, curvature)
        .unwrap()
        .sum()
        .unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic = grads.wrt(av).unwrap();

    let err = crate::numerics::max_rel_err(analytic, &numeric, 1e-8);
    assert!(err < 1e-4, "rel err {err}");
}

#[test]
fn diff_project_rows_rescales_only_outside() {
    let tape = Tape::new();
    let rows = Tensor::from_rows(&[vec![0.1, 0.1], vec![3.0, 4.0]]).unwrap();
    let v = tape.constant(rows);
    let out = diff::project_rows(v, c1()).unwrap().value();
    assert!((out.at(0, 0) - 0.1).abs() < 1e-15);
    let nsq: f64 = out.row(1).iter().map(|x| x * x).sum();
    assert!(nsq < 1.0 && nsq > 0.99);
}
