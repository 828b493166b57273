//! Per-op forward values and finite-difference checks of the backward rules.

use acrg_core::autodiff::gradcheck::{max_relative_error, numeric_gradient};
use acrg_core::autodiff::{AutodiffError, ParamSet, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Analytic gradient of `build(x)` (summed to a scalar) w.r.t. `x`, plus the
/// same function evaluated as a black box for finite differences.
fn check_unary(x: &Tensor, build: impl Fn(&mut Tape, Var) -> Var) -> f64 {
    let analytic = {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = build(&mut tape, xv);
        let loss = tape.sum(y);
        tape.backward(loss).unwrap().wrt(&tape, xv)
    };
    let numeric = numeric_gradient(x, EPS, |xp| {
        let mut tape = Tape::new();
        let xv = tape.leaf(xp.clone());
        let y = build(&mut tape, xv);
        tape.value(y).sum()
    });
    max_relative_error(&analytic, &numeric, 1e-6)
}

#[test]
fn matmul_identity_and_selector() {
    let mut tape = Tape::new();
    let i = tape.leaf(Tensor::identity(2));
    let m = tape.leaf(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
    let p = tape.matmul(i, m).unwrap();
    assert_eq!(tape.value(p), &Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));

    let s = tape.leaf(Tensor::from_rows(&[[1.0, 0.0], [0.0, 0.0]]));
    let v = tape.leaf(Tensor::from_rows(&[[5.0], [7.0]]));
    let q = tape.matmul(s, v).unwrap();
    assert_eq!(tape.value(q), &Tensor::from_rows(&[[5.0], [0.0]]));
}

#[test]
fn matmul_shape_mismatch_reports_dimensions() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(2, 3));
    let b = tape.leaf(Tensor::zeros(2, 3));
    let err = tape.matmul(a, b).unwrap_err();
    assert_eq!(err, AutodiffError::Shape { op: "matmul", lhs: (2, 3), rhs: (2, 3) });
    assert!(err.to_string().contains("(2, 3)"));
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(3, 3, &mut rng);
    let b = random(3, 3, &mut rng);
    let bb = b.clone();
    let err_a = check_unary(&a, move |t, x| {
        let bv = t.leaf(bb.clone());
        t.matmul(x, bv).unwrap()
    });
    assert!(err_a < 1e-6, "dA rel err {err_a}");
    let aa = a.clone();
    let err_b = check_unary(&b, move |t, x| {
        let av = t.leaf(aa.clone());
        t.matmul(av, x).unwrap()
    });
    assert!(err_b < 1e-6, "dB rel err {err_b}");
    let cc = random(4, 3, &mut rng);
    let err_nt = check_unary(&a, move |t, x| {
        let cv = t.leaf(cc.clone());
        t.matmul_nt(cv, x).unwrap()
    });
    assert!(err_nt < 1e-6, "matmul_nt rel err {err_nt}");
}

#[test]
fn elementwise_forward_values() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row_vector(&[-1.0, 0.0, 2.0]));
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = tape.leaf(Tensor::scalar(0.0));
    let s = tape.sigmoid(z);
    let t = tape.tanh(z);
    assert_eq!(tape.value(s).item(), 0.5);
    assert_eq!(tape.value(t).item(), 0.0);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row_vector(&[0.0, 1.0]));
    let r = tape.relu(x);
    let l = tape.sum(r);
    let g = tape.backward(l).unwrap().wrt(&tape, x);
    assert_eq!(g.data(), &[0.0, 1.0]);
}

#[test]
fn elementwise_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // keep relu test points away from the kink
    let x = random(3, 4, &mut rng).map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v });
    assert!(x.data().iter().all(|v| v.abs() > 0.1));
    assert!(check_unary(&x, |t, v| t.relu(v)) < 1e-6);
    assert!(check_unary(&x, |t, v| t.sigmoid(v)) < 1e-6);
    assert!(check_unary(&x, |t, v| t.tanh(v)) < 1e-6);
    assert!(check_unary(&x, |t, v| t.scale(v, -2.5)) < 1e-6);
    let other = random(3, 4, &mut rng);
    let row = random(1, 4, &mut rng);
    let (o1, o2, o3) = (other.clone(), other.clone(), row.clone());
    assert!(
        check_unary(&x, move |t, v| {
            let w = t.leaf(o1.clone());
            let p = t.mul(v, w).unwrap();
            t.mul(p, v).unwrap()
        }) < 1e-6
    );
    assert!(
        check_unary(&x, move |t, v| {
            let w = t.leaf(o2.clone());
            t.sub(w, v).unwrap()
        }) < 1e-6
    );
    // broadcast operand on the right receives the row-summed gradient
    let xx = x.clone();
    assert!(
        check_unary(&row, move |t, r| {
            let m = t.leaf(xx.clone());
            let a = t.add(m, r).unwrap();
            let b = t.mul(a, r).unwrap();
            t.tanh(b)
        }) < 1e-6
    );
    assert!(
        check_unary(&x, move |t, v| {
            let r = t.leaf(o3.clone());
            t.mul(v, r).unwrap()
        }) < 1e-6
    );
}

#[test]
fn broadcast_rules() {
    let mut tape = Tape::new();
    let m = tape.leaf(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
    let r = tape.leaf(Tensor::row_vector(&[10.0, 20.0]));
    let s = tape.add(m, r).unwrap();
    assert_eq!(tape.value(s).data(), &[11.0, 22.0, 13.0, 24.0]);
    // column vectors and left-side rows do not broadcast
    let c = tape.leaf(Tensor::zeros(2, 1));
    assert!(tape.add(m, c).is_err());
    assert!(tape.add(r, m).is_err());
}

#[test]
fn softmax_uniform_and_stable() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row_vector(&[0.0, 0.0]));
    let y = tape.softmax_rows(x);
    assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    let big = tape.leaf(Tensor::row_vector(&[1000.0, 0.0]));
    let y = tape.softmax_rows(big);
    let v = tape.value(y);
    assert!(v.is_finite());
    assert!((v.data()[0] - 1.0).abs() < 1e-12 && v.data()[1] < 1e-300);
}

#[test]
fn softmax_jvp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = random(2, 4, &mut rng);
    let weights = random(2, 4, &mut rng);
    // weighting the outputs makes the sum non-trivial (plain sum of softmax is constant)
    let w = weights.clone();
    let err = check_unary(&x, move |t, v| {
        let s = t.softmax_rows(v);
        let wv = t.leaf(w.clone());
        t.mul(s, wv).unwrap()
    });
    assert!(err < 1e-5, "softmax rel err {err}");
    let w = weights.clone();
    let err = check_unary(&x, move |t, v| {
        let s = t.log_softmax_rows(v);
        let wv = t.leaf(w.clone());
        t.mul(s, wv).unwrap()
    });
    assert!(err < 1e-5, "log_softmax rel err {err}");
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions_and_shift_invariant(
        raw in prop::collection::vec(-512i32..512, 12),
        shift in -100i32..100,
    ) {
        // multiples of 1/64 plus an integer shift keep every subtraction exact
        let x = Tensor::from_vec(3, 4, raw.iter().map(|&v| v as f64 / 64.0).collect()).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = tape.softmax_rows(xv);
        let shifted = tape.leaf(x.map(|v| v + shift as f64));
        let ys = tape.softmax_rows(shifted);
        for r in 0..3 {
            let row = tape.value(y).row(r);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(tape.value(y), tape.value(ys));
    }
}

#[test]
fn concat_shapes_values_and_split_gradient() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::scalar(1.0));
    let b = tape.leaf(Tensor::scalar(2.0));
    let c = tape.concat_cols(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[1.0, 2.0]);

    let a = tape.leaf(Tensor::zeros(4, 8));
    let b = tape.leaf(Tensor::zeros(4, 8));
    let c = tape.concat_cols(a, b).unwrap();
    assert_eq!(tape.shape(c), (4, 16));
    let l = tape.sum(c);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(&tape, a), Tensor::filled(4, 8, 1.0));
    assert_eq!(g.wrt(&tape, b), Tensor::filled(4, 8, 1.0));

    let d = tape.leaf(Tensor::zeros(3, 8));
    assert!(tape.concat_cols(a, d).is_err());
}

#[test]
fn slice_and_mean_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(3, 6, &mut rng);
    assert!(
        check_unary(&x, |t, v| {
            let s = t.slice_cols(v, 2, 3).unwrap();
            t.tanh(s)
        }) < 1e-6
    );
    assert!(
        check_unary(&x, |t, v| {
            let m = t.mean_rows(v);
            t.mul(m, m).unwrap()
        }) < 1e-6
    );
}

#[test]
fn cross_entropy_values_and_gradient() {
    let mut tape = Tape::new();
    let u = tape.leaf(Tensor::zeros(1, 6));
    let l = tape.cross_entropy(u, 2).unwrap();
    assert!((tape.value(l).item() - 6f64.ln()).abs() < 1e-12);
    assert!((tape.value(l).item() - 1.791759).abs() < 1e-6);

    // margin 20 over one competitor; with five competitors the loss is
    // ln(1 + 5e-20) ~ 1.03e-8, pinned against the closed form instead
    let m = tape.leaf(Tensor::row_vector(&[0.0, 20.0]));
    let l = tape.cross_entropy(m, 1).unwrap();
    assert!(tape.value(l).item() < 1e-8);
    let mut margin = Tensor::zeros(1, 6);
    margin.set(0, 4, 20.0);
    let m = tape.leaf(margin);
    let l = tape.cross_entropy(m, 4).unwrap();
    let closed = (5.0 * (-20f64).exp()).ln_1p();
    assert!((tape.value(l).item() - closed).abs() < 1e-14);

    assert!(matches!(tape.cross_entropy(u, 6), Err(AutodiffError::TargetOutOfRange { .. })));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let logits = random(1, 6, &mut rng);
    let analytic = {
        let mut t = Tape::new();
        let x = t.leaf(logits.clone());
        let l = t.cross_entropy(x, 3).unwrap();
        t.backward(l).unwrap().wrt(&t, x)
    };
    let numeric = numeric_gradient(&logits, EPS, |x| {
        let mut t = Tape::new();
        let v = t.leaf(x.clone());
        let l = t.cross_entropy(v, 3).unwrap();
        t.value(l).item()
    });
    assert!(max_relative_error(&analytic, &numeric, 1e-6) < 1e-6);
    // softmax - onehot
    let p = acrg_core::autodiff::softmax_rows(&logits);
    let mut expected = p.clone();
    expected.data_mut()[3] -= 1.0;
    assert!(analytic.max_abs_diff(&expected) < 1e-15);
}

#[test]
fn backward_sum_of_parameter_is_all_ones_and_disconnected_is_zero() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
    let unused = params.add("unused", Tensor::filled(2, 3, 5.0));
    let bound_but_off_path = params.add("off_path", Tensor::filled(1, 2, 1.0));
    let mut tape = Tape::with_params(&params);
    let wv = tape.param(w);
    let _ = tape.param(bound_but_off_path);
    let loss = tape.sum(wv);
    let grads = tape.backward(loss).unwrap().param_grads(&params);
    assert_eq!(grads[w.index()], Tensor::filled(2, 2, 1.0));
    assert_eq!(grads[unused.index()], Tensor::zeros(2, 3));
    assert_eq!(grads[bound_but_off_path.index()], Tensor::zeros(1, 2));
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(2, 2));
    assert_eq!(tape.backward(x).err(), Some(AutodiffError::NonScalarLoss((2, 2))));
}

#[test]
fn reused_variable_accumulates() {
    // d/dx sum(x*x + x) = 2x + 1
    let x0 = Tensor::row_vector(&[0.5, -2.0]);
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.add(sq, x).unwrap();
    let l = tape.sum(s);
    let g = tape.backward(l).unwrap().wrt(&tape, x);
    assert_eq!(g.data(), &[2.0, -3.0]);
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a = random(5, 7, &mut rng);
    let b = random(7, 3, &mut rng);
    let run = || {
        let mut t = Tape::new();
        let av = t.leaf(a.clone());
        let bv = t.leaf(b.clone());
        let p = t.matmul(av, bv).unwrap();
        let s = t.softmax_rows(p);
        t.value(s).clone()
    };
    let first = run();
    for _ in 0..3 {
        let again = run();
        assert!(first.data().iter().zip(again.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn constants_take_no_gradient_but_pass_it_on() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut tape = Tape::new();
    let x = tape.constant(random(3, 4, &mut rng));
    let w = tape.leaf(random(4, 2, &mut rng));
    let k = tape.constant(random(3, 2, &mut rng));
    let xw = tape.matmul(x, w).unwrap();
    let kk = tape.tanh(k);
    let y = tape.mul(xw, kk).unwrap();
    let loss = tape.sum(y);
    assert!(!tape.requires_grad(x) && !tape.requires_grad(kk) && tape.requires_grad(y));
    let g = tape.backward(loss).unwrap();
    assert!(g.get(x).is_none() && g.get(k).is_none() && g.get(kk).is_none());
    // d/dW sum((X·W) ∘ tanh K) = Xᵀ · tanh K
    let expected = acrg_core::autodiff::matmul_values(&tape.value(x).transpose(), tape.value(kk)).unwrap();
    assert!(g.get(w).unwrap().max_abs_diff(&expected) < 1e-12);
}

#[test]
fn loss_of_constants_has_no_gradients() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::filled(2, 2, 1.5));
    let s = tape.sum(x);
    let g = tape.backward(s).unwrap();
    assert!(g.get(s).is_none() && g.get(x).is_none());
}

#[test]
fn gradcheck_accepts_curvature_near_a_flat_slope() {
    use acrg_core::autodiff::gradcheck::{check_params, GradCheckConfig};
    // f = x², slope 2e-4 at x = 1e-4: the one-sided slopes differ by 2·eps, far above tol·|f'|
    let mut p = ParamSet::new();
    p.add("x", Tensor::scalar(1e-4));
    let grads = vec![Tensor::scalar(2e-4)];
    let report =
        check_params(&p, &grads, |p| p.get(p.ids().next().unwrap()).item().powi(2), &GradCheckConfig::default());
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.blocks[0].skipped_kinks, 0);
}

#[test]
fn gradcheck_skips_a_kink_inside_the_step() {
    use acrg_core::autodiff::gradcheck::{check_params, GradCheckConfig};
    let mut p = ParamSet::new();
    p.add("x", Tensor::scalar(2e-6));
    let grads = vec![Tensor::scalar(1.0)];
    let report = check_params(&p, &grads, |p| p.get(p.ids().next().unwrap()).item().abs(), &GradCheckConfig::default());
    assert_eq!(report.blocks[0].skipped_kinks, 1);
    assert_eq!(report.blocks[0].checked, 0);
    assert!(!report.passed());
}
