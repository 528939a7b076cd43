use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, data).unwrap()
}

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    t(shape, &data)
}

#[test]
fn matmul_identity_returns_operand() {
    let mut g = Graph::<f64>::new();
    let i = g.constant(Tensor::identity(2));
    let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let out = g.matmul(i, a).unwrap();
    assert_eq!(g.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[1, 3], &[0.0, 0.0, 0.0]));
    let y = g.softmax(x).unwrap();
    for &v in g.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn conv1d_same_padding_hand_convolved() {
    // [1,2,3,4] * [1,1], width 2: left pad 0, right pad 1 -> [1+2, 2+3, 3+4, 4+0]
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[4, 1], &[1.0, 2.0, 3.0, 4.0]));
    let w = g.constant(t(&[2, 1, 1], &[1.0, 1.0]));
    let y = g.conv1d(x, w).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 5.0, 7.0, 4.0]);
}

#[test]
fn conv1d_width_three_is_centered() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[3, 1], &[1.0, 2.0, 3.0]));
    let w = g.constant(t(&[3, 1, 1], &[1.0, 10.0, 100.0]));
    let y = g.conv1d(x, w).unwrap();
    // out[t] = x[t-1] + 10 x[t] + 100 x[t+1]
    assert_eq!(g.value(y).data(), &[210.0, 321.0, 32.0]);
}

#[test]
fn maxpool_keeps_time_length() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[4, 1], &[1.0, 3.0, 2.0, -1.0]));
    let y = g.maxpool1d(x).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 3.0, 2.0, -1.0]);
}

#[test]
fn backward_of_sum_is_all_ones() {
    let mut g = Graph::<f64>::new();
    let x = g.param(random(&[3, 4], 1, -1.0, 1.0));
    let s = g.sum(x).unwrap();
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn backward_of_sum_of_squares() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[1, 3], &[1.0, 2.0, 3.0]));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn fan_out_sums_both_paths() {
    // y = sum(3x + x*x) -> dy/dx = 3 + 2x
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[1, 2], &[0.5, -1.0]));
    let a = g.scale(x, 3.0).unwrap();
    let b = g.mul(x, x).unwrap();
    let c = g.add(a, b).unwrap();
    let s = g.sum(c).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[4.0, 1.0]);
}

#[test]
fn tanh_of_affine_matches_finite_differences() {
    let w = random(&[3, 4], 2, -1.0, 1.0);
    let x = random(&[4, 1], 3, -1.0, 1.0);
    let report = grad_check_many(
        |g, v| {
            let h = g.matmul(v[0], v[1])?;
            let a = g.tanh(h)?;
            g.sum(a)
        },
        &[w, x],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-6, "{report:?}");
}

#[test]
fn grad_check_linear_function_is_exact() {
    let x = random(&[2, 3], 4, -3.0, 3.0);
    let err = grad_check(|g, v| g.sum(v), &x, 1e-4).unwrap();
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn grad_check_sigmoid_sum() {
    let x = random(&[1, 8], 5, -2.0, 2.0);
    let err = grad_check(
        |g, v| {
            let s = g.sigmoid(v)?;
            g.sum(s)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn grad_check_rejects_bad_epsilon_and_non_scalar() {
    let x = random(&[1, 2], 6, -1.0, 1.0);
    assert!(matches!(grad_check(|g, v| g.sum(v), &x, 1e-2), Err(Error::Contract(_))));
    assert!(matches!(grad_check(|g, v| g.tanh(v), &x, 1e-5), Err(Error::Contract(_))));
}

/// Random weights so that no coordinate sits on a symmetric cancellation.
fn weighted_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> crate::Result<Var> {
    let w = random(g.shape(y), seed, -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn check_unary(seed: u64, shape: &[usize], f: impl Fn(&mut Graph<f64>, Var) -> crate::Result<Var>) -> f64 {
    let x = random(shape, seed, -2.0, 2.0);
    grad_check(
        |g, v| {
            let y = f(g, v)?;
            weighted_sum(g, y, seed + 1000)
        },
        &x,
        1e-6,
    )
    .unwrap()
}

#[test]
fn every_primitive_passes_grad_check_at_five_points() {
    for seed in 0..5u64 {
        let tol = 1e-4;
        let cases: Vec<(&str, f64)> = vec![
            ("tanh", check_unary(seed, &[2, 3], |g, v| g.tanh(v))),
            ("sigmoid", check_unary(seed, &[2, 3], |g, v| g.sigmoid(v))),
            ("softmax", check_unary(seed, &[2, 4], |g, v| g.softmax(v))),
            ("scale", check_unary(seed, &[2, 3], |g, v| g.scale(v, -1.7))),
            ("add_scalar", check_unary(seed, &[2, 3], |g, v| g.add_scalar(v, 0.3))),
            ("slice", check_unary(seed, &[2, 5], |g, v| g.slice(v, 1, 3))),
            ("rows", check_unary(seed, &[4, 3], |g, v| g.rows(v, 1, 2))),
            ("reshape", check_unary(seed, &[2, 3], |g, v| g.reshape(v, &[3, 2]))),
            ("mean", check_unary(seed, &[2, 3], |g, v| g.mean(v))),
            ("sum", check_unary(seed, &[2, 3], |g, v| g.sum(v))),
            ("dropout", check_unary(seed, &[3, 4], |g, v| g.dropout(v, 0.5, 9))),
            (
                "concat",
                check_unary(seed, &[2, 3], |g, v| {
                    let s = g.scale(v, 2.0)?;
                    g.concat(&[v, s, v])
                }),
            ),
            (
                "stack_rows",
                check_unary(seed, &[2, 3], |g, v| {
                    let s = g.tanh(v)?;
                    g.stack_rows(&[v, s])
                }),
            ),
            (
                "mul",
                check_unary(seed, &[2, 3], |g, v| {
                    let s = g.sigmoid(v)?;
                    g.mul(v, s)
                }),
            ),
            (
                "sub",
                check_unary(seed, &[2, 3], |g, v| {
                    let s = g.tanh(v)?;
                    g.sub(s, v)
                }),
            ),
        ];
        for (name, err) in cases {
            assert!(err <= tol, "{name} seed {seed}: {err}");
        }

        // binary primitives with both operands checked
        let a = random(&[3, 4], seed, -1.0, 1.0);
        let b = random(&[4, 2], seed + 50, -1.0, 1.0);
        let r = grad_check_many(
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                weighted_sum(g, y, seed + 7)
            },
            &[a.clone(), b],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error <= tol, "matmul {r:?}");

        let bias = random(&[4], seed + 60, -1.0, 1.0);
        let r = grad_check_many(
            |g, v| {
                let y = g.add(v[0], v[1])?;
                weighted_sum(g, y, seed + 8)
            },
            &[a, bias],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error <= tol, "broadcast add {r:?}");

        let x = random(&[5, 3], seed + 70, -1.0, 1.0);
        let w = random(&[3, 3, 2], seed + 80, -1.0, 1.0);
        let r = grad_check_many(
            |g, v| {
                let y = g.conv1d(v[0], v[1])?;
                weighted_sum(g, y, seed + 9)
            },
            &[x, w],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error <= tol, "conv1d {r:?}");

        let table = random(&[6, 3], seed + 90, -1.0, 1.0);
        let err = grad_check(
            |g, v| {
                let y = g.embedding(v, &[0, 3, 3, 5])?;
                weighted_sum(g, y, seed + 10)
            },
            &table,
            1e-6,
        )
        .unwrap();
        assert!(err <= tol, "embedding {err}");

        let p = random(&[1, 5], seed + 100, 0.05, 0.95);
        let prev = random(&[1, 5], seed + 110, 0.0, 0.4);
        let r = grad_check_many(
            |g, v| {
                let y = g.monotonic_align(v[0], v[1])?;
                weighted_sum(g, y, seed + 11)
            },
            &[p, prev],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error <= tol, "monotonic_align {r:?}");
    }
}

/// relu, abs and maxpool: sample away from kinks, relaxed tolerance.
#[test]
fn kinked_primitives_pass_grad_check_away_from_kinks() {
    for seed in 0..5u64 {
        let mut x = random(&[3, 4], seed + 200, -2.0, 2.0);
        for v in x.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.2;
            }
        }
        for (name, f) in [
            (
                "relu",
                Box::new(|g: &mut Graph<f64>, v| g.relu(v)) as Box<dyn Fn(&mut Graph<f64>, Var) -> crate::Result<Var>>,
            ),
            ("abs", Box::new(|g: &mut Graph<f64>, v| g.abs(v))),
            ("maxpool1d", Box::new(|g: &mut Graph<f64>, v| g.maxpool1d(v))),
        ] {
            let err = grad_check(
                |g, v| {
                    let y = f(g, v)?;
                    weighted_sum(g, y, seed + 300)
                },
                &x,
                1e-6,
            )
            .unwrap();
            assert!(err <= 1e-2, "{name} seed {seed}: {err}");
        }
    }
}

#[test]
fn dropout_zero_is_identity_and_seeded() {
    let x = random(&[4, 8], 11, -1.0, 1.0);
    let mut g = Graph::<f64>::new();
    let v = g.constant(x.clone());
    let y0 = g.dropout(v, 0.0, 3).unwrap();
    assert_eq!(g.value(y0), &x);
    let a = g.dropout(v, 0.5, 3).unwrap();
    let b = g.dropout(v, 0.5, 3).unwrap();
    let c = g.dropout(v, 0.5, 4).unwrap();
    assert_eq!(g.value(a), g.value(b));
    assert_ne!(g.value(a), g.value(c));
}

#[test]
fn dropout_expectation_matches_input() {
    let x = Tensor::<f64>::full(&[1, 16], 1.0);
    let mut acc = [0.0f64; 16];
    let trials = 10_000;
    for seed in 0..trials {
        let mut g = Graph::<f64>::new();
        let v = g.constant(x.clone());
        let y = g.dropout(v, 0.5, seed).unwrap();
        for (a, &b) in acc.iter_mut().zip(g.value(y).data()) {
            *a += b;
        }
    }
    for a in acc {
        let mean = a / trials as f64;
        // one element's estimate has standard error 0.01
        assert!((mean - 1.0).abs() <= 0.04, "mean {mean}");
    }
    let total: f64 = acc.iter().sum::<f64>() / (trials as f64 * 16.0);
    assert!((total - 1.0).abs() <= 0.02, "overall mean {total}");
}

#[test]
fn softmax_rows_sum_to_one_and_are_shift_invariant() {
    let x = random(&[5, 7], 12, -30.0, 30.0);
    let mut shifted = x.clone();
    for r in 0..5 {
        for c in 0..7 {
            shifted.data_mut()[r * 7 + c] += 100.0 * r as f64 - 50.0;
        }
    }
    let mut g = Graph::<f64>::new();
    let a = g.constant(x);
    let b = g.constant(shifted);
    let ya = g.softmax(a).unwrap();
    let yb = g.softmax(b).unwrap();
    for r in 0..5 {
        let s: f64 = g.value(ya).row_slice(r).iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
        for c in 0..7 {
            assert!((g.value(ya).at(r, c) - g.value(yb).at(r, c)).abs() <= 1e-12);
        }
    }
}

#[test]
fn shape_mismatch_names_primitive() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    match g.matmul(a, b) {
        Err(Error::Dimension { op, detail }) => {
            assert_eq!(op, "matmul");
            assert!(detail.contains("[2, 3]"));
        }
        other => panic!("unexpected {other:?}"),
    }
    let c = g_const(&mut g, &[3, 2]);
    assert!(matches!(g.mul(a, c), Err(Error::Dimension { op: "mul", .. })));
}

fn g_const(g: &mut Graph<f64>, shape: &[usize]) -> Var {
    g.constant(Tensor::zeros(shape))
}

#[test]
fn apply_dispatches_by_name_and_rejects_unknown() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[1, 3], &[0.0, 0.0, 0.0]));
    let y = g.apply("softmax", &[x], &PrimitiveAttrs::default()).unwrap();
    assert!((g.value(y).data()[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!(matches!(g.apply("fft", &[x], &PrimitiveAttrs::default()), Err(Error::Config(_))));
    let attrs = PrimitiveAttrs { start: 1, len: 2, ..Default::default() };
    let s = g.apply("slice", &[x], &attrs).unwrap();
    assert_eq!(g.shape(s), &[1, 2]);
}

#[test]
fn backward_contract_errors() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::zeros(&[1, 2]));
    let y = g.tanh(x).unwrap();
    assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    let c = g.constant(Tensor::scalar(1.0));
    let c2 = g.scale(c, 2.0).unwrap();
    assert!(matches!(g.backward(c2), Err(Error::Contract(_))));
}

#[test]
fn records_only_gradient_carrying_entries() {
    let mut g = Graph::<f64>::new();
    let c = g.constant(Tensor::zeros(&[1, 2]));
    let _ = g.tanh(c).unwrap();
    assert_eq!(g.recorded_ops(), 0);
    let p = g.param(Tensor::zeros(&[1, 2]));
    let _ = g.tanh(p).unwrap();
    assert_eq!(g.recorded_ops(), 1);
}

#[test]
fn debug_numerics_flags_non_finite_outputs() {
    let mut g = Graph::<f64>::new().with_debug_numerics(true);
    let x = g.param(t(&[1, 1], &[f64::MAX]));
    assert!(matches!(g.scale(x, 10.0), Err(Error::Numeric(_))));
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[1, 1], &[f64::MAX]));
    assert!(g.scale(x, 10.0).is_ok());
}

#[test]
fn single_precision_graph_runs() {
    let mut g = Graph::<f32>::new();
    let x = g.param(Tensor::<f32>::from_f64(&[1, 3], &[1.0, 2.0, 3.0]).unwrap());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[2.0f32, 4.0, 6.0]);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn conv_and_pool_preserve_time(time in 1usize..12, cin in 1usize..4, cout in 1usize..4, width in 1usize..6, seed in 0u64..1000) {
            let mut g = Graph::<f64>::new();
            let x = g.constant(random(&[time, cin], seed, -1.0, 1.0));
            let w = g.constant(random(&[width, cin, cout], seed + 1, -1.0, 1.0));
            let y = g.conv1d(x, w).unwrap();
            prop_assert_eq!(g.shape(y), &[time, cout]);
            let p = g.maxpool1d(y).unwrap();
            prop_assert_eq!(g.shape(p), &[time, cout]);
        }

        #[test]
        fn monotonic_align_rows_bounded(n in 1usize..10, seed in 0u64..1000) {
            let p = random(&[1, n], seed, 0.0, 1.0);
            let mut prev = random(&[1, n], seed + 1, 0.0, 1.0);
            let s = prev.sum();
            for v in prev.data_mut() { *v /= s; }
            let mut g = Graph::<f64>::new();
            let pv = g.constant(p);
            let av = g.constant(prev);
            let y = g.monotonic_align(pv, av).unwrap();
            let total: f64 = g.value(y).sum();
            prop_assert!(total <= 1.0 + 1e-12);
            prop_assert!(g.value(y).data().iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn tiny_gradients_are_judged_absolutely() {
    let x = t(&[1, 2], &[0.3, -0.7]);
    let rep = grad_check_many(
        |g, v| {
            let w = g.constant(t(&[1, 2], &[1.0, 1e-9]));
            let y = g.mul(v[0], w)?;
            g.sum(y)
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert_eq!(rep.coordinates, 2);
    assert!(rep.resolved_rel_error < 1e-9, "{rep:?}");
    assert!(rep.unresolved_abs_error < 1e-10, "{rep:?}");
}
