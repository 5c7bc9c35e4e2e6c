use infoalign_core::diffcore::gradcheck::{check_inputs, check_params, relative_error, DEFAULT_STEP};
use infoalign_core::diffcore::{
    adam_step, load_checkpoint, save_checkpoint, Activation, Adam, AdamConfig, Checkpoint, DenseArray, Dtype, Mlp,
    ParamStore, Tape, Var,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

/// Entries bounded away from zero so kinks and log singularities are not probed.
fn away_from_zero<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseArray {
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = rng.random_range(0.2..2.0);
            if rng.random_bool(0.5) { x } else { -x }
        })
        .collect();
    DenseArray::new(vec![rows, cols], data).unwrap()
}

fn positive<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseArray {
    DenseArray::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(0.2..3.0)).collect()).unwrap()
}

/// Weights each output entry differently so that sum-reduction cannot hide errors.
fn weighted(t: &mut Tape, out: Var) -> Var {
    let shape = t.value(out).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = DenseArray::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect()).unwrap();
    let w = t.leaf(w);
    let p = t.mul(out, w).unwrap();
    t.sum(p)
}

type Unary = fn(&mut Tape, Var) -> Var;

fn check_unary(name: &str, f: Unary, x: DenseArray) {
    let r = check_inputs(&[x], DEFAULT_STEP, |t, v| {
        let y = f(t, v[0]);
        Ok(weighted(t, y))
    })
    .unwrap();
    assert!(r.passes(TOL), "{name}: {:?}", r.errors);
}

#[test]
fn elementwise_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: [(&str, Unary, bool); 8] = [
        ("relu", |t, x| t.relu(x), false),
        ("sigmoid", |t, x| t.sigmoid(x), false),
        ("tanh", |t, x| t.tanh(x), false),
        ("exp", |t, x| t.exp(x), false),
        ("log", |t, x| t.log(x), true),
        ("softplus", |t, x| t.softplus(x), false),
        ("scale", |t, x| t.scale(x, -2.5), false),
        ("add_scalar", |t, x| t.add_scalar(x, 0.7), false),
    ];
    for (name, f, pos) in cases {
        for (r, c) in [(1, 1), (3, 4), (5, 2)] {
            let x = if pos { positive(r, c, &mut rng) } else { away_from_zero(r, c, &mut rng) };
            check_unary(name, f, x);
        }
    }
    // Clamp: interior entries pass gradient, exterior ones do not.
    let x = DenseArray::row(&[-3.0, -0.5, 0.25, 0.9, 4.0]);
    check_unary("clamp", |t, v| t.clamp(v, -1.0, 1.0), x);
}

#[test]
fn reductions_and_binary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
        let a = away_from_zero(r, c, &mut rng);
        let b = away_from_zero(r, c, &mut rng);
        let ab = [a.clone(), b.clone()];
        type Binary = fn(&mut Tape, Var, Var) -> Var;
        let ops: [(&str, Binary); 3] = [
            ("add", |t, x, y| t.add(x, y).unwrap()),
            ("sub", |t, x, y| t.sub(x, y).unwrap()),
            ("mul", |t, x, y| t.mul(x, y).unwrap()),
        ];
        for (name, op) in ops {
            let res = check_inputs(&ab, DEFAULT_STEP, |t, v| {
                let y = op(t, v[0], v[1]);
                Ok(weighted(t, y))
            })
            .unwrap();
            assert!(res.passes(TOL), "{name}: {:?}", res.errors);
        }
        let res = check_inputs(&[a.clone()], DEFAULT_STEP, |t, v| {
            let s = t.sum_cols(v[0])?;
            Ok(weighted(t, s))
        })
        .unwrap();
        assert!(res.passes(TOL), "sum_cols {:?}", res.errors);
        let res = check_inputs(&[a.clone()], DEFAULT_STEP, |t, v| {
            let sq = t.mul(v[0], v[0])?;
            Ok(t.mean(sq))
        })
        .unwrap();
        assert!(res.passes(TOL), "mean {:?}", res.errors);
        let row = away_from_zero(1, c, &mut rng);
        let res = check_inputs(&[a.clone(), row], DEFAULT_STEP, |t, v| {
            let y = t.add_row(v[0], v[1])?;
            let y = t.tanh(y);
            Ok(weighted(t, y))
        })
        .unwrap();
        assert!(res.passes(TOL), "add_row {:?}", res.errors);
        let extra = away_from_zero(r, 2, &mut rng);
        let res = check_inputs(&[a, b, extra], DEFAULT_STEP, |t, v| {
            let y = t.concat(v)?;
            let y = t.sigmoid(y);
            Ok(weighted(t, y))
        })
        .unwrap();
        assert!(res.passes(TOL), "concat {:?}", res.errors);
    }
}

#[test]
fn gather_and_scatter_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = away_from_zero(4, 3, &mut rng);
    // Repeated indices must accumulate gradient.
    let res = check_inputs(&[a.clone()], DEFAULT_STEP, |t, v| {
        let g = t.gather_rows(v[0], &[2, 0, 2, 3, 2])?;
        Ok(weighted(t, g))
    })
    .unwrap();
    assert!(res.passes(TOL), "{:?}", res.errors);
    let res = check_inputs(&[a], DEFAULT_STEP, |t, v| {
        let s = t.scatter_add_rows(v[0], &[1, 1, 0, 4], 6)?;
        let s = t.tanh(s);
        Ok(weighted(t, s))
    })
    .unwrap();
    assert!(res.passes(TOL), "{:?}", res.errors);
    let mut t = Tape::new();
    let x = t.leaf(DenseArray::zeros(2, 2));
    assert!(t.gather_rows(x, &[2]).is_err());
    assert!(t.scatter_add_rows(x, &[0, 5], 3).is_err());
    assert!(t.scatter_add_rows(x, &[0], 3).is_err());
}

#[test]
fn mlp_parameters_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for act in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "f", &[3, 5, 2], act, &mut rng).unwrap();
        // Perturb the zero biases so relu kinks are unlikely at the check point.
        for id in store.ids().collect::<Vec<_>>() {
            for x in store.value_mut(id).data_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
        }
        let x = away_from_zero(4, 3, &mut rng);
        let res = check_params(&store, DEFAULT_STEP, |t, s| {
            let input = t.leaf(x.clone());
            let y = mlp.forward(t, s, input)?;
            let y = t.mul(y, y)?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(res.passes(TOL), "{act:?}: {:?}", res.errors);
    }
}

/// Hand-coded central differences, independent of the library checker.
#[test]
fn matmul_against_hand_differences() {
    let a = DenseArray::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.3, -0.7]]).unwrap();
    let b = DenseArray::from_rows(&[vec![1.0, 2.0], vec![-0.4, 0.9], vec![0.6, -1.1]]).unwrap();
    let f = |a: &DenseArray, b: &DenseArray| -> f64 {
        let c = a.matmul(b).unwrap();
        c.data().iter().map(|x| x.sin()).sum()
    };
    let mut t = Tape::new();
    let (va, vb) = (t.leaf(a.clone()), t.leaf(b.clone()));
    let c = t.matmul(va, vb).unwrap();
    // d/dc sum(sin c) = cos c; feed it through a weighted sum with constant cos weights.
    let w = t.leaf(t.value(c).map(f64::cos));
    let p = t.mul(c, w).unwrap();
    let s = t.sum(p);
    let g = t.backward(s);
    let h = 1e-6;
    for (arr, var, is_a) in [(&a, va, true), (&b, vb, false)] {
        let mut numeric = Vec::new();
        for i in 0..arr.len() {
            let (mut up, mut down) = (arr.clone(), arr.clone());
            up.data_mut()[i] += h;
            down.data_mut()[i] -= h;
            let (fu, fd) = if is_a { (f(&up, &b), f(&down, &b)) } else { (f(&a, &up), f(&a, &down)) };
            numeric.push((fu - fd) / (2.0 * h));
        }
        assert!(relative_error(g.get(var).unwrap().data(), &numeric) < TOL);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_shape_composites(seed in any::<u64>(), r in 1usize..6, k in 1usize..6, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = away_from_zero(r, k, &mut rng);
        let b = away_from_zero(k, c, &mut rng);
        let bias = away_from_zero(1, c, &mut rng);
        let res = check_inputs(&[a, b, bias], DEFAULT_STEP, |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add_row(h, v[2])?;
            let h = t.softplus(h);
            let l = t.log(h);
            let s = t.sum_cols(l)?;
            Ok(weighted(t, s))
        }).unwrap();
        prop_assert!(res.passes(TOL), "{:?}", res.errors);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    Mlp::new(&mut store, "enc", &[4, 8, 3], Activation::Relu, &mut rng).unwrap();
    let mut ck = Checkpoint::new(123, serde_json::json!({"beta": 0.1}));
    for (n, a) in store.named_values() {
        ck.push(n, a.clone());
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.iapt");
    save_checkpoint(&p, &ck).unwrap();
    let back = load_checkpoint(&p).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), std::fs::read(&p).unwrap());

    let mut restored = store.clone();
    for id in restored.ids().collect::<Vec<_>>() {
        restored.value_mut(id).data_mut().fill(0.0);
    }
    restored.load_values(back.arrays.iter().map(|(n, a)| (n.as_str(), a))).unwrap();
    assert_eq!(
        restored.named_values().collect::<Vec<_>>(),
        store.named_values().collect::<Vec<_>>()
    );

    // Half precision storage loses at most f32 rounding.
    let mut half = ck.clone();
    half.dtype = Dtype::F32;
    let hb = Checkpoint::from_bytes(&half.to_bytes()).unwrap();
    for ((_, x), (_, y)) in hb.arrays.iter().zip(&ck.arrays) {
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= b.abs() * 1e-7 + 1e-45);
        }
    }

    let bytes = ck.to_bytes();
    let mut flipped = bytes.clone();
    *flipped.last_mut().unwrap() ^= 0x40;
    assert!(Checkpoint::from_bytes(&flipped).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(Checkpoint::from_bytes(&magic).is_err());
    assert!(Checkpoint::from_bytes(&[]).is_err());
}

/// Plain-loop Adam used as the oracle for the library update.
fn reference_adam(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: i32, lr: f64) {
    for i in 0..p.len() {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        let mh = m[i] / (1.0 - 0.9f64.powi(t));
        let vh = v[i] / (1.0 - 0.999f64.powi(t));
        p[i] -= lr * mh / (vh.sqrt() + 1e-8);
    }
}

#[test]
fn adam_matches_reference_and_minimizes_quadratic() {
    let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
    let target = [1.5, -0.5, 3.0];
    let mut store = ParamStore::new();
    let id = store.add("x", DenseArray::row(&[0.0, 0.0, 0.0])).unwrap();
    let mut opt = Adam::new(&store, cfg);
    let (mut p, mut m, mut v) = (vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
    for step in 1..=2000 {
        let grad: Vec<f64> = p.iter().zip(&target).map(|(x, c)| 2.0 * (x - c)).collect();
        reference_adam(&mut p, &grad, &mut m, &mut v, step, cfg.lr);

        let mut t = Tape::new();
        let x = t.param(&store, id);
        let c = t.leaf(DenseArray::row(&target));
        let d = t.sub(x, c).unwrap();
        let sq = t.mul(d, d).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss);
        store.zero_grad();
        store.accumulate(&g);
        opt.step(&mut store);
        for (a, b) in store.value(id).data().iter().zip(&p) {
            assert!((a - b).abs() < 1e-12, "step {step}");
        }
    }
    assert_eq!(opt.steps(), 2000);
    for (a, c) in store.value(id).data().iter().zip(&target) {
        assert!((a - c).abs() < 1e-3);
    }

    let mut q = [0.0];
    let (mut m1, mut v1) = ([0.0], [0.0]);
    adam_step(&mut q, &[1.0], &mut m1, &mut v1, &cfg, 1);
    assert!((q[0] + cfg.lr).abs() < 1e-9);

    let (mm, vv) = opt.moments();
    let mut fresh = Adam::new(&store, cfg);
    assert!(fresh.restore(mm.to_vec(), vv.to_vec(), opt.steps()));
    assert_eq!(fresh.steps(), 2000);
    assert!(!fresh.restore(vec![], vec![], 0));
}
