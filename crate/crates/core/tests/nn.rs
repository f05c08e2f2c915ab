mod common;

use proptest::prelude::*;

use common::{gradcheck, randn, rng};
use dnazen::nn::{
    checkpoint, transformer_layer, transformer_layer_forward, Adam, AdamConfig, LayerParams, LayerVars, ParamStore,
    Tape, Tensor, Var,
};

fn perturbed(p: &LayerParams, std: f32, seed: u64) -> LayerParams {
    let mut r = rng(seed);
    let mut out = p.clone();
    for t in &mut out.tensors {
        let noise = Tensor::randn(t.shape(), std, &mut r);
        for (v, n) in t.data_mut().iter_mut().zip(noise.data()) {
            *v += n;
        }
    }
    out
}

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).iter().map(|&v| v as f64).collect()).collect()
}

fn affine(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
    let (k, n) = (w.rows(), w.cols());
    x.iter()
        .map(|row| (0..n).map(|j| b.data()[j] as f64 + (0..k).map(|i| row[i] * w.data()[i * n + j] as f64).sum::<f64>()).collect())
        .collect()
}

fn norm(x: &Mat, g: &Tensor, b: &Tensor) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * g.data()[j] as f64 + b.data()[j] as f64)
                .collect()
        })
        .collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

/// One post-norm encoder layer written out step by step in f64.
fn reference_layer(p: &LayerParams, x: &Tensor) -> Mat {
    let t = &p.tensors;
    let x = to_mat(x);
    let q = affine(&x, &t[0], &t[1]);
    let k = affine(&x, &t[2], &t[3]);
    let v = affine(&x, &t[4], &t[5]);
    let h = x[0].len();
    let d = h / p.heads;
    let mut ctx = vec![vec![0.0; h]; x.len()];
    for head in 0..p.heads {
        let cols = head * d..(head + 1) * d;
        for i in 0..x.len() {
            let scores: Vec<f64> = (0..x.len())
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for (j, s) in scores.iter().enumerate() {
                let w = (s - max).exp() / z;
                for c in cols.clone() {
                    ctx[i][c] += w * v[j][c];
                }
            }
        }
    }
    let h1 = norm(&add(&x, &affine(&ctx, &t[6], &t[7])), &t[8], &t[9]);
    let f = affine(&h1, &t[10], &t[11])
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|u| 0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh()))
                .collect()
        })
        .collect::<Mat>();
    norm(&add(&h1, &affine(&f, &t[12], &t[13])), &t[14], &t[15])
}

#[test]
fn layer_matches_straight_line_reference() {
    let mut r = rng(1);
    let p = perturbed(&LayerParams::init(8, 2, &mut r).unwrap(), 0.3, 2);
    let x = randn(&[3, 8], &mut r);
    let (y, _) = transformer_layer_forward(&p, &x, None).unwrap();
    let want = reference_layer(&p, &x);
    for i in 0..3 {
        for j in 0..8 {
            assert!((y.row(i)[j] as f64 - want[i][j]).abs() < 1e-5, "({i},{j})");
        }
    }
}

#[test]
fn forward_is_pure() {
    let mut r = rng(3);
    let p = perturbed(&LayerParams::init(16, 4, &mut r).unwrap(), 0.2, 4);
    let x = randn(&[7, 16], &mut r);
    let a = transformer_layer_forward(&p, &x, Some(&[true, true, false, true, true, true, false])).unwrap();
    let b = transformer_layer_forward(&p, &x, Some(&[true, true, false, true, true, true, false])).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    for (x, y) in a.1.iter().zip(&b.1) {
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn single_key_gets_all_weight() {
    let mut r = rng(5);
    let p = LayerParams::init(8, 2, &mut r).unwrap();
    let (_, attn) = transformer_layer_forward(&p, &randn(&[1, 8], &mut r), None).unwrap();
    for a in attn {
        assert_eq!(a.data(), &[1.0]);
    }
}

#[test]
fn masked_keys_do_not_leak() {
    let mut r = rng(6);
    let p = perturbed(&LayerParams::init(8, 2, &mut r).unwrap(), 0.3, 7);
    let mask = [true, false, false];
    let x = randn(&[3, 8], &mut r);
    let mut x2 = x.clone();
    for v in &mut x2.data_mut()[8..] {
        *v += 1.5;
    }
    let (a, _) = transformer_layer_forward(&p, &x, Some(&mask)).unwrap();
    let (b, _) = transformer_layer_forward(&p, &x2, Some(&mask)).unwrap();
    // Row 0 sees only itself, so rows 1 and 2 cannot change it.
    assert_eq!(a.row(0), b.row(0));
    assert_ne!(a.row(1), b.row(1));
}

#[test]
fn two_layer_model_gradients() {
    let mut r = rng(8);
    let l1 = perturbed(&LayerParams::init(8, 2, &mut r).unwrap(), 0.3, 9);
    let l2 = perturbed(&LayerParams::init(8, 2, &mut r).unwrap(), 0.3, 10);
    let mut inputs = vec![randn(&[4, 8], &mut r)];
    inputs.extend(l1.tensors.iter().cloned());
    inputs.extend(l2.tensors.iter().cloned());
    let errs = gradcheck(&inputs, 64, 11, |tape: &mut Tape, v: &[Var]| {
        let a = LayerVars::new(2, v[1..17].to_vec())?;
        let b = LayerVars::new(2, v[17..].to_vec())?;
        let h = transformer_layer(tape, &a, v[0], None)?.output;
        Ok(transformer_layer(tape, &b, h, None)?.output)
    });
    let max_abs = errs.iter().map(|e| e.max_abs).fold(0.0, f64::max);
    let scale = errs.iter().map(|e| e.scale).fold(0.0, f64::max);
    assert!(max_abs / scale < 1e-2, "relative error {}", max_abs / scale);
}

#[test]
fn adam_moves_against_the_gradient() {
    let mut ps = ParamStore::new();
    ps.insert("w", Tensor::new(vec![3], vec![1.0, -1.0, 0.0]).unwrap());
    let mut adam = Adam::new(AdamConfig { lr: 0.01, ..Default::default() });
    let grads = [("w".to_string(), Tensor::new(vec![3], vec![2.0, -3.0, 0.0]).unwrap())].into();
    adam.step(&mut ps, &grads);
    let w = ps.get("w").unwrap().data();
    assert!((w[0] - 0.99).abs() < 1e-6 && (w[1] + 0.99).abs() < 1e-6 && w[2] == 0.0, "{w:?}");
}

proptest! {
    #[test]
    fn attention_rows_are_distributions(seed in 0u64..500, t in 1usize..9, mask_bits in 0u32..512) {
        let mut r = rng(seed);
        let p = perturbed(&LayerParams::init(8, 2, &mut r).unwrap(), 0.5, seed + 1);
        let mut mask: Vec<bool> = (0..t).map(|i| mask_bits >> i & 1 == 1).collect();
        mask[0] = true;
        let (_, attn) = transformer_layer_forward(&p, &randn(&[t, 8], &mut r), Some(&mask)).unwrap();
        for a in attn {
            for i in 0..t {
                let row = a.row(i);
                prop_assert!(row.iter().all(|&w| w >= 0.0));
                prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
                for (j, &w) in row.iter().enumerate() {
                    if !mask[j] {
                        prop_assert_eq!(w, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn checkpoint_bytes_round_trip(shapes in prop::collection::vec(prop::collection::vec(1usize..5, 1..3), 1..6), seed in 0u64..100) {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        for (i, s) in shapes.iter().enumerate() {
            store.insert(format!("p{i}"), randn(s, &mut r));
        }
        let manifest = serde_json::json!({"note": "test"});
        let bytes = checkpoint::encode(&manifest, &store).unwrap();
        let (m, back) = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(m, manifest);
        prop_assert_eq!(back.fingerprint(), store.fingerprint());
        for (name, t) in store.iter() {
            prop_assert_eq!(back.get(name).unwrap(), t);
        }
    }
}
