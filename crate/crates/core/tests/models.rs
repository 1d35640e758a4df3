mod common;

use common::{dense_laplacian, random_knn, random_perm, rng, uniform};
use hypernet::autodiff::{Tape, Var};
use hypernet::data::{Modality, MultiModalDataset};
use hypernet::hypergraph::{build_knn_hypergraph, Hypergraph};
use hypernet::models::{
    hgnn_conv_forward, init_params, res_conv_forward, BranchInput, ConvParams, ConvVars, Family,
    Model, ModelConfig, ModelParams, ResSchedule,
};
use hypernet::{Error, Matrix};
use rand::Rng;

/// Triple-loop product, independent of the gemm backend.
fn naive_mm(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

fn plus_row(m: &Matrix, row: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + row.get(0, j))
}

fn relu(m: &Matrix) -> Matrix {
    m.map(|v| v.max(0.0))
}

fn conv_vars(tape: &mut Tape, p: &ConvParams) -> ConvVars {
    ConvVars {
        weight: tape.param(p.weight.clone()),
        bias: p.bias.as_ref().map(|b| tape.param(b.clone())),
    }
}

fn run_conv(x: &Matrix, lap: &Matrix, p: &ConvParams, activate: bool) -> Result<Matrix, Error> {
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let lv = t.constant(lap.clone());
    let pv = conv_vars(&mut t, p);
    let out = hgnn_conv_forward(&mut t, xv, lv, pv, activate)?;
    Ok(t.value(out).clone())
}

#[allow(clippy::too_many_arguments)]
fn run_res(
    x: &Matrix,
    x0: &Matrix,
    lap: &Matrix,
    p: &ConvParams,
    alpha: f64,
    beta: f64,
    activate: bool,
) -> Result<Matrix, Error> {
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let x0v = t.constant(x0.clone());
    let lv = t.constant(lap.clone());
    let pv = conv_vars(&mut t, p);
    let out = res_conv_forward(&mut t, xv, x0v, lv, pv, alpha, beta, activate)?;
    Ok(t.value(out).clone())
}

fn random_conv(d_in: usize, d_out: usize, r: &mut rand_chacha::ChaCha8Rng) -> ConvParams {
    ConvParams {
        weight: uniform(d_in, d_out, r),
        bias: Some(uniform(1, d_out, r)),
    }
}

#[test]
fn hgnn_conv_identity_cases() {
    let x = Matrix::from_rows(&[[0.5, 2.0], [1.0, 0.0], [3.0, 0.25]]).unwrap();
    let p = ConvParams {
        weight: Matrix::identity(2),
        bias: None,
    };
    let out = run_conv(&x, &Matrix::identity(3), &p, true).unwrap();
    assert_eq!(out, x);

    let single = Hypergraph::new(1, vec![vec![0]]).unwrap();
    let lap = single.laplacian().matrix().clone();
    let out = run_conv(&Matrix::from_rows(&[[-2.0, 3.0]]).unwrap(), &lap, &p, true).unwrap();
    assert_eq!(out, Matrix::from_rows(&[[0.0, 3.0]]).unwrap());
}

#[test]
fn hgnn_conv_matches_dense_composition() {
    let mut r = rng(11);
    for (d_in, d_out) in [(4, 3), (3, 5), (4, 4)] {
        let g = random_knn(6, 2, 3, &mut r);
        let lap = dense_laplacian(&g);
        let x = uniform(6, d_in, &mut r);
        let p = random_conv(d_in, d_out, &mut r);
        for activate in [false, true] {
            let got = run_conv(&x, g.laplacian().matrix(), &p, activate).unwrap();
            let mut want = plus_row(&naive_mm(&naive_mm(&lap, &x), &p.weight), p.bias.as_ref().unwrap());
            if activate {
                want = relu(&want);
            }
            assert!(got.max_abs_diff(&want) <= 1e-12, "{}", got.max_abs_diff(&want));
        }
    }
}

#[test]
fn hgnn_conv_shape_errors() {
    let p = ConvParams::init(3, 2, &mut rng(0));
    let err = run_conv(&Matrix::zeros(4, 2), &Matrix::identity(4), &p, true).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }), "{err}");
    let err = run_conv(&Matrix::zeros(4, 3), &Matrix::identity(5), &p, true).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }), "{err}");
}

#[test]
fn res_conv_reduces_to_hgnn_conv() {
    let mut r = rng(12);
    for _ in 0..100 {
        let n = r.random_range(3..12);
        let d = r.random_range(1..6);
        let k = r.random_range(1..n.min(5));
        let g = random_knn(n, k, 2, &mut r);
        let lap = g.laplacian().matrix();
        let x = uniform(n, d, &mut r);
        let x0 = uniform(n, d, &mut r);
        let p = random_conv(d, d, &mut r);
        let res = run_res(&x, &x0, lap, &p, 0.0, 1.0, true).unwrap();
        let plain = run_conv(&x, lap, &p, true).unwrap();
        assert!(res.max_abs_diff(&plain) <= 1e-12);
    }
}

#[test]
fn res_conv_full_residual_is_relu_of_x0() {
    let mut r = rng(13);
    let g = random_knn(7, 2, 2, &mut r);
    let x0 = uniform(7, 3, &mut r);
    let p = random_conv(3, 3, &mut r);
    let a = run_res(&uniform(7, 3, &mut r), &x0, g.laplacian().matrix(), &p, 1.0, 0.0, true).unwrap();
    let b = run_res(&uniform(7, 3, &mut r), &x0, &Matrix::identity(7), &random_conv(3, 3, &mut r), 1.0, 0.0, true).unwrap();
    assert_eq!(a, relu(&x0));
    assert_eq!(b, relu(&x0));
}

#[test]
fn res_conv_matches_dense_composition() {
    let mut r = rng(14);
    let (alpha, beta) = (0.1, 0.5);
    for _ in 0..10 {
        let g = random_knn(5, 2, 2, &mut r);
        let lap = dense_laplacian(&g);
        let x = uniform(5, 4, &mut r);
        let x0 = uniform(5, 4, &mut r);
        let p = random_conv(4, 4, &mut r);
        let s = naive_mm(&lap, &x).add_scaled(&x0, 1.0 - alpha, alpha).unwrap();
        let mix = Matrix::identity(4).add_scaled(&p.weight, 1.0 - beta, beta).unwrap();
        let bias = p.bias.as_ref().unwrap().scale(beta);
        let want = relu(&plus_row(&naive_mm(&s, &mix), &bias));
        let got = run_res(&x, &x0, g.laplacian().matrix(), &p, alpha, beta, true).unwrap();
        assert!(got.max_abs_diff(&want) <= 1e-12, "{}", got.max_abs_diff(&want));
    }
}

#[test]
fn res_conv_errors() {
    let mut r = rng(15);
    let x = uniform(4, 3, &mut r);
    let lap = Matrix::identity(4);
    let err = run_res(&x, &x, &lap, &random_conv(3, 2, &mut r), 0.1, 0.5, true).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }), "{err}");
    let p = random_conv(3, 3, &mut r);
    for (a, b) in [(-0.1, 0.5), (1.1, 0.5), (0.1, -1e-9), (0.1, 2.0), (f64::NAN, 0.5)] {
        let err = run_res(&x, &x, &lap, &p, a, b, true).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)), "{err}");
    }
}

fn dataset(mods: Vec<Matrix>, n_classes: usize, k: usize) -> MultiModalDataset {
    let n = mods[0].rows();
    let modalities = mods
        .into_iter()
        .enumerate()
        .map(|(i, features)| Modality {
            id: format!("m{i}"),
            hypergraph: build_knn_hypergraph(&features, k).unwrap(),
            features,
        })
        .collect();
    let train_mask: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    MultiModalDataset {
        name: "test".into(),
        modalities,
        labels: (0..n).map(|i| i % n_classes).collect(),
        test_mask: train_mask.iter().map(|t| !t).collect(),
        train_mask,
        n_classes,
        knn_k: k,
    }
}

fn eval_cfg(family: Family, depth: usize, hidden: usize, c: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(family, depth, c);
    cfg.hidden = hidden;
    cfg.dropout = 0.0;
    cfg
}

#[test]
fn multihgnn_of_identical_modalities_equals_hgnn() {
    let mut r = rng(16);
    for _ in 0..20 {
        let feats = uniform(9, 3, &mut r);
        let m = r.random_range(1..4);
        let single = dataset(vec![feats.clone()], 3, 3);
        let multi = dataset(vec![feats; m], 3, 3);

        let hgnn = Model::new(eval_cfg(Family::Hgnn, 3, 5, 3), &single).unwrap();
        let params = hgnn.init_params(&mut r).unwrap();
        let shared = ModelParams {
            branches: vec![params.branches[0].clone(); m],
        };
        let fused = Model::new(eval_cfg(Family::MultiHgnn, 3, 5, 3), &multi).unwrap();
        let a = hgnn.logits(&params).unwrap();
        let b = fused.logits(&shared).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12);
    }
}

#[test]
fn reshgnn_without_residual_is_a_wrapped_hgnn_stack() {
    let mut r = rng(17);
    for _ in 0..10 {
        let ds = dataset(vec![uniform(8, 4, &mut r)], 3, 2);
        let mut cfg = eval_cfg(Family::ResHgnn, 4, 5, 3);
        cfg.res_schedule = Some(ResSchedule::constant(0.0, 1.0));
        let model = Model::new(cfg, &ds).unwrap();
        let mut params = model.init_params(&mut r).unwrap();
        for m in params.tensors_mut() {
            *m = uniform(m.rows(), m.cols(), &mut r);
        }
        let got = model.logits(&params).unwrap();

        let b = &params.branches[0];
        let lap = ds.modalities[0].hypergraph.laplacian().matrix();
        let lin = |x: &Matrix, p: &ConvParams| plus_row(&naive_mm(x, &p.weight), p.bias.as_ref().unwrap());
        let mut h = relu(&lin(&ds.modalities[0].features, b.input.as_ref().unwrap()));
        for conv in &b.convs {
            h = run_conv(&h, lap, conv, true).unwrap();
        }
        let want = lin(&h, b.output.as_ref().unwrap());
        assert!(got.max_abs_diff(&want) <= 1e-12);
    }
}

#[test]
fn depth_two_hgnn_matches_scripted_evaluation() {
    let g = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2], vec![0, 1, 2]]).unwrap();
    let x = Matrix::from_rows(&[[1.0, 0.0], [0.5, -1.0], [-0.25, 2.0]]).unwrap();
    let cfg = eval_cfg(Family::Hgnn, 2, 4, 2);
    let model = Model::from_inputs(
        cfg.clone(),
        vec![BranchInput {
            features: x.clone(),
            laplacian: g.laplacian().matrix().clone(),
        }],
    )
    .unwrap();
    let params = init_params(&cfg, &[2], &mut rng(0)).unwrap();
    let got = model.logits(&params).unwrap();

    let l = dense_laplacian(&g);
    let [c1, c2] = [&params.branches[0].convs[0], &params.branches[0].convs[1]];
    let h1 = relu(&plus_row(&naive_mm(&naive_mm(&l, &x), &c1.weight), c1.bias.as_ref().unwrap()));
    let want = plus_row(&naive_mm(&naive_mm(&l, &h1), &c2.weight), c2.bias.as_ref().unwrap());
    assert_eq!(got.shape(), (3, 2));
    assert!(got.max_abs_diff(&want) <= 1e-12);
}

#[test]
fn init_is_deterministic_and_bounded() {
    for family in Family::ALL {
        let cfg = eval_cfg(family, 3, 6, 4);
        let a = init_params(&cfg, &[5, 7], &mut rng(3)).unwrap();
        let b = init_params(&cfg, &[5, 7], &mut rng(3)).unwrap();
        assert_eq!(a, b);
        for layer in a.branches.iter().flat_map(|b| b.input.iter().chain(&b.convs).chain(b.output.iter())) {
            let s = (6.0 / (layer.d_in() + layer.d_out()) as f64).sqrt();
            assert!(layer.weight.data().iter().all(|v| v.abs() <= s));
            assert!(layer.bias.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn init_mean_is_centred() {
    let p = ConvParams::init(100, 100, &mut rng(4));
    let s = (6.0f64 / 200.0).sqrt();
    let n = p.weight.len() as f64;
    let mean = p.weight.sum() / n;
    let se = s / 3f64.sqrt() / n.sqrt();
    assert!(mean.abs() <= 3.0 * se, "mean {mean} se {se}");
}

fn residual_layer_norms(depth: usize, seed: u64) -> (f64, Vec<f64>) {
    let mut r = rng(seed);
    let x = uniform(40, 6, &mut r);
    let g = build_knn_hypergraph(&x, 4).unwrap();
    let cfg = eval_cfg(Family::ResHgnn, depth, 16, 3);
    let params = init_params(&cfg, &[6], &mut r).unwrap();
    let b = &params.branches[0];
    let schedule = ResSchedule::default();

    let mut t = Tape::new();
    let xv = t.constant(x);
    let lap = t.constant(g.laplacian().matrix().clone());
    let pin = conv_vars(&mut t, b.input.as_ref().unwrap());
    let h0 = t.matmul(xv, pin.weight).unwrap();
    let h0 = t.add_row(h0, pin.bias.unwrap()).unwrap();
    let x0: Var = t.relu(h0);
    let mut h = x0;
    let mut norms = Vec::new();
    for (i, conv) in b.convs.iter().enumerate() {
        let p = conv_vars(&mut t, conv);
        let l = i + 1;
        h = res_conv_forward(&mut t, h, x0, lap, p, schedule.alpha(l), schedule.beta(l), true).unwrap();
        norms.push(t.value(h).frobenius_norm());
    }
    (t.value(x0).frobenius_norm(), norms)
}

#[test]
fn deep_residual_activations_stay_bounded() {
    for seed in 0..3 {
        let (x0_norm, norms) = residual_layer_norms(32, seed);
        let bound = 5.0 * (x0_norm + 1.0);
        assert!(norms.iter().all(|&v| v.is_finite() && v <= bound), "{norms:?} vs {bound}");
        // the initial residual keeps a floor under every layer
        assert!(norms.iter().all(|&v| v >= 0.01 * x0_norm), "{norms:?}");
        // doubling the depth does not move the bound
        let (x0_64, norms_64) = residual_layer_norms(64, seed);
        assert!(norms_64.iter().all(|&v| v <= 5.0 * (x0_64 + 1.0)));
    }
}

#[test]
fn logits_permute_with_vertices() {
    let mut r = rng(18);
    for family in Family::ALL {
        let ds = dataset(vec![uniform(10, 3, &mut r), uniform(10, 2, &mut r)], 3, 3);
        let perm = random_perm(10, &mut r);
        let permuted = MultiModalDataset {
            modalities: ds
                .modalities
                .iter()
                .map(|m| Modality {
                    id: m.id.clone(),
                    features: m.features.select_rows(&perm),
                    hypergraph: m.hypergraph.permuted(&perm).unwrap(),
                })
                .collect(),
            labels: perm.iter().map(|&i| ds.labels[i]).collect(),
            train_mask: perm.iter().map(|&i| ds.train_mask[i]).collect(),
            test_mask: perm.iter().map(|&i| ds.test_mask[i]).collect(),
            ..ds.clone()
        };
        let cfg = eval_cfg(family, 3, 5, 3);
        let model = Model::new(cfg.clone(), &ds).unwrap();
        let params = model.init_params(&mut r).unwrap();
        let a = model.logits(&params).unwrap();
        let b = Model::new(cfg, &permuted).unwrap().logits(&params).unwrap();
        assert!(a.select_rows(&perm).max_abs_diff(&b) <= 1e-12, "{family}");
    }
}

#[test]
fn config_validation() {
    let bad = [
        ModelConfig::new(Family::Hgnn, 0, 3),
        ModelConfig::new(Family::ResHgnn, 1, 3),
        ModelConfig { dropout: 1.0, ..ModelConfig::new(Family::Hgnn, 2, 3) },
        ModelConfig { res_schedule: Some(ResSchedule::default()), ..ModelConfig::new(Family::Hgnn, 2, 3) },
        ModelConfig { res_schedule: Some(ResSchedule::constant(1.5, 0.5)), ..ModelConfig::new(Family::ResHgnn, 2, 3) },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))), "{cfg:?}");
    }
    assert!(matches!("gcn".parse::<Family>(), Err(Error::Parameter(_))));
    assert_eq!("ResMultiHGNN".parse::<Family>().unwrap(), Family::ResMultiHgnn);
}
