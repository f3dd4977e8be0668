//! Checks of every differentiable op.

use scenegan::tensor::gradcheck::{check_inputs, default_tolerance, project, random_tensor, CheckOptions, GradReport};
use scenegan::tensor::ops::{self, CellKind, CellWeights, Normalization, Reduction, Window2d};
use scenegan::tensor::{Mode, Tensor};
use scenegan::Result;

fn assert_report(name: &str, r: GradReport) {
    let tol = default_tolerance();
    let worst = r.worst().cloned();
    assert!(
        r.max_rel_err() < tol,
        "{name}: max rel err {:.3e} ≥ {tol:.0e}, worst {worst:?}",
        r.max_rel_err()
    );
}

fn opts(seed: u64) -> CheckOptions {
    CheckOptions {
        seed,
        ..CheckOptions::default()
    }
}

pub fn conv2d_gradients() {
    let inputs = [
        random_tensor(&[2, 3, 6, 5], 1.0, 1),
        random_tensor(&[4, 3, 3, 3], 0.5, 2),
        random_tensor(&[4], 0.5, 3),
    ];
    for (i, win) in [Window2d::square(3, 1, 1), Window2d::square(3, 0, 2), Window2d::square(1, 0, 1)]
        .into_iter()
        .enumerate()
    {
        let mut inp = inputs.clone();
        if win.kernel == [1, 1] {
            inp[1] = random_tensor(&[4, 3, 1, 1], 0.5, 2);
        }
        let r = check_inputs(&inp, &opts(i as u64), |_, v| project(&ops::conv2d(&v[0], &v[1], &v[2], win)?, 9)).unwrap();
        assert_report("conv2d", r);
    }
}

pub fn conv1d_gradients() {
    let inputs = [
        random_tensor(&[2, 2, 12], 1.0, 4),
        random_tensor(&[3, 2, 3], 0.5, 5),
        random_tensor(&[3], 0.5, 6),
    ];
    let r = check_inputs(&inputs, &opts(1), |_, v| project(&ops::conv1d(&v[0], &v[1], &v[2], 1, 2)?, 3)).unwrap();
    assert_report("conv1d", r);
}

pub fn conv_transpose_gradients() {
    let inputs = [
        random_tensor(&[2, 3, 3, 4], 1.0, 7),
        random_tensor(&[3, 2, 4, 4], 0.5, 8),
        random_tensor(&[2], 0.5, 9),
    ];
    let win = Window2d::square(4, 1, 2);
    let r = check_inputs(&inputs, &opts(2), |_, v| project(&ops::conv_transpose2d(&v[0], &v[1], &v[2], win)?, 4)).unwrap();
    assert_report("conv_transpose2d", r);
}

pub fn maxpool_gradients() {
    // distinct, well separated values keep the argmax stable under perturbation
    let mut vals: Vec<f32> = (0..2 * 2 * 7 * 6).map(|i| (i as f32) * 0.1).collect();
    let mut state = 12345u64;
    for i in (1..vals.len()).rev() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        vals.swap(i, (state >> 33) as usize % (i + 1));
    }
    let x = Tensor::new(&[2, 2, 7, 6], vals.into_iter().map(|v| v as scenegan::tensor::Float).collect()).unwrap();
    for win in [Window2d::square(2, 0, 2), Window2d::square(2, 1, 2), Window2d::square(3, 1, 1)] {
        let r = check_inputs(&[x.clone()], &opts(3), |_, v| {
            project(&ops::maxpool2d(&v[0], win)?, 5)
        })
        .unwrap();
        assert_report("maxpool2d", r);
    }
}

pub fn batchnorm_gradients() {
    let inputs = [
        random_tensor(&[4, 3, 6], 1.0, 10),
        random_tensor(&[3], 1.0, 11).map(|v| v + 1.5),
        random_tensor(&[3], 1.0, 12),
    ];
    let r = check_inputs(&inputs, &opts(4), |_, v| {
        let (y, _) = ops::batchnorm(&v[0], &v[1], &v[2], Normalization::Batch)?;
        project(&y, 6)
    })
    .unwrap();
    assert_report("batchnorm(train)", r);

    let (m, var) = (random_tensor(&[3], 0.5, 13), random_tensor(&[3], 0.4, 14).map(|v| v + 1.0));
    let r = check_inputs(&inputs, &opts(5), |_, v| {
        let (y, _) = ops::batchnorm(&v[0], &v[1], &v[2], Normalization::Running { mean: &m, var: &var })?;
        project(&y, 7)
    })
    .unwrap();
    assert_report("batchnorm(eval)", r);
}

pub fn relu_gradients_away_from_zero() {
    let x = random_tensor(&[50], 1.0, 15).map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
    let r = check_inputs(&[x], &CheckOptions { step: 1e-3, ..opts(6) }, |_, v| project(&ops::relu(&v[0]), 8)).unwrap();
    assert_report("relu", r);
}

pub fn linear_gradients() {
    let inputs = [random_tensor(&[3, 5], 1.0, 16), random_tensor(&[5, 4], 0.5, 17), random_tensor(&[4], 0.5, 18)];
    let r = check_inputs(&inputs, &opts(7), |_, v| project(&ops::linear(&v[0], &v[1], &v[2])?, 9)).unwrap();
    assert_report("linear", r);
}

pub fn dropout_gradients_with_fixed_mask() {
    use rand::SeedableRng;
    let x = random_tensor(&[40], 1.0, 19);
    let r = check_inputs(&[x], &opts(8), |_, v| {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        project(&ops::dropout(&v[0], 0.3, Mode::Train, &mut rng)?, 10)
    })
    .unwrap();
    assert_report("dropout", r);
}

pub fn global_avg_pool_gradients() {
    let x = random_tensor(&[2, 3, 4, 5], 1.0, 20);
    let r = check_inputs(&[x], &opts(9), |_, v| project(&ops::global_avg_pool(&v[0])?, 11)).unwrap();
    assert_report("global_avg_pool", r);
}

pub fn softmax_xent_gradients() {
    let x = random_tensor(&[4, 10], 3.0, 21);
    let r = check_inputs(&[x], &opts(10), |_, v| Ok(ops::softmax_xent(&v[0], &[1, 0, 9, 4], Reduction::Mean)?.1)).unwrap();
    assert_report("softmax_xent", r);
}

pub fn elementwise_and_shape_op_gradients() {
    let a = random_tensor(&[3, 4], 1.0, 22);
    let b = random_tensor(&[3, 4], 1.0, 23).map(|v| v.abs() + 0.5);
    let w = random_tensor(&[4], 1.0, 24);
    let f = |_: &scenegan::tensor::Tape, v: &[scenegan::tensor::Var]| -> Result<scenegan::tensor::Var> {
        let s = ops::add(&ops::mul(&v[0], &ops::log(&v[1]))?, &ops::tanh(&v[0]))?;
        let s = ops::add(&s, &ops::sigmoid(&ops::exp(&ops::scale(&v[1], 0.3))))?;
        let s = ops::add(&s, &ops::softplus(&ops::sub(&v[0], &v[1])?))?;
        let s = ops::mul_trailing(&ops::add_trailing(&s, &v[2])?, &v[2])?;
        let p = ops::permute(&ops::reshape(&s, &[3, 2, 2])?, &[2, 0, 1])?;
        let c = ops::concat(&[&p, &ops::narrow(&p, 1, 1, 2)?], 1)?;
        let r = ops::repeat_rows(&ops::sum_axis(&c, 2)?, 2)?;
        Ok(ops::add(&project(&r, 12)?, &ops::mean(&ops::square(&v[0])))?)
    };
    let r = check_inputs(&[a, b, w], &opts(11), f).unwrap();
    assert_report("elementwise", r);
}

pub fn dct_gradients() {
    let x = random_tensor(&[2, 9, 3], 1.0, 25);
    let r = check_inputs(&[x.clone()], &opts(12), |_, v| project(&ops::dct1d(&v[0], 1)?, 13)).unwrap();
    assert_report("dct", r);
    let r = check_inputs(&[x], &opts(13), |_, v| project(&ops::idct1d(&v[0], 1)?, 14)).unwrap();
    assert_report("idct", r);
}

fn recurrent_inputs(kind: CellKind, seed: u64) -> Vec<Tensor> {
    let (d, h) = (3, 4);
    let g = kind.gates() * h;
    vec![
        random_tensor(&[2, 5, d], 1.0, seed),
        random_tensor(&[d, g], 0.5, seed + 1),
        random_tensor(&[h, g], 0.5, seed + 2),
        random_tensor(&[g], 0.5, seed + 3),
        random_tensor(&[g], 0.5, seed + 4),
    ]
}

pub fn recurrent_gradients() {
    for kind in [CellKind::Lstm, CellKind::Gru] {
        let r = check_inputs(&recurrent_inputs(kind, 30), &opts(14), |_, v| {
            let w = CellWeights { w_ih: v[1].clone(), w_hh: v[2].clone(), b_ih: v[3].clone(), b_hh: v[4].clone() };
            let out = ops::recurrent_layer(kind, &v[0], &w)?;
            project(&out.sequence, 15)
        })
        .unwrap();
        assert_report("recurrent", r);
    }
}

pub fn grad_reverse_scales_exactly() {
    let x = random_tensor(&[6], 1.0, 40);
    let tape = scenegan::tensor::Tape::new();
    let v = tape.leaf(x.clone(), true);
    let y = ops::grad_reverse(&v, 0.5);
    assert_eq!(y.value().data(), x.data());
    let up = random_tensor(&[6], 1.0, 41);
    ops::sum(&ops::mul(&y, &tape.constant(up.clone())).unwrap()).backward().unwrap();
    let g = v.grad().unwrap();
    for (a, b) in g.data().iter().zip(up.data()) {
        assert_eq!(*a, -0.5 * b);
    }
}

pub fn remaining_op_gradients() {
    let a = random_tensor(&[4, 6], 1.0, 50);
    let b = random_tensor(&[6, 3], 1.0, 51);
    let f = |_: &scenegan::tensor::Tape, v: &[scenegan::tensor::Var]| -> Result<scenegan::tensor::Var> {
        // clamp bounds sit outside the data range; kinks are screened by the checker anyway
        let s = ops::add_scalar(&ops::clamp(&v[0], -5.0, 5.0), 0.25);
        let m = ops::matmul(&s, &v[1])?;
        let pooled = ops::maxpool1d(&ops::reshape(&m, &[2, 2, 3])?, 2, 1, 1)?;
        let p = project(&ops::flatten(&pooled)?, 16)?;
        let q = project(&ops::mean_axis(&m, 0)?, 17)?;
        ops::add(&p, &q)
    };
    let r = check_inputs(&[a, b], &opts(15), f).unwrap();
    assert_report("matmul/clamp/maxpool1d/mean_axis", r);
}
