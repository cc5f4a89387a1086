mod common;

use dplqr::densemath::{dot, Matrix};
use dplqr::loss::{check_loss, loss_subgrad_wrt_pred, QuantileLevel};
use dplqr::network::NetworkParams;
use dplqr::rng::Rng;

use common::{gradient_check, reference_forward};

#[test]
fn backward_matches_central_differences() {
    let r = gradient_check(100, 1e-5, 2024);
    assert_eq!(r.checked, 100);
    assert!(r.max_rel_err < 1e-5, "max relative error {}", r.max_rel_err);
}

#[test]
fn forward_matches_reference() {
    let mut rng = Rng::new(9);
    for _ in 0..200 {
        let net = NetworkParams::init(&[3, 7, 5, 1], &mut rng).unwrap();
        let z: Vec<f64> = (0..3).map(|_| rng.uniform_symmetric(3.0)).collect();
        let (expected, _) = reference_forward(net.layers(), &z);
        assert!((net.forward(&z).unwrap() - expected).abs() < 1e-12);
    }
}

// Full objective: mean check loss over a batch, differentiated with respect
// to theta and the network together, as used inside training.
#[test]
fn joint_objective_gradient() {
    let mut rng = Rng::new(31);
    let tau = QuantileLevel::new(0.3).unwrap();
    let n = 20;
    let x = Matrix::from_row_major(n, 2, (0..2 * n).map(|_| rng.std_normal()).collect()).unwrap();
    let z = Matrix::from_row_major(n, 3, (0..3 * n).map(|_| rng.uniform01()).collect()).unwrap();
    let y: Vec<f64> = (0..n).map(|_| 3.0 * rng.std_normal()).collect();
    let net = NetworkParams::init(&[3, 6, 1], &mut rng).unwrap();
    let theta = vec![0.4, -0.2];

    let objective = |theta: &[f64], layers: &[Matrix]| -> f64 {
        (0..n)
            .map(|i| check_loss(y[i] - dot(x.row(i), theta) - reference_forward(layers, z.row(i)).0, tau))
            .sum::<f64>()
            / n as f64
    };

    let mut g_theta = [0.0; 2];
    let mut g_layers: Vec<Vec<f64>> = net.layers().iter().map(|l| vec![0.0; l.as_slice().len()]).collect();
    for i in 0..n {
        let r = y[i] - dot(x.row(i), &theta) - net.forward(z.row(i)).unwrap();
        assert!(r.abs() > 1e-4, "residual too close to the check-loss kink");
        let g = loss_subgrad_wrt_pred(r, tau) / n as f64;
        for k in 0..2 {
            g_theta[k] += g * x[(i, k)];
        }
        let b = net.backward(z.row(i), g).unwrap();
        for (acc, l) in g_layers.iter_mut().zip(&b.layers) {
            for (a, v) in acc.iter_mut().zip(l.as_slice()) {
                *a += v;
            }
        }
    }

    let h = 1e-6;
    for k in 0..2 {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[k] += h;
        tm[k] -= h;
        let fd = (objective(&tp, net.layers()) - objective(&tm, net.layers())) / (2.0 * h);
        assert!((fd - g_theta[k]).abs() < 1e-6, "theta[{k}]: {fd} vs {}", g_theta[k]);
    }
    for (k, gl) in g_layers.iter().enumerate() {
        for (e, &g) in gl.iter().enumerate() {
            let mut plus = net.layers().to_vec();
            let mut minus = net.layers().to_vec();
            plus[k].as_mut_slice()[e] += h;
            minus[k].as_mut_slice()[e] -= h;
            let fd = (objective(&theta, &plus) - objective(&theta, &minus)) / (2.0 * h);
            assert!((fd - g).abs() < 1e-6, "layer {k} entry {e}: {fd} vs {g}");
        }
    }
}
