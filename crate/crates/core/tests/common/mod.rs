#![allow(dead_code)]

use dplqr::densemath::Matrix;
use dplqr::loss::{check_loss, QuantileLevel};
use dplqr::network::NetworkParams;
use dplqr::rng::Rng;

/// Straightforward forward pass written independently of the library.
/// Returns the output and the smallest |pre-activation| of any hidden unit.
pub fn reference_forward(layers: &[Matrix], z: &[f64]) -> (f64, f64) {
    let mut h = z.to_vec();
    let mut closest_kink = f64::INFINITY;
    for (k, w) in layers.iter().enumerate() {
        let mut next = Vec::with_capacity(w.rows());
        for i in 0..w.rows() {
            let mut a = w[(i, w.cols() - 1)];
            for j in 0..h.len() {
                a += w[(i, j)] * h[j];
            }
            if k + 1 < layers.len() {
                closest_kink = closest_kink.min(a.abs());
                next.push(a.max(0.0));
            } else {
                next.push(a);
            }
        }
        h = next;
    }
    (h[0], closest_kink)
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped_near_kink: usize,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Compares `backward` against central differences with step `h` on random
/// networks with widths up to (4, 8, 8, 1).
pub fn gradient_check(nets: usize, h: f64, seed: u64) -> GradCheck {
    let mut rng = Rng::new(seed);
    let mut out = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped_near_kink: 0,
    };
    while out.checked < nets {
        let depth = 1 + rng.below(3);
        let mut widths = vec![1 + rng.below(4)];
        for _ in 1..depth {
            widths.push(1 + rng.below(8));
        }
        widths.push(1);
        let net = NetworkParams::init(&widths, &mut rng).unwrap();
        let z: Vec<f64> = (0..widths[0]).map(|_| rng.uniform_symmetric(2.0)).collect();
        let upstream = rng.uniform_symmetric(1.5);

        // Any perturbation of size h moves a pre-activation by at most
        // h * (1 + |z|_1 + ...); stay well clear of kinks.
        let (_, kink) = reference_forward(net.layers(), &z);
        if kink < 1e-3 {
            out.skipped_near_kink += 1;
            continue;
        }
        let grads = net.backward(&z, upstream).unwrap();
        for k in 0..net.layers().len() {
            for e in 0..net.layers()[k].as_slice().len() {
                let mut plus = net.layers().to_vec();
                let mut minus = net.layers().to_vec();
                plus[k].as_mut_slice()[e] += h;
                minus[k].as_mut_slice()[e] -= h;
                let fd = upstream
                    * (reference_forward(&plus, &z).0 - reference_forward(&minus, &z).0)
                    / (2.0 * h);
                let bp = grads.layers[k].as_slice()[e];
                out.max_rel_err = out.max_rel_err.max(rel_err(bp, fd));
            }
        }
        out.checked += 1;
    }
    out
}

/// Exact minimum of the mean check loss of `y - a - b x` over all `(a, b)`.
/// Some minimizer interpolates two observations, so enumerating lines
/// through pairs of points is exhaustive.
pub fn exact_lqr_min(x: &[f64], y: &[f64], tau: QuantileLevel) -> (f64, f64, f64) {
    let n = y.len();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (x[i] - x[j]).abs() < 1e-12 {
                continue;
            }
            let b = (y[i] - y[j]) / (x[i] - x[j]);
            let a = y[i] - b * x[i];
            let l = (0..n).map(|k| check_loss(y[k] - a - b * x[k], tau)).sum::<f64>() / n as f64;
            if l < best.0 {
                best = (l, a, b);
            }
        }
    }
    best
}

pub fn t3_reference_draw(rng: &mut Rng) -> f64 {
    let n = rng.std_normal();
    let chi: f64 = (0..3).map(|_| rng.std_normal().powi(2)).sum();
    n / (chi / 3.0).sqrt()
}

pub fn column(values: &[f64]) -> Matrix {
    Matrix::from_row_major(values.len(), 1, values.to_vec()).unwrap()
}

/// Full-batch Adam on the mean check loss of `y - a - b x`, keeping the best
/// iterate. Uses the library's loss and optimizer but no hold-out split.
pub fn adam_lqr(x: &[f64], y: &[f64], tau: QuantileLevel, steps: usize, lr: f64) -> (f64, f64, f64) {
    use dplqr::loss::loss_subgrad_wrt_pred;
    use dplqr::optim::AdamState;
    let n = y.len() as f64;
    let mut ab = [0.0, 0.0];
    let mut adam = AdamState::new(&[2]);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..steps {
        let mut g = [0.0, 0.0];
        let mut loss = 0.0;
        for (xi, yi) in x.iter().zip(y) {
            let r = yi - ab[0] - ab[1] * xi;
            loss += check_loss(r, tau) / n;
            let d = loss_subgrad_wrt_pred(r, tau) / n;
            g[0] += d;
            g[1] += d * xi;
        }
        if loss < best.0 {
            best = (loss, ab[0], ab[1]);
        }
        adam.step(&mut [&mut ab[..]], &[&g[..]], lr).unwrap();
    }
    best
}
