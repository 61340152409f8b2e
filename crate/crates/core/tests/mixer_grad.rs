//! Finite-difference validation of every mixer's reverse pass.
//!
//! For each block family the analytic gradients (input and every parameter
//! tensor) are checked against central differences with a 1e-5 step at
//! 1e-4 relative tolerance.

use mvh_core::mixers::{
    AttentionMixer, EinFftMixer, HydraMixer, MlpMixer, MvMixer, VimMixer, VisitParams,
};
use mvh_core::rng;
use mvh_core::Tensor3;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

// Denominator floor sits above the central-difference noise floor: losses
// are O(10), so FD values carry ~1e-9 absolute error at a 1e-5 step and
// gradients below 1e-4 are compared absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn random_tensor(batch: usize, tokens: usize, channels: usize, label: &str) -> Tensor3 {
    let mut r = rng::stream(97, label);
    Tensor3::from_vec(
        rng::normal_vec(&mut r, batch * tokens * channels),
        batch,
        tokens,
        channels,
    )
    .unwrap()
}

/// Check dL/dx and dL/dw for L = sum(forward(x) * dy).
fn check_gradients<M: VisitParams + Clone>(
    name: &str,
    mixer: &M,
    x: &Tensor3,
    forward: impl Fn(&M, &Tensor3) -> Tensor3,
    backward: impl Fn(&M, &Tensor3, &Tensor3) -> (Tensor3, M),
) {
    let dy = random_tensor(x.batch, x.tokens, x.channels, &format!("{name}-dy"));
    let loss = |m: &M, x: &Tensor3| -> f64 {
        forward(m, x)
            .data
            .iter()
            .zip(&dy.data)
            .map(|(y, g)| y * g)
            .sum()
    };

    let (dx, grads) = backward(mixer, x, &dy);

    // input gradient, every entry
    let mut max_err = 0.0f64;
    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] += FD_STEP;
        let up = loss(mixer, &xp);
        xp.data[i] -= 2.0 * FD_STEP;
        let fd = (up - loss(mixer, &xp)) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(dx.data[i], fd));
    }
    assert!(max_err < REL_TOL, "{name}: input gradient max rel err {max_err:.3e}");

    // parameter gradients, every tensor, every entry
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    grads.visit("w", &mut |tname, _, data| {
        analytic.push((tname.to_string(), data.to_vec()));
    });

    let mut tensor_idx = 0;
    let mut worst = (0.0f64, String::new());
    // collect tensor sizes first so we can perturb entries in place
    let mut sizes = Vec::new();
    mixer.visit("w", &mut |tname, _, data| {
        sizes.push((tname.to_string(), data.len()));
    });
    for (tname, len) in &sizes {
        for i in 0..*len {
            let mut plus = mixer.clone();
            let mut seen = 0;
            plus.visit_mut("w", &mut |_, _, data| {
                if seen == tensor_idx {
                    data[i] += FD_STEP;
                }
                seen += 1;
            });
            let up = loss(&plus, x);
            let mut minus = mixer.clone();
            let mut seen = 0;
            minus.visit_mut("w", &mut |_, _, data| {
                if seen == tensor_idx {
                    data[i] -= FD_STEP;
                }
                seen += 1;
            });
            let fd = (up - loss(&minus, x)) / (2.0 * FD_STEP);
            let an = analytic[tensor_idx].1[i];
            let err = rel_err(an, fd);
            if err > worst.0 {
                worst = (err, format!("{tname}[{i}] analytic {an:.6e} fd {fd:.6e}"));
            }
        }
        tensor_idx += 1;
    }
    assert!(
        worst.0 < REL_TOL,
        "{name}: parameter gradient max rel err {:.3e} at {}",
        worst.0,
        worst.1
    );
}

#[test]
fn mv_mixer_gradients() {
    let mut r = rng::stream(101, "grad-mv");
    let m = MvMixer::init(8, 4, 2, &mut r);
    let x = random_tensor(2, 16, 8, "grad-mv-x");
    check_gradients(
        "mv",
        &m,
        &x,
        |m, x| m.forward_cached(x).unwrap().0,
        |m, x, dy| {
            let (_, cache) = m.forward_cached(x).unwrap();
            m.backward(&cache, dy)
        },
    );
}

#[test]
fn vim_mixer_gradients() {
    let mut r = rng::stream(102, "grad-vim");
    let m = VimMixer::init(6, 2, 3, 2, &mut r);
    let x = random_tensor(2, 9, 6, "grad-vim-x");
    check_gradients(
        "vim",
        &m,
        &x,
        |m, x| m.forward_cached(x).unwrap().0,
        |m, x, dy| {
            let (_, cache) = m.forward_cached(x).unwrap();
            m.backward(&cache, dy)
        },
    );
}

#[test]
fn hydra_mixer_gradients() {
    let mut r = rng::stream(103, "grad-hydra");
    let m = HydraMixer::init(6, 2, 3, 2, &mut r);
    let x = random_tensor(2, 9, 6, "grad-hydra-x");
    check_gradients(
        "hydra",
        &m,
        &x,
        |m, x| m.forward_cached(x).unwrap().0,
        |m, x, dy| {
            let (_, cache) = m.forward_cached(x).unwrap();
            m.backward(&cache, dy)
        },
    );
}

#[test]
fn attention_mixer_gradients() {
    let mut r = rng::stream(104, "grad-attn");
    let m = AttentionMixer::init(8, 2, &mut r);
    let x = random_tensor(2, 9, 8, "grad-attn-x");
    check_gradients(
        "attention",
        &m,
        &x,
        |m, x| m.forward_cached(x).unwrap().0,
        |m, x, dy| {
            let (_, cache) = m.forward_cached(x).unwrap();
            m.backward(&cache, dy)
        },
    );
}

#[test]
fn einfft_mixer_gradients() {
    let mut r = rng::stream(105, "grad-einfft");
    let mut m = EinFftMixer::init(8, 2, &mut r);
    // small positive biases keep |z| + b away from the relu kink
    for b in m.bias.iter_mut() {
        *b = 0.05;
    }
    let x = random_tensor(2, 16, 8, "grad-einfft-x");
    check_gradients(
        "einfft",
        &m,
        &x,
        |m, x| m.forward_cached(x).unwrap().0,
        |m, x, dy| {
            let (_, cache) = m.forward_cached(x).unwrap();
            m.backward(&cache, dy)
        },
    );
}

#[test]
fn mlp_mixer_gradients() {
    let mut r = rng::stream(106, "grad-mlp");
    let m = MlpMixer::init(8, &mut r);
    let x = random_tensor(2, 4, 8, "grad-mlp-x");
    check_gradients(
        "mlp",
        &m,
        &x,
        |m, x| m.forward_cached(x).unwrap().0,
        |m, x, dy| {
            let (_, cache) = m.forward_cached(x).unwrap();
            m.backward(&cache, dy)
        },
    );
}
