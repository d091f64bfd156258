//! Finite-difference verification of every backward pass, separately and
//! composed end to end (extractor -> harmonizer -> exp transform ->
//! composer, MSE plus penalty).

use incode_core::conditioning::{
    ConvSignalExtractor, HarmonizerNetwork, HarmonizerProfile, LatentExtractor,
};
use incode_core::mat::Mat;
use incode_core::nn::{ActivationParams, ComposerNetwork};
use incode_core::training::{
    constraint_penalty, flatten_grads, mse_loss, Conditioning, LossConfig, ModelBundle,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central finite differences of `f` at `flat`, one parameter at a time.
fn finite_diff(flat: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grads = Vec::with_capacity(flat.len());
    let mut work = flat.to_vec();
    for i in 0..flat.len() {
        let orig = work[i];
        work[i] = orig + FD_STEP;
        let hi = f(&work);
        work[i] = orig - FD_STEP;
        let lo = f(&work);
        work[i] = orig;
        grads.push((hi - lo) / (2.0 * FD_STEP));
    }
    grads
}

fn assert_grads_match(analytic: &[f64], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0;
    let mut worst_i = 0;
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(a, n);
        if e > worst {
            worst = e;
            worst_i = i;
        }
    }
    assert!(
        worst < FD_TOL,
        "{what}: worst rel err {worst} at index {worst_i} \
         (analytic {}, numeric {})",
        analytic[worst_i],
        numeric[worst_i]
    );
}

/// Loss and analytic gradient of the full objective for the current bundle
/// parameters, assembled exactly the way the training step does it.
fn objective_and_grad(
    bundle: &ModelBundle,
    coords: &Mat,
    targets: &Mat,
    signal: Option<&[f64]>,
    loss_cfg: &LossConfig,
) -> (f64, Vec<f64>) {
    let cf = bundle.conditioning_forward(signal, None).unwrap();
    let trace = bundle.composer.forward(coords, &cf.params).unwrap();
    let (data_loss, out_grad) = mse_loss(&trace.output, targets).unwrap();
    let eff = cf.params.effective();
    let (penalty, pen_grads) = constraint_penalty(&eff, loss_cfg);
    let grads = bundle
        .composer
        .backward(&trace, &cf.params, &out_grad, false)
        .unwrap();
    let jac = cf.params.raw_jacobian();
    let mut raw = grads.raw_params;
    for i in 0..4 {
        raw[i] += pen_grads[i] * jac[i];
    }
    let (hg, cg) = bundle.conditioning_backward(&cf, raw).unwrap();
    (
        data_loss + penalty,
        flatten_grads(&grads, hg.as_ref(), cg.as_ref()),
    )
}

fn objective_at(
    bundle: &ModelBundle,
    flat: &[f64],
    coords: &Mat,
    targets: &Mat,
    signal: Option<&[f64]>,
    loss_cfg: &LossConfig,
) -> f64 {
    let mut probe = bundle.clone();
    probe.scatter_params(flat);
    let params = probe.activation_params(signal).unwrap();
    let out = probe.composer.eval(coords, &params).unwrap();
    let (data_loss, _) = mse_loss(&out, targets).unwrap();
    let (penalty, _) = constraint_penalty(&params.effective(), loss_cfg);
    data_loss + penalty
}

fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

#[test]
fn composer_gradients_match_finite_differences() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_dim = rng.gen_range(1..=3);
        let depth = rng.gen_range(2..=3);
        let width = rng.gen_range(4..=8);
        let batch = rng.gen_range(3..=16);
        let composer =
            ComposerNetwork::new(input_dim, 2, depth, width, 30.0, 30.0, &mut rng).unwrap();
        let raw = [
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        ];
        let bundle = ModelBundle::new(
            composer,
            Conditioning::Frozen(ActivationParams::from_raw(raw)),
        )
        .unwrap();
        let coords = random_mat(&mut rng, input_dim, batch, -1.0, 1.0);
        let targets = random_mat(&mut rng, 2, batch, -0.5, 0.5);
        let cfg = LossConfig::default();

        let (_, analytic) = objective_and_grad(&bundle, &coords, &targets, None, &cfg);
        let flat = bundle.flatten_params();
        let numeric = finite_diff(&flat, |p| {
            objective_at(&bundle, p, &coords, &targets, None, &cfg)
        });
        assert_grads_match(&analytic, &numeric, &format!("composer seed {seed}"));
    }
}

#[test]
fn raw_parameter_gradients_match_finite_differences() {
    // Perturb the frozen raw quadruple directly; this isolates the shared
    // parameter path including the exp transform and the penalty.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let composer = ComposerNetwork::new(2, 1, 3, 6, 30.0, 30.0, &mut rng).unwrap();
    let coords = random_mat(&mut rng, 2, 12, -1.0, 1.0);
    let targets = random_mat(&mut rng, 1, 12, -0.5, 0.5);
    let cfg = LossConfig::default();
    // Raw values chosen so some penalty terms are active (negative raw a
    // means effective a < 1).
    let raw0 = [-0.2, 0.15, -0.4, 0.1];

    let objective = |raw: [f64; 4]| -> f64 {
        let params = ActivationParams::from_raw(raw);
        let out = composer.eval(&coords, &params).unwrap();
        let (data_loss, _) = mse_loss(&out, &targets).unwrap();
        let (penalty, _) = constraint_penalty(&params.effective(), &cfg);
        data_loss + penalty
    };

    let params = ActivationParams::from_raw(raw0);
    let trace = composer.forward(&coords, &params).unwrap();
    let (_, out_grad) = mse_loss(&trace.output, &targets).unwrap();
    let grads = composer
        .backward(&trace, &params, &out_grad, false)
        .unwrap();
    let (_, pen_grads) = constraint_penalty(&params.effective(), &cfg);
    let jac = params.raw_jacobian();
    let analytic: Vec<f64> = (0..4)
        .map(|i| grads.raw_params[i] + pen_grads[i] * jac[i])
        .collect();

    let mut numeric = Vec::new();
    for i in 0..4 {
        let mut hi = raw0;
        hi[i] += FD_STEP;
        let mut lo = raw0;
        lo[i] -= FD_STEP;
        numeric.push((objective(hi) - objective(lo)) / (2.0 * FD_STEP));
    }
    assert_grads_match(&analytic, &numeric, "raw params");
}

#[test]
fn harmonizer_gradients_match_finite_differences() {
    for (profile, bias) in [
        (HarmonizerProfile::Image, 0.31),
        (HarmonizerProfile::Denoise, 0.0005),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = HarmonizerNetwork::with_dims(
            6,
            profile.dims().to_vec().as_slice(),
            profile.normalized(),
        )
        .unwrap();
        // Small custom dims keep the finite differences cheap.
        let mut small = HarmonizerNetwork::with_dims(6, &[5, 4], profile.normalized()).unwrap();
        small.init(bias, &mut rng);
        net.init(bias, &mut rng);
        let latent: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out_grad = [0.7, -0.3, 0.2, 1.1];

        // Scalar objective: dot(output, out_grad).
        let flat_of = |n: &HarmonizerNetwork| -> Vec<f64> {
            let mut v = Vec::new();
            for layer in n.layers() {
                v.extend_from_slice(layer.dense.weights.as_slice());
                v.extend_from_slice(&layer.dense.bias);
                if let Some(norm) = &layer.norm {
                    v.extend_from_slice(&norm.gamma);
                    v.extend_from_slice(&norm.beta);
                }
            }
            v
        };
        let scatter_to = |n: &mut HarmonizerNetwork, flat: &[f64]| {
            let mut pos = 0;
            for layer in n.layers_mut() {
                let nw = layer.dense.weights.rows() * layer.dense.weights.cols();
                layer
                    .dense
                    .weights
                    .as_mut_slice()
                    .copy_from_slice(&flat[pos..pos + nw]);
                pos += nw;
                let nb = layer.dense.bias.len();
                layer.dense.bias.copy_from_slice(&flat[pos..pos + nb]);
                pos += nb;
                if let Some(norm) = &mut layer.norm {
                    let ng = norm.gamma.len();
                    norm.gamma.copy_from_slice(&flat[pos..pos + ng]);
                    pos += ng;
                    norm.beta.copy_from_slice(&flat[pos..pos + ng]);
                    pos += ng;
                }
            }
        };

        let (_, trace) = small.forward(&latent).unwrap();
        let grads = small.backward(&trace, out_grad).unwrap();
        let mut analytic = Vec::new();
        for lg in &grads.layers {
            analytic.extend_from_slice(lg.weights.as_slice());
            analytic.extend_from_slice(&lg.bias);
            if let Some(g) = &lg.gamma {
                analytic.extend_from_slice(g);
                analytic.extend_from_slice(lg.beta.as_ref().unwrap());
            }
        }

        let flat = flat_of(&small);
        let numeric = finite_diff(&flat, |p| {
            let mut probe = small.clone();
            scatter_to(&mut probe, p);
            let (quad, _) = probe.forward(&latent).unwrap();
            quad.iter().zip(&out_grad).map(|(&q, &g)| q * g).sum()
        });
        assert_grads_match(&analytic, &numeric, &format!("harmonizer {profile:?}"));

        // Latent gradient too.
        let numeric_latent = finite_diff(&latent, |z| {
            let (quad, _) = small.forward(z).unwrap();
            quad.iter().zip(&out_grad).map(|(&q, &g)| q * g).sum()
        });
        assert_grads_match(&grads.input, &numeric_latent, "harmonizer latent");
    }
}

#[test]
fn conv_extractor_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ex = ConvSignalExtractor::new([3, 4, 5], &mut rng);
    let signal: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out_grad: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (latent, trace) = ex.forward(&signal).unwrap();
    assert_eq!(latent.len(), 5);
    let grads = ex.backward(&trace, &out_grad).unwrap();
    let mut analytic = Vec::new();
    for g in &grads.layers {
        analytic.extend_from_slice(&g.weights);
        analytic.extend_from_slice(&g.bias);
    }

    let mut flat = Vec::new();
    for layer in [&ex.conv1, &ex.conv2, &ex.conv3] {
        flat.extend_from_slice(&layer.weights);
        flat.extend_from_slice(&layer.bias);
    }
    let numeric = finite_diff(&flat, |p| {
        let mut probe = ex.clone();
        let mut pos = 0;
        for layer in [&mut probe.conv1, &mut probe.conv2, &mut probe.conv3] {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&p[pos..pos + nw]);
            pos += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&p[pos..pos + nb]);
            pos += nb;
        }
        let lat = probe.extract(&signal).unwrap();
        lat.iter().zip(&out_grad).map(|(&l, &g)| l * g).sum()
    });
    assert_grads_match(&analytic, &numeric, "conv extractor");
}

#[test]
fn coordinate_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let composer = ComposerNetwork::new(2, 1, 2, 6, 30.0, 30.0, &mut rng).unwrap();
    let params = ActivationParams::from_raw([0.1, -0.2, 0.3, 0.05]);
    let coords = random_mat(&mut rng, 2, 4, -0.9, 0.9);
    let out_grad = random_mat(&mut rng, 1, 4, -1.0, 1.0);

    let trace = composer.forward(&coords, &params).unwrap();
    let grads = composer.backward(&trace, &params, &out_grad, true).unwrap();
    let coord_grads = grads.coords.expect("requested coordinate gradients");

    let scalar = |c: &Mat| -> f64 {
        let out = composer.eval(c, &params).unwrap();
        out.as_slice()
            .iter()
            .zip(out_grad.as_slice())
            .map(|(&o, &g)| o * g)
            .sum()
    };
    for axis in 0..2 {
        for b in 0..4 {
            let mut hi = coords.clone();
            hi.set(axis, b, coords.get(axis, b) + FD_STEP);
            let mut lo = coords.clone();
            lo.set(axis, b, coords.get(axis, b) - FD_STEP);
            let numeric = (scalar(&hi) - scalar(&lo)) / (2.0 * FD_STEP);
            let analytic = coord_grads.get(axis, b);
            assert!(
                rel_err(analytic, numeric) < FD_TOL,
                "coord ({axis},{b}): {analytic} vs {numeric}"
            );
        }
    }
}

#[test]
fn full_pipeline_gradients_match_finite_differences() {
    // Extractor -> harmonizer -> exp transform -> composer, MSE + penalty.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let composer = ComposerNetwork::new(2, 1, 2, 6, 30.0, 30.0, &mut rng).unwrap();
    let mut harmonizer = HarmonizerNetwork::with_dims(5, &[6, 4], true).unwrap();
    harmonizer.init(0.05, &mut rng);
    let extractor = LatentExtractor::ConvSignal(ConvSignalExtractor::new([3, 4, 5], &mut rng));
    let bundle = ModelBundle::new(
        composer,
        Conditioning::Learned {
            harmonizer,
            extractor,
        },
    )
    .unwrap();
    let signal: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let coords = random_mat(&mut rng, 2, 10, -1.0, 1.0);
    let targets = random_mat(&mut rng, 1, 10, 0.0, 1.0);
    let cfg = LossConfig::default();

    let (_, analytic) = objective_and_grad(&bundle, &coords, &targets, Some(&signal), &cfg);
    let flat = bundle.flatten_params();
    assert_eq!(analytic.len(), flat.len());
    let numeric = finite_diff(&flat, |p| {
        objective_at(&bundle, p, &coords, &targets, Some(&signal), &cfg)
    });
    assert_grads_match(&analytic, &numeric, "full pipeline");

    // Sanity: perturbing a harmonizer weight must change the composer
    // output (the conditioning path is live).
    let base = objective_at(&bundle, &flat, &coords, &targets, Some(&signal), &cfg);
    let h_offset: usize = bundle
        .composer
        .layers()
        .iter()
        .map(|l| l.param_count())
        .sum();
    let mut nudged = flat.clone();
    nudged[h_offset] += 0.05;
    let moved = objective_at(&bundle, &nudged, &coords, &targets, Some(&signal), &cfg);
    assert!((moved - base).abs() > 0.0);
}
