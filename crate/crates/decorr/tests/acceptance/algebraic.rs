//! Criteria that need no training: whitening identities, gradient oracles,
//! the epsilon formula, the rank precondition and CIFAR ingestion.

use std::time::{Duration, Instant};

use decorr::cifar::{load_cifar10_binary, read_records, write_records};
use decorr::RunError;
use decorr_core::data::CifarRecord;
use decorr_core::layers::{
    dbn_backward, dbn_forward, linear_backward, linear_forward, relu_backward, relu_forward, shuffled_dbn_forward,
    zca_backward, zca_forward, BatchNorm, BnConfig, DbnConfig, Mode, WhiteningScale, ZcaOptions,
};
use decorr_core::model::{EncoderSpec, Layer, Network, NormVariant};
use decorr_core::ssl::{cos_loss, se_loss, ObjectiveKind};
use decorr_core::{Error, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{
    frobenius_from_identity, gram, inner, max_rel_error, numeric_grad, population_variance, random_matrix,
};
use crate::Verdict;

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;
const CASES: usize = 20;

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

pub fn whitening_identity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dims = [2, 4, 8, 16];
    let mut worst_zca: f64 = 0.0;
    let mut worst_dbn: f64 = 0.0;
    for i in 0..50 {
        let d = dims[i % dims.len()];
        let x = random_matrix(&mut rng, d, 8 * d);
        let (y, _) = zca_forward(&x, &ZcaOptions::default()).expect("zca forward");
        worst_zca = worst_zca.max(frobenius_from_identity(&gram(&y)));

        let g = (d / 2).max(1);
        let (y, _) = dbn_forward(&x, &DbnConfig::new(g)).expect("dbn forward");
        for start_row in (0..d).step_by(g) {
            let block = y.row_block(start_row, g);
            worst_dbn = worst_dbn.max(frobenius_from_identity(&gram(&block)));
        }
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst_zca < 1e-8 && worst_dbn < 1e-8 && within(elapsed, 10.0),
        format!(
            "max ||YY^T - I||_F zca {worst_zca:.2e}, dbn groups {worst_dbn:.2e}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Checks `dx` of `layer(x)` against central differences of `<R, layer(x)>`.
struct GradCheck {
    worst: f64,
    cases: usize,
}

impl GradCheck {
    fn new() -> Self {
        GradCheck { worst: 0.0, cases: 0 }
    }

    fn record(&mut self, analytic: &Matrix, numeric: &Matrix) {
        self.worst = self.worst.max(max_rel_error(analytic, numeric));
    }

    fn ok(&self) -> bool {
        self.worst < GRAD_TOL && self.cases >= CASES
    }
}

fn check_linear(rng: &mut ChaCha8Rng) -> GradCheck {
    let mut c = GradCheck::new();
    for _ in 0..CASES {
        let (din, dout, b) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..8));
        let x = random_matrix(rng, din, b);
        let w = random_matrix(rng, dout, din);
        let bias = random_matrix(rng, dout, 1);
        let r = random_matrix(rng, dout, b);
        let (_, cache) = linear_forward(&x, &w, &bias).unwrap();
        let g = linear_backward(&cache, &w, &r).unwrap();
        let f = |x: &Matrix, w: &Matrix, bias: &Matrix| inner(&r, &linear_forward(x, w, bias).unwrap().0);
        c.record(&g.dx, &numeric_grad(&x, H, |x| f(x, &w, &bias)));
        c.record(&g.dweight, &numeric_grad(&w, H, |w| f(&x, w, &bias)));
        c.record(&g.dbias, &numeric_grad(&bias, H, |bias| f(&x, &w, bias)));
        c.cases += 1;
    }
    c
}

fn check_relu(rng: &mut ChaCha8Rng) -> GradCheck {
    let mut c = GradCheck::new();
    while c.cases < CASES {
        let x = random_matrix(rng, 4, 6);
        // central differences are meaningless across the kink
        if x.as_slice().iter().any(|v| v.abs() < 10.0 * H) {
            continue;
        }
        let r = random_matrix(rng, 4, 6);
        let (_, cache) = relu_forward(&x);
        let dx = relu_backward(&cache, &r).unwrap();
        c.record(&dx, &numeric_grad(&x, H, |x| inner(&r, &relu_forward(x).0)));
        c.cases += 1;
    }
    c
}

fn check_bn(rng: &mut ChaCha8Rng, epsilon: f64, affine: bool) -> GradCheck {
    let mut c = GradCheck::new();
    let cfg = BnConfig {
        epsilon,
        affine,
        ..BnConfig::default()
    };
    for _ in 0..CASES {
        let (d, b) = (rng.gen_range(1..5), rng.gen_range(3..9));
        let x = random_matrix(rng, d, b);
        let r = random_matrix(rng, d, b);
        let mut bn = BatchNorm::new(d, cfg).unwrap();
        if affine {
            bn.gamma.as_mut().unwrap().value = random_matrix(rng, d, 1);
            bn.beta.as_mut().unwrap().value = random_matrix(rng, d, 1);
        }
        let base = bn.clone();
        let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
        let g = bn.backward(&cache, &r).unwrap();
        let eval = |bn: &BatchNorm, x: &Matrix| inner(&r, &bn.clone().forward(x, Mode::Train).unwrap().0);
        c.record(&g.dx, &numeric_grad(&x, H, |x| eval(&base, x)));
        if affine {
            let gamma = base.gamma.as_ref().unwrap().value.clone();
            let beta = base.beta.as_ref().unwrap().value.clone();
            let ng = numeric_grad(&gamma, H, |v| {
                let mut bn = base.clone();
                bn.gamma.as_mut().unwrap().value = v.clone();
                eval(&bn, &x)
            });
            let nb = numeric_grad(&beta, H, |v| {
                let mut bn = base.clone();
                bn.beta.as_mut().unwrap().value = v.clone();
                eval(&bn, &x)
            });
            c.record(g.dgamma.as_ref().unwrap(), &ng);
            c.record(g.dbeta.as_ref().unwrap(), &nb);
        }
        c.cases += 1;
    }
    c
}

fn check_zca(rng: &mut ChaCha8Rng, scale: WhiteningScale) -> GradCheck {
    let mut c = GradCheck::new();
    let opts = ZcaOptions {
        scale,
        ..ZcaOptions::default()
    };
    for _ in 0..CASES {
        let d = rng.gen_range(1..5);
        let b = rng.gen_range(d + 3..3 * d + 6);
        let x = random_matrix(rng, d, b);
        let r = random_matrix(rng, d, b);
        let (_, cache) = zca_forward(&x, &opts).unwrap();
        let dx = zca_backward(&cache, &r).unwrap();
        c.record(&dx, &numeric_grad(&x, H, |x| inner(&r, &zca_forward(x, &opts).unwrap().0)));
        c.cases += 1;
    }
    c
}

fn check_dbn(rng: &mut ChaCha8Rng, shuffle: bool) -> GradCheck {
    let mut c = GradCheck::new();
    for case in 0..CASES {
        let g = rng.gen_range(1..4);
        let d = g * rng.gen_range(1..4);
        let b = rng.gen_range(g + 3..3 * g + 8);
        let x = random_matrix(rng, d, b);
        let r = random_matrix(rng, d, b);
        let seed = 7000 + case as u64;
        let forward = |x: &Matrix| {
            if shuffle {
                let cfg = DbnConfig::shuffled(g, seed);
                shuffled_dbn_forward(x, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
            } else {
                dbn_forward(x, &DbnConfig::new(g)).unwrap()
            }
        };
        let (_, cache) = forward(&x);
        let dx = dbn_backward(&cache, &r).unwrap();
        c.record(&dx, &numeric_grad(&x, H, |x| inner(&r, &forward(x).0)));
        c.cases += 1;
    }
    c
}

fn check_objectives(rng: &mut ChaCha8Rng) -> (GradCheck, GradCheck) {
    let mut se = GradCheck::new();
    let mut cos = GradCheck::new();
    for _ in 0..CASES {
        let (d, b) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let z1 = random_matrix(rng, d, b);
        let z2 = random_matrix(rng, d, b);
        let l = se_loss(&z1, &z2).unwrap();
        se.record(&l.grad1, &numeric_grad(&z1, H, |z| se_loss(z, &z2).unwrap().value));
        se.record(&l.grad2, &numeric_grad(&z2, H, |z| se_loss(&z1, z).unwrap().value));
        se.cases += 1;

        let l = cos_loss(&z1, &z2).unwrap();
        cos.record(&l.grad1, &numeric_grad(&z1, H, |z| cos_loss(z, &z2).unwrap().value));
        cos.record(&l.grad2, &numeric_grad(&z2, H, |z| cos_loss(&z1, z).unwrap().value));
        let o = ObjectiveKind::CosineSimilarity;
        let l = o.evaluate(&z1, &z2).unwrap();
        cos.record(&l.grad1, &numeric_grad(&z1, H, |z| o.evaluate(z, &z2).unwrap().value));
        cos.cases += 1;
    }
    (se, cos)
}

/// Three linear layers with hidden BN + ReLU and a shuffled DBN head, trained
/// on a siamese squared-error loss; checks every parameter and both inputs.
fn check_network(rng: &mut ChaCha8Rng) -> GradCheck {
    let mut c = GradCheck::new();
    for case in 0..CASES {
        let spec = EncoderSpec {
            input_dim: 4,
            hidden: vec![6, 6],
            output_dim: 4,
            hidden_norm: BnConfig {
                affine: true,
                ..BnConfig::default()
            },
            head: NormVariant::Dbn(DbnConfig::shuffled(2, case as u64)),
        };
        let mut base = Network::build(&spec, 900 + case as u64).unwrap();
        for layer in base.layers_mut() {
            if let Layer::BatchNorm(bn) = layer {
                // positive scales keep enough units active for full-rank groups
                bn.gamma.as_mut().unwrap().value = random_matrix(rng, 6, 1).map(|v| 1.0 + 0.3 * v.abs());
                bn.beta.as_mut().unwrap().value = random_matrix(rng, 6, 1).scale(0.3);
            }
        }
        let x1 = random_matrix(rng, 4, 12);
        let x2 = random_matrix(rng, 4, 12);
        let loss = |net: &Network, x1: &Matrix, x2: &Matrix| {
            let mut net = net.clone();
            let z1 = net.forward(x1).unwrap().0;
            let z2 = net.forward(x2).unwrap().0;
            se_loss(&z1, &z2).unwrap().value
        };

        let mut net = base.clone();
        let (z1, c1) = net.forward(&x1).unwrap();
        let (z2, c2) = net.forward(&x2).unwrap();
        let l = se_loss(&z1, &z2).unwrap();
        let dx1 = net.backward(&c1, &l.grad1).unwrap();
        let dx2 = net.backward(&c2, &l.grad2).unwrap();
        c.record(&dx1, &numeric_grad(&x1, H, |x| loss(&base, x, &x2)));
        c.record(&dx2, &numeric_grad(&x2, H, |x| loss(&base, &x1, x)));

        let analytic: Vec<Matrix> = net.params().iter().map(|p| p.grad.clone().unwrap()).collect();
        for (k, grad) in analytic.iter().enumerate() {
            let value = base.params()[k].value.clone();
            let numeric = numeric_grad(&value, H, |v| {
                let mut probe = base.clone();
                probe.params_mut()[k].value = v.clone();
                loss(&probe, &x1, &x2)
            });
            c.record(grad, &numeric);
        }
        c.cases += 1;
    }
    c
}

pub fn gradient_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut checks: Vec<(String, GradCheck)> = vec![
        ("linear".into(), check_linear(&mut rng)),
        ("relu".into(), check_relu(&mut rng)),
    ];
    for eps in [0.0, 1e-5, 0.1] {
        for affine in [false, true] {
            checks.push((format!("bn(eps={eps},affine={affine})"), check_bn(&mut rng, eps, affine)));
        }
    }
    checks.push(("zca".into(), check_zca(&mut rng, WhiteningScale::Gram)));
    checks.push(("zca(covariance)".into(), check_zca(&mut rng, WhiteningScale::Covariance)));
    checks.push(("dbn".into(), check_dbn(&mut rng, false)));
    checks.push(("shuffled_dbn".into(), check_dbn(&mut rng, true)));
    let (se, cos) = check_objectives(&mut rng);
    checks.push(("squared_error".into(), se));
    checks.push(("cosine".into(), cos));
    checks.push(("network".into(), check_network(&mut rng)));
    let elapsed = start.elapsed();

    let failing: Vec<String> = checks
        .iter()
        .filter(|(_, c)| !c.ok())
        .map(|(n, c)| format!("{n} {:.1e}", c.worst))
        .collect();
    let worst = checks.iter().map(|(_, c)| c.worst).fold(0.0, f64::max);
    let mut detail = format!(
        "{} checks x {CASES} cases, worst rel err {worst:.1e}; {:.2}s",
        checks.len(),
        elapsed.as_secs_f64()
    );
    if !failing.is_empty() {
        detail.push_str(&format!("; failing: {}", failing.join(", ")));
    }
    Verdict::new(failing.is_empty() && within(elapsed, 60.0), detail)
}

pub fn epsilon_formula() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for sigma2 in [0.01, 0.1, 1.0, 10.0] {
        for eps in [0.0, 0.01, 0.1] {
            // rows rescaled to population variance exactly sigma2
            let raw = random_matrix(&mut rng, 3, 64);
            let x = Matrix::from_fn(3, 64, |i, j| {
                let row = raw.row(i);
                let m = row.iter().sum::<f64>() / 64.0;
                (raw[(i, j)] - m) * (sigma2 / population_variance(row)).sqrt() + 5.0
            });
            let cfg = BnConfig {
                epsilon: eps,
                ..BnConfig::default()
            };
            let y = BatchNorm::new(3, cfg).unwrap().forward(&x, Mode::Train).unwrap().0;
            let want = sigma2 / (sigma2 + eps);
            for i in 0..3 {
                worst = worst.max((population_variance(y.row(i)) - want).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst < 1e-8 && within(elapsed, 1.0),
        format!("max |var - s2/(s2+eps)| {worst:.1e}; {:.3}s", elapsed.as_secs_f64()),
    )
}

pub fn rank_precondition() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let x = random_matrix(&mut rng, 4, 4);
    let zca = zca_forward(&x, &ZcaOptions::default());
    let zca_ok = matches!(zca, Err(Error::RankDeficient { .. }));
    let dbn_ok: Vec<(usize, bool)> = [1, 2]
        .into_iter()
        .map(|g| (g, dbn_forward(&x, &DbnConfig::new(g)).is_ok()))
        .collect();
    let elapsed = start.elapsed();
    Verdict::new(
        zca_ok && dbn_ok.iter().all(|(_, ok)| *ok) && within(elapsed, 1.0),
        format!(
            "zca D=4,B=4 -> {}; dbn G in {{1,2}} ok: {:?}; {:.3}s",
            match &zca {
                Err(e) => e.to_string(),
                Ok(_) => "succeeded".into(),
            },
            dbn_ok,
            elapsed.as_secs_f64()
        ),
    )
}

/// Three records written byte by byte, independent of the encoder.
fn fixture() -> (Vec<u8>, Vec<(u8, Vec<u8>)>) {
    let labels = [3u8, 0, 9];
    let mut bytes = Vec::new();
    let mut expected = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let pixels: Vec<u8> = (0..3072).map(|p| ((p * 7 + i * 31) % 256) as u8).collect();
        bytes.push(label);
        bytes.extend_from_slice(&pixels);
        expected.push((label, pixels));
    }
    (bytes, expected)
}

pub fn cifar_ingestion() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let (bytes, expected) = fixture();
    assert_eq!(bytes.len(), 3 * 3073);
    let path = dir.path().join("fixture.bin");
    std::fs::write(&path, &bytes).unwrap();

    let parsed = read_records(&[&path]).expect("fixture parses");
    let fields_ok = parsed.len() == 3
        && parsed
            .iter()
            .zip(&expected)
            .all(|(r, (l, p))| r.label == *l && &r.pixels == p);
    let copy = dir.path().join("copy.bin");
    write_records(&copy, &parsed).unwrap();
    let roundtrip_ok = std::fs::read(&copy).unwrap() == bytes;
    let loaded = load_cifar10_binary(&[&path]).map(|d| (d.len(), d.input_dim(), d.labels().to_vec()));
    let load_ok = matches!(&loaded, Ok((3, 3072, l)) if l == &[3, 0, 9]);

    let mut malformed = Vec::new();
    for (name, data) in [("short", &bytes[..bytes.len() - 1]), ("long", &[bytes.as_slice(), &[0u8]].concat()[..])] {
        let p = dir.path().join(format!("{name}.bin"));
        std::fs::write(&p, data).unwrap();
        let err = read_records(&[&p]);
        malformed.push(matches!(err, Err(RunError::Format { source: Error::Format { .. }, .. })));
    }
    let reencoded = decorr_core::data::encode_cifar10_records(&[CifarRecord {
        label: expected[0].0,
        pixels: expected[0].1.clone(),
    }])
    .unwrap();
    let encode_ok = reencoded == bytes[..3073];

    Verdict::new(
        fields_ok && roundtrip_ok && load_ok && encode_ok && malformed.iter().all(|b| *b),
        format!(
            "fields {fields_ok}, byte round-trip {roundtrip_ok}, load {load_ok}, encode {encode_ok}, \
             FormatError on short/long {malformed:?}"
        ),
    )
}
