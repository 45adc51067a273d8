use super::*;
use crate::backbone::kl_diag_gaussian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn tiny_dims() -> ModelDims {
    ModelDims {
        obs: ObsShape::new(1, 2, 3),
        action: 2,
        deter: 4,
        stoch: 2,
        hidden: 5,
        embed: 3,
    }
}

fn tiny_model(seed: u64) -> WorldModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = WorldModel::new(tiny_dims(), 1.0, &mut rng);
    // Non-zero biases so the oracle exercises them too.
    for v in m.params.values_mut() {
        if v.rows() == 1 {
            for x in v.data_mut() {
                *x = rng.gen_range(-0.3..0.3);
            }
        }
    }
    m
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_state(rng: &mut ChaCha8Rng, d: &ModelDims) -> LatentState<f64> {
    let std: Vec<f64> = (0..d.stoch).map(|_| rng.gen_range(0.2..1.5)).collect();
    LatentState {
        deter: (0..d.deter).map(|_| rng.gen_range(-0.9..0.9)).collect(),
        stoch: randn(rng, d.stoch),
        dist: DiagGaussian::new(randn(rng, d.stoch), std).unwrap(),
    }
}

fn random_obs(rng: &mut ChaCha8Rng, shape: ObsShape) -> Observation<f64> {
    Observation::new(shape, (0..shape.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

use crate::backbone::DiagGaussian;

/// Straight-line re-implementation of the model arithmetic on plain vectors,
/// reading weights by name.
mod oracle {
    use super::*;

    pub fn w<'a>(m: &'a WorldModel<f64>, name: &str) -> &'a Tensor<f64> {
        m.params.value(m.params.index_of(name).unwrap_or_else(|| panic!("{name}")))
    }

    pub fn dense(m: &WorldModel<f64>, name: &str, x: &[f64]) -> Vec<f64> {
        let wt = w(m, &format!("{name}.w"));
        let b = w(m, &format!("{name}.b"));
        (0..wt.cols())
            .map(|j| b.get(0, j) + (0..wt.rows()).map(|i| x[i] * wt.get(i, j)).sum::<f64>())
            .collect()
    }

    pub fn elu(x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| if v > 0.0 { v } else { v.exp() - 1.0 }).collect()
    }

    pub fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    pub fn softplus(v: f64) -> f64 {
        (1.0 + v.exp()).ln()
    }

    pub fn mlp2(m: &WorldModel<f64>, name: &str, x: &[f64]) -> Vec<f64> {
        let h = elu(dense(m, &format!("{name}.0"), x));
        dense(m, &format!("{name}.1"), &h)
    }

    pub fn core(m: &WorldModel<f64>, prev: &LatentState<f64>, a: &[f64]) -> Vec<f64> {
        let d = m.dims.deter;
        let mut xin = prev.stoch.clone();
        xin.extend_from_slice(a);
        let x = elu(dense(m, "core_in", &xin));
        let gx = dense(m, "gru_x", &x);
        let gh = dense(m, "gru_h", &prev.deter);
        (0..d)
            .map(|i| {
                let r = sig(gx[i] + gh[i]);
                let u = sig(gx[d + i] + gh[d + i]);
                let n = (gx[2 * d + i] + r * gh[2 * d + i]).tanh();
                (1.0 - u) * n + u * prev.deter[i]
            })
            .collect()
    }

    pub fn head(out: Vec<f64>, z: usize) -> (Vec<f64>, Vec<f64>) {
        let mean = out[..z].to_vec();
        let std = out[z..].iter().map(|&v| softplus(v) + 1e-4).collect();
        (mean, std)
    }

    pub fn posterior(
        m: &WorldModel<f64>,
        prev: &LatentState<f64>,
        a: &[f64],
        obs: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = core(m, prev, a);
        let e = elu(mlp2(m, "encoder", obs));
        let mut x = h.clone();
        x.extend_from_slice(&e);
        let (mean, std) = head(mlp2(m, "posterior", &x), m.dims.stoch);
        (h, mean, std)
    }

    pub fn prior(
        m: &WorldModel<f64>,
        prev: &LatentState<f64>,
        a: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = core(m, prev, a);
        let (mean, std) = head(mlp2(m, "prior", &h), m.dims.stoch);
        (h, mean, std)
    }

    pub fn decode(m: &WorldModel<f64>, f: &[f64]) -> Vec<f64> {
        mlp2(m, "decoder", f).into_iter().map(sig).collect()
    }

    pub fn reward(m: &WorldModel<f64>, f: &[f64]) -> f64 {
        mlp2(m, "reward", f)[0]
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn represent_zero_noise_gives_posterior_mean() {
    let m = tiny_model(1);
    let d = m.dims;
    let s = m
        .represent(
            &LatentState::zero(d.deter, d.stoch),
            &[0.0, 0.0],
            &Observation::<f64>::zeros(d.obs),
            &[0.0, 0.0],
        )
        .unwrap();
    assert_eq!(s.stoch, s.dist.mean());
}

#[test]
fn represent_and_transition_are_deterministic() {
    let m = tiny_model(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prev = random_state(&mut rng, &m.dims);
    let obs = random_obs(&mut rng, m.dims.obs);
    let a = [0.3, -0.7];
    let eps = randn(&mut rng, 2);
    assert_eq!(
        m.represent(&prev, &a, &obs, &eps).unwrap(),
        m.represent(&prev, &a, &obs, &eps).unwrap()
    );
    assert_eq!(
        m.transition(&prev, &a, &eps).unwrap(),
        m.transition(&prev, &a, &eps).unwrap()
    );
}

#[test]
fn posterior_matches_straight_line_oracle() {
    for seed in 0..5 {
        let m = tiny_model(10 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prev = random_state(&mut rng, &m.dims);
        let obs = random_obs(&mut rng, m.dims.obs);
        let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let eps = randn(&mut rng, 2);
        let s = m.represent(&prev, &a, &obs, &eps).unwrap();
        let (h, mean, std) = oracle::posterior(&m, &prev, &a, obs.pixels());
        close(&s.deter, &h, 1e-12);
        close(s.dist.mean(), &mean, 1e-12);
        close(s.dist.std(), &std, 1e-12);
        let sample: Vec<f64> = (0..2).map(|i| mean[i] + std[i] * eps[i]).collect();
        close(&s.stoch, &sample, 1e-12);
    }
}

#[test]
fn prior_matches_straight_line_oracle() {
    for seed in 0..5 {
        let m = tiny_model(20 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let prev = random_state(&mut rng, &m.dims);
        let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let s = m.transition(&prev, &a, &[0.0, 0.0]).unwrap();
        let (h, mean, std) = oracle::prior(&m, &prev, &a);
        close(&s.deter, &h, 1e-12);
        close(s.dist.mean(), &mean, 1e-12);
        close(s.dist.std(), &std, 1e-12);
        assert_eq!(s.stoch, s.dist.mean());
    }
}

#[test]
fn posterior_and_prior_share_the_deterministic_path() {
    let m = tiny_model(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prev = random_state(&mut rng, &m.dims);
    let obs = random_obs(&mut rng, m.dims.obs);
    let a = [0.1, 0.2];
    let post = m.represent(&prev, &a, &obs, &randn(&mut rng, 2)).unwrap();
    let prior = m.transition(&prev, &a, &randn(&mut rng, 2)).unwrap();
    assert_eq!(post.deter, prior.deter);
}

#[test]
fn dimension_errors() {
    let m = tiny_model(5);
    let d = m.dims;
    let zero = LatentState::zero(d.deter, d.stoch);
    assert!(m.transition(&zero, &[0.0], &[0.0, 0.0]).is_err());
    assert!(m.transition(&zero, &[0.0, 0.0], &[0.0]).is_err());
    let wrong = Observation::<f64>::zeros(ObsShape::new(1, 1, 1));
    assert!(m.represent(&zero, &[0.0, 0.0], &wrong, &[0.0, 0.0]).is_err());
}

#[test]
fn zero_decoder_reconstructs_half_grey() {
    let mut m = tiny_model(6);
    let out = *m.decoder.output_layer();
    m.params.value_mut(out.weight).data_mut().fill(0.0);
    m.params.value_mut(out.bias).data_mut().fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = random_state(&mut rng, &m.dims);
    let img = m.reconstruct(&s).unwrap();
    assert!(img.pixels().iter().all(|&p| p == 0.5));
    assert_eq!(img, m.reconstruct(&s).unwrap());
}

#[test]
fn reconstruct_and_reward_match_oracle() {
    let m = tiny_model(7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = random_state(&mut rng, &m.dims);
    close(m.reconstruct(&s).unwrap().pixels(), &oracle::decode(&m, &s.feature()), 1e-12);
    assert!((m.predict_reward(&s).unwrap() - oracle::reward(&m, &s.feature())).abs() < 1e-12);
}

#[test]
fn zero_reward_head_predicts_zero() {
    let mut m = tiny_model(8);
    let out = *m.reward.output_layer();
    m.params.value_mut(out.weight).data_mut().fill(0.0);
    m.params.value_mut(out.bias).data_mut().fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = random_state(&mut rng, &m.dims);
    assert_eq!(m.predict_reward(&s).unwrap(), 0.0);
    assert_eq!(m.predict_reward(&s).unwrap(), m.predict_reward(&s).unwrap());
}

fn random_batch(rng: &mut ChaCha8Rng, d: &ModelDims, b: usize, l: usize, reward: Option<f64>) -> SequenceBatch<f64> {
    let seqs: Vec<Sequence<f64>> = (0..b)
        .map(|_| Sequence {
            actions: (0..l).map(|_| (0..d.action).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            observations: (0..l).map(|_| (0..d.obs.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
            rewards: (0..l).map(|_| reward.unwrap_or_else(|| rng.gen_range(0.0..1.0))).collect(),
        })
        .collect();
    SequenceBatch::from_sequences(&seqs).unwrap()
}

#[test]
fn observe_sequence_matches_loop_of_represent_calls() {
    let m = tiny_model(9);
    let d = m.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = random_batch(&mut rng, &d, 3, 5, None);
    let noise = sequence_noise::<f64>(&mut rng, 5, 3, d.stoch);
    let states = m.observe_sequence(&batch, &noise).unwrap();
    for b in 0..3 {
        let mut prev = LatentState::zero(d.deter, d.stoch);
        for t in 0..5 {
            let action = batch.prev_action(t).row(b).to_vec();
            let obs = Observation::new(d.obs, batch.observations[t].row(b).to_vec()).unwrap();
            let s = m.represent(&prev, &action, &obs, noise[t].row(b)).unwrap();
            assert_eq!(s, states[b][t], "element {b} step {t}");
            prev = s;
        }
    }
}

#[test]
fn observe_sequence_prefix_consistency_and_single_step() {
    let m = tiny_model(11);
    let d = m.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = random_batch(&mut rng, &d, 2, 6, None);
    let noise = sequence_noise::<f64>(&mut rng, 6, 2, d.stoch);
    let full = m.observe_sequence(&batch, &noise).unwrap();
    let part = m.observe_sequence(&batch.prefix(3), &noise[..3]).unwrap();
    for b in 0..2 {
        assert_eq!(&full[b][..3], &part[b][..]);
    }
    let one = m.observe_sequence(&batch.prefix(1), &noise[..1]).unwrap();
    let obs = Observation::new(d.obs, batch.observations[0].row(0).to_vec()).unwrap();
    let direct = m
        .represent(&LatentState::zero(d.deter, d.stoch), &[0.0, 0.0], &obs, noise[0].row(0))
        .unwrap();
    assert_eq!(one[0][0], direct);
}

#[test]
fn empty_sequence_is_an_error() {
    let m = tiny_model(12);
    let batch = SequenceBatch::<f64> {
        actions: vec![],
        observations: vec![],
        rewards: vec![],
    };
    assert!(matches!(
        m.observe_sequence(&batch, &[]),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn perfect_model_loss_is_log_normalizer_only() {
    let mut m = tiny_model(13);
    let d = m.dims;
    for layer in [*m.decoder.output_layer(), *m.reward.output_layer()] {
        m.params.value_mut(layer.weight).data_mut().fill(0.0);
        m.params.value_mut(layer.bias).data_mut().fill(0.0);
    }
    let (pr, po) = (*m.prior.output_layer(), *m.posterior.output_layer());
    m.params.value_mut(pr.weight).data_mut().fill(0.0);
    m.params.value_mut(po.weight).data_mut().fill(0.0);
    let bias = m.params.value(pr.bias).clone();
    *m.params.value_mut(po.bias) = bias;

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut batch = random_batch(&mut rng, &d, 2, 3, Some(0.0));
    for o in &mut batch.observations {
        o.data_mut().fill(0.5);
    }
    let noise = sequence_noise::<f64>(&mut rng, 3, 2, d.stoch);
    let r = m.model_loss(&batch, &noise).unwrap();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!(r.kl.abs() < 1e-12);
    assert!((r.reconstruction - half_log_2pi * d.obs.len() as f64).abs() < 1e-12);
    assert!((r.reward - half_log_2pi).abs() < 1e-12);
    assert!((r.total - half_log_2pi * (d.obs.len() + 1) as f64).abs() < 1e-12);
}

#[test]
fn kl_term_nonnegative_on_random_batches() {
    for seed in 0..10 {
        let m = tiny_model(200 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, &m.dims, 3, 4, None);
        let noise = sequence_noise::<f64>(&mut rng, 4, 3, m.dims.stoch);
        let r = m.model_loss(&batch, &noise).unwrap();
        assert!(r.kl >= 0.0);
        assert!((r.total - (r.reconstruction + r.reward + r.kl)).abs() < 1e-12);
    }
}

#[test]
fn one_step_one_pixel_loss_by_hand() {
    let dims = ModelDims {
        obs: ObsShape::new(1, 1, 1),
        action: 1,
        deter: 1,
        stoch: 1,
        hidden: 1,
        embed: 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut m = WorldModel::new(dims, 1.0, &mut rng);
    for v in m.params.values_mut() {
        for x in v.data_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    let (o, r, eps) = (0.8, 0.3, 0.6);
    let batch = SequenceBatch::from_sequences(&[Sequence {
        actions: vec![vec![0.4]],
        observations: vec![vec![o]],
        rewards: vec![r],
    }])
    .unwrap();
    let noise = vec![Tensor::scalar(eps)];
    let report = m.model_loss(&batch, &noise).unwrap();

    // Scalar arithmetic with every dimension equal to one.
    let p = |name: &str| oracle::w(&m, name).item();
    let sig = oracle::sig;
    let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
    let sp = |v: f64| (1.0 + v.exp()).ln() + 1e-4;
    // Zero state and zero action at the window start.
    let x = elu(p("core_in.b"));
    let gx = |k: usize| oracle::w(&m, "gru_x.w").get(0, k) * x + oracle::w(&m, "gru_x.b").get(0, k);
    let gh = |k: usize| oracle::w(&m, "gru_h.b").get(0, k);
    let reset = sig(gx(0) + gh(0));
    let update = sig(gx(1) + gh(1));
    let cand = (gx(2) + reset * gh(2)).tanh();
    let h = (1.0 - update) * cand;
    let two = |name: &str, v: f64| -> (f64, f64) {
        let hid = elu(p(&format!("{name}.0.w")) * v + p(&format!("{name}.0.b")));
        let w1 = oracle::w(&m, &format!("{name}.1.w"));
        let b1 = oracle::w(&m, &format!("{name}.1.b"));
        (w1.get(0, 0) * hid + b1.get(0, 0), w1.get(0, 1) * hid + b1.get(0, 1))
    };
    let (prior_mu, prior_raw) = two("prior", h);
    let e = elu(p("encoder.1.w") * elu(p("encoder.0.w") * o + p("encoder.0.b")) + p("encoder.1.b"));
    let post_hid = elu(
        oracle::w(&m, "posterior.0.w").get(0, 0) * h
            + oracle::w(&m, "posterior.0.w").get(1, 0) * e
            + p("posterior.0.b"),
    );
    let w1 = oracle::w(&m, "posterior.1.w");
    let b1 = oracle::w(&m, "posterior.1.b");
    let post_mu = w1.get(0, 0) * post_hid + b1.get(0, 0);
    let post_std = sp(w1.get(0, 1) * post_hid + b1.get(0, 1));
    let prior_std = sp(prior_raw);
    let z = post_mu + post_std * eps;
    let feat_hidden = |name: &str| {
        elu(oracle::w(&m, &format!("{name}.0.w")).get(0, 0) * h
            + oracle::w(&m, &format!("{name}.0.w")).get(1, 0) * z
            + p(&format!("{name}.0.b")))
    };
    let o_hat = sig(p("decoder.1.w") * feat_hidden("decoder") + p("decoder.1.b"));
    let r_hat = p("reward.1.w") * feat_hidden("reward") + p("reward.1.b");
    let c = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let recon = 0.5 * (o - o_hat).powi(2) + c;
    let rew = 0.5 * (r - r_hat).powi(2) + c;
    let kl = (prior_std / post_std).ln()
        + (post_std.powi(2) + (post_mu - prior_mu).powi(2)) / (2.0 * prior_std.powi(2))
        - 0.5;
    let expected_kl = kl_diag_gaussian(
        &DiagGaussian::new(vec![post_mu], vec![post_std]).unwrap(),
        &DiagGaussian::new(vec![prior_mu], vec![prior_std]).unwrap(),
    )
    .unwrap();
    assert!((kl - expected_kl).abs() < 1e-12);
    assert!((report.reconstruction - recon).abs() < 1e-10);
    assert!((report.reward - rew).abs() < 1e-10);
    assert!((report.kl - kl).abs() < 1e-10);
    assert!((report.total - (recon + rew + kl)).abs() < 1e-10);
}

#[test]
fn checkpoint_roundtrip_preserves_model() {
    let m = tiny_model(30);
    let mut ck = Checkpoint::new();
    m.save(&mut ck);
    assert_eq!(ck.scalar("world_model/manifest/d_h"), Some(4.0));
    assert_eq!(ck.scalar("world_model/manifest/format_version"), Some(1.0));
    let back = WorldModel::<f64>::load(&Checkpoint::decode(&ck.encode()).unwrap()).unwrap();
    assert_eq!(back.dims, m.dims);
    assert_eq!(back.params.values(), m.params.values());
}

#[test]
fn reward_head_fits_constant_reward() {
    let mut m = tiny_model(31);
    let d = m.dims;
    let mut opt = OptimizerState::new(m.params.values(), 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let batch = random_batch(&mut rng, &d, 4, 3, Some(1.0));
    let noise = sequence_noise::<f64>(&mut rng, 3, 4, d.stoch);
    for _ in 0..400 {
        m.fit(&mut opt, &batch, &noise).unwrap();
    }
    let states = m.observe_sequence(&batch, &noise).unwrap();
    for s in states.iter().flatten() {
        let r = m.predict_reward(s).unwrap();
        assert!((r - 1.0).abs() < 0.05, "predicted {r}");
    }
}

#[test]
fn f32_instantiation_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = WorldModel::<f32>::new(tiny_dims(), 1.0, &mut rng);
    let d = m.dims;
    let s = m
        .transition(&LatentState::zero(d.deter, d.stoch), &[0.0, 0.0], &[0.5, -0.5])
        .unwrap();
    assert!(s.stoch.iter().all(|v| v.is_finite()));
}
