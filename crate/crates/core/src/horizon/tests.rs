use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::backbone::normal_tensor;
use crate::world_model::{ModelDims, ObsShape, Observation, WorldModel};

/// `a = tanh(f·W + 0.3 ε)`.
struct TanhPolicy(Tensor<f64>);

impl PolicyNodes<f64> for TanhPolicy {
    fn action_dim(&self) -> usize {
        self.0.cols()
    }
    fn action_nodes(&self, g: &mut Graph<f64>, s: &LatentNodes, noise: Var) -> Result<Var> {
        let f = s.feature(g)?;
        let w = g.constant(self.0.clone());
        let x = g.matmul(f, w)?;
        let e = g.scale(noise, 0.3)?;
        let x = g.add(x, e)?;
        Ok(g.tanh(x)?)
    }
}

/// `v = tanh(f·u)·5`.
struct TanhCritic(Tensor<f64>);

impl ValueNodes<f64> for TanhCritic {
    fn value_nodes(&self, g: &mut Graph<f64>, s: &LatentNodes) -> Result<Var> {
        let f = s.feature(g)?;
        let u = g.constant(self.0.clone());
        let v = g.matmul(f, u)?;
        let v = g.tanh(v)?;
        Ok(g.scale(v, 5.0)?)
    }
}

/// A world model whose decoder returns fixed images, one per batch row.
struct FixedImages<'a> {
    inner: &'a WorldModel<f64>,
    images: Tensor<f64>,
}

impl LatentModel<f64> for FixedImages<'_> {
    fn dims(&self) -> &ModelDims {
        &self.inner.dims
    }
    fn transition_nodes(&self, g: &mut Graph<f64>, p: &LatentNodes, a: Var, e: Var) -> Result<LatentNodes> {
        self.inner.transition_nodes(g, p, a, e)
    }
    fn represent_nodes(&self, g: &mut Graph<f64>, p: &LatentNodes, a: Var, o: Var, e: Var) -> Result<LatentNodes> {
        self.inner.represent_nodes(g, p, a, o, e)
    }
    fn reconstruct_nodes(&self, g: &mut Graph<f64>, _s: &LatentNodes) -> Result<Var> {
        Ok(g.constant(self.images.clone()))
    }
    fn reward_nodes(&self, g: &mut Graph<f64>, s: &LatentNodes) -> Result<Var> {
        self.inner.reward_nodes(g, s)
    }
}

struct Fixture {
    model: WorldModel<f64>,
    policy: TanhPolicy,
    critic: TanhCritic,
    prev: LatentState<f64>,
    action: Vec<f64>,
    obs: Observation<f64>,
    eps: Vec<f64>,
    state: LatentState<f64>,
}

fn fixture(seed: u64) -> Fixture {
    let dims = ModelDims {
        obs: ObsShape::new(1, 3, 3),
        action: 2,
        deter: 4,
        stoch: 2,
        hidden: 8,
        embed: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = WorldModel::new(dims, 1.0, &mut rng);
    let f = dims.feature();
    let policy = TanhPolicy(Tensor::from_vec(f, 2, (0..2 * f).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap());
    let critic = TanhCritic(Tensor::from_vec(f, 1, (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap());
    let mut prev = LatentState::zero(4, 2);
    for v in prev.deter.iter_mut().chain(prev.stoch.iter_mut()) {
        *v = rng.gen_range(-0.7..0.7);
    }
    let action = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let obs = Observation::new(dims.obs, (0..9).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let eps = normal_tensor::<f64>(&mut rng, 1, 2).into_data();
    let state = model.represent(&prev, &action, &obs, &eps).unwrap();
    Fixture {
        model,
        policy,
        critic,
        prev,
        action,
        obs,
        eps,
        state,
    }
}

impl Fixture {
    fn ctx(&self) -> StateContext<'_, f64> {
        StateContext {
            prev: &self.prev,
            prev_action: &self.action,
            state: &self.state,
            posterior_noise: &self.eps,
        }
    }
}

#[test]
fn exact_reconstruction_is_a_fixed_point() {
    let fx = fixture(1);
    let stub = FixedImages {
        inner: &fx.model,
        images: fx.obs.to_row(),
    };
    let s_hat = reconstruction_state(&stub, &fx.prev, &fx.action, &fx.state, &fx.eps).unwrap();
    assert_eq!(s_hat, fx.state);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = ImaginationNoise::sample(&mut rng, 6, 1, 2, 2);
    for k in 1..=6 {
        let est = estimate_state_value(&stub, &fx.policy, &fx.critic, fx.ctx(), &noise, k, 0.99).unwrap();
        let sel = &est.selection;
        assert!(sel.errors.iter().all(|&e| e == 0.0));
        assert_eq!(sel.selected, (1..=k).collect::<Vec<_>>());
        let mean = (1..=k).map(|h| sel.family.get(h)).sum::<f64>() / k as f64;
        assert_eq!(sel.value, mean);
    }
}

#[test]
fn reconstruction_state_matches_manual_composition() {
    let fx = fixture(2);
    let s_hat = reconstruction_state(&fx.model, &fx.prev, &fx.action, &fx.state, &fx.eps).unwrap();
    let image = fx.model.reconstruct(&fx.state).unwrap();
    assert!(image.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    let manual = fx.model.represent(&fx.prev, &fx.action, &image, &fx.eps).unwrap();
    assert_eq!(s_hat.dist, manual.dist);
    assert_eq!(s_hat, manual);
    assert_eq!(
        s_hat,
        reconstruction_state(&fx.model, &fx.prev, &fx.action, &fx.state, &fx.eps).unwrap()
    );
}

#[test]
fn errors_by_hand_and_symmetric() {
    let a = ValueFamily::new(vec![1.0, 2.0, 3.0], 0.9).unwrap();
    let b = ValueFamily::new(vec![1.5, 2.0, 2.0], 0.9).unwrap();
    assert_eq!(horizon_errors(&a, &b).unwrap(), vec![0.5, 0.0, 1.0]);
    assert_eq!(horizon_errors(&a, &b).unwrap(), horizon_errors(&b, &a).unwrap());
    assert_eq!(horizon_errors(&a, &a).unwrap(), vec![0.0; 3]);
    let short = ValueFamily::new(vec![1.0], 0.9).unwrap();
    assert!(horizon_errors(&a, &short).is_err());
    let other_gamma = ValueFamily::new(vec![1.0, 2.0, 3.0], 0.5).unwrap();
    assert!(horizon_errors(&a, &other_gamma).is_err());
}

#[test]
fn selection_examples() {
    assert_eq!(select_horizons(&[0.5, 0.1, 0.3, 0.2], 2).unwrap(), vec![2, 4]);
    assert_eq!(select_horizons(&[0.7; 5], 2).unwrap(), vec![1, 2]);
    assert_eq!(select_horizons(&[0.3, 0.1, 0.2], 3).unwrap(), vec![1, 2, 3]);
    assert!(select_horizons(&[0.3, 0.1], 0).is_err());
    assert!(select_horizons(&[0.3, 0.1], 3).is_err());
    assert!(select_horizons(&[f64::NAN, 0.1], 1).is_err());
}

#[test]
fn final_value_examples() {
    let f = ValueFamily::new(vec![1.0, 2.0, 3.0], 0.9).unwrap();
    assert_eq!(dmve_value(&f, &[1, 3]).unwrap(), 2.0);
    assert_eq!(dmve_value(&f, &[2]).unwrap(), 2.0);
    assert_eq!(dmve_value(&f, &[1, 2, 3]).unwrap(), f.mean());
    assert!(dmve_value(&f, &[]).is_err());
    assert!(dmve_value(&f, &[4]).is_err());
}

/// Rank-counting oracle: horizon `i` is selected when fewer than `k` others
/// beat it, where "beat" means a smaller error or an equal error at a smaller
/// horizon.
fn rank_oracle(errors: &[f64], k: usize) -> Vec<usize> {
    (0..errors.len())
        .filter(|&i| {
            let rank = (0..errors.len())
                .filter(|&j| errors[j] < errors[i] || (errors[j] == errors[i] && j < i))
                .count();
            rank < k
        })
        .map(|i| i + 1)
        .collect()
}

fn errors_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0f64..1.0, (0u8..4).prop_map(|v| v as f64 * 0.25)], 1..=30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn selection_matches_oracle_and_nests(errors in errors_strategy()) {
        let h = errors.len();
        let mut prev: Vec<usize> = Vec::new();
        for k in 1..=h {
            let sel = select_horizons(&errors, k).unwrap();
            prop_assert_eq!(&sel, &rank_oracle(&errors, k));
            prop_assert_eq!(sel.len(), k);
            prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
            for &m in &sel {
                for n in (1..=h).filter(|n| !sel.contains(n)) {
                    prop_assert!(errors[m - 1] <= errors[n - 1]);
                }
            }
            prop_assert!(prev.iter().all(|p| sel.contains(p)));
            prev = sel;
        }
    }

    #[test]
    fn shift_leaves_selection_unchanged(
        a in prop::collection::vec(-10.0f64..10.0, 1..=20),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
        let shift: Vec<f64> = a.iter().map(|_| rng.gen_range(-100.0..100.0)).collect();
        let fa = ValueFamily::new(a.clone(), 0.9).unwrap();
        let fb = ValueFamily::new(b.clone(), 0.9).unwrap();
        let sa = ValueFamily::new(a.iter().zip(&shift).map(|(x, c)| x + c).collect(), 0.9).unwrap();
        let sb = ValueFamily::new(b.iter().zip(&shift).map(|(x, c)| x + c).collect(), 0.9).unwrap();
        let k = 1 + (seed as usize) % a.len();
        let e1 = horizon_errors(&fa, &fb).unwrap();
        let e2 = horizon_errors(&sa, &sb).unwrap();
        for (x, y) in e1.iter().zip(&e2) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        // Compare selections on the rounded errors so float noise from the
        // shift cannot flip near-ties.
        let round = |e: &[f64]| e.iter().map(|v| (v * 1e6).round()).collect::<Vec<_>>();
        prop_assert_eq!(select_horizons(&round(&e1), k).unwrap(), select_horizons(&round(&e2), k).unwrap());
    }

    #[test]
    fn final_value_within_selected_range(
        values in prop::collection::vec(-10.0f64..10.0, 1..=20),
        errors_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(errors_seed);
        let errors: Vec<f64> = values.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = 1 + (errors_seed as usize) % values.len();
        let fam = ValueFamily::new(values, 0.9).unwrap();
        let sel = select_horizons(&errors, k).unwrap();
        let v = dmve_value(&fam, &sel).unwrap();
        let lo = sel.iter().map(|&h| fam.get(h)).fold(f64::INFINITY, f64::min);
        let hi = sel.iter().map(|&h| fam.get(h)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }
}

#[test]
fn full_selection_ignores_reconstruction_branch() {
    let fx = fixture(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = ImaginationNoise::sample(&mut rng, 5, 1, 2, 2);
    let real = estimate_state_value(&fx.model, &fx.policy, &fx.critic, fx.ctx(), &noise, 5, 0.95).unwrap();
    let stub = FixedImages {
        inner: &fx.model,
        images: Tensor::full(1, 9, 0.5),
    };
    let other = estimate_state_value(&stub, &fx.policy, &fx.critic, fx.ctx(), &noise, 5, 0.95).unwrap();
    assert_ne!(real.reconstructed_state, other.reconstructed_state);
    assert_eq!(real.selection.value, other.selection.value);
    assert_eq!(real.selection.value, real.selection.family.mean());
}

#[test]
fn end_to_end_equals_scripted_composition() {
    let fx = fixture(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = ImaginationNoise::sample(&mut rng, 7, 1, 2, 2);
    let est = estimate_state_value(&fx.model, &fx.policy, &fx.critic, fx.ctx(), &noise, 3, 0.99).unwrap();

    let s_hat = reconstruction_state(&fx.model, &fx.prev, &fx.action, &fx.state, &fx.eps).unwrap();
    let t1 = imagine(&fx.model, &fx.policy, &fx.critic, &fx.state, &noise).unwrap();
    let t2 = imagine(&fx.model, &fx.policy, &fx.critic, &s_hat, &noise).unwrap();
    let f1 = t1.family(0.99).unwrap();
    let f2 = t2.family(0.99).unwrap();
    let errs = horizon_errors(&f1, &f2).unwrap();
    let sel = select_horizons(&errs, 3).unwrap();
    let value = dmve_value(&f1, &sel).unwrap();

    assert_eq!(est.reconstructed_state, s_hat);
    assert_eq!(est.trajectory, t1);
    assert_eq!(est.reconstructed_trajectory.noise, t1.noise);
    assert_eq!(est.selection.errors, errs);
    assert_eq!(est.selection.selected, sel);
    assert_eq!(est.selection.value, value);
    assert!(est.selection.errors.iter().any(|&e| e > 0.0));
}

#[test]
fn batch_estimate_matches_single_states() {
    let fx = fixture(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 3;
    let mut prevs = Vec::new();
    let mut actions = Vec::new();
    let mut states = Vec::new();
    let mut eps = Vec::new();
    for _ in 0..n {
        let mut prev = LatentState::zero(4, 2);
        for v in prev.deter.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let a = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let obs = Observation::new(fx.model.dims.obs, (0..9).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let e = normal_tensor::<f64>(&mut rng, 1, 2).into_data();
        states.push(fx.model.represent(&prev, &a, &obs, &e).unwrap());
        prevs.push(prev);
        actions.push(a);
        eps.push(e);
    }
    let ctx = BatchContext {
        prev: LatentBatch::from_states(&prevs),
        prev_action: Tensor::from_rows(&actions).unwrap(),
        state: LatentBatch::from_states(&states),
        posterior_noise: Tensor::from_rows(&eps).unwrap(),
    };
    let noise = ImaginationNoise::sample(&mut rng, 4, n, 2, 2);
    let mut g = Graph::new();
    let batch = estimate_batch(&mut g, &fx.model, &fx.policy, &fx.critic, &ctx, &noise, 2, 0.9).unwrap();
    let mut total = 0.0;
    for i in 0..n {
        let single = estimate_state_value(
            &fx.model,
            &fx.policy,
            &fx.critic,
            StateContext {
                prev: &prevs[i],
                prev_action: &actions[i],
                state: &states[i],
                posterior_noise: &eps[i],
            },
            &noise.row(i),
            2,
            0.9,
        )
        .unwrap();
        assert_eq!(single.selection, batch.selections[i]);
        total += single.selection.mean_selected_horizon();
    }
    assert_eq!(batch.mean_selected_horizon(), total / n as f64);
}

#[test]
fn horizon_csv_rows() {
    let a = ValueFamily::new(vec![1.0, 2.0, 3.0, 4.0], 0.9).unwrap();
    let b = ValueFamily::new(vec![1.5, 2.0, 2.9, 6.0], 0.9).unwrap();
    let sel = HorizonSelection::from_families(a, b, 2).unwrap();
    let mut buf = Vec::new();
    write_horizon_csv(&mut buf, 7, &[sel.clone(), sel]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[..4], ["7", "1", "2;3", "2.5"]);
    assert_eq!(fields[4].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[5].parse::<f64>().unwrap(), 2.0);
}
