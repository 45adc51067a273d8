//! The learning loop: model, actor and critic updates, environment
//! interaction, evaluation and run artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{actor_loss, critic_loss, Actor, Critic, Estimator, ReplayDataset, TrainConfig};
use crate::backbone::{adam_step, Checkpoint, Graph, OptimizerState, ParamStore, Tensor, Var};
use crate::envs::{make_env, Env, Episode};
use crate::horizon::{estimate_batch, write_horizon_csv, BatchContext, HORIZON_CSV_HEADER};
use crate::value_expansion::{imagine_nodes, lambda_return, ImaginationNoise, ValueFamily};
use crate::world_model::{
    sequence_noise, LatentBatch, LatentModel, LatentState, ModelDims, ModelLossReport, ObsShape,
    SequenceBatch, WorldModel,
};
use crate::{Error, Result, Scalar};

pub const METRICS_CSV_HEADER: &str = "env_step,train_step,model_loss,recon_loss,reward_loss,kl,actor_loss,critic_loss,mean_selected_horizon,eval_return_mean,eval_return_std";

/// World model, actor, critic and their optimizer states.
#[derive(Debug, Clone)]
pub struct Agent<T: Scalar> {
    pub model: WorldModel<T>,
    pub actor: Actor<T>,
    pub critic: Critic<T>,
    pub model_opt: OptimizerState<T>,
    pub actor_opt: OptimizerState<T>,
    pub critic_opt: OptimizerState<T>,
}

fn optimizer<T: Scalar>(store: &ParamStore<T>, lr: f64, clip: f64) -> OptimizerState<T> {
    let mut opt = OptimizerState::new(store.values(), T::c(lr));
    opt.clip_norm = Some(T::c(clip));
    opt
}

impl<T: Scalar> Agent<T> {
    pub fn new(cfg: &TrainConfig, obs: ObsShape, action_dim: usize, rng: &mut impl Rng) -> Self {
        let dims = ModelDims {
            obs,
            action: action_dim,
            deter: cfg.deter_size,
            stoch: cfg.stoch_size,
            hidden: cfg.hidden_size,
            embed: cfg.embed_size,
        };
        let model = WorldModel::new(dims, T::c(cfg.kl_weight), rng);
        let actor = Actor::new(dims.feature(), cfg.actor_hidden, action_dim, rng);
        let critic = Critic::new(dims.feature(), cfg.critic_hidden, rng);
        Self::assemble(model, actor, critic, cfg)
    }

    fn assemble(model: WorldModel<T>, actor: Actor<T>, critic: Critic<T>, cfg: &TrainConfig) -> Self {
        Self {
            model_opt: optimizer(&model.params, cfg.model_lr, cfg.clip_norm),
            actor_opt: optimizer(&actor.params, cfg.actor_lr, cfg.clip_norm),
            critic_opt: optimizer(&critic.params, cfg.critic_lr, cfg.clip_norm),
            model,
            actor,
            critic,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.model.dims
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        self.model.save(ck);
        self.actor.save(ck);
        self.critic.save(ck);
    }

    /// Restores the networks; optimizer states start fresh with the rates in
    /// `cfg`.
    pub fn load(ck: &Checkpoint, cfg: &TrainConfig) -> Result<Self> {
        let model = WorldModel::load(ck)?;
        let feature = model.dims.feature();
        let actor = Actor::load(ck, feature)?;
        let critic = Critic::load(ck, feature)?;
        if actor.action_dim != model.dims.action {
            return Err(Error::dim("checkpoint actor actions", model.dims.action, actor.action_dim));
        }
        Ok(Self::assemble(model, actor, critic, cfg))
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut ck = Checkpoint::new();
        self.save(&mut ck);
        ck.write(path)
    }

    pub fn read_checkpoint(path: &Path, cfg: &TrainConfig) -> Result<Self> {
        Self::load(&Checkpoint::read(path)?, cfg)
    }
}

/// Losses and diagnostics of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics<T> {
    pub model: ModelLossReport<T>,
    pub actor_loss: T,
    pub critic_loss: T,
    /// Critic regression targets, one per start state.
    pub targets: Vec<T>,
    /// Only for the dynamic-horizon estimator.
    pub mean_selected_horizon: Option<f64>,
    /// Per-state horizon selections, kept when horizon logging is on.
    pub selections: Vec<crate::horizon::HorizonSelection<T>>,
}

/// Contexts of every posterior state in `batch`, time-major: the state at
/// time `t` follows the state at `t − 1` (the zero state at `t = 0`).
pub fn posterior_context<T: Scalar>(
    model: &WorldModel<T>,
    batch: &SequenceBatch<T>,
    noise: &[Tensor<T>],
) -> Result<BatchContext<T>> {
    let mut g = Graph::new();
    let steps = model.observe_nodes(&mut g, batch, noise)?;
    let d = model.dims;
    let rows = batch.batch_size();
    let states: Vec<LatentBatch<T>> = steps.iter().map(|s| s.posterior.detach(&g)).collect();
    let mut prev = Vec::with_capacity(states.len());
    prev.push(LatentBatch::zeros(rows, d.deter, d.stoch));
    prev.extend(states[..states.len() - 1].iter().cloned());
    let stack = |parts: Vec<Tensor<T>>, cols: usize| {
        let data: Vec<T> = parts.into_iter().flat_map(Tensor::into_data).collect();
        Tensor::from_vec(data.len() / cols.max(1), cols, data).expect("consistent rows")
    };
    let prev_action = stack((0..batch.len()).map(|t| batch.prev_action(t)).collect(), d.action);
    Ok(BatchContext {
        prev: LatentBatch::stack(&prev),
        prev_action,
        state: LatentBatch::stack(&states),
        posterior_noise: stack(noise.to_vec(), d.stoch),
    })
}

/// Regression targets of the fixed-horizon and λ estimators from value
/// families.
fn family_targets<T: Scalar>(families: &[ValueFamily<T>], estimator: Estimator, lambda: T) -> Result<Vec<T>> {
    families
        .iter()
        .map(|f| match estimator {
            Estimator::MveLi => Ok(f.get(f.horizon())),
            Estimator::Lambda => lambda_return(f, lambda),
            Estimator::Dmve => Err(Error::InvalidArgument("dynamic horizon targets need a reconstruction".into())),
        })
        .collect()
}

fn step_params<T: Scalar>(g: &Graph<T>, loss: Var, store: &mut ParamStore<T>, opt: &mut OptimizerState<T>) -> Result<()> {
    let grads = g.backprop_params(loss, &[&*store])?.for_store(store);
    adam_step(store.values_mut(), &grads, opt)?;
    Ok(())
}

fn finite<T: Scalar>(what: &str, v: T, step: &str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} = {v} during {step}")))
    }
}

/// Value targets and the actor loss for a prepared batch. The actor loss and
/// targets come from one imagined rollout set.
#[allow(clippy::type_complexity)]
fn value_targets<T: Scalar>(
    agent: &Agent<T>,
    g: &mut Graph<T>,
    ctx: &BatchContext<T>,
    noise: &ImaginationNoise<T>,
    cfg: &TrainConfig,
) -> Result<(Var, Vec<T>, Option<f64>, Vec<crate::horizon::HorizonSelection<T>>)> {
    let gamma = T::c(cfg.discount);
    let (rollout, targets, msh, selections) = match cfg.estimator {
        Estimator::Dmve => {
            let est = estimate_batch(g, &agent.model, &agent.actor, &agent.critic, ctx, noise, cfg.top_k, gamma)?;
            let targets = est.selections.iter().map(|s| s.value).collect();
            let msh = est.mean_selected_horizon();
            (est.rollout, targets, Some(msh), est.selections)
        }
        other => {
            let start = ctx.state.to_nodes(g);
            let rollout = imagine_nodes(g, &agent.model, &agent.actor, &agent.critic, &start, noise)?;
            let families = rollout.families(g, gamma)?;
            let targets = family_targets(&families, other, T::c(cfg.lambda))?;
            (rollout, targets, None, Vec::new())
        }
    };
    let family = rollout.family_nodes(g, gamma)?;
    let loss = actor_loss(g, &family)?;
    Ok((loss, targets, msh, selections))
}

/// One model update followed by one actor and one critic update.
/// `rng` supplies the posterior and imagination noise.
pub fn train_step<T: Scalar>(
    agent: &mut Agent<T>,
    data: &mut ReplayDataset,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<StepMetrics<T>> {
    let d = agent.dims();
    let batch = data.sample::<T>(cfg.batch_size, cfg.seq_len)?;
    let post_noise = sequence_noise(rng, cfg.seq_len, cfg.batch_size, d.stoch);
    let model = agent.model.fit(&mut agent.model_opt, &batch, &post_noise)?;
    finite("model loss", model.total, "model update")?;

    // Start states come from the updated model.
    let ctx = posterior_context(&agent.model, &batch, &post_noise)?;
    let noise = ImaginationNoise::sample(rng, cfg.horizon, ctx.len(), d.action, d.stoch);

    let mut g = Graph::new();
    let (loss, targets, mean_selected_horizon, selections) = value_targets(agent, &mut g, &ctx, &noise, cfg)?;
    let actor_value = finite("actor loss", g.value(loss).item(), "actor update")?;
    if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("critic target = {t} during value estimation")));
    }
    step_params(&g, loss, &mut agent.actor.params, &mut agent.actor_opt)?;
    drop(g);

    let mut g = Graph::new();
    let start = ctx.state.to_nodes(&mut g);
    let loss = critic_loss(&mut g, &agent.critic, &start, &targets)?;
    let critic_value = finite("critic loss", g.value(loss).item(), "critic update")?;
    step_params(&g, loss, &mut agent.critic.params, &mut agent.critic_opt)?;

    Ok(StepMetrics {
        model,
        actor_loss: actor_value,
        critic_loss: critic_value,
        targets,
        mean_selected_horizon,
        selections: if cfg.log_horizons { selections } else { Vec::new() },
    })
}

/// How actions are chosen while interacting with the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionMode {
    /// Uniform on `[-1, 1]`, ignoring the agent.
    Random,
    /// Policy sample plus Gaussian noise of the given scale, clamped.
    Explore(f64),
    /// `tanh` of the policy mean.
    Greedy,
}

/// An episode together with the online posterior states the agent acted on.
#[derive(Debug, Clone)]
pub struct Collected<T> {
    pub episode: Episode,
    pub states: Vec<LatentState<T>>,
}

/// Runs one closed-loop episode from `env.reset(env_seed)`. The posterior is
/// tracked with zero posterior noise, i.e. at its mean.
pub fn collect_episode<T: Scalar, E: Env>(
    env: &mut E,
    agent: &Agent<T>,
    mode: ActionMode,
    env_seed: u64,
    rng: &mut impl Rng,
) -> Result<Collected<T>> {
    let d = agent.dims();
    let a_dim = env.action_dim();
    if a_dim != d.action {
        return Err(Error::dim("environment actions", d.action, a_dim));
    }
    let mut episode = Episode::new(env.name(), env.limit(), a_dim, env.obs_shape());
    let mut states = Vec::new();
    let mut obs = env.reset(env_seed);
    let mut prev = LatentState::zero(d.deter, d.stoch);
    let mut prev_action = vec![T::zero(); a_dim];
    let zero_noise = vec![T::zero(); d.stoch];
    while !env.is_done() {
        let action: Vec<f64> = match mode {
            ActionMode::Random => (0..a_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
            ActionMode::Explore(sigma) => {
                let s = agent.model.represent(&prev, &prev_action, &obs, &zero_noise)?;
                let eps: Vec<T> = (0..a_dim).map(|_| T::c(rng.sample(StandardNormal))).collect();
                let a = agent.actor.act(&s, Some(&eps))?;
                let a = a
                    .iter()
                    .map(|&x| {
                        let n: f64 = rng.sample(StandardNormal);
                        (x.as_f64() + sigma * n).clamp(-1.0, 1.0)
                    })
                    .collect();
                prev = s.clone();
                states.push(s);
                a
            }
            ActionMode::Greedy => {
                let s = agent.model.represent(&prev, &prev_action, &obs, &zero_noise)?;
                let a = agent.actor.act(&s, None)?;
                prev = s.clone();
                states.push(s);
                a.iter().map(|x| x.as_f64().clamp(-1.0, 1.0)).collect()
            }
        };
        let tr = env.step(&action)?;
        prev_action = action.iter().map(|&x| T::c(x)).collect();
        episode.push(action, obs, tr.reward)?;
        obs = tr.observation;
    }
    Ok(Collected { episode, states })
}

/// Undiscounted evaluation returns with their mean and population standard
/// deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl EvalReport {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            returns,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Seed of the `i`-th evaluation episode.
pub fn eval_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Greedy episodes on fresh environments seeded by [`eval_seed`].
pub fn evaluate<T: Scalar>(agent: &Agent<T>, env: &str, limit: usize, episodes: usize, seed: u64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let returns = (0..episodes)
        .map(|i| {
            let mut e = make_env(env, limit)?;
            let c = collect_episode(&mut e, agent, ActionMode::Greedy, eval_seed(seed, i), &mut rng)?;
            Ok(c.episode.total_reward())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_returns(returns))
}

/// One metrics CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub env_step: usize,
    pub train_step: usize,
    pub model_loss: f64,
    pub recon_loss: f64,
    pub reward_loss: f64,
    pub kl: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_selected_horizon: Option<f64>,
    pub eval: Option<(f64, f64)>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.env_step,
            self.train_step,
            self.model_loss,
            self.recon_loss,
            self.reward_loss,
            self.kl,
            self.actor_loss,
            self.critic_loss,
            opt(self.mean_selected_horizon),
            opt(self.eval.map(|e| e.0)),
            opt(self.eval.map(|e| e.1)),
        )
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{METRICS_CSV_HEADER}")?;
        for r in rows {
            writeln!(out, "{}", r.to_csv())?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary<T: Scalar> {
    pub agent: Agent<T>,
    pub metrics: Vec<MetricsRow>,
    /// `(env_step, report)` for every evaluation.
    pub evals: Vec<(usize, EvalReport)>,
    pub env_steps: usize,
    pub dataset_episodes: usize,
    pub seed_return: f64,
}

impl<T: Scalar> RunSummary<T> {
    pub fn train_steps(&self) -> usize {
        self.metrics.len()
    }

    pub fn final_eval(&self) -> Option<&EvalReport> {
        self.evals.last().map(|e| &e.1)
    }

    /// Mean of the logged per-step mean selected horizons.
    pub fn mean_selected_horizon(&self) -> Option<f64> {
        let v: Vec<f64> = self.metrics.iter().filter_map(|m| m.mean_selected_horizon).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Files a run writes into its output directory.
pub struct RunPaths {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub config: PathBuf,
    pub horizons: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            metrics: dir.join("metrics.csv"),
            checkpoint: dir.join("final.ckpt"),
            config: dir.join("config.txt"),
            horizons: dir.join("horizons.csv"),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seeds the dataset with random episodes, then alternates
/// `collect_interval` train steps with one exploration episode until the
/// environment-step budget (seed episodes included) is spent. Evaluates every
/// `eval_interval` environment steps and at the end. When `out` is given,
/// artifacts are written there; metrics gathered so far are flushed on error.
pub fn run_training<T: Scalar>(cfg: &TrainConfig, out: Option<&Path>) -> Result<RunSummary<T>> {
    cfg.validate()?;
    let paths = out.map(RunPaths::new);
    if let (Some(dir), Some(p)) = (out, &paths) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(&p.config, cfg.to_text()).map_err(|e| Error::io(&p.config, e))?;
    }
    let mut metrics = Vec::new();
    let result = train_loop::<T>(cfg, paths.as_ref(), &mut metrics);
    if let Some(p) = &paths {
        write_metrics_csv(&p.metrics, &metrics)?;
    }
    let mut summary = result?;
    summary.metrics = metrics;
    if let Some(p) = &paths {
        summary.agent.write_checkpoint(&p.checkpoint)?;
    }
    Ok(summary)
}

fn train_loop<T: Scalar>(cfg: &TrainConfig, paths: Option<&RunPaths>, metrics: &mut Vec<MetricsRow>) -> Result<RunSummary<T>> {
    let mut env = make_env(&cfg.env, cfg.episode_limit)?;
    let mut init_rng = stream(cfg.seed, 1);
    let mut noise_rng = stream(cfg.seed, 2);
    let mut act_rng = stream(cfg.seed, 3);
    let mut env_seeds = stream(cfg.seed, 4);
    let mut agent = Agent::<T>::new(cfg, env.obs_shape(), env.action_dim(), &mut init_rng);
    let mut data = ReplayDataset::new(cfg.dataset_capacity, cfg.seed.wrapping_add(0x5eed));

    let mut horizons = match paths {
        Some(p) if cfg.log_horizons && cfg.estimator == Estimator::Dmve => {
            let f = File::create(&p.horizons).map_err(|e| Error::io(&p.horizons, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{HORIZON_CSV_HEADER}").map_err(|e| Error::io(&p.horizons, e))?;
            Some((w, p.horizons.clone()))
        }
        _ => None,
    };

    let mut env_steps = 0;
    let mut seed_total = 0.0;
    for _ in 0..cfg.seed_episodes {
        let c = collect_episode(&mut env, &agent, ActionMode::Random, env_seeds.gen(), &mut act_rng)?;
        env_steps += c.episode.len();
        seed_total += c.episode.total_reward();
        data.push(c.episode);
    }
    let seed_return = seed_total / cfg.seed_episodes as f64;

    let eval_seed_base = cfg.seed.wrapping_add(10_007);
    let mut evals: Vec<(usize, EvalReport)> = Vec::new();
    let mut next_eval = cfg.eval_interval;
    let eval_at = |agent: &Agent<T>, env_steps, metrics: &mut Vec<MetricsRow>, evals: &mut Vec<(usize, EvalReport)>| -> Result<()> {
        let report = evaluate(agent, &cfg.env, cfg.episode_limit, cfg.eval_episodes, eval_seed_base)?;
        if let Some(row) = metrics.last_mut() {
            row.eval = Some((report.mean, report.std));
        }
        evals.push((env_steps, report));
        Ok(())
    };

    while env_steps < cfg.total_env_steps {
        for _ in 0..cfg.collect_interval {
            let m = train_step(&mut agent, &mut data, cfg, &mut noise_rng)?;
            let train_step = metrics.len();
            if let Some((w, path)) = horizons.as_mut() {
                write_horizon_csv(w, train_step, &m.selections).map_err(|e| Error::io(path.clone(), e))?;
            }
            metrics.push(MetricsRow {
                env_step: env_steps,
                train_step,
                model_loss: m.model.total.as_f64(),
                recon_loss: m.model.reconstruction.as_f64(),
                reward_loss: m.model.reward.as_f64(),
                kl: m.model.kl.as_f64(),
                actor_loss: m.actor_loss.as_f64(),
                critic_loss: m.critic_loss.as_f64(),
                mean_selected_horizon: m.mean_selected_horizon,
                eval: None,
            });
        }
        let c = collect_episode(
            &mut env,
            &agent,
            ActionMode::Explore(cfg.explore_noise),
            env_seeds.gen(),
            &mut act_rng,
        )?;
        env_steps += c.episode.len();
        data.push(c.episode);
        if env_steps >= next_eval {
            eval_at(&agent, env_steps, metrics, &mut evals)?;
            while next_eval <= env_steps {
                next_eval += cfg.eval_interval;
            }
        }
    }
    if evals.last().map(|e| e.0) != Some(env_steps) {
        eval_at(&agent, env_steps, metrics, &mut evals)?;
    }
    if let Some((mut w, path)) = horizons {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(RunSummary {
        agent,
        metrics: Vec::new(),
        evals,
        env_steps,
        dataset_episodes: data.len(),
        seed_return,
    })
}
