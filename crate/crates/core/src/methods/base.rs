use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FitReport, Hyperparameters, Method, ReplayBuffer, SettingDescription};
use crate::envsim::{ActionSpace, Environment, Observation};
use crate::error::{Error, Result};
use crate::learners::{
    argmax, epsilon_greedy, fisher_diagonal, sgd_step, softmax, DenseNet, NamedTensor, QTable,
    StateKey,
};
use crate::rng::{self, StreamRng};
use crate::taxonomy::{Branch, MethodDescriptor};

/// Consolidated snapshot of a finished task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EwcAnchor {
    /// Network parameters and their diagonal Fisher, laid out like
    /// [`DenseNet::params_flat`].
    Net { params: Vec<f64>, fisher: Vec<f64> },
    /// Q-tables at the switch; an entry's weight grows with its visit count.
    Tables { tables: Vec<QTable> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Backbone {
    Net(DenseNet),
    Tables(Vec<QTable>),
}

/// Passive-branch training item in logit space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SlItem {
    x: Vec<f64>,
    target: usize,
    logits: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Transition {
    head: usize,
    s: StateKey,
    a: usize,
    r: f64,
    next: StateKey,
    done: bool,
}

/// Where a prediction for one observation is read from.
#[derive(Debug, Clone)]
struct Readout {
    head: usize,
    logits: Range<usize>,
    /// Action corresponding to `logits.start`.
    action_offset: usize,
}

/// Fine-tuning learner with optional multi-head output, task inference, EWC
/// and replay. Passive settings train a [`DenseNet`]; active settings train
/// one [`QTable`] per head.
#[derive(Debug, Clone)]
pub struct BaseMethod {
    descriptor: MethodDescriptor,
    hp: Hyperparameters,
    setting: SettingDescription,
    backbone: Backbone,
    num_heads: usize,
    head_width: usize,
    multi_head: bool,
    trained: Vec<bool>,
    current_head: usize,
    ewc: Vec<EwcAnchor>,
    retained: VecDeque<SlItem>,
    sl_replay: Option<ReplayBuffer<SlItem>>,
    rl_replay: Option<ReplayBuffer<Transition>>,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
    updates: u64,
}

/// Serializable state of a [`BaseMethod`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub descriptor: MethodDescriptor,
    pub hyperparameters: Hyperparameters,
    pub setting: SettingDescription,
    pub network: Option<BTreeMap<String, NamedTensor>>,
    pub tables: Option<Vec<QTable>>,
    pub trained: Vec<bool>,
    pub current_head: usize,
    pub ewc: Vec<EwcAnchor>,
    retained: VecDeque<SlItem>,
    sl_replay: Option<ReplayBuffer<SlItem>>,
    rl_replay: Option<ReplayBuffer<Transition>>,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
    pub updates: u64,
}

impl BaseMethod {
    pub fn new(descriptor: MethodDescriptor, setting: &SettingDescription, seed: u64) -> Result<Self> {
        let branch = setting.assumptions.branch;
        let hp = Hyperparameters::resolve(&descriptor.name, branch, &descriptor.hyperparameters)?;
        let exposes_task = setting.task_observed() || hp.task_inference;
        let multi_head = hp.multi_head.unwrap_or(exposes_task);
        if multi_head && !exposes_task {
            return Err(Error::malformed(
                "hyperparameters.multi_head",
                "multi-head needs observed task labels or task_inference",
            ));
        }
        if hp.task_inference && !multi_head {
            return Err(Error::malformed("hyperparameters.task_inference", "requires multi-head output"));
        }
        let space = setting.action_space;
        let num_heads = if multi_head { setting.num_tasks.max(1) } else { 1 };
        let head_width = if multi_head { space.block.unwrap_or(space.n) } else { space.n };

        let backbone = match branch {
            Branch::Passive => {
                let mut sizes = vec![setting.observation_dim];
                sizes.extend(std::iter::repeat_n(hp.hidden_width, hp.hidden_layers));
                sizes.push(num_heads * head_width);
                let mut init = rng::stream(seed, "init", 0);
                Backbone::Net(DenseNet::new(&sizes, hp.activation, &mut init)?)
            }
            Branch::Active => {
                let disc = setting
                    .discretizer
                    .clone()
                    .ok_or_else(|| Error::Config("active settings need a state discretizer".into()))?;
                Backbone::Tables(vec![QTable::new(space.n, disc); num_heads])
            }
            Branch::Unspecified => return Err(Error::AbstractSetting(setting.name.clone())),
        };
        let sl_replay = (branch == Branch::Passive && hp.replay_capacity > 0)
            .then(|| ReplayBuffer::new(hp.replay_capacity))
            .transpose()?;
        let rl_replay = (branch == Branch::Active && hp.replay_capacity > 0)
            .then(|| ReplayBuffer::new(hp.replay_capacity))
            .transpose()?;
        let mut descriptor = descriptor;
        descriptor.hyperparameters = hp.to_map();
        Ok(BaseMethod {
            descriptor,
            setting: setting.clone(),
            backbone,
            num_heads,
            head_width,
            multi_head,
            trained: vec![false; num_heads],
            current_head: 0,
            ewc: Vec::new(),
            retained: VecDeque::new(),
            sl_replay,
            rl_replay,
            explore_rng: rng::stream(seed, "explore", 0),
            replay_rng: rng::stream(seed, "replay", 0),
            updates: 0,
            hp,
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn is_multi_head(&self) -> bool {
        self.multi_head
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn head_width(&self) -> usize {
        self.head_width
    }

    pub fn network(&self) -> Option<&DenseNet> {
        match &self.backbone {
            Backbone::Net(n) => Some(n),
            Backbone::Tables(_) => None,
        }
    }

    pub fn network_mut(&mut self) -> Option<&mut DenseNet> {
        match &mut self.backbone {
            Backbone::Net(n) => Some(n),
            Backbone::Tables(_) => None,
        }
    }

    pub fn tables(&self) -> Option<&[QTable]> {
        match &self.backbone {
            Backbone::Tables(t) => Some(t),
            Backbone::Net(_) => None,
        }
    }

    pub fn ewc_anchors(&self) -> &[EwcAnchor] {
        &self.ewc
    }

    pub fn replay_len(&self) -> usize {
        self.sl_replay.as_ref().map_or(0, |b| b.len()) + self.rl_replay.as_ref().map_or(0, |b| b.len())
    }

    pub fn trained_heads(&self) -> &[bool] {
        &self.trained
    }

    pub fn current_head(&self) -> usize {
        self.current_head
    }

    fn check_head(&self, t: usize) -> Result<usize> {
        if t >= self.num_heads {
            return Err(Error::Method(format!("task id {t} outside {} heads", self.num_heads)));
        }
        Ok(t)
    }

    fn train_head(&self, obs: &Observation) -> Result<usize> {
        if !self.multi_head {
            return Ok(0);
        }
        match obs.task_id {
            Some(t) => self.check_head(t),
            None => Ok(self.current_head),
        }
    }

    fn test_head(&self, obs: &Observation) -> Result<usize> {
        if !self.multi_head {
            return Ok(0);
        }
        match obs.task_id {
            Some(t) => self.check_head(t),
            None if self.hp.task_inference => self.infer_task(&obs.x),
            None => Err(Error::Method("observation lacks task_id in multi-head mode".into())),
        }
    }

    fn readout(&self, head: usize, obs: &Observation, space: &ActionSpace) -> Readout {
        if self.multi_head {
            let start = head * self.head_width;
            Readout {
                head,
                logits: start..start + self.head_width,
                action_offset: space.task_range(head).start,
            }
        } else {
            let mask = match (space.block, obs.task_id) {
                (Some(_), Some(t)) => space.task_range(t),
                _ => 0..space.n,
            };
            Readout {
                head,
                action_offset: mask.start,
                logits: mask,
            }
        }
    }

    /// Head with minimum predictive entropy on `x` among trained heads.
    pub fn infer_task(&self, x: &[f64]) -> Result<usize> {
        let scores: Vec<Vec<f64>> = match &self.backbone {
            Backbone::Net(net) => {
                let logits = net.forward_one(x)?;
                (0..self.num_heads)
                    .map(|h| logits[h * self.head_width..(h + 1) * self.head_width].to_vec())
                    .collect()
            }
            Backbone::Tables(tables) => {
                let s = tables[0].key(x)?;
                tables.iter().map(|t| t.values(&s)).collect()
            }
        };
        let mut best: Option<(usize, f64)> = None;
        for (h, z) in scores.iter().enumerate() {
            if !self.trained[h] {
                continue;
            }
            let e = entropy(&softmax(z));
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((h, e));
            }
        }
        best.map(|(h, _)| h)
            .ok_or_else(|| Error::Method("task inference needs at least one trained head".into()))
    }

    fn act(&self, obs: &Observation, space: &ActionSpace) -> Result<usize> {
        let head = self.test_head(obs)?;
        let r = self.readout(head, obs, space);
        match &self.backbone {
            Backbone::Net(net) => {
                let logits = net.forward_one(&obs.x)?;
                Ok(r.action_offset + argmax(&logits[r.logits]))
            }
            Backbone::Tables(tables) => {
                let t = &tables[r.head];
                Ok(argmax(&t.values(&t.key(&obs.x)?)))
            }
        }
    }

    fn fit_passive(&mut self, train: &mut dyn Environment) -> Result<u64> {
        let space = train.action_space();
        let mut steps = 0;
        for epoch in 0..self.hp.epochs_per_task {
            let mut obs = train.reset()?;
            let mut batch = Vec::with_capacity(self.hp.batch_size);
            while !obs.episode_done {
                let head = self.train_head(&obs)?;
                let r = self.readout(head, &obs, &space);
                let logits = self.network().expect("passive backbone").forward_one(&obs.x)?;
                let action = r.action_offset + argmax(&logits[r.logits.clone()]);
                let (next, fb) = train.step(action)?;
                let label = fb
                    .label
                    .ok_or_else(|| Error::Env("passive environment returned no label".into()))?;
                let target = (r.logits.start + label)
                    .checked_sub(r.action_offset)
                    .filter(|t| r.logits.contains(t))
                    .ok_or(Error::LabelOutOfRange {
                        label,
                        start: r.action_offset,
                        end: r.action_offset + r.logits.len(),
                    })?;
                let item = SlItem {
                    x: std::mem::take(&mut obs.x),
                    target,
                    logits: r.logits,
                };
                self.trained[head] = true;
                if epoch == 0 {
                    if let Some(buf) = &mut self.sl_replay {
                        buf.insert(item.clone(), &mut self.replay_rng);
                    }
                    if self.hp.ewc_lambda > 0.0 {
                        if self.retained.len() == self.hp.ewc_samples {
                            self.retained.pop_front();
                        }
                        self.retained.push_back(item.clone());
                    }
                }
                batch.push(item);
                steps += 1;
                if batch.len() == self.hp.batch_size {
                    self.sgd_batch(&batch)?;
                    batch.clear();
                }
                obs = next;
            }
            if !batch.is_empty() {
                self.sgd_batch(&batch)?;
            }
        }
        Ok(steps)
    }

    fn sgd_batch(&mut self, batch: &[SlItem]) -> Result<()> {
        let (x, targets, heads) = stack(batch)?;
        let Backbone::Net(net) = &mut self.backbone else {
            unreachable!("passive backbone")
        };
        let (_, mut grads) = net.backward_ce(x.view(), &targets, Some(&heads))?;
        if let Some(buf) = &self.sl_replay {
            if !buf.is_empty() {
                let n = batch.len().min(buf.len());
                let replayed: Vec<SlItem> = buf.sample(n, &mut self.replay_rng)?.into_iter().cloned().collect();
                let (rx, rt, rh) = stack(&replayed)?;
                let (_, g) = net.backward_ce(rx.view(), &rt, Some(&rh))?;
                grads.add_scaled(&g, 1.0);
            }
        }
        if self.hp.ewc_lambda > 0.0 && !self.ewc.is_empty() {
            let theta = net.params_flat();
            let mut pull = vec![0.0; theta.len()];
            for anchor in &self.ewc {
                if let EwcAnchor::Net { params, fisher } = anchor {
                    for i in 0..theta.len() {
                        pull[i] += self.hp.ewc_lambda * fisher[i] * (theta[i] - params[i]);
                    }
                }
            }
            grads.add_flat(&pull);
        }
        sgd_step(net, &grads, self.hp.lr)?;
        self.updates += 1;
        Ok(())
    }

    fn fit_active(&mut self, train: &mut dyn Environment) -> Result<u64> {
        let space = train.action_space();
        let phase_len = self.setting.phase_len;
        let mut steps = 0usize;
        while !train.is_exhausted() {
            let mut obs = train.reset()?;
            while !obs.episode_done {
                let head = self.train_head(&obs)?;
                let Backbone::Tables(tables) = &self.backbone else {
                    unreachable!("active backbone")
                };
                let s = tables[head].key(&obs.x)?;
                let eps = self.hp.epsilon_at(steps, phase_len);
                let a = epsilon_greedy(&tables[head].values(&s), eps, &mut self.explore_rng);
                if a >= space.n {
                    return Err(Error::Method(format!("action {a} outside the action space")));
                }
                let (next, fb) = train.step(a)?;
                let t = Transition {
                    head,
                    next: tables[head].key(&next.x)?,
                    s,
                    a,
                    r: fb.reward,
                    done: next.episode_done,
                };
                self.q_learn(&t)?;
                self.trained[head] = true;
                if let Some(buf) = &mut self.rl_replay {
                    buf.insert(t, &mut self.replay_rng);
                    let replayed = buf.sample(1, &mut self.replay_rng)?[0].clone();
                    self.q_learn(&replayed)?;
                }
                steps += 1;
                obs = next;
            }
        }
        Ok(steps as u64)
    }

    fn q_learn(&mut self, t: &Transition) -> Result<()> {
        let Backbone::Tables(tables) = &mut self.backbone else {
            unreachable!("active backbone")
        };
        let table = &mut tables[t.head];
        table.q_update(&t.s, t.a, t.r, &t.next, t.done, self.hp.lr, self.hp.gamma)?;
        self.updates += 1;
        if self.hp.ewc_lambda > 0.0 {
            for anchor in &self.ewc {
                let EwcAnchor::Tables { tables: anchored } = anchor else {
                    continue;
                };
                let old = anchored[t.head].entry(&t.s, t.a);
                if old.count == 0 {
                    continue;
                }
                let weight = old.count as f64 / (old.count as f64 + self.hp.ewc_count_scale);
                let step = (self.hp.lr * self.hp.ewc_lambda * weight).min(1.0);
                let q = table.entry_mut(&t.s, t.a);
                q.value -= step * (q.value - old.value);
            }
        }
        Ok(())
    }

    /// Greedy performance on `valid`: mean reward per step (passive) or mean
    /// return of completed episodes (active).
    fn validate(&self, valid: &mut dyn Environment) -> Result<Option<f64>> {
        let space = valid.action_space();
        match self.setting.assumptions.branch {
            Branch::Passive => {
                let mut obs = valid.reset()?;
                let (mut total, mut n) = (0.0, 0usize);
                while !obs.episode_done {
                    let a = self.act(&obs, &space)?;
                    let (next, fb) = valid.step(a)?;
                    total += fb.reward;
                    n += 1;
                    obs = next;
                }
                Ok((n > 0).then(|| total / n as f64))
            }
            _ => {
                let mut returns = Vec::new();
                while !valid.is_exhausted() {
                    let mut obs = valid.reset()?;
                    let mut ret = 0.0;
                    while !obs.episode_done {
                        let (next, fb) = valid.step(self.act(&obs, &space)?)?;
                        ret += fb.reward;
                        obs = next;
                    }
                    if !valid.is_exhausted() {
                        returns.push(ret);
                    }
                }
                Ok((!returns.is_empty()).then(|| returns.iter().sum::<f64>() / returns.len() as f64))
            }
        }
    }

    fn consolidate(&mut self) -> Result<()> {
        match &self.backbone {
            Backbone::Net(net) => {
                if self.retained.is_empty() {
                    return Ok(());
                }
                let items: Vec<SlItem> = self.retained.drain(..).collect();
                let (x, _, heads) = stack(&items)?;
                let fisher = fisher_diagonal(net, x.view(), Some(&heads))?;
                self.ewc.push(EwcAnchor::Net {
                    params: net.params_flat(),
                    fisher,
                });
            }
            Backbone::Tables(tables) => {
                if tables.iter().all(|t| t.is_empty()) {
                    return Ok(());
                }
                self.ewc.push(EwcAnchor::Tables { tables: tables.clone() });
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let (network, tables) = match &self.backbone {
            Backbone::Net(n) => (Some(n.to_named_tensors()), None),
            Backbone::Tables(t) => (None, Some(t.clone())),
        };
        Checkpoint {
            descriptor: self.descriptor.clone(),
            hyperparameters: self.hp.clone(),
            setting: self.setting.clone(),
            network,
            tables,
            trained: self.trained.clone(),
            current_head: self.current_head,
            ewc: self.ewc.clone(),
            retained: self.retained.clone(),
            sl_replay: self.sl_replay.clone(),
            rl_replay: self.rl_replay.clone(),
            explore_rng: self.explore_rng.clone(),
            replay_rng: self.replay_rng.clone(),
            updates: self.updates,
        }
    }

    pub fn restore(cp: Checkpoint) -> Result<Self> {
        // Rebuild the layout from the configuration, then install the state.
        let mut m = BaseMethod::new(cp.descriptor.clone(), &cp.setting, 0)?;
        m.backbone = match (cp.network, cp.tables) {
            (Some(tensors), None) => {
                let net = DenseNet::from_named_tensors(&tensors, cp.hyperparameters.activation)?;
                if net.sizes() != m.network().map(|n| n.sizes()).unwrap_or_default() {
                    return Err(Error::Shape("checkpoint network does not match the setting".into()));
                }
                Backbone::Net(net)
            }
            (None, Some(tables)) if tables.len() == m.num_heads => Backbone::Tables(tables),
            _ => return Err(Error::Shape("checkpoint backbone does not match the setting".into())),
        };
        if cp.trained.len() != m.num_heads {
            return Err(Error::Shape("checkpoint head count does not match the setting".into()));
        }
        m.trained = cp.trained;
        m.current_head = cp.current_head;
        m.ewc = cp.ewc;
        m.retained = cp.retained;
        m.sl_replay = cp.sl_replay;
        m.rl_replay = cp.rl_replay;
        m.explore_rng = cp.explore_rng;
        m.replay_rng = cp.replay_rng;
        m.updates = cp.updates;
        Ok(m)
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>()
}

fn stack(items: &[SlItem]) -> Result<(Array2<f64>, Vec<usize>, Vec<Range<usize>>)> {
    let dim = items.first().map_or(0, |i| i.x.len());
    let flat: Vec<f64> = items.iter().flat_map(|i| i.x.iter().copied()).collect();
    let x = Array2::from_shape_vec((items.len(), dim), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((
        x,
        items.iter().map(|i| i.target).collect(),
        items.iter().map(|i| i.logits.clone()).collect(),
    ))
}

impl Method for BaseMethod {
    fn descriptor(&self) -> &MethodDescriptor {
        &self.descriptor
    }

    fn fit(&mut self, train: &mut dyn Environment, valid: &mut dyn Environment) -> Result<FitReport> {
        let before = self.updates;
        let steps = match self.setting.assumptions.branch {
            Branch::Passive => self.fit_passive(train)?,
            _ => self.fit_active(train)?,
        };
        let updates = self.updates - before;
        let validation = self.validate(valid)?;
        Ok(FitReport {
            steps,
            updates,
            validation,
        })
    }

    fn get_actions(&mut self, observations: &[Observation], action_space: &ActionSpace) -> Result<Vec<usize>> {
        if action_space.n != self.setting.action_space.n {
            return Err(Error::Shape(format!(
                "action space of size {} differs from the configured {}",
                action_space.n, self.setting.action_space.n
            )));
        }
        observations.iter().map(|o| self.act(o, action_space)).collect()
    }

    fn on_task_switch(&mut self, task_id: Option<usize>) -> Result<()> {
        if self.hp.ewc_lambda > 0.0 {
            self.consolidate()?;
        }
        if self.multi_head {
            self.current_head = match task_id {
                Some(t) => self.check_head(t)?,
                None => (self.current_head + 1).min(self.num_heads - 1),
            };
        }
        Ok(())
    }

    fn update_count(&self) -> u64 {
        self.updates
    }
}
