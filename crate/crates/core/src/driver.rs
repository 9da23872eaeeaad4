//! The multi-task generation loop, final strategy choice and inference.
//!
//! Each generation first builds external neighborhoods from all task
//! populations (a barrier), then every task independently breeds `N`
//! offspring, refines their weights with batch DE, evaluates them and
//! selects survivors from parents plus offspring. Tasks own independent
//! random streams derived from the run seed, so the thread schedule has no
//! effect on the result.

use std::sync::Arc;

use rayon::prelude::*;

use crate::enm::{build_neighborhoods, NeighborhoodMap};
use crate::error::{Error, Result};
use crate::fusion::fuse_genotype;
use crate::model::{
    pool_size, random_genotype, FeatureMatrix, FusionGene, FusionOp, Genotype,
    Individual, ObjectiveVector, Split, TaskDescriptor, TaskPopulation,
};
use crate::nsga3::{nondominated_sort, Nsga3Selector, Selector};
use crate::proxy::{evaluate_individual, ProxyConfig};
use crate::rng::{self, Stream};
use crate::variation::{batch_de, generate_offspring, EvoConfig};

/// Everything the optimizer needs about one task.
#[derive(Clone, Debug)]
pub struct TaskData {
    pub descriptor: TaskDescriptor,
    pub pool: Vec<FeatureMatrix>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl TaskData {
    pub fn feature_dim(&self) -> usize {
        self.pool.first().map_or(0, FeatureMatrix::cols)
    }

    /// Checks pool shapes, labels and the split against each other.
    pub fn validate(&self, task_count: usize) -> Result<()> {
        let name = &self.descriptor.name;
        let expected = pool_size(task_count);
        if self.pool.len() != expected {
            return Err(Error::Config(format!(
                "task {name}: pool has {} entries, expected {expected}",
                self.pool.len()
            )));
        }
        let shape = self.pool[0].shape();
        if let Some((k, m)) = self.pool.iter().enumerate().find(|(_, m)| m.shape() != shape) {
            return Err(Error::Shape(format!(
                "task {name}: pool entry {k} is {:?}, entry 0 is {shape:?}",
                m.shape()
            )));
        }
        if self.labels.len() != shape.0 {
            return Err(Error::LengthMismatch {
                left: shape.0,
                right: self.labels.len(),
            });
        }
        crate::metrics::check_labels(self.labels.len(), &self.labels)?;
        let in_range = |v: &[usize]| v.iter().all(|&i| i < shape.0);
        if !self.split.is_disjoint() || !in_range(&self.split.train) || !in_range(&self.split.validation) {
            return Err(Error::Config(format!("task {name}: invalid train/validation split")));
        }
        let count = |rows: &[usize]| rows.iter().filter(|&&i| self.labels[i] == 1).count();
        if count(&self.split.validation) == 0 {
            return Err(Error::Config(format!(
                "task {name}: validation split has no positive labels"
            )));
        }
        let train_pos = count(&self.split.train);
        if train_pos == 0 || train_pos == self.split.train.len() {
            return Err(Error::Config(format!(
                "task {name}: training split needs both classes"
            )));
        }
        Ok(())
    }
}

/// Population statistics after one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_g1: f64,
    pub best_g2: f64,
    pub mean_g1: f64,
    /// Neighborhood-sourced second parents, indexed by source task.
    pub transfers: Vec<usize>,
}

impl GenerationStats {
    fn of(generation: usize, pop: &TaskPopulation, transfers: Vec<usize>) -> Self {
        let objs: Vec<ObjectiveVector> = pop.members.iter().map(|m| m.objectives_or_worst()).collect();
        GenerationStats {
            generation,
            best_g1: objs.iter().map(|o| o.g1).fold(f64::INFINITY, f64::min),
            best_g2: objs.iter().map(|o| o.g2).fold(f64::INFINITY, f64::min),
            mean_g1: objs.iter().map(|o| o.g1).sum::<f64>() / objs.len().max(1) as f64,
            transfers,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskResult {
    pub descriptor: TaskDescriptor,
    /// Non-dominated members of the final population, ordered by id.
    pub pareto: Vec<Individual>,
    pub selected: Individual,
    pub initial: GenerationStats,
    /// One entry per generation `1..=G_max`.
    pub history: Vec<GenerationStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub tasks: Vec<TaskResult>,
}

/// Switches for ablations.
pub struct RunOptions {
    /// Build external neighborhoods; when off no transfer can happen.
    pub enm: bool,
    /// Survivor selection; NSGA-III sized to the population when `None`.
    pub selector: Option<Box<dyn Selector>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            enm: true,
            selector: None,
        }
    }
}

struct TaskState {
    pop: TaskPopulation,
    rng: Stream,
    next_id: u64,
}

impl TaskState {
    fn fresh_id(&mut self) -> u64 {
        let id = ((self.pop.task as u64) << 32) | self.next_id;
        self.next_id += 1;
        id
    }
}

fn evaluate_batch(genotypes: Vec<(u64, Genotype)>, task: &TaskData, proxy: &ProxyConfig) -> Vec<Individual> {
    genotypes
        .into_par_iter()
        .map(|(id, g)| {
            let mut ind = Individual::new(id, task.descriptor.position, g);
            evaluate_individual(&mut ind, &task.pool, &task.labels, &task.split, proxy);
            ind
        })
        .collect()
}

pub fn run_mtga(tasks: &[TaskData], cfg: &EvoConfig, proxy: &ProxyConfig) -> Result<RunResult> {
    run_mtga_with(tasks, cfg, proxy, RunOptions::default())
}

pub fn run_mtga_with(
    tasks: &[TaskData],
    cfg: &EvoConfig,
    proxy: &ProxyConfig,
    options: RunOptions,
) -> Result<RunResult> {
    if tasks.is_empty() {
        return Err(Error::Config("at least one task is required".into()));
    }
    cfg.validate()?;
    proxy.validate()?;
    let t_count = tasks.len();
    for (t, task) in tasks.iter().enumerate() {
        if task.descriptor.position != t {
            return Err(Error::Config(format!(
                "task {} sits at slot {t} but has position {}",
                task.descriptor.name, task.descriptor.position
            )));
        }
        task.validate(t_count)?;
    }
    let pool = pool_size(t_count);
    let n = cfg.population_size;
    let selector: Box<dyn Selector> = options
        .selector
        .unwrap_or_else(|| Box::new(Nsga3Selector::for_population(n)));

    let mut states: Vec<TaskState> = tasks
        .par_iter()
        .map(|task| {
            let t = task.descriptor.position;
            let mut state = TaskState {
                pop: TaskPopulation::new(t, Vec::new()),
                rng: rng::derived(cfg.seed, t as u64),
                next_id: 0,
            };
            let genotypes: Vec<(u64, Genotype)> = (0..n)
                .map(|_| {
                    let g = random_genotype(&mut state.rng, pool, cfg.max_feature_length);
                    (state.fresh_id(), g)
                })
                .collect();
            state.pop.members = evaluate_batch(genotypes, task, proxy);
            state
        })
        .collect();

    let initial: Vec<GenerationStats> = states
        .iter()
        .map(|s| GenerationStats::of(0, &s.pop, vec![0; t_count]))
        .collect();
    let mut history: Vec<Vec<GenerationStats>> = vec![Vec::with_capacity(cfg.generations); t_count];

    for generation in 1..=cfg.generations {
        let hoods = if options.enm && t_count > 1 {
            let pops: Vec<TaskPopulation> = states.iter().map(|s| s.pop.clone()).collect();
            build_neighborhoods(&pops, cfg, pool)
        } else {
            NeighborhoodMap::empty(t_count)
        };
        let step_cfg = if options.enm {
            cfg.clone()
        } else {
            EvoConfig {
                transfer_prob: 0.0,
                ..cfg.clone()
            }
        };
        let stats: Vec<Result<GenerationStats>> = states
            .par_iter_mut()
            .zip(tasks.par_iter())
            .map(|(state, task)| {
                step_task(state, task, &hoods, &step_cfg, proxy, selector.as_ref(), pool, t_count, generation)
            })
            .collect();
        for (t, s) in stats.into_iter().enumerate() {
            history[t].push(s?);
        }
    }

    let results = states
        .into_iter()
        .zip(tasks)
        .zip(initial.into_iter().zip(history))
        .map(|((state, task), (initial, history))| {
            let pareto = pareto_members(&state.pop.members);
            let selected = select_strategy(&pareto)?.clone();
            Ok(TaskResult {
                descriptor: task.descriptor.clone(),
                pareto,
                selected,
                initial,
                history,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult { tasks: results })
}

#[allow(clippy::too_many_arguments)]
fn step_task(
    state: &mut TaskState,
    task: &TaskData,
    hoods: &NeighborhoodMap,
    cfg: &EvoConfig,
    proxy: &ProxyConfig,
    selector: &dyn Selector,
    pool: usize,
    t_count: usize,
    generation: usize,
) -> Result<GenerationStats> {
    let t = task.descriptor.position;
    let n = cfg.population_size;
    let task_hoods = hoods.per_task.get(t);
    let mut transfers = vec![0usize; t_count];
    let mut children = Vec::with_capacity(n);
    for _ in 0..n {
        let o = generate_offspring(&state.pop, task_hoods, cfg, pool, &mut state.rng)?;
        if let Some(src) = o.transfer_source {
            transfers[src] += 1;
        }
        children.push(o.genotype);
    }
    let best = state.pop.best().ok_or(Error::EmptyPopulation)?.genotype.clone();
    let children = batch_de(children, &best, cfg, &mut state.rng);
    let batch: Vec<(u64, Genotype)> = children.into_iter().map(|g| (state.fresh_id(), g)).collect();
    let offspring = evaluate_batch(batch, task, proxy);

    let mut union = std::mem::take(&mut state.pop.members);
    union.extend(offspring);
    state.pop.members = selector.select(union, n, &mut state.rng)?;
    Ok(GenerationStats::of(generation, &state.pop, transfers))
}

/// First non-dominated front, ordered by id.
pub fn pareto_members(members: &[Individual]) -> Vec<Individual> {
    if members.is_empty() {
        return Vec::new();
    }
    let objs: Vec<ObjectiveVector> = members.iter().map(|m| m.objectives_or_worst()).collect();
    let mut front: Vec<Individual> = nondominated_sort(&objs)[0]
        .iter()
        .map(|&i| members[i].clone())
        .collect();
    front.sort_by_key(|m| m.id);
    front
}

/// Lowest `g1`; ties broken by `g2`, then genotype length, then id.
pub fn select_strategy(pareto: &[Individual]) -> Result<&Individual> {
    pareto
        .iter()
        .min_by(|a, b| {
            let (oa, ob) = (a.objectives_or_worst(), b.objectives_or_worst());
            oa.g1
                .total_cmp(&ob.g1)
                .then(oa.g2.total_cmp(&ob.g2))
                .then(a.genotype.len().cmp(&b.genotype.len()))
                .then(a.id.cmp(&b.id))
        })
        .ok_or(Error::EmptyPopulation)
}

/// Per-residue binding probabilities from a fitted strategy.
pub fn predict(strategy: &Individual, pool: &[FeatureMatrix]) -> Result<Vec<f64>> {
    let model = strategy
        .proxy
        .as_ref()
        .ok_or_else(|| Error::Config(format!("individual {} has no fitted head", strategy.id)))?;
    let fused = fuse_genotype(&strategy.genotype, pool)?;
    model.predict(&fused)
}

/// Equal-weight sum of every pool entry. Standardization removes the
/// `1/n` factor, so after the head this matches the arithmetic mean.
pub fn naive_mean_genotype(pool_size: usize) -> Genotype {
    Genotype::new(
        (0..pool_size)
            .map(|k| FusionGene::new(k, FusionOp::Add, 1.0, 1.0))
            .collect(),
    )
}

/// Evaluates a fixed genotype on one task as if it were a one-member run.
pub fn evaluate_fixed(task: &TaskData, genotype: Genotype, proxy: &ProxyConfig) -> Individual {
    let mut ind = Individual::new((task.descriptor.position as u64) << 32, task.descriptor.position, genotype);
    evaluate_individual(&mut ind, &task.pool, &task.labels, &task.split, proxy);
    ind
}

/// Shares a fitted head between copies of an individual.
pub fn with_model(mut ind: Individual, model: crate::proxy::ProxyModel) -> Individual {
    ind.proxy = Some(Arc::new(model));
    ind
}
