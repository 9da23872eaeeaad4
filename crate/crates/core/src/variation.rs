//! Variation operators and the per-offspring generation pipeline.
//!
//! All randomness comes from the caller's stream, so every operator is a
//! deterministic function of its inputs and the stream state.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::enm::NeighborEntry;
use crate::error::{Error, Result};
use crate::model::{
    cmp_by_primary, random_gene, FusionOp, Genotype, Individual, TaskPopulation, WEIGHT_MAX,
    WEIGHT_MIN,
};

/// Standard deviation of the Gaussian weight perturbation.
pub const WEIGHT_SIGMA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub struct_prob: f64,
    pub op_prob: f64,
    pub weight_prob: f64,
    pub transfer_prob: f64,
    pub de_apply_prob: f64,
    pub de_f: f64,
    pub de_cr: f64,
    pub tournament_size: usize,
    pub max_feature_length: usize,
    pub elite_fraction: f64,
    /// Neighborhood size; `None` means `ceil(0.1 * population_size)`.
    pub neighborhood_k: Option<usize>,
    pub grg_rho: f64,
    /// Blend weights toward a neighbor's matching genes; when false every
    /// gene gets the Gaussian perturbation.
    pub neighbor_weight_blend: bool,
    pub seed: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population_size: 50,
            generations: 40,
            crossover_prob: 0.9,
            mutation_prob: 0.6,
            struct_prob: 0.5,
            op_prob: 0.5,
            weight_prob: 0.5,
            transfer_prob: 0.3,
            de_apply_prob: 0.5,
            de_f: 0.5,
            de_cr: 0.9,
            tournament_size: 2,
            max_feature_length: crate::model::DEFAULT_MAX_FEATURE_LENGTH,
            elite_fraction: 0.2,
            neighborhood_k: None,
            grg_rho: 0.25,
            neighbor_weight_blend: true,
            seed: 0,
        }
    }
}

impl EvoConfig {
    pub fn neighborhood_size(&self) -> usize {
        self.neighborhood_k
            .unwrap_or_else(|| (0.1 * self.population_size as f64).ceil() as usize)
    }

    // negated comparisons so NaN is rejected
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("struct_prob", self.struct_prob),
            ("op_prob", self.op_prob),
            ("weight_prob", self.weight_prob),
            ("transfer_prob", self.transfer_prob),
            ("de_apply_prob", self.de_apply_prob),
            ("de_cr", self.de_cr),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.population_size < 4 {
            return Err(Error::Config("population_size must be >= 4".into()));
        }
        if self.neighborhood_size() < 1 {
            return Err(Error::Config("neighborhood_k must be >= 1".into()));
        }
        if self.tournament_size < 1 || self.max_feature_length < 1 {
            return Err(Error::Config(
                "tournament_size and max_feature_length must be >= 1".into(),
            ));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Config("elite_fraction must lie in (0, 1]".into()));
        }
        if !(self.grg_rho > 0.0) {
            return Err(Error::Config("grg_rho must be > 0".into()));
        }
        if !(self.de_f >= 0.0) {
            return Err(Error::Config("de_f must be >= 0".into()));
        }
        Ok(())
    }
}

fn clip_weight(w: f64) -> f64 {
    w.clamp(WEIGHT_MIN, WEIGHT_MAX)
}

/// Samples `size` members with replacement and keeps the best by
/// `(g1, g2, id)`.
pub fn tournament<'a, R: Rng + ?Sized>(
    pop: &'a TaskPopulation,
    size: usize,
    rng: &mut R,
) -> Result<&'a Individual> {
    if pop.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut best = &pop.members[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop.members[rng.random_range(0..pop.len())];
        if cmp_by_primary(c, best).is_lt() {
            best = c;
        }
    }
    Ok(best)
}

/// Child `p1[..c1] ++ p2[c2..]`, duplicates dropped (first occurrence
/// kept) and truncated to `max_len`.
pub fn crossover_at(p1: &Genotype, p2: &Genotype, c1: usize, c2: usize, max_len: usize) -> Genotype {
    let mut genes = Vec::with_capacity(c1 + p2.len().saturating_sub(c2));
    for g in p1.genes[..c1.min(p1.len())].iter().chain(&p2.genes[c2.min(p2.len())..]) {
        if genes.len() == max_len {
            break;
        }
        if !genes.iter().any(|x: &crate::model::FusionGene| x.pool_index == g.pool_index) {
            genes.push(*g);
        }
    }
    if genes.is_empty() {
        genes.push(p1.genes[0]);
    }
    Genotype::new(genes)
}

pub fn crossover<R: Rng + ?Sized>(p1: &Genotype, p2: &Genotype, max_len: usize, rng: &mut R) -> Genotype {
    let c1 = rng.random_range(1..=p1.len());
    let c2 = rng.random_range(0..=p2.len());
    crossover_at(p1, p2, c1, c2, max_len)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructuralMove {
    Insert,
    Delete,
    Replace,
}

fn unused_indices(g: &Genotype, pool_size: usize) -> Vec<usize> {
    (0..pool_size).filter(|&k| !g.contains_index(k)).collect()
}

pub fn mutate_structural_with<R: Rng + ?Sized>(
    g: &Genotype,
    mv: StructuralMove,
    pool_size: usize,
    max_len: usize,
    rng: &mut R,
) -> Genotype {
    let mut out = g.clone();
    let m = out.len();
    match mv {
        StructuralMove::Insert => {
            let free = unused_indices(g, pool_size);
            if m >= max_len || free.is_empty() {
                return out;
            }
            let k = free[rng.random_range(0..free.len())];
            let pos = rng.random_range(0..=m);
            out.genes.insert(pos, random_gene(rng, k));
        }
        StructuralMove::Delete => {
            if m <= 1 {
                return out;
            }
            out.genes.remove(rng.random_range(0..m));
        }
        StructuralMove::Replace => {
            let free = unused_indices(g, pool_size);
            if free.is_empty() {
                return out;
            }
            let pos = rng.random_range(0..m);
            out.genes[pos].pool_index = free[rng.random_range(0..free.len())];
        }
    }
    out
}

/// Insertion, deletion or replacement, chosen uniformly.
pub fn mutate_structural<R: Rng + ?Sized>(g: &Genotype, pool_size: usize, max_len: usize, rng: &mut R) -> Genotype {
    let mv = match rng.random_range(0..3) {
        0 => StructuralMove::Insert,
        1 => StructuralMove::Delete,
        _ => StructuralMove::Replace,
    };
    mutate_structural_with(g, mv, pool_size, max_len, rng)
}

/// Re-draws one non-first gene's operator from the five other operators.
pub fn mutate_operator<R: Rng + ?Sized>(g: &Genotype, rng: &mut R) -> Genotype {
    let mut out = g.clone();
    if out.len() < 2 {
        return out;
    }
    let pos = rng.random_range(1..out.len());
    let current = out.genes[pos].op;
    let others: Vec<FusionOp> = FusionOp::ALL.into_iter().filter(|&o| o != current).collect();
    out.genes[pos].op = others[rng.random_range(0..others.len())];
    out
}

/// `w + u * (target - w)`.
pub fn blend_weight(w: f64, target: f64, u: f64) -> f64 {
    w + u * (target - w)
}

/// Pulls weights of genes shared with a random neighbor toward that
/// neighbor's weights; every other gene gets Gaussian noise. Results are
/// clipped to the weight bounds.
pub fn mutate_weight<R: Rng + ?Sized>(g: &Genotype, neighbors: &[&Genotype], blend: bool, rng: &mut R) -> Genotype {
    let noise = Normal::new(0.0, WEIGHT_SIGMA).expect("valid sigma");
    let neighbor = if blend && !neighbors.is_empty() {
        Some(neighbors[rng.random_range(0..neighbors.len())])
    } else {
        None
    };
    let mut out = g.clone();
    for gene in &mut out.genes {
        match neighbor.and_then(|e| e.gene_for(gene.pool_index)) {
            Some(target) => {
                gene.w_c = clip_weight(blend_weight(gene.w_c, target.w_c, rng.random()));
                gene.w_f = clip_weight(blend_weight(gene.w_f, target.w_f, rng.random()));
            }
            None => {
                gene.w_c = clip_weight(gene.w_c + noise.sample(rng));
                gene.w_f = clip_weight(gene.w_f + noise.sample(rng));
            }
        }
    }
    out
}

/// DE/current-to-best/1 mutant for one coordinate. Missing aligned
/// partners contribute nothing to their difference term.
pub fn de_mutant(x: f64, best: Option<f64>, r1: Option<f64>, r2: Option<f64>, f: f64) -> f64 {
    let pull = best.map_or(0.0, |b| b - x);
    let spread = match (r1, r2) {
        (Some(a), Some(b)) => a - b,
        _ => 0.0,
    };
    x + f * pull + f * spread
}

/// Batch DE over offspring weights. Each offspring is refined with
/// probability `de_apply_prob`; weights are aligned across genotypes by
/// pool index. Trials replace the weights unconditionally and structure
/// is never touched.
pub fn batch_de<R: Rng + ?Sized>(
    offspring: Vec<Genotype>,
    parent_best: &Genotype,
    cfg: &EvoConfig,
    rng: &mut R,
) -> Vec<Genotype> {
    let n = offspring.len();
    if n < 3 || cfg.de_apply_prob <= 0.0 {
        return offspring;
    }
    let mut out = offspring.clone();
    for (i, target) in out.iter_mut().enumerate() {
        if rng.random::<f64>() >= cfg.de_apply_prob {
            continue;
        }
        let r1 = loop {
            let r = rng.random_range(0..n);
            if r != i {
                break r;
            }
        };
        let r2 = loop {
            let r = rng.random_range(0..n);
            if r != i && r != r1 {
                break r;
            }
        };
        let dims = 2 * target.len();
        let forced = rng.random_range(0..dims);
        for (gi, gene) in target.genes.iter_mut().enumerate() {
            let b = parent_best.gene_for(gene.pool_index);
            let a1 = offspring[r1].gene_for(gene.pool_index);
            let a2 = offspring[r2].gene_for(gene.pool_index);
            for (wi, slot) in [&mut gene.w_c, &mut gene.w_f].into_iter().enumerate() {
                let pick = |g: Option<&crate::model::FusionGene>| {
                    g.map(|g| if wi == 0 { g.w_c } else { g.w_f })
                };
                let v = de_mutant(*slot, pick(b), pick(a1), pick(a2), cfg.de_f);
                let cross = rng.random::<f64>() < cfg.de_cr;
                if cross || 2 * gi + wi == forced {
                    *slot = clip_weight(v);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Offspring {
    pub genotype: Genotype,
    pub first_parent: u64,
    pub second_parent: u64,
    /// Source task of the second parent when it came from the neighborhood.
    pub transfer_source: Option<usize>,
}

/// One offspring: tournament for the first parent, the second from the
/// first parent's external neighborhood with probability `transfer_prob`
/// (else another tournament), then crossover and gated mutations.
pub fn generate_offspring<R: Rng + ?Sized>(
    pop: &TaskPopulation,
    neighborhoods: Option<&BTreeMap<u64, Vec<NeighborEntry>>>,
    cfg: &EvoConfig,
    pool_size: usize,
    rng: &mut R,
) -> Result<Offspring> {
    let p1 = tournament(pop, cfg.tournament_size, rng)?;
    let hood: &[NeighborEntry] = neighborhoods
        .and_then(|m| m.get(&p1.id))
        .map_or(&[], Vec::as_slice);
    let transfer = rng.random::<f64>() < cfg.transfer_prob && !hood.is_empty();
    let (p2_genotype, second_parent, transfer_source) = if transfer {
        let e = &hood[rng.random_range(0..hood.len())];
        (&e.genotype, e.elite_id, Some(e.source_task))
    } else {
        let p2 = tournament(pop, cfg.tournament_size, rng)?;
        (&p2.genotype, p2.id, None)
    };

    let mut child = p1.genotype.clone();
    if rng.random::<f64>() < cfg.crossover_prob {
        child = crossover(&p1.genotype, p2_genotype, cfg.max_feature_length, rng);
    }
    if rng.random::<f64>() < cfg.mutation_prob {
        if rng.random::<f64>() < cfg.struct_prob {
            child = mutate_structural(&child, pool_size, cfg.max_feature_length, rng);
        }
        if rng.random::<f64>() < cfg.op_prob {
            child = mutate_operator(&child, rng);
        }
        if rng.random::<f64>() < cfg.weight_prob {
            let elites: Vec<&Genotype> = hood.iter().map(|e| &e.genotype).collect();
            child = mutate_weight(&child, &elites, cfg.neighbor_weight_blend, rng);
        }
    }
    Ok(Offspring {
        genotype: child,
        first_parent: p1.id,
        second_parent,
        transfer_source,
    })
}
