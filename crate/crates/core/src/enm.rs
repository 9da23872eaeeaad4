//! External neighborhoods: for every individual, the `K` elites from other
//! tasks whose genotypes are most similar by Gray Relational Grade.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{cmp_by_primary, vectorize_genotype, Genotype, Individual, TaskPopulation};
use crate::variation::EvoConfig;

/// Gray Relational Grade: mean over coordinates of
/// `(d_min + rho * d_max) / (d_i + rho * d_max)` with `d_i = |y_i - x_i|`.
/// Identical vectors have grade 1.
pub fn grg(x: &[f64], y: &[f64], rho: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InsufficientData("GRG of empty vectors".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (a, b) in x.iter().zip(y) {
        let d = (b - a).abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if hi == 0.0 {
        return Ok(1.0);
    }
    let num = lo + rho * hi;
    let sum: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| num / ((b - a).abs() + rho * hi))
        .sum();
    Ok(sum / x.len() as f64)
}

/// Top `ceil(fraction * N)` members by `(g1, g2, id)`.
pub fn select_elites(pop: &TaskPopulation, fraction: f64) -> Vec<&Individual> {
    let count = ((fraction * pop.len() as f64).ceil() as usize).min(pop.len());
    let mut ranked: Vec<&Individual> = pop.members.iter().collect();
    ranked.sort_by(|a, b| cmp_by_primary(a, b));
    ranked.truncate(count);
    ranked
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborEntry {
    pub elite_id: u64,
    pub source_task: usize,
    pub grade: f64,
    pub genotype: Genotype,
}

/// Per task, individual id to its neighbors (descending grade).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborhoodMap {
    pub per_task: Vec<BTreeMap<u64, Vec<NeighborEntry>>>,
}

impl NeighborhoodMap {
    pub fn empty(task_count: usize) -> Self {
        NeighborhoodMap {
            per_task: vec![BTreeMap::new(); task_count],
        }
    }

    pub fn get(&self, task: usize, id: u64) -> Option<&[NeighborEntry]> {
        self.per_task
            .get(task)
            .and_then(|m| m.get(&id))
            .map(Vec::as_slice)
    }
}

fn rank_entries(entries: &mut Vec<NeighborEntry>, k: usize) {
    entries.sort_by(|a, b| {
        b.grade
            .total_cmp(&a.grade)
            .then(a.source_task.cmp(&b.source_task))
            .then(a.elite_id.cmp(&b.elite_id))
    });
    entries.truncate(k);
}

/// Builds every task's neighborhoods from the union of per-task elites.
pub fn build_neighborhoods(pops: &[TaskPopulation], cfg: &EvoConfig, pool_size: usize) -> NeighborhoodMap {
    let k = cfg.neighborhood_size();
    let elites: Vec<(usize, &Individual, Vec<f64>)> = pops
        .iter()
        .flat_map(|p| {
            select_elites(p, cfg.elite_fraction)
                .into_iter()
                .map(move |e| (p.task, e))
        })
        .map(|(t, e)| (t, e, vectorize_genotype(&e.genotype, pool_size)))
        .collect();

    let per_task = pops
        .iter()
        .map(|pop| {
            pop.members
                .par_iter()
                .map(|p| {
                    let v = vectorize_genotype(&p.genotype, pool_size);
                    let mut entries: Vec<NeighborEntry> = elites
                        .iter()
                        .filter(|(t, _, _)| *t != pop.task)
                        .map(|(t, e, ev)| NeighborEntry {
                            elite_id: e.id,
                            source_task: *t,
                            grade: grg(&v, ev, cfg.grg_rho).expect("equal-length encodings"),
                            genotype: e.genotype.clone(),
                        })
                        .collect();
                    rank_entries(&mut entries, k);
                    (p.id, entries)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<BTreeMap<_, _>>()
        })
        .collect();
    NeighborhoodMap { per_task }
}
