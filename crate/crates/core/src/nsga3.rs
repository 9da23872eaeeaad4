//! NSGA-III environmental selection for the two minimized objectives.
//!
//! Fronts are accepted whole while they fit; the front that overflows is
//! thinned by reference-point niching on normalized objectives.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Individual, ObjectiveVector};
use crate::rng::Stream;

/// Off-axis weight of the achievement scalarizing function.
pub const ASF_EPSILON: f64 = 1e-6;

pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let (a, b) = (a.as_array(), b.as_array());
    a.iter().zip(&b).all(|(x, y)| x <= y) && a.iter().zip(&b).any(|(x, y)| x < y)
}

/// Fast non-dominated sort. Each front lists indices in ascending order.
pub fn nondominated_sort(objs: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates(&objs[j], &objs[i]) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSet {
    pub points: Vec<Vec<f64>>,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Das-Dennis set sized to a bi-objective population of `n`.
    pub fn for_population(n: usize) -> ReferenceSet {
        das_dennis(2, n.saturating_sub(1).max(1))
    }
}

/// Every composition of `p` into `m` non-negative parts, scaled by `1/p`.
pub fn das_dennis(m: usize, p: usize) -> ReferenceSet {
    assert!(m >= 2 && p >= 1, "das_dennis needs m >= 2 and p >= 1");
    fn rec(m: usize, left: usize, p: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() == m - 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&k| k as f64 / p as f64).collect());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(m, left - k, p, prefix, out);
            prefix.pop();
        }
    }
    let mut points = Vec::new();
    rec(m, p, p, &mut Vec::with_capacity(m), &mut points);
    ReferenceSet { points }
}

/// Translates by the ideal point and scales by hyperplane intercepts
/// found from ASF extreme points. Falls back to per-axis ranges when the
/// intercepts are degenerate, and to 1 when a range is zero.
pub fn normalize(objs: &[ObjectiveVector]) -> Vec<[f64; 2]> {
    if objs.is_empty() {
        return Vec::new();
    }
    let pts: Vec<[f64; 2]> = objs.iter().map(|o| o.as_array()).collect();
    let mut ideal = [f64::INFINITY; 2];
    for p in &pts {
        for k in 0..2 {
            ideal[k] = ideal[k].min(p[k]);
        }
    }
    let shifted: Vec<[f64; 2]> = pts
        .iter()
        .map(|p| [p[0] - ideal[0], p[1] - ideal[1]])
        .collect();

    let mut extremes = [[0.0; 2]; 2];
    for (axis, ext) in extremes.iter_mut().enumerate() {
        let asf = |p: &[f64; 2]| {
            (0..2)
                .map(|k| p[k] / if k == axis { 1.0 } else { ASF_EPSILON })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let mut best = 0;
        for i in 1..shifted.len() {
            if asf(&shifted[i]) < asf(&shifted[best]) {
                best = i;
            }
        }
        *ext = shifted[best];
    }

    let intercepts = hyperplane_intercepts(&extremes).unwrap_or_else(|| {
        let mut range = [0.0f64; 2];
        for p in &shifted {
            for k in 0..2 {
                range[k] = range[k].max(p[k]);
            }
        }
        range.map(|r| if r > 0.0 { r } else { 1.0 })
    });

    shifted
        .iter()
        .map(|p| [p[0] / intercepts[0], p[1] / intercepts[1]])
        .collect()
}

/// Axis intercepts of the line through the two extreme points, if it
/// exists and cuts both positive axes.
fn hyperplane_intercepts(e: &[[f64; 2]; 2]) -> Option<[f64; 2]> {
    // solve E * b = 1
    let det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
    if det.abs() < 1e-12 {
        return None;
    }
    let b0 = (e[1][1] - e[0][1]) / det;
    let b1 = (e[0][0] - e[1][0]) / det;
    let ints = [1.0 / b0, 1.0 / b1];
    if ints.iter().all(|v| v.is_finite() && *v > 1e-10) {
        Some(ints)
    } else {
        None
    }
}

/// Nearest reference line (by perpendicular distance) for one point.
pub fn associate(point: &[f64; 2], refs: &ReferenceSet) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, z) in refs.points.iter().enumerate() {
        let zz = z[0] * z[0] + z[1] * z[1];
        let t = (point[0] * z[0] + point[1] * z[1]) / zz;
        let d = ((point[0] - t * z[0]).powi(2) + (point[1] - t * z[1]).powi(2)).sqrt();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Selects `n` of the given objective vectors; returns their indices
/// ordered by id.
pub fn select_indices(
    objs: &[ObjectiveVector],
    ids: &[u64],
    n: usize,
    refs: &ReferenceSet,
    rng: &mut Stream,
) -> Result<Vec<usize>> {
    if objs.len() < n {
        return Err(Error::Size {
            wanted: n,
            available: objs.len(),
        });
    }
    assert_eq!(objs.len(), ids.len());
    let by_id = |mut v: Vec<usize>| {
        v.sort_by_key(|&i| ids[i]);
        v
    };
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut last: Vec<usize> = Vec::new();
    for front in nondominated_sort(objs) {
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
            if chosen.len() == n {
                return Ok(by_id(chosen));
            }
        } else {
            last = front;
            break;
        }
    }
    if chosen.len() == n {
        return Ok(by_id(chosen));
    }

    let members: Vec<usize> = chosen.iter().chain(&last).copied().collect();
    let normed = normalize(&members.iter().map(|&i| objs[i]).collect::<Vec<_>>());
    let assoc: Vec<(usize, f64)> = normed.iter().map(|p| associate(p, refs)).collect();

    let mut niche = vec![0usize; refs.len()];
    for a in &assoc[..chosen.len()] {
        niche[a.0] += 1;
    }
    // (index into objs, reference, distance) for the splitting front
    let mut pending: Vec<(usize, usize, f64)> = last
        .iter()
        .zip(&assoc[chosen.len()..])
        .map(|(&i, &(r, d))| (i, r, d))
        .collect();
    let mut excluded = vec![false; refs.len()];
    while chosen.len() < n {
        let min_count = niche
            .iter()
            .zip(&excluded)
            .filter(|(_, &x)| !x)
            .map(|(&c, _)| c)
            .min()
            .expect("reference points exhausted before selection filled");
        let candidates: Vec<usize> = (0..refs.len())
            .filter(|&j| !excluded[j] && niche[j] == min_count)
            .collect();
        let j = if candidates.len() == 1 {
            candidates[0]
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        let linked: Vec<usize> = (0..pending.len()).filter(|&p| pending[p].1 == j).collect();
        if linked.is_empty() {
            excluded[j] = true;
            continue;
        }
        let pick = if niche[j] == 0 {
            *linked
                .iter()
                .min_by(|&&a, &&b| {
                    pending[a]
                        .2
                        .total_cmp(&pending[b].2)
                        .then(ids[pending[a].0].cmp(&ids[pending[b].0]))
                })
                .unwrap()
        } else {
            linked[rng.random_range(0..linked.len())]
        };
        chosen.push(pending.remove(pick).0);
        niche[j] += 1;
    }
    Ok(by_id(chosen))
}

/// Survivor selection over evaluated individuals.
pub trait Selector: Send + Sync {
    fn select(&self, pool: Vec<Individual>, n: usize, rng: &mut Stream) -> Result<Vec<Individual>>;
}

#[derive(Clone, Debug)]
pub struct Nsga3Selector {
    pub refs: ReferenceSet,
}

impl Nsga3Selector {
    pub fn new(refs: ReferenceSet) -> Self {
        Nsga3Selector { refs }
    }

    pub fn for_population(n: usize) -> Self {
        Nsga3Selector::new(ReferenceSet::for_population(n))
    }
}

impl Selector for Nsga3Selector {
    fn select(&self, pool: Vec<Individual>, n: usize, rng: &mut Stream) -> Result<Vec<Individual>> {
        environmental_selection(pool, n, &self.refs, rng)
    }
}

pub fn environmental_selection(
    pool: Vec<Individual>,
    n: usize,
    refs: &ReferenceSet,
    rng: &mut Stream,
) -> Result<Vec<Individual>> {
    let objs: Vec<ObjectiveVector> = pool.iter().map(|i| i.objectives_or_worst()).collect();
    let ids: Vec<u64> = pool.iter().map(|i| i.id).collect();
    let keep = select_indices(&objs, &ids, n, refs, rng)?;
    let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    Ok(keep
        .into_iter()
        .map(|i| slots[i].take().expect("index selected twice"))
        .collect())
}
