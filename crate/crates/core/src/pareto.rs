//! Non-dominated filtering and NSGA-II Pareto-set estimation.
//!
//! Every objective is maximized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the points no other point dominates. Duplicates are all kept.
pub fn non_dominated_filter(values: &[Vec<f64>]) -> Vec<usize> {
    (0..values.len())
        .filter(|&i| !values.iter().enumerate().any(|(j, v)| j != i && dominates(v, &values[i])))
        .collect()
}

/// Fronts of the fast non-dominated sort, best first.
pub fn non_dominated_fronts(values: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&values[i], &values[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates(&values[j], &values[i]) {
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

/// Crowding distance of each point within one front.
///
/// Boundary points of every objective get `+∞`; interior points sum their
/// neighbour gaps normalized by that objective's range. An objective with
/// zero range contributes nothing.
pub fn crowding_distance(front_values: &[Vec<f64>]) -> Vec<f64> {
    let n = front_values.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m_count = front_values[0].len();
    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..m_count {
        order.sort_by(|&i, &j| front_values[i][m].total_cmp(&front_values[j][m]).then(i.cmp(&j)));
        let lo = front_values[order[0]][m];
        let hi = front_values[order[n - 1]][m];
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            let gap = front_values[order[k + 1]][m] - front_values[order[k - 1]][m];
            distance[order[k]] += gap / range;
        }
    }
    distance
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Nsga2Config {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub crossover_eta: f64,
    /// Per-variable mutation probability; `None` means `1 / D`.
    pub mutation_prob: Option<f64>,
    pub mutation_eta: f64,
    pub seed: u64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 100,
            crossover_prob: 0.9,
            crossover_eta: 15.0,
            mutation_prob: None,
            mutation_eta: 20.0,
            seed: 0,
        }
    }
}

impl Nsga2Config {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("population must be even and >= 4, got {}", self.population)));
        }
        Ok(())
    }
}

/// Mutually non-dominated points and their objective values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParetoArchive {
    pub points: Vec<Point>,
    pub values: Vec<Vec<f64>>,
}

impl ParetoArchive {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds a point unless something already archived dominates or equals it.
    fn offer(&mut self, point: &[f64], value: &[f64]) {
        if self.values.iter().any(|v| v.as_slice() == value || dominates(v, value)) {
            return;
        }
        let keep: Vec<bool> = self.values.iter().map(|v| !dominates(value, v)).collect();
        let mut i = 0;
        self.points.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.values.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.points.push(point.to_vec());
        self.values.push(value.to_vec());
    }

    /// Drops the most crowded points until at most `target` remain.
    fn truncate(&mut self, target: usize) {
        if self.len() <= target {
            return;
        }
        let d = crowding_distance(&self.values);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
        let mut keep: Vec<usize> = order[..target].to_vec();
        keep.sort_unstable();
        self.points = keep.iter().map(|&i| self.points[i].clone()).collect();
        self.values = keep.iter().map(|&i| self.values[i].clone()).collect();
    }
}

struct Individual {
    x: Point,
    f: Vec<f64>,
    rank: usize,
    crowding: f64,
}

fn assign_rank_and_crowding(pop: &mut [Individual]) {
    let values: Vec<Vec<f64>> = pop.iter().map(|p| p.f.clone()).collect();
    for (r, front) in non_dominated_fronts(&values).iter().enumerate() {
        let fv: Vec<Vec<f64>> = front.iter().map(|&i| values[i].clone()).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&fv)) {
            pop[i].rank = r;
            pop[i].crowding = d;
        }
    }
}

fn tournament<'a>(pop: &'a [Individual], rng: &mut ChaCha8Rng) -> &'a Individual {
    let a = &pop[rng.gen_range(0..pop.len())];
    let b = &pop[rng.gen_range(0..pop.len())];
    if a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding) {
        a
    } else if b.rank < a.rank || b.crowding > a.crowding {
        b
    } else if rng.gen::<bool>() {
        a
    } else {
        b
    }
}

fn sbx_bound(beta: f64, u: f64, eta: f64) -> f64 {
    let alpha = 2.0 - beta.powf(-(eta + 1.0));
    if u <= 1.0 / alpha {
        (u * alpha).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
    }
}

/// Simulated binary crossover on `[0, 1]` coordinates.
fn sbx(p1: &[f64], p2: &[f64], cfg: &Nsga2Config, rng: &mut ChaCha8Rng) -> (Point, Point) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.gen::<f64>() > cfg.crossover_prob {
        return (c1, c2);
    }
    for i in 0..p1.len() {
        if rng.gen::<f64>() > 0.5 || (p1[i] - p2[i]).abs() <= 1e-14 {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let u: f64 = rng.gen();
        let bq1 = sbx_bound(1.0 + 2.0 * y1 / (y2 - y1), u, cfg.crossover_eta);
        let bq2 = sbx_bound(1.0 + 2.0 * (1.0 - y2) / (y2 - y1), u, cfg.crossover_eta);
        let a = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(0.0, 1.0);
        let b = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(0.0, 1.0);
        if rng.gen::<bool>() {
            c1[i] = b;
            c2[i] = a;
        } else {
            c1[i] = a;
            c2[i] = b;
        }
    }
    (c1, c2)
}

/// Polynomial mutation on `[0, 1]` coordinates.
fn mutate(x: &mut [f64], cfg: &Nsga2Config, rng: &mut ChaCha8Rng) {
    let prob = cfg.mutation_prob.unwrap_or(1.0 / x.len() as f64);
    let pow = 1.0 / (cfg.mutation_eta + 1.0);
    for v in x.iter_mut() {
        if rng.gen::<f64>() > prob {
            continue;
        }
        let r: f64 = rng.gen();
        let dq = if r < 0.5 {
            let xy = 1.0 - *v;
            (2.0 * r + (1.0 - 2.0 * r) * xy.powf(cfg.mutation_eta + 1.0)).powf(pow) - 1.0
        } else {
            let xy = *v;
            1.0 - (2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy.powf(cfg.mutation_eta + 1.0)).powf(pow)
        };
        *v = (*v + dq).clamp(0.0, 1.0);
    }
}

/// Estimates the Pareto set of `f` over `[0,1]^dim` with NSGA-II.
///
/// Every evaluated point is offered to an external archive of mutually
/// non-dominated points, truncated by crowding distance to `target_points`.
pub fn nsga2_maximize<F>(f: F, dim: usize, cfg: &Nsga2Config, target_points: usize) -> Result<ParetoArchive>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    if target_points == 0 {
        return Err(Error::InvalidParameter("target_points must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut archive = ParetoArchive::default();
    let mut pop: Vec<Individual> = (0..cfg.population)
        .map(|_| {
            let x: Point = (0..dim).map(|_| rng.gen()).collect();
            let fx = f(&x);
            Individual { x, f: fx, rank: 0, crowding: 0.0 }
        })
        .collect();
    for p in &pop {
        archive.offer(&p.x, &p.f);
    }
    archive.truncate(target_points);
    assign_rank_and_crowding(&mut pop);

    for _ in 0..cfg.generations {
        let mut offspring = Vec::with_capacity(cfg.population);
        while offspring.len() < cfg.population {
            let a = tournament(&pop, &mut rng).x.clone();
            let b = tournament(&pop, &mut rng).x.clone();
            let (mut c1, mut c2) = sbx(&a, &b, cfg, &mut rng);
            mutate(&mut c1, cfg, &mut rng);
            mutate(&mut c2, cfg, &mut rng);
            for c in [c1, c2] {
                let fc = f(&c);
                archive.offer(&c, &fc);
                offspring.push(Individual { x: c, f: fc, rank: 0, crowding: 0.0 });
            }
        }
        archive.truncate(target_points);

        pop.extend(offspring);
        assign_rank_and_crowding(&mut pop);
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&i, &j| pop[i].rank.cmp(&pop[j].rank).then(pop[j].crowding.total_cmp(&pop[i].crowding)).then(i.cmp(&j)));
        let mut keep = vec![false; pop.len()];
        for &i in order.iter().take(cfg.population) {
            keep[i] = true;
        }
        let mut i = 0;
        pop.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        assign_rank_and_crowding(&mut pop);
    }
    Ok(archive)
}

/// Area dominated by a two-objective point set above `reference`.
pub fn hypervolume_2d(values: &[Vec<f64>], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<(f64, f64)> = values
        .iter()
        .filter(|v| v[0] > reference[0] && v[1] > reference[1])
        .map(|v| (v[0], v[1]))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut best_y = reference[1];
    for (x, y) in pts {
        if y > best_y {
            area += (x - reference[0]) * (y - best_y);
            best_y = y;
        }
    }
    area
}
