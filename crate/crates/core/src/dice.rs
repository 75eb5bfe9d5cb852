//! Diverse counterfactuals by genetic search.
//!
//! The search minimizes, per candidate, `‖x′ − x‖² + λ·L(x′)` where `L` is a
//! hinge on the target-class probability. Every evaluated candidate goes
//! into an archive; the returned set is picked greedily from the archive to
//! minimize the set objective, in which mean pairwise distance is rewarded.

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::rng::{substream, Rng};
use crate::tabular::{Instance, ScalerParams};
use crate::SCHEMA_VERSION;

/// Search and objective settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiceParams {
    pub k: usize,
    /// Weight of the target hinge loss.
    pub lambda: f64,
    /// Weight of the diversity reward.
    pub beta: f64,
    /// Hinge is `max(0, 0.5 + margin − p_target)`.
    pub margin: f64,
    pub population: usize,
    pub generations: usize,
    /// Per-feature mutation probability.
    pub mutation_rate: f64,
    /// Standard deviation of a mutation step.
    pub mutation_scale: f64,
    pub tournament: usize,
    /// After selection, revert changed features to the original (smallest
    /// change first) whenever the row stays valid.
    pub sparsify: bool,
    pub seed: u64,
}

impl Default for DiceParams {
    fn default() -> Self {
        Self {
            k: 3,
            lambda: 10.0,
            beta: 1.0,
            margin: 0.05,
            population: 200,
            generations: 100,
            mutation_rate: 0.2,
            mutation_scale: 0.1,
            tournament: 3,
            sparsify: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualQuery {
    pub instance: Instance,
    /// `None` asks for the opposite of the current prediction.
    pub target: Option<u8>,
    /// Permit a target equal to the current prediction.
    #[serde(default)]
    pub allow_same_class: bool,
    /// Features that are never perturbed.
    #[serde(default)]
    pub immutable: Vec<String>,
    #[serde(default)]
    pub params: DiceParams,
}

impl CounterfactualQuery {
    pub fn new(instance: Instance, params: DiceParams) -> Self {
        Self {
            instance,
            target: None,
            allow_same_class: false,
            immutable: Vec::new(),
            params,
        }
    }

    pub fn resolve_target<M: Classifier + ?Sized>(&self, model: &M) -> Result<u8> {
        let current = model.predict(&self.instance.values);
        match self.target {
            None => Ok(1 - current),
            Some(t) if t > 1 => Err(Error::InvalidParameter(format!("target class {t}"))),
            Some(t) if t == current && !self.allow_same_class => Err(Error::InvalidParameter(
                format!("instance is already predicted as class {t}"),
            )),
            Some(t) => Ok(t),
        }
    }

    fn mutable_mask(&self) -> Result<Vec<bool>> {
        let mut mask = vec![true; self.instance.len()];
        for name in &self.immutable {
            let j = self
                .instance
                .feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            mask[j] = false;
        }
        Ok(mask)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginalRow {
    pub features: Vec<f64>,
    pub prediction: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub features: Vec<f64>,
    pub prediction: u8,
    pub p_target: f64,
    pub valid: bool,
    /// `‖x′ − x‖²`.
    pub proximity: f64,
    /// Number of features that differ from the original.
    pub sparsity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub schema_version: u32,
    pub instance_id: String,
    pub feature_names: Vec<String>,
    pub original: OriginalRow,
    pub target: u8,
    pub counterfactuals: Vec<Counterfactual>,
    /// Mean pairwise Euclidean distance among the counterfactuals.
    pub diversity: f64,
    /// Set objective of the returned counterfactuals.
    pub objective: f64,
    /// Lowest single-candidate objective seen during the search.
    pub best_fitness: f64,
    pub immutable: Vec<String>,
    pub params: DiceParams,
}

impl CounterfactualSet {
    pub fn n_valid(&self) -> usize {
        self.counterfactuals.iter().filter(|c| c.valid).count()
    }

    /// Names of features changed in any returned row.
    pub fn changed_features(&self) -> Vec<String> {
        let mut changed = vec![false; self.feature_names.len()];
        for cf in &self.counterfactuals {
            for (j, (a, b)) in cf.features.iter().zip(&self.original.features).enumerate() {
                if a != b {
                    changed[j] = true;
                }
            }
        }
        self.feature_names
            .iter()
            .zip(changed)
            .filter(|(_, c)| *c)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

fn hinge(p_target: f64, margin: f64) -> f64 {
    (0.5 + margin - p_target).max(0.0)
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean pairwise Euclidean distance; 0 for fewer than two rows.
pub fn diversity(rows: &[&[f64]]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += dist_sq(rows[i], rows[j]).sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

fn set_objective(x: &[f64], rows: &[&[f64]], p_target: &[f64], p: &DiceParams) -> f64 {
    let prox: f64 = rows.iter().map(|r| dist_sq(r, x)).sum();
    let loss: f64 = p_target.iter().map(|&q| hinge(q, p.margin)).sum();
    prox + p.lambda * loss - p.beta * diversity(rows)
}

/// `Σ‖x′ − x‖² + λ·ΣL − β·Diversity` over `candidates`.
pub fn cf_objective<M: Classifier + ?Sized>(
    candidates: &[Vec<f64>],
    query: &CounterfactualQuery,
    model: &M,
) -> Result<f64> {
    let target = query.resolve_target(model)?;
    let p = query.instance.len();
    if let Some(c) = candidates.iter().find(|c| c.len() != p) {
        return Err(Error::Shape(format!(
            "candidate has {} values for {p} features",
            c.len()
        )));
    }
    let rows: Vec<&[f64]> = candidates.iter().map(Vec::as_slice).collect();
    let pt: Vec<f64> = candidates
        .iter()
        .map(|c| model.predict_proba(c)[target as usize])
        .collect();
    Ok(set_objective(
        &query.instance.values,
        &rows,
        &pt,
        &query.params,
    ))
}

struct Candidate {
    row: Vec<f64>,
    p_target: f64,
    fitness: f64,
}

struct Search<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    mutable: Vec<usize>,
    target: usize,
    params: &'a DiceParams,
    step: Normal<f64>,
}

impl<M: Classifier + ?Sized> Search<'_, M> {
    fn evaluate(&self, row: Vec<f64>) -> Candidate {
        let p_target = self.model.predict_proba(&row)[self.target];
        let fitness =
            dist_sq(&row, self.x) + self.params.lambda * hinge(p_target, self.params.margin);
        Candidate {
            row,
            p_target,
            fitness,
        }
    }

    fn mutate(&self, row: &mut [f64], rng: &mut Rng) {
        for &j in &self.mutable {
            if rng.random::<f64>() < self.params.mutation_rate {
                row[j] = (row[j] + self.step.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }

    fn tournament<'c>(&self, pop: &'c [Candidate], rng: &mut Rng) -> &'c Candidate {
        let mut best = &pop[rng.random_range(0..pop.len())];
        for _ in 1..self.params.tournament {
            let c = &pop[rng.random_range(0..pop.len())];
            if c.fitness < best.fitness {
                best = c;
            }
        }
        best
    }
}

fn validate(query: &CounterfactualQuery) -> Result<()> {
    let p = &query.params;
    if p.k == 0 {
        return Err(Error::InvalidParameter("k must be ≥ 1".into()));
    }
    if p.population == 0 || p.generations == 0 {
        return Err(Error::InvalidParameter("search budget is zero".into()));
    }
    if p.tournament == 0 {
        return Err(Error::InvalidParameter(
            "tournament size must be ≥ 1".into(),
        ));
    }
    if !(p.lambda >= 0.0 && p.beta >= 0.0 && p.margin >= 0.0) {
        return Err(Error::InvalidParameter(
            "lambda, beta and margin must be ≥ 0".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p.mutation_rate) || !(p.mutation_scale > 0.0) {
        return Err(Error::InvalidParameter(
            "mutation rate must be in [0, 1] and scale > 0".into(),
        ));
    }
    Ok(())
}

pub fn generate_counterfactuals<M: Classifier + ?Sized>(
    model: &M,
    query: &CounterfactualQuery,
) -> Result<CounterfactualSet> {
    validate(query)?;
    let target = query.resolve_target(model)?;
    let mask = query.mutable_mask()?;
    let mutable: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    if mutable.is_empty() {
        return Err(Error::InvalidParameter("no mutable features".into()));
    }
    let params = &query.params;
    let x = &query.instance.values;
    let search = Search {
        model,
        x,
        mutable,
        target: target as usize,
        params,
        step: Normal::new(0.0, params.mutation_scale).expect("positive scale"),
    };

    // Stream 0 seeds the population, stream g+1 drives generation g, so a
    // longer run replays a shorter one exactly before continuing.
    let mut rng = substream(params.seed, 0);
    let mut population: Vec<Candidate> = Vec::with_capacity(params.population);
    population.push(search.evaluate(x.clone()));
    while population.len() < params.population {
        let mut row = x.clone();
        search.mutate(&mut row, &mut rng);
        population.push(search.evaluate(row));
    }
    let mut archive: Vec<Candidate> = Vec::new();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut remember = |c: &Candidate, archive: &mut Vec<Candidate>| {
        if seen.insert(c.row.iter().map(|v| v.to_bits()).collect()) {
            archive.push(Candidate {
                row: c.row.clone(),
                p_target: c.p_target,
                fitness: c.fitness,
            });
        }
    };
    for c in &population {
        remember(c, &mut archive);
    }

    let elite = (params.population / 20).max(1);
    for g in 0..params.generations {
        let mut rng = substream(params.seed, g as u64 + 1);
        population.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        let mut next: Vec<Candidate> = population
            .iter()
            .take(elite)
            .map(|c| Candidate {
                row: c.row.clone(),
                p_target: c.p_target,
                fitness: c.fitness,
            })
            .collect();
        while next.len() < params.population {
            let a = search.tournament(&population, &mut rng);
            let b = search.tournament(&population, &mut rng);
            let mut child: Vec<f64> = a
                .row
                .iter()
                .zip(&b.row)
                .map(|(&u, &v)| if rng.random::<bool>() { u } else { v })
                .collect();
            search.mutate(&mut child, &mut rng);
            let c = search.evaluate(child);
            remember(&c, &mut archive);
            next.push(c);
        }
        population = next;
    }

    let best_fitness = archive
        .iter()
        .map(|c| c.fitness)
        .fold(f64::INFINITY, f64::min);
    let chosen = select(&archive, x, target as usize, params);
    let mut picked: Vec<Candidate> = chosen
        .iter()
        .map(|&i| Candidate {
            row: archive[i].row.clone(),
            p_target: archive[i].p_target,
            fitness: archive[i].fitness,
        })
        .collect();
    if params.sparsify {
        sparsify(&mut picked, &search);
    }
    let rows: Vec<&[f64]> = picked.iter().map(|c| c.row.as_slice()).collect();
    let pt: Vec<f64> = picked.iter().map(|c| c.p_target).collect();
    let objective = set_objective(x, &rows, &pt, params);
    let counterfactuals = picked
        .iter()
        .map(|c| {
            let row = c.row.clone();
            let prediction = model.predict(&row);
            Counterfactual {
                proximity: dist_sq(&row, x),
                sparsity: row.iter().zip(x).filter(|(a, b)| a != b).count(),
                p_target: c.p_target,
                valid: prediction == target,
                prediction,
                features: row,
            }
        })
        .collect();

    Ok(CounterfactualSet {
        schema_version: SCHEMA_VERSION,
        instance_id: query.instance.id.clone(),
        feature_names: query.instance.feature_names.clone(),
        original: OriginalRow {
            features: x.clone(),
            prediction: model.predict(x),
        },
        target,
        counterfactuals,
        diversity: diversity(&rows),
        objective,
        best_fitness,
        immutable: query.immutable.clone(),
        params: params.clone(),
    })
}

fn is_valid(p_target: f64, target: usize) -> bool {
    // mirrors Classifier::predict, where ties go to class 0
    if target == 1 {
        p_target > 1.0 - p_target
    } else {
        p_target >= 1.0 - p_target
    }
}

/// Post-hoc sparsity: on each valid row, try restoring changed features to
/// their original values, smallest change first, keeping a restore only if
/// the row stays valid and distinct from the other rows.
fn sparsify<M: Classifier + ?Sized>(picked: &mut [Candidate], search: &Search<'_, M>) {
    let x = search.x;
    for r in 0..picked.len() {
        if !is_valid(picked[r].p_target, search.target) {
            continue;
        }
        let mut changed: Vec<usize> = (0..x.len()).filter(|&j| picked[r].row[j] != x[j]).collect();
        changed.sort_by(|&a, &b| {
            let da = (picked[r].row[a] - x[a]).abs();
            let db = (picked[r].row[b] - x[b]).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        for j in changed {
            let mut trial = picked[r].row.clone();
            trial[j] = x[j];
            let c = search.evaluate(trial);
            let distinct = picked
                .iter()
                .enumerate()
                .all(|(o, other)| o == r || dist_sq(&other.row, &c.row).sqrt() >= 1e-6);
            if is_valid(c.p_target, search.target) && distinct {
                picked[r] = c;
            }
        }
    }
}

/// Greedy set construction: valid candidates first, each step adding the
/// candidate that minimizes the set objective, skipping near-duplicates.
fn select(archive: &[Candidate], x: &[f64], target: usize, params: &DiceParams) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for pass_valid in [true, false] {
        while chosen.len() < params.k {
            let mut best: Option<(f64, usize)> = None;
            for (i, c) in archive.iter().enumerate() {
                if is_valid(c.p_target, target) != pass_valid || chosen.contains(&i) {
                    continue;
                }
                if chosen
                    .iter()
                    .any(|&s| dist_sq(&archive[s].row, &c.row).sqrt() < 1e-6)
                {
                    continue;
                }
                let mut rows: Vec<&[f64]> =
                    chosen.iter().map(|&s| archive[s].row.as_slice()).collect();
                rows.push(&c.row);
                let mut pt: Vec<f64> = chosen.iter().map(|&s| archive[s].p_target).collect();
                pt.push(c.p_target);
                let obj = set_objective(x, &rows, &pt, params);
                if best.is_none_or(|(b, _)| obj < b) {
                    best = Some((obj, i));
                }
            }
            match best {
                Some((_, i)) => chosen.push(i),
                None => break,
            }
        }
    }
    chosen
}

/// Display form of a counterfactual set: unchanged cells are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualDiff {
    pub feature_names: Vec<String>,
    pub original: Vec<f64>,
    pub original_prediction: u8,
    pub rows: Vec<DiffRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub cells: Vec<Option<f64>>,
    pub prediction: u8,
    pub valid: bool,
}

impl DiffRow {
    pub fn n_changed(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

impl CounterfactualDiff {
    /// Fixed-width table with `-` for unchanged cells.
    pub fn to_text(&self) -> String {
        let width = self
            .feature_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(12);
        let mut out = format!("{:<width$}  {:>14}", "feature", "original");
        for i in 0..self.rows.len() {
            out.push_str(&format!("  {:>14}", format!("cf{}", i + 1)));
        }
        out.push('\n');
        for (j, name) in self.feature_names.iter().enumerate() {
            out.push_str(&format!("{name:<width$}  {:>14.6}", self.original[j]));
            for r in &self.rows {
                match r.cells[j] {
                    Some(v) => out.push_str(&format!("  {v:>14.6}")),
                    None => out.push_str(&format!("  {:>14}", "-")),
                }
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "{:<width$}  {:>14}",
            "prediction", self.original_prediction
        ));
        for r in &self.rows {
            out.push_str(&format!("  {:>14}", r.prediction));
        }
        out.push('\n');
        out
    }
}

/// Original row plus one row per counterfactual, showing only changed
/// features. Values are unscaled when a scaler is given.
pub fn cf_report(
    set: &CounterfactualSet,
    scaler: Option<&ScalerParams>,
) -> Result<CounterfactualDiff> {
    let unscale = |row: &[f64]| -> Result<Vec<f64>> {
        match scaler {
            Some(s) => s.unscale_row(&set.feature_names, row),
            None => Ok(row.to_vec()),
        }
    };
    let original = unscale(&set.original.features)?;
    let rows = set
        .counterfactuals
        .iter()
        .map(|cf| {
            let raw = unscale(&cf.features)?;
            let cells = cf
                .features
                .iter()
                .zip(&set.original.features)
                .zip(raw)
                .map(|((a, b), r)| (a != b).then_some(r))
                .collect();
            Ok(DiffRow {
                cells,
                prediction: cf.prediction,
                valid: cf.valid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CounterfactualDiff {
        feature_names: set.feature_names.clone(),
        original,
        original_prediction: set.original.prediction,
        rows,
    })
}
