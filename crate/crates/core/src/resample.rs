//! SMOTE oversampling and seeded stratified sampling to per-class targets.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tabular::{ClassLabel, FeatureTable};

/// Per-class target counts plus SMOTE settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub targets: BTreeMap<String, usize>,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    5
}

impl ResamplePlan {
    pub fn new(targets: BTreeMap<String, usize>, seed: u64) -> Self {
        Self {
            targets,
            k_neighbors: default_k(),
            seed,
        }
    }

    pub fn validate(&self, table: &FeatureTable) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidPlan("k_neighbors must be ≥ 1".into()));
        }
        for class in table.class_counts().keys() {
            match self.targets.get(class) {
                None => return Err(Error::InvalidPlan(format!("class {class:?} has no target"))),
                Some(0) => return Err(Error::InvalidPlan(format!("class {class:?} has target 0"))),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    /// Row index in the output table.
    pub row: usize,
    pub source: usize,
    pub neighbor: usize,
    pub u: f64,
}

/// How each synthetic row was made.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProvenance {
    pub rows: Vec<SyntheticRow>,
    /// Neighbour count actually used.
    pub k_used: usize,
    /// Set when the requested k was clipped to class size − 1.
    pub k_clipped: bool,
}

pub fn class_counts(table: &FeatureTable) -> BTreeMap<String, usize> {
    table.class_counts()
}

/// Appends synthetic rows of `class` until it has `target` rows.
///
/// Source rows are visited round-robin; each synthetic row interpolates
/// towards one of the source's `k` nearest same-class neighbours
/// (Euclidean, ties to the lower row index) with `u ~ U[0, 1]` drawn from a
/// stream keyed by the synthetic row's ordinal.
pub fn smote_upsample(
    table: &FeatureTable,
    class: &str,
    target: usize,
    k: usize,
    seed: u64,
) -> Result<(FeatureTable, SyntheticProvenance)> {
    let members: Vec<usize> = table
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.raw == class)
        .map(|(i, _)| i)
        .collect();
    let n = members.len();
    if target < n {
        return Err(Error::InvalidParameter(format!(
            "SMOTE target {target} below current count {n} for {class:?}"
        )));
    }
    if target == n {
        return Ok((table.clone(), SyntheticProvenance::default()));
    }
    if n < 2 {
        return Err(Error::SmoteTooFewSamples {
            class: class.to_string(),
            found: n,
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be ≥ 1".into()));
    }
    let k_used = k.min(n - 1);
    let rows: Vec<Vec<f64>> = members.iter().map(|&i| table.row(i)).collect();

    let mut neighbor_cache: Vec<Option<Vec<usize>>> = vec![None; n];
    let needed = target - n;
    let mut synthetic = Vec::with_capacity(needed);
    let mut provenance = SyntheticProvenance {
        rows: Vec::with_capacity(needed),
        k_used,
        k_clipped: k_used < k,
    };
    for s in 0..needed {
        let local = s % n;
        let nn = neighbor_cache[local].get_or_insert_with(|| nearest(&rows, local, k_used));
        let mut rng = substream(seed, s as u64);
        let pick = nn[rng.random_range(0..nn.len())];
        let u: f64 = rng.random();
        let x = &rows[local];
        let x_nn = &rows[pick];
        let new_row: Vec<f64> = x.iter().zip(x_nn).map(|(&a, &b)| a + u * (b - a)).collect();
        synthetic.push(new_row);
        provenance.rows.push(SyntheticRow {
            row: table.n_rows() + s,
            source: members[local],
            neighbor: members[pick],
            u,
        });
    }
    let labels = vec![ClassLabel::raw(class); needed];
    Ok((table.append_rows(&synthetic, labels)?, provenance))
}

fn nearest(rows: &[Vec<f64>], of: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != of)
        .map(|(i, r)| (sq_dist(&rows[of], r), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, i)| i).collect()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniform sampling without replacement down to each class's target.
/// Surviving rows keep their relative order.
pub fn stratified_sample(table: &FeatureTable, plan: &ResamplePlan) -> Result<FeatureTable> {
    plan.validate(table)?;
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in table.labels().iter().enumerate() {
        by_class.entry(l.raw.as_str()).or_default().push(i);
    }
    let mut keep = Vec::new();
    for (c, (class, rows)) in by_class.iter().enumerate() {
        let target = plan.targets[*class];
        if target > rows.len() {
            return Err(Error::TargetExceedsAvailable {
                class: class.to_string(),
                target,
                available: rows.len(),
            });
        }
        let mut rng = substream(plan.seed, c as u64);
        keep.extend(
            index::sample(&mut rng, rows.len(), target)
                .into_iter()
                .map(|j| rows[j]),
        );
    }
    keep.sort_unstable();
    Ok(table.select_rows(&keep))
}

/// SMOTE every class whose target exceeds its count, then sample down.
pub fn apply_plan(
    table: &FeatureTable,
    plan: &ResamplePlan,
) -> Result<(FeatureTable, BTreeMap<String, SyntheticProvenance>)> {
    plan.validate(table)?;
    let counts = table.class_counts();
    let mut out = table.clone();
    let mut provenance = BTreeMap::new();
    for (c, (class, &have)) in counts.iter().enumerate() {
        let target = plan.targets[class];
        if target > have {
            let (t, p) = smote_upsample(
                &out,
                class,
                target,
                plan.k_neighbors,
                plan.seed.wrapping_add(0x5EED_0000 + c as u64),
            )?;
            out = t;
            provenance.insert(class.clone(), p);
        }
    }
    Ok((stratified_sample(&out, plan)?, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn make(rows: &[(Vec<f64>, &str)]) -> FeatureTable {
        let p = rows.first().map_or(2, |r| r.0.len());
        FeatureTable::from_rows(
            (0..p).map(|j| format!("f{j}")).collect(),
            &rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>(),
            "Label",
            rows.iter().map(|r| ClassLabel::raw(r.1)).collect(),
        )
        .unwrap()
    }

    fn random_table(counts: &[(&str, usize)], seed: u64) -> FeatureTable {
        let mut rng = seeded(seed);
        let mut rows = Vec::new();
        for &(c, n) in counts {
            for _ in 0..n {
                rows.push(((0..3).map(|_| rng.random::<f64>()).collect(), c));
            }
        }
        make(&rows)
    }

    #[test]
    fn buffer_overflow_68_to_500() {
        let t = random_table(&[("Normal", 50), ("Buffer_Overflow", 68)], 1);
        let (out, prov) = smote_upsample(&t, "Buffer_Overflow", 500, 5, 9).unwrap();
        assert_eq!(prov.rows.len(), 432);
        assert_eq!(out.class_counts()["Buffer_Overflow"], 500);
        assert_eq!(out.n_rows(), 118 + 432);
        assert!(!prov.k_clipped);
    }

    #[test]
    fn target_equal_is_noop() {
        let t = random_table(&[("A", 5)], 2);
        let (out, prov) = smote_upsample(&t, "A", 5, 5, 0).unwrap();
        assert!(prov.rows.is_empty());
        assert_eq!(out.rows(), t.rows());
    }

    #[test]
    fn too_few_and_clipped_k() {
        let t = random_table(&[("A", 1), ("B", 3)], 3);
        assert!(matches!(
            smote_upsample(&t, "A", 4, 5, 0),
            Err(Error::SmoteTooFewSamples { found: 1, .. })
        ));
        let (_, prov) = smote_upsample(&t, "B", 10, 5, 0).unwrap();
        assert!(prov.k_clipped);
        assert_eq!(prov.k_used, 2);
    }

    #[test]
    fn provenance_reconstructs_exactly() {
        let t = random_table(&[("A", 40), ("B", 7)], 4);
        let (out, prov) = smote_upsample(&t, "B", 60, 5, 11).unwrap();
        for s in &prov.rows {
            assert!((0.0..=1.0).contains(&s.u));
            assert_eq!(out.labels()[s.source].raw, "B");
            assert_eq!(out.labels()[s.neighbor].raw, "B");
            let x = out.row(s.source);
            let nn = out.row(s.neighbor);
            let rebuilt: Vec<f64> = x
                .iter()
                .zip(&nn)
                .map(|(&a, &b)| a + s.u * (b - a))
                .collect();
            assert_eq!(rebuilt, out.row(s.row));
        }
    }

    #[test]
    fn neighbor_is_among_k_nearest() {
        let t = random_table(&[("B", 30)], 5);
        let rows = t.rows();
        let (_, prov) = smote_upsample(&t, "B", 90, 3, 12).unwrap();
        for s in &prov.rows {
            // brute force: rank of the neighbour by distance from the source
            let d = sq_dist(&rows[s.source], &rows[s.neighbor]);
            let closer = (0..rows.len())
                .filter(|&j| j != s.source)
                .filter(|&j| {
                    let dj = sq_dist(&rows[s.source], &rows[j]);
                    dj < d || (dj == d && j < s.neighbor)
                })
                .count();
            assert!(closer < 3);
        }
    }

    #[test]
    fn stratified_exact_counts_and_errors() {
        let t = random_table(&[("Normal", 300), ("DDoS", 80)], 6);
        let plan = ResamplePlan::new(
            [("Normal".to_string(), 100), ("DDoS".to_string(), 50)].into(),
            1,
        );
        let out = stratified_sample(&t, &plan).unwrap();
        assert_eq!(out.class_counts()["Normal"], 100);
        assert_eq!(out.class_counts()["DDoS"], 50);

        let too_many = ResamplePlan::new(
            [("Normal".to_string(), 100), ("DDoS".to_string(), 81)].into(),
            1,
        );
        match stratified_sample(&t, &too_many) {
            Err(Error::TargetExceedsAvailable { class, .. }) => assert_eq!(class, "DDoS"),
            other => panic!("{other:?}"),
        }
        let missing = ResamplePlan::new([("Normal".to_string(), 1)].into(), 1);
        assert!(matches!(
            stratified_sample(&t, &missing),
            Err(Error::InvalidPlan(_))
        ));
    }

    #[test]
    fn full_targets_is_identity() {
        let t = random_table(&[("A", 20), ("B", 9)], 7);
        let plan = ResamplePlan::new(class_counts(&t), 3);
        assert_eq!(stratified_sample(&t, &plan).unwrap().rows(), t.rows());
    }

    #[test]
    fn seeds_determine_selection() {
        let t = random_table(&[("A", 200), ("B", 200)], 8);
        let plan =
            |seed| ResamplePlan::new([("A".to_string(), 50), ("B".to_string(), 50)].into(), seed);
        let a = stratified_sample(&t, &plan(1)).unwrap().rows();
        assert_eq!(a, stratified_sample(&t, &plan(1)).unwrap().rows());
        for s in 2..12 {
            assert_ne!(a, stratified_sample(&t, &plan(s)).unwrap().rows());
        }
    }

    #[test]
    fn empty_table_counts() {
        let t = make(&[]);
        assert!(class_counts(&t).is_empty());
    }

    #[test]
    fn apply_plan_leaves_other_classes_untouched() {
        let t = random_table(&[("Normal", 40), ("X", 4)], 9);
        let plan = ResamplePlan::new(
            [("Normal".to_string(), 40), ("X".to_string(), 40)].into(),
            5,
        );
        let (out, prov) = apply_plan(&t, &plan).unwrap();
        assert_eq!(prov["X"].rows.len(), 36);
        let normal_in: Vec<_> = (0..t.n_rows())
            .filter(|&i| t.labels()[i].raw == "Normal")
            .map(|i| t.row(i))
            .collect();
        let normal_out: Vec<_> = (0..out.n_rows())
            .filter(|&i| out.labels()[i].raw == "Normal")
            .map(|i| out.row(i))
            .collect();
        assert_eq!(normal_in, normal_out);
    }
}
