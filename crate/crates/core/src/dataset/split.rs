use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{class_name, ScenarioSequence, N_CLASSES, TARGET_HZ};
use crate::evaluation::segmentize;

/// The non-zero class with the most frames; ties go to the lower id.
pub fn dominant_class(labels: &[usize]) -> usize {
    let mut counts = [0usize; N_CLASSES];
    for &l in labels {
        if l != 0 && l < N_CLASSES {
            counts[l] += 1;
        }
    }
    (1..N_CLASSES)
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        .filter(|&c| counts[c] > 0)
        .unwrap_or(0)
}

/// Indices into the input sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Splits whole sequences, stratified by dominant class.
///
/// Each class with at least two sequences gets at least one on each side;
/// a class with a single sequence goes to train with a warning. Class
/// quotas are rounded by largest remainder so the train total is
/// `round(train_ratio * n)` whenever those constraints allow it.
pub fn split(seqs: &[ScenarioSequence], train_ratio: f64, seed: u64) -> Split {
    assert!(
        (0.0..=1.0).contains(&train_ratio),
        "train ratio must lie in [0, 1]"
    );
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in seqs.iter().enumerate() {
        groups
            .entry(dominant_class(&s.labels()))
            .or_default()
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
    }

    struct Quota {
        class: usize,
        n: usize,
        take: usize,
        remainder: f64,
    }
    let mut quotas: Vec<Quota> = groups
        .iter()
        .map(|(&class, m)| {
            let n = m.len();
            let ideal = train_ratio * n as f64;
            let take = if n == 1 {
                log::warn!(
                    "class {} ({}) has a single sequence; it goes to the training split",
                    class,
                    class_name(class)
                );
                1
            } else {
                (ideal.floor() as usize).clamp(1, n - 1)
            };
            Quota {
                class,
                n,
                take,
                remainder: ideal - ideal.floor(),
            }
        })
        .collect();

    let target = (train_ratio * seqs.len() as f64).round() as usize;
    let mut total: usize = quotas.iter().map(|q| q.take).sum();
    let by_remainder = |a: &Quota, b: &Quota| {
        b.remainder
            .total_cmp(&a.remainder)
            .then(a.class.cmp(&b.class))
    };
    quotas.sort_by(by_remainder);
    for q in quotas.iter_mut() {
        if total >= target {
            break;
        }
        if q.n >= 2 && q.take < q.n - 1 {
            q.take += 1;
            total += 1;
        }
    }
    for q in quotas.iter_mut().rev() {
        if total <= target {
            break;
        }
        if q.n >= 2 && q.take > 1 {
            q.take -= 1;
            total -= 1;
        }
    }

    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
    };
    for q in &quotas {
        let members = &groups[&q.class];
        out.train.extend_from_slice(&members[..q.take]);
        out.val.extend_from_slice(&members[q.take..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out
}

/// Per-class statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: usize,
    pub name: String,
    pub instances: usize,
    pub frames: usize,
    pub mean_duration_s: Option<f64>,
    pub std_duration_s: Option<f64>,
}

/// Record of a split: which sequence went where, and what each side holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub train_ratio: f64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub train_stats: Vec<ClassStats>,
    pub val_stats: Vec<ClassStats>,
}

fn class_stats<'a>(seqs: impl IntoIterator<Item = &'a ScenarioSequence>) -> Vec<ClassStats> {
    let mut frames = [0usize; N_CLASSES];
    let mut durations: Vec<Vec<f64>> = vec![Vec::new(); N_CLASSES];
    for s in seqs {
        for seg in segmentize(&s.labels()) {
            frames[seg.class] += seg.len();
            if seg.class != 0 {
                durations[seg.class].push(seg.len() as f64 / TARGET_HZ);
            }
        }
    }
    (0..N_CLASSES)
        .map(|c| {
            let d = &durations[c];
            let mean = (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64);
            let std = mean
                .map(|m| (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt());
            ClassStats {
                class: c,
                name: class_name(c).to_string(),
                instances: d.len(),
                frames: frames[c],
                mean_duration_s: mean,
                std_duration_s: std,
            }
        })
        .collect()
}

impl DatasetManifest {
    pub fn new(seqs: &[ScenarioSequence], split: &Split, train_ratio: f64, seed: u64) -> Self {
        let pick = |idx: &[usize]| idx.iter().map(|&i| &seqs[i]).collect::<Vec<_>>();
        let (train, val) = (pick(&split.train), pick(&split.val));
        Self {
            seed,
            train_ratio,
            train: train.iter().map(|s| s.id().to_string()).collect(),
            val: val.iter().map(|s| s.id().to_string()).collect(),
            train_stats: class_stats(train.iter().copied()),
            val_stats: class_stats(val.iter().copied()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Frame, RawSequence};
    use crate::scene_graph::EgoPose;

    fn seq(id: &str, labels: &[usize]) -> ScenarioSequence {
        ScenarioSequence::new(RawSequence {
            id: id.into(),
            source: "unit".into(),
            hz: 4.0,
            frames: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Frame {
                    t: i as f64 * 0.25,
                    ego: EgoPose {
                        x: 0.0,
                        y: 0.0,
                        phi: 0.0,
                        v: 0.0,
                    },
                    agents: vec![],
                    label: Some(l),
                })
                .collect(),
            lanes: vec![],
        })
        .unwrap()
    }

    fn dataset(per_class: &[(usize, usize)]) -> Vec<ScenarioSequence> {
        let mut out = Vec::new();
        for &(c, n) in per_class {
            for i in 0..n {
                out.push(seq(&format!("c{c}-{i}"), &[0, c, c, c, 0, 0, 0, 0]));
            }
        }
        out
    }

    #[test]
    fn dominant_class_ignores_background() {
        assert_eq!(dominant_class(&[0, 0, 0, 2, 2, 5]), 2);
        assert_eq!(dominant_class(&[0, 3, 5]), 3);
        assert_eq!(dominant_class(&[0, 0]), 0);
    }

    #[test]
    fn ten_sequences_split_eight_two() {
        let seqs = dataset(&[(1, 10)]);
        let s = split(&seqs, 0.8, 3);
        assert_eq!((s.train.len(), s.val.len()), (8, 2));
    }

    #[test]
    fn every_class_on_both_sides_and_total_matches() {
        let seqs = dataset(&[(1, 7), (2, 3), (3, 2), (5, 11), (7, 1)]);
        for seed in 0..10 {
            let s = split(&seqs, 0.8, seed);
            assert_eq!(s.train.len() + s.val.len(), seqs.len());
            assert_eq!(s.train.len(), 19);
            for c in [1, 2, 3, 5] {
                let has =
                    |idx: &[usize]| idx.iter().any(|&i| dominant_class(&seqs[i].labels()) == c);
                assert!(has(&s.train) && has(&s.val), "class {c}");
            }
            assert!(s.train.iter().any(|&i| seqs[i].id() == "c7-0"));
        }
    }

    #[test]
    fn split_is_seeded() {
        let seqs = dataset(&[(1, 6), (4, 6)]);
        assert_eq!(split(&seqs, 0.5, 9), split(&seqs, 0.5, 9));
        let m = DatasetManifest::new(&seqs, &split(&seqs, 0.5, 9), 0.5, 9);
        assert_eq!(m.train.len(), 6);
        assert_eq!(m.train_stats[1].instances + m.train_stats[4].instances, 6);
        assert_eq!(
            m.train_stats[1].mean_duration_s.map(|d| d * 4.0),
            m.train_stats[1].instances.gt(&0).then_some(3.0)
        );
    }
}
