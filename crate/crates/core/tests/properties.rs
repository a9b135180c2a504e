use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use proptest::collection::vec;
use proptest::prelude::*;

use scenario_gcn::dataset::{
    extract_scenarios, generate_synthetic, resample_to_4hz, to_jsonl_line, Frame, RawSequence,
    ScenarioClass, SynthKnobs,
};
use scenario_gcn::evaluation::{edd_decompose, per_class_accuracy, pr_curve, EddReport};
use scenario_gcn::lane_graph::{
    resample_centerline, wrap_angle, Direction, LaneGraph, LaneSegment,
};
use scenario_gcn::model::{Prediction, TEMPORAL_LAYERS};
use scenario_gcn::scene_graph::{
    build_scene_graph, normalize_relation, AgentState, EgoPose, GraphOptions, SceneGraph,
};
use scenario_gcn::tensor::Edge;
use scenario_gcn::training::{
    compute_class_weights, lr_at_epoch, weighted_cross_entropy, TrainConfig,
};
use scenario_gcn::{SparseRelation, Tape, Tensor};

fn relation(n: usize, raw: &[(usize, usize, f64)]) -> SparseRelation {
    let mut seen = BTreeSet::new();
    let edges = raw
        .iter()
        .map(|&(s, d, w)| (s % n, d % n, w))
        .filter(|&(s, d, _)| seen.insert((s, d)))
        .map(|(s, d, w)| Edge::new(s, d, w))
        .collect();
    SparseRelation::new(n, edges).unwrap()
}

fn arb_relation() -> impl Strategy<Value = SparseRelation> {
    (1usize..=50)
        .prop_flat_map(|n| (Just(n), vec((0..n, 0..n, 0.1f64..3.0), 0..120)))
        .prop_map(|(n, raw)| relation(n, &raw))
}

/// `D^-1/2 Ã D^-1/2` with Ã = A + I on incident vertices and D the row sums
/// of max(Ã, Ãᵀ).
fn dense_normalized(rel: &SparseRelation) -> Vec<Vec<f64>> {
    let n = rel.n_vertices();
    let mut a = rel.to_dense();
    for (v, inc) in rel.incident().into_iter().enumerate() {
        if inc {
            a[v][v] += 1.0;
        }
    }
    let deg: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j].max(a[j][i])).sum())
        .collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                out[i][j] = a[i][j] / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalization_matches_dense_oracle(rel in arb_relation()) {
        let got = normalize_relation(&rel).unwrap().to_dense();
        let want = dense_normalized(&rel);
        for (g, w) in got.iter().flatten().zip(want.iter().flatten()) {
            prop_assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn normalized_symmetric_relation_is_symmetric(raw in vec((0usize..30, 0usize..30, 0.1f64..3.0), 0..80)) {
        let n = 30;
        let mut both = Vec::new();
        for &(s, d, w) in &raw {
            both.push((s, d, w));
            both.push((d, s, w));
        }
        let a = normalize_relation(&relation(n, &both)).unwrap().to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((a[i][j] - a[j][i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn isolated_vertices_keep_zero_rows(rel in arb_relation()) {
        let a = normalize_relation(&rel).unwrap().to_dense();
        for (v, inc) in rel.incident().into_iter().enumerate() {
            if !inc {
                prop_assert!(a[v].iter().all(|&x| x == 0.0));
                prop_assert!(a.iter().all(|row| row[v] == 0.0));
            }
        }
    }

    #[test]
    fn dilated_convolution_preserves_length(t_len in 1usize..40, c_in in 1usize..4, seed in any::<u64>()) {
        for &(k, dilation, pad) in &TEMPORAL_LAYERS {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::filled(vec![c_in, t_len], (seed % 7) as f64));
            let w = tape.constant(Tensor::filled(vec![2, c_in, k], 0.5));
            let y = tape.conv1d_dilated(x, w, dilation, pad).unwrap();
            prop_assert_eq!(tape.value(y).shape(), &[2, t_len][..]);
        }
    }

    #[test]
    fn backward_is_deterministic(data in vec(-2.0f64..2.0, 12), wdata in vec(-1.0f64..1.0, 12)) {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.param(Tensor::new(vec![4, 3], data.clone()).unwrap());
            let w = tape.param(Tensor::new(vec![3, 4], wdata.clone()).unwrap());
            let h = tape.matmul(x, w).unwrap();
            let h = tape.selu(h);
            let rel = Arc::new(
                SparseRelation::from_pairs(4, &[(0, 1), (1, 2), (2, 3), (3, 0)])
                    .unwrap()
                    .normalize()
                    .unwrap(),
            );
            let h = tape.propagate(&rel, h).unwrap();
            let loss = tape.weighted_cross_entropy(h, &[0, 1, 2, 3], &[1.0, 2.0, 0.5, 1.5]).unwrap();
            tape.backward(loss).unwrap();
            (tape.grad(x).unwrap().to_vec(), tape.grad(w).unwrap().to_vec())
        };
        let (a, b) = (run(), run());
        prop_assert!(a.0.iter().zip(&b.0).all(|(p, q)| p.to_bits() == q.to_bits()));
        prop_assert!(a.1.iter().zip(&b.1).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

fn straight_segment(id: &str, origin: [f64; 2], heading: f64, cuts: &[f64]) -> LaneSegment {
    let (s, c) = heading.sin_cos();
    let pts = cuts
        .iter()
        .map(|&d| [origin[0] + c * d, origin[1] + s * d])
        .collect();
    LaneSegment::new(id, pts)
}

/// Increasing arc positions starting at 0.
fn arb_cuts() -> impl Strategy<Value = Vec<f64>> {
    vec(0.2f64..15.0, 1..6).prop_map(|steps| {
        let mut acc = 0.0;
        let mut cuts = vec![0.0];
        for s in steps {
            acc += s;
            cuts.push(acc);
        }
        cuts
    })
}

fn arb_lane_graph() -> impl Strategy<Value = LaneGraph> {
    vec(
        (
            arb_cuts(),
            -PI..PI,
            -50.0f64..50.0,
            -50.0f64..50.0,
            vec(any::<bool>(), 6),
        ),
        1..6,
    )
    .prop_map(|specs| {
        let n = specs.len();
        let ids: Vec<String> = (0..n).map(|i| format!("seg{i}")).collect();
        let segments = specs
            .iter()
            .enumerate()
            .map(|(i, (cuts, heading, x, y, succ))| {
                let s: Vec<&str> = (0..n)
                    .filter(|&j| succ[j])
                    .map(|j| ids[j].as_str())
                    .collect();
                straight_segment(&ids[i], [*x, *y], *heading, cuts).with_successors(&s)
            })
            .collect();
        LaneGraph::new(segments).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn resampling_is_idempotent_in_count(cuts in arb_cuts(), heading in -PI..PI, interval in 0.5f64..5.0) {
        let seg = straight_segment("a", [3.0, -2.0], heading, &cuts);
        let once = resample_centerline(&seg, interval).unwrap();
        let again = LaneSegment::new("a", once.iter().map(|w| [w.x, w.y]).collect());
        let twice = resample_centerline(&again, interval).unwrap();
        prop_assert_eq!(once.len(), twice.len());
    }

    #[test]
    fn successor_out_degree_follows_topology(graph in arb_lane_graph()) {
        let suc = graph.directional_relation(Direction::Suc);
        let pre = graph.directional_relation(Direction::Pre);
        let mut out_deg = vec![0usize; graph.n_waypoints()];
        for e in suc.edges() {
            out_deg[e.src] += 1;
        }
        for (i, seg) in graph.segments().iter().enumerate() {
            let r = graph.segment_range(i);
            for v in r.clone() {
                let want = if v + 1 < r.end { 1 } else { seg.successor_ids.len() };
                prop_assert_eq!(out_deg[v], want, "waypoint {} of {}", v, seg.id);
            }
        }
        prop_assert_eq!(pre, suc.transpose());
    }

    #[test]
    fn waypoint_order_is_stable(graph in arb_lane_graph()) {
        let mut shuffled = graph.segments().to_vec();
        shuffled.reverse();
        let rebuilt = LaneGraph::new(shuffled).unwrap();
        prop_assert_eq!(format!("{:?}", rebuilt.waypoints()), format!("{:?}", graph.waypoints()));
        prop_assert_eq!(rebuilt.directional_relation(Direction::Suc), graph.directional_relation(Direction::Suc));
    }
}

#[derive(Debug, Clone)]
struct Scene {
    pose: EgoPose,
    agents: Vec<AgentState>,
    lanes: Vec<LaneSegment>,
}

fn arb_scene() -> impl Strategy<Value = Scene> {
    let pose = (-100.0f64..100.0, -100.0f64..100.0, -PI..PI, 0.0f64..30.0)
        .prop_map(|(x, y, phi, v)| EgoPose { x, y, phi, v });
    let agents = vec(
        (-60.0f64..60.0, -60.0f64..60.0, -PI..PI, 0.0f64..30.0),
        0..8,
    );
    let lanes = vec((arb_cuts(), -PI..PI, -60.0f64..60.0, -60.0f64..60.0), 0..4);
    (pose, agents, lanes).prop_map(|(pose, agents, lanes)| Scene {
        agents: agents
            .into_iter()
            .enumerate()
            .map(|(i, (dx, dy, phi, v))| AgentState {
                track_id: 10 + 3 * i as u64,
                x: pose.x + dx,
                y: pose.y + dy,
                phi,
                v,
            })
            .collect(),
        lanes: lanes
            .iter()
            .enumerate()
            .map(|(i, (cuts, h, dx, dy))| {
                straight_segment(&format!("l{i}"), [pose.x + dx, pose.y + dy], *h, cuts)
            })
            .collect(),
        pose,
    })
}

fn scene_graph(scene: &Scene, distance: f64, weighted: bool) -> SceneGraph {
    let options = GraphOptions {
        distance,
        weighted,
        ..GraphOptions::default()
    };
    let lanes = LaneGraph::new(scene.lanes.clone()).unwrap();
    build_scene_graph(&scene.pose, &scene.agents, &lanes, &options).unwrap()
}

fn edge_set(rel: &SparseRelation) -> BTreeSet<(usize, usize)> {
    rel.edges().iter().map(|e| (e.src, e.dst)).collect()
}

fn rigid(scene: &Scene, angle: f64, tx: f64, ty: f64) -> Scene {
    let (s, c) = angle.sin_cos();
    let p = |x: f64, y: f64| [c * x - s * y + tx, s * x + c * y + ty];
    let [x, y] = p(scene.pose.x, scene.pose.y);
    Scene {
        pose: EgoPose {
            x,
            y,
            phi: wrap_angle(scene.pose.phi + angle),
            v: scene.pose.v,
        },
        agents: scene
            .agents
            .iter()
            .map(|a| {
                let [x, y] = p(a.x, a.y);
                AgentState {
                    x,
                    y,
                    phi: wrap_angle(a.phi + angle),
                    ..*a
                }
            })
            .collect(),
        lanes: scene
            .lanes
            .iter()
            .map(|l| {
                LaneSegment::new(
                    l.id.clone(),
                    l.centerline.iter().map(|q| p(q[0], q[1])).collect(),
                )
            })
            .collect(),
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn relations_respect_vertex_partition(scene in arb_scene(), weighted in any::<bool>()) {
        let g = scene_graph(&scene, 30.0, weighted);
        let agents = 1..1 + g.n_agents();
        let waypoints = 1 + g.n_agents()..g.n_vertices();
        for e in g.raw.w2a.edges() {
            prop_assert!(waypoints.contains(&e.src) && agents.contains(&e.dst));
        }
        for (rel, other) in [(&g.raw.e2w, &waypoints), (&g.raw.e2a, &agents)] {
            for e in rel.edges() {
                let (ego, v) = if e.src == SceneGraph::EGO_INDEX { (e.src, e.dst) } else { (e.dst, e.src) };
                prop_assert_eq!(ego, SceneGraph::EGO_INDEX);
                prop_assert!(other.contains(&v));
            }
        }
        for e in g.raw.suc.edges().iter().chain(g.raw.pre.edges()) {
            prop_assert!(waypoints.contains(&e.src) && waypoints.contains(&e.dst));
        }
    }

    #[test]
    fn proximity_edges_grow_with_threshold(scene in arb_scene()) {
        let near = scene_graph(&scene, 20.0, false);
        let far = scene_graph(&scene, 30.0, false);
        for (a, b) in [(&near.raw.w2a, &far.raw.w2a), (&near.raw.e2w, &far.raw.e2w), (&near.raw.e2a, &far.raw.e2a)] {
            prop_assert!(edge_set(a).is_subset(&edge_set(b)));
        }
    }

    #[test]
    fn scene_graph_is_invariant_to_rigid_motion(
        scene in arb_scene(),
        angle in -PI..PI,
        tx in -500.0f64..500.0,
        ty in -500.0f64..500.0,
        weighted in any::<bool>(),
    ) {
        let a = scene_graph(&scene, 30.0, weighted);
        let b = scene_graph(&rigid(&scene, angle, tx, ty), 30.0, weighted);
        prop_assert_eq!(a.vertices.shape(), b.vertices.shape());
        for (i, (x, y)) in a.vertices.data().iter().zip(b.vertices.data()).enumerate() {
            if i % 4 == 2 {
                prop_assert!(angle_diff(*x, *y) <= 1e-9, "heading {x} vs {y}");
            } else {
                prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
        for (ra, rb) in [
            (&a.raw.suc, &b.raw.suc),
            (&a.raw.pre, &b.raw.pre),
            (&a.raw.w2a, &b.raw.w2a),
            (&a.raw.e2w, &b.raw.e2w),
            (&a.raw.e2a, &b.raw.e2a),
        ] {
            prop_assert_eq!(edge_set(ra), edge_set(rb));
            for (ea, eb) in ra.edges().iter().zip(rb.edges()) {
                prop_assert!((ea.weight - eb.weight).abs() <= 1e-9);
            }
        }
    }
}

fn ce_oracle(logits: &[f64], classes: usize, labels: &[usize], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += weights[y] * (lse - row[y]);
    }
    total / labels.len() as f64
}

fn arb_logits() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    (1usize..12).prop_flat_map(|t| (vec(-20.0f64..20.0, t * 8), vec(0usize..8, t)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn class_weights_balance_every_class(counts in prop::array::uniform8(1usize..100_000)) {
        let w = compute_class_weights(&counts).unwrap().w;
        let total: usize = counts.iter().sum();
        let target = total as f64 / 8.0;
        for (wi, &n) in w.iter().zip(&counts) {
            let got = wi * n as f64;
            prop_assert!((got - target).abs() <= 2.0 * f64::EPSILON * target, "{got} vs {target}");
        }
    }

    #[test]
    fn cross_entropy_is_non_negative_and_reduces_to_plain((logits, labels) in arb_logits(), w in vec(0.01f64..10.0, 8)) {
        let t = labels.len();
        let x = Tensor::new(vec![t, 8], logits.clone()).unwrap();
        let weighted = weighted_cross_entropy(&x, &labels, &w).unwrap();
        prop_assert!(weighted >= 0.0);
        prop_assert!((weighted - ce_oracle(&logits, 8, &labels, &w)).abs() <= 1e-10 * weighted.max(1.0));
        let plain = weighted_cross_entropy(&x, &labels, &[1.0; 8]).unwrap();
        prop_assert!((plain - ce_oracle(&logits, 8, &labels, &[1.0; 8])).abs() <= 1e-10 * plain.max(1.0));
    }

    #[test]
    fn learning_rate_never_increases(
        epochs in 1usize..60,
        lr0 in 1e-6f64..1.0,
        factor in 0.01f64..1.0,
        decay in vec(1usize..60, 0..6),
    ) {
        let cfg = TrainConfig { epochs, lr0, decay_factor: factor, decay_after_epochs: decay, ..TrainConfig::default() };
        let lrs: Vec<f64> = (1..=epochs).map(|e| lr_at_epoch(&cfg, e).unwrap()).collect();
        prop_assert_eq!(lrs[0], lr0);
        prop_assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn argmax_survives_uniform_shift((logits, _) in arb_logits(), shift in -100.0f64..100.0) {
        let t = logits.len() / 8;
        let base = Prediction::from_logits(Tensor::new(vec![t, 8], logits.clone()).unwrap());
        let moved: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let moved = Prediction::from_logits(Tensor::new(vec![t, 8], moved).unwrap());
        for r in 0..t {
            let row = base.logits.row(r);
            let mut sorted = row.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] - sorted[1] > 1e-9 {
                prop_assert_eq!(base.labels[r], moved.labels[r]);
            }
            let sum: f64 = moved.probabilities.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}

fn recording(hz: f64, headings: &[f64], labels: &[usize], t0: f64) -> RawSequence {
    RawSequence {
        id: "rec".into(),
        source: "prop".into(),
        hz,
        frames: headings
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&phi, &label))| Frame {
                t: t0 + i as f64 / hz,
                ego: EgoPose {
                    x: i as f64 * 2.0,
                    y: (i as f64 * 0.7).sin(),
                    phi,
                    v: 8.0 + (i % 3) as f64,
                },
                agents: vec![AgentState {
                    track_id: 4,
                    x: i as f64 * 2.0 + 10.0,
                    y: 3.5,
                    phi: -phi,
                    v: 7.0,
                }],
                label: Some(label),
            })
            .collect(),
        lanes: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn resampling_keeps_grid_aligned_endpoints(
        hz_ten in any::<bool>(),
        blocks in 1usize..8,
        start in 0u32..40,
        seed_phi in vec(-PI..PI, 41),
    ) {
        // 10 Hz frames land on the 4 Hz grid every 5 frames, 2 Hz frames always.
        let (hz, n) = if hz_ten { (10.0, 5 * blocks + 1) } else { (2.0, blocks + 1) };
        let phis: Vec<f64> = seed_phi.iter().cycle().take(n).copied().collect();
        let seq = recording(hz, &phis, &vec![0; n], start as f64 * 0.25);
        let out = resample_to_4hz(&seq).unwrap();
        let (first, last) = (&seq.frames[0], seq.frames.last().unwrap());
        let (a, b) = (&out.frames[0], out.frames.last().unwrap());
        prop_assert!((a.t - first.t).abs() <= 1e-9 && (b.t - last.t).abs() <= 1e-9);
        for (x, y) in [(&a.ego, &first.ego), (&b.ego, &last.ego)] {
            prop_assert!((x.x - y.x).abs() <= 1e-9 && (x.y - y.y).abs() <= 1e-9);
            prop_assert!(angle_diff(x.phi, y.phi) <= 1e-9);
        }
    }

    #[test]
    fn heading_interpolation_takes_the_short_arc(phis in vec(-PI..PI, 2..20)) {
        let n = phis.len();
        let seq = recording(2.0, &phis, &vec![0; n], 0.0);
        let out = resample_to_4hz(&seq).unwrap();
        for (k, f) in out.frames.iter().enumerate() {
            let i = (k / 2).min(n - 1);
            let j = (i + 1).min(n - 1);
            let gap = angle_diff(phis[j], phis[i]);
            prop_assert!(angle_diff(f.ego.phi, phis[i]) <= gap + 1e-12);
            prop_assert!(angle_diff(f.ego.phi, phis[j]) <= gap + 1e-12);
        }
    }

    #[test]
    fn extracted_windows_copy_source_frames(labels in vec(prop_oneof![3 => Just(0usize), 1 => 1usize..8], 1..80), seed in any::<u64>()) {
        let phis = vec![0.1; labels.len()];
        let seq = recording(4.0, &phis, &labels, 0.0);
        let out = extract_scenarios(&seq, seed).unwrap();
        let runs = labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| l != 0 && (i == 0 || labels[i - 1] != l))
            .count();
        prop_assert_eq!(out.len(), runs);
        for s in &out {
            let raw = s.raw();
            prop_assert!(raw.frames.iter().any(|f| f.label != Some(0)));
            let start = (raw.frames[0].t * 4.0).round() as usize;
            for (k, f) in raw.frames.iter().enumerate() {
                prop_assert_eq!(f, &seq.frames[start + k]);
            }
        }
    }

    #[test]
    fn synthetic_generation_is_deterministic(class in 1usize..8, seed in any::<u64>(), noise in 0.0f64..0.3, background in 0usize..3) {
        let class = ScenarioClass::from_id(class).unwrap();
        let knobs = SynthKnobs { noise_std: noise, background_agents: background };
        let a = generate_synthetic(class, seed, &knobs).unwrap();
        let b = generate_synthetic(class, seed, &knobs).unwrap();
        prop_assert_eq!(to_jsonl_line(a.raw()), to_jsonl_line(b.raw()));
    }
}

fn arb_label_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..=50).prop_flat_map(|n| (vec(0usize..4, n), vec(0usize..4, n)))
}

fn swap(labels: &[usize], a: usize, b: usize) -> Vec<usize> {
    labels
        .iter()
        .map(|&l| {
            if l == a {
                b
            } else if l == b {
                a
            } else {
                l
            }
        })
        .collect()
}

fn report(gt: &[usize], pred: &[usize]) -> EddReport {
    edd_decompose(gt, pred).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn edd_partitions_frames((gt, pred) in arb_label_pair()) {
        let r = report(&gt, &pred);
        prop_assert_eq!(r.total(), gt.len());
        let correct = gt.iter().zip(&pred).filter(|(g, p)| g == p).count();
        prop_assert_eq!(r.correct, correct);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn edd_ignores_class_names((gt, pred) in arb_label_pair(), a in 1usize..4, b in 1usize..4) {
        prop_assert_eq!(report(&gt, &pred), report(&swap(&gt, a, b), &swap(&pred, a, b)));
    }

    #[test]
    fn pr_auc_is_bounded_and_rewards_positives(
        data in vec((0.0f64..1.0, any::<bool>()), 1..60),
        pick in any::<prop::sample::Index>(),
        bump in 0.0f64..1.0,
    ) {
        let (mut scores, positive): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
        prop_assume!(positive.iter().any(|&p| p));
        let before = pr_curve(1, &scores, &positive).unwrap().auc;
        prop_assert!((0.0..=1.0).contains(&before));
        let tps: Vec<usize> = (0..scores.len()).filter(|&i| positive[i]).collect();
        scores[tps[pick.index(tps.len())]] += bump;
        let after = pr_curve(1, &scores, &positive).unwrap().auc;
        prop_assert!(after >= before - 1e-12, "{before} -> {after}");
        prop_assert!((0.0..=1.0).contains(&after));
    }

    #[test]
    fn per_class_accuracy_is_a_fraction((gt, pred) in arb_label_pair(), c in 0usize..4) {
        match per_class_accuracy(&gt, &pred, c).unwrap() {
            None => prop_assert!(!gt.contains(&c)),
            Some(acc) => {
                prop_assert!((0.0..=1.0).contains(&acc));
                let all = gt.iter().zip(&pred).all(|(&g, &p)| g != c || p == c);
                prop_assert_eq!(acc == 1.0, all);
            }
        }
    }
}
