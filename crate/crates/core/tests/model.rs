mod common;

use common::{permuted, tiny_scene};
use msma::autodiff::Checkpoint;
use msma::model::{FusionMode, ForwardOptions, GateOverride, ModelConfig, Msma, PredictionSet};
use msma::scene::{generate_scene, vectorize, GenerateConfig, LayoutSpec, SceneInput, Source};
use msma::train::{LstmBaseline, LstmConfig, Predictor};
use msma::Error;

fn tiny_model(seed: u64) -> Msma {
    Msma::new(ModelConfig::tiny(), seed).unwrap()
}

fn scene() -> SceneInput {
    tiny_scene(5, 3)
}

fn assert_same_agent(a: &PredictionSet, i: usize, b: &PredictionSet, j: usize) {
    for m in 0..a.modes {
        assert_eq!(a.score(i, m).to_bits(), b.score(j, m).to_bits());
        for t in 0..a.horizon {
            assert_eq!(a.mean(i, m, t), b.mean(j, m, t));
            assert_eq!(a.covariance(i, m, t), b.covariance(j, m, t));
        }
    }
}

#[test]
fn attention_rows_are_normalized() {
    let (_, trace) = tiny_model(1).inspect(&scene(), ForwardOptions::eval()).unwrap();
    let names: Vec<&str> = trace.attention.iter().map(|r| r.name.as_str()).collect();
    for prefix in ["temporal.own", "temporal.sensor", "temporal.comm", "fusion", "agent_gat", "lane_gat"] {
        assert!(names.iter().any(|n| n.starts_with(prefix)), "no {prefix} record in {names:?}");
    }
    for rec in &trace.attention {
        for s in rec.row_sums() {
            assert!((s - 1.0).abs() < 1e-6 || s == 0.0, "{}: row sums to {s}", rec.name);
        }
    }
}

#[test]
fn permuting_agents_tracks_and_lanes_is_bit_exact() {
    let model = tiny_model(2);
    let base = scene();
    let p = model.predict(&base, FusionMode::Full).unwrap();
    for perm in [[2, 0, 1], [1, 2, 0], [2, 1, 0]] {
        let q = model.predict(&permuted(&base, &perm), FusionMode::Full).unwrap();
        for (i, id) in p.agent_ids.iter().enumerate() {
            assert_same_agent(&p, i, &q, q.index_of(*id).unwrap());
        }
    }
}

#[test]
fn translating_the_scene_translates_predictions() {
    let model = tiny_model(3);
    let base = scene();
    let offset = [123.4, -56.7];
    let p = model.predict(&base, FusionMode::Full).unwrap();
    let q = model.predict(&base.translated(offset), FusionMode::Full).unwrap();
    for (a, b) in p.means.iter().zip(&q.means) {
        assert!((a[0] + offset[0] - b[0]).abs() < 1e-6 && (a[1] + offset[1] - b[1]).abs() < 1e-6);
    }
    for (a, b) in p.covariances.iter().zip(&q.covariances) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn gate_limits_select_one_path() {
    let model = tiny_model(4);
    for (gate, alpha) in [(GateOverride::SensorPath, 1.0), (GateOverride::AlignedPath, 0.0)] {
        let opts = ForwardOptions {
            gate,
            ..ForwardOptions::eval()
        };
        let (_, t) = model.inspect(&scene(), opts).unwrap();
        assert_eq!(t.fused_agents, vec![3]);
        assert!(t.gates.iter().all(|&a| a == alpha));
        let expect = if alpha == 1.0 { &t.sensor_path } else { &t.aligned_path };
        assert_eq!(&t.fused, expect);
    }
}

#[test]
fn zero_gate_weights_blend_evenly() {
    let mut model = tiny_model(5);
    let id = model.params.id("fusion.w_alpha").unwrap();
    model.params.get_mut(id).data_mut().fill(0.0);
    let (_, t) = model.inspect(&scene(), ForwardOptions::eval()).unwrap();
    assert!(t.gates.iter().all(|&a| a == 0.5));
    for k in 0..t.fused.len() {
        let expect = 0.5 * t.sensor_path[k] + 0.5 * t.aligned_path[k];
        assert!((t.fused[k] - expect).abs() < 1e-12);
    }
}

#[test]
fn single_key_fusion_attends_fully() {
    let (_, t) = tiny_model(6).inspect(&scene(), ForwardOptions::eval()).unwrap();
    let fusion = t.attention.iter().find(|r| r.name == "fusion").unwrap();
    assert!(fusion.probs.iter().all(|&p| p == 1.0));
    assert_eq!(t.fusion_calls, 1);
}

#[test]
fn fusion_modes_route_dual_agents() {
    let model = tiny_model(7);
    for mode in [FusionMode::SensorOnly, FusionMode::CommOnly] {
        let opts = ForwardOptions {
            fusion: mode,
            ..ForwardOptions::eval()
        };
        let (_, t) = model.inspect(&scene(), opts).unwrap();
        assert_eq!(t.fusion_calls, 0);
        assert!(t.fused_agents.is_empty());
        // the dual agent is the only one with a broadcast track
        let comm_encoded = t.attention.iter().any(|r| r.name.starts_with("temporal.comm"));
        assert_eq!(comm_encoded, mode == FusionMode::CommOnly);
    }
}

#[test]
fn no_fusion_without_connected_vehicles() {
    let spec = LayoutSpec::town();
    let model = Msma::new(
        ModelConfig {
            history: 30,
            horizon: 50,
            ..ModelConfig::tiny()
        },
        8,
    )
    .unwrap();
    let mut fused_somewhere = false;
    for id in 0..8 {
        for mpr in [0.0, 1.0] {
            let cfg = GenerateConfig {
                scenes: 1,
                mpr,
                ..GenerateConfig::default()
            };
            let s = vectorize(&generate_scene(&spec, &cfg, id).unwrap()).unwrap();
            let (_, t) = model.inspect(&s, ForwardOptions::eval()).unwrap();
            if mpr == 0.0 {
                assert_eq!(t.fusion_calls, 0);
                assert!(s.tracks.iter().all(|t| t.source != Source::Comm));
            } else {
                fused_somewhere |= t.fusion_calls == 1;
            }
        }
    }
    assert!(fused_somewhere);
}

#[test]
fn lane_radius_is_inclusive_and_sharp() {
    let model = tiny_model(9);
    let cav = scene().agents[0].anchor;
    for (offset, connected) in [(29.9, true), (30.0, true), (30.1, false)] {
        let mut s = scene();
        let far = s.lanes.iter_mut().find(|l| l.id == 90).unwrap();
        far.start = [cav[0] - 5.0, cav[1] - offset];
        far.end = [cav[0] + 5.0, cav[1] - offset];
        far.displacement = [10.0, 0.0];
        far.reference = [cav[0], cav[1] - offset];
        let (_, t) = model.inspect(&s, ForwardOptions::eval()).unwrap();
        // agents sorted by id: 3, 5, 7; lanes: 12, 40, 41, 90
        assert_eq!(t.lane_edges[2 * 4 + 3], connected, "offset {offset}");
    }
}

#[test]
fn scores_form_a_distribution() {
    let p = tiny_model(10).predict(&scene(), FusionMode::Full).unwrap();
    for i in 0..p.len() {
        let sum: f64 = (0..p.modes).map(|m| p.score(i, m)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((0..p.modes).all(|m| p.score(i, m) > 0.0));
    }
}

#[test]
fn eval_inference_is_bit_deterministic() {
    let model = tiny_model(11);
    let a = model.predict(&scene(), FusionMode::Full).unwrap();
    let b = model.predict(&scene(), FusionMode::Full).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cav_alone_is_predicted() {
    let mut s = scene();
    s.agents.truncate(1);
    s.tracks.retain(|t| t.agent == 0);
    let p = tiny_model(12).predict(&s, FusionMode::Full).unwrap();
    assert_eq!(p.agent_ids, vec![7]);
    assert!(p.means.iter().all(|m| m[0].is_finite() && m[1].is_finite()));
}

#[test]
fn agent_without_tracks_is_a_contract_error() {
    let mut s = scene();
    s.tracks.retain(|t| t.agent != 2);
    assert!(matches!(tiny_model(13).predict(&s, FusionMode::Full), Err(Error::Contract(_))));
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let model = tiny_model(14);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.checkpoint().unwrap().write(&path).unwrap();
    let loaded = Msma::from_checkpoint(&Checkpoint::read(&path).unwrap()).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(
        loaded.predict(&scene(), FusionMode::Full).unwrap(),
        model.predict(&scene(), FusionMode::Full).unwrap()
    );
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let ck = tiny_model(15).checkpoint().unwrap();
    let wrong = toml::to_string(&ModelConfig {
        d_k: 16,
        ..ModelConfig::tiny()
    })
    .unwrap();
    let ck = ck.with_meta("model_config", wrong);
    assert!(matches!(Msma::from_checkpoint(&ck), Err(Error::Incompatible(_))));
    let lstm = LstmBaseline::new(LstmConfig::default(), 0).unwrap().checkpoint().unwrap();
    assert!(matches!(Msma::from_checkpoint(&lstm), Err(Error::Incompatible(_))));
}

#[test]
fn baseline_has_no_graph_parameters() {
    let lstm = LstmBaseline::new(LstmConfig::default(), 0).unwrap();
    assert!(lstm.params.paths().all(|p| !p.contains("gat") && !p.contains("lane") && !p.contains("fusion")));
    let s = tiny_scene(30, 50);
    let p = lstm.predict(&s, FusionMode::Full).unwrap();
    assert_eq!(p.modes, 5);
    assert_eq!(p.means.len(), 3 * 5 * 50);
}
