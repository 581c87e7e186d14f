use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringfl::data::*;
use ringfl::global::*;
use ringfl::nn::*;
use ringfl::protocol::*;
use ringfl::ring::*;

fn spec() -> ModelSpec {
    ModelSpec::mlp(&[6, 12, 8, 4], 2).unwrap()
}

fn blobs(per_class: usize, spread: f64, seed: u64) -> Dataset {
    gen_blobs(&SyntheticSpec {
        num_classes: 4,
        dims: 6,
        samples_per_class: per_class,
        cluster_spread: spread,
        inter_cluster_scale: 2.0,
        informative_dims: None,
        seed,
    })
    .unwrap()
}

fn all(ds: &Dataset) -> LocalData {
    ds.local(&(0..ds.len()).collect::<Vec<_>>()).unwrap()
}

fn random_model(seed: u64, heads: usize) -> (ParamSet, Vec<ParamSet>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = ParamSet::init(&spec(), Segment::Backbone, &mut rng);
    (b, (0..heads).map(|_| ParamSet::init(&spec(), Segment::Head, &mut rng)).collect())
}

fn fingerprints(b: &ParamSet, heads: &[ParamSet]) -> Vec<u64> {
    std::iter::once(b).chain(heads).map(ParamSet::fingerprint).collect()
}

#[test]
fn single_head_cache_is_that_heads_logits() {
    let ds = blobs(5, 1.0, 1);
    let data = all(&ds);
    let (b, heads) = random_model(1, 1);
    let cache = collect_head_outputs(&spec(), &b, &heads, &[&data]).unwrap();
    let logits = forward_split(&spec(), &b, &heads[0], &data.inputs).unwrap().logits;
    assert_eq!(cache.rows(), &logits);
    assert_eq!(cache.labels(), ds.class_labels().unwrap());
}

#[test]
fn duplicated_head_gives_identical_halves() {
    let data = all(&blobs(5, 1.0, 2));
    let (b, heads) = random_model(2, 1);
    let cache = collect_head_outputs(&spec(), &b, &[heads[0].clone(), heads[0].clone()], &[&data]).unwrap();
    for i in 0..cache.len() {
        let row = cache.rows().row(i);
        assert_eq!(row[..4], row[4..]);
    }
}

#[test]
fn integrator_fits_a_separable_cache() {
    let data = all(&blobs(20, 0.2, 3));
    let (b, heads) = random_model(3, 3);
    let before = fingerprints(&b, &heads);
    let cache = collect_head_outputs(&spec(), &b, &heads, &[&data]).unwrap();
    let cfg = FitConfig { epochs: 300, batch_size: 16, lr: 1e-2, ..FitConfig::default() };
    let ens = train_integrator(&spec(), &b, &heads, &cache, integrator_spec(cache.width(), 4).unwrap(), &cfg, 3).unwrap();
    let scores = ens.integrator.forward(cache.rows()).unwrap();
    let hits = (0..cache.len()).filter(|&i| argmax(scores.row(i)) == cache.labels()[i]).count();
    assert_eq!(hits, cache.len());
    assert_eq!(ens.accuracy(&data).unwrap(), 1.0);
    assert_eq!(fingerprints(&b, &heads), before);
    assert_eq!(fingerprints(&ens.backbone, &ens.heads), before);
}

/// Hidden units `j` and `4 + j` carry `relu(z_j)` and `relu(−z_j)` of
/// head 0's logit `j`; the output subtracts them.
fn head0_passthrough(clients: usize) -> SmallNet {
    let k = 4;
    let ispec = integrator_spec(clients * k, k).unwrap();
    let mut lower = ParamSet::zeros(&ispec, Segment::Backbone);
    let mut upper = ParamSet::zeros(&ispec, Segment::Head);
    let hidden = 4 * k;
    let w = &mut lower.layer_mut(0).unwrap().weight;
    for j in 0..k {
        w.values_mut()[j * hidden + j] = 1.0;
        w.values_mut()[j * hidden + k + j] = -1.0;
    }
    let u = &mut upper.layer_mut(1).unwrap().weight;
    for j in 0..k {
        u.values_mut()[j * k + j] = 1.0;
        u.values_mut()[(k + j) * k + j] = -1.0;
    }
    SmallNet::new(ispec, lower, upper).unwrap()
}

#[test]
fn passthrough_integrator_predicts_like_head_zero() {
    let data = all(&blobs(10, 1.0, 4));
    let (b, heads) = random_model(4, 3);
    let ens = StackedEnsemble::new(spec(), b.clone(), heads.clone(), head0_passthrough(3)).unwrap();
    let preds = predict_stacked(&ens, &data.inputs).unwrap();
    let logits = forward_split(&spec(), &b, &heads[0], &data.inputs).unwrap().logits;
    for (i, p) in preds.iter().enumerate() {
        assert_eq!(*p, argmax(logits.row(i)));
    }
    assert_eq!(preds, predict_stacked(&ens, &data.inputs).unwrap());
}

#[test]
fn batch_predictions_equal_single_predictions() {
    let data = all(&blobs(6, 1.0, 5));
    let (b, heads) = random_model(5, 2);
    let cache = collect_head_outputs(&spec(), &b, &heads, &[&data]).unwrap();
    let cfg = FitConfig { epochs: 5, ..FitConfig::default() };
    let stacked = train_integrator(&spec(), &b, &heads, &cache, integrator_spec(cache.width(), 4).unwrap(), &cfg, 5).unwrap();
    let moe = train_gating(&spec(), &b, &heads, &data, &cfg, 5).unwrap();
    let (sb, mb) = (predict_stacked(&stacked, &data.inputs).unwrap(), predict_moe(&moe, &data.inputs).unwrap());
    for i in 0..data.len() {
        let x = data.inputs.select_rows(&[i]);
        assert_eq!(predict_stacked(&stacked, &x).unwrap(), vec![sb[i]]);
        assert_eq!(predict_moe(&moe, &x).unwrap(), vec![mb[i]]);
    }
}

#[test]
fn integrator_with_wrong_width_rejected() {
    let (b, heads) = random_model(6, 2);
    assert!(StackedEnsemble::new(spec(), b, heads, head0_passthrough(3)).is_err());
}

#[test]
fn single_expert_gets_all_the_weight() {
    let data = all(&blobs(6, 1.0, 7));
    let (b, heads) = random_model(7, 1);
    let before = fingerprints(&b, &heads);
    let moe = train_gating(&spec(), &b, &heads, &data, &FitConfig { epochs: 3, ..FitConfig::default() }, 7).unwrap();
    let w = moe.weights(&data.inputs).unwrap();
    assert!(w.values().iter().all(|&v| v == 1.0));
    let expert = softmax_rows(&forward_split(&spec(), &b, &heads[0], &data.inputs).unwrap().logits);
    let mix = moe.mixture(&data.inputs).unwrap();
    for (a, e) in mix.values().iter().zip(expert.values()) {
        assert!((a - e).abs() <= 1e-15);
    }
    assert_eq!(fingerprints(&b, &heads), before);
}

#[test]
fn gate_weights_and_mixtures_are_probability_vectors() {
    let data = all(&blobs(10, 1.5, 8));
    let (b, heads) = random_model(8, 5);
    let moe = train_gating(&spec(), &b, &heads, &data, &FitConfig { epochs: 10, ..FitConfig::default() }, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Tensor::matrix(200, 6, (0..1200).map(|_| rng.random_range(-20.0..20.0)).collect()).unwrap();
    for t in [moe.weights(&x).unwrap(), moe.mixture(&x).unwrap()] {
        for i in 0..t.rows() {
            assert!(t.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn mixture_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let c = rng.random_range(1..6);
        let z: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
        let (_, g) = mixture_nll(&z, &q);
        for k in 0..c {
            let h = 1e-6;
            let (mut up, mut down) = (z.clone(), z.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (mixture_nll(&up, &q).0 - mixture_nll(&down, &q).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "{fd} vs {}", g[k]);
        }
    }
}

/// Two far-apart input clusters; expert 0 always says class 0 and expert 1
/// always says class 1, so each cluster has exactly one correct expert.
#[test]
fn gate_learns_which_expert_is_right() {
    let spec = ModelSpec::mlp(&[2, 8, 6, 2], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let b = ParamSet::init(&spec, Segment::Backbone, &mut rng);
    let heads: Vec<ParamSet> = (0..2)
        .map(|c| {
            let mut h = ParamSet::zeros(&spec, Segment::Head);
            h.layer_mut(2).unwrap().bias.values_mut()[c] = 4.0;
            h
        })
        .collect();
    let n = 200;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let class = i % 2;
        let centre = if class == 0 { -3.0 } else { 3.0 };
        x.push(centre + rng.random_range(-1.0..1.0));
        x.push(centre + rng.random_range(-1.0..1.0));
        y.push(class);
    }
    let data = LocalData { inputs: Tensor::matrix(n, 2, x).unwrap(), targets: Targets::Classes(y.clone()), indices: (0..n).collect() };
    let moe = train_gating(&spec, &b, &heads, &data, &FitConfig { epochs: 60, batch_size: 16, lr: 1e-2, ..FitConfig::default() }, 10)
        .unwrap();
    let w = moe.weights(&data.inputs).unwrap();
    let right = (0..n).filter(|&i| argmax(w.row(i)) == y[i]).count();
    assert!(right as f64 >= 0.9 * n as f64, "{right}/{n}");
}

fn gate_with_bias(spec: &ModelSpec, experts: usize, bias: &[f64]) -> SmallNet {
    let g = gating_spec(spec.feature_width(), experts).unwrap();
    let lower = ParamSet::zeros(&g, Segment::Backbone);
    let mut upper = ParamSet::zeros(&g, Segment::Head);
    upper.layer_mut(1).unwrap().bias.values_mut().copy_from_slice(bias);
    SmallNet::new(g, lower, upper).unwrap()
}

#[test]
fn uniform_gate_over_identical_experts_is_one_expert() {
    let data = all(&blobs(10, 1.0, 11));
    let (b, heads) = random_model(11, 1);
    let same = vec![heads[0].clone(); 3];
    let moe = GatingEnsemble::new(spec(), b.clone(), same, gate_with_bias(&spec(), 3, &[0.0; 3])).unwrap();
    let logits = forward_split(&spec(), &b, &heads[0], &data.inputs).unwrap().logits;
    let preds = predict_moe(&moe, &data.inputs).unwrap();
    assert!(preds.iter().enumerate().all(|(i, &p)| p == argmax(logits.row(i))));
}

#[test]
fn saturated_gate_follows_its_expert() {
    let data = all(&blobs(10, 1.0, 12));
    let (b, heads) = random_model(12, 3);
    for c in 0..3 {
        let mut bias = [0.0; 3];
        bias[c] = 60.0;
        let moe = GatingEnsemble::new(spec(), b.clone(), heads.clone(), gate_with_bias(&spec(), 3, &bias)).unwrap();
        let logits = forward_split(&spec(), &b, &heads[c], &data.inputs).unwrap().logits;
        let preds = predict_moe(&moe, &data.inputs).unwrap();
        assert!(preds.iter().enumerate().all(|(i, &p)| p == argmax(logits.row(i))));
    }
}

struct RingTask {
    spec: ModelSpec,
    ds: Dataset,
    nodes: Vec<NodeState>,
    init: Initialization,
}

impl RingTask {
    fn new(seed: u64, beta: f64) -> Self {
        let spec = ModelSpec::mlp(&[10, 24, 16, 5], 2).unwrap();
        let ds = gen_blobs(&SyntheticSpec {
            num_classes: 5,
            dims: 10,
            samples_per_class: 80,
            cluster_spread: 1.5,
            inter_cluster_scale: 1.0,
            informative_dims: None,
            seed,
        })
        .unwrap();
        let plan = partition(&ds, &HeterogeneityConfig { scheme: Heterogeneity::Dirichlet { beta, min_samples: 10 }, clients: 4, seed })
            .unwrap();
        let plan = split_local_train_test(&ds, &plan, 0.25, seed).unwrap();
        let init = init_params(&spec, 4, seed);
        let nodes = build_nodes(&ds, &plan, &init.heads, OptimizerConfig::adamw(0.1), NodeTargets::Classes, seed).unwrap();
        Self { spec, ds, nodes, init }
    }

    fn pooled(&self) -> (LocalData, LocalData) {
        let train: Vec<&LocalData> = self.nodes.iter().map(|n| &n.train).collect();
        let test: Vec<&LocalData> = self.nodes.iter().map(|n| &n.test).collect();
        (LocalData::concat(&train).unwrap(), LocalData::concat(&test).unwrap())
    }

    fn run_li(&mut self, rounds: u32) -> ParamSet {
        let s = Schedule { rounds, batch_size: 4, ..Schedule::default() };
        let r = run_li(
            &self.spec,
            &mut self.nodes,
            SharedBackbone::new(self.init.backbone.clone(), s.optimizer),
            &s,
            &RingTopology::healthy(4).unwrap(),
            &FaultScript::default(),
            &mut NoObserver,
        )
        .unwrap();
        r.backbone.unwrap().params
    }
}

#[test]
fn probe_leaves_backbone_alone_and_improves_with_training() {
    let cfg = FitConfig { epochs: 40, ..FitConfig::default() };
    let mut better = 0;
    for seed in 0..10 {
        let mut t = RingTask::new(100 + seed, 0.5);
        let (train, test) = t.pooled();
        let random = t.init.backbone.clone();
        let before = random.fingerprint();
        let p0 = probe_backbone(&t.spec, &random, &train, &test, &cfg, seed).unwrap();
        assert_eq!(random.fingerprint(), before);
        let trained = t.run_li(15);
        let p1 = probe_backbone(&t.spec, &trained, &train, &test, &cfg, seed).unwrap();
        better += usize::from(p0.accuracy <= p1.accuracy);
    }
    assert!(better >= 6, "{better}/10");
}

#[test]
fn global_models_on_a_ring_trained_backbone() {
    let mut t = RingTask::new(200, 1.0);
    let backbone = t.run_li(15);
    let (train, test) = t.pooled();
    let heads: Vec<ParamSet> = t.nodes.iter().map(|n| n.head.clone()).collect();
    let cfg = FitConfig { epochs: 40, ..FitConfig::default() };
    let probe = probe_backbone(&t.spec, &backbone, &train, &test, &cfg, 1).unwrap();
    let parts: Vec<&LocalData> = t.nodes.iter().map(|n| &n.train).collect();
    let cache = collect_head_outputs(&t.spec, &backbone, &heads, &parts).unwrap();
    let classes = t.ds.num_classes().unwrap();
    let stacked = train_integrator(&t.spec, &backbone, &heads, &cache, integrator_spec(cache.width(), classes).unwrap(), &cfg, 2).unwrap();
    let moe = train_gating(&t.spec, &backbone, &heads, &train, &cfg, 3).unwrap();
    let (s, m) = (stacked.accuracy(&test).unwrap(), moe.accuracy(&test).unwrap());
    assert!(probe.accuracy > 0.5 && s > 0.5 && m > 0.3, "probe {} stacked {s} moe {m}", probe.accuracy);
    assert!(heads.iter().zip(&t.nodes).all(|(h, n)| h.bitwise_eq(&n.head)));
}
