use motionhmm::classifiers::linear::{fit_traced, Loss, Penalty};
use motionhmm::dataset::{parse_frames, write_frames, Channel};
use motionhmm::evaluation::{confusion, stratified_kfold, summarize, total_accuracy, Axis, Grid};
use motionhmm::features::{apply_scaler, derivative, fit_scaler, smooth, unwrap_angles};
use motionhmm::fhmm::{self, FhmmParams};
use motionhmm::hmm::{self, posteriors, viterbi};
use motionhmm::math::log_sum_exp;
use motionhmm::selection::wasserstein;
use motionhmm::systems::PowerSetCodec;
use motionhmm::{HmmParams, LabelVector, MotionRecord, ObservationSequence, Topology};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

prop_compose! {
    fn hmm_and_obs(max_k: usize, max_t: usize)
        (k in 1..=max_k, d in 1..=2usize, t in 1..=max_t, ltr in any::<bool>())
        (pi in prop::collection::vec(0.05..1.0f64, k),
         a in prop::collection::vec(0.05..1.0f64, k * k),
         means in prop::collection::vec(-3.0..3.0f64, k * d),
         cov in prop::collection::vec(0.2..2.0f64, k * d),
         obs in prop::collection::vec(-4.0..4.0f64, t * d),
         k in Just(k), d in Just(d), t in Just(t), ltr in Just(ltr))
        -> (HmmParams, ObservationSequence)
    {
        let topology = if ltr { Topology::left_to_right(1) } else { Topology::Ergodic };
        let mask = topology.mask(k);
        let start = topology.start_mask(k);
        let pi = normalize(pi.iter().zip(start.iter()).map(|(p, ok)| if *ok { *p } else { 0.0 }).collect());
        let mut trans = Array2::zeros((k, k));
        for i in 0..k {
            let row = normalize((0..k).map(|j| if mask[[i, j]] { a[i * k + j] } else { 0.0 }).collect());
            for j in 0..k {
                trans[[i, j]] = row[j];
            }
        }
        let model = HmmParams::new(
            Some(topology),
            Array1::from(pi),
            trans,
            Array2::from_shape_vec((k, d), means).unwrap(),
            Array2::from_shape_vec((k, d), cov).unwrap(),
            mask,
        ).unwrap();
        (model, ObservationSequence::new(Array2::from_shape_vec((t, d), obs).unwrap(), 0.01))
    }
}

fn log_gauss(x: &[f64], m: &[f64], v: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| -0.5 * ((2.0 * std::f64::consts::PI * v[i]).ln() + (x[i] - m[i]).powi(2) / v[i]))
        .sum()
}

/// Every path's joint log-probability, in lexicographic path order.
fn all_paths(model: &HmmParams, obs: &ObservationSequence) -> Vec<(Vec<usize>, f64)> {
    let (k, t) = (model.states(), obs.len());
    (0..k.pow(t as u32))
        .map(|mut code| {
            let mut path = vec![0; t];
            for s in path.iter_mut().rev() {
                *s = code % k;
                code /= k;
            }
            let emit = |i: usize, s: usize| {
                log_gauss(
                    obs.data.row(i).as_slice().unwrap(),
                    model.means.row(s).as_slice().unwrap(),
                    model.covariances.row(s).as_slice().unwrap(),
                )
            };
            let mut lp = model.pi[path[0]].ln() + emit(0, path[0]);
            for i in 1..t {
                lp += model.transitions[[path[i - 1], path[i]]].ln() + emit(i, path[i]);
            }
            (path, lp)
        })
        .collect()
}

fn naive_log_sum(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn label_matrix(bits: &[Vec<bool>]) -> Vec<LabelVector> {
    bits.iter().map(|b| LabelVector::new(b.clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_matches_path_enumeration((model, obs) in hmm_and_obs(3, 5)) {
        let paths = all_paths(&model, &obs);
        let want = naive_log_sum(&paths.iter().map(|p| p.1).collect::<Vec<_>>());
        let got = hmm::log_likelihood(&model, &obs).unwrap();
        prop_assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn gamma_matches_path_marginals((model, obs) in hmm_and_obs(3, 4)) {
        let paths = all_paths(&model, &obs);
        let total = naive_log_sum(&paths.iter().map(|p| p.1).collect::<Vec<_>>());
        let post = posteriors(&model, &obs).unwrap();
        for t in 0..obs.len() {
            prop_assert!((post.gamma.row(t).sum() - 1.0).abs() < 1e-9);
            for s in 0..model.states() {
                let want: f64 = paths.iter().filter(|p| p.0[t] == s).map(|p| (p.1 - total).exp()).sum();
                prop_assert!((post.gamma[[t, s]] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn viterbi_finds_the_best_path((model, obs) in hmm_and_obs(3, 5)) {
        let paths = all_paths(&model, &obs);
        let best = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let (path, score) = viterbi(&model, &obs).unwrap();
        prop_assert!((score - best).abs() < 1e-8);
        let own = paths.iter().find(|p| p.0 == path).unwrap().1;
        prop_assert!((own - score).abs() < 1e-8);
        prop_assert!(score <= hmm::log_likelihood(&model, &obs).unwrap() + 1e-9);
    }

    #[test]
    fn fhmm_factored_equals_flattened(
        (a, obs) in hmm_and_obs(3, 4),
        seed in 0u64..1000,
    ) {
        let mut b = a.clone();
        b.means.mapv_inplace(|m| m * 0.5 + (seed % 7) as f64 * 0.1);
        let model = FhmmParams::new(vec![a, b]).unwrap();
        let flat = fhmm::flatten(&model).unwrap();
        let x = fhmm::log_likelihood(&model, &obs).unwrap();
        let y = hmm::log_likelihood(&flat, &obs).unwrap();
        prop_assert!((x - y).abs() < 1e-10);
        for j in 0..model.joint_states().unwrap() {
            prop_assert_eq!(model.encode_joint(&model.decode_joint(j)), j);
        }
    }

    #[test]
    fn log_sum_exp_agrees(v in prop::collection::vec(-700.0..700.0f64, 1..20)) {
        let got = log_sum_exp(&v);
        let want = naive_log_sum(&v);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn unwrap_bounds_steps_and_is_idempotent(v in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let series = Array2::from_shape_vec((v.len(), 1), v).unwrap();
        let u = unwrap_angles(series.view());
        prop_assert_eq!(u[[0, 0]], series[[0, 0]]);
        for t in 1..u.nrows() {
            prop_assert!((u[[t, 0]] - u[[t - 1, 0]]).abs() <= std::f64::consts::PI + 1e-9);
        }
        let twice = unwrap_angles(u.view());
        for (a, b) in twice.iter().zip(u.iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_and_derivatives_of_constants(c in -100.0..100.0f64, t in 2..20usize, w in 1..8usize) {
        let s = Array2::from_elem((t, 2), c);
        prop_assert!(smooth(s.view(), w).iter().all(|x| (x - c).abs() <= 1e-12 * c.abs().max(1.0)));
        prop_assert!(derivative(s.view(), 0.01).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn scaler_maps_training_into_unit_range(v in prop::collection::vec(-50.0..50.0f64, 2..40)) {
        let seq = ObservationSequence::new(Array2::from_shape_vec((v.len(), 1), v).unwrap(), 0.01);
        let p = fit_scaler(std::slice::from_ref(&seq)).unwrap();
        prop_assert!(p.ranges[0].0 <= p.ranges[0].1);
        let scaled = apply_scaler(seq.data.view(), &p).unwrap();
        prop_assert!(scaled.iter().all(|x| (-1.0 - 1e-12..=1.0 + 1e-12).contains(x)));
    }

    #[test]
    fn total_accuracy_bounded_by_label_accuracy(
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 3), 2..30),
        flips in prop::collection::vec(any::<u8>(), 90),
    ) {
        let truth = label_matrix(&bits);
        let pred: Vec<LabelVector> = bits
            .iter()
            .enumerate()
            .map(|(i, b)| LabelVector::new(b.iter().enumerate().map(|(j, x)| x ^ (flips[(3 * i + j) % 90] % 4 == 0)).collect()))
            .collect();
        let total = total_accuracy(&pred, &truth).unwrap();
        let s = summarize(&pred, &truth).unwrap();
        for m in &s.per_label {
            prop_assert!(total <= m.accuracy);
            prop_assert!((0.0..=1.0).contains(&m.f1));
        }
        let c = confusion(&pred, &truth).unwrap();
        prop_assert!(c.labels.iter().all(|l| l.total() == truth.len()));
    }

    #[test]
    fn folds_partition_the_samples(
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..4), 6..50),
        k in 2..6usize,
        seed in any::<u64>(),
    ) {
        let width = bits[0].len();
        let rows: Vec<Vec<bool>> = bits.iter().map(|b| (0..width).map(|j| *b.get(j).unwrap_or(&false)).collect()).collect();
        let f = stratified_kfold(&label_matrix(&rows), k, seed).unwrap();
        prop_assert_eq!(f.folds.len(), rows.len());
        prop_assert_eq!(f.fold_sizes().iter().sum::<usize>(), rows.len());
        prop_assert!(f.fold_sizes().iter().all(|&s| s > 0));
        prop_assert_eq!(&f, &stratified_kfold(&label_matrix(&rows), k, seed).unwrap());
    }

    #[test]
    fn grid_enumerates_the_product(sizes in prop::collection::vec(1..4usize, 1..4)) {
        let grid = Grid {
            axes: sizes.iter().enumerate().map(|(i, &n)| Axis {
                name: format!("p{i}"),
                values: (0..n).map(|v| serde_json::json!(v)).collect(),
            }).collect(),
        };
        let combos = grid.combinations();
        prop_assert_eq!(combos.len(), sizes.iter().product::<usize>());
        let mut unique = combos.clone();
        unique.sort_by_key(|c| serde_json::to_string(c).unwrap());
        unique.dedup();
        prop_assert_eq!(unique.len(), combos.len());
    }

    #[test]
    fn wasserstein_is_a_symmetric_nonnegative_distance(
        mp in -10.0..10.0f64, sp in 0.0..5.0f64, mn in -10.0..10.0f64, sn in 0.0..5.0f64,
    ) {
        let d = wasserstein(mp, sp, mn, sn);
        prop_assert!(d >= 0.0);
        prop_assert!((d - wasserstein(mn, sn, mp, sp)).abs() < 1e-12);
        prop_assert!(wasserstein(mp, sp, mp, sp).abs() < 1e-6);
    }

    #[test]
    fn codec_round_trips(bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 1..30)) {
        let labels = label_matrix(&bits);
        let codec = PowerSetCodec::from_labels(&labels);
        for l in &labels {
            let id = codec.lookup(l).unwrap();
            prop_assert_eq!(codec.decode(id).unwrap(), l);
        }
        prop_assert!(codec.len() <= labels.len());
    }

    #[test]
    fn frames_round_trip_through_csv(v in prop::collection::vec(-1e6..1e6f64, 8..40), rate in 1.0..500.0f64) {
        let t = v.len() / 4;
        let data = Array2::from_shape_vec((t, 4), v[..t * 4].to_vec()).unwrap();
        let rec = MotionRecord::new("m", rate, vec![Channel::new("root_pos", 3), Channel::new("x", 1)], data, None).unwrap();
        let back = parse_frames(&write_frames(&rec), "m", std::path::Path::new("m.csv")).unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn hmm_json_round_trips((model, _obs) in hmm_and_obs(4, 1)) {
        let text = serde_json::to_string(&model).unwrap();
        let back: HmmParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, model);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_objective_never_increases(
        x in prop::collection::vec(-3.0..3.0f64, 40),
        y in prop::collection::vec(any::<bool>(), 10),
        c in 0.01..10.0f64,
        l1 in any::<bool>(),
        hinge in any::<bool>(),
    ) {
        prop_assume!(y.iter().any(|b| *b) && y.iter().any(|b| !*b));
        let x = Array2::from_shape_vec((10, 4), x).unwrap();
        let penalty = if l1 { Penalty::L1 } else { Penalty::L2 };
        let loss = if hinge { Loss::SquaredHinge } else { Loss::Logistic };
        let fit = fit_traced(x.view(), &y, penalty, c, loss).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }
}
