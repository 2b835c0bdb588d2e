use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trustloop::model::{auc_pr, auc_roc, MlpParams, N_INPUTS, N_PARAMS};

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (s, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (t, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 1.0;
            num += if s > t { 1.0 } else if s == t { 0.5 } else { 0.0 };
        }
    }
    num / pairs
}

fn ranked_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut hits, mut sum) = (0.0, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1.0;
            sum += hits / (rank + 1) as f64;
        }
    }
    sum / hits
}

fn labelled(max: usize, levels: u32) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0..levels, any::<bool>()), 2..max)
        .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
        .prop_map(move |v| v.into_iter().map(|(s, l)| (f64::from(s) / f64::from(levels), l)).unzip())
}

proptest! {
    #[test]
    fn auc_roc_matches_pair_count((scores, labels) in labelled(200, 12)) {
        let got = auc_roc(&scores, &labels).unwrap();
        prop_assert!((got - pairwise_auc(&scores, &labels)).abs() < 1e-9);
    }

    #[test]
    fn auc_pr_matches_ranked_list(seed in any::<u64>(), n in 2usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for i in (1..n).rev() {
            scores.swap(i, rng.random_range(0..=i));
        }
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[n / 2] = true;
        let got = auc_pr(&scores, &labels).unwrap();
        prop_assert!((got - ranked_ap(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_invariant_to_monotone_rescale((scores, labels) in labelled(80, 1000)) {
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-3.0 * s).exp())).collect();
        let a = auc_roc(&scores, &labels).unwrap();
        let b = auc_roc(&squashed, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn f32_and_f64_agree((scores, labels) in labelled(100, 50)) {
        let narrow: Vec<f32> = scores.iter().map(|&s| s as f32).collect();
        let a = auc_roc(&scores, &labels).unwrap();
        let b = auc_roc(&narrow, &labels).unwrap();
        prop_assert!((a - f64::from(b)).abs() < 1e-5);
    }
}

#[test]
fn backprop_matches_central_differences() {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for draw in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let mut params = MlpParams::<f64>::init(draw + 50);
        for v in params.as_flat_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        let xs: Vec<f64> = (0..4 * N_INPUTS).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ys = [1.0, 0.0, 0.0, 1.0];
        let (_, grad) = params.loss_and_grad(&xs, &ys);
        for p in (0..N_PARAMS).step_by(7) {
            let orig = params.as_flat()[p];
            params.as_flat_mut()[p] = orig + h;
            let up = params.loss(&xs, &ys);
            params.as_flat_mut()[p] = orig - h;
            let down = params.loss(&xs, &ys);
            params.as_flat_mut()[p] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grad.as_flat()[p];
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-7));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}
