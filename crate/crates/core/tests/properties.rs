use densecap_core::eval::{cider, match_at_threshold, soda_style, ConstantScorer, Segment, SentenceScorer};
use densecap_core::math::sigmoid;
use densecap_core::temporal::{
    aggregate_features, frame_positions, pt_iou_loss, soft_mask, temporal_iou, FramePositions, Interval, MomentParams,
    SoftMask,
};
use densecap_core::math::Matrix;
use proptest::prelude::*;

fn mask_at(c: f64, w: f64, gamma: f64, p: f64) -> f64 {
    let positions = FramePositions::from_values(vec![p]).unwrap();
    soft_mask(&MomentParams::new(c, w).unwrap(), &positions, gamma).unwrap().values()[0]
}

fn interval() -> impl Strategy<Value = Interval> {
    (0u8..20, 0u8..10).prop_map(|(s, l)| Interval::new(s as f64, (s + l) as f64).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mask_is_one_half_on_the_boundary(c in -4.0f64..4.0, w in -4.0f64..2.0, gamma in 1.0f64..50.0) {
        let (cn, wn) = (sigmoid(c), sigmoid(w));
        for p in [cn - wn / 2.0, cn + wn / 2.0] {
            prop_assert!((mask_at(c, w, gamma, p) - 0.5).abs() <= 1e-6);
        }
    }

    #[test]
    fn sharpening_pushes_toward_the_indicator(
        c in -4.0f64..4.0, w in -4.0f64..2.0, p in 0.0f64..1.0, g1 in 1.0f64..40.0, dg in 0.0f64..20.0,
    ) {
        let (cn, wn) = (sigmoid(c), sigmoid(w));
        let (lo, hi) = (mask_at(c, w, g1, p), mask_at(c, w, g1 + dg, p));
        if (p - cn).abs() < wn / 2.0 {
            prop_assert!(hi >= lo && lo >= 0.5);
        } else if (p - cn).abs() > wn / 2.0 {
            prop_assert!(hi <= lo && lo <= 0.5);
        }
    }

    #[test]
    fn wider_masks_cover_more(c in -4.0f64..4.0, w in -4.0f64..2.0, dw in 0.0f64..3.0, p in 0.0f64..1.0, gamma in 1.0f64..40.0) {
        prop_assert!(mask_at(c, w + dw, gamma, p) >= mask_at(c, w, gamma, p));
    }

    #[test]
    fn mask_values_in_open_unit_interval(c in -8.0f64..8.0, w in -8.0f64..8.0, gamma in 0.1f64..200.0, len in 1usize..64) {
        let m = soft_mask(&MomentParams::new(c, w).unwrap(), &frame_positions(len).unwrap(), gamma).unwrap();
        prop_assert!(m.values().iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn pooled_feature_is_a_convex_combination(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..12),
        weights in prop::collection::vec(0.01f64..0.99, 12),
    ) {
        let f = Matrix::from_rows(&rows).unwrap();
        let mask = SoftMask::from_values(weights[..rows.len()].to_vec()).unwrap();
        let pooled = aggregate_features(&f, &mask).unwrap();
        for (d, v) in pooled.iter().enumerate() {
            let lo = rows.iter().map(|r| r[d]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[d]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn pt_iou_is_permutation_invariant(
        ms in prop::collection::vec((-3.0f64..3.0, -3.0f64..1.0), 2..7),
        rot in 0usize..7,
    ) {
        let a: Vec<MomentParams> = ms.iter().map(|&(c, w)| MomentParams::new(c, w).unwrap()).collect();
        let mut b = a.clone();
        b.reverse();
        let k = rot % b.len();
        b.rotate_left(k);
        let (la, lb) = (pt_iou_loss(&a), pt_iou_loss(&b));
        prop_assert!((la - lb).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&la));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in interval(), b in interval()) {
        let (x, y) = (temporal_iou(&a, &b), temporal_iou(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(temporal_iou(&a, &a), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lower_thresholds_never_match_fewer(
        preds in prop::collection::vec(interval(), 0..6),
        gts in prop::collection::vec(interval(), 0..6),
        t1 in 0.05f64..1.0, t2 in 0.05f64..1.0,
    ) {
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let n_lo = match_at_threshold(&preds, &gts, lo).unwrap().len();
        let n_hi = match_at_threshold(&preds, &gts, hi).unwrap().len();
        prop_assert!(n_lo >= n_hi);
    }

    #[test]
    fn matching_count_is_symmetric(
        preds in prop::collection::vec(interval(), 0..6),
        gts in prop::collection::vec(interval(), 0..6),
        t in 0.05f64..1.0,
    ) {
        let a = match_at_threshold(&preds, &gts, t).unwrap().len();
        let b = match_at_threshold(&gts, &preds, t).unwrap().len();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cider_ignores_pair_order(
        pairs in prop::collection::vec((0usize..6, 0usize..6), 1..6),
        shift in 0usize..6,
    ) {
        const S: [&str; 6] = ["a man rides a horse", "a horse runs", "the man walks a dog", "a dog runs", "people dance", ""];
        let list: Vec<(String, String)> = pairs.iter().map(|&(c, r)| (S[c].to_string(), S[r].to_string())).collect();
        let mut rotated = list.clone();
        let k = shift % rotated.len();
        rotated.rotate_left(k);
        let (x, y) = (cider(&list).unwrap().mean, cider(&rotated).unwrap().mean);
        prop_assert!((x - y).abs() <= 1e-12);
        prop_assert!(x >= 0.0);
    }

    #[test]
    fn soda_is_bounded_and_monotone_in_a_pair_weight(
        preds in prop::collection::vec(interval(), 0..5),
        gts in prop::collection::vec(interval(), 0..5),
        base in 0.0f64..1.0, boost in 0.0f64..1.0, target in 0usize..5,
    ) {
        let seg = |iv: &Interval, k: usize| Segment { timestamp: *iv, sentence: format!("s{k}") };
        let p: Vec<Segment> = preds.iter().enumerate().map(|(k, iv)| seg(iv, k)).collect();
        let g: Vec<Segment> = gts.iter().enumerate().map(|(k, iv)| seg(iv, k)).collect();
        struct Bumped { base: f64, boost: f64, target: String }
        impl SentenceScorer for Bumped {
            fn score(&self, c: &str, _: &str) -> f64 {
                if c == self.target { (self.base + self.boost).min(1.0) } else { self.base }
            }
        }
        let target = format!("s{target}");
        let low = soda_style(&p, &g, &ConstantScorer(base));
        let high = soda_style(&p, &g, &Bumped { base, boost, target });
        prop_assert!(high >= low);
        let best = p.iter().flat_map(|a| g.iter().map(move |b| temporal_iou(&a.timestamp, &b.timestamp)))
            .fold(0.0f64, f64::max) * (base + boost).min(1.0);
        prop_assert!(high <= best.min(1.0) + 1e-12);
    }
}
