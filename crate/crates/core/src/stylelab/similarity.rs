use serde::{Deserialize, Serialize};

use crate::adapter::{PlayerId, RoutingTensor, StyleVector};
use crate::error::{Error, Result};
use crate::numeric::Scalar;

/// Cosine similarity of two flattened style vectors, accumulated in f64.
pub fn cosine<T: Scalar>(u: &StyleVector<T>, v: &StyleVector<T>) -> Result<f64> {
    if u.logits.shape() != v.logits.shape() {
        return Err(Error::dim("cosine", u.logits.shape(), v.logits.shape()));
    }
    cosine_slices(u.as_slice(), v.as_slice())
}

pub(crate) fn cosine_slices<T: Scalar>(u: &[T], v: &[T]) -> Result<f64> {
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a.as_f64(), b.as_f64());
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::Argument("cosine similarity of a zero-norm vector".into()));
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub truth: PlayerId,
    pub predicted: PlayerId,
    /// 1-based rank of the true player among the universe rows.
    pub rank: usize,
    /// Cosine to every universe row, in universe order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylometryResult {
    pub universe: Vec<PlayerId>,
    pub queries: Vec<QueryResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

impl StylometryResult {
    pub fn top_k(&self, k: usize) -> f64 {
        let hits = self.queries.iter().filter(|q| q.rank <= k).count();
        hits as f64 / self.queries.len() as f64
    }

    pub fn top1(&self) -> f64 {
        self.top_k(1)
    }

    pub fn mean_rank(&self) -> f64 {
        self.queries.iter().map(|q| q.rank as f64).sum::<f64>() / self.queries.len() as f64
    }

    /// Verification ROC: every (query, row) pair is a trial, positive when
    /// the row belongs to the query's player.
    pub fn roc(&self) -> Vec<RocPoint> {
        let mut trials = Vec::new();
        for q in &self.queries {
            for (s, &p) in q.scores.iter().zip(&self.universe) {
                trials.push((*s, p == q.truth));
            }
        }
        roc_curve(&trials)
    }
}

/// ROC points from `(score, is_positive)` trials, sweeping the threshold
/// from above the largest score down through each distinct score.
pub fn roc_curve(trials: &[(f64, bool)]) -> Vec<RocPoint> {
    let mut sorted = trials.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = sorted.iter().filter(|t| t.1).count() as f64;
    let neg = sorted.len() as f64 - pos;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: if neg > 0.0 { fp / neg } else { 0.0 },
            tpr: if pos > 0.0 { tp / pos } else { 0.0 },
        });
    }
    // With only one class present the sweep cannot reach (1, 1) by itself.
    let last = points.last().copied().expect("anchor point");
    if last.fpr != 1.0 || last.tpr != 1.0 {
        points.push(RocPoint {
            threshold: f64::NEG_INFINITY,
            fpr: 1.0,
            tpr: 1.0,
        });
    }
    points
}

/// Ranks every universe row against each query by cosine. Each query must
/// carry the id of a player present in the universe. Ties go to the lower
/// universe row.
pub fn stylometry_identify(queries: &[StyleVector<f32>], universe: &RoutingTensor<f32>) -> Result<StylometryResult> {
    if universe.is_empty() {
        return Err(Error::Argument("stylometry needs a nonempty universe".into()));
    }
    if queries.is_empty() {
        return Err(Error::Argument("stylometry needs at least one query".into()));
    }
    let rows: Vec<StyleVector<f32>> = universe.rows().collect();
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let truth = q
            .player
            .ok_or_else(|| Error::Argument("stylometry query has no player id".into()))?;
        let t = universe
            .index_of(truth)
            .ok_or_else(|| Error::Argument(format!("query player {truth} is not in the universe")))?;
        let scores = rows.iter().map(|r| cosine(q, r)).collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        let rank = 1 + scores
            .iter()
            .enumerate()
            .filter(|&(i, &s)| s > scores[t] || (s == scores[t] && i < t))
            .count();
        out.push(QueryResult {
            truth,
            predicted: universe.players()[best],
            rank,
            scores,
        });
    }
    Ok(StylometryResult {
        universe: universe.players().to_vec(),
        queries: out,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sv(flat: &[f32]) -> StyleVector<f32> {
        StyleVector::from_flat(2, 2, flat.to_vec()).unwrap()
    }

    fn universe(rows: &[[f32; 4]]) -> RoutingTensor<f32> {
        let mut z = RoutingTensor::new(2, 2);
        for (i, r) in rows.iter().enumerate() {
            z.push(&sv(r), PlayerId(i as u32 * 10)).unwrap();
        }
        z
    }

    #[test]
    fn cosine_basics() {
        let u = sv(&[1.0, -2.0, 0.5, 3.0]);
        let neg = sv(&[-1.0, 2.0, -0.5, -3.0]);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&u, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&u, &sv(&[0.0; 4])), Err(Error::Argument(_))));
        let other = StyleVector::<f32>::from_flat(1, 4, vec![1.0; 4]).unwrap();
        assert!(matches!(cosine(&u, &other), Err(Error::Dimension { .. })));
    }

    #[test]
    fn identify_exact_match_and_ties() {
        let z = universe(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        let q = sv(&[0.0, 1.0, 0.0, 0.0]).with_player(PlayerId(20));
        let r = stylometry_identify(&[q], &z).unwrap();
        // Rows 1 and 2 tie; the lower row wins, so player 20 ranks second.
        assert_eq!(r.queries[0].predicted, PlayerId(10));
        assert_eq!(r.queries[0].rank, 2);
        let q = sv(&[1.0, 0.1, 0.0, 0.0]).with_player(PlayerId(0));
        assert_eq!(stylometry_identify(&[q], &z).unwrap().top1(), 1.0);
        let lone = universe(&[[0.3, 0.1, 0.2, 0.9]]);
        let q = sv(&[-1.0, 0.0, 0.0, 0.0]).with_player(PlayerId(0));
        assert_eq!(
            stylometry_identify(std::slice::from_ref(&q), &lone).unwrap().top1(),
            1.0
        );
        assert!(stylometry_identify(std::slice::from_ref(&q), &RoutingTensor::new(2, 2)).is_err());
        assert!(stylometry_identify(&[sv(&[1.0; 4])], &lone).is_err());
    }

    #[test]
    fn roc_hand_example() {
        let pts = roc_curve(&[(0.9, true), (0.8, false), (0.7, true), (0.1, false)]);
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
    }

    fn arb_rows(n: usize) -> impl Strategy<Value = Vec<[f32; 4]>> {
        prop::collection::vec(prop::array::uniform4(-3.0f32..3.0), n).prop_filter("nonzero", |rows| {
            rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f32>() > 1e-3)
        })
    }

    proptest! {
        #[test]
        fn top1_invariant_under_row_rescaling(rows in arb_rows(6), qs in arb_rows(4), which in 0usize..6, c in 0.01f32..50.0) {
            let z = universe(&rows);
            let queries: Vec<_> = qs.iter().enumerate().map(|(i, q)| sv(q).with_player(PlayerId(i as u32 * 10))).collect();
            let a = stylometry_identify(&queries, &z).unwrap();
            let mut scaled = rows.clone();
            scaled[which].iter_mut().for_each(|x| *x *= c);
            let b = stylometry_identify(&queries, &universe(&scaled)).unwrap();
            // Rescaling can perturb exact ties by rounding; compare only clear winners.
            for (qa, qb) in a.queries.iter().zip(&b.queries) {
                let mut s = qa.scores.clone();
                s.sort_by(|x, y| y.total_cmp(x));
                if s[0] - s[1] > 1e-5 {
                    prop_assert_eq!(qa.predicted, qb.predicted);
                }
            }
        }

        #[test]
        fn roc_monotone_and_anchored(trials in prop::collection::vec((-1.0f64..1.0, any::<bool>()), 1..60)) {
            let pts = roc_curve(&trials);
            prop_assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
            let last = pts.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in pts.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }
    }
}
