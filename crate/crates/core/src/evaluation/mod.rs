//! Ranking, retrieval metrics, training-free baselines and report tables.

mod experiment;

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MuseumFeatures;

pub use experiment::*;

/// 1-based rank of each query's ground-truth gallery item.
///
/// Rank = 1 + number of gallery items scoring strictly higher, plus the
/// equally scoring items at a lower gallery index.
pub fn rank_museums(query: ArrayView2<'_, f32>, gallery: ArrayView2<'_, f32>, truth: &[usize]) -> Result<Vec<usize>> {
    if query.nrows() != truth.len() {
        return Err(Error::Input(format!("{} queries but {} truth indices", query.nrows(), truth.len())));
    }
    if query.ncols() != gallery.ncols() {
        return Err(Error::Shape(format!(
            "query width {} differs from gallery width {}",
            query.ncols(),
            gallery.ncols()
        )));
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= gallery.nrows()) {
        return Err(Error::Input(format!(
            "truth index {bad} outside a gallery of {}",
            gallery.nrows()
        )));
    }
    let scores = query.dot(&gallery.t());
    Ok(scores
        .axis_iter(Axis(0))
        .zip(truth)
        .map(|(row, &t)| {
            let target = row[t];
            1 + row
                .iter()
                .enumerate()
                .filter(|&(g, &s)| s > target || (s == target && g < t))
                .count()
        })
        .collect())
}

/// Aggregate retrieval quality; recalls and MRR are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub medr: usize,
    pub meanr: f64,
    pub mrr: f64,
}

pub fn compute_metrics(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::EmptyInput("no ranks to summarize".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Input("ranks are 1-based".into()));
    }
    let q = ranks.len() as f64;
    let recall = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / q;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    Ok(Metrics {
        r1: recall(1),
        r5: recall(5),
        r10: recall(10),
        medr: sorted[(sorted.len() - 1) / 2],
        meanr: ranks.iter().sum::<usize>() as f64 / q,
        mrr: 100.0 * ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRank {
    pub museum_id: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: Vec<QueryRank>,
    pub metrics: Metrics,
}

/// Ranks museum `i` of the gallery for text query `i`.
pub fn evaluate_pairs(ids: &[String], text: ArrayView2<'_, f32>, museums: ArrayView2<'_, f32>) -> Result<RetrievalReport> {
    let truth: Vec<usize> = (0..ids.len()).collect();
    let ranks = rank_museums(text, museums, &truth)?;
    Ok(RetrievalReport {
        metrics: compute_metrics(&ranks)?,
        queries: ids
            .iter()
            .zip(ranks)
            .map(|(id, rank)| QueryRank { museum_id: id.clone(), rank })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Median,
}

/// Frame-level aggregation; `None` marks a source that is already video-level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameAggregation {
    Mean,
    Median,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationSpec {
    pub frames: FrameAggregation,
    pub videos: Aggregation,
    pub rooms: Aggregation,
}

impl AggregationSpec {
    /// Distinct rows of the zero-shot comparison: three for a frame-level
    /// (image model) source, two for a video-level (video model) source.
    pub fn grid() -> Vec<AggregationSpec> {
        use Aggregation::*;
        let spec = |frames, videos, rooms| AggregationSpec { frames, videos, rooms };
        vec![
            spec(FrameAggregation::Mean, Mean, Mean),
            spec(FrameAggregation::Median, Mean, Mean),
            spec(FrameAggregation::Mean, Median, Mean),
            spec(FrameAggregation::None, Mean, Mean),
            spec(FrameAggregation::None, Median, Mean),
        ]
    }
}

impl fmt::Display for AggregationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |a: Aggregation| match a {
            Aggregation::Mean => "Mean",
            Aggregation::Median => "Median",
        };
        let frames = match self.frames {
            FrameAggregation::Mean => "Mean",
            FrameAggregation::Median => "Median",
            FrameAggregation::None => "-",
        };
        write!(f, "{frames} / {} / {}", name(self.videos), name(self.rooms))
    }
}

/// Elementwise aggregate of the rows; the median of an even count takes the
/// lower middle value.
pub fn aggregate_rows(rows: ArrayView2<'_, f32>, how: Aggregation) -> Result<Array1<f32>> {
    if rows.nrows() == 0 {
        return Err(Error::Input("cannot aggregate an empty set".into()));
    }
    Ok(match how {
        Aggregation::Mean => rows.mean_axis(Axis(0)).expect("non-empty"),
        Aggregation::Median => rows
            .axis_iter(Axis(1))
            .map(|col| {
                let mut v = col.to_vec();
                let mid = (v.len() - 1) / 2;
                *v.select_nth_unstable_by(mid, f32::total_cmp).1
            })
            .collect(),
    })
}

fn normalized(mut v: Array1<f32>) -> Array1<f32> {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v /= n;
    }
    v
}

fn stack(rows: &[Array1<f32>]) -> Array2<f32> {
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::stack(Axis(0), &views).expect("equal widths")
}

/// Training-free museum vector: frames -> video -> room -> museum pooling,
/// renormalized at the end.
pub fn zero_shot_encode(museum: &MuseumFeatures<f32>, spec: &AggregationSpec) -> Result<Array1<f32>> {
    let mut rooms = Vec::with_capacity(museum.rooms.len());
    for room in &museum.rooms {
        let mut videos = Vec::with_capacity(room.len());
        for frames in room {
            videos.push(match spec.frames {
                FrameAggregation::Mean => aggregate_rows(frames.view(), Aggregation::Mean)?,
                FrameAggregation::Median => aggregate_rows(frames.view(), Aggregation::Median)?,
                FrameAggregation::None if frames.nrows() == 1 => frames.row(0).to_owned(),
                FrameAggregation::None => {
                    return Err(Error::Config(format!(
                        "museum {}: frame aggregation \"none\" needs a video-level source, got {} rows",
                        museum.id,
                        frames.nrows()
                    )))
                }
            });
        }
        rooms.push(aggregate_rows(stack(&videos).view(), spec.videos)?);
    }
    Ok(normalized(aggregate_rows(stack(&rooms).view(), spec.rooms)?))
}

/// Mean of the sentence embeddings, renormalized.
pub fn zero_shot_text(sentences: ArrayView2<'_, f32>) -> Result<Array1<f32>> {
    Ok(normalized(aggregate_rows(sentences, Aggregation::Mean)?))
}

/// One labelled metrics row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub queries: Option<Vec<QueryRank>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub split: String,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn row(&self, label: &str) -> Option<&Metrics> {
        self.rows.iter().find(|r| r.label == label).map(|r| &r.metrics)
    }

    /// Best row by R@1 (first one on ties).
    pub fn best_by_r1(&self) -> Option<&ReportRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&ReportRow>, r| match best {
                Some(b) if b.metrics.r1 >= r.metrics.r1 => Some(b),
                _ => Some(r),
            })
    }
}

impl fmt::Display for ReportTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
        writeln!(f, "{} ({} split)", self.title, self.split)?;
        writeln!(
            f,
            "{:<width$}  {:>7} {:>7} {:>7} {:>6} {:>8} {:>7}",
            "model", "R@1", "R@5", "R@10", "MedR", "MeanR", "MRR"
        )?;
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(
                f,
                "{:<width$}  {:>7.2} {:>7.2} {:>7.2} {:>6} {:>8.2} {:>7.2}",
                r.label, m.r1, m.r5, m.r10, m.medr, m.meanr, m.mrr
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 0.005
    }

    #[test]
    fn hand_computed_metrics() {
        let m = compute_metrics(&[1, 3, 12]).unwrap();
        assert!(close(m.r1, 33.33) && close(m.r5, 66.67) && close(m.r10, 66.67));
        assert_eq!(m.medr, 3);
        assert!(close(m.meanr, 5.33));
        assert!(close(m.mrr, 47.22));

        let m = compute_metrics(&[1, 1, 1]).unwrap();
        assert_eq!((m.r1, m.mrr, m.medr), (100.0, 100.0, 1));
        assert_eq!(compute_metrics(&[2, 4]).unwrap().medr, 2);
        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn rank_one_for_matching_query() {
        let g = arr2(&[[1.0f32, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let q = arr2(&[[0.0f32, 1.0, 0.0]]);
        assert_eq!(rank_museums(q.view(), g.view(), &[1]).unwrap(), vec![1]);
    }

    #[test]
    fn ties_break_by_gallery_index() {
        let g = Array2::<f32>::from_elem((5, 2), 0.5);
        let q = arr2(&[[1.0f32, 0.0]; 5]);
        assert_eq!(rank_museums(q.view(), g.view(), &[0, 1, 2, 3, 4]).unwrap(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn truth_out_of_range() {
        let g = Array2::<f32>::zeros((2, 2));
        let q = Array2::<f32>::zeros((1, 2));
        assert!(matches!(rank_museums(q.view(), g.view(), &[2]), Err(Error::Input(_))));
    }

    #[test]
    fn ranks_match_sorting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = Array2::from_shape_simple_fn((20, 4), || rng.gen_range(-1.0f32..1.0));
        let g = Array2::from_shape_simple_fn((20, 4), || rng.gen_range(-1.0f32..1.0));
        let truth: Vec<usize> = (0..20).collect();
        let ranks = rank_museums(q.view(), g.view(), &truth).unwrap();
        for i in 0..20 {
            let mut order: Vec<(f32, usize)> = (0..20).map(|j| (q.row(i).dot(&g.row(j)), j)).collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            assert_eq!(ranks[i], 1 + order.iter().position(|&(_, j)| j == i).unwrap());
        }
    }

    #[test]
    fn zero_shot_examples() {
        let m = MuseumFeatures {
            id: "m".into(),
            rooms: vec![vec![arr2(&[[1.0f32, 0.0], [0.0, 1.0]])]],
            secondary: None,
        };
        let all_mean = AggregationSpec::grid()[0];
        let v = zero_shot_encode(&m, &all_mean).unwrap();
        assert!((v[0] - 0.70710677).abs() < 1e-6 && (v[1] - 0.70710677).abs() < 1e-6);

        let single = MuseumFeatures { id: "s".into(), rooms: vec![vec![arr2(&[[3.0f32, 4.0]])]], secondary: None };
        for spec in AggregationSpec::grid() {
            assert_eq!(zero_shot_encode(&single, &spec).unwrap(), arr1(&[0.6, 0.8]));
        }
        let spec = AggregationSpec::grid()[3];
        assert!(matches!(zero_shot_encode(&m, &spec), Err(Error::Config(_))));
        assert_eq!(zero_shot_text(arr2(&[[2.0f32, 0.0], [0.0, 2.0]]).view()).unwrap(), arr1(&[0.70710677, 0.70710677]));
    }

    #[test]
    fn median_takes_lower_middle() {
        let rows = arr2(&[[4.0f32, 1.0], [1.0, 2.0], [3.0, 3.0], [2.0, 4.0]]);
        assert_eq!(aggregate_rows(rows.view(), Aggregation::Median).unwrap(), arr1(&[2.0, 2.0]));
    }

    #[test]
    fn report_table_renders_every_metric() {
        let t = ReportTable {
            title: "Trained".into(),
            split: "test".into(),
            rows: vec![ReportRow { label: "HL".into(), metrics: compute_metrics(&[1, 2]).unwrap(), queries: None }],
        };
        let text = t.to_string();
        for h in ["R@1", "R@5", "R@10", "MedR", "MeanR", "MRR", "HL", "50.00"] {
            assert!(text.contains(h), "{h} missing from\n{text}");
        }
    }

    proptest! {
        #[test]
        fn recall_is_monotone(ranks in prop::collection::vec(1usize..50, 1..40)) {
            let m = compute_metrics(&ranks).unwrap();
            prop_assert!(m.r1 <= m.r5 && m.r5 <= m.r10);
            prop_assert!(m.mrr > 0.0 && m.mrr <= 100.0 && m.mrr >= m.r1);
            prop_assert!(m.medr >= 1 && m.meanr >= 1.0);
        }

        #[test]
        fn zero_shot_ignores_frame_order(seed in 0u64..500, median in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = Array2::from_shape_simple_fn((5, 3), || rng.gen_range(-1.0f32..1.0));
            let mut rev = frames.clone();
            rev.invert_axis(Axis(0));
            let agg = if median { FrameAggregation::Median } else { FrameAggregation::Mean };
            let spec = AggregationSpec { frames: agg, videos: Aggregation::Mean, rooms: Aggregation::Mean };
            let a = MuseumFeatures { id: "a".into(), rooms: vec![vec![frames]], secondary: None };
            let b = MuseumFeatures { id: "b".into(), rooms: vec![vec![rev]], secondary: None };
            let (x, y) = (zero_shot_encode(&a, &spec).unwrap(), zero_shot_encode(&b, &spec).unwrap());
            for (p, q) in x.iter().zip(y.iter()) {
                prop_assert!((p - q).abs() < 1e-6);
            }
        }

        #[test]
        fn ranks_survive_gallery_permutation(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..30);
            let q = Array2::from_shape_simple_fn((n, 3), || rng.gen_range(-1.0f32..1.0));
            let g = Array2::from_shape_simple_fn((n, 3), || rng.gen_range(-1.0f32..1.0));
            let truth: Vec<usize> = (0..n).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let gp = g.select(Axis(0), &perm);
            let inv: Vec<usize> = (0..n).map(|i| perm.iter().position(|&p| p == i).unwrap()).collect();
            prop_assert_eq!(
                rank_museums(q.view(), g.view(), &truth).unwrap(),
                rank_museums(q.view(), gp.view(), &inv).unwrap()
            );
        }
    }
}
