//! Unsupervised image separation: learn the source from noisy pixels,
//! solve the coupling problem, and rank images by their summed scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{build_dtm, score_table, sequence_score, solve_coupling, ScoreTable};
use crate::data::{apply_channel_to_dataset, gen_two_class_images, ImageDataset, Pixels};
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::stats::{parametric_channel, Channel, DiscreteDistribution};

/// Negative entries down to `-CLIP_TOL` left by channel inversion are
/// clipped to zero.
pub const CLIP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem<T> {
    pub index: usize,
    pub score: T,
    pub label: Option<usize>,
}

/// Empirical symbol distribution of every pixel in every image.
pub fn learn_pooled_source<T: Real>(pixels: Pixels<'_>) -> Result<DiscreteDistribution<T>> {
    let mut counts = vec![0usize; pixels.alphabet_size];
    for img in pixels.images {
        for &s in img {
            counts[s] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::NoData);
    }
    DiscreteDistribution::from_counts(&counts)
}

/// `p_x = W⁻¹ p_y`, with tiny negative entries clipped.
pub fn recover_source_input<T: Real>(
    p_y: &DiscreteDistribution<T>,
    channel: &Channel<T>,
) -> Result<DiscreteDistribution<T>> {
    if channel.outputs() != channel.inputs() {
        return Err(Error::InvalidChannel(format!(
            "source recovery needs a square channel, got {}x{}",
            channel.outputs(),
            channel.inputs()
        )));
    }
    if p_y.len() != channel.outputs() {
        return Err(Error::DimensionMismatch {
            what: "output distribution",
            expected: channel.outputs(),
            found: p_y.len(),
        });
    }
    let mut p = solve(channel.matrix(), p_y.probs())?;
    if let Some((symbol, &value)) = p.iter().enumerate().find(|(_, v)| **v < -T::lit(CLIP_TOL)) {
        return Err(Error::InconsistentSource {
            symbol,
            value: value.as_f64(),
        });
    }
    p.iter_mut().for_each(|v| *v = v.max(T::zero()));
    DiscreteDistribution::from_weights(&p)
}

/// Score table for a known clean-source distribution.
pub fn score_table_for_input<T: Real>(
    p_x: &DiscreteDistribution<T>,
    channel: &Channel<T>,
) -> Result<ScoreTable<T>> {
    let dtm = build_dtm(channel, p_x)?;
    let solution = solve_coupling(&dtm)?;
    Ok(score_table(&solution, &dtm))
}

/// Score table for an observed output distribution, inverting the channel
/// to recover the source.
pub fn score_table_for_output<T: Real>(
    p_y: &DiscreteDistribution<T>,
    channel: &Channel<T>,
) -> Result<ScoreTable<T>> {
    score_table_for_input(&recover_source_input(p_y, channel)?, channel)
}

/// Pooled source, channel inversion, DTM, coupling solution and score
/// table. Only pixel values are visible here.
pub fn build_image_scorer<T: Real>(
    pixels: Pixels<'_>,
    channel: &Channel<T>,
) -> Result<ScoreTable<T>> {
    score_table_for_output(&learn_pooled_source(pixels)?, channel)
}

/// Image scores in index order, carrying the dataset's labels if any.
pub fn score_dataset<T: Real>(
    dataset: &ImageDataset,
    table: &ScoreTable<T>,
) -> Result<Vec<ScoredItem<T>>> {
    let labels = dataset.labels();
    dataset
        .images()
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            Ok(ScoredItem {
                index,
                score: sequence_score(table, img)?,
                label: labels.map(|l| l[index]),
            })
        })
        .collect()
}

/// Fraction of misplaced items when the lower half of the score order is
/// assigned to one class, minimised over the two assignments.
pub fn separation_error<T: Real>(scored: &[ScoredItem<T>]) -> Result<f64> {
    let labels: Vec<usize> = scored
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::InvalidArgument("separation error needs labels".into()))
        })
        .collect::<Result<_>>()?;
    let mut classes = labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "separation error needs exactly two classes, found {}",
            classes.len()
        )));
    }
    let first = classes[0];
    let n_first = labels.iter().filter(|&&l| l == first).count();
    if 2 * n_first != labels.len() {
        return Err(Error::UnbalancedClasses(format!(
            "{} of {} items in class {first}",
            n_first,
            labels.len()
        )));
    }
    if let Some(s) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite score for image {}",
            s.index
        )));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .score
            .partial_cmp(&scored[b].score)
            .expect("finite scores")
            .then(scored[a].index.cmp(&scored[b].index))
    });
    let n = n_first;
    // Bottom half assigned to the first class: each second-class item in
    // the bottom is matched by a first-class item in the top.
    let misplaced = 2 * order[..n].iter().filter(|&&i| labels[i] != first).count();
    let total = 2 * n;
    Ok(misplaced.min(total - misplaced) as f64 / total as f64)
}

/// Log-likelihood ratio of each noisy image under the two known class
/// distributions pushed through `channel`.
pub fn bayes_oracle_scores<T: Real>(
    dataset: &ImageDataset,
    channel: &Channel<T>,
    class_dists: [&DiscreteDistribution<T>; 2],
) -> Result<Vec<ScoredItem<T>>> {
    let qa = channel.output(class_dists[0])?;
    let qb = channel.output(class_dists[1])?;
    let llr: Vec<T> = qa
        .probs()
        .iter()
        .zip(qb.probs())
        .map(|(&a, &b)| a.ln() - b.ln())
        .collect();
    let labels = dataset.labels();
    dataset
        .images()
        .iter()
        .enumerate()
        .map(|(index, img)| {
            let mut score = T::zero();
            for &y in img {
                score += *llr.get(y).ok_or(Error::UnknownSymbol {
                    symbol: y,
                    alphabet: llr.len(),
                })?;
            }
            Ok(ScoredItem {
                index,
                score,
                label: labels.map(|l| l[index]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub e: f64,
    pub error_probability: f64,
    pub n_images: usize,
    pub seed: u64,
}

/// Separation error for each noise level in `e_grid`. Point `i` draws clean
/// images with seed `seed ⊕ 2i` and channel noise with `seed ⊕ (2i+1)`.
pub fn error_vs_noise_curve<T: Real>(
    class_dists: [&DiscreteDistribution<T>; 2],
    dims: (usize, usize),
    n_per_class: usize,
    e_grid: &[T],
    seed: u64,
) -> Result<Vec<CurveRow>> {
    if e_grid.is_empty() {
        return Err(Error::InvalidArgument("empty noise grid".into()));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "n_per_class must be at least 1".into(),
        ));
    }
    e_grid
        .par_iter()
        .enumerate()
        .map(|(i, &e)| {
            let channel = parametric_channel(e)?;
            let clean_seed = derive_seed(seed, 2 * i as u64);
            let clean = gen_two_class_images(clean_seed, n_per_class, dims.0, dims.1, class_dists)?;
            let noisy =
                apply_channel_to_dataset(&clean, &channel, derive_seed(seed, 2 * i as u64 + 1))?;
            let table = build_image_scorer(noisy.pixels(), &channel)?;
            let error_probability = separation_error(&score_dataset(&noisy, &table)?)?;
            Ok(CurveRow {
                e: e.as_f64(),
                error_probability,
                n_images: noisy.len(),
                seed: clean_seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    #[default]
    Pooled,
    PerPixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerPixelScores<T> {
    pub items: Vec<ScoredItem<T>>,
    pub tables: Vec<ScoreTable<T>>,
    pub mode: ScoringMode,
}

/// Adds `1/(n·K)` to every probability of the `n`-sample empirical
/// distribution, then renormalises.
pub fn smooth_counts<T: Real>(counts: &[usize]) -> Result<DiscreteDistribution<T>> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::NoData);
    }
    let k = counts.len();
    DiscreteDistribution::from_counts(counts)?.smoothed(T::one() / T::from_usize_lossy(n * k))
}

/// One score function per pixel position; an image scores the sum of its
/// pixels' scores.
pub fn score_dataset_per_pixel<T: Real>(
    dataset: &ImageDataset,
    channel: &Channel<T>,
) -> Result<PerPixelScores<T>> {
    if dataset.is_empty() {
        return Err(Error::NoData);
    }
    let k = dataset.alphabet_size();
    let tables = (0..dataset.pixel_count())
        .into_par_iter()
        .map(|j| {
            let mut counts = vec![0usize; k];
            for img in dataset.images() {
                counts[img[j]] += 1;
            }
            score_table_for_output(&smooth_counts(&counts)?, channel)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = dataset.labels();
    let items = dataset
        .images()
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            let mut score = T::zero();
            for (t, &y) in tables.iter().zip(img) {
                score += t.score(y).ok_or(Error::UnknownSymbol {
                    symbol: y,
                    alphabet: t.scores.len(),
                })?;
            }
            Ok(ScoredItem {
                index,
                score,
                label: labels.map(|l| l[index]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerPixelScores {
        items,
        tables,
        mode: ScoringMode::PerPixel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(scores: &[f64], labels: &[usize]) -> Vec<ScoredItem<f64>> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(index, (&score, &l))| ScoredItem {
                index,
                score,
                label: Some(l),
            })
            .collect()
    }

    #[test]
    fn pooled_source_examples() {
        let ds = ImageDataset::new(2, 2, 4, vec![vec![0; 4], vec![0; 4]], None).unwrap();
        let p: DiscreteDistribution<f64> = learn_pooled_source(ds.pixels()).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0, 0.0]);
        let one = ImageDataset::new(1, 1, 3, vec![vec![2]], None).unwrap();
        let p: DiscreteDistribution<f64> = learn_pooled_source(one.pixels()).unwrap();
        assert_eq!(p.probs(), &[0.0, 0.0, 1.0]);
        let empty = ImageDataset::new(1, 1, 3, vec![], None).unwrap();
        assert!(learn_pooled_source::<f64>(empty.pixels()).is_err());
    }

    #[test]
    fn recovery_examples() {
        let p = DiscreteDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(recover_source_input(&p, &Channel::identity(4)).unwrap(), p);

        let w = parametric_channel(0.1f64).unwrap();
        let py = w.output(&p).unwrap();
        let back = recover_source_input(&py, &w).unwrap();
        for (a, b) in back.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-10);
        }

        let w = parametric_channel(0.25f64).unwrap();
        assert!(crate::linalg::determinant(w.matrix()).abs() > 1e-3);
        let py = w.output(&p).unwrap();
        let back = recover_source_input(&py, &w).unwrap();
        for (a, b) in back.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn inconsistent_source_rejected() {
        let w = Channel::binary_symmetric(0.2f64).unwrap();
        // Any output of a BSC(0.2) lies in [0.2, 0.8].
        let py = DiscreteDistribution::new(vec![0.95, 0.05]).unwrap();
        assert!(matches!(
            recover_source_input(&py, &w),
            Err(Error::InconsistentSource { .. })
        ));
        let useless = Channel::binary_symmetric(0.5f64).unwrap();
        assert!(matches!(
            recover_source_input(&DiscreteDistribution::uniform(2).unwrap(), &useless),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn separation_error_examples() {
        let l = [0, 0, 1, 1];
        assert_eq!(
            separation_error(&items(&[0.0, 1.0, 2.0, 3.0], &l)).unwrap(),
            0.0
        );
        assert_eq!(
            separation_error(&items(&[3.0, 2.0, 1.0, 0.0], &l)).unwrap(),
            0.0
        );
        assert_eq!(
            separation_error(&items(&[0.0, 2.0, 1.0, 3.0], &l)).unwrap(),
            0.5
        );
        assert!(matches!(
            separation_error(&items(&[0.0, 1.0, 2.0], &[0, 0, 1])),
            Err(Error::UnbalancedClasses(_))
        ));
        assert!(separation_error(&items(&[0.0, 1.0], &[0, 0])).is_err());
    }

    #[test]
    fn score_dataset_examples() {
        let t = ScoreTable {
            scores: vec![1.0, -1.0],
            dropped: vec![],
        };
        let ds = ImageDataset::new(
            3,
            1,
            2,
            vec![vec![0, 0, 1], vec![1, 1, 1], vec![0, 1, 0]],
            Some(vec![0, 1, 0]),
        )
        .unwrap();
        let s = score_dataset(&ds, &t).unwrap();
        assert_eq!(
            s.iter().map(|i| i.score).collect::<Vec<_>>(),
            vec![1.0, -3.0, 1.0]
        );
        assert_eq!(s[1].label, Some(1));
        assert_eq!(s.iter().map(|i| i.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        let zero = ScoreTable {
            scores: vec![0.0; 2],
            dropped: vec![],
        };
        assert!(score_dataset(&ds, &zero)
            .unwrap()
            .iter()
            .all(|i| i.score == 0.0));
    }

    #[test]
    fn point_mass_classes_separate_perfectly() {
        let a = DiscreteDistribution::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = DiscreteDistribution::new(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        for n in [1, 3, 10] {
            let ds = gen_two_class_images(n as u64, n, 4, 4, [&a, &b]).unwrap();
            let t = build_image_scorer(ds.pixels(), &Channel::<f64>::identity(4)).unwrap();
            assert_eq!(
                separation_error(&score_dataset(&ds, &t).unwrap()).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn curve_is_reproducible() {
        let a = DiscreteDistribution::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let b = DiscreteDistribution::new(vec![0.1, 0.1, 0.1, 0.7]).unwrap();
        let one = error_vs_noise_curve([&a, &b], (5, 5), 10, &[0.1], 3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].n_images, 20);
        let grid = [0.0, 0.1, 0.2];
        let x = error_vs_noise_curve([&a, &b], (5, 5), 10, &grid, 3).unwrap();
        let y = error_vs_noise_curve([&a, &b], (5, 5), 10, &grid, 3).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn per_pixel_single_pixel_matches_pooled() {
        let a = DiscreteDistribution::new(vec![0.6, 0.2, 0.1, 0.1]).unwrap();
        let b = DiscreteDistribution::new(vec![0.1, 0.1, 0.2, 0.6]).unwrap();
        let w = parametric_channel(0.05f64).unwrap();
        let clean = gen_two_class_images(8, 40, 1, 1, [&a, &b]).unwrap();
        let ds = apply_channel_to_dataset(&clean, &w, 9).unwrap();
        let per = score_dataset_per_pixel(&ds, &w).unwrap();
        assert_eq!(per.mode, ScoringMode::PerPixel);
        let mut counts = vec![0; 4];
        ds.images().iter().for_each(|img| counts[img[0]] += 1);
        let table = score_table_for_output(&smooth_counts(&counts).unwrap(), &w).unwrap();
        let pooled = score_dataset(&ds, &table).unwrap();
        assert_eq!(per.items, pooled);
    }

    #[test]
    fn per_pixel_constant_pixel_is_negligible() {
        let a = DiscreteDistribution::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let b = DiscreteDistribution::new(vec![0.1, 0.1, 0.1, 0.7]).unwrap();
        let ds = gen_two_class_images(4, 100, 3, 1, [&a, &b]).unwrap();
        let mut images = ds.images().to_vec();
        images.iter_mut().for_each(|img| img[1] = 0);
        let ds = ImageDataset::new(3, 1, 4, images, ds.labels().map(<[usize]>::to_vec)).unwrap();
        let per = score_dataset_per_pixel(&ds, &Channel::<f64>::identity(4)).unwrap();
        let f = per.tables[1].scores[0];
        let bound = (1.0 / 800.0f64).sqrt() * 2.0;
        assert!(f.abs() < bound, "{f}");
    }
}
