//! Quantised image corpora: synthetic two-class generation, memoryless
//! channel corruption and the `label,p0,...` CSV format.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{cumulative, sample_cdf, seeded};
use crate::scalar::Real;
use crate::stats::{Channel, DiscreteDistribution};

/// Images as symbol vectors of length `width · height`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageDataset {
    width: usize,
    height: usize,
    alphabet_size: usize,
    images: Vec<Vec<usize>>,
    labels: Option<Vec<usize>>,
}

/// Label-free view of a dataset's pixels, used by the unsupervised scorers.
#[derive(Debug, Clone, Copy)]
pub struct Pixels<'a> {
    pub alphabet_size: usize,
    pub images: &'a [Vec<usize>],
}

impl ImageDataset {
    pub fn new(
        width: usize,
        height: usize,
        alphabet_size: usize,
        images: Vec<Vec<usize>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let len = width * height;
        for (i, img) in images.iter().enumerate() {
            if img.len() != len {
                return Err(Error::DimensionMismatch {
                    what: "image length",
                    expected: len,
                    found: img.len(),
                });
            }
            if let Some(p) = img.iter().position(|&s| s >= alphabet_size) {
                return Err(Error::SymbolOutOfRange {
                    position: i * len + p,
                    symbol: img[p],
                    alphabet: alphabet_size,
                });
            }
        }
        if let Some(l) = &labels {
            if l.len() != images.len() {
                return Err(Error::DimensionMismatch {
                    what: "label count",
                    expected: images.len(),
                    found: l.len(),
                });
            }
        }
        Ok(Self {
            width,
            height,
            alphabet_size,
            images,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn images(&self) -> &[Vec<usize>] {
        &self.images
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixels(&self) -> Pixels<'_> {
        Pixels {
            alphabet_size: self.alphabet_size,
            images: &self.images,
        }
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }
}

/// `n_per_class` images of class 0 followed by `n_per_class` of class 1,
/// every pixel i.i.d. from its class distribution.
pub fn gen_two_class_images<T: Real>(
    seed: u64,
    n_per_class: usize,
    width: usize,
    height: usize,
    class_dists: [&DiscreteDistribution<T>; 2],
) -> Result<ImageDataset> {
    let k = class_dists[0].len();
    if class_dists[1].len() != k {
        return Err(Error::DimensionMismatch {
            what: "class alphabet",
            expected: k,
            found: class_dists[1].len(),
        });
    }
    let mut rng = seeded(seed);
    let len = width * height;
    let mut images = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (class, dist) in class_dists.iter().enumerate() {
        let cdf = cumulative(dist.probs());
        for _ in 0..n_per_class {
            images.push((0..len).map(|_| sample_cdf(&cdf, &mut rng)).collect());
            labels.push(class);
        }
    }
    ImageDataset::new(width, height, k, images, Some(labels))
}

/// Passes every pixel independently through `channel`.
pub fn apply_channel_to_dataset<T: Real>(
    dataset: &ImageDataset,
    channel: &Channel<T>,
    seed: u64,
) -> Result<ImageDataset> {
    if channel.inputs() != dataset.alphabet_size {
        return Err(Error::DimensionMismatch {
            what: "channel input alphabet",
            expected: dataset.alphabet_size,
            found: channel.inputs(),
        });
    }
    let cdfs: Vec<Vec<f64>> = (0..channel.inputs())
        .map(|x| cumulative(&channel.column(x)))
        .collect();
    let mut rng = seeded(seed);
    let images = dataset
        .images
        .iter()
        .map(|img| {
            img.iter()
                .map(|&x| sample_cdf(&cdfs[x], &mut rng))
                .collect()
        })
        .collect();
    ImageDataset::new(
        dataset.width,
        dataset.height,
        channel.outputs(),
        images,
        dataset.labels.clone(),
    )
}

/// Reads `label,p0,p1,...`. An empty label column means "unlabelled"; a
/// file must be all-labelled or all-unlabelled. Without `dims` the images
/// are taken as `pixels × 1`; without `alphabet` it is `max symbol + 1`
/// (at least 2).
pub fn load_images_csv(
    path: &Path,
    dims: Option<(usize, usize)>,
    alphabet: Option<usize>,
) -> Result<ImageDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "header must be `label,p0,p1,...`".into(),
        });
    }
    let npix = headers.len() - 1;
    let mut images = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let label = match record.get(0).unwrap_or("") {
            "" => None,
            s => Some(
                s.parse::<usize>()
                    .map_err(|_| err(format!("bad label `{s}`")))?,
            ),
        };
        let img = (1..=npix)
            .map(|i| {
                let f = record.get(i).unwrap_or("");
                f.parse::<usize>()
                    .map_err(|_| err(format!("bad pixel `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        images.push(img);
        labels.push(label);
    }
    if images.is_empty() {
        return Err(Error::NoData);
    }
    let labels = if labels.iter().all(Option::is_some) {
        Some(labels.into_iter().flatten().collect())
    } else if labels.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "some rows are labelled and some are not".into(),
        });
    };
    let (w, h) = dims.unwrap_or((npix, 1));
    let k = alphabet.unwrap_or_else(|| {
        images
            .iter()
            .flat_map(|i| i.iter().copied())
            .max()
            .map_or(2, |m| (m + 1).max(2))
    });
    ImageDataset::new(w, h, k, images, labels)
}

pub fn write_images_csv(dataset: &ImageDataset, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io(source),
        other => Error::InvalidArgument(format!("{other:?}")),
    })?;
    let mut header = vec!["label".to_string()];
    header.extend((0..dataset.pixel_count()).map(|i| format!("p{i}")));
    w.write_record(&header)?;
    for (i, img) in dataset.images.iter().enumerate() {
        let mut row = vec![dataset
            .labels
            .as_ref()
            .map(|l| l[i].to_string())
            .unwrap_or_default()];
        row.extend(img.iter().map(|p| p.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
