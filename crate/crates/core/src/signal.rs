//! Voltage series preprocessing: smoothing, segmentation and block-mean
//! downsampling into fixed-length feature vectors.
//!
//! Smoothing is applied per segment, both here and in
//! [`crate::stream`], so that batch and streaming paths produce identical
//! feature vectors for the same samples.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WeldError};

/// Identifies where a series came from: a welder and, when known, a trial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceId {
    pub welder_id: String,
    pub trial: Option<u32>,
}

impl SourceId {
    pub fn new(welder_id: impl Into<String>, trial: Option<u32>) -> Self {
        Self {
            welder_id: welder_id.into(),
            trial,
        }
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.trial {
            Some(t) => write!(f, "{}:{}", self.welder_id, t),
            None => f.write_str(&self.welder_id),
        }
    }
}

impl FromStr for SourceId {
    type Err = WeldError;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s.chars().any(char::is_whitespace) {
            return Err(invalid(format!("bad source id {s:?}")));
        }
        match s.rsplit_once(':') {
            Some((welder, trial)) => {
                let trial = trial
                    .parse()
                    .map_err(|_| invalid(format!("bad trial index in source id {s:?}")))?;
                Ok(Self::new(welder, Some(trial)))
            }
            None => Ok(Self::new(s, None)),
        }
    }
}

/// An acquired or synthesized arc-voltage waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    source: SourceId,
}

impl RawSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, source: SourceId) -> Result<Self> {
        if samples.is_empty() {
            return Err(WeldError::EmptyInput("raw series has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(invalid(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn source(&self) -> &SourceId {
        &self.source
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// A fixed-length run of consecutive samples cut from a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub values: Vec<f64>,
    pub index: usize,
}

/// Where a feature vector came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub welder_id: String,
    pub trial: u32,
    pub segment_index: usize,
}

/// One downsampled segment: the pattern unit for clustering and classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub features: Vec<f64>,
    pub provenance: Provenance,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub window: usize,
    pub segment_len: usize,
    pub feature_dim: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window: 201,
            segment_len: 100_000,
            feature_dim: 50,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(invalid("filter window must be at least 1"));
        }
        if self.segment_len == 0 || self.feature_dim == 0 {
            return Err(invalid("segment length and feature dimension must be positive"));
        }
        if self.window > self.segment_len {
            return Err(invalid(format!(
                "filter window {} exceeds segment length {}",
                self.window, self.segment_len
            )));
        }
        if !self.segment_len.is_multiple_of(self.feature_dim) {
            return Err(invalid(format!(
                "segment length {} is not divisible by feature dimension {}",
                self.segment_len, self.feature_dim
            )));
        }
        Ok(())
    }
}

/// Centered moving average over `values`. Near the edges the window is
/// truncated to the samples that exist.
///
/// Sums are accumulated as offsets from the first sample, so a constant
/// input comes back bit-identical.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if window == 0 || window > n {
        return Err(invalid(format!(
            "filter window {window} must be in 1..={n}"
        )));
    }
    if window == 1 {
        return Ok(values.to_vec());
    }
    let anchor = values[0];
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    prefix.push(acc);
    for &v in values {
        acc += v - anchor;
        prefix.push(acc);
    }
    let behind = (window - 1) / 2;
    let ahead = window / 2;
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(behind);
            let hi = (i + ahead + 1).min(n);
            anchor + (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}

pub fn moving_average_filter(series: &RawSeries, window: usize) -> Result<RawSeries> {
    let smoothed = moving_average(series.samples(), window)?;
    Ok(RawSeries {
        samples: smoothed,
        sample_rate_hz: series.sample_rate_hz,
        source: series.source.clone(),
    })
}

/// Cuts the series into `floor(N / segment_len)` non-overlapping segments,
/// dropping the trailing remainder.
pub fn segment_series(series: &RawSeries, segment_len: usize) -> Result<Vec<Segment>> {
    if segment_len == 0 {
        return Err(invalid("segment length must be positive"));
    }
    if series.len() < segment_len {
        return Err(WeldError::EmptyInput(format!(
            "series of {} samples is shorter than one segment ({segment_len})",
            series.len()
        )));
    }
    Ok(series
        .samples()
        .chunks_exact(segment_len)
        .enumerate()
        .map(|(index, chunk)| Segment {
            values: chunk.to_vec(),
            index,
        })
        .collect())
}

/// Means of `feature_dim` equal contiguous blocks of `values`.
pub fn block_means(values: &[f64], feature_dim: usize) -> Result<Vec<f64>> {
    if feature_dim == 0 || values.is_empty() || !values.len().is_multiple_of(feature_dim) {
        return Err(invalid(format!(
            "{} samples cannot be split into {feature_dim} equal blocks",
            values.len()
        )));
    }
    let block = values.len() / feature_dim;
    Ok(values
        .chunks_exact(block)
        .map(|chunk| {
            let anchor = chunk[0];
            let offset: f64 = chunk.iter().map(|v| v - anchor).sum();
            anchor + offset / block as f64
        })
        .collect())
}

pub fn block_downsample(segment: &Segment, feature_dim: usize) -> Result<Vec<f64>> {
    block_means(&segment.values, feature_dim)
}

/// Filter and downsample the samples of one segment. Shared by the batch
/// and streaming paths.
pub fn preprocess_segment(values: &[f64], config: &PreprocessConfig) -> Result<Vec<f64>> {
    let smoothed = moving_average(values, config.window)?;
    block_means(&smoothed, config.feature_dim)
}

/// Segment, smooth and downsample a whole series.
pub fn preprocess_series(series: &RawSeries, config: &PreprocessConfig) -> Result<Vec<FeatureVector>> {
    config.validate()?;
    if series.len() < config.segment_len {
        return Err(WeldError::EmptyInput(format!(
            "series of {} samples is shorter than one segment ({})",
            series.len(),
            config.segment_len
        )));
    }
    let source = series.source();
    series
        .samples()
        .chunks_exact(config.segment_len)
        .enumerate()
        .map(|(segment_index, chunk)| {
            Ok(FeatureVector {
                features: preprocess_segment(chunk, config)?,
                provenance: Provenance {
                    welder_id: source.welder_id.clone(),
                    trial: source.trial.unwrap_or(0),
                    segment_index,
                },
            })
        })
        .collect()
}

/// Writes the series file format: a `# sample_rate_hz=<f> source_id=<id>`
/// header followed by one voltage value per line.
pub fn write_raw_series<W: Write>(series: &RawSeries, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# sample_rate_hz={} source_id={}",
        series.sample_rate_hz, series.source
    )?;
    for v in series.samples() {
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_header(line: &str, line_no: usize) -> Result<(f64, SourceId)> {
    let bad = |msg: String| WeldError::Format {
        what: "series header",
        line: line_no,
        msg,
    };
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| bad("expected a '#' header line".into()))?;
    let mut rate = None;
    let mut source = None;
    for token in body.split_whitespace() {
        match token.split_once('=') {
            Some(("sample_rate_hz", v)) => {
                rate = Some(v.parse::<f64>().map_err(|e| bad(format!("sample_rate_hz: {e}")))?)
            }
            Some(("source_id", v)) => source = Some(v.parse::<SourceId>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(bad(format!("unexpected header token {token:?}"))),
        }
    }
    match (rate, source) {
        (Some(r), Some(s)) => Ok((r, s)),
        _ => Err(bad("header needs sample_rate_hz and source_id".into())),
    }
}

pub fn read_raw_series<R: BufRead>(input: R) -> Result<RawSeries> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| WeldError::Format {
        what: "series file",
        line: 1,
        msg: "file is empty".into(),
    })??;
    let (rate, source) = parse_header(header.trim_end(), 1)?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let v = text.parse::<f64>().map_err(|e| WeldError::Format {
            what: "series sample",
            line: i + 2,
            msg: format!("{text:?}: {e}"),
        })?;
        samples.push(v);
    }
    RawSeries::new(samples, rate, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(samples: Vec<f64>) -> RawSeries {
        RawSeries::new(samples, 10_000.0, SourceId::new("W01", Some(0))).unwrap()
    }

    /// Independent oracle: mean over the truncated centered window.
    fn brute_moving_average(x: &[f64], w: usize) -> Vec<f64> {
        let n = x.len() as isize;
        let behind = ((w - 1) / 2) as isize;
        let ahead = (w / 2) as isize;
        (0..n)
            .map(|i| {
                let idx: Vec<usize> = (i - behind..=i + ahead)
                    .filter(|&j| j >= 0 && j < n)
                    .map(|j| j as usize)
                    .collect();
                idx.iter().map(|&j| x[j]).sum::<f64>() / idx.len() as f64
            })
            .collect()
    }

    #[test]
    fn moving_average_small_example() {
        let x = [0.0, 0.0, 4.0, 0.0, 0.0];
        let expected = brute_moving_average(&x, 3);
        assert_eq!(expected, vec![0.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 0.0]);
        let got = moving_average(&x, 3).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-15, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn moving_average_constant_and_identity() {
        let c = vec![5.0; 1000];
        assert_eq!(moving_average(&c, 25).unwrap(), c);
        let odd = vec![25.3; 777];
        assert_eq!(moving_average(&odd, 201).unwrap(), odd);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0 + 25.0).collect();
        assert_eq!(moving_average(&x, 1).unwrap(), x);
    }

    #[test]
    fn moving_average_rejects_bad_window() {
        assert!(matches!(moving_average(&[1.0, 2.0], 0), Err(WeldError::InvalidArgument(_))));
        assert!(matches!(moving_average(&[1.0, 2.0], 3), Err(WeldError::InvalidArgument(_))));
        let s = series(vec![1.0, 2.0, 3.0]);
        assert!(moving_average_filter(&s, 4).is_err());
    }

    #[test]
    fn segmentation_floor_division() {
        let s = series(vec![1.0; 250]);
        let segs = segment_series(&s, 100).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|sg| sg.values.len() == 100));
        assert_eq!(segs[1].index, 1);

        let exact = series((0..100).map(f64::from).collect());
        let one = segment_series(&exact, 100).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].values, exact.samples());

        assert!(matches!(segment_series(&s, 300), Err(WeldError::EmptyInput(_))));
    }

    #[test]
    fn segmentation_paper_geometry() {
        let s = series(vec![25.0; 1_700_000]);
        assert_eq!(segment_series(&s, 100_000).unwrap().len(), 17);
        let s = series(vec![25.0; 250_000]);
        let segs = segment_series(&s, 100_000).unwrap();
        assert_eq!(segs.len(), 2);
    }

    #[test]
    fn block_downsample_examples() {
        let seg = Segment {
            values: vec![1.0, 1.0, 3.0, 3.0],
            index: 0,
        };
        assert_eq!(block_downsample(&seg, 2).unwrap(), vec![1.0, 3.0]);

        let c = Segment {
            values: vec![7.3; 600],
            index: 0,
        };
        assert_eq!(block_downsample(&c, 50).unwrap(), vec![7.3; 50]);

        let big = Segment {
            values: (0..100_000).map(|i| (i / 2000) as f64).collect(),
            index: 0,
        };
        let f = block_downsample(&big, 50).unwrap();
        assert_eq!(f.len(), 50);
        assert_eq!(f[17], 17.0);

        assert!(matches!(block_downsample(&seg, 3), Err(WeldError::InvalidArgument(_))));
    }

    #[test]
    fn preprocess_shapes() {
        let cfg = PreprocessConfig::default();
        let s = series(vec![24.0; 100_000]);
        let fv = preprocess_series(&s, &cfg).unwrap();
        assert_eq!(fv.len(), 1);
        assert_eq!(fv[0].features, vec![24.0; 50]);

        let cfg = PreprocessConfig {
            window: 5,
            segment_len: 20,
            feature_dim: 4,
        };
        let s = series((0..75).map(|i| i as f64).collect());
        let fv = preprocess_series(&s, &cfg).unwrap();
        assert_eq!(fv.len(), 3);
        let idx: Vec<usize> = fv.iter().map(|f| f.provenance.segment_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn config_validation() {
        let bad = PreprocessConfig {
            window: 3,
            segment_len: 10,
            feature_dim: 3,
        };
        assert!(bad.validate().is_err());
        let bad = PreprocessConfig {
            window: 11,
            segment_len: 10,
            feature_dim: 5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn raw_series_validation() {
        assert!(matches!(
            RawSeries::new(vec![], 1.0, SourceId::new("a", None)),
            Err(WeldError::EmptyInput(_))
        ));
        assert!(RawSeries::new(vec![f64::NAN], 1.0, SourceId::new("a", None)).is_err());
        assert!(RawSeries::new(vec![1.0], 0.0, SourceId::new("a", None)).is_err());
    }

    #[test]
    fn series_file_roundtrip() {
        let s = RawSeries::new(
            vec![25.1234, 2.0, 44.9999, -0.5],
            50_000.0,
            SourceId::new("W07", Some(2)),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_raw_series(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# sample_rate_hz=50000 source_id=W07:2\n"));
        let back = read_raw_series(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn series_file_errors() {
        assert!(read_raw_series(&b""[..]).is_err());
        assert!(read_raw_series(&b"1.0\n2.0\n"[..]).is_err());
        let err = read_raw_series(&b"# sample_rate_hz=1 source_id=a\n1.0\nabc\n"[..]).unwrap_err();
        assert!(matches!(err, WeldError::Format { line: 3, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn moving_average_matches_brute_force(
            x in prop::collection::vec(-50.0f64..50.0, 1..200),
            w in 1usize..40,
        ) {
            prop_assume!(w <= x.len());
            let fast = moving_average(&x, w).unwrap();
            let slow = brute_moving_average(&x, w);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn moving_average_does_not_increase_variance(
            x in prop::collection::vec(-50.0f64..50.0, 2..300),
            w in 2usize..30,
        ) {
            prop_assume!(w <= x.len());
            let var = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
            };
            let y = moving_average(&x, w).unwrap();
            prop_assert!(var(&y) <= var(&x) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn block_means_preserve_mean(
            blocks in 1usize..20,
            per in 1usize..30,
            seed in prop::collection::vec(-30.0f64..30.0, 600),
        ) {
            let values: Vec<f64> = seed.iter().copied().cycle().take(blocks * per).collect();
            let f = block_means(&values, blocks).unwrap();
            let m1 = values.iter().sum::<f64>() / values.len() as f64;
            let m2 = f.iter().sum::<f64>() / f.len() as f64;
            prop_assert!((m1 - m2).abs() <= 1e-9 * m1.abs().max(1.0));
        }

        #[test]
        fn preprocess_shape_law(n in 1usize..400, seg in prop::sample::select(vec![10usize, 20, 40])) {
            prop_assume!(n >= seg);
            let cfg = PreprocessConfig { window: 3, segment_len: seg, feature_dim: 5 };
            let s = series((0..n).map(|i| (i as f64).cos()).collect());
            let fv = preprocess_series(&s, &cfg).unwrap();
            prop_assert_eq!(fv.len(), n / seg);
            prop_assert!(fv.iter().all(|f| f.dim() == 5));
            let again = preprocess_series(&s, &cfg).unwrap();
            prop_assert_eq!(fv, again);
        }
    }
}
