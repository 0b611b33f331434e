//! Online error detection over a live voltage feed.
//!
//! Samples accumulate until a full segment is available; the segment then
//! goes through the same preprocessing as batch mode and is classified.
//! Undesirable segments raise an [`ErrorEvent`].

use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::dataset::UNDESIRABLE;
use crate::error::{check_dim, Result};
use crate::persist::Classifier;
use crate::signal::{preprocess_segment, preprocess_series, PreprocessConfig, RawSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub segment_index: usize,
    pub label: u8,
    /// The segment contained a non-finite or unreadable sample.
    pub data_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub segment_index: usize,
    /// Stream position of the segment's first sample.
    pub sample_offset: u64,
    pub predicted_label: u8,
    pub model: String,
    pub data_fault: bool,
    #[serde(skip, default = "SystemTime::now")]
    pub emitted_at: SystemTime,
}

impl ErrorEvent {
    /// One-line JSON form.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event fields always serialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PushOutcome {
    pub decisions: Vec<Decision>,
    pub events: Vec<ErrorEvent>,
}

/// Single-owner detector state. Moving it between threads is fine;
/// sharing one instance between producers is not supported.
#[derive(Debug)]
pub struct StreamingDetector {
    classifier: Classifier,
    config: PreprocessConfig,
    descriptor: String,
    buffer: Vec<f64>,
    samples_consumed: u64,
    segments_done: usize,
    events_emitted: usize,
}

impl StreamingDetector {
    pub fn new(classifier: Classifier, config: PreprocessConfig) -> Result<Self> {
        config.validate()?;
        check_dim(config.feature_dim, classifier.feature_dim())?;
        Ok(Self {
            descriptor: classifier.descriptor(),
            classifier,
            buffer: Vec::with_capacity(config.segment_len),
            config,
            samples_consumed: 0,
            segments_done: 0,
            events_emitted: 0,
        })
    }

    pub fn samples_consumed(&self) -> u64 {
        self.samples_consumed
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn events_emitted(&self) -> usize {
        self.events_emitted
    }

    pub fn segments_decided(&self) -> usize {
        self.segments_done
    }

    /// Appends samples, classifying every segment completed by them.
    pub fn push_samples(&mut self, samples: &[f64]) -> Result<PushOutcome> {
        let mut out = PushOutcome::default();
        let seg_len = self.config.segment_len;
        let mut rest = samples;
        while !rest.is_empty() {
            let take = (seg_len - self.buffer.len()).min(rest.len());
            self.buffer.extend_from_slice(&rest[..take]);
            self.samples_consumed += take as u64;
            rest = &rest[take..];
            if self.buffer.len() == seg_len {
                let decision = self.classify_buffer()?;
                self.buffer.clear();
                if decision.label == UNDESIRABLE {
                    self.events_emitted += 1;
                    out.events.push(ErrorEvent {
                        segment_index: decision.segment_index,
                        sample_offset: (decision.segment_index * seg_len) as u64,
                        predicted_label: UNDESIRABLE,
                        model: self.descriptor.clone(),
                        data_fault: decision.data_fault,
                        emitted_at: SystemTime::now(),
                    });
                }
                out.decisions.push(decision);
            }
        }
        Ok(out)
    }

    fn classify_buffer(&mut self) -> Result<Decision> {
        let segment_index = self.segments_done;
        self.segments_done += 1;
        if self.buffer.iter().any(|v| !v.is_finite()) {
            return Ok(Decision {
                segment_index,
                label: UNDESIRABLE,
                data_fault: true,
            });
        }
        let features = preprocess_segment(&self.buffer, &self.config)?;
        Ok(Decision {
            segment_index,
            label: self.classifier.predict(&features)?,
            data_fault: false,
        })
    }

    /// Drops an incomplete trailing segment, returning how many samples
    /// were discarded (`None` when the buffer was already empty).
    pub fn flush(&mut self) -> Option<usize> {
        let n = self.buffer.len();
        self.buffer.clear();
        (n > 0).then_some(n)
    }
}

/// Decisions the batch pipeline makes for a complete series.
pub fn batch_decisions(classifier: &Classifier, series: &RawSeries, config: &PreprocessConfig) -> Result<Vec<Decision>> {
    if series.len() < config.segment_len {
        return Ok(Vec::new());
    }
    preprocess_series(series, config)?
        .into_iter()
        .map(|fv| {
            Ok(Decision {
                segment_index: fv.provenance.segment_index,
                label: classifier.predict(&fv.features)?,
                data_fault: false,
            })
        })
        .collect()
}

/// Interprets one line of a sample feed: blank lines and `#` comments are
/// skipped, anything unparsable becomes a NaN sample (a data fault).
pub fn parse_feed_line(line: &str) -> Option<f64> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return None;
    }
    Some(t.parse::<f64>().unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{init_mlp, MlpModel};
    use crate::signal::SourceId;
    use crate::synth::{generate_trial, WelderProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(segment_len: usize) -> PreprocessConfig {
        PreprocessConfig {
            window: 11,
            segment_len,
            feature_dim: 10,
        }
    }

    /// Labels a segment desirable when its mean voltage is near 25 V.
    fn threshold_model() -> MlpModel {
        let mut m = init_mlp(&"10-1-2".parse().unwrap(), 0);
        m.normalization.mean = vec![25.0; 10];
        m.normalization.scale = vec![1.0; 10];
        // hidden unit fires on low voltage, output 1 (undesirable) follows it
        m.layers[0].weights = vec![-1.0; 10];
        m.layers[0].biases = vec![-20.0];
        m.layers[1].weights = vec![0.0, 40.0];
        m.layers[1].biases = vec![0.0, -20.0];
        m
    }

    fn detector(segment_len: usize) -> StreamingDetector {
        StreamingDetector::new(Classifier::Mlp(threshold_model()), cfg(segment_len)).unwrap()
    }

    #[test]
    fn threshold_model_behaves() {
        let m = threshold_model();
        assert_eq!(m.predict(&[25.0; 10]).unwrap(), 1);
        assert_eq!(m.predict(&[2.0; 10]).unwrap(), 0);
    }

    #[test]
    fn push_counts_follow_segment_arithmetic() {
        let mut d = detector(1000);
        assert!(d.push_samples(&vec![25.0; 999]).unwrap().decisions.is_empty());
        assert_eq!(d.buffered(), 999);
        let mut d = detector(1000);
        let out = d.push_samples(&vec![25.0; 2500]).unwrap();
        assert_eq!(out.decisions.len(), 2);
        assert!(out.events.is_empty());
        assert_eq!(d.buffered(), 500);
        assert_eq!(d.samples_consumed(), 2500);
        assert_eq!(d.flush(), Some(500));
        assert_eq!(d.flush(), None);
        assert_eq!(d.buffered(), 0);
    }

    #[test]
    fn steady_full_size_segment_gives_one_desirable_decision() {
        let profile = WelderProfile::new("W01", 0.0, 4);
        let (series, _) = generate_trial(&profile, 1, 100_000).unwrap();
        let config = PreprocessConfig {
            feature_dim: 10,
            ..PreprocessConfig::default()
        };
        let c = Classifier::Mlp(threshold_model());
        let mut d = StreamingDetector::new(c.clone(), config).unwrap();
        let out = d.push_samples(series.samples()).unwrap();
        assert_eq!(out.decisions, batch_decisions(&c, &series, &config).unwrap());
        assert_eq!(out.decisions[0].label, 1);
        assert!(out.events.is_empty());
    }

    #[test]
    fn events_only_for_undesirable_segments() {
        let mut d = detector(100);
        let mut samples = vec![25.0; 100];
        samples.extend(vec![2.0; 100]);
        samples.extend(vec![25.0; 100]);
        let out = d.push_samples(&samples).unwrap();
        let labels: Vec<u8> = out.decisions.iter().map(|x| x.label).collect();
        assert_eq!(labels, [1, 0, 1]);
        assert_eq!(out.events.len(), 1);
        let e = &out.events[0];
        assert_eq!((e.segment_index, e.sample_offset, e.predicted_label, e.data_fault), (1, 100, 0, false));
        assert_eq!(e.model, "10-1-2");
        let json: serde_json::Value = serde_json::from_str(&e.to_json_line()).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 5);
        for k in ["segment_index", "sample_offset", "predicted_label", "model", "data_fault"] {
            assert!(keys.contains(&k));
        }
    }

    #[test]
    fn non_finite_sample_faults_its_segment() {
        let mut d = detector(100);
        let mut samples = vec![25.0; 300];
        samples[150] = f64::NAN;
        let out = d.push_samples(&samples).unwrap();
        assert_eq!(out.decisions[1], Decision { segment_index: 1, label: 0, data_fault: true });
        assert!(!out.decisions[0].data_fault && !out.decisions[2].data_fault);
        assert_eq!(out.events.len(), 1);
        assert!(out.events[0].data_fault);
    }

    #[test]
    fn rejects_mismatched_model() {
        let m = init_mlp(&"7-3-2".parse().unwrap(), 0);
        assert!(StreamingDetector::new(Classifier::Mlp(m), cfg(100)).is_err());
    }

    #[test]
    fn random_chunking_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = Classifier::Mlp(threshold_model());
        for trial in 0..30 {
            let seg = 200;
            let n = rng.random_range(0..seg * 6);
            let samples: Vec<f64> = (0..n)
                .map(|i| if (i / seg + trial) % 3 == 0 { 3.0 } else { 25.0 } + rng.random_range(-1.0..1.0))
                .collect();
            let mut d = StreamingDetector::new(c.clone(), cfg(seg)).unwrap();
            let mut got = Vec::new();
            let mut pos = 0;
            while pos < n {
                let k = rng.random_range(1..=(n - pos).min(3 * seg));
                got.extend(d.push_samples(&samples[pos..pos + k]).unwrap().decisions);
                assert!(d.buffered() < seg);
                pos += k;
            }
            let expected = if n == 0 {
                Vec::new()
            } else {
                let series = RawSeries::new(samples.clone(), 1.0, SourceId::new("W01", None)).unwrap();
                batch_decisions(&c, &series, &cfg(seg)).unwrap()
            };
            assert_eq!(got, expected);
            assert_eq!(d.flush(), (n % seg > 0).then_some(n % seg));
        }
    }

    #[test]
    fn feed_lines() {
        assert_eq!(parse_feed_line(" 24.5 "), Some(24.5));
        assert_eq!(parse_feed_line(""), None);
        assert_eq!(parse_feed_line("# sample_rate_hz=1"), None);
        assert!(parse_feed_line("abc").unwrap().is_nan());
    }
}
