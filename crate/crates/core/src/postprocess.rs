//! Frame probabilities to event lists: threshold, 1-D median filter along
//! time, run extraction with frame-to-seconds conversion.

use crate::error::{Result, SedError};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Seconds per network output frame for the full-size front end
/// (hop 431 samples, time pooling 4).
pub const OUTPUT_FRAME_SECONDS: f64 = 431.0 * 4.0 / 44100.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub threshold: f64,
    pub median_window: usize,
    pub frame_duration: f64,
    /// Filter raw probabilities instead of binarized decisions.
    pub filter_probabilities: bool,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            threshold: 0.5,
            median_window: 7,
            frame_duration: OUTPUT_FRAME_SECONDS,
            filter_probabilities: false,
        }
    }
}

impl DecodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.median_window % 2 == 0 || self.median_window == 0 {
            return Err(SedError::InvalidInput(format!(
                "median window must be odd and positive, got {}",
                self.median_window
            )));
        }
        if self.threshold <= 0.0 || self.threshold >= 1.0 {
            return Err(SedError::InvalidInput(format!(
                "threshold must be in (0,1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// One decoded or reference sound event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub class: usize,
    pub onset: f64,
    pub offset: f64,
}

pub type EventList = Vec<Event>;

/// Sliding-window median with reflect padding; output length equals input
/// length. Uses an index-mapped window and quickselect per position.
pub fn median_filter_1d(seq: &[f64], window: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window == 0 {
        return Err(SedError::InvalidInput(format!(
            "median window must be odd and positive, got {window}"
        )));
    }
    if window == 1 || seq.is_empty() {
        return Ok(seq.to_vec());
    }
    let n = seq.len() as i64;
    let half = (window / 2) as i64;
    // Reflect without repeating the edge sample: index -1 maps to 1.
    let reflect = |i: i64| -> usize {
        let mut i = i;
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return i as usize;
            }
        }
    };
    let mut out = Vec::with_capacity(seq.len());
    let mut buf = vec![0.0f64; window];
    for c in 0..n {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = seq[reflect(c - half + j as i64)];
        }
        let mid = window / 2;
        buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite probabilities"));
        out.push(buf[mid]);
    }
    Ok(out)
}

/// Decode one clip's strong probability grid [frames, classes] into events:
/// per class binarize at the threshold, median-filter, extract maximal runs,
/// convert run [i, j] to seconds [i*dt, (j+1)*dt).
pub fn decode_events(strong: &Array2<f32>, cfg: &DecodingConfig) -> Result<EventList> {
    cfg.validate()?;
    let (frames, classes) = strong.dim();
    let mut events = Vec::new();
    let mut seq = vec![0.0f64; frames];
    for class in 0..classes {
        if cfg.filter_probabilities {
            for (s, v) in seq.iter_mut().zip(strong.column(class).iter()) {
                *s = f64::from(*v);
            }
            let filtered = median_filter_1d(&seq, cfg.median_window)?;
            for (s, v) in seq.iter_mut().zip(filtered.iter()) {
                *s = if *v > cfg.threshold { 1.0 } else { 0.0 };
            }
        } else {
            for (s, v) in seq.iter_mut().zip(strong.column(class).iter()) {
                *s = if f64::from(*v) > cfg.threshold { 1.0 } else { 0.0 };
            }
            let filtered = median_filter_1d(&seq, cfg.median_window)?;
            seq.copy_from_slice(&filtered);
        }
        let mut run_start: Option<usize> = None;
        for t in 0..=frames {
            let active = t < frames && seq[t] >= 0.5;
            match (run_start, active) {
                (None, true) => run_start = Some(t),
                (Some(start), false) => {
                    events.push(Event {
                        class,
                        onset: start as f64 * cfg.frame_duration,
                        offset: t as f64 * cfg.frame_duration,
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    events.sort_by(|a, b| {
        (a.class, a.onset)
            .partial_cmp(&(b.class, b.onset))
            .expect("finite times")
    });
    Ok(events)
}

/// Write events in the submission format: filename, onset, offset, label,
/// tab-separated with three decimals.
pub fn write_event_file<W: Write>(
    out: &mut W,
    rows: &[(String, EventList)],
    class_names: &[String],
) -> std::io::Result<()> {
    writeln!(out, "filename\tonset\toffset\tevent_label")?;
    for (name, events) in rows {
        for e in events {
            writeln!(
                out,
                "{}\t{:.3}\t{:.3}\t{}",
                name, e.onset, e.offset, class_names[e.class]
            )?;
        }
    }
    Ok(())
}

pub fn write_event_path(
    path: &Path,
    rows: &[(String, EventList)],
    class_names: &[String],
) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| SedError::io(path, e))?,
    );
    write_event_file(&mut f, rows, class_names).map_err(|e| SedError::io(path, e))
}
