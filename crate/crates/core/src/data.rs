//! Desk-scale dataset: deterministic synthetic clips for the weak, strong,
//! unlabeled and validation pools, manifest I/O in the tab-separated
//! submission format, and event rasterization onto the network's output grid.

use crate::error::{Result, SedError};
use crate::features::{wav, CLIP_SAMPLES, CLIP_SECONDS, SAMPLE_RATE};
use crate::postprocess::{Event, EventList, OUTPUT_FRAME_SECONDS};
use crate::rng::stream;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub const NUM_CLASSES: usize = 10;

pub fn class_name(index: usize) -> String {
    format!("Class{index}")
}

pub fn class_names() -> Vec<String> {
    (0..NUM_CLASSES).map(class_name).collect()
}

pub fn class_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("Class")?;
    let idx: usize = rest.parse().ok()?;
    (idx < NUM_CLASSES).then_some(idx)
}

#[derive(Debug, Clone, Copy)]
pub enum GeneratorKind {
    Tone,
    ChirpUp,
    ChirpDown,
    NoiseBurst,
    HarmonicStack,
}

/// Per-class synthesis recipe. The ten classes occupy distinct spectral
/// regions so the desk-scale learning problem is feasible for a small model.
#[derive(Debug, Clone, Copy)]
pub struct SynthClassSpec {
    pub class_id: usize,
    pub kind: GeneratorKind,
    pub duration_s: (f64, f64),
    pub base_freq_hz: (f64, f64),
}

pub fn class_specs() -> [SynthClassSpec; NUM_CLASSES] {
    use GeneratorKind::*;
    let d = (1.2, 3.2);
    [
        SynthClassSpec { class_id: 0, kind: Tone, duration_s: d, base_freq_hz: (220.0, 320.0) },
        SynthClassSpec { class_id: 1, kind: Tone, duration_s: d, base_freq_hz: (550.0, 750.0) },
        SynthClassSpec { class_id: 2, kind: Tone, duration_s: d, base_freq_hz: (1300.0, 1700.0) },
        SynthClassSpec { class_id: 3, kind: Tone, duration_s: d, base_freq_hz: (3200.0, 4000.0) },
        SynthClassSpec { class_id: 4, kind: ChirpUp, duration_s: d, base_freq_hz: (400.0, 550.0) },
        SynthClassSpec { class_id: 5, kind: ChirpDown, duration_s: d, base_freq_hz: (2200.0, 2700.0) },
        SynthClassSpec { class_id: 6, kind: NoiseBurst, duration_s: d, base_freq_hz: (5000.0, 7000.0) },
        SynthClassSpec { class_id: 7, kind: NoiseBurst, duration_s: d, base_freq_hz: (10000.0, 13000.0) },
        SynthClassSpec { class_id: 8, kind: HarmonicStack, duration_s: d, base_freq_hz: (150.0, 240.0) },
        SynthClassSpec { class_id: 9, kind: HarmonicStack, duration_s: d, base_freq_hz: (750.0, 1050.0) },
    ]
}

/// An in-memory generated clip: samples quantized to 16-bit precision (what a
/// WAV round trip yields), the exact event annotations, and the clip kind.
#[derive(Debug, Clone)]
pub struct GeneratedClip {
    pub id: String,
    pub samples: Vec<f32>,
    pub events: EventList,
}

impl GeneratedClip {
    pub fn weak_labels(&self) -> Vec<usize> {
        let mut classes: Vec<usize> = self.events.iter().map(|e| e.class).collect();
        classes.sort_unstable();
        classes.dedup();
        classes
    }
}

fn pink_noise(rng: &mut ChaCha8Rng, n: usize, amplitude: f32) -> Vec<f32> {
    // Three-pole pink approximation over white noise.
    let (mut b0, mut b1, mut b2) = (0.0f32, 0.0f32, 0.0f32);
    (0..n)
        .map(|_| {
            let white: f32 = rng.gen_range(-1.0..1.0);
            b0 = 0.99886 * b0 + white * 0.055_517_9;
            b1 = 0.99332 * b1 + white * 0.075_075_9;
            b2 = 0.96900 * b2 + white * 0.153_852;
            amplitude * (b0 + b1 + b2 + white * 0.1848)
        })
        .collect()
}

/// RBJ constant-skirt bandpass biquad.
fn bandpass(samples: &mut [f32], center_hz: f64, q: f64) {
    let w0 = 2.0 * std::f64::consts::PI * center_hz / f64::from(SAMPLE_RATE);
    let alpha = w0.sin() / (2.0 * q);
    let b0 = q * alpha;
    let b2 = -q * alpha;
    let a0 = 1.0 + alpha;
    let a1 = -2.0 * w0.cos();
    let a2 = 1.0 - alpha;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for s in samples.iter_mut() {
        let x0 = f64::from(*s);
        let y0 = (b0 * x0 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
        x2 = x1;
        x1 = x0;
        y2 = y1;
        y1 = y0;
        *s = y0 as f32;
    }
}

fn render_event(spec: &SynthClassSpec, duration: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = (duration * f64::from(SAMPLE_RATE)).round() as usize;
    let f0 = rng.gen_range(spec.base_freq_hz.0..spec.base_freq_hz.1);
    let phase0 = rng.gen_range(0.0..std::f64::consts::TAU);
    let dt = 1.0 / f64::from(SAMPLE_RATE);
    let mut out = vec![0.0f32; n];
    match spec.kind {
        GeneratorKind::Tone => {
            for (i, s) in out.iter_mut().enumerate() {
                *s = (phase0 + std::f64::consts::TAU * f0 * i as f64 * dt).sin() as f32;
            }
        }
        GeneratorKind::ChirpUp | GeneratorKind::ChirpDown => {
            let ratio = if matches!(spec.kind, GeneratorKind::ChirpUp) { 2.0 } else { 0.5 };
            let f1 = f0 * ratio;
            let k = (f1 - f0) / duration;
            for (i, s) in out.iter_mut().enumerate() {
                let t = i as f64 * dt;
                *s = (phase0 + std::f64::consts::TAU * (f0 * t + 0.5 * k * t * t)).sin() as f32;
            }
        }
        GeneratorKind::NoiseBurst => {
            for s in out.iter_mut() {
                *s = rng.gen_range(-1.0f32..1.0);
            }
            bandpass(&mut out, f0, 2.0);
            // Renormalize after the narrowband filter.
            let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-6);
            for s in out.iter_mut() {
                *s /= peak;
            }
        }
        GeneratorKind::HarmonicStack => {
            let harmonics = 5usize;
            let norm: f64 = (1..=harmonics).map(|k| 1.0 / k as f64).sum();
            for (i, s) in out.iter_mut().enumerate() {
                let t = i as f64 * dt;
                let mut v = 0.0f64;
                for k in 1..=harmonics {
                    v += (phase0 * k as f64 + std::f64::consts::TAU * f0 * k as f64 * t).sin()
                        / k as f64;
                }
                *s = (v / norm) as f32;
            }
        }
    }
    // 20 ms raised-cosine attack and release inside the annotated interval.
    let ramp = (0.020 * f64::from(SAMPLE_RATE)) as usize;
    let ramp = ramp.min(n / 2);
    for i in 0..ramp {
        let g = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / ramp as f64).cos());
        out[i] *= g as f32;
        out[n - 1 - i] *= g as f32;
    }
    out
}

/// Deal classes from repeating shuffled decks so every pool stays balanced.
struct ClassDeck {
    rng: ChaCha8Rng,
    deck: Vec<usize>,
    pos: usize,
}

impl ClassDeck {
    fn new(rng: ChaCha8Rng) -> Self {
        ClassDeck {
            rng,
            deck: Vec::new(),
            pos: 0,
        }
    }

    fn next_avoiding(&mut self, taken: &[usize]) -> usize {
        loop {
            if self.pos >= self.deck.len() {
                self.deck = (0..NUM_CLASSES).collect();
                self.deck.shuffle(&mut self.rng);
                self.pos = 0;
            }
            // Find the first undealt entry not already used in this clip.
            if let Some(offset) = (self.pos..self.deck.len())
                .find(|&i| !taken.contains(&self.deck[i]))
            {
                self.deck.swap(self.pos, offset);
                let class = self.deck[self.pos];
                self.pos += 1;
                return class;
            }
            // Everything left collides; reshuffle a fresh deck.
            self.pos = self.deck.len();
        }
    }
}

fn synth_clip(id: String, rng: &mut ChaCha8Rng, deck: &mut ClassDeck) -> GeneratedClip {
    let specs = class_specs();
    let mut samples = pink_noise(rng, CLIP_SAMPLES, 0.012);
    let n_events = rng.gen_range(1..=3usize);
    let mut events = Vec::with_capacity(n_events);
    let mut taken = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let class = deck.next_avoiding(&taken);
        taken.push(class);
        let spec = specs[class];
        let duration = rng.gen_range(spec.duration_s.0..spec.duration_s.1);
        let onset = rng.gen_range(0.25..(CLIP_SECONDS - 0.25 - duration));
        let amplitude = rng.gen_range(0.15..0.40f32);
        let rendered = render_event(&spec, duration, rng);
        let start = (onset * f64::from(SAMPLE_RATE)).round() as usize;
        for (i, v) in rendered.iter().enumerate() {
            if start + i < samples.len() {
                samples[start + i] += amplitude * v;
            }
        }
        events.push(Event {
            class,
            onset,
            offset: onset + duration,
        });
    }
    events.sort_by(|a, b| (a.onset, a.class).partial_cmp(&(b.onset, b.class)).unwrap());
    wav::quantize_i16(&mut samples);
    GeneratedClip {
        id,
        samples,
        events,
    }
}

/// Generate one pool of clips, deterministically under (seed, pool name).
pub fn generate_pool(seed: u64, pool: &str, count: usize) -> Vec<GeneratedClip> {
    let deck_rng = stream(seed, &format!("deck/{pool}"), 0);
    let mut deck = ClassDeck::new(deck_rng);
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, &format!("clip/{pool}"), i as u64);
            synth_clip(format!("{pool}_{i:04}.wav"), &mut rng, &mut deck)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetPaths {
    pub root: PathBuf,
    pub audio_dir: PathBuf,
    pub weak_manifest: PathBuf,
    pub strong_manifest: PathBuf,
    pub unlabeled_manifest: PathBuf,
    pub validation_manifest: PathBuf,
}

impl DatasetPaths {
    pub fn under(root: &Path) -> Self {
        DatasetPaths {
            root: root.to_path_buf(),
            audio_dir: root.join("audio"),
            weak_manifest: root.join("weak.tsv"),
            strong_manifest: root.join("strong.tsv"),
            unlabeled_manifest: root.join("unlabeled.tsv"),
            validation_manifest: root.join("validation.tsv"),
        }
    }
}

/// Generate all four pools and write WAVs plus manifests.
pub fn generate_dataset(
    out_dir: &Path,
    seed: u64,
    n_weak: usize,
    n_strong: usize,
    n_unlabeled: usize,
    n_validation: usize,
) -> Result<DatasetPaths> {
    let paths = DatasetPaths::under(out_dir);
    std::fs::create_dir_all(&paths.audio_dir).map_err(|e| SedError::io(&paths.audio_dir, e))?;

    let weak = generate_pool(seed, "weak", n_weak);
    let strong = generate_pool(seed, "strong", n_strong);
    let unlabeled = generate_pool(seed, "unlabeled", n_unlabeled);
    let validation = generate_pool(seed, "validation", n_validation);

    for clip in weak.iter().chain(&strong).chain(&unlabeled).chain(&validation) {
        wav::write_wav(&paths.audio_dir.join(&clip.id), &clip.samples)?;
    }

    write_weak_manifest(&paths.weak_manifest, &weak)?;
    write_strong_manifest(&paths.strong_manifest, &strong)?;
    write_strong_manifest(&paths.validation_manifest, &validation)?;
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(&paths.unlabeled_manifest)
            .map_err(|e| SedError::io(&paths.unlabeled_manifest, e))?,
    );
    for clip in &unlabeled {
        writeln!(f, "{}", clip.id).map_err(|e| SedError::io(&paths.unlabeled_manifest, e))?;
    }
    f.flush().map_err(|e| SedError::io(&paths.unlabeled_manifest, e))?;
    Ok(paths)
}

fn write_strong_manifest(path: &Path, clips: &[GeneratedClip]) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| SedError::io(path, e))?,
    );
    writeln!(f, "filename\tonset\toffset\tevent_label").map_err(|e| SedError::io(path, e))?;
    for clip in clips {
        for e in &clip.events {
            writeln!(
                f,
                "{}\t{:.3}\t{:.3}\t{}",
                clip.id,
                e.onset,
                e.offset,
                class_name(e.class)
            )
            .map_err(|e| SedError::io(path, e))?;
        }
    }
    f.flush().map_err(|e| SedError::io(path, e))
}

fn write_weak_manifest(path: &Path, clips: &[GeneratedClip]) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| SedError::io(path, e))?,
    );
    writeln!(f, "filename\tevent_labels").map_err(|e| SedError::io(path, e))?;
    for clip in clips {
        let labels: Vec<String> = clip.weak_labels().into_iter().map(class_name).collect();
        writeln!(f, "{}\t{}", clip.id, labels.join(","))
            .map_err(|e| SedError::io(path, e))?;
    }
    f.flush().map_err(|e| SedError::io(path, e))
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let f = std::fs::File::open(path).map_err(|e| SedError::io(path, e))?;
    Ok(std::io::BufReader::new(f).lines())
}

/// Parse "filename<TAB>onset<TAB>offset<TAB>event_label" lines; a header line
/// starting with "filename" is skipped.
pub fn load_strong_manifest(path: &Path) -> Result<BTreeMap<String, EventList>> {
    let mut map: BTreeMap<String, EventList> = BTreeMap::new();
    for (lineno, line) in open_lines(path)?.enumerate() {
        let line = line.map_err(|e| SedError::io(path, e))?;
        let lineno = lineno + 1;
        if line.is_empty() || (lineno == 1 && line.starts_with("filename")) {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(SedError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected 4 tab-separated fields, got {}", parts.len()),
            });
        }
        let onset: f64 = parts[1].parse().map_err(|_| SedError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("bad onset {:?}", parts[1]),
        })?;
        let offset: f64 = parts[2].parse().map_err(|_| SedError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("bad offset {:?}", parts[2]),
        })?;
        if !(0.0 <= onset && onset < offset && offset <= CLIP_SECONDS) {
            return Err(SedError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("invalid interval [{onset}, {offset}]"),
            });
        }
        let class = class_index(parts[3]).ok_or_else(|| SedError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("unknown label {:?}", parts[3]),
        })?;
        map.entry(parts[0].to_string()).or_default().push(Event {
            class,
            onset,
            offset,
        });
    }
    Ok(map)
}

/// Parse "filename<TAB>label1,label2,..." into multi-hot vectors. Weak clips
/// must carry at least one label; duplicates collapse.
pub fn load_weak_manifest(path: &Path) -> Result<BTreeMap<String, Vec<f32>>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in open_lines(path)?.enumerate() {
        let line = line.map_err(|e| SedError::io(path, e))?;
        let lineno = lineno + 1;
        if line.is_empty() || (lineno == 1 && line.starts_with("filename")) {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 2 {
            return Err(SedError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected 2 tab-separated fields, got {}", parts.len()),
            });
        }
        let mut hot = vec![0.0f32; NUM_CLASSES];
        let mut any = false;
        for label in parts[1].split(',') {
            let label = label.trim();
            if label.is_empty() {
                continue;
            }
            let class = class_index(label).ok_or_else(|| SedError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("unknown label {label:?}"),
            })?;
            hot[class] = 1.0;
            any = true;
        }
        if !any {
            return Err(SedError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: "weak clip without labels".into(),
            });
        }
        map.insert(parts[0].to_string(), hot);
    }
    Ok(map)
}

pub fn load_unlabeled_manifest(path: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for line in open_lines(path)? {
        let line = line.map_err(|e| SedError::io(path, e))?;
        if !line.is_empty() {
            names.push(line);
        }
    }
    Ok(names)
}

/// Rasterize events onto a [frames x classes] binary grid: frame t is active
/// for a class when the frame interval [t*dt, (t+1)*dt) overlaps one of its
/// events by any amount.
pub fn rasterize_events_to(events: &EventList, frames: usize, dt: f64) -> Array2<f32> {
    let mut grid = Array2::<f32>::zeros((frames, NUM_CLASSES));
    for e in events {
        let first = (e.onset / dt).floor().max(0.0) as usize;
        for t in first..frames {
            let lo = t as f64 * dt;
            if lo >= e.offset {
                break;
            }
            let hi = lo + dt;
            if e.onset < hi && e.offset > lo {
                grid[[t, e.class]] = 1.0;
            }
        }
    }
    grid
}

/// Rasterize at the full-size network resolution (256 output frames).
pub fn rasterize_events(events: &EventList) -> Array2<f32> {
    rasterize_events_to(events, 256, OUTPUT_FRAME_SECONDS)
}

/// Column-wise max of a rasterized grid: the clip's implied weak labels.
pub fn weak_from_grid(grid: &Array2<f32>) -> Vec<f32> {
    (0..grid.ncols())
        .map(|c| grid.column(c).iter().cloned().fold(0.0, f32::max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postprocess::{decode_events, DecodingConfig};

    #[test]
    fn pool_generation_is_deterministic() {
        let a = generate_pool(7, "weak", 3);
        let b = generate_pool(7, "weak", 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.samples, y.samples);
            assert_eq!(x.events, y.events);
        }
        let c = generate_pool(8, "weak", 3);
        assert_ne!(a[0].samples, c[0].samples);
    }

    #[test]
    fn dataset_write_is_deterministic_and_empty_pools_exist() {
        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("a");
        let d2 = dir.path().join("b");
        generate_dataset(&d1, 5, 2, 2, 2, 1).unwrap();
        generate_dataset(&d2, 5, 2, 2, 2, 1).unwrap();
        for rel in ["weak.tsv", "strong.tsv", "unlabeled.tsv", "validation.tsv"] {
            let a = std::fs::read(d1.join(rel)).unwrap();
            let b = std::fs::read(d2.join(rel)).unwrap();
            assert_eq!(a, b, "{rel}");
        }
        let a = std::fs::read(d1.join("audio/strong_0001.wav")).unwrap();
        let b = std::fs::read(d2.join("audio/strong_0001.wav")).unwrap();
        assert_eq!(a, b);

        let empty = dir.path().join("empty");
        let paths = generate_dataset(&empty, 5, 0, 1, 0, 0).unwrap();
        let weak = load_weak_manifest(&paths.weak_manifest).unwrap();
        assert!(weak.is_empty());
        assert!(load_unlabeled_manifest(&paths.unlabeled_manifest)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn strong_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_dataset(dir.path(), 11, 0, 4, 0, 0).unwrap();
        let loaded = load_strong_manifest(&paths.strong_manifest).unwrap();
        let clips = generate_pool(11, "strong", 4);
        assert_eq!(loaded.len(), 4);
        for clip in &clips {
            let events = &loaded[&clip.id];
            assert_eq!(events.len(), clip.events.len());
            for (a, b) in events.iter().zip(&clip.events) {
                assert_eq!(a.class, b.class);
                // Manifest stores three decimals.
                assert!((a.onset - b.onset).abs() < 5e-4);
                assert!((a.offset - b.offset).abs() < 5e-4);
            }
        }
    }

    #[test]
    fn manifest_parse_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");

        std::fs::write(&p, "a.wav\t1.000\t2.500\tClass3\n").unwrap();
        let m = load_strong_manifest(&p).unwrap();
        assert_eq!(m["a.wav"], vec![Event { class: 3, onset: 1.0, offset: 2.5 }]);

        std::fs::write(&p, "").unwrap();
        assert!(load_strong_manifest(&p).unwrap().is_empty());

        std::fs::write(&p, "a.wav\t3.000\t2.000\tClass3\n").unwrap();
        let err = load_strong_manifest(&p).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");

        std::fs::write(&p, "a.wav\t1.000\t2.000\tClass77\n").unwrap();
        assert!(load_strong_manifest(&p).is_err());

        std::fs::write(&p, "b.wav\tClass0,Class7\n").unwrap();
        let w = load_weak_manifest(&p).unwrap();
        let mut expected = vec![0.0f32; 10];
        expected[0] = 1.0;
        expected[7] = 1.0;
        assert_eq!(w["b.wav"], expected);

        std::fs::write(&p, "b.wav\tClass2,Class2\n").unwrap();
        let w = load_weak_manifest(&p).unwrap();
        assert_eq!(w["b.wav"].iter().sum::<f32>(), 1.0);

        std::fs::write(&p, "b.wav\t\n").unwrap();
        assert!(load_weak_manifest(&p).is_err());
    }

    #[test]
    fn rasterize_examples() {
        assert!(rasterize_events(&vec![]).iter().all(|&v| v == 0.0));

        let full = vec![Event { class: 4, onset: 0.0, offset: 10.0 }];
        let grid = rasterize_events(&full);
        assert!(grid.column(4).iter().all(|&v| v == 1.0));
        assert!(grid.column(3).iter().all(|&v| v == 0.0));

        let one = vec![Event { class: 2, onset: 1.0, offset: 1.5 }];
        let grid = rasterize_events(&one);
        let active: Vec<usize> = (0..256)
            .filter(|&t| grid[[t, 2]] == 1.0)
            .collect();
        assert_eq!(active.first(), Some(&25));
        assert_eq!(active.last(), Some(&38));
        assert_eq!(active.len(), 14);
    }

    #[test]
    fn weak_labels_equal_grid_column_max() {
        for clip in generate_pool(13, "strong", 6) {
            let grid = rasterize_events(&clip.events);
            let from_grid = weak_from_grid(&grid);
            let mut expected = vec![0.0f32; NUM_CLASSES];
            for c in clip.weak_labels() {
                expected[c] = 1.0;
            }
            assert_eq!(from_grid, expected);
        }
    }

    #[test]
    fn generated_events_round_trip_through_decode() {
        let cfg = DecodingConfig {
            median_window: 1,
            ..Default::default()
        };
        for clip in generate_pool(17, "validation", 8) {
            let grid = rasterize_events(&clip.events);
            let decoded = decode_events(&grid, &cfg).unwrap();
            assert_eq!(decoded.len(), clip.events.len(), "clip {}", clip.id);
            let mut expected = clip.events.clone();
            expected.sort_by(|a, b| (a.class, a.onset).partial_cmp(&(b.class, b.onset)).unwrap());
            for (d, e) in decoded.iter().zip(&expected) {
                assert_eq!(d.class, e.class);
                assert!((d.onset - e.onset).abs() <= OUTPUT_FRAME_SECONDS + 1e-9);
                assert!((d.offset - e.offset).abs() <= OUTPUT_FRAME_SECONDS + 1e-9);
            }
        }
    }

    #[test]
    fn pools_are_class_balanced() {
        let clips = generate_pool(23, "unlabeled", 50);
        let mut counts = [0usize; NUM_CLASSES];
        let mut total = 0usize;
        for c in &clips {
            for e in &c.events {
                counts[e.class] += 1;
                total += 1;
            }
        }
        let mean = total as f64 / NUM_CLASSES as f64;
        for (class, &n) in counts.iter().enumerate() {
            let dev = (n as f64 - mean).abs() / mean;
            assert!(dev <= 0.20, "class {class}: {n} events vs mean {mean:.1}");
        }
    }
}
