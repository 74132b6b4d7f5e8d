//! Pattern Separation 10 (PS10): a synthetic classification dataset whose
//! pattern complexity is known by construction.
//!
//! Each class owns a bank of *simple* colors (few per class) and a bank of
//! *complex* colors (many per class), all points of `[0, 1]^3`. An image has six
//! channels: channels 0-2 carry a simple color, channels 3-5 a complex color, and
//! exactly one of the two slots is populated while the other is zero. Every
//! pixel of a channel has the same value.
//!
//! Label noise replaces a chosen example's color with a fresh random color in
//! the same slot and gives it a label drawn uniformly from the classes other
//! than the one its nearest bank pattern belongs to.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

pub const CHANNELS: usize = 6;
pub type Color = [f64; 3];

const MAGIC: &[u8; 4] = b"PS10";
const FORMAT_VERSION: u32 = 1;
const NO_PATTERN: u32 = u32::MAX;
const BANK_TRIES: usize = 20_000;

// RNG stream ids; example i uses stream i.
const STREAM_SIMPLE_BANK: u64 = u64::MAX;
const STREAM_COMPLEX_BANK: u64 = u64::MAX - 1;
const STREAM_LAYOUT: u64 = u64::MAX - 2;
const STREAM_NOISE_PICK: u64 = u64::MAX - 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ps10Spec {
    pub num_classes: usize,
    pub simple_per_class: usize,
    pub complex_per_class: usize,
    pub examples_total: usize,
    pub noise_fraction: f64,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Minimum distance between patterns of different classes.
    pub margin: f64,
}

impl Default for Ps10Spec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            simple_per_class: 10,
            complex_per_class: 100,
            examples_total: 10_000,
            noise_fraction: 0.0,
            height: 32,
            width: 32,
            seed: 0,
            margin: 0.05,
        }
    }
}

impl Ps10Spec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if !(2..=255).contains(&self.num_classes) {
            return fail(format!(
                "num_classes must lie in [2, 255], got {}",
                self.num_classes
            ));
        }
        if self.simple_per_class == 0 || self.complex_per_class == 0 {
            return fail("pattern counts per class must be >= 1".into());
        }
        if self.examples_total < self.num_classes {
            return fail(format!(
                "examples_total ({}) must be >= num_classes ({})",
                self.examples_total, self.num_classes
            ));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return fail(format!(
                "noise_fraction must lie in [0, 1), got {}",
                self.noise_fraction
            ));
        }
        if self.height == 0 || self.width == 0 {
            return fail("height and width must be >= 1".into());
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return fail("margin must be positive".into());
        }
        Ok(())
    }

    /// `round(noise_fraction * examples_total)`.
    pub fn noise_count(&self) -> usize {
        (self.noise_fraction * self.examples_total as f64).round() as usize
    }
}

/// Per-class color patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternBank {
    pub classes: Vec<Vec<Color>>,
    pub margin: f64,
}

impl PatternBank {
    /// Rejection-samples `per_class` colors per class, uniform in the unit cube,
    /// keeping every pair from different classes at least `margin` apart.
    /// Coordinates are rounded to `f32` so images serialize losslessly.
    pub fn generate(
        num_classes: usize,
        per_class: usize,
        margin: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut placed: Vec<(Color, usize)> = Vec::with_capacity(num_classes * per_class);
        let mut classes = vec![Vec::with_capacity(per_class); num_classes];
        let m2 = margin * margin;
        for _ in 0..per_class {
            for (class, bucket) in classes.iter_mut().enumerate() {
                let mut accepted = None;
                for _ in 0..BANK_TRIES {
                    let c: Color = std::array::from_fn(|_| rng.random::<f32>() as f64);
                    let clear = placed
                        .iter()
                        .filter(|(_, k)| *k != class)
                        .all(|(p, _)| dist2(p, &c) >= m2);
                    if clear {
                        accepted = Some(c);
                        break;
                    }
                }
                let c = accepted.ok_or_else(|| {
                    Error::Generation(format!(
                        "could not place {per_class} patterns for {num_classes} classes with margin {margin}"
                    ))
                })?;
                placed.push((c, class));
                bucket.push(c);
            }
        }
        Ok(Self { classes, margin })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn pattern(&self, id: usize) -> Option<(usize, Color)> {
        let per = self.classes.first()?.len();
        let (class, idx) = (id / per, id % per);
        self.classes.get(class).map(|c| (class, c[idx]))
    }

    /// Class of the nearest pattern by Euclidean distance.
    pub fn nearest_class(&self, color: &Color) -> usize {
        let mut best = (0, f64::INFINITY);
        for (class, patterns) in self.classes.iter().enumerate() {
            for p in patterns {
                let d = dist2(p, color);
                if d < best.1 {
                    best = (class, d);
                }
            }
        }
        best.0
    }

    /// Smallest distance between patterns of different classes.
    pub fn min_interclass_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, pa) in self.classes.iter().enumerate() {
            for pb in &self.classes[a + 1..] {
                for x in pa {
                    for y in pb {
                        best = best.min(dist2(x, y));
                    }
                }
            }
        }
        best.sqrt()
    }

    /// Complexity of drawing a class uniformly, then one of its patterns uniformly.
    pub fn complexity(&self) -> f64 {
        ClassConditional::uniform(&self.classes.iter().map(Vec::len).collect::<Vec<_>>())
            .and_then(|c| complexity(&c))
            .unwrap_or(0.0)
    }
}

fn dist2(a: &Color, b: &Color) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `P(y)` and `P(x | y)` for a discrete pattern distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConditional {
    pub prior: Vec<f64>,
    pub conditionals: Vec<Vec<f64>>,
}

impl ClassConditional {
    /// Uniform prior over classes and uniform patterns within each class.
    pub fn uniform(patterns_per_class: &[usize]) -> Result<Self> {
        if patterns_per_class.is_empty() || patterns_per_class.contains(&0) {
            return Err(Error::validation("every class needs at least one pattern"));
        }
        let k = patterns_per_class.len() as f64;
        Ok(Self {
            prior: vec![1.0 / k; patterns_per_class.len()],
            conditionals: patterns_per_class
                .iter()
                .map(|&n| vec![1.0 / n as f64; n])
                .collect(),
        })
    }
}

/// Expected class-conditional entropy `sum_y P(y) H(P(x | y))`, in bits.
pub fn complexity(dist: &ClassConditional) -> Result<f64> {
    const TOL: f64 = 1e-9;
    let check = |p: &[f64], what: &str| -> Result<()> {
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!(
                "{what} has a negative or non-finite entry"
            )));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > TOL {
            return Err(Error::validation(format!("{what} sums to {s}, not 1")));
        }
        Ok(())
    };
    if dist.prior.len() != dist.conditionals.len() {
        return Err(Error::dimension(
            "prior and conditionals disagree on class count",
        ));
    }
    check(&dist.prior, "class prior")?;
    let mut total = 0.0;
    for (y, (py, cond)) in dist.prior.iter().zip(&dist.conditionals).enumerate() {
        check(cond, &format!("P(x | y = {y})"))?;
        let h: f64 = cond
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum();
        total += py * h;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    SimpleOnly,
    ComplexOnly,
    Noise,
}

impl Subset {
    fn code(self) -> u8 {
        match self {
            Subset::SimpleOnly => 0,
            Subset::ComplexOnly => 1,
            Subset::Noise => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Subset::SimpleOnly),
            1 => Ok(Subset::ComplexOnly),
            2 => Ok(Subset::Noise),
            _ => Err(Error::Format(format!("unknown subset code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    /// Per-channel constant value.
    pub channels: [f64; CHANNELS],
    /// Training label (the corrupted one for noise examples).
    pub label: usize,
    /// Class of the nearest bank pattern; equals `label` unless noisy.
    pub original_label: usize,
    pub subset: Subset,
    /// Flat index into the slot's bank (`class * per_class + i`); none for noise.
    pub pattern_id: Option<u32>,
}

impl Example {
    /// `true` when the simple-pattern slot (channels 0-2) carries the color.
    pub fn uses_simple_slot(&self) -> bool {
        self.channels[3..].iter().all(|&v| v == 0.0) && self.channels[..3].iter().any(|&v| v != 0.0)
            || matches!(self.subset, Subset::SimpleOnly)
    }

    pub fn color(&self) -> Color {
        if self.uses_simple_slot() {
            [self.channels[0], self.channels[1], self.channels[2]]
        } else {
            [self.channels[3], self.channels[4], self.channels[5]]
        }
    }

    /// Full `6 x H x W` image.
    pub fn pixels(&self, height: usize, width: usize) -> Tensor {
        let plane = height * width;
        let mut data = Vec::with_capacity(CHANNELS * plane);
        for &v in &self.channels {
            data.extend(std::iter::repeat_n(v, plane));
        }
        Tensor::new(vec![CHANNELS, height, width], data).expect("finite channel values")
    }
}

fn place(color: Color, simple_slot: bool) -> [f64; CHANNELS] {
    let mut ch = [0.0; CHANNELS];
    let off = if simple_slot { 0 } else { 3 };
    ch[off..off + 3].copy_from_slice(&color);
    ch
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ps10Dataset {
    pub spec: Ps10Spec,
    pub simple_bank: PatternBank,
    pub complex_bank: PatternBank,
    pub split: Split,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Composition {
    pub simple: usize,
    pub complex: usize,
    pub noise: usize,
}

fn example_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Both pattern banks for a spec; depends only on the seed and bank sizes.
pub fn generate_banks(spec: &Ps10Spec) -> Result<(PatternBank, PatternBank)> {
    spec.validate()?;
    let simple = PatternBank::generate(
        spec.num_classes,
        spec.simple_per_class,
        spec.margin,
        &mut example_rng(spec.seed, STREAM_SIMPLE_BANK),
    )?;
    let complex = PatternBank::generate(
        spec.num_classes,
        spec.complex_per_class,
        spec.margin,
        &mut example_rng(spec.seed, STREAM_COMPLEX_BANK),
    )?;
    Ok((simple, complex))
}

/// Training split: half simple-only and half complex-only examples, after which
/// `round(noise_fraction * examples_total)` of them are turned into noise.
pub fn generate(spec: &Ps10Spec) -> Result<Ps10Dataset> {
    let (simple_bank, complex_bank) = generate_banks(spec)?;
    let clean = sample_clean(
        spec,
        &simple_bank,
        &complex_bank,
        spec.examples_total,
        spec.seed,
    )?;
    let ds = Ps10Dataset {
        spec: Ps10Spec {
            noise_fraction: 0.0,
            ..spec.clone()
        },
        simple_bank,
        complex_bank,
        split: Split::Train,
        examples: clean,
    };
    inject_noise(ds, spec.noise_fraction, spec.seed)
}

fn sample_clean(
    spec: &Ps10Spec,
    simple_bank: &PatternBank,
    complex_bank: &PatternBank,
    total: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    let n_simple = total.div_ceil(2);
    let mut slots: Vec<bool> = (0..total).map(|i| i < n_simple).collect();
    slots.shuffle(&mut example_rng(seed, STREAM_LAYOUT));
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(i, simple)| {
            let mut rng = example_rng(seed, i as u64);
            let (bank, per) = if simple {
                (simple_bank, spec.simple_per_class)
            } else {
                (complex_bank, spec.complex_per_class)
            };
            let class = rng.random_range(0..spec.num_classes);
            let idx = rng.random_range(0..per);
            Example {
                channels: place(bank.classes[class][idx], simple),
                label: class,
                original_label: class,
                subset: if simple {
                    Subset::SimpleOnly
                } else {
                    Subset::ComplexOnly
                },
                pattern_id: Some((class * per + idx) as u32),
            }
        })
        .collect())
}

/// Turns `round(fraction * len)` clean examples into noise examples, split as
/// evenly as possible between the two slots (extra one from the simple slot).
pub fn inject_noise(mut ds: Ps10Dataset, fraction: f64, seed: u64) -> Result<Ps10Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::validation(format!(
            "noise fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let n_noise = (fraction * ds.examples.len() as f64).round() as usize;
    if n_noise == 0 {
        return Ok(ds);
    }
    let mut pick = example_rng(seed, STREAM_NOISE_PICK);
    let mut by_subset = |subset: Subset| {
        let mut idx: Vec<usize> = ds
            .examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.subset == subset)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut pick);
        idx
    };
    let simple_idx = by_subset(Subset::SimpleOnly);
    let complex_idx = by_subset(Subset::ComplexOnly);
    let want_simple = n_noise.div_ceil(2).min(simple_idx.len());
    let want_complex = (n_noise - want_simple).min(complex_idx.len());
    if want_simple + want_complex < n_noise {
        return Err(Error::validation("not enough clean examples to corrupt"));
    }
    let classes = ds.spec.num_classes;
    let chosen = simple_idx[..want_simple]
        .iter()
        .chain(&complex_idx[..want_complex]);
    for &i in chosen {
        // stream offset keeps noise draws independent of the clean draws of example i
        let mut rng = example_rng(seed ^ 0x9E37_79B9_7F4A_7C15, i as u64);
        let e = &mut ds.examples[i];
        let simple = e.subset == Subset::SimpleOnly;
        let color: Color = std::array::from_fn(|_| rng.random::<f32>() as f64);
        let bank = if simple {
            &ds.simple_bank
        } else {
            &ds.complex_bank
        };
        let original = bank.nearest_class(&color);
        let shift = rng.random_range(1..classes);
        e.channels = place(color, simple);
        e.original_label = original;
        e.label = (original + shift) % classes;
        e.subset = Subset::Noise;
        e.pattern_id = None;
    }
    let total = ds.examples.len() as f64;
    ds.spec.noise_fraction = ds.composition().noise as f64 / total;
    Ok(ds)
}

impl Ps10Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn composition(&self) -> Composition {
        let mut c = Composition::default();
        for e in &self.examples {
            match e.subset {
                Subset::SimpleOnly => c.simple += 1,
                Subset::ComplexOnly => c.complex += 1,
                Subset::Noise => c.noise += 1,
            }
        }
        c
    }

    /// Clean test split of `total` examples from the same banks.
    pub fn test_split(&self, total: usize, seed: u64) -> Result<Ps10Dataset> {
        if total == 0 {
            return Err(Error::validation("test split needs at least one example"));
        }
        let examples = sample_clean(
            &self.spec,
            &self.simple_bank,
            &self.complex_bank,
            total,
            seed,
        )?;
        Ok(Ps10Dataset {
            spec: Ps10Spec {
                examples_total: total,
                noise_fraction: 0.0,
                seed,
                ..self.spec.clone()
            },
            simple_bank: self.simple_bank.clone(),
            complex_bank: self.complex_bank.clone(),
            split: Split::Test,
            examples,
        })
    }

    /// Keeps only examples whose training label is in `classes`, relabelled to
    /// their position in `classes`. Noise examples whose original class falls
    /// outside the slice are dropped as well.
    pub fn slice_classes(&self, classes: &[usize]) -> Result<Ps10Dataset> {
        if classes.len() < 2 || classes.iter().any(|&c| c >= self.num_classes()) {
            return Err(Error::validation("a class slice needs >= 2 valid classes"));
        }
        let pos = |c: usize| classes.iter().position(|&k| k == c);
        let examples: Vec<Example> = self
            .examples
            .iter()
            .filter_map(|e| {
                let label = pos(e.label)?;
                let original = pos(e.original_label)?;
                Some(Example {
                    label,
                    original_label: original,
                    ..e.clone()
                })
            })
            .collect();
        let restrict = |b: &PatternBank| PatternBank {
            classes: classes.iter().map(|&c| b.classes[c].clone()).collect(),
            margin: b.margin,
        };
        Ok(Ps10Dataset {
            spec: Ps10Spec {
                num_classes: classes.len(),
                examples_total: examples.len(),
                ..self.spec.clone()
            },
            simple_bank: restrict(&self.simple_bank),
            complex_bank: restrict(&self.complex_bank),
            split: self.split,
            examples,
        })
    }

    /// Flattened `len x 6` feature matrix (one value per channel).
    pub fn features(&self) -> Tensor {
        let data = self.examples.iter().flat_map(|e| e.channels).collect();
        Tensor::new(vec![self.examples.len(), CHANNELS], data).expect("finite features")
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Prediction of the nearest pattern in the example's own slot bank.
    pub fn nearest_pattern_label(&self, e: &Example) -> usize {
        let bank = if e.uses_simple_slot() {
            &self.simple_bank
        } else {
            &self.complex_bank
        };
        bank.nearest_class(&e.color())
    }

    /// Binary container, all little-endian:
    ///
    /// ```text
    /// "PS10" | version u32 | split u8
    /// spec: num_classes u32, simple_per_class u32, complex_per_class u32,
    ///       examples_total u64, noise_fraction f64, height u32, width u32,
    ///       seed u64, margin f64
    /// count u64
    /// count x { label u8, subset u8, pattern_id u32 (0xFFFFFFFF = none),
    ///           original_label u8, 6*H*W f32 pixels, channel-major }
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[match self.split {
            Split::Train => 0u8,
            Split::Test => 1u8,
        }])?;
        for v in [
            s.num_classes as u32,
            s.simple_per_class as u32,
            s.complex_per_class as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(s.examples_total as u64).to_le_bytes())?;
        w.write_all(&s.noise_fraction.to_le_bytes())?;
        w.write_all(&(s.height as u32).to_le_bytes())?;
        w.write_all(&(s.width as u32).to_le_bytes())?;
        w.write_all(&s.seed.to_le_bytes())?;
        w.write_all(&s.margin.to_le_bytes())?;
        w.write_all(&(self.examples.len() as u64).to_le_bytes())?;
        let plane = s.height * s.width;
        let mut block = Vec::with_capacity(CHANNELS * plane * 4);
        for e in &self.examples {
            w.write_all(&[e.label as u8, e.subset.code()])?;
            w.write_all(&e.pattern_id.unwrap_or(NO_PATTERN).to_le_bytes())?;
            w.write_all(&[e.original_label as u8])?;
            block.clear();
            for &v in &e.channels {
                let bytes = (v as f32).to_le_bytes();
                for _ in 0..plane {
                    block.extend_from_slice(&bytes);
                }
            }
            w.write_all(&block)?;
        }
        Ok(())
    }

    /// Reads a container written by [`write_to`](Self::write_to). The pattern
    /// banks are regenerated from the stored spec.
    pub fn read_from<R: Read>(mut r: R) -> Result<Ps10Dataset> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("missing PS10 magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported PS10 version {version}")));
        }
        let split = match read_u8(&mut r)? {
            0 => Split::Train,
            1 => Split::Test,
            c => return Err(Error::Format(format!("unknown split code {c}"))),
        };
        let spec = Ps10Spec {
            num_classes: read_u32(&mut r)? as usize,
            simple_per_class: read_u32(&mut r)? as usize,
            complex_per_class: read_u32(&mut r)? as usize,
            examples_total: read_u64(&mut r)? as usize,
            noise_fraction: f64::from_bits(read_u64(&mut r)?),
            height: read_u32(&mut r)? as usize,
            width: read_u32(&mut r)? as usize,
            seed: read_u64(&mut r)?,
            margin: f64::from_bits(read_u64(&mut r)?),
        };
        let count = read_u64(&mut r)? as usize;
        let (simple_bank, complex_bank) = generate_banks(&spec)?;
        let plane = spec.height * spec.width;
        let mut block = vec![0u8; CHANNELS * plane * 4];
        let mut examples = Vec::with_capacity(count);
        for i in 0..count {
            let label = read_u8(&mut r)? as usize;
            let subset = Subset::from_code(read_u8(&mut r)?)?;
            let pid = read_u32(&mut r)?;
            let original_label = read_u8(&mut r)? as usize;
            r.read_exact(&mut block)?;
            let mut channels = [0.0; CHANNELS];
            for (c, ch) in channels.iter_mut().enumerate() {
                let plane_bytes = &block[c * plane * 4..(c + 1) * plane * 4];
                let first = f32::from_le_bytes(plane_bytes[..4].try_into().expect("4 bytes"));
                if plane_bytes.chunks_exact(4).any(|b| b != &plane_bytes[..4]) {
                    return Err(Error::Format(format!(
                        "example {i} channel {c} is not spatially constant"
                    )));
                }
                *ch = first as f64;
            }
            if label >= spec.num_classes || original_label >= spec.num_classes {
                return Err(Error::Format(format!(
                    "example {i} has an out-of-range label"
                )));
            }
            examples.push(Example {
                channels,
                label,
                original_label,
                subset,
                pattern_id: (pid != NO_PATTERN).then_some(pid),
            });
        }
        Ok(Ps10Dataset {
            spec,
            simple_bank,
            complex_bank,
            split,
            examples,
        })
    }

    /// Human-readable summary written next to the binary file.
    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            spec: self.spec.clone(),
            split: self.split,
            composition: self.composition(),
            complexity_simple_bits: self.simple_bank.complexity(),
            complexity_complex_bits: self.complex_bank.complexity(),
            simple_bank: self.simple_bank.clone(),
            complex_bank: self.complex_bank.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: Ps10Spec,
    pub split: Split,
    pub composition: Composition,
    pub complexity_simple_bits: f64,
    pub complexity_complex_bits: f64,
    pub simple_bank: PatternBank,
    pub complex_bank: PatternBank,
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(total: usize, noise: f64) -> Ps10Spec {
        Ps10Spec {
            examples_total: total,
            noise_fraction: noise,
            height: 2,
            width: 3,
            seed: 3,
            ..Ps10Spec::default()
        }
    }

    #[test]
    fn composition_arithmetic() {
        let ds = generate(&small(10_000, 0.1)).unwrap();
        assert_eq!(
            ds.composition(),
            Composition {
                simple: 4500,
                complex: 4500,
                noise: 1000
            }
        );
        let ds = generate(&small(1000, 0.0)).unwrap();
        assert_eq!(ds.composition().noise, 0);
        assert_eq!(ds.composition().simple, 500);
    }

    #[test]
    fn complexity_values() {
        let c = |n| complexity(&ClassConditional::uniform(&[n; 10]).unwrap()).unwrap();
        assert!((c(10) - 10f64.log2()).abs() < 1e-12);
        assert!((c(100) - 100f64.log2()).abs() < 1e-12);
        assert_eq!(c(1), 0.0);
    }

    #[test]
    fn complexity_rejects_unnormalized() {
        let bad = ClassConditional {
            prior: vec![0.5, 0.5],
            conditionals: vec![vec![0.5, 0.6], vec![1.0]],
        };
        assert!(matches!(complexity(&bad), Err(Error::Validation(_))));
        let bad_prior = ClassConditional {
            prior: vec![0.7, 0.7],
            conditionals: vec![vec![1.0], vec![1.0]],
        };
        assert!(complexity(&bad_prior).is_err());
    }

    #[test]
    fn complexity_with_skewed_prior() {
        let d = ClassConditional {
            prior: vec![0.25, 0.75],
            conditionals: vec![vec![0.5, 0.5], vec![1.0]],
        };
        assert!((complexity(&d).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(small(5, 0.0).validate().is_err());
        assert!(small(100, 1.0).validate().is_err());
        assert!(Ps10Spec {
            simple_per_class: 0,
            ..small(100, 0.0)
        }
        .validate()
        .is_err());
        assert!(Ps10Spec {
            num_classes: 1,
            ..small(100, 0.0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn impossible_margin_fails_generation() {
        let spec = Ps10Spec {
            margin: 0.9,
            ..small(100, 0.0)
        };
        assert!(matches!(generate(&spec), Err(Error::Generation(_))));
    }

    #[test]
    fn banks_respect_margin() {
        let (s, c) = generate_banks(&Ps10Spec::default()).unwrap();
        assert!(s.min_interclass_distance() >= 0.05);
        assert!(c.min_interclass_distance() >= 0.05);
        assert_eq!(c.classes.iter().map(Vec::len).sum::<usize>(), 1000);
        assert!((s.complexity() - 10f64.log2()).abs() < 1e-12);
        assert!((c.complexity() - 100f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn noise_zero_is_identity_and_noise_labels_differ() {
        let clean = generate(&small(400, 0.0)).unwrap();
        assert_eq!(inject_noise(clean.clone(), 0.0, 1).unwrap(), clean);
        let noisy = inject_noise(clean, 0.1, 1).unwrap();
        assert_eq!(noisy.composition().noise, 40);
        for e in noisy.examples.iter().filter(|e| e.subset == Subset::Noise) {
            assert_ne!(e.label, e.original_label);
            assert!(e.pattern_id.is_none());
            assert_eq!(noisy.nearest_pattern_label(e), e.original_label);
        }
    }

    #[test]
    fn pixels_constant_and_separated() {
        let ds = generate(&small(50, 0.2)).unwrap();
        for e in &ds.examples {
            let px = e.pixels(2, 3);
            assert_eq!(px.shape(), &[6, 2, 3]);
            for c in 0..CHANNELS {
                let plane = &px.data()[c * 6..(c + 1) * 6];
                assert!(plane.iter().all(|&v| v == plane[0]));
            }
            let (lo, hi) = e.channels.split_at(3);
            assert!(lo.iter().all(|&v| v == 0.0) ^ hi.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn binary_roundtrip() {
        let ds = generate(&small(60, 0.1)).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PS10");
        let header = 4 + 4 + 1 + 12 + 8 + 8 + 8 + 8 + 8 + 8;
        assert_eq!(buf.len(), header + 60 * (7 + 6 * 6 * 4));
        let back = Ps10Dataset::read_from(&buf[..]).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let ds = generate(&small(20, 0.0)).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert!(Ps10Dataset::read_from(&buf[..buf.len() - 3]).is_err());
        assert!(Ps10Dataset::read_from(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn test_split_is_clean() {
        let ds = generate(&small(200, 0.1)).unwrap();
        let test = ds.test_split(100, 99).unwrap();
        assert_eq!(test.split, Split::Test);
        assert_eq!(test.composition().noise, 0);
        assert_eq!(test.len(), 100);
    }

    #[test]
    fn class_slice_relabels() {
        let ds = generate(&small(400, 0.0)).unwrap();
        let sl = ds.slice_classes(&[3, 7]).unwrap();
        assert_eq!(sl.num_classes(), 2);
        assert!(sl.examples.iter().all(|e| e.label < 2));
        for e in &sl.examples {
            assert_eq!(sl.nearest_pattern_label(e), e.label);
        }
    }
}
