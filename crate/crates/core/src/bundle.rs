//! The UBND container: one image's Monte-Carlo softmax stack, an optional
//! ground-truth label, an optional RGB source image and free-form metadata.
//!
//! Layout, in order:
//!
//! 1. magic `UBND1\n`
//! 2. `u32` LE length of the JSON header
//! 3. UTF-8 JSON header (`version`, `image_id`, `t`, `c`, `h`, `w`,
//!    `class_names`, `background_index`, `has_label`, `has_source_image`,
//!    `prob_dtype`, `payload_crc32`, optional `meta`)
//! 4. `T*C*H*W` little-endian `f32` probabilities, pass-major then class, row, column
//! 5. `H*W` label bytes when `has_label`
//! 6. `H*W*3` RGB bytes when `has_source_image`
//!
//! The CRC32 covers sections 4 to 6 concatenated.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"UBND1\n";
pub const FORMAT_VERSION: u64 = 1;
pub const PROB_DTYPE: &str = "f32le";
/// Allowed deviation of a per-pass pixel's class probabilities from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;
/// Labels are stored as single bytes.
pub const MAX_CLASSES: usize = 255;

/// Per-pixel findings beyond this count are summarized rather than listed.
const MAX_LISTED_VIOLATIONS: usize = 64;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u64 },
    #[error("truncated {section}: expected {expected} bytes, found {actual}")]
    Truncated {
        section: String,
        expected: usize,
        actual: usize,
    },
    #[error("payload checksum mismatch: header says {stored:#010x}, payload hashes to {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("probabilities of pass {pass} pixel {pixel} sum to {sum}")]
    ProbabilitySum { pass: usize, pixel: usize, sum: f64 },
    #[error("invalid bundle: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A single violated invariant found while checking a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BadMagic,
    VersionMismatch {
        found: u64,
    },
    MalformedHeader {
        reason: String,
    },
    Truncated {
        section: String,
        expected: usize,
        actual: usize,
    },
    TrailingBytes {
        count: usize,
    },
    ChecksumMismatch {
        stored: u32,
        computed: u32,
    },
    /// A header or struct field breaks a shape/class invariant.
    Field {
        field: String,
        reason: String,
    },
    ProbabilityOutOfRange {
        pass: usize,
        class: usize,
        pixel: usize,
        value: f64,
    },
    ProbabilitySum {
        pass: usize,
        pixel: usize,
        sum: f64,
    },
    LabelOutOfRange {
        pixel: usize,
        value: u8,
    },
}

impl Violation {
    fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Violation::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn is_per_pixel(&self) -> bool {
        matches!(
            self,
            Violation::ProbabilityOutOfRange { .. }
                | Violation::ProbabilitySum { .. }
                | Violation::LabelOutOfRange { .. }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadMagic => write!(f, "bad magic bytes"),
            Violation::VersionMismatch { found } => write!(f, "unsupported version {found}"),
            Violation::MalformedHeader { reason } => write!(f, "malformed header: {reason}"),
            Violation::Truncated {
                section,
                expected,
                actual,
            } => write!(f, "truncated {section}: expected {expected} bytes, found {actual}"),
            Violation::TrailingBytes { count } => write!(f, "{count} trailing bytes after payload"),
            Violation::ChecksumMismatch { stored, computed } => {
                write!(f, "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")
            }
            Violation::Field { field, reason } => write!(f, "{field}: {reason}"),
            Violation::ProbabilityOutOfRange {
                pass,
                class,
                pixel,
                value,
            } => write!(
                f,
                "probability out of [0,1] at pass {pass} class {class} pixel {pixel}: {value}"
            ),
            Violation::ProbabilitySum { pass, pixel, sum } => {
                write!(f, "probabilities at pass {pass} pixel {pixel} sum to {sum}")
            }
            Violation::LabelOutOfRange { pixel, value } => {
                write!(f, "label value {value} at pixel {pixel} is not a valid class")
            }
        }
    }
}

/// Every violated invariant of one bundle. Empty iff the bundle reads cleanly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Per-pixel violations found but not listed individually.
    #[serde(default)]
    pub omitted: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty() && self.omitted == 0
    }

    fn push(&mut self, violation: Violation) {
        if violation.is_per_pixel() {
            let listed = self.violations.iter().filter(|v| v.is_per_pixel()).count();
            if listed >= MAX_LISTED_VIOLATIONS {
                self.omitted += 1;
                return;
            }
        }
        self.violations.push(violation);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        if self.omitted > 0 {
            write!(f, "; and {} more per-pixel violations", self.omitted)?;
        }
        Ok(())
    }
}

/// Class list of a segmentation task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    class_names: Vec<String>,
    background_index: usize,
}

impl ClassSpec {
    pub fn new(class_names: Vec<String>, background_index: usize) -> Result<Self, BundleError> {
        let spec = ClassSpec {
            class_names,
            background_index,
        };
        let violations = spec.violations();
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(BundleError::Invalid(ValidationReport {
                violations,
                omitted: 0,
            }))
        }
    }

    /// Names `background, class_1, .., class_{C-1}` with background at index 0.
    pub fn generic(num_classes: usize) -> Result<Self, BundleError> {
        let names = (0..num_classes)
            .map(|c| {
                if c == 0 {
                    "background".to_string()
                } else {
                    format!("class_{c}")
                }
            })
            .collect();
        Self::new(names, 0)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn background_index(&self) -> usize {
        self.background_index
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let c = self.class_names.len();
        if c < 2 {
            out.push(Violation::field("class_names", format!("need at least 2 classes, got {c}")));
        }
        if c > MAX_CLASSES {
            out.push(Violation::field(
                "class_names",
                format!("at most {MAX_CLASSES} classes fit in a byte label, got {c}"),
            ));
        }
        let mut seen = HashSet::new();
        for (i, name) in self.class_names.iter().enumerate() {
            if name.is_empty() {
                out.push(Violation::field(format!("class_names[{i}]"), "empty name"));
            } else if !seen.insert(name.as_str()) {
                out.push(Violation::field(format!("class_names[{i}]"), format!("duplicate name {name:?}")));
            }
        }
        if self.background_index >= c {
            out.push(Violation::field(
                "background_index",
                format!("{} is not below the class count {c}", self.background_index),
            ));
        }
        out
    }
}

/// `T` softmax passes over an `H x W` image with `C` classes, stored pass-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityStack {
    passes: usize,
    classes: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ProbabilityStack {
    /// Shape-checked constructor. Value-level invariants are checked by
    /// [`ProbabilityStack::violations`] and enforced on write/read.
    pub fn new(
        passes: usize,
        classes: usize,
        height: usize,
        width: usize,
        values: Vec<f32>,
    ) -> Result<Self, BundleError> {
        let mut report = ValidationReport::default();
        for (name, v, min) in [("t", passes, 1), ("c", classes, 2), ("h", height, 1), ("w", width, 1)] {
            if v < min {
                report.push(Violation::field(name, format!("must be at least {min}, got {v}")));
            }
        }
        let expected = passes
            .checked_mul(classes)
            .and_then(|n| n.checked_mul(height))
            .and_then(|n| n.checked_mul(width));
        if expected != Some(values.len()) {
            report.push(Violation::field(
                "probabilities",
                format!("expected {expected:?} values, got {}", values.len()),
            ));
        }
        if !report.is_valid() {
            return Err(BundleError::Invalid(report));
        }
        Ok(ProbabilityStack {
            passes,
            classes,
            height,
            width,
            values,
        })
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Probability of `class` at flat pixel index `pixel` in pass `pass`.
    #[inline]
    pub fn get(&self, pass: usize, class: usize, pixel: usize) -> f32 {
        self.values[(pass * self.classes + class) * self.pixels() + pixel]
    }

    /// One pass as a `C*H*W` slice.
    pub fn pass(&self, pass: usize) -> &[f32] {
        let len = self.classes * self.pixels();
        &self.values[pass * len..(pass + 1) * len]
    }

    fn check_values(&self, report: &mut ValidationReport) {
        let n = self.pixels();
        for t in 0..self.passes {
            let pass = self.pass(t);
            for i in 0..n {
                let mut sum = 0.0f64;
                let mut finite = true;
                for c in 0..self.classes {
                    let p = pass[c * n + i] as f64;
                    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                        report.push(Violation::ProbabilityOutOfRange {
                            pass: t,
                            class: c,
                            pixel: i,
                            value: p,
                        });
                        finite &= p.is_finite();
                    }
                    sum += p;
                }
                if finite && (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                    report.push(Violation::ProbabilitySum { pass: t, pixel: i, sum });
                }
            }
        }
    }

    /// All value-level violations (range and per-pixel sums).
    pub fn violations(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        self.check_values(&mut report);
        report
    }
}

/// An `H x W` raster of class indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self, BundleError> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(BundleError::Invalid(ValidationReport {
                violations: vec![Violation::field(
                    "label",
                    format!("{} values do not form a {height}x{width} raster", values.len()),
                )],
                omitted: 0,
            }));
        }
        Ok(LabelMap {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.width + col]
    }
}

/// One image's Monte-Carlo dropout evidence plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub image_id: String,
    pub class_spec: ClassSpec,
    pub probabilities: ProbabilityStack,
    pub label: Option<LabelMap>,
    /// `H*W*3` row-major RGB bytes.
    pub source_image: Option<Vec<u8>>,
    pub meta: BTreeMap<String, String>,
}

impl Bundle {
    pub fn passes(&self) -> usize {
        self.probabilities.passes
    }

    pub fn num_classes(&self) -> usize {
        self.class_spec.num_classes()
    }

    pub fn height(&self) -> usize {
        self.probabilities.height
    }

    pub fn width(&self) -> usize {
        self.probabilities.width
    }

    /// Checks every bundle invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.image_id.is_empty() {
            report.push(Violation::field("image_id", "empty"));
        }
        for v in self.class_spec.violations() {
            report.push(v);
        }
        let c = self.class_spec.num_classes();
        if self.probabilities.classes != c {
            report.push(Violation::field(
                "c",
                format!(
                    "probability stack has {} classes but class_names lists {c}",
                    self.probabilities.classes
                ),
            ));
        }
        let (h, w) = (self.height(), self.width());
        if let Some(label) = &self.label {
            if label.height != h || label.width != w {
                report.push(Violation::field(
                    "label",
                    format!("label is {}x{}, probabilities are {h}x{w}", label.height, label.width),
                ));
            }
        }
        if let Some(src) = &self.source_image {
            if src.len() != h * w * 3 {
                report.push(Violation::field(
                    "source_image",
                    format!("expected {} RGB bytes, got {}", h * w * 3, src.len()),
                ));
            }
        }
        if self.probabilities.classes == c {
            self.probabilities.check_values(&mut report);
        }
        if let Some(label) = &self.label {
            check_label_values(label.values(), c, &mut report);
        }
        report
    }
}

fn check_label_values(values: &[u8], classes: usize, report: &mut ValidationReport) {
    for (pixel, &value) in values.iter().enumerate() {
        if value as usize >= classes {
            report.push(Violation::LabelOutOfRange { pixel, value });
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u64,
    image_id: String,
    t: usize,
    c: usize,
    h: usize,
    w: usize,
    class_names: Vec<String>,
    background_index: usize,
    has_label: bool,
    has_source_image: bool,
    prob_dtype: String,
    payload_crc32: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

fn payload_bytes(bundle: &Bundle) -> Vec<u8> {
    let probs = bundle.probabilities.values();
    let mut payload = Vec::with_capacity(
        probs.len() * 4
            + bundle.label.as_ref().map_or(0, |l| l.values.len())
            + bundle.source_image.as_ref().map_or(0, Vec::len),
    );
    for p in probs {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(label) = &bundle.label {
        payload.extend_from_slice(&label.values);
    }
    if let Some(src) = &bundle.source_image {
        payload.extend_from_slice(src);
    }
    payload
}

/// Serializes a valid bundle to its UBND bytes.
pub fn encode_bundle(bundle: &Bundle) -> Result<Vec<u8>, BundleError> {
    let report = bundle.validate();
    if !report.is_valid() {
        return Err(BundleError::Invalid(report));
    }
    let payload = payload_bytes(bundle);
    let header = Header {
        version: FORMAT_VERSION,
        image_id: bundle.image_id.clone(),
        t: bundle.passes(),
        c: bundle.num_classes(),
        h: bundle.height(),
        w: bundle.width(),
        class_names: bundle.class_spec.class_names.clone(),
        background_index: bundle.class_spec.background_index,
        has_label: bundle.label.is_some(),
        has_source_image: bundle.source_image.is_some(),
        prob_dtype: PROB_DTYPE.to_string(),
        payload_crc32: crc32fast::hash(&payload),
        meta: bundle.meta.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let header_len = u32::try_from(header.len()).map_err(|_| {
        BundleError::Invalid(ValidationReport {
            violations: vec![Violation::field("header", "header exceeds 4 GiB")],
            omitted: 0,
        })
    })?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Writes `bundle` to `sink`, returning the number of bytes written.
pub fn write_bundle<W: Write>(bundle: &Bundle, mut sink: W) -> Result<usize, BundleError> {
    let bytes = encode_bundle(bundle)?;
    sink.write_all(&bytes)?;
    Ok(bytes.len())
}

/// Parses as far as possible, collecting violations. Returns the bundle only
/// when nothing was violated.
fn inspect(bytes: &[u8]) -> (Option<Bundle>, ValidationReport) {
    let mut report = ValidationReport::default();
    let bundle = inspect_into(bytes, &mut report);
    if report.is_valid() {
        (bundle, report)
    } else {
        (None, report)
    }
}

fn inspect_into(bytes: &[u8], report: &mut ValidationReport) -> Option<Bundle> {
    if !bytes.starts_with(MAGIC) {
        if MAGIC.starts_with(bytes) && !bytes.is_empty() {
            report.push(Violation::Truncated {
                section: "magic".into(),
                expected: MAGIC.len(),
                actual: bytes.len(),
            });
        } else {
            report.push(Violation::BadMagic);
        }
        return None;
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 4 {
        report.push(Violation::Truncated {
            section: "header length".into(),
            expected: 4,
            actual: rest.len(),
        });
        return None;
    }
    let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < header_len {
        report.push(Violation::Truncated {
            section: "header".into(),
            expected: header_len,
            actual: rest.len(),
        });
        return None;
    }
    let (header_bytes, payload) = rest.split_at(header_len);

    let raw: serde_json::Value = match serde_json::from_slice(header_bytes) {
        Ok(v) => v,
        Err(e) => {
            report.push(Violation::MalformedHeader {
                reason: e.to_string(),
            });
            return None;
        }
    };
    match raw.get("version").and_then(serde_json::Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            report.push(Violation::VersionMismatch { found });
            return None;
        }
        None => {
            report.push(Violation::MalformedHeader {
                reason: "missing or non-integer version".into(),
            });
            return None;
        }
    }
    let header: Header = match serde_json::from_value(raw) {
        Ok(h) => h,
        Err(e) => {
            report.push(Violation::MalformedHeader {
                reason: e.to_string(),
            });
            return None;
        }
    };
    if header.prob_dtype != PROB_DTYPE {
        report.push(Violation::MalformedHeader {
            reason: format!("unsupported prob_dtype {:?}", header.prob_dtype),
        });
        return None;
    }

    let mut shape_ok = true;
    for (name, v, min) in [("t", header.t, 1), ("c", header.c, 2), ("h", header.h, 1), ("w", header.w, 1)] {
        if v < min {
            report.push(Violation::field(name, format!("must be at least {min}, got {v}")));
            shape_ok = false;
        }
    }
    if header.class_names.len() != header.c {
        report.push(Violation::field(
            "class_names",
            format!("{} names for c = {}", header.class_names.len(), header.c),
        ));
        shape_ok = false;
    }
    if !shape_ok {
        return None;
    }

    let pixels = header.h.checked_mul(header.w);
    let prob_len = pixels
        .and_then(|n| n.checked_mul(header.t))
        .and_then(|n| n.checked_mul(header.c))
        .and_then(|n| n.checked_mul(4));
    let (Some(pixels), Some(prob_len)) = (pixels, prob_len) else {
        report.push(Violation::MalformedHeader {
            reason: "dimensions overflow".into(),
        });
        return None;
    };
    let label_len = if header.has_label { pixels } else { 0 };
    let source_len = if header.has_source_image { pixels * 3 } else { 0 };
    let expected = prob_len + label_len + source_len;
    if payload.len() < expected {
        report.push(Violation::Truncated {
            section: "payload".into(),
            expected,
            actual: payload.len(),
        });
        return None;
    }
    if payload.len() > expected {
        report.push(Violation::TrailingBytes {
            count: payload.len() - expected,
        });
    }
    let payload = &payload[..expected];
    let computed = crc32fast::hash(payload);
    if computed != header.payload_crc32 {
        report.push(Violation::ChecksumMismatch {
            stored: header.payload_crc32,
            computed,
        });
    }

    let class_spec = ClassSpec {
        class_names: header.class_names,
        background_index: header.background_index,
    };
    for v in class_spec.violations() {
        report.push(v);
    }
    if header.image_id.is_empty() {
        report.push(Violation::field("image_id", "empty"));
    }

    let (prob_bytes, rest) = payload.split_at(prob_len);
    let values = prob_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let probabilities = ProbabilityStack {
        passes: header.t,
        classes: header.c,
        height: header.h,
        width: header.w,
        values,
    };
    probabilities.check_values(report);

    let (label_bytes, source_bytes) = rest.split_at(label_len);
    let label = header.has_label.then(|| {
        check_label_values(label_bytes, header.c, report);
        LabelMap {
            height: header.h,
            width: header.w,
            values: label_bytes.to_vec(),
        }
    });
    let source_image = header.has_source_image.then(|| source_bytes.to_vec());

    Some(Bundle {
        image_id: header.image_id,
        class_spec,
        probabilities,
        label,
        source_image,
        meta: header.meta,
    })
}

/// Decodes UBND bytes into a validated bundle.
pub fn decode_bundle(bytes: &[u8]) -> Result<Bundle, BundleError> {
    let (bundle, report) = inspect(bytes);
    match bundle {
        Some(b) => Ok(b),
        None => Err(first_error(report)),
    }
}

// Structural failures abort parsing, so at most one of them is present and it
// comes first. Among content findings the checksum outranks probability sums.
fn first_error(report: ValidationReport) -> BundleError {
    let pick = report
        .violations
        .iter()
        .find(|v| {
            matches!(
                v,
                Violation::BadMagic | Violation::VersionMismatch { .. } | Violation::Truncated { .. }
            )
        })
        .or_else(|| {
            report
                .violations
                .iter()
                .find(|v| matches!(v, Violation::ChecksumMismatch { .. }))
        })
        .or_else(|| {
            report
                .violations
                .iter()
                .find(|v| matches!(v, Violation::ProbabilitySum { .. }))
        })
        .cloned();
    match pick {
        Some(Violation::BadMagic) => BundleError::BadMagic,
        Some(Violation::VersionMismatch { found }) => BundleError::VersionMismatch { found },
        Some(Violation::Truncated {
            section,
            expected,
            actual,
        }) => BundleError::Truncated {
            section,
            expected,
            actual,
        },
        Some(Violation::ChecksumMismatch { stored, computed }) => {
            BundleError::ChecksumMismatch { stored, computed }
        }
        Some(Violation::ProbabilitySum { pass, pixel, sum }) => {
            BundleError::ProbabilitySum { pass, pixel, sum }
        }
        _ => BundleError::Invalid(report),
    }
}

/// Reads one bundle from `source`, consuming it to the end.
pub fn read_bundle<R: Read>(mut source: R) -> Result<Bundle, BundleError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_bundle(&bytes)
}

/// Lists every violated invariant in UBND bytes.
pub fn validate_bytes(bytes: &[u8]) -> ValidationReport {
    inspect(bytes).1
}

/// Reads `source` to the end and reports every violated invariant.
pub fn validate_bundle<R: Read>(mut source: R) -> io::Result<ValidationReport> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    Ok(validate_bytes(&bytes))
}
