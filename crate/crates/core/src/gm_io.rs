//! Strong-motion record ingestion: PEER-format text, synthetic records, the
//! ground-motion manifest, and dataset splitting.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GmIoError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("header declares NPTS={expected} but the body holds {found} values")]
    CountMismatch { expected: usize, found: usize },
    #[error("line {line}: non-numeric value `{token}`")]
    NonNumericValue { line: usize, token: String },
    #[error("channels disagree: {0}")]
    ChannelMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
}

/// One channel as read from a PEER file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub npts: usize,
    pub dt: f64,
    pub unit_label: String,
    pub values: Vec<f64>,
}

/// Aligned acceleration / velocity / displacement histories.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundMotionRecord {
    pub record_id: String,
    pub dt: f64,
    pub acceleration: Vec<f64>,
    pub velocity: Vec<f64>,
    pub displacement: Vec<f64>,
    /// Unit labels in channel order (acceleration, velocity, displacement).
    pub units: [String; 3],
}

/// Channel order used everywhere: R, G, B.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Acceleration,
    Velocity,
    Displacement,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Acceleration, Channel::Velocity, Channel::Displacement];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Acceleration => "acceleration",
            Channel::Velocity => "velocity",
            Channel::Displacement => "displacement",
        }
    }
}

impl GroundMotionRecord {
    /// Builds a record, checking the channel invariants.
    pub fn new(
        record_id: impl Into<String>,
        dt: f64,
        acceleration: Vec<f64>,
        velocity: Vec<f64>,
        displacement: Vec<f64>,
        units: [String; 3],
    ) -> Result<Self, GmIoError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(GmIoError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let n = acceleration.len();
        if velocity.len() != n || displacement.len() != n {
            return Err(GmIoError::ChannelMismatch(format!(
                "lengths {} / {} / {}",
                n,
                velocity.len(),
                displacement.len()
            )));
        }
        if n == 0 {
            return Err(GmIoError::InvalidArgument("record has no samples".into()));
        }
        Ok(Self { record_id: record_id.into(), dt, acceleration, velocity, displacement, units })
    }

    pub fn len(&self) -> usize {
        self.acceleration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acceleration.is_empty()
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        match c {
            Channel::Acceleration => &self.acceleration,
            Channel::Velocity => &self.velocity,
            Channel::Displacement => &self.displacement,
        }
    }

    pub fn channel_mut(&mut self, c: Channel) -> &mut Vec<f64> {
        match c {
            Channel::Acceleration => &mut self.acceleration,
            Channel::Velocity => &mut self.velocity,
            Channel::Displacement => &mut self.displacement,
        }
    }
}

/// Reads the number following `key` (e.g. `NPTS=`) on a header line.
fn number_after<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let upper = line.to_ascii_uppercase();
    let start = upper.find(key)? + key.len();
    let rest = line[start..].trim_start();
    let end =
        rest.find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))).unwrap_or(rest.len());
    let token = &rest[..end];
    (!token.is_empty()).then_some(token)
}

/// Parses one PEER-format channel file.
///
/// The fourth header line carries `NPTS=` and `DT=` tokens; the third is
/// kept verbatim as the unit label. Data start on line five.
pub fn parse_peer_record(text: &str) -> Result<RawSeries, GmIoError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 4 {
        return Err(GmIoError::MalformedHeader {
            line: lines.len() + 1,
            reason: "expected at least four header lines".into(),
        });
    }
    let header = lines[3];
    let npts_tok = number_after(header, "NPTS=")
        .ok_or_else(|| GmIoError::MalformedHeader { line: 4, reason: "missing NPTS=".into() })?;
    let dt_tok = number_after(header, "DT=")
        .ok_or_else(|| GmIoError::MalformedHeader { line: 4, reason: "missing DT=".into() })?;
    let npts: usize = npts_tok
        .parse()
        .map_err(|_| GmIoError::MalformedHeader { line: 4, reason: format!("bad NPTS `{npts_tok}`") })?;
    let dt: f64 =
        dt_tok.parse().map_err(|_| GmIoError::MalformedHeader { line: 4, reason: format!("bad DT `{dt_tok}`") })?;
    if npts == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(GmIoError::MalformedHeader { line: 4, reason: format!("NPTS={npts}, DT={dt}") });
    }

    let mut values = Vec::with_capacity(npts);
    for (i, line) in lines.iter().enumerate().skip(4) {
        for token in line.split_whitespace() {
            let v: f64 =
                token.parse().map_err(|_| GmIoError::NonNumericValue { line: i + 1, token: token.to_string() })?;
            values.push(v);
        }
    }
    if values.len() != npts {
        return Err(GmIoError::CountMismatch { expected: npts, found: values.len() });
    }
    Ok(RawSeries { npts, dt, unit_label: lines[2].trim().to_string(), values })
}

/// Writes a series back out in PEER layout, five values per line at seven
/// significant digits.
pub fn to_peer_text(series: &RawSeries, title: &str) -> String {
    let mut out = String::new();
    out.push_str("PEER NGA STRONG MOTION DATABASE RECORD\n");
    out.push_str(title);
    out.push('\n');
    out.push_str(&series.unit_label);
    out.push('\n');
    out.push_str(&format!("NPTS={:>8}, DT={:>12} SEC\n", series.npts, series.dt));
    for chunk in series.values.chunks(5) {
        for v in chunk {
            out.push_str(&format!("{v:>15.6E}"));
        }
        out.push('\n');
    }
    out
}

/// Combines the three channel files of one recording.
pub fn load_record_triplet(
    acc_text: &str,
    vel_text: &str,
    disp_text: &str,
    record_id: &str,
) -> Result<GroundMotionRecord, GmIoError> {
    let acc = parse_peer_record(acc_text)?;
    let vel = parse_peer_record(vel_text)?;
    let disp = parse_peer_record(disp_text)?;
    for (name, s) in [("velocity", &vel), ("displacement", &disp)] {
        if s.npts != acc.npts {
            return Err(GmIoError::ChannelMismatch(format!(
                "{name} has {} samples, acceleration has {}",
                s.npts, acc.npts
            )));
        }
        if s.dt != acc.dt {
            return Err(GmIoError::ChannelMismatch(format!("{name} dt {} != acceleration dt {}", s.dt, acc.dt)));
        }
    }
    GroundMotionRecord::new(
        record_id,
        acc.dt,
        acc.values,
        vel.values,
        disp.values,
        [acc.unit_label, vel.unit_label, disp.unit_label],
    )
}

/// Ranges for synthetic record generation.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    /// Mode frequencies are drawn log-uniformly from this range (Hz).
    pub freq_hz: (f64, f64),
    /// Damping ratios, uniform.
    pub damping: (f64, f64),
    /// Peak amplitudes, uniform.
    pub amplitude: (f64, f64),
    /// Standard deviation of the smoothed noise relative to the largest
    /// amplitude.
    pub noise_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { freq_hz: (0.2, 25.0), damping: (0.02, 0.10), amplitude: (0.05, 0.5), noise_fraction: 0.01 }
    }
}

const NOISE_SMOOTHING: usize = 5;

/// Cumulative trapezoidal integral starting at zero.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * dt * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Synthetic record with default [`SynthParams`].
pub fn synthesize_record(
    seed: u64,
    n_samples: usize,
    dt: f64,
    n_modes: usize,
) -> Result<GroundMotionRecord, GmIoError> {
    synthesize_record_with(seed, n_samples, dt, n_modes, &SynthParams::default())
}

/// Sum of damped sinusoids plus smoothed noise; velocity and displacement
/// are cumulative trapezoidal integrals of the acceleration.
pub fn synthesize_record_with(
    seed: u64,
    n_samples: usize,
    dt: f64,
    n_modes: usize,
    params: &SynthParams,
) -> Result<GroundMotionRecord, GmIoError> {
    if n_samples == 0 || n_modes == 0 {
        return Err(GmIoError::InvalidArgument("n_samples and n_modes must be at least 1".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GmIoError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };

    struct Mode {
        omega: f64,
        omega_d: f64,
        zeta: f64,
        amp: f64,
        phase: f64,
    }
    let modes: Vec<Mode> = (0..n_modes)
        .map(|_| {
            let (lo, hi) = params.freq_hz;
            let f = uniform(&mut rng, (lo.ln(), hi.ln())).exp();
            let zeta = uniform(&mut rng, params.damping);
            let amp = uniform(&mut rng, params.amplitude);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let omega = std::f64::consts::TAU * f;
            Mode { omega, omega_d: omega * (1.0 - zeta * zeta).sqrt(), zeta, amp, phase }
        })
        .collect();

    let mut acceleration: Vec<f64> = (0..n_samples)
        .map(|i| {
            let t = i as f64 * dt;
            modes.iter().map(|m| m.amp * (-m.zeta * m.omega * t).exp() * (m.omega_d * t + m.phase).sin()).sum()
        })
        .collect();

    if params.noise_fraction > 0.0 {
        let peak = modes.iter().map(|m| m.amp).fold(0.0, f64::max);
        let white: Vec<f64> = (0..n_samples + NOISE_SMOOTHING - 1).map(|_| rng.sample(StandardNormal)).collect();
        let scale = params.noise_fraction * peak * (NOISE_SMOOTHING as f64).sqrt() / NOISE_SMOOTHING as f64;
        for (i, a) in acceleration.iter_mut().enumerate() {
            *a += scale * white[i..i + NOISE_SMOOTHING].iter().sum::<f64>();
        }
    }

    let velocity = cumulative_trapezoid(&acceleration, dt);
    let displacement = cumulative_trapezoid(&velocity, dt);
    GroundMotionRecord::new(
        format!("SYN{seed:06}"),
        dt,
        acceleration,
        velocity,
        displacement,
        ["g".into(), "g*s".into(), "g*s^2".into()],
    )
}

/// Seeded shuffle, then the first `round(n · test_fraction)` items form
/// the test split.
pub fn split_dataset<T>(items: Vec<T>, test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), GmIoError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(GmIoError::InvalidArgument(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    if items.is_empty() {
        return Err(GmIoError::EmptyDataset);
    }
    let n_test = (items.len() as f64 * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut take = |i: usize| slots[i].take().expect("each index drawn once");
    let test = order[..n_test].iter().map(|&i| take(i)).collect();
    let train = order[n_test..].iter().map(|&i| take(i)).collect();
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    FarField,
    NearFieldPulse,
    NearFieldNoPulse,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::FarField => "far-field",
            Category::NearFieldPulse => "near-field-pulse",
            Category::NearFieldNoPulse => "near-field-no-pulse",
        })
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "far-field" => Ok(Category::FarField),
            "near-field-pulse" => Ok(Category::NearFieldPulse),
            "near-field-no-pulse" => Ok(Category::NearFieldNoPulse),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifestFlag {
    /// No vertical component exists for the record.
    NoVertical,
    /// Not currently distributed by the database.
    Unavailable,
}

impl fmt::Display for ManifestFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ManifestFlag::NoVertical => "no_vertical",
            ManifestFlag::Unavailable => "unavailable",
        })
    }
}

impl FromStr for ManifestFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "no_vertical" => Ok(ManifestFlag::NoVertical),
            "unavailable" => Ok(ManifestFlag::Unavailable),
            other => Err(format!("unknown flag `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub rsn: u32,
    pub category: Category,
    pub flags: Vec<ManifestFlag>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordManifest {
    pub entries: Vec<ManifestEntry>,
}

const FEMA_P695_MANIFEST: &str = include_str!("../data/fema_p695_manifest.csv");

impl RecordManifest {
    /// The bundled FEMA P695 far-field / near-field ground-motion set.
    pub fn fema_p695() -> Self {
        Self::parse(FEMA_P695_MANIFEST).expect("bundled manifest is valid")
    }

    /// Parses `RSN,<category>,<flags>` lines; flags are `|`-separated and
    /// may be empty. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, GmIoError> {
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| GmIoError::BadManifest { line: i + 1, reason };
            let fields: Vec<&str> = line.split(',').collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(bad(format!("expected 3 fields, got {}", fields.len())));
            }
            let rsn: u32 = fields[0].trim().parse().map_err(|_| bad(format!("bad RSN `{}`", fields[0])))?;
            let category = fields[1].parse().map_err(bad)?;
            let flags = match fields.get(2).map(|f| f.trim()) {
                None | Some("") => Vec::new(),
                Some(f) => f.split('|').map(|s| s.parse()).collect::<Result<_, _>>().map_err(bad)?,
            };
            if entries.iter().any(|e| e.rsn == rsn) {
                return Err(bad(format!("duplicate RSN {rsn}")));
            }
            entries.push(ManifestEntry { rsn, category, flags });
        }
        Ok(Self { entries })
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                let flags: Vec<String> = e.flags.iter().map(|f| f.to_string()).collect();
                format!("{},{},{}\n", e.rsn, e.category, flags.join("|"))
            })
            .collect()
    }

    pub fn get(&self, rsn: u32) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.rsn == rsn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "PEER NGA STRONG MOTION DATABASE RECORD\n\
        LOMA PRIETA 10/18/89 00:05, CAPITOLA, 000\n\
        ACCELERATION TIME SERIES IN UNITS OF G\n\
        NPTS=    4, DT=   .0050 SEC\n\
        1.0 2.0 3.0\n4.0\n";

    #[test]
    fn parses_minimal_record() {
        let s = parse_peer_record(SMALL).unwrap();
        assert_eq!(s.npts, 4);
        assert_eq!(s.dt, 0.005);
        assert_eq!(s.values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.unit_label, "ACCELERATION TIME SERIES IN UNITS OF G");
    }

    #[test]
    fn header_tokens_tolerate_spacing_and_case() {
        let text = SMALL.replace("NPTS=    4, DT=   .0050 SEC", "npts=4 dt=5.0E-03 sec");
        let s = parse_peer_record(&text).unwrap();
        assert_eq!((s.npts, s.dt), (4, 0.005));
    }

    #[test]
    fn fortran_style_exponents_parse() {
        let text = SMALL.replace("1.0 2.0 3.0\n4.0", "  -.1139427E-02   .2E+01 3 4");
        let s = parse_peer_record(&text).unwrap();
        assert_eq!(s.values[0], -0.001139427);
        assert_eq!(s.values[1], 2.0);
    }

    #[test]
    fn count_mismatch_is_reported() {
        let text = SMALL.replace("\n4.0\n", "\n");
        assert_eq!(parse_peer_record(&text), Err(GmIoError::CountMismatch { expected: 4, found: 3 }));
    }

    #[test]
    fn missing_header_tokens() {
        let text = SMALL.replace("DT=", "STEP=");
        assert!(matches!(parse_peer_record(&text), Err(GmIoError::MalformedHeader { line: 4, .. })));
        assert!(matches!(parse_peer_record("a\nb\n"), Err(GmIoError::MalformedHeader { .. })));
    }

    #[test]
    fn non_numeric_value_names_its_line() {
        let text = SMALL.replace("4.0", "x4");
        assert_eq!(parse_peer_record(&text), Err(GmIoError::NonNumericValue { line: 6, token: "x4".into() }));
    }

    #[test]
    fn triplet_alignment() {
        let r = load_record_triplet(SMALL, SMALL, SMALL, "RSN1").unwrap();
        assert_eq!(r.len(), 4);
        let five = SMALL.replace("NPTS=    4", "NPTS=    5").replace("\n4.0\n", "\n4.0 5.0\n");
        assert!(matches!(load_record_triplet(SMALL, &five, SMALL, "RSN1"), Err(GmIoError::ChannelMismatch(_))));
        let other_dt = SMALL.replace(".0050", ".0100");
        assert!(matches!(load_record_triplet(SMALL, SMALL, &other_dt, "RSN1"), Err(GmIoError::ChannelMismatch(_))));
    }

    #[test]
    fn synthesis_is_deterministic_and_seed_dependent() {
        let a = synthesize_record(7, 2000, 0.01, 4).unwrap();
        let b = synthesize_record(7, 2000, 0.01, 4).unwrap();
        let c = synthesize_record(8, 2000, 0.01, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.acceleration, c.acceleration);
        assert!(synthesize_record(1, 0, 0.01, 1).is_err());
        assert!(synthesize_record(1, 10, 0.01, 0).is_err());
    }

    #[test]
    fn undamped_single_mode_velocity_matches_closed_form() {
        let params = SynthParams { damping: (0.0, 0.0), noise_fraction: 0.0, ..SynthParams::default() };
        for dt in [0.01, 0.005] {
            let r = synthesize_record_with(3, 1000, dt, 1, &params).unwrap();
            // Recover the mode from the samples: a(t) = A sin(ωt + φ).
            let a0 = r.acceleration[0];
            // Fit ω from the discrete recurrence a[n+1] + a[n-1] = 2 cos(ω dt) a[n].
            let (mut num, mut den) = (0.0, 0.0);
            for n in 1..r.len() - 1 {
                num += (r.acceleration[n + 1] + r.acceleration[n - 1]) * r.acceleration[n];
                den += 2.0 * r.acceleration[n] * r.acceleration[n];
            }
            let omega = (num / den).acos() / dt;
            let a1 = r.acceleration[1];
            // A sin φ = a0; A cos φ from a1 = A sin(ω dt + φ).
            let a_cos = (a1 - a0 * (omega * dt).cos()) / (omega * dt).sin();
            let amp = (a0 * a0 + a_cos * a_cos).sqrt();
            let phase = a0.atan2(a_cos);
            let mut max_err: f64 = 0.0;
            for (i, v) in r.velocity.iter().enumerate() {
                let t = i as f64 * dt;
                let exact = amp / omega * (phase.cos() - (omega * t + phase).cos());
                max_err = max_err.max((v - exact).abs());
            }
            // Trapezoid error over the record is bounded by T·ω²·A·dt²/12.
            let bound = (1000.0 * dt) * omega * omega * amp * dt * dt / 12.0;
            assert!(max_err <= bound * 1.01 + 1e-12, "dt={dt}: {max_err} > {bound}");
        }
    }

    #[test]
    fn synthetic_records_are_finite() {
        for seed in 0..20 {
            let r = synthesize_record(seed, 3000, 0.005, 1 + (seed as usize % 6)).unwrap();
            for c in Channel::ALL {
                assert!(r.channel(c).iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn split_sizes_follow_rounding() {
        let (train, test) = split_dataset((0..10).collect(), 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let (train, test) = split_dataset((0..5).collect(), 0.5, 1).unwrap();
        assert_eq!((train.len(), test.len()), (2, 3));
        assert_eq!(
            split_dataset((0..10).collect::<Vec<_>>(), 0.2, 1).unwrap(),
            split_dataset((0..10).collect(), 0.2, 1).unwrap()
        );
        assert_eq!(split_dataset(Vec::<u8>::new(), 0.2, 1), Err(GmIoError::EmptyDataset));
        assert!(split_dataset(vec![1], 1.0, 1).is_err());
    }

    #[test]
    fn bundled_manifest() {
        let m = RecordManifest::fema_p695();
        assert_eq!(m.entries.len(), 50);
        let count = |c| m.entries.iter().filter(|e| e.category == c).count();
        assert_eq!(count(Category::FarField), 22);
        assert_eq!(count(Category::NearFieldPulse), 14);
        assert_eq!(count(Category::NearFieldNoPulse), 14);
        assert_eq!(m.get(829).unwrap().flags, vec![ManifestFlag::Unavailable]);
        for rsn in [725, 723, 496, 1048] {
            assert_eq!(m.get(rsn).unwrap().flags, vec![ManifestFlag::NoVertical]);
        }
        assert_eq!(m.get(752).unwrap().category, Category::FarField);
        assert_eq!(RecordManifest::parse(&m.render()).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let err = RecordManifest::parse("1,far-field,\n1,near-field-pulse,\n").unwrap_err();
        assert!(matches!(err, GmIoError::BadManifest { line: 2, .. }));
    }
}
