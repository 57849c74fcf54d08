//! Devices and the network between them.
//!
//! A [`NetworkProfile`] holds the directed delay (seconds) and bandwidth
//! (bits/s) matrices as measured or generated. Cost evaluation works on the
//! undirected [`CommGraph`] obtained by averaging both directions.
//!
//! Files carry delay in milliseconds and bandwidth in Gbps; everything
//! in memory is seconds and bits per second. Payloads are bytes.

use std::fmt;
use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::SquareMatrix;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub usize);

impl DeviceId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for DeviceId {
    fn from(i: usize) -> Self {
        DeviceId(i)
    }
}

// ── Units ───────────────────────────────────────────────────────────────────

pub fn ms_to_s(ms: f64) -> f64 {
    ms / 1000.0
}

pub fn gbps_to_bps(gbps: f64) -> f64 {
    gbps * 1e9
}

/// Inverse of [`ms_to_s`] that survives a write/read cycle bit-for-bit.
pub fn s_to_ms(s: f64) -> f64 {
    exact_preimage(s, s * 1000.0, ms_to_s)
}

/// Inverse of [`gbps_to_bps`] that survives a write/read cycle bit-for-bit.
pub fn bps_to_gbps(bps: f64) -> f64 {
    exact_preimage(bps, bps / 1e9, gbps_to_bps)
}

// `guess` is within a couple of ulps of a value that decodes back to
// `target`; walk outwards until one does.
fn exact_preimage(target: f64, guess: f64, decode: fn(f64) -> f64) -> f64 {
    if !guess.is_finite() || decode(guess) == target {
        return guess;
    }
    let (mut up, mut down) = (guess, guess);
    for _ in 0..8 {
        up = up.next_up();
        down = down.next_down();
        if decode(up) == target {
            return up;
        }
        if decode(down) == target {
            return down;
        }
    }
    guess
}

// ── Profiles ────────────────────────────────────────────────────────────────

/// Directed delay/bandwidth matrices over `n` devices.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkProfile {
    names: Option<Vec<String>>,
    delay: SquareMatrix,
    bandwidth: SquareMatrix,
}

/// On-disk scenario layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    pub devices: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    pub delay_ms: Vec<Vec<f64>>,
    pub bandwidth_gbps: Vec<Vec<f64>>,
}

impl NetworkProfile {
    /// Validates and normalizes the matrices: diagonal delay becomes 0 and
    /// diagonal bandwidth `+inf`, whatever the input held there.
    pub fn new(
        mut delay: SquareMatrix,
        mut bandwidth: SquareMatrix,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = delay.n();
        if bandwidth.n() != n {
            return Err(Error::Profile(format!(
                "delay is {n}x{n} but bandwidth is {0}x{0}",
                bandwidth.n()
            )));
        }
        if let Some(names) = &names {
            if names.len() != n {
                return Err(Error::Profile(format!(
                    "{} names for {n} devices",
                    names.len()
                )));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let a = delay.get(i, j);
                let b = bandwidth.get(i, j);
                if !a.is_finite() {
                    return Err(Error::NonFinite {
                        matrix: "delay",
                        row: i,
                        col: j,
                    });
                }
                if a < 0.0 {
                    return Err(Error::NegativeDelay(i, j));
                }
                if b.is_nan() || b <= 0.0 {
                    return Err(Error::NonPositiveBandwidth(i, j));
                }
                if !b.is_finite() {
                    return Err(Error::NonFinite {
                        matrix: "bandwidth",
                        row: i,
                        col: j,
                    });
                }
            }
            delay.set(i, i, 0.0);
            bandwidth.set(i, i, f64::INFINITY);
        }
        Ok(NetworkProfile {
            names,
            delay,
            bandwidth,
        })
    }

    pub fn n(&self) -> usize {
        self.delay.n()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Delay matrix in seconds.
    pub fn delay(&self) -> &SquareMatrix {
        &self.delay
    }

    /// Bandwidth matrix in bits per second.
    pub fn bandwidth(&self) -> &SquareMatrix {
        &self.bandwidth
    }

    pub fn from_file(file: ProfileFile) -> Result<Self> {
        let n = file.devices;
        let delay = parse_matrix("delay", &file.delay_ms, n, ms_to_s)?;
        let bandwidth = parse_matrix("bandwidth", &file.bandwidth_gbps, n, gbps_to_bps)?;
        Self::new(delay, bandwidth, file.names)
    }

    pub fn to_file(&self) -> ProfileFile {
        let n = self.n();
        ProfileFile {
            devices: n,
            names: self.names.clone(),
            delay_ms: self.delay.map(s_to_ms).to_rows(),
            bandwidth_gbps: SquareMatrix::from_fn(n, |i, j| {
                if i == j {
                    0.0
                } else {
                    bps_to_gbps(self.bandwidth.get(i, j))
                }
            })
            .to_rows(),
        }
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        Self::from_file(serde_json::from_slice(bytes)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("profile serializes")
    }
}

fn parse_matrix(
    matrix: &'static str,
    rows: &[Vec<f64>],
    n: usize,
    convert: fn(f64) -> f64,
) -> Result<SquareMatrix> {
    if rows.len() != n {
        return Err(Error::Profile(format!(
            "{matrix} matrix has {} rows but devices = {n}",
            rows.len()
        )));
    }
    let converted: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| convert(v)).collect())
        .collect();
    SquareMatrix::from_rows(&converted).map_err(|(row, len)| Error::NotSquare {
        matrix,
        row,
        len,
        expected: n,
    })
}

/// Reads a scenario JSON document.
pub fn load_profile(mut source: impl Read) -> Result<NetworkProfile> {
    let mut buf = Vec::new();
    source
        .read_to_end(&mut buf)
        .map_err(|e| Error::Profile(format!("read failed: {e}")))?;
    NetworkProfile::from_json_slice(&buf)
}

// ── Communication graph ─────────────────────────────────────────────────────

/// Undirected view of a profile: per-pair mean latency and bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    lat: SquareMatrix,
    bw: SquareMatrix,
}

pub fn symmetrize(p: &NetworkProfile) -> CommGraph {
    let n = p.n();
    let a = p.delay();
    let b = p.bandwidth();
    let lat = SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            0.0
        } else {
            (a.get(i, j) + a.get(j, i)) / 2.0
        }
    });
    let bw = SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            f64::INFINITY
        } else {
            (b.get(i, j) + b.get(j, i)) / 2.0
        }
    });
    CommGraph { lat, bw }
}

impl CommGraph {
    pub fn n(&self) -> usize {
        self.lat.n()
    }

    pub fn lat_matrix(&self) -> &SquareMatrix {
        &self.lat
    }

    pub fn bw_matrix(&self) -> &SquareMatrix {
        &self.bw
    }

    #[inline]
    pub fn lat(&self, a: DeviceId, b: DeviceId) -> f64 {
        self.lat.get(a.0, b.0)
    }

    #[inline]
    pub fn bw(&self, a: DeviceId, b: DeviceId) -> f64 {
        self.bw.get(a.0, b.0)
    }

    /// `lat + 8·payload/bw` without argument checks.
    #[inline]
    pub fn transfer_time(&self, a: DeviceId, b: DeviceId, payload_bytes: f64) -> f64 {
        self.lat(a, b) + 8.0 * payload_bytes / self.bw(a, b)
    }

    /// Point-to-point transfer time of `payload_bytes` between two distinct
    /// devices.
    pub fn edge_cost(&self, a: DeviceId, b: DeviceId, payload_bytes: f64) -> Result<f64> {
        let n = self.n();
        for d in [a, b] {
            if d.0 >= n {
                return Err(Error::DeviceOutOfRange(d.0, n));
            }
        }
        if a == b {
            return Err(Error::SameDevice(a.0));
        }
        Ok(self.transfer_time(a, b, payload_bytes))
    }
}

// ── Scenarios ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioCase {
    DataCenterOnDemand,
    DataCenterSpot,
    MultiDataCenter,
    RegionalGeo,
    WorldGeo,
    Custom,
}

impl ScenarioCase {
    /// Preset cases are numbered 1 to 5.
    pub fn from_number(n: u8) -> Option<Self> {
        Some(match n {
            1 => ScenarioCase::DataCenterOnDemand,
            2 => ScenarioCase::DataCenterSpot,
            3 => ScenarioCase::MultiDataCenter,
            4 => ScenarioCase::RegionalGeo,
            5 => ScenarioCase::WorldGeo,
            _ => return None,
        })
    }
}

/// A block of devices sharing one intra-group link quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub size: usize,
    pub delay_ms: f64,
    pub bw_gbps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Either a fixed value or a closed `[min, max]` range to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Span {
    Fixed(f64),
    Range([f64; 2]),
}

impl Span {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Span::Fixed(v) => (v, v),
            Span::Range([lo, hi]) => (lo, hi),
        }
    }

    fn sample(self, rng: &mut impl Rng, convert: fn(f64) -> f64) -> f64 {
        match self {
            Span::Fixed(v) => convert(v),
            // drawn in file units so every value survives a file round trip
            Span::Range([lo, hi]) if lo == hi => convert(lo),
            Span::Range([lo, hi]) => convert(rng.gen_range(lo..=hi)),
        }
    }
}

/// Link quality between devices of different groups. Ranges are sampled
/// once per unordered group pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSpec {
    pub delay_ms: Span,
    pub bw_gbps: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub case: ScenarioCase,
    pub groups: Vec<GroupSpec>,
    pub cross: CrossSpec,
    #[serde(default)]
    pub seed: u64,
}

// Data-center latencies are not controlled in the measured setups; these are
// stand-ins for same-host and same-rack links.
const DC_INTRA_NODE_DELAY_MS: f64 = 0.1;
const DC_INTER_NODE_DELAY_MS: f64 = 0.25;

fn groups(names: &[&str], size: usize, delay_ms: f64, bw_gbps: f64) -> Vec<GroupSpec> {
    names
        .iter()
        .map(|name| GroupSpec {
            size,
            delay_ms,
            bw_gbps,
            name: Some(name.to_string()),
        })
        .collect()
}

impl ScenarioSpec {
    /// The five reference scenarios, 64 devices each.
    pub fn preset(case: ScenarioCase, seed: u64) -> Option<Self> {
        let (groups, cross) = match case {
            ScenarioCase::DataCenterOnDemand => {
                let names: Vec<String> = (0..8).map(|i| format!("node{i}")).collect();
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                (
                    groups(&names, 8, DC_INTRA_NODE_DELAY_MS, 100.0),
                    CrossSpec {
                        delay_ms: Span::Fixed(DC_INTER_NODE_DELAY_MS),
                        bw_gbps: Span::Fixed(25.0),
                    },
                )
            }
            ScenarioCase::DataCenterSpot => {
                let multi: Vec<String> = (0..8).map(|i| format!("multi{i}")).collect();
                let single: Vec<String> = (0..32).map(|i| format!("single{i}")).collect();
                let multi: Vec<&str> = multi.iter().map(String::as_str).collect();
                let single: Vec<&str> = single.iter().map(String::as_str).collect();
                let mut g = groups(&multi, 4, DC_INTRA_NODE_DELAY_MS, 100.0);
                g.extend(groups(&single, 1, DC_INTRA_NODE_DELAY_MS, 100.0));
                (
                    g,
                    CrossSpec {
                        delay_ms: Span::Fixed(DC_INTER_NODE_DELAY_MS),
                        bw_gbps: Span::Fixed(10.0),
                    },
                )
            }
            ScenarioCase::MultiDataCenter => (
                groups(&["ohio", "virginia"], 32, DC_INTER_NODE_DELAY_MS, 10.0),
                CrossSpec {
                    delay_ms: Span::Fixed(10.0),
                    bw_gbps: Span::Fixed(1.12),
                },
            ),
            ScenarioCase::RegionalGeo => (
                groups(&["california", "ohio", "oregon", "virginia"], 16, 5.0, 2.0),
                CrossSpec {
                    delay_ms: Span::Range([10.0, 70.0]),
                    bw_gbps: Span::Range([1.0, 1.3]),
                },
            ),
            ScenarioCase::WorldGeo => (
                groups(
                    &[
                        "oregon",
                        "virginia",
                        "ohio",
                        "tokyo",
                        "seoul",
                        "london",
                        "frankfurt",
                        "ireland",
                    ],
                    8,
                    5.0,
                    2.0,
                ),
                CrossSpec {
                    delay_ms: Span::Range([10.0, 250.0]),
                    bw_gbps: Span::Range([0.3, 1.3]),
                },
            ),
            ScenarioCase::Custom => return None,
        };
        Some(ScenarioSpec {
            case,
            groups,
            cross,
            seed,
        })
    }

    pub fn device_count(&self) -> usize {
        self.groups.iter().map(|g| g.size).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.device_count() == 0 {
            return Err(Error::Scenario("group sizes sum to 0".into()));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if !(g.delay_ms.is_finite() && g.delay_ms >= 0.0) {
                return Err(Error::Scenario(format!(
                    "group {i}: delay_ms must be finite and >= 0"
                )));
            }
            if !(g.bw_gbps.is_finite() && g.bw_gbps > 0.0) {
                return Err(Error::Scenario(format!(
                    "group {i}: bw_gbps must be finite and > 0"
                )));
            }
        }
        check_span("cross.delay_ms", self.cross.delay_ms, |v| v >= 0.0)?;
        check_span("cross.bw_gbps", self.cross.bw_gbps, |v| v > 0.0)?;
        Ok(())
    }
}

fn check_span(what: &str, span: Span, admissible: fn(f64) -> bool) -> Result<()> {
    let (lo, hi) = span.bounds();
    if !(lo.is_finite() && hi.is_finite()) || !admissible(lo) {
        return Err(Error::Scenario(format!("{what}: out of domain")));
    }
    if lo > hi {
        return Err(Error::Scenario(format!("{what}: empty range [{lo}, {hi}]")));
    }
    Ok(())
}

/// Builds a block-structured profile from `spec`. The result is symmetric,
/// and the same seed always yields identical matrices.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<NetworkProfile> {
    spec.validate()?;
    let n = spec.device_count();
    let mut group_of = Vec::with_capacity(n);
    let mut names = Vec::with_capacity(n);
    for (gi, g) in spec.groups.iter().enumerate() {
        let label = g.name.clone().unwrap_or_else(|| format!("g{gi}"));
        for k in 0..g.size {
            group_of.push(gi);
            names.push(format!("{label}-{k}"));
        }
    }

    let num_groups = spec.groups.len();
    let mut rng = rng::seeded(spec.seed);
    // (delay s, bandwidth bps) per unordered group pair, drawn in
    // lexicographic pair order.
    let mut cross = vec![(0.0, 0.0); num_groups * num_groups];
    for a in 0..num_groups {
        for b in a + 1..num_groups {
            let delay = spec.cross.delay_ms.sample(&mut rng, ms_to_s);
            let bw = spec.cross.bw_gbps.sample(&mut rng, gbps_to_bps);
            cross[a * num_groups + b] = (delay, bw);
            cross[b * num_groups + a] = (delay, bw);
        }
    }

    let link = |i: usize, j: usize| -> (f64, f64) {
        let (gi, gj) = (group_of[i], group_of[j]);
        if gi == gj {
            let g = &spec.groups[gi];
            (ms_to_s(g.delay_ms), gbps_to_bps(g.bw_gbps))
        } else {
            cross[gi * num_groups + gj]
        }
    };
    let delay = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { link(i, j).0 });
    let bandwidth =
        SquareMatrix::from_fn(n, |i, j| if i == j { f64::INFINITY } else { link(i, j).1 });
    NetworkProfile::new(delay, bandwidth, Some(names))
}
