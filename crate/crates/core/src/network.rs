//! Zone graph, travel-time and OD-frequency ingestion, scenario generation.
//!
//! All durations are integer seconds. Matrices are read from header-less,
//! comma-separated, row-major CSV files.

use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Integer seconds.
pub type Seconds = u64;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV at row {row}, column {col}: {msg}")]
    Malformed { row: usize, col: usize, msg: String },
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not square: row {row} has {found} columns, expected {expected}")]
    NotSquare {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("negative entry {value} at ({row}, {col})")]
    Negative { row: usize, col: usize, value: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NotFinite { row: usize, col: usize },
    #[error("nonzero diagonal entry {value} for zone {zone}")]
    NonzeroDiagonal { zone: usize, value: f64 },
    #[error("frequency table is {found}x{found}, travel matrix is {expected}x{expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("frequency table has no positive off-diagonal weight")]
    NoPositiveWeight,
    #[error("scenario name {0:?} does not match P<int>_C<int>_T<int>")]
    BadScenarioName(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

/// Index of a zone in the owning travel-time matrix.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub usize);

impl ZoneId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense zone-to-zone travel durations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Seconds>>", into = "Vec<Vec<Seconds>>")]
pub struct TravelTimeMatrix {
    zone_count: usize,
    tr: Vec<Seconds>,
}

impl TravelTimeMatrix {
    pub fn from_rows(rows: Vec<Vec<Seconds>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut tr = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(NetworkError::NotSquare {
                    row: i,
                    expected: n,
                    found: row.len(),
                });
            }
            if row[i] != 0 {
                return Err(NetworkError::NonzeroDiagonal {
                    zone: i,
                    value: row[i] as f64,
                });
            }
            tr.extend(row);
        }
        Ok(Self { zone_count: n, tr })
    }

    /// Parses CSV text. Fractional entries are rounded to the nearest second.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let table = read_numeric_table(reader)?;
        let n = table.len();
        let mut rows = Vec::with_capacity(n);
        for (i, row) in table.into_iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (j, v) in row.into_iter().enumerate() {
                if i == j && v != 0.0 {
                    return Err(NetworkError::NonzeroDiagonal { zone: i, value: v });
                }
                out.push(v.round() as Seconds);
            }
            rows.push(out);
        }
        Self::from_rows(rows)
    }

    pub fn zone_count(&self) -> usize {
        self.zone_count
    }

    pub fn contains(&self, zone: ZoneId) -> bool {
        zone.0 < self.zone_count
    }

    /// Travel time `from -> to`. Panics if either zone is out of range.
    #[inline]
    pub fn tr(&self, from: ZoneId, to: ZoneId) -> Seconds {
        self.tr[from.0 * self.zone_count + to.0]
    }

    pub fn rows(&self) -> Vec<Vec<Seconds>> {
        self.tr
            .chunks(self.zone_count)
            .map(|r| r.to_vec())
            .collect()
    }

    /// Stable content identifier, used as `matrix_ref` in scenario files.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.zone_count as u64).to_le_bytes());
        for v in &self.tr {
            h.update(v.to_le_bytes());
        }
        let bytes = h.finalize();
        bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.tr.chunks(self.zone_count) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

impl TryFrom<Vec<Vec<Seconds>>> for TravelTimeMatrix {
    type Error = NetworkError;
    fn try_from(rows: Vec<Vec<Seconds>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<TravelTimeMatrix> for Vec<Vec<Seconds>> {
    fn from(m: TravelTimeMatrix) -> Self {
        m.rows()
    }
}

pub fn load_travel_matrix(path: impl AsRef<Path>) -> Result<TravelTimeMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TravelTimeMatrix::from_csv_reader(file)
}

/// Raw (unnormalized) origin-destination weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdFrequency {
    zone_count: usize,
    weights: Vec<f64>,
}

impl OdFrequency {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut weights = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(NetworkError::NotSquare {
                    row: i,
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(NetworkError::NotFinite { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(NetworkError::Negative {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            weights.extend(row);
        }
        let freq = Self {
            zone_count: n,
            weights,
        };
        if freq.off_diagonal_total() <= 0.0 {
            return Err(NetworkError::NoPositiveWeight);
        }
        Ok(freq)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        Self::from_rows(read_numeric_table(reader)?)
    }

    pub fn zone_count(&self) -> usize {
        self.zone_count
    }

    pub fn weight(&self, origin: ZoneId, destination: ZoneId) -> f64 {
        self.weights[origin.0 * self.zone_count + destination.0]
    }

    fn off_diagonal_total(&self) -> f64 {
        let n = self.zone_count;
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.weights[i * n + j])
            .sum()
    }

    /// Off-diagonal weights normalized to a probability table (diagonal = 0).
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.zone_count;
        let total = self.off_diagonal_total();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out[i * n + j] = self.weights[i * n + j] / total;
                }
            }
        }
        out
    }

    pub fn row_marginals(&self) -> Vec<f64> {
        self.weights
            .chunks(self.zone_count)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn check_shape(&self, matrix: &TravelTimeMatrix) -> Result<()> {
        if self.zone_count != matrix.zone_count() {
            return Err(NetworkError::ShapeMismatch {
                expected: matrix.zone_count(),
                found: self.zone_count,
            });
        }
        Ok(())
    }
}

pub fn load_od_frequency(path: impl AsRef<Path>, matrix: &TravelTimeMatrix) -> Result<OdFrequency> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let freq = OdFrequency::from_csv_reader(file)?;
    freq.check_shape(matrix)?;
    Ok(freq)
}

fn read_numeric_table<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| NetworkError::Malformed {
            row: i,
            col: 0,
            msg: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| NetworkError::Malformed {
                row: i,
                col: j,
                msg: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(NetworkError::NotFinite { row: i, col: j });
            }
            if v < 0.0 {
                return Err(NetworkError::Negative {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(NetworkError::Empty);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(NetworkError::NotSquare {
                row: i,
                expected: n,
                found: row.len(),
            });
        }
    }
    Ok(rows)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub passengers: usize,
    pub taxis: usize,
    pub window: Seconds,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(passengers: usize, taxis: usize, window: Seconds, seed: u64) -> Result<Self> {
        let spec = Self {
            passengers,
            taxis,
            window,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.passengers == 0 || self.taxis == 0 || self.window == 0 {
            return Err(NetworkError::InvalidScenario(format!(
                "P, C and T must all be >= 1 (got P={}, C={}, T={})",
                self.passengers, self.taxis, self.window
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `P<passengers>_C<taxis>_T<window>`; the seed is not part of the name.
    pub fn name(&self) -> String {
        format_scenario_name(self)
    }
}

pub fn format_scenario_name(spec: &ScenarioSpec) -> String {
    format!("P{}_C{}_T{}", spec.passengers, spec.taxis, spec.window)
}

pub fn parse_scenario_name(name: &str) -> Result<ScenarioSpec> {
    let bad = || NetworkError::BadScenarioName(name.to_string());
    let mut parts = name.split('_');
    let mut field = |prefix: char| -> Result<u64> {
        let part = parts.next().ok_or_else(bad)?;
        let digits = part.strip_prefix(prefix).ok_or_else(bad)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        digits.parse().map_err(|_| bad())
    };
    let p = field('P')?;
    let c = field('C')?;
    let t = field('T')?;
    if parts.next().is_some() {
        return Err(bad());
    }
    ScenarioSpec::new(p as usize, c as usize, t, 0)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassengerRequest {
    pub id: usize,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub request_time: Seconds,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxiInit {
    pub id: usize,
    pub start_zone: ZoneId,
    pub available_at: Seconds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub requests: Vec<PassengerRequest>,
    pub fleet: Vec<TaxiInit>,
    pub matrix_ref: String,
}

impl Scenario {
    pub fn name(&self) -> String {
        self.spec.name()
    }

    /// Checks the structural invariants against the matrix it will run on.
    pub fn validate(&self, matrix: &TravelTimeMatrix) -> Result<()> {
        self.spec.validate()?;
        let bad = |msg: String| Err(NetworkError::InvalidScenario(msg));
        if self.requests.len() != self.spec.passengers {
            return bad(format!(
                "{} requests but spec says {}",
                self.requests.len(),
                self.spec.passengers
            ));
        }
        if self.fleet.len() != self.spec.taxis {
            return bad(format!(
                "{} taxis but spec says {}",
                self.fleet.len(),
                self.spec.taxis
            ));
        }
        for (i, r) in self.requests.iter().enumerate() {
            if r.id != i {
                return bad(format!("request at position {i} has id {}", r.id));
            }
            if !matrix.contains(r.origin) || !matrix.contains(r.destination) {
                return bad(format!("request {i} references a zone outside the matrix"));
            }
            if r.origin == r.destination {
                return bad(format!("request {i} has origin == destination"));
            }
            if r.request_time > self.spec.window {
                return bad(format!("request {i} is after the window"));
            }
            if i > 0 && self.requests[i - 1].request_time > r.request_time {
                return bad("request times are not sorted".into());
            }
        }
        for (i, t) in self.fleet.iter().enumerate() {
            if t.id != i {
                return bad(format!("taxi at position {i} has id {}", t.id));
            }
            if !matrix.contains(t.start_zone) {
                return bad(format!("taxi {i} starts outside the matrix"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Samples off-diagonal OD pairs proportional to the frequency table.
#[derive(Clone, Debug)]
pub struct OdSampler {
    zone_count: usize,
    cells: Vec<(usize, usize)>,
    index: WeightedIndex<f64>,
}

impl OdSampler {
    pub fn new(freq: &OdFrequency) -> Result<Self> {
        let n = freq.zone_count();
        let mut cells = Vec::new();
        let mut weights = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = freq.weight(ZoneId(i), ZoneId(j));
                if i != j && w > 0.0 {
                    cells.push((i, j));
                    weights.push(w);
                }
            }
        }
        let index = WeightedIndex::new(&weights).map_err(|_| NetworkError::NoPositiveWeight)?;
        Ok(Self {
            zone_count: n,
            cells,
            index,
        })
    }

    pub fn zone_count(&self) -> usize {
        self.zone_count
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (ZoneId, ZoneId) {
        let (o, d) = self.cells[self.index.sample(rng)];
        (ZoneId(o), ZoneId(d))
    }
}

/// Draws a scenario: OD pairs proportional to `freq`, request times uniform on
/// `[0, window]` (sorted), taxi start zones proportional to the row marginals,
/// all taxis available at t = 0. Deterministic in `spec.seed`.
pub fn generate_scenario(
    spec: ScenarioSpec,
    freq: &OdFrequency,
    matrix: &TravelTimeMatrix,
) -> Result<Scenario> {
    spec.validate()?;
    freq.check_shape(matrix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sampler = OdSampler::new(freq)?;

    let mut draws: Vec<(Seconds, ZoneId, ZoneId)> = (0..spec.passengers)
        .map(|_| {
            let (o, d) = sampler.sample(&mut rng);
            let t = rng.random_range(0..=spec.window);
            (t, o, d)
        })
        .collect();
    draws.sort_by_key(|&(t, _, _)| t);
    let requests = draws
        .into_iter()
        .enumerate()
        .map(|(id, (request_time, origin, destination))| PassengerRequest {
            id,
            origin,
            destination,
            request_time,
        })
        .collect();

    let marginals = freq.row_marginals();
    let start = WeightedIndex::new(&marginals).map_err(|_| NetworkError::NoPositiveWeight)?;
    let fleet = (0..spec.taxis)
        .map(|id| TaxiInit {
            id,
            start_zone: ZoneId(start.sample(&mut rng)),
            available_at: 0,
        })
        .collect();

    Ok(Scenario {
        spec,
        requests,
        fleet,
        matrix_ref: matrix.digest(),
    })
}

/// A seeded synthetic city for runs without real aggregate data.
///
/// Zones sit on a 5-wide grid; travel time is a fixed pickup overhead plus a
/// per-block cost (east-west blocks are shorter than north-south avenues).
/// OD weights follow a gravity model over random zone attractiveness.
pub fn synthetic_city(zone_count: usize, seed: u64) -> (TravelTimeMatrix, OdFrequency) {
    assert!(zone_count >= 2, "a synthetic city needs at least two zones");
    const WIDTH: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C17E);
    let pos: Vec<(i64, i64)> = (0..zone_count)
        .map(|z| ((z % WIDTH) as i64, (z / WIDTH) as i64))
        .collect();
    let attract: Vec<f64> = (0..zone_count)
        .map(|_| rng.random_range(0.2..1.0f64).powi(2))
        .collect();

    let mut rows = vec![vec![0; zone_count]; zone_count];
    let mut weights = vec![vec![0.0; zone_count]; zone_count];
    for i in 0..zone_count {
        for j in 0..zone_count {
            if i == j {
                continue;
            }
            let dx = (pos[i].0 - pos[j].0).unsigned_abs();
            let dy = (pos[i].1 - pos[j].1).unsigned_abs();
            rows[i][j] = 60 + 120 * dx + 180 * dy;
            weights[i][j] = attract[i] * attract[j] / (1.0 + (dx + dy) as f64);
        }
    }
    let matrix = TravelTimeMatrix::from_rows(rows).expect("synthetic matrix is valid");
    let freq = OdFrequency::from_rows(weights).expect("synthetic frequencies are valid");
    (matrix, freq)
}
