use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    Transformed,
    PulledBack,
}

impl Coordinates {
    fn as_str(self) -> &'static str {
        match self {
            Coordinates::Transformed => "transformed",
            Coordinates::PulledBack => "pulled_back",
        }
    }
}

/// Retained chain states, stored flat and grouped by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    values: Vec<f64>,
    pub eta: f64,
    /// Samples contributed by each chain, in chain order.
    pub chain_lengths: Vec<usize>,
    pub coordinates: Coordinates,
    pub seed: u64,
    pub problem_id: String,
}

impl SampleSet {
    pub fn new(
        dim: usize,
        values: Vec<f64>,
        eta: f64,
        chain_lengths: Vec<usize>,
        coordinates: Coordinates,
        seed: u64,
        problem_id: &str,
    ) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not split into {dim}-vectors",
                values.len()
            )));
        }
        if chain_lengths.iter().sum::<usize>() * dim != values.len() {
            return Err(Error::InvalidArgument("chain lengths do not add up".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NaNDetected("sample set"));
        }
        Ok(SampleSet {
            dim,
            values,
            eta,
            chain_lengths,
            coordinates,
            seed,
            problem_id: problem_id.to_string(),
        })
    }

    /// A single-chain, one-dimensional set, mostly for tests and metrics.
    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        SampleSet::new(1, values, 0.0, vec![n], Coordinates::PulledBack, 0, "")
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_chains(&self) -> usize {
        self.chain_lengths.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat values of chain `c`.
    pub fn chain(&self, c: usize) -> &[f64] {
        let start: usize = self.chain_lengths[..c].iter().sum();
        &self.values[start * self.dim..(start + self.chain_lengths[c]) * self.dim]
    }

    pub(crate) fn replace_values(&mut self, values: Vec<f64>, coordinates: Coordinates) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch("replacement has a different size".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NaNDetected("sample set"));
        }
        self.values = values;
        self.coordinates = coordinates;
        Ok(())
    }

    /// Samples of the even-indexed and odd-indexed chains. With a single chain
    /// the two halves are its first and second half.
    pub fn split_halves(&self) -> (SampleSet, SampleSet) {
        let mut parts: [(Vec<f64>, Vec<usize>); 2] = Default::default();
        if self.n_chains() >= 2 {
            for c in 0..self.n_chains() {
                let p = &mut parts[c % 2];
                p.0.extend_from_slice(self.chain(c));
                p.1.push(self.chain_lengths[c]);
            }
        } else {
            let n = self.len();
            let h = n / 2;
            parts[0] = (self.values[..h * self.dim].to_vec(), vec![h]);
            parts[1] = (self.values[h * self.dim..].to_vec(), vec![n - h]);
        }
        let [a, b] = parts;
        let make = |(v, l): (Vec<f64>, Vec<usize>)| SampleSet {
            values: v,
            chain_lengths: l,
            ..self.clone_meta()
        };
        (make(a), make(b))
    }

    fn clone_meta(&self) -> SampleSet {
        SampleSet {
            dim: self.dim,
            values: Vec::new(),
            eta: self.eta,
            chain_lengths: Vec::new(),
            coordinates: self.coordinates,
            seed: self.seed,
            problem_id: self.problem_id.clone(),
        }
    }

    /// Columnar text: a `#` header line of `key=value` pairs, then one sample
    /// per line with space-separated components.
    pub fn to_text(&self) -> String {
        let lengths: Vec<String> = self.chain_lengths.iter().map(|l| l.to_string()).collect();
        let mut s = String::with_capacity(self.values.len() * 20);
        let _ = writeln!(
            s,
            "# zvonkin-samples v1 dim={} eta={} seed={} coordinates={} problem={} chains={}",
            self.dim,
            self.eta,
            self.seed,
            self.coordinates.as_str(),
            self.problem_id,
            lengths.join(",")
        );
        for x in self.values.chunks(self.dim) {
            let row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("sample file: {what}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let rest = header
            .strip_prefix("# zvonkin-samples v1 ")
            .ok_or_else(|| bad("missing or unsupported header"))?;
        let mut dim = None;
        let mut eta = None;
        let mut seed = None;
        let mut coords = None;
        let mut problem = String::new();
        let mut lengths = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("malformed header field"))?;
            match k {
                "dim" => dim = v.parse::<usize>().ok(),
                "eta" => eta = v.parse::<f64>().ok(),
                "seed" => seed = v.parse::<u64>().ok(),
                "coordinates" => {
                    coords = match v {
                        "transformed" => Some(Coordinates::Transformed),
                        "pulled_back" => Some(Coordinates::PulledBack),
                        _ => None,
                    }
                }
                "problem" => problem = v.to_string(),
                "chains" => {
                    lengths = v
                        .split(',')
                        .filter(|t| !t.is_empty())
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .ok()
                }
                _ => {}
            }
        }
        let dim = dim.ok_or_else(|| bad("missing dim"))?;
        let mut values = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_>>()?;
            if row.len() != dim {
                return Err(bad("row width does not match dim"));
            }
            values.extend(row);
        }
        SampleSet::new(
            dim,
            values,
            eta.ok_or_else(|| bad("missing eta"))?,
            lengths.ok_or_else(|| bad("missing chains"))?,
            coords.ok_or_else(|| bad("missing coordinates"))?,
            seed.ok_or_else(|| bad("missing seed"))?,
            &problem,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SampleSet::from_text(&text)
    }
}
