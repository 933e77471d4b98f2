//! Generation-based fuzzer for operand pairs.
//!
//! Randomness comes from ChaCha8 seeded from the 64-bit campaign seed. The
//! data, constant and sampling streams are separate ChaCha streams of the
//! same key, so changing `count` never changes the drawn `k`.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::Value;

pub const PRNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64; stream 0 data, 1 constants, 2 sampling)";

const DATA_STREAM: u64 = 0;
const CONSTANT_STREAM: u64 = 1;
const SAMPLING_STREAM: u64 = 2;

/// Largest corpus exhaustive mode will enumerate.
pub const MAX_EXHAUSTIVE: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distribution {
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuzzMode {
    Random,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub count: u64,
    pub domain_min: Value,
    pub domain_max: Value,
    pub seed: u64,
    pub distribution: Distribution,
    pub mode: FuzzMode,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            count: 100,
            domain_min: Value(0),
            domain_max: Value(9),
            seed: 0,
            distribution: Distribution::Uniform,
            mode: FuzzMode::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestDatum {
    pub id: u64,
    pub a: Value,
    pub b: Value,
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn sampling_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, SAMPLING_STREAM)
}

pub fn generate(config: &FuzzConfig) -> Result<Vec<TestDatum>> {
    let (lo, hi) = (config.domain_min.get(), config.domain_max.get());
    if lo > hi {
        return Err(Error::InvalidRange { lo, hi });
    }
    match config.mode {
        FuzzMode::Random => {
            if config.count == 0 {
                return Err(Error::ZeroCount);
            }
            let mut rng = stream_rng(config.seed, DATA_STREAM);
            Ok((0..config.count)
                .map(|id| {
                    let a = rng.random_range(lo..=hi);
                    let b = rng.random_range(lo..=hi);
                    TestDatum { id, a: Value(a), b: Value(b) }
                })
                .collect())
        }
        FuzzMode::Exhaustive => {
            let width = (hi as i128 - lo as i128 + 1) as u128;
            if width.saturating_mul(width) > MAX_EXHAUSTIVE {
                return Err(Error::Config(format!(
                    "exhaustive domain [{lo}, {hi}] has {width}^2 pairs, more than {MAX_EXHAUSTIVE}"
                )));
            }
            let mut out = Vec::with_capacity((width * width) as usize);
            for a in lo..=hi {
                for b in lo..=hi {
                    out.push(TestDatum { id: out.len() as u64, a: Value(a), b: Value(b) });
                }
            }
            Ok(out)
        }
    }
}

/// Draws the campaign constant once, uniformly in `[lo, hi]`.
pub fn draw_constant_k(seed: u64, lo: Value, hi: Value) -> Result<Value> {
    if lo > hi {
        return Err(Error::InvalidRange { lo: lo.get(), hi: hi.get() });
    }
    let mut rng = stream_rng(seed, CONSTANT_STREAM);
    Ok(Value(rng.random_range(lo.get()..=hi.get())))
}

pub fn write_corpus<W: Write>(out: W, corpus: &[TestDatum]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "a", "b"])?;
    for d in corpus {
        w.write_record([d.id.to_string(), d.a.to_string(), d.b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus<R: Read>(input: R, path: &Path) -> Result<Vec<TestDatum>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "a", "b"] {
        return Err(Error::format(path, 1, "expected header id,a,b"));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |j: usize| row.get(j).unwrap_or("");
        let id: u64 = field(0).parse().map_err(|_| Error::format(path, line, "bad id"))?;
        let a: Value = field(1).parse().map_err(|_| Error::format(path, line, "bad operand a"))?;
        let b: Value = field(2).parse().map_err(|_| Error::format(path, line, "bad operand b"))?;
        if id != out.len() as u64 {
            return Err(Error::format(path, line, format!("ids must be dense from 0, found {id}")));
        }
        out.push(TestDatum { id, a, b });
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<TestDatum>> {
    let file = std::fs::File::open(path)?;
    read_corpus(std::io::BufReader::new(file), path)
}
