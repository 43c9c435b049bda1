//! File compression with a mixture predictor. Binary alphabets consume the
//! input bit by bit (most significant first); alphabets of up to 256
//! symbols consume whole bytes, each of which must be a valid symbol.

use anyhow::{bail, ensure, Result};
use mixred::coder::{decode, encode_with_stats, CodedBitstream, EncodeStats};
use mixred::families::FiniteFamily;
use mixred::mixtures::{MixturePredictor, SequentialPredictor};

use crate::config::{ExperimentConfig, FamilySpec};
use crate::run::build_mixture;

fn family(cfg: &ExperimentConfig) -> Result<&FiniteFamily> {
    match &cfg.family {
        FamilySpec::Finite { family } => Ok(family),
        _ => bail!("compression needs a finite-alphabet family with a continuous prior"),
    }
}

fn predictor(cfg: &ExperimentConfig, horizon: usize) -> Result<MixturePredictor> {
    let p = build_mixture(family(cfg)?, &cfg.prior, cfg.quadrature_nodes, horizon.max(1))?;
    ensure!(
        p.alphabet_size() <= 256,
        "alphabet of {} symbols does not fit in a byte",
        p.alphabet_size()
    );
    Ok(p)
}

fn to_symbols(bytes: &[u8], k: usize) -> Result<Vec<usize>> {
    if k == 2 {
        return Ok(bytes
            .iter()
            .flat_map(|&b| (0..8).rev().map(move |i| usize::from((b >> i) & 1)))
            .collect());
    }
    if let Some(pos) = bytes.iter().position(|&b| b as usize >= k) {
        bail!(
            "byte {} at offset {pos} is not a symbol of the {k}-letter alphabet",
            bytes[pos]
        );
    }
    Ok(bytes.iter().map(|&b| b as usize).collect())
}

fn from_symbols(symbols: &[usize], k: usize) -> Result<Vec<u8>> {
    if k == 2 {
        ensure!(
            symbols.len().is_multiple_of(8),
            "{} bits do not fill whole bytes",
            symbols.len()
        );
        return Ok(symbols
            .chunks(8)
            .map(|c| c.iter().fold(0u8, |acc, &s| (acc << 1) | s as u8))
            .collect());
    }
    Ok(symbols.iter().map(|&s| s as u8).collect())
}

fn symbol_count(len: usize, k: usize) -> usize {
    if k == 2 {
        8 * len
    } else {
        len
    }
}

pub fn compress(cfg: &ExperimentConfig, input: &[u8]) -> Result<(Vec<u8>, EncodeStats)> {
    // The alphabet does not depend on the horizon.
    let k = predictor(cfg, 1)?.alphabet_size();
    let p = predictor(cfg, symbol_count(input.len(), k))?;
    let symbols = to_symbols(input, k)?;
    let (stream, stats) = encode_with_stats(&p, &symbols)?;
    Ok((stream.to_bytes(), stats))
}

pub fn decompress(cfg: &ExperimentConfig, input: &[u8]) -> Result<Vec<u8>> {
    let stream = CodedBitstream::from_bytes(input)?;
    let p = predictor(cfg, stream.n as usize)?;
    let symbols = decode(&p, &stream)?;
    from_symbols(&symbols, p.alphabet_size())
}
