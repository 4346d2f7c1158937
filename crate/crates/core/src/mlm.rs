//! Masked-LM training instances.
//!
//! Exactly `round(rate * n)` of the `n` non-special positions of a sequence are
//! chosen uniformly without replacement.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{Vocabulary, MASK_TOKEN};

/// Label value at positions that carry no prediction target.
pub const IGNORE_LABEL: i64 = -100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Every selected position becomes `[MASK]`.
    #[default]
    #[serde(alias = "pure")]
    PureMask,
    /// Selected positions become `[MASK]` 80% of the time, a random
    /// non-special token 10% and stay unchanged 10%.
    #[serde(rename = "bert_80_10_10", alias = "bert")]
    Bert801010,
}

impl fmt::Display for MaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskMode::PureMask => "pure",
            MaskMode::Bert801010 => "bert",
        })
    }
}

impl FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure" | "pure_mask" => Ok(MaskMode::PureMask),
            "bert" | "bert_80_10_10" => Ok(MaskMode::Bert801010),
            other => Err(Error::invalid(format!("unknown mask mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedInstance {
    pub input_ids: Vec<u32>,
    /// Original id at each masked position, [`IGNORE_LABEL`] elsewhere.
    pub labels: Vec<i64>,
    /// Ascending.
    pub mask_positions: Vec<usize>,
}

impl MaskedInstance {
    /// Put the labels back over the input ids.
    pub fn reconstruct(&self) -> Vec<u32> {
        let mut ids = self.input_ids.clone();
        for &p in &self.mask_positions {
            ids[p] = self.labels[p] as u32;
        }
        ids
    }
}

/// Number of positions masked out of `maskable` at `rate`.
pub fn mask_count(rate: f64, maskable: usize) -> usize {
    ((rate * maskable as f64).round() as usize).min(maskable)
}

pub fn mask_tokens(
    ids: &[u32],
    vocab: &Vocabulary,
    rate: f64,
    seed: u64,
    mode: MaskMode,
) -> Result<MaskedInstance> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("mask rate must be in [0, 1], got {rate}")));
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocab.len()) {
        return Err(Error::IdOutOfRange { id, len: vocab.len() });
    }

    let maskable: Vec<usize> = (0..ids.len()).filter(|&i| !vocab.is_special_id(ids[i])).collect();
    let count = mask_count(rate, maskable.len());

    let mut input_ids = ids.to_vec();
    let mut labels = vec![IGNORE_LABEL; ids.len()];
    if count == 0 {
        return Ok(MaskedInstance {
            input_ids,
            labels,
            mask_positions: Vec::new(),
        });
    }
    let mask_id = vocab
        .mask_id()
        .ok_or_else(|| Error::MissingSpecial(MASK_TOKEN.to_owned()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = index::sample(&mut rng, maskable.len(), count)
        .into_iter()
        .map(|k| maskable[k])
        .collect();
    positions.sort_unstable();

    let regular = vocab.len() - vocab.special_ids().len();
    for &p in &positions {
        labels[p] = ids[p] as i64;
        input_ids[p] = match mode {
            MaskMode::PureMask => mask_id,
            MaskMode::Bert801010 => {
                let r: f64 = rng.gen();
                if r < 0.8 || regular == 0 {
                    mask_id
                } else if r < 0.9 {
                    nth_regular_id(vocab, rng.gen_range(0..regular))
                } else {
                    ids[p]
                }
            }
        };
    }

    Ok(MaskedInstance {
        input_ids,
        labels,
        mask_positions: positions,
    })
}

/// The `n`-th id that is not a special token.
fn nth_regular_id(vocab: &Vocabulary, n: usize) -> u32 {
    let mut id = n as u32;
    for &s in vocab.special_ids() {
        if s <= id {
            id += 1;
        } else {
            break;
        }
    }
    id
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for the sequence at `index` under a global seed.
pub fn sequence_seed(global_seed: u64, index: u64) -> u64 {
    splitmix64(global_seed ^ splitmix64(index))
}

#[derive(Serialize)]
struct Record<'a> {
    index: usize,
    seed: u64,
    #[serde(flatten)]
    instance: &'a MaskedInstance,
}

/// Mask every sequence with its own derived seed. Output order and content do
/// not depend on the thread count.
pub fn mask_sequences(
    sequences: &[Vec<u32>],
    vocab: &Vocabulary,
    rate: f64,
    seed: u64,
    mode: MaskMode,
) -> Result<Vec<MaskedInstance>> {
    sequences
        .par_iter()
        .enumerate()
        .map(|(i, ids)| mask_tokens(ids, vocab, rate, sequence_seed(seed, i as u64), mode))
        .collect()
}

/// JSON lines `{index, seed, input_ids, labels, mask_positions}`.
pub fn write_instances<W: Write>(
    instances: &[MaskedInstance],
    global_seed: u64,
    mut out: W,
) -> io::Result<()> {
    for (index, instance) in instances.iter().enumerate() {
        let record = Record {
            index,
            seed: sequence_seed(global_seed, index as u64),
            instance,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        let mut tokens = vec![
            "[PAD]".to_owned(),
            "[UNK]".into(),
            "[CLS]".into(),
            "[SEP]".into(),
            "[MASK]".into(),
        ];
        tokens.extend((0..30).map(|i| format!("w{i}")));
        Vocabulary::new(tokens, None).unwrap()
    }

    #[test]
    fn rate_zero_is_identity() {
        let ids = [2, 5, 6, 7, 3];
        let m = mask_tokens(&ids, &vocab(), 0.0, 1, MaskMode::PureMask).unwrap();
        assert_eq!(m.input_ids, ids);
        assert!(m.labels.iter().all(|&l| l == IGNORE_LABEL));
        assert!(m.mask_positions.is_empty());
    }

    #[test]
    fn rate_one_masks_everything_but_specials() {
        let ids = [2, 5, 6, 7, 8, 3];
        let m = mask_tokens(&ids, &vocab(), 1.0, 1, MaskMode::PureMask).unwrap();
        assert_eq!(m.mask_positions, [1, 2, 3, 4]);
        assert_eq!(m.input_ids, [2, 4, 4, 4, 4, 3]);
        assert_eq!(m.labels, [IGNORE_LABEL, 5, 6, 7, 8, IGNORE_LABEL]);
        assert_eq!(m.reconstruct(), ids);
    }

    #[test]
    fn exact_count() {
        let ids: Vec<u32> = (5..25).collect();
        let m = mask_tokens(&ids, &vocab(), 0.15, 9, MaskMode::PureMask).unwrap();
        assert_eq!(m.mask_positions.len(), 3);
        assert_eq!(mask_count(0.15, 20), 3);
    }

    #[test]
    fn only_specials() {
        let m = mask_tokens(&[2, 1, 3], &vocab(), 0.5, 0, MaskMode::PureMask).unwrap();
        assert!(m.mask_positions.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let ids: Vec<u32> = (5..35).collect();
        let v = vocab();
        let a = mask_tokens(&ids, &v, 0.3, 42, MaskMode::Bert801010).unwrap();
        let b = mask_tokens(&ids, &v, 0.3, 42, MaskMode::Bert801010).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reconstruct(), ids);
    }

    #[test]
    fn bert_mode_never_inserts_specials_other_than_mask() {
        let v = vocab();
        let ids: Vec<u32> = (5..35).collect();
        for seed in 0..200 {
            let m = mask_tokens(&ids, &v, 0.5, seed, MaskMode::Bert801010).unwrap();
            for &p in &m.mask_positions {
                let id = m.input_ids[p];
                assert!(id == 4 || !v.is_special_id(id));
            }
        }
    }

    #[test]
    fn regular_id_enumeration() {
        let v = vocab();
        let all: Vec<u32> = (0..30).map(|n| nth_regular_id(&v, n)).collect();
        assert_eq!(all, (5..35).collect::<Vec<u32>>());
    }

    #[test]
    fn errors() {
        let v = vocab();
        assert!(mask_tokens(&[5], &v, 1.5, 0, MaskMode::PureMask)
            .unwrap_err()
            .is_usage());
        assert!(matches!(
            mask_tokens(&[500], &v, 0.5, 0, MaskMode::PureMask),
            Err(Error::IdOutOfRange { id: 500, .. })
        ));
        let no_mask = Vocabulary::from_tokens(["[UNK]", "a"]).unwrap();
        assert!(matches!(
            mask_tokens(&[1, 1], &no_mask, 1.0, 0, MaskMode::PureMask),
            Err(Error::MissingSpecial(_))
        ));
    }
}
