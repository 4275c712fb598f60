use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{binary_strings, tomita_dfa, Dfa, GrammarId, Label};
use crate::error::{Error, Result};

/// Lengths up to this are enumerated exhaustively instead of sampled.
const ENUMERATE_MAX_LEN: usize = 16;
/// Rejection-sampling budget per wanted string at longer lengths.
const ATTEMPTS_PER_STRING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub string: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }

    fn bump(&mut self, label: Label) {
        match label {
            Label::Positive => self.positive += 1,
            Label::Negative => self.negative += 1,
        }
    }
}

/// Binary strings with labels and an optional train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    /// `None` for datasets that were not generated from a Tomita oracle.
    pub grammar: Option<GrammarId>,
    pub samples: Vec<Sample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl LabeledDataset {
    /// Builds an unsplit dataset, rejecting duplicate strings.
    pub fn new(grammar: Option<GrammarId>, samples: Vec<Sample>) -> Result<LabeledDataset> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.string.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate string {:?}", s.string)));
            }
        }
        Ok(LabeledDataset {
            grammar,
            samples,
            train: Vec::new(),
            test: Vec::new(),
        })
    }

    /// Builds a dataset with an explicit partition. Every sample must be in
    /// exactly one side or in neither.
    pub fn with_split(
        grammar: Option<GrammarId>,
        samples: Vec<Sample>,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<LabeledDataset> {
        let mut d = LabeledDataset::new(grammar, samples)?;
        let mut owner = vec![None; d.samples.len()];
        for (side, idx) in [(Split::Train, &train), (Split::Test, &test)] {
            for &i in idx {
                if i >= owner.len() {
                    return Err(Error::InvalidInput(format!("split index {i} out of range")));
                }
                if owner[i].replace(side).is_some() {
                    return Err(Error::InvalidInput(format!("sample {i} assigned twice")));
                }
            }
        }
        d.train = train;
        d.test = test;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_split(&self) -> bool {
        !self.train.is_empty() || !self.test.is_empty()
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn split_samples(&self, split: Split) -> impl Iterator<Item = &Sample> + '_ {
        self.indices(split).iter().map(move |&i| &self.samples[i])
    }

    pub fn split_of(&self, index: usize) -> Option<Split> {
        if self.train.contains(&index) {
            Some(Split::Train)
        } else if self.test.contains(&index) {
            Some(Split::Test)
        } else {
            None
        }
    }

    /// Split assignment for every sample, in sample order.
    pub fn split_column(&self) -> Vec<Option<Split>> {
        let mut col = vec![None; self.samples.len()];
        for &i in &self.train {
            col[i] = Some(Split::Train);
        }
        for &i in &self.test {
            col[i] = Some(Split::Test);
        }
        col
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for s in &self.samples {
            c.bump(s.label);
        }
        c
    }

    pub fn split_counts(&self, split: Split) -> ClassCounts {
        let mut c = ClassCounts::default();
        for s in self.split_samples(split) {
            c.bump(s.label);
        }
        c
    }
}

fn random_string(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| if rng.gen::<bool>() { '1' } else { '0' })
        .collect()
}

/// Up to `want` distinct strings of length `len` whose oracle label is
/// `label`, excluding anything already in `taken`.
fn draw(
    oracle: &Dfa,
    label: Label,
    len: usize,
    want: usize,
    taken: &HashSet<String>,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    if want == 0 {
        return Vec::new();
    }
    let is_label = |x: &str| oracle.label(x).expect("binary string") == label;
    if len <= ENUMERATE_MAX_LEN {
        let mut pool: Vec<String> = binary_strings(len)
            .filter(|x| is_label(x) && !taken.contains(x))
            .collect();
        pool.shuffle(rng);
        pool.truncate(want);
        return pool;
    }
    let mut out = Vec::new();
    let mut local = HashSet::new();
    for _ in 0..want * ATTEMPTS_PER_STRING {
        let x = random_string(rng, len);
        if is_label(&x) && !taken.contains(&x) && local.insert(x.clone()) {
            out.push(x);
            if out.len() == want {
                break;
            }
        }
    }
    out
}

/// Labeled strings drawn uniformly per length from a Tomita oracle.
///
/// Each class gets up to `max_per_class` strings, spread as evenly as the
/// language allows across `lengths`; quota a length cannot fill carries over
/// to the remaining lengths. Classes that are empty at some length (G2 has no
/// odd-length positives) simply contribute fewer strings.
pub fn generate_dataset(
    g: GrammarId,
    lengths: RangeInclusive<usize>,
    max_per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if lengths.is_empty() {
        return Err(Error::InvalidInput(format!("empty length range {lengths:?}")));
    }
    let oracle = tomita_dfa(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = HashSet::new();
    let mut samples = Vec::new();
    let lens: Vec<usize> = lengths.collect();
    for label in [Label::Positive, Label::Negative] {
        let mut remaining = max_per_class;
        for (i, &len) in lens.iter().enumerate() {
            let lengths_left = lens.len() - i;
            let quota = remaining.div_ceil(lengths_left);
            let got = draw(&oracle, label, len, quota, &taken, &mut rng);
            remaining -= got.len();
            for x in got {
                debug_assert_eq!(oracle.label(&x).unwrap(), label);
                taken.insert(x.clone());
                samples.push(Sample { string: x, label });
            }
        }
    }
    samples.shuffle(&mut rng);
    LabeledDataset::new(Some(g), samples)
}

/// Stratified train/test partition; each class is split so the training
/// side receives `round(fraction * class_size)` of it.
pub fn split_dataset(d: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if d.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..d.len()).filter(|&i| d.samples[i].label == label).collect();
        idx.shuffle(&mut rng);
        let cut = (train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(format!(
            "fraction {train_fraction} leaves an empty side ({} train / {} test)",
            train.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(LabeledDataset {
        train,
        test,
        ..d.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gid(g: u8) -> GrammarId {
        GrammarId::new(g).unwrap()
    }

    #[test]
    fn grammar1_positives_are_all_ones() {
        let d = generate_dataset(gid(1), 1..=4, 100, 7).unwrap();
        let mut pos: Vec<&str> = d
            .samples
            .iter()
            .filter(|s| s.label == Label::Positive)
            .map(|s| s.string.as_str())
            .collect();
        pos.sort();
        assert_eq!(pos, ["1", "11", "111", "1111"]);
        // every non-1* string of length 1..4
        assert_eq!(d.class_counts().negative, 2 + 4 + 8 + 16 - 4);
    }

    #[test]
    fn grammar5_length_two() {
        let d = generate_dataset(gid(5), 2..=2, 10, 1).unwrap();
        for s in &d.samples {
            if s.label == Label::Positive {
                assert!(s.string == "00" || s.string == "11");
            }
        }
        assert_eq!(d.class_counts(), ClassCounts { positive: 2, negative: 2 });
    }

    #[test]
    fn grammar2_odd_lengths_have_no_positives() {
        let d = generate_dataset(gid(2), 3..=3, 50, 3).unwrap();
        assert_eq!(d.class_counts().positive, 0);
        assert_eq!(d.class_counts().negative, 8);
    }

    #[test]
    fn long_lengths_are_sampled() {
        let d = generate_dataset(gid(4), 30..=32, 60, 11).unwrap();
        let c = d.class_counts();
        assert_eq!(c.positive, 60);
        assert_eq!(c.negative, 60);
        assert!(d.samples.iter().all(|s| (30..=32).contains(&s.string.len())));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_dataset(gid(3), 1..=10, 200, 5).unwrap();
        let b = generate_dataset(gid(3), 1..=10, 200, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(gid(3), 1..=10, 200, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_match_oracle() {
        for g in GrammarId::all() {
            let oracle = tomita_dfa(g);
            let d = generate_dataset(g, 0..=12, 300, 2).unwrap();
            let mut seen = HashSet::new();
            for s in &d.samples {
                assert_eq!(oracle.label(&s.string).unwrap(), s.label);
                assert!(seen.insert(&s.string));
            }
        }
    }

    #[test]
    fn empty_range_is_an_error() {
        #[allow(clippy::reversed_empty_ranges)]
        let r = generate_dataset(gid(1), 5..=4, 10, 0);
        assert!(r.is_err());
    }

    fn numbered(n_pos: usize, n_neg: usize) -> LabeledDataset {
        let samples = (0..n_pos + n_neg)
            .map(|i| Sample {
                string: format!("{i:b}"),
                label: Label::from(i < n_pos),
            })
            .collect();
        LabeledDataset::new(None, samples).unwrap()
    }

    #[test]
    fn split_sizes_and_stratification() {
        let d = numbered(50, 50);
        let s = split_dataset(&d, 0.8, 9).unwrap();
        assert_eq!(s.train.len(), 80);
        assert_eq!(s.test.len(), 20);
        assert_eq!(s.split_counts(Split::Train).positive, 40);
        let all: HashSet<usize> = s.train.iter().chain(&s.test).copied().collect();
        assert_eq!(all.len(), 100);
        assert_eq!(s, split_dataset(&d, 0.8, 9).unwrap());
    }

    #[test]
    fn split_all_positive() {
        let d = numbered(10, 0);
        let s = split_dataset(&d, 0.7, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (7, 3));
    }

    #[test]
    fn split_degenerate_fraction() {
        let d = numbered(1, 0);
        assert!(split_dataset(&d, 0.8, 0).is_err());
        assert!(split_dataset(&numbered(5, 5), 1.0, 0).is_err());
        assert!(split_dataset(&numbered(5, 5), 0.0, 0).is_err());
        assert!(split_dataset(&numbered(0, 0), 0.5, 0).is_err());
    }

    #[test]
    fn explicit_split_validation() {
        let s = numbered(2, 2).samples;
        assert!(LabeledDataset::with_split(None, s.clone(), vec![0, 1], vec![1]).is_err());
        assert!(LabeledDataset::with_split(None, s.clone(), vec![0], vec![9]).is_err());
        let d = LabeledDataset::with_split(None, s, vec![0, 2], vec![1]).unwrap();
        assert_eq!(d.split_column(), [Some(Split::Train), Some(Split::Test), Some(Split::Train), None]);
    }
}
