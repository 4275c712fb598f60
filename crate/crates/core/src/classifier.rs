//! Sequential binary classifiers over `{0,1}` strings.

use crate::automata::{Dfa, Label};

/// Maps a `'0'`/`'1'` byte to its alphabet index.
///
/// # Panics
/// On any other byte. Strings entering the pipeline are validated when
/// datasets are built or loaded.
#[inline]
pub fn symbol(b: u8) -> usize {
    match b {
        b'0' => 0,
        b'1' => 1,
        _ => panic!("non-binary symbol {:?}", b as char),
    }
}

pub fn is_binary(x: &str) -> bool {
    x.bytes().all(|b| b == b'0' || b == b'1')
}

/// A left-to-right recognizer whose decision depends only on the state
/// reached after the last symbol. Exposing the state lets callers resume
/// from a cached prefix.
pub trait Recognizer: Sync {
    type State: Clone + Send;

    fn initial(&self) -> Self::State;

    fn step(&self, state: &Self::State, symbol: usize) -> Self::State;

    fn decide(&self, state: &Self::State) -> Label;

    fn run_from(&self, state: &Self::State, suffix: &[u8]) -> Self::State {
        suffix
            .iter()
            .fold(state.clone(), |s, &b| self.step(&s, symbol(b)))
    }

    fn classify(&self, x: &str) -> Label {
        self.decide(&self.run_from(&self.initial(), x.as_bytes()))
    }
}

impl Recognizer for Dfa {
    type State = usize;

    fn initial(&self) -> usize {
        self.start()
    }

    fn step(&self, state: &usize, symbol: usize) -> usize {
        self.next(*state, symbol)
    }

    fn decide(&self, state: &usize) -> Label {
        Label::from(self.is_accepting(*state))
    }
}

impl<R: Recognizer + ?Sized> Recognizer for &R {
    type State = R::State;

    fn initial(&self) -> R::State {
        (**self).initial()
    }

    fn step(&self, state: &R::State, symbol: usize) -> R::State {
        (**self).step(state, symbol)
    }

    fn decide(&self, state: &R::State) -> Label {
        (**self).decide(state)
    }
}

/// Flips every decision of the wrapped recognizer.
#[derive(Debug, Clone)]
pub struct Complement<R>(pub R);

impl<R: Recognizer> Recognizer for Complement<R> {
    type State = R::State;

    fn initial(&self) -> R::State {
        self.0.initial()
    }

    fn step(&self, state: &R::State, symbol: usize) -> R::State {
        self.0.step(state, symbol)
    }

    fn decide(&self, state: &R::State) -> Label {
        self.0.decide(state).flip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{tomita_dfa, GrammarId};

    #[test]
    fn dfa_recognizer_matches_label() {
        let d = tomita_dfa(GrammarId::new(3).unwrap());
        for x in ["", "10", "100", "1101", "0111000"] {
            assert_eq!(d.classify(x), d.label(x).unwrap());
            assert_eq!(Complement(&d).classify(x), d.label(x).unwrap().flip());
        }
    }

    #[test]
    #[should_panic(expected = "non-binary")]
    fn foreign_byte_panics() {
        let d = tomita_dfa(GrammarId::new(1).unwrap());
        d.classify("12");
    }
}
