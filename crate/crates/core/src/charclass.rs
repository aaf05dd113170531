use serde::{Deserialize, Serialize};

/// The four character classes of a legal password character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CharClass {
    Digit,
    Upper,
    Lower,
    Special,
}

impl CharClass {
    /// All classes in canonical signature order (D, U, L, S).
    pub const ALL: [CharClass; 4] = [
        CharClass::Digit,
        CharClass::Upper,
        CharClass::Lower,
        CharClass::Special,
    ];

    /// Classifies a legal byte (0x21..=0x7E). Returns `None` for anything else.
    #[inline]
    pub fn of(byte: u8) -> Option<CharClass> {
        match byte {
            b'0'..=b'9' => Some(CharClass::Digit),
            b'A'..=b'Z' => Some(CharClass::Upper),
            b'a'..=b'z' => Some(CharClass::Lower),
            0x21..=0x7E => Some(CharClass::Special),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            CharClass::Digit => 'D',
            CharClass::Upper => 'U',
            CharClass::Lower => 'L',
            CharClass::Special => 'S',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// True for printable ASCII excluding space.
#[inline]
pub fn is_legal_byte(byte: u8) -> bool {
    (0x21..=0x7E).contains(&byte)
}

/// Position of the first illegal byte, if any.
pub fn first_illegal(bytes: &[u8]) -> Option<usize> {
    bytes.iter().position(|&b| !is_legal_byte(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_partition_legal_range() {
        for b in 0u8..=255 {
            assert_eq!(CharClass::of(b).is_some(), is_legal_byte(b), "byte {b:#x}");
        }
        assert_eq!(CharClass::of(b' '), None);
        assert_eq!(CharClass::of(b'~'), Some(CharClass::Special));
        assert_eq!(CharClass::of(b'!'), Some(CharClass::Special));
    }
}
