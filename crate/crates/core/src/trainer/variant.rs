//! The eight ablation variants and their component flags.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantFlags {
    pub has_context: bool,
    pub has_aux: bool,
    pub has_discriminators: bool,
    pub has_classifier: bool,
}

impl VariantId {
    pub const ALL: [VariantId; 8] = [
        VariantId::A,
        VariantId::B,
        VariantId::C,
        VariantId::D,
        VariantId::E,
        VariantId::F,
        VariantId::G,
        VariantId::H,
    ];

    pub fn letter(self) -> char {
        match self {
            VariantId::A => 'a',
            VariantId::B => 'b',
            VariantId::C => 'c',
            VariantId::D => 'd',
            VariantId::E => 'e',
            VariantId::F => 'f',
            VariantId::G => 'g',
            VariantId::H => 'h',
        }
    }

    pub fn from_letter(c: char) -> Result<Self> {
        match c.to_ascii_lowercase() {
            'a' => Ok(VariantId::A),
            'b' => Ok(VariantId::B),
            'c' => Ok(VariantId::C),
            'd' => Ok(VariantId::D),
            'e' => Ok(VariantId::E),
            'f' => Ok(VariantId::F),
            'g' => Ok(VariantId::G),
            'h' => Ok(VariantId::H),
            other => Err(Error::Usage(format!("unknown variant {other:?}, expected a..h"))),
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            VariantId::A => "supervised rgb generator",
            VariantId::B => "supervised rgb generator + context",
            VariantId::C => "supervised rgb + aux generators + context",
            VariantId::D => "conditional GAN",
            VariantId::E => "unitary GAN - context",
            VariantId::F => "unitary GAN - classifier reinforcement",
            VariantId::G => "unitary GAN",
            VariantId::H => "coupled action GAN",
        }
    }

    pub fn flags(self) -> VariantFlags {
        // (context, aux, discriminators, classifier)
        let t = match self {
            VariantId::A => (false, false, false, true),
            VariantId::B => (true, false, false, true),
            VariantId::C => (true, true, false, true),
            VariantId::D => (false, false, true, false),
            VariantId::E => (false, false, true, true),
            VariantId::F => (true, false, true, false),
            VariantId::G => (true, false, true, true),
            VariantId::H => (true, true, true, true),
        };
        VariantFlags {
            has_context: t.0,
            has_aux: t.1,
            has_discriminators: t.2,
            has_classifier: t.3,
        }
    }

    /// The dual-tap supervised coupling feeds the classifier from both
    /// generators (six taps instead of three).
    pub fn dual_tap_classifier(self) -> bool {
        self == VariantId::C
    }
}

impl std::fmt::Display for VariantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_table_matches_the_ablation_definitions() {
        let rows: [(VariantId, (bool, bool, bool, bool)); 8] = [
            (VariantId::A, (false, false, false, true)),
            (VariantId::B, (true, false, false, true)),
            (VariantId::C, (true, true, false, true)),
            (VariantId::D, (false, false, true, false)),
            (VariantId::E, (false, false, true, true)),
            (VariantId::F, (true, false, true, false)),
            (VariantId::G, (true, false, true, true)),
            (VariantId::H, (true, true, true, true)),
        ];
        for (v, (ctx, aux, disc, cls)) in rows {
            let f = v.flags();
            assert_eq!(
                (f.has_context, f.has_aux, f.has_discriminators, f.has_classifier),
                (ctx, aux, disc, cls),
                "variant {v}"
            );
        }
        // Spot checks against the definitions: a has no discriminator and no
        // context; d has a discriminator but no context and no classifier;
        // f keeps discriminator and context but drops the classifier;
        // h has everything.
        assert!(!VariantId::A.flags().has_discriminators && !VariantId::A.flags().has_context);
        assert!(VariantId::D.flags().has_discriminators && !VariantId::D.flags().has_context);
        assert!(!VariantId::D.flags().has_classifier);
        assert!(VariantId::F.flags().has_discriminators && VariantId::F.flags().has_context);
        assert!(!VariantId::F.flags().has_classifier);
        let h = VariantId::H.flags();
        assert!(h.has_context && h.has_aux && h.has_discriminators && h.has_classifier);
    }

    #[test]
    fn letters_round_trip() {
        for v in VariantId::ALL {
            assert_eq!(VariantId::from_letter(v.letter()).unwrap(), v);
        }
        assert!(VariantId::from_letter('z').is_err());
    }
}
