//! Identity-term templates for the unbiased test set, and gender-swap
//! augmentation.

mod swap;
mod template;

pub use swap::{augment, gender_swap, swap_tokens, CasePattern, ContextualSwap, IdentityPairLexicon};
pub use template::{
    generate_test_set, FillLexicon, FillSlot, GeneratedPair, GeneratedTestSet, Template,
};
