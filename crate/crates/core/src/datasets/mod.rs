//! Digit images, confounded variants, synthetic concept data and splits.

pub mod cache;
mod concepts;
mod idx;
mod mnist;
mod set;
mod split;

pub use concepts::{
    clevr_hans_rules, cub_prototypes, make_concept_hans, make_cub_noisy, AttributeGroup, ClassRule, ConceptHansSpec,
    ConceptSchema, Condition, Object,
};
pub use idx::{encode_idx, load_idx, parse_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use mnist::{decoy_shade, default_dir, holdout, load_dir, make_color, make_decoy, Mode, DECOY_PATCH, PALETTE};
pub use set::{balanced_indices, stratified_indices, DatasetKind, LabeledSet, Meta};
pub use split::{CriticRelation, Split, SplitPolicy};
