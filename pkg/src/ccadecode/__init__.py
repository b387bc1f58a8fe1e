"""Canonical-correlation projections with an annealed MH caption decoder."""

__version__ = "0.1.0"

from .cca_model import (
    CcaModel,
    cca_objective,
    cosine,
    load_model,
    model_bytes,
    project_input,
    project_output,
    save_model,
    train,
)
from .decoder import (
    DecodeResult,
    DecoderConfig,
    Proposal,
    acceptance_ratio,
    decode,
    decode_batch,
    derive_scene_seed,
    propose,
    sample_fixed_temp,
    score,
)
from .evaluate import (
    BleuReport,
    corpus_bleu,
    reference_self_bleu,
    unique_caption_count,
)
from .ingest import (
    SplitManifest,
    TextFeaturizer,
    build_training_pairs,
    load_captions,
    load_manifest,
    load_visual_features,
    text_features,
)
from .phrase_table import (
    BEGIN,
    END,
    Caption,
    ContextTable,
    Phrase,
    context_prob,
    estimate_context_table,
    extract_phrases,
    load_context_table,
    load_phrase_inventory,
    sample_phrase,
    save_context_table,
    tokenize,
)
from .sparse_linalg import (
    DiagMatrix,
    SparseMatrix,
    SparseVec,
    ThinSvd,
    accumulate_cross_covariance,
    accumulate_diag_second_moment,
    scale_by_diag,
    thin_svd,
)
