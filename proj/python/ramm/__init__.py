"""Retrieval-augmented multimodal language modeling, desk scale.

A mixed-modal dense retriever over an external memory of caption-image
documents, plus a causal-masked Transformer generator that conditions on
retrieved documents prepended in context.
"""

from ramm._core import (  # noqa: F401
    Codebook,
    Composition,
    Document,
    Encoder,
    Generator,
    HeldoutPpl,
    MemoryIndex,
    TextVocab,
    __version__,
    controlled_generate,
    evaluate_heldout,
    image_to_caption,
    infill_image,
    kshot_classify,
    load_corpus,
    load_generator,
    read_png,
    relevance,
    render_composition,
    retrieval_recall,
    save_corpus,
    synth_corpus,
    text_to_image,
    train_encoder,
    train_generator,
    write_png,
)
