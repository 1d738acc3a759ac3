"""Python bindings for the promptmerge C++ core."""

from ._core import (  # noqa: F401
    Box,
    CapacityExceeded,
    ConfigError,
    EmptyEval,
    Error,
    IndexOutOfRange,
    IoError,
    MalformedSample,
    Model,
    Page,
    PreconditionError,
    Question,
    ShapeError,
    SpanTooShort,
    StageError,
    WordBox,
    anls,
    detokenize,
    exact_match,
    generate_page,
    generate_questions,
    levenshtein,
    lr_at,
    raster_text,
    reconstruct,
    relaxed_accuracy,
    render_prompt,
    sample_lmpm,
    tokenize,
    vocab_size,
)
