"""coordkit: coordination recognition and conjunctive sentence splitting.

The pipeline has two learned stages: a coordinator identifier (binary
token classifier) and a conjunct boundary detector (position-aware BIO
tagger decoded with a constrained linear-chain CRF). A splitter turns the
recognized coordinations into simple, non-conjunctive sub-sentences.
"""

__version__ = "0.1.0"

from coordkit.schema import (
    Coordination,
    CoordinatorSpan,
    DetectorLabel,
    IdentifierLabel,
    SpanKind,
    Token,
    TokenSpan,
    decode_labels,
    encode_labels,
    validate_labels,
)

__all__ = [
    "__version__",
    "Coordination",
    "CoordinatorSpan",
    "DetectorLabel",
    "IdentifierLabel",
    "SpanKind",
    "Token",
    "TokenSpan",
    "decode_labels",
    "encode_labels",
    "validate_labels",
]
