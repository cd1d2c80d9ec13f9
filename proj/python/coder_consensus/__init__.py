# SPDX-License-Identifier: Apache-2.0
"""Multi-agent qualitative coding of tutoring transcripts."""

from ._core import (
    Error,
    IntegrityError,
    ParseError,
    TransportError,
    ValidationError,
    bh_adjust,
    binomial_ci,
    codebook_names,
    cohens_kappa,
    extract_codes,
    normalize_label,
    paired_t,
    run_cli,
    wald_ci,
)

__all__ = [
    "Error",
    "IntegrityError",
    "ParseError",
    "TransportError",
    "ValidationError",
    "bh_adjust",
    "binomial_ci",
    "codebook_names",
    "cohens_kappa",
    "extract_codes",
    "normalize_label",
    "paired_t",
    "run_cli",
    "wald_ci",
]
