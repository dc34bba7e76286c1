"""Moral-dilemma generation, agent scoring, and preference statistics.

Thin wrapper around the compiled `_core` extension; everything it exports is
re-exported here.
"""

from ._core import (  # noqa: F401
    AnalysisError,
    ConfigError,
    Dilemma,
    Dimension,
    IoError,
    Location,
    OutcomeGroup,
    PersonaSpec,
    PromptBundle,
    Side,
    Verdict,
    compose_preamble,
    culture_weighted_amce,
    dimension_names,
    estimate_amce,
    generate_batch,
    generate_dilemma,
    make_bundle,
    mdd,
    parse_response,
    persona_catalog,
    render_vignette,
    side_utility,
    synthetic_choice_probability,
    validate_dilemma,
)

__all__ = [
    "AnalysisError",
    "ConfigError",
    "Dilemma",
    "Dimension",
    "IoError",
    "Location",
    "OutcomeGroup",
    "PersonaSpec",
    "PromptBundle",
    "Side",
    "Verdict",
    "compose_preamble",
    "culture_weighted_amce",
    "dimension_names",
    "estimate_amce",
    "generate_batch",
    "generate_dilemma",
    "make_bundle",
    "mdd",
    "parse_response",
    "persona_catalog",
    "render_vignette",
    "side_utility",
    "synthetic_choice_probability",
    "validate_dilemma",
]
