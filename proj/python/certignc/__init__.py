"""Certifiable GNC for pose-graph and landmark SLAM."""
from ._core import (
    G2oParseError,
    Problem,
    derive_seed,
    generate_synthetic,
    inject_outliers,
    load_g2o,
    parse_g2o,
    rmse_ate,
    score_outliers,
    serialize_g2o,
    solve,
    tls_weight_update,
)

__all__ = [
    "G2oParseError",
    "Problem",
    "derive_seed",
    "generate_synthetic",
    "inject_outliers",
    "load_g2o",
    "parse_g2o",
    "rmse_ate",
    "score_outliers",
    "serialize_g2o",
    "solve",
    "tls_weight_update",
]
