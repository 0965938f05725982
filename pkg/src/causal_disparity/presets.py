"""Role schemas and sub-group thresholds for the bundled experiment setups.

Column names follow the UCI Adult file (with the header written by
``scripts/prepare_adult.py``) and the Washington State 2016 HMDA extract
(with ``loan_status`` derived by ``scripts/prepare_hdma.py``).
"""

from __future__ import annotations

from .tabular import RoleSchema

# Adult: every race code other than "White" is treated as Non-White (s1).
ADULT = RoleSchema(
    sensitive="race",
    outcome="income",
    positive_level=">50K",
    confounders=("age", "sex", "marital-status"),
    mediators=("education", "workclass", "occupation", "capital-gain", "capital-loss", "hours-per-week"),
    s1_levels=("Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black", "Other"),
)

_HDMA_CONFOUNDERS = ("property_type_name", "owner_occupancy_name", "applicant_sex_name", "loan_type_name")
_HDMA_MEDIATORS = ("loan_amount_000s", "applicant_income_000s")

HDMA_WHITE = RoleSchema(
    sensitive="applicant_race_name_1",
    outcome="loan_status",
    positive_level="Accepted",
    confounders=_HDMA_CONFOUNDERS,
    mediators=_HDMA_MEDIATORS,
    s2_levels=("White",),
)

HDMA_ASIAN = RoleSchema(
    sensitive="applicant_race_name_1",
    outcome="loan_status",
    positive_level="Accepted",
    confounders=_HDMA_CONFOUNDERS,
    mediators=_HDMA_MEDIATORS,
    s1_levels=("Asian",),
)

SCHEMAS = {"adult": ADULT, "hdma-white": HDMA_WHITE, "hdma-asian": HDMA_ASIAN}

ADULT_THRESHOLDS = (-0.01, 0.01, 0.05)
HDMA_THRESHOLDS = (-0.005, 0.025, 0.07)
THRESHOLDS = {"adult": ADULT_THRESHOLDS, "hdma-white": HDMA_THRESHOLDS, "hdma-asian": HDMA_THRESHOLDS}


def schema(name: str) -> RoleSchema:
    try:
        return SCHEMAS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(SCHEMAS)}") from None
