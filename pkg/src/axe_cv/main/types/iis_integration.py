from enum import StrEnum


class IisIntegration(StrEnum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte-carlo"
