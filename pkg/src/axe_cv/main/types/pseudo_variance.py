from enum import StrEnum


class PseudoVariance(StrEnum):
    # var(g(Y)) ~ v * g'(mu)^2, which is 1 / (E * lambda) for Poisson-log
    DELTA = "delta"
    # v / g'(g^-1(X beta))^2, taken literally
    RAW = "raw"
