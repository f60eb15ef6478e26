from enum import StrEnum


class CommandNames(StrEnum):
    FIT = "fit"
    CV = "cv"
    COMPARE = "compare"
    BENCH = "bench"
    SIMULATE = "simulate"
