from enum import StrEnum


class Family(StrEnum):
    GAUSSIAN = "gaussian"
    POISSON_LOG = "poisson-log"
