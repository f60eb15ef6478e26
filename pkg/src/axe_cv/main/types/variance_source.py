from enum import StrEnum


class VarianceSource(StrEnum):
    POSTERIOR_MEAN = "posterior-mean"
    MAP = "map"
    IIS = "iis"
    EXTERNAL = "external"
