from enum import StrEnum


class LrrVariant(StrEnum):
    # Sum of per-point squared error ratios, then logged
    DISPLAY = "display"
    # Log of the ratio of summed squared errors
    RMSE_RATIO = "rmse-ratio"
