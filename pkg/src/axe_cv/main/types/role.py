from enum import StrEnum


class Role(StrEnum):
    RESPONSE = "response"
    FIXED = "fixed"
    CLUSTER = "cluster"
    OFFSET = "offset"
    KNOWN_VARIANCE = "known_variance"
