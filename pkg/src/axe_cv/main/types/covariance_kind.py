from enum import StrEnum


class CovarianceKind(StrEnum):
    DIAGONAL = "diagonal"
    CAR = "car"
    ST_CAR = "st_car"
