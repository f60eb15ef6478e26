from enum import StrEnum


class FoldScheme(StrEnum):
    LOO = "loo"
    LCO = "lco"
    KFOLD = "kfold"
