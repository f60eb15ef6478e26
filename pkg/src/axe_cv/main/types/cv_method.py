from enum import StrEnum


class CvMethod(StrEnum):
    AXE = "axe"
    GHOST = "ghost"
    IIS_C = "iis_c"
    IIS_A = "iis_a"
    MCV = "mcv"

    # Reference predictor, not a cross-validation approximation
    NAIVE = "naive"

    @property
    def needs_draws(self) -> bool:
        """Whether the method reweights or reuses full-data posterior draws"""
        return self in (CvMethod.GHOST, CvMethod.IIS_C, CvMethod.IIS_A, CvMethod.NAIVE)
