from enum import StrEnum


class SigmaPrior(StrEnum):
    # Unstructured Sigma ~ IW(nu, Psi)
    INVERSE_WISHART = "inverse-wishart"
    # Sigma = sigma^2 * I with sigma^2 ~ IG(nu / 2, psi / 2)
    POOLED = "pooled"
