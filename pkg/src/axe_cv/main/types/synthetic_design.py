from enum import StrEnum


class SyntheticDesign(StrEnum):
    EIGHT_SCHOOLS_SCALED = "eight_schools_scaled"
    ONE_WAY = "one_way"
    CLUSTER_SUBSET = "cluster_subset"
    CAR_LATTICE = "car_lattice"
