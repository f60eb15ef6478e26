from enum import StrEnum


class DrawsDirection(StrEnum):
    READ = "read"
    WRITE = "write"
