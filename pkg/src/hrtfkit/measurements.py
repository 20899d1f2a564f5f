"""The 27 anthropometric measurement columns.

Column order is fixed across the package and the file formats:
x1..x17 (head and torso), d1..d8 (pinna), t1..t2 (pinna angles).
x16, x17 and the pinna angles are recorded in degrees, everything else
in centimeters.
"""

MEASUREMENT_LABELS: tuple[str, ...] = tuple(
    [f"x{i}" for i in range(1, 18)]
    + [f"d{i}" for i in range(1, 9)]
    + ["t1", "t2"]
)

N_MEASUREMENTS = len(MEASUREMENT_LABELS)

_DEGREE_COLUMNS = frozenset({"x16", "x17", "t1", "t2"})

MEASUREMENT_UNITS: tuple[str, ...] = tuple(
    "deg" if label in _DEGREE_COLUMNS else "cm" for label in MEASUREMENT_LABELS
)


def label_of(index: int) -> str:
    return MEASUREMENT_LABELS[index]


def index_of(label: str) -> int:
    try:
        return MEASUREMENT_LABELS.index(label)
    except ValueError:
        raise KeyError(f"unknown measurement label {label!r}") from None
