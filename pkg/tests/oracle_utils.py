"""Independent brute-force oracles used by the test suite.

Everything here is deliberately written from first principles (rational
arithmetic, explicit flood fill, exhaustive enumeration) so that the
production code is checked against a second, unrelated implementation.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import permutations

Pixel = tuple[int, int]  # (y, x)

_OFFSETS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_OFFSETS_8 = _OFFSETS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def rational_round_half_up(value: Fraction) -> int:
    """floor(value + 1/2) computed exactly."""
    shifted = value + Fraction(1, 2)
    return shifted.numerator // shifted.denominator


def rational_scale(value: int, numerator: int, denominator: int) -> int:
    return rational_round_half_up(Fraction(value * numerator, denominator))


def flood_fill_components(
    foreground: set[Pixel], connectivity: int
) -> list[set[Pixel]]:
    """Partition foreground pixels into connected sets by iterative flood fill."""
    offsets = _OFFSETS_4 if connectivity == 4 else _OFFSETS_8
    remaining = set(foreground)
    components: list[set[Pixel]] = []
    while remaining:
        seed = remaining.pop()
        component = {seed}
        stack = [seed]
        while stack:
            y, x = stack.pop()
            for dy, dx in offsets:
                neighbor = (y + dy, x + dx)
                if neighbor in remaining:
                    remaining.discard(neighbor)
                    component.add(neighbor)
                    stack.append(neighbor)
        components.append(component)
    return components


def labeled_flood_fill(
    grid: dict[Pixel, int], connectivity: int
) -> list[set[Pixel]]:
    """Flood fill that never merges pixels carrying different labels."""
    components: list[set[Pixel]] = []
    for label in sorted({v for v in grid.values() if v != 0}):
        pixels = {p for p, v in grid.items() if v == label}
        components.extend(flood_fill_components(pixels, connectivity))
    return components


def tight_bounds(component: set[Pixel]) -> tuple[int, int, int, int]:
    """Half-open (x_min, y_min, x_max, y_max) of a pixel set."""
    ys = [y for y, _ in component]
    xs = [x for _, x in component]
    return min(xs), min(ys), max(xs) + 1, max(ys) + 1


def fraction_iou(
    a: tuple[int, int, int, int], b: tuple[int, int, int, int]
) -> Fraction:
    """Exact intersection-over-union of two boxes."""
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    intersection = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - intersection
    if union == 0:
        return Fraction(0)
    return Fraction(intersection, union)


def brute_force_assignment(matrix: list[list[float]]) -> float:
    """Best injective row->column assignment score by full enumeration.

    ``matrix[i][j]`` scores pairing row i with column j; unassigned rows
    or columns contribute zero.  Only usable for tiny instances.
    """
    rows = len(matrix)
    cols = len(matrix[0]) if rows else 0
    if rows == 0 or cols == 0:
        return 0.0
    k = min(rows, cols)
    best = 0.0
    for row_subset in permutations(range(rows), k):
        for col_subset in permutations(range(cols), k):
            score = sum(matrix[r][c] for r, c in zip(row_subset, col_subset))
            best = max(best, score)
    return best
