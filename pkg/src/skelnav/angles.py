"""Angle helpers.

Headings are measured in degrees, counter-clockwise positive, relative to
the agent's forward axis, and normalised to the half-open interval
(-180, 180]; straight behind is +180, never -180.
"""

import math


def normalize_heading(deg: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""
    a = math.fmod(deg, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def angular_difference(a: float, b: float) -> float:
    """Smallest absolute circular difference between two headings, in
    [0, 180]."""
    return abs(normalize_heading(a - b))


def heading_to(dx: float, dy: float) -> float:
    """Heading of the vector (dx, dy) in the agent frame (x forward,
    y left), normalised to (-180, 180]. The zero vector maps to 0."""
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return normalize_heading(math.degrees(math.atan2(dy, dx)))
