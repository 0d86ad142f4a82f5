"""Small geometric value types shared by several modules."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Rect:
    """Axis-aligned ground rectangle ``[x0, x1] x [y0, y1]`` in meters."""

    x0: float
    y0: float
    x1: float
    y1: float

    @classmethod
    def centered(cls, cx, cy, width, height=None):
        height = width if height is None else height
        return cls(cx - width / 2, cy - height / 2, cx + width / 2, cy + height / 2)

    @classmethod
    def from_size(cls, width, height=None):
        return cls(0.0, 0.0, float(width), float(width if height is None else height))

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def is_empty(self):
        return not (self.x1 > self.x0 and self.y1 > self.y0)

    def shrink(self, margin_x, margin_y=None):
        margin_y = margin_x if margin_y is None else margin_y
        return Rect(self.x0 + margin_x, self.y0 + margin_y, self.x1 - margin_x, self.y1 - margin_y)

    def contains_rect(self, other: "Rect", tol=1e-9):
        return (other.x0 >= self.x0 - tol and other.y0 >= self.y0 - tol
                and other.x1 <= self.x1 + tol and other.y1 <= self.y1 + tol)

    def to_list(self):
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values):
        x0, y0, x1, y1 = (float(v) for v in values)
        return cls(x0, y0, x1, y1)
