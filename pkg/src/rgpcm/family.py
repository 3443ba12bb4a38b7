"""The eight eigenvalue-parameterised covariance structures.

Every component covariance is ``Sigma_g = D_g diag(B_g) D_g'`` where the
eigenvalue vector ``B_g`` merges volume and shape. A structure tag says
whether ``B`` is shared across groups and whether the orientation ``D`` is
absent (spherical), fixed to the axes, shared, or varying.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import reconstruct


class Orientation(enum.Enum):
    SPHERICAL = "spherical"
    AXIS_ALIGNED = "axis_aligned"
    SHARED = "shared"
    VARYING = "varying"


class Structure(str, enum.Enum):
    ONE_I = "1I"
    GI = "GI"
    EI = "EI"
    VI = "VI"
    EE = "EE"
    EV = "EV"
    VV = "VV"
    VE = "VE"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Structure":
        try:
            return cls(text.strip().upper())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown covariance structure {text!r}; expected one of {names}") from None

    @property
    def shape_shared(self) -> bool:
        return self in (Structure.ONE_I, Structure.EI, Structure.EE, Structure.EV)

    @property
    def orientation(self) -> Orientation:
        return _ORIENTATION[self]

    @property
    def spherical(self) -> bool:
        return self.orientation is Orientation.SPHERICAL


_ORIENTATION = {
    Structure.ONE_I: Orientation.SPHERICAL,
    Structure.GI: Orientation.SPHERICAL,
    Structure.EI: Orientation.AXIS_ALIGNED,
    Structure.VI: Orientation.AXIS_ALIGNED,
    Structure.EE: Orientation.SHARED,
    Structure.VE: Orientation.SHARED,
    Structure.EV: Orientation.VARYING,
    Structure.VV: Orientation.VARYING,
}

# Column order used in the BIC tables.
TABLE_ORDER = (
    Structure.EI, Structure.VI, Structure.EE, Structure.EV,
    Structure.VV, Structure.VE, Structure.GI, Structure.ONE_I,
)


def parse_structures(text: str) -> list[Structure]:
    if text.strip().lower() == "all":
        return list(TABLE_ORDER)
    return [Structure.parse(tok) for tok in text.split(",") if tok.strip()]


@dataclass(frozen=True)
class CovarianceFactors:
    """Eigenvalues and orientations for all ``G`` components.

    ``eigvals`` has one row when shared and ``G`` rows otherwise; spherical
    structures store a single column. ``orients`` is ``None`` for spherical
    and axis-aligned structures, ``(1, p, p)`` when shared and ``(G, p, p)``
    when varying.
    """

    structure: Structure
    G: int
    p: int
    eigvals: np.ndarray
    orients: Optional[np.ndarray] = None

    def __post_init__(self):
        s = Structure.parse(self.structure) if isinstance(self.structure, str) else self.structure
        object.__setattr__(self, "structure", s)
        rows = 1 if s.shape_shared else self.G
        cols = 1 if s.spherical else self.p
        ev = np.asarray(self.eigvals, dtype=float).reshape(rows, cols)
        if not np.all(ev > 0):
            raise ValueError("covariance eigenvalues must be strictly positive")
        object.__setattr__(self, "eigvals", ev)
        kind = s.orientation
        if kind in (Orientation.SPHERICAL, Orientation.AXIS_ALIGNED):
            if self.orients is not None:
                raise ValueError(f"{s} has no free orientation")
        else:
            n_orient = 1 if kind is Orientation.SHARED else self.G
            d = np.asarray(self.orients, dtype=float).reshape(n_orient, self.p, self.p)
            object.__setattr__(self, "orients", d)

    def eigvals_for(self, g: int) -> np.ndarray:
        """Length-``p`` eigenvalue vector of component ``g``."""
        self._check(g)
        row = self.eigvals[0 if self.structure.shape_shared else g]
        return row.copy() if row.shape[0] == self.p else np.full(self.p, row[0])

    def orient_for(self, g: int) -> np.ndarray:
        self._check(g)
        if self.orients is None:
            return np.eye(self.p)
        return self.orients[0 if self.orients.shape[0] == 1 else g].copy()

    def all_eigvals(self) -> np.ndarray:
        """``(G, p)`` array of every component's eigenvalues."""
        return np.stack([self.eigvals_for(g) for g in range(self.G)])

    def _check(self, g: int) -> None:
        if not 0 <= g < self.G:
            raise IndexError(f"group index {g} out of range for G={self.G}")


def assemble_sigma(factors: CovarianceFactors, g: int) -> np.ndarray:
    return reconstruct(factors.orient_for(g), factors.eigvals_for(g))


def count_cov_params(structure: Structure, G: int, p: int) -> int:
    """Free covariance parameters for one structure."""
    if G < 1 or p < 1:
        raise ValueError("G and p must be positive")
    full = p * (p + 1) // 2
    return {
        Structure.ONE_I: 1,
        Structure.GI: G,
        Structure.EI: p,
        Structure.VI: p * G,
        Structure.EE: full,
        Structure.EV: G * full - (G - 1) * p,
        Structure.VV: G * full,
        Structure.VE: full + (G - 1) * p,
    }[Structure(structure)]


def count_free_params(structure: Structure, G: int, p: int) -> int:
    """Mixing weights, means and covariance parameters together."""
    return (G - 1) + G * p + count_cov_params(structure, G, p)
