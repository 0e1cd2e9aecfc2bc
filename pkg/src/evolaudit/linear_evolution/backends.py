"""Backend parameter records and the FieldSample result type."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import ArgumentError

WORKERS_ENV = "EVOLAUDIT_WORKERS"


def worker_count(explicit: Optional[int] = None) -> int:
    """Worker threads: explicit value, else the environment override, else 1."""
    if explicit is not None:
        return max(1, int(explicit))
    raw = os.environ.get(WORKERS_ENV, "").strip()
    return max(1, int(raw)) if raw else 1


@dataclass(frozen=True)
class MonteCarlo:
    """Euler-Maruyama simulation of the diffusion with sigma sigma^T = 2Q."""

    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    block: int = 4096
    workers: Optional[int] = None

    def __post_init__(self):
        if self.n_paths < 1:
            raise ArgumentError("n_paths must be at least 1")
        if not self.dt > 0:
            raise ArgumentError("dt must be positive")
        if self.block < 1:
            raise ArgumentError("block must be at least 1")

    kind = "montecarlo"


@dataclass(frozen=True)
class Grid:
    """Crank-Nicolson lattice on the cube [-radius, radius]^d with frozen Dirichlet data."""

    radius: float = 8.0
    n_cells: int = 512
    dt: float = 1e-3
    boundary: str = "frozen-dirichlet"
    theta: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ArgumentError("dt must be positive")
        if self.n_cells < 4:
            raise ArgumentError("n_cells must be at least 4")
        if not self.radius > 0:
            raise ArgumentError("radius must be positive")
        if self.boundary != "frozen-dirichlet":
            raise ArgumentError(f"unsupported boundary policy {self.boundary!r}")

    kind = "grid"

    def refined(self, factor: int = 2) -> "Grid":
        """Same box with mesh and time step both divided by ``factor``."""
        return replace(self, n_cells=self.n_cells * factor, dt=self.dt / factor)

    def truncation_report(self, phi, points) -> dict:
        """Lyapunov-dominated truncation heuristic phi(R) >= 100 sup phi(points)."""
        pts = np.asarray(points, dtype=float)
        d = pts.shape[1]
        corner = np.zeros((1, d))
        corner[0, 0] = self.radius
        phi_r = float(np.min(phi(corner)))
        phi_pts = float(np.max(phi(pts)))
        return {"phi_at_radius": phi_r, "sup_phi_points": phi_pts, "ratio": phi_r / phi_pts,
                "heuristic_met": bool(phi_r >= 100.0 * phi_pts)}


@dataclass
class FieldSample:
    """Values of G(t,s)f (and optionally its gradient) at evaluation points."""

    points: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    gradient_values: Optional[np.ndarray] = None
    gradient_std_errors: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.points)
        if len(self.values) != n or len(self.std_errors) != n:
            raise ArgumentError("points, values and std_errors must have equal length")
        if np.any(self.std_errors < 0):
            raise ArgumentError("standard errors must be non-negative")
        if self.gradient_values is not None and len(self.gradient_values) != n:
            raise ArgumentError("gradient length mismatch")

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        header = [f"x{i}" for i in range(d)] + ["value", "std_error"]
        cols = [self.points, self.values[:, None], self.std_errors[:, None]]
        if self.gradient_values is not None:
            header += [f"grad{i}" for i in range(d)]
            cols.append(self.gradient_values)
        table = np.hstack(cols)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in table:
                writer.writerow(["%.17g" % v for v in row])
