"""Polar-factor engine: exact SVD path and Newton-Schulz schedules.

``Ortho(M) = U V^T`` is the closest (semi-)orthogonal matrix to ``M``. The
approximate path runs an odd quintic iteration

    X_{t+1} = a*X + b*X(X^T X) + c*X(X^T X)^2,    X_0 = M / ||M||_F

whose per-step coefficient triples come from bundled text presets (``cubic``,
``you``, ``jordan``, ``polar-express``) or a user directory set through the
``TEON_PRESET_DIR`` environment variable. Ortho(0) is defined as 0 so that
optimizers are no-ops on dead gradients.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import as_matrix, svd

__all__ = [
    "KNOWN_PRESETS",
    "OrthoScheme",
    "load_preset",
    "parse_preset_text",
    "preset_dir",
    "ortho_exact",
    "ortho_ns",
    "ortho_error",
    "apply_ortho",
]

KNOWN_PRESETS = ("cubic", "you", "jordan", "polar-express")

CUBIC_ROW = (1.5, -0.5, 0.0)

# Sanity guard on each triple: p(1) = a + b + c should sit near 1. The tuned
# schedules intentionally overshoot (the aggressive opening rows reach
# p(1) ~ 0.12 and ~ 1.99), so the guard is a wide coarse filter, not a
# convergence proof.
P1_TOLERANCE = 1.1

Triple = tuple[float, float, float]


def preset_dir() -> Path:
    """Directory holding ``<name>.txt`` coefficient tables.

    ``TEON_PRESET_DIR`` overrides the bundled data; resolution happens at
    call time so tests can repoint it.
    """
    override = os.environ.get("TEON_PRESET_DIR")
    if override:
        return Path(override)
    return Path(__file__).parent / "presets"


def parse_preset_text(text: str, *, source: str = "<preset>") -> list[Triple]:
    """Parse preset grammar: '#' comments, whitespace-separated a b c floats."""
    rows: list[Triple] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{source}:{lineno}: expected 'a b c', got {raw!r}")
        try:
            rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError as e:
            raise ValueError(f"{source}:{lineno}: non-numeric coefficient in {raw!r}") from e
    if not rows:
        raise ValueError(f"{source}: preset file must contain at least one coefficient row")
    return rows


def load_preset(name: str) -> list[Triple]:
    """Load a coefficient table by name.

    A missing file falls back to the analytically safe cubic row (with a
    warning) so builds without the tuned tables still work; a present but
    malformed file raises, because silently replacing a user's data would
    mask the mistake.
    """
    path = preset_dir() / f"{name}.txt"
    if not path.is_file():
        warnings.warn(
            f"preset {name!r} not found at {path}; falling back to the cubic iteration",
            RuntimeWarning,
            stacklevel=2,
        )
        return [CUBIC_ROW]
    return parse_preset_text(path.read_text(), source=str(path))


def _resolve_schedule(rows: list[Triple], steps: int) -> tuple[Triple, ...]:
    # One row broadcasts; longer tables are truncated to `steps` or padded by
    # repeating their final row (the tuned tables end in a fixed-point row).
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if len(rows) == 1:
        return tuple(rows) * steps
    if steps <= len(rows):
        return tuple(rows[:steps])
    return tuple(rows) + (rows[-1],) * (steps - len(rows))


@dataclass(frozen=True)
class OrthoScheme:
    """Which polar-factor approximation to use.

    kind: "exact_svd" or "newton_schulz". For the NS kind the stored
    schedule is already resolved to exactly `steps` triples.
    """

    kind: str
    schedule: tuple[Triple, ...] = ()
    steps: int = 0
    preset_name: str | None = None

    EXACT = "exact_svd"
    NEWTON_SCHULZ = "newton_schulz"

    def __post_init__(self):
        if self.kind == self.EXACT:
            if self.schedule or self.steps:
                raise ValueError("exact scheme carries no schedule/steps")
            return
        if self.kind != self.NEWTON_SCHULZ:
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if len(self.schedule) != self.steps:
            raise ValueError(
                f"schedule length {len(self.schedule)} != steps {self.steps}"
            )
        for i, (a, b, c) in enumerate(self.schedule):
            p1 = a + b + c
            if not np.isfinite(p1) or abs(p1 - 1.0) > P1_TOLERANCE:
                raise ValueError(
                    f"schedule row {i}: p(1) = {p1:g} too far from 1 "
                    f"(|p(1)-1| <= {P1_TOLERANCE} required)"
                )

    @classmethod
    def exact(cls) -> "OrthoScheme":
        return cls(kind=cls.EXACT)

    @classmethod
    def newton_schulz(
        cls,
        steps: int,
        *,
        preset: str | None = None,
        schedule: list[Triple] | None = None,
    ) -> "OrthoScheme":
        """Build an NS scheme from a named preset or explicit rows."""
        if (preset is None) == (schedule is None):
            raise ValueError("give exactly one of preset= or schedule=")
        if preset is not None:
            rows = load_preset(preset)
            name = preset if preset in KNOWN_PRESETS else "custom"
        else:
            rows = [tuple(float(v) for v in row) for row in schedule]
            name = "custom"
        return cls(
            kind=cls.NEWTON_SCHULZ,
            schedule=_resolve_schedule(rows, steps),
            steps=steps,
            preset_name=name,
        )


def ortho_exact(m: np.ndarray) -> np.ndarray:
    """Polar factor U V^T from the SVD; Ortho(0) := 0."""
    m = as_matrix(m)
    if not m.any():
        return np.zeros_like(m)
    r = svd(m)
    return r.u @ r.v.T


def ortho_ns(m: np.ndarray, scheme: OrthoScheme) -> np.ndarray:
    """Newton-Schulz approximation of the polar factor.

    Frobenius pre-normalization puts every singular value in (0, 1]; when
    rows > cols the iteration runs on the transpose so the Gram matrix has
    the short side. No renormalization between steps: the tuned presets
    oscillate around 1 by design.
    """
    if scheme.kind != OrthoScheme.NEWTON_SCHULZ:
        raise ValueError("ortho_ns needs a newton_schulz scheme")
    m = as_matrix(m)
    if not m.any():
        return np.zeros_like(m)
    transposed = m.shape[0] > m.shape[1]
    x = m.T if transposed else m
    x = x / np.linalg.norm(x)
    for t, (a, b, c) in enumerate(scheme.schedule):
        # row Gram: X(X^T X) == (X X^T)X, and rows <= cols here
        g = x @ x.T
        x = a * x + (b * g + c * (g @ g)) @ x
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(
                f"Newton-Schulz produced non-finite values at step {t}"
            )
    return x.T if transposed else x


def apply_ortho(m: np.ndarray, scheme: OrthoScheme) -> np.ndarray:
    """Dispatch Ortho(m) through the scheme (exact SVD or Newton-Schulz)."""
    if scheme.kind == OrthoScheme.EXACT:
        return ortho_exact(m)
    return ortho_ns(m, scheme)


def ortho_error(m: np.ndarray, scheme: OrthoScheme) -> float:
    """Frobenius distance between the scheme's output and the exact polar factor."""
    return float(np.linalg.norm(apply_ortho(m, scheme) - ortho_exact(m)))
