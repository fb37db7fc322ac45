"""Data-driven input subspaces from sampled sensitivities.

For a chosen sensitivity (identity, the optimal input stack, or the
objective gradient at the optimum), the covariance of the sensitivity over
sampled initial conditions is estimated by a Monte-Carlo mean of outer
products, eigendecomposed, and split into the leading ``q`` directions
(active) and their orthogonal complement (inactive).  Sensitivities live in
the decision coordinates of the condensed problem, i.e. transformed inputs
when the plant is prestabilized or shifted.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import sym_eig_desc, symmetrize
from .ocp import InfeasibleProblemError, OcpSpec, condense, solve_ocp, try_feasible_seed

__all__ = [
    "SENSITIVITY_KINDS",
    "CovarianceEstimate",
    "Projector",
    "EstimationError",
    "eval_sensitivity",
    "estimate_covariance",
    "compute_projectors",
    "lemma1_check",
    "random_projector",
    "cumulative_energy",
    "save_projector",
    "load_projector",
]

logger = logging.getLogger(__name__)

SENSITIVITY_KINDS = ("identity", "optimal_input", "cost_gradient")

# fraction of samples that must carry signal before the gradient kind is
# considered informative (mostly-inactive constraint sets give zero gradients)
LOW_SIGNAL_NORM = 1e-5
LOW_SIGNAL_FRACTION = 0.25


class EstimationError(RuntimeError):
    """No usable samples were available for the covariance estimate."""


@dataclass
class CovarianceEstimate:
    """Mean of sensitivity outer products over non-skipped samples."""

    c_hat: np.ndarray
    n_samples: int
    n_skipped: int
    kind: str
    vectors: np.ndarray | None  # (n_kept, dim); None for the identity kind
    low_signal: bool = False

    @property
    def dim(self) -> int:
        return self.c_hat.shape[0]


@dataclass
class Projector:
    """Orthonormal split of the decision space into active/inactive parts."""

    t1: np.ndarray
    t2: np.ndarray
    q: int
    sigma: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.t1.shape[0]

    def t(self) -> np.ndarray:
        return np.hstack([self.t1, self.t2])

    def reconstruct(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        out = self.t1 @ v
        if self.t2.shape[1]:
            out = out + self.t2 @ w
        return out


def eval_sensitivity(
    kind: str,
    spec: OcpSpec,
    x,
    opt_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray | None]:
    """One sample's outer-product contribution (and the raw vector).

    ``identity`` contributes the identity matrix without solving anything;
    the other kinds solve the full problem at ``x``.  Infeasible samples
    raise :class:`InfeasibleProblemError` so the caller can skip them.
    """
    if kind not in SENSITIVITY_KINDS:
        raise ValueError(f"unknown sensitivity kind {kind!r}")
    dim = spec.dim_u
    if kind == "identity":
        return np.eye(dim), None
    result, cond = solve_ocp(spec, x, opt_tol=opt_tol)
    if kind == "optimal_input":
        s = result.y.copy()
    else:
        s = cond.grad(result.y)
    return np.outer(s, s), s


def estimate_covariance(
    kind: str,
    spec: OcpSpec,
    samples,
    opt_tol: float = 1e-8,
) -> CovarianceEstimate:
    """Arithmetic mean of sample contributions; skipped samples are logged."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    dim = spec.dim_u
    if kind == "identity":
        return CovarianceEstimate(
            c_hat=np.eye(dim),
            n_samples=samples.shape[0],
            n_skipped=0,
            kind=kind,
            vectors=None,
        )
    vectors = []
    skipped = 0
    for i, x in enumerate(samples):
        try:
            _, s = eval_sensitivity(kind, spec, x, opt_tol=opt_tol)
        except InfeasibleProblemError:
            skipped += 1
            logger.warning("skipping infeasible training sample %d", i)
            continue
        vectors.append(s)
    if not vectors:
        raise EstimationError("all training samples were infeasible")
    mat = np.asarray(vectors)
    c_hat = symmetrize(mat.T @ mat / mat.shape[0], atol=1e-9)
    low_signal = False
    if kind == "cost_gradient":
        informative = float(np.mean(np.linalg.norm(mat, axis=1) > LOW_SIGNAL_NORM))
        if informative < LOW_SIGNAL_FRACTION:
            low_signal = True
            logger.warning(
                "only %.0f%% of gradient samples carry signal; the optimal_input "
                "kind will likely be more informative here",
                100.0 * informative,
            )
    return CovarianceEstimate(
        c_hat=c_hat,
        n_samples=samples.shape[0],
        n_skipped=skipped,
        kind=kind,
        vectors=mat,
        low_signal=low_signal,
    )


def compute_projectors(
    estimate: CovarianceEstimate | np.ndarray,
    q: int,
    provenance: dict | None = None,
) -> Projector:
    """Eigendecompose the covariance and split at the ``q`` largest values."""
    c_hat = estimate.c_hat if isinstance(estimate, CovarianceEstimate) else np.asarray(estimate)
    dim = c_hat.shape[0]
    if not 1 <= q <= dim:
        raise ValueError(f"q must be in [1, {dim}], got {q}")
    t, sigma = sym_eig_desc(c_hat)
    prov = dict(provenance or {})
    if isinstance(estimate, CovarianceEstimate):
        prov.setdefault("kind", estimate.kind)
        prov.setdefault("n_samples", estimate.n_samples)
    return Projector(t1=t[:, :q].copy(), t2=t[:, q:].copy(), q=q, sigma=sigma, provenance=prov)


def lemma1_check(estimate: CovarianceEstimate, proj: Projector):
    """Sample-exact mass split: mean |T1's|^2 vs the top-q eigenvalue sum.

    Returns ``(active_mass, inactive_mass, sum_top, sum_tail)``.  Only
    supported for kinds that retain raw vectors.
    """
    if estimate.vectors is None:
        raise ValueError("the identity kind stores no raw vectors to check")
    mat = estimate.vectors
    active = float(np.mean(np.sum((mat @ proj.t1) ** 2, axis=1)))
    if proj.t2.shape[1]:
        inactive = float(np.mean(np.sum((mat @ proj.t2) ** 2, axis=1)))
    else:
        inactive = 0.0
    sum_top = float(np.sum(proj.sigma[: proj.q]))
    sum_tail = float(np.sum(proj.sigma[proj.q :]))
    return active, inactive, sum_top, sum_tail


def random_projector(dim: int, q: int, seed: int) -> Projector:
    """Seeded random orthonormal split (for subspace-agnosticism checks)."""
    rng = np.random.default_rng(seed)
    t, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return Projector(
        t1=t[:, :q].copy(),
        t2=t[:, q:].copy(),
        q=q,
        sigma=np.full(dim, np.nan),
        provenance={"kind": "random", "seed": seed},
    )


def cumulative_energy(sigma: np.ndarray) -> np.ndarray:
    """Cumulative spectral-energy fractions, a guide for choosing q."""
    total = float(np.sum(sigma))
    if total <= 0.0:
        return np.ones_like(sigma)
    return np.cumsum(sigma) / total


_FORMAT_VERSION = 1


def _floats_to_hex(a: np.ndarray) -> list:
    return [float.hex(float(v)) for v in np.asarray(a, dtype=float).ravel()]


def _hex_to_floats(values, shape) -> np.ndarray:
    return np.array([float.fromhex(v) for v in values], dtype=float).reshape(shape)


def save_projector(path, proj: Projector) -> None:
    """Write the versioned text artifact (hex floats; round-trips exactly)."""
    sigma = np.where(np.isfinite(proj.sigma), proj.sigma, np.nan)
    payload = {
        "format_version": _FORMAT_VERSION,
        "dim": proj.dim,
        "q": proj.q,
        "t_row_major": _floats_to_hex(proj.t()),
        "sigma": _floats_to_hex(sigma),
        "provenance": proj.provenance,
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_projector(path) -> Projector:
    payload = json.loads(Path(path).read_text())
    if payload.get("format_version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported projector file version {payload.get('format_version')}")
    dim = int(payload["dim"])
    q = int(payload["q"])
    t = _hex_to_floats(payload["t_row_major"], (dim, dim))
    sigma = _hex_to_floats(payload["sigma"], (dim,))
    return Projector(
        t1=t[:, :q].copy(),
        t2=t[:, q:].copy(),
        q=q,
        sigma=sigma,
        provenance=dict(payload.get("provenance", {})),
    )
