"""Seeded sampling of model trajectories and Monte-Carlo moment checks.

Noise is counter-based: samples are grouped in chunks of ``CHUNK`` rows and
chunk ``c`` draws a ``(CHUNK, N+1, d)`` standard-normal array from a Philox
stream keyed by ``(seed, c)``.  Sample ``s`` always sees the same noise no
matter how many samples are requested or how chunks are scheduled.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import markov_joint_covariance, model_covariance, model_equations
from .blockmat import BlockMatrix, factor_pd
from .errors import CMSeqError
from .models import MarkovModel
from .serialization import model_digest
from .transforms import destination_directed_model

CHUNK = 4096


@dataclass(frozen=True)
class TrajectoryBatch:
    N: int
    d: int
    n_samples: int
    data: np.ndarray  # (n_samples, N+1, d)
    seed: int
    model_digest: str

    def __post_init__(self):
        if self.data.shape != (self.n_samples, self.N + 1, self.d):
            raise CMSeqError(
                f"data shape {self.data.shape} does not match ({self.n_samples}, {self.N + 1}, {self.d})"
            )

    def to_csv(self, fh=None):
        """Write ``sample,k,x0..x{d-1}`` rows; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["sample", "k"] + [f"x{i}" for i in range(self.d)])
        for s in range(self.n_samples):
            for k in range(self.N + 1):
                writer.writerow([s, k] + [repr(float(v)) for v in self.data[s, k]])
        return out.getvalue() if fh is None else None


def _chunk_noise(seed: int, chunk: int, N: int, d: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(chunk,))
    return np.random.Generator(np.random.Philox(ss)).standard_normal((CHUNK, N + 1, d))


def sample_trajectories(m, n: int, seed: int, workers: int = 1) -> TrajectoryBatch:
    """Draw ``n`` trajectories by running the model equations in generation order."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    eqs = model_equations(m)
    chol = {eq.k: factor_pd(eq.noise_cov, f"noise covariance at k={eq.k}").lower for eq in eqs}
    N, d = m.N, m.d

    def run_chunk(c: int) -> np.ndarray:
        rows = min(CHUNK, n - c * CHUNK)
        z = _chunk_noise(seed, c, N, d)[:rows]
        x = np.empty_like(z)
        for eq in eqs:
            value = z[:, eq.k] @ chol[eq.k].T
            for j, w in eq.terms:
                value += x[:, j] @ w.T
            x[:, eq.k] = value
        return x

    chunks = range((n + CHUNK - 1) // CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    return TrajectoryBatch(N, d, n, np.concatenate(parts), seed, model_digest(m))


def empirical_covariance(b: TrajectoryBatch) -> BlockMatrix:
    """Unbiased sample covariance of the stacked ``(N+1) d`` state vector."""
    if b.n_samples < 2:
        raise ValueError("need at least two samples")
    flat = b.data.reshape(b.n_samples, -1)
    return BlockMatrix(np.atleast_2d(np.cov(flat, rowvar=False, ddof=1)), b.d, symmetric=True)


def analytic_covariance(m) -> BlockMatrix:
    if isinstance(m, MarkovModel):
        return markov_joint_covariance(m)
    return model_covariance(m)


def destination_directed_generate(motion: MarkovModel, endpoint_joint: dict, n: int, seed: int):
    """Reciprocal CM_L model from a motion model and an origin/destination law, plus samples.

    ``endpoint_joint`` has ``cov_x0``, ``cov_xN`` and ``cross = Cov(x_0, x_N)``.
    """
    model = destination_directed_model(
        motion, endpoint_joint["cov_x0"], endpoint_joint["cov_xN"], endpoint_joint["cross"]
    )
    return model, sample_trajectories(model, n, seed)


@dataclass(frozen=True)
class MonteCarloReport:
    n_samples: int
    seed: int
    n_se: float
    max_z: float
    worst_entry: tuple
    passed: bool

    def to_json(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "n_se": self.n_se,
            "max_z": self.max_z,
            "worst_entry": list(self.worst_entry),
            "pass": self.passed,
        }


def monte_carlo_z(emp: BlockMatrix, C: BlockMatrix, n: int) -> np.ndarray:
    """Entrywise ``|emp - C| / se`` with ``se = sqrt((C_ii C_jj + C_ij^2) / n)``."""
    diag = np.diag(C.data)
    se = np.sqrt((np.outer(diag, diag) + C.data ** 2) / n)
    return np.abs(emp.data - C.data) / se


def monte_carlo_check(m, n: int, seed: int, n_se: float = 4.0) -> MonteCarloReport:
    """Compare the empirical covariance of ``n`` samples with the analytic one."""
    C = analytic_covariance(m)
    emp = empirical_covariance(sample_trajectories(m, n, seed))
    z = monte_carlo_z(emp, C, n)
    worst = np.unravel_index(int(np.argmax(z)), z.shape)
    max_z = float(z[worst])
    return MonteCarloReport(n, seed, n_se, max_z, tuple(int(i) for i in worst), max_z <= n_se)

