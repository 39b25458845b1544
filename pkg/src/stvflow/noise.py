"""Truncated eigen-expansion Wiener noise on the rectangle.

W(t, xi) = sum_k mu_k * e_k(xi) * beta_k(t) over the first K Dirichlet
Laplacian eigenfunctions (ordered by increasing eigenvalue, ties broken
lexicographically), with independent scalar Brownian motions beta_k.  The
model carries the pointwise intensity mu(xi) = sum_k mu_k^2 e_k(xi)^2 (the
quadratic-variation density of W at xi) and the two summability constants

    c_inf_sq = sum_k mu_k^2 * sup|e_k|^2      (uniform variance bound)
    d_inf    = sum_k mu_k   * sup|grad e_k|   (uniform gradient bound)

whose partial sums certify that the truncation is numerically converged.
Sup norms are taken analytically from the product form of e_k, not from the
samples.

Brownian increments are reproducible: the per-(path, mode) substream seed is
derived from the master seed by the splitmix64 mixing chain documented in
``substream_seed``, so distinct paths and modes can be generated concurrently
and bit-identically in any order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, ScalarField, eigenfunction

__all__ = [
    "Mode",
    "NoiseModel",
    "BrownianPath",
    "build_noise",
    "default_decay",
    "w_field",
    "exp_w_field",
]

_MASK64 = (1 << 64) - 1
_PHI64 = 0x9E3779B97F4A7C15
_MIX64 = 0xC2B2AE3D27D4EB4F


def _splitmix64(x: int) -> int:
    x = (x + _PHI64) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def substream_seed(seed: int, path_index: int, mode_index: int) -> int:
    """64-bit substream key for one (path, mode) Brownian motion.

    key = splitmix64( splitmix64(seed XOR (path+1)*PHI) XOR (mode+1)*MIX )
    with PHI = 0x9E3779B97F4A7C15 and MIX = 0xC2B2AE3D27D4EB4F, all arithmetic
    mod 2^64.  The key seeds an independent PCG64 generator.
    """
    a = _splitmix64((int(seed) ^ ((path_index + 1) * _PHI64)) & _MASK64)
    return _splitmix64((a ^ ((mode_index + 1) * _MIX64)) & _MASK64)


def default_decay(dim: int) -> float:
    """Coefficient decay exponent: 3 in 1D, 2 in 2D.

    The gradient sup norm grows like the mode multi-index, so the gradient
    series needs one extra order of decay; these defaults keep both partial
    sums rapidly convergent.
    """
    return 3.0 if dim == 1 else 2.0


@dataclass(frozen=True)
class Mode:
    index: tuple[int, ...]
    mu: float
    eigenvalue: float
    sup_e: float
    sup_grad_e: float


def enumerate_mode_indices(grid: Grid, count: int) -> list[tuple[tuple[int, ...], float]]:
    """First `count` eigenmodes by increasing continuum eigenvalue, ties lex."""
    if count == 0:
        return []
    box = max(2, count)
    while True:
        ranges = [range(1, box + 1)] * grid.dim
        candidates = []
        for ks in itertools.product(*ranges):
            lam = sum((k * math.pi / L) ** 2 for k, L in zip(ks, grid.lengths))
            candidates.append((ks, lam))
        candidates.sort(key=lambda kl: (kl[1], kl[0]))
        if len(candidates) >= count:
            kth = candidates[count - 1][1]
            outside = min(
                ((box + 1) * math.pi / grid.lengths[i]) ** 2
                + sum(
                    (math.pi / grid.lengths[j]) ** 2
                    for j in range(grid.dim)
                    if j != i
                )
                for i in range(grid.dim)
            )
            if kth < outside:
                return candidates[:count]
        box *= 2


@dataclass(frozen=True)
class NoiseModel:
    """Immutable truncated expansion; shareable across threads."""

    grid: Grid
    modes: tuple[Mode, ...]
    mode_fields: np.ndarray  # (K, *grid.shape) eigenfunction samples
    scaled_modes: np.ndarray  # (K, *grid.shape) mu_k * e_k
    intensity: np.ndarray  # mu(xi) = sum mu_k^2 e_k(xi)^2
    c_inf_sq: float
    d_inf: float

    @property
    def truncation(self) -> int:
        return len(self.modes)

    def intensity_field(self) -> ScalarField:
        return ScalarField(self.grid, self.intensity)

    def partial_sums(self) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative partial sums of the two hypothesis series, per mode.

        Monotone nondecreasing; their tails show how far the truncation is
        from the limiting constants.
        """
        c = np.cumsum([m.mu**2 * m.sup_e**2 for m in self.modes]) if self.modes else np.zeros(0)
        d = np.cumsum([m.mu * m.sup_grad_e for m in self.modes]) if self.modes else np.zeros(0)
        return c, d


def build_noise(
    grid: Grid, truncation: int, amplitude: float, decay: float | None = None
) -> NoiseModel:
    """Noise model with mu_k = amplitude * rank^(-decay).

    truncation = 0 (or amplitude = 0) gives the deterministic model.  Sup
    norms are analytic: sup|e_k| = prod sqrt(2/L_i) and sup|grad e_k| bounded
    by that product times sqrt(eigenvalue).
    """
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if truncation < 0:
        raise ValueError("truncation must be >= 0")
    if decay is None:
        decay = default_decay(grid.dim)
    amp = math.prod(math.sqrt(2.0 / L) for L in grid.lengths)
    modes = []
    fields = np.zeros((truncation,) + grid.shape)
    for rank, (ks, lam) in enumerate(enumerate_mode_indices(grid, truncation), start=1):
        mu = amplitude * rank ** (-decay)
        e, _ = eigenfunction(grid, ks)
        fields[rank - 1] = e.values
        modes.append(
            Mode(
                index=ks,
                mu=mu,
                eigenvalue=lam,
                sup_e=amp,
                sup_grad_e=amp * math.sqrt(lam),
            )
        )
    mu_vec = np.array([m.mu for m in modes]) if modes else np.zeros(0)
    scaled = fields * mu_vec.reshape((-1,) + (1,) * grid.dim) if modes else fields
    intensity = (
        np.einsum("k...,k...->...", scaled, scaled) if modes else np.zeros(grid.shape)
    )
    c_inf_sq = float(sum(m.mu**2 * m.sup_e**2 for m in modes))
    d_inf = float(sum(m.mu * m.sup_grad_e for m in modes))
    return NoiseModel(
        grid=grid,
        modes=tuple(modes),
        mode_fields=fields,
        scaled_modes=scaled,
        intensity=intensity,
        c_inf_sq=c_inf_sq,
        d_inf=d_inf,
    )


@dataclass
class BrownianPath:
    """Per-mode Brownian increments on a fixed time grid.

    increments[n, k] ~ N(0, dt), independent across modes and steps;
    bit-identical regeneration from (seed, path_index, modes, steps, dt).
    """

    dt: float
    steps: int
    seed: int
    path_index: int
    increments: np.ndarray  # (steps, K)
    _partial: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def generate(
        cls, n_modes: int, steps: int, dt: float, seed: int, path_index: int = 0
    ) -> "BrownianPath":
        inc = brownian_increments(seed, path_index, n_modes, steps, dt)
        return cls(dt=dt, steps=steps, seed=seed, path_index=path_index, increments=inc)

    @property
    def n_modes(self) -> int:
        return self.increments.shape[1]

    def partial_sums(self) -> np.ndarray:
        """B_k at step boundaries: shape (steps+1, K), row 0 is zero."""
        if self._partial is None:
            psum = np.zeros((self.steps + 1, self.n_modes))
            np.cumsum(self.increments, axis=0, out=psum[1:])
            self._partial = psum
        return self._partial

    def coarsened(self, factor: int) -> "BrownianPath":
        """Same Brownian path observed on a time grid coarsened by `factor`."""
        if self.steps % factor != 0:
            raise ValueError("steps must be divisible by the coarsening factor")
        inc = self.increments.reshape(self.steps // factor, factor, self.n_modes).sum(axis=1)
        return BrownianPath(
            dt=self.dt * factor,
            steps=self.steps // factor,
            seed=self.seed,
            path_index=self.path_index,
            increments=inc,
        )

    def dump_csv(self, stream) -> None:
        """Audit dump, one row per (step, mode) increment."""
        stream.write("step,mode,increment\n")
        for n in range(self.steps):
            for k in range(self.n_modes):
                stream.write(f"{n},{k},{self.increments[n, k]!r}\n")


def brownian_increments(
    seed: int, path_index: int, n_modes: int, steps: int, dt: float
) -> np.ndarray:
    """(steps, n_modes) array of N(0, dt) increments from per-mode substreams."""
    out = np.zeros((steps, n_modes))
    sd = math.sqrt(dt)
    for k in range(n_modes):
        rng = np.random.Generator(np.random.PCG64(substream_seed(seed, path_index, k)))
        out[:, k] = rng.normal(0.0, sd, steps)
    return out


def brownian_increments_batch(
    seed: int, path_indices, n_modes: int, steps: int, dt: float
) -> np.ndarray:
    """(B, steps, n_modes) stack of the per-path increment arrays."""
    path_indices = list(path_indices)
    out = np.zeros((len(path_indices), steps, n_modes))
    for b, p in enumerate(path_indices):
        out[b] = brownian_increments(seed, p, n_modes, steps, dt)
    return out


def _check_step(path: BrownianPath, n: int) -> None:
    if not 0 <= n <= path.steps:
        raise IndexError(f"step index {n} outside [0, {path.steps}]")


def w_field(model: NoiseModel, path: BrownianPath, n: int) -> ScalarField:
    """Sampled noise field W_n(xi) = sum_k mu_k e_k(xi) B_k(t_n)."""
    _check_step(path, n)
    if path.n_modes != model.truncation:
        raise ValueError("path mode count does not match the noise model")
    if model.truncation == 0:
        return ScalarField.zeros(model.grid)
    vals = np.einsum("k,k...->...", path.partial_sums()[n], model.scaled_modes)
    return ScalarField(model.grid, vals)


def exp_w_field(model: NoiseModel, path: BrownianPath, n: int, sign: int) -> ScalarField:
    """exp(sign * W_n) pointwise, for sign in {+1, -1}."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    w = w_field(model, path, n)
    return ScalarField(model.grid, np.exp(sign * w.values))
