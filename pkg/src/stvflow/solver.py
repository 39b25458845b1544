"""Time stepping for the regularized singular diffusion with expansion noise.

Two equivalent formulations are discretized on the same grid footing:

  direct    dX = div(psi_tilde(grad X)) dt + X dW          (Ito, multiplicative)
  rescaled  dY/dt = exp(-W) div(psi_tilde(grad(exp(W) Y))) - intensity*Y/2

related by X = exp(W) Y.  The noise increment enters the direct scheme
pointwise and noncompensated (left endpoint); the rescaled scheme sees the
noise only through the sampled field W and differentiates it discretely, so
both solvers share one discrete calculus.

Schemes: fully explicit Euler, or a semi-implicit variant that moves the
linear tilt diffusion behind a conjugate-gradient solve while keeping the
saturating flux explicit.  The explicit scheme requires the step guard
``grid.stable_dt``; violating it raises before any stepping happens.

Everything iterates over arrays with optional leading batch axes, so a
Monte Carlo ensemble advances as one vectorized loop; the hot flux kernel
reuses a per-run workspace to keep long runs allocation-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    lap_arrays,
    norm_p_arrays,
    shifted_poisson_solve,
    stable_dt,
    tv_arrays,
)
from .noise import BrownianPath, NoiseModel, w_field
from .regularization import Regularization

__all__ = [
    "SolverParams",
    "Trajectory",
    "TestProcess",
    "SimulationAbort",
    "step_direct",
    "step_rescaled",
    "solve",
    "test_process",
    "rescaled_operator",
]

SCHEMES = ("explicit", "semi_implicit")
VARIANTS = ("direct", "rescaled")


class SimulationAbort(RuntimeError):
    """Non-finite state detected; carries the offending step index."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"non-finite state at step {step}{detail}")


@dataclass(frozen=True)
class SolverParams:
    lam: float
    dt: float
    t_final: float
    scheme: str = "semi_implicit"
    theta: float = 1.0
    record_stride: int | None = None

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.record_stride is not None and self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def stride(self) -> int:
        if self.record_stride is not None:
            return self.record_stride
        return max(1, math.ceil(self.steps / 200))

    def check_grid(self, grid: Grid) -> None:
        if self.scheme == "explicit":
            guard = stable_dt(grid, self.lam)
            if self.dt > guard * (1.0 + 1e-9):
                raise ValueError(
                    f"explicit scheme needs dt <= {guard:.6e} on this grid, got {self.dt:.6e}"
                )


class _Stepper:
    """One run's worth of preallocated buffers for the flux divergence.

    The saturating flux scale is 1/max(|g|, lam) (+ lam when tilted), which
    agrees with the two-branch Yosida map everywhere including the kink.
    """

    def __init__(self, grid: Grid, model: NoiseModel, params: SolverParams, batch_shape: tuple[int, ...]):
        self.grid = grid
        self.model = model
        self.params = params
        self.lam = params.lam
        nodes = batch_shape + grid.shape
        cells = batch_shape + tuple(n + 1 for n in grid.counts)
        ext = batch_shape + tuple(n + 2 for n in grid.counts)
        self._ext = np.zeros(ext)
        self._cell = [np.empty(cells) for _ in range(grid.dim)]
        self._mag = np.empty(cells)
        self._tmpc = np.empty(cells)
        self._div = np.empty(nodes)
        self._tmpn = np.empty(nodes)
        self._dw = np.empty(nodes) if model.truncation else None

    def flux_divergence(self, x: np.ndarray, tilted: bool) -> np.ndarray:
        """div(psi[_tilde](grad x)) into an internal buffer (valid until reuse)."""
        grid, lam = self.grid, self.lam
        if grid.dim == 1:
            (h,) = grid.spacing
            ext, g, mag, tmp, div = self._ext, self._cell[0], self._mag, self._tmpc, self._div
            ext[..., 1:-1] = x
            np.subtract(ext[..., 1:], ext[..., :-1], out=g)
            g *= 1.0 / h
            np.abs(g, out=mag)
            np.maximum(mag, lam, out=tmp)
            np.reciprocal(tmp, out=tmp)
            if tilted:
                tmp += lam
            g *= tmp
            np.subtract(g[..., 1:], g[..., :-1], out=div)
            div *= 1.0 / h
            return div
        h1, h2 = grid.spacing
        ext, gx, gy = self._ext, self._cell[0], self._cell[1]
        mag, tmp, div, tmpn = self._mag, self._tmpc, self._div, self._tmpn
        ext[..., 1:-1, 1:-1] = x
        np.subtract(ext[..., 1:, :-1], ext[..., :-1, :-1], out=gx)
        gx *= 1.0 / h1
        np.subtract(ext[..., :-1, 1:], ext[..., :-1, :-1], out=gy)
        gy *= 1.0 / h2
        np.multiply(gx, gx, out=mag)
        np.multiply(gy, gy, out=tmp)
        mag += tmp
        np.sqrt(mag, out=mag)
        np.maximum(mag, lam, out=tmp)
        np.reciprocal(tmp, out=tmp)
        if tilted:
            tmp += lam
        gx *= tmp
        gy *= tmp
        np.subtract(gx[..., 1:, 1:], gx[..., :-1, 1:], out=div)
        div *= 1.0 / h1
        np.subtract(gy[..., 1:, 1:], gy[..., 1:, :-1], out=tmpn)
        tmpn *= 1.0 / h2
        div += tmpn
        return div

    def noise_increment(self, increments_n: np.ndarray) -> np.ndarray | None:
        if self._dw is None:
            return None
        batch = self._dw.shape[: self._dw.ndim - self.grid.dim]
        increments_n = np.broadcast_to(increments_n, batch + increments_n.shape[-1:])
        sub = "...k,ki->...i" if self.grid.dim == 1 else "...k,kij->...ij"
        np.einsum(sub, increments_n, self.model.scaled_modes, out=self._dw)
        return self._dw

    def direct_step(self, x: np.ndarray, dw: np.ndarray | None) -> np.ndarray:
        params = self.params
        if params.scheme == "explicit":
            div = self.flux_divergence(x, tilted=True)
            out = x + params.dt * div
            if dw is not None:
                np.multiply(x, dw, out=self._tmpn)
                out += self._tmpn
            return out
        theta, lam, dt = params.theta, params.lam, params.dt
        div = self.flux_divergence(x, tilted=False)
        rhs = x + dt * div
        if dw is not None:
            np.multiply(x, dw, out=self._tmpn)
            rhs += self._tmpn
        if theta < 1.0:
            rhs += (1.0 - theta) * lam * dt * lap_arrays(x, self.grid)
        if theta == 0.0:
            return rhs
        return shifted_poisson_solve(rhs, self.grid, theta * lam * dt)

    def rescaled_step(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        params = self.params
        drift = self._rescaled_drift(y, w)
        if params.scheme == "explicit":
            return y + params.dt * drift
        # stabilized IMEX: add/subtract the tilt Laplacian so only the
        # increment sees the implicit solve; consistent to O(dt^2)
        theta, lam, dt = params.theta, params.lam, params.dt
        rhs = y + dt * drift
        if theta == 0.0:
            return rhs
        rhs -= theta * lam * dt * lap_arrays(y, self.grid)
        return shifted_poisson_solve(rhs, self.grid, theta * lam * dt)

    def _rescaled_drift(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        z = np.exp(w) * y
        div = self.flux_divergence(z, tilted=True)
        return np.exp(-w) * div - 0.5 * self.model.intensity * y


def _abort_detail(x: np.ndarray, grid: Grid) -> str:
    bad = ~np.isfinite(x)
    flat = bad.any(axis=tuple(range(-grid.dim, 0)))
    if flat.ndim == 0:
        return ""
    return f" (first bad batch element {int(np.argmax(flat))})"


def iterate_fields(
    x0: np.ndarray,
    model: NoiseModel,
    increments: np.ndarray,
    params: SolverParams,
    variant: str = "direct",
):
    """Yield (n, t_n, state) for n = 0..steps.

    x0 has shape grid.shape with optional leading batch axes; increments has
    shape (..., steps, K) with broadcast-compatible batch axes.  Yielded
    arrays are fresh per step and safe to keep.  For the rescaled variant
    the running field W is accumulated from the same increments.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    grid = model.grid
    params.check_grid(grid)
    steps = params.steps
    if increments.shape[-2] < steps:
        raise ValueError("increment array is shorter than the requested horizon")
    batch_shape = np.broadcast_shapes(
        np.shape(x0)[: -grid.dim] if np.ndim(x0) > grid.dim else (),
        increments.shape[:-2],
    )
    x = np.broadcast_to(np.asarray(x0, dtype=float), batch_shape + grid.shape).copy()
    stepper = _Stepper(grid, model, params, batch_shape)
    yield 0, 0.0, x
    if variant == "rescaled":
        w = np.zeros_like(x)
    for n in range(steps):
        if variant == "direct":
            dw = stepper.noise_increment(increments[..., n, :]) if model.truncation else None
            x = stepper.direct_step(x, dw)
        else:
            x = stepper.rescaled_step(x, w)
            if model.truncation:
                w = w + stepper.noise_increment(increments[..., n, :])
        if not np.all(np.isfinite(x)):
            raise SimulationAbort(n + 1, _abort_detail(x, grid))
        yield n + 1, (n + 1) * params.dt, x


# ---------------------------------------------------------------------------
# single-path public operations
# ---------------------------------------------------------------------------


def step_direct(
    x: ScalarField, model: NoiseModel, path: BrownianPath, n: int, params: SolverParams
) -> ScalarField:
    """One update of the multiplicative-noise scheme from step n to n+1."""
    params.check_grid(x.grid)
    if not 0 <= n < path.steps:
        raise IndexError("step index out of range")
    stepper = _Stepper(x.grid, model, params, ())
    dw = stepper.noise_increment(path.increments[n]) if model.truncation else None
    out = stepper.direct_step(x.values, dw)
    if not np.all(np.isfinite(out)):
        raise SimulationAbort(n + 1)
    return ScalarField(x.grid, out)


def step_rescaled(
    y: ScalarField, model: NoiseModel, path: BrownianPath, n: int, params: SolverParams
) -> ScalarField:
    """One update of the random-coefficient scheme from step n to n+1."""
    params.check_grid(y.grid)
    if not 0 <= n < path.steps:
        raise IndexError("step index out of range")
    stepper = _Stepper(y.grid, model, params, ())
    w = w_field(model, path, n).values
    out = stepper.rescaled_step(y.values, w)
    if not np.all(np.isfinite(out)):
        raise SimulationAbort(n + 1)
    return ScalarField(y.grid, out)


def rescaled_operator(y: np.ndarray, w: np.ndarray, model: NoiseModel, lam: float) -> np.ndarray:
    """Spatial operator of the rescaled equation at a frozen noise field w.

    A(y) = -exp(-w) div(psi_tilde(grad(exp(w) y))) + intensity*y/2, so the
    rescaled flow reads dY/dt + A(Y) = 0.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    params = SolverParams(lam=lam, dt=1.0, t_final=1.0)
    stepper = _Stepper(model.grid, model, params, y.shape[: -model.grid.dim])
    return -stepper._rescaled_drift(y, w).copy()


@dataclass
class Trajectory:
    """Recorded norms at every step plus decimated state snapshots."""

    params: SolverParams
    variant: str
    times: np.ndarray
    l2: np.ndarray
    lN: np.ndarray
    tv: np.ndarray
    phi_lambda: np.ndarray
    states: dict[int, ScalarField] = field(default_factory=dict)

    @property
    def final(self) -> ScalarField:
        return self.states[max(self.states)]


def solve(
    x: ScalarField,
    model: NoiseModel,
    path: BrownianPath,
    params: SolverParams,
    variant: str = "direct",
) -> Trajectory:
    """Iterate to the horizon, recording norms each step and states at the stride."""
    grid = x.grid
    reg = Regularization(params.lam)
    steps = params.steps
    times = params.dt * np.arange(steps + 1)
    l2 = np.zeros(steps + 1)
    lN = np.zeros(steps + 1)
    tvs = np.zeros(steps + 1)
    phis = np.zeros(steps + 1)
    states: dict[int, ScalarField] = {}
    stride = params.stride
    for n, _t, vals in iterate_fields(x.values, model, path.increments, params, variant):
        l2[n] = norm_p_arrays(vals, grid, 2)
        lN[n] = norm_p_arrays(vals, grid, grid.dim)
        tvs[n] = tv_arrays(vals, grid)
        phis[n] = reg.phi_lambda_arrays(vals, grid)
        if n % stride == 0 or n == steps:
            states[n] = ScalarField(grid, vals.copy())
    return Trajectory(
        params=params,
        variant=variant,
        times=times,
        l2=l2,
        lN=lN,
        tv=tvs,
        phi_lambda=phis,
        states=states,
    )


# ---------------------------------------------------------------------------
# closed-form comparison processes
# ---------------------------------------------------------------------------


def _source_at(g, n: int):
    """Piecewise-constant source at step n: None, a constant field, or a callable."""
    if g is None:
        return None
    if callable(g):
        out = g(n)
        return None if out is None else np.asarray(out, dtype=float)
    return np.asarray(g, dtype=float)


def iterate_test_process(
    z0: np.ndarray, g, model: NoiseModel, increments: np.ndarray, params: SolverParams
):
    """Yield (n, t_n, Z_n) of the pathwise stochastic-exponential solution.

    Z_n(xi) = exp(W_n(xi) - intensity(xi) t_n / 2) *
              (z0(xi) - sum_{m<n} exp(-W_m(xi) + intensity(xi) t_m / 2) G_m(xi) dt)

    evaluated nodewise on the same Brownian increments as the solvers, with
    left-endpoint quadrature for the source integral.  With zero source this
    is the exact pathwise exponential of the noise, discretized only through
    the increments themselves.
    """
    grid = model.grid
    half_mu = 0.5 * model.intensity
    dt = params.dt
    steps = params.steps
    if increments.shape[-2] < steps:
        raise ValueError("increment array is shorter than the requested horizon")
    z0 = np.asarray(z0, dtype=float)
    batch_shape = np.broadcast_shapes(
        z0.shape[: -grid.dim] if z0.ndim > grid.dim else (), increments.shape[:-2]
    )
    w = np.zeros(batch_shape + grid.shape)
    integral = np.zeros_like(w)
    sub = "...k,ki->...i" if grid.dim == 1 else "...k,kij->...ij"
    for n in range(steps + 1):
        t = n * dt
        z = np.exp(w - half_mu * t) * (z0 - integral)
        yield n, t, z
        if n == steps:
            break
        g_n = _source_at(g, n)
        if g_n is not None:
            integral = integral + np.exp(-w + half_mu * t) * g_n * dt
        if model.truncation:
            w = w + np.einsum(sub, increments[..., n, :], model.scaled_modes)


def test_process(
    z0: ScalarField, g, model: NoiseModel, path: BrownianPath, params: SolverParams
) -> list[tuple[int, ScalarField]]:
    """Evaluate the comparison process on one path at the recording stride."""
    stride = params.stride
    out = []
    for n, _t, z in iterate_test_process(z0.values, g, model, path.increments, params):
        if n % stride == 0 or n == params.steps:
            out.append((n, ScalarField(z0.grid, z.copy())))
    return out


@dataclass(frozen=True)
class TestProcess:
    """Comparison-process specification: initial state plus source term.

    The source may be None (no drift), a constant array, or a callable
    step -> array, understood as piecewise constant on the solver time grid.
    """

    z0: ScalarField
    source: object = None

    def iterate(self, model: NoiseModel, increments: np.ndarray, params: SolverParams):
        return iterate_test_process(self.z0.values, self.source, model, increments, params)
