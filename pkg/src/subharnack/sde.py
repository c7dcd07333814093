"""Model definitions and the Euler integrator for equations of the form

    X_t = X_0 + int_0^t b_s(X_s) ds + int_0^t sigma_s dW_{S(s)} + V_t.

Drifts carry a one-sided Lipschitz bound K_t, diffusions an inverse-norm
bound lambda_t; both bounds feed the certified inequality constants.  Drift
and observable callables must accept batched states of shape (..., d) so
that Monte Carlo replication stays vectorized.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .parallel import CHUNK_SIZE, map_index_chunks
from .pathgen import ClockLaw, RngStream, TimeGrid, bm_increments
from .stats import MCEstimate

__all__ = [
    "DriftModel",
    "DiffusionModel",
    "PerturbationModel",
    "SdeModel",
    "Trajectory",
    "IntegrationError",
    "integrate",
    "yoshida_drift",
    "semigroup_estimate",
    "terminal_states",
    "make_model",
    "validate_one_sided_bound",
    "validate_diffusion",
]


class IntegrationError(RuntimeError):
    """Raised when stepping produces non-finite states."""

    def __init__(self, step_index, n_failed=1):
        super().__init__(
            f"non-finite state at step {step_index} in {n_failed} path(s); "
            "the drift may be stiff or the grid too coarse"
        )
        self.step_index = step_index
        self.n_failed = n_failed


@dataclass(frozen=True)
class DriftModel:
    """Drift b_t(x) with a one-sided Lipschitz bound K_t.

    ``func(t, x)`` must accept x of shape (..., d) and return the same shape.
    ``one_sided_bound(t)`` returns K_t with
    <b_t(x) - b_t(y), x - y> <= K_t |x - y|^2.

    ``implicit_solve(t, h, rhs)``, when provided, returns the resolvent
    y with y - h b_t(y) = rhs for batched rhs; it enables the vectorized
    semi-implicit drift step (explicit Euler can blow up for superlinear
    drifts under unbounded noise kicks).
    """

    func: callable
    one_sided_bound: callable
    lipschitz_global: float | None = None
    implicit_solve: callable | None = None


@dataclass(frozen=True)
class DiffusionModel:
    """Invertible diffusion sigma_t with operator-norm bound on its inverse."""

    matrix: callable
    inverse: callable
    inverse_norm_bound: callable  # lambda_t >= ||sigma_t^{-1}||
    isotropic_scale: float | None = None

    @classmethod
    def isotropic(cls, scale, dim=None):
        if scale <= 0:
            raise ValueError("isotropic diffusion needs a positive scale")
        del dim
        eye = None

        def matrix(t, _s=scale):
            return _s

        def inverse(t, _s=scale):
            return 1.0 / _s

        del eye
        return cls(
            matrix=matrix,
            inverse=inverse,
            inverse_norm_bound=lambda t, _s=scale: 1.0 / _s,
            isotropic_scale=float(scale),
        )

    @classmethod
    def constant(cls, mat):
        mat = np.asarray(mat, dtype=float)
        inv = np.linalg.inv(mat)
        bound = float(np.linalg.norm(inv, 2))
        return cls(
            matrix=lambda t: mat,
            inverse=lambda t: inv,
            inverse_norm_bound=lambda t: bound,
        )

    def apply(self, t, vecs):
        if self.isotropic_scale is not None:
            return self.isotropic_scale * vecs
        return vecs @ np.asarray(self.matrix(t)).T

    def apply_inverse(self, t, vecs):
        if self.isotropic_scale is not None:
            return vecs / self.isotropic_scale
        return vecs @ np.asarray(self.inverse(t)).T


@dataclass(frozen=True)
class PerturbationModel:
    """Additive perturbation path V_t with V_0 = 0.

    Supported kinds: identically zero, a deterministic function of time, or
    values pre-sampled on the integration grid (one shared path).
    """

    kind: str
    dim: int
    func: callable | None = None
    sample_grid: TimeGrid | None = None
    samples: np.ndarray | None = None

    @classmethod
    def zero(cls, dim):
        return cls(kind="zero", dim=dim)

    @classmethod
    def from_function(cls, func, dim):
        v0 = np.asarray(func(0.0), dtype=float)
        if not np.allclose(v0, 0.0, atol=1e-12):
            raise ValueError("perturbation must start at V_0 = 0")
        return cls(kind="deterministic", dim=dim, func=func)

    @classmethod
    def from_samples(cls, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != grid.times.size:
            raise ValueError("sampled perturbation must live on the grid")
        if not np.allclose(values[0], 0.0, atol=1e-12):
            raise ValueError("perturbation must start at V_0 = 0")
        return cls(kind="sampled", dim=values.shape[1], sample_grid=grid, samples=values)

    def values_on(self, grid: TimeGrid):
        if self.kind == "zero":
            return np.zeros((grid.times.size, self.dim))
        if self.kind == "deterministic":
            return np.stack([np.asarray(self.func(t), dtype=float) for t in grid.times])
        if not np.array_equal(self.sample_grid.times, grid.times):
            raise ValueError("sampled perturbation grid does not match the integration grid")
        return self.samples


@dataclass(frozen=True)
class SdeModel:
    """Bundle of drift, diffusion, and perturbation on R^d."""

    dim: int
    drift: DriftModel
    diffusion: DiffusionModel
    perturbation: PerturbationModel
    label: str = "custom"
    params: dict = field(default_factory=dict)

    def k_bound(self, t):
        return self.drift.one_sided_bound(t)

    def lambda_bound(self, t):
        return self.diffusion.inverse_norm_bound(t)

    def terminal_states(self, x0, grid, clock_law, n_paths, stream, workers=1, method="euler"):
        return terminal_states(self, x0, grid, clock_law, n_paths, stream, workers=workers, method=method)


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (M+1, d)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        object.__setattr__(self, "states", states)
        if states.shape[0] != self.grid.times.size:
            raise ValueError("states and grid have different lengths")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite states")

    @property
    def terminal(self):
        return self.states[-1]

    def to_csv(self, file_path):
        d = self.states.shape[1]
        with open(file_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"X_{j + 1}" for j in range(d)])
            for t, row in zip(self.grid.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def _newton_solve(residual, x_start, tol=1e-12, max_iter=100, fd_eps=1e-7):
    """Damped Newton with finite-difference Jacobians for small systems."""
    x = np.array(x_start, dtype=float)
    d = x.size
    res = residual(x)
    norm = float(np.linalg.norm(res))
    for _ in range(max_iter):
        if norm <= tol:
            return x
        jac = np.empty((d, d))
        for j in range(d):
            bumped = x.copy()
            step = fd_eps * max(1.0, abs(x[j]))
            bumped[j] += step
            jac[:, j] = (residual(bumped) - res) / step
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            delta = -res
        damping = 1.0
        for _ in range(40):
            candidate = x + damping * delta
            cand_res = residual(candidate)
            cand_norm = float(np.linalg.norm(cand_res))
            if cand_norm < norm:
                x, res, norm = candidate, cand_res, cand_norm
                break
            damping *= 0.5
        else:
            break
    if norm > tol:
        raise RuntimeError(f"Newton iteration stalled at residual {norm:.3e}")
    return x


def _implicit_drift_map(model: SdeModel, t, h, states):
    """Resolve y - h b_t(y) = states, vectorized when the model supports it."""
    if model.drift.implicit_solve is not None:
        return np.asarray(model.drift.implicit_solve(t, h, states), dtype=float)
    out = np.empty_like(states)
    for p in range(states.shape[0]):
        def residual(x, _rhs=states[p], _t=t, _h=h):
            return x - _h * np.asarray(model.drift.func(_t, x), dtype=float) - _rhs
        out[p] = _newton_solve(residual, states[p])
    return out


def euler_steps(model: SdeModel, x0s, grid: TimeGrid, dw, keep_path=False, method="euler"):
    """One-step integrators over a batch of paths sharing the grid.

    x0s has shape (n, d) and dw shape (n, M, d).  Method "euler" is the
    explicit scheme with the drift at the left endpoint.  Method
    "semi_implicit" splits the step: the drift moves through its resolvent
    (y - h b(y) = x) before the noise is added, which stays stable for
    strongly contracting or superlinear drifts where the explicit step can
    oscillate or blow up.
    """
    if method not in ("euler", "semi_implicit"):
        raise ValueError(f"unknown integration method {method!r}")
    times = grid.times
    steps = grid.step_sizes
    states = np.array(x0s, dtype=float)
    v_values = model.perturbation.values_on(grid)
    history = [states.copy()] if keep_path else None
    for i in range(grid.n_steps):
        t, h = times[i], steps[i]
        noise = model.diffusion.apply(t, dw[:, i, :])
        dv = v_values[i + 1] - v_values[i]
        if method == "euler":
            states = states + model.drift.func(t, states) * h + noise + dv
        else:
            states = _implicit_drift_map(model, t, h, states) + noise + dv
        bad = ~np.all(np.isfinite(states), axis=-1)
        if np.any(bad):
            raise IntegrationError(step_index=i, n_failed=int(bad.sum()))
        if keep_path:
            history.append(states.copy())
    if keep_path:
        return np.stack(history, axis=1)  # (n, M+1, d)
    return states


def integrate(x0, model: SdeModel, bm, grid: TimeGrid | None = None, method="euler") -> Trajectory:
    """Integrate one path of the equation driven by the given increments."""
    grid = grid or bm.grid
    if not np.array_equal(grid.times, bm.grid.times):
        raise ValueError("noise path and grid are not aligned")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != model.dim:
        raise ValueError("initial condition dimension does not match the model")
    path = euler_steps(model, x0[None, :], grid, bm.increments[None, :, :], keep_path=True, method=method)
    return Trajectory(grid=grid, states=path[0])


def yoshida_drift(drift_func, n, t, x, tol=1e-12, max_iter=100):
    """Resolvent approximation of a dissipative drift.

    Returns n * (y - x) where y solves y - b_t(y)/n = x.  The result is
    globally Lipschitz, stays dissipative, and its norm never exceeds the
    norm of the original drift (checked within 1e-10).
    """
    if n <= 0:
        raise ValueError("resolvent index n must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def residual(y):
        return y - np.asarray(drift_func(t, y), dtype=float) / n - x

    try:
        y = _newton_solve(residual, x, tol=tol, max_iter=max_iter)
    except RuntimeError as exc:
        raise RuntimeError(f"Yoshida resolvent solve failed: {exc}") from exc
    out = n * (y - x)
    full = np.asarray(drift_func(t, x), dtype=float)
    if np.linalg.norm(out) > np.linalg.norm(full) + 1e-10:
        raise RuntimeError(
            "resolvent drift exceeded the original drift norm; "
            "the supplied drift is not dissipative"
        )
    return out


def terminal_states(model: SdeModel, x0, grid: TimeGrid, clock_law: ClockLaw, n_paths, stream: RngStream, workers=1, method="euler"):
    """Terminal values X_T for n_paths independent (S, W) draws.

    Paths are generated in fixed-size chunks with one counter-based stream
    per chunk, so the result is independent of worker count.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((n_paths, model.dim))

    def run_chunk(chunk_index, start, stop):
        gen = stream.child(replicate=chunk_index).generator()
        count = stop - start
        clock = clock_law.sample_raw(grid, gen, count)
        dw = bm_increments(clock, model.dim, gen)
        x0s = np.broadcast_to(x0, (count, model.dim))
        out[start:stop] = euler_steps(model, x0s, grid, dw, method=method)

    map_index_chunks(n_paths, CHUNK_SIZE, run_chunk, workers)
    return out


def semigroup_estimate(f, x0, model: SdeModel, clock_law: ClockLaw, grid: TimeGrid, n_paths, stream: RngStream, workers=1, method="euler") -> MCEstimate:
    """Monte Carlo estimate of E f(X_T(x0)).

    The observable must be bounded measurable (caller contract) and accept
    batched states of shape (n, d).
    """
    if n_paths < 2:
        raise ValueError("need at least two paths for a standard error")
    finals = terminal_states(model, x0, grid, clock_law, n_paths, stream, workers=workers, method=method)
    return MCEstimate.from_samples(np.asarray(f(finals), dtype=float))


def _double_well_resolvent(t, h, rhs):
    """Componentwise Newton for y (1 - h) + h y^3 = rhs (monotone in y)."""
    rhs = np.asarray(rhs, dtype=float)
    y = np.array(rhs)
    for _ in range(80):
        residual = y * (1.0 - h) + h * y**3 - rhs
        slope = (1.0 - h) + 3.0 * h * y * y
        step = residual / slope
        y = y - step
        if np.max(np.abs(step)) < 1e-13:
            break
    return y


def make_model(name, dim=1, sigma_scale=1.0, perturbation=None, **params) -> SdeModel:
    """Built-in model zoo addressable by name.

    * ``zero``        b = 0, K = 0
    * ``ou``          b = -rate * x, K = -rate
    * ``double_well`` b = x - x^3 componentwise, K = 1
    * ``rotating``    d = 2, skew rotation plus contraction, K = -contraction

    All zoo drifts are locally Lipschitz; merely continuous drifts with a
    one-sided bound are outside the zoo because explicit Euler has no
    guaranteed rate for them.
    """
    diffusion = DiffusionModel.isotropic(sigma_scale)
    perturbation = perturbation or PerturbationModel.zero(dim)
    if name == "zero":
        drift = DriftModel(
            func=lambda t, x: np.zeros_like(x),
            one_sided_bound=lambda t: 0.0,
            lipschitz_global=0.0,
            implicit_solve=lambda t, h, rhs: rhs,
        )
    elif name == "ou":
        rate = float(params.pop("rate", 1.0))
        if rate <= 0:
            raise ValueError("ou rate must be positive")
        drift = DriftModel(
            func=lambda t, x, _a=rate: -_a * x,
            one_sided_bound=lambda t, _a=rate: -_a,
            lipschitz_global=rate,
            implicit_solve=lambda t, h, rhs, _a=rate: rhs / (1.0 + _a * h),
        )
        params = {"rate": rate, **params}
    elif name == "double_well":
        drift = DriftModel(
            func=lambda t, x: x - x**3,
            one_sided_bound=lambda t: 1.0,
            lipschitz_global=None,
            implicit_solve=_double_well_resolvent,
        )
    elif name == "rotating":
        if dim != 2:
            raise ValueError("rotating model is two-dimensional")
        omega = float(params.pop("omega", 1.0))
        contraction = float(params.pop("contraction", 0.5))
        if contraction <= 0:
            raise ValueError("rotating model needs a positive contraction")
        mat = np.array([[-contraction, -omega], [omega, -contraction]])
        drift = DriftModel(
            func=lambda t, x, _m=mat: x @ _m.T,
            one_sided_bound=lambda t, _c=contraction: -_c,
            lipschitz_global=float(np.hypot(contraction, omega)),
            implicit_solve=lambda t, h, rhs, _m=mat: rhs @ np.linalg.inv(np.eye(2) - h * _m).T,
        )
        params = {"omega": omega, "contraction": contraction, **params}
    else:
        raise ValueError(f"unknown model {name!r}")
    if params and name in ("zero", "double_well"):
        raise ValueError(f"model {name!r} takes no extra parameters: {sorted(params)}")
    return SdeModel(
        dim=dim,
        drift=drift,
        diffusion=diffusion,
        perturbation=perturbation,
        label=name,
        params={"sigma_scale": sigma_scale, **params},
    )


def validate_one_sided_bound(drift: DriftModel, dim, t_points=(0.0, 0.5, 1.0), n_probes=1000, seed=0, tol=1e-10, box=3.0):
    """Check <b(x)-b(y), x-y> <= K_t |x-y|^2 on randomized probe pairs."""
    gen = np.random.default_rng(seed)
    for t in t_points:
        k_t = drift.one_sided_bound(t)
        x = gen.uniform(-box, box, size=(n_probes, dim))
        y = gen.uniform(-box, box, size=(n_probes, dim))
        gap = np.einsum(
            "ij,ij->i", np.asarray(drift.func(t, x)) - np.asarray(drift.func(t, y)), x - y
        )
        dist_sq = np.einsum("ij,ij->i", x - y, x - y)
        if np.any(gap > k_t * dist_sq + tol):
            worst = float(np.max(gap - k_t * dist_sq))
            raise ValueError(f"one-sided bound violated at t={t} by {worst:.3e}")


def validate_diffusion(diffusion: DiffusionModel, dim, t_points=(0.0, 0.5, 1.0), tol=1e-12):
    """Check sigma sigma^{-1} = I and the operator-norm bound on the probe grid."""
    eye = np.eye(dim)
    for t in t_points:
        mat = np.asarray(diffusion.matrix(t), dtype=float)
        inv = np.asarray(diffusion.inverse(t), dtype=float)
        if mat.ndim == 0:
            mat = float(mat) * eye
        if inv.ndim == 0:
            inv = float(inv) * eye
        if np.max(np.abs(mat @ inv - eye)) > tol:
            raise ValueError(f"sigma * sigma^-1 differs from identity at t={t}")
        if np.linalg.norm(inv, 2) > diffusion.inverse_norm_bound(t) + tol:
            raise ValueError(f"inverse norm bound violated at t={t}")
