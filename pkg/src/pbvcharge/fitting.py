"""Fit result container and the bounded least-squares driver shared by all estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError


@dataclass
class FitResult:
    params: dict
    stderr: dict
    residual_norm: float = 0.0
    converged: bool = True
    iterations: int = 0
    flags: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self) -> dict:
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "stderr": {k: float(v) for k, v in self.stderr.items()},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "flags": list(self.flags),
        }


def covariance(jac, residuals, n_params, absolute_sigma):
    """Parameter covariance from the Jacobian of (weighted) residuals at the optimum."""
    jtj = jac.T @ jac
    try:
        cov = np.linalg.pinv(jtj)
    except np.linalg.LinAlgError:
        return np.full((n_params, n_params), np.inf)
    if not absolute_sigma:
        dof = len(residuals) - n_params
        cov = cov * (float(residuals @ residuals) / dof if dof > 0 else np.inf)
    return cov


def run_least_squares(residual_fn, x0, names, bounds=(-np.inf, np.inf), absolute_sigma=False,
                      max_nfev=2000, tol=1e-12, x_scale="jac"):
    """Minimise ``sum(residual_fn(x)**2)`` and package the optimum as a :class:`FitResult`.

    Raises :class:`FitError` if the optimiser stops without converging.
    """
    x0 = np.asarray(x0, dtype=float)
    lo, hi = bounds
    lo = np.broadcast_to(np.asarray(lo, dtype=float), x0.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x0.shape)
    x0 = np.clip(x0, lo, hi)
    res = least_squares(residual_fn, x0, bounds=(lo, hi), method="trf", x_scale=x_scale,
                        xtol=tol, ftol=tol, gtol=tol, max_nfev=max_nfev)
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitError(f"least squares did not converge: {res.message}",
                       {"status": int(res.status), "nfev": int(res.nfev),
                        "x": [float(v) for v in res.x], "cost": float(res.cost)})
    cov = covariance(res.jac, res.fun, len(x0), absolute_sigma)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
    return FitResult(
        params=dict(zip(names, (float(v) for v in res.x))),
        stderr=dict(zip(names, (float(v) for v in err))),
        residual_norm=float(math.sqrt(2.0 * res.cost)),
        converged=True,
        iterations=int(res.nfev),
    )
