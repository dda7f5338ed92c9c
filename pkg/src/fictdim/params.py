"""Equation parameters, exponents and the scaling group.

The equation family is

    u_t = |Du|^(q-2) (Delta u + (p-2) Delta_inf^N u),

whose radial solutions solve a q-parabolic equation in the (real)
fictitious dimension ``d = (n-1)(q-1)/(p-1) + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

# |q - 2| below this counts as the linear (heat-type) case
Q_LINEAR_TOL = 1e-12


class Regime(str, Enum):
    SLOW = "slow"
    LINEAR = "linear"
    FAST = "fast"


@dataclass(frozen=True)
class EquationParams:
    n: int
    p: float
    q: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be an integer >= 1, got {self.n!r}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p!r}")
        if not self.q > 1:
            raise ValueError(f"q must exceed 1, got {self.q!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "q", float(self.q))

    @property
    def kappa(self) -> float:
        return self.q - self.p

    @property
    def gamma(self) -> float:
        return self.q - 2.0

    @property
    def trivial(self) -> bool:
        """n = 1: the equation is already a 1-D q-Laplace equation (d = 1)."""
        return self.n == 1

    @property
    def diffusion_factor(self) -> float:
        """The constant (p-1)/(q-1) in front of the weighted q-Laplacian."""
        return (self.p - 1.0) / (self.q - 1.0)


@dataclass(frozen=True)
class DerivedExponents:
    d: float
    lam: float
    alpha: float
    spread: float
    sigma: float
    mu: float


def fictitious_dimension(n, p, q):
    return (n - 1) * (q - 1) / (p - 1) + 1.0


def derive(params: EquationParams) -> DerivedExponents:
    n, p, q = params.n, params.p, params.q
    d = fictitious_dimension(n, p, q)
    lam = d * (q - 2.0) + q
    sigma = d - n
    # alpha, spread and mu are meaningless when lam <= 0 (below the range)
    if lam != 0.0:
        alpha, spread, mu = d / lam, 1.0 / lam, sigma / lam
    else:
        alpha = spread = mu = float("inf")
    return DerivedExponents(d=d, lam=lam, alpha=alpha, spread=spread, sigma=sigma, mu=mu)


def range_condition(params: EquationParams) -> bool:
    """2n < q(n-1) + 2p, cross-checked against lambda > 0 and the piecewise form."""
    n, p, q = params.n, params.p, params.q
    direct = 2 * n < q * (n - 1) + 2 * p
    lam_form = derive(params).lam > 0
    if p >= (1 + n) / 2:
        piecewise = q > 1
    else:
        piecewise = q > 2 * (n - p) / (n - 1)
    # the three forms only disagree through rounding right at the threshold
    if not (direct == lam_form == piecewise):
        margin = abs(q * (n - 1) + 2 * p - 2 * n)
        if margin > 1e-9 * max(1.0, 2 * n):
            raise AssertionError(
                f"range-condition forms disagree for {params}: "
                f"direct={direct} lambda={lam_form} piecewise={piecewise}"
            )
    return direct


def regime(params: EquationParams) -> Regime:
    if abs(params.q - 2.0) <= Q_LINEAR_TOL:
        return Regime.LINEAR
    return Regime.SLOW if params.q > 2.0 else Regime.FAST


def scaling_transform(params: EquationParams, A: float, B: float) -> float:
    """Time factor C making A u(Bx, Ct) a solution whenever u is one."""
    if not (A > 0 and B > 0):
        raise ValueError("scaling factors must be positive")
    return A ** (params.q - 2.0) * B ** params.q


def mass_preserving_scaling(params: EquationParams, B: float) -> tuple[float, float]:
    """(A, C) with A = B^d, so that B^d u(Bx, B^lambda t) keeps the d-mass."""
    if not B > 0:
        raise ValueError("space factor must be positive")
    ex = derive(params)
    return B ** ex.d, B ** ex.lam
