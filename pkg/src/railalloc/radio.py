"""Link budget, per-user Shannon rates and the network-capacity objective.

All quantities at the API boundary are SI: Hz, W, metres, bit/s. dB and dBm
appear only in the :func:`RadioParams.from_table` constructor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (InvalidArgumentError, SingularGradientError, UndefinedAverageError,
                     ZeroDistanceError)
from .geometry import Point2D, Scenario

SPEED_OF_LIGHT = 299_792_458.0
LN2 = math.log(2.0)


@dataclass(frozen=True)
class AntennaModel:
    """Gaussian main lobe plus constant side lobe, parameterised by the
    half-power beamwidth in degrees."""

    theta_3db: float = 30.0

    def __post_init__(self):
        if not 0 < self.theta_3db < 180:
            raise InvalidArgumentError("theta_3db must lie in (0, 180) degrees")

    @property
    def theta_ml(self) -> float:
        return 2.6 * self.theta_3db

    @property
    def g0_db(self) -> float:
        return 10.0 * math.log10((1.6162 / math.sin(math.radians(self.theta_3db) / 2)) ** 2)

    @property
    def gsl_db(self) -> float:
        return -0.4111 * math.log(self.theta_3db) - 10.579


def gain_db(theta: float, antenna: AntennaModel) -> float:
    """Antenna gain in dB at ``theta`` degrees off boresight.

    The main-lobe branch holds up to and including theta_ml/2; past it the gain
    drops to the side-lobe floor. The jump at theta_ml/2 is part of the model.
    """
    if not 0.0 <= theta <= 180.0:
        raise InvalidArgumentError(f"theta={theta} outside [0, 180] degrees")
    if theta <= antenna.theta_ml / 2:
        return antenna.g0_db - 3.01 * (2.0 * theta / antenna.theta_3db) ** 2
    return antenna.gsl_db


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class RadioParams:
    carrier_hz: float = 60e9
    path_loss_exp: float = 2.0
    pt_watts: float = 1.0
    eta: float = 0.5
    n0_w_per_hz: float = 10.0 ** ((-134.0 - 30.0) / 10.0) / 1e6
    beta: float = 1e-7
    p_b: float = 0.2
    antenna: AntennaModel = field(default_factory=AntennaModel)

    def __post_init__(self):
        for name in ("carrier_hz", "path_loss_exp", "n0_w_per_hz"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not self.pt_watts >= 0:
            raise InvalidArgumentError("pt_watts must be non-negative")
        if not 0 < self.eta < 1:
            raise InvalidArgumentError("eta must lie in (0, 1)")
        if not self.beta >= 0:
            raise InvalidArgumentError("beta must be non-negative")
        if not 0 <= self.p_b <= 1:
            raise InvalidArgumentError("p_b must lie in [0, 1]")

    @classmethod
    def from_table(cls, *, carrier_ghz=60.0, pt_mw=1000.0, path_loss_exp=2.0, eta=0.5,
                   n0_dbm_per_mhz=-134.0, theta_3db_deg=30.0, p_b=0.2, beta=1e-7):
        """Build from the units used in configuration files (GHz, mW, dBm/MHz)."""
        return cls(carrier_hz=carrier_ghz * 1e9,
                   path_loss_exp=path_loss_exp,
                   pt_watts=pt_mw / 1e3,
                   eta=eta,
                   n0_w_per_hz=10.0 ** ((n0_dbm_per_mhz - 30.0) / 10.0) / 1e6,
                   beta=beta,
                   p_b=p_b,
                   antenna=AntennaModel(theta_3db_deg))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def k0(self) -> float:
        return (self.wavelength / (4 * math.pi)) ** 2

    @property
    def si_power(self) -> float:
        """Residual self-interference power at a full-duplex relay."""
        return self.beta * self.pt_watts


def received_power(tx: Point2D, rx: Point2D, params: RadioParams,
                   tx_gain_db: float, rx_gain_db: float) -> float:
    d = tx.distance(rx)
    if d == 0:
        raise ZeroDistanceError("transmitter and receiver coincide")
    g = db_to_linear(tx_gain_db) * db_to_linear(rx_gain_db)
    return params.k0 * g * d ** (-params.path_loss_exp) * params.pt_watts


def user_rate(pr: float, w_s: float, interference: float, params: RadioParams) -> float:
    if w_s < 0 or pr < 0 or interference < 0:
        raise InvalidArgumentError("power, bandwidth and interference must be non-negative")
    if w_s == 0 or pr == 0:
        return 0.0
    return params.eta * w_s * math.log1p(pr / (params.n0_w_per_hz * w_s + interference)) / LN2


class LinkBudget:
    """Serving-link powers of a scenario, flattened for vectorised evaluation.

    Every device term is ``eta*W*a*mean_k log2(1 + P_k/(N0*W*a + I_s))`` with
    ``a`` its bandwidth share; the network capacity is ``(1-P_b)`` times their sum.
    Devices without users contribute nothing.
    """

    def __init__(self, scenario: Scenario, w_total: float, params: RadioParams):
        if not w_total > 0:
            raise InvalidArgumentError("w_total must be positive")
        d = scenario.serving_distances
        if np.any(d == 0):
            raise ZeroDistanceError("a user sits exactly on its serving device")
        g0 = db_to_linear(params.antenna.g0_db)
        self.scenario = scenario
        self.params = params
        self.w_total = float(w_total)
        self.n_devices = scenario.n_devices
        self.device_of_user = scenario.association
        self.counts = scenario.user_counts.astype(float)
        self.powers = params.k0 * g0 * g0 * d ** (-params.path_loss_exp) * params.pt_watts
        interference = np.full(self.n_devices, params.si_power)
        interference[0] = 0.0  # the base station is half-duplex
        self.interference = interference
        self.active = self.counts > 0
        self.factor = 1.0 - params.p_b

    def _per_user(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if a.shape != (self.n_devices,):
            raise InvalidArgumentError(f"alpha must have {self.n_devices} entries")
        x = self.params.n0_w_per_hz * self.w_total * a[self.device_of_user]
        i = self.interference[self.device_of_user]
        return a, x, i, self.powers

    def _device_mean(self, per_user):
        sums = np.bincount(self.device_of_user, weights=per_user, minlength=self.n_devices)
        out = np.zeros(self.n_devices)
        np.divide(sums, self.counts, out=out, where=self.active)
        return out

    def device_terms(self, alpha) -> np.ndarray:
        """Average user rate of every device (0 for empty devices), in bit/s."""
        a, u0, i, p = self._per_user(alpha)
        u = u0 + i
        with np.errstate(divide="ignore", invalid="ignore"):
            spectral = np.where(u > 0, np.log1p(p / np.where(u > 0, u, 1.0)) / LN2, 0.0)
        eta_w = self.params.eta * self.w_total
        return eta_w * a * self._device_mean(spectral)

    def capacity(self, alpha) -> float:
        return self.factor * float(np.sum(self.device_terms(alpha)))

    def _check_singular(self, a):
        bad = self.active & (a <= 0) & (self.interference == 0)
        if np.any(bad):
            raise SingularGradientError(
                f"capacity gradient diverges at zero share for devices {np.flatnonzero(bad).tolist()}")

    def gradient(self, alpha) -> np.ndarray:
        """Exact partial derivatives of :meth:`capacity` in each share."""
        a, x, i, p = self._per_user(alpha)
        self._check_singular(a)
        u = x + i
        v = u + p
        # d/dw [w log2(1 + P/(N0 w + I))] = log2(1 + P/u) - N0 w P / (ln2 u v)
        g = (np.log1p(p / u) - (x / u) * (p / v)) / LN2
        return self.factor * self.params.eta * self.w_total * self._device_mean(g)

    def hessian_diag(self, alpha) -> np.ndarray:
        """Second derivatives; the objective is separable so the Hessian is diagonal."""
        a, x, i, p = self._per_user(alpha)
        self._check_singular(a)
        u = x + i
        v = u + p
        n0w = self.params.n0_w_per_hz * self.w_total
        h = (n0w * p / (u * v)) * (x * (u + v) / (u * v) - 2.0) / LN2
        return self.factor * self.params.eta * self.w_total * self._device_mean(h)


def _validate_alpha(alpha, n):
    a = np.asarray(alpha, dtype=float)
    if a.shape != (n,):
        raise InvalidArgumentError(f"alpha must have {n} entries")
    if np.any(a < 0) or np.any(a > 1) or abs(a.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError("alpha must lie on the probability simplex")
    return a


def device_avg_rate(scenario: Scenario, device_index: int, alpha, w_total: float,
                    params: RadioParams) -> float:
    budget = LinkBudget(scenario, w_total, params)
    a = _validate_alpha(alpha, budget.n_devices)
    if not budget.active[device_index]:
        raise UndefinedAverageError(f"device {device_index} has no associated users")
    return float(budget.device_terms(a)[device_index])


def network_capacity(scenario: Scenario, alpha, w_total: float, params: RadioParams) -> float:
    budget = LinkBudget(scenario, w_total, params)
    return budget.capacity(_validate_alpha(alpha, budget.n_devices))


def capacity_gradient(scenario: Scenario, alpha, w_total: float, params: RadioParams) -> np.ndarray:
    budget = LinkBudget(scenario, w_total, params)
    return budget.gradient(alpha)
