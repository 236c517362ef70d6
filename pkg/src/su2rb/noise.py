"""Gate-noise channels and SPAM-error models."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spinrep import spin_rotation
from .superop import Superoperator, _channel, _from_mu, elementwise_error_rates, exact_error_rates
from .wigner import DomainError, twice

__all__ = [
    "NoiseModel", "SpamModel", "gate_error_channel", "gate_error_rates", "noisy_preparations", "noisy_povm",
    "draw_spam_model", "random_unit_vectors", "NoiseAction", "noise_action",
]

NOISE_KINDS = ("none", "coherent_jz2", "dephasing", "custom_kraus")
MEAS_KINDS = ("ideal", "coherent_rotation", "permutation")


def _levels(tj: int) -> np.ndarray:
    return (tj - 2 * np.arange(tj + 1)) / 2


@dataclass(frozen=True)
class NoiseModel:
    """Gate-independent Markovian error applied after every ideal gate."""

    kind: str = "none"
    gamma: float = 0.0
    kraus: tuple = ()

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.gamma < 0:
            raise DomainError("noise strength gamma must be non-negative")
        if self.kind == "custom_kraus" and not self.kraus:
            raise DomainError("custom_kraus noise needs at least one Kraus operator")


def _coherent_unitary(tj: int, gamma: float) -> np.ndarray:
    lv = _levels(tj)
    return np.diag(np.exp(-1j * gamma * lv ** 2))


def _dephasing_mask(tj: int, gamma: float) -> np.ndarray:
    lv = _levels(tj)
    return np.exp(-gamma * (lv[:, None] - lv[None, :]) ** 2)


def gate_error_channel(j, model: NoiseModel) -> Superoperator:
    """Superoperator of the gate error for spin j."""
    tj = twice(j)
    d = tj + 1
    if model.kind == "none" or model.gamma == 0 and model.kind != "custom_kraus":
        return Superoperator(tj, np.eye(d * d, dtype=complex))
    if model.kind == "coherent_jz2":
        return _channel(tj, [_coherent_unitary(tj, model.gamma)])
    if model.kind == "dephasing":
        return _from_mu(tj, np.diag(_dephasing_mask(tj, model.gamma).reshape(-1)).astype(complex))
    return _channel(tj, [np.asarray(k) for k in model.kraus])


def gate_error_rates(j, model: NoiseModel) -> np.ndarray:
    """Error rates ``p_k`` of the twirled gate error, accurate even for tiny entries."""
    tj = twice(j)
    lv = _levels(tj)
    if model.kind == "none" or model.kind != "custom_kraus" and model.gamma == 0:
        return elementwise_error_rates(tj, np.zeros((tj + 1, tj + 1)))
    if model.kind == "coherent_jz2":
        sq = lv ** 2
        return elementwise_error_rates(tj, np.expm1(-1j * model.gamma * (sq[:, None] - sq[None, :])))
    if model.kind == "dephasing":
        return elementwise_error_rates(tj, np.expm1(-model.gamma * (lv[:, None] - lv[None, :]) ** 2))
    return exact_error_rates(gate_error_channel(j, model))


class NoiseAction:
    """Batched application of a noise model to density matrices (..., d, d).

    ``unitary`` is set when the error is a single unitary, so callers can
    fold it into the gate.
    """

    def __init__(self, tj: int, model: NoiseModel):
        self.twice_j = tj
        self.unitary = None
        self.mask = None
        self.kraus = None
        if model.kind == "none" or (model.kind != "custom_kraus" and model.gamma == 0):
            self.unitary = np.eye(tj + 1, dtype=complex)
            self.identity = True
            return
        self.identity = False
        if model.kind == "coherent_jz2":
            self.unitary = _coherent_unitary(tj, model.gamma)
        elif model.kind == "dephasing":
            self.mask = _dephasing_mask(tj, model.gamma)
        else:
            ks = [np.asarray(k, dtype=complex) for k in model.kraus]
            if len(ks) == 1:
                self.unitary = ks[0]
            else:
                self.kraus = np.array(ks)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        if self.identity:
            return rho
        if self.unitary is not None:
            return self.unitary @ rho @ self.unitary.conj().T
        if self.mask is not None:
            return rho * self.mask
        out = np.zeros_like(rho)
        for k in self.kraus:
            out += k @ rho @ k.conj().T
        return out


def noise_action(j, model: NoiseModel) -> NoiseAction:
    return NoiseAction(twice(j), model)


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class SpamModel:
    """State-preparation and measurement errors, frozen at construction.

    ``prep_axes`` holds one unit vector per level (descending l); the
    measurement error is either a rotation by ``phi`` about ``meas_axis``
    or a relabelling of the ideal effects by ``permutation``
    (effect i becomes the ideal projector onto level ``permutation[i]``).
    """

    phi: float = 0.0
    prep_axes: tuple | None = None
    meas_kind: str = "ideal"
    meas_axis: tuple | None = None
    permutation: tuple | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.meas_kind not in MEAS_KINDS:
            raise DomainError(f"unknown measurement error kind {self.meas_kind!r}")

    def describe(self) -> dict:
        return {
            "phi": self.phi,
            "prep_axes": None if self.prep_axes is None else [list(a) for a in self.prep_axes],
            "meas_kind": self.meas_kind,
            "meas_axis": None if self.meas_axis is None else list(self.meas_axis),
            "permutation": None if self.permutation is None else list(self.permutation),
        }


def draw_spam_model(j, phi: float, meas_kind: str, rng: np.random.Generator) -> SpamModel:
    """Draw per-level preparation axes, an independent measurement axis and a permutation.

    The same draws are made for every measurement kind so that protocol
    comparisons at a fixed seed see identical preparation errors.
    """
    tj = twice(j)
    d = tj + 1
    axes = random_unit_vectors(rng, d)
    meas_axis = random_unit_vectors(rng, 1)[0]
    perm = rng.permutation(d)
    return SpamModel(
        phi=float(phi),
        prep_axes=tuple(tuple(float(x) for x in a) for a in axes),
        meas_kind=meas_kind,
        meas_axis=tuple(float(x) for x in meas_axis) if meas_kind == "coherent_rotation" else None,
        permutation=tuple(int(p) for p in perm) if meas_kind == "permutation" else None,
    )


def noisy_preparations(j, spam: SpamModel, rng: np.random.Generator | None = None) -> np.ndarray:
    """Prepared density matrices ``V_l |l><l| V_l^dag``, stacked as (2j+1, d, d)."""
    tj = twice(j)
    d = tj + 1
    if spam.phi != 0 and spam.prep_axes is None:
        if rng is None:
            raise DomainError("preparation axes are not set and no random stream was given")
        spam = draw_spam_model(tj / 2, spam.phi, spam.meas_kind, rng)
    out = np.zeros((d, d, d), dtype=complex)
    for i in range(d):
        psi = np.zeros(d, dtype=complex)
        psi[i] = 1
        if spam.phi != 0:
            psi = spin_rotation(tj / 2, spam.phi, spam.prep_axes[i]) @ psi
        out[i] = np.outer(psi, psi.conj())
    return out


def noisy_povm(j, spam: SpamModel, rng: np.random.Generator | None = None) -> np.ndarray:
    """Measurement effects stacked as (2j+1, d, d); they always sum to the identity."""
    tj = twice(j)
    d = tj + 1
    ideal = np.zeros((d, d, d), dtype=complex)
    for i in range(d):
        ideal[i, i, i] = 1
    if spam.meas_kind == "ideal":
        return ideal
    if spam.meas_kind == "permutation":
        perm = spam.permutation
        if perm is None:
            if rng is None:
                raise DomainError("permutation is not set and no random stream was given")
            perm = tuple(rng.permutation(d))
        if sorted(perm) != list(range(d)):
            raise DomainError("not a permutation of the outcome labels")
        return ideal[list(perm)]
    axis = spam.meas_axis
    if axis is None:
        if rng is None:
            raise DomainError("measurement axis is not set and no random stream was given")
        axis = random_unit_vectors(rng, 1)[0]
    r = spin_rotation(tj / 2, spam.phi, axis)
    return r @ ideal @ r.conj().T
