"""Randomized-benchmarking engine: circuit sampling, simulation and estimators.

Every circuit compiles to the identity at the group level (or to the extra
synthetic gate ``g`` when one is used).  Outcomes are accumulated as exact
Born probabilities (infinite shots) or multinomial frequencies.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .noise import NoiseAction, NoiseModel, SpamModel, draw_spam_model, noisy_povm, noisy_preparations
from .spinrep import GroupElement, haar_quaternions, quat_multiply, rotation_matrices
from .superop import _m_matrix
from .wigner import DomainError, HalfInt, character, legendre, twice

__all__ = [
    "PROTOCOLS", "ExperimentPlan", "FrameSpec", "FiniteFrame", "ProbabilityTable", "DecayDataset",
    "NumericalHealthError", "FrameConstructionError", "sample_sequence", "run_circuit",
    "estimate", "build_finite_frame", "frame_size", "allocate_shots", "synthesis_weights",
    "SURVIVAL_LABEL",
]

PROTOCOLS = ("rb", "chirb", "r1rb", "ssrb", "sschirb", "ssr1rb", "ffrb", "ssffrb")
SYNTHETIC_SPAM = frozenset({"ssrb", "sschirb", "ssr1rb", "ssffrb"})
CHARACTER = frozenset({"chirb", "sschirb"})
RANK_ONE = frozenset({"r1rb", "ssr1rb"})
FRAME = frozenset({"ffrb", "ssffrb"})
WEIGHTED = CHARACTER | RANK_ONE | FRAME

# k label used for the raw survival probability of unweighted physical RB
SURVIVAL_LABEL = -1

BLOCK_SIZE = 64
HEALTH_TOL = 1e-10
FRAME_COND_LIMIT = 1e6
FRAME_REDRAWS = 5


class NumericalHealthError(RuntimeError):
    """Simulated probabilities left [0, 1] by more than the tolerance."""


class FrameConstructionError(RuntimeError):
    """No well-conditioned frame was found within the allowed redraws."""


# ---------------------------------------------------------------------------
# plan

@dataclass(frozen=True)
class FrameSpec:
    """Finite-frame options: ``target`` is "irrep" (Pi_k) or "rank1" (|T_k0>><<T_k0|)."""

    target: str = "irrep"

    def __post_init__(self):
        if self.target not in ("irrep", "rank1"):
            raise DomainError("frame target must be 'irrep' or 'rank1'")


@dataclass(frozen=True)
class ExperimentPlan:
    """A full campaign description.

    ``shots=None`` means exact Born probabilities.  ``circuits`` controls whether
    the preparations of a synthetic-SPAM protocol share one circuit ("shared")
    or each get their own ("independent").  ``ell`` picks the preparation and
    measured level of physical-SPAM protocols (default: the top level j).
    """

    j: HalfInt
    protocol: str
    sequence_lengths: tuple
    num_circuits: int
    shots: int | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    spam: SpamModel = field(default_factory=SpamModel)
    seed: int = 0
    frame_spec: FrameSpec | None = None
    ell: HalfInt | None = None
    circuits: str = "shared"

    def __post_init__(self):
        object.__setattr__(self, "j", HalfInt.of(self.j))
        object.__setattr__(self, "sequence_lengths", tuple(int(m) for m in self.sequence_lengths))
        if self.j.twice_value < 1:
            raise DomainError("spin must be at least 1/2")
        if self.protocol not in PROTOCOLS:
            raise DomainError(f"unknown protocol {self.protocol!r}")
        ms = self.sequence_lengths
        if not ms or ms[0] < 1 or any(b <= a for a, b in zip(ms, ms[1:])):
            raise DomainError("sequence lengths must be positive and strictly increasing")
        if self.num_circuits < 1:
            raise DomainError("need at least one circuit")
        if self.shots is not None and self.shots < 1:
            raise DomainError("shots must be positive or None for infinite")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.circuits not in ("shared", "independent"):
            raise DomainError("circuits must be 'shared' or 'independent'")
        if self.protocol in FRAME and self.frame_spec is None:
            object.__setattr__(self, "frame_spec", FrameSpec())
        if self.ell is not None:
            e = HalfInt.of(self.ell)
            tj = self.j.twice_value
            if abs(e.twice_value) > tj or (tj - e.twice_value) % 2:
                raise DomainError(f"level {e} is not a J_z eigenvalue of spin {self.j}")
            object.__setattr__(self, "ell", e)

    @property
    def level_index(self) -> int:
        tj = self.j.twice_value
        return 0 if self.ell is None else (tj - self.ell.twice_value) // 2


# ---------------------------------------------------------------------------
# circuits

def sample_sequence(m: int, rng: np.random.Generator):
    """``m`` Haar gates and the exact inverse of their product ``g_m ... g_1``."""
    if m < 1:
        raise DomainError("sequence length must be at least 1")
    q = haar_quaternions(rng, m)
    prod = np.array([1.0, 0.0, 0.0, 0.0])
    for t in range(m):
        prod = quat_multiply(q[t], prod)
    inv = prod * np.array([1.0, -1.0, -1.0, -1.0])
    return [GroupElement(tuple(x)) for x in q], GroupElement(tuple(inv))


def _check_health(p: np.ndarray) -> None:
    if np.any(p < -HEALTH_TOL) or np.any(p > 1 + HEALTH_TOL) or not np.all(np.isfinite(p)):
        raise NumericalHealthError(
            f"probabilities out of range: min {np.nanmin(p):.3e}, max {np.nanmax(p):.3e}")


def _sample_counts(rng: np.random.Generator, p: np.ndarray, shots: int) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    p = p / p.sum(axis=-1, keepdims=True)
    return rng.multinomial(shots, p)


def run_circuit(j, prep, gates, inversion, noise: NoiseModel, povm, shots: int | None = None,
                rng: np.random.Generator | None = None):
    """Simulate one circuit: each gate is followed by the noise channel.

    Returns the Born probability vector, or outcome counts when ``shots`` is set.
    """
    tj = twice(j)
    action = NoiseAction(tj, noise)
    q = np.array([g.quaternion for g in list(gates) + [inversion]])
    rho = np.asarray(prep, dtype=complex)
    for d in rotation_matrices(HalfInt(tj), q):
        rho = action(d @ rho @ d.conj().T)
    p = np.einsum("lab,ba->l", np.asarray(povm), rho).real
    _check_health(p)
    if shots is None:
        return p
    if rng is None:
        raise DomainError("finite-shot simulation needs a random stream")
    return _sample_counts(rng, p, shots)


# ---------------------------------------------------------------------------
# synthetic-gate weights

def synthesis_weights(tj: int, quats: np.ndarray, kind: str) -> np.ndarray:
    """``(2k+1) chi_k(g)`` ("character") or ``(2k+1) d^k_00(g)`` ("rank1"), shape (..., 2j+1)."""
    q = np.asarray(quats, dtype=float)
    ks = np.arange(tj + 1)
    if kind == "character":
        theta = 2 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), q[..., 0])
        return np.stack([(2 * k + 1) * np.asarray(character(int(k), theta)) for k in ks], axis=-1)
    if kind == "rank1":
        cos_beta = 2 * (q[..., 0] ** 2 + q[..., 3] ** 2) - 1
        return np.stack([(2 * k + 1) * legendre(int(k), cos_beta) for k in ks], axis=-1)
    raise DomainError(f"unknown weight kind {kind!r}")


# ---------------------------------------------------------------------------
# finite frames

def frame_size(j) -> int:
    """``N_j = sum_k (2k+1)^2 = (2j+1)(4j+1)(4j+3)/3``."""
    tj = twice(j)
    return (tj + 1) * (2 * tj + 1) * (2 * tj + 3) // 3


def _block_vectors(tj: int, quats: np.ndarray) -> np.ndarray:
    """Concatenated entries of the blocks D^0..D^{2j}, one column per element."""
    cols = [rotation_matrices(k, quats).reshape(len(quats), -1) for k in range(tj + 1)]
    return np.concatenate(cols, axis=1).T


def _frame_targets(tj: int, target: str) -> np.ndarray:
    out = np.zeros((frame_size(tj / 2), tj + 1), dtype=complex)
    start = 0
    for k in range(tj + 1):
        n = 2 * k + 1
        blk = np.zeros((n, n))
        if target == "irrep":
            blk = np.eye(n)
        else:
            blk[k, k] = 1.0
        out[start:start + n * n, k] = blk.reshape(-1)
        start += n * n
    return out


@dataclass(frozen=True)
class FiniteFrame:
    """Frame elements with coefficient vectors ``coefficients[k]`` synthesizing the target for irrep k."""

    twice_j: int
    quaternions: np.ndarray
    coefficients: np.ndarray
    target: str
    condition_number: float
    attempts: int = 1

    @property
    def size(self) -> int:
        return len(self.quaternions)

    @property
    def elements(self) -> list:
        return [GroupElement(tuple(q)) for q in self.quaternions]

    def describe(self) -> dict:
        return {"size": self.size, "target": self.target,
                "condition_number": self.condition_number, "attempts": self.attempts,
                "l1_norms": [float(np.abs(c).sum()) for c in self.coefficients]}


def build_finite_frame(j, rng: np.random.Generator, target: str = "irrep",
                       cond_limit: float = FRAME_COND_LIMIT, redraws: int = FRAME_REDRAWS) -> FiniteFrame:
    """Draw ``N_j`` Haar elements and solve ``sum_i c_i G_i = target`` for every k."""
    FrameSpec(target)
    tj = twice(j)
    n = frame_size(j)
    rhs = _frame_targets(tj, target)
    best = math.inf
    for attempt in range(1, redraws + 2):
        quats = haar_quaternions(rng, n)
        a = _block_vectors(tj, quats)
        cond = float(np.linalg.cond(a))
        best = min(best, cond)
        if cond > cond_limit:
            continue
        # the block entries obey a real structure, so the unique solution is real
        c = np.linalg.solve(a, rhs).real.T
        return FiniteFrame(tj, quats, c, target, cond, attempt)
    raise FrameConstructionError(f"frame condition number stayed above {cond_limit:g} (best {best:.3g})")


def allocate_shots(c, total_shots: int) -> np.ndarray:
    """Shots proportional to ``|c_i|``, rounded by largest remainder so they sum to ``total_shots``."""
    a = np.abs(np.asarray(c, dtype=float))
    if total_shots < 1:
        raise DomainError("need at least one shot")
    if a.sum() == 0:
        raise DomainError("coefficient vector is identically zero")
    ideal = total_shots * a / a.sum()
    base = np.floor(ideal).astype(int)
    left = total_shots - base.sum()
    order = np.argsort(-(ideal - base), kind="stable")
    base[order[:left]] += 1
    return base


# ---------------------------------------------------------------------------
# probability tables

@dataclass
class DecayDataset:
    """``values[a, b]`` is the estimate ``d_{k,m}`` for ``k = ks[a]``, ``m = ms[b]``."""

    twice_j: int
    protocol: str
    ks: tuple
    ms: tuple
    values: np.ndarray
    stderr: np.ndarray
    variance: np.ndarray
    n_circuits: np.ndarray
    covariance: np.ndarray | None = None  # (len(ms), len(ks), len(ks)) per-circuit covariance

    def records(self) -> list:
        out = []
        for a, k in enumerate(self.ks):
            for b, m in enumerate(self.ms):
                out.append({"k": int(k), "m": int(m), "d_km": float(self.values[a, b]),
                            "stderr": float(self.stderr[a, b]), "n_circuits": int(self.n_circuits[b])})
        return out


@dataclass
class ProbabilityTable:
    """Running sums per sequence length.

    ``outcomes[m][p, l']`` sums the outcome distributions for preparation
    ``levels[p]``; ``weighted[m][k, p, l']`` sums the same weighted by the
    synthetic-gate weight of irrep k.  ``x_mean``/``x_m2`` hold the running
    mean of the per-circuit estimator ``X_k`` and the matrix of summed
    cross-deviations over k (its diagonal gives the variances).
    """

    twice_j: int
    protocol: str
    ks: tuple
    levels: tuple
    counts: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)
    x_mean: dict = field(default_factory=dict)
    x_m2: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def sequence_lengths(self) -> tuple:
        return tuple(sorted(self.counts))

    def matrix(self, m: int) -> np.ndarray:
        """``P_m[p, l'] = Pr(l' | prepared levels[p])``."""
        return self.outcomes[m] / self.counts[m]

    def weighted_matrix(self, m: int, k: int) -> np.ndarray:
        if m not in self.weighted:
            raise DomainError(f"protocol {self.protocol} has no weighted outcomes")
        return self.weighted[m][k] / self.counts[m]

    def merge(self, m: int, part: dict) -> None:
        """Fold in one block of circuits (pairwise mean/variance update)."""
        nb = part["count"]
        if m not in self.counts:
            self.counts[m] = nb
            self.outcomes[m] = part["outcomes"].copy()
            self.x_mean[m] = part["x_mean"].copy()
            self.x_m2[m] = part["x_m2"].copy()
            if part.get("weighted") is not None:
                self.weighted[m] = part["weighted"].copy()
            return
        na = self.counts[m]
        n = na + nb
        delta = part["x_mean"] - self.x_mean[m]
        self.x_mean[m] = self.x_mean[m] + delta * (nb / n)
        self.x_m2[m] = self.x_m2[m] + part["x_m2"] + np.outer(delta, delta) * (na * nb / n)
        self.counts[m] = n
        self.outcomes[m] += part["outcomes"]
        if part.get("weighted") is not None:
            self.weighted[m] += part["weighted"]

    def estimator_mean(self, m: int) -> np.ndarray:
        return self.x_mean[m].copy()

    def estimator_variance(self, m: int) -> np.ndarray:
        """Unbiased sample variance of ``X_k`` over circuits."""
        n = self.counts[m]
        if n < 2:
            return np.full(len(self.ks), np.nan)
        return np.diag(self.x_m2[m]) / (n - 1)

    def estimator_covariance(self, m: int) -> np.ndarray:
        """Sample covariance of ``X_k`` and ``X_k'`` over circuits (they share circuits)."""
        n = self.counts[m]
        if n < 2:
            return np.full((len(self.ks),) * 2, np.nan)
        return self.x_m2[m] / (n - 1)

    def decays(self) -> DecayDataset:
        ms = self.sequence_lengths
        vals = np.array([self.x_mean[m] for m in ms]).T
        var = np.array([self.estimator_variance(m) for m in ms]).T
        n = np.array([self.counts[m] for m in ms])
        cov = np.array([self.estimator_covariance(m) for m in ms])
        return DecayDataset(self.twice_j, self.protocol, self.ks, ms, vals, np.sqrt(var / n), var, n, cov)


# ---------------------------------------------------------------------------
# engine

@dataclass
class _Campaign:
    plan: ExperimentPlan
    tj: int
    m_mat: np.ndarray
    levels: tuple
    preps: np.ndarray
    povm: np.ndarray
    action: NoiseAction
    frame: FiniteFrame | None
    spam: SpamModel


def _stream(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _prepare(plan: ExperimentPlan) -> _Campaign:
    tj = plan.j.twice_value
    spam = plan.spam
    needs_draw = ((spam.phi != 0 and spam.prep_axes is None)
                  or (spam.meas_kind == "permutation" and spam.permutation is None)
                  or (spam.meas_kind == "coherent_rotation" and spam.meas_axis is None))
    if needs_draw:
        spam = draw_spam_model(plan.j, spam.phi, spam.meas_kind, _stream(plan.seed, 0))
    preps_all = noisy_preparations(plan.j, spam)
    if plan.protocol in SYNTHETIC_SPAM:
        levels = tuple(range(tj + 1))
    else:
        levels = (plan.level_index,)
    frame = None
    if plan.protocol in FRAME:
        frame = build_finite_frame(plan.j, _stream(plan.seed, 2), plan.frame_spec.target)
    return _Campaign(plan, tj, np.asarray(_m_matrix(tj)), levels, preps_all[list(levels)],
                     noisy_povm(plan.j, spam), NoiseAction(tj, plan.noise), frame, spam)


def _simulate_block(c: _Campaign, m: int, block: int, n: int) -> dict:
    plan = c.plan
    rng = _stream(plan.seed, 1, m, block)
    d = c.tj + 1
    npre = len(c.levels)
    indep = plan.circuits == "independent" and npre > 1
    nseq = n * npre if indep else n

    gates = haar_quaternions(rng, (nseq, m))
    weights = None
    first = gates[:, 0]
    if plan.protocol in WEIGHTED:
        if c.frame is not None:
            idx = rng.integers(0, c.frame.size, nseq)
            extra = c.frame.quaternions[idx]
            weights = c.frame.size * c.frame.coefficients[:, idx].T
        else:
            extra = haar_quaternions(rng, nseq)
            kind = "character" if plan.protocol in CHARACTER else "rank1"
            weights = synthesis_weights(c.tj, extra, kind)
        first = quat_multiply(first, extra)
    prod = gates[:, 0]
    for t in range(1, m):
        prod = quat_multiply(gates[:, t], prod)
    inv = prod * np.array([1.0, -1.0, -1.0, -1.0])
    seq = np.concatenate([first[:, None], gates[:, 1:], inv[:, None]], axis=1)
    dmats = rotation_matrices(HalfInt(c.tj), seq)  # (nseq, m+1, d, d)

    act = c.action
    if act.unitary is not None:
        u = np.broadcast_to(np.eye(d, dtype=complex), (nseq, d, d))
        for t in range(m + 1):
            u = dmats[:, t] @ u
            if not act.identity:
                u = act.unitary @ u
        if indep:
            u = u.reshape(n, npre, d, d)
        else:
            u = u[:, None]
        rho = u @ c.preps[None] @ np.conj(np.swapaxes(u, -1, -2))
    else:
        rho = np.broadcast_to(c.preps[None], (n, npre, d, d)).copy()
        if indep:
            dmats = dmats.reshape(n, npre, m + 1, d, d)
        else:
            dmats = dmats[:, None]
        for t in range(m + 1):
            g = dmats[:, :, t]
            rho = act(g @ rho @ np.conj(np.swapaxes(g, -1, -2)))
    probs = np.einsum("lab,ipba->ipl", c.povm, rho).real
    _check_health(probs)
    if plan.shots is not None:
        probs = _sample_counts(rng, probs, plan.shots) / plan.shots

    nk = c.tj + 1
    if weights is None:
        wt = np.ones((n, npre, nk))
    elif indep:
        wt = weights.reshape(n, npre, nk)
    else:
        wt = np.broadcast_to(weights[:, None, :], (n, npre, nk))

    mm = c.m_mat
    if plan.protocol in SYNTHETIC_SPAM:
        x = np.einsum("kp,ipk,ipl,kl->ik", mm[:, list(c.levels)], wt, probs, mm)
    else:
        lev = c.levels[0]
        survival = probs[:, 0, lev]
        if plan.protocol == "rb":
            x = survival[:, None]
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                x = wt[:, 0, :] * survival[:, None] / mm[:, lev] ** 2
    return {
        "count": n,
        "outcomes": probs.sum(axis=0),
        "weighted": None if weights is None else np.einsum("ipk,ipl->kpl", wt, probs),
        "x_mean": x.mean(axis=0),
        "x_m2": (x - x.mean(axis=0)).T @ (x - x.mean(axis=0)),
    }


def estimate(plan: ExperimentPlan, threads: int | None = None) -> ProbabilityTable:
    """Run the campaign and return the accumulated probability table.

    Work is split into fixed blocks of circuits with their own random streams,
    so the result does not depend on ``threads``.
    """
    c = _prepare(plan)
    tj = c.tj
    ks = (SURVIVAL_LABEL,) if plan.protocol == "rb" else tuple(range(tj + 1))
    table = ProbabilityTable(tj, plan.protocol, ks, c.levels)
    tasks = []
    for m in plan.sequence_lengths:
        for b in range(0, plan.num_circuits, BLOCK_SIZE):
            tasks.append((m, b // BLOCK_SIZE, min(BLOCK_SIZE, plan.num_circuits - b)))
    workers = threads or os.cpu_count() or 1
    if workers <= 1:
        parts = [_simulate_block(c, *t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda t: _simulate_block(c, *t), tasks))
    for (m, _, _), part in zip(tasks, parts):
        table.merge(m, part)
    table.metadata = {
        "circuits": plan.circuits if len(c.levels) > 1 else "single-preparation",
        "k_estimators_share_circuits": plan.protocol in WEIGHTED,
        "block_size": BLOCK_SIZE,
        "levels": [(tj - 2 * lv) / 2 for lv in c.levels],
        "spam": c.spam.describe(),
        "frame": None if c.frame is None else c.frame.describe(),
    }
    return table
