"""Single-ancilla Monte-Carlo estimation of Tr[O f(H) rho f(H)^dag].

One control qubit, two independently sampled unitaries per shot: the
interference value Re<psi0|V2^dag O V1|psi0> is an unbiased estimate of the
target divided by the coefficient l1 norm squared.  A second phase with O=I
estimates the normalization, and the ratio is returned with Hoeffding-driven
repetition counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core_algebra import (
    DenseOperator,
    ObservableLcu,
    StateVector,
    spectral_norm,
)
from .lcu_decomp import (
    Identity,
    LcuDecomposition,
    PauliProductRotation,
    SegmentLcu,
    TimeEvolution,
    WalkPower,
    apply_pauli_rotation,
    realize,
)

RECORD_CAP = 100_000          # keep per-sample records only below this T
ENUMERATED_STATE_CAP = 50_000_000   # max M * dim complex entries for the fast path

# stream role ids for the counter hash
_ROLE_V1 = 1
_ROLE_V2 = 2
_ROLE_SHOT = 3
_ROLE_OBS = 4


class NormUnderflowError(RuntimeError):
    """The estimated normalization fell at or below the resolvable floor;
    either the a-priori lower bound was invalid or T was too small."""

    def __init__(self, ell_tilde: float, floor: float):
        super().__init__(
            f"norm underflow: estimated normalization {ell_tilde!r} is at or "
            f"below the resolvable floor {floor!r}")
        self.ell_tilde = ell_tilde
        self.floor = floor


@dataclass(frozen=True)
class EstimatorConfig:
    epsilon: float
    delta: float
    mode: str = "expectation"
    repetitions_override: int | None = None
    master_seed: int = 0
    ell_star: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValueError("epsilon and delta must lie in (0,1)")
        if self.mode not in ("shot", "expectation"):
            raise ValueError("mode must be 'shot' or 'expectation'")
        if self.ell_star <= 0:
            raise ValueError("ell_star must be positive")


@dataclass(frozen=True)
class SampleRecord:
    index: int
    term_ids: tuple
    value: float
    cost: float


@dataclass(frozen=True)
class EstimateReport:
    mu: float
    ell_tilde: float
    ratio: float
    t_used: int
    tau_max: float
    avg_cost: float
    empirical_std: float
    seed: int
    info: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return {
            "mu": self.mu, "ell_tilde": self.ell_tilde, "ratio": self.ratio,
            "T_used": self.t_used, "tau_max": self.tau_max,
            "avg_cost": self.avg_cost, "empirical_std": self.empirical_std,
            "seed": self.seed,
        }


class CostModel:
    """Per-descriptor runtime weights: time evolutions cost their duration,
    a k-fold Pauli product with one rotation costs k+1, walk powers cost
    their exponent."""

    def cost(self, d) -> float:
        if isinstance(d, TimeEvolution):
            return abs(d.duration)
        if isinstance(d, PauliProductRotation):
            return len(d.paulis) + 1
        if isinstance(d, WalkPower):
            return float(d.exponent)
        if isinstance(d, Identity):
            return 0.0
        if isinstance(d, _ProductDescriptor):
            return float(sum(self.cost(x) for x in d.factors))
        if isinstance(d, (list, tuple)):
            return float(sum(self.cost(x) for x in d))
        raise TypeError(f"no cost rule for {d!r}")


def required_repetitions(norm_o: float, c1: float, epsilon: float, delta: float) -> int:
    """ceil(8 |O|^2 ln(2/delta) |c|_1^4 / eps^2) — the Hoeffding count."""
    if norm_o <= 0 or c1 <= 0 or epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("invalid repetition parameters")
    return math.ceil(8 * norm_o ** 2 * math.log(2 / delta) * c1 ** 4 / epsilon ** 2)


# ---------------------------------------------------------------------------
# sampleable wrappers

class PreparedLcu:
    """Enumerated decomposition bound to its realization context."""

    def __init__(self, decomp: LcuDecomposition, context):
        self.decomp = decomp
        self.context = context
        self.l1_norm = decomp.l1_norm
        self.probs = decomp.probabilities()
        cm = CostModel()
        self.costs = np.array([cm.cost(u) for _, u in decomp.terms])
        self.tau_max = float(self.costs.max()) if len(self.costs) else 0.0
        self.avg_cost = float(self.probs @ self.costs)
        self.unit_normalized = False
        self._batch_cache: dict[int, np.ndarray] = {}

    @property
    def n_terms(self) -> int:
        return self.decomp.n_terms

    def states(self, psi0: StateVector) -> np.ndarray:
        """Matrix with rows U_j |psi0> for every term."""
        key = id(psi0)
        if key in self._batch_cache:
            return self._batch_cache[key]
        if self.n_terms * psi0.dim > ENUMERATED_STATE_CAP:
            raise MemoryError("enumerated state batch too large")
        if all(isinstance(u, TimeEvolution) for _, u in self.decomp.terms):
            from .core_algebra import PauliHamiltonian, ham_to_dense
            from .lcu_decomp import time_evolution_state_batch
            h = self.context
            if isinstance(h, PauliHamiltonian):
                h = ham_to_dense(h)
            u = time_evolution_state_batch(self.decomp, h, psi0)
        else:
            u = np.stack([realize(d, self.context).entries @ psi0.amplitudes
                          for _, d in self.decomp.terms])
        self._batch_cache = {key: u}
        return u

    def apply(self, j: int, psi0: StateVector) -> np.ndarray:
        return self.states(psi0)[j]


class ProductSampler:
    """Implicit r-fold product of one Taylor segment; draws a descriptor
    list per sample instead of enumerating the product."""

    def __init__(self, segment: SegmentLcu, r: int | None = None):
        self.segment = segment
        self.r = segment.r if r is None else r
        self.l1_norm = segment.l1_norm ** self.r
        cm = CostModel()
        # analytic per-segment cost: sum_k w_k (k+1) / l1
        w = segment.k_weights / segment.l1_norm
        self.avg_cost = float(self.r * sum(wk * (k + 1)
                                           for wk, k in zip(w, segment.even_ks)))
        self.tau_max = float(self.r * (max(segment.even_ks) + 1))
        self.unit_normalized = True   # the target e^{-iHt} is unitary
        self._cm = cm

    def draw(self, rng) -> list:
        return [self.segment.sample(rng) for _ in range(self.r)]

    def apply(self, descriptors, psi0: StateVector) -> np.ndarray:
        amps = psi0.amplitudes
        for d in descriptors:
            amps = apply_pauli_rotation(d, self.segment.h, amps)
        return amps

    def cost(self, descriptors) -> float:
        return self._cm.cost(list(descriptors))

    def flatten(self, max_terms: int = 4096) -> LcuDecomposition | None:
        """Explicit product decomposition when small enough, else None."""
        if self.segment.n_enumerable > max_terms:
            return None
        seg_terms = list(self.segment.enumerate_terms())
        flat = [(1.0, ())]
        for _ in range(self.r):
            nxt = []
            for c0, ds in flat:
                for c, d in seg_terms:
                    nxt.append((c0 * c, ds + (d,)))
            if len(nxt) > max_terms:
                return None
            flat = nxt
        terms = [(c, _ProductDescriptor(ds)) for c, ds in flat]
        return LcuDecomposition(tuple(terms), target_error=0.0,
                                info={"flattened_product": self.r})


@dataclass(frozen=True)
class _ProductDescriptor:
    """Ordered composition of descriptors, applied right-to-left."""
    factors: tuple


def _apply_descriptor(d, context, amps: np.ndarray) -> np.ndarray:
    from .core_algebra import PauliHamiltonian
    if isinstance(d, _ProductDescriptor):
        for f in d.factors:
            amps = _apply_descriptor(f, context, amps)
        return amps
    if isinstance(d, PauliProductRotation) and isinstance(context, PauliHamiltonian):
        return apply_pauli_rotation(d, context, amps)
    return realize(d, context).entries @ amps


class PreparedProductLcu(PreparedLcu):
    """Enumerated flattening of a segment product (fast kernel path)."""

    def __init__(self, decomp: LcuDecomposition, segment: SegmentLcu):
        super().__init__(decomp, segment.h)
        cm = CostModel()
        self.costs = np.array([cm.cost(list(u.factors)) for _, u in decomp.terms])
        self.tau_max = float(self.costs.max())
        self.avg_cost = float(self.probs @ self.costs)
        self.unit_normalized = True
        self.segment = segment

    def states(self, psi0: StateVector) -> np.ndarray:
        key = id(psi0)
        if key in self._batch_cache:
            return self._batch_cache[key]
        u = np.stack([_apply_descriptor(d, self.segment.h, psi0.amplitudes)
                      for _, d in self.decomp.terms])
        self._batch_cache = {key: u}
        return u


class PerturbedLcu(PreparedLcu):
    """Enumerated decomposition whose realized unitaries are each replaced
    by a nearby unitary at operator-norm distance <= delta_u (models
    imperfect implementations)."""

    def __init__(self, decomp: LcuDecomposition, context, delta_u: float, rng):
        super().__init__(decomp, context)
        self._unitaries = [
            perturb_unitary(realize(d, context), delta_u, rng).entries
            for _, d in decomp.terms
        ]
        self.delta_u = delta_u

    def states(self, psi0: StateVector) -> np.ndarray:
        key = id(psi0)
        if key in self._batch_cache:
            return self._batch_cache[key]
        u = np.stack([m @ psi0.amplitudes for m in self._unitaries])
        self._batch_cache = {key: u}
        return u


def prepare(lcu, context=None):
    if isinstance(lcu, LcuDecomposition):
        return PreparedLcu(lcu, context)
    if isinstance(lcu, SegmentLcu):
        return ProductSampler(lcu)
    return lcu  # already prepared


# ---------------------------------------------------------------------------
# observable handling

def observable_norm(o) -> float:
    if isinstance(o, ObservableLcu):
        return o.h1_norm      # certified upper bound
    if isinstance(o, DenseOperator):
        return spectral_norm(o.entries)
    raise TypeError("observable must be a DenseOperator or ObservableLcu")


def _identity_like(dim: int) -> DenseOperator:
    return DenseOperator(np.eye(dim), hermitian=True, unitary=True)


# ---------------------------------------------------------------------------
# core sampling

def run_circuit_sample(lcu, psi0: StateVector, o, mode: str, stream,
                       index: int = 0, context=None) -> SampleRecord:
    """One pass of the single-ancilla circuit: draw V1, V2 from the
    coefficient distribution and return the interference value (expectation
    mode) or a +-1 outcome (shot mode).

    `stream` is (master_seed, experiment, phase) for the counter hash.
    """
    prepared = prepare(lcu, context)
    seed, exp_id, phase = stream
    key1 = _kernels.derive_key(seed, exp_id, phase, _ROLE_V1)
    key2 = _kernels.derive_key(seed, exp_id, phase, _ROLE_V2)

    obs = o
    obs_id = -1
    if isinstance(o, ObservableLcu):
        key_o = _kernels.derive_key(seed, exp_id, phase, _ROLE_OBS)
        hw = np.array([abs(w) for w, _ in o.terms])
        hp = hw / hw.sum()
        uo = _kernels.counter_uniforms(key_o, index, 1)[0]
        obs_id = int(np.searchsorted(np.cumsum(hp), uo, side="right"))
        obs_id = min(obs_id, len(o.terms) - 1)
        w, u = o.terms[obs_id]
        sign = 1.0 if w >= 0 else -1.0
        obs = DenseOperator(sign * u.entries, unitary=True)
        # the h1 scale is applied by the caller; per-sample values stay O_j sized

    if isinstance(prepared, ProductSampler):
        rng1 = _kernels.make_rng(seed, exp_id, phase, _ROLE_V1, index)
        rng2 = _kernels.make_rng(seed, exp_id, phase, _ROLE_V2, index)
        d1 = prepared.draw(rng1)
        d2 = prepared.draw(rng2)
        psi1 = prepared.apply(d1, psi0)
        psi2 = prepared.apply(d2, psi0)
        cost = prepared.cost(d1) + prepared.cost(d2)
        ids = (-1, -1)
    else:
        j1, j2 = _kernels.pair_draws(prepared.probs, key1, key2, index, 1)
        j1 = int(j1[0]); j2 = int(j2[0])
        states = prepared.states(psi0)
        psi1 = states[j1]
        psi2 = states[j2]
        cost = float(prepared.costs[j1] + prepared.costs[j2])
        ids = (j1, j2)

    value = float(np.real(np.vdot(psi2, obs.entries @ psi1)))
    if mode == "shot":
        norm_oj = spectral_norm(obs.entries)
        gram = obs.entries @ obs.entries
        if spectral_norm(gram - np.eye(obs.dim)) > 1e-9:
            raise ValueError("shot mode needs an involutory (+-1 valued) observable")
        e = value
        if abs(e) > 1 + 1e-9:
            raise ValueError(f"interference value {e} outside [-1,1]")
        key_s = _kernels.derive_key(seed, exp_id, phase, _ROLE_SHOT)
        us = _kernels.counter_uniforms(key_s, index, 1)[0]
        value = 1.0 if us < (1 + e) / 2 else -1.0
        value *= norm_oj
    if obs_id >= 0:
        ids = ids + (obs_id,)
    return SampleRecord(index=index, term_ids=ids, value=value, cost=cost)


def expectation_observable(lcu, psi0: StateVector, o, t_reps: int,
                           config: EstimatorConfig, context=None,
                           experiment: int = 0, phase: int = 0,
                           collect_records: bool = False):
    """mu = (|c|_1^2 * scale / T) * sum of per-sample values.

    scale is |h|_1 when the observable itself is sampled term-by-term.
    Returns (mu, records, stats) with stats = (mean, sample_std_of_values).
    """
    if t_reps < 1:
        raise ValueError("T must be >= 1")
    prepared = prepare(lcu, context)
    seed = config.master_seed
    scale = o.h1_norm if isinstance(o, ObservableLcu) else 1.0

    fast = (isinstance(prepared, PreparedLcu)
            and isinstance(o, DenseOperator)
            and config.mode == "expectation"
            and not collect_records
            and prepared.n_terms * psi0.dim <= ENUMERATED_STATE_CAP)
    if fast:
        key1 = _kernels.derive_key(seed, experiment, phase, _ROLE_V1)
        key2 = _kernels.derive_key(seed, experiment, phase, _ROLE_V2)
        u = prepared.states(psi0)
        ou = u @ o.entries.T
        s, s2 = _kernels.pair_accumulate(u, ou, prepared.probs, key1, key2, t_reps)
        mean = s / t_reps
        var = max(s2 / t_reps - mean * mean, 0.0)
        mu = prepared.l1_norm ** 2 * scale * mean
        return mu, None, (mean, math.sqrt(var))

    # general path: per-sample loop (product samplers, observable sampling,
    # shot mode, traced runs)
    records = [] if collect_records else None
    s = 0.0
    cs = 0.0
    s2 = 0.0
    for i in range(t_reps):
        rec = run_circuit_sample(prepared, psi0, o, config.mode,
                                 (seed, experiment, phase), index=i,
                                 context=context)
        if records is not None:
            records.append(rec)
        y = rec.value - cs
        tt = s + y
        cs = (tt - s) - y
        s = tt
        s2 += rec.value * rec.value
    mean = s / t_reps
    var = max(s2 / t_reps - mean * mean, 0.0)
    mu = prepared.l1_norm ** 2 * scale * mean
    return mu, records, (mean, math.sqrt(var))


def single_ancilla_lcu(lcu, psi0: StateVector, o, config: EstimatorConfig,
                       context=None, experiment: int = 0,
                       collect_records: bool = False) -> EstimateReport:
    """Two-phase estimate of Tr[O rho] with rho the normalized f(H)-evolved
    state: phase one measures the numerator, phase two (O = I) the
    normalization; returns their ratio with the Hoeffding repetition counts
    rescaled for the ratio's error budget."""
    prepared = prepare(lcu, context)
    norm_o = observable_norm(o)
    c1 = prepared.l1_norm
    eps, delta, ell_star = config.epsilon, config.delta, config.ell_star

    if config.repetitions_override is not None:
        t_num = t_den = int(config.repetitions_override)
    else:
        t_num = required_repetitions(norm_o, c1, eps * ell_star / 3, delta)
        t_den = required_repetitions(1.0, c1, eps * ell_star / (3 * norm_o), delta)

    mu, num_records, (mean1, std1) = expectation_observable(
        prepared, psi0, o, t_num, config, context=context,
        experiment=experiment, phase=0, collect_records=collect_records)

    if getattr(prepared, "unit_normalized", False):
        ell_tilde = 1.0
        t_used = t_num
        std = std1
    else:
        ident = _identity_like(psi0.dim)
        ident_cfg = config if config.mode == "expectation" else EstimatorConfig(
            epsilon=config.epsilon, delta=config.delta, mode="expectation",
            repetitions_override=config.repetitions_override,
            master_seed=config.master_seed, ell_star=config.ell_star)
        ell_tilde, _, _ = expectation_observable(
            prepared, psi0, ident, t_den, ident_cfg, context=context,
            experiment=experiment, phase=1, collect_records=False)
        t_used = t_num + t_den
        std = std1
        floor = eps * ell_star / (3 * norm_o)
        if ell_tilde <= floor:
            raise NormUnderflowError(ell_tilde, floor)

    ratio = mu / ell_tilde
    scale = o.h1_norm if isinstance(o, ObservableLcu) else 1.0
    info = {"records": num_records} if num_records is not None else {}
    return EstimateReport(
        mu=mu, ell_tilde=ell_tilde, ratio=ratio, t_used=t_used,
        tau_max=prepared.tau_max, avg_cost=prepared.avg_cost,
        empirical_std=c1 ** 2 * scale * std / math.sqrt(t_num),
        seed=config.master_seed, info=info)


def cost_summary(report: EstimateReport, cost_psi0: float = 0.0) -> dict:
    """Total sampling cost: T runs, each touching two sampled unitaries plus
    one input-state preparation."""
    return {
        "tau_max": report.tau_max,
        "avg_cost": report.avg_cost,
        "T": report.t_used,
        "total": report.t_used * (2 * report.avg_cost + cost_psi0),
    }


def perturb_unitary(u: DenseOperator, delta_u: float, rng) -> DenseOperator:
    """Multiply by e^{i eps G} with G a random unit-spectral-norm Hermitian,
    eps tuned by bisection so the perturbed unitary sits just inside the
    requested operator-norm ball."""
    if not u.unitary:
        raise ValueError("input must be unitary")
    if not 0 < delta_u < 0.5:
        raise ValueError("delta_u must lie in (0, 0.5)")
    dim = u.dim
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    g = (g + g.conj().T) / 2
    g = g / spectral_norm(g)
    evals, evecs = np.linalg.eigh(g)

    def perturbed(eps: float) -> np.ndarray:
        rot = (evecs * np.exp(1j * eps * evals)) @ evecs.conj().T
        return rot @ u.entries

    # |e^{i eps G} - I| = max |e^{i eps l} - 1| <= 2 sin(eps/2): bracket
    hi = 2 * math.asin(min(delta_u, 1.999) / 2) * 1.5
    lo = 0.0
    for _ in range(80):
        mid = (lo + hi) / 2
        dist = spectral_norm(perturbed(mid) - u.entries)
        if dist > delta_u:
            hi = mid
        elif dist >= 0.9 * delta_u:
            lo = mid
            break
        else:
            lo = mid
    return DenseOperator(perturbed(lo), unitary=True)
